//! Second-order forward-mode differentiation.
//!
//! A [`Jet2`] carries the value, gradient and Hessian of a scalar with
//! respect to a fixed ordered set of `d` active variables. The Hessian is
//! stored as a packed upper triangle, so it is symmetric by construction.
//! [`Jet1`] drops the Hessian and is what you get after differentiating a
//! `Jet2` once (see [`Jet2::partial`]).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Failure while evaluating a scalar field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in {op} at argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("jet dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("seed index {index} out of range for {dim} variables")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("invalid evaluation context: {0}")]
    Context(String),
    #[error("singular system in {0}")]
    Singular(&'static str),
}

#[inline]
fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

#[inline]
fn packed_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * d - i * (i + 1) / 2 + j
}

/// Value, gradient and (packed, symmetric) Hessian of a scalar.
#[derive(Clone, PartialEq)]
pub struct Jet2 {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl fmt::Debug for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet2")
            .field("value", &self.value)
            .field("grad", &self.grad)
            .field("hess", &self.hessian_matrix())
            .finish()
    }
}

impl Jet2 {
    pub fn constant(value: f64, d: usize) -> Self {
        Self {
            value,
            grad: vec![0.0; d],
            hess: vec![0.0; packed_len(d)],
        }
    }

    pub fn zero(d: usize) -> Self {
        Self::constant(0.0, d)
    }

    /// Coordinate function `z_index` at `value`.
    pub fn variable(value: f64, index: usize, d: usize) -> Result<Self, EvalError> {
        if index >= d {
            return Err(EvalError::IndexOutOfRange { index, dim: d });
        }
        let mut jet = Self::constant(value, d);
        jet.grad[index] = 1.0;
        Ok(jet)
    }

    /// Builds a jet from explicit parts. `hess` is read as a full `d×d`
    /// row-major matrix and symmetrized.
    pub fn from_parts(value: f64, grad: Vec<f64>, hess: &[f64]) -> Result<Self, EvalError> {
        let d = grad.len();
        if hess.len() != d * d {
            return Err(EvalError::DimensionMismatch {
                left: d * d,
                right: hess.len(),
            });
        }
        let mut packed = vec![0.0; packed_len(d)];
        for i in 0..d {
            for j in i..d {
                packed[packed_index(d, i, j)] = 0.5 * (hess[i * d + j] + hess[j * d + i]);
            }
        }
        Ok(Self {
            value,
            grad,
            hess: packed,
        })
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn d(&self, i: usize) -> f64 {
        self.grad[i]
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[packed_index(self.dim(), i, j)]
    }

    pub fn hessian_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.hess(i, j)).collect())
            .collect()
    }

    /// True when every derivative is exactly zero.
    pub fn is_constant(&self) -> bool {
        self.grad.iter().all(|&g| g == 0.0) && self.hess.iter().all(|&h| h == 0.0)
    }

    pub fn to_jet1(&self) -> Jet1 {
        Jet1 {
            value: self.value,
            grad: self.grad.clone(),
        }
    }

    /// The first partial `∂f/∂z_k` together with its gradient.
    pub fn partial(&self, k: usize) -> Jet1 {
        let d = self.dim();
        Jet1 {
            value: self.grad[k],
            grad: (0..d).map(|j| self.hess(k, j)).collect(),
        }
    }

    fn check_dim(&self, other: &Jet2) -> Result<(), EvalError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(EvalError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            })
        }
    }

    /// `f(self)` given `f`, `f'`, `f''` at `self.value`.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet2 {
        let d = self.dim();
        let grad = self.grad.iter().map(|g| f1 * g).collect();
        let mut hess = vec![0.0; self.hess.len()];
        for i in 0..d {
            for j in i..d {
                let k = packed_index(d, i, j);
                hess[k] = f1 * self.hess[k] + f2 * self.grad[i] * self.grad[j];
            }
        }
        Jet2 {
            value: f0,
            grad,
            hess,
        }
    }

    pub fn scale(&self, s: f64) -> Jet2 {
        Jet2 {
            value: self.value * s,
            grad: self.grad.iter().map(|g| g * s).collect(),
            hess: self.hess.iter().map(|h| h * s).collect(),
        }
    }

    pub fn add_const(&self, c: f64) -> Jet2 {
        let mut out = self.clone();
        out.value += c;
        out
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Jet2) {
        assert_eq!(self.dim(), other.dim(), "jet dimension mismatch");
        self.value += s * other.value;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += s * b;
        }
        for (a, b) in self.hess.iter_mut().zip(&other.hess) {
            *a += s * b;
        }
    }

    pub fn try_add(&self, other: &Jet2) -> Result<Jet2, EvalError> {
        self.check_dim(other)?;
        Ok(Jet2 {
            value: self.value + other.value,
            grad: zip_with(&self.grad, &other.grad, |a, b| a + b),
            hess: zip_with(&self.hess, &other.hess, |a, b| a + b),
        })
    }

    pub fn try_sub(&self, other: &Jet2) -> Result<Jet2, EvalError> {
        self.check_dim(other)?;
        Ok(Jet2 {
            value: self.value - other.value,
            grad: zip_with(&self.grad, &other.grad, |a, b| a - b),
            hess: zip_with(&self.hess, &other.hess, |a, b| a - b),
        })
    }

    pub fn try_mul(&self, other: &Jet2) -> Result<Jet2, EvalError> {
        self.check_dim(other)?;
        let d = self.dim();
        let (a, b) = (self, other);
        let grad = (0..d)
            .map(|i| a.grad[i] * b.value + b.grad[i] * a.value)
            .collect();
        let mut hess = vec![0.0; a.hess.len()];
        for i in 0..d {
            for j in i..d {
                let k = packed_index(d, i, j);
                hess[k] = a.hess[k] * b.value
                    + b.hess[k] * a.value
                    + a.grad[i] * b.grad[j]
                    + b.grad[i] * a.grad[j];
            }
        }
        Ok(Jet2 {
            value: a.value * b.value,
            grad,
            hess,
        })
    }

    pub fn recip(&self) -> Result<Jet2, EvalError> {
        let x = self.value;
        if x == 0.0 || !x.is_finite() {
            return Err(EvalError::Domain { op: "div", arg: x });
        }
        let r = 1.0 / x;
        Ok(self.chain(r, -r * r, 2.0 * r * r * r))
    }

    pub fn try_div(&self, other: &Jet2) -> Result<Jet2, EvalError> {
        self.check_dim(other)?;
        self.try_mul(&other.recip()?)
    }

    /// `self^p` for a literal exponent.
    pub fn pow(&self, p: f64) -> Result<Jet2, EvalError> {
        let x = self.value;
        if p == 0.0 {
            return Ok(Jet2::constant(1.0, self.dim()));
        }
        if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
            let n = p as i32;
            if n < 0 && x == 0.0 {
                return Err(EvalError::Domain { op: "pow", arg: x });
            }
            let f0 = x.powi(n);
            let f1 = p * x.powi(n - 1);
            let f2 = p * (p - 1.0) * x.powi(n - 2);
            // x.powi(-1) at 0 is inf; multiplied by 0 that is NaN. Keep the
            // low powers exact at the origin.
            let (f1, f2) = match n {
                1 => (1.0, 0.0),
                2 => (2.0 * x, 2.0),
                _ => (f1, f2),
            };
            return Ok(self.chain(f0, f1, f2));
        }
        if x < 0.0 || (x == 0.0 && p < 2.0) {
            return Err(EvalError::Domain { op: "pow", arg: x });
        }
        let f0 = x.powf(p);
        let f1 = if x == 0.0 { 0.0 } else { p * x.powf(p - 1.0) };
        let f2 = if x == 0.0 {
            if p == 2.0 {
                2.0
            } else {
                0.0
            }
        } else {
            p * (p - 1.0) * x.powf(p - 2.0)
        };
        Ok(self.chain(f0, f1, f2))
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Result<Jet2, EvalError> {
        let x = self.value;
        if x <= 0.0 {
            return Err(EvalError::Domain { op: "log", arg: x });
        }
        Ok(self.chain(x.ln(), 1.0 / x, -1.0 / (x * x)))
    }

    pub fn sqrt(&self) -> Result<Jet2, EvalError> {
        let x = self.value;
        if x <= 0.0 {
            return Err(EvalError::Domain { op: "sqrt", arg: x });
        }
        let s = x.sqrt();
        Ok(self.chain(s, 0.5 / s, -0.25 / (s * x)))
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

impl Add for &Jet2 {
    type Output = Jet2;
    fn add(self, rhs: &Jet2) -> Jet2 {
        self.try_add(rhs).expect("jet dimension mismatch")
    }
}

impl Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: &Jet2) -> Jet2 {
        self.try_sub(rhs).expect("jet dimension mismatch")
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: &Jet2) -> Jet2 {
        self.try_mul(rhs).expect("jet dimension mismatch")
    }
}

impl Neg for &Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

/// Value and gradient of a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet1 {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Jet1 {
    pub fn constant(value: f64, d: usize) -> Self {
        Self {
            value,
            grad: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Jet1) {
        assert_eq!(self.dim(), other.dim(), "jet dimension mismatch");
        self.value += s * other.value;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += s * b;
        }
    }

    /// `self += a * b` (product rule).
    pub fn add_product(&mut self, a: &Jet1, b: &Jet1) {
        assert_eq!(a.dim(), b.dim(), "jet dimension mismatch");
        self.value += a.value * b.value;
        for ((g, ga), gb) in self.grad.iter_mut().zip(&a.grad).zip(&b.grad) {
            *g += ga * b.value + a.value * gb;
        }
    }

    pub fn scale(&self, s: f64) -> Jet1 {
        Jet1 {
            value: self.value * s,
            grad: self.grad.iter().map(|g| g * s).collect(),
        }
    }

    /// Re-expresses the gradient in new coordinates: `inner[k]` gives the
    /// old variable `k` as a function of the new ones.
    pub fn compose(&self, inner: &[Jet1]) -> Jet1 {
        assert_eq!(self.dim(), inner.len(), "composition arity mismatch");
        let d = inner.first().map_or(0, Jet1::dim);
        let mut grad = vec![0.0; d];
        for (gk, z) in self.grad.iter().zip(inner) {
            for (g, dz) in grad.iter_mut().zip(&z.grad) {
                *g += gk * dz;
            }
        }
        Jet1 {
            value: self.value,
            grad,
        }
    }
}

impl Add for &Jet1 {
    type Output = Jet1;
    fn add(self, rhs: &Jet1) -> Jet1 {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &Jet1 {
    type Output = Jet1;
    fn sub(self, rhs: &Jet1) -> Jet1 {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul for &Jet1 {
    type Output = Jet1;
    fn mul(self, rhs: &Jet1) -> Jet1 {
        let mut out = Jet1::constant(0.0, self.dim());
        out.add_product(self, rhs);
        out
    }
}

/// Named variables and the point at which they are seeded.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    names: Vec<String>,
    point: Vec<f64>,
}

impl EvalContext {
    pub fn new<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        point: Vec<f64>,
    ) -> Result<Self, EvalError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != point.len() {
            return Err(EvalError::Context(format!(
                "{} names for a point of length {}",
                names.len(),
                point.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(EvalError::Context(format!("duplicate variable `{n}`")));
            }
        }
        Ok(Self { names, point })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn with_point(&self, point: Vec<f64>) -> Result<Self, EvalError> {
        Self::new(self.names.clone(), point)
    }

    /// All variables as seeded jets, in context order.
    pub fn seeds(&self) -> Vec<Jet2> {
        let d = self.dim();
        (0..d)
            .map(|i| seed(self, i).expect("index in range"))
            .collect()
    }
}

/// The coordinate function `index` at the context point.
pub fn seed(ctx: &EvalContext, index: usize) -> Result<Jet2, EvalError> {
    let d = ctx.dim();
    if index >= d {
        return Err(EvalError::IndexOutOfRange { index, dim: d });
    }
    Jet2::variable(ctx.point[index], index, d)
}

/// Anything that evaluates to a [`Jet2`] at a context point.
pub trait ScalarField {
    fn eval_at(&self, ctx: &EvalContext) -> Result<Jet2, EvalError>;
}

impl<F> ScalarField for F
where
    F: Fn(&[Jet2]) -> Result<Jet2, EvalError>,
{
    fn eval_at(&self, ctx: &EvalContext) -> Result<Jet2, EvalError> {
        self(&ctx.seeds())
    }
}

/// Largest absolute deviation between the jet gradient/Hessian and central
/// finite differences with step `h`.
///
/// The gradient is compared against central differences of values and the
/// Hessian against central differences of the gradient, which keeps the
/// roundoff of the oracle at `O(eps/h)` instead of `O(eps/h²)`.
pub fn fd_check(field: &dyn ScalarField, ctx: &EvalContext, h: f64) -> Result<f64, EvalError> {
    if !(h > 0.0) {
        return Err(EvalError::Context(format!("step must be positive, got {h}")));
    }
    let d = ctx.dim();
    let jet = field.eval_at(ctx)?;
    let at = |i: usize, s: f64| -> Result<Jet2, EvalError> {
        let mut p = ctx.point().to_vec();
        p[i] += s;
        field.eval_at(&ctx.with_point(p)?)
    };
    let mut dev: f64 = 0.0;
    for i in 0..d {
        let (fp, fm) = (at(i, h)?, at(i, -h)?);
        dev = dev.max(((fp.value() - fm.value()) / (2.0 * h) - jet.d(i)).abs());
        for j in 0..d {
            let dij = (fp.d(j) - fm.d(j)) / (2.0 * h);
            dev = dev.max((dij - jet.hess(i, j)).abs());
        }
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(point: &[f64]) -> EvalContext {
        let names: Vec<String> = (0..point.len()).map(|i| format!("z{i}")).collect();
        EvalContext::new(names, point.to_vec()).unwrap()
    }

    #[test]
    fn seed_examples() {
        let c = ctx(&[3.0, 5.0]);
        let x = seed(&c, 0).unwrap();
        assert_eq!(x.value(), 3.0);
        assert_eq!(x.grad(), &[1.0, 0.0]);
        assert!(x.hessian_matrix().iter().flatten().all(|&h| h == 0.0));
        let y = seed(&c, 1).unwrap();
        assert_eq!(y.value(), 5.0);
        assert_eq!(y.grad(), &[0.0, 1.0]);
        let z = seed(&ctx(&[0.0]), 0).unwrap();
        assert_eq!((z.value(), z.grad()), (0.0, &[1.0][..]));
        assert!(matches!(
            seed(&c, 2),
            Err(EvalError::IndexOutOfRange { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn arithmetic_examples() {
        let c = ctx(&[2.0]);
        let x = seed(&c, 0).unwrap();
        let sq = x.try_mul(&x).unwrap();
        assert_eq!(sq.value(), 4.0);
        assert_eq!(sq.grad(), &[4.0]);
        assert_eq!(sq.hess(0, 0), 2.0);

        let s = seed(&ctx(&[0.0]), 0).unwrap().sin();
        assert_eq!((s.value(), s.d(0), s.hess(0, 0)), (0.0, 1.0, 0.0));

        let c = ctx(&[2.0, 3.0]);
        let p = seed(&c, 0).unwrap().try_mul(&seed(&c, 1).unwrap()).unwrap();
        assert_eq!(p.value(), 6.0);
        assert_eq!(p.grad(), &[3.0, 2.0]);
        assert_eq!(p.hessian_matrix(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn domain_errors() {
        let z = Jet2::constant(0.0, 1);
        let one = Jet2::constant(1.0, 1);
        assert!(matches!(one.try_div(&z), Err(EvalError::Domain { op: "div", .. })));
        assert!(matches!(z.ln(), Err(EvalError::Domain { op: "log", .. })));
        assert!(matches!(
            Jet2::constant(-1.0, 1).sqrt(),
            Err(EvalError::Domain { op: "sqrt", .. })
        ));
        assert!(matches!(
            Jet2::constant(-2.0, 1).pow(0.5),
            Err(EvalError::Domain { op: "pow", .. })
        ));
        assert!(Jet2::constant(-2.0, 1).pow(3.0).is_ok());
    }

    #[test]
    fn mixing_dimensions_is_an_error() {
        let a = Jet2::constant(1.0, 1);
        let b = Jet2::constant(1.0, 2);
        assert!(matches!(
            a.try_mul(&b),
            Err(EvalError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn pow_at_origin_is_finite() {
        let x = seed(&ctx(&[0.0]), 0).unwrap();
        let sq = x.pow(2.0).unwrap();
        assert_eq!((sq.value(), sq.d(0), sq.hess(0, 0)), (0.0, 0.0, 2.0));
        let cube = x.pow(3.0).unwrap();
        assert_eq!((cube.value(), cube.d(0), cube.hess(0, 0)), (0.0, 0.0, 0.0));
        let id = x.pow(1.0).unwrap();
        assert_eq!((id.value(), id.d(0), id.hess(0, 0)), (0.0, 1.0, 0.0));
    }

    #[test]
    fn fd_check_examples() {
        let x2y = |v: &[Jet2]| -> Result<Jet2, EvalError> { Ok(&(&v[0] * &v[0]) * &v[1]) };
        assert!(fd_check(&x2y, &ctx(&[1.0, 2.0]), 1e-5).unwrap() < 1e-6);
        let ex = |v: &[Jet2]| -> Result<Jet2, EvalError> { Ok(v[0].exp()) };
        assert!(fd_check(&ex, &ctx(&[0.0]), 1e-5).unwrap() < 1e-6);
        let k = |v: &[Jet2]| -> Result<Jet2, EvalError> { Ok(Jet2::constant(7.0, v.len())) };
        assert!(fd_check(&k, &ctx(&[0.3, -0.2]), 1e-5).unwrap() < 1e-9);
        assert!(fd_check(&k, &ctx(&[0.3]), 0.0).is_err());
    }

    #[test]
    fn partial_and_compose() {
        // f = x^2 y at (1, 2): df/dx = 2xy = 4, grad(df/dx) = (2y, 2x) = (4, 2)
        let c = ctx(&[1.0, 2.0]);
        let (x, y) = (seed(&c, 0).unwrap(), seed(&c, 1).unwrap());
        let f = &(&x * &x) * &y;
        let fx = f.partial(0);
        assert_eq!(fx.value, 4.0);
        assert_eq!(fx.grad, vec![4.0, 2.0]);
        // g(u) with grad (1, 1) composed with u = (2s, 3s): dg/ds = 5
        let g = Jet1 { value: 0.0, grad: vec![1.0, 1.0] };
        let inner = [
            Jet1 { value: 0.0, grad: vec![2.0] },
            Jet1 { value: 0.0, grad: vec![3.0] },
        ];
        assert_eq!(g.compose(&inner).grad, vec![5.0]);
    }
}
