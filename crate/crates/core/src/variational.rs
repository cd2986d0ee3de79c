//! Lagrangians: Euler-Lagrange equations, the Legendre map and local
//! reconstruction of a Lagrangian from variational data.

use serde::{Deserialize, Serialize};

use crate::algebroid::{LieAlgebroid, PointE};
use crate::expr::{Env, Expr};
use crate::jets::{EvalError, Jet2};
use crate::linalg;
use crate::report::Report;
use crate::sode::{Frame, MultiplierMap, SodeSection, DEGENERACY_CONDITION};
use crate::{Error, Result};

/// A Lagrangian `L(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lagrangian {
    pub expr: Expr,
}

impl Lagrangian {
    pub fn new(expr: Expr) -> Self {
        Self { expr }
    }
}

/// `F_α = ∂L/∂y^α`.
pub fn legendre(e: &LieAlgebroid, l: &Lagrangian) -> MultiplierMap {
    MultiplierMap::new(e.fiber_names().iter().map(|y| l.expr.derivative(y)).collect())
}

/// `E_L = y^α ∂L/∂y^α − L`.
pub fn energy(e: &LieAlgebroid, l: &Lagrangian, point: &[f64]) -> Result<f64> {
    let p = PointE::split(e, point)?;
    let lj = l.expr.eval_in(&e.total_env(&p.x, &p.y))?;
    let m = e.m();
    Ok(p.y.iter().enumerate().map(|(a, y)| y * lj.d(m + a)).sum::<f64>() - lj.value())
}

/// Euler-Lagrange residuals of a Lagrangian given as a jet, along `Γ`.
fn el_from_jet(frame: &Frame, l: &Jet2) -> Vec<f64> {
    let (m, n) = (frame.m, frame.n);
    let s = &frame.s;
    (0..n)
        .map(|a| {
            let mut r = 0.0;
            for b in 0..n {
                r += l.hess(m + a, m + b) * frame.gamma[b].value();
                for i in 0..m {
                    r += l.hess(m + a, i) * s.rho(i, b).value() * frame.y[b].value();
                }
            }
            for i in 0..m {
                r -= s.rho(i, a).value() * l.d(i);
            }
            for g in 0..n {
                for b in 0..n {
                    r += s.c(g, a, b).value() * frame.y[b].value() * l.d(m + g);
                }
            }
            r
        })
        .collect()
}

/// `g_αβ Γ^β + ∂²L/∂y^α∂x^i ρ^i_β y^β − ρ^i_α ∂L/∂x^i + C^γ_αβ y^β ∂L/∂y^γ`.
pub fn el_residual(e: &LieAlgebroid, l: &Lagrangian, gamma: &SodeSection, point: &[f64]) -> Result<Vec<f64>> {
    let (frame, env) = Frame::new(e, gamma, point)?;
    Ok(el_from_jet(&frame, &l.expr.eval_in(&env)?))
}

/// The SODE of a regular Lagrangian, defined pointwise by
/// `g_αβ Γ^β = ρ^i_α ∂L/∂x^i − C^γ_αβ y^β ∂L/∂y^γ − ∂²L/∂y^α∂x^i ρ^i_β y^β`.
pub fn sode_from_lagrangian(e: &LieAlgebroid, l: &Lagrangian) -> SodeSection {
    let (m, n) = (e.m(), e.n());
    let xs = e.base_names();
    let ys = e.fiber_names();
    let ly: Vec<Expr> = ys.iter().map(|y| l.expr.derivative(y)).collect();
    let lx: Vec<Expr> = xs.iter().map(|x| l.expr.derivative(x)).collect();
    let yv: Vec<Expr> = ys.iter().map(|y| Expr::var(y.clone())).collect();
    let flow: Vec<Expr> = (0..m)
        .map(|i| (0..n).fold(Expr::num(0.0), |acc, b| acc + e.rho(i, b).clone() * yv[b].clone()))
        .collect();
    let mut matrix = Vec::with_capacity(n * n);
    let mut rhs = Vec::with_capacity(n);
    for a in 0..n {
        for b in 0..n {
            matrix.push(ly[a].derivative(&ys[b]));
        }
        let mut r = Expr::num(0.0);
        for i in 0..m {
            r = r + e.rho(i, a).clone() * lx[i].clone();
            r = r - ly[a].derivative(&xs[i]) * flow[i].clone();
        }
        for g in 0..n {
            for b in 0..n {
                let c = e.structure(g, a, b);
                if !c.is_zero() {
                    r = r - c.clone() * yv[b].clone() * ly[g].clone();
                }
            }
        }
        rhs.push(r);
    }
    SodeSection::from_linear_system(matrix, rhs)
}

/// Values of `Γ_L` at one point, with a degeneracy error when the fiber
/// Hessian of `L` is singular there.
pub fn sode_from_lagrangian_at(e: &LieAlgebroid, l: &Lagrangian, point: &[f64]) -> Result<Vec<f64>> {
    let p = PointE::split(e, point)?;
    let env = e.total_env(&p.x, &p.y);
    let lj = l.expr.eval_in(&env)?;
    let (m, n) = (e.m(), e.n());
    let g: Vec<f64> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| lj.hess(m + a, m + b))
        .collect();
    let condition = linalg::condition_number(n, &g);
    if !(condition <= DEGENERACY_CONDITION) {
        return Err(Error::Degenerate {
            what: "lagrangian",
            point: point.to_vec(),
            condition,
        });
    }
    Ok(sode_from_lagrangian(e, l)
        .eval(&env)?
        .iter()
        .map(Jet2::value)
        .collect())
}

/// Which part of the base is recovered, see [`reconstruct_lagrangian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMode {
    /// `m = n` with invertible anchor: the base part is integrated from `θ`.
    FullRankSquare,
    /// `ρ ≡ 0`: there is no base part.
    ZeroAnchor,
}

/// Largest deviation allowed in the internal verification.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-6;

/// A Lagrangian recovered from `(Γ, F)`, evaluated by quadrature.
#[derive(Debug, Clone)]
pub struct ReconstructedLagrangian {
    e: LieAlgebroid,
    gamma: SodeSection,
    f: MultiplierMap,
    f_dx: Vec<Vec<Expr>>,
    f_dy: Vec<Vec<Expr>>,
    mode: ReconstructionMode,
    basepoint: Vec<f64>,
    fiber_basepoint: Vec<f64>,
    /// Residuals of `∂L/∂y = F`, `ρ ∂L/∂x = θ` and the Euler-Lagrange
    /// equations at the check points.
    pub verification: Report,
}

impl ReconstructedLagrangian {
    pub fn mode(&self) -> ReconstructionMode {
        self.mode
    }

    /// `L` with its gradient and Hessian at `(x, y)`.
    pub fn jet(&self, point: &[f64]) -> Result<Jet2> {
        let p = PointE::split(&self.e, point)?;
        let fiber = self.fiber_part(&p)?;
        match self.mode {
            ReconstructionMode::ZeroAnchor => Ok(fiber),
            ReconstructionMode::FullRankSquare => Ok(&fiber + &self.base_part(&p)?),
        }
    }

    pub fn value(&self, point: &[f64]) -> Result<f64> {
        Ok(self.jet(point)?.value())
    }

    fn dim(&self) -> usize {
        self.e.m() + self.e.n()
    }

    fn seeded(&self, index: usize, value: f64) -> Jet2 {
        Jet2::variable(value, index, self.dim()).expect("index in range")
    }

    /// `∫₀¹ F_α(x, y₀ + s(y − y₀)) (y − y₀)^α ds`.
    fn fiber_part(&self, p: &PointE) -> Result<Jet2> {
        let (m, n, d) = (self.e.m(), self.e.n(), self.dim());
        let xs = self.e.base_names();
        let ys = self.e.fiber_names();
        let dy: Vec<Jet2> = (0..n)
            .map(|a| self.seeded(m + a, p.y[a]).add_const(-self.fiber_basepoint[a]))
            .collect();
        let integrand = |s: f64| -> Result<Jet2, EvalError> {
            let mut env = Env::new(d);
            for i in 0..m {
                env.bind(xs[i].clone(), self.seeded(i, p.x[i]));
            }
            for a in 0..n {
                env.bind(ys[a].clone(), dy[a].scale(s).add_const(self.fiber_basepoint[a]));
            }
            let mut acc = Jet2::zero(d);
            for (a, f) in self.f.components.iter().enumerate() {
                acc = &acc + &(&f.eval_in(&env)? * &dy[a]);
            }
            Ok(acc)
        };
        Ok(integrate(&integrand, d)?)
    }

    /// `θ_γ` as jets at an environment where `x` and `y` are bound.
    fn theta_jets(&self, env: &Env) -> Result<Vec<Jet2>, EvalError> {
        let (m, n, d) = (self.e.m(), self.e.n(), self.dim());
        let ys = self.e.fiber_names();
        let y: Vec<Jet2> = ys.iter().map(|name| env.get(name).cloned().expect("bound")).collect();
        let rho: Vec<Jet2> = (0..m * n)
            .map(|k| self.e.rho(k / n, k % n).eval_in(env))
            .collect::<Result<_, _>>()?;
        let gamma = self.gamma.eval(env)?;
        let f = self.f.eval(env)?;
        let mut out = Vec::with_capacity(n);
        for g in 0..n {
            let mut acc = Jet2::zero(d);
            for i in 0..m {
                let mut flow = Jet2::zero(d);
                for b in 0..n {
                    flow = &flow + &(&rho[i * n + b] * &y[b]);
                }
                acc = &acc + &(&self.f_dx[g][i].eval_in(env)? * &flow);
            }
            for b in 0..n {
                acc = &acc + &(&self.f_dy[g][b].eval_in(env)? * &gamma[b]);
            }
            for a in 0..n {
                for b in 0..n {
                    let c = self.e.structure(a, g, b);
                    if !c.is_zero() {
                        acc = &acc + &(&(&c.eval_in(env)? * &f[a]) * &y[b]);
                    }
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `h(x)` integrated along coordinate axes from the basepoint, with
    /// `ρ^i_γ ∂h/∂x^i = θ_γ(x, y₀)`.
    fn base_part(&self, p: &PointE) -> Result<Jet2> {
        let (m, n, d) = (self.e.m(), self.e.n(), self.dim());
        let xs = self.e.base_names();
        let ys = self.e.fiber_names();
        let x0 = &self.basepoint;
        let mut total = Jet2::zero(d);
        for k in 0..m {
            let dk = self.seeded(k, p.x[k]).add_const(-x0[k]);
            let integrand = |t: f64| -> Result<Jet2, EvalError> {
                let mut env = Env::new(d);
                for j in 0..m {
                    let xj = if j < k {
                        self.seeded(j, p.x[j])
                    } else if j == k {
                        dk.scale(t).add_const(x0[k])
                    } else {
                        Jet2::constant(x0[j], d)
                    };
                    env.bind(xs[j].clone(), xj);
                }
                for a in 0..n {
                    env.bind(ys[a].clone(), Jet2::constant(self.fiber_basepoint[a], d));
                }
                let theta = self.theta_jets(&env)?;
                // solve ρ^i_γ w_i = θ_γ for w = ∂h/∂x
                let mut matrix = Vec::with_capacity(n * m);
                for g in 0..n {
                    for i in 0..m {
                        matrix.push(self.e.rho(i, g).eval_in(&env)?);
                    }
                }
                let w = linalg::solve_jets(&matrix, &theta)?;
                Ok(&w[k] * &dk)
            };
            total = &total + &integrate(&integrand, d)?;
        }
        Ok(total)
    }
}

/// Recovers `L` from `(Γ, F)` with `L(basepoint, fiber_basepoint) = 0` and
/// verifies `∂L/∂y = F`, `ρ ∂L/∂x = θ` and the Euler-Lagrange equations at
/// `check_points`.
pub fn reconstruct_lagrangian(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    basepoint: &[f64],
    fiber_basepoint: &[f64],
    mode: ReconstructionMode,
    check_points: &[Vec<f64>],
) -> Result<ReconstructedLagrangian> {
    let (m, n) = (e.m(), e.n());
    if basepoint.len() != m || fiber_basepoint.len() != n || f.len() != n || gamma.len() != n {
        return Err(Error::Dimension("reconstruction data does not match the algebroid".into()));
    }
    let mut probe: Vec<Vec<f64>> = check_points
        .iter()
        .map(|p| PointE::split(e, p).map(|p| p.x))
        .collect::<Result<_>>()?;
    probe.push(basepoint.to_vec());
    for x in &probe {
        let anchor = e.anchor_at(x)?;
        match mode {
            ReconstructionMode::ZeroAnchor => {
                if let Some(v) = anchor.iter().find(|v| **v != 0.0) {
                    return Err(Error::Precondition(format!(
                        "zero_anchor reconstruction needs ρ ≡ 0, found {v} at {x:?}"
                    )));
                }
            }
            ReconstructionMode::FullRankSquare => {
                if m != n {
                    return Err(Error::Precondition(format!(
                        "full_rank_square reconstruction needs m = n, got m = {m}, n = {n}"
                    )));
                }
                let cond = linalg::condition_number(n, &anchor);
                if !(cond <= DEGENERACY_CONDITION) {
                    return Err(Error::Degenerate {
                        what: "anchor",
                        point: x.clone(),
                        condition: cond,
                    });
                }
            }
        }
    }
    let xs = e.base_names();
    let ys = e.fiber_names();
    let mut out = ReconstructedLagrangian {
        e: e.clone(),
        gamma: gamma.clone(),
        f: f.clone(),
        f_dx: f.components.iter().map(|c| xs.iter().map(|x| c.derivative(x)).collect()).collect(),
        f_dy: f.components.iter().map(|c| ys.iter().map(|y| c.derivative(y)).collect()).collect(),
        mode,
        basepoint: basepoint.to_vec(),
        fiber_basepoint: fiber_basepoint.to_vec(),
        verification: Report::new(RECONSTRUCTION_TOLERANCE),
    };
    let mut report = Report::new(RECONSTRUCTION_TOLERANCE);
    for point in check_points {
        let lj = out.jet(point)?;
        let (frame, env) = Frame::new(e, gamma, point)?;
        let fv = f.eval(&env)?;
        for a in 0..n {
            let (got, want) = (lj.d(m + a), fv[a].value());
            report.push("fiber", &[a], point, got - want, want.abs());
        }
        let theta = out.theta_jets(&env)?;
        for g in 0..n {
            let lhs: f64 = (0..m).map(|i| frame.s.rho(i, g).value() * lj.d(i)).sum();
            report.push("base", &[g], point, lhs - theta[g].value(), theta[g].value().abs());
        }
        for (a, r) in el_from_jet(&frame, &lj).into_iter().enumerate() {
            report.push("euler_lagrange", &[a], point, r, 0.0);
        }
    }
    if !report.passed {
        let worst = report
            .entries
            .iter()
            .filter(|e| !e.passed)
            .max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
            .expect("a failing entry");
        return Err(Error::ReconstructionFailed(format!(
            "condition `{}` {:?} has residual {:e} at {:?}",
            worst.condition, worst.indices, worst.residual, worst.point
        )));
    }
    out.verification = report;
    Ok(out)
}

// 7-point Gauss / 15-point Kronrod pair on [-1, 1].
const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const QUADRATURE_TOLERANCE: f64 = 1e-10;

fn max_diff(a: &Jet2, b: &Jet2) -> f64 {
    let d = a.dim();
    let mut out = (a.value() - b.value()).abs();
    for i in 0..d {
        out = out.max((a.d(i) - b.d(i)).abs());
        for j in i..d {
            out = out.max((a.hess(i, j) - b.hess(i, j)).abs());
        }
    }
    out
}

fn gauss_kronrod(
    f: &dyn Fn(f64) -> Result<Jet2, EvalError>,
    lo: f64,
    hi: f64,
    d: usize,
) -> Result<(Jet2, f64), EvalError> {
    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut kronrod = Jet2::zero(d);
    let mut gauss = Jet2::zero(d);
    for (k, (&x, &w)) in KRONROD_NODES.iter().zip(&KRONROD_WEIGHTS).enumerate() {
        let nodes: &[f64] = if x == 0.0 { &[0.0] } else { &[x, -x] };
        for &t in nodes {
            let v = f(c + h * t)?;
            kronrod.axpy(w * h, &v);
            if k % 2 == 1 {
                gauss.axpy(GAUSS_WEIGHTS[k / 2] * h, &v);
            }
        }
    }
    let err = max_diff(&kronrod, &gauss);
    Ok((kronrod, err))
}

/// Adaptive integral of a jet-valued function over `[0, 1]`.
fn integrate(f: &dyn Fn(f64) -> Result<Jet2, EvalError>, d: usize) -> Result<Jet2, EvalError> {
    let mut total = Jet2::zero(d);
    let mut stack = vec![(0.0, 1.0, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gauss_kronrod(f, lo, hi, d)?;
        if err <= QUADRATURE_TOLERANCE * (hi - lo) || depth >= 30 {
            total.axpy(1.0, &v);
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::StructureConstants;
    use crate::expr::parse;
    use crate::sode::{classify, Classification};

    fn lag(s: &str) -> Lagrangian {
        Lagrangian::new(parse(s).unwrap())
    }

    #[test]
    fn kronrod_rule_is_exact_on_polynomials() {
        let sum: f64 = KRONROD_WEIGHTS[..7].iter().sum::<f64>() * 2.0 + KRONROD_WEIGHTS[7];
        assert!((sum - 2.0).abs() < 1e-15);
        let gsum: f64 = GAUSS_WEIGHTS[..3].iter().sum::<f64>() * 2.0 + GAUSS_WEIGHTS[3];
        assert!((gsum - 2.0).abs() < 1e-15);
        for k in 0..20 {
            let f = |t: f64| Ok(Jet2::constant(t.powi(k), 0));
            let (v, _) = gauss_kronrod(&f, 0.0, 1.0, 0).unwrap();
            assert!((v.value() - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}");
        }
        let g = |t: f64| Ok(Jet2::constant((3.0 * t).sin(), 0));
        let v = integrate(&g, 0).unwrap();
        assert!((v.value() - (1.0 - 3f64.cos()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn legendre_and_energy() {
        let t = LieAlgebroid::tangent_bundle(3);
        let l = lag("0.5*(y1^2 + y2^2 + y3^2) + x3");
        let f = legendre(&t, &l);
        let env = t.total_env(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0]);
        let vals: Vec<f64> = f.eval(&env).unwrap().iter().map(Jet2::value).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        let pt = [0.1, 0.2, 0.3, 1.0, 2.0, 3.0];
        assert!((energy(&t, &l, &pt).unwrap() - (7.0 - 0.3)).abs() < 1e-15);
        let lin = lag("y1 + 3");
        let one = LieAlgebroid::tangent_bundle(1);
        assert_eq!(energy(&one, &lin, &[0.5, 2.0]).unwrap(), -3.0);
    }

    #[test]
    fn se2_tangent_sode() {
        let t = LieAlgebroid::tangent_bundle(3);
        let l = lag("0.5*(y1^2 + y2^2 + y3^2) + x3");
        let g = sode_from_lagrangian_at(&t, &l, &[0.1, 0.2, 0.3, 0.4, -0.5, 0.6]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 1.0]);
        let wrong = SodeSection::new(vec![parse("1").unwrap(), parse("0").unwrap(), parse("1").unwrap()]);
        let r = el_residual(&t, &l, &wrong, &[0.1, 0.2, 0.3, 0.4, -0.5, 0.6]).unwrap();
        assert_eq!(r, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn euler_poincare_on_se2() {
        let e = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let l = lag("0.5*(y1^2 + y2^2 + y3^2)");
        let pt = [0.3, -0.4, 0.8];
        let g = sode_from_lagrangian_at(&e, &l, &pt).unwrap();
        // Γ_α = −C^γ_αβ y^β y^γ: (y2 y3, −y1 y3, 0)
        assert!((g[0] - (-0.4 * 0.8)).abs() < 1e-15);
        assert!((g[1] - (-0.3 * 0.8)).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
        let gamma = sode_from_lagrangian(&e, &l);
        assert!(el_residual(&e, &l, &gamma, &pt).unwrap().iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn singular_hessian_is_degenerate() {
        let t = LieAlgebroid::tangent_bundle(1);
        let err = sode_from_lagrangian_at(&t, &lag("y1 + x1"), &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }));
    }

    #[test]
    fn reconstruct_se2_tangent() {
        let t = LieAlgebroid::tangent_bundle(3);
        let l = lag("0.5*(y1^2 + y2^2 + y3^2) + x3");
        let gamma = sode_from_lagrangian(&t, &l);
        let f = legendre(&t, &l);
        let checks = vec![vec![0.3, -0.2, 0.5, 0.1, 0.7, -0.4], vec![-0.8, 0.4, -0.1, 0.9, -0.3, 0.2]];
        let h = classify(&t, &gamma, &f, &checks, 1e-10).unwrap();
        assert_eq!(h.classification, Classification::Variational);
        let rec = reconstruct_lagrangian(
            &t,
            &gamma,
            &f,
            &[0.0; 3],
            &[0.0; 3],
            ReconstructionMode::FullRankSquare,
            &checks,
        )
        .unwrap();
        for p in &checks {
            let env = t.total_env(&p[..3], &p[3..]);
            let exact = l.expr.value_in(&env).unwrap();
            assert!((rec.value(p).unwrap() - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruct_rejects_closedness_failure() {
        let t = LieAlgebroid::tangent_bundle(2);
        let gamma = SodeSection::new(vec![parse("x2").unwrap(), parse("0").unwrap()]);
        let f = MultiplierMap::identity(2);
        let err = reconstruct_lagrangian(
            &t,
            &gamma,
            &f,
            &[0.0, 0.0],
            &[0.0, 0.0],
            ReconstructionMode::FullRankSquare,
            &[vec![0.5, 0.5, 0.1, 0.2]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ReconstructionFailed(_)), "{err}");
    }

    #[test]
    fn reconstruct_on_abelian_algebra() {
        let e = LieAlgebroid::lie_algebra(&StructureConstants::zero(2));
        let gamma = SodeSection::new(vec![parse("0").unwrap(), parse("0").unwrap()]);
        let f = MultiplierMap::identity(2);
        let rec = reconstruct_lagrangian(
            &e,
            &gamma,
            &f,
            &[],
            &[0.0, 0.0],
            ReconstructionMode::ZeroAnchor,
            &[vec![0.4, -0.6]],
        )
        .unwrap();
        assert!((rec.value(&[0.4, -0.6]).unwrap() - 0.26).abs() < 1e-14);
        let wrong_mode = reconstruct_lagrangian(
            &e,
            &gamma,
            &f,
            &[],
            &[0.0, 0.0],
            ReconstructionMode::FullRankSquare,
            &[vec![0.4, -0.6]],
        );
        assert!(matches!(wrong_mode, Err(Error::Precondition(_))));
    }

    #[test]
    fn weak_variational_data_does_not_reconstruct() {
        let e = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let gamma = SodeSection::new(
            ["y2*y3", "-(y1*y3)", "1"].iter().map(|s| parse(s).unwrap()).collect(),
        );
        let f = MultiplierMap::identity(3);
        let err = reconstruct_lagrangian(
            &e,
            &gamma,
            &f,
            &[],
            &[0.0; 3],
            ReconstructionMode::ZeroAnchor,
            &[vec![0.4, -0.6, 0.2]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ReconstructionFailed(_)));
    }
}
