//! Lie algebroids in local coordinates.
//!
//! An algebroid over a base with coordinates `x1..xm` is given by its anchor
//! components `ρ^i_α(x)` and structure functions `C^γ_αβ(x)` with respect to
//! a local basis `e_1..e_n` of sections. Fiber coordinates are `y1..yn`.

use std::collections::BTreeSet;

use crate::expr::{Env, Expr};
use crate::jets::{EvalError, Jet2};
use crate::linalg;
use crate::report::Report;
use crate::sampling::halton;
use crate::{base_names, fiber_names, Error, Result};

/// Points used to sanity-check field tables at construction time.
fn probe_points(m: usize) -> Vec<Vec<f64>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    halton(m, 8, 0xA1)
        .into_iter()
        .map(|u| u.into_iter().map(|t| 2.0 * t - 1.0).collect())
        .collect()
}

/// `(α, β, [(γ, v), ...])`: the bracket `[e_α, e_β] = Σ v e_γ`.
pub type BracketTerms = (usize, usize, Vec<(usize, f64)>);

/// Constant structure constants `c^γ_αβ` of a Lie algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    n: usize,
    values: Vec<f64>,
}

impl StructureConstants {
    /// Dense table indexed `[(γ*n + α)*n + β]`; must be antisymmetric in
    /// `(α, β)`.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n * n {
            return Err(Error::Dimension(format!(
                "{} structure constants for dimension {n}",
                values.len()
            )));
        }
        let out = Self { n, values };
        for g in 0..n {
            for a in 0..n {
                for b in a..n {
                    let (f, r) = (out.get(g, a, b), out.get(g, b, a));
                    if (f + r).abs() > 1e-14 * (1.0 + f.abs()) {
                        return Err(Error::NotAntisymmetric {
                            gamma: g + 1,
                            alpha: a + 1,
                            beta: b + 1,
                            forward: f,
                            backward: r,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n * n],
        }
    }

    /// Builds the table from brackets `[e_α, e_β] = Σ v e_γ` given for
    /// `α < β` as `(α, β, [(γ, v), ...])`, 0-based. Mirrors are generated.
    pub fn from_brackets(n: usize, brackets: &[BracketTerms]) -> Result<Self> {
        let mut out = Self::zero(n);
        for (a, b, terms) in brackets {
            let (a, b) = (*a, *b);
            if a >= b || b >= n {
                return Err(Error::Model(format!(
                    "bracket [e{}, e{}] must be given with first index smaller than the second, both at most {n}",
                    a + 1,
                    b + 1
                )));
            }
            for &(g, v) in terms {
                if g >= n {
                    return Err(Error::Model(format!("basis index {} exceeds {n}", g + 1)));
                }
                out.values[(g * n + a) * n + b] = v;
                out.values[(g * n + b) * n + a] = -v;
            }
        }
        Ok(out)
    }

    /// `se(2)`: `[e1,e2] = 0`, `[e1,e3] = -e2`, `[e2,e3] = e1`.
    pub fn se2() -> Self {
        Self::from_brackets(3, &[(0, 2, vec![(1, -1.0)]), (1, 2, vec![(0, 1.0)])])
            .expect("valid table")
    }

    /// `so(3)`: `[e_α, e_β] = ε_αβγ e_γ`.
    pub fn so3() -> Self {
        Self::from_brackets(
            3,
            &[(0, 1, vec![(2, 1.0)]), (1, 2, vec![(0, 1.0)]), (0, 2, vec![(1, -1.0)])],
        )
        .expect("valid table")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, gamma: usize, alpha: usize, beta: usize) -> f64 {
        self.values[(gamma * self.n + alpha) * self.n + beta]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set(&mut self, gamma: usize, alpha: usize, beta: usize, v: f64) {
        let n = self.n;
        self.values[(gamma * n + alpha) * n + beta] = v;
        self.values[(gamma * n + beta) * n + alpha] = -v;
    }

    /// Largest entry of the cyclic Jacobi sum.
    pub fn jacobi_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for nu in 0..n {
            for a in 0..n {
                for b in (a + 1)..n {
                    for g in (b + 1)..n {
                        let mut s = 0.0;
                        for (p, q, r) in [(a, b, g), (b, g, a), (g, a, b)] {
                            for mu in 0..n {
                                s += self.get(nu, p, mu) * self.get(mu, q, r);
                            }
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }
}

/// A point of the total space: base coordinates and fiber coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointE {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PointE {
    pub fn new(e: &LieAlgebroid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != e.m() || y.len() != e.n() {
            return Err(Error::Dimension(format!(
                "point ({}, {}) on an algebroid of dimensions ({}, {})",
                x.len(),
                y.len(),
                e.m(),
                e.n()
            )));
        }
        Ok(Self { x, y })
    }

    /// Splits a flat `(x, y)` vector.
    pub fn split(e: &LieAlgebroid, flat: &[f64]) -> Result<Self> {
        if flat.len() != e.m() + e.n() {
            return Err(Error::Dimension(format!(
                "point of length {} for m + n = {}",
                flat.len(),
                e.m() + e.n()
            )));
        }
        Ok(Self {
            x: flat[..e.m()].to_vec(),
            y: flat[e.m()..].to_vec(),
        })
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.x.clone();
        out.extend_from_slice(&self.y);
        out
    }
}

/// A 1-section `θ = θ_α e^α` with components depending on `x` only.
#[derive(Debug, Clone, PartialEq)]
pub struct OneSection {
    pub components: Vec<Expr>,
}

impl OneSection {
    pub fn new(components: Vec<Expr>) -> Self {
        Self { components }
    }

    /// The dual basis section `e^α` (0-based).
    pub fn dual_basis(n: usize, alpha: usize) -> Self {
        Self::new(
            (0..n)
                .map(|k| Expr::num(if k == alpha { 1.0 } else { 0.0 }))
                .collect(),
        )
    }

    pub fn values(&self, e: &LieAlgebroid, x: &[f64]) -> Result<Vec<f64>> {
        let env = e.base_env(x);
        Ok(self
            .components
            .iter()
            .map(|c| c.value_in(&env))
            .collect::<Result<_, _>>()?)
    }
}

/// An antisymmetric matrix of residual-like values with the magnitude of
/// the terms that produced each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    pub n: usize,
    pub values: Vec<f64>,
    pub scales: Vec<f64>,
}

impl SkewMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn scale(&self, i: usize, j: usize) -> f64 {
        self.scales[i * self.n + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Rank of the anchor and a basis of its kernel at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    pub rank: usize,
    /// Each vector has length `n`.
    pub vectors: Vec<Vec<f64>>,
}

/// Anchor and structure functions evaluated as jets.
#[derive(Debug, Clone)]
pub struct StructureJets {
    pub m: usize,
    pub n: usize,
    rho: Vec<Jet2>,
    c: Vec<Jet2>,
}

impl StructureJets {
    pub fn rho(&self, i: usize, alpha: usize) -> &Jet2 {
        &self.rho[i * self.n + alpha]
    }

    pub fn c(&self, gamma: usize, alpha: usize, beta: usize) -> &Jet2 {
        &self.c[(gamma * self.n + alpha) * self.n + beta]
    }
}

/// Connection data of a trivial principal bundle `U × G`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtiyahData {
    m: usize,
    ng: usize,
    connection: Vec<Expr>,
    constants: StructureConstants,
}

impl AtiyahData {
    /// `connection[a][i]` is `A^a_i(x)`.
    pub fn new(m: usize, connection: Vec<Vec<Expr>>, constants: StructureConstants) -> Result<Self> {
        let ng = constants.n();
        if connection.len() != ng || connection.iter().any(|row| row.len() != m) {
            return Err(Error::Dimension(format!(
                "connection table must be {ng} rows of {m} entries"
            )));
        }
        let jac = constants.jacobi_residual();
        if jac > 1e-12 {
            return Err(Error::Model(format!(
                "structure constants violate the Jacobi identity (residual {jac:e})"
            )));
        }
        let connection: Vec<Expr> = connection.into_iter().flatten().collect();
        check_base_only(m, connection.iter(), "connection coefficient")?;
        Ok(Self {
            m,
            ng,
            connection,
            constants,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn group_dim(&self) -> usize {
        self.ng
    }

    pub fn connection(&self, a: usize, i: usize) -> &Expr {
        &self.connection[a * self.m + i]
    }

    pub fn constants(&self) -> &StructureConstants {
        &self.constants
    }

    /// `B^c_ij = ∂A^c_j/∂x^i − ∂A^c_i/∂x^j − c^c_ab A^a_i A^b_j`, indexed
    /// `[(c*m + i)*m + j]`.
    ///
    /// This sign makes the resulting algebroid satisfy the Jacobi identity.
    pub fn curvature(&self) -> Vec<Expr> {
        let (m, ng) = (self.m, self.ng);
        let names = base_names(m);
        let mut out = Vec::with_capacity(ng * m * m);
        for c in 0..ng {
            for i in 0..m {
                for j in 0..m {
                    let mut b = self.connection(c, j).derivative(&names[i])
                        - self.connection(c, i).derivative(&names[j]);
                    for a in 0..ng {
                        for bb in 0..ng {
                            let k = self.constants.get(c, a, bb);
                            if k != 0.0 {
                                b = b - Expr::num(k)
                                    * self.connection(a, i).clone()
                                    * self.connection(bb, j).clone();
                            }
                        }
                    }
                    out.push(b);
                }
            }
        }
        out
    }

    /// Curvature values at a base point, indexed like [`Self::curvature`].
    pub fn curvature_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let env = base_env(x);
        Ok(self
            .curvature()
            .iter()
            .map(|b| b.value_in(&env))
            .collect::<Result<_, _>>()?)
    }
}

fn base_env(x: &[f64]) -> Env {
    let mut env = Env::new(x.len());
    for (i, name) in base_names(x.len()).into_iter().enumerate() {
        env.bind(name, Jet2::variable(x[i], i, x.len()).expect("in range"));
    }
    env
}

fn check_base_only<'a>(m: usize, exprs: impl Iterator<Item = &'a Expr>, what: &str) -> Result<()> {
    let allowed: BTreeSet<String> = base_names(m).into_iter().collect();
    for e in exprs {
        for v in e.free_vars() {
            if !allowed.contains(&v) {
                return Err(Error::Model(if v.starts_with('y') {
                    format!("{what} `{e}` depends on fiber coordinate `{v}`; structure functions may depend on x only")
                } else {
                    format!("{what} `{e}` references unknown variable `{v}`")
                }));
            }
        }
    }
    Ok(())
}

/// A Lie algebroid given by local structure functions.
#[derive(Debug, Clone)]
pub struct LieAlgebroid {
    name: String,
    m: usize,
    n: usize,
    rho: Vec<Expr>,
    c: Vec<Expr>,
    kernel_indices: Option<Vec<usize>>,
    atiyah: Option<AtiyahData>,
}

impl LieAlgebroid {
    /// `rho[i][α]` is `ρ^i_α`; `brackets` lists `(γ, α, β, C^γ_αβ)` for
    /// `α < β` only (0-based) and the mirrored entries are generated.
    pub fn new(
        m: usize,
        n: usize,
        rho: Vec<Vec<Expr>>,
        brackets: Vec<(usize, usize, usize, Expr)>,
    ) -> Result<Self> {
        if rho.len() != m || rho.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("anchor must be {m} rows of {n} entries")));
        }
        let mut c = vec![Expr::num(0.0); n * n * n];
        let mut seen = BTreeSet::new();
        for (g, a, b, v) in brackets {
            if g >= n || a >= n || b >= n {
                return Err(Error::Model(format!(
                    "structure function index ({}, {}, {}) out of range for n = {n}",
                    g + 1,
                    a + 1,
                    b + 1
                )));
            }
            if a >= b {
                return Err(Error::Model(format!(
                    "structure function C^{}_{}{} must be given with lower indices increasing; the mirror is generated by antisymmetry",
                    g + 1,
                    a + 1,
                    b + 1
                )));
            }
            if !seen.insert((g, a, b)) {
                return Err(Error::Model(format!(
                    "structure function C^{}_{}{} given twice",
                    g + 1,
                    a + 1,
                    b + 1
                )));
            }
            c[(g * n + b) * n + a] = -v.clone();
            c[(g * n + a) * n + b] = v;
        }
        Self::from_tables(m, n, rho.into_iter().flatten().collect(), c)
    }

    /// Dense tables; `c[(γ*n + α)*n + β]`. Antisymmetry is checked
    /// numerically on probe points.
    pub fn from_dense(m: usize, n: usize, rho: Vec<Vec<Expr>>, c: Vec<Expr>) -> Result<Self> {
        if rho.len() != m || rho.iter().any(|r| r.len() != n) || c.len() != n * n * n {
            return Err(Error::Dimension("anchor or structure table has the wrong shape".into()));
        }
        let out = Self::from_tables(m, n, rho.into_iter().flatten().collect(), c)?;
        for x in probe_points(m) {
            let env = out.base_env(&x);
            for g in 0..n {
                for a in 0..n {
                    for b in a..n {
                        let f = out.structure(g, a, b).value_in(&env)?;
                        let r = out.structure(g, b, a).value_in(&env)?;
                        if (f + r).abs() > 1e-12 * (1.0 + f.abs()) {
                            return Err(Error::NotAntisymmetric {
                                gamma: g + 1,
                                alpha: a + 1,
                                beta: b + 1,
                                forward: f,
                                backward: r,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn from_tables(m: usize, n: usize, rho: Vec<Expr>, c: Vec<Expr>) -> Result<Self> {
        check_base_only(m, rho.iter(), "anchor component")?;
        check_base_only(m, c.iter(), "structure function")?;
        Ok(Self {
            name: String::new(),
            m,
            n,
            rho,
            c,
            kernel_indices: None,
            atiyah: None,
        })
    }

    /// `TQ` with the coordinate basis: `ρ = id`, `C = 0`.
    pub fn tangent_bundle(m: usize) -> Self {
        let rho = (0..m)
            .map(|i| (0..m).map(|a| Expr::num(if i == a { 1.0 } else { 0.0 })).collect())
            .collect();
        let mut e = Self::new(m, m, rho, Vec::new()).expect("identity anchor");
        e.kernel_indices = Some(Vec::new());
        e.name = format!("T R^{m}");
        e
    }

    /// A Lie algebra as an algebroid over a point: no base coordinates and
    /// the whole fiber in the anchor kernel.
    pub fn lie_algebra(constants: &StructureConstants) -> Self {
        let n = constants.n();
        let c = constants.values().iter().map(|&v| Expr::num(v)).collect();
        let mut e = Self::from_tables(0, n, Vec::new(), c).expect("constant table");
        e.kernel_indices = Some((0..n).collect());
        e.name = "lie algebra".into();
        e
    }

    /// The Atiyah algebroid `T(U × G)/G` in the basis of horizontal lifts
    /// (indices `0..m`) followed by the fundamental vertical sections
    /// (indices `m..m+ng`).
    pub fn atiyah(data: &AtiyahData) -> Self {
        let (m, ng) = (data.m(), data.group_dim());
        let n = m + ng;
        let rho: Vec<Expr> = (0..m)
            .flat_map(|i| (0..n).map(move |a| Expr::num(if i == a { 1.0 } else { 0.0 })))
            .collect();
        let mut c = vec![Expr::num(0.0); n * n * n];
        let idx = |g: usize, a: usize, b: usize| (g * n + a) * n + b;
        let curvature = data.curvature();
        for cc in 0..ng {
            for i in 0..m {
                for j in 0..m {
                    c[idx(m + cc, i, j)] = -curvature[(cc * m + i) * m + j].clone();
                }
                for a in 0..ng {
                    let mut v = Expr::num(0.0);
                    for b in 0..ng {
                        let k = data.constants().get(cc, a, b);
                        if k != 0.0 {
                            v = v + Expr::num(k) * data.connection(b, i).clone();
                        }
                    }
                    c[idx(m + cc, m + a, i)] = -v.clone();
                    c[idx(m + cc, i, m + a)] = v;
                }
            }
            for a in 0..ng {
                for b in 0..ng {
                    c[idx(m + cc, m + a, m + b)] = Expr::num(data.constants().get(cc, a, b));
                }
            }
        }
        let mut e = Self::from_tables(m, n, rho, c).expect("base-only tables");
        e.kernel_indices = Some((m..n).collect());
        e.atiyah = Some(data.clone());
        e.name = "atiyah".into();
        e
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Declares the basis elements (0-based) that span the anchor kernel.
    /// Checked against the anchor on probe points.
    pub fn with_kernel_indices(mut self, indices: Vec<usize>) -> Result<Self> {
        for &k in &indices {
            if k >= self.n {
                return Err(Error::Model(format!("kernel index {} exceeds n = {}", k + 1, self.n)));
            }
        }
        for x in probe_points(self.m) {
            let env = self.base_env(&x);
            for &k in &indices {
                for i in 0..self.m {
                    let v = self.rho(i, k).value_in(&env)?;
                    if v != 0.0 {
                        return Err(Error::Model(format!(
                            "declared kernel index {} has anchor component ρ^{}_{} = {v} at {x:?}",
                            k + 1,
                            i + 1,
                            k + 1
                        )));
                    }
                }
            }
        }
        self.kernel_indices = Some(indices);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self, i: usize, alpha: usize) -> &Expr {
        &self.rho[i * self.n + alpha]
    }

    pub fn structure(&self, gamma: usize, alpha: usize, beta: usize) -> &Expr {
        &self.c[(gamma * self.n + alpha) * self.n + beta]
    }

    pub fn kernel_indices(&self) -> Option<&[usize]> {
        self.kernel_indices.as_deref()
    }

    pub fn atiyah_data(&self) -> Option<&AtiyahData> {
        self.atiyah.as_ref()
    }

    pub fn base_names(&self) -> Vec<String> {
        base_names(self.m)
    }

    pub fn fiber_names(&self) -> Vec<String> {
        fiber_names(self.n)
    }

    /// Environment over the base only, with `x` seeded.
    pub fn base_env(&self, x: &[f64]) -> Env {
        base_env(x)
    }

    /// Environment over the total space with `x` then `y` seeded.
    pub fn total_env(&self, x: &[f64], y: &[f64]) -> Env {
        let d = self.m + self.n;
        let mut env = Env::new(d);
        for (i, name) in self.base_names().into_iter().enumerate() {
            env.bind(name, Jet2::variable(x[i], i, d).expect("in range"));
        }
        for (a, name) in self.fiber_names().into_iter().enumerate() {
            env.bind(name, Jet2::variable(y[a], self.m + a, d).expect("in range"));
        }
        env
    }

    pub fn structure_jets(&self, env: &Env) -> Result<StructureJets, EvalError> {
        Ok(StructureJets {
            m: self.m,
            n: self.n,
            rho: self.rho.iter().map(|r| r.eval_in(env)).collect::<Result<_, _>>()?,
            c: self.c.iter().map(|c| c.eval_in(env)).collect::<Result<_, _>>()?,
        })
    }

    /// Anchor matrix values, row-major `m×n`.
    pub fn anchor_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let env = self.base_env(x);
        Ok(self.rho.iter().map(|r| r.value_in(&env)).collect::<Result<_, _>>()?)
    }

    fn check_base_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::Dimension(format!(
                "base point of length {} for m = {}",
                x.len(),
                self.m
            )));
        }
        Ok(())
    }

    /// Residuals of the two structure equations (anchor compatibility and
    /// the cyclic Jacobi sum) at every base point, plus the declared kernel
    /// indices when present.
    pub fn validate_structure(&self, points: &[Vec<f64>], tol: f64) -> Result<Report> {
        let (m, n) = (self.m, self.n);
        let mut report = Report::new(tol);
        for x in points {
            self.check_base_point(x)?;
            let s = match self.structure_jets(&self.base_env(x)) {
                Ok(s) => s,
                Err(err) => {
                    report.push_error("anchor", x, err);
                    continue;
                }
            };
            for i in 0..m {
                for a in 0..n {
                    for b in (a + 1)..n {
                        let mut r = 0.0;
                        let mut scale = 0.0;
                        for j in 0..m {
                            for t in [
                                s.rho(j, a).value() * s.rho(i, b).d(j),
                                -s.rho(j, b).value() * s.rho(i, a).d(j),
                            ] {
                                r += t;
                                scale += t.abs();
                            }
                        }
                        for g in 0..n {
                            let t = -s.rho(i, g).value() * s.c(g, a, b).value();
                            r += t;
                            scale += t.abs();
                        }
                        report.push("anchor", &[i, a, b], x, r, scale);
                    }
                }
            }
            for nu in 0..n {
                for a in 0..n {
                    for b in (a + 1)..n {
                        for g in (b + 1)..n {
                            let mut r = 0.0;
                            let mut scale = 0.0;
                            for (p, q, w) in [(a, b, g), (b, g, a), (g, a, b)] {
                                for i in 0..m {
                                    let t = s.rho(i, p).value() * s.c(nu, q, w).d(i);
                                    r += t;
                                    scale += t.abs();
                                }
                                for mu in 0..n {
                                    let t = s.c(nu, p, mu).value() * s.c(mu, q, w).value();
                                    r += t;
                                    scale += t.abs();
                                }
                            }
                            report.push("jacobi", &[nu, a, b, g], x, r, scale);
                        }
                    }
                }
            }
            if let Some(kernel) = &self.kernel_indices {
                for &k in kernel {
                    for i in 0..m {
                        report.push("kernel_declared", &[i, k], x, s.rho(i, k).value(), 0.0);
                    }
                }
            }
        }
        Ok(report)
    }

    /// `d f = ρ^i_α ∂f/∂x^i e^α` as a symbolic 1-section.
    pub fn d_function(&self, f: &Expr) -> Result<OneSection> {
        check_base_only(self.m, std::iter::once(f), "function")?;
        let names = self.base_names();
        let partials: Vec<Expr> = names.iter().map(|x| f.derivative(x)).collect();
        Ok(OneSection::new(
            (0..self.n)
                .map(|a| {
                    (0..self.m).fold(Expr::num(0.0), |acc, i| {
                        acc + self.rho(i, a).clone() * partials[i].clone()
                    })
                })
                .collect(),
        ))
    }

    /// `(dθ)_βγ = ρ^i_β ∂θ_γ/∂x^i − ρ^i_γ ∂θ_β/∂x^i − θ_α C^α_βγ`.
    pub fn d_one_section(&self, theta: &OneSection, x: &[f64]) -> Result<SkewMatrix> {
        self.check_base_point(x)?;
        if theta.components.len() != self.n {
            return Err(Error::Dimension(format!(
                "1-section with {} components on a rank {} algebroid",
                theta.components.len(),
                self.n
            )));
        }
        let env = self.base_env(x);
        let s = self.structure_jets(&env)?;
        let th: Vec<Jet2> = theta
            .components
            .iter()
            .map(|c| c.eval_in(&env))
            .collect::<Result<_, _>>()?;
        let n = self.n;
        let mut values = vec![0.0; n * n];
        let mut scales = vec![0.0; n * n];
        for b in 0..n {
            for g in 0..n {
                let mut r = 0.0;
                let mut scale = 0.0;
                for i in 0..self.m {
                    for t in [
                        s.rho(i, b).value() * th[g].d(i),
                        -s.rho(i, g).value() * th[b].d(i),
                    ] {
                        r += t;
                        scale += t.abs();
                    }
                }
                for a in 0..n {
                    let t = -th[a].value() * s.c(a, b, g).value();
                    r += t;
                    scale += t.abs();
                }
                values[b * n + g] = r;
                scales[b * n + g] = scale;
            }
        }
        Ok(SkewMatrix { n, values, scales })
    }

    /// Rank of `ρ(x)` and a basis of its kernel. Declared kernel indices
    /// give the coordinate basis directly.
    pub fn kernel_basis(&self, x: &[f64]) -> Result<KernelBasis> {
        self.check_base_point(x)?;
        let n = self.n;
        if let Some(kernel) = &self.kernel_indices {
            return Ok(KernelBasis {
                rank: n - kernel.len(),
                vectors: kernel
                    .iter()
                    .map(|&k| (0..n).map(|a| if a == k { 1.0 } else { 0.0 }).collect())
                    .collect(),
            });
        }
        let anchor = self.anchor_at(x)?;
        let (rank, vectors) = linalg::rank_and_kernel(self.m, n, &anchor, 1e-10);
        Ok(KernelBasis { rank, vectors })
    }

    /// Kernel bases at every point, failing if the anchor rank is not
    /// constant across them.
    pub fn regular_kernels(&self, points: &[Vec<f64>]) -> Result<Vec<KernelBasis>> {
        let mut out: Vec<KernelBasis> = Vec::with_capacity(points.len());
        for x in points {
            let k = self.kernel_basis(x)?;
            if let Some(first) = out.first() {
                if first.rank != k.rank {
                    return Err(Error::Regularity {
                        first: first.rank,
                        first_point: points[0].clone(),
                        other: k.rank,
                        other_point: x.clone(),
                    });
                }
            }
            out.push(k);
        }
        Ok(out)
    }

    /// Closedness of `θ` and annihilation of the anchor kernel: on a
    /// regular algebroid both hold exactly when `θ` is locally exact.
    pub fn local_exactness_check(
        &self,
        theta: &OneSection,
        points: &[Vec<f64>],
        tol: f64,
    ) -> Result<Report> {
        let kernels = self.regular_kernels(points)?;
        let n = self.n;
        let mut report = Report::new(tol);
        for (x, kernel) in points.iter().zip(&kernels) {
            let d = match self.d_one_section(theta, x) {
                Ok(d) => d,
                Err(Error::Eval(err)) => {
                    report.push_error("closed", x, err);
                    continue;
                }
                Err(err) => return Err(err),
            };
            for b in 0..n {
                for g in (b + 1)..n {
                    report.push("closed", &[b, g], x, d.get(b, g), d.scale(b, g));
                }
            }
            let th = theta.values(self, x)?;
            for (k, z) in kernel.vectors.iter().enumerate() {
                let terms: Vec<f64> = th.iter().zip(z).map(|(a, b)| a * b).collect();
                report.push(
                    "kernel",
                    &[k],
                    x,
                    terms.iter().sum(),
                    terms.iter().map(|t| t.abs()).sum(),
                );
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn se2_brackets() {
        let c = StructureConstants::se2();
        assert_eq!(c.get(1, 0, 2), -1.0);
        assert_eq!(c.get(1, 2, 0), 1.0);
        assert_eq!(c.get(0, 1, 2), 1.0);
        assert_eq!(c.get(0, 2, 1), -1.0);
        assert_eq!(c.jacobi_residual(), 0.0);
        assert_eq!(StructureConstants::so3().jacobi_residual(), 0.0);
    }

    #[test]
    fn non_antisymmetric_table_is_rejected() {
        let mut v = vec![0.0; 8];
        v[1] = 1.0; // c^1_12 without its mirror
        assert!(matches!(
            StructureConstants::new(2, v),
            Err(Error::NotAntisymmetric { .. })
        ));
    }

    #[test]
    fn tangent_bundle_validates() {
        let e = LieAlgebroid::tangent_bundle(2);
        let r = e.validate_structure(&[vec![0.3, -0.2]], 1e-12).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs_all(), 0.0);
    }

    #[test]
    fn perturbed_se2_fails_jacobi() {
        // rescaling [e2,e3] keeps a semidirect product, which is still a Lie algebra
        let mut c = StructureConstants::se2();
        c.set(0, 1, 2, 1.1);
        assert_eq!(c.jacobi_residual(), 0.0);
        // [e1,e2] = e1 on top of se(2) breaks the cyclic sum by e2
        let mut c = StructureConstants::se2();
        c.set(0, 0, 1, 1.0);
        assert_eq!(c.jacobi_residual(), 1.0);
        let e = LieAlgebroid::lie_algebra(&c);
        let r = e.validate_structure(&[Vec::new()], 1e-8).unwrap();
        assert!(!r.block_passed("jacobi"));
    }

    #[test]
    fn d_function_examples() {
        let t = LieAlgebroid::tangent_bundle(2);
        let th = t.d_function(&p("x1")).unwrap();
        assert_eq!(th.values(&t, &[0.4, 0.1]).unwrap(), vec![1.0, 0.0]);
        let non_regular = LieAlgebroid::new(1, 1, vec![vec![p("x1")]], Vec::new()).unwrap();
        // f = t, so df/dt = 1 and θ_1 = t
        let th = non_regular.d_function(&p("x1")).unwrap();
        assert_eq!(th.values(&non_regular, &[0.7]).unwrap(), vec![0.7]);
        let g = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        assert!(g.d_function(&Expr::num(3.0)).unwrap().components.iter().all(Expr::is_zero));
    }

    #[test]
    fn d_one_section_examples() {
        let t = LieAlgebroid::tangent_bundle(2);
        let th = OneSection::new(vec![p("x2"), p("0")]);
        let d = t.d_one_section(&th, &[0.5, 0.5]).unwrap();
        assert_eq!(d.get(0, 1), -1.0);
        assert_eq!(d.get(1, 0), 1.0);
        let g = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let e3 = OneSection::dual_basis(3, 2);
        assert_eq!(g.d_one_section(&e3, &[]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn exactness_of_e3_on_se2() {
        let g = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let r = g
            .local_exactness_check(&OneSection::dual_basis(3, 2), &[Vec::new()], 1e-12)
            .unwrap();
        assert!(r.block_passed("closed"));
        assert!(!r.block_passed("kernel"));
        assert_eq!(r.max_abs("kernel"), 1.0);
    }

    #[test]
    fn rank_jump_is_a_regularity_error() {
        let e = LieAlgebroid::new(1, 1, vec![vec![p("x1")]], Vec::new()).unwrap();
        let th = e.d_function(&p("x1")).unwrap();
        let err = e
            .local_exactness_check(&th, &[vec![0.5], vec![0.0]], 1e-8)
            .unwrap_err();
        assert!(matches!(err, Error::Regularity { first: 1, other: 0, .. }));
    }

    #[test]
    fn kernels() {
        let g = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let k = g.kernel_basis(&[]).unwrap();
        assert_eq!((k.rank, k.vectors.len()), (0, 3));
        let t = LieAlgebroid::tangent_bundle(3);
        let k = t.kernel_basis(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((k.rank, k.vectors.len()), (3, 0));
        let custom = LieAlgebroid::new(1, 2, vec![vec![p("1"), p("x1")]], Vec::new()).unwrap();
        let k = custom.kernel_basis(&[2.0]).unwrap();
        assert_eq!((k.rank, k.vectors.len()), (1, 1));
        let z = &k.vectors[0];
        assert!((z[0] + 2.0 * z[1]).abs() < 1e-12);
    }

    #[test]
    fn fiber_dependent_structure_rejected() {
        let err = LieAlgebroid::new(1, 1, vec![vec![p("y1")]], Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
        let err = LieAlgebroid::new(0, 2, vec![], vec![(0, 0, 0, p("1"))]).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn atiyah_curvature_and_structure() {
        let data = AtiyahData::new(2, vec![vec![p("x2"), p("0")]], StructureConstants::zero(1)).unwrap();
        let b = data.curvature_at(&[0.1, 0.2]).unwrap();
        // index (c=0, i=0, j=1)
        assert_eq!(b[1], -1.0);
        assert_eq!(b[2], 1.0);
        let e = LieAlgebroid::atiyah(&data);
        let env = e.base_env(&[0.1, 0.2]);
        assert_eq!(e.structure(2, 0, 1).value_in(&env).unwrap(), 1.0);
        assert_eq!(e.kernel_indices(), Some(&[2][..]));
        let r = e.validate_structure(&[vec![0.1, 0.2], vec![-0.5, 0.9]], 1e-12).unwrap();
        assert!(r.passed, "{:?}", r.entries.iter().filter(|e| !e.passed).collect::<Vec<_>>());
    }

    #[test]
    fn nonabelian_atiyah_validates() {
        let data = AtiyahData::new(
            2,
            vec![
                vec![p("x1*x2"), p("x1^2")],
                vec![p("1 + x2"), p("0")],
                vec![p("x1"), p("-x2^2")],
            ],
            StructureConstants::so3(),
        )
        .unwrap();
        let e = LieAlgebroid::atiyah(&data);
        let pts = vec![vec![0.3, -0.7], vec![0.9, 0.4]];
        let r = e.validate_structure(&pts, 1e-12).unwrap();
        assert!(r.passed, "max residual {}", r.max_abs_all());
    }
}
