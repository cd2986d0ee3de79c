//! SODE sections, the covector section `Θ_{Γ,F}` and the Helmholtz
//! conditions.

use std::fmt;

use serde::Serialize;

use crate::algebroid::{LieAlgebroid, PointE, StructureJets};
use crate::expr::{Env, Expr};
use crate::jets::{EvalError, Jet1, Jet2};
use crate::linalg;
use crate::report::Report;
use crate::{Error, Result};

/// Multiplier matrices with a condition number above this are treated as
/// singular.
pub const DEGENERACY_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
enum SodeRepr {
    Explicit(Vec<Expr>),
    /// `Γ` solves `matrix · Γ = rhs` pointwise.
    Implicit { matrix: Vec<Expr>, rhs: Vec<Expr> },
}

/// A SODE section `y^α T̃_α + Γ^α Ṽ_α`, given by its fiber components `Γ^α`.
#[derive(Debug, Clone)]
pub struct SodeSection {
    repr: SodeRepr,
}

impl SodeSection {
    pub fn new(components: Vec<Expr>) -> Self {
        Self {
            repr: SodeRepr::Explicit(components),
        }
    }

    /// `Γ` defined implicitly by a linear system with row-major `n×n`
    /// matrix, solved in jet arithmetic at each point.
    pub fn from_linear_system(matrix: Vec<Expr>, rhs: Vec<Expr>) -> Self {
        assert_eq!(matrix.len(), rhs.len() * rhs.len(), "square system");
        Self {
            repr: SodeRepr::Implicit { matrix, rhs },
        }
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            SodeRepr::Explicit(c) => c.len(),
            SodeRepr::Implicit { rhs, .. } => rhs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The component expressions, when the section is given explicitly.
    pub fn components(&self) -> Option<&[Expr]> {
        match &self.repr {
            SodeRepr::Explicit(c) => Some(c),
            SodeRepr::Implicit { .. } => None,
        }
    }

    pub fn eval(&self, env: &Env) -> Result<Vec<Jet2>, EvalError> {
        match &self.repr {
            SodeRepr::Explicit(c) => c.iter().map(|g| g.eval_in(env)).collect(),
            SodeRepr::Implicit { matrix, rhs } => {
                let a: Vec<Jet2> = matrix.iter().map(|g| g.eval_in(env)).collect::<Result<_, _>>()?;
                let b: Vec<Jet2> = rhs.iter().map(|g| g.eval_in(env)).collect::<Result<_, _>>()?;
                linalg::solve_jets(&a, &b)
            }
        }
    }

    pub fn values(&self, e: &LieAlgebroid, p: &PointE) -> Result<Vec<f64>> {
        let env = e.total_env(&p.x, &p.y);
        Ok(self.eval(&env)?.iter().map(Jet2::value).collect())
    }
}

/// A fiberwise map `F: E → E*` with components `F_α(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierMap {
    pub components: Vec<Expr>,
}

impl MultiplierMap {
    pub fn new(components: Vec<Expr>) -> Self {
        Self { components }
    }

    /// `F_α = y^α`.
    pub fn identity(n: usize) -> Self {
        Self::new((1..=n).map(|a| Expr::var(format!("y{a}"))).collect())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn eval(&self, env: &Env) -> Result<Vec<Jet2>, EvalError> {
        self.components.iter().map(|f| f.eval_in(env)).collect()
    }
}

/// Components `(θ_α, F_α)` of `Θ_{Γ,F}` at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSection {
    pub theta: Vec<f64>,
    pub multiplier: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Variational,
    WeakVariational,
    Fails,
    Degenerate,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Variational => "variational",
            Classification::WeakVariational => "weak_variational",
            Classification::Fails => "fails",
            Classification::Degenerate => "degenerate",
        })
    }
}

/// Residual blocks `R1`, `R2`, `R3` and `K` with the resulting
/// classification.
#[derive(Debug, Clone, Serialize)]
pub struct HelmholtzReport {
    pub report: Report,
    /// Consequences of the conditions that are reported but never decide
    /// the classification.
    pub diagnostics: Report,
    pub classification: Classification,
    /// Largest condition number of `∂F_α/∂y^β` over the sample.
    pub max_condition: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate_at: Option<Vec<f64>>,
}

impl HelmholtzReport {
    pub fn helmholtz_passed(&self) -> bool {
        ["R1", "R2", "R3"].iter().all(|c| self.report.block_passed(c))
    }

    pub fn kernel_passed(&self) -> bool {
        self.report.block_passed("K")
    }
}

/// Everything evaluated at one point of `E`, as jets in `(x, y)`.
pub(crate) struct Frame {
    pub m: usize,
    pub n: usize,
    pub s: StructureJets,
    pub y: Vec<Jet2>,
    pub gamma: Vec<Jet2>,
}

impl Frame {
    pub fn new(e: &LieAlgebroid, gamma: &SodeSection, point: &[f64]) -> Result<(Self, Env)> {
        let p = PointE::split(e, point)?;
        if gamma.len() != e.n() {
            return Err(Error::Dimension(format!(
                "SODE with {} components on a rank {} algebroid",
                gamma.len(),
                e.n()
            )));
        }
        let env = e.total_env(&p.x, &p.y);
        let s = e.structure_jets(&env)?;
        let y = e
            .fiber_names()
            .iter()
            .map(|name| env.get(name).cloned().expect("bound"))
            .collect();
        let gamma = gamma.eval(&env)?;
        Ok((
            Self {
                m: e.m(),
                n: e.n(),
                s,
                y,
                gamma,
            },
            env,
        ))
    }

    fn yv(&self, a: usize) -> f64 {
        self.y[a].value()
    }

    /// `ρ(Γ)(f) = y^α ρ^i_α ∂f/∂x^i + Γ^α ∂f/∂y^α` for `f` given with its
    /// gradient.
    pub fn along(&self, grad: &[f64]) -> f64 {
        let mut out = 0.0;
        for a in 0..self.n {
            for i in 0..self.m {
                out += self.yv(a) * self.s.rho(i, a).value() * grad[i];
            }
            out += self.gamma[a].value() * grad[self.m + a];
        }
        out
    }

    /// `θ_α = ∂F_α/∂x^i ρ^i_β y^β + ∂F_α/∂y^β Γ^β + C^γ_αβ F_γ y^β` with its
    /// first derivatives.
    pub fn theta(&self, f: &[Jet2]) -> Vec<Jet1> {
        let (m, n) = (self.m, self.n);
        let d = m + n;
        let y: Vec<Jet1> = self.y.iter().map(Jet2::to_jet1).collect();
        let gamma: Vec<Jet1> = self.gamma.iter().map(Jet2::to_jet1).collect();
        // ρ^i_β y^β for each i
        let flow: Vec<Jet1> = (0..m)
            .map(|i| {
                let mut acc = Jet1::constant(0.0, d);
                for b in 0..n {
                    acc.add_product(&self.s.rho(i, b).to_jet1(), &y[b]);
                }
                acc
            })
            .collect();
        (0..n)
            .map(|a| {
                let mut acc = Jet1::constant(0.0, d);
                for i in 0..m {
                    acc.add_product(&f[a].partial(i), &flow[i]);
                }
                for b in 0..n {
                    acc.add_product(&f[a].partial(m + b), &gamma[b]);
                }
                for g in 0..n {
                    let fg = f[g].to_jet1();
                    for b in 0..n {
                        let c = self.s.c(g, a, b);
                        if c.is_constant() && c.value() == 0.0 {
                            continue;
                        }
                        acc.add_product(&(&c.to_jet1() * &fg), &y[b]);
                    }
                }
                acc
            })
            .collect()
    }

    /// Fiber Jacobian `g_αβ = ∂F_α/∂y^β`, row-major.
    pub fn fiber_jacobian(&self, f: &[Jet2]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        (0..n)
            .flat_map(|a| (0..n).map(move |b| f[a].d(m + b)))
            .collect()
    }
}

/// Closedness residuals of a covector `μ_α T̃^α + ν_α Ṽ^α` on the
/// prolongation, as full `n×n` tables of `(residual, scale)`.
pub(crate) struct Closedness {
    pub n: usize,
    pub r1: Vec<(f64, f64)>,
    pub r2: Vec<(f64, f64)>,
    pub r3: Vec<(f64, f64)>,
}

fn sum_terms(terms: impl IntoIterator<Item = f64>) -> (f64, f64) {
    terms
        .into_iter()
        .fold((0.0, 0.0), |(r, s), t| (r + t, s + t.abs()))
}

pub(crate) fn closedness(s: &StructureJets, mu: &[Jet1], nu: &[Jet1]) -> Closedness {
    let (m, n) = (s.m, s.n);
    let mut r1 = vec![(0.0, 0.0); n * n];
    let mut r2 = vec![(0.0, 0.0); n * n];
    let mut r3 = vec![(0.0, 0.0); n * n];
    for b in 0..n {
        for g in 0..n {
            r1[b * n + g] = sum_terms([nu[b].grad[m + g], -nu[g].grad[m + b]]);
            r2[b * n + g] = sum_terms(
                std::iter::once(mu[g].grad[m + b])
                    .chain((0..m).map(|i| -s.rho(i, g).value() * nu[b].grad[i])),
            );
            r3[b * n + g] = sum_terms(
                (0..m)
                    .flat_map(|i| {
                        [
                            s.rho(i, b).value() * mu[g].grad[i],
                            -s.rho(i, g).value() * mu[b].grad[i],
                        ]
                    })
                    .chain((0..n).map(|a| -mu[a].value * s.c(a, b, g).value())),
            );
        }
    }
    Closedness { n, r1, r2, r3 }
}

impl Closedness {
    /// Appends `R1`, `R3` for `β < γ` and `R2` for all pairs.
    pub fn push_into(&self, report: &mut Report, point: &[f64], labels: Option<&[usize]>) {
        let n = self.n;
        let label = |b: usize, g: usize| {
            labels.map(|kernel| {
                let kind = |k: usize| if kernel.contains(&k) { 'v' } else { 'h' };
                format!("{}{}", kind(b), kind(g))
            })
        };
        for b in 0..n {
            for g in 0..n {
                let (r, s) = self.r1[b * n + g];
                if b < g {
                    report.push("R1", &[b, g], point, r, s).label = label(b, g);
                }
            }
        }
        for b in 0..n {
            for g in 0..n {
                let (r, s) = self.r2[b * n + g];
                report.push("R2", &[b, g], point, r, s).label = label(b, g);
            }
        }
        for b in 0..n {
            for g in (b + 1)..n {
                let (r, s) = self.r3[b * n + g];
                report.push("R3", &[b, g], point, r, s).label = label(b, g);
            }
        }
    }
}

fn check_multiplier(e: &LieAlgebroid, f: &MultiplierMap) -> Result<()> {
    if f.len() != e.n() {
        return Err(Error::Dimension(format!(
            "multiplier with {} components on a rank {} algebroid",
            f.len(),
            e.n()
        )));
    }
    Ok(())
}

/// `ρ^τ(Γ)(f) = y^α ρ^i_α ∂f/∂x^i + Γ^α ∂f/∂y^α` at a point.
pub fn sode_derivative(e: &LieAlgebroid, gamma: &SodeSection, f: &Expr, point: &[f64]) -> Result<f64> {
    let (frame, env) = Frame::new(e, gamma, point)?;
    let fj = f.eval_in(&env)?;
    Ok(frame.along(fj.grad()))
}

/// Components of `Θ_{Γ,F}` at a point.
pub fn theta_components(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    point: &[f64],
) -> Result<ThetaSection> {
    check_multiplier(e, f)?;
    let (frame, env) = Frame::new(e, gamma, point)?;
    let fj = f.eval(&env)?;
    Ok(ThetaSection {
        theta: frame.theta(&fj).iter().map(|t| t.value).collect(),
        multiplier: fj.iter().map(Jet2::value).collect(),
    })
}

/// Runs the Helmholtz conditions and the kernel condition over the sample
/// and classifies `Γ` relative to the given multiplier map.
pub fn classify(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<HelmholtzReport> {
    check_multiplier(e, f)?;
    let m = e.m();
    let n = e.n();
    let base: Vec<Vec<f64>> = points
        .iter()
        .map(|p| PointE::split(e, p).map(|p| p.x))
        .collect::<Result<_>>()?;
    let kernels = e.regular_kernels(&base)?;
    let labels = e.kernel_indices();
    let mut report = Report::new(tol);
    let mut diagnostics = Report::new(tol);
    let mut max_condition: f64 = 0.0;
    let mut degenerate_at = None;
    let mut thetas = Vec::with_capacity(points.len());
    for (point, kernel) in points.iter().zip(&kernels) {
        let evaluated = Frame::new(e, gamma, point).and_then(|(frame, env)| {
            let fj = f.eval(&env)?;
            Ok((frame, fj))
        });
        let (frame, fj) = match evaluated {
            Ok(v) => v,
            Err(Error::Eval(err)) => {
                for c in ["R1", "R2", "R3", "K"] {
                    report.push_error(c, point, &err);
                }
                thetas.push(None);
                continue;
            }
            Err(err) => return Err(err),
        };
        let cond = linalg::condition_number(n, &frame.fiber_jacobian(&fj));
        max_condition = max_condition.max(cond);
        if !(cond <= DEGENERACY_CONDITION) && degenerate_at.is_none() {
            degenerate_at = Some(point.clone());
        }
        let theta = frame.theta(&fj);
        let nu: Vec<Jet1> = fj.iter().map(Jet2::to_jet1).collect();
        closedness(&frame.s, &theta, &nu).push_into(&mut report, point, labels);
        for (k, z) in kernel.vectors.iter().enumerate() {
            let (r, s) = sum_terms(theta.iter().zip(z).map(|(t, z)| t.value * z));
            let idx = labels.map_or(k, |kernel| kernel[k]);
            report.push("K", &[idx], point, r, s);
        }
        thetas.push(Some(theta));
    }
    let helmholtz = ["R1", "R2", "R3"].iter().all(|c| report.block_passed(c));
    if helmholtz {
        if let Some(kernel) = labels {
            for (point, theta) in points.iter().zip(&thetas) {
                let Some(theta) = theta else { continue };
                for &i in kernel {
                    for b in 0..n {
                        diagnostics.push("theta_I_y", &[i, b], point, theta[i].grad[m + b], 0.0);
                    }
                }
            }
        }
    }
    let classification = if degenerate_at.is_some() {
        Classification::Degenerate
    } else if !helmholtz {
        Classification::Fails
    } else if !report.block_passed("K") {
        Classification::WeakVariational
    } else {
        Classification::Variational
    };
    Ok(HelmholtzReport {
        report,
        diagnostics,
        classification,
        max_condition,
        degenerate_at,
    })
}

fn select(report: Report, blocks: &[&str]) -> Report {
    let mut out = Report::new(report.tolerance);
    let mut keep = Report::new(report.tolerance);
    keep.entries = report
        .entries
        .into_iter()
        .filter(|e| blocks.contains(&e.condition.as_str()))
        .collect();
    keep.errors = report
        .errors
        .into_iter()
        .filter(|e| blocks.contains(&e.condition.as_str()))
        .collect();
    out.merge(keep);
    out
}

/// The residual blocks `R1`, `R2`, `R3` of `dΘ_{Γ,F} = 0`.
pub fn helmholtz_residuals(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<Report> {
    Ok(select(classify(e, gamma, f, points, tol)?.report, &["R1", "R2", "R3"]))
}

/// The kernel block `K`: `θ` contracted with a basis of `Ker ρ`.
pub fn kernel_condition(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<Report> {
    Ok(select(classify(e, gamma, f, points, tol)?.report, &["K"]))
}

/// The connection coefficients `Λ`, `D` and the tensor `Φ` of a SODE,
/// each indexed `[γ*n + η]` (upper index first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectionQuantities {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub d: Vec<f64>,
    pub phi: Vec<f64>,
}

struct ConnectionJets {
    lambda: Vec<Jet1>,
    d: Vec<Jet1>,
    phi: Vec<f64>,
}

fn connection_jets(frame: &Frame) -> ConnectionJets {
    let (m, n) = (frame.m, frame.n);
    let dim = m + n;
    let s = &frame.s;
    let y: Vec<Jet1> = frame.y.iter().map(Jet2::to_jet1).collect();
    // C^γ_αβ y^β as jets
    let cy = |g: usize, a: usize| {
        let mut acc = Jet1::constant(0.0, dim);
        for b in 0..n {
            acc.add_product(&s.c(g, a, b).to_jet1(), &y[b]);
        }
        acc
    };
    let mut lambda = Vec::with_capacity(n * n);
    let mut d = Vec::with_capacity(n * n);
    for g in 0..n {
        for a in 0..n {
            let dg = frame.gamma[g].partial(m + a);
            lambda.push((&dg - &cy(g, a)).scale(0.5));
            // y^β C^γ_βη = −C^γ_ηβ y^β
            d.push((&cy(g, a) + &dg).scale(-0.5));
        }
    }
    let mut phi = vec![0.0; n * n];
    for g in 0..n {
        for eta in 0..n {
            let mut v = frame.along(&lambda[g * n + eta].grad);
            for nu in 0..n {
                v += lambda[nu * n + eta].value * d[g * n + nu].value;
            }
            for i in 0..m {
                v -= s.rho(i, eta).value() * frame.gamma[g].d(i);
            }
            for a in 0..n {
                for nu in 0..n {
                    v += frame.y[a].value() * s.c(nu, eta, a).value() * lambda[g * n + nu].value;
                }
            }
            phi[g * n + eta] = v;
        }
    }
    ConnectionJets { lambda, d, phi }
}

/// `Λ^γ_α = ½(∂Γ^γ/∂y^α − C^γ_αβ y^β)`, `D^γ_η = ½(y^β C^γ_βη − ∂Γ^γ/∂y^η)`
/// and `Φ` at a point.
pub fn connection_quantities(e: &LieAlgebroid, gamma: &SodeSection, point: &[f64]) -> Result<ConnectionQuantities> {
    let (frame, _) = Frame::new(e, gamma, point)?;
    let q = connection_jets(&frame);
    Ok(ConnectionQuantities {
        n: e.n(),
        lambda: q.lambda.iter().map(|l| l.value).collect(),
        d: q.d.iter().map(|l| l.value).collect(),
        phi: q.phi,
    })
}

/// The equivalent form of the conditions built from the horizontal lifts:
/// blocks `P1`..`P4`.
pub fn lift_form_residuals(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<Report> {
    check_multiplier(e, f)?;
    let (m, n) = (e.m(), e.n());
    let mut report = Report::new(tol);
    for point in points {
        let evaluated = Frame::new(e, gamma, point).and_then(|(frame, env)| {
            let fj = f.eval(&env)?;
            Ok((frame, fj))
        });
        let (frame, fj) = match evaluated {
            Ok(v) => v,
            Err(Error::Eval(err)) => {
                for c in ["P1", "P2", "P3", "P4"] {
                    report.push_error(c, point, &err);
                }
                continue;
            }
            Err(err) => return Err(err),
        };
        let s = &frame.s;
        let q = connection_jets(&frame);
        let g = frame.fiber_jacobian(&fj);
        // A_γα = ρ(H_γ)(F_α) − ½ F_ν C^ν_γα
        let a_terms = |gg: usize, a: usize| -> Vec<f64> {
            let mut t = Vec::new();
            for i in 0..m {
                t.push(s.rho(i, gg).value() * fj[a].d(i));
            }
            for nu in 0..n {
                t.push(q.lambda[nu * n + gg].value * fj[a].d(m + nu));
                t.push(-0.5 * fj[nu].value() * s.c(nu, gg, a).value());
            }
            t
        };
        for eta in 0..n {
            for b in (eta + 1)..n {
                let (r, sc) = sum_terms([fj[eta].d(m + b), -fj[b].d(m + eta)]);
                report.push("P1", &[eta, b], point, -r, sc);
            }
        }
        for eta in 0..n {
            for b in (eta + 1)..n {
                let terms = a_terms(eta, b)
                    .into_iter()
                    .chain(a_terms(b, eta).into_iter().map(|t| -t));
                let (r, sc) = sum_terms(terms);
                report.push("P2", &[eta, b], point, r, sc);
            }
        }
        for eta in 0..n {
            for b in (eta + 1)..n {
                let terms = (0..n).flat_map(|gg| {
                    [
                        g[b * n + gg] * q.phi[gg * n + eta],
                        -g[eta * n + gg] * q.phi[gg * n + b],
                    ]
                });
                let (r, sc) = sum_terms(terms);
                report.push("P3", &[eta, b], point, r, sc);
            }
        }
        for eta in 0..n {
            for b in 0..n {
                let dg = fj[eta].partial(m + b);
                let terms = std::iter::once(frame.along(&dg.grad)).chain((0..n).flat_map(|gg| {
                    [
                        -g[gg * n + b] * q.d[gg * n + eta].value,
                        -g[eta * n + gg] * q.d[gg * n + b].value,
                    ]
                }));
                let (r, sc) = sum_terms(terms);
                report.push("P4", &[eta, b], point, r, sc);
            }
        }
    }
    Ok(report)
}

/// Reduced conditions on an Atiyah algebroid and the blocks implied by
/// `θ_a = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct AtiyahReducedReport {
    pub reduced: Report,
    pub implied: Report,
    /// `θ_a = 0` failing, or all implied blocks passing.
    pub implication_holds: bool,
}

/// On an Atiyah algebroid with horizontal indices `i, j` and vertical
/// `a, b`: `∂F_β/∂y^γ` symmetric, `∂θ_j/∂y^β = ∂F_β/∂x^j`,
/// `∂θ_i/∂x^j = ∂θ_j/∂x^i` and `θ_a = 0`.
pub fn atiyah_reduced_residuals(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<AtiyahReducedReport> {
    let data = e
        .atiyah_data()
        .ok_or_else(|| Error::Precondition("reduced conditions need an Atiyah algebroid".into()))?;
    check_multiplier(e, f)?;
    let (m, n, ng) = (e.m(), e.n(), data.group_dim());
    let c = data.constants();
    let mut reduced = Report::new(tol);
    let mut implied = Report::new(tol);
    for point in points {
        let evaluated = Frame::new(e, gamma, point).and_then(|(frame, env)| {
            let fj = f.eval(&env)?;
            let conn: Vec<f64> = (0..ng * m)
                .map(|k| data.connection(k / m, k % m).value_in(&env))
                .collect::<Result<_, _>>()?;
            Ok((frame, fj, conn))
        });
        let (frame, fj, conn) = match evaluated {
            Ok(v) => v,
            Err(Error::Eval(err)) => {
                reduced.push_error("theta_a", point, &err);
                continue;
            }
            Err(err) => return Err(err),
        };
        let theta = frame.theta(&fj);
        for b in 0..n {
            for g in (b + 1)..n {
                let (r, s) = sum_terms([fj[b].d(m + g), -fj[g].d(m + b)]);
                reduced.push("R1", &[b, g], point, r, s);
            }
        }
        for j in 0..m {
            for b in 0..n {
                let (r, s) = sum_terms([theta[j].grad[m + b], -fj[b].d(j)]);
                reduced.push("theta_y", &[j, b], point, r, s);
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let (r, s) = sum_terms([theta[i].grad[j], -theta[j].grad[i]]);
                reduced.push("theta_x", &[i, j], point, r, s);
            }
        }
        for a in 0..ng {
            reduced.push("theta_a", &[m + a], point, theta[m + a].value, 0.0);
        }
        for b in 0..ng {
            for beta in 0..n {
                implied.push("theta_a_y", &[m + b, beta], point, theta[m + b].grad[m + beta], 0.0);
            }
            for i in 0..m {
                let terms = std::iter::once(theta[m + b].grad[i]).chain((0..ng).flat_map(|cc| {
                    let theta = &theta;
                    let conn = &conn;
                    (0..ng).map(move |dd| -theta[m + cc].value * c.get(cc, b, dd) * conn[dd * m + i])
                }));
                let (r, s) = sum_terms(terms);
                implied.push("theta_a_x", &[m + b, i], point, r, s);
            }
        }
        for a in 0..ng {
            for b in (a + 1)..ng {
                let (r, s) = sum_terms((0..ng).map(|cc| theta[m + cc].value * c.get(cc, a, b)));
                implied.push("theta_c", &[m + a, m + b], point, r, s);
            }
        }
    }
    let implication_holds = !reduced.block_passed("theta_a") || implied.passed;
    Ok(AtiyahReducedReport {
        reduced,
        implied,
        implication_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::StructureConstants;
    use crate::expr::parse;

    fn exprs(src: &[&str]) -> Vec<Expr> {
        src.iter().map(|s| parse(s).unwrap()).collect()
    }

    fn se2_weak() -> (LieAlgebroid, SodeSection, MultiplierMap) {
        (
            LieAlgebroid::lie_algebra(&StructureConstants::se2()),
            SodeSection::new(exprs(&["y2*y3", "-(y1*y3)", "1"])),
            MultiplierMap::identity(3),
        )
    }

    #[test]
    fn se2_weak_theta_and_classification() {
        let (e, g, f) = se2_weak();
        let th = theta_components(&e, &g, &f, &[0.3, -0.7, 0.5]).unwrap();
        assert_eq!(th.theta, vec![0.0, 0.0, 1.0]);
        let pts = vec![vec![0.3, -0.7, 0.5], vec![1.0, 2.0, -3.0]];
        let h = classify(&e, &g, &f, &pts, 1e-12).unwrap();
        assert!(h.helmholtz_passed());
        assert_eq!(h.report.max_abs("K"), 1.0);
        assert_eq!(h.classification, Classification::WeakVariational);
        let k: Vec<_> = h.report.block("K").filter(|e| e.residual != 0.0).collect();
        assert!(k.iter().all(|e| e.indices == vec![3]));
    }

    #[test]
    fn damped_identity_fails() {
        let e = LieAlgebroid::tangent_bundle(1);
        let g = SodeSection::new(exprs(&["-y1"]));
        let f = MultiplierMap::identity(1);
        let h = classify(&e, &g, &f, &[vec![0.2, 0.5]], 1e-8).unwrap();
        assert_eq!(h.classification, Classification::Fails);
        // ∂θ/∂y = ∂Γ/∂y = -1 while ∂F/∂x = 0
        assert_eq!(h.report.max_abs("R2"), 1.0);
        let p = lift_form_residuals(&e, &g, &f, &[vec![0.2, 0.5]], 1e-8).unwrap();
        assert!(!p.passed);
    }

    #[test]
    fn sode_derivative_examples() {
        let (e, g, _) = se2_weak();
        let pt = [0.3, -0.7, 0.5];
        assert_eq!(sode_derivative(&e, &g, &parse("y1").unwrap(), &pt).unwrap(), -0.35);
        let t = LieAlgebroid::tangent_bundle(1);
        let z = SodeSection::new(exprs(&["0"]));
        assert_eq!(sode_derivative(&t, &z, &parse("x1").unwrap(), &[0.1, 0.4]).unwrap(), 0.4);
    }

    #[test]
    fn connection_quantities_basic() {
        let t = LieAlgebroid::tangent_bundle(2);
        let g = SodeSection::new(exprs(&["-2*y1", "-2*y2"]));
        let q = connection_quantities(&t, &g, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(q.lambda, vec![-1.0, 0.0, 0.0, -1.0]);
        for (l, d) in q.lambda.iter().zip(&q.d) {
            assert_eq!(l + d, 0.0);
        }
        let z = SodeSection::new(exprs(&["0", "0"]));
        let q = connection_quantities(&LieAlgebroid::tangent_bundle(2), &z, &[0.0; 4]).unwrap();
        assert!(q.phi.iter().chain(&q.lambda).chain(&q.d).all(|v| *v == 0.0));
    }

    #[test]
    fn se2_weak_lift_form_passes() {
        let (e, g, f) = se2_weak();
        let p = lift_form_residuals(&e, &g, &f, &[vec![0.3, -0.7, 0.5]], 1e-12).unwrap();
        assert!(p.passed, "{}", p.max_abs_all());
    }

    #[test]
    fn reduced_set_rejects_non_atiyah() {
        let (e, g, f) = se2_weak();
        assert!(matches!(
            atiyah_reduced_residuals(&e, &g, &f, &[], 1e-8),
            Err(Error::Precondition(_))
        ));
    }
}
