//! Morphisms of Lie algebroids that are linear on fibers, their prolonged
//! maps, and the transfer of (weak) variationality along them.

use serde::Serialize;

use crate::algebroid::{LieAlgebroid, PointE};
use crate::expr::{Env, Expr};
use crate::jets::{Jet1, Jet2};
use crate::prolongation::{CovectorField, ProlongCovector, ProlongVector, ThetaField};
use crate::report::Report;
use crate::sode::{self, closedness, Classification, HelmholtzReport, MultiplierMap, SodeSection};
use crate::{Error, Result};

/// A bundle map `E → E'` over `f`, given by `y' = Ψ(x) y`.
#[derive(Debug, Clone)]
pub struct AlgebroidMorphism {
    pub source: LieAlgebroid,
    pub target: LieAlgebroid,
    /// `f^j(x)`, one per target base coordinate.
    pub base_map: Vec<Expr>,
    /// `Ψ^{α'}_α(x)`, row-major `n' × n`.
    pub fiber_map: Vec<Expr>,
}

impl AlgebroidMorphism {
    pub fn new(
        source: LieAlgebroid,
        target: LieAlgebroid,
        base_map: Vec<Expr>,
        fiber_map: Vec<Vec<Expr>>,
    ) -> Result<Self> {
        if base_map.len() != target.m() {
            return Err(Error::Dimension(format!(
                "base map has {} components for a target base of dimension {}",
                base_map.len(),
                target.m()
            )));
        }
        if fiber_map.len() != target.n() || fiber_map.iter().any(|r| r.len() != source.n()) {
            return Err(Error::Dimension(format!(
                "fiber map must be {} rows of {} entries",
                target.n(),
                source.n()
            )));
        }
        let fiber_map: Vec<Expr> = fiber_map.into_iter().flatten().collect();
        let allowed = source.base_names();
        for e in base_map.iter().chain(&fiber_map) {
            if let Some(v) = e.free_vars().into_iter().find(|v| !allowed.contains(v)) {
                return Err(Error::Model(format!(
                    "morphism entry `{e}` references `{v}`; only source base coordinates are allowed"
                )));
            }
        }
        Ok(Self {
            source,
            target,
            base_map,
            fiber_map,
        })
    }

    pub fn identity(e: &LieAlgebroid) -> Self {
        let n = e.n();
        Self {
            source: e.clone(),
            target: e.clone(),
            base_map: e.base_names().into_iter().map(Expr::var).collect(),
            fiber_map: (0..n * n)
                .map(|k| Expr::num(if k / n == k % n { 1.0 } else { 0.0 }))
                .collect(),
        }
    }

    /// The tangent map of a diffeomorphism `f` of `R^m`: `Ψ = ∂f/∂x`.
    pub fn tangent_lift(base_map: Vec<Expr>) -> Result<Self> {
        let m = base_map.len();
        let names = crate::base_names(m);
        let jac = base_map
            .iter()
            .map(|f| names.iter().map(|x| f.derivative(x)).collect())
            .collect();
        Self::new(
            LieAlgebroid::tangent_bundle(m),
            LieAlgebroid::tangent_bundle(m),
            base_map,
            jac,
        )
    }

    pub fn psi(&self, target_index: usize, source_index: usize) -> &Expr {
        &self.fiber_map[target_index * self.source.n() + source_index]
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &AlgebroidMorphism) -> Result<AlgebroidMorphism> {
        if next.source.m() != self.target.m() || next.source.n() != self.target.n() {
            return Err(Error::Dimension("morphisms do not compose".into()));
        }
        let mid_names = self.target.base_names();
        let subst = |e: &Expr| {
            e.substitute(&|name: &str| {
                mid_names
                    .iter()
                    .position(|n| n == name)
                    .map(|j| self.base_map[j].clone())
            })
        };
        let (n, k) = (self.source.n(), self.target.n());
        let fiber_map = (0..next.target.n())
            .map(|a2| {
                (0..n)
                    .map(|a| {
                        (0..k).fold(Expr::num(0.0), |acc, a1| {
                            acc + subst(next.psi(a2, a1)) * self.psi(a1, a).clone()
                        })
                    })
                    .collect()
            })
            .collect();
        Self::new(
            self.source.clone(),
            next.target.clone(),
            next.base_map.iter().map(subst).collect(),
            fiber_map,
        )
    }

    fn eval_maps(&self, env: &Env) -> Result<(Vec<Jet2>, Vec<Jet2>)> {
        let f = self.base_map.iter().map(|e| e.eval_in(env)).collect::<Result<_, _>>()?;
        let psi = self.fiber_map.iter().map(|e| e.eval_in(env)).collect::<Result<_, _>>()?;
        Ok((f, psi))
    }

    /// Target point `(f(x), Ψ(x) y)` as jets in the source coordinates,
    /// bound to the target's variable names.
    fn target_env(&self, env: &Env, y: &[Jet2], f: &[Jet2], psi: &[Jet2]) -> Env {
        let n = self.source.n();
        let mut out = Env::new(env.dim());
        for (name, fj) in self.target.base_names().into_iter().zip(f) {
            out.bind(name, fj.clone());
        }
        for (a2, name) in self.target.fiber_names().into_iter().enumerate() {
            let mut acc = Jet2::zero(env.dim());
            for a in 0..n {
                acc = &acc + &(&psi[a2 * n + a] * &y[a]);
            }
            out.bind(name, acc);
        }
        out
    }

    /// The image of a point of `E` in `E'`.
    pub fn map_point(&self, point: &[f64]) -> Result<Vec<f64>> {
        let p = PointE::split(&self.source, point)?;
        let env = self.source.base_env(&p.x);
        let (f, psi) = self.eval_maps(&env)?;
        let n = self.source.n();
        let mut out: Vec<f64> = f.iter().map(Jet2::value).collect();
        for a2 in 0..self.target.n() {
            out.push((0..n).map(|a| psi[a2 * n + a].value() * p.y[a]).sum());
        }
        Ok(out)
    }
}

fn sum_terms(terms: impl IntoIterator<Item = f64>) -> (f64, f64) {
    terms
        .into_iter()
        .fold((0.0, 0.0), |(r, s), t| (r + t, s + t.abs()))
}

/// Anchor compatibility `ρ'^j_{α'}(f) Ψ^{α'}_α = ∂f^j/∂x^i ρ^i_α` and
/// commutation of pullback with the differential on the dual basis,
/// `d(Ψ^{α'}_α e^α) = Ψ* d' e'^{α'}`, at base points of the source.
pub fn check_morphism(psi: &AlgebroidMorphism, points: &[Vec<f64>], tol: f64) -> Result<Report> {
    let (src, tgt) = (&psi.source, &psi.target);
    let (m, n, m2, n2) = (src.m(), src.n(), tgt.m(), tgt.n());
    let mut report = Report::new(tol);
    for x in points {
        if x.len() != m {
            return Err(Error::Dimension(format!("base point of length {} for m = {m}", x.len())));
        }
        let env = src.base_env(x);
        let evaluated = (|| -> Result<_> {
            let s = src.structure_jets(&env)?;
            let (f, ps) = psi.eval_maps(&env)?;
            let mut tenv = Env::new(m);
            for (name, fj) in tgt.base_names().into_iter().zip(&f) {
                tenv.bind(name, fj.clone());
            }
            let t = tgt.structure_jets(&tenv)?;
            Ok((s, f, ps, t))
        })();
        let (s, f, ps, t) = match evaluated {
            Ok(v) => v,
            Err(Error::Eval(err)) => {
                report.push_error("anchor", x, &err);
                continue;
            }
            Err(err) => return Err(err),
        };
        for j in 0..m2 {
            for a in 0..n {
                let terms = (0..n2)
                    .map(|a2| t.rho(j, a2).value() * ps[a2 * n + a].value())
                    .chain((0..m).map(|i| -f[j].d(i) * s.rho(i, a).value()));
                let (r, sc) = sum_terms(terms);
                report.push("anchor", &[j, a], x, r, sc);
            }
        }
        for a2 in 0..n2 {
            for b in 0..n {
                for g in (b + 1)..n {
                    let mut terms = Vec::new();
                    for i in 0..m {
                        terms.push(s.rho(i, b).value() * ps[a2 * n + g].d(i));
                        terms.push(-s.rho(i, g).value() * ps[a2 * n + b].d(i));
                    }
                    for a in 0..n {
                        terms.push(-ps[a2 * n + a].value() * s.c(a, b, g).value());
                    }
                    for b2 in 0..n2 {
                        for g2 in 0..n2 {
                            let c = t.c(a2, b2, g2).value();
                            if c != 0.0 {
                                terms.push(c * ps[b2 * n + b].value() * ps[g2 * n + g].value());
                            }
                        }
                    }
                    let (r, sc) = sum_terms(terms);
                    report.push("bracket", &[a2, b, g], x, r, sc);
                }
            }
        }
    }
    Ok(report)
}

/// Whether `LΨ ∘ Γ = Γ' ∘ Ψ` at points of the source.
pub fn sode_related(
    psi: &AlgebroidMorphism,
    gamma: &SodeSection,
    gamma_target: &SodeSection,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<Report> {
    let (src, tgt) = (&psi.source, &psi.target);
    let (m, n, n2) = (src.m(), src.n(), tgt.n());
    let mut report = Report::new(tol);
    for point in points {
        let p = PointE::split(src, point)?;
        let env = src.total_env(&p.x, &p.y);
        let evaluated = (|| -> Result<_> {
            let s = src.structure_jets(&env)?;
            let (f, ps) = psi.eval_maps(&env)?;
            let y: Vec<Jet2> = src.fiber_names().iter().map(|n| env.get(n).cloned().expect("bound")).collect();
            let tenv = psi.target_env(&env, &y, &f, &ps);
            let g = gamma.eval(&env)?;
            let g2 = gamma_target.eval(&tenv)?;
            let y2: Vec<f64> = tgt
                .fiber_names()
                .iter()
                .map(|n| tenv.get(n).expect("bound").value())
                .collect();
            Ok((s, ps, g, g2, y2))
        })();
        let (s, ps, g, g2, y2) = match evaluated {
            Ok(v) => v,
            Err(Error::Eval(err)) => {
                report.push_error("V", point, &err);
                continue;
            }
            Err(err) => return Err(err),
        };
        for a2 in 0..n2 {
            // automatic for fiber-linear maps: the image of y is Ψ y
            let (r, sc) = sum_terms((0..n).map(|a| ps[a2 * n + a].value() * p.y[a]).chain([-y2[a2]]));
            report.push("T", &[a2], point, r, sc);
            let mut terms = vec![g2[a2].value()];
            for b in 0..n {
                for i in 0..m {
                    let flow = s.rho(i, b).value() * p.y[b];
                    for a in 0..n {
                        terms.push(-flow * ps[a2 * n + a].d(i) * p.y[a]);
                    }
                }
                terms.push(-ps[a2 * n + b].value() * g[b].value());
            }
            let (r, sc) = sum_terms(terms);
            report.push("V", &[a2], point, r, sc);
        }
    }
    Ok(report)
}

/// `LΨ(z T̃ + v Ṽ) = Ψz T̃' + (ρ^i_α z^α ∂_iΨ y + Ψ v) Ṽ'`.
pub fn lift_vector(psi: &AlgebroidMorphism, p: &ProlongVector) -> Result<ProlongVector> {
    let (src, tgt) = (&psi.source, &psi.target);
    let (m, n, n2) = (src.m(), src.n(), tgt.n());
    let env = src.base_env(&p.base.x);
    let (_, ps) = psi.eval_maps(&env)?;
    let rho = src.anchor_at(&p.base.x)?;
    let image = psi.map_point(&p.base.flat())?;
    let mut z2 = vec![0.0; n2];
    let mut v2 = vec![0.0; n2];
    for a2 in 0..n2 {
        for a in 0..n {
            z2[a2] += ps[a2 * n + a].value() * p.z[a];
            v2[a2] += ps[a2 * n + a].value() * p.v[a];
            for i in 0..m {
                let flow: f64 = (0..n).map(|b| rho[i * n + b] * p.z[b]).sum();
                v2[a2] += flow * ps[a2 * n + a].d(i) * p.base.y[a];
            }
        }
    }
    Ok(ProlongVector {
        base: PointE::split(tgt, &image)?,
        z: z2,
        v: v2,
    })
}

/// `(LΨ)*Θ'` at a point of the source.
pub fn pullback_covector(
    psi: &AlgebroidMorphism,
    theta_target: &dyn CovectorField,
    point: &[f64],
) -> Result<ProlongCovector> {
    let (src, tgt) = (&psi.source, &psi.target);
    let (m, n, n2) = (src.m(), src.n(), tgt.n());
    let d = m + n;
    let p = PointE::split(src, point)?;
    let env = src.total_env(&p.x, &p.y);
    let s = src.structure_jets(&env)?;
    let (f, ps) = psi.eval_maps(&env)?;
    let y: Vec<Jet2> = src.fiber_names().iter().map(|n| env.get(n).cloned().expect("bound")).collect();
    let tenv = psi.target_env(&env, &y, &f, &ps);
    // the map (x, y) ↦ (f(x), Ψ(x) y) with its first derivatives
    let phi: Vec<Jet1> = tgt
        .base_names()
        .into_iter()
        .chain(tgt.fiber_names())
        .map(|name| tenv.get(&name).expect("bound").to_jet1())
        .collect();
    let image: Vec<f64> = phi.iter().map(|j| j.value).collect();
    let outer = theta_target.eval_at(&image)?;
    let mu2: Vec<Jet1> = outer.mu.iter().map(|j| j.compose(&phi)).collect();
    let nu2: Vec<Jet1> = outer.nu.iter().map(|j| j.compose(&phi)).collect();
    let y1: Vec<Jet1> = y.iter().map(Jet2::to_jet1).collect();
    let mut mu = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    for a in 0..n {
        let mut ma = Jet1::constant(0.0, d);
        let mut na = Jet1::constant(0.0, d);
        for a2 in 0..n2 {
            let pj = ps[a2 * n + a].to_jet1();
            ma.add_product(&pj, &mu2[a2]);
            na.add_product(&pj, &nu2[a2]);
            // ρ^i_α ∂_iΨ^{α'}_β y^β
            let mut w = Jet1::constant(0.0, d);
            for i in 0..m {
                let rho = s.rho(i, a).to_jet1();
                for b in 0..n {
                    w.add_product(&(&rho * &ps[a2 * n + b].partial(i)), &y1[b]);
                }
            }
            ma.add_product(&w, &nu2[a2]);
        }
        mu.push(ma);
        nu.push(na);
    }
    Ok(ProlongCovector { mu, nu })
}

/// A covector field pulled back along a morphism.
pub struct Pullback<'a> {
    pub morphism: &'a AlgebroidMorphism,
    pub inner: &'a dyn CovectorField,
}

impl CovectorField for Pullback<'_> {
    fn algebroid(&self) -> &LieAlgebroid {
        &self.morphism.source
    }

    fn eval_at(&self, point: &[f64]) -> Result<ProlongCovector> {
        pullback_covector(self.morphism, self.inner, point)
    }
}

/// Outcome of transferring the conditions from `E'` to `E`.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    /// Classification of `(Γ', F')` at the image points.
    pub target: HelmholtzReport,
    /// Closedness (and, when `Γ'` is variational, kernel) residuals of the
    /// pulled-back section on `E`.
    pub pulled_back: Report,
    /// Whether the conclusion matches the premise: closed when `Γ'` is weak
    /// variational, closed and kernel-annihilating when variational.
    pub conclusion_holds: bool,
}

/// Classifies `(Γ', F')` on the target, pulls `Θ_{Γ',F'}` back to the
/// source and checks the source-side conditions it must satisfy.
pub fn reduction_check(
    psi: &AlgebroidMorphism,
    gamma_target: &SodeSection,
    f_target: &MultiplierMap,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ReductionReport> {
    let src = &psi.source;
    let images: Vec<Vec<f64>> = points.iter().map(|p| psi.map_point(p)).collect::<Result<_>>()?;
    let target = sode::classify(&psi.target, gamma_target, f_target, &images, tol)?;
    let theta = ThetaField {
        e: &psi.target,
        gamma: gamma_target,
        f: f_target,
    };
    let want_kernel = target.classification == Classification::Variational;
    let base: Vec<Vec<f64>> = points
        .iter()
        .map(|p| PointE::split(src, p).map(|p| p.x))
        .collect::<Result<_>>()?;
    let kernels = src.regular_kernels(&base)?;
    let mut pulled_back = Report::new(tol);
    for (point, kernel) in points.iter().zip(&kernels) {
        let p = PointE::split(src, point)?;
        let s = src.structure_jets(&src.total_env(&p.x, &p.y))?;
        let cov = match pullback_covector(psi, &theta, point) {
            Ok(c) => c,
            Err(Error::Eval(err)) => {
                pulled_back.push_error("R1", point, &err);
                continue;
            }
            Err(err) => return Err(err),
        };
        closedness(&s, &cov.mu, &cov.nu).push_into(&mut pulled_back, point, None);
        if want_kernel {
            for (k, z) in kernel.vectors.iter().enumerate() {
                let (r, sc) = sum_terms(cov.mu.iter().zip(z).map(|(m, z)| m.value * z));
                pulled_back.push("K", &[k], point, r, sc);
            }
        }
    }
    let closed = ["R1", "R2", "R3"].iter().all(|c| pulled_back.block_passed(c));
    let conclusion_holds = match target.classification {
        Classification::Variational => closed && pulled_back.block_passed("K"),
        Classification::WeakVariational => closed,
        Classification::Fails | Classification::Degenerate => true,
    };
    Ok(ReductionReport {
        target,
        pulled_back,
        conclusion_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{AtiyahData, StructureConstants};
    use crate::expr::parse;

    fn exprs(src: &[&str]) -> Vec<Expr> {
        src.iter().map(|s| parse(s).unwrap()).collect()
    }

    fn trivialization() -> AlgebroidMorphism {
        AlgebroidMorphism::new(
            LieAlgebroid::tangent_bundle(3),
            LieAlgebroid::lie_algebra(&StructureConstants::se2()),
            Vec::new(),
            vec![
                exprs(&["cos(x3)", "sin(x3)", "0"]),
                exprs(&["-sin(x3)", "cos(x3)", "0"]),
                exprs(&["0", "0", "1"]),
            ],
        )
        .unwrap()
    }

    const PTS: [[f64; 6]; 2] = [[0.1, -0.4, 0.7, 0.3, 0.9, -0.5], [0.8, 0.2, -1.3, -0.6, 0.1, 0.4]];

    fn points() -> Vec<Vec<f64>> {
        PTS.iter().map(|p| p.to_vec()).collect()
    }

    #[test]
    fn identity_and_tangent_lift() {
        let e = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let r = check_morphism(&AlgebroidMorphism::identity(&e), &[vec![]], 1e-12).unwrap();
        assert!(r.passed);
        let lift = AlgebroidMorphism::tangent_lift(exprs(&["x1 + x2^3", "sin(x2) + 2*x1"])).unwrap();
        let r = check_morphism(&lift, &[vec![0.3, 0.4], vec![-0.5, 1.0]], 1e-9).unwrap();
        assert!(r.passed, "{}", r.max_abs_all());
    }

    #[test]
    fn trivialization_relates_se2_weak() {
        let psi = trivialization();
        let r = check_morphism(&psi, &[vec![0.1, 0.2, 0.3], vec![0.0, 0.0, 2.0]], 1e-12).unwrap();
        assert!(r.passed, "{}", r.max_abs_all());
        let gamma = SodeSection::new(exprs(&["0", "0", "1"]));
        let gamma2 = SodeSection::new(exprs(&["y2*y3", "-(y1*y3)", "1"]));
        let rel = sode_related(&psi, &gamma, &gamma2, &points(), 1e-12).unwrap();
        assert!(rel.passed, "{}", rel.max_abs_all());
        let wrong = SodeSection::new(exprs(&["0", "0", "0"]));
        assert!(!sode_related(&psi, &wrong, &gamma2, &points(), 1e-9).unwrap().passed);
        let red = reduction_check(&psi, &gamma2, &MultiplierMap::identity(3), &points(), 1e-10).unwrap();
        assert_eq!(red.target.classification, Classification::WeakVariational);
        assert!(red.conclusion_holds);
        assert!(red.pulled_back.passed);
    }

    #[test]
    fn pairing_is_preserved() {
        let psi = trivialization();
        let gamma2 = SodeSection::new(exprs(&["y2*y3", "-(y1*y3)", "1"]));
        let f2 = MultiplierMap::new(exprs(&["2*y1 + y2", "y1 + 3*y2", "y3^3"]));
        let theta = ThetaField {
            e: &psi.target,
            gamma: &gamma2,
            f: &f2,
        };
        let p = &PTS[0];
        let pulled = pullback_covector(&psi, &theta, p).unwrap();
        for k in 0..6 {
            let (mut z, mut v) = (vec![0.0; 3], vec![0.0; 3]);
            if k < 3 { z[k] = 1.0 } else { v[k - 3] = 1.0 }
            let base = PointE::split(&psi.source, p).unwrap();
            let lifted = lift_vector(&psi, &ProlongVector { base, z: z.clone(), v: v.clone() }).unwrap();
            let outer = theta.eval_at(&psi.map_point(p).unwrap()).unwrap();
            let lhs = pulled.pair(&z, &v);
            let rhs = outer.pair(&lifted.z, &lifted.v);
            assert!((lhs - rhs).abs() < 1e-12);
            // S' ∘ LΨ = LΨ ∘ S: both give Ψ z as the vertical part
            let vertical = lift_vector(
                &psi,
                &ProlongVector { base: PointE::split(&psi.source, p).unwrap(), z: vec![0.0; 3], v: z.clone() },
            )
            .unwrap();
            assert_eq!(vertical.v, lifted.z);
        }
    }

    #[test]
    fn quotient_to_atiyah() {
        let data = AtiyahData::new(2, vec![exprs(&["x2", "x1^2"])], StructureConstants::zero(1)).unwrap();
        let psi = AlgebroidMorphism::new(
            LieAlgebroid::tangent_bundle(3),
            LieAlgebroid::atiyah(&data),
            exprs(&["x1", "x2"]),
            vec![exprs(&["1", "0", "0"]), exprs(&["0", "1", "0"]), exprs(&["x2", "x1^2", "1"])],
        )
        .unwrap();
        let r = check_morphism(&psi, &[vec![0.3, -0.2, 0.9], vec![-0.7, 0.5, 0.1]], 1e-12).unwrap();
        assert!(r.passed, "{:?}", r.entries.iter().filter(|e| !e.passed).collect::<Vec<_>>());
    }

    #[test]
    fn composition_and_functoriality() {
        let a = AlgebroidMorphism::tangent_lift(exprs(&["x1 + x2^2", "x2"])).unwrap();
        let b = AlgebroidMorphism::tangent_lift(exprs(&["x1", "x2 + sin(x1)"])).unwrap();
        let ab = a.then(&b).unwrap();
        assert!(check_morphism(&ab, &[vec![0.2, 0.3]], 1e-12).unwrap().passed);
        let gamma = SodeSection::new(exprs(&["x1*y2", "y1^2 - x2"]));
        let f = MultiplierMap::new(exprs(&["y1 + x2*y2", "x2*y1 + 2*y2"]));
        let theta = ThetaField { e: &b.target, gamma: &gamma, f: &f };
        let p = [0.2, 0.3, -0.4, 0.6];
        let direct = pullback_covector(&ab, &theta, &p).unwrap();
        let inner = Pullback { morphism: &b, inner: &theta };
        let stacked = pullback_covector(&a, &inner, &p).unwrap();
        for (u, v) in direct.mu.iter().chain(&direct.nu).zip(stacked.mu.iter().chain(&stacked.nu)) {
            assert!((u.value - v.value).abs() < 1e-12);
            for (g, h) in u.grad.iter().zip(&v.grad) {
                assert!((g - h).abs() < 1e-12);
            }
        }
    }
}
