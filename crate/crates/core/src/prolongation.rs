//! The prolongation `L^τE` in the basis `{T̃_α, Ṽ_α}`.
//!
//! Brackets are `[T̃_α, T̃_β] = C^γ_αβ T̃_γ` and zero otherwise; the anchor
//! sends `T̃_α` to `ρ^i_α ∂/∂x^i` and `Ṽ_α` to `∂/∂y^α`.

use crate::algebroid::{LieAlgebroid, PointE};
use crate::expr::Expr;
use crate::jets::{Jet1, Jet2};
use crate::sode::{Frame, MultiplierMap, SodeSection, ThetaSection};
use crate::{Error, Result};

/// One element of the basis of sections of `L^τE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSection {
    /// `T̃_α`
    T(usize),
    /// `Ṽ_α`
    V(usize),
}

/// Structure of `L^τE` over a point of `E`.
#[derive(Debug, Clone)]
pub struct ProlongStructure<'a> {
    e: &'a LieAlgebroid,
}

pub fn prolong_structure(e: &LieAlgebroid) -> ProlongStructure<'_> {
    ProlongStructure { e }
}

impl ProlongStructure<'_> {
    /// `[a, b]` at base point `x` as `(basis element, coefficient)` pairs
    /// with nonzero coefficients.
    pub fn bracket(&self, a: BasisSection, b: BasisSection, x: &[f64]) -> Result<Vec<(BasisSection, f64)>> {
        match (a, b) {
            (BasisSection::T(a), BasisSection::T(b)) => {
                let env = self.e.base_env(x);
                let mut out = Vec::new();
                for g in 0..self.e.n() {
                    let c = self.e.structure(g, a, b).value_in(&env)?;
                    if c != 0.0 {
                        out.push((BasisSection::T(g), c));
                    }
                }
                Ok(out)
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Anchor image as `(∂/∂x components, ∂/∂y components)`.
    pub fn anchor(&self, a: BasisSection, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (m, n) = (self.e.m(), self.e.n());
        match a {
            BasisSection::T(a) => {
                let rho = self.e.anchor_at(x)?;
                Ok(((0..m).map(|i| rho[i * n + a]).collect(), vec![0.0; n]))
            }
            BasisSection::V(a) => Ok((
                vec![0.0; m],
                (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect(),
            )),
        }
    }
}

/// A section `t^α T̃_α + v^α Ṽ_α` with components in `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongSection {
    pub t: Vec<Expr>,
    pub v: Vec<Expr>,
}

impl ProlongSection {
    /// The SODE section `y^α T̃_α + Γ^α Ṽ_α` for explicit `Γ`.
    pub fn from_sode(gamma: &SodeSection) -> Option<Self> {
        let comps = gamma.components()?;
        Some(Self {
            t: (1..=comps.len()).map(|a| Expr::var(format!("y{a}"))).collect(),
            v: comps.to_vec(),
        })
    }

    /// Whether `S(self) = Δ`, compared symbolically.
    pub fn is_sode(&self) -> bool {
        let s = vertical_endo(self);
        let delta = euler_section(self.t.len());
        s.v.iter().zip(&delta.v).all(|(a, b)| a == b)
    }
}

/// `S(a T̃ + b Ṽ) = a Ṽ`.
pub fn vertical_endo(s: &ProlongSection) -> ProlongSection {
    ProlongSection {
        t: vec![Expr::num(0.0); s.t.len()],
        v: s.t.clone(),
    }
}

/// The Euler section `Δ = y^α Ṽ_α`.
pub fn euler_section(n: usize) -> ProlongSection {
    ProlongSection {
        t: vec![Expr::num(0.0); n],
        v: (1..=n).map(|a| Expr::var(format!("y{a}"))).collect(),
    }
}

/// An element `z^α T̃_α + v^α Ṽ_α` of `L^τE` over a point of `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongVector {
    pub base: PointE,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
}

/// Components `μ_α T̃^α + ν_α Ṽ^α` of a covector section at one point,
/// each with its first derivatives in `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongCovector {
    pub mu: Vec<Jet1>,
    pub nu: Vec<Jet1>,
}

impl ProlongCovector {
    /// `⟨self, z T̃ + v Ṽ⟩`.
    pub fn pair(&self, z: &[f64], v: &[f64]) -> f64 {
        self.mu.iter().zip(z).map(|(m, z)| m.value * z).sum::<f64>()
            + self.nu.iter().zip(v).map(|(n, v)| n.value * v).sum::<f64>()
    }
}

/// A covector section of `L^τE` that can be evaluated pointwise.
pub trait CovectorField {
    fn algebroid(&self) -> &LieAlgebroid;
    fn eval_at(&self, point: &[f64]) -> Result<ProlongCovector>;
}

/// The section `Θ_{Γ,F}`.
#[derive(Debug, Clone)]
pub struct ThetaField<'a> {
    pub e: &'a LieAlgebroid,
    pub gamma: &'a SodeSection,
    pub f: &'a MultiplierMap,
}

impl CovectorField for ThetaField<'_> {
    fn algebroid(&self) -> &LieAlgebroid {
        self.e
    }

    fn eval_at(&self, point: &[f64]) -> Result<ProlongCovector> {
        let (frame, env) = Frame::new(self.e, self.gamma, point)?;
        let f = self.f.eval(&env)?;
        Ok(ProlongCovector {
            mu: frame.theta(&f),
            nu: f.iter().map(Jet2::to_jet1).collect(),
        })
    }
}

/// The horizontal lifts `H_α = T̃_α + Λ^γ_α Ṽ_γ` at a point, with
/// `Λ^γ_α = ½(∂Γ^γ/∂y^α − C^γ_αβ y^β)`.
pub fn horizontal_lift_basis(e: &LieAlgebroid, gamma: &SodeSection, point: &[f64]) -> Result<Vec<ProlongVector>> {
    let q = crate::sode::connection_quantities(e, gamma, point)?;
    let base = PointE::split(e, point)?;
    let n = e.n();
    Ok((0..n)
        .map(|a| ProlongVector {
            base: base.clone(),
            z: (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect(),
            v: (0..n).map(|g| q.lambda[g * n + a]).collect(),
        })
        .collect())
}

/// Four coordinate blocks of a point of a prolongation or its dual.
pub type Coordinates4 = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Coordinates `(x, y_*, z, v) ↦ (x, z, v_α + C^γ_αβ y*_γ z^β, y_*)`.
pub fn tulczyjew_map(
    e: &LieAlgebroid,
    x: &[f64],
    y_star: &[f64],
    z: &[f64],
    v: &[f64],
) -> Result<Coordinates4> {
    let n = e.n();
    if x.len() != e.m() || y_star.len() != n || z.len() != n || v.len() != n {
        return Err(Error::Dimension("tulczyjew map arguments".into()));
    }
    let env = e.base_env(x);
    let mut w = v.to_vec();
    for (a, wa) in w.iter_mut().enumerate() {
        for g in 0..n {
            for b in 0..n {
                let c = e.structure(g, a, b);
                if !c.is_zero() {
                    *wa += c.value_in(&env)? * y_star[g] * z[b];
                }
            }
        }
    }
    Ok((x.to_vec(), z.to_vec(), w, y_star.to_vec()))
}

/// `LF(x, y, z, v) = (x, F(x, y), z, ρ^i_β z^β ∂F/∂x^i + v^β ∂F/∂y^β)`.
pub fn lift_map(
    e: &LieAlgebroid,
    f: &MultiplierMap,
    p: &ProlongVector,
) -> Result<Coordinates4> {
    let (m, n) = (e.m(), e.n());
    let env = e.total_env(&p.base.x, &p.base.y);
    let fj = f.eval(&env)?;
    let rho = e.anchor_at(&p.base.x)?;
    let last = (0..n)
        .map(|a| {
            let mut s = 0.0;
            for i in 0..m {
                let flow: f64 = (0..n).map(|b| rho[i * n + b] * p.z[b]).sum();
                s += flow * fj[a].d(i);
            }
            for b in 0..n {
                s += p.v[b] * fj[a].d(m + b);
            }
            s
        })
        .collect();
    Ok((
        p.base.x.clone(),
        fj.iter().map(Jet2::value).collect(),
        p.z.clone(),
        last,
    ))
}

/// `Θ_{Γ,F} = A_E ∘ LF ∘ Γ` at a point, by composing the coordinate maps.
pub fn theta_composition(
    e: &LieAlgebroid,
    gamma: &SodeSection,
    f: &MultiplierMap,
    point: &[f64],
) -> Result<ThetaSection> {
    let base = PointE::split(e, point)?;
    let g = gamma.values(e, &base)?;
    let lifted = ProlongVector {
        z: base.y.clone(),
        v: g,
        base,
    };
    let (x, y_star, z, v) = lift_map(e, f, &lifted)?;
    let (_, _, theta, multiplier) = tulczyjew_map(e, &x, &y_star, &z, &v)?;
    Ok(ThetaSection { theta, multiplier })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::StructureConstants;
    use crate::expr::parse;
    use crate::sode::theta_components;

    fn exprs(src: &[&str]) -> Vec<Expr> {
        src.iter().map(|s| parse(s).unwrap()).collect()
    }

    #[test]
    fn se2_prolonged_bracket() {
        let e = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let p = prolong_structure(&e);
        assert_eq!(
            p.bracket(BasisSection::T(1), BasisSection::T(2), &[]).unwrap(),
            vec![(BasisSection::T(0), 1.0)]
        );
        assert!(p.bracket(BasisSection::V(0), BasisSection::V(1), &[]).unwrap().is_empty());
        assert!(p.bracket(BasisSection::T(0), BasisSection::V(1), &[]).unwrap().is_empty());
        let (dx, dy) = p.anchor(BasisSection::V(2), &[]).unwrap();
        assert!(dx.is_empty());
        assert_eq!(dy, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn vertical_endo_and_euler() {
        let gamma = SodeSection::new(exprs(&["y2*y3", "-(y1*y3)", "1"]));
        let s = ProlongSection::from_sode(&gamma).unwrap();
        assert!(s.is_sode());
        let ss = vertical_endo(&vertical_endo(&s));
        assert!(ss.t.iter().chain(&ss.v).all(Expr::is_zero));
        let not_sode = ProlongSection {
            t: exprs(&["y1", "2*y2", "y3"]),
            v: exprs(&["0", "0", "0"]),
        };
        assert!(!not_sode.is_sode());
    }

    #[test]
    fn tulczyjew_contracts_structure() {
        let e = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let (_, _, w, _) = tulczyjew_map(&e, &[], &[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0], &[0.0; 3]).unwrap();
        // brute-force contraction
        let c = StructureConstants::se2();
        for a in 0..3 {
            let want: f64 = (0..3).map(|g| c.get(g, a, 1) * [0.0, 0.0, 1.0][g]).sum();
            assert_eq!(w[a], want);
        }
        let flat = LieAlgebroid::lie_algebra(&StructureConstants::zero(2));
        let out = tulczyjew_map(&flat, &[], &[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]).unwrap();
        assert_eq!(out, (vec![], vec![3.0, 4.0], vec![5.0, 6.0], vec![1.0, 2.0]));
    }

    #[test]
    fn composition_matches_direct_formula() {
        let e = LieAlgebroid::lie_algebra(&StructureConstants::se2());
        let gamma = SodeSection::new(exprs(&["y2*y3", "-(y1*y3)", "1"]));
        let f = MultiplierMap::identity(3);
        let pt = [0.2, 0.9, -0.4];
        let th = theta_composition(&e, &gamma, &f, &pt).unwrap();
        assert_eq!(th.theta, vec![0.0, 0.0, 1.0]);
        assert_eq!(th, theta_components(&e, &gamma, &f, &pt).unwrap());
    }

    #[test]
    fn horizontal_lift_of_linear_sode() {
        let t = LieAlgebroid::tangent_bundle(2);
        let gamma = SodeSection::new(exprs(&["-2*y1", "-2*y2"]));
        let h = horizontal_lift_basis(&t, &gamma, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(h[0].z, vec![1.0, 0.0]);
        assert_eq!(h[0].v, vec![-1.0, 0.0]);
        assert_eq!(h[1].v, vec![0.0, -1.0]);
    }
}
