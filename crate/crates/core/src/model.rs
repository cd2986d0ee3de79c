//! Model files: TOML documents describing an algebroid, a SODE section,
//! a multiplier map, a Lagrangian, sampling and optional morphism data.
//!
//! ```toml
//! name = "se2_weak_variational"
//! tolerance = 1e-10
//!
//! [algebroid]
//! kind = "lie_algebra"
//! n = 3
//! structure = [
//!   { c = 1, a = 2, b = 3, value = 1.0 },
//!   { c = 2, a = 1, b = 3, value = -1.0 },
//! ]
//!
//! [sode]
//! components = ["0", "0", "1"]
//!
//! [multiplier]
//! components = ["y1", "y2", "y3"]
//! ```
//!
//! Indices in files are 1-based. See the repository README for every block.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::algebroid::{AtiyahData, LieAlgebroid, StructureConstants};
use crate::expr::{parse, Expr};
use crate::morphism::AlgebroidMorphism;
use crate::sampling::SampleSpec;
use crate::sode::{MultiplierMap, SodeSection};
use crate::variational::{self, Lagrangian, ReconstructionMode};
use crate::{base_names, fiber_names, Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_SAMPLE_COUNT: usize = 64;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Option<String>,
    tolerance: Option<f64>,
    algebroid: RawAlgebroid,
    sode: Option<RawSode>,
    multiplier: Option<RawMultiplier>,
    lagrangian: Option<RawLagrangian>,
    sampling: Option<RawSampling>,
    reconstruct: Option<RawReconstruct>,
    morphism: Option<RawMorphism>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    algebroid: RawAlgebroid,
    sode: Option<RawSode>,
    multiplier: Option<RawMultiplier>,
    lagrangian: Option<RawLagrangian>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBracket {
    c: usize,
    a: usize,
    b: usize,
    value: Scalar,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawAlgebroid {
    Tangent {
        m: usize,
    },
    LieAlgebra {
        n: usize,
        #[serde(default)]
        structure: Vec<RawBracket>,
    },
    Atiyah {
        m: usize,
        group_dim: usize,
        /// One row per group index, `m` entries each.
        connection: Vec<Vec<Scalar>>,
        #[serde(default)]
        structure: Vec<RawBracket>,
    },
    Custom {
        m: usize,
        n: usize,
        /// `m` rows of `n` entries.
        anchor: Vec<Vec<Scalar>>,
        #[serde(default)]
        structure: Vec<RawBracket>,
        kernel_indices: Option<Vec<usize>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSode {
    components: Option<Vec<Scalar>>,
    #[serde(default)]
    from_lagrangian: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMultiplier {
    components: Option<Vec<Scalar>>,
    #[serde(default)]
    legendre: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLagrangian {
    expr: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    points: Option<Vec<Vec<f64>>>,
    count: Option<usize>,
    seed: Option<u64>,
    bounds: Option<[f64; 2]>,
    exclude_y_radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReconstruct {
    mode: ReconstructionMode,
    basepoint: Vec<f64>,
    fiber_basepoint: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMorphism {
    #[serde(default)]
    base_map: Vec<Scalar>,
    fiber_map: Vec<Vec<Scalar>>,
    target: RawSystem,
}

/// An algebroid with the fields defined on it.
#[derive(Debug, Clone)]
pub struct System {
    pub algebroid: LieAlgebroid,
    pub sode: Option<SodeSection>,
    pub multiplier: Option<MultiplierMap>,
    pub lagrangian: Option<Lagrangian>,
}

/// Where the sample points come from; `seed` and `count` may be
/// overridden from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    pub points: Option<Vec<Vec<f64>>>,
    pub count: usize,
    pub seed: u64,
    pub bounds: (f64, f64),
    pub exclude_y_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructSpec {
    pub mode: ReconstructionMode,
    pub basepoint: Vec<f64>,
    pub fiber_basepoint: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MorphismSpec {
    pub morphism: AlgebroidMorphism,
    pub target: System,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub tolerance: f64,
    pub system: System,
    pub sampling: Sampling,
    pub reconstruct: Option<ReconstructSpec>,
    pub morphism: Option<MorphismSpec>,
}

fn model_err(at: &str, msg: impl std::fmt::Display) -> Error {
    Error::Model(format!("{at}: {msg}"))
}

fn expr(at: &str, s: &Scalar, allowed: &[String]) -> Result<Expr> {
    let e = match s {
        Scalar::Number(v) => Expr::num(*v),
        Scalar::Text(t) => parse(t).map_err(|err| model_err(at, err))?,
    };
    if let Some(v) = e.free_vars().into_iter().find(|v| !allowed.contains(v)) {
        return Err(model_err(
            at,
            format!("unbound variable `{v}` (allowed: {})", allowed.join(", ")),
        ));
    }
    Ok(e)
}

fn exprs(at: &str, row: &[Scalar], len: usize, allowed: &[String]) -> Result<Vec<Expr>> {
    if row.len() != len {
        return Err(model_err(at, format!("expected {len} entries, found {}", row.len())));
    }
    row.iter()
        .enumerate()
        .map(|(k, s)| expr(&format!("{at}[{}]", k + 1), s, allowed))
        .collect()
}

fn table(at: &str, rows: &[Vec<Scalar>], r: usize, c: usize, allowed: &[String]) -> Result<Vec<Vec<Expr>>> {
    if rows.len() != r {
        return Err(model_err(at, format!("expected {r} rows, found {}", rows.len())));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| exprs(&format!("{at}[{}]", i + 1), row, c, allowed))
        .collect()
}

/// Checks 1-based indices, `a < b` and uniqueness; returns 0-based
/// `(c, a, b, value)`.
fn brackets(at: &str, raw: &[RawBracket], n: usize, allowed: &[String]) -> Result<Vec<(usize, usize, usize, Expr)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for (k, br) in raw.iter().enumerate() {
        let here = format!("{at}[{}]", k + 1);
        if [br.c, br.a, br.b].iter().any(|&i| i == 0 || i > n) {
            return Err(model_err(&here, format!("indices must lie in 1..={n}")));
        }
        if br.a >= br.b {
            return Err(model_err(
                &here,
                format!(
                    "C^{}_{}{} violates antisymmetry; list each bracket once with a < b",
                    br.c, br.a, br.b
                ),
            ));
        }
        if !seen.insert((br.c, br.a, br.b)) {
            return Err(model_err(&here, "entry given twice"));
        }
        out.push((br.c - 1, br.a - 1, br.b - 1, expr(&here, &br.value, allowed)?));
    }
    Ok(out)
}

fn constants(at: &str, raw: &[RawBracket], n: usize) -> Result<StructureConstants> {
    let mut c = StructureConstants::zero(n);
    for (g, a, b, v) in brackets(at, raw, n, &[])? {
        let v = v
            .as_const()
            .ok_or_else(|| model_err(at, "structure constants must be numbers"))?;
        c.set(g, a, b, v);
    }
    Ok(c)
}

fn algebroid(raw: &RawAlgebroid, at: &str) -> Result<LieAlgebroid> {
    match raw {
        RawAlgebroid::Tangent { m } => Ok(LieAlgebroid::tangent_bundle(*m)),
        RawAlgebroid::LieAlgebra { n, structure } => Ok(LieAlgebroid::lie_algebra(&constants(
            &format!("{at}.structure"),
            structure,
            *n,
        )?)),
        RawAlgebroid::Atiyah {
            m,
            group_dim,
            connection,
            structure,
        } => {
            let c = constants(&format!("{at}.structure"), structure, *group_dim)?;
            let conn = table(&format!("{at}.connection"), connection, *group_dim, *m, &base_names(*m))?;
            Ok(LieAlgebroid::atiyah(&AtiyahData::new(*m, conn, c)?))
        }
        RawAlgebroid::Custom {
            m,
            n,
            anchor,
            structure,
            kernel_indices,
        } => {
            let xs = base_names(*m);
            let rho = table(&format!("{at}.anchor"), anchor, *m, *n, &xs)?;
            let br = brackets(&format!("{at}.structure"), structure, *n, &xs)?;
            let e = LieAlgebroid::new(*m, *n, rho, br)?;
            match kernel_indices {
                None => Ok(e),
                Some(k) => {
                    if k.contains(&0) {
                        return Err(model_err(&format!("{at}.kernel_indices"), "indices are 1-based"));
                    }
                    e.with_kernel_indices(k.iter().map(|i| i - 1).collect())
                }
            }
        }
    }
}

fn build_system(
    name: &str,
    prefix: &str,
    algebroid_raw: &RawAlgebroid,
    sode: Option<&RawSode>,
    multiplier: Option<&RawMultiplier>,
    lagrangian: Option<&RawLagrangian>,
) -> Result<System> {
    let e = algebroid(algebroid_raw, &format!("{prefix}algebroid"))?.with_name(name);
    let (m, n) = (e.m(), e.n());
    let vars: Vec<String> = base_names(m).into_iter().chain(fiber_names(n)).collect();
    let lagrangian = lagrangian
        .map(|l| {
            expr(&format!("{prefix}lagrangian.expr"), &Scalar::Text(l.expr.clone()), &vars).map(Lagrangian::new)
        })
        .transpose()?;
    let need_lagrangian = |block: &str| {
        lagrangian
            .as_ref()
            .ok_or_else(|| model_err(&format!("{prefix}{block}"), format!("needs a [{prefix}lagrangian] block")))
    };
    let one_of = |block: &str, flag: &str, has_components: bool, flagged: bool| {
        if has_components == flagged {
            Err(model_err(
                &format!("{prefix}{block}"),
                format!("give exactly one of `components` and `{flag} = true`"),
            ))
        } else {
            Ok(())
        }
    };
    let sode = match sode {
        None => None,
        Some(s) => {
            one_of("sode", "from_lagrangian", s.components.is_some(), s.from_lagrangian)?;
            Some(match &s.components {
                Some(c) => SodeSection::new(exprs(&format!("{prefix}sode.components"), c, n, &vars)?),
                None => variational::sode_from_lagrangian(&e, need_lagrangian("sode")?),
            })
        }
    };
    let multiplier = match multiplier {
        None => None,
        Some(f) => {
            one_of("multiplier", "legendre", f.components.is_some(), f.legendre)?;
            Some(match &f.components {
                Some(c) => MultiplierMap::new(exprs(&format!("{prefix}multiplier.components"), c, n, &vars)?),
                None => variational::legendre(&e, need_lagrangian("multiplier")?),
            })
        }
    };
    Ok(System {
        algebroid: e,
        sode,
        multiplier,
        lagrangian,
    })
}

impl Model {
    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|err| Error::Model(format!("cannot read {}: {err}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        Self::from_toml(&text, stem).map_err(|err| match err {
            Error::Model(msg) => Error::Model(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses a model; `default_name` is used when the file has no `name`.
    pub fn from_toml(text: &str, default_name: &str) -> Result<Model> {
        let raw: RawModel = toml::from_str(text).map_err(|err| Error::Model(err.to_string()))?;
        let name = raw.name.clone().unwrap_or_else(|| default_name.to_string());
        let tolerance = raw.tolerance.unwrap_or(DEFAULT_TOLERANCE);
        if !(tolerance > 0.0) {
            return Err(model_err("tolerance", "must be positive"));
        }
        let system = build_system(
            &name,
            "",
            &raw.algebroid,
            raw.sode.as_ref(),
            raw.multiplier.as_ref(),
            raw.lagrangian.as_ref(),
        )?;
        let (m, n) = (system.algebroid.m(), system.algebroid.n());
        let s = raw.sampling.as_ref();
        let sampling = Sampling {
            points: s.and_then(|s| s.points.clone()),
            count: s.and_then(|s| s.count).unwrap_or(DEFAULT_SAMPLE_COUNT),
            seed: s.and_then(|s| s.seed).unwrap_or(0),
            bounds: s.and_then(|s| s.bounds).map_or((-1.0, 1.0), |[lo, hi]| (lo, hi)),
            exclude_y_radius: s.and_then(|s| s.exclude_y_radius).unwrap_or(0.1),
        };
        if let Some(points) = &sampling.points {
            if let Some((k, p)) = points.iter().enumerate().find(|(_, p)| p.len() != m + n) {
                return Err(model_err(
                    &format!("sampling.points[{}]", k + 1),
                    format!("has {} coordinates, expected m + n = {}", p.len(), m + n),
                ));
            }
        }
        if !(sampling.bounds.0 < sampling.bounds.1) {
            return Err(model_err("sampling.bounds", "lower bound must be below upper bound"));
        }
        let reconstruct = raw
            .reconstruct
            .map(|r| {
                if r.basepoint.len() != m || r.fiber_basepoint.len() != n {
                    return Err(model_err("reconstruct", format!("basepoint needs {m} and fiber_basepoint {n} entries")));
                }
                Ok(ReconstructSpec {
                    mode: r.mode,
                    basepoint: r.basepoint,
                    fiber_basepoint: r.fiber_basepoint,
                })
            })
            .transpose()?;
        let morphism = raw
            .morphism
            .map(|mm| {
                let t = &mm.target;
                let target = build_system(
                    &format!("{name}_target"),
                    "morphism.target.",
                    &t.algebroid,
                    t.sode.as_ref(),
                    t.multiplier.as_ref(),
                    t.lagrangian.as_ref(),
                )?;
                let xs = base_names(m);
                let (m2, n2) = (target.algebroid.m(), target.algebroid.n());
                let base_map = exprs("morphism.base_map", &mm.base_map, m2, &xs)?;
                let fiber_map = table("morphism.fiber_map", &mm.fiber_map, n2, n, &xs)?;
                let morphism =
                    AlgebroidMorphism::new(system.algebroid.clone(), target.algebroid.clone(), base_map, fiber_map)?;
                Ok::<_, Error>(MorphismSpec { morphism, target })
            })
            .transpose()?;
        Ok(Model {
            name,
            tolerance,
            system,
            sampling,
            reconstruct,
            morphism,
        })
    }

    pub fn sode(&self) -> Result<&SodeSection> {
        self.system.sode.as_ref().ok_or_else(|| missing("sode"))
    }

    pub fn multiplier(&self) -> Result<&MultiplierMap> {
        self.system.multiplier.as_ref().ok_or_else(|| missing("multiplier"))
    }

    pub fn lagrangian(&self) -> Result<&Lagrangian> {
        self.system.lagrangian.as_ref().ok_or_else(|| missing("lagrangian"))
    }

    /// Sample points with optional overrides of seed and count. Explicit
    /// points in the file ignore both.
    pub fn sample(&self, seed: Option<u64>, count: Option<usize>) -> Vec<Vec<f64>> {
        let s = &self.sampling;
        if let Some(points) = &s.points {
            return points.clone();
        }
        let (m, n) = (self.system.algebroid.m(), self.system.algebroid.n());
        SampleSpec::Box {
            bounds: vec![s.bounds; m + n],
            count: count.unwrap_or(s.count),
            seed: seed.unwrap_or(s.seed),
            exclude_y_radius: if n == 0 { 0.0 } else { s.exclude_y_radius },
            fiber_dim: n,
        }
        .points()
    }
}

fn missing(block: &str) -> Error {
    Error::Model(format!("missing [{block}] block"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SE2: &str = r#"
name = "se2"
[algebroid]
kind = "lie_algebra"
n = 3
structure = [
  { c = 1, a = 2, b = 3, value = 1.0 },
  { c = 2, a = 1, b = 3, value = -1.0 },
]
[sode]
components = ["0", "0", "1"]
[multiplier]
components = ["y1", "y2", "y3"]
"#;

    #[test]
    fn loads_lie_algebra() {
        let model = Model::from_toml(SE2, "x").unwrap();
        assert_eq!(model.name, "se2");
        assert_eq!((model.system.algebroid.m(), model.system.algebroid.n()), (0, 3));
        assert_eq!(model.sample(None, None).len(), 64);
        assert!(model.lagrangian().is_err());
    }

    #[test]
    fn rejects_repeated_lower_index() {
        let text = SE2.replace("{ c = 1, a = 2, b = 3", "{ c = 1, a = 1, b = 1");
        let err = Model::from_toml(&text, "x").unwrap_err().to_string();
        assert!(err.contains("antisymmetry"), "{err}");
    }

    #[test]
    fn rejects_unbound_variable() {
        let text = SE2.replace("\"0\", \"0\", \"1\"", "\"0\", \"y4\", \"1\"");
        let err = Model::from_toml(&text, "x").unwrap_err().to_string();
        assert!(err.contains("y4") && err.contains("sode.components[2]"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let err = Model::from_toml("[algebroid\nkind = 1", "x").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn lagrangian_derived_blocks() {
        let text = r#"
[algebroid]
kind = "tangent"
m = 1
[lagrangian]
expr = "0.5*y1^2 - x1^2"
[sode]
from_lagrangian = true
[multiplier]
legendre = true
"#;
        let model = Model::from_toml(text, "osc").unwrap();
        assert_eq!(model.name, "osc");
        let e = &model.system.algebroid;
        let g = model.sode().unwrap().values(e, &crate::PointE::new(e, vec![0.5], vec![1.0]).unwrap()).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-14);
    }
}
