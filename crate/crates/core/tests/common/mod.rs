//! Shared generators for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use algebroid_helmholtz::{parse, AtiyahData, Expr, Lagrangian, LieAlgebroid, StructureConstants};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixtures() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"))
        .expect("fixture directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    out.sort();
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn coeff(rng: &mut ChaCha8Rng) -> f64 {
    (rng.random_range(-1.0..1.0f64) * 100.0).round() / 100.0
}

fn lit(c: f64) -> String {
    if c < 0.0 {
        format!("({c})")
    } else {
        format!("{c}")
    }
}

/// A random polynomial of total degree at most `degree` (up to 3) in the
/// named variables.
pub fn polynomial(rng: &mut ChaCha8Rng, vars: &[String], degree: usize) -> String {
    let mut terms = vec![lit(coeff(rng))];
    let k = vars.len();
    for i in 0..k {
        if degree >= 1 {
            terms.push(format!("{}*{}", lit(coeff(rng)), vars[i]));
        }
        for j in i..k {
            if degree >= 2 {
                terms.push(format!("{}*{}*{}", lit(coeff(rng)), vars[i], vars[j]));
            }
            for l in j..k {
                if degree >= 3 {
                    terms.push(format!("{}*{}*{}*{}", lit(coeff(rng)), vars[i], vars[j], vars[l]));
                }
            }
        }
    }
    terms.join(" + ")
}

/// A Lie algebra of dimension `n` (1 to 3) picked at random.
pub fn random_algebra(rng: &mut ChaCha8Rng, n: usize) -> StructureConstants {
    match (n, rng.random_range(0..3)) {
        (3, 0) => StructureConstants::se2(),
        (3, 1) => StructureConstants::so3(),
        // the non-abelian 2-dimensional algebra [e1, e2] = e2
        (2, 0 | 1) => StructureConstants::from_brackets(2, &[(0, 1, vec![(1, 1.0)])]).unwrap(),
        _ => StructureConstants::zero(n),
    }
}

/// A random Atiyah algebroid with `m ≤ 3`, group dimension `≤ 3` and
/// connection coefficients of degree `≤ 2`.
pub fn random_atiyah(rng: &mut ChaCha8Rng) -> LieAlgebroid {
    let m = rng.random_range(1..=3);
    let ng = rng.random_range(1..=3);
    let xs = algebroid_helmholtz::base_names(m);
    let c = random_algebra(rng, ng);
    let conn: Vec<Vec<Expr>> = (0..ng)
        .map(|_| (0..m).map(|_| parse(&polynomial(rng, &xs, 2)).unwrap()).collect())
        .collect();
    LieAlgebroid::atiyah(&AtiyahData::new(m, conn, c).unwrap())
}

/// Builder algebroids: tangent bundles, Lie algebras and Atiyah algebroids.
pub fn random_builder_algebroid(rng: &mut ChaCha8Rng) -> LieAlgebroid {
    match rng.random_range(0..3) {
        0 => LieAlgebroid::tangent_bundle(rng.random_range(1..=3)),
        1 => {
            let n = rng.random_range(1..=3);
            LieAlgebroid::lie_algebra(&random_algebra(rng, n))
        }
        _ => random_atiyah(rng),
    }
}

/// `½ yᵀ G y + b(x)·y + V(x)` with `G = AᵀA + I`, `b` linear and `V` of
/// degree `≤ 3`.
pub fn random_lagrangian(rng: &mut ChaCha8Rng, e: &LieAlgebroid) -> Lagrangian {
    let (m, n) = (e.m(), e.n());
    let xs = e.base_names();
    let ys = e.fiber_names();
    let a: Vec<f64> = (0..n * n).map(|_| coeff(rng)).collect();
    let mut terms = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut g: f64 = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
            if i == j {
                g += 1.0;
                terms.push(format!("{}*{}^2", lit(0.5 * g), ys[i]));
            } else {
                terms.push(format!("{}*{}*{}", lit(g), ys[i], ys[j]));
            }
        }
    }
    for y in &ys {
        let b = if m == 0 { lit(coeff(rng)) } else { polynomial(rng, &xs, 1) };
        terms.push(format!("({b})*{y}"));
    }
    if m > 0 {
        terms.push(format!("({})", polynomial(rng, &xs, 3)));
    }
    Lagrangian::new(parse(&terms.join(" + ")).unwrap())
}
