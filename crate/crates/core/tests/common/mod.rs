#![allow(dead_code)]

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use phlab_core::torus::{make_map, Family, MapParams, TorusMap};

pub fn gmk(eps: f64) -> TorusMap {
    make_map(
        Family::Gmk,
        &MapParams {
            epsilon: Some(eps),
            matrix: None,
        },
    )
    .unwrap()
}

pub fn skew(eps: f64) -> TorusMap {
    make_map(
        Family::SkewProduct,
        &MapParams {
            epsilon: Some(eps),
            matrix: None,
        },
    )
    .unwrap()
}

pub fn gmk_matrix() -> Matrix3<f64> {
    Matrix3::new(2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 1.0)
}

/// Eigenpairs of the symmetric GMK matrix by nalgebra's solver, ordered uu, c, ss.
pub fn gmk_eigen() -> [(f64, Vector3<f64>); 3] {
    let e = SymmetricEigen::new(gmk_matrix());
    let mut pairs: Vec<(f64, Vector3<f64>)> = (0..3)
        .map(|i| (e.eigenvalues[i], e.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    [pairs[0], pairs[1], pairs[2]]
}

/// Angle between the lines spanned by `a` and `b`.
pub fn line_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    let s = a.normalize().cross(&b.normalize()).norm();
    s.atan2(c)
}

/// Points of a scrambled low-discrepancy sequence, reproducible without an RNG.
pub fn halton(n: usize) -> Vec<[f64; 3]> {
    fn radical(mut i: usize, b: usize) -> f64 {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        r
    }
    (1..=n)
        .map(|i| [radical(i, 2), radical(i, 3), radical(i, 5)])
        .collect()
}
