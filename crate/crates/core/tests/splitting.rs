mod common;

use common::{gmk, gmk_eigen, halton, skew};
use phlab_core::leafwork::center_plaque;
use phlab_core::splitting::{
    angle, center_rate, certify_domination, distortion_estimate, field, fit_center_holder,
    frames_on, grid, holder_distortion_bound, line_angle, rate_bounds, splitting_at, Bundle,
};
use phlab_core::torus::{TorusPoint, Vec3};
use phlab_core::Error;

const BUNDLES: [Bundle; 3] = [Bundle::Uu, Bundle::C, Bundle::Ss];

fn sample(n: usize) -> Vec<TorusPoint> {
    halton(n)
        .into_iter()
        .map(|[x, y, z]| TorusPoint::new(x, y, z))
        .collect()
}

#[test]
fn linear_frames_match_eigen_solver() {
    let oracle = gmk_eigen();
    for f in frames_on(&gmk(0.0), &sample(20), 64).unwrap() {
        let rates = [f.rate_uu, f.rate_c, f.rate_ss];
        for (k, b) in BUNDLES.into_iter().enumerate() {
            assert!(common::line_angle(&f.dir(b), &oracle[k].1) < 1e-10);
            assert!((rates[k] - oracle[k].0).abs() < 1e-9);
        }
        assert!(f.residual < 1e-10);
    }
}

#[test]
fn skew_product_has_neutral_center() {
    let golden = (3.0 + 5f64.sqrt()) / 2.0;
    let f = splitting_at(&skew(0.0), &TorusPoint::new(0.2, 0.7, 0.4), 64).unwrap();
    assert!(line_angle(&f.dir(Bundle::C), &Vec3::z()) < 1e-10);
    assert!((f.rate_c - 1.0).abs() < 1e-12);
    assert!((f.rate_uu - golden).abs() < 1e-9);
    assert!((f.rate_ss - 1.0 / golden).abs() < 1e-9);
}

#[test]
fn perturbed_splitting_is_invariant() {
    let m = gmk(0.05);
    for p in sample(12) {
        let f = splitting_at(&m, &p, 64).unwrap();
        let g = splitting_at(&m, &m.apply(&p), 64).unwrap();
        let df = m.tangent(&p);
        for b in BUNDLES {
            let a = line_angle(&(df * f.dir(b)), &g.dir(b));
            assert!(a < 1e-8, "{b:?}: {a:e}");
        }
        assert!(f.separation_margin() > 0.0);
    }
}

#[test]
fn fixed_depth_field_matches_converged_frame() {
    let m = gmk(0.05);
    let p = TorusPoint::new(0.31, 0.72, 0.05);
    let f = splitting_at(&m, &p, 64).unwrap();
    for b in BUNDLES {
        assert!(angle(&field(&m, &p.lift(), b).unwrap(), &f.dir(b)) < 1e-10);
    }
}

#[test]
fn domination_ratio_is_eigenvalue_ratio() {
    let o = gmk_eigen();
    let rep = certify_domination(&gmk(0.0), &grid(3), 10).unwrap();
    assert_eq!(rep.n, 1);
    assert!((rep.worst_ratio_uu_c - o[1].0 / o[0].0).abs() < 1e-9);
    assert!((rep.worst_ratio_c_ss - o[2].0 / o[1].0).abs() < 1e-9);
    assert_eq!(
        certify_domination(&gmk(0.0), &grid(3), 0).unwrap_err(),
        Error::NotDominatedWithinBudget(0)
    );
}

#[test]
fn rate_bounds_bracket_perturbed_rates() {
    let flat = rate_bounds(&gmk(0.0), &grid(3)).unwrap();
    assert!((flat.mu_minus - flat.mu_plus).abs() < 1e-9);
    let b = rate_bounds(&gmk(0.05), &grid(4)).unwrap();
    assert!(b.kappa0 < 1.0 && 1.0 < b.mu_minus && b.mu_minus < b.mu_plus && b.mu_plus < b.lambda0);
    let v = Vec3::new(0.3, 0.1, 0.9);
    let r = center_rate(&gmk(0.05), &v).unwrap();
    assert!(b.mu_minus - 1e-3 < r && r < b.mu_plus + 1e-3);
}

#[test]
fn distortion_vanishes_for_linear_maps() {
    let m = gmk(0.0);
    let pl = center_plaque(&m, &TorusPoint::new(0.4, 0.4, 0.4), 0.01, 0.001).unwrap();
    assert!((distortion_estimate(&m, &pl, 3, 1.0).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn holder_bound_dominates_measured_distortion() {
    let m = gmk(0.05);
    let plaques: Vec<_> = sample(4)
        .iter()
        .map(|p| center_plaque(&m, p, 0.01, 0.0005).unwrap())
        .collect();
    let fit = fit_center_holder(&m, &plaques).unwrap();
    assert!(fit.theta > 0.0 && fit.theta <= 1.0 && fit.pairs > 10);
    for pl in &plaques {
        let measured = distortion_estimate(&m, pl, 2, 1.0).unwrap();
        assert!(measured >= 1.0);
        assert!(measured <= holder_distortion_bound(&m, pl, 2, &fit) * (1.0 + 1e-9));
    }
    let long = center_plaque(&m, &TorusPoint::new(0.1, 0.1, 0.1), 0.1, 0.005).unwrap();
    assert!(matches!(
        distortion_estimate(&m, &long, 12, 0.5),
        Err(Error::ScaleExceeded { .. })
    ));
}

#[test]
fn angles() {
    let a = Vec3::new(1.0, 0.0, 0.0);
    let b = Vec3::new(1.0, 1e-9, 0.0);
    assert!((angle(&a, &b) - 1e-9).abs() < 1e-15);
    assert!((line_angle(&a, &(-b)) - 1e-9).abs() < 1e-15);
}

#[test]
fn small_budget_rejected() {
    assert!(matches!(
        splitting_at(&gmk(0.0), &TorusPoint::new(0.0, 0.0, 0.0), 4),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn grid_order() {
    let g = grid(2);
    assert_eq!(g.len(), 8);
    assert_eq!(g[1].coords(), [0.0, 0.0, 0.5]);
    assert_eq!(g[4].coords(), [0.5, 0.0, 0.0]);
}
