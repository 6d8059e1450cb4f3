mod common;

use common::{gmk, skew};
use nalgebra::Matrix3;
use phlab_core::leafwork::{
    center_plaque, csu_solve, flow, flow_path, grow_stable_local, grow_unstable_leaf, holonomy_uu,
    leaf_point, path_decompose, signed_center_dist, suus_relate, LeafKind, SolverOpts,
};
use phlab_core::splitting::{field, Bundle};
use phlab_core::torus::{min_lift_delta, TorusPoint, Vec3};
use phlab_core::Error;

fn opts() -> SolverOpts {
    SolverOpts::default()
}

#[test]
fn flow_stays_unit_speed() {
    let m = gmk(0.05);
    let p = Vec3::new(0.2, 0.4, 0.6);
    let path = flow_path(&m, Bundle::C, &p, 0.05, 0.005).unwrap();
    let len: f64 = path.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    assert!((len - 0.05).abs() < 1e-6);
    let coarse = flow(&m, Bundle::C, &p, 0.05, 0.01).unwrap();
    let fine = flow(&m, Bundle::C, &p, 0.05, 0.0025).unwrap();
    assert!((coarse - fine).norm() < 1e-6);
}

#[test]
fn flow_reverses() {
    let m = gmk(0.05);
    let p = Vec3::new(0.7, 0.1, 0.3);
    for b in [Bundle::Uu, Bundle::C, Bundle::Ss] {
        let q = flow(&m, b, &p, 0.03, 0.001).unwrap();
        let back = flow(&m, b, &q, -0.03, 0.001).unwrap();
        // E^c is only about C^1.7, which limits RK4 reversibility.
        assert!((back - p).norm() < 1e-8, "{b:?}");
    }
}

#[test]
fn linear_leaves_are_straight() {
    let m = gmk(0.0);
    let x = TorusPoint::new(0.3, 0.6, 0.1);
    let leaf = grow_unstable_leaf(&m, &x, 3.0, 0.01).unwrap();
    let e = common::gmk_eigen()[0].1;
    for n in &leaf.nodes {
        let d = n.lift - x.lift();
        assert!((d - e * d.dot(&e)).norm() < 1e-9);
        assert!((d.norm() - n.s.abs()).abs() < 1e-9);
    }
    assert_eq!(leaf.kind, LeafKind::Uu);
    assert_eq!(leaf.nodes[leaf.base_index()].s, 0.0);
}

#[test]
fn leaf_spacing_and_reach() {
    let m = gmk(0.05);
    let (r, tol) = (20.0, 0.01);
    let leaf = grow_unstable_leaf(&m, &TorusPoint::new(0.3, 0.6, 0.1), r, tol).unwrap();
    assert!(leaf.spacings().all(|h| h > 0.0 && h <= tol * (1.0 + 1e-9)));
    assert!(leaf.s_min() <= -r && leaf.s_max() >= r);
    // Node arclengths agree with the polyline length between them.
    let chord: f64 = leaf
        .nodes
        .windows(2)
        .map(|w| (w[1].lift - w[0].lift).norm())
        .sum();
    assert!((chord - leaf.length()).abs() < 1e-4 * leaf.length());
    // Interior points sit on the true leaf.
    let s = 7.123;
    let p = leaf_point(&m, &leaf, s, &opts()).unwrap();
    let fld = field(&m, &p, Bundle::Uu).unwrap();
    let q = leaf.point_at(s);
    assert!((p - q).norm() < tol * tol);
    assert!(fld.norm() > 0.99);
}

#[test]
fn stable_leaf_contracts_forward() {
    let m = gmk(0.05);
    let x = TorusPoint::new(0.5, 0.5, 0.2);
    let leaf = grow_stable_local(&m, &x, 0.1, 0.005).unwrap();
    let ends = [leaf.nodes[0].lift, leaf.nodes[leaf.len() - 1].lift];
    let span = (ends[1] - ends[0]).norm();
    let image = (m.apply_lift(&ends[1]) - m.apply_lift(&ends[0])).norm();
    assert!(image < 0.3 * span);
    assert!(matches!(
        grow_stable_local(&m, &x, 0.1, 0.5),
        Err(Error::InvalidTolerance { .. })
    ));
}

#[test]
fn leaf_budget_is_guarded() {
    let m = gmk(0.0);
    let x = TorusPoint::new(0.0, 0.0, 0.0);
    assert!(matches!(
        grow_unstable_leaf(&m, &x, 1e3, 0.01),
        Err(Error::BudgetExceeded { .. })
    ));
    assert!(matches!(
        grow_unstable_leaf(&m, &x, 1.0, 0.0),
        Err(Error::InvalidTolerance { .. })
    ));
    assert_eq!(grow_unstable_leaf(&m, &x, 0.0, 0.1).unwrap().len(), 1);
}

#[test]
fn linear_csu_matches_direct_solve() {
    let m = gmk(0.0);
    let y = Vec3::new(0.4, 0.4, 0.4);
    let x = Vec3::new(0.43, 0.38, 0.41);
    let [ec, es, eu] = [Bundle::C, Bundle::Ss, Bundle::Uu].map(|b| field(&m, &y, b).unwrap());
    let v = Matrix3::from_columns(&[ec, es, -eu])
        .lu()
        .solve(&(x - y))
        .unwrap();
    let sol = csu_solve(&m, &y, &x, &opts()).unwrap();
    assert!((Vec3::new(sol.t, sol.s, sol.u) - v).amax() < 1e-12);
}

#[test]
fn perturbed_csu_closes_the_loop() {
    let m = gmk(0.05);
    let y = Vec3::new(0.12, 0.83, 0.55);
    let x = Vec3::new(0.15, 0.80, 0.58);
    let o = opts();
    let sol = csu_solve(&m, &y, &x, &o).unwrap();
    let a = flow(
        &m,
        Bundle::Ss,
        &flow(&m, Bundle::C, &y, sol.t, o.flow_step).unwrap(),
        sol.s,
        o.flow_step,
    )
    .unwrap();
    let b = flow(&m, Bundle::Uu, &x, sol.u, o.flow_step).unwrap();
    assert!((a - b).norm() < 1e-10);
    // The nearest lift of x is used.
    let shifted = csu_solve(&m, &y, &(x + Vec3::new(1.0, -2.0, 3.0)), &o).unwrap();
    assert!((shifted.t - sol.t).abs() < 1e-9);
}

#[test]
fn path_decomposition_joins_the_points() {
    let m = gmk(0.05);
    let y = TorusPoint::new(0.2, 0.2, 0.2);
    let x = TorusPoint::new(0.22, 0.19, 0.23);
    let pd = path_decompose(&m, &x, &y, 1.0, &opts()).unwrap();
    assert!((pd.sigma1[0] - y.lift()).norm() < 1e-15);
    assert!((pd.sigma1.last().unwrap() - pd.sigma2[0]).norm() < 1e-15);
    assert!((pd.sigma2.last().unwrap() - pd.sigma3[0]).norm() < 1e-6);
    assert!(min_lift_delta(&pd.end(), &x.lift()).norm() < 1e-12);
    assert!((pd.rho_c - pd.solve.t.abs()).abs() == 0.0);
    let far = TorusPoint::new(0.7, 0.7, 0.7);
    let r = path_decompose(&m, &far, &y, 1.0, &opts());
    assert!(matches!(r, Err(Error::Precondition(_))), "{r:?}");
}

#[test]
fn plaque_parameters() {
    let m = gmk(0.05);
    let x = TorusPoint::new(0.6, 0.3, 0.9);
    let pl = center_plaque(&m, &x, 0.02, 0.001).unwrap();
    assert!(pl.params.windows(2).all(|w| w[1] > w[0]));
    assert!((pl.point_at(0.0) - x.lift()).norm() < 1e-15);
    let (lo, hi) = pl.param_range();
    assert!(lo <= -0.02 + 1e-12 && hi >= 0.02 - 1e-12);
    let a = flow(&m, Bundle::C, &x.lift(), -0.007, 1e-4).unwrap();
    let b = flow(&m, Bundle::C, &x.lift(), 0.011, 1e-4).unwrap();
    let d = signed_center_dist(&pl, &a, &b).unwrap();
    assert!((d - 0.018).abs() < 1e-6);
    assert!((signed_center_dist(&pl, &b, &a).unwrap() + d).abs() < 1e-15);
    let off = x.lift() + Vec3::new(0.0, 0.0, 0.01);
    assert!(matches!(pl.param_of(&off), Err(Error::NotOnPlaque { .. })));
}

#[test]
fn linear_holonomy_is_a_translation() {
    let m = gmk(0.0);
    let x = TorusPoint::new(0.3, 0.6, 0.1);
    let pl = center_plaque(&m, &x, 0.05, 0.001).unwrap();
    let leaf = grow_unstable_leaf(&m, &x, 2.0, 0.01).unwrap();
    let targets = [-0.02, 0.0, 0.015];
    let imgs = holonomy_uu(&m, &pl, &leaf, 1.3, &targets, &opts()).unwrap();
    for (t, img) in targets.iter().zip(&imgs) {
        assert!((img.param - t).abs() < 1e-9);
    }
}

#[test]
fn perturbed_holonomy_preserves_order_and_base() {
    let m = gmk(0.05);
    let x = TorusPoint::new(0.3, 0.6, 0.1);
    let pl = center_plaque(&m, &x, 0.05, 0.001).unwrap();
    let leaf = grow_unstable_leaf(&m, &x, 2.0, 0.01).unwrap();
    let imgs = holonomy_uu(&m, &pl, &leaf, 0.8, &[-0.01, 0.0, 0.01], &opts()).unwrap();
    assert!(imgs[1].param.abs() < 1e-6);
    assert!(imgs[0].param < 0.0 && imgs[2].param > 0.0);
}

#[test]
fn suus_relation_on_linear_map() {
    let m = gmk(0.0);
    let z = TorusPoint::new(0.5, 0.5, 0.5);
    let eu = field(&m, &z.lift(), Bundle::Uu).unwrap();
    let ec = field(&m, &z.lift(), Bundle::C).unwrap();
    let z_prime = TorusPoint::from_lift(&(z.lift() + eu * 0.05));
    let x = z.lift() + ec * 0.01;
    let w = suus_relate(&m, &x, &z, &z_prime, 0.0, 1.0, &opts()).unwrap();
    assert!((w.param - 0.01).abs() < 1e-12);
    assert!((w.u + 0.05).abs() < 1e-12 || (w.u - 0.05).abs() < 1e-12);
    let far = TorusPoint::new(0.0, 0.0, 0.0);
    assert!(matches!(
        suus_relate(&m, &x, &z, &far, 0.0, 1.0, &opts()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn skew_center_leaves_are_vertical() {
    let m = skew(0.0);
    let x = TorusPoint::new(0.1, 0.9, 0.3);
    let pl = center_plaque(&m, &x, 0.1, 0.01).unwrap();
    for p in &pl.nodes {
        assert!((p.x - 0.1).abs() < 1e-12 && (p.y - 0.9).abs() < 1e-12);
    }
}
