mod common;

use common::gmk;
use phlab_core::leafwork::{grow_unstable_leaf, SolverOpts};
use phlab_core::splitting::{field, Bundle};
use phlab_core::torus::{TorusPoint, Vec3};
use phlab_core::transversality::{
    brush_offset, build_brush, build_even_chain, cu_disk_witness, find_hex_loop,
    integrability_defect, integrability_defect_reversed, pair_at, phi_profile, ratio_error,
    remeasure, revalidate, side_of, ChainOpts, EvenSpacedChain, HexOpts, LeafArc, Side,
};
use phlab_core::Error;

fn opts() -> SolverOpts {
    SolverOpts::default()
}

fn along(x: &TorusPoint, b: Bundle, d: f64) -> TorusPoint {
    let m = gmk(0.0);
    TorusPoint::from_lift(&(x.lift() + field(&m, &x.lift(), b).unwrap() * d))
}

#[test]
fn linear_brush_offsets_are_center_displacements() {
    let m = gmk(0.0);
    let x = TorusPoint::new(0.3, 0.6, 0.1);
    let brush = build_brush(&m, &x, 0.2, 0.02).unwrap();
    assert_eq!(brush.bristles.len(), brush.spine.len());
    for d in [-0.004, 0.0025] {
        let y = along(&along(&x, Bundle::C, d), Bundle::Ss, 0.003);
        let off = brush_offset(&m, &x, 0.2, &y, &opts()).unwrap();
        assert!((off - d).abs() < 1e-12, "{off} vs {d}");
    }
    let plus = along(&x, Bundle::C, 0.001);
    let minus = along(&x, Bundle::C, -0.001);
    assert_eq!(side_of(&m, &brush, &plus, &opts()).unwrap(), Side::Plus);
    assert_eq!(side_of(&m, &brush, &minus, &opts()).unwrap(), Side::Minus);
    let on = along(&along(&x, Bundle::Uu, 0.005), Bundle::Ss, -0.004);
    assert!(matches!(
        side_of(&m, &brush, &on, &opts()),
        Err(Error::OnBrush(_))
    ));
    let far = TorusPoint::new(0.8, 0.1, 0.6);
    assert!(matches!(
        brush_offset(&m, &x, 0.2, &far, &opts()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn sides_are_stable_under_perturbation() {
    let m = gmk(0.05);
    let x = TorusPoint::new(0.45, 0.15, 0.75);
    let brush = build_brush(&m, &x, 0.2, 0.02).unwrap();
    let ec = field(&m, &x.lift(), Bundle::C).unwrap();
    let plus = TorusPoint::from_lift(&(x.lift() + ec * 0.003));
    let minus = TorusPoint::from_lift(&(x.lift() - ec * 0.003));
    assert_eq!(side_of(&m, &brush, &plus, &opts()).unwrap(), Side::Plus);
    assert_eq!(side_of(&m, &brush, &minus, &opts()).unwrap(), Side::Minus);
}

#[test]
fn defect_vanishes_without_perturbation() {
    let m = gmk(0.0);
    let x = TorusPoint::new(0.1, 0.2, 0.3);
    assert!(
        integrability_defect(&m, &x, 0.05, 0.05, 1.0, &opts())
            .unwrap()
            .abs()
            < 1e-12
    );
    assert!(
        integrability_defect_reversed(&m, &x, 0.05, 0.05, 1.0, &opts())
            .unwrap()
            .abs()
            < 1e-12
    );
}

#[test]
fn defect_is_resolution_independent() {
    let m = gmk(0.05);
    let x = TorusPoint::new(0.1, 0.2, 0.3);
    let d = integrability_defect(&m, &x, 0.02, 0.02, 1.0, &opts()).unwrap();
    let dh = integrability_defect(&m, &x, 0.02, 0.02, 1.0, &opts().halved()).unwrap();
    assert!(d.abs() > 1e-6);
    assert!((d - dh).abs() < 0.01 * d.abs());
    assert_eq!(
        integrability_defect(&m, &x, 0.0, 0.02, 1.0, &opts()).unwrap(),
        0.0
    );
    assert!(matches!(
        integrability_defect(&m, &x, 2.0, 0.02, 1.0, &opts()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn center_translate_has_constant_profile() {
    let m = gmk(0.0);
    let x = TorusPoint::new(0.3, 0.6, 0.1);
    let delta = 0.004;
    let xp = along(&x, Bundle::C, delta);
    let a = grow_unstable_leaf(&m, &x, 1.0, 0.01).unwrap();
    let b = grow_unstable_leaf(&m, &xp, 1.0, 0.01).unwrap();
    let ga = LeafArc {
        leaf: &a,
        s0: -0.5,
        s1: 0.5,
    };
    let gb = LeafArc {
        leaf: &b,
        s0: -0.5,
        s1: 0.5,
    };
    let prof = phi_profile(&m, &ga, &gb, 11, &opts()).unwrap();
    assert_eq!(prof.len(), 11);
    for p in &prof {
        assert!((p.phi - delta).abs() < 1e-12);
        assert!((p.s_prime - p.s).abs() < 1e-9);
        assert!((p.dist - delta).abs() < 1e-12);
    }
    let far = grow_unstable_leaf(&m, &TorusPoint::new(0.8, 0.1, 0.6), 0.2, 0.01).unwrap();
    assert_eq!(
        pair_at(&m, &a, 0.0, &far, 0.0, &opts()).unwrap_err(),
        Error::PairingLost(0.0)
    );
}

#[test]
fn no_loops_for_the_linear_map() {
    let m = gmk(0.0);
    let x = TorusPoint::new(0.3, 0.6, 0.1);
    assert!(find_hex_loop(&m, &x, 200.0, 0.1, &HexOpts::default())
        .unwrap()
        .is_none());
    assert!(matches!(
        find_hex_loop(&m, &x, 200.0, 0.5, &HexOpts::default()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn perturbed_loop_changes_sign() {
    let m = gmk(0.05);
    let opts = HexOpts::default();
    let hex = find_hex_loop(&m, &TorusPoint::new(0.3, 0.6, 0.1), 200.0, 0.1, &opts)
        .unwrap()
        .expect("loop within R = 200");
    assert!(hex.chi >= opts.chi_min);
    let phis: Vec<f64> = hex.phi.iter().map(|p| p.phi).collect();
    let (first, last) = (phis[0], phis[phis.len() - 1]);
    assert!(first * last < 0.0);
    assert!(first.abs().min(last.abs()) >= hex.chi * (1.0 - 1e-12));
    assert!(hex.phi.iter().all(|p| p.dist < hex.tau));
    assert!(hex.phi.windows(2).all(|w| w[1].s > w[0].s));
    assert!(revalidate(&m, &hex, &opts));
    let s = hex.summary();
    assert_eq!(s.shift, hex.shift);
    assert!(s.max_dist < 0.1);
}

#[test]
fn ratio_error_oracle() {
    assert!(ratio_error(&[0.4, 0.3, 0.2, 0.1, 0.0]) < 1e-12);
    // d(x0, x2) = 0.25 against 2 * 0.1: error 0.25.
    assert!((ratio_error(&[0.0, 0.1, 0.25]) - 0.25).abs() < 1e-12);
    assert_eq!(ratio_error(&[0.0, 0.0, 0.1]), f64::INFINITY);
    assert_eq!(ratio_error(&[0.0, 0.1]), 0.0);
}

#[test]
fn linear_chain_spans_a_flat_cu_disk() {
    let m = gmk(0.0);
    let base = TorusPoint::new(0.2, 0.5, 0.8).lift();
    let params: Vec<f64> = (0..=8).rev().map(|i| 0.001 * i as f64).collect();
    let chain = EvenSpacedChain::on_plaque(&m, base, params, &opts()).unwrap();
    assert_eq!(chain.n, 8);
    assert!((chain.spacing() - 0.001).abs() < 1e-15);
    assert!(chain.max_ratio_error < 1e-12);
    let re = remeasure(&m, &chain).unwrap();
    assert!(re.max_param_deviation < 1e-9 && re.max_ratio_error < 1e-9);
    let w = cu_disk_witness(&m, &chain, 0.008, &opts()).unwrap();
    assert_eq!((w.rows, w.cols), (9, 17));
    assert!(w.tangency_residual < 1e-9);
    let half = chain.scaled(&m, 0.5, &opts()).unwrap();
    assert!((half.diam - 0.004).abs() < 1e-15);
    let short = EvenSpacedChain::on_plaque(&m, base, vec![0.002, 0.001, 0.0], &opts()).unwrap();
    assert!(matches!(
        cu_disk_witness(&m, &short, 0.01, &opts()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn drift_fails_without_loops() {
    let m = gmk(0.0);
    let err = build_even_chain(
        &m,
        &TorusPoint::new(0.3, 0.6, 0.1),
        2,
        0.02,
        0.2,
        &ChainOpts::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::NoCrossing(_)));
    let trivial = EvenSpacedChain::trivial(&TorusPoint::new(0.1, 0.1, 0.1));
    assert_eq!((trivial.n, trivial.spacing()), (0, 0.0));
    assert_eq!(trivial.points[0], Vec3::new(0.1, 0.1, 0.1));
}
