mod common;

use common::{gmk, gmk_eigen, halton, skew};
use phlab_core::leafwork::{grow_unstable_leaf, SolverOpts};
use phlab_core::par::Exec;
use phlab_core::sh_gibbs::{
    compensated_sum, density_report, fit_section, in_section, sh_certificate, ugibbs_histogram,
    uu_section_sample, GibbsOpts,
};
use phlab_core::torus::TorusPoint;
use phlab_core::Error;

fn opts() -> SolverOpts {
    SolverOpts::default()
}

fn points(n: usize, skip: usize) -> Vec<TorusPoint> {
    halton(n + skip)
        .into_iter()
        .skip(skip)
        .map(|[x, y, z]| TorusPoint::new(x, y, z))
        .collect()
}

#[test]
fn linear_certificate_recovers_center_eigenvalue() {
    let mu = gmk_eigen()[1].0;
    let c = sh_certificate(
        &gmk(0.0),
        &TorusPoint::new(0.3, 0.6, 0.1),
        5.0,
        40,
        9,
        &opts(),
    )
    .unwrap();
    assert!((c.lambda_sh - mu).abs() < 1e-9);
    assert!((c.c - 1.0).abs() < 1e-6);
    assert!(c.n_checked >= 40 && c.candidates == 9);
    assert!(in_section(&gmk(0.0), &c.y.lift(), c.c, c.lambda_sh, 40, 40).unwrap());
}

#[test]
fn perturbed_certificate_expands() {
    let c = sh_certificate(
        &gmk(0.05),
        &TorusPoint::new(0.7, 0.2, 0.4),
        5.0,
        40,
        9,
        &opts(),
    )
    .unwrap();
    assert!(c.lambda_sh > 1.0 && c.c >= 1.0 - 1e-12);
    assert!(c.y_arclength.abs() <= 5.0 + 1e-9);
}

#[test]
fn neutral_center_has_no_certificate() {
    let err = sh_certificate(
        &skew(0.0),
        &TorusPoint::new(0.3, 0.6, 0.1),
        5.0,
        40,
        9,
        &opts(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::NoCandidate(l) if (l - 1.0).abs() < 1e-9));
    assert!(matches!(
        sh_certificate(
            &gmk(0.0),
            &TorusPoint::new(0.3, 0.6, 0.1),
            5.0,
            5,
            9,
            &opts()
        ),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn fitted_section_keeps_its_training_sample() {
    let m = gmk(0.05);
    let train = points(24, 0);
    let (c, lambda) = fit_section(&m, &train, 20).unwrap();
    assert!(lambda > 1.0);
    let own = uu_section_sample(&m, c, lambda, &train, 20, &opts()).unwrap();
    assert_eq!(own.retained_fraction, 1.0);
    assert_eq!(own.max_gap, 0.0);
    let fresh = uu_section_sample(&m, c, lambda, &points(40, 24), 20, &opts()).unwrap();
    assert!(
        fresh.retained_fraction >= 0.9,
        "{}",
        fresh.retained_fraction
    );
    assert!(fresh.max_gap.is_finite());
    assert!(matches!(
        uu_section_sample(&m, c, 1.0, &train, 20, &opts()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn compensated_sum_recovers_cancelled_terms() {
    let xs = [1e16, 1.0, -1e16];
    assert_eq!(xs.iter().sum::<f64>(), 0.0);
    assert_eq!(compensated_sum(xs), 1.0);
    assert_eq!(compensated_sum(std::iter::repeat(0.1).take(10)), 1.0);
}

#[test]
fn density_grows_with_radius_and_ignores_schedule() {
    let m = gmk(0.05);
    let x = TorusPoint::new(0.3, 0.6, 0.1);
    let small = density_report(&m, &x, 5.0, 16, Exec::Seq).unwrap();
    let large = density_report(&m, &x, 10.0, 16, Exec::Seq).unwrap();
    assert!(large.coverage >= small.coverage && small.coverage > 0.0);
    let par = density_report(&m, &x, 10.0, 16, Exec::Par).unwrap();
    assert_eq!(par.coverage, large.coverage);
    assert_eq!(par.empty_cells, large.empty_cells);
    let empty = (large.coverage * 16f64.powi(3)).round() as usize + large.empty_cells.len();
    assert_eq!(empty, 4096);
    assert!(matches!(
        density_report(&m, &x, 5.0, 8, Exec::Seq),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn linear_pushforward_equidistributes() {
    let m = gmk(0.0);
    let seed = grow_unstable_leaf(&m, &TorusPoint::new(0.3, 0.6, 0.1), 0.05, 0.01).unwrap();
    let h = ugibbs_histogram(&m, &seed, 10, 8, &GibbsOpts::default()).unwrap();
    assert_eq!(h.bins.len(), 512);
    assert!((compensated_sum(h.bins.iter().copied()) - 1.0).abs() < 1e-12);
    assert!(h.mass_defects.iter().all(|d| *d <= 1e-12));
    assert_eq!(h.mass_defects.len(), 11);
    assert!(h.tv_uniform() < 0.05, "{}", h.tv_uniform());
    assert_eq!(h.tv(&h.bins), 0.0);
    let csv = h.to_csv();
    assert_eq!(csv.lines().count(), 513);
    assert!(csv.starts_with("i,j,k,mass\n0,0,0,"));
}

#[test]
fn pushforward_is_schedule_independent() {
    let m = gmk(0.05);
    let seed = grow_unstable_leaf(&m, &TorusPoint::new(0.8, 0.1, 0.55), 0.05, 0.01).unwrap();
    let run = |exec| {
        let o = GibbsOpts {
            exec,
            ..GibbsOpts::default()
        };
        ugibbs_histogram(&m, &seed, 6, 16, &o).unwrap()
    };
    let (a, b) = (run(Exec::Seq), run(Exec::Par));
    assert_eq!(a.bins, b.bins);
    assert_eq!(a.nodes, b.nodes);
}

#[test]
fn pushforward_respects_node_cap() {
    let m = gmk(0.05);
    let seed = grow_unstable_leaf(&m, &TorusPoint::new(0.8, 0.1, 0.55), 0.05, 0.01).unwrap();
    let o = GibbsOpts {
        node_cap: 1000,
        ..GibbsOpts::default()
    };
    assert!(matches!(
        ugibbs_histogram(&m, &seed, 12, 16, &o),
        Err(Error::NodeBudgetExceeded { .. })
    ));
}
