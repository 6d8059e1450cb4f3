//! Plaque paths, uu-holonomy between center plaques, and the suus relation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafwork::flow::{csu_solve, csu_solve_lifted, flow, flow_path, Csu, SolverOpts};
use crate::leafwork::leaf::LeafSegment;
use crate::leafwork::plaque::CenterPlaque;
use crate::splitting::Bundle;
use crate::torus::{min_lift_delta, TorusMap, TorusPoint, Vec3};

/// The path `sigma1 . sigma2 . sigma3` from `y` to `x`: center, then stable, then
/// the unstable leaf of `x` traversed back to `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDecomposition {
    pub rho_c: f64,
    pub rho_s: f64,
    pub sigma1: Vec<Vec3>,
    pub sigma2: Vec<Vec3>,
    pub sigma3: Vec<Vec3>,
    pub solve: Csu,
}

impl PathDecomposition {
    pub fn end(&self) -> Vec3 {
        *self.sigma3.last().expect("sigma3 is never empty")
    }
}

/// Decomposes the displacement from `y` to `x` into center, stable and unstable legs.
pub fn path_decompose(
    map: &TorusMap,
    x: &TorusPoint,
    y: &TorusPoint,
    eps0: f64,
    opts: &SolverOpts,
) -> Result<PathDecomposition> {
    let d = min_lift_delta(&y.lift(), &x.lift()).norm();
    if d >= eps0 / 2.0 {
        return Err(Error::Precondition(format!(
            "points {d:.4} apart, need < eps0/2"
        )));
    }
    let yl = y.lift();
    let xl = yl + min_lift_delta(&yl, &x.lift());
    let opts = SolverOpts {
        box_size: eps0,
        ..*opts
    };
    let sol = csu_solve_lifted(map, &yl, &xl, &opts)?;
    let step = opts.flow_step;
    let sigma1 = flow_path(map, Bundle::C, &yl, sol.t, step)?;
    let corner = *sigma1.last().expect("nonempty path");
    let sigma2 = flow_path(map, Bundle::Ss, &corner, sol.s, step)?;
    let mut sigma3 = flow_path(map, Bundle::Uu, &xl, sol.u, step)?;
    sigma3.reverse();
    Ok(PathDecomposition {
        rho_c: sol.t.abs(),
        rho_s: sol.s.abs(),
        sigma1,
        sigma2,
        sigma3,
        solve: sol,
    })
}

/// Image of a point under uu-holonomy, with its parameter on the target plaque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolonomyImage {
    pub param: f64,
    #[serde(skip)]
    pub lift: Vec3,
}

/// Arclength along which local solves are trusted.
const LOCAL_UU: f64 = 0.1;

/// Transports points of `source` (given by plaque parameter) to the center plaque
/// through the point of `leaf` at arclength `s_prime`. Long leaf distances are
/// handled by iterating backward until the two base points are close, solving
/// there, and iterating the solutions forward again.
pub fn holonomy_uu(
    map: &TorusMap,
    source: &CenterPlaque,
    leaf: &LeafSegment,
    s_prime: f64,
    targets: &[f64],
    opts: &SolverOpts,
) -> Result<Vec<HolonomyImage>> {
    let x_prime = leaf_point(map, leaf, s_prime, opts)?;
    let points: Vec<Vec3> = targets.iter().map(|&t| source.point_at(t)).collect();
    let images = transport_uu(map, &x_prime, &points, s_prime.abs(), opts)?;
    check_order(targets, &images)?;
    Ok(images)
}

/// Exact leaf point at arclength `s` (flowing from the nearest node).
pub fn leaf_point(map: &TorusMap, leaf: &LeafSegment, s: f64, opts: &SolverOpts) -> Result<Vec3> {
    let node = leaf.nearest_node(s);
    flow(
        map,
        leaf.kind.bundle(),
        &node.lift,
        s - node.s,
        opts.flow_step,
    )
}

/// Holonomy along unstable leaves from the points `ys` (on one center plaque) to the
/// center plaque through `x_prime`, where `uu_dist` bounds the leaf distance.
pub fn transport_uu(
    map: &TorusMap,
    x_prime: &Vec3,
    ys: &[Vec3],
    uu_dist: f64,
    opts: &SolverOpts,
) -> Result<Vec<HolonomyImage>> {
    let rate = map
        .reference_frame()
        .map(|f| f.rates[0] * 0.75)
        .ok_or(Error::LeafMiss)?;
    let mut k = 0usize;
    while uu_dist / rate.powi(k as i32) > LOCAL_UU {
        k += 1;
    }
    let back = |v: &Vec3| -> Result<Vec3> {
        let mut p = *v;
        for _ in 0..k {
            p = map.inverse_lift(&p)?;
        }
        Ok(p)
    };
    // Center errors of the local solve grow like the center rate to the k-th
    // power on the way forward, so the local flows use a finer step.
    let local = SolverOpts {
        flow_step: opts.flow_step / if k > 0 { 4.0 } else { 1.0 },
        ..*opts
    };
    let xb = back(x_prime)?;
    let mut out = Vec::with_capacity(ys.len());
    for y in ys {
        let yb = back(y)?;
        let sol = csu_solve(map, &xb, &yb, &local).map_err(|_| Error::LeafMiss)?;
        let mut q = flow(map, Bundle::C, &xb, sol.t, local.flow_step)?;
        for _ in 0..k {
            q = map.apply_lift(&q);
        }
        // Forward iteration amplifies solver noise along uu; project it back.
        let fix = csu_solve(map, x_prime, &q, opts).map_err(|_| Error::LeafMiss)?;
        let lift = flow(map, Bundle::C, x_prime, fix.t, opts.flow_step)?;
        out.push(HolonomyImage { param: fix.t, lift });
    }
    Ok(out)
}

fn check_order(sources: &[f64], images: &[HolonomyImage]) -> Result<()> {
    for i in 0..sources.len() {
        for j in i + 1..sources.len() {
            let ds = sources[j] - sources[i];
            let di = images[j].param - images[i].param;
            if ds != 0.0 && (di == 0.0 || ds.signum() != di.signum()) {
                return Err(Error::LeafMiss);
            }
        }
    }
    Ok(())
}

/// Witness of `x ~ x'`: stable leg from `x` to `x''`, unstable leg from `x''`,
/// stable leg onto the plaque of `z'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuusWitness {
    #[serde(skip)]
    pub x_prime: Vec3,
    pub param: f64,
    pub s_first: f64,
    pub u: f64,
    pub s_last: f64,
}

/// Relates `x` (a point near the plaque of `z`) to a point of the center plaque of
/// `z_prime` through an s-u-s chain. `s_first` is the length of the initial stable
/// leg (0 takes `x'' = x`).
pub fn suus_relate(
    map: &TorusMap,
    x: &Vec3,
    z: &TorusPoint,
    z_prime: &TorusPoint,
    s_first: f64,
    eps0: f64,
    opts: &SolverOpts,
) -> Result<SuusWitness> {
    if min_lift_delta(&z.lift(), &z_prime.lift()).norm() >= eps0 / 2.0 {
        return Err(Error::Precondition("plaque bases too far apart".into()));
    }
    let x2 = flow(map, Bundle::Ss, x, s_first, opts.flow_step).map_err(|_| Error::NoChain)?;
    let zp = z_prime.lift();
    let sol = csu_solve(map, &zp, &x2, opts).map_err(|_| Error::NoChain)?;
    let x_prime = flow(map, Bundle::C, &zp, sol.t, opts.flow_step)?;
    Ok(SuusWitness {
        x_prime,
        param: sol.t,
        s_first,
        u: sol.u,
        s_last: sol.s,
    })
}
