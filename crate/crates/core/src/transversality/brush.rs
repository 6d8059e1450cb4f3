//! Brushes, side labels, the u-s-u-s defect and the center offset profile between
//! two paired unstable arcs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafwork::flow::{csu_solve, flow, SolverOpts};
use crate::leafwork::leaf::{grow_stable_local, grow_unstable_leaf, LeafSegment};
use crate::leafwork::relations::leaf_point;
use crate::par;
use crate::splitting::Bundle;
use crate::torus::{min_lift_delta, torus_distance, TorusMap, TorusPoint};

/// Offsets below this are indistinguishable from the brush itself.
pub const ON_BRUSH_FLOOR: f64 = 1e-9;

/// Local unstable spine through `base` with a local stable bristle at every node.
#[derive(Debug, Clone)]
pub struct Brush {
    pub base: TorusPoint,
    pub eps0: f64,
    pub spine: LeafSegment,
    pub bristles: Vec<LeafSegment>,
}

pub fn build_brush(map: &TorusMap, x: &TorusPoint, eps0: f64, tol: f64) -> Result<Brush> {
    let spine = grow_unstable_leaf(map, x, eps0, tol)?;
    let bristles = par::map(&spine.nodes, |n| {
        grow_stable_local(map, &TorusPoint::from_lift(&n.lift), eps0, tol)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Brush {
        base: *x,
        eps0,
        spine,
        bristles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

/// Signed center offset of `y` over the brush of `x`: the center leg of the
/// shortest s-u chain from `y` into the brush.
pub fn brush_offset(
    map: &TorusMap,
    x: &TorusPoint,
    eps0: f64,
    y: &TorusPoint,
    opts: &SolverOpts,
) -> Result<f64> {
    let d = torus_distance(x, y);
    if d >= eps0 / 10.0 {
        return Err(Error::Precondition(format!(
            "query {d:.4} from base, need < eps0/10"
        )));
    }
    let sol = csu_solve(map, &y.lift(), &x.lift(), opts)?;
    if sol.u.abs() > eps0 || sol.s.abs() > eps0 {
        return Err(Error::NoIntersection {
            residual: sol.residual,
        });
    }
    Ok(-sol.t)
}

pub fn side_of(map: &TorusMap, brush: &Brush, y: &TorusPoint, opts: &SolverOpts) -> Result<Side> {
    let off = brush_offset(map, &brush.base, brush.eps0, y, opts)?;
    if off.abs() < ON_BRUSH_FLOOR {
        return Err(Error::OnBrush(off));
    }
    Ok(if off > 0.0 { Side::Plus } else { Side::Minus })
}

fn loop_offset(
    map: &TorusMap,
    x: &TorusPoint,
    legs: [(Bundle, f64); 4],
    eps0: f64,
    opts: &SolverOpts,
) -> Result<f64> {
    if legs.iter().any(|(_, l)| l.abs() > eps0) {
        return Err(Error::Precondition("loop legs must not exceed eps0".into()));
    }
    if legs.iter().any(|(_, l)| *l == 0.0) {
        return Ok(0.0);
    }
    let start = x.lift();
    let mut p = start;
    for (b, l) in legs {
        p = flow(map, b, &p, l, opts.flow_step)?;
    }
    Ok(-csu_solve(map, &p, &start, opts)?.t)
}

/// Center offset from `x` of the endpoint of the loop `+len_u` (uu), `+len_s`
/// (ss), `-len_u`, `-len_s`. Zero when `E^uu + E^ss` integrates.
pub fn integrability_defect(
    map: &TorusMap,
    x: &TorusPoint,
    len_u: f64,
    len_s: f64,
    eps0: f64,
    opts: &SolverOpts,
) -> Result<f64> {
    loop_offset(
        map,
        x,
        [
            (Bundle::Uu, len_u),
            (Bundle::Ss, len_s),
            (Bundle::Uu, -len_u),
            (Bundle::Ss, -len_s),
        ],
        eps0,
        opts,
    )
}

/// The same quadrilateral traversed the other way round (stable leg first).
pub fn integrability_defect_reversed(
    map: &TorusMap,
    x: &TorusPoint,
    len_u: f64,
    len_s: f64,
    eps0: f64,
    opts: &SolverOpts,
) -> Result<f64> {
    loop_offset(
        map,
        x,
        [
            (Bundle::Ss, len_s),
            (Bundle::Uu, len_u),
            (Bundle::Ss, -len_s),
            (Bundle::Uu, -len_u),
        ],
        eps0,
        opts,
    )
}

/// A sub-arc `[s0, s1]` (arclength) of a strong unstable leaf.
#[derive(Debug, Clone, Copy)]
pub struct LeafArc<'a> {
    pub leaf: &'a LeafSegment,
    pub s0: f64,
    pub s1: f64,
}

impl LeafArc<'_> {
    pub fn at(&self, t: f64) -> f64 {
        self.s0 + t * (self.s1 - self.s0)
    }
}

/// One sample of the center offset profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiSample {
    /// Arclength on the first arc.
    pub s: f64,
    /// Arclength of the paired point on the second arc.
    pub s_prime: f64,
    /// Center coordinate of the stable projection of the paired point, measured
    /// from the point of the first arc.
    pub phi: f64,
    /// Distance between the paired points.
    pub dist: f64,
    /// Length of the stable leg of the projection.
    pub stable_leg: f64,
}

/// Pairs `gamma(s)` with the point of the second leaf near arclength `guess`.
/// The shooting solve slides the guess along its unstable leaf, so the returned
/// `s_prime` lies in the center-stable plaque of `gamma(s)`.
pub fn pair_at(
    map: &TorusMap,
    leaf: &LeafSegment,
    s: f64,
    partner: &LeafSegment,
    guess: f64,
    opts: &SolverOpts,
) -> Result<PhiSample> {
    let lost = |_| Error::PairingLost(s);
    let g = leaf_point(map, leaf, s, opts).map_err(lost)?;
    let q = leaf_point(map, partner, guess, opts).map_err(lost)?;
    let sol = csu_solve(map, &g, &q, opts).map_err(lost)?;
    let s_prime = guess + sol.u;
    let q = leaf_point(map, partner, s_prime, opts).map_err(lost)?;
    Ok(PhiSample {
        s,
        s_prime,
        phi: sol.t,
        dist: min_lift_delta(&g, &q).norm(),
        stable_leg: sol.s,
    })
}

/// Offset profile between two paired arcs at `samples` evenly spaced parameters.
pub fn phi_profile(
    map: &TorusMap,
    gamma: &LeafArc<'_>,
    gamma_prime: &LeafArc<'_>,
    samples: usize,
    opts: &SolverOpts,
) -> Result<Vec<PhiSample>> {
    let n = samples.max(2);
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    par::map(&ts, |&t| {
        pair_at(
            map,
            gamma.leaf,
            gamma.at(t),
            gamma_prime.leaf,
            gamma_prime.at(t),
            opts,
        )
    })
    .into_iter()
    .collect()
}
