//! Strong unstable and stable leaves grown as adaptive polylines.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::splitting::{field, Bundle};
use crate::torus::{integer_part, TorusMap, TorusPoint, Vec3};

/// Default cap on stored nodes for a single leaf.
pub const DEFAULT_NODE_CAP: usize = 4_000_000;
const MAX_RADIUS_OVER_TOL: f64 = 1e4;
const SEED_FRACTION: f64 = 1e-4;
const OVERSHOOT: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LeafKind {
    Uu,
    Ss,
}

impl LeafKind {
    pub fn bundle(self) -> Bundle {
        match self {
            LeafKind::Uu => Bundle::Uu,
            LeafKind::Ss => Bundle::Ss,
        }
    }
}

/// A polyline vertex: a point of R^3 (a lift, so the curve never wraps) and its
/// signed arclength from the base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub lift: Vec3,
    pub s: f64,
}

/// A piece of a strong leaf through `base`, as a polyline in the lift.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSegment {
    pub kind: LeafKind,
    pub base: TorusPoint,
    pub nodes: Vec<Node>,
    pub tol: f64,
    base_index: usize,
}

impl LeafSegment {
    /// Index of the node sitting at the base point (arclength 0).
    pub fn base_index(&self) -> usize {
        self.base_index
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn s_min(&self) -> f64 {
        self.nodes.first().map_or(0.0, |n| n.s)
    }

    pub fn s_max(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.s)
    }

    /// Index of the last node with arclength `<= s` (clamped).
    pub fn segment_index(&self, s: f64) -> usize {
        let k = self.nodes.partition_point(|n| n.s <= s);
        k.saturating_sub(1).min(self.nodes.len().saturating_sub(2))
    }

    /// Node whose arclength is closest to `s`.
    pub fn nearest_node(&self, s: f64) -> &Node {
        let k = self.segment_index(s);
        match self.nodes.get(k + 1) {
            Some(next) if (next.s - s).abs() < (self.nodes[k].s - s).abs() => next,
            _ => &self.nodes[k],
        }
    }

    /// Linear interpolation of the polyline at arclength `s`.
    pub fn point_at(&self, s: f64) -> Vec3 {
        if self.nodes.len() == 1 {
            return self.nodes[0].lift;
        }
        let k = self.segment_index(s);
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        let w = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        a.lift + (b.lift - a.lift) * w
    }

    pub fn spacings(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes
            .windows(2)
            .map(|w| (w[1].lift - w[0].lift).norm())
    }

    pub fn length(&self) -> f64 {
        self.s_max() - self.s_min()
    }
}

/// Parameters for the adaptive growth.
#[derive(Debug, Clone, Copy)]
pub struct GrowOpts {
    pub node_cap: usize,
}

impl Default for GrowOpts {
    fn default() -> Self {
        Self {
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

/// `W^uu(x, R)` as a polyline with node spacing in `[tol/4, tol]`.
pub fn grow_unstable_leaf(
    map: &TorusMap,
    x: &TorusPoint,
    radius: f64,
    tol: f64,
) -> Result<LeafSegment> {
    grow_leaf(map, x, LeafKind::Uu, radius, tol, &GrowOpts::default())
}

/// `W^s(x, eps0)` grown by backward iteration.
pub fn grow_stable_local(
    map: &TorusMap,
    x: &TorusPoint,
    eps0: f64,
    tol: f64,
) -> Result<LeafSegment> {
    if !(tol > 0.0 && tol <= eps0) {
        return Err(Error::InvalidTolerance { tol, limit: eps0 });
    }
    grow_leaf(map, x, LeafKind::Ss, eps0, tol, &GrowOpts::default())
}

struct Grower<'a> {
    map: &'a TorusMap,
    kind: LeafKind,
    seed: Vec3,
    dir: Vec3,
    shifts: Vec<Vec3>,
    sigma_floor: f64,
}

impl Grower<'_> {
    fn step(&self, v: &Vec3) -> Result<Vec3> {
        match self.kind {
            LeafKind::Uu => Ok(self.map.apply_lift(v)),
            LeafKind::Ss => self.map.inverse_lift(v),
        }
    }

    /// Image of the seed point with parameter `sigma` after the recorded steps.
    fn image(&self, sigma: f64) -> Result<Vec3> {
        let mut v = self.seed + self.dir * sigma;
        for shift in &self.shifts {
            v = self.step(&v)? - shift;
        }
        Ok(v)
    }
}

/// Adaptive growth: a tiny segment tangent to the bundle at `g^{-n}(x)` is pushed
/// forward `n` times by `g` (the map for uu, its inverse for ss), inserting
/// seed-parameter midpoints wherever consecutive nodes are more than `tol` apart.
pub fn grow_leaf(
    map: &TorusMap,
    x: &TorusPoint,
    kind: LeafKind,
    radius: f64,
    tol: f64,
    opts: &GrowOpts,
) -> Result<LeafSegment> {
    if !(tol > 0.0) || !(radius >= 0.0) {
        return Err(Error::InvalidTolerance {
            tol,
            limit: f64::INFINITY,
        });
    }
    if radius > MAX_RADIUS_OVER_TOL * tol {
        return Err(Error::BudgetExceeded {
            needed: (4.0 * radius / tol) as usize,
            cap: (4.0 * MAX_RADIUS_OVER_TOL) as usize,
        });
    }
    if radius == 0.0 {
        return Ok(LeafSegment {
            kind,
            base: *x,
            nodes: vec![Node {
                lift: x.lift(),
                s: 0.0,
            }],
            tol,
            base_index: 0,
        });
    }
    let frame = map.reference_frame().ok_or(Error::NoSeparation {
        uu: f64::NAN,
        c: f64::NAN,
        ss: f64::NAN,
    })?;
    let rate = match kind {
        LeafKind::Uu => frame.rates[0],
        LeafKind::Ss => 1.0 / frame.rates[2],
    };
    let s0 = (SEED_FRACTION * tol).min(radius);
    let n0 = ((OVERSHOOT * radius / s0).ln() / rate.ln()).ceil().max(1.0) as usize;
    for n in (n0..).take(6) {
        let nodes = grow_nodes(map, x, kind, n, s0, tol, opts)?;
        if let Some(leaf) = finish(kind, x, nodes, radius, tol) {
            if leaf.len() > opts.node_cap {
                return Err(Error::BudgetExceeded {
                    needed: leaf.len(),
                    cap: opts.node_cap,
                });
            }
            return Ok(leaf);
        }
    }
    Err(Error::BudgetExceeded {
        needed: opts.node_cap + 1,
        cap: opts.node_cap,
    })
}

/// Returns (seed parameter, lift) pairs after `n` steps; the seed parameter 0 maps to `x`.
fn grow_nodes(
    map: &TorusMap,
    x: &TorusPoint,
    kind: LeafKind,
    n: usize,
    s0: f64,
    tol: f64,
    opts: &GrowOpts,
) -> Result<Vec<(f64, Vec3)>> {
    let mut z = *x;
    for _ in 0..n {
        z = match kind {
            LeafKind::Uu => map.apply_inverse(&z)?,
            LeafKind::Ss => map.apply(&z),
        };
    }
    let seed = z.lift();
    let mut g = Grower {
        map,
        kind,
        seed,
        dir: field(map, &seed, kind.bundle())?,
        shifts: Vec::with_capacity(n),
        sigma_floor: s0 * 1e-14,
    };
    let mut nodes: Vec<(f64, Vec3)> = [-s0, 0.0, s0]
        .iter()
        .map(|&s| (s, seed + g.dir * s))
        .collect();
    for _ in 0..n {
        let mut mapped = Vec::with_capacity(nodes.len());
        for (sigma, v) in &nodes {
            mapped.push((*sigma, g.step(v)?));
        }
        let center = mapped
            .iter()
            .find(|(s, _)| *s == 0.0)
            .map(|(_, v)| integer_part(v))
            .unwrap_or_else(Vec3::zeros);
        for (_, v) in mapped.iter_mut() {
            *v -= center;
        }
        g.shifts.push(center);
        nodes = refine(&g, mapped, tol)?;
        if nodes.len() > opts.node_cap.saturating_mul(4) {
            return Err(Error::BudgetExceeded {
                needed: nodes.len(),
                cap: opts.node_cap,
            });
        }
    }
    Ok(nodes)
}

fn refine(g: &Grower<'_>, nodes: Vec<(f64, Vec3)>, tol: f64) -> Result<Vec<(f64, Vec3)>> {
    let mut out = Vec::with_capacity(nodes.len() * 2);
    let mut it = nodes.into_iter();
    let Some(mut prev) = it.next() else {
        return Ok(out);
    };
    out.push(prev);
    for next in it {
        // Depth-first bisection of the gap between prev and next.
        let mut stack = vec![next];
        while let Some(&right) = stack.last() {
            if (right.1 - prev.1).norm() <= tol || (right.0 - prev.0).abs() < g.sigma_floor {
                out.push(right);
                prev = right;
                stack.pop();
            } else {
                let mid = 0.5 * (prev.0 + right.0);
                stack.push((mid, g.image(mid)?));
            }
        }
    }
    Ok(out)
}

fn finish(
    kind: LeafKind,
    x: &TorusPoint,
    nodes: Vec<(f64, Vec3)>,
    radius: f64,
    tol: f64,
) -> Option<LeafSegment> {
    let center = nodes.iter().position(|(s, _)| *s == 0.0)?;
    let mut arc = vec![0.0; nodes.len()];
    for i in center + 1..nodes.len() {
        arc[i] = arc[i - 1] + (nodes[i].1 - nodes[i - 1].1).norm();
    }
    for i in (0..center).rev() {
        arc[i] = arc[i + 1] - (nodes[i + 1].1 - nodes[i].1).norm();
    }
    if arc[0] > -radius || arc[nodes.len() - 1] < radius {
        return None;
    }
    let lo = arc.partition_point(|&a| a < -radius).saturating_sub(1);
    let hi = (arc.partition_point(|&a| a <= radius) + 1).min(nodes.len());
    // Translate so the base node is the canonical lift of x.
    let offset = (x.lift() - nodes[center].1).map(f64::round);
    let mut out: Vec<Node> = (lo..hi)
        .map(|i| Node {
            lift: nodes[i].1 + offset,
            s: arc[i],
        })
        .collect();
    let base_index = center - lo;
    out[base_index].lift = x.lift();
    Some(LeafSegment {
        kind,
        base: *x,
        nodes: out,
        tol,
        base_index,
    })
}
