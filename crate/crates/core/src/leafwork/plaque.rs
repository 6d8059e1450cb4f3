//! Center plaques: integral curves of the oriented unit center field, carrying a
//! signed arclength parameter.

use crate::error::{Error, Result};
use crate::leafwork::flow::flow_path;
use crate::splitting::Bundle;
use crate::torus::{min_lift_delta, TorusMap, TorusPoint, Vec3};

/// Polyline approximation of the center plaque through `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterPlaque {
    pub base: TorusPoint,
    /// Lift points, ordered by increasing parameter.
    pub nodes: Vec<Vec3>,
    /// Signed arclength parameter of each node; the base sits at 0.
    pub params: Vec<f64>,
    /// +1 when the parameter increases along the reference center direction.
    pub orientation: i8,
    pub tol: f64,
}

/// Integrates the unit center field from `x` for parameter range `[-eps, eps]`
/// with RK4 steps of size at most `tol`.
pub fn center_plaque(map: &TorusMap, x: &TorusPoint, eps: f64, tol: f64) -> Result<CenterPlaque> {
    if !(tol > 0.0 && tol <= eps) {
        return Err(Error::InvalidTolerance { tol, limit: eps });
    }
    let start = x.lift();
    let fail = |e: Error| Error::FrameFailure(e.to_string());
    let back = flow_path(map, Bundle::C, &start, -eps, tol).map_err(fail)?;
    let fwd = flow_path(map, Bundle::C, &start, eps, tol).map_err(fail)?;
    let n_back = back.len() - 1;
    let h = eps / n_back as f64;
    let mut nodes: Vec<Vec3> = back.into_iter().rev().collect();
    nodes.extend(fwd.into_iter().skip(1));
    let params = (0..nodes.len())
        .map(|i| (i as f64 - n_back as f64) * h)
        .collect();
    Ok(CenterPlaque {
        base: *x,
        nodes,
        params,
        orientation: 1,
        tol,
    })
}

impl CenterPlaque {
    /// Builds a plaque from an already integrated polyline through the base.
    pub fn from_parts(base: TorusPoint, nodes: Vec<Vec3>, params: Vec<f64>, tol: f64) -> Self {
        Self {
            base,
            nodes,
            params,
            orientation: 1,
            tol,
        }
    }

    pub fn base_lift(&self) -> Vec3 {
        self.base.lift()
    }

    pub fn param_range(&self) -> (f64, f64) {
        (self.params[0], self.params[self.params.len() - 1])
    }

    /// Lift point at parameter `t`, interpolated linearly between nodes.
    pub fn point_at(&self, t: f64) -> Vec3 {
        let k = self
            .params
            .partition_point(|&p| p <= t)
            .clamp(1, self.params.len() - 1)
            - 1;
        let (a, b) = (self.params[k], self.params[k + 1]);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        self.nodes[k] + (self.nodes[k + 1] - self.nodes[k]) * w
    }

    /// Parameter of the orthogonal projection of `p` onto the polyline, with the
    /// distance to it. `p` may be any lift; the nearest lift is used.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        let q = self.base_lift() + min_lift_delta(&self.base_lift(), p);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..self.nodes.len() - 1 {
            let (a, b) = (self.nodes[k], self.nodes[k + 1]);
            let ab = b - a;
            let w = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (a + ab * w - q).norm();
            if d < best.0 {
                best = (
                    d,
                    self.params[k] + w * (self.params[k + 1] - self.params[k]),
                );
            }
        }
        (best.1, best.0)
    }

    /// Distance threshold for plaque membership: the chord error of the polyline
    /// plus a solver-level floor.
    pub fn membership_tol(&self) -> f64 {
        (2.0 * self.tol * self.tol).max(1e-7)
    }

    /// Parameter of a point known to lie on the plaque.
    pub fn param_of(&self, p: &Vec3) -> Result<f64> {
        let (t, d) = self.project(p);
        if d > self.membership_tol() {
            return Err(Error::NotOnPlaque { distance: d });
        }
        Ok(t)
    }
}

/// Signed center distance `param(b) - param(a)` in the plaque orientation.
pub fn signed_center_dist(plaque: &CenterPlaque, a: &Vec3, b: &Vec3) -> Result<f64> {
    Ok((plaque.param_of(b)? - plaque.param_of(a)?) * f64::from(plaque.orientation))
}
