//! Integral curves of the unit bundle fields and the three-leg shooting solve
//! underlying every intersection problem (path decomposition, sides, holonomy).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::splitting::{field, Bundle};
use crate::torus::{min_lift_delta, Mat3, TorusMap, Vec3};

/// Knobs shared by the flow integrator and the shooting solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOpts {
    /// Largest RK4 step along a bundle curve.
    pub flow_step: f64,
    /// Residual at which Newton iteration stops early.
    pub tol: f64,
    /// Largest residual still accepted once the iteration cap is hit.
    pub accept: f64,
    pub max_iter: usize,
    /// Bound on each leg length; solutions outside count as misses.
    pub box_size: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            flow_step: 0.005,
            tol: 1e-13,
            accept: 1e-8,
            max_iter: 60,
            box_size: 0.5,
        }
    }
}

impl SolverOpts {
    /// Same solver with every tolerance halved.
    pub fn halved(&self) -> Self {
        Self {
            flow_step: self.flow_step / 2.0,
            tol: self.tol / 2.0,
            accept: self.accept / 2.0,
            ..*self
        }
    }
}

/// Point reached by following the unit `bundle` field for signed time `t`: full
/// RK4 steps of size `step` followed by one remainder step, so the result is
/// continuous in `t`.
pub fn flow(map: &TorusMap, bundle: Bundle, start: &Vec3, t: f64, step: f64) -> Result<Vec3> {
    if t == 0.0 {
        return Ok(*start);
    }
    if map.is_linear() {
        return Ok(start + field(map, start, bundle)? * t);
    }
    let full = (t.abs() / step).floor();
    let h = step.copysign(t);
    let mut p = *start;
    for _ in 0..full as usize {
        p = rk4(map, bundle, &p, h)?;
    }
    let rest = t - full * h;
    if rest != 0.0 {
        p = rk4(map, bundle, &p, rest)?;
    }
    Ok(p)
}

/// Polyline of the integral curve from `start`, with `ceil(|t|/step)` equal steps.
pub fn flow_path(
    map: &TorusMap,
    bundle: Bundle,
    start: &Vec3,
    t: f64,
    step: f64,
) -> Result<Vec<Vec3>> {
    let n = (t.abs() / step).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let mut path = Vec::with_capacity(n + 1);
    path.push(*start);
    for i in 0..n {
        let next = if map.is_linear() {
            start + field(map, start, bundle)? * (h * (i + 1) as f64)
        } else {
            rk4(map, bundle, &path[i], h)?
        };
        path.push(next);
    }
    Ok(path)
}

fn rk4(map: &TorusMap, bundle: Bundle, p: &Vec3, h: f64) -> Result<Vec3> {
    let k1 = field(map, p, bundle)?;
    let k2 = field(map, &(p + k1 * (h / 2.0)), bundle)?;
    let k3 = field(map, &(p + k2 * (h / 2.0)), bundle)?;
    let k4 = field(map, &(p + k3 * h), bundle)?;
    Ok(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Solution of `S(C(y, t), s) = U(x, u)`: a center leg from `y`, a stable leg,
/// and an unstable leg back to `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Csu {
    pub t: f64,
    pub s: f64,
    pub u: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn csu_residual(map: &TorusMap, y: &Vec3, x: &Vec3, v: &Vec3, step: f64) -> Result<Vec3> {
    let c = flow(map, Bundle::C, y, v[0], step)?;
    let s = flow(map, Bundle::Ss, &c, v[1], step)?;
    let u = flow(map, Bundle::Uu, x, v[2], step)?;
    Ok(s - u)
}

/// Damped Newton-Broyden shooting for the center-stable-unstable decomposition of
/// the displacement from `y` to `x`. The lift of `x` closest to `y` is used.
pub fn csu_solve(map: &TorusMap, y: &Vec3, x: &Vec3, opts: &SolverOpts) -> Result<Csu> {
    let x = y + min_lift_delta(y, x);
    csu_solve_lifted(map, y, &x, opts)
}

/// As [`csu_solve`], but with `x` taken as the given lift.
pub fn csu_solve_lifted(map: &TorusMap, y: &Vec3, x: &Vec3, opts: &SolverOpts) -> Result<Csu> {
    let ec = field(map, y, Bundle::C)?;
    let es = field(map, y, Bundle::Ss)?;
    let eu = field(map, x, Bundle::Uu)?;
    let mut jac = Mat3::from_columns(&[ec, es, -eu]);
    let mut v = jac.try_inverse().ok_or(Error::DegenerateFrame(0.0))? * (x - y);
    let step = opts.flow_step;
    let mut r = csu_residual(map, y, x, &v, step)?;
    let mut rn = r.norm();
    let mut iterations = 0;
    while rn > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let inv = match jac.try_inverse() {
            Some(inv) => inv,
            None => break,
        };
        let dv = -(inv * r);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial = v + dv * alpha;
            let rt = csu_residual(map, y, x, &trial, step)?;
            if rt.norm() < rn {
                accepted = Some((trial, rt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, rt)) = accepted else { break };
        let sv = next - v;
        let yv = rt - r;
        let denom = sv.norm_squared();
        if denom > 0.0 {
            jac += (yv - jac * sv) * sv.transpose() / denom;
        }
        v = next;
        r = rt;
        rn = r.norm();
        if v.amax() > opts.box_size {
            return Err(Error::NoIntersection { residual: rn });
        }
    }
    if rn > opts.accept || v.amax() > opts.box_size {
        return Err(Error::NoIntersection { residual: rn });
    }
    Ok(Csu {
        t: v[0],
        s: v[1],
        u: v[2],
        residual: rn,
        iterations,
    })
}
