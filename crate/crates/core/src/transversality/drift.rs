//! The drift construction: center chains with nearly even spacing, grown one
//! point at a time by sliding along a hexagonal loop, and the cu-patch they span.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafwork::flow::{csu_solve, flow, SolverOpts};
use crate::leafwork::plaque::center_plaque;
use crate::leafwork::relations::{leaf_point, transport_uu};
use crate::splitting::{field, line_angle, Bundle};
use crate::torus::{min_lift_delta, TorusMap, TorusPoint, Vec3};
use crate::transversality::hexloop::{find_hex_loop, HexLoop, HexOpts};

/// Knobs of the chain construction.
#[derive(Debug, Clone, Copy)]
pub struct ChainOpts {
    pub hex: HexOpts,
    /// Leaf radius used when searching for loops.
    pub radius: f64,
    pub tau: f64,
    /// Cap on loop searches over the whole construction.
    pub max_searches: usize,
    /// Loop searches per step before giving up with `NoCrossing`.
    pub attempts_per_step: usize,
    /// Intermediate spacing as a fraction of the next loop margin.
    pub spacing_fraction: f64,
}

impl Default for ChainOpts {
    fn default() -> Self {
        Self {
            hex: HexOpts::default(),
            radius: 200.0,
            tau: 0.1,
            max_searches: 48,
            attempts_per_step: 3,
            spacing_fraction: 0.25,
        }
    }
}

/// Per-step record of the construction.
#[derive(Debug, Clone, Serialize)]
pub struct StepLog {
    pub n: usize,
    pub chi: f64,
    pub t0: f64,
    pub target: f64,
    /// Ratio error right after the stable projection.
    pub ratio_error_projected: f64,
    /// Ratio error after rescaling by the dynamics.
    pub ratio_error: f64,
    /// Net number of forward iterates applied while rescaling.
    pub iterates: i32,
    pub diam: f64,
}

/// Points `x_0 .. x_N` on the center plaque of `base = x_N`, given by signed
/// plaque parameters relative to the base.
#[derive(Debug, Clone, Serialize)]
pub struct EvenSpacedChain {
    pub n: usize,
    pub base: TorusPoint,
    #[serde(skip)]
    pub base_lift: Vec3,
    pub params: Vec<f64>,
    #[serde(skip)]
    pub points: Vec<Vec3>,
    pub diam: f64,
    pub max_ratio_error: f64,
    pub log: Vec<StepLog>,
}

/// `max_i |d(x_0, x_i) / (i d(x_0, x_1)) - 1|`; infinite for collapsed chains.
pub fn ratio_error(params: &[f64]) -> f64 {
    if params.len() < 3 {
        return 0.0;
    }
    let d1 = params[1] - params[0];
    if d1 == 0.0 {
        return f64::INFINITY;
    }
    params
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, p)| ((p - params[0]) / (i as f64 * d1) - 1.0).abs())
        .fold(0.0, f64::max)
}

fn strictly_monotone(params: &[f64]) -> bool {
    params.windows(2).all(|w| w[1] < w[0]) || params.windows(2).all(|w| w[1] > w[0])
}

impl EvenSpacedChain {
    /// The one-point chain at `x`.
    pub fn trivial(x: &TorusPoint) -> Self {
        Self::from_params(x.lift(), vec![0.0], Vec::new(), &[x.lift()])
    }

    fn from_params(base_lift: Vec3, params: Vec<f64>, log: Vec<StepLog>, points: &[Vec3]) -> Self {
        let diam = (params[0] - params[params.len() - 1]).abs();
        Self {
            n: params.len() - 1,
            base: TorusPoint::from_lift(&base_lift),
            base_lift,
            max_ratio_error: ratio_error(&params),
            params,
            points: points.to_vec(),
            diam,
            log,
        }
    }

    /// Chain on the plaque of `base_lift` at the given parameters.
    pub fn on_plaque(
        map: &TorusMap,
        base_lift: Vec3,
        params: Vec<f64>,
        opts: &SolverOpts,
    ) -> Result<Self> {
        let points = params
            .iter()
            .map(|&c| flow(map, Bundle::C, &base_lift, c, opts.flow_step))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_params(base_lift, params, Vec::new(), &points))
    }

    pub fn spacing(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.diam / self.n as f64
        }
    }

    /// Same base, parameters multiplied by `factor`.
    pub fn scaled(&self, map: &TorusMap, factor: f64, opts: &SolverOpts) -> Result<Self> {
        let params = self.params.iter().map(|c| c * factor).collect();
        let mut out = Self::on_plaque(map, self.base_lift, params, opts)?;
        out.log = self.log.clone();
        Ok(out)
    }

    /// Image under `f` (forward) or `f^{-1}`, re-anchored on the plaque of the
    /// image of the base.
    fn iterate(&self, map: &TorusMap, forward: bool, opts: &SolverOpts) -> Result<Self> {
        let step = |v: &Vec3| {
            if forward {
                Ok(map.apply_lift(v))
            } else {
                map.inverse_lift(v)
            }
        };
        let base = step(&self.base_lift)?;
        let mut params = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let q = step(p)?;
            params.push(if q == base {
                0.0
            } else {
                csu_solve(map, &base, &q, opts)?.t
            });
        }
        let last = params.len() - 1;
        params[last] = 0.0;
        let mut out = Self::on_plaque(map, base, params, opts)?;
        out.log = self.log.clone();
        Ok(out)
    }

    /// Iterates until the diameter lies in `[eps / |Df|, eps]`; returns the net
    /// number of forward iterates.
    fn rescale(&mut self, map: &TorusMap, eps: f64, opts: &SolverOpts) -> Result<i32> {
        let lo = eps / map.df_norm();
        let mut net = 0;
        for _ in 0..200 {
            if self.diam > eps {
                *self = self.iterate(map, false, opts)?;
                net -= 1;
            } else if self.diam < lo {
                *self = self.iterate(map, true, opts)?;
                net += 1;
            } else {
                return Ok(net);
            }
        }
        Err(Error::StepBudgetExceeded(200))
    }
}

/// Center coordinates, on the plaque of `gamma(s)`, of the last two chain points
/// after transport to the plaque of `gamma'(s)` and stable projection. The first
/// step has a single point, whose image is `gamma'(s)` itself.
fn projected_tail(
    map: &TorusMap,
    chain: &EvenSpacedChain,
    hex: &HexLoop,
    s: f64,
    opts: &SolverOpts,
) -> Result<(f64, f64)> {
    let pair = hex.pair(map, s, opts)?;
    if chain.n == 0 {
        return Ok((f64::NAN, pair.phi));
    }
    let g = hex.gamma(map, s, opts)?;
    let gp = leaf_point(map, &hex.partner, pair.s_prime, opts)?;
    let img = transport_uu(
        map,
        &gp,
        &chain.points[chain.n - 1..],
        pair.s_prime.abs(),
        opts,
    )?;
    Ok((
        csu_solve(map, &g, &img[0].lift, opts)?.t,
        csu_solve(map, &g, &img[1].lift, opts)?.t,
    ))
}

/// Extends the chain by one point using the loop at the chain's base, then
/// rescales the result into `[eps / |Df|, eps]`.
pub fn drift_step(
    map: &TorusMap,
    chain: &EvenSpacedChain,
    hex: &HexLoop,
    eps: f64,
    delta: f64,
    opts: &SolverOpts,
) -> Result<EvenSpacedChain> {
    let gap = min_lift_delta(&chain.base_lift, &hex.leaf.base.lift()).norm();
    if gap > 1e-9 {
        return Err(Error::Precondition(format!(
            "loop base {gap:.2e} away from chain base"
        )));
    }
    // The new point sits at 0 on the plaque of gamma(t0); the last projected point
    // must sit one spacing away from it (half the margin on the first step).
    let eval = |s: f64| -> Result<(f64, f64)> {
        let (prev, last) = projected_tail(map, chain, hex, s, opts)?;
        let target = if chain.n == 0 {
            hex.chi / 2.0
        } else {
            prev - last
        };
        Ok((last - target, target))
    };
    let (mut a, mut b) = (hex.t_minus, hex.t_plus);
    let (ga, ta) = eval(a)?;
    let (gb, tb) = eval(b)?;
    if !(ga < 0.0 && gb > 0.0) {
        return Err(Error::NoCrossing(ta.abs().max(tb.abs())));
    }
    let (mut t0, mut target) = (a, ta);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let (gm, tm) = eval(m)?;
        t0 = m;
        target = tm;
        if gm == 0.0 || (b - a).abs() < 1e-12 {
            break;
        }
        if gm < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let pair = hex.pair(map, t0, opts)?;
    let g0 = hex.gamma(map, t0, opts)?;
    let gp = leaf_point(map, &hex.partner, pair.s_prime, opts)?;
    let moved = transport_uu(map, &gp, &chain.points, pair.s_prime.abs(), opts)?;
    let mut params = Vec::with_capacity(chain.n + 2);
    for img in &moved {
        params.push(csu_solve(map, &g0, &img.lift, opts)?.t);
    }
    params.push(0.0);
    let projected = ratio_error(&params);
    if !strictly_monotone(&params) {
        return Err(Error::RatioBlowup {
            error: f64::INFINITY,
            delta,
        });
    }
    let mut next = EvenSpacedChain::on_plaque(map, g0, params, opts)?;
    let iterates = next.rescale(map, eps, opts)?;
    if next.max_ratio_error > delta {
        return Err(Error::RatioBlowup {
            error: next.max_ratio_error,
            delta,
        });
    }
    let mut log = chain.log.clone();
    log.push(StepLog {
        n: next.n,
        chi: hex.chi,
        t0,
        target,
        ratio_error_projected: projected,
        ratio_error: next.max_ratio_error,
        iterates,
        diam: next.diam,
    });
    next.log = log;
    Ok(next)
}

/// Builds `x_0 .. x_N` by repeated drift steps, refreshing the loop at each new
/// base. Intermediate chains are kept at a spacing well below the loop margin;
/// the final chain is rescaled to diameter in `[eps / |Df|, eps]`.
pub fn build_even_chain(
    map: &TorusMap,
    x: &TorusPoint,
    n: usize,
    eps: f64,
    delta: f64,
    opts: &ChainOpts,
) -> Result<EvenSpacedChain> {
    if n == 0 {
        return Err(Error::Precondition("need N >= 1".into()));
    }
    let so = &opts.hex.solver;
    let mut chain = EvenSpacedChain::trivial(x);
    let mut searches = 0;
    while chain.n < n {
        let mut hex = None;
        for _ in 0..opts.attempts_per_step {
            if searches >= opts.max_searches {
                return Err(Error::StepBudgetExceeded(searches));
            }
            searches += 1;
            if let Some(h) = find_hex_loop(map, &chain.base, opts.radius, opts.tau, &opts.hex)? {
                if chain.spacing() < opts.spacing_fraction * 2.0 * h.chi {
                    hex = Some(h);
                    break;
                }
                // Shrink the chain below the loop margin; the base moves, so search again.
                let w = opts.spacing_fraction * h.chi * chain.n as f64;
                chain.rescale(map, w, so)?;
                continue;
            }
            // No loop here: move the base backward and try again.
            chain = chain.iterate(map, false, so)?;
        }
        let Some(hex) = hex else {
            return Err(Error::NoCrossing(0.0));
        };
        let w = if chain.n + 1 == n {
            eps
        } else {
            opts.spacing_fraction * hex.chi * (chain.n + 1) as f64
        };
        chain = drift_step(map, &chain, &hex, w, delta, so)?;
    }
    Ok(chain)
}

/// Independent re-measurement of a chain on a freshly integrated plaque.
#[derive(Debug, Clone, Serialize)]
pub struct Remeasure {
    pub params: Vec<f64>,
    pub max_ratio_error: f64,
    pub max_param_deviation: f64,
}

pub fn remeasure(map: &TorusMap, chain: &EvenSpacedChain) -> Result<Remeasure> {
    let reach = chain.params.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let tol = (reach / 400.0).max(1e-6);
    let plaque = center_plaque(map, &chain.base, 1.25 * reach + tol, tol)?;
    let params = chain
        .points
        .iter()
        .map(|p| plaque.param_of(p))
        .collect::<Result<Vec<_>>>()?;
    let dev = params
        .iter()
        .zip(&chain.params)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Remeasure {
        max_ratio_error: ratio_error(&params),
        params,
        max_param_deviation: dev,
    })
}

/// Patch spanned by the unstable arcs through the chain points, with the worst
/// angle between its tangent planes and `E^uu + E^c`.
#[derive(Debug, Clone, Serialize)]
pub struct CuDiskWitness {
    pub rows: usize,
    pub cols: usize,
    #[serde(skip)]
    pub patch: Vec<Vec<Vec3>>,
    pub tangency_residual: f64,
}

pub fn cu_disk_witness(
    map: &TorusMap,
    chain: &EvenSpacedChain,
    uu_radius: f64,
    opts: &SolverOpts,
) -> Result<CuDiskWitness> {
    if chain.n < 4 {
        return Err(Error::Precondition("cu-disk witness needs N >= 4".into()));
    }
    let cols = 2 * chain.n + 1;
    let h = uu_radius / chain.n as f64;
    let anchor = chain.points[0];
    let patch = chain
        .points
        .iter()
        .map(|p| {
            let p = anchor + min_lift_delta(&anchor, p);
            (0..cols)
                .map(|j| {
                    flow(
                        map,
                        Bundle::Uu,
                        &p,
                        (j as f64 - chain.n as f64) * h,
                        opts.flow_step,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for i in 1..chain.n {
        for j in 1..cols - 1 {
            let du = patch[i][j + 1] - patch[i][j - 1];
            let dc = patch[i + 1][j] - patch[i - 1][j];
            let normal = du.cross(&dc);
            let p = &patch[i][j];
            let reference = field(map, p, Bundle::Uu)?.cross(&field(map, p, Bundle::C)?);
            worst = worst.max(line_angle(&normal, &reference));
        }
    }
    Ok(CuDiskWitness {
        rows: chain.points.len(),
        cols,
        patch,
        tangency_residual: worst,
    })
}
