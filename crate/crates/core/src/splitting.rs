//! Pointwise computation of the invariant splitting E^uu + E^c + E^ss by power
//! iteration of the tangent cocycle, plus domination and rate statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafwork::plaque::CenterPlaque;
use crate::par;
use crate::torus::{Mat3, TorusMap, TorusPoint, Vec3};

const MIN_BUDGET: usize = 8;
const ANGLE_STOP: f64 = 1e-12;
const DET_FLOOR: f64 = 0.1;
/// Fixed depths used for smooth field evaluation: slow directions (uu and the
/// cs-plane) converge like the uu/c rate ratio, fast ones like c/ss.
const FIELD_DEPTH_SLOW: usize = 44;
const FIELD_DEPTH_FAST: usize = 18;

/// One of the three invariant line fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Bundle {
    Uu,
    C,
    Ss,
}

/// Unit vectors spanning the three bundles at a point, with one-step rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplittingFrame {
    pub base: TorusPoint,
    pub e_uu: [f64; 3],
    pub e_c: [f64; 3],
    pub e_ss: [f64; 3],
    pub rate_uu: f64,
    pub rate_c: f64,
    pub rate_ss: f64,
    pub residual: f64,
}

impl SplittingFrame {
    pub fn dir(&self, b: Bundle) -> Vec3 {
        Vec3::from(match b {
            Bundle::Uu => self.e_uu,
            Bundle::C => self.e_c,
            Bundle::Ss => self.e_ss,
        })
    }

    /// Smallest gap in the rate ordering `ss < 1 < uu`, `ss < c < uu`.
    pub fn separation_margin(&self) -> f64 {
        [
            1.0 - self.rate_ss,
            self.rate_uu - 1.0,
            self.rate_c - self.rate_ss,
            self.rate_uu - self.rate_c,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// Angle between two nonzero vectors, robust near 0 and pi.
pub fn angle(a: &Vec3, b: &Vec3) -> f64 {
    let (a, b) = (a.normalize(), b.normalize());
    2.0 * (a - b).norm().atan2((a + b).norm())
}

/// Angle between the lines spanned by two vectors, in [0, pi/2].
pub fn line_angle(a: &Vec3, b: &Vec3) -> f64 {
    let t = angle(a, b);
    t.min(std::f64::consts::PI - t)
}

#[derive(Debug, Clone, Copy)]
struct Directions {
    uu: Vec3,
    c: Vec3,
    ss: Vec3,
}

struct Orbits {
    forward: Vec<TorusPoint>,
    backward: Vec<TorusPoint>,
}

impl Orbits {
    fn new(map: &TorusMap, p: &TorusPoint, fwd: usize, bwd: usize) -> Result<Self> {
        let forward = map.orbit(p, fwd);
        let mut backward = Vec::with_capacity(bwd + 1);
        backward.push(*p);
        for j in 0..bwd {
            let q = map.apply_inverse(&backward[j])?;
            backward.push(q);
        }
        Ok(Self { forward, backward })
    }
}

struct Seeds {
    uu: Vec3,
    ss: Vec3,
    c: Vec3,
    cu_normal: Vec3,
    cs_normal: Vec3,
}

fn seeds(map: &TorusMap) -> Result<Seeds> {
    let frame = map.reference_frame().ok_or(Error::NoSeparation {
        uu: f64::NAN,
        c: f64::NAN,
        ss: f64::NAN,
    })?;
    let [uu, c, ss] = frame.dirs;
    Ok(Seeds {
        uu,
        ss,
        c,
        cu_normal: uu.cross(&c).normalize(),
        cs_normal: c.cross(&ss).normalize(),
    })
}

fn push_forward(map: &TorusMap, orbit: &[TorusPoint], depth: usize, seed: Vec3) -> Vec3 {
    (1..=depth)
        .rev()
        .fold(seed, |v, j| (map.tangent(&orbit[j]) * v).normalize())
}

fn push_normal_forward(map: &TorusMap, orbit: &[TorusPoint], depth: usize, seed: Vec3) -> Vec3 {
    (1..=depth).rev().fold(seed, |n, j| {
        (map.tangent_inverse(&orbit[j]).transpose() * n).normalize()
    })
}

fn pull_back(map: &TorusMap, orbit: &[TorusPoint], depth: usize, seed: Vec3) -> Vec3 {
    (0..depth).rev().fold(seed, |v, j| {
        (map.tangent_inverse(&orbit[j]) * v).normalize()
    })
}

fn pull_normal_back(map: &TorusMap, orbit: &[TorusPoint], depth: usize, seed: Vec3) -> Vec3 {
    (0..depth).rev().fold(seed, |n, j| {
        (map.tangent(&orbit[j]).transpose() * n).normalize()
    })
}

fn align(v: Vec3, reference: &Vec3) -> Vec3 {
    if v.dot(reference) < 0.0 {
        -v
    } else {
        v
    }
}

fn center_from_normals(cu: &Vec3, cs: &Vec3, reference: &Vec3) -> Result<Vec3> {
    let c = cu
        .cross(cs)
        .try_normalize(1e-14)
        .ok_or(Error::DegenerateFrame(0.0))?;
    Ok(align(c, reference))
}

/// Directions by depth doubling until every estimate moves by less than 1e-12 rad.
fn converged_directions(map: &TorusMap, p: &TorusPoint, budget: usize) -> Result<Directions> {
    let s = seeds(map)?;
    let orbits = Orbits::new(map, p, budget, budget)?;
    let eval = |d: usize| -> Result<(Vec3, Vec3, Vec3, Vec3)> {
        Ok((
            push_forward(map, &orbits.backward, d, s.uu),
            pull_back(map, &orbits.forward, d, s.ss),
            push_normal_forward(map, &orbits.backward, d, s.cu_normal),
            pull_normal_back(map, &orbits.forward, d, s.cs_normal),
        ))
    };
    let mut depth = MIN_BUDGET.min(budget);
    let mut cur = eval(depth)?;
    while depth < budget {
        depth = (2 * depth).min(budget);
        let next = eval(depth)?;
        let moved = [
            angle(&cur.0, &next.0),
            angle(&cur.1, &next.1),
            angle(&cur.2, &next.2),
            angle(&cur.3, &next.3),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        cur = next;
        if moved < ANGLE_STOP {
            break;
        }
    }
    Ok(Directions {
        uu: align(cur.0, &s.uu),
        ss: align(cur.1, &s.ss),
        c: center_from_normals(&cur.2, &cur.3, &s.c)?,
    })
}

/// Unit vector of one bundle at a lift point, computed at a fixed depth so that
/// the field depends smoothly on the point.
pub fn field(map: &TorusMap, v: &Vec3, bundle: Bundle) -> Result<Vec3> {
    let s = seeds(map)?;
    let p = TorusPoint::from_lift(v);
    if map.is_linear() {
        return Ok(match bundle {
            Bundle::Uu => s.uu,
            Bundle::C => s.c,
            Bundle::Ss => s.ss,
        });
    }
    Ok(match bundle {
        Bundle::Uu => {
            let o = Orbits::new(map, &p, 0, FIELD_DEPTH_SLOW)?;
            align(
                push_forward(map, &o.backward, FIELD_DEPTH_SLOW, s.uu),
                &s.uu,
            )
        }
        Bundle::Ss => {
            let o = Orbits::new(map, &p, FIELD_DEPTH_FAST, 0)?;
            align(pull_back(map, &o.forward, FIELD_DEPTH_FAST, s.ss), &s.ss)
        }
        Bundle::C => {
            let o = Orbits::new(map, &p, FIELD_DEPTH_SLOW, FIELD_DEPTH_FAST)?;
            let cu = push_normal_forward(map, &o.backward, FIELD_DEPTH_FAST, s.cu_normal);
            let cs = pull_normal_back(map, &o.forward, FIELD_DEPTH_SLOW, s.cs_normal);
            center_from_normals(&cu, &cs, &s.c)?
        }
    })
}

/// All three unit fields at a lift point (fixed depth).
pub fn fields(map: &TorusMap, v: &Vec3) -> Result<[Vec3; 3]> {
    Ok([
        field(map, v, Bundle::Uu)?,
        field(map, v, Bundle::C)?,
        field(map, v, Bundle::Ss)?,
    ])
}

fn raw_frame(map: &TorusMap, p: &TorusPoint, n: usize) -> Result<(Directions, Mat3)> {
    let d = converged_directions(map, p, n)?;
    let det = Mat3::from_columns(&[d.uu, d.c, d.ss]).determinant().abs();
    if det <= DET_FLOOR {
        return Err(Error::DegenerateFrame(det));
    }
    Ok((d, map.tangent(p)))
}

/// Splitting at `p` with iteration budget `n`; the residual compares the pushed
/// frame with an independently computed frame at `f(p)`.
pub fn splitting_at(map: &TorusMap, p: &TorusPoint, n: usize) -> Result<SplittingFrame> {
    if n < MIN_BUDGET {
        return Err(Error::Precondition(format!(
            "iteration budget {n} below {MIN_BUDGET}"
        )));
    }
    let (d, df) = raw_frame(map, p, n)?;
    let (next, _) = raw_frame(map, &map.apply(p), n)?;
    let images = [df * d.uu, df * d.c, df * d.ss];
    let residual = line_angle(&images[0], &next.uu)
        .max(line_angle(&images[1], &next.c))
        .max(line_angle(&images[2], &next.ss));
    let [rate_uu, rate_c, rate_ss] = images.map(|v| v.norm());
    if !(rate_ss < 1.0 && 1.0 < rate_uu && rate_ss < rate_c && rate_c < rate_uu) {
        return Err(Error::NoSeparation {
            uu: rate_uu,
            c: rate_c,
            ss: rate_ss,
        });
    }
    Ok(SplittingFrame {
        base: *p,
        e_uu: d.uu.into(),
        e_c: d.c.into(),
        e_ss: d.ss.into(),
        rate_uu,
        rate_c,
        rate_ss,
        residual,
    })
}

/// Frames at every sample point, in sample order.
pub fn frames_on(map: &TorusMap, sample: &[TorusPoint], n: usize) -> Result<Vec<SplittingFrame>> {
    par::map(sample, |p| splitting_at(map, p, n))
        .into_iter()
        .collect()
}

/// Regular grid of `n^3` points at cell corners, in lexicographic order.
pub fn grid(n: usize) -> Vec<TorusPoint> {
    let h = 1.0 / n as f64;
    (0..n * n * n)
        .map(|k| {
            TorusPoint::new(
                (k / (n * n)) as f64 * h,
                ((k / n) % n) as f64 * h,
                (k % n) as f64 * h,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationReport {
    pub n: usize,
    pub worst_ratio_uu_c: f64,
    pub worst_ratio_c_ss: f64,
    pub sample_size: usize,
}

const FRAME_BUDGET: usize = 64;

/// Smallest power `N <= n_max` at which `|Df^N v| <= |Df^N u| / 2` holds for
/// consecutive bundles over the whole sample.
pub fn certify_domination(
    map: &TorusMap,
    sample: &[TorusPoint],
    n_max: usize,
) -> Result<DominationReport> {
    if sample.is_empty() {
        return Err(Error::Precondition("empty sample".into()));
    }
    if n_max == 0 {
        return Err(Error::NotDominatedWithinBudget(0));
    }
    let frames = frames_on(map, sample, FRAME_BUDGET)?;
    let ratios: Vec<Vec<(f64, f64)>> = par::map(&frames, |f| {
        let (mut u, mut c, mut s) = (f.dir(Bundle::Uu), f.dir(Bundle::C), f.dir(Bundle::Ss));
        let mut q = f.base;
        (0..n_max)
            .map(|_| {
                let df = map.tangent(&q);
                u = df * u;
                c = df * c;
                s = df * s;
                q = map.apply(&q);
                (c.norm() / u.norm(), s.norm() / c.norm())
            })
            .collect()
    });
    for n in 0..n_max {
        let (uc, cs) = ratios
            .iter()
            .map(|r| r[n])
            .fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(x), b.max(y)));
        if uc <= 0.5 && cs <= 0.5 {
            return Ok(DominationReport {
                n: n + 1,
                worst_ratio_uu_c: uc,
                worst_ratio_c_ss: cs,
                sample_size: sample.len(),
            });
        }
    }
    Err(Error::NotDominatedWithinBudget(n_max))
}

/// Empirical `(kappa0, mu-, mu+, lambda0)`: sup of ss rates, inf and sup of
/// center rates, inf of uu rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBounds {
    pub kappa0: f64,
    pub mu_minus: f64,
    pub mu_plus: f64,
    pub lambda0: f64,
}

pub fn rate_bounds(map: &TorusMap, sample: &[TorusPoint]) -> Result<RateBounds> {
    if sample.is_empty() {
        return Err(Error::Precondition("empty sample".into()));
    }
    let frames = frames_on(map, sample, FRAME_BUDGET)?;
    Ok(frames.iter().fold(
        RateBounds {
            kappa0: 0.0,
            mu_minus: f64::INFINITY,
            mu_plus: 0.0,
            lambda0: f64::INFINITY,
        },
        |b, f| RateBounds {
            kappa0: b.kappa0.max(f.rate_ss),
            mu_minus: b.mu_minus.min(f.rate_c),
            mu_plus: b.mu_plus.max(f.rate_c),
            lambda0: b.lambda0.min(f.rate_uu),
        },
    ))
}

/// One-step center stretch `|Df e_c|` at a lift point.
pub fn center_rate(map: &TorusMap, v: &Vec3) -> Result<f64> {
    Ok((map.tangent_lift(v) * field(map, v, Bundle::C)?).norm())
}

/// Distortion `c_k` of the center derivative along `k` iterates of a plaque:
/// the ratio of the largest to the smallest product of one-step center rates.
pub fn distortion_estimate(
    map: &TorusMap,
    plaque: &CenterPlaque,
    k: usize,
    eps0: f64,
) -> Result<f64> {
    let mut pts = plaque.nodes.clone();
    let mut logs = vec![0.0; pts.len()];
    for _ in 0..k {
        for (p, l) in pts.iter().zip(logs.iter_mut()) {
            *l += center_rate(map, p)?.ln();
        }
        pts = pts.iter().map(|p| map.apply_lift(p)).collect();
        let length: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if length > eps0 {
            return Err(Error::ScaleExceeded { length, eps0 });
        }
    }
    let (lo, hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| {
            (a.min(l), b.max(l))
        });
    Ok((hi - lo).exp())
}

/// Empirical Hölder model `|log r(p) - log r(q)| <= c_theta d(p,q)^theta` for the
/// center rate along center plaques.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderFit {
    pub theta: f64,
    pub c_theta: f64,
    pub pairs: usize,
}

/// Fits `theta` by least squares in log-log coordinates over node pairs, then takes
/// the smallest `c_theta` bounding every pair.
pub fn fit_center_holder(map: &TorusMap, plaques: &[CenterPlaque]) -> Result<HolderFit> {
    let mut data = Vec::new();
    for pl in plaques {
        let logs: Vec<f64> = pl
            .nodes
            .iter()
            .map(|p| center_rate(map, p).map(f64::ln))
            .collect::<Result<_>>()?;
        let n = pl.nodes.len();
        for i in 0..n {
            for j in (i + 1..n).step_by((n / 16).max(1)) {
                let d = (pl.nodes[j] - pl.nodes[i]).norm();
                let dl = (logs[j] - logs[i]).abs();
                if d > 0.0 && dl > 1e-14 {
                    data.push((d.ln(), dl.ln(), d, dl));
                }
            }
        }
    }
    if data.len() < 2 {
        return Ok(HolderFit {
            theta: 1.0,
            c_theta: 0.0,
            pairs: data.len(),
        });
    }
    let m = data.len() as f64;
    let (sx, sy) = data.iter().fold((0.0, 0.0), |(a, b), d| (a + d.0, b + d.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = data.iter().fold((0.0, 0.0), |(a, b), d| {
        (a + (d.0 - mx) * (d.1 - my), b + (d.0 - mx).powi(2))
    });
    let theta = (sxy / sxx).clamp(0.05, 1.0);
    let c_theta = data
        .iter()
        .map(|d| d.3 / d.2.powf(theta))
        .fold(0.0, f64::max);
    Ok(HolderFit {
        theta,
        c_theta,
        pairs: data.len(),
    })
}

/// Bound `exp(c_theta * sum_j len(f^j plaque)^theta)` on the distortion along `k` iterates.
pub fn holder_distortion_bound(
    map: &TorusMap,
    plaque: &CenterPlaque,
    k: usize,
    fit: &HolderFit,
) -> f64 {
    let mut pts = plaque.nodes.clone();
    let mut sum = 0.0;
    for _ in 0..k {
        let length: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        sum += length.powf(fit.theta);
        pts = pts.iter().map(|p| map.apply_lift(p)).collect();
    }
    (fit.c_theta * sum).exp()
}
