//! Center hyperbolicity certificates along unstable plaques, the associated
//! section test, grid coverage of long unstable leaves and leafwise pushforward
//! histograms.
//!
//! Convention: a certificate bounds the backward center derivative,
//! `|Df^{-n}|E^c(f^{l+n} y)| <= C lambda^{-n}` with `lambda > 1`, which is the same
//! as uniform forward center expansion along the orbit of `y`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafwork::flow::{flow, SolverOpts};
use crate::leafwork::leaf::{grow_unstable_leaf, LeafKind, LeafSegment};
use crate::par::Exec;
use crate::splitting::{center_rate, Bundle};
use crate::torus::{TorusMap, TorusPoint, Vec3};

/// Extra horizon of the re-verification pass.
pub const RECHECK_EXTRA: usize = 10;
const LAMBDA_FLOOR: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct ShCertificate {
    pub x: TorusPoint,
    pub y: TorusPoint,
    /// Arclength of `y` along the unstable leaf of `x`.
    pub y_arclength: f64,
    pub c: f64,
    pub lambda_sh: f64,
    pub n_checked: usize,
    pub ell_checked: usize,
    pub candidates: usize,
}

/// `log |Df e_c|` at `f^j(p)` for `j < len`.
fn log_center_rates(map: &TorusMap, p: &Vec3, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut q = *p;
    for _ in 0..len {
        out.push(center_rate(map, &q)?.ln());
        q = map.apply_lift(&q);
    }
    Ok(out)
}

/// Prefix sums for O(1) window sums.
fn prefix(logs: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; logs.len() + 1];
    for (i, l) in logs.iter().enumerate() {
        acc[i + 1] = acc[i] + l;
    }
    acc
}

/// Smallest `C` with `sum_{j=l}^{l+n-1} log r_j >= n log lambda - log C` for all
/// `1 <= n <= n_max`, `1 <= l <= ell`.
fn constant_for(sums: &[f64], log_lambda: f64, n_max: usize, ell: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 1..=ell {
        for n in 1..=n_max {
            worst = worst.max(n as f64 * log_lambda - (sums[l + n] - sums[l]));
        }
    }
    worst.exp()
}

/// Fitted `(C, lambda)` for one orbit: `lambda` is the smallest geometric-mean
/// center rate over windows of length `n_max` (within the rechecked horizon),
/// `C` the smallest constant making every shorter window comply.
fn fit(logs: &[f64], n_max: usize, ell: usize) -> Option<(f64, f64)> {
    let sums = prefix(logs);
    let horizon = n_max + RECHECK_EXTRA;
    let mut log_lambda = f64::INFINITY;
    for l in 1..=ell {
        for n in n_max..=horizon {
            log_lambda = log_lambda.min((sums[l + n] - sums[l]) / n as f64);
        }
    }
    let lambda = log_lambda.exp();
    if !(lambda > LAMBDA_FLOOR) {
        return None;
    }
    let c = constant_for(&sums, log_lambda, n_max, ell);
    // Re-verification with the horizon extended.
    let ok = constant_for(&sums, log_lambda, horizon, ell) <= c * (1.0 + 1e-12);
    ok.then_some((c, lambda))
}

/// Scans `candidates` evenly spaced points of `W^uu(x, R)` and returns the one
/// whose fitted rate is largest.
pub fn sh_certificate(
    map: &TorusMap,
    x: &TorusPoint,
    radius: f64,
    n_max: usize,
    candidates: usize,
    opts: &SolverOpts,
) -> Result<ShCertificate> {
    if n_max < 10 {
        return Err(Error::Precondition("n_max must be at least 10".into()));
    }
    let ell = n_max;
    let len = ell + n_max + RECHECK_EXTRA + 1;
    let k = candidates.max(1);
    let arcs: Vec<f64> = (0..k)
        .map(|i| {
            if k == 1 {
                0.0
            } else {
                radius * (2.0 * i as f64 / (k - 1) as f64 - 1.0)
            }
        })
        .collect();
    let fits = Exec::default().map(&arcs, |&s| -> Result<Option<(f64, f64, f64, Vec3)>> {
        let y = flow(map, Bundle::Uu, &x.lift(), s, opts.flow_step)?;
        let logs = log_center_rates(map, &y, len)?;
        Ok(fit(&logs, n_max, ell).map(|(c, l)| (s, c, l, y)))
    });
    let mut best: Option<(f64, f64, f64, Vec3)> = None;
    for f in fits {
        if let Some(f) = f? {
            if best.as_ref().map_or(true, |b| f.2 > b.2) {
                best = Some(f);
            }
        }
    }
    let Some((s, c, lambda, y)) = best else {
        return Err(Error::NoCandidate(1.0));
    };
    Ok(ShCertificate {
        x: *x,
        y: TorusPoint::from_lift(&y),
        y_arclength: s,
        c,
        lambda_sh: lambda,
        n_checked: n_max,
        ell_checked: ell,
        candidates: k,
    })
}

/// Finite-horizon membership in the section set `K(C, lambda)`.
pub fn in_section(
    map: &TorusMap,
    p: &Vec3,
    c: f64,
    lambda: f64,
    n_max: usize,
    ell: usize,
) -> Result<bool> {
    let logs = log_center_rates(map, p, ell + n_max + 1)?;
    let sums = prefix(&logs);
    Ok(constant_for(&sums, lambda.ln(), n_max, ell) <= c)
}

/// Section constants fitted on a training sample: the smallest per-point rate and
/// the largest constant needed at that rate, so every training point is kept.
pub fn fit_section(map: &TorusMap, sample: &[TorusPoint], n_max: usize) -> Result<(f64, f64)> {
    let ell = n_max;
    let len = ell + n_max + RECHECK_EXTRA + 1;
    let sums = Exec::default()
        .map(sample, |p| {
            log_center_rates(map, &p.lift(), len).map(|l| prefix(&l))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut log_lambda = f64::INFINITY;
    for s in &sums {
        for l in 1..=ell {
            for n in n_max..=n_max + RECHECK_EXTRA {
                log_lambda = log_lambda.min((s[l + n] - s[l]) / n as f64);
            }
        }
    }
    if !(log_lambda.exp() > LAMBDA_FLOOR) {
        return Err(Error::NoCandidate(log_lambda.exp()));
    }
    let c = sums
        .iter()
        .map(|s| constant_for(s, log_lambda, n_max, ell))
        .fold(0.0, f64::max);
    Ok((c, log_lambda.exp()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionReport {
    pub retained: Vec<bool>,
    pub retained_fraction: f64,
    /// Largest arclength from a sample point to a retained point of its unstable
    /// leaf; infinite when some leaf has none within `probe_radius`.
    pub max_gap: f64,
    pub probe_radius: f64,
}

/// Filters `sample` by the section test and measures how far along their
/// unstable leaves rejected points must travel to meet the section.
pub fn uu_section_sample(
    map: &TorusMap,
    c: f64,
    lambda: f64,
    sample: &[TorusPoint],
    n_max: usize,
    opts: &SolverOpts,
) -> Result<SectionReport> {
    if !(lambda > 1.0) {
        return Err(Error::Precondition("lambda must exceed 1".into()));
    }
    const PROBE_STEP: f64 = 0.05;
    const PROBE_RADIUS: f64 = 2.0;
    let ell = n_max;
    let retained = Exec::default()
        .map(sample, |p| {
            in_section(map, &p.lift(), c, lambda, n_max, ell)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let gaps = Exec::default().map(
        &(0..sample.len()).collect::<Vec<_>>(),
        |&i| -> Result<f64> {
            if retained[i] {
                return Ok(0.0);
            }
            let steps = (PROBE_RADIUS / PROBE_STEP) as usize;
            let (mut fwd, mut back) = (sample[i].lift(), sample[i].lift());
            for k in 1..=steps {
                fwd = flow(map, Bundle::Uu, &fwd, PROBE_STEP, opts.flow_step)?;
                back = flow(map, Bundle::Uu, &back, -PROBE_STEP, opts.flow_step)?;
                if in_section(map, &fwd, c, lambda, n_max, ell)?
                    || in_section(map, &back, c, lambda, n_max, ell)?
                {
                    return Ok(k as f64 * PROBE_STEP);
                }
            }
            Ok(f64::INFINITY)
        },
    );
    let max_gap = gaps
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let kept = retained.iter().filter(|&&r| r).count();
    Ok(SectionReport {
        retained_fraction: if sample.is_empty() {
            0.0
        } else {
            kept as f64 / sample.len() as f64
        },
        retained,
        max_gap: if kept == 0 { f64::INFINITY } else { max_gap },
        probe_radius: PROBE_RADIUS,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub seed: TorusPoint,
    pub radius: f64,
    pub grid_n: usize,
    pub coverage: f64,
    pub leaf_nodes: usize,
    pub empty_cells: Vec<[u16; 3]>,
}

fn cell_index(p: &Vec3, n: usize) -> usize {
    let c = |v: f64| ((v.rem_euclid(1.0) * n as f64) as usize).min(n - 1);
    (c(p[0]) * n + c(p[1])) * n + c(p[2])
}

/// Calls `visit(point, weight)` for pieces of every polyline segment no longer
/// than `piece`; weights of one segment sum to that segment's `mass`.
fn subdivide(nodes: &[Vec3], masses: &[f64], piece: f64, mut visit: impl FnMut(&Vec3, f64)) {
    for (w, &m) in nodes.windows(2).zip(masses) {
        let d = w[1] - w[0];
        let k = ((d.norm() / piece).ceil() as usize).max(1);
        let share = m / k as f64;
        for j in 0..k {
            visit(&(w[0] + d * ((j as f64 + 0.5) / k as f64)), share);
        }
    }
}

/// Grows `W^uu(x, R)` and reports which cells of the `grid_n^3` grid it meets.
pub fn density_report(
    map: &TorusMap,
    x: &TorusPoint,
    radius: f64,
    grid_n: usize,
    exec: Exec,
) -> Result<DensityReport> {
    if !(16..=256).contains(&grid_n) {
        return Err(Error::Precondition(format!(
            "grid {grid_n} outside [16, 256]"
        )));
    }
    let cells = grid_n.pow(3);
    let tol = (radius / 1e4).max(1.0 / (4.0 * grid_n as f64));
    let leaf = grow_unstable_leaf(map, x, radius, tol)?;
    let lifts: Vec<Vec3> = leaf.nodes.iter().map(|n| n.lift).collect();
    let hits = if lifts.len() == 1 {
        let mut h = vec![0.0; cells];
        h[cell_index(&lifts[0], grid_n)] = 1.0;
        h
    } else {
        let ones = vec![1.0; lifts.len() - 1];
        let piece = 1.0 / (4.0 * grid_n as f64);
        let idx: Vec<usize> = (0..lifts.len() - 1).collect();
        exec.chunked_sum(&idx, 4096, cells, |chunk, acc| {
            let (a, b) = (chunk[0], chunk[chunk.len() - 1] + 2);
            subdivide(&lifts[a..b], &ones[a..b - 1], piece, |p, _| {
                acc[cell_index(p, grid_n)] = 1.0
            });
        })
    };
    let n = grid_n;
    let empty_cells: Vec<[u16; 3]> = hits
        .iter()
        .enumerate()
        .filter(|(_, &h)| h == 0.0)
        .map(|(i, _)| [(i / (n * n)) as u16, ((i / n) % n) as u16, (i % n) as u16])
        .collect();
    Ok(DensityReport {
        seed: *x,
        radius,
        grid_n,
        coverage: 1.0 - empty_cells.len() as f64 / cells as f64,
        leaf_nodes: leaf.len(),
        empty_cells,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GibbsHistogram {
    pub grid_n: usize,
    pub n_push: usize,
    pub bins: Vec<f64>,
    /// `|sum of segment masses - 1|` for the seed and after each pushforward step.
    pub mass_defects: Vec<f64>,
    pub nodes: usize,
    pub seed_base: TorusPoint,
    pub seed_length: f64,
}

impl GibbsHistogram {
    /// Total variation distance to another histogram on the same grid.
    pub fn tv(&self, other: &[f64]) -> f64 {
        0.5 * self
            .bins
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn tv_uniform(&self) -> f64 {
        let u = vec![1.0 / self.bins.len() as f64; self.bins.len()];
        self.tv(&u)
    }

    /// `i,j,k,mass` rows.
    pub fn to_csv(&self) -> String {
        let n = self.grid_n;
        let mut out = String::from("i,j,k,mass\n");
        for (idx, m) in self.bins.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:.17e}\n",
                idx / (n * n),
                (idx / n) % n,
                idx % n,
                m
            ));
        }
        out
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0_f64, 0.0_f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() {
            (s - t) + x
        } else {
            (x - t) + s
        };
        s = t;
    }
    s + c
}

/// Knobs of the pushforward.
#[derive(Debug, Clone, Copy)]
pub struct GibbsOpts {
    /// Largest image segment length kept before bisecting.
    pub refine: f64,
    pub node_cap: usize,
    pub exec: Exec,
}

impl Default for GibbsOpts {
    fn default() -> Self {
        Self {
            refine: 0.1,
            node_cap: 4_000_000,
            exec: Exec::default(),
        }
    }
}

/// Spreads unit mass by arclength over `seed`, pushes it forward `n_push` times
/// and bins it. Segments longer than `opts.refine` are bisected in the seed
/// parameter, each half taking half the mass, so the total stays exactly 1.
pub fn ugibbs_histogram(
    map: &TorusMap,
    seed: &LeafSegment,
    n_push: usize,
    grid_n: usize,
    opts: &GibbsOpts,
) -> Result<GibbsHistogram> {
    if seed.kind != LeafKind::Uu || seed.len() < 2 {
        return Err(Error::Precondition(
            "seed must be an unstable leaf with two or more nodes".into(),
        ));
    }
    let total = seed.length();
    // Nodes carry (seed arclength, image lift); segment masses follow the nodes.
    let mut nodes: Vec<(f64, Vec3)> = seed.nodes.iter().map(|n| (n.s, n.lift)).collect();
    let mut masses: Vec<f64> = seed
        .nodes
        .windows(2)
        .map(|w| (w[1].s - w[0].s) / total)
        .collect();
    let mut mass_defects = vec![(compensated_sum(masses.iter().copied()) - 1.0).abs()];
    for step in 1..=n_push {
        let mapped: Vec<(f64, Vec3)> = opts.exec.map(&nodes, |(s, v)| (*s, map.apply_lift(v)));
        let mut next_nodes = Vec::with_capacity(mapped.len() * 4);
        let mut next_masses = Vec::with_capacity(mapped.len() * 4);
        next_nodes.push(mapped[0]);
        for (w, &m) in mapped.windows(2).zip(&masses) {
            bisect(
                map,
                seed,
                step,
                w[0],
                w[1],
                m,
                opts.refine,
                &mut next_nodes,
                &mut next_masses,
            );
            if next_nodes.len() > opts.node_cap {
                return Err(Error::NodeBudgetExceeded {
                    needed: next_nodes.len(),
                    cap: opts.node_cap,
                });
            }
        }
        nodes = next_nodes;
        masses = next_masses;
        mass_defects.push((compensated_sum(masses.iter().copied()) - 1.0).abs());
    }
    let cells = grid_n.pow(3);
    let lifts: Vec<Vec3> = nodes.iter().map(|n| n.1).collect();
    let idx: Vec<usize> = (0..lifts.len() - 1).collect();
    let piece = 1.0 / (4.0 * grid_n as f64);
    let raw = opts.exec.chunked_sum(&idx, 4096, cells, |chunk, acc| {
        let (a, b) = (chunk[0], chunk[chunk.len() - 1] + 2);
        subdivide(&lifts[a..b], &masses[a..b - 1], piece, |p, m| {
            acc[cell_index(p, grid_n)] += m
        });
    });
    let norm = compensated_sum(raw.iter().copied());
    let bins = raw.into_iter().map(|m| m / norm).collect();
    Ok(GibbsHistogram {
        grid_n,
        n_push,
        bins,
        mass_defects,
        nodes: nodes.len(),
        seed_base: seed.base,
        seed_length: total,
    })
}

/// Appends the refined image of one segment (excluding its left node).
#[allow(clippy::too_many_arguments)]
fn bisect(
    map: &TorusMap,
    seed: &LeafSegment,
    steps: usize,
    a: (f64, Vec3),
    b: (f64, Vec3),
    mass: f64,
    refine: f64,
    nodes: &mut Vec<(f64, Vec3)>,
    masses: &mut Vec<f64>,
) {
    let mut stack = vec![(b, mass)];
    let mut left = a;
    while let Some(&(right, m)) = stack.last() {
        if (right.1 - left.1).norm() <= refine
            || right.0 - left.0 <= f64::EPSILON * total_scale(left.0, right.0)
        {
            nodes.push(right);
            masses.push(m);
            left = right;
            stack.pop();
        } else {
            let s = 0.5 * (left.0 + right.0);
            let mut v = seed.point_at(s);
            for _ in 0..steps {
                v = map.apply_lift(&v);
            }
            stack.pop();
            stack.push((right, 0.5 * m));
            stack.push(((s, v), 0.5 * m));
        }
    }
}

fn total_scale(a: f64, b: f64) -> f64 {
    a.abs().max(b.abs()).max(1.0)
}
