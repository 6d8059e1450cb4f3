//! Search for pairs of nearby arcs of one unstable leaf whose center offset
//! changes sign: witnesses of s-transversality.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafwork::flow::SolverOpts;
use crate::leafwork::leaf::{grow_unstable_leaf, LeafSegment};
use crate::leafwork::relations::leaf_point;
use crate::par;
use crate::torus::{min_lift_delta, TorusMap, TorusPoint, Vec3};
use crate::transversality::brush::{pair_at, PhiSample};

/// Search knobs.
#[derive(Debug, Clone, Copy)]
pub struct HexOpts {
    pub chi_min: f64,
    /// Profile samples per candidate stretch.
    pub samples: usize,
    /// Samples across the bracketing interval of an accepted loop.
    pub loop_samples: usize,
    /// Upper bound on candidate stretches examined.
    pub max_candidates: usize,
    /// Leaf polyline tolerance; `None` picks `max(R/1e4, tau/5)`.
    pub leaf_tol: Option<f64>,
    /// Local product scale; `tau` may not exceed a tenth of it.
    pub eps0: f64,
    pub solver: SolverOpts,
    /// Flow step multiplier for the coarse sign screen. The screen only needs
    /// signs at margin `chi_min`; accepted loops are resampled with `solver`.
    pub screen_coarsening: f64,
}

impl HexOpts {
    fn screen_solver(&self) -> SolverOpts {
        SolverOpts {
            flow_step: self.solver.flow_step * self.screen_coarsening.max(1.0),
            tol: self.solver.tol.max(1e-11),
            ..self.solver
        }
    }
}

impl Default for HexOpts {
    fn default() -> Self {
        Self {
            chi_min: 1e-4,
            samples: 256,
            loop_samples: 64,
            max_candidates: 4096,
            leaf_tol: None,
            eps0: 1.0,
            solver: SolverOpts::default(),
            screen_coarsening: 4.0,
        }
    }
}

/// Two paired arcs of `W^uu(base, R)` on opposite sides of each other.
#[derive(Debug, Clone)]
pub struct HexLoop {
    pub base: TorusPoint,
    pub tau: f64,
    pub chi: f64,
    /// Arclength of `gamma` where the offset is below `-chi`.
    pub t_minus: f64,
    /// Arclength of `gamma` where the offset is above `chi`.
    pub t_plus: f64,
    /// Profile over the closed interval between `t_minus` and `t_plus`, ordered
    /// by increasing arclength.
    pub phi: Vec<PhiSample>,
    /// Integer translation taking the lift of `gamma` near the lift of `gamma'`.
    pub shift: [i64; 3],
    /// Leaf carrying `gamma`.
    pub leaf: LeafSegment,
    /// Leaf carrying `gamma'`; the same leaf for loops found by the search.
    pub partner: LeafSegment,
}

impl HexLoop {
    pub fn gamma(&self, map: &TorusMap, s: f64, opts: &SolverOpts) -> Result<Vec3> {
        leaf_point(map, &self.leaf, s, opts)
    }

    /// Pairing at an arbitrary arclength inside the loop, seeded by the stored
    /// profile.
    pub fn pair(&self, map: &TorusMap, s: f64, opts: &SolverOpts) -> Result<PhiSample> {
        pair_at(
            map,
            &self.leaf,
            s,
            &self.partner,
            self.partner_guess(s),
            opts,
        )
    }

    fn partner_guess(&self, s: f64) -> f64 {
        let k = self
            .phi
            .partition_point(|p| p.s <= s)
            .clamp(1, self.phi.len() - 1);
        let (a, b) = (&self.phi[k - 1], &self.phi[k]);
        let w = if b.s > a.s {
            ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        a.s_prime + w * (b.s_prime - a.s_prime)
    }

    pub fn summary(&self) -> HexLoopSummary {
        HexLoopSummary {
            base: self.base.coords(),
            tau: self.tau,
            chi: self.chi,
            t_minus: self.t_minus,
            t_plus: self.t_plus,
            shift: self.shift,
            max_dist: self.phi.iter().map(|p| p.dist).fold(0.0, f64::max),
            phi: self.phi.clone(),
        }
    }
}

/// Serializable view of a loop.
#[derive(Debug, Clone, Serialize)]
pub struct HexLoopSummary {
    pub base: [f64; 3],
    pub tau: f64,
    pub chi: f64,
    pub t_minus: f64,
    pub t_plus: f64,
    pub shift: [i64; 3],
    pub max_dist: f64,
    pub phi: Vec<PhiSample>,
}

/// A run of close encounters between leaf arclengths `s` and `s'` that differ
/// by one lattice translation.
#[derive(Debug, Clone)]
struct Stretch {
    shift: [i64; 3],
    /// (s, s') pairs, increasing in s.
    pairs: Vec<(f64, f64)>,
}

impl Stretch {
    fn s_range(&self) -> (f64, f64) {
        (self.pairs[0].0, self.pairs[self.pairs.len() - 1].0)
    }

    /// Arclength offset between the paired arcs at the start of the run.
    fn offset(&self) -> f64 {
        self.pairs[0].1 - self.pairs[0].0
    }

    fn guess(&self, s: f64) -> f64 {
        let k = self
            .pairs
            .partition_point(|p| p.0 <= s)
            .clamp(1, self.pairs.len().max(2) - 1);
        if self.pairs.len() == 1 {
            return self.pairs[0].1;
        }
        let (a, b) = (self.pairs[k - 1], self.pairs[k]);
        let w = if b.0 > a.0 {
            (s - a.0) / (b.0 - a.0)
        } else {
            0.0
        };
        a.1 + w * (b.1 - a.1)
    }
}

fn cell_of(p: &Vec3, n: i64) -> [i64; 3] {
    let c = |v: f64| ((v.rem_euclid(1.0) * n as f64) as i64).min(n - 1);
    [c(p[0]), c(p[1]), c(p[2])]
}

/// Close encounters of the leaf with itself: pairs of nodes closer than `tau` on
/// the torus but more than `10 tau` apart along the leaf, grouped into stretches.
fn encounters(leaf: &LeafSegment, tau: f64) -> Vec<Stretch> {
    let n = ((1.0 / tau).floor() as i64).max(1);
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, node) in leaf.nodes.iter().enumerate() {
        cells.entry(cell_of(&node.lift, n)).or_default().push(i);
    }
    let mut offsets: Vec<[i64; 3]> = Vec::new();
    for dx in -1..=1 {
        for dy in -1..=1 {
            for dz in -1..=1 {
                offsets.push([dx, dy, dz]);
            }
        }
    }
    let hits = par::map_range(leaf.nodes.len(), |i| {
        let a = &leaf.nodes[i];
        let c = cell_of(&a.lift, n);
        let mut seen: Vec<[i64; 3]> = Vec::with_capacity(27);
        let mut out = Vec::new();
        for o in &offsets {
            let key = [0, 1, 2].map(|k| (c[k] + o[k]).rem_euclid(n));
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            for &j in cells.get(&key).map_or(&[][..], |v| v.as_slice()) {
                let b = &leaf.nodes[j];
                if b.s - a.s <= 10.0 * tau {
                    continue;
                }
                let d = min_lift_delta(&a.lift, &b.lift);
                if d.norm() < tau {
                    let m = (b.lift - a.lift - d).map(f64::round);
                    out.push(([m[0] as i64, m[1] as i64, m[2] as i64], a.s, b.s));
                }
            }
        }
        out
    });
    let mut groups: BTreeMap<[i64; 3], Vec<(f64, f64)>> = BTreeMap::new();
    for (m, s, sp) in hits.into_iter().flatten() {
        groups.entry(m).or_default().push((s, sp));
    }
    let gap = 2.0 * leaf.tol;
    let mut stretches = Vec::new();
    for (shift, mut pairs) in groups {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        // Keep one partner per query node: the first recorded one.
        pairs.dedup_by(|b, a| a.0 == b.0);
        let mut run: Vec<(f64, f64)> = Vec::new();
        for p in pairs {
            if let Some(last) = run.last() {
                if p.0 - last.0 > gap {
                    stretches.push(Stretch {
                        shift,
                        pairs: std::mem::take(&mut run),
                    });
                }
            }
            run.push(p);
        }
        if !run.is_empty() {
            stretches.push(Stretch { shift, pairs: run });
        }
    }
    // Short lattice returns first: their loops sit closest to the base.
    stretches.sort_by(|a, b| {
        let (da, db) = (a.offset().abs(), b.offset().abs());
        da.total_cmp(&db)
            .then(a.s_range().0.total_cmp(&b.s_range().0))
    });
    stretches
}

/// Samples of the pairing along `[s_a, s_b]`; `None` marks a lost pairing or a
/// pair at distance `>= tau`.
#[allow(clippy::too_many_arguments)]
fn sample_profile(
    map: &TorusMap,
    leaf: &LeafSegment,
    partner: &LeafSegment,
    s_a: f64,
    s_b: f64,
    count: usize,
    tau: f64,
    guess: &dyn Fn(f64) -> f64,
    opts: &SolverOpts,
) -> Vec<Option<PhiSample>> {
    let n = count.max(2);
    (0..n)
        .map(|i| {
            let s = s_a + (s_b - s_a) * i as f64 / (n - 1) as f64;
            pair_at(map, leaf, s, partner, guess(s), opts)
                .ok()
                .filter(|p| p.dist < tau)
        })
        .collect()
}

/// Every sign change with margin `chi_min` inside a contiguous valid block, as
/// the indices of the most extreme samples of the two adjacent same-sign runs.
fn sign_changes(profile: &[Option<PhiSample>], chi_min: f64) -> Vec<(usize, usize)> {
    // Runs of margin samples of one sign: (sign, extreme index, block id).
    let mut runs: Vec<(f64, usize, usize)> = Vec::new();
    let mut block = 0;
    for (i, p) in profile.iter().enumerate() {
        let Some(p) = p else {
            block += 1;
            continue;
        };
        if p.phi.abs() <= chi_min {
            continue;
        }
        let sign = p.phi.signum();
        match runs.last_mut() {
            Some(run) if run.0 == sign && run.2 == block => {
                if p.phi.abs() > profile[run.1].map_or(0.0, |q| q.phi.abs()) {
                    run.1 = i;
                }
            }
            _ => runs.push((sign, i, block)),
        }
    }
    runs.windows(2)
        .filter(|w| w[0].2 == w[1].2 && w[0].0 != w[1].0)
        .map(|w| (w[0].1, w[1].1))
        .collect()
}

/// The sign change whose samples reach least far from the base along the leaf.
fn nearest_sign_change(profile: &[Option<PhiSample>], chi_min: f64) -> Option<(usize, usize)> {
    let reach = |k: usize| profile[k].map_or(f64::INFINITY, |p| p.s.abs().max(p.s_prime.abs()));
    sign_changes(profile, chi_min).into_iter().min_by(|a, b| {
        reach(a.0)
            .max(reach(a.1))
            .total_cmp(&reach(b.0).max(reach(b.1)))
    })
}

fn as_loop(
    base: &TorusPoint,
    tau: f64,
    shift: [i64; 3],
    leaf: &LeafSegment,
    partner: &LeafSegment,
    samples: Vec<PhiSample>,
) -> Option<HexLoop> {
    let (first, last) = (samples.first()?, samples.last()?);
    let (lo, hi) = if first.phi < last.phi {
        (first, last)
    } else {
        (last, first)
    };
    if !(lo.phi < 0.0 && hi.phi > 0.0) {
        return None;
    }
    Some(HexLoop {
        base: *base,
        tau,
        chi: (-lo.phi).min(hi.phi),
        t_minus: lo.s,
        t_plus: hi.s,
        phi: samples,
        shift,
        leaf: leaf.clone(),
        partner: partner.clone(),
    })
}

fn examine(
    map: &TorusMap,
    base: &TorusPoint,
    leaf: &LeafSegment,
    st: &Stretch,
    tau: f64,
    opts: &HexOpts,
) -> Option<HexLoop> {
    let (s_a, s_b) = st.s_range();
    let guess = |s: f64| st.guess(s);
    let coarse = sample_profile(
        map,
        leaf,
        leaf,
        s_a,
        s_b,
        opts.samples,
        tau,
        &guess,
        &opts.screen_solver(),
    );
    let (i, j) = nearest_sign_change(&coarse, opts.chi_min)?;
    let (a, b) = (coarse[i]?, coarse[j]?);
    // Refine between the bracketing samples.
    let refined = sample_profile(
        map,
        leaf,
        leaf,
        a.s,
        b.s,
        opts.loop_samples,
        tau,
        &guess,
        &opts.solver,
    );
    let refined: Option<Vec<PhiSample>> = refined.into_iter().collect();
    let hex = as_loop(base, tau, st.shift, leaf, leaf, refined?)?;
    (hex.chi >= opts.chi_min && revalidate(map, &hex, opts)).then_some(hex)
}

/// Recomputes the profile at doubled sampling and checks the sign pattern, the
/// margin and the distance bound.
pub fn revalidate(map: &TorusMap, hex: &HexLoop, opts: &HexOpts) -> bool {
    let (s_a, s_b) = (hex.phi[0].s, hex.phi[hex.phi.len() - 1].s);
    let n = 2 * (hex.phi.len() - 1) + 1;
    let guess = |s: f64| hex.partner_guess(s);
    let fine = sample_profile(
        map,
        &hex.leaf,
        &hex.partner,
        s_a,
        s_b,
        n,
        hex.tau,
        &guess,
        &opts.solver,
    );
    let Some(fine) = fine.into_iter().collect::<Option<Vec<_>>>() else {
        return false;
    };
    let pattern_ok = hex.phi.iter().enumerate().all(|(k, p)| {
        let q = &fine[2 * k];
        p.phi.abs() <= opts.chi_min || q.phi.signum() == p.phi.signum()
    });
    let ends = [&fine[0], &fine[n - 1]];
    let lo = ends.iter().map(|p| p.phi).fold(f64::INFINITY, f64::min);
    let hi = ends.iter().map(|p| p.phi).fold(f64::NEG_INFINITY, f64::max);
    pattern_ok && lo < -opts.chi_min && hi > opts.chi_min
}

/// Grows `W^uu(x, R)`, enumerates its close encounters with itself and returns
/// the first paired stretch whose center offset changes sign with margin at least
/// `chi_min`. Candidates are taken by increasing arclength offset, then by
/// arclength, so the choice is deterministic.
pub fn find_hex_loop(
    map: &TorusMap,
    x: &TorusPoint,
    radius: f64,
    tau: f64,
    opts: &HexOpts,
) -> Result<Option<HexLoop>> {
    if !(tau > 0.0 && tau <= opts.eps0 / 10.0) {
        return Err(Error::Precondition(format!(
            "tau = {tau} outside (0, eps0/10]"
        )));
    }
    let tol = opts.leaf_tol.unwrap_or((radius / 1e4).max(tau / 5.0));
    let leaf = grow_unstable_leaf(map, x, radius, tol)?;
    let stretches = encounters(&leaf, tau);
    if stretches.len() > opts.max_candidates {
        return Err(Error::SearchBudgetExceeded(stretches.len()));
    }
    if map.is_linear() {
        // Constant bundles: the offset along a stretch is constant, so a single
        // sample per stretch decides it.
        let mut one = *opts;
        one.samples = 2;
        return Ok(stretches
            .iter()
            .find_map(|st| examine(map, x, &leaf, st, tau, &one)));
    }
    let batch = rayon_width();
    for chunk in stretches.chunks(batch) {
        let found = par::map(chunk, |st| examine(map, x, &leaf, st, tau, opts));
        if let Some(hex) = found.into_iter().flatten().next() {
            return Ok(Some(hex));
        }
    }
    Ok(None)
}

fn rayon_width() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads().max(1)
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Pushes a loop forward `n` times and pairs the images again. Only the part of
/// the loop whose image stays within `tau / 2` is kept; returns the image loop
/// (at the smaller scale) if its offset still changes sign with margin.
pub fn forward_image_loop(
    map: &TorusMap,
    hex: &HexLoop,
    n: usize,
    opts: &HexOpts,
) -> Result<Option<HexLoop>> {
    let base = (0..n).fold(hex.base, |p, _| map.apply(&p));
    let rate = map
        .reference_frame()
        .map_or(1.0, |f| f.rates[0])
        .powi(n as i32);
    let tau_img = hex.tau / 2.0;
    let push = |v: Vec3| (0..n).fold(v, |a, _| map.apply_lift(&a));
    let mid = hex.phi[hex.phi.len() / 2];
    let span = (hex.t_plus - hex.t_minus).abs();
    // Short pieces of W^uu(f^n x) around the images of the two arcs.
    let radius = 1.5 * rate * span + 0.1;
    let tol = (radius / 1e4).max(tau_img / 20.0);
    let g_mid = push(hex.gamma(map, mid.s, &opts.solver)?);
    let gp_mid = push(leaf_point(map, &hex.partner, mid.s_prime, &opts.solver)?);
    let leaf = grow_unstable_leaf(map, &TorusPoint::from_lift(&g_mid), radius, tol)?;
    let partner = grow_unstable_leaf(map, &TorusPoint::from_lift(&gp_mid), radius, tol)?;
    let mut profile = Vec::with_capacity(hex.phi.len());
    for p in &hex.phi {
        let g = push(hex.gamma(map, p.s, &opts.solver)?);
        let gp = push(leaf_point(map, &hex.partner, p.s_prime, &opts.solver)?);
        let sample = pair_at(
            map,
            &leaf,
            locate(&leaf, &g),
            &partner,
            locate(&partner, &gp),
            &opts.solver,
        )
        .ok()
        .filter(|q| q.dist < tau_img);
        profile.push(sample);
    }
    let Some((i, j)) = nearest_sign_change(&profile, opts.chi_min) else {
        return Ok(None);
    };
    let (lo, hi) = (i.min(j), i.max(j));
    let Some(kept) = profile[lo..=hi].iter().copied().collect::<Option<Vec<_>>>() else {
        return Ok(None);
    };
    Ok(as_loop(&base, tau_img, hex.shift, &leaf, &partner, kept))
}

/// Arclength on `leaf` of the point nearest to the lift `p`.
fn locate(leaf: &LeafSegment, p: &Vec3) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for w in leaf.nodes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let q = a.lift + min_lift_delta(&a.lift, p);
        let ab = b.lift - a.lift;
        let t = ((q - a.lift).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let d = (a.lift + ab * t - q).norm();
        if d < best.0 {
            best = (d, a.s + t * (b.s - a.s));
        }
    }
    best.1
}
