use std::fmt::Write as _;
use std::time::Instant;

use clap::ValueEnum;
use phlab_core::leafwork::{grow_unstable_leaf, SolverOpts};
use phlab_core::par::Exec;
use phlab_core::sh_gibbs::{density_report, sh_certificate, ugibbs_histogram, GibbsOpts};
use phlab_core::splitting::{certify_domination, frames_on, grid, line_angle, rate_bounds, Bundle};
use phlab_core::torus::TorusMap;
use phlab_core::transversality::{
    build_even_chain, find_hex_loop, remeasure, revalidate, ChainOpts, HexOpts,
};
use phlab_core::Error;
use serde_json::{json, Value};

use crate::acceptance::{run_criterion, Cache};
use crate::config::ExperimentConfig;
use crate::report::{Check, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Splitting,
    Leaf,
    Hexloop,
    Drift,
    Density,
    Sh,
    Gibbs,
    Accept,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Splitting => "splitting",
            Command::Leaf => "leaf",
            Command::Hexloop => "hexloop",
            Command::Drift => "drift",
            Command::Density => "density",
            Command::Sh => "sh",
            Command::Gibbs => "gibbs",
            Command::Accept => "accept",
        }
    }
}

/// A finished run: the report plus an optional CSV sidecar.
#[derive(Debug)]
pub struct Run {
    pub report: RunReport,
    pub csv: Option<String>,
}

#[derive(Default)]
struct Outcome {
    outputs: Value,
    checks: Vec<Check>,
    csv: Option<String>,
}

fn solver(cfg: &ExperimentConfig) -> SolverOpts {
    SolverOpts {
        flow_step: cfg.tolerances.flow_step,
        max_iter: cfg.budgets.max_iter,
        ..SolverOpts::default()
    }
}

fn hex_opts(cfg: &ExperimentConfig) -> HexOpts {
    HexOpts {
        chi_min: cfg.tolerances.chi_min,
        eps0: cfg.tolerances.eps0,
        solver: solver(cfg),
        ..HexOpts::default()
    }
}

/// Points on a regular grid of this many cells per side are used for frames.
const FRAME_GRID: usize = 8;

fn splitting(map: &TorusMap, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let sample = grid(FRAME_GRID);
    let frames = frames_on(map, &sample, 64)?;
    let dom = certify_domination(map, &sample, cfg.budgets.max_iter)?;
    let rates = rate_bounds(map, &sample)?;
    let margin = frames
        .iter()
        .map(|f| f.separation_margin())
        .fold(f64::INFINITY, f64::min);
    let mut checks = vec![Check::new("rates separate", margin > 0.0, json!(margin))];
    if map.epsilon() == 0.0 {
        if let Some(r) = map.reference_frame() {
            let worst = frames
                .iter()
                .flat_map(|f| {
                    [Bundle::Uu, Bundle::C, Bundle::Ss]
                        .into_iter()
                        .zip(r.dirs)
                        .map(move |(b, d)| line_angle(&f.dir(b), &d))
                })
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "matches linear eigenframe",
                worst < 1e-6,
                json!(worst),
            ));
        }
    }
    let mut csv =
        String::from("x,y,z,uu_x,uu_y,uu_z,c_x,c_y,c_z,ss_x,ss_y,ss_z,rate_uu,rate_c,rate_ss\n");
    for f in &frames {
        let [x, y, z] = f.base.coords();
        let (u, c, s) = (f.e_uu, f.e_c, f.e_ss);
        let _ = writeln!(
            csv,
            "{x},{y},{z},{},{},{},{},{},{},{},{},{},{},{},{}",
            u[0], u[1], u[2], c[0], c[1], c[2], s[0], s[1], s[2], f.rate_uu, f.rate_c, f.rate_ss
        );
    }
    Ok(Outcome {
        outputs: json!({"points": frames.len(), "domination": dom, "rates": rates, "min_separation": margin}),
        checks,
        csv: Some(csv),
    })
}

fn leaf(map: &TorusMap, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let (radius, tol) = (cfg.experiment.radius, cfg.tolerances.tol);
    let leaf = grow_unstable_leaf(map, &cfg.point(), radius, tol)?;
    let max_gap = leaf.spacings().fold(0.0, f64::max);
    let base = leaf.nodes[leaf.base_index()].s;
    let mut csv = String::from("s,x,y,z\n");
    for n in &leaf.nodes {
        let _ = writeln!(csv, "{},{},{},{}", n.s, n.lift.x, n.lift.y, n.lift.z);
    }
    Ok(Outcome {
        outputs: json!({"nodes": leaf.len(), "s_min": leaf.s_min(), "s_max": leaf.s_max(), "max_spacing": max_gap}),
        checks: vec![
            Check::new(
                "spacing within tol",
                max_gap <= tol * (1.0 + 1e-9),
                json!(max_gap),
            ),
            Check::new("base at arclength 0", base == 0.0, json!(base)),
            Check::new(
                "covers radius",
                leaf.s_min() <= -radius * (1.0 - 1e-9) && leaf.s_max() >= radius * (1.0 - 1e-9),
                json!([leaf.s_min(), leaf.s_max()]),
            ),
        ],
        csv: Some(csv),
    })
}

fn hexloop(map: &TorusMap, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let opts = hex_opts(cfg);
    let found = find_hex_loop(
        map,
        &cfg.point(),
        cfg.experiment.radius,
        cfg.tolerances.tau,
        &opts,
    )?;
    let Some(h) = found else {
        return Ok(Outcome {
            outputs: json!({"loop": null}),
            ..Outcome::default()
        });
    };
    let summary = h.summary();
    let mut csv = String::from("s,s_prime,phi,dist,stable_leg\n");
    for p in &summary.phi {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            p.s, p.s_prime, p.phi, p.dist, p.stable_leg
        );
    }
    let ok = revalidate(map, &h, &opts);
    Ok(Outcome {
        outputs: json!({"loop": summary}),
        checks: vec![
            Check::new("revalidated at doubled sampling", ok, Value::Null),
            Check::new("margin above chi_min", h.chi >= opts.chi_min, json!(h.chi)),
        ],
        csv: Some(csv),
    })
}

fn drift(map: &TorusMap, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let opts = ChainOpts {
        hex: hex_opts(cfg),
        radius: e.radius,
        tau: cfg.tolerances.tau,
        max_searches: cfg.budgets.max_searches,
        ..ChainOpts::default()
    };
    let delta = cfg.tolerances.delta;
    let chain = build_even_chain(map, &cfg.point(), e.n, e.eps, delta, &opts)?;
    let re = remeasure(map, &chain)?;
    let lo = e.eps / map.df_norm();
    let mut csv = String::from("i,param,x,y,z\n");
    for (i, (c, p)) in chain.params.iter().zip(&chain.points).enumerate() {
        let _ = writeln!(csv, "{i},{c},{},{},{}", p.x, p.y, p.z);
    }
    Ok(Outcome {
        checks: vec![
            Check::new(
                "ratio error within delta",
                chain.max_ratio_error <= delta,
                json!(chain.max_ratio_error),
            ),
            Check::new(
                "diameter in window",
                (lo..=e.eps).contains(&chain.diam),
                json!([lo, chain.diam, e.eps]),
            ),
            Check::new(
                "remeasured ratio error",
                re.max_ratio_error <= delta,
                json!(re.max_ratio_error),
            ),
        ],
        outputs: json!({"chain": chain, "remeasure": re}),
        csv: Some(csv),
    })
}

fn density(map: &TorusMap, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let r = density_report(map, &cfg.point(), e.radius, e.grid, Exec::default())?;
    let r2 = density_report(map, &cfg.point(), 2.0 * e.radius, e.grid, Exec::default())?;
    let mut csv = String::from("i,j,k\n");
    for [i, j, k] in &r.empty_cells {
        let _ = writeln!(csv, "{i},{j},{k}");
    }
    Ok(Outcome {
        outputs: json!({
            "radius": r.radius,
            "grid": r.grid_n,
            "coverage": r.coverage,
            "coverage_2r": r2.coverage,
            "leaf_nodes": r.leaf_nodes,
            "empty_cells": r.empty_cells.len(),
        }),
        checks: vec![Check::new(
            "coverage grows with radius",
            r2.coverage >= r.coverage,
            json!([r.coverage, r2.coverage]),
        )],
        csv: Some(csv),
    })
}

fn sh(map: &TorusMap, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let cert = sh_certificate(
        map,
        &cfg.point(),
        e.radius,
        e.n_max,
        e.samples,
        &solver(cfg),
    )?;
    Ok(Outcome {
        checks: vec![Check::new(
            "lambda above 1",
            cert.lambda_sh > 1.0,
            json!(cert.lambda_sh),
        )],
        outputs: json!({"certificate": cert}),
        csv: None,
    })
}

fn gibbs(map: &TorusMap, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let seed = grow_unstable_leaf(map, &cfg.point(), 0.05, cfg.tolerances.tol.min(0.01))?;
    let opts = GibbsOpts {
        node_cap: cfg.budgets.node_cap,
        ..GibbsOpts::default()
    };
    let h = ugibbs_histogram(map, &seed, e.npush, e.grid, &opts)?;
    let defect = h.mass_defects.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        outputs: json!({
            "grid": h.grid_n,
            "n_push": h.n_push,
            "nodes": h.nodes,
            "tv_uniform": h.tv_uniform(),
            "mass_defects": h.mass_defects,
        }),
        checks: vec![Check::new("mass conserved", defect <= 1e-12, json!(defect))],
        csv: Some(h.to_csv()),
    })
}

fn accept(cfg: &ExperimentConfig) -> Outcome {
    let mut cache = Cache::default();
    let verdicts: Vec<_> = cfg
        .experiment
        .criteria
        .iter()
        .map(|&id| run_criterion(id, cfg, &mut cache))
        .collect();
    Outcome {
        checks: verdicts
            .iter()
            .map(|v| {
                Check::new(
                    &format!("criterion {}: {}", v.id, v.name),
                    v.pass,
                    Value::Null,
                )
            })
            .collect(),
        outputs: json!({ "criteria": verdicts }),
        csv: None,
    }
}

/// Runs one subcommand. Operational errors end up in the report's `error`
/// field; nothing is written here.
pub fn run_experiment(cfg: &ExperimentConfig, cmd: Command) -> Run {
    let start = Instant::now();
    let result = match cmd {
        Command::Accept => Ok(accept(cfg)),
        _ => cfg.build_map().and_then(|map| match cmd {
            Command::Splitting => splitting(&map, cfg),
            Command::Leaf => leaf(&map, cfg),
            Command::Hexloop => hexloop(&map, cfg),
            Command::Drift => drift(&map, cfg),
            Command::Density => density(&map, cfg),
            Command::Sh => sh(&map, cfg),
            Command::Gibbs => gibbs(&map, cfg),
            Command::Accept => unreachable!("handled above"),
        }),
    };
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(e) => (Outcome::default(), Some(format!("{e:?}: {e}"))),
    };
    Run {
        report: RunReport {
            command: cmd.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.echo(),
            outputs: outcome.outputs,
            checks: outcome.checks,
            error,
            wall_time: start.elapsed().as_secs_f64(),
        },
        csv: outcome.csv,
    }
}
