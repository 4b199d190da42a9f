//! `sturm` command line: reads a scenario file, runs one pipeline stage and
//! writes CSV, JSON and DOT files into the output directory.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when the
//! numerics cannot be trusted (including dropping-lemma violations and
//! hypothesis failures such as non-hyperbolic equilibria), 1 for I/O errors.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::attractor::{self, assemble_attractor, predicted_graph, scenario_equilibria, AttractorReport, EdgeKind, EdgeStatus};
use crate::config::{random_unit_coefficients, ScenarioConfig};
use crate::equilibria::{sturm_permutation, write_table_csv, EquilibriumSummary, SturmPermutation};
use crate::error::{Error, Result};
use crate::field::StateField;
use crate::infinity::{
    equator_diagnostics, growup_direction, infinity_equilibria, predicted_direction, run_sphere_flow,
    EquatorDiagnostics, GrowupDirection, InfinityEquilibrium, LimitingDiffusion,
};
use crate::integrator::{self, difference_zero_monitor, integrate, DropEvent, Outcome, TrajectoryRecord};

#[derive(Debug, Parser)]
#[command(name = "sturm", version, about = "Equilibria, infinity dynamics and connection graphs of slowly non-dissipative parabolic equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Single seed; overrides the file's `seeds`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for concurrent stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Also write two-column `.dat` files for gnuplot.
    #[arg(long, global = true)]
    pub emit_plots_data: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate one trajectory per seed.
    Simulate,
    /// Bounded equilibria, spectra and the Sturm permutation.
    Equilibria,
    /// Equilibria at infinity and sphere-flow runs.
    Infinity,
    /// Predicted and verified connection graph.
    Graph,
    /// y-map of a trajectory relative to an equilibrium.
    Ymap,
    /// Parameter sweep over `b`.
    Sweep,
}

/// Options shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub emit_plots_data: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Expression(_) | Error::CoefficientViolation(_) | Error::InvalidArgument(_) | Error::Json(_) => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(j) = cli.jobs {
        // Fails only when a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return 2;
    };
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        emit_plots_data: cli.emit_plots_data,
    };
    let result = ScenarioConfig::load(path).and_then(|cfg| run(cli.command, &cfg, &opts));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one subcommand; returns the files written.
pub fn run(cmd: Command, cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    let mut out = Output {
        dir,
        files: Vec::new(),
        plots: opts.emit_plots_data,
    };
    match cmd {
        Command::Simulate => simulate(cfg, opts, &mut out)?,
        Command::Equilibria => equilibria_cmd(cfg, &mut out)?,
        Command::Infinity => infinity_cmd(cfg, opts, &mut out)?,
        Command::Graph => graph_cmd(cfg, &mut out)?,
        Command::Ymap => ymap_cmd(cfg, opts, &mut out)?,
        Command::Sweep => sweep_cmd(cfg, &mut out)?,
    }
    Ok(out.files)
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
    plots: bool,
}

impl Output {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Two-column `x y` file, written only with `--emit-plots-data`.
    fn plot(&mut self, name: &str, pairs: impl Iterator<Item = (f64, f64)>) -> Result<()> {
        if !self.plots {
            return Ok(());
        }
        let mut w = self.create(name)?;
        for (x, y) in pairs {
            writeln!(w, "{x:.16e} {y:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn snapshot(out: &mut Output, name: &str, u: &StateField) -> Result<()> {
    let mut w = out.create(name)?;
    u.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------- simulate

#[derive(Debug, Serialize)]
struct RunSummary {
    seed: u64,
    outcome: Outcome,
    accepted_steps: usize,
    rejected_steps: usize,
    final_norm: f64,
    /// Theory prediction from the initial datum.
    predicted_direction: Option<InfinityEquilibrium>,
    growup_direction: Option<GrowupDirection>,
    equator: EquatorDiagnostics,
}

#[derive(Debug, Serialize)]
struct PairCheck {
    seeds: (u64, u64),
    samples: usize,
    drops: Vec<DropEvent>,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    scenario: String,
    /// Zero numbers are counted relative to `u = 0` when it is stationary.
    zero_reference: bool,
    runs: Vec<RunSummary>,
    pair_checks: Vec<PairCheck>,
}

fn simulate(cfg: &ScenarioConfig, opts: &RunOptions, out: &mut Output) -> Result<()> {
    let c = cfg.coefficients()?;
    let grid = cfg.grid();
    let ctrl = cfg.controller();
    let zero = StateField::zeros(grid);
    let zero_is_stationary = integrator::vector_field(&zero, &c).sup_norm() == 0.0;
    let reference = zero_is_stationary.then_some(&zero);
    let seeds = cfg.seeds(opts.seed);
    let mut records: Vec<(u64, TrajectoryRecord)> = Vec::new();
    let mut runs = Vec::new();
    for &seed in &seeds {
        let u0 = cfg.initial.build(grid, seed)?;
        let tr = integrate(&u0, &ctrl, &c, reference)?;
        let mut w = out.create(&format!("trajectory_s{seed}.csv"))?;
        tr.write_csv(&mut w)?;
        w.flush()?;
        snapshot(out, &format!("final_s{seed}.csv"), tr.last())?;
        out.plot(&format!("norm_s{seed}.dat"), tr.times.iter().copied().zip(tr.norms.iter().copied()))?;
        runs.push(RunSummary {
            seed,
            outcome: tr.outcome,
            accepted_steps: tr.accepted_steps,
            rejected_steps: tr.rejected_steps,
            final_norm: tr.last().norm(),
            predicted_direction: predicted_direction(&u0, c.a_inf, c.b),
            growup_direction: tr.outcome.is_growup().then(|| growup_direction(&tr)).transpose()?,
            equator: equator_diagnostics(&tr, &c),
        });
        records.push((seed, tr));
    }
    // pairs are only comparable at shared sample times
    let mut pair_checks = Vec::new();
    let synchronized = if ctrl.record_interval.is_some() { records.len() } else { 0 };
    for w in records[..synchronized].windows(2) {
        let m = difference_zero_monitor(&w[0].1, &w[1].1)?;
        pair_checks.push(PairCheck {
            seeds: (w[0].0, w[1].0),
            samples: m.samples.len(),
            drops: m.drops,
        });
    }
    out.json(
        "simulate.json",
        &SimulateReport {
            scenario: c.name.clone(),
            zero_reference: zero_is_stationary,
            runs,
            pair_checks,
        },
    )
}

// ------------------------------------------------------------ equilibria

#[derive(Debug, Serialize)]
struct EquilibriaReport {
    scenario: String,
    eta_range: (f64, f64),
    equilibria: Vec<EquilibriumSummary>,
    sturm_permutation: SturmPermutation,
}

fn equilibria_cmd(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let s = cfg.scenario()?;
    let eqs = scenario_equilibria(&s)?;
    let sigma = sturm_permutation(&eqs)?;
    let mut w = out.create("equilibria.csv")?;
    write_table_csv(&eqs, s.search.m_eigs, &mut w)?;
    w.flush()?;
    for e in &eqs {
        snapshot(out, &format!("profiles/e{}.csv", e.id), &e.profile)?;
        let g = e.profile.grid();
        out.plot(
            &format!("profiles/e{}.dat", e.id),
            e.profile.values().iter().enumerate().map(|(i, v)| (g.node(i), *v)),
        )?;
    }
    out.json(
        "equilibria.json",
        &EquilibriaReport {
            scenario: s.coeff.name.clone(),
            eta_range: (s.search.eta_min, s.search.eta_max),
            equilibria: eqs.iter().map(|e| e.summary()).collect(),
            sturm_permutation: sigma,
        },
    )
}

// -------------------------------------------------------------- infinity

#[derive(Debug, Serialize)]
struct SphereSummary {
    seed: u64,
    converged: bool,
    limit: Option<InfinityEquilibrium>,
    limit_distance: f64,
    max_energy_increase: f64,
    initial_energy: f64,
    final_energy: f64,
}

#[derive(Debug, Serialize)]
struct InfinityReport {
    a_inf: f64,
    b: f64,
    n_infinity: usize,
    count: usize,
    equilibria: Vec<InfinityEquilibrium>,
    labels: Vec<String>,
    sphere_runs: Vec<SphereSummary>,
}

fn infinity_cmd(cfg: &ScenarioConfig, opts: &RunOptions, out: &mut Output) -> Result<()> {
    let c = cfg.coefficients()?;
    let grid = cfg.grid();
    let eqs = infinity_equilibria(c.a_inf, c.b)?;
    let a = LimitingDiffusion::Constant(c.a_inf);
    let settings = cfg.sphere.settings();
    let mut runs = Vec::new();
    for seed in cfg.seeds(opts.seed) {
        let c0 = random_unit_coefficients(cfg.sphere.modes, cfg.sphere.decay, seed);
        let run = run_sphere_flow(&c0, grid, &a, &settings)?;
        let mut w = out.create(&format!("sphere_s{seed}.csv"))?;
        run.write_csv(&mut w)?;
        w.flush()?;
        out.plot(
            &format!("energy_s{seed}.dat"),
            run.times.iter().copied().zip(run.energies.iter().copied()),
        )?;
        runs.push(SphereSummary {
            seed,
            converged: run.converged,
            limit: run.limit,
            limit_distance: run.limit_distance,
            max_energy_increase: run.max_energy_increase,
            initial_energy: run.energies[0],
            final_energy: *run.energies.last().unwrap(),
        });
    }
    out.json(
        "infinity.json",
        &InfinityReport {
            a_inf: c.a_inf,
            b: c.b,
            n_infinity: c.n_infinity(),
            count: eqs.len(),
            labels: eqs.iter().map(InfinityEquilibrium::label).collect(),
            equilibria: eqs,
            sphere_runs: runs,
        },
    )
}

// ----------------------------------------------------------------- graph

fn graph_cmd(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let report = assemble_attractor(&cfg.scenario()?)?;
    out.text("graph.dot", &report.graph.to_dot())?;
    out.json("report.json", &report)
}

// ------------------------------------------------------------------ ymap

#[derive(Debug, Serialize)]
struct YmapReport {
    reference: EquilibriumSummary,
    seed: u64,
    outcome: Outcome,
    zero_history: Vec<i64>,
    result: attractor::YMapResult,
}

fn ymap_cmd(cfg: &ScenarioConfig, opts: &RunOptions, out: &mut Output) -> Result<()> {
    let s = cfg.scenario()?;
    let eqs = scenario_equilibria(&s)?;
    let e = eqs.get(cfg.ymap.reference).ok_or_else(|| {
        Error::Config(format!(
            "ymap.reference: no equilibrium e{} ({} found)",
            cfg.ymap.reference,
            eqs.len()
        ))
    })?;
    let seed = cfg.seeds(opts.seed)[0];
    let u0 = e.profile.add(&cfg.initial.build(cfg.grid(), seed)?)?;
    let tr = integrate(&u0, &s.ctrl, &s.coeff, Some(&e.profile))?;
    let zh = tr.zero_history.clone().unwrap_or_default();
    for (i, w) in zh.windows(2).enumerate() {
        if w[1] > w[0] {
            return Err(Error::DroppingViolation {
                t0: tr.times[i],
                t1: tr.times[i + 1],
                before: w[0],
                after: w[1],
            });
        }
    }
    let n = cfg.ymap.n.unwrap_or_else(|| zh.first().copied().unwrap_or(0).max(0) as usize);
    let result = attractor::ymap(&tr, e, n)?;
    out.plot("ymap.dat", result.coords.iter().enumerate().map(|(k, y)| (k as f64, *y)))?;
    out.json(
        "ymap.json",
        &YmapReport {
            reference: e.summary(),
            seed,
            outcome: tr.outcome,
            zero_history: zh,
            result,
        },
    )
}

// ----------------------------------------------------------------- sweep

#[derive(Debug, Default, Serialize)]
struct SweepEntry {
    b: f64,
    error: Option<String>,
    bounded: usize,
    morse_indices: Vec<usize>,
    n_infinity: usize,
    hb_edges: usize,
    hup_edges: usize,
    hinf_edges: usize,
    verified: usize,
    undetermined: usize,
    refuted: usize,
    discrepancies: Vec<String>,
}

fn sweep_entry(cfg: &ScenarioConfig, b: f64) -> Result<SweepEntry> {
    let scenario = cfg.with_b(b).scenario()?;
    let (graph, morse, discrepancies) = if cfg.sweep.verify {
        let r: AttractorReport = assemble_attractor(&scenario)?;
        let morse = r.equilibria.iter().map(|e| e.morse).collect();
        (r.graph, morse, r.discrepancies)
    } else {
        let eqs = scenario_equilibria(&scenario)?;
        let inf = infinity_equilibria(scenario.coeff.a_inf, b)?;
        let morse = eqs.iter().map(|e| e.morse_index).collect();
        (predicted_graph(&eqs, &inf)?, morse, Vec::new())
    };
    let count_kind = |k| graph.edges_of(k).count();
    let count_status = |s| graph.edges.iter().filter(|e| e.status == s).count();
    Ok(SweepEntry {
        b,
        error: None,
        bounded: graph.nodes.iter().filter(|n| n.node.is_bounded()).count(),
        morse_indices: morse,
        n_infinity: scenario.coeff.n_infinity(),
        hb_edges: count_kind(EdgeKind::Hb),
        hup_edges: count_kind(EdgeKind::Hup),
        hinf_edges: count_kind(EdgeKind::Hinf),
        verified: count_status(EdgeStatus::VerifiedNumerically),
        undetermined: count_status(EdgeStatus::Undetermined),
        refuted: count_status(EdgeStatus::Refuted),
        discrepancies,
    })
}

fn sweep_cmd(cfg: &ScenarioConfig, out: &mut Output) -> Result<()> {
    let bs = if cfg.sweep.b.is_empty() {
        vec![cfg.coeff.b]
    } else {
        cfg.sweep.b.clone()
    };
    let entries: Vec<SweepEntry> = bs
        .par_iter()
        .map(|&b| {
            sweep_entry(cfg, b).unwrap_or_else(|e| SweepEntry {
                b,
                error: Some(e.to_string()),
                ..SweepEntry::default()
            })
        })
        .collect();
    out.plot(
        "sweep.dat",
        entries.iter().map(|e| (e.b, e.bounded as f64)),
    )?;
    out.json("sweep.json", &entries)
}

/// Reads a scenario and runs it; convenience for embedding.
pub fn run_file(cmd: Command, path: &Path, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    run(cmd, &ScenarioConfig::load(path)?, opts)
}
