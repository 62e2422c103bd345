//! Experiment sweeps over training runs: architecture search, λ and
//! residual-order ablations, grid-density and diffusivity sweeps, and the
//! finite-difference versus PINN comparison.
//!
//! A [`SweepPlan`] expands into cells, each cell into `iterations` runs with
//! seeds derived from the plan seed (so every cell sees the same seeds). Runs
//! execute on a bounded rayon pool and are aggregated after all of them have
//! finished, so a report depends only on the plan.
//!
//! ```no_run
//! use pinnkit::harness::{run_plan, SweepPlan};
//!
//! let plan = SweepPlan::preset("linear-lambda")?;
//! let report = run_plan(&plan, 4)?;
//! report.emit_dir("out/linear-lambda")?;
//! # Ok::<(), pinnkit::Error>(())
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{linspace, GroundTruth, Sampling};
use crate::error::{Error, Result};
use crate::fdm::{cfl_check, fdm_mse, fdm_solve, FdmGrid};
use crate::nn::MlpConfig;
use crate::problems::Diffusivity;
use crate::rng::derive_seed;
use crate::taylor;
use crate::trainer::{train, Region, RunConfig, RunStatus, TrainReport};

pub const EXPERIMENT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Mean ground-truth MSE over the plan's metric region.
    #[default]
    GtMse,
    /// Mean final total loss.
    TotalLoss,
}

/// One `(Δ, T, D)` cell of the finite-difference comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdmCell {
    pub delta: f64,
    pub t_max: f64,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SweepKind {
    /// The base configuration alone, repeated.
    Replicate,
    /// Stage 1 sweeps `neurons` at `fixed_layers`; stage 2 sweeps `layers`
    /// at the stage-1 winner.
    ArchSearch { fixed_layers: usize, neurons: Vec<usize>, layers: Vec<usize> },
    LambdaSweep { lambdas: Vec<f64> },
    ResidualOrderSweep { orders: Vec<usize> },
    /// Heat grids with `Δx = Δt = delta`.
    DensitySweep { deltas: Vec<f64> },
    /// Heat data and equation with each diffusivity.
    DiffusivitySweep { values: Vec<f64> },
    /// Finite differences and (unless `fdm_only`) a PINN per cell.
    FdmPinnCompare { cells: Vec<FdmCell>, fdm_only: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub name: String,
    pub kind: SweepKind,
    pub base: RunConfig,
    pub iterations: usize,
    /// Iteration `i` of every cell trains with seed `derive_seed(seed, i)`.
    pub seed: u64,
    #[serde(default)]
    pub criterion: Criterion,
    /// Evaluation region whose MSE feeds the aggregates and the criterion.
    pub metric_region: String,
}

fn metric_region_for(base: &RunConfig) -> String {
    if base.problem.is_heat() {
        "domain".into()
    } else {
        "overall".into()
    }
}

impl SweepPlan {
    pub fn new(name: &str, kind: SweepKind, base: RunConfig) -> Self {
        SweepPlan {
            name: name.to_string(),
            kind,
            metric_region: metric_region_for(&base),
            base,
            iterations: 5,
            seed: 0,
            criterion: Criterion::GtMse,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "linear-intervals",
            "quadratic-intervals",
            "heat-forward",
            "heat-inverse",
            "linear-arch",
            "quadratic-arch",
            "heat-arch",
            "linear-lambda",
            "quadratic-lambda",
            "linear-order",
            "quadratic-order",
            "heat-density",
            "heat-diffusivity",
            "fdm-pinn",
            "fdm-pinn-table8",
            "fdm-only",
        ]
    }

    /// Plans reproducing the structure of each published table or figure.
    pub fn preset(name: &str) -> Result<Self> {
        let appendix_cells = || {
            let mut cells = Vec::new();
            // D at 0.2x, 1x and 1.8x the stability limit Δ/2 (Δx = Δt)
            let rows: [(f64, [f64; 3]); 3] = [
                (0.1, [0.01, 0.05, 0.09]),
                (0.05, [0.005, 0.025, 0.045]),
                (0.025, [0.0025, 0.0125, 0.0225]),
            ];
            for (delta, ds) in rows {
                for t_max in [1.0, 10.0, 100.0] {
                    for d in ds {
                        cells.push(FdmCell { delta, t_max, d });
                    }
                }
            }
            cells
        };
        let plan = match name {
            "linear-intervals" => SweepPlan::new(name, SweepKind::Replicate, RunConfig::linear(0)).with_iterations(10),
            "quadratic-intervals" => SweepPlan::new(name, SweepKind::Replicate, RunConfig::quadratic(0)).with_iterations(10),
            "heat-forward" => SweepPlan::new(name, SweepKind::Replicate, RunConfig::heat_forward(0)).with_iterations(10),
            "heat-inverse" => SweepPlan::new(name, SweepKind::Replicate, RunConfig::heat_inverse(0)).with_iterations(10),
            "linear-arch" | "quadratic-arch" => {
                let base = if name == "linear-arch" { RunConfig::linear(0) } else { RunConfig::quadratic(0) };
                SweepPlan::new(
                    name,
                    SweepKind::ArchSearch {
                        fixed_layers: 4,
                        neurons: vec![5, 10, 20, 30, 40],
                        layers: vec![2, 3, 4, 5, 6],
                    },
                    base,
                )
            }
            "heat-arch" => {
                let mut base = RunConfig::heat_forward(0);
                base.epochs = 2500;
                SweepPlan::new(
                    name,
                    SweepKind::ArchSearch {
                        fixed_layers: 4,
                        neurons: vec![10, 20, 40, 60, 80],
                        layers: vec![2, 3, 4, 5, 6],
                    },
                    base,
                )
            }
            "linear-lambda" | "quadratic-lambda" => {
                let base = if name == "linear-lambda" { RunConfig::linear(0) } else { RunConfig::quadratic(0) };
                SweepPlan::new(
                    name,
                    SweepKind::LambdaSweep {
                        lambdas: vec![0.0, 1e-6, 1.0, 10.0],
                    },
                    base,
                )
            }
            "linear-order" => SweepPlan::new(name, SweepKind::ResidualOrderSweep { orders: vec![2, 3] }, RunConfig::linear(0)),
            "quadratic-order" => {
                SweepPlan::new(name, SweepKind::ResidualOrderSweep { orders: vec![3, 4] }, RunConfig::quadratic(0))
            }
            "heat-density" => SweepPlan::new(
                name,
                SweepKind::DensitySweep {
                    deltas: vec![0.1, 0.05, 0.025],
                },
                RunConfig::heat_forward(0),
            ),
            "heat-diffusivity" => SweepPlan::new(
                name,
                SweepKind::DiffusivitySweep {
                    values: vec![0.01, 0.1, 1.0],
                },
                RunConfig::heat_forward(0),
            ),
            "fdm-pinn" | "fdm-only" => SweepPlan::new(
                name,
                SweepKind::FdmPinnCompare {
                    cells: appendix_cells(),
                    fdm_only: name == "fdm-only",
                },
                RunConfig::heat_forward(0),
            ),
            "fdm-pinn-table8" => SweepPlan::new(
                name,
                SweepKind::FdmPinnCompare {
                    cells: [0.005, 0.025, 0.045]
                        .into_iter()
                        .map(|d| FdmCell { delta: 0.05, t_max: 10.0, d })
                        .collect(),
                    fdm_only: false,
                },
                RunConfig::heat_forward(0),
            ),
            other => {
                return Err(Error::config(format!(
                    "unknown preset `{other}`; known presets: {}",
                    Self::preset_names().join(", ")
                )))
            }
        };
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if !self.base.evaluation.iter().any(|r| r.name() == self.metric_region) {
            return Err(Error::config(format!(
                "metric region `{}` is not among the base evaluation regions",
                self.metric_region
            )));
        }
        let heat = self.base.problem.is_heat();
        match &self.kind {
            SweepKind::Replicate => {}
            SweepKind::ArchSearch { neurons, layers, fixed_layers } => {
                if neurons.is_empty() || layers.is_empty() {
                    return Err(Error::config("architecture search needs nonempty neuron and layer lists"));
                }
                if *fixed_layers < 2 || layers.iter().any(|&l| l < 2) || neurons.contains(&0) {
                    return Err(Error::config("layers must be >= 2 and neurons >= 1"));
                }
            }
            SweepKind::LambdaSweep { lambdas } => {
                if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                    return Err(Error::config("lambda sweep needs finite lambdas >= 0"));
                }
            }
            SweepKind::ResidualOrderSweep { orders } => {
                if heat || orders.is_empty() || orders.contains(&0) {
                    return Err(Error::config("residual-order sweep needs a polynomial base and orders >= 1"));
                }
            }
            SweepKind::DensitySweep { deltas } => {
                if !heat || deltas.is_empty() {
                    return Err(Error::config("density sweep needs a heat base and at least one delta"));
                }
            }
            SweepKind::DiffusivitySweep { values } => {
                if !heat || values.is_empty() || values.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::config("diffusivity sweep needs a heat base and D > 0"));
                }
            }
            SweepKind::FdmPinnCompare { cells, .. } => {
                if !heat || cells.is_empty() {
                    return Err(Error::config("FDM comparison needs a heat base and at least one cell"));
                }
                for c in cells {
                    cfl_check(c.d, c.delta, c.delta)?;
                    FdmGrid::new(c.delta, c.delta, c.d, c.t_max)?;
                }
            }
        }
        Ok(())
    }
}

/// A heat configuration on another grid and/or diffusivity.
fn regrid(base: &RunConfig, delta: f64, t_max: f64, d: f64) -> Result<RunConfig> {
    let diffusivity = match base.problem.diffusivity() {
        Some(Diffusivity::Trainable(init)) => Diffusivity::Trainable(init),
        _ => Diffusivity::Fixed(d),
    };
    let mut cfg = RunConfig::heat(diffusivity, d, delta, t_max, base.net.seed)?;
    cfg.problem.lambda = base.problem.lambda;
    cfg.net = base.net;
    cfg.optimizer = base.optimizer;
    cfg.epochs = base.epochs;
    cfg.engine = base.engine;
    cfg.eval_samples = base.eval_samples;
    cfg.data.noise = base.data.noise;
    if let Sampling::HeatGrid { lattice, .. } = base.data.sampling {
        if let Sampling::HeatGrid { lattice: l, .. } = &mut cfg.data.sampling {
            *l = lattice;
        }
    }
    Ok(cfg)
}

fn with_shape(base: &RunConfig, layers: usize, neurons: usize) -> Result<RunConfig> {
    let mut cfg = base.clone();
    cfg.net = MlpConfig::from_total_layers(base.net.input_dim, layers, neurons, base.net.seed)?;
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub status: RunStatus,
    pub gt_mse: BTreeMap<String, f64>,
    pub total_loss: f64,
    /// Model vs exact solution at the training lattice (heat only).
    pub data_point_mse: Option<f64>,
    pub final_d: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Successful runs the statistics are over.
    pub runs: usize,
    pub mean_gt_mse: f64,
    pub std_gt_mse: f64,
    pub mean_total_loss: f64,
    pub std_total_loss: f64,
    pub mean_time_s: f64,
    pub mean_gt_by_region: BTreeMap<String, f64>,
    pub mean_data_point_mse: Option<f64>,
    pub mean_d: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; zero for a single value.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return if xs.is_empty() { f64::NAN } else { 0.0 };
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl Aggregate {
    /// Statistics over the successful runs, using `region` for the headline
    /// ground-truth MSE.
    pub fn from_runs(runs: &[RunSummary], region: &str) -> Self {
        let ok: Vec<&RunSummary> = runs.iter().filter(|r| r.status == RunStatus::Completed).collect();
        let col = |f: &dyn Fn(&RunSummary) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
        let gt = col(&|r| r.gt_mse.get(region).copied());
        let loss = col(&|r| Some(r.total_loss));
        let mut by_region = BTreeMap::new();
        for name in ok.iter().flat_map(|r| r.gt_mse.keys()) {
            by_region
                .entry(name.clone())
                .or_insert_with(|| mean(&col(&|r| r.gt_mse.get(name).copied())));
        }
        let dp = col(&|r| r.data_point_mse);
        let ds = col(&|r| r.final_d);
        Aggregate {
            runs: ok.len(),
            mean_gt_mse: mean(&gt),
            std_gt_mse: std_dev(&gt),
            mean_total_loss: mean(&loss),
            std_total_loss: std_dev(&loss),
            mean_time_s: mean(&col(&|r| Some(r.wall_time_s))),
            mean_gt_by_region: by_region,
            mean_data_point_mse: (!dp.is_empty()).then(|| mean(&dp)),
            mean_d: (!ds.is_empty()).then(|| mean(&ds)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    /// Named coordinates of the cell, e.g. `[("layers", 4), ("neurons", 20)]`.
    pub coords: Vec<(String, f64)>,
    pub layers: usize,
    pub neurons: usize,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
    /// Indices into `runs` of failed runs (excluded from the aggregate).
    pub failed: Vec<usize>,
}

impl CellReport {
    pub fn coord(&self, name: &str) -> Option<f64> {
        self.coords.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    fn score(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::GtMse => self.aggregate.mean_gt_mse,
            Criterion::TotalLoss => self.aggregate.mean_total_loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub cells: Vec<CellReport>,
    /// Index of the winning cell, if any cell had a successful run.
    pub winner: Option<usize>,
}

/// Lowest criterion value; ties go to fewer neurons, then lower mean time.
pub fn select_winner(cells: &[CellReport], criterion: Criterion) -> Option<usize> {
    (0..cells.len())
        .filter(|&i| cells[i].aggregate.runs > 0 && cells[i].score(criterion).is_finite())
        .min_by(|&a, &b| {
            let (ca, cb) = (&cells[a], &cells[b]);
            ca.score(criterion)
                .total_cmp(&cb.score(criterion))
                .then(ca.neurons.cmp(&cb.neurons))
                .then(ca.aggregate.mean_time_s.total_cmp(&cb.aggregate.mean_time_s))
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dx: f64,
    pub dt: f64,
    pub t_max: f64,
    pub d: f64,
    pub cfl_margin: f64,
    pub fdm_mse: f64,
    pub fdm_diverged: bool,
    pub pinn_mse: Option<f64>,
}

/// `u`, `du/dx` and `d²u/dx²` of one trained network along a line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCurve {
    pub label: String,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
}

impl DerivativeCurve {
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "x,du/dx,d2u/dx2")?;
        for ((x, d1), d2) in self.x.iter().zip(&self.du).zip(&self.d2u) {
            writeln!(w, "{x},{d1},{d2}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub toolkit: String,
    pub plan: SweepPlan,
    pub seeds: Vec<u64>,
    pub stages: Vec<Stage>,
    /// Final `(layers, neurons)` of an architecture search.
    pub winner: Option<(usize, usize)>,
    pub comparison: Vec<ComparisonRow>,
    pub derivatives: Vec<DerivativeCurve>,
}

struct Job {
    cell: usize,
    config: RunConfig,
}

struct Outcome {
    summary: RunSummary,
    report: TrainReport,
}

fn execute(config: &RunConfig) -> Result<Outcome> {
    let report = train(config)?;
    let data_point_mse = match (&report.params, config.data.ground_truth) {
        (Some(p), gt @ GroundTruth::HeatSurface { .. }) if report.succeeded() => {
            let ds = config.data.generate()?;
            let pred = taylor::predict(p, &ds.inputs)?;
            let sum: f64 = ds.inputs.chunks(2).zip(&pred).map(|(x, u)| (u - gt.eval(x)).powi(2)).sum();
            Some(sum / pred.len() as f64)
        }
        _ => None,
    };
    Ok(Outcome {
        summary: RunSummary {
            seed: config.net.seed,
            status: report.status.clone(),
            gt_mse: report.gt_mse.clone(),
            total_loss: report.final_loss.total,
            data_point_mse,
            final_d: report.final_d,
            wall_time_s: report.wall_time_s,
        },
        report,
    })
}

struct Runner<'a> {
    plan: &'a SweepPlan,
    seeds: Vec<u64>,
    pool: rayon::ThreadPool,
}

impl Runner<'_> {
    /// Trains every iteration of every cell config and groups outcomes by cell.
    fn run(&self, cells: &[RunConfig]) -> Result<Vec<Vec<Outcome>>> {
        let jobs: Vec<Job> = cells
            .iter()
            .enumerate()
            .flat_map(|(cell, cfg)| {
                self.seeds.iter().map(move |&s| Job {
                    cell,
                    config: cfg.clone().with_seed(s),
                })
            })
            .collect();
        let outcomes: Vec<(usize, Result<Outcome>)> =
            self.pool.install(|| jobs.par_iter().map(|j| (j.cell, execute(&j.config))).collect());
        let mut grouped: Vec<Vec<Outcome>> = (0..cells.len()).map(|_| Vec::new()).collect();
        for (cell, o) in outcomes {
            grouped[cell].push(o?);
        }
        Ok(grouped)
    }

    fn stage(&self, name: &str, cells: &[(Vec<(String, f64)>, RunConfig)]) -> Result<(Stage, Vec<Vec<Outcome>>)> {
        let configs: Vec<RunConfig> = cells.iter().map(|(_, c)| c.clone()).collect();
        let outcomes = self.run(&configs)?;
        let reports = cells
            .iter()
            .zip(&outcomes)
            .map(|((coords, cfg), outs)| {
                let runs: Vec<RunSummary> = outs.iter().map(|o| o.summary.clone()).collect();
                CellReport {
                    coords: coords.clone(),
                    layers: cfg.net.total_layers(),
                    neurons: cfg.net.neurons_per_layer,
                    failed: (0..runs.len()).filter(|&i| runs[i].status != RunStatus::Completed).collect(),
                    aggregate: Aggregate::from_runs(&runs, &self.plan.metric_region),
                    runs,
                }
            })
            .collect::<Vec<_>>();
        let winner = select_winner(&reports, self.plan.criterion);
        Ok((
            Stage {
                name: name.to_string(),
                cells: reports,
                winner,
            },
            outcomes,
        ))
    }
}

fn coords(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn derivative_curve(label: String, report: &TrainReport, region: &Region) -> Result<Option<DerivativeCurve>> {
    let Some(params) = report.params.as_ref().filter(|_| report.succeeded()) else {
        return Ok(None);
    };
    let (lo, hi) = match region {
        Region::Intervals { parts, .. } => (
            parts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
            parts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
        ),
        Region::Rect { .. } => return Ok(None),
    };
    let x = linspace(lo, hi, 300);
    let jet = taylor::forward(params, &x, 0, 2)?;
    Ok(Some(DerivativeCurve {
        label,
        u: jet.coefficient(0).to_vec(),
        du: jet.derivative(1),
        d2u: jet.derivative(2),
        x,
    }))
}

/// Runs every cell of `plan` on a pool of `threads` workers.
pub fn run_plan(plan: &SweepPlan, threads: usize) -> Result<ExperimentReport> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let seeds: Vec<u64> = (0..plan.iterations as u64).map(|i| derive_seed(plan.seed, i)).collect();
    let runner = Runner {
        plan,
        seeds: seeds.clone(),
        pool,
    };
    let base = &plan.base;
    let mut report = ExperimentReport {
        version: EXPERIMENT_VERSION,
        toolkit: crate::VERSION.to_string(),
        plan: plan.clone(),
        seeds,
        stages: Vec::new(),
        winner: None,
        comparison: Vec::new(),
        derivatives: Vec::new(),
    };
    let shape = |cfg: &RunConfig| [("layers", cfg.net.total_layers() as f64), ("neurons", cfg.net.neurons_per_layer as f64)];

    match &plan.kind {
        SweepKind::Replicate => {
            let (stage, _) = runner.stage("replicate", &[(coords(&shape(base)), base.clone())])?;
            report.stages.push(stage);
        }
        SweepKind::ArchSearch {
            fixed_layers,
            neurons,
            layers,
        } => {
            let cells = neurons
                .iter()
                .map(|&n| {
                    let cfg = with_shape(base, *fixed_layers, n)?;
                    Ok((coords(&shape(&cfg)), cfg))
                })
                .collect::<Result<Vec<_>>>()?;
            let (s1, _) = runner.stage("neurons", &cells)?;
            let best_neurons = s1.winner.map(|w| s1.cells[w].neurons);
            report.stages.push(s1);
            if let Some(n) = best_neurons {
                let cells = layers
                    .iter()
                    .map(|&l| {
                        let cfg = with_shape(base, l, n)?;
                        Ok((coords(&shape(&cfg)), cfg))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (s2, _) = runner.stage("layers", &cells)?;
                report.winner = s2.winner.map(|w| (s2.cells[w].layers, s2.cells[w].neurons));
                report.stages.push(s2);
            }
        }
        SweepKind::LambdaSweep { lambdas } => {
            let cells: Vec<_> = lambdas
                .iter()
                .map(|&l| {
                    let mut cfg = base.clone();
                    cfg.problem.lambda = l;
                    (coords(&[("lambda", l)]), cfg)
                })
                .collect();
            let (stage, outcomes) = runner.stage("lambda", &cells)?;
            if let Some(region) = base.evaluation.iter().find(|r| r.name() == plan.metric_region) {
                for (l, outs) in lambdas.iter().zip(&outcomes) {
                    if let Some(c) = outs.first().map(|o| derivative_curve(format!("lambda={l}"), &o.report, region)).transpose()?.flatten() {
                        report.derivatives.push(c);
                    }
                }
            }
            report.stages.push(stage);
        }
        SweepKind::ResidualOrderSweep { orders } => {
            let cells: Vec<_> = orders
                .iter()
                .map(|&o| {
                    let cfg = RunConfig {
                        problem: base.problem.with_residual_order(o),
                        ..base.clone()
                    };
                    (coords(&[("order", o as f64)]), cfg)
                })
                .collect();
            let (stage, _) = runner.stage("order", &cells)?;
            report.stages.push(stage);
        }
        SweepKind::DensitySweep { deltas } => {
            let (t_max, d) = heat_setting(base)?;
            let cells = deltas
                .iter()
                .map(|&delta| Ok((coords(&[("density", delta)]), regrid(base, delta, t_max, d)?)))
                .collect::<Result<Vec<_>>>()?;
            let (stage, _) = runner.stage("density", &cells)?;
            report.stages.push(stage);
        }
        SweepKind::DiffusivitySweep { values } => {
            let (t_max, _) = heat_setting(base)?;
            let delta = heat_delta(base)?;
            let cells = values
                .iter()
                .map(|&d| Ok((coords(&[("D", d)]), regrid(base, delta, t_max, d)?)))
                .collect::<Result<Vec<_>>>()?;
            let (stage, _) = runner.stage("diffusivity", &cells)?;
            report.stages.push(stage);
        }
        SweepKind::FdmPinnCompare { cells, fdm_only } => {
            let pinn = if *fdm_only {
                None
            } else {
                let configs = cells
                    .iter()
                    .map(|c| Ok((coords(&[("dx", c.delta), ("T", c.t_max), ("D", c.d)]), regrid(base, c.delta, c.t_max, c.d)?)))
                    .collect::<Result<Vec<_>>>()?;
                let (stage, _) = runner.stage("pinn", &configs)?;
                Some(stage)
            };
            let rows: Vec<Result<ComparisonRow>> = runner.pool.install(|| {
                cells
                    .par_iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let sol = fdm_solve(&FdmGrid::new(c.delta, c.delta, c.d, c.t_max)?)?;
                        Ok(ComparisonRow {
                            dx: c.delta,
                            dt: c.delta,
                            t_max: c.t_max,
                            d: c.d,
                            cfl_margin: cfl_check(c.d, c.delta, c.delta)?.margin,
                            fdm_mse: fdm_mse(&sol, c.d)?,
                            fdm_diverged: sol.diverged.is_some(),
                            pinn_mse: pinn.as_ref().and_then(|s| s.cells[k].aggregate.mean_data_point_mse),
                        })
                    })
                    .collect()
            });
            report.comparison = rows.into_iter().collect::<Result<_>>()?;
            report.stages.extend(pinn);
        }
    }
    Ok(report)
}

fn heat_setting(base: &RunConfig) -> Result<(f64, f64)> {
    match (base.data.sampling, base.data.ground_truth) {
        (Sampling::HeatGrid { t_max, .. }, GroundTruth::HeatSurface { d }) => Ok((t_max, d)),
        _ => Err(Error::NotHeat),
    }
}

fn heat_delta(base: &RunConfig) -> Result<f64> {
    match base.data.sampling {
        Sampling::HeatGrid { dx, .. } => Ok(dx),
        _ => Err(Error::NotHeat),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// CSV tables keyed by file stem, shaped like the corresponding
    /// published table.
    pub fn tables(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let arch_header = "layers,neurons,mean_gt_mse,std_gt_mse,mean_total_loss,std_total_loss,mean_time_s";
        let arch_row = |c: &CellReport| {
            let a = &c.aggregate;
            format!(
                "{},{},{},{},{},{},{}",
                c.layers, c.neurons, a.mean_gt_mse, a.std_gt_mse, a.mean_total_loss, a.std_total_loss, a.mean_time_s
            )
        };
        match &self.plan.kind {
            SweepKind::Replicate => {
                let Some(cell) = self.stages.first().and_then(|s| s.cells.first()) else {
                    return out;
                };
                let a = &cell.aggregate;
                let mut t = String::new();
                if self.plan.base.problem.is_heat() {
                    t.push_str("metric,average\n");
                    let _ = writeln!(t, "gt_mse,{}", a.mean_gt_mse);
                    let _ = writeln!(t, "total_loss,{}", a.mean_total_loss);
                    let _ = writeln!(t, "time_s,{}", a.mean_time_s);
                    if let Some(d) = a.mean_d {
                        let _ = writeln!(t, "D,{d}");
                    }
                } else {
                    t.push_str("interval,mean_gt_mse\n");
                    for r in &self.plan.base.evaluation {
                        let _ = writeln!(t, "{},{}", r.name(), fmt_opt(a.mean_gt_by_region.get(r.name()).copied()));
                    }
                }
                out.push(("table".into(), t));
            }
            SweepKind::ArchSearch { .. } => {
                for s in &self.stages {
                    let mut t = format!("{arch_header}\n");
                    for c in &s.cells {
                        t.push_str(&arch_row(c));
                        t.push('\n');
                    }
                    out.push((format!("table_{}", s.name), t));
                }
            }
            SweepKind::LambdaSweep { .. } | SweepKind::ResidualOrderSweep { .. } => {
                for s in &self.stages {
                    let regions: Vec<&str> = self.plan.base.evaluation.iter().map(|r| r.name()).collect();
                    let key = s.cells.first().map_or("cell".to_string(), |c| c.coords[0].0.clone());
                    let mut t = key.clone();
                    for r in &regions {
                        let _ = write!(t, ",mean_gt_mse_{r}");
                    }
                    t.push_str(",mean_total_loss\n");
                    for c in &s.cells {
                        let _ = write!(t, "{}", c.coords[0].1);
                        for r in &regions {
                            let _ = write!(t, ",{}", fmt_opt(c.aggregate.mean_gt_by_region.get(*r).copied()));
                        }
                        let _ = writeln!(t, ",{}", c.aggregate.mean_total_loss);
                    }
                    out.push(("table".into(), t));
                }
                for c in &self.derivatives {
                    let mut buf = Vec::new();
                    let _ = c.write_csv(&mut buf);
                    out.push((format!("derivatives_{}", c.label.replace('=', "_")), String::from_utf8_lossy(&buf).into_owned()));
                }
            }
            SweepKind::DensitySweep { .. } => {
                let mut t = String::from("density,mean_gt_mse,mean_total_loss\n");
                for c in self.stages.iter().flat_map(|s| &s.cells) {
                    let _ = writeln!(t, "{},{},{}", c.coords[0].1, c.aggregate.mean_gt_mse, c.aggregate.mean_total_loss);
                }
                out.push(("table".into(), t));
            }
            SweepKind::DiffusivitySweep { .. } => {
                let mut t = String::from("D,mean_gt_mse,mean_total_loss,mean_time_s\n");
                for c in self.stages.iter().flat_map(|s| &s.cells) {
                    let a = &c.aggregate;
                    let _ = writeln!(t, "{},{},{},{}", c.coords[0].1, a.mean_gt_mse, a.mean_total_loss, a.mean_time_s);
                }
                out.push(("table".into(), t));
            }
            SweepKind::FdmPinnCompare { .. } => {
                let mut t = String::from("dx,dt,T,D,cfl_margin,fdm_mse,fdm_diverged,pinn_mse\n");
                for r in &self.comparison {
                    let _ = writeln!(
                        t,
                        "{},{},{},{},{},{},{},{}",
                        r.dx,
                        r.dt,
                        r.t_max,
                        r.d,
                        r.cfl_margin,
                        r.fdm_mse,
                        r.fdm_diverged,
                        fmt_opt(r.pinn_mse)
                    );
                }
                out.push(("table".into(), t));
            }
        }
        out
    }

    /// Writes `report.json` plus every table as `<stem>.csv` into `dir`.
    pub fn emit_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        for (stem, body) in self.tables() {
            let path = dir.join(format!("{stem}.csv"));
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mut cfg: RunConfig) -> RunConfig {
        cfg.epochs = 20;
        cfg.eval_samples = 30;
        cfg.net = MlpConfig::new(cfg.net.input_dim, 1, 3, 0).unwrap();
        cfg
    }

    fn summary(seed: u64, gt: f64, loss: f64, ok: bool) -> RunSummary {
        RunSummary {
            seed,
            status: if ok {
                RunStatus::Completed
            } else {
                RunStatus::Failed {
                    epoch: 3,
                    reason: "nan".into(),
                }
            },
            gt_mse: [("overall".to_string(), gt)].into(),
            total_loss: loss,
            data_point_mse: None,
            final_d: None,
            wall_time_s: 1.0,
        }
    }

    #[test]
    fn aggregate_statistics() {
        let runs = vec![
            summary(0, 1.0, 2.0, true),
            summary(1, 3.0, 4.0, true),
            summary(2, 100.0, 100.0, false),
        ];
        let a = Aggregate::from_runs(&runs, "overall");
        assert_eq!(a.runs, 2);
        assert_eq!(a.mean_gt_mse, 2.0);
        assert!((a.std_gt_mse - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.mean_total_loss, 3.0);
        assert_eq!(Aggregate::from_runs(&runs[..1], "overall").std_gt_mse, 0.0);
    }

    fn cell(neurons: usize, gt: f64, time: f64) -> CellReport {
        let mut runs = vec![summary(0, gt, gt, true)];
        runs[0].wall_time_s = time;
        CellReport {
            coords: Vec::new(),
            layers: 4,
            neurons,
            aggregate: Aggregate::from_runs(&runs, "overall"),
            runs,
            failed: Vec::new(),
        }
    }

    #[test]
    fn winner_tie_breaks() {
        let cells = vec![cell(40, 1.0, 1.0), cell(20, 1.0, 5.0), cell(20, 1.0, 2.0), cell(5, 2.0, 0.1)];
        assert_eq!(select_winner(&cells, Criterion::GtMse), Some(2));
        assert_eq!(select_winner(&cells[..1], Criterion::GtMse), Some(0));
        let mut failed = cell(5, 0.1, 0.1);
        failed.aggregate.runs = 0;
        assert_eq!(select_winner(&[failed], Criterion::GtMse), None);
    }

    #[test]
    fn presets_validate() {
        for name in SweepPlan::preset_names() {
            SweepPlan::preset(name).unwrap().validate().unwrap();
        }
        assert!(SweepPlan::preset("nope").is_err());
        let heat = SweepPlan::preset("fdm-pinn").unwrap();
        match heat.kind {
            SweepKind::FdmPinnCompare { cells, .. } => assert_eq!(cells.len(), 27),
            _ => unreachable!(),
        }
    }

    #[test]
    fn arch_search_runs_both_stages() {
        let plan = SweepPlan {
            iterations: 2,
            ..SweepPlan::new(
                "t",
                SweepKind::ArchSearch {
                    fixed_layers: 3,
                    neurons: vec![2, 3],
                    layers: vec![2, 3],
                },
                tiny(RunConfig::linear(0)),
            )
        };
        let r = run_plan(&plan, 1).unwrap();
        assert_eq!(r.stages.len(), 2);
        let (l, n) = r.winner.unwrap();
        let s1 = &r.stages[0];
        assert_eq!(n, s1.cells[s1.winner.unwrap()].neurons);
        assert!(r.stages[1].cells.iter().all(|c| c.neurons == n));
        assert!([2, 3].contains(&l));
        let again = run_plan(&plan, 1).unwrap();
        assert_eq!(again.winner, r.winner);
        let tables = r.tables();
        assert_eq!(tables.len(), 2);
        assert!(tables[0].1.starts_with("layers,neurons,mean_gt_mse,std_gt_mse,mean_total_loss,std_total_loss,mean_time_s\n"));
        assert_eq!(tables[0].1.lines().count(), 3);
    }

    #[test]
    fn aggregates_recompute_from_runs() {
        let plan = SweepPlan {
            iterations: 3,
            ..SweepPlan::new(
                "t",
                SweepKind::LambdaSweep {
                    lambdas: vec![0.0, 1.0],
                },
                tiny(RunConfig::linear(0)),
            )
        };
        let r = run_plan(&plan, 2).unwrap();
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        for c in &back.stages[0].cells {
            let a = Aggregate::from_runs(&c.runs, "overall");
            assert!((a.mean_gt_mse - c.aggregate.mean_gt_mse).abs() <= 1e-12 * a.mean_gt_mse);
            assert!((a.std_total_loss - c.aggregate.std_total_loss).abs() <= 1e-12 * (1.0 + a.std_total_loss));
        }
        assert_eq!(r.derivatives.len(), 2);
        let tables = r.tables();
        let d = tables.iter().find(|(k, _)| k == "derivatives_lambda_1").unwrap();
        assert!(d.1.starts_with("x,du/dx,d2u/dx2\n"));
        assert_eq!(d.1.lines().count(), 301);
    }

    #[test]
    fn comparison_margins_match_cfl() {
        let plan = SweepPlan::preset("fdm-only").unwrap();
        let r = run_plan(&plan, 1).unwrap();
        assert_eq!(r.comparison.len(), 27);
        for row in &r.comparison {
            let c = cfl_check(row.d, row.dx, row.dt).unwrap();
            assert_eq!(c.margin, row.cfl_margin);
            assert!(row.pinn_mse.is_none());
        }
        let t = &r.tables()[0].1;
        assert!(t.starts_with("dx,dt,T,D,cfl_margin,fdm_mse,fdm_diverged,pinn_mse\n"));
        assert_eq!(t.lines().count(), 28);
    }

    #[test]
    fn emit_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = tiny(RunConfig::heat_forward(0));
        base.epochs = 2;
        let plan = SweepPlan {
            iterations: 1,
            ..SweepPlan::new("t", SweepKind::Replicate, base)
        };
        let r = run_plan(&plan, 1).unwrap();
        r.emit_dir(dir.path()).unwrap();
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(json.contains(crate::VERSION));
        let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
        assert!(table.starts_with("metric,average\ngt_mse,"));
        assert!(r.stages[0].cells[0].runs[0].data_point_mse.is_some());
    }
}
