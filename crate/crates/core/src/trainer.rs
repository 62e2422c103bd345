//! One training run: full-batch Adam on the composite loss, per-epoch loss
//! records, the diffusivity trajectory for inverse runs and ground-truth
//! errors over evaluation regions.
//!
//! ```no_run
//! use pinnkit::trainer::{train, RunConfig};
//!
//! let report = train(&RunConfig::linear(7))?;
//! println!("final loss {:e}", report.final_loss.total);
//! println!("MSE on [-1, 2]: {:e}", report.gt_mse["overall"]);
//! # Ok::<(), pinnkit::Error>(())
//! ```

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::datagen::{linspace, GroundTruth, LatticeMode, NoiseSpec, Provenance, Sampling};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, MlpConfig, ParamSet};
use crate::optimizer::{AdamHyper, AdamState};
use crate::problems::{Diffusivity, Engine, LossTerms, Problem, ProblemSpec};
use crate::taylor;

pub const REPORT_VERSION: u32 = 1;

/// Where a trained model is compared with its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    /// Union of 1-D intervals; samples are split in proportion to length.
    Intervals { name: String, parts: Vec<[f64; 2]> },
    /// Rectangle in `(x, t)`, sampled on a square-ish lattice.
    Rect { name: String, x: [f64; 2], t: [f64; 2] },
}

impl Region {
    pub fn interval(name: &str, lo: f64, hi: f64) -> Self {
        Region::Intervals {
            name: name.to_string(),
            parts: vec![[lo, hi]],
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Region::Intervals { name, .. } | Region::Rect { name, .. } => name,
        }
    }

    /// The three regions of the polynomial tables: inside the data range,
    /// outside it, and both.
    pub fn polynomial_defaults() -> Vec<Region> {
        vec![
            Region::interval("inside", 0.0, 1.0),
            Region::Intervals {
                name: "outside".into(),
                parts: vec![[-1.0, 0.0], [1.0, 2.0]],
            },
            Region::interval("overall", -1.0, 2.0),
        ]
    }

    pub fn heat_domain(t_max: f64) -> Region {
        Region::Rect {
            name: "domain".into(),
            x: [0.0, 1.0],
            t: [0.0, t_max],
        }
    }

    /// Evenly spaced sample points, flat.
    pub fn samples(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::config("evaluation needs at least one sample"));
        }
        match self {
            Region::Intervals { parts, .. } => {
                if parts.is_empty() || parts.iter().any(|[lo, hi]| !(lo < hi)) {
                    return Err(Error::config(format!("region `{}` needs intervals with lo < hi", self.name())));
                }
                let total: f64 = parts.iter().map(|[lo, hi]| hi - lo).sum();
                let mut out = Vec::with_capacity(n);
                let mut used = 0;
                let mut covered = 0.0;
                for (k, [lo, hi]) in parts.iter().enumerate() {
                    covered += hi - lo;
                    let upto = if k + 1 == parts.len() {
                        n
                    } else {
                        ((n as f64) * covered / total).round() as usize
                    };
                    out.extend(linspace(*lo, *hi, upto.saturating_sub(used)));
                    used = upto.max(used);
                }
                Ok(out)
            }
            Region::Rect { x, t, .. } => {
                if !(x[0] < x[1] && t[0] < t[1]) {
                    return Err(Error::config(format!("region `{}` needs lo < hi on both axes", self.name())));
                }
                let per_axis = ((n as f64).sqrt().ceil() as usize).max(2);
                let mut out = Vec::with_capacity(2 * per_axis * per_axis);
                for tv in linspace(t[0], t[1], per_axis) {
                    for xv in linspace(x[0], x[1], per_axis) {
                        out.extend([xv, tv]);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Mean squared difference between `predict` and `gt` over `n` samples of
/// `region`. Heat regions must lie inside `[0, 1] × [0, ∞)`.
pub fn ground_truth_mse<P>(predict: P, gt: &GroundTruth, region: &Region, n: usize) -> Result<f64>
where
    P: Fn(&[f64]) -> Result<Vec<f64>>,
{
    match (gt, region) {
        (GroundTruth::HeatSurface { .. }, Region::Rect { x, t, .. }) => {
            if x[0] < 0.0 || x[1] > 1.0 || t[0] < 0.0 {
                return Err(Error::OutOfDomain(format!(
                    "heat solution is defined on x in [0, 1], t >= 0; got x in [{}, {}], t in [{}, {}]",
                    x[0], x[1], t[0], t[1]
                )));
            }
        }
        (GroundTruth::HeatSurface { .. }, Region::Intervals { .. }) | (_, Region::Rect { .. }) => {
            return Err(Error::DimensionMismatch {
                expected: gt.input_dim(),
                found: 3 - gt.input_dim(),
            })
        }
        _ => {}
    }
    let pts = region.samples(n)?;
    let pred = predict(&pts)?;
    let dim = gt.input_dim();
    let sum: f64 = pts
        .chunks(dim)
        .zip(&pred)
        .map(|(p, u)| {
            let e = u - gt.eval(p);
            e * e
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub net: MlpConfig,
    #[serde(default)]
    pub optimizer: AdamHyper,
    pub epochs: usize,
    /// How the training data is generated (ground truth, noise and seed).
    pub data: Provenance,
    pub evaluation: Vec<Region>,
    pub eval_samples: usize,
    #[serde(default)]
    pub engine: Engine,
    /// Where to write the final checkpoint, if anywhere.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    fn polynomial(gt: GroundTruth, degree: usize, layers: usize, neurons: usize, seed: u64) -> Self {
        RunConfig {
            problem: ProblemSpec::polynomial(degree),
            net: MlpConfig::from_total_layers(1, layers, neurons, seed).expect("preset shape is valid"),
            optimizer: AdamHyper::default(),
            epochs: 5000,
            data: Provenance {
                ground_truth: gt,
                noise: NoiseSpec::gaussian(0.01, seed),
                sampling: Sampling::Interval { lo: 0.0, hi: 1.0, count: 10 },
            },
            evaluation: Region::polynomial_defaults(),
            eval_samples: 300,
            engine: Engine::Batched,
            checkpoint: None,
        }
    }

    /// `x + 1` from 10 noisy points on `[0, 1]`, 3 layers of 20 neurons.
    pub fn linear(seed: u64) -> Self {
        Self::polynomial(GroundTruth::Line { a: 1.0, b: 1.0 }, 1, 3, 20, seed)
    }

    /// `x² + x + 1` from 10 noisy points on `[0, 1]`, 5 layers of 30 neurons.
    pub fn quadratic(seed: u64) -> Self {
        Self::polynomial(GroundTruth::Parabola { a: 1.0, b: 1.0, c: 1.0 }, 2, 5, 30, seed)
    }

    /// Heat equation with `D` given, noise-free lattice with steps `delta`
    /// up to time `t_max`, 5 layers of 80 neurons.
    pub fn heat(diffusivity: Diffusivity, d_true: f64, delta: f64, t_max: f64, seed: u64) -> Result<Self> {
        Ok(RunConfig {
            problem: ProblemSpec::heat(diffusivity, delta, delta, t_max)?,
            net: MlpConfig::from_total_layers(2, 5, 80, seed)?,
            optimizer: AdamHyper::default(),
            epochs: 5000,
            data: Provenance {
                ground_truth: GroundTruth::HeatSurface { d: d_true },
                noise: NoiseSpec {
                    seed,
                    ..NoiseSpec::none()
                },
                sampling: Sampling::HeatGrid {
                    dx: delta,
                    dt: delta,
                    t_max,
                    lattice: LatticeMode::Inclusive,
                },
            },
            evaluation: vec![Region::heat_domain(t_max)],
            eval_samples: 300,
            engine: Engine::Batched,
            checkpoint: None,
        })
    }

    /// Forward heat problem: `D = 0.1`, `Δx = Δt = 0.1`, `T = 1`.
    pub fn heat_forward(seed: u64) -> Self {
        Self::heat(Diffusivity::Fixed(0.1), 0.1, 0.1, 1.0, seed).expect("preset grid is valid")
    }

    /// Inverse heat problem: data from `D = 0.1`, `D` learned from 0.05.
    pub fn heat_inverse(seed: u64) -> Self {
        Self::heat(Diffusivity::Trainable(0.05), 0.1, 0.1, 1.0, seed).expect("preset grid is valid")
    }

    /// Reseeds data noise and weight initialization together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.net.seed = seed;
        self.data.noise.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.net.validate()?;
        self.optimizer.validate()?;
        self.data.noise.validate()?;
        if self.net.input_dim != self.problem.input_dim() || self.data.ground_truth.input_dim() != self.problem.input_dim() {
            return Err(Error::config("network, data and problem disagree on input dimension"));
        }
        if self.eval_samples == 0 {
            return Err(Error::config("eval_samples must be >= 1"));
        }
        if let Sampling::HeatGrid { t_max, .. } = self.data.sampling {
            for r in &self.evaluation {
                if let Region::Rect { x, t, .. } = r {
                    if x[0] < 0.0 || x[1] > 1.0 || t[0] < 0.0 || t[1] > t_max * (1.0 + 1e-12) {
                        return Err(Error::OutOfDomain(format!(
                            "region `{}` leaves [0, 1] x [0, {t_max}]",
                            r.name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Training stopped at `epoch` (1-based) because of `reason`.
    Failed { epoch: usize, reason: String },
}

/// Loss components before the update of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub total: f64,
    pub data: f64,
    pub residual: f64,
    pub boundary: Option<f64>,
    /// Diffusivity after this epoch's update (inverse runs).
    pub d: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub version: u32,
    pub toolkit: String,
    pub config: RunConfig,
    pub status: RunStatus,
    pub curve: Vec<CurvePoint>,
    /// Loss of the trained parameters (after the last update).
    pub final_loss: LossTerms<f64>,
    /// Ground-truth MSE per evaluation region name.
    pub gt_mse: BTreeMap<String, f64>,
    pub final_d: Option<f64>,
    pub wall_time_s: f64,
    pub checkpoint: Option<PathBuf>,
    #[serde(skip)]
    pub params: Option<ParamSet>,
}

impl TrainReport {
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn d_trajectory(&self) -> Vec<f64> {
        self.curve.iter().filter_map(|c| c.d).collect()
    }

    /// The report with run-to-run noise (wall time) removed.
    pub fn without_timing(&self) -> TrainReport {
        TrainReport {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// `epoch,total,data,residual[,D]`.
    pub fn write_curve_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        let inverse = self.curve.iter().any(|c| c.d.is_some());
        writeln!(w, "epoch,total,data,residual{}", if inverse { ",D" } else { "" })?;
        for c in &self.curve {
            write!(w, "{},{},{},{}", c.epoch, c.total, c.data, c.residual)?;
            if let Some(d) = c.d {
                write!(w, ",{d}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_curve_csv(&mut f).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }
}

fn terms_finite(t: &LossTerms<f64>) -> bool {
    t.total.is_finite() && t.data.is_finite() && t.residual.is_finite() && t.boundary.is_none_or(f64::is_finite)
}

pub fn train(config: &RunConfig) -> Result<TrainReport> {
    config.validate()?;
    let start = Instant::now();
    let problem = Problem::new(config.problem)?;
    let dataset = config.data.generate()?;
    let mut params = ParamSet::init(config.net)?;
    let diffusivity = config.problem.diffusivity();
    let trainable = diffusivity.is_some_and(|d| d.is_trainable());
    let mut d = diffusivity.map_or(0.0, |d| d.value());

    let n = params.len();
    let mut adam = AdamState::new(n + usize::from(trainable), config.optimizer);
    let mut theta: Vec<f64> = params.values().to_vec();
    if trainable {
        theta.push(d);
    }
    let mut tape = Tape::new();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut status = RunStatus::Completed;
    let mut grad = Vec::with_capacity(theta.len());

    for epoch in 1..=config.epochs {
        let eval = match problem.evaluate(config.engine, &mut tape, &params, d, &dataset) {
            Ok(e) => e,
            Err(Error::NonFinite { node, value }) => {
                status = RunStatus::Failed {
                    epoch,
                    reason: format!("non-finite value {value} at tape node {node}"),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        if !terms_finite(&eval.terms) {
            status = RunStatus::Failed {
                epoch,
                reason: format!("non-finite loss {:?}", eval.terms),
            };
            break;
        }
        grad.clear();
        grad.extend_from_slice(&eval.grad);
        if trainable {
            grad.push(eval.grad_d);
        }
        if let Err(e) = adam.step(&mut theta, &grad) {
            status = RunStatus::Failed {
                epoch,
                reason: e.to_string(),
            };
            break;
        }
        params.values_mut().copy_from_slice(&theta[..n]);
        if trainable {
            d = theta[n];
        }
        curve.push(CurvePoint {
            epoch,
            total: eval.terms.total,
            data: eval.terms.data,
            residual: eval.terms.residual,
            boundary: eval.terms.boundary,
            d: trainable.then_some(d),
        });
    }

    let final_loss = problem.evaluate_batched(&params, d, &dataset)?.terms;
    if status == RunStatus::Completed && !terms_finite(&final_loss) {
        status = RunStatus::Failed {
            epoch: config.epochs,
            reason: format!("non-finite final loss {final_loss:?}"),
        };
    }
    let mut gt_mse = BTreeMap::new();
    if status == RunStatus::Completed {
        for region in &config.evaluation {
            let mse = ground_truth_mse(|p| taylor::predict(&params, p), &config.data.ground_truth, region, config.eval_samples)?;
            gt_mse.insert(region.name().to_string(), mse);
        }
    }
    let checkpoint = match &config.checkpoint {
        Some(path) => {
            let mut ck = Checkpoint::new(params.clone());
            if diffusivity.is_some() {
                ck = ck.with_extra("D", d);
            }
            ck.save(path)?;
            Some(path.clone())
        }
        None => None,
    };
    Ok(TrainReport {
        version: REPORT_VERSION,
        toolkit: crate::VERSION.to_string(),
        config: config.clone(),
        status,
        curve,
        final_loss,
        gt_mse,
        final_d: diffusivity.map(|_| d),
        wall_time_s: start.elapsed().as_secs_f64(),
        checkpoint,
        params: Some(params),
    })
}

/// [`train`] for a heat problem whose diffusivity is learned.
pub fn train_inverse_heat(config: &RunConfig) -> Result<TrainReport> {
    match config.problem.diffusivity() {
        Some(Diffusivity::Trainable(_)) => train(config),
        Some(Diffusivity::Fixed(_)) => Err(Error::config("inverse runs need a trainable diffusivity")),
        None => Err(Error::NotHeat),
    }
}
