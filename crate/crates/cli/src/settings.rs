//! Option merging: command line over config file over built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use pinnkit::harness::{Criterion, SweepKind, SweepPlan};
use pinnkit::nn::MlpConfig;
use pinnkit::problems::{Diffusivity, Engine};
use pinnkit::trainer::RunConfig;
use serde::Deserialize;

use crate::CliError;

/// Every option may also be set as a top-level key of the `--config` file,
/// with dashes replaced by underscores.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    /// Base seed for data noise, weight init and sweep iterations
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Run preset (linear, quadratic, heat, inverse) or sweep preset name
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Total layer count (hidden layers + output layer)
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    pub neurons: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Residual weight λ
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Derivative order of the polynomial residual
    #[arg(long, global = true)]
    pub residual_order: Option<usize>,
    /// Variance of the Gaussian data noise
    #[arg(long, global = true)]
    pub noise_variance: Option<f64>,
    /// Thermal diffusivity used to generate heat data (and to solve, if fixed)
    #[arg(long, global = true)]
    pub diffusivity: Option<f64>,
    /// Starting value of a learned diffusivity
    #[arg(long, global = true)]
    pub d_init: Option<f64>,
    /// Heat grid step, Δx = Δt
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub dx: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Final time of the heat domain
    #[arg(long, global = true)]
    pub t_max: Option<f64>,
    /// Differentiation engine: batched or tape
    #[arg(long, global = true)]
    pub engine: Option<String>,
    #[arg(long, global = true)]
    pub eval_samples: Option<usize>,

    /// Runs per sweep cell
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Winner criterion: gt_mse or total_loss
    #[arg(long, global = true)]
    pub criterion: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub neuron_list: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub layer_list: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub diffusivities: Option<Vec<f64>>,
    /// Skip PINN training in the FDM comparison
    #[arg(long, global = true)]
    pub fdm_only: Option<bool>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr; $($f:ident),*) => {
        Knobs { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Knobs {
    pub fn load(path: &Path) -> Result<Knobs, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Knobs) -> Knobs {
        overlay!(self, lower; seed, out, threads, preset, epochs, layers, neurons, lr, lambda,
            residual_order, noise_variance, diffusivity, d_init, delta, dx, dt, t_max, engine,
            eval_samples, iterations, criterion, neuron_list, layer_list, lambdas, orders, deltas,
            diffusivities, fdm_only)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("pinnkit-out"))
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(1)
    }

    fn engine(&self) -> Result<Option<Engine>, CliError> {
        match self.engine.as_deref() {
            None => Ok(None),
            Some("batched") => Ok(Some(Engine::Batched)),
            Some("tape") => Ok(Some(Engine::Tape)),
            Some(other) => Err(CliError::Config(format!("unknown engine `{other}` (batched|tape)"))),
        }
    }

    /// A single-run configuration: preset, then overrides.
    pub fn run_config(&self, default_preset: &str) -> Result<RunConfig, CliError> {
        let preset = self.preset.as_deref().unwrap_or(default_preset);
        let seed = self.seed.unwrap_or(0);
        let heat = |diffusivity: Diffusivity| -> Result<RunConfig, CliError> {
            let d = self.diffusivity.unwrap_or(0.1);
            let diffusivity = match diffusivity {
                Diffusivity::Fixed(_) => Diffusivity::Fixed(d),
                Diffusivity::Trainable(init) => Diffusivity::Trainable(self.d_init.unwrap_or(init)),
            };
            Ok(RunConfig::heat(diffusivity, d, self.delta.unwrap_or(0.1), self.t_max.unwrap_or(1.0), seed)?)
        };
        let mut cfg = match preset {
            "linear" => RunConfig::linear(seed),
            "quadratic" => RunConfig::quadratic(seed),
            "heat" => heat(Diffusivity::Fixed(0.1))?,
            "inverse" => heat(Diffusivity::Trainable(0.05))?,
            other => {
                return Err(CliError::Config(format!(
                    "unknown run preset `{other}` (linear|quadratic|heat|inverse)"
                )))
            }
        };
        if !cfg.problem.is_heat() && (self.diffusivity.is_some() || self.delta.is_some() || self.t_max.is_some()) {
            return Err(CliError::Config("diffusivity, delta and t-max apply to heat presets only".into()));
        }
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if self.layers.is_some() || self.neurons.is_some() {
            cfg.net = MlpConfig::from_total_layers(
                cfg.net.input_dim,
                self.layers.unwrap_or(cfg.net.total_layers()),
                self.neurons.unwrap_or(cfg.net.neurons_per_layer),
                cfg.net.seed,
            )?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.optimizer.lr = lr;
        }
        if let Some(l) = self.lambda {
            cfg.problem.lambda = l;
        }
        if let Some(o) = self.residual_order {
            if cfg.problem.is_heat() {
                return Err(CliError::Config("residual-order applies to polynomial problems only".into()));
            }
            cfg.problem = cfg.problem.with_residual_order(o);
        }
        if let Some(v) = self.noise_variance {
            cfg.data.noise.variance = v;
        }
        if let Some(e) = self.engine()? {
            cfg.engine = e;
        }
        if let Some(n) = self.eval_samples {
            cfg.eval_samples = n;
        }
        cfg.validate()?;
        Ok(())
    }

    /// A sweep plan: preset, then overrides. `family` restricts which kinds
    /// of preset the calling subcommand accepts.
    pub fn plan(&self, default_preset: &str, family: fn(&SweepKind) -> bool) -> Result<SweepPlan, CliError> {
        let name = self.preset.as_deref().unwrap_or(default_preset);
        let mut plan = SweepPlan::preset(name)?;
        if !family(&plan.kind) {
            return Err(CliError::Config(format!("preset `{name}` does not belong to this subcommand")));
        }
        if let Some(s) = self.seed {
            plan.seed = s;
        }
        if let Some(i) = self.iterations {
            plan.iterations = i;
        }
        plan.criterion = match self.criterion.as_deref() {
            None => plan.criterion,
            Some("gt_mse") => Criterion::GtMse,
            Some("total_loss") => Criterion::TotalLoss,
            Some(other) => return Err(CliError::Config(format!("unknown criterion `{other}` (gt_mse|total_loss)"))),
        };
        self.apply(&mut plan.base)?;
        match &mut plan.kind {
            SweepKind::ArchSearch { neurons, layers, .. } => {
                replace(neurons, &self.neuron_list);
                replace(layers, &self.layer_list);
            }
            SweepKind::LambdaSweep { lambdas } => replace(lambdas, &self.lambdas),
            SweepKind::ResidualOrderSweep { orders } => replace(orders, &self.orders),
            SweepKind::DensitySweep { deltas } => replace(deltas, &self.deltas),
            SweepKind::DiffusivitySweep { values } => replace(values, &self.diffusivities),
            SweepKind::FdmPinnCompare { fdm_only, .. } => {
                if let Some(f) = self.fdm_only {
                    *fdm_only = f;
                }
            }
            SweepKind::Replicate => {}
        }
        plan.validate()?;
        Ok(plan)
    }
}

fn replace<T: Clone>(slot: &mut Vec<T>, with: &Option<Vec<T>>) {
    if let Some(v) = with {
        slot.clone_from(v);
    }
}
