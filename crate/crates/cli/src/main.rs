use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinnkit::fdm::{cfl_check, fdm_mse, fdm_solve, FdmGrid};
use pinnkit::harness::{run_plan, ExperimentReport, SweepKind};
use pinnkit::trainer::{train, train_inverse_heat, RunStatus, TrainReport};

mod settings;

use settings::Knobs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] pinnkit::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("run failed: {0}")]
    RunFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use pinnkit::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::RunFailed(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Io { .. } => 3,
                E::Config(_) | E::NotHeat | E::OutOfDomain(_) | E::Parse { .. } | E::Serde(_) => 1,
                E::ZeroOrder(_) | E::DimensionMismatch { .. } | E::LengthMismatch { .. } | E::EmptyDataset => 1,
                _ => 2,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "pinnkit", version, about = "Physics-informed neural networks and finite differences")]
struct Cli {
    /// TOML file with defaults for any option below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a training dataset (CSV plus provenance sidecar)
    GenData,
    /// Train one network (presets: linear, quadratic, heat)
    Train,
    /// Train a heat network with a learned diffusivity
    TrainInverse,
    /// Two-stage layer/neuron search
    ArchSearch,
    /// Residual-weight ablation with derivative curves
    LambdaSweep,
    /// Polynomial residual with different derivative orders
    ResidualOrderSweep,
    /// Heat grid density sweep
    DensitySweep,
    /// Heat diffusivity sweep
    DiffusivitySweep,
    /// Any sweep preset by name (`--preset`; `sweep --list` prints them)
    Sweep {
        #[arg(long)]
        list: bool,
    },
    /// Explicit finite-difference solve of the heat equation
    Fdm,
    /// Finite differences against PINNs over a (Δ, T, D) lattice
    CompareFdmPinn,
    /// Summarize a report JSON; with --out, re-emit its tables
    Report { path: PathBuf },
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn finish_run(report: TrainReport, out: &Path) -> Result<(), CliError> {
    report.save_json(out.join("report.json"))?;
    report.save_curve_csv(out.join("curve.csv"))?;
    for (region, mse) in &report.gt_mse {
        println!("gt_mse[{region}] = {mse:e}");
    }
    println!("final_loss = {:e}", report.final_loss.total);
    if let Some(d) = report.final_d {
        println!("D = {d}");
    }
    match report.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Failed { epoch, reason } => Err(CliError::RunFailed(format!("epoch {epoch}: {reason}"))),
    }
}

fn sweep(knobs: &Knobs, default: &str, family: fn(&SweepKind) -> bool) -> Result<(), CliError> {
    let plan = knobs.plan(default, family)?;
    let report = run_plan(&plan, knobs.threads())?;
    let out = knobs.out_dir();
    report.emit_dir(&out)?;
    summarize(&report);
    println!("wrote {}", out.display());
    Ok(())
}

fn summarize(report: &ExperimentReport) {
    for stage in &report.stages {
        println!("[{}]", stage.name);
        for (i, cell) in stage.cells.iter().enumerate() {
            let coords: Vec<String> = cell.coords.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let a = &cell.aggregate;
            println!(
                "{}{}: gt_mse {:e} ± {:e}, loss {:e}, {} ok, {} failed",
                if stage.winner == Some(i) { "* " } else { "  " },
                coords.join(" "),
                a.mean_gt_mse,
                a.std_gt_mse,
                a.mean_total_loss,
                a.runs,
                cell.failed.len()
            );
        }
    }
    if let Some((l, n)) = report.winner {
        println!("winner: {l} layers, {n} neurons");
    }
    for r in &report.comparison {
        println!(
            "dx={} T={} D={}: fdm {:e}{} pinn {}",
            r.dx,
            r.t_max,
            r.d,
            r.fdm_mse,
            if r.fdm_diverged { " (diverged)" } else { "" },
            r.pinn_mse.map_or("-".into(), |m| format!("{m:e}"))
        );
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => Knobs::load(p)?,
        None => Knobs::default(),
    };
    let knobs = cli.knobs.over(file);
    let out = knobs.out_dir();
    match cli.command {
        Command::GenData => {
            let cfg = knobs.run_config("linear")?;
            let ds = cfg.data.generate()?;
            create_dir(&out)?;
            let path = out.join("data.csv");
            ds.save_csv(&path)?;
            println!("wrote {} points to {}", ds.len(), path.display());
        }
        Command::Train => {
            let mut cfg = knobs.run_config("linear")?;
            create_dir(&out)?;
            cfg.checkpoint = Some(out.join("checkpoint.txt"));
            finish_run(train(&cfg)?, &out)?;
        }
        Command::TrainInverse => {
            let mut cfg = knobs.run_config("inverse")?;
            create_dir(&out)?;
            cfg.checkpoint = Some(out.join("checkpoint.txt"));
            finish_run(train_inverse_heat(&cfg)?, &out)?;
        }
        Command::ArchSearch => sweep(&knobs, "linear-arch", |k| matches!(k, SweepKind::ArchSearch { .. }))?,
        Command::LambdaSweep => sweep(&knobs, "linear-lambda", |k| matches!(k, SweepKind::LambdaSweep { .. }))?,
        Command::ResidualOrderSweep => sweep(&knobs, "linear-order", |k| {
            matches!(k, SweepKind::ResidualOrderSweep { .. })
        })?,
        Command::DensitySweep => sweep(&knobs, "heat-density", |k| matches!(k, SweepKind::DensitySweep { .. }))?,
        Command::DiffusivitySweep => sweep(&knobs, "heat-diffusivity", |k| {
            matches!(k, SweepKind::DiffusivitySweep { .. })
        })?,
        Command::CompareFdmPinn => sweep(&knobs, "fdm-pinn", |k| matches!(k, SweepKind::FdmPinnCompare { .. }))?,
        Command::Sweep { list: true } => {
            for name in pinnkit::harness::SweepPlan::preset_names() {
                println!("{name}");
            }
        }
        Command::Sweep { list: false } => {
            if knobs.preset.is_none() {
                return Err(CliError::Config("sweep needs --preset (see `sweep --list`)".into()));
            }
            sweep(&knobs, "", |_| true)?
        }
        Command::Fdm => {
            let delta = knobs.delta.unwrap_or(0.1);
            let (dx, dt) = (knobs.dx.unwrap_or(delta), knobs.dt.unwrap_or(delta));
            let d = knobs.diffusivity.unwrap_or(0.1);
            let grid = FdmGrid::new(dx, dt, d, knobs.t_max.unwrap_or(1.0))?;
            let cfl = cfl_check(d, dx, dt)?;
            let sol = fdm_solve(&grid)?;
            let mse = fdm_mse(&sol, d)?;
            create_dir(&out)?;
            sol.save_csv(out.join("surface.csv"))?;
            let summary = format!(
                "{{\n  \"dx\": {dx},\n  \"dt\": {dt},\n  \"D\": {d},\n  \"T\": {},\n  \"cfl_satisfied\": {},\n  \"cfl_margin\": {:e},\n  \"fdm_mse\": {mse:e},\n  \"diverged\": {}\n}}\n",
                grid.t_max,
                cfl.satisfied,
                cfl.margin,
                sol.diverged.is_some()
            );
            write(&out.join("fdm.json"), &summary)?;
            print!("{summary}");
        }
        Command::Report { path } => {
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            if let Ok(report) = ExperimentReport::from_json(&text) {
                summarize(&report);
                if knobs.out.is_some() {
                    create_dir(&out)?;
                    for (stem, body) in report.tables() {
                        write(&out.join(format!("{stem}.csv")), &body)?;
                    }
                }
            } else {
                let report = TrainReport::from_json(&text)
                    .map_err(|e| CliError::Config(format!("{}: not a report ({e})", path.display())))?;
                if knobs.out.is_some() {
                    create_dir(&out)?;
                    report.save_curve_csv(out.join("curve.csv"))?;
                }
                for (region, mse) in &report.gt_mse {
                    println!("gt_mse[{region}] = {mse:e}");
                }
                println!("final_loss = {:e}", report.final_loss.total);
                println!("status = {:?}", report.status);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
