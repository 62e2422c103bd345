//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits nonzero if any failed. Pass criterion numbers as
//! arguments to run a subset: `cargo test --test acceptance -- 1 4 5`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use pinnkit::autodiff::{Tape, Var};
use pinnkit::fdm::{cfl_check, fdm_mse, fdm_solve, FdmGrid, SATURATION};
use pinnkit::nn::Checkpoint;
use pinnkit::problems::{residual_heat, Analytic, Diffusivity};
use pinnkit::trainer::{train, train_inverse_heat, RunConfig, TrainReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DAG_COUNT: usize = 1000;
const DAG_MAX_DEPTH: usize = 12;
const DAG_REL_TOL: f64 = 1e-5;
const DAG_TIME: Duration = Duration::from_secs(10);
const ANNIHILATION_TOL: f64 = 1e-9;
const HEAT_RESIDUAL_TOL: f64 = 1e-8;
const HEAT_RESIDUAL_TIME: Duration = Duration::from_secs(1);
const FDM_FACTOR: f64 = 10.0;
const FDM_TIME: Duration = Duration::from_secs(30);
const CFL_POINTS: usize = 10_000;
const LINEAR_GT_TOL: f64 = 5e-2;
const LINEAR_SEEDS: u64 = 10;
const LINEAR_REQUIRED: usize = 8;
const LINEAR_RUN_TIME: Duration = Duration::from_secs(60);
const HEAT_GT_TOL: f64 = 1e-4;
const HEAT_SEEDS: u64 = 5;
const HEAT_REQUIRED: usize = 4;
const HEAT_RUN_TIME: Duration = Duration::from_secs(600);
const INVERSE_BAND: (f64, f64) = (0.09, 0.11);
const INVERSE_SETTLE: f64 = 1e-3;
const LOSS_DROP: f64 = 0.01;
const DENSITY_SEEDS: u64 = 3;
const DENSE_DELTA: f64 = 0.025;

/// Finite-difference errors for the `(Δ, T, D)` lattice with `Δx = Δt = Δ`.
/// `None` marks cells whose error overflowed ("limits too large").
const REFERENCE_FDM: &[(f64, f64, f64, Option<f64>)] = &[
    (0.1, 1.0, 0.01, Some(1.457e-8)),
    (0.1, 1.0, 0.05, Some(5.169e-6)),
    (0.1, 1.0, 0.09, Some(4.764e-5)),
    (0.1, 10.0, 0.01, Some(3.996e-7)),
    (0.1, 10.0, 0.05, Some(6.329e-6)),
    (0.1, 10.0, 0.09, Some(1.084e44)),
    (0.1, 100.0, 0.01, Some(1.268e-7)),
    (0.1, 100.0, 0.05, Some(6.404e-7)),
    (0.1, 100.0, 0.09, None),
    (0.05, 1.0, 0.005, Some(2.493e-10)),
    (0.05, 1.0, 0.025, Some(1.167e-7)),
    (0.05, 1.0, 0.045, Some(1.382e-6)),
    (0.05, 10.0, 0.005, Some(1.277e-8)),
    (0.05, 10.0, 0.025, Some(7.127e-7)),
    (0.05, 10.0, 0.045, Some(3.520e128)),
    (0.05, 100.0, 0.005, Some(1.633e-8)),
    (0.05, 100.0, 0.025, Some(8.213e-8)),
    (0.05, 100.0, 0.045, None),
    (0.025, 1.0, 0.0025, Some(4.085e-12)),
    (0.025, 1.0, 0.0125, Some(2.206e-9)),
    (0.025, 1.0, 0.0225, Some(2.944e-3)),
    (0.025, 10.0, 0.0025, Some(2.909e-10)),
    (0.025, 10.0, 0.0125, Some(4.687e-8)),
    (0.025, 10.0, 0.0225, Some(3.242e294)),
    (0.025, 100.0, 0.0025, Some(1.819e-9)),
    (0.025, 100.0, 0.0125, Some(1.046e-8)),
    (0.025, 100.0, 0.0225, None),
];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Training runs shared between criteria, keyed by label and seed.
#[derive(Default)]
struct Runs {
    cache: BTreeMap<(&'static str, u64), TrainReport>,
}

impl Runs {
    fn get(&mut self, label: &'static str, seed: u64) -> &TrainReport {
        self.cache.entry((label, seed)).or_insert_with(|| {
            let cfg = match label {
                "linear" => RunConfig::linear(seed),
                "linear-no-residual" => RunConfig {
                    problem: RunConfig::linear(seed).problem.with_lambda(0.0),
                    ..RunConfig::linear(seed)
                },
                "quadratic" => RunConfig::quadratic(seed),
                "heat" => RunConfig::heat_forward(seed),
                "heat-dense" => RunConfig::heat(Diffusivity::Fixed(0.1), 0.1, DENSE_DELTA, 1.0, seed).unwrap(),
                "inverse" => RunConfig::heat_inverse(seed),
                other => panic!("unknown run {other}"),
            };
            let report = if label == "inverse" { train_inverse_heat(&cfg) } else { train(&cfg) };
            report.unwrap()
        })
    }
}

// Random expression DAGs: each node is an input or an operation on earlier
// nodes, evaluated both on the tape and in plain floating point.
#[derive(Clone, Copy, Debug)]
enum Node {
    Input(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Sin(usize),
    Cos(usize),
    Exp(usize),
    Tanh(usize),
    Powi(usize, i32),
    Scale(usize, f64),
    Offset(usize, f64),
}

fn eval_plain(nodes: &[Node], xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = Vec::with_capacity(nodes.len());
    for n in nodes {
        let y = match *n {
            Node::Input(i) => xs[i],
            Node::Add(a, b) => v[a] + v[b],
            Node::Sub(a, b) => v[a] - v[b],
            Node::Mul(a, b) => v[a] * v[b],
            Node::Div(a, b) => v[a] / v[b],
            Node::Neg(a) => -v[a],
            Node::Sin(a) => v[a].sin(),
            Node::Cos(a) => v[a].cos(),
            Node::Exp(a) => v[a].exp(),
            Node::Tanh(a) => v[a].tanh(),
            Node::Powi(a, k) => v[a].powi(k),
            Node::Scale(a, c) => v[a] * c,
            Node::Offset(a, c) => v[a] + c,
        };
        v.push(y);
    }
    *v.last().unwrap()
}

fn eval_tape(tape: &mut Tape, nodes: &[Node], xs: &[Var]) -> pinnkit::Result<Var> {
    let mut v: Vec<Var> = Vec::with_capacity(nodes.len());
    for n in nodes {
        let y = match *n {
            Node::Input(i) => xs[i],
            Node::Add(a, b) => tape.add(v[a], v[b])?,
            Node::Sub(a, b) => tape.sub(v[a], v[b])?,
            Node::Mul(a, b) => tape.mul(v[a], v[b])?,
            Node::Div(a, b) => tape.div(v[a], v[b])?,
            Node::Neg(a) => tape.neg(v[a])?,
            Node::Sin(a) => tape.sin(v[a])?,
            Node::Cos(a) => tape.cos(v[a])?,
            Node::Exp(a) => tape.exp(v[a])?,
            Node::Tanh(a) => tape.tanh(v[a])?,
            Node::Powi(a, k) => tape.powi(v[a], k)?,
            Node::Scale(a, c) => tape.scale(v[a], c)?,
            Node::Offset(a, c) => tape.offset(v[a], c)?,
        };
        v.push(y);
    }
    Ok(*v.last().unwrap())
}

/// Builds a DAG whose node values at `xs` stay moderate, so finite
/// differences remain a sharp oracle.
fn random_dag(rng: &mut ChaCha8Rng, xs: &[f64]) -> Vec<Node> {
    let mut nodes: Vec<Node> = (0..xs.len()).map(Node::Input).collect();
    let mut depth = vec![0usize; xs.len()];
    let mut values = xs.to_vec();
    let target = rng.random_range(4..40);
    while nodes.len() < xs.len() + target {
        let pick = |rng: &mut ChaCha8Rng| {
            // bias towards recent nodes so chains get deep
            let n = nodes.len();
            if rng.random_bool(0.6) {
                n - 1 - rng.random_range(0..n.min(3))
            } else {
                rng.random_range(0..n)
            }
        };
        let (a, b) = (pick(rng), pick(rng));
        let node = match rng.random_range(0..13) {
            0 => Node::Add(a, b),
            1 => Node::Sub(a, b),
            2 => Node::Mul(a, b),
            3 => Node::Div(a, b),
            4 => Node::Neg(a),
            5 => Node::Sin(a),
            6 => Node::Cos(a),
            7 => Node::Exp(a),
            8 => Node::Tanh(a),
            9 => Node::Powi(a, rng.random_range(-2..=3)),
            10 => Node::Scale(a, rng.random_range(-2.0..2.0)),
            11 => Node::Offset(a, rng.random_range(-1.0..1.0)),
            _ => Node::Mul(a, a),
        };
        let d = match node {
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => depth[a].max(depth[b]) + 1,
            Node::Neg(a) | Node::Sin(a) | Node::Cos(a) | Node::Exp(a) | Node::Tanh(a) => depth[a] + 1,
            Node::Powi(a, _) | Node::Scale(a, _) | Node::Offset(a, _) => depth[a] + 1,
            Node::Input(_) => 0,
        };
        if d > DAG_MAX_DEPTH {
            continue;
        }
        let ok = match node {
            Node::Div(_, b) => values[b].abs() > 0.3,
            Node::Powi(a, k) => k >= 0 || values[a].abs() > 0.3,
            _ => true,
        };
        if !ok {
            continue;
        }
        nodes.push(node);
        let v = eval_plain(&nodes, xs);
        if !(v.is_finite() && v.abs() < 50.0) {
            nodes.pop();
            continue;
        }
        values.push(v);
        depth.push(d);
    }
    nodes
}

/// Fourth-order central difference of the plain evaluation.
fn fd_gradient(nodes: &[Node], xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let h = 1e-4 * xs[i].abs().max(1.0);
            let at = |s: f64| {
                let mut p = xs.to_vec();
                p[i] += s * h;
                eval_plain(nodes, &p)
            };
            (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
        })
        .collect()
}

fn c1_autodiff_oracle(_: &mut Runs) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..DAG_COUNT {
        let xs: Vec<f64> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(-1.5..1.5)).collect();
        let nodes = random_dag(&mut rng, &xs);
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|&x| tape.input(x).unwrap()).collect();
        let y = eval_tape(&mut tape, &nodes, &vars).unwrap();
        let grads = tape.grad(y, &vars).unwrap();
        for (g, fd) in grads.iter().zip(fd_gradient(&nodes, &xs)) {
            let rel = (g.value() - fd).abs() / g.value().abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < DAG_REL_TOL && elapsed < DAG_TIME,
        format!("{DAG_COUNT} DAGs, {checked} partials, worst rel err {worst:.2e}, {elapsed:.2?}"),
    )
}

fn c2_annihilation(_: &mut Runs) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for n in 1..=5usize {
        let coeffs: Vec<f64> = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
        for _ in 0..100 {
            let x0 = rng.random_range(-2.0..2.0);
            let mut tape = Tape::new();
            let x = tape.input(x0).unwrap();
            let d = tape
                .nth_derivative(x, n + 1, |t, x| {
                    // Horner form
                    let mut acc = t.constant(coeffs[n])?;
                    for &c in coeffs[..n].iter().rev() {
                        acc = t.mul(acc, x)?;
                        acc = t.offset(acc, c)?;
                    }
                    Ok(acc)
                })
                .unwrap();
            worst = worst.max(d.value().abs());
        }
    }
    verdict(worst < ANNIHILATION_TOL, format!("degrees 1..=5, max |u^(n+1)| = {worst:.2e}"))
}

fn c3_heat_exact_residual(_: &mut Runs) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for d in [0.01, 0.1, 1.0] {
        let exact = Analytic::new(2, move |tape: &mut Tape, v: &[Var]| {
            let decay = tape.scale(v[1], -PI * PI * d)?;
            let decay = tape.exp(decay)?;
            let arg = tape.scale(v[0], PI)?;
            let wave = tape.sin(arg)?;
            tape.mul(decay, wave)
        });
        for _ in 0..100 {
            let mut tape = Tape::new();
            let x = tape.input(rng.random_range(0.0..=1.0)).unwrap();
            let t = tape.input(rng.random_range(0.0..=1.0)).unwrap();
            let dv = tape.constant(d).unwrap();
            let r = residual_heat(&mut tape, &exact, x, t, dv).unwrap();
            worst = worst.max(r.value().abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < HEAT_RESIDUAL_TOL && elapsed < HEAT_RESIDUAL_TIME,
        format!("D in {{0.01, 0.1, 1}}, max |residual| = {worst:.2e}, {elapsed:.2?}"),
    )
}

fn c4_fdm_lattice(_: &mut Runs) -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_ratio = 1.0f64;
    for &(delta, t_max, d, reference) in REFERENCE_FDM {
        let sol = fdm_solve(&FdmGrid::new(delta, delta, d, t_max).unwrap()).unwrap();
        let mse = fdm_mse(&sol, d).unwrap();
        let diverged = sol.diverged.is_some();
        let ok = match reference {
            None => diverged && mse == SATURATION,
            Some(r) if r > 1.0 => diverged,
            Some(r) => {
                let ratio = (mse / r).max(r / mse);
                worst_ratio = worst_ratio.max(ratio);
                !diverged && ratio <= FDM_FACTOR
            }
        };
        if !ok {
            failures.push(format!("(Δ={delta}, T={t_max}, D={d}) mse {mse:.3e} diverged {diverged}"));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        failures.is_empty() && elapsed < FDM_TIME,
        format!(
            "{} cells, worst factor on finite cells {worst_ratio:.2}, {elapsed:.2?}{}",
            REFERENCE_FDM.len(),
            if failures.is_empty() { String::new() } else { format!("; off: {}", failures.join(", ")) }
        ),
    )
}

fn c5_cfl(_: &mut Runs) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut disagreements = 0;
    for _ in 0..CFL_POINTS {
        let dx = rng.random_range(1e-3..1.0);
        let dt = rng.random_range(1e-4..1.0);
        let d = rng.random_range(1e-4..2.0);
        let expected = 0.5 * dx * dx - d * dt >= 0.0;
        if cfl_check(d, dx, dt).unwrap().satisfied != expected {
            disagreements += 1;
        }
    }
    let boundary = [(0.05, 0.1, 0.1), (0.025, 0.05, 0.05), (0.0125, 0.025, 0.025), (0.5, 0.5, 0.25), (2.0, 0.2, 0.01)];
    let on_edge = boundary.iter().all(|&(d, dx, dt)| cfl_check(d, dx, dt).unwrap().satisfied);
    verdict(
        disagreements == 0 && on_edge,
        format!("{CFL_POINTS} random grids, {disagreements} disagreements, D·Δt = Δx²/2 satisfied: {on_edge}"),
    )
}

fn c6_linear(runs: &mut Runs) -> Verdict {
    let mut passing = 0;
    let mut slowest = Duration::ZERO;
    let mut values = Vec::new();
    for seed in 0..LINEAR_SEEDS {
        let r = runs.get("linear", seed);
        let mse = r.gt_mse["overall"];
        values.push(mse);
        slowest = slowest.max(Duration::from_secs_f64(r.wall_time_s));
        if r.succeeded() && mse < LINEAR_GT_TOL {
            passing += 1;
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    verdict(
        passing >= LINEAR_REQUIRED && slowest < LINEAR_RUN_TIME,
        format!("{passing}/{LINEAR_SEEDS} seeds below {LINEAR_GT_TOL:e} on [-1, 2] (mean {mean:.3e}), slowest run {slowest:.2?}"),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn c7_lambda_ablation(runs: &mut Runs) -> Verdict {
    let with: Vec<f64> = (0..LINEAR_SEEDS).map(|s| runs.get("linear", s).gt_mse["outside"]).collect();
    let without: Vec<f64> = (0..LINEAR_SEEDS).map(|s| runs.get("linear-no-residual", s).gt_mse["outside"]).collect();
    let (m1, m0) = (median(with), median(without));
    verdict(m1 < m0, format!("median outside-range MSE: λ=1 {m1:.3e}, λ=0 {m0:.3e}"))
}

fn c8_heat_forward(runs: &mut Runs) -> Verdict {
    let mut passing = 0;
    let mut slowest = Duration::ZERO;
    let mut values = Vec::new();
    for seed in 0..HEAT_SEEDS {
        let r = runs.get("heat", seed);
        let mse = r.gt_mse["domain"];
        values.push(format!("{mse:.2e}"));
        slowest = slowest.max(Duration::from_secs_f64(r.wall_time_s));
        if r.succeeded() && mse < HEAT_GT_TOL {
            passing += 1;
        }
    }
    verdict(
        passing >= HEAT_REQUIRED && slowest <= HEAT_RUN_TIME,
        format!(
            "{passing}/{HEAT_SEEDS} seeds below {HEAT_GT_TOL:e} on [0,1]² ({}), slowest run {slowest:.2?}",
            values.join(", ")
        ),
    )
}

fn c9_inverse(runs: &mut Runs) -> Verdict {
    let mut in_band = 0;
    let mut worst = 0.0_f64;
    let mut found = Vec::new();
    for seed in 0..HEAT_SEEDS {
        let r = runs.get("inverse", seed);
        let d = r.final_d.unwrap_or(f64::NAN);
        found.push(format!("{d:.5}"));
        if r.succeeded() && (INVERSE_BAND.0..=INVERSE_BAND.1).contains(&d) {
            in_band += 1;
        }
        let traj = r.d_trajectory();
        let tail = &traj[traj.len() - traj.len() / 10..];
        worst = tail.iter().map(|x| (x - d).abs()).fold(worst, f64::max);
    }
    verdict(
        in_band >= HEAT_REQUIRED && worst < INVERSE_SETTLE,
        format!(
            "D = [{}], {in_band}/{HEAT_SEEDS} in [{}, {}], max |D - D_final| over final 10%: {worst:.2e}",
            found.join(", "),
            INVERSE_BAND.0,
            INVERSE_BAND.1
        ),
    )
}

fn c10_loss_drop(runs: &mut Runs) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for label in ["linear", "quadratic", "heat"] {
        let r = runs.get(label, 0);
        let ratio = r.final_loss.total / r.curve[0].total;
        ok &= r.succeeded() && ratio < LOSS_DROP;
        parts.push(format!("{label} {ratio:.2e}"));
    }
    verdict(ok, format!("final/epoch-1 loss: {}", parts.join(", ")))
}

fn c11_reproducibility(_: &mut Runs) -> Verdict {
    let small = |mut cfg: RunConfig| {
        cfg.epochs = 200;
        cfg.net = pinnkit::nn::MlpConfig::from_total_layers(cfg.net.input_dim, 3, 8, cfg.net.seed).unwrap();
        cfg
    };
    let mut tape_heat = small(RunConfig::heat_forward(3));
    tape_heat.engine = pinnkit::problems::Engine::Tape;
    tape_heat.epochs = 20;
    let configs = [
        small(RunConfig::linear(1)),
        small(RunConfig::quadratic(2)),
        small(RunConfig::heat_forward(3)),
        small(RunConfig::heat_inverse(4)),
        tape_heat,
    ];
    let mut identical = true;
    for cfg in &configs {
        let a = train(cfg).unwrap().without_timing();
        let b = train(cfg).unwrap().without_timing();
        identical &= a == b && a.to_json().unwrap() == b.to_json().unwrap();
        let bits = |r: &TrainReport| r.params.as_ref().map(|p| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        identical &= bits(&a) == bits(&b);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.txt");
    let mut cfg = small(RunConfig::heat_inverse(5));
    cfg.checkpoint = Some(path.clone());
    let report = train(&cfg).unwrap();
    let trained = report.params.as_ref().unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let round_trip = (0..200).all(|_| {
        let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        trained.predict(&p).unwrap().to_bits() == loaded.params.predict(&p).unwrap().to_bits()
    }) && loaded.extras.get("D").map(|d| d.to_bits()) == report.final_d.map(f64::to_bits);
    verdict(
        identical && round_trip,
        format!("{} configs bit-identical: {identical}; checkpoint round trip exact: {round_trip}", configs.len()),
    )
}

fn c12_density(runs: &mut Runs) -> Verdict {
    let mean = |runs: &mut Runs, label| (0..DENSITY_SEEDS).map(|s| runs.get(label, s).gt_mse["domain"]).sum::<f64>() / DENSITY_SEEDS as f64;
    let sparse = mean(runs, "heat");
    let dense = mean(runs, "heat-dense");
    verdict(dense <= sparse, format!("mean GT MSE over {DENSITY_SEEDS} seeds: Δ=0.1 {sparse:.3e}, Δ={DENSE_DELTA} {dense:.3e}"))
}

fn main() {
    let criteria: [(&str, fn(&mut Runs) -> Verdict); 12] = [
        ("autodiff oracle", c1_autodiff_oracle),
        ("polynomial annihilation", c2_annihilation),
        ("heat residual of exact solution", c3_heat_exact_residual),
        ("FDM lattice", c4_fdm_lattice),
        ("CFL exactness", c5_cfl),
        ("linear desk run", c6_linear),
        ("lambda ablation", c7_lambda_ablation),
        ("heat forward", c8_heat_forward),
        ("inverse diffusivity", c9_inverse),
        ("loss curve drop", c10_loss_drop),
        ("reproducibility", c11_reproducibility),
        ("density trend", c12_density),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut runs = Runs::default();
    let mut failed = Vec::new();
    let suite = Instant::now();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let v = check(&mut runs);
        println!(
            "[{}] {number:>2} {name}: {} ({:.1?})",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed()
        );
        if !v.pass {
            failed.push(number);
        }
    }
    println!("acceptance: {} failed {:?}, total {:.1?}", failed.len(), failed, suite.elapsed());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
