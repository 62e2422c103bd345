//! Differential-equation problems, their residuals and the composite loss
//! `L_data + λ·L_residual` (plus a boundary/initial penalty for heat).
//!
//! The tape-level functions ([`data_loss`], [`residual_poly`],
//! [`residual_heat`], [`Problem::total_loss`]) take any [`Model`], so an
//! analytic expression can stand in for the network:
//!
//! ```
//! use pinnkit::autodiff::Tape;
//! use pinnkit::problems::{residual_heat, Analytic};
//!
//! let d = 0.1;
//! let exact = Analytic::new(2, move |tape: &mut Tape, v: &[_]| {
//!     let decay = tape.scale(v[1], -std::f64::consts::PI.powi(2) * d)?;
//!     let decay = tape.exp(decay)?;
//!     let arg = tape.scale(v[0], std::f64::consts::PI)?;
//!     let wave = tape.sin(arg)?;
//!     tape.mul(decay, wave)
//! });
//! let mut tape = Tape::new();
//! let x = tape.input(0.3)?;
//! let t = tape.input(0.6)?;
//! let dv = tape.constant(d)?;
//! let r = residual_heat(&mut tape, &exact, x, t, dv)?;
//! assert!(r.value().abs() < 1e-12);
//! # Ok::<(), pinnkit::Error>(())
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::datagen::{linspace, Dataset};
use crate::error::{Error, Result};
use crate::nn::{ParamSet, TapeMlp};
use crate::taylor::{self, factorial};

/// Anything that maps input variables to one output on a tape.
pub trait Model {
    fn input_dim(&self) -> usize;
    fn eval(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Var>;
}

impl Model for TapeMlp {
    fn input_dim(&self) -> usize {
        self.config().input_dim
    }

    fn eval(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Var> {
        self.forward(tape, inputs)
    }
}

/// A closed-form expression used in place of a network.
pub struct Analytic<F> {
    dim: usize,
    f: F,
}

impl<F> Analytic<F>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Analytic { dim, f }
    }
}

impl<F> Model for Analytic<F>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: inputs.len(),
            });
        }
        (self.f)(tape, inputs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diffusivity {
    Fixed(f64),
    /// Optimized alongside the network, starting from the given value.
    Trainable(f64),
}

impl Diffusivity {
    pub fn value(&self) -> f64 {
        match *self {
            Diffusivity::Fixed(d) | Diffusivity::Trainable(d) => d,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Diffusivity::Trainable(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemKind {
    /// `d^r u / dx^r = 0`, satisfied by polynomials of degree below `r`.
    Polynomial { degree: usize, residual_order: usize },
    /// `u_t = D·u_xx` on `[0, 1] × [0, T]` with `u(0,t) = u(1,t) = 0` and
    /// `u(x,0) = sin(πx)`.
    Heat { diffusivity: Diffusivity },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CollocationSpec {
    Interval {
        lo: f64,
        hi: f64,
        count: usize,
    },
    HeatGrid {
        nx: usize,
        nt: usize,
        t_max: f64,
        boundary_count: usize,
        initial_count: usize,
    },
}

impl CollocationSpec {
    pub fn interval_default() -> Self {
        CollocationSpec::Interval {
            lo: -1.0,
            hi: 2.0,
            count: 100,
        }
    }

    /// Residual points on the lattice with steps `dx`, `dt` up to `t_max`.
    pub fn heat_grid(dx: f64, dt: f64, t_max: f64) -> Result<Self> {
        Ok(CollocationSpec::HeatGrid {
            nx: crate::datagen::lattice_steps(1.0, dx, "dx")? + 1,
            nt: crate::datagen::lattice_steps(t_max, dt, "dt")? + 1,
            t_max,
            boundary_count: 50,
            initial_count: 50,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CollocationSpec::Interval { lo, hi, count } => {
                if count < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::config(format!(
                        "collocation interval needs count >= 2 and lo < hi, got {count} on [{lo}, {hi}]"
                    )));
                }
            }
            CollocationSpec::HeatGrid {
                nx,
                nt,
                t_max,
                boundary_count,
                initial_count,
            } => {
                if nx < 2 || nt < 2 || boundary_count < 2 || initial_count < 2 {
                    return Err(Error::config("heat collocation counts must be >= 2"));
                }
                if !(t_max > 0.0 && t_max.is_finite()) {
                    return Err(Error::config(format!("T must be > 0, got {t_max}")));
                }
            }
        }
        Ok(())
    }

    fn build(&self) -> Collocation {
        match *self {
            CollocationSpec::Interval { lo, hi, count } => Collocation {
                interior: linspace(lo, hi, count),
                edge: Vec::new(),
                edge_targets: Vec::new(),
                boundary_points: 0,
            },
            CollocationSpec::HeatGrid {
                nx,
                nt,
                t_max,
                boundary_count,
                initial_count,
            } => {
                let mut interior = Vec::with_capacity(2 * nx * nt);
                for t in linspace(0.0, t_max, nt) {
                    for x in linspace(0.0, 1.0, nx) {
                        interior.extend([x, t]);
                    }
                }
                let mut edge = Vec::new();
                let mut edge_targets = Vec::new();
                for t in linspace(0.0, t_max, boundary_count) {
                    for x in [0.0, 1.0] {
                        edge.extend([x, t]);
                        edge_targets.push(0.0);
                    }
                }
                for x in linspace(0.0, 1.0, initial_count) {
                    edge.extend([x, 0.0]);
                    edge_targets.push((PI * x).sin());
                }
                Collocation {
                    interior,
                    edge,
                    edge_targets,
                    boundary_points: 2 * boundary_count,
                }
            }
        }
    }
}

/// Materialized collocation points.
#[derive(Clone, Debug, PartialEq)]
struct Collocation {
    /// Residual points, flat.
    interior: Vec<f64>,
    /// Boundary samples `(0,t)`, `(1,t)` followed by initial samples `(x,0)`.
    edge: Vec<f64>,
    edge_targets: Vec<f64>,
    boundary_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub lambda: f64,
    pub collocation: CollocationSpec,
}

impl ProblemSpec {
    /// Degree-`degree` polynomial problem with residual order `degree + 1`,
    /// λ = 1 and 100 collocation points on `[-1, 2]`.
    pub fn polynomial(degree: usize) -> Self {
        ProblemSpec {
            kind: ProblemKind::Polynomial {
                degree,
                residual_order: degree + 1,
            },
            lambda: 1.0,
            collocation: CollocationSpec::interval_default(),
        }
    }

    /// Heat problem with λ = 1, collocated on the `dx × dt` lattice.
    pub fn heat(diffusivity: Diffusivity, dx: f64, dt: f64, t_max: f64) -> Result<Self> {
        Ok(ProblemSpec {
            kind: ProblemKind::Heat { diffusivity },
            lambda: 1.0,
            collocation: CollocationSpec::heat_grid(dx, dt, t_max)?,
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_residual_order(mut self, order: usize) -> Self {
        if let ProblemKind::Polynomial { residual_order, .. } = &mut self.kind {
            *residual_order = order;
        }
        self
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            ProblemKind::Polynomial { .. } => 1,
            ProblemKind::Heat { .. } => 2,
        }
    }

    pub fn is_heat(&self) -> bool {
        matches!(self.kind, ProblemKind::Heat { .. })
    }

    pub fn diffusivity(&self) -> Option<Diffusivity> {
        match self.kind {
            ProblemKind::Heat { diffusivity } => Some(diffusivity),
            ProblemKind::Polynomial { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        self.collocation.validate()?;
        match (self.kind, self.collocation) {
            (ProblemKind::Polynomial { degree, residual_order }, CollocationSpec::Interval { .. }) => {
                if degree == 0 {
                    return Err(Error::config("polynomial degree must be >= 1"));
                }
                if residual_order == 0 {
                    return Err(Error::ZeroOrder(0));
                }
            }
            (ProblemKind::Heat { diffusivity }, CollocationSpec::HeatGrid { .. }) => {
                if let Diffusivity::Fixed(d) = diffusivity {
                    if !(d > 0.0 && d.is_finite()) {
                        return Err(Error::config(format!("diffusivity must be > 0, got {d}")));
                    }
                }
                if !diffusivity.value().is_finite() {
                    return Err(Error::config("initial diffusivity must be finite"));
                }
            }
            _ => return Err(Error::config("collocation kind does not match the problem")),
        }
        Ok(())
    }
}

/// Which differentiation route computes losses and gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Scalar reverse-mode tape with nested gradients.
    Tape,
    /// Batched Taylor jets with a hand-written adjoint.
    #[default]
    Batched,
}

/// The loss and its components. `boundary` is the heat BC/IC penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms<T> {
    pub total: T,
    pub data: T,
    pub residual: T,
    pub boundary: Option<T>,
}

/// Loss values with the gradient of `total` w.r.t. every network parameter
/// and w.r.t. `D` (zero for polynomial problems).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub terms: LossTerms<f64>,
    pub grad: Vec<f64>,
    pub grad_d: f64,
}

/// A validated [`ProblemSpec`] with its collocation points materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    spec: ProblemSpec,
    colloc: Collocation,
}

pub fn data_loss(tape: &mut Tape, model: &dyn Model, dataset: &Dataset) -> Result<Var> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.input_dim != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: dataset.input_dim,
        });
    }
    let mut sq = Vec::with_capacity(dataset.len());
    for (x, y) in dataset.points() {
        let ins = x.iter().map(|&v| tape.constant(v)).collect::<Result<Vec<_>>>()?;
        let u = model.eval(tape, &ins)?;
        let r = tape.offset(u, -y)?;
        sq.push(tape.square(r)?);
    }
    tape.mean(&sq)
}

/// `d^order u / dx^order` at `x`.
pub fn residual_poly(tape: &mut Tape, model: &dyn Model, x: Var, order: usize) -> Result<Var> {
    if model.input_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: model.input_dim(),
        });
    }
    tape.nth_derivative(x, order, |tape, x| model.eval(tape, &[x]))
}

/// `u_t - D·u_xx` at `(x, t)`.
pub fn residual_heat(tape: &mut Tape, model: &dyn Model, x: Var, t: Var, d: Var) -> Result<Var> {
    if model.input_dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: model.input_dim(),
        });
    }
    let u = model.eval(tape, &[x, t])?;
    let ut = tape.derivative(u, t, 1)?;
    let uxx = tape.derivative(u, x, 2)?;
    let diff = tape.mul(d, uxx)?;
    tape.sub(ut, diff)
}

fn mse(r: &[f64], targets: &[f64]) -> f64 {
    r.iter().zip(targets).map(|(u, y)| (u - y) * (u - y)).sum::<f64>() / r.len() as f64
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Problem {
            colloc: spec.collocation.build(),
            spec,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    /// Residual (collocation) points, flat row-major.
    pub fn collocation_points(&self) -> &[f64] {
        &self.colloc.interior
    }

    fn d_var(&self, tape: &mut Tape, d: Option<Var>) -> Result<Var> {
        match (d, self.spec.diffusivity()) {
            (Some(v), _) => Ok(v),
            (None, Some(diff)) => tape.constant(diff.value()),
            (None, None) => Err(Error::NotHeat),
        }
    }

    /// Mean of squared residuals over the collocation points. For heat
    /// problems `d` overrides the spec's diffusivity (pass a leaf to learn it).
    pub fn residual_loss(&self, tape: &mut Tape, model: &dyn Model, d: Option<Var>) -> Result<Var> {
        let mut sq = Vec::new();
        match self.spec.kind {
            ProblemKind::Polynomial { residual_order, .. } => {
                for &x0 in &self.colloc.interior {
                    let x = tape.input(x0)?;
                    let r = residual_poly(tape, model, x, residual_order)?;
                    sq.push(tape.square(r)?);
                }
            }
            ProblemKind::Heat { .. } => {
                let d = self.d_var(tape, d)?;
                for p in self.colloc.interior.chunks(2) {
                    let x = tape.input(p[0])?;
                    let t = tape.input(p[1])?;
                    let r = residual_heat(tape, model, x, t, d)?;
                    sq.push(tape.square(r)?);
                }
            }
        }
        tape.mean(&sq)
    }

    /// Boundary MSE of `u(0,t)`, `u(1,t)` against 0 plus initial MSE of
    /// `u(x,0)` against `sin(πx)`.
    pub fn boundary_initial_loss(&self, tape: &mut Tape, model: &dyn Model) -> Result<Var> {
        if !self.spec.is_heat() {
            return Err(Error::NotHeat);
        }
        let nb = self.colloc.boundary_points;
        let mut sq = Vec::with_capacity(self.colloc.edge_targets.len());
        for (p, &y) in self.colloc.edge.chunks(2).zip(&self.colloc.edge_targets) {
            let x = tape.constant(p[0])?;
            let t = tape.constant(p[1])?;
            let u = model.eval(tape, &[x, t])?;
            let r = tape.offset(u, -y)?;
            sq.push(tape.square(r)?);
        }
        let b = tape.mean(&sq[..nb])?;
        let i = tape.mean(&sq[nb..])?;
        tape.add(b, i)
    }

    pub fn total_loss(&self, tape: &mut Tape, model: &dyn Model, dataset: &Dataset, d: Option<Var>) -> Result<LossTerms<Var>> {
        let data = data_loss(tape, model, dataset)?;
        let residual = self.residual_loss(tape, model, d)?;
        let weighted = tape.scale(residual, self.spec.lambda)?;
        let mut total = tape.add(data, weighted)?;
        let boundary = if self.spec.is_heat() {
            let b = self.boundary_initial_loss(tape, model)?;
            total = tape.add(total, b)?;
            Some(b)
        } else {
            None
        };
        Ok(LossTerms {
            total,
            data,
            residual,
            boundary,
        })
    }

    pub fn evaluate(&self, engine: Engine, tape: &mut Tape, params: &ParamSet, d: f64, dataset: &Dataset) -> Result<Evaluation> {
        match engine {
            Engine::Tape => self.evaluate_tape(tape, params, d, dataset),
            Engine::Batched => self.evaluate_batched(params, d, dataset),
        }
    }

    /// Losses and gradients on `tape`, which is rolled back afterwards.
    pub fn evaluate_tape(&self, tape: &mut Tape, params: &ParamSet, d: f64, dataset: &Dataset) -> Result<Evaluation> {
        let mark = tape.checkpoint();
        let out = (|| {
            let model = params.on_tape(tape)?;
            let dv = if self.spec.is_heat() { Some(tape.input(d)?) } else { None };
            let terms = self.total_loss(tape, &model, dataset, dv)?;
            let mut wrt = model.params().to_vec();
            wrt.extend(dv);
            let grads = tape.grad(terms.total, &wrt)?;
            let mut grad: Vec<f64> = grads.iter().map(|g| g.value()).collect();
            let grad_d = if dv.is_some() { grad.pop().unwrap_or(0.0) } else { 0.0 };
            Ok(Evaluation {
                terms: LossTerms {
                    total: terms.total.value(),
                    data: terms.data.value(),
                    residual: terms.residual.value(),
                    boundary: terms.boundary.map(|b| b.value()),
                },
                grad,
                grad_d,
            })
        })();
        tape.rollback(mark)?;
        out
    }

    /// Losses and gradients through the batched Taylor engine.
    pub fn evaluate_batched(&self, params: &ParamSet, d: f64, dataset: &Dataset) -> Result<Evaluation> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dataset.input_dim != params.config().input_dim || dataset.input_dim != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: dataset.input_dim,
            });
        }
        let lambda = self.spec.lambda;
        let mut grad = vec![0.0; params.len()];
        let mut grad_d = 0.0;

        let n = dataset.len() as f64;
        let fit = taylor::forward(params, &dataset.inputs, 0, 0)?;
        let u = fit.coefficient(0);
        let data = mse(u, &dataset.targets);
        let seed: Vec<f64> = u.iter().zip(&dataset.targets).map(|(u, y)| 2.0 * (u - y) / n).collect();
        fit.backward(params, &[seed], &mut grad)?;

        let pts = &self.colloc.interior;
        let residual = match self.spec.kind {
            ProblemKind::Polynomial { residual_order, .. } => {
                let jet = taylor::forward(params, pts, 0, residual_order)?;
                let f = factorial(residual_order);
                let res: Vec<f64> = jet.coefficient(residual_order).iter().map(|c| f * c).collect();
                let m = res.len() as f64;
                if lambda != 0.0 {
                    let mut seeds = vec![Vec::new(); residual_order + 1];
                    seeds[residual_order] = res.iter().map(|r| lambda * 2.0 * r * f / m).collect();
                    jet.backward(params, &seeds, &mut grad)?;
                }
                res.iter().map(|r| r * r).sum::<f64>() / m
            }
            ProblemKind::Heat { .. } => {
                let jx = taylor::forward(params, pts, 0, 2)?;
                let jt = taylor::forward(params, pts, 1, 1)?;
                let uxx = jx.derivative(2);
                let ut = jt.coefficient(1);
                let res: Vec<f64> = ut.iter().zip(&uxx).map(|(ut, uxx)| ut - d * uxx).collect();
                let m = res.len() as f64;
                if lambda != 0.0 {
                    let w: Vec<f64> = res.iter().map(|r| lambda * 2.0 * r / m).collect();
                    jt.backward(params, &[Vec::new(), w.clone()], &mut grad)?;
                    let sx = w.iter().map(|w| -2.0 * d * w).collect();
                    jx.backward(params, &[Vec::new(), Vec::new(), sx], &mut grad)?;
                    grad_d = w.iter().zip(&uxx).map(|(w, uxx)| -w * uxx).sum();
                }
                res.iter().map(|r| r * r).sum::<f64>() / m
            }
        };

        let boundary = if self.spec.is_heat() {
            let nb = self.colloc.boundary_points;
            let edge = taylor::forward(params, &self.colloc.edge, 0, 0)?;
            let u = edge.coefficient(0);
            let y = &self.colloc.edge_targets;
            let ni = y.len() - nb;
            let value = mse(&u[..nb], &y[..nb]) + mse(&u[nb..], &y[nb..]);
            let seed = u
                .iter()
                .zip(y)
                .enumerate()
                .map(|(k, (u, y))| 2.0 * (u - y) / if k < nb { nb as f64 } else { ni as f64 })
                .collect();
            edge.backward(params, &[seed], &mut grad)?;
            Some(value)
        } else {
            None
        };

        Ok(Evaluation {
            terms: LossTerms {
                total: data + lambda * residual + boundary.unwrap_or(0.0),
                data,
                residual,
                boundary,
            },
            grad,
            grad_d,
        })
    }
}
