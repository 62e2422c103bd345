//! Synthetic datasets: noisy polynomial samples and the heat-equation
//! solution lattice, with CSV export and a provenance sidecar that is enough
//! to regenerate a dataset bit for bit.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, BoxMuller, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub mean: f64,
    pub variance: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            mean: 0.0,
            variance: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(variance: f64, seed: u64) -> Self {
        NoiseSpec {
            mean: 0.0,
            variance,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::config(format!("noise variance must be >= 0, got {}", self.variance)));
        }
        if !self.mean.is_finite() {
            return Err(Error::config("noise mean must be finite"));
        }
        Ok(())
    }

    fn sampler(&self) -> Option<BoxMuller<rand_chacha::ChaCha8Rng>> {
        (self.variance > 0.0 || self.mean != 0.0).then(|| BoxMuller::new(rng::stream(self.seed, Purpose::DataNoise)))
    }
}

/// Closed-form functions the synthetic data is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    /// `a·x + b`
    Line { a: f64, b: f64 },
    /// `a·x² + b·x + c`
    Parabola { a: f64, b: f64, c: f64 },
    /// `exp(-π²·d·t)·sin(πx)` on `x ∈ [0, 1]`, `t ≥ 0`.
    HeatSurface { d: f64 },
}

impl GroundTruth {
    pub fn input_dim(&self) -> usize {
        match self {
            GroundTruth::HeatSurface { .. } => 2,
            _ => 1,
        }
    }

    /// Value at `inputs` (`[x]` or `[x, t]`).
    pub fn eval(&self, inputs: &[f64]) -> f64 {
        match *self {
            GroundTruth::Line { a, b } => a * inputs[0] + b,
            GroundTruth::Parabola { a, b, c } => (a * inputs[0] + b) * inputs[0] + c,
            GroundTruth::HeatSurface { d } => heat_exact(inputs[0], inputs[1], d),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GroundTruth::Line { a, b } => format!("line(a={a}, b={b})"),
            GroundTruth::Parabola { a, b, c } => format!("parabola(a={a}, b={b}, c={c})"),
            GroundTruth::HeatSurface { d } => format!("heat(D={d})"),
        }
    }
}

pub fn heat_exact(x: f64, t: f64, d: f64) -> f64 {
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    (-PI * PI * d * t).exp() * (PI * x).sin()
}

/// Which lattice sites of a heat grid become data points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeMode {
    /// Every site including both boundaries: `(1/Δx + 1)·(T/Δt + 1)` points.
    #[default]
    Inclusive,
    /// One site per cell (its lower-left corner): `(1/Δx)·(T/Δt)` points.
    Cells,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    Interval { lo: f64, hi: f64, count: usize },
    HeatGrid { dx: f64, dt: f64, t_max: f64, lattice: LatticeMode },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub ground_truth: GroundTruth,
    pub noise: NoiseSpec,
    pub sampling: Sampling,
}

impl Provenance {
    pub fn generate(&self) -> Result<Dataset> {
        match (self.sampling, self.ground_truth) {
            (Sampling::Interval { lo, hi, count }, gt) => gen_polynomial(gt, lo, hi, count, self.noise),
            (Sampling::HeatGrid { dx, dt, t_max, lattice }, GroundTruth::HeatSurface { d }) => {
                gen_heat_grid(dx, dt, d, t_max, self.noise, lattice)
            }
            (Sampling::HeatGrid { .. }, _) => Err(Error::config("a heat grid needs a heat-surface ground truth")),
        }
    }
}

/// Training points, flat row-major inputs and one target per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(input_dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&input_dim) {
            return Err(Error::config(format!("input_dim must be 1 or 2, got {input_dim}")));
        }
        if inputs.len() != targets.len() * input_dim {
            return Err(Error::LengthMismatch {
                expected: targets.len() * input_dim,
                found: inputs.len(),
            });
        }
        Ok(Dataset {
            input_dim,
            inputs,
            targets,
            provenance: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn points(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.inputs.chunks(self.input_dim).zip(self.targets.iter().copied())
    }

    fn header(&self) -> &'static [&'static str] {
        if self.input_dim == 1 {
            &["x", "target"]
        } else {
            &["x", "t", "target"]
        }
    }

    /// Writes `x[,t],target` CSV to `path` and, if the dataset has one, the
    /// provenance record as JSON next to it (see [`Dataset::sidecar_path`]).
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(self.header()).map_err(|e| csv_error(path, e))?;
        for (x, y) in self.points() {
            let row: Vec<String> = x.iter().chain(std::iter::once(&y)).map(|v| v.to_string()).collect();
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        if let Some(p) = &self.provenance {
            let side = Self::sidecar_path(path);
            std::fs::write(&side, serde_json::to_string_pretty(p)?).map_err(|e| Error::io(&side, e))?;
        }
        Ok(())
    }

    /// Reads a CSV written by [`Dataset::save_csv`], attaching the sidecar
    /// provenance when present.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let input_dim = match cols.as_slice() {
            ["x", "target"] => 1,
            ["x", "t", "target"] => 2,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `x,target` or `x,t,target`, found `{}`", cols.join(",")),
                })
            }
        };
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let vals = rec
                .iter()
                .zip(&cols)
                .map(|(v, c)| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("column `{c}`: invalid number `{v}`"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            inputs.extend_from_slice(&vals[..input_dim]);
            targets.push(vals[input_dim]);
        }
        let mut ds = Dataset::new(input_dim, inputs, targets)?;
        let side = Self::sidecar_path(path);
        if side.exists() {
            let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            ds.provenance = Some(serde_json::from_str(&text)?);
        }
        Ok(ds)
    }

    /// `data.csv` → `data.provenance.json`.
    pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
        path.with_extension("provenance.json")
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

/// `count` evenly spaced points on `[lo, hi]` (both ends included).
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

pub fn gen_polynomial(gt: GroundTruth, lo: f64, hi: f64, count: usize, noise: NoiseSpec) -> Result<Dataset> {
    noise.validate()?;
    if gt.input_dim() != 1 {
        return Err(Error::config("polynomial data needs a line or parabola ground truth"));
    }
    if count < 2 || !(lo < hi) {
        return Err(Error::config(format!("need count >= 2 and lo < hi, got {count} on [{lo}, {hi}]")));
    }
    let xs = linspace(lo, hi, count);
    let mut sampler = noise.sampler();
    let sd = noise.variance.sqrt();
    let targets = xs
        .iter()
        .map(|&x| gt.eval(&[x]) + sampler.as_mut().map_or(0.0, |g| g.next_gaussian(noise.mean, sd)))
        .collect();
    let mut ds = Dataset::new(1, xs, targets)?;
    ds.provenance = Some(Provenance {
        ground_truth: gt,
        noise,
        sampling: Sampling::Interval { lo, hi, count },
    });
    Ok(ds)
}

/// Number of steps of size `step` covering `span`, if it divides exactly.
pub fn lattice_steps(span: f64, step: f64, what: &str) -> Result<usize> {
    if !(step > 0.0 && span > 0.0 && step.is_finite() && span.is_finite()) {
        return Err(Error::config(format!("{what}: span {span} and step {step} must be positive")));
    }
    let n = span / step;
    let r = n.round();
    if (n - r).abs() > 1e-9 * n.max(1.0) || r < 1.0 {
        return Err(Error::config(format!("{what}: step {step} does not divide {span}")));
    }
    Ok(r as usize)
}

/// Lattice points of the heat problem, `(x, t)` pairs with `t` outermost.
pub fn heat_lattice(dx: f64, dt: f64, t_max: f64, lattice: LatticeMode) -> Result<Vec<f64>> {
    let nx = lattice_steps(1.0, dx, "dx")?;
    let nt = lattice_steps(t_max, dt, "dt")?;
    let (ix, it) = match lattice {
        LatticeMode::Inclusive => (nx + 1, nt + 1),
        LatticeMode::Cells => (nx, nt),
    };
    let mut pts = Vec::with_capacity(2 * ix * it);
    for j in 0..it {
        let t = if j == nt { t_max } else { j as f64 * dt };
        for i in 0..ix {
            let x = if i == nx { 1.0 } else { i as f64 * dx };
            pts.push(x);
            pts.push(t);
        }
    }
    Ok(pts)
}

pub fn gen_heat_grid(dx: f64, dt: f64, d: f64, t_max: f64, noise: NoiseSpec, lattice: LatticeMode) -> Result<Dataset> {
    noise.validate()?;
    if !(d > 0.0) {
        return Err(Error::config(format!("diffusivity must be > 0, got {d}")));
    }
    let inputs = heat_lattice(dx, dt, t_max, lattice)?;
    let mut sampler = noise.sampler();
    let sd = noise.variance.sqrt();
    let targets = inputs
        .chunks(2)
        .map(|p| heat_exact(p[0], p[1], d) + sampler.as_mut().map_or(0.0, |g| g.next_gaussian(noise.mean, sd)))
        .collect();
    let mut ds = Dataset::new(2, inputs, targets)?;
    ds.provenance = Some(Provenance {
        ground_truth: GroundTruth::HeatSurface { d },
        noise,
        sampling: Sampling::HeatGrid { dx, dt, t_max, lattice },
    });
    Ok(ds)
}
