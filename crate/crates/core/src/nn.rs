//! Fully connected tanh networks: topology, flat parameter storage,
//! initialization, tape evaluation and checkpoint files.
//!
//! Layer counts follow the "total layers" convention of the experiment
//! tables: a network with `L` layers and `N` neurons has `L - 1` hidden tanh
//! layers of width `N` followed by one linear output layer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_layers: usize, neurons_per_layer: usize, seed: u64) -> Result<Self> {
        let c = MlpConfig {
            input_dim,
            hidden_layers,
            neurons_per_layer,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    /// A table row "`total_layers` layers, `neurons` neurons".
    pub fn from_total_layers(input_dim: usize, total_layers: usize, neurons: usize, seed: u64) -> Result<Self> {
        if total_layers < 2 {
            return Err(Error::config(format!(
                "a network needs at least 2 total layers, got {total_layers}"
            )));
        }
        Self::new(input_dim, total_layers - 1, neurons, seed)
    }

    pub fn total_layers(&self) -> usize {
        self.hidden_layers + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.input_dim) {
            return Err(Error::config(format!("input_dim must be 1 or 2, got {}", self.input_dim)));
        }
        if self.hidden_layers == 0 || self.neurons_per_layer == 0 {
            return Err(Error::config("hidden_layers and neurons_per_layer must be at least 1"));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` for each affine map, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let n = self.neurons_per_layer;
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        shapes.push((n, self.input_dim));
        for _ in 1..self.hidden_layers {
            shapes.push((n, n));
        }
        shapes.push((1, n));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Weight,
    Bias,
}

/// Location of one tensor inside the flat parameter vector. Weights are
/// row-major `rows = fan_out`, `cols = fan_in`; biases have `cols = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub layer: usize,
    pub kind: TensorKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

fn build_layout(config: &MlpConfig) -> Vec<Slot> {
    let mut offset = 0;
    let mut layout = Vec::new();
    for (layer, (fan_out, fan_in)) in config.layer_shapes().into_iter().enumerate() {
        for (kind, cols) in [(TensorKind::Weight, fan_in), (TensorKind::Bias, 1)] {
            layout.push(Slot {
                layer,
                kind,
                offset,
                rows: fan_out,
                cols,
            });
            offset += fan_out * cols;
        }
    }
    layout
}

/// Network parameters as one flat vector plus the table describing it.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    config: MlpConfig,
    values: Vec<f64>,
    layout: Vec<Slot>,
}

impl ParamSet {
    /// Xavier-uniform weights, zero biases, drawn from the weight-init stream
    /// of `config.seed`.
    pub fn init(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layout = build_layout(&config);
        let mut values = vec![0.0; config.param_count()];
        let mut rng = rng::stream(config.seed, Purpose::WeightInit);
        for slot in layout.iter().filter(|s| s.kind == TensorKind::Weight) {
            let bound = (6.0 / (slot.rows + slot.cols) as f64).sqrt();
            for v in &mut values[slot.range()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(ParamSet {
            config,
            values,
            layout,
        })
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        Self::from_values(config, vec![0.0; config.param_count()])
    }

    pub fn from_values(config: MlpConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if values.len() != config.param_count() {
            return Err(Error::LengthMismatch {
                expected: config.param_count(),
                found: values.len(),
            });
        }
        Ok(ParamSet {
            config,
            values,
            layout: build_layout(&config),
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layers(&self) -> usize {
        self.layout.len() / 2
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        &self.values[self.layout[2 * layer].range()]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.values[self.layout[2 * layer + 1].range()]
    }

    /// Plain floating-point forward pass for one input point.
    pub fn predict(&self, inputs: &[f64]) -> Result<f64> {
        if inputs.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                found: inputs.len(),
            });
        }
        let last = self.layers() - 1;
        let mut act = inputs.to_vec();
        for layer in 0..=last {
            let w = self.weight(layer);
            let b = self.bias(layer);
            let fan_in = act.len();
            let mut next: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, &bo)| bo + w[o * fan_in..(o + 1) * fan_in].iter().zip(&act).map(|(w, a)| w * a).sum::<f64>())
                .collect();
            if layer != last {
                next.iter_mut().for_each(|z| *z = z.tanh());
            }
            act = next;
        }
        Ok(act[0])
    }

    /// Loads every parameter onto the tape as a leaf.
    pub fn on_tape(&self, tape: &mut Tape) -> Result<TapeMlp> {
        let params = self
            .values
            .iter()
            .map(|&v| tape.input(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(TapeMlp {
            config: self.config,
            layout: self.layout.clone(),
            params,
        })
    }
}

/// A network whose parameters live on a tape, so outputs are differentiable
/// with respect to both inputs and parameters.
#[derive(Clone, Debug)]
pub struct TapeMlp {
    config: MlpConfig,
    layout: Vec<Slot>,
    params: Vec<Var>,
}

impl TapeMlp {
    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn forward(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                found: inputs.len(),
            });
        }
        let layers = self.layout.len() / 2;
        let mut act = inputs.to_vec();
        for layer in 0..layers {
            let w = &self.params[self.layout[2 * layer].range()];
            let b = &self.params[self.layout[2 * layer + 1].range()];
            let fan_in = act.len();
            let mut next = Vec::with_capacity(b.len());
            for (o, &bias) in b.iter().enumerate() {
                let mut z = bias;
                for (i, &a) in act.iter().enumerate() {
                    let wa = tape.mul(w[o * fan_in + i], a)?;
                    z = tape.add(z, wa)?;
                }
                if layer + 1 < layers {
                    z = tape.tanh(z)?;
                }
                next.push(z);
            }
            act = next;
        }
        Ok(act[0])
    }
}

/// Parameters plus named extra scalars (e.g. a trained diffusivity).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub extras: BTreeMap<String, f64>,
}

const CHECKPOINT_MAGIC: &str = "pinnkit-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(params: ParamSet) -> Self {
        Checkpoint {
            params,
            extras: BTreeMap::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    /// Text form: a key-value header followed by one record per tensor, each
    /// real written as the 16 hex digits of its IEEE-754 bits.
    pub fn to_text(&self) -> String {
        let c = self.params.config();
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "version = {CHECKPOINT_VERSION}");
        let _ = writeln!(out, "input_dim = {}", c.input_dim);
        let _ = writeln!(out, "hidden_layers = {}", c.hidden_layers);
        let _ = writeln!(out, "neurons_per_layer = {}", c.neurons_per_layer);
        let _ = writeln!(out, "seed = {}", c.seed);
        for (k, v) in &self.extras {
            let _ = writeln!(out, "extra {k} = {:016x}", v.to_bits());
        }
        for slot in self.params.layout() {
            let kind = match slot.kind {
                TensorKind::Weight => "weight",
                TensorKind::Bias => "bias",
            };
            let _ = writeln!(
                out,
                "tensor layer={} kind={kind} rows={} cols={}",
                slot.layer, slot.rows, slot.cols
            );
            for row in self.params.values()[slot.range()].chunks(slot.cols) {
                let line: Vec<String> = row.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        let _ = writeln!(out, "end");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        CheckpointParser::new(text).parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

struct CheckpointParser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> CheckpointParser<'a> {
    fn new(text: &'a str) -> Self {
        CheckpointParser {
            lines: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line_no,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line_no = i + 1;
                Ok(l.trim())
            }
            None => {
                self.line_no += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn field(&mut self, key: &str) -> Result<u64> {
        let line = self.next_line()?;
        let value = line
            .strip_prefix(key)
            .and_then(|r| r.trim_start().strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected `{key} = ...`, found `{line}`")))?;
        value
            .trim()
            .parse()
            .map_err(|_| self.err(format!("field `{key}`: invalid integer `{}`", value.trim())))
    }

    fn hex(&self, token: &str, what: &str) -> Result<f64> {
        if token.len() != 16 {
            return Err(self.err(format!("{what}: expected 16 hex digits, found `{token}`")));
        }
        u64::from_str_radix(token, 16)
            .map(f64::from_bits)
            .map_err(|_| self.err(format!("{what}: invalid hex `{token}`")))
    }

    fn parse(mut self) -> Result<Checkpoint> {
        if self.next_line()? != CHECKPOINT_MAGIC {
            return Err(self.err("missing checkpoint header"));
        }
        let version = self.field("version")?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(self.err(format!("unsupported version {version}")));
        }
        let input_dim = self.field("input_dim")? as usize;
        let hidden_layers = self.field("hidden_layers")? as usize;
        let neurons = self.field("neurons_per_layer")? as usize;
        let seed = self.field("seed")?;
        let config = MlpConfig::new(input_dim, hidden_layers, neurons, seed).map_err(|e| self.err(e.to_string()))?;
        let layout = build_layout(&config);

        let mut extras = BTreeMap::new();
        let mut line = self.next_line()?;
        while let Some(rest) = line.strip_prefix("extra ") {
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| self.err(format!("malformed extra `{line}`")))?;
            let key = key.trim();
            let v = self.hex(value.trim(), &format!("extra `{key}`"))?;
            extras.insert(key.to_string(), v);
            line = self.next_line()?;
        }

        let mut values = Vec::with_capacity(config.param_count());
        for slot in &layout {
            let kind = match slot.kind {
                TensorKind::Weight => "weight",
                TensorKind::Bias => "bias",
            };
            let expected = format!(
                "tensor layer={} kind={kind} rows={} cols={}",
                slot.layer, slot.rows, slot.cols
            );
            if line != expected {
                return Err(self.err(format!("expected `{expected}`, found `{line}`")));
            }
            for r in 0..slot.rows {
                let row = self.next_line()?;
                let tokens: Vec<&str> = row.split_whitespace().collect();
                if tokens.len() != slot.cols {
                    return Err(self.err(format!(
                        "layer {} {kind} row {r}: expected {} values, found {}",
                        slot.layer,
                        slot.cols,
                        tokens.len()
                    )));
                }
                for (c, t) in tokens.into_iter().enumerate() {
                    values.push(self.hex(t, &format!("layer {} {kind} [{r},{c}]", slot.layer))?);
                }
            }
            line = self.next_line()?;
        }
        if line != "end" {
            return Err(self.err(format!("expected `end`, found `{line}`")));
        }
        Ok(Checkpoint {
            params: ParamSet::from_values(config, values)?,
            extras,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(input: usize, hidden: usize, n: usize) -> MlpConfig {
        MlpConfig::new(input, hidden, n, 9).unwrap()
    }

    #[test]
    fn param_count_closed_form() {
        // 1·20+20 + 20·20+20 + 20·1+1
        assert_eq!(cfg(1, 2, 20).param_count(), 481);
        assert_eq!(ParamSet::init(cfg(1, 2, 20)).unwrap().len(), 481);
        assert_eq!(cfg(2, 4, 80).param_count(), 2 * 80 + 80 + 3 * (80 * 80 + 80) + 81);
    }

    #[test]
    fn total_layer_convention() {
        let c = MlpConfig::from_total_layers(1, 3, 20, 0).unwrap();
        assert_eq!(c.hidden_layers, 2);
        assert_eq!(c.total_layers(), 3);
        assert!(MlpConfig::from_total_layers(1, 1, 20, 0).is_err());
        assert!(MlpConfig::new(3, 1, 4, 0).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = ParamSet::init(cfg(1, 2, 20)).unwrap();
        let b = ParamSet::init(cfg(1, 2, 20)).unwrap();
        assert_eq!(a, b);
        for layer in 0..a.layers() {
            assert!(a.bias(layer).iter().all(|&v| v == 0.0));
        }
        let c = ParamSet::init(MlpConfig::new(1, 2, 20, 10).unwrap()).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn layout_is_contiguous() {
        let p = ParamSet::init(cfg(2, 3, 7)).unwrap();
        let mut next = 0;
        for s in p.layout() {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert_eq!(next, p.len());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = ParamSet::zeros(cfg(2, 3, 5)).unwrap();
        assert_eq!(p.predict(&[0.3, 0.9]).unwrap(), 0.0);
        let mut tape = Tape::new();
        let m = p.on_tape(&mut tape).unwrap();
        let x = tape.input(0.1).unwrap();
        let t = tape.input(0.2).unwrap();
        assert_eq!(m.forward(&mut tape, &[x, t]).unwrap().value(), 0.0);
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let p = ParamSet::init(cfg(2, 2, 6)).unwrap();
        let mut tape = Tape::new();
        let m = p.on_tape(&mut tape).unwrap();
        let x = tape.input(0.25).unwrap();
        let t = tape.input(0.75).unwrap();
        let y = m.forward(&mut tape, &[x, t]).unwrap().value();
        let y2 = m.forward(&mut tape, &[x, t]).unwrap().value();
        assert_eq!(y, y2);
        assert!((y - p.predict(&[0.25, 0.75]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let p = ParamSet::init(cfg(1, 1, 3)).unwrap();
        assert!(matches!(p.predict(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        let mut tape = Tape::new();
        let m = p.on_tape(&mut tape).unwrap();
        assert!(m.forward(&mut tape, &[]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = ParamSet::init(cfg(2, 2, 4)).unwrap();
        let ck = Checkpoint::new(p.clone()).with_extra("D", 0.0999);
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.extras["D"], 0.0999);
        let q = back.params;
        let a = p.predict(&[0.1, 0.2]).unwrap();
        let b = q.predict(&[0.1, 0.2]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let ck = Checkpoint::new(ParamSet::init(cfg(1, 1, 3)).unwrap());
        let text = ck.to_text();
        let lines: Vec<&str> = text.lines().collect();
        for cut in 0..lines.len() {
            let partial = lines[..cut].join("\n");
            assert!(Checkpoint::from_text(&partial).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn malformed_value_reports_line() {
        let ck = Checkpoint::new(ParamSet::init(cfg(1, 1, 2)).unwrap());
        let text = ck.to_text().replacen("tensor layer=0 kind=weight rows=2 cols=1\n", "tensor layer=0 kind=weight rows=2 cols=1\nzz\n", 1);
        match Checkpoint::from_text(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 8);
                assert!(message.contains("layer 0 weight"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn input_derivative_matches_finite_difference() {
        let p = ParamSet::init(cfg(2, 3, 10)).unwrap();
        for &(x0, t0) in &[(0.1, 0.2), (0.5, 0.9), (0.8, 0.05)] {
            let mut tape = Tape::new();
            let m = p.on_tape(&mut tape).unwrap();
            let x = tape.input(x0).unwrap();
            let t = tape.input(t0).unwrap();
            let y = m.forward(&mut tape, &[x, t]).unwrap();
            let g = tape.grad(y, &[x, t]).unwrap();
            let h = 1e-5;
            let fd_x = (p.predict(&[x0 + h, t0]).unwrap() - p.predict(&[x0 - h, t0]).unwrap()) / (2.0 * h);
            let fd_t = (p.predict(&[x0, t0 + h]).unwrap() - p.predict(&[x0, t0 - h]).unwrap()) / (2.0 * h);
            for (ad, fd) in [(g[0].value(), fd_x), (g[1].value(), fd_t)] {
                assert!((ad - fd).abs() <= 1e-5 * ad.abs().max(1e-3), "{ad} vs {fd}");
            }
        }
    }

    #[test]
    fn init_variance_matches_xavier() {
        let p = ParamSet::init(cfg(2, 4, 80)).unwrap();
        for slot in p.layout().iter().filter(|s| s.kind == TensorKind::Weight && s.len() >= 400) {
            let w = &p.values()[slot.range()];
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let expected = 2.0 / (slot.rows + slot.cols) as f64;
            assert!((var / expected - 1.0).abs() < 0.2, "layer {}: {var} vs {expected}", slot.layer);
        }
    }

    proptest::proptest! {
        #[test]
        fn param_count_formula(input in 1usize..=2, hidden in 1usize..6, n in 1usize..40, seed: u64) {
            let c = MlpConfig::new(input, hidden, n, seed).unwrap();
            let expected = input * n + n + (hidden - 1) * (n * n + n) + n + 1;
            proptest::prop_assert_eq!(c.param_count(), expected);
            proptest::prop_assert_eq!(ParamSet::init(c).unwrap().len(), expected);
        }
    }
}
