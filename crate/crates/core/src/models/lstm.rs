use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::{check_rows, standardized, Adam, TrainConfig, TrainingCurve};
use crate::dataio::{FeatureLayout, FeatureMatrix, Standardizer, TargetMatrix};
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::seed::rng_for;

/// Per-output affine scaling of the COP targets seen by the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: [f64; 2],
    pub scale: [f64; 2],
}

impl TargetScaler {
    pub const IDENTITY: TargetScaler = TargetScaler { mean: [0.0; 2], scale: [1.0; 2] };

    pub fn fit(y: &TargetMatrix) -> Self {
        let n = y.rows().max(1) as f64;
        let mut mean = [0.0; 2];
        for t in &y.data {
            mean[0] += t[0] / n;
            mean[1] += t[1] / n;
        }
        let mut var = [0.0; 2];
        for t in &y.data {
            var[0] += (t[0] - mean[0]).powi(2) / n;
            var[1] += (t[1] - mean[1]).powi(2) / n;
        }
        let scale = var.map(|v| if v.sqrt() < 1e-12 { 1.0 } else { v.sqrt() });
        TargetScaler { mean, scale }
    }

    fn to_net(&self, t: [f64; 2]) -> [f64; 2] {
        [(t[0] - self.mean[0]) / self.scale[0], (t[1] - self.mean[1]) / self.scale[1]]
    }

    fn from_net(&self, z: [f64; 2]) -> [f64; 2] {
        [self.mean[0] + self.scale[0] * z[0], self.mean[1] + self.scale[1] * z[1]]
    }
}

/// Single-layer LSTM with a linear readout of the final hidden state.
///
/// Gate blocks are stacked in the order input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub units: usize,
    pub window: usize,
    pub input_dim: usize,
    /// 4U×D, row-major.
    pub w: Vec<f64>,
    /// 4U×U, row-major.
    pub r: Vec<f64>,
    /// 4U
    pub b: Vec<f64>,
    /// 2×U, row-major.
    pub w_out: Vec<f64>,
    pub b_out: [f64; 2],
    pub stats: Standardizer,
    pub target: TargetScaler,
    pub layout: FeatureLayout,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGradient {
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: [f64; 2],
}

impl LstmGradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w.len() + self.r.len() + self.b.len() + self.w_out.len() + 2);
        v.extend_from_slice(&self.w);
        v.extend_from_slice(&self.r);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&self.w_out);
        v.extend_from_slice(&self.b_out);
        v
    }
}

impl LstmModel {
    /// All-zero network with identity input and target scaling.
    pub fn zeros(input_dim: usize, units: usize, window: usize, layout: FeatureLayout) -> Self {
        LstmModel {
            units,
            window,
            input_dim,
            w: vec![0.0; 4 * units * input_dim],
            r: vec![0.0; 4 * units * units],
            b: vec![0.0; 4 * units],
            w_out: vec![0.0; 2 * units],
            b_out: [0.0; 2],
            stats: Standardizer::identity(input_dim),
            target: TargetScaler::IDENTITY,
            layout,
        }
    }

    /// Uniform(−1/√U, 1/√U) weights, zero biases except the forget gate at +1.
    pub fn init(input_dim: usize, units: usize, window: usize, layout: FeatureLayout, seed: u64) -> Self {
        let mut m = Self::zeros(input_dim, units, window, layout);
        let mut rng = rng_for(seed, "lstm-init", 0);
        let a = 1.0 / (units as f64).sqrt();
        for v in m.w.iter_mut().chain(m.r.iter_mut()).chain(m.w_out.iter_mut()) {
            *v = rng.random_range(-a..a);
        }
        m.b[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
        m
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.r.len() + self.b.len() + self.w_out.len() + 2
    }

    pub fn params(&self) -> Vec<f64> {
        LstmGradient { w: self.w.clone(), r: self.r.clone(), b: self.b.clone(), w_out: self.w_out.clone(), b_out: self.b_out }
            .flatten()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params());
        let (w, rest) = p.split_at(self.w.len());
        let (r, rest) = rest.split_at(self.r.len());
        let (b, rest) = rest.split_at(self.b.len());
        let (wo, bo) = rest.split_at(self.w_out.len());
        self.w.copy_from_slice(w);
        self.r.copy_from_slice(r);
        self.b.copy_from_slice(b);
        self.w_out.copy_from_slice(wo);
        self.b_out = [bo[0], bo[1]];
    }

    fn check(&self) -> Result<()> {
        let (u, d) = (self.units, self.input_dim);
        let ok = u >= 1
            && self.window >= 1
            && self.w.len() == 4 * u * d
            && self.r.len() == 4 * u * u
            && self.b.len() == 4 * u
            && self.w_out.len() == 2 * u
            && self.stats.dim() == d;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("inconsistent LSTM parameter shapes".into()))
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one batch, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmCache {
    batch: usize,
    steps: usize,
    /// steps × batch × D, time-major
    x: Vec<f64>,
    /// steps × batch × 4U, after the nonlinearities
    gates: Vec<f64>,
    /// (steps + 1) × batch × U, index 0 is the zero initial state
    c: Vec<f64>,
    h: Vec<f64>,
    /// steps × batch × U
    tanh_c: Vec<f64>,
    /// batch × 2, network units
    pub out: Vec<f64>,
}

/// Runs a batch of `batch` windows of `steps` samples stored time-major in `x`.
fn forward_batch(m: &LstmModel, x: Vec<f64>, batch: usize, steps: usize) -> LstmCache {
    let (u, d) = (m.units, m.input_dim);
    let g4 = 4 * u;
    let bu = batch * u;
    let mut gates = vec![0.0; steps * batch * g4];
    let mut c = vec![0.0; (steps + 1) * bu];
    let mut h = vec![0.0; (steps + 1) * bu];
    let mut tanh_c = vec![0.0; steps * bu];
    for t in 0..steps {
        let z = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        for row in z.chunks_exact_mut(g4) {
            row.copy_from_slice(&m.b);
        }
        gemm(batch, d, g4, 1.0, &x[t * batch * d..(t + 1) * batch * d], false, &m.w, true, 1.0, z);
        gemm(batch, u, g4, 1.0, &h[t * bu..(t + 1) * bu], false, &m.r, true, 1.0, z);
        let (c_prev, c_next) = c.split_at_mut((t + 1) * bu);
        let c_prev = &c_prev[t * bu..];
        let c_next = &mut c_next[..bu];
        let h_next = &mut h[(t + 1) * bu..(t + 2) * bu];
        let tc = &mut tanh_c[t * bu..(t + 1) * bu];
        for bi in 0..batch {
            let zr = &mut z[bi * g4..(bi + 1) * g4];
            for j in 0..u {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[u + j]);
                let g = zr[2 * u + j].tanh();
                let o = sigmoid(zr[3 * u + j]);
                zr[j] = i;
                zr[u + j] = f;
                zr[2 * u + j] = g;
                zr[3 * u + j] = o;
                let k = bi * u + j;
                let cn = f * c_prev[k] + i * g;
                c_next[k] = cn;
                tc[k] = cn.tanh();
                h_next[k] = o * tc[k];
            }
        }
    }
    let mut out: Vec<f64> = (0..batch).flat_map(|_| m.b_out).collect();
    gemm(batch, u, 2, 1.0, &h[steps * bu..], false, &m.w_out, true, 1.0, &mut out);
    LstmCache { batch, steps, x, gates, c, h, tanh_c, out }
}

/// Backpropagation through time for output gradient `dy` (batch × 2).
fn backward(m: &LstmModel, cache: &LstmCache, dy: &[f64]) -> LstmGradient {
    let (u, d) = (m.units, m.input_dim);
    let (batch, steps) = (cache.batch, cache.steps);
    let g4 = 4 * u;
    let bu = batch * u;
    let mut grad = LstmGradient {
        w: vec![0.0; m.w.len()],
        r: vec![0.0; m.r.len()],
        b: vec![0.0; m.b.len()],
        w_out: vec![0.0; m.w_out.len()],
        b_out: [0.0; 2],
    };
    gemm(2, batch, u, 1.0, dy, true, &cache.h[steps * bu..], false, 0.0, &mut grad.w_out);
    for r in dy.chunks_exact(2) {
        grad.b_out[0] += r[0];
        grad.b_out[1] += r[1];
    }
    let mut dh = vec![0.0; bu];
    gemm(batch, 2, u, 1.0, dy, false, &m.w_out, false, 0.0, &mut dh);
    let mut dc = vec![0.0; bu];
    let mut dz = vec![0.0; batch * g4];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * batch * g4..(t + 1) * batch * g4];
        let c_prev = &cache.c[t * bu..(t + 1) * bu];
        let tc = &cache.tanh_c[t * bu..(t + 1) * bu];
        for bi in 0..batch {
            let gr = &gates[bi * g4..(bi + 1) * g4];
            let dzr = &mut dz[bi * g4..(bi + 1) * g4];
            for j in 0..u {
                let k = bi * u + j;
                let (i, f, g, o) = (gr[j], gr[u + j], gr[2 * u + j], gr[3 * u + j]);
                let dck = dc[k] + dh[k] * o * (1.0 - tc[k] * tc[k]);
                dzr[j] = dck * g * i * (1.0 - i);
                dzr[u + j] = dck * c_prev[k] * f * (1.0 - f);
                dzr[2 * u + j] = dck * i * (1.0 - g * g);
                dzr[3 * u + j] = dh[k] * tc[k] * o * (1.0 - o);
                dc[k] = dck * f;
            }
        }
        gemm(g4, batch, d, 1.0, &dz, true, &cache.x[t * batch * d..(t + 1) * batch * d], false, 1.0, &mut grad.w);
        gemm(g4, batch, u, 1.0, &dz, true, &cache.h[t * bu..(t + 1) * bu], false, 1.0, &mut grad.r);
        for row in dz.chunks_exact(g4) {
            for (gb, v) in grad.b.iter_mut().zip(row) {
                *gb += v;
            }
        }
        if t > 0 {
            gemm(batch, g4, u, 1.0, &dz, false, &m.r, false, 0.0, &mut dh);
        }
    }
    grad
}

fn time_major(windows: &[&[f64]], steps: usize, d: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(windows.len() * steps * d);
    for t in 0..steps {
        for w in windows {
            x.extend_from_slice(&w[t * d..(t + 1) * d]);
        }
    }
    x
}

fn check_window(m: &LstmModel, window: &[f64]) -> Result<()> {
    let expected = m.window * m.input_dim;
    if window.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: window.len() });
    }
    Ok(())
}

/// Prediction for one T×D window (row-major, oldest sample first), in mm.
///
/// The window is taken as already standardized with the model's statistics.
pub fn lstm_forward(window: &[f64], model: &LstmModel) -> Result<([f64; 2], LstmCache)> {
    model.check()?;
    check_window(model, window)?;
    let cache = forward_batch(model, time_major(&[window], model.window, model.input_dim), 1, model.window);
    let y = model.target.from_net([cache.out[0], cache.out[1]]);
    Ok((y, cache))
}

/// Mean over the batch and both outputs of the squared error, in network units.
pub fn lstm_loss(windows: &[&[f64]], targets: &[[f64; 2]], model: &LstmModel) -> Result<f64> {
    model.check()?;
    for w in windows {
        check_window(model, w)?;
    }
    let cache = forward_batch(model, time_major(windows, model.window, model.input_dim), windows.len(), model.window);
    Ok(squared_error(&cache.out, targets, &model.target) / (2 * windows.len()) as f64)
}

fn squared_error(out: &[f64], targets: &[[f64; 2]], scaler: &TargetScaler) -> f64 {
    out.chunks_exact(2)
        .zip(targets)
        .map(|(o, t)| {
            let z = scaler.to_net(*t);
            (o[0] - z[0]).powi(2) + (o[1] - z[1]).powi(2)
        })
        .sum()
}

fn output_grad(out: &[f64], targets: &[[f64; 2]], scaler: &TargetScaler) -> Vec<f64> {
    let scale = 1.0 / targets.len() as f64;
    out.chunks_exact(2)
        .zip(targets)
        .flat_map(|(o, t)| {
            let z = scaler.to_net(*t);
            [(o[0] - z[0]) * scale, (o[1] - z[1]) * scale]
        })
        .collect()
}

/// Exact gradient of [`lstm_loss`] by backpropagation through time.
pub fn lstm_gradient(windows: &[&[f64]], targets: &[[f64; 2]], model: &LstmModel) -> Result<LstmGradient> {
    model.check()?;
    if windows.len() != targets.len() || windows.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} windows vs {} targets", windows.len(), targets.len())));
    }
    for w in windows {
        check_window(model, w)?;
    }
    let cache = forward_batch(model, time_major(windows, model.window, model.input_dim), windows.len(), model.window);
    Ok(backward(model, &cache, &output_grad(&cache.out, targets, &model.target)))
}

/// Rows that end a full window inside their contiguous segment.
pub fn window_ends(x: &FeatureMatrix, window: usize) -> Vec<usize> {
    x.segments.iter().flat_map(|s| (s.start + window - 1).max(s.start)..s.end).collect()
}

fn gather(x: &[f64], d: usize, ends: &[usize], steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ends.len() * steps * d);
    for t in 0..steps {
        for &e in ends {
            let r = e + 1 + t - steps;
            out.extend_from_slice(&x[r * d..(r + 1) * d]);
        }
    }
    out
}

/// Mini-batch ADAM with train-MSE early stopping; returns the best epoch's parameters.
fn train(
    model: &mut LstmModel,
    x: &[f64],
    targets: &[[f64; 2]],
    mut ends: Vec<usize>,
    cfg: &TrainConfig,
    stream: u64,
) -> Result<TrainingCurve> {
    if ends.is_empty() {
        return Err(Error::Empty(format!("no complete windows of {} samples", model.window)));
    }
    let d = model.input_dim;
    let steps = model.window;
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = rng_for(cfg.seed, "lstm-shuffle", stream);
    let mut curve = TrainingCurve::default();
    let mut best = (f64::INFINITY, params.clone());
    let mut stale = 0;
    let mut batch_targets = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.max_epochs {
        ends.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in ends.chunks(cfg.batch_size) {
            batch_targets.clear();
            batch_targets.extend(chunk.iter().map(|&e| targets[e]));
            let cache = forward_batch(model, gather(x, d, chunk, steps), chunk.len(), steps);
            sse += squared_error(&cache.out, &batch_targets, &model.target);
            let g = backward(model, &cache, &output_grad(&cache.out, &batch_targets, &model.target));
            adam.step(&mut params, &g.flatten());
            model.set_params(&params);
        }
        let loss = sse / (2 * ends.len()) as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite training loss at epoch {epoch}")));
        }
        log::debug!("lstm epoch {epoch}: train mse {loss:.6e}");
        curve.epoch_loss.push(loss);
        if loss < best.0 - cfg.min_delta {
            best = (loss, params.clone());
            curve.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.set_params(&best.1);
    Ok(curve)
}

/// Trains a fresh LSTM on per-sample (history 0) features. Windows of
/// `cfg.window` consecutive rows never cross segment boundaries.
pub fn fit_lstm(x: &FeatureMatrix, y: &TargetMatrix, cfg: &TrainConfig) -> Result<(LstmModel, TrainingCurve)> {
    check_rows(x, y)?;
    cfg.validate()?;
    let mut model = LstmModel::init(x.cols, cfg.units, cfg.window, x.layout, cfg.seed);
    model.stats = x.stats.clone().unwrap_or_else(|| Standardizer::identity(x.cols));
    model.target = TargetScaler::fit(y);
    let curve = train(&mut model, &x.data, &y.data, window_ends(x, cfg.window), cfg, 0)?;
    Ok((model, curve))
}

/// Continues training from the current parameters on calibration data only.
pub fn fine_tune_lstm(
    model: &LstmModel,
    x: &FeatureMatrix,
    y: &TargetMatrix,
    cfg: &TrainConfig,
) -> Result<(LstmModel, TrainingCurve)> {
    if x.cols != model.input_dim {
        return Err(Error::DimensionMismatch { expected: model.input_dim, found: x.cols });
    }
    check_rows(x, y)?;
    cfg.validate()?;
    let xs = standardized(x, &model.stats)?;
    let mut tuned = model.clone();
    let curve = train(&mut tuned, &xs.data, &y.data, window_ends(&xs, model.window), cfg, 1)?;
    Ok((tuned, curve))
}

const PREDICT_BATCH: usize = 512;

/// Predicts every row; rows with less than a full window of context inside
/// their segment use the shorter available window.
pub fn predict_lstm(model: &LstmModel, x: &FeatureMatrix) -> Result<TargetMatrix> {
    model.check()?;
    if x.cols != model.input_dim {
        return Err(Error::DimensionMismatch { expected: model.input_dim, found: x.cols });
    }
    let xs = standardized(x, &model.stats)?;
    let d = model.input_dim;
    let mut by_len: Vec<Vec<usize>> = vec![Vec::new(); model.window + 1];
    let covered: usize = xs.segments.iter().map(|s| s.len()).sum();
    if covered != xs.rows {
        return Err(Error::ShapeMismatch("feature segments do not cover every row".into()));
    }
    for s in &xs.segments {
        for r in s.clone() {
            by_len[(r - s.start + 1).min(model.window)].push(r);
        }
    }
    let mut out = vec![[0.0; 2]; xs.rows];
    for (len, rows) in by_len.iter().enumerate().skip(1) {
        for chunk in rows.chunks(PREDICT_BATCH) {
            let cache = forward_batch(model, gather(&xs.data, d, chunk, len), chunk.len(), len);
            for (&r, o) in chunk.iter().zip(cache.out.chunks_exact(2)) {
                out[r] = model.target.from_net([o[0], o[1]]);
            }
        }
    }
    Ok(TargetMatrix::new(out))
}
