use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_rows, standardized, TrainConfig};
use crate::dataio::{FeatureLayout, FeatureMatrix, Standardizer, TargetMatrix};
use crate::error::{Error, Result};
use crate::linalg::gemm;

pub const DEFAULT_RIDGE: f64 = 0.1;

/// Affine map from features to COP. `weights` has `D + 1` rows, bias last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<[f64; 2]>,
    pub stats: Standardizer,
    pub layout: FeatureLayout,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn bias(&self) -> [f64; 2] {
        self.weights[self.dim()]
    }
}

/// Sufficient statistics of a centred least-squares problem.
struct Moments {
    mean_x: Vec<f64>,
    mean_y: [f64; 2],
    /// D×D, row-major: Σ (x − x̄)(x − x̄)ᵀ
    gram: Vec<f64>,
    /// D×2: Σ (x − x̄)(y − ȳ)ᵀ
    cross: Vec<f64>,
    n: usize,
}

impl Moments {
    /// Squared column scales as the standardizer would compute them.
    fn penalty_weights(&self) -> Vec<f64> {
        let d = self.mean_x.len();
        (0..d).map(|i| column_penalty(self.gram[i * d + i] / self.n as f64)).collect()
    }
}

/// Ridge weight of a column with variance `var`: the penalty is measured in
/// z-score units so that fits do not depend on whether inputs were standardized.
fn column_penalty(var: f64) -> f64 {
    let sd = var.max(0.0).sqrt();
    if sd < 1e-12 {
        1.0
    } else {
        var
    }
}

const CHUNK: usize = 2048;

fn moments(x: &FeatureMatrix, y: &TargetMatrix) -> Moments {
    let (n, d) = (x.rows, x.cols);
    let mut mean_x = vec![0.0; d];
    if d > 0 {
        for row in x.data.chunks_exact(d) {
            for (m, v) in mean_x.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= n as f64);
    let mut mean_y = [0.0; 2];
    for t in &y.data {
        mean_y[0] += t[0] / n as f64;
        mean_y[1] += t[1] / n as f64;
    }
    let mut gram = vec![0.0; d * d];
    let mut cross = vec![0.0; d * 2];
    if d > 0 {
        let mut xc = Vec::with_capacity(CHUNK * d);
        let mut yc = Vec::with_capacity(CHUNK * 2);
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            xc.clear();
            yc.clear();
            for r in start..end {
                xc.extend(x.row(r).iter().zip(&mean_x).map(|(v, m)| v - m));
                yc.push(y.data[r][0] - mean_y[0]);
                yc.push(y.data[r][1] - mean_y[1]);
            }
            let rows = end - start;
            gemm(d, rows, d, 1.0, &xc, true, &xc, false, 1.0, &mut gram);
            gemm(d, rows, 2, 1.0, &xc, true, &yc, false, 1.0, &mut cross);
        }
    }
    Moments { mean_x, mean_y, gram, cross, n }
}

/// Solves `(gram + diag)·w = rhs` for a symmetric positive-definite system.
fn spd_solve(d: usize, mut gram: Vec<f64>, diag: &[f64], rhs: Vec<f64>) -> Result<Vec<f64>> {
    if d == 0 {
        return Ok(Vec::new());
    }
    for i in 0..d {
        gram[i * d + i] += diag[i];
    }
    let scale = (0..d).map(|i| gram[i * d + i]).fold(0.0f64, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::SingularSystem);
    }
    let a = DMatrix::from_row_slice(d, d, &gram);
    let chol = a.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-13 * scale {
        return Err(Error::SingularSystem);
    }
    let b = DMatrix::from_row_slice(d, 2, &rhs);
    let w = chol.solve(&b);
    Ok((0..d).flat_map(|i| [w[(i, 0)], w[(i, 1)]]).collect())
}

fn assemble(w: Vec<f64>, m: &Moments, stats: Standardizer, layout: FeatureLayout) -> LinearModel {
    let d = m.mean_x.len();
    let mut weights: Vec<[f64; 2]> = (0..d).map(|i| [w[2 * i], w[2 * i + 1]]).collect();
    let mut bias = m.mean_y;
    for (wi, mi) in weights.iter().zip(&m.mean_x) {
        bias[0] -= wi[0] * mi;
        bias[1] -= wi[1] * mi;
    }
    weights.push(bias);
    LinearModel { weights, stats, layout }
}

fn model_stats(x: &FeatureMatrix) -> Standardizer {
    x.stats.clone().unwrap_or_else(|| Standardizer::identity(x.cols))
}

/// Least squares with ridge penalty `ridge·Σ (s_j·w_j)²` on the weights (not
/// the bias), solved through the centred normal equations. `s_j` is the column
/// standard deviation (1 for constant columns), so on standardized inputs the
/// penalty is plain `ridge·‖w‖²`.
pub fn fit_linear_exact(x: &FeatureMatrix, y: &TargetMatrix, ridge: f64) -> Result<LinearModel> {
    check_rows(x, y)?;
    if !(ridge >= 0.0) {
        return Err(Error::ConfigInvalid(format!("ridge must be ≥ 0, got {ridge}")));
    }
    let m = moments(x, y);
    let diag: Vec<f64> = m.penalty_weights().iter().map(|p| ridge * p).collect();
    let w = spd_solve(x.cols, m.gram.clone(), &diag, m.cross.clone())?;
    Ok(assemble(w, &m, model_stats(x), x.layout))
}

/// Full-batch gradient descent on `(‖Xw + b − Y‖² + ridge·Σ (s_j·w_j)²) / N`,
/// the same objective as [`fit_linear_exact`].
///
/// Runs up to `cfg.max_epochs` iterations with step `cfg.learning_rate` and stops
/// early once the gradient vanishes.
pub fn fit_linear_gd(x: &FeatureMatrix, y: &TargetMatrix, ridge: f64, cfg: &TrainConfig) -> Result<LinearModel> {
    check_rows(x, y)?;
    cfg.validate()?;
    let (n, d) = (x.rows, x.cols);
    let nf = n as f64;
    let yflat: Vec<f64> = y.data.iter().flat_map(|t| *t).collect();
    let mut w = vec![0.0; d * 2];
    let mut b = [0.0; 2];
    let mut resid = vec![0.0; n * 2];
    let mut grad = vec![0.0; d * 2];
    let pen: Vec<f64> = {
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        if d > 0 {
            for row in x.data.chunks_exact(d) {
                mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / nf);
            }
            for row in x.data.chunks_exact(d) {
                var.iter_mut().zip(row).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / nf);
            }
        }
        var.into_iter().map(|v| ridge * column_penalty(v)).collect()
    };

    let objective = |w: &[f64], b: [f64; 2], resid: &mut [f64]| -> f64 {
        resid.copy_from_slice(&yflat);
        resid.iter_mut().for_each(|r| *r = -*r);
        gemm(n, d, 2, 1.0, &x.data, false, w, false, 1.0, resid);
        for r in resid.chunks_exact_mut(2) {
            r[0] += b[0];
            r[1] += b[1];
        }
        let penalty: f64 = w.chunks_exact(2).zip(&pen).map(|(c, p)| p * (c[0] * c[0] + c[1] * c[1])).sum();
        (resid.iter().map(|r| r * r).sum::<f64>() + penalty) / nf
    };

    let j0 = objective(&w, b, &mut resid);
    let lr = cfg.learning_rate;
    for it in 0..cfg.max_epochs {
        if it > 0 {
            let j = objective(&w, b, &mut resid);
            if !j.is_finite() || j > 1e3 * j0.max(f64::MIN_POSITIVE) {
                return Err(Error::Diverged(format!("objective {j:.3e} at iteration {it} (initial {j0:.3e})")));
            }
        }
        gemm(d, n, 2, 2.0 / nf, &x.data, true, &resid, false, 0.0, &mut grad);
        for (i, (g, wi)) in grad.iter_mut().zip(&w).enumerate() {
            *g += 2.0 * pen[i / 2] / nf * wi;
        }
        let mut gb = [0.0; 2];
        for r in resid.chunks_exact(2) {
            gb[0] += 2.0 * r[0] / nf;
            gb[1] += 2.0 * r[1] / nf;
        }
        let gnorm = grad.iter().chain(&gb).map(|g| g * g).sum::<f64>().sqrt();
        let pnorm = w.iter().chain(&b).map(|p| p * p).sum::<f64>().sqrt();
        if gnorm <= 1e-13 * (1.0 + pnorm) {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= lr * g;
        }
        b[0] -= lr * gb[0];
        b[1] -= lr * gb[1];
    }
    let j = objective(&w, b, &mut resid);
    if !j.is_finite() || j > 1e3 * j0.max(f64::MIN_POSITIVE) {
        return Err(Error::Diverged(format!("objective {j:.3e} (initial {j0:.3e})")));
    }
    let mut weights: Vec<[f64; 2]> = w.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    weights.push(b);
    Ok(LinearModel { weights, stats: model_stats(x), layout: x.layout })
}

pub fn predict_linear(model: &LinearModel, x: &FeatureMatrix) -> Result<TargetMatrix> {
    if x.cols != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: x.cols });
    }
    let xs = standardized(x, &model.stats)?;
    let d = model.dim();
    let w: Vec<f64> = model.weights[..d].iter().flat_map(|r| *r).collect();
    let b = model.bias();
    let mut out: Vec<f64> = (0..xs.rows).flat_map(|_| b).collect();
    gemm(xs.rows, d, 2, 1.0, &xs.data, false, &w, false, 1.0, &mut out);
    Ok(TargetMatrix::new(out.chunks_exact(2).map(|c| [c[0], c[1]]).collect()))
}

/// Refit on calibration data anchored to the current weights:
/// minimizes `‖Xw + b − Y‖² / N + λ‖w − w_prior‖²` with the bias free.
pub fn fine_tune_linear(
    model: &LinearModel,
    x: &FeatureMatrix,
    y: &TargetMatrix,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    if x.cols != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: x.cols });
    }
    check_rows(x, y)?;
    let xs = standardized(x, &model.stats)?;
    let m = moments(&xs, y);
    let (d, nf) = (model.dim(), m.n as f64);
    let lambda = cfg.prior_strength;
    let gram: Vec<f64> = m.gram.iter().map(|g| g / nf).collect();
    let rhs: Vec<f64> = m
        .cross
        .iter()
        .enumerate()
        .map(|(i, c)| c / nf + lambda * model.weights[i / 2][i % 2])
        .collect();
    let w = spd_solve(d, gram, &vec![lambda; d], rhs)?;
    Ok(assemble(w, &m, model.stats.clone(), model.layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::ChannelSelection;
    use crate::types::{Constellation, SensorId};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout() -> FeatureLayout {
        FeatureLayout::new(Constellation::single(SensorId::Back), ChannelSelection::gam())
    }

    fn problem(n: usize, d: usize, noise: f64, seed: u64) -> (FeatureMatrix, TargetMatrix, Vec<[f64; 2]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<[f64; 2]> = (0..=d).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = FeatureMatrix::from_rows(layout(), d, data).unwrap();
        let y = (0..n)
            .map(|r| {
                let mut t = w[d];
                for (j, v) in x.row(r).iter().enumerate() {
                    t[0] += w[j][0] * v;
                    t[1] += w[j][1] * v;
                }
                [t[0] + noise * rng.random_range(-1.0..1.0), t[1] + noise * rng.random_range(-1.0..1.0)]
            })
            .collect();
        (x, TargetMatrix::new(y), w)
    }

    fn mse(m: &LinearModel, x: &FeatureMatrix, y: &TargetMatrix) -> f64 {
        let p = predict_linear(m, x).unwrap();
        p.data.iter().zip(&y.data).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum::<f64>()
            / (2 * y.rows()) as f64
    }

    #[test]
    fn recovers_noiseless_weights() {
        let (x, y, w) = problem(300, 12, 0.0, 1);
        let m = fit_linear_exact(&x, &y, 0.0).unwrap();
        for (a, b) in m.weights.iter().zip(&w) {
            assert!((a[0] - b[0]).abs() <= 1e-8 * b[0].abs().max(1.0));
            assert!((a[1] - b[1]).abs() <= 1e-8 * b[1].abs().max(1.0));
        }
    }

    #[test]
    fn zero_features_give_intercept_only() {
        let x = FeatureMatrix::from_rows(layout(), 3, vec![0.0; 30]).unwrap();
        let y = TargetMatrix::new((0..10).map(|i| [i as f64, 2.0 * i as f64]).collect());
        let m = fit_linear_exact(&x, &y, DEFAULT_RIDGE).unwrap();
        assert!(m.weights[..3].iter().all(|w| *w == [0.0, 0.0]));
        assert!((m.bias()[0] - 4.5).abs() < 1e-12 && (m.bias()[1] - 9.0).abs() < 1e-12);
        assert!(matches!(fit_linear_exact(&x, &y, 0.0), Err(Error::SingularSystem)));
        let gd = fit_linear_gd(&x, &y, DEFAULT_RIDGE, &TrainConfig { learning_rate: 0.4, max_epochs: 500, ..Default::default() })
            .unwrap();
        assert!((gd.bias()[0] - 4.5).abs() < 1e-9 && (gd.bias()[1] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn solution_beats_random_perturbations() {
        let (x, y, _) = problem(500, 20, 0.5, 2);
        let m = fit_linear_exact(&x, &y, DEFAULT_RIDGE).unwrap();
        let best = mse(&m, &x, &y);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut p = m.clone();
            for w in &mut p.weights {
                w[0] += rng.random_range(-1e-3..1e-3);
                w[1] += rng.random_range(-1e-3..1e-3);
            }
            assert!(best <= mse(&p, &x, &y));
        }
    }

    #[test]
    fn residuals_orthogonal_to_features() {
        let (x, y, _) = problem(400, 8, 1.0, 4);
        let m = fit_linear_exact(&x, &y, 0.0).unwrap();
        let p = predict_linear(&m, &x).unwrap();
        for j in 0..8 {
            let dot: [f64; 2] = (0..x.rows).fold([0.0, 0.0], |acc, r| {
                let v = x.row(r)[j];
                [acc[0] + v * (y.data[r][0] - p.data[r][0]), acc[1] + v * (y.data[r][1] - p.data[r][1])]
            });
            assert!(dot[0].abs() < 1e-6 && dot[1].abs() < 1e-6, "{dot:?}");
        }
    }

    #[test]
    fn gradient_descent_matches_exact() {
        let (x, y, _) = problem(200, 10, 0.3, 5);
        let exact = fit_linear_exact(&x, &y, DEFAULT_RIDGE).unwrap();
        let cfg = TrainConfig { learning_rate: 0.5, max_epochs: 20_000, ..Default::default() };
        let gd = fit_linear_gd(&x, &y, DEFAULT_RIDGE, &cfg).unwrap();
        let diff: f64 = exact.weights.iter().zip(&gd.weights).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum();
        let norm: f64 = exact.weights.iter().map(|a| a[0] * a[0] + a[1] * a[1]).sum();
        assert!((diff / norm).sqrt() < 1e-6);
        let cfg = TrainConfig { learning_rate: 10.0, max_epochs: 1000, ..Default::default() };
        assert!(matches!(fit_linear_gd(&x, &y, DEFAULT_RIDGE, &cfg), Err(Error::Diverged(_))));
    }

    #[test]
    fn predict_checks_dimension_and_evaluates() {
        let m = LinearModel {
            weights: vec![[2.0, 0.0], [1.0, 0.0]],
            stats: Standardizer::identity(1),
            layout: layout(),
        };
        let x = FeatureMatrix::from_rows(layout(), 1, vec![3.0]).unwrap();
        assert_eq!(predict_linear(&m, &x).unwrap().data, vec![[7.0, 0.0]]);
        let x2 = FeatureMatrix::from_rows(layout(), 2, vec![3.0, 1.0]).unwrap();
        assert!(matches!(predict_linear(&m, &x2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn standardization_is_absorbed() {
        // give columns very different scales and offsets
        let distort = |x: &mut FeatureMatrix| {
            for r in 0..x.rows {
                for j in 0..6 {
                    x.data[r * 6 + j] = x.data[r * 6 + j] * 10f64.powi(j as i32 - 2) + 9.81 * j as f64;
                }
            }
        };
        let (mut x, y, _) = problem(300, 6, 0.5, 6);
        let (mut test, _, _) = problem(50, 6, 0.5, 7);
        distort(&mut x);
        distort(&mut test);
        // the ridge penalty is not scale invariant, so compare the plain least-squares fits
        let raw = fit_linear_exact(&x, &y, 0.0).unwrap();
        let (xs, others, _) = crate::dataio::standardize(&x, &[&test]).unwrap();
        let std_model = fit_linear_exact(&xs, &y, 0.0).unwrap();
        let a = predict_linear(&raw, &test).unwrap();
        let b = predict_linear(&std_model, &others[0]).unwrap();
        let c = predict_linear(&std_model, &test).unwrap();
        for ((p, q), r) in a.data.iter().zip(&b.data).zip(&c.data) {
            assert!((p[0] - q[0]).abs() < 1e-8 && (p[1] - q[1]).abs() < 1e-8, "{p:?} {q:?}");
            assert_eq!(q, r);
        }
    }

    #[test]
    fn standardization_is_absorbed_on_gait_features() {
        use crate::dataio::{build_features, standardize};
        use crate::synthgait::{generate_recording, SynthGaitConfig};
        let rec = generate_recording(&SynthGaitConfig::with_duration(40.0)).unwrap().into_pelvis_frame().unwrap();
        let (x, y) = build_features(&rec.slice(0..3000), Constellation::FULL, ChannelSelection::gam()).unwrap();
        let (xt, _) = build_features(&rec.slice(3000..4000), Constellation::FULL, ChannelSelection::gam()).unwrap();
        let raw = fit_linear_exact(&x, &y, DEFAULT_RIDGE).unwrap();
        let (xs, others, _) = standardize(&x, &[&xt]).unwrap();
        let std_model = fit_linear_exact(&xs, &y, DEFAULT_RIDGE).unwrap();
        let a = predict_linear(&raw, &xt).unwrap();
        let b = predict_linear(&std_model, &others[0]).unwrap();
        let worst = a.data.iter().zip(&b.data).map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs())).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn fine_tune_adapts_offset() {
        let (x, y, _) = problem(1000, 5, 0.5, 8);
        let m = fit_linear_exact(&x, &y, DEFAULT_RIDGE).unwrap();
        let (cx, cy, _) = problem(300, 5, 0.5, 9);
        let shifted = TargetMatrix::new(cy.data.iter().map(|t| [t[0] + 15.0, t[1]]).collect());
        let tuned = fine_tune_linear(&m, &cx, &shifted, &TrainConfig::default()).unwrap();
        let (tx, ty, _) = problem(500, 5, 0.5, 10);
        let ty = TargetMatrix::new(ty.data.iter().map(|t| [t[0] + 15.0, t[1]]).collect());
        let mean_resid = |m: &LinearModel| {
            let p = predict_linear(m, &tx).unwrap();
            p.data.iter().zip(&ty.data).map(|(a, b)| b[0] - a[0]).sum::<f64>() / ty.rows() as f64
        };
        assert!(mean_resid(&tuned).abs() <= 0.2 * mean_resid(&m).abs());
        let empty = FeatureMatrix::from_rows(layout(), 5, vec![]).unwrap();
        assert!(fine_tune_linear(&m, &empty, &TargetMatrix::default(), &TrainConfig::default()).is_err());
    }
}
