use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::ParamSet;
use crate::numcore::Tensor;
use crate::training::{adam_step, AdamHyper, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogRegConfig {
    /// Weight on `½‖W‖²`; the bias is not penalized.
    pub l2: f64,
    pub learning_rate: f64,
    /// Full-batch optimizer steps.
    pub epochs: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { l2: 1e-3, learning_rate: 0.05, epochs: 400 }
    }
}

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogReg {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `D × C`.
    pub weights: Tensor,
    pub bias: Tensor,
}

fn standardize(x: &Tensor, mean: &[f64], scale: &[f64]) -> Result<Tensor> {
    let [_, d] = x.shape() else {
        return Err(invalid(format!("features must be N×D, got {:?}", x.shape())));
    };
    if *d != mean.len() {
        return Err(Error::ShapeMismatch { op: "logreg features", left: vec![mean.len()], right: vec![*d] });
    }
    let data = x.data().chunks(*d).flat_map(|r| r.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

fn softmax_rows(logits: &mut [f64], c: usize) {
    for row in logits.chunks_mut(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
}

fn probabilities(xs: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut z = xs.matmul(w)?.into_data();
    let c = b.len();
    for row in z.chunks_mut(c) {
        for (v, bi) in row.iter_mut().zip(b.data()) {
            *v += bi;
        }
    }
    softmax_rows(&mut z, c);
    Tensor::new(vec![xs.shape()[0], c], z)
}

/// Mean cross-entropy plus `l2/2·‖W‖²`, and its gradients for (W, b).
fn loss_and_grads(xs: &Tensor, y: &[usize], w: &Tensor, b: &Tensor, l2: f64) -> Result<(f64, Tensor, Tensor)> {
    let p = probabilities(xs, w, b)?;
    let (n, c) = (y.len(), b.len());
    let mut g = p.data().to_vec();
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        loss -= p.data()[i * c + yi].max(f64::MIN_POSITIVE).ln();
        g[i * c + yi] -= 1.0;
    }
    for v in &mut g {
        *v /= n as f64;
    }
    let g = Tensor::new(vec![n, c], g)?;
    let dw = xs.transpose2()?.matmul(&g)?.add(&w.scale(l2)?)?;
    let db = g.sum_batch()?;
    let penalty = 0.5 * l2 * w.data().iter().map(|v| v * v).sum::<f64>();
    Ok((loss / n as f64 + penalty, dw, db))
}

/// Fits by full-batch adaptive-moment descent from zero weights.
pub fn train_logreg(features: &Tensor, labels: &[usize], n_classes: usize, cfg: &LogRegConfig) -> Result<LogReg> {
    let [n, d] = features.shape() else {
        return Err(invalid(format!("features must be N×D, got {:?}", features.shape())));
    };
    let (n, d) = (*n, *d);
    if labels.len() != n || n == 0 {
        return Err(invalid(format!("{} labels for {n} feature rows", labels.len())));
    }
    if !(cfg.l2 >= 0.0 && cfg.l2.is_finite()) || !(cfg.learning_rate > 0.0) {
        return Err(invalid("logreg l2 must be >= 0 and the learning rate > 0"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(invalid(format!("label {bad} out of range for {n_classes} classes")));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::Data("logistic regression needs at least two distinct classes".into()));
    }
    let mut mean = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for row in features.data().chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    for row in features.data().chunks(d) {
        for ((s, m), v) in scale.iter_mut().zip(&mean).zip(row) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let xs = standardize(features, &mean, &scale)?;
    let mut params: ParamSet =
        [("w".to_string(), Tensor::zeros([d, n_classes])), ("b".to_string(), Tensor::zeros([n_classes]))].into_iter().collect();
    let mut adam = AdamState::new(&params);
    let hyper = AdamHyper { lr: cfg.learning_rate, ..AdamHyper::default() };
    for _ in 0..cfg.epochs {
        let (_, dw, db) = loss_and_grads(&xs, labels, params.require("w")?, params.require("b")?, cfg.l2)?;
        adam_step(&mut params, &[dw, db], &mut adam, &hyper)?;
    }
    Ok(LogReg { mean, scale, weights: params.require("w")?.clone(), bias: params.require("b")?.clone() })
}

impl LogReg {
    /// `N × C` class probabilities.
    pub fn predict_proba(&self, features: &Tensor) -> Result<Tensor> {
        probabilities(&standardize(features, &self.mean, &self.scale)?, &self.weights, &self.bias)
    }

    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        Ok(crate::network::argmax_rows(&self.predict_proba(features)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian, gradient_check, Rng};

    fn blobs(n: usize, seed: u64) -> (Tensor, Vec<usize>) {
        let mut r = Rng::new(seed);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            data.push(centre + r.uniform_range(-1.0, 1.0));
            data.push(r.uniform_range(-3.0, 3.0));
            y.push(c);
        }
        (Tensor::new(vec![n, 2], data).unwrap(), y)
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (x, y) = blobs(40, 1);
        let m = train_logreg(&x, &y, 2, &LogRegConfig::default()).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
        let p = m.predict_proba(&x).unwrap();
        for row in p.data().chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heavy_penalty_predicts_priors() {
        let (x, mut y) = blobs(40, 2);
        for v in y.iter_mut().take(10) {
            *v = 2; // priors 10/15/15 out of 40
        }
        let cfg = LogRegConfig { l2: 1e6, epochs: 2000, learning_rate: 0.01 };
        let m = train_logreg(&x, &y, 3, &cfg).unwrap();
        assert!(m.weights.max_abs() < 1e-3, "{}", m.weights.max_abs());
        let priors = [15.0 / 40.0, 15.0 / 40.0, 10.0 / 40.0];
        for row in m.predict_proba(&x).unwrap().data().chunks(3) {
            for (p, q) in row.iter().zip(priors) {
                assert!((p - q).abs() < 1e-2, "{row:?}");
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = blobs(6, 3);
        assert!(train_logreg(&x, &[1; 6], 2, &LogRegConfig::default()).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = Rng::new(4);
        let xs = gaussian(&mut r, &[7, 3], 1.0).unwrap();
        let y = vec![0, 1, 2, 3, 0, 1, 2];
        let w = gaussian(&mut r, &[3, 4], 0.5).unwrap();
        let b = gaussian(&mut r, &[4], 0.5).unwrap();
        let (_, dw, db) = loss_and_grads(&xs, &y, &w, &b, 0.3).unwrap();
        let params = vec![("w".to_string(), w), ("b".to_string(), b)];
        let report = gradient_check(
            &params,
            &[dw, db],
            |p| Ok(loss_and_grads(&xs, &y, &p[0].1, &p[1].1, 0.3)?.0),
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }
}
