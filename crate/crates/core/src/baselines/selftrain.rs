use serde::{Deserialize, Serialize};

use super::LogReg;
use crate::error::{invalid, Result};
use crate::network::Model;
use crate::numcore::Tensor;

/// Anything that maps a batch to `N × C` class probabilities.
pub trait Classifier {
    fn predict_proba(&self, x: &Tensor) -> Result<Tensor>;
}

impl Classifier for Model {
    fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        Model::predict_proba(self, x)
    }
}

impl Classifier for LogReg {
    fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        LogReg::predict_proba(self, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfTrainConfig {
    pub threshold: f64,
    /// Maximum promotion rounds.
    pub max_iters: usize,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self { threshold: 0.95, max_iters: 10 }
    }
}

/// One unlabeled example moved into the labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    pub iteration: usize,
    /// Row of the original unlabeled tensor.
    pub index: usize,
    pub label: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome<M> {
    pub model: M,
    pub promotions: Vec<Promotion>,
    /// Labeled-set size at each fit, in order.
    pub labeled_sizes: Vec<usize>,
}

fn concat_rows(a: &Tensor, b: Option<Tensor>) -> Result<Tensor> {
    let Some(b) = b else { return Ok(a.clone()) };
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(shape, data)
}

/// Fit, predict the remaining unlabeled rows, promote every prediction whose
/// top probability reaches `threshold`, repeat. Stops when a round promotes
/// nothing, the pool is empty, or `max_iters` rounds have run; the returned
/// model is always fit on the final labeled set.
pub fn self_train<M, F>(
    labeled_x: &Tensor,
    labeled_y: &[usize],
    unlabeled_x: &Tensor,
    cfg: &SelfTrainConfig,
    mut fit: F,
) -> Result<SelfTrainOutcome<M>>
where
    M: Classifier,
    F: FnMut(&Tensor, &[usize]) -> Result<M>,
{
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(invalid(format!("self-training threshold must lie in (0, 1), got {}", cfg.threshold)));
    }
    let n_u = unlabeled_x.shape().first().copied().unwrap_or(0);
    let mut remaining: Vec<usize> = (0..n_u).collect();
    let mut promoted: Vec<usize> = Vec::new();
    let mut y = labeled_y.to_vec();
    let mut promotions = Vec::new();
    let mut labeled_sizes = Vec::new();
    let mut iteration = 0;
    loop {
        let extra = if promoted.is_empty() { None } else { Some(unlabeled_x.select_batch(&promoted)?) };
        let x = concat_rows(labeled_x, extra)?;
        let model = fit(&x, &y)?;
        labeled_sizes.push(y.len());
        if remaining.is_empty() || iteration >= cfg.max_iters {
            return Ok(SelfTrainOutcome { model, promotions, labeled_sizes });
        }
        let p = model.predict_proba(&unlabeled_x.select_batch(&remaining)?)?;
        let c = p.len() / remaining.len();
        let mut keep = Vec::with_capacity(remaining.len());
        let mut added = 0;
        for (&idx, row) in remaining.iter().zip(p.data().chunks(c)) {
            let (label, conf) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
            if conf >= cfg.threshold {
                promotions.push(Promotion { iteration, index: idx, label, confidence: conf });
                promoted.push(idx);
                y.push(label);
                added += 1;
            } else {
                keep.push(idx);
            }
        }
        remaining = keep;
        iteration += 1;
        if added == 0 {
            return Ok(SelfTrainOutcome { model, promotions, labeled_sizes });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Row `i` of the input gets confidence `conf[x[i]]` for class 0.
    struct Table(Vec<f64>);

    impl Classifier for Table {
        fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
            let data = x.data().iter().flat_map(|&v| {
                let p = self.0[v as usize];
                [p, 1.0 - p]
            });
            Tensor::new(vec![x.shape()[0], 2], data.collect())
        }
    }

    fn rows(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn only_confident_predictions_are_promoted() {
        let lab = rows(&[0.0]);
        let unl = rows(&[1.0, 2.0, 3.0]);
        let conf = vec![1.0, 0.96, 0.90, 0.95];
        let out = self_train(&lab, &[0], &unl, &SelfTrainConfig::default(), |_, _| Ok(Table(conf.clone()))).unwrap();
        let idx: Vec<usize> = out.promotions.iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![0, 2]); // 0.96 and exactly 0.95, not 0.90
        assert_eq!(out.labeled_sizes, vec![1, 3]);
        assert!(out.promotions.iter().all(|p| p.label == 0 && p.confidence >= 0.95));
    }

    #[test]
    fn promoted_examples_join_the_fit() {
        let lab = rows(&[0.0]);
        let unl = rows(&[1.0, 2.0]);
        let mut seen = Vec::new();
        // confidence grows as the labeled set grows
        let out = self_train(&lab, &[1], &unl, &SelfTrainConfig::default(), |x, y| {
            seen.push((x.data().to_vec(), y.to_vec()));
            let k = y.len() as f64;
            Ok(Table(vec![0.5, 0.72 + 0.25 * k, 0.76 + 0.1 * k].into_iter().map(|v: f64| v.min(1.0)).collect()))
        })
        .unwrap();
        assert_eq!(seen[1], (vec![0.0, 1.0], vec![1, 0]));
        assert_eq!(seen[2], (vec![0.0, 1.0, 2.0], vec![1, 0, 0]));
        assert_eq!(out.promotions.iter().map(|p| p.iteration).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn bad_threshold() {
        for t in [0.0, 1.0, -0.5] {
            let cfg = SelfTrainConfig { threshold: t, max_iters: 3 };
            assert!(self_train(&rows(&[0.0]), &[0], &rows(&[0.0]), &cfg, |_, _| Ok(Table(vec![1.0]))).is_err());
        }
    }

    proptest! {
        #[test]
        fn grows_monotonically_and_terminates(
            confs in proptest::collection::vec(0.5f64..1.0, 1..30),
            drift in 0.0f64..0.05,
            max_iters in 1usize..50,
        ) {
            let n = confs.len();
            let unl = rows(&(1..=n).map(|v| v as f64).collect::<Vec<_>>());
            let out = self_train(&rows(&[0.0]), &[0], &unl, &SelfTrainConfig { threshold: 0.95, max_iters }, |_, y| {
                let boost = drift * y.len() as f64;
                Ok(Table(std::iter::once(1.0).chain(confs.iter().map(|c| (c + boost).min(1.0))).collect()))
            }).unwrap();
            prop_assert!(out.labeled_sizes.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(out.labeled_sizes.len() <= n + 1);
            prop_assert!(out.labeled_sizes.len() <= max_iters + 1);
            prop_assert_eq!(*out.labeled_sizes.last().unwrap(), 1 + out.promotions.len());
            let mut idx: Vec<usize> = out.promotions.iter().map(|p| p.index).collect();
            idx.sort_unstable();
            idx.dedup();
            prop_assert_eq!(idx.len(), out.promotions.len());
            prop_assert!(out.promotions.iter().all(|p| p.confidence >= 0.95));
        }
    }
}
