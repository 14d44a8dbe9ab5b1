use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::network::ModelKind;
use crate::training::{train_with, PseudoTargets, TrainConfig, TrainData, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PseudoLabelConfig {
    /// Supervised-only epochs before pseudo-labels are attached.
    pub warmup_epochs: usize,
    pub alpha_max: f64,
    /// Epoch at which the weight reaches `alpha_max`.
    pub ramp_end_epoch: usize,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self { warmup_epochs: 10, alpha_max: 1.0, ramp_end_epoch: 30 }
    }
}

impl PseudoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_max >= 0.0 && self.alpha_max.is_finite()) {
            return Err(invalid(format!("alpha_max must be finite and >= 0, got {}", self.alpha_max)));
        }
        if self.ramp_end_epoch < self.warmup_epochs {
            return Err(invalid("ramp_end_epoch must not precede warmup_epochs"));
        }
        Ok(())
    }
}

/// 0 before warm-up ends, then linear up to `alpha_max` at `ramp_end_epoch`.
pub fn ramp_alpha(cfg: &PseudoLabelConfig, epoch: usize) -> f64 {
    if epoch < cfg.warmup_epochs {
        return 0.0;
    }
    let span = cfg.ramp_end_epoch - cfg.warmup_epochs;
    if span == 0 {
        return cfg.alpha_max;
    }
    cfg.alpha_max * ((epoch - cfg.warmup_epochs) as f64 / span as f64).min(1.0)
}

#[derive(Debug, Clone)]
pub struct PseudoLabelOutcome {
    pub outcome: TrainOutcome,
    /// Weight used in each epoch.
    pub alphas: Vec<f64>,
    /// Pseudo-labels that differ from the previous epoch's, per phase-two epoch.
    pub relabeled: Vec<usize>,
}

/// Supervised CNN training that, after warm-up, adds the unlabeled windows
/// with the current model's predictions as targets, weighted by the ramp.
/// Predictions are recomputed at the start of every epoch.
pub fn pseudo_label(cfg: &TrainConfig, data: TrainData<'_>, pl: &PseudoLabelConfig) -> Result<PseudoLabelOutcome> {
    pl.validate()?;
    let unlabeled = data.unlabeled.ok_or_else(|| invalid("pseudo-labelling needs unlabeled data"))?;
    let cfg = TrainConfig { model_kind: ModelKind::Supervised, ..cfg.clone() };
    let mut alphas = Vec::new();
    let mut relabeled = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let outcome = train_with(&cfg, data, None, |model, epoch| {
        let alpha = ramp_alpha(pl, epoch);
        alphas.push(alpha);
        if epoch < pl.warmup_epochs {
            return Ok(None);
        }
        let labels = model.predict(unlabeled)?;
        relabeled.push(match &previous {
            Some(p) => p.iter().zip(&labels).filter(|(a, b)| a != b).count(),
            None => labels.len(),
        });
        previous = Some(labels.clone());
        Ok(Some(PseudoTargets { labels, alpha }))
    })?;
    alphas.truncate(outcome.history.len());
    Ok(PseudoLabelOutcome { outcome, alphas, relabeled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian, Rng, Tensor};
    use crate::training::train;

    #[test]
    fn ramp_shape() {
        let c = PseudoLabelConfig::default();
        assert_eq!(ramp_alpha(&c, 0), 0.0);
        assert_eq!(ramp_alpha(&c, 10), 0.0);
        assert!((ramp_alpha(&c, 20) - 0.5).abs() < 1e-15);
        assert_eq!(ramp_alpha(&c, 30), 1.0);
        assert_eq!(ramp_alpha(&c, 99), 1.0);
        let step = PseudoLabelConfig { warmup_epochs: 3, ramp_end_epoch: 3, alpha_max: 0.4 };
        assert_eq!(ramp_alpha(&step, 3), 0.4);
        assert!(PseudoLabelConfig { warmup_epochs: 5, ramp_end_epoch: 4, alpha_max: 1.0 }.validate().is_err());
    }

    fn setup() -> (Tensor, Vec<usize>, Tensor, TrainConfig) {
        let mut r = Rng::new(8);
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let mut x = gaussian(&mut r, &[12, 2, 16], 0.5).unwrap().into_data();
        for (i, &c) in y.iter().enumerate() {
            x[i * 32 + c] += 2.0;
        }
        let x = Tensor::new(vec![12, 2, 16], x).unwrap();
        let u = gaussian(&mut r, &[20, 2, 16], 1.0).unwrap();
        let cfg = TrainConfig {
            spec: "convv:4:3:1:1-maxpool:2:2-fc".into(),
            batch_labeled: 4,
            batch_unlabeled: 5,
            max_epochs: 6,
            seed: 3,
            ..TrainConfig::default()
        };
        (x, y, u, cfg)
    }

    #[test]
    fn zero_weight_reproduces_supervised_training() {
        let (x, y, u, cfg) = setup();
        let data = TrainData { labeled_x: &x, labeled_y: &y, unlabeled: Some(&u), validation: None, n_classes: 3 };
        let pl = PseudoLabelConfig { warmup_epochs: 2, alpha_max: 0.0, ramp_end_epoch: 4 };
        let out = pseudo_label(&cfg, data, &pl).unwrap();
        let sup = TrainConfig { model_kind: ModelKind::Supervised, ..cfg };
        let reference = train(&sup, TrainData { unlabeled: None, ..data }).unwrap();
        assert_eq!(out.outcome.model.params(), reference.model.params());
        assert_eq!(out.outcome.history, reference.history);
        assert_eq!(out.relabeled.len(), 4);
    }

    #[test]
    fn positive_weight_changes_the_run_deterministically() {
        let (x, y, u, cfg) = setup();
        let data = TrainData { labeled_x: &x, labeled_y: &y, unlabeled: Some(&u), validation: None, n_classes: 3 };
        let pl = PseudoLabelConfig { warmup_epochs: 2, alpha_max: 1.0, ramp_end_epoch: 3 };
        let a = pseudo_label(&cfg, data, &pl).unwrap();
        let b = pseudo_label(&cfg, data, &pl).unwrap();
        assert_eq!(a.outcome.model.params(), b.outcome.model.params());
        assert_eq!(a.alphas, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let sup = train(&TrainConfig { model_kind: ModelKind::Supervised, ..cfg }, data).unwrap();
        assert_ne!(a.outcome.model.params(), sup.model.params());
    }
}
