use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{parse_spec, FeatureShape, Model, ModelKind};
use crate::numcore::{gaussian, GradCheckReport, Rng};
use crate::objectives::{check_objective_gradients, jitter_non_weights, Batch, ObjectiveConfig};

/// A self-contained gradient check of one model family on random windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSetup {
    pub spec: String,
    pub kind: ModelKind,
    pub input: FeatureShape,
    pub n_classes: usize,
    /// Labeled windows; as many unlabeled windows are drawn.
    pub batch: usize,
    pub sigma: f64,
    /// Broadcast to every reconstruction level.
    pub lambda: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub tol: f64,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            spec: "convv:8:5:1:1-maxpool:2:2-fc".into(),
            kind: ModelKind::Ladder,
            input: FeatureShape { channels: 3, len: 40 },
            n_classes: 6,
            batch: 4,
            sigma: 0.3,
            lambda: 0.1,
            seed: 1,
            epsilon: 1e-5,
            tol: 1e-4,
        }
    }
}

pub fn gradcheck_family(s: &GradCheckSetup) -> Result<GradCheckReport> {
    let spec = parse_spec(&s.spec, s.input, s.n_classes)?;
    let depth = spec.depth();
    let mut model = Model::new(spec, s.kind, s.seed)?;
    let mut rng = Rng::new(s.seed).fork(30);
    jitter_non_weights(&mut model, 0.2, &mut rng)?;
    let shape = [s.batch, s.input.channels, s.input.len];
    let xl = gaussian(&mut rng, &shape, 1.0)?;
    let xu = gaussian(&mut rng, &shape, 1.0)?;
    let targets: Vec<usize> = (0..s.batch).map(|i| i % s.n_classes).collect();
    let lambdas = match s.kind {
        ModelKind::Supervised => Vec::new(),
        ModelKind::EncoderDecoder => vec![s.lambda],
        ModelKind::Ladder => vec![s.lambda; depth + 1],
    };
    let cfg = ObjectiveConfig {
        kind: s.kind,
        sigma: s.sigma,
        lambdas,
        reconstruct_labeled: false,
        normalized_targets: false,
        detach_targets: false,
    };
    let unlabeled = (s.kind != ModelKind::Supervised).then_some(&xu);
    let batch = Batch { labeled: Some((&xl, &targets)), unlabeled, pseudo: None };
    check_objective_gradients(&model, &batch, &cfg, s.seed ^ 0x5eed, s.epsilon, s.tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_families_pass() {
        for kind in [ModelKind::Supervised, ModelKind::EncoderDecoder, ModelKind::Ladder] {
            let setup = GradCheckSetup { kind, input: FeatureShape { channels: 2, len: 12 }, n_classes: 3, ..Default::default() };
            let r = gradcheck_family(&setup).unwrap();
            assert!(r.pass, "{kind}: {}", r.summary());
        }
    }
}
