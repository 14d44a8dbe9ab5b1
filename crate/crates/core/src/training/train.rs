use serde::{Deserialize, Serialize};

use super::optim::{adam_step, AdamHyper, AdamState};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{confusion, mean_f1};
use crate::network::{parse_spec, FeatureShape, Model, ModelKind, NetworkSpec};
use crate::numcore::{Rng, Tensor};
use crate::objectives::{build_objective, emphasis_lambdas, Batch, CostBreakdown, ObjectiveConfig, PseudoBatch};

pub const DEFAULT_SPEC: &str =
    "convv:40:5:1:1-maxpool:2:2-convv:50:3:1:1-maxpool:2:2-convv:20:3:1:1-convv:50:1:1:1-fc";

const LABELED_STREAM: u64 = 10;
const UNLABELED_STREAM: u64 = 11;
const NOISE_STREAM: u64 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub spec: String,
    pub sigma: f64,
    /// One weight per level `0..=L` (ladder) or a single weight (encoder-decoder).
    /// A single value is broadcast to every ladder level; empty means 0.1 everywhere.
    pub lambdas: Vec<f64>,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
    /// Optimizer steps per epoch; by default one pass over the larger of the labeled and unlabeled sets.
    pub steps_per_epoch: Option<usize>,
    pub bn_momentum: f64,
    pub reconstruct_labeled: bool,
    pub normalized_targets: bool,
    pub detach_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model_kind: ModelKind::Ladder,
            spec: DEFAULT_SPEC.to_string(),
            sigma: 0.3,
            lambdas: Vec::new(),
            batch_labeled: 32,
            batch_unlabeled: 96,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            steps_per_epoch: None,
            bn_momentum: 0.1,
            reconstruct_labeled: false,
            normalized_targets: false,
            detach_targets: false,
        }
    }
}

impl TrainConfig {
    /// Checks every numeric setting; the message names the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = [("learning_rate", self.learning_rate), ("eps_opt", self.eps_opt)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("`{key}` must be positive and finite, got {v}")));
            }
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(format!("`{key}` must lie in [0, 1), got {v}")));
            }
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(invalid(format!("`bn_momentum` must lie in (0, 1], got {}", self.bn_momentum)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("`sigma` must be finite and >= 0, got {}", self.sigma)));
        }
        if let Some(bad) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(invalid(format!("`lambdas` must be finite and >= 0, got {bad}")));
        }
        if self.batch_labeled == 0 {
            return Err(invalid("`batch_labeled` must be >= 1"));
        }
        if self.model_kind != ModelKind::Supervised && self.batch_unlabeled == 0 {
            return Err(invalid("`batch_unlabeled` must be >= 1 for semi-supervised models"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(invalid("`steps_per_epoch` must be >= 1"));
        }
        Ok(())
    }

    pub fn parse_spec(&self, input: FeatureShape, n_classes: usize) -> Result<NetworkSpec> {
        parse_spec(&self.spec, input, n_classes)
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper { lr: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.eps_opt }
    }

    /// Reconstruction weights as the objective expects them.
    pub fn resolved_lambdas(&self, depth: usize) -> Vec<f64> {
        match (self.model_kind, self.lambdas.as_slice()) {
            (ModelKind::Supervised, _) => Vec::new(),
            (ModelKind::EncoderDecoder, []) => vec![0.1],
            (ModelKind::EncoderDecoder, l) => l.to_vec(),
            (ModelKind::Ladder, []) => vec![0.1; depth + 1],
            (ModelKind::Ladder, [v]) => vec![*v; depth + 1],
            (ModelKind::Ladder, l) => l.to_vec(),
        }
    }

    pub fn objective(&self, depth: usize) -> ObjectiveConfig {
        ObjectiveConfig {
            kind: self.model_kind,
            sigma: self.sigma,
            lambdas: self.resolved_lambdas(depth),
            reconstruct_labeled: self.reconstruct_labeled,
            normalized_targets: self.normalized_targets,
            detach_targets: self.detach_targets,
        }
    }
}

/// Stacked training inputs (`N × C × T`).
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub labeled_x: &'a Tensor,
    pub labeled_y: &'a [usize],
    pub unlabeled: Option<&'a Tensor>,
    pub validation: Option<(&'a Tensor, &'a [usize])>,
    pub n_classes: usize,
}

impl TrainData<'_> {
    pub fn input_shape(&self) -> Result<FeatureShape> {
        let (_, c, l) = self.labeled_x.dims3()?;
        Ok(FeatureShape { channels: c, len: l })
    }
}

/// Endless example-index stream: a fresh random permutation per pass.
#[derive(Debug, Clone)]
pub struct Sampler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl Sampler {
    pub fn new(n: usize, mut rng: Rng) -> Self {
        let order = rng.permutation(n);
        Self { order, pos: 0, rng }
    }

    pub fn next_batch(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k && !self.order.is_empty() {
            if self.pos == self.order.len() {
                self.rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Pseudo-labels for the whole unlabeled set plus their loss weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTargets {
    pub labels: Vec<usize>,
    pub alpha: f64,
}

/// Step-level control over one training run.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    cfg: TrainConfig,
    objective: ObjectiveConfig,
    hyper: AdamHyper,
    model: Model,
    adam: AdamState,
    data: TrainData<'a>,
    labeled: Sampler,
    unlabeled: Option<Sampler>,
    noise: Rng,
}

impl<'a> Trainer<'a> {
    /// Starts from `init` if given (its kind must match), else from a fresh model seeded by `cfg.seed`.
    pub fn new(cfg: &TrainConfig, data: TrainData<'a>, init: Option<Model>) -> Result<Self> {
        cfg.validate()?;
        let (n_lab, c, l) = data.labeled_x.dims3()?;
        if data.labeled_y.len() != n_lab {
            return Err(invalid(format!("{} labels for {n_lab} labeled windows", data.labeled_y.len())));
        }
        for class in 0..data.n_classes {
            if !data.labeled_y.contains(&class) {
                return Err(Error::Data(format!("labeled set has no example of class {class}")));
            }
        }
        if let Some(bad) = data.labeled_y.iter().find(|&&y| y >= data.n_classes) {
            return Err(invalid(format!("label {bad} out of range for {} classes", data.n_classes)));
        }
        let model = match init {
            Some(m) => {
                if m.kind() != cfg.model_kind {
                    return Err(invalid(format!("initial model is `{}`, config asks for `{}`", m.kind(), cfg.model_kind)));
                }
                m
            }
            None => {
                let spec = cfg.parse_spec(FeatureShape { channels: c, len: l }, data.n_classes)?;
                Model::new(spec, cfg.model_kind, cfg.seed)?
            }
        };
        model.check_input(data.labeled_x)?;
        let semi = cfg.model_kind != ModelKind::Supervised;
        let unl = data.unlabeled.map(|u| {
            model.check_input(u)?;
            Ok::<_, Error>(u.shape()[0])
        });
        let n_unl = unl.transpose()?;
        if semi && n_unl.is_none() {
            return Err(invalid(format!("`{}` training needs unlabeled data", cfg.model_kind)));
        }
        let root = Rng::new(cfg.seed);
        let depth = model.spec().depth();
        Ok(Self {
            objective: cfg.objective(depth),
            hyper: cfg.hyper(),
            adam: AdamState::new(model.params()),
            labeled: Sampler::new(n_lab, root.fork(LABELED_STREAM)),
            unlabeled: n_unl.map(|n| Sampler::new(n, root.fork(UNLABELED_STREAM))),
            noise: root.fork(NOISE_STREAM),
            cfg: cfg.clone(),
            model,
            data,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn steps_taken(&self) -> u64 {
        self.adam.step
    }

    pub fn steps_per_epoch(&self) -> usize {
        if let Some(s) = self.cfg.steps_per_epoch {
            return s;
        }
        let lab = self.data.labeled_y.len().div_ceil(self.cfg.batch_labeled);
        match (self.cfg.model_kind, self.data.unlabeled) {
            (ModelKind::Supervised, _) | (_, None) => lab,
            (_, Some(u)) => lab.max(u.shape()[0].div_ceil(self.cfg.batch_unlabeled)),
        }
    }

    /// One optimizer step. `pseudo` attaches a pseudo-labeled unlabeled batch.
    pub fn step(&mut self, pseudo: Option<&PseudoTargets>) -> Result<CostBreakdown> {
        let ids = self.labeled.next_batch(self.cfg.batch_labeled);
        let xl = self.data.labeled_x.select_batch(&ids)?;
        let yl: Vec<usize> = ids.iter().map(|&i| self.data.labeled_y[i]).collect();
        let semi = self.cfg.model_kind != ModelKind::Supervised;
        let xu = match (semi, self.data.unlabeled, self.unlabeled.as_mut()) {
            (true, Some(u), Some(s)) => Some(u.select_batch(&s.next_batch(self.cfg.batch_unlabeled))?),
            _ => None,
        };
        let pseudo_batch = match (pseudo, self.data.unlabeled) {
            (Some(p), Some(u)) => {
                let sampler = self.unlabeled.as_mut().expect("unlabeled data present");
                let ids = sampler.next_batch(self.cfg.batch_unlabeled.max(1));
                Some((u.select_batch(&ids)?, ids.iter().map(|&i| p.labels[i]).collect::<Vec<_>>(), p.alpha))
            }
            (Some(_), None) => return Err(invalid("pseudo-labels need an unlabeled set")),
            _ => None,
        };
        let batch = Batch {
            labeled: Some((&xl, &yl)),
            unlabeled: xu.as_ref(),
            pseudo: pseudo_batch.as_ref().map(|(x, labels, alpha)| PseudoBatch { x, labels, alpha: *alpha }),
        };
        let og = build_objective(&self.model, &batch, &self.objective, &mut self.noise)?;
        let grads = og.gradients()?;
        adam_step(self.model.params_mut(), &grads, &mut self.adam, &self.hyper)?;
        og.update_running(&mut self.model, self.cfg.bn_momentum);
        if let Some((name, _)) = self.model.params().entries().iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::NonFinite(format!("parameter `{name}` after update")));
        }
        Ok(og.breakdown)
    }
}

/// Mean costs over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub c_s: f64,
    pub c_r: Vec<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The best-validation model, or the final one without a validation set.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_f1: Option<f64>,
    pub steps: u64,
}

/// Mean F1 (percent) of `model` on a labeled set.
pub fn evaluate_f1(model: &Model, x: &Tensor, y: &[usize]) -> Result<f64> {
    let preds = model.predict(x)?;
    Ok(mean_f1(&confusion(&preds, y, model.spec().n_classes())?)?.mean_f1)
}

pub fn train(cfg: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    train_with(cfg, data, None, |_, _| Ok(None))
}

/// Training loop with optional initial model and a per-epoch pseudo-label hook.
pub fn train_with<F>(cfg: &TrainConfig, data: TrainData<'_>, init: Option<Model>, mut pseudo: F) -> Result<TrainOutcome>
where
    F: FnMut(&Model, usize) -> Result<Option<PseudoTargets>>,
{
    let mut tr = Trainer::new(cfg, data, init)?;
    let steps = tr.steps_per_epoch();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        let targets = pseudo(tr.model(), epoch)?;
        let (mut loss, mut c_s) = (0.0, 0.0);
        let mut c_r: Vec<f64> = Vec::new();
        for _ in 0..steps {
            let b = tr.step(targets.as_ref())?;
            loss += b.total;
            c_s += b.c_s;
            if c_r.is_empty() {
                c_r = vec![0.0; b.c_r.len()];
            }
            for (a, v) in c_r.iter_mut().zip(&b.c_r) {
                *a += v;
            }
        }
        let k = steps as f64;
        let val_f1 = match data.validation {
            Some((vx, vy)) => Some(evaluate_f1(tr.model(), vx, vy)?),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            loss: loss / k,
            c_s: c_s / k,
            c_r: c_r.iter().map(|v| v / k).collect(),
            val_f1,
        });
        if let Some(f) = val_f1 {
            if best.as_ref().is_none_or(|(b, _, _)| f > *b) {
                best = Some((f, epoch, tr.model().clone()));
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    let steps = tr.steps_taken();
    Ok(match best {
        Some((f, e, m)) => TrainOutcome { model: m, history, best_epoch: Some(e), best_val_f1: Some(f), steps },
        None => TrainOutcome { model: tr.into_model(), history, best_epoch: None, best_val_f1: None, steps },
    })
}

/// Encoder-decoder trained on reconstruction alone; returns the model and
/// its per-epoch mean input-reconstruction cost.
pub fn pretrain_unsupervised(cfg: &TrainConfig, unlabeled: &Tensor, n_classes: usize) -> Result<(Model, Vec<f64>)> {
    let cfg = TrainConfig { model_kind: ModelKind::EncoderDecoder, ..cfg.clone() };
    cfg.validate()?;
    let (n, c, l) = unlabeled.dims3()?;
    let spec = cfg.parse_spec(FeatureShape { channels: c, len: l }, n_classes)?;
    let mut model = Model::new(spec, ModelKind::EncoderDecoder, cfg.seed)?;
    let objective = cfg.objective(model.spec().depth());
    let hyper = cfg.hyper();
    let mut adam = AdamState::new(model.params());
    let root = Rng::new(cfg.seed);
    let mut sampler = Sampler::new(n, root.fork(UNLABELED_STREAM));
    let mut noise = root.fork(NOISE_STREAM);
    let steps = cfg.steps_per_epoch.unwrap_or_else(|| n.div_ceil(cfg.batch_unlabeled));
    let mut history = Vec::with_capacity(cfg.max_epochs);
    for _ in 0..cfg.max_epochs {
        let mut acc = 0.0;
        for _ in 0..steps {
            let xu = unlabeled.select_batch(&sampler.next_batch(cfg.batch_unlabeled))?;
            let batch = Batch { labeled: None, unlabeled: Some(&xu), pseudo: None };
            let og = build_objective(&model, &batch, &objective, &mut noise)?;
            let grads = og.gradients()?;
            adam_step(model.params_mut(), &grads, &mut adam, &hyper)?;
            og.update_running(&mut model, cfg.bn_momentum);
            acc += og.breakdown.c_r[0];
        }
        history.push(acc / steps as f64);
    }
    Ok((model, history))
}

/// Supervised CNN initialized with a pretrained model's encoder.
pub fn export_encoder(pretrained: &Model, seed: u64) -> Result<Model> {
    let mut cnn = Model::new(pretrained.spec().clone(), ModelKind::Supervised, seed)?;
    cnn.copy_encoder_from(pretrained)?;
    Ok(cnn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub emphasized: usize,
    pub lambdas: Vec<f64>,
    pub mean_f1: f64,
}

/// One ladder run per emphasized level (weight 1 there, 0.1 elsewhere), all
/// from the same seed, scored on `eval`.
pub fn lambda_sweep(
    cfg: &TrainConfig,
    data: TrainData<'_>,
    eval: (&Tensor, &[usize]),
    emphasized: &[usize],
) -> Result<Vec<SweepRow>> {
    let spec = cfg.parse_spec(data.input_shape()?, data.n_classes)?;
    let depth = spec.depth();
    emphasized.iter().map(|&l| emphasis_lambdas(depth, l)).collect::<Result<Vec<_>>>()?;
    emphasized
        .iter()
        .map(|&l| {
            let lambdas = emphasis_lambdas(depth, l)?;
            let run = TrainConfig { model_kind: ModelKind::Ladder, lambdas: lambdas.clone(), ..cfg.clone() };
            let out = train(&run, data)?;
            Ok(SweepRow { emphasized: l, lambdas, mean_f1: evaluate_f1(&out.model, eval.0, eval.1)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gaussian;

    fn toy(n: usize, classes: usize, seed: u64) -> (Tensor, Vec<usize>) {
        let mut r = Rng::new(seed);
        let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let mut x = gaussian(&mut r, &[n, 2, 12], 0.5).unwrap().into_data();
        for (i, &c) in y.iter().enumerate() {
            for t in 0..12 {
                x[i * 24 + t] += ((c + 1) as f64 * t as f64 * 0.5).sin();
            }
        }
        (Tensor::new([n, 2, 12], x).unwrap(), y)
    }

    fn small(kind: ModelKind) -> TrainConfig {
        TrainConfig {
            model_kind: kind,
            spec: "convv:4:3:1:1-maxpool:2:2-fc".into(),
            batch_labeled: 4,
            batch_unlabeled: 6,
            max_epochs: 3,
            steps_per_epoch: Some(4),
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sampler_cycles_every_example() {
        let mut s = Sampler::new(5, Rng::new(1));
        let mut a = s.next_batch(5);
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
        let b = s.next_batch(12);
        assert_eq!(b.len(), 12);
        let mut first_pass = b[..5].to_vec();
        first_pass.sort();
        assert_eq!(first_pass, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn histories_are_finite_and_deterministic() {
        let (x, y) = toy(12, 3, 1);
        let (u, _) = toy(18, 3, 2);
        for kind in [ModelKind::Supervised, ModelKind::EncoderDecoder, ModelKind::Ladder] {
            let data = TrainData { labeled_x: &x, labeled_y: &y, unlabeled: Some(&u), validation: Some((&x, &y)), n_classes: 3 };
            let a = train(&small(kind), data).unwrap();
            let b = train(&small(kind), data).unwrap();
            assert_eq!(a.history, b.history);
            assert!(a.history.iter().all(|h| h.loss.is_finite()));
            assert_eq!(a.model.params(), b.model.params());
        }
    }

    #[test]
    fn missing_class_is_rejected() {
        let (x, _) = toy(6, 3, 1);
        let y = vec![0, 1, 0, 1, 0, 1];
        let data = TrainData { labeled_x: &x, labeled_y: &y, unlabeled: None, validation: None, n_classes: 3 };
        let err = train(&small(ModelKind::Supervised), data).unwrap_err().to_string();
        assert!(err.contains("class 2"), "{err}");
    }

    #[test]
    fn early_stopping_returns_best_checkpoint() {
        let (x, y) = toy(12, 3, 1);
        let (vx, vy) = toy(12, 3, 9);
        let cfg = TrainConfig { max_epochs: 12, patience: 3, steps_per_epoch: Some(2), ..small(ModelKind::Supervised) };
        let data = TrainData { labeled_x: &x, labeled_y: &y, unlabeled: None, validation: Some((&vx, &vy)), n_classes: 3 };
        let out = train(&cfg, data).unwrap();
        let best = out.history.iter().filter_map(|h| h.val_f1).fold(f64::MIN, f64::max);
        assert_eq!(out.best_val_f1, Some(best));
        assert_eq!(out.history[out.best_epoch.unwrap()].val_f1, Some(best));
        assert_eq!(evaluate_f1(&out.model, &vx, &vy).unwrap(), best);
    }

    #[test]
    fn pretraining_exports_cnn_shapes() {
        let (u, _) = toy(18, 3, 2);
        let cfg = small(ModelKind::EncoderDecoder);
        let (pre, hist) = pretrain_unsupervised(&cfg, &u, 3).unwrap();
        assert_eq!(hist.len(), 3);
        let cnn = export_encoder(&pre, 5).unwrap();
        let fresh = Model::new(pre.spec().clone(), ModelKind::Supervised, 0).unwrap();
        let shapes = |m: &Model| m.params().entries().iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect::<Vec<_>>();
        assert_eq!(shapes(&cnn), shapes(&fresh));
        assert_eq!(cnn.params().get("enc.1.w"), pre.params().get("enc.1.w"));
    }

    #[test]
    fn sweep_rows_per_level() {
        let (x, y) = toy(12, 3, 1);
        let (u, _) = toy(18, 3, 2);
        let cfg = TrainConfig { max_epochs: 1, ..small(ModelKind::Ladder) };
        let data = TrainData { labeled_x: &x, labeled_y: &y, unlabeled: Some(&u), validation: None, n_classes: 3 };
        let rows = lambda_sweep(&cfg, data, (&x, &y), &[0, 1, 2, 3]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2].lambdas, vec![0.1, 0.1, 1.0, 0.1, 0.1]);
        assert!(lambda_sweep(&cfg, data, (&x, &y), &[5]).is_err());
    }
}
