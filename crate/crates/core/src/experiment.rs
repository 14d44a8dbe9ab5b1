//! Leave-one-subject-out evaluation of any model family or baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    feature_matrix, pseudo_label, self_train, train_logreg, LogReg, LogRegConfig, Promotion, PseudoLabelConfig,
    SelfTrainConfig,
};
use crate::data::{loso_split, Fold, FoldOptions, NormStats, SplitMode, SplitPlan, WindowedDataset};
use crate::error::{invalid, Result};
use crate::evaluation::{confusion, crossval_report, mean_f1, ConfusionMatrix, CrossvalReport, FoldScore, Metrics};
use crate::network::{Model, ModelKind};
use crate::numcore::{Rng, Tensor};
use crate::training::{
    export_encoder, pretrain_unsupervised, train, train_with, EpochRecord, TrainConfig, TrainData,
};

const SPLIT_STREAM: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cnn,
    Encdec,
    Ladder,
    Logreg,
    Selftrain,
    Pseudolabel,
    PretrainCnn,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cnn,
        Method::Encdec,
        Method::Ladder,
        Method::Logreg,
        Method::Selftrain,
        Method::Pseudolabel,
        Method::PretrainCnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cnn => "cnn",
            Method::Encdec => "encdec",
            Method::Ladder => "ladder",
            Method::Logreg => "logreg",
            Method::Selftrain => "selftrain",
            Method::Pseudolabel => "pseudolabel",
            Method::PretrainCnn => "pretrain_cnn",
        }
    }

    /// The network family trained directly, if any.
    pub fn network_kind(self) -> Option<ModelKind> {
        match self {
            Method::Cnn | Method::Selftrain | Method::Pseudolabel | Method::PretrainCnn => Some(ModelKind::Supervised),
            Method::Encdec => Some(ModelKind::EncoderDecoder),
            Method::Ladder => Some(ModelKind::Ladder),
            Method::Logreg => None,
        }
    }

    pub fn uses_unlabeled(self) -> bool {
        !matches!(self, Method::Cnn | Method::Logreg)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
            invalid(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Network and optimizer settings; `model_kind` is overridden by `method`.
    pub train: TrainConfig,
    pub n_labeled: usize,
    /// Cap on unlabeled windows per fold; `None` uses all of them.
    pub n_unlabeled: Option<usize>,
    pub split: SplitMode,
    /// Hold out one training subject per fold for early stopping.
    pub validation: bool,
    pub logreg: LogRegConfig,
    pub self_train: SelfTrainConfig,
    pub pseudo: PseudoLabelConfig,
    /// Epochs of reconstruction-only pretraining for `pretrain_cnn`; defaults to `train.max_epochs`.
    pub pretrain_epochs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Ladder,
            train: TrainConfig::default(),
            n_labeled: 50,
            n_unlabeled: None,
            split: SplitMode::Inductive,
            validation: false,
            logreg: LogRegConfig::default(),
            self_train: SelfTrainConfig::default(),
            pseudo: PseudoLabelConfig::default(),
            pretrain_epochs: None,
        }
    }
}

impl ExperimentConfig {
    /// The training config with `model_kind` matching the method.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if let Some(kind) = self.method.network_kind() {
            t.model_kind = kind;
        }
        t
    }

    pub fn fold_options(&self) -> FoldOptions {
        FoldOptions { n_labeled: self.n_labeled, n_unlabeled: self.n_unlabeled, mode: self.split, validation: self.validation }
    }
}

/// Leave-one-subject-out plan with labeled/unlabeled sets drawn from the config seed.
pub fn plan_folds(ds: &WindowedDataset, cfg: &ExperimentConfig) -> Result<SplitPlan> {
    let mut plan = loso_split(ds)?;
    plan.assign(ds, &cfg.fold_options(), &Rng::new(cfg.train.seed).fork(SPLIT_STREAM))?;
    Ok(plan)
}

/// A fitted classifier of either kind.
#[derive(Debug, Clone)]
pub enum Predictor {
    Network(Model),
    Logreg(LogReg),
}

impl Predictor {
    /// Class indices for normalized `N × C × T` windows.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        match self {
            Predictor::Network(m) => m.predict(x),
            Predictor::Logreg(l) => l.predict(&feature_matrix(x)?),
        }
    }

    pub fn network(&self) -> Option<&Model> {
        match self {
            Predictor::Network(m) => Some(m),
            Predictor::Logreg(_) => None,
        }
    }
}

/// A method trained on one fold's training subjects.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub predictor: Predictor,
    pub norm: NormStats,
    /// Per-epoch costs of the final network fit (empty for logistic regression).
    pub history: Vec<EpochRecord>,
    /// Self-training audit log.
    pub promotions: Vec<Promotion>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
}

/// Result of one fold.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub index: usize,
    pub test_subject: String,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub fitted: Fitted,
}

#[derive(Debug, Clone)]
pub struct LosoRun {
    pub folds: Vec<FoldRun>,
    pub report: CrossvalReport,
}

struct FoldTensors {
    labeled_x: Tensor,
    labeled_y: Vec<usize>,
    unlabeled: Option<Tensor>,
    validation: Option<(Tensor, Vec<usize>)>,
    nds: WindowedDataset,
}

/// Fits normalization on the fold's training-subject windows (never the
/// test or validation subject) and stacks the training splits.
fn fold_tensors(ds: &WindowedDataset, fold: &Fold) -> Result<(FoldTensors, NormStats)> {
    let fit_ids: Vec<usize> = fold
        .train_subjects
        .iter()
        .filter(|s| fold.validation_subject.as_ref() != Some(*s))
        .flat_map(|s| ds.ids_of_subject(s))
        .collect();
    let norm = NormStats::fit(ds, Some(&fit_ids))?;
    let nds = norm.apply(ds)?;
    let unlabeled = if fold.unlabeled_ids.is_empty() { None } else { Some(nds.batch(&fold.unlabeled_ids)?) };
    let validation = if fold.validation_ids.is_empty() {
        None
    } else {
        Some((nds.batch(&fold.validation_ids)?, nds.labels(&fold.validation_ids)?))
    };
    let t = FoldTensors {
        labeled_x: nds.batch(&fold.labeled_ids)?,
        labeled_y: nds.labels(&fold.labeled_ids)?,
        unlabeled,
        validation,
        nds,
    };
    Ok((t, norm))
}

/// A single training split: every subject except `holdout` trains, and
/// `holdout` (if any) becomes the test subject.
pub fn training_fold(ds: &WindowedDataset, cfg: &ExperimentConfig, holdout: Option<&str>) -> Result<Fold> {
    let subjects = ds.subjects();
    if let Some(h) = holdout {
        if !subjects.iter().any(|s| s == h) {
            return Err(invalid(format!("holdout subject `{h}` is not in the dataset")));
        }
    }
    let fold = Fold {
        test_subject: holdout.unwrap_or_default().to_string(),
        train_subjects: subjects.into_iter().filter(|s| Some(s.as_str()) != holdout).collect(),
        validation_subject: None,
        test_ids: holdout.map(|h| ds.ids_of_subject(h)).unwrap_or_default(),
        validation_ids: Vec::new(),
        labeled_ids: Vec::new(),
        unlabeled_ids: Vec::new(),
    };
    let mut plan = SplitPlan { folds: vec![fold] };
    plan.assign(ds, &cfg.fold_options(), &Rng::new(cfg.train.seed).fork(SPLIT_STREAM))?;
    Ok(plan.folds.remove(0))
}

/// Trains the configured method on a fold's training side.
pub fn fit_fold(ds: &WindowedDataset, fold: &Fold, cfg: &ExperimentConfig) -> Result<Fitted> {
    let (t, norm) = fold_tensors(ds, fold)?;
    fit_tensors(&t, norm, ds.n_classes(), cfg)
}

fn fit_tensors(t: &FoldTensors, norm: NormStats, k: usize, cfg: &ExperimentConfig) -> Result<Fitted> {
    let tcfg = cfg.train_config();
    let unlabeled = if cfg.method.uses_unlabeled() { t.unlabeled.as_ref() } else { None };
    if cfg.method.uses_unlabeled() && unlabeled.is_none() {
        return Err(invalid(format!("`{}` needs unlabeled windows and the fold has none", cfg.method)));
    }
    let data = TrainData {
        labeled_x: &t.labeled_x,
        labeled_y: &t.labeled_y,
        unlabeled,
        validation: t.validation.as_ref().map(|(x, y)| (x, y.as_slice())),
        n_classes: k,
    };
    let mut promotions = Vec::new();
    let (predictor, history) = match cfg.method {
        Method::Cnn | Method::Encdec | Method::Ladder => {
            let out = train(&tcfg, data)?;
            (Predictor::Network(out.model), out.history)
        }
        Method::PretrainCnn => {
            let pre_cfg = TrainConfig { max_epochs: cfg.pretrain_epochs.unwrap_or(tcfg.max_epochs), ..tcfg.clone() };
            let (pre, _) = pretrain_unsupervised(&pre_cfg, unlabeled.expect("checked above"), k)?;
            let init = export_encoder(&pre, tcfg.seed)?;
            let out = train_with(&tcfg, TrainData { unlabeled: None, ..data }, Some(init), |_, _| Ok(None))?;
            (Predictor::Network(out.model), out.history)
        }
        Method::Pseudolabel => {
            let out = pseudo_label(&tcfg, data, &cfg.pseudo)?.outcome;
            (Predictor::Network(out.model), out.history)
        }
        Method::Selftrain => {
            let mut history = Vec::new();
            let out = self_train(&t.labeled_x, &t.labeled_y, unlabeled.expect("checked above"), &cfg.self_train, |x, y| {
                let d = TrainData { labeled_x: x, labeled_y: y, unlabeled: None, ..data };
                let o = train(&tcfg, d)?;
                history = o.history;
                Ok(o.model)
            })?;
            promotions = out.promotions;
            (Predictor::Network(out.model), history)
        }
        Method::Logreg => {
            let lr = train_logreg(&feature_matrix(&t.labeled_x)?, &t.labeled_y, k, &cfg.logreg)?;
            (Predictor::Logreg(lr), Vec::new())
        }
    };
    Ok(Fitted {
        predictor,
        norm,
        history,
        promotions,
        n_labeled: t.labeled_y.len(),
        n_unlabeled: unlabeled.map_or(0, |u| u.shape()[0]),
    })
}

/// Trains the configured method on one fold and scores the held-out subject.
pub fn run_fold(ds: &WindowedDataset, fold: &Fold, index: usize, cfg: &ExperimentConfig) -> Result<FoldRun> {
    if fold.test_ids.is_empty() {
        return Err(invalid(format!("fold {index} has no test windows")));
    }
    let (t, norm) = fold_tensors(ds, fold)?;
    let test_x = t.nds.batch(&fold.test_ids)?;
    let test_y = t.nds.labels(&fold.test_ids)?;
    let fitted = fit_tensors(&t, norm, ds.n_classes(), cfg)?;
    let cm = confusion(&fitted.predictor.predict(&test_x)?, &test_y, ds.n_classes())?;
    Ok(FoldRun { index, test_subject: fold.test_subject.clone(), metrics: mean_f1(&cm)?, confusion: cm, fitted })
}

/// Every fold in subject order, then the cross-validation aggregate.
pub fn run_loso(ds: &WindowedDataset, cfg: &ExperimentConfig) -> Result<LosoRun> {
    run_loso_with(ds, cfg, |_| {})
}

/// As [`run_loso`], calling `on_fold` as each fold finishes.
pub fn run_loso_with(ds: &WindowedDataset, cfg: &ExperimentConfig, mut on_fold: impl FnMut(&FoldRun)) -> Result<LosoRun> {
    let plan = plan_folds(ds, cfg)?;
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (i, fold) in plan.folds.iter().enumerate() {
        let run = run_fold(ds, fold, i, cfg)?;
        on_fold(&run);
        folds.push(run);
    }
    let report = crossval_report(
        folds.iter().map(|f| FoldScore { subject: f.test_subject.clone(), metrics: f.metrics.clone() }).collect(),
    )?;
    Ok(LosoRun { folds, report })
}
