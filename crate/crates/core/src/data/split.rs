use serde::{Deserialize, Serialize};

use super::WindowedDataset;
use crate::error::{invalid, Error, Result};
use crate::numcore::Rng;

/// Draws a class-balanced labeled subset from `pool`.
///
/// Class `c` receives `n / C` examples plus one if `c < n % C`. Every pool
/// member not selected — including originally unlabeled windows — is
/// returned as unlabeled. Both lists are sorted.
pub fn balanced_sample(
    ds: &WindowedDataset,
    pool: &[usize],
    n_labeled: usize,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = ds.n_classes();
    if k == 0 {
        return Err(Error::Data("dataset has no classes".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in pool {
        let e = ds.examples.get(i).ok_or_else(|| invalid(format!("example {i} out of range")))?;
        if let Some(l) = e.label {
            by_class[l].push(i);
        }
    }
    let mut labeled = Vec::with_capacity(n_labeled);
    for (c, cands) in by_class.iter_mut().enumerate() {
        let quota = n_labeled / k + usize::from(c < n_labeled % k);
        if cands.len() < quota {
            return Err(Error::Data(format!(
                "class `{}` has {} examples, {quota} needed for a balanced labeled set",
                ds.classes[c],
                cands.len()
            )));
        }
        rng.shuffle(cands);
        labeled.extend_from_slice(&cands[..quota]);
    }
    labeled.sort_unstable();
    let mut unlabeled: Vec<usize> = pool.iter().copied().filter(|i| labeled.binary_search(i).is_err()).collect();
    unlabeled.sort_unstable();
    unlabeled.dedup();
    Ok((labeled, unlabeled))
}

/// Where a fold draws its unlabeled windows from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// The training subjects' leftover windows.
    #[default]
    Inductive,
    /// The held-out test subject's windows.
    Transductive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
    pub validation_subject: Option<String>,
    pub test_ids: Vec<usize>,
    pub validation_ids: Vec<usize>,
    pub labeled_ids: Vec<usize>,
    pub unlabeled_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

/// Options for turning a leave-one-subject-out plan into labeled and unlabeled sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOptions {
    pub n_labeled: usize,
    /// Cap on the unlabeled pool; `None` keeps all of it.
    pub n_unlabeled: Option<usize>,
    pub mode: SplitMode,
    /// Hold one training subject out for early stopping.
    pub validation: bool,
}

/// One fold per subject; train is every other subject. Labeled and unlabeled
/// lists are left empty until [`SplitPlan::assign`].
pub fn loso_split(ds: &WindowedDataset) -> Result<SplitPlan> {
    let subjects = ds.subjects();
    if subjects.len() < 2 {
        return Err(Error::Data(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let folds = subjects
        .iter()
        .map(|s| Fold {
            test_subject: s.clone(),
            train_subjects: subjects.iter().filter(|o| *o != s).cloned().collect(),
            validation_subject: None,
            test_ids: ds.ids_of_subject(s),
            validation_ids: Vec::new(),
            labeled_ids: Vec::new(),
            unlabeled_ids: Vec::new(),
        })
        .collect();
    Ok(SplitPlan { folds })
}

impl SplitPlan {
    /// Fills every fold's labeled/unlabeled (and optional validation) ids.
    /// Fold `f` draws from `rng.fork(f)`, so folds are independent of each other.
    pub fn assign(&mut self, ds: &WindowedDataset, opts: &FoldOptions, rng: &Rng) -> Result<()> {
        for (f, fold) in self.folds.iter_mut().enumerate() {
            let mut r = rng.fork(f as u64);
            fold.validation_subject = None;
            fold.validation_ids.clear();
            let mut train_subjects = fold.train_subjects.clone();
            if opts.validation {
                if train_subjects.len() < 2 {
                    return Err(Error::Data("a validation subject needs at least 2 training subjects".into()));
                }
                let v = train_subjects.remove(r.below(train_subjects.len()));
                fold.validation_ids = ds.ids_of_subject(&v);
                fold.validation_subject = Some(v);
            }
            let mut pool: Vec<usize> = train_subjects.iter().flat_map(|s| ds.ids_of_subject(s)).collect();
            pool.sort_unstable();
            let (labeled, rest) = balanced_sample(ds, &pool, opts.n_labeled, &mut r)?;
            let mut unlabeled = match opts.mode {
                SplitMode::Inductive => rest,
                SplitMode::Transductive => fold.test_ids.clone(),
            };
            if let Some(cap) = opts.n_unlabeled {
                if unlabeled.len() > cap {
                    r.shuffle(&mut unlabeled);
                    unlabeled.truncate(cap);
                    unlabeled.sort_unstable();
                }
            }
            fold.labeled_ids = labeled;
            fold.unlabeled_ids = unlabeled;
        }
        Ok(())
    }
}
