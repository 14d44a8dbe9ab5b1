//! Confusion matrices, per-class and mean F1, fold aggregation and PCA.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self { counts: vec![vec![0; n_classes]; n_classes] }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(invalid("confusion matrix must be square"));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn fp(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum::<u64>() - self.tp(c)
    }

    pub fn fn_(&self, c: usize) -> u64 {
        self.counts[c].iter().sum::<u64>() - self.tp(c)
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Element-wise sum, e.g. to pool folds.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes() != self.n_classes() {
            return Err(invalid("cannot merge confusion matrices of different sizes"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion(preds: &[usize], truths: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(invalid(format!("{} predictions for {} labels", preds.len(), truths.len())));
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= n_classes || t >= n_classes {
            return Err(invalid(format!("class index out of range for {n_classes} classes")));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Scores in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub mean_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 and their unweighted mean. A zero
/// denominator makes the corresponding ratio 0.
pub fn mean_f1(cm: &ConfusionMatrix) -> Result<Metrics> {
    let k = cm.n_classes();
    if k == 0 || cm.total() == 0 {
        return Err(Error::Data("confusion matrix is empty".into()));
    }
    let (mut precision, mut recall, mut f1, mut support) = (vec![], vec![], vec![], vec![]);
    for c in 0..k {
        let p = ratio(cm.tp(c), cm.tp(c) + cm.fp(c));
        let r = ratio(cm.tp(c), cm.tp(c) + cm.fn_(c));
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        precision.push(100.0 * p);
        recall.push(100.0 * r);
        f1.push(100.0 * f);
        support.push(cm.support(c));
    }
    let mean = f1.iter().sum::<f64>() / k as f64;
    let correct: u64 = (0..k).map(|c| cm.tp(c)).sum();
    Ok(Metrics { precision, recall, f1, support, mean_f1: mean, accuracy: 100.0 * ratio(correct, cm.total()) })
}

/// One fold's score, keyed by its held-out subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub subject: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub folds: Vec<FoldScore>,
    pub mean_f1: f64,
    /// Population standard deviation of per-fold mean F1.
    pub std_f1: f64,
}

pub fn crossval_report(folds: Vec<FoldScore>) -> Result<CrossvalReport> {
    if folds.is_empty() {
        return Err(invalid("cross-validation report needs at least one fold"));
    }
    let n = folds.len() as f64;
    let mean = folds.iter().map(|f| f.metrics.mean_f1).sum::<f64>() / n;
    let var = folds.iter().map(|f| (f.metrics.mean_f1 - mean).powi(2)).sum::<f64>() / n;
    Ok(CrossvalReport { folds, mean_f1: mean, std_f1: var.sqrt() })
}

/// `class,precision,recall,f1,support`, then a `mean` summary row.
pub fn write_metrics_csv<W: Write>(w: W, classes: &[String], m: &Metrics) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::Data(e.to_string());
    out.write_record(["class", "precision", "recall", "f1", "support"]).map_err(e)?;
    for (c, name) in classes.iter().enumerate() {
        out.write_record([
            name.clone(),
            format!("{:.4}", m.precision[c]),
            format!("{:.4}", m.recall[c]),
            format!("{:.4}", m.f1[c]),
            m.support[c].to_string(),
        ])
        .map_err(e)?;
    }
    let k = classes.len() as f64;
    out.write_record([
        "mean".to_string(),
        format!("{:.4}", m.precision.iter().sum::<f64>() / k),
        format!("{:.4}", m.recall.iter().sum::<f64>() / k),
        format!("{:.4}", m.mean_f1),
        m.support.iter().sum::<u64>().to_string(),
    ])
    .map_err(e)?;
    out.flush()?;
    Ok(())
}

/// `fold,subject,mean_f1,accuracy` per fold plus `mean` and `std` rows.
pub fn write_crossval_csv<W: Write>(w: W, r: &CrossvalReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::Data(e.to_string());
    out.write_record(["fold", "subject", "mean_f1", "accuracy"]).map_err(e)?;
    for (i, f) in r.folds.iter().enumerate() {
        out.write_record([
            i.to_string(),
            f.subject.clone(),
            format!("{:.4}", f.metrics.mean_f1),
            format!("{:.4}", f.metrics.accuracy),
        ])
        .map_err(e)?;
    }
    out.write_record(["mean", "", &format!("{:.4}", r.mean_f1), ""]).map_err(e)?;
    out.write_record(["std", "", &format!("{:.4}", r.std_f1), ""]).map_err(e)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// N×k projected coordinates.
    pub coords: Tensor,
    /// k×D principal axes, one per row.
    pub components: Tensor,
    /// Variance captured by each component, non-increasing.
    pub explained: Vec<f64>,
    pub mean: Vec<f64>,
    pub total_variance: f64,
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major, n×n).
/// Returns eigenvalues and the matrix of column eigenvectors.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Projects mean-centred rows onto the top-`k` covariance eigenvectors.
/// Each axis is signed so its largest-magnitude loading is positive.
pub fn pca_project(features: &Tensor, k: usize) -> Result<PcaResult> {
    if features.rank() != 2 {
        return Err(invalid(format!("expected an NxD matrix, got {:?}", features.shape())));
    }
    let (n, d) = (features.shape()[0], features.shape()[1]);
    if n < 2 {
        return Err(invalid("PCA needs at least 2 rows"));
    }
    if k == 0 || k > d {
        return Err(invalid(format!("cannot keep {k} components of {d}-dimensional data")));
    }
    let x = features.data();
    let mut mean = vec![0.0; d];
    for row in x.chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<f64> = x.chunks(d).flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m)).collect();
    let mut cov = vec![0.0; d * d];
    for row in centred.chunks(d) {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= (n - 1) as f64;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let total_variance = (0..d).map(|i| cov[i * d + i]).sum();
    let (vals, vecs) = symmetric_eigen(&cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut components = Vec::with_capacity(k * d);
    let mut explained = Vec::with_capacity(k);
    for &j in &order[..k] {
        let mut axis: Vec<f64> = (0..d).map(|i| vecs[i * d + j]).collect();
        let big = axis.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.extend(axis);
        explained.push(vals[j].max(0.0));
    }
    let coords: Vec<f64> = centred
        .chunks(d)
        .flat_map(|row| components.chunks(d).map(move |axis| row.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>()))
        .collect();
    Ok(PcaResult {
        coords: Tensor::new([n, k], coords)?,
        components: Tensor::new([k, d], components)?,
        explained,
        mean,
        total_variance,
    })
}

/// One PCA export row.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaRow {
    pub example_id: usize,
    pub subject: String,
    pub label: String,
    pub is_labeled: bool,
    pub pc1: f64,
    pub pc2: f64,
}

/// `example_id,subject,label,is_labeled,pc1,pc2`.
pub fn write_pca_csv<W: Write>(w: W, rows: &[PcaRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let e = |e: csv::Error| Error::Data(e.to_string());
    out.write_record(["example_id", "subject", "label", "is_labeled", "pc1", "pc2"]).map_err(e)?;
    for r in rows {
        out.write_record([
            r.example_id.to_string(),
            r.subject.clone(),
            r.label.clone(),
            u8::from(r.is_labeled).to_string(),
            format!("{:.6}", r.pc1),
            format!("{:.6}", r.pc2),
        ])
        .map_err(e)?;
    }
    out.flush()?;
    Ok(())
}
