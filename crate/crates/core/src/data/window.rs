use serde::{Deserialize, Serialize};

use super::SensorStream;
use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

/// One window: a C×T tensor plus its subject and (optional) class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Tensor,
    pub subject: String,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub examples: Vec<Example>,
    pub channels: usize,
    pub window_len: usize,
    /// Ordered class names; labels index into this list.
    pub classes: Vec<String>,
}

/// Window length and hop in samples.
pub fn window_geometry(rate_hz: f64, window_seconds: f64, overlap: f64) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(invalid(format!("overlap {overlap} must lie in [0, 1)")));
    }
    let t = (window_seconds * rate_hz).round();
    if !(window_seconds * rate_hz >= 1.0) || !t.is_finite() {
        return Err(invalid(format!("window of {window_seconds} s at {rate_hz} Hz is shorter than one sample")));
    }
    let t = t as usize;
    let hop = ((t as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    Ok((t, hop))
}

/// Sliding-window segmentation of one stream.
///
/// A window takes its majority sample label (unlabeled samples vote as
/// "unlabeled"); a tie for the most common label discards the window.
/// Classes are the sorted distinct labels seen in kept windows.
pub fn segment(stream: &SensorStream, window_seconds: f64, overlap: f64) -> Result<WindowedDataset> {
    stream.validate()?;
    let (t, hop) = window_geometry(stream.sample_rate_hz, window_seconds, overlap)?;
    let c = stream.n_channels();
    let mut kept: Vec<(usize, Option<&str>)> = Vec::new();
    let mut offset = 0;
    while offset + t <= stream.len() {
        if let Some(label) = majority(&stream.labels[offset..offset + t]) {
            kept.push((offset, label));
        }
        offset += hop;
    }
    let mut classes: Vec<String> = kept.iter().filter_map(|(_, l)| l.map(str::to_string)).collect();
    classes.sort();
    classes.dedup();
    let examples = kept
        .into_iter()
        .map(|(off, label)| {
            let mut data = Vec::with_capacity(c * t);
            for ch in &stream.channels {
                data.extend_from_slice(&ch[off..off + t]);
            }
            Example {
                x: Tensor::new([c, t], data).expect("sized"),
                subject: stream.subject.clone(),
                label: label.map(|l| classes.iter().position(|k| k == l).expect("collected")),
            }
        })
        .collect();
    Ok(WindowedDataset { examples, channels: c, window_len: t, classes })
}

/// `Some(label)` for a unique most common label, `None` on a tie.
fn majority(labels: &[Option<String>]) -> Option<Option<&str>> {
    let mut counts: Vec<(Option<&str>, usize)> = Vec::new();
    for l in labels {
        let l = l.as_deref();
        match counts.iter_mut().find(|(k, _)| *k == l) {
            Some((_, n)) => *n += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max()?;
    let mut winners = counts.iter().filter(|(_, n)| *n == best);
    let first = winners.next()?;
    if winners.next().is_some() {
        None
    } else {
        Some(first.0)
    }
}

/// Segments every stream and merges the results.
pub fn segment_all(streams: &[SensorStream], window_seconds: f64, overlap: f64) -> Result<WindowedDataset> {
    let parts = streams
        .iter()
        .map(|s| segment(s, window_seconds, overlap))
        .collect::<Result<Vec<_>>>()?;
    WindowedDataset::concat(parts)
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Merges datasets with the same geometry; the class list becomes the
    /// sorted union and labels are remapped onto it.
    pub fn concat(parts: Vec<WindowedDataset>) -> Result<WindowedDataset> {
        let geometry = parts.iter().find(|p| !p.is_empty()).or(parts.first()).map(|p| (p.channels, p.window_len));
        let (channels, window_len) = geometry.ok_or_else(|| invalid("nothing to concatenate"))?;
        let mut classes: Vec<String> = parts.iter().flat_map(|p| p.classes.iter().cloned()).collect();
        classes.sort();
        classes.dedup();
        let mut examples = Vec::new();
        for p in parts {
            if !p.is_empty() && (p.channels, p.window_len) != (channels, window_len) {
                return Err(Error::Data(format!(
                    "cannot merge {}x{} windows with {channels}x{window_len} windows",
                    p.channels, p.window_len
                )));
            }
            let map: Vec<usize> = p.classes.iter().map(|c| classes.binary_search(c).expect("union")).collect();
            examples.extend(p.examples.into_iter().map(|mut e| {
                e.label = e.label.map(|l| map[l]);
                e
            }));
        }
        Ok(WindowedDataset { examples, channels, window_len, classes })
    }

    /// Subjects in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.examples {
            if !out.contains(&e.subject) {
                out.push(e.subject.clone());
            }
        }
        out
    }

    pub fn ids_of_subject(&self, subject: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.examples[i].subject == subject).collect()
    }

    /// Stacks the selected windows into an N×C×T batch.
    pub fn batch(&self, ids: &[usize]) -> Result<Tensor> {
        let items = ids
            .iter()
            .map(|&i| self.examples.get(i).map(|e| &e.x).ok_or_else(|| invalid(format!("example {i} out of range"))))
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack(&items)
    }

    pub fn labels(&self, ids: &[usize]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|&i| {
                let e = self.examples.get(i).ok_or_else(|| invalid(format!("example {i} out of range")))?;
                e.label.ok_or_else(|| Error::Data(format!("example {i} is unlabeled")))
            })
            .collect()
    }

    /// Labeled example count per class.
    pub fn class_counts(&self, ids: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &i in ids {
            if let Some(l) = self.examples[i].label {
                counts[l] += 1;
            }
        }
        counts
    }
}

/// Per-channel z-score parameters fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Diagnostics for channels whose variance was zero (scale fell back to 1).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl NormStats {
    /// Fits over every sample of the selected windows (all windows if `ids` is `None`).
    pub fn fit(ds: &WindowedDataset, ids: Option<&[usize]>) -> Result<NormStats> {
        let all: Vec<usize>;
        let ids = match ids {
            Some(ids) => ids,
            None => {
                all = (0..ds.len()).collect();
                &all
            }
        };
        if ids.is_empty() {
            return Err(invalid("cannot fit normalization on an empty training split"));
        }
        let (c, t) = (ds.channels, ds.window_len);
        let n = (ids.len() * t) as f64;
        let mut mean = vec![0.0; c];
        for &i in ids {
            let x = ds.examples[i].x.data();
            for k in 0..c {
                mean[k] += x[k * t..(k + 1) * t].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for &i in ids {
            let x = ds.examples[i].x.data();
            for k in 0..c {
                var[k] += x[k * t..(k + 1) * t].iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>();
            }
        }
        let mut warnings = Vec::new();
        let scale = var
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 * mean[k].abs().max(1.0) {
                    sd
                } else {
                    warnings.push(format!("channel ch{k} has zero variance; using scale 1"));
                    1.0
                }
            })
            .collect();
        Ok(NormStats { mean, scale, warnings })
    }

    pub fn apply_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.mean.len();
        let t = x.len() / c.max(1);
        if c == 0 || x.len() != c * t || x.shape().len() != 2 || x.shape()[0] != c {
            return Err(invalid(format!("expected a {c}xT window, got {:?}", x.shape())));
        }
        let mut data = x.data().to_vec();
        for k in 0..c {
            for v in &mut data[k * t..(k + 1) * t] {
                *v = (*v - self.mean[k]) / self.scale[k];
            }
        }
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn apply(&self, ds: &WindowedDataset) -> Result<WindowedDataset> {
        if ds.channels != self.mean.len() {
            return Err(invalid(format!("stats cover {} channels, dataset has {}", self.mean.len(), ds.channels)));
        }
        let examples = ds
            .examples
            .iter()
            .map(|e| Ok(Example { x: self.apply_tensor(&e.x)?, ..e.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Ok(WindowedDataset { examples, ..ds.clone() })
    }
}

/// Fits on `train` and applies the same transform to it and to `others`.
pub fn normalize(
    train: &WindowedDataset,
    others: &[&WindowedDataset],
) -> Result<(WindowedDataset, Vec<WindowedDataset>, NormStats)> {
    let stats = NormStats::fit(train, None)?;
    let tr = stats.apply(train)?;
    let rest = others.iter().map(|d| stats.apply(d)).collect::<Result<Vec<_>>>()?;
    Ok((tr, rest, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(labels: Vec<Option<&str>>) -> SensorStream {
        let n = labels.len();
        SensorStream {
            subject: "S".into(),
            sample_rate_hz: 20.0,
            channel_names: vec!["ch0".into(), "ch1".into()],
            channels: vec![(0..n).map(|i| i as f64).collect(), vec![1.0; n]],
            labels: labels.into_iter().map(|l| l.map(str::to_string)).collect(),
            t: (0..n).map(|i| i as f64 / 20.0).collect(),
        }
    }

    #[test]
    fn two_second_half_overlap_geometry() {
        assert_eq!(window_geometry(20.0, 2.0, 0.5).unwrap(), (40, 20));
        assert!(window_geometry(20.0, 2.0, 1.0).is_err());
        assert!(window_geometry(20.0, 0.01, 0.0).is_err());
    }

    #[test]
    fn window_offsets_and_counts() {
        let ds = segment(&stream(vec![Some("a"); 100]), 2.0, 0.5).unwrap();
        assert_eq!(ds.len(), 4);
        let starts: Vec<f64> = ds.examples.iter().map(|e| e.x.data()[0]).collect();
        assert_eq!(starts, vec![0.0, 20.0, 40.0, 60.0]);
        assert_eq!(ds.examples[0].x.shape(), &[2, 40]);
        assert_eq!(segment(&stream(vec![Some("a"); 39]), 2.0, 0.5).unwrap().len(), 0);
    }

    #[test]
    fn majority_labels_and_ties() {
        let mut l = vec![Some("a"); 25];
        l.extend(vec![Some("b"); 15]);
        l.extend(vec![Some("b"); 20]);
        // windows: [0,40) a-majority; [20,60) 5 a vs 35 b
        let ds = segment(&stream(l), 2.0, 0.5).unwrap();
        assert_eq!(ds.classes, vec!["a", "b"]);
        assert_eq!(ds.examples.iter().map(|e| e.label).collect::<Vec<_>>(), vec![Some(0), Some(1)]);
        let mut tie = vec![Some("a"); 20];
        tie.extend(vec![Some("b"); 20]);
        assert!(segment(&stream(tie), 2.0, 0.0).unwrap().is_empty());
        let mut unl = vec![None; 30];
        unl.extend(vec![Some("a"); 10]);
        let ds = segment(&stream(unl), 2.0, 0.0).unwrap();
        assert_eq!(ds.examples[0].label, None);
    }

    #[test]
    fn concat_remaps_classes() {
        let mut a = stream(vec![Some("walk"); 40]);
        a.subject = "A".into();
        let mut b = stream(vec![Some("run"); 40]);
        b.subject = "B".into();
        let ds = segment_all(&[a, b], 2.0, 0.5).unwrap();
        assert_eq!(ds.classes, vec!["run", "walk"]);
        assert_eq!(ds.labels(&[0, 1]).unwrap(), vec![1, 0]);
        assert_eq!(ds.subjects(), vec!["A", "B"]);
    }

    #[test]
    fn normalization_values() {
        let mut s = stream(vec![Some("a"); 40]);
        s.channels[0] = (0..40).map(|i| if i % 2 == 0 { 3.0 } else { 7.0 }).collect();
        let ds = segment(&s, 2.0, 0.5).unwrap();
        let (tr, _, stats) = normalize(&ds, &[]).unwrap();
        assert_eq!(stats.mean, vec![5.0, 1.0]);
        assert_eq!(stats.scale, vec![2.0, 1.0]);
        assert_eq!(stats.warnings.len(), 1);
        assert!(stats.warnings[0].contains("ch1"));
        // 7 maps to (7 - 5) / 2 = 1; the constant channel maps to zeros
        assert_eq!(tr.examples[0].x.data()[1], 1.0);
        assert!(tr.examples[0].x.data()[40..].iter().all(|&v| v == 0.0));
        let json = serde_json::to_string(&stats).unwrap();
        assert_eq!(serde_json::from_str::<NormStats>(&json).unwrap(), stats);
        // a second application is not a no-op in general
        let twice = stats.apply(&tr).unwrap();
        assert_ne!(twice, tr);
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(len in 0usize..300, t in 1usize..60, overlap in 0.0f64..0.95) {
            let s = stream(vec![Some("a"); len]);
            let secs = t as f64 / 20.0;
            let (tt, hop) = window_geometry(20.0, secs, overlap).unwrap();
            prop_assert_eq!(tt, t);
            let ds = segment(&s, secs, overlap).unwrap();
            let expected = if len >= t { (len - t) / hop + 1 } else { 0 };
            let naive = (0..).map(|k| k * hop).take_while(|o| o + t <= len).count();
            prop_assert_eq!(ds.len(), expected);
            prop_assert_eq!(ds.len(), naive);
        }
    }
}
