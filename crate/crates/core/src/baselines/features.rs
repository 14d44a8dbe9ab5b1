use crate::error::{invalid, Result};
use crate::numcore::Tensor;

/// `4·C + C·(C−1)/2`.
pub fn feature_len(channels: usize) -> usize {
    4 * channels + channels * channels.saturating_sub(1) / 2
}

/// Column names in extraction order.
pub fn feature_names(channels: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(feature_len(channels));
    for stat in ["mean", "std", "max", "min"] {
        out.extend((0..channels).map(|c| format!("{stat}_ch{c}")));
    }
    for i in 0..channels {
        for j in i + 1..channels {
            out.push(format!("corr_ch{i}_ch{j}"));
        }
    }
    out
}

/// Means, population stds, maxes, mins, then Pearson correlations for every
/// channel pair `i < j` (0 when either channel is constant).
pub fn extract_features(window: &Tensor) -> Result<Vec<f64>> {
    let [c, t] = window.shape() else {
        return Err(invalid(format!("feature extraction needs a C×T window, got {:?}", window.shape())));
    };
    let (c, t) = (*c, *t);
    if t < 2 {
        return Err(invalid(format!("feature extraction needs at least 2 samples, got {t}")));
    }
    let rows: Vec<&[f64]> = window.data().chunks(t).collect();
    let n = t as f64;
    let means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = rows.iter().zip(&means).map(|(r, m)| r.iter().map(|v| v - m).collect()).collect();
    let ss: Vec<f64> = centered.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).collect();
    let mut out = Vec::with_capacity(feature_len(c));
    out.extend_from_slice(&means);
    out.extend(ss.iter().map(|s| (s / n).sqrt()));
    out.extend(rows.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    out.extend(rows.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)));
    for i in 0..c {
        for j in i + 1..c {
            let denom = (ss[i] * ss[j]).sqrt();
            let r = if denom > 0.0 {
                let cov: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (cov / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out.push(r);
        }
    }
    Ok(out)
}

/// Features of every window in an `N×C×T` batch, as `N×D`.
pub fn feature_matrix(x: &Tensor) -> Result<Tensor> {
    let (n, c, t) = x.dims3()?;
    let mut data = Vec::with_capacity(n * feature_len(c));
    for w in x.data().chunks(c * t) {
        data.extend(extract_features(&Tensor::new(vec![c, t], w.to_vec())?)?);
    }
    Tensor::new(vec![n, feature_len(c)], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn win(rows: &[&[f64]]) -> Tensor {
        let t = rows[0].len();
        Tensor::new(vec![rows.len(), t], rows.concat()).unwrap()
    }

    #[test]
    fn constant_window() {
        let f = extract_features(&win(&[&[2.0; 5], &[-1.0; 5]])).unwrap();
        assert_eq!(f, vec![2.0, -1.0, 0.0, 0.0, 2.0, -1.0, 2.0, -1.0, 0.0]);
    }

    #[test]
    fn perfectly_dependent_channels() {
        let a = [0.5, -1.0, 3.0, 2.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let neg: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let f = extract_features(&win(&[&a, &b, &neg])).unwrap();
        assert_eq!(f.len(), 15);
        assert!((f[12] - 1.0).abs() < 1e-12);
        assert!((f[13] + 1.0).abs() < 1e-12);
        assert!((f[14] + 1.0).abs() < 1e-12);
        // population std of `a`
        let m = 1.125;
        let sd = (a.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 4.0).sqrt();
        assert!((f[3] - sd).abs() < 1e-12 && (f[4] - 2.0 * sd).abs() < 1e-12);
        assert_eq!(feature_names(3)[12], "corr_ch0_ch1");
    }

    #[test]
    fn short_windows_are_rejected() {
        assert!(extract_features(&win(&[&[1.0]])).is_err());
        assert!(extract_features(&Tensor::zeros([2, 3, 4])).is_err());
    }

    proptest! {
        #[test]
        fn shifting_a_channel(vals in proptest::collection::vec(-5.0f64..5.0, 12), shift in -10.0f64..10.0, ch in 0usize..3) {
            let x = Tensor::new(vec![3, 4], vals.clone()).unwrap();
            let mut moved = vals;
            for v in &mut moved[ch * 4..(ch + 1) * 4] {
                *v += shift;
            }
            let a = extract_features(&x).unwrap();
            let b = extract_features(&Tensor::new(vec![3, 4], moved).unwrap()).unwrap();
            prop_assert_eq!(a.len(), feature_len(3));
            for (k, (u, v)) in a.iter().zip(&b).enumerate() {
                let stat = k / 3;
                let want = if stat < 4 && stat != 1 && k % 3 == ch { u + shift } else { *u };
                prop_assert!((v - want).abs() < 1e-9 * (1.0 + want.abs()), "feature {}: {} vs {}", k, v, want);
            }
            prop_assert!(a[12..].iter().all(|r| (-1.0..=1.0).contains(r)));
        }
    }
}
