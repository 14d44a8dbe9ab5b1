use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and update running statistics.
    Train,
    /// Normalize with running statistics.
    Eval,
}

/// Per-channel normalization state for `batch × channels × length` inputs.
/// Statistics are taken over batch and time for each channel.
#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::ones(vec![channels]),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::ones(vec![channels]),
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn update_running(&mut self, batch_mean: &Tensor, batch_var: &Tensor) {
        update_running_stats(
            &mut self.running_mean,
            &mut self.running_var,
            batch_mean,
            batch_var,
            self.momentum,
        );
    }
}

pub fn update_running_stats(
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    batch_mean: &Tensor,
    batch_var: &Tensor,
    momentum: f64,
) {
    for (r, b) in running_mean.data_mut().iter_mut().zip(batch_mean.data()) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
    for (r, b) in running_var.data_mut().iter_mut().zip(batch_var.data()) {
        *r = ((1.0 - momentum) * *r + momentum * b).max(0.0);
    }
}

/// Values saved by the training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Tensor,
    pub var: Tensor,
    pub xhat: Tensor,
    inv_std: Vec<f64>,
}

fn check_affine(c: usize, t: Option<&Tensor>, what: &'static str) -> Result<()> {
    match t {
        Some(t) if t.shape() != [c] => Err(Error::ShapeMismatch {
            op: what,
            left: vec![c],
            right: t.shape().to_vec(),
        }),
        _ => Ok(()),
    }
}

fn affine(xhat: &[f64], n: usize, c: usize, l: usize, gamma: Option<&Tensor>, beta: Option<&Tensor>) -> Vec<f64> {
    let mut out = xhat.to_vec();
    for b in 0..n {
        for ch in 0..c {
            let g = gamma.map_or(1.0, |t| t.data()[ch]);
            let s = beta.map_or(0.0, |t| t.data()[ch]);
            for v in &mut out[(b * c + ch) * l..][..l] {
                *v = g * *v + s;
            }
        }
    }
    out
}

pub fn batchnorm_train_forward(
    x: &Tensor,
    gamma: Option<&Tensor>,
    beta: Option<&Tensor>,
    eps: f64,
) -> Result<(Tensor, BnCache)> {
    let (n, c, l) = x.dims3()?;
    if n < 2 {
        return Err(invalid("batch normalization in train mode needs a batch of at least 2"));
    }
    check_affine(c, gamma, "batchnorm gamma")?;
    check_affine(c, beta, "batchnorm beta")?;
    let xd = x.data();
    let m = (n * l) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            s += xd[(b * c + ch) * l..][..l].iter().sum::<f64>();
        }
        let mu = s / m;
        let mut ss = 0.0;
        for b in 0..n {
            ss += xd[(b * c + ch) * l..][..l].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = ss / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; xd.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * l;
            for t in 0..l {
                xhat[off + t] = (xd[off + t] - mean[ch]) * inv_std[ch];
            }
        }
    }
    let y = affine(&xhat, n, c, l, gamma, beta);
    Ok((
        Tensor::from_parts(vec![n, c, l], y),
        BnCache {
            mean: Tensor::from_parts(vec![c], mean),
            var: Tensor::from_parts(vec![c], var),
            xhat: Tensor::from_parts(vec![n, c, l], xhat),
            inv_std,
        },
    ))
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_train_backward(
    cache: &BnCache,
    gamma: Option<&Tensor>,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, l) = cache.xhat.dims3()?;
    if grad.shape() != cache.xhat.shape() {
        return Err(Error::ShapeMismatch {
            op: "batchnorm backward",
            left: cache.xhat.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    let gd = grad.data();
    let xh = cache.xhat.data();
    let m = (n * l) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut dx = vec![0.0; gd.len()];
    for ch in 0..c {
        let g = gamma.map_or(1.0, |t| t.data()[ch]);
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for b in 0..n {
            let off = (b * c + ch) * l;
            for t in 0..l {
                let d = gd[off + t];
                dbeta[ch] += d;
                dgamma[ch] += d * xh[off + t];
                sum_d += d * g;
                sum_dx += d * g * xh[off + t];
            }
        }
        let k = cache.inv_std[ch] / m;
        for b in 0..n {
            let off = (b * c + ch) * l;
            for t in 0..l {
                let dxhat = gd[off + t] * g;
                dx[off + t] = k * (m * dxhat - sum_d - xh[off + t] * sum_dx);
            }
        }
    }
    Ok((
        Tensor::from_parts(vec![n, c, l], dx),
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    ))
}

pub fn batchnorm_eval_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let (n, c, l) = x.dims3()?;
    for (t, what) in [(gamma, "gamma"), (beta, "beta"), (mean, "running mean"), (var, "running var")] {
        if t.shape() != [c] {
            return Err(Error::ShapeMismatch {
                op: if what == "gamma" { "batchnorm eval gamma" } else { "batchnorm eval stats" },
                left: vec![c],
                right: t.shape().to_vec(),
            });
        }
    }
    let mut out = x.data().to_vec();
    for b in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (var.data()[ch] + eps).sqrt();
            let (g, s, mu) = (gamma.data()[ch], beta.data()[ch], mean.data()[ch]);
            for v in &mut out[(b * c + ch) * l..][..l] {
                *v = g * (*v - mu) * inv + s;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, c, l], out))
}

/// Backward of the eval-mode transform; statistics are constants.
pub fn batchnorm_eval_backward(
    x: &Tensor,
    gamma: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f64,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, l) = x.dims3()?;
    let mut dx = vec![0.0; x.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (var.data()[ch] + eps).sqrt();
            let off = (b * c + ch) * l;
            for t in 0..l {
                let g = grad.data()[off + t];
                dx[off + t] = g * gamma.data()[ch] * inv;
                dgamma[ch] += g * (x.data()[off + t] - mean.data()[ch]) * inv;
                dbeta[ch] += g;
            }
        }
    }
    Ok((
        Tensor::from_parts(vec![n, c, l], dx),
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    ))
}

/// Full batch-norm layer step: in train mode the running statistics are updated.
pub fn batchnorm(x: &Tensor, p: &mut BatchNormParams, mode: BnMode) -> Result<Tensor> {
    match mode {
        BnMode::Train => {
            let (y, cache) = batchnorm_train_forward(x, Some(&p.gamma), Some(&p.beta), p.epsilon)?;
            p.update_running(&cache.mean, &cache.var);
            Ok(y)
        }
        BnMode::Eval => batchnorm_eval_forward(
            x,
            &p.gamma,
            &p.beta,
            &p.running_mean,
            &p.running_var,
            p.epsilon,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian, gradient_check, Rng};

    #[test]
    fn two_point_standardization() {
        let x = Tensor::new(vec![2, 3, 1], vec![1.0, 1.0, 1.0, 3.0, 3.0, 3.0]).unwrap();
        let mut p = BatchNormParams::new(3);
        let y = batchnorm(&x, &mut p, BnMode::Train).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let expect = if i < 3 { -1.0 } else { 1.0 };
            assert!((v - expect).abs() < 1e-4, "{v}");
        }
        // running stats moved by momentum toward (2, 1)
        assert!((p.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((p.running_var.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_law() {
        let mut rng = Rng::new(3);
        let x = gaussian(&mut rng, &[64, 2, 5], 1.0).unwrap();
        let mut p = BatchNormParams::new(2);
        p.gamma = Tensor::full(vec![2], 2.0);
        p.beta = Tensor::full(vec![2], 5.0);
        let y = batchnorm(&x, &mut p, BnMode::Train).unwrap();
        let (n, c, l) = y.dims3().unwrap();
        for ch in 0..c {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| y.data()[(b * c + ch) * l..][..l].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            assert!((mean - 5.0).abs() < 1e-9);
            assert!((std - 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train() {
        let x = Tensor::zeros(vec![1, 2, 1]);
        let mut p = BatchNormParams::new(2);
        assert!(batchnorm(&x, &mut p, BnMode::Train).is_err());
        assert!(batchnorm(&x, &mut p, BnMode::Eval).is_ok());
    }

    #[test]
    fn eval_uses_running_stats() {
        let x = Tensor::new(vec![1, 1, 2], vec![3.0, 7.0]).unwrap();
        let mut p = BatchNormParams::new(1);
        p.running_mean = Tensor::from_vec(vec![5.0]).unwrap();
        p.running_var = Tensor::from_vec(vec![4.0 - p.epsilon]).unwrap();
        let y = batchnorm(&x, &mut p, BnMode::Eval).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn train_gradient_check() {
        let mut rng = Rng::new(21);
        let x = gaussian(&mut rng, &[4, 6, 1], 1.0).unwrap();
        let gamma = gaussian(&mut rng, &[6], 1.0).unwrap();
        let beta = gaussian(&mut rng, &[6], 1.0).unwrap();
        let up = gaussian(&mut rng, &[4, 6, 1], 1.0).unwrap();
        let (_, cache) = batchnorm_train_forward(&x, Some(&gamma), Some(&beta), BN_EPSILON).unwrap();
        let (dx, dg, db) = batchnorm_train_backward(&cache, Some(&gamma), &up).unwrap();
        let params = vec![("x".into(), x), ("gamma".into(), gamma), ("beta".into(), beta)];
        let report = gradient_check(
            &params,
            &[dx, dg, db],
            |p| {
                let (y, _) = batchnorm_train_forward(&p[0].1, Some(&p[1].1), Some(&p[2].1), BN_EPSILON)?;
                Ok(y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
            },
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }

    #[test]
    fn train_gradient_check_with_length() {
        let mut rng = Rng::new(22);
        let x = gaussian(&mut rng, &[3, 2, 5], 1.0).unwrap();
        let up = gaussian(&mut rng, &[3, 2, 5], 1.0).unwrap();
        let (_, cache) = batchnorm_train_forward(&x, None, None, BN_EPSILON).unwrap();
        let (dx, _, _) = batchnorm_train_backward(&cache, None, &up).unwrap();
        let params = vec![("x".into(), x)];
        let report = gradient_check(
            &params,
            &[dx],
            |p| {
                let (y, _) = batchnorm_train_forward(&p[0].1, None, None, BN_EPSILON)?;
                Ok(y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }

    #[test]
    fn eval_gradient_check() {
        let mut rng = Rng::new(23);
        let x = gaussian(&mut rng, &[2, 3, 4], 1.0).unwrap();
        let gamma = gaussian(&mut rng, &[3], 1.0).unwrap();
        let beta = gaussian(&mut rng, &[3], 1.0).unwrap();
        let mean = gaussian(&mut rng, &[3], 1.0).unwrap();
        let var = Tensor::from_vec(vec![0.5, 1.0, 2.0]).unwrap();
        let up = gaussian(&mut rng, &[2, 3, 4], 1.0).unwrap();
        let (dx, dg, db) = batchnorm_eval_backward(&x, &gamma, &mean, &var, BN_EPSILON, &up).unwrap();
        let params = vec![("x".into(), x), ("gamma".into(), gamma), ("beta".into(), beta)];
        let report = gradient_check(
            &params,
            &[dx, dg, db],
            |p| {
                let y = batchnorm_eval_forward(&p[0].1, &p[1].1, &p[2].1, &mean, &var, BN_EPSILON)?;
                Ok(y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }
}
