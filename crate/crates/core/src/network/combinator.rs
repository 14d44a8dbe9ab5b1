use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

/// Number of scalars per channel in a combinator.
pub const COMBINATOR_ARITY: usize = 10;

/// Per-channel denoising combinator weights, stored as a `10 × channels` tensor.
///
/// Row `i` holds `a_{i+1}` for each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinatorParams {
    pub a: Tensor,
}

impl CombinatorParams {
    /// `μ ≡ 0`, `υ ≡ 1`: output equals the lateral input.
    pub fn pass_through(channels: usize) -> Self {
        let mut a = vec![0.0; COMBINATOR_ARITY * channels];
        for c in 0..channels {
            a[channels + c] = 1.0; // a2
            a[6 * channels + c] = 1.0; // a7
            a[9 * channels + c] = 1.0; // a10
        }
        Self {
            a: Tensor::from_parts(vec![COMBINATOR_ARITY, channels], a),
        }
    }

    pub fn channels(&self) -> usize {
        self.a.shape()[1]
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check(zt: &Tensor, u: &Tensor, a: &Tensor) -> Result<(usize, usize, usize)> {
    if zt.shape() != u.shape() {
        return Err(Error::ShapeMismatch {
            op: "combinator",
            left: zt.shape().to_vec(),
            right: u.shape().to_vec(),
        });
    }
    let (n, c, l) = zt.dims3()?;
    if a.shape() != [COMBINATOR_ARITY, c] {
        return Err(Error::ShapeMismatch {
            op: "combinator params",
            left: vec![COMBINATOR_ARITY, c],
            right: a.shape().to_vec(),
        });
    }
    Ok((n, c, l))
}

#[derive(Clone, Copy)]
struct Coeffs([f64; COMBINATOR_ARITY]);

impl Coeffs {
    fn of(a: &Tensor, c: usize, ch: usize) -> Self {
        let mut k = [0.0; COMBINATOR_ARITY];
        for (i, v) in k.iter_mut().enumerate() {
            *v = a.data()[i * c + ch];
        }
        Coeffs(k)
    }
}

/// `ẑ = (z̃ − μ(u))·υ(u) + μ(u)` with
/// `μ(u) = a₁σ(a₂u+a₃) + a₄u + a₅` and `υ(u) = a₆σ(a₇u+a₈) + a₉u + a₁₀`.
pub fn combinator_forward(zt: &Tensor, u: &Tensor, p: &Tensor) -> Result<Tensor> {
    let (n, c, l) = check(zt, u, p)?;
    let mut out = vec![0.0; zt.len()];
    for b in 0..n {
        for ch in 0..c {
            let Coeffs(a) = Coeffs::of(p, c, ch);
            let off = (b * c + ch) * l;
            for t in off..off + l {
                let uv = u.data()[t];
                let mu = a[0] * sigmoid(a[1] * uv + a[2]) + a[3] * uv + a[4];
                let up = a[5] * sigmoid(a[6] * uv + a[7]) + a[8] * uv + a[9];
                out[t] = (zt.data()[t] - mu) * up + mu;
            }
        }
    }
    let y = Tensor::from_parts(zt.shape().to_vec(), out);
    if !y.is_finite() {
        return Err(Error::NonFinite("combinator output".into()));
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct CombinatorGrads {
    pub lateral: Tensor,
    pub vertical: Tensor,
    pub params: Tensor,
}

pub fn combinator_backward(zt: &Tensor, u: &Tensor, p: &Tensor, grad: &Tensor) -> Result<CombinatorGrads> {
    let (n, c, l) = check(zt, u, p)?;
    if grad.shape() != zt.shape() {
        return Err(invalid("combinator backward: gradient shape differs from input"));
    }
    let mut dz = vec![0.0; zt.len()];
    let mut du = vec![0.0; zt.len()];
    let mut da = vec![0.0; p.len()];
    for ch in 0..c {
        let Coeffs(a) = Coeffs::of(p, c, ch);
        let mut acc = [0.0; COMBINATOR_ARITY];
        for b in 0..n {
            let off = (b * c + ch) * l;
            for t in off..off + l {
                let g = grad.data()[t];
                let uv = u.data()[t];
                let s1 = sigmoid(a[1] * uv + a[2]);
                let s2 = sigmoid(a[6] * uv + a[7]);
                let mu = a[0] * s1 + a[3] * uv + a[4];
                let up = a[5] * s2 + a[8] * uv + a[9];
                let z = zt.data()[t];
                let g_mu = g * (1.0 - up);
                let g_up = g * (z - mu);
                dz[t] = g * up;
                let ds1 = s1 * (1.0 - s1);
                let ds2 = s2 * (1.0 - s2);
                du[t] = g_mu * (a[0] * ds1 * a[1] + a[3]) + g_up * (a[5] * ds2 * a[6] + a[8]);
                acc[0] += g_mu * s1;
                acc[1] += g_mu * a[0] * ds1 * uv;
                acc[2] += g_mu * a[0] * ds1;
                acc[3] += g_mu * uv;
                acc[4] += g_mu;
                acc[5] += g_up * s2;
                acc[6] += g_up * a[5] * ds2 * uv;
                acc[7] += g_up * a[5] * ds2;
                acc[8] += g_up * uv;
                acc[9] += g_up;
            }
        }
        for (i, v) in acc.iter().enumerate() {
            da[i * c + ch] = *v;
        }
    }
    Ok(CombinatorGrads {
        lateral: Tensor::from_parts(zt.shape().to_vec(), dz),
        vertical: Tensor::from_parts(zt.shape().to_vec(), du),
        params: Tensor::from_parts(p.shape().to_vec(), da),
    })
}

/// Evaluates the combinator with [`CombinatorParams`].
pub fn combinator_g(zt: &Tensor, u: &Tensor, p: &CombinatorParams) -> Result<Tensor> {
    combinator_forward(zt, u, &p.a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian, gradient_check, Rng};

    #[test]
    fn pass_through_returns_lateral() {
        let mut rng = Rng::new(1);
        let zt = gaussian(&mut rng, &[3, 4, 5], 1.0).unwrap();
        let u = gaussian(&mut rng, &[3, 4, 5], 1.0).unwrap();
        let y = combinator_g(&zt, &u, &CombinatorParams::pass_through(4)).unwrap();
        assert_eq!(y.data(), zt.data());
    }

    #[test]
    fn constant_a5_ignores_lateral() {
        let mut rng = Rng::new(2);
        let zt = gaussian(&mut rng, &[2, 3, 4], 1.0).unwrap();
        let u = gaussian(&mut rng, &[2, 3, 4], 1.0).unwrap();
        let mut a = vec![0.0; 30];
        for ch in 0..3 {
            a[4 * 3 + ch] = 0.5 + ch as f64;
        }
        let p = Tensor::new(vec![10, 3], a).unwrap();
        let y = combinator_forward(&zt, &u, &p).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let ch = (i / 4) % 3;
            assert_eq!(*v, 0.5 + ch as f64);
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3, 4]);
        let b = Tensor::zeros(vec![2, 3, 5]);
        assert!(combinator_g(&a, &b, &CombinatorParams::pass_through(3)).is_err());
        assert!(combinator_g(&a, &a, &CombinatorParams::pass_through(2)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let zt = gaussian(&mut rng, &[3, 2, 4], 1.0).unwrap();
        let u = gaussian(&mut rng, &[3, 2, 4], 1.0).unwrap();
        let p = gaussian(&mut rng, &[10, 2], 0.8).unwrap();
        let up = gaussian(&mut rng, &[3, 2, 4], 1.0).unwrap();
        let g = combinator_backward(&zt, &u, &p, &up).unwrap();
        let params = vec![("zt".into(), zt), ("u".into(), u), ("a".into(), p)];
        let report = gradient_check(
            &params,
            &[g.lateral, g.vertical, g.params],
            |q| {
                let y = combinator_forward(&q[0].1, &q[1].1, &q[2].1)?;
                Ok(y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }
}
