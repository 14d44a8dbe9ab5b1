use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Valid,
    /// Zero-extension of the input by `left` and `right` samples.
    Zeros { left: usize, right: usize },
}

impl Padding {
    fn amounts(self) -> (usize, usize) {
        match self {
            Padding::Valid => (0, 0),
            Padding::Zeros { left, right } => (left, right),
        }
    }
}

/// Temporal convolution parameters: kernels are `out_ch × in_ch × k`.
#[derive(Debug, Clone)]
pub struct Conv1dParams {
    pub kernels: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv_output_len(len: usize, k: usize, stride: usize, padding: Padding) -> Option<usize> {
    let (l, r) = padding.amounts();
    let padded = len + l + r;
    if k == 0 || stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

struct Geometry {
    n: usize,
    cin: usize,
    len: usize,
    cout: usize,
    k: usize,
    out_len: usize,
    stride: usize,
    left: usize,
}

impl Geometry {
    fn new(x: &Tensor, kernels: &Tensor, stride: usize, padding: Padding) -> Result<Self> {
        let (n, cin, len) = x.dims3()?;
        let (cout, kin, k) = match kernels.shape() {
            &[o, i, k] => (o, i, k),
            s => return Err(invalid(format!("conv kernels must be out x in x k, got {s:?}"))),
        };
        if kin != cin {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                left: x.shape().to_vec(),
                right: kernels.shape().to_vec(),
            });
        }
        if stride == 0 {
            return Err(invalid("conv stride must be >= 1"));
        }
        let out_len = conv_output_len(len, k, stride, padding).ok_or_else(|| {
            invalid(format!("conv input length {len} is shorter than kernel k={k}"))
        })?;
        Ok(Self {
            n,
            cin,
            len,
            cout,
            k,
            out_len,
            stride,
            left: padding.amounts().0,
        })
    }

    /// Output positions `t` for which input index `t·stride + tap − left` is in range.
    fn t_range(&self, tap: usize) -> std::ops::Range<usize> {
        // t·s + tap >= left  and  t·s + tap - left < len
        let lo = if tap >= self.left {
            0
        } else {
            (self.left - tap).div_ceil(self.stride)
        };
        let hi_excl = {
            let limit = self.len + self.left; // t·s + tap < limit
            if limit <= tap {
                0
            } else {
                ((limit - tap - 1) / self.stride + 1).min(self.out_len)
            }
        };
        lo.min(hi_excl)..hi_excl
    }
}

pub fn conv1d_forward(
    x: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let g = Geometry::new(x, kernels, stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.cout] {
            return Err(Error::ShapeMismatch {
                op: "conv1d bias",
                left: vec![g.cout],
                right: b.shape().to_vec(),
            });
        }
    }
    let xd = x.data();
    let wd = kernels.data();
    let mut out = vec![0.0; g.n * g.cout * g.out_len];
    for n in 0..g.n {
        for o in 0..g.cout {
            let orow = &mut out[(n * g.cout + o) * g.out_len..][..g.out_len];
            if let Some(b) = bias {
                orow.fill(b.data()[o]);
            }
            for c in 0..g.cin {
                let xrow = &xd[(n * g.cin + c) * g.len..][..g.len];
                let wrow = &wd[(o * g.cin + c) * g.k..][..g.k];
                for (tap, &w) in wrow.iter().enumerate() {
                    let range = g.t_range(tap);
                    if g.stride == 1 {
                        let start = range.start + tap - g.left;
                        let cnt = range.len();
                        for (ov, &xv) in orow[range].iter_mut().zip(&xrow[start..start + cnt]) {
                            *ov += w * xv;
                        }
                    } else {
                        for t in range {
                            *orow.get_mut(t).unwrap() += w * xrow[t * g.stride + tap - g.left];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.n, g.cout, g.out_len], out))
}

pub fn conv1d_backward(
    x: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<Conv1dGrads> {
    let g = Geometry::new(x, kernels, stride, padding)?;
    if grad_out.shape() != [g.n, g.cout, g.out_len] {
        return Err(Error::ShapeMismatch {
            op: "conv1d backward",
            left: vec![g.n, g.cout, g.out_len],
            right: grad_out.shape().to_vec(),
        });
    }
    let xd = x.data();
    let wd = kernels.data();
    let gd = grad_out.data();
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    let mut db = vec![0.0; g.cout];
    for n in 0..g.n {
        for o in 0..g.cout {
            let grow = &gd[(n * g.cout + o) * g.out_len..][..g.out_len];
            db[o] += grow.iter().sum::<f64>();
            for c in 0..g.cin {
                let xoff = (n * g.cin + c) * g.len;
                let woff = (o * g.cin + c) * g.k;
                for tap in 0..g.k {
                    let w = wd[woff + tap];
                    let mut acc = 0.0;
                    let range = g.t_range(tap);
                    if g.stride == 1 {
                        let start = xoff + range.start + tap - g.left;
                        let gs = &grow[range.clone()];
                        let xs = &xd[start..start + gs.len()];
                        for (&xv, &gv) in xs.iter().zip(gs) {
                            acc += xv * gv;
                        }
                        for (d, &gv) in dx[start..start + gs.len()].iter_mut().zip(gs) {
                            *d += w * gv;
                        }
                        dw[woff + tap] += acc;
                        continue;
                    }
                    for t in range {
                        let j = t * g.stride + tap - g.left;
                        acc += xd[xoff + j] * grow[t];
                        dx[xoff + j] += w * grow[t];
                    }
                    dw[woff + tap] += acc;
                }
            }
        }
    }
    Ok(Conv1dGrads {
        input: Tensor::from_parts(x.shape().to_vec(), dx),
        kernels: Tensor::from_parts(kernels.shape().to_vec(), dw),
        bias: Tensor::from_parts(vec![g.cout], db),
    })
}

/// Valid (or zero-extended) cross-correlation over time, summed over input channels.
pub fn conv1d(x: &Tensor, p: &Conv1dParams) -> Result<Tensor> {
    conv1d_forward(x, &p.kernels, p.bias.as_ref(), p.stride, p.padding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian, gradient_check, Rng};

    #[test]
    fn output_length_valid() {
        assert_eq!(conv_output_len(40, 5, 1, Padding::Valid), Some(36));
        assert_eq!(conv_output_len(10, 3, 2, Padding::Valid), Some(4));
        assert_eq!(conv_output_len(2, 3, 1, Padding::Valid), None);
        assert_eq!(conv_output_len(36, 5, 1, Padding::Zeros { left: 4, right: 4 }), Some(40));
    }

    #[test]
    fn hand_convolution() {
        let x = Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::zeros(vec![1]);
        let y = conv1d_forward(&x, &k, Some(&b), 1, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        assert_eq!(y.data(), &[3.0, 5.0]);
    }

    #[test]
    fn strided_and_padded() {
        let x = Tensor::new(vec![1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 2], vec![1.0, 10.0]).unwrap();
        let y = conv1d_forward(&x, &k, None, 2, Padding::Valid).unwrap();
        assert_eq!(y.data(), &[21.0, 43.0]);
        let y = conv1d_forward(&x, &k, None, 1, Padding::Zeros { left: 1, right: 1 }).unwrap();
        assert_eq!(y.data(), &[10.0, 21.0, 32.0, 43.0, 54.0, 5.0]);
    }

    #[test]
    fn short_input_names_lengths() {
        let x = Tensor::zeros(vec![1, 1, 2]);
        let k = Tensor::zeros(vec![1, 1, 3]);
        let err = conv1d_forward(&x, &k, None, 1, Padding::Valid).unwrap_err().to_string();
        assert!(err.contains("length 2") && err.contains("k=3"), "{err}");
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::zeros(vec![1, 2, 8]);
        let k = Tensor::zeros(vec![1, 3, 3]);
        assert!(matches!(
            conv1d_forward(&x, &k, None, 1, Padding::Valid),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn check_conv(stride: usize, padding: Padding) {
        let mut rng = Rng::new(17);
        let x = gaussian(&mut rng, &[2, 3, 12], 1.0).unwrap();
        let k = gaussian(&mut rng, &[4, 3, 3], 1.0).unwrap();
        let b = gaussian(&mut rng, &[4], 1.0).unwrap();
        let y = conv1d_forward(&x, &k, Some(&b), stride, padding).unwrap();
        let up = gaussian(&mut rng, y.shape(), 1.0).unwrap();
        let grads = conv1d_backward(&x, &k, stride, padding, &up).unwrap();
        let params = vec![("x".into(), x), ("k".into(), k), ("b".into(), b)];
        let report = gradient_check(
            &params,
            &[grads.input, grads.kernels, grads.bias],
            |p| {
                let y = conv1d_forward(&p[0].1, &p[1].1, Some(&p[2].1), stride, padding)?;
                Ok(y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }

    #[test]
    fn backward_matches_finite_differences() {
        check_conv(1, Padding::Valid);
        check_conv(2, Padding::Valid);
        check_conv(1, Padding::Zeros { left: 2, right: 1 });
        check_conv(3, Padding::Zeros { left: 1, right: 2 });
    }

    #[test]
    fn linear_without_bias() {
        let mut rng = Rng::new(5);
        let a = gaussian(&mut rng, &[2, 2, 9], 1.0).unwrap();
        let b = gaussian(&mut rng, &[2, 2, 9], 1.0).unwrap();
        let k = gaussian(&mut rng, &[3, 2, 4], 1.0).unwrap();
        let combo = a.scale(2.5).unwrap().add(&b.scale(-0.5).unwrap()).unwrap();
        let lhs = conv1d_forward(&combo, &k, None, 1, Padding::Valid).unwrap();
        let rhs = conv1d_forward(&a, &k, None, 1, Padding::Valid)
            .unwrap()
            .scale(2.5)
            .unwrap()
            .add(&conv1d_forward(&b, &k, None, 1, Padding::Valid).unwrap().scale(-0.5).unwrap())
            .unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            assert!((l - r).abs() < 1e-12);
        }
    }
}
