use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Result<Tensor> {
    if x.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            op: "relu backward",
            left: x.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

fn rows(x: &Tensor) -> Result<usize> {
    if x.rank() < 2 {
        return Err(invalid(format!("softmax expects batch x classes, got {:?}", x.shape())));
    }
    Ok(x.len() / x.shape()[0])
}

/// Softmax over the class axis of `batch × classes` (or `batch × classes × 1`).
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let width = rows(x)?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(width) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Backward through softmax given its output `y`.
pub fn softmax_backward(y: &Tensor, grad: &Tensor) -> Result<Tensor> {
    if y.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            op: "softmax backward",
            left: y.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    let width = rows(y)?;
    let mut out = Vec::with_capacity(y.len());
    for (yr, gr) in y.data().chunks(width).zip(grad.data().chunks(width)) {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        out.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
    }
    Ok(Tensor::from_parts(y.shape().to_vec(), out))
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn dense_dims(x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize)> {
    let n = *x.shape().first().ok_or_else(|| invalid("dense input has no batch axis"))?;
    let d = x.len() / n;
    match w.shape() {
        &[u, wd] if wd == d && x.rank() >= 2 => Ok((n, d, u)),
        _ => Err(Error::ShapeMismatch {
            op: "dense",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        }),
    }
}

/// `y = x Wᵀ + b` with each example flattened; `W` is `units × features`.
/// Output is `batch × units × 1`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (n, d, u) = dense_dims(x, w)?;
    if let Some(b) = b {
        if b.shape() != [u] {
            return Err(Error::ShapeMismatch {
                op: "dense bias",
                left: vec![u],
                right: b.shape().to_vec(),
            });
        }
    }
    let mut out = vec![0.0; n * u];
    for (xr, orow) in x.data().chunks(d).zip(out.chunks_mut(u)) {
        for (j, o) in orow.iter_mut().enumerate() {
            let wr = &w.data()[j * d..(j + 1) * d];
            *o = wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() + b.map_or(0.0, |b| b.data()[j]);
        }
    }
    Ok(Tensor::from_parts(vec![n, u, 1], out))
}

pub fn dense_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> Result<DenseGrads> {
    let (n, d, u) = dense_dims(x, w)?;
    if grad.len() != n * u {
        return Err(Error::ShapeMismatch {
            op: "dense backward",
            left: vec![n, u, 1],
            right: grad.shape().to_vec(),
        });
    }
    let mut dx = vec![0.0; n * d];
    let mut dw = vec![0.0; u * d];
    let mut db = vec![0.0; u];
    for ((xr, gr), dxr) in x.data().chunks(d).zip(grad.data().chunks(u)).zip(dx.chunks_mut(d)) {
        for (j, &g) in gr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db[j] += g;
            let wr = &w.data()[j * d..(j + 1) * d];
            let dwr = &mut dw[j * d..(j + 1) * d];
            for k in 0..d {
                dxr[k] += g * wr[k];
                dwr[k] += g * xr[k];
            }
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_parts(x.shape().to_vec(), dx),
        weights: Tensor::from_parts(vec![u, d], dw),
        bias: Tensor::from_parts(vec![u], db),
    })
}
