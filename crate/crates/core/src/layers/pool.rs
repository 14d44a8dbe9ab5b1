use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

/// Argmax positions memorized by a max-pool, used for unpooling and backward.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    pub size: usize,
    pub stride: usize,
    pub in_len: usize,
    /// Pooled output shape `batch × channels × out_len`.
    pub shape: [usize; 3],
    /// Absolute input positions within each `(batch, channel)` row.
    pub indices: Vec<usize>,
}

pub fn pool_output_len(len: usize, size: usize, stride: usize) -> Option<usize> {
    if size == 0 || stride == 0 || len < size {
        return None;
    }
    Some((len - size) / stride + 1)
}

/// Window maxima along time; ties go to the lowest index.
pub fn maxpool1d(x: &Tensor, size: usize, stride: usize) -> Result<(Tensor, PoolRecord)> {
    if size < 1 || stride < 1 {
        return Err(invalid(format!(
            "maxpool size and stride must be >= 1, got size={size} stride={stride}"
        )));
    }
    let (n, c, len) = x.dims3()?;
    let out_len = pool_output_len(len, size, stride)
        .ok_or_else(|| invalid(format!("maxpool input length {len} is shorter than size {size}")))?;
    let mut out = Vec::with_capacity(n * c * out_len);
    let mut indices = Vec::with_capacity(n * c * out_len);
    for row in x.data().chunks(len) {
        for t in 0..out_len {
            let start = t * stride;
            let mut best = start;
            for j in start + 1..start + size {
                if row[j] > row[best] {
                    best = j;
                }
            }
            out.push(row[best]);
            indices.push(best);
        }
    }
    let record = PoolRecord {
        size,
        stride,
        in_len: len,
        shape: [n, c, out_len],
        indices,
    };
    Ok((Tensor::from_parts(vec![n, c, out_len], out), record))
}

/// Places `v` at the memorized argmax positions of a length-`out_len` signal.
///
/// Re-pooling the result recovers `v` when windows do not overlap and `v` is
/// non-negative, which is the case for pooled ReLU feature maps.
pub fn unpool1d(v: &Tensor, rec: &PoolRecord, out_len: usize) -> Result<Tensor> {
    let (n, c, len) = v.dims3()?;
    if [n, c, len] != rec.shape {
        return Err(Error::ShapeMismatch {
            op: "unpool1d",
            left: v.shape().to_vec(),
            right: rec.shape.to_vec(),
        });
    }
    let mut out = vec![0.0; n * c * out_len];
    for (r, (vals, idx)) in v.data().chunks(len).zip(rec.indices.chunks(len)).enumerate() {
        let orow = &mut out[r * out_len..(r + 1) * out_len];
        for (&val, &i) in vals.iter().zip(idx) {
            if i >= out_len {
                return Err(invalid(format!(
                    "corrupt pool record: index {i} outside output length {out_len}"
                )));
            }
            orow[i] += val;
        }
    }
    Ok(Tensor::from_parts(vec![n, c, out_len], out))
}

/// Routes the upstream gradient to the argmax positions only.
pub fn maxpool1d_backward(grad_out: &Tensor, rec: &PoolRecord) -> Result<Tensor> {
    unpool1d(grad_out, rec, rec.in_len)
}

/// Adjoint of [`unpool1d`]: gathers `grad` at the memorized positions.
pub fn unpool1d_backward(grad: &Tensor, rec: &PoolRecord) -> Result<Tensor> {
    let (n, c, len) = grad.dims3()?;
    let [rn, rc, out_len] = rec.shape;
    if n != rn || c != rc {
        return Err(Error::ShapeMismatch {
            op: "unpool1d backward",
            left: grad.shape().to_vec(),
            right: rec.shape.to_vec(),
        });
    }
    let mut out = Vec::with_capacity(n * c * out_len);
    for (row, idx) in grad.data().chunks(len).zip(rec.indices.chunks(out_len)) {
        for &i in idx {
            out.push(*row.get(i).ok_or_else(|| invalid("corrupt pool record"))?);
        }
    }
    Ok(Tensor::from_parts(rec.shape.to_vec(), out))
}
