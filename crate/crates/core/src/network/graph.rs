//! A small reverse-mode tape over the layer kernels.
//!
//! Every forward op records its inputs and whatever the kernel's backward
//! needs; [`Graph::backward`] then walks the tape once in reverse.

use crate::error::{invalid, Error, Result};
use crate::layers::{
    batchnorm_eval_backward, batchnorm_eval_forward, batchnorm_train_backward, batchnorm_train_forward,
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool1d, maxpool1d_backward, relu,
    relu_backward, softmax, softmax_backward, unpool1d, unpool1d_backward, BnCache, Padding, PoolRecord,
    BN_EPSILON,
};
use crate::network::combinator::{combinator_backward, combinator_forward};
use crate::numcore::{pairwise_sum, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, stride: usize, padding: Padding },
    MaxPool { x: Var, rec: PoolRecord },
    Unpool { x: Var, rec: PoolRecord },
    BnTrain { x: Var, gamma: Option<Var>, beta: Option<Var>, cache: BnCache },
    BnFixed { x: Var, gamma: Option<Var>, beta: Option<Var>, mean: Tensor, var: Tensor },
    NormWith { x: Var, r: Var, mean: Vec<f64>, var: Vec<f64> },
    Relu { x: Var },
    AddConst { x: Var },
    Dense { x: Var, w: Var, b: Option<Var> },
    Reshape { x: Var },
    Softmax { x: Var },
    Combinator { zt: Var, u: Var, a: Var },
    SoftmaxXent { logits: Var, targets: Vec<usize>, probs: Tensor },
    SqDist { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Sum { xs: Vec<Var> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that influences it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn scalar_of(t: &Tensor) -> f64 {
    t.data()[0]
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        scalar_of(self.value(v))
    }

    /// A leaf (parameter or input). Gradients are reported for every leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A copy of `v`'s value with no gradient path back to `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.leaf(t)
    }

    pub fn pool_record(&self, v: Var) -> Option<&PoolRecord> {
        match &self.nodes[v.0].op {
            Op::MaxPool { rec, .. } => Some(rec),
            _ => None,
        }
    }

    /// Batch mean and (population) variance used by a train-mode batch norm.
    pub fn bn_stats(&self, v: Var) -> Option<(&Tensor, &Tensor)> {
        match &self.nodes[v.0].op {
            Op::BnTrain { cache, .. } => Some((&cache.mean, &cache.var)),
            _ => None,
        }
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: Padding) -> Result<Var> {
        let y = conv1d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, padding)?;
        Ok(self.push(y, Op::Conv { x, w, b, stride, padding }))
    }

    pub fn maxpool(&mut self, x: Var, size: usize, stride: usize) -> Result<Var> {
        let (y, rec) = maxpool1d(self.value(x), size, stride)?;
        Ok(self.push(y, Op::MaxPool { x, rec }))
    }

    pub fn unpool(&mut self, x: Var, rec: &PoolRecord) -> Result<Var> {
        let y = unpool1d(self.value(x), rec, rec.in_len)?;
        Ok(self.push(y, Op::Unpool { x, rec: rec.clone() }))
    }

    pub fn bn_train(&mut self, x: Var, gamma: Option<Var>, beta: Option<Var>) -> Result<Var> {
        let (y, cache) = batchnorm_train_forward(
            self.value(x),
            gamma.map(|g| self.value(g)),
            beta.map(|b| self.value(b)),
            BN_EPSILON,
        )?;
        Ok(self.push(y, Op::BnTrain { x, gamma, beta, cache }))
    }

    /// Normalizes with fixed statistics (running averages, or another pass's batch statistics).
    pub fn bn_fixed(&mut self, x: Var, gamma: Option<Var>, beta: Option<Var>, mean: &Tensor, var: &Tensor) -> Result<Var> {
        let c = mean.len();
        let ones = Tensor::ones(vec![c]);
        let zeros = Tensor::zeros(vec![c]);
        let y = batchnorm_eval_forward(
            self.value(x),
            gamma.map_or(&ones, |g| self.value(g)),
            beta.map_or(&zeros, |b| self.value(b)),
            mean,
            var,
            BN_EPSILON,
        )?;
        Ok(self.push(
            y,
            Op::BnFixed {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                var: var.clone(),
            },
        ))
    }

    /// Standardizes `x` per channel with the batch mean and variance of `r`
    /// (same shape); differentiable in both.
    pub fn norm_with(&mut self, x: Var, r: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(r));
        if tx.shape() != tr.shape() {
            return Err(Error::ShapeMismatch {
                op: "normalize with reference",
                left: tx.shape().to_vec(),
                right: tr.shape().to_vec(),
            });
        }
        let (n, c, l) = tr.dims3()?;
        let m = (n * l) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for b in 0..n {
            for ch in 0..c {
                mean[ch] += pairwise_sum(&tr.data()[(b * c + ch) * l..][..l]);
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for b in 0..n {
            for ch in 0..c {
                for v in &tr.data()[(b * c + ch) * l..][..l] {
                    var[ch] += (v - mean[ch]) * (v - mean[ch]);
                }
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let mut out = tx.data().to_vec();
        for b in 0..n {
            for ch in 0..c {
                let inv = 1.0 / (var[ch] + BN_EPSILON).sqrt();
                for v in &mut out[(b * c + ch) * l..][..l] {
                    *v = (*v - mean[ch]) * inv;
                }
            }
        }
        let y = Tensor::from_parts(tx.shape().to_vec(), out);
        Ok(self.push(y, Op::NormWith { x, r, mean, var }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = relu(self.value(x));
        self.push(y, Op::Relu { x })
    }

    /// Adds a constant tensor (e.g. injected noise).
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        if self.value(x).shape() != c.shape() {
            return Err(Error::ShapeMismatch {
                op: "add constant",
                left: self.value(x).shape().to_vec(),
                right: c.shape().to_vec(),
            });
        }
        let y = self.value(x).add(c)?;
        Ok(self.push(y, Op::AddConst { x }))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = dense_forward(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(y, Op::Dense { x, w, b }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        Ok(self.push(y, Op::Reshape { x }))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let y = softmax(self.value(x))?;
        Ok(self.push(y, Op::Softmax { x }))
    }

    pub fn combinator(&mut self, zt: Var, u: Var, a: Var) -> Result<Var> {
        let y = combinator_forward(self.value(zt), self.value(u), self.value(a))?;
        Ok(self.push(y, Op::Combinator { zt, u, a }))
    }

    /// Mean cross entropy of softmax(logits) against integer targets.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        let n = z.shape()[0];
        if targets.len() != n {
            return Err(invalid(format!("{} targets for a batch of {n}", targets.len())));
        }
        let c = z.len() / n;
        let mut probs = Vec::with_capacity(z.len());
        let mut total = 0.0;
        for (row, &t) in z.data().chunks(c).zip(targets) {
            if t >= c {
                return Err(invalid(format!("label {t} out of range for {c} classes")));
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let probs = Tensor::from_parts(z.shape().to_vec(), probs);
        Ok(self.push(
            Tensor::scalar(total / n as f64),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Mean over the batch of the squared Euclidean distance between examples of `a` and `b`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "reconstruction cost",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let n = ta.shape()[0] as f64;
        let sq: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).collect();
        Ok(self.push(Tensor::scalar(pairwise_sum(&sq) / n), Op::SqDist { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let y = self.value(x).scale(c)?;
        Ok(self.push(y, Op::Scale { x, c }))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let mut s = 0.0;
        for &x in xs {
            if self.value(x).len() != 1 {
                return Err(invalid("sum expects scalar nodes"));
            }
            s += self.scalar(x);
        }
        Ok(self.push(Tensor::scalar(s), Op::Sum { xs: xs.to_vec() }))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(invalid("backward root must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Conv { x, w, b, stride, padding } => {
                    let cg = conv1d_backward(self.value(*x), self.value(*w), *stride, *padding, &g)?;
                    accumulate(&mut grads[x.0], cg.input);
                    accumulate(&mut grads[w.0], cg.kernels);
                    if let Some(b) = b {
                        accumulate(&mut grads[b.0], cg.bias);
                    }
                }
                Op::MaxPool { x, rec } => accumulate(&mut grads[x.0], maxpool1d_backward(&g, rec)?),
                Op::Unpool { x, rec } => accumulate(&mut grads[x.0], unpool1d_backward(&g, rec)?),
                Op::BnTrain { x, gamma, beta, cache } => {
                    let (dx, dg, db) = batchnorm_train_backward(cache, gamma.map(|v| self.value(v)), &g)?;
                    accumulate(&mut grads[x.0], dx);
                    if let Some(v) = gamma {
                        accumulate(&mut grads[v.0], dg);
                    }
                    if let Some(v) = beta {
                        accumulate(&mut grads[v.0], db);
                    }
                }
                Op::BnFixed { x, gamma, beta, mean, var } => {
                    let ones = Tensor::ones(vec![mean.len()]);
                    let (dx, dg, db) = batchnorm_eval_backward(
                        self.value(*x),
                        gamma.map_or(&ones, |v| self.value(v)),
                        mean,
                        var,
                        BN_EPSILON,
                        &g,
                    )?;
                    accumulate(&mut grads[x.0], dx);
                    if let Some(v) = gamma {
                        accumulate(&mut grads[v.0], dg);
                    }
                    if let Some(v) = beta {
                        accumulate(&mut grads[v.0], db);
                    }
                }
                Op::NormWith { x, r, mean, var } => {
                    let (tx, tr) = (self.value(*x), self.value(*r));
                    let (n, c, l) = tx.dims3()?;
                    let m = (n * l) as f64;
                    let mut dx = vec![0.0; tx.len()];
                    let mut dr = vec![0.0; tr.len()];
                    for ch in 0..c {
                        let inv = 1.0 / (var[ch] + BN_EPSILON).sqrt();
                        let (mut d_mean, mut d_var) = (0.0, 0.0);
                        for b in 0..n {
                            let off = (b * c + ch) * l;
                            for t in off..off + l {
                                let gv = g.data()[t];
                                dx[t] = gv * inv;
                                d_mean -= gv * inv;
                                d_var -= 0.5 * gv * (tx.data()[t] - mean[ch]) * inv * inv * inv;
                            }
                        }
                        for b in 0..n {
                            let off = (b * c + ch) * l;
                            for t in off..off + l {
                                dr[t] = d_mean / m + d_var * 2.0 * (tr.data()[t] - mean[ch]) / m;
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], Tensor::from_parts(tx.shape().to_vec(), dx));
                    accumulate(&mut grads[r.0], Tensor::from_parts(tr.shape().to_vec(), dr));
                }
                Op::Relu { x } => accumulate(&mut grads[x.0], relu_backward(self.value(*x), &g)?),
                Op::AddConst { x } => accumulate(&mut grads[x.0], g),
                Op::Dense { x, w, b } => {
                    let dg = dense_backward(self.value(*x), self.value(*w), &g)?;
                    accumulate(&mut grads[x.0], dg.input);
                    accumulate(&mut grads[w.0], dg.weights);
                    if let Some(b) = b {
                        accumulate(&mut grads[b.0], dg.bias);
                    }
                }
                Op::Reshape { x } => {
                    let shape = self.value(*x).shape().to_vec();
                    accumulate(&mut grads[x.0], g.into_reshape(shape)?);
                }
                Op::Softmax { x } => accumulate(&mut grads[x.0], softmax_backward(&node.value, &g)?),
                Op::Combinator { zt, u, a } => {
                    let cg = combinator_backward(self.value(*zt), self.value(*u), self.value(*a), &g)?;
                    accumulate(&mut grads[zt.0], cg.lateral);
                    accumulate(&mut grads[u.0], cg.vertical);
                    accumulate(&mut grads[a.0], cg.params);
                }
                Op::SoftmaxXent { logits, targets, probs } => {
                    let s = scalar_of(&g);
                    let n = targets.len();
                    let c = probs.len() / n;
                    let mut d = probs.data().to_vec();
                    for (row, &t) in d.chunks_mut(c).zip(targets) {
                        row[t] -= 1.0;
                    }
                    let k = s / n as f64;
                    d.iter_mut().for_each(|v| *v *= k);
                    accumulate(&mut grads[logits.0], Tensor::from_parts(probs.shape().to_vec(), d));
                }
                Op::SqDist { a, b } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let k = 2.0 * scalar_of(&g) / ta.shape()[0] as f64;
                    let d: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| k * (x - y)).collect();
                    let da = Tensor::from_parts(ta.shape().to_vec(), d);
                    if a != b {
                        accumulate(&mut grads[b.0], da.map(|v| -v));
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::Scale { x, c } => accumulate(&mut grads[x.0], g.map(|v| v * c)),
                Op::Sum { xs } => {
                    for x in xs {
                        accumulate(&mut grads[x.0], g.clone());
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian, gradient_check, Rng};

    #[test]
    fn composite_chain_gradients() {
        let mut rng = Rng::new(11);
        let x = gaussian(&mut rng, &[4, 2, 12], 1.0).unwrap();
        let w = gaussian(&mut rng, &[3, 2, 3], 0.7).unwrap();
        let gamma = gaussian(&mut rng, &[3], 0.5).unwrap().map(|v| v + 1.0);
        let beta = gaussian(&mut rng, &[3], 0.5).unwrap();
        let wd = gaussian(&mut rng, &[4, 15], 0.4).unwrap();
        let noise = gaussian(&mut rng, &[4, 3, 10], 0.3).unwrap();
        let build = |p: &[(String, Tensor)]| -> Result<(Graph, Var, Vec<Var>)> {
            let mut g = Graph::new();
            let vars: Vec<Var> = p.iter().map(|(_, t)| g.leaf(t.clone())).collect();
            let h = g.conv(vars[0], vars[1], None, 1, Padding::Valid)?;
            let h = g.bn_train(h, Some(vars[2]), Some(vars[3]))?;
            let h = g.add_const(h, &noise)?;
            let h = g.relu(h);
            let p = g.maxpool(h, 2, 2)?;
            let rec = g.pool_record(p).unwrap().clone();
            let up = g.unpool(p, &rec)?;
            let rc = g.sq_dist(up, h)?;
            let logits = g.dense(p, vars[4], None)?;
            let cs = g.softmax_xent(logits, &[0, 1, 2, 3])?;
            let rc = g.scale(rc, 0.3)?;
            let total = g.sum(&[cs, rc])?;
            Ok((g, total, vars))
        };
        let params = vec![
            ("x".to_string(), x),
            ("w".to_string(), w),
            ("gamma".to_string(), gamma),
            ("beta".to_string(), beta),
            ("wd".to_string(), wd),
        ];
        let (g, total, vars) = build(&params).unwrap();
        let grads = g.backward(total).unwrap();
        let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(*v).unwrap().clone()).collect();
        let report = gradient_check(
            &params,
            &analytic,
            |p| {
                let (g, t, _) = build(p)?;
                Ok(g.scalar(t))
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "{}", report.summary());
    }

    #[test]
    fn xent_values() {
        let mut g = Graph::new();
        let z = g.leaf(Tensor::new(vec![1, 2], vec![2.0, 0.0]).unwrap());
        let c = g.softmax_xent(z, &[0]).unwrap();
        let expected = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        assert!((g.scalar(c) - expected).abs() < 1e-12);
        assert!(g.softmax_xent(z, &[2]).is_err());
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_vec(vec![1.0, 2.0]).unwrap().reshape(vec![1, 2]).unwrap());
        let d = g.detach(a);
        let b = g.leaf(Tensor::zeros(vec![1, 2]));
        let s = g.sq_dist(d, b).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(a).is_none());
        assert_eq!(grads.get(b).unwrap().data(), &[-2.0, -4.0]);
    }
}
