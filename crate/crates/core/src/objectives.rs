//! Supervised cross entropy, reconstruction costs, and the combined
//! semi-supervised objectives, both as plain functions over tensors and as
//! differentiable graphs for training.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{BnUse, Bound, EncoderPass, Graph, LadderState, Model, ModelKind, Var};
use crate::numcore::{gaussian, gradient_check, pairwise_sum, GradCheckReport, Rng, Tensor};

/// Mean negative log-likelihood of the targets under `softmax(logits)`.
pub fn supervised_cost(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let n = *logits.shape().first().ok_or_else(|| invalid("empty logits"))?;
    if n == 0 || targets.len() != n {
        return Err(invalid(format!("{} targets for a batch of {n}", targets.len())));
    }
    let c = logits.len() / n;
    let mut total = 0.0;
    for (row, &t) in logits.data().chunks(c).zip(targets) {
        if t >= c {
            return Err(invalid(format!("label {t} out of range for {c} classes")));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    Ok(total / n as f64)
}

/// Mean over examples of `‖ẑ − z‖²`.
pub fn reconstruction_cost(zhat: &Tensor, z: &Tensor) -> Result<f64> {
    if zhat.shape() != z.shape() {
        return Err(Error::ShapeMismatch {
            op: "reconstruction cost",
            left: zhat.shape().to_vec(),
            right: z.shape().to_vec(),
        });
    }
    let m = *z.shape().first().ok_or_else(|| invalid("empty reconstruction target"))?;
    let sq: Vec<f64> = zhat.data().iter().zip(z.data()).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(pairwise_sum(&sq) / m as f64)
}

/// The weighted pseudo-label term of the pseudo-label baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoTerm {
    pub cost: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c_s: f64,
    pub c_r: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub pseudo: Option<PseudoTerm>,
    pub total: f64,
}

impl CostBreakdown {
    fn assemble(c_s: f64, c_r: Vec<f64>, lambdas: Vec<f64>, pseudo: Option<PseudoTerm>) -> Self {
        let mut total = c_s;
        for (c, l) in c_r.iter().zip(&lambdas) {
            total += l * c;
        }
        if let Some(p) = pseudo {
            total += p.alpha * p.cost;
        }
        Self {
            c_s,
            c_r,
            lambdas,
            pseudo,
            total,
        }
    }
}

/// Reconstruction weights actually applied for a model kind.
pub fn effective_lambdas(kind: ModelKind, depth: usize, lambdas: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(invalid(format!("reconstruction weights must be finite and >= 0, got {bad}")));
    }
    match kind {
        ModelKind::Supervised => Ok(Vec::new()),
        ModelKind::EncoderDecoder => match lambdas.len() {
            n if n == 1 || n == depth + 1 => Ok(vec![lambdas[0]]),
            n => Err(invalid(format!(
                "encoder-decoder takes 1 (or {}) reconstruction weights, got {n}",
                depth + 1
            ))),
        },
        ModelKind::Ladder => {
            if lambdas.len() != depth + 1 {
                return Err(invalid(format!(
                    "ladder needs {} reconstruction weights (levels 0..={depth}), got {}",
                    depth + 1,
                    lambdas.len()
                )));
            }
            Ok(lambdas.to_vec())
        }
    }
}

/// `(1, 0.1, …, 0.1)`-style weights emphasizing one level.
pub fn emphasis_lambdas(depth: usize, emphasized: usize) -> Result<Vec<f64>> {
    if emphasized > depth {
        return Err(invalid(format!("emphasized level {emphasized} outside 0..={depth}")));
    }
    Ok((0..=depth).map(|l| if l == emphasized { 1.0 } else { 0.1 }).collect())
}

/// Combined cost from already-computed tensors.
///
/// `labeled` carries the logits used for the supervised term (noisy ones for
/// the semi-supervised models, clean ones for the CNN); `unlabeled` carries the
/// clean targets and reconstructions of the unlabeled batch.
pub fn combined_cost(
    kind: ModelKind,
    labeled: Option<(&Tensor, &[usize])>,
    unlabeled: Option<&LadderState>,
    lambdas: &[f64],
) -> Result<CostBreakdown> {
    let c_s = match labeled {
        Some((logits, t)) => supervised_cost(logits, t)?,
        None => 0.0,
    };
    let depth = unlabeled.map_or(0, |s| s.clean.len().saturating_sub(1));
    let lam = match (kind, unlabeled) {
        (ModelKind::Supervised, _) => Vec::new(),
        (_, None) => return Err(invalid("reconstruction terms need an unlabeled batch")),
        (k, Some(_)) => effective_lambdas(k, depth, lambdas)?,
    };
    let c_r = match (kind, unlabeled) {
        (ModelKind::Supervised, _) | (_, None) => Vec::new(),
        (ModelKind::EncoderDecoder, Some(s)) => vec![reconstruction_cost(&s.reconstructed[0], &s.clean[0])?],
        (ModelKind::Ladder, Some(s)) => s
            .reconstructed
            .iter()
            .zip(&s.clean)
            .map(|(a, b)| reconstruction_cost(a, b))
            .collect::<Result<_>>()?,
    };
    Ok(CostBreakdown::assemble(c_s, c_r, lam, None))
}

/// Options shaping the training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ModelKind,
    /// Noise std of the corrupted encoder.
    pub sigma: f64,
    pub lambdas: Vec<f64>,
    /// Also reconstruct labeled examples (averaged with the unlabeled ones).
    #[serde(default)]
    pub reconstruct_labeled: bool,
    /// Compare `ẑ` and `z` after standardizing both with the clean batch statistics of `z`.
    #[serde(default)]
    pub normalized_targets: bool,
    /// Treat clean reconstruction targets as constants.
    #[serde(default)]
    pub detach_targets: bool,
}

/// Pseudo-labeled examples with their weight.
#[derive(Debug, Clone, Copy)]
pub struct PseudoBatch<'a> {
    pub x: &'a Tensor,
    pub labels: &'a [usize],
    pub alpha: f64,
}

/// One step's worth of inputs; each part gets its own batch-norm statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Batch<'a> {
    pub labeled: Option<(&'a Tensor, &'a [usize])>,
    pub unlabeled: Option<&'a Tensor>,
    pub pseudo: Option<PseudoBatch<'a>>,
}

/// A recorded objective, ready for backpropagation.
#[derive(Debug)]
pub struct ObjectiveGraph {
    pub graph: Graph,
    pub bound: Bound,
    pub total: Var,
    pub breakdown: CostBreakdown,
    /// Clean pass whose batch statistics feed the running averages.
    pub stats_pass: Option<EncoderPass>,
}

impl ObjectiveGraph {
    /// Gradients of the total with respect to every model parameter, in parameter order.
    pub fn gradients(&self) -> Result<Vec<Tensor>> {
        let mut grads = self.graph.backward(self.total)?;
        Ok(self
            .bound
            .vars()
            .iter()
            .map(|v| {
                grads
                    .take(*v)
                    .unwrap_or_else(|| Tensor::zeros(self.graph.value(*v).shape().to_vec()))
            })
            .collect())
    }

    pub fn update_running(&self, model: &mut Model, momentum: f64) {
        if let Some(p) = &self.stats_pass {
            model.update_running(&self.graph, p, momentum);
        }
    }
}

fn level_cost(g: &mut Graph, cfg: &ObjectiveConfig, zhat: Var, target: Var) -> Result<Var> {
    let target = if cfg.detach_targets { g.detach(target) } else { target };
    if cfg.normalized_targets {
        let a = g.norm_with(zhat, target)?;
        let b = g.norm_with(target, target)?;
        g.sq_dist(a, b)
    } else {
        g.sq_dist(zhat, target)
    }
}

/// Reconstruction cost nodes for one batch; `x` is the clean input.
fn reconstruction_terms(
    model: &Model,
    g: &mut Graph,
    bound: &Bound,
    cfg: &ObjectiveConfig,
    clean: Option<&EncoderPass>,
    noisy: &EncoderPass,
    x: Var,
) -> Result<Vec<Var>> {
    match model.kind() {
        ModelKind::Supervised => Ok(Vec::new()),
        ModelKind::EncoderDecoder => {
            let xhat = model.decode_encdec(g, bound, noisy)?;
            Ok(vec![level_cost(g, cfg, xhat, x)?])
        }
        ModelKind::Ladder => {
            let clean = clean.ok_or_else(|| invalid("ladder reconstruction needs a clean pass"))?;
            let zhat = model.decode_ladder(g, bound, noisy)?;
            zhat.iter()
                .zip(&clean.z)
                .map(|(&a, &b)| level_cost(g, cfg, a, b))
                .collect()
        }
    }
}

/// Records the objective for `batch` on a fresh graph.
pub fn build_objective(model: &Model, batch: &Batch<'_>, cfg: &ObjectiveConfig, rng: &mut Rng) -> Result<ObjectiveGraph> {
    if cfg.kind != model.kind() {
        return Err(invalid(format!(
            "objective for `{}` applied to a `{}` model",
            cfg.kind,
            model.kind()
        )));
    }
    if !(cfg.sigma >= 0.0 && cfg.sigma.is_finite()) {
        return Err(invalid(format!("noise std must be finite and >= 0, got {}", cfg.sigma)));
    }
    let depth = model.spec().depth();
    let kind = model.kind();
    let lambdas = effective_lambdas(kind, depth, &cfg.lambdas)?;
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let noise_needed = cfg.sigma > 0.0;
    let mut stats_pass = None;
    let mut c_s = None;
    // Per level: (cost node, example count) contributions.
    let mut recon: Vec<Vec<(Var, usize)>> = vec![Vec::new(); lambdas.len()];

    if let Some((x, targets)) = batch.labeled {
        let xv = g.leaf(x.clone());
        let clean = model.encode(&mut g, &bound, xv, None, BnUse::Batch)?;
        if kind == ModelKind::Supervised {
            c_s = Some(g.softmax_xent(clean.logits, targets)?);
        } else {
            let noisy = if noise_needed {
                model.encode(&mut g, &bound, xv, Some((rng, cfg.sigma)), BnUse::Batch)?
            } else {
                clean.clone()
            };
            c_s = Some(g.softmax_xent(noisy.logits, targets)?);
            if cfg.reconstruct_labeled {
                let terms = reconstruction_terms(model, &mut g, &bound, cfg, Some(&clean), &noisy, xv)?;
                for (slot, t) in recon.iter_mut().zip(terms) {
                    slot.push((t, x.shape()[0]));
                }
            }
        }
        stats_pass = Some(clean);
    }

    if let Some(xu) = batch.unlabeled {
        if kind != ModelKind::Supervised {
            let xv = g.leaf(xu.clone());
            let need_clean = kind == ModelKind::Ladder || stats_pass.is_none();
            let clean = if need_clean {
                Some(model.encode(&mut g, &bound, xv, None, BnUse::Batch)?)
            } else {
                None
            };
            let noisy = match (&clean, noise_needed) {
                (Some(c), false) => c.clone(),
                _ => model.encode(&mut g, &bound, xv, Some((rng, cfg.sigma)), BnUse::Batch)?,
            };
            let terms = reconstruction_terms(model, &mut g, &bound, cfg, clean.as_ref(), &noisy, xv)?;
            for (slot, t) in recon.iter_mut().zip(terms) {
                slot.push((t, xu.shape()[0]));
            }
            if stats_pass.is_none() {
                stats_pass = clean;
            }
        }
    }

    let mut pseudo = None;
    let mut pseudo_node = None;
    if let Some(p) = batch.pseudo {
        let xv = g.leaf(p.x.clone());
        let pass = model.encode(&mut g, &bound, xv, None, BnUse::Batch)?;
        let cost = g.softmax_xent(pass.logits, p.labels)?;
        pseudo = Some(PseudoTerm {
            cost: g.scalar(cost),
            alpha: p.alpha,
        });
        pseudo_node = Some(g.scale(cost, p.alpha)?);
    }

    if kind != ModelKind::Supervised && recon.first().is_some_and(Vec::is_empty) {
        return Err(invalid(format!("`{kind}` needs an unlabeled batch (or labeled reconstruction)")));
    }
    if c_s.is_none() && batch.unlabeled.is_none() {
        return Err(invalid("empty batch"));
    }

    let mut parts = Vec::new();
    let mut c_r = Vec::with_capacity(recon.len());
    if let Some(v) = c_s {
        parts.push(v);
    }
    for (level, (terms, lambda)) in recon.iter().zip(&lambdas).enumerate() {
        let count: usize = terms.iter().map(|(_, n)| n).sum();
        let mut value = 0.0;
        for &(t, n) in terms {
            let w = n as f64 / count as f64;
            value += w * g.scalar(t);
            parts.push(g.scale(t, w * lambda)?);
        }
        if !(value >= 0.0) {
            return Err(Error::NonFinite(format!("reconstruction cost at level {level}")));
        }
        c_r.push(value);
    }
    if let Some(v) = pseudo_node {
        parts.push(v);
    }
    let total = g.sum(&parts)?;
    let breakdown = CostBreakdown::assemble(c_s.map_or(0.0, |v| g.scalar(v)), c_r, lambdas, pseudo);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("training objective".into()));
    }
    Ok(ObjectiveGraph {
        graph: g,
        bound,
        total,
        breakdown,
        stats_pass,
    })
}

/// Objective value and parameter gradients for one batch.
pub fn objective_gradients(
    model: &Model,
    batch: &Batch<'_>,
    cfg: &ObjectiveConfig,
    rng: &mut Rng,
) -> Result<(CostBreakdown, Vec<Tensor>)> {
    let og = build_objective(model, batch, cfg, rng)?;
    let grads = og.gradients()?;
    Ok((og.breakdown, grads))
}

/// Adds `N(0, std²)` to every parameter except the encoder/decoder weight
/// matrices, moving unit gammas, zero betas and pass-through combinators off
/// their symmetric initial values before a gradient check.
pub fn jitter_non_weights(model: &mut Model, std: f64, rng: &mut Rng) -> Result<()> {
    let names: Vec<String> = model.params().names().map(str::to_string).collect();
    for (name, tensor) in names.iter().zip(model.params_mut().tensors_mut()) {
        if !name.ends_with(".w") {
            *tensor = tensor.add(&gaussian(rng, tensor.shape(), std)?)?;
        }
    }
    Ok(())
}

/// Central finite differences of the full objective against its analytic
/// gradient. The noise stream restarts from `noise_seed` for every
/// evaluation, so corrupted passes are identical across perturbations.
pub fn check_objective_gradients(
    model: &Model,
    batch: &Batch<'_>,
    cfg: &ObjectiveConfig,
    noise_seed: u64,
    epsilon: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = objective_gradients(model, batch, cfg, &mut Rng::new(noise_seed))?;
    let params = model.params().entries().to_vec();
    let mut probe = model.clone();
    gradient_check(
        &params,
        &grads,
        |p| {
            for (dst, (_, src)) in probe.params_mut().tensors_mut().zip(p) {
                dst.clone_from(src);
            }
            Ok(build_objective(&probe, batch, cfg, &mut Rng::new(noise_seed))?.breakdown.total)
        },
        epsilon,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{parse_spec, FeatureShape, Model};
    use crate::numcore::gaussian;

    #[test]
    fn supervised_cost_values() {
        let u = Tensor::zeros(vec![3, 6]);
        assert!((supervised_cost(&u, &[0, 3, 5]).unwrap() - 6f64.ln()).abs() < 1e-12);
        let l = Tensor::new(vec![1, 2], vec![2.0, 0.0]).unwrap();
        let expected = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        assert!((supervised_cost(&l, &[0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.1269).abs() < 1e-4);
        let confident = Tensor::new(vec![1, 2], vec![50.0, 0.0]).unwrap();
        assert!(supervised_cost(&confident, &[0]).unwrap() < 1e-20);
        assert!(supervised_cost(&l, &[2]).is_err());
    }

    #[test]
    fn reconstruction_cost_values() {
        let z = Tensor::ones(vec![1, 7]);
        assert_eq!(reconstruction_cost(&z, &z).unwrap(), 0.0);
        assert_eq!(reconstruction_cost(&Tensor::zeros(vec![1, 7]), &z).unwrap(), 7.0);
        let mut rng = Rng::new(3);
        let a = gaussian(&mut rng, &[4, 3, 5], 1.0).unwrap();
        let b = gaussian(&mut rng, &[4, 3, 5], 1.0).unwrap();
        let mut brute = 0.0;
        for i in 0..4 {
            let mut d = 0.0;
            for j in 0..15 {
                let diff = a.data()[i * 15 + j] - b.data()[i * 15 + j];
                d += diff * diff;
            }
            brute += d;
        }
        brute /= 4.0;
        assert!((reconstruction_cost(&a, &b).unwrap() - brute).abs() < 1e-12);
        assert!(reconstruction_cost(&a, &Tensor::zeros(vec![4, 15])).is_err());
    }

    #[test]
    fn emphasis_vectors() {
        assert_eq!(emphasis_lambdas(9, 0).unwrap(), {
            let mut v = vec![0.1; 10];
            v[0] = 1.0;
            v
        });
        assert!(emphasis_lambdas(3, 4).is_err());
    }

    fn setup(kind: ModelKind) -> (Model, Tensor, Vec<usize>, Tensor) {
        let spec = parse_spec("convv:4:3:1:1-maxpool:2:2-fc", FeatureShape { channels: 2, len: 12 }, 3).unwrap();
        let model = Model::new(spec, kind, 5).unwrap();
        let mut rng = Rng::new(8);
        let xl = gaussian(&mut rng, &[4, 2, 12], 1.0).unwrap();
        let xu = gaussian(&mut rng, &[4, 2, 12], 1.0).unwrap();
        (model, xl, vec![0, 1, 2, 1], xu)
    }

    fn cfg(kind: ModelKind, sigma: f64, lambdas: Vec<f64>) -> ObjectiveConfig {
        ObjectiveConfig {
            kind,
            sigma,
            lambdas,
            reconstruct_labeled: false,
            normalized_targets: false,
            detach_targets: false,
        }
    }

    #[test]
    fn total_is_weighted_sum() {
        let (model, xl, t, xu) = setup(ModelKind::Ladder);
        let c = cfg(ModelKind::Ladder, 0.3, vec![1.0, 0.1, 0.1, 0.5, 0.1]);
        let batch = Batch {
            labeled: Some((&xl, &t)),
            unlabeled: Some(&xu),
            pseudo: None,
        };
        let b = build_objective(&model, &batch, &c, &mut Rng::new(1)).unwrap().breakdown;
        let expect = b.c_s + b.c_r.iter().zip(&b.lambdas).map(|(c, l)| c * l).sum::<f64>();
        assert!((b.total - expect).abs() <= 1e-12);
        assert!(b.c_r.iter().all(|c| *c >= 0.0));
        assert_eq!(b.c_r.len(), 5);
        let bad = cfg(ModelKind::Ladder, 0.3, vec![0.1; 3]);
        assert!(build_objective(&model, &batch, &bad, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn pass_through_zero_noise_has_zero_reconstruction() {
        let (model, xl, t, xu) = setup(ModelKind::Ladder);
        let c = cfg(ModelKind::Ladder, 0.0, vec![0.1; 5]);
        let batch = Batch {
            labeled: Some((&xl, &t)),
            unlabeled: Some(&xu),
            pseudo: None,
        };
        let b = build_objective(&model, &batch, &c, &mut Rng::new(1)).unwrap().breakdown;
        assert!(b.c_r.iter().all(|c| *c == 0.0), "{:?}", b.c_r);
        assert_eq!(b.total, b.c_s);
    }

    #[test]
    fn tensor_level_cost_agrees_with_graph() {
        let (model, xl, t, xu) = setup(ModelKind::Ladder);
        let c = cfg(ModelKind::Ladder, 0.0, vec![0.3; 5]);
        let mut p = model.clone();
        // Perturb the combinators away from pass-through so costs are non-zero.
        for (i, tensor) in p.params_mut().tensors_mut().enumerate() {
            *tensor = tensor.map(|v| v + 0.01 * ((i % 3) as f64 + 1.0));
        }
        let batch = Batch {
            labeled: Some((&xl, &t)),
            unlabeled: Some(&xu),
            pseudo: None,
        };
        let b = build_objective(&p, &batch, &c, &mut Rng::new(1)).unwrap().breakdown;
        let st = p.ladder_state(&xu, 0.0, &mut Rng::new(1)).unwrap();
        let (_, logits) = p.forward_clean(&xl, BnUse::Batch).unwrap();
        let tb = combined_cost(ModelKind::Ladder, Some((&logits, &t)), Some(&st), &c.lambdas).unwrap();
        assert!((b.total - tb.total).abs() < 1e-12, "{} vs {}", b.total, tb.total);
        assert!(tb.c_r.iter().any(|v| *v > 0.0));
    }

    #[test]
    fn zero_lambda_ladder_gradients_equal_cnn() {
        let (lad, xl, t, xu) = setup(ModelKind::Ladder);
        let (cnn, ..) = setup(ModelKind::Supervised);
        let batch = Batch {
            labeled: Some((&xl, &t)),
            unlabeled: Some(&xu),
            pseudo: None,
        };
        let (bl, gl) =
            objective_gradients(&lad, &batch, &cfg(ModelKind::Ladder, 0.0, vec![0.0; 5]), &mut Rng::new(1)).unwrap();
        let (bc, gc) =
            objective_gradients(&cnn, &batch, &cfg(ModelKind::Supervised, 0.0, vec![]), &mut Rng::new(1)).unwrap();
        assert_eq!(bl.total, bc.total);
        for (name, gcn) in cnn.params().names().zip(&gc) {
            let i = lad.params().index_of(name).unwrap();
            for (a, b) in gl[i].data().iter().zip(gcn.data()) {
                assert!((a - b).abs() <= 1e-10, "{name}");
            }
        }
    }

    fn check_family(kind: ModelKind, c: ObjectiveConfig) {
        let (mut m, xl, t, xu) = setup(kind);
        jitter_non_weights(&mut m, 0.2, &mut Rng::new(77)).unwrap();
        let batch = Batch {
            labeled: Some((&xl, &t)),
            unlabeled: Some(&xu),
            pseudo: None,
        };
        let report = check_objective_gradients(&m, &batch, &c, 4, 1e-5, 1e-4).unwrap();
        assert!(report.pass, "{kind} {c:?}: {}", report.summary());
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        check_family(ModelKind::Supervised, cfg(ModelKind::Supervised, 0.3, vec![]));
        check_family(ModelKind::EncoderDecoder, cfg(ModelKind::EncoderDecoder, 0.3, vec![0.5]));
        check_family(ModelKind::Ladder, cfg(ModelKind::Ladder, 0.3, vec![1.0, 0.1, 0.1, 0.1, 0.1]));
        let mut variant = cfg(ModelKind::Ladder, 0.3, vec![0.2; 5]);
        variant.reconstruct_labeled = true;
        variant.normalized_targets = true;
        check_family(ModelKind::Ladder, variant);
    }

    #[test]
    fn detached_targets_keep_the_value() {
        // Detaching is a semi-gradient, so only the forward value is comparable.
        let (model, xl, t, xu) = setup(ModelKind::Ladder);
        let batch = Batch {
            labeled: Some((&xl, &t)),
            unlabeled: Some(&xu),
            pseudo: None,
        };
        let plain = cfg(ModelKind::Ladder, 0.3, vec![0.2; 5]);
        let mut detached = plain.clone();
        detached.detach_targets = true;
        let a = build_objective(&model, &batch, &plain, &mut Rng::new(2)).unwrap().breakdown;
        let b = build_objective(&model, &batch, &detached, &mut Rng::new(2)).unwrap().breakdown;
        assert_eq!(a, b);
    }
}
