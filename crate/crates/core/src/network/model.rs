use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::layers::{Padding, PoolRecord};
use crate::network::combinator::CombinatorParams;
use crate::network::graph::{Graph, Var};
use crate::network::params::ParamSet;
use crate::network::spec::{LayerSpec, NetworkSpec};
use crate::numcore::{gaussian, Rng, Tensor};

/// The three network families sharing one encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "cnn")]
    Supervised,
    #[serde(rename = "encdec")]
    EncoderDecoder,
    #[serde(rename = "ladder")]
    Ladder,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Supervised => "cnn",
            ModelKind::EncoderDecoder => "encdec",
            ModelKind::Ladder => "ladder",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" | "supervised" => Ok(ModelKind::Supervised),
            "encdec" | "encoder_decoder" => Ok(ModelKind::EncoderDecoder),
            "ladder" => Ok(ModelKind::Ladder),
            other => Err(invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

/// How batch normalization layers pick their statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnUse {
    Batch,
    Running,
}

/// Running statistics of one encoder batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

// Forks of the model seed, kept apart so that e.g. a CNN and a ladder built
// from the same seed share identical encoder weights.
const ENCODER_STREAM: u64 = 1;
const DECODER_STREAM: u64 = 2;

pub fn enc_w(l: usize) -> String {
    format!("enc.{l}.w")
}
pub fn enc_gamma(l: usize) -> String {
    format!("enc.{l}.gamma")
}
pub fn enc_beta(l: usize) -> String {
    format!("enc.{l}.beta")
}
pub fn dec_w(l: usize) -> String {
    format!("dec.{l}.w")
}
pub fn dec_b(l: usize) -> String {
    format!("dec.{l}.b")
}
pub fn comb(l: usize) -> String {
    format!("comb.{l}")
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: NetworkSpec,
    kind: ModelKind,
    params: ParamSet,
    running: Vec<Option<RunningStats>>,
}

/// Parameters placed on a graph, indexed like [`Model::params`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    names: Vec<String>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn get(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| invalid(format!("missing parameter `{name}`")))
    }

    fn opt(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| self.vars[i])
    }
}

/// One encoder pass recorded on a graph.
#[derive(Debug, Clone)]
pub struct EncoderPass {
    /// Activations `z^(0..=L)`; `z[0]` is the (possibly noisy) input.
    pub z: Vec<Var>,
    /// Dense output feeding the softmax.
    pub logits: Var,
    /// Train-mode batch-norm nodes per level, for running-statistics updates.
    pub bn: Vec<Option<Var>>,
    /// Max-pool nodes per level.
    pub pools: Vec<Option<Var>>,
}

/// Concrete per-layer tensors for one batch.
#[derive(Debug, Clone)]
pub struct LadderState {
    pub clean: Vec<Tensor>,
    pub noisy: Vec<Tensor>,
    pub reconstructed: Vec<Tensor>,
    pub pool_records: Vec<Option<PoolRecord>>,
    pub clean_logits: Tensor,
    pub noisy_logits: Tensor,
}

fn he_normal(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Result<Tensor> {
    gaussian(rng, shape, (2.0 / fan_in as f64).sqrt())
}

impl Model {
    /// He-initialized encoder (and decoder when the kind has one); combinators start as pass-through.
    pub fn new(spec: NetworkSpec, kind: ModelKind, seed: u64) -> Result<Self> {
        let root = Rng::new(seed);
        let mut enc_rng = root.fork(ENCODER_STREAM);
        let mut dec_rng = root.fork(DECODER_STREAM);
        let shapes = spec.shapes().to_vec();
        let mut params = ParamSet::new();
        let depth = spec.depth();
        let mut running = vec![None; depth + 1];
        for l in 1..=depth {
            let (prev, cur) = (shapes[l - 1], shapes[l]);
            match spec.layer(l) {
                LayerSpec::Conv { out_ch, k, .. } => {
                    params.insert(enc_w(l), he_normal(&mut enc_rng, &[out_ch, prev.channels, k], prev.channels * k)?);
                }
                LayerSpec::Dense { units } => {
                    let d = prev.channels * prev.len;
                    params.insert(enc_w(l), he_normal(&mut enc_rng, &[units, d], d)?);
                }
                _ => continue,
            }
            params.insert(enc_gamma(l), Tensor::ones(vec![cur.channels]));
            params.insert(enc_beta(l), Tensor::zeros(vec![cur.channels]));
            running[l] = Some(RunningStats {
                mean: Tensor::zeros(vec![cur.channels]),
                var: Tensor::ones(vec![cur.channels]),
            });
        }
        if kind != ModelKind::Supervised {
            for l in 1..=depth {
                let (prev, cur) = (shapes[l - 1], shapes[l]);
                let (w, bias_len) = match spec.layer(l) {
                    LayerSpec::Conv { k, .. } => (
                        he_normal(&mut dec_rng, &[prev.channels, cur.channels, k], cur.channels * k)?,
                        prev.channels,
                    ),
                    LayerSpec::Dense { units } => {
                        let d = prev.channels * prev.len;
                        (he_normal(&mut dec_rng, &[d, units], units)?, d)
                    }
                    _ => continue,
                };
                params.insert(dec_w(l), w);
                if kind == ModelKind::EncoderDecoder {
                    params.insert(dec_b(l), Tensor::zeros(vec![bias_len]));
                }
            }
        }
        if kind == ModelKind::Ladder {
            for (l, s) in shapes.iter().enumerate() {
                params.insert(comb(l), CombinatorParams::pass_through(s.channels).a);
            }
        }
        Ok(Self {
            spec,
            kind,
            params,
            running,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn running(&self, l: usize) -> Option<&RunningStats> {
        self.running.get(l).and_then(Option::as_ref)
    }

    /// Levels that own a batch-norm layer.
    pub fn bn_levels(&self) -> Vec<usize> {
        (0..self.running.len()).filter(|&l| self.running[l].is_some()).collect()
    }

    pub fn set_running(&mut self, l: usize, stats: RunningStats) -> Result<()> {
        match self.running.get_mut(l) {
            Some(slot @ Some(_)) => {
                let c = slot.as_ref().map(|s| s.mean.len()).unwrap_or(0);
                if stats.mean.shape() != [c] || stats.var.shape() != [c] {
                    return Err(invalid(format!("running statistics for level {l} must have {c} entries")));
                }
                *slot = Some(stats);
                Ok(())
            }
            _ => Err(invalid(format!("level {l} has no batch normalization"))),
        }
    }

    /// Exponential running-average update from a pass's batch statistics.
    pub fn update_running(&mut self, g: &Graph, pass: &EncoderPass, momentum: f64) {
        for (l, node) in pass.bn.iter().enumerate() {
            let (Some(node), Some(stats)) = (node, self.running[l].as_mut()) else { continue };
            if let Some((mean, var)) = g.bn_stats(*node) {
                crate::layers::update_running_stats(&mut stats.mean, &mut stats.var, mean, var, momentum);
            }
        }
    }

    /// Copies encoder weights and running statistics from a model with the same spec.
    pub fn copy_encoder_from(&mut self, other: &Model) -> Result<()> {
        if other.spec.layers() != self.spec.layers() || other.spec.input() != self.spec.input() {
            return Err(invalid("encoder transfer needs identical network specs"));
        }
        for (name, t) in other.params.entries() {
            if name.starts_with("enc.") {
                self.params.insert(name.clone(), t.clone());
            }
        }
        self.running = other.running.clone();
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        let vars = self.params.tensors().map(|t| g.leaf(t.clone())).collect();
        Bound {
            vars,
            names: self.params.names().map(str::to_string).collect(),
        }
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = self.spec.input();
        match x.shape() {
            &[n, c, l] if n >= 1 && c == s.channels && l == s.len => Ok(()),
            other => Err(Error::ShapeMismatch {
                op: "network input",
                left: vec![0, s.channels, s.len],
                right: other.to_vec(),
            }),
        }
    }

    /// Runs the encoder on `x`. With `noise = Some((rng, σ))`, Gaussian noise is
    /// added to the input and to every batch-normalized pre-activation.
    pub fn encode(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: Var,
        mut noise: Option<(&mut Rng, f64)>,
        bn: BnUse,
    ) -> Result<EncoderPass> {
        self.check_input(g.value(x))?;
        let depth = self.spec.depth();
        let mut add_noise = |g: &mut Graph, v: Var| -> Result<Var> {
            match noise.as_mut() {
                Some((rng, sigma)) if *sigma > 0.0 => {
                    let n = gaussian(rng, g.value(v).shape(), *sigma)?;
                    g.add_const(v, &n)
                }
                _ => Ok(v),
            }
        };
        let mut z = Vec::with_capacity(depth + 1);
        let mut bns = vec![None; depth + 1];
        let mut pools = vec![None; depth + 1];
        z.push(add_noise(g, x)?);
        let mut logits = None;
        for l in 1..=depth {
            let h = z[l - 1];
            let out = match self.spec.layer(l) {
                layer @ (LayerSpec::Conv { .. } | LayerSpec::Dense { .. }) => {
                    let w = bound.get(&enc_w(l))?;
                    let pre = match layer {
                        LayerSpec::Conv { stride, .. } => g.conv(h, w, None, stride, Padding::Valid)?,
                        _ => g.dense(h, w, None)?,
                    };
                    let (gamma, beta) = (bound.get(&enc_gamma(l))?, bound.get(&enc_beta(l))?);
                    let normed = match bn {
                        BnUse::Batch => {
                            let v = g.bn_train(pre, Some(gamma), Some(beta))?;
                            bns[l] = Some(v);
                            v
                        }
                        BnUse::Running => {
                            let s = self.running[l].as_ref().ok_or_else(|| invalid("missing running statistics"))?;
                            g.bn_fixed(pre, Some(gamma), Some(beta), &s.mean, &s.var)?
                        }
                    };
                    let noisy = add_noise(g, normed)?;
                    if l < depth && matches!(self.spec.layer(l + 1), LayerSpec::Softmax { .. }) {
                        logits = Some(noisy);
                        noisy
                    } else {
                        g.relu(noisy)
                    }
                }
                LayerSpec::MaxPool { size, stride } => {
                    let v = g.maxpool(h, size, stride)?;
                    pools[l] = Some(v);
                    v
                }
                LayerSpec::Softmax { .. } => g.softmax(h)?,
            };
            z.push(out);
        }
        Ok(EncoderPass {
            z,
            logits: logits.ok_or_else(|| invalid("network has no logits layer"))?,
            bn: bns,
            pools,
        })
    }

    fn pool_record<'g>(&self, g: &'g Graph, pass: &EncoderPass, l: usize) -> Result<&'g PoolRecord> {
        pass.pools[l]
            .and_then(|v| g.pool_record(v))
            .ok_or_else(|| invalid(format!("missing pool record for level {l}")))
    }

    /// Maps a level-`l` signal to level `l − 1` through the decoder counterpart of layer `l`.
    fn project(&self, g: &mut Graph, bound: &Bound, noisy: &EncoderPass, l: usize, h: Var) -> Result<(Var, bool)> {
        let shapes = self.spec.shapes();
        let (prev, cur) = (shapes[l - 1], shapes[l]);
        let bias = bound.opt(&dec_b(l));
        match self.spec.layer(l) {
            LayerSpec::Softmax { .. } => Ok((h, false)),
            LayerSpec::MaxPool { .. } => {
                let rec = self.pool_record(g, noisy, l)?.clone();
                Ok((g.unpool(h, &rec)?, false))
            }
            LayerSpec::Dense { .. } => {
                let w = bound.get(&dec_w(l))?;
                let y = g.dense(h, w, bias)?;
                let n = g.value(y).shape()[0];
                Ok((g.reshape(y, vec![n, prev.channels, prev.len])?, true))
            }
            LayerSpec::Conv { k, .. } => {
                let w = bound.get(&dec_w(l))?;
                let total = prev.len + k - 1 - cur.len;
                let left = total / 2;
                let padding = Padding::Zeros {
                    left,
                    right: total - left,
                };
                Ok((g.conv(h, w, bias, 1, padding)?, true))
            }
        }
    }

    /// Encoder-decoder reconstruction `x̂` from the top noisy activation.
    pub fn decode_encdec(&self, g: &mut Graph, bound: &Bound, noisy: &EncoderPass) -> Result<Var> {
        let depth = self.spec.depth();
        let mut h = noisy.z[depth];
        for l in (1..=depth).rev() {
            let (y, parametric) = self.project(g, bound, noisy, l, h)?;
            h = if parametric && l > 1 { g.relu(y) } else { y };
        }
        Ok(h)
    }

    /// Ladder reconstructions `ẑ^(0..=L)` through the lateral combinators.
    pub fn decode_ladder(&self, g: &mut Graph, bound: &Bound, noisy: &EncoderPass) -> Result<Vec<Var>> {
        let depth = self.spec.depth();
        let mut zhat = vec![None; depth + 1];
        let u = g.bn_train(noisy.z[depth], None, None)?;
        zhat[depth] = Some(g.combinator(noisy.z[depth], u, bound.get(&comb(depth))?)?);
        for l in (0..depth).rev() {
            let above = zhat[l + 1].expect("filled top-down");
            let (v, _) = self.project(g, bound, noisy, l + 1, above)?;
            let u = g.bn_train(v, None, None)?;
            zhat[l] = Some(g.combinator(noisy.z[l], u, bound.get(&comb(l))?)?);
        }
        Ok(zhat.into_iter().map(|v| v.expect("filled")).collect())
    }

    /// Clean feed-forward pass; returns `z^(0..=L)` and the logits.
    pub fn forward_clean(&self, x: &Tensor, bn: BnUse) -> Result<(Vec<Tensor>, Tensor)> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.leaf(x.clone());
        let pass = self.encode(&mut g, &bound, xv, None, bn)?;
        Ok(collect(&g, &pass))
    }

    /// Noisy pass sharing the clean pass's parameters.
    pub fn forward_noisy(&self, x: &Tensor, sigma: f64, rng: &mut Rng, bn: BnUse) -> Result<(Vec<Tensor>, Tensor)> {
        if !(sigma >= 0.0) {
            return Err(invalid(format!("noise std must be >= 0, got {sigma}")));
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.leaf(x.clone());
        let pass = self.encode(&mut g, &bound, xv, Some((rng, sigma)), bn)?;
        Ok(collect(&g, &pass))
    }

    /// Clean pass, noisy pass, and decoding of one batch in train-mode batch norm.
    ///
    /// For the encoder-decoder only `ẑ^(0) = x̂` is produced; the other levels
    /// of `reconstructed` repeat the noisy activations.
    pub fn ladder_state(&self, x: &Tensor, sigma: f64, rng: &mut Rng) -> Result<LadderState> {
        if self.kind == ModelKind::Supervised {
            return Err(invalid("the supervised CNN has no decoder"));
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.leaf(x.clone());
        let clean = self.encode(&mut g, &bound, xv, None, BnUse::Batch)?;
        let noisy = self.encode(&mut g, &bound, xv, Some((rng, sigma)), BnUse::Batch)?;
        let rec = match self.kind {
            ModelKind::Ladder => self.decode_ladder(&mut g, &bound, &noisy)?,
            _ => {
                let mut r = noisy.z.clone();
                r[0] = self.decode_encdec(&mut g, &bound, &noisy)?;
                r
            }
        };
        let (clean_z, clean_logits) = collect(&g, &clean);
        let (noisy_z, noisy_logits) = collect(&g, &noisy);
        Ok(LadderState {
            clean: clean_z,
            noisy: noisy_z,
            reconstructed: rec.iter().map(|v| g.value(*v).clone()).collect(),
            pool_records: noisy.pools.iter().map(|p| p.and_then(|v| g.pool_record(v)).cloned()).collect(),
            clean_logits,
            noisy_logits,
        })
    }

    /// Class probabilities with running batch-norm statistics.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        let (z, _) = self.forward_clean(x, BnUse::Running)?;
        let probs = z.last().expect("non-empty").clone();
        let n = probs.shape()[0];
        probs.into_reshape(vec![n, self.spec.n_classes()])
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(argmax_rows(&p))
    }

    /// Inputs of the logits layer on the clean path (`N × features`).
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let (z, _) = self.forward_clean(x, BnUse::Running)?;
        let f = &z[self.spec.logits_level() - 1];
        let n = f.shape()[0];
        f.reshape(vec![n, f.len() / n])
    }
}

fn collect(g: &Graph, pass: &EncoderPass) -> (Vec<Tensor>, Tensor) {
    let z = pass.z.iter().map(|v| g.value(*v).clone()).collect();
    (z, g.value(pass.logits).clone())
}

pub fn argmax_rows(p: &Tensor) -> Vec<usize> {
    let n = p.shape()[0];
    let c = p.len() / n;
    p.data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::spec::{parse_spec, FeatureShape};

    const SMALL: &str = "convv:8:5:1:1-maxpool:2:2-fc";

    fn model(spec: &str, kind: ModelKind, seed: u64) -> Model {
        let spec = parse_spec(spec, FeatureShape { channels: 3, len: 20 }, 4).unwrap();
        Model::new(spec, kind, seed).unwrap()
    }

    fn batch(seed: u64, n: usize) -> Tensor {
        gaussian(&mut Rng::new(seed), &[n, 3, 20], 1.0).unwrap()
    }

    #[test]
    fn parameter_names_per_kind() {
        let cnn = model(SMALL, ModelKind::Supervised, 1);
        let names: Vec<&str> = cnn.params().names().collect();
        assert_eq!(names, vec!["enc.1.w", "enc.1.gamma", "enc.1.beta", "enc.3.w", "enc.3.gamma", "enc.3.beta"]);
        let ed = model(SMALL, ModelKind::EncoderDecoder, 1);
        assert!(ed.params().get("dec.1.b").is_some() && ed.params().get("comb.0").is_none());
        let lad = model(SMALL, ModelKind::Ladder, 1);
        assert!(lad.params().get("dec.1.b").is_none());
        assert_eq!(lad.params().get("comb.2").unwrap().shape(), &[10, 8]);
        assert_eq!(lad.params().get("dec.3.w").unwrap().shape(), &[64, 4]);
        // Shared encoder streams: same seed gives identical encoder weights across kinds.
        assert_eq!(cnn.params().get("enc.1.w"), lad.params().get("enc.1.w"));
    }

    #[test]
    fn activation_count_and_zero_weight_uniform() {
        let mut m = model(SMALL, ModelKind::Supervised, 2);
        let (z, _) = m.forward_clean(&batch(1, 3), BnUse::Batch).unwrap();
        assert_eq!(z.len(), m.spec().depth() + 1);
        for t in m.params_mut().tensors_mut() {
            *t = Tensor::zeros(t.shape().to_vec());
        }
        let (z, logits) = m.forward_clean(&Tensor::zeros(vec![3, 3, 20]), BnUse::Running).unwrap();
        assert!(logits.data().iter().all(|v| *v == logits.data()[0]));
        for p in z.last().unwrap().data() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_noise_matches_clean_exactly() {
        let m = model(SMALL, ModelKind::Ladder, 3);
        let x = batch(2, 5);
        let (zc, yc) = m.forward_clean(&x, BnUse::Batch).unwrap();
        let (zn, yn) = m.forward_noisy(&x, 0.0, &mut Rng::new(99), BnUse::Batch).unwrap();
        assert_eq!(zc, zn);
        assert_eq!(yc, yn);
    }

    #[test]
    fn noisy_pass_seeding() {
        let m = model(SMALL, ModelKind::Ladder, 3);
        let x = batch(2, 5);
        let (_, a) = m.forward_noisy(&x, 0.3, &mut Rng::new(1), BnUse::Batch).unwrap();
        let (_, b) = m.forward_noisy(&x, 0.3, &mut Rng::new(1), BnUse::Batch).unwrap();
        let (_, c) = m.forward_noisy(&x, 0.3, &mut Rng::new(2), BnUse::Batch).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ladder_pass_through_reconstructs_exactly() {
        let m = model("convv:6:3:1:1-maxpool:2:2-convv:5:3:1:1-fc", ModelKind::Ladder, 4);
        let st = m.ladder_state(&batch(3, 4), 0.0, &mut Rng::new(5)).unwrap();
        for l in 0..st.clean.len() {
            assert_eq!(st.clean[l].shape(), st.noisy[l].shape());
            assert_eq!(st.reconstructed[l], st.clean[l], "level {l}");
        }
    }

    #[test]
    fn encdec_output_matches_input_shape() {
        for spec in [SMALL, "convv:6:3:2:1-maxpool:3:2-convv:5:2:1:1-fc", "maxpool:2:2-convv:4:4:1:1-fc"] {
            let m = model(spec, ModelKind::EncoderDecoder, 6);
            let x = batch(4, 3);
            let st = m.ladder_state(&x, 0.3, &mut Rng::new(1)).unwrap();
            assert_eq!(st.reconstructed[0].shape(), x.shape(), "{spec}");
            let lad = model(spec, ModelKind::Ladder, 6);
            let st = lad.ladder_state(&x, 0.3, &mut Rng::new(1)).unwrap();
            for l in 0..st.clean.len() {
                assert_eq!(st.reconstructed[l].shape(), st.clean[l].shape());
            }
        }
    }

    #[test]
    fn missing_pool_record_is_an_error() {
        let m = model(SMALL, ModelKind::EncoderDecoder, 1);
        let mut g = Graph::new();
        let bound = m.bind(&mut g);
        let xv = g.leaf(batch(1, 2));
        let mut pass = m.encode(&mut g, &bound, xv, None, BnUse::Batch).unwrap();
        pass.pools = vec![None; pass.pools.len()];
        let err = m.decode_encdec(&mut g, &bound, &pass).unwrap_err();
        assert!(err.to_string().contains("pool record"), "{err}");
    }

    #[test]
    fn golden_logits() {
        let m = model(SMALL, ModelKind::Supervised, 42);
        let (_, logits) = m.forward_clean(&batch(7, 2), BnUse::Running).unwrap();
        // Regenerate with PRINT_GOLDEN=1 only on an intentional numerics change.
        let golden = [
            -2.0686396287013977, -0.0022159428128280512, 0.3211969490455453, 0.015089145776459497,
            0.041513164935191124, -0.8348686593656248, 0.4982949511736391, -0.7594571735300744,
        ];
        let got: Vec<f64> = logits.data().to_vec();
        if std::env::var("PRINT_GOLDEN").is_ok() {
            println!("{got:?}");
        }
        for (a, b) in got.iter().zip(golden) {
            assert!((a - b).abs() < 1e-12, "{got:?}");
        }
    }
}
