use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{conv_output_len, pool_output_len, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { out_ch: usize, k: usize, stride: usize },
    MaxPool { size: usize, stride: usize },
    Dense { units: usize },
    Softmax { classes: usize },
}

impl LayerSpec {
    pub fn has_weights(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

/// `channels × length` of one layer's activation for a single example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub channels: usize,
    pub len: usize,
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.channels, self.len)
    }
}

/// A validated layer pipeline.
///
/// `shapes[0]` is the input; `shapes[l]` is the output of `layers[l - 1]`,
/// so there are `depth() + 1` activation levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    source: String,
    layers: Vec<LayerSpec>,
    shapes: Vec<FeatureShape>,
}

fn spec_err(token: &str, reason: impl Into<String>) -> Error {
    Error::Spec {
        token: token.to_string(),
        reason: reason.into(),
    }
}

fn parse_field(token: &str, field: &str, what: &str) -> Result<usize> {
    let v: usize = field
        .parse()
        .map_err(|_| spec_err(token, format!("{what} `{field}` is not a positive integer")))?;
    if v == 0 {
        return Err(spec_err(token, format!("{what} must be >= 1")));
    }
    Ok(v)
}

fn parse_token(token: &str, n_classes: usize) -> Result<Vec<LayerSpec>> {
    let fields: Vec<&str> = token.split(':').collect();
    match fields.as_slice() {
        ["convv", c, k, s, d] => {
            if *d != "1" {
                return Err(spec_err(token, format!("only unit dilation is supported, got `{d}`")));
            }
            Ok(vec![LayerSpec::Conv {
                out_ch: parse_field(token, c, "channel count")?,
                k: parse_field(token, k, "kernel size")?,
                stride: parse_field(token, s, "stride")?,
            }])
        }
        ["maxpool", p, s] => Ok(vec![LayerSpec::MaxPool {
            size: parse_field(token, p, "pool size")?,
            stride: parse_field(token, s, "stride")?,
        }]),
        ["fc"] => Ok(vec![
            LayerSpec::Dense { units: n_classes },
            LayerSpec::Softmax { classes: n_classes },
        ]),
        ["convv", ..] | ["maxpool", ..] | ["fc", ..] => {
            Err(spec_err(token, "wrong number of fields"))
        }
        _ => Err(spec_err(token, "unknown layer type")),
    }
}

/// Parses a `-`-separated layer string such as
/// `convv:40:5:1:1-maxpool:2:2-convv:50:3:1:1-fc`.
pub fn parse_spec(s: &str, input: FeatureShape, n_classes: usize) -> Result<NetworkSpec> {
    if s.trim().is_empty() {
        return Err(spec_err(s, "empty network spec"));
    }
    if n_classes < 2 {
        return Err(spec_err(s, format!("need at least 2 classes, got {n_classes}")));
    }
    let mut layers = Vec::new();
    let mut tokens = Vec::new();
    for token in s.split('-') {
        let parsed = parse_token(token, n_classes)?;
        tokens.extend(std::iter::repeat_n(token, parsed.len()));
        layers.extend(parsed);
    }
    NetworkSpec::build(s.to_string(), layers, &tokens, input)
}

impl NetworkSpec {
    pub fn from_layers(layers: Vec<LayerSpec>, input: FeatureShape) -> Result<Self> {
        let names: Vec<String> = layers.iter().map(|l| format!("{l:?}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        NetworkSpec::build(names.join("-"), layers, &refs, input)
    }

    fn build(source: String, layers: Vec<LayerSpec>, tokens: &[&str], input: FeatureShape) -> Result<Self> {
        if input.channels == 0 || input.len == 0 {
            return Err(spec_err(&source, format!("input shape {input} must be positive")));
        }
        let mut shapes = vec![input];
        let mut cur = input;
        for (i, (layer, token)) in layers.iter().zip(tokens).enumerate() {
            cur = match *layer {
                LayerSpec::Conv { out_ch, k, stride } => {
                    let len = conv_output_len(cur.len, k, stride, Padding::Valid).ok_or_else(|| {
                        spec_err(token, format!("input length {} is shorter than kernel k={k}", cur.len))
                    })?;
                    FeatureShape { channels: out_ch, len }
                }
                LayerSpec::MaxPool { size, stride } => {
                    let len = pool_output_len(cur.len, size, stride).ok_or_else(|| {
                        spec_err(token, format!("input length {} is shorter than pool size {size}", cur.len))
                    })?;
                    FeatureShape { channels: cur.channels, len }
                }
                LayerSpec::Dense { units } => FeatureShape { channels: units, len: 1 },
                LayerSpec::Softmax { classes } => {
                    if cur != (FeatureShape { channels: classes, len: 1 }) {
                        return Err(spec_err(
                            token,
                            format!("softmax over {classes} classes needs a {classes}x1 input, got {cur}"),
                        ));
                    }
                    if i + 1 != layers.len() {
                        return Err(spec_err(token, "softmax must be the final layer"));
                    }
                    cur
                }
            };
            shapes.push(cur);
        }
        match layers.last() {
            Some(LayerSpec::Softmax { .. }) => {}
            _ => return Err(spec_err(&source, "network must end with `fc` (dense + softmax)")),
        }
        if !matches!(layers[layers.len() - 2], LayerSpec::Dense { .. }) {
            return Err(spec_err(&source, "softmax must follow a dense layer"));
        }
        Ok(Self {
            source,
            layers,
            shapes,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Number of layers `L`; activations are indexed `0..=L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn shapes(&self) -> &[FeatureShape] {
        &self.shapes
    }

    pub fn input(&self) -> FeatureShape {
        self.shapes[0]
    }

    pub fn n_classes(&self) -> usize {
        self.shapes[self.depth()].channels
    }

    /// Layer `l` (1-based) in activation indexing.
    pub fn layer(&self, l: usize) -> LayerSpec {
        self.layers[l - 1]
    }

    /// Index of the dense logits layer (the one feeding the softmax).
    pub fn logits_level(&self) -> usize {
        self.depth() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const REFERENCE_SPEC: &str =
        "convv:40:5:1:1-maxpool:2:2-convv:50:3:1:1-maxpool:2:2-convv:20:3:1:1-convv:50:1:1:1-fc";

    fn shape(c: usize, l: usize) -> FeatureShape {
        FeatureShape { channels: c, len: l }
    }

    #[test]
    fn single_tokens() {
        let spec = parse_spec("convv:40:5:1:1-fc", shape(3, 40), 6).unwrap();
        assert_eq!(spec.layers()[0], LayerSpec::Conv { out_ch: 40, k: 5, stride: 1 });
        let spec = parse_spec("maxpool:2:2-fc", shape(3, 40), 6).unwrap();
        assert_eq!(spec.layers()[0], LayerSpec::MaxPool { size: 2, stride: 2 });
        assert_eq!(spec.layers()[1], LayerSpec::Dense { units: 6 });
        assert_eq!(spec.layers()[2], LayerSpec::Softmax { classes: 6 });
    }

    #[test]
    fn reference_length_chain() {
        let spec = parse_spec(REFERENCE_SPEC, shape(3, 40), 6).unwrap();
        let lens: Vec<usize> = spec.shapes().iter().map(|s| s.len).collect();
        assert_eq!(lens, vec![40, 36, 18, 16, 8, 6, 6, 1, 1]);
        let chans: Vec<usize> = spec.shapes().iter().map(|s| s.channels).collect();
        assert_eq!(chans, vec![3, 40, 40, 50, 50, 20, 50, 6, 6]);
        assert_eq!(spec.depth(), 8);
        assert_eq!(spec.n_classes(), 6);
    }

    #[test]
    fn too_short_names_token_and_length() {
        let err = parse_spec("convv:4:5:1:1-maxpool:2:2-convv:4:3:1:1-fc", shape(1, 8), 2).unwrap_err();
        match err {
            Error::Spec { token, reason } => {
                assert_eq!(token, "convv:4:3:1:1");
                assert!(reason.contains("length 2") && reason.contains("k=3"), "{reason}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let s = shape(3, 40);
        for bad in ["conv:4:5:1:1-fc", "convv:4:5:1-fc", "convv:4:5:1:2-fc", "maxpool:2-fc", "fc:3", "convv:0:5:1:1-fc", "convv:4:x:1:1-fc", "", "convv:4:5:1:1"] {
            assert!(parse_spec(bad, s, 6).is_err(), "{bad}");
        }
        assert!(parse_spec("fc-fc", s, 6).is_err());
    }
}
