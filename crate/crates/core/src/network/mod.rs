//! Network specs, the autodiff tape, and the three model families.

mod combinator;
mod graph;
mod model;
mod params;
mod spec;

pub use combinator::{combinator_backward, combinator_forward, combinator_g, CombinatorGrads, CombinatorParams, COMBINATOR_ARITY};
pub use graph::{Gradients, Graph, Var};
pub use model::{
    argmax_rows, comb, dec_b, dec_w, enc_beta, enc_gamma, enc_w, BnUse, Bound, EncoderPass, LadderState, Model,
    ModelKind, RunningStats,
};
pub use params::ParamSet;
pub use spec::{parse_spec, FeatureShape, LayerSpec, NetworkSpec};
