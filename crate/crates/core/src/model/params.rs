use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::grad::ParamSet;
use crate::tensor::Tensor;

pub const INIT_RANGE: f64 = 0.02;

pub(crate) const GATES: [&str; 4] = ["i", "f", "o", "g"];

pub mod names {
    pub const EMBEDDING: &str = "embedding";
    pub const REDUCE_W_C: &str = "reduce.w_c";
    pub const REDUCE_B_C: &str = "reduce.b_c";
    pub const REDUCE_W_H: &str = "reduce.w_h";
    pub const REDUCE_B_H: &str = "reduce.b_h";
    pub const INPUT_FEED_W: &str = "input_feed.w";
    pub const INPUT_FEED_B: &str = "input_feed.b";
    pub const ATTN_W_H: &str = "attention.w_h";
    pub const ATTN_W_S: &str = "attention.w_s";
    pub const ATTN_B: &str = "attention.b";
    pub const ATTN_V: &str = "attention.v";
    pub const ATTN_W_C: &str = "attention.w_c";
    pub const PTR_W_CONTEXT: &str = "pointer.w_context";
    pub const PTR_W_STATE: &str = "pointer.w_state";
    pub const PTR_W_INPUT: &str = "pointer.w_input";
    pub const PTR_B: &str = "pointer.b";
    pub const OUT_W: &str = "output.w";
    pub const OUT_B: &str = "output.b";
    pub const PROJ_W: &str = "output.proj_w";
    pub const PROJ_B: &str = "output.proj_b";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Uniform,
    Zero,
}

/// One row of the parameter table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub group: &'static str,
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn new(group: &'static str, name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self { group, name: name.into(), shape: shape.to_vec(), init }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn lstm_specs(group: &'static str, prefix: &str, input: usize, hidden: usize) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    for gate in GATES {
        out.push(ParamSpec::new(group, format!("{prefix}.w_{gate}"), &[input + hidden, hidden], Init::Uniform));
        out.push(ParamSpec::new(group, format!("{prefix}.b_{gate}"), &[1, hidden], Init::Zero));
    }
    out
}

/// Every learnable tensor the configuration calls for, in canonical order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    use names::*;
    let (h, e, v, a) = (config.hidden_dim, config.emb_dim, config.vocab_size, config.attn_dim());
    let mut s = vec![ParamSpec::new("embedding", EMBEDDING, &[v, e], Init::Uniform)];
    s.extend(lstm_specs("encoder", "encoder.fw", e, h));
    s.extend(lstm_specs("encoder", "encoder.bw", e, h));
    s.extend([
        ParamSpec::new("reduce", REDUCE_W_C, &[2 * h, h], Init::Uniform),
        ParamSpec::new("reduce", REDUCE_B_C, &[1, h], Init::Zero),
        ParamSpec::new("reduce", REDUCE_W_H, &[2 * h, h], Init::Uniform),
        ParamSpec::new("reduce", REDUCE_B_H, &[1, h], Init::Zero),
        ParamSpec::new("input_feed", INPUT_FEED_W, &[e + a, e], Init::Uniform),
        ParamSpec::new("input_feed", INPUT_FEED_B, &[1, e], Init::Zero),
    ]);
    s.extend(lstm_specs("decoder", "decoder", e, h));
    s.extend([
        ParamSpec::new("attention", ATTN_W_H, &[a, a], Init::Uniform),
        ParamSpec::new("attention", ATTN_W_S, &[2 * h, a], Init::Uniform),
        ParamSpec::new("attention", ATTN_B, &[1, a], Init::Zero),
        ParamSpec::new("attention", ATTN_V, &[a, 1], Init::Uniform),
    ]);
    if config.use_coverage {
        s.push(ParamSpec::new("coverage", ATTN_W_C, &[1, a], Init::Zero));
    }
    if config.use_pointer {
        s.extend([
            ParamSpec::new("pointer", PTR_W_CONTEXT, &[a, 1], Init::Uniform),
            ParamSpec::new("pointer", PTR_W_STATE, &[2 * h, 1], Init::Uniform),
            ParamSpec::new("pointer", PTR_W_INPUT, &[e, 1], Init::Uniform),
            ParamSpec::new("pointer", PTR_B, &[1, 1], Init::Zero),
        ]);
    }
    s.extend([
        ParamSpec::new("output", OUT_W, &[h + a, h], Init::Uniform),
        ParamSpec::new("output", OUT_B, &[1, h], Init::Zero),
        ParamSpec::new("output", PROJ_W, &[h, v], Init::Uniform),
        ParamSpec::new("output", PROJ_B, &[v, 1], Init::Zero),
    ]);
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    /// `(group, count)` in canonical order.
    pub groups: Vec<(String, usize)>,
}

impl ParamCount {
    pub fn group(&self, name: &str) -> usize {
        self.groups.iter().find(|(g, _)| g == name).map_or(0, |(_, n)| *n)
    }
}

/// Counts parameters from shapes alone; nothing is allocated.
pub fn count_params(config: &ModelConfig) -> ParamCount {
    let mut groups: Vec<(String, usize)> = Vec::new();
    for spec in param_specs(config) {
        match groups.iter_mut().find(|(g, _)| g == spec.group) {
            Some((_, n)) => *n += spec.numel(),
            None => groups.push((spec.group.to_string(), spec.numel())),
        }
    }
    ParamCount { total: groups.iter().map(|(_, n)| n).sum(), groups }
}

/// The model's weights together with the configuration that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: ParamSet,
}

impl ModelParams {
    /// Weights uniform in `[-0.02, 0.02]`, biases and `w_c` zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = ParamSet::new();
        for spec in param_specs(config) {
            let n = spec.numel();
            let data = match spec.init {
                Init::Zero => vec![0.0; n],
                Init::Uniform => (0..n).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE)).collect(),
            };
            tensors.insert(spec.name, Tensor::new(spec.shape, data)?);
        }
        Ok(Self { config: config.clone(), tensors })
    }

    /// Wraps existing tensors after checking them against the config's table.
    pub fn from_tensors(config: ModelConfig, tensors: ParamSet) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "config expects {} parameter tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, (name, t)) in specs.iter().zip(tensors.iter()) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(Error::Shape(format!(
                    "expected {} {:?}, got {name} {:?}",
                    spec.name,
                    spec.shape,
                    t.shape()
                )));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors.get(name).unwrap_or_else(|| panic!("model has no parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors.get_mut(name).unwrap_or_else(|| panic!("model has no parameter {name}"))
    }

    pub fn num_params(&self) -> usize {
        self.tensors.num_elements()
    }

    /// The same weights in coverage mode, with a zero `w_c` slotted into
    /// canonical position.
    pub fn with_coverage(&self) -> Result<Self> {
        if self.config.use_coverage {
            return Err(Error::InvalidArgument("model is already in coverage mode".into()));
        }
        let mut config = self.config.clone();
        config.use_coverage = true;
        let mut tensors = ParamSet::new();
        for spec in param_specs(&config) {
            let t = match self.tensors.get(&spec.name) {
                Some(t) => t.clone(),
                None => Tensor::zeros(&spec.shape),
            };
            tensors.insert(spec.name, t);
        }
        Self::from_tensors(config, tensors)
    }
}
