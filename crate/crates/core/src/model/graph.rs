use super::params::ModelParams;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::grad::GradientSet;
use crate::tensor::Tensor;

/// A tape plus the model whose parameters get bound onto it on first use.
pub struct Graph<'a> {
    pub tape: Tape,
    pub params: &'a ModelParams,
    bound: Vec<Option<Var>>,
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        Self { tape: Tape::new(), params, bound: vec![None; params.tensors.len()] }
    }

    /// The tape node of parameter `name`, binding it if needed.
    pub fn p(&mut self, name: &str) -> Var {
        let idx = self
            .params
            .tensors
            .index_of(name)
            .unwrap_or_else(|| panic!("model has no parameter {name}"));
        match self.bound[idx] {
            Some(v) => v,
            None => {
                let v = self.tape.param(idx, self.params.tensors.get_index(idx).1.clone());
                self.bound[idx] = Some(v);
                v
            }
        }
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.tape.constant(t)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.tape.constant(Tensor::zeros(&[rows, cols]))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    /// `x * W + b`.
    pub fn affine(&mut self, x: Var, w: &str, b: &str) -> Var {
        let w = self.p(w);
        let b = self.p(b);
        let xw = self.tape.matmul(x, w);
        self.tape.add(xw, b)
    }

    pub fn backprop(&self, loss: Var) -> Result<GradientSet> {
        self.tape.backprop(loss, &self.params.tensors)
    }
}
