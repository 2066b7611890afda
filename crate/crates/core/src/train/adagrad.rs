use crate::error::{Error, Result};
use crate::grad::{GradientSet, ParamSet};
use crate::tensor::Tensor;

/// Per-parameter squared-gradient accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState {
    pub accumulators: ParamSet,
}

impl AdagradState {
    pub fn new(params: &ParamSet, init_accumulator: f64) -> Self {
        let mut accumulators = ParamSet::new();
        for (name, t) in params.iter() {
            accumulators.insert(name, Tensor::filled(t.shape(), init_accumulator));
        }
        Self { accumulators }
    }

    /// Re-keys the state to `params`, keeping existing accumulators and
    /// starting any new parameter at `init_accumulator`.
    pub fn extended_to(&self, params: &ParamSet, init_accumulator: f64) -> Self {
        let mut accumulators = ParamSet::new();
        for (name, t) in params.iter() {
            let acc = match self.accumulators.get(name) {
                Some(a) => a.clone(),
                None => Tensor::filled(t.shape(), init_accumulator),
            };
            accumulators.insert(name, acc);
        }
        Self { accumulators }
    }
}

/// `acc += g^2; theta -= lr * g / sqrt(acc)`, elementwise. Gradients are
/// expected to be clipped already.
pub fn adagrad_step(params: &mut ParamSet, grads: &GradientSet, state: &mut AdagradState, lr: f64) -> Result<()> {
    for (name, theta) in params.iter_mut() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient for {name}")))?;
        let acc = state
            .accumulators
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no accumulator for {name}")))?;
        if g.shape() != theta.shape() || acc.shape() != theta.shape() {
            return Err(Error::Shape(format!("adagrad shapes disagree for {name}")));
        }
        let gd = g.data();
        if gd.iter().all(|&x| x == 0.0) {
            continue;
        }
        for ((t, a), &gi) in theta.data_mut().iter_mut().zip(acc.data_mut().iter_mut()).zip(gd) {
            *a += gi * gi;
            *t -= lr * gi / a.sqrt();
        }
    }
    Ok(())
}
