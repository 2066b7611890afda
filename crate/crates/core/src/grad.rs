//! Named parameter collections, their gradients, and gradient utilities.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered, named collection of parameter tensors. Order is insertion order
/// and is what checkpoints and norm reductions iterate over.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.get_index_of(name)
    }

    pub fn get_index(&self, i: usize) -> (&str, &Tensor) {
        let (k, v) = self.tensors.get_index(i).expect("param index in range");
        (k.as_str(), v)
    }

    pub fn get_index_mut(&mut self, i: usize) -> &mut Tensor {
        self.tensors.get_index_mut(i).expect("param index in range").1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }
}

/// Gradients keyed like the [`ParamSet`] they were computed against; every
/// gradient has its parameter's shape.
pub type GradientSet = ParamSet;

impl ParamSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        let mut out = ParamSet::new();
        for (k, v) in params.iter() {
            out.insert(k, Tensor::zeros(v.shape()));
        }
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.values().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = ParamSet::new();
        for (name, t) in self.iter() {
            out.insert(name, t.scale(k));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Largest elementwise difference against another set with the same keys.
    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.iter()
            .map(|(k, v)| other.get(k).map_or(f64::INFINITY, |o| v.max_abs_diff(o)))
            .fold(0.0, f64::max)
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`. Returns the
/// (possibly) clipped gradients and the norm before clipping.
pub fn clip_by_global_norm(grads: &GradientSet, max_norm: f64) -> Result<(GradientSet, f64)> {
    if !(max_norm > 0.0) {
        return Err(Error::InvalidArgument(format!("max_norm must be positive, got {max_norm}")));
    }
    let norm = grads.global_norm();
    if norm <= max_norm {
        return Ok((grads.clone(), norm));
    }
    Ok((grads.scaled(max_norm / norm), norm))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares the analytic gradient of `f` against central differences at every
/// coordinate of `point`.
///
/// The per-coordinate error is `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, point: &ParamSet, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<(f64, GradientSet)>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::InvalidArgument(format!("epsilon must be in (0, 1e-2], got {epsilon}")));
    }
    let (_, analytic) = f(point)?;
    let mut probe = point.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coordinates: 0,
    };

    for p in 0..point.len() {
        let (name, base) = point.get_index(p);
        let name = name.to_string();
        let grad = analytic
            .get(&name)
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient for {name}")))?;
        for i in 0..base.len() {
            let x = base.data()[i];
            probe.get_index_mut(p).data_mut()[i] = x + epsilon;
            let (fp, _) = f(&probe)?;
            probe.get_index_mut(p).data_mut()[i] = x - epsilon;
            let (fm, _) = f(&probe)?;
            probe.get_index_mut(p).data_mut()[i] = x;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite(format!("f at perturbed {name}[{i}]")));
            }
            let numeric = (fp - fm) / (2.0 * epsilon);
            let a = grad.data()[i];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if err > report.max_rel_error || report.coordinates == 0 {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}
