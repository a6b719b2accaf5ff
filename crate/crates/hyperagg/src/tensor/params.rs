use crate::error::{HgError, Result};
use crate::tensor::{Matrix, Tape};

/// Ordered, name-keyed collection of trainable matrices.
///
/// Order is insertion order and is the canonical iteration order everywhere
/// (optimizer updates, checkpoints, finite-difference flattening), which keeps
/// runs deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Matrix)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: Matrix) {
        let name = name.into();
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, m));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.entries.iter_mut().map(|(n, m)| (n.as_str(), m))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.data().len()).sum()
    }

    /// Binds every parameter onto a tape under its name.
    pub fn bind_all(&self, tape: &mut Tape) {
        for (name, m) in &self.entries {
            tape.param(name, m);
        }
    }

    /// Copies tape gradients back into the matrices' grad buffers.
    /// Parameters the tape never saw get a zero gradient.
    pub fn collect_grads(&mut self, tape: &Tape) {
        for (name, m) in self.entries.iter_mut() {
            m.zero_grad();
            if let Some(g) = tape.grad_of_param(name) {
                m.grad
                    .as_mut()
                    .expect("zero_grad allocated")
                    .copy_from_slice(g);
            }
        }
    }

    /// Concatenates all parameter values in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (_, m) in &self.entries {
            out.extend_from_slice(m.data());
        }
        out
    }

    /// Inverse of `flatten`.
    pub fn set_from_flat(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_scalars() {
            return Err(HgError::config(format!(
                "flat parameter vector has length {}, expected {}",
                theta.len(),
                self.num_scalars()
            )));
        }
        let mut offset = 0;
        for (_, m) in self.entries.iter_mut() {
            let len = m.data().len();
            m.data_mut().copy_from_slice(&theta[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Flattened gradients in the same order as `flatten`. Missing grads
    /// contribute zeros.
    pub fn flatten_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (_, m) in &self.entries {
            match &m.grad {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat(0.0).take(m.data().len())),
            }
        }
        out
    }
}
