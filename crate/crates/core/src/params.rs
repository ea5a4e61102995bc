/// Uniform access to the trainable tensors of a parameter set. Tensor order
/// is fixed; optimizers, serialization and gradient checks rely on it.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &[f64])>;

    /// Same order as [`Parameters::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    /// Overwrites every tensor from a flat vector laid out like [`Parameters::to_flat`].
    fn load_flat(&mut self, values: &[f64]) -> Result<(), String> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(format!("expected {expected} values, found {}", values.len()));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn add_scaled(&mut self, other: &Self, factor: f64) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += factor * s;
            }
        }
    }
}
