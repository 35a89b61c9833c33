use super::params::ParamStore;
use super::Scalar;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// First-moment estimate for parameter `idx`.
    pub fn first_moment(&self, idx: usize) -> Option<&[T]> {
        self.m.get(idx).map(Vec::as_slice)
    }

    pub fn second_moment(&self, idx: usize) -> Option<&[T]> {
        self.v.get(idx).map(Vec::as_slice)
    }

    /// Applies one update using each parameter's `grad` buffer; parameters
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>) {
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.data().len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of_f64(self.beta1), T::of_f64(self.beta2));
        let c1 = T::of_f64(1.0 - self.beta1.powi(t));
        let c2 = T::of_f64(1.0 - self.beta2.powi(t));
        let lr = T::of_f64(self.lr);
        let eps = T::of_f64(self.eps);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let g = p.value.grad.take().unwrap_or_else(|| vec![T::zero(); m.len()]);
            for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
    }
}
