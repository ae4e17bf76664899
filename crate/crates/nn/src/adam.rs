use crate::error::{NnError, Result};
use crate::network::ParamSet;
use crate::real::Real;

/// Adam optimizer state.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParamSet<T>,
    v: ParamSet<T>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one bias-corrected update. Fails without touching `params`
    /// if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64) -> Result<()> {
        if let Some(t) = grads.tensors.iter().find(|t| t.data.iter().any(|v| !v.is_finite())) {
            return Err(NnError::TrainingDiverged(t.name.clone()));
        }
        self.steps += 1;
        let b1 = T::from_f64(self.beta1).unwrap();
        let b2 = T::from_f64(self.beta2).unwrap();
        let one = T::one();
        let c1 = 1.0 - self.beta1.powi(self.steps as i32);
        let c2 = 1.0 - self.beta2.powi(self.steps as i32);
        let step = T::from_f64(lr / c1).unwrap();
        let c2 = T::from_f64(c2).unwrap();
        let eps = T::from_f64(self.eps).unwrap();
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for (((p, &g), m), v) in
                p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data)
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p = *p - step * *m / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
