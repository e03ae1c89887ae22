//! Adaptive moment estimation with a fixed update order.

use ndarray::Array2;

use super::{ParamStore, Scalar};

pub struct Adam<F: Scalar> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    step: u64,
    m: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(params: &ParamStore<F>, lr: f64) -> Self {
        let m = (0..params.len()).map(|i| Array2::zeros(params.value(i).dim())).collect();
        let v = (0..params.len()).map(|i| Array2::zeros(params.value(i).dim())).collect();
        Self {
            lr: F::from(lr).unwrap(),
            beta1: F::from(0.9).unwrap(),
            beta2: F::from(0.999).unwrap(),
            eps: F::from(1e-8).unwrap(),
            step: 0,
            m,
            v,
        }
    }

    /// Apply one update. Parameters without a gradient this step are skipped.
    pub fn step(&mut self, params: &mut ParamStore<F>, grads: &[Option<Array2<F>>]) {
        self.step += 1;
        let t = F::from(self.step as f64).unwrap();
        let bc1 = F::one() - self.beta1.powf(t);
        let bc2 = F::one() - self.beta2.powf(t);
        for (pid, grad) in grads.iter().enumerate() {
            let Some(g) = grad else { continue };
            let m = &mut self.m[pid];
            let v = &mut self.v[pid];
            m.zip_mut_with(g, |mi, &gi| *mi = self.beta1 * *mi + (F::one() - self.beta1) * gi);
            v.zip_mut_with(g, |vi, &gi| {
                *vi = self.beta2 * *vi + (F::one() - self.beta2) * gi * gi
            });
            let p = params.value_mut(pid);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|pi, &mi, &vi| {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            });
        }
    }
}
