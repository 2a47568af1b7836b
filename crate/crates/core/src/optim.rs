use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::param::ParamStore;
use crate::rng::derive;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.iter().any(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        if self.first.len() != store.len() {
            self.first = store
                .iter()
                .map(|p| Tensor::zeros(p.tensor.shape()))
                .collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let lr = self.lr * p.lr_scale;
            let g = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, w) in p.tensor.data_mut().iter_mut().enumerate() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * g[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                *w -= lr * mhat / (libm::sqrt(vhat) + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

/// Seeded mini-batch Adam: each epoch shuffles `samples`, averages per-sample gradients
/// over each batch and steps once per batch. Returns the mean loss of every epoch.
pub fn fit<S>(
    store: &mut ParamStore,
    samples: &[S],
    opts: FitOptions,
    seed: u64,
    loss: impl Fn(&mut Tape, &ParamStore, &S) -> Result<Var>,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("training samples"));
    }
    if opts.batch_size == 0 || !(opts.lr >= 0.0 && opts.lr.is_finite()) {
        return Err(invalid!(
            "batch size {} / learning rate {} invalid",
            opts.batch_size,
            opts.lr
        ));
    }
    let mut adam = Adam::new(opts.lr);
    let mut rng = derive(seed, 0xf17);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            store.zero_grad();
            for &i in batch {
                let mut tape = Tape::new();
                let l = loss(&mut tape, store, &samples[i])?;
                let lv = tape.value(l).item()?;
                if !lv.is_finite() {
                    return Err(Error::Diverged { epoch, loss: lv });
                }
                sum += lv;
                tape.backward(l)?.accumulate_into(&tape, store);
            }
            store.scale_grads(1.0 / batch.len() as f64);
            adam.step(store)?;
        }
        losses.push(sum / samples.len() as f64);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_step(store: &mut ParamStore, opt: &mut Adam) {
        let id = crate::param::ParamId(0);
        let x = store.value(id).data()[0];
        store.zero_grad();
        store.grad_mut(id).data_mut()[0] = 2.0 * x;
        opt.step(store).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::from_vec(alloc::vec![1.5, -2.0]));
        let before = store.clone();
        Adam::new(0.1).step(&mut store).unwrap();
        assert_eq!(store.flat_values(), before.flat_values());
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::from_vec(alloc::vec![0.0, 0.0]));
        store.grad_mut(id).data_mut().copy_from_slice(&[3.7, -0.02]);
        let mut opt = Adam::new(0.01);
        opt.beta1 = 0.5;
        opt.beta2 = 0.7;
        opt.step(&mut store).unwrap();
        let w = store.value(id).data();
        assert!((w[0] + 0.01).abs() < 1e-8);
        assert!((w[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn minimises_square() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::scalar(1.0));
        let mut opt = Adam::new(0.1);
        for _ in 0..200 {
            quadratic_step(&mut store, &mut opt);
        }
        assert!(store.flat_values()[0].abs() < 0.05);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(1.0));
        store.grad_mut(id).data_mut()[0] = f64::NAN;
        assert_eq!(
            Adam::new(0.1).step(&mut store),
            Err(Error::NonFinite("gradient"))
        );
    }
}
