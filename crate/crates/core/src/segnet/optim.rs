use super::model::Parameter;
use crate::tensorad::{Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

pub const DICE_SMOOTHING: f64 = 1e-6;

/// Soft Dice loss over the foreground classes plus softmax cross-entropy.
pub fn dice_ce_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, onehot: Var) -> Result<Var> {
    let probs = tape.softmax(logits)?;
    let dice = tape.dice_loss(probs, onehot, DICE_SMOOTHING)?;
    let ce = tape.softmax_cross_entropy(logits, onehot)?;
    tape.add(dice, ce)
}

/// [`dice_ce_loss`] evaluated on plain tensors.
pub fn dice_ce_loss_value<T: Scalar>(logits: &Tensor<T>, onehot: &Tensor<T>) -> Result<T> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let t = tape.constant(onehot.clone());
    let loss = dice_ce_loss(&mut tape, l, t)?;
    Ok(tape.value(loss).data()[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Parameter<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Adam {
            config,
            m: zeros(),
            v: zeros(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update; `grads[i]` belongs to `params[i]`.
    pub fn step(&mut self, params: &mut [Parameter<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::invalid("gradients do not cover the optimiser's parameters"));
        }
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let corr1 = T::lit(1.0 - c.beta1.powi(t));
        let corr2 = T::lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.epsilon));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if g.shape() != p.value.shape() {
                return Err(Error::invalid(format!("gradient shape mismatch for {}", p.name)));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / corr1;
                let vhat = *v / corr2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
