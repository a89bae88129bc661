use ndarray::{Array1, Zip};
use serde::{Deserialize, Serialize};

use crate::{Param, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive moment estimation with bias correction (no weight decay).
///
/// Moment buffers are matched to parameters by position, so every call to
/// [`Adam::step`] must pass the parameters in the same order.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub lr: f64,
    step: u64,
    first: Vec<Array1<T>>,
    second: Vec<Array1<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, config: AdamConfig) -> Self {
        Self {
            config,
            lr,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update using the accumulated gradients, then zeroes them.
    pub fn step<'a, I>(&mut self, params: I)
    where
        I: IntoIterator<Item = &'a mut Param<T>>,
    {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let step_size = T::from_f64(self.lr / bc1);
        let bc2_sqrt = T::from_f64(bc2.sqrt());
        let (b1, b2, e) = (T::from_f64(beta1), T::from_f64(beta2), T::from_f64(eps));
        let one = T::one();
        for (i, p) in params.into_iter().enumerate() {
            if i == self.first.len() {
                self.first.push(Array1::zeros(p.len()));
                self.second.push(Array1::zeros(p.len()));
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            assert_eq!(m.len(), p.len(), "parameter order changed between steps");
            Zip::from(&mut p.value)
                .and(&mut p.grad)
                .and(m)
                .and(v)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + (one - b1) * *g;
                    *v = b2 * *v + (one - b2) * *g * *g;
                    *w -= step_size * *m / ((*v).sqrt() / bc2_sqrt + e);
                    *g = T::zero();
                });
        }
    }
}

/// Divides the learning rate by `factor` once the monitored loss has failed
/// to improve for `patience` consecutive epochs.
///
/// A value counts as an improvement when it beats the best seen so far by
/// more than `threshold` relative to its magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceLrOnPlateau {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub lr: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl ReduceLrOnPlateau {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            threshold: 1e-4,
            lr,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's loss and returns the learning rate for the next epoch.
    pub fn step(&mut self, loss: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => loss < best - self.threshold * best.abs(),
        };
        if improved {
            self.best = Some(loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr /= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_divides_after_patience_flat_epochs() {
        let mut s = ReduceLrOnPlateau::new(0.01, 10.0, 10);
        assert_eq!(s.step(1.0), 0.01);
        for _ in 0..9 {
            assert_eq!(s.step(1.0), 0.01);
        }
        assert!((s.step(1.0) - 0.001).abs() < 1e-15);
        for _ in 0..10 {
            s.step(1.0);
        }
        assert!((s.lr - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn plateau_keeps_rate_while_improving() {
        let mut s = ReduceLrOnPlateau::new(0.01, 10.0, 10);
        for i in 0..50 {
            assert_eq!(s.step(-(i as f64)), 0.01);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // With bias correction the first update is lr * g/|g| (up to eps).
        let mut p = Param::<f64>::zeros(2);
        p.grad[0] = 3.0;
        p.grad[1] = -0.5;
        let mut opt = Adam::new(0.01, AdamConfig::default());
        opt.step([&mut p]);
        assert!((p.value[0] + 0.01).abs() < 1e-9);
        assert!((p.value[1] - 0.01).abs() < 1e-9);
        assert_eq!(p.grad[0], 0.0);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Param::<f64>::filled(1, 5.0);
        let mut opt = Adam::new(0.1, AdamConfig::default());
        for _ in 0..2000 {
            p.grad[0] = 2.0 * (p.value[0] - 1.5);
            opt.step([&mut p]);
        }
        assert!((p.value[0] - 1.5).abs() < 1e-3);
    }
}
