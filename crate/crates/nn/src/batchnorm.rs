use ndarray::{Array1, Axis};

use crate::{Mode, Param, Scalar, Tensor};

/// Per-channel batch normalization over `(batch, height, width)`.
///
/// Training uses biased batch statistics; the running variance tracks the
/// unbiased estimate. Running averages use `momentum` as the weight of the
/// newest batch.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    xhat: Tensor<T>,
    inv_std: Array1<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize, momentum: f64) -> Self {
        Self {
            channels,
            momentum,
            eps: 1e-5,
            gamma: Param::filled(channels, T::one()),
            beta: Param::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Tensor<T> {
        assert_eq!(x.dim().0, self.channels, "batch norm channel mismatch");
        let eps = T::from_f64(self.eps);
        match mode {
            Mode::Eval => self.infer(x),
            Mode::Train => {
                let n = x.len() / self.channels;
                let nt = T::from_f64(n as f64);
                let m = T::from_f64(self.momentum);
                let mut inv_std = Array1::<T>::zeros(self.channels);
                let mut y = x.clone();
                for (c, mut ch) in x.axis_iter_mut(Axis(0)).enumerate() {
                    let mean = ch.iter().fold(T::zero(), |a, &v| a + v) / nt;
                    let var = ch
                        .iter()
                        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                        / nt;
                    let is = T::one() / (var + eps).sqrt();
                    inv_std[c] = is;
                    ch.mapv_inplace(|v| (v - mean) * is);
                    let unbiased = if n > 1 {
                        var * nt / T::from_f64((n - 1) as f64)
                    } else {
                        var
                    };
                    self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * mean;
                    self.running_var[c] = (T::one() - m) * self.running_var[c] + m * unbiased;
                }
                for (c, (mut yc, xc)) in y
                    .axis_iter_mut(Axis(0))
                    .zip(x.axis_iter(Axis(0)))
                    .enumerate()
                {
                    let (g, b) = (self.gamma.value[c], self.beta.value[c]);
                    yc.zip_mut_with(&xc, |y, &xh| *y = g * xh + b);
                }
                self.cache = Some(Cache { xhat: x, inv_std });
                y
            }
        }
    }

    /// Normalizes with the running statistics.
    pub fn infer(&self, mut x: Tensor<T>) -> Tensor<T> {
        let eps = T::from_f64(self.eps);
        for (c, mut ch) in x.axis_iter_mut(Axis(0)).enumerate() {
            let scale = self.gamma.value[c] / (self.running_var[c] + eps).sqrt();
            let shift = self.beta.value[c] - self.running_mean[c] * scale;
            ch.mapv_inplace(|v| v * scale + shift);
        }
        x
    }

    /// Normalized activations from the last training forward, if any.
    pub fn cached_xhat(&self) -> Option<&Tensor<T>> {
        self.cache.as_ref().map(|c| &c.xhat)
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let Cache { xhat, inv_std } = self.cache.take().expect("backward without a training forward");
        let n = xhat.len() / self.channels;
        let nt = T::from_f64(n as f64);
        let mut gx = gy.to_owned();
        for (c, (mut gc, xc)) in gx
            .axis_iter_mut(Axis(0))
            .zip(xhat.axis_iter(Axis(0)))
            .enumerate()
        {
            let mut dbeta = T::zero();
            let mut dgamma = T::zero();
            for (&g, &xh) in gc.iter().zip(xc.iter()) {
                dbeta += g;
                dgamma += g * xh;
            }
            self.beta.grad[c] += dbeta;
            self.gamma.grad[c] += dgamma;
            let k = self.gamma.value[c] * inv_std[c] / nt;
            gc.zip_mut_with(&xc, |g, &xh| *g = k * (nt * *g - dbeta - xh * dgamma));
        }
        gx
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.gamma, &self.beta]
    }
}
