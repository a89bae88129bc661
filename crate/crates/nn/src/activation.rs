use crate::{Mode, Scalar, Tensor};

/// Leaky rectifier `max(x, slope*x)` for `0 < slope < 1`.
#[derive(Debug, Clone)]
pub struct LeakyRelu<T> {
    pub slope: T,
    output: Option<Tensor<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        Self {
            slope: T::from_f64(slope),
            output: None,
        }
    }

    #[inline]
    pub fn apply(&self, v: T) -> T {
        if v > T::zero() {
            v
        } else {
            v * self.slope
        }
    }

    #[inline]
    pub fn derivative_at_output(&self, y: T) -> T {
        if y > T::zero() {
            T::one()
        } else {
            self.slope
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let x = self.infer(x);
        if mode == Mode::Train {
            self.output = Some(x.clone());
        }
        x
    }

    pub fn infer(&self, mut x: Tensor<T>) -> Tensor<T> {
        x.mapv_inplace(|v| self.apply(v));
        x
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let y = self.output.take().expect("backward without a training forward");
        let mut g = gy.clone();
        g.zip_mut_with(&y, |g, &y| *g *= self.derivative_at_output(y));
        g
    }
}
