use ndarray::Array1;
use rand::Rng;

use crate::Scalar;

/// A trainable tensor stored flat, together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Array1<T>,
    pub grad: Array1<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            value: Array1::zeros(len),
            grad: Array1::zeros(len),
        }
    }

    pub fn filled(len: usize, v: T) -> Self {
        Self {
            value: Array1::from_elem(len, v),
            grad: Array1::zeros(len),
        }
    }

    /// Uniform on `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(len: usize, bound: f64, rng: &mut R) -> Self {
        let value = (0..len)
            .map(|_| T::from_f64(rng.random_range(-bound..=bound)))
            .collect();
        Self {
            value,
            grad: Array1::zeros(len),
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}
