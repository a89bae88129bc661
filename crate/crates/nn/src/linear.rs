use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::{Mode, Param, Scalar, Tensor};

/// Fully connected layer on `(features, batch, 1, 1)` activations.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `(out_features, in_features)`, flattened.
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Array2<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        Self {
            in_features,
            out_features,
            weight: Param::uniform(in_features * out_features, bound, rng),
            bias: Param::uniform(out_features, bound, rng),
            input: None,
        }
    }

    fn weight_matrix(&self) -> ArrayView2<'_, T> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.out_features, self.in_features))
            .expect("weight length matches shape")
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let y = self.infer(&x);
        if mode == Mode::Train {
            let (f, batch, _, _) = x.dim();
            self.input = Some(x.into_shape_with_order((f, batch)).expect("standard layout"));
        }
        y
    }

    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let (f, batch, h, w) = x.dim();
        assert_eq!((f, h, w), (self.in_features, 1, 1), "linear expects flat features");
        let x2 = x
            .view()
            .into_shape_with_order((f, batch))
            .expect("standard layout");
        let mut y = Array2::<T>::zeros((self.out_features, batch));
        general_mat_mul(T::one(), &self.weight_matrix(), &x2, T::zero(), &mut y);
        for (mut row, &b) in y.axis_iter_mut(Axis(0)).zip(self.bias.value.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        y.into_shape_with_order((self.out_features, batch, 1, 1))
            .expect("output shape")
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("backward without a training forward");
        let batch = x.ncols();
        let gy = gy.as_standard_layout();
        let g = gy
            .view()
            .into_shape_with_order((self.out_features, batch))
            .expect("grad shape");
        self.bias.grad += &g.sum_axis(Axis(1));
        let mut wg = Array2::<T>::zeros((self.out_features, self.in_features));
        general_mat_mul(T::one(), &g, &x.t(), T::zero(), &mut wg);
        self.weight.grad += &wg.into_shape_with_order(self.weight.len()).expect("flat");
        let mut gx = Array2::<T>::zeros((self.in_features, batch));
        general_mat_mul(T::one(), &self.weight_matrix().t(), &g, T::zero(), &mut gx);
        gx.into_shape_with_order((self.in_features, batch, 1, 1))
            .expect("input shape")
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}
