use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::{Mode, Param, Scalar, Tensor};

/// Upper bound on the number of elements in one unfolded column buffer.
const COLS_BUDGET: usize = 1 << 22;

/// Geometry of a stride-1 window sweep: `image` is the swept map, `out` the
/// map of window positions.
#[derive(Debug, Clone, Copy)]
struct Window {
    channels: usize,
    batch: usize,
    image: (usize, usize),
    kernel: (usize, usize),
    padding: (usize, usize),
    out: (usize, usize),
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel.0 * self.kernel.1
    }

    fn positions(&self) -> usize {
        self.out.0 * self.out.1
    }

    fn samples_per_chunk(&self) -> usize {
        (COLS_BUDGET / (self.rows() * self.positions()).max(1)).clamp(1, self.batch.max(1))
    }

    /// Source row index for kernel offset `k` at output row `o`, if inside the image.
    #[inline]
    fn src(o: usize, k: usize, pad: usize, len: usize) -> Option<usize> {
        let i = (o + k).checked_sub(pad)?;
        (i < len).then_some(i)
    }

    /// Unfolds samples `b0..b1` of `src` (channel-major layout) into a
    /// `(channels*kh*kw, (b1-b0)*positions)` matrix.
    fn im2col<T: Scalar>(&self, src: &[T], b0: usize, b1: usize) -> Array2<T> {
        let (h, w) = self.image;
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        let (ho, wo) = self.out;
        let p = self.positions();
        let nb = b1 - b0;
        let mut cols = Array2::<T>::zeros((self.rows(), nb * p));
        let dst = cols.as_slice_mut().expect("fresh array is contiguous");
        let row_len = nb * p;
        for c in 0..self.channels {
            for ki in 0..kh {
                for kj in 0..kw {
                    let r = (c * kh + ki) * kw + kj;
                    let row = &mut dst[r * row_len..(r + 1) * row_len];
                    for b in b0..b1 {
                        let plane = &src[(c * self.batch + b) * h * w..][..h * w];
                        let out_plane = &mut row[(b - b0) * p..][..p];
                        for oy in 0..ho {
                            let Some(iy) = Self::src(oy, ki, ph, h) else {
                                continue;
                            };
                            for ox in 0..wo {
                                if let Some(ix) = Self::src(ox, kj, pw, w) {
                                    out_plane[oy * wo + ox] = plane[iy * w + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Window::im2col`]: scatters-adds columns back into `dst`.
    fn col2im<T: Scalar>(&self, cols: &Array2<T>, dst: &mut [T], b0: usize, b1: usize) {
        let (h, w) = self.image;
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        let (ho, wo) = self.out;
        let p = self.positions();
        let nb = b1 - b0;
        let cols = cols.as_standard_layout();
        let src = cols.as_slice().expect("standard layout");
        let row_len = nb * p;
        for c in 0..self.channels {
            for ki in 0..kh {
                for kj in 0..kw {
                    let r = (c * kh + ki) * kw + kj;
                    let row = &src[r * row_len..(r + 1) * row_len];
                    for b in b0..b1 {
                        let plane = &mut dst[(c * self.batch + b) * h * w..][..h * w];
                        let in_plane = &row[(b - b0) * p..][..p];
                        for oy in 0..ho {
                            let Some(iy) = Self::src(oy, ki, ph, h) else {
                                continue;
                            };
                            for ox in 0..wo {
                                if let Some(ix) = Self::src(ox, kj, pw, w) {
                                    plane[iy * w + ix] += in_plane[oy * wo + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn contiguous<T: Scalar>(t: &Tensor<T>) -> &[T] {
    t.as_slice()
        .expect("activations are kept in standard layout")
}

fn conv_out(len: usize, kernel: usize, pad: usize) -> Option<usize> {
    (len + 2 * pad + 1).checked_sub(kernel).filter(|&n| n > 0)
}

/// Stride-1 2D convolution with zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub padding: (usize, usize),
    /// `(out_channels, in_channels*kh*kw)`, flattened.
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// PyTorch-style default init: uniform with bound `1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        padding: (usize, usize),
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: Param::uniform(out_channels * fan_in, bound, rng),
            bias: Param::uniform(out_channels, bound, rng),
            input: None,
        }
    }

    /// Spatial output size for an input map, or `None` if the kernel does not fit.
    pub fn output_size(&self, input: (usize, usize)) -> Option<(usize, usize)> {
        Some((
            conv_out(input.0, self.kernel.0, self.padding.0)?,
            conv_out(input.1, self.kernel.1, self.padding.1)?,
        ))
    }

    fn window(&self, batch: usize, image: (usize, usize)) -> Window {
        Window {
            channels: self.in_channels,
            batch,
            image,
            kernel: self.kernel,
            padding: self.padding,
            out: self
                .output_size(image)
                .expect("kernel larger than padded input"),
        }
    }

    fn weight_matrix(&self) -> ArrayView2<'_, T> {
        let k = self.in_channels * self.kernel.0 * self.kernel.1;
        self.weight
            .value
            .view()
            .into_shape_with_order((self.out_channels, k))
            .expect("weight length matches shape")
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let y = self.infer(&x);
        if mode == Mode::Train {
            self.input = Some(x);
        }
        y
    }

    /// Forward pass without caching anything.
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let (c, batch, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channel mismatch");
        let win = self.window(batch, (h, w));
        let p = win.positions();
        let mut out = Array2::<T>::zeros((self.out_channels, batch * p));
        let chunk = win.samples_per_chunk();
        let src = contiguous(x);
        let wm = self.weight_matrix();
        for b0 in (0..batch).step_by(chunk) {
            let b1 = (b0 + chunk).min(batch);
            let cols = win.im2col(src, b0, b1);
            let mut dst = out.slice_mut(s![.., b0 * p..b1 * p]);
            general_mat_mul(T::one(), &wm, &cols, T::zero(), &mut dst);
        }
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.value.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        out.into_shape_with_order((self.out_channels, batch, win.out.0, win.out.1))
            .expect("output length matches shape")
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("backward without a training forward");
        let (_, batch, h, w) = x.dim();
        let win = self.window(batch, (h, w));
        let p = win.positions();
        let k = win.rows();
        let gy = gy.as_standard_layout();
        let gy2 = gy
            .view()
            .into_shape_with_order((self.out_channels, batch * p))
            .expect("grad shape matches output");
        self.bias.grad += &gy2.sum_axis(Axis(1));
        let mut gx = Tensor::<T>::zeros(x.dim());
        let chunk = win.samples_per_chunk();
        let src = contiguous(&x);
        let wm = self
            .weight
            .value
            .view()
            .into_shape_with_order((self.out_channels, k))
            .expect("weight shape");
        let mut wg = Array2::<T>::zeros((self.out_channels, k));
        let gx_slice = gx.as_slice_mut().expect("fresh array");
        for b0 in (0..batch).step_by(chunk) {
            let b1 = (b0 + chunk).min(batch);
            let cols = win.im2col(src, b0, b1);
            let g = gy2.slice(s![.., b0 * p..b1 * p]);
            general_mat_mul(T::one(), &g, &cols.t(), T::one(), &mut wg);
            let mut dcols = Array2::<T>::zeros((k, (b1 - b0) * p));
            general_mat_mul(T::one(), &wm.t(), &g, T::zero(), &mut dcols);
            win.col2im(&dcols, gx_slice, b0, b1);
        }
        let wg = wg.into_shape_with_order(self.weight.len()).expect("flat");
        self.weight.grad += &wg;
        gx
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}

/// Stride-1 transposed 2D convolution (the adjoint of [`Conv2d`]'s input map).
///
/// An input of size `h` maps to `h + kh - 1 - 2*ph`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub padding: (usize, usize),
    /// `(in_channels, out_channels*kh*kw)`, flattened.
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        padding: (usize, usize),
        rng: &mut R,
    ) -> Self {
        let fan_in = out_channels * kernel.0 * kernel.1;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: Param::uniform(in_channels * fan_in, bound, rng),
            bias: Param::uniform(out_channels, bound, rng),
            input: None,
        }
    }

    pub fn output_size(&self, input: (usize, usize)) -> Option<(usize, usize)> {
        let grow = |len: usize, k: usize, p: usize| (len + k).checked_sub(1 + 2 * p).filter(|&n| n > 0);
        Some((
            grow(input.0, self.kernel.0, self.padding.0)?,
            grow(input.1, self.kernel.1, self.padding.1)?,
        ))
    }

    /// The window sweeps the (larger) output map and lands on input positions.
    fn window(&self, batch: usize, input: (usize, usize)) -> Window {
        Window {
            channels: self.out_channels,
            batch,
            image: self
                .output_size(input)
                .expect("transposed kernel collapses the map"),
            kernel: self.kernel,
            padding: self.padding,
            out: input,
        }
    }

    fn weight_matrix(&self) -> ArrayView2<'_, T> {
        let k = self.out_channels * self.kernel.0 * self.kernel.1;
        self.weight
            .value
            .view()
            .into_shape_with_order((self.in_channels, k))
            .expect("weight length matches shape")
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let y = self.infer(&x);
        if mode == Mode::Train {
            self.input = Some(x);
        }
        y
    }

    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let (c, batch, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "transposed conv input channel mismatch");
        let win = self.window(batch, (h, w));
        let p_in = win.positions();
        let (ho, wo) = win.image;
        let mut out = Tensor::<T>::zeros((self.out_channels, batch, ho, wo));
        let x2 = x
            .view()
            .into_shape_with_order((c, batch * p_in))
            .expect("standard layout");
        let wm = self.weight_matrix();
        let chunk = win.samples_per_chunk();
        {
            let dst = out.as_slice_mut().expect("fresh array");
            for b0 in (0..batch).step_by(chunk) {
                let b1 = (b0 + chunk).min(batch);
                let mut cols = Array2::<T>::zeros((win.rows(), (b1 - b0) * p_in));
                let xs = x2.slice(s![.., b0 * p_in..b1 * p_in]);
                general_mat_mul(T::one(), &wm.t(), &xs, T::zero(), &mut cols);
                win.col2im(&cols, dst, b0, b1);
            }
        }
        for (mut ch, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.value.iter()) {
            ch.mapv_inplace(|v| v + b);
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("backward without a training forward");
        let (c, batch, h, w) = x.dim();
        let win = self.window(batch, (h, w));
        let p_in = win.positions();
        let gy = gy.as_standard_layout();
        let gsum = gy
            .view()
            .into_shape_with_order((self.out_channels, batch * win.image.0 * win.image.1))
            .expect("grad shape matches output")
            .sum_axis(Axis(1));
        self.bias.grad += &gsum;
        let x2 = x
            .view()
            .into_shape_with_order((c, batch * p_in))
            .expect("standard layout");
        let wm = self.weight_matrix();
        let mut wg = Array2::<T>::zeros((self.in_channels, win.rows()));
        let mut gx = Array2::<T>::zeros((c, batch * p_in));
        let chunk = win.samples_per_chunk();
        let src = gy.as_slice().expect("standard layout");
        for b0 in (0..batch).step_by(chunk) {
            let b1 = (b0 + chunk).min(batch);
            let cols = win.im2col(src, b0, b1);
            let xs = x2.slice(s![.., b0 * p_in..b1 * p_in]);
            general_mat_mul(T::one(), &xs, &cols.t(), T::one(), &mut wg);
            let mut dst = gx.slice_mut(s![.., b0 * p_in..b1 * p_in]);
            general_mat_mul(T::one(), &wm, &cols, T::zero(), &mut dst);
        }
        let wg = wg.into_shape_with_order(self.weight.len()).expect("flat");
        self.weight.grad += &wg;
        gx.into_shape_with_order((c, batch, h, w)).expect("input shape")
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}
