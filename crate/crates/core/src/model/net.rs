use cfisac_nn::{BatchNorm, Conv2d, ConvTranspose2d, LeakyRelu, Linear, Mode, Param, Scalar, Tensor};
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;

use super::{ArchitectureKind, ArchitectureSpec, ConvLayerSpec};
use crate::{Error, Result};

#[derive(Debug, Clone)]
enum Conv<T> {
    Plain(Conv2d<T>),
    Transposed(ConvTranspose2d<T>),
}

impl<T: Scalar> Conv<T> {
    fn output_size(&self, input: (usize, usize)) -> Option<(usize, usize)> {
        match self {
            Self::Plain(c) => c.output_size(input),
            Self::Transposed(c) => c.output_size(input),
        }
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        match self {
            Self::Plain(c) => c.forward(x, mode),
            Self::Transposed(c) => c.forward(x, mode),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Self::Plain(c) => c.infer(x),
            Self::Transposed(c) => c.infer(x),
        }
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        match self {
            Self::Plain(c) => c.backward(gy),
            Self::Transposed(c) => c.backward(gy),
        }
    }

    fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        match self {
            Self::Plain(c) => c.params_mut(),
            Self::Transposed(c) => c.params_mut(),
        }
    }

    fn params(&self) -> [&Param<T>; 2] {
        match self {
            Self::Plain(c) => c.params(),
            Self::Transposed(c) => c.params(),
        }
    }
}

/// Convolution, batch normalization, leaky rectifier.
#[derive(Debug, Clone)]
struct ConvBlock<T> {
    conv: Conv<T>,
    bn: BatchNorm<T>,
    act: LeakyRelu<T>,
}

impl<T: Scalar> ConvBlock<T> {
    fn new<R: Rng + ?Sized>(
        in_channels: usize,
        layer: &ConvLayerSpec,
        transposed: bool,
        spec: &ArchitectureSpec,
        rng: &mut R,
    ) -> Self {
        let kernel = (layer.kernel[0], layer.kernel[1]);
        let padding = (layer.padding[0], layer.padding[1]);
        let conv = if transposed {
            Conv::Transposed(ConvTranspose2d::new(in_channels, layer.channels, kernel, padding, rng))
        } else {
            Conv::Plain(Conv2d::new(in_channels, layer.channels, kernel, padding, rng))
        };
        Self {
            conv,
            bn: BatchNorm::new(layer.channels, spec.bn_momentum),
            act: LeakyRelu::new(spec.leaky_slope),
        }
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let z = self.conv.forward(x, mode);
        let z = self.bn.forward(z, mode);
        self.act.infer(z)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.act.infer(self.bn.infer(self.conv.infer(x)))
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let mut g = gy.to_owned();
        {
            let xhat = self
                .bn
                .cached_xhat()
                .expect("backward without a training forward");
            for (c, (mut gc, xc)) in g.axis_iter_mut(Axis(0)).zip(xhat.axis_iter(Axis(0))).enumerate() {
                let (gamma, beta) = (self.bn.gamma.value[c], self.bn.beta.value[c]);
                gc.zip_mut_with(&xc, |g, &xh| *g *= self.act.derivative_at_output(gamma * xh + beta));
            }
        }
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Array1<T>)) {
        for p in self.conv.params_mut() {
            f(&mut p.value);
        }
        for p in self.bn.params_mut() {
            f(&mut p.value);
        }
        f(&mut self.bn.running_mean);
        f(&mut self.bn.running_var);
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        let [w, b] = self.conv.params_mut();
        let [g, be] = self.bn.params_mut();
        [w, b, g, be].into_iter()
    }

    fn params(&self) -> impl Iterator<Item = &Param<T>> {
        self.conv.params().into_iter().chain(self.bn.params())
    }
}

#[derive(Debug, Clone)]
struct Dense<T> {
    linear: Linear<T>,
    act: LeakyRelu<T>,
}

/// Convolutions along the flattened input followed by fully connected layers.
#[derive(Debug, Clone)]
pub(super) struct Cnn1d<T> {
    convs: Vec<ConvBlock<T>>,
    dense: Vec<Dense<T>>,
    out: Linear<T>,
    /// `(channels, length)` of the last convolution output.
    flat: (usize, usize),
}

impl<T: Scalar> Cnn1d<T> {
    fn new<R: Rng + ?Sized>(spec: &ArchitectureSpec, len: usize, rng: &mut R) -> Result<Self> {
        let mut convs = Vec::new();
        let (mut channels, mut size) = (1, (len, 1));
        for (i, layer) in spec.encoder.iter().enumerate() {
            let block = ConvBlock::new(channels, layer, false, spec, rng);
            size = block.conv.output_size(size).ok_or_else(|| {
                Error::Config(format!("convolution {i} does not fit a length-{} input", size.0))
            })?;
            channels = layer.channels;
            convs.push(block);
        }
        if size.1 != 1 {
            return Err(Error::Config("1D network kernels must have width 1".into()));
        }
        let mut features = channels * size.0;
        let mut dense = Vec::new();
        for &width in &spec.fc_widths {
            dense.push(Dense {
                linear: Linear::new(features, width, rng),
                act: LeakyRelu::new(spec.leaky_slope),
            });
            features = width;
        }
        Ok(Self {
            convs,
            dense,
            out: Linear::new(features, len, rng),
            flat: (channels, size.0),
        })
    }

    /// `(C, B, H, 1)` to `(C*H, B, 1, 1)` with features ordered channel-major.
    fn flatten(x: Tensor<T>) -> Tensor<T> {
        let (c, b, h, _) = x.dim();
        let perm = x
            .into_shape_with_order((c, b, h))
            .expect("standard layout")
            .permuted_axes([0, 2, 1]);
        perm.as_standard_layout()
            .into_owned()
            .into_shape_with_order((c * h, b, 1, 1))
            .expect("contiguous")
    }

    fn unflatten(&self, g: Tensor<T>) -> Tensor<T> {
        let (c, h) = self.flat;
        let b = g.dim().1;
        let perm = g
            .into_shape_with_order((c, h, b))
            .expect("standard layout")
            .permuted_axes([0, 2, 1]);
        perm.as_standard_layout()
            .into_owned()
            .into_shape_with_order((c, b, h, 1))
            .expect("contiguous")
    }

    fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Tensor<T> {
        for block in &mut self.convs {
            x = block.forward(x, mode);
        }
        x = Self::flatten(x);
        for d in &mut self.dense {
            x = d.act.forward(d.linear.forward(x, mode), mode);
        }
        self.out.forward(x, mode)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut x = x.clone();
        for block in &self.convs {
            x = block.infer(&x);
        }
        x = Self::flatten(x);
        for d in &self.dense {
            x = d.act.infer(d.linear.infer(&x));
        }
        self.out.infer(&x)
    }

    fn backward(&mut self, g: &Tensor<T>) {
        let mut g = self.out.backward(g);
        for d in self.dense.iter_mut().rev() {
            g = d.linear.backward(&d.act.backward(&g));
        }
        g = self.unflatten(g);
        for block in self.convs.iter_mut().rev() {
            g = block.backward(&g);
        }
    }
}

/// Encoder–decoder with channel-concatenated skip connections and a 1×1 head.
#[derive(Debug, Clone)]
pub(super) struct EncoderDecoder<T> {
    encoder: Vec<ConvBlock<T>>,
    decoder: Vec<ConvBlock<T>>,
    /// Encoder layer whose output is appended to each decoder layer's input.
    skips: Vec<Option<usize>>,
    head: Conv2d<T>,
    /// Channel count of each decoder input coming from the previous layer.
    carried: Vec<usize>,
}

impl<T: Scalar> EncoderDecoder<T> {
    fn new<R: Rng + ?Sized>(spec: &ArchitectureSpec, map: (usize, usize), rng: &mut R) -> Result<Self> {
        let transposed = spec.kind == ArchitectureKind::Cae;
        let mut enc_shapes = Vec::new();
        let (mut channels, mut size) = (2, map);
        let mut encoder = Vec::new();
        for (i, layer) in spec.encoder.iter().enumerate() {
            let block = ConvBlock::new(channels, layer, false, spec, rng);
            size = block.conv.output_size(size).ok_or_else(|| {
                Error::Config(format!("encoder layer {i} does not fit a {}x{} map", size.0, size.1))
            })?;
            channels = layer.channels;
            enc_shapes.push((channels, size));
            encoder.push(block);
        }
        let mut skips = vec![None; spec.decoder.len()];
        for &[d, e] in &spec.skips {
            if d >= spec.decoder.len() || e >= spec.encoder.len() || skips[d].is_some() {
                return Err(Error::Config(format!("invalid skip connection {e} -> {d}")));
            }
            skips[d] = Some(e);
        }
        let mut decoder = Vec::new();
        let mut carried = Vec::new();
        for (i, layer) in spec.decoder.iter().enumerate() {
            let mut in_channels = channels;
            if let Some(e) = skips[i] {
                let (ec, es) = enc_shapes[e];
                if es != size {
                    return Err(Error::Config(format!(
                        "skip from encoder {e} ({}x{}) into decoder {i} ({}x{})",
                        es.0, es.1, size.0, size.1
                    )));
                }
                in_channels += ec;
            }
            let block = ConvBlock::new(in_channels, layer, transposed, spec, rng);
            carried.push(channels);
            size = block.conv.output_size(size).ok_or_else(|| {
                Error::Config(format!("decoder layer {i} does not fit a {}x{} map", size.0, size.1))
            })?;
            channels = layer.channels;
            decoder.push(block);
        }
        if size != map {
            return Err(Error::Config(format!(
                "decoder ends at {}x{}, beams need {}x{}",
                size.0, size.1, map.0, map.1
            )));
        }
        Ok(Self {
            encoder,
            decoder,
            skips,
            head: Conv2d::new(channels, 2, (1, 1), (0, 0), rng),
            carried,
        })
    }

    fn run(
        &mut self,
        mut x: Tensor<T>,
        mut step: impl FnMut(&mut ConvBlock<T>, Tensor<T>) -> Tensor<T>,
    ) -> Tensor<T> {
        let mut kept: Vec<Option<Tensor<T>>> = vec![None; self.encoder.len()];
        for (i, block) in self.encoder.iter_mut().enumerate() {
            x = step(block, x);
            if self.skips.contains(&Some(i)) {
                kept[i] = Some(x.clone());
            }
        }
        for (block, skip) in self.decoder.iter_mut().zip(&self.skips) {
            if let Some(e) = skip {
                let other = kept[*e].as_ref().expect("kept for skip");
                x = concatenate(Axis(0), &[x.view(), other.view()]).expect("skip shapes validated");
            }
            x = step(block, x);
        }
        x
    }

    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        let h = self.run(x, |b, x| b.forward(x, mode));
        self.head.forward(h, mode)
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut x = x.clone();
        let mut kept: Vec<Option<Tensor<T>>> = vec![None; self.encoder.len()];
        for (i, block) in self.encoder.iter().enumerate() {
            x = block.infer(&x);
            if self.skips.contains(&Some(i)) {
                kept[i] = Some(x.clone());
            }
        }
        for (block, skip) in self.decoder.iter().zip(&self.skips) {
            if let Some(e) = skip {
                let other = kept[*e].as_ref().expect("kept for skip");
                x = concatenate(Axis(0), &[x.view(), other.view()]).expect("skip shapes validated");
            }
            x = block.infer(&x);
        }
        self.head.infer(&x)
    }

    fn backward(&mut self, g: &Tensor<T>) {
        let mut g = self.head.backward(g);
        let mut into_encoder: Vec<Option<Tensor<T>>> = vec![None; self.encoder.len()];
        for i in (0..self.decoder.len()).rev() {
            let gin = self.decoder[i].backward(&g);
            match self.skips[i] {
                Some(e) => {
                    let c = self.carried[i];
                    g = gin.slice(s![..c, .., .., ..]).to_owned();
                    into_encoder[e] = Some(gin.slice(s![c.., .., .., ..]).to_owned());
                }
                None => g = gin,
            }
        }
        for i in (0..self.encoder.len()).rev() {
            if let Some(extra) = into_encoder[i].take() {
                g += &extra;
            }
            g = self.encoder[i].backward(&g);
        }
    }
}

#[derive(Debug, Clone)]
pub(super) enum Net<T> {
    Cnn1d(Cnn1d<T>),
    EncoderDecoder(EncoderDecoder<T>),
}

impl<T: Scalar> Net<T> {
    pub(super) fn new<R: Rng + ?Sized>(
        spec: &ArchitectureSpec,
        antennas: usize,
        beams: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match spec.kind {
            ArchitectureKind::Cnn1d => Self::Cnn1d(Cnn1d::new(spec, 2 * antennas * beams, rng)?),
            ArchitectureKind::Cae | ArchitectureKind::Unet => {
                Self::EncoderDecoder(EncoderDecoder::new(spec, (antennas, beams), rng)?)
            }
        })
    }

    /// Output layout as returned by the last layer: `(2MQ, B, 1, 1)` for the
    /// 1D network, `(2, B, M, Q)` otherwise.
    pub(super) fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Tensor<T> {
        match self {
            Self::Cnn1d(n) => n.forward(x, mode),
            Self::EncoderDecoder(n) => n.forward(x, mode),
        }
    }

    pub(super) fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Self::Cnn1d(n) => n.infer(x),
            Self::EncoderDecoder(n) => n.infer(x),
        }
    }

    pub(super) fn backward(&mut self, g: &Tensor<T>) {
        match self {
            Self::Cnn1d(n) => n.backward(g),
            Self::EncoderDecoder(n) => n.backward(g),
        }
    }

    /// Visits every stored tensor (parameters and running statistics) in a
    /// fixed order.
    pub(super) fn visit(&mut self, f: &mut dyn FnMut(&mut Array1<T>)) {
        match self {
            Self::Cnn1d(n) => {
                for b in &mut n.convs {
                    b.visit(f);
                }
                for d in &mut n.dense {
                    for p in d.linear.params_mut() {
                        f(&mut p.value);
                    }
                }
                for p in n.out.params_mut() {
                    f(&mut p.value);
                }
            }
            Self::EncoderDecoder(n) => {
                for b in n.encoder.iter_mut().chain(n.decoder.iter_mut()) {
                    b.visit(f);
                }
                for p in n.head.params_mut() {
                    f(&mut p.value);
                }
            }
        }
    }

    pub(super) fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Self::Cnn1d(n) => {
                let mut v: Vec<&mut Param<T>> = Vec::new();
                for b in &mut n.convs {
                    v.extend(b.params_mut());
                }
                for d in &mut n.dense {
                    v.extend(d.linear.params_mut());
                }
                v.extend(n.out.params_mut());
                v
            }
            Self::EncoderDecoder(n) => {
                let mut v: Vec<&mut Param<T>> = Vec::new();
                for b in n.encoder.iter_mut().chain(n.decoder.iter_mut()) {
                    v.extend(b.params_mut());
                }
                v.extend(n.head.params_mut());
                v
            }
        }
    }

    pub(super) fn params(&self) -> Vec<&Param<T>> {
        match self {
            Self::Cnn1d(n) => {
                let mut v: Vec<&Param<T>> = Vec::new();
                for b in &n.convs {
                    v.extend(b.params());
                }
                for d in &n.dense {
                    v.extend(d.linear.params());
                }
                v.extend(n.out.params());
                v
            }
            Self::EncoderDecoder(n) => {
                let mut v: Vec<&Param<T>> = Vec::new();
                for b in n.encoder.iter().chain(n.decoder.iter()) {
                    v.extend(b.params());
                }
                v.extend(n.head.params());
                v
            }
        }
    }

    /// Final affine layer, for tests that zero it.
    pub(super) fn output_params_mut(&mut self) -> [&mut Param<T>; 2] {
        match self {
            Self::Cnn1d(n) => n.out.params_mut(),
            Self::EncoderDecoder(n) => n.head.params_mut(),
        }
    }
}

/// `(C, B, H, W)` network output to `(B, 2MQ)` raw rows.
pub(super) fn to_rows<T: Scalar>(kind: ArchitectureKind, out: &Tensor<T>) -> Array2<T> {
    match kind {
        ArchitectureKind::Cnn1d => {
            let (f, b, _, _) = out.dim();
            out.view()
                .into_shape_with_order((f, b))
                .expect("standard layout")
                .t()
                .as_standard_layout()
                .into_owned()
        }
        _ => {
            let (c, b, m, q) = out.dim();
            Array2::from_shape_fn((b, c * m * q), |(bi, k)| {
                let (ch, rest) = (k / (m * q), k % (m * q));
                out[[ch, bi, rest % m, rest / m]]
            })
        }
    }
}

/// Inverse of [`to_rows`].
pub(super) fn from_rows<T: Scalar>(
    kind: ArchitectureKind,
    rows: &Array2<T>,
    antennas: usize,
    beams: usize,
) -> Tensor<T> {
    let (b, len) = rows.dim();
    match kind {
        ArchitectureKind::Cnn1d => rows
            .t()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((len, b, 1, 1))
            .expect("contiguous"),
        _ => Tensor::from_shape_fn((2, b, antennas, beams), |(ch, bi, m, q)| {
            rows[[bi, ch * antennas * beams + q * antennas + m]]
        }),
    }
}
