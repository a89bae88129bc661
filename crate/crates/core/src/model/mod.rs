//! Per-AP networks mapping local channel state to local beams.
//!
//! Every network emits a raw real vector `ω = [Re; Im]` of length `2·M·(N+1)`
//! whose halves are indexed `q·M + m` (beam-major). [`normalize_output`]
//! turns it into an `M × (N+1)` complex beam matrix spending the full budget.

mod net;

use std::fmt;
use std::str::FromStr;

use cfisac_nn::{Mode, Param, Scalar, Tensor};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::BeamformerSet;
use crate::scenario::ChannelScene;
use crate::{Error, Result, SystemConfig};
use net::Net;

/// Added to the norm in [`normalize_output`] so all-zero outputs stay finite.
pub const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureKind {
    Cnn1d,
    Cae,
    Unet,
}

impl FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cnn1d" | "1dcnn" | "cnn" => Ok(Self::Cnn1d),
            "cae" => Ok(Self::Cae),
            "unet" => Ok(Self::Unet),
            _ => Err(Error::Config(format!("unknown architecture `{s}`"))),
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cnn1d => "cnn1d",
            Self::Cae => "cae",
            Self::Unet => "unet",
        })
    }
}

/// One convolution. Kernels and paddings are `[antenna axis, beam axis]`
/// for the 2D networks and `[length, 1]` for the 1D network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub channels: usize,
    pub kernel: [usize; 2],
    pub padding: [usize; 2],
}

const fn layer(channels: usize, kernel: [usize; 2], padding: [usize; 2]) -> ConvLayerSpec {
    ConvLayerSpec {
        channels,
        kernel,
        padding,
    }
}

/// Layer-by-layer description shared by all AP networks.
///
/// Every convolution is followed by batch normalization and a leaky
/// rectifier. The 1D network uses `encoder` as its convolution stack and then
/// `fc_widths` fully connected layers plus a linear output layer. The 2D
/// networks run `encoder`, then `decoder` (transposed convolutions for
/// [`ArchitectureKind::Cae`]), then a 1×1 convolution to two channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    pub encoder: Vec<ConvLayerSpec>,
    #[serde(default)]
    pub decoder: Vec<ConvLayerSpec>,
    #[serde(default)]
    pub fc_widths: Vec<usize>,
    /// `[decoder layer, encoder layer]`: the encoder output is concatenated
    /// onto that decoder layer's input along channels.
    #[serde(default)]
    pub skips: Vec<[usize; 2]>,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
}

impl ArchitectureSpec {
    /// Full-size network for the given kind (sized for `M = 16`, `N = 5`).
    pub fn preset(kind: ArchitectureKind) -> Self {
        match kind {
            ArchitectureKind::Cnn1d => Self::cnn1d(),
            ArchitectureKind::Cae => Self::cae(),
            ArchitectureKind::Unet => Self::unet(),
        }
    }

    pub fn cnn1d() -> Self {
        Self {
            kind: ArchitectureKind::Cnn1d,
            encoder: vec![
                layer(2, [11, 1], [0, 0]),
                layer(4, [11, 1], [0, 0]),
                layer(8, [11, 1], [0, 0]),
            ],
            decoder: Vec::new(),
            fc_widths: vec![90, 90],
            skips: Vec::new(),
            leaky_slope: 0.01,
            bn_momentum: 0.1,
        }
    }

    pub fn cae() -> Self {
        Self {
            kind: ArchitectureKind::Cae,
            encoder: vec![
                layer(16, [5, 3], [0, 0]),
                layer(32, [5, 2], [0, 0]),
                layer(64, [3, 1], [0, 0]),
                layer(128, [3, 1], [0, 0]),
            ],
            decoder: vec![
                layer(32, [3, 1], [0, 0]),
                layer(64, [3, 1], [0, 0]),
                layer(128, [5, 2], [0, 0]),
                layer(256, [5, 3], [0, 0]),
            ],
            fc_widths: Vec::new(),
            skips: vec![[1, 2], [2, 1], [3, 0]],
            leaky_slope: 0.01,
            bn_momentum: 0.1,
        }
    }

    pub fn unet() -> Self {
        let same = |c| layer(c, [3, 3], [1, 1]);
        Self {
            kind: ArchitectureKind::Unet,
            encoder: vec![same(16), same(32), same(64), same(128)],
            decoder: vec![same(32), same(64), same(128), same(256)],
            fc_widths: Vec::new(),
            skips: vec![[1, 2], [2, 1], [3, 0]],
            leaky_slope: 0.01,
            bn_momentum: 0.1,
        }
    }

    /// Narrow networks for `M = 4`, `N = 2`, used in tests and smoke runs.
    pub fn toy(kind: ArchitectureKind) -> Self {
        let base = Self::preset(kind);
        match kind {
            ArchitectureKind::Cnn1d => Self {
                encoder: vec![layer(2, [5, 1], [0, 0]), layer(3, [5, 1], [0, 0])],
                fc_widths: vec![6],
                ..base
            },
            ArchitectureKind::Cae => Self {
                encoder: vec![layer(3, [2, 2], [0, 0]), layer(4, [2, 1], [0, 0])],
                decoder: vec![layer(3, [2, 1], [0, 0]), layer(4, [2, 2], [0, 0])],
                skips: vec![[1, 0]],
                ..base
            },
            ArchitectureKind::Unet => Self {
                encoder: vec![layer(3, [3, 3], [1, 1]), layer(4, [3, 3], [1, 1])],
                decoder: vec![layer(3, [3, 3], [1, 1]), layer(4, [3, 3], [1, 1])],
                skips: vec![[1, 0]],
                ..base
            },
        }
    }
}

/// `[Re h_1 … Re h_N, Re a, Im h_1 … Im h_N, Im a]` for AP `l`.
pub fn build_input_1d(scene: &ChannelScene, l: usize) -> Array1<f64> {
    let (m, n) = (scene.antennas(), scene.num_ues());
    let q = n + 1;
    let mut out = Array1::zeros(2 * m * q);
    for (k, v) in out.iter_mut().enumerate() {
        let (part, rest) = (k / (m * q), k % (m * q));
        let z = agent_channel(scene, l, rest / m, rest % m);
        *v = if part == 0 { z.re } else { z.im };
    }
    out
}

/// `2 × M × (N+1)`: real and imaginary planes of `[h_1 … h_N, a]`.
pub fn build_input_2d(scene: &ChannelScene, l: usize) -> Array3<f64> {
    let (m, n) = (scene.antennas(), scene.num_ues());
    Array3::from_shape_fn((2, m, n + 1), |(c, mi, q)| {
        let z = agent_channel(scene, l, q, mi);
        if c == 0 {
            z.re
        } else {
            z.im
        }
    })
}

/// Entry `m` of the channel towards agent `q` (UEs first, target last).
fn agent_channel(scene: &ChannelScene, l: usize, q: usize, m: usize) -> Complex64 {
    if q < scene.num_ues() {
        scene.comm[[l, q, m]]
    } else {
        scene.steering[[l, m]]
    }
}

/// Network input for a batch of scenes at AP `l`.
pub fn batch_input<T: Scalar>(kind: ArchitectureKind, scenes: &[&ChannelScene], l: usize) -> Tensor<T> {
    let first = scenes.first().expect("non-empty batch");
    let (m, q) = (first.antennas(), first.num_ues() + 1);
    let b = scenes.len();
    match kind {
        ArchitectureKind::Cnn1d => {
            let mut x = Tensor::zeros((1, b, 2 * m * q, 1));
            for (bi, s) in scenes.iter().enumerate() {
                for (k, v) in build_input_1d(s, l).into_iter().enumerate() {
                    x[[0, bi, k, 0]] = T::from_f64(v);
                }
            }
            x
        }
        _ => {
            let mut x = Tensor::zeros((2, b, m, q));
            for (bi, s) in scenes.iter().enumerate() {
                for ((c, mi, qi), v) in build_input_2d(s, l).indexed_iter() {
                    x[[c, bi, mi, qi]] = T::from_f64(*v);
                }
            }
            x
        }
    }
}

/// Maps a raw output row to an `M × Q` beam matrix with power exactly
/// `power` (up to [`NORM_GUARD`]).
pub fn normalize_output(raw: ArrayView1<f64>, antennas: usize, power: f64) -> Result<Array2<Complex64>> {
    let len = raw.len();
    if len == 0 || !len.is_multiple_of(2 * antennas) {
        return Err(Error::Shape(format!(
            "raw output of length {len} for M = {antennas}"
        )));
    }
    let half = len / 2;
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = power.sqrt() / (norm + NORM_GUARD);
    Ok(Array2::from_shape_fn((antennas, half / antennas), |(m, q)| {
        let k = q * antennas + m;
        Complex64::new(raw[k], raw[half + k]) * scale
    }))
}

/// Gradient with respect to `raw` of a real function of the normalized beams,
/// given its beam gradient `∂f/∂Re W + j ∂f/∂Im W`.
pub fn normalize_backward(raw: ArrayView1<f64>, grad: ArrayView2<Complex64>, power: f64) -> Array1<f64> {
    let antennas = grad.nrows();
    let half = raw.len() / 2;
    let mut g = Array1::zeros(raw.len());
    for ((m, q), z) in grad.indexed_iter() {
        let k = q * antennas + m;
        g[k] = z.re;
        g[half + k] = z.im;
    }
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let d = norm + NORM_GUARD;
    let xg: f64 = raw.iter().zip(g.iter()).map(|(x, g)| x * g).sum();
    let sp = power.sqrt();
    let radial = if norm > 0.0 { xg / (norm * d * d) } else { 0.0 };
    Array1::from_shape_fn(raw.len(), |k| sp * (g[k] / d - raw[k] * radial))
}

/// Stored tensors of one AP network, in visiting order.
pub type NetState = Vec<Vec<f64>>;

/// `L` independently initialized networks sharing one architecture.
#[derive(Debug, Clone)]
pub struct DistributedModel<T> {
    pub spec: ArchitectureSpec,
    pub system: SystemConfig,
    nets: Vec<Net<T>>,
}

/// Generator for AP `l`'s initial weights.
pub fn init_rng(seed: u64, l: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(l as u64);
    rng
}

impl<T: Scalar> DistributedModel<T> {
    pub fn init(spec: &ArchitectureSpec, system: &SystemConfig, seed: u64) -> Result<Self> {
        system.validate()?;
        if !(spec.leaky_slope > 0.0 && spec.leaky_slope < 1.0) {
            return Err(Error::Config(format!("leaky slope {} outside (0, 1)", spec.leaky_slope)));
        }
        let nets = (0..system.num_aps)
            .map(|l| {
                Net::new(
                    spec,
                    system.antennas_per_ap,
                    system.num_beams(),
                    &mut init_rng(seed, l),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: spec.clone(),
            system: system.clone(),
            nets,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.nets.len()
    }

    /// Length of each raw output row.
    pub fn output_len(&self) -> usize {
        2 * self.system.antennas_per_ap * self.system.num_beams()
    }

    /// Trainable scalars in one AP network.
    pub fn num_parameters(&self) -> usize {
        self.nets[0].params().iter().map(|p| p.len()).sum()
    }

    pub fn input(&self, scenes: &[&ChannelScene], l: usize) -> Tensor<T> {
        batch_input(self.spec.kind, scenes, l)
    }

    /// Raw rows `(B, 2MQ)` of AP `l` for a prepared input.
    pub fn forward(&mut self, l: usize, input: Tensor<T>, mode: Mode) -> Array2<T> {
        net::to_rows(self.spec.kind, &self.nets[l].forward(input, mode))
    }

    /// Evaluation-mode forward that leaves the model untouched.
    pub fn infer(&self, l: usize, input: &Tensor<T>) -> Array2<T> {
        net::to_rows(self.spec.kind, &self.nets[l].infer(input))
    }

    /// Accumulates parameter gradients of AP `l` from raw-row gradients.
    pub fn backward(&mut self, l: usize, grad_rows: &Array2<T>) {
        let g = net::from_rows(
            self.spec.kind,
            grad_rows,
            self.system.antennas_per_ap,
            self.system.num_beams(),
        );
        self.nets[l].backward(&g);
    }

    pub fn params_mut(&mut self, l: usize) -> Vec<&mut Param<T>> {
        self.nets[l].params_mut()
    }

    pub fn params(&self, l: usize) -> Vec<&Param<T>> {
        self.nets[l].params()
    }

    pub fn zero_grad(&mut self) {
        for net in &mut self.nets {
            for p in net.params_mut() {
                p.zero_grad();
            }
        }
    }

    /// Zeroes the last affine layer of every network.
    pub fn zero_output_layer(&mut self) {
        for net in &mut self.nets {
            for p in net.output_params_mut() {
                p.value.fill(T::zero());
            }
        }
    }

    /// Converts raw rows of every AP into beams for each scene.
    pub fn beams_from_rows(&self, rows: &[Array2<T>]) -> Result<Vec<BeamformerSet>> {
        let batch = rows.first().map_or(0, |r| r.nrows());
        let m = self.system.antennas_per_ap;
        (0..batch)
            .map(|b| {
                let mut w = BeamformerSet::for_config(&self.system);
                for (l, r) in rows.iter().enumerate() {
                    let raw = r.row(b).mapv(Scalar::to_f64);
                    let wl = normalize_output(raw.view(), m, self.system.power(l))?;
                    w.beams.slice_mut(ndarray::s![l, .., ..]).assign(&wl);
                }
                Ok(w)
            })
            .collect()
    }

    /// Evaluation-mode beams for a batch of scenes. AP `l` only sees its own
    /// channels.
    pub fn beamformers(&self, scenes: &[&ChannelScene]) -> Result<Vec<BeamformerSet>> {
        if scenes.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<_> = (0..self.num_aps())
            .map(|l| self.infer(l, &self.input(scenes, l)))
            .collect();
        self.beams_from_rows(&rows)
    }

    /// Evaluation in chunks so large splits stay within memory.
    pub fn beamformers_chunked(&self, scenes: &[ChannelScene], chunk: usize) -> Result<Vec<BeamformerSet>> {
        let mut out = Vec::with_capacity(scenes.len());
        for part in scenes.chunks(chunk.max(1)) {
            let refs: Vec<&ChannelScene> = part.iter().collect();
            out.extend(self.beamformers(&refs)?);
        }
        Ok(out)
    }

    /// Parameters and running statistics of every AP, as `f64`.
    pub fn state(&self) -> Vec<NetState> {
        let mut nets = self.nets.clone();
        nets.iter_mut()
            .map(|net| {
                let mut tensors = Vec::new();
                net.visit(&mut |a| tensors.push(a.iter().map(|&v| Scalar::to_f64(v)).collect()));
                tensors
            })
            .collect()
    }

    pub fn load_state(&mut self, state: &[NetState]) -> Result<()> {
        if state.len() != self.nets.len() {
            return Err(Error::Mismatch(format!(
                "state has {} networks, model has {}",
                state.len(),
                self.nets.len()
            )));
        }
        for (l, (net, tensors)) in self.nets.iter_mut().zip(state).enumerate() {
            let mut i = 0;
            let mut bad = None;
            net.visit(&mut |a| {
                match tensors.get(i) {
                    Some(t) if t.len() == a.len() => {
                        a.iter_mut().zip(t).for_each(|(d, &s)| *d = T::from_f64(s))
                    }
                    _ => bad = bad.or(Some(i)),
                }
                i += 1;
            });
            if let Some(k) = bad.or((i != tensors.len()).then_some(i)) {
                return Err(Error::Mismatch(format!(
                    "AP {l}: tensor {k} does not match the architecture"
                )));
            }
        }
        Ok(())
    }

    /// Same weights in another precision.
    pub fn cast<U: Scalar>(&self) -> DistributedModel<U> {
        let mut other = DistributedModel::<U>::init(&self.spec, &self.system, 0)
            .expect("architecture already validated");
        other
            .load_state(&self.state())
            .expect("identical architecture");
        other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ap_power;
    use crate::scenario::{generate_dataset, steering_vector};
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn toy_scene() -> ChannelScene {
        ChannelScene {
            comm: Array3::from_shape_vec((1, 1, 2), vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap(),
            steering: Array2::from_shape_vec((1, 2), steering_vector(0.0, 2, 0.5).to_vec()).unwrap(),
            target_angles: vec![0.0],
        }
    }

    #[test]
    fn input_examples() {
        let s = toy_scene();
        let v = build_input_1d(&s, 0);
        let expected = [1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let t = build_input_2d(&s, 0);
        let p0 = array![[1.0, 1.0], [0.0, -1.0]];
        let p1 = array![[0.0, 0.0], [1.0, 0.0]];
        for ((idx, a), b) in t.slice(ndarray::s![0, .., ..]).indexed_iter().zip(p0.iter()) {
            assert!((a - b).abs() < 1e-12, "{idx:?}");
        }
        for (a, b) in t.slice(ndarray::s![1, .., ..]).iter().zip(p1.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        let d = generate_dataset(&SystemConfig::default(), 2, 1.0, 3).unwrap();
        let v = build_input_1d(&d.scenes[0], 1);
        assert_eq!(v.len(), 192);
        let t = build_input_2d(&d.scenes[0], 1);
        assert_eq!(t.dim(), (2, 16, 6));
        for ((ch, m, q), x) in t.indexed_iter() {
            assert_eq!(*x, v[ch * 96 + q * 16 + m]);
        }
    }

    #[test]
    fn real_scene_has_zero_imaginary_half() {
        let mut s = toy_scene();
        s.comm.mapv_inplace(|z| c(z.re, 0.0));
        let v = build_input_1d(&s, 0);
        assert!(v.slice(ndarray::s![4..]).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn normalization_examples() {
        let raw = array![2.0, 0.0, 0.0, 0.0];
        let w = normalize_output(raw.view(), 1, 1.0).unwrap();
        assert!((w.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-11);
        let raw = array![0.6, 0.0, 0.0, 0.8];
        let w = normalize_output(raw.view(), 2, 4.0).unwrap();
        assert!((w[[0, 0]] - c(1.2, 0.0)).norm() < 1e-11);
        assert!((w[[1, 0]] - c(0.0, 1.6)).norm() < 1e-11);
        let zero = Array1::zeros(4);
        assert!(normalize_output(zero.view(), 2, 1.0).unwrap().iter().all(|z| z.norm() == 0.0));
        assert!(normalize_output(Array1::zeros(5).view(), 2, 1.0).is_err());
    }

    #[test]
    fn normalization_gradient_matches_finite_differences() {
        let raw = array![0.3, -1.2, 0.5, 0.9, -0.4, 0.1, 0.7, -0.2];
        let upstream = array![[c(0.2, -0.5), c(1.0, 0.3)], [c(-0.7, 0.4), c(0.1, 0.9)]];
        let f = |r: &Array1<f64>| {
            let w = normalize_output(r.view(), 2, 3.0).unwrap();
            w.iter()
                .zip(upstream.iter())
                .map(|(w, u)| w.re * u.re + w.im * u.im)
                .sum::<f64>()
        };
        let g = normalize_backward(raw.view(), upstream.view(), 3.0);
        for k in 0..raw.len() {
            let mut up = raw.clone();
            up[k] += 1e-6;
            let mut down = raw.clone();
            down[k] -= 1e-6;
            let fd = (f(&up) - f(&down)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8, "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn presets_fit_default_system() {
        let system = SystemConfig::default();
        for kind in [ArchitectureKind::Cnn1d, ArchitectureKind::Cae, ArchitectureKind::Unet] {
            let model = DistributedModel::<f32>::init(&ArchitectureSpec::preset(kind), &system, 1).unwrap();
            assert_eq!(model.output_len(), 192);
            let toy = SystemConfig::with_counts(2, 4, 2);
            DistributedModel::<f64>::init(&ArchitectureSpec::toy(kind), &toy, 1).unwrap();
        }
        // Table kernels do not fit a 4-antenna array.
        let toy = SystemConfig::with_counts(2, 4, 2);
        assert!(matches!(
            DistributedModel::<f64>::init(&ArchitectureSpec::cae(), &toy, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cnn1d_output_width() {
        let system = SystemConfig::default();
        let model = DistributedModel::<f64>::init(&ArchitectureSpec::cnn1d(), &system, 4).unwrap();
        let d = generate_dataset(&system, 3, 1.0, 4).unwrap();
        let refs: Vec<_> = d.scenes.iter().collect();
        let rows = model.infer(0, &model.input(&refs, 0));
        assert_eq!(rows.dim(), (3, 192));
        // Output layer is 90 -> 192.
        assert_eq!(model.params(0).last().unwrap().len(), 192);
        assert_eq!(model.params(0)[model.params(0).len() - 2].len(), 90 * 192);
    }

    #[test]
    fn seeding_and_state_round_trip() {
        let system = SystemConfig::with_counts(2, 4, 2);
        let spec = ArchitectureSpec::toy(ArchitectureKind::Unet);
        let a = DistributedModel::<f64>::init(&spec, &system, 9).unwrap();
        let b = DistributedModel::<f64>::init(&spec, &system, 9).unwrap();
        assert_eq!(a.state(), b.state());
        let st = a.state();
        assert_ne!(st[0], st[1]);
        let mut c = DistributedModel::<f64>::init(&spec, &system, 10).unwrap();
        assert_ne!(c.state(), st);
        c.load_state(&st).unwrap();
        assert_eq!(c.state(), st);
        let other = DistributedModel::<f64>::init(&ArchitectureSpec::toy(ArchitectureKind::Cae), &system, 1).unwrap();
        assert!(matches!(c.load_state(&other.state()), Err(Error::Mismatch(_))));
    }

    #[test]
    fn zero_output_layer_gives_zero_raw_output() {
        let system = SystemConfig::with_counts(2, 4, 2);
        let d = generate_dataset(&system, 4, 1.0, 2).unwrap();
        let refs: Vec<_> = d.scenes.iter().collect();
        for kind in [ArchitectureKind::Cnn1d, ArchitectureKind::Cae, ArchitectureKind::Unet] {
            let mut m = DistributedModel::<f64>::init(&ArchitectureSpec::toy(kind), &system, 3).unwrap();
            m.zero_output_layer();
            let rows = m.infer(1, &m.input(&refs, 1));
            assert!(rows.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identical_inputs_give_identical_rows_and_full_power() {
        let system = SystemConfig::default();
        let d = generate_dataset(&system, 1, 1.0, 5).unwrap();
        let refs = vec![&d.scenes[0]; 3];
        let m = DistributedModel::<f32>::init(&ArchitectureSpec::cnn1d(), &system, 5).unwrap();
        let w = m.beamformers(&refs).unwrap();
        assert_eq!(w[0], w[1]);
        assert_eq!(w[1], w[2]);
        for l in 0..2 {
            assert!((ap_power(&w[0], l) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ap_output_ignores_other_aps_channels() {
        let system = SystemConfig::with_counts(2, 4, 2);
        let d = generate_dataset(&system, 3, 1.0, 6).unwrap();
        for kind in [ArchitectureKind::Cnn1d, ArchitectureKind::Cae, ArchitectureKind::Unet] {
            let m = DistributedModel::<f64>::init(&ArchitectureSpec::toy(kind), &system, 8).unwrap();
            let mut perturbed = d.scenes.clone();
            for s in &mut perturbed {
                s.comm.slice_mut(ndarray::s![1, .., ..]).mapv_inplace(|z| z * c(0.0, 1.0));
                s.steering.row_mut(1).mapv_inplace(|z| -z);
            }
            let a: Vec<_> = d.scenes.iter().collect();
            let b: Vec<_> = perturbed.iter().collect();
            assert_eq!(m.infer(0, &m.input(&a, 0)), m.infer(0, &m.input(&b, 0)));
        }
    }

    #[test]
    fn cast_preserves_outputs() {
        let system = SystemConfig::with_counts(2, 4, 2);
        let d = generate_dataset(&system, 2, 1.0, 1).unwrap();
        let refs: Vec<_> = d.scenes.iter().collect();
        let m = DistributedModel::<f64>::init(&ArchitectureSpec::toy(ArchitectureKind::Cae), &system, 2).unwrap();
        let m32 = m.cast::<f32>();
        let a = m.infer(0, &m.input(&refs, 0));
        let b = m32.infer(0, &m32.input(&refs, 0));
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }
}
