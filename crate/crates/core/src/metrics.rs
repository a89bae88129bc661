//! Communication (SINR) and sensing (SSNR) metrics, their gradients with
//! respect to the beams, and sample-level signal simulators.
//!
//! Complex gradients follow the convention `∂f/∂Re w + j ∂f/∂Im w`, so a
//! real step `w += t·G` is steepest ascent.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::scenario::ChannelScene;
use crate::{Error, Result};

/// All beams of all APs, indexed `(ap, antenna, beam)`; beam `N` (0-based) is
/// the sensing beam.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub beams: Array3<Complex64>,
}

impl BeamformerSet {
    pub fn zeros(num_aps: usize, antennas: usize, num_beams: usize) -> Self {
        Self {
            beams: Array3::zeros((num_aps, antennas, num_beams)),
        }
    }

    pub fn for_config(config: &SystemConfig) -> Self {
        Self::zeros(config.num_aps, config.antennas_per_ap, config.num_beams())
    }

    pub fn num_aps(&self) -> usize {
        self.beams.dim().0
    }

    pub fn antennas(&self) -> usize {
        self.beams.dim().1
    }

    pub fn num_beams(&self) -> usize {
        self.beams.dim().2
    }

    /// `W̄_l`, an `M × (N+1)` matrix.
    pub fn ap(&self, l: usize) -> ArrayView2<'_, Complex64> {
        self.beams.slice(s![l, .., ..])
    }

    pub fn beam(&self, l: usize, q: usize) -> ArrayView1<'_, Complex64> {
        self.beams.slice(s![l, .., q])
    }

    /// Random beams drawn isotropically, each AP scaled to spend exactly its
    /// budget.
    pub fn random<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Self {
        let mut w = Self::for_config(config);
        for l in 0..config.num_aps {
            let mut ap = w.beams.slice_mut(s![l, .., ..]);
            ap.mapv_inplace(|_| complex_normal(rng, 1.0));
            let norm = ap.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let scale = config.power(l).sqrt() / norm;
            ap.mapv_inplace(|z| z * scale);
        }
        w
    }

    fn check(&self, scene: &ChannelScene) -> Result<()> {
        let (l, m, q) = self.beams.dim();
        if l != scene.num_aps() || m != scene.antennas() || q != scene.num_ues() + 1 {
            return Err(Error::Shape(format!(
                "beams are {l}x{m}x{q}, scene needs {}x{}x{}",
                scene.num_aps(),
                scene.antennas(),
                scene.num_ues() + 1
            )));
        }
        Ok(())
    }
}

/// Circularly symmetric complex Gaussian sample with the given variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// `u^H v`.
fn inner(u: ArrayView1<Complex64>, v: ArrayView1<Complex64>) -> Complex64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Effective gains `h_n^H w_q` of the stacked channels, indexed `(n, q)`.
pub fn effective_gains(scene: &ChannelScene, w: &BeamformerSet) -> Result<Array2<Complex64>> {
    w.check(scene)?;
    let (n_count, q_count) = (scene.num_ues(), w.num_beams());
    let mut g = Array2::zeros((n_count, q_count));
    for l in 0..scene.num_aps() {
        for n in 0..n_count {
            let h = scene.comm.slice(s![l, n, ..]);
            for q in 0..q_count {
                g[[n, q]] += inner(h, w.beam(l, q));
            }
        }
    }
    Ok(g)
}

fn sinr_from_gains(gains: &Array2<Complex64>, n: usize, noise_var: f64) -> f64 {
    let row = gains.row(n);
    let signal = row[n].norm_sqr();
    let interference: f64 = row
        .iter()
        .enumerate()
        .filter(|&(q, _)| q != n)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    signal / (interference + noise_var)
}

/// SINR of user `n` (0-based), linear scale.
pub fn sinr_user(scene: &ChannelScene, w: &BeamformerSet, n: usize, noise_var: f64) -> Result<f64> {
    if n >= scene.num_ues() {
        return Err(Error::Index(format!(
            "user {n} of {} (0-based)",
            scene.num_ues()
        )));
    }
    Ok(sinr_from_gains(&effective_gains(scene, w)?, n, noise_var))
}

/// Per-user SINRs, linear scale.
pub fn sinr_all(scene: &ChannelScene, w: &BeamformerSet, noise_var: f64) -> Result<Vec<f64>> {
    let gains = effective_gains(scene, w)?;
    Ok((0..scene.num_ues())
        .map(|n| sinr_from_gains(&gains, n, noise_var))
        .collect())
}

/// `g₂`: the smallest user SINR.
pub fn min_sinr(scene: &ChannelScene, w: &BeamformerSet, noise_var: f64) -> Result<f64> {
    Ok(sinr_all(scene, w, noise_var)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// `‖a^H(θ_l) W̄_l‖²` for every AP.
pub fn sensing_gains(scene: &ChannelScene, w: &BeamformerSet) -> Result<Vec<f64>> {
    w.check(scene)?;
    Ok((0..scene.num_aps())
        .map(|l| {
            let a = scene.steering.row(l);
            (0..w.num_beams())
                .map(|q| inner(a, w.beam(l, q)).norm_sqr())
                .sum()
        })
        .collect())
}

/// SSNR with per-pair gain variances `gain_var[(l, r)]` and per-receiver
/// noise powers.
pub fn ssnr_general(
    scene: &ChannelScene,
    w: &BeamformerSet,
    gain_var: &Array2<f64>,
    ap_noise_var: &[f64],
) -> Result<f64> {
    let l_count = scene.num_aps();
    if gain_var.dim() != (l_count, ap_noise_var.len()) {
        return Err(Error::Shape(format!(
            "gain variances {:?} for {l_count} transmitters and {} receivers",
            gain_var.dim(),
            ap_noise_var.len()
        )));
    }
    let denom: f64 = ap_noise_var.iter().sum();
    if denom <= 0.0 {
        return Err(Error::Config("receiver noise powers sum to zero".into()));
    }
    let per_ap = sensing_gains(scene, w)?;
    let num: f64 = per_ap
        .iter()
        .enumerate()
        .map(|(l, &g)| gain_var.row(l).sum() * g)
        .sum();
    Ok(num / denom)
}

/// Weight `Σ_r σ²_{s,lr} / Σ_r σ²_{a,r}` of AP `l`'s sensing gain in the SSNR
/// under uniform variances.
pub fn ssnr_weight(config: &SystemConfig) -> f64 {
    config.sensing_gain_var / config.ap_noise_var
}

/// `g₁` with uniform variances from `config` (every AP also receives).
pub fn ssnr(scene: &ChannelScene, w: &BeamformerSet, config: &SystemConfig) -> Result<f64> {
    let l = scene.num_aps();
    let gain_var = Array2::from_elem((l, l), config.sensing_gain_var);
    ssnr_general(scene, w, &gain_var, &vec![config.ap_noise_var; l])
}

/// `Σ_q ‖w_{lq}‖²`.
pub fn ap_power(w: &BeamformerSet, l: usize) -> f64 {
    w.ap(l).iter().map(|z| z.norm_sqr()).sum()
}

/// `g₁`, `g₂` and the per-user SINRs of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sinr: Vec<f64>,
    pub min_sinr: f64,
    pub ssnr: f64,
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl MetricReport {
    pub fn evaluate(scene: &ChannelScene, w: &BeamformerSet, config: &SystemConfig) -> Result<Self> {
        let sinr = sinr_all(scene, w, config.ue_noise_var)?;
        let min_sinr = sinr.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            sinr,
            min_sinr,
            ssnr: ssnr(scene, w, config)?,
        })
    }

    /// `scene_id,sinr_1..sinr_N,min_sinr,ssnr` followed by the same values in dB.
    pub fn csv_header(num_ues: usize) -> String {
        let mut cols = vec!["scene_id".to_string()];
        let names: Vec<String> = (1..=num_ues)
            .map(|n| format!("sinr_{n}"))
            .chain(["min_sinr".into(), "ssnr".into()])
            .collect();
        cols.extend(names.iter().cloned());
        cols.extend(names.iter().map(|c| format!("{c}_db")));
        cols.join(",")
    }

    pub fn csv_row(&self, scene_id: usize) -> String {
        let values: Vec<f64> = self
            .sinr
            .iter()
            .copied()
            .chain([self.min_sinr, self.ssnr])
            .collect();
        let mut cols = vec![scene_id.to_string()];
        cols.extend(values.iter().map(|v| v.to_string()));
        cols.extend(values.iter().map(|&v| db(v).to_string()));
        cols.join(",")
    }
}

/// `g₁`, `g₂` and their gradients with respect to every beam.
#[derive(Debug, Clone)]
pub struct MetricGradients {
    pub ssnr: f64,
    pub min_sinr: f64,
    /// Index of the user attaining the minimum (lowest index on ties).
    pub worst_user: usize,
    pub grad_ssnr: Array3<Complex64>,
    pub grad_min_sinr: Array3<Complex64>,
}

/// Evaluates `g₁`, `g₂` and their beam gradients under uniform variances.
///
/// The minimum is differentiated through the attaining user.
pub fn metric_gradients(
    scene: &ChannelScene,
    w: &BeamformerSet,
    config: &SystemConfig,
) -> Result<MetricGradients> {
    let gains = effective_gains(scene, w)?;
    let (l_count, _, q_count) = w.beams.dim();
    let n_count = scene.num_ues();

    let weight = ssnr_weight(config);
    let mut grad_ssnr = Array3::zeros(w.beams.dim());
    let mut ssnr = 0.0;
    for l in 0..l_count {
        let a = scene.steering.row(l);
        for q in 0..q_count {
            let u = inner(a, w.beam(l, q));
            ssnr += weight * u.norm_sqr();
            let mut g = grad_ssnr.slice_mut(s![l, .., q]);
            g.zip_mut_with(&a, |g: &mut Complex64, &am| *g = am * u * (2.0 * weight));
        }
    }

    let mut worst_user = 0;
    let mut min_sinr = f64::INFINITY;
    for n in 0..n_count {
        let v = sinr_from_gains(&gains, n, config.ue_noise_var);
        if v < min_sinr {
            min_sinr = v;
            worst_user = n;
        }
    }
    let n = worst_user;
    let signal = gains[[n, n]].norm_sqr();
    let denom = signal / min_sinr;
    let mut grad_min_sinr = Array3::zeros(w.beams.dim());
    for l in 0..l_count {
        let h = scene.comm.slice(s![l, n, ..]);
        for q in 0..q_count {
            let coef = if q == n {
                gains[[n, q]] * (2.0 / denom)
            } else {
                gains[[n, q]] * (-2.0 * signal / (denom * denom))
            };
            let mut g = grad_min_sinr.slice_mut(s![l, .., q]);
            g.zip_mut_with(&h, |g: &mut Complex64, &hm| *g = hm * coef);
        }
    }
    Ok(MetricGradients {
        ssnr,
        min_sinr,
        worst_user,
        grad_ssnr,
        grad_min_sinr,
    })
}

/// `x_l = W̄_l x`.
pub fn transmit_signal(
    w_l: ArrayView2<Complex64>,
    symbols: ArrayView1<Complex64>,
) -> Result<Array1<Complex64>> {
    if w_l.ncols() != symbols.len() {
        return Err(Error::Shape(format!(
            "{} beams but {} symbols",
            w_l.ncols(),
            symbols.len()
        )));
    }
    Ok(w_l.dot(&symbols))
}

/// `y_n = Σ_q h_n^H w_q x_q + noise` for user `n` (0-based).
pub fn simulate_ue_rx(
    scene: &ChannelScene,
    w: &BeamformerSet,
    n: usize,
    symbols: ArrayView1<Complex64>,
    noise: Complex64,
) -> Result<Complex64> {
    w.check(scene)?;
    if n >= scene.num_ues() {
        return Err(Error::Index(format!("user {n} of {}", scene.num_ues())));
    }
    let mut y = noise;
    for l in 0..scene.num_aps() {
        let x_l = transmit_signal(w.ap(l), symbols)?;
        y += inner(scene.comm.slice(s![l, n, ..]), x_l.view());
    }
    Ok(y)
}

/// Echo at AP `r`: `Σ_l α_{lr} a(θ_r) a^H(θ_l) x_l + n_r`, with `alpha[l]`
/// the gain of the `l → r` path.
pub fn simulate_ap_rx(
    scene: &ChannelScene,
    w: &BeamformerSet,
    r: usize,
    symbols: ArrayView1<Complex64>,
    alpha: ArrayView1<Complex64>,
    noise: ArrayView1<Complex64>,
) -> Result<Array1<Complex64>> {
    w.check(scene)?;
    if r >= scene.num_aps() {
        return Err(Error::Index(format!("AP {r} of {}", scene.num_aps())));
    }
    if alpha.len() != scene.num_aps() || noise.len() != scene.antennas() {
        return Err(Error::Shape(format!(
            "{} path gains and {} noise samples for L={}, M={}",
            alpha.len(),
            noise.len(),
            scene.num_aps(),
            scene.antennas()
        )));
    }
    let mut coef = Complex64::new(0.0, 0.0);
    for l in 0..scene.num_aps() {
        let x_l = transmit_signal(w.ap(l), symbols)?;
        coef += alpha[l] * inner(scene.steering.row(l), x_l.view());
    }
    let a_r = scene.steering.row(r);
    Ok(Array1::from_shape_fn(scene.antennas(), |m| a_r[m] * coef + noise[m]))
}

/// Unit-power complex Gaussian symbol vector.
pub fn random_symbols<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Array1<Complex64> {
    Array1::from_shape_fn(len, |_| complex_normal(rng, 1.0))
}

/// Empirical SINR of user `n` from `draws` received samples, split into the
/// intended term and everything else.
pub fn monte_carlo_sinr<R: Rng + ?Sized>(
    scene: &ChannelScene,
    w: &BeamformerSet,
    n: usize,
    noise_var: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let q_count = w.num_beams();
    let mut own = Array1::zeros(q_count);
    let zero = Complex64::new(0.0, 0.0);
    let (mut signal, mut rest) = (0.0, 0.0);
    for _ in 0..draws {
        let x = random_symbols(rng, q_count);
        let noise = complex_normal(rng, noise_var);
        let y = simulate_ue_rx(scene, w, n, x.view(), noise)?;
        own.fill(zero);
        own[n] = x[n];
        let s = simulate_ue_rx(scene, w, n, own.view(), zero)?;
        signal += s.norm_sqr();
        rest += (y - s).norm_sqr();
    }
    Ok(signal / rest)
}

/// Empirical SSNR from `draws` echoes at every AP, with `α_{lr} ~ CN(0, σ_s²)`.
///
/// Each receiver's echo energy is divided by its array gain `‖a(θ_r)‖²` so
/// the estimate is on the same per-antenna scale as [`ssnr`].
pub fn monte_carlo_ssnr<R: Rng + ?Sized>(
    scene: &ChannelScene,
    w: &BeamformerSet,
    config: &SystemConfig,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let (l_count, m) = (scene.num_aps(), scene.antennas());
    let q_count = w.num_beams();
    let silent = Array1::zeros(m);
    let mut energy = 0.0;
    for _ in 0..draws {
        let x = random_symbols(rng, q_count);
        for r in 0..l_count {
            let alpha = Array1::from_shape_fn(l_count, |_| complex_normal(rng, config.sensing_gain_var));
            let y = simulate_ap_rx(scene, w, r, x.view(), alpha.view(), silent.view())?;
            let gain: f64 = scene.steering.row(r).iter().map(|z| z.norm_sqr()).sum();
            energy += y.iter().map(|z| z.norm_sqr()).sum::<f64>() / gain;
        }
    }
    Ok(energy / draws as f64 / (l_count as f64 * config.ap_noise_var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_channels, sample_positions, scene_rng, steering_vector};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn toy_scene(h: Vec<Complex64>, a: Vec<Complex64>) -> ChannelScene {
        let m = h.len();
        ChannelScene {
            comm: Array3::from_shape_vec((1, 1, m), h).unwrap(),
            steering: Array2::from_shape_vec((1, m), a).unwrap(),
            target_angles: vec![0.0],
        }
    }

    fn random_scene(config: &SystemConfig, seed: u64) -> ChannelScene {
        build_channels(&sample_positions(config, &mut scene_rng(seed, 0)), config).unwrap()
    }

    /// Looped restatement of the SINR ratio over explicit sums.
    fn naive_sinr(scene: &ChannelScene, w: &BeamformerSet, n: usize, noise: f64) -> f64 {
        let (l_count, n_count, m) = scene.comm.dim();
        let term = |q: usize| {
            let mut acc = c(0.0, 0.0);
            for l in 0..l_count {
                for k in 0..m {
                    acc += scene.comm[[l, n, k]].conj() * w.beams[[l, k, q]];
                }
            }
            acc.norm_sqr()
        };
        let mut interference = noise;
        for q in 0..=n_count {
            if q != n {
                interference += term(q);
            }
        }
        term(n) / interference
    }

    fn naive_ssnr(scene: &ChannelScene, w: &BeamformerSet, cfg: &SystemConfig) -> f64 {
        let (l_count, m, q_count) = w.beams.dim();
        let mut num = 0.0;
        for _r in 0..l_count {
            for l in 0..l_count {
                let mut row = 0.0;
                for q in 0..q_count {
                    let mut acc = c(0.0, 0.0);
                    for k in 0..m {
                        acc += scene.steering[[l, k]].conj() * w.beams[[l, k, q]];
                    }
                    row += acc.norm_sqr();
                }
                num += cfg.sensing_gain_var * row;
            }
        }
        num / (l_count as f64 * cfg.ap_noise_var)
    }

    #[test]
    fn sinr_toy_examples() {
        let scene = toy_scene(vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let mut w = BeamformerSet::zeros(1, 2, 2);
        w.beams[[0, 0, 0]] = c(1.0, 0.0);
        w.beams[[0, 1, 1]] = c(1.0, 0.0);
        assert!((sinr_user(&scene, &w, 0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        w.beams[[0, 1, 1]] = c(0.0, 0.0);
        w.beams[[0, 0, 1]] = c(1.0, 0.0);
        assert!((sinr_user(&scene, &w, 0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(sinr_user(&scene, &w, 1, 1.0), Err(Error::Index(_))));
        assert_eq!(min_sinr(&scene, &w, 1.0).unwrap(), sinr_user(&scene, &w, 0, 1.0).unwrap());
    }

    #[test]
    fn sinr_matches_looped_evaluation() {
        let cfg = SystemConfig::with_counts(2, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..5 {
            let scene = random_scene(&cfg, seed);
            let w = BeamformerSet::random(&cfg, &mut rng);
            let all = sinr_all(&scene, &w, 1.0).unwrap();
            for (n, &v) in all.iter().enumerate() {
                assert!((v - naive_sinr(&scene, &w, n, 1.0)).abs() < 1e-10);
            }
            let g2 = min_sinr(&scene, &w, 1.0).unwrap();
            assert!(all.iter().all(|&v| g2 <= v));
        }
    }

    #[test]
    fn ssnr_examples() {
        let cfg = SystemConfig {
            num_aps: 1,
            antennas_per_ap: 2,
            num_ues: 1,
            ap_positions: vec![[0.0, 0.0]],
            ..SystemConfig::default()
        };
        let a = steering_vector(0.0, 2, 0.5);
        let scene = toy_scene(vec![c(1.0, 0.0), c(1.0, 0.0)], a.to_vec());
        let mut w = BeamformerSet::zeros(1, 2, 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        w.beams[[0, 0, 1]] = c(r, 0.0);
        w.beams[[0, 1, 1]] = c(-r, 0.0);
        assert!((ssnr(&scene, &w, &cfg).unwrap() - 0.2).abs() < 1e-12);
        let zero = BeamformerSet::zeros(1, 2, 2);
        assert_eq!(ssnr(&scene, &zero, &cfg).unwrap(), 0.0);

        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scene = random_scene(&cfg, 3);
        let w = BeamformerSet::random(&cfg, &mut rng);
        assert!((ssnr(&scene, &w, &cfg).unwrap() - naive_ssnr(&scene, &w, &cfg)).abs() < 1e-10);
        assert!(matches!(
            ssnr_general(&scene, &w, &Array2::ones((2, 2)), &[0.0, 0.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn transmit_and_receive() {
        let w_l = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(2.0, 0.0), c(3.0, -1.0)]];
        let e1 = array![c(0.0, 0.0), c(1.0, 0.0)];
        assert_eq!(transmit_signal(w_l.view(), e1.view()).unwrap(), w_l.column(1));
        let zero = Array1::zeros(2);
        assert_eq!(transmit_signal(w_l.view(), zero.view()).unwrap(), Array1::zeros(2));
        assert!(transmit_signal(w_l.view(), Array1::zeros(3).view()).is_err());

        let cfg = SystemConfig::with_counts(2, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = random_scene(&cfg, 1);
        let w = BeamformerSet::random(&cfg, &mut rng);
        let mut x = Array1::zeros(3);
        x[1] = c(1.0, 0.0);
        let y = simulate_ue_rx(&scene, &w, 1, x.view(), c(0.0, 0.0)).unwrap();
        assert!((y - effective_gains(&scene, &w).unwrap()[[1, 1]]).norm() < 1e-12);
        let silent = BeamformerSet::for_config(&cfg);
        let noise = c(0.3, -0.2);
        assert_eq!(simulate_ue_rx(&scene, &silent, 0, x.view(), noise).unwrap(), noise);

        let n_r = array![c(0.1, 0.0), c(0.0, 0.2), c(-0.3, 0.0), c(0.0, 0.0)];
        let y = simulate_ap_rx(&scene, &w, 0, x.view(), Array1::zeros(2).view(), n_r.view()).unwrap();
        assert_eq!(y, n_r);
    }

    #[test]
    fn single_ap_echo_is_rank_one() {
        let cfg = SystemConfig::with_counts(1, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let scene = random_scene(&cfg, 2);
        let w = BeamformerSet::random(&cfg, &mut rng);
        let x = random_symbols(&mut rng, 3);
        let alpha = array![c(1.0, 0.0)];
        let y = simulate_ap_rx(&scene, &w, 0, x.view(), alpha.view(), Array1::zeros(4).view()).unwrap();
        let x0 = transmit_signal(w.ap(0), x.view()).unwrap();
        let a = scene.steering.row(0);
        let proj = inner(a, x0.view());
        for m in 0..4 {
            assert!((y[m] - a[m] * proj).norm() < 1e-12);
        }
    }

    #[test]
    fn power_examples() {
        let mut w = BeamformerSet::zeros(1, 3, 3);
        for q in 0..3 {
            w.beams[[0, q, q]] = c(1.0, 0.0);
        }
        assert!((ap_power(&w, 0) - 3.0).abs() < 1e-15);
        assert_eq!(ap_power(&BeamformerSet::zeros(1, 3, 3), 0), 0.0);
        let cfg = SystemConfig::default();
        let w = BeamformerSet::random(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((ap_power(&w, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_csv_layout() {
        let r = MetricReport {
            sinr: vec![1.0, 10.0],
            min_sinr: 1.0,
            ssnr: 100.0,
        };
        assert_eq!(
            MetricReport::csv_header(2),
            "scene_id,sinr_1,sinr_2,min_sinr,ssnr,sinr_1_db,sinr_2_db,min_sinr_db,ssnr_db"
        );
        assert_eq!(r.csv_row(7), "7,1,10,1,100,0,10,0,20");
    }

    /// Central differences of `f` along every real and imaginary beam entry.
    fn numeric_grad(
        w: &BeamformerSet,
        f: impl Fn(&BeamformerSet) -> f64,
    ) -> Array3<Complex64> {
        let h = 1e-6;
        let mut g = Array3::zeros(w.beams.dim());
        for (idx, _) in w.beams.indexed_iter() {
            let mut part = [0.0; 2];
            for (k, dir) in [c(1.0, 0.0), c(0.0, 1.0)].into_iter().enumerate() {
                let mut up = w.clone();
                up.beams[idx] += dir * h;
                let mut down = w.clone();
                down.beams[idx] -= dir * h;
                part[k] = (f(&up) - f(&down)) / (2.0 * h);
            }
            g[idx] = c(part[0], part[1]);
        }
        g
    }

    #[test]
    fn metric_gradients_match_finite_differences() {
        let cfg = SystemConfig::with_counts(2, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scene = random_scene(&cfg, 4);
        let w = BeamformerSet::random(&cfg, &mut rng);
        let mg = metric_gradients(&scene, &w, &cfg).unwrap();
        assert!((mg.ssnr - ssnr(&scene, &w, &cfg).unwrap()).abs() < 1e-12);
        assert!((mg.min_sinr - min_sinr(&scene, &w, 1.0).unwrap()).abs() < 1e-12);
        let g1 = numeric_grad(&w, |w| ssnr(&scene, w, &cfg).unwrap());
        let g2 = numeric_grad(&w, |w| min_sinr(&scene, w, 1.0).unwrap());
        for (a, b) in mg.grad_ssnr.iter().zip(g1.iter()) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
        for (a, b) in mg.grad_min_sinr.iter().zip(g2.iter()) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn monte_carlo_small_sample_sanity() {
        let cfg = SystemConfig::with_counts(2, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scene = random_scene(&cfg, 7);
        let w = BeamformerSet::random(&cfg, &mut rng);
        let exact = sinr_user(&scene, &w, 0, 1.0).unwrap();
        let est = monte_carlo_sinr(&scene, &w, 0, 1.0, 20_000, &mut rng).unwrap();
        assert!((est / exact - 1.0).abs() < 0.05, "{est} vs {exact}");
        let exact = ssnr(&scene, &w, &cfg).unwrap();
        let est = monte_carlo_ssnr(&scene, &w, &cfg, 20_000, &mut rng).unwrap();
        assert!((est / exact - 1.0).abs() < 0.05, "{est} vs {exact}");
    }
}
