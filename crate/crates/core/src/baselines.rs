//! Per-scene reference optimizers and bounds.
//!
//! The reference pipeline ("surrogate-CVX") is first-order: a projected
//! gradient max-min SINR solver fixes the communication target `γ_high`, then
//! a penalty method maximizes the SSNR subject to that target. It stands in
//! for a bisection + semidefinite-programming solver and is labelled as such
//! in every report.

use std::time::Instant;

use cfisac_nn::Scalar;
use log::warn;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{complex_normal, min_sinr, ssnr, BeamformerSet};
use crate::model::DistributedModel;
use crate::scenario::ChannelScene;
use crate::{Error, Result, SystemConfig};

/// Label used for the reference pipeline in reports.
pub const BASELINE_LABEL: &str = "surrogate-CVX";
pub const STUDENT_LABEL: &str = "student";

/// Largest SSNR any power-feasible beam set can reach: every beam of AP `l`
/// aligned with `a(θ_l)`.
pub fn ssnr_upper_bound(system: &SystemConfig) -> f64 {
    let l = system.num_aps as f64;
    let m = system.antennas_per_ap as f64;
    let total: f64 = (0..system.num_aps).map(|ap| m * system.power(ap)).sum();
    l * system.sensing_gain_var * total / (l * system.ap_noise_var)
}

fn inner(u: ArrayView1<Complex64>, v: ArrayView1<Complex64>) -> Complex64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Removes from `v` its component in the span of the rows of `channels`.
///
/// Returns the zero vector (with a warning) when there are at least as many
/// channels as antennas.
pub fn null_space_project(channels: ArrayView2<Complex64>, v: ArrayView1<Complex64>) -> Array1<Complex64> {
    let (n, m) = channels.dim();
    if n >= m {
        warn!("{n} channels span the whole {m}-antenna space; no null space");
        return Array1::zeros(m);
    }
    let mut basis: Vec<Array1<Complex64>> = Vec::with_capacity(n);
    for h in channels.rows() {
        let mut u = h.to_owned();
        for b in &basis {
            let c = inner(b.view(), u.view());
            u.scaled_add(-c, b);
        }
        let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let scale = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-10 * scale.max(1e-300) {
            basis.push(u.mapv(|z| z / norm));
        }
    }
    let mut out = v.to_owned();
    for b in &basis {
        let c = inner(b.view(), out.view());
        out.scaled_add(-c, b);
    }
    out
}

/// Settings of both reference optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    /// Fraction of each AP's budget given to communication beams.
    pub rho: f64,
    /// Starting points: matched filter, local zero forcing, then random.
    pub restarts: usize,
    pub max_iters: usize,
    /// Soft-min temperature of the max-min ascent.
    pub temperature: f64,
    pub penalty_max_iters: usize,
    pub penalty_double_every: usize,
    pub slack_tol: f64,
    /// Feasibility margin accepted when the target cannot be met exactly.
    pub margin: f64,
    pub seed: u64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            rho: 0.5,
            restarts: 4,
            max_iters: 500,
            temperature: 0.01,
            penalty_max_iters: 2000,
            penalty_double_every: 50,
            slack_tol: 1e-3,
            margin: 0.98,
            seed: 0,
        }
    }
}

/// SINRs of users `0..N` served by beams `0..N`; beams `N..` only interfere.
/// With `weights`, also returns the beam gradient of `Σ_n weights[n] SINR_n`.
fn sinrs_and_grad(
    scene: &ChannelScene,
    beams: &Array3<Complex64>,
    noise: f64,
    weights: Option<&[f64]>,
) -> (Vec<f64>, Option<Array3<Complex64>>) {
    let (l_count, _, k_count) = beams.dim();
    let n_count = scene.num_ues();
    let mut gains = Array2::<Complex64>::zeros((n_count, k_count));
    for l in 0..l_count {
        for n in 0..n_count {
            let h = scene.comm.slice(s![l, n, ..]);
            for k in 0..k_count {
                gains[[n, k]] += inner(h, beams.slice(s![l, .., k]));
            }
        }
    }
    let mut sig = vec![0.0; n_count];
    let mut den = vec![0.0; n_count];
    for n in 0..n_count {
        sig[n] = gains[[n, n]].norm_sqr();
        den[n] = noise
            + (0..k_count)
                .filter(|&k| k != n)
                .map(|k| gains[[n, k]].norm_sqr())
                .sum::<f64>();
    }
    let sinr: Vec<f64> = (0..n_count).map(|n| sig[n] / den[n]).collect();
    let grad = weights.map(|wts| {
        let mut g = Array3::zeros(beams.dim());
        for (n, &wn) in wts.iter().enumerate() {
            if wn == 0.0 {
                continue;
            }
            for l in 0..l_count {
                let h = scene.comm.slice(s![l, n, ..]);
                for k in 0..k_count {
                    let coef = if k == n {
                        gains[[n, k]] * (2.0 * wn / den[n])
                    } else {
                        gains[[n, k]] * (-2.0 * wn * sig[n] / (den[n] * den[n]))
                    };
                    let mut col = g.slice_mut(s![l, .., k]);
                    col.zip_mut_with(&h, |c: &mut Complex64, &hm| *c += hm * coef);
                }
            }
        }
        g
    });
    (sinr, grad)
}

/// Smooth minimum `-T log Σ exp(-s_n/T)` and its weights on each `s_n`.
fn soft_min(values: &[f64], temperature: f64) -> (f64, Vec<f64>) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = values.iter().map(|v| (-(v - lo) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    (lo - temperature * z.ln(), e.iter().map(|x| x / z).collect())
}

fn ap_energy(beams: &Array3<Complex64>, l: usize) -> f64 {
    beams.slice(s![l, .., ..]).iter().map(|z| z.norm_sqr()).sum()
}

/// Rescales each AP onto the sphere of the given powers.
fn project_sphere(beams: &mut Array3<Complex64>, powers: &[f64]) {
    for (l, &p) in powers.iter().enumerate() {
        let e = ap_energy(beams, l);
        let scale = if e > 0.0 { (p / e).sqrt() } else { 0.0 };
        beams.slice_mut(s![l, .., ..]).mapv_inplace(|z| z * scale);
    }
}

/// Scales down any AP above its budget.
fn project_ball(beams: &mut Array3<Complex64>, powers: &[f64]) {
    for (l, &p) in powers.iter().enumerate() {
        let e = ap_energy(beams, l);
        if e > p {
            let scale = (p / e).sqrt();
            beams.slice_mut(s![l, .., ..]).mapv_inplace(|z| z * scale);
        }
    }
}

/// Solves `A x = b` for a small dense complex system; `None` if singular.
fn solve(mut a: Array2<Complex64>, mut b: Array2<Complex64>) -> Option<Array2<Complex64>> {
    let n = a.nrows();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].norm().total_cmp(&a[[j, col]].norm()))?;
        if a[[pivot, col]].norm() < 1e-12 {
            return None;
        }
        for k in 0..n {
            a.swap([col, k], [pivot, k]);
        }
        for k in 0..b.ncols() {
            b.swap([col, k], [pivot, k]);
        }
        let d = a[[col, col]];
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[[row, col]] / d;
            if f.norm() == 0.0 {
                continue;
            }
            for k in 0..n {
                let v = a[[col, k]];
                a[[row, k]] -= f * v;
            }
            for k in 0..b.ncols() {
                let v = b[[col, k]];
                b[[row, k]] -= f * v;
            }
        }
    }
    for row in 0..n {
        let d = a[[row, row]];
        b.row_mut(row).mapv_inplace(|z| z / d);
    }
    Some(b)
}

/// Per-AP zero-forcing directions `H_l (H_l^H H_l)^{-1}`, or `None` when the
/// local channels are rank deficient.
fn local_zero_forcing(scene: &ChannelScene, l: usize) -> Option<Array2<Complex64>> {
    let h = scene.comm.slice(s![l, .., ..]).t().to_owned(); // M x N
    let gram = h.t().mapv(|z| z.conj()).dot(&h);
    let n = gram.nrows();
    let inv = solve(gram, Array2::from_diag(&Array1::from_elem(n, Complex64::new(1.0, 0.0))))?;
    Some(h.dot(&inv))
}

/// Outcome of the max-min SINR surrogate.
#[derive(Debug, Clone)]
pub struct SurrogateResult {
    /// Best exact minimum SINR reached.
    pub gamma_high: f64,
    /// Communication beams plus the null-space sensing beam.
    pub beams: BeamformerSet,
    pub converged: bool,
    pub iterations: usize,
}

/// Projected-gradient ascent on the soft-min of the user SINRs with each AP's
/// communication beams spending `ρ P_l`. The sensing beam is `a(θ_l)` with its
/// communication-channel components removed, carrying `(1-ρ) P_l`.
pub fn max_min_sinr_surrogate(
    scene: &ChannelScene,
    system: &SystemConfig,
    options: &BaselineOptions,
) -> Result<SurrogateResult> {
    let rho = options.rho;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho = {rho} outside [0, 1]")));
    }
    let (l_count, m, n_count) = (scene.num_aps(), scene.antennas(), scene.num_ues());
    let mut out = BeamformerSet::zeros(l_count, m, n_count + 1);
    for l in 0..l_count {
        let a = null_space_project(scene.comm.slice(s![l, .., ..]), scene.steering.row(l));
        let e: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        if e > 0.0 {
            let scale = ((1.0 - rho) * system.power(l) / e).sqrt();
            out.beams.slice_mut(s![l, .., n_count]).assign(&a.mapv(|z| z * scale));
        }
    }
    if rho == 0.0 {
        return Ok(SurrogateResult {
            gamma_high: 0.0,
            beams: out,
            converged: true,
            iterations: 0,
        });
    }
    let powers: Vec<f64> = (0..l_count).map(|l| rho * system.power(l)).collect();
    let noise = system.ue_noise_var;

    let mut starts: Vec<Array3<Complex64>> = Vec::new();
    let mut mf = Array3::zeros((l_count, m, n_count));
    for l in 0..l_count {
        for n in 0..n_count {
            mf.slice_mut(s![l, .., n]).assign(&scene.comm.slice(s![l, n, ..]));
        }
    }
    starts.push(mf);
    if n_count <= m {
        let mut zf = Array3::zeros((l_count, m, n_count));
        let ok = (0..l_count).all(|l| match local_zero_forcing(scene, l) {
            Some(d) => {
                zf.slice_mut(s![l, .., ..]).assign(&d);
                true
            }
            None => false,
        });
        if ok {
            starts.push(zf);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    while starts.len() < options.restarts.max(1) {
        starts.push(Array3::from_shape_fn((l_count, m, n_count), |_| complex_normal(&mut rng, 1.0)));
    }
    starts.truncate(options.restarts.max(1));

    let exact_min = |w: &Array3<Complex64>| {
        sinrs_and_grad(scene, w, noise, None)
            .0
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = (f64::NEG_INFINITY, Array3::zeros((l_count, m, n_count)));
    let mut all_converged = true;
    let mut iterations = 0;
    for mut w in starts {
        project_sphere(&mut w, &powers);
        let (s0, _) = sinrs_and_grad(scene, &w, noise, None);
        let (mut f, mut pi) = soft_min(&s0, options.temperature);
        let mut exact = s0.iter().copied().fold(f64::INFINITY, f64::min);
        if exact > best.0 {
            best = (exact, w.clone());
        }
        let mut step = 0.1;
        let mut converged = false;
        for _ in 0..options.max_iters {
            iterations += 1;
            let (_, g) = sinrs_and_grad(scene, &w, noise, Some(&pi));
            let g = g.expect("weights given");
            let gnorm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if gnorm < 1e-12 {
                converged = true;
                break;
            }
            let mut accepted = false;
            while step > 1e-12 {
                let mut cand = &w + &(g.mapv(|z| z * (step / gnorm)));
                project_sphere(&mut cand, &powers);
                let (sc, _) = sinrs_and_grad(scene, &cand, noise, None);
                let (fc, pc) = soft_min(&sc, options.temperature);
                if fc > f {
                    let gain = fc - f;
                    w = cand;
                    f = fc;
                    pi = pc;
                    exact = sc.iter().copied().fold(f64::INFINITY, f64::min);
                    step *= 1.5;
                    accepted = true;
                    if gain < 1e-10 * f.abs().max(1e-12) {
                        converged = true;
                    }
                    break;
                }
                step *= 0.5;
            }
            if exact > best.0 {
                best = (exact, w.clone());
            }
            if !accepted {
                converged = true;
            }
            if converged {
                break;
            }
        }
        all_converged &= converged;
    }
    let (gamma_high, comm) = best;
    debug_assert!((exact_min(&comm) - gamma_high).abs() <= 1e-9 * gamma_high.max(1.0));
    out.beams.slice_mut(s![.., .., ..n_count]).assign(&comm);
    Ok(SurrogateResult {
        gamma_high,
        beams: out,
        converged: all_converged,
        iterations,
    })
}

/// Outcome of the constrained SSNR maximization.
#[derive(Debug, Clone)]
pub struct ConstrainedResult {
    pub beams: BeamformerSet,
    pub g1: f64,
    pub g2: f64,
    /// `g₂` target the returned beams were checked against.
    pub target: f64,
    /// False when even the relaxed target was missed and the start was returned.
    pub feasible: bool,
    pub iterations: usize,
    /// `(g₁, g₂)` of every accepted iterate, starting with the initialization.
    pub trace: Vec<(f64, f64)>,
}

/// Maximizes `g₁` subject to every user SINR `≥ γ` and per-AP power
/// `≤ P_l`, by projected gradient ascent on a quadratic penalty whose weight
/// doubles periodically until the worst violation falls below the tolerance.
pub fn constrained_ssnr_opt(
    scene: &ChannelScene,
    system: &SystemConfig,
    gamma: f64,
    init: &BeamformerSet,
    options: &BaselineOptions,
) -> Result<ConstrainedResult> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("SINR target {gamma} must be finite and non-negative")));
    }
    let powers: Vec<f64> = (0..scene.num_aps()).map(|l| system.power(l)).collect();
    let noise = system.ue_noise_var;
    let weight = crate::metrics::ssnr_weight(system);
    let n_count = scene.num_ues();

    let g1_and_grad = |w: &Array3<Complex64>| {
        let mut g = Array3::zeros(w.dim());
        let mut v = 0.0;
        for l in 0..w.dim().0 {
            let a = scene.steering.row(l);
            for q in 0..w.dim().2 {
                let u = inner(a, w.slice(s![l, .., q]));
                v += weight * u.norm_sqr();
                g.slice_mut(s![l, .., q])
                    .zip_mut_with(&a, |c: &mut Complex64, &am| *c = am * u * (2.0 * weight));
            }
        }
        (v, g)
    };
    // Penalized objective, its gradient, g1, g2 and the worst violation.
    let evaluate = |w: &Array3<Complex64>, mu: f64, with_grad: bool| {
        let (g1, mut grad) = g1_and_grad(w);
        let (sinr, _) = sinrs_and_grad(scene, w, noise, None);
        let viol: Vec<f64> = sinr.iter().map(|s| (gamma - s).max(0.0)).collect();
        let pen: f64 = viol.iter().map(|v| v * v).sum();
        if with_grad && pen > 0.0 {
            let wts: Vec<f64> = viol.iter().map(|v| 2.0 * mu * v).collect();
            let (_, gs) = sinrs_and_grad(scene, w, noise, Some(&wts));
            grad += &gs.expect("weights given");
        }
        let g2 = sinr.iter().copied().fold(f64::INFINITY, f64::min);
        let worst = viol.iter().copied().fold(0.0, f64::max);
        (g1 - mu * pen, grad, g1, g2, worst)
    };

    let mut w = init.beams.clone();
    project_ball(&mut w, &powers);
    let start = w.clone();
    let mut mu = 1.0;
    let (mut f, mut grad, g1_0, g2_0, mut worst) = evaluate(&w, mu, true);
    let mut trace = vec![(g1_0, g2_0)];
    let mut best_feasible: Option<(f64, Array3<Complex64>)> = (g2_0 >= gamma).then(|| (g1_0, w.clone()));
    let mut step = 0.1;
    let mut iterations = 0;
    for it in 1..=options.penalty_max_iters {
        iterations = it;
        let gnorm = grad.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            break;
        }
        let mut moved = false;
        while step > 1e-12 {
            let mut cand = &w + &(grad.mapv(|z| z * (step / gnorm)));
            project_ball(&mut cand, &powers);
            let (fc, gc, g1c, g2c, wc) = evaluate(&cand, mu, true);
            if fc > f {
                let gain = fc - f;
                w = cand;
                f = fc;
                grad = gc;
                worst = wc;
                trace.push((g1c, g2c));
                if g2c >= gamma && best_feasible.as_ref().is_none_or(|b| g1c > b.0) {
                    best_feasible = Some((g1c, w.clone()));
                }
                step *= 1.5;
                moved = gain > 1e-13 * f.abs().max(1.0);
                break;
            }
            step *= 0.5;
        }
        if it % options.penalty_double_every.max(1) == 0 && worst >= options.slack_tol {
            mu *= 2.0;
            let (fm, gm, ..) = evaluate(&w, mu, true);
            f = fm;
            grad = gm;
            step = step.max(1e-3);
            continue;
        }
        if !moved && worst < options.slack_tol {
            break;
        }
        if !moved {
            step = step.max(1e-3);
        }
    }

    let metrics = |w: &Array3<Complex64>| {
        let (_, _, g1, g2, _) = evaluate(w, 0.0, false);
        (g1, g2)
    };
    let mut target = gamma;
    let (g1_end, g2_end) = metrics(&w);
    let mut chosen = if g2_end >= gamma {
        Some((g1_end, w.clone()))
    } else {
        None
    };
    if chosen.is_none() {
        // Bisect along the segment from the start towards the last iterate.
        let (_, g2_start) = metrics(&start);
        if g2_start < target {
            target = options.margin * gamma;
        }
        if g2_start >= target {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let cand = &start * Complex64::new(1.0 - mid, 0.0) + &w * Complex64::new(mid, 0.0);
                if metrics(&cand).1 >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let cand = &start * Complex64::new(1.0 - lo, 0.0) + &w * Complex64::new(lo, 0.0);
            chosen = Some((metrics(&cand).0, cand));
        }
    }
    if let Some((g1b, wb)) = &best_feasible {
        if chosen.as_ref().is_none_or(|c| *g1b > c.0) {
            chosen = Some((*g1b, wb.clone()));
            target = gamma;
        }
    }
    let (beams, feasible) = match chosen {
        Some((_, wb)) => (wb, true),
        None => {
            warn!("SSNR refinement could not meet the SINR target {gamma}; returning the start");
            (start, false)
        }
    };
    let (g1, g2) = metrics(&beams);
    debug_assert!(n_count == 0 || g2.is_finite());
    Ok(ConstrainedResult {
        beams: BeamformerSet { beams },
        g1,
        g2,
        target,
        feasible,
        iterations,
        trace,
    })
}

/// Full reference pipeline for one scene.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub gamma_high: f64,
    pub beams: BeamformerSet,
    pub g1: f64,
    pub g2: f64,
    pub seconds: f64,
    /// Both stages converged / met their targets.
    pub ok: bool,
}

pub fn run_baseline(scene: &ChannelScene, system: &SystemConfig, options: &BaselineOptions) -> Result<BaselineResult> {
    let t = Instant::now();
    let sur = max_min_sinr_surrogate(scene, system, options)?;
    let refined = constrained_ssnr_opt(scene, system, sur.gamma_high, &sur.beams, options)?;
    let seconds = t.elapsed().as_secs_f64();
    Ok(BaselineResult {
        gamma_high: sur.gamma_high,
        g1: ssnr(scene, &refined.beams, system)?,
        g2: min_sinr(scene, &refined.beams, system.ue_noise_var)?,
        beams: refined.beams,
        seconds,
        ok: sur.converged && refined.feasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scene_id: usize,
    pub method: String,
    pub g1: f64,
    pub g2: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub n_points: usize,
    pub baseline_label: String,
    pub baseline_mean_g1: f64,
    pub baseline_mean_g2: f64,
    pub baseline_mean_gamma_high: f64,
    pub baseline_mean_seconds: f64,
    pub student_mean_g1: f64,
    pub student_mean_g2: f64,
    /// Per scene: the slowest AP's inference time.
    pub student_mean_seconds: f64,
    pub speedup: f64,
    pub single_threaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene_id,method,g1,g2,seconds\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.scene_id, r.method, r.g1, r.g2, r.seconds));
        }
        out
    }
}

/// Picks `n_points` distinct scene indices (clipped to the available count).
pub fn select_points(available: usize, n_points: usize, seed: u64) -> Vec<usize> {
    if n_points > available {
        warn!("{n_points} points requested but only {available} scenes available");
    }
    let n = n_points.min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, available, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Times the student (each AP on its own scene, slowest AP counted) against
/// the reference pipeline on `n_points` randomly chosen scenes.
pub fn benchmark_compare<T: Scalar>(
    scenes: &[ChannelScene],
    model: &DistributedModel<T>,
    system: &SystemConfig,
    n_points: usize,
    options: &BaselineOptions,
    seed: u64,
    single_threaded: bool,
) -> Result<ComparisonReport> {
    model.system.ensure_matches(system, "student checkpoint")?;
    let points = select_points(scenes.len(), n_points, seed);
    if points.is_empty() {
        return Err(Error::Config("no scenes to benchmark".into()));
    }
    let mut rows = Vec::with_capacity(2 * points.len());
    let mut acc = [0.0f64; 7];
    for &i in &points {
        let scene = &scenes[i];
        let base = run_baseline(scene, system, options)?;

        let mut w = BeamformerSet::for_config(system);
        let mut slowest: f64 = 0.0;
        for l in 0..model.num_aps() {
            let t = Instant::now();
            let rows_l = model.infer(l, &model.input(&[scene], l));
            let raw = rows_l.row(0).mapv(Scalar::to_f64);
            let wl = crate::model::normalize_output(raw.view(), system.antennas_per_ap, system.power(l))?;
            slowest = slowest.max(t.elapsed().as_secs_f64());
            w.beams.slice_mut(s![l, .., ..]).assign(&wl);
        }
        let sg1 = ssnr(scene, &w, system)?;
        let sg2 = min_sinr(scene, &w, system.ue_noise_var)?;

        rows.push(ComparisonRow {
            scene_id: i,
            method: BASELINE_LABEL.into(),
            g1: base.g1,
            g2: base.g2,
            seconds: base.seconds,
        });
        rows.push(ComparisonRow {
            scene_id: i,
            method: STUDENT_LABEL.into(),
            g1: sg1,
            g2: sg2,
            seconds: slowest,
        });
        for (a, v) in acc
            .iter_mut()
            .zip([base.g1, base.g2, base.gamma_high, base.seconds, sg1, sg2, slowest])
        {
            *a += v;
        }
    }
    let n = points.len() as f64;
    let [b1, b2, bg, bs, s1, s2, ss] = acc.map(|v| v / n);
    Ok(ComparisonReport {
        rows,
        summary: ComparisonSummary {
            n_points: points.len(),
            baseline_label: BASELINE_LABEL.into(),
            baseline_mean_g1: b1,
            baseline_mean_g2: b2,
            baseline_mean_gamma_high: bg,
            baseline_mean_seconds: bs,
            student_mean_g1: s1,
            student_mean_g2: s2,
            student_mean_seconds: ss,
            speedup: bs / ss,
            single_threaded,
        },
    })
}
