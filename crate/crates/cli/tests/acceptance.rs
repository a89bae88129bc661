//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! `CFISAC_ACCEPTANCE_ONLY=3,8` runs a subset.

use std::error::Error;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use cfisac_cli::{execute, Command, Overrides, Precision, RunConfig, RunManifest, TrainArgs};
use cfisac_core::baselines::{benchmark_compare, constrained_ssnr_opt, ssnr_upper_bound, BaselineOptions};
use cfisac_core::io::{save_dataset, write_json};
use cfisac_core::metrics::{ap_power, monte_carlo_sinr, monte_carlo_ssnr, sinr_user, ssnr, BeamformerSet};
use cfisac_core::model::{ArchitectureKind, ArchitectureSpec, DistributedModel};
use cfisac_core::scenario::{build_channels, generate_dataset, sample_positions, scene_rng, ChannelScene, Dataset};
use cfisac_core::training::{
    evaluate_means, estimate_ceilings, gradient_check, lambda_step, select_model, train, CeilingEstimates,
    EpochRecord, Objective, Role, Seeds, TrainConfig, TrainOutcome, TrainingRecord,
};
use cfisac_core::SystemConfig;
use cfisac_nn::{Conv2d, ConvTranspose2d, Linear, Mode, Param, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn Error>>;

const DESK_SCENES: usize = 2000;
const DESK_SEED: u64 = 1;
/// Epoch budget of the U-net sensing teacher run (the cap is 100).
const UNET_EPOCHS: usize = 8;
/// Epoch budget of each CNN1D run in the balance experiment.
const CNN_EPOCHS: usize = 100;

struct Student {
    ssnr_teacher: DistributedModel<f32>,
    sinr_teacher: DistributedModel<f32>,
    ceilings: CeilingEstimates,
    outcome: TrainOutcome<f32>,
}

struct Harness {
    only: Option<Vec<usize>>,
    failed: Vec<usize>,
    desk: Option<Dataset>,
    student: Option<Student>,
}

impl Harness {
    fn wants(&self, n: usize) -> bool {
        self.only.as_ref().is_none_or(|v| v.contains(&n))
    }

    fn run(&mut self, n: usize, f: fn(&mut Harness) -> Outcome) {
        if !self.wants(n) {
            return;
        }
        let t = Instant::now();
        let (ok, detail) = match f(self) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {n:>2} {}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !ok {
            self.failed.push(n);
        }
    }

    fn desk(&mut self) -> Result<&Dataset, Box<dyn Error>> {
        if self.desk.is_none() {
            self.desk = Some(generate_dataset(&SystemConfig::default(), DESK_SCENES, 0.97, DESK_SEED)?);
        }
        Ok(self.desk.as_ref().unwrap())
    }

    fn student(&mut self) -> Result<&Student, Box<dyn Error>> {
        if self.student.is_none() {
            let data = self.desk()?.clone();
            let spec = ArchitectureSpec::cnn1d();
            let seeds = Seeds::default();
            let run = |role: Role, ceilings| {
                let config = TrainConfig {
                    max_epochs: CNN_EPOCHS,
                    ..TrainConfig::for_role(role)
                };
                train::<f32>(&data, &spec, role, ceilings, &config, seeds)
            };
            let ssnr_teacher = run(Role::SsnrTeacher, None)?.model;
            let sinr_teacher = run(Role::SinrTeacher, None)?.model;
            let ceilings = estimate_ceilings(&ssnr_teacher, &sinr_teacher, data.train())?;
            let outcome = run(Role::Student, Some(ceilings))?;
            self.student = Some(Student {
                ssnr_teacher,
                sinr_teacher,
                ceilings,
                outcome,
            });
        }
        Ok(self.student.as_ref().unwrap())
    }
}

fn mean_of(model: &DistributedModel<f32>, scenes: &[ChannelScene]) -> Result<(f64, f64), Box<dyn Error>> {
    Ok(evaluate_means(model, scenes)?)
}

fn c1_ssnr_teacher(h: &mut Harness) -> Outcome {
    let data = h.desk()?;
    let config = TrainConfig {
        max_epochs: UNET_EPOCHS,
        ..TrainConfig::for_role(Role::SsnrTeacher)
    };
    let out = train::<f32>(data, &ArchitectureSpec::unet(), Role::SsnrTeacher, None, &config, Seeds::default())?;
    let (g1, _) = mean_of(&out.model, data.validation())?;
    let target = 0.95 * ssnr_upper_bound(&data.config);
    Ok((
        g1 >= target && out.record.len() <= 100,
        format!(
            "U-net validation mean g1 = {g1:.4} (target {target:.4}) after {} epochs, best epoch {}",
            out.record.len(),
            out.best_epoch
        ),
    ))
}

fn random_tensor(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Worst relative error of d<r, f(x)>/dθ for one layer.
fn layer_error<L>(
    layer: &mut L,
    x: Tensor<f64>,
    forward: fn(&mut L, Tensor<f64>) -> Tensor<f64>,
    backward: fn(&mut L, &Tensor<f64>),
    params: fn(&mut L) -> Vec<&mut Param<f64>>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    const STEP: f64 = 1e-4;
    let y = forward(layer, x.clone());
    let r = random_tensor(y.dim(), rng);
    let objective = |layer: &mut L| -> f64 { forward(layer, x.clone()).iter().zip(r.iter()).map(|(a, b)| a * b).sum() };
    for p in params(layer) {
        p.zero_grad();
    }
    backward(layer, &r);
    let mut worst: f64 = 0.0;
    for pi in 0..params(layer).len() {
        for k in 0..params(layer)[pi].len() {
            let analytic = params(layer)[pi].grad[k];
            let orig = params(layer)[pi].value[k];
            params(layer)[pi].value[k] = orig + STEP;
            let up = objective(layer);
            params(layer)[pi].value[k] = orig - STEP;
            let down = objective(layer);
            params(layer)[pi].value[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8));
        }
    }
    worst
}

fn c2_gradients(_: &mut Harness) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut lin = Linear::<f64>::new(6, 5, &mut rng);
    let x = random_tensor((6, 4, 1, 1), &mut rng);
    let e_lin = layer_error(&mut lin, x, |l, x| l.forward(x, Mode::Train), |l, g| drop(l.backward(g)), |l| l.params_mut().into_iter().collect(), &mut rng);
    let mut conv = Conv2d::<f64>::new(2, 3, (3, 2), (1, 0), &mut rng);
    let x = random_tensor((2, 3, 6, 3), &mut rng);
    let e_conv = layer_error(&mut conv, x, |l, x| l.forward(x, Mode::Train), |l, g| drop(l.backward(g)), |l| l.params_mut().into_iter().collect(), &mut rng);
    let mut tconv = ConvTranspose2d::<f64>::new(3, 2, (3, 2), (0, 0), &mut rng);
    let x = random_tensor((3, 2, 4, 2), &mut rng);
    let e_tconv = layer_error(&mut tconv, x, |l, x| l.forward(x, Mode::Train), |l, g| drop(l.backward(g)), |l| l.params_mut().into_iter().collect(), &mut rng);
    let layers = e_lin.max(e_conv).max(e_tconv);

    let system = SystemConfig::with_counts(2, 4, 2);
    let data = generate_dataset(&system, 4, 1.0, 7)?;
    let batch: Vec<&ChannelScene> = data.scenes.iter().collect();
    let mut composite: f64 = 0.0;
    let mut worst_tie = f64::INFINITY;
    for kind in [ArchitectureKind::Cnn1d, ArchitectureKind::Cae, ArchitectureKind::Unet] {
        let mut model = DistributedModel::<f64>::init(&ArchitectureSpec::toy(kind), &system, 3)?;
        worst_tie = worst_tie.min(tie_margin(&mut model, &batch)?);
        for beta in [0.0, 1.0] {
            let r = gradient_check(&mut model, &batch, &Objective::Teacher { beta }, 1e-6, 1e-6)?;
            composite = composite.max(r.max_error);
        }
    }
    Ok((
        composite < 1e-3 && layers < 1e-4 && worst_tie > 1e-3,
        format!(
            "composite -g1/-g2 max relative error {composite:.2e} (< 1e-3), layers {layers:.2e} (< 1e-4), min-SINR tie margin {worst_tie:.3}"
        ),
    ))
}

/// Smallest relative gap between the two weakest users, training-mode beams.
fn tie_margin(model: &mut DistributedModel<f64>, scenes: &[&ChannelScene]) -> Result<f64, Box<dyn Error>> {
    let rows: Vec<_> = (0..model.num_aps())
        .map(|l| {
            let x = model.input(scenes, l);
            model.forward(l, x, Mode::Train)
        })
        .collect();
    let beams = model.beams_from_rows(&rows)?;
    let mut margin = f64::INFINITY;
    for (s, w) in scenes.iter().zip(&beams) {
        let mut v = cfisac_core::metrics::sinr_all(s, w, model.system.ue_noise_var)?;
        v.sort_by(f64::total_cmp);
        margin = margin.min(v[1] / v[0] - 1.0);
    }
    Ok(margin)
}

fn c3_power(_: &mut Harness) -> Outcome {
    let system = SystemConfig::default();
    let data = generate_dataset(&system, 10_000, 1.0, 33)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for kind in [ArchitectureKind::Cnn1d, ArchitectureKind::Cae, ArchitectureKind::Unet] {
        let model = DistributedModel::<f32>::init(&ArchitectureSpec::preset(kind), &system, 4)?;
        for w in model.beamformers_chunked(&data.scenes, 500)? {
            for l in 0..system.num_aps {
                worst = worst.max((ap_power(&w, l) - system.power(l)).abs());
                checked += 1;
            }
        }
    }
    Ok((
        worst < 1e-9,
        format!("max |ap_power - P| = {worst:.2e} over {checked} AP outputs (10^4 scenes x 3 architectures)"),
    ))
}

fn c4_lambda(h: &mut Harness) -> Outcome {
    let tie = lambda_step(0.5, 0.1, 0.1, 0.01);
    let s = h.student()?;
    let lambdas: Vec<f64> = s.outcome.record.rows.iter().map(|r| r.lambda).collect();
    let in_range = lambdas.iter().all(|l| (0.0..=1.0).contains(l));
    let (lo, hi) = lambdas
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));
    Ok((
        tie == 0.501 && in_range && !lambdas.is_empty(),
        format!("tie case -> {tie}; {} logged lambdas in [{lo:.4}, {hi:.4}]", lambdas.len()),
    ))
}

fn c5_balance(h: &mut Harness) -> Outcome {
    let validation = h.desk()?.validation().to_vec();
    let s = h.student()?;
    let (a1, a2) = mean_of(&s.ssnr_teacher, &validation)?;
    let (b1, b2) = mean_of(&s.sinr_teacher, &validation)?;
    let (c1, c2) = mean_of(&s.outcome.model, &validation)?;
    Ok((
        c2 > a2 && c1 > b1,
        format!(
            "validation (g1, g2): SSNR teacher ({a1:.4}, {a2:.4}), SINR teacher ({b1:.4}, {b2:.4}), student ({c1:.4}, {c2:.4}); ceilings ({:.4}, {:.4})",
            s.ceilings.g1_max, s.ceilings.g2_max
        ),
    ))
}

fn c6_selection(_: &mut Harness) -> Outcome {
    // Ten epochs reach 94% of the best g2; two others have higher g1 but miss it.
    let points = [
        (1.2011, 2.6012),
        (1.4321, 2.2100),
        (1.4802, 1.9338),
        (1.4950, 1.8120),
        (1.5111, 1.7433),
        (1.5230, 1.7012),
        (1.5340, 1.6551),
        (1.5422, 1.6020),
        (1.5510, 1.5533),
        (1.5602, 1.5017),
        (1.5688, 1.4590),
        (1.5743, 1.4102),
    ];
    let record = TrainingRecord {
        rows: points
            .iter()
            .enumerate()
            .map(|(i, &(g2, g1))| EpochRecord {
                epoch: i + 1,
                train_g1: g1,
                train_g2: g2,
                val_g1: g1,
                val_g2: g2,
                loss: 0.0,
                lambda: 0.5,
                lr: 0.01,
                val_loss: 0.0,
            })
            .collect(),
    };
    let above = points.iter().filter(|p| p.0 >= 0.94 * 1.5743).count();
    let epoch = select_model(&record, 0.94, None)?;
    let (g2, g1) = points[epoch - 1];
    Ok((
        above == 10 && (g2, g1) == (1.4802, 1.9338),
        format!("{above} epochs above {:.4}; selected epoch {epoch} with (g2, g1) = ({g2}, {g1})", 0.94 * 1.5743),
    ))
}

fn c7_bound(_: &mut Harness) -> Outcome {
    let system = SystemConfig::default();
    let bound = ssnr_upper_bound(&system);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut highest: f64 = 0.0;
    for i in 0..10_000 {
        let scene = build_channels(&sample_positions(&system, &mut scene_rng(70, i)), &system)?;
        let mut w = BeamformerSet::random(&system, &mut rng);
        let shrink: f64 = rng.random_range(0.0..=1.0);
        if i % 2 == 1 {
            w.beams.mapv_inplace(|z| z * shrink.sqrt());
        }
        highest = highest.max(ssnr(&scene, &w, &system)?);
    }
    let opts = BaselineOptions::default();
    let mut lowest_opt = f64::INFINITY;
    for i in 0..10 {
        let scene = build_channels(&sample_positions(&system, &mut scene_rng(71, i)), &system)?;
        let init = BeamformerSet::random(&system, &mut rng);
        lowest_opt = lowest_opt.min(constrained_ssnr_opt(&scene, &system, 0.0, &init, &opts)?.g1);
    }
    Ok((
        highest <= bound + 1e-9 && lowest_opt >= 0.95 * bound,
        format!(
            "max g1 over 10^4 random feasible sets = {highest:.4} (bound {bound}); constrained opt with gamma=0 reaches >= {lowest_opt:.4} on 10 scenes"
        ),
    ))
}

fn c8_monte_carlo(_: &mut Harness) -> Outcome {
    let system = SystemConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let (mut sinr_err, mut ssnr_err): (f64, f64) = (0.0, 0.0);
    for i in 0..10 {
        let scene = build_channels(&sample_positions(&system, &mut scene_rng(80, i)), &system)?;
        let w = BeamformerSet::random(&system, &mut rng);
        for n in 0..system.num_ues {
            let exact = sinr_user(&scene, &w, n, system.ue_noise_var)?;
            let mc = monte_carlo_sinr(&scene, &w, n, system.ue_noise_var, 1_000_000, &mut rng)?;
            sinr_err = sinr_err.max((mc / exact - 1.0).abs());
        }
        let exact = ssnr(&scene, &w, &system)?;
        let mc = monte_carlo_ssnr(&scene, &w, &system, 100_000, &mut rng)?;
        ssnr_err = ssnr_err.max((mc / exact - 1.0).abs());
    }
    Ok((
        sinr_err < 0.01 && ssnr_err < 0.02,
        format!(
            "10 scenes: max SINR deviation {:.3}% (10^6 draws, every user), max SSNR deviation {:.3}% (10^5 draws)",
            100.0 * sinr_err,
            100.0 * ssnr_err
        ),
    ))
}

fn c9_runtime(h: &mut Harness) -> Outcome {
    let data = h.desk()?.clone();
    let model = h.student()?.outcome.model.clone();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let report = pool.install(|| {
        benchmark_compare(&data.scenes, &model, &data.config, 200, &BaselineOptions::default(), 9, true)
    })?;
    let s = report.summary;
    Ok((
        s.speedup >= 100.0 && s.n_points == 200,
        format!(
            "{} scenes: student {:.3e} s, {} {:.3e} s per scene, speedup {:.0}x; baseline (g1, g2) = ({:.3}, {:.3}), student ({:.3}, {:.3})",
            s.n_points,
            s.student_mean_seconds,
            s.baseline_label,
            s.baseline_mean_seconds,
            s.speedup,
            s.baseline_mean_g1,
            s.baseline_mean_g2,
            s.student_mean_g1,
            s.student_mean_g2
        ),
    ))
}

fn c10_determinism(h: &mut Harness) -> Outcome {
    let data = h.desk()?.clone();
    let ceilings = h.student()?.ceilings;
    let dir = tempfile::tempdir()?;
    let dataset = dir.path().join("desk/dataset.json");
    save_dataset(&dataset, &data)?;
    let ceil = dir.path().join("ceilings.json");
    write_json(&ceil, &ceilings)?;
    let command = Command::Train(TrainArgs {
        dataset,
        arch: ArchitectureKind::Cnn1d,
        role: Role::Student,
        ssnr_teacher: None,
        sinr_teacher: None,
        ceilings: Some(ceil),
        precision: Precision::F32,
        scenes: None,
        overrides: Overrides {
            epochs: Some(5),
            batch_size: Some(100),
            ..Default::default()
        },
    });
    let first = dir.path().join("first");
    execute(&command, RunConfig::default(), &first)?;
    let manifest = RunManifest::load(&first.join("manifest.json"))?;
    let second = dir.path().join("second");
    execute(&manifest.command, manifest.config.clone(), &second)?;
    let a = fs::read(first.join("curves.csv"))?;
    let b = fs::read(second.join("curves.csv"))?;
    let same_ckpt = fs::read(first.join("checkpoint.json"))? == fs::read(second.join("checkpoint.json"))?;
    Ok((
        a == b && !a.is_empty(),
        format!(
            "curves CSVs ({} bytes, {} epochs) identical: {}; checkpoints identical: {same_ckpt}",
            a.len(),
            a.iter().filter(|&&c| c == b'\n').count() - 1,
            a == b
        ),
    ))
}

fn main() -> ExitCode {
    let only = std::env::var("CFISAC_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut h = Harness {
        only,
        failed: Vec::new(),
        desk: None,
        student: None,
    };
    // Libtest-style arguments (e.g. --list, filters) are ignored.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    h.run(6, c6_selection);
    h.run(2, c2_gradients);
    h.run(3, c3_power);
    h.run(7, c7_bound);
    h.run(8, c8_monte_carlo);
    h.run(1, c1_ssnr_teacher);
    h.run(5, c5_balance);
    h.run(4, c4_lambda);
    h.run(9, c9_runtime);
    h.run(10, c10_determinism);
    if h.failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {:?}", h.failed);
        ExitCode::FAILURE
    }
}
