//! Agent geometry, line-of-sight steering-vector channels and seeded datasets.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PositionScheme, SystemConfig};
use crate::{Error, Result};

/// Fraction of a dataset used for training unless stated otherwise.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.97;

/// Positions (meters) of the UEs and the sensing target for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPositions {
    pub ues: Vec<[f64; 2]>,
    pub target: [f64; 2],
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws UE and target positions according to the configured scheme.
pub fn sample_positions<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> AgentPositions {
    let g = &config.geometry;
    match config.position_scheme {
        PositionScheme::Pos1 => {
            let ues = (0..config.num_ues)
                .map(|_| [uniform(rng, g.x_range), g.pos1_y])
                .collect();
            let target = [uniform(rng, g.x_range), g.pos1_y];
            AgentPositions { ues, target }
        }
        PositionScheme::Pos2 => {
            let ues = (0..config.num_ues)
                .map(|_| [uniform(rng, g.x_range), g.pos2_ue_y])
                .collect();
            let target = [uniform(rng, g.x_range), uniform(rng, g.pos2_target_y)];
            AgentPositions { ues, target }
        }
    }
}

/// Direction of `agent` seen from `ap`, measured from the +x array axis.
pub fn angle_of(ap: [f64; 2], agent: [f64; 2]) -> Result<f64> {
    let (dx, dy) = (agent[0] - ap[0], agent[1] - ap[1]);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::Geometry(format!(
            "agent at ({}, {}) coincides with the AP",
            agent[0], agent[1]
        )));
    }
    Ok(dy.atan2(dx))
}

/// ULA response `[1, e^{j2πd cos φ}, …, e^{j2πd(M-1) cos φ}]` with `d` the
/// spacing in wavelengths.
pub fn steering_vector(phi: f64, antennas: usize, spacing: f64) -> Array1<Complex64> {
    let step = 2.0 * PI * spacing * phi.cos();
    Array1::from_shape_fn(antennas, |m| Complex64::from_polar(1.0, step * m as f64))
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScene {
    /// `h_{ln}` indexed `(ap, ue, antenna)`.
    pub comm: Array3<Complex64>,
    /// `a(θ_l)` indexed `(ap, antenna)`.
    pub steering: Array2<Complex64>,
    /// `θ_l`, the target direction from each AP.
    pub target_angles: Vec<f64>,
}

impl ChannelScene {
    pub fn num_aps(&self) -> usize {
        self.comm.dim().0
    }

    pub fn num_ues(&self) -> usize {
        self.comm.dim().1
    }

    pub fn antennas(&self) -> usize {
        self.comm.dim().2
    }
}

/// Pure line-of-sight channels: every link is a steering vector.
pub fn build_channels(positions: &AgentPositions, config: &SystemConfig) -> Result<ChannelScene> {
    let (l_count, m, n_count) = (config.num_aps, config.antennas_per_ap, config.num_ues);
    if positions.ues.len() != n_count {
        return Err(Error::Shape(format!(
            "{} UE positions for N = {n_count}",
            positions.ues.len()
        )));
    }
    let mut comm = Array3::zeros((l_count, n_count, m));
    let mut steering = Array2::zeros((l_count, m));
    let mut target_angles = Vec::with_capacity(l_count);
    for (l, &ap) in config.ap_positions.iter().enumerate() {
        for (n, &ue) in positions.ues.iter().enumerate() {
            let phi = angle_of(ap, ue)?;
            comm.slice_mut(ndarray::s![l, n, ..])
                .assign(&steering_vector(phi, m, config.spacing_ratio));
        }
        let theta = angle_of(ap, positions.target)?;
        steering
            .row_mut(l)
            .assign(&steering_vector(theta, m, config.spacing_ratio));
        target_angles.push(theta);
    }
    Ok(ChannelScene {
        comm,
        steering,
        target_angles,
    })
}

/// Independent generator for scene `index` of a dataset seeded with `seed`.
pub fn scene_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Seeded collection of scenes with a train/validation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SystemConfig,
    pub seed: u64,
    pub train_fraction: f64,
    /// Scenes `0..split` are training, the rest validation.
    pub split: usize,
    pub positions: Vec<AgentPositions>,
    pub scenes: Vec<ChannelScene>,
}

/// Number of training scenes for `size` scenes at `fraction`.
pub fn split_point(size: usize, fraction: f64) -> usize {
    // The small slack keeps e.g. 20000 * 0.97 from flooring to 19399.
    ((size as f64 * fraction + 1e-9).floor() as usize).min(size)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "train fraction must lie in (0, 1], got {fraction}"
        )))
    }
}

impl Dataset {
    /// Re-derives channels from stored positions.
    pub fn from_positions(
        config: SystemConfig,
        seed: u64,
        train_fraction: f64,
        positions: Vec<AgentPositions>,
    ) -> Result<Self> {
        config.validate()?;
        check_fraction(train_fraction)?;
        let scenes = positions
            .par_iter()
            .map(|p| build_channels(p, &config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            split: split_point(positions.len(), train_fraction),
            config,
            seed,
            train_fraction,
            positions,
            scenes,
        })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn train(&self) -> &[ChannelScene] {
        &self.scenes[..self.split]
    }

    pub fn validation(&self) -> &[ChannelScene] {
        &self.scenes[self.split..]
    }
}

/// Generates `size` scenes; scene `i` draws from [`scene_rng`]`(seed, i)` so
/// parallel and serial generation agree.
pub fn generate_dataset(
    config: &SystemConfig,
    size: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    config.validate()?;
    check_fraction(train_fraction)?;
    if size == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let positions = (0..size)
        .into_par_iter()
        .map(|i| sample_positions(config, &mut scene_rng(seed, i)))
        .collect();
    Dataset::from_positions(config.clone(), seed, train_fraction, positions)
}
