use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How UE and target positions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionScheme {
    /// Every agent on the line `y = pos1_y`, `x` uniform.
    Pos1,
    /// UEs on the roadside line `y = pos2_ue_y`; target anywhere on the road.
    Pos2,
}

impl FromStr for PositionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "pos1" => Ok(Self::Pos1),
            "pos2" => Ok(Self::Pos2),
            _ => Err(Error::Config(format!("unknown position scheme `{s}`"))),
        }
    }
}

impl fmt::Display for PositionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pos1 => "pos1",
            Self::Pos2 => "pos2",
        })
    }
}

/// Sampling area for agent positions, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub x_range: [f64; 2],
    pub pos1_y: f64,
    pub pos2_ue_y: f64,
    pub pos2_target_y: [f64; 2],
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            x_range: [0.0, 100.0],
            pos1_y: 50.0,
            pos2_ue_y: 23.0,
            pos2_target_y: [0.0, 20.0],
        }
    }
}

/// Physical system: counts, budgets, noise levels and AP placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_ues: usize,
    /// Per-AP transmit power budget (W).
    pub power_budget: f64,
    /// UE receiver noise power (W).
    pub ue_noise_var: f64,
    /// Per-antenna AP receiver noise power (W).
    pub ap_noise_var: f64,
    /// Variance of every sensing channel gain.
    pub sensing_gain_var: f64,
    /// Antenna spacing in wavelengths.
    pub spacing_ratio: f64,
    pub position_scheme: PositionScheme,
    pub ap_positions: Vec<[f64; 2]>,
    pub geometry: Geometry,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 2,
            antennas_per_ap: 16,
            num_ues: 5,
            power_budget: 1.0,
            ue_noise_var: 1.0,
            ap_noise_var: 1.0,
            sensing_gain_var: 0.1,
            spacing_ratio: 0.5,
            position_scheme: PositionScheme::Pos1,
            ap_positions: vec![[25.0, 0.0], [75.0, 0.0]],
            geometry: Geometry::default(),
        }
    }
}

impl SystemConfig {
    /// Default parameters with other counts; APs are spread evenly along the
    /// x-range at `y = 0`.
    pub fn with_counts(num_aps: usize, antennas_per_ap: usize, num_ues: usize) -> Self {
        let geometry = Geometry::default();
        let [lo, hi] = geometry.x_range;
        let ap_positions = (0..num_aps)
            .map(|l| [lo + (hi - lo) * (l as f64 + 0.5) / num_aps as f64, 0.0])
            .collect();
        Self {
            num_aps,
            antennas_per_ap,
            num_ues,
            ap_positions,
            geometry,
            ..Self::default()
        }
    }

    /// Beams per AP: one per UE plus the sensing beam.
    pub fn num_beams(&self) -> usize {
        self.num_ues + 1
    }

    pub fn power(&self, _ap: usize) -> f64 {
        self.power_budget
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_aps == 0 || self.antennas_per_ap == 0 || self.num_ues == 0 {
            return bad(format!(
                "counts must be positive (L={}, M={}, N={})",
                self.num_aps, self.antennas_per_ap, self.num_ues
            ));
        }
        for (name, v) in [
            ("power_budget", self.power_budget),
            ("ue_noise_var", self.ue_noise_var),
            ("ap_noise_var", self.ap_noise_var),
            ("sensing_gain_var", self.sensing_gain_var),
            ("spacing_ratio", self.spacing_ratio),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.ap_positions.len() != self.num_aps {
            return bad(format!(
                "ap_positions has {} entries for {} APs",
                self.ap_positions.len(),
                self.num_aps
            ));
        }
        let g = &self.geometry;
        for (name, [lo, hi]) in [("x_range", g.x_range), ("pos2_target_y", g.pos2_target_y)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} must be an ordered finite interval"));
            }
        }
        Ok(())
    }

    /// Checks that two configurations describe the same physical system.
    pub fn ensure_matches(&self, other: &SystemConfig, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Mismatch(format!(
                "{what}: system configuration differs (L={}, M={}, N={} vs L={}, M={}, N={})",
                self.num_aps,
                self.antennas_per_ap,
                self.num_ues,
                other.num_aps,
                other.antennas_per_ap,
                other.num_ues
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default().validate().unwrap();
        let c = SystemConfig::with_counts(2, 16, 5);
        assert_eq!(c.ap_positions, vec![[25.0, 0.0], [75.0, 0.0]]);
        assert_eq!(c, SystemConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = SystemConfig::default();
        c.sensing_gain_var = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = SystemConfig::default();
        c.ap_positions.pop();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = SystemConfig::default();
        c.num_ues = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn scheme_tags() {
        assert_eq!("Pos-1".parse::<PositionScheme>().unwrap(), PositionScheme::Pos1);
        assert_eq!("pos2".parse::<PositionScheme>().unwrap(), PositionScheme::Pos2);
        assert!(matches!("pos3".parse::<PositionScheme>(), Err(Error::Config(_))));
    }
}
