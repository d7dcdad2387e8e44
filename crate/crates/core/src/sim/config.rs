use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-slice RBG counts are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlicingMode {
    /// Prioritized RBGs: a slice has first claim on its share and whatever it
    /// leaves unused is shared by everyone.
    #[default]
    LimitedSoft,
    /// Dedicated RBGs: a slice never uses more than its share and unused RBGs
    /// stay idle. The background slice gets the remainder.
    Hard,
}

/// Log-distance path loss channel, no fading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Base station position; `None` means the centre of the area.
    pub base_position_m: Option<[f64; 2]>,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    pub reference_loss_db: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub rbg_bandwidth_hz: f64,
    /// Spectral efficiency ceiling in bit/s/Hz (highest MCS).
    pub max_spectral_efficiency: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            base_position_m: None,
            tx_power_dbm: 30.0,
            noise_floor_dbm: -62.0,
            reference_loss_db: 38.0,
            path_loss_exponent: 3.0,
            reference_distance_m: 1.0,
            rbg_bandwidth_hz: 540e3,
            max_spectral_efficiency: 5.5547,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_slices: usize,
    pub num_rbgs: usize,
    /// UEs per slice; the last entry is the background slice.
    pub ue_counts: Vec<usize>,
    pub delay_thresholds_ms: Vec<f64>,
    pub area_m: [f64; 2],
    pub per_ue_rate_bps: f64,
    pub ue_speed_mps: [f64; 2],
    pub tti_ms: f64,
    pub ttis_per_step: usize,
    pub steps_per_episode: usize,
    pub packet_size_bytes: usize,
    pub slicing_mode: SlicingMode,
    pub channel: ChannelConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_slices: 3,
            num_rbgs: 20,
            ue_counts: vec![5, 5, 5],
            delay_thresholds_ms: vec![100.0, 50.0, 10.0],
            area_m: [120.0, 10.0],
            per_ue_rate_bps: 2e6,
            ue_speed_mps: [1.0, 2.0],
            tti_ms: 1.0,
            ttis_per_step: 100,
            steps_per_episode: 200,
            packet_size_bytes: 1500,
            slicing_mode: SlicingMode::LimitedSoft,
            channel: ChannelConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.num_slices;
        let bad = |msg: String| Err(Error::Config(msg));
        if n < 2 {
            return bad(format!("need at least 2 slices, got {n}"));
        }
        if self.num_rbgs < n {
            return bad(format!("num_rbgs ({}) must be at least num_slices ({n})", self.num_rbgs));
        }
        if self.ue_counts.len() != n {
            return bad(format!("ue_counts has {} entries for {n} slices", self.ue_counts.len()));
        }
        if self.delay_thresholds_ms.len() != n {
            return bad(format!("delay_thresholds_ms has {} entries for {n} slices", self.delay_thresholds_ms.len()));
        }
        if let Some(t) = self.delay_thresholds_ms.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return bad(format!("delay thresholds must be positive, got {t}"));
        }
        if !(self.area_m[0] > 0.0 && self.area_m[1] > 0.0) {
            return bad(format!("area must be positive, got {:?}", self.area_m));
        }
        if !(self.per_ue_rate_bps >= 0.0 && self.per_ue_rate_bps.is_finite()) {
            return bad(format!("per_ue_rate_bps must be non-negative, got {}", self.per_ue_rate_bps));
        }
        let [lo, hi] = self.ue_speed_mps;
        if !(lo >= 0.0 && hi >= lo) {
            return bad(format!("ue_speed_mps must be an ordered non-negative range, got {:?}", self.ue_speed_mps));
        }
        if !(self.tti_ms > 0.0) || self.ttis_per_step == 0 || self.steps_per_episode == 0 {
            return bad("tti_ms, ttis_per_step and steps_per_episode must be positive".into());
        }
        if self.packet_size_bytes == 0 {
            return bad("packet_size_bytes must be positive".into());
        }
        let c = &self.channel;
        if !(c.rbg_bandwidth_hz > 0.0 && c.max_spectral_efficiency > 0.0 && c.reference_distance_m > 0.0) {
            return bad("channel bandwidth, spectral efficiency cap and reference distance must be positive".into());
        }
        if let Some([x, y]) = c.base_position_m {
            if !(0.0..=self.area_m[0]).contains(&x) || !(0.0..=self.area_m[1]).contains(&y) {
                return bad(format!("base station {:?} lies outside the area", [x, y]));
            }
        }
        Ok(())
    }

    pub fn base_position(&self) -> [f64; 2] {
        self.channel.base_position_m.unwrap_or([self.area_m[0] / 2.0, self.area_m[1] / 2.0])
    }

    pub fn packet_bits(&self) -> u64 {
        self.packet_size_bytes as u64 * 8
    }

    pub fn interval_seconds(&self) -> f64 {
        self.ttis_per_step as f64 * self.tti_ms / 1000.0
    }

    pub fn num_prioritized(&self) -> usize {
        self.num_slices - 1
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("SimConfig serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_rbgs_rejected() {
        let cfg = SimConfig { num_rbgs: 0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_partial_override() {
        let cfg = SimConfig::default();
        assert_eq!(SimConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = "num_rbgs = 25\n[channel]\nnoise_floor_dbm = -70.0\n";
        let parsed = SimConfig::from_toml(partial).unwrap();
        assert_eq!(parsed.num_rbgs, 25);
        assert_eq!(parsed.channel.noise_floor_dbm, -70.0);
        assert_eq!(parsed.ttis_per_step, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SimConfig::from_toml("num_rgbs = 3\n").is_err());
    }
}
