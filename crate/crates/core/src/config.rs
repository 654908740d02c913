//! Scenario constants for a single-macro OFDM heterogeneous network.
//!
//! Base stations are indexed macro-first: BS `0..n_macro` are macrocells, the
//! remaining `n_micro` are microcells. Users carry a global index; the users of
//! BS `n` occupy the contiguous range [`NetworkConfig::users_of`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which expression is used for the per-link rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFormula {
    /// `B * log2(1 + SINR)`.
    #[default]
    Shannon,
    /// `B * log2(SINR)`, without the `+1`. Negative for SINR < 1 and
    /// `-inf` for a silent link.
    LogSinr,
}

/// Macrocell or microcell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsKind {
    Macro,
    Micro,
}

/// Deployment geometry. Only the two distances are used by the channel
/// generator; carrier frequency and antenna height are kept for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub inter_cell_distance_km: f64,
    pub user_distance_bound_km: f64,
    pub carrier_frequency_hz: f64,
    pub antenna_height_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            inter_cell_distance_km: 0.2,
            user_distance_bound_km: 0.12,
            carrier_frequency_hz: 2.0e9,
            antenna_height_m: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_macro: usize,
    pub n_micro: usize,
    /// `U_n` for every BS, macro-first.
    pub users_per_bs: Vec<usize>,
    pub n_subchannels: usize,
    pub subchannel_bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub p_max_macro_w: f64,
    pub p_max_micro_w: f64,
    pub amplifier_inefficiency: f64,
    pub circuit_power_macro_w: f64,
    pub circuit_power_micro_w: f64,
    pub se_target_bps_per_hz: f64,
    #[serde(default)]
    pub rate_formula: RateFormula,
    pub geometry: Geometry,
}

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl NetworkConfig {
    /// The evaluation scenario: one macrocell, two microcells, two users per
    /// cell, two subchannels over a 2 MHz band.
    pub fn reference_scenario() -> Self {
        let n_subchannels = 2;
        Self {
            n_macro: 1,
            n_micro: 2,
            users_per_bs: vec![2, 2, 2],
            n_subchannels,
            subchannel_bandwidth_hz: 2.0e6 / n_subchannels as f64,
            noise_power_w: dbm_to_watts(-128.1),
            p_max_macro_w: 12.0,
            p_max_micro_w: 1.2,
            amplifier_inefficiency: 0.3,
            circuit_power_macro_w: 10.0,
            circuit_power_micro_w: 0.1,
            se_target_bps_per_hz: 0.0,
            rate_formula: RateFormula::Shannon,
            geometry: Geometry::default(),
        }
    }

    /// Same constants as [`reference_scenario`](Self::reference_scenario) with a
    /// different cell layout.
    pub fn with_layout(n_macro: usize, n_micro: usize, users_per_bs: usize, n_subchannels: usize) -> Self {
        let base = Self::reference_scenario();
        Self {
            n_macro,
            n_micro,
            users_per_bs: vec![users_per_bs; n_macro + n_micro],
            n_subchannels,
            subchannel_bandwidth_hz: 2.0e6 / n_subchannels as f64,
            ..base
        }
    }

    pub fn n_bs(&self) -> usize {
        self.n_macro + self.n_micro
    }

    pub fn n_users(&self) -> usize {
        self.users_per_bs.iter().sum()
    }

    /// Global user indices served by BS `n`.
    pub fn users_of(&self, n: usize) -> std::ops::Range<usize> {
        let start: usize = self.users_per_bs[..n].iter().sum();
        start..start + self.users_per_bs[n]
    }

    /// The BS serving global user `u`.
    pub fn serving_bs(&self, u: usize) -> usize {
        let mut acc = 0;
        for (n, &count) in self.users_per_bs.iter().enumerate() {
            acc += count;
            if u < acc {
                return n;
            }
        }
        panic!("user index {u} out of range ({} users)", self.n_users());
    }

    pub fn bs_kind(&self, n: usize) -> BsKind {
        if n < self.n_macro {
            BsKind::Macro
        } else {
            BsKind::Micro
        }
    }

    pub fn p_max(&self, n: usize) -> f64 {
        match self.bs_kind(n) {
            BsKind::Macro => self.p_max_macro_w,
            BsKind::Micro => self.p_max_micro_w,
        }
    }

    /// `M * p_c^m + S * p_c^s`.
    pub fn circuit_power_w(&self) -> f64 {
        self.n_macro as f64 * self.circuit_power_macro_w + self.n_micro as f64 * self.circuit_power_micro_w
    }

    /// Total bandwidth `K * B`.
    pub fn system_bandwidth_hz(&self) -> f64 {
        self.n_subchannels as f64 * self.subchannel_bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_macro == 0 || self.n_micro == 0 {
            return fail(format!(
                "need at least one macro and one micro BS (got M={}, S={})",
                self.n_macro, self.n_micro
            ));
        }
        if self.users_per_bs.len() != self.n_bs() {
            return fail(format!(
                "users_per_bs has {} entries for {} base stations",
                self.users_per_bs.len(),
                self.n_bs()
            ));
        }
        if self.users_per_bs.contains(&0) || self.n_subchannels == 0 {
            return fail("user and subchannel counts must be at least 1".into());
        }
        let positive = [
            ("subchannel_bandwidth_hz", self.subchannel_bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("p_max_macro_w", self.p_max_macro_w),
            ("p_max_micro_w", self.p_max_micro_w),
            ("amplifier_inefficiency", self.amplifier_inefficiency),
            ("circuit_power_macro_w", self.circuit_power_macro_w),
            ("circuit_power_micro_w", self.circuit_power_micro_w),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return fail(format!("{name} must be positive and finite (got {value})"));
            }
        }
        if self.amplifier_inefficiency > 1.0 {
            return fail(format!(
                "amplifier_inefficiency must lie in (0, 1] (got {})",
                self.amplifier_inefficiency
            ));
        }
        if !(self.p_max_macro_w > self.p_max_micro_w) {
            return fail(format!(
                "macro max power {} W must exceed micro max power {} W",
                self.p_max_macro_w, self.p_max_micro_w
            ));
        }
        if !(self.se_target_bps_per_hz >= 0.0) {
            return fail(format!(
                "se_target_bps_per_hz must be >= 0 (got {})",
                self.se_target_bps_per_hz
            ));
        }
        let g = &self.geometry;
        if !(g.inter_cell_distance_km > 0.0 && g.user_distance_bound_km > 0.0) {
            return fail("geometry distances must be positive".into());
        }
        Ok(())
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::reference_scenario()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scenario_is_valid() {
        let cfg = NetworkConfig::reference_scenario();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_bs(), 3);
        assert_eq!(cfg.n_users(), 6);
        assert_eq!(cfg.subchannel_bandwidth_hz, 1.0e6);
        assert_eq!(cfg.circuit_power_w(), 10.2);
        assert_eq!(cfg.users_of(2), 4..6);
        assert_eq!(cfg.serving_bs(3), 1);
    }

    #[test]
    fn noise_conversion() {
        let w = NetworkConfig::reference_scenario().noise_power_w;
        assert!((w - 1.549e-16).abs() / 1.549e-16 < 1e-3, "{w}");
    }

    #[test]
    fn rejects_micro_above_macro() {
        let mut cfg = NetworkConfig::reference_scenario();
        cfg.p_max_micro_w = 12.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_rho() {
        let mut cfg = NetworkConfig::reference_scenario();
        cfg.amplifier_inefficiency = 1.5;
        assert!(cfg.validate().is_err());
        cfg.amplifier_inefficiency = 0.0;
        assert!(cfg.validate().is_err());
    }
}
