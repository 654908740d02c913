//! System model: channel and allocation containers, feasibility, and the
//! throughput / power / efficiency metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{BsKind, NetworkConfig, RateFormula};
use crate::error::{Error, Result};

/// Relative slack allowed when comparing a BS power sum against its cap.
/// Proportional rescaling can overshoot the cap by a few ulps.
pub const POWER_CAP_RTOL: f64 = 1e-9;

/// Linear channel power gains for one realization, indexed `[bs][user][subchannel]`
/// with global user indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTensor {
    pub n_bs: usize,
    pub n_users: usize,
    pub n_subchannels: usize,
    pub gains: Vec<f64>,
    pub seed: u64,
}

impl ChannelTensor {
    pub fn new(n_bs: usize, n_users: usize, n_subchannels: usize, gains: Vec<f64>, seed: u64) -> Result<Self> {
        let t = Self {
            n_bs,
            n_users,
            n_subchannels,
            gains,
            seed,
        };
        t.validate()?;
        Ok(t)
    }

    /// Every gain set to `value`.
    pub fn filled(cfg: &NetworkConfig, value: f64) -> Self {
        let len = cfg.n_bs() * cfg.n_users() * cfg.n_subchannels;
        Self {
            n_bs: cfg.n_bs(),
            n_users: cfg.n_users(),
            n_subchannels: cfg.n_subchannels,
            gains: vec![value; len],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.len() != self.n_bs * self.n_users * self.n_subchannels {
            return Err(Error::Shape(format!(
                "channel tensor has {} gains for shape ({}, {}, {})",
                self.gains.len(),
                self.n_bs,
                self.n_users,
                self.n_subchannels
            )));
        }
        if let Some(g) = self.gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Domain(format!("channel gain {g} is not positive and finite")));
        }
        Ok(())
    }

    pub fn matches(&self, cfg: &NetworkConfig) -> bool {
        self.n_bs == cfg.n_bs() && self.n_users == cfg.n_users() && self.n_subchannels == cfg.n_subchannels
    }

    #[inline]
    pub fn index(&self, n: usize, u: usize, k: usize) -> usize {
        (n * self.n_users + u) * self.n_subchannels + k
    }

    #[inline]
    pub fn get(&self, n: usize, u: usize, k: usize) -> f64 {
        self.gains[self.index(n, u, k)]
    }

    pub fn set(&mut self, n: usize, u: usize, k: usize, gain: f64) {
        let i = self.index(n, u, k);
        self.gains[i] = gain;
    }
}

/// Subchannel indicator `l[n][u][k]` (global users) and transmit powers `p[n][k]` in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub n_bs: usize,
    pub n_users: usize,
    pub n_subchannels: usize,
    pub indicator: Vec<u8>,
    pub power_w: Vec<f64>,
}

impl Allocation {
    /// No subchannel assigned, zero power.
    pub fn empty(cfg: &NetworkConfig) -> Self {
        let (n, u, k) = (cfg.n_bs(), cfg.n_users(), cfg.n_subchannels);
        Self {
            n_bs: n,
            n_users: u,
            n_subchannels: k,
            indicator: vec![0; n * u * k],
            power_w: vec![0.0; n * k],
        }
    }

    /// Subchannel `k` of BS `n` goes to the `k mod U_n`-th user of that BS.
    pub fn round_robin(cfg: &NetworkConfig) -> Self {
        let mut a = Self::empty(cfg);
        for n in 0..cfg.n_bs() {
            let users = cfg.users_of(n);
            for k in 0..cfg.n_subchannels {
                let u = users.start + k % users.len();
                a.set_assigned(n, u, k, true);
            }
        }
        a
    }

    #[inline]
    pub fn assigned(&self, n: usize, u: usize, k: usize) -> bool {
        self.indicator[(n * self.n_users + u) * self.n_subchannels + k] != 0
    }

    pub fn set_assigned(&mut self, n: usize, u: usize, k: usize, on: bool) {
        let i = (n * self.n_users + u) * self.n_subchannels + k;
        self.indicator[i] = on as u8;
    }

    #[inline]
    pub fn power(&self, n: usize, k: usize) -> f64 {
        self.power_w[n * self.n_subchannels + k]
    }

    pub fn set_power(&mut self, n: usize, k: usize, watts: f64) {
        self.power_w[n * self.n_subchannels + k] = watts;
    }

    /// Sum of transmit powers of BS `n`.
    pub fn bs_power(&self, n: usize) -> f64 {
        self.power_w[n * self.n_subchannels..(n + 1) * self.n_subchannels]
            .iter()
            .sum()
    }

    pub fn total_transmit_power(&self) -> f64 {
        self.power_w.iter().sum()
    }
}

/// Performance of one allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub throughput_bps: f64,
    pub total_power_w: f64,
    pub ee_bps_per_joule: f64,
    pub se_bps_per_hz: f64,
}

/// The first constraint an allocation fails.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Arrays do not match the configuration's dimensions.
    Shape(String),
    /// Subchannel `k` of BS `n` is assigned to more than one user.
    SubchannelShared { bs: usize, subchannel: usize },
    /// User `u` receives no subchannel from its serving BS.
    UserUnserved { bs: usize, user: usize },
    /// BS `n` assigns a subchannel to a user it does not serve.
    ForeignUser { bs: usize, user: usize, subchannel: usize },
    /// A power entry is negative or not finite.
    InvalidPower { bs: usize, subchannel: usize, watts: f64 },
    /// Macro BS power sum exceeds its cap.
    MacroPower { bs: usize, sum_w: f64, cap_w: f64 },
    /// Micro BS power sum exceeds its cap.
    MicroPower { bs: usize, sum_w: f64, cap_w: f64 },
    /// Spectral efficiency falls short of the target.
    SpectralEfficiency { se: f64, target: f64 },
}

impl Violation {
    /// Short identifier of the violated constraint.
    pub fn constraint(&self) -> &'static str {
        match self {
            Violation::Shape(_) => "shape",
            Violation::SubchannelShared { .. } => "1a",
            Violation::UserUnserved { .. } => "1b",
            Violation::ForeignUser { .. } => "1-foreign",
            Violation::InvalidPower { .. } => "2-nonneg",
            Violation::MacroPower { .. } => "2a",
            Violation::MicroPower { .. } => "2b",
            Violation::SpectralEfficiency { .. } => "8",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "{msg}"),
            Violation::SubchannelShared { bs, subchannel } => {
                write!(f, "subchannel {subchannel} of BS {bs} assigned to several users")
            }
            Violation::UserUnserved { bs, user } => write!(f, "user {user} gets no subchannel from BS {bs}"),
            Violation::ForeignUser { bs, user, subchannel } => {
                write!(
                    f,
                    "BS {bs} assigns subchannel {subchannel} to user {user} it does not serve"
                )
            }
            Violation::InvalidPower { bs, subchannel, watts } => {
                write!(f, "power {watts} W on BS {bs} subchannel {subchannel}")
            }
            Violation::MacroPower { bs, sum_w, cap_w } | Violation::MicroPower { bs, sum_w, cap_w } => {
                write!(f, "BS {bs} transmits {sum_w} W, cap {cap_w} W")
            }
            Violation::SpectralEfficiency { se, target } => write!(f, "SE {se} bps/Hz below target {target}"),
        }
    }
}

fn check_channel_shape(h: &ChannelTensor, cfg: &NetworkConfig) -> Result<()> {
    if !h.matches(cfg) || h.gains.len() != h.n_bs * h.n_users * h.n_subchannels {
        return Err(Error::Shape(format!(
            "channel tensor ({}, {}, {}) does not match config ({}, {}, {})",
            h.n_bs,
            h.n_users,
            h.n_subchannels,
            cfg.n_bs(),
            cfg.n_users(),
            cfg.n_subchannels
        )));
    }
    Ok(())
}

fn check_power_shape(p: &[f64], cfg: &NetworkConfig) -> Result<()> {
    if p.len() != cfg.n_bs() * cfg.n_subchannels {
        return Err(Error::Shape(format!(
            "power matrix has {} entries, expected {}",
            p.len(),
            cfg.n_bs() * cfg.n_subchannels
        )));
    }
    Ok(())
}

/// Rate in bps of global user `u` served by BS `n` on subchannel `k`, given the
/// power matrix `p[n][k]` (row-major, `K` columns).
pub fn link_rate(h: &ChannelTensor, p: &[f64], cfg: &NetworkConfig, n: usize, u: usize, k: usize) -> Result<f64> {
    check_channel_shape(h, cfg)?;
    check_power_shape(p, cfg)?;
    if n >= cfg.n_bs() || u >= cfg.n_users() || k >= cfg.n_subchannels {
        return Err(Error::Domain(format!("link ({n}, {u}, {k}) out of range")));
    }
    if let Some(bad) = p.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("negative or NaN power {bad}")));
    }
    Ok(link_rate_unchecked(h, p, cfg, n, u, k))
}

#[inline]
pub(crate) fn link_rate_unchecked(
    h: &ChannelTensor,
    p: &[f64],
    cfg: &NetworkConfig,
    n: usize,
    u: usize,
    k: usize,
) -> f64 {
    let kk = cfg.n_subchannels;
    let interference: f64 = (0..cfg.n_bs())
        .filter(|&j| j != n)
        .map(|j| h.get(j, u, k) * p[j * kk + k])
        .sum();
    let sinr = h.get(n, u, k) * p[n * kk + k] / (interference + cfg.noise_power_w);
    rate_from_sinr(sinr, cfg)
}

#[inline]
pub(crate) fn rate_from_sinr(sinr: f64, cfg: &NetworkConfig) -> f64 {
    match cfg.rate_formula {
        RateFormula::Shannon => cfg.subchannel_bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2,
        RateFormula::LogSinr => cfg.subchannel_bandwidth_hz * sinr.log2(),
    }
}

fn check_allocation_shape(alloc: &Allocation, cfg: &NetworkConfig) -> std::result::Result<(), Violation> {
    let (n, u, k) = (cfg.n_bs(), cfg.n_users(), cfg.n_subchannels);
    if alloc.n_bs != n
        || alloc.n_users != u
        || alloc.n_subchannels != k
        || alloc.indicator.len() != n * u * k
        || alloc.power_w.len() != n * k
    {
        return Err(Violation::Shape(format!(
            "allocation ({}, {}, {}) does not match config ({n}, {u}, {k})",
            alloc.n_bs, alloc.n_users, alloc.n_subchannels
        )));
    }
    Ok(())
}

/// Checks the subchannel constraints: one user per subchannel per BS, at
/// least one subchannel per user, and no assignment to foreign users.
pub fn check_indicator(alloc: &Allocation, cfg: &NetworkConfig) -> std::result::Result<(), Violation> {
    check_allocation_shape(alloc, cfg)?;
    for n in 0..cfg.n_bs() {
        let own = cfg.users_of(n);
        for k in 0..cfg.n_subchannels {
            let mut holders = 0;
            for u in 0..cfg.n_users() {
                if alloc.indicator[(n * cfg.n_users() + u) * cfg.n_subchannels + k] > 1 {
                    return Err(Violation::Shape(format!(
                        "indicator entry at ({n}, {u}, {k}) is not binary"
                    )));
                }
                if alloc.assigned(n, u, k) {
                    if !own.contains(&u) {
                        return Err(Violation::ForeignUser {
                            bs: n,
                            user: u,
                            subchannel: k,
                        });
                    }
                    holders += 1;
                }
            }
            if holders > 1 {
                return Err(Violation::SubchannelShared { bs: n, subchannel: k });
            }
        }
        for u in own {
            if !(0..cfg.n_subchannels).any(|k| alloc.assigned(n, u, k)) {
                return Err(Violation::UserUnserved { bs: n, user: u });
            }
        }
    }
    Ok(())
}

/// Checks nonnegativity and the per-BS power caps.
pub fn check_power(power_w: &[f64], cfg: &NetworkConfig) -> std::result::Result<(), Violation> {
    let kk = cfg.n_subchannels;
    if power_w.len() != cfg.n_bs() * kk {
        return Err(Violation::Shape(format!(
            "power matrix has {} entries, expected {}",
            power_w.len(),
            cfg.n_bs() * kk
        )));
    }
    for n in 0..cfg.n_bs() {
        let row = &power_w[n * kk..(n + 1) * kk];
        if let Some((k, &w)) = row.iter().enumerate().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(Violation::InvalidPower {
                bs: n,
                subchannel: k,
                watts: w,
            });
        }
        let sum: f64 = row.iter().sum();
        let cap = cfg.p_max(n);
        if sum > cap * (1.0 + POWER_CAP_RTOL) {
            return Err(match cfg.bs_kind(n) {
                BsKind::Macro => Violation::MacroPower {
                    bs: n,
                    sum_w: sum,
                    cap_w: cap,
                },
                BsKind::Micro => Violation::MicroPower {
                    bs: n,
                    sum_w: sum,
                    cap_w: cap,
                },
            });
        }
    }
    Ok(())
}

/// Full feasibility verdict: subchannel constraints, power constraints, then
/// the spectral-efficiency target. Returns the first violation found.
pub fn check_feasible(
    alloc: &Allocation,
    cfg: &NetworkConfig,
    h: &ChannelTensor,
) -> std::result::Result<(), Violation> {
    check_indicator(alloc, cfg)?;
    check_power(&alloc.power_w, cfg)?;
    if !h.matches(cfg) || h.gains.len() != h.n_bs * h.n_users * h.n_subchannels {
        return Err(Violation::Shape("channel tensor does not match config".into()));
    }
    let se = throughput_unchecked(h, alloc, cfg) / cfg.system_bandwidth_hz();
    // NaN SE (literal rate with a silent link) fails too.
    if !(se >= cfg.se_target_bps_per_hz) {
        return Err(Violation::SpectralEfficiency {
            se,
            target: cfg.se_target_bps_per_hz,
        });
    }
    Ok(())
}

pub(crate) fn throughput_unchecked(h: &ChannelTensor, alloc: &Allocation, cfg: &NetworkConfig) -> f64 {
    let mut total = 0.0;
    for n in 0..cfg.n_bs() {
        for u in 0..cfg.n_users() {
            for k in 0..cfg.n_subchannels {
                if alloc.assigned(n, u, k) {
                    total += link_rate_unchecked(h, &alloc.power_w, cfg, n, u, k);
                }
            }
        }
    }
    total
}

/// Network throughput `R(l, p)` in bps.
pub fn throughput(h: &ChannelTensor, alloc: &Allocation, cfg: &NetworkConfig) -> Result<f64> {
    check_channel_shape(h, cfg)?;
    check_indicator(alloc, cfg).map_err(Error::Constraint)?;
    if let Some(bad) = alloc.power_w.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("negative or NaN power {bad}")));
    }
    Ok(throughput_unchecked(h, alloc, cfg))
}

/// Total consumed power: transmit power scaled by `1/rho` plus circuit power.
pub fn total_power(power_w: &[f64], cfg: &NetworkConfig) -> f64 {
    power_w.iter().sum::<f64>() / cfg.amplifier_inefficiency + cfg.circuit_power_w()
}

/// Energy efficiency in bps/J.
pub fn energy_efficiency(h: &ChannelTensor, alloc: &Allocation, cfg: &NetworkConfig) -> Result<f64> {
    Ok(throughput(h, alloc, cfg)? / total_power(&alloc.power_w, cfg))
}

/// Spectral efficiency in bps/Hz.
pub fn spectral_efficiency(h: &ChannelTensor, alloc: &Allocation, cfg: &NetworkConfig) -> Result<f64> {
    Ok(throughput(h, alloc, cfg)? / cfg.system_bandwidth_hz())
}

/// All four metrics in one pass.
pub fn evaluate(h: &ChannelTensor, alloc: &Allocation, cfg: &NetworkConfig) -> Result<Metrics> {
    let throughput_bps = throughput(h, alloc, cfg)?;
    let total_power_w = total_power(&alloc.power_w, cfg);
    Ok(Metrics {
        throughput_bps,
        total_power_w,
        ee_bps_per_joule: throughput_bps / total_power_w,
        se_bps_per_hz: throughput_bps / cfg.system_bandwidth_hz(),
    })
}
