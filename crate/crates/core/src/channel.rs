//! Cell layout, log-distance pathloss, and Rayleigh block fading.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{BsKind, NetworkConfig};
use crate::system::ChannelTensor;

/// Planar positions in km.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub bs_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    /// Serving BS of every global user.
    pub serving: Vec<usize>,
}

impl Layout {
    pub fn distance_km(&self, n: usize, u: usize) -> f64 {
        let [bx, by] = self.bs_positions[n];
        let [ux, uy] = self.user_positions[u];
        (ux - bx).hypot(uy - by)
    }
}

/// Positions of all base stations.
///
/// The first macro sits at the origin; further macros (if any) are spread on a
/// ring of twice the inter-cell distance. Micros sit on a ring of radius
/// `inter_cell_distance_km` around the origin at equally spaced angles, the
/// first at angle 0.
pub fn bs_positions(cfg: &NetworkConfig) -> Vec<[f64; 2]> {
    let d = cfg.geometry.inter_cell_distance_km;
    let ring = |radius: f64, i: usize, count: usize| {
        let theta = 2.0 * PI * i as f64 / count as f64;
        [radius * theta.cos(), radius * theta.sin()]
    };
    let mut positions = Vec::with_capacity(cfg.n_bs());
    positions.push([0.0, 0.0]);
    for m in 1..cfg.n_macro {
        positions.push(ring(2.0 * d, m - 1, cfg.n_macro - 1));
    }
    for s in 0..cfg.n_micro {
        positions.push(ring(d, s, cfg.n_micro));
    }
    positions
}

/// Drops every user around its serving BS at a distance uniform in
/// `(0, user_distance_bound_km]` and a uniform angle.
pub fn place_users<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Layout {
    let bs = bs_positions(cfg);
    let bound = cfg.geometry.user_distance_bound_km;
    let mut user_positions = Vec::with_capacity(cfg.n_users());
    let mut serving = Vec::with_capacity(cfg.n_users());
    for (n, &count) in cfg.users_per_bs.iter().enumerate() {
        let [bx, by] = bs[n];
        for _ in 0..count {
            // 1 - U[0,1) lies in (0, 1]
            let r = bound * (1.0 - rng.random::<f64>());
            let theta = 2.0 * PI * rng.random::<f64>();
            user_positions.push([bx + r * theta.cos(), by + r * theta.sin()]);
            serving.push(n);
        }
    }
    Layout {
        bs_positions: bs,
        user_positions,
        serving,
    }
}

/// Pathloss in dB at `distance_km` (must be positive).
pub fn pathloss_db(kind: BsKind, distance_km: f64) -> f64 {
    debug_assert!(distance_km > 0.0);
    match kind {
        BsKind::Macro => 128.1 + 37.6 * distance_km.log10(),
        BsKind::Micro => 140.7 + 36.7 * distance_km.log10(),
    }
}

/// Draws `h[n][u][k] = 10^(-PL/10) * |g|^2` with `g ~ CN(0, 1)` independent per
/// triple. Draw order is BS-major, then user, then subchannel.
pub fn draw_channel<R: Rng + ?Sized>(cfg: &NetworkConfig, layout: &Layout, seed: u64, rng: &mut R) -> ChannelTensor {
    let (nb, nu, nk) = (cfg.n_bs(), cfg.n_users(), cfg.n_subchannels);
    let mut gains = Vec::with_capacity(nb * nu * nk);
    for n in 0..nb {
        let kind = cfg.bs_kind(n);
        for u in 0..nu {
            let large_scale = 10f64.powf(-pathloss_db(kind, layout.distance_km(n, u)) / 10.0);
            for _ in 0..nk {
                gains.push(large_scale * rayleigh_power(rng));
            }
        }
    }
    ChannelTensor {
        n_bs: nb,
        n_users: nu,
        n_subchannels: nk,
        gains,
        seed,
    }
}

/// `|g|^2` for a unit-variance circularly-symmetric complex Gaussian `g`.
pub fn rayleigh_power<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let g2 = 0.5 * (re * re + im * im);
    // exactly zero has probability ~0 but would break positivity
    if g2 > 0.0 {
        g2
    } else {
        f64::MIN_POSITIVE
    }
}
