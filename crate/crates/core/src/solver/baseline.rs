use rand::Rng;

use super::AssignmentCatalog;
use crate::config::NetworkConfig;
use crate::system::{throughput_unchecked, total_power, Allocation, ChannelTensor};

/// Uniformly random catalog assignment; each power entry drawn from
/// `U(0, P_max(n))` and the BS's vector rescaled onto the cap when its sum
/// exceeds it.
pub fn random_power<R: Rng + ?Sized>(cfg: &NetworkConfig, catalog: &AssignmentCatalog, rng: &mut R) -> Allocation {
    let index = rng.random_range(0..catalog.len());
    let mut alloc = catalog.allocation(cfg, index);
    for n in 0..cfg.n_bs() {
        let cap = cfg.p_max(n);
        let draws: Vec<f64> = (0..cfg.n_subchannels).map(|_| rng.random::<f64>() * cap).collect();
        let sum: f64 = draws.iter().sum();
        let scale = if sum > cap { cap / sum } else { 1.0 };
        for (k, w) in draws.into_iter().enumerate() {
            alloc.set_power(n, k, w * scale);
        }
    }
    alloc
}

/// Every BS spreads its full budget evenly, `P_max(n) / K` per subchannel, and
/// the catalog assignment with the best EE under those powers is kept (first
/// index on ties).
pub fn max_power(h: &ChannelTensor, cfg: &NetworkConfig, catalog: &AssignmentCatalog) -> Allocation {
    let mut alloc = catalog.allocation(cfg, 0);
    for n in 0..cfg.n_bs() {
        let share = cfg.p_max(n) / cfg.n_subchannels as f64;
        for k in 0..cfg.n_subchannels {
            alloc.set_power(n, k, share);
        }
    }
    let p_tot = total_power(&alloc.power_w, cfg);
    let mut best = (f64::NEG_INFINITY, 0);
    for index in 0..catalog.len() {
        catalog.apply(index, &mut alloc);
        let ee = throughput_unchecked(h, &alloc, cfg) / p_tot;
        if ee > best.0 {
            best = (ee, index);
        }
    }
    catalog.apply(best.1, &mut alloc);
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{check_feasible, energy_efficiency};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_power_is_feasible_and_deterministic() {
        let cfg = NetworkConfig::reference_scenario();
        let cat = AssignmentCatalog::new(&cfg);
        let h = ChannelTensor::filled(&cfg, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            check_feasible(&random_power(&cfg, &cat, &mut rng), &cfg, &h).unwrap();
        }
        let a = random_power(&cfg, &cat, &mut ChaCha8Rng::seed_from_u64(42));
        let b = random_power(&cfg, &cat, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    /// E[p_k] under the draw-then-rescale rule for K = 2, by midpoint
    /// quadrature over the unit square (in units of P_max).
    fn expected_share_k2() -> f64 {
        let steps = 2000;
        let dx = 1.0 / steps as f64;
        let mut acc = 0.0;
        for i in 0..steps {
            for j in 0..steps {
                let x = (i as f64 + 0.5) * dx;
                let y = (j as f64 + 0.5) * dx;
                acc += if x + y > 1.0 { x / (x + y) } else { x };
            }
        }
        acc * dx * dx
    }

    #[test]
    fn random_power_mean_matches_quadrature() {
        let cfg = NetworkConfig::reference_scenario();
        let cat = AssignmentCatalog::new(&cfg);
        let expected = expected_share_k2();
        assert!((expected - 5.0 / 12.0).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 10_000;
        let mut sum = [0.0; 2];
        for _ in 0..draws {
            let a = random_power(&cfg, &cat, &mut rng);
            sum[0] += a.power(0, 0);
            sum[1] += a.power(2, 1);
        }
        for (s, cap) in sum.iter().zip([12.0, 1.2]) {
            let mean = s / draws as f64;
            assert!(mean > 0.0 && mean <= cap / 2.0 * 1.1);
            assert!((mean / cap - expected).abs() < 0.1 * expected, "{mean}");
        }
    }

    #[test]
    fn max_power_shares() {
        let cfg = NetworkConfig::reference_scenario();
        let cat = AssignmentCatalog::new(&cfg);
        let h = ChannelTensor::filled(&cfg, 1e-9);
        let a = max_power(&h, &cfg, &cat);
        assert_eq!(a.power_w, vec![6.0, 6.0, 0.6, 0.6, 0.6, 0.6]);
        check_feasible(&a, &cfg, &h).unwrap();
    }

    #[test]
    fn max_power_picks_best_assignment() {
        let cfg = NetworkConfig::reference_scenario();
        let cat = AssignmentCatalog::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = crate::channel::place_users(&cfg, &mut rng);
        let h = crate::channel::draw_channel(&cfg, &layout, 3, &mut rng);
        let chosen = max_power(&h, &cfg, &cat);
        let best = energy_efficiency(&h, &chosen, &cfg).unwrap();
        for i in 0..cat.len() {
            let mut other = chosen.clone();
            cat.apply(i, &mut other);
            assert!(energy_efficiency(&h, &other, &cfg).unwrap() <= best);
        }
    }
}
