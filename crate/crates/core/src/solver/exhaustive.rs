use rayon::prelude::*;

use super::{AssignmentCatalog, PowerGrid};
use crate::config::NetworkConfig;
use crate::system::{rate_from_sinr, Allocation, ChannelTensor};

/// Result of an exhaustive scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub ee: f64,
    pub feasible: bool,
    /// Number of (assignment, power) pairs scored.
    pub evaluations: u64,
    /// Joint catalog index of the chosen assignment.
    pub assignment_index: usize,
    /// Per-BS index into the power grid of the chosen powers.
    pub power_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Candidate {
    ee: f64,
    tx_power: f64,
    assignment: usize,
    powers: Vec<usize>,
}

impl Candidate {
    /// Higher EE, then lower transmit power, then earlier in canonical order
    /// (assignment index, then power indices lexicographically).
    fn beats(&self, other: &Candidate) -> bool {
        if self.ee != other.ee {
            return self.ee > other.ee;
        }
        if self.tx_power != other.tx_power {
            return self.tx_power < other.tx_power;
        }
        (self.assignment, &self.powers) < (other.assignment, &other.powers)
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.beats(&a) { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Exhaustive search over every catalog assignment and every combination of
/// per-BS grid power vectors, keeping the most energy-efficient combination
/// that meets the configured spectral-efficiency target.
///
/// Building the solver once and calling [`solve`](Self::solve) per channel
/// amortizes the catalog and grid construction.
#[derive(Debug, Clone)]
pub struct ExhaustiveSolver {
    cfg: NetworkConfig,
    catalog: AssignmentCatalog,
    grid: PowerGrid,
    /// Per-BS local indices of every joint assignment.
    joint_locals: Vec<Vec<usize>>,
    /// `col_part[n][i][k]`: grid vector `i` of BS `n` contributes
    /// `level * (L+1)^n` to the subchannel-`k` column code.
    col_part: Vec<Vec<Vec<usize>>>,
}

impl ExhaustiveSolver {
    pub fn new(cfg: &NetworkConfig, levels: u32) -> Self {
        let catalog = AssignmentCatalog::new(cfg);
        let grid = PowerGrid::new(cfg, levels);
        let joint_locals = (0..catalog.len()).map(|i| catalog.decompose(i)).collect();
        let radix = levels as usize + 1;
        let col_part = (0..cfg.n_bs())
            .map(|n| {
                let scale = radix.pow(n as u32);
                grid.level_vectors()
                    .iter()
                    .map(|v| v.iter().map(|&l| l as usize * scale).collect())
                    .collect()
            })
            .collect();
        Self {
            cfg: cfg.clone(),
            catalog,
            grid,
            joint_locals,
            col_part,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn catalog(&self) -> &AssignmentCatalog {
        &self.catalog
    }

    pub fn grid(&self) -> &PowerGrid {
        &self.grid
    }

    /// Total number of (assignment, power) pairs one solve scores.
    pub fn evaluations(&self) -> u64 {
        self.catalog.len() as u64 * (self.grid.len() as u64).pow(self.cfg.n_bs() as u32)
    }

    /// Rates of every user on subchannel `k` for every column of power levels.
    /// Entry `col * n_users + u` is the rate of user `u` from its serving BS
    /// when BS `n` transmits at level `(col / (L+1)^n) % (L+1)`.
    fn rate_table(&self, h: &ChannelTensor, k: usize) -> Vec<f64> {
        let cfg = &self.cfg;
        let nb = cfg.n_bs();
        let nu = cfg.n_users();
        let radix = self.grid.levels() as usize + 1;
        let columns = radix.pow(nb as u32);
        let serving: Vec<usize> = (0..nu).map(|u| cfg.serving_bs(u)).collect();
        let mut p = vec![0.0; nb];
        let mut table = Vec::with_capacity(columns * nu);
        for col in 0..columns {
            let mut c = col;
            for (n, slot) in p.iter_mut().enumerate() {
                *slot = self.grid.watts(n, (c % radix) as u32);
                c /= radix;
            }
            for (u, &n) in serving.iter().enumerate() {
                let interference: f64 = (0..nb).filter(|&j| j != n).map(|j| h.get(j, u, k) * p[j]).sum();
                let sinr = h.get(n, u, k) * p[n] / (interference + cfg.noise_power_w);
                table.push(rate_from_sinr(sinr, cfg));
            }
        }
        table
    }

    /// Scans with the first BS's power index partitioned across the rayon pool.
    pub fn solve(&self, h: &ChannelTensor) -> Solution {
        self.solve_with(h, true)
    }

    /// Single-threaded scan. Same result as [`solve`](Self::solve).
    pub fn solve_sequential(&self, h: &ChannelTensor) -> Solution {
        self.solve_with(h, false)
    }

    fn solve_with(&self, h: &ChannelTensor, parallel: bool) -> Solution {
        assert!(
            h.matches(&self.cfg),
            "channel tensor does not match solver configuration"
        );
        let tables: Vec<Vec<f64>> = (0..self.cfg.n_subchannels).map(|k| self.rate_table(h, k)).collect();
        let g = self.grid.len();
        let best = if parallel {
            (0..g)
                .into_par_iter()
                .map(|i0| self.scan_slice(&tables, i0))
                .reduce(|| None, pick)
        } else {
            (0..g).map(|i0| self.scan_slice(&tables, i0)).fold(None, pick)
        };
        self.finish(best)
    }

    /// Best candidate among all combinations whose first-BS power index is `i0`.
    fn scan_slice(&self, tables: &[Vec<f64>], i0: usize) -> Option<Candidate> {
        let cfg = &self.cfg;
        let nb = cfg.n_bs();
        let nk = cfg.n_subchannels;
        let nu = cfg.n_users();
        let g = self.grid.len();
        let bandwidth = cfg.system_bandwidth_hz();
        let rho = cfg.amplifier_inefficiency;
        let circuit = cfg.circuit_power_w();
        let se_target = cfg.se_target_bps_per_hz;
        let offsets: Vec<usize> = (0..nb).map(|n| cfg.users_of(n).start).collect();

        let mut idx = vec![0usize; nb];
        idx[0] = i0;
        let mut cols = vec![0usize; nk];
        let mut local_sums: Vec<Vec<f64>> = (0..nb).map(|n| vec![0.0; self.catalog.local(n).len()]).collect();
        let mut best: Option<Candidate> = None;

        loop {
            for (k, col) in cols.iter_mut().enumerate() {
                *col = (0..nb).map(|n| self.col_part[n][idx[n]][k]).sum();
            }
            let mut tx_power = 0.0;
            for (n, &i) in idx.iter().enumerate() {
                for &level in &self.grid.level_vectors()[i] {
                    tx_power += self.grid.watts(n, level);
                }
            }
            let p_tot = tx_power / rho + circuit;

            for (n, sums) in local_sums.iter_mut().enumerate() {
                for (slot, owners) in sums.iter_mut().zip(self.catalog.local(n)) {
                    let mut s = 0.0;
                    for (k, owner) in owners.iter().enumerate() {
                        if let Some(u) = owner {
                            s += tables[k][cols[k] * nu + offsets[n] + u];
                        }
                    }
                    *slot = s;
                }
            }

            for (a, locals) in self.joint_locals.iter().enumerate() {
                let throughput: f64 = locals.iter().enumerate().map(|(n, &l)| local_sums[n][l]).sum();
                if !(throughput / bandwidth >= se_target) {
                    continue;
                }
                let ee = throughput / p_tot;
                let better = match &best {
                    None => !ee.is_nan(),
                    Some(b) => {
                        ee > b.ee
                            || (ee == b.ee && (tx_power < b.tx_power || (tx_power == b.tx_power && a < b.assignment)))
                    }
                };
                if better {
                    best = Some(Candidate {
                        ee,
                        tx_power,
                        assignment: a,
                        powers: idx.clone(),
                    });
                }
            }

            // odometer over BS 1..N
            let mut n = nb - 1;
            loop {
                if n == 0 {
                    return best;
                }
                idx[n] += 1;
                if idx[n] < g {
                    break;
                }
                idx[n] = 0;
                n -= 1;
            }
        }
    }

    fn finish(&self, best: Option<Candidate>) -> Solution {
        let evaluations = self.evaluations();
        match best {
            Some(c) => {
                let mut allocation = self.catalog.allocation(&self.cfg, c.assignment);
                for (n, &i) in c.powers.iter().enumerate() {
                    for (k, w) in self.grid.vector(n, i).into_iter().enumerate() {
                        allocation.set_power(n, k, w);
                    }
                }
                Solution {
                    allocation,
                    ee: c.ee,
                    feasible: true,
                    evaluations,
                    assignment_index: c.assignment,
                    power_indices: c.powers,
                }
            }
            None => Solution {
                allocation: self.catalog.allocation(&self.cfg, 0),
                ee: 0.0,
                feasible: false,
                evaluations,
                assignment_index: 0,
                power_indices: vec![0; self.cfg.n_bs()],
            },
        }
    }
}

/// One-shot exhaustive solve with grid `levels` and SE target `se_target`
/// (overriding the configuration's target).
pub fn exhaustive_solve(h: &ChannelTensor, cfg: &NetworkConfig, levels: u32, se_target: f64) -> Solution {
    let mut cfg = cfg.clone();
    cfg.se_target_bps_per_hz = se_target;
    ExhaustiveSolver::new(&cfg, levels).solve(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, place_users};
    use crate::system::{check_feasible, energy_efficiency, total_power};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn channel(cfg: &NetworkConfig, seed: u64) -> ChannelTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = place_users(cfg, &mut rng);
        draw_channel(cfg, &layout, seed, &mut rng)
    }

    /// Independent rescan: builds every allocation explicitly and scores it
    /// with the system-model metrics.
    fn brute_force(h: &ChannelTensor, cfg: &NetworkConfig, levels: u32) -> (f64, Vec<(f64, f64)>) {
        let catalog = AssignmentCatalog::new(cfg);
        let grid = PowerGrid::new(cfg, levels);
        let g = grid.len();
        let mut scores = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for a in 0..catalog.len() {
            for i0 in 0..g {
                for i1 in 0..g {
                    for i2 in 0..g {
                        let mut alloc = catalog.allocation(cfg, a);
                        for (n, i) in [i0, i1, i2].into_iter().enumerate() {
                            for (k, w) in grid.vector(n, i).into_iter().enumerate() {
                                alloc.set_power(n, k, w);
                            }
                        }
                        let ee = energy_efficiency(h, &alloc, cfg).unwrap();
                        let se = ee * total_power(&alloc.power_w, cfg) / cfg.system_bandwidth_hz();
                        if se >= cfg.se_target_bps_per_hz {
                            best = best.max(ee);
                        }
                        scores.push((ee, se));
                    }
                }
            }
        }
        (best, scores)
    }

    #[test]
    fn matches_brute_force_rescan() {
        let cfg = NetworkConfig::reference_scenario();
        for seed in 0..5 {
            let h = channel(&cfg, seed);
            let sol = exhaustive_solve(&h, &cfg, 2, 0.0);
            let (best, scores) = brute_force(&h, &cfg, 2);
            assert!(sol.feasible);
            assert_eq!(sol.evaluations as usize, scores.len());
            assert!((sol.ee - best).abs() <= 1e-12 * best, "{} vs {best}", sol.ee);
            assert!(scores.iter().all(|(ee, _)| sol.ee >= *ee * (1.0 - 1e-12)));
            let recomputed = energy_efficiency(&h, &sol.allocation, &cfg).unwrap();
            assert!((recomputed - sol.ee).abs() <= 1e-12 * sol.ee);
        }
    }

    #[test]
    fn evaluation_count_for_scenario() {
        let cfg = NetworkConfig::reference_scenario();
        let solver = ExhaustiveSolver::new(&cfg, 10);
        assert_eq!(solver.evaluations(), 2_299_968);
        assert_eq!(8 * 66u64.pow(3), 2_299_968);
    }

    #[test]
    fn zero_target_always_feasible() {
        let cfg = NetworkConfig::reference_scenario();
        for seed in 0..5 {
            let h = channel(&cfg, seed);
            let sol = exhaustive_solve(&h, &cfg, 3, 0.0);
            assert!(sol.feasible && sol.ee >= 0.0);
            check_feasible(&sol.allocation, &cfg, &h).unwrap();
        }
    }

    #[test]
    fn se_target_is_honoured() {
        let cfg = NetworkConfig::reference_scenario();
        let h = channel(&cfg, 1);
        let free = exhaustive_solve(&h, &cfg, 4, 0.0);
        let free_se = free.ee * total_power(&free.allocation.power_w, &cfg) / cfg.system_bandwidth_hz();
        let target = free_se * 1.05;
        let constrained = exhaustive_solve(&h, &cfg, 4, target);
        let mut cfg_t = cfg.clone();
        cfg_t.se_target_bps_per_hz = target;
        if constrained.feasible {
            check_feasible(&constrained.allocation, &cfg_t, &h).unwrap();
            assert!(constrained.ee <= free.ee);
        }
        let (best, _) = {
            let mut c = cfg.clone();
            c.se_target_bps_per_hz = target;
            brute_force(&h, &c, 4)
        };
        if best.is_finite() {
            assert!((constrained.ee - best).abs() <= 1e-12 * best);
        } else {
            assert!(!constrained.feasible);
        }
    }

    #[test]
    fn impossible_target_is_infeasible() {
        let cfg = NetworkConfig::reference_scenario();
        let h = channel(&cfg, 2);
        let sol = exhaustive_solve(&h, &cfg, 2, 1e6);
        assert!(!sol.feasible);
        assert_eq!(sol.evaluations, 8 * 6u64.pow(3));
    }

    #[test]
    fn tie_break_chain() {
        let c = |ee: f64, tx: f64, a: usize, p: [usize; 2]| Candidate {
            ee,
            tx_power: tx,
            assignment: a,
            powers: p.to_vec(),
        };
        assert!(c(2.0, 9.0, 7, [5, 5]).beats(&c(1.0, 0.0, 0, [0, 0])));
        assert!(c(1.0, 1.0, 7, [5, 5]).beats(&c(1.0, 2.0, 0, [0, 0])));
        assert!(c(1.0, 1.0, 3, [5, 5]).beats(&c(1.0, 1.0, 4, [0, 0])));
        assert!(c(1.0, 1.0, 3, [0, 9]).beats(&c(1.0, 1.0, 3, [1, 0])));
        assert!(!c(1.0, 1.0, 3, [0, 9]).beats(&c(1.0, 1.0, 3, [0, 9])));
    }

    #[test]
    fn literal_rates_with_silent_links_are_skipped() {
        // with log2(SINR) every silent link scores -inf, so the oracle must
        // pick all-active powers
        let mut cfg = NetworkConfig::reference_scenario();
        cfg.rate_formula = crate::config::RateFormula::LogSinr;
        cfg.se_target_bps_per_hz = f64::NEG_INFINITY;
        let h = channel(&cfg, 4);
        let sol = ExhaustiveSolver::new(&cfg, 2).solve(&h);
        assert!(sol.feasible && sol.ee.is_finite());
        assert!(sol.allocation.power_w.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = NetworkConfig::reference_scenario();
        let solver = ExhaustiveSolver::new(&cfg, 6);
        for seed in 0..4 {
            let h = channel(&cfg, seed);
            assert_eq!(solver.solve(&h), solver.solve_sequential(&h));
        }
    }

    #[test]
    fn finer_grid_never_worse() {
        let cfg = NetworkConfig::reference_scenario();
        for seed in 0..3 {
            let h = channel(&cfg, seed);
            let coarse = exhaustive_solve(&h, &cfg, 3, 0.0);
            let fine = exhaustive_solve(&h, &cfg, 6, 0.0);
            assert!(fine.ee >= coarse.ee);
        }
    }
}
