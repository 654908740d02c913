use crate::config::NetworkConfig;

/// Discretized per-BS power vectors: each entry is a multiple of `P_max / L`
/// and the vector sums to at most `P_max`.
///
/// Level vectors are listed in lexicographic order, subchannel 0 most
/// significant. Powers are computed as `P_max * level / L`, which makes the
/// grid for `2L` contain the grid for `L` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    levels: u32,
    level_vectors: Vec<Vec<u32>>,
    p_max: Vec<f64>,
}

impl PowerGrid {
    pub fn new(cfg: &NetworkConfig, levels: u32) -> Self {
        assert!(levels >= 1, "power grid needs at least one level");
        let mut level_vectors = Vec::new();
        let mut current = vec![0u32; cfg.n_subchannels];
        fill(&mut current, 0, levels, &mut level_vectors);
        Self {
            levels,
            level_vectors,
            p_max: (0..cfg.n_bs()).map(|n| cfg.p_max(n)).collect(),
        }
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Number of power vectors per BS.
    pub fn len(&self) -> usize {
        self.level_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.level_vectors.is_empty()
    }

    pub fn level_vectors(&self) -> &[Vec<u32>] {
        &self.level_vectors
    }

    /// Watts for `level` steps on BS `n`.
    #[inline]
    pub fn watts(&self, n: usize, level: u32) -> f64 {
        self.p_max[n] * level as f64 / self.levels as f64
    }

    /// Power vector `i` of BS `n` in watts.
    pub fn vector(&self, n: usize, i: usize) -> Vec<f64> {
        self.level_vectors[i].iter().map(|&l| self.watts(n, l)).collect()
    }

    /// All power vectors of BS `n` in watts.
    pub fn vectors(&self, n: usize) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.vector(n, i)).collect()
    }
}

fn fill(current: &mut Vec<u32>, k: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if k == current.len() {
        out.push(current.clone());
        return;
    }
    for level in 0..=remaining {
        current[k] = level;
        fill(current, k + 1, remaining - level, out);
    }
    current[k] = 0;
}
