use crate::config::NetworkConfig;
use crate::system::Allocation;

/// Subchannel ownership within one BS: `owner[k]` is the local user holding
/// subchannel `k`, or `None` when the subchannel is left idle.
pub type LocalAssignment = Vec<Option<usize>>;

/// Every subchannel indicator that satisfies the one-user-per-subchannel and
/// at-least-one-subchannel-per-user constraints.
///
/// Local assignments of a BS are ordered lexicographically by their digit
/// string, subchannel 0 most significant, with digit 0 meaning idle and
/// digit `u + 1` meaning local user `u`. Joint assignments use a mixed-radix
/// index with BS 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentCatalog {
    per_bs: Vec<Vec<LocalAssignment>>,
    users_per_bs: Vec<usize>,
    n_subchannels: usize,
}

/// Enumerates all local assignments of `n_users` users over `n_subchannels`
/// subchannels in canonical order.
pub fn local_assignments(n_users: usize, n_subchannels: usize) -> Vec<LocalAssignment> {
    let base = n_users + 1;
    let total = base.pow(n_subchannels as u32);
    let mut out = Vec::new();
    let mut digits = vec![0usize; n_subchannels];
    for code in 0..total {
        let mut c = code;
        for k in (0..n_subchannels).rev() {
            digits[k] = c % base;
            c /= base;
        }
        let mut served = vec![false; n_users];
        for &d in &digits {
            if d > 0 {
                served[d - 1] = true;
            }
        }
        if served.iter().all(|&s| s) {
            out.push(digits.iter().map(|&d| d.checked_sub(1)).collect());
        }
    }
    out
}

impl AssignmentCatalog {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let per_bs = cfg
            .users_per_bs
            .iter()
            .map(|&u| local_assignments(u, cfg.n_subchannels))
            .collect();
        Self {
            per_bs,
            users_per_bs: cfg.users_per_bs.clone(),
            n_subchannels: cfg.n_subchannels,
        }
    }

    /// Number of joint assignments (product of the per-BS counts).
    pub fn len(&self) -> usize {
        self.per_bs.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn local(&self, n: usize) -> &[LocalAssignment] {
        &self.per_bs[n]
    }

    /// Splits a joint index into per-BS local indices.
    pub fn decompose(&self, mut index: usize) -> Vec<usize> {
        assert!(index < self.len(), "assignment index {index} out of range");
        let mut locals = vec![0; self.per_bs.len()];
        for n in (0..self.per_bs.len()).rev() {
            let radix = self.per_bs[n].len();
            locals[n] = index % radix;
            index /= radix;
        }
        locals
    }

    pub fn compose(&self, locals: &[usize]) -> usize {
        locals
            .iter()
            .zip(&self.per_bs)
            .fold(0, |acc, (&i, list)| acc * list.len() + i)
    }

    /// Writes joint assignment `index` into the indicator of `alloc`,
    /// clearing any previous assignment.
    pub fn apply(&self, index: usize, alloc: &mut Allocation) {
        alloc.indicator.iter_mut().for_each(|x| *x = 0);
        let mut offset = 0;
        for (n, &local) in self.decompose(index).iter().enumerate() {
            for (k, owner) in self.per_bs[n][local].iter().enumerate() {
                if let Some(u) = owner {
                    alloc.set_assigned(n, offset + u, k, true);
                }
            }
            offset += self.users_per_bs[n];
        }
    }

    /// Allocation with joint assignment `index` and zero power.
    pub fn allocation(&self, cfg: &NetworkConfig, index: usize) -> Allocation {
        let mut alloc = Allocation::empty(cfg);
        self.apply(index, &mut alloc);
        alloc
    }

    /// Joint index of the indicator in `alloc`, if it is a catalog entry.
    pub fn index_of(&self, alloc: &Allocation) -> Option<usize> {
        if alloc.n_bs != self.per_bs.len() || alloc.n_subchannels != self.n_subchannels {
            return None;
        }
        let mut locals = Vec::with_capacity(self.per_bs.len());
        let mut offset = 0;
        for (n, &count) in self.users_per_bs.iter().enumerate() {
            let mut owner: LocalAssignment = vec![None; self.n_subchannels];
            for u in 0..alloc.n_users {
                for (k, slot) in owner.iter_mut().enumerate() {
                    if alloc.assigned(n, u, k) {
                        if u < offset || u >= offset + count || slot.is_some() {
                            return None;
                        }
                        *slot = Some(u - offset);
                    }
                }
            }
            locals.push(self.per_bs[n].iter().position(|a| *a == owner)?);
            offset += count;
        }
        Some(self.compose(&locals))
    }
}
