//! Undirected, loop-free contact networks stored as upper-triangular bitsets.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::beta_model::{contact_probability, DegreeParams};
use crate::error::{Error, Result};

/// Position of the unordered pair `{i, j}` (0-based, `i != j`) in row-major
/// upper-triangular order.
#[inline]
pub fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

#[inline]
pub fn n_dyads(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// A set of unordered pairs over `n` members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadSet {
    n: usize,
    words: Vec<u64>,
}

impl DyadSet {
    pub fn new(n: usize) -> Self {
        DyadSet {
            n,
            words: vec![0; n_dyads(n).div_ceil(64)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut set = DyadSet::new(n);
        let total = n_dyads(n);
        for w in set.words.iter_mut() {
            *w = u64::MAX;
        }
        let tail = total % 64;
        if tail != 0 {
            if let Some(last) = set.words.last_mut() {
                *last = (1u64 << tail) - 1;
            }
        }
        set
    }

    pub fn n_members(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let k = dyad_index(self.n, i, j);
        self.words[k >> 6] >> (k & 63) & 1 == 1
    }

    /// Sets membership of `{i, j}`; returns the previous value.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) -> bool {
        let k = dyad_index(self.n, i, j);
        let mask = 1u64 << (k & 63);
        let word = &mut self.words[k >> 6];
        let old = *word & mask != 0;
        if value {
            *word |= mask;
        } else {
            *word &= !mask;
        }
        old
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Pairs `(i, j)` with `i < j`, in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| ((i + 1)..n).filter(move |&j| self.contains(i, j)).map(move |j| (i, j)))
    }
}

/// Symmetric binary adjacency over `n_members` population members.
///
/// Degrees are cached and updated on every flip, so single-dyad updates in
/// the sampler stay O(1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactNetwork {
    edges: DyadSet,
    degrees: Vec<u32>,
}

impl ContactNetwork {
    pub fn empty(n_members: usize) -> Self {
        ContactNetwork {
            edges: DyadSet::new(n_members),
            degrees: vec![0; n_members],
        }
    }

    pub fn complete(n_members: usize) -> Self {
        ContactNetwork {
            edges: DyadSet::full(n_members),
            degrees: vec![n_members.saturating_sub(1) as u32; n_members],
        }
    }

    /// Builds a network from 0-based pairs. Self-pairs are rejected.
    pub fn from_edges(n_members: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut net = ContactNetwork::empty(n_members);
        for (i, j) in edges {
            for m in [i, j] {
                if m >= n_members {
                    return Err(Error::MemberOutOfRange { member: m + 1, n_members });
                }
            }
            if i == j {
                return Err(Error::Inconsistent(format!("self-contact at member {}", i + 1)));
            }
            net.set(i, j, true);
        }
        Ok(net)
    }

    pub fn n_members(&self) -> usize {
        self.degrees.len()
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(i, j)
    }

    /// Sets `y_{i,j}`, keeping the degree cache current. Returns the old value.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, present: bool) -> bool {
        let old = self.edges.set(i, j, present);
        if old != present {
            if present {
                self.degrees[i] += 1;
                self.degrees[j] += 1;
            } else {
                self.degrees[i] -= 1;
                self.degrees[j] -= 1;
            }
        }
        old
    }

    pub fn flip(&mut self, i: usize, j: usize) {
        let cur = self.has_edge(i, j);
        self.set(i, j, !cur);
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn n_edges(&self) -> usize {
        self.degrees.iter().map(|&d| d as usize).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_members()).filter(move |&j| j != i && self.has_edge(i, j))
    }

    /// Recounts degrees from the bitset; used by tests to audit the cache.
    pub fn recount_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.n_members()];
        for (i, j) in self.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Applies a member relabeling: member `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = ContactNetwork::empty(self.n_members());
        for (i, j) in self.edges() {
            out.set(perm[i], perm[j], true);
        }
        out
    }
}

/// Degree sequence `s_i(y)` of a network.
pub fn degrees(network: &ContactNetwork) -> Vec<u32> {
    network.degrees().to_vec()
}

/// Draws every dyad independently with probability `logistic(θ_i + θ_j)`.
pub fn sample_network<R: Rng + ?Sized>(theta: &DegreeParams, rng: &mut R) -> ContactNetwork {
    let th = theta.values();
    let n = th.len();
    let mut net = ContactNetwork::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = contact_probability(th[i], th[j]);
            if rng.random::<f64>() < p {
                net.set(i, j, true);
            }
        }
    }
    net
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    n_members: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for ContactNetwork {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkRepr {
            n_members: self.n_members(),
            edges: self.edges().map(|(i, j)| [i + 1, j + 1]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ContactNetwork {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = NetworkRepr::deserialize(d)?;
        let mut pairs = Vec::with_capacity(repr.edges.len());
        for [i, j] in repr.edges {
            if i == 0 || j == 0 {
                return Err(serde::de::Error::custom("member ids are 1-based"));
            }
            pairs.push((i - 1, j - 1));
        }
        ContactNetwork::from_edges(repr.n_members, pairs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta_model::DegreeParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dyad_index_is_a_bijection() {
        for n in 2..12 {
            let mut seen = vec![false; n_dyads(n)];
            for i in 0..n {
                for j in (i + 1)..n {
                    let k = dyad_index(n, i, j);
                    assert_eq!(k, dyad_index(n, j, i));
                    assert!(!seen[k]);
                    seen[k] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn degrees_of_small_networks() {
        assert_eq!(degrees(&ContactNetwork::empty(3)), vec![0, 0, 0]);
        assert_eq!(degrees(&ContactNetwork::complete(3)), vec![2, 2, 2]);
        let single = ContactNetwork::from_edges(3, [(0, 1)]).unwrap();
        assert_eq!(degrees(&single), vec![1, 1, 0]);
    }

    #[test]
    fn self_contacts_are_rejected() {
        assert!(ContactNetwork::from_edges(3, [(1, 1)]).is_err());
        assert!(ContactNetwork::from_edges(3, [(0, 3)]).is_err());
    }

    #[test]
    fn flips_keep_degree_cache_in_sync() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = ContactNetwork::empty(17);
        for _ in 0..500 {
            let i = rng.random_range(0..17);
            let j = rng.random_range(0..17);
            if i != j {
                net.flip(i, j);
            }
        }
        assert_eq!(net.degrees(), net.recount_degrees().as_slice());
        assert_eq!(net.n_edges(), net.edges().count());
    }

    #[test]
    fn full_set_counts_every_dyad() {
        for n in [0, 1, 2, 9, 12, 40] {
            assert_eq!(DyadSet::full(n).len(), n_dyads(n));
        }
    }

    #[test]
    fn very_negative_theta_gives_empty_networks() {
        let theta = DegreeParams::new(vec![-50.0; 10]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let net = sample_network(&theta, &mut rng);
            assert_eq!(net.n_edges(), 0);
        }
    }

    #[test]
    fn zero_theta_gives_half_density() {
        let n = 20;
        let theta = DegreeParams::new(vec![0.0; n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let mut total = 0usize;
        for _ in 0..draws {
            let net = sample_network(&theta, &mut rng);
            assert_eq!(net.degrees().iter().map(|&d| d as usize).sum::<usize>() % 2, 0);
            total += net.n_edges();
        }
        let density = total as f64 / (draws * n_dyads(n)) as f64;
        assert!((density - 0.5).abs() < 0.01, "density {density}");
    }

    #[test]
    fn json_uses_one_based_ids() {
        let net = ContactNetwork::from_edges(3, [(0, 2)]).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        assert_eq!(text, r#"{"n_members":3,"edges":[[1,3]]}"#);
        let back: ContactNetwork = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
    }
}
