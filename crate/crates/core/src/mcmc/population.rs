//! Updates of the degree-parameter mixture given the materialized dyads.
//!
//! Dyads between two never-infected, unsampled members are never
//! materialized: summing their indicator out leaves a factor of one, so they
//! drop from every conditional below.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::beta_model::softplus;
use crate::error::{invalid, Result};
use crate::mixture::sample_categorical;
use crate::network::ContactNetwork;
use crate::observation::ObservedData;

/// Materialized dyads: observed ones plus every dyad with an infected endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadLayout {
    n_members: usize,
    partners: Vec<Vec<u32>>,
    pairs: Vec<(u32, u32)>,
    latent: Vec<(u32, u32)>,
}

impl DyadLayout {
    pub fn new(data: &ObservedData) -> Self {
        let n = data.n_members;
        let mut infected = vec![false; n];
        for c in &data.cases {
            infected[c.member] = true;
        }
        let mut partners = vec![Vec::new(); n];
        let mut pairs = Vec::new();
        let mut latent = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let observed = data.contacts.observed.contains(i, j);
                if observed || infected[i] || infected[j] {
                    partners[i].push(j as u32);
                    partners[j].push(i as u32);
                    pairs.push((i as u32, j as u32));
                    if !observed {
                        latent.push((i as u32, j as u32));
                    }
                }
            }
        }
        DyadLayout { n_members: n, partners, pairs, latent }
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn partners(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.partners[i].iter().map(|&j| j as usize)
    }

    /// Every materialized dyad `(i, j)`, `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Materialized dyads whose value is imputed.
    pub fn latent(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.latent.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    pub fn n_latent(&self) -> usize {
        self.latent.len()
    }

    /// Log-likelihood of the materialized dyads under `θ`.
    pub fn log_likelihood(&self, network: &ContactNetwork, theta: &[f64]) -> f64 {
        self.pairs()
            .map(|(i, j)| crate::beta_model::dyad_log_prob(theta[i] + theta[j], network.has_edge(i, j)))
            .sum()
    }
}

/// Cluster-pair sufficient statistics: materialized dyads and contacts
/// between clusters `k` and `l` (symmetric).
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    k: usize,
    dyads: Vec<f64>,
    edges: Vec<f64>,
}

impl PairTable {
    pub fn new(layout: &DyadLayout, network: &ContactNetwork, assignments: &[usize], k: usize) -> Self {
        let mut dyads = vec![0.0; k * k];
        let mut edges = vec![0.0; k * k];
        for (i, j) in layout.pairs() {
            let (a, b) = (assignments[i], assignments[j]);
            let y = network.has_edge(i, j) as u8 as f64;
            dyads[a * k + b] += 1.0;
            edges[a * k + b] += y;
            if a != b {
                dyads[b * k + a] += 1.0;
                edges[b * k + a] += y;
            }
        }
        PairTable { k, dyads, edges }
    }

    /// Log-likelihood of all dyads touching cluster `c` as a function of its atom.
    fn cluster_log_lik(&self, c: usize, gamma_c: f64, atoms: &[f64]) -> f64 {
        let mut ll = 0.0;
        for l in 0..self.k {
            let idx = c * self.k + l;
            let n = self.dyads[idx];
            if n == 0.0 {
                continue;
            }
            let lambda = if l == c { 2.0 * gamma_c } else { gamma_c + atoms[l] };
            ll += self.edges[idx] * lambda - n * softplus(lambda);
        }
        ll
    }
}

/// Unnormalized log conditional weights of `Z_i = k`.
pub fn assignment_log_weights(
    member: usize,
    layout: &DyadLayout,
    network: &ContactNetwork,
    atoms: &[f64],
    proportions: &[f64],
    assignments: &[usize],
) -> Vec<f64> {
    let k = atoms.len();
    let mut dyads = vec![0.0; k];
    let mut edges = vec![0.0; k];
    for j in layout.partners(member) {
        let l = assignments[j];
        dyads[l] += 1.0;
        if network.has_edge(member, j) {
            edges[l] += 1.0;
        }
    }
    (0..k)
        .map(|c| {
            let mut w = proportions[c].ln();
            for l in 0..k {
                if dyads[l] > 0.0 {
                    let lambda = atoms[c] + atoms[l];
                    w += edges[l] * lambda - dyads[l] * softplus(lambda);
                }
            }
            w
        })
        .collect()
}

/// Sequential sweep redrawing every `Z_i` from its full conditional.
pub fn update_assignments<R: Rng + ?Sized>(
    layout: &DyadLayout,
    network: &ContactNetwork,
    atoms: &[f64],
    proportions: &[f64],
    assignments: &mut [usize],
    rng: &mut R,
) {
    let k = atoms.len();
    if k == 1 {
        assignments.iter_mut().for_each(|z| *z = 0);
        return;
    }
    let mut probs = vec![0.0; k];
    for i in 0..assignments.len() {
        let logw = assignment_log_weights(i, layout, network, atoms, proportions, assignments);
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (p, w) in probs.iter_mut().zip(&logw) {
            *p = (w - top).exp();
        }
        assignments[i] = sample_categorical(&probs, rng);
    }
}

/// Gaussian random-walk Metropolis update of each atom in turn.
/// Returns the number of accepted proposals.
#[allow(clippy::too_many_arguments)]
pub fn update_gamma_mh<R: Rng + ?Sized>(
    atoms: &mut [f64],
    table: &PairTable,
    mu: f64,
    sigma2: f64,
    scale: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(scale > 0.0 && scale.is_finite()) {
        return invalid(format!("proposal scale must be positive, got {scale}"));
    }
    let step = Normal::new(0.0, scale).expect("positive scale");
    let log_prior = |g: f64| -(g - mu).powi(2) / (2.0 * sigma2);
    let mut accepted = 0;
    for c in 0..atoms.len() {
        let old = atoms[c];
        let new = old + step.sample(rng);
        let log_ratio = table.cluster_log_lik(c, new, atoms) - table.cluster_log_lik(c, old, atoms) + log_prior(new)
            - log_prior(old);
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            atoms[c] = new;
            accepted += 1;
        }
    }
    Ok(accepted)
}
