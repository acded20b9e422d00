//! The β-model: independent dyads with log-odds `θ_i + θ_j`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::ContactNetwork;

/// `log(1 + exp(x))` without overflow, split at zero.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability of a contact between members with degree parameters `theta_i`, `theta_j`.
#[inline]
pub fn contact_probability(theta_i: f64, theta_j: f64) -> f64 {
    logistic(theta_i + theta_j)
}

/// `log P(Y_ij = y)` under log-odds `lambda`.
#[inline]
pub fn dyad_log_prob(lambda: f64, present: bool) -> f64 {
    if present {
        lambda - softplus(lambda)
    } else {
        -softplus(lambda)
    }
}

/// Per-member degree parameters on the log-odds scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DegreeParams(Vec<f64>);

impl DegreeParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return invalid(format!("theta[{}] is not finite", i + 1));
        }
        Ok(DegreeParams(theta))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Σ_{i<j} [(θ_i+θ_j) y_ij − log(1 + exp(θ_i+θ_j))]`.
pub fn network_log_density(network: &ContactNetwork, theta: &DegreeParams) -> Result<f64> {
    let n = network.n_members();
    if theta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: theta.len() });
    }
    let th = theta.values();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += dyad_log_prob(th[i] + th[j], network.has_edge(i, j));
        }
    }
    Ok(total)
}

/// Expected degree `μ_i(θ) = Σ_{j≠i} logistic(θ_i + θ_j)` of a 0-based member.
pub fn expected_degree(member: usize, theta: &DegreeParams) -> Result<f64> {
    let th = theta.values();
    if member >= th.len() {
        return Err(Error::MemberOutOfRange { member: member + 1, n_members: th.len() });
    }
    Ok(th
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != member)
        .map(|(_, &t)| contact_probability(th[member], t))
        .sum())
}

/// Expected degrees of every member.
///
/// Members sharing a degree parameter are grouped, so clustered θ vectors
/// (as produced by the truncated Dirichlet process) cost O(N·distinct).
pub fn expected_degrees(theta: &DegreeParams) -> Vec<f64> {
    let th = theta.values();
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    let mut sorted: Vec<f64> = th.to_vec();
    sorted.sort_by(f64::total_cmp);
    for t in sorted {
        match distinct.last_mut() {
            Some((v, c)) if *v == t => *c += 1,
            _ => distinct.push((t, 1)),
        }
    }
    th.iter()
        .map(|&ti| {
            let all: f64 = distinct
                .iter()
                .map(|&(t, c)| c as f64 * contact_probability(ti, t))
                .sum();
            all - contact_probability(ti, ti)
        })
        .collect()
}
