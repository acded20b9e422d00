//! Data augmentation: unobserved contacts, transmission sources and event times.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::beta_model::logistic;
use crate::epidemic::{EpidemicParams, EpidemicRecord};
use crate::error::{invalid, Error, Result};
use crate::mixture::sample_categorical;
use crate::network::ContactNetwork;
use crate::observation::TransmissionPrior;

use super::population::DyadLayout;

/// Exposure time of a member, `+∞` if never infected.
#[inline]
fn exposure_of(record: &EpidemicRecord, member: usize) -> f64 {
    record.case(member).map_or(f64::INFINITY, |c| c.exposed)
}

/// Infectious-pressure time the dyad `{i, j}` contributes to `a(x, y)` if present.
pub fn dyad_exposure(record: &EpidemicRecord, i: usize, j: usize) -> f64 {
    let one_way = |src: usize, dst: usize| {
        record
            .case(src)
            .map_or(0.0, |c| c.pressure_on(exposure_of(record, dst)))
    };
    one_way(i, j) + one_way(j, i)
}

/// `P(Y_ij = 1 | x, θ, β)` for a dyad not carrying a transmission.
pub fn contact_conditional(record: &EpidemicRecord, i: usize, j: usize, lambda: f64, beta: f64) -> f64 {
    logistic(lambda - beta * dyad_exposure(record, i, j))
}

fn carries_transmission(record: &EpidemicRecord, i: usize, j: usize) -> bool {
    record.case(j).is_some_and(|c| c.infector == Some(i)) || record.case(i).is_some_and(|c| c.infector == Some(j))
}

/// Gibbs update of every latent materialized dyad.
pub fn impute_contacts<R: Rng + ?Sized>(
    layout: &DyadLayout,
    record: &EpidemicRecord,
    theta: &[f64],
    beta: f64,
    network: &mut ContactNetwork,
    rng: &mut R,
) {
    for (i, j) in layout.latent() {
        let present = if carries_transmission(record, i, j) {
            true
        } else {
            let p = contact_conditional(record, i, j, theta[i] + theta[j], beta);
            rng.random::<f64>() < p
        };
        network.set(i, j, present);
    }
}

/// Redraws the infector of every non-index case whose source is unobserved.
pub fn sample_transmission_sources<R: Rng + ?Sized>(
    record: &mut EpidemicRecord,
    network: &ContactNetwork,
    prior: &TransmissionPrior,
    source_observed: &[bool],
    rng: &mut R,
) -> Result<()> {
    let m = record.n_infected();
    let mut weights = Vec::with_capacity(m);
    let mut candidates = Vec::with_capacity(m);
    for s in 0..m {
        let target = record.cases()[s];
        if target.infector.is_none() || source_observed[target.member] {
            continue;
        }
        weights.clear();
        candidates.clear();
        for src in record.cases() {
            if src.member == target.member || !network.has_edge(src.member, target.member) {
                continue;
            }
            let w = prior.weight(src, &target);
            if w > 0.0 {
                weights.push(w);
                candidates.push(src.member);
            }
        }
        if candidates.is_empty() {
            return Err(Error::ZeroWeightTransmission { member: target.member + 1 });
        }
        let pick = candidates[sample_categorical(&weights, rng)];
        record.cases_mut()[s].infector = Some(pick);
    }
    Ok(())
}

/// Which event times the sampler treats as unknown, by member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentTimes {
    pub exposed: Vec<bool>,
    pub infectious: Vec<bool>,
    pub removed: Vec<bool>,
}

/// Accepted and proposed counts of the time updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimeMoves {
    pub exposed: (u64, u64),
    pub infectious: (u64, u64),
    pub removed: (u64, u64),
}

/// Pressure a case exerts on its infected contacts, `Σ_c y_jc (min(E_c, R_j) − I_j)^+`,
/// evaluated at infectious time `inf` and removal `rem`.
fn outgoing_infected_pressure(record: &EpidemicRecord, network: &ContactNetwork, j: usize, inf: f64, rem: f64) -> f64 {
    record
        .cases()
        .iter()
        .filter(|c| c.member != j && network.has_edge(j, c.member))
        .map(|c| (c.exposed.min(rem) - inf).max(0.0))
        .sum()
}

fn susceptible_contacts(record: &EpidemicRecord, network: &ContactNetwork, j: usize) -> f64 {
    let infected_nbrs = record
        .cases()
        .iter()
        .filter(|c| c.member != j && network.has_edge(j, c.member))
        .count();
    (network.degree(j) as usize - infected_nbrs) as f64
}

/// Random-walk Metropolis updates of each latent `E_j`, `R_j` and (if flagged) `I_j`.
///
/// Proposals that break `E < I < R`, leave the infector's infectious window
/// or strand a child outside the window are rejected outright.
pub fn impute_times<R: Rng + ?Sized>(
    record: &mut EpidemicRecord,
    network: &ContactNetwork,
    params: &EpidemicParams,
    latent: &LatentTimes,
    scale: f64,
    rng: &mut R,
) -> Result<TimeMoves> {
    if !(scale > 0.0 && scale.is_finite()) {
        return invalid(format!("proposal scale must be positive, got {scale}"));
    }
    let step = Normal::new(0.0, scale).expect("positive scale");
    let beta = params.beta;
    let mut moves = TimeMoves::default();
    let accept = |log_ratio: f64, rng: &mut R| rng.random::<f64>().ln() < log_ratio;

    for s in 0..record.n_infected() {
        let j = record.cases()[s].member;

        if latent.exposed[j] {
            let c = record.cases()[s];
            let new = c.exposed + step.sample(rng);
            moves.exposed.1 += 1;
            let window_ok = new < c.infectious
                && c.infector.is_none_or(|p| record.case(p).expect("infector infected").can_infect_at(new));
            if window_ok {
                let incoming = |e: f64| -> f64 {
                    record
                        .cases()
                        .iter()
                        .filter(|src| src.member != j && network.has_edge(src.member, j))
                        .map(|src| src.pressure_on(e))
                        .sum()
                };
                let log_ratio = params.exposed.log_density(c.infectious - new)
                    - params.exposed.log_density(c.infectious - c.exposed)
                    - beta * (incoming(new) - incoming(c.exposed));
                if accept(log_ratio, rng) {
                    record.cases_mut()[s].exposed = new;
                    moves.exposed.0 += 1;
                }
            }
        }

        if latent.infectious[j] {
            let c = record.cases()[s];
            let new = c.infectious + step.sample(rng);
            moves.infectious.1 += 1;
            let children_ok = record
                .cases()
                .iter()
                .filter(|k| k.infector == Some(j))
                .all(|k| new < k.exposed);
            if c.exposed < new && new < c.removed && children_ok {
                let d = susceptible_contacts(record, network, j);
                let log_ratio = params.exposed.log_density(new - c.exposed)
                    - params.exposed.log_density(c.infectious - c.exposed)
                    + params.infectious.log_density(c.removed - new)
                    - params.infectious.log_density(c.removed - c.infectious)
                    - beta
                        * (outgoing_infected_pressure(record, network, j, new, c.removed)
                            - outgoing_infected_pressure(record, network, j, c.infectious, c.removed)
                            + d * (c.infectious - new));
                if accept(log_ratio, rng) {
                    record.cases_mut()[s].infectious = new;
                    moves.infectious.0 += 1;
                }
            }
        }

        if latent.removed[j] {
            let c = record.cases()[s];
            let new = c.removed + step.sample(rng);
            moves.removed.1 += 1;
            let children_ok = record
                .cases()
                .iter()
                .filter(|k| k.infector == Some(j))
                .all(|k| k.exposed < new);
            if new > c.infectious && children_ok {
                let d = susceptible_contacts(record, network, j);
                let log_ratio = params.infectious.log_density(new - c.infectious)
                    - params.infectious.log_density(c.removed - c.infectious)
                    - beta
                        * (outgoing_infected_pressure(record, network, j, c.infectious, new)
                            - outgoing_infected_pressure(record, network, j, c.infectious, c.removed)
                            + d * (new - c.removed));
                if accept(log_ratio, rng) {
                    record.cases_mut()[s].removed = new;
                    moves.removed.0 += 1;
                }
            }
        }
    }
    Ok(moves)
}
