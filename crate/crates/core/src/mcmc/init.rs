//! Deterministic feasible starting point for the sampler.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::epidemic::{Case, EpidemicParams, EpidemicRecord};
use crate::error::{Error, Result};
use crate::mixture::{Hyperpriors, MixtureState};
use crate::network::ContactNetwork;
use crate::observation::{ObservedData, PriorRow, Transmission, TransmissionPrior};

use super::conjugate::update_pi;
use super::population::DyadLayout;
use super::ChainState;

fn slot(cases: &[Case], member: usize) -> usize {
    cases.iter().position(|c| c.member == member).expect("infected member")
}

fn init_error(msg: impl Into<String>) -> Error {
    Error::Initialization(msg.into())
}

/// Fills unobserved times around the observed ones using the prior-mean durations.
fn initial_times(data: &ObservedData, params: &EpidemicParams, impute_infectious: bool) -> Result<Vec<Case>> {
    let (mean_e, mean_i) = (params.exposed.mean(), params.infectious.mean());
    let mut cases = Vec::with_capacity(data.cases.len());
    for c in &data.cases {
        let inf = match (c.infectious, c.exposed, c.removed) {
            (Some(i), _, _) => i,
            (None, _, _) if !impute_infectious => {
                return Err(Error::Config(format!(
                    "member {} has no infectious time; enable infectious-time imputation",
                    c.member + 1
                )))
            }
            (None, Some(e), Some(r)) => 0.5 * (e + r),
            (None, Some(e), None) => e + mean_e,
            (None, None, Some(r)) => r - mean_i,
            (None, None, None) => {
                return Err(init_error(format!("member {} has no observed event time", c.member + 1)));
            }
        };
        let exposed = c.exposed.unwrap_or(inf - mean_e);
        let removed = c.removed.unwrap_or(inf + mean_i);
        cases.push(Case { member: c.member, exposed, infectious: inf, removed, infector: None });
    }
    Ok(cases)
}

/// Greedy transmission tree: cases are visited by infectious time and each
/// takes the earliest infected member able to have infected it, preferring an
/// assessed infector. Latent exposure times are moved into the chosen
/// infector's window when needed.
fn initial_tree(
    data: &ObservedData,
    prior: &TransmissionPrior,
    index: usize,
    cases: &mut [Case],
) -> Result<()> {
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.sort_by(|&a, &b| cases[a].infectious.total_cmp(&cases[b].infectious).then(cases[a].member.cmp(&cases[b].member)));

    for &s in &order {
        let target = cases[s];
        let j = target.member;
        if j == index {
            continue;
        }
        let obs = data.case(j).expect("observed case");
        let e_known = obs.exposed.is_some();
        let contact_ok = |i: usize| data.contacts.get(i, j) != Some(false);

        let fixed: Option<usize> = match obs.transmission {
            Transmission::From(i) => Some(i),
            _ => match prior.row(j) {
                Some(PriorRow::Assessed(i)) => Some(i),
                _ => None,
            },
        };
        let mut candidates: Vec<usize> = match fixed {
            Some(i) if !contact_ok(i) => {
                return Err(init_error(format!(
                    "member {}: infector {} is observed not to be a contact",
                    j + 1,
                    i + 1
                )));
            }
            Some(i) => vec![i],
            None => {
                let mut v: Vec<usize> = order.iter().map(|&k| cases[k].member).filter(|&i| i != j).collect();
                v.retain(|&i| contact_ok(i));
                v
            }
        };
        if candidates.is_empty() {
            return Err(init_error(format!("member {} has no possible infector", j + 1)));
        }
        // Pass 1: an infector whose window already contains E_j.
        let contains = |i: usize, cases: &[Case]| cases[slot(cases, i)].can_infect_at(target.exposed);
        if let Some(pos) = candidates.iter().position(|&i| contains(i, cases)) {
            cases[s].infector = Some(candidates[pos]);
            continue;
        }
        if e_known {
            return Err(init_error(format!(
                "member {}: no candidate infector was infectious at the observed exposure time",
                j + 1
            )));
        }
        // Pass 2: move the latent exposure into a non-empty window.
        candidates.retain(|&i| {
            let src = &cases[slot(cases, i)];
            src.infectious < src.removed.min(target.infectious)
        });
        let Some(&i) = candidates.first() else {
            return Err(init_error(format!("member {}: no feasible transmission tree", j + 1)));
        };
        let src = cases[slot(cases, i)];
        cases[s].exposed = 0.5 * (src.infectious + src.removed.min(target.infectious));
        cases[s].infector = Some(i);
    }
    Ok(())
}

/// Builds the initial chain state.
pub(crate) fn initial_state<R: Rng + ?Sized>(
    data: &ObservedData,
    layout: &DyadLayout,
    prior: &TransmissionPrior,
    params: EpidemicParams,
    hp: &Hyperpriors,
    k: usize,
    impute_infectious: bool,
    rng: &mut R,
) -> Result<ChainState> {
    let n = data.n_members;
    let mut cases = initial_times(data, &params, impute_infectious)?;
    if !cases.is_empty() {
        let index = data.index_member().ok_or_else(|| init_error("no index case can be identified"))?;
        initial_tree(data, prior, index, &mut cases)?;
    }
    let record = EpidemicRecord::new(n, cases).map_err(|e| init_error(e.to_string()))?;

    let mut network = ContactNetwork::from_edges(n, data.contacts.present.iter())?;
    for c in record.cases() {
        if let Some(i) = c.infector {
            network.set(i, c.member, true);
        }
    }
    record
        .validate_with_network(&network)
        .map_err(|e| init_error(e.to_string()))?;
    debug_assert!(layout.latent().all(|(i, j)| !data.contacts.observed.contains(i, j)));

    let concentration = hp.alpha_shape / hp.alpha_rate;
    let base_mean = hp.mean_loc;
    let base_var = hp.prec_rate / hp.prec_shape;
    let normal = Normal::new(base_mean, base_var.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let atoms: Vec<f64> = (0..k).map(|_| normal.sample(rng)).collect();
    let assignments = vec![0; n];
    let mut counts = vec![0; k];
    counts[0] = n;
    let (sticks, proportions) = update_pi(&counts, concentration, rng)?;
    let mixture = MixtureState { sticks, proportions, assignments, atoms, concentration, base_mean, base_var };
    Ok(ChainState { params, mixture, record, network })
}
