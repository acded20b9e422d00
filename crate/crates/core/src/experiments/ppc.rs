//! Posterior-predictive simulation from retained draws.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epidemic::{max_infectious, simulate_epidemic};
use crate::error::{invalid, Result};
use crate::mcmc::ChainDraw;
use crate::mixture::materialize_theta;
use crate::network::{sample_network, ContactNetwork};

use super::{fit_draws, quantile, simulate_truth, ExperimentConfig, ReplicationFailure};

/// `m` draws spaced evenly through the chain (all of them when `m` is larger).
pub fn subsample(draws: &[ChainDraw], m: usize) -> Vec<&ChainDraw> {
    if m >= draws.len() {
        return draws.iter().collect();
    }
    (0..m).map(|k| &draws[k * draws.len() / m]).collect()
}

/// Counts of members by degree, `0..N`.
pub fn degree_histogram(network: &ContactNetwork) -> Vec<usize> {
    let mut h = vec![0; network.n_members()];
    for &d in network.degrees() {
        h[d as usize] += 1;
    }
    h
}

fn non_empty(draws: &[&ChainDraw]) -> Result<()> {
    if draws.is_empty() {
        return invalid("posterior-predictive checks need at least one draw");
    }
    Ok(())
}

/// One predictive network per draw, summarized by its degree histogram.
pub fn ppc_degrees<R: Rng + ?Sized>(draws: &[&ChainDraw], rng: &mut R) -> Result<Vec<Vec<usize>>> {
    non_empty(draws)?;
    draws
        .iter()
        .map(|d| {
            let theta = materialize_theta(&d.mixture)?;
            Ok(degree_histogram(&sample_network(&theta, rng)))
        })
        .collect()
}

/// Peak number of simultaneously infectious members in predictive epidemics,
/// `per_draw` per draw, each on a fresh network from a random index case.
pub fn ppc_epidemic_max<R: Rng + ?Sized>(draws: &[&ChainDraw], per_draw: usize, rng: &mut R) -> Result<Vec<usize>> {
    non_empty(draws)?;
    let mut out = Vec::with_capacity(draws.len() * per_draw);
    for d in draws {
        let theta = materialize_theta(&d.mixture)?;
        for _ in 0..per_draw {
            let network = sample_network(&theta, rng);
            let index = rng.random_range(0..network.n_members());
            out.push(max_infectious(&simulate_epidemic(&network, &d.params, index, rng)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcReplication {
    pub replication: usize,
    pub realized: usize,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

/// How often the predictive interval of the epidemic peak covers the
/// peak of the simulated epidemic the posterior was fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcCalibration {
    pub level: f64,
    pub replications: Vec<PpcReplication>,
    pub coverage: f64,
    pub failures: Vec<ReplicationFailure>,
}

fn ppc_replication(cfg: &ExperimentConfig, r: usize) -> Result<PpcReplication> {
    let mut rng = cfg.replication_rng(r);
    let truth = simulate_truth(&cfg.truth, cfg.n_members, &mut rng)?;
    let data = cfg.design.observe(&truth, &mut rng)?;
    let draws = fit_draws(cfg, &data, &mut rng)?;
    let refs: Vec<&ChainDraw> = draws.iter().collect();
    let mut sims: Vec<f64> = ppc_epidemic_max(&refs, cfg.ppc_per_draw, &mut rng)?
        .into_iter()
        .map(|m| m as f64)
        .collect();
    sims.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.ppc_level) / 2.0;
    let (lower, upper) = (quantile(&sims, tail), quantile(&sims, 1.0 - tail));
    let realized = max_infectious(&truth.record);
    let x = realized as f64;
    Ok(PpcReplication { replication: r, realized, lower, upper, covered: lower <= x && x <= upper })
}

pub fn ppc_calibration(cfg: &ExperimentConfig) -> Result<PpcCalibration> {
    cfg.validate()?;
    let results: Vec<Result<PpcReplication>> =
        (0..cfg.replications).into_par_iter().map(|r| ppc_replication(cfg, r)).collect();
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(rep) => replications.push(rep),
            Err(e) => failures.push(ReplicationFailure { replication: r, message: e.to_string() }),
        }
    }
    let coverage = replications.iter().filter(|r| r.covered).count() as f64 / replications.len() as f64;
    Ok(PpcCalibration { level: cfg.ppc_level, replications, coverage, failures })
}
