//! Joint-distribution check of the sampler.
//!
//! Draws of (parameters, data) obtained by forward simulation from the prior
//! are compared with draws from a chain that alternates "simulate the data
//! given the parameters" with one sampler sweep. Both leave the same joint
//! distribution invariant, so any functional must agree in expectation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::Serialize;

use crate::beta_model::{contact_probability, DegreeParams};
use crate::epidemic::{simulate_epidemic, EpidemicParams, EpidemicRecord, GammaPeriod};
use crate::error::{Error, Result};
use crate::mixture::{sample_categorical, sample_truncated_dp, MixtureState};
use crate::network::{sample_network, ContactNetwork, DyadSet};
use crate::observation::{FieldVisibility, ObservationMask, ObservedData};

use super::{Bounds, ChainConfig, ChainState, Sampler};

/// Population size, sampler settings and design of the check.
#[derive(Debug, Clone)]
pub struct GewekeSetup {
    pub n_members: usize,
    pub config: ChainConfig,
    /// Members whose contacts are observed.
    pub sampled: Vec<usize>,
    pub samples: usize,
    /// Sampler sweeps between data refreshes.
    pub sweeps: usize,
    pub batch: usize,
    /// Also hide the removal times of every case but the index case.
    pub hide_removals: bool,
    /// Hide the infectious times of every case but the index case; needs
    /// infectious-time imputation switched on.
    pub hide_infectious: bool,
}

/// Comparison of one functional.
#[derive(Debug, Clone, Serialize)]
pub struct GewekeStat {
    pub name: &'static str,
    pub forward_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

/// Functionals compared; the first four are the headline checks.
pub const FUNCTIONALS: [&str; 9] = [
    "beta",
    "gamma_1",
    "alpha",
    "mean_degree",
    "mu",
    "sigma2",
    "exposed_mean",
    "infectious_mean",
    "mean_exposed_duration",
];

fn uniform<R: Rng + ?Sized>(b: Bounds, rng: &mut R) -> f64 {
    b.lo + (b.hi - b.lo) * rng.random::<f64>()
}

/// One draw of `η` and the mixture from the prior.
pub fn prior_draw<R: Rng + ?Sized>(config: &ChainConfig, n: usize, rng: &mut R) -> Result<(EpidemicParams, MixtureState)> {
    let p = &config.eta_priors;
    let params = EpidemicParams::new(
        uniform(p.beta, rng),
        GammaPeriod::new(uniform(p.exposed_shape, rng), uniform(p.exposed_scale, rng))?,
        GammaPeriod::new(uniform(p.infectious_shape, rng), uniform(p.infectious_scale, rng))?,
    )?;
    let hp = &config.hyperpriors;
    let err = |e: rand_distr::GammaError| Error::InvalidParameter(e.to_string());
    let alpha = Gamma::new(hp.alpha_shape, 1.0 / hp.alpha_rate).map_err(err)?.sample(rng);
    let mu = Normal::new(hp.mean_loc, hp.mean_var.sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    let prec = Gamma::new(hp.prec_shape, 1.0 / hp.prec_rate).map_err(err)?.sample(rng);
    let dp = sample_truncated_dp(alpha, mu, 1.0 / prec, config.k, rng)?;
    let assignments = (0..n).map(|_| sample_categorical(&dp.proportions, rng)).collect();
    let mixture = MixtureState {
        sticks: dp.sticks,
        proportions: dp.proportions,
        assignments,
        atoms: dp.atoms,
        concentration: alpha,
        base_mean: mu,
        base_var: 1.0 / prec,
    };
    Ok((params, mixture))
}

fn simulate_data<R: Rng + ?Sized>(
    params: &EpidemicParams,
    mixture: &MixtureState,
    sampled: &[usize],
    hide: (bool, bool),
    rng: &mut R,
) -> Result<(ObservedData, EpidemicRecord, ContactNetwork)> {
    let n = mixture.n_members();
    let theta = DegreeParams::new(mixture.assignments.iter().map(|&z| mixture.atoms[z]).collect())?;
    let network = sample_network(&theta, rng);
    let index = rng.random_range(0..n);
    let record = simulate_epidemic(&network, params, index, rng)?;
    let fields = FieldVisibility { exposed: false, infectious: true, removed: true, transmission: false };
    let mut mask = ObservationMask::with_fields(n, fields);
    mask.obs_exposed[index] = true;
    if hide.0 {
        mask.obs_removed.iter_mut().for_each(|r| *r = false);
        mask.obs_removed[index] = true;
    }
    if hide.1 {
        mask.obs_infectious.iter_mut().for_each(|r| *r = false);
        mask.obs_infectious[index] = true;
    }
    for &m in sampled {
        mask.observe_member_contacts(m);
    }
    mask.sampled = sampled.to_vec();
    let data = mask.apply(&record, &network)?;
    Ok((data, record, network))
}

fn functionals(
    params: &EpidemicParams,
    mixture: &MixtureState,
    record: &EpidemicRecord,
    network: &ContactNetwork,
) -> [f64; 9] {
    let n = network.n_members() as f64;
    let durations: f64 = record.cases().iter().map(|c| c.infectious - c.exposed).sum();
    [
        params.beta,
        mixture.atoms[0],
        mixture.concentration,
        2.0 * network.n_edges() as f64 / n,
        mixture.base_mean,
        mixture.base_var.min(1e3),
        params.exposed.mean(),
        params.infectious.mean(),
        durations / record.n_infected() as f64,
    ]
}

/// Fills the non-materialized dyads from `p(y | θ)`.
fn complete_network<R: Rng + ?Sized>(state: &ChainState, observed: &DyadSet, rng: &mut R) -> ContactNetwork {
    let n = state.network.n_members();
    let theta = state.theta();
    let mut net = state.network.clone();
    let infected = |m: usize| state.record.is_infected(m);
    for i in 0..n {
        for j in (i + 1)..n {
            if infected(i) || infected(j) || observed.contains(i, j) {
                continue;
            }
            let p = contact_probability(theta[i], theta[j]);
            if rng.random::<f64>() < p {
                net.set(i, j, true);
            }
        }
    }
    net
}

fn mean_and_se(xs: &[f64], batch: usize) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let batches: Vec<f64> = xs.chunks_exact(batch).map(|c| c.iter().sum::<f64>() / batch as f64).collect();
    let b = batches.len() as f64;
    let var = batches.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

/// Runs both simulators and returns a z-score per functional.
pub fn geweke_test(setup: &GewekeSetup, seed: u64) -> Result<Vec<GewekeStat>> {
    let n = setup.n_members;
    let mut forward = vec![Vec::with_capacity(setup.samples); FUNCTIONALS.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..setup.samples {
        let (params, mixture) = prior_draw(&setup.config, n, &mut rng)?;
        let (_, record, network) = simulate_data(&params, &mixture, &setup.sampled, (setup.hide_removals, setup.hide_infectious), &mut rng)?;
        for (v, f) in forward.iter_mut().zip(functionals(&params, &mixture, &record, &network)) {
            v.push(f);
        }
    }

    let mut chain = vec![Vec::with_capacity(setup.samples); FUNCTIONALS.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (mut params, mut mixture) = prior_draw(&setup.config, n, &mut rng)?;
    for _ in 0..setup.samples {
        let (data, record, network) = simulate_data(&params, &mixture, &setup.sampled, (setup.hide_removals, setup.hide_infectious), &mut rng)?;
        let state = ChainState { params, mixture: mixture.clone(), record, network };
        let mut sampler = Sampler::from_state(&data, &setup.config, state, rng)?;
        for _ in 0..setup.sweeps {
            sampler.step()?;
        }
        let st = sampler.state().clone();
        rng = sampler.into_rng();
        let full = complete_network(&st, &data.contacts.observed, &mut rng);
        for (v, f) in chain.iter_mut().zip(functionals(&st.params, &st.mixture, &st.record, &full)) {
            v.push(f);
        }
        params = st.params;
        mixture = st.mixture;
    }

    Ok(FUNCTIONALS
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            let (fm, fse) = mean_and_se(&forward[k], 1);
            let (cm, cse) = mean_and_se(&chain[k], setup.batch);
            GewekeStat { name, forward_mean: fm, chain_mean: cm, z: (fm - cm) / (fse * fse + cse * cse).sqrt() }
        })
        .collect())
}
