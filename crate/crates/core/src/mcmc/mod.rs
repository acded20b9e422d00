//! Data-augmentation MCMC for the joint posterior of `η`, the mixture and
//! the unobserved parts of the epidemic and the contact network.
//!
//! One iteration cycles, in a fixed order: latent times, transmission
//! sources, unobserved contacts, atoms `γ`, assignments `Z`, `θ`, `η`, and
//! finally the hyperparameters `π`, `α`, `μ`, `σ²`.

pub mod augment;
pub mod conjugate;
pub mod eta;
pub mod geweke;
mod init;
pub mod population;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::epidemic::{transmission_log_likelihood, EpidemicParams, EpidemicRecord};
use crate::error::{invalid, Error, Result};
use crate::mixture::{Hyperpriors, MixtureState};
use crate::network::ContactNetwork;
use crate::observation::{build_transmission_prior, ObservedData, PriorMode, PriorWarning, Transmission, TransmissionPrior};

pub use augment::{contact_conditional, impute_contacts, impute_times, sample_transmission_sources, LatentTimes};
pub use conjugate::{truncated_gamma, update_alpha, update_mu, update_pi, update_sigma2};
pub use eta::{update_eta, Bounds, EtaPriors, ProposalScales};
pub use population::{assignment_log_weights, update_assignments, update_gamma_mh, DyadLayout, PairTable};

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Truncation level `K`.
    pub k: usize,
    pub hyperpriors: Hyperpriors,
    pub eta_priors: EtaPriors,
    pub proposal_scales: ProposalScales,
    pub seed: u64,
    pub transmission_prior_mode: PriorMode,
    /// Treat missing infectious times as latent instead of rejecting the data.
    pub impute_infectious: bool,
    /// On a transmission conditional with no admissible infector, move the
    /// member's exposure time into a feasible window instead of failing.
    pub repair: bool,
    /// Starting `η`; defaults to the prior means.
    pub initial_params: Option<EpidemicParams>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 10_000,
            burn_in: 1_000,
            thin: 10,
            k: 10,
            hyperpriors: Hyperpriors::default(),
            eta_priors: EtaPriors::default(),
            proposal_scales: ProposalScales::default(),
            seed: 0,
            transmission_prior_mode: PriorMode::Uniform,
            impute_infectious: false,
            repair: false,
            initial_params: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return invalid("thin must be at least 1");
        }
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return invalid(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.k == 0 {
            return invalid("truncation level K must be positive");
        }
        self.hyperpriors.validate()?;
        self.eta_priors.validate()?;
        self.proposal_scales.validate()?;
        if let Some(p) = &self.initial_params {
            p.validate()?;
        }
        Ok(())
    }

    /// Number of draws a run will retain.
    pub fn n_retained(&self) -> u64 {
        if self.iterations <= self.burn_in {
            return 0;
        }
        self.iterations / self.thin - self.burn_in / self.thin
    }
}

/// The full augmented state of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub params: EpidemicParams,
    pub mixture: MixtureState,
    pub record: EpidemicRecord,
    /// Contacts on materialized dyads; all other dyads are absent.
    pub network: ContactNetwork,
}

impl ChainState {
    pub fn theta(&self) -> Vec<f64> {
        self.mixture.assignments.iter().map(|&z| self.mixture.atoms[z]).collect()
    }
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraw {
    pub iteration: u64,
    pub params: EpidemicParams,
    pub mixture: MixtureState,
    pub imputed_record: EpidemicRecord,
    pub imputed_contacts: ContactNetwork,
    pub log_posterior: f64,
}

/// Accepted / proposed counts of one Metropolis block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCount {
    pub accepted: u64,
    pub proposed: u64,
}

impl MoveCount {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }

    fn add(&mut self, accepted: u64, proposed: u64) {
        self.accepted += accepted;
        self.proposed += proposed;
    }
}

/// Per-block acceptance statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub gamma: MoveCount,
    pub exposed_shape: MoveCount,
    pub exposed_scale: MoveCount,
    pub infectious_shape: MoveCount,
    pub infectious_scale: MoveCount,
    pub exposed_times: MoveCount,
    pub infectious_times: MoveCount,
    pub removed_times: MoveCount,
    /// Transmission conditionals that needed an exposure-time repair.
    pub repairs: u64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub draws: Vec<ChainDraw>,
    pub acceptance: Acceptance,
    pub iterations: u64,
    pub prior_warnings: Vec<PriorWarning>,
}

/// Unnormalized log posterior of an augmented state.
pub fn log_posterior(state: &ChainState, layout: &DyadLayout, config: &ChainConfig) -> f64 {
    let m = &state.mixture;
    let p = &state.params;
    let hp = &config.hyperpriors;
    let theta = state.theta();
    let mut lp = layout.log_likelihood(&state.network, &theta);
    for c in state.record.cases() {
        lp += p.exposed.log_density(c.infectious - c.exposed) + p.infectious.log_density(c.removed - c.infectious);
    }
    if state.record.n_infected() > 0 {
        lp += transmission_log_likelihood(p.beta, &state.record, &state.network).unwrap_or(f64::NEG_INFINITY);
    }
    lp += config.eta_priors.log_density(p);
    let (mu, s2) = (m.base_mean, m.base_var);
    lp += m
        .atoms
        .iter()
        .map(|g| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (g - mu).powi(2) / (2.0 * s2))
        .sum::<f64>();
    lp += m.assignments.iter().map(|&z| m.proportions[z].ln()).sum::<f64>();
    let alpha = m.concentration;
    lp += m.sticks[..m.k_max() - 1]
        .iter()
        .map(|v| alpha.ln() + (alpha - 1.0) * (1.0 - v).ln())
        .sum::<f64>();
    let log_gamma_pdf = |x: f64, shape: f64, rate: f64| {
        shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
    };
    lp += log_gamma_pdf(alpha, hp.alpha_shape, hp.alpha_rate);
    lp += -0.5 * (2.0 * std::f64::consts::PI * hp.mean_var).ln() - (mu - hp.mean_loc).powi(2) / (2.0 * hp.mean_var);
    lp += log_gamma_pdf(1.0 / s2, hp.prec_shape, hp.prec_rate);
    lp
}

/// A chain positioned at some augmented state.
#[derive(Debug, Clone)]
pub struct Sampler {
    config: ChainConfig,
    layout: DyadLayout,
    prior: TransmissionPrior,
    prior_warnings: Vec<PriorWarning>,
    latent: LatentTimes,
    source_observed: Vec<bool>,
    state: ChainState,
    acceptance: Acceptance,
    rng: ChaCha8Rng,
}

fn check_data(data: &ObservedData, config: &ChainConfig) -> Result<()> {
    config.validate()?;
    let diag = data.diagnostics();
    if diag.has_hard_errors() {
        return Err(Error::Inconsistent(diag.hard.join("; ")));
    }
    if !config.impute_infectious {
        if let Some(&m) = diag.missing_infectious.first() {
            return Err(Error::Config(format!(
                "member {} has no infectious time; enable infectious-time imputation",
                m + 1
            )));
        }
    }
    Ok(())
}

fn latent_times(data: &ObservedData, impute_infectious: bool) -> LatentTimes {
    let n = data.n_members;
    let mut latent = LatentTimes { exposed: vec![false; n], infectious: vec![false; n], removed: vec![false; n] };
    for c in &data.cases {
        latent.exposed[c.member] = c.exposed.is_none();
        latent.infectious[c.member] = impute_infectious && c.infectious.is_none();
        latent.removed[c.member] = c.removed.is_none();
    }
    latent
}

impl Sampler {
    /// Validates the inputs and builds the initial state.
    pub fn new(data: &ObservedData, config: &ChainConfig) -> Result<Self> {
        check_data(data, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layout = DyadLayout::new(data);
        let (prior, prior_warnings) = build_transmission_prior(config.transmission_prior_mode, data);
        let params = match config.initial_params {
            Some(p) => p,
            None => config.eta_priors.means()?,
        };
        let state = init::initial_state(
            data,
            &layout,
            &prior,
            params,
            &config.hyperpriors,
            config.k,
            config.impute_infectious,
            &mut rng,
        )?;
        Ok(Self::assemble(data, config, layout, prior, prior_warnings, state, rng))
    }

    /// Starts from a given state, e.g. one simulated from the prior.
    /// Contacts on non-materialized dyads are dropped.
    pub fn from_state(data: &ObservedData, config: &ChainConfig, state: ChainState, rng: ChaCha8Rng) -> Result<Self> {
        check_data(data, config)?;
        let layout = DyadLayout::new(data);
        let (prior, prior_warnings) = build_transmission_prior(config.transmission_prior_mode, data);
        let mut network = ContactNetwork::empty(data.n_members);
        for (i, j) in layout.pairs() {
            if state.network.has_edge(i, j) {
                network.set(i, j, true);
            }
        }
        let state = ChainState { network, ..state };
        state.record.validate_with_network(&state.network)?;
        state.mixture.validate()?;
        if state.mixture.k_max() != config.k {
            return Err(Error::DimensionMismatch { expected: config.k, actual: state.mixture.k_max() });
        }
        Ok(Self::assemble(data, config, layout, prior, prior_warnings, state, rng))
    }

    fn assemble(
        data: &ObservedData,
        config: &ChainConfig,
        layout: DyadLayout,
        prior: TransmissionPrior,
        prior_warnings: Vec<PriorWarning>,
        state: ChainState,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut source_observed = vec![false; data.n_members];
        for c in &data.cases {
            source_observed[c.member] = c.transmission != Transmission::Unobserved;
        }
        Sampler {
            config: config.clone(),
            layout,
            prior,
            prior_warnings,
            latent: latent_times(data, config.impute_infectious),
            source_observed,
            state,
            acceptance: Acceptance::default(),
            rng,
        }
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn layout(&self) -> &DyadLayout {
        &self.layout
    }

    pub fn acceptance(&self) -> &Acceptance {
        &self.acceptance
    }

    pub fn prior_warnings(&self) -> &[PriorWarning] {
        &self.prior_warnings
    }

    pub fn into_rng(self) -> ChaCha8Rng {
        self.rng
    }

    pub fn log_posterior(&self) -> f64 {
        log_posterior(&self.state, &self.layout, &self.config)
    }

    pub fn draw(&self, iteration: u64) -> ChainDraw {
        ChainDraw {
            iteration,
            params: self.state.params,
            mixture: self.state.mixture.clone(),
            imputed_record: self.state.record.clone(),
            imputed_contacts: self.state.network.clone(),
            log_posterior: self.log_posterior(),
        }
    }

    /// Moves a member's latent exposure time into the window of its earliest
    /// admissible contact and makes that contact its infector.
    fn repair_source(&mut self, member: usize) -> Result<()> {
        let failure = || Error::ZeroWeightTransmission { member: member + 1 };
        if !self.latent.exposed[member] {
            return Err(failure());
        }
        let record = &self.state.record;
        let target = *record.case(member).ok_or_else(failure)?;
        let best = record
            .cases()
            .iter()
            .filter(|c| c.member != member && self.state.network.has_edge(c.member, member))
            .filter(|c| c.infectious < c.removed.min(target.infectious))
            .filter(|c| match self.prior.row(member) {
                Some(crate::observation::PriorRow::Assessed(a)) => a == c.member,
                _ => true,
            })
            .min_by(|a, b| a.infectious.total_cmp(&b.infectious).then(a.member.cmp(&b.member)))
            .copied()
            .ok_or_else(failure)?;
        let slot = record.slot_of(member).expect("infected");
        let c = &mut self.state.record.cases_mut()[slot];
        c.exposed = 0.5 * (best.infectious + best.removed.min(target.infectious));
        c.infector = Some(best.member);
        self.acceptance.repairs += 1;
        Ok(())
    }

    /// One full sweep.
    pub fn step(&mut self) -> Result<()> {
        let scales = self.config.proposal_scales;
        let rng = &mut self.rng;
        let st = &mut self.state;

        let moves = impute_times(&mut st.record, &st.network, &st.params, &self.latent, scales.times, rng)?;
        self.acceptance.exposed_times.add(moves.exposed.0, moves.exposed.1);
        self.acceptance.infectious_times.add(moves.infectious.0, moves.infectious.1);
        self.acceptance.removed_times.add(moves.removed.0, moves.removed.1);

        let mut attempts = 0;
        loop {
            let st = &mut self.state;
            match sample_transmission_sources(&mut st.record, &st.network, &self.prior, &self.source_observed, &mut self.rng) {
                Ok(()) => break,
                Err(Error::ZeroWeightTransmission { member }) if self.config.repair && attempts < st.record.n_infected() => {
                    attempts += 1;
                    self.repair_source(member - 1)?;
                }
                Err(e) => return Err(e),
            }
        }

        let rng = &mut self.rng;
        let st = &mut self.state;
        let theta = st.theta();
        impute_contacts(&self.layout, &st.record, &theta, st.params.beta, &mut st.network, rng);

        let mix = &mut st.mixture;
        let table = PairTable::new(&self.layout, &st.network, &mix.assignments, mix.k_max());
        let acc = update_gamma_mh(&mut mix.atoms, &table, mix.base_mean, mix.base_var, scales.gamma, rng)?;
        self.acceptance.gamma.add(acc as u64, mix.k_max() as u64);

        update_assignments(&self.layout, &st.network, &mix.atoms, &mix.proportions, &mut mix.assignments, rng);

        let (params, eta_moves) =
            update_eta(&st.params, &st.record, &st.network, &self.config.eta_priors, &scales, rng)?;
        st.params = params;
        self.acceptance.exposed_shape.add(eta_moves.exposed_shape, 1);
        self.acceptance.exposed_scale.add(eta_moves.exposed_scale, 1);
        self.acceptance.infectious_shape.add(eta_moves.infectious_shape, 1);
        self.acceptance.infectious_scale.add(eta_moves.infectious_scale, 1);

        let hp = &self.config.hyperpriors;
        let (sticks, props) = update_pi(&mix.cluster_counts(), mix.concentration, rng)?;
        mix.sticks = sticks;
        mix.proportions = props;
        mix.concentration = update_alpha(&mix.proportions, hp, rng)?;
        mix.base_mean = update_mu(mix.base_var, &mix.atoms, hp, rng)?;
        mix.base_var = update_sigma2(mix.base_mean, &mix.atoms, hp, rng)?;
        Ok(())
    }
}

/// Initializes and runs one chain, keeping draws at iterations
/// `t > burn_in` with `t mod thin = 0` (1-based).
pub fn run_chain(data: &ObservedData, config: &ChainConfig) -> Result<ChainOutput> {
    let mut sampler = Sampler::new(data, config)?;
    let mut draws = Vec::with_capacity(config.n_retained().min(1 << 20) as usize);
    for t in 1..=config.iterations {
        sampler.step()?;
        if t > config.burn_in && t % config.thin == 0 {
            let draw = sampler.draw(t);
            debug_assert!(draw.imputed_record.validate_with_network(&draw.imputed_contacts).is_ok());
            draws.push(draw);
        }
    }
    Ok(ChainOutput {
        draws,
        acceptance: sampler.acceptance,
        iterations: config.iterations,
        prior_warnings: sampler.prior_warnings,
    })
}
