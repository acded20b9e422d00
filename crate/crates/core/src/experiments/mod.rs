//! Replicated simulation studies: interval coverage, estimation error against
//! the contact sample size, Dirichlet-process prior draws and
//! posterior-predictive checks.
//!
//! Replication `r` draws from its own ChaCha stream of the master seed, so
//! results do not depend on the worker count and are folded in replication order.

mod ppc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta_model::{expected_degrees, DegreeParams};
use crate::epidemic::{simulate_epidemic, EpidemicParams, EpidemicRecord, GammaPeriod};
use crate::error::{invalid, Error, Result};
use crate::mcmc::{run_chain, Bounds, ChainConfig, ChainDraw, EtaPriors, ProposalScales};
use crate::mixture::{sample_categorical, sample_truncated_dp};
use crate::network::{sample_network, ContactNetwork};
use crate::observation::{ego_centric_mask, FieldVisibility, ObservationMask, ObservedData};
use crate::relabel::{lex_min_assignment, relabel, RelabelReport};

pub use ppc::{degree_histogram, ppc_calibration, ppc_degrees, ppc_epidemic_max, subsample, PpcCalibration, PpcReplication};

/// Data-generating values of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthConfig {
    pub params: EpidemicParams,
    pub atoms: Vec<f64>,
    pub proportions: Vec<f64>,
    /// Use cluster sizes proportional to `proportions` instead of multinomial draws.
    pub fixed_sizes: bool,
    /// Epidemics with fewer infected members are redrawn.
    pub min_infected: usize,
}

impl TruthConfig {
    /// β = 2, η_E = (8, .25), η_I = (4, .25), γ = (−2, −1, 0), π = (.4, .3, .3).
    pub fn coverage_study() -> Self {
        TruthConfig {
            params: reference_params(),
            atoms: vec![-2.0, -1.0, 0.0],
            proportions: vec![0.4, 0.3, 0.3],
            fixed_sizes: false,
            min_infected: 5,
        }
    }

    /// Subpopulations in the ratio 127 : 50 : 10 with γ = (−3.5, −1.5, .5).
    pub fn error_study() -> Self {
        TruthConfig {
            params: reference_params(),
            atoms: vec![-3.5, -1.5, 0.5],
            proportions: vec![127.0 / 187.0, 50.0 / 187.0, 10.0 / 187.0],
            fixed_sizes: true,
            min_infected: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.atoms.is_empty() || self.atoms.len() != self.proportions.len() {
            return invalid("truth needs one proportion per atom");
        }
        if self.atoms.iter().any(|a| !a.is_finite()) {
            return invalid("truth atoms must be finite");
        }
        if self.proportions.iter().any(|&p| !(p >= 0.0 && p.is_finite())) || self.proportions.iter().sum::<f64>() <= 0.0 {
            return invalid("truth proportions must be non-negative with a positive sum");
        }
        Ok(())
    }

    fn sizes(&self, n: usize) -> Vec<usize> {
        // Largest-remainder rounding.
        let total: f64 = self.proportions.iter().sum();
        let exact: Vec<f64> = self.proportions.iter().map(|p| p / total * n as f64).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = n - sizes.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            sizes[k] += 1;
        }
        sizes
    }
}

fn reference_params() -> EpidemicParams {
    EpidemicParams {
        beta: 2.0,
        exposed: GammaPeriod { shape: 8.0, scale: 0.25 },
        infectious: GammaPeriod { shape: 4.0, scale: 0.25 },
    }
}

/// Uniform ranges used when fitting simulated data: the MERS ranges widened to
/// contain the simulation truth.
pub fn widened_priors() -> EtaPriors {
    EtaPriors {
        beta: Bounds::new(0.1, 8.0),
        exposed_shape: Bounds::new(1.0, 16.0),
        exposed_scale: Bounds::new(0.05, 3.0),
        infectious_shape: Bounds::new(1.0, 8.0),
        infectious_scale: Bounds::new(0.05, 7.5),
    }
}

/// Step sizes for the simulation studies. Shape and scale posteriors from a
/// few dozen cases are wide and strongly correlated, so the shape steps are
/// large and the scale steps small.
pub fn simulation_proposals() -> ProposalScales {
    ProposalScales {
        gamma: 0.5,
        exposed_shape: 1.0,
        exposed_scale: 0.03,
        infectious_shape: 0.5,
        infectious_scale: 0.03,
        times: 0.3,
    }
}

/// Complete simulated population and epidemic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    #[serde(with = "crate::serde_util::one_based")]
    pub assignments: Vec<usize>,
    pub theta: Vec<f64>,
    pub network: ContactNetwork,
    pub record: EpidemicRecord,
}

const MAX_REDRAWS: usize = 10_000;

pub fn simulate_truth<R: Rng + ?Sized>(cfg: &TruthConfig, n: usize, rng: &mut R) -> Result<Truth> {
    cfg.validate()?;
    if n == 0 {
        return invalid("population size must be positive");
    }
    let assignments: Vec<usize> = if cfg.fixed_sizes {
        cfg.sizes(n).iter().enumerate().flat_map(|(k, &s)| std::iter::repeat_n(k, s)).collect()
    } else {
        (0..n).map(|_| sample_categorical(&cfg.proportions, rng)).collect()
    };
    let theta: Vec<f64> = assignments.iter().map(|&z| cfg.atoms[z]).collect();
    let degree = DegreeParams::new(theta.clone())?;
    for _ in 0..MAX_REDRAWS {
        let network = sample_network(&degree, rng);
        let index = rng.random_range(0..n);
        let record = simulate_epidemic(&network, &cfg.params, index, rng)?;
        if record.n_infected() >= cfg.min_infected {
            return Ok(Truth { assignments, theta, network, record });
        }
    }
    Err(Error::InvalidParameter(format!(
        "no epidemic reached {} infected members in {MAX_REDRAWS} attempts",
        cfg.min_infected
    )))
}

/// Which contacts a design observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactDesign {
    None,
    /// Ego-centric sample of this many members.
    EgoCentric(usize),
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    pub fields: FieldVisibility,
    pub contacts: ContactDesign,
}

impl Default for Design {
    /// Exposure times, transmissions and contacts unobserved.
    fn default() -> Self {
        Design { fields: FieldVisibility::default(), contacts: ContactDesign::None }
    }
}

impl Design {
    pub fn fully_observed() -> Self {
        Design { fields: FieldVisibility::all(), contacts: ContactDesign::Full }
    }

    pub fn observe<R: Rng + ?Sized>(&self, truth: &Truth, rng: &mut R) -> Result<ObservedData> {
        let n = truth.network.n_members();
        let mask = match self.contacts {
            ContactDesign::None => ObservationMask::with_fields(n, self.fields),
            ContactDesign::EgoCentric(k) => ego_centric_mask(n, k, self.fields, rng)?,
            ContactDesign::Full => {
                let mut m = ObservationMask::fully_observed(n);
                let f = self.fields;
                m.obs_exposed = vec![f.exposed; n];
                m.obs_infectious = vec![f.infectious; n];
                m.obs_removed = vec![f.removed; n];
                m.obs_transmission = vec![f.transmission; n];
                m
            }
        };
        mask.apply(&truth.record, &truth.network)
    }
}

/// Settings shared by the replicated studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub truth: TruthConfig,
    pub n_members: usize,
    pub replications: usize,
    pub design: Design,
    /// Its seed is replaced per replication.
    pub chain: ChainConfig,
    /// Contact sample sizes of the error study.
    pub sample_sizes: Vec<usize>,
    /// Posterior-predictive interval level.
    pub ppc_level: f64,
    /// Predictive epidemics simulated per retained draw.
    pub ppc_per_draw: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            truth: TruthConfig::coverage_study(),
            n_members: 60,
            replications: 100,
            design: Design::default(),
            chain: ChainConfig {
                iterations: 20_000,
                burn_in: 2_000,
                thin: 20,
                k: 3,
                eta_priors: widened_priors(),
                proposal_scales: simulation_proposals(),
                ..ChainConfig::default()
            },
            sample_sizes: vec![0, 60],
            ppc_level: 0.9,
            ppc_per_draw: 1,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Error-versus-sample-size study: all event times observed, transmissions
    /// and contacts outside the ego-centric sample hidden.
    pub fn error_study() -> Self {
        ExperimentConfig {
            truth: TruthConfig::error_study(),
            replications: 50,
            design: Design { fields: FieldVisibility::times_only(), contacts: ContactDesign::None },
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        self.chain.validate()?;
        if self.n_members == 0 {
            return invalid("population size must be positive");
        }
        if let ContactDesign::EgoCentric(k) = self.design.contacts {
            if k > self.n_members {
                return invalid(format!("sample size {k} exceeds population size {}", self.n_members));
            }
        }
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n > self.n_members) {
            return invalid(format!("sample size {n} exceeds population size {}", self.n_members));
        }
        if !(self.ppc_level > 0.0 && self.ppc_level < 1.0) {
            return invalid("ppc level must lie in (0, 1)");
        }
        if self.ppc_per_draw == 0 {
            return invalid("ppc_per_draw must be positive");
        }
        Ok(())
    }

    /// Random stream of replication `r`.
    pub fn replication_rng(&self, r: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(r as u64 + 1);
        rng
    }

    fn chain_for<R: Rng + ?Sized>(&self, rng: &mut R) -> ChainConfig {
        ChainConfig { seed: rng.random(), ..self.chain.clone() }
    }
}

/// A replication that could not be completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub message: String,
}

/// Equal-tailed sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

/// Fitted label matched to each true cluster, maximizing the posterior
/// classification mass that lands on the true partition.
pub fn match_clusters(report: &RelabelReport, n_draws: usize, truth: &[usize], k_true: usize) -> Result<Vec<usize>> {
    let k_fit = report.reference_probabilities.first().map_or(0, |r| r.len());
    if k_true > k_fit {
        return invalid(format!("cannot match {k_true} true clusters with K = {k_fit}"));
    }
    let mut cost = vec![vec![0i128; k_fit]; k_fit];
    for (i, &z) in truth.iter().enumerate() {
        for (l, q) in report.reference_probabilities[i].iter().enumerate() {
            cost[z][l] -= (q * n_draws as f64).round() as i128;
        }
    }
    Ok(lex_min_assignment(&cost)[..k_true].to_vec())
}

/// Per-draw values of the tracked parameters, with γ matched to the true clusters.
fn parameter_draws(draws: &[ChainDraw], truth: &Truth, k_true: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let (relabeled, report) = relabel(draws)?;
    let labels = match_clusters(&report, draws.len(), &truth.assignments, k_true)?;
    let mut out = vec![
        ("beta".to_string(), draws.iter().map(|d| d.params.beta).collect()),
        ("exposed_shape".to_string(), draws.iter().map(|d| d.params.exposed.shape).collect()),
        ("exposed_scale".to_string(), draws.iter().map(|d| d.params.exposed.scale).collect()),
        ("infectious_shape".to_string(), draws.iter().map(|d| d.params.infectious.shape).collect()),
        ("infectious_scale".to_string(), draws.iter().map(|d| d.params.infectious.scale).collect()),
    ];
    for (k, &l) in labels.iter().enumerate() {
        out.push((format!("gamma_{}", k + 1), relabeled.iter().map(|d| d.mixture.atoms[l]).collect()));
    }
    Ok(out)
}

fn true_values(cfg: &TruthConfig) -> Vec<f64> {
    let p = &cfg.params;
    let mut v = vec![p.beta, p.exposed.shape, p.exposed.scale, p.infectious.shape, p.infectious.scale];
    v.extend(&cfg.atoms);
    v
}

fn fit_draws(cfg: &ExperimentConfig, data: &ObservedData, rng: &mut ChaCha8Rng) -> Result<Vec<ChainDraw>> {
    let out = run_chain(data, &cfg.chain_for(rng))?;
    if out.draws.is_empty() {
        return invalid("the chain retained no draws");
    }
    Ok(out.draws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub parameter: String,
    pub truth: f64,
    pub replications: usize,
    pub covered: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    pub failures: Vec<ReplicationFailure>,
}

/// Per-parameter (covered, interval width).
type CoverageOutcome = Vec<(String, bool, f64)>;

fn coverage_replication(cfg: &ExperimentConfig, r: usize) -> Result<CoverageOutcome> {
    let mut rng = cfg.replication_rng(r);
    let truth = simulate_truth(&cfg.truth, cfg.n_members, &mut rng)?;
    let data = cfg.design.observe(&truth, &mut rng)?;
    let draws = fit_draws(cfg, &data, &mut rng)?;
    let values = true_values(&cfg.truth);
    Ok(parameter_draws(&draws, &truth, cfg.truth.atoms.len())?
        .into_iter()
        .zip(values)
        .map(|((name, xs), t)| {
            let xs = sorted(xs);
            let (lo, hi) = (quantile(&xs, 0.025), quantile(&xs, 0.975));
            (name, lo <= t && t <= hi, hi - lo)
        })
        .collect())
}

/// Coverage of central 95% credible intervals over replicated simulations.
pub fn coverage_experiment(cfg: &ExperimentConfig) -> Result<CoverageTable> {
    cfg.validate()?;
    let results: Vec<Result<CoverageOutcome>> =
        (0..cfg.replications).into_par_iter().map(|r| coverage_replication(cfg, r)).collect();
    let values = true_values(&cfg.truth);
    let mut rows: Vec<CoverageRow> = Vec::new();
    let mut widths: Vec<f64> = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(outcome) => {
                if rows.is_empty() {
                    rows = outcome
                        .iter()
                        .zip(&values)
                        .map(|((name, _, _), &t)| CoverageRow {
                            parameter: name.clone(),
                            truth: t,
                            replications: 0,
                            covered: 0,
                            coverage: 0.0,
                            mean_width: 0.0,
                        })
                        .collect();
                    widths = vec![0.0; rows.len()];
                }
                for ((row, w), (_, hit, width)) in rows.iter_mut().zip(widths.iter_mut()).zip(outcome) {
                    row.replications += 1;
                    row.covered += hit as usize;
                    *w += width;
                }
            }
            Err(e) => failures.push(ReplicationFailure { replication: r, message: e.to_string() }),
        }
    }
    for (row, w) in rows.iter_mut().zip(widths) {
        row.coverage = row.covered as f64 / row.replications as f64;
        row.mean_width = w / row.replications as f64;
    }
    Ok(CoverageTable { rows, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub n: usize,
    pub parameter: String,
    pub mse_median: f64,
    pub mse_mean: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCurve {
    pub sample_sizes: Vec<usize>,
    pub rows: Vec<MseRow>,
    pub failures: Vec<ReplicationFailure>,
}

impl MseCurve {
    pub fn get(&self, n: usize, parameter: &str) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.n == n && r.parameter == parameter)
    }
}

/// Per sample size, per parameter: squared errors of the posterior median and mean.
type MseOutcome = Vec<Vec<(String, f64, f64)>>;

fn mse_replication(cfg: &ExperimentConfig, r: usize) -> Result<MseOutcome> {
    let mut rng = cfg.replication_rng(r);
    let truth = simulate_truth(&cfg.truth, cfg.n_members, &mut rng)?;
    let values = true_values(&cfg.truth);
    cfg.sample_sizes
        .iter()
        .map(|&n| {
            let design = Design { contacts: ContactDesign::EgoCentric(n), ..cfg.design };
            let data = design.observe(&truth, &mut rng)?;
            let draws = fit_draws(cfg, &data, &mut rng)?;
            Ok(parameter_draws(&draws, &truth, cfg.truth.atoms.len())?
                .into_iter()
                .zip(&values)
                .map(|((name, xs), &t)| {
                    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                    let median = quantile(&sorted(xs), 0.5);
                    (name, (median - t).powi(2), (mean - t).powi(2))
                })
                .collect())
        })
        .collect()
}

/// Mean squared error of posterior medians and means against the ego-centric
/// sample size. Every replication is scored at all sample sizes on the same
/// simulated epidemic; a replication failing at any size is dropped entirely.
pub fn mse_experiment(cfg: &ExperimentConfig) -> Result<MseCurve> {
    cfg.validate()?;
    let results: Vec<Result<MseOutcome>> =
        (0..cfg.replications).into_par_iter().map(|r| mse_replication(cfg, r)).collect();
    let mut sums: Vec<Vec<(String, f64, f64)>> = Vec::new();
    let mut ok = 0usize;
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(outcome) => {
                if sums.is_empty() {
                    sums = outcome
                        .iter()
                        .map(|per_n| per_n.iter().map(|(name, _, _)| (name.clone(), 0.0, 0.0)).collect())
                        .collect();
                }
                for (acc, per_n) in sums.iter_mut().zip(outcome) {
                    for (a, (_, med, mean)) in acc.iter_mut().zip(per_n) {
                        a.1 += med;
                        a.2 += mean;
                    }
                }
                ok += 1;
            }
            Err(e) => failures.push(ReplicationFailure { replication: r, message: e.to_string() }),
        }
    }
    let rows = cfg
        .sample_sizes
        .iter()
        .zip(sums)
        .flat_map(|(&n, acc)| {
            acc.into_iter().map(move |(parameter, med, mean)| MseRow {
                n,
                parameter,
                mse_median: med / ok as f64,
                mse_mean: mean / ok as f64,
                replications: ok,
            })
        })
        .collect();
    Ok(MseCurve { sample_sizes: cfg.sample_sizes.clone(), rows, failures })
}

/// One prior draw of the degree parameters and the expected degrees they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppDraw {
    pub theta: Vec<f64>,
    pub expected_degrees: Vec<f64>,
}

/// Draws `θ` from the truncated Dirichlet-process prior with `K = N`.
pub fn dpp_demo<R: Rng + ?Sized>(
    alpha: f64,
    mu: f64,
    sigma2: f64,
    n: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<DppDraw>> {
    if n == 0 {
        return invalid("population size must be positive");
    }
    (0..n_draws)
        .map(|_| {
            let dp = sample_truncated_dp(alpha, mu, sigma2, n, rng)?;
            let theta: Vec<f64> = (0..n).map(|_| dp.atoms[sample_categorical(&dp.proportions, rng)]).collect();
            let degrees = expected_degrees(&DegreeParams::new(theta.clone())?);
            Ok(DppDraw { theta, expected_degrees: degrees })
        })
        .collect()
}

#[cfg(test)]
mod tests;
