//! Updates of the epidemiological parameters `η = (β, η_E, η_I)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::epidemic::{exposure_statistic, DurationStats, EpidemicParams, EpidemicRecord, GammaPeriod};
use crate::error::{invalid, Error, Result};
use crate::network::ContactNetwork;

use super::conjugate::truncated_gamma;

/// Support of a uniform prior; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Bounds { lo, hi }
    }

    pub fn unbounded() -> Self {
        Bounds { lo: 0.0, hi: f64::INFINITY }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> Option<f64> {
        self.hi.is_finite().then(|| 0.5 * (self.lo + self.hi))
    }

    fn log_density(&self, x: f64) -> f64 {
        if !self.contains(x) {
            f64::NEG_INFINITY
        } else if self.hi.is_finite() {
            -(self.hi - self.lo).ln()
        } else {
            0.0
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo >= 0.0 && self.lo < self.hi) || self.lo.is_nan() || self.hi.is_nan() {
            return invalid(format!("prior bounds for {name} must satisfy 0 <= lo < hi, got [{}, {}]", self.lo, self.hi));
        }
        Ok(())
    }
}

/// Uniform priors on `β` and the shape/scale of both periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPriors {
    pub beta: Bounds,
    pub exposed_shape: Bounds,
    pub exposed_scale: Bounds,
    pub infectious_shape: Bounds,
    pub infectious_scale: Bounds,
}

impl Default for EtaPriors {
    /// The ranges used for the MERS analysis.
    fn default() -> Self {
        EtaPriors {
            beta: Bounds::new(0.1, 8.0),
            exposed_shape: Bounds::new(4.0, 8.0),
            exposed_scale: Bounds::new(0.75, 3.0),
            infectious_shape: Bounds::new(1.5, 8.0),
            infectious_scale: Bounds::new(2.5, 7.5),
        }
    }
}

impl EtaPriors {
    pub fn validate(&self) -> Result<()> {
        self.beta.validate("beta")?;
        self.exposed_shape.validate("exposed_shape")?;
        self.exposed_scale.validate("exposed_scale")?;
        self.infectious_shape.validate("infectious_shape")?;
        self.infectious_scale.validate("infectious_scale")
    }

    pub fn log_density(&self, p: &EpidemicParams) -> f64 {
        self.beta.log_density(p.beta)
            + self.exposed_shape.log_density(p.exposed.shape)
            + self.exposed_scale.log_density(p.exposed.scale)
            + self.infectious_shape.log_density(p.infectious.shape)
            + self.infectious_scale.log_density(p.infectious.scale)
    }

    /// Prior means, for starting the chain. Fails on unbounded supports.
    pub fn means(&self) -> Result<EpidemicParams> {
        let mid = |b: &Bounds, name: &str| {
            b.midpoint()
                .ok_or_else(|| Error::Config(format!("prior for {name} is unbounded; give an initial value")))
        };
        EpidemicParams::new(
            mid(&self.beta, "beta")?,
            GammaPeriod::new(mid(&self.exposed_shape, "exposed_shape")?, mid(&self.exposed_scale, "exposed_scale")?)?,
            GammaPeriod::new(
                mid(&self.infectious_shape, "infectious_shape")?,
                mid(&self.infectious_scale, "infectious_scale")?,
            )?,
        )
    }
}

/// Random-walk step sizes of the Metropolis blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub gamma: f64,
    pub exposed_shape: f64,
    pub exposed_scale: f64,
    pub infectious_shape: f64,
    pub infectious_scale: f64,
    pub times: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        ProposalScales {
            gamma: 0.1,
            exposed_shape: 0.1,
            exposed_scale: 0.1,
            infectious_shape: 0.1,
            infectious_scale: 0.1,
            times: 0.1,
        }
    }
}

impl ProposalScales {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("gamma", self.gamma),
            ("exposed_shape", self.exposed_shape),
            ("exposed_scale", self.exposed_scale),
            ("infectious_shape", self.infectious_shape),
            ("infectious_scale", self.infectious_scale),
            ("times", self.times),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("proposal scale {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Accepted counts of the four period-parameter proposals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EtaMoves {
    pub exposed_shape: u64,
    pub exposed_scale: u64,
    pub infectious_shape: u64,
    pub infectious_scale: u64,
}

/// Draws `β` from `Gamma(M, a)` restricted to the prior support.
pub fn sample_beta<R: Rng + ?Sized>(n_infected: usize, a: f64, support: Bounds, rng: &mut R) -> Result<f64> {
    let shape = n_infected.max(1) as f64;
    if a <= 0.0 && shape > 1.0 {
        return Err(Error::Inconsistent(format!(
            "zero infectious pressure with {n_infected} infected members"
        )));
    }
    truncated_gamma(shape, a.max(0.0), support.lo, support.hi, rng)
}

fn rw_period<R: Rng + ?Sized>(
    stats: &DurationStats,
    period: &mut GammaPeriod,
    shape_prior: Bounds,
    scale_prior: Bounds,
    scales: (f64, f64),
    rng: &mut R,
) -> (bool, bool) {
    let step = |cur: f64, s: f64, rng: &mut R| cur + Normal::new(0.0, s).expect("positive scale").sample(rng);
    let new_shape = step(period.shape, scales.0, rng);
    let mut shape_ok = false;
    if new_shape > 0.0 && shape_prior.contains(new_shape) {
        let prop = GammaPeriod { shape: new_shape, ..*period };
        if rng.random::<f64>().ln() < stats.log_likelihood(&prop) - stats.log_likelihood(period) {
            *period = prop;
            shape_ok = true;
        }
    }
    let new_scale = step(period.scale, scales.1, rng);
    let mut scale_ok = false;
    if new_scale > 0.0 && scale_prior.contains(new_scale) {
        let prop = GammaPeriod { scale: new_scale, ..*period };
        if rng.random::<f64>().ln() < stats.log_likelihood(&prop) - stats.log_likelihood(period) {
            *period = prop;
            scale_ok = true;
        }
    }
    (shape_ok, scale_ok)
}

/// Gibbs step for `β`, then random-walk Metropolis for each period parameter.
pub fn update_eta<R: Rng + ?Sized>(
    current: &EpidemicParams,
    record: &EpidemicRecord,
    network: &ContactNetwork,
    priors: &EtaPriors,
    scales: &ProposalScales,
    rng: &mut R,
) -> Result<(EpidemicParams, EtaMoves)> {
    let a = exposure_statistic(record, network)?;
    let beta = sample_beta(record.n_infected(), a, priors.beta, rng)?;
    let exposed_stats = DurationStats::from_durations(record.cases().iter().map(|c| c.infectious - c.exposed));
    let infectious_stats = DurationStats::from_durations(record.cases().iter().map(|c| c.removed - c.infectious));
    let mut next = EpidemicParams { beta, ..*current };
    let (es, esc) = rw_period(
        &exposed_stats,
        &mut next.exposed,
        priors.exposed_shape,
        priors.exposed_scale,
        (scales.exposed_shape, scales.exposed_scale),
        rng,
    );
    let (is, isc) = rw_period(
        &infectious_stats,
        &mut next.infectious,
        priors.infectious_shape,
        priors.infectious_scale,
        (scales.infectious_shape, scales.infectious_scale),
        rng,
    );
    let moves = EtaMoves {
        exposed_shape: es as u64,
        exposed_scale: esc as u64,
        infectious_shape: is as u64,
        infectious_scale: isc as u64,
    };
    Ok((next, moves))
}
