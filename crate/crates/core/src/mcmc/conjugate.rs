//! Conjugate Gibbs updates for the Dirichlet-process hyperparameters.
//!
//! Every Gamma here is shape–rate, unlike the shape–scale period durations.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{invalid, Error, Result};
use crate::mixture::{stick_breaking, Hyperpriors};

/// Sticks are kept strictly below one so later proportions stay positive.
const STICK_CAP: f64 = 1.0 - f64::EPSILON;

fn gamma_shape_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(format!("Gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

/// `α | π ~ Gamma(A₁ + K − 1, B₁ − log π_K)`.
pub fn update_alpha<R: Rng + ?Sized>(proportions: &[f64], hp: &Hyperpriors, rng: &mut R) -> Result<f64> {
    let k = proportions.len();
    let last = *proportions.last().ok_or_else(|| Error::InvalidSticks("empty proportions".into()))?;
    if !(last > 0.0) {
        return Err(Error::InvalidSticks(format!("π_K = {last}; sticks are degenerate")));
    }
    let shape = hp.alpha_shape + (k - 1) as f64;
    let rate = hp.alpha_rate - last.ln();
    let a = gamma_shape_rate(shape, rate, rng)?;
    Ok(a.max(f64::MIN_POSITIVE))
}

/// Posterior mean and variance of μ given σ² and the atoms.
pub fn mu_conditional(sigma2: f64, atoms: &[f64], hp: &Hyperpriors) -> (f64, f64) {
    let prec = 1.0 / hp.mean_var + atoms.len() as f64 / sigma2;
    let sum: f64 = atoms.iter().sum();
    ((hp.mean_loc / hp.mean_var + sum / sigma2) / prec, 1.0 / prec)
}

pub fn update_mu<R: Rng + ?Sized>(sigma2: f64, atoms: &[f64], hp: &Hyperpriors, rng: &mut R) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return invalid(format!("σ² must be positive, got {sigma2}"));
    }
    let (m, v) = mu_conditional(sigma2, atoms, hp);
    let n = Normal::new(m, v.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(n.sample(rng))
}

/// Shape and rate of the precision `1/σ²` given μ and the atoms.
pub fn precision_conditional(mu: f64, atoms: &[f64], hp: &Hyperpriors) -> (f64, f64) {
    let ss: f64 = atoms.iter().map(|g| (g - mu).powi(2)).sum();
    (hp.prec_shape + atoms.len() as f64 / 2.0, hp.prec_rate + ss / 2.0)
}

pub fn update_sigma2<R: Rng + ?Sized>(mu: f64, atoms: &[f64], hp: &Hyperpriors, rng: &mut R) -> Result<f64> {
    let (shape, rate) = precision_conditional(mu, atoms, hp);
    let prec = gamma_shape_rate(shape, rate, rng)?;
    Ok(1.0 / prec.max(f64::MIN_POSITIVE))
}

/// `V_k ~ Beta(1 + N_k, α + Σ_{j>k} N_j)` for `k < K`, `V_K = 1`.
pub fn update_pi<R: Rng + ?Sized>(counts: &[usize], alpha: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("concentration must be positive, got {alpha}"));
    }
    let k = counts.len();
    if k == 0 {
        return invalid("truncation level K must be positive");
    }
    let mut downstream: usize = counts.iter().sum();
    let mut sticks = Vec::with_capacity(k);
    for &n_k in &counts[..k - 1] {
        downstream -= n_k;
        let b = Beta::new(1.0 + n_k as f64, alpha + downstream as f64)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        sticks.push(b.sample(rng).clamp(f64::MIN_POSITIVE, STICK_CAP));
    }
    sticks.push(1.0);
    let props = stick_breaking(&sticks)?;
    Ok((sticks, props))
}

/// Draws from Gamma(shape, rate) restricted to `[lo, hi]`.
///
/// Plain rejection is tried first; when the interval carries little mass the
/// draw falls back to inverting the regularized incomplete gamma function.
pub fn truncated_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo < hi) || lo < 0.0 {
        return invalid(format!("bad truncation interval [{lo}, {hi}]"));
    }
    if rate == 0.0 && shape == 1.0 {
        if !hi.is_finite() {
            return invalid("flat density on an unbounded interval");
        }
        return Ok(lo + (hi - lo) * rng.random::<f64>());
    }
    if !(shape > 0.0 && rate > 0.0) {
        return invalid(format!("Gamma({shape}, {rate}) is not a proper density"));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for _ in 0..32 {
        let x = g.sample(rng);
        if x >= lo && x <= hi {
            return Ok(x);
        }
    }
    // Work in whichever tail keeps precision.
    let mode = (shape - 1.0).max(0.0) / rate;
    let upper = lo > mode;
    let tail = |x: f64| -> f64 {
        if x <= 0.0 {
            return if upper { 1.0 } else { 0.0 };
        }
        if !x.is_finite() {
            return if upper { 0.0 } else { 1.0 };
        }
        if upper {
            gamma_ur(shape, rate * x)
        } else {
            gamma_lr(shape, rate * x)
        }
    };
    let (f_lo, f_hi) = (tail(lo), tail(hi));
    let u: f64 = rng.random();
    let target = f_lo + u * (f_hi - f_lo);
    let mut a = lo;
    let mut b = if hi.is_finite() { hi } else { lo.max(mode) + 50.0 * (shape.sqrt() + 1.0) / rate };
    // The tail function is monotone: increasing for the lower CDF, decreasing for the survival.
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = tail(m);
        let below = if upper { fm > target } else { fm < target };
        if below {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-14 * b.abs().max(1e-300) {
            break;
        }
    }
    Ok((0.5 * (a + b)).clamp(lo, hi))
}
