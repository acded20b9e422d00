//! Truncated Dirichlet-process mixture over degree parameters.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::beta_model::DegreeParams;
use crate::error::{invalid, Error, Result};
use crate::serde_util::one_based;

/// Tolerance for `Σ π_k = 1`.
pub const PROPORTION_TOLERANCE: f64 = 1e-12;

/// Hyperpriors: `α ~ Gamma(alpha_shape, rate alpha_rate)`, `μ ~ N(mean_loc, mean_var)`,
/// `1/σ² ~ Gamma(prec_shape, rate prec_rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperpriors {
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    pub mean_loc: f64,
    pub mean_var: f64,
    pub prec_shape: f64,
    pub prec_rate: f64,
}

impl Default for Hyperpriors {
    /// Gamma(5, 1), N(0, 1) and Gamma(1, 10) as used for the MERS analysis.
    fn default() -> Self {
        Hyperpriors {
            alpha_shape: 5.0,
            alpha_rate: 1.0,
            mean_loc: 0.0,
            mean_var: 1.0,
            prec_shape: 1.0,
            prec_rate: 10.0,
        }
    }
}

impl Hyperpriors {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_shape", self.alpha_shape),
            ("alpha_rate", self.alpha_rate),
            ("mean_var", self.mean_var),
            ("prec_shape", self.prec_shape),
            ("prec_rate", self.prec_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("hyperprior {name} must be positive and finite, got {v}"));
            }
        }
        if !self.mean_loc.is_finite() {
            return invalid("hyperprior mean_loc must be finite");
        }
        Ok(())
    }
}

/// State of the truncated Dirichlet-process prior.
///
/// Cluster labels are 0-based in memory and 1-based when serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub sticks: Vec<f64>,
    pub proportions: Vec<f64>,
    #[serde(with = "one_based")]
    pub assignments: Vec<usize>,
    pub atoms: Vec<f64>,
    pub concentration: f64,
    pub base_mean: f64,
    pub base_var: f64,
}

impl MixtureState {
    pub fn k_max(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_members(&self) -> usize {
        self.assignments.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.atoms.len();
        if k == 0 {
            return invalid("truncation level K must be positive");
        }
        if self.sticks.len() != k {
            return Err(Error::DimensionMismatch { expected: k, actual: self.sticks.len() });
        }
        if self.proportions.len() != k {
            return Err(Error::DimensionMismatch { expected: k, actual: self.proportions.len() });
        }
        let total: f64 = self.proportions.iter().sum();
        if (total - 1.0).abs() > PROPORTION_TOLERANCE {
            return Err(Error::InvalidSticks(format!("proportions sum to {total}")));
        }
        if let Some(&z) = self.assignments.iter().find(|&&z| z >= k) {
            return invalid(format!("cluster {} out of range 1..={k}", z + 1));
        }
        if !(self.concentration > 0.0) || !(self.base_var > 0.0) || !self.base_mean.is_finite() {
            return invalid("concentration and base variance must be positive");
        }
        Ok(())
    }

    /// Cluster sizes `N_k`.
    pub fn cluster_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k_max()];
        for &z in &self.assignments {
            counts[z] += 1;
        }
        counts
    }

    /// Relabels clusters: old label `k` becomes `perm[k]`. Atoms, proportions
    /// and assignments move together; sticks are recomputed from the
    /// permuted proportions.
    pub fn permute_labels(&mut self, perm: &[usize]) {
        let k = self.k_max();
        let mut atoms = vec![0.0; k];
        let mut props = vec![0.0; k];
        for old in 0..k {
            atoms[perm[old]] = self.atoms[old];
            props[perm[old]] = self.proportions[old];
        }
        for z in self.assignments.iter_mut() {
            *z = perm[*z];
        }
        self.atoms = atoms;
        self.sticks = sticks_from_proportions(&props);
        self.proportions = props;
    }
}

/// `π_k = V_k ∏_{j<k} (1 − V_j)` with `V_K = 1`.
pub fn stick_breaking(sticks: &[f64]) -> Result<Vec<f64>> {
    let k = sticks.len();
    if k == 0 {
        return Err(Error::InvalidSticks("empty stick vector".into()));
    }
    if sticks[k - 1] != 1.0 {
        return Err(Error::InvalidSticks(format!("last stick must be 1, got {}", sticks[k - 1])));
    }
    if let Some((i, v)) = sticks[..k - 1]
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && **v <= 1.0))
    {
        return Err(Error::InvalidSticks(format!("stick {} = {v} outside (0, 1]", i + 1)));
    }
    let mut remaining = 1.0;
    let mut props = Vec::with_capacity(k);
    for &v in sticks {
        props.push(v * remaining);
        remaining *= 1.0 - v;
    }
    Ok(props)
}

/// Inverse of [`stick_breaking`]; clusters after an exhausted stick get `V = 1`.
pub fn sticks_from_proportions(props: &[f64]) -> Vec<f64> {
    let k = props.len();
    let mut sticks = Vec::with_capacity(k);
    let mut used = 0.0;
    for (idx, &p) in props.iter().enumerate() {
        let remaining = 1.0 - used;
        let v = if idx + 1 == k || remaining <= 0.0 {
            1.0
        } else {
            (p / remaining).clamp(f64::MIN_POSITIVE, 1.0)
        };
        sticks.push(v);
        used += p;
    }
    sticks
}

/// One draw from the truncated Dirichlet process.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDpDraw {
    pub sticks: Vec<f64>,
    pub proportions: Vec<f64>,
    pub atoms: Vec<f64>,
}

/// `γ_k ~ N(μ, σ²)` i.i.d. and `V_k ~ Beta(1, α)` with `V_K := 1`.
pub fn sample_truncated_dp<R: Rng + ?Sized>(
    alpha: f64,
    mu: f64,
    sigma2: f64,
    k: usize,
    rng: &mut R,
) -> Result<TruncatedDpDraw> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("concentration must be positive, got {alpha}"));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) || !mu.is_finite() {
        return invalid("base distribution needs finite mean and positive variance");
    }
    if k == 0 {
        return invalid("truncation level K must be positive");
    }
    let beta = Beta::new(1.0, alpha).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let normal = Normal::new(mu, sigma2.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut sticks: Vec<f64> = (0..k - 1)
        .map(|_| beta.sample(rng).max(f64::MIN_POSITIVE))
        .collect();
    sticks.push(1.0);
    let atoms = (0..k).map(|_| normal.sample(rng)).collect();
    let proportions = stick_breaking(&sticks)?;
    Ok(TruncatedDpDraw { sticks, proportions, atoms })
}

/// Draws a categorical label from (possibly unnormalized) weights.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// `θ_i = γ_{Z_i}`.
pub fn materialize_theta(state: &MixtureState) -> Result<DegreeParams> {
    let k = state.k_max();
    let mut theta = Vec::with_capacity(state.n_members());
    for &z in &state.assignments {
        if z >= k {
            return invalid(format!("cluster {} out of range 1..={k}", z + 1));
        }
        theta.push(state.atoms[z]);
    }
    DegreeParams::new(theta)
}
