//! Mapping from flat configuration keys to library settings.

use std::path::{Path, PathBuf};

use netseir_core::epidemic::{EpidemicParams, GammaPeriod};
use netseir_core::experiments::{ContactDesign, Design, ExperimentConfig, TruthConfig};
use netseir_core::io::KeyValues;
use netseir_core::mcmc::{Bounds, ChainConfig};
use netseir_core::observation::FieldVisibility;
use netseir_core::{Error, Result};

fn bounds(kv: &KeyValues, key: &str, default: Bounds) -> Result<Bounds> {
    match kv.list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok(Bounds::new(v[0], v[1])),
        Some(v) => Err(Error::Config(format!("{key}: expected `lo, hi`, got {} values", v.len()))),
    }
}

/// `mcmc.*`, `prior.*`, `hyper.*`, `proposal.*` and `init.*` on top of `base`.
pub fn chain_config(kv: &KeyValues, base: ChainConfig, seed: u64) -> Result<ChainConfig> {
    let mut c = base;
    c.seed = seed;
    c.iterations = kv.get_or("mcmc.iterations", c.iterations)?;
    c.burn_in = kv.get_or("mcmc.burn_in", c.burn_in)?;
    c.thin = kv.get_or("mcmc.thin", c.thin)?;
    c.k = kv.get_or("mcmc.k", c.k)?;
    c.impute_infectious = kv.get_or("mcmc.impute_infectious", c.impute_infectious)?;
    c.repair = kv.get_or("mcmc.repair", c.repair)?;
    c.transmission_prior_mode = kv.get_or("mcmc.transmission_prior", c.transmission_prior_mode)?;

    let p = &mut c.eta_priors;
    p.beta = bounds(kv, "prior.beta", p.beta)?;
    p.exposed_shape = bounds(kv, "prior.exposed_shape", p.exposed_shape)?;
    p.exposed_scale = bounds(kv, "prior.exposed_scale", p.exposed_scale)?;
    p.infectious_shape = bounds(kv, "prior.infectious_shape", p.infectious_shape)?;
    p.infectious_scale = bounds(kv, "prior.infectious_scale", p.infectious_scale)?;

    let h = &mut c.hyperpriors;
    h.alpha_shape = kv.get_or("hyper.alpha_shape", h.alpha_shape)?;
    h.alpha_rate = kv.get_or("hyper.alpha_rate", h.alpha_rate)?;
    h.mean_loc = kv.get_or("hyper.mean_loc", h.mean_loc)?;
    h.mean_var = kv.get_or("hyper.mean_var", h.mean_var)?;
    h.prec_shape = kv.get_or("hyper.prec_shape", h.prec_shape)?;
    h.prec_rate = kv.get_or("hyper.prec_rate", h.prec_rate)?;

    let s = &mut c.proposal_scales;
    s.gamma = kv.get_or("proposal.gamma", s.gamma)?;
    s.exposed_shape = kv.get_or("proposal.exposed_shape", s.exposed_shape)?;
    s.exposed_scale = kv.get_or("proposal.exposed_scale", s.exposed_scale)?;
    s.infectious_shape = kv.get_or("proposal.infectious_shape", s.infectious_shape)?;
    s.infectious_scale = kv.get_or("proposal.infectious_scale", s.infectious_scale)?;
    s.times = kv.get_or("proposal.times", s.times)?;

    let init = ["init.beta", "init.exposed_shape", "init.exposed_scale", "init.infectious_shape", "init.infectious_scale"];
    let values: Vec<Option<f64>> = init.iter().map(|k| kv.get(k)).collect::<Result<_>>()?;
    if values.iter().any(Option::is_some) {
        let v: Vec<f64> = values
            .into_iter()
            .map(|x| x.ok_or_else(|| Error::Config(format!("set all of {} or none", init.join(", ")))))
            .collect::<Result<_>>()?;
        c.initial_params = Some(EpidemicParams::new(v[0], GammaPeriod::new(v[1], v[2])?, GammaPeriod::new(v[3], v[4])?)?);
    }
    c.validate()?;
    Ok(c)
}

/// `truth.*` starting from `truth.preset` (`coverage_study` or `error_study`).
pub fn truth_config(kv: &KeyValues, default: TruthConfig) -> Result<TruthConfig> {
    let mut t = match kv.raw("truth.preset") {
        None => default,
        Some("coverage_study") => TruthConfig::coverage_study(),
        Some("error_study") => TruthConfig::error_study(),
        Some(other) => return Err(Error::Config(format!("unknown truth preset {other:?}"))),
    };
    let p = &mut t.params;
    p.beta = kv.get_or("truth.beta", p.beta)?;
    p.exposed.shape = kv.get_or("truth.exposed_shape", p.exposed.shape)?;
    p.exposed.scale = kv.get_or("truth.exposed_scale", p.exposed.scale)?;
    p.infectious.shape = kv.get_or("truth.infectious_shape", p.infectious.shape)?;
    p.infectious.scale = kv.get_or("truth.infectious_scale", p.infectious.scale)?;
    if let Some(a) = kv.list("truth.atoms")? {
        t.atoms = a;
    }
    if let Some(p) = kv.list("truth.proportions")? {
        t.proportions = p;
    }
    t.fixed_sizes = kv.get_or("truth.fixed_sizes", t.fixed_sizes)?;
    t.min_infected = kv.get_or("truth.min_infected", t.min_infected)?;
    t.validate()?;
    Ok(t)
}

pub fn fields(kv: &KeyValues, f: FieldVisibility) -> Result<FieldVisibility> {
    Ok(FieldVisibility {
        exposed: kv.get_or("design.exposed", f.exposed)?,
        infectious: kv.get_or("design.infectious", f.infectious)?,
        removed: kv.get_or("design.removed", f.removed)?,
        transmission: kv.get_or("design.transmission", f.transmission)?,
    })
}

/// `design.*`: visible fields and the contact design.
pub fn design(kv: &KeyValues, default: Design) -> Result<Design> {
    let fields = fields(kv, default.fields)?;
    let contacts = match kv.raw("design.contacts") {
        None => default.contacts,
        Some("none") => ContactDesign::None,
        Some("full") => ContactDesign::Full,
        Some("ego") => ContactDesign::EgoCentric(
            kv.get("design.sample_size")?.ok_or_else(|| Error::Config("design.contacts = ego needs design.sample_size".into()))?,
        ),
        Some(other) => return Err(Error::Config(format!("unknown contact design {other:?}"))),
    };
    Ok(Design { fields, contacts })
}

/// Replicated-study settings on top of a preset.
pub fn experiment_config(kv: &KeyValues, base: ExperimentConfig, seed: u64) -> Result<ExperimentConfig> {
    let mut e = base;
    e.seed = seed;
    e.truth = truth_config(kv, e.truth)?;
    e.n_members = kv.get_or("population.n", e.n_members)?;
    e.replications = kv.get_or("experiment.replications", e.replications)?;
    e.design = design(kv, e.design)?;
    e.sample_sizes = match kv.list("experiment.sample_sizes")? {
        Some(v) => v,
        None if base_is_full(&e.sample_sizes) => vec![0, e.n_members],
        None => e.sample_sizes,
    };
    e.ppc_level = kv.get_or("experiment.ppc_level", e.ppc_level)?;
    e.ppc_per_draw = kv.get_or("experiment.ppc_per_draw", e.ppc_per_draw)?;
    e.chain = chain_config(kv, e.chain, 0)?;
    e.validate()?;
    Ok(e)
}

/// The presets pair `n = 0` with the default population size.
fn base_is_full(sizes: &[usize]) -> bool {
    sizes == [0, ExperimentConfig::default().n_members]
}

/// Resolves a path from the configuration relative to the configuration file.
pub fn input_path(kv: &KeyValues, key: &str, config_dir: &Path) -> Result<PathBuf> {
    let raw = kv.raw(key).ok_or_else(|| Error::Config(format!("missing required key {key}")))?;
    let p = PathBuf::from(raw);
    Ok(if p.is_absolute() { p } else { config_dir.join(p) })
}

pub fn optional_input_path(kv: &KeyValues, key: &str, config_dir: &Path) -> Result<Option<PathBuf>> {
    if kv.contains(key) {
        input_path(kv, key, config_dir).map(Some)
    } else {
        Ok(None)
    }
}
