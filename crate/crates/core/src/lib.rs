//! Network-based SEIR epidemics on a degree-heterogeneous β-model population
//! with a truncated Dirichlet-process prior on the degree parameters.
//!
//! The crate covers forward simulation, likelihood-ignorable sampling designs,
//! a data-augmentation MCMC sampler for incompletely observed epidemics,
//! label-switching correction and the experiment harnesses built on them.

pub mod beta_model;
pub mod epidemic;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mixture;
pub mod mcmc;
pub mod network;
pub mod observation;
pub mod relabel;
mod serde_util;

pub use beta_model::{contact_probability, expected_degree, expected_degrees, network_log_density, DegreeParams};
pub use epidemic::{
    exposure_statistic, max_infectious, period_log_likelihood, simulate_epidemic, transmission_log_likelihood,
    Case, EpidemicParams, EpidemicRecord, GammaPeriod,
};
pub use error::{Error, Result};
pub use mixture::{materialize_theta, sample_truncated_dp, stick_breaking, Hyperpriors, MixtureState};
pub use network::{degrees, sample_network, ContactNetwork, DyadSet};
pub use observation::{
    build_transmission_prior, ego_centric_mask, link_tracing_mask, validate_mask, FieldVisibility, ObservationMask,
    ObservedData, PriorMode, TransmissionPrior,
};
pub use mcmc::{run_chain, ChainConfig, ChainDraw, ChainOutput, ChainState, EtaPriors, ProposalScales, Sampler};
pub use relabel::{relabel, RelabelReport};
