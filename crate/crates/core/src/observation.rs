//! What was observed: masks, ignorable sampling designs and transmission priors.
//!
//! Both sampling designs below decide what to observe from the random stream
//! and from data already observed (contacts of sampled members), never from
//! unobserved values, so the observed-data posterior can ignore them.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epidemic::{Case, EpidemicRecord};
use crate::error::{Error, Result};
use crate::network::{n_dyads, ContactNetwork, DyadSet};

/// Which epidemiological fields of infected members a design reveals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldVisibility {
    pub exposed: bool,
    pub infectious: bool,
    pub removed: bool,
    pub transmission: bool,
}

impl Default for FieldVisibility {
    /// Exposure times and transmissions hidden; infectious and removal times observed.
    fn default() -> Self {
        FieldVisibility { exposed: false, infectious: true, removed: true, transmission: false }
    }
}

impl FieldVisibility {
    pub fn all() -> Self {
        FieldVisibility { exposed: true, infectious: true, removed: true, transmission: true }
    }

    pub fn times_only() -> Self {
        FieldVisibility { exposed: true, infectious: true, removed: true, transmission: false }
    }
}

/// Observed/unobserved indicators for times, transmissions and contacts.
///
/// Per-member vectors are indexed by member and only consulted for infected members.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    pub n_members: usize,
    pub obs_exposed: Vec<bool>,
    pub obs_infectious: Vec<bool>,
    pub obs_removed: Vec<bool>,
    pub obs_transmission: Vec<bool>,
    pub obs_contacts: DyadSet,
    /// Sorted, 0-based.
    pub sampled: Vec<usize>,
}

impl ObservationMask {
    /// Uniform field visibility with no observed contacts.
    pub fn with_fields(n_members: usize, fields: FieldVisibility) -> Self {
        ObservationMask {
            n_members,
            obs_exposed: vec![fields.exposed; n_members],
            obs_infectious: vec![fields.infectious; n_members],
            obs_removed: vec![fields.removed; n_members],
            obs_transmission: vec![fields.transmission; n_members],
            obs_contacts: DyadSet::new(n_members),
            sampled: Vec::new(),
        }
    }

    pub fn fully_observed(n_members: usize) -> Self {
        let mut m = ObservationMask::with_fields(n_members, FieldVisibility::all());
        m.obs_contacts = DyadSet::full(n_members);
        m.sampled = (0..n_members).collect();
        m
    }

    /// Marks every dyad incident to `member` as observed.
    pub fn observe_member_contacts(&mut self, member: usize) {
        for j in 0..self.n_members {
            if j != member {
                self.obs_contacts.set(member, j, true);
            }
        }
    }

    pub fn n_observed_dyads(&self) -> usize {
        self.obs_contacts.len()
    }

    /// Restricts the mask to what it reveals of `record` and `network`.
    pub fn apply(&self, record: &EpidemicRecord, network: &ContactNetwork) -> Result<ObservedData> {
        if record.n_members() != self.n_members || network.n_members() != self.n_members {
            return Err(Error::DimensionMismatch { expected: self.n_members, actual: record.n_members() });
        }
        let cases = record
            .cases()
            .iter()
            .map(|c| {
                let m = c.member;
                ObservedCase {
                    member: m,
                    exposed: self.obs_exposed[m].then_some(c.exposed),
                    infectious: self.obs_infectious[m].then_some(c.infectious),
                    removed: self.obs_removed[m].then_some(c.removed),
                    transmission: if self.obs_transmission[m] {
                        match c.infector {
                            None => Transmission::Index,
                            Some(i) => Transmission::From(i),
                        }
                    } else {
                        Transmission::Unobserved
                    },
                    assessed_infector: None,
                }
            })
            .collect();
        let mut present = DyadSet::new(self.n_members);
        for (i, j) in self.obs_contacts.iter() {
            if network.has_edge(i, j) {
                present.set(i, j, true);
            }
        }
        Ok(ObservedData {
            n_members: self.n_members,
            cases,
            contacts: ObservedContacts { observed: self.obs_contacts.clone(), present },
            sampled: self.sampled.clone(),
        })
    }
}

/// Observed transmission source of a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmission {
    Unobserved,
    Index,
    From(usize),
}

/// Partially observed times and source of one infected member.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedCase {
    pub member: usize,
    pub exposed: Option<f64>,
    pub infectious: Option<f64>,
    pub removed: Option<f64>,
    pub transmission: Transmission,
    /// External assessment of the infector (e.g. by physicians); prior input only.
    pub assessed_infector: Option<usize>,
}

/// Observed dyads and, among them, those that are contacts.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedContacts {
    pub observed: DyadSet,
    pub present: DyadSet,
}

impl ObservedContacts {
    pub fn none(n: usize) -> Self {
        ObservedContacts { observed: DyadSet::new(n), present: DyadSet::new(n) }
    }

    /// `Some(y_ij)` when the dyad is observed.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<bool> {
        self.observed.contains(i, j).then(|| self.present.contains(i, j))
    }
}

/// The observed-data bundle handed to the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub n_members: usize,
    /// Sorted by member.
    pub cases: Vec<ObservedCase>,
    pub contacts: ObservedContacts,
    pub sampled: Vec<usize>,
}

impl ObservedData {
    pub fn case(&self, member: usize) -> Option<&ObservedCase> {
        self.cases
            .binary_search_by_key(&member, |c| c.member)
            .ok()
            .map(|k| &self.cases[k])
    }

    pub fn is_infected(&self, member: usize) -> bool {
        self.case(member).is_some()
    }

    /// The mask implied by which values are present.
    pub fn mask(&self) -> ObservationMask {
        let n = self.n_members;
        let mut m = ObservationMask::with_fields(
            n,
            FieldVisibility { exposed: false, infectious: false, removed: false, transmission: false },
        );
        for c in &self.cases {
            m.obs_exposed[c.member] = c.exposed.is_some();
            m.obs_infectious[c.member] = c.infectious.is_some();
            m.obs_removed[c.member] = c.removed.is_some();
            m.obs_transmission[c.member] = c.transmission != Transmission::Unobserved;
        }
        m.obs_contacts = self.contacts.observed.clone();
        m.sampled = self.sampled.clone();
        m
    }

    /// Member treated as the index case: an observed index, otherwise the
    /// earliest observed infectious time (every infector becomes infectious
    /// before anyone it infects).
    pub fn index_member(&self) -> Option<usize> {
        if let Some(c) = self.cases.iter().find(|c| c.transmission == Transmission::Index) {
            return Some(c.member);
        }
        let anchor = |c: &ObservedCase| c.infectious.or(c.exposed).or(c.removed);
        self.cases
            .iter()
            .filter_map(|c| anchor(c).map(|t| (t, c.member)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, m)| m)
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let mut d = Diagnostics {
            unobserved_dyads: n_dyads(self.n_members) - self.contacts.observed.len(),
            ..Diagnostics::default()
        };
        for c in &self.cases {
            if c.exposed.is_none() {
                d.missing_exposure.push(c.member);
            }
            if c.infectious.is_none() {
                d.missing_infectious.push(c.member);
            }
            if c.removed.is_none() {
                d.missing_removal.push(c.member);
            }
            if c.transmission == Transmission::Unobserved {
                d.unobserved_transmissions.push(c.member);
            }
            let times = [c.exposed, c.infectious, c.removed];
            let present: Vec<f64> = times.iter().flatten().copied().collect();
            if present.windows(2).any(|w| !(w[0] < w[1])) {
                d.hard.push(format!("member {}: observed times violate E < I < R", c.member + 1));
            }
            if let Transmission::From(i) = c.transmission {
                let Some(src) = self.case(i) else {
                    d.hard.push(format!("member {}: observed infector {} is not infected", c.member + 1, i + 1));
                    continue;
                };
                match self.contacts.get(i, c.member) {
                    Some(false) => d.hard.push(format!(
                        "transmission {} -> {} observed but the contact is observed absent",
                        i + 1,
                        c.member + 1
                    )),
                    None => d.implied.push(format!(
                        "contact {} - {} is implied by an observed transmission",
                        i + 1,
                        c.member + 1
                    )),
                    Some(true) => {}
                }
                if let (Some(e), Some(ii)) = (c.exposed, src.infectious) {
                    if !(ii < e) {
                        d.hard.push(format!("transmission {} -> {}: exposure before infector is infectious", i + 1, c.member + 1));
                    }
                }
                if let (Some(e), Some(r)) = (c.exposed, src.removed) {
                    if !(e < r) {
                        d.hard.push(format!("transmission {} -> {}: exposure after infector's removal", i + 1, c.member + 1));
                    }
                }
            }
            if let Some(a) = c.assessed_infector {
                if !self.is_infected(a) || a == c.member {
                    d.hard.push(format!("member {}: assessed infector {} is not another infected member", c.member + 1, a + 1));
                }
            }
        }
        let n_index = self.cases.iter().filter(|c| c.transmission == Transmission::Index).count();
        if n_index > 1 {
            d.hard.push(format!("{n_index} members observed as index case"));
        }
        d
    }
}

/// Consistency report for observed data. Member lists are 0-based in memory
/// and 1-based when serialized.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Probability-zero configurations.
    pub hard: Vec<String>,
    /// Values not marked observed but implied by observed ones.
    pub implied: Vec<String>,
    pub unobserved_dyads: usize,
    #[serde(serialize_with = "crate::serde_util::one_based::serialize")]
    pub missing_exposure: Vec<usize>,
    #[serde(serialize_with = "crate::serde_util::one_based::serialize")]
    pub missing_infectious: Vec<usize>,
    #[serde(serialize_with = "crate::serde_util::one_based::serialize")]
    pub missing_removal: Vec<usize>,
    #[serde(serialize_with = "crate::serde_util::one_based::serialize")]
    pub unobserved_transmissions: Vec<usize>,
}

impl Diagnostics {
    pub fn is_empty(&self) -> bool {
        self.hard.is_empty()
            && self.implied.is_empty()
            && self.unobserved_dyads == 0
            && self.missing_exposure.is_empty()
            && self.missing_infectious.is_empty()
            && self.missing_removal.is_empty()
            && self.unobserved_transmissions.is_empty()
    }

    pub fn has_hard_errors(&self) -> bool {
        !self.hard.is_empty()
    }
}

/// Checks a mask against the values it would reveal.
pub fn validate_mask(mask: &ObservationMask, record: &EpidemicRecord, network: &ContactNetwork) -> Result<Diagnostics> {
    if mask.sampled.iter().any(|&s| s >= mask.n_members) {
        return Err(Error::Inconsistent("sampled member outside the population".into()));
    }
    Ok(mask.apply(record, network)?.diagnostics())
}

fn sample_members<R: Rng + ?Sized>(n_members: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n > n_members {
        return Err(Error::InvalidParameter(format!("sample size {n} exceeds population size {n_members}")));
    }
    let mut members = index::sample(rng, n_members, n).into_vec();
    members.sort_unstable();
    Ok(members)
}

/// Simple random sample of `n` members without replacement; all dyads incident
/// to a sampled member are observed.
pub fn ego_centric_mask<R: Rng + ?Sized>(
    n_members: usize,
    n: usize,
    fields: FieldVisibility,
    rng: &mut R,
) -> Result<ObservationMask> {
    let sampled = sample_members(n_members, n, rng)?;
    let mut mask = ObservationMask::with_fields(n_members, fields);
    for &s in &sampled {
        mask.observe_member_contacts(s);
    }
    mask.sampled = sampled;
    Ok(mask)
}

/// k-wave link tracing: wave 0 is an ego-centric sample of size `n0`; wave `l`
/// adds every contact of wave `l − 1`.
pub fn link_tracing_mask<R: Rng + ?Sized>(
    network: &ContactNetwork,
    n0: usize,
    waves: usize,
    fields: FieldVisibility,
    rng: &mut R,
) -> Result<ObservationMask> {
    let n_members = network.n_members();
    let wave0 = sample_members(n_members, n0, rng)?;
    let mut in_sample = vec![false; n_members];
    for &s in &wave0 {
        in_sample[s] = true;
    }
    let mut frontier = wave0;
    for _ in 0..waves {
        let mut next = Vec::new();
        for &m in &frontier {
            for c in network.neighbors(m) {
                if !in_sample[c] {
                    in_sample[c] = true;
                    next.push(c);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        frontier = next;
    }
    let mut mask = ObservationMask::with_fields(n_members, fields);
    let sampled: Vec<usize> = (0..n_members).filter(|&m| in_sample[m]).collect();
    for &s in &sampled {
        mask.observe_member_contacts(s);
    }
    mask.sampled = sampled;
    Ok(mask)
}

/// How prior infector probabilities are specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// Assessed infectors get probability one; unassessed members are uniform.
    Doctor,
    /// Uniform over feasible infectors for everyone.
    #[default]
    Uniform,
}

impl std::str::FromStr for PriorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doctor" | "a" => Ok(PriorMode::Doctor),
            "uniform" | "b" => Ok(PriorMode::Uniform),
            other => Err(Error::Config(format!("unknown transmission prior mode {other:?}"))),
        }
    }
}

/// Prior row for one non-index infected member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorRow {
    Assessed(usize),
    /// `1/M_j` over infected members whose infectious window contains `E_j`.
    Uniform,
}

/// Prior probabilities `φ(i infected j)`; feasibility is evaluated against
/// the current (possibly imputed) times.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPrior {
    rows: Vec<Option<PriorRow>>,
}

/// An assessment that could not be honored and was replaced by a uniform row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorWarning {
    #[serde(with = "crate::serde_util::one_based_scalar")]
    pub member: usize,
    #[serde(with = "crate::serde_util::one_based_scalar")]
    pub assessed_infector: usize,
    pub reason: String,
}

impl TransmissionPrior {
    pub fn row(&self, member: usize) -> Option<PriorRow> {
        self.rows.get(member).copied().flatten()
    }

    /// `φ(· infected j)` over feasible candidates at the times in `record`.
    pub fn probabilities(&self, member: usize, record: &EpidemicRecord) -> Vec<(usize, f64)> {
        let Some(target) = record.case(member) else { return Vec::new() };
        match self.row(member) {
            None => Vec::new(),
            Some(PriorRow::Assessed(i)) => vec![(i, 1.0)],
            Some(PriorRow::Uniform) => {
                let feasible: Vec<usize> = record
                    .cases()
                    .iter()
                    .filter(|c| c.member != member && c.can_infect_at(target.exposed))
                    .map(|c| c.member)
                    .collect();
                let p = 1.0 / feasible.len().max(1) as f64;
                feasible.into_iter().map(|i| (i, p)).collect()
            }
        }
    }

    /// `φ(i infected j)` at the current times.
    pub fn weight(&self, infector: &Case, target: &Case) -> f64 {
        match self.row(target.member) {
            Some(PriorRow::Assessed(i)) => (i == infector.member) as u8 as f64,
            Some(PriorRow::Uniform) => infector.can_infect_at(target.exposed) as u8 as f64,
            None => 0.0,
        }
    }
}

/// Whether `infector` can have infected `target` given the observed times.
/// Unknown times are treated permissively; an unknown exposure time only
/// requires the infector to turn infectious first.
fn feasible_at_observed(infector: &ObservedCase, target: &ObservedCase) -> bool {
    let lower_ok = match (infector.infectious, target.exposed.or(target.infectious)) {
        (Some(ii), Some(t)) => ii < t,
        _ => true,
    };
    let upper_ok = match (target.exposed, infector.removed) {
        (Some(e), Some(r)) => e < r,
        _ => true,
    };
    lower_ok && upper_ok
}

/// Builds the infector prior for every non-index infected member.
///
/// In doctor mode, an assessment that is infeasible at the observed times is
/// demoted to a uniform row and reported.
pub fn build_transmission_prior(mode: PriorMode, data: &ObservedData) -> (TransmissionPrior, Vec<PriorWarning>) {
    let index = data.index_member();
    let mut rows = vec![None; data.n_members];
    let mut warnings = Vec::new();
    for c in &data.cases {
        if Some(c.member) == index {
            continue;
        }
        let row = match (mode, c.assessed_infector) {
            (PriorMode::Doctor, Some(a)) => match data.case(a).filter(|_| a != c.member) {
                None => {
                    warnings.push(PriorWarning {
                        member: c.member,
                        assessed_infector: a,
                        reason: "assessed infector is not an infected member".into(),
                    });
                    PriorRow::Uniform
                }
                Some(src) if !feasible_at_observed(src, c) => {
                    warnings.push(PriorWarning {
                        member: c.member,
                        assessed_infector: a,
                        reason: "assessed infector was not infectious at any admissible exposure time".into(),
                    });
                    PriorRow::Uniform
                }
                Some(_) => PriorRow::Assessed(a),
            },
            _ => PriorRow::Uniform,
        };
        rows[c.member] = Some(row);
    }
    (TransmissionPrior { rows }, warnings)
}
