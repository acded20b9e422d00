//! Network SEIR process: event-driven simulation and complete-data likelihood terms.
//!
//! Period durations use the shape–scale Gamma parameterization
//! (mean = shape × scale). Transmission waiting times are Exponential with
//! rate `beta` per infectious–susceptible contact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::network::ContactNetwork;
use crate::serde_util::{one_based_option, one_based_scalar};

/// Shape–scale parameters of a Gamma-distributed period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPeriod {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPeriod {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return invalid(format!("Gamma period needs positive shape and scale, got ({shape}, {scale})"));
        }
        Ok(GammaPeriod { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn log_density(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * d.ln() - d / self.scale - self.shape * self.scale.ln() - ln_gamma(self.shape)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Parameters are validated on construction.
        Gamma::new(self.shape, self.scale).expect("valid gamma").sample(rng)
    }
}

/// `η = (β, η_E, η_I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    pub beta: f64,
    pub exposed: GammaPeriod,
    pub infectious: GammaPeriod,
}

impl EpidemicParams {
    pub fn new(beta: f64, exposed: GammaPeriod, infectious: GammaPeriod) -> Result<Self> {
        let p = EpidemicParams { beta, exposed, infectious };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return invalid(format!("infection rate must be positive, got {}", self.beta));
        }
        GammaPeriod::new(self.exposed.shape, self.exposed.scale)?;
        GammaPeriod::new(self.infectious.shape, self.infectious.scale)?;
        Ok(())
    }
}

/// Event times and infection source of one infected member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Case {
    #[serde(with = "one_based_scalar")]
    pub member: usize,
    pub exposed: f64,
    pub infectious: f64,
    pub removed: f64,
    /// `None` marks the index case.
    #[serde(with = "one_based_option")]
    pub infector: Option<usize>,
}

impl Case {
    /// Infectious-pressure time this case exerts on a member exposed at `exposed_at`
    /// (`+∞` for never-infected members).
    #[inline]
    pub fn pressure_on(&self, exposed_at: f64) -> f64 {
        (exposed_at.min(self.removed) - self.infectious).max(0.0)
    }

    /// `I_i < t < R_i`.
    #[inline]
    pub fn can_infect_at(&self, t: f64) -> bool {
        self.infectious < t && t < self.removed
    }
}

/// The epidemic `x = (E, I, R, T)` over a population of `n_members`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordRepr", into = "RecordRepr")]
pub struct EpidemicRecord {
    n_members: usize,
    cases: Vec<Case>,
    slot: Vec<Option<u32>>,
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    n_members: usize,
    cases: Vec<Case>,
}

impl TryFrom<RecordRepr> for EpidemicRecord {
    type Error = Error;
    fn try_from(r: RecordRepr) -> Result<Self> {
        EpidemicRecord::new(r.n_members, r.cases)
    }
}

impl From<EpidemicRecord> for RecordRepr {
    fn from(r: EpidemicRecord) -> Self {
        RecordRepr { n_members: r.n_members, cases: r.cases }
    }
}

impl EpidemicRecord {
    /// Builds and validates a record. Cases are stored sorted by member.
    pub fn new(n_members: usize, mut cases: Vec<Case>) -> Result<Self> {
        cases.sort_by_key(|c| c.member);
        let mut slot = vec![None; n_members];
        for (k, c) in cases.iter().enumerate() {
            if c.member >= n_members {
                return Err(Error::MemberOutOfRange { member: c.member + 1, n_members });
            }
            if slot[c.member].is_some() {
                return Err(Error::Inconsistent(format!("member {} listed twice", c.member + 1)));
            }
            slot[c.member] = Some(k as u32);
        }
        let rec = EpidemicRecord { n_members, cases, slot };
        rec.validate()?;
        Ok(rec)
    }

    /// Builds a record without checking invariants; callers must call
    /// [`EpidemicRecord::validate`] before handing it out.
    pub(crate) fn new_unchecked(n_members: usize, mut cases: Vec<Case>) -> Self {
        cases.sort_by_key(|c| c.member);
        let mut slot = vec![None; n_members];
        for (k, c) in cases.iter().enumerate() {
            slot[c.member] = Some(k as u32);
        }
        EpidemicRecord { n_members, cases, slot }
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn n_infected(&self) -> usize {
        self.cases.len()
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub(crate) fn cases_mut(&mut self) -> &mut [Case] {
        &mut self.cases
    }

    #[inline]
    pub fn slot_of(&self, member: usize) -> Option<usize> {
        self.slot[member].map(|s| s as usize)
    }

    #[inline]
    pub fn case(&self, member: usize) -> Option<&Case> {
        self.slot_of(member).map(|s| &self.cases[s])
    }

    #[inline]
    pub fn is_infected(&self, member: usize) -> bool {
        self.slot[member].is_some()
    }

    pub fn infected_members(&self) -> impl Iterator<Item = usize> + '_ {
        self.cases.iter().map(|c| c.member)
    }

    pub fn index_case(&self) -> Option<&Case> {
        self.cases.iter().find(|c| c.infector.is_none())
    }

    /// Checks time ordering, a single index case and infection windows.
    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Ok(());
        }
        let mut n_index = 0;
        for c in &self.cases {
            let times_ok = c.exposed.is_finite()
                && c.infectious.is_finite()
                && c.removed.is_finite()
                && c.exposed < c.infectious
                && c.infectious < c.removed;
            if !times_ok {
                return Err(Error::Inconsistent(format!(
                    "member {}: need E < I < R, got ({}, {}, {})",
                    c.member + 1,
                    c.exposed,
                    c.infectious,
                    c.removed
                )));
            }
            match c.infector {
                None => n_index += 1,
                Some(i) => {
                    let src = self.case(i).filter(|_| i != c.member).ok_or_else(|| {
                        Error::Inconsistent(format!(
                            "member {}: infector {} is not an infected member",
                            c.member + 1,
                            i + 1
                        ))
                    })?;
                    if !src.can_infect_at(c.exposed) {
                        return Err(Error::Inconsistent(format!(
                            "member {}: exposure at {} outside infectious window ({}, {}) of infector {}",
                            c.member + 1,
                            c.exposed,
                            src.infectious,
                            src.removed,
                            i + 1
                        )));
                    }
                }
            }
        }
        if n_index != 1 {
            return Err(Error::Inconsistent(format!("expected exactly one index case, found {n_index}")));
        }
        Ok(())
    }

    /// Checks that every transmission runs along a contact.
    pub fn validate_with_network(&self, network: &ContactNetwork) -> Result<()> {
        if network.n_members() != self.n_members {
            return Err(Error::DimensionMismatch { expected: self.n_members, actual: network.n_members() });
        }
        self.validate()?;
        for c in &self.cases {
            if let Some(i) = c.infector {
                if !network.has_edge(i, c.member) {
                    return Err(Error::Inconsistent(format!(
                        "transmission {} -> {} without a contact",
                        i + 1,
                        c.member + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies a member relabeling: member `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let cases = self
            .cases
            .iter()
            .map(|c| Case {
                member: perm[c.member],
                infector: c.infector.map(|i| perm[i]),
                ..*c
            })
            .collect();
        EpidemicRecord::new_unchecked(self.n_members, cases)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Infectious { member: usize },
    Exposure { target: usize, source: usize },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
}

impl Event {
    fn tie_key(&self) -> (usize, usize) {
        match self.kind {
            EventKind::Infectious { member } => (member, 0),
            EventKind::Exposure { target, source } => (target, source + 1),
        }
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest event; ties by member index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.tie_key().cmp(&self.tie_key()))
    }
}

/// Simulates an SEIR epidemic on `network` from a single index case exposed at time 0.
///
/// Each infectious member exposes each currently susceptible contact after an
/// independent Exponential(β) delay, censored at its own removal.
pub fn simulate_epidemic<R: Rng + ?Sized>(
    network: &ContactNetwork,
    params: &EpidemicParams,
    index_case: usize,
    rng: &mut R,
) -> Result<EpidemicRecord> {
    let n = network.n_members();
    if index_case >= n {
        return Err(Error::MemberOutOfRange { member: index_case + 1, n_members: n });
    }
    params.validate()?;
    let delay = Exp::new(params.beta).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut cases: Vec<Case> = Vec::new();
    let mut slot: Vec<Option<usize>> = vec![None; n];
    let mut queue = BinaryHeap::new();

    let infect = |member: usize, at: f64, infector: Option<usize>, rng: &mut R, cases: &mut Vec<Case>| {
        let infectious = at + params.exposed.sample(rng);
        let removed = infectious + params.infectious.sample(rng);
        cases.push(Case { member, exposed: at, infectious, removed, infector });
        Event { time: infectious, kind: EventKind::Infectious { member } }
    };

    slot[index_case] = Some(0);
    queue.push(infect(index_case, 0.0, None, rng, &mut cases));

    while let Some(ev) = queue.pop() {
        match ev.kind {
            EventKind::Infectious { member } => {
                let removed = cases[slot[member].expect("infectious member is a case")].removed;
                for c in network.neighbors(member) {
                    if slot[c].is_some() {
                        continue;
                    }
                    let t = ev.time + delay.sample(rng);
                    if t < removed {
                        queue.push(Event { time: t, kind: EventKind::Exposure { target: c, source: member } });
                    }
                }
            }
            EventKind::Exposure { target, source } => {
                if slot[target].is_some() {
                    continue;
                }
                slot[target] = Some(cases.len());
                queue.push(infect(target, ev.time, Some(source), rng, &mut cases));
            }
        }
    }
    let record = EpidemicRecord::new_unchecked(n, cases);
    debug_assert!(record.validate_with_network(network).is_ok());
    Ok(record)
}

/// Total infectious pressure `a(x, y)`.
///
/// Never-infected members are treated as exposed at `+∞`, which turns the
/// pairwise term into `R_i − I_i` for every non-infected contact of `i`.
pub fn exposure_statistic(record: &EpidemicRecord, network: &ContactNetwork) -> Result<f64> {
    if network.n_members() != record.n_members() {
        return Err(Error::DimensionMismatch { expected: record.n_members(), actual: network.n_members() });
    }
    let cases = record.cases();
    let mut total = 0.0;
    for src in cases {
        let mut infected_contacts = 0u32;
        for tgt in cases {
            if tgt.member != src.member && network.has_edge(src.member, tgt.member) {
                infected_contacts += 1;
                total += src.pressure_on(tgt.exposed);
            }
        }
        let d = network.degree(src.member) - infected_contacts;
        total += d as f64 * (src.removed - src.infectious);
    }
    Ok(total)
}

/// `(M − 1) log β − β a(x, y)`.
pub fn transmission_log_likelihood(beta: f64, record: &EpidemicRecord, network: &ContactNetwork) -> Result<f64> {
    if !(beta > 0.0) {
        return invalid(format!("infection rate must be positive, got {beta}"));
    }
    let a = exposure_statistic(record, network)?;
    let m = record.n_infected().max(1) as f64;
    Ok((m - 1.0) * beta.ln() - beta * a)
}

/// Sum of Gamma(shape, scale) log-densities over `durations`.
pub fn period_log_likelihood(shape: f64, scale: f64, durations: &[f64]) -> Result<f64> {
    let period = GammaPeriod::new(shape, scale)?;
    let mut total = 0.0;
    for &d in durations {
        if !(d > 0.0 && d.is_finite()) {
            return invalid(format!("period durations must be positive, got {d}"));
        }
        total += period.log_density(d);
    }
    Ok(total)
}

/// Sufficient statistics of a set of period durations for Gamma likelihoods.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DurationStats {
    pub count: usize,
    pub sum: f64,
    pub sum_log: f64,
}

impl DurationStats {
    pub fn from_durations(durations: impl IntoIterator<Item = f64>) -> Self {
        let mut s = DurationStats::default();
        for d in durations {
            s.count += 1;
            s.sum += d;
            s.sum_log += d.ln();
        }
        s
    }

    pub fn log_likelihood(&self, period: &GammaPeriod) -> f64 {
        let (k, s) = (period.shape, period.scale);
        (k - 1.0) * self.sum_log - self.sum / s - self.count as f64 * (k * s.ln() + ln_gamma(k))
    }
}

/// Largest number of simultaneously infectious members, counting `[I, R)`.
pub fn max_infectious(record: &EpidemicRecord) -> usize {
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * record.n_infected());
    for c in record.cases() {
        events.push((c.infectious, 1));
        events.push((c.removed, -1));
    }
    // Removals sort before arrivals at equal times.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cur = 0i32;
    let mut best = 0i32;
    for (_, delta) in events {
        cur += delta;
        best = best.max(cur);
    }
    best as usize
}
