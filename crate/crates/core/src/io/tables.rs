//! CSV formats for epidemic and contact data.
//!
//! Member ids are 1-based; missing values are written `NA`. Times use the
//! shortest decimal that round-trips.

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};

use crate::error::{Error, Result};
use crate::network::{n_dyads, DyadSet};
use crate::observation::{ObservedCase, ObservedContacts, ObservedData, Transmission};

pub const EPIDEMIC_HEADER: [&str; 5] = ["member_id", "E", "I", "R", "assessed_infector"];
pub const INFECTOR_COLUMN: &str = "infector";
pub const NETWORK_HEADER: [&str; 3] = ["i", "j", "y"];

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(line, e.to_string())
}

fn line_of(rec: &StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn member_id(field: &str, line: usize, what: &str) -> Result<usize> {
    match field.parse::<usize>() {
        Ok(m) if m >= 1 => Ok(m - 1),
        _ => Err(parse_err(line, format!("{what}: expected a member id ≥ 1, got {field:?}"))),
    }
}

fn optional<T>(field: &str, parse: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if field == "NA" {
        Ok(None)
    } else {
        parse(field).map(Some)
    }
}

fn time(field: &str, line: usize, what: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(t) if t.is_finite() => Ok(t),
        _ => Err(parse_err(line, format!("{what}: expected a time or NA, got {field:?}"))),
    }
}

fn check_header(found: &StringRecord, expected: &[&str], optional_tail: Option<&str>) -> Result<bool> {
    let cols: Vec<&str> = found.iter().collect();
    if cols == expected {
        return Ok(false);
    }
    if let Some(extra) = optional_tail {
        if cols.len() == expected.len() + 1 && cols[..expected.len()] == *expected && cols[expected.len()] == extra {
            return Ok(true);
        }
    }
    Err(parse_err(1, format!("expected header {:?}, got {cols:?}", expected.join(","))))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    ReaderBuilder::new().trim(Trim::All).comment(Some(b'#')).from_reader(text.as_bytes())
}

/// Parses epidemic rows. An optional sixth `infector` column holds the observed
/// source: a member id, `index` or `NA`.
pub fn parse_epidemic_csv(text: &str) -> Result<Vec<ObservedCase>> {
    let mut rdr = reader(text);
    let with_infector = check_header(rdr.headers().map_err(csv_err)?, &EPIDEMIC_HEADER, Some(INFECTOR_COLUMN))?;
    let width = if with_infector { 6 } else { 5 };
    let mut cases: Vec<(ObservedCase, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, got {}", rec.len())));
        }
        let member = member_id(&rec[0], line, "member_id")?;
        let exposed = optional(&rec[1], |f| time(f, line, "E"))?;
        let infectious = optional(&rec[2], |f| time(f, line, "I"))?;
        let removed = optional(&rec[3], |f| time(f, line, "R"))?;
        let assessed_infector = optional(&rec[4], |f| member_id(f, line, "assessed_infector"))?;
        let transmission = if with_infector {
            match &rec[5] {
                "NA" => Transmission::Unobserved,
                "index" => Transmission::Index,
                f => Transmission::From(member_id(f, line, "infector")?),
            }
        } else {
            Transmission::Unobserved
        };
        let order = [("E", exposed), ("I", infectious), ("R", removed)];
        for a in 0..3 {
            for b in a + 1..3 {
                if let (Some(x), Some(y)) = (order[a].1, order[b].1) {
                    if x >= y {
                        return Err(parse_err(
                            line,
                            format!("member {}: {} = {x} must precede {} = {y}", member + 1, order[a].0, order[b].0),
                        ));
                    }
                }
            }
        }
        if assessed_infector == Some(member) || transmission == Transmission::From(member) {
            return Err(parse_err(line, format!("member {} cannot infect itself", member + 1)));
        }
        if let Some((_, first)) = cases.iter().find(|(c, _)| c.member == member) {
            return Err(parse_err(line, format!("member {} already listed on line {first}", member + 1)));
        }
        cases.push((ObservedCase { member, exposed, infectious, removed, transmission, assessed_infector }, line));
    }
    let mut cases: Vec<ObservedCase> = cases.into_iter().map(|(c, _)| c).collect();
    cases.sort_by_key(|c| c.member);
    Ok(cases)
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes epidemic rows; the `infector` column is added when any source is observed.
pub fn epidemic_csv(cases: &[ObservedCase]) -> String {
    let with_infector = cases.iter().any(|c| c.transmission != Transmission::Unobserved);
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<&str> = EPIDEMIC_HEADER.to_vec();
    if with_infector {
        header.push(INFECTOR_COLUMN);
    }
    w.write_record(&header).expect("in-memory write");
    for c in cases {
        let mut row = vec![
            (c.member + 1).to_string(),
            fmt_opt(c.exposed),
            fmt_opt(c.infectious),
            fmt_opt(c.removed),
            fmt_opt(c.assessed_infector.map(|a| a + 1)),
        ];
        if with_infector {
            row.push(match c.transmission {
                Transmission::Unobserved => "NA".into(),
                Transmission::Index => "index".into(),
                Transmission::From(i) => (i + 1).to_string(),
            });
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
}

/// Parses observed dyads; absent rows are unobserved dyads.
pub fn parse_network_csv(text: &str, n_members: usize) -> Result<ObservedContacts> {
    let mut rdr = reader(text);
    check_header(rdr.headers().map_err(csv_err)?, &NETWORK_HEADER, None)?;
    let mut contacts = ObservedContacts::none(n_members);
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let i = member_id(&rec[0], line, "i")?;
        let j = member_id(&rec[1], line, "j")?;
        if i >= j {
            return Err(parse_err(line, format!("need i < j, got ({}, {})", i + 1, j + 1)));
        }
        if j >= n_members {
            return Err(parse_err(line, format!("member {} outside a population of {n_members}", j + 1)));
        }
        let y = match &rec[2] {
            "0" => false,
            "1" => true,
            f => return Err(parse_err(line, format!("y must be 0 or 1, got {f:?}"))),
        };
        if contacts.observed.set(i, j, true) {
            return Err(parse_err(line, format!("dyad ({}, {}) listed twice", i + 1, j + 1)));
        }
        contacts.present.set(i, j, y);
    }
    Ok(contacts)
}

pub fn network_csv(contacts: &ObservedContacts) -> String {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(NETWORK_HEADER).expect("in-memory write");
    for (i, j) in contacts.observed.iter() {
        let y = if contacts.present.contains(i, j) { "1" } else { "0" };
        w.write_record([(i + 1).to_string(), (j + 1).to_string(), y.to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
}

/// Members all of whose dyads are observed.
pub fn fully_observed_members(observed: &DyadSet) -> Vec<usize> {
    let n = observed.n_members();
    if observed.len() == n_dyads(n) {
        return (0..n).collect();
    }
    let mut count = vec![0usize; n];
    for (i, j) in observed.iter() {
        count[i] += 1;
        count[j] += 1;
    }
    (0..n).filter(|&m| n > 1 && count[m] == n - 1).collect()
}

/// Assembles and checks the observed-data bundle. The sampled members are
/// those whose dyads are all observed.
pub fn observed_bundle(n_members: usize, cases: Vec<ObservedCase>, contacts: Option<ObservedContacts>) -> Result<ObservedData> {
    let contacts = contacts.unwrap_or_else(|| ObservedContacts::none(n_members));
    if contacts.observed.n_members() != n_members {
        return Err(Error::DimensionMismatch { expected: n_members, actual: contacts.observed.n_members() });
    }
    for c in &cases {
        let refs = [Some(c.member), c.assessed_infector, match c.transmission {
            Transmission::From(i) => Some(i),
            _ => None,
        }];
        if let Some(m) = refs.into_iter().flatten().find(|&m| m >= n_members) {
            return Err(Error::MemberOutOfRange { member: m + 1, n_members });
        }
    }
    if cases.iter().filter(|c| c.transmission == Transmission::Index).count() > 1 {
        return Err(Error::Inconsistent("more than one case is marked as the index case".into()));
    }
    let sampled = fully_observed_members(&contacts.observed);
    Ok(ObservedData { n_members, cases, contacts, sampled })
}
