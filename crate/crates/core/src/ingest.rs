//! Parsers for the external data sources.
//!
//! Supported inputs:
//!
//! - AS relationships in CAIDA serial-1 form, `asA|asB|code` with `-1` for
//!   provider-customer (asA is the provider) and `0` for peer-peer.
//! - RIR extended delegation files, `registry|cc|type|start|value|date|status`.
//!   Only `asn` records with status `allocated` or `assigned` are used.
//! - Prefix-to-AS tables, `prefix<TAB>length<TAB>asn`, where multi-origin
//!   entries join ASNs with `_` or `,`.
//! - IXP prefix lists, one CIDR per line.
//! - The country table, `country,fpi,population` with a header row.
//!
//! Every error carries the file name and line number. Lines starting with `#`
//! are comments in all formats.

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap};
use std::net::Ipv4Addr;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Asn, CountryCode, Ipv4Net};

/// Business relationship of a serial-1 record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relationship {
    /// `as_a` is the provider of `as_b`.
    ProviderCustomer,
    PeerPeer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelRecord {
    pub as_a: Asn,
    pub as_b: Asn,
    pub rel: Relationship,
}

impl RelRecord {
    /// Orientation-independent key: the unordered pair plus, for p2c, the provider.
    fn canonical(&self) -> ((Asn, Asn), Option<Asn>) {
        let pair = (self.as_a.min(self.as_b), self.as_a.max(self.as_b));
        match self.rel {
            Relationship::ProviderCustomer => (pair, Some(self.as_a)),
            Relationship::PeerPeer => (pair, None),
        }
    }

    /// Serial-1 line without trailing newline.
    pub fn to_line(&self) -> String {
        let code = match self.rel {
            Relationship::ProviderCustomer => -1,
            Relationship::PeerPeer => 0,
        };
        format!("{}|{}|{}", self.as_a, self.as_b, code)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountryAssignment {
    pub asn: Asn,
    pub country: CountryCode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixOrigin {
    pub prefix: Ipv4Net,
    pub origin: BTreeSet<Asn>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IxpPrefixSet {
    pub prefixes: BTreeSet<Ipv4Net>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountryRecord {
    pub country: CountryCode,
    /// Freedom of the Press score, 0 (most free) to 100.
    pub fpi: f64,
    pub population: Option<u64>,
}

impl CountryRecord {
    /// Prediction target, higher means more free.
    pub fn target(&self) -> f64 {
        100.0 - self.fpi
    }
}

/// Non-fatal condition noticed while parsing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub file: String,
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

#[derive(Clone, Debug)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub warnings: Vec<Warning>,
}

impl<T> Parsed<T> {
    fn new() -> Self {
        Parsed {
            records: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn warn(&mut self, file: &str, line: usize, message: String) {
        let w = Warning {
            file: file.to_string(),
            line,
            message,
        };
        warn!("{w}");
        self.warnings.push(w);
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

/// Yields `(line_number, trimmed_line)` for every non-blank, non-comment line.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_asn(field: &str, file: &str, line: usize) -> Result<Asn> {
    let field = field.trim();
    let digits = field
        .strip_prefix("AS")
        .or_else(|| field.strip_prefix("as"))
        .unwrap_or(field);
    digits
        .parse()
        .map_err(|_| Error::parse(file, line, format!("invalid AS number {field:?}")))
}

pub fn parse_rel_file(path: &Path) -> Result<Vec<RelRecord>> {
    parse_rel_str(&read_file(path)?, &file_name(path))
}

/// Parses serial-1 relationship lines. Identical duplicates are kept; a pair
/// listed with two different relationships is a conflict.
pub fn parse_rel_str(text: &str, file: &str) -> Result<Vec<RelRecord>> {
    let mut seen: HashMap<(Asn, Asn), (Option<Asn>, usize)> = HashMap::new();
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split('|').collect();
        if fields.len() < 3 {
            return Err(Error::parse(file, line, format!("expected asA|asB|code, got {l:?}")));
        }
        let as_a = parse_asn(fields[0], file, line)?;
        let as_b = parse_asn(fields[1], file, line)?;
        if as_a == as_b {
            return Err(Error::parse(file, line, format!("self relationship for AS{as_a}")));
        }
        let rel = match fields[2].trim() {
            "-1" => Relationship::ProviderCustomer,
            "0" => Relationship::PeerPeer,
            other => return Err(Error::parse(file, line, format!("unknown relationship code {other:?}"))),
        };
        let rec = RelRecord { as_a, as_b, rel };
        let (pair, provider) = rec.canonical();
        match seen.entry(pair) {
            Entry::Occupied(e) => {
                let (first_provider, first_line) = *e.get();
                if first_provider != provider {
                    return Err(Error::Conflict {
                        file: file.to_string(),
                        line,
                        first_line,
                        a: pair.0,
                        b: pair.1,
                    });
                }
            }
            Entry::Vacant(e) => {
                e.insert((provider, line));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_delegations(path: &Path) -> Result<Parsed<CountryAssignment>> {
    parse_delegations_str(&read_file(path)?, &file_name(path))
}

/// Parses RIR extended delegation records, expanding `start,count` runs.
/// Duplicate ASNs keep the first country seen and produce a warning.
pub fn parse_delegations_str(text: &str, file: &str) -> Result<Parsed<CountryAssignment>> {
    let mut out = Parsed::new();
    let mut first: HashMap<Asn, (CountryCode, usize)> = HashMap::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split('|').map(str::trim).collect();
        // version header: `2|apnic|20240101|...`, summary: `apnic|*|asn|*|N|summary`
        if fields[0].chars().next().is_some_and(|c| c.is_ascii_digit()) || fields.last() == Some(&"summary") {
            continue;
        }
        if fields.len() < 7 {
            return Err(Error::parse(
                file,
                line,
                format!("expected registry|cc|type|start|value|date|status, got {l:?}"),
            ));
        }
        if fields[2] != "asn" {
            continue;
        }
        match fields[6] {
            "allocated" | "assigned" => {}
            "available" | "reserved" => continue,
            other => {
                out.warn(file, line, format!("skipping record with unknown status {other:?}"));
                continue;
            }
        }
        let country: CountryCode = fields[1].parse().map_err(|e: String| Error::parse(file, line, e))?;
        let start = parse_asn(fields[3], file, line)?;
        let count: u32 = fields[4]
            .parse()
            .map_err(|_| Error::parse(file, line, format!("invalid count {:?}", fields[4])))?;
        if count == 0 || start.checked_add(count - 1).is_none() {
            return Err(Error::parse(file, line, format!("invalid ASN run {start}+{count}")));
        }
        for asn in start..=start + (count - 1) {
            match first.entry(asn) {
                Entry::Occupied(e) => {
                    let (cc, first_line) = *e.get();
                    out.warn(
                        file,
                        line,
                        format!("AS{asn} already assigned to {cc} on line {first_line}; keeping {cc}"),
                    );
                }
                Entry::Vacant(e) => {
                    e.insert((country, line));
                    out.records.push(CountryAssignment { asn, country });
                }
            }
        }
    }
    Ok(out)
}

pub fn parse_prefix2as(path: &Path) -> Result<Vec<PrefixOrigin>> {
    parse_prefix2as_str(&read_file(path)?, &file_name(path))
}

pub fn parse_prefix2as_str(text: &str, file: &str) -> Result<Vec<PrefixOrigin>> {
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                file,
                line,
                format!("expected prefix<TAB>length<TAB>asn, got {l:?}"),
            ));
        }
        let addr: Ipv4Addr = fields[0]
            .parse()
            .map_err(|_| Error::parse(file, line, format!("invalid address {:?}", fields[0])))?;
        let len: u8 = fields[1]
            .parse()
            .map_err(|_| Error::parse(file, line, format!("invalid length {:?}", fields[1])))?;
        let prefix = Ipv4Net::new(addr, len).map_err(|e| Error::parse(file, line, e))?;
        let origin = fields[2]
            .split(['_', ','])
            .map(|a| parse_asn(a, file, line))
            .collect::<Result<BTreeSet<_>>>()?;
        if origin.is_empty() {
            return Err(Error::parse(file, line, "empty origin set"));
        }
        out.push(PrefixOrigin { prefix, origin });
    }
    Ok(out)
}

pub fn parse_ixp_prefixes(path: &Path) -> Result<IxpPrefixSet> {
    parse_ixp_prefixes_str(&read_file(path)?, &file_name(path))
}

pub fn parse_ixp_prefixes_str(text: &str, file: &str) -> Result<IxpPrefixSet> {
    let mut set = IxpPrefixSet::default();
    for (line, l) in content_lines(text) {
        let cidr = l.split_whitespace().next().unwrap_or(l);
        let prefix: Ipv4Net = cidr.parse().map_err(|e| Error::parse(file, line, e))?;
        set.prefixes.insert(prefix);
    }
    Ok(set)
}

pub fn parse_country_table(path: &Path) -> Result<Vec<CountryRecord>> {
    parse_country_table_str(&read_file(path)?, &file_name(path))
}

/// Parses `country,fpi,population`. The first content line is the header.
/// An empty population field is accepted and reported downstream as missing.
pub fn parse_country_table_str(text: &str, file: &str) -> Result<Vec<CountryRecord>> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (idx, (line, l)) in content_lines(text).enumerate() {
        if idx == 0 && l.to_ascii_lowercase().starts_with("country") {
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                file,
                line,
                format!("expected country,fpi,population, got {l:?}"),
            ));
        }
        let country: CountryCode = fields[0].parse().map_err(|e: String| Error::parse(file, line, e))?;
        let fpi: f64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(file, line, format!("invalid fpi {:?}", fields[1])))?;
        if !(0.0..=100.0).contains(&fpi) {
            return Err(Error::parse(file, line, format!("fpi {fpi} outside [0, 100]")));
        }
        let population = if fields[2].is_empty() {
            None
        } else {
            let p: i64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(file, line, format!("invalid population {:?}", fields[2])))?;
            if p <= 0 {
                return Err(Error::parse(file, line, format!("population {p} must be positive")));
            }
            Some(p as u64)
        };
        if let Some(prev) = seen.insert(country, line) {
            return Err(Error::parse(
                file,
                line,
                format!("country {country} already listed on line {prev}"),
            ));
        }
        out.push(CountryRecord {
            country,
            fpi,
            population,
        });
    }
    Ok(out)
}
