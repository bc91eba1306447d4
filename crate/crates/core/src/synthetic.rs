//! Seeded generator for small self-consistent input sets.
//!
//! Every country gets a hub AS and a tree of domestic customers below it.
//! Hubs of the first two countries peer; other hubs buy transit from one of
//! them. The freedom target is planted as an exact linear function of IP
//! density, so linear models can recover it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::announced_space;
use crate::ingest::PrefixOrigin;
use crate::topology::pair;
use crate::types::{Asn, CountryCode, Ipv4Net};

const CODES: [&str; 46] = [
    "AR", "AU", "BR", "CA", "CL", "CN", "CO", "DE", "DK", "EG", "ES", "FI", "FR", "GB", "GR", "HU", "ID", "IE", "IN",
    "IR", "IT", "JP", "KE", "KR", "MA", "MX", "MY", "NG", "NO", "NZ", "PE", "PH", "PK", "PL", "PT", "RO", "SA", "SE",
    "SG", "TH", "TR", "TW", "UA", "VE", "VN", "ZA",
];

pub const IXP_PREFIX: &str = "80.81.192.0/22";

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    pub countries: usize,
    pub ases: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            countries: 5,
            ases: 30,
            seed: 42,
        }
    }
}

/// File contents of a generated world.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub relationships: String,
    pub delegations: String,
    pub prefix2as: String,
    pub ixp_prefixes: String,
    pub countries: String,
    pub traceroutes: String,
    /// Edges present in the traceroutes but not in the relationship file.
    pub hidden_edges: Vec<(Asn, Asn)>,
    /// Target (`100 - fpi`) per country.
    pub targets: BTreeMap<CountryCode, f64>,
}

fn asn(country: usize, i: usize) -> Asn {
    1000 * (country as Asn + 1) + i as Asn
}

/// Per-AS address block `a.b.0.0/16`, away from reserved space.
fn block(global: usize) -> Ipv4Addr {
    Ipv4Addr::new(20 + (global / 200) as u8, (global % 200) as u8, 0, 0)
}

fn host(net: Ipv4Addr, k: u32) -> Ipv4Addr {
    Ipv4Addr::from(u32::from(net) + 1 + k)
}

pub fn generate(spec: &WorldSpec) -> Result<World> {
    if spec.countries < 2 || spec.countries > CODES.len() || spec.ases < 2 * spec.countries {
        return Err(Error::InvalidInput(format!(
            "need 2..={} countries with at least two ASes each",
            CODES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nc = spec.countries;
    let sizes: Vec<usize> = (0..nc)
        .map(|k| spec.ases / nc + usize::from(k < spec.ases % nc))
        .collect();
    let codes: Vec<CountryCode> = CODES[..nc].iter().map(|c| CountryCode::new(c).unwrap()).collect();

    // (provider, customer) and peer pairs
    let mut p2c: Vec<(Asn, Asn)> = Vec::new();
    let mut p2p: Vec<(Asn, Asn)> = Vec::new();
    let mut used: BTreeSet<(Asn, Asn)> = BTreeSet::new();
    let mut link = |a: Asn, b: Asn, peer: bool, p2c: &mut Vec<_>, p2p: &mut Vec<_>| {
        if a != b && used.insert(pair(a, b)) {
            if peer {
                p2p.push((a, b));
            } else {
                p2c.push((a, b));
            }
        }
    };
    link(asn(0, 0), asn(1, 0), true, &mut p2c, &mut p2p);
    for k in 2..nc {
        let up = rng.random_range(0..2);
        link(asn(up, 0), asn(k, 0), false, &mut p2c, &mut p2p);
        if rng.random_bool(0.5) {
            link(asn(k - 1, 0), asn(k, 0), true, &mut p2c, &mut p2p);
        }
    }
    for (k, &m) in sizes.iter().enumerate() {
        for i in 1..m {
            let provider = rng.random_range(0..i);
            link(asn(k, provider), asn(k, i), false, &mut p2c, &mut p2p);
            if i >= 2 && rng.random_bool(0.3) {
                let other = rng.random_range(0..i);
                link(asn(k, other), asn(k, i), true, &mut p2c, &mut p2p);
            }
        }
        if m >= 3 && rng.random_bool(0.5) {
            link(asn((k + 1) % nc, 0), asn(k, m - 1), false, &mut p2c, &mut p2p);
        }
    }

    let mut relationships = String::from("# provider|customer|-1 or peer|peer|0\n");
    for &(a, b) in &p2c {
        let _ = writeln!(relationships, "{a}|{b}|-1");
    }
    for &(a, b) in &p2p {
        let _ = writeln!(relationships, "{a}|{b}|0");
    }

    let mut delegations = String::from("2|synthetic|20240101|0|19700101|20240101|+0000\n");
    let mut country_of: BTreeMap<Asn, CountryCode> = BTreeMap::new();
    for (k, &m) in sizes.iter().enumerate() {
        let _ = writeln!(
            delegations,
            "synthetic|{}|asn|{}|{m}|20240101|allocated",
            codes[k],
            asn(k, 0)
        );
        for i in 0..m {
            country_of.insert(asn(k, i), codes[k]);
        }
    }

    let mut prefixes: Vec<PrefixOrigin> = Vec::new();
    let mut nets: BTreeMap<Asn, Ipv4Addr> = BTreeMap::new();
    let mut global = 0;
    for (k, &m) in sizes.iter().enumerate() {
        for i in 0..m {
            let net = block(global);
            global += 1;
            let len = if i == 0 {
                16
            } else {
                [18, 20, 22, 24][rng.random_range(0..4)]
            };
            nets.insert(asn(k, i), net);
            prefixes.push(PrefixOrigin {
                prefix: Ipv4Net::new(net, len).unwrap(),
                origin: BTreeSet::from([asn(k, i)]),
            });
        }
    }
    // shared /24 inside the first hub's block
    let shared = Ipv4Addr::from(u32::from(nets[&asn(0, 0)]) | 0xff00);
    prefixes.push(PrefixOrigin {
        prefix: Ipv4Net::new(shared, 24).unwrap(),
        origin: BTreeSet::from([asn(0, 0), asn(0, 1)]),
    });
    let mut prefix2as = String::new();
    for p in &prefixes {
        let origin: Vec<String> = p.origin.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(
            prefix2as,
            "{}\t{}\t{}",
            p.prefix.network(),
            p.prefix.len(),
            origin.join("_")
        );
    }

    let announced = announced_space(&prefixes, |a| country_of.get(&a).copied());
    let mut countries = String::from("country,fpi,population\n");
    let mut targets = BTreeMap::new();
    for &c in &codes {
        let addresses = announced[&c].0 as f64;
        let density: f64 = rng.random_range(0.02..1.0);
        let population = (addresses / density).round().max(1.0) as u64;
        let target = 10.0 + 80.0 * (addresses / population as f64);
        let fpi = 100.0 - target;
        let _ = writeln!(countries, "{c},{fpi},{population}");
        targets.insert(c, 100.0 - fpi);
    }

    let ip = |a: Asn, k: u32| format!("\"{}\"", host(nets[&a], k));
    let ixp = "\"80.81.192.7\"";
    let (s0, h0, h1, s1) = (asn(0, 1), asn(0, 0), asn(1, 0), asn(1, 1));
    let (c0, c1) = (codes[0], codes[1]);
    let mut traceroutes = String::new();
    let mut record = |id: &str, kind: &str, src: CountryCode, dst: CountryCode, batch: Option<u32>, hops: &[String]| {
        let hops: Vec<String> = hops
            .iter()
            .enumerate()
            .map(|(i, h)| format!("{{\"idx\":{},\"ip\":{h}}}", i + 1))
            .collect();
        let batch = batch.map_or(String::new(), |b| format!(",\"batch\":{b}"));
        let _ = writeln!(
            traceroutes,
            "{{\"id\":\"{id}\",\"kind\":\"{kind}\",\"src_country\":\"{src}\",\"dst_country\":\"{dst}\"{batch},\"hops\":[{}]}}",
            hops.join(",")
        );
    };
    let gateway = "\"10.0.0.1\"".to_string();
    let shared_hop = format!("\"{}\"", host(shared, 3));
    record(
        "io-5",
        "inside_out",
        c0,
        c1,
        Some(5),
        &[gateway.clone(), ip(s0, 0), ip(s1, 1), ip(s1, 2)],
    );
    for b in [10, 15, 20, 25] {
        record(
            &format!("io-{b}"),
            "inside_out",
            c0,
            c1,
            Some(b),
            &[
                gateway.clone(),
                ip(s0, 0),
                ip(h0, 1),
                ixp.to_string(),
                ip(h1, 2),
                ip(s1, 3),
            ],
        );
    }
    for b in [5, 10, 15] {
        record(
            &format!("oi-{b}"),
            "outside_in",
            c1,
            c0,
            Some(b),
            &[
                ip(s1, 0),
                "null".to_string(),
                ip(h1, 1),
                ixp.to_string(),
                ip(h0, 2),
                ip(s0, 3),
            ],
        );
    }
    record(
        "mesh-1",
        "mesh",
        c0,
        c0,
        None,
        &[gateway, ip(s0, 0), shared_hop, ip(h0, 4)],
    );

    Ok(World {
        relationships,
        delegations,
        prefix2as,
        ixp_prefixes: format!("{IXP_PREFIX}\n"),
        countries,
        traceroutes,
        hidden_edges: vec![pair(s0, s1)],
        targets,
    })
}

impl World {
    /// Writes the inputs and a `config.toml` naming them into `dir`; returns
    /// the config path.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("relationships.txt", &self.relationships),
            ("delegations.txt", &self.delegations),
            ("prefix2as.txt", &self.prefix2as),
            ("ixp_prefixes.txt", &self.ixp_prefixes),
            ("countries.csv", &self.countries),
            ("traceroutes.jsonl", &self.traceroutes),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        let config = dir.join("config.toml");
        let text = "\
out = \"out\"

[inputs]
relationships = \"relationships.txt\"
delegations = \"delegations.txt\"
prefix2as = \"prefix2as.txt\"
ixp_prefixes = \"ixp_prefixes.txt\"
countries = \"countries.csv\"
traceroutes = \"traceroutes.jsonl\"
";
        fs::write(&config, text).map_err(|e| Error::io(&config, e))?;
        Ok(config)
    }
}
