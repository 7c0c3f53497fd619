//! Option resolution: defaults, then an optional `key=value` file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lrfhss_core::campaign::{DecodeLevel, DEFAULT_MASTER_SEED};
use lrfhss_core::catalog::FamilyKind;
use lrfhss_core::channel::CodingRate;
use lrfhss_core::gateway::Demodulators;

/// Keys accepted in a config file, named like the long flags.
pub const CONFIG_KEYS: [&str; 13] = [
    "families",
    "cr",
    "demods",
    "nodes",
    "reps",
    "seed",
    "early-decode",
    "early-drop",
    "header-drop",
    "header-tolerance",
    "out",
    "max-length",
    "level",
];

/// Raw option values, as strings, before validation.
#[derive(Debug, Clone, Default)]
pub struct RawOptions {
    values: BTreeMap<String, String>,
}

impl RawOptions {
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn parse_config(text: &str, origin: &Path) -> Result<Self> {
        let mut raw = RawOptions::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').with_context(|| format!("{}:{}: expected key=value", origin.display(), i + 1))?;
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                bail!("{}:{}: unknown key `{key}` (known: {})", origin.display(), i + 1, CONFIG_KEYS.join(", "));
            }
            raw.set(key, value.trim());
        }
        Ok(raw)
    }

    /// Values in `other` replace ours.
    pub fn overlay(mut self, other: RawOptions) -> Self {
        self.values.extend(other.values);
        self
    }
}

/// Fully resolved options of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub families: Vec<FamilyKind>,
    pub coding_rates: Vec<CodingRate>,
    pub demodulators: Vec<Demodulators>,
    pub nodes: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub early_decode: bool,
    pub early_drop: bool,
    pub header_drop: bool,
    pub header_tolerance: usize,
    pub out: PathBuf,
    pub max_length: usize,
    /// Which decoded frames count when families are ranked.
    pub level: DecodeLevel,
}

/// Per-subcommand fallbacks for options the user left out.
pub struct Defaults {
    pub nodes: &'static str,
    pub demods: &'static str,
}

impl Settings {
    pub fn resolve(raw: &RawOptions, defaults: &Defaults) -> Result<Self> {
        let families = match raw.get("families") {
            Some(list) => parse_families(list)?,
            None => FamilyKind::ALL.to_vec(),
        };
        let coding_rates = parse_coding_rates(raw.get("cr").unwrap_or("both"))?;
        let demodulators = split_list(raw.get("demods").unwrap_or(defaults.demods))
            .map(|s| s.parse::<Demodulators>().map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()?;
        ensure!(!demodulators.is_empty(), "--demods needs at least one value");
        let nodes = parse_node_sweep(raw.get("nodes").unwrap_or(defaults.nodes))?;
        let repetitions = parse_number(raw.get("reps").unwrap_or("10"), "reps")?;
        ensure!(repetitions > 0, "--reps must be positive");
        let seed = match raw.get("seed") {
            Some(s) => parse_seed(s)?,
            None => DEFAULT_MASTER_SEED,
        };
        let max_length = parse_number(raw.get("max-length").unwrap_or("86"), "max-length")?;
        ensure!(max_length >= 2, "--max-length must be at least 2");
        Ok(Settings {
            families,
            coding_rates,
            demodulators,
            nodes,
            repetitions,
            seed,
            early_decode: parse_bool(raw.get("early-decode"), "early-decode")?,
            early_drop: parse_bool(raw.get("early-drop"), "early-drop")?,
            header_drop: parse_bool(raw.get("header-drop"), "header-drop")?,
            header_tolerance: parse_number(raw.get("header-tolerance").unwrap_or("0"), "header-tolerance")?,
            out: PathBuf::from(raw.get("out").unwrap_or(".")),
            max_length,
            level: parse_level(raw.get("level").unwrap_or("payload"))?,
        })
    }

    /// One-line record of every resolved option, for output headers.
    pub fn describe(&self, command: &str) -> String {
        let join = |items: Vec<String>| items.join(",");
        let mut s = format!("lrfhss {} {command}", env!("CARGO_PKG_VERSION"));
        let _ = write!(
            s,
            " families={} cr={} demods={} nodes={} reps={} seed={:#x} early-decode={} early-drop={} header-drop={} header-tolerance={} max-length={} level={}",
            join(self.families.iter().map(|f| f.to_string()).collect()),
            join(self.coding_rates.iter().map(|c| c.number().to_string()).collect()),
            join(self.demodulators.iter().map(|d| d.to_string()).collect()),
            join(self.nodes.iter().map(|n| n.to_string()).collect()),
            self.repetitions,
            self.seed,
            u8::from(self.early_decode),
            u8::from(self.early_drop),
            u8::from(self.header_drop),
            self.header_tolerance,
            self.max_length,
            level_name(self.level),
        );
        s
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty())
}

fn parse_number(s: &str, what: &str) -> Result<usize> {
    s.trim().parse().with_context(|| format!("--{what}: `{s}` is not a non-negative integer"))
}

fn parse_bool(s: Option<&str>, what: &str) -> Result<bool> {
    match s.map(|v| v.trim().to_ascii_lowercase()).as_deref() {
        None | Some("0" | "false" | "no" | "off") => Ok(false),
        Some("1" | "true" | "yes" | "on") => Ok(true),
        Some(other) => bail!("{what}: `{other}` is not a boolean"),
    }
}

pub fn parse_level(s: &str) -> Result<DecodeLevel> {
    match s.trim() {
        "payload" => Ok(DecodeLevel::Payload),
        "packet" => Ok(DecodeLevel::Packet),
        other => bail!("--level: `{other}` is neither payload nor packet"),
    }
}

pub fn level_name(level: DecodeLevel) -> &'static str {
    match level {
        DecodeLevel::Payload => "payload",
        DecodeLevel::Packet => "packet",
    }
}

pub fn parse_families(list: &str) -> Result<Vec<FamilyKind>> {
    let mut out = Vec::new();
    for name in split_list(list) {
        let kind: FamilyKind = name.parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    ensure!(!out.is_empty(), "--families needs at least one name; valid names: {}", FamilyKind::valid_names());
    Ok(out)
}

pub fn parse_coding_rates(s: &str) -> Result<Vec<CodingRate>> {
    if s.trim().eq_ignore_ascii_case("both") {
        return Ok(CodingRate::BOTH.to_vec());
    }
    Ok(vec![s.parse::<CodingRate>()?])
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(s: &str) -> Result<u64> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => s.replace('_', "").parse(),
    };
    parsed.with_context(|| format!("--seed: `{s}` is not a 64-bit integer"))
}

/// Node counts: `a,b,c`, `start:stop:step`, or `start:stop:lin|log[:points]`
/// (20 points by default, endpoints included, rounded and deduplicated).
pub fn parse_node_sweep(s: &str) -> Result<Vec<usize>> {
    let nodes: Vec<usize> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        ensure!((3..=4).contains(&parts.len()), "--nodes: expected start:stop:step or start:stop:lin|log[:points]");
        let start = parse_number(parts[0], "nodes")?;
        let stop = parse_number(parts[1], "nodes")?;
        ensure!(start > 0 && start <= stop, "--nodes: need 0 < start <= stop");
        let points = match parts.get(3) {
            Some(p) => parse_number(p, "nodes")?,
            None => 20,
        };
        match parts[2] {
            "lin" | "log" => {
                ensure!(points >= 2 || start == stop, "--nodes: need at least 2 points");
                let (a, b) = if parts[2] == "log" {
                    ((start as f64).ln(), (stop as f64).ln())
                } else {
                    (start as f64, stop as f64)
                };
                let mut v: Vec<usize> = (0..points.max(1))
                    .map(|i| {
                        let t = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
                        let x = a + t * (b - a);
                        let x = if parts[2] == "log" { x.exp() } else { x };
                        (x.round() as usize).clamp(start, stop)
                    })
                    .collect();
                v.dedup();
                v
            }
            step => {
                ensure!(parts.len() == 3, "--nodes: a numeric step takes no point count");
                let step = parse_number(step, "nodes")?;
                ensure!(step > 0, "--nodes: step must be positive");
                (start..=stop).step_by(step).collect()
            }
        }
    } else {
        split_list(s).map(|p| parse_number(p, "nodes")).collect::<Result<_>>()?
    };
    ensure!(!nodes.is_empty(), "--nodes: empty sweep");
    ensure!(nodes.iter().all(|&n| n > 0), "--nodes: counts must be positive");
    ensure!(nodes.windows(2).all(|w| w[0] < w[1]), "--nodes: counts must be strictly ascending");
    Ok(nodes)
}
