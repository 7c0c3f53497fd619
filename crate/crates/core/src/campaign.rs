//! Monte-Carlo campaigns over families, coding rates, gateway strategies and
//! node counts.
//!
//! Each (family, coding rate, node count, repetition) cell draws one schedule
//! from a seed derived from the master seed; every strategy is then evaluated
//! on that same schedule, so strategy comparisons are paired.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::{build_occupancy, schedule_transmissions, ChannelError, CodingRate, SimulationConfig};
use crate::families::FhsFamily;
use crate::gateway::{metrics_for, resolve_schedule, whole_kb, SimMetrics, StrategyConfig};

/// Master seed used when none is given.
pub const DEFAULT_MASTER_SEED: u64 = 0x4C52_4648;

#[derive(Debug, Clone)]
pub struct CampaignPlan {
    /// Channel and frame geometry; coding rate, node count and seed are set
    /// per cell.
    pub base: SimulationConfig,
    pub families: Vec<FhsFamily>,
    pub coding_rates: Vec<CodingRate>,
    pub strategies: Vec<StrategyConfig>,
    pub node_counts: Vec<usize>,
    pub repetitions: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub family: String,
    pub coding_rate: CodingRate,
    pub strategy: StrategyConfig,
    pub nodes: usize,
    pub rep: usize,
    pub metrics: SimMetrics,
}

/// Seed of one schedule: the first eight bytes of
/// `sha256("<master>|<family>|<cr>|<nodes>|<rep>")`, big-endian.
pub fn derive_seed(master_seed: u64, family: &str, coding_rate: CodingRate, nodes: usize, rep: usize) -> u64 {
    let key = format!("{master_seed}|{family}|{}|{nodes}|{rep}", coding_rate.number());
    let digest = Sha256::digest(key.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

impl CampaignPlan {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.repetitions == 0 {
            return Err(ChannelError::Config("repetitions must be positive".into()));
        }
        if self.families.is_empty() || self.coding_rates.is_empty() || self.strategies.is_empty() {
            return Err(ChannelError::Config("campaign needs families, coding rates and strategies".into()));
        }
        if self.node_counts.is_empty() || self.node_counts.contains(&0) {
            return Err(ChannelError::Config("node counts must be positive".into()));
        }
        for &cr in &self.coding_rates {
            let cfg = SimulationConfig { coding_rate: cr, ..self.base };
            cfg.validate()?;
            for s in &self.strategies {
                s.validate(cfg.header_slots())?;
            }
            for f in &self.families {
                cfg.check_family(f)?;
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.families.len() * self.coding_rates.len() * self.node_counts.len() * self.repetitions
    }
}

/// Runs every cell of the plan. Rows are ordered by family, coding rate,
/// strategy, node count and repetition, following the plan's list order.
pub fn run_campaign(plan: &CampaignPlan) -> Result<Vec<CampaignRow>, ChannelError> {
    plan.validate()?;
    let mut cells = Vec::with_capacity(plan.cell_count());
    for (fi, _) in plan.families.iter().enumerate() {
        for (ci, _) in plan.coding_rates.iter().enumerate() {
            for (ni, _) in plan.node_counts.iter().enumerate() {
                for rep in 0..plan.repetitions {
                    cells.push((fi, ci, ni, rep));
                }
            }
        }
    }
    let results = cells
        .par_iter()
        .map(|&(fi, ci, ni, rep)| {
            let family = &plan.families[fi];
            let (cr, nodes) = (plan.coding_rates[ci], plan.node_counts[ni]);
            let seed = derive_seed(plan.master_seed, family.name(), cr, nodes, rep);
            let cfg = SimulationConfig { coding_rate: cr, node_count: nodes, rng_seed: seed, ..plan.base };
            let plans = schedule_transmissions(&cfg, family, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let occupancy = build_occupancy(&plans, &cfg);
            let per_strategy: Vec<SimMetrics> = plan
                .strategies
                .iter()
                .map(|s| metrics_for(&resolve_schedule(&plans, &cfg, &occupancy, s), cr))
                .collect();
            Ok(((fi, ci, ni, rep), per_strategy))
        })
        .collect::<Result<Vec<_>, ChannelError>>()?;

    let mut rows = Vec::with_capacity(results.len() * plan.strategies.len());
    let mut keyed: Vec<_> = results
        .into_iter()
        .flat_map(|((fi, ci, ni, rep), metrics)| {
            metrics.into_iter().enumerate().map(move |(si, m)| ((fi, ci, si, ni, rep), m))
        })
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    for ((fi, ci, si, ni, rep), metrics) in keyed {
        rows.push(CampaignRow {
            family: plan.families[fi].name().to_string(),
            coding_rate: plan.coding_rates[ci],
            strategy: plan.strategies[si],
            nodes: plan.node_counts[ni],
            rep,
            metrics,
        });
    }
    Ok(rows)
}

pub const CAMPAIGN_CSV_HEADER: &str =
    "family,cr,demodulators,early_decode,early_drop,early_header_drop,header_tolerance,\
nodes,rep,sent,decoded_payloads,decoded_packets,collided,header_dropped,discarded,data_sent_kb,data_decoded_kb";

pub fn write_campaign_csv<W: Write>(mut out: W, rows: &[CampaignRow]) -> io::Result<()> {
    writeln!(out, "{CAMPAIGN_CSV_HEADER}")?;
    for r in rows {
        let (s, m) = (&r.strategy, &r.metrics);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
            r.family,
            r.coding_rate.number(),
            s.demodulators,
            u8::from(s.early_decode),
            u8::from(s.early_drop),
            u8::from(s.early_header_drop),
            s.header_tolerance_slots,
            r.nodes,
            r.rep,
            m.sent,
            m.decoded_payloads,
            m.decoded_packets,
            m.collided,
            m.header_dropped,
            m.discarded,
            m.data_sent_kb(),
            m.data_decoded_kb()
        )?;
    }
    Ok(())
}

/// Reads rows written by [`write_campaign_csv`]. Lines starting with `#`
/// and blank lines are skipped; the column header must match exactly.
pub fn read_campaign_csv(text: &str) -> Result<Vec<CampaignRow>, ChannelError> {
    let bad = |line: usize, what: &str| ChannelError::Config(format!("campaign CSV line {line}: {what}"));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, header)) if header.trim() == CAMPAIGN_CSV_HEADER => {}
        Some((i, _)) => return Err(bad(i + 1, "unexpected column header")),
        None => return Err(ChannelError::Config("campaign CSV is empty".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 17 {
            return Err(bad(i + 1, &format!("expected 17 fields, found {}", f.len())));
        }
        let int = |k: usize| f[k].parse::<usize>().map_err(|_| bad(i + 1, &format!("bad integer `{}`", f[k])));
        let flag = |k: usize| match f[k] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(bad(i + 1, &format!("bad flag `{other}`"))),
        };
        let coding_rate: CodingRate = f[1].parse()?;
        rows.push(CampaignRow {
            family: f[0].to_string(),
            coding_rate,
            strategy: StrategyConfig {
                early_decode: flag(3)?,
                early_drop: flag(4)?,
                early_header_drop: flag(5)?,
                header_tolerance_slots: int(6)?,
                demodulators: f[2].parse()?,
            },
            nodes: int(7)?,
            rep: int(8)?,
            metrics: SimMetrics {
                sent: int(9)?,
                decoded_payloads: int(10)?,
                decoded_packets: int(11)?,
                collided: int(12)?,
                header_dropped: int(13)?,
                discarded: int(14)?,
                payload_bytes: coding_rate.payload_bytes(),
            },
        });
    }
    Ok(rows)
}

/// Mean metrics of one (family, coding rate, strategy, node count) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMean {
    pub family: String,
    pub coding_rate: CodingRate,
    pub strategy: StrategyConfig,
    pub nodes: usize,
    pub repetitions: usize,
    pub decoded_payloads: f64,
    pub decoded_packets: f64,
    /// Packet-level decoded data (header and payload both received).
    pub data_decoded_kb: f64,
    /// Payload-level decoded data, header or not.
    pub payload_decoded_kb: f64,
}

impl CellMean {
    pub fn decoded_kb(&self, level: DecodeLevel) -> f64 {
        match level {
            DecodeLevel::Packet => self.data_decoded_kb,
            DecodeLevel::Payload => self.payload_decoded_kb,
        }
    }
}

/// Which decoded frames count as delivered data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecodeLevel {
    /// Payload rebuilt and at least one header replica received.
    Packet,
    /// Payload rebuilt.
    Payload,
}

pub fn cell_means(rows: &[CampaignRow]) -> Vec<CellMean> {
    let mut out: Vec<CellMean> = Vec::new();
    for r in rows {
        let same = out.last().is_some_and(|c| {
            c.family == r.family && c.coding_rate == r.coding_rate && c.strategy == r.strategy && c.nodes == r.nodes
        });
        if !same {
            out.push(CellMean {
                family: r.family.clone(),
                coding_rate: r.coding_rate,
                strategy: r.strategy,
                nodes: r.nodes,
                repetitions: 0,
                decoded_payloads: 0.0,
                decoded_packets: 0.0,
                data_decoded_kb: 0.0,
                payload_decoded_kb: 0.0,
            });
        }
        let c = out.last_mut().expect("pushed above");
        c.repetitions += 1;
        c.decoded_payloads += r.metrics.decoded_payloads as f64;
        c.decoded_packets += r.metrics.decoded_packets as f64;
        c.data_decoded_kb += r.metrics.data_decoded_kb();
        c.payload_decoded_kb += r.metrics.payload_decoded_kb();
    }
    for c in &mut out {
        let n = c.repetitions as f64;
        c.decoded_payloads /= n;
        c.decoded_packets /= n;
        c.data_decoded_kb /= n;
        c.payload_decoded_kb /= n;
    }
    out
}

/// Mean decoded data of two families at each node count, as
/// `(nodes, first, second)`, for one coding rate and strategy.
pub fn paired_series(
    means: &[CellMean],
    coding_rate: CodingRate,
    strategy: &StrategyConfig,
    level: DecodeLevel,
    first: &str,
    second: &str,
) -> Vec<(usize, f64, f64)> {
    let pick = |name: &str| -> BTreeMap<usize, f64> {
        means
            .iter()
            .filter(|c| c.family == name && c.coding_rate == coding_rate && c.strategy == *strategy)
            .map(|c| (c.nodes, c.decoded_kb(level)))
            .collect()
    };
    let (a, b) = (pick(first), pick(second));
    a.iter().filter_map(|(&n, &x)| b.get(&n).map(|&y| (n, x, y))).collect()
}

/// First node count from which `challenger` decodes at least as much as
/// `incumbent` at every later point of the sweep, provided it was behind
/// somewhere before.
pub fn crossover_point(series: &[(usize, f64, f64)]) -> Option<usize> {
    let mut point = None;
    for &(nodes, challenger, incumbent) in series.iter().rev() {
        if challenger >= incumbent {
            point = Some(nodes);
        } else {
            break;
        }
    }
    match (point, series.first()) {
        (Some(p), Some(&(first, _, _))) if p != first => Some(p),
        _ => None,
    }
}

/// A run of consecutive sweep points led by the same family.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadRange {
    pub coding_rate: CodingRate,
    pub strategy: StrategyConfig,
    pub from_nodes: usize,
    pub to_nodes: usize,
    /// Data sent by `from_nodes` / `to_nodes` frames, in whole kB.
    pub from_kb: u64,
    pub to_kb: u64,
    pub leader: String,
}

/// For every (coding rate, strategy), the node ranges over which each family
/// has the highest mean decoded data. Ties go to the family listed first.
pub fn leadership_ranges(means: &[CellMean], family_order: &[String], level: DecodeLevel) -> Vec<LeadRange> {
    let mut groups: Vec<(CodingRate, StrategyConfig)> = Vec::new();
    for c in means {
        if !groups.contains(&(c.coding_rate, c.strategy)) {
            groups.push((c.coding_rate, c.strategy));
        }
    }
    let mut out = Vec::new();
    for (cr, strategy) in groups {
        let mut by_nodes: BTreeMap<usize, Vec<&CellMean>> = BTreeMap::new();
        for c in means.iter().filter(|c| c.coding_rate == cr && c.strategy == strategy) {
            by_nodes.entry(c.nodes).or_default().push(c);
        }
        let mut current: Option<LeadRange> = None;
        for (nodes, cells) in by_nodes {
            let leader = family_order.iter().filter_map(|f| cells.iter().find(|c| &c.family == f)).fold(
                None::<&CellMean>,
                |best, c| match best {
                    Some(b) if b.decoded_kb(level) >= c.decoded_kb(level) => Some(b),
                    _ => Some(c),
                },
            );
            let Some(leader) = leader else { continue };
            let kb = whole_kb(nodes as u64 * cr.payload_bytes());
            match &mut current {
                Some(r) if r.leader == leader.family => {
                    r.to_nodes = nodes;
                    r.to_kb = kb;
                }
                _ => {
                    out.extend(current.take());
                    current = Some(LeadRange {
                        coding_rate: cr,
                        strategy,
                        from_nodes: nodes,
                        to_nodes: nodes,
                        from_kb: kb,
                        to_kb: kb,
                        leader: leader.family.clone(),
                    });
                }
            }
        }
        out.extend(current);
    }
    out
}

pub const SUMMARY_CSV_HEADER: &str =
    "cr,demodulators,early_decode,early_drop,early_header_drop,header_tolerance,from_nodes,to_nodes,from_kb,to_kb,leader";

pub fn write_summary_csv<W: Write>(mut out: W, ranges: &[LeadRange]) -> io::Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for r in ranges {
        let s = &r.strategy;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.coding_rate.number(),
            s.demodulators,
            u8::from(s.early_decode),
            u8::from(s.early_drop),
            u8::from(s.early_header_drop),
            s.header_tolerance_slots,
            r.from_nodes,
            r.to_nodes,
            r.from_kb,
            r.to_kb,
            r.leader
        )?;
    }
    Ok(())
}
