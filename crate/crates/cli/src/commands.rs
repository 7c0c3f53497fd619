use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use lrfhss_core::campaign::{
    cell_means, derive_seed, leadership_ranges, read_campaign_csv, run_campaign, write_campaign_csv, write_summary_csv,
    CampaignPlan, CampaignRow, DecodeLevel, LeadRange,
};
use lrfhss_core::catalog::{build_family, CatalogOptions, FamilyKind};
use lrfhss_core::channel::{preliminary_collision_rate, CodingRate, PreliminaryConfig, SimulationConfig};
use lrfhss_core::correlation::{family_report, write_summary_csv as write_correlation_csv, write_sweep_csv};
use lrfhss_core::families::GridLayout;
use lrfhss_core::gateway::StrategyConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::settings::{level_name, Settings};

pub const CORRELATION_SUMMARY_FILE: &str = "correlation_summary.csv";
pub const CORRELATION_SWEEP_FILE: &str = "correlation_sweep.csv";
pub const CAMPAIGN_FILE: &str = "campaign.csv";
pub const LEADERSHIP_FILE: &str = "leadership_summary.csv";
pub const COLLISION_RATE_FILE: &str = "collision_rate.csv";

/// Creates `dir/name`, writes the `# ...` provenance line, then `body`.
fn write_output(
    dir: &Path,
    name: &str,
    header: &str,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# {header}")
        .and_then(|()| body(&mut out))
        .and_then(|()| out.flush())
        .with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

pub fn correlate(settings: &Settings, export_families: bool) -> Result<()> {
    let header = settings.describe("correlate");
    let opts = CatalogOptions::correlation();
    let mut summary = Vec::new();
    let mut sweep = Vec::new();
    for &kind in &settings.families {
        let family = build_family(kind, &opts)?;
        let report_opts = kind.report_options(opts.layout);
        summary.push(family_report(&family, None, report_opts)?);
        if export_families {
            write_output(&settings.out.join("families"), &format!("{kind}.txt"), &header, |w| family.write_text(w))?;
        }
        let longest = kind.max_length().map_or(settings.max_length, |m| m.min(settings.max_length));
        for length in 2..=longest {
            let family = build_family(kind, &opts.with_length(length))?;
            sweep.push(family_report(&family, None, report_opts)?);
        }
    }
    write_output(&settings.out, CORRELATION_SUMMARY_FILE, &header, |w| write_correlation_csv(w, &summary))?;
    write_output(&settings.out, CORRELATION_SWEEP_FILE, &header, |w| write_sweep_csv(w, &sweep))?;
    for r in &summary {
        let cc = r.avg_max_cc.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{:<14} M={:<4} avg max cc {cc}", r.family_name, r.size);
    }
    Ok(())
}

fn strategies(settings: &Settings) -> Vec<StrategyConfig> {
    settings
        .demodulators
        .iter()
        .map(|&demodulators| StrategyConfig {
            early_decode: settings.early_decode,
            early_drop: settings.early_drop,
            early_header_drop: settings.header_drop,
            header_tolerance_slots: settings.header_tolerance,
            demodulators,
        })
        .collect()
}

pub fn simulate(settings: &Settings) -> Result<()> {
    let opts = CatalogOptions::simulation(GridLayout::EU137);
    let families = settings.families.iter().map(|&k| build_family(k, &opts)).collect::<Result<Vec<_>, _>>()?;
    let plan = CampaignPlan {
        base: SimulationConfig::new(CodingRate::Cr1, 0),
        families,
        coding_rates: settings.coding_rates.clone(),
        strategies: strategies(settings),
        node_counts: settings.nodes.clone(),
        repetitions: settings.repetitions,
        master_seed: settings.seed,
    };
    plan.validate().context("invalid simulation configuration")?;
    let rows = run_campaign(&plan)?;
    let header = settings.describe("simulate");
    write_output(&settings.out, CAMPAIGN_FILE, &header, |w| write_campaign_csv(w, &rows))?;
    let order: Vec<String> = settings.families.iter().map(|k| k.to_string()).collect();
    summarize(&rows, &order, settings.level, &settings.out, &header)
}

fn summarize(rows: &[CampaignRow], order: &[String], level: DecodeLevel, out: &Path, header: &str) -> Result<()> {
    let ranges = leadership_ranges(&cell_means(rows), order, level);
    write_output(out, LEADERSHIP_FILE, header, |w| write_summary_csv(w, &ranges))?;
    print_ranges(&ranges, level);
    Ok(())
}

fn print_ranges(ranges: &[LeadRange], level: DecodeLevel) {
    println!("best family by mean {} data decoded", level_name(level));
    for r in ranges {
        println!(
            "{} {} nodes {:>5}..{:<5} ({:>4}..{:<4} kB sent)  {}",
            r.coding_rate,
            r.strategy.fingerprint(),
            r.from_nodes,
            r.to_nodes,
            r.from_kb,
            r.to_kb,
            r.leader
        );
    }
}

pub fn collision_rate(settings: &Settings) -> Result<()> {
    ensure!(
        settings.families.contains(&FamilyKind::Driver),
        "collision-rate normalizes by the driver family, so --families must include `driver`"
    );
    let opts = CatalogOptions::simulation(GridLayout::EU137);
    let families = settings.families.iter().map(|&k| build_family(k, &opts)).collect::<Result<Vec<_>, _>>()?;
    let reps = settings.repetitions;
    let mut lines = Vec::new();
    for &cr in &settings.coding_rates {
        let cfg = PreliminaryConfig::new(cr);
        for &nodes in &settings.nodes {
            let mut rates = Vec::with_capacity(families.len());
            for family in &families {
                let (mut cell, mut fragment) = (0.0, 0.0);
                for rep in 0..reps {
                    let seed = derive_seed(settings.seed, family.name(), cr, nodes, rep);
                    let o = preliminary_collision_rate(&cfg, nodes, family, &mut ChaCha8Rng::seed_from_u64(seed))?;
                    cell += o.cell_rate();
                    fragment += o.fragment_rate();
                }
                rates.push((family.name(), cell / reps as f64, fragment / reps as f64));
            }
            let (_, base_cell, base_fragment) =
                *rates.iter().find(|r| r.0 == FamilyKind::Driver.name()).expect("driver checked above");
            let relative = |v: f64, base: f64| if base > 0.0 { format!("{:.4}", v / base) } else { String::new() };
            for (name, c, f) in rates {
                lines.push(format!(
                    "{name},{},{nodes},{reps},{c:.6},{},{f:.6},{}",
                    cr.number(),
                    relative(c, base_cell),
                    relative(f, base_fragment)
                ));
            }
        }
    }
    let header = settings.describe("collision-rate");
    write_output(&settings.out, COLLISION_RATE_FILE, &header, |w| {
        writeln!(w, "family,cr,nodes,reps,cell_rate,relative_rate,fragment_rate,relative_fragment_rate")?;
        lines.iter().try_for_each(|l| writeln!(w, "{l}"))
    })?;
    Ok(())
}

pub fn report(input: &Path, level: DecodeLevel, out: &Path) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let rows = read_campaign_csv(&text).with_context(|| format!("parsing {}", input.display()))?;
    ensure!(!rows.is_empty(), "{} holds no campaign rows", input.display());
    let mut order: Vec<String> = Vec::new();
    for r in &rows {
        if !order.contains(&r.family) {
            order.push(r.family.clone());
        }
    }
    let origin = text.lines().next().filter(|l| l.starts_with('#')).map(|l| l.trim_start_matches('#').trim());
    let header = format!(
        "lrfhss {} report input={} level={} source=[{}]",
        env!("CARGO_PKG_VERSION"),
        input.display(),
        level_name(level),
        origin.unwrap_or("unknown")
    );
    summarize(&rows, &order, level, out, &header)
}
