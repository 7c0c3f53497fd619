//! Periodic Hamming correlation, gap metrics, and family-level reports.
//!
//! `H(X, Y; t) = #{i : x_i = y_(i+t mod L)}`. All counts are integers; family
//! averages are formed from exact integer totals so that results do not
//! depend on how the pair loop is split across threads.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::families::{FhSequence, FhsFamily};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorrelationError {
    #[error("sequences differ in period ({0} vs {1})")]
    PeriodMismatch(usize, usize),
    #[error("sequences differ in alphabet ({0} vs {1})")]
    AlphabetMismatch(usize, usize),
    #[error("shift {shift} outside [0, {period})")]
    ShiftOutOfRange { shift: usize, period: usize },
    #[error("period {0} too short for this metric")]
    PeriodTooShort(usize),
    #[error("alphabet size must be positive")]
    EmptyAlphabet,
    #[error("prefix length {prefix} not in 2..={period}")]
    BadPrefix { prefix: usize, period: usize },
}

pub type Result<T, E = CorrelationError> = std::result::Result<T, E>;

fn check_pair(x: &FhSequence, y: &FhSequence) -> Result<()> {
    if x.period() != y.period() {
        return Err(CorrelationError::PeriodMismatch(x.period(), y.period()));
    }
    if x.channel_count() != y.channel_count() {
        return Err(CorrelationError::AlphabetMismatch(x.channel_count(), y.channel_count()));
    }
    Ok(())
}

pub fn hamming_correlation(x: &FhSequence, y: &FhSequence, shift: usize) -> Result<usize> {
    check_pair(x, y)?;
    let len = x.period();
    if shift >= len {
        return Err(CorrelationError::ShiftOutOfRange { shift, period: len });
    }
    let (xv, yv) = (x.values(), y.values());
    Ok((0..len).filter(|&i| xv[i] == yv[(i + shift) % len]).count())
}

/// Maximum and total of a set of correlation values; `avg()` divides the
/// total by the number of shifts that were summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrelationStats {
    pub max: usize,
    pub total: usize,
    pub shifts: usize,
}

impl CorrelationStats {
    pub fn avg(&self) -> f64 {
        self.total as f64 / self.shifts as f64
    }
}

/// Positions of every channel value in a sequence, grouped by value.
#[derive(Debug, Clone)]
struct PositionIndex {
    starts: Vec<u32>,
    positions: Vec<u32>,
}

impl PositionIndex {
    fn new(values: &[usize], channel_count: usize) -> Self {
        let mut starts = vec![0u32; channel_count + 1];
        for &v in values {
            starts[v + 1] += 1;
        }
        for c in 0..channel_count {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut positions = vec![0u32; values.len()];
        for (i, &v) in values.iter().enumerate() {
            positions[fill[v] as usize] = i as u32;
            fill[v] += 1;
        }
        Self { starts, positions }
    }

    fn of(&self, value: usize) -> &[u32] {
        &self.positions[self.starts[value] as usize..self.starts[value + 1] as usize]
    }
}

/// `profile[t] = H(x, y; t)` for every shift, in time proportional to the
/// number of coincidences rather than `L^2`.
fn shift_profile(x: &[usize], y: &PositionIndex, profile: &mut [u32]) {
    let len = profile.len();
    profile.fill(0);
    for (i, &v) in x.iter().enumerate() {
        for &j in y.of(v) {
            let t = (j as usize + len - i) % len;
            profile[t] += 1;
        }
    }
}

/// Max and mean of `H(X, X; t)` over `t` in `1..L`.
pub fn autocorrelation_stats(x: &FhSequence) -> Result<CorrelationStats> {
    let len = x.period();
    if len < 2 {
        return Err(CorrelationError::PeriodTooShort(len));
    }
    let index = PositionIndex::new(x.values(), x.channel_count());
    let mut profile = vec![0u32; len];
    shift_profile(x.values(), &index, &mut profile);
    Ok(stats(&profile[1..]))
}

/// Max and mean of `H(X, Y; t)` over `t` in `0..L`.
pub fn crosscorrelation_stats(x: &FhSequence, y: &FhSequence) -> Result<CorrelationStats> {
    check_pair(x, y)?;
    let index = PositionIndex::new(y.values(), y.channel_count());
    let mut profile = vec![0u32; x.period()];
    shift_profile(x.values(), &index, &mut profile);
    Ok(stats(&profile))
}

fn stats(profile: &[u32]) -> CorrelationStats {
    CorrelationStats {
        max: profile.iter().copied().max().unwrap_or(0) as usize,
        total: profile.iter().map(|&h| h as usize).sum(),
        shifts: profile.len(),
    }
}

/// Smallest absolute difference between cyclically consecutive hops.
pub fn minimum_gap(x: &FhSequence) -> Result<usize> {
    let v = x.values();
    if v.len() < 2 {
        return Err(CorrelationError::PeriodTooShort(v.len()));
    }
    let wrap = v[v.len() - 1].abs_diff(v[0]);
    Ok(v.windows(2).map(|w| w[1].abs_diff(w[0])).fold(wrap, usize::min))
}

/// Lower bound on the maximum periodic Hamming autocorrelation of any
/// sequence of period `period` over `alphabet` channels:
/// `ceil((L - e)(L + e - l) / (l (L - 1)))` with `e = L mod l`. Wide-gap
/// sequences use the tighter divisor `l (L - 3)`.
pub fn correlation_bound(period: usize, alphabet: usize, wide_gap: bool) -> Result<usize> {
    if alphabet == 0 {
        return Err(CorrelationError::EmptyAlphabet);
    }
    let removed = if wide_gap { 3 } else { 1 };
    if period <= removed {
        return Err(CorrelationError::PeriodTooShort(period));
    }
    let (len, ell) = (period as u128, alphabet as u128);
    let eps = len % ell;
    // (L + e - l) is only negative when L < l, in which case L - e = 0.
    let numerator = (len - eps) * (len + eps).saturating_sub(ell);
    let denominator = ell * (len - removed as u128);
    Ok(numerator.div_ceil(denominator) as usize)
}

/// Outcome of the wide-gap optimality test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WideGapVerdict {
    /// Two consecutive hops share a channel.
    NotWideGap,
    Optimal {
        h_max: usize,
        bound: usize,
    },
    Suboptimal {
        h_max: usize,
        bound: usize,
    },
}

impl WideGapVerdict {
    pub fn is_optimal(&self) -> bool {
        matches!(self, WideGapVerdict::Optimal { .. })
    }
}

pub fn is_optimal_wgfhs(x: &FhSequence) -> Result<WideGapVerdict> {
    if minimum_gap(x)? == 0 {
        return Ok(WideGapVerdict::NotWideGap);
    }
    let h_max = autocorrelation_stats(x)?.max;
    let bound = correlation_bound(x.period(), x.channel_count(), true)?;
    Ok(if h_max == bound {
        WideGapVerdict::Optimal { h_max, bound }
    } else {
        WideGapVerdict::Suboptimal { h_max, bound }
    })
}

/// How member pairs are averaged into family cross-correlation figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PairAveraging {
    /// Ordered pairs `i != j`, divisor `M (M - 1)`.
    OrderedDistinct,
    /// Unordered pairs `i <= j`, divisor `M (M + 1) / 2`. A self pair
    /// contributes the member's out-of-phase autocorrelation.
    #[default]
    WithSelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportOptions {
    pub pairing: PairAveraging,
    /// Scores distinct grid-based members as if each frame picked one of this
    /// many grids independently: two members only meet on a shared grid, so
    /// their cross-correlation is weighted by `1 / grids`.
    pub grid_embedding: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub family_name: String,
    pub size: usize,
    pub length: usize,
    /// Absent when the family has a single member.
    pub avg_max_cc: Option<f64>,
    pub avg_avg_cc: Option<f64>,
    pub avg_max_ac: f64,
    pub avg_avg_ac: f64,
}

/// Integer totals behind a [`CorrelationReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FamilyTotals {
    pub auto_max: u64,
    pub auto_sum: u64,
    pub cross_max: u64,
    pub cross_sum: u64,
}

impl std::ops::Add for FamilyTotals {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            auto_max: self.auto_max + o.auto_max,
            auto_sum: self.auto_sum + o.auto_sum,
            cross_max: self.cross_max + o.cross_max,
            cross_sum: self.cross_sum + o.cross_sum,
        }
    }
}

/// Sums of per-member autocorrelation and per-unordered-pair
/// cross-correlation figures over `sequences`.
pub fn family_totals(sequences: &[FhSequence]) -> FamilyTotals {
    let Some(first) = sequences.first() else {
        return FamilyTotals::default();
    };
    let (len, channels) = (first.period(), first.channel_count());
    let indexes: Vec<PositionIndex> = sequences.iter().map(|s| PositionIndex::new(s.values(), channels)).collect();
    (0..sequences.len())
        .into_par_iter()
        .map_init(
            || vec![0u32; len],
            |profile, a| {
                let x = sequences[a].values();
                shift_profile(x, &indexes[a], profile);
                let auto = stats(&profile[1..]);
                let mut t =
                    FamilyTotals { auto_max: auto.max as u64, auto_sum: auto.total as u64, ..Default::default() };
                for index in &indexes[a + 1..] {
                    shift_profile(x, index, profile);
                    let cross = stats(profile);
                    t.cross_max += cross.max as u64;
                    t.cross_sum += cross.total as u64;
                }
                t
            },
        )
        .reduce(FamilyTotals::default, |a, b| a + b)
}

/// Family averages of auto- and cross-correlation, optionally over the first
/// `prefix_length` hops of every member.
pub fn family_report(
    family: &FhsFamily,
    prefix_length: Option<usize>,
    options: ReportOptions,
) -> Result<CorrelationReport> {
    let period = family.period();
    let length = prefix_length.unwrap_or(period);
    if length < 2 || length > period {
        return Err(CorrelationError::BadPrefix { prefix: length, period });
    }
    let truncated;
    let sequences = if length == period {
        family.sequences()
    } else {
        truncated = family.truncated(length).expect("prefix length checked above");
        truncated.sequences()
    };
    let totals = family_totals(sequences);
    let m = sequences.len() as f64;
    let l = length as f64;
    let grids = options.grid_embedding.unwrap_or(1).max(1) as f64;

    let avg_max_ac = totals.auto_max as f64 / m;
    let avg_avg_ac = totals.auto_sum as f64 / (m * (l - 1.0));
    let (avg_max_cc, avg_avg_cc) = if sequences.len() < 2 {
        (None, None)
    } else {
        match options.pairing {
            PairAveraging::OrderedDistinct => {
                let pairs = m * (m - 1.0) / 2.0;
                (Some(totals.cross_max as f64 / (grids * pairs)), Some(totals.cross_sum as f64 / (grids * pairs * l)))
            }
            PairAveraging::WithSelf => {
                let pairs = m * (m + 1.0) / 2.0;
                (
                    Some((totals.auto_max as f64 + totals.cross_max as f64 / grids) / pairs),
                    Some((totals.auto_sum as f64 / (l - 1.0) + totals.cross_sum as f64 / (grids * l)) / pairs),
                )
            }
        }
    };
    Ok(CorrelationReport {
        family_name: family.name().to_string(),
        size: sequences.len(),
        length,
        avg_max_cc,
        avg_avg_cc,
        avg_max_ac,
        avg_avg_ac,
    })
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.3}"))
}

pub const SUMMARY_CSV_HEADER: &str = "family,size,avg_max_cc,avg_avg_cc,avg_max_ac,avg_avg_ac";
pub const SWEEP_CSV_HEADER: &str = "family,length,avg_max_cc,avg_avg_cc";

pub fn write_summary_csv<W: Write>(mut out: W, reports: &[CorrelationReport]) -> io::Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{:.3},{:.3}",
            r.family_name,
            r.size,
            fmt3(r.avg_max_cc),
            fmt3(r.avg_avg_cc),
            r.avg_max_ac,
            r.avg_avg_ac
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut out: W, reports: &[CorrelationReport]) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{},{},{},{}", r.family_name, r.length, fmt3(r.avg_max_cc), fmt3(r.avg_avg_cc))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{build_li_fan_base, LiFanMode};

    fn seq(v: &[usize], channels: usize) -> FhSequence {
        FhSequence::new(v.to_vec(), channels).unwrap()
    }

    fn naive(x: &[usize], y: &[usize], t: usize) -> usize {
        (0..x.len()).filter(|&i| x[i] == y[(i + t) % x.len()]).count()
    }

    #[test]
    fn hamming_examples() {
        let x = seq(&[0, 1, 2], 3);
        assert_eq!(hamming_correlation(&x, &x, 0).unwrap(), 3);
        assert_eq!(hamming_correlation(&x, &seq(&[2, 0, 1], 3), 1).unwrap(), 3);
        assert_eq!(hamming_correlation(&x, &seq(&[0, 2, 1], 3), 0).unwrap(), 1);
    }

    #[test]
    fn hamming_rejects_mismatch() {
        let x = seq(&[0, 1, 2], 3);
        assert_eq!(hamming_correlation(&x, &seq(&[0, 1], 3), 0), Err(CorrelationError::PeriodMismatch(3, 2)));
        assert!(hamming_correlation(&x, &seq(&[0, 1, 2], 4), 0).is_err());
        assert!(hamming_correlation(&x, &x, 3).is_err());
    }

    #[test]
    fn autocorrelation_examples() {
        let ramp = seq(&(0..9).collect::<Vec<_>>(), 9);
        let s = autocorrelation_stats(&ramp).unwrap();
        assert_eq!((s.max, s.total), (0, 0));
        let constant = autocorrelation_stats(&seq(&[5, 5, 5], 6)).unwrap();
        assert_eq!(constant.max, 3);
        assert_eq!(constant.avg(), 3.0);
        assert!(autocorrelation_stats(&seq(&[1], 2)).is_err());
        let toy = build_li_fan_base(7, 2, LiFanMode::TwoEll).unwrap();
        assert_eq!(autocorrelation_stats(&toy).unwrap().max, 2);
    }

    #[test]
    fn crosscorrelation_examples() {
        let x = seq(&[0, 3, 1, 4, 2], 10);
        let rot = seq(&[4, 2, 0, 3, 1], 10);
        assert_eq!(crosscorrelation_stats(&x, &rot).unwrap().max, 5);
        let disjoint = seq(&[5, 6, 7, 8, 9], 10);
        let s = crosscorrelation_stats(&x, &disjoint).unwrap();
        assert_eq!((s.max, s.total), (0, 0));
        assert_eq!(s.shifts, 5);
    }

    #[test]
    fn profile_matches_naive() {
        let x = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5];
        let y = [2, 7, 1, 8, 2, 8, 1, 8, 2, 8, 4];
        let idx = PositionIndex::new(&y, 10);
        let mut profile = vec![0; x.len()];
        shift_profile(&x, &idx, &mut profile);
        for (t, &h) in profile.iter().enumerate() {
            assert_eq!(h as usize, naive(&x, &y, t));
        }
    }

    #[test]
    fn gap_examples() {
        assert_eq!(minimum_gap(&seq(&[0, 5, 10], 11)).unwrap(), 5);
        assert_eq!(minimum_gap(&seq(&[3, 3], 4)).unwrap(), 0);
        assert!(minimum_gap(&seq(&[3], 4)).is_err());
        assert_eq!(minimum_gap(&build_li_fan_base(7, 2, LiFanMode::TwoEll).unwrap()).unwrap(), 2);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(correlation_bound(562, 281, true).unwrap(), 2);
        assert_eq!(correlation_bound(35, 35, false).unwrap(), 0);
        assert_eq!(correlation_bound(14, 7, true).unwrap(), 2);
        // L < l leaves nothing to force a collision
        assert_eq!(correlation_bound(31, 35, false).unwrap(), 0);
        assert!(correlation_bound(3, 7, true).is_err());
        assert!(correlation_bound(1, 7, false).is_err());
        assert!(correlation_bound(10, 0, false).is_err());
    }

    #[test]
    fn bound_is_exact_ceiling() {
        // (70 - 0)(70 - 35) / (35 * 69) = 2450 / 2415
        assert_eq!(correlation_bound(70, 35, false).unwrap(), 2);
        // (40 - 5)(40 + 5 - 35) / (35 * 37) = 350 / 1295
        assert_eq!(correlation_bound(40, 35, true).unwrap(), 1);
    }

    #[test]
    fn optimality_verdicts() {
        let toy = build_li_fan_base(7, 2, LiFanMode::TwoEll).unwrap();
        assert_eq!(is_optimal_wgfhs(&toy).unwrap(), WideGapVerdict::Optimal { h_max: 2, bound: 2 });
        assert_eq!(is_optimal_wgfhs(&seq(&[5, 5, 5, 5], 6)).unwrap(), WideGapVerdict::NotWideGap);
        let ramp = seq(&(0..8).collect::<Vec<_>>(), 8);
        assert!(is_optimal_wgfhs(&ramp).unwrap().is_optimal());
        let poor = seq(&[0, 2, 0, 2, 0, 2], 3);
        assert!(matches!(is_optimal_wgfhs(&poor).unwrap(), WideGapVerdict::Suboptimal { h_max: 6, .. }));
    }

    #[test]
    fn identical_pair_scores_full_length() {
        let x = seq(&[0, 3, 1, 4, 2], 5);
        let fam = FhsFamily::new("twin", vec![x.clone(), x], true).unwrap();
        let opts = ReportOptions { pairing: PairAveraging::OrderedDistinct, grid_embedding: None };
        let r = family_report(&fam, None, opts).unwrap();
        assert_eq!(r.avg_max_cc, Some(5.0));
        assert_eq!(r.avg_avg_cc, Some(1.0));
    }

    #[test]
    fn with_self_folds_autocorrelation_in() {
        let a = seq(&[0, 0, 1, 1], 4);
        let b = seq(&[2, 3, 2, 3], 4);
        let fam = FhsFamily::new("f", vec![a.clone(), b.clone()], false).unwrap();
        let auto_a = autocorrelation_stats(&a).unwrap().max;
        let auto_b = autocorrelation_stats(&b).unwrap().max;
        let cross = crosscorrelation_stats(&a, &b).unwrap().max;
        let r = family_report(&fam, None, ReportOptions::default()).unwrap();
        let expected = (auto_a + auto_b + cross) as f64 / 3.0;
        assert!((r.avg_max_cc.unwrap() - expected).abs() < 1e-12);
        let g = family_report(&fam, None, ReportOptions { grid_embedding: Some(8), ..Default::default() }).unwrap();
        assert!((g.avg_max_cc.unwrap() - (auto_a + auto_b) as f64 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_member_has_no_cross_metrics() {
        let fam = FhsFamily::new("solo", vec![seq(&[0, 1, 2], 3)], false).unwrap();
        let r = family_report(&fam, None, ReportOptions::default()).unwrap();
        assert_eq!((r.avg_max_cc, r.avg_avg_cc), (None, None));
        assert_eq!(r.avg_max_ac, 0.0);
    }

    #[test]
    fn prefix_report_uses_truncated_members() {
        let fam = FhsFamily::new("p", vec![seq(&[0, 1, 0, 1, 2, 3], 4), seq(&[1, 0, 1, 0, 3, 2], 4)], false).unwrap();
        let r = family_report(&fam, Some(4), ReportOptions::default()).unwrap();
        let direct = family_report(&fam.truncated(4).unwrap(), None, ReportOptions::default()).unwrap();
        assert_eq!(r, direct);
        assert_eq!(r.length, 4);
        assert!(family_report(&fam, Some(7), ReportOptions::default()).is_err());
        assert!(family_report(&fam, Some(1), ReportOptions::default()).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = CorrelationReport {
            family_name: "x".into(),
            size: 3,
            length: 31,
            avg_max_cc: Some(0.41555),
            avg_avg_cc: Some(0.1),
            avg_max_ac: 2.0,
            avg_avg_ac: 0.5,
        };
        let mut out = Vec::new();
        write_summary_csv(&mut out, std::slice::from_ref(&r)).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{SUMMARY_CSV_HEADER}\nx,3,0.416,0.100,2.000,0.500\n"));
        let mut out = Vec::new();
        write_sweep_csv(&mut out, &[r]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{SWEEP_CSV_HEADER}\nx,31,0.416,0.100\n"));
    }
}
