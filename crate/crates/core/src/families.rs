//! Frequency-hopping sequence families adapted to LR-FHSS channel plans.
//!
//! Two kinds of family live here. Grid-based families (driver,
//! Lempel-Greenberger, hash) hop between positions inside one grid; a frame
//! picks a grid and [`GridLayout::map_hop`] turns each position into an
//! absolute OBW index. Direct families (Li-Fan) already carry absolute OBW
//! indices.

use std::fmt;
use std::io::{self, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lfsr::{LfsrConfig, LfsrError};

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("a hopping sequence needs at least one hop")]
    EmptySequence,
    #[error("channel {value} is outside an alphabet of {channel_count}")]
    ValueOutOfRange { value: usize, channel_count: usize },
    #[error("a family needs at least one sequence")]
    EmptyFamily,
    #[error("family members disagree: {0}")]
    Mismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("polynomial {polynomial:#x} has period {period}, not the maximal {expected}")]
    NotMaximal { polynomial: u32, period: usize, expected: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error("only {produced} of {requested} hops survived {states} LFSR states")]
    Exhausted { requested: usize, produced: usize, states: usize },
    #[error(transparent)]
    Lfsr(#[from] LfsrError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = FamilyError> = std::result::Result<T, E>;

/// One periodic hopping sequence over the alphabet `0..channel_count`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FhSequence {
    values: Vec<usize>,
    channel_count: usize,
}

impl FhSequence {
    pub fn new(values: Vec<usize>, channel_count: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(FamilyError::EmptySequence);
        }
        if let Some(&value) = values.iter().find(|&&v| v >= channel_count) {
            return Err(FamilyError::ValueOutOfRange { value, channel_count });
        }
        Ok(Self { values, channel_count })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn period(&self) -> usize {
        self.values.len()
    }

    /// Channel used on hop `index`; the sequence repeats with its period.
    pub fn hop(&self, index: usize) -> usize {
        self.values[index % self.values.len()]
    }

    pub fn prefix(&self, length: usize) -> Result<Self> {
        if length == 0 || length > self.values.len() {
            return Err(FamilyError::InvalidParameter(format!(
                "prefix length {length} not in 1..={}",
                self.values.len()
            )));
        }
        Ok(Self { values: self.values[..length].to_vec(), channel_count: self.channel_count })
    }
}

/// A named set of sequences sharing one alphabet and one period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FhsFamily {
    name: String,
    sequences: Vec<FhSequence>,
    grid_based: bool,
}

impl FhsFamily {
    pub fn new(name: impl Into<String>, sequences: Vec<FhSequence>, grid_based: bool) -> Result<Self> {
        let first = sequences.first().ok_or(FamilyError::EmptyFamily)?;
        let (channels, period) = (first.channel_count(), first.period());
        for (i, s) in sequences.iter().enumerate() {
            if s.channel_count() != channels || s.period() != period {
                return Err(FamilyError::Mismatch(format!(
                    "sequence {i} has {} channels and period {}, expected {channels} and {period}",
                    s.channel_count(),
                    s.period()
                )));
            }
        }
        Ok(Self { name: name.into(), sequences, grid_based })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sequences(&self) -> &[FhSequence] {
        &self.sequences
    }

    pub fn size(&self) -> usize {
        self.sequences.len()
    }

    pub fn channel_count(&self) -> usize {
        self.sequences[0].channel_count()
    }

    pub fn period(&self) -> usize {
        self.sequences[0].period()
    }

    pub fn grid_based(&self) -> bool {
        self.grid_based
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Every member cut to its first `length` hops.
    pub fn truncated(&self, length: usize) -> Result<Self> {
        let sequences = self.sequences.iter().map(|s| s.prefix(length)).collect::<Result<_>>()?;
        Ok(Self { name: self.name.clone(), sequences, grid_based: self.grid_based })
    }

    /// Writes the family as text: a header comment, then one comma-separated
    /// sequence per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# name={} channels={} period={} grid_based={}",
            self.name,
            self.channel_count(),
            self.period(),
            u8::from(self.grid_based)
        )?;
        for seq in &self.sequences {
            let line: Vec<String> = seq.values().iter().map(usize::to_string).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Parses the format produced by [`FhsFamily::write_text`]. Other `#`
    /// lines are ignored.
    pub fn parse_text(text: &str) -> Result<Self> {
        let is_header = |l: &str| l.starts_with('#') && l.split_whitespace().any(|f| f.starts_with("name="));
        let mut seen_header = false;
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            if l.trim().is_empty() || (l.starts_with('#') && (seen_header || !is_header(l))) {
                return false;
            }
            seen_header |= is_header(l);
            true
        });
        let (_, header) = lines.next().ok_or(FamilyError::Parse { line: 1, message: "empty input".into() })?;
        let header =
            header.strip_prefix('#').ok_or(FamilyError::Parse { line: 1, message: "missing header line".into() })?;
        let (mut name, mut channels, mut period, mut grid_based) = (None, None, None, None);
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| FamilyError::Parse { line: 1, message: format!("bad header field `{field}`") })?;
            let number =
                || value.parse::<usize>().map_err(|e| FamilyError::Parse { line: 1, message: format!("{key}: {e}") });
            match key {
                "name" => name = Some(value.to_string()),
                "channels" => channels = Some(number()?),
                "period" => period = Some(number()?),
                "grid_based" => grid_based = Some(number()? != 0),
                _ => {}
            }
        }
        let missing = |what: &str| FamilyError::Parse { line: 1, message: format!("header lacks {what}") };
        let name = name.ok_or_else(|| missing("name"))?;
        let channels = channels.ok_or_else(|| missing("channels"))?;
        let period = period.ok_or_else(|| missing("period"))?;
        let grid_based = grid_based.ok_or_else(|| missing("grid_based"))?;

        let mut sequences = Vec::new();
        for (idx, line) in lines {
            let values = line
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| FamilyError::Parse { line: idx + 1, message: e.to_string() })?;
            if values.len() != period {
                return Err(FamilyError::Parse {
                    line: idx + 1,
                    message: format!("{} hops, header says {period}", values.len()),
                });
            }
            sequences.push(FhSequence::new(values, channels)?);
        }
        Self::new(name, sequences, grid_based)
    }
}

impl fmt::Display for FhsFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (M={}, L={}, channels={})", self.name, self.size(), self.period(), self.channel_count())
    }
}

/// Regulatory grid layout of one OCW: `grid_count` interleaved grids of
/// `channels_per_grid` OBWs each, grid `g` holding OBWs `g, g + G, g + 2G, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridLayout {
    pub grid_count: usize,
    pub channels_per_grid: usize,
}

impl GridLayout {
    /// EU 137 kHz OCW (DR8/DR9): 8 grids of 35 OBWs.
    pub const EU137: GridLayout = GridLayout { grid_count: 8, channels_per_grid: 35 };

    pub fn obw_count(&self) -> usize {
        self.grid_count * self.channels_per_grid
    }

    /// Absolute OBW index (0-based) of hop position `hop` on grid `grid`.
    pub fn map_hop(&self, grid: usize, hop: usize) -> Result<usize> {
        if grid >= self.grid_count {
            return Err(FamilyError::InvalidParameter(format!("grid {grid} >= {}", self.grid_count)));
        }
        if hop >= self.channels_per_grid {
            return Err(FamilyError::InvalidParameter(format!("hop {hop} >= {}", self.channels_per_grid)));
        }
        Ok(grid + self.grid_count * hop)
    }
}

/// One column of the driver's hopping-sequence parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverCase {
    pub case: u8,
    pub initial_state: u32,
    pub register_size: u32,
    pub polynomials: &'static [u32],
    pub seed_count: u32,
}

impl DriverCase {
    pub fn family_size(&self) -> usize {
        self.polynomials.len() * self.seed_count as usize
    }

    pub fn get(case: u8) -> Result<&'static DriverCase> {
        DRIVER_CASES
            .iter()
            .find(|c| c.case == case)
            .ok_or_else(|| FamilyError::InvalidParameter(format!("driver case {case} not in 1..=5")))
    }
}

const CASE_1_2_POLYNOMIALS: &[u32] = &[33, 45, 48, 51, 54, 57];

pub const DRIVER_CASES: [DriverCase; 5] = [
    DriverCase { case: 1, initial_state: 6, register_size: 6, polynomials: CASE_1_2_POLYNOMIALS, seed_count: 64 },
    DriverCase { case: 2, initial_state: 56, register_size: 6, polynomials: CASE_1_2_POLYNOMIALS, seed_count: 64 },
    DriverCase { case: 3, initial_state: 6, register_size: 7, polynomials: &[65, 68, 71, 72], seed_count: 128 },
    DriverCase { case: 4, initial_state: 6, register_size: 8, polynomials: &[142, 149], seed_count: 256 },
    DriverCase { case: 5, initial_state: 6, register_size: 9, polynomials: &[264], seed_count: 512 },
];

/// One driver sequence: LFSR states XORed with `seed`, positions
/// `>= grid_count` dropped, first `length` survivors kept.
pub fn driver_sequence(
    case: &DriverCase,
    polynomial: u32,
    seed: u32,
    grid_count: usize,
    length: usize,
) -> Result<FhSequence> {
    if grid_count == 0 || length == 0 {
        return Err(FamilyError::InvalidParameter("grid_count and length must be positive".into()));
    }
    if seed >= case.seed_count {
        return Err(FamilyError::InvalidParameter(format!("seed {seed} >= {}", case.seed_count)));
    }
    let lfsr = LfsrConfig::new(case.register_size, polynomial, case.initial_state)?;
    // Every full period yields the same number of survivors, so if `length`
    // periods are not enough nothing will be.
    let budget = lfsr.maximal_period() * length;
    let values: Vec<usize> =
        lfsr.states().take(budget).map(|s| (s ^ seed) as usize).filter(|&v| v < grid_count).take(length).collect();
    if values.len() < length {
        return Err(FamilyError::Exhausted { requested: length, produced: values.len(), states: budget });
    }
    FhSequence::new(values, grid_count)
}

/// Every (polynomial, xoring seed) sequence of a driver case, ordered as the
/// 9-bit hopping-sequence id: polynomial index in the high bits, seed low.
pub fn build_driver_family(case: &DriverCase, grid_count: usize, target_length: usize) -> Result<FhsFamily> {
    let mut sequences = Vec::with_capacity(case.family_size());
    for &poly in case.polynomials {
        for seed in 0..case.seed_count {
            sequences.push(driver_sequence(case, poly, seed, grid_count, target_length)?);
        }
    }
    FhsFamily::new("driver", sequences, true)
}

/// Lempel-Greenberger family over GF(2): `2^k` sequences of period `2^n - 1`
/// over `2^k` channels.
///
/// The base is the output bit stream `x` of an order-`n` m-sequence. Member
/// `v` maps each cyclic `k`-window to `sum_i (x_{j+i} ^ v_i) * 2^i`, where
/// `v_i` is bit `i` of `v`.
pub fn build_lempel_greenberger_family(p: u32, k: u32, n: u32, polynomial: u32) -> Result<FhsFamily> {
    if p != 2 {
        return Err(FamilyError::Unsupported(format!(
            "Lempel-Greenberger over GF({p}) is not implemented, only p = 2"
        )));
    }
    if k == 0 || k > n {
        return Err(FamilyError::InvalidParameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let lfsr = LfsrConfig::new(n, polynomial, 1)?;
    let period = lfsr.period();
    if period != lfsr.maximal_period() {
        return Err(FamilyError::NotMaximal { polynomial, period, expected: lfsr.maximal_period() });
    }
    let bits = lfsr.output_bits(period);
    let windows: Vec<usize> =
        (0..period).map(|j| (0..k as usize).fold(0, |acc, i| acc | (bits[(j + i) % period] as usize) << i)).collect();
    let channels = 1usize << k;
    let sequences = (0..channels)
        .map(|v| FhSequence::new(windows.iter().map(|w| w ^ v).collect(), channels))
        .collect::<Result<_>>()?;
    FhsFamily::new("lem-green", sequences, true)
}

/// Period of the Li-Fan wide-gap construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LiFanMode {
    /// Period `2l`, `H_max = 2`.
    TwoEll,
    /// Period `3l`, `H_max = 3`.
    ThreeEll,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Li-Fan wide-gap sequence over `0..ell`.
///
/// Concatenates arithmetic progressions `s_i = (i d) mod l` and
/// `t_i = (i (d + 1) + 1) mod l`. The period-`3l` form appends
/// `u_i = (i (d + 2) + 2) mod l`, which additionally needs `gcd(l, d + 2) = 1`.
/// Consecutive hops differ by at least `d` (and at least the guaranteed `d - 1`).
pub fn build_li_fan_base(ell: usize, d: usize, mode: LiFanMode) -> Result<FhSequence> {
    if d <= 1 || 2 * d >= ell {
        return Err(FamilyError::InvalidParameter(format!("need 1 < d < l/2, got l={ell}, d={d}")));
    }
    let steps: &[usize] = match mode {
        LiFanMode::TwoEll => &[0, 1],
        LiFanMode::ThreeEll => &[0, 1, 2],
    };
    for &k in steps {
        if gcd(ell, d + k) != 1 {
            return Err(FamilyError::InvalidParameter(format!("l={ell} is not coprime to {}", d + k)));
        }
    }
    let values = steps.iter().flat_map(|&k| (0..ell).map(move |i| (i * (d + k) + k) % ell)).collect();
    FhSequence::new(values, ell)
}

/// Fits long base sequences to an LR-FHSS channel plan: drops hops
/// `>= max_channel`, then cuts each base into consecutive `chunk_length`
/// pieces, discarding a trailing partial piece.
pub fn adapt_to_lr_fhss(
    name: impl Into<String>,
    bases: &[FhSequence],
    max_channel: usize,
    chunk_length: usize,
) -> Result<FhsFamily> {
    if chunk_length == 0 || max_channel == 0 {
        return Err(FamilyError::InvalidParameter("chunk_length and max_channel must be positive".into()));
    }
    let mut sequences = Vec::new();
    for base in bases {
        let kept: Vec<usize> = base.values().iter().copied().filter(|&v| v < max_channel).collect();
        for chunk in kept.chunks_exact(chunk_length) {
            sequences.push(FhSequence::new(chunk.to_vec(), max_channel)?);
        }
    }
    if sequences.is_empty() {
        return Err(FamilyError::EmptyFamily);
    }
    FhsFamily::new(name, sequences, false)
}

pub fn merge_families(name: impl Into<String>, parts: &[FhsFamily]) -> Result<FhsFamily> {
    let first = parts.first().ok_or(FamilyError::EmptyFamily)?;
    if let Some(odd) = parts.iter().find(|p| p.grid_based() != first.grid_based()) {
        return Err(FamilyError::Mismatch(format!("{} and {} differ in grid embedding", first.name(), odd.name())));
    }
    let sequences = parts.iter().flat_map(|p| p.sequences().iter().cloned()).collect();
    FhsFamily::new(name, sequences, first.grid_based())
}

/// Hop `j` of member `i`: first four bytes of `sha256(be32(i * 2^16 + j))`,
/// read big-endian, modulo `channel_count`.
pub fn hash_hop(member: usize, hop: usize, channel_count: usize) -> usize {
    let message = ((member as u32) << 16).wrapping_add(hop as u32);
    let digest = Sha256::digest(message.to_be_bytes());
    let word = u32::from_be_bytes([digest[0], digest[1], digest[2], digest[3]]);
    word as usize % channel_count
}

pub fn build_hash_family(family_size: usize, length: usize, channel_count: usize) -> Result<FhsFamily> {
    if family_size == 0 || length == 0 || channel_count == 0 {
        return Err(FamilyError::InvalidParameter("hash family parameters must be positive".into()));
    }
    if length > 1 << 16 || family_size > 1 << 16 {
        return Err(FamilyError::InvalidParameter("hash family limited to 2^16 members and hops".into()));
    }
    let sequences = (0..family_size)
        .map(|i| FhSequence::new((0..length).map(|j| hash_hop(i, j, channel_count)).collect(), channel_count))
        .collect::<Result<_>>()?;
    FhsFamily::new("hash", sequences, true)
}
