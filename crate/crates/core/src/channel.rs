//! Time-slotted spectrum model: frame scheduling, per-hop layout, occupancy
//! counting and collision detection.
//!
//! Time is divided into slots of one fragment-granularity unit. A frame
//! occupies one OBW of one OCW per element (header replica or payload
//! fragment). Two elements collide on every slot where they share a cell.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::families::{FhsFamily, GridLayout};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("family does not fit the channel plan: {0}")]
    FamilyMismatch(String),
}

pub type Result<T, E = ChannelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodingRate {
    /// Rate 1/3: three header replicas, a third of the fragments suffice.
    Cr1,
    /// Rate 2/3: two header replicas, two thirds of the fragments needed.
    Cr2,
}

impl CodingRate {
    pub const BOTH: [CodingRate; 2] = [CodingRate::Cr1, CodingRate::Cr2];

    pub fn header_replicas(self) -> usize {
        match self {
            CodingRate::Cr1 => 3,
            CodingRate::Cr2 => 2,
        }
    }

    /// Maximum DR8/DR9 application payload.
    pub fn payload_bytes(self) -> u64 {
        match self {
            CodingRate::Cr1 => 58,
            CodingRate::Cr2 => 123,
        }
    }

    /// Minimum number of intact fragments out of `fragment_count` needed to
    /// rebuild the payload.
    pub fn decode_threshold(self, fragment_count: usize) -> usize {
        match self {
            CodingRate::Cr1 => fragment_count.div_ceil(3),
            CodingRate::Cr2 => (2 * fragment_count).div_ceil(3),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            CodingRate::Cr1 => 1,
            CodingRate::Cr2 => 2,
        }
    }
}

impl fmt::Display for CodingRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CR{}", self.number())
    }
}

impl FromStr for CodingRate {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "cr1" => Ok(CodingRate::Cr1),
            "2" | "cr2" => Ok(CodingRate::Cr2),
            _ => Err(ChannelError::Config(format!("unknown coding rate `{s}` (expected 1 or 2)"))),
        }
    }
}

/// Header length in slots for a fragment of `fragment_slots` slots: a
/// 233 ms header measured in units of `102.4 / fragment_slots` ms.
pub fn header_slots_for(fragment_slots: usize) -> usize {
    (2330 * fragment_slots).div_ceil(1024)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub sim_slots: usize,
    pub ocw_count: usize,
    pub layout: GridLayout,
    pub payload_fragments: usize,
    pub fragment_slots: usize,
    pub coding_rate: CodingRate,
    pub node_count: usize,
    pub rng_seed: u64,
}

impl SimulationConfig {
    /// EU DR8/DR9 defaults: 912 slots, 7 OCWs of 8 x 35 OBWs, 31 fragments
    /// of 6 slots.
    pub fn new(coding_rate: CodingRate, node_count: usize) -> Self {
        Self {
            sim_slots: 912,
            ocw_count: 7,
            layout: GridLayout::EU137,
            payload_fragments: 31,
            fragment_slots: 6,
            coding_rate,
            node_count,
            rng_seed: 0,
        }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn obw_count(&self) -> usize {
        self.layout.obw_count()
    }

    pub fn header_slots(&self) -> usize {
        header_slots_for(self.fragment_slots)
    }

    pub fn header_replicas(&self) -> usize {
        self.coding_rate.header_replicas()
    }

    /// Hops per frame: one per header replica and one per fragment.
    pub fn hop_count(&self) -> usize {
        self.header_replicas() + self.payload_fragments
    }

    pub fn frame_slots(&self) -> usize {
        self.header_replicas() * self.header_slots() + self.payload_fragments * self.fragment_slots
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sim_slots", self.sim_slots),
            ("ocw_count", self.ocw_count),
            ("grid_count", self.layout.grid_count),
            ("channels_per_grid", self.layout.channels_per_grid),
            ("fragment_slots", self.fragment_slots),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ChannelError::Config(format!("{name} must be positive")));
        }
        if self.frame_slots() > self.sim_slots {
            return Err(ChannelError::Config(format!(
                "a frame spans {} slots but the horizon is {}",
                self.frame_slots(),
                self.sim_slots
            )));
        }
        if self.node_count > u32::MAX as usize {
            return Err(ChannelError::Config("node_count too large".into()));
        }
        Ok(())
    }

    pub fn check_family(&self, family: &FhsFamily) -> Result<()> {
        check_family_fits(family, self.layout)
    }
}

fn check_family_fits(family: &FhsFamily, layout: GridLayout) -> Result<()> {
    let limit = if family.grid_based() { layout.channels_per_grid } else { layout.obw_count() };
    if family.channel_count() > limit {
        return Err(ChannelError::FamilyMismatch(format!(
            "{} uses {} channels, the {} holds {limit}",
            family.name(),
            family.channel_count(),
            if family.grid_based() { "grid" } else { "OCW" }
        )));
    }
    Ok(())
}

/// Resolves hop `h` of member `fhs_index` to an absolute OBW.
fn resolve_obw(family: &FhsFamily, layout: GridLayout, fhs_index: usize, grid: Option<usize>, h: usize) -> usize {
    let value = family.sequences()[fhs_index].hop(h);
    match grid {
        Some(g) => layout.map_hop(g, value).expect("family checked against layout"),
        None => value,
    }
}

/// One node's transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePlan {
    pub node_id: usize,
    pub start_slot: usize,
    pub ocw: usize,
    /// Grid chosen by grid-based families.
    pub grid: Option<usize>,
    pub fhs_index: usize,
    pub coding_rate: CodingRate,
    /// OBW of every hop, header replicas first.
    pub hops: Vec<usize>,
}

/// Draws `node_count` frames. Per node, in order: start slot, OCW, family
/// member, and grid (grid-based families only), all uniform.
pub fn schedule_transmissions<R: Rng + ?Sized>(
    config: &SimulationConfig,
    family: &FhsFamily,
    rng: &mut R,
) -> Result<Vec<FramePlan>> {
    config.validate()?;
    config.check_family(family)?;
    let latest_start = config.sim_slots - config.frame_slots();
    let plans = (0..config.node_count)
        .map(|node_id| {
            let start_slot = rng.gen_range(0..=latest_start);
            let ocw = rng.gen_range(0..config.ocw_count);
            let fhs_index = rng.gen_range(0..family.size());
            let grid = family.grid_based().then(|| rng.gen_range(0..config.layout.grid_count));
            let hops =
                (0..config.hop_count()).map(|h| resolve_obw(family, config.layout, fhs_index, grid, h)).collect();
            FramePlan { node_id, start_slot, ocw, grid, fhs_index, coding_rate: config.coding_rate, hops }
        })
        .collect();
    Ok(plans)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Header(usize),
    Fragment(usize),
}

/// A header replica or fragment: a contiguous run of slots on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameElement {
    pub kind: ElementKind,
    pub start_slot: usize,
    pub slots: usize,
    pub ocw: usize,
    pub obw: usize,
}

impl FrameElement {
    /// First slot after the element.
    pub fn end_slot(&self) -> usize {
        self.start_slot + self.slots
    }
}

pub fn frame_hop_layout(plan: &FramePlan, config: &SimulationConfig) -> Vec<FrameElement> {
    let replicas = plan.coding_rate.header_replicas();
    let header_slots = config.header_slots();
    let mut slot = plan.start_slot;
    plan.hops
        .iter()
        .take(replicas + config.payload_fragments)
        .enumerate()
        .map(|(h, &obw)| {
            let (kind, slots) = if h < replicas {
                (ElementKind::Header(h), header_slots)
            } else {
                (ElementKind::Fragment(h - replicas), config.fragment_slots)
            };
            let element = FrameElement { kind, start_slot: slot, slots, ocw: plan.ocw, obw };
            slot += slots;
            element
        })
        .collect()
}

/// Number of frame elements covering each (slot, OCW, OBW) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    slots: usize,
    ocws: usize,
    obws: usize,
    counts: Vec<u32>,
}

impl OccupancyGrid {
    pub fn new(slots: usize, ocws: usize, obws: usize) -> Self {
        Self { slots, ocws, obws, counts: vec![0; slots * ocws * obws] }
    }

    fn index(&self, slot: usize, ocw: usize, obw: usize) -> usize {
        debug_assert!(slot < self.slots && ocw < self.ocws && obw < self.obws);
        (slot * self.ocws + ocw) * self.obws + obw
    }

    pub fn count(&self, slot: usize, ocw: usize, obw: usize) -> u32 {
        self.counts[self.index(slot, ocw, obw)]
    }

    pub fn add(&mut self, element: &FrameElement) {
        for slot in element.start_slot..element.end_slot() {
            let i = self.index(slot, element.ocw, element.obw);
            self.counts[i] += 1;
        }
    }

    /// Slots of `element` that some other element also occupies.
    pub fn collided_slots(&self, element: &FrameElement) -> usize {
        (element.start_slot..element.end_slot()).filter(|&slot| self.count(slot, element.ocw, element.obw) >= 2).count()
    }

    pub fn total_mass(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Cells holding two or more elements.
    pub fn collided_cells(&self) -> u64 {
        self.counts.iter().filter(|&&c| c >= 2).count() as u64
    }

    pub fn cell_count(&self) -> u64 {
        self.counts.len() as u64
    }
}

/// Occupancy of every scheduled frame, whether or not a gateway later
/// listens to it.
pub fn build_occupancy(plans: &[FramePlan], config: &SimulationConfig) -> OccupancyGrid {
    let mut grid = OccupancyGrid::new(config.sim_slots, config.ocw_count, config.obw_count());
    for plan in plans {
        for element in frame_hop_layout(plan, config) {
            grid.add(&element);
        }
    }
    grid
}

pub fn count_collided_slots(element: &FrameElement, grid: &OccupancyGrid) -> usize {
    grid.collided_slots(element)
}

pub const SCHEDULE_CSV_HEADER: &str = "node,start_slot,ocw,grid,fhs_index";

pub fn write_schedule_csv<W: Write>(mut out: W, plans: &[FramePlan]) -> io::Result<()> {
    writeln!(out, "{SCHEDULE_CSV_HEADER}")?;
    for p in plans {
        let grid = p.grid.map_or_else(String::new, |g| g.to_string());
        writeln!(out, "{},{},{},{},{}", p.node_id, p.start_slot, p.ocw, grid, p.fhs_index)?;
    }
    Ok(())
}

/// Header-free model with one slot per fragment, used to compare families by
/// raw collision rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreliminaryConfig {
    pub fragments: usize,
    pub horizon: usize,
    pub layout: GridLayout,
    /// Fragment `f` hops on sequence position `header_replicas + f`, as it
    /// would in a full frame of this coding rate.
    pub coding_rate: CodingRate,
}

impl PreliminaryConfig {
    pub fn new(coding_rate: CodingRate) -> Self {
        Self { fragments: 31, horizon: 124, layout: GridLayout::EU137, coding_rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PreliminaryOutcome {
    pub node_count: usize,
    /// Cells (slot, OBW) holding two or more fragments.
    pub collided_cells: u64,
    pub total_cells: u64,
    /// Fragments sitting in a collided cell.
    pub collided_fragments: u64,
    pub fragments: u64,
    /// Frames left with fewer intact fragments than the decoding threshold.
    pub lost_payloads: usize,
}

impl PreliminaryOutcome {
    /// Collided cells over all cells of the horizon.
    pub fn cell_rate(&self) -> f64 {
        self.collided_cells as f64 / self.total_cells as f64
    }

    /// Collided fragments over transmitted fragments.
    pub fn fragment_rate(&self) -> f64 {
        if self.fragments == 0 {
            0.0
        } else {
            self.collided_fragments as f64 / self.fragments as f64
        }
    }

    pub fn payload_loss_rate(&self) -> f64 {
        if self.node_count == 0 {
            0.0
        } else {
            self.lost_payloads as f64 / self.node_count as f64
        }
    }
}

/// Runs the header-free model once. Per node, in order: start slot, family
/// member, and grid (grid-based families only).
pub fn preliminary_collision_rate<R: Rng + ?Sized>(
    config: &PreliminaryConfig,
    node_count: usize,
    family: &FhsFamily,
    rng: &mut R,
) -> Result<PreliminaryOutcome> {
    if config.fragments == 0 || config.fragments > config.horizon {
        return Err(ChannelError::Config(format!(
            "{} fragments do not fit a {}-slot horizon",
            config.fragments, config.horizon
        )));
    }
    check_family_fits(family, config.layout)?;
    let obws = config.layout.obw_count();
    let offset = config.coding_rate.header_replicas();
    let mut counts = vec![0u32; config.horizon * obws];
    let frames: Vec<Vec<usize>> = (0..node_count)
        .map(|_| {
            let start = rng.gen_range(0..=config.horizon - config.fragments);
            let fhs_index = rng.gen_range(0..family.size());
            let grid = family.grid_based().then(|| rng.gen_range(0..config.layout.grid_count));
            (0..config.fragments)
                .map(|f| (start + f) * obws + resolve_obw(family, config.layout, fhs_index, grid, offset + f))
                .collect()
        })
        .collect();
    for cell in frames.iter().flatten() {
        counts[*cell] += 1;
    }
    let threshold = config.coding_rate.decode_threshold(config.fragments);
    let mut outcome = PreliminaryOutcome {
        node_count,
        collided_cells: counts.iter().filter(|&&c| c >= 2).count() as u64,
        total_cells: counts.len() as u64,
        fragments: (node_count * config.fragments) as u64,
        ..Default::default()
    };
    for frame in &frames {
        let hit = frame.iter().filter(|&&c| counts[c] >= 2).count();
        outcome.collided_fragments += hit as u64;
        if config.fragments - hit < threshold {
            outcome.lost_payloads += 1;
        }
    }
    Ok(outcome)
}
