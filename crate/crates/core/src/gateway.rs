//! Gateway with a finite pool of demodulators.
//!
//! A demodulator locks onto a frame when it starts and stays busy until the
//! frame is resolved. Three optional strategies free it early:
//!
//! * early decode: release as soon as enough fragments arrived intact;
//! * early drop: release as soon as too many fragments were lost to decode;
//! * early header drop: release after the last header replica if none of
//!   them survived.
//!
//! Frames that find every demodulator busy are discarded but still occupy
//! the spectrum.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    build_occupancy, frame_hop_layout, schedule_transmissions, ChannelError, CodingRate, ElementKind, FrameElement,
    FramePlan, OccupancyGrid, SimulationConfig,
};
use crate::families::FhsFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Demodulators {
    Limited(usize),
    Unlimited,
}

impl fmt::Display for Demodulators {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Demodulators::Limited(n) => write!(f, "{n}"),
            Demodulators::Unlimited => f.write_str("unlimited"),
        }
    }
}

impl FromStr for Demodulators {
    type Err = ChannelError;

    /// A positive count, or `unlimited`.
    fn from_str(s: &str) -> Result<Self, ChannelError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unlimited") {
            return Ok(Demodulators::Unlimited);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Demodulators::Limited(n)),
            _ => Err(ChannelError::Config(format!("bad demodulator count `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StrategyConfig {
    pub early_decode: bool,
    pub early_drop: bool,
    pub early_header_drop: bool,
    /// Collided slots a header replica may suffer and still be received.
    pub header_tolerance_slots: usize,
    pub demodulators: Demodulators,
}

impl StrategyConfig {
    /// Every frame holds its demodulator until its last slot.
    pub fn baseline(demodulators: Demodulators) -> Self {
        Self {
            early_decode: false,
            early_drop: false,
            early_header_drop: false,
            header_tolerance_slots: 0,
            demodulators,
        }
    }

    /// Early decode and early drop together.
    pub fn early_decode_drop(demodulators: Demodulators) -> Self {
        Self { early_decode: true, early_drop: true, ..Self::baseline(demodulators) }
    }

    pub fn validate(&self, header_slots: usize) -> Result<(), ChannelError> {
        if self.header_tolerance_slots >= header_slots {
            return Err(ChannelError::Config(format!(
                "header tolerance {} must be below the header length {header_slots}",
                self.header_tolerance_slots
            )));
        }
        if self.demodulators == Demodulators::Limited(0) {
            return Err(ChannelError::Config("at least one demodulator is required".into()));
        }
        Ok(())
    }

    /// Stable text key, used to derive per-cell seeds.
    pub fn fingerprint(&self) -> String {
        format!(
            "dd={},dp={},hd={},tol={},demods={}",
            u8::from(self.early_decode),
            u8::from(self.early_drop),
            u8::from(self.early_header_drop),
            self.header_tolerance_slots,
            self.demodulators
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// No demodulator was free when the frame started.
    Discarded,
    /// Every header replica was lost and early header drop gave up on it.
    HeaderDropped,
    /// Too few fragments survived.
    Collided,
    PayloadDecoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOutcome {
    pub outcome: Outcome,
    /// Payload decoded and at least one header replica received.
    pub packet_decoded: bool,
    /// Slot from which the demodulator is free again.
    pub release_slot: Option<usize>,
}

/// What a demodulator locked on a frame gets to see: the frame's elements
/// and how many of each element's slots collided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameObservation {
    pub elements: Vec<FrameElement>,
    pub collided_slots: Vec<usize>,
}

impl FrameObservation {
    pub fn observe(plan: &FramePlan, config: &SimulationConfig, occupancy: &OccupancyGrid) -> Self {
        let elements = frame_hop_layout(plan, config);
        let collided_slots = elements.iter().map(|e| occupancy.collided_slots(e)).collect();
        Self { elements, collided_slots }
    }
}

/// Resolves one received frame. Success of each element is known at its
/// final slot. Early decode is checked before early drop, although the two
/// can never hold at the same fragment.
pub fn evaluate_observation(
    obs: &FrameObservation,
    coding_rate: CodingRate,
    strategy: &StrategyConfig,
) -> FrameOutcome {
    let mut header_ok = false;
    let mut header_end = None;
    let mut fragments = Vec::new();
    for (e, &hit) in obs.elements.iter().zip(&obs.collided_slots) {
        match e.kind {
            ElementKind::Header(_) => {
                header_ok |= hit <= strategy.header_tolerance_slots;
                header_end = Some(e.end_slot());
            }
            ElementKind::Fragment(_) => fragments.push((hit == 0, e.end_slot())),
        }
    }
    let frame_end = obs.elements.last().map_or(0, FrameElement::end_slot);

    if strategy.early_header_drop && !header_ok {
        if let Some(end) = header_end {
            return FrameOutcome { outcome: Outcome::HeaderDropped, packet_decoded: false, release_slot: Some(end) };
        }
    }

    let threshold = coding_rate.decode_threshold(fragments.len());
    let tolerable_losses = fragments.len() - threshold;
    let (mut ok, mut lost) = (0, 0);
    for &(intact, end) in &fragments {
        if intact {
            ok += 1;
        } else {
            lost += 1;
        }
        if strategy.early_decode && ok >= threshold {
            return FrameOutcome {
                outcome: Outcome::PayloadDecoded,
                packet_decoded: header_ok,
                release_slot: Some(end),
            };
        }
        if strategy.early_drop && lost > tolerable_losses {
            return FrameOutcome { outcome: Outcome::Collided, packet_decoded: false, release_slot: Some(end) };
        }
    }
    let (outcome, packet_decoded) =
        if ok >= threshold { (Outcome::PayloadDecoded, header_ok) } else { (Outcome::Collided, false) };
    FrameOutcome { outcome, packet_decoded, release_slot: Some(frame_end) }
}

pub fn evaluate_frame(
    plan: &FramePlan,
    config: &SimulationConfig,
    occupancy: &OccupancyGrid,
    strategy: &StrategyConfig,
) -> FrameOutcome {
    evaluate_observation(&FrameObservation::observe(plan, config, occupancy), plan.coding_rate, strategy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimMetrics {
    pub sent: usize,
    pub decoded_payloads: usize,
    pub decoded_packets: usize,
    pub collided: usize,
    pub header_dropped: usize,
    pub discarded: usize,
    pub payload_bytes: u64,
}

impl SimMetrics {
    fn record(&mut self, o: &FrameOutcome) {
        match o.outcome {
            Outcome::Discarded => self.discarded += 1,
            Outcome::HeaderDropped => self.header_dropped += 1,
            Outcome::Collided => self.collided += 1,
            Outcome::PayloadDecoded => {
                self.decoded_payloads += 1;
                self.decoded_packets += usize::from(o.packet_decoded);
            }
        }
    }

    pub fn data_sent_bytes(&self) -> u64 {
        self.sent as u64 * self.payload_bytes
    }

    pub fn data_decoded_bytes(&self) -> u64 {
        self.decoded_packets as u64 * self.payload_bytes
    }

    /// Decimal kilobytes.
    pub fn data_sent_kb(&self) -> f64 {
        self.data_sent_bytes() as f64 / 1000.0
    }

    pub fn data_decoded_kb(&self) -> f64 {
        self.data_decoded_bytes() as f64 / 1000.0
    }

    /// Decoded payloads in kB, whether or not a header came through.
    pub fn payload_decoded_kb(&self) -> f64 {
        (self.decoded_payloads as u64 * self.payload_bytes) as f64 / 1000.0
    }
}

/// Whole decimal kilobytes, fractions dropped.
pub fn whole_kb(bytes: u64) -> u64 {
    bytes / 1000
}

/// Outcome of every frame of a fixed schedule, indexed like `plans`.
pub fn resolve_schedule(
    plans: &[FramePlan],
    config: &SimulationConfig,
    occupancy: &OccupancyGrid,
    strategy: &StrategyConfig,
) -> Vec<FrameOutcome> {
    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.sort_by_key(|&i| (plans[i].start_slot, plans[i].node_id));
    let mut busy: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
    let mut outcomes =
        vec![FrameOutcome { outcome: Outcome::Discarded, packet_decoded: false, release_slot: None }; plans.len()];
    for i in order {
        let plan = &plans[i];
        while busy.peek().is_some_and(|&Reverse(t)| t <= plan.start_slot) {
            busy.pop();
        }
        if let Demodulators::Limited(n) = strategy.demodulators {
            if busy.len() >= n {
                continue;
            }
        }
        let outcome = evaluate_frame(plan, config, occupancy, strategy);
        busy.push(Reverse(outcome.release_slot.expect("received frames release")));
        outcomes[i] = outcome;
    }
    outcomes
}

pub fn metrics_for(outcomes: &[FrameOutcome], coding_rate: CodingRate) -> SimMetrics {
    let mut m = SimMetrics { sent: outcomes.len(), payload_bytes: coding_rate.payload_bytes(), ..Default::default() };
    for o in outcomes {
        m.record(o);
    }
    m
}

/// Schedules `config.node_count` frames from `config.rng_seed` and runs the
/// gateway over them.
pub fn run_simulation(
    config: &SimulationConfig,
    family: &FhsFamily,
    strategy: &StrategyConfig,
) -> Result<SimMetrics, ChannelError> {
    strategy.validate(config.header_slots())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let plans = schedule_transmissions(config, family, &mut rng)?;
    let occupancy = build_occupancy(&plans, config);
    Ok(metrics_for(&resolve_schedule(&plans, config, &occupancy, strategy), config.coding_rate))
}
