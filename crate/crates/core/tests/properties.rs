use std::collections::BTreeSet;

use lrfhss_core::catalog::{build_family, CatalogOptions, FamilyKind};
use lrfhss_core::channel::{
    build_occupancy, frame_hop_layout, schedule_transmissions, CodingRate, FrameElement, FramePlan, SimulationConfig,
};
use lrfhss_core::correlation::{
    autocorrelation_stats, correlation_bound, crosscorrelation_stats, family_report, hamming_correlation, minimum_gap,
    PairAveraging, ReportOptions,
};
use lrfhss_core::families::{
    build_li_fan_base, driver_sequence, DriverCase, FhSequence, FhsFamily, GridLayout, LiFanMode,
};
use lrfhss_core::gateway::{evaluate_frame, metrics_for, resolve_schedule, Demodulators, Outcome, StrategyConfig};
use lrfhss_core::lfsr::LfsrConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn naive_h(x: &[usize], y: &[usize], t: usize) -> usize {
    (0..x.len()).filter(|&i| x[i] == y[(i + t) % x.len()]).count()
}

fn arb_pair() -> impl Strategy<Value = (FhSequence, FhSequence)> {
    (1usize..40, 1usize..12).prop_flat_map(|(len, channels)| {
        (prop::collection::vec(0..channels, len), prop::collection::vec(0..channels, len))
            .prop_map(move |(a, b)| (FhSequence::new(a, channels).unwrap(), FhSequence::new(b, channels).unwrap()))
    })
}

fn arb_sequence(min_len: usize) -> impl Strategy<Value = FhSequence> {
    (min_len..60, 1usize..40).prop_flat_map(|(len, channels)| {
        prop::collection::vec(0..channels, len).prop_map(move |v| FhSequence::new(v, channels).unwrap())
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

proptest! {
    #[test]
    fn galois_step_matches_bitwise_recurrence(size in 2u32..=12, poly_low in any::<u32>(), state in any::<u32>()) {
        let poly = (1 << (size - 1)) | (poly_low & ((1 << (size - 1)) - 1));
        let state = (state % ((1 << size) - 1)) + 1;
        let lfsr = LfsrConfig::new(size, poly, state).unwrap();
        let next = lfsr.advance(state).unwrap();
        for i in 0..size {
            let tap = (poly >> i) & 1;
            let upper = if i + 1 < size { (state >> (i + 1)) & 1 } else { 0 };
            prop_assert_eq!((next >> i) & 1, upper ^ (tap & state & 1));
        }
    }

    #[test]
    fn hamming_is_bounded_and_symmetric((x, y) in arb_pair(), t in 0usize..40) {
        let len = x.period();
        let t = t % len;
        let h = hamming_correlation(&x, &y, t).unwrap();
        prop_assert!(h <= len);
        prop_assert_eq!(h, naive_h(x.values(), y.values(), t));
        prop_assert_eq!(h, hamming_correlation(&y, &x, (len - t) % len).unwrap());
    }

    #[test]
    fn stats_match_brute_force((x, y) in arb_pair()) {
        let len = x.period();
        let cross = crosscorrelation_stats(&x, &y).unwrap();
        let hs: Vec<usize> = (0..len).map(|t| naive_h(x.values(), y.values(), t)).collect();
        prop_assert_eq!(cross.max, *hs.iter().max().unwrap());
        prop_assert_eq!(cross.total, hs.iter().sum::<usize>());
        prop_assert_eq!(crosscorrelation_stats(&y, &x).unwrap().max, cross.max);
        if len >= 2 {
            let auto = autocorrelation_stats(&x).unwrap();
            let hs: Vec<usize> = (1..len).map(|t| naive_h(x.values(), x.values(), t)).collect();
            prop_assert_eq!(auto.max, *hs.iter().max().unwrap());
            prop_assert_eq!(auto.total, hs.iter().sum::<usize>());
        }
    }

    #[test]
    fn permutation_autocorrelation_matches_double_loop(len in 2usize..50, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut v: Vec<usize> = (0..len).collect();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let x = FhSequence::new(v.clone(), len).unwrap();
        let mut best = 0;
        for t in 1..len {
            let mut h = 0;
            for i in 0..len {
                if v[i] == v[(i + t) % len] {
                    h += 1;
                }
            }
            best = best.max(h);
        }
        prop_assert_eq!(autocorrelation_stats(&x).unwrap().max, best);
        prop_assert_eq!(best, 0);
    }

    #[test]
    fn autocorrelation_respects_lower_bound(x in arb_sequence(2)) {
        let bound = correlation_bound(x.period(), x.channel_count(), false).unwrap();
        prop_assert!(autocorrelation_stats(&x).unwrap().max >= bound);
    }

    #[test]
    fn wide_gap_sequences_respect_tighter_bound(
        channels in 2usize..30,
        first in 0usize..30,
        steps in prop::collection::vec(1usize..30, 3..60),
    ) {
        // Nonzero steps mod the alphabet keep consecutive hops apart.
        let mut values = vec![first % channels];
        for step in &steps {
            let last = *values.last().unwrap();
            values.push((last + 1 + step % (channels - 1)) % channels);
        }
        if values[0] == *values.last().unwrap() {
            values.pop();
        }
        prop_assume!(values.len() >= 4 && values[0] != *values.last().unwrap());
        let x = FhSequence::new(values, channels).unwrap();
        let bound = correlation_bound(x.period(), x.channel_count(), true).unwrap();
        prop_assert!(autocorrelation_stats(&x).unwrap().max >= bound);
    }

    #[test]
    fn minimum_gap_matches_definition(x in arb_sequence(2)) {
        let v = x.values();
        let n = v.len();
        let expected = (0..n).map(|i| v[i].abs_diff(v[(i + 1) % n])).min().unwrap();
        prop_assert_eq!(minimum_gap(&x).unwrap(), expected);
    }

    #[test]
    fn li_fan_bases_are_wide_gap_and_low_correlation(ell in 7usize..160, d in 2usize..40, three in any::<bool>()) {
        let mode = if three { LiFanMode::ThreeEll } else { LiFanMode::TwoEll };
        let copies = if three { 3 } else { 2 };
        let admissible = 2 * d < ell && (0..copies).all(|k| gcd(ell, d + k) == 1);
        let built = build_li_fan_base(ell, d, mode);
        prop_assert_eq!(built.is_ok(), admissible);
        if let Ok(seq) = built {
            prop_assert_eq!(seq.period(), copies * ell);
            for v in 0..ell {
                prop_assert_eq!(seq.values().iter().filter(|&&x| x == v).count(), copies);
            }
            prop_assert!(minimum_gap(&seq).unwrap() >= d - 1);
            prop_assert!(autocorrelation_stats(&seq).unwrap().max <= copies);
        }
    }

    #[test]
    fn driver_sequences_stay_in_grid(case in 1u8..=5, poly_idx in 0usize..6, seed in 0u32..512, len in 1usize..90) {
        let c = DriverCase::get(case).unwrap();
        let poly = c.polynomials[poly_idx % c.polynomials.len()];
        let seed = seed % c.seed_count;
        let long = driver_sequence(c, poly, seed, 35, len).unwrap();
        prop_assert!(long.values().iter().all(|&v| v < 35));
        let short = driver_sequence(c, poly, seed, 35, len.div_ceil(2)).unwrap();
        prop_assert_eq!(short.values(), &long.values()[..len.div_ceil(2)]);
    }

    #[test]
    fn grid_mapping_is_a_bijection(grids in 1usize..10, per_grid in 1usize..40) {
        let layout = GridLayout { grid_count: grids, channels_per_grid: per_grid };
        let mut seen = BTreeSet::new();
        for g in 0..grids {
            for h in 0..per_grid {
                let obw = layout.map_hop(g, h).unwrap();
                prop_assert!(obw < layout.obw_count());
                prop_assert_eq!(obw % grids, g);
                seen.insert(obw);
            }
        }
        prop_assert_eq!(seen.len(), layout.obw_count());
    }

    #[test]
    fn family_text_round_trips(
        members in prop::collection::vec(prop::collection::vec(0usize..9, 5), 1..6),
        grid_based in any::<bool>(),
    ) {
        let seqs = members.into_iter().map(|v| FhSequence::new(v, 9).unwrap()).collect();
        let fam = FhsFamily::new("prop", seqs, grid_based).unwrap();
        let mut buf = Vec::new();
        fam.write_text(&mut buf).unwrap();
        prop_assert_eq!(FhsFamily::parse_text(&String::from_utf8(buf).unwrap()).unwrap(), fam);
    }

    #[test]
    fn duplicating_one_of_two_members_raises_average((x, y) in arb_pair()) {
        prop_assume!(x.period() >= 2);
        let opts = ReportOptions { pairing: PairAveraging::OrderedDistinct, grid_embedding: None };
        let pair = FhsFamily::new("pair", vec![x.clone(), y.clone()], false).unwrap();
        let before = family_report(&pair, None, opts).unwrap().avg_max_cc.unwrap();
        let triple = FhsFamily::new("triple", vec![x.clone(), y, x.clone()], false).unwrap();
        let after = family_report(&triple, None, opts).unwrap().avg_max_cc.unwrap();
        if before < x.period() as f64 {
            prop_assert!(after > before);
        } else {
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn family_report_matches_pairwise_sum(
        members in prop::collection::vec(prop::collection::vec(0usize..6, 7), 2..9),
    ) {
        let seqs: Vec<FhSequence> = members.into_iter().map(|v| FhSequence::new(v, 6).unwrap()).collect();
        let fam = FhsFamily::new("f", seqs.clone(), false).unwrap();
        let m = seqs.len() as f64;
        let mut cross = 0;
        for a in 0..seqs.len() {
            for b in 0..seqs.len() {
                if a != b {
                    cross += crosscorrelation_stats(&seqs[a], &seqs[b]).unwrap().max;
                }
            }
        }
        let opts = ReportOptions { pairing: PairAveraging::OrderedDistinct, grid_embedding: None };
        let r = family_report(&fam, None, opts).unwrap();
        prop_assert!((r.avg_max_cc.unwrap() - cross as f64 / (m * (m - 1.0))).abs() < 1e-9);
        prop_assert!(r.avg_max_cc.unwrap() <= 7.0 && r.avg_avg_ac <= 7.0);
    }
}

/// A deliberately cramped channel so that a few dozen frames collide often.
#[derive(Debug, Clone)]
struct Setup {
    config: SimulationConfig,
    family: FhsFamily,
    tolerance: usize,
}

fn arb_setup() -> impl Strategy<Value = Setup> {
    (
        (1usize..=12, 1usize..=3, any::<bool>(), 1usize..=2, 1usize..=2, 2usize..=5),
        (0usize..=60, 1usize..=50, any::<u64>(), any::<bool>(), 1usize..=4, 1usize..=8),
        0usize..7,
    )
        .prop_flat_map(
            |((fragments, g, cr2, ocws, grids, per_grid), (extra, nodes, seed, grid_based, m, len), tol)| {
                let layout = GridLayout { grid_count: grids, channels_per_grid: per_grid };
                let channels = if grid_based { per_grid } else { layout.obw_count() };
                let coding_rate = if cr2 { CodingRate::Cr2 } else { CodingRate::Cr1 };
                prop::collection::vec(prop::collection::vec(0..channels, len), m).prop_map(move |members| {
                    let mut config = SimulationConfig {
                        sim_slots: 0,
                        ocw_count: ocws,
                        layout,
                        payload_fragments: fragments,
                        fragment_slots: g,
                        coding_rate,
                        node_count: nodes,
                        rng_seed: seed,
                    };
                    config.sim_slots = config.frame_slots() + extra;
                    let seqs = members.into_iter().map(|v| FhSequence::new(v, channels).unwrap()).collect();
                    let family = FhsFamily::new("arb", seqs, grid_based).unwrap();
                    Setup { config, family, tolerance: tol % config.header_slots() }
                })
            },
        )
}

fn schedule(s: &Setup) -> Vec<FramePlan> {
    schedule_transmissions(&s.config, &s.family, &mut ChaCha8Rng::seed_from_u64(s.config.rng_seed)).unwrap()
}

fn strategy(dd: bool, dp: bool, hd: bool, tol: usize, demods: Demodulators) -> StrategyConfig {
    StrategyConfig {
        early_decode: dd,
        early_drop: dp,
        early_header_drop: hd,
        header_tolerance_slots: tol,
        demodulators: demods,
    }
}

fn naive_collided(element: &FrameElement, all: &[FrameElement]) -> usize {
    (element.start_slot..element.end_slot())
        .filter(|&slot| {
            all.iter()
                .filter(|e| e.ocw == element.ocw && e.obw == element.obw && e.start_slot <= slot && slot < e.end_slot())
                .count()
                >= 2
        })
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn early_strategies_agree_with_baseline(s in arb_setup()) {
        let plans = schedule(&s);
        let occ = build_occupancy(&plans, &s.config);
        let unlimited = Demodulators::Unlimited;
        let base = strategy(false, false, false, s.tolerance, unlimited);
        let drop = strategy(false, true, false, s.tolerance, unlimited);
        let decode = strategy(true, false, false, s.tolerance, unlimited);
        let both = strategy(true, true, false, s.tolerance, unlimited);
        for plan in &plans {
            let b = evaluate_frame(plan, &s.config, &occ, &base);
            let frame_end = plan.start_slot + s.config.frame_slots();
            prop_assert_eq!(b.release_slot, Some(frame_end));
            prop_assert!(b.outcome == Outcome::PayloadDecoded || b.outcome == Outcome::Collided);
            prop_assert!(!b.packet_decoded || b.outcome == Outcome::PayloadDecoded);
            for strat in [&drop, &decode, &both] {
                let o = evaluate_frame(plan, &s.config, &occ, strat);
                prop_assert_eq!(o.outcome, b.outcome);
                prop_assert_eq!(o.packet_decoded, b.packet_decoded);
                prop_assert!(o.release_slot.unwrap() <= frame_end);
            }
            let d = evaluate_frame(plan, &s.config, &occ, &drop);
            if d.outcome == Outcome::PayloadDecoded {
                prop_assert_eq!(d.release_slot, Some(frame_end));
            }
        }
    }

    #[test]
    fn unlimited_pool_is_strategy_invariant(s in arb_setup()) {
        let plans = schedule(&s);
        let occ = build_occupancy(&plans, &s.config);
        let reference = metrics_for(
            &resolve_schedule(&plans, &s.config, &occ, &strategy(false, false, false, s.tolerance, Demodulators::Unlimited)),
            s.config.coding_rate,
        );
        for bits in 0..8u8 {
            let (dd, dp, hd) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
            let strat = strategy(dd, dp, hd, s.tolerance, Demodulators::Unlimited);
            let m = metrics_for(&resolve_schedule(&plans, &s.config, &occ, &strat), s.config.coding_rate);
            prop_assert_eq!(m.decoded_packets, reference.decoded_packets);
            prop_assert_eq!(m.discarded, 0);
            if !hd {
                prop_assert_eq!(m.decoded_payloads, reference.decoded_payloads);
                prop_assert_eq!(m.collided, reference.collided);
            }
        }
    }

    #[test]
    fn more_demodulators_never_decode_less(s in arb_setup(), bits in 0u8..8) {
        let plans = schedule(&s);
        let occ = build_occupancy(&plans, &s.config);
        let (dd, dp, hd) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
        let mut previous: Option<(usize, BTreeSet<usize>)> = None;
        let pools = (1..=6).map(Demodulators::Limited).chain([Demodulators::Unlimited]);
        for demods in pools {
            let out = resolve_schedule(&plans, &s.config, &occ, &strategy(dd, dp, hd, s.tolerance, demods));
            let m = metrics_for(&out, s.config.coding_rate);
            prop_assert_eq!(m.decoded_payloads + m.collided + m.header_dropped + m.discarded, m.sent);
            prop_assert!(m.decoded_packets <= m.decoded_payloads);
            let accepted: BTreeSet<usize> =
                out.iter().enumerate().filter(|(_, o)| o.outcome != Outcome::Discarded).map(|(i, _)| i).collect();
            if let Some((payloads, before)) = &previous {
                prop_assert!(m.decoded_payloads >= *payloads);
                prop_assert!(before.is_subset(&accepted));
            }
            previous = Some((m.decoded_payloads, accepted));
        }
    }

    #[test]
    fn early_decode_never_releases_later(s in arb_setup(), demods in 1usize..8) {
        let plans = schedule(&s);
        let occ = build_occupancy(&plans, &s.config);
        let pool = Demodulators::Limited(demods);
        for plan in &plans {
            let base = evaluate_frame(plan, &s.config, &occ, &strategy(false, false, false, s.tolerance, pool));
            let early = evaluate_frame(plan, &s.config, &occ, &strategy(true, false, false, s.tolerance, pool));
            if early.outcome == Outcome::PayloadDecoded {
                prop_assert!(early.release_slot <= base.release_slot);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn occupancy_matches_naive_recount(s in arb_setup()) {
        let plans: Vec<FramePlan> = schedule(&s).into_iter().take(20).collect();
        let occ = build_occupancy(&plans, &s.config);
        let layouts: Vec<Vec<FrameElement>> = plans.iter().map(|p| frame_hop_layout(p, &s.config)).collect();
        let all: Vec<FrameElement> = layouts.iter().flatten().copied().collect();
        let mass: usize = all.iter().map(|e| e.slots).sum();
        prop_assert_eq!(occ.total_mass(), mass as u64);
        for e in &all {
            prop_assert_eq!(occ.collided_slots(e), naive_collided(e, &all));
        }
        // Collisions are mutual: two elements sharing a cell both see it.
        for (fa, a_elems) in layouts.iter().enumerate() {
            for (fb, b_elems) in layouts.iter().enumerate().skip(fa + 1) {
                for a in a_elems {
                    for b in b_elems {
                        let shared = a.ocw == b.ocw && a.obw == b.obw
                            && a.start_slot < b.end_slot() && b.start_slot < a.end_slot();
                        if shared {
                            prop_assert!(occ.collided_slots(a) > 0 && occ.collided_slots(b) > 0, "{fa} {fb}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn schedule_is_reproducible_and_in_bounds(s in arb_setup()) {
        let a = schedule(&s);
        prop_assert_eq!(&a, &schedule(&s));
        for p in &a {
            prop_assert!(p.start_slot + s.config.frame_slots() <= s.config.sim_slots);
            prop_assert!(p.hops.iter().all(|&o| o < s.config.obw_count()));
            prop_assert!(p.ocw < s.config.ocw_count);
        }
    }
}

#[test]
fn constructed_families_respect_correlation_bounds() {
    let opts = CatalogOptions::correlation();
    for kind in FamilyKind::ALL {
        let fam = build_family(kind, &opts).unwrap();
        for seq in fam.sequences() {
            let h = autocorrelation_stats(seq).unwrap().max;
            assert!(h >= correlation_bound(seq.period(), seq.channel_count(), false).unwrap(), "{kind}");
            if minimum_gap(seq).unwrap() > 0 {
                assert!(h >= correlation_bound(seq.period(), seq.channel_count(), true).unwrap(), "{kind}");
            }
        }
    }
    for ell in [277, 281, 283, 287] {
        for mode in [LiFanMode::TwoEll, LiFanMode::ThreeEll] {
            let base = build_li_fan_base(ell, 8, mode).unwrap();
            let h = autocorrelation_stats(&base).unwrap().max;
            assert_eq!(h, correlation_bound(base.period(), ell, true).unwrap(), "l={ell} {mode:?}");
        }
    }
}
