//! Randomized invariant checks over generated graphs and score matrices.

use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use tkga_core::csls::{pseudo_pairs, SimilarityMatrix};
use tkga_core::fusion::detect_conflicts;
use tkga_core::fusion::ScaleAlignment;
use tkga_core::kg::{parse_tkg_str, EntityId, Granularity, TemporalKG, TimeInterval, TimePoint};
use tkga_core::trainer::hinge;

fn literal() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("####".to_string()),
        (1990i32..2030).prop_map(|y| y.to_string()),
        (1990i32..2030, 1u8..=12).prop_map(|(y, m)| format!("{y}-{m:02}")),
        (1990i32..2030, 1u8..=12, 1u8..=28).prop_map(|(y, m, d)| format!("{y}-{m:02}-{d:02}")),
    ]
}

fn fact_line() -> impl Strategy<Value = String> {
    (0u8..8, 0u8..3, 0u8..8, literal(), literal()).prop_map(|(h, r, t, a, b)| {
        // repair inverted endpoints so every generated line is a legal fact
        let pa = TimePoint::parse(&a).unwrap();
        let pb = TimePoint::parse(&b).unwrap();
        let (a, b) = if TimeInterval::new(pa, pb).is_ok() {
            (a, b)
        } else {
            (b, a)
        };
        format!("e{h}\tr{r}\te{t}\t{a}\t{b}")
    })
}

fn graph_text() -> impl Strategy<Value = String> {
    prop::collection::vec(fact_line(), 1..30).prop_map(|lines| lines.join("\n"))
}

proptest! {
    /// Serializing a parsed graph and parsing it again loses nothing.
    #[test]
    fn parse_serialize_round_trip(text in graph_text()) {
        let kg = parse_tkg_str(&text, "prop").unwrap();
        let back = parse_tkg_str(&kg.serialize(), "prop-rt").unwrap();
        prop_assert_eq!(kg.num_entities(), back.num_entities());
        prop_assert_eq!(kg.num_relations(), back.num_relations());
        let render = |g: &TemporalKG| {
            let mut v: Vec<String> = g.quadruples().iter().map(|q| g.format_quadruple(q)).collect();
            v.sort();
            v
        };
        prop_assert_eq!(render(&kg), render(&back));
    }

    /// A timestamp visible at a fine granularity is never lost at a coarser
    /// one, and every valid fact marks at least one year bit.
    #[test]
    fn signatures_preserve_coarse_bits(text in graph_text()) {
        let kg = parse_tkg_str(&text, "prop").unwrap();
        for e in kg.entity_ids() {
            let sigs = [
                kg.temporal_signature(e, Granularity::Year),
                kg.temporal_signature(e, Granularity::Month),
                kg.temporal_signature(e, Granularity::Date),
            ];
            for &qi in kg.incident(e) {
                for p in kg.quadruple(qi).interval.endpoints() {
                    for (si, g) in [Granularity::Year, Granularity::Month, Granularity::Date]
                        .into_iter()
                        .enumerate()
                    {
                        if let Some(i) = kg.decompose_timepoint(&p, g) {
                            prop_assert!(sigs[si].get(i), "missing bit {i} at {g:?}");
                        }
                    }
                }
            }
            // each active month bit projects onto an active year bit
            for i in sigs[1].active_indices() {
                prop_assert!(sigs[0].get(i as usize / 12));
            }
            let has_valid = kg.incident(e).iter().any(|&qi| kg.quadruple(qi).is_valid());
            if has_valid {
                prop_assert!(sigs[0].popcount() >= 1);
            }
        }
    }

    /// A strictly increasing affine rescale of one row changes no argmax.
    #[test]
    fn row_argmax_invariant_under_rescale(
        rows in 1usize..12,
        cols in 1usize..12,
        cells in prop::collection::vec(-1000i32..1000, 144),
        row in 0usize..12,
        scale in 1u32..50,
        shift in -100i32..100,
    ) {
        let row = row % rows;
        let scores = Array2::from_shape_fn((rows, cols), |(i, j)| {
            f64::from(cells[(i * cols + j) % cells.len()]) / 7.0
        });
        let mut rescaled = scores.clone();
        for v in rescaled.row_mut(row).iter_mut() {
            *v = *v * f64::from(scale) + f64::from(shift);
        }
        let wrap = |scores: Array2<f64>| SimilarityMatrix { scores, topk: vec![], k_topk: 0, k_csls: 0 };
        let a = wrap(scores);
        let b = wrap(rescaled);
        prop_assert_eq!(a.row_argmax(row), b.row_argmax(row));
        prop_assert_eq!(pseudo_pairs(&a), pseudo_pairs(&b));
    }

    /// Conflicts are exactly the sources mapped to two or more distinct
    /// targets across the three scales.
    #[test]
    fn conflicts_match_direct_enumeration(
        maps in prop::collection::vec(
            prop::collection::btree_map(0u32..30, 0u32..10, 0..20), 3)
    ) {
        let sa = |scale: u8, m: &BTreeMap<u32, u32>| ScaleAlignment {
            scale,
            pairs: m.iter().map(|(&s, &t)| (EntityId(s), EntityId(t))).collect(),
        };
        let got = detect_conflicts(&sa(1, &maps[0]), &sa(2, &maps[1]), &sa(3, &maps[2]));
        let mut union: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for m in &maps {
            for (&s, &t) in m {
                union.entry(s).or_default().insert(t);
            }
        }
        let want: BTreeSet<(EntityId, EntityId)> = union
            .iter()
            .filter(|(_, ts)| ts.len() >= 2)
            .flat_map(|(&s, ts)| ts.iter().map(move |&t| (EntityId(s), EntityId(t))))
            .collect();
        prop_assert_eq!(got.pairs, want);
    }

    /// The hinge is non-negative and zero exactly when the margin holds.
    #[test]
    fn hinge_zero_iff_margin_met(
        m in 0.01f64..5.0,
        dp in 0.0f64..2.0,
        dn in 0.0f64..2.0,
    ) {
        let h = hinge(m, dp, dn);
        prop_assert!(h >= 0.0);
        prop_assert_eq!(h == 0.0, dn >= m + dp);
    }
}
