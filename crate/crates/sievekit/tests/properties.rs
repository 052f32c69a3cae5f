//! Property tests for the structural invariants: permutation and duplication
//! invariance, interval orderings, conservation, and round trips.

use proptest::prelude::*;

use sievekit::data::{
    read_time_fixed, emit_time_fixed_csv, tabulate, Arm, CountTable, EventRecord, EventType,
    Outcome, SubjectRecord, Variant,
};
use sievekit::estimands::{ccs, CcsMode, EstimandOptions, StratumSelector};
use sievekit::special::{f_cdf, f_quantile};
use sievekit::survival::{cumulative_incidence, nelson_aalen, HazardTable};
use sievekit::uncertainty::{ccs_log_variance, eet_trinomial_ci, katz_ci, CcsVarianceMethod};

fn record_strategy() -> impl Strategy<Value = SubjectRecord> {
    (0u8..2, 0u8..3).prop_map(|(a, y)| {
        SubjectRecord::new(Arm::from_u8(a).unwrap(), Outcome::from_u8(y).unwrap())
    })
}

fn table_strategy() -> impl Strategy<Value = CountTable> {
    // interior cells so that every variance construction is defined
    (
        (1u64..2000, 1u64..500, 1u64..500),
        (1u64..2000, 1u64..500, 1u64..500),
    )
        .prop_map(|((n0, a0, b0), (n1, a1, b1))| CountTable {
            n: [[n0, a0, b0], [n1, a1, b1]],
            by_exposure: None,
            strata: None,
        })
}

proptest! {
    #[test]
    fn tabulate_permutation_invariant(mut records in prop::collection::vec(record_strategy(), 1..200), seed in 0u64..1000) {
        let before = tabulate(&records, None).unwrap();
        // deterministic shuffle driven by the seed
        let n = records.len();
        let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
        for i in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            records.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let after = tabulate(&records, None).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn estimands_invariant_under_duplication(table in table_strategy(), m in 2u64..6) {
        let duplicated = CountTable {
            n: [
                [table.n[0][0] * m, table.n[0][1] * m, table.n[0][2] * m],
                [table.n[1][0] * m, table.n[1][1] * m, table.n[1][2] * m],
            ],
            by_exposure: None,
            strata: None,
        };
        let opts = EstimandOptions::default();
        let a = ccs(&table, &StratumSelector::Marginal, CcsMode::Observed, &opts).unwrap().point;
        let b = ccs(&duplicated, &StratumSelector::Marginal, CcsMode::Observed, &opts).unwrap().point;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn sum_variance_dominates_decomposition(table in table_strategy()) {
        let vs = ccs_log_variance(&table, CcsVarianceMethod::Sum).unwrap().value();
        let vd = ccs_log_variance(&table, CcsVarianceMethod::Decomposition).unwrap().value();
        prop_assert!(vd <= vs + 1e-12, "decomposition {} > sum {}", vd, vs);
    }

    #[test]
    fn katz_interval_brackets_point(x1 in 1u64..500, n1_extra in 1u64..2000, x0 in 1u64..500, n0_extra in 1u64..2000) {
        let (n1, n0) = (x1 + n1_extra, x0 + n0_extra);
        let rr = (x1 as f64 / n1 as f64) / (x0 as f64 / n0 as f64);
        let (lo, hi) = katz_ci(rr, (x1, n1, x0, n0), 0.05).unwrap();
        prop_assert!(lo < rr && rr < hi);
    }

    #[test]
    fn trinomial_swap_equivariance(y1 in 1u64..200, y2 in 1u64..200) {
        let (lo, hi) = eet_trinomial_ci(y1, y2, 0.05).unwrap();
        let (lo_s, hi_s) = eet_trinomial_ci(y2, y1, 0.05).unwrap();
        prop_assert!((lo_s - 1.0 / hi).abs() <= 1e-9 * lo_s.max(1.0));
        prop_assert!((hi_s - 1.0 / lo).abs() <= 1e-9 * hi_s.max(1.0));
        prop_assert!(lo <= (y1 as f64 / y2 as f64) && (y1 as f64 / y2 as f64) <= hi);
    }

    #[test]
    fn incidence_conserves_and_is_monotone(rows in prop::collection::vec((0.0f64..0.6, 0.0f64..0.35, 0.0f64..0.6, 0.0f64..0.35), 1..10)) {
        let hazards: Vec<[[f64; 2]; 2]> = rows
            .iter()
            .map(|(a1, b1, a0, b0)| [[*a0, *a1], [*b0, *b1]])
            .collect();
        let table = HazardTable::from_hazards(hazards).unwrap();
        let incidence = cumulative_incidence(&table);
        let mut prev = [[0.0f64; 2]; 2];
        for k in 1..=table.horizon() {
            for arm in [Arm::Control, Arm::Treated] {
                let m1 = incidence.incidence(Variant::One, k, arm);
                let m2 = incidence.incidence(Variant::Two, k, arm);
                let total = m1 + m2 + incidence.survival(k, arm);
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(m1 + 1e-15 >= prev[0][arm.index()]);
                prop_assert!(m2 + 1e-15 >= prev[1][arm.index()]);
                prev[0][arm.index()] = m1;
                prev[1][arm.index()] = m2;
            }
        }
    }

    #[test]
    fn f_quantile_round_trip(p in 0.01f64..0.99, d1 in 1.0f64..80.0, d2 in 1.0f64..80.0) {
        let x = f_quantile(p, d1, d2).unwrap();
        let back = f_cdf(x, d1, d2).unwrap();
        prop_assert!((back - p).abs() < 1e-9, "p {} -> x {} -> {}", p, x, back);
    }

    #[test]
    fn csv_round_trip_preserves_counts(records in prop::collection::vec(record_strategy(), 1..100)) {
        let mut buf = Vec::new();
        emit_time_fixed_csv(&records, &mut buf).unwrap();
        let back = read_time_fixed(buf.as_slice(), None).unwrap();
        prop_assert_eq!(tabulate(&records, None).unwrap(), tabulate(&back, None).unwrap());
    }

    #[test]
    fn nelson_aalen_monotone_in_right_endpoint(
        times in prop::collection::vec((1u32..8, 0u8..3, 0u8..2), 10..80)
    ) {
        let events: Vec<EventRecord> = times
            .iter()
            .map(|(t, e, a)| {
                EventRecord::new(Arm::from_u8(*a).unwrap(), *t, EventType::from_u8(*e).unwrap())
            })
            .collect();
        let horizon = events.iter().map(|e| e.time).max().unwrap();
        let mut prev = [0.0f64; 2];
        for k2 in 1..=horizon {
            if let Ok(na) = nelson_aalen(&events, Variant::One, (1, k2)) {
                prop_assert!(na[0] + 1e-15 >= prev[0]);
                prop_assert!(na[1] + 1e-15 >= prev[1]);
                prev = na;
            }
        }
    }
}
