//! Absorbing Markov chain model of sparse-coded decoding.
//!
//! States pair the decoder's rank with its covered-column count; transition
//! masses are exact hypergeometric support counts, with the j = 0 mass split
//! between staying and rank-up by the fitted (or tabulated) dependence
//! probability. Every decoding metric derives from the chain:
//! expected transmissions, the decoding-probability curve, per-rank
//! innovation probabilities, and the erasure-channel variants.

mod chain;
mod metrics;
mod theta_fit;

pub use chain::{
    build_state_space, transition_probabilities, BinomialTable, MarkovChain, MarkovState,
    ThetaSource, ThetaTable, TransitionRow, ROW_SUM_TOL,
};
pub use metrics::{
    decoding_curve, decoding_probability, expected_transmissions, lower_bound_innovative,
    rank_increase_probability, visit_probabilities, ChainMetrics,
};
pub use theta_fit::{gamma_of, theta_fit, ThetaFitParams, W3Gamma};

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(k: u32, w: u32, q: u8) -> MarkovChain {
        MarkovChain::build(k, w, q, &ThetaSource::fitted(q).unwrap()).unwrap()
    }

    #[test]
    fn state_space_small_case() {
        let states = build_state_space(10, 3).unwrap();
        // Rank 1 holds exactly (1, 3): the first packet covers w columns.
        let rank1: Vec<_> = states.iter().filter(|s| s.rank == 1).collect();
        assert_eq!(rank1.len(), 1);
        assert_eq!((rank1[0].rank, rank1[0].covered), (1, 3));
        assert_eq!((states[0].rank, states[0].covered), (1, 3));
        // (2, 7) is excluded: at most w new columns per rank step.
        assert!(!states.iter().any(|s| s.rank == 2 && s.covered == 7));
        // Brute-force count over the raw constraints.
        let mut expected = 0;
        for r in 1..10u32 {
            for c in 1..=10u32 {
                if c >= r.max(3) && c <= 10.min(r * 3) {
                    expected += 1;
                }
            }
        }
        assert_eq!(states.len(), expected);
        // The absorbing (k, k) is not enumerated as transient.
        assert!(!states.iter().any(|s| s.rank == 10));
    }

    #[test]
    fn state_space_density_gate() {
        assert!(build_state_space(10, 2).is_err());
        assert!(build_state_space(10, 6).is_err());
        assert!(build_state_space(10, 5).is_ok());
    }

    #[test]
    fn chain_rejects_unsupported_density_with_fit() {
        let theta = ThetaSource::fitted(1).unwrap();
        assert!(matches!(
            MarkovChain::build(10, 6, 1, &theta),
            Err(crate::Error::UnsupportedDensity { .. })
        ));
    }

    #[test]
    fn table_source_lifts_density_gate() {
        // w = 1 makes every packet cover one fresh column until completion:
        // states are (r, r) and theta there is 1, but rank-ups at j = 1 keep
        // the chain moving.
        let table = ThetaTable::new();
        let chain = MarkovChain::build(6, 1, 1, &ThetaSource::Table(table)).unwrap();
        let m = expected_transmissions(&chain).unwrap();
        // Coupon collector over 6 coupons: 6 * H_6, exact for w = 1.
        let coupon: f64 = (1..=6).map(|i| 6.0 / i as f64).sum();
        assert!((m - coupon).abs() < 1e-9, "{m} vs {coupon}");
    }

    #[test]
    fn rows_are_stochastic() {
        for (k, w, q) in [(10, 3, 1u8), (32, 7, 1), (24, 5, 4), (16, 4, 8), (20, 8, 2)] {
            let chain = chain(k, w, q);
            for (i, row) in chain.rows().iter().enumerate() {
                let sum: f64 = row.stay + row.absorb + row.ups.iter().map(|&(_, p)| p).sum::<f64>();
                assert!(
                    (sum - 1.0).abs() < ROW_SUM_TOL,
                    "row {i} of ({k},{w},q={q}) sums to {sum}"
                );
                assert!(row.ups.len() <= w as usize + 1);
            }
        }
    }

    #[test]
    fn full_coverage_rows_have_no_new_columns() {
        let chain = chain(10, 3, 1);
        for (s, row) in chain.states().iter().zip(chain.rows()) {
            if s.covered == 10 {
                let up: f64 = row.ups.iter().map(|&(_, p)| p).sum::<f64>() + row.absorb;
                assert!((row.stay + up - 1.0).abs() < 1e-15);
                // All rank-up mass keeps c = k.
                for &(t, _) in &row.ups {
                    assert_eq!(chain.states()[t as usize].covered, 10);
                }
            }
        }
    }

    #[test]
    fn transition_listing_matches_support_enumeration() {
        // k=10, w=3, state (2,5): of the C(10,3)=120 supports, those with
        // exactly j new columns number C(5,3-j)*C(5,j).
        let theta = ThetaSource::fitted(1).unwrap();
        let list = transition_probabilities(
            MarkovState {
                rank: 2,
                covered: 5,
            },
            10,
            3,
            1,
            &theta,
        )
        .unwrap();
        let p_of = |r: u32, c: u32| -> f64 {
            list.iter()
                .find(|(s, _)| s.rank == r && s.covered == c)
                .map(|&(_, p)| p)
                .unwrap_or(0.0)
        };
        assert!((p_of(3, 6) - 50.0 / 120.0).abs() < 1e-15);
        assert!((p_of(3, 7) - 50.0 / 120.0).abs() < 1e-15);
        assert!((p_of(3, 8) - 10.0 / 120.0).abs() < 1e-15);
        // j = 0 total splits between stay and rank-up at the same coverage.
        assert!((p_of(2, 5) + p_of(3, 5) - 10.0 / 120.0).abs() < 1e-15);
        let sum: f64 = list.iter().map(|&(_, p)| p).sum();
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn erasure_rescaling() {
        let base = chain(16, 3, 1);
        let same = base.apply_erasure(0.0).unwrap();
        let m0 = expected_transmissions(&base).unwrap();
        assert_eq!(m0, expected_transmissions(&same).unwrap());
        for alpha in [0.1, 0.2, 0.3] {
            let lossy = base.apply_erasure(alpha).unwrap();
            for row in lossy.rows() {
                let sum: f64 = row.stay + row.absorb + row.ups.iter().map(|&(_, p)| p).sum::<f64>();
                assert!((sum - 1.0).abs() < ROW_SUM_TOL);
            }
            let m = expected_transmissions(&lossy).unwrap();
            assert!(
                (m * (1.0 - alpha) / m0 - 1.0).abs() < 1e-9,
                "alpha={alpha}: {m} vs {m0}"
            );
        }
        assert!(base.apply_erasure(1.0).is_err());
        assert!(base.apply_erasure(-0.1).is_err());
    }

    #[test]
    fn decoding_curve_basics() {
        let chain = chain(12, 3, 1);
        let xi = decoding_curve(&chain, 60);
        for (n, &x) in xi.iter().take(12).enumerate() {
            assert_eq!(x, 0.0, "xi({n}) must be 0 below k");
        }
        for pair in xi.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-15);
        }
        assert!(xi[60] > 0.9);
        assert_eq!(decoding_probability(&chain, 11), 0.0);
    }

    #[test]
    fn absorption_mean_matches_curve() {
        for (k, w, q, alpha) in [(12u32, 3u32, 1u8, 0.0), (16, 4, 4, 0.0), (12, 3, 1, 0.25)] {
            let mut c = chain(k, w, q);
            if alpha > 0.0 {
                c = c.apply_erasure(alpha).unwrap();
            }
            let expected = expected_transmissions(&c).unwrap();
            let xi = decoding_curve(&c, 20 * k);
            let mut mean = 0.0;
            let mut last = 0.0;
            for (n, &x) in xi.iter().enumerate() {
                mean += n as f64 * (x - last);
                last = x;
                if 1.0 - x < 1e-12 {
                    break;
                }
            }
            assert!(
                (mean - expected).abs() < 1e-6,
                "(k={k},w={w},q={q},alpha={alpha}): {mean} vs {expected}"
            );
        }
    }

    #[test]
    fn visit_probabilities_partition_by_rank() {
        for (k, w, q) in [(16u32, 3u32, 1u8), (20, 4, 2), (24, 7, 3)] {
            let chain = chain(k, w, q);
            let hit = visit_probabilities(&chain).unwrap();
            assert_eq!(hit[0], 1.0);
            for &h in &hit {
                assert!((-1e-12..=1.0 + 1e-12).contains(&h));
            }
            // Exactly one state per rank is visited on any path.
            for r in 1..k {
                let sum: f64 = chain.rank_range(r).map(|i| hit[i]).sum();
                assert!((sum - 1.0).abs() < 1e-9, "rank {r} of ({k},{w}): {sum}");
            }
        }
    }

    #[test]
    fn visit_probabilities_erasure_invariant() {
        let base = chain(16, 3, 1);
        let lossy = base.apply_erasure(0.3).unwrap();
        let h0 = visit_probabilities(&base).unwrap();
        let h1 = visit_probabilities(&lossy).unwrap();
        for (a, b) in h0.iter().zip(&h1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_structure() {
        let chain = chain(16, 3, 1);
        let delta = rank_increase_probability(&chain).unwrap();
        assert_eq!(delta.len(), 15);
        for &d in &delta {
            assert!(d > 0.0 && d <= 1.0);
        }
        // Single visited state at rank 1 makes delta(1) exact.
        let first_row = &chain.rows()[0];
        assert!((delta[0] - (1.0 - first_row.stay)).abs() < 1e-15);
        // Unreachable alternative rank-1 states would break that identity;
        // the state space has none.
        assert_eq!(chain.rank_range(1).len(), 1);
        // Erasure chains report the same loss-free delta.
        let lossy = chain.apply_erasure(0.2).unwrap();
        let delta_lossy = rank_increase_probability(&lossy).unwrap();
        for (a, b) in delta.iter().zip(&delta_lossy) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_split_does_not_move_column_mass() {
        // The marginal distribution of coverage increments is independent of
        // the dependence probability: only the j = 0 mass is split between
        // staying and a rank-up at the same coverage.
        let fitted = ThetaSource::fitted(1).unwrap();
        let mut table = ThetaTable::new();
        for c in 3..=10u32 {
            for r in 1..=c {
                table.insert(r, c, if r == c { 1.0 } else { 0.123 });
            }
        }
        let a = MarkovChain::build(10, 3, 1, &fitted).unwrap();
        let b = MarkovChain::build(10, 3, 1, &ThetaSource::Table(table)).unwrap();

        // Total outgoing mass per coverage increment j, absorbing included.
        let increment_marginal = |chain: &MarkovChain, idx: usize| -> Vec<f64> {
            let from_c = chain.states()[idx].covered;
            let row = &chain.rows()[idx];
            let mut out = vec![0.0f64; 4];
            out[0] += row.stay;
            for &(t, p) in &row.ups {
                out[(chain.states()[t as usize].covered - from_c) as usize] += p;
            }
            if row.absorb > 0.0 {
                out[(chain.k() - from_c) as usize] += row.absorb;
            }
            out
        };
        for idx in 0..a.rows().len() {
            let ma = increment_marginal(&a, idx);
            let mb = increment_marginal(&b, idx);
            for (x, y) in ma.iter().zip(&mb) {
                assert!((x - y).abs() < 1e-12, "state {idx}: {ma:?} vs {mb:?}");
            }
        }
    }

    #[test]
    fn lower_bound_values() {
        assert_eq!(lower_bound_innovative(8, 8, 0.5), 0.0);
        assert_eq!(lower_bound_innovative(3, 8, 1.0), 1.0);
        let b = lower_bound_innovative(0, 64, 3.0 / 64.0);
        // Independent route: exp(64 * ln(61/64)).
        let direct = 1.0 - (64.0 * (61.0f64 / 64.0).ln()).exp();
        assert!((b - direct).abs() < 1e-12, "{b} vs {direct}");
        assert!((b - 0.9537).abs() < 1e-4, "{b}");
    }

    #[test]
    fn theta_table_interpolation() {
        let mut table = ThetaTable::new();
        table.insert(2, 8, 0.2);
        table.insert(6, 8, 0.6);
        assert_eq!(table.lookup(4, 8).unwrap(), 0.4);
        assert_eq!(table.lookup(2, 8).unwrap(), 0.2);
        assert_eq!(table.lookup(8, 8).unwrap(), 1.0);
        assert!(table.lookup(1, 8).is_err());
        assert!(table.lookup(3, 9).is_err());
    }

    #[test]
    fn metrics_bundle_shapes() {
        let chain = chain(16, 3, 1);
        let metrics = chain.metrics(30).unwrap();
        assert_eq!(metrics.xi.len(), 31);
        assert_eq!(metrics.delta.len(), 15);
        assert_eq!(metrics.lower_bound.len(), 15);
        assert_eq!(metrics.xi[0], decoding_probability(&chain, 16));
        assert!(metrics.lower_bound.iter().all(|b| b.is_finite()));
    }
}
