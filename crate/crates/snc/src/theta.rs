//! Monte Carlo estimation of the linear-dependence probability and the
//! regression pipeline that re-derives the power-law exponents.
//!
//! The dependence probability theta_q(r, c, w) is the chance that a fresh
//! w-sparse vector supported on the c covered columns lies in the span of
//! the r vectors already held. There is no closed form; states are reached
//! synthetically inside a c-column window, a probe vector is drawn on that
//! window, and dependence is counted over many trials. Note the window is
//! self-contained: the estimate does not depend on the generation size.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{generate_coding_vector, CodingVector, DecoderState};
use crate::error::{Error, Result};
use crate::gf::FieldSpec;
use crate::model::ThetaTable;

/// One Monte Carlo estimate of the dependence probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSample {
    pub q: u8,
    pub w: u32,
    pub c: u32,
    pub r: u32,
    pub trials: u64,
    pub dependent: u64,
    pub estimate: f64,
    pub stderr: f64,
}

impl ThetaSample {
    fn from_counts(q: u8, w: u32, c: u32, r: u32, trials: u64, dependent: u64) -> Self {
        let estimate = dependent as f64 / trials as f64;
        let stderr = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        ThetaSample {
            q,
            w,
            c,
            r,
            trials,
            dependent,
            estimate,
            stderr,
        }
    }
}

/// How a decoder state at (r, c) is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthesisMethod {
    /// Draw w-sparse vectors on the window and retry the whole attempt
    /// whenever rank r arrives before coverage c. Unbiased with respect to
    /// the natural reception process, but extreme states (coverage near
    /// r * w) are reached rarely.
    #[default]
    Rejection,
    /// Cover the window first with block-structured supports, then grow the
    /// rank with random in-window vectors. Reaches every feasible state;
    /// the row-space distribution differs from the natural process.
    Constructed,
}

/// Attempts before a rejection synthesis gives up.
pub const DEFAULT_MAX_ATTEMPTS: u32 = 10_000;

fn validate_point(q: u8, w: u32, c: u32, r: u32) -> Result<()> {
    if !crate::gf::SUPPORTED_Q.contains(&q) {
        return Err(Error::InvalidParameter(format!("q={q} not supported")));
    }
    if w == 0 || w > c {
        return Err(Error::InvalidParameter(format!(
            "density w={w} outside [1, c={c}]"
        )));
    }
    if r == 0 || r > c {
        return Err(Error::InvalidParameter(format!(
            "rank r={r} outside [1, c={c}]"
        )));
    }
    Ok(())
}

/// Builds a decoder over a c-column window holding exactly r independent
/// vectors whose supports united cover the whole window.
pub fn synthesize_state<R: Rng + ?Sized>(
    field: &FieldSpec,
    w: u32,
    c: u32,
    r: u32,
    method: SynthesisMethod,
    max_attempts: u32,
    rng: &mut R,
) -> Result<DecoderState> {
    validate_point(field.q(), w, c, r)?;
    let mut state = DecoderState::new(c as usize, field)?;
    synthesize_into(&mut state, field, w, c, r, method, max_attempts, rng)?;
    Ok(state)
}

/// Same as [`synthesize_state`] but reusing an existing decoder allocation.
#[allow(clippy::too_many_arguments)]
fn synthesize_into<R: Rng + ?Sized>(
    state: &mut DecoderState,
    field: &FieldSpec,
    w: u32,
    c: u32,
    r: u32,
    method: SynthesisMethod,
    max_attempts: u32,
    rng: &mut R,
) -> Result<()> {
    let (w, c, r) = (w as usize, c as usize, r as usize);
    match method {
        SynthesisMethod::Rejection => {
            // Rank r is normally hit within a few multiples of c draws; the
            // budget keeps unreachable targets (even densities over GF(2)
            // cap the window rank at c - 1) from spinning forever.
            let draw_budget = 100 * c as u64 + 1_000;
            for _ in 0..max_attempts {
                state.reset();
                let mut draws = 0u64;
                loop {
                    let v = generate_coding_vector(c, w, field, rng)?;
                    let out = state.ingest(&v, None, field)?;
                    if out.rank_after as usize == r {
                        if out.covered_after as usize == c {
                            return Ok(());
                        }
                        break;
                    }
                    draws += 1;
                    if draws > draw_budget {
                        break;
                    }
                }
            }
            Err(Error::Synthesis {
                r: r as u32,
                c: c as u32,
                attempts: max_attempts,
            })
        }
        SynthesisMethod::Constructed => {
            if r < c.div_ceil(w) {
                return Err(Error::InvalidParameter(format!(
                    "rank {r} cannot cover {c} columns with density {w}"
                )));
            }
            state.reset();
            // Disjoint w-blocks cover the window; the tail vector takes the
            // leftover columns plus already-covered fill-ins.
            let blocks = c / w;
            for b in 0..blocks {
                let entries = (b * w..(b + 1) * w)
                    .map(|col| (col as u32, random_nonzero(field, rng)))
                    .collect();
                let v = CodingVector::new(c, entries)?;
                state.ingest(&v, None, field)?;
            }
            if c % w != 0 {
                let mut entries: Vec<(u32, u8)> = (blocks * w..c)
                    .map(|col| (col as u32, random_nonzero(field, rng)))
                    .collect();
                while entries.len() < w {
                    let col = rng.random_range(0..(blocks * w) as u32);
                    if !entries.iter().any(|&(e, _)| e == col) {
                        entries.push((col, random_nonzero(field, rng)));
                    }
                }
                let v = CodingVector::new(c, entries)?;
                state.ingest(&v, None, field)?;
            }
            debug_assert_eq!(state.covered(), c);
            let mut draws = 0u64;
            let budget = 1_000u64 * max_attempts as u64;
            while state.rank() < r {
                let v = generate_coding_vector(c, w, field, rng)?;
                state.ingest(&v, None, field)?;
                draws += 1;
                if draws > budget {
                    return Err(Error::Synthesis {
                        r: r as u32,
                        c: c as u32,
                        attempts: max_attempts,
                    });
                }
            }
            Ok(())
        }
    }
}

fn random_nonzero<R: Rng + ?Sized>(field: &FieldSpec, rng: &mut R) -> u8 {
    if field.q() == 1 {
        1
    } else {
        rng.random_range(1..field.order()) as u8
    }
}

/// Monte Carlo estimate of theta_q(r, c, w): one independent state synthesis
/// and one probe vector per trial.
pub fn estimate_theta<R: Rng + ?Sized>(
    q: u8,
    w: u32,
    c: u32,
    r: u32,
    trials: u64,
    rng: &mut R,
) -> Result<ThetaSample> {
    estimate_theta_with(q, w, c, r, trials, 1, SynthesisMethod::Rejection, rng)
}

/// Estimate with an explicit synthesis method and probe batching: each
/// synthesized state is probed `probes_per_state` times, so the total trial
/// count is `syntheses * probes_per_state`. Batching reuses the expensive
/// synthesis; probes within one state are mildly correlated, which the
/// binomial standard error does not account for.
#[allow(clippy::too_many_arguments)]
pub fn estimate_theta_with<R: Rng + ?Sized>(
    q: u8,
    w: u32,
    c: u32,
    r: u32,
    syntheses: u64,
    probes_per_state: u64,
    method: SynthesisMethod,
    rng: &mut R,
) -> Result<ThetaSample> {
    validate_point(q, w, c, r)?;
    if syntheses == 0 || probes_per_state == 0 {
        return Err(Error::InvalidParameter("trial counts must be >= 1".into()));
    }
    let field = FieldSpec::new(q)?;
    let mut state = DecoderState::new(c as usize, &field)?;
    let mut dependent = 0u64;
    for _ in 0..syntheses {
        synthesize_into(
            &mut state,
            &field,
            w,
            c,
            r,
            method,
            DEFAULT_MAX_ATTEMPTS,
            rng,
        )?;
        for _ in 0..probes_per_state {
            let probe = generate_coding_vector(c as usize, w as usize, &field, rng)?;
            if !state.probe(&probe, &field)? {
                dependent += 1;
            }
        }
    }
    let trials = syntheses * probes_per_state;
    Ok(ThetaSample::from_counts(q, w, c, r, trials, dependent))
}

/// Exact dependence probability of a synthesized state by enumerating every
/// w-subset of the window. Coefficients are determined by the support only
/// in GF(2), so this is restricted to q = 1.
pub fn exact_dependence_probability(
    state: &mut DecoderState,
    w: u32,
    field: &FieldSpec,
) -> Result<f64> {
    if field.q() != 1 {
        return Err(Error::InvalidParameter(
            "exhaustive support enumeration requires q = 1".into(),
        ));
    }
    let c = state.k();
    let w = w as usize;
    if w > c {
        return Err(Error::InvalidParameter(format!(
            "density w={w} exceeds window {c}"
        )));
    }
    let mut dependent = 0u64;
    let mut total = 0u64;
    let mut support: Vec<u32> = (0..w as u32).collect();
    loop {
        let v = CodingVector::new(c, support.iter().map(|&col| (col, 1)).collect())?;
        if !state.probe(&v, field)? {
            dependent += 1;
        }
        total += 1;
        // Next lexicographic combination.
        let mut i = w;
        loop {
            if i == 0 {
                return Ok(dependent as f64 / total as f64);
            }
            i -= 1;
            if support[i] < (c - w + i) as u32 {
                support[i] += 1;
                for j in i + 1..w {
                    support[j] = support[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// A (coverage, rank) grid point for batch estimation.
pub type GridPoint = (u32, u32);

/// Estimates a grid of (c, r) points with per-point deterministic RNG
/// streams, optionally fanned out over threads. Outcomes are ordered like
/// the input grid and do not depend on the thread count; unreachable states
/// surface as per-point errors so callers can report and skip them.
#[allow(clippy::too_many_arguments)]
pub fn estimate_grid_outcomes(
    q: u8,
    w: u32,
    points: &[GridPoint],
    syntheses: u64,
    probes_per_state: u64,
    method: SynthesisMethod,
    seed: u64,
    threads: usize,
) -> Vec<(GridPoint, Result<ThetaSample>)> {
    let threads = threads.max(1);
    let mut results: Vec<Option<Result<ThetaSample>>> = Vec::new();
    results.resize_with(points.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results_mutex = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= points.len() {
                    break;
                }
                let (c, r) = points[idx];
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((u64::from(c) << 32) | u64::from(r));
                let sample =
                    estimate_theta_with(q, w, c, r, syntheses, probes_per_state, method, &mut rng);
                results_mutex.lock().expect("no panics hold the lock")[idx] = Some(sample);
            });
        }
    });
    points
        .iter()
        .copied()
        .zip(results.into_iter().map(|slot| slot.expect("visited")))
        .collect()
}

/// Like [`estimate_grid_outcomes`] but failing on the first per-point error.
#[allow(clippy::too_many_arguments)]
pub fn estimate_grid(
    q: u8,
    w: u32,
    points: &[GridPoint],
    syntheses: u64,
    probes_per_state: u64,
    method: SynthesisMethod,
    seed: u64,
    threads: usize,
) -> Result<Vec<ThetaSample>> {
    estimate_grid_outcomes(
        q,
        w,
        points,
        syntheses,
        probes_per_state,
        method,
        seed,
        threads,
    )
    .into_iter()
    .map(|(_, outcome)| outcome)
    .collect()
}

/// Least-squares fit of the exponent in theta = (r/c)^gamma.
///
/// The residuals are taken in linear probability space. The true dependence
/// curve is nearly exponential in r, so a log-space fit would be dominated
/// by the tiny low-rank estimates (whose log has the largest sampling
/// variance) and land far from the reference slopes; the linear objective
/// weighs the well-measured near-certain region instead, matching how the
/// power law was calibrated.
pub fn fit_gamma(samples: &[ThetaSample]) -> Result<f64> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut informative = 0usize;
    for s in samples {
        if s.r >= s.c {
            continue;
        }
        if s.estimate > 0.0 && s.estimate < 1.0 {
            informative += 1;
        }
        points.push((f64::from(s.r) / f64::from(s.c), s.estimate));
    }
    if informative < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 non-degenerate samples, got {informative}"
        )));
    }
    let sse = |gamma: f64| -> f64 {
        points
            .iter()
            .map(|&(rho, est)| (est - rho.powf(gamma)).powi(2))
            .sum()
    };
    // Coarse scan then golden-section refinement; the objective is smooth
    // and effectively unimodal in the exponent.
    let c_max = samples.iter().map(|s| s.c).max().unwrap_or(1);
    let hi = 8.0 * f64::from(c_max);
    let steps = 512;
    let mut best = (0.0f64, sse(0.0));
    for i in 1..=steps {
        let g = hi * i as f64 / steps as f64;
        let v = sse(g);
        if v < best.1 {
            best = (g, v);
        }
    }
    let span = hi / steps as f64;
    let (mut lo, mut up) = ((best.0 - span).max(0.0), best.0 + span);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (up - phi * (up - lo), lo + phi * (up - lo));
    let (mut fa, mut fb) = (sse(a), sse(b));
    for _ in 0..200 {
        if fa < fb {
            up = b;
            b = a;
            fb = fa;
            a = up - phi * (up - lo);
            fa = sse(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (up - lo);
            fb = sse(b);
        }
    }
    Ok((0.5 * (lo + up)).max(0.0))
}

/// Regressed exponent law, comparable to the reference slope parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SlopeFit {
    /// gamma = m * c (densities above 4).
    Origin { m: f64 },
    /// gamma = m * c + b (w = 4).
    Affine { m: f64, b: f64 },
    /// Two lines for w = 3: gamma = m * c below the breakpoint, slope 0.3
    /// above it. Both tail intercepts are scored: the detached form and
    /// the continuity-anchored one.
    TwoSegment {
        m: f64,
        c0: f64,
        sse_piecewise: f64,
        sse_continuous: f64,
    },
}

/// Fits the slope law for the given density regime over (c, gamma) points.
pub fn fit_slopes(points: &[(u32, f64)], w: u32, _q: u8) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 gamma points, got {}",
            points.len()
        )));
    }
    match w {
        0..=2 => Err(Error::Fit(format!("no slope regime for w={w}"))),
        3 => fit_two_segment(points),
        4 => {
            let n = points.len() as f64;
            let sx: f64 = points.iter().map(|&(c, _)| f64::from(c)).sum();
            let sy: f64 = points.iter().map(|&(_, g)| g).sum();
            let sxx: f64 = points.iter().map(|&(c, _)| f64::from(c).powi(2)).sum();
            let sxy: f64 = points.iter().map(|&(c, g)| f64::from(c) * g).sum();
            let denom = n * sxx - sx * sx;
            if denom.abs() < 1e-12 {
                return Err(Error::Fit("degenerate coverage grid".into()));
            }
            let m = (n * sxy - sx * sy) / denom;
            let b = (sy - m * sx) / n;
            Ok(SlopeFit::Affine { m, b })
        }
        _ => {
            let sxx: f64 = points.iter().map(|&(c, _)| f64::from(c).powi(2)).sum();
            let sxy: f64 = points.iter().map(|&(c, g)| f64::from(c) * g).sum();
            Ok(SlopeFit::Origin { m: sxy / sxx })
        }
    }
}

fn fit_two_segment(points: &[(u32, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Fit("two-segment fit needs at least 3 points".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|&(c, _)| c);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    // Breakpoint candidates sit between grid points; the left segment keeps
    // at least two of them.
    for split in 2..sorted.len() {
        let c0 = f64::from(sorted[split].0);
        let left = &sorted[..split];
        let right = &sorted[split..];
        let sxx: f64 = left.iter().map(|&(c, _)| f64::from(c).powi(2)).sum();
        let sxy: f64 = left.iter().map(|&(c, g)| f64::from(c) * g).sum();
        let m = sxy / sxx;
        let sse_left: f64 = left
            .iter()
            .map(|&(c, g)| (g - m * f64::from(c)).powi(2))
            .sum();
        let sse_piece: f64 = right
            .iter()
            .map(|&(c, g)| (g - 0.3 * (f64::from(c) - c0 * (1.0 - m))).powi(2))
            .sum();
        let sse_cont: f64 = right
            .iter()
            .map(|&(c, g)| (g - (m * c0 + 0.3 * (f64::from(c) - c0))).powi(2))
            .sum();
        let total = sse_left + sse_piece.min(sse_cont);
        if best.is_none_or(|(t, ..)| total < t) {
            best = Some((total, m, c0, sse_left));
        }
    }
    let (_, m, c0, sse_left) = best.expect("at least one split");
    // Re-score both tail forms at the chosen breakpoint.
    let right: Vec<_> = sorted
        .iter()
        .filter(|&&(c, _)| f64::from(c) >= c0)
        .collect();
    let sse_piecewise = sse_left
        + right
            .iter()
            .map(|&&(c, g)| (g - 0.3 * (f64::from(c) - c0 * (1.0 - m))).powi(2))
            .sum::<f64>();
    let sse_continuous = sse_left
        + right
            .iter()
            .map(|&&(c, g)| (g - (m * c0 + 0.3 * (f64::from(c) - c0))).powi(2))
            .sum::<f64>();
    Ok(SlopeFit::TwoSegment {
        m,
        c0,
        sse_piecewise,
        sse_continuous,
    })
}

/// Canonical CSV header of a dependence-probability table.
pub const THETA_TABLE_HEADER: &str = "q,w,c,r,trials,estimate,stderr";

/// Writes samples as CSV with the canonical header.
pub fn write_table<W: Write>(out: &mut W, samples: &[ThetaSample]) -> Result<()> {
    writeln!(out, "{THETA_TABLE_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.q, s.w, s.c, s.r, s.trials, s.estimate, s.stderr
        )?;
    }
    Ok(())
}

/// Reads a CSV table written by [`write_table`].
pub fn read_table<R: BufRead>(input: R, path: &str) -> Result<Vec<ThetaSample>> {
    let mut samples = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 0 && trimmed == THETA_TABLE_HEADER) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                path: path.into(),
                message: format!(
                    "line {}: expected 7 fields, got {}",
                    lineno + 1,
                    fields.len()
                ),
            });
        }
        let parse_err = |what: &str| Error::Parse {
            path: path.into(),
            message: format!("line {}: bad {what}", lineno + 1),
        };
        let trials: u64 = fields[4].parse().map_err(|_| parse_err("trials"))?;
        let estimate: f64 = fields[5].parse().map_err(|_| parse_err("estimate"))?;
        samples.push(ThetaSample {
            q: fields[0].parse().map_err(|_| parse_err("q"))?,
            w: fields[1].parse().map_err(|_| parse_err("w"))?,
            c: fields[2].parse().map_err(|_| parse_err("c"))?,
            r: fields[3].parse().map_err(|_| parse_err("r"))?,
            trials,
            dependent: (estimate * trials as f64).round() as u64,
            estimate,
            stderr: fields[6].parse().map_err(|_| parse_err("stderr"))?,
        });
    }
    Ok(samples)
}

/// Collects samples matching (q, w) into a model-ready lookup table.
pub fn samples_to_table(samples: &[ThetaSample], q: u8, w: u32) -> ThetaTable {
    let mut table = ThetaTable::new();
    for s in samples {
        if s.q == q && s.w == w {
            table.insert(s.r, s.c, s.estimate);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_window_is_certainly_dependent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for q in [1u8, 4] {
            let s = estimate_theta(q, 3, 6, 6, 300, &mut rng).unwrap();
            assert_eq!(s.estimate, 1.0);
            assert_eq!(s.stderr, 0.0);
        }
    }

    #[test]
    fn single_vector_window_gf2() {
        // q=1, w=3, c=3, r=1: only one non-zero GF(2) vector exists on a
        // fixed 3-column support, so every probe repeats it.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = estimate_theta(1, 3, 3, 1, 500, &mut rng).unwrap();
        assert_eq!(s.estimate, 1.0);
    }

    #[test]
    fn rejects_bad_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(estimate_theta(1, 4, 3, 1, 10, &mut rng).is_err());
        assert!(estimate_theta(1, 3, 6, 0, 10, &mut rng).is_err());
        assert!(estimate_theta(1, 3, 6, 7, 10, &mut rng).is_err());
        assert!(estimate_theta(5, 3, 6, 3, 10, &mut rng).is_err());
        assert!(estimate_theta(1, 3, 6, 3, 0, &mut rng).is_err());
    }

    #[test]
    fn unreachable_rank_errors_instead_of_spinning() {
        // Full window rank is unreachable for an even density over GF(2);
        // the synthesis must give up with an error.
        let field = FieldSpec::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = synthesize_state(&field, 4, 8, 8, SynthesisMethod::Rejection, 3, &mut rng);
        assert!(matches!(out, Err(Error::Synthesis { r: 8, c: 8, .. })));
    }

    #[test]
    fn constructed_rejects_infeasible_rank() {
        let field = FieldSpec::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // r=2 cannot cover 9 columns at w=3.
        assert!(
            synthesize_state(&field, 3, 9, 2, SynthesisMethod::Constructed, 10, &mut rng).is_err()
        );
    }

    #[test]
    fn synthesis_hits_requested_state() {
        let field = FieldSpec::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for method in [SynthesisMethod::Rejection, SynthesisMethod::Constructed] {
            for (c, r) in [(6u32, 4u32), (9, 7), (12, 9)] {
                let state =
                    synthesize_state(&field, 3, c, r, method, DEFAULT_MAX_ATTEMPTS, &mut rng)
                        .unwrap();
                assert_eq!(state.rank() as u32, r, "{method:?} ({c},{r})");
                assert_eq!(state.covered() as u32, c);
            }
        }
    }

    #[test]
    fn constructed_reaches_extreme_states() {
        // Coverage equal to r * w cannot realistically be rejection-sampled.
        let field = FieldSpec::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let state = synthesize_state(
            &field,
            3,
            24,
            8,
            SynthesisMethod::Constructed,
            DEFAULT_MAX_ATTEMPTS,
            &mut rng,
        )
        .unwrap();
        assert_eq!(state.rank(), 8);
        assert_eq!(state.covered(), 24);
    }

    #[test]
    fn estimate_matches_exact_enumeration() {
        // Same synthesis stream, sampled probes vs exhaustive probes.
        let field = FieldSpec::new(1).unwrap();
        for (c, r) in [(6u32, 4u32), (9, 6), (12, 9)] {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + u64::from(c));
            let mc = estimate_theta(1, 3, c, r, 20_000, &mut rng).unwrap();
            let mut exact_sum = 0.0;
            let mut exact_sq = 0.0;
            let n_states = 2_000usize;
            for _ in 0..n_states {
                let mut state = synthesize_state(
                    &field,
                    3,
                    c,
                    r,
                    SynthesisMethod::Rejection,
                    DEFAULT_MAX_ATTEMPTS,
                    &mut rng,
                )
                .unwrap();
                let p = exact_dependence_probability(&mut state, 3, &field).unwrap();
                exact_sum += p;
                exact_sq += p * p;
            }
            let exact_mean = exact_sum / n_states as f64;
            let exact_var = (exact_sq / n_states as f64 - exact_mean * exact_mean).max(0.0);
            let exact_se = (exact_var / n_states as f64).sqrt();
            let tol = 3.0 * (mc.stderr.powi(2) + exact_se.powi(2)).sqrt();
            assert!(
                (mc.estimate - exact_mean).abs() <= tol.max(1e-3),
                "(c={c},r={r}): mc {} vs exact {exact_mean}, tol {tol}",
                mc.estimate
            );
        }
    }

    #[test]
    fn estimate_monotone_in_rank_and_field() {
        // Averaged over a small grid, dependence grows with rank and shrinks
        // with field size.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 4_000;
        let grid = [(8u32, 4u32), (8, 6), (8, 7)];
        let mut by_q = Vec::new();
        for q in [1u8, 2, 4, 8] {
            let mut acc = 0.0;
            let mut prev = -1.0;
            for &(c, r) in &grid {
                let s = estimate_theta(q, 3, c, r, trials, &mut rng).unwrap();
                // Non-decreasing in r at fixed (c, w, q), with 3-sigma slack.
                assert!(
                    s.estimate >= prev - 3.0 * s.stderr.max(1e-3),
                    "q={q} r={r}: {} after {prev}",
                    s.estimate
                );
                prev = s.estimate;
                acc += s.estimate;
            }
            by_q.push(acc / grid.len() as f64);
        }
        for pair in by_q.windows(2) {
            assert!(
                pair[1] <= pair[0] + 0.02,
                "dependence should not grow with q: {by_q:?}"
            );
        }
    }

    #[test]
    fn fit_gamma_recovers_synthetic_exponent() {
        let c = 40u32;
        let samples: Vec<ThetaSample> = (10..40u32)
            .map(|r| {
                let est = (f64::from(r) / f64::from(c)).powf(5.0);
                ThetaSample {
                    q: 1,
                    w: 5,
                    c,
                    r,
                    trials: 1,
                    dependent: 0,
                    estimate: est,
                    stderr: 0.0,
                }
            })
            .collect();
        let gamma = fit_gamma(&samples).unwrap();
        assert!((gamma - 5.0).abs() < 1e-9, "{gamma}");
    }

    #[test]
    fn fit_gamma_rejects_degenerate_samples() {
        let all_full: Vec<ThetaSample> = (1..6u32)
            .map(|i| ThetaSample {
                q: 1,
                w: 3,
                c: 6 + i,
                r: 6 + i,
                trials: 10,
                dependent: 10,
                estimate: 1.0,
                stderr: 0.0,
            })
            .collect();
        assert!(fit_gamma(&all_full).is_err());
    }

    #[test]
    fn fit_slopes_recovers_exact_lines() {
        let origin: Vec<(u32, f64)> = (8..30).map(|c| (c, 0.337 * f64::from(c))).collect();
        match fit_slopes(&origin, 8, 1).unwrap() {
            SlopeFit::Origin { m } => assert!((m - 0.337).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let affine: Vec<(u32, f64)> = (8..30).map(|c| (c, 1.101 * f64::from(c) + 3.817)).collect();
        match fit_slopes(&affine, 4, 2).unwrap() {
            SlopeFit::Affine { m, b } => {
                assert!((m - 1.101).abs() < 1e-9);
                assert!((b - 3.817).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_slopes(&origin[..1], 8, 1).is_err());
        assert!(fit_slopes(&origin, 2, 1).is_err());
    }

    #[test]
    fn fit_two_segment_locates_breakpoint() {
        // Continuous-tail synthetic data: m = 0.7 below c0 = 17, slope 0.3
        // above, anchored at the breakpoint.
        let m = 0.7;
        let c0 = 17.0;
        let points: Vec<(u32, f64)> = (4..40u32)
            .map(|c| {
                let g = if f64::from(c) < c0 {
                    m * f64::from(c)
                } else {
                    m * c0 + 0.3 * (f64::from(c) - c0)
                };
                (c, g)
            })
            .collect();
        match fit_slopes(&points, 3, 1).unwrap() {
            SlopeFit::TwoSegment {
                m: m_hat,
                c0: c0_hat,
                sse_piecewise,
                sse_continuous,
            } => {
                assert!((m_hat - m).abs() < 1e-9, "{m_hat}");
                assert!((c0_hat - c0).abs() <= 1.0, "{c0_hat}");
                assert!(sse_continuous < sse_piecewise);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn table_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples = vec![
            estimate_theta(1, 3, 6, 4, 500, &mut rng).unwrap(),
            estimate_theta(1, 3, 6, 5, 500, &mut rng).unwrap(),
        ];
        let mut buf = Vec::new();
        write_table(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(THETA_TABLE_HEADER));
        let back = read_table(std::io::Cursor::new(&buf), "mem").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].r, samples[0].r);
        assert_eq!(back[0].estimate, samples[0].estimate);
        let table = samples_to_table(&back, 1, 3);
        assert!(!table.is_empty());
        assert_eq!(table.lookup(4, 6).unwrap(), samples[0].estimate);
    }

    #[test]
    fn grid_estimation_is_thread_count_invariant() {
        let points: Vec<GridPoint> = vec![(8, 5), (8, 6), (8, 7), (10, 7)];
        let a = estimate_grid(1, 3, &points, 300, 1, SynthesisMethod::Rejection, 99, 1).unwrap();
        let b = estimate_grid(1, 3, &points, 300, 1, SynthesisMethod::Rejection, 99, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.dependent, y.dependent);
        }
    }
}
