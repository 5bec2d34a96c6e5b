//! State space and transition structure of the absorbing decoding chain.
//!
//! A state (r, c) is the decoder's rank and covered-column count. Receiving
//! a packet whose support brings j >= 1 new columns always raises the rank,
//! so rank never decreases and the only cycles are self-loops; the chain is
//! absorbing with (k, k) the single absorbing state. Transition masses are
//! hypergeometric counts over the C(k, w) equally likely supports, split at
//! j = 0 by the dependence probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::theta_fit::{theta_fit, ThetaFitParams, W3Gamma};

/// One (rank, covered-columns) state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkovState {
    pub rank: u32,
    pub covered: u32,
}

/// Pascal-rule binomial table in exact u128 arithmetic.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    n_max: usize,
    rows: Vec<u128>,
}

impl BinomialTable {
    pub fn new(n_max: usize) -> Result<Self> {
        let width = n_max + 1;
        let mut rows = vec![0u128; width * width];
        for n in 0..=n_max {
            rows[n * width] = 1;
            for r in 1..=n {
                let above = rows[(n - 1) * width + r];
                let left = rows[(n - 1) * width + r - 1];
                rows[n * width + r] = above.checked_add(left).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "binomial table overflows u128 at n={n} (generation too large)"
                    ))
                })?;
            }
        }
        Ok(BinomialTable { n_max, rows })
    }

    /// C(n, r); zero when r > n.
    #[inline]
    pub fn get(&self, n: u32, r: u32) -> u128 {
        debug_assert!(n as usize <= self.n_max);
        if r > n {
            0
        } else {
            self.rows[n as usize * (self.n_max + 1) + r as usize]
        }
    }
}

/// Where transition rows get their dependence probability from.
#[derive(Debug, Clone)]
pub enum ThetaSource {
    /// The fitted power law; valid for 3 <= w <= k/2.
    Fitted { params: ThetaFitParams, w3: W3Gamma },
    /// Explicit per-state values, e.g. from the Monte Carlo oracle. Lifts
    /// the density restriction of the fit.
    Table(ThetaTable),
}

impl ThetaSource {
    /// Fitted source with the reference parameters for q.
    pub fn fitted(q: u8) -> Result<Self> {
        Ok(ThetaSource::Fitted {
            params: ThetaFitParams::for_q(q)?,
            w3: W3Gamma::default(),
        })
    }

    pub fn fitted_with(params: ThetaFitParams, w3: W3Gamma) -> Self {
        ThetaSource::Fitted { params, w3 }
    }

    /// Dependence probability for a state. Exactly 1 when r = c.
    pub fn theta(&self, r: u32, c: u32, w: u32, q: u8) -> Result<f64> {
        if r == c {
            return Ok(1.0);
        }
        match self {
            ThetaSource::Fitted { params, w3 } => theta_fit(r, c, w, q, params, *w3),
            ThetaSource::Table(table) => table.lookup(r, c),
        }
    }
}

/// Dependence probabilities keyed by (r, c), with linear interpolation in r
/// inside a sampled coverage.
#[derive(Debug, Clone, Default)]
pub struct ThetaTable {
    by_coverage: std::collections::BTreeMap<u32, Vec<(u32, f64)>>,
}

impl ThetaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: u32, c: u32, value: f64) {
        let list = self.by_coverage.entry(c).or_default();
        match list.binary_search_by_key(&r, |&(rr, _)| rr) {
            Ok(i) => list[i] = (r, value),
            Err(i) => list.insert(i, (r, value)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.by_coverage.is_empty()
    }

    /// Exact entry if sampled, otherwise interpolated between the bracketing
    /// ranks of the same coverage.
    pub fn lookup(&self, r: u32, c: u32) -> Result<f64> {
        if r == c {
            return Ok(1.0);
        }
        let list = self
            .by_coverage
            .get(&c)
            .ok_or(Error::ThetaUnavailable { r, c })?;
        match list.binary_search_by_key(&r, |&(rr, _)| rr) {
            Ok(i) => Ok(list[i].1),
            Err(i) => {
                if i == 0 || i == list.len() {
                    return Err(Error::ThetaUnavailable { r, c });
                }
                let (r0, v0) = list[i - 1];
                let (r1, v1) = list[i];
                let t = f64::from(r - r0) / f64::from(r1 - r0);
                Ok(v0 + t * (v1 - v0))
            }
        }
    }
}

/// Smallest feasible coverage at a given rank.
#[inline]
fn c_min(r: u32, w: u32) -> u32 {
    r.max(w)
}

/// Largest feasible coverage at a given rank: at most w new columns arrive
/// per rank step.
#[inline]
fn c_max(r: u32, k: u32, w: u32) -> u32 {
    k.min(r.saturating_mul(w))
}

/// Enumerates transient states ordered by (rank, covered); (1, w) is first.
pub(crate) fn enumerate_states(k: u32, w: u32) -> Result<Vec<MarkovState>> {
    if w == 0 || w > k {
        return Err(Error::InvalidParameter(format!(
            "density w={w} outside [1, k={k}]"
        )));
    }
    let mut states = Vec::new();
    for r in 1..k {
        for c in c_min(r, w)..=c_max(r, k, w) {
            states.push(MarkovState {
                rank: r,
                covered: c,
            });
        }
    }
    Ok(states)
}

/// Transient states of the fitted model, (1, w) first and the absorbing
/// (k, k) excluded. Densities outside [3, k/2] are rejected because the
/// fitted dependence law has no parameters there; chains built from an
/// explicit table do not go through this gate.
pub fn build_state_space(k: u32, w: u32) -> Result<Vec<MarkovState>> {
    check_fit_density(k, w)?;
    enumerate_states(k, w)
}

pub(crate) fn check_fit_density(k: u32, w: u32) -> Result<()> {
    if w < 3 || 2 * w > k {
        return Err(Error::UnsupportedDensity { w, k, max_w: k / 2 });
    }
    Ok(())
}

/// Sparse outgoing row of one transient state.
#[derive(Debug, Clone)]
pub struct TransitionRow {
    /// Self-loop mass p(0,0).
    pub stay: f64,
    /// Rank-up transitions to transient targets, as (state index, mass).
    pub ups: Vec<(u32, f64)>,
    /// Mass into the absorbing state (k, k).
    pub absorb: f64,
}

/// The absorbing chain for fixed (k, w, q) with its transition rows.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    k: u32,
    w: u32,
    q: u8,
    alpha: f64,
    states: Vec<MarkovState>,
    rank_offset: Vec<usize>,
    rows: Vec<TransitionRow>,
}

/// Row-sum defect tolerated at build time.
pub const ROW_SUM_TOL: f64 = 1e-12;

impl MarkovChain {
    /// Builds the loss-free chain.
    pub fn build(k: u32, w: u32, q: u8, theta: &ThetaSource) -> Result<Self> {
        if !crate::gf::SUPPORTED_Q.contains(&q) {
            return Err(Error::InvalidParameter(format!("q={q} not supported")));
        }
        if k < 2 {
            return Err(Error::InvalidParameter("k must be >= 2 for a chain".into()));
        }
        if matches!(theta, ThetaSource::Fitted { .. }) {
            check_fit_density(k, w)?;
        }
        let states = enumerate_states(k, w)?;
        let mut rank_offset = vec![0usize; k as usize + 1];
        for (i, s) in states.iter().enumerate() {
            if rank_offset[s.rank as usize] == 0 && s.rank > 1 {
                rank_offset[s.rank as usize] = i;
            }
        }
        rank_offset[k as usize] = states.len();

        let binom = BinomialTable::new(k as usize)?;
        let denom = binom.get(k, w) as f64;
        let index_of =
            |r: u32, c: u32| -> usize { rank_offset[r as usize] + (c - c_min(r, w)) as usize };

        let mut rows = Vec::with_capacity(states.len());
        for s in &states {
            let (r, c) = (s.rank, s.covered);
            let theta_v = theta.theta(r, c, w, q)?;
            if !(0.0..=1.0).contains(&theta_v) {
                return Err(Error::ModelConstruction(format!(
                    "dependence probability {theta_v} outside [0,1] at (r={r}, c={c})"
                )));
            }
            let base = binom.get(c, w) as f64 / denom;
            let stay = theta_v * base;
            let up_same = (1.0 - theta_v) * base;
            let mut ups = Vec::with_capacity(w as usize + 1);
            let mut absorb = 0.0;
            let push = |target_r: u32,
                        target_c: u32,
                        p: f64,
                        ups: &mut Vec<(u32, f64)>,
                        absorb: &mut f64|
             -> Result<()> {
                if p == 0.0 {
                    return Ok(());
                }
                if target_r == k {
                    if target_c != k {
                        return Err(Error::ModelConstruction(format!(
                            "positive mass into infeasible state ({target_r}, {target_c})"
                        )));
                    }
                    *absorb += p;
                } else {
                    if target_c < c_min(target_r, w) || target_c > c_max(target_r, k, w) {
                        return Err(Error::ModelConstruction(format!(
                            "positive mass into infeasible state ({target_r}, {target_c})"
                        )));
                    }
                    ups.push((index_of(target_r, target_c) as u32, p));
                }
                Ok(())
            };
            push(r + 1, c, up_same, &mut ups, &mut absorb)?;
            for j in 1..=w.min(k - c) {
                let count = binom.get(c, w - j) * binom.get(k - c, j);
                if count == 0 {
                    continue;
                }
                push(r + 1, c + j, count as f64 / denom, &mut ups, &mut absorb)?;
            }
            let total = stay + up_same_total(&ups, absorb);
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ModelConstruction(format!(
                    "row ({r}, {c}) sums to {total}, defect {}",
                    total - 1.0
                )));
            }
            if stay >= 1.0 {
                return Err(Error::ModelConstruction(format!(
                    "state ({r}, {c}) can never be left; absorption unreachable"
                )));
            }
            rows.push(TransitionRow { stay, ups, absorb });
        }

        Ok(MarkovChain {
            k,
            w,
            q,
            alpha: 0.0,
            states,
            rank_offset,
            rows,
        })
    }

    /// Chain over an erasure channel: every off-diagonal mass is thinned by
    /// (1 - alpha) and the difference returns to the self-loop.
    pub fn apply_erasure(&self, alpha: f64) -> Result<MarkovChain> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "erasure probability {alpha} outside [0, 1)"
            )));
        }
        let keep = 1.0 - alpha;
        let rows = self
            .rows
            .iter()
            .map(|row| TransitionRow {
                stay: row.stay * keep + alpha,
                ups: row.ups.iter().map(|&(t, p)| (t, p * keep)).collect(),
                absorb: row.absorb * keep,
            })
            .collect();
        Ok(MarkovChain {
            k: self.k,
            w: self.w,
            q: self.q,
            alpha: 1.0 - (1.0 - self.alpha) * keep,
            states: self.states.clone(),
            rank_offset: self.rank_offset.clone(),
            rows,
        })
    }

    #[inline]
    pub fn k(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn w(&self) -> u32 {
        self.w
    }

    #[inline]
    pub fn q(&self) -> u8 {
        self.q
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Transient states, (1, w) first, ordered by (rank, covered).
    #[inline]
    pub fn states(&self) -> &[MarkovState] {
        &self.states
    }

    #[inline]
    pub fn rows(&self) -> &[TransitionRow] {
        &self.rows
    }

    /// Index range of the states at a given rank.
    pub fn rank_range(&self, r: u32) -> std::ops::Range<usize> {
        debug_assert!(r >= 1 && r < self.k);
        let lo = self.rank_offset[r as usize];
        let hi = if r + 1 < self.k {
            self.rank_offset[r as usize + 1]
        } else {
            self.states.len()
        };
        lo..hi
    }
}

fn up_same_total(ups: &[(u32, f64)], absorb: f64) -> f64 {
    ups.iter().map(|&(_, p)| p).sum::<f64>() + absorb
}

/// Outgoing transition list of a single state, as (target state, mass),
/// self-loop included. Targets with zero mass are omitted.
pub fn transition_probabilities(
    state: MarkovState,
    k: u32,
    w: u32,
    q: u8,
    theta: &ThetaSource,
) -> Result<Vec<(MarkovState, f64)>> {
    let (r, c) = (state.rank, state.covered);
    if r < 1 || r >= k || c < c_min(r, w) || c > c_max(r, k, w) {
        return Err(Error::InvalidParameter(format!(
            "({r}, {c}) is not a transient state of the (k={k}, w={w}) chain"
        )));
    }
    let binom = BinomialTable::new(k as usize)?;
    let denom = binom.get(k, w) as f64;
    let theta_v = theta.theta(r, c, w, q)?;
    let base = binom.get(c, w) as f64 / denom;
    let mut out = Vec::new();
    let stay = theta_v * base;
    if stay > 0.0 {
        out.push((state, stay));
    }
    let up = (1.0 - theta_v) * base;
    if up > 0.0 {
        out.push((
            MarkovState {
                rank: r + 1,
                covered: c,
            },
            up,
        ));
    }
    for j in 1..=w.min(k - c) {
        let count = binom.get(c, w - j) * binom.get(k - c, j);
        if count > 0 {
            out.push((
                MarkovState {
                    rank: r + 1,
                    covered: c + j,
                },
                count as f64 / denom,
            ));
        }
    }
    Ok(out)
}
