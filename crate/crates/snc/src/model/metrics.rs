//! Closed-form decoding metrics of the absorbing chain.
//!
//! Rank never decreases, so ordering states by rank is a topological order
//! up to self-loops. Expected absorption times and visiting probabilities
//! then come from single sparse sweeps instead of dense inversions of
//! (I - Q); a chain for k = 128 has a few thousand states with at most
//! w + 2 entries each.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::chain::MarkovChain;

/// The chain is entered by the first *successful* packet, which establishes
/// (1, w); under erasure probability alpha that entry costs a geometric
/// 1/(1 - alpha) transmissions, and every chain transition is one further
/// transmission.
pub fn expected_transmissions(chain: &MarkovChain) -> Result<f64> {
    let rows = chain.rows();
    let mut mean_steps = vec![0.0f64; rows.len()];
    for i in (0..rows.len()).rev() {
        let row = &rows[i];
        let leave = 1.0 - row.stay;
        if leave <= 1e-14 {
            return Err(Error::ModelConstruction(format!(
                "state index {i} has no escape mass; (I - Q) is singular"
            )));
        }
        let mut acc = 1.0;
        for &(target, p) in &row.ups {
            debug_assert!(target as usize > i);
            acc += p * mean_steps[target as usize];
        }
        mean_steps[i] = acc / leave;
    }
    Ok(1.0 / (1.0 - chain.alpha()) + mean_steps[0])
}

/// Probability that the generation is decoded after at most N transmissions,
/// for N = 0..=n_max, by iterated sparse vector-matrix products. The mass
/// waiting for the first successful packet sits in a pre-chain slot that
/// drains geometrically under erasures.
pub fn decoding_curve(chain: &MarkovChain, n_max: u32) -> Vec<f64> {
    let rows = chain.rows();
    let alpha = chain.alpha();
    let mut pre = 1.0f64;
    let mut pi = vec![0.0f64; rows.len()];
    let mut next = vec![0.0f64; rows.len()];
    let mut absorbed = 0.0f64;
    let mut xi = Vec::with_capacity(n_max as usize + 1);
    xi.push(0.0);
    for _ in 1..=n_max {
        next.fill(0.0);
        for (i, row) in rows.iter().enumerate() {
            let mass = pi[i];
            if mass == 0.0 {
                continue;
            }
            next[i] += mass * row.stay;
            for &(target, p) in &row.ups {
                next[target as usize] += mass * p;
            }
            absorbed += mass * row.absorb;
        }
        next[0] += pre * (1.0 - alpha);
        pre *= alpha;
        std::mem::swap(&mut pi, &mut next);
        xi.push(absorbed);
    }
    xi
}

/// xi(N) for a single transmission count.
pub fn decoding_probability(chain: &MarkovChain, n: u32) -> f64 {
    *decoding_curve(chain, n).last().expect("curve is non-empty")
}

/// Probability of ever occupying each transient state when starting from
/// (1, w). The start state counts as occupied.
pub fn visit_probabilities(chain: &MarkovChain) -> Result<Vec<f64>> {
    let rows = chain.rows();
    let mut hit = vec![0.0f64; rows.len()];
    let mut visits = vec![0.0f64; rows.len()];
    if rows.is_empty() {
        return Ok(hit);
    }
    hit[0] = 1.0;
    for i in 0..rows.len() {
        let row = &rows[i];
        let leave = 1.0 - row.stay;
        if leave <= 1e-14 {
            return Err(Error::ModelConstruction(format!(
                "state index {i} has no escape mass; (I - Q) is singular"
            )));
        }
        // Expected visits = hit probability times the geometric dwell count.
        visits[i] = hit[i] / leave;
        for &(target, p) in &row.ups {
            hit[target as usize] += visits[i] * p;
        }
    }
    Ok(hit)
}

/// Probability that a received packet raises the rank, per rank r = 1..k-1,
/// marginalized over the visited coverages. Always quoted for the loss-free
/// link: on an erasure chain the self-loop inflation is divided back out.
pub fn rank_increase_probability(chain: &MarkovChain) -> Result<Vec<f64>> {
    let hit = visit_probabilities(chain)?;
    let keep = 1.0 - chain.alpha();
    let rows = chain.rows();
    let mut delta = Vec::with_capacity(chain.k() as usize - 1);
    for r in 1..chain.k() {
        let mut acc = 0.0;
        for i in chain.rank_range(r) {
            let innovate = (1.0 - rows[i].stay) / keep;
            acc += hit[i] * innovate;
        }
        delta.push(acc);
    }
    Ok(delta)
}

/// Literature lower bound on the innovation probability at rank i for
/// density d = w/k: 1 - (1 - d)^(k - i).
pub fn lower_bound_innovative(i: u32, k: u32, d: f64) -> f64 {
    debug_assert!(i <= k);
    debug_assert!(d > 0.0 && d <= 1.0);
    1.0 - (1.0 - d).powi((k - i) as i32)
}

/// Scalar metrics and curves of one chain, ready for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainMetrics {
    pub k: u32,
    pub w: u32,
    pub q: u8,
    pub alpha: f64,
    pub expected_transmissions: f64,
    /// Decoding probability at N = k + eps for eps = 0..=epsilon_max.
    pub xi: Vec<f64>,
    /// Innovation probability per rank r = 1..=k-1.
    pub delta: Vec<f64>,
    /// Eq.-style lower bound per rank r = 1..=k-1 at density w/k.
    pub lower_bound: Vec<f64>,
}

impl MarkovChain {
    /// Bundles the derived metrics over a decoding-overhead window.
    pub fn metrics(&self, epsilon_max: u32) -> Result<ChainMetrics> {
        let expected = expected_transmissions(self)?;
        let curve = decoding_curve(self, self.k() + epsilon_max);
        let xi = curve[self.k() as usize..].to_vec();
        let delta = rank_increase_probability(self)?;
        let d = f64::from(self.w()) / f64::from(self.k());
        let lower_bound = (1..self.k())
            .map(|r| lower_bound_innovative(r, self.k(), d))
            .collect();
        Ok(ChainMetrics {
            k: self.k(),
            w: self.w(),
            q: self.q(),
            alpha: self.alpha(),
            expected_transmissions: expected,
            xi,
            delta,
            lower_bound,
        })
    }
}
