//! Monte Carlo campaign runner and model-versus-simulation comparison.
//!
//! A campaign transmits whole generations over an erasure channel, either at
//! fixed density or with the tunable policy that raises the density once the
//! expected cost of the next rank step exceeds a threshold. Runs are
//! independent; each draws its own counter-mode RNG stream from the master
//! seed, so results are bit-identical for a fixed (seed, config) regardless
//! of the thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{generate_coding_vector, DecoderState};
use crate::error::{Error, Result};
use crate::gf::FieldSpec;
use crate::model::{theta_fit, BinomialTable, ChainMetrics, ThetaFitParams, W3Gamma};

/// Parameters of one simulation campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub k: u32,
    /// Density for the fixed policy; the tunable policy uses the ladder.
    pub w: u32,
    pub q: u8,
    /// Per-packet loss probability of the link.
    pub loss_rate: f64,
    pub runs: u32,
    pub seed: u64,
    /// Width of the decoding-overhead window for the empirical xi curve.
    pub epsilon_max: u32,
    /// Cost bound that triggers a density step under the tunable policy.
    pub tsnc_threshold: f64,
    /// Ascending density ladder; `None` derives {3, 7, 15, ...} up to k/2.
    pub ladder: Option<Vec<u32>>,
}

impl CampaignConfig {
    pub fn new(k: u32, w: u32, q: u8) -> Self {
        CampaignConfig {
            k,
            w,
            q,
            loss_rate: 0.0,
            runs: 10_000,
            seed: 0,
            epsilon_max: 30,
            tsnc_threshold: 1.1,
            ladder: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.w == 0 || self.w > self.k {
            return Err(Error::InvalidParameter(format!(
                "density w={} outside [1, k={}]",
                self.w, self.k
            )));
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(Error::InvalidParameter(format!(
                "loss rate {} outside [0, 1)",
                self.loss_rate
            )));
        }
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be >= 1".into()));
        }
        Ok(())
    }

    /// Doubling-minus-one ladder {3, 7, 15, ...} capped at k/2.
    pub fn default_ladder(k: u32) -> Vec<u32> {
        let mut ladder = Vec::new();
        let mut w = 3u32;
        while 2 * w <= k {
            ladder.push(w);
            w = 2 * w + 1;
        }
        ladder
    }

    fn resolved_ladder(&self) -> Vec<u32> {
        self.ladder
            .clone()
            .unwrap_or_else(|| Self::default_ladder(self.k))
    }
}

/// Density policy of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Every packet combines exactly w source packets.
    Fixed,
    /// Density climbs the ladder as dependence grows (the encoder has
    /// perfect knowledge of the decoder state, feedback is free).
    Tsnc,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Fixed => write!(f, "fixed"),
            Policy::Tsnc => write!(f, "tsnc"),
        }
    }
}

/// Chooses the lowest ladder density whose expected transmissions per rank
/// step at the current decoder state stay within the threshold.
#[derive(Debug, Clone)]
pub struct DensitySelector {
    k: u32,
    q: u8,
    ladder: Vec<u32>,
    threshold: f64,
    params: ThetaFitParams,
    w3: W3Gamma,
    binom: BinomialTable,
}

impl DensitySelector {
    pub fn new(k: u32, q: u8, ladder: Vec<u32>, threshold: f64) -> Result<Self> {
        if ladder.is_empty() {
            return Err(Error::InvalidParameter("density ladder is empty".into()));
        }
        let mut sorted = ladder;
        sorted.sort_unstable();
        Ok(DensitySelector {
            k,
            q,
            ladder: sorted,
            threshold,
            params: ThetaFitParams::for_q(q)?,
            w3: W3Gamma::default(),
            binom: BinomialTable::new(k as usize)?,
        })
    }

    /// Stay probability p(0,0) at (r, c) under density w.
    fn stay_probability(&self, rank: u32, covered: u32, w: u32) -> Result<f64> {
        if rank == 0 || covered < w {
            return Ok(0.0);
        }
        let base = self.binom.get(covered, w) as f64 / self.binom.get(self.k, w) as f64;
        let theta = theta_fit(rank, covered, w, self.q, &self.params, self.w3)?;
        Ok(theta * base)
    }

    /// The chosen density for the next packet given the decoder state.
    pub fn next_density(&self, rank: u32, covered: u32) -> Result<u32> {
        for &w in &self.ladder {
            let stay = self.stay_probability(rank, covered, w)?;
            let expected = 1.0 / (1.0 - stay);
            if expected <= self.threshold {
                return Ok(w);
            }
        }
        Ok(*self.ladder.last().expect("ladder validated non-empty"))
    }
}

/// Per-generation transcript of one simulated transfer.
#[derive(Debug, Clone)]
pub struct GenerationTrace {
    pub total_transmissions: u32,
    /// Packets sent while the decoder sat at rank r, r = 0..k-1.
    pub per_rank_sent: Vec<u32>,
    /// Packets that survived the channel at rank r.
    pub per_rank_received: Vec<u32>,
    /// Whether the first packet received at rank r was innovative. Sampling
    /// only the first probe weighs every visited (r, c) state once, which is
    /// what the chain's per-rank innovation probability marginalizes over;
    /// counting all packets would weigh states by dwell time instead.
    pub first_innovative: Vec<bool>,
    /// Density in effect at rank r (constant within a rank).
    pub per_rank_density: Vec<u32>,
    /// Cumulative decoder row operations when rank r was first reached,
    /// r = 1..=k.
    pub ops_at_rank: Vec<u64>,
    pub decode_epsilon: u32,
    pub op_count: u64,
}

/// Transmission cap multiplier before a run is declared stuck.
const CAP_FACTOR: u64 = 100;

/// Simulates one generation transfer to completion.
pub fn run_generation<R: Rng + ?Sized>(
    config: &CampaignConfig,
    policy: Policy,
    rng: &mut R,
) -> Result<GenerationTrace> {
    config.validate()?;
    let field = FieldSpec::new(config.q)?;
    let selector = match policy {
        Policy::Fixed => None,
        Policy::Tsnc => Some(DensitySelector::new(
            config.k,
            config.q,
            config.resolved_ladder(),
            config.tsnc_threshold,
        )?),
    };
    let k = config.k as usize;
    let mut state = DecoderState::new(k, &field)?;
    let mut trace = GenerationTrace {
        total_transmissions: 0,
        per_rank_sent: vec![0; k],
        per_rank_received: vec![0; k],
        first_innovative: vec![false; k],
        per_rank_density: vec![0; k],
        ops_at_rank: vec![0; k],
        decode_epsilon: 0,
        op_count: 0,
    };
    let cap = CAP_FACTOR * config.k as u64;
    while !state.is_complete() {
        let rank = state.rank();
        let density = match &selector {
            None => config.w,
            Some(sel) => sel.next_density(rank as u32, state.covered() as u32)?,
        };
        trace.per_rank_density[rank] = density;
        trace.total_transmissions += 1;
        trace.per_rank_sent[rank] += 1;
        if u64::from(trace.total_transmissions) > cap {
            return Err(Error::TransmissionCap { cap, k: config.k });
        }
        if config.loss_rate > 0.0 && rng.random::<f64>() < config.loss_rate {
            continue;
        }
        trace.per_rank_received[rank] += 1;
        let first_at_rank = trace.per_rank_received[rank] == 1;
        let out = state.ingest(
            &generate_coding_vector(k, density as usize, &field, rng)?,
            None,
            &field,
        )?;
        if first_at_rank {
            trace.first_innovative[rank] = out.innovative;
        }
        if out.innovative {
            trace.ops_at_rank[out.rank_after as usize - 1] = state.op_count();
        }
    }
    trace.decode_epsilon = trace.total_transmissions - config.k;
    trace.op_count = state.op_count();
    Ok(trace)
}

/// Aggregated campaign statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimStats {
    pub k: u32,
    pub w: u32,
    pub q: u8,
    pub loss_rate: f64,
    pub runs: u32,
    pub seed: u64,
    pub policy: Policy,
    pub epsilon_max: u32,
    pub mean_transmissions: f64,
    pub stddev_transmissions: f64,
    /// Empirical decoding probability at N = k + eps, eps = 0..=epsilon_max.
    pub xi_hat: Vec<f64>,
    /// Empirical innovation probability per rank r = 1..=k-1: fraction of
    /// runs whose first packet received at rank r was innovative. Matches
    /// the chain's visit-weighted marginalization over coverages.
    pub delta_hat: Vec<f64>,
    /// Dwell-weighted variant: rank-step transitions over all packets
    /// received at that rank. Biased low wherever the innovation probability
    /// varies across the coverages visited at one rank.
    pub delta_hat_dwell: Vec<f64>,
    /// Mean cumulative decoder operations when rank r was reached, r=1..=k.
    pub mean_ops_at_rank: Vec<f64>,
    /// Mean density in effect per rank r = 0..k-1.
    pub mean_density_at_rank: Vec<f64>,
    /// Total packets sent per rank across all runs.
    pub sent_at_rank: Vec<u64>,
    pub mean_op_count: f64,
}

#[derive(Default)]
struct Accumulator {
    total_sum: u64,
    total_sq_sum: u128,
    finish_hist: Vec<u64>,
    overflow: u64,
    sent: Vec<u64>,
    received: Vec<u64>,
    first_innovative: Vec<u64>,
    density_sum: Vec<u64>,
    ops_at_rank: Vec<u64>,
    ops_final: u64,
}

impl Accumulator {
    fn new(k: usize, eps: usize) -> Self {
        Accumulator {
            finish_hist: vec![0; eps + 1],
            sent: vec![0; k],
            received: vec![0; k],
            first_innovative: vec![0; k],
            density_sum: vec![0; k],
            ops_at_rank: vec![0; k],
            ..Default::default()
        }
    }

    fn add(&mut self, trace: &GenerationTrace, k: u32) {
        let total = u64::from(trace.total_transmissions);
        self.total_sum += total;
        self.total_sq_sum += u128::from(total) * u128::from(total);
        let eps = (trace.total_transmissions - k) as usize;
        if eps < self.finish_hist.len() {
            self.finish_hist[eps] += 1;
        } else {
            self.overflow += 1;
        }
        for (dst, &src) in self.sent.iter_mut().zip(&trace.per_rank_sent) {
            *dst += u64::from(src);
        }
        for (dst, &src) in self.received.iter_mut().zip(&trace.per_rank_received) {
            *dst += u64::from(src);
        }
        for (dst, &src) in self
            .first_innovative
            .iter_mut()
            .zip(&trace.first_innovative)
        {
            *dst += u64::from(src);
        }
        for (dst, &src) in self.density_sum.iter_mut().zip(&trace.per_rank_density) {
            *dst += u64::from(src);
        }
        for (dst, &src) in self.ops_at_rank.iter_mut().zip(&trace.ops_at_rank) {
            *dst += src;
        }
        self.ops_final += trace.op_count;
    }

    fn merge(&mut self, other: &Accumulator) {
        self.total_sum += other.total_sum;
        self.total_sq_sum += other.total_sq_sum;
        self.overflow += other.overflow;
        let pairs = [
            (&mut self.finish_hist, &other.finish_hist),
            (&mut self.sent, &other.sent),
            (&mut self.received, &other.received),
            (&mut self.first_innovative, &other.first_innovative),
            (&mut self.density_sum, &other.density_sum),
            (&mut self.ops_at_rank, &other.ops_at_rank),
        ];
        for (dst, src) in pairs {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
        self.ops_final += other.ops_final;
    }
}

/// Runs a full campaign and aggregates the traces. Integer accumulation
/// keeps the result independent of scheduling; run i always consumes RNG
/// stream i of the master seed.
pub fn run_campaign(config: &CampaignConfig, policy: Policy, threads: usize) -> Result<SimStats> {
    config.validate()?;
    let k = config.k as usize;
    let eps = config.epsilon_max as usize;
    let threads = threads.max(1).min(config.runs as usize);
    let next_run = AtomicUsize::new(0);
    let merged = Mutex::new(Accumulator::new(k, eps));
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| {
                let mut local = Accumulator::new(k, eps);
                loop {
                    let run = next_run.fetch_add(1, Ordering::Relaxed);
                    if run >= config.runs as usize {
                        break;
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(run as u64);
                    match run_generation(config, policy, &mut rng) {
                        Ok(trace) => local.add(&trace, config.k),
                        Err(e) => {
                            first_error.lock().expect("lock").get_or_insert(e);
                            break;
                        }
                    }
                }
                merged.lock().expect("lock").merge(&local);
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("lock") {
        return Err(e);
    }
    let acc = merged.into_inner().expect("lock");

    let runs = f64::from(config.runs);
    let mean = acc.total_sum as f64 / runs;
    let variance = if config.runs > 1 {
        let sum = acc.total_sum as f64;
        ((acc.total_sq_sum as f64) - sum * sum / runs) / (runs - 1.0)
    } else {
        0.0
    };
    let mut xi_hat = Vec::with_capacity(eps + 1);
    let mut cum = 0u64;
    for &h in &acc.finish_hist {
        cum += h;
        xi_hat.push(cum as f64 / runs);
    }
    let delta_hat = (1..k)
        .map(|r| acc.first_innovative[r] as f64 / runs)
        .collect();
    let delta_hat_dwell = (1..k)
        .map(|r| {
            if acc.received[r] == 0 {
                1.0
            } else {
                u64::from(config.runs) as f64 / acc.received[r] as f64
            }
        })
        .collect();
    Ok(SimStats {
        k: config.k,
        w: config.w,
        q: config.q,
        loss_rate: config.loss_rate,
        runs: config.runs,
        seed: config.seed,
        policy,
        epsilon_max: config.epsilon_max,
        mean_transmissions: mean,
        stddev_transmissions: variance.max(0.0).sqrt(),
        xi_hat,
        delta_hat,
        delta_hat_dwell,
        mean_ops_at_rank: acc.ops_at_rank.iter().map(|&v| v as f64 / runs).collect(),
        mean_density_at_rank: acc.density_sum.iter().map(|&v| v as f64 / runs).collect(),
        sent_at_rank: acc.sent,
        mean_op_count: acc.ops_final as f64 / runs,
    })
}

/// One row of the per-rank comparison table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeltaRow {
    pub r: u32,
    pub model: f64,
    pub sim: f64,
    pub lower_bound: f64,
}

/// One row of the decoding-probability comparison table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct XiRow {
    pub epsilon: u32,
    pub model: f64,
    pub sim: f64,
}

/// Model-versus-simulation comparison for one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub k: u32,
    pub w: u32,
    pub q: u8,
    pub loss_rate: f64,
    pub runs: u32,
    pub model_mean: f64,
    pub sim_mean: f64,
    pub mean_rel_err: f64,
    pub xi_mse: f64,
    pub delta_mse: f64,
    pub delta_rows: Vec<DeltaRow>,
    pub xi_rows: Vec<XiRow>,
}

/// Compares chain metrics with campaign statistics sharing (k, w, q, alpha).
pub fn compare_model_sim(model: &ChainMetrics, sim: &SimStats) -> Result<ComparisonReport> {
    if sim.policy != Policy::Fixed {
        return Err(Error::Comparison(
            "chain metrics describe a fixed density; tunable campaigns are not comparable".into(),
        ));
    }
    if model.k != sim.k || model.w != sim.w || model.q != sim.q {
        return Err(Error::Comparison(format!(
            "parameter mismatch: model (k={}, w={}, q={}) vs sim (k={}, w={}, q={})",
            model.k, model.w, model.q, sim.k, sim.w, sim.q
        )));
    }
    if (model.alpha - sim.loss_rate).abs() > 1e-12 {
        return Err(Error::Comparison(format!(
            "loss-rate mismatch: model {} vs sim {}",
            model.alpha, sim.loss_rate
        )));
    }
    if model.xi.len() != sim.xi_hat.len() {
        return Err(Error::Comparison(format!(
            "xi windows differ: model {} vs sim {} points",
            model.xi.len(),
            sim.xi_hat.len()
        )));
    }
    let mean_rel_err =
        (model.expected_transmissions - sim.mean_transmissions).abs() / sim.mean_transmissions;
    let xi_rows: Vec<XiRow> = model
        .xi
        .iter()
        .zip(&sim.xi_hat)
        .enumerate()
        .map(|(eps, (&m, &s))| XiRow {
            epsilon: eps as u32,
            model: m,
            sim: s,
        })
        .collect();
    let xi_mse = xi_rows
        .iter()
        .map(|row| (row.model - row.sim).powi(2))
        .sum::<f64>()
        / xi_rows.len() as f64;
    let delta_rows: Vec<DeltaRow> = model
        .delta
        .iter()
        .zip(&sim.delta_hat)
        .zip(&model.lower_bound)
        .enumerate()
        .map(|(i, ((&m, &s), &b))| DeltaRow {
            r: i as u32 + 1,
            model: m,
            sim: s,
            lower_bound: b,
        })
        .collect();
    let delta_mse = delta_rows
        .iter()
        .map(|row| (row.model - row.sim).powi(2))
        .sum::<f64>()
        / delta_rows.len() as f64;
    Ok(ComparisonReport {
        k: model.k,
        w: model.w,
        q: model.q,
        loss_rate: model.alpha,
        runs: sim.runs,
        model_mean: model.expected_transmissions,
        sim_mean: sim.mean_transmissions,
        mean_rel_err,
        xi_mse,
        delta_mse,
        delta_rows,
        xi_rows,
    })
}

/// Pass/fail thresholds applied to a comparison report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComparisonTolerances {
    pub max_mean_rel_err: f64,
    pub max_delta_mse: f64,
    pub max_xi_mse: f64,
}

impl Default for ComparisonTolerances {
    fn default() -> Self {
        ComparisonTolerances {
            max_mean_rel_err: 0.008,
            max_delta_mse: 4e-4,
            max_xi_mse: 2e-4,
        }
    }
}

/// One evaluated check line of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn evaluate(&self, tol: &ComparisonTolerances) -> Vec<CheckLine> {
        let line = |name: &str, value: f64, tolerance: f64| CheckLine {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        };
        vec![
            line("mean_rel_err", self.mean_rel_err, tol.max_mean_rel_err),
            line("delta_mse", self.delta_mse, tol.max_delta_mse),
            line("xi_mse", self.xi_mse, tol.max_xi_mse),
        ]
    }
}
