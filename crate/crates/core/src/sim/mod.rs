//! Discrete-time single-cell downlink simulator with per-slice RBG shares.
//!
//! Each decision interval runs `ttis_per_step` TTIs. Per TTI the UEs move,
//! packets arrive (Poisson), RBGs are granted in two passes and the granted
//! capacity drains the FIFO queues. Delays of delivered packets go into
//! one [`DelayHistogram`] per slice.

mod channel;
mod config;
mod histogram;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

pub use channel::{link_rate, path_loss_db};
pub use config::{ChannelConfig, SimConfig, SlicingMode};
pub use histogram::{delay_violation_rate, DelayHistogram, HISTOGRAM_RANGE_MS};

use crate::error::{Error, Result};

/// Per-slice observables aggregated over one decision interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SliceMetrics {
    /// Delivered throughput, Mb/s.
    pub t_rx: f64,
    /// Offered load (arrivals), Mb/s.
    pub t_tx: f64,
    /// Fraction of the interval's RBG-TTIs granted to the slice.
    pub util: f64,
    /// Fraction of delivered packets later than the slice threshold.
    pub d_vio: f64,
    /// Mean one-way delay of delivered packets, ms.
    pub d_avg: f64,
}

impl SliceMetrics {
    pub fn is_finite(&self) -> bool {
        [self.t_rx, self.t_tx, self.util, self.d_vio, self.d_avg].iter().all(|v| v.is_finite())
    }
}

/// Shares for the prioritized slices and the RBG counts they translate to.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    shares: Vec<f64>,
    rbgs: Vec<usize>,
}

impl AllocationPlan {
    /// Clamp shares into `[0,1]` (non-finite entries become 0), rescale them to
    /// sum to at most 1, and round to RBG counts that never exceed `num_rbgs`.
    pub fn from_shares(raw: &[f64], num_rbgs: usize) -> Self {
        let mut shares: Vec<f64> =
            raw.iter().map(|&a| if a.is_finite() { a.clamp(0.0, 1.0) } else { 0.0 }).collect();
        let sum: f64 = shares.iter().sum();
        if sum > 1.0 {
            shares.iter_mut().for_each(|a| *a /= sum);
        }
        let m = num_rbgs as f64;
        let mut rbgs: Vec<usize> = shares.iter().map(|a| (a * m).round() as usize).collect();
        // rounding can overshoot by a few; take back from the most rounded-up
        while rbgs.iter().sum::<usize>() > num_rbgs {
            let (idx, _) = rbgs
                .iter()
                .zip(&shares)
                .enumerate()
                .filter(|(_, (r, _))| **r > 0)
                .map(|(i, (r, a))| (i, *r as f64 - a * m))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            rbgs[idx] -= 1;
        }
        Self { shares, rbgs }
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn prioritized_rbgs(&self) -> &[usize] {
        &self.rbgs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedPacket {
    pub arrival_tti: u64,
    pub bits_remaining: u64,
}

#[derive(Debug, Clone)]
pub struct UeState {
    pub slice_id: usize,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    waypoint: [f64; 2],
    speed: f64,
    pub queue: VecDeque<QueuedPacket>,
    backlog_bits: u64,
}

impl UeState {
    pub fn queued_bits(&self) -> u64 {
        self.backlog_bits
    }
}

/// What happened to RBGs in one TTI; collected only when auditing is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtiAudit {
    pub granted: usize,
    pub per_slice: Vec<usize>,
    /// Some UE still had uncovered backlog after the grant passes.
    pub backlog_left: bool,
}

/// Packet bookkeeping since the simulation started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PacketLedger {
    pub arrived: u64,
    pub delivered: u64,
    pub queued: u64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    cfg: SimConfig,
    base: [f64; 2],
    ues: Vec<UeState>,
    slice_members: Vec<Vec<usize>>,
    slice_cursor: Vec<usize>,
    global_cursor: usize,
    mobility_rng: ChaCha8Rng,
    traffic_rng: ChaCha8Rng,
    arrivals: Option<Poisson<f64>>,
    tti: u64,
    arrived: u64,
    delivered: u64,
    histograms: Vec<DelayHistogram>,
    audit: Option<Vec<TtiAudit>>,
    // per-TTI scratch
    pending: Vec<i64>,
    granted: Vec<u64>,
    rates: Vec<u64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform_point(rng: &mut ChaCha8Rng, area: [f64; 2]) -> [f64; 2] {
    [rng.random_range(0.0..=area[0]), rng.random_range(0.0..=area[1])]
}

fn draw_speed(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

impl SimState {
    /// Place UEs uniformly in the area with empty queues. Every random draw
    /// comes from streams derived from `seed`.
    pub fn new(cfg: SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut placement = stream(seed, 1);
        let mobility_rng = stream(seed, 2);
        let traffic_rng = stream(seed, 3);

        let mut ues = Vec::new();
        let mut slice_members = vec![Vec::new(); cfg.num_slices];
        for (slice, &count) in cfg.ue_counts.iter().enumerate() {
            for _ in 0..count {
                let position = uniform_point(&mut placement, cfg.area_m);
                let waypoint = uniform_point(&mut placement, cfg.area_m);
                let speed = draw_speed(&mut placement, cfg.ue_speed_mps);
                slice_members[slice].push(ues.len());
                let mut ue =
                    UeState { slice_id: slice, position, velocity: [0.0; 2], waypoint, speed, queue: VecDeque::new(), backlog_bits: 0 };
                ue.velocity = heading(&ue);
                ues.push(ue);
            }
        }
        let lambda = cfg.per_ue_rate_bps * cfg.tti_ms / 1000.0 / cfg.packet_bits() as f64;
        let arrivals = if lambda > 0.0 {
            Some(Poisson::new(lambda).map_err(|e| Error::config(format!("arrival rate: {e}")))?)
        } else {
            None
        };
        let n_ue = ues.len();
        Ok(Self {
            base: cfg.base_position(),
            histograms: vec![DelayHistogram::new(); cfg.num_slices],
            slice_cursor: vec![0; cfg.num_slices],
            cfg,
            ues,
            slice_members,
            global_cursor: 0,
            mobility_rng,
            traffic_rng,
            arrivals,
            tti: 0,
            arrived: 0,
            delivered: 0,
            audit: None,
            pending: vec![0; n_ue],
            granted: vec![0; n_ue],
            rates: vec![0; n_ue],
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn ues(&self) -> &[UeState] {
        &self.ues
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    /// Histograms of the most recent interval, one per slice.
    pub fn histograms(&self) -> &[DelayHistogram] {
        &self.histograms
    }

    pub fn packet_ledger(&self) -> PacketLedger {
        PacketLedger {
            arrived: self.arrived,
            delivered: self.delivered,
            queued: self.ues.iter().map(|u| u.queue.len() as u64).sum(),
        }
    }

    /// Start recording one [`TtiAudit`] per TTI.
    pub fn enable_audit(&mut self) {
        self.audit = Some(Vec::new());
    }

    /// Audit records since the last call.
    pub fn take_audit(&mut self) -> Vec<TtiAudit> {
        self.audit.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Advance one decision interval under `plan` and report per-slice metrics.
    pub fn step_interval(&mut self, plan: &AllocationPlan) -> Vec<SliceMetrics> {
        let n = self.cfg.num_slices;
        assert_eq!(plan.prioritized_rbgs().len(), n - 1, "plan must cover the prioritized slices");
        self.histograms.iter_mut().for_each(DelayHistogram::clear);
        let mut served_bits = vec![0u64; n];
        let mut arrived_bits = vec![0u64; n];
        let mut rbg_grants = vec![0u64; n];

        for _ in 0..self.cfg.ttis_per_step {
            self.move_ues();
            self.arrive(&mut arrived_bits);
            self.refresh_rates();
            let per_slice = self.grant(plan);
            for (s, g) in per_slice.iter().enumerate() {
                rbg_grants[s] += *g as u64;
            }
            self.serve(&mut served_bits);
            self.tti += 1;
        }

        let secs = self.cfg.interval_seconds();
        let rbg_ttis = (self.cfg.num_rbgs * self.cfg.ttis_per_step) as f64;
        (0..n)
            .map(|s| SliceMetrics {
                t_rx: served_bits[s] as f64 / secs / 1e6,
                t_tx: arrived_bits[s] as f64 / secs / 1e6,
                util: rbg_grants[s] as f64 / rbg_ttis,
                d_vio: delay_violation_rate(&self.histograms[s], self.cfg.delay_thresholds_ms[s]),
                d_avg: self.histograms[s].mean_delay_ms(),
            })
            .collect()
    }

    fn move_ues(&mut self) {
        let dt = self.cfg.tti_ms / 1000.0;
        let (area, speeds) = (self.cfg.area_m, self.cfg.ue_speed_mps);
        for ue in &mut self.ues {
            let (dx, dy) = (ue.waypoint[0] - ue.position[0], ue.waypoint[1] - ue.position[1]);
            let dist = (dx * dx + dy * dy).sqrt();
            let stride = ue.speed * dt;
            if dist <= stride {
                ue.position = ue.waypoint;
                ue.waypoint = uniform_point(&mut self.mobility_rng, area);
                ue.speed = draw_speed(&mut self.mobility_rng, speeds);
            } else {
                ue.position[0] += dx / dist * stride;
                ue.position[1] += dy / dist * stride;
            }
            ue.velocity = heading(ue);
        }
    }

    fn arrive(&mut self, arrived_bits: &mut [u64]) {
        let Some(dist) = self.arrivals else { return };
        let bits = self.cfg.packet_bits();
        for ue in &mut self.ues {
            let count = dist.sample(&mut self.traffic_rng) as u64;
            for _ in 0..count {
                ue.queue.push_back(QueuedPacket { arrival_tti: self.tti, bits_remaining: bits });
            }
            ue.backlog_bits += count * bits;
            self.arrived += count;
            arrived_bits[ue.slice_id] += count * bits;
        }
    }

    fn refresh_rates(&mut self) {
        for (rate, ue) in self.rates.iter_mut().zip(&self.ues) {
            // at least one bit so a backlogged UE always drains
            *rate = (link_rate(&self.cfg.channel, ue.position, self.base, self.cfg.tti_ms).floor() as u64).max(1);
        }
    }

    /// Round-robin grants. Returns RBGs granted per slice this TTI.
    fn grant(&mut self, plan: &AllocationPlan) -> Vec<usize> {
        let n = self.cfg.num_slices;
        let m_total = self.cfg.num_rbgs;
        for (i, ue) in self.ues.iter().enumerate() {
            self.pending[i] = ue.queued_bits() as i64;
            self.granted[i] = 0;
        }
        let mut per_slice = vec![0usize; n];
        let mut used = 0usize;

        let mut quotas: Vec<usize> = plan.prioritized_rbgs().to_vec();
        match self.cfg.slicing_mode {
            SlicingMode::LimitedSoft => quotas.push(0),
            SlicingMode::Hard => quotas.push(m_total - quotas.iter().sum::<usize>()),
        }

        // pass 1: each slice's own share, round robin among its backlogged UEs
        for (s, &quota) in quotas.iter().enumerate() {
            let members = &self.slice_members[s];
            let mut left = quota;
            while left > 0 {
                let Some(pos) = next_backlogged(members, self.slice_cursor[s], &self.pending) else { break };
                let ue = members[pos];
                self.pending[ue] -= self.rates[ue] as i64;
                self.granted[ue] += self.rates[ue];
                self.slice_cursor[s] = (pos + 1) % members.len();
                per_slice[s] += 1;
                used += 1;
                left -= 1;
            }
        }

        // pass 2: leftovers to everyone still backlogged
        if self.cfg.slicing_mode == SlicingMode::LimitedSoft && !self.ues.is_empty() {
            let all: Vec<usize> = (0..self.ues.len()).collect();
            while used < m_total {
                let Some(pos) = next_backlogged(&all, self.global_cursor, &self.pending) else { break };
                self.pending[pos] -= self.rates[pos] as i64;
                self.granted[pos] += self.rates[pos];
                self.global_cursor = (pos + 1) % all.len();
                per_slice[self.ues[pos].slice_id] += 1;
                used += 1;
            }
        }

        if let Some(audit) = self.audit.as_mut() {
            audit.push(TtiAudit {
                granted: used,
                per_slice: per_slice.clone(),
                backlog_left: self.pending.iter().any(|&p| p > 0),
            });
        }
        per_slice
    }

    fn serve(&mut self, served_bits: &mut [u64]) {
        let tti_ms = self.cfg.tti_ms;
        for (i, ue) in self.ues.iter_mut().enumerate() {
            let mut budget = self.granted[i];
            while budget > 0 {
                let Some(head) = ue.queue.front_mut() else { break };
                let take = budget.min(head.bits_remaining);
                head.bits_remaining -= take;
                ue.backlog_bits -= take;
                budget -= take;
                served_bits[ue.slice_id] += take;
                if head.bits_remaining == 0 {
                    let delay = (self.tti - head.arrival_tti) as f64 * tti_ms;
                    self.histograms[ue.slice_id].record(delay);
                    self.delivered += 1;
                    ue.queue.pop_front();
                }
            }
        }
    }
}

fn heading(ue: &UeState) -> [f64; 2] {
    let (dx, dy) = (ue.waypoint[0] - ue.position[0], ue.waypoint[1] - ue.position[1]);
    let dist = (dx * dx + dy * dy).sqrt();
    if dist > 0.0 {
        [dx / dist * ue.speed, dy / dist * ue.speed]
    } else {
        [0.0, 0.0]
    }
}

/// Position in `members` of the first UE at or after `start` (cyclically)
/// with uncovered backlog.
fn next_backlogged(members: &[usize], start: usize, pending: &[i64]) -> Option<usize> {
    let len = members.len();
    (0..len).map(|k| (start + k) % len).find(|&pos| pending[members[pos]] > 0)
}
