//! Queue evolution across slots.
//!
//! Each slot's activity depends on the buffers left behind by earlier slots,
//! and each slot's success probability depends on that activity. The
//! accumulated backlog is approximated as Poisson with intensity
//! `μ_Cum^m`, which makes the recursion a scalar one; exact backlog PMFs for
//! slots 2 and 3 are kept as a check on that approximation.

use serde::Serialize;
use tracing::warn;

use crate::analysis::{self, ActivityState, SlotAnalysis};
use crate::error::{Error, Result};
use crate::params::{BackoffReading, NetworkParams, SchemeConfig, TrafficProfile};
use crate::special;

/// Per-slot analytical trajectory of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeTrace {
    pub scheme: SchemeConfig,
    pub slots: Vec<SlotAnalysis>,
    /// `(1 - P^j) T^j R^j` for every evaluated slot `j`: the mass of devices
    /// that attempted and failed.
    pub history: Vec<f64>,
}

impl SchemeTrace {
    pub fn slot(&self, m: usize) -> &SlotAnalysis {
        &self.slots[m - 1]
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Evolve the analytical state of `scheme` over slots `1..=m_slots`.
pub fn evolve(
    params: &NetworkParams,
    traffic: &TrafficProfile,
    scheme: SchemeConfig,
    m_slots: usize,
) -> Result<SchemeTrace> {
    if m_slots == 0 {
        return Err(Error::invalid("M", "need at least one slot"));
    }
    if m_slots > traffic.slots() {
        return Err(Error::invalid(
            "M",
            format!("{m_slots} slots requested but the traffic profile covers {}", traffic.slots()),
        ));
    }
    let mut slots: Vec<SlotAnalysis> = Vec::with_capacity(m_slots);
    let mut history = Vec::with_capacity(m_slots);
    for m in 1..=m_slots {
        let mu_cum = match slots.last() {
            None => 0.0,
            Some(prev) => next_mu_cum(prev),
        };
        let mu_new = traffic.mu_new(m);
        let non_empty = -(-(mu_new + mu_cum)).exp_m1();
        let non_restrict = nonrestrict(&scheme, m, &history, non_empty);
        let activity = ActivityState::new(non_empty, non_restrict, params)?;
        let p_success = analysis::preamble_success(&activity, params);
        let mut slot = SlotAnalysis {
            m,
            mu_new,
            mu_cum,
            activity,
            p_success,
            p_detect: analysis::preamble_detection(&activity, params),
            c_received: activity.load * p_success,
            q_len: 0.0,
        };
        slot.q_len = avg_queue_length(&slot);
        history.push((1.0 - p_success) * non_empty * non_restrict);
        slots.push(slot);
    }
    Ok(SchemeTrace {
        scheme,
        slots,
        history,
    })
}

/// `μ_Cum^{m+1} = μ_New^m + μ_Cum^m - R^m P^m (1 - e^{-μ_New^m - μ_Cum^m})`.
fn next_mu_cum(prev: &SlotAnalysis) -> f64 {
    let departures = prev.non_restrict() * prev.p_success * prev.non_empty();
    let mu = prev.mu_new + prev.mu_cum - departures;
    if mu < 0.0 {
        warn!(slot = prev.m + 1, mu_cum = mu, "negative accumulated intensity clamped to 0");
        0.0
    } else {
        mu
    }
}

/// Non-restrict probability `R^m`, clamped to `[0, 1]`.
///
/// `history[j-1]` must hold `(1 - P^j) T^j R^j` for `j < m`; `non_empty` is
/// `T^m`.
pub fn nonrestrict(scheme: &SchemeConfig, m: usize, history: &[f64], non_empty: f64) -> f64 {
    let raw = nonrestrict_unclamped(scheme, m, history, non_empty);
    if !(0.0..=1.0).contains(&raw) {
        warn!(%scheme, slot = m, value = raw, "non-restrict probability left [0, 1]; clamped");
    }
    raw.clamp(0.0, 1.0)
}

pub fn nonrestrict_unclamped(scheme: &SchemeConfig, m: usize, history: &[f64], non_empty: f64) -> f64 {
    match *scheme {
        SchemeConfig::Baseline => 1.0,
        SchemeConfig::Acb { p_acb } => p_acb,
        SchemeConfig::Backoff { t_bo, reading } => {
            if m == 1 {
                return 1.0;
            }
            let first = m.saturating_sub(t_bo as usize).max(1);
            let deferred: f64 = history[first - 1..m - 1].iter().sum();
            match reading {
                BackoffReading::Multiplied => 1.0 - deferred * non_empty,
                BackoffReading::Conditional if non_empty > 0.0 => 1.0 - deferred / non_empty,
                BackoffReading::Conditional => 1.0,
            }
        }
    }
}

/// `E[Q^m] = μ_New^m + μ_Cum^m - R^m T^m P^m`.
pub fn avg_queue_length(slot: &SlotAnalysis) -> f64 {
    slot.mu_new + slot.mu_cum - slot.non_restrict() * slot.non_empty() * slot.p_success
}

/// Arithmetic means of `P^m` and `C^m` over the trace.
pub fn trace_means(trace: &SchemeTrace) -> (f64, f64) {
    let n = trace.slots.len() as f64;
    let p = trace.slots.iter().map(|s| s.p_success).sum::<f64>() / n;
    let c = trace.slots.iter().map(|s| s.c_received).sum::<f64>() / n;
    (p, c)
}

/// PMF of the accumulated backlog `N_Cum` at the start of a slot, on the
/// support `0..mass.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueuePmf {
    pub slot: usize,
    pub mass: Vec<f64>,
}

impl QueuePmf {
    /// Empty buffers (slot 1).
    pub fn empty_buffers() -> Self {
        QueuePmf {
            slot: 1,
            mass: vec![1.0],
        }
    }

    pub fn pmf(&self, x: usize) -> f64 {
        self.mass.get(x).copied().unwrap_or(0.0)
    }

    pub fn cdf(&self, y: usize) -> f64 {
        let end = (y + 1).min(self.mass.len());
        self.mass[..end].iter().sum::<f64>().min(1.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(x, p)| x as f64 * p).sum()
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }
}

/// Exact backlog PMF at slot 2 from the two-branch expression:
/// `f(0) = e^{-μ} + μ e^{-μ} RP`, `f(x) = Pois(x)(1 - RP) + Pois(x+1) RP`.
pub fn exact_pmf_slot2(mu_new1: f64, r1: f64, p1: f64) -> QueuePmf {
    let rp = r1 * p1;
    let mut pois = special::poisson_masses(mu_new1);
    pois.push(0.0);
    let n = pois.len() - 1;
    let mut mass = Vec::with_capacity(n);
    mass.push(pois[0] + pois[1] * rp);
    for x in 1..n {
        mass.push(pois[x] * (1.0 - rp) + pois[x + 1] * rp);
    }
    QueuePmf { slot: 2, mass }
}

/// Exact slot-2 CDF, `Pois(y+1) RP + Σ_{x≤y} Pois(x)`.
pub fn exact_cdf_slot2(mu_new1: f64, r1: f64, p1: f64, y: usize) -> f64 {
    let head: f64 = (0..=y).map(|x| special::poisson_pmf(mu_new1, x)).sum();
    (special::poisson_pmf(mu_new1, y + 1) * r1 * p1 + head).min(1.0)
}

/// Exact slot-3 PMF: Poisson arrivals convolved with the slot-2 backlog,
/// with one departure with probability `R²P²` when the buffer is non-empty.
pub fn exact_pmf_slot3(slot2: &QueuePmf, mu_new2: f64, r2: f64, p2: f64) -> QueuePmf {
    exact_pmf_next(slot2, mu_new2, r2 * p2)
}

/// One exact step of the backlog chain: add `Poisson(mu_new)` arrivals, then
/// remove one packet with probability `rp` if any are queued.
pub fn exact_pmf_next(prev: &QueuePmf, mu_new: f64, rp: f64) -> QueuePmf {
    let pois = special::poisson_masses(mu_new);
    let mut total = vec![0.0; prev.mass.len() + pois.len()];
    for (i, &a) in prev.mass.iter().enumerate() {
        for (j, &b) in pois.iter().enumerate() {
            total[i + j] += a * b;
        }
    }
    let n = total.len() - 1;
    let mut mass = Vec::with_capacity(n);
    mass.push(total[0] + total[1] * rp);
    for x in 1..n {
        mass.push(total[x] * (1.0 - rp) + total[x + 1] * rp);
    }
    QueuePmf {
        slot: prev.slot + 1,
        mass,
    }
}

/// Poisson approximation of the backlog CDF, `P{Pois(μ_Cum) ≤ y}`.
pub fn poisson_approx_cdf(mu_cum: f64, y: usize) -> f64 {
    special::poisson_cdf(mu_cum, y)
}

/// Exact slot-2 and slot-3 backlog PMFs, each slot's success probability
/// evaluated at the exact non-empty probability `1 - e^{-μ_New} f(0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactBacklog {
    pub slot2: QueuePmf,
    pub slot3: QueuePmf,
    /// `(T, R, P)` used for slots 1 and 2.
    pub drivers: [(f64, f64, f64); 2],
}

pub fn exact_backlog(params: &NetworkParams, traffic: &TrafficProfile, scheme: SchemeConfig) -> Result<ExactBacklog> {
    if traffic.slots() < 3 {
        return Err(Error::invalid("M", "exact backlog needs a traffic profile of at least 3 slots"));
    }
    let mu1 = traffic.mu_new(1);
    let t1 = -(-mu1).exp_m1();
    let r1 = nonrestrict(&scheme, 1, &[], t1);
    let p1 = analysis::preamble_success(&ActivityState::new(t1, r1, params)?, params);
    let slot2 = exact_pmf_slot2(mu1, r1, p1);

    let mu2 = traffic.mu_new(2);
    let t2 = 1.0 - (-mu2).exp() * slot2.pmf(0);
    let r2 = nonrestrict(&scheme, 2, &[(1.0 - p1) * t1 * r1], t2);
    let p2 = analysis::preamble_success(&ActivityState::new(t2, r2, params)?, params);
    let slot3 = exact_pmf_slot3(&slot2, mu2, r2, p2);
    Ok(ExactBacklog {
        slot2,
        slot3,
        drivers: [(t1, r1, p1), (t2, r2, p2)],
    })
}
