use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, run_realization, sample_deployment, RealizationOutcome, SlotTally, BACKLOG_BINS};
use crate::error::{Error, Result};
use crate::params::{NetworkParams, SchemeConfig, TrafficProfile};

/// Simulation budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Torus side, m.
    pub side: f64,
    pub realizations: usize,
    pub master_seed: u64,
    /// Worker cap; `None` uses the global pool.
    pub jobs: Option<usize>,
}

/// Pooled ratio estimate with its standard error across realisations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// Ratio estimator `Σ num / Σ den` with the linearised standard error
    /// `sqrt(Σ (num_i - r den_i)² / (n (n-1))) / mean(den)`.
    pub fn ratio(pairs: &[(f64, f64)]) -> Estimate {
        let n = pairs.len() as f64;
        let (num, den) = pairs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
        if den <= 0.0 {
            return Estimate { mean: f64::NAN, se: f64::NAN };
        }
        let r = num / den;
        let se = if pairs.len() < 2 {
            f64::NAN
        } else {
            let ss: f64 = pairs.iter().map(|&(x, y)| (x - r * y).powi(2)).sum();
            (ss / (n * (n - 1.0))).sqrt() / (den / n)
        };
        Estimate { mean: r, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotEstimate {
    pub m: usize,
    /// Successes over attempts.
    pub p_success: Estimate,
    /// Mean success fraction at a BS with an eligible device.
    pub p_detect: Estimate,
    /// Non-empty fraction of devices after arrivals.
    pub non_empty: Estimate,
    /// Eligible over non-empty.
    pub non_restrict: Estimate,
    /// Successes per BS.
    pub c_received: Estimate,
    /// End-of-slot buffered packets per device.
    pub q_len: Estimate,
    /// `backlog_cdf[y]`: fraction of devices carrying at most `y` packets into the slot.
    pub backlog_cdf: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub scheme: SchemeConfig,
    pub realizations: usize,
    pub slots: Vec<SlotEstimate>,
    /// Devices, summed over realisations, whose final buffer differs from
    /// arrivals minus departures.
    pub conservation_violations: usize,
}

impl EnsembleResult {
    pub fn slot(&self, m: usize) -> &SlotEstimate {
        &self.slots[m - 1]
    }
}

/// Simulate `cfg.realizations` independent deployments of `m_slots` slots.
///
/// Realisation `i` uses seed `derive_seed(master_seed, i)` for both its
/// deployment and its dynamics, so different schemes run with the same
/// seed share deployments and arrivals. Output is independent of `jobs`.
pub fn run_ensemble(
    params: &NetworkParams,
    traffic: &TrafficProfile,
    scheme: SchemeConfig,
    m_slots: usize,
    cfg: &EnsembleConfig,
) -> Result<EnsembleResult> {
    if cfg.realizations < 2 {
        return Err(Error::invalid("realizations", format!("need at least 2, got {}", cfg.realizations)));
    }
    if m_slots == 0 || m_slots > traffic.slots() {
        return Err(Error::invalid(
            "M",
            format!("{m_slots} slots requested but the traffic profile covers {}", traffic.slots()),
        ));
    }
    let one = |i: usize| -> Result<RealizationOutcome> {
        let seed = derive_seed(cfg.master_seed, i as u64);
        let dep = sample_deployment(params, cfg.side, seed)?;
        Ok(run_realization(&dep, params, traffic, scheme, m_slots, seed))
    };
    let outcomes: Vec<RealizationOutcome> = match cfg.jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| (0..cfg.realizations).into_par_iter().map(one).collect::<Result<_>>())?
        }
        None => (0..cfg.realizations).into_par_iter().map(one).collect::<Result<_>>()?,
    };

    let conservation_violations = outcomes.iter().map(RealizationOutcome::conservation_violations).sum();
    let slots = (0..m_slots)
        .map(|s| {
            let tallies: Vec<&SlotTally> = outcomes.iter().map(|o| &o.tallies[s]).collect();
            aggregate(s + 1, &tallies)
        })
        .collect();
    Ok(EnsembleResult {
        scheme,
        realizations: cfg.realizations,
        slots,
        conservation_violations,
    })
}

fn aggregate(m: usize, tallies: &[&SlotTally]) -> SlotEstimate {
    let est = |f: &dyn Fn(&SlotTally) -> (f64, f64)| -> Estimate {
        let pairs: Vec<(f64, f64)> = tallies.iter().map(|t| f(t)).collect();
        Estimate::ratio(&pairs)
    };
    let backlog_cdf = (0..BACKLOG_BINS)
        .map(|y| {
            est(&|t: &SlotTally| {
                let below: u64 = t.backlog_hist[..=y].iter().sum();
                (below as f64, t.n_devices as f64)
            })
        })
        .collect();
    SlotEstimate {
        m,
        p_success: est(&|t| (t.n_success as f64, t.n_attempts as f64)),
        p_detect: est(&|t| (t.detect_numerator, t.detect_denominator as f64)),
        non_empty: est(&|t| (t.n_nonempty as f64, t.n_devices as f64)),
        non_restrict: est(&|t| (t.n_eligible as f64, t.n_nonempty as f64)),
        c_received: est(&|t| (t.n_success as f64, t.n_bs as f64)),
        q_len: est(&|t| (t.sum_queue_len as f64, t.n_devices as f64)),
        backlog_cdf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{NetworkConfig, DEFAULT_CELL_CONSTANT};

    fn params() -> NetworkParams {
        NetworkParams::new(NetworkConfig {
            lambda_b: 1e-5,
            lambda_d: 1e-4,
            xi: 1,
            rho: 1e-12,
            sigma2: 1e-12,
            alpha: 4.0,
            gamma_th: 0.1,
            c_const: DEFAULT_CELL_CONSTANT,
        })
        .unwrap()
    }

    #[test]
    fn ratio_estimate() {
        let e = Estimate::ratio(&[(1.0, 2.0), (3.0, 6.0)]);
        assert_eq!(e.mean, 0.5);
        assert_eq!(e.se, 0.0);
        assert!(Estimate::ratio(&[(0.0, 0.0), (0.0, 0.0)]).mean.is_nan());
    }

    #[test]
    fn deterministic_across_jobs() {
        let p = params();
        let traffic = TrafficProfile::constant(1.0, 4.0, 0.1, 3).unwrap();
        let cfg = |jobs| EnsembleConfig {
            side: 2000.0,
            realizations: 6,
            master_seed: 42,
            jobs,
        };
        let a = run_ensemble(&p, &traffic, SchemeConfig::Baseline, 3, &cfg(Some(1))).unwrap();
        let b = run_ensemble(&p, &traffic, SchemeConfig::Baseline, 3, &cfg(Some(4))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.conservation_violations, 0);
    }

    #[test]
    fn rejects_single_realization() {
        let p = params();
        let traffic = TrafficProfile::constant(1.0, 0.0, 0.1, 1).unwrap();
        let cfg = EnsembleConfig {
            side: 2000.0,
            realizations: 1,
            master_seed: 1,
            jobs: None,
        };
        assert!(run_ensemble(&p, &traffic, SchemeConfig::Baseline, 1, &cfg).is_err());
    }
}
