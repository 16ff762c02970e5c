use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::Serialize;

use super::{stream_rng, Deployment, Stream};
use crate::params::{NetworkParams, SchemeConfig, TrafficProfile};

/// Bins of the carried-over backlog histogram; the last bin collects
/// everything at or above it.
pub const BACKLOG_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DeviceState {
    /// Buffered packets.
    pub queue_len: u32,
    /// Slots the device must still skip.
    pub backoff_timer: u32,
    pub served_bs: usize,
}

/// Counts of one slot of one realisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotTally {
    pub m: usize,
    pub n_devices: u64,
    pub n_bs: u64,
    pub n_nonempty: u64,
    /// Non-empty and let through by the scheme.
    pub n_eligible: u64,
    pub n_attempts: u64,
    pub n_success: u64,
    /// End-of-slot buffered packets summed over devices.
    pub sum_queue_len: u64,
    /// Sum over BSs with an eligible device of their success fraction.
    pub detect_numerator: f64,
    /// BSs with at least one eligible device.
    pub detect_denominator: u64,
    /// Devices by backlog carried into the slot, before new arrivals.
    pub backlog_hist: Vec<u64>,
}

impl SlotTally {
    fn new(m: usize, n_devices: usize, n_bs: usize) -> Self {
        SlotTally {
            m,
            n_devices: n_devices as u64,
            n_bs: n_bs as u64,
            n_nonempty: 0,
            n_eligible: 0,
            n_attempts: 0,
            n_success: 0,
            sum_queue_len: 0,
            detect_numerator: 0.0,
            detect_denominator: 0,
            backlog_hist: vec![0; BACKLOG_BINS],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationOutcome {
    pub tallies: Vec<SlotTally>,
    /// Packets that arrived at each device.
    pub arrivals: Vec<u64>,
    /// Packets each device delivered.
    pub departures: Vec<u64>,
    pub devices: Vec<DeviceState>,
}

impl RealizationOutcome {
    /// Devices whose buffer does not equal arrivals minus departures.
    pub fn conservation_violations(&self) -> usize {
        self.devices
            .iter()
            .zip(self.arrivals.iter().zip(&self.departures))
            .filter(|(d, (&a, &s))| a.checked_sub(s) != Some(d.queue_len as u64))
            .count()
    }
}

/// Run slots `1..=m_slots` on a fixed deployment.
///
/// Per slot: Poisson arrivals, scheme gating, SINR test at the serving BS
/// with fresh Rayleigh fading, one-packet departure on success. Under
/// back-off a failed device skips the next `t_bo` slots; the timer counts
/// down only in slots the device sits out.
///
/// # Panics
///
/// If `m_slots` exceeds the traffic profile.
pub fn run_realization(
    dep: &Deployment,
    params: &NetworkParams,
    traffic: &TrafficProfile,
    scheme: SchemeConfig,
    m_slots: usize,
    seed: u64,
) -> RealizationOutcome {
    assert!(m_slots <= traffic.slots(), "traffic profile shorter than {m_slots} slots");
    let n_dev = dep.n_devices();
    let n_bs = dep.n_bs();
    let mut arrivals_rng = stream_rng(seed, Stream::Arrivals);
    let mut fading_rng = stream_rng(seed, Stream::Fading);
    let mut barring_rng = stream_rng(seed, Stream::Barring);

    let mut devices: Vec<DeviceState> = dep
        .assoc
        .iter()
        .map(|&b| DeviceState {
            served_bs: b,
            ..Default::default()
        })
        .collect();
    let mut arrivals = vec![0u64; n_dev];
    let mut departures = vec![0u64; n_dev];
    let mut tallies = Vec::with_capacity(m_slots);

    let alpha = params.alpha();
    let half_alpha = 0.5 * alpha;
    let noise = params.sigma2() / params.rho();
    let gamma = params.gamma_th();

    let mut eligible: Vec<usize> = Vec::with_capacity(n_dev);
    let mut cell_eligible: Vec<Vec<usize>> = vec![Vec::new(); n_bs];
    let mut fade = vec![0.0f64; n_dev];

    for m in 1..=m_slots {
        let mut tally = SlotTally::new(m, n_dev, n_bs);
        for d in &devices {
            tally.backlog_hist[(d.queue_len as usize).min(BACKLOG_BINS - 1)] += 1;
        }

        let mu = traffic.mu_new(m);
        if mu > 0.0 {
            let law = Poisson::new(mu).expect("positive mean");
            for (d, a) in devices.iter_mut().zip(arrivals.iter_mut()) {
                let k = law.sample(&mut arrivals_rng) as u64;
                d.queue_len += k as u32;
                *a += k;
            }
        }

        eligible.clear();
        for cell in cell_eligible.iter_mut() {
            cell.clear();
        }
        for (i, d) in devices.iter_mut().enumerate() {
            if d.queue_len == 0 {
                continue;
            }
            tally.n_nonempty += 1;
            let allowed = match scheme {
                SchemeConfig::Baseline => true,
                SchemeConfig::Acb { p_acb } => p_acb >= 1.0 || barring_rng.gen::<f64>() <= p_acb,
                SchemeConfig::Backoff { .. } => {
                    if d.backoff_timer > 0 {
                        d.backoff_timer -= 1;
                        false
                    } else {
                        true
                    }
                }
            };
            if allowed {
                eligible.push(i);
                cell_eligible[d.served_bs].push(i);
            }
        }
        tally.n_eligible = eligible.len() as u64;
        tally.n_attempts = eligible.len() as u64;

        for &i in &eligible {
            fade[i] = Exp1.sample(&mut fading_rng);
        }

        for (b, members) in cell_eligible.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let bs = dep.bs_positions[b];
            let mut inter = 0.0;
            for &k in &eligible {
                if devices[k].served_bs == b {
                    continue;
                }
                let ratio = dep.serving_distance_sq[k] / super::torus_distance_sq(dep.device_positions[k], bs, dep.side);
                let gain = if alpha == 4.0 { ratio * ratio } else { ratio.powf(half_alpha) };
                inter += fade[k] * gain;
            }
            let own: f64 = members.iter().map(|&i| fade[i]).sum();
            let mut cell_success = 0u64;
            for &i in members {
                let sinr = fade[i] / (own - fade[i] + inter + noise);
                if sinr >= gamma {
                    cell_success += 1;
                    devices[i].queue_len -= 1;
                    departures[i] += 1;
                } else if let SchemeConfig::Backoff { t_bo, .. } = scheme {
                    devices[i].backoff_timer = t_bo;
                }
            }
            tally.n_success += cell_success;
            tally.detect_numerator += cell_success as f64 / members.len() as f64;
            tally.detect_denominator += 1;
        }

        tally.sum_queue_len = devices.iter().map(|d| d.queue_len as u64).sum();
        tallies.push(tally);
    }

    RealizationOutcome {
        tallies,
        arrivals,
        departures,
        devices,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Point;
    use crate::params::{NetworkConfig, DEFAULT_CELL_CONSTANT};

    fn params(gamma_th: f64, sigma2: f64) -> NetworkParams {
        NetworkParams::new(NetworkConfig {
            lambda_b: 1e-5,
            lambda_d: 1e-4,
            xi: 1,
            rho: 1e-12,
            sigma2,
            alpha: 4.0,
            gamma_th,
            c_const: DEFAULT_CELL_CONSTANT,
        })
        .unwrap()
    }

    #[test]
    fn no_devices_gives_zero_tallies() {
        let dep = Deployment::from_positions(100.0, vec![[50.0, 50.0]], vec![]).unwrap();
        let traffic = TrafficProfile::constant(1.0, 0.0, 1.0, 3).unwrap();
        let out = run_realization(&dep, &params(0.1, 1e-12), &traffic, SchemeConfig::Baseline, 3, 1);
        for t in &out.tallies {
            assert_eq!((t.n_nonempty, t.n_success, t.sum_queue_len, t.detect_denominator), (0, 0, 0, 0));
        }
    }

    #[test]
    fn lone_device_matches_exponential_tail() {
        // Saturated single device: success iff h ≥ γσ²/ρ = 0.1.
        let dep = Deployment::from_positions(100.0, vec![[50.0, 50.0]], vec![[10.0, 20.0]]).unwrap();
        let slots = 20_000;
        let traffic = TrafficProfile::constant(1.0, 0.0, 5.0, slots).unwrap();
        let out = run_realization(&dep, &params(0.1, 1e-12), &traffic, SchemeConfig::Baseline, slots, 3);
        let (att, succ) = out
            .tallies
            .iter()
            .fold((0, 0), |(a, s), t| (a + t.n_attempts, s + t.n_success));
        let p = succ as f64 / att as f64;
        let exact = (-0.1f64).exp();
        let se = (exact * (1.0 - exact) / att as f64).sqrt();
        assert!((p - exact).abs() < 4.0 * se, "{p} vs {exact}");
        assert_eq!(out.conservation_violations(), 0);
    }

    #[test]
    fn crowded_cell_matches_product_form() {
        // k saturated devices sharing one BS: P = e^{-γσ²/ρ} / (1+γ)^{k-1}.
        let k = 5;
        let devices: Vec<Point> = (0..k).map(|i| [10.0 + i as f64, 20.0]).collect();
        let dep = Deployment::from_positions(100.0, vec![[50.0, 50.0]], devices).unwrap();
        let slots = 8000;
        let traffic = TrafficProfile::constant(1.0, 0.0, 5.0, slots).unwrap();
        let out = run_realization(&dep, &params(0.1, 1e-12), &traffic, SchemeConfig::Baseline, slots, 8);
        let (att, succ) = out
            .tallies
            .iter()
            .fold((0, 0), |(a, s), t| (a + t.n_attempts, s + t.n_success));
        let p = succ as f64 / att as f64;
        let exact = (-0.1f64).exp() / 1.1f64.powi(k - 1);
        // Successes within a slot are correlated; 5 se of the per-slot mean is generous.
        let se = (exact * (1.0 - exact) / slots as f64).sqrt();
        assert!((p - exact).abs() < 5.0 * se, "{p} vs {exact}");
    }

    #[test]
    fn backoff_defers_exactly_t_bo_slots() {
        // Impossible threshold: every attempt fails.
        let dep = Deployment::from_positions(100.0, vec![[50.0, 50.0]], vec![[10.0, 20.0]]).unwrap();
        let traffic = TrafficProfile::constant(1.0, 0.0, 50.0, 9).unwrap();
        let scheme = SchemeConfig::backoff(2).unwrap();
        let out = run_realization(&dep, &params(1e12, 1e-12), &traffic, scheme, 9, 5);
        let attempts: Vec<u64> = out.tallies.iter().map(|t| t.n_attempts).collect();
        assert_eq!(attempts, vec![1, 0, 0, 1, 0, 0, 1, 0, 0]);
        assert!(out.devices[0].backoff_timer <= 2);
    }

    #[test]
    fn acb_at_one_equals_baseline() {
        let p = params(0.1, 1e-12);
        let dep = super::super::sample_deployment(&p, 2000.0, 11).unwrap();
        let traffic = TrafficProfile::constant(1.0, 4.0, 0.05, 4).unwrap();
        let base = run_realization(&dep, &p, &traffic, SchemeConfig::Baseline, 4, 9);
        let acb = run_realization(&dep, &p, &traffic, SchemeConfig::acb(1.0).unwrap(), 4, 9);
        assert_eq!(base, acb);
    }

    #[test]
    fn conservation_and_counts() {
        let p = params(0.1, 1e-12);
        let dep = super::super::sample_deployment(&p, 2000.0, 2).unwrap();
        let traffic = TrafficProfile::constant(1.0, 4.0, 0.2, 6).unwrap();
        for scheme in [SchemeConfig::Baseline, SchemeConfig::acb(0.4).unwrap(), SchemeConfig::backoff(1).unwrap()] {
            let out = run_realization(&dep, &p, &traffic, scheme, 6, 4);
            assert_eq!(out.conservation_violations(), 0);
            for t in &out.tallies {
                assert!(t.n_success <= t.n_attempts && t.n_eligible <= t.n_nonempty);
                assert_eq!(t.backlog_hist.iter().sum::<u64>(), t.n_devices);
            }
        }
    }
}
