use rachsim_core::analysis::{self, ActivityState};
use rachsim_core::experiments::ExperimentSpec;
use rachsim_core::params::{NetworkConfig, NetworkParams, SchemeConfig, TrafficProfile};
use rachsim_core::sim::{self, EnsembleConfig};

fn params(ratio: f64) -> NetworkParams {
    NetworkParams::new(NetworkConfig {
        lambda_b: 1e-5,
        lambda_d: 1e-5 * ratio,
        xi: 1,
        rho: 1e-12,
        sigma2: 1e-12,
        alpha: 4.0,
        gamma_th: 0.1,
        c_const: 3.575,
    })
    .unwrap()
}

#[test]
fn cell_occupancy_matches_random_bs_law() {
    let p = params(10.0);
    let act = ActivityState::saturated(&p);
    let mut hist = vec![0u64; 200];
    let mut cells = 0u64;
    for seed in 0..100 {
        let dep = sim::sample_deployment(&p, 5000.0, seed).unwrap();
        for c in &dep.cells {
            hist[c.len().min(199)] += 1;
            cells += 1;
        }
    }
    let tv: f64 = 0.5
        * hist
            .iter()
            .enumerate()
            .map(|(n, &k)| (k as f64 / cells as f64 - analysis::cell_pmf_random_bs(n, &act, &p)).abs())
            .sum::<f64>();
    assert!(tv <= 0.03, "total variation {tv}");
}

#[test]
fn doubling_realizations_halves_variance() {
    let p = params(10.0);
    let traffic = TrafficProfile::constant(1.0, 0.0, 0.3, 1).unwrap();
    let se = |n| {
        let cfg = EnsembleConfig {
            side: 3000.0,
            realizations: n,
            master_seed: 3,
            jobs: None,
        };
        sim::run_ensemble(&p, &traffic, SchemeConfig::Baseline, 1, &cfg).unwrap().slot(1).p_success.se
    };
    let ratio = (se(80) / se(40)).powi(2);
    assert!((0.3..0.8).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn detection_dominates_success_and_baseline_declines() {
    let spec = ExperimentSpec::load("fig7", &["axis=[]".into(), "network.gamma_th_db=-10".into()]).unwrap();
    let set = spec.point_params(&spec.grid()[0]).unwrap();
    let cfg = spec.ensemble_config(None);
    let ens = sim::run_ensemble(&set.network, &set.traffic, SchemeConfig::Baseline, 6, &cfg).unwrap();
    for s in &ens.slots {
        let slack = 3.0 * (s.p_detect.se.powi(2) + s.p_success.se.powi(2)).sqrt();
        assert!(s.p_detect.mean + slack >= s.p_success.mean, "slot {}", s.m);
    }
    for w in ens.slots.windows(2) {
        let slack = 3.0 * (w[0].p_success.se.powi(2) + w[1].p_success.se.powi(2)).sqrt();
        assert!(w[1].p_success.mean <= w[0].p_success.mean + slack, "slot {}", w[1].m);
    }
}

#[test]
fn slot_one_matches_analysis() {
    let p = params(10.0);
    let traffic = TrafficProfile::constant(1.0, 0.0, 0.1, 1).unwrap();
    let cfg = EnsembleConfig {
        side: 5000.0,
        realizations: 20,
        master_seed: 11,
        jobs: None,
    };
    let e = sim::run_ensemble(&p, &traffic, SchemeConfig::Baseline, 1, &cfg).unwrap().slot(1).p_success;
    let act = ActivityState::new(1.0 - (-0.1f64).exp(), 1.0, &p).unwrap();
    let exact = analysis::preamble_success(&act, &p);
    assert!((e.mean - exact).abs() <= 3.0 * e.se.max(0.02 / 3.0), "{} vs {exact}", e.mean);
}
