//! Parameter sweeps that run the analysis and the simulator side by side.
//!
//! An [`ExperimentSpec`] is a configuration document plus zero or more sweep
//! axes; its grid is the Cartesian product of the axes, applied in order to
//! the base document. Each grid point yields one analytical trace and one
//! simulated ensemble per scheme, and [`compare`] joins the two.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::analysis;
use crate::error::{Error, Result};
use crate::io::{num, write_atomic, Table};
use crate::params::{self, ParamSet, RawConfig, RawSim, ScalarOrList, SchemeConfig};
use crate::queue::{self, SchemeTrace};
use crate::sim::{self, EnsembleConfig, EnsembleResult, Estimate, BACKLOG_BINS};

/// Absolute floor of the agreement tolerance.
pub const ABS_TOL: f64 = 0.02;
/// Standard errors allowed between analysis and simulation.
pub const Z: f64 = 3.0;
/// Absolute floor for backlog CDF comparisons.
pub const CDF_TOL: f64 = 0.05;

/// Bundled experiment documents, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig3", include_str!("../configs/fig3.toml")),
    ("fig4", include_str!("../configs/fig4.toml")),
    ("fig5", include_str!("../configs/fig5.toml")),
    ("fig6", include_str!("../configs/fig6.toml")),
    ("fig7", include_str!("../configs/fig7.toml")),
    ("fig8", include_str!("../configs/fig8.toml")),
    ("fig9", include_str!("../configs/fig9.toml")),
    ("fig10", include_str!("../configs/fig10.toml")),
];

pub fn bundled_config(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    GammaThDb,
    /// `λ_Dp/λ_B`, applied by setting `λ_Dp` from the current `λ_B`.
    DensityRatio,
    LambdaBPerKm2,
    LambdaDpPerKm2,
    Alpha,
    /// `τ_c + τ_g`, applied by setting `τ_g`.
    SlotDurationMs,
    /// Constant arrival rate in every slot.
    EpsNew,
}

impl SweepVar {
    pub const ALL: [SweepVar; 7] = [
        SweepVar::GammaThDb,
        SweepVar::DensityRatio,
        SweepVar::LambdaBPerKm2,
        SweepVar::LambdaDpPerKm2,
        SweepVar::Alpha,
        SweepVar::SlotDurationMs,
        SweepVar::EpsNew,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::GammaThDb => "gamma_th_db",
            SweepVar::DensityRatio => "density_ratio",
            SweepVar::LambdaBPerKm2 => "lambda_b_per_km2",
            SweepVar::LambdaDpPerKm2 => "lambda_dp_per_km2",
            SweepVar::Alpha => "alpha",
            SweepVar::SlotDurationMs => "slot_duration_ms",
            SweepVar::EpsNew => "eps_new",
        }
    }

    fn apply(self, raw: &mut RawConfig, v: f64) -> Result<()> {
        let n = &mut raw.network;
        match self {
            SweepVar::GammaThDb => n.gamma_th_db = v,
            SweepVar::DensityRatio => {
                n.lambda_dp_per_km2 = Some(v * n.lambda_b_per_km2);
                n.lambda_d_per_km2 = None;
            }
            SweepVar::LambdaBPerKm2 => n.lambda_b_per_km2 = v,
            SweepVar::LambdaDpPerKm2 => {
                n.lambda_dp_per_km2 = Some(v);
                n.lambda_d_per_km2 = None;
            }
            SweepVar::Alpha => n.alpha = v,
            SweepVar::SlotDurationMs => {
                let tau_g = v - raw.traffic.tau_c_ms;
                if tau_g < 0.0 {
                    return Err(Error::invalid(
                        "slot_duration_ms",
                        format!("{v} ms is shorter than tau_c = {} ms", raw.traffic.tau_c_ms),
                    ));
                }
                raw.traffic.tau_g_ms = tau_g;
            }
            SweepVar::EpsNew => {
                let t = &mut raw.traffic;
                let slots = match (&t.eps_new, t.slots) {
                    (_, Some(m)) => m,
                    (ScalarOrList::List(l), None) => l.len(),
                    (ScalarOrList::Scalar(_), None) => 1,
                };
                t.eps_new = ScalarOrList::Scalar(v);
                t.slots = Some(slots);
            }
        }
        Ok(())
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepVar::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let known: Vec<_> = SweepVar::ALL.iter().map(|v| v.name()).collect();
            Error::Config(format!("unknown sweep variable `{s}` (expected one of {})", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    P,
    PDet,
    T,
    R,
    C,
    EQ,
    /// Slot average of `P`.
    MeanP,
    /// Slot average of `C`.
    MeanC,
    /// Carried-over backlog CDFs of slots 2 and 3.
    Cdf,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::P,
        Metric::PDet,
        Metric::T,
        Metric::R,
        Metric::C,
        Metric::EQ,
        Metric::MeanP,
        Metric::MeanC,
        Metric::Cdf,
    ];
    pub const DEFAULT: [Metric; 6] = [Metric::P, Metric::PDet, Metric::T, Metric::R, Metric::C, Metric::EQ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::P => "P",
            Metric::PDet => "P_det",
            Metric::T => "T",
            Metric::R => "R",
            Metric::C => "C",
            Metric::EQ => "EQ",
            Metric::MeanP => "mean_P",
            Metric::MeanC => "mean_C",
            Metric::Cdf => "cdf",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

/// One grid point: a value for every axis, in axis order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub coords: Vec<(SweepVar, f64)>,
}

impl GridPoint {
    pub fn label(&self) -> String {
        if self.coords.is_empty() {
            return "base".to_string();
        }
        self.coords
            .iter()
            .map(|(v, x)| format!("{v}={x}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub caption: String,
    /// Base document; axes are applied on top of it.
    pub base: RawConfig,
    pub axes: Vec<Axis>,
    pub metrics: Vec<Metric>,
    pub sim: RawSim,
}

impl ExperimentSpec {
    /// Validate a document, including every grid point.
    pub fn from_config(raw: RawConfig) -> Result<Self> {
        let axes = raw
            .axes
            .iter()
            .map(|a| {
                if a.values.is_empty() {
                    return Err(Error::Config(format!("axis `{}` has no values", a.var)));
                }
                Ok(Axis {
                    var: a.var.parse()?,
                    values: a.values.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let metrics = if raw.metrics.is_empty() {
            Metric::DEFAULT.to_vec()
        } else {
            raw.metrics.iter().map(|m| m.parse()).collect::<Result<_>>()?
        };
        if raw.sim.realizations < 2 {
            return Err(Error::invalid("sim.realizations", "need at least 2"));
        }
        let spec = ExperimentSpec {
            name: raw.name.clone().unwrap_or_else(|| "custom".to_string()),
            caption: raw.caption.clone().unwrap_or_default(),
            sim: raw.sim.clone(),
            base: raw,
            axes,
            metrics,
        };
        for point in spec.grid() {
            spec.point_params(&point)?;
        }
        Ok(spec)
    }

    /// A bundled document by name, or a document on disk.
    pub fn load(name_or_path: &str, overrides: &[String]) -> Result<Self> {
        let raw = match bundled_config(name_or_path) {
            Some(text) => RawConfig::from_toml_with_overrides(text, overrides)?,
            None => RawConfig::load(Path::new(name_or_path), overrides)?,
        };
        ExperimentSpec::from_config(raw)
    }

    pub fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = vec![GridPoint { coords: Vec::new() }];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut coords = p.coords.clone();
                        coords.push((axis.var, v));
                        GridPoint { coords }
                    })
                })
                .collect();
        }
        points
    }

    /// Document with the point's values substituted.
    pub fn point_config(&self, point: &GridPoint) -> Result<RawConfig> {
        let mut raw = self.base.clone();
        for &(var, v) in &point.coords {
            var.apply(&mut raw, v)?;
        }
        Ok(raw)
    }

    pub fn point_params(&self, point: &GridPoint) -> Result<ParamSet> {
        self.point_config(point)
            .and_then(|raw| params::from_config(&raw))
            .map_err(|e| at_point(e, point))
    }

    pub fn ensemble_config(&self, jobs: Option<usize>) -> EnsembleConfig {
        EnsembleConfig {
            side: self.sim.side_m,
            realizations: self.sim.realizations,
            master_seed: self.sim.seed,
            jobs,
        }
    }

    fn axis_names(&self) -> Vec<String> {
        self.axes.iter().map(|a| a.var.name().to_string()).collect()
    }
}

fn at_point(e: Error, point: &GridPoint) -> Error {
    match e {
        Error::NumericFailure { context, detail } => Error::NumericFailure {
            context: format!("{context} at {}", point.label()),
            detail,
        },
        Error::InvalidParameter { name, reason } => Error::InvalidParameter {
            name,
            reason: format!("{reason} (at {})", point.label()),
        },
        other => other,
    }
}

/// Analytical trace of one scheme at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointAnalysis {
    pub point: GridPoint,
    pub trace: SchemeTrace,
    /// `λ*_B` per km² for each slot's activity; NaN at zero activity.
    pub lambda_b_star: Vec<f64>,
    pub p_detect_closed_form: Vec<f64>,
}

/// Evaluate the analytical model at every grid point and scheme, over the
/// first `slots` slots (all slots when `None`).
pub fn run_analysis(spec: &ExperimentSpec, slots: Option<usize>) -> Result<Vec<PointAnalysis>> {
    let mut out = Vec::new();
    for point in spec.grid() {
        let set = spec.point_params(&point)?;
        let m = slots.unwrap_or(set.traffic.slots()).min(set.traffic.slots());
        for &scheme in &set.schemes {
            let trace = queue::evolve(&set.network, &set.traffic, scheme, m).map_err(|e| at_point(e, &point))?;
            let lambda_b_star = trace
                .slots
                .iter()
                .map(|s| {
                    analysis::optimal_bs_density(&s.activity, &set.network)
                        .map(params::per_m2_to_per_km2)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            let p_detect_closed_form = trace
                .slots
                .iter()
                .map(|s| analysis::preamble_detection_closed_form(&s.activity, &set.network))
                .collect();
            out.push(PointAnalysis {
                point: point.clone(),
                trace,
                lambda_b_star,
                p_detect_closed_form,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSimulation {
    pub point: GridPoint,
    pub result: EnsembleResult,
}

/// Simulate every grid point and scheme. All schemes at a point share the
/// master seed, hence deployments and arrivals.
pub fn run_simulation(spec: &ExperimentSpec, slots: Option<usize>, jobs: Option<usize>) -> Result<Vec<PointSimulation>> {
    let cfg = spec.ensemble_config(jobs);
    let mut out = Vec::new();
    for point in spec.grid() {
        let set = spec.point_params(&point)?;
        let m = slots.unwrap_or(set.traffic.slots()).min(set.traffic.slots());
        for &scheme in &set.schemes {
            let result = sim::run_ensemble(&set.network, &set.traffic, scheme, m, &cfg).map_err(|e| at_point(e, &point))?;
            if result.conservation_violations > 0 {
                return Err(Error::numeric(
                    format!("simulation of {scheme} at {}", point.label()),
                    format!("{} devices violate packet conservation", result.conservation_violations),
                ));
            }
            out.push(PointSimulation { point: point.clone(), result });
        }
    }
    Ok(out)
}

/// One analysis-versus-simulation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub point: GridPoint,
    pub scheme: SchemeConfig,
    /// Slot; `None` for slot-averaged metrics.
    pub m: Option<usize>,
    /// Metric name; backlog CDF rows are `cdf_exact` or `cdf_poisson`.
    pub metric: String,
    /// Backlog level of CDF rows.
    pub y: Option<usize>,
    pub analytical: f64,
    pub simulated: f64,
    pub se: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ComparisonRow {
    #[allow(clippy::too_many_arguments)]
    fn new(
        point: &GridPoint,
        scheme: SchemeConfig,
        m: Option<usize>,
        metric: &str,
        y: Option<usize>,
        analytical: f64,
        sim: Estimate,
        tolerance: f64,
    ) -> Self {
        let pass = (analytical - sim.mean).abs() <= tolerance;
        ComparisonRow {
            point: point.clone(),
            scheme,
            m,
            metric: metric.to_string(),
            y,
            analytical,
            simulated: sim.mean,
            se: sim.se,
            tolerance,
            pass,
        }
    }
}

/// `max(ABS_TOL, Z·se)`; a missing standard error falls back to the floor.
pub fn scalar_tolerance(se: f64) -> f64 {
    if se.is_finite() {
        ABS_TOL.max(Z * se)
    } else {
        ABS_TOL
    }
}

/// `CDF_TOL + Z·se`.
pub fn cdf_tolerance(se: f64) -> f64 {
    CDF_TOL + if se.is_finite() { Z * se } else { 0.0 }
}

/// Exact and Poisson-approximated backlog CDFs of slots 2 and 3, next to
/// the simulated ECDF when one is available.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfRow {
    pub point: GridPoint,
    pub scheme: SchemeConfig,
    pub m: usize,
    pub y: usize,
    pub exact: f64,
    pub poisson: f64,
    pub simulated: Option<Estimate>,
}

/// Backlog levels covered by CDF output: up to where the exact CDF reaches
/// `1 - 1e-6`, within the simulator's histogram.
fn cdf_levels(pmf: &queue::QueuePmf) -> usize {
    let mut y = 0;
    while y < BACKLOG_BINS - 2 && pmf.cdf(y) < 1.0 - 1e-6 {
        y += 1;
    }
    y
}

/// CDF rows for every grid point and scheme whose traffic covers 3 slots.
/// With `sims`, the simulated ECDF of the matching ensemble is attached.
pub fn cdf_rows(spec: &ExperimentSpec, sims: Option<&[PointSimulation]>) -> Result<Vec<CdfRow>> {
    let mut out = Vec::new();
    for point in spec.grid() {
        let set = spec.point_params(&point)?;
        if set.traffic.slots() < 3 {
            continue;
        }
        for &scheme in &set.schemes {
            let ens = match sims {
                Some(s) => {
                    let found = s.iter().find(|ps| ps.point == point && ps.result.scheme == scheme);
                    match found {
                        Some(ps) if ps.result.slots.len() >= 3 => Some(&ps.result),
                        _ => continue,
                    }
                }
                None => None,
            };
            let exact = queue::exact_backlog(&set.network, &set.traffic, scheme).map_err(|e| at_point(e, &point))?;
            let trace = queue::evolve(&set.network, &set.traffic, scheme, 3).map_err(|e| at_point(e, &point))?;
            for (m, pmf) in [(2, &exact.slot2), (3, &exact.slot3)] {
                let mu_cum = trace.slot(m).mu_cum;
                for y in 0..=cdf_levels(pmf) {
                    out.push(CdfRow {
                        point: point.clone(),
                        scheme,
                        m,
                        y,
                        exact: pmf.cdf(y),
                        poisson: queue::poisson_approx_cdf(mu_cum, y),
                        simulated: ens.map(|r| r.slot(m).backlog_cdf[y]),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Join analysis and simulation results on (point, scheme, slot).
pub fn compare(spec: &ExperimentSpec, analyses: &[PointAnalysis], sims: &[PointSimulation]) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for ps in sims {
        let scheme = ps.result.scheme;
        let an = analyses
            .iter()
            .find(|a| a.point == ps.point && a.trace.scheme == scheme)
            .ok_or_else(|| Error::Config(format!("no analysis for {scheme} at {}", ps.point.label())))?;
        let n = an.trace.len().min(ps.result.slots.len());
        for m in 1..=n {
            let a = an.trace.slot(m);
            let s = ps.result.slot(m);
            for (metric, analytical, est) in [
                (Metric::P, a.p_success, s.p_success),
                (Metric::PDet, a.p_detect, s.p_detect),
                (Metric::T, a.non_empty(), s.non_empty),
                (Metric::R, a.non_restrict(), s.non_restrict),
                (Metric::C, a.c_received, s.c_received),
                (Metric::EQ, a.q_len, s.q_len),
            ] {
                if spec.wants(metric) {
                    rows.push(ComparisonRow::new(
                        &ps.point,
                        scheme,
                        Some(m),
                        metric.name(),
                        None,
                        analytical,
                        est,
                        scalar_tolerance(est.se),
                    ));
                }
            }
        }
        let sub = SchemeTrace {
            scheme,
            slots: an.trace.slots[..n].to_vec(),
            history: an.trace.history[..n].to_vec(),
        };
        let (mean_p, mean_c) = queue::trace_means(&sub);
        let sim_slots = &ps.result.slots[..n];
        for (metric, analytical, pick) in [
            (Metric::MeanP, mean_p, (|s: &sim::SlotEstimate| s.p_success) as fn(&sim::SlotEstimate) -> Estimate),
            (Metric::MeanC, mean_c, |s: &sim::SlotEstimate| s.c_received),
        ] {
            if spec.wants(metric) {
                let est = slot_average(sim_slots.iter().map(pick));
                rows.push(ComparisonRow::new(
                    &ps.point,
                    scheme,
                    None,
                    metric.name(),
                    None,
                    analytical,
                    est,
                    scalar_tolerance(est.se),
                ));
            }
        }
    }
    if spec.wants(Metric::Cdf) {
        for c in cdf_rows(spec, Some(sims))? {
            let est = c.simulated.expect("rows built from simulations");
            for (metric, analytical) in [("cdf_exact", c.exact), ("cdf_poisson", c.poisson)] {
                rows.push(ComparisonRow::new(
                    &c.point,
                    c.scheme,
                    Some(c.m),
                    metric,
                    Some(c.y),
                    analytical,
                    est,
                    cdf_tolerance(est.se),
                ));
            }
        }
    }
    Ok(rows)
}

/// Average of per-slot estimates. The standard error is the average of the
/// slot standard errors, the bound under perfect correlation between slots.
fn slot_average(slots: impl Iterator<Item = Estimate>) -> Estimate {
    let (n, mean, se) = slots.fold((0usize, 0.0, 0.0), |(n, m, s), e| (n + 1, m + e.mean, s + e.se));
    Estimate {
        mean: mean / n as f64,
        se: se / n as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    /// `(label, value, se)` in the expected descending order.
    pub entries: Vec<(String, f64, f64)>,
    /// Adjacent pairs `(higher, lower, shortfall)` where the expected-lower
    /// entry exceeds the expected-higher one by more than the allowance.
    pub violations: Vec<(String, String, f64)>,
}

impl OrderingReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that `entries` are non-increasing. Adjacent pairs may be inverted by
/// at most `z·sqrt(se_1² + se_2²)` (plus `1e-12` for rounding); ties pass.
pub fn scheme_ordering_check(entries: &[(String, f64, f64)], z: f64) -> OrderingReport {
    let violations = entries
        .windows(2)
        .filter_map(|w| {
            let (hi, lo) = (&w[0], &w[1]);
            let allowance = z * (hi.2 * hi.2 + lo.2 * lo.2).sqrt() + 1e-12;
            let excess = lo.1 - hi.1;
            (excess > allowance).then(|| (hi.0.clone(), lo.0.clone(), excess))
        })
        .collect();
    OrderingReport {
        entries: entries.to_vec(),
        violations,
    }
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

fn point_cells(point: &GridPoint) -> Vec<String> {
    point.coords.iter().map(|&(_, v)| num(v)).collect()
}

fn header(spec: &ExperimentSpec, rest: &[&str]) -> Vec<String> {
    let mut h = spec.axis_names();
    h.extend(rest.iter().map(|s| s.to_string()));
    h
}

pub fn analysis_table(spec: &ExperimentSpec, analyses: &[PointAnalysis]) -> Table {
    let mut t = Table::new(header(
        spec,
        &[
            "scheme",
            "m",
            "mu_new",
            "mu_cum",
            "T",
            "R",
            "P",
            "P_det",
            "P_det_closed_form",
            "C",
            "EQ",
            "lambda_b_star_per_km2",
        ],
    ));
    for a in analyses {
        for (i, s) in a.trace.slots.iter().enumerate() {
            let mut row = point_cells(&a.point);
            row.extend([
                a.trace.scheme.label(),
                s.m.to_string(),
                num(s.mu_new),
                num(s.mu_cum),
                num(s.non_empty()),
                num(s.non_restrict()),
                num(s.p_success),
                num(s.p_detect),
                num(a.p_detect_closed_form[i]),
                num(s.c_received),
                num(s.q_len),
                num(a.lambda_b_star[i]),
            ]);
            t.push(row);
        }
    }
    t
}

pub fn simulation_table(spec: &ExperimentSpec, sims: &[PointSimulation]) -> Table {
    let mut t = Table::new(header(
        spec,
        &[
            "scheme", "m", "P_hat", "P_hat_se", "Pdet_hat", "Pdet_hat_se", "T_hat", "T_hat_se", "R_hat", "R_hat_se",
            "C_hat", "C_hat_se", "qlen_hat", "qlen_hat_se",
        ],
    ));
    for ps in sims {
        for s in &ps.result.slots {
            let mut row = point_cells(&ps.point);
            row.extend([ps.result.scheme.label(), s.m.to_string()]);
            for e in [s.p_success, s.p_detect, s.non_empty, s.non_restrict, s.c_received, s.q_len] {
                row.extend([num(e.mean), num(e.se)]);
            }
            t.push(row);
        }
    }
    t
}

pub fn comparison_table(spec: &ExperimentSpec, rows: &[ComparisonRow]) -> Table {
    let mut t = Table::new(header(
        spec,
        &["scheme", "m", "metric", "y", "analytical", "simulated", "se", "tolerance", "pass"],
    ));
    let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let mut row = point_cells(&r.point);
        row.extend([
            r.scheme.label(),
            opt(r.m),
            r.metric.clone(),
            opt(r.y),
            num(r.analytical),
            num(r.simulated),
            num(r.se),
            num(r.tolerance),
            r.pass.to_string(),
        ]);
        t.push(row);
    }
    t
}

pub fn cdf_table(spec: &ExperimentSpec, rows: &[CdfRow]) -> Table {
    let mut t = Table::new(header(spec, &["scheme", "m", "y", "exact", "poisson", "simulated", "simulated_se"]));
    for r in rows {
        let mut row = point_cells(&r.point);
        row.extend([
            r.scheme.label(),
            r.m.to_string(),
            r.y.to_string(),
            num(r.exact),
            num(r.poisson),
            r.simulated.map(|e| num(e.mean)).unwrap_or_default(),
            r.simulated.map(|e| num(e.se)).unwrap_or_default(),
        ]);
        t.push(row);
    }
    t
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Analyze,
    Evolve,
    Simulate,
    Compare,
    Pmf,
    OptimalDensity,
}

/// Run record written next to every output set. Holds no timestamps, so it
/// is reproducible like the tables.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: RunKind,
    pub experiment: &'a str,
    pub caption: &'a str,
    pub seed: u64,
    pub grid_points: usize,
    pub files: Vec<String>,
    /// Effective document after overrides.
    pub config: &'a RawConfig,
}

pub fn write_manifest(spec: &ExperimentSpec, command: RunKind, dir: &Path, files: &[String]) -> Result<PathBuf> {
    let manifest = Manifest {
        tool: "rachsim",
        version: env!("CARGO_PKG_VERSION"),
        command,
        experiment: &spec.name,
        caption: &spec.caption,
        seed: spec.sim.seed,
        grid_points: spec.grid().len(),
        files: files.to_vec(),
        config: &spec.base,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ComparisonRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }
}

/// Analyse, simulate and compare; writes `analysis.csv`, `simulation.csv`,
/// `comparison.csv`, `cdf.csv` (when requested) and `manifest.json` into `dir`.
pub fn run_experiment(spec: &ExperimentSpec, slots: Option<usize>, dir: &Path, jobs: Option<usize>) -> Result<ExperimentReport> {
    let analyses = run_analysis(spec, slots)?;
    let sims = run_simulation(spec, slots, jobs)?;
    let rows = compare(spec, &analyses, &sims)?;
    let mut tables = vec![
        ("analysis.csv", analysis_table(spec, &analyses)),
        ("simulation.csv", simulation_table(spec, &sims)),
        ("comparison.csv", comparison_table(spec, &rows)),
    ];
    if spec.wants(Metric::Cdf) {
        tables.push(("cdf.csv", cdf_table(spec, &cdf_rows(spec, Some(&sims))?)));
    }
    let mut files = Vec::new();
    for (name, table) in &tables {
        let path = dir.join(name);
        table.write(&path)?;
        files.push(path);
    }
    let names: Vec<String> = tables.iter().map(|(n, _)| n.to_string()).collect();
    files.push(write_manifest(spec, RunKind::Compare, dir, &names)?);
    Ok(ExperimentReport { rows, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_documents_are_valid() {
        for (name, _) in BUNDLED {
            let spec = ExperimentSpec::load(name, &[]).unwrap();
            assert_eq!(spec.name, *name);
            assert!(!spec.caption.is_empty(), "{name} lacks a caption");
            assert!(!spec.grid().is_empty());
        }
    }

    #[test]
    fn grid_is_cartesian_in_axis_order() {
        let spec = ExperimentSpec::load("fig5", &[]).unwrap();
        let grid = spec.grid();
        let sizes: usize = spec.axes.iter().map(|a| a.values.len()).product();
        assert_eq!(grid.len(), sizes);
        assert_eq!(grid[0].coords.len(), spec.axes.len());
        assert_eq!(grid[1].coords.last().unwrap().1, spec.axes.last().unwrap().values[1]);
    }

    #[test]
    fn sweep_variables_apply() {
        let spec = ExperimentSpec::load("fig4", &[]).unwrap();
        let point = GridPoint {
            coords: vec![
                (SweepVar::LambdaBPerKm2, 20.0),
                (SweepVar::DensityRatio, 3.0),
                (SweepVar::SlotDurationMs, 7.0),
                (SweepVar::EpsNew, 0.2),
            ],
        };
        let set = spec.point_params(&point).unwrap();
        assert!((set.network.density_ratio() - 3.0).abs() < 1e-12);
        assert!((set.network.lambda_b() - 2e-5).abs() < 1e-18);
        assert!((set.traffic.slot_duration() - 7.0).abs() < 1e-12);
        assert!((set.traffic.mu_new(1) - 1.4).abs() < 1e-12);
        assert_eq!(set.traffic.slots(), spec.point_params(&spec.grid()[0]).unwrap().traffic.slots());

        let too_short = GridPoint {
            coords: vec![(SweepVar::SlotDurationMs, 0.5)],
        };
        assert!(spec.point_params(&too_short).unwrap_err().is_validation());
        assert!("tau".parse::<SweepVar>().is_err());
    }

    #[test]
    fn single_point_grid_gives_single_row() {
        let raw = RawConfig::from_toml_with_overrides(bundled_config("fig3").unwrap(), &[]).unwrap();
        let mut raw = raw;
        raw.axes.clear();
        let spec = ExperimentSpec::from_config(raw).unwrap();
        let table = analysis_table(&spec, &run_analysis(&spec, None).unwrap());
        assert_eq!(table.rows.len(), 1);
    }

    #[test]
    fn ordering_check_reports_violations_and_ties() {
        let e = |l: &str, v: f64, s: f64| (l.to_string(), v, s);
        assert!(scheme_ordering_check(&[e("a", 0.5, 0.0), e("b", 0.5, 0.0)], 3.0).holds());
        let r = scheme_ordering_check(&[e("a", 0.5, 0.0), e("b", 0.6, 0.0), e("c", 0.1, 0.0)], 3.0);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].0, "a");
        assert!(scheme_ordering_check(&[e("a", 0.5, 0.01), e("b", 0.52, 0.01)], 3.0).holds());
    }

    #[test]
    fn tolerances() {
        assert_eq!(scalar_tolerance(0.001), ABS_TOL);
        assert!((scalar_tolerance(0.01) - 0.03).abs() < 1e-15);
        assert_eq!(scalar_tolerance(f64::NAN), ABS_TOL);
        assert!((cdf_tolerance(0.01) - 0.08).abs() < 1e-15);
    }
}
