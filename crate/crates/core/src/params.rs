//! Parameter parsing, unit conversion and validation.
//!
//! Configuration files use the units network engineers quote (BS/km², dBm,
//! dB, ms). Everything downstream of [`from_config`] sees SI-linear values:
//! densities per m², powers in mW, ratios as plain numbers.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Default constant of the gamma approximation to the PPP Voronoi cell size.
pub const DEFAULT_CELL_CONSTANT: f64 = 3.575;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn per_km2_to_per_m2(d: f64) -> f64 {
    d * 1e-6
}

pub fn per_m2_to_per_km2(d: f64) -> f64 {
    d * 1e6
}

/// Unvalidated network parameters in linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// BS density, per m².
    pub lambda_b: f64,
    /// Total device density, per m².
    pub lambda_d: f64,
    /// Size of the contention preamble pool.
    pub xi: u32,
    /// Received-power target of the channel-inversion power control, mW.
    pub rho: f64,
    /// Noise power, mW.
    pub sigma2: f64,
    pub alpha: f64,
    /// SINR threshold as a linear ratio.
    pub gamma_th: f64,
    pub c_const: f64,
}

/// Validated network parameters.
///
/// Construction evaluates the interference integral once, so every analytical
/// function that takes a `&NetworkParams` is infallible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkParams {
    #[serde(flatten)]
    config: NetworkConfig,
    lambda_dp: f64,
    interference_integral: f64,
}

impl NetworkParams {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let c = &config;
        if !(c.lambda_b.is_finite() && c.lambda_b > 0.0) {
            return Err(Error::invalid("lambda_b", format!("must be a positive density, got {}", c.lambda_b)));
        }
        if !(c.lambda_d.is_finite() && c.lambda_d > 0.0) {
            return Err(Error::invalid("lambda_d", format!("must be a positive density, got {}", c.lambda_d)));
        }
        if c.xi == 0 {
            return Err(Error::invalid("xi", "preamble pool must hold at least one preamble"));
        }
        if !(c.alpha.is_finite() && c.alpha > 2.0) {
            return Err(Error::invalid(
                "alpha",
                format!("path-loss exponent must exceed 2 (interference integral diverges), got {}", c.alpha),
            ));
        }
        if !(c.gamma_th.is_finite() && c.gamma_th > 0.0) {
            return Err(Error::invalid("gamma_th", format!("must be positive, got {}", c.gamma_th)));
        }
        if !(c.rho.is_finite() && c.rho > 0.0) {
            return Err(Error::invalid("rho", format!("must be positive, got {}", c.rho)));
        }
        if !(c.sigma2.is_finite() && c.sigma2 >= 0.0) {
            return Err(Error::invalid("sigma2", format!("must be non-negative, got {}", c.sigma2)));
        }
        if !(c.c_const.is_finite() && c.c_const > 0.0) {
            return Err(Error::invalid("c_const", format!("must be positive, got {}", c.c_const)));
        }
        let lambda_dp = c.lambda_d / f64::from(c.xi);
        let interference_integral = special::interference_integral(c.gamma_th, c.alpha)?;
        Ok(NetworkParams {
            config,
            lambda_dp,
            interference_integral,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Re-validate after modifying a copy of the underlying configuration.
    pub fn modified(&self, f: impl FnOnce(&mut NetworkConfig)) -> Result<Self> {
        let mut config = self.config.clone();
        f(&mut config);
        NetworkParams::new(config)
    }

    pub fn lambda_b(&self) -> f64 {
        self.config.lambda_b
    }

    pub fn lambda_d(&self) -> f64 {
        self.config.lambda_d
    }

    pub fn xi(&self) -> u32 {
        self.config.xi
    }

    /// Density of devices sharing one preamble, `lambda_d / xi`.
    pub fn lambda_dp(&self) -> f64 {
        self.lambda_dp
    }

    pub fn rho(&self) -> f64 {
        self.config.rho
    }

    pub fn sigma2(&self) -> f64 {
        self.config.sigma2
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha
    }

    pub fn gamma_th(&self) -> f64 {
        self.config.gamma_th
    }

    pub fn c_const(&self) -> f64 {
        self.config.c_const
    }

    pub fn density_ratio(&self) -> f64 {
        self.lambda_dp / self.config.lambda_b
    }

    /// `∫_{γ^{-1/α}}^∞ y/(1+y^α) dy` for this parameter set.
    pub fn interference_integral(&self) -> f64 {
        self.interference_integral
    }
}

/// Per-slot new-packet arrival intensities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficProfile {
    /// PRACH duration, ms.
    pub tau_c: f64,
    /// Gap between PRACH occasions, ms.
    pub tau_g: f64,
    /// Arrival rate per slot, packets/ms. Index 0 is slot 1.
    pub eps_new: Vec<f64>,
    /// Mean new packets per slot, `(tau_c + tau_g) * eps_new`.
    pub mu_new: Vec<f64>,
}

impl TrafficProfile {
    pub fn new(tau_c: f64, tau_g: f64, eps_new: Vec<f64>) -> Result<Self> {
        if !(tau_c.is_finite() && tau_c >= 0.0) {
            return Err(Error::invalid("tau_c", format!("must be non-negative, got {tau_c}")));
        }
        if !(tau_g.is_finite() && tau_g >= 0.0) {
            return Err(Error::invalid("tau_g", format!("must be non-negative, got {tau_g}")));
        }
        if tau_c + tau_g <= 0.0 {
            return Err(Error::invalid("tau_c + tau_g", "slot duration must be positive"));
        }
        if eps_new.is_empty() {
            return Err(Error::invalid("eps_new", "need at least one slot"));
        }
        if let Some(bad) = eps_new.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::invalid("eps_new", format!("arrival rates must be non-negative, got {bad}")));
        }
        let slot = tau_c + tau_g;
        let mu_new = eps_new.iter().map(|e| slot * e).collect();
        Ok(TrafficProfile {
            tau_c,
            tau_g,
            eps_new,
            mu_new,
        })
    }

    /// Same rate in each of `slots` slots.
    pub fn constant(tau_c: f64, tau_g: f64, eps: f64, slots: usize) -> Result<Self> {
        TrafficProfile::new(tau_c, tau_g, vec![eps; slots])
    }

    pub fn slots(&self) -> usize {
        self.mu_new.len()
    }

    pub fn slot_duration(&self) -> f64 {
        self.tau_c + self.tau_g
    }

    /// Mean new arrivals in slot `m` (1-based).
    pub fn mu_new(&self, m: usize) -> f64 {
        self.mu_new[m - 1]
    }
}

/// How the back-off non-restrict recursion combines the deferred mass with
/// the current non-empty probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackoffReading {
    /// `1 - [Σ (1-P^j) T^j R^j] * T^m`.
    #[default]
    Multiplied,
    /// `1 - [Σ (1-P^j) T^j R^j] / T^m`, the deferred fraction among non-empty devices.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SchemeConfig {
    Baseline,
    Acb { p_acb: f64 },
    Backoff { t_bo: u32, reading: BackoffReading },
}

impl SchemeConfig {
    pub fn acb(p_acb: f64) -> Result<Self> {
        if !(p_acb > 0.0 && p_acb <= 1.0) {
            return Err(Error::invalid("p_acb", format!("must lie in (0, 1], got {p_acb}")));
        }
        Ok(SchemeConfig::Acb { p_acb })
    }

    pub fn backoff(t_bo: u32) -> Result<Self> {
        SchemeConfig::backoff_with(t_bo, BackoffReading::Multiplied)
    }

    pub fn backoff_with(t_bo: u32, reading: BackoffReading) -> Result<Self> {
        if t_bo == 0 {
            return Err(Error::invalid("t_bo", "back-off must last at least one slot"));
        }
        Ok(SchemeConfig::Backoff { t_bo, reading })
    }

    /// Short stable label used in CSV output.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SchemeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeConfig::Baseline => write!(f, "baseline"),
            SchemeConfig::Acb { p_acb } => write!(f, "acb({p_acb})"),
            SchemeConfig::Backoff { t_bo, reading } => match reading {
                BackoffReading::Multiplied => write!(f, "backoff({t_bo})"),
                BackoffReading::Conditional => write!(f, "backoff({t_bo},conditional)"),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub lambda_b_per_km2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_dp_per_km2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_d_per_km2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<u32>,
    pub rho_dbm: f64,
    pub sigma2_dbm: f64,
    pub alpha: f64,
    pub gamma_th_db: f64,
    #[serde(default = "default_c")]
    pub c_const: f64,
}

fn default_c() -> f64 {
    DEFAULT_CELL_CONSTANT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTraffic {
    #[serde(default = "default_tau_c")]
    pub tau_c_ms: f64,
    pub tau_g_ms: f64,
    /// Packets/ms; a scalar is broadcast to every slot.
    pub eps_new: ScalarOrList,
    /// Number of slots M. Defaults to the list length, or 1 for a scalar rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<usize>,
}

fn default_tau_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RawScheme {
    Baseline,
    Acb {
        p_acb: f64,
    },
    Backoff {
        t_bo: u32,
        #[serde(default)]
        reading: BackoffReading,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSim {
    #[serde(default = "default_side")]
    pub side_m: f64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_side() -> f64 {
    5000.0
}

fn default_realizations() -> usize {
    20
}

fn default_seed() -> u64 {
    1
}

impl Default for RawSim {
    fn default() -> Self {
        RawSim {
            side_m: default_side(),
            realizations: default_realizations(),
            seed: default_seed(),
        }
    }
}

/// One sweep dimension of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAxis {
    pub var: String,
    pub values: Vec<f64>,
}

/// A configuration document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Figure caption whose parameter set this document reproduces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
    pub network: RawNetwork,
    pub traffic: RawTraffic,
    #[serde(default, rename = "scheme", skip_serializing_if = "Vec::is_empty")]
    pub schemes: Vec<RawScheme>,
    #[serde(default)]
    pub sim: RawSim,
    #[serde(default, rename = "axis", skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<RawAxis>,
}

impl RawConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        RawConfig::from_toml_with_overrides(text, &[])
    }

    /// Parse a document, applying `section.key=value` overrides first.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RawConfig::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config documents always serialize")
    }
}

fn apply_override(doc: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, value) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{ov}` is not of the form key=value")))?;
    let value = parse_override_value(value.trim());
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields at least one item");
    let mut table = doc;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{ov}`: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_override_value(s: &str) -> toml::Value {
    match format!("v = {s}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(s.to_string()),
    }
}

/// Everything one model evaluation needs, in linear units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSet {
    pub network: NetworkParams,
    pub traffic: TrafficProfile,
    pub schemes: Vec<SchemeConfig>,
}

/// Convert and validate a configuration document.
pub fn from_config(raw: &RawConfig) -> Result<ParamSet> {
    let network = network_from_raw(&raw.network)?;
    let traffic = traffic_from_raw(&raw.traffic)?;
    let schemes = if raw.schemes.is_empty() {
        vec![SchemeConfig::Baseline]
    } else {
        raw.schemes.iter().map(scheme_from_raw).collect::<Result<_>>()?
    };
    Ok(ParamSet {
        network,
        traffic,
        schemes,
    })
}

pub fn network_from_raw(n: &RawNetwork) -> Result<NetworkParams> {
    for (name, v) in [
        ("lambda_b_per_km2", Some(n.lambda_b_per_km2)),
        ("lambda_dp_per_km2", n.lambda_dp_per_km2),
        ("lambda_d_per_km2", n.lambda_d_per_km2),
    ] {
        if let Some(v) = v {
            if v < 0.0 {
                return Err(Error::invalid(name, format!("density cannot be negative, got {v}")));
            }
        }
    }
    let (lambda_d, xi) = match (n.lambda_dp_per_km2, n.lambda_d_per_km2) {
        (Some(dp), None) => {
            let xi = n.xi.unwrap_or(1);
            (per_km2_to_per_m2(dp) * f64::from(xi), xi)
        }
        (None, Some(d)) => {
            let xi = n
                .xi
                .ok_or_else(|| Error::invalid("xi", "required when lambda_d_per_km2 is given"))?;
            (per_km2_to_per_m2(d), xi)
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either lambda_dp_per_km2 or lambda_d_per_km2, not both".into(),
            ))
        }
        (None, None) => return Err(Error::Config("missing device density lambda_dp_per_km2".into())),
    };
    NetworkParams::new(NetworkConfig {
        lambda_b: per_km2_to_per_m2(n.lambda_b_per_km2),
        lambda_d,
        xi,
        rho: dbm_to_mw(n.rho_dbm),
        sigma2: dbm_to_mw(n.sigma2_dbm),
        alpha: n.alpha,
        gamma_th: db_to_linear(n.gamma_th_db),
        c_const: n.c_const,
    })
}

pub fn traffic_from_raw(t: &RawTraffic) -> Result<TrafficProfile> {
    let eps = match &t.eps_new {
        ScalarOrList::Scalar(e) => vec![*e; t.slots.unwrap_or(1)],
        ScalarOrList::List(list) => match t.slots {
            None => list.clone(),
            Some(m) if m <= list.len() => list[..m].to_vec(),
            Some(m) => {
                return Err(Error::invalid(
                    "traffic.slots",
                    format!("{m} slots requested but eps_new lists only {}", list.len()),
                ))
            }
        },
    };
    if t.slots == Some(0) {
        return Err(Error::invalid("traffic.slots", "need at least one slot"));
    }
    TrafficProfile::new(t.tau_c_ms, t.tau_g_ms, eps)
}

pub fn scheme_from_raw(s: &RawScheme) -> Result<SchemeConfig> {
    match *s {
        RawScheme::Baseline => Ok(SchemeConfig::Baseline),
        RawScheme::Acb { p_acb } => SchemeConfig::acb(p_acb),
        RawScheme::Backoff { t_bo, reading } => SchemeConfig::backoff_with(t_bo, reading),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG4: &str = r#"
        [network]
        lambda_b_per_km2 = 10
        lambda_dp_per_km2 = 100
        rho_dbm = -90
        sigma2_dbm = -90
        alpha = 4
        gamma_th_db = -10

        [traffic]
        tau_g_ms = 0
        eps_new = 0.1
        slots = 3
    "#;

    #[test]
    fn converts_config_units() {
        let set = from_config(&RawConfig::from_toml_str(FIG4).unwrap()).unwrap();
        let n = &set.network;
        assert!((n.rho() / n.sigma2() - 1.0).abs() < 1e-15);
        assert!((n.gamma_th() - 0.1).abs() < 1e-15);
        assert!((n.lambda_b() - 1e-5).abs() < 1e-20);
        assert_eq!(n.lambda_dp(), n.lambda_d() / f64::from(n.xi()));
        assert_eq!(set.traffic.slots(), 3);
        assert!((set.traffic.mu_new(2) - 0.1).abs() < 1e-15);
        assert_eq!(set.schemes, vec![SchemeConfig::Baseline]);
    }

    #[test]
    fn rejects_bad_values() {
        for ov in ["network.alpha=2", "network.alpha=1.5", "network.lambda_b_per_km2=-1", "network.lambda_dp_per_km2=-3"] {
            let raw = RawConfig::from_toml_with_overrides(FIG4, &[ov.to_string()]).unwrap();
            let err = from_config(&raw).unwrap_err();
            assert!(err.is_validation(), "{ov}: {err}");
        }
        for p in [0.0, -0.1, 1.5] {
            assert!(SchemeConfig::acb(p).is_err());
        }
        assert!(SchemeConfig::acb(1.0).is_ok());
        assert!(SchemeConfig::backoff(0).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RawConfig::from_toml_with_overrides(FIG4, &["network.bogus=1".into()]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn total_density_with_preamble_pool() {
        let mut raw = RawConfig::from_toml_with_overrides(FIG4, &["network.xi=54".into()]).unwrap();
        raw.network.lambda_dp_per_km2 = None;
        raw.network.lambda_d_per_km2 = Some(5400.0);
        let n = network_from_raw(&raw.network).unwrap();
        assert!((per_m2_to_per_km2(n.lambda_dp()) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn eps_list_and_slots() {
        let raw = RawConfig::from_toml_with_overrides(FIG4, &["traffic.eps_new=[0.1, 0.1, 0.0, 0.0]".into()]).unwrap();
        let set = from_config(&raw).unwrap();
        assert_eq!(set.traffic.mu_new, vec![0.1, 0.1, 0.0]);
        let raw = RawConfig::from_toml_with_overrides(FIG4, &["traffic.slots=9".into(), "traffic.eps_new=[0.1]".into()]).unwrap();
        assert!(from_config(&raw).is_err());
    }

    #[test]
    fn db_round_trip() {
        for x in [-90.0, -40.0, -10.0, 0.0, 3.0, 27.5] {
            assert!((mw_to_dbm(dbm_to_mw(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
            assert!((linear_to_db(db_to_linear(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
