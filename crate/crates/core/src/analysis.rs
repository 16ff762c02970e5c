//! Single-slot stochastic-geometry analysis.
//!
//! Every quantity here depends on the device activity only through the
//! active-load ratio `a = T·R·λ_Dp/λ_B`, the mean number of active
//! same-preamble devices per BS.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::NetworkParams;
use crate::special::{self, NegBinomial};

/// Non-empty and non-restrict probabilities of a typical device in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActivityState {
    pub non_empty: f64,
    pub non_restrict: f64,
    /// `T·R·λ_Dp`, active same-preamble devices per m².
    pub active_density: f64,
    /// `T·R·λ_Dp/λ_B`.
    pub load: f64,
}

impl ActivityState {
    pub fn new(non_empty: f64, non_restrict: f64, params: &NetworkParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&non_empty) {
            return Err(Error::invalid("T", format!("non-empty probability {non_empty} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&non_restrict) {
            return Err(Error::invalid("R", format!("non-restrict probability {non_restrict} outside [0, 1]")));
        }
        let active_density = non_empty * non_restrict * params.lambda_dp();
        Ok(ActivityState {
            non_empty,
            non_restrict,
            active_density,
            load: active_density / params.lambda_b(),
        })
    }

    /// Every device active (`T = R = 1`).
    pub fn saturated(params: &NetworkParams) -> Self {
        ActivityState::new(1.0, 1.0, params).expect("unit probabilities are valid")
    }

    /// The same activity seen under a different BS density.
    pub fn rescaled(&self, params: &NetworkParams) -> Self {
        ActivityState {
            load: self.active_density / params.lambda_b(),
            ..*self
        }
    }
}

/// Analytical state of one slot under one scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotAnalysis {
    pub m: usize,
    pub mu_new: f64,
    pub mu_cum: f64,
    pub activity: ActivityState,
    pub p_success: f64,
    pub p_detect: f64,
    pub c_received: f64,
    pub q_len: f64,
}

impl SlotAnalysis {
    pub fn non_empty(&self) -> f64 {
        self.activity.non_empty
    }

    pub fn non_restrict(&self) -> f64 {
        self.activity.non_restrict
    }
}

pub fn interference_integral(gamma_th: f64, alpha: f64) -> Result<f64> {
    special::interference_integral(gamma_th, alpha)
}

/// `E[P^k]` of the channel-inversion transmit power, truncated at `p_max`
/// (pass `f64::INFINITY` for no truncation).
pub fn transmit_power_moment(k: f64, params: &NetworkParams, p_max: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::invalid("k", format!("moment order must be positive, got {k}")));
    }
    let rho = params.rho();
    let alpha = params.alpha();
    let pl = std::f64::consts::PI * params.lambda_b();
    let shape = k * alpha / 2.0 + 1.0;
    let ln_scale = k * rho.ln() - (shape - 1.0) * pl.ln();
    if p_max.is_infinite() {
        return Ok((ln_scale + statrs::function::gamma::ln_gamma(shape)).exp());
    }
    if !(p_max > 0.0) {
        return Err(Error::invalid("p_max", format!("must be positive, got {p_max}")));
    }
    let b = pl * (p_max / rho).powf(2.0 / alpha);
    let regularized = statrs::function::gamma::checked_gamma_lr(shape, b)
        .map_err(|e| Error::numeric("lower incomplete gamma", e.to_string()))?;
    let lower = regularized * statrs::function::gamma::ln_gamma(shape).exp();
    Ok(ln_scale.exp() * lower / -(-b).exp_m1())
}

/// Laplace transform of the aggregate inter-cell interference at `s = γ/ρ`.
pub fn laplace_inter(act: &ActivityState, params: &NetworkParams) -> f64 {
    let g = params.gamma_th();
    let exponent = 2.0 * g.powf(2.0 / params.alpha()) * act.load * params.interference_integral();
    (-exponent).exp()
}

/// `P{Z_D = n}`: interferers sharing the cell of a randomly chosen device.
pub fn cell_pmf_device(n: usize, act: &ActivityState, params: &NetworkParams) -> f64 {
    device_cell_law(act, params).pmf(n)
}

/// `P{|Ẑ_in| = n}`: active devices in a randomly chosen cell.
pub fn cell_pmf_random_bs(n: usize, act: &ActivityState, params: &NetworkParams) -> f64 {
    random_cell_law(act, params).pmf(n)
}

/// `P{Z_B = n}`: interferers in a randomly chosen cell holding at least one
/// active device.
///
/// At zero load the conditioning event is empty; the limit (point mass at 0)
/// is returned.
pub fn cell_pmf_random_bs_nonempty(n: usize, act: &ActivityState, params: &NetworkParams) -> f64 {
    if act.load == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let law = random_cell_law(act, params);
    law.pmf(n + 1) / random_cell_occupied(act, params)
}

fn device_cell_law(act: &ActivityState, params: &NetworkParams) -> NegBinomial {
    let c = params.c_const();
    NegBinomial::new(c + 1.0, act.load, c)
}

fn random_cell_law(act: &ActivityState, params: &NetworkParams) -> NegBinomial {
    let c = params.c_const();
    NegBinomial::new(c, act.load, c)
}

/// `1 - P{|Ẑ_in| = 0} = 1 - (1 + a/c)^{-c}`.
fn random_cell_occupied(act: &ActivityState, params: &NetworkParams) -> f64 {
    let c = params.c_const();
    -(-c * (act.load / c).ln_1p()).exp_m1()
}

/// Closed-form Laplace transform of the intra-cell interference seen by a
/// randomly chosen device: `(1 + aγ/(c(1+γ)))^{-c-1}`.
pub fn laplace_intra_device(act: &ActivityState, params: &NetworkParams) -> f64 {
    let c = params.c_const();
    let g = params.gamma_th();
    (-(c + 1.0) * (act.load * g / (c * (1.0 + g))).ln_1p()).exp()
}

/// The same transform summed term by term over `P{Z_D = n}`.
pub fn laplace_intra_device_series(act: &ActivityState, params: &NetworkParams) -> f64 {
    let s = 1.0 / (1.0 + params.gamma_th());
    device_cell_law(act, params).expectation(|n| s.powi(n as i32))
}

/// `exp(-γσ²/ρ)`, the success probability without interference.
pub fn noise_factor(params: &NetworkParams) -> f64 {
    (-params.gamma_th() * params.sigma2() / params.rho()).exp()
}

/// Preamble transmission success probability of a randomly chosen device.
pub fn preamble_success(act: &ActivityState, params: &NetworkParams) -> f64 {
    let p = noise_factor(params) * laplace_inter(act, params) * laplace_intra_device(act, params);
    p.clamp(0.0, 1.0)
}

/// Intra-cell transform seen from a randomly chosen occupied BS, summed over
/// `P{Z_B = n}`.
pub fn laplace_intra_random_bs(act: &ActivityState, params: &NetworkParams) -> f64 {
    if act.load == 0.0 {
        return 1.0;
    }
    let s = 1.0 / (1.0 + params.gamma_th());
    let law = random_cell_law(act, params);
    // Σ_n P{|Ẑ|=n+1} s^n, skipping the n = 0 mass of |Ẑ|.
    let shifted: f64 = law
        .terms()
        .skip(1)
        .map(|(k, t)| t * s.powi(k as i32 - 1))
        .sum();
    shifted / random_cell_occupied(act, params)
}

/// Preamble detection probability at a randomly chosen BS with at least one
/// active device. Authoritative series evaluation.
pub fn preamble_detection(act: &ActivityState, params: &NetworkParams) -> f64 {
    let p = noise_factor(params) * laplace_inter(act, params) * laplace_intra_random_bs(act, params);
    p.clamp(0.0, 1.0)
}

/// Closed-form detection probability with a `(cλ_B/(cλ_B + TRλ_Dp))^{-c}`
/// bracket term and a `(1 + a)^c` trailing factor.
///
/// It disagrees with [`preamble_detection`]: resumming the `Z_B` series gives
/// `(1 + a/c)^{-c}` inside the bracket and `(1 + a/c)^c` in the trailing
/// factor. Kept for side-by-side comparison only; `NaN` at zero load.
pub fn preamble_detection_closed_form(act: &ActivityState, params: &NetworkParams) -> f64 {
    let c = params.c_const();
    let g = params.gamma_th();
    let a = act.load;
    let lb = params.lambda_b();
    let bracket = (1.0 + a * g / (c * (1.0 + g))).powf(-c) - (c * lb / (c * lb + act.active_density)).powf(-c);
    let tail = (1.0 + g) * (1.0 + a).powf(c) / ((1.0 + a).powf(c) - 1.0);
    noise_factor(params) * laplace_inter(act, params) * bracket * tail
}

/// Mean successfully received packets per BS per preamble, `a·P`.
pub fn received_packets_per_bs(act: &ActivityState, params: &NetworkParams) -> f64 {
    act.load * preamble_success(act, params)
}

/// BS density maximising [`received_packets_per_bs`] for a fixed active
/// device density `T·R·λ_Dp`.
///
/// Setting `d ln C / da = 0` with `A = 2γ^{2/α}∫…`, `B = γ/(1+γ)` gives
/// `(AB/c) a² + (A+B) a - 1 = 0`, hence
/// `λ*_B = T R λ_Dp / 2 · (A + B + sqrt((A+B)² + 4AB/c))`.
pub fn optimal_bs_density(act: &ActivityState, params: &NetworkParams) -> Result<f64> {
    if !(act.active_density > 0.0) {
        return Err(Error::invalid("T·R·lambda_Dp", "optimal density needs a positive active density"));
    }
    let g = params.gamma_th();
    let c = params.c_const();
    let a_coef = 2.0 * g.powf(2.0 / params.alpha()) * params.interference_integral();
    let b_coef = g / (1.0 + g);
    let sum = a_coef + b_coef;
    let root = (sum * sum + 4.0 * a_coef * b_coef / c).sqrt();
    Ok(act.active_density / 2.0 * (sum + root))
}
