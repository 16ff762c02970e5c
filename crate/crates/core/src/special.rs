//! Numerical building blocks: adaptive quadrature, the interference
//! integral, and tail-truncated negative-binomial / Poisson series.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Infinite sums stop once a bound on the remaining mass drops below this.
pub const TAIL_TOL: f64 = 1e-12;

// 15-point Kronrod abscissae and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
///
/// Bisects the segment with the largest error estimate until the summed
/// estimate is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod15(&f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    while error > abs_tol.max(rel_tol * value.abs()) {
        if !value.is_finite() {
            return Err(Error::numeric("quadrature", "integrand produced a non-finite value"));
        }
        if heap.len() >= max_segments {
            return Err(Error::numeric(
                "quadrature",
                format!("no convergence after {max_segments} segments (error estimate {error:e})"),
            ));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::numeric("quadrature", "segment width fell below machine precision"));
        }
        let left = kronrod15(&f, worst.a, mid);
        let right = kronrod15(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running updates.
    Ok(heap.iter().map(|s| s.value).sum())
}

/// `∫_{γ^{-1/α}}^∞ y / (1 + y^α) dy`, the inter-cell interference integral.
///
/// With `u = 1/y` the tail becomes `∫_0^{γ^{1/α}} u^{α-3}/(1+u^α) du`; the
/// further change `t = u^{α-2}` removes the endpoint singularity for
/// `2 < α < 3`, leaving a smooth integrand on a finite interval:
/// `1/(α-2) ∫_0^{γ^{1-2/α}} dt / (1 + t^{α/(α-2)})`.
pub fn interference_integral(gamma_th: f64, alpha: f64) -> Result<f64> {
    if !(gamma_th.is_finite() && gamma_th > 0.0) {
        return Err(Error::invalid("gamma_th", format!("must be positive, got {gamma_th}")));
    }
    if !(alpha.is_finite() && alpha > 2.0) {
        return Err(Error::invalid("alpha", format!("must exceed 2, got {alpha}")));
    }
    if alpha == 4.0 {
        // ∫ y/(1+y⁴) dy = ½ arctan(y²)
        return Ok(0.5 * (FRAC_PI_2 - gamma_th.sqrt().recip().atan()));
    }
    let k = alpha - 2.0;
    let upper = gamma_th.powf(k / alpha);
    let power = alpha / k;
    let inner = integrate(|t| 1.0 / (1.0 + t.powf(power)), 0.0, upper, 1e-13 * k, 1e-13, 4000)
        .map_err(|e| match e {
            Error::NumericFailure { detail, .. } => {
                Error::numeric(format!("interference integral (gamma={gamma_th}, alpha={alpha})"), detail)
            }
            other => other,
        })?;
    Ok(inner / k)
}

/// Negative-binomial law `Γ(n+r)/(Γ(r) n!) (1-p)^r p^n` with
/// `p = load/(load + c)`, the gamma-mixed Poisson count of devices in a
/// Voronoi cell whose normalised size has shape `c`.
#[derive(Debug, Clone, Copy)]
pub struct NegBinomial {
    shape: f64,
    ln_p: f64,
    ln_q: f64,
    p: f64,
}

impl NegBinomial {
    /// `shape` is `r`; `load` and `c` fix `p = load/(load + c)`.
    pub fn new(shape: f64, load: f64, c: f64) -> Self {
        debug_assert!(shape > 0.0 && load >= 0.0 && c > 0.0);
        let p = load / (load + c);
        NegBinomial {
            shape,
            ln_p: if load > 0.0 { load.ln() - (load + c).ln() } else { f64::NEG_INFINITY },
            ln_q: -(load / c).ln_1p(),
            p,
        }
    }

    pub fn ln_pmf(&self, n: usize) -> f64 {
        let r = self.shape;
        if self.p == 0.0 {
            return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let nf = n as f64;
        ln_gamma(nf + r) - ln_gamma(r) - ln_gamma(nf + 1.0) + r * self.ln_q + nf * self.ln_p
    }

    pub fn pmf(&self, n: usize) -> f64 {
        self.ln_pmf(n).exp()
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.p / (1.0 - self.p)
    }

    /// Bound on `Σ_{k>n} pmf(k)` given `pmf(n)`; `None` while the terms may
    /// still be growing.
    fn tail_bound(&self, n: usize, term: f64) -> Option<f64> {
        let ratio = if self.shape >= 1.0 {
            self.p * (n as f64 + self.shape) / (n as f64 + 1.0)
        } else {
            self.p
        };
        (ratio < 1.0).then(|| term * ratio / (1.0 - ratio))
    }

    /// Iterate `(n, pmf(n))` until the remaining mass is below [`TAIL_TOL`].
    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let mut done = false;
        (0..).map_while(move |n| {
            if done {
                return None;
            }
            let t = self.pmf(n);
            if self.tail_bound(n, t).is_some_and(|b| b < TAIL_TOL) {
                done = true;
            }
            Some((n, t))
        })
    }

    /// `Σ_n pmf(n) w(n)` for weights bounded by one in magnitude.
    pub fn expectation(&self, w: impl Fn(usize) -> f64) -> f64 {
        self.terms().map(|(n, t)| t * w(n)).sum()
    }
}

pub fn poisson_pmf(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (kf * mu.ln() - mu - ln_gamma(kf + 1.0)).exp()
}

/// Poisson masses `0..=N` with the mass beyond `N` below [`TAIL_TOL`].
pub fn poisson_masses(mu: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0.. {
        let t = poisson_pmf(mu, k);
        out.push(t);
        let ratio = mu / (k as f64 + 1.0);
        if ratio < 1.0 && t * ratio / (1.0 - ratio) < TAIL_TOL {
            break;
        }
    }
    out
}

/// `P{X ≤ y}` for `X ~ Poisson(mu)`.
pub fn poisson_cdf(mu: f64, y: usize) -> f64 {
    if mu == 0.0 {
        return 1.0;
    }
    let s: f64 = (0..=y).map(|k| poisson_pmf(mu, k)).sum();
    s.min(1.0)
}
