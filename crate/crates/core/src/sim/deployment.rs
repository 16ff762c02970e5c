use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use super::{stream_rng, Stream};
use crate::error::{Error, Result};
use crate::params::NetworkParams;

pub type Point = [f64; 2];

/// Squared distance on an `side × side` torus.
#[inline]
pub fn torus_distance_sq(a: Point, b: Point, side: f64) -> f64 {
    let mut dx = (a[0] - b[0]).abs();
    let mut dy = (a[1] - b[1]).abs();
    if dx > 0.5 * side {
        dx = side - dx;
    }
    if dy > 0.5 * side {
        dy = side - dy;
    }
    dx * dx + dy * dy
}

/// One fixed drop of base stations and same-preamble devices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deployment {
    pub side: f64,
    pub bs_positions: Vec<Point>,
    pub device_positions: Vec<Point>,
    /// Serving BS of each device (nearest on the torus).
    pub assoc: Vec<usize>,
    /// Squared serving distance of each device, m².
    pub serving_distance_sq: Vec<f64>,
    /// Devices served by each BS.
    pub cells: Vec<Vec<usize>>,
}

impl Deployment {
    /// Associate explicit positions; every device attaches to its nearest BS.
    pub fn from_positions(side: f64, bs_positions: Vec<Point>, device_positions: Vec<Point>) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::invalid("side", format!("must be positive, got {side}")));
        }
        if bs_positions.is_empty() && !device_positions.is_empty() {
            return Err(Error::invalid("bs_positions", "devices need at least one base station"));
        }
        let mut assoc = Vec::with_capacity(device_positions.len());
        let mut serving_distance_sq = Vec::with_capacity(device_positions.len());
        let mut cells = vec![Vec::new(); bs_positions.len()];
        for (i, &d) in device_positions.iter().enumerate() {
            let (best, dist) = bs_positions
                .iter()
                .enumerate()
                .map(|(b, &p)| (b, torus_distance_sq(d, p, side)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("at least one BS");
            assoc.push(best);
            serving_distance_sq.push(dist);
            cells[best].push(i);
        }
        Ok(Deployment {
            side,
            bs_positions,
            device_positions,
            assoc,
            serving_distance_sq,
            cells,
        })
    }

    pub fn n_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn n_devices(&self) -> usize {
        self.device_positions.len()
    }
}

/// Drop BSs at density `λ_B` and devices at `λ_Dp` on a torus of side `side`.
///
/// The BS count is conditioned on being at least one.
pub fn sample_deployment(params: &NetworkParams, side: f64, seed: u64) -> Result<Deployment> {
    if !(side.is_finite() && side > 0.0) {
        return Err(Error::invalid("side", format!("must be positive, got {side}")));
    }
    let area = side * side;
    let expected_bs = params.lambda_b() * area;
    if expected_bs < 10.0 {
        return Err(Error::invalid(
            "side",
            format!("region of side {side} m holds only {expected_bs:.1} base stations on average (need at least 10)"),
        ));
    }
    let mut rng = stream_rng(seed, Stream::Deployment);
    let bs_count = Poisson::new(expected_bs).map_err(|e| Error::numeric("BS count", e.to_string()))?;
    let n_bs = loop {
        let n = bs_count.sample(&mut rng) as usize;
        if n > 0 {
            break n;
        }
    };
    let n_dev = Poisson::new(params.lambda_dp() * area)
        .map_err(|e| Error::numeric("device count", e.to_string()))?
        .sample(&mut rng) as usize;
    let point = |rng: &mut rand_chacha::ChaCha8Rng| -> Point { [rng.gen::<f64>() * side, rng.gen::<f64>() * side] };
    let bs: Vec<Point> = (0..n_bs).map(|_| point(&mut rng)).collect();
    let dev: Vec<Point> = (0..n_dev).map(|_| point(&mut rng)).collect();
    Deployment::from_positions(side, bs, dev)
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
    fn torus_wraps() {
        assert_eq!(torus_distance_sq([1.0, 1.0], [99.0, 99.0], 100.0), 8.0);
        assert_eq!(torus_distance_sq([10.0, 0.0], [40.0, 0.0], 100.0), 900.0);
    }

    #[test]
    fn deterministic_and_nearest() {
        let p = params();
        let a = sample_deployment(&p, 5000.0, 7).unwrap();
        let b = sample_deployment(&p, 5000.0, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_deployment(&p, 5000.0, 8).unwrap());
        for (i, &d) in a.device_positions.iter().enumerate() {
            let min = a
                .bs_positions
                .iter()
                .map(|&q| torus_distance_sq(d, q, a.side))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(a.serving_distance_sq[i], min);
            assert!(a.cells[a.assoc[i]].contains(&i));
        }
        assert_eq!(a.cells.iter().map(Vec::len).sum::<usize>(), a.n_devices());
    }

    #[test]
    fn counts_follow_density() {
        let p = params();
        let n = 40;
        let mean_bs: f64 = (0..n)
            .map(|s| sample_deployment(&p, 5000.0, s).unwrap().n_bs() as f64)
            .sum::<f64>()
            / n as f64;
        // Poisson(250): the mean of 40 draws has sd 2.5.
        assert!((mean_bs - 250.0).abs() < 12.5, "{mean_bs}");
    }

    #[test]
    fn small_region_rejected() {
        assert!(sample_deployment(&params(), 500.0, 1).unwrap_err().is_validation());
    }
}
