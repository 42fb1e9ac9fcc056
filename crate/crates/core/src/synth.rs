//! Seeded smooth signals: truncated Fourier series on `[t0, T]`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{TimeGrid, Trajectory};

pub const DEFAULT_HARMONICS: usize = 4;

/// `s_j(t) = a_j0 + sum_k (a_jk cos(2 pi k tau) + b_jk sin(2 pi k tau))`
/// with `tau = (t - t0) / (T - t0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSignal {
    t0: f64,
    t_end: f64,
    /// Per component: constant term, then `(a_k, b_k)` for `k = 1..`.
    coefficients: Vec<(f64, Vec<(f64, f64)>)>,
    scale: f64,
}

impl FourierSignal {
    /// Coefficients uniform in `[-1, 1] / k`.
    pub fn random(rng: &mut ChaCha8Rng, dim: usize, harmonics: usize, t0: f64, t_end: f64) -> Self {
        let coefficients = (0..dim)
            .map(|_| {
                let c0 = rng.random_range(-1.0..1.0);
                let terms = (1..=harmonics)
                    .map(|k| {
                        let a = rng.random_range(-1.0..1.0) / k as f64;
                        let b = rng.random_range(-1.0..1.0) / k as f64;
                        (a, b)
                    })
                    .collect();
                (c0, terms)
            })
            .collect();
        Self {
            t0,
            t_end,
            coefficients,
            scale: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.scale *= alpha;
        self
    }

    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        let tau = (t - self.t0) / (self.t_end - self.t0);
        let w = 2.0 * std::f64::consts::PI * tau;
        DVector::from_iterator(
            self.dim(),
            self.coefficients.iter().map(|(c0, terms)| {
                let s: f64 = terms
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let arg = (k + 1) as f64 * w;
                        a * arg.cos() + b * arg.sin()
                    })
                    .sum();
                self.scale * (c0 + s)
            }),
        )
    }

    pub fn sample(&self, grid: TimeGrid) -> Trajectory {
        Trajectory::from_fn(grid, self.dim(), |t| self.evaluate(t)).expect("finite samples")
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Factor `alpha` such that the summed trapezoidal energy of
/// `alpha * parts` equals `rho`.
pub fn energy_scale(parts: &[&Trajectory], rho: f64) -> Result<f64> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidParameter(format!("energy must be nonnegative, got {rho}")));
    }
    let energy: f64 = parts.iter().map(|p| p.inner(p)).sum::<Result<f64>>()?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    if energy <= 0.0 {
        return Err(Error::InvalidParameter("cannot rescale a zero signal".into()));
    }
    Ok((rho / energy).sqrt())
}
