//! ε-sweeps of `‖φ_ε‖²` and the log-log exponent fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transfer::{Endpoints, Prepared, Weight};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Strictly decreasing.
    pub eps_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `−slope` of `log value` against `log ε` over the lower half of the grid.
    pub fitted_alpha: f64,
    /// Largest absolute log-residual of the fit.
    pub fit_residual: f64,
}

/// `steps` points from `eps_max` down to `eps_min`, evenly spaced in `log ε`.
pub fn geometric_grid(eps_min: f64, eps_max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(eps_min > 0.0 && eps_max > eps_min && eps_max.is_finite()) {
        return Err(Error::Argument(format!("need 0 < eps-min < eps-max, got {eps_min}, {eps_max}")));
    }
    if steps < 4 {
        return Err(Error::Argument("eps-steps must be at least 4".into()));
    }
    let (lo, hi) = (eps_min.ln(), eps_max.ln());
    Ok((0..steps)
        .map(|i| (hi + (lo - hi) * i as f64 / (steps - 1) as f64).exp())
        .collect())
}

/// Least-squares slope of `log y` on `log x`; returns `(slope, max |residual|)`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    (slope, residual)
}

impl SweepResult {
    pub fn from_values(eps_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if eps_grid.len() != values.len() || eps_grid.len() < 4 {
            return Err(Error::Argument("sweep needs at least 4 matching points".into()));
        }
        if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Argument("eps grid must be strictly decreasing".into()));
        }
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Contract("sweep values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract("sweep values must increase as eps decreases".into()));
        }
        let half = eps_grid.len() / 2;
        let (slope, fit_residual) = log_log_fit(&eps_grid[half..], &values[half..]);
        Ok(Self { eps_grid, values, fitted_alpha: -slope, fit_residual })
    }
}

pub fn run_sweep(prep: &Prepared, ends: &Endpoints, grid: &[f64], weight: Weight) -> Result<SweepResult> {
    let values = grid
        .iter()
        .map(|&eps| prep.phi_norm(ends, eps, weight))
        .collect::<Result<Vec<_>>>()?;
    SweepResult::from_values(grid.to_vec(), values)
}
