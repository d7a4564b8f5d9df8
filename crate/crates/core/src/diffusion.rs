//! Distress diffusion dx/dt = −Lx + f(t), solved exactly in the Laplacian
//! eigenbasis.
//!
//! Every mode evolves independently: coefficient c_i decays as e^{−λ_i t}
//! and, under a constant forcing with projection g_i, relaxes towards
//! g_i/λ_i. Modes with λ_i = 0 (the constant direction, and one per extra
//! component of a disconnected graph) do not decay and integrate their
//! forcing linearly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::WeightedGraph;
use crate::spectral::{laplacian, spectrum, LaplacianSpectrum, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("vector has length {got}, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("time must be non-negative and finite, got {0}")]
    InvalidTime(f64),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, DiffusionError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistressState {
    pub values: Vec<f64>,
    pub time: f64,
}

impl DistressState {
    pub fn new(values: Vec<f64>) -> Self {
        DistressState { values, time: 0.0 }
    }

    pub fn at(values: Vec<f64>, time: f64) -> Self {
        DistressState { values, time }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.total() / self.values.len() as f64
        }
    }

    /// ‖x − x̄𝟏‖₂, the distance from uniform equilibrium.
    pub fn residual(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt()
    }
}

/// A constant per-bank inflow switched on at `onset` (absolute time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub vector: Vec<f64>,
    pub onset: f64,
}

impl ForcingSpec {
    pub fn new(vector: Vec<f64>, onset: f64) -> Self {
        ForcingSpec { vector, onset }
    }

    pub fn zero(n: usize) -> Self {
        ForcingSpec {
            vector: vec![0.0; n],
            onset: 0.0,
        }
    }
}

/// Reusable propagator holding one Laplacian decomposition.
#[derive(Debug, Clone)]
pub struct Propagator {
    spectrum: LaplacianSpectrum,
    /// Eigenvalues with numerical zeros snapped to exactly 0.
    rates: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DiffusionError::NonFinite(what))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(DiffusionError::InvalidTime(t))
    }
}

/// (1 − e^{−λτ})/λ without cancellation for small λτ.
fn relax_factor(lambda: f64, tau: f64) -> f64 {
    -(-lambda * tau).exp_m1() / lambda
}

impl Propagator {
    pub fn new(graph: &WeightedGraph) -> Result<Self> {
        let spectrum = spectrum(&laplacian(graph))?;
        let tol = spectrum.zero_tolerance();
        let all_zero = spectrum.lambda_max() <= 0.0;
        let rates = spectrum
            .eigenvalues
            .iter()
            .map(|&l| if all_zero || l < tol { 0.0 } else { l })
            .collect();
        Ok(Propagator { spectrum, rates })
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn spectrum(&self) -> &LaplacianSpectrum {
        &self.spectrum
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(DiffusionError::LengthMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Projects onto the eigenbasis, maps each coefficient, and projects
    /// back; the result is re-centred because it must have zero sum.
    fn propagate_deviation(&self, dev: &[f64], forcing_dev: Option<&[f64]>, tau: f64) -> Vec<f64> {
        let n = self.n();
        let v = &self.spectrum.eigenvectors;
        let mut out = vec![0.0; n];
        for k in 0..n {
            let col = v.column(k);
            let c: f64 = col.iter().zip(dev).map(|(a, b)| a * b).sum();
            let lambda = self.rates[k];
            let mut coef = if lambda > 0.0 { c * (-lambda * tau).exp() } else { c };
            if let Some(f) = forcing_dev {
                let g: f64 = col.iter().zip(f).map(|(a, b)| a * b).sum();
                coef += if lambda > 0.0 {
                    g * relax_factor(lambda, tau)
                } else {
                    g * tau
                };
            }
            if coef != 0.0 {
                for (o, a) in out.iter_mut().zip(col.iter()) {
                    *o += coef * a;
                }
            }
        }
        let drift = mean(&out);
        for o in &mut out {
            *o -= drift;
        }
        out
    }

    /// Homogeneous evolution over a duration `t`.
    pub fn evolve(&self, x0: &DistressState, t: f64) -> Result<DistressState> {
        self.check_len(&x0.values)?;
        check_finite(&x0.values, "initial state")?;
        check_time(t)?;
        if self.n() == 0 {
            return Ok(DistressState::at(vec![], x0.time + t));
        }
        let m = mean(&x0.values);
        let dev: Vec<f64> = x0.values.iter().map(|x| x - m).collect();
        if dev.iter().all(|&d| d == 0.0) || t == 0.0 {
            return Ok(DistressState::at(x0.values.clone(), x0.time + t));
        }
        let y = self.propagate_deviation(&dev, None, t);
        Ok(DistressState::at(y.into_iter().map(|d| m + d).collect(), x0.time + t))
    }

    /// Evolution over a duration `t` from `x0.time`, with the forcing
    /// active from `forcing.onset` (absolute time) onwards.
    pub fn evolve_forced(&self, x0: &DistressState, forcing: &ForcingSpec, t: f64) -> Result<DistressState> {
        self.check_len(&x0.values)?;
        self.check_len(&forcing.vector)?;
        check_finite(&forcing.vector, "forcing")?;
        if !forcing.onset.is_finite() {
            return Err(DiffusionError::NonFinite("forcing onset"));
        }
        check_time(t)?;
        let end = x0.time + t;
        if end <= forcing.onset {
            return self.evolve(x0, t);
        }
        let quiet = (forcing.onset - x0.time).max(0.0);
        let start = self.evolve(x0, quiet)?;
        let tau = t - quiet;
        if self.n() == 0 {
            return Ok(DistressState::at(vec![], end));
        }

        let m = mean(&start.values);
        let fbar = mean(&forcing.vector);
        let dev: Vec<f64> = start.values.iter().map(|x| x - m).collect();
        let fdev: Vec<f64> = forcing.vector.iter().map(|f| f - fbar).collect();
        let level = m + fbar * tau;
        if dev.iter().chain(&fdev).all(|&d| d == 0.0) {
            return Ok(DistressState::at(vec![level; self.n()], end));
        }
        let y = self.propagate_deviation(&dev, Some(&fdev), tau);
        Ok(DistressState::at(y.into_iter().map(|d| level + d).collect(), end))
    }

    /// Long-run profile under forcing orthogonal to 𝟏: L⁺f + x̄𝟏.
    pub fn forced_steady_state(&self, x0: &DistressState, forcing: &[f64]) -> Result<Vec<f64>> {
        self.check_len(&x0.values)?;
        self.check_len(forcing)?;
        let p = self.spectrum.pseudo_inverse();
        let f = nalgebra::DVector::from_column_slice(forcing);
        let m = x0.mean();
        Ok((p * f).iter().map(|v| v + m).collect())
    }
}

/// x(t) = Σ c_i e^{−λ_i t} v_i for a duration `t`.
pub fn evolve(graph: &WeightedGraph, x0: &DistressState, t: f64) -> Result<DistressState> {
    Propagator::new(graph)?.evolve(x0, t)
}

/// Piecewise solution: homogeneous until the forcing onset, then
/// e^{−Lτ}x(t₀) + L⁺(I − e^{−Lτ})f + (𝟏ᵀf/n)τ𝟏.
pub fn evolve_forced(
    graph: &WeightedGraph,
    x0: &DistressState,
    forcing: &ForcingSpec,
    t: f64,
) -> Result<DistressState> {
    Propagator::new(graph)?.evolve_forced(x0, forcing, t)
}

/// ATE(t) = ATE∞ · (1 − e^{−λ₂ t}).
pub fn ate_trajectory(ate_infinity: f64, lambda2: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    if !(lambda2 > 0.0) {
        return Err(DiffusionError::NonPositive {
            name: "lambda2",
            value: lambda2,
        });
    }
    t_grid
        .iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(DiffusionError::InvalidTime(t));
            }
            Ok(-ate_infinity * (-lambda2 * t).exp_m1())
        })
        .collect()
}

/// Lower bound 1 + α(λ₂_post/λ₂_pre − 1) on ATE_persistent / ATE_immediate.
pub fn amplification_bound(lambda2_pre: f64, lambda2_post: f64, alpha: f64) -> Result<f64> {
    for (name, value) in [
        ("lambda2_pre", lambda2_pre),
        ("lambda2_post", lambda2_post),
        ("alpha", alpha),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(DiffusionError::NonPositive { name, value });
        }
    }
    Ok(1.0 + alpha * (lambda2_post / lambda2_pre - 1.0))
}
