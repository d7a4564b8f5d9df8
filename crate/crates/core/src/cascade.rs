//! Failure cascades: forced diffusion in fixed windows, removing every bank
//! whose distress has reached its capital at a window boundary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{DiffusionError, DistressState, ForcingSpec, Propagator};
use crate::network::WeightedGraph;
use crate::spectral::{algebraic_connectivity, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("dt must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon {horizon} is shorter than dt {dt}")]
    HorizonTooShort { horizon: f64, dt: f64 },
    #[error("capital of {bank} must be positive, got {value}")]
    NonPositiveCapital { bank: String, value: f64 },
    #[error("{what} has length {got}, graph has {expected} nodes")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("scenario names unknown bank {0}")]
    UnknownBank(String),
    #[error("scenario has no capital for bank {0}")]
    MissingCapital(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, CascadeError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    /// 1-based window index.
    pub round: usize,
    pub bank: String,
    pub time: f64,
    /// Distress held at failure, removed from the system.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    /// Per bank in graph order; `None` once failed.
    pub distress: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub banks: Vec<String>,
    pub failed: Vec<FailureEvent>,
    pub total_failures: usize,
    pub pre_lambda2: f64,
    pub post_lambda2: f64,
    pub fragility_change: f64,
    /// Windows simulated.
    pub rounds: usize,
    /// End of the last window with a failure; 0 when nothing failed.
    pub stabilization_time: f64,
    pub total_loss: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl CascadeResult {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn survivors(&self) -> Vec<&str> {
        let failed: Vec<&str> = self.failed.iter().map(|e| e.bank.as_str()).collect();
        self.banks
            .iter()
            .map(String::as_str)
            .filter(|b| !failed.contains(b))
            .collect()
    }
}

/// Number of windows of length `dt` needed to reach `horizon`; a final
/// partial window is clipped at the horizon.
pub fn window_count(horizon: f64, dt: f64) -> usize {
    let ratio = horizon / dt;
    let k = ratio.round();
    if (ratio - k).abs() <= 1e-9 * ratio.max(1.0) {
        (k as usize).max(1)
    } else {
        ratio.ceil() as usize
    }
}

/// End time of window `k` (1-based).
pub fn window_end(k: usize, horizon: f64, dt: f64, windows: usize) -> f64 {
    if k >= windows {
        horizon
    } else {
        (k as f64 * dt).min(horizon)
    }
}

pub fn cascade_stress_test(
    graph: &WeightedGraph,
    capitals: &[f64],
    shock: &ForcingSpec,
    horizon: f64,
    dt: f64,
) -> Result<CascadeResult> {
    let n = graph.n();
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(CascadeError::InvalidStep(dt));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(CascadeError::HorizonTooShort { horizon, dt });
    }
    if capitals.len() != n {
        return Err(CascadeError::LengthMismatch {
            what: "capitals",
            expected: n,
            got: capitals.len(),
        });
    }
    if shock.vector.len() != n {
        return Err(CascadeError::LengthMismatch {
            what: "shock",
            expected: n,
            got: shock.vector.len(),
        });
    }
    for (bank, &c) in graph.banks().iter().zip(capitals) {
        if !(c > 0.0) || !c.is_finite() {
            return Err(CascadeError::NonPositiveCapital {
                bank: bank.clone(),
                value: c,
            });
        }
    }

    let pre_lambda2 = algebraic_connectivity(graph)?;
    let windows = window_count(horizon, dt);
    let mut live: Vec<usize> = (0..n).collect();
    let mut sub = graph.clone();
    let mut prop = Propagator::new(&sub)?;
    let mut forcing = ForcingSpec::new(shock.vector.clone(), shock.onset);
    let mut state = DistressState::at(vec![0.0; n], 0.0);
    let mut failed = Vec::new();
    let mut trajectory = vec![TrajectoryPoint {
        time: 0.0,
        distress: vec![Some(0.0); n],
    }];
    let mut rounds = 0;
    let mut stabilization_time = 0.0;

    for k in 1..=windows {
        if live.is_empty() {
            break;
        }
        let end = window_end(k, horizon, dt, windows);
        state = prop.evolve_forced(&state, &forcing, end - state.time)?;
        state.time = end;
        rounds = k;

        let crossing: Vec<usize> = (0..live.len())
            .filter(|&p| state.values[p] >= capitals[live[p]])
            .collect();
        for &p in &crossing {
            let bank = graph.banks()[live[p]].clone();
            log::info!(
                "bank {bank} failed in round {k} at t={end} with distress {}",
                state.values[p]
            );
            failed.push(FailureEvent {
                round: k,
                bank,
                time: end,
                loss: state.values[p],
            });
        }

        let mut distress = vec![None; n];
        for (p, &i) in live.iter().enumerate() {
            if !crossing.contains(&p) {
                distress[i] = Some(state.values[p]);
            }
        }
        trajectory.push(TrajectoryPoint { time: end, distress });

        if !crossing.is_empty() {
            stabilization_time = end;
            let keep: Vec<usize> = (0..live.len()).filter(|p| !crossing.contains(p)).collect();
            live = keep.iter().map(|&p| live[p]).collect();
            sub = sub.induced(&keep);
            state.values = keep.iter().map(|&p| state.values[p]).collect();
            forcing.vector = keep.iter().map(|&p| forcing.vector[p]).collect();
            if !live.is_empty() {
                prop = Propagator::new(&sub)?;
            }
        }
    }

    let post_lambda2 = if live.len() < 2 {
        0.0
    } else {
        algebraic_connectivity(&sub)?
    };
    let total_loss = failed.iter().map(|e| e.loss).sum();
    Ok(CascadeResult {
        banks: graph.banks().to_vec(),
        total_failures: failed.len(),
        failed,
        pre_lambda2,
        post_lambda2,
        fragility_change: post_lambda2 - pre_lambda2,
        rounds,
        stabilization_time,
        total_loss,
        trajectory,
    })
}

/// Scenario file: shock and capitals keyed by bank identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeScenario {
    pub shock: BTreeMap<String, f64>,
    #[serde(default)]
    pub onset: f64,
    pub horizon: f64,
    pub dt: f64,
    pub capitals: BTreeMap<String, f64>,
}

impl CascadeScenario {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CascadeError::Scenario(e.to_string()))
    }

    /// Capitals and shock laid out in graph order; banks absent from the
    /// shock map receive no forcing.
    pub fn inputs(&self, graph: &WeightedGraph) -> Result<(Vec<f64>, ForcingSpec)> {
        for bank in self.shock.keys().chain(self.capitals.keys()) {
            if graph.index_of(bank).is_none() {
                return Err(CascadeError::UnknownBank(bank.clone()));
            }
        }
        let capitals = graph
            .banks()
            .iter()
            .map(|b| {
                self.capitals
                    .get(b)
                    .copied()
                    .ok_or_else(|| CascadeError::MissingCapital(b.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let shock = graph
            .banks()
            .iter()
            .map(|b| self.shock.get(b).copied().unwrap_or(0.0))
            .collect();
        Ok((capitals, ForcingSpec::new(shock, self.onset)))
    }

    pub fn run(&self, graph: &WeightedGraph) -> Result<CascadeResult> {
        let (capitals, shock) = self.inputs(graph)?;
        cascade_stress_test(graph, &capitals, &shock, self.horizon, self.dt)
    }
}
