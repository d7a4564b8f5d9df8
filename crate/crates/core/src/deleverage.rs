//! Greedy exposure reduction that lowers λ₂ as fast as possible.
//!
//! Bank i must shed D_i of bilateral exposure. At each step every bank with
//! outstanding target proposes cutting one `step` from each of its positive
//! edges; the proposal with the lowest resulting λ₂ is applied. A cut is
//! credited to the bank that proposed it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::WeightedGraph;
use crate::spectral::{algebraic_connectivity, SpectralError};

/// Relative tolerance under which two candidate λ₂ values count as tied.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeleverageError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("targets have length {got}, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("target for {bank} is {target}, but it holds only {degree}")]
    Infeasible { bank: String, target: f64, degree: f64 },
    #[error("target for {bank} must be finite and non-negative, got {target}")]
    InvalidTarget { bank: String, target: f64 },
    #[error("step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("step {step} exceeds the smallest positive target {target}")]
    StepTooLarge { step: f64, target: f64 },
    #[error("{bank} still owes {remaining} but has no exposure left to cut")]
    Exhausted { bank: String, remaining: f64 },
}

pub type Result<T> = std::result::Result<T, DeleverageError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    /// Bank credited with the cut.
    pub bank: usize,
    pub counterparty: usize,
    pub amount: f64,
    pub lambda2_after: f64,
}

#[derive(Debug, Clone)]
pub struct DeleverageResult {
    pub graph: WeightedGraph,
    pub cuts: Vec<Cut>,
    /// Exposure shed per bank, counting only cuts it initiated.
    pub shed: Vec<f64>,
    pub lambda2_before: f64,
    pub lambda2_after: f64,
    pub baseline_lambda2: f64,
}

impl DeleverageResult {
    pub fn beats_baseline(&self) -> bool {
        self.lambda2_after <= self.baseline_lambda2 * (1.0 + TIE_TOL)
    }
}

/// Default granularity: 1% of the largest target.
pub fn default_step(targets: &[f64]) -> f64 {
    targets.iter().copied().fold(0.0, f64::max) / 100.0
}

fn validate(graph: &WeightedGraph, targets: &[f64]) -> Result<()> {
    if targets.len() != graph.n() {
        return Err(DeleverageError::LengthMismatch {
            expected: graph.n(),
            got: targets.len(),
        });
    }
    let degrees = graph.degrees();
    for (i, (&t, &d)) in targets.iter().zip(&degrees).enumerate() {
        let bank = graph.banks()[i].clone();
        if !(t >= 0.0) || !t.is_finite() {
            return Err(DeleverageError::InvalidTarget { bank, target: t });
        }
        if t > d * (1.0 + TIE_TOL) {
            return Err(DeleverageError::Infeasible {
                bank,
                target: t,
                degree: d,
            });
        }
    }
    Ok(())
}

/// Each bank spreads its target over its edges in proportion to their
/// weight, all at once.
pub fn proportional_deleverage(graph: &WeightedGraph, targets: &[f64]) -> Result<WeightedGraph> {
    validate(graph, targets)?;
    let n = graph.n();
    let degrees = graph.degrees();
    let mut out = graph.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = graph.weight(i, j);
            if w <= 0.0 {
                continue;
            }
            let mut cut = 0.0;
            if targets[i] > 0.0 {
                cut += targets[i] * w / degrees[i];
            }
            if targets[j] > 0.0 {
                cut += targets[j] * w / degrees[j];
            }
            out.set_weight(i, j, (w - cut).max(0.0));
        }
    }
    Ok(out)
}

pub fn greedy_deleverage(graph: &WeightedGraph, targets: &[f64], step: f64) -> Result<DeleverageResult> {
    validate(graph, targets)?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(DeleverageError::InvalidStep(step));
    }
    if let Some(min) = targets.iter().copied().filter(|&t| t > 0.0).reduce(f64::min) {
        if step > min {
            return Err(DeleverageError::StepTooLarge { step, target: min });
        }
    }

    let n = graph.n();
    let lambda2_before = algebraic_connectivity(graph)?;
    let baseline_lambda2 = algebraic_connectivity(&proportional_deleverage(graph, targets)?)?;
    let mut g = graph.clone();
    let mut remaining = targets.to_vec();
    let mut shed = vec![0.0; n];
    let mut cuts = Vec::new();
    // targets are met once what is left is below rounding noise
    let done = |r: f64, t: f64| r <= t * 1e-12;

    loop {
        let candidates: Vec<(usize, usize, f64)> = (0..n)
            .filter(|&i| !done(remaining[i], targets[i]))
            .flat_map(|i| {
                let g = &g;
                let r = remaining[i];
                (0..n)
                    .filter(move |&j| j != i && g.weight(i, j) > 0.0)
                    .map(move |j| (i, j, step.min(r).min(g.weight(i, j))))
            })
            .collect();
        if candidates.is_empty() {
            if let Some(i) = (0..n).find(|&i| !done(remaining[i], targets[i])) {
                return Err(DeleverageError::Exhausted {
                    bank: g.banks()[i].clone(),
                    remaining: remaining[i],
                });
            }
            break;
        }
        let scored: Vec<f64> = candidates
            .par_iter()
            .map(|&(i, j, amount)| {
                let mut trial = g.clone();
                trial.set_weight(i, j, (g.weight(i, j) - amount).max(0.0));
                algebraic_connectivity(&trial)
            })
            .collect::<std::result::Result<_, _>>()?;

        // candidates are already in (i, j) order, so the first within
        // tolerance of the minimum is the lowest-index tie
        let best = scored.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = TIE_TOL * best.abs().max(f64::MIN_POSITIVE);
        let pick = scored.iter().position(|&s| s <= best + tol).expect("non-empty");
        let (i, j, amount) = candidates[pick];
        g.set_weight(i, j, (g.weight(i, j) - amount).max(0.0));
        remaining[i] -= amount;
        shed[i] += amount;
        cuts.push(Cut {
            bank: i,
            counterparty: j,
            amount,
            lambda2_after: scored[pick],
        });
    }

    let lambda2_after = algebraic_connectivity(&g)?;
    let result = DeleverageResult {
        graph: g,
        cuts,
        shed,
        lambda2_before,
        lambda2_after,
        baseline_lambda2,
    };
    if !result.beats_baseline() {
        log::warn!(
            "greedy deleveraging ended at λ₂ = {lambda2_after}, above the proportional baseline {baseline_lambda2}"
        );
    }
    Ok(result)
}
