//! Graph Laplacians, their spectra, and the fragility metrics derived from
//! them.
//!
//! The standard Laplacian is `L = D − A` with `D` the weighted degrees. Its
//! second-smallest eigenvalue λ₂ (algebraic connectivity) sets the slowest
//! non-uniform diffusion rate and is the headline fragility measure; larger
//! λ₂ means shocks equilibrate across the system faster.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{symmetric_eigen, symmetric_eigenvalues, EigenError};
use crate::network::WeightedGraph;

/// A graph is disconnected when λ₂ < `CONNECTIVITY_TOL` · λₙ.
pub const CONNECTIVITY_TOL: f64 = 1e-8;

/// Absolute symmetry tolerance accepted by [`spectrum`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("matrix is not symmetric: |L[{i},{j}] - L[{j},{i}]| = {gap}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("node {0} is isolated (zero degree); normalized Laplacian undefined")]
    IsolatedNode(String),
    #[error("unknown bank {0}")]
    UnknownBank(String),
    #[error("need at least {needed} nodes, graph has {got}")]
    TooFewNodes { needed: usize, got: usize },
    #[error("λ₂ must be positive, got {0}")]
    NonPositiveLambda2(f64),
    #[error("ε must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("vector has length {got}, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, SpectralError>;

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    pub entries: DMatrix<f64>,
    pub banks: Vec<String>,
    pub normalized: bool,
}

/// L_ii = Σ_k w_ik, L_ij = −w_ij.
pub fn laplacian(graph: &WeightedGraph) -> LaplacianMatrix {
    let w = graph.weights();
    let n = graph.n();
    let degrees = graph.degrees();
    let entries = DMatrix::from_fn(n, n, |i, j| if i == j { degrees[i] } else { -w[(i, j)] });
    LaplacianMatrix {
        entries,
        banks: graph.banks().to_vec(),
        normalized: false,
    }
}

/// I − D^{−1/2} A D^{−1/2}; fails on a zero-degree node.
pub fn normalized_laplacian(graph: &WeightedGraph) -> Result<LaplacianMatrix> {
    let w = graph.weights();
    let n = graph.n();
    let degrees = graph.degrees();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(SpectralError::IsolatedNode(graph.banks()[i].clone()));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            -w[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
        }
    });
    Ok(LaplacianMatrix {
        entries,
        banks: graph.banks().to_vec(),
        normalized: true,
    })
}

/// Full eigendecomposition of a Laplacian, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns; column k pairs with `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
    pub banks: Vec<String>,
    pub normalized: bool,
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > SYMMETRY_TOL || gap.is_nan() {
                return Err(SpectralError::NotSymmetric { i, j, gap });
            }
        }
    }
    Ok(())
}

pub fn spectrum(lap: &LaplacianMatrix) -> Result<LaplacianSpectrum> {
    check_symmetric(&lap.entries)?;
    let eig = symmetric_eigen(&lap.entries)?;
    Ok(LaplacianSpectrum {
        eigenvalues: eig.values,
        eigenvectors: eig.vectors.expect("vectors requested"),
        banks: lap.banks.clone(),
        normalized: lap.normalized,
    })
}

/// Threshold below which an eigenvalue counts as zero.
fn zero_tol(eigenvalues: &[f64]) -> f64 {
    CONNECTIVITY_TOL * eigenvalues.last().copied().unwrap_or(0.0).max(0.0)
}

fn lambda2_from(eigenvalues: &[f64]) -> (f64, bool) {
    if eigenvalues.len() < 2 {
        return (0.0, false);
    }
    let l2 = eigenvalues[1];
    let tol = zero_tol(eigenvalues);
    let lmax = *eigenvalues.last().unwrap();
    if lmax <= 0.0 || l2 < tol {
        (0.0, false)
    } else {
        (l2, true)
    }
}

impl LaplacianSpectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// λ₂, or 0 when the graph is disconnected.
    pub fn lambda2(&self) -> f64 {
        lambda2_from(&self.eigenvalues).0
    }

    pub fn is_connected(&self) -> bool {
        lambda2_from(&self.eigenvalues).1
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn zero_tolerance(&self) -> f64 {
        zero_tol(&self.eigenvalues)
    }

    /// Number of eigenvalues indistinguishable from zero; equals the number
    /// of connected components for a standard Laplacian.
    pub fn zero_multiplicity(&self) -> usize {
        let tol = self.zero_tolerance();
        if self.lambda_max() <= 0.0 {
            return self.n();
        }
        self.eigenvalues.iter().filter(|&&l| l < tol).count()
    }

    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// V · diag(λ) · Vᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.spectral_function(|l| l)
    }

    /// V · diag(f(λ)) · Vᵀ.
    pub fn spectral_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let fk = f(l);
            scaled.column_mut(k).scale_mut(fk);
        }
        scaled * v.transpose()
    }

    /// Moore–Penrose pseudo-inverse: 1/λ on the non-null modes, 0 on the
    /// null space (the constant direction for a connected graph).
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let tol = self.zero_tolerance();
        let all_zero = self.lambda_max() <= 0.0;
        self.spectral_function(|l| if all_zero || l < tol { 0.0 } else { 1.0 / l })
    }

    /// JSON export; eigenvectors only when asked for.
    pub fn to_json(&self, with_eigenvectors: bool) -> serde_json::Result<String> {
        let doc = SpectrumDocument {
            eigenvalues: self.eigenvalues.clone(),
            bank_order: self.banks.clone(),
            normalized: self.normalized,
            eigenvectors: with_eigenvectors.then(|| {
                (0..self.n())
                    .map(|k| self.eigenvectors.column(k).iter().copied().collect())
                    .collect()
            }),
        };
        serde_json::to_string_pretty(&doc)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumDocument {
    pub eigenvalues: Vec<f64>,
    pub bank_order: Vec<String>,
    pub normalized: bool,
    /// Column k pairs with eigenvalue k.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

/// λ₂ of the standard Laplacian, eigenvalues only. Returns 0 for a
/// disconnected graph or a graph with fewer than two nodes.
pub fn algebraic_connectivity(graph: &WeightedGraph) -> Result<f64> {
    if graph.n() < 2 {
        return Ok(0.0);
    }
    let vals = symmetric_eigenvalues(&laplacian(graph).entries)?;
    Ok(lambda2_from(&vals).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragilityMetrics {
    pub n: usize,
    pub connected: bool,
    pub lambda1: f64,
    /// Algebraic connectivity; 0 when disconnected.
    pub lambda2: f64,
    pub spectral_gap: f64,
    /// None for graphs with fewer than three nodes.
    pub lambda3: Option<f64>,
    pub spectral_radius: f64,
    /// λₙ / λ₂; None when disconnected.
    pub radius_ratio: Option<f64>,
    /// Σ_{i≥2} 1/λᵢ; None when disconnected.
    pub effective_resistance: Option<f64>,
    /// λ₂ of the normalized Laplacian; None with an isolated node.
    pub normalized_lambda2: Option<f64>,
    /// Mean resistance distance over node pairs; None when disconnected.
    pub avg_resistance_distance: Option<f64>,
}

pub fn fragility_metrics(graph: &WeightedGraph) -> Result<FragilityMetrics> {
    let n = graph.n();
    if n < 2 {
        return Err(SpectralError::TooFewNodes { needed: 2, got: n });
    }
    let spec = spectrum(&laplacian(graph))?;
    let ev = &spec.eigenvalues;
    let (lambda2, connected) = lambda2_from(ev);
    let lambda1 = ev[0];
    let lambda_n = spec.lambda_max();
    let tol = spec.zero_tolerance();
    let spectral_gap = if lambda1.abs() <= tol {
        lambda2
    } else {
        lambda2 - lambda1
    };

    let (radius_ratio, effective_resistance, avg_resistance_distance) = if connected {
        let r_eff: f64 = ev[1..].iter().map(|l| 1.0 / l).sum();
        let pinv = spec.pseudo_inverse();
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += pinv[(i, i)] + pinv[(j, j)] - 2.0 * pinv[(i, j)];
            }
        }
        let pairs = (n * (n - 1)) as f64 / 2.0;
        (Some(lambda_n / lambda2), Some(r_eff), Some(sum / pairs))
    } else {
        (None, None, None)
    };

    let normalized_lambda2 = match normalized_laplacian(graph) {
        Ok(nl) => Some(lambda2_from(&symmetric_eigenvalues(&nl.entries)?).0),
        Err(SpectralError::IsolatedNode(_)) => None,
        Err(e) => return Err(e),
    };

    Ok(FragilityMetrics {
        n,
        connected,
        lambda1,
        lambda2,
        spectral_gap,
        lambda3: ev.get(2).copied(),
        spectral_radius: lambda_n,
        radius_ratio,
        effective_resistance,
        normalized_lambda2,
        avg_resistance_distance,
    })
}

/// ε-mixing time ln(1/ε)/λ₂.
pub fn mixing_time(lambda2: f64, epsilon: f64) -> Result<f64> {
    if !(lambda2 > 0.0) {
        return Err(SpectralError::NonPositiveLambda2(lambda2));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SpectralError::InvalidEpsilon(epsilon));
    }
    Ok((1.0 / epsilon).ln() / lambda2)
}

/// SC_i = λ₂(G) − λ₂(G ∖ {i}).
pub fn spectral_centrality(graph: &WeightedGraph, bank: &str) -> Result<f64> {
    let idx = graph
        .index_of(bank)
        .ok_or_else(|| SpectralError::UnknownBank(bank.to_string()))?;
    if graph.n() < 3 {
        return Err(SpectralError::TooFewNodes {
            needed: 3,
            got: graph.n(),
        });
    }
    let full = algebraic_connectivity(graph)?;
    Ok(full - algebraic_connectivity(&graph.without(idx))?)
}

/// Spectral centrality of every node, in bank order.
pub fn spectral_centralities(graph: &WeightedGraph) -> Result<Vec<f64>> {
    if graph.n() < 3 {
        return Err(SpectralError::TooFewNodes {
            needed: 3,
            got: graph.n(),
        });
    }
    let full = algebraic_connectivity(graph)?;
    (0..graph.n())
        .into_par_iter()
        .map(|i| Ok(full - algebraic_connectivity(&graph.without(i))?))
        .collect()
}

/// λ₂ of a uniform complete graph carrying `total_exposure` over n(n−1)/2
/// edges: 2E/(n−1).
pub fn complete_graph_lambda2(n: usize, total_exposure: f64) -> Result<f64> {
    if n < 2 {
        return Err(SpectralError::TooFewNodes { needed: 2, got: n });
    }
    Ok(2.0 * total_exposure / (n as f64 - 1.0))
}

/// ½ Σ_{i,j} w_ij (x_i − x_j)², the Dirichlet energy of `x`.
pub fn quadratic_form(graph: &WeightedGraph, x: &[f64]) -> Result<f64> {
    let n = graph.n();
    if x.len() != n {
        return Err(SpectralError::LengthMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = x[i] - x[j];
            acc += graph.weight(i, j) * d * d;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(w: f64) -> WeightedGraph {
        WeightedGraph::from_edges(vec!["a".into(), "b".into()], &[(0, 1, w)], 0).unwrap()
    }

    fn two_components() -> WeightedGraph {
        WeightedGraph::from_edges((0..4).map(|k| k.to_string()).collect(), &[(0, 1, 1.0), (2, 3, 2.0)], 0).unwrap()
    }

    #[test]
    fn laplacian_small_cases() {
        let l = laplacian(&two_node(3.0));
        assert_eq!(l.entries, DMatrix::from_row_slice(2, 2, &[3.0, -3.0, -3.0, 3.0]));
        let k3 = laplacian(&WeightedGraph::complete("k", 3, 1.0));
        for i in 0..3 {
            assert_eq!(k3.entries[(i, i)], 2.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(k3.entries[(i, j)], -1.0);
                }
            }
        }
        let ones = DVector::from_element(3, 1.0);
        assert_eq!((&k3.entries * ones).amax(), 0.0);
    }

    #[test]
    fn normalized_two_nodes() {
        let nl = normalized_laplacian(&two_node(7.5)).unwrap();
        assert!(nl.normalized);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!((nl.entries - expected).amax() < 1e-15);
        let s = spectrum(&normalized_laplacian(&two_node(7.5)).unwrap()).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-14 && (s.eigenvalues[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn normalized_uniform_complete_rescales_by_degree() {
        let g = WeightedGraph::complete("k", 5, 2.0);
        let m = fragility_metrics(&g).unwrap();
        let dbar = 4.0 * 2.0;
        assert!((m.normalized_lambda2.unwrap() - m.lambda2 / dbar).abs() < 1e-12);
    }

    #[test]
    fn normalized_rejects_isolated_node() {
        let g = WeightedGraph::from_edges(vec!["a".into(), "b".into(), "c".into()], &[(0, 1, 1.0)], 0).unwrap();
        assert!(matches!(normalized_laplacian(&g), Err(SpectralError::IsolatedNode(b)) if b == "c"));
        // metrics still work, reporting the normalized value as absent
        let m = fragility_metrics(&g).unwrap();
        assert!(m.normalized_lambda2.is_none());
        assert!(!m.connected);
    }

    #[test]
    fn spectrum_small_cases() {
        let s = spectrum(&laplacian(&two_node(3.0))).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-14);
        assert!((s.eigenvalues[1] - 6.0).abs() < 1e-14);
        let s = spectrum(&laplacian(&WeightedGraph::complete("k", 4, 1.0))).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-14);
        for &l in &s.eigenvalues[1..] {
            assert!((l - 4.0).abs() < 1e-13);
        }
        // first eigenvector ∝ 1
        let v1 = s.eigenvector(0);
        for x in v1.iter() {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_rejects_asymmetric() {
        let mut l = laplacian(&two_node(1.0));
        l.entries[(0, 1)] += 1e-6;
        assert!(matches!(spectrum(&l), Err(SpectralError::NotSymmetric { .. })));
    }

    #[test]
    fn metrics_uniform_complete() {
        let m = fragility_metrics(&WeightedGraph::complete("k", 4, 1.0)).unwrap();
        assert!(m.connected);
        assert!((m.lambda2 - 4.0).abs() < 1e-12);
        assert!((m.spectral_gap - 4.0).abs() < 1e-12);
        assert!((m.spectral_radius - 4.0).abs() < 1e-12);
        assert!((m.radius_ratio.unwrap() - 1.0).abs() < 1e-12);
        assert!((m.effective_resistance.unwrap() - 0.75).abs() < 1e-12);
        // K_n with unit weights: resistance distance 2/n between any pair
        assert!((m.avg_resistance_distance.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn metrics_disconnected() {
        let g = two_components();
        let m = fragility_metrics(&g).unwrap();
        assert!(!m.connected);
        assert_eq!(m.lambda2, 0.0);
        assert!(m.effective_resistance.is_none());
        let s = spectrum(&laplacian(&g)).unwrap();
        assert_eq!(s.zero_multiplicity(), 2);
    }

    #[test]
    fn avg_resistance_matches_kirchhoff_identity() {
        // Σ_{i<j} r_ij = n · Σ 1/λ_i, so the mean is 2 R_eff / (n − 1)
        let g = WeightedGraph::from_edges(
            (0..5).map(|k| k.to_string()).collect(),
            &[
                (0, 1, 1.0),
                (1, 2, 2.0),
                (2, 3, 0.5),
                (3, 4, 4.0),
                (0, 4, 1.5),
                (1, 3, 3.0),
            ],
            0,
        )
        .unwrap();
        let m = fragility_metrics(&g).unwrap();
        let expected = 2.0 * m.effective_resistance.unwrap() / 4.0;
        assert!((m.avg_resistance_distance.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_properties() {
        let g = WeightedGraph::from_edges(
            (0..4).map(|k| k.to_string()).collect(),
            &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0), (0, 3, 0.5)],
            0,
        )
        .unwrap();
        let l = laplacian(&g);
        let s = spectrum(&l).unwrap();
        let p = s.pseudo_inverse();
        let lpl = &l.entries * &p * &l.entries;
        assert!((lpl - &l.entries).amax() < 1e-12);
        let ones = DVector::from_element(4, 1.0);
        assert!((&p * ones).amax() < 1e-12);
    }

    #[test]
    fn mixing_time_cases() {
        assert!((mixing_time(1.0, (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        assert!((mixing_time(2.0, 0.01).unwrap() - 100f64.ln() / 2.0).abs() < 1e-15);
        let ratio = mixing_time(2181.96, 0.1).unwrap() / mixing_time(1719.29, 0.1).unwrap();
        assert!((ratio - 0.788).abs() < 0.001);
        assert!(matches!(
            mixing_time(0.0, 0.5),
            Err(SpectralError::NonPositiveLambda2(_))
        ));
        assert!(matches!(mixing_time(1.0, 1.0), Err(SpectralError::InvalidEpsilon(_))));
    }

    #[test]
    fn centrality_uniform_complete() {
        let g = WeightedGraph::complete("k", 4, 1.0);
        for b in g.banks() {
            assert!((spectral_centrality(&g, b).unwrap() - 1.0).abs() < 1e-12);
        }
        let all = spectral_centralities(&g).unwrap();
        assert!(all.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(matches!(
            spectral_centrality(&g, "zz"),
            Err(SpectralError::UnknownBank(_))
        ));
        assert!(matches!(
            spectral_centrality(&two_node(1.0), "a"),
            Err(SpectralError::TooFewNodes { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn centrality_star_hub_dominates() {
        // hub 0 bridging leaves, leaves weakly tied among themselves
        let mut edges = vec![];
        for leaf in 1..6 {
            edges.push((0, leaf, 10.0));
        }
        for a in 1..6 {
            for b in (a + 1)..6 {
                edges.push((a, b, 0.5));
            }
        }
        let g = WeightedGraph::from_edges((0..6).map(|k| k.to_string()).collect(), &edges, 0).unwrap();
        let sc = spectral_centralities(&g).unwrap();
        for leaf in 1..6 {
            assert!(sc[0] > sc[leaf], "hub {} vs leaf {}", sc[0], sc[leaf]);
        }
    }

    #[test]
    fn centrality_when_removal_disconnects() {
        // path a-b-c: removing b leaves two isolated nodes
        let g = WeightedGraph::from_edges(vec!["a".into(), "b".into(), "c".into()], &[(0, 1, 1.0), (1, 2, 1.0)], 0)
            .unwrap();
        let full = algebraic_connectivity(&g).unwrap();
        assert!((spectral_centrality(&g, "b").unwrap() - full).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_eigensolver() {
        assert_eq!(complete_graph_lambda2(4, 6.0).unwrap(), 4.0);
        assert_eq!(complete_graph_lambda2(2, 3.0).unwrap(), 6.0);
        let g = WeightedGraph::complete("k", 4, 1.0);
        assert!((algebraic_connectivity(&g).unwrap() - 4.0).abs() < 1e-12);
        let ratio = complete_graph_lambda2(33, 1.0).unwrap() / complete_graph_lambda2(61, 1.0).unwrap();
        assert!((ratio - 1.875).abs() < 1e-15);
        assert!(complete_graph_lambda2(1, 1.0).is_err());
    }

    #[test]
    fn quadratic_form_cases() {
        let g = two_node(3.0);
        assert_eq!(quadratic_form(&g, &[1.0, 0.0]).unwrap(), 3.0);
        let k = WeightedGraph::complete("k", 5, 2.0);
        assert_eq!(quadratic_form(&k, &[4.2; 5]).unwrap(), 0.0);
        assert!(matches!(
            quadratic_form(&k, &[1.0]),
            Err(SpectralError::LengthMismatch { expected: 5, got: 1 })
        ));
    }

    #[test]
    fn spectrum_json_export() {
        let s = spectrum(&laplacian(&two_node(3.0))).unwrap();
        let bare: SpectrumDocument = serde_json::from_str(&s.to_json(false).unwrap()).unwrap();
        assert!(bare.eigenvectors.is_none());
        assert_eq!(bare.bank_order, vec!["a", "b"]);
        assert_eq!(bare.eigenvalues, s.eigenvalues);
        let full: SpectrumDocument = serde_json::from_str(&s.to_json(true).unwrap()).unwrap();
        assert_eq!(full.eigenvectors.unwrap().len(), 2);
    }
}
