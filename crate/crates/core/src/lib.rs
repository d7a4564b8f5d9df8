//! Spectral fragility analysis for interbank exposure networks.
//!
//! The pipeline runs from country-level exposure panels to bilateral
//! networks, Laplacian spectra, diffusion and cascade simulation, and
//! network-level treatment-effect estimation:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`exposure`] | bank records, panel CSV I/O, synthetic panels |
//! | [`network`] | proportional allocation, symmetrization, conservation checks |
//! | [`spectral`] | Laplacians, eigendecomposition, fragility metrics |
//! | [`diffusion`] | exact spectral propagation, forced diffusion, ATE paths |
//! | [`cascade`] | failure cascades under forced diffusion |
//! | [`deleverage`] | greedy λ₂-minimising exposure cuts |
//! | [`inference`] | DID estimates, bank-resampling bootstrap, robustness |
//!
//! ```
//! use fragility::network::WeightedGraph;
//! use fragility::spectral::fragility_metrics;
//!
//! let g = WeightedGraph::complete("K4", 4, 1.0);
//! let m = fragility_metrics(&g).unwrap();
//! assert!((m.lambda2 - 4.0).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod deleverage;
pub mod diffusion;
pub mod eigen;
pub mod exposure;
pub mod inference;
pub mod network;
pub mod spectral;

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        // keep "-0" out of output files
        return "0".to_string();
    }
    format!("{:.16e}", x)
}
