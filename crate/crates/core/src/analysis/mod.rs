//! Diagnostics on frozen representations.

pub mod eigen;
pub mod probe;
pub mod report;
pub mod spectrum;

pub use eigen::{jacobi_eigen, SymmetricEigen};
pub use probe::{linear_probe, ProbeConfig};
pub use report::{
    geometry_report, pair_statistics, GeometryOptions, GeometryReport, Histogram, LabeledManifold,
};
pub use spectrum::{default_fit_window, eigenspectrum, power_law_fit, SpectrumFit};
