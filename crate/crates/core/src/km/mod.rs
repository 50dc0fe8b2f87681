//! Nonlocal Kramers–Moyal estimators.

pub mod extract;
pub mod fields;
pub mod jump;
pub mod kernel;
pub mod quadrature;

pub use extract::{
    extract, upper_pairs, ExtractSettings, ExtractionResult, FieldEstimate, JumpDiagnostic,
    JumpSource, PointFailure,
};
pub use fields::{
    ball_moments, diffusion_from_moments, drift_from_moments, estimate_diffusion, estimate_drift,
    BallMoments, DiffusionEstimate,
};
pub use jump::{
    annulus_counts, annulus_mass_rate, fit_jump_params, fit_rates, AnnulusRate, JumpEstimate,
};
pub use kernel::{jump_correction, sphere_area, stable_constant, theoretical_annulus_rate};
pub use quadrature::{ball_quadrature, simpson_weights, BallRule};
