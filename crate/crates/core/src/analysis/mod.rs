//! Metrics, the Jensen gap, and empirical checks of the attack's theory.

pub mod checks;
pub mod jensen;
pub mod metrics;
pub mod report;
pub mod spectrum;

pub use checks::{
    check_monotonicity, check_strict_decrease, convergence_rate_report, laurent_massart_check,
    spearman,
};
pub use jensen::{fd_input_jacobian, jensen_gap_estimate, JensenGap};
pub use metrics::{mse, psnr, psnr_from_mse};
pub use report::{summary_csv, TheoremReport};
pub use spectrum::{jacobian_spectrum, power_extremes, symmetric_extremes};
