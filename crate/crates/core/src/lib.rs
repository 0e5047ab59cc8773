//! Anderson acceleration for gradient descent and for AEGD (adaptive gradient
//! descent with energy), plus proximal variants for constrained problems and
//! diagnostics that measure the per-step gain of the Anderson mix.
//!
//! ```
//! use aaegd::prelude::*;
//!
//! let f = rosenbrock_2d();
//! let x0 = DenseVector::new(vec![1.5, -0.5]).unwrap();
//! let stop = StoppingRule { value_target: Some(1e-8), ..StoppingRule::default() };
//! let trace = run_aa(Method::Aegd, &f, &x0, 6.4e-3, &AaConfig::new(3), &stop, Recording::default()).unwrap();
//! assert!(trace.last().value < 1e-8);
//! ```

pub mod anderson;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod optimizers;
pub mod proximal;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::anderson::{
        chebyshev_gain, mix, run_aa, solve_coefficients, AaConfig, AndersonWindow, MixingCoefficients,
    };
    pub use crate::diagnostics::{
        gain_report, projection_gain, summarize, verify_theorem_3_1, ConvergenceTrace, GainInputs, GainReport,
        Recording, Summary, Termination,
    };
    pub use crate::error::{Error, Result};
    pub use crate::linalg::{solve_regularized_ls, spectral_bounds, DenseMatrix, DenseVector};
    pub use crate::objectives::{
        load_csv_dataset, make_logistic, make_nnls, make_quadratic, rosenbrock_2d, CompositeProblem, Objective,
        Quadratic,
    };
    pub use crate::optimizers::{
        aegd_step, effective_step, gd_step, run_optimizer, EnergyState, Method, StepRecord, StoppingRule,
    };
    pub use crate::proximal::{
        apga_step, pga_step, prox_box_linf, prox_nonneg, run_aa_aegd_prox, run_aa_pga, run_apga, run_pga, Momentum,
        Prox, ProxAaOptions,
    };
}
