//! Predictor-corrector interior-point solvers for convex quadratic programs
//! and a Generalized Predictive Control (GPC) front end.
//!
//! The solvers work on problems of the form
//!
//! ```text
//! minimize    ½ xᵀ G x + cᵀ x
//! subject to  A x ≥ b
//! ```
//!
//! with `G` symmetric positive semidefinite. Two algorithms are provided:
//!
//! - [`mehrotra`]: the classical Mehrotra predictor-corrector, used as the
//!   baseline.
//! - [`revised`]: a safeguarded predictor-corrector that caps the predictor
//!   step, keeps every iterate inside the wide neighborhood
//!   `N∞⁻(γ) = { y_i λ_i ≥ γ μ }` and falls back to a recentering step when
//!   the corrector step collapses.
//!
//! [`oracle`] solves small problems exactly by active-set enumeration and is
//! the ground truth both interior-point solvers are tested against.
//!
//! [`gpc`] turns a CARIMA plant model into the per-step QP of an
//! input-constrained GPC controller, [`closed_loop`] runs receding-horizon
//! simulations and [`bench`] runs the plant × horizon × algorithm timing matrix.

pub mod bench;
pub mod closed_loop;
pub mod error;
pub mod gpc;
pub mod kkt;
pub mod mehrotra;
pub mod oracle;
pub mod qp;
pub mod revised;

pub use error::{Error, Result};
pub use kkt::{Direction, NewtonFactorization};
pub use qp::{IterPoint, QpProblem, SolveResult, SolverParams, Status, TauRule};

/// Interior-point algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mehrotra,
    Revised,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Revised, Algorithm::Mehrotra];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mehrotra => "mehrotra",
            Algorithm::Revised => "revised",
        }
    }

    /// Solves `problem` from the algorithm's default starting point.
    pub fn solve(self, problem: &QpProblem, params: &SolverParams) -> Result<SolveResult> {
        match self {
            Algorithm::Mehrotra => {
                let start = mehrotra::default_start(problem);
                mehrotra::solve_mehrotra(problem, params, &start)
            }
            Algorithm::Revised => {
                let start = revised::default_start(problem, params);
                revised::solve_revised(problem, params, &start)
            }
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mehrotra" => Ok(Algorithm::Mehrotra),
            "revised" => Ok(Algorithm::Revised),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        }
    }
}
