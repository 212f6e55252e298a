//! Trace-minimization over linear matrix inequalities.
//!
//! Problems are stated over named matrix and scalar variables, lowered to a
//! scalar conic program and solved by an interior-point method.

mod conic;
mod model;
mod solver;

use thiserror::Error;

use crate::linalg::Mat;

pub use conic::{scalarize, ConeBlock, ConeSizes, ConicProgram};
pub use model::{
    AffineExpr, LmiConstraint, Objective, SdpProblem, SdpVariable, Sense, Term, VarId, VarKind,
};
pub use solver::{solve_conic, ConicSolution, KktResiduals, SolveStatus, SolverOptions, TolProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("problem has no constraints")]
    NoConstraints,
    #[error("problem has an empty objective")]
    EmptyObjective,
    #[error("constraint `{constraint}` references undeclared variable #{index}")]
    UndeclaredVariable { constraint: String, index: usize },
    #[error("variable `{variable}` has the wrong shape or kind in `{constraint}`")]
    ShapeMismatch { constraint: String, variable: String },
    #[error("diagonal blocks of `{constraint}` are not symmetric")]
    NonSymmetricBlock { constraint: String },
    #[error("variable `{variable}` appears in no constraint")]
    UnconstrainedVariable { variable: String },
    #[error("trace objective on non-symmetric variable `{variable}`")]
    ObjectiveNotSymmetric { variable: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Optimizer output mapped back to the declared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// One matrix per declared variable, in declaration order; scalars are 1×1.
    pub values: Vec<Mat>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub min_slack: f64,
}

impl SdpSolution {
    pub fn value(&self, id: VarId) -> &Mat {
        &self.values[id.index()]
    }

    pub fn scalar(&self, id: VarId) -> f64 {
        self.values[id.index()][(0, 0)]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    let conic = scalarize(problem)?;
    let sol = solve_conic(&conic, opts);
    Ok(SdpSolution {
        status: sol.status,
        values: conic.unpack(&sol.x),
        objective: sol.objective,
        dual_objective: sol.dual_objective,
        residuals: sol.residuals,
        iterations: sol.iterations,
        min_slack: sol.min_slack,
    })
}
