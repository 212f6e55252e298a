//! Ellipsoidal set-membership filter with a correction and a prediction SDP per step.

use std::fmt;

use thiserror::Error;

use crate::linalg::{LinalgError, Mat, SpdMat};
use crate::sdp::{self, AffineExpr, LmiConstraint, Objective, SdpError, SdpProblem, Sense, SolveStatus, SolverOptions};
use crate::system::{Ellipsoid, LtvSystem, SystemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Correction,
    Prediction,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Correction => "correction",
            Stage::Prediction => "prediction",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmfError {
    #[error("{stage} SDP at step {k} ended with status {status:?}")]
    SdpFailed { stage: Stage, k: usize, status: SolveStatus },
    #[error("{stage} shape matrix at step {k} is not positive definite: {source}")]
    Factorization { stage: Stage, k: usize, source: LinalgError },
    #[error("state at step {k} has not been corrected")]
    NotCorrected { k: usize },
    #[error("state at step {k} is already corrected")]
    AlreadyCorrected { k: usize },
    #[error("missing {what} for step {k}")]
    MissingData { what: &'static str, k: usize },
    #[error(transparent)]
    Model(#[from] SdpError),
    #[error(transparent)]
    System(#[from] SystemError),
}

pub type Result<T> = std::result::Result<T, SmfError>;

/// Output of the correction step.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub x: Vec<f64>,
    pub p: SpdMat,
    pub gain: Mat,
    /// Trace of the shape matrix returned by the solver before refitting.
    pub sdp_trace: f64,
    pub iterations: usize,
}

/// Filter estimate at step `k`: always the prediction, plus the correction once computed.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub k: usize,
    pub x_pred: Vec<f64>,
    pub p_pred: SpdMat,
    pub corrected: Option<Correction>,
    /// `τ₁, τ₂` of the last correction and `τ₃, τ₄` of the prediction that produced this state.
    pub tau: [f64; 4],
}

/// Per-step export record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x_pred: Vec<f64>,
    pub x_corr: Vec<f64>,
    /// `sqrt(P_{k|k}[i,i])`.
    pub bounds: Vec<f64>,
    pub trace_pred: f64,
    pub trace_corr: f64,
    pub tau: [f64; 4],
}

impl FilterState {
    /// `x̂_{0|-1} = x̂₀`, `P_{0|-1} = P₀`.
    pub fn initial(init: &Ellipsoid) -> Self {
        Self {
            k: 0,
            x_pred: init.center().to_vec(),
            p_pred: init.shape().clone(),
            corrected: None,
            tau: [f64::NAN; 4],
        }
    }

    pub fn e_pred(&self) -> &Mat {
        self.p_pred.factor()
    }

    pub fn predicted(&self) -> Ellipsoid {
        Ellipsoid::new(self.x_pred.clone(), self.p_pred.clone()).expect("consistent dimensions")
    }

    pub fn corrected_ellipsoid(&self) -> Option<Ellipsoid> {
        self.corrected
            .as_ref()
            .map(|c| Ellipsoid::new(c.x.clone(), c.p.clone()).expect("consistent dimensions"))
    }

    pub fn record(&self) -> Option<StepRecord> {
        let c = self.corrected.as_ref()?;
        Some(StepRecord {
            k: self.k,
            x_pred: self.x_pred.clone(),
            x_corr: c.x.clone(),
            bounds: c.p.as_mat().diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
            trace_pred: self.p_pred.trace(),
            trace_corr: c.p.trace(),
            tau: self.tau,
        })
    }
}

fn spd_with_jitter(m: Mat, stage: Stage, k: usize) -> Result<SpdMat> {
    let m = m.symmetrize();
    match SpdMat::new(m.clone()) {
        Ok(s) => Ok(s),
        Err(_) => {
            let eps = 1e-10 * m.trace().abs().max(f64::MIN_POSITIVE);
            let n = m.rows();
            SpdMat::new(&m + &Mat::identity(n).scale(eps)).map_err(|source| SmfError::Factorization { stage, k, source })
        }
    }
}

/// `Σ_j term_j / τ_j`, the smallest shape compatible with fixed multipliers.
///
/// Returns `None` when a multiplier is numerically zero but its term is not.
fn refit(terms: &[(Mat, f64)], scale: f64) -> Option<Mat> {
    let n = terms[0].0.rows();
    let sum: f64 = terms.iter().map(|t| t.1).sum();
    let norm = if sum > 1.0 { sum } else { 1.0 };
    let mut p = Mat::zeros(n, n);
    for (m, tau) in terms {
        let tau = tau / norm;
        if tau > 1e-12 {
            p = &p + &m.scale(1.0 / tau);
        } else if m.max_abs() > 1e-14 * scale {
            return None;
        }
    }
    Some(p.symmetrize())
}

fn lower_bound_lmi(p: sdp::VarId, n: usize, eps: f64) -> LmiConstraint {
    LmiConstraint::single(
        "P_positive",
        AffineExpr::zeros(n, n).plus_var(1.0, p).plus_const(Mat::identity(n).scale(-eps)),
        Sense::PositiveSemidefinite,
    )
}

/// Fuses the step-`k` measurement `y` into the predicted ellipsoid.
pub fn correct(sys: &LtvSystem, st: &FilterState, y: &[f64], opts: &SolverOptions) -> Result<FilterState> {
    if st.corrected.is_some() {
        return Err(SmfError::AlreadyCorrected { k: st.k });
    }
    let k = st.k;
    let m = sys.at(k)?;
    let dims = m.dims();
    if y.len() != dims.p {
        return Err(SystemError::DimensionMismatch { what: "output", expected: dims.p, actual: y.len() }.into());
    }
    let n = dims.n;
    let e = st.e_pred();
    let ce = &m.c * e;
    let r_inv = m.r.inverse();

    let mut prob = SdpProblem::new();
    let pv = prob.symmetric("P", n);
    let lv = prob.matrix("L", n, dims.p);
    let t1 = prob.nonnegative("tau1");
    let t2 = prob.nonnegative("tau2");
    let mut lmi = LmiConstraint::new("correction", vec![n, 1, n, dims.v], Sense::NegativeSemidefinite);
    lmi.set_block(0, 0, AffineExpr::zeros(n, n).plus_var(-1.0, pv));
    lmi.set_block(0, 2, AffineExpr::constant(e.clone()).plus_product(Mat::identity(n).scale(-1.0), lv, ce.clone()));
    lmi.set_block(0, 3, AffineExpr::zeros(n, dims.v).plus_product(Mat::identity(n).scale(-1.0), lv, m.d.clone()));
    lmi.set_block(
        1,
        1,
        AffineExpr::constant(Mat::scalar(-1.0))
            .plus_scaled(t1, Mat::scalar(1.0))
            .plus_scaled(t2, Mat::scalar(1.0)),
    );
    lmi.set_block(2, 2, AffineExpr::zeros(n, n).plus_scaled(t1, Mat::identity(n).scale(-1.0)));
    lmi.set_block(3, 3, AffineExpr::zeros(dims.v, dims.v).plus_scaled(t2, r_inv.scale(-1.0)));
    prob.constrain(lmi);
    prob.constrain(lower_bound_lmi(pv, n, 1e-9 * st.p_pred.trace() / n as f64));
    prob.minimize(Objective::trace(pv));

    let sol = sdp::solve(&prob, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(SmfError::SdpFailed { stage: Stage::Correction, k, status: sol.status });
    }
    let gain = sol.value(lv).clone();
    let (tau1, tau2) = (sol.scalar(t1).max(0.0), sol.scalar(t2).max(0.0));
    let sdp_p = sol.value(pv).clone();

    let lce = &gain * &ce;
    let a_term = e - &lce;
    let ld = &gain * &m.d;
    let terms = [
        (&a_term * &a_term.transpose(), tau1),
        (&(&ld * m.r.as_mat()) * &ld.transpose(), tau2),
    ];
    let p_mat = refit(&terms, st.p_pred.trace()).unwrap_or(sdp_p.clone());
    let p = spd_with_jitter(p_mat, Stage::Correction, k)?;

    let innov: Vec<f64> = y.iter().zip(m.c.mul_vec(&st.x_pred)).map(|(a, b)| a - b).collect();
    let x = crate::linalg::vec_add(&st.x_pred, &gain.mul_vec(&innov));
    let mut next = st.clone();
    next.tau[0] = tau1;
    next.tau[1] = tau2;
    next.corrected = Some(Correction { x, p, gain, sdp_trace: sdp_p.trace(), iterations: sol.iterations });
    Ok(next)
}

/// Propagates the corrected ellipsoid through the dynamics with input `u`.
pub fn predict(sys: &LtvSystem, st: &FilterState, u: &[f64], opts: &SolverOptions) -> Result<FilterState> {
    let k = st.k;
    let corr = st.corrected.as_ref().ok_or(SmfError::NotCorrected { k })?;
    let m = sys.at(k)?;
    let dims = m.dims();
    if u.len() != dims.m {
        return Err(SystemError::DimensionMismatch { what: "input", expected: dims.m, actual: u.len() }.into());
    }
    let n = dims.n;
    let ae = &m.a * corr.p.factor();
    let q_inv = m.q.inverse();

    let mut prob = SdpProblem::new();
    let pv = prob.symmetric("P", n);
    let t3 = prob.nonnegative("tau3");
    let t4 = prob.nonnegative("tau4");
    let mut lmi = LmiConstraint::new("prediction", vec![n, 1, n, dims.w], Sense::NegativeSemidefinite);
    lmi.set_block(0, 0, AffineExpr::zeros(n, n).plus_var(-1.0, pv));
    lmi.set_block(0, 2, AffineExpr::constant(ae.clone()));
    lmi.set_block(0, 3, AffineExpr::constant(m.g.clone()));
    lmi.set_block(
        1,
        1,
        AffineExpr::constant(Mat::scalar(-1.0))
            .plus_scaled(t3, Mat::scalar(1.0))
            .plus_scaled(t4, Mat::scalar(1.0)),
    );
    lmi.set_block(2, 2, AffineExpr::zeros(n, n).plus_scaled(t3, Mat::identity(n).scale(-1.0)));
    lmi.set_block(3, 3, AffineExpr::zeros(dims.w, dims.w).plus_scaled(t4, q_inv.scale(-1.0)));
    prob.constrain(lmi);
    prob.constrain(lower_bound_lmi(pv, n, 1e-9 * corr.p.trace() / n as f64));
    prob.minimize(Objective::trace(pv));

    let sol = sdp::solve(&prob, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(SmfError::SdpFailed { stage: Stage::Prediction, k, status: sol.status });
    }
    let (tau3, tau4) = (sol.scalar(t3).max(0.0), sol.scalar(t4).max(0.0));
    let gqg = &(&m.g * m.q.as_mat()) * &m.g.transpose();
    let terms = [(&ae * &ae.transpose(), tau3), (gqg, tau4)];
    let scale = corr.p.trace() + m.q.trace();
    let p_mat = refit(&terms, scale).unwrap_or_else(|| sol.value(pv).clone());
    let floor = 1e-9 * corr.p.trace() / n as f64;
    let p_mat = if p_mat.trace() < floor * n as f64 { &p_mat + &Mat::identity(n).scale(floor) } else { p_mat };
    let p_pred = spd_with_jitter(p_mat, Stage::Prediction, k)?;

    let x_pred = crate::linalg::vec_add(&m.a.mul_vec(&corr.x), &m.b.mul_vec(u));
    Ok(FilterState { k: k + 1, x_pred, p_pred, corrected: None, tau: [st.tau[0], st.tau[1], tau3, tau4] })
}

/// Runs the correct/predict recursion for `k = 0..=horizon`.
///
/// `outputs` needs `horizon + 1` entries and `inputs` at least `horizon`.
/// The returned states are all corrected; no prediction is made past the horizon.
pub fn run(
    sys: &LtvSystem,
    init: &Ellipsoid,
    inputs: &[Vec<f64>],
    outputs: &[Vec<f64>],
    horizon: usize,
    opts: &SolverOptions,
) -> Result<Vec<FilterState>> {
    if outputs.len() < horizon + 1 {
        return Err(SmfError::MissingData { what: "output", k: outputs.len() });
    }
    if inputs.len() < horizon {
        return Err(SmfError::MissingData { what: "input", k: inputs.len() });
    }
    let mut out = Vec::with_capacity(horizon + 1);
    let mut st = FilterState::initial(init);
    for k in 0..=horizon {
        let corrected = correct(sys, &st, &outputs[k], opts)?;
        if k < horizon {
            st = predict(sys, &corrected, &inputs[k], opts)?;
        }
        out.push(corrected);
    }
    Ok(out)
}
