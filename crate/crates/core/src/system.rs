//! Discrete-time linear systems with ellipsoidal disturbance bounds.

use rand::Rng;
use thiserror::Error;

use crate::linalg::{matrix_exponential, LinalgError, Mat, SpdMat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("step {k} is beyond the {len}-step schedule")]
    HorizonExceeded { k: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("disturbance sample at step {k} lies outside its bounding ellipsoid (quadratic form {value})")]
    DisturbanceOutsideBound { k: usize, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SystemError>;

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(SystemError::DimensionMismatch { what, expected, actual });
    }
    Ok(())
}

/// `{x : (x − c)ᵀ P⁻¹ (x − c) ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: Vec<f64>,
    shape: SpdMat,
}

impl Ellipsoid {
    pub fn new(center: Vec<f64>, shape: SpdMat) -> Result<Self> {
        check_len("ellipsoid center", shape.dim(), center.len())?;
        Ok(Self { center, shape })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &SpdMat {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(x − c)ᵀ P⁻¹ (x − c)`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.shape.inv_quad_form(&d)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.quad_form(x) <= 1.0 + tol
    }
}

/// Problem dimensions: state, input, process disturbance, output, measurement disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub w: usize,
    pub p: usize,
    pub v: usize,
}

/// System matrices and disturbance bounds valid at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepModel {
    pub a: Mat,
    pub b: Mat,
    pub g: Mat,
    pub c: Mat,
    pub d: Mat,
    pub q: SpdMat,
    pub r: SpdMat,
}

impl StepModel {
    pub fn dims(&self) -> Dims {
        Dims { n: self.a.rows(), m: self.b.cols(), w: self.g.cols(), p: self.c.rows(), v: self.d.cols() }
    }

    fn validate(&self) -> Result<()> {
        let Dims { n, m, w, p, v } = self.dims();
        check_len("A columns", n, self.a.cols())?;
        check_len("B rows", n, self.b.rows())?;
        check_len("G rows", n, self.g.rows())?;
        check_len("C columns", n, self.c.cols())?;
        check_len("D rows", p, self.d.rows())?;
        check_len("Q dimension", w, self.q.dim())?;
        check_len("R dimension", v, self.r.dim())?;
        let _ = m;
        Ok(())
    }
}

/// `x_{k+1} = A_k x_k + B_k u_k + G_k w_k`, `y_k = C_k x_k + D_k v_k`.
///
/// A single-entry schedule is time-invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    steps: Vec<StepModel>,
}

impl LtvSystem {
    pub fn time_invariant(model: StepModel) -> Result<Self> {
        model.validate()?;
        Ok(Self { steps: vec![model] })
    }

    pub fn time_varying(steps: Vec<StepModel>) -> Result<Self> {
        let first = steps.first().ok_or_else(|| SystemError::InvalidParameter("empty schedule".into()))?;
        let dims = first.dims();
        for s in &steps {
            s.validate()?;
            let d = s.dims();
            check_len("state dimension", dims.n, d.n)?;
            check_len("input dimension", dims.m, d.m)?;
            check_len("disturbance dimension", dims.w, d.w)?;
            check_len("output dimension", dims.p, d.p)?;
            check_len("measurement noise dimension", dims.v, d.v)?;
        }
        Ok(Self { steps })
    }

    pub fn dims(&self) -> Dims {
        self.steps[0].dims()
    }

    pub fn is_time_invariant(&self) -> bool {
        self.steps.len() == 1
    }

    pub fn at(&self, k: usize) -> Result<&StepModel> {
        if self.steps.len() == 1 {
            return Ok(&self.steps[0]);
        }
        self.steps.get(k).ok_or(SystemError::HorizonExceeded { k, len: self.steps.len() })
    }

    pub fn step(&self, k: usize, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let s = self.at(k)?;
        let d = s.dims();
        check_len("state", d.n, x.len())?;
        check_len("input", d.m, u.len())?;
        check_len("process disturbance", d.w, w.len())?;
        let ax = s.a.mul_vec(x);
        let bu = s.b.mul_vec(u);
        let gw = s.g.mul_vec(w);
        Ok((0..d.n).map(|i| ax[i] + bu[i] + gw[i]).collect())
    }

    pub fn measure(&self, k: usize, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let s = self.at(k)?;
        let d = s.dims();
        check_len("state", d.n, x.len())?;
        check_len("measurement disturbance", d.v, v.len())?;
        let cx = s.c.mul_vec(x);
        let dv = s.d.mul_vec(v);
        Ok(cx.iter().zip(&dv).map(|(a, b)| a + b).collect())
    }
}

/// How a disturbance sequence is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceRealization {
    /// `amplitude_i · sin(frequency · k·dt + phase)`.
    Sinusoidal { amplitude: Vec<f64>, frequency: f64, phase: f64, dt: f64 },
    /// Independent uniform draws on `[-h_i, h_i]`.
    UniformBox { half_widths: Vec<f64> },
    Zero { dim: usize },
}

const MAX_RESAMPLES: usize = 1000;

impl DisturbanceRealization {
    pub fn dim(&self) -> usize {
        match self {
            Self::Sinusoidal { amplitude, .. } => amplitude.len(),
            Self::UniformBox { half_widths } => half_widths.len(),
            Self::Zero { dim } => *dim,
        }
    }

    /// Draws the sample for step `k` and checks it against `bound`.
    ///
    /// Box samples outside the ellipsoid are redrawn.
    pub fn sample<R: Rng>(&self, k: usize, bound: &SpdMat, rng: &mut R) -> Result<Vec<f64>> {
        check_len("disturbance bound", self.dim(), bound.dim())?;
        match self {
            Self::Sinusoidal { amplitude, frequency, phase, dt } => {
                let s = (frequency * k as f64 * dt + phase).sin();
                let v: Vec<f64> = amplitude.iter().map(|a| a * s).collect();
                let q = bound.inv_quad_form(&v);
                if q > 1.0 + 1e-12 {
                    return Err(SystemError::DisturbanceOutsideBound { k, value: q });
                }
                Ok(v)
            }
            Self::UniformBox { half_widths } => {
                let mut last = f64::NAN;
                for _ in 0..MAX_RESAMPLES {
                    let v: Vec<f64> = half_widths
                        .iter()
                        .map(|h| if *h > 0.0 { rng.gen_range(-h..=*h) } else { 0.0 })
                        .collect();
                    last = bound.inv_quad_form(&v);
                    if last <= 1.0 {
                        return Ok(v);
                    }
                }
                Err(SystemError::DisturbanceOutsideBound { k, value: last })
            }
            Self::Zero { dim } => Ok(vec![0.0; *dim]),
        }
    }
}

/// Which instant of `[t_k, t_{k+1}]` the time-varying coefficient is frozen at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientSample {
    #[default]
    Start,
    End,
}

/// `ẍ₁ = −ω₀²(1 + ε sin ωt) x₁ + w`, observed through `y = x₁ + v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MathieuParams {
    pub omega: f64,
    pub omega0: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub sample: CoefficientSample,
}

impl MathieuParams {
    pub fn continuous_a(&self, t: f64) -> Mat {
        Mat::from_rows(&[
            [0.0, 1.0],
            [-self.omega0 * self.omega0 * (1.0 + self.epsilon * (self.omega * t).sin()), 0.0],
        ])
    }
}

/// Zero-order-hold pair `(e^{A h}, ∫₀^h e^{A s} ds · G)` from one augmented exponential.
pub fn zoh(a: &Mat, g: &Mat, h: f64) -> Result<(Mat, Mat)> {
    let n = a.rows();
    let w = g.cols();
    let mut aug = Mat::zeros(n + w, n + w);
    aug.set_block(0, 0, &a.scale(h));
    aug.set_block(0, n, &g.scale(h));
    let e = matrix_exponential(&aug)?;
    Ok((e.block(0, 0, n, n), e.block(0, n, n, w)))
}

/// Frozen-coefficient discretization of the Mathieu system for steps `0..=horizon`.
pub fn zoh_discretize_mathieu(params: &MathieuParams, horizon: usize, q: SpdMat, r: SpdMat) -> Result<LtvSystem> {
    if !(params.dt > 0.0) {
        return Err(SystemError::InvalidParameter(format!("dt must be positive, got {}", params.dt)));
    }
    let g = Mat::column(&[0.0, 1.0]);
    let steps = (0..=horizon)
        .map(|k| {
            let t = match params.sample {
                CoefficientSample::Start => k as f64 * params.dt,
                CoefficientSample::End => (k + 1) as f64 * params.dt,
            };
            let (a, gk) = zoh(&params.continuous_a(t), &g, params.dt)?;
            Ok(StepModel {
                a,
                b: Mat::zeros(2, 0),
                g: gk,
                c: Mat::row(&[1.0, 0.0]),
                d: Mat::identity(1),
                q: q.clone(),
                r: r.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LtvSystem::time_varying(steps)
}
