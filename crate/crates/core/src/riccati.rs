//! Riccati-like synchronization design: gain, coupling, closed loop and decay certificate.

use thiserror::Error;

use crate::graph::{circle_condition, Circle, GammaMatrix};
use crate::linalg::{self, kron, sigma_max, solve, spectral_radius, sym_eigen, LinalgError, Mat, SpdMat};

pub const RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 10_000;
pub const CERTIFICATE_GRID: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("Riccati iteration did not converge in {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("B must have full column rank")]
    RankDeficientB,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("circle condition violated: r0/c0 = {ratio}, r = {radius}, all eigenvalues inside: {enclosed}")]
    CircleConditionViolated { ratio: f64, radius: Radius, enclosed: bool },
    #[error("closed loop is not contractive: spectral radius {0}")]
    SpectralRadiusNotContractive(f64),
    #[error("decay certificate fails at k = {k}: |A_c^k| = {norm} > {bound}")]
    CertificateViolated { k: usize, norm: f64, bound: f64 },
    #[error("invalid certificate parameters alpha = {alpha}, mu = {mu}")]
    InvalidCertificate { alpha: f64, mu: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Robustness radius; `Unconstrained` when the defining matrix vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Finite(f64),
    Unconstrained,
}

impl std::fmt::Display for Radius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Radius::Finite(r) => write!(f, "{r}"),
            Radius::Unconstrained => write!(f, "inf"),
        }
    }
}

impl Radius {
    pub fn as_f64(&self) -> f64 {
        match self {
            Radius::Finite(r) => *r,
            Radius::Unconstrained => f64::INFINITY,
        }
    }
}

/// `Aᵀ𝒫B (Bᵀ𝒫B)⁻¹ Bᵀ𝒫A`, also returning `(Bᵀ𝒫B)⁻¹ Bᵀ𝒫A`.
fn projected(a: &Mat, b: &Mat, p: &Mat) -> Result<(Mat, Mat), RiccatiError> {
    let bt_p = &b.transpose() * p;
    let btpb = &bt_p * b;
    let k = solve(&btpb, &(&bt_p * a)).map_err(|_| RiccatiError::RankDeficientB)?;
    let term = &(&(&a.transpose() * p) * b) * &k;
    Ok((term.symmetrize(), k))
}

fn check_dims(a: &Mat, b: &Mat, q: &SpdMat) -> Result<(), RiccatiError> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n || q.dim() != n {
        return Err(RiccatiError::Dimension(format!(
            "A is {}x{}, B is {}x{}, Q is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            q.dim(),
            q.dim()
        )));
    }
    if b.cols() == 0 || b.cols() > n {
        return Err(RiccatiError::RankDeficientB);
    }
    let gram = sym_eigen(&(&b.transpose() * b))?;
    if gram.min() <= 1e-12 * gram.max().max(f64::MIN_POSITIVE) {
        return Err(RiccatiError::RankDeficientB);
    }
    Ok(())
}

/// `‖Aᵀ𝒫A − 𝒫 + 𝒬 − Aᵀ𝒫B(Bᵀ𝒫B)⁻¹Bᵀ𝒫A‖_F`.
pub fn riccati_residual(a: &Mat, b: &Mat, q: &SpdMat, p: &Mat) -> Result<f64, RiccatiError> {
    let (term, _) = projected(a, b, p)?;
    let r = &(&(&(&(&a.transpose() * p) * a) - p) + q.as_mat()) - &term;
    Ok(r.frobenius())
}

/// Fixed-point iteration from `𝒫₀ = 𝒬`.
pub fn solve_riccati_like(a: &Mat, b: &Mat, q: &SpdMat) -> Result<SpdMat, RiccatiError> {
    check_dims(a, b, q)?;
    let mut p = q.as_mat().clone();
    let mut change = f64::INFINITY;
    for _ in 0..RICCATI_MAX_ITER {
        let (term, _) = projected(a, b, &p)?;
        let next = (&(&(&(&a.transpose() * &p) * a) + q.as_mat()) - &term).symmetrize();
        if !next.is_finite() {
            break;
        }
        change = (&next - &p).max_abs();
        let scale = p.max_abs();
        p = next;
        if change <= RICCATI_TOL * scale {
            return Ok(SpdMat::new(p)?);
        }
    }
    Err(RiccatiError::NoConvergence { iterations: RICCATI_MAX_ITER, change })
}

/// `r = σ_max(𝒬^{-1/2} Aᵀ𝒫B(Bᵀ𝒫B)⁻¹Bᵀ𝒫A 𝒬^{-1/2})^{-1/2}`.
pub fn robustness_radius(a: &Mat, b: &Mat, p: &SpdMat, q: &SpdMat) -> Result<Radius, RiccatiError> {
    let (term, _) = projected(a, b, p.as_mat())?;
    let (_, q_isqrt) = q.sqrt_and_inv_sqrt()?;
    let s = sigma_max(&(&(&q_isqrt * &term) * &q_isqrt))?;
    if s == 0.0 {
        Ok(Radius::Unconstrained)
    } else {
        Ok(Radius::Finite(s.powf(-0.5)))
    }
}

/// `|A_cᵏ| ≤ α μᵏ` for `k = 0..=horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCertificate {
    pub alpha: f64,
    pub mu: f64,
    pub horizon: usize,
}

impl DecayCertificate {
    /// `α / (1 − μ)`.
    pub fn gain(&self) -> f64 {
        self.alpha / (1.0 - self.mu)
    }

    pub fn envelope(&self, k: usize) -> f64 {
        self.alpha * self.mu.powi(k as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertificateSpec {
    Fit { horizon: usize },
    Given { alpha: f64, mu: f64, horizon: usize },
}

/// Induced 2-norms `|Mᵏ|` for `k = 0..=horizon`.
pub fn power_norms(m: &Mat, horizon: usize) -> Result<Vec<f64>, RiccatiError> {
    let mut out = Vec::with_capacity(horizon + 1);
    let mut pk = Mat::identity(m.rows());
    for k in 0..=horizon {
        if k > 0 {
            pk = &pk * m;
        }
        out.push(sigma_max(&pk)?);
    }
    Ok(out)
}

fn alpha_for(norms: &[f64], mu: f64) -> f64 {
    norms
        .iter()
        .enumerate()
        .map(|(k, n)| if *n == 0.0 { 0.0 } else { n / mu.powi(k as i32) })
        .fold(1.0, f64::max)
}

/// Smallest `α ≥ 1` per grid point `μ ∈ [ρ, 1)`, keeping the pair minimizing `α/(1−μ)`.
pub fn fit_decay_certificate(a_c: &Mat, horizon: usize) -> Result<DecayCertificate, RiccatiError> {
    let rho = spectral_radius(a_c)?;
    if rho >= 1.0 {
        return Err(RiccatiError::SpectralRadiusNotContractive(rho));
    }
    let norms = power_norms(a_c, horizon)?;
    let mut best: Option<DecayCertificate> = None;
    for j in 0..CERTIFICATE_GRID {
        let mu = rho + (1.0 - rho) * j as f64 / CERTIFICATE_GRID as f64;
        if mu <= 0.0 {
            continue;
        }
        let alpha = alpha_for(&norms, mu);
        let cand = DecayCertificate { alpha, mu, horizon };
        if alpha.is_finite() && best.is_none_or(|b| cand.gain() < b.gain()) {
            best = Some(cand);
        }
    }
    best.ok_or(RiccatiError::SpectralRadiusNotContractive(rho))
}

pub fn verify_decay_certificate(a_c: &Mat, cert: &DecayCertificate) -> Result<(), RiccatiError> {
    if !(cert.alpha > 0.0) || !(cert.mu >= 0.0 && cert.mu < 1.0) {
        return Err(RiccatiError::InvalidCertificate { alpha: cert.alpha, mu: cert.mu });
    }
    for (k, norm) in power_norms(a_c, cert.horizon)?.into_iter().enumerate() {
        let bound = cert.envelope(k);
        if norm > bound * (1.0 + 1e-12) {
            return Err(RiccatiError::CertificateViolated { k, norm, bound });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiDesign {
    pub q: SpdMat,
    pub p: SpdMat,
    pub k: Mat,
    pub r: Radius,
    pub circle: Circle,
    pub c: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub a_c: Mat,
    pub b_c: Mat,
    pub spectral_radius: f64,
    pub certificate: DecayCertificate,
}

/// `A_c = I_N⊗A − cΓ⊗BK`, `B_c = cΓ⊗BK`.
pub fn closed_loop_matrices(a: &Mat, b: &Mat, k: &Mat, gamma: &Mat, c: f64) -> (Mat, Mat) {
    let b_c = kron(&gamma.scale(c), &(b * k));
    let a_c = &kron(&Mat::identity(gamma.rows()), a) - &b_c;
    (a_c, b_c)
}

pub fn design(
    a: &Mat,
    b: &Mat,
    q: &SpdMat,
    gamma: &GammaMatrix,
    circle: Circle,
    certificate: CertificateSpec,
) -> Result<(RiccatiDesign, ClosedLoop), RiccatiError> {
    let p = solve_riccati_like(a, b, q)?;
    let residual = riccati_residual(a, b, q, p.as_mat())?;
    let r = robustness_radius(a, b, &p, q)?;
    if !circle_condition(&gamma.eigenvalues, circle, r) {
        return Err(RiccatiError::CircleConditionViolated {
            ratio: circle.ratio(),
            radius: r,
            enclosed: gamma.eigenvalues.iter().all(|z| circle.strictly_contains(*z)),
        });
    }
    let (_, k) = projected(a, b, p.as_mat())?;
    let c = 1.0 / circle.c0;
    let (a_c, b_c) = closed_loop_matrices(a, b, &k, &gamma.gamma, c);
    let rho = linalg::spectral_radius(&a_c)?;
    if rho >= 1.0 {
        return Err(RiccatiError::SpectralRadiusNotContractive(rho));
    }
    let certificate = match certificate {
        CertificateSpec::Fit { horizon } => fit_decay_certificate(&a_c, horizon)?,
        CertificateSpec::Given { alpha, mu, horizon } => {
            let cert = DecayCertificate { alpha, mu, horizon };
            verify_decay_certificate(&a_c, &cert)?;
            cert
        }
    };
    Ok((
        RiccatiDesign { q: q.clone(), p, k, r, circle, c, residual },
        ClosedLoop { a_c, b_c, spectral_radius: rho, certificate },
    ))
}
