use crate::linalg::{cholesky_raw, lower_inverse, sym_eigen, Mat};

use super::conic::ConicProgram;

/// Interior-point stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative primal and dual infeasibility.
    pub tol: f64,
    /// Relative duality gap.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Iterations over which the gap must shrink tenfold.
    pub stall_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, gap_tol: 1e-6, max_iter: 100, step_fraction: 0.98, stall_window: 20 }
    }
}

/// Named tolerance presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TolProfile {
    Strict,
    #[default]
    Default,
    Loose,
}

impl TolProfile {
    pub fn options(self) -> SolverOptions {
        let base = SolverOptions::default();
        match self {
            TolProfile::Strict => SolverOptions { tol: 1e-10, gap_tol: 1e-10, max_iter: 150, ..base },
            TolProfile::Default => SolverOptions { tol: 1e-9, gap_tol: 1e-9, ..base },
            TolProfile::Loose => base,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strict" => Some(Self::Strict),
            "default" => Some(Self::Default),
            "loose" => Some(Self::Loose),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Relative residuals at the returned iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// `cᵀx`.
    pub objective: f64,
    /// Lower bound from the dual certificate.
    pub dual_objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    /// Smallest eigenvalue over all cone slacks at `x`.
    pub min_slack: f64,
}

struct Block {
    dim: usize,
    c: Mat,
    a: Vec<(usize, Mat)>,
}

fn blocks_of(p: &ConicProgram) -> Vec<Block> {
    let mut out: Vec<Block> = p
        .psd
        .iter()
        .map(|b| Block { dim: b.dim, c: b.constant.clone(), a: b.coeffs.clone() })
        .collect();
    for &j in &p.orthant {
        out.push(Block { dim: 1, c: Mat::zeros(1, 1), a: vec![(j, Mat::scalar(-1.0))] });
    }
    out
}

fn adjoint(blocks: &[Block], y: &[f64]) -> Vec<Mat> {
    blocks
        .iter()
        .map(|b| {
            let mut s = Mat::zeros(b.dim, b.dim);
            for (i, a) in &b.a {
                if y[*i] != 0.0 {
                    s = &s + &a.scale(y[*i]);
                }
            }
            s
        })
        .collect()
}

fn apply(blocks: &[Block], x: &[Mat], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (b, xb) in blocks.iter().zip(x) {
        for (i, a) in &b.a {
            out[*i] += a.dot(xb);
        }
    }
    out
}

fn dot_all(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob_all(a: &[Mat]) -> f64 {
    a.iter().map(|x| x.dot(x)).sum::<f64>().sqrt()
}

/// Largest `α ≤ 1/frac` keeping `L Lᵀ + α·d` in the cone, times `frac`, capped at 1.
fn step_length(l_inv: &Mat, d: &Mat, frac: f64) -> Option<f64> {
    let t = &(l_inv * d) * &l_inv.transpose();
    let lmin = sym_eigen(&t).ok()?.min();
    if lmin >= 0.0 {
        Some(1.0)
    } else {
        Some((-frac / lmin).min(1.0))
    }
}

struct Scaling {
    g: Mat,
    g_inv: Mat,
    w: Mat,
    d: Vec<f64>,
    lx_inv: Mat,
    lz_inv: Mat,
}

fn nt_scaling(x: &Mat, z: &Mat) -> Option<Scaling> {
    let lx = cholesky_raw(x).ok()?;
    let lz = cholesky_raw(z).ok()?;
    let k = &lz.transpose() * &lx;
    let eig = sym_eigen(&(&k.transpose() * &k)).ok()?;
    let d: Vec<f64> = eig.values.iter().map(|v| v.max(f64::MIN_POSITIVE).sqrt()).collect();
    let n = x.rows();
    let v = &eig.vectors;
    let lx_inv = lower_inverse(&lx);
    let mut g = &lx * v;
    let mut g_inv_left = v.transpose();
    for j in 0..n {
        let s = d[j].sqrt();
        for i in 0..n {
            g[(i, j)] /= s;
            g_inv_left[(j, i)] *= s;
        }
    }
    let g_inv = &g_inv_left * &lx_inv;
    let w = (&g * &g.transpose()).symmetrize();
    Some(Scaling { g, g_inv, w, d, lx_inv, lz_inv: lower_inverse(&lz) })
}

/// Solves the scaled Newton system for a given complementarity target.
fn direction(
    blocks: &[Block],
    scal: &[Scaling],
    m_chol: &Mat,
    rp: &[f64],
    rd: &[Mat],
    rc: &[Mat],
) -> (Vec<Mat>, Vec<f64>, Vec<Mat>) {
    let m = rp.len();
    let wrdw: Vec<Mat> = scal.iter().zip(rd).map(|(s, r)| &(&s.w * r) * &s.w).collect();
    let diff: Vec<Mat> = rc.iter().zip(&wrdw).map(|(a, b)| a - b).collect();
    let a_diff = apply(blocks, &diff, m);
    let rhs: Vec<f64> = rp.iter().zip(&a_diff).map(|(a, b)| a - b).collect();
    let dy = chol_solve(m_chol, &rhs);
    let aty = adjoint(blocks, &dy);
    let dz: Vec<Mat> = rd.iter().zip(&aty).map(|(r, a)| r - a).collect();
    let dx: Vec<Mat> = rc
        .iter()
        .zip(&dz)
        .zip(scal)
        .map(|((r, z), s)| (r - &(&(&s.w * z) * &s.w)).symmetrize())
        .collect();
    (dx, dy, dz)
}

fn chol_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Primal-dual interior-point method with Nesterov-Todd scaling and
/// Mehrotra predictor-corrector steps.
///
/// Internally the program is the dual of `min ⟨C, X⟩ s.t. A(X) = −c, X ⪰ 0`.
pub fn solve_conic(p: &ConicProgram, opts: &SolverOptions) -> ConicSolution {
    let blocks = blocks_of(p);
    let m = p.scalar_count;
    let b: Vec<f64> = p.objective.iter().map(|v| -v).collect();
    let n_total: usize = blocks.iter().map(|b| b.dim).sum();
    let norm_b = crate::linalg::norm(&b);
    let norm_c = blocks.iter().map(|b| b.c.dot(&b.c)).sum::<f64>().sqrt();

    let mut x: Vec<Mat> = Vec::with_capacity(blocks.len());
    let mut z: Vec<Mat> = Vec::with_capacity(blocks.len());
    for blk in &blocks {
        let n = blk.dim as f64;
        let mut xi = 10f64.max(n.sqrt());
        let mut max_a = 0f64;
        for (i, a) in &blk.a {
            let na = a.frobenius();
            xi = xi.max(n * (1.0 + b[*i].abs()) / (1.0 + na));
            max_a = max_a.max(na);
        }
        let eta = 10f64.max(n.sqrt()).max(max_a).max(blk.c.frobenius());
        x.push(Mat::identity(blk.dim).scale(xi));
        z.push(Mat::identity(blk.dim).scale(eta));
    }
    let mut y = vec![0.0; m];

    let mut history: Vec<f64> = Vec::new();
    let mut status = SolveStatus::NumericalFailure;
    let mut residuals = KktResiduals::default();
    let mut iterations = 0;
    let x0_norm = frob_all(&x);

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let ax = apply(&blocks, &x, m);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bi, a)| bi - a).collect();
        let aty = adjoint(&blocks, &y);
        let rd: Vec<Mat> = blocks.iter().zip(&z).zip(&aty).map(|((blk, zb), a)| &(&blk.c - zb) - a).collect();
        let xz = dot_all(&x, &z);
        let mu = xz / n_total as f64;
        let pobj = blocks.iter().zip(&x).map(|(blk, xb)| blk.c.dot(xb)).sum::<f64>();
        let dobj: f64 = b.iter().zip(&y).map(|(bi, yi)| bi * yi).sum();
        let pinf = crate::linalg::norm(&rp) / (1.0 + norm_b);
        let dinf = frob_all(&rd) / (1.0 + norm_c);
        let gap = xz.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        residuals = KktResiduals { primal: dinf, dual: pinf, gap };
        if pinf <= opts.tol && dinf <= opts.tol && gap <= opts.gap_tol {
            status = SolveStatus::Optimal;
            break;
        }
        history.push(gap);
        if iter >= opts.stall_window && gap > 0.1 * history[iter - opts.stall_window] && dinf > opts.tol {
            status = SolveStatus::Infeasible;
            break;
        }
        if frob_all(&x) > 1e12 * (1.0 + x0_norm) && dinf > opts.tol {
            status = SolveStatus::Infeasible;
            break;
        }
        if iter == opts.max_iter {
            break;
        }

        let Some(scal) = x.iter().zip(&z).map(|(xb, zb)| nt_scaling(xb, zb)).collect::<Option<Vec<_>>>() else {
            break;
        };

        // Schur complement M_ij = Σ_b ⟨A_bi, W A_bj W⟩.
        let mut schur = Mat::zeros(m, m);
        for (blk, s) in blocks.iter().zip(&scal) {
            let waw: Vec<Mat> = blk.a.iter().map(|(_, a)| &(&s.w * a) * &s.w).collect();
            for (p_idx, (i, ai)) in blk.a.iter().enumerate() {
                for (q_idx, (j, _)) in blk.a.iter().enumerate().skip(p_idx) {
                    let v = ai.dot(&waw[q_idx]);
                    schur[(*i, *j)] += v;
                    if i != j {
                        schur[(*j, *i)] += v;
                    }
                }
            }
        }
        let schur = schur.symmetrize();
        let diag_max = schur.diagonal().iter().fold(0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut m_chol = None;
        let mut reg = 0.0;
        for _ in 0..8 {
            let mut mm = schur.clone();
            for i in 0..m {
                mm[(i, i)] += reg;
            }
            if let Ok(l) = cholesky_raw(&mm) {
                m_chol = Some(l);
                break;
            }
            reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
        }
        let Some(m_chol) = m_chol else { break };

        // Predictor.
        let rc_aff: Vec<Mat> = x.iter().map(|xb| xb.scale(-1.0)).collect();
        let (dxa, _, dza) = direction(&blocks, &scal, &m_chol, &rp, &rd, &rc_aff);
        let mut ap = 1f64;
        let mut ad = 1f64;
        for (k, s) in scal.iter().enumerate() {
            ap = ap.min(step_length(&s.lx_inv, &dxa[k], 1.0).unwrap_or(0.0));
            ad = ad.min(step_length(&s.lz_inv, &dza[k], 1.0).unwrap_or(0.0));
        }
        let mut xz_aff = 0.0;
        for k in 0..blocks.len() {
            let xa = &x[k] + &dxa[k].scale(ap);
            let za = &z[k] + &dza[k].scale(ad);
            xz_aff += xa.dot(&za);
        }
        let mu_aff = xz_aff / n_total as f64;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // Corrector.
        let rc: Vec<Mat> = scal
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let n = blocks[k].dim;
                let dxs = &(&s.g_inv * &dxa[k]) * &s.g_inv.transpose();
                let dzs = &(&s.g.transpose() * &dza[k]) * &s.g;
                let cross = &(&dxs * &dzs) + &(&dzs * &dxs);
                let mut h = Mat::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut r = -0.5 * cross[(i, j)];
                        if i == j {
                            r += sigma * mu - s.d[i] * s.d[i];
                        }
                        h[(i, j)] = 2.0 * r / (s.d[i] + s.d[j]);
                    }
                }
                (&(&s.g * &h.symmetrize()) * &s.g.transpose()).symmetrize()
            })
            .collect();
        let (dx, dy, dz) = direction(&blocks, &scal, &m_chol, &rp, &rd, &rc);
        let mut ap = 1f64;
        let mut ad = 1f64;
        for (k, s) in scal.iter().enumerate() {
            ap = ap.min(step_length(&s.lx_inv, &dx[k], opts.step_fraction).unwrap_or(0.0));
            ad = ad.min(step_length(&s.lz_inv, &dz[k], opts.step_fraction).unwrap_or(0.0));
        }
        if ap <= 0.0 && ad <= 0.0 {
            break;
        }
        for k in 0..blocks.len() {
            x[k] = (&x[k] + &dx[k].scale(ap)).symmetrize();
            z[k] = (&z[k] + &dz[k].scale(ad)).symmetrize();
        }
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += ad * d;
        }
        if !y.iter().all(|v| v.is_finite()) {
            break;
        }
    }

    let aty = adjoint(&blocks, &y);
    let mut min_slack = f64::INFINITY;
    let mut worst_scaled = f64::INFINITY;
    for (blk, a) in blocks.iter().zip(&aty) {
        let s = &blk.c - a;
        let lmin = sym_eigen(&s).map(|e| e.min()).unwrap_or(f64::NAN);
        min_slack = min_slack.min(lmin);
        worst_scaled = worst_scaled.min(lmin / (1.0 + blk.c.max_abs()));
    }
    if status == SolveStatus::Optimal && !(worst_scaled >= -10.0 * opts.tol) {
        status = SolveStatus::NumericalFailure;
    }
    let objective = p.objective.iter().zip(&y).map(|(c, v)| c * v).sum();
    let dual_objective = -blocks.iter().zip(&x).map(|(blk, xb)| blk.c.dot(xb)).sum::<f64>();
    ConicSolution { status, x: y, objective, dual_objective, residuals, iterations, min_slack }
}
