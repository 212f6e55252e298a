//! Leader-follower synchronization driven by set-membership estimates.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::InteractionGraph;
use crate::linalg::{kron, norm, sigma_max, vec_sub, LinalgError, Mat};
use crate::riccati::{ClosedLoop, DecayCertificate, RiccatiDesign};
use crate::sdp::SolverOptions;
use crate::smf::{self, FilterState, SmfError};
use crate::system::{DisturbanceRealization, Ellipsoid, LtvSystem, SystemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("agent {}, step {k}: {source}", agent + 1)]
    Filter { agent: usize, k: usize, source: SmfError },
    #[error("agent {}, step {k}: {source}", agent + 1)]
    System { agent: usize, k: usize, source: SystemError },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} = {value} is below the required {required}")]
    InvalidBound { what: &'static str, value: f64, required: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SyncError>;

/// `ε_i = Σ_j a_ij (x̂_j − x̂_i) + g_i (x⁰ − x̂_i)`.
pub fn tracking_error(graph: &InteractionGraph, estimates: &[Vec<f64>], leader: &[f64]) -> Vec<Vec<f64>> {
    let a = graph.adjacency();
    let g = graph.pinning();
    (0..graph.len())
        .map(|i| {
            let xi = &estimates[i];
            let mut e: Vec<f64> = leader.iter().zip(xi).map(|(l, x)| g[i] * (l - x)).collect();
            for (j, xj) in estimates.iter().enumerate() {
                let aij = a[(i, j)];
                if aij != 0.0 {
                    for (t, et) in e.iter_mut().enumerate() {
                        *et += aij * (xj[t] - xi[t]);
                    }
                }
            }
            e
        })
        .collect()
}

/// `u_i = c (1 + d_ii + g_i)⁻¹ K ε_i`.
pub fn control_input(design: &RiccatiDesign, graph: &InteractionGraph, eps: &[f64], i: usize) -> Vec<f64> {
    let d = graph.in_degree()[i];
    let s = design.c / (1.0 + d + graph.pinning()[i]);
    design.k.mul_vec(eps).into_iter().map(|v| s * v).collect()
}

/// `−c(Γ⊗BK) x̂ + c(Γ⊗BK)(1_N⊗x⁰)`, the stacked input term of the global dynamics.
pub fn global_input_term(gamma: &Mat, b: &Mat, k: &Mat, c: f64, estimates: &[f64], leader: &[f64]) -> Vec<f64> {
    let n_agents = gamma.rows();
    let bc = kron(&gamma.scale(c), &(b * k));
    let stacked_leader: Vec<f64> = (0..n_agents).flat_map(|_| leader.iter().copied()).collect();
    let diff = vec_sub(estimates, &stacked_leader);
    bc.mul_vec(&diff).into_iter().map(|v| -v).collect()
}

#[cfg(test)]
fn stack(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

/// Quantities of the global disagreement error system and its bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalErrorModel {
    pub a_c: Mat,
    pub b_c: Mat,
    pub b_c_norm: f64,
    pub g_norm: f64,
    pub n_agents: usize,
    pub certificate: DecayCertificate,
    /// `α √N / (1 − μ)`.
    pub mu_bar: f64,
    pub p0: f64,
    pub q_bar: f64,
    /// Carried for completeness; the bounds below do not depend on it.
    pub r_bar: f64,
}

/// Smallest admissible `(p₀, q̄, r̄)`: the largest induced norms over agents and steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceBounds {
    pub p0: f64,
    pub q_bar: f64,
    pub r_bar: f64,
}

impl DisturbanceBounds {
    pub fn from_agents(initial: &[Mat], q: &[Mat], r: &[Mat]) -> Result<Self> {
        let max = |ms: &[Mat]| -> Result<f64> { ms.iter().try_fold(0.0f64, |acc, m| Ok(acc.max(sigma_max(m)?))) };
        Ok(Self { p0: max(initial)?, q_bar: max(q)?, r_bar: max(r)? })
    }
}

impl GlobalErrorModel {
    /// Rejects `(p₀, q̄, r̄)` smaller than `required`.
    pub fn new(
        closed: &ClosedLoop,
        g: &Mat,
        n_agents: usize,
        certificate: DecayCertificate,
        bounds: DisturbanceBounds,
        required: DisturbanceBounds,
    ) -> Result<Self> {
        let tol = 1e-12;
        for (what, value, req) in [
            ("p0", bounds.p0, required.p0),
            ("q_bar", bounds.q_bar, required.q_bar),
            ("r_bar", bounds.r_bar, required.r_bar),
        ] {
            if value < req * (1.0 - tol) {
                return Err(SyncError::InvalidBound { what, value, required: req });
            }
        }
        let mu_bar = certificate.alpha * (n_agents as f64).sqrt() / (1.0 - certificate.mu);
        Ok(Self {
            a_c: closed.a_c.clone(),
            b_c: closed.b_c.clone(),
            b_c_norm: sigma_max(&closed.b_c)?,
            g_norm: sigma_max(g)?,
            n_agents,
            certificate,
            mu_bar,
            p0: bounds.p0,
            q_bar: bounds.q_bar,
            r_bar: bounds.r_bar,
        })
    }

    pub fn beta(&self, s: f64, k: usize) -> f64 {
        self.certificate.envelope(k) * s
    }

    pub fn gamma1(&self, s: f64) -> f64 {
        self.certificate.gain() * self.b_c_norm * s
    }

    pub fn gamma2(&self, s: f64) -> f64 {
        self.certificate.gain() * self.g_norm * s
    }

    /// `|B_c|√p₀ + |G|√q̄`, the limit of the normalized bound.
    pub fn normalized_limit(&self) -> f64 {
        self.b_c_norm * self.p0.sqrt() + self.g_norm * self.q_bar.sqrt()
    }

    /// `α μᵏ |δ₀| + μ̄ (|B_c|√p₀ + |G|√q̄)`.
    pub fn disagreement_bound(&self, delta0: f64, k: usize) -> f64 {
        self.beta(delta0, k) + self.mu_bar * self.normalized_limit()
    }

    /// `β(|δ₀|, k) + γ₁(‖e‖) + γ₂(‖w‖)`.
    pub fn iss_envelope(&self, delta0: f64, e_sup: f64, w_sup: f64, k: usize) -> f64 {
        self.beta(delta0, k) + self.gamma1(e_sup) + self.gamma2(w_sup)
    }

    /// Envelope with `‖e‖ ≤ √(p₀N)` and `‖w‖ ≤ √(q̄N)`.
    pub fn iss_envelope_conservative(&self, delta0: f64, k: usize) -> f64 {
        let n = self.n_agents as f64;
        self.iss_envelope(delta0, (self.p0 * n).sqrt(), (self.q_bar * n).sqrt(), k)
    }
}

/// One follower: its own model, initial truth, filter prior and disturbance generators.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub system: LtvSystem,
    pub x0: Vec<f64>,
    pub prior: Ellipsoid,
    pub w: DisturbanceRealization,
    pub v: DisturbanceRealization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub i: usize,
    pub x: Vec<f64>,
    pub filter: FilterState,
    pub u: Vec<f64>,
}

/// Per-agent data logged at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub x: Vec<f64>,
    pub x_pred: Vec<f64>,
    pub x_corr: Vec<f64>,
    /// `x − x̂_{k|k}`.
    pub e: Vec<f64>,
    pub bounds: Vec<f64>,
    pub trace_pred: f64,
    pub trace_corr: f64,
    pub quad_pred: f64,
    pub quad_corr: f64,
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Process disturbance applied after step `k`, absent at the final step.
    pub w: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldRecord {
    pub k: usize,
    pub leader: Vec<f64>,
    pub agents: Vec<AgentRecord>,
    /// `x^{(g)} − 1_N⊗x⁰`.
    pub delta: Vec<f64>,
}

impl WorldRecord {
    pub fn delta_norm(&self) -> f64 {
        norm(&self.delta)
    }

    pub fn stacked_error(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.e.iter().copied()).collect()
    }

    pub fn stacked_w(&self) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for a in &self.agents {
            out.extend_from_slice(a.w.as_ref()?);
        }
        Some(out)
    }
}

/// Leader, followers and the synchronous measure / correct / exchange / predict cycle.
pub struct World {
    graph: InteractionGraph,
    design: RiccatiDesign,
    specs: Vec<AgentSpec>,
    agents: Vec<AgentState>,
    leader: Vec<f64>,
    k: usize,
    rng: ChaCha8Rng,
    opts: SolverOptions,
}

impl World {
    pub fn new(
        graph: InteractionGraph,
        design: RiccatiDesign,
        specs: Vec<AgentSpec>,
        leader0: Vec<f64>,
        rng: ChaCha8Rng,
        opts: SolverOptions,
    ) -> Result<Self> {
        if specs.len() != graph.len() || specs.is_empty() {
            return Err(SyncError::Dimension(format!("{} agents for a graph of {}", specs.len(), graph.len())));
        }
        let n = leader0.len();
        for (i, s) in specs.iter().enumerate() {
            let d = s.system.dims();
            if d.n != n || s.x0.len() != n || s.prior.dim() != n {
                return Err(SyncError::Dimension(format!("agent {i} state dimension differs from the leader's {n}")));
            }
            if design.k.rows() != d.m || design.k.cols() != n {
                return Err(SyncError::Dimension(format!("gain K does not match agent {i}")));
            }
        }
        let m = design.k.rows();
        let agents = specs
            .iter()
            .enumerate()
            .map(|(i, s)| AgentState { i, x: s.x0.clone(), filter: FilterState::initial(&s.prior), u: vec![0.0; m] })
            .collect();
        Ok(Self { graph, design, specs, agents, leader: leader0, k: 0, rng, opts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn leader(&self) -> &[f64] {
        &self.leader
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Runs step `k`; with `advance` the truth, filters and leader move to `k + 1`.
    pub fn step_world(&mut self, advance: bool) -> Result<WorldRecord> {
        let k = self.k;
        let mut records = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let spec = &self.specs[i];
            let sys_err = |source| SyncError::System { agent: i, k, source };
            let step = spec.system.at(k).map_err(sys_err)?;
            let v = spec.v.sample(k, &step.r, &mut self.rng).map_err(sys_err)?;
            let y = spec.system.measure(k, &agent.x, &v).map_err(sys_err)?;
            let quad_pred = agent.filter.predicted().quad_form(&agent.x);
            agent.filter = smf::correct(&spec.system, &agent.filter, &y, &self.opts)
                .map_err(|source| SyncError::Filter { agent: i, k, source })?;
            let corr = agent.filter.corrected_ellipsoid().expect("just corrected");
            let rec = agent.filter.record().expect("just corrected");
            records.push(AgentRecord {
                x: agent.x.clone(),
                x_pred: rec.x_pred,
                e: vec_sub(&agent.x, &rec.x_corr),
                x_corr: rec.x_corr,
                bounds: rec.bounds,
                trace_pred: rec.trace_pred,
                trace_corr: rec.trace_corr,
                quad_pred,
                quad_corr: corr.quad_form(&agent.x),
                eps: Vec::new(),
                u: Vec::new(),
                v,
                w: None,
            });
        }

        let estimates: Vec<Vec<f64>> = records.iter().map(|r| r.x_corr.clone()).collect();
        let eps = tracking_error(&self.graph, &estimates, &self.leader);
        for (i, (agent, rec)) in self.agents.iter_mut().zip(records.iter_mut()).enumerate() {
            agent.u = control_input(&self.design, &self.graph, &eps[i], i);
            rec.eps = eps[i].clone();
            rec.u = agent.u.clone();
        }
        let delta: Vec<f64> = self.agents.iter().flat_map(|a| vec_sub(&a.x, &self.leader)).collect();
        let record = WorldRecord { k, leader: self.leader.clone(), agents: records, delta };
        if !advance {
            return Ok(record);
        }

        let mut record = record;
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let spec = &self.specs[i];
            let sys_err = |source| SyncError::System { agent: i, k, source };
            let step = spec.system.at(k).map_err(sys_err)?;
            let w = spec.w.sample(k, &step.q, &mut self.rng).map_err(sys_err)?;
            let next = spec.system.step(k, &agent.x, &agent.u, &w).map_err(sys_err)?;
            agent.filter = smf::predict(&spec.system, &agent.filter, &agent.u, &self.opts)
                .map_err(|source| SyncError::Filter { agent: i, k, source })?;
            agent.x = next;
            record.agents[i].w = Some(w);
        }
        let a = &self.specs[0].system.at(k).map_err(|source| SyncError::System { agent: 0, k, source })?.a;
        self.leader = a.mul_vec(&self.leader);
        self.k += 1;
        Ok(record)
    }

    /// Steps `k = 0..=horizon`, with no advance after the last one.
    pub fn run(&mut self, horizon: usize) -> Result<Vec<WorldRecord>> {
        (0..=horizon).map(|k| self.step_world(k < horizon)).collect()
    }
}

/// `δ_{k+1} = A_c δ_k + B_c e_k + (I_N⊗G) w_k` from logged errors and disturbances.
pub fn simulate_error_system(a_c: &Mat, b_c: &Mat, g: &Mat, records: &[WorldRecord]) -> Vec<Vec<f64>> {
    let Some(first) = records.first() else { return Vec::new() };
    let ig = kron(&Mat::identity(first.agents.len()), g);
    let mut out = vec![first.delta.clone()];
    for rec in records {
        let Some(w) = rec.stacked_w() else { break };
        let d = out.last().expect("nonempty");
        let next: Vec<f64> = a_c
            .mul_vec(d)
            .iter()
            .zip(b_c.mul_vec(&rec.stacked_error()))
            .zip(ig.mul_vec(&w))
            .map(|((a, b), c)| a + b + c)
            .collect();
        out.push(next);
    }
    out
}

/// Running supremum of `|e^{(g)}_j|` and `|w^{(g)}_j|` over `j ≤ k`.
pub fn running_sup(records: &[WorldRecord]) -> Vec<(f64, f64)> {
    let (mut e, mut w) = (0.0f64, 0.0f64);
    records
        .iter()
        .map(|r| {
            e = e.max(norm(&r.stacked_error()));
            if let Some(ws) = r.stacked_w() {
                w = w.max(norm(&ws));
            }
            (e, w)
        })
        .collect()
}
