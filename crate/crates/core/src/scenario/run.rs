//! Scenario execution, metrics and CSV output.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{InitialState, Mode, ScenarioConfig, SystemSpec};
use super::report::{MetricsReport, SyncMetrics};
use super::ScenarioError;
use crate::graph::smallest_ratio_circle;
use crate::linalg::{norm, vec_sub, Mat};
use crate::riccati::{self, power_norms, CertificateSpec, ClosedLoop, RiccatiDesign};
use crate::smf::{self, FilterState};
use crate::sync::{self, AgentSpec, DisturbanceBounds, GlobalErrorModel, World, WorldRecord};
use crate::system::Ellipsoid;

/// Quadratic-form slack allowed before a sample counts as outside an ellipsoid.
pub const CONTAINMENT_TOL: f64 = 1e-6;

/// Formats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One output file held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ScenarioError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| ScenarioError::Io { path: PathBuf::from(&self.file), message: e.to_string() };
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| ScenarioError::Io { path: PathBuf::from(&self.file), message: e.to_string() })
    }
}

/// Per-step log of a single filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub k: usize,
    pub x: Vec<f64>,
    pub state: FilterState,
    pub quad_pred: f64,
    pub quad_corr: f64,
}

impl FilterStep {
    pub fn error(&self) -> Vec<f64> {
        vec_sub(&self.x, &self.state.corrected.as_ref().expect("corrected").x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiAgentRun {
    pub design: RiccatiDesign,
    pub closed: ClosedLoop,
    pub model: GlobalErrorModel,
    pub records: Vec<WorldRecord>,
}

impl MultiAgentRun {
    /// `|δ_k| / μ̄`.
    pub fn delta_bar(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta_norm() / self.model.mu_bar).collect()
    }

    /// Normalized disagreement bound `(αμᵏ|δ₀| + μ̄(...)) / μ̄`.
    pub fn bound_bar(&self) -> Vec<f64> {
        let d0 = self.records[0].delta_norm();
        self.records.iter().map(|r| self.model.disagreement_bound(d0, r.k) / self.model.mu_bar).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunDetail {
    Single(Vec<FilterStep>),
    Multi(Box<MultiAgentRun>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub report: MetricsReport,
    pub detail: RunDetail,
    pub tables: Vec<CsvTable>,
}

impl ScenarioRun {
    /// Writes every table into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
        let io = |p: &Path, e: std::io::Error| ScenarioError::Io { path: p.to_path_buf(), message: e.to_string() };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut out = Vec::new();
        for t in &self.tables {
            let path = dir.join(&t.file);
            std::fs::write(&path, t.to_bytes()?).map_err(|e| io(&path, e))?;
            out.push(path);
        }
        Ok(out)
    }
}

fn draw_initial<R: Rng>(x0: &InitialState, rng: &mut R) -> Vec<f64> {
    match x0 {
        InitialState::Fixed(x) => x.clone(),
        InitialState::Uniform { low, high } => {
            low.iter().zip(high).map(|(l, h)| if l < h { rng.gen_range(*l..*h) } else { *l }).collect()
        }
    }
}

fn cols(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn push_vec(row: &mut Vec<String>, v: &[f64]) {
    row.extend(v.iter().map(|x| fmt17(*x)));
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate().map_err(ScenarioError::Validation)?;
    match cfg.mode {
        Mode::SingleFilter => run_single(cfg),
        Mode::MultiAgent => run_multi(cfg),
    }
}

fn run_single(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    let ag = &cfg.agents[0];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sys = cfg.system.build(&ag.q, &ag.r, cfg.horizon)?;
    let opts = cfg.tol_profile.options();
    let prior = Ellipsoid::new(ag.x_hat0.clone(), ag.p0.clone())?;
    let m = sys.dims().m;
    let mut x = draw_initial(&ag.x0, &mut rng);
    let mut st = FilterState::initial(&prior);
    let mut steps = Vec::with_capacity(cfg.horizon + 1);
    let fail = |k: usize, source| ScenarioError::Step { k, agent: None, message: format!("{source}") };
    for k in 0..=cfg.horizon {
        let model = sys.at(k)?;
        let v = ag.v.sample(k, &model.r, &mut rng)?;
        let y = sys.measure(k, &x, &v)?;
        let quad_pred = st.predicted().quad_form(&x);
        let corrected = smf::correct(&sys, &st, &y, &opts).map_err(|e| fail(k, e))?;
        let quad_corr = corrected.corrected_ellipsoid().expect("corrected").quad_form(&x);
        steps.push(FilterStep { k, x: x.clone(), state: corrected.clone(), quad_pred, quad_corr });
        if k < cfg.horizon {
            let w = ag.w.sample(k, &model.q, &mut rng)?;
            let u = vec![0.0; m];
            x = sys.step(k, &x, &u, &w)?;
            st = smf::predict(&sys, &corrected, &u, &opts).map_err(|e| fail(k, e))?;
        }
    }

    let n = prior.dim();
    let t = steps.len() as f64;
    let errors: Vec<Vec<f64>> = steps.iter().map(|s| s.error()).collect();
    let mean_abs_error = errors.iter().map(|e| norm(e)).sum::<f64>() / t;
    let mse_per_axis = (0..n).map(|i| errors.iter().map(|e| e[i] * e[i]).sum::<f64>() / t).collect();
    let quads = steps.iter().flat_map(|s| [s.quad_pred, s.quad_corr]);
    let last = steps.last().expect("at least one step");
    let report = MetricsReport {
        name: cfg.name.clone(),
        mode: cfg.mode,
        horizon: cfg.horizon,
        samples: steps.len(),
        seed: cfg.seed,
        mean_abs_error,
        mse_per_axis,
        final_trace_pred: vec![last.state.p_pred.trace()],
        final_trace_corr: vec![last.state.corrected.as_ref().expect("corrected").p.trace()],
        containment_violations: quads.clone().filter(|q| !(*q <= 1.0 + CONTAINMENT_TOL)).count(),
        max_quad_form: quads.fold(0.0, f64::max),
        agents: 1,
        sync: None,
    };

    let mut header = vec!["k".to_string()];
    for p in ["x", "x_pred", "x_corr", "e", "bound"] {
        header.extend(cols(p, n));
    }
    header.extend(["trace_pred", "trace_corr", "quad_pred", "quad_corr", "tau_1", "tau_2", "tau_3", "tau_4"].map(String::from));
    let rows = steps
        .iter()
        .zip(&errors)
        .map(|(s, e)| {
            let rec = s.state.record().expect("corrected");
            let mut row = vec![s.k.to_string()];
            push_vec(&mut row, &s.x);
            push_vec(&mut row, &rec.x_pred);
            push_vec(&mut row, &rec.x_corr);
            push_vec(&mut row, e);
            push_vec(&mut row, &rec.bounds);
            push_vec(&mut row, &[rec.trace_pred, rec.trace_corr, s.quad_pred, s.quad_corr]);
            push_vec(&mut row, &rec.tau);
            row
        })
        .collect();
    let trace = CsvTable { file: "trace_agent_1.csv".into(), header, rows };
    let global = CsvTable {
        file: "global.csv".into(),
        header: ["k", "e_norm", "trace_pred", "trace_corr"].map(String::from).to_vec(),
        rows: steps
            .iter()
            .zip(&errors)
            .map(|(s, e)| {
                let c = s.state.corrected.as_ref().expect("corrected");
                vec![s.k.to_string(), fmt17(norm(e)), fmt17(s.state.p_pred.trace()), fmt17(c.p.trace())]
            })
            .collect(),
    };
    let design = system_table(&cfg.system, cfg.horizon, &sys)?;
    let tables = vec![report.to_table(), trace, global, design];
    Ok(ScenarioRun { report, detail: RunDetail::Single(steps), tables })
}

/// Discretized system matrices per step, for the single-filter design file.
fn system_table(spec: &SystemSpec, horizon: usize, sys: &crate::system::LtvSystem) -> Result<CsvTable, ScenarioError> {
    let d = sys.dims();
    let mut header = vec!["k".to_string()];
    for (name, r, c) in [("a", d.n, d.n), ("g", d.n, d.w)] {
        for i in 1..=r {
            for j in 1..=c {
                header.push(format!("{name}_{i}{j}"));
            }
        }
    }
    let steps = match spec {
        SystemSpec::Mathieu(_) => horizon + 1,
        SystemSpec::Matrices { .. } => 1,
    };
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let m = sys.at(k)?;
        let mut row = vec![k.to_string()];
        push_vec(&mut row, m.a.as_slice());
        push_vec(&mut row, m.g.as_slice());
        rows.push(row);
    }
    Ok(CsvTable { file: "design.csv".into(), header, rows })
}

fn run_multi(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    let SystemSpec::Matrices { a, b, g, .. } = &cfg.system else {
        unreachable!("validated: multi-agent systems are matrix systems")
    };
    let graph = cfg.graph.clone().expect("validated");
    let dcfg = cfg.design.as_ref().expect("validated");
    let gamma = graph.gamma()?;
    let circle = match dcfg.circle {
        Some(c) => c,
        None => smallest_ratio_circle(&gamma.eigenvalues).ok_or(ScenarioError::NoEnclosingCircle)?,
    };
    let spec = match dcfg.certificate {
        Some((alpha, mu)) => CertificateSpec::Given { alpha, mu, horizon: cfg.horizon },
        None => CertificateSpec::Fit { horizon: cfg.horizon },
    };
    let (design, closed) = riccati::design(a, b, &dcfg.q, &gamma, circle, spec)?;

    let required = DisturbanceBounds::from_agents(
        &cfg.agents.iter().map(|a| a.p0.as_mat().clone()).collect::<Vec<_>>(),
        &cfg.agents.iter().map(|a| a.q.as_mat().clone()).collect::<Vec<_>>(),
        &cfg.agents.iter().map(|a| a.r.as_mat().clone()).collect::<Vec<_>>(),
    )?;
    let bounds = DisturbanceBounds {
        p0: dcfg.p0.unwrap_or(required.p0),
        q_bar: dcfg.q_bar.unwrap_or(required.q_bar),
        r_bar: dcfg.r_bar.unwrap_or(required.r_bar),
    };
    let model = GlobalErrorModel::new(&closed, g, cfg.agents.len(), closed.certificate, bounds, required)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut specs = Vec::with_capacity(cfg.agents.len());
    for ag in &cfg.agents {
        specs.push(AgentSpec {
            system: cfg.system.build(&ag.q, &ag.r, cfg.horizon)?,
            x0: draw_initial(&ag.x0, &mut rng),
            prior: Ellipsoid::new(ag.x_hat0.clone(), ag.p0.clone())?,
            w: ag.w.clone(),
            v: ag.v.clone(),
        });
    }
    let leader0 = cfg.leader_x0.clone().expect("validated");
    let mut world = World::new(graph, design.clone(), specs, leader0, rng, cfg.tol_profile.options())?;
    let records = world.run(cfg.horizon)?;
    let run = MultiAgentRun { design, closed, model, records };
    let report = multi_report(cfg, &run);
    let tables = multi_tables(&run, &report)?;
    Ok(ScenarioRun { report, detail: RunDetail::Multi(Box::new(run)), tables })
}

fn multi_report(cfg: &ScenarioConfig, run: &MultiAgentRun) -> MetricsReport {
    let recs = &run.records;
    let n_agents = cfg.agents.len();
    let n = recs[0].leader.len();
    let t = recs.len() as f64;
    let errs: Vec<&Vec<f64>> = recs.iter().flat_map(|r| r.agents.iter().map(|a| &a.e)).collect();
    let count = errs.len() as f64;
    let mean_abs_error = errs.iter().map(|e| norm(e)).sum::<f64>() / count;
    let mse_per_axis = (0..n).map(|i| errs.iter().map(|e| e[i] * e[i]).sum::<f64>() / count).collect();
    let quads: Vec<f64> = recs.iter().flat_map(|r| r.agents.iter().flat_map(|a| [a.quad_pred, a.quad_corr])).collect();
    let last = recs.last().expect("nonempty");

    let delta_bar = run.delta_bar();
    let bound_bar = run.bound_bar();
    let d0 = recs[0].delta_norm();
    let sups = sync::running_sup(recs);
    let envelope_violations = recs
        .iter()
        .zip(&sups)
        .filter(|(r, (e, w))| r.delta_norm() > run.model.iss_envelope(d0, *e, *w, r.k) * (1.0 + 1e-12))
        .count();
    let sync = SyncMetrics {
        mean_delta_bar: delta_bar.iter().sum::<f64>() / t,
        rms_delta_bar: (delta_bar.iter().map(|d| d * d).sum::<f64>() / t).sqrt(),
        final_delta_bar: *delta_bar.last().expect("nonempty"),
        normalized_limit: run.model.normalized_limit(),
        bound_violations: delta_bar.iter().zip(&bound_bar).filter(|(d, b)| d > b).count(),
        envelope_violations,
        radius: run.design.r.as_f64(),
        coupling: run.design.c,
        c0: run.design.circle.c0,
        r0: run.design.circle.r0,
        spectral_radius: run.closed.spectral_radius,
        alpha: run.model.certificate.alpha,
        mu: run.model.certificate.mu,
        mu_bar: run.model.mu_bar,
        b_c_norm: run.model.b_c_norm,
        riccati_residual: run.design.residual,
    };
    MetricsReport {
        name: cfg.name.clone(),
        mode: cfg.mode,
        horizon: cfg.horizon,
        samples: recs.len(),
        seed: cfg.seed,
        mean_abs_error,
        mse_per_axis,
        final_trace_pred: last.agents.iter().map(|a| a.trace_pred).collect(),
        final_trace_corr: last.agents.iter().map(|a| a.trace_corr).collect(),
        containment_violations: quads.iter().filter(|q| !(**q <= 1.0 + CONTAINMENT_TOL)).count(),
        max_quad_form: quads.iter().copied().fold(0.0, f64::max),
        agents: n_agents,
        sync: Some(sync),
    }
}

fn multi_tables(run: &MultiAgentRun, report: &MetricsReport) -> Result<Vec<CsvTable>, ScenarioError> {
    let recs = &run.records;
    let n = recs[0].leader.len();
    let n_agents = recs[0].agents.len();
    let m = recs[0].agents[0].u.len();
    let mut tables = vec![report.to_table()];

    for i in 0..n_agents {
        let mut header = vec!["k".to_string()];
        for p in ["x", "x_pred", "x_corr", "e", "bound"] {
            header.extend(cols(p, n));
        }
        header.extend(["trace_pred", "trace_corr", "quad_pred", "quad_corr"].map(String::from));
        header.extend(cols("eps", n));
        header.extend(cols("u", m));
        let rows = recs
            .iter()
            .map(|r| {
                let a = &r.agents[i];
                let mut row = vec![r.k.to_string()];
                for v in [&a.x, &a.x_pred, &a.x_corr, &a.e, &a.bounds] {
                    push_vec(&mut row, v);
                }
                push_vec(&mut row, &[a.trace_pred, a.trace_corr, a.quad_pred, a.quad_corr]);
                push_vec(&mut row, &a.eps);
                push_vec(&mut row, &a.u);
                row
            })
            .collect();
        tables.push(CsvTable { file: format!("trace_agent_{}.csv", i + 1), header, rows });
    }

    let delta_bar = run.delta_bar();
    let bound_bar = run.bound_bar();
    let d0 = recs[0].delta_norm();
    let sups = sync::running_sup(recs);
    let mut header = vec!["k".to_string()];
    header.extend(cols("leader", n));
    header.extend(
        ["delta_norm", "delta_bar", "bound", "bound_bar", "envelope", "envelope_conservative"].map(String::from),
    );
    let rows = recs
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let mut row = vec![r.k.to_string()];
            push_vec(&mut row, &r.leader);
            let (e, w) = sups[j];
            push_vec(
                &mut row,
                &[
                    r.delta_norm(),
                    delta_bar[j],
                    run.model.disagreement_bound(d0, r.k),
                    bound_bar[j],
                    run.model.iss_envelope(d0, e, w, r.k),
                    run.model.iss_envelope_conservative(d0, r.k),
                ],
            );
            row
        })
        .collect();
    tables.push(CsvTable { file: "global.csv".into(), header, rows });

    let horizon = recs.len() - 1;
    let norms = power_norms(&run.closed.a_c, horizon)?;
    let cert = run.model.certificate;
    tables.push(CsvTable {
        file: "design.csv".into(),
        header: ["k", "ac_power_norm", "alpha_mu_k"].map(String::from).to_vec(),
        rows: norms.iter().enumerate().map(|(k, v)| vec![k.to_string(), fmt17(*v), fmt17(cert.envelope(k))]).collect(),
    });
    Ok(tables)
}

/// `|A_cᵏ|` sequence, exposed for callers plotting the certificate.
pub fn certificate_series(a_c: &Mat, horizon: usize) -> Result<Vec<f64>, ScenarioError> {
    Ok(power_norms(a_c, horizon)?)
}
