//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smfsync::graph::{smallest_ratio_circle, Edge, InteractionGraph};
use smfsync::linalg::{Mat, SpdMat};
use smfsync::riccati::{self, CertificateSpec, Radius};
use smfsync::scenario::{
    self, AgentConfig, DesignConfig, InitialState, Mode, RunDetail, ScenarioConfig, ScenarioRun, SystemSpec,
};
use smfsync::sdp::{self, AffineExpr, LmiConstraint, Objective, SdpProblem, Sense, TolProfile};
use smfsync::sync::{self, AgentSpec, World};
use smfsync::system::{DisturbanceRealization, Ellipsoid, LtvSystem, StepModel};

const CONTAINMENT_TOL: f64 = 1e-6;

/// Writes straight to stderr so the verdict shows even for passing tests.
fn verdict(id: u32, title: &str, failures: &[String], detail: &str) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "criterion {id:>2} [{status}] {title}: {detail}");
    for f in failures.iter().take(10) {
        let _ = writeln!(err, "    {f}");
    }
    assert!(failures.is_empty(), "criterion {id} failed: {failures:?}");
}

fn na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min()
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<nalgebra::Complex<f64>> {
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 100_000).expect("Schur iteration converges");
    schur.complex_eigenvalues().iter().copied().collect()
}

fn rho(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn random_mat<R: Rng>(rng: &mut R, r: usize, c: usize, s: f64) -> Mat {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-s..s)).collect()).unwrap()
}

fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64, scale: f64) -> SpdMat {
    let x = random_mat(rng, n, n, 1.0);
    let m = &(&x * &x.transpose()).scale(scale) + &Mat::identity(n).scale(floor);
    SpdMat::new(m.symmetrize()).unwrap()
}

/// Point strictly inside `{x : (x − c)ᵀ P⁻¹ (x − c) ≤ 1}`.
fn inside<R: Rng>(rng: &mut R, center: &[f64], p: &SpdMat) -> Vec<f64> {
    let n = center.len();
    let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let len = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let r = rng.gen_range(0.0..0.95);
    u.iter_mut().for_each(|v| *v *= r / len);
    let chol = na(p.as_mat()).cholesky().unwrap().l();
    let d = chol * DVector::from_vec(u);
    center.iter().zip(d.iter()).map(|(c, v)| c + v).collect()
}

/// Half width of a box that fits inside the ellipsoid `{w : wᵀQ⁻¹w ≤ 1}`.
fn box_inside(q: &SpdMat) -> f64 {
    let lmin = min_eig(&na(q.as_mat()));
    0.999 * (lmin / q.dim() as f64).sqrt()
}

fn random_single_filter(rng: &mut ChaCha8Rng, idx: usize) -> ScenarioConfig {
    let n = rng.gen_range(2..=4);
    let p = rng.gen_range(1..=n);
    let w = rng.gen_range(1..=n);
    let a0 = random_mat(rng, n, n, 1.0);
    let target = rng.gen_range(0.6..1.1);
    let a = a0.scale(target / rho(&na(&a0)).max(1e-6));
    let q = random_spd(rng, w, 0.01, 0.05);
    let r = random_spd(rng, p, 0.01, 0.05);
    let x_hat0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let p0 = random_spd(rng, n, 0.2, 1.0);
    let x0 = inside(rng, &x_hat0, &p0);
    let (hw, hv) = (box_inside(&q), box_inside(&r));
    ScenarioConfig {
        name: format!("random-filter-{idx}"),
        mode: Mode::SingleFilter,
        system: SystemSpec::Matrices {
            a,
            b: Mat::zeros(n, 0),
            g: random_mat(rng, n, w, 1.0),
            c: random_mat(rng, p, n, 1.0),
            d: Mat::identity(p),
        },
        agents: vec![AgentConfig {
            x0: InitialState::Fixed(x0),
            x_hat0,
            p0,
            q,
            r,
            w: DisturbanceRealization::UniformBox { half_widths: vec![hw; w] },
            v: DisturbanceRealization::UniformBox { half_widths: vec![hv; p] },
        }],
        graph: None,
        design: None,
        leader_x0: None,
        horizon: 30,
        seed: idx as u64,
        tol_profile: TolProfile::Default,
        output: None,
    }
}

/// Leader-reachable digraph: a random tree from a pinned root plus extra edges.
fn random_graph<R: Rng>(rng: &mut R, n_agents: usize) -> InteractionGraph {
    let mut order: Vec<usize> = (0..n_agents).collect();
    for i in (1..n_agents).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut edges = Vec::new();
    for t in 1..n_agents {
        let parent = order[rng.gen_range(0..t)];
        edges.push(Edge { from: parent, to: order[t], weight: rng.gen_range(0.3..2.0) });
    }
    for _ in 0..rng.gen_range(0..=n_agents) {
        let (f, t) = (rng.gen_range(0..n_agents), rng.gen_range(0..n_agents));
        if f != t && !edges.iter().any(|e| e.from == f && e.to == t) {
            edges.push(Edge { from: f, to: t, weight: rng.gen_range(0.3..2.0) });
        }
    }
    let mut pinning = vec![0.0; n_agents];
    pinning[order[0]] = rng.gen_range(0.5..2.0);
    for g in pinning.iter_mut() {
        if *g == 0.0 && rng.gen_bool(0.2) {
            *g = rng.gen_range(0.3..1.5);
        }
    }
    InteractionGraph::from_edges(n_agents, &edges, pinning).unwrap()
}

fn rotation(theta: f64, scale: f64) -> Mat {
    Mat::from_rows(&[[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]]).scale(scale)
}

fn random_multi_agent(rng: &mut ChaCha8Rng, idx: usize) -> ScenarioConfig {
    loop {
        let n_agents = rng.gen_range(2..=4);
        let n = rng.gen_range(2..=4);
        let scale = rng.gen_range(0.8..1.05);
        let mut a = Mat::identity(n).scale(scale);
        a.set_block(0, 0, &rotation(rng.gen_range(0.1..1.5), scale));
        let graph = random_graph(rng, n_agents);
        let Some(circle) = smallest_ratio_circle(&graph.gamma().unwrap().eigenvalues) else { continue };
        if circle.ratio() * scale >= 0.97 {
            continue;
        }
        let q = random_spd(rng, n, 0.02, 0.05);
        let r = random_spd(rng, 1, 0.02, 0.05);
        let (hw, hv) = (box_inside(&q), box_inside(&r));
        let leader: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let agents = (0..n_agents)
            .map(|_| {
                let x_hat0: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let p0 = random_spd(rng, n, 0.5, 1.0);
                AgentConfig {
                    x0: InitialState::Fixed(inside(rng, &x_hat0, &p0)),
                    x_hat0,
                    p0,
                    q: q.clone(),
                    r: r.clone(),
                    w: DisturbanceRealization::UniformBox { half_widths: vec![hw; n] },
                    v: DisturbanceRealization::UniformBox { half_widths: vec![hv] },
                }
            })
            .collect();
        let mut c = vec![0.0; n];
        c[0] = 1.0;
        c.iter_mut().skip(1).for_each(|v| *v = rng.gen_range(-0.5..0.5));
        return ScenarioConfig {
            name: format!("random-sync-{idx}"),
            mode: Mode::MultiAgent,
            system: SystemSpec::Matrices { a, b: Mat::identity(n), g: Mat::identity(n), c: Mat::row(&c), d: Mat::identity(1) },
            agents,
            graph: Some(graph),
            design: Some(DesignConfig {
                q: SpdMat::scaled_identity(n, 0.1).unwrap(),
                circle: None,
                certificate: None,
                p0: None,
                q_bar: None,
                r_bar: None,
            }),
            leader_x0: Some(leader),
            horizon: 20,
            seed: idx as u64,
            tol_profile: TolProfile::Default,
            output: None,
        };
    }
}

/// Recomputes every quadratic form from the logged states and ellipsoids.
fn containment_failures(run: &ScenarioRun) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |what: &str, k: usize, x: &[f64], e: Ellipsoid| {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(e.center()).map(|(a, b)| a - b));
        let q = (diff.transpose() * na(e.shape().as_mat()).try_inverse().unwrap() * &diff)[(0, 0)];
        if !(q <= 1.0 + CONTAINMENT_TOL) {
            out.push(format!("{what} at k={k}: quadratic form {q:.6e}"));
        }
    };
    match &run.detail {
        RunDetail::Single(steps) => {
            for s in steps {
                check("prediction", s.k, &s.x, s.state.predicted());
                check("correction", s.k, &s.x, s.state.corrected_ellipsoid().unwrap());
            }
        }
        RunDetail::Multi(m) => {
            for r in &m.records {
                for (i, a) in r.agents.iter().enumerate() {
                    if !(a.quad_pred <= 1.0 + CONTAINMENT_TOL && a.quad_corr <= 1.0 + CONTAINMENT_TOL) {
                        out.push(format!("agent {} k={}: {:.6e} / {:.6e}", i + 1, r.k, a.quad_pred, a.quad_corr));
                    }
                }
            }
        }
    }
    if run.report.containment_violations != 0 {
        out.push(format!("report counts {} violations", run.report.containment_violations));
    }
    out
}

fn example1_run() -> &'static ScenarioRun {
    static RUN: OnceLock<ScenarioRun> = OnceLock::new();
    RUN.get_or_init(|| scenario::run_scenario(&scenario::example1()).unwrap())
}

fn example2_run() -> &'static ScenarioRun {
    static RUN: OnceLock<ScenarioRun> = OnceLock::new();
    RUN.get_or_init(|| scenario::run_scenario(&scenario::example2(1).unwrap()).unwrap())
}

#[test]
fn criterion_01_containment() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut runs = 0;
    let mut steps = 0;
    let mut configs = vec![scenario::example1(), scenario::example2(1).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..20 {
        configs.push(if i % 4 == 3 { random_multi_agent(&mut rng, i) } else { random_single_filter(&mut rng, i) });
    }
    for cfg in &configs {
        match scenario::run_scenario(cfg) {
            Ok(run) => {
                runs += 1;
                steps += run.report.samples * run.report.agents;
                failures.extend(containment_failures(&run).into_iter().map(|f| format!("{}: {f}", cfg.name)));
            }
            Err(e) => failures.push(format!("{}: {e}", cfg.name)),
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 120.0 {
        failures.push(format!("took {elapsed:.1} s"));
    }
    verdict(
        1,
        "containment",
        &failures,
        &format!("{runs} scenarios, {steps} filter steps, 0 allowed violations, {elapsed:.1} s"),
    );
}

#[test]
fn criterion_02_example1_metrics() {
    let r = &example1_run().report;
    let mut failures = Vec::new();
    if r.samples != 201 {
        failures.push(format!("{} samples", r.samples));
    }
    for (name, v, t) in [("mean |e|", r.mean_abs_error, 0.0434), ("mse x1", r.mse_per_axis[0], 0.0002), ("mse x2", r.mse_per_axis[1], 0.00267)] {
        if !within(v, t, 0.25) {
            failures.push(format!("{name} = {v:.5} outside {t} ± 25%"));
        }
    }
    verdict(
        2,
        "single-filter metrics",
        &failures,
        &format!("mean |e| {:.4}, mse {:.6} / {:.5}", r.mean_abs_error, r.mse_per_axis[0], r.mse_per_axis[1]),
    );
}

#[test]
fn criterion_03_example1_first_correction() {
    let RunDetail::Single(steps) = &example1_run().detail else { panic!("single-filter run expected") };
    let first = &steps[0];
    let trace0 = first.state.corrected.as_ref().unwrap().p.trace();
    let e0 = first.error().iter().map(|v| v * v).sum::<f64>().sqrt();
    let initial = 0.5;
    let mut failures = Vec::new();
    if !(trace0 < 21.0) {
        failures.push(format!("trace(P_0|0) = {trace0}"));
    }
    if !(e0 < 0.5 * initial) {
        failures.push(format!("|e_0| = {e0}"));
    }
    verdict(3, "first correction", &failures, &format!("trace(P_0|0) = {trace0:.4} < 21, |e_0| = {e0:.4} < 0.25"));
}

#[test]
fn criterion_04_example2_design() {
    let RunDetail::Multi(m) = &example2_run().detail else { panic!("multi-agent run expected") };
    let d = &m.design;
    let mut failures = Vec::new();
    let r = match d.r {
        Radius::Finite(r) => r,
        Radius::Unconstrained => f64::INFINITY,
    };
    if (r - 1.0).abs() > 1e-9 {
        failures.push(format!("r = {r}"));
    }
    let p_err = (na(d.p.as_mat()) - DMatrix::identity(2, 2) * 0.1).abs().max();
    if p_err > 1e-10 {
        failures.push(format!("|P − 0.1 I| = {p_err:e}"));
    }
    if d.c != 1.5 {
        failures.push(format!("c = {:?}", d.c));
    }
    let ratio = d.circle.r0 / d.circle.c0;
    if (ratio - 0.9).abs() > 1e-12 {
        failures.push(format!("r0/c0 = {ratio}"));
    }
    let ac = na(&m.closed.a_c);
    let rho_ac = rho_upper(&ac);
    if !(rho_ac < 1.0) {
        failures.push(format!("rho(A_c) <= {rho_ac}"));
    }
    let mut power = DMatrix::identity(ac.nrows(), ac.ncols());
    let mut worst: f64 = 0.0;
    for k in 0..=60 {
        let norm = power.clone().svd(false, false).singular_values.max();
        let bound = 1.1 * 0.9f64.powi(k);
        worst = worst.max(norm / bound);
        if norm > bound {
            failures.push(format!("|A_c^{k}| = {norm:.6} > {bound:.6}"));
        }
        power = &ac * power;
    }
    verdict(
        4,
        "synchronization design",
        &failures,
        &format!("r = {r}, c = {}, r0/c0 = {ratio:.12}, rho(A_c) <= {rho_ac:.5}, max |A_c^k|/(1.1*0.9^k) = {worst:.4}", d.c),
    );
}

#[test]
fn criterion_05_example2_bound() {
    let RunDetail::Multi(m) = &example2_run().detail else { panic!("multi-agent run expected") };
    let model = &m.model;
    let mut failures = Vec::new();
    if (model.p0, model.q_bar, model.certificate.alpha, model.certificate.mu) != (2.0, 0.1, 1.1, 0.9) {
        failures.push(format!("constants {} {} {} {}", model.p0, model.q_bar, model.certificate.alpha, model.certificate.mu));
    }
    let limit = model.normalized_limit();
    if (limit - 2.462).abs() > 1e-3 {
        failures.push(format!("normalized limit {limit}"));
    }
    let delta = m.delta_bar();
    let bound = m.bound_bar();
    for (k, (d, b)) in delta.iter().zip(&bound).enumerate() {
        if !(d < b) {
            failures.push(format!("|delta_bar_{k}| = {d} >= bound {b}"));
        }
    }
    for k in 1..bound.len() {
        if !(bound[k] < bound[k - 1]) {
            failures.push(format!("bound rises at k={k}"));
        }
    }
    let margin = delta.iter().zip(&bound).map(|(d, b)| b - d).fold(f64::INFINITY, f64::min);
    verdict(
        5,
        "disagreement bound",
        &failures,
        &format!("limit {limit:.4}, bound {:.3} -> {:.3}, min margin {margin:.4}", bound[0], bound[bound.len() - 1]),
    );
}

#[test]
fn criterion_06_example2_metrics() {
    const SEEDS: u64 = 5;
    let targets = [(0.3706, 1.1985), (0.4219, 1.2052), (0.4730, 1.2124)];
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (s, (mean_t, rms_t)) in (1u8..=3).zip(targets) {
        let (mut mean, mut rms) = (0.0, 0.0);
        for seed in 0..SEEDS {
            let mut cfg = scenario::example2(s).unwrap();
            cfg.seed = seed;
            let run = scenario::run_scenario(&cfg).unwrap();
            let sm = run.report.sync.as_ref().unwrap();
            mean += sm.mean_delta_bar / SEEDS as f64;
            rms += sm.rms_delta_bar / SEEDS as f64;
            failures.extend(containment_failures(&run).into_iter().map(|f| format!("setting {s} seed {seed}: {f}")));
        }
        if !within(mean, mean_t, 0.25) {
            failures.push(format!("setting {s}: mean {mean:.4} vs {mean_t}"));
        }
        if !within(rms, rms_t, 0.25) {
            failures.push(format!("setting {s}: rms {rms:.4} vs {rms_t}"));
        }
        detail.push(format!("({mean:.4}, {rms:.4})"));
    }
    verdict(6, "synchronization metrics", &failures, &format!("{SEEDS} seeds: {}", detail.join(" ")));
}

fn sym_random<R: Rng>(rng: &mut R, n: usize, s: f64) -> Mat {
    random_mat(rng, n, n, s).symmetrize()
}

fn identity_expr(n: usize, var: sdp::VarId) -> AffineExpr {
    AffineExpr::zeros(n, n).plus_scaled(var, Mat::identity(n))
}

/// One random program with its oracle optimum and an independent feasibility check.
struct SdpCase {
    family: &'static str,
    problem: SdpProblem,
    expected: f64,
    check: Box<dyn Fn(&sdp::SdpSolution) -> f64>,
}

fn sdp_case(rng: &mut ChaCha8Rng, i: usize) -> SdpCase {
    let n = rng.gen_range(1..=4);
    let mut p = SdpProblem::new();
    match i % 6 {
        0 => {
            let m = sym_random(rng, n, 2.0);
            let x = p.symmetric("X", n);
            p.constrain(LmiConstraint::single("lower", AffineExpr::zeros(n, n).plus_var(1.0, x).plus_const(m.scale(-1.0)), Sense::PositiveSemidefinite));
            p.minimize(Objective::trace(x));
            let mm = na(&m);
            SdpCase { family: "trace above", problem: p, expected: m.trace(), check: Box::new(move |s| min_eig(&(na(s.value(x)) - &mm))) }
        }
        1 => {
            let m = sym_random(rng, n, 3.0);
            let t = p.symmetric("t", 1);
            let mut e = AffineExpr::constant(m.scale(-1.0));
            for k in 0..n {
                let mut u = vec![0.0; n];
                u[k] = 1.0;
                e = e.plus_product(Mat::column(&u), t, Mat::row(&u));
            }
            p.constrain(LmiConstraint::single("lmax", e, Sense::PositiveSemidefinite));
            p.minimize(Objective::trace(t));
            let mm = na(&m);
            let lmax = SymmetricEigen::new(mm.clone()).eigenvalues.max();
            SdpCase {
                family: "largest eigenvalue",
                problem: p,
                expected: lmax,
                check: Box::new(move |s| min_eig(&(DMatrix::identity(n, n) * s.value(t)[(0, 0)] - &mm))),
            }
        }
        2 => {
            let c = rng.gen_range(1..=3);
            let a = random_mat(rng, n, c, 2.0);
            let t = p.nonnegative("t");
            p.constrain(
                LmiConstraint::new("norm", vec![n, c], Sense::PositiveSemidefinite)
                    .with_block(0, 0, identity_expr(n, t))
                    .with_block(0, 1, AffineExpr::constant(a.clone()))
                    .with_block(1, 1, identity_expr(c, t)),
            );
            p.minimize(Objective::scalar(t, 1.0));
            let am = na(&a);
            let smax = am.clone().svd(false, false).singular_values.max();
            SdpCase {
                family: "spectral norm",
                problem: p,
                expected: smax,
                check: Box::new(move |s| {
                    let tv = s.scalar(t);
                    let mut big = DMatrix::identity(n + c, n + c) * tv;
                    big.view_mut((0, n), (n, c)).copy_from(&am);
                    big.view_mut((n, 0), (c, n)).copy_from(&am.transpose());
                    min_eig(&big).min(tv)
                }),
            }
        }
        3 => {
            let c = rng.gen_range(1..=3);
            let b = random_mat(rng, n, c, 2.0);
            let x = p.symmetric("P", n);
            p.constrain(
                LmiConstraint::new("schur", vec![n, c], Sense::PositiveSemidefinite)
                    .with_block(0, 0, AffineExpr::zeros(n, n).plus_var(1.0, x))
                    .with_block(0, 1, AffineExpr::constant(b.clone()))
                    .with_block(1, 1, AffineExpr::constant(Mat::identity(c))),
            );
            p.minimize(Objective::trace(x));
            let bm = na(&b);
            let expected = (&bm * bm.transpose()).trace();
            SdpCase {
                family: "schur complement",
                problem: p,
                expected,
                check: Box::new(move |s| {
                    let mut big = DMatrix::identity(n + c, n + c);
                    big.view_mut((0, 0), (n, n)).copy_from(&na(s.value(x)));
                    big.view_mut((0, n), (n, c)).copy_from(&bm);
                    big.view_mut((n, 0), (c, n)).copy_from(&bm.transpose());
                    min_eig(&big)
                }),
            }
        }
        4 => {
            let m = sym_random(rng, n, 2.0);
            let x = p.symmetric("X", n);
            p.constrain(LmiConstraint::single("above", AffineExpr::zeros(n, n).plus_var(1.0, x).plus_const(m.scale(-1.0)), Sense::PositiveSemidefinite));
            p.constrain(LmiConstraint::single("psd", AffineExpr::zeros(n, n).plus_var(1.0, x), Sense::PositiveSemidefinite));
            p.minimize(Objective::trace(x));
            let mm = na(&m);
            let expected = SymmetricEigen::new(mm.clone()).eigenvalues.iter().map(|l| l.max(0.0)).sum();
            SdpCase {
                family: "positive part",
                problem: p,
                expected,
                check: Box::new(move |s| {
                    let xv = na(s.value(x));
                    min_eig(&(&xv - &mm)).min(min_eig(&xv))
                }),
            }
        }
        _ => {
            let (c1, c2) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
            let floor = rng.gen_range(0.2..2.0);
            let t1 = p.nonnegative("t1");
            let t2 = p.nonnegative("t2");
            let e = AffineExpr::constant(Mat::scalar(-floor)).plus_scaled(t1, Mat::scalar(1.0)).plus_scaled(t2, Mat::scalar(1.0));
            p.constrain(LmiConstraint::single("sum", e, Sense::PositiveSemidefinite));
            p.minimize(Objective::scalar(t1, c1).plus_scalar(t2, c2));
            SdpCase {
                family: "linear program",
                problem: p,
                expected: floor * c1.min(c2),
                check: Box::new(move |s| {
                    let (a, b) = (s.scalar(t1), s.scalar(t2));
                    (a + b - floor).min(a).min(b)
                }),
            }
        }
    }
}

#[test]
fn criterion_07_sdp_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = TolProfile::Default.options();
    let mut failures = Vec::new();
    let (mut worst_rel, mut worst_feas, mut worst_gap) = (0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..200 {
        let case = sdp_case(&mut rng, i);
        let sol = match sdp::solve(&case.problem, &opts) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("#{i} {}: {e}", case.family));
                continue;
            }
        };
        if !sol.is_optimal() {
            failures.push(format!("#{i} {}: status {:?}", case.family, sol.status));
        }
        let rel = (sol.objective - case.expected).abs() / case.expected.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
        if rel > 1e-4 {
            failures.push(format!("#{i} {}: objective {} vs {}", case.family, sol.objective, case.expected));
        }
        let feas = (case.check)(&sol);
        worst_feas = worst_feas.min(feas);
        if feas < -1e-7 {
            failures.push(format!("#{i} {}: min eigenvalue {feas:e}", case.family));
        }
        let gap = sol.objective - sol.dual_objective;
        worst_gap = worst_gap.min(gap);
        if gap < -1e-8 * (1.0 + sol.objective.abs()) {
            failures.push(format!("#{i} {}: dual {} exceeds primal {}", case.family, sol.dual_objective, sol.objective));
        }
    }
    verdict(
        7,
        "SDP solver",
        &failures,
        &format!("200 programs, worst relative error {worst_rel:.2e}, worst min eigenvalue {worst_feas:.2e}, smallest primal-dual gap {worst_gap:.2e}"),
    );
}

fn na_gamma(g: &InteractionGraph) -> DMatrix<f64> {
    let n = g.len();
    let a = na(g.adjacency());
    let mut lg = -a.clone();
    let mut scale = DMatrix::zeros(n, n);
    for i in 0..n {
        let d: f64 = a.row(i).sum();
        lg[(i, i)] += d + g.pinning()[i];
        scale[(i, i)] = 1.0 / (1.0 + d + g.pinning()[i]);
    }
    scale * lg
}

/// `ρ(M) ≤ |M^512|^(1/512)`, by repeated squaring.
fn rho_upper(m: &DMatrix<f64>) -> f64 {
    let mut p = m.clone();
    for _ in 0..9 {
        p = &p * &p;
    }
    p.svd(false, false).singular_values.max().powf(1.0 / 512.0)
}

/// Spectral radius of `A − c λ BK` for complex `λ` through its real embedding.
fn local_rho(a: &DMatrix<f64>, bk: &DMatrix<f64>, c: f64, re: f64, im: f64) -> f64 {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let real = a - bk * (c * re);
    let imag = bk * (-c * im);
    m.view_mut((0, 0), (n, n)).copy_from(&real);
    m.view_mut((n, n), (n, n)).copy_from(&real);
    m.view_mut((0, n), (n, n)).copy_from(&(-&imag));
    m.view_mut((n, 0), (n, n)).copy_from(&imag);
    rho(&m)
}

#[test]
fn criterion_08_decoupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    let (mut stable, mut unstable, mut designed) = (0, 0, 0);
    let mut closest: f64 = f64::INFINITY;
    for i in 0..100 {
        let n_agents = rng.gen_range(2..=5);
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(1..=n);
        let graph = random_graph(&mut rng, n_agents);
        let a = random_mat(&mut rng, n, n, 1.0);
        let b = random_mat(&mut rng, n, m, 1.0);
        let (k, c) = if i % 2 == 0 {
            (random_mat(&mut rng, m, n, 1.0), rng.gen_range(0.05..1.5))
        } else {
            let q = SpdMat::scaled_identity(n, rng.gen_range(0.05..1.0)).unwrap();
            match riccati::solve_riccati_like(&a, &b, &q) {
                Ok(p) => {
                    designed += 1;
                    let pm = p.as_mat();
                    let btp = &b.transpose() * pm;
                    let k = smfsync::linalg::solve(&(&btp * &b), &(&btp * &a)).unwrap();
                    (k, rng.gen_range(0.1..1.5))
                }
                Err(_) => (random_mat(&mut rng, m, n, 1.0), rng.gen_range(0.05..1.5)),
            }
        };
        let gamma = na_gamma(&graph);
        let lib_gamma = graph.gamma().unwrap();
        let (ac_lib, _) = riccati::closed_loop_matrices(&a, &b, &k, &lib_gamma.gamma, c);
        let bk = na(&b) * na(&k);
        let ac = DMatrix::identity(n_agents, n_agents).kronecker(&na(&a)) - gamma.kronecker(&bk) * c;
        let diff = (&ac - na(&ac_lib)).abs().max();
        if diff > 1e-12 {
            failures.push(format!("#{i}: closed loop differs by {diff:e}"));
        }
        let global = rho(&ac);
        let local = eigenvalues(&gamma)
            .iter()
            .map(|l| local_rho(&na(&a), &bk, c, l.re, l.im))
            .fold(0.0, f64::max);
        closest = closest.min((global - 1.0).abs()).min((local - 1.0).abs());
        if (global < 1.0) != (local < 1.0) {
            failures.push(format!("#{i}: global rho {global:.12}, local max {local:.12}"));
        }
        if global < 1.0 {
            stable += 1;
        } else {
            unstable += 1;
        }
    }
    verdict(
        8,
        "closed-loop decoupling",
        &failures,
        &format!("100 instances ({stable} stable, {unstable} unstable, {designed} Riccati gains), closest |rho - 1| = {closest:.2e}"),
    );
}

fn ring_design() -> (InteractionGraph, riccati::RiccatiDesign, riccati::ClosedLoop) {
    let cfg = scenario::example2(1).unwrap();
    let graph = cfg.graph.unwrap();
    let SystemSpec::Matrices { a, b, .. } = cfg.system else { unreachable!() };
    let d = cfg.design.unwrap();
    let (design, closed) = riccati::design(
        &a,
        &b,
        &d.q,
        &graph.gamma().unwrap(),
        d.circle.unwrap(),
        CertificateSpec::Given { alpha: 1.1, mu: 0.9, horizon: 60 },
    )
    .unwrap();
    (graph, design, closed)
}

#[test]
fn criterion_09_protocol_consistency() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // Stacked local law against the global form on random estimates and graphs.
    let (ring, design, _) = ring_design();
    let mut law_err: f64 = 0.0;
    for trial in 0..100 {
        let graph = if trial % 2 == 0 { ring.clone() } else { random_graph(&mut rng, 4) };
        let est: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.gen_range(-50.0..50.0)).collect()).collect();
        let leader: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let eps = sync::tracking_error(&graph, &est, &leader);
        let stacked_bu: Vec<f64> =
            (0..4).flat_map(|i| Mat::identity(2).mul_vec(&sync::control_input(&design, &graph, &eps[i], i))).collect();
        let gamma = na_gamma(&graph);
        let x = DVector::from_iterator(8, est.iter().flatten().copied());
        let ones = DVector::from_iterator(8, (0..4).flat_map(|_| leader.iter().copied()));
        let global = -(gamma.kronecker(&na(&design.k)) * design.c) * (x - ones);
        let scale = global.amax().max(1.0);
        law_err = law_err.max(stacked_bu.iter().zip(global.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
    }
    if law_err > 1e-12 {
        failures.push(format!("control law mismatch {law_err:e}"));
    }

    // Direct error-system recursion against the simulated disagreement.
    let RunDetail::Multi(m) = &example2_run().detail else { panic!("multi-agent run expected") };
    let gamma = na_gamma(&ring);
    let a = na(&Mat::from_rows(&[[0.0, -1.0], [1.0, 0.0]]));
    let bk = na(&design.k);
    let ac = DMatrix::identity(4, 4).kronecker(&a) - gamma.kronecker(&bk) * design.c;
    let bc = gamma.kronecker(&bk) * design.c;
    let mut delta = DVector::from_vec(m.records[0].delta.clone());
    let mut rec_err: f64 = 0.0;
    for pair in m.records.windows(2) {
        let e = DVector::from_vec(pair[0].stacked_error());
        let w = DVector::from_vec(pair[0].stacked_w().unwrap());
        delta = &ac * &delta + &bc * e + w;
        let sim = DVector::from_vec(pair[1].delta.clone());
        rec_err = rec_err.max((&delta - sim).amax() / delta.amax().max(1.0));
    }
    if rec_err > 1e-10 {
        failures.push(format!("error recursion mismatch {rec_err:e}"));
    }

    // Zero disturbance with exact initial estimates keeps every agent on the leader.
    let leader0 = vec![5.0, -5.0];
    let model = StepModel {
        a: Mat::from_rows(&[[0.0, -1.0], [1.0, 0.0]]),
        b: Mat::identity(2),
        g: Mat::identity(2),
        c: Mat::row(&[1.0, 0.0]),
        d: Mat::identity(1),
        q: SpdMat::scaled_identity(2, 0.1).unwrap(),
        r: SpdMat::scaled_identity(1, 0.1).unwrap(),
    };
    let specs = (0..4)
        .map(|_| AgentSpec {
            system: LtvSystem::time_invariant(model.clone()).unwrap(),
            x0: leader0.clone(),
            prior: Ellipsoid::new(leader0.clone(), SpdMat::scaled_identity(2, 2.0).unwrap()).unwrap(),
            w: DisturbanceRealization::Zero { dim: 2 },
            v: DisturbanceRealization::Zero { dim: 1 },
        })
        .collect();
    let mut world =
        World::new(ring.clone(), design.clone(), specs, leader0, ChaCha8Rng::seed_from_u64(0), TolProfile::Default.options())
            .unwrap();
    let records = world.run(60).unwrap();
    let zero_err = records.iter().map(|r| r.delta.iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
    if zero_err > 1e-12 {
        failures.push(format!("undisturbed disagreement {zero_err:e}"));
    }
    verdict(
        9,
        "protocol consistency",
        &failures,
        &format!("control law {law_err:.1e}, error recursion {rec_err:.1e}, undisturbed |delta| {zero_err:.1e}"),
    );
}

fn table_bytes(run: &ScenarioRun) -> Vec<(String, Vec<u8>)> {
    run.tables.iter().map(|t| (t.file.clone(), t.to_bytes().unwrap())).collect()
}

#[test]
fn criterion_10_determinism() {
    let mut failures = Vec::new();
    let mut files = 0;
    let mut bytes = 0;
    for (name, first) in [("example1", example1_run()), ("example2", example2_run())] {
        let cfg = scenario::preset(name, 1).unwrap();
        let again = scenario::run_scenario(&cfg).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        first.write(dirs[0].path()).unwrap();
        again.write(dirs[1].path()).unwrap();
        for (file, data) in table_bytes(first) {
            files += 1;
            bytes += data.len();
            let a = std::fs::read(dirs[0].path().join(&file)).unwrap();
            let b = std::fs::read(dirs[1].path().join(&file)).unwrap();
            if a != b || a != data {
                failures.push(format!("{name}/{file} differs between runs"));
            }
        }
    }
    verdict(10, "determinism", &failures, &format!("{files} files, {bytes} bytes identical across repeated runs"));
}
