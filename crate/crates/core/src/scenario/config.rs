//! Typed scenario configuration and its TOML front end.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use super::ScenarioError;
use crate::graph::{Circle, Edge, InteractionGraph};
use crate::linalg::{Mat, SpdMat};
use crate::sdp::TolProfile;
use crate::system::{CoefficientSample, DisturbanceRealization, LtvSystem, MathieuParams, StepModel, SystemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SingleFilter,
    MultiAgent,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::SingleFilter => "single-filter",
            Mode::MultiAgent => "multi-agent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single-filter" => Some(Mode::SingleFilter),
            "multi-agent" => Some(Mode::MultiAgent),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    Matrices { a: Mat, b: Mat, g: Mat, c: Mat, d: Mat },
    Mathieu(MathieuParams),
}

impl SystemSpec {
    /// `(n, m, w, p, v)`.
    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        match self {
            SystemSpec::Matrices { a, b, g, c, d } => (a.rows(), b.cols(), g.cols(), c.rows(), d.cols()),
            SystemSpec::Mathieu(_) => (2, 0, 1, 1, 1),
        }
    }

    /// Builds the per-agent system with that agent's disturbance shapes.
    pub fn build(&self, q: &SpdMat, r: &SpdMat, horizon: usize) -> Result<LtvSystem, SystemError> {
        match self {
            SystemSpec::Matrices { a, b, g, c, d } => LtvSystem::time_invariant(StepModel {
                a: a.clone(),
                b: b.clone(),
                g: g.clone(),
                c: c.clone(),
                d: d.clone(),
                q: q.clone(),
                r: r.clone(),
            }),
            SystemSpec::Mathieu(p) => crate::system::zoh_discretize_mathieu(p, horizon, q.clone(), r.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Fixed(Vec<f64>),
    /// Independent uniform draws per component.
    Uniform { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub x0: InitialState,
    pub x_hat0: Vec<f64>,
    pub p0: SpdMat,
    pub q: SpdMat,
    pub r: SpdMat,
    pub w: DisturbanceRealization,
    pub v: DisturbanceRealization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub q: SpdMat,
    /// Searched when absent.
    pub circle: Option<Circle>,
    /// `(α, μ)`; fitted when absent.
    pub certificate: Option<(f64, f64)>,
    pub p0: Option<f64>,
    pub q_bar: Option<f64>,
    pub r_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub system: SystemSpec,
    pub agents: Vec<AgentConfig>,
    pub graph: Option<InteractionGraph>,
    pub design: Option<DesignConfig>,
    pub leader_x0: Option<Vec<f64>>,
    pub horizon: usize,
    pub seed: u64,
    pub tol_profile: TolProfile,
    pub output: Option<PathBuf>,
}

/// One broken invariant, located by config path and, for parsed files, by line.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation { path: path.into(), line: None, message: message.into() });
    }

    fn len(&mut self, path: &str, what: &str, expected: usize, actual: usize) {
        if expected != actual {
            self.fail(path, format!("{what} has dimension {actual}, expected {expected}"));
        }
    }

    fn shape(&mut self, path: &str, m: &Mat, rows: usize, cols: usize) {
        if m.shape() != (rows, cols) {
            self.fail(path, format!("is {}x{}, expected {rows}x{cols}", m.rows(), m.cols()));
        }
    }
}

fn check_disturbance(ck: &mut Checker, path: &str, d: &DisturbanceRealization, bound: &SpdMat) {
    if d.dim() != bound.dim() {
        ck.fail(path, format!("has dimension {}, expected {}", d.dim(), bound.dim()));
        return;
    }
    match d {
        DisturbanceRealization::Sinusoidal { amplitude, dt, .. } => {
            if bound.inv_quad_form(amplitude) > 1.0 + 1e-12 {
                ck.fail(path, "sinusoid amplitude leaves the disturbance ellipsoid");
            }
            if !(*dt > 0.0) {
                ck.fail(path, "dt must be positive");
            }
        }
        DisturbanceRealization::UniformBox { half_widths } => {
            if half_widths.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
                ck.fail(path, "half widths must be finite and nonnegative");
            }
        }
        DisturbanceRealization::Zero { .. } => {}
    }
}

impl ScenarioConfig {
    /// Checks every dimension and semantic constraint, reporting all violations.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut ck = Checker { out: Vec::new() };
        let (n, m, w, p, v) = self.system.dims();
        match &self.system {
            SystemSpec::Matrices { a, b, g, c, d } => {
                if !a.is_square() {
                    ck.fail("system.a", "must be square");
                }
                ck.shape("system.b", b, n, m);
                ck.shape("system.g", g, n, w);
                ck.shape("system.c", c, p, n);
                ck.shape("system.d", d, p, v);
                for (name, mat) in [("a", a), ("b", b), ("g", g), ("c", c), ("d", d)] {
                    if !mat.is_finite() {
                        ck.fail(format!("system.{name}"), "has non-finite entries");
                    }
                }
            }
            SystemSpec::Mathieu(mp) => {
                if !(mp.dt > 0.0) {
                    ck.fail("system.dt", "must be positive");
                }
                for (name, val) in [("omega", mp.omega), ("omega0", mp.omega0), ("epsilon", mp.epsilon)] {
                    if !val.is_finite() {
                        ck.fail(format!("system.{name}"), "must be finite");
                    }
                }
            }
        }
        if self.name.contains([',', '"', '\n']) {
            ck.fail("name", "must not contain commas, quotes or newlines");
        }

        for (i, ag) in self.agents.iter().enumerate() {
            let pre = match self.mode {
                Mode::SingleFilter => "filter".to_string(),
                Mode::MultiAgent => format!("agents[{}]", i + 1),
            };
            match &ag.x0 {
                InitialState::Fixed(x) => ck.len(&format!("{pre}.x0"), "x0", n, x.len()),
                InitialState::Uniform { low, high } => {
                    ck.len(&format!("{pre}.x0_low"), "x0_low", n, low.len());
                    ck.len(&format!("{pre}.x0_high"), "x0_high", n, high.len());
                    if low.iter().zip(high).any(|(l, h)| !(l <= h)) {
                        ck.fail(format!("{pre}.x0_high"), "must be componentwise >= x0_low");
                    }
                }
            }
            ck.len(&format!("{pre}.x_hat0"), "x_hat0", n, ag.x_hat0.len());
            ck.len(&format!("{pre}.p0"), "p0", n, ag.p0.dim());
            ck.len(&format!("{pre}.q"), "q", w, ag.q.dim());
            ck.len(&format!("{pre}.r"), "r", v, ag.r.dim());
            if ag.q.dim() == w {
                check_disturbance(&mut ck, &format!("{pre}.w"), &ag.w, &ag.q);
            }
            if ag.r.dim() == v {
                check_disturbance(&mut ck, &format!("{pre}.v"), &ag.v, &ag.r);
            }
            if let (InitialState::Fixed(x), true) = (&ag.x0, ag.x_hat0.len() == n && ag.p0.dim() == n) {
                if x.len() == n {
                    let e: Vec<f64> = x.iter().zip(&ag.x_hat0).map(|(a, b)| a - b).collect();
                    if ag.p0.inv_quad_form(&e) > 1.0 + 1e-9 {
                        ck.fail(format!("{pre}.x0"), "lies outside the initial ellipsoid");
                    }
                }
            }
        }

        match self.mode {
            Mode::SingleFilter => {
                if self.agents.len() != 1 {
                    ck.fail("filter", "single-filter mode needs exactly one [filter] table");
                }
            }
            Mode::MultiAgent => {
                if self.agents.is_empty() {
                    ck.fail("agents", "multi-agent mode needs at least one [[agents]] entry");
                }
                if matches!(self.system, SystemSpec::Mathieu(_)) {
                    ck.fail("system.kind", "multi-agent mode needs a time-invariant matrix system");
                }
                if m == 0 {
                    ck.fail("system.b", "multi-agent mode needs at least one input");
                }
                match &self.graph {
                    None => ck.fail("graph", "multi-agent mode needs a [graph] table"),
                    Some(g) => {
                        ck.len("graph", "agent count", self.agents.len(), g.len());
                        if !g.has_pinned_spanning_tree() {
                            ck.fail("graph", "the leader does not reach every agent");
                        }
                    }
                }
                match &self.design {
                    None => ck.fail("design", "multi-agent mode needs a [design] table"),
                    Some(d) => {
                        ck.len("design.q", "q", n, d.q.dim());
                        if let Some(c) = d.circle {
                            if !(c.c0 > 0.0) || !(c.r0 > 0.0) {
                                ck.fail("design.c0", "c0 and r0 must be positive");
                            }
                        }
                        if let Some((alpha, mu)) = d.certificate {
                            if !(alpha > 0.0) || !(0.0..1.0).contains(&mu) {
                                ck.fail("design.alpha", "need alpha > 0 and 0 <= mu < 1");
                            }
                        }
                        for (name, val) in [("p0", d.p0), ("q_bar", d.q_bar), ("r_bar", d.r_bar)] {
                            if val.is_some_and(|x| !(x >= 0.0) || !x.is_finite()) {
                                ck.fail(format!("design.{name}"), "must be finite and nonnegative");
                            }
                        }
                    }
                }
                match &self.leader_x0 {
                    None => ck.fail("leader", "multi-agent mode needs a [leader] table"),
                    Some(x) => ck.len("leader.x0", "x0", n, x.len()),
                }
            }
        }
        if ck.out.is_empty() {
            Ok(())
        } else {
            Err(ck.out)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MatrixValue {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

type SMat = Spanned<MatrixValue>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    kind: Spanned<String>,
    amplitude: Option<Spanned<Vec<f64>>>,
    frequency: Option<f64>,
    phase: Option<f64>,
    dt: Option<f64>,
    half_widths: Option<Spanned<Vec<f64>>>,
    half_width: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    kind: Spanned<String>,
    a: Option<SMat>,
    b: Option<SMat>,
    g: Option<SMat>,
    c: Option<SMat>,
    d: Option<SMat>,
    omega: Option<f64>,
    omega0: Option<f64>,
    epsilon: Option<f64>,
    dt: Option<f64>,
    sample: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    x0: Option<Spanned<Vec<f64>>>,
    x0_low: Option<Spanned<Vec<f64>>>,
    x0_high: Option<Spanned<Vec<f64>>>,
    x_hat0: Spanned<Vec<f64>>,
    p0: SMat,
    q: SMat,
    r: SMat,
    w: Option<RawDisturbance>,
    v: Option<RawDisturbance>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbances {
    w: Option<RawDisturbance>,
    v: Option<RawDisturbance>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    agents: Option<usize>,
    edges: Spanned<Vec<Vec<f64>>>,
    pinning: Spanned<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    q: SMat,
    c0: Option<Spanned<f64>>,
    r0: Option<Spanned<f64>>,
    alpha: Option<Spanned<f64>>,
    mu: Option<Spanned<f64>>,
    p0: Option<f64>,
    q_bar: Option<f64>,
    r_bar: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeader {
    x0: Spanned<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    mode: Spanned<String>,
    horizon: Spanned<i64>,
    seed: Option<u64>,
    tol_profile: Option<Spanned<String>>,
    output: Option<String>,
    system: Spanned<RawSystem>,
    filter: Option<Spanned<RawAgent>>,
    agents: Option<Vec<Spanned<RawAgent>>>,
    disturbance: Option<RawDisturbances>,
    graph: Option<Spanned<RawGraph>>,
    design: Option<Spanned<RawDesign>>,
    leader: Option<Spanned<RawLeader>>,
}

/// Byte offsets to 1-based line numbers.
struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(src: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        Self { starts }
    }

    fn line(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }
}

/// Builder that records a line for every config path it touches.
struct Lowering<'a> {
    index: &'a LineIndex,
    lines: HashMap<String, usize>,
    out: Vec<Violation>,
}

impl Lowering<'_> {
    fn mark(&mut self, path: &str, span: Range<usize>) {
        self.lines.insert(path.to_string(), self.index.line(span.start));
    }

    fn fail(&mut self, path: &str, span: Range<usize>, message: impl Into<String>) {
        self.out.push(Violation { path: path.into(), line: Some(self.index.line(span.start)), message: message.into() });
    }

    fn vector(&mut self, path: &str, v: &Spanned<Vec<f64>>) -> Vec<f64> {
        self.mark(path, v.span());
        if v.get_ref().iter().any(|x| !x.is_finite()) {
            self.fail(path, v.span(), "has non-finite entries");
        }
        v.get_ref().clone()
    }

    /// Scalars stand for `s·I` when `square` gives the dimension.
    fn matrix(&mut self, path: &str, m: &SMat, square: Option<usize>) -> Option<Mat> {
        self.mark(path, m.span());
        match m.get_ref() {
            MatrixValue::Scalar(s) => match square {
                Some(n) => Some(Mat::identity(n).scale(*s)),
                None => Some(Mat::scalar(*s)),
            },
            MatrixValue::Rows(rows) => {
                let cols = rows.first().map_or(0, |r| r.len());
                if rows.iter().any(|r| r.len() != cols) {
                    self.fail(path, m.span(), "rows have different lengths");
                    return None;
                }
                Some(Mat::from_rows(rows))
            }
        }
    }

    fn spd(&mut self, path: &str, m: &SMat, n: usize) -> Option<SpdMat> {
        let mat = self.matrix(path, m, Some(n))?;
        match SpdMat::new(mat) {
            Ok(s) => Some(s),
            Err(e) => {
                self.fail(path, m.span(), format!("must be symmetric positive definite ({e})"));
                None
            }
        }
    }

    fn disturbance(&mut self, path: &str, d: &RawDisturbance, dim: usize) -> Option<DisturbanceRealization> {
        self.mark(path, d.kind.span());
        match d.kind.get_ref().as_str() {
            "zero" => Some(DisturbanceRealization::Zero { dim }),
            "sinusoidal" => {
                let amplitude = match &d.amplitude {
                    Some(a) => self.vector(&format!("{path}.amplitude"), a),
                    None => {
                        self.fail(path, d.kind.span(), "sinusoidal disturbance needs `amplitude`");
                        return None;
                    }
                };
                let (Some(frequency), Some(dt)) = (d.frequency, d.dt) else {
                    self.fail(path, d.kind.span(), "sinusoidal disturbance needs `frequency` and `dt`");
                    return None;
                };
                Some(DisturbanceRealization::Sinusoidal { amplitude, frequency, phase: d.phase.unwrap_or(0.0), dt })
            }
            "uniform" => {
                let half_widths = match (&d.half_widths, d.half_width) {
                    (Some(h), None) => self.vector(&format!("{path}.half_widths"), h),
                    (None, Some(h)) => vec![h; dim],
                    _ => {
                        self.fail(path, d.kind.span(), "uniform disturbance needs exactly one of `half_widths`, `half_width`");
                        return None;
                    }
                };
                Some(DisturbanceRealization::UniformBox { half_widths })
            }
            other => {
                self.fail(path, d.kind.span(), format!("unknown disturbance kind `{other}` (zero, sinusoidal, uniform)"));
                None
            }
        }
    }

    fn system(&mut self, s: &Spanned<RawSystem>) -> Option<SystemSpec> {
        let raw = s.get_ref();
        self.mark("system", s.span());
        self.mark("system.kind", raw.kind.span());
        match raw.kind.get_ref().as_str() {
            "matrices" => {
                let span = s.span();
                let get = |this: &mut Self, name: &str, m: &Option<SMat>, square: Option<usize>| -> Option<Mat> {
                    match m {
                        Some(m) => this.matrix(&format!("system.{name}"), m, square),
                        None => {
                            this.fail(&format!("system.{name}"), span.clone(), "missing");
                            None
                        }
                    }
                };
                let a = get(self, "a", &raw.a, None);
                let n = a.as_ref().map(|a| a.rows());
                let b = match &raw.b {
                    Some(b) => self.matrix("system.b", b, n),
                    None => n.map(|n| Mat::zeros(n, 0)),
                };
                let g = get(self, "g", &raw.g, n);
                let c = get(self, "c", &raw.c, None);
                let p = c.as_ref().map(|c| c.rows());
                let d = get(self, "d", &raw.d, p);
                Some(SystemSpec::Matrices { a: a?, b: b?, g: g?, c: c?, d: d? })
            }
            "mathieu" => {
                let sample = match &raw.sample {
                    None => CoefficientSample::default(),
                    Some(sp) => match sp.get_ref().as_str() {
                        "start" => CoefficientSample::Start,
                        "end" => CoefficientSample::End,
                        other => {
                            self.fail("system.sample", sp.span(), format!("expected `start` or `end`, got `{other}`"));
                            return None;
                        }
                    },
                };
                let (Some(omega), Some(omega0), Some(epsilon), Some(dt)) = (raw.omega, raw.omega0, raw.epsilon, raw.dt) else {
                    self.fail("system", s.span(), "mathieu system needs omega, omega0, epsilon and dt");
                    return None;
                };
                Some(SystemSpec::Mathieu(MathieuParams { omega, omega0, epsilon, dt, sample }))
            }
            other => {
                self.fail("system.kind", raw.kind.span(), format!("unknown system kind `{other}` (matrices, mathieu)"));
                None
            }
        }
    }

    fn agent(
        &mut self,
        pre: &str,
        a: &Spanned<RawAgent>,
        dims: (usize, usize, usize),
        defaults: Option<&RawDisturbances>,
    ) -> Option<AgentConfig> {
        let (n, w, v) = dims;
        let raw = a.get_ref();
        self.mark(pre, a.span());
        let x0 = match (&raw.x0, &raw.x0_low, &raw.x0_high) {
            (Some(x), None, None) => Some(InitialState::Fixed(self.vector(&format!("{pre}.x0"), x))),
            (None, Some(l), Some(h)) => Some(InitialState::Uniform {
                low: self.vector(&format!("{pre}.x0_low"), l),
                high: self.vector(&format!("{pre}.x0_high"), h),
            }),
            _ => {
                self.fail(&format!("{pre}.x0"), a.span(), "give either `x0` or both `x0_low` and `x0_high`");
                None
            }
        };
        let x_hat0 = self.vector(&format!("{pre}.x_hat0"), &raw.x_hat0);
        let p0 = self.spd(&format!("{pre}.p0"), &raw.p0, n);
        let q = self.spd(&format!("{pre}.q"), &raw.q, w);
        let r = self.spd(&format!("{pre}.r"), &raw.r, v);
        let mut pick = |own: &Option<RawDisturbance>, shared: Option<&RawDisturbance>, name: &str, dim: usize| {
            match own.as_ref().or(shared) {
                Some(d) => self.disturbance(&format!("{pre}.{name}"), d, dim),
                None => {
                    self.fail(&format!("{pre}.{name}"), a.span(), "no disturbance given here or under [disturbance]");
                    None
                }
            }
        };
        let wd = pick(&raw.w, defaults.and_then(|d| d.w.as_ref()), "w", w);
        let vd = pick(&raw.v, defaults.and_then(|d| d.v.as_ref()), "v", v);
        Some(AgentConfig { x0: x0?, x_hat0, p0: p0?, q: q?, r: r?, w: wd?, v: vd? })
    }

    fn graph(&mut self, g: &Spanned<RawGraph>, agents: usize) -> Option<InteractionGraph> {
        let raw = g.get_ref();
        self.mark("graph", g.span());
        self.mark("graph.edges", raw.edges.span());
        self.mark("graph.pinning", raw.pinning.span());
        let n = raw.agents.unwrap_or(agents);
        let mut edges = Vec::new();
        for e in raw.edges.get_ref() {
            let ok = (e.len() == 2 || e.len() == 3) && e[..2].iter().all(|x| x.fract() == 0.0 && *x >= 1.0);
            if !ok {
                self.fail("graph.edges", raw.edges.span(), format!("edge {e:?} must be [from, to] or [from, to, weight] with agents numbered from 1"));
                return None;
            }
            edges.push(Edge { from: e[0] as usize - 1, to: e[1] as usize - 1, weight: e.get(2).copied().unwrap_or(1.0) });
        }
        match InteractionGraph::from_edges(n, &edges, raw.pinning.get_ref().clone()) {
            Ok(g) => Some(g),
            Err(e) => {
                self.fail("graph", g.span(), e.to_string());
                None
            }
        }
    }

    fn design(&mut self, d: &Spanned<RawDesign>, n: usize) -> Option<DesignConfig> {
        let raw = d.get_ref();
        self.mark("design", d.span());
        let q = self.spd("design.q", &raw.q, n);
        let circle = match (&raw.c0, &raw.r0) {
            (Some(c0), Some(r0)) => {
                self.mark("design.c0", c0.span());
                self.mark("design.r0", r0.span());
                Some(Circle { c0: *c0.get_ref(), r0: *r0.get_ref() })
            }
            (None, None) => None,
            _ => {
                self.fail("design.c0", d.span(), "give both `c0` and `r0` or neither");
                return None;
            }
        };
        let certificate = match (&raw.alpha, &raw.mu) {
            (Some(a), Some(m)) => {
                self.mark("design.alpha", a.span());
                Some((*a.get_ref(), *m.get_ref()))
            }
            (None, None) => None,
            _ => {
                self.fail("design.alpha", d.span(), "give both `alpha` and `mu` or neither");
                return None;
            }
        };
        Some(DesignConfig { q: q?, circle, certificate, p0: raw.p0, q_bar: raw.q_bar, r_bar: raw.r_bar })
    }
}

/// Parses and validates TOML text.
pub fn parse_config(src: &str) -> Result<ScenarioConfig, ScenarioError> {
    let index = LineIndex::new(src);
    let raw: RawConfig = toml::from_str(src).map_err(|e| ScenarioError::Parse {
        line: e.span().map(|s| index.line(s.start)),
        message: e.message().to_string(),
    })?;
    let mut lw = Lowering { index: &index, lines: HashMap::new(), out: Vec::new() };

    lw.mark("mode", raw.mode.span());
    let mode = Mode::parse(raw.mode.get_ref());
    if mode.is_none() {
        lw.fail("mode", raw.mode.span(), format!("expected `single-filter` or `multi-agent`, got `{}`", raw.mode.get_ref()));
    }
    lw.mark("horizon", raw.horizon.span());
    let horizon = usize::try_from(*raw.horizon.get_ref()).ok();
    if horizon.is_none() {
        lw.fail("horizon", raw.horizon.span(), "must be a nonnegative integer");
    }
    let tol_profile = match &raw.tol_profile {
        None => Some(TolProfile::Default),
        Some(t) => {
            let p = TolProfile::parse(t.get_ref());
            if p.is_none() {
                lw.fail("tol_profile", t.span(), "expected strict, default or loose");
            }
            p
        }
    };

    let system = lw.system(&raw.system);
    let dims = system.as_ref().map(|s| s.dims());
    let mut agents = Vec::new();
    let mut agents_ok = true;
    if let Some((n, _, w, _, v)) = dims {
        let mut entries: Vec<(String, &Spanned<RawAgent>)> = Vec::new();
        if let Some(f) = &raw.filter {
            entries.push(("filter".into(), f));
        }
        for (i, a) in raw.agents.iter().flatten().enumerate() {
            entries.push((format!("agents[{}]", i + 1), a));
        }
        for (pre, a) in entries {
            match lw.agent(&pre, a, (n, w, v), raw.disturbance.as_ref()) {
                Some(ag) => agents.push(ag),
                None => agents_ok = false,
            }
        }
        if let (Some(f), Some(_)) = (&raw.filter, &raw.agents) {
            lw.fail("filter", f.span(), "give either [filter] or [[agents]], not both");
        }
    }
    let graph = raw.graph.as_ref().and_then(|g| lw.graph(g, agents.len()));
    let design = match (&raw.design, dims) {
        (Some(d), Some((n, ..))) => lw.design(d, n),
        _ => None,
    };
    let leader_x0 = raw.leader.as_ref().map(|l| {
        lw.mark("leader", l.span());
        lw.vector("leader.x0", &l.get_ref().x0)
    });

    if !lw.out.is_empty() || !agents_ok {
        return Err(ScenarioError::Validation(lw.out));
    }
    let (Some(mode), Some(horizon), Some(tol_profile), Some(system)) = (mode, horizon, tol_profile, system) else {
        return Err(ScenarioError::Validation(lw.out));
    };
    let cfg = ScenarioConfig {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        mode,
        system,
        agents,
        graph,
        design,
        leader_x0,
        horizon,
        seed: raw.seed.unwrap_or(0),
        tol_profile,
        output: raw.output.map(PathBuf::from),
    };
    cfg.validate().map_err(|vs| {
        ScenarioError::Validation(
            vs.into_iter()
                .map(|mut v| {
                    v.line = locate(&lw.lines, &v.path);
                    v
                })
                .collect(),
        )
    })?;
    Ok(cfg)
}

/// Line of the path or of its nearest recorded ancestor.
fn locate(lines: &HashMap<String, usize>, path: &str) -> Option<usize> {
    let mut p = path;
    loop {
        if let Some(l) = lines.get(p) {
            return Some(*l);
        }
        p = &p[..p.rfind('.')?];
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let src = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_config(&src)
}
