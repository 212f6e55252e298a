use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::linalg::Mat;

use super::model::{SdpProblem, Sense, Term, VarKind};
use super::SdpError;

/// One semidefinite cone block: `constant − Σ x_i·coeff_i ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub name: String,
    pub dim: usize,
    pub constant: Mat,
    /// Sorted by scalar index, no duplicates.
    pub coeffs: Vec<(usize, Mat)>,
}

impl ConeBlock {
    /// Slack `constant − Σ x_i·coeff_i` at a point.
    pub fn slack(&self, x: &[f64]) -> Mat {
        let mut s = self.constant.clone();
        for (i, a) in &self.coeffs {
            s = &s - &a.scale(x[*i]);
        }
        s
    }
}

/// Cone dimensions of a scalarized program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeSizes {
    /// Length of the vectorized upper triangle of each PSD block.
    pub psd_vec_dims: Vec<usize>,
    pub orthant: usize,
}

/// Standard-form conic program in inequality form:
/// minimize `cᵀx` subject to every block slack being PSD and `x_j ≥ 0` for
/// each orthant index.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub scalar_count: usize,
    pub objective: Vec<f64>,
    pub psd: Vec<ConeBlock>,
    pub orthant: Vec<usize>,
    /// Back-map: (name, kind, first scalar index) per declared variable.
    pub layout: Vec<(String, VarKind, usize)>,
}

impl ConicProgram {
    pub fn cone_sizes(&self) -> ConeSizes {
        ConeSizes {
            psd_vec_dims: self.psd.iter().map(|b| b.dim * (b.dim + 1) / 2).collect(),
            orthant: self.orthant.len(),
        }
    }

    /// Recovers one matrix per declared variable from a scalar vector.
    pub fn unpack(&self, x: &[f64]) -> Vec<Mat> {
        self.layout.iter().map(|(_, kind, off)| unpack_var(*kind, &x[*off..])).collect()
    }

    /// Line-oriented text dump; see the crate README for the grammar.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic-program v1");
        let _ = writeln!(out, "scalars {}", self.scalar_count);
        for (name, kind, off) in &self.layout {
            let kind = match kind {
                VarKind::Symmetric(n) => format!("sym {n}"),
                VarKind::Matrix { rows, cols } => format!("mat {rows} {cols}"),
                VarKind::Nonnegative => "nonneg".to_string(),
            };
            let _ = writeln!(out, "var {} {} {}", sanitize(name), off, kind);
        }
        let obj: Vec<String> = self.objective.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "objective {}", obj.join(" "));
        let orth: Vec<String> = self.orthant.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "orthant {}", orth.join(" "));
        for b in &self.psd {
            let _ = writeln!(out, "block {} {}", sanitize(&b.name), b.dim);
            for (r, c, v) in upper_triplets(&b.constant) {
                let _ = writeln!(out, "c {r} {c} {v:?}");
            }
            for (i, a) in &b.coeffs {
                for (r, c, v) in upper_triplets(a) {
                    let _ = writeln!(out, "a {i} {r} {c} {v:?}");
                }
            }
            let _ = writeln!(out, "end");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SdpError> {
        let err = |line: usize, msg: &str| SdpError::Parse { line, message: msg.to_string() };
        let mut scalar_count = None;
        let mut objective = Vec::new();
        let mut orthant = Vec::new();
        let mut layout = Vec::new();
        let mut psd = Vec::new();
        let mut current: Option<(String, usize, Mat, BTreeMap<usize, Mat>)> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let toks: Vec<&str> = raw.split_whitespace().collect();
            if toks.is_empty() || toks[0].starts_with('#') {
                continue;
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(line, "bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(line, "bad index"));
            match toks[0] {
                "conic-program" => {}
                "scalars" => scalar_count = Some(idx(toks.get(1).ok_or_else(|| err(line, "missing count"))?)?),
                "var" => {
                    if toks.len() < 4 {
                        return Err(err(line, "short var line"));
                    }
                    let kind = match toks[3] {
                        "sym" => VarKind::Symmetric(idx(toks.get(4).ok_or_else(|| err(line, "missing dim"))?)?),
                        "mat" => VarKind::Matrix {
                            rows: idx(toks.get(4).ok_or_else(|| err(line, "missing rows"))?)?,
                            cols: idx(toks.get(5).ok_or_else(|| err(line, "missing cols"))?)?,
                        },
                        "nonneg" => VarKind::Nonnegative,
                        _ => return Err(err(line, "unknown variable kind")),
                    };
                    layout.push((toks[1].to_string(), kind, idx(toks[2])?));
                }
                "objective" => {
                    objective = toks[1..].iter().map(|t| num(t)).collect::<Result<_, _>>()?;
                }
                "orthant" => {
                    orthant = toks[1..].iter().map(|t| idx(t)).collect::<Result<_, _>>()?;
                }
                "block" => {
                    if current.is_some() || toks.len() != 3 {
                        return Err(err(line, "malformed block header"));
                    }
                    let dim = idx(toks[2])?;
                    current = Some((toks[1].to_string(), dim, Mat::zeros(dim, dim), BTreeMap::new()));
                }
                "c" | "a" => {
                    let (_, dim, constant, coeffs) = current.as_mut().ok_or_else(|| err(line, "entry outside block"))?;
                    let dim = *dim;
                    let (target, rest) = if toks[0] == "c" {
                        (constant, &toks[1..])
                    } else {
                        let i = idx(toks.get(1).ok_or_else(|| err(line, "missing scalar index"))?)?;
                        (coeffs.entry(i).or_insert_with(|| Mat::zeros(dim, dim)), &toks[2..])
                    };
                    if rest.len() != 3 {
                        return Err(err(line, "expected row col value"));
                    }
                    let (r, c, v) = (idx(rest[0])?, idx(rest[1])?, num(rest[2])?);
                    if r >= dim || c >= dim {
                        return Err(err(line, "entry out of range"));
                    }
                    target[(r, c)] = v;
                    target[(c, r)] = v;
                }
                "end" => {
                    let (name, dim, constant, coeffs) = current.take().ok_or_else(|| err(line, "end without block"))?;
                    psd.push(ConeBlock { name, dim, constant, coeffs: coeffs.into_iter().collect() });
                }
                _ => return Err(err(line, "unknown directive")),
            }
        }
        if current.is_some() {
            return Err(err(text.lines().count(), "unterminated block"));
        }
        let scalar_count = scalar_count.ok_or_else(|| err(0, "missing scalars line"))?;
        if objective.len() != scalar_count {
            return Err(err(0, "objective length differs from scalar count"));
        }
        Ok(Self { scalar_count, objective, psd, orthant, layout })
    }
}

fn sanitize(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn upper_triplets(m: &Mat) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    (0..m.rows())
        .flat_map(move |r| (r..m.cols()).map(move |c| (r, c, m[(r, c)])))
        .filter(|t| t.2 != 0.0)
}

fn unpack_var(kind: VarKind, x: &[f64]) -> Mat {
    match kind {
        VarKind::Symmetric(n) => {
            let mut m = Mat::zeros(n, n);
            let mut k = 0;
            for a in 0..n {
                for b in a..n {
                    m[(a, b)] = x[k];
                    m[(b, a)] = x[k];
                    k += 1;
                }
            }
            m
        }
        VarKind::Matrix { rows, cols } => Mat::from_vec(rows, cols, x[..rows * cols].to_vec())
            .unwrap_or_else(|_| Mat::zeros(rows, cols)),
        VarKind::Nonnegative => Mat::scalar(x[0]),
    }
}

/// Basis matrices `(scalar offset, E_k)` of a matrix-valued variable.
fn basis(kind: VarKind) -> Vec<Mat> {
    match kind {
        VarKind::Symmetric(n) => {
            let mut out = Vec::with_capacity(n * (n + 1) / 2);
            for a in 0..n {
                for b in a..n {
                    let mut e = Mat::zeros(n, n);
                    e[(a, b)] = 1.0;
                    e[(b, a)] = 1.0;
                    out.push(e);
                }
            }
            out
        }
        VarKind::Matrix { rows, cols } => (0..rows * cols)
            .map(|k| {
                let mut e = Mat::zeros(rows, cols);
                e[(k / cols, k % cols)] = 1.0;
                e
            })
            .collect(),
        VarKind::Nonnegative => vec![Mat::scalar(1.0)],
    }
}

/// Lowers a named-variable problem to a [`ConicProgram`].
pub fn scalarize(p: &SdpProblem) -> Result<ConicProgram, SdpError> {
    if p.constraints().is_empty() {
        return Err(SdpError::NoConstraints);
    }
    let mut layout = Vec::with_capacity(p.variables().len());
    let mut offset = 0;
    for v in p.variables() {
        layout.push((v.name.clone(), v.kind, offset));
        offset += v.kind.scalar_count();
    }
    let scalar_count = offset;
    let nvars = p.variables().len();
    let check_var = |lmi: &str, id: super::VarId| {
        if id.0 >= nvars {
            Err(SdpError::UndeclaredVariable { constraint: lmi.to_string(), index: id.0 })
        } else {
            Ok(())
        }
    };

    let mut referenced = vec![false; nvars];
    let mut psd = Vec::with_capacity(p.constraints().len());
    for lmi in p.constraints() {
        let d = lmi.dim();
        let mut f0 = Mat::zeros(d, d);
        let mut fi: BTreeMap<usize, Mat> = BTreeMap::new();
        for (&(bi, bj), expr) in lmi.blocks() {
            let (ro, co) = (lmi.block_offset(bi), lmi.block_offset(bj));
            for term in expr.terms() {
                let place = |target: &mut Mat, m: &Mat| {
                    for r in 0..m.rows() {
                        for c in 0..m.cols() {
                            target[(ro + r, co + c)] += m[(r, c)];
                            if bi != bj {
                                target[(co + c, ro + r)] += m[(r, c)];
                            }
                        }
                    }
                };
                match term {
                    Term::Const(m) => place(&mut f0, m),
                    Term::Product { left, var, right, transposed } => {
                        check_var(&lmi.name, *var)?;
                        referenced[var.0] = true;
                        let (name, kind, off) = &layout[var.0];
                        let (vr, vc) = kind.shape();
                        let (vr, vc) = if *transposed { (vc, vr) } else { (vr, vc) };
                        if matches!(kind, VarKind::Nonnegative) || left.cols() != vr || right.rows() != vc {
                            return Err(SdpError::ShapeMismatch {
                                constraint: lmi.name.clone(),
                                variable: name.clone(),
                            });
                        }
                        for (k, e) in basis(*kind).into_iter().enumerate() {
                            let e = if *transposed { e.transpose() } else { e };
                            let contrib = &(left * &e) * right;
                            if contrib.max_abs() == 0.0 {
                                continue;
                            }
                            let target = fi.entry(off + k).or_insert_with(|| Mat::zeros(d, d));
                            place(target, &contrib);
                        }
                    }
                    Term::Scaled { var, coeff } => {
                        check_var(&lmi.name, *var)?;
                        referenced[var.0] = true;
                        let (name, kind, off) = &layout[var.0];
                        if !matches!(kind, VarKind::Nonnegative) {
                            return Err(SdpError::ShapeMismatch {
                                constraint: lmi.name.clone(),
                                variable: name.clone(),
                            });
                        }
                        let target = fi.entry(*off).or_insert_with(|| Mat::zeros(d, d));
                        place(target, coeff);
                    }
                }
            }
        }
        let asym = std::iter::once(&f0).chain(fi.values()).map(Mat::asymmetry).fold(0.0, f64::max);
        let scale = std::iter::once(&f0).chain(fi.values()).map(Mat::max_abs).fold(1.0, f64::max);
        if asym > 1e-12 * scale {
            return Err(SdpError::NonSymmetricBlock { constraint: lmi.name.clone() });
        }
        let (constant, sign) = match lmi.sense {
            Sense::NegativeSemidefinite => (f0.scale(-1.0), 1.0),
            Sense::PositiveSemidefinite => (f0, -1.0),
            Sense::PositiveDefinite { margin } => (&f0 - &Mat::identity(d).scale(margin), -1.0),
        };
        psd.push(ConeBlock {
            name: lmi.name.clone(),
            dim: d,
            constant: constant.symmetrize(),
            coeffs: fi.into_iter().map(|(i, m)| (i, m.scale(sign).symmetrize())).collect(),
        });
    }

    let mut orthant = Vec::new();
    for (v, (_, kind, off)) in layout.iter().enumerate() {
        if matches!(kind, VarKind::Nonnegative) {
            orthant.push(*off);
            referenced[v] = true;
        }
    }
    if let Some(v) = referenced.iter().position(|r| !r) {
        return Err(SdpError::UnconstrainedVariable { variable: layout[v].0.clone() });
    }

    let mut objective = vec![0.0; scalar_count];
    let obj = p.objective();
    if obj.traces.is_empty() && obj.scalars.is_empty() {
        return Err(SdpError::EmptyObjective);
    }
    for &(var, w) in &obj.traces {
        check_var("objective", var)?;
        let (name, kind, off) = &layout[var.0];
        match *kind {
            VarKind::Symmetric(n) => {
                let mut k = 0;
                for a in 0..n {
                    for b in a..n {
                        if a == b {
                            objective[off + k] += w;
                        }
                        k += 1;
                    }
                }
            }
            _ => return Err(SdpError::ObjectiveNotSymmetric { variable: name.clone() }),
        }
    }
    for &(var, w) in &obj.scalars {
        check_var("objective", var)?;
        let (name, kind, off) = &layout[var.0];
        if !matches!(kind, VarKind::Nonnegative) {
            return Err(SdpError::ShapeMismatch { constraint: "objective".into(), variable: name.clone() });
        }
        objective[*off] += w;
    }

    Ok(ConicProgram { scalar_count, objective, psd, orthant, layout })
}
