use std::collections::BTreeMap;

use crate::linalg::Mat;

/// Handle to a declared decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Symmetric `dim × dim` block, scalarized by its upper triangle.
    Symmetric(usize),
    /// Unstructured `rows × cols` block.
    Matrix { rows: usize, cols: usize },
    /// Scalar constrained to be nonnegative.
    Nonnegative,
}

impl VarKind {
    /// Number of scalar unknowns the variable contributes.
    pub fn scalar_count(self) -> usize {
        match self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Matrix { rows, cols } => rows * cols,
            VarKind::Nonnegative => 1,
        }
    }

    pub fn shape(self) -> (usize, usize) {
        match self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Matrix { rows, cols } => (rows, cols),
            VarKind::Nonnegative => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpVariable {
    pub name: String,
    pub kind: VarKind,
}

/// One summand of an affine matrix expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Const(Mat),
    /// `left · X · right`, or `left · Xᵀ · right` when `transposed`.
    Product { left: Mat, var: VarId, right: Mat, transposed: bool },
    /// `s · coeff` for a scalar variable `s`.
    Scaled { var: VarId, coeff: Mat },
}

/// Affine expression with a fixed matrix shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    rows: usize,
    cols: usize,
    terms: Vec<Term>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, terms: Vec::new() }
    }

    pub fn constant(m: Mat) -> Self {
        let (rows, cols) = m.shape();
        Self { rows, cols, terms: vec![Term::Const(m)] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn plus_const(mut self, m: Mat) -> Self {
        assert_eq!(m.shape(), self.shape(), "constant term shape");
        self.terms.push(Term::Const(m));
        self
    }

    /// Adds `left · var · right`.
    pub fn plus_product(mut self, left: Mat, var: VarId, right: Mat) -> Self {
        assert_eq!((left.rows(), right.cols()), self.shape(), "product term shape");
        self.terms.push(Term::Product { left, var, right, transposed: false });
        self
    }

    /// Adds `coeff · var` for a matrix variable of matching shape.
    pub fn plus_var(self, coeff: f64, var: VarId) -> Self {
        let (r, c) = self.shape();
        self.plus_product(Mat::identity(r).scale(coeff), var, Mat::identity(c))
    }

    /// Adds `var · coeff` for a scalar variable.
    pub fn plus_scaled(mut self, var: VarId, coeff: Mat) -> Self {
        assert_eq!(coeff.shape(), self.shape(), "scaled term shape");
        self.terms.push(Term::Scaled { var, coeff });
        self
    }

    pub fn transpose(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Const(m) => Term::Const(m.transpose()),
                Term::Product { left, var, right, transposed } => Term::Product {
                    left: right.transpose(),
                    var: *var,
                    right: left.transpose(),
                    transposed: !transposed,
                },
                Term::Scaled { var, coeff } => Term::Scaled { var: *var, coeff: coeff.transpose() },
            })
            .collect();
        Self { rows: self.cols, cols: self.rows, terms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sense {
    /// `F(x) ⪯ 0`.
    NegativeSemidefinite,
    /// `F(x) ⪰ 0`.
    PositiveSemidefinite,
    /// `F(x) ⪰ margin·I`, the numerical stand-in for `F(x) ≻ 0`.
    PositiveDefinite { margin: f64 },
}

/// Symmetric block matrix of affine expressions constrained in the semidefinite order.
///
/// Only blocks on or above the diagonal are stored; `(j, i)` is the transpose
/// of `(i, j)`. Missing blocks are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub name: String,
    block_sizes: Vec<usize>,
    blocks: BTreeMap<(usize, usize), AffineExpr>,
    pub sense: Sense,
}

impl LmiConstraint {
    pub fn new(name: impl Into<String>, block_sizes: Vec<usize>, sense: Sense) -> Self {
        Self { name: name.into(), block_sizes, blocks: BTreeMap::new(), sense }
    }

    /// Single-block constraint.
    pub fn single(name: impl Into<String>, expr: AffineExpr, sense: Sense) -> Self {
        let (r, c) = expr.shape();
        assert_eq!(r, c, "single-block LMI must be square");
        let mut lmi = Self::new(name, vec![r], sense);
        lmi.set_block(0, 0, expr);
        lmi
    }

    /// Sets block `(i, j)`; a lower block is stored as the transpose of its mirror.
    pub fn set_block(&mut self, i: usize, j: usize, expr: AffineExpr) {
        let (i, j, expr) = if i <= j { (i, j, expr) } else { (j, i, expr.transpose()) };
        assert_eq!(
            expr.shape(),
            (self.block_sizes[i], self.block_sizes[j]),
            "block ({i},{j}) shape"
        );
        self.blocks.insert((i, j), expr);
    }

    pub fn with_block(mut self, i: usize, j: usize, expr: AffineExpr) -> Self {
        self.set_block(i, j, expr);
        self
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn dim(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub(crate) fn blocks(&self) -> impl Iterator<Item = (&(usize, usize), &AffineExpr)> {
        self.blocks.iter()
    }

    pub(crate) fn block_offset(&self, i: usize) -> usize {
        self.block_sizes[..i].iter().sum()
    }
}

/// Minimize `Σ weight·trace(X)` plus linear terms in scalar variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Objective {
    pub traces: Vec<(VarId, f64)>,
    pub scalars: Vec<(VarId, f64)>,
}

impl Objective {
    pub fn trace(var: VarId) -> Self {
        Self { traces: vec![(var, 1.0)], scalars: Vec::new() }
    }

    pub fn scalar(var: VarId, weight: f64) -> Self {
        Self { traces: Vec::new(), scalars: vec![(var, weight)] }
    }

    pub fn plus_scalar(mut self, var: VarId, weight: f64) -> Self {
        self.scalars.push((var, weight));
        self
    }
}

/// Trace-objective LMI program over named variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    variables: Vec<SdpVariable>,
    constraints: Vec<LmiConstraint>,
    objective: Objective,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn symmetric(&mut self, name: impl Into<String>, dim: usize) -> VarId {
        self.declare(name, VarKind::Symmetric(dim))
    }

    pub fn matrix(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> VarId {
        self.declare(name, VarKind::Matrix { rows, cols })
    }

    pub fn nonnegative(&mut self, name: impl Into<String>) -> VarId {
        self.declare(name, VarKind::Nonnegative)
    }

    fn declare(&mut self, name: impl Into<String>, kind: VarKind) -> VarId {
        self.variables.push(SdpVariable { name: name.into(), kind });
        VarId(self.variables.len() - 1)
    }

    pub fn constrain(&mut self, lmi: LmiConstraint) {
        self.constraints.push(lmi);
    }

    pub fn minimize(&mut self, objective: Objective) {
        self.objective = objective;
    }

    pub fn variables(&self) -> &[SdpVariable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &SdpVariable {
        &self.variables[id.0]
    }

    pub fn constraints(&self) -> &[LmiConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn scalar_count(&self) -> usize {
        self.variables.iter().map(|v| v.kind.scalar_count()).sum()
    }
}
