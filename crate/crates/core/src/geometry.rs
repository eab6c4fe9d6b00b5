//! Pointwise Riemannian geometry on a single coordinate chart.
//!
//! Curvature convention: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, stored as
//! `R^l_{ijk}` with `R(∂_i,∂_j)∂_k = R^l_{ijk} ∂_l`. Ricci is the frame trace
//! `Ric(X,Y) = Σ_i g(R(X,e_i)e_i, Y)`, which is positive on round spheres.
//!
//! All connection and curvature coefficients are built once as symbolic
//! expressions from the metric entries and compiled into tapes, so pointwise
//! evaluation involves no numerical differentiation.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::symbolic::{self, Expr, Tape};

/// Orthonormal frame at a point: row `i` holds the coordinate components of `e_i`.
pub type Frame = DMatrix<f64>;

/// Riemannian metric on one coordinate chart.
pub struct ChartManifold {
    name: String,
    dim: usize,
    /// Upper triangle of `g_ij`, row-major over `i <= j`.
    metric: Vec<Expr>,
    bounds: Option<Vec<(f64, f64)>>,
    periods: Vec<Option<f64>>,
    derived: OnceLock<Derived>,
}

struct Derived {
    metric: Vec<Expr>,
    inverse: Vec<Expr>,
    christoffel: Vec<Expr>,
    christoffel_grad: Vec<Expr>,
    riemann: Vec<Expr>,
    metric_tape: Tape,
    christoffel_tape: Tape,
    christoffel_grad_tape: Tape,
    riemann_tape: Tape,
}

impl std::fmt::Debug for ChartManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartManifold")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

fn upper_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

impl ChartManifold {
    /// Build from the upper triangle of the metric (row-major, `i <= j`).
    pub fn new(name: impl Into<String>, dim: usize, upper: Vec<Expr>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("manifold dimension must be positive".into()));
        }
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::Dimension(format!(
                "expected {} upper-triangle metric entries, got {}",
                dim * (dim + 1) / 2,
                upper.len()
            )));
        }
        if let Some(v) = upper.iter().filter_map(Expr::max_var).max() {
            if v >= dim {
                return Err(Error::Dimension(format!(
                    "metric references x{v} on a {dim}-dimensional chart"
                )));
            }
        }
        Ok(ChartManifold {
            name: name.into(),
            dim,
            metric: upper,
            bounds: None,
            periods: vec![None; dim],
            derived: OnceLock::new(),
        })
    }

    /// Build from a full square matrix; the lower triangle must repeat the upper one.
    pub fn from_matrix(name: impl Into<String>, rows: Vec<Vec<Expr>>) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("metric matrix must be square".into()));
        }
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Config(format!("metric entry ({i},{j}) is not symmetric")));
                }
                upper.push(rows[i][j].clone());
            }
        }
        Self::new(name, dim, upper)
    }

    /// Metric `factor · δ_ij`.
    pub fn conformally_flat(name: impl Into<String>, dim: usize, factor: Expr) -> Result<Self> {
        let upper = (0..dim)
            .flat_map(|i| (i..dim).map(move |j| (i, j)))
            .map(|(i, j)| if i == j { factor.clone() } else { Expr::zero() })
            .collect();
        Self::new(name, dim, upper)
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim || bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config(format!("invalid bounds for '{}'", self.name)));
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    /// Mark coordinate axes as periodic with the given period.
    pub fn with_periods(mut self, periods: Vec<Option<f64>>) -> Result<Self> {
        if periods.len() != self.dim {
            return Err(Error::Dimension("one period entry per axis".into()));
        }
        self.periods = periods;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    pub fn metric_entry(&self, i: usize, j: usize) -> &Expr {
        &self.metric[upper_index(self.dim, i, j)]
    }

    /// Whether `p` lies in the chart box. Periodic axes always qualify.
    pub fn contains(&self, p: &[f64]) -> bool {
        let Some(bounds) = &self.bounds else {
            return p.iter().all(|v| v.is_finite());
        };
        p.iter()
            .zip(bounds)
            .zip(&self.periods)
            .all(|((&v, &(lo, hi)), period)| {
                let slack = 1e-9 * (hi - lo);
                v.is_finite() && (period.is_some() || (v >= lo - slack && v <= hi + slack))
            })
    }

    pub(crate) fn check_in_chart(&self, p: &[f64]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::ChartExit {
                manifold: self.name.clone(),
                point: p.to_vec(),
            })
        }
    }

    /// Coordinate difference `b - a`, wrapped to the nearest image on periodic axes.
    pub fn coordinate_delta(&self, axis: usize, a: f64, b: f64) -> f64 {
        let d = b - a;
        match self.periods[axis] {
            Some(period) => d - period * (d / period).round(),
            None => d,
        }
    }

    fn derived(&self) -> &Derived {
        self.derived.get_or_init(|| Derived::build(self))
    }

    /// Full `g_ij` as expressions, row-major.
    pub fn metric_exprs(&self) -> &[Expr] {
        &self.derived().metric
    }

    /// Full `g^ij` as expressions, row-major.
    pub fn inverse_metric_exprs(&self) -> &[Expr] {
        &self.derived().inverse
    }

    /// `Γ^k_ij` as expressions, indexed `[k][i][j]`.
    pub fn christoffel_exprs(&self) -> &[Expr] {
        &self.derived().christoffel
    }

    /// `∂_m Γ^k_ij`, indexed `[m][k][i][j]`.
    pub fn christoffel_grad_exprs(&self) -> &[Expr] {
        &self.derived().christoffel_grad
    }

    /// `R^l_ijk`, indexed `[l][i][j][k]`.
    pub fn riemann_exprs(&self) -> &[Expr] {
        &self.derived().riemann
    }

    fn square(&self, values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, values)
    }

    /// Metric, inverse and determinant at `p`, after a leading-principal-minor check.
    pub fn metric_at(&self, p: &[f64]) -> Result<MetricValue> {
        let g = self.square(&self.derived().metric_tape.eval(p)?);
        let not_pd = || Error::NotPositiveDefinite {
            manifold: self.name.clone(),
            point: p.to_vec(),
        };
        for k in 1..=self.dim {
            let minor = g.view((0, 0), (k, k)).determinant();
            if !(minor > 0.0) {
                return Err(not_pd());
            }
        }
        let determinant = g.determinant();
        let inverse = g.clone().try_inverse().ok_or_else(not_pd)?;
        Ok(MetricValue {
            matrix: g,
            inverse,
            determinant,
        })
    }

    pub fn christoffel_at(&self, p: &[f64]) -> Result<ChristoffelArray> {
        self.metric_at(p)?;
        Ok(ChristoffelArray {
            dim: self.dim,
            data: self.derived().christoffel_tape.eval(p)?,
        })
    }

    /// `∂_m Γ^k_ij` at `p`, indexed `[m][k][i][j]`.
    pub fn christoffel_grad_at(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(self.derived().christoffel_grad_tape.eval(p)?)
    }

    pub fn riemann_at(&self, p: &[f64]) -> Result<CurvatureValue> {
        let frame = self.orthonormal_frame_at(p)?;
        self.riemann_in_frame(p, &frame)
    }

    /// Curvature with Ricci traced over the supplied orthonormal frame.
    pub fn riemann_in_frame(&self, p: &[f64], frame: &Frame) -> Result<CurvatureValue> {
        let metric = self.metric_at(p)?;
        let riemann = self.derived().riemann_tape.eval(p)?;
        let d = self.dim;
        let mut curvature = CurvatureValue {
            dim: d,
            riemann,
            ricci: DMatrix::zeros(d, d),
        };
        let mut ricci = DMatrix::zeros(d, d);
        for a in 0..d {
            let mut unit = vec![0.0; d];
            unit[a] = 1.0;
            for i in 0..frame.nrows() {
                let e: Vec<f64> = frame.row(i).iter().copied().collect();
                let w = curvature.apply(&unit, &e, &e);
                for b in 0..d {
                    ricci[(a, b)] += (0..d).map(|l| w[l] * metric.matrix[(l, b)]).sum::<f64>();
                }
            }
        }
        curvature.ricci = ricci;
        Ok(curvature)
    }

    /// Components of `grad λ`: `g^ij ∂_j λ`.
    pub fn gradient_at(&self, lambda: &Expr, p: &[f64]) -> Result<Vec<f64>> {
        let metric = self.metric_at(p)?;
        let grads: Vec<Expr> = (0..self.dim).map(|j| lambda.derive(j)).collect();
        let dl = DVector::from_vec(Tape::compile(&grads).eval(p)?);
        Ok((metric.inverse * dl).iter().copied().collect())
    }

    /// `Hess λ_ij = ∂_i∂_j λ − Γ^k_ij ∂_k λ`.
    pub fn hessian_at(&self, lambda: &Expr, p: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        let gamma = self.christoffel_at(p)?;
        let first: Vec<Expr> = (0..d).map(|j| lambda.derive(j)).collect();
        let mut exprs = first.clone();
        for i in 0..d {
            for j in 0..d {
                exprs.push(first[i].derive(j));
            }
        }
        let v = Tape::compile(&exprs).eval(p)?;
        let (dl, ddl) = v.split_at(d);
        Ok(DMatrix::from_fn(d, d, |i, j| {
            ddl[i * d + j] - (0..d).map(|k| gamma.get(k, i, j) * dl[k]).sum::<f64>()
        }))
    }

    /// Divergence `(div α)_J = g^ik (∇_i α)_{kJ}` of a covariant tensor field.
    pub fn divergence_tensor_at(&self, alpha: &CovariantTensor, p: &[f64]) -> Result<Vec<f64>> {
        self.divergence_of(alpha)?.at(self, p)
    }

    /// Compiles `alpha` and its first derivatives once, for repeated divergence evaluation.
    pub fn divergence_of(&self, alpha: &CovariantTensor) -> Result<TensorDivergence> {
        let d = self.dim;
        if alpha.rank == 0 {
            return Err(Error::Dimension("divergence needs rank >= 1".into()));
        }
        if alpha.dim != d {
            return Err(Error::Dimension(format!(
                "tensor over dimension {} on a {d}-dimensional chart",
                alpha.dim
            )));
        }
        let mut exprs = alpha.components.clone();
        for i in 0..d {
            exprs.extend(Expr::derive_all(&alpha.components, i));
        }
        Ok(TensorDivergence {
            alpha: alpha.clone(),
            tape: Tape::compile(&exprs),
        })
    }

    /// Gram–Schmidt on the coordinate frame in index order.
    pub fn orthonormal_frame_at(&self, p: &[f64]) -> Result<Frame> {
        let metric = self.metric_at(p)?;
        Ok(gram_schmidt(&metric.matrix))
    }

    /// `g`-operator norm of a symmetric bilinear form: largest |eigenvalue| of `g⁻¹S`.
    pub fn form_norm(frame: &Frame, form: &DMatrix<f64>) -> f64 {
        let a = frame * form * frame.transpose();
        let sym = (&a + a.transpose()) * 0.5;
        SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Covariant tensor with compiled first derivatives; see [`ChartManifold::divergence_of`].
pub struct TensorDivergence {
    alpha: CovariantTensor,
    tape: Tape,
}

impl TensorDivergence {
    pub fn at(&self, m: &ChartManifold, p: &[f64]) -> Result<Vec<f64>> {
        let alpha = &self.alpha;
        let d = alpha.dim;
        let rank = alpha.rank;
        let metric = m.metric_at(p)?;
        let gamma = m.christoffel_at(p)?;
        let n = alpha.components.len();
        let v = self.tape.eval(p)?;
        let (vals, grads) = v.split_at(n);

        let out_len = d.pow(rank as u32 - 1);
        let mut out = vec![0.0; out_len];
        let mut idx = vec![0usize; rank];
        for (flat, value) in out.iter_mut().enumerate() {
            // trailing indices J of the output
            let mut rest = flat;
            for s in (1..rank).rev() {
                idx[s] = rest % d;
                rest /= d;
            }
            let mut acc = 0.0;
            for i in 0..d {
                for k in 0..d {
                    let ginv = metric.inverse[(i, k)];
                    if ginv == 0.0 {
                        continue;
                    }
                    idx[0] = k;
                    let mut cov = grads[i * n + alpha.flat(&idx)];
                    for s in 0..rank {
                        let orig = idx[s];
                        for l in 0..d {
                            let c = gamma.get(l, i, orig);
                            if c != 0.0 {
                                idx[s] = l;
                                cov -= c * vals[alpha.flat(&idx)];
                            }
                        }
                        idx[s] = orig;
                    }
                    acc += ginv * cov;
                }
            }
            *value = acc;
        }
        Ok(out)
    }
}

/// Orthonormalize the coordinate basis against `g`; rows are the frame vectors.
pub fn gram_schmidt(g: &DMatrix<f64>) -> Frame {
    let d = g.nrows();
    let inner = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * g * b)[(0, 0)];
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        for e in &rows {
            let c = inner(&v, e);
            v -= e * c;
        }
        let norm = inner(&v, &v).sqrt();
        rows.push(v / norm);
    }
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

impl Derived {
    fn build(m: &ChartManifold) -> Derived {
        let d = m.dim;
        let metric: Vec<Expr> = (0..d * d)
            .map(|ij| m.metric_entry(ij / d, ij % d).clone())
            .collect();
        let inverse = symbolic_inverse(&metric, d);

        // dg[l][i][j] = ∂_l g_ij
        let dg: Vec<Expr> = (0..d * d * d)
            .map(|lij| metric[lij % (d * d)].derive(lij / (d * d)))
            .collect();
        let dg_at = |l: usize, i: usize, j: usize| &dg[(l * d + i) * d + j];

        let mut christoffel = vec![Expr::zero(); d * d * d];
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let g = symbolic::sum((0..d).map(|l| {
                        let bracket = dg_at(i, j, l) + dg_at(j, i, l) - dg_at(l, i, j);
                        &inverse[k * d + l] * bracket
                    })) * 0.5;
                    christoffel[(k * d + i) * d + j] = g.clone();
                    christoffel[(k * d + j) * d + i] = g;
                }
            }
        }
        let gamma = |k: usize, i: usize, j: usize| &christoffel[(k * d + i) * d + j];

        let christoffel_grad: Vec<Expr> = (0..d * d * d * d)
            .map(|mkij| christoffel[mkij % (d * d * d)].derive(mkij / (d * d * d)))
            .collect();
        let dgamma = |m: usize, k: usize, i: usize, j: usize| {
            &christoffel_grad[((m * d + k) * d + i) * d + j]
        };

        let mut riemann = vec![Expr::zero(); d * d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in (i + 1)..d {
                    for k in 0..d {
                        let quad = symbolic::sum((0..d).map(|s| {
                            gamma(l, i, s) * gamma(s, j, k) - gamma(l, j, s) * gamma(s, i, k)
                        }));
                        let r = dgamma(i, l, j, k) - dgamma(j, l, i, k) + quad;
                        riemann[((l * d + i) * d + j) * d + k] = r.clone();
                        riemann[((l * d + j) * d + i) * d + k] = -r;
                    }
                }
            }
        }

        Derived {
            metric_tape: Tape::compile(&metric),
            christoffel_tape: Tape::compile(&christoffel),
            christoffel_grad_tape: Tape::compile(&christoffel_grad),
            riemann_tape: Tape::compile(&riemann),
            metric,
            inverse,
            christoffel,
            christoffel_grad,
            riemann,
        }
    }
}

fn symbolic_determinant(m: &[Expr], d: usize, rows: &[usize], cols: &[usize]) -> Expr {
    if rows.len() == 1 {
        return m[rows[0] * d + cols[0]].clone();
    }
    let row = rows[0];
    let sub_rows = &rows[1..];
    let mut acc = Expr::zero();
    for (c, &col) in cols.iter().enumerate() {
        let entry = &m[row * d + col];
        if entry.is_zero() {
            continue;
        }
        let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != col).collect();
        let term = entry * symbolic_determinant(m, d, sub_rows, &sub_cols);
        acc = if c % 2 == 0 { acc + term } else { acc - term };
    }
    acc
}

/// Inverse of a symmetric matrix of expressions: reciprocals for diagonal
/// metrics, adjugate over determinant otherwise.
fn symbolic_inverse(m: &[Expr], d: usize) -> Vec<Expr> {
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || m[i * d + j].is_zero()));
    if diagonal {
        return (0..d * d)
            .map(|ij| {
                let (i, j) = (ij / d, ij % d);
                if i == j {
                    1.0 / m[i * d + i].clone()
                } else {
                    Expr::zero()
                }
            })
            .collect();
    }
    let all: Vec<usize> = (0..d).collect();
    let det = symbolic_determinant(m, d, &all, &all);
    let mut inv = vec![Expr::zero(); d * d];
    for i in 0..d {
        for j in i..d {
            // inverse_ij = cofactor_ji / det
            let rows: Vec<usize> = all.iter().copied().filter(|&r| r != j).collect();
            let cols: Vec<usize> = all.iter().copied().filter(|&c| c != i).collect();
            let minor = symbolic_determinant(m, d, &rows, &cols);
            let cof = if (i + j) % 2 == 0 { minor } else { -minor };
            let entry = cof / det.clone();
            inv[i * d + j] = entry.clone();
            inv[j * d + i] = entry;
        }
    }
    inv
}

/// Metric evaluated at a point.
#[derive(Debug, Clone)]
pub struct MetricValue {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub determinant: f64,
}

impl MetricValue {
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = a.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.matrix[(i, j)] * a[i] * b[j];
            }
        }
        s
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }
}

/// `Γ^k_ij` at a point.
#[derive(Debug, Clone)]
pub struct ChristoffelArray {
    dim: usize,
    data: Vec<f64>,
}

impl ChristoffelArray {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// `Γ^k(X, Y) = Γ^k_ij X^i Y^j`.
    pub fn contract(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..d {
                    if x[i] == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        s += self.get(k, i, j) * x[i] * y[j];
                    }
                }
                s
            })
            .collect()
    }
}

/// Riemann and Ricci tensors at a point.
#[derive(Debug, Clone)]
pub struct CurvatureValue {
    dim: usize,
    riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
}

impl CurvatureValue {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `R^l_ijk`.
    pub fn riemann(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim;
        self.riemann[((l * d + i) * d + j) * d + k]
    }

    /// `R(X,Y)Z`.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..d {
                    let c = xy * z[k];
                    for (l, o) in out.iter_mut().enumerate() {
                        *o += self.riemann(l, i, j, k) * c;
                    }
                }
            }
        }
        out
    }

    pub fn ricci_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                s += self.ricci[(a, b)] * x[a] * y[b];
            }
        }
        s
    }
}

/// Covariant tensor field of rank `rank`, components row-major over its indices.
#[derive(Debug, Clone)]
pub struct CovariantTensor {
    pub dim: usize,
    pub rank: usize,
    pub components: Vec<Expr>,
}

impl CovariantTensor {
    pub fn new(dim: usize, rank: usize, components: Vec<Expr>) -> Result<Self> {
        if components.len() != dim.pow(rank as u32) {
            return Err(Error::Dimension(format!(
                "rank-{rank} tensor on dimension {dim} needs {} components",
                dim.pow(rank as u32)
            )));
        }
        Ok(CovariantTensor {
            dim,
            rank,
            components,
        })
    }

    pub fn one_form(components: Vec<Expr>) -> Self {
        CovariantTensor {
            dim: components.len(),
            rank: 1,
            components,
        }
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }
}
