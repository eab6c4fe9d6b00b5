//! Vector-field analysis: Lie derivatives of the metric, conformal
//! classification, Ricci-soliton residuals and Jacobi-type residuals.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartManifold, Frame};
use crate::symbolic::{self, Expr, Tape};

/// Vector field `ξ = ξ^i ∂_i` on a chart, with an optional declared potential.
pub struct VectorFieldSpec {
    pub name: String,
    components: Vec<Expr>,
    pub potential: Option<Expr>,
    jet: OnceLock<Tape>,
}

impl Clone for VectorFieldSpec {
    fn clone(&self) -> Self {
        VectorFieldSpec::new(self.name.clone(), self.components.clone(), self.potential.clone())
    }
}

impl std::fmt::Debug for VectorFieldSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorFieldSpec")
            .field("name", &self.name)
            .field("components", &self.components)
            .field("potential", &self.potential)
            .finish()
    }
}

/// Values, first and second coordinate derivatives of a vector field at a point.
#[derive(Debug, Clone)]
pub struct FieldJet {
    dim: usize,
    pub value: Vec<f64>,
    /// `∂_i ξ^k` at `[i][k]`.
    first: Vec<f64>,
    /// `∂_i∂_j ξ^k` at `[i][j][k]`.
    second: Vec<f64>,
}

impl FieldJet {
    pub fn d1(&self, i: usize, k: usize) -> f64 {
        self.first[i * self.dim + k]
    }

    pub fn d2(&self, i: usize, j: usize, k: usize) -> f64 {
        self.second[(i * self.dim + j) * self.dim + k]
    }
}

impl VectorFieldSpec {
    pub fn new(name: impl Into<String>, components: Vec<Expr>, potential: Option<Expr>) -> Self {
        VectorFieldSpec {
            name: name.into(),
            components,
            potential,
            jet: OnceLock::new(),
        }
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// `−ξ`, with the potential negated as well.
    pub fn negated(&self) -> Self {
        VectorFieldSpec::new(
            format!("-{}", self.name),
            self.components.iter().map(|c| -c).collect(),
            self.potential.as_ref().map(|f| -f),
        )
    }

    /// `c·ξ`.
    pub fn scaled(&self, c: f64) -> Self {
        VectorFieldSpec::new(
            format!("{c}*{}", self.name),
            self.components.iter().map(|e| e.clone() * c).collect(),
            self.potential.as_ref().map(|f| f.clone() * c),
        )
    }

    /// Symbolic gradient `g^ij ∂_j f`.
    pub fn gradient_of(name: impl Into<String>, m: &ChartManifold, f: &Expr) -> Self {
        let d = m.dim();
        let inv = m.inverse_metric_exprs();
        let df: Vec<Expr> = (0..d).map(|j| f.derive(j)).collect();
        let comps = (0..d)
            .map(|i| symbolic::sum((0..d).map(|j| &inv[i * d + j] * &df[j])))
            .collect();
        VectorFieldSpec::new(name, comps, None)
    }

    pub(crate) fn check_dim(&self, m: &ChartManifold) -> Result<()> {
        if self.components.len() != m.dim() {
            return Err(Error::Dimension(format!(
                "field '{}' has {} components on {}-dimensional '{}'",
                self.name,
                self.components.len(),
                m.dim(),
                m.name()
            )));
        }
        Ok(())
    }

    fn jet_tape(&self) -> &Tape {
        self.jet.get_or_init(|| {
            let d = self.components.len();
            let mut exprs = self.components.clone();
            let first: Vec<Expr> = (0..d)
                .flat_map(|i| self.components.iter().map(move |c| c.derive(i)))
                .collect();
            exprs.extend(first.iter().cloned());
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        exprs.push(first[i * d + k].derive(j));
                    }
                }
            }
            Tape::compile(&exprs)
        })
    }

    pub fn jet_at(&self, p: &[f64]) -> Result<FieldJet> {
        let d = self.components.len();
        let v = self.jet_tape().eval(p)?;
        Ok(FieldJet {
            dim: d,
            value: v[..d].to_vec(),
            first: v[d..d + d * d].to_vec(),
            second: v[d + d * d..].to_vec(),
        })
    }
}

/// `(∇_i ξ)^k = ∂_i ξ^k + Γ^k_il ξ^l`, indexed `[i][k]`.
fn covariant_derivative(m: &ChartManifold, jet: &FieldJet, p: &[f64]) -> Result<DMatrix<f64>> {
    let d = m.dim();
    let gamma = m.christoffel_at(p)?;
    Ok(DMatrix::from_fn(d, d, |i, k| {
        jet.d1(i, k) + (0..d).map(|l| gamma.get(k, i, l) * jet.value[l]).sum::<f64>()
    }))
}

/// `(𝓛_ξ g)_ij = g(∇_i ξ, ∂_j) + g(∇_j ξ, ∂_i)`.
pub fn lie_derivative_metric_at(
    m: &ChartManifold,
    xi: &VectorFieldSpec,
    p: &[f64],
) -> Result<DMatrix<f64>> {
    xi.check_dim(m)?;
    let metric = m.metric_at(p)?;
    let nabla = covariant_derivative(m, &xi.jet_at(p)?, p)?;
    // row i of `nabla` is ∇_i ξ; lower its index with g
    let lowered = &nabla * &metric.matrix;
    Ok(&lowered + lowered.transpose())
}

/// Conformal trichotomy of a vector field.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConformalVerdict {
    Killing,
    Homothetic { k: f64 },
    Conformal,
    None,
}

impl std::fmt::Display for ConformalVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConformalVerdict::Killing => write!(f, "killing"),
            ConformalVerdict::Homothetic { k } => write!(f, "homothetic(k={k})"),
            ConformalVerdict::Conformal => write!(f, "conformal"),
            ConformalVerdict::None => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyTolerance {
    /// Bound on `sup ‖𝓛_ξ g − 2fg‖` for a conformal verdict, and on `|f|` for Killing.
    pub residual: f64,
    /// Homothetic iff `var(f) < relative_variance · (1 + |mean f|)`.
    pub relative_variance: f64,
}

impl Default for ClassifyTolerance {
    fn default() -> Self {
        ClassifyTolerance {
            residual: 1e-8,
            relative_variance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformalClassification {
    pub verdict: ConformalVerdict,
    pub residual_sup: f64,
    pub residual_mean: f64,
    /// Recovered potential `f = tr_g(𝓛_ξ g) / (2n)` at each sample.
    pub potentials: Vec<f64>,
    pub potential_mean: f64,
    pub potential_variance: f64,
}

/// Potential estimate and conformal residual `‖𝓛_ξ g − 2fg‖_g` at one point.
pub fn conformal_residual_at(
    m: &ChartManifold,
    xi: &VectorFieldSpec,
    p: &[f64],
) -> Result<(f64, f64)> {
    let d = m.dim();
    let metric = m.metric_at(p)?;
    let lie = lie_derivative_metric_at(m, xi, p)?;
    let trace = (&metric.inverse * &lie).trace();
    let f = trace / (2.0 * d as f64);
    let frame = m.orthonormal_frame_at(p)?;
    let defect = lie - &metric.matrix * (2.0 * f);
    Ok((f, ChartManifold::form_norm(&frame, &defect)))
}

pub fn classify_conformal(
    m: &ChartManifold,
    xi: &VectorFieldSpec,
    samples: &[Vec<f64>],
    tol: ClassifyTolerance,
) -> Result<ConformalClassification> {
    if samples.len() < 2 {
        return Err(Error::EmptySampleSet);
    }
    let mut potentials = Vec::with_capacity(samples.len());
    let mut residuals = Vec::with_capacity(samples.len());
    for p in samples {
        let (f, r) = conformal_residual_at(m, xi, p)?;
        potentials.push(f);
        residuals.push(r);
    }
    let (residual_sup, residual_mean) = sup_mean(&residuals);
    let n = potentials.len() as f64;
    let potential_mean = potentials.iter().sum::<f64>() / n;
    let potential_variance =
        potentials.iter().map(|f| (f - potential_mean).powi(2)).sum::<f64>() / n;
    let verdict = if residual_sup >= tol.residual {
        ConformalVerdict::None
    } else if potentials.iter().all(|f| f.abs() < tol.residual) {
        ConformalVerdict::Killing
    } else if potential_variance < tol.relative_variance * (1.0 + potential_mean.abs()) {
        ConformalVerdict::Homothetic { k: potential_mean }
    } else {
        ConformalVerdict::Conformal
    };
    Ok(ConformalClassification {
        verdict,
        residual_sup,
        residual_mean,
        potentials,
        potential_mean,
        potential_variance,
    })
}

/// Kind of soliton structure.
#[derive(Debug, Clone)]
pub enum SolitonKind {
    General,
    /// `ξ = grad f` for the stored potential.
    Gradient { potential: Expr },
}

/// Ricci soliton data `(ξ, λ)`.
#[derive(Debug, Clone)]
pub struct SolitonSpec {
    pub field: VectorFieldSpec,
    pub lambda: f64,
    pub kind: SolitonKind,
}

impl SolitonSpec {
    pub fn general(field: VectorFieldSpec, lambda: f64) -> Self {
        SolitonSpec {
            field,
            lambda,
            kind: SolitonKind::General,
        }
    }

    /// Gradient soliton with `ξ = grad f` formed symbolically.
    pub fn gradient(m: &ChartManifold, potential: Expr, lambda: f64) -> Self {
        SolitonSpec {
            field: VectorFieldSpec::gradient_of("grad f", m, &potential),
            lambda,
            kind: SolitonKind::Gradient { potential },
        }
    }

    /// Shrinking, steady or expanding, by the sign of λ.
    pub fn character(&self) -> &'static str {
        if self.lambda > 0.0 {
            "shrinking"
        } else if self.lambda < 0.0 {
            "expanding"
        } else {
            "steady"
        }
    }

    /// For gradient kind: sup over samples of `|ξ − grad f|_g`.
    pub fn gradient_consistency(&self, m: &ChartManifold, samples: &[Vec<f64>]) -> Result<f64> {
        let SolitonKind::Gradient { potential } = &self.kind else {
            return Ok(0.0);
        };
        let mut sup: f64 = 0.0;
        for p in samples {
            let grad = m.gradient_at(potential, p)?;
            let xi = self.field.jet_at(p)?.value;
            let diff: Vec<f64> = grad.iter().zip(&xi).map(|(a, b)| a - b).collect();
            sup = sup.max(m.metric_at(p)?.norm(&diff));
        }
        Ok(sup)
    }
}

/// `Ric + ½𝓛_ξ g − λg`.
pub fn soliton_residual_at(m: &ChartManifold, s: &SolitonSpec, p: &[f64]) -> Result<DMatrix<f64>> {
    let ricci = m.riemann_at(p)?.ricci;
    let lie = lie_derivative_metric_at(m, &s.field, p)?;
    let g = m.metric_at(p)?.matrix;
    Ok(ricci + lie * 0.5 - g * s.lambda)
}

/// `Ric + Hess f − λg`.
pub fn gradient_soliton_residual_at(
    m: &ChartManifold,
    f: &Expr,
    lambda: f64,
    p: &[f64],
) -> Result<DMatrix<f64>> {
    let ricci = m.riemann_at(p)?.ricci;
    let hess = m.hessian_at(f, p)?;
    let g = m.metric_at(p)?.matrix;
    Ok(ricci + hess - g * lambda)
}

/// Residual report row for one (manifold, field, check).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub check: String,
    pub manifold: String,
    pub field: String,
    pub sup: f64,
    pub mean: f64,
    pub verdict: String,
    pub params: BTreeMap<String, f64>,
    pub samples: usize,
}

pub(crate) fn sup_mean(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let sup = values.iter().fold(0.0f64, |m, v| m.max(*v));
    (sup, values.iter().sum::<f64>() / values.len() as f64)
}

impl ConformalClassification {
    pub fn report(&self, m: &ChartManifold, xi: &VectorFieldSpec) -> FieldReport {
        let mut params = BTreeMap::new();
        params.insert("potential_mean".into(), self.potential_mean);
        params.insert("potential_variance".into(), self.potential_variance);
        FieldReport {
            check: "classify-field".into(),
            manifold: m.name().into(),
            field: xi.name.clone(),
            sup: self.residual_sup,
            mean: self.residual_mean,
            verdict: self.verdict.to_string(),
            params,
            samples: self.potentials.len(),
        }
    }
}

/// Soliton residual in the `g`-operator norm over a sample set.
pub fn soliton_report(
    m: &ChartManifold,
    s: &SolitonSpec,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<FieldReport> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    s.field.check_dim(m)?;
    let mut residuals = Vec::with_capacity(samples.len());
    for p in samples {
        let r = match &s.kind {
            SolitonKind::Gradient { potential } => {
                gradient_soliton_residual_at(m, potential, s.lambda, p)?
            }
            SolitonKind::General => soliton_residual_at(m, s, p)?,
        };
        residuals.push(ChartManifold::form_norm(&m.orthonormal_frame_at(p)?, &r));
    }
    let (sup, mean) = sup_mean(&residuals);
    let mut params = BTreeMap::new();
    params.insert("lambda".into(), s.lambda);
    params.insert("tolerance".into(), tol);
    Ok(FieldReport {
        check: "check-soliton".into(),
        manifold: m.name().into(),
        field: s.field.name.clone(),
        sup,
        mean,
        verdict: if sup < tol {
            format!("soliton({})", s.character())
        } else {
            "none".into()
        },
        params,
        samples: samples.len(),
    })
}

/// Left side of `∇_X∇_X ξ − ∇_{∇_X X}ξ + R(ξ,X)X` for the coordinate-constant
/// extension of `x` around `p`.
pub fn jacobi_type_residual_at(
    m: &ChartManifold,
    xi: &VectorFieldSpec,
    p: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    let d = m.dim();
    jacobi_type_residual_extended(m, xi, p, x, &DMatrix::zeros(d, d))
}

/// Same residual for an extension of `X` with Jacobian `dx[(i, j)] = ∂_j X^i` at `p`.
pub fn jacobi_type_residual_extended(
    m: &ChartManifold,
    xi: &VectorFieldSpec,
    p: &[f64],
    x: &[f64],
    dx: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    xi.check_dim(m)?;
    let d = m.dim();
    let jet = xi.jet_at(p)?;
    let gamma = m.christoffel_at(p)?;
    let dgamma = m.christoffel_grad_at(p)?;
    let dg = |mm: usize, k: usize, i: usize, j: usize| dgamma[((mm * d + k) * d + i) * d + j];
    let curvature = m.riemann_at(p)?;

    // a[i][k] = (∇_i ξ)^k and its coordinate derivative da[j][i][k]
    let a = covariant_derivative(m, &jet, p)?;
    let da = |j: usize, i: usize, k: usize| {
        jet.d2(j, i, k)
            + (0..d)
                .map(|l| dg(j, k, i, l) * jet.value[l] + gamma.get(k, i, l) * jet.d1(j, l))
                .sum::<f64>()
    };

    // Y = ∇_X ξ
    let y: Vec<f64> = (0..d).map(|k| (0..d).map(|i| x[i] * a[(i, k)]).sum()).collect();
    let dy = |j: usize, k: usize| {
        (0..d)
            .map(|i| dx[(i, j)] * a[(i, k)] + x[i] * da(j, i, k))
            .sum::<f64>()
    };
    let mut out = vec![0.0; d];
    let gamma_xy = gamma.contract(x, &y);
    let gamma_xx = gamma.contract(x, x);
    let nabla_xx: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| x[j] * dx[(i, j)]).sum::<f64>() + gamma_xx[i])
        .collect();
    let rxx = curvature.apply(&jet.value, x, x);
    for k in 0..d {
        let nabla_x_y = (0..d).map(|j| x[j] * dy(j, k)).sum::<f64>() + gamma_xy[k];
        let second = (0..d).map(|i| nabla_xx[i] * a[(i, k)]).sum::<f64>();
        out[k] = nabla_x_y - second + rxx[k];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchSign {
    Above,
    Below,
}

#[derive(Debug, Clone, Serialize)]
pub struct PinchReport {
    pub lambda: f64,
    pub sign: PinchSign,
    /// Smallest eigenvalue of `g⁻¹Ric` over the samples.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub above: bool,
    pub below: bool,
    /// Worst gap in the requested direction; positive iff the check holds.
    pub margin: f64,
    pub pass: bool,
}

/// Eigenvalues of `g⁻¹Ric` at `p`, ascending.
pub fn ricci_eigenvalues_at(m: &ChartManifold, p: &[f64]) -> Result<Vec<f64>> {
    let frame = m.orthonormal_frame_at(p)?;
    let ricci = m.riemann_in_frame(p, &frame)?.ricci;
    Ok(frame_eigenvalues(&frame, &ricci))
}

fn frame_eigenvalues(frame: &Frame, form: &DMatrix<f64>) -> Vec<f64> {
    let a = frame * form * frame.transpose();
    let mut ev: Vec<f64> = SymmetricEigen::new((&a + a.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn ricci_pinch_check(
    m: &ChartManifold,
    lambda: f64,
    samples: &[Vec<f64>],
    sign: PinchSign,
) -> Result<PinchReport> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in samples {
        let ev = ricci_eigenvalues_at(m, p)?;
        lo = lo.min(ev[0]);
        hi = hi.max(ev[ev.len() - 1]);
    }
    let above = lo > lambda;
    let below = hi < lambda;
    let (margin, pass) = match sign {
        PinchSign::Above => (lo - lambda, above),
        PinchSign::Below => (lambda - hi, below),
    };
    Ok(PinchReport {
        lambda,
        sign,
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        above,
        below,
        margin,
        pass,
    })
}

/// Lie bracket `[V,W]^i = V^j ∂_j W^i − W^j ∂_j V^i`, formed symbolically.
pub fn lie_bracket(v: &[Expr], w: &[Expr]) -> Vec<Expr> {
    let d = v.len();
    (0..d)
        .map(|i| {
            symbolic::sum((0..d).map(|j| &v[j] * w[i].derive(j) - &w[j] * v[i].derive(j)))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutatorReport {
    /// `sup ‖∇_U ζ − |grad f|² U‖_g` over samples and coordinate directions `U`.
    pub sup: f64,
    pub mean: f64,
    pub hessian_sup: f64,
    pub zeta: Vec<String>,
    pub zeta_classification: ConformalClassification,
    pub xi_classification: ConformalClassification,
}

/// Checks that `ζ = [grad f, ξ]` satisfies `∇_U ζ = |grad f|² U` when `grad f`
/// is parallel and `ξ` is conformal with non-constant potential.
pub fn homothetic_commutator_check(
    m: &ChartManifold,
    f: &Expr,
    xi: &VectorFieldSpec,
    samples: &[Vec<f64>],
    tol: ClassifyTolerance,
) -> Result<CommutatorReport> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    xi.check_dim(m)?;
    let d = m.dim();
    let mut hessian_sup: f64 = 0.0;
    let mut grad_sup: f64 = 0.0;
    for p in samples {
        let frame = m.orthonormal_frame_at(p)?;
        hessian_sup = hessian_sup.max(ChartManifold::form_norm(&frame, &m.hessian_at(f, p)?));
        grad_sup = grad_sup.max(m.metric_at(p)?.norm(&m.gradient_at(f, p)?));
    }
    if hessian_sup >= tol.residual {
        return Err(Error::PreconditionFailed(format!(
            "grad f is not parallel (sup |Hess f| = {hessian_sup:e})"
        )));
    }
    if grad_sup < tol.residual {
        return Err(Error::PreconditionFailed("f is constant; grad f vanishes".into()));
    }
    let xi_classification = classify_conformal(m, xi, samples, tol)?;
    if xi_classification.verdict != ConformalVerdict::Conformal {
        return Err(Error::PreconditionFailed(format!(
            "field '{}' must be conformal with non-constant potential, got {}",
            xi.name, xi_classification.verdict
        )));
    }

    let grad = VectorFieldSpec::gradient_of("grad f", m, f);
    let zeta = VectorFieldSpec::new(
        format!("[grad f, {}]", xi.name),
        lie_bracket(grad.components(), xi.components()),
        None,
    );
    let mut residuals = Vec::with_capacity(samples.len() * d);
    for p in samples {
        let metric = m.metric_at(p)?;
        let grad_norm2 = metric.inner(&grad.jet_at(p)?.value, &grad.jet_at(p)?.value);
        let nabla = covariant_derivative(m, &zeta.jet_at(p)?, p)?;
        for u in 0..d {
            let diff: Vec<f64> = (0..d)
                .map(|k| nabla[(u, k)] - if k == u { grad_norm2 } else { 0.0 })
                .collect();
            residuals.push(metric.norm(&diff));
        }
    }
    let (sup, mean) = sup_mean(&residuals);
    let zeta_classification = classify_conformal(m, &zeta, samples, tol)?;
    Ok(CommutatorReport {
        sup,
        mean,
        hessian_sup,
        zeta: zeta.components().iter().map(|e| e.to_string()).collect(),
        zeta_classification,
        xi_classification,
    })
}
