//! Pointwise checks of the divergence identities behind the Liouville-type
//! results, in forms that hold for arbitrary maps, plus the hypersurface suite.
//!
//! Every identity compares two independent evaluations. The left side is
//! the divergence of a one-form assembled symbolically (target expressions
//! composed with the map) and differentiated by the symbolic engine. The right
//! side is built from the numeric operators of [`crate::maps`] and
//! [`crate::fields`].

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{self, ClassifyTolerance, ConformalVerdict, SolitonSpec, VectorFieldSpec};
use crate::geometry::{ChartManifold, CovariantTensor, Frame, MetricValue, TensorDivergence};
use crate::maps::{self, SmoothMapSpec, VariationField};
use crate::symbolic::{self, Expr};

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub point: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// `|left − right|` for scalars; a norm of the difference otherwise.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub tolerance: f64,
    pub rows: Vec<IdentityRow>,
    pub sup: f64,
    pub mean: f64,
    pub pass: bool,
    pub params: BTreeMap<String, f64>,
    pub sub_reports: Vec<IdentityReport>,
}

impl IdentityReport {
    pub fn from_rows(name: impl Into<String>, tolerance: f64, rows: Vec<IdentityRow>) -> Self {
        let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        let (sup, mean) = fields::sup_mean(&residuals);
        IdentityReport {
            name: name.into(),
            tolerance,
            pass: !rows.is_empty() && residuals.iter().all(|r| *r < tolerance),
            rows,
            sup,
            mean,
            params: BTreeMap::new(),
            sub_reports: Vec::new(),
        }
    }

    /// Pass of this report and of every nested one.
    pub fn all_pass(&self) -> bool {
        self.pass && self.sub_reports.iter().all(IdentityReport::all_pass)
    }

    fn scalar_row(point: &[f64], left: f64, right: f64) -> IdentityRow {
        IdentityRow {
            point: point.to_vec(),
            left: vec![left],
            right: vec![right],
            residual: (left - right).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOptions {
    pub tolerance: f64,
    /// Bound used when checking hypotheses (conformality, soliton equation, Jacobi type).
    pub precondition_tolerance: f64,
    /// When false, the biharmonic chain keeps the Jacobi-type defect of `ξ` as an
    /// explicit term instead of rejecting the field.
    pub require_jacobi_type: bool,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        IdentityOptions {
            tolerance: 1e-6,
            precondition_tolerance: 1e-8,
            require_jacobi_type: true,
        }
    }
}

fn image_points(phi: &SmoothMapSpec, samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|p| Ok(phi.jet_at(p, 0)?.value().to_vec()))
        .collect()
}

fn check_field(phi: &SmoothMapSpec, xi: &VectorFieldSpec) -> Result<()> {
    xi.check_dim(phi.target())
}

/// `Σ_{αβ} (h_αβ∘φ) a^α b^β` for expression vectors along `φ`.
fn pulled_inner(h: &[Expr], a: &[Expr], b: &[Expr]) -> Expr {
    let n = a.len();
    symbolic::sum((0..n).flat_map(|al| {
        (0..n).filter_map(move |be| {
            let c = &h[al * n + be];
            (!c.is_zero()).then(|| c * &a[al] * &b[be])
        })
    }))
}

/// `(∇^φ_{∂_i} v)^α` as expressions: `∂_i v^α + (Γ^α_βγ∘φ) ∂_i φ^β v^γ`.
fn pulled_covariant(phi: &SmoothMapSpec, gamma: &[Expr], v: &[Expr], i: usize) -> Vec<Expr> {
    let n = v.len();
    let dv = Expr::derive_all(v, i);
    let dphi = Expr::derive_all(phi.components(), i);
    (0..n)
        .map(|al| {
            let mut terms = vec![dv[al].clone()];
            for be in 0..n {
                for ga in 0..n {
                    let c = &gamma[(al * n + be) * n + ga];
                    if !c.is_zero() {
                        terms.push(c * &dphi[be] * &v[ga]);
                    }
                }
            }
            symbolic::sum(terms)
        })
        .collect()
}

fn compile_one_form(domain: &ChartManifold, components: Vec<Expr>) -> Result<TensorDivergence> {
    domain.divergence_of(&CovariantTensor::one_form(components))
}

fn frame_rows(frame: &Frame) -> Vec<Vec<f64>> {
    (0..frame.nrows()).map(|i| frame.row(i).iter().copied().collect()).collect()
}

/// `ω(X) = h(ξ∘φ, dφ(X))` as expressions in domain coordinates.
fn pulled_field_form(phi: &SmoothMapSpec, xi: &VectorFieldSpec) -> Vec<Expr> {
    let h = phi.compose_all(phi.target().metric_exprs());
    let v = phi.compose_all(xi.components());
    (0..phi.domain().dim())
        .map(|i| pulled_inner(&h, &v, &Expr::derive_all(phi.components(), i)))
        .collect()
}

/// `div ω = h(ξ∘φ, τ(φ)) + (f∘φ)|dφ|²` for a conformal field `ξ` on the target.
pub fn conformal_divergence_identity(
    phi: &SmoothMapSpec,
    xi: &VectorFieldSpec,
    samples: &[Vec<f64>],
    opts: IdentityOptions,
) -> Result<IdentityReport> {
    check_field(phi, xi)?;
    let target = phi.target();
    let images = image_points(phi, samples)?;
    let classification = fields::classify_conformal(
        target,
        xi,
        &images,
        ClassifyTolerance {
            residual: opts.precondition_tolerance,
            ..Default::default()
        },
    )?;
    if classification.verdict == ConformalVerdict::None {
        return Err(Error::PreconditionFailed(format!(
            "field '{}' is not conformal on the image (residual {:e})",
            xi.name, classification.residual_sup
        )));
    }
    let potential = xi.potential.as_ref().map(|f| symbolic::Tape::compile(std::slice::from_ref(f)));
    let div = compile_one_form(phi.domain(), pulled_field_form(phi, xi))?;

    let mut rows = Vec::with_capacity(samples.len());
    for p in samples {
        let left = div.at(phi.domain(), p)?[0];
        let y = phi.jet_at(p, 0)?.value().to_vec();
        let h = target.metric_at(&y)?;
        let xi_y = xi.jet_at(&y)?.value;
        let f = match &potential {
            Some(tape) => tape.eval_one(&y)?,
            None => fields::conformal_residual_at(target, xi, &y)?.0,
        };
        let right = h.inner(&xi_y, &maps::tension_at(phi, p)?) + f * maps::energy_density_at(phi, p)?;
        rows.push(IdentityReport::scalar_row(p, left, right));
    }
    let mut report = IdentityReport::from_rows("conformal", opts.tolerance, rows);
    report
        .params
        .insert("conformal_residual_sup".into(), classification.residual_sup);
    Ok(report)
}

fn check_soliton_on_image(
    phi: &SmoothMapSpec,
    s: &SolitonSpec,
    images: &[Vec<f64>],
    tol: f64,
) -> Result<f64> {
    let report = fields::soliton_report(phi.target(), s, images, tol)?;
    if report.sup >= tol {
        return Err(Error::PreconditionFailed(format!(
            "soliton equation fails on the image of '{}' (residual {:e})",
            phi.name, report.sup
        )));
    }
    Ok(report.sup)
}

/// `div ω = h(ξ∘φ, τ(φ)) + λ|dφ|² − Σ_i Ric(dφ(e_i), dφ(e_i))` for a Ricci soliton target.
pub fn soliton_divergence_identity(
    phi: &SmoothMapSpec,
    s: &SolitonSpec,
    samples: &[Vec<f64>],
    opts: IdentityOptions,
) -> Result<IdentityReport> {
    check_field(phi, &s.field)?;
    let target = phi.target();
    let images = image_points(phi, samples)?;
    let soliton_sup = check_soliton_on_image(phi, s, &images, opts.precondition_tolerance)?;
    let div = compile_one_form(phi.domain(), pulled_field_form(phi, &s.field))?;

    let mut rows = Vec::with_capacity(samples.len());
    for p in samples {
        let left = div.at(phi.domain(), p)?[0];
        let jet = phi.jet_at(p, 1)?;
        let y = jet.value().to_vec();
        let h = target.metric_at(&y)?;
        let ricci = target.riemann_at(&y)?.ricci;
        let frame = phi.domain().orthonormal_frame_at(p)?;
        let mut right = h.inner(&s.field.jet_at(&y)?.value, &maps::tension_in_frame(phi, p, &frame)?);
        for e in frame_rows(&frame) {
            let de = jet.push_forward(&e);
            right += s.lambda * h.inner(&de, &de) - quadratic(&ricci, &de);
        }
        rows.push(IdentityReport::scalar_row(p, left, right));
    }
    let mut report = IdentityReport::from_rows("soliton", opts.tolerance, rows);
    report.params.insert("soliton_residual_sup".into(), soliton_sup);
    report.params.insert("lambda".into(), s.lambda);
    Ok(report)
}

fn quadratic(form: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| form[(a, b)] * v[a] * v[b])
        .sum()
}

/// Sup over image points and test directions of `|∇_X∇_X ξ − ∇_{∇_X X}ξ + R(ξ,X)X|`.
fn jacobi_defect_on_image(
    phi: &SmoothMapSpec,
    xi: &VectorFieldSpec,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let target = phi.target();
    let n = target.dim();
    let mut sup: f64 = 0.0;
    for p in samples {
        let jet = phi.jet_at(p, 1)?;
        let y = jet.value();
        let h = target.metric_at(y)?;
        let mut directions: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        directions.push(vec![1.0; n]);
        for e in frame_rows(&phi.domain().orthonormal_frame_at(p)?) {
            directions.push(jet.push_forward(&e));
        }
        for x in directions {
            let r = fields::jacobi_type_residual_at(target, xi, y, &x)?;
            sup = sup.max(h.norm(&r));
        }
    }
    Ok(sup)
}

/// Names of the intermediate steps reported by [`biharmonic_divergence_identity`].
pub const BIHARMONIC_STEPS: [&str; 6] = [
    "product-rule",
    "bitension-substitution",
    "integration-by-parts",
    "curvature-pairing",
    "jacobi-type",
    "soliton-equation",
];

/// Chain for the divergence one-form `ω(X) = h(ξ∘φ, ∇^φ_X τ(φ))` with `θ(X) = h(∇^φ_X(ξ∘φ), τ(φ))`:
///
/// `div ω = div θ − λ|τ|² + Ric(τ,τ) − D − h(ξ∘φ, τ₂(φ))`,
///
/// where `D = Σ_i h(∇²ξ(dφe_i, dφe_i) + R(ξ, dφe_i)dφe_i, τ)` vanishes for Jacobi-type `ξ`.
/// Each intermediate equality is reported as a sub-report, in the order of
/// [`BIHARMONIC_STEPS`].
pub fn biharmonic_divergence_identity(
    phi: &SmoothMapSpec,
    s: &SolitonSpec,
    samples: &[Vec<f64>],
    opts: IdentityOptions,
) -> Result<IdentityReport> {
    let xi = &s.field;
    check_field(phi, xi)?;
    let domain = phi.domain().clone();
    let target = phi.target().clone();
    let images = image_points(phi, samples)?;
    let soliton_sup = check_soliton_on_image(phi, s, &images, opts.precondition_tolerance)?;
    let defect_sup = jacobi_defect_on_image(phi, xi, samples)?;
    if opts.require_jacobi_type && defect_sup >= opts.precondition_tolerance {
        return Err(Error::PreconditionFailed(format!(
            "field '{}' is not Jacobi-type on the image (residual {defect_sup:e})",
            xi.name
        )));
    }

    let m = domain.dim();
    let tension = phi.tension_field();
    let v_exprs = phi.compose_all(xi.components());
    let v_field = VariationField::new("xi∘phi", v_exprs.clone(), m);
    let h_exprs = phi.compose_all(target.metric_exprs());
    let gamma_exprs = phi.compose_all(target.christoffel_exprs());
    let t_exprs = tension.components();
    let omega: Vec<Expr> = (0..m)
        .map(|i| pulled_inner(&h_exprs, &v_exprs, &pulled_covariant(phi, &gamma_exprs, t_exprs, i)))
        .collect();
    let theta: Vec<Expr> = (0..m)
        .map(|i| pulled_inner(&h_exprs, &pulled_covariant(phi, &gamma_exprs, &v_exprs, i), t_exprs))
        .collect();
    let div_omega = compile_one_form(&domain, omega)?;
    let div_theta = compile_one_form(&domain, theta)?;

    let mut steps: Vec<Vec<IdentityRow>> = vec![Vec::with_capacity(samples.len()); 6];
    let mut chain = Vec::with_capacity(samples.len());
    for p in samples {
        let frame = domain.orthonormal_frame_at(p)?;
        let jet = phi.jet_at(p, 1)?;
        let y = jet.value().to_vec();
        let hv = target.metric_at(&y)?;
        let curvature = target.riemann_at(&y)?;
        let inner = |a: &[f64], b: &[f64]| hv.inner(a, b);

        let t = maps::tension_in_frame(phi, p, &frame)?;
        let tau2 = maps::bitension_in_frame(phi, p, &frame)?;
        let xi_jet = xi.jet_at(&y)?;
        let v = xi_jet.value.clone();

        let mut a_term = 0.0;
        let mut defect = 0.0;
        for e in frame_rows(&frame) {
            let along = |field: &VariationField| -> Result<Vec<f64>> {
                let mut out = vec![0.0; target.dim()];
                for (i, ei) in e.iter().enumerate() {
                    if *ei == 0.0 {
                        continue;
                    }
                    let d = maps::pullback_connection_at(phi, field, i, p)?;
                    for (o, di) in out.iter_mut().zip(d) {
                        *o += ei * di;
                    }
                }
                Ok(out)
            };
            a_term += inner(&along(&v_field)?, &along(tension)?);
            let de = jet.push_forward(&e);
            defect += inner(&fields::jacobi_type_residual_at(&target, xi, &y, &de)?, &t);
        }
        let rough_t = maps::rough_laplacian_in_frame(phi, tension, p, &frame)?;
        let rough_v = maps::rough_laplacian_in_frame(phi, &v_field, p, &frame)?;
        let curv_t = maps::curvature_trace_in_frame(phi, &t, p, &frame)?;
        let curv_v = maps::curvature_trace_in_frame(phi, &v, p, &frame)?;
        let gamma = target.christoffel_at(&y)?;
        let nabla_t_xi: Vec<f64> = (0..target.dim())
            .map(|k| {
                (0..target.dim())
                    .map(|i| t[i] * (xi_jet.d1(i, k) + (0..target.dim()).map(|l| gamma.get(k, i, l) * v[l]).sum::<f64>()))
                    .sum()
            })
            .collect();
        let t_norm2 = inner(&t, &t);
        let ric_tt = curvature.ricci_form(&t, &t);

        let d_omega = div_omega.at(&domain, p)?[0];
        let d_theta = div_theta.at(&domain, p)?[0];
        let v_rough_t = inner(&v, &rough_t);
        let pairs = [
            (d_omega, a_term + v_rough_t),
            (v_rough_t, -inner(&curv_t, &v) - inner(&v, &tau2)),
            (a_term, d_theta - inner(&rough_v, &t)),
            (inner(&curv_t, &v), inner(&curv_v, &t)),
            (inner(&rough_v, &t) + inner(&curv_v, &t), defect + inner(&nabla_t_xi, &t)),
            (inner(&nabla_t_xi, &t), s.lambda * t_norm2 - ric_tt),
        ];
        for (rows, (l, r)) in steps.iter_mut().zip(pairs) {
            rows.push(IdentityReport::scalar_row(p, l, r));
        }
        let right = d_theta - s.lambda * t_norm2 + ric_tt - defect - inner(&v, &tau2);
        chain.push(IdentityReport::scalar_row(p, d_omega, right));
    }

    let mut report = IdentityReport::from_rows("biharmonic", opts.tolerance, chain);
    report.sub_reports = BIHARMONIC_STEPS
        .iter()
        .zip(steps)
        .map(|(name, rows)| IdentityReport::from_rows(*name, opts.tolerance, rows))
        .collect();
    report.params.insert("soliton_residual_sup".into(), soliton_sup);
    report.params.insert("jacobi_defect_sup".into(), defect_sup);
    report.params.insert("lambda".into(), s.lambda);
    Ok(report)
}

/// `|h(R(X,Y)Z,W) − h(R(W,Z)Y,X)|` at `p`.
pub fn curvature_pairing_residual(
    m: &ChartManifold,
    p: &[f64],
    x: &[f64],
    y: &[f64],
    z: &[f64],
    w: &[f64],
) -> Result<f64> {
    let g = m.metric_at(p)?;
    let r = m.riemann_at(p)?;
    Ok((g.inner(&r.apply(x, y, z), w) - g.inner(&r.apply(w, z, y), x)).abs())
}

/// `λa² + b²/λ − 2ab`, nonnegative for `λ > 0` and zero iff `λa = b`.
pub fn young_gap(a: f64, b: f64, lambda: f64) -> f64 {
    lambda * a * a + b * b / lambda - 2.0 * a * b
}

/// Hypersurface `X: U ⊂ ℝ^{n−1} → N̄^n` with an ambient vector field `ξ̄`.
#[derive(Debug, Clone)]
pub struct HypersurfaceSpec {
    pub name: String,
    pub ambient: Arc<ChartManifold>,
    pub embedding: Vec<Expr>,
    pub field: VectorFieldSpec,
    /// Parameter box used for sampling.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypersurfaceSample {
    pub point: Vec<f64>,
    pub ambient_point: Vec<f64>,
    /// Normal component `f = h̄(ξ̄, η)`.
    pub f: f64,
    pub rho: f64,
    pub normal: Vec<f64>,
    /// Tangential part `ξ` in parameter coordinates.
    pub tangential: Vec<f64>,
    /// Mean curvature vector, from the tension of the embedding.
    pub mean_curvature: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypersurfaceReport {
    pub name: String,
    pub samples: Vec<HypersurfaceSample>,
    /// Checks in order: `lie-decomposition`, `normal-lie`, `umbilicity`,
    /// `umbilic-lie`, `mean-curvature-vector`, `mean-curvature-pairing`.
    pub checks: Vec<IdentityReport>,
    pub pass: bool,
}

fn cofactor_normal(tangents: &[Vec<f64>]) -> Vec<f64> {
    // ν_k = det[t_1; …; t_{n−1}; e_k], so ν(t_a) = 0 and ν(η) > 0 orients η
    let n = tangents.len() + 1;
    (0..n)
        .map(|k| {
            let mat = DMatrix::from_fn(n, n, |r, c| {
                if r < n - 1 {
                    tangents[r][c]
                } else if c == k {
                    1.0
                } else {
                    0.0
                }
            });
            mat.determinant()
        })
        .collect()
}

fn sym_matrix_row(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

/// Decomposes `ξ̄ = ξ + fη` along the hypersurface and checks the Lie-derivative
/// relations `𝓛_ξ̄ h̄ |_{TN} = 𝓛_ξ h − 2fB`, `𝓛_ξ h = 2fρh` and `fρ = h̄(ξ̄, H)`.
///
/// The unit normal satisfies `det(∂_1X, …, ∂_{n−1}X, η) > 0`.
pub fn hypersurface_decompose(
    hs: &HypersurfaceSpec,
    samples: &[Vec<f64>],
    opts: IdentityOptions,
) -> Result<HypersurfaceReport> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let ambient = hs.ambient.clone();
    let n = ambient.dim();
    let k = n - 1;
    if hs.embedding.len() != n || hs.bounds.len() != k {
        return Err(Error::Dimension(format!(
            "hypersurface '{}' needs {n} embedding components over {k} parameters",
            hs.name
        )));
    }
    hs.field.check_dim(&ambient)?;

    let tangents: Vec<Vec<Expr>> = (0..k).map(|a| Expr::derive_all(&hs.embedding, a)).collect();
    let gbar = Expr::substitute_all(ambient.metric_exprs(), &hs.embedding);
    let mut upper = Vec::new();
    for a in 0..k {
        for b in a..k {
            upper.push(pulled_inner(&gbar, &tangents[a], &tangents[b]));
        }
    }
    let induced = Arc::new(ChartManifold::new(format!("{}:induced", hs.name), k, upper)?);
    let xi_bar = Expr::substitute_all(hs.field.components(), &hs.embedding);
    let rhs: Vec<Expr> = (0..k).map(|a| pulled_inner(&gbar, &xi_bar, &tangents[a])).collect();
    let inv = induced.inverse_metric_exprs();
    let tangential = VectorFieldSpec::new(
        format!("{}^T", hs.field.name),
        (0..k)
            .map(|a| symbolic::sum((0..k).map(|b| &inv[a * k + b] * &rhs[b])))
            .collect(),
        None,
    );
    let embedding = SmoothMapSpec::new(
        format!("{}:embedding", hs.name),
        induced.clone(),
        ambient.clone(),
        hs.embedding.clone(),
    )?;

    let mut out_samples = Vec::with_capacity(samples.len());
    let mut rows: Vec<Vec<IdentityRow>> = vec![Vec::new(); 6];
    let mut killing_sup: f64 = 0.0;
    for u in samples {
        let jet = embedding.jet_at(u, 2)?;
        let x = jet.value().to_vec();
        let t: Vec<Vec<f64>> = (0..k)
            .map(|a| (0..n).map(|i| jet.d1(i, a)).collect())
            .collect();
        let gb: MetricValue = ambient.metric_at(&x)?;
        let h = DMatrix::from_fn(k, k, |a, b| gb.inner(&t[a], &t[b]));
        let scale: f64 = (0..k).map(|a| h[(a, a)]).product();
        if h.determinant() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient { point: u.clone() });
        }
        let nu = cofactor_normal(&t);
        let raised: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| gb.inverse[(i, j)] * nu[j]).sum())
            .collect();
        let len = raised.iter().zip(&nu).map(|(a, b)| a * b).sum::<f64>().sqrt();
        let normal: Vec<f64> = raised.iter().map(|v| v / len).collect();

        let gamma = ambient.christoffel_at(&x)?;
        let b = DMatrix::from_fn(k, k, |a, c| {
            let acc = gamma.contract(&t[a], &t[c]);
            let second: Vec<f64> = (0..n).map(|i| jet.d2(i, a, c) + acc[i]).collect();
            gb.inner(&second, &normal)
        });
        let h_inv = h.clone().try_inverse().ok_or(Error::RankDeficient { point: u.clone() })?;
        let rho = (&h_inv * &b).trace() / k as f64;
        let xi_x = hs.field.jet_at(&x)?.value;
        let f = gb.inner(&xi_x, &normal);
        let frame = induced.orthonormal_frame_at(u)?;

        let lie_bar = fields::lie_derivative_metric_at(&ambient, &hs.field, &x)?;
        killing_sup = killing_sup.max(ChartManifold::form_norm(&ambient.orthonormal_frame_at(&x)?, &lie_bar));
        let lie_bar_t = DMatrix::from_fn(k, k, |a, c| {
            (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| lie_bar[(i, j)] * t[a][i] * t[c][j])
                .sum::<f64>()
        });
        let lie = fields::lie_derivative_metric_at(&induced, &tangential, u)?;
        let mean = maps::tension_at(&embedding, u)?
            .into_iter()
            .map(|v| v / k as f64)
            .collect::<Vec<f64>>();

        let form_row = |l: DMatrix<f64>, r: DMatrix<f64>| IdentityRow {
            point: u.clone(),
            residual: ChartManifold::form_norm(&frame, &(&l - &r)),
            left: sym_matrix_row(&l),
            right: sym_matrix_row(&r),
        };
        rows[0].push(form_row(lie_bar_t, &lie - &b * (2.0 * f)));
        rows[1].push(form_row(lie.clone(), &b * (2.0 * f)));
        rows[2].push(form_row(b.clone(), &h * rho));
        rows[3].push(form_row(lie, &h * (2.0 * f * rho)));
        let rho_normal: Vec<f64> = normal.iter().map(|e| rho * e).collect();
        let diff: Vec<f64> = mean.iter().zip(&rho_normal).map(|(a, b)| a - b).collect();
        rows[4].push(IdentityRow {
            point: u.clone(),
            left: mean.clone(),
            right: rho_normal,
            residual: gb.norm(&diff),
        });
        rows[5].push(IdentityReport::scalar_row(u, f * rho, gb.inner(&xi_x, &mean)));

        out_samples.push(HypersurfaceSample {
            point: u.clone(),
            ambient_point: x,
            f,
            rho,
            normal,
            tangential: tangential.jet_at(u)?.value,
            mean_curvature: mean,
        });
    }
    if killing_sup >= opts.precondition_tolerance {
        return Err(Error::PreconditionFailed(format!(
            "ambient field '{}' is not Killing (residual {killing_sup:e})",
            hs.field.name
        )));
    }
    let names = [
        "lie-decomposition",
        "normal-lie",
        "umbilicity",
        "umbilic-lie",
        "mean-curvature-vector",
        "mean-curvature-pairing",
    ];
    let checks: Vec<IdentityReport> = names
        .iter()
        .zip(rows)
        .map(|(name, r)| IdentityReport::from_rows(*name, opts.tolerance, r))
        .collect();
    Ok(HypersurfaceReport {
        name: hs.name.clone(),
        pass: checks.iter().all(|c| c.pass),
        samples: out_samples,
        checks,
    })
}
