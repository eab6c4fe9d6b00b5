//! Smooth maps between charts and the operators along them: differential,
//! energy density, pull-back connection, tension, Jacobi operator, bi-tension.
//!
//! All derivatives of a map or of a field along it come from the symbolic
//! engine. Traces over the domain run through an orthonormal frame; the
//! `_in_frame` variants take that frame explicitly.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{ChartManifold, Frame};
use crate::symbolic::{self, Expr, Tape};

/// Components `v^α` of a vector in `T_{φ(p)}N`.
pub type TargetVectorAlongMap = Vec<f64>;

const MAX_ORDER: usize = 4;

/// Derivative layers of a list of expressions, compiled lazily per order.
struct JetCache {
    components: Vec<Expr>,
    vars: usize,
    layers: [OnceLock<Vec<Expr>>; MAX_ORDER + 1],
    tapes: [OnceLock<Tape>; MAX_ORDER + 1],
}

impl JetCache {
    fn new(components: Vec<Expr>, vars: usize) -> Self {
        JetCache {
            components,
            vars,
            layers: Default::default(),
            tapes: Default::default(),
        }
    }

    /// `layer(k)` holds `∂_{i1}…∂_{ik} c^α` at `((α·m + i1)·m + …)·m + ik`.
    fn layer(&self, k: usize) -> &[Expr] {
        self.layers[k].get_or_init(|| {
            if k == 0 {
                return self.components.clone();
            }
            let m = self.vars;
            let prev = self.layer(k - 1);
            let by_axis: Vec<Vec<Expr>> = (0..m).map(|i| Expr::derive_all(prev, i)).collect();
            (0..prev.len() * m).map(|n| by_axis[n % m][n / m].clone()).collect()
        })
    }

    fn jet_at(&self, p: &[f64], order: usize) -> Result<MapJet> {
        assert!(order <= MAX_ORDER, "jets are available up to order {MAX_ORDER}");
        let tape = self.tapes[order].get_or_init(|| {
            let flat: Vec<Expr> = (0..=order).flat_map(|k| self.layer(k).iter().cloned()).collect();
            Tape::compile(&flat)
        });
        let flat = tape.eval(p)?;
        let n = self.components.len();
        let mut layers = Vec::with_capacity(order + 1);
        let mut offset = 0;
        for k in 0..=order {
            let len = n * self.vars.pow(k as u32);
            layers.push(flat[offset..offset + len].to_vec());
            offset += len;
        }
        Ok(MapJet {
            domain_dim: self.vars,
            target_dim: n,
            layers,
        })
    }
}

/// Value and coordinate derivatives of a map (or of a field along it) at a point.
#[derive(Debug, Clone)]
pub struct MapJet {
    pub domain_dim: usize,
    pub target_dim: usize,
    layers: Vec<Vec<f64>>,
}

impl MapJet {
    pub fn order(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn value(&self) -> &[f64] {
        &self.layers[0]
    }

    /// `∂_{idx[0]}…∂_{idx[k-1]} φ^α`.
    pub fn derivative(&self, alpha: usize, idx: &[usize]) -> f64 {
        let flat = idx.iter().fold(alpha, |acc, &i| acc * self.domain_dim + i);
        self.layers[idx.len()][flat]
    }

    pub fn d1(&self, alpha: usize, i: usize) -> f64 {
        self.layers[1][alpha * self.domain_dim + i]
    }

    pub fn d2(&self, alpha: usize, i: usize, j: usize) -> f64 {
        self.layers[2][(alpha * self.domain_dim + i) * self.domain_dim + j]
    }

    /// `dφ` as a target-dim × domain-dim matrix.
    pub fn differential(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.target_dim, self.domain_dim, |a, i| self.d1(a, i))
    }

    /// `dφ(X)`.
    pub fn push_forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.target_dim)
            .map(|a| (0..self.domain_dim).map(|i| self.d1(a, i) * x[i]).sum())
            .collect()
    }
}

/// Smooth map `φ: M → N` given by target-coordinate expressions in domain coordinates.
pub struct SmoothMapSpec {
    pub name: String,
    domain: Arc<ChartManifold>,
    target: Arc<ChartManifold>,
    jets: JetCache,
    tension: OnceLock<VariationField>,
}

impl std::fmt::Debug for SmoothMapSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMapSpec")
            .field("name", &self.name)
            .field("domain", &self.domain.name())
            .field("target", &self.target.name())
            .field("components", &self.jets.components)
            .finish()
    }
}

impl SmoothMapSpec {
    pub fn new(
        name: impl Into<String>,
        domain: Arc<ChartManifold>,
        target: Arc<ChartManifold>,
        components: Vec<Expr>,
    ) -> Result<Self> {
        let name = name.into();
        if components.len() != target.dim() {
            return Err(Error::Dimension(format!(
                "map '{name}' has {} components but target '{}' has dimension {}",
                components.len(),
                target.name(),
                target.dim()
            )));
        }
        if let Some(v) = components.iter().filter_map(Expr::max_var).max() {
            if v >= domain.dim() {
                return Err(Error::Dimension(format!(
                    "map '{name}' uses x{v} on {}-dimensional domain '{}'",
                    domain.dim(),
                    domain.name()
                )));
            }
        }
        let vars = domain.dim();
        Ok(SmoothMapSpec {
            name,
            domain,
            target,
            jets: JetCache::new(components, vars),
            tension: OnceLock::new(),
        })
    }

    pub fn domain(&self) -> &Arc<ChartManifold> {
        &self.domain
    }

    pub fn target(&self) -> &Arc<ChartManifold> {
        &self.target
    }

    pub fn components(&self) -> &[Expr] {
        &self.jets.components
    }

    /// `e ∘ φ` for an expression `e` in target coordinates.
    pub fn compose(&self, e: &Expr) -> Expr {
        e.substitute(self.components())
    }

    pub fn compose_all(&self, exprs: &[Expr]) -> Vec<Expr> {
        Expr::substitute_all(exprs, self.components())
    }

    /// Jet of order `order` at `p`, after checking `p` and `φ(p)` against the charts.
    pub fn jet_at(&self, p: &[f64], order: usize) -> Result<MapJet> {
        self.domain.check_in_chart(p)?;
        let jet = self.jets.jet_at(p, order)?;
        self.target.check_in_chart(jet.value())?;
        Ok(jet)
    }

    /// Checks that every sample maps into the target chart.
    pub fn check_image(&self, samples: &[Vec<f64>]) -> Result<()> {
        for p in samples {
            self.jet_at(p, 0)?;
        }
        Ok(())
    }

    /// `τ(φ)` as expressions in domain coordinates.
    pub fn tension_field(&self) -> &VariationField {
        self.tension.get_or_init(|| {
            VariationField::new("tension", tension_exprs(self), self.domain.dim())
        })
    }
}

/// Section of `φ⁻¹TN` given by expressions in domain coordinates.
pub struct VariationField {
    pub name: String,
    jets: JetCache,
}

impl std::fmt::Debug for VariationField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationField")
            .field("name", &self.name)
            .field("components", &self.jets.components)
            .finish()
    }
}

impl Clone for VariationField {
    fn clone(&self) -> Self {
        VariationField::new(self.name.clone(), self.jets.components.clone(), self.jets.vars)
    }
}

impl VariationField {
    pub fn new(name: impl Into<String>, components: Vec<Expr>, domain_dim: usize) -> Self {
        VariationField {
            name: name.into(),
            jets: JetCache::new(components, domain_dim),
        }
    }

    pub fn zero(target_dim: usize, domain_dim: usize) -> Self {
        VariationField::new("zero", vec![Expr::zero(); target_dim], domain_dim)
    }

    pub fn components(&self) -> &[Expr] {
        &self.jets.components
    }

    pub fn jet_at(&self, p: &[f64], order: usize) -> Result<MapJet> {
        self.jets.jet_at(p, order)
    }

    fn check_against(&self, phi: &SmoothMapSpec) -> Result<()> {
        if self.components().len() != phi.target.dim() || self.jets.vars != phi.domain.dim() {
            return Err(Error::Dimension(format!(
                "field '{}' does not live along map '{}'",
                self.name, phi.name
            )));
        }
        Ok(())
    }
}

pub fn differential_at(phi: &SmoothMapSpec, p: &[f64]) -> Result<MapJet> {
    phi.jet_at(p, 1)
}

/// `|dφ|² = Σ_i h(dφ(e_i), dφ(e_i))`.
pub fn energy_density_at(phi: &SmoothMapSpec, p: &[f64]) -> Result<f64> {
    energy_density_in_frame(phi, p, &phi.domain.orthonormal_frame_at(p)?)
}

pub fn energy_density_in_frame(phi: &SmoothMapSpec, p: &[f64], frame: &Frame) -> Result<f64> {
    let jet = phi.jet_at(p, 1)?;
    let h = phi.target.metric_at(jet.value())?;
    Ok(frame_rows(frame)
        .map(|e| {
            let v = jet.push_forward(&e);
            h.inner(&v, &v)
        })
        .sum())
}

fn frame_rows(frame: &Frame) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..frame.nrows()).map(|i| frame.row(i).iter().copied().collect())
}

/// `(∇^φ_{∂_i} v)^α = ∂_i v^α + Γ^α_βγ(φ(p)) ∂_i φ^β v^γ`.
pub fn pullback_connection_at(
    phi: &SmoothMapSpec,
    v: &VariationField,
    i: usize,
    p: &[f64],
) -> Result<TargetVectorAlongMap> {
    v.check_against(phi)?;
    let jet = phi.jet_at(p, 1)?;
    let vj = v.jet_at(p, 1)?;
    let gamma = phi.target.christoffel_at(jet.value())?;
    let dphi: Vec<f64> = (0..jet.target_dim).map(|b| jet.d1(b, i)).collect();
    let g = gamma.contract(&dphi, vj.value());
    Ok((0..jet.target_dim).map(|a| vj.d1(a, i) + g[a]).collect())
}

/// `τ(φ) = Σ_i (∇dφ)(e_i, e_i)`, traced over the domain frame at `p`.
pub fn tension_at(phi: &SmoothMapSpec, p: &[f64]) -> Result<TargetVectorAlongMap> {
    tension_in_frame(phi, p, &phi.domain.orthonormal_frame_at(p)?)
}

pub fn tension_in_frame(phi: &SmoothMapSpec, p: &[f64], frame: &Frame) -> Result<TargetVectorAlongMap> {
    let m = phi.domain.dim();
    let n = phi.target.dim();
    let jet = phi.jet_at(p, 2)?;
    let gamma_m = phi.domain.christoffel_at(p)?;
    let gamma_n = phi.target.christoffel_at(jet.value())?;
    let mut tau = vec![0.0; n];
    for e in frame_rows(frame) {
        for a in 0..m {
            for b in 0..m {
                let w = e[a] * e[b];
                if w == 0.0 {
                    continue;
                }
                let da: Vec<f64> = (0..n).map(|al| jet.d1(al, a)).collect();
                let db: Vec<f64> = (0..n).map(|al| jet.d1(al, b)).collect();
                let target_term = gamma_n.contract(&da, &db);
                for (al, t) in tau.iter_mut().enumerate() {
                    let domain_term: f64 =
                        (0..m).map(|k| gamma_m.get(k, a, b) * jet.d1(al, k)).sum();
                    *t += w * (jet.d2(al, a, b) - domain_term + target_term[al]);
                }
            }
        }
    }
    Ok(tau)
}

/// Symbolic `τ^α = g^ab(∂_a∂_b φ^α − Γ^k_ab ∂_k φ^α + Γ^α_βγ(φ) ∂_a φ^β ∂_b φ^γ)`.
pub fn tension_exprs(phi: &SmoothMapSpec) -> Vec<Expr> {
    let m = phi.domain.dim();
    let n = phi.target.dim();
    let first = phi.jets.layer(1);
    let second = phi.jets.layer(2);
    let d1 = |al: usize, i: usize| &first[al * m + i];
    let d2 = |al: usize, i: usize, j: usize| &second[(al * m + i) * m + j];
    let inv = phi.domain.inverse_metric_exprs();
    let gamma_m = phi.domain.christoffel_exprs();
    let gamma_n = phi.compose_all(phi.target.christoffel_exprs());
    (0..n)
        .map(|al| {
            let mut terms = Vec::new();
            for a in 0..m {
                for b in 0..m {
                    let gab = &inv[a * m + b];
                    if gab.is_zero() {
                        continue;
                    }
                    let mut inner = vec![d2(al, a, b).clone()];
                    for k in 0..m {
                        inner.push(-(&gamma_m[(k * m + a) * m + b] * d1(al, k)));
                    }
                    for be in 0..n {
                        for ga in 0..n {
                            let c = &gamma_n[(al * n + be) * n + ga];
                            if !c.is_zero() {
                                inner.push(c * d1(be, a) * d1(ga, b));
                            }
                        }
                    }
                    terms.push(gab * symbolic::sum(inner));
                }
            }
            symbolic::sum(terms)
        })
        .collect()
}

/// Pointwise data shared by the second-order operators along `φ`.
struct AlongMapData {
    frame: Frame,
    phi: MapJet,
    v: MapJet,
    gamma_m: crate::geometry::ChristoffelArray,
    gamma_n: crate::geometry::ChristoffelArray,
    dgamma_n: Vec<f64>,
}

impl AlongMapData {
    fn gather(phi: &SmoothMapSpec, v: &VariationField, p: &[f64], frame: &Frame) -> Result<Self> {
        v.check_against(phi)?;
        let jet = phi.jet_at(p, 2)?;
        let y = jet.value().to_vec();
        Ok(AlongMapData {
            frame: frame.clone(),
            v: v.jet_at(p, 2)?,
            gamma_m: phi.domain.christoffel_at(p)?,
            gamma_n: phi.target.christoffel_at(&y)?,
            dgamma_n: phi.target.christoffel_grad_at(&y)?,
            phi: jet,
        })
    }
}

/// `Σ_i (∇^φ_{e_i}∇^φ_{e_i} v − ∇^φ_{∇_{e_i}e_i} v)`.
pub fn rough_laplacian_in_frame(
    phi: &SmoothMapSpec,
    v: &VariationField,
    p: &[f64],
    frame: &Frame,
) -> Result<TargetVectorAlongMap> {
    let data = AlongMapData::gather(phi, v, p, frame)?;
    Ok(rough_laplacian(&data))
}

fn rough_laplacian(data: &AlongMapData) -> Vec<f64> {
    let m = data.phi.domain_dim;
    let n = data.phi.target_dim;
    let (jet, vj) = (&data.phi, &data.v);
    let g = |a: usize, b: usize, c: usize| data.gamma_n.get(a, b, c);
    let dg = |d: usize, a: usize, b: usize, c: usize| data.dgamma_n[((d * n + a) * n + b) * n + c];

    // w[b][α] = (∇^φ_{∂_b} v)^α
    let w: Vec<Vec<f64>> = (0..m)
        .map(|b| {
            (0..n)
                .map(|al| {
                    let mut s = vj.d1(al, b);
                    for be in 0..n {
                        for ga in 0..n {
                            s += g(al, be, ga) * jet.d1(be, b) * vj.value()[ga];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();

    // hess(a, b)^α = ∇^φ_{∂_a} w_b − Σ_k Γ^k_ab w_k
    let hess = |a: usize, b: usize| -> Vec<f64> {
        (0..n)
            .map(|al| {
                let mut s = vj.d2(al, a, b);
                for be in 0..n {
                    for ga in 0..n {
                        let mut dgam = 0.0;
                        for de in 0..n {
                            dgam += dg(de, al, be, ga) * jet.d1(de, a);
                        }
                        s += dgam * jet.d1(be, b) * vj.value()[ga];
                        s += g(al, be, ga)
                            * (jet.d2(be, a, b) * vj.value()[ga] + jet.d1(be, b) * vj.d1(ga, a));
                        s += g(al, be, ga) * jet.d1(be, a) * w[b][ga];
                    }
                }
                for k in 0..m {
                    s -= data.gamma_m.get(k, a, b) * w[k][al];
                }
                s
            })
            .collect()
    };

    let mut out = vec![0.0; n];
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; m * m];
    for e in frame_rows(&data.frame) {
        for a in 0..m {
            for b in 0..m {
                let c = e[a] * e[b];
                if c == 0.0 {
                    continue;
                }
                let h = cache[a * m + b].get_or_insert_with(|| hess(a, b));
                for (o, hv) in out.iter_mut().zip(h.iter()) {
                    *o += c * hv;
                }
            }
        }
    }
    out
}

/// `Σ_i R^N(v, dφ(e_i)) dφ(e_i)`.
pub fn curvature_trace_in_frame(
    phi: &SmoothMapSpec,
    v: &[f64],
    p: &[f64],
    frame: &Frame,
) -> Result<TargetVectorAlongMap> {
    let jet = phi.jet_at(p, 1)?;
    let curvature = phi.target.riemann_at(jet.value())?;
    let mut out = vec![0.0; phi.target.dim()];
    for e in frame_rows(frame) {
        let de = jet.push_forward(&e);
        for (o, r) in out.iter_mut().zip(curvature.apply(v, &de, &de)) {
            *o += r;
        }
    }
    Ok(out)
}

/// `J_φ(v) = −Σ_i R^N(v, dφ(e_i))dφ(e_i) − Σ_i (∇^φ_{e_i}∇^φ_{e_i} v − ∇^φ_{∇_{e_i}e_i} v)`.
pub fn jacobi_operator_at(
    phi: &SmoothMapSpec,
    v: &VariationField,
    p: &[f64],
) -> Result<TargetVectorAlongMap> {
    jacobi_operator_in_frame(phi, v, p, &phi.domain.orthonormal_frame_at(p)?)
}

pub fn jacobi_operator_in_frame(
    phi: &SmoothMapSpec,
    v: &VariationField,
    p: &[f64],
    frame: &Frame,
) -> Result<TargetVectorAlongMap> {
    let data = AlongMapData::gather(phi, v, p, frame)?;
    let rough = rough_laplacian(&data);
    let curv = curvature_trace_in_frame(phi, data.v.value(), p, frame)?;
    Ok(rough.iter().zip(&curv).map(|(r, c)| -r - c).collect())
}

/// `τ₂(φ) = J_φ(τ(φ))`, with `τ(φ)` formed symbolically.
pub fn bitension_at(phi: &SmoothMapSpec, p: &[f64]) -> Result<TargetVectorAlongMap> {
    jacobi_operator_at(phi, phi.tension_field(), p)
}

pub fn bitension_in_frame(phi: &SmoothMapSpec, p: &[f64], frame: &Frame) -> Result<TargetVectorAlongMap> {
    jacobi_operator_in_frame(phi, phi.tension_field(), p, frame)
}
