//! JSON manifest: manifolds, fields, maps, hypersurfaces and the task list.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use harmap_core::catalog;
use harmap_core::fields::{PinchSign, VectorFieldSpec};
use harmap_core::heat_flow::EnergyPolicy;
use harmap_core::maps::SmoothMapSpec;
use harmap_core::symbolic::{self, Expr};
use harmap_core::verifier::HypersurfaceSpec;
use harmap_core::ChartManifold;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid reference '{name}': {message}")]
    Validation { name: String, message: String },
}

fn invalid(name: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::Validation {
        name: name.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawManifest {
    /// Default seed for every seeded task.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub manifolds: BTreeMap<String, ManifoldDef>,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldDef>,
    #[serde(default)]
    pub maps: BTreeMap<String, MapDef>,
    #[serde(default)]
    pub hypersurfaces: BTreeMap<String, HypersurfaceDef>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

/// A chart given either by the upper triangle of its metric or by a conformal factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldDef {
    pub dim: usize,
    #[serde(default)]
    pub metric: Option<Vec<String>>,
    #[serde(default)]
    pub conformal: Option<String>,
    #[serde(default)]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub periods: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDef {
    pub manifold: String,
    pub components: Vec<String>,
    #[serde(default)]
    pub potential: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDef {
    pub domain: String,
    pub target: String,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypersurfaceDef {
    pub ambient: String,
    pub embedding: Vec<String>,
    pub field: String,
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    #[serde(default)]
    pub per_axis: Option<usize>,
    #[serde(default)]
    pub random: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityKind {
    Conformal,
    Soliton,
    Biharmonic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitSpec {
    RandomSmooth {
        #[serde(default)]
        seed: Option<u64>,
    },
    Identity,
    Expression { components: Vec<String> },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskKind {
    ClassifyField {
        field: String,
        /// `killing`, `homothetic`, `conformal` or `none`.
        #[serde(default)]
        expect: Option<String>,
    },
    CheckSoliton {
        manifold: String,
        #[serde(default)]
        potential: Option<String>,
        #[serde(default)]
        field: Option<String>,
        lambda: f64,
    },
    CheckJacobi {
        field: String,
        #[serde(default)]
        directions: Option<usize>,
    },
    CheckIdentity {
        identity: IdentityKind,
        map: String,
        #[serde(default)]
        field: Option<String>,
        #[serde(default)]
        potential: Option<String>,
        #[serde(default)]
        lambda: f64,
        #[serde(default = "yes")]
        require_jacobi_type: bool,
    },
    Hypersurface {
        hypersurface: String,
    },
    Tension {
        map: String,
        #[serde(default)]
        expect_zero: bool,
    },
    Bitension {
        map: String,
        #[serde(default)]
        expect_zero: bool,
    },
    Flow {
        target: String,
        resolution: Vec<usize>,
        init: InitSpec,
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default)]
        max_steps: Option<usize>,
        #[serde(default)]
        stop_tolerance: Option<f64>,
        #[serde(default)]
        constant_tolerance: Option<f64>,
        #[serde(default)]
        policy: Option<EnergyPolicy>,
        /// Required verdict, e.g. `converged-constant`.
        #[serde(default)]
        expect: Option<String>,
    },
    IndexForm {
        map: String,
        v: Vec<String>,
        #[serde(default)]
        w: Option<Vec<String>>,
        resolution: Vec<usize>,
    },
    RicciPinch {
        manifold: String,
        lambda: f64,
        sign: PinchSign,
    },
    Commutator {
        manifold: String,
        potential: String,
        field: String,
    },
}

impl TaskKind {
    pub fn label(&self) -> String {
        match self {
            TaskKind::ClassifyField { .. } => "classify-field".into(),
            TaskKind::CheckSoliton { .. } => "check-soliton".into(),
            TaskKind::CheckJacobi { .. } => "check-jacobi".into(),
            TaskKind::CheckIdentity { identity, .. } => format!(
                "check-identity:{}",
                match identity {
                    IdentityKind::Conformal => "conformal",
                    IdentityKind::Soliton => "soliton",
                    IdentityKind::Biharmonic => "biharmonic",
                }
            ),
            TaskKind::Hypersurface { .. } => "hypersurface".into(),
            TaskKind::Tension { .. } => "tension".into(),
            TaskKind::Bitension { .. } => "bitension".into(),
            TaskKind::Flow { .. } => "flow".into(),
            TaskKind::IndexForm { .. } => "index-form".into(),
            TaskKind::RicciPinch { .. } => "ricci-pinch".into(),
            TaskKind::Commutator { .. } => "commutator".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: TaskKind,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub samples: Option<SampleSpec>,
}

pub struct FieldEntry {
    pub manifold: String,
    pub spec: VectorFieldSpec,
}

pub struct HypersurfaceEntry {
    pub field: String,
    pub spec: HypersurfaceSpec,
}

/// A validated manifest with every expression compiled and every name resolved.
pub struct Manifest {
    pub raw: RawManifest,
    pub manifolds: BTreeMap<String, Arc<ChartManifold>>,
    pub fields: BTreeMap<String, FieldEntry>,
    pub maps: BTreeMap<String, SmoothMapSpec>,
    pub hypersurfaces: BTreeMap<String, HypersurfaceEntry>,
}

/// 1-based (line, column) of byte offset `at` in `source`.
fn line_column(source: &str, at: usize) -> (usize, usize) {
    let before = &source[..at];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

struct Builder<'a> {
    source: &'a str,
    manifolds: BTreeMap<String, Arc<ChartManifold>>,
}

impl Builder<'_> {
    fn expr(&self, text: &str, dim: usize) -> Result<Expr, ManifestError> {
        symbolic::parse(text, dim).map_err(|e| {
            // point into the file when the literal can be found there
            let quoted = serde_json::to_string(text).unwrap_or_default();
            let (line, column) = match self.source.find(&quoted) {
                Some(at) => {
                    let (l, c) = line_column(self.source, at);
                    (l, c + e.column)
                }
                None => (0, e.column),
            };
            ManifestError::Parse {
                line,
                column,
                message: format!("in expression \"{text}\": {}", e.message),
            }
        })
    }

    fn exprs(&self, texts: &[String], dim: usize) -> Result<Vec<Expr>, ManifestError> {
        texts.iter().map(|t| self.expr(t, dim)).collect()
    }

    fn manifold(&mut self, name: &str) -> Result<Arc<ChartManifold>, ManifestError> {
        if let Some(m) = self.manifolds.get(name) {
            return Ok(m.clone());
        }
        match catalog::lookup_shared(name) {
            Some(Ok(m)) => {
                self.manifolds.insert(name.to_string(), m.clone());
                Ok(m)
            }
            Some(Err(e)) => Err(invalid(name, e.to_string())),
            None => Err(invalid(name, "no such manifold in the manifest or the catalog")),
        }
    }

    fn build_manifold(&self, name: &str, def: &ManifoldDef) -> Result<ChartManifold, ManifestError> {
        let wrap = |e: harmap_core::Error| invalid(name, e.to_string());
        let m = match (&def.metric, &def.conformal) {
            (Some(upper), None) => ChartManifold::new(name, def.dim, self.exprs(upper, def.dim)?),
            (None, Some(factor)) => {
                ChartManifold::conformally_flat(name, def.dim, self.expr(factor, def.dim)?)
            }
            _ => return Err(invalid(name, "give exactly one of 'metric' or 'conformal'")),
        }
        .map_err(wrap)?;
        let m = match &def.bounds {
            Some(b) => m.with_bounds(b.iter().map(|[lo, hi]| (*lo, *hi)).collect()).map_err(wrap)?,
            None => m,
        };
        match &def.periods {
            Some(p) => m.with_periods(p.clone()).map_err(wrap),
            None => Ok(m),
        }
    }
}

pub fn parse_manifest_str(source: &str) -> Result<Manifest, ManifestError> {
    let raw: RawManifest = serde_json::from_str(source).map_err(|e| ManifestError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(raw, source)
}

pub fn parse_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let source = std::fs::read_to_string(path).map_err(|e| ManifestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_manifest_str(&source)
}

fn validate(raw: RawManifest, source: &str) -> Result<Manifest, ManifestError> {
    let mut b = Builder {
        source,
        manifolds: BTreeMap::new(),
    };
    for (name, def) in &raw.manifolds {
        let m = b.build_manifold(name, def)?;
        b.manifolds.insert(name.clone(), Arc::new(m));
    }

    let mut fields = BTreeMap::new();
    for (name, def) in &raw.fields {
        let m = b.manifold(&def.manifold)?;
        if def.components.len() != m.dim() {
            return Err(invalid(
                name,
                format!("{} components on {}-dimensional '{}'", def.components.len(), m.dim(), def.manifold),
            ));
        }
        let comps = b.exprs(&def.components, m.dim())?;
        let potential = def.potential.as_ref().map(|p| b.expr(p, m.dim())).transpose()?;
        fields.insert(
            name.clone(),
            FieldEntry {
                manifold: def.manifold.clone(),
                spec: VectorFieldSpec::new(name.clone(), comps, potential),
            },
        );
    }

    let mut maps = BTreeMap::new();
    for (name, def) in &raw.maps {
        let domain = b.manifold(&def.domain)?;
        let target = b.manifold(&def.target)?;
        let comps = b.exprs(&def.components, domain.dim())?;
        let phi = SmoothMapSpec::new(name.clone(), domain, target, comps)
            .map_err(|e| invalid(name, e.to_string()))?;
        maps.insert(name.clone(), phi);
    }

    let mut hypersurfaces = BTreeMap::new();
    for (name, def) in &raw.hypersurfaces {
        let ambient = b.manifold(&def.ambient)?;
        let n = ambient.dim();
        if def.embedding.len() != n || def.bounds.len() + 1 != n {
            return Err(invalid(name, format!("needs {n} embedding components over {} parameters", n - 1)));
        }
        let entry = fields.get(&def.field).ok_or_else(|| invalid(&def.field, "no such field"))?;
        if entry.manifold != def.ambient {
            return Err(invalid(&def.field, format!("field lives on '{}', not '{}'", entry.manifold, def.ambient)));
        }
        let spec = HypersurfaceSpec {
            name: name.clone(),
            ambient,
            embedding: b.exprs(&def.embedding, n - 1)?,
            field: entry.spec.clone(),
            bounds: def.bounds.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
        };
        hypersurfaces.insert(
            name.clone(),
            HypersurfaceEntry {
                field: def.field.clone(),
                spec,
            },
        );
    }

    let mut seen = std::collections::BTreeSet::new();
    for task in &raw.tasks {
        if !seen.insert(task.name.as_str()) {
            return Err(invalid(&task.name, "duplicate task name"));
        }
        validate_task(&mut b, task, &fields, &maps, &hypersurfaces)?;
    }

    Ok(Manifest {
        raw,
        manifolds: b.manifolds,
        fields,
        maps,
        hypersurfaces,
    })
}

fn field_on<'f>(
    fields: &'f BTreeMap<String, FieldEntry>,
    name: &str,
    manifold: Option<&str>,
) -> Result<&'f FieldEntry, ManifestError> {
    let f = fields.get(name).ok_or_else(|| invalid(name, "no such field"))?;
    if let Some(m) = manifold {
        if f.manifold != m {
            return Err(invalid(name, format!("field lives on '{}', not '{m}'", f.manifold)));
        }
    }
    Ok(f)
}

fn check_bounds(task: &TaskSpec, m: &ChartManifold) -> Result<(), ManifestError> {
    let given = task.samples.as_ref().and_then(|s| s.bounds.as_ref());
    match given {
        Some(b) if b.len() != m.dim() => Err(invalid(&task.name, "sample bounds do not match the dimension")),
        Some(_) => Ok(()),
        None if m.bounds().is_none() => Err(invalid(
            &task.name,
            format!("'{}' has no bounds; give samples.bounds", m.name()),
        )),
        None => Ok(()),
    }
}

fn validate_task(
    b: &mut Builder<'_>,
    task: &TaskSpec,
    fields: &BTreeMap<String, FieldEntry>,
    maps: &BTreeMap<String, SmoothMapSpec>,
    hypersurfaces: &BTreeMap<String, HypersurfaceEntry>,
) -> Result<(), ManifestError> {
    let map = |name: &str| maps.get(name).ok_or_else(|| invalid(name, "no such map"));
    match &task.kind {
        TaskKind::ClassifyField { field, expect } => {
            let f = field_on(fields, field, None)?;
            check_bounds(task, &*b.manifold(&f.manifold)?)?;
            if let Some(e) = expect {
                if !["killing", "homothetic", "conformal", "none"].contains(&e.as_str()) {
                    return Err(invalid(e, "expected killing, homothetic, conformal or none"));
                }
            }
        }
        TaskKind::CheckJacobi { field, .. } => {
            let f = field_on(fields, field, None)?;
            check_bounds(task, &*b.manifold(&f.manifold)?)?;
        }
        TaskKind::CheckSoliton {
            manifold,
            potential,
            field,
            ..
        } => {
            let m = b.manifold(manifold)?;
            check_bounds(task, &m)?;
            match (potential, field) {
                (Some(p), None) => {
                    b.expr(p, m.dim())?;
                }
                (None, Some(f)) => {
                    field_on(fields, f, Some(manifold))?;
                }
                _ => return Err(invalid(&task.name, "give exactly one of 'potential' or 'field'")),
            }
        }
        TaskKind::CheckIdentity {
            identity,
            map: name,
            field,
            potential,
            ..
        } => {
            let phi = map(name)?;
            check_bounds(task, phi.domain())?;
            let target = phi.target().name().to_string();
            let target_dim = phi.target().dim();
            match (identity, field, potential) {
                (IdentityKind::Conformal, Some(f), None) => {
                    field_on(fields, f, Some(&target))?;
                }
                (IdentityKind::Conformal, ..) => {
                    return Err(invalid(&task.name, "conformal identity needs 'field'"));
                }
                (_, Some(f), None) => {
                    field_on(fields, f, Some(&target))?;
                }
                (_, None, Some(p)) => {
                    b.expr(p, target_dim)?;
                }
                _ => return Err(invalid(&task.name, "give exactly one of 'potential' or 'field'")),
            }
        }
        TaskKind::Hypersurface { hypersurface } => {
            hypersurfaces
                .get(hypersurface)
                .ok_or_else(|| invalid(hypersurface, "no such hypersurface"))?;
        }
        TaskKind::Tension { map: name, .. } | TaskKind::Bitension { map: name, .. } => {
            check_bounds(task, map(name)?.domain())?;
        }
        TaskKind::Flow {
            target,
            resolution,
            init,
            ..
        } => {
            let m = b.manifold(target)?;
            if resolution.is_empty() {
                return Err(invalid(&task.name, "empty resolution"));
            }
            if let InitSpec::Expression { components } = init {
                if components.len() != m.dim() {
                    return Err(invalid(&task.name, "initial map must have one component per target axis"));
                }
                b.exprs(components, resolution.len())?;
            }
        }
        TaskKind::IndexForm { map: name, v, w, .. } => {
            let phi = map(name)?;
            let (m, n) = (phi.domain().dim(), phi.target().dim());
            for comps in std::iter::once(v).chain(w.iter()) {
                if comps.len() != n {
                    return Err(invalid(&task.name, "variation must have one component per target axis"));
                }
                b.exprs(comps, m)?;
            }
        }
        TaskKind::RicciPinch { manifold, .. } => {
            let m = b.manifold(manifold)?;
            check_bounds(task, &m)?;
        }
        TaskKind::Commutator {
            manifold,
            potential,
            field,
        } => {
            let m = b.manifold(manifold)?;
            check_bounds(task, &m)?;
            b.expr(potential, m.dim())?;
            field_on(fields, field, Some(manifold))?;
        }
    }
    Ok(())
}

impl Manifest {
    pub fn manifold(&self, name: &str) -> Arc<ChartManifold> {
        self.manifolds[name].clone()
    }

    pub fn task(&self, name: &str) -> Option<&TaskSpec> {
        self.raw.tasks.iter().find(|t| t.name == name)
    }
}
