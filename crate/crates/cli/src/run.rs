//! Task dispatch. Every task yields exactly one [`Report`]; module errors
//! become failed reports.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use harmap_core::fields::{
    self, classify_conformal, homothetic_commutator_check, ricci_pinch_check, soliton_report,
    ClassifyTolerance, CommutatorReport, ConformalVerdict, FieldReport, PinchReport, SolitonSpec,
};
use harmap_core::heat_flow::{self, FlowConfig, FlowTrace, Initializer};
use harmap_core::maps::{self, VariationField};
use harmap_core::sampling::{self, DEFAULT_PER_AXIS, DEFAULT_RANDOM};
use harmap_core::symbolic;
use harmap_core::verifier::{self, HypersurfaceReport, IdentityOptions, IdentityReport};
use harmap_core::{ChartManifold, Error, Result};
use serde::Serialize;

use crate::manifest::{IdentityKind, InitSpec, Manifest, TaskKind, TaskSpec};

/// Command-line overrides applied to every task.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub point: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", content = "data", rename_all = "kebab-case")]
pub enum Payload {
    Field(FieldReport),
    Identity(IdentityReport),
    Hypersurface(HypersurfaceReport),
    Flow(FlowTrace),
    Pinch(PinchReport),
    Commutator(CommutatorReport),
    Samples { sup: f64, mean: f64, rows: Vec<SampleRow> },
    Scalars(BTreeMap<String, f64>),
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub task: String,
    pub kind: String,
    pub inputs: serde_json::Value,
    pub pass: bool,
    /// Headline number: a sup residual, an energy, a margin.
    pub metric: Option<f64>,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub result: Payload,
    /// Not serialized, so that json output stays byte-identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
}

struct Outcome {
    pass: bool,
    metric: Option<f64>,
    verdict: String,
    payload: Payload,
}

fn seed_for(manifest: &Manifest, task: &TaskSpec, opts: RunOptions) -> u64 {
    opts.seed
        .or_else(|| task.samples.as_ref().and_then(|s| s.seed))
        .or(manifest.raw.seed)
        .unwrap_or(1)
}

fn tolerance(task: &TaskSpec, opts: RunOptions, default: f64) -> f64 {
    opts.tolerance.or(task.tolerance).unwrap_or(default)
}

fn samples_on(manifest: &Manifest, task: &TaskSpec, m: &ChartManifold, opts: RunOptions) -> Vec<Vec<f64>> {
    let spec = task.samples.clone().unwrap_or_default();
    let bounds: Vec<(f64, f64)> = match &spec.bounds {
        Some(b) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
        None => m.bounds().map(<[_]>::to_vec).unwrap_or_default(),
    };
    let per_axis = spec
        .per_axis
        .unwrap_or(if m.dim() <= 2 { DEFAULT_PER_AXIS } else { 7 });
    let random = spec.random.unwrap_or(DEFAULT_RANDOM);
    sampling::sample_points(&bounds, per_axis, random, seed_for(manifest, task, opts))
}

pub fn run_task(manifest: &Manifest, task: &TaskSpec, opts: RunOptions) -> Report {
    let start = Instant::now();
    let outcome = dispatch(manifest, task, opts);
    let wall_time = start.elapsed();
    let (pass, metric, verdict, error, result) = match outcome {
        Ok(o) => (o.pass, o.metric, o.verdict, None, o.payload),
        Err(e) => (false, None, "error".into(), Some(e.to_string()), Payload::None),
    };
    Report {
        task: task.name.clone(),
        kind: task.kind.label(),
        inputs: serde_json::to_value(task).unwrap_or(serde_json::Value::Null),
        pass,
        metric,
        verdict,
        error,
        result,
        wall_time,
    }
}

/// Runs the selected tasks concurrently; reports come back in manifest order.
pub fn run_all(manifest: &Manifest, filter: Option<&str>, opts: RunOptions) -> Vec<Report> {
    let tasks: Vec<&TaskSpec> = manifest
        .raw
        .tasks
        .iter()
        .filter(|t| filter.map_or(true, |f| t.name == f))
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .iter()
            .map(|t| s.spawn(move || run_task(manifest, t, opts)))
            .collect();
        handles
            .into_iter()
            .zip(&tasks)
            .map(|(h, t)| {
                h.join().unwrap_or_else(|_| Report {
                    task: t.name.clone(),
                    kind: t.kind.label(),
                    inputs: serde_json::to_value(t).unwrap_or(serde_json::Value::Null),
                    pass: false,
                    metric: None,
                    verdict: "error".into(),
                    error: Some("task panicked".into()),
                    result: Payload::None,
                    wall_time: Duration::ZERO,
                })
            })
            .collect()
    })
}

fn verdict_matches(verdict: &ConformalVerdict, expect: &str) -> bool {
    matches!(
        (verdict, expect),
        (ConformalVerdict::Killing, "killing")
            | (ConformalVerdict::Homothetic { .. }, "homothetic")
            | (ConformalVerdict::Conformal, "conformal")
            | (ConformalVerdict::None, "none")
    )
}

fn dispatch(manifest: &Manifest, task: &TaskSpec, opts: RunOptions) -> Result<Outcome> {
    match &task.kind {
        TaskKind::ClassifyField { field, expect } => {
            let entry = &manifest.fields[field];
            let m = manifest.manifold(&entry.manifold);
            let samples = samples_on(manifest, task, &m, opts);
            let tol = ClassifyTolerance {
                residual: tolerance(task, opts, ClassifyTolerance::default().residual),
                ..Default::default()
            };
            let c = classify_conformal(&m, &entry.spec, &samples, tol)?;
            let pass = match expect {
                Some(e) => verdict_matches(&c.verdict, e),
                None => c.verdict != ConformalVerdict::None,
            };
            Ok(Outcome {
                pass,
                metric: Some(c.residual_sup),
                verdict: c.verdict.to_string(),
                payload: Payload::Field(c.report(&m, &entry.spec)),
            })
        }
        TaskKind::CheckSoliton {
            manifold,
            potential,
            field,
            lambda,
        } => {
            let m = manifest.manifold(manifold);
            let samples = samples_on(manifest, task, &m, opts);
            let s = match (potential, field) {
                (Some(p), _) => SolitonSpec::gradient(&m, symbolic::parse(p, m.dim()).map_err(config)?, *lambda),
                (None, Some(f)) => SolitonSpec::general(manifest.fields[f].spec.clone(), *lambda),
                (None, None) => unreachable!("validated"),
            };
            let tol = tolerance(task, opts, 1e-8);
            let r = soliton_report(&m, &s, &samples, tol)?;
            Ok(Outcome {
                pass: r.sup < tol,
                metric: Some(r.sup),
                verdict: r.verdict.clone(),
                payload: Payload::Field(r),
            })
        }
        TaskKind::CheckJacobi { field, directions } => {
            let entry = &manifest.fields[field];
            let m = manifest.manifold(&entry.manifold);
            let samples = samples_on(manifest, task, &m, opts);
            let seed = seed_for(manifest, task, opts);
            let per = directions.unwrap_or(4).max(1);
            let dirs = sampling::random_points(&vec![(-1.0, 1.0); m.dim()], per * samples.len(), seed.wrapping_add(1));
            let mut residuals = Vec::new();
            for (p, chunk) in samples.iter().zip(dirs.chunks(per)) {
                let g = m.metric_at(p)?;
                for x in chunk {
                    let r = fields::jacobi_type_residual_at(&m, &entry.spec, p, x)?;
                    residuals.push(g.norm(&r));
                }
            }
            let tol = tolerance(task, opts, 1e-8);
            let sup = residuals.iter().fold(0.0f64, |a, b| a.max(*b));
            let mean = residuals.iter().sum::<f64>() / residuals.len().max(1) as f64;
            let verdict = if sup < tol { "jacobi-type" } else { "none" };
            let mut params = BTreeMap::new();
            params.insert("tolerance".into(), tol);
            Ok(Outcome {
                pass: sup < tol,
                metric: Some(sup),
                verdict: verdict.into(),
                payload: Payload::Field(FieldReport {
                    check: "check-jacobi".into(),
                    manifold: m.name().into(),
                    field: entry.spec.name.clone(),
                    sup,
                    mean,
                    verdict: verdict.into(),
                    params,
                    samples: residuals.len(),
                }),
            })
        }
        TaskKind::CheckIdentity {
            identity,
            map,
            field,
            potential,
            lambda,
            require_jacobi_type,
        } => {
            let phi = &manifest.maps[map];
            let samples = samples_on(manifest, task, phi.domain(), opts);
            let iopts = IdentityOptions {
                tolerance: tolerance(task, opts, 1e-6),
                require_jacobi_type: *require_jacobi_type,
                ..Default::default()
            };
            let target = phi.target();
            let soliton = || -> Result<SolitonSpec> {
                Ok(match (field, potential) {
                    (Some(f), _) => SolitonSpec::general(manifest.fields[f].spec.clone(), *lambda),
                    (None, Some(p)) => {
                        SolitonSpec::gradient(target, symbolic::parse(p, target.dim()).map_err(config)?, *lambda)
                    }
                    (None, None) => unreachable!("validated"),
                })
            };
            let r = match identity {
                IdentityKind::Conformal => {
                    let f = field.as_ref().expect("validated");
                    verifier::conformal_divergence_identity(phi, &manifest.fields[f].spec, &samples, iopts)?
                }
                IdentityKind::Soliton => verifier::soliton_divergence_identity(phi, &soliton()?, &samples, iopts)?,
                IdentityKind::Biharmonic => {
                    verifier::biharmonic_divergence_identity(phi, &soliton()?, &samples, iopts)?
                }
            };
            let sup = std::iter::once(r.sup)
                .chain(r.sub_reports.iter().map(|s| s.sup))
                .fold(0.0, f64::max);
            let pass = r.all_pass();
            Ok(Outcome {
                pass,
                metric: Some(sup),
                verdict: if pass { "holds" } else { "violated" }.into(),
                payload: Payload::Identity(r),
            })
        }
        TaskKind::Hypersurface { hypersurface } => {
            let hs = &manifest.hypersurfaces[hypersurface].spec;
            let spec = task.samples.clone().unwrap_or_default();
            let bounds: Vec<(f64, f64)> = match &spec.bounds {
                Some(b) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
                None => hs.bounds.clone(),
            };
            let samples = sampling::sample_points(
                &bounds,
                spec.per_axis.unwrap_or(DEFAULT_PER_AXIS),
                spec.random.unwrap_or(DEFAULT_RANDOM),
                seed_for(manifest, task, opts),
            );
            let iopts = IdentityOptions {
                tolerance: tolerance(task, opts, 1e-8),
                ..Default::default()
            };
            let r = verifier::hypersurface_decompose(hs, &samples, iopts)?;
            let sup = r.checks.iter().map(|c| c.sup).fold(0.0, f64::max);
            Ok(Outcome {
                pass: r.pass,
                metric: Some(sup),
                verdict: if r.pass { "holds" } else { "violated" }.into(),
                payload: Payload::Hypersurface(r),
            })
        }
        TaskKind::Tension { map, expect_zero } | TaskKind::Bitension { map, expect_zero } => {
            let phi = &manifest.maps[map];
            let samples = samples_on(manifest, task, phi.domain(), opts);
            let bi = matches!(task.kind, TaskKind::Bitension { .. });
            let mut rows = Vec::with_capacity(samples.len());
            let mut norms = Vec::with_capacity(samples.len());
            for p in samples {
                let value = if bi { maps::bitension_at(phi, &p)? } else { maps::tension_at(phi, &p)? };
                let y = phi.jet_at(&p, 0)?.value().to_vec();
                norms.push(phi.target().metric_at(&y)?.norm(&value));
                rows.push(SampleRow { point: p, value });
            }
            let sup = norms.iter().fold(0.0f64, |a, b| a.max(*b));
            let mean = norms.iter().sum::<f64>() / norms.len().max(1) as f64;
            let tol = tolerance(task, opts, 1e-8);
            let zero = sup < tol;
            let name = if bi { "biharmonic" } else { "harmonic" };
            Ok(Outcome {
                pass: !expect_zero || zero,
                metric: Some(sup),
                verdict: if zero { name.to_string() } else { format!("not {name}") },
                payload: Payload::Samples { sup, mean, rows },
            })
        }
        TaskKind::Flow {
            target,
            resolution,
            init,
            dt,
            max_steps,
            stop_tolerance,
            constant_tolerance,
            policy,
            expect,
        } => {
            let m = manifest.manifold(target);
            let seed = seed_for(manifest, task, opts);
            let init = match init {
                InitSpec::RandomSmooth { seed: s } => Initializer::RandomSmooth {
                    seed: opts.seed.or(*s).unwrap_or(seed),
                },
                InitSpec::Identity => Initializer::Identity,
                InitSpec::Expression { components } => Initializer::Expression(
                    components
                        .iter()
                        .map(|c| symbolic::parse(c, resolution.len()))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(config)?,
                ),
            };
            let defaults = FlowConfig::default();
            let cfg = FlowConfig {
                dt: *dt,
                max_steps: max_steps.unwrap_or(defaults.max_steps),
                stop_tolerance: stop_tolerance.unwrap_or(defaults.stop_tolerance),
                constant_tolerance: constant_tolerance.unwrap_or(defaults.constant_tolerance),
                policy: policy.unwrap_or(defaults.policy),
                seed,
            };
            let state = heat_flow::init_grid_map(resolution, &m, &init)?;
            let trace = heat_flow::run_flow(&state, &m, &cfg)?;
            let verdict = trace.verdict.to_string();
            let pass = match expect {
                Some(e) => verdict == *e,
                None => verdict.starts_with("converged"),
            };
            Ok(Outcome {
                pass,
                metric: trace.final_record().map(|r| r.energy),
                verdict,
                payload: Payload::Flow(trace),
            })
        }
        TaskKind::IndexForm { map, v, w, resolution } => {
            let phi = &manifest.maps[map];
            let m = phi.domain().dim();
            let field = |name: &str, comps: &[String]| -> Result<VariationField> {
                let exprs = comps
                    .iter()
                    .map(|c| symbolic::parse(c, m))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(config)?;
                Ok(VariationField::new(name, exprs, m))
            };
            let vf = field("v", v)?;
            let tol = tolerance(task, opts, 1e-9);
            let mut scalars = BTreeMap::new();
            let (pass, metric) = match w {
                None => {
                    let ivv = heat_flow::index_form(phi, &vf, &vf, resolution)?;
                    scalars.insert("I(v,v)".into(), ivv);
                    (ivv >= -tol, ivv)
                }
                Some(w) => {
                    let wf = field("w", w)?;
                    let ivw = heat_flow::index_form(phi, &vf, &wf, resolution)?;
                    let iwv = heat_flow::index_form(phi, &wf, &vf, resolution)?;
                    scalars.insert("I(v,w)".into(), ivw);
                    scalars.insert("I(w,v)".into(), iwv);
                    scalars.insert("asymmetry".into(), (ivw - iwv).abs());
                    ((ivw - iwv).abs() < tol, ivw)
                }
            };
            Ok(Outcome {
                pass,
                metric: Some(metric),
                verdict: if pass { "ok" } else { "violated" }.into(),
                payload: Payload::Scalars(scalars),
            })
        }
        TaskKind::RicciPinch { manifold, lambda, sign } => {
            let m = manifest.manifold(manifold);
            let samples = samples_on(manifest, task, &m, opts);
            let r = ricci_pinch_check(&m, *lambda, &samples, *sign)?;
            Ok(Outcome {
                pass: r.pass,
                metric: Some(r.margin),
                verdict: if r.pass { "pinched" } else { "not pinched" }.into(),
                payload: Payload::Pinch(r),
            })
        }
        TaskKind::Commutator {
            manifold,
            potential,
            field,
        } => {
            let m = manifest.manifold(manifold);
            let samples = samples_on(manifest, task, &m, opts);
            let tol = tolerance(task, opts, 1e-10);
            let f = symbolic::parse(potential, m.dim()).map_err(config)?;
            let r = homothetic_commutator_check(
                &m,
                &f,
                &manifest.fields[field].spec,
                &samples,
                ClassifyTolerance::default(),
            )?;
            let homothetic = matches!(r.zeta_classification.verdict, ConformalVerdict::Homothetic { .. });
            Ok(Outcome {
                pass: r.sup < tol && homothetic,
                metric: Some(r.sup),
                verdict: format!("zeta {}", r.zeta_classification.verdict),
                payload: Payload::Commutator(r),
            })
        }
    }
}

fn config(e: symbolic::ParseError) -> Error {
    Error::Config(e.to_string())
}
