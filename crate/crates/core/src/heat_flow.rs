//! Harmonic-map heat flow `∂φ/∂t = τ(φ)` from the flat torus `[0, 2π)^m`
//! into a single-chart target, discretized on a periodic uniform grid.
//!
//! Tension uses second-order central differences plus the target Christoffel
//! term. The discrete energy uses forward differences with the target metric
//! averaged over each edge; on flat targets its gradient is exactly the
//! discrete Laplacian, so small explicit steps never raise it. Differences on
//! periodic target axes are taken between nearest images.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ChartManifold;
use crate::maps::{self, SmoothMapSpec, VariationField};
use crate::sampling;
use crate::symbolic::{Expr, Tape};

/// Node values of a map from the periodic grid into target coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMapState {
    pub resolution: Vec<usize>,
    /// One target point per node; the last domain axis varies fastest.
    pub values: Vec<Vec<f64>>,
    pub t: f64,
    pub steps: usize,
}

/// How the initial map is produced.
#[derive(Debug, Clone)]
pub enum Initializer {
    Expression(Vec<Expr>),
    /// Seeded trigonometric polynomial with modes `|k|_∞ ≤ 2`.
    RandomSmooth { seed: u64 },
    Identity,
}

impl GridMapState {
    pub fn domain_dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        TAU / self.resolution[axis] as f64
    }

    /// Multi-index of a flat node index.
    pub fn node_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.resolution.len()];
        for axis in (0..self.resolution.len()).rev() {
            idx[axis] = flat % self.resolution[axis];
            flat /= self.resolution[axis];
        }
        idx
    }

    pub fn node_position(&self, flat: usize) -> Vec<f64> {
        self.node_index(flat)
            .iter()
            .enumerate()
            .map(|(axis, &i)| i as f64 * self.spacing(axis))
            .collect()
    }

    /// Flat index of the neighbour `shift` steps along `axis`, wrapping.
    pub fn neighbour(&self, flat: usize, axis: usize, shift: isize) -> usize {
        let n = self.resolution[axis];
        let stride: usize = self.resolution[axis + 1..].iter().product();
        let i = (flat / stride) % n;
        let j = (i as isize + shift).rem_euclid(n as isize) as usize;
        flat - i * stride + j * stride
    }

    /// Text dump: one node per line, indices then coordinates.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.node_index(flat);
            let fields: Vec<String> = idx
                .iter()
                .map(|i| i.to_string())
                .chain(v.iter().map(|x| format!("{x:?}")))
                .collect();
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        out
    }
}

fn check_nodes(target: &ChartManifold, values: &[Vec<f64>]) -> Result<()> {
    for v in values {
        if !target.contains(v) {
            return Err(Error::ChartExit {
                manifold: target.name().into(),
                point: v.clone(),
            });
        }
    }
    Ok(())
}

pub fn init_grid_map(
    resolution: &[usize],
    target: &ChartManifold,
    init: &Initializer,
) -> Result<GridMapState> {
    if resolution.is_empty() || resolution.iter().any(|&n| n < 3) {
        return Err(Error::Config("grid needs at least 3 nodes per axis".into()));
    }
    let m = resolution.len();
    let n = target.dim();
    let mut state = GridMapState {
        resolution: resolution.to_vec(),
        values: Vec::new(),
        t: 0.0,
        steps: 0,
    };
    let total: usize = resolution.iter().product();
    let positions: Vec<Vec<f64>> = (0..total).map(|k| state.node_position(k)).collect();
    state.values = match init {
        Initializer::Expression(exprs) => {
            if exprs.len() != n {
                return Err(Error::Dimension(format!(
                    "initial map has {} components, target '{}' has dimension {n}",
                    exprs.len(),
                    target.name()
                )));
            }
            let tape = Tape::compile(exprs);
            positions.iter().map(|p| tape.eval(p)).collect::<Result<_, _>>()?
        }
        Initializer::Identity => {
            if n != m || target.periods().iter().any(|p| *p != Some(TAU)) {
                return Err(Error::PreconditionFailed(format!(
                    "identity initializer needs the {m}-dimensional flat torus as target, got '{}'",
                    target.name()
                )));
            }
            positions.clone()
        }
        Initializer::RandomSmooth { seed } => random_smooth(&positions, m, target, *seed),
    };
    check_nodes(target, &state.values)?;
    Ok(state)
}

fn random_smooth(positions: &[Vec<f64>], m: usize, target: &ChartManifold, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sampling::rng(seed);
    let n = target.dim();
    // wave vectors in {-2..2}^m, one from each ±k pair
    let mut modes: Vec<Vec<i32>> = Vec::new();
    let count = 5usize.pow(m as u32);
    for flat in 0..count {
        let k: Vec<i32> = (0..m)
            .map(|a| ((flat / 5usize.pow((m - 1 - a) as u32)) % 5) as i32 - 2)
            .collect();
        let first = k.iter().find(|&&c| c != 0);
        if matches!(first, Some(&c) if c > 0) {
            modes.push(k);
        }
    }
    let centre_and_radius: Vec<(f64, f64)> = (0..n)
        .map(|a| match (target.bounds(), target.periods()[a]) {
            (_, Some(period)) => (0.5 * period, 0.4 * period),
            (Some(b), None) => (0.5 * (b[a].0 + b[a].1), 0.2 * (b[a].1 - b[a].0)),
            (None, None) => (0.0, 1.0),
        })
        .collect();
    let coeffs: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|_| {
            let raw: Vec<(f64, f64)> = modes
                .iter()
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let total: f64 = raw.iter().map(|(a, b)| a.abs() + b.abs()).sum();
            raw.into_iter().map(|(a, b)| (a / total, b / total)).collect()
        })
        .collect();
    positions
        .iter()
        .map(|x| {
            (0..n)
                .map(|a| {
                    let (centre, radius) = centre_and_radius[a];
                    let wave: f64 = modes
                        .iter()
                        .zip(&coeffs[a])
                        .map(|(k, (c, s))| {
                            let phase: f64 = k.iter().zip(x).map(|(ki, xi)| *ki as f64 * xi).sum();
                            c * phase.cos() + s * phase.sin()
                        })
                        .sum();
                    centre + radius * wave
                })
                .collect()
        })
        .collect()
}

/// `Δ_i φ` between nodes `a` and `b`, nearest image on periodic target axes.
fn delta(target: &ChartManifold, a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len()).map(|k| target.coordinate_delta(k, a[k], b[k])).collect()
}

/// Discrete tension at every node.
pub fn tension_grid(state: &GridMapState, target: &ChartManifold) -> Result<Vec<Vec<f64>>> {
    check_nodes(target, &state.values)?;
    let m = state.domain_dim();
    let n = target.dim();
    let mut out = Vec::with_capacity(state.node_count());
    for (flat, v) in state.values.iter().enumerate() {
        let gamma = target.christoffel_at(v)?;
        let mut tau = vec![0.0; n];
        for axis in 0..m {
            let h = state.spacing(axis);
            let prev = &state.values[state.neighbour(flat, axis, -1)];
            let next = &state.values[state.neighbour(flat, axis, 1)];
            let back = delta(target, prev, v);
            let fwd = delta(target, v, next);
            let d1: Vec<f64> = back.iter().zip(&fwd).map(|(b, f)| (b + f) / (2.0 * h)).collect();
            let g = gamma.contract(&d1, &d1);
            for k in 0..n {
                tau[k] += (fwd[k] - back[k]) / (h * h) + g[k];
            }
        }
        out.push(tau);
    }
    Ok(out)
}

/// `½ Σ_edges |Δφ/h|²_h̄ · cell volume`, with `h̄` averaged over the edge end points.
pub fn total_energy(state: &GridMapState, target: &ChartManifold) -> Result<f64> {
    check_nodes(target, &state.values)?;
    let m = state.domain_dim();
    let metrics = state
        .values
        .iter()
        .map(|v| target.metric_at(v))
        .collect::<Result<Vec<_>>>()?;
    let cell: f64 = (0..m).map(|a| state.spacing(a)).product();
    let mut energy = 0.0;
    for (flat, v) in state.values.iter().enumerate() {
        for axis in 0..m {
            let h = state.spacing(axis);
            let nb = state.neighbour(flat, axis, 1);
            let d: Vec<f64> = delta(target, v, &state.values[nb]).iter().map(|x| x / h).collect();
            energy += 0.5 * (metrics[flat].inner(&d, &d) + metrics[nb].inner(&d, &d));
        }
    }
    Ok(0.5 * energy * cell)
}

/// `max_{node, i} |D_i φ|_h̄` with central differences.
pub fn sup_differential(state: &GridMapState, target: &ChartManifold) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for (flat, v) in state.values.iter().enumerate() {
        let metric = target.metric_at(v)?;
        for axis in 0..state.domain_dim() {
            let h = state.spacing(axis);
            let prev = &state.values[state.neighbour(flat, axis, -1)];
            let next = &state.values[state.neighbour(flat, axis, 1)];
            let d: Vec<f64> = delta(target, prev, next).iter().map(|x| x / (2.0 * h)).collect();
            sup = sup.max(metric.norm(&d));
        }
    }
    Ok(sup)
}

fn sup_norm(target: &ChartManifold, state: &GridMapState, field: &[Vec<f64>]) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for (v, w) in state.values.iter().zip(field) {
        sup = sup.max(target.metric_at(v)?.norm(w));
    }
    Ok(sup)
}

/// Equal-weight periodic quadrature of `½|dφ|²` for a closed-form map on the torus.
pub fn spec_energy(phi: &SmoothMapSpec, resolution: &[usize]) -> Result<f64> {
    quadrature(resolution, |p| Ok(0.5 * maps::energy_density_at(phi, p)?))
}

fn quadrature(resolution: &[usize], mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    let grid = GridMapState {
        resolution: resolution.to_vec(),
        values: Vec::new(),
        t: 0.0,
        steps: 0,
    };
    let total: usize = resolution.iter().product();
    let cell: f64 = (0..resolution.len()).map(|a| grid.spacing(a)).product();
    let mut acc = 0.0;
    for k in 0..total {
        acc += f(&grid.node_position(k))?;
    }
    Ok(acc * cell)
}

/// `I(v, w) = ∫ h(J_φ(v), w)` by equal-weight quadrature over the torus grid.
pub fn index_form(
    phi: &SmoothMapSpec,
    v: &VariationField,
    w: &VariationField,
    resolution: &[usize],
) -> Result<f64> {
    let domain = phi.domain();
    if domain.dim() != resolution.len() || domain.periods().iter().any(|p| *p != Some(TAU)) {
        return Err(Error::PreconditionFailed(format!(
            "index form integrates over the flat torus; domain is '{}'",
            domain.name()
        )));
    }
    quadrature(resolution, |p| {
        let jv = maps::jacobi_operator_at(phi, v, p)?;
        let y = phi.jet_at(p, 0)?.value().to_vec();
        let wp = w.jet_at(p, 0)?;
        Ok(phi.target().metric_at(&y)?.inner(&jv, wp.value()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyPolicy {
    RejectAndHalve,
    Abort,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowConfig {
    /// Time step; `None` means `0.25·h²` for the finest axis.
    pub dt: Option<f64>,
    pub max_steps: usize,
    /// Stop once `sup|τ| <` this.
    pub stop_tolerance: f64,
    /// Converged states with `sup|dφ| <` this are reported constant.
    pub constant_tolerance: f64,
    pub policy: EnergyPolicy,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: None,
            max_steps: 100_000,
            stop_tolerance: 1e-6,
            constant_tolerance: 1e-3,
            policy: EnergyPolicy::RejectAndHalve,
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt.map_or(true, |dt| dt > 0.0 && dt.is_finite())
            && self.stop_tolerance > 0.0
            && self.constant_tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("dt and tolerances must be positive".into()))
        }
    }

    pub fn time_step(&self, state: &GridMapState) -> f64 {
        self.dt.unwrap_or_else(|| {
            let h = (0..state.domain_dim()).map(|a| state.spacing(a)).fold(f64::INFINITY, f64::min);
            0.25 * h * h
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlowVerdict {
    ConvergedConstant,
    ConvergedNonconstant,
    MaxSteps,
    ChartExit { node: Vec<usize>, point: Vec<f64> },
    /// Energy rose under the `abort` policy.
    EnergyIncrease,
}

impl std::fmt::Display for FlowVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowVerdict::ConvergedConstant => write!(f, "converged-constant"),
            FlowVerdict::ConvergedNonconstant => write!(f, "converged-nonconstant"),
            FlowVerdict::MaxSteps => write!(f, "max-steps"),
            FlowVerdict::ChartExit { node, .. } => write!(f, "chart-exit at node {node:?}"),
            FlowVerdict::EnergyIncrease => write!(f, "energy-increase"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub sup_tension: f64,
    pub sup_dphi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub verdict: FlowVerdict,
    /// Number of rejected trial steps.
    pub rejections: usize,
    pub final_dt: f64,
    #[serde(skip)]
    pub final_state: Option<GridMapState>,
}

impl FlowTrace {
    pub fn initial_energy(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.energy)
    }

    pub fn final_record(&self) -> Option<&FlowRecord> {
        self.records.last()
    }

    /// CSV with header `step,t,energy,sup_tension,sup_dphi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,t,energy,sup_tension,sup_dphi\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.step, r.t, r.energy, r.sup_tension, r.sup_dphi
            );
        }
        out
    }
}

/// Result of one guarded step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: GridMapState,
    pub energy: f64,
    pub dt: f64,
    pub rejections: usize,
    /// False when the energy guard could not find an admissible step.
    pub accepted: bool,
}

const MAX_HALVINGS: usize = 40;

fn euler(state: &GridMapState, tension: &[Vec<f64>], dt: f64) -> GridMapState {
    GridMapState {
        resolution: state.resolution.clone(),
        values: state
            .values
            .iter()
            .zip(tension)
            .map(|(v, t)| v.iter().zip(t).map(|(a, b)| a + dt * b).collect())
            .collect(),
        t: state.t + dt,
        steps: state.steps + 1,
    }
}

fn exit_node(state: &GridMapState, target: &ChartManifold) -> Option<usize> {
    state.values.iter().position(|v| !target.contains(v))
}

/// One explicit Euler step `φ' = φ + dt·τ(φ)` under the energy guard.
pub fn flow_step(
    state: &GridMapState,
    target: &ChartManifold,
    config: &FlowConfig,
    dt: f64,
) -> Result<StepOutcome> {
    let tension = tension_grid(state, target)?;
    let energy = total_energy(state, target)?;
    guarded_step(state, target, config, dt, &tension, energy)
}

fn guarded_step(
    state: &GridMapState,
    target: &ChartManifold,
    config: &FlowConfig,
    dt: f64,
    tension: &[Vec<f64>],
    energy: f64,
) -> Result<StepOutcome> {
    let mut dt = dt;
    let mut rejections = 0;
    loop {
        let next = euler(state, tension, dt);
        if let Some(node) = exit_node(&next, target) {
            return Err(Error::ChartExit {
                manifold: target.name().into(),
                point: next.values[node].clone(),
            });
        }
        let e = total_energy(&next, target)?;
        if e <= energy {
            return Ok(StepOutcome {
                state: next,
                energy: e,
                dt,
                rejections,
                accepted: true,
            });
        }
        if config.policy == EnergyPolicy::Abort || rejections == MAX_HALVINGS {
            return Ok(StepOutcome {
                state: state.clone(),
                energy,
                dt,
                rejections,
                accepted: false,
            });
        }
        rejections += 1;
        dt *= 0.5;
    }
}

/// Iterates guarded steps until `sup|τ|` drops below the stop tolerance or the
/// step budget runs out. A rejected step keeps the halved `dt` for later steps.
pub fn run_flow(state: &GridMapState, target: &ChartManifold, config: &FlowConfig) -> Result<FlowTrace> {
    config.validate()?;
    let mut dt = config.time_step(state);
    let mut current = state.clone();
    let mut records = Vec::new();
    let mut rejections = 0;
    let finish = |records, verdict, rejections, dt, state| FlowTrace {
        records,
        verdict,
        rejections,
        final_dt: dt,
        final_state: Some(state),
    };
    if let Some(node) = exit_node(&current, target) {
        let verdict = FlowVerdict::ChartExit {
            node: current.node_index(node),
            point: current.values[node].clone(),
        };
        return Ok(finish(records, verdict, rejections, dt, current));
    }
    let mut energy = total_energy(&current, target)?;
    loop {
        let tension = tension_grid(&current, target)?;
        let sup_tension = sup_norm(target, &current, &tension)?;
        let sup_dphi = sup_differential(&current, target)?;
        records.push(FlowRecord {
            step: current.steps,
            t: current.t,
            energy,
            sup_tension,
            sup_dphi,
        });
        if sup_tension < config.stop_tolerance {
            let verdict = if sup_dphi < config.constant_tolerance {
                FlowVerdict::ConvergedConstant
            } else {
                FlowVerdict::ConvergedNonconstant
            };
            return Ok(finish(records, verdict, rejections, dt, current));
        }
        if current.steps >= config.max_steps {
            return Ok(finish(records, FlowVerdict::MaxSteps, rejections, dt, current));
        }
        let outcome = match guarded_step(&current, target, config, dt, &tension, energy) {
            Ok(o) => o,
            Err(Error::ChartExit { point, .. }) => {
                let trial = euler(&current, &tension, dt);
                let node = exit_node(&trial, target).unwrap_or(0);
                let verdict = FlowVerdict::ChartExit {
                    node: current.node_index(node),
                    point,
                };
                return Ok(finish(records, verdict, rejections, dt, current));
            }
            Err(e) => return Err(e),
        };
        rejections += outcome.rejections;
        dt = outcome.dt;
        if !outcome.accepted {
            if config.policy == EnergyPolicy::Abort {
                return Ok(finish(records, FlowVerdict::EnergyIncrease, rejections, dt, current));
            }
            // stalled at round-off level; count the step without moving
            current.steps += 1;
            continue;
        }
        current = outcome.state;
        energy = outcome.energy;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::symbolic::parse;
    use std::sync::Arc;

    fn sin_x0() -> Initializer {
        Initializer::Expression(vec![parse("sin(x0)", 2).unwrap()])
    }

    #[test]
    fn identity_initializer_layout() {
        let t = catalog::torus_flat(2);
        let s = init_grid_map(&[32, 32], &t, &Initializer::Identity).unwrap();
        assert_eq!(s.values[0], vec![0.0, 0.0]);
        assert_eq!(s.values[32 * 3 + 5], vec![TAU * 3.0 / 32.0, TAU * 5.0 / 32.0]);
        assert!(init_grid_map(&[8, 8], &catalog::cigar(), &Initializer::Identity).is_err());
    }

    #[test]
    fn random_init_is_seeded_and_bounded() {
        let c = catalog::cigar();
        let a = init_grid_map(&[16, 16], &c, &Initializer::RandomSmooth { seed: 4 }).unwrap();
        let b = init_grid_map(&[16, 16], &c, &Initializer::RandomSmooth { seed: 4 }).unwrap();
        let d = init_grid_map(&[16, 16], &c, &Initializer::RandomSmooth { seed: 5 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
        assert!(a.values.iter().flatten().all(|v| v.abs() <= 1.2 + 1e-12));
    }

    #[test]
    fn expression_init_into_cigar() {
        let e = Initializer::Expression(vec![parse("0.1*sin(x0)", 2).unwrap(), Expr::zero()]);
        let s = init_grid_map(&[8, 8], &catalog::cigar(), &e).unwrap();
        assert!(s.values.iter().all(|v| v[0].abs() <= 0.1 && v[1] == 0.0));
        let far = Initializer::Expression(vec![parse("5*sin(x0)", 2).unwrap(), Expr::zero()]);
        assert!(matches!(
            init_grid_map(&[8, 8], &catalog::cigar(), &far),
            Err(Error::ChartExit { .. })
        ));
    }

    #[test]
    fn neighbours_wrap() {
        let s = init_grid_map(&[4, 5], &catalog::torus_flat(2), &Initializer::Identity).unwrap();
        assert_eq!(s.neighbour(0, 0, -1), 15);
        assert_eq!(s.neighbour(0, 1, -1), 4);
        assert_eq!(s.neighbour(19, 1, 1), 15);
        assert_eq!(s.neighbour(19, 0, 1), 4);
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let t = catalog::torus_flat(2);
        let s = init_grid_map(&[32, 32], &t, &Initializer::Identity).unwrap();
        let tau = tension_grid(&s, &t).unwrap();
        assert!(tau.iter().flatten().all(|v| v.abs() < 1e-12));
        assert!((total_energy(&s, &t).unwrap() - 2.0 * TAU * TAU / 2.0).abs() < 1e-10);
        assert!((sup_differential(&s, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sine_tension_and_step() {
        let line = catalog::euclidean(1);
        let s = init_grid_map(&[64, 64], &line, &sin_x0()).unwrap();
        let tau = tension_grid(&s, &line).unwrap();
        let err = s
            .values
            .iter()
            .zip(&tau)
            .map(|(v, t)| (t[0] + v[0]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-2);
        let dt = 1e-3;
        let next = flow_step(&s, &line, &FlowConfig::default(), dt).unwrap();
        assert!(next.accepted);
        for (a, b) in next.state.values.iter().zip(&s.values) {
            assert!((a[0] - b[0] * (1.0 - dt)).abs() < 1e-5);
        }
        let constant = init_grid_map(&[8, 8], &line, &Initializer::Expression(vec![Expr::constant(0.3)])).unwrap();
        assert!(tension_grid(&constant, &line).unwrap().iter().all(|t| t[0] == 0.0));
        let next = flow_step(&constant, &line, &FlowConfig::default(), 0.01).unwrap();
        assert_eq!(next.state.values, constant.values);
    }

    #[test]
    fn spec_energy_of_sine() {
        let torus = Arc::new(catalog::torus_flat(2));
        let phi = SmoothMapSpec::new("sin", torus, Arc::new(catalog::euclidean(1)), vec![parse("sin(x0)", 2).unwrap()])
            .unwrap();
        let e = spec_energy(&phi, &[16, 16]).unwrap();
        assert!((e - std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn flat_flow_decays_to_mean() {
        let plane = catalog::euclidean(2);
        let s = init_grid_map(&[16, 16], &plane, &Initializer::RandomSmooth { seed: 1 }).unwrap();
        let trace = run_flow(&s, &plane, &FlowConfig::default()).unwrap();
        assert_eq!(trace.verdict, FlowVerdict::ConvergedConstant);
        assert!(trace.records.windows(2).all(|w| w[1].energy <= w[0].energy));
        let csv = trace.to_csv();
        assert!(csv.starts_with("step,t,energy,sup_tension,sup_dphi\n"));
        assert_eq!(csv.lines().count(), trace.records.len() + 1);
    }

    #[test]
    fn torus_identity_flow_is_nonconstant() {
        let t = catalog::torus_flat(2);
        let s = init_grid_map(&[16, 16], &t, &Initializer::Identity).unwrap();
        let trace = run_flow(&s, &t, &FlowConfig::default()).unwrap();
        assert_eq!(trace.verdict, FlowVerdict::ConvergedNonconstant);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn chart_exit_is_reported() {
        // flow pushes values outward on the hyperbolic half-plane chart near its lower edge
        let hp = catalog::hyperbolic_halfplane();
        let e = Initializer::Expression(vec![Expr::zero(), parse("0.26 + 0.0*x0", 2).unwrap()]);
        let s = init_grid_map(&[8, 8], &hp, &e).unwrap();
        let mut far = s.clone();
        far.values[3][1] = 0.1;
        let trace = run_flow(&far, &hp, &FlowConfig::default()).unwrap();
        assert!(matches!(trace.verdict, FlowVerdict::ChartExit { .. }));
    }

    #[test]
    fn index_form_flat_symmetric() {
        let torus = Arc::new(catalog::torus_flat(2));
        let plane = Arc::new(catalog::euclidean(2));
        let phi = SmoothMapSpec::new("phi", torus, plane, vec![parse("0.3*sin(x0)", 2).unwrap(), parse("0.2*cos(x1)", 2).unwrap()])
            .unwrap();
        let v = VariationField::new("v", vec![parse("cos(x0)", 2).unwrap(), parse("sin(x0 + x1)", 2).unwrap()], 2);
        let w = VariationField::new("w", vec![parse("sin(2*x1)", 2).unwrap(), parse("cos(x0)", 2).unwrap()], 2);
        let vv = index_form(&phi, &v, &v, &[16, 16]).unwrap();
        // ∫|∇v|² = (2π)²/2 · (1 + 2)
        assert!((vv - TAU * TAU * 1.5).abs() < 1e-9);
        let vw = index_form(&phi, &v, &w, &[16, 16]).unwrap();
        let wv = index_form(&phi, &w, &v, &[16, 16]).unwrap();
        assert!((vw - wv).abs() < 1e-9);
        let z = VariationField::zero(2, 2);
        assert_eq!(index_form(&phi, &z, &v, &[8, 8]).unwrap(), 0.0);
    }
}
