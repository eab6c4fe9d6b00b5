//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use common::Oracle;
use harmap_core::catalog;
use harmap_core::fields::{
    classify_conformal, gradient_soliton_residual_at, homothetic_commutator_check, ricci_pinch_check,
    ClassifyTolerance, ConformalVerdict, PinchSign, SolitonSpec, VectorFieldSpec,
};
use harmap_core::heat_flow::{
    index_form, init_grid_map, run_flow, tension_grid, FlowConfig, FlowVerdict, Initializer,
};
use harmap_core::maps::{SmoothMapSpec, VariationField};
use harmap_core::sampling::{random_points, random_polynomial, rng, sample_points};
use harmap_core::symbolic::{parse, sum};
use harmap_core::verifier::{
    biharmonic_divergence_identity, conformal_divergence_identity, hypersurface_decompose,
    soliton_divergence_identity, HypersurfaceSpec, IdentityOptions, IdentityReport, BIHARMONIC_STEPS,
};
use harmap_core::{ChartManifold, Expr};

type Outcome = (bool, String, Vec<String>);

fn e(s: &str, dim: usize) -> Expr {
    parse(s, dim).unwrap()
}

fn sup<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn cigar_soliton() -> Outcome {
    let m = catalog::cigar();
    let o = Oracle::cigar();
    let f = e("-log(1 + x0^2 + x1^2)", 2);
    let fo = |p: &[f64]| -(1.0 + p[0] * p[0] + p[1] * p[1]).ln();
    let pts = sample_points(&[(-3.0, 3.0); 2], 21, 100, 1);
    let mut res: f64 = 0.0;
    let mut oracle_res: f64 = 0.0;
    let mut ricci_gap: f64 = 0.0;
    for p in &pts {
        res = res.max(gradient_soliton_residual_at(&m, &f, 0.0, p).unwrap().abs().max());
        let ric = o.ricci(p);
        let hess = o.hessian(&fo, p);
        let ours = m.riemann_at(p).unwrap().ricci;
        for a in 0..2 {
            for b in 0..2 {
                oracle_res = oracle_res.max((ric[a][b] + hess[a][b]).abs());
                ricci_gap = ricci_gap.max((ours[(a, b)] - ric[a][b]).abs());
            }
        }
    }
    let agree = oracle_res.max(ricci_gap);
    (
        res < 1e-8 && agree < 1e-5,
        format!("{} points, sup residual {res:.2e}, oracle disagreement {agree:.2e}", pts.len()),
        vec![],
    )
}

fn ricci_pinching() -> Outcome {
    let cigar = catalog::cigar();
    let hyp = catalog::hyperbolic_halfplane();
    let c = ricci_pinch_check(&cigar, 0.0, &sample_points(cigar.bounds().unwrap(), 21, 100, 2), PinchSign::Above).unwrap();
    let h = ricci_pinch_check(&hyp, 0.0, &sample_points(hyp.bounds().unwrap(), 21, 100, 3), PinchSign::Below).unwrap();
    (
        c.pass && h.pass,
        format!("cigar min eigenvalue {:.3e}, hyperbolic max eigenvalue {:.3e}", c.min_eigenvalue, h.max_eigenvalue),
        vec![],
    )
}

fn einstein_error(m: &ChartManifold, k: f64, seed: u64) -> f64 {
    sup(sample_points(m.bounds().unwrap(), 11, 100, seed).iter().map(|p| {
        let ric = m.riemann_at(p).unwrap().ricci;
        let g = m.metric_at(p).unwrap().matrix;
        (ric - g * k).abs().max()
    }))
}

fn einstein() -> Outcome {
    let s = einstein_error(&catalog::sphere_stereo(2), 1.0, 4);
    let h = einstein_error(&catalog::hyperbolic_halfplane(), -1.0, 5);
    (s < 1e-8 && h < 1e-8, format!("sphere {s:.2e}, hyperbolic {h:.2e}"), vec![])
}

fn special_conformal() -> VectorFieldSpec {
    VectorFieldSpec::new("special", vec![e("(x0^2 - x1^2)/2", 2), e("x0*x1", 2)], Some(Expr::var(0)))
}

fn conformal_classification() -> Outcome {
    let m = catalog::euclidean(2);
    let pts = sample_points(m.bounds().unwrap(), 21, 100, 6);
    let tol = ClassifyTolerance {
        residual: 1e-10,
        ..Default::default()
    };
    let position = VectorFieldSpec::new("position", vec![Expr::var(0), Expr::var(1)], None);
    let rotation = VectorFieldSpec::new("rotation", vec![-Expr::var(1), Expr::var(0)], None);
    let p = classify_conformal(&m, &position, &pts, tol).unwrap();
    let r = classify_conformal(&m, &rotation, &pts, tol).unwrap();
    let s = classify_conformal(&m, &special_conformal(), &pts, tol).unwrap();
    let potential_gap = sup(s.potentials.iter().zip(&pts).map(|(f, q)| (f - q[0]).abs()));
    let homothetic_one = matches!(p.verdict, ConformalVerdict::Homothetic { k } if (k - 1.0).abs() < 1e-10);
    let ok = homothetic_one
        && r.verdict == ConformalVerdict::Killing
        && s.verdict == ConformalVerdict::Conformal
        && potential_gap < 1e-10
        && [&p, &r, &s].iter().all(|c| c.residual_sup < 1e-10);
    (
        ok,
        format!(
            "position {}, rotation {}, special {} with |f - x0| {potential_gap:.1e}; residuals {:.1e}/{:.1e}/{:.1e}",
            p.verdict, r.verdict, s.verdict, p.residual_sup, r.residual_sup, s.residual_sup
        ),
        vec![],
    )
}

fn commutator() -> Outcome {
    let m = catalog::euclidean(2);
    let pts = sample_points(m.bounds().unwrap(), 21, 100, 7);
    let tol = ClassifyTolerance {
        residual: 1e-10,
        ..Default::default()
    };
    let r = homothetic_commutator_check(&m, &Expr::var(0), &special_conformal(), &pts, tol).unwrap();
    let homothetic = matches!(r.zeta_classification.verdict, ConformalVerdict::Homothetic { .. });
    (
        r.sup < 1e-10 && homothetic,
        format!("sup {:.2e}, zeta = ({}) is {}", r.sup, r.zeta.join(", "), r.zeta_classification.verdict),
        vec![],
    )
}

const BOX: [(f64, f64); 2] = [(-1.0, 1.0), (-1.0, 1.0)];

fn random_map(target: ChartManifold, degree: usize, amplitude: f64, seed: u64) -> SmoothMapSpec {
    let domain = if degree % 2 == 1 { catalog::sphere_stereo(2) } else { catalog::euclidean(2) };
    let mut r = rng(seed);
    let comps = (0..2).map(|_| random_polynomial(&BOX, degree, amplitude, 0.0, &mut r)).collect();
    SmoothMapSpec::new(format!("poly{degree}"), Arc::new(domain), Arc::new(target), comps).unwrap()
}

fn divergence_identities() -> Outcome {
    let samples = random_points(&BOX, 200, 8);
    let cigar_pot = e("-log(1 + x0^2 + x1^2)", 2);
    let cigar_field = VectorFieldSpec::new(
        "-2x",
        vec![Expr::var(0) * -2.0, Expr::var(1) * -2.0],
        Some(e("-2/(1 + x0^2 + x1^2)", 2)),
    );
    let position = VectorFieldSpec::new("position", vec![Expr::var(0), Expr::var(1)], Some(Expr::one()));
    let loose = IdentityOptions {
        require_jacobi_type: false,
        ..Default::default()
    };
    let mut reports: Vec<(String, IdentityReport)> = Vec::new();
    for degree in 1..=4 {
        let phi = random_map(catalog::cigar(), degree, 2.0, 100 + degree as u64);
        let s = SolitonSpec::gradient(phi.target(), cigar_pot.clone(), 0.0);
        reports.push(("cigar".into(), conformal_divergence_identity(&phi, &cigar_field, &samples, Default::default()).unwrap()));
        reports.push(("cigar".into(), soliton_divergence_identity(&phi, &s, &samples, Default::default()).unwrap()));
        reports.push(("cigar".into(), biharmonic_divergence_identity(&phi, &s, &samples, loose).unwrap()));

        let phi = random_map(catalog::euclidean(2), degree, 1.5, 200 + degree as u64);
        reports.push(("gaussian".into(), conformal_divergence_identity(&phi, &position, &samples, Default::default()).unwrap()));
        for lambda in [0.5, -0.5] {
            let s = SolitonSpec::general(position.scaled(lambda), lambda);
            reports.push(("gaussian".into(), soliton_divergence_identity(&phi, &s, &samples, Default::default()).unwrap()));
            reports.push(("gaussian".into(), biharmonic_divergence_identity(&phi, &s, &samples, Default::default()).unwrap()));
        }
    }
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    let mut ok = true;
    for family in ["cigar", "gaussian"] {
        let mine: Vec<&IdentityReport> = reports.iter().filter(|(f, _)| f == family).map(|(_, r)| r).collect();
        let mut names: Vec<&str> = mine.iter().map(|r| r.name.as_str()).collect();
        names.sort();
        names.dedup();
        for name in names {
            let group: Vec<&&IdentityReport> = mine.iter().filter(|r| r.name == name).collect();
            let s = sup(group.iter().map(|r| r.sup));
            ok &= group.iter().all(|r| r.all_pass()) && s < 1e-6;
            worst = worst.max(s);
            lines.push(format!("{family}/{name}: sup {s:.2e}"));
            if group[0].sub_reports.len() == BIHARMONIC_STEPS.len() {
                for step in BIHARMONIC_STEPS {
                    let ss = sup(group.iter().flat_map(|r| r.sub_reports.iter().filter(|x| x.name == step).map(|x| x.sup)));
                    ok &= ss < 1e-6;
                    worst = worst.max(ss);
                    lines.push(format!("  {step}: sup {ss:.2e}"));
                }
            }
        }
    }
    (ok, format!("{} identity runs over 200 samples, worst {worst:.2e}", reports.len()), lines)
}

fn hypersurface() -> Outcome {
    let r2 = Expr::var(0).powi(2) + Expr::var(1).powi(2);
    let den = 1.0 + r2.clone();
    let hs = HypersurfaceSpec {
        name: "unit_sphere".into(),
        ambient: Arc::new(catalog::euclidean(3)),
        embedding: vec![Expr::var(0) * 2.0 / &den, Expr::var(1) * 2.0 / &den, (1.0 - r2) / &den],
        field: VectorFieldSpec::new("dz", vec![Expr::zero(), Expr::zero(), Expr::one()], None),
        bounds: vec![(-1.5, 1.5); 2],
    };
    let opts = IdentityOptions {
        tolerance: 1e-8,
        ..Default::default()
    };
    let r = hypersurface_decompose(&hs, &sample_points(&hs.bounds, 11, 100, 9), opts).unwrap();
    let f_gap = sup(r.samples.iter().map(|s| (s.f - s.ambient_point[2]).abs()));
    let rho_gap = sup(r.samples.iter().map(|s| (s.rho + 1.0).abs()));
    let lines = r.checks.iter().map(|c| format!("{}: sup {:.2e}", c.name, c.sup)).collect();
    (
        r.pass && f_gap < 1e-8 && rho_gap < 1e-8,
        format!("{} samples, |f - z| {f_gap:.1e}, |rho + 1| {rho_gap:.1e}", r.samples.len()),
        lines,
    )
}

fn liouville() -> Outcome {
    let target = catalog::cigar();
    let config = FlowConfig::default();
    let traces: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (1..=5u64)
            .map(|seed| {
                let target = &target;
                let config = &config;
                s.spawn(move || {
                    let init = init_grid_map(&[32, 32], target, &Initializer::RandomSmooth { seed }).unwrap();
                    (seed, run_flow(&init, target, config).unwrap())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut ok = true;
    let mut lines = Vec::new();
    for (seed, t) in &traces {
        let last = t.final_record().unwrap();
        let ratio = last.energy / t.initial_energy();
        let monotone = t.records.windows(2).all(|w| w[1].energy <= w[0].energy);
        let pass = t.verdict == FlowVerdict::ConvergedConstant
            && ratio < 1e-3
            && last.sup_dphi < 1e-3
            && last.step <= 100_000
            && monotone;
        ok &= pass;
        lines.push(format!(
            "seed {seed}: {} after {} steps, E/E0 {ratio:.2e}, sup|dphi| {:.2e}, monotone {monotone}, {} rejections",
            t.verdict, last.step, last.sup_dphi, t.rejections
        ));
    }
    (ok, "5 random-smooth maps into the cigar on a 32x32 torus".into(), lines)
}

fn killing_target() -> Outcome {
    let torus = catalog::torus_flat(2);
    let s = init_grid_map(&[32, 32], &torus, &Initializer::Identity).unwrap();
    let tau = sup(tension_grid(&s, &torus).unwrap().into_iter().flatten().map(f64::abs));
    let t = run_flow(&s, &torus, &FlowConfig::default()).unwrap();
    let dphi = t.final_record().unwrap().sup_dphi;
    (
        tau < 1e-9 && (dphi - 1.0).abs() < 1e-6 && t.verdict == FlowVerdict::ConvergedNonconstant,
        format!("sup|tau| {tau:.1e}, sup|dphi| {dphi:.6}, verdict {}", t.verdict),
        vec![],
    )
}

fn discretization_order() -> Outcome {
    let line = ChartManifold::conformally_flat("line", 1, Expr::one()).unwrap();
    let err = |n: usize| {
        let s = init_grid_map(&[n], &line, &Initializer::Expression(vec![e("sin(x0)", 1)])).unwrap();
        let t = tension_grid(&s, &line).unwrap();
        sup((0..n).map(|k| (t[k][0] + s.node_position(k)[0].sin()).abs()))
    };
    let errs: Vec<f64> = [32, 64, 128].into_iter().map(err).collect();
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    (
        ratios.iter().all(|r| (r - 4.0).abs() <= 0.8),
        format!("errors {:.3e} {:.3e} {:.3e}, ratios {:.3} {:.3}", errs[0], errs[1], errs[2], ratios[0], ratios[1]),
        vec![],
    )
}

const MODES: [(f64, f64); 6] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0), (2.0, 1.0), (0.0, 2.0)];

fn trig_variation(coeffs: &[f64]) -> VariationField {
    let comps = (0..2)
        .map(|a| {
            sum(MODES.iter().enumerate().map(|(j, (k0, k1))| {
                let arg = Expr::var(0) * *k0 + Expr::var(1) * *k1;
                let base = (a * MODES.len() + j) * 2;
                arg.cos() * coeffs[base] + arg.sin() * coeffs[base + 1]
            }))
        })
        .collect();
    VariationField::new("v", comps, 2)
}

fn index_positivity() -> Outcome {
    let phi = SmoothMapSpec::new(
        "phi",
        Arc::new(catalog::torus_flat(2)),
        Arc::new(catalog::euclidean(2)),
        vec![e("0.3*sin(x0)", 2), e("0.2*cos(x1) + 0.1*sin(x0 - x1)", 2)],
    )
    .unwrap();
    let coeffs = random_points(&[(-1.0, 1.0); 24], 40, 11);
    let mut min_ivv = f64::INFINITY;
    let mut asym: f64 = 0.0;
    for pair in coeffs.chunks(2) {
        let v = trig_variation(&pair[0]);
        let w = trig_variation(&pair[1]);
        let res = [16, 16];
        min_ivv = min_ivv.min(index_form(&phi, &v, &v, &res).unwrap());
        let vw = index_form(&phi, &v, &w, &res).unwrap();
        let wv = index_form(&phi, &w, &v, &res).unwrap();
        asym = asym.max((vw - wv).abs());
    }
    (
        min_ivv >= -1e-9 && asym < 1e-9,
        format!("20 variations, min I(v,v) {min_ivv:.4}, max |I(v,w) - I(w,v)| {asym:.1e}"),
        vec![],
    )
}

fn determinism() -> Outcome {
    let manifest = concat!(env!("CARGO_MANIFEST_DIR"), "/manifests/campaign.json");
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_harmap"))
            .args(["verify", manifest, "--format", "json"])
            .output()
            .unwrap()
    };
    let (a, b) = (run(), run());
    let same = a.stdout == b.stdout && !a.stdout.is_empty();
    (
        same && a.status.success(),
        format!("{} bytes per run, identical {same}, exit {:?}", a.stdout.len(), a.status.code()),
        vec![],
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("cigar soliton certificate", cigar_soliton),
        ("ricci pinching", ricci_pinching),
        ("einstein metrics", einstein),
        ("conformal classification", conformal_classification),
        ("homothetic commutator", commutator),
        ("divergence identities", divergence_identities),
        ("hypersurface suite", hypersurface),
        ("liouville flow on the cigar", liouville),
        ("killing-target fixed point", killing_target),
        ("discretization order", discretization_order),
        ("index form positivity", index_positivity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail, lines) = match std::panic::catch_unwind(check) {
            Ok(o) => o,
            Err(_) => (false, "panicked".to_string(), vec![]),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<30} {} ({:.1}s): {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for l in lines {
            println!("    {l}");
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
