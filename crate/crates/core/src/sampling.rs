//! Deterministic sample sets over chart boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::symbolic::{self, Expr};

pub const DEFAULT_PER_AXIS: usize = 21;
pub const DEFAULT_RANDOM: usize = 100;

/// Seeded generator shared by every randomized routine in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform lattice with `per_axis` nodes per axis (endpoints included).
pub fn lattice(bounds: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    if per_axis == 0 || bounds.is_empty() {
        return Vec::new();
    }
    let total = per_axis.pow(bounds.len() as u32);
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; bounds.len()];
            for axis in (0..bounds.len()).rev() {
                let k = flat % per_axis;
                flat /= per_axis;
                let (lo, hi) = bounds[axis];
                p[axis] = if per_axis == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
                };
            }
            p
        })
        .collect()
}

/// `count` points drawn uniformly from the open box.
pub fn random_points(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect())
        .collect()
}

/// Lattice followed by seeded random interior points.
pub fn sample_points(
    bounds: &[(f64, f64)],
    per_axis: usize,
    random: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut pts = lattice(bounds, per_axis);
    pts.extend(random_points(bounds, random, seed));
    pts
}

/// Exponent tuples of total degree `1..=degree` in `vars` variables, graded order.
fn monomials(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 1..=degree {
        let mut e = vec![0u32; vars];
        fill(&mut out, &mut e, 0, total as u32);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, e: &mut [u32], axis: usize, left: u32) {
    if axis + 1 == e.len() {
        e[axis] = left;
        out.push(e.to_vec());
        return;
    }
    for k in (0..=left).rev() {
        e[axis] = k;
        fill(out, e, axis + 1, left - k);
    }
}

/// Seeded polynomial `offset + Σ c_m u^m` of total degree `degree` in the
/// centered variables `u_i = (x_i − mid_i)/half_i` of `bounds`. The coefficients
/// are rescaled so that `Σ|c_m| = amplitude`, which bounds `|p − offset|` by
/// `amplitude` on the box. The top degree always carries a nonzero coefficient.
pub fn random_polynomial<R: Rng>(
    bounds: &[(f64, f64)],
    degree: usize,
    amplitude: f64,
    offset: f64,
    rng: &mut R,
) -> Expr {
    let u: Vec<Expr> = bounds
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| (Expr::var(i) - 0.5 * (lo + hi)) * (2.0 / (hi - lo)))
        .collect();
    let terms = monomials(bounds.len(), degree);
    let mut coeffs: Vec<f64> = terms.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    if let Some(last) = coeffs.last_mut() {
        *last = if *last < 0.0 { *last - 0.25 } else { *last + 0.25 };
    }
    let total: f64 = coeffs.iter().map(|c| c.abs()).sum();
    let scale = if total > 0.0 { amplitude / total } else { 0.0 };
    let body = symbolic::sum(terms.iter().zip(&coeffs).map(|(m, c)| {
        m.iter()
            .zip(&u)
            .filter(|(k, _)| **k > 0)
            .fold(Expr::constant(c * scale), |acc, (k, ui)| acc * ui.powi(*k as i32))
    }));
    body + offset
}
