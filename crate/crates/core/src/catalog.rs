//! Built-in manifolds, addressable by name.
//!
//! | name                   | metric                          | box              |
//! |------------------------|---------------------------------|------------------|
//! | `euclidean:<d>`        | δ                               | [−2, 2]^d        |
//! | `cigar`                | δ / (1 + x0² + x1²)             | [−3, 3]²         |
//! | `sphere_stereo:<d>`    | 4δ / (1 + \|x\|²)²              | [−2, 2]^d        |
//! | `hyperbolic_halfplane` | δ / x1²                         | [−2,2]×[0.25,3]  |
//! | `torus_flat:<d>`       | δ, every axis 2π-periodic       | [0, 2π]^d        |

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::ChartManifold;
use crate::symbolic::{self, Expr};

pub const CATALOG_NAMES: &[&str] = &[
    "euclidean:<d>",
    "cigar",
    "sphere_stereo:<d>",
    "hyperbolic_halfplane",
    "torus_flat:<d>",
];

fn radius_squared(dim: usize) -> Expr {
    symbolic::sum((0..dim).map(|i| Expr::var(i).powi(2)))
}

pub fn euclidean(dim: usize) -> ChartManifold {
    ChartManifold::conformally_flat(format!("euclidean:{dim}"), dim, Expr::one())
        .and_then(|m| m.with_bounds(vec![(-2.0, 2.0); dim]))
        .expect("valid euclidean chart")
}

/// Hamilton's cigar `(dx² + dy²)/(1 + x² + y²)`.
pub fn cigar() -> ChartManifold {
    let factor = 1.0 / (1.0 + radius_squared(2));
    ChartManifold::conformally_flat("cigar", 2, factor)
        .and_then(|m| m.with_bounds(vec![(-3.0, 3.0); 2]))
        .expect("valid cigar chart")
}

/// Unit sphere in stereographic coordinates.
pub fn sphere_stereo(dim: usize) -> ChartManifold {
    let factor = 4.0 / (1.0 + radius_squared(dim)).powi(2);
    ChartManifold::conformally_flat(format!("sphere_stereo:{dim}"), dim, factor)
        .and_then(|m| m.with_bounds(vec![(-2.0, 2.0); dim]))
        .expect("valid sphere chart")
}

/// Upper half-plane model, curvature −1.
pub fn hyperbolic_halfplane() -> ChartManifold {
    let factor = Expr::var(1).powi(-2);
    ChartManifold::conformally_flat("hyperbolic_halfplane", 2, factor)
        .and_then(|m| m.with_bounds(vec![(-2.0, 2.0), (0.25, 3.0)]))
        .expect("valid half-plane chart")
}

pub fn torus_flat(dim: usize) -> ChartManifold {
    ChartManifold::conformally_flat(format!("torus_flat:{dim}"), dim, Expr::one())
        .and_then(|m| m.with_bounds(vec![(0.0, TAU); dim]))
        .and_then(|m| m.with_periods(vec![Some(TAU); dim]))
        .expect("valid torus chart")
}

/// Resolve a catalog name such as `sphere_stereo:3`. Returns `None` for
/// names outside the catalog.
pub fn lookup(name: &str) -> Option<Result<ChartManifold>> {
    let (base, arg) = match name.split_once(':') {
        Some((b, a)) => (b, Some(a)),
        None => (name, None),
    };
    let dim = || -> Result<usize> {
        let text = arg.ok_or_else(|| Error::Config(format!("'{base}' needs a dimension suffix")))?;
        match text.parse::<usize>() {
            Ok(d) if d > 0 => Ok(d),
            _ => Err(Error::Config(format!("invalid dimension in '{name}'"))),
        }
    };
    let fixed = |m: fn() -> ChartManifold| -> Result<ChartManifold> {
        match arg {
            None => Ok(m()),
            Some(_) => Err(Error::Config(format!("'{base}' takes no dimension"))),
        }
    };
    Some(match base {
        "euclidean" => dim().map(euclidean),
        "sphere_stereo" => dim().map(sphere_stereo),
        "torus_flat" => dim().map(torus_flat),
        "cigar" => fixed(cigar),
        "hyperbolic_halfplane" => fixed(hyperbolic_halfplane),
        _ => return None,
    })
}

pub fn lookup_shared(name: &str) -> Option<Result<Arc<ChartManifold>>> {
    lookup(name).map(|r| r.map(Arc::new))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_name() {
        assert_eq!(lookup("euclidean:3").unwrap().unwrap().dim(), 3);
        assert_eq!(lookup("cigar").unwrap().unwrap().name(), "cigar");
        assert_eq!(lookup("torus_flat:2").unwrap().unwrap().periods()[1], Some(TAU));
        assert!(lookup("euclidean").unwrap().is_err());
        assert!(lookup("euclidean:0").unwrap().is_err());
        assert!(lookup("cigar:2").unwrap().is_err());
        assert!(lookup("m1").is_none());
    }
}
