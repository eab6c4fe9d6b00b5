//! Manifest-driven front end for `harmap-core`.

pub mod manifest;
pub mod report;
pub mod run;

pub use manifest::{parse_manifest, parse_manifest_str, Manifest, ManifestError, TaskSpec};
pub use report::{emit_reports, render_csv, render_json, render_text, Format};
pub use run::{run_all, run_task, Payload, Report, RunOptions};

/// One line per built-in manifold.
pub const CATALOG_DESCRIPTIONS: &[(&str, &str)] = &[
    ("euclidean:<d>", "flat metric on [-2,2]^d"),
    ("cigar", "(dx^2 + dy^2)/(1 + x^2 + y^2) on [-3,3]^2, steady gradient soliton"),
    ("sphere_stereo:<d>", "unit sphere, 4|dx|^2/(1+|x|^2)^2 on [-2,2]^d"),
    ("hyperbolic_halfplane", "(dx^2 + dy^2)/y^2 on [-2,2]x[0.25,3]"),
    ("torus_flat:<d>", "flat torus [0,2pi)^d, periodic"),
];
