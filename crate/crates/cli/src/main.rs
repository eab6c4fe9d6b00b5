use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harmap_cli::manifest::TaskKind;
use harmap_cli::{emit_reports, parse_manifest, run_all, run_task, Format, Payload, RunOptions};

#[derive(Parser)]
#[command(name = "harmap", version, about = "Riemannian geometry checks for harmonic maps, solitons and conformal fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks of a manifest and report pass/fail.
    Verify {
        manifest: PathBuf,
        /// Run only the task with this name.
        #[arg(long)]
        task: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Directory for report files; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override every seed in the manifest.
        #[arg(long)]
        seed: Option<u64>,
        /// Override every task tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Inspect the built-in manifolds.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Run one flow task and write its trace as csv.
    Flow {
        manifest: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        trace: PathBuf,
        /// Also dump the final grid state here.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Catalog { action: CatalogAction::List } => {
            for (name, about) in harmap_cli::CATALOG_DESCRIPTIONS {
                println!("{name:<22} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Verify {
            manifest,
            task,
            format,
            out,
            seed,
            tol,
        } => {
            let m = match parse_manifest(&manifest) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(t) = &task {
                if m.task(t).is_none() {
                    eprintln!("error: no task named '{t}'");
                    return ExitCode::from(2);
                }
            }
            let reports = run_all(&m, task.as_deref(), RunOptions { seed, tolerance: tol });
            if let Err(e) = emit_reports(&reports, format, out.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.task.as_str()).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} failed: {}", failed.len(), failed.join(", "));
                ExitCode::from(1)
            }
        }
        Command::Flow {
            manifest,
            task,
            trace,
            state,
            seed,
        } => {
            let m = match parse_manifest(&manifest) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let Some(spec) = m.task(&task) else {
                eprintln!("error: no task named '{task}'");
                return ExitCode::from(2);
            };
            if !matches!(spec.kind, TaskKind::Flow { .. }) {
                eprintln!("error: task '{task}' is not a flow task");
                return ExitCode::from(2);
            }
            let report = run_task(&m, spec, RunOptions { seed, tolerance: None });
            if let Payload::Flow(t) = &report.result {
                let write = std::fs::write(&trace, t.to_csv()).and_then(|_| match (&state, &t.final_state) {
                    (Some(path), Some(s)) => std::fs::write(path, s.to_text()),
                    _ => Ok(()),
                });
                if let Err(e) = write {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            println!("{}: {}", report.task, report.verdict);
            if let Some(e) = &report.error {
                eprintln!("error: {e}");
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
