mod analyze;
mod pipeline;
mod quantize;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub use analyze::{bound_check, cost, diagnose, BoundCheckArgs, CostArgs, DiagnoseArgs};
pub use pipeline::{eval, extract, prepare, train, EvalArgs, ExtractArgs, PrepareArgs, TrainArgs};
pub use quantize::{quantize, QuantizeArgs};

/// Writes `text` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
