//! Aligns the gradient-norm columns of several runs into one CSV so their
//! decay curves can be overlaid. Values are copied verbatim from the source
//! files, so comparing preserves the original round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

struct RunColumn {
    label: String,
    objective: Option<String>,
    steps: Vec<String>,
    grad_l2: Vec<String>,
}

fn sanitize_label(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "run".to_string()
    } else {
        cleaned
    }
}

fn dir_label(dir: &Path) -> String {
    let base = dir
        .components()
        .next_back()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    sanitize_label(&base)
}

fn read_objective(dir: &Path) -> Option<String> {
    let bytes = fs::read(dir.join("summary.json")).ok()?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).ok()?;
    value.get("objective")?.as_str().map(str::to_string)
}

fn read_run(dir: &Path) -> Result<RunColumn, CliError> {
    let csv_path = dir.join("trajectory.csv");
    if !csv_path.exists() {
        let has_seed_dirs = fs::read_dir(dir)
            .ok()
            .map(|entries| {
                entries
                    .flatten()
                    .any(|e| e.file_name().to_string_lossy().starts_with("seed-"))
            })
            .unwrap_or(false);
        let hint = if has_seed_dirs {
            "; this is a multi-seed run, point at one of its seed-<s> subdirectories"
        } else {
            ""
        };
        return Err(CliError::runtime(format!(
            "{}: no trajectory.csv{hint}",
            dir.display()
        )));
    }
    let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| {
        CliError::runtime(format!("{}: {e}", csv_path.display()))
    })?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::runtime(format!("{}: {e}", csv_path.display())))?;
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::runtime(format!(
                "{}: missing `{name}` column",
                csv_path.display()
            ))
        })
    };
    let step_idx = find("step")?;
    let grad_idx = find("grad_l2")?;

    let mut steps = Vec::new();
    let mut grad_l2 = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CliError::runtime(format!("{}: {e}", csv_path.display())))?;
        steps.push(row.get(step_idx).unwrap_or("").to_string());
        grad_l2.push(row.get(grad_idx).unwrap_or("").to_string());
    }
    Ok(RunColumn {
        label: dir_label(dir),
        objective: read_objective(dir),
        steps,
        grad_l2,
    })
}

fn dedupe_labels(runs: &mut [RunColumn]) {
    for i in 0..runs.len() {
        let mut copy = 1usize;
        for j in (i + 1)..runs.len() {
            if runs[j].label == runs[i].label {
                copy += 1;
                runs[j].label = format!("{}_{copy}", runs[j].label);
            }
        }
    }
}

/// Merges each directory's trajectory into `out`: one `step` column plus one
/// `<label>_grad_l2` column per run, truncated to the shortest run.
pub fn compare_dirs(dirs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    if dirs.is_empty() {
        return Err(CliError::runtime("compare needs at least one run directory"));
    }
    let mut runs = dirs
        .iter()
        .map(|d| read_run(d))
        .collect::<Result<Vec<_>, _>>()?;
    dedupe_labels(&mut runs);

    let common = runs.iter().map(|r| r.steps.len()).min().unwrap_or(0);
    if common == 0 {
        return Err(CliError::runtime("no common steps across the given runs"));
    }

    let mut text = String::new();
    let known: Vec<(&str, &str)> = runs
        .iter()
        .filter_map(|r| r.objective.as_deref().map(|o| (r.label.as_str(), o)))
        .collect();
    let mismatched = known.windows(2).any(|w| w[0].1 != w[1].1);
    if mismatched {
        text.push_str("# objective mismatch: ");
        for (i, (label, obj)) in known.iter().enumerate() {
            if i > 0 {
                text.push_str(", ");
            }
            text.push_str(&format!("{label}={obj}"));
        }
        text.push('\n');
    }

    text.push_str("step");
    for run in &runs {
        text.push_str(&format!(",{}_grad_l2", run.label));
    }
    text.push('\n');
    for row in 0..common {
        text.push_str(&runs[0].steps[row]);
        for run in &runs {
            text.push(',');
            text.push_str(&run.grad_l2[row]);
        }
        text.push('\n');
    }

    fs::write(out, text).map_err(|e| CliError::io(out, e))
}
