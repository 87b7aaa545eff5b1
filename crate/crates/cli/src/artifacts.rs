//! Artifact writers. Every file is deterministic: UTF-8, LF line endings,
//! shortest round-trip decimal formatting for doubles, and no timestamps or
//! other environment-dependent content.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use hetero_opt_core::optim::TrajectoryRecord;

use crate::error::CliError;

/// One T_ε measurement row.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityRow {
    pub epsilon: f64,
    pub q: u32,
    pub threshold: f64,
    pub mode: String,
    pub reached: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    pub budget: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseRow {
    pub batch_size: usize,
    pub sigma2: f64,
    pub sigma3: f64,
    pub excluded_coordinates: usize,
    pub draws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianRow {
    pub n: usize,
    pub d: usize,
    /// Absent for single-channel rows, where layer normalization is undefined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_norm_rel_err: Option<f64>,
    pub rms_norm_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianSection {
    pub tolerance: f64,
    pub worst_rel_err: f64,
    pub pass: bool,
    pub shapes: Vec<JacobianRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttentionSection {
    pub n: usize,
    pub trials: usize,
    pub violations: usize,
    pub max_frobenius_excess: f64,
    pub min_query_term: f64,
    pub filtered_out: usize,
    pub onehot_u_q: f64,
    pub onehot_p_frobenius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearHeadSection {
    pub eta: f64,
    pub frozen_delta_b: Vec<f64>,
    pub full_batch_delta_b: Vec<f64>,
    pub sequential_delta_b: Vec<f64>,
    pub closed_form_delta_b: Vec<f64>,
    pub max_abs_diff_frozen_vs_closed: f64,
}

/// Scalar results of one seeded run. Fields are populated per experiment;
/// absent ones are omitted from the JSON.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged: Option<bool>,
    #[serde(rename = "lambda_P", skip_serializing_if = "Option::is_none")]
    pub lambda_p: Option<f64>,
    #[serde(rename = "lambda_G", skip_serializing_if = "Option::is_none")]
    pub lambda_g: Option<f64>,
    #[serde(rename = "lambda_G_sup", skip_serializing_if = "Option::is_none")]
    pub lambda_g_sup: Option<f64>,
    #[serde(rename = "delta_D", skip_serializing_if = "Option::is_none")]
    pub delta_d: Option<f64>,
    #[serde(rename = "rho_H", skip_serializing_if = "Option::is_none")]
    pub rho_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gini: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_block_norms: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_grad_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(rename = "T_eps")]
    pub t_eps: Option<Vec<ComplexityRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<NoiseRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<JacobianSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_head: Option<LinearHeadSection>,
}

impl Summary {
    pub fn new(experiment: &str) -> Self {
        Summary {
            experiment: experiment.to_string(),
            ..Summary::default()
        }
    }
}

/// Run provenance: enough to re-execute the exact same run, nothing more.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serializing {}: {e}", path.display())))?;
    body.push('\n');
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}

/// Writes the per-step log. Columns: the fixed scalar columns, then one
/// `block:<name>_l2` column per block. The last row is the final visited
/// point; no step was taken there, so its `lr` field is empty.
pub fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord) -> Result<(), CliError> {
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut header = String::from("step,loss,grad_l1,grad_l2,grad_linf,lr");
    for name in &record.block_names {
        let safe: String = name
            .chars()
            .map(|c| if c == ',' || c == '"' || c == '\n' { '_' } else { c })
            .collect();
        header.push_str(&format!(",block:{safe}_l2"));
    }
    header.push('\n');
    file.write_all(header.as_bytes())
        .map_err(|e| CliError::io(path, e))?;

    let mut row = String::new();
    for s in &record.steps {
        row.clear();
        row.push_str(&format!(
            "{},{},{},{},{},{}",
            s.step, s.loss, s.grad_l1, s.grad_l2, s.grad_linf, s.lr
        ));
        for b in &s.block_l2 {
            row.push_str(&format!(",{b}"));
        }
        row.push('\n');
        file.write_all(row.as_bytes())
            .map_err(|e| CliError::io(path, e))?;
    }
    if let Some(f) = &record.final_point {
        row.clear();
        row.push_str(&format!(
            "{},{},{},{},{},",
            record.steps.len(),
            f.loss,
            f.grad_l1,
            f.grad_l2,
            f.grad_linf
        ));
        for b in &f.block_l2 {
            row.push_str(&format!(",{b}"));
        }
        row.push('\n');
        file.write_all(row.as_bytes())
            .map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hetero_opt_core::optim::{FinalPoint, StepLog};

    #[test]
    fn trajectory_csv_layout() {
        let record = TrajectoryRecord {
            block_names: vec!["V".into(), "odd,name".into()],
            steps: vec![StepLog {
                step: 0,
                loss: 1.5,
                grad_l1: 3.0,
                grad_l2: 2.0,
                grad_linf: 1.0,
                block_l2: vec![1.25, 0.5],
                lr: 0.1,
            }],
            final_point: Some(FinalPoint {
                loss: 0.75,
                grad_l1: 1.5,
                grad_l2: 1.0,
                grad_linf: 0.5,
                block_l2: vec![0.625, 0.25],
            }),
            final_theta: None,
            diverged: false,
            steps_requested: 1,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &record).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "step,loss,grad_l1,grad_l2,grad_linf,lr,block:V_l2,block:odd_name_l2\n\
             0,1.5,3,2,1,0.1,1.25,0.5\n\
             1,0.75,1.5,1,0.5,,0.625,0.25\n"
        );
    }

    #[test]
    fn summary_omits_absent_sections() {
        let mut summary = Summary::new("quadratic");
        summary.lambda_p = Some(4999.0);
        let json = serde_json::to_string(&summary).unwrap();
        assert!(json.contains("\"lambda_P\":4999.0"));
        assert!(!json.contains("rho_H"));
        assert!(!json.contains("noise"));
    }
}
