//! Ablation matrices: one configuration per row, every row run over the
//! same seeds, one summary line per row.

use std::path::PathBuf;

use awopt_core::agent::{Variant, DEFAULT_P_CRITIC};
use awopt_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::commands::{execute, read_run, resolve_train, run_row, write_csv, TrainOptions};
use crate::manifest::{create_dir, output_root};

/// Critic/actor episode splits of the switcher comparison, as critic share.
pub const SPLITS: [(&str, f64); 6] = [
    ("20/80", 0.2),
    ("50/50", 0.5),
    ("60/40", 0.6),
    ("70/30", 0.7),
    ("80/20", 0.8),
    ("90/10", 0.9),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    /// Preset replacing the base algorithm, if any.
    pub algorithm: Option<String>,
    pub overrides: Vec<String>,
}

impl Row {
    fn flip(name: &str, overrides: &[String]) -> Self {
        Self {
            name: name.to_owned(),
            algorithm: None,
            overrides: overrides.to_vec(),
        }
    }
}

/// Rows of a built-in matrix, or of a comma-separated preset list.
pub fn rows(kind: &str) -> Result<Vec<Row>> {
    let rows: Vec<Row> = match kind {
        "exploration" => vec![
            Row::flip("actor_only", &["exploration={ kind = \"actor_only\" }".into()]),
            Row::flip("critic_only", &["exploration={ kind = \"critic_only\" }".into()]),
            Row::flip(
                "episode_switch",
                &[format!("exploration={{ kind = \"episode_switch\", p_critic = {DEFAULT_P_CRITIC} }}")],
            ),
            Row::flip(
                "step_switch",
                &[format!("exploration={{ kind = \"step_switch\", p_critic = {DEFAULT_P_CRITIC} }}")],
            ),
        ],
        "targets" => ["awac_expectation", "max_q", "max_q_actor_mean", "max_q_actor_candidate"]
            .iter()
            .map(|t| Row::flip(t, &[format!("target_strategy={t}")]))
            .collect(),
        "splits" => SPLITS
            .iter()
            .map(|(name, p)| Row::flip(name, &[format!("exploration={{ kind = \"episode_switch\", p_critic = {p} }}")]))
            .collect(),
        "variants" => Variant::ALL.iter().map(|v| preset_row(v.name())).collect(),
        list => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| Variant::from_name(name).map(|v| preset_row(v.name())))
            .collect::<Result<_>>()?,
    };
    if rows.is_empty() {
        return Err(Error::Usage("the matrix has no rows".into()));
    }
    Ok(rows)
}

fn preset_row(name: &str) -> Row {
    Row {
        name: name.to_owned(),
        algorithm: Some(name.to_owned()),
        overrides: Vec::new(),
    }
}

/// One summary line; `error` is set when any seed of the row failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub variant: String,
    pub seeds: usize,
    pub post_il_success: Option<f64>,
    pub final_success: Option<f64>,
    pub final_success_min: Option<f64>,
    pub final_success_max: Option<f64>,
    pub transitions_to_threshold: Option<f64>,
    pub action_select_ms: Option<f64>,
    pub error: Option<String>,
}

pub struct MatrixOutcome {
    pub rows: Vec<MatrixRow>,
    pub summary_path: PathBuf,
}

impl MatrixOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Runs each row on top of `base`. Row failures are recorded, not raised.
pub fn run_matrix(
    kind: &str,
    base: &TrainOptions,
    threshold: f64,
    log: &mut dyn FnMut(&str),
) -> Result<MatrixOutcome> {
    let rows = rows(kind)?;
    let label = if matches!(kind, "exploration" | "targets" | "splits" | "variants") {
        kind.to_owned()
    } else {
        "custom".to_owned()
    };
    let dir = output_root(base.out.as_deref()).join(format!("matrix_{label}"));
    create_dir(&dir)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut opts = base.clone();
        if row.algorithm.is_some() {
            opts.algorithm = row.algorithm.clone();
        }
        opts.overrides.extend(row.overrides.iter().cloned());
        let run_dir = dir.join(sanitize(&row.name));
        let result = resolve_train(&opts).and_then(|resolved| {
            execute(&resolved, &run_dir, false, log)?;
            read_run(&run_dir)
        });
        out.push(match result {
            Ok((_, per_seed)) => {
                let r = run_row(&row.name, &row.name, &per_seed, threshold);
                MatrixRow {
                    variant: row.name.clone(),
                    seeds: r.seeds,
                    post_il_success: Some(r.post_il_success),
                    final_success: Some(r.final_success),
                    final_success_min: Some(r.final_success_min),
                    final_success_max: Some(r.final_success_max),
                    transitions_to_threshold: r.transitions_to_threshold,
                    action_select_ms: r.action_select_ms,
                    error: None,
                }
            }
            Err(e) => {
                log(&format!("{}: failed: {e}", row.name));
                MatrixRow {
                    variant: row.name.clone(),
                    seeds: 0,
                    post_il_success: None,
                    final_success: None,
                    final_success_min: None,
                    final_success_max: None,
                    transitions_to_threshold: None,
                    action_select_ms: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    let summary_path = dir.join("summary.csv");
    write_csv(&summary_path, &out)?;
    Ok(MatrixOutcome {
        rows: out,
        summary_path,
    })
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}
