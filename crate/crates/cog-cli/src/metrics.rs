//! The training metrics stream.
//!
//! One CSV per training run with the fixed column set
//! `step, q1_loss, q2_loss, policy_loss, cql_penalty, mean_q_data,
//! temperature, eval_condition, eval_success_rate`. Loss rows leave the
//! two eval columns empty; evaluation snapshot rows leave the loss columns
//! empty. Rows are merged by step, losses first.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cog_core::algo::MetricRow;

/// A success-rate measurement taken at a training snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub condition: String,
    pub success_rate: f64,
}

/// One CSV record; exactly the documented columns.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CsvRow {
    pub step: u64,
    pub q1_loss: Option<f64>,
    pub q2_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub cql_penalty: Option<f64>,
    pub mean_q_data: Option<f64>,
    pub temperature: Option<f64>,
    pub eval_condition: Option<String>,
    pub eval_success_rate: Option<f64>,
}

impl CsvRow {
    fn from_loss(m: &MetricRow) -> Self {
        CsvRow {
            step: m.step,
            q1_loss: Some(m.q1_loss),
            q2_loss: Some(m.q2_loss),
            policy_loss: Some(m.policy_loss),
            cql_penalty: Some(m.cql_penalty),
            mean_q_data: Some(m.mean_q_data),
            temperature: Some(m.temperature),
            eval_condition: None,
            eval_success_rate: None,
        }
    }

    fn from_eval(e: &EvalPoint) -> Self {
        CsvRow {
            step: e.step,
            q1_loss: None,
            q2_loss: None,
            policy_loss: None,
            cql_penalty: None,
            mean_q_data: None,
            temperature: None,
            eval_condition: Some(e.condition.clone()),
            eval_success_rate: Some(e.success_rate),
        }
    }
}

/// Merges loss and eval rows into one stream ordered by step (loss rows
/// before eval rows at the same step; ties otherwise keep input order).
pub fn merged_rows(losses: &[MetricRow], evals: &[EvalPoint]) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = Vec::with_capacity(losses.len() + evals.len());
    rows.extend(losses.iter().map(CsvRow::from_loss));
    rows.extend(evals.iter().map(CsvRow::from_eval));
    rows.sort_by_key(|r| (r.step, r.eval_condition.is_some()));
    rows
}

pub fn write(path: &Path, losses: &[MetricRow], evals: &[EvalPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for row in merged_rows(losses, evals) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: CsvRow = rec.with_context(|| {
            format!("{}: malformed metrics row {}", path.display(), i + 1)
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// The eval rows of a metrics file, in file order.
pub fn eval_points(rows: &[CsvRow]) -> Vec<EvalPoint> {
    rows.iter()
        .filter_map(|r| {
            Some(EvalPoint {
                step: r.step,
                condition: r.eval_condition.clone()?,
                success_rate: r.eval_success_rate?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss_row(step: u64) -> MetricRow {
        MetricRow {
            step,
            q1_loss: 0.5,
            q2_loss: 0.25,
            policy_loss: -1.5,
            cql_penalty: 2.0,
            mean_q_data: 3.5,
            temperature: 1.0,
            bc_phase: false,
        }
    }

    #[test]
    fn header_is_exactly_the_documented_column_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write(&path, &[loss_row(10)], &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "step,q1_loss,q2_loss,policy_loss,cql_penalty,mean_q_data,temperature,eval_condition,eval_success_rate"
        );
    }

    #[test]
    fn loss_and_eval_rows_interleave_by_step() {
        let evals = vec![
            EvalPoint { step: 10, condition: "open_drawer".into(), success_rate: 0.5 },
            EvalPoint { step: 20, condition: "open_drawer".into(), success_rate: 0.75 },
        ];
        let rows = merged_rows(&[loss_row(10), loss_row(20)], &evals);
        let kinds: Vec<(u64, bool)> =
            rows.iter().map(|r| (r.step, r.eval_condition.is_some())).collect();
        assert_eq!(kinds, vec![(10, false), (10, true), (20, false), (20, true)]);
    }

    #[test]
    fn round_trip_recovers_rows_and_eval_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let evals = vec![EvalPoint { step: 10, condition: "closed_drawer".into(), success_rate: 0.125 }];
        write(&path, &[loss_row(10)], &evals).unwrap();
        let rows = read(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].q1_loss, Some(0.5));
        assert_eq!(rows[0].eval_condition, None);
        assert_eq!(eval_points(&rows), evals);
    }
}
