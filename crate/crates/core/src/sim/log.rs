//! Per-tick log records, CSV persistence and run metrics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frozen column order of the tick log.
pub const COLUMNS: [&str; 21] = [
    "t",
    "d",
    "d_est",
    "d_ref",
    "v",
    "v_ref",
    "v_dist",
    "v_dwa",
    "omega_dwa",
    "v_vi_est",
    "v_vi_true",
    "omega_ref",
    "fsm_code",
    "fsm_state",
    "clearance",
    "tether_stretch",
    "track_id",
    "selected_ped",
    "n_peds_tracked",
    "collisions",
    "s",
];

/// One control tick. `d` is the true user distance along the robot heading;
/// `d_est` is what perception reported. Missing values are NaN or -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub t: f64,
    pub d: f64,
    pub d_est: f64,
    pub d_ref: f64,
    pub v: f64,
    pub v_ref: f64,
    pub v_dist: f64,
    pub v_dwa: f64,
    pub omega_dwa: f64,
    pub v_vi_est: f64,
    pub v_vi_true: f64,
    pub omega_ref: f64,
    pub fsm_code: u8,
    pub fsm_state: String,
    pub clearance: f64,
    pub tether_stretch: f64,
    pub track_id: i64,
    pub selected_ped: i64,
    pub n_peds_tracked: u32,
    pub collisions: u32,
    pub s: f64,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log header does not match the schema: expected {expected:?}, found {found:?}")]
    Schema { expected: String, found: String },
    #[error("log row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("log has no rows")]
    Empty,
    #[error("log time is not increasing at row {0}")]
    NonMonotone(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn write_csv<W: Write>(w: W, rows: &[TickLog]) -> Result<(), LogError> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(COLUMNS)?;
    }
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads and validates a log: exact header, complete rows, increasing time.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<TickLog>, LogError> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(LogError::Schema {
            expected: COLUMNS.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows: Vec<TickLog> = Vec::new();
    for (k, rec) in rd.deserialize().enumerate() {
        let row: TickLog = rec.map_err(|e| LogError::Row {
            row: k + 1,
            msg: e.to_string(),
        })?;
        if rows.last().is_some_and(|p| !(row.t > p.t)) {
            return Err(LogError::NonMonotone(k + 1));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LogError::Empty);
    }
    Ok(rows)
}

/// Band around the reference used for settling [m].
pub const SETTLING_BAND: f64 = 0.10;
/// Window at the end of a segment averaged for the steady-state error [s].
pub const STEADY_WINDOW: f64 = 5.0;
pub const SPEED_CAP: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub t_step: f64,
    pub d_ref: f64,
    /// Time from the step until `d` stays inside the band; `None` if it never does.
    pub settling_time: Option<f64>,
    pub steady_state_error: f64,
    /// Largest excursion past the new reference in the step direction.
    pub overshoot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub duration: f64,
    pub steps: Vec<StepMetrics>,
    pub max_settling_time: Option<f64>,
    pub max_steady_state_error: f64,
    pub max_overshoot: f64,
    /// Over ticks where the true distance is defined.
    pub max_abs_error: f64,
    pub collisions: u32,
    pub cap_fraction: f64,
    pub track_switches: u32,
    /// Ticks on which the selected track belonged to someone other than the user.
    pub wrong_selection_ticks: u32,
    pub final_s: f64,
}

fn segment_metrics(rows: &[TickLog], prev_ref: f64) -> StepMetrics {
    let t_step = rows[0].t;
    let d_ref = rows[0].d_ref;
    let err = |r: &TickLog| r.d - r.d_ref;
    let last_bad = rows.iter().rposition(|r| !(err(r).abs() <= SETTLING_BAND));
    let settling_time = match last_bad {
        None => Some(0.0),
        Some(k) if k + 1 < rows.len() => Some(rows[k + 1].t - t_step),
        Some(_) => None,
    };
    let t_end = rows[rows.len() - 1].t;
    let tail: Vec<f64> = rows
        .iter()
        .filter(|r| r.t >= t_end - STEADY_WINDOW + 1e-9)
        .map(err)
        .collect();
    // Offset of the tail mean; jitter around the reference is not an offset.
    let steady_state_error = (tail.iter().sum::<f64>() / tail.len() as f64).abs();
    let dir = (d_ref - prev_ref).signum();
    let overshoot = rows
        .iter()
        .map(|r| dir * err(r))
        .filter(|e| e.is_finite())
        .fold(0.0, f64::max);
    StepMetrics {
        t_step,
        d_ref,
        settling_time,
        steady_state_error,
        overshoot,
    }
}

/// Metrics from the log alone, so replays reproduce them.
pub fn compute_metrics(rows: &[TickLog]) -> Metrics {
    let mut steps = Vec::new();
    let mut start = 0;
    for k in 1..=rows.len() {
        if k == rows.len() || rows[k].d_ref != rows[k - 1].d_ref {
            if start > 0 {
                steps.push(segment_metrics(&rows[start..k], rows[start - 1].d_ref));
            }
            start = k;
        }
    }
    let max_settling_time = steps
        .iter()
        .map(|s| s.settling_time)
        .try_fold(0.0f64, |acc, s| s.map(|v| acc.max(v)));
    let duration = rows.last().map_or(0.0, |r| r.t) - rows.first().map_or(0.0, |r| r.t);
    let n = rows.len().max(1) as f64;
    Metrics {
        duration,
        max_steady_state_error: steps.iter().map(|s| s.steady_state_error).fold(0.0, f64::max),
        max_overshoot: steps.iter().map(|s| s.overshoot).fold(0.0, f64::max),
        max_settling_time,
        steps,
        max_abs_error: rows
            .iter()
            .map(|r| (r.d - r.d_ref).abs())
            .filter(|e| e.is_finite())
            .fold(0.0, f64::max),
        collisions: rows.last().map_or(0, |r| r.collisions),
        cap_fraction: rows.iter().filter(|r| r.v >= SPEED_CAP - 1e-3).count() as f64 / n,
        track_switches: rows
            .windows(2)
            .filter(|w| w[0].track_id >= 0 && w[1].track_id >= 0 && w[0].track_id != w[1].track_id)
            .count() as u32,
        wrong_selection_ticks: rows.iter().filter(|r| r.selected_ped > 0).count() as u32,
        final_s: rows.last().map_or(0.0, |r| r.s),
    }
}
