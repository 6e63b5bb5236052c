//! Mesh, switching-cost and control refinement studies.

use std::time::Duration;

use serde::Serialize;

use crate::error::Result;
use crate::exec::{self, ExecMode};
use crate::model::{discretize_controls, ControlGrid, ProblemSpec};
use crate::solver::{solve, SchemeParams, SolveResult};

/// Successive differences `v[k] - v[k-1]` and ratios `d[k-1] / d[k]`.
///
/// Both vectors have the length of `values`; undefined entries are NaN.
pub fn successive_ratios(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let mut inc = vec![f64::NAN; n];
    let mut ratio = vec![f64::NAN; n];
    for k in 1..n {
        inc[k] = values[k] - values[k - 1];
    }
    for k in 2..n {
        if inc[k] != 0.0 && inc[k].is_finite() && inc[k - 1].is_finite() {
            ratio[k] = inc[k - 1] / inc[k];
        }
    }
    (inc, ratio)
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshStudyRow {
    pub cost: f64,
    pub h: f64,
    pub value: f64,
    /// `U_h - U_{h_prev}` with the previous (coarser) mesh of the same cost.
    pub increment: f64,
    /// Previous increment over this one.
    pub ratio: f64,
    /// `U_c - U_{c_prev}` with the previous cost at the same mesh size.
    pub cost_difference: f64,
    /// Previous cost difference over this one.
    pub cost_ratio: f64,
    pub picard_mean: f64,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

/// Solves every `(cost, h)` cell. Within one cost the rows follow the order of
/// `hs` (coarse to fine); differences across costs are taken at equal `h` in
/// the order of `costs`. A failed cell is reported in its row and leaves a
/// NaN value; the other cells still run.
pub fn convergence_study<F>(
    spec: &ProblemSpec,
    controls: &ControlGrid,
    hs: &[f64],
    costs: &[f64],
    scheme: F,
    mode: ExecMode,
) -> Vec<MeshStudyRow>
where
    F: Fn(f64, f64) -> SchemeParams + Sync + Send,
{
    let cells: Vec<(f64, f64)> = costs
        .iter()
        .flat_map(|&c| hs.iter().map(move |&h| (c, h)))
        .collect();
    let results: Vec<Result<SolveResult>> = exec::map_indices(mode, cells.len(), |k| {
        solve(spec, controls, &scheme(cells[k].1, cells[k].0))
    });
    let mut rows: Vec<MeshStudyRow> = cells
        .iter()
        .zip(results)
        .map(|(&(cost, h), r)| match r {
            Ok(res) => MeshStudyRow {
                cost,
                h,
                value: res.reported_value().unwrap_or(f64::NAN),
                increment: f64::NAN,
                ratio: f64::NAN,
                cost_difference: f64::NAN,
                cost_ratio: f64::NAN,
                picard_mean: res.stats.picard_mean,
                wall_time_s: res.stats.wall_time.as_secs_f64(),
                error: None,
            },
            Err(e) => MeshStudyRow {
                cost,
                h,
                value: f64::NAN,
                increment: f64::NAN,
                ratio: f64::NAN,
                cost_difference: f64::NAN,
                cost_ratio: f64::NAN,
                picard_mean: f64::NAN,
                wall_time_s: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect();
    for chunk in rows.chunks_mut(hs.len().max(1)) {
        let values: Vec<f64> = chunk.iter().map(|r| r.value).collect();
        let (inc, ratio) = successive_ratios(&values);
        for (row, (i, q)) in chunk.iter_mut().zip(inc.into_iter().zip(ratio)) {
            row.increment = i;
            row.ratio = q;
        }
    }
    let stride = hs.len();
    for k in 0..stride {
        let values: Vec<f64> = rows
            .iter()
            .skip(k)
            .step_by(stride.max(1))
            .map(|r| r.value)
            .collect();
        let (diff, ratio) = successive_ratios(&values);
        for (c, (d, q)) in diff.into_iter().zip(ratio).enumerate() {
            rows[c * stride + k].cost_difference = d;
            rows[c * stride + k].cost_ratio = q;
        }
    }
    rows
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlStudyRow {
    pub controls: usize,
    pub value: f64,
    /// `|U_J(T, x₀) - U_{J_max}(T, x₀)|` for the last component.
    pub point_difference: f64,
    /// Mean over nodes of `|U_J - U_{J_max}|` for the last component at `T`.
    pub average_difference: f64,
    pub wall_parallel_s: f64,
    pub wall_serial_s: Option<f64>,
    pub speedup: Option<f64>,
}

/// Solves for each control count in `counts` with component parallelism and,
/// if `timing` is set, once more with serial components.
pub fn control_study(
    spec: &ProblemSpec,
    counts: &[usize],
    scheme: &SchemeParams,
    timing: bool,
) -> Result<Vec<ControlStudyRow>> {
    let finest = counts.iter().copied().max().unwrap_or(0);
    let mut solved: Vec<(usize, SolveResult, Option<Duration>)> = Vec::with_capacity(counts.len());
    for &j in counts {
        let controls = discretize_controls(spec.control_interval, j)?;
        let par = SchemeParams {
            parallel_components: true,
            ..scheme.clone()
        };
        let res = solve(spec, &controls, &par)?;
        let serial = if timing {
            let ser = SchemeParams {
                parallel_components: false,
                ..scheme.clone()
            };
            Some(solve(spec, &controls, &ser)?.stats.wall_time)
        } else {
            None
        };
        solved.push((j, res, serial));
    }
    let reference = solved
        .iter()
        .find(|(j, _, _)| *j == finest)
        .map(|(_, r, _)| r.values.last().cloned().unwrap_or_default())
        .unwrap_or_default();
    let ref_value = solved
        .iter()
        .find(|(j, _, _)| *j == finest)
        .and_then(|(_, r, _)| r.reported_value())
        .unwrap_or(f64::NAN);
    Ok(solved
        .into_iter()
        .map(|(j, res, serial)| {
            let last = res.values.last().cloned().unwrap_or_default();
            let avg = last
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / last.len().max(1) as f64;
            let value = res.reported_value().unwrap_or(f64::NAN);
            let par_s = res.stats.wall_time.as_secs_f64();
            let ser_s = serial.map(|d| d.as_secs_f64());
            ControlStudyRow {
                controls: j,
                value,
                point_difference: (value - ref_value).abs(),
                average_difference: avg,
                wall_parallel_s: par_s,
                wall_serial_s: ser_s,
                speedup: ser_s.map(|s| s / par_s),
            }
        })
        .collect())
}
