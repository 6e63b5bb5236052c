//! CSV and gnuplot artifacts, each written through a temporary file and renamed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hjbvi::study::{ControlStudyRow, MeshStudyRow};
use hjbvi::SolveResult;
use serde::Serialize;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp: PathBuf = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn csv_bytes<S: Serialize>(rows: &[S]) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))
}

fn csv_table(header: &[String], rows: &[Vec<String>]) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(std::io::Error::other)?;
    for r in rows {
        w.write_record(r).map_err(std::io::Error::other)?;
    }
    w.into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))
}

#[derive(Serialize)]
pub struct Summary {
    pub model: String,
    pub h: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub cost: f64,
    pub controls: usize,
    pub horizon: f64,
    pub x0: f64,
    pub value: f64,
    pub picard_total: u64,
    pub picard_mean: f64,
    pub picard_max: usize,
    pub max_contraction_ratio: f64,
    pub contraction_bound: f64,
    pub c_p: f64,
    pub wall_time_s: f64,
}

pub fn write_summary(dir: &Path, s: &Summary) -> std::io::Result<()> {
    write_atomic(
        &dir.join("summary.csv"),
        &csv_bytes(std::slice::from_ref(s))?,
    )
}

/// `t, x, U_1, …, U_J` for every stored snapshot, plus a gnuplot block file of
/// `max_j U_j`.
pub fn write_surface(dir: &Path, res: &SolveResult) -> std::io::Result<()> {
    let j = res.values.len();
    let mut header = vec!["t".to_string(), "x".to_string()];
    header.extend((1..=j).map(|k| format!("U_{k}")));
    let nodes = res.grid.nodes();
    let mut rows = Vec::new();
    let mut dat = String::from("# t x max_j U_j\n");
    for snap in &res.snapshots {
        for (i, &x) in nodes.iter().enumerate() {
            let mut row = vec![snap.t.to_string(), x.to_string()];
            row.extend(snap.values.iter().map(|u| u[i].to_string()));
            rows.push(row);
            let best = snap
                .values
                .iter()
                .map(|u| u[i])
                .fold(f64::NEG_INFINITY, f64::max);
            dat.push_str(&format!("{} {} {}\n", snap.t, x, best));
        }
        dat.push('\n');
    }
    write_atomic(&dir.join("surface.csv"), &csv_table(&header, &rows)?)?;
    write_atomic(&dir.join("surface.dat"), dat.as_bytes())
}

/// Every `every`-th recorded step plus the last, or only the final slice when
/// the policy was not recorded.
pub fn write_policy(dir: &Path, res: &SolveResult, every: usize) -> std::io::Result<()> {
    let header: Vec<String> = ["t", "x", "alpha", "stopped"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let nodes = res.grid.nodes();
    let mut slices: Vec<(f64, Vec<f64>, Vec<bool>)> = Vec::new();
    match &res.policy {
        Some(pol) => {
            let last = pol.times.len().saturating_sub(1);
            for n in (0..pol.times.len()).filter(|&n| n % every == 0 || n == last) {
                slices.push((pol.times[n], pol.alpha[n].clone(), pol.stopped[n].clone()));
            }
        }
        None => {
            let (alpha, stopped) = res.final_policy();
            slices.push((res.grid.horizon(), alpha, stopped));
        }
    }
    let mut rows = Vec::new();
    for (t, alpha, stopped) in &slices {
        for (i, &x) in nodes.iter().enumerate() {
            rows.push(vec![
                t.to_string(),
                x.to_string(),
                alpha[i].to_string(),
                u8::from(stopped[i]).to_string(),
            ]);
        }
    }
    write_atomic(&dir.join("policy.csv"), &csv_table(&header, &rows)?)
}

pub fn write_mesh_study(dir: &Path, rows: &[MeshStudyRow]) -> std::io::Result<String> {
    write_atomic(&dir.join("study.csv"), &csv_bytes(rows)?)?;
    let mut text = format!(
        "{:>12} {:>10} {:>12} {:>13} {:>9} {:>13} {:>9}\n",
        "cost", "h", "value", "increment", "ratio", "cost diff", "ratio"
    );
    for r in rows {
        text.push_str(&format!(
            "{:>12.6e} {:>10.6} {:>12.7} {:>13.5e} {:>9.4} {:>13.5e} {:>9.4}{}\n",
            r.cost,
            r.h,
            r.value,
            r.increment,
            r.ratio,
            r.cost_difference,
            r.cost_ratio,
            r.error
                .as_deref()
                .map(|e| format!("  error: {e}"))
                .unwrap_or_default()
        ));
    }
    write_atomic(&dir.join("study.txt"), text.as_bytes())?;
    Ok(text)
}

pub fn write_control_study(dir: &Path, rows: &[ControlStudyRow]) -> std::io::Result<String> {
    write_atomic(&dir.join("study.csv"), &csv_bytes(rows)?)?;
    let mut text = format!(
        "{:>4} {:>12} {:>12} {:>12} {:>10} {:>10} {:>8}\n",
        "J", "value", "diff@x0", "mean diff", "parallel", "serial", "speedup"
    );
    for r in rows {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        text.push_str(&format!(
            "{:>4} {:>12.9} {:>12.3e} {:>12.3e} {:>10.3} {:>10} {:>8}\n",
            r.controls,
            r.value,
            r.point_difference,
            r.average_difference,
            r.wall_parallel_s,
            opt(r.wall_serial_s),
            opt(r.speedup)
        ));
    }
    write_atomic(&dir.join("study.txt"), text.as_bytes())?;
    Ok(text)
}
