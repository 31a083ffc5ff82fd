//! CSV trajectories and OBJ surface export.

use std::fmt::Write as _;
use std::path::Path;

use crate::elasticity::TetMesh;
use crate::error::{Error, Result};
use crate::opt::SolveReport;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// One row per frame: `frame, <prefix>0, <prefix>1, …`. Values are written
/// in shortest round-trip form so reading them back is exact.
pub fn write_frames(path: &Path, prefix: &str, first_frame: usize, rows: &[Vec<f64>]) -> Result<()> {
    let width = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["frame".to_string()];
    header.extend((0..width).map(|i| format!("{prefix}{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, row) in rows.iter().enumerate() {
        let mut rec = vec![(first_frame + k).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_frames`]; returns the rows without the frame column.
pub fn read_frames(path: &Path) -> Result<Vec<Vec<f64>>> {
    if !path.exists() {
        return Err(Error::Config(format!("file {} does not exist", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let width = r.headers().map_err(|e| csv_err(path, e))?.len();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != width {
            return Err(Error::Config(format!("{}: row {} has {} fields, expected {width}", path.display(), line + 2, rec.len())));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: row {}: {f:?} is not a number", path.display(), line + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-frame solver summary.
pub fn write_reports(path: &Path, reports: &[SolveReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "frame",
        "initial_loss",
        "final_loss",
        "gd_iterations",
        "newton_iterations",
        "gradient_evals",
        "hessian_seconds",
        "final_grad_norm",
        "converged",
        "stalled",
    ])
    .map_err(|e| csv_err(path, e))?;
    for (f, r) in reports.iter().enumerate() {
        w.write_record([
            f.to_string(),
            r.initial_loss().to_string(),
            r.final_loss().to_string(),
            r.gd_iterations.to_string(),
            r.newton_iterations.to_string(),
            r.gradient_evals.to_string(),
            r.hessian_seconds.iter().sum::<f64>().to_string(),
            r.final_grad_norm.to_string(),
            r.converged.to_string(),
            r.stalled.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Loss per iteration, tagged with the solver phase.
pub fn write_convergence(path: &Path, reports: &[SolveReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["frame", "iteration", "phase", "loss", "grad_norm", "step", "tau"])
        .map_err(|e| csv_err(path, e))?;
    for (f, r) in reports.iter().enumerate() {
        for it in &r.history {
            w.write_record([
                f.to_string(),
                it.iteration.to_string(),
                it.phase.name().to_string(),
                it.loss.to_string(),
                it.grad_norm.to_string(),
                it.step.to_string(),
                it.tau.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Surface of the deformed mesh as OBJ text (all vertices, surface faces).
pub fn obj_text(mesh: &TetMesh, x: &[f64]) -> String {
    let mut s = String::new();
    for i in 0..mesh.num_vertices() {
        let _ = writeln!(s, "v {} {} {}", x[3 * i], x[3 * i + 1], x[3 * i + 2]);
    }
    for f in &mesh.surface {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// One `frame_NNNN.obj` per row of `positions`; returns the file count.
pub fn write_obj_sequence(dir: &Path, mesh: &TetMesh, positions: &[Vec<f64>]) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let n = 3 * mesh.num_vertices();
    for (k, x) in positions.iter().enumerate() {
        if x.len() != n {
            return Err(Error::Shape(format!("frame {k} has {} coordinates, mesh needs {n}", x.len())));
        }
        std::fs::write(dir.join(format!("frame_{k:04}.obj")), obj_text(mesh, x))?;
    }
    Ok(positions.len())
}
