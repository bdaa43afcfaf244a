//! CSV emission for trajectories and branch tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bifurcation::BranchTable;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::model::{force_of_infection, total_population, ModelParams};

pub const TRAJECTORY_HEADER: &str = "t,Q,S,L,I,R,T,N,lambda";
pub const BRANCH_HEADER: &str = "psi,root_Q,root_S,root_L,root_I,root_R,root_T,spectral_abscissa,stable_flag,converged_flag";

/// 17 significant digits.
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").unwrap();
}

fn row(out: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        num(out, *v);
    }
}

pub fn trajectory_csv(traj: &Trajectory, params: &ModelParams) -> Result<String> {
    if traj.is_empty() {
        return Err(Error::Domain("trajectory is empty".into()));
    }
    let mut out = String::with_capacity(200 * (traj.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let a = s.to_array();
        row(&mut out, &[*t, a[0], a[1], a[2], a[3], a[4], a[5], total_population(s), force_of_infection(s, params)]);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_trajectory_csv(traj: &Trajectory, params: &ModelParams, path: &Path) -> Result<()> {
    let text = trajectory_csv(traj, params)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row per root per grid point; flags are 0/1.
pub fn branch_csv(table: &BranchTable) -> String {
    let mut out = String::from(BRANCH_HEADER);
    out.push('\n');
    for point in &table.points {
        for root in &point.roots {
            let mut values = vec![point.psi];
            values.extend(root.state.to_array());
            values.push(root.spectral_abscissa);
            row(&mut out, &values);
            writeln!(out, ",{},{}", u8::from(root.stable), u8::from(root.converged)).unwrap();
        }
    }
    out
}

pub fn write_branch_csv(table: &BranchTable, path: &Path) -> Result<()> {
    fs::write(path, branch_csv(table)).map_err(|e| Error::io(path, e))
}

/// Generic numeric CSV with a caller-supplied header.
pub fn columns_csv(header: &[&str], columns: &[Vec<f64>]) -> Result<String> {
    if header.len() != columns.len() {
        return Err(Error::Domain(format!("{} headers for {} columns", header.len(), columns.len())));
    }
    let rows = columns.first().map_or(0, Vec::len);
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Domain("columns differ in length".into()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..rows {
        let values: Vec<f64> = columns.iter().map(|c| c[r]).collect();
        row(&mut out, &values);
        out.push('\n');
    }
    Ok(out)
}
