//! CSV and JSON exchange formats.
//!
//! * Grid functions: one row per node, columns `x0, .., x{d-1}, value`, nodes
//!   in lattice order (last axis fastest). A sidecar `<file>.meta.json` holds
//!   the lattice axes, model id, lambda and solver tolerances.
//! * Rate tables: columns `i, j, x0, .., x{d-1}, rate` with 0-based states.
//!   The lattice is the product of the distinct coordinates per axis; pairs
//!   that never appear have rate zero, pairs that appear must cover every
//!   node.
//! * Torus coefficients: columns `cell, diffusion, drift`, one row per cell.
//!
//! Floats are written in shortest round-trip form, so equal inputs give
//! byte-identical files.

use crate::doubling::DoublingWitness;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::jump::RateFamily;
use crate::lattice::Lattice;
use crate::resolvent::Trajectory;
use crate::torus::TorusGridOperator;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMeta {
    pub model: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub axes: Vec<Vec<f64>>,
}

pub fn meta_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn coord_headers(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (0..d).map(move |k| format!("{prefix}{k}"))
}

/// Writes the node table and its sidecar. `meta.axes` is overwritten by the
/// function's lattice.
pub fn write_grid_function(path: &Path, f: &GridFunction, meta: &GridMeta) -> Result<()> {
    let d = f.lattice.dim();
    let mut w = writer(path)?;
    let header: Vec<String> = coord_headers("x", d).chain(["value".to_string()]).collect();
    w.write_record(&header)?;
    for (k, v) in f.values.iter().enumerate() {
        let row: Vec<String> = f.lattice.node(k).into_iter().chain([*v]).map(num).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    let meta = GridMeta {
        axes: f.lattice.axes.clone(),
        ..meta.clone()
    };
    let mut out = BufWriter::new(File::create(meta_path(path))?);
    serde_json::to_writer_pretty(&mut out, &meta)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads a grid function back; node coordinates must match the sidecar
/// lattice to 1e-12 relative.
pub fn read_grid_function(path: &Path) -> Result<(GridFunction, GridMeta)> {
    let meta: GridMeta = serde_json::from_reader(File::open(meta_path(path))?)?;
    let lattice = Lattice::new(meta.axes.clone())?;
    let d = lattice.dim();
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.len() != d + 1 {
        return Err(Error::Dimension(format!("expected {} columns", d + 1)));
    }
    let mut values = Vec::with_capacity(lattice.len());
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = parse_row(&rec, k)?;
        if k >= lattice.len() {
            return Err(Error::InvalidInput("more rows than lattice nodes".into()));
        }
        let node = lattice.node(k);
        if node.iter().zip(&row).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs())) {
            return Err(Error::InvalidInput(format!("row {k} does not match lattice node {node:?}")));
        }
        values.push(row[d]);
    }
    Ok((GridFunction::new(lattice, values)?, meta))
}

fn parse_row(rec: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("row {line}: cannot parse {s:?}")))
        })
        .collect()
}

/// Columns `t, x*, v*, running_cost`; the last node has empty velocity and
/// cost cells.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let d = traj.states.first().map_or(0, Vec::len);
    let mut w = writer(path)?;
    let header: Vec<String> = ["t".to_string()]
        .into_iter()
        .chain(coord_headers("x", d))
        .chain(coord_headers("v", d))
        .chain(["running_cost".to_string()])
        .collect();
    w.write_record(&header)?;
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![num(*t)];
        row.extend(x.iter().copied().map(num));
        match (traj.velocities.get(k), traj.running_cost.get(k)) {
            (Some(v), Some(c)) => {
                row.extend(v.iter().copied().map(num));
                row.push(num(*c));
            }
            _ => row.extend(std::iter::repeat_n(String::new(), d + 1)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_witnesses(path: &Path, witnesses: &[DoublingWitness]) -> Result<()> {
    let Some(first) = witnesses.first() else {
        File::create(path)?;
        return Ok(());
    };
    let d = first.x_star.len();
    let m = first.alpha.len();
    let j = first.theta_star.as_slice().len();
    let mut header = vec!["epsilon".to_string()];
    header.extend(coord_headers("alpha", m));
    header.extend(coord_headers("x", d));
    header.extend(coord_headers("y", d));
    header.extend(coord_headers("p1_", d));
    header.extend(coord_headers("p2_", d));
    header.extend(coord_headers("theta", j));
    header.extend(
        [
            "phi",
            "penalty",
            "h_x",
            "h_y",
            "lambda_difference",
            "lambda_y_zero",
            "cost_star",
            "artificial_face",
        ]
        .map(String::from),
    );
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for wt in witnesses {
        let mut row = vec![num(wt.epsilon)];
        for part in [&wt.alpha[..], &wt.x_star, &wt.y_star, &wt.p1, &wt.p2, wt.theta_star.as_slice()] {
            row.extend(part.iter().copied().map(num));
        }
        row.extend(
            [
                wt.phi_value,
                wt.penalty(),
                wt.h_x,
                wt.h_y,
                wt.lambda_difference,
                wt.lambda_y_zero,
                wt.cost_star,
            ]
            .map(num),
        );
        row.push(wt.on_artificial_face.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes flat records (one struct per row) with a header.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the tabulated rate layout described in the module docs.
pub fn read_rate_table(path: &Path) -> Result<RateFamily> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    if cols < 4 {
        return Err(Error::InvalidInput("rate table needs columns i, j, x0.., rate".into()));
    }
    let d = cols - 3;
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let row = parse_row(&rec?, k)?;
        let (i, j) = (row[0], row[1]);
        if i < 0.0 || j < 0.0 || i.fract() != 0.0 || j.fract() != 0.0 {
            return Err(Error::InvalidInput(format!("row {k}: state indices must be nonnegative integers")));
        }
        rows.push((i as usize, j as usize, row[2..2 + d].to_vec(), row[2 + d]));
    }
    let states = rows.iter().map(|(i, j, ..)| i.max(j) + 1).max().unwrap_or(0);
    if states < 2 {
        return Err(Error::InvalidInput("rate table needs at least two states".into()));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let mut c: Vec<f64> = rows.iter().map(|r| r.2[a]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect();
    let lattice = Lattice::new(axes)?;
    let mut values = vec![vec![0.0; lattice.len()]; states * states];
    let mut seen = vec![vec![false; lattice.len()]; states * states];
    for (i, j, x, rate) in &rows {
        let idx: Vec<usize> = x
            .iter()
            .zip(&lattice.axes)
            .map(|(v, axis)| axis.binary_search_by(|a| a.total_cmp(v)).unwrap_or(0))
            .collect();
        let node = lattice.flat_index(&idx);
        let pair = i * states + j;
        if seen[pair][node] {
            return Err(Error::InvalidInput(format!("duplicate rate for ({i}, {j}) at {x:?}")));
        }
        seen[pair][node] = true;
        values[pair][node] = *rate;
    }
    for (pair, s) in seen.iter().enumerate() {
        if s.iter().any(|&v| v) && !s.iter().all(|&v| v) {
            let (i, j) = (pair / states, pair % states);
            return Err(Error::InvalidInput(format!("pair ({i}, {j}) does not cover every lattice node")));
        }
    }
    if values.iter().flatten().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidModel("tabulated rates must be finite and nonnegative".into()));
    }
    Ok(RateFamily::Table { lattice, values })
}

/// Parses `cell, diffusion, drift` rows into a torus operator.
pub fn read_torus_coefficients(path: &Path) -> Result<TorusGridOperator> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let row = parse_row(&rec?, k)?;
        if row.len() != 3 {
            return Err(Error::InvalidInput(format!("row {k}: expected cell, diffusion, drift")));
        }
        rows.push((row[0], row[1], row[2]));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if rows.iter().enumerate().any(|(k, r)| r.0 != k as f64) {
        return Err(Error::InvalidInput("cells must be numbered 0..N-1 exactly once".into()));
    }
    TorusGridOperator::new(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::JumpRateField;

    #[test]
    fn grid_function_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let lat = Lattice::uniform(&[0.0, -1.0], &[1.0, 1.0], &[3, 4]).unwrap();
        let vals: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin() / 3.0).collect();
        let f = GridFunction::new(lat, vals).unwrap();
        let meta = GridMeta {
            model: "test".into(),
            lambda: Some(0.5),
            tolerances: BTreeMap::from([("tol".to_string(), 1e-9)]),
            axes: vec![],
        };
        write_grid_function(&path, &f, &meta).unwrap();
        let (g, m) = read_grid_function(&path).unwrap();
        assert_eq!(f, g);
        assert_eq!(m.lambda, Some(0.5));
        assert_eq!(m.axes, f.lattice.axes);
    }

    #[test]
    fn rate_table_matches_constant_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rates.csv");
        let mut s = String::from("i,j,x0,rate\n");
        for x in [0.0, 0.5, 1.0] {
            s += &format!("0,1,{x},{}\n", 1.0 + x);
            s += &format!("1,0,{x},2\n");
        }
        std::fs::write(&path, s).unwrap();
        let field = JumpRateField::new(read_rate_table(&path).unwrap()).unwrap();
        assert_eq!(field.states(), 2);
        assert!((field.rate(0, 1, &[0.25]) - 1.25).abs() < 1e-12);
        assert!((field.rate(1, 0, &[0.8]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rate_table_rejects_partial_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rates.csv");
        std::fs::write(&path, "i,j,x0,rate\n0,1,0,1\n0,1,1,1\n1,0,0,1\n").unwrap();
        assert!(read_rate_table(&path).is_err());
    }

    #[test]
    fn torus_coefficients_need_contiguous_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("torus.csv");
        let mut s = String::from("cell,diffusion,drift\n");
        for c in 0..8 {
            s += &format!("{c},1,0\n");
        }
        std::fs::write(&path, &s).unwrap();
        assert_eq!(read_torus_coefficients(&path).unwrap().cells(), 8);
        std::fs::write(&path, s.replace("3,1,0\n", "")).unwrap();
        assert!(read_torus_coefficients(&path).is_err());
    }
}
