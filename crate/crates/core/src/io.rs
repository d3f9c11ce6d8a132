//! CSV persistence in long format.
//!
//! | file        | columns                          |
//! |-------------|----------------------------------|
//! | flow        | `node, x0[, x1], mass`           |
//! | occupation  | `slab, x0[, x1], a, mass`        |
//! | terminal    | `x0[, x1], mass`                 |
//! | psi / value | `node, x0[, x1], value`          |
//! | feedback    | `slab, x0[, x1], a, unique`      |
//! | policy      | `slab, x0[, x1], a, prob, unconstrained` |
//!
//! State columns hold grid indices. Values are written with the shortest
//! representation that round-trips, so rereading reproduces them exactly.

use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Writer};

use crate::dual::DualCertificate;
use crate::error::IoError;
use crate::hjbfp::ValueFunction;
use crate::model::GridSpec;
use crate::occupation::{MeanFieldFlow, OccupationMeasure, Policy};
use crate::scalar::Scalar;

fn csv_err(path: &Path, source: csv::Error) -> IoError {
    IoError::Csv { path: path.display().to_string(), source }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Format { path: path.display().to_string(), line, message: message.into() }
}

fn state_header<T: Scalar>(grid: &GridSpec<T>) -> Vec<String> {
    (0..grid.state_dim()).map(|d| format!("x{d}")).collect()
}

fn state_fields<T: Scalar>(grid: &GridSpec<T>, x: usize) -> Vec<String> {
    grid.multi_index(x).iter().map(|i| i.to_string()).collect()
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), IoError> {
    let mut w = Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

pub fn write_flow<T: Scalar>(path: &Path, grid: &GridSpec<T>, flow: &MeanFieldFlow<T>) -> Result<(), IoError> {
    let mut header = vec!["node".to_string()];
    header.extend(state_header(grid));
    header.push("mass".into());
    let rows = (0..flow.n_nodes()).flat_map(|k| {
        (0..flow.n_states()).map(move |x| {
            let mut r = vec![k.to_string()];
            r.extend(state_fields(grid, x));
            r.push(flow.row(k)[x].to_string());
            r
        })
    });
    write_rows(path, header, rows)
}

pub fn write_occupation<T: Scalar>(path: &Path, grid: &GridSpec<T>, occ: &OccupationMeasure<T>) -> Result<(), IoError> {
    let mut header = vec!["slab".to_string()];
    header.extend(state_header(grid));
    header.extend(["a".to_string(), "mass".to_string()]);
    let rows = (0..occ.n_time).flat_map(|k| {
        (0..occ.n_states).flat_map(move |x| {
            (0..occ.n_actions).map(move |j| {
                let mut r = vec![k.to_string()];
                r.extend(state_fields(grid, x));
                r.extend([j.to_string(), occ.xi(k, x, j).to_string()]);
                r
            })
        })
    });
    write_rows(path, header, rows)
}

pub fn write_terminal<T: Scalar>(path: &Path, grid: &GridSpec<T>, nu: &[T]) -> Result<(), IoError> {
    let mut header = state_header(grid);
    header.push("mass".into());
    let rows = nu.iter().enumerate().map(|(x, v)| {
        let mut r = state_fields(grid, x);
        r.push(v.to_string());
        r
    });
    write_rows(path, header, rows)
}

fn write_node_values<T: Scalar>(path: &Path, grid: &GridSpec<T>, n_nodes: usize, value: impl Fn(usize, usize) -> T) -> Result<(), IoError> {
    let mut header = vec!["node".to_string()];
    header.extend(state_header(grid));
    header.push("value".into());
    let s = grid.num_states();
    let value = &value;
    let rows = (0..n_nodes).flat_map(|k| {
        (0..s).map(move |x| {
            let mut r = vec![k.to_string()];
            r.extend(state_fields(grid, x));
            r.push(value(k, x).to_string());
            r
        })
    });
    write_rows(path, header, rows)
}

pub fn write_psi<T: Scalar>(path: &Path, grid: &GridSpec<T>, psi: &DualCertificate<T>) -> Result<(), IoError> {
    write_node_values(path, grid, psi.n_nodes(), |k, x| psi.at(k, x))
}

pub fn write_value<T: Scalar>(path: &Path, grid: &GridSpec<T>, v: &ValueFunction<T>) -> Result<(), IoError> {
    write_node_values(path, grid, v.n_time + 1, |k, x| v.at(k, x))
}

pub fn write_feedback<T: Scalar>(path: &Path, grid: &GridSpec<T>, v: &ValueFunction<T>) -> Result<(), IoError> {
    let mut header = vec!["slab".to_string()];
    header.extend(state_header(grid));
    header.extend(["a".to_string(), "unique".to_string()]);
    let rows = (0..v.n_time).flat_map(|k| {
        (0..v.n_states).map(move |x| {
            let mut r = vec![k.to_string()];
            r.extend(state_fields(grid, x));
            r.extend([v.action(k, x).to_string(), v.is_unique(k, x).to_string()]);
            r
        })
    });
    write_rows(path, header, rows)
}

pub fn write_policy<T: Scalar>(path: &Path, grid: &GridSpec<T>, p: &Policy<T>) -> Result<(), IoError> {
    let mut header = vec!["slab".to_string()];
    header.extend(state_header(grid));
    header.extend(["a".to_string(), "prob".to_string(), "unconstrained".to_string()]);
    let rows = (0..p.n_time).flat_map(|k| {
        (0..p.n_states).flat_map(move |x| {
            (0..p.n_actions).map(move |j| {
                let mut r = vec![k.to_string()];
                r.extend(state_fields(grid, x));
                r.extend([j.to_string(), p.row(k, x)[j].to_string(), p.is_unconstrained(k, x).to_string()]);
                r
            })
        })
    });
    write_rows(path, header, rows)
}

/// Reads a long-format table into a dense array. `leading` names the index
/// columns before the state indices, `trailing` those after; the last
/// column holds the value. `extent` bounds each leading and trailing index.
fn read_table<T: Scalar>(
    path: &Path,
    grid: &GridSpec<T>,
    leading: &[(&str, usize)],
    trailing: &[(&str, usize)],
    value: &str,
) -> Result<Vec<T>, IoError> {
    let mut reader = ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut expected: Vec<String> = leading.iter().map(|c| c.0.to_string()).collect();
    expected.extend(state_header(grid));
    expected.extend(trailing.iter().map(|c| c.0.to_string()));
    expected.push(value.into());
    if header.len() < expected.len() || expected.iter().zip(header.iter()).any(|(e, h)| e != h) {
        return Err(format_err(path, 1, format!("expected header {}, found {}", expected.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    let s = grid.num_states();
    let dims: Vec<usize> = leading.iter().map(|c| c.1).chain([s]).chain(trailing.iter().map(|c| c.1)).collect();
    let total: usize = dims.iter().product();
    let mut out = vec![T::nan(); total];
    let mut record = StringRecord::new();
    let mut line = 1;
    while reader.read_record(&mut record).map_err(|e| csv_err(path, e))? {
        line += 1;
        let parse_idx = |i: usize| -> Result<usize, IoError> {
            record.get(i).and_then(|f| f.parse::<usize>().ok()).ok_or_else(|| format_err(path, line, format!("column {} is not an index", expected[i])))
        };
        let mut col = 0;
        let mut flat = 0;
        for &(name, extent) in leading {
            let v = parse_idx(col)?;
            if v >= extent {
                return Err(format_err(path, line, format!("{name} = {v} out of range")));
            }
            flat = flat * extent + v;
            col += 1;
        }
        let multi: Vec<usize> = (0..grid.state_dim()).map(|d| parse_idx(col + d)).collect::<Result<_, _>>()?;
        col += grid.state_dim();
        let x = grid.flat_index(&multi).ok_or_else(|| format_err(path, line, format!("state {multi:?} outside the grid")))?;
        flat = flat * s + x;
        for &(name, extent) in trailing {
            let v = parse_idx(col)?;
            if v >= extent {
                return Err(format_err(path, line, format!("{name} = {v} out of range")));
            }
            flat = flat * extent + v;
            col += 1;
        }
        let raw = record.get(col).ok_or_else(|| format_err(path, line, "missing value"))?;
        let v = raw.parse::<f64>().ok().and_then(T::from_f64).ok_or_else(|| format_err(path, line, format!("`{raw}` is not a number")))?;
        out[flat] = v;
    }
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        return Err(format_err(path, line, format!("entry {i} of {total} missing")));
    }
    Ok(out)
}

pub fn read_flow<T: Scalar>(path: &Path, grid: &GridSpec<T>) -> Result<MeanFieldFlow<T>, IoError> {
    let n = grid.n_time() + 1;
    let m = read_table(path, grid, &[("node", n)], &[], "mass")?;
    MeanFieldFlow::from_flat(n, grid.num_states(), m).map_err(|e| format_err(path, 0, e.to_string()))
}

pub fn read_psi<T: Scalar>(path: &Path, grid: &GridSpec<T>) -> Result<DualCertificate<T>, IoError> {
    let n = grid.n_time() + 1;
    let v = read_table(path, grid, &[("node", n)], &[], "value")?;
    DualCertificate::from_flat(n, grid.num_states(), v).map_err(|e| format_err(path, 0, e.to_string()))
}

/// Reads `ξ` from the occupation file and `ν` from the terminal file.
pub fn read_occupation<T: Scalar>(occupation: &Path, terminal: &Path, grid: &GridSpec<T>) -> Result<OccupationMeasure<T>, IoError> {
    let (n, a) = (grid.n_time(), grid.num_actions());
    let xi = read_table(occupation, grid, &[("slab", n)], &[("a", a)], "mass")?;
    let nu = read_table(terminal, grid, &[], &[], "mass")?;
    Ok(OccupationMeasure { n_time: n, n_states: grid.num_states(), n_actions: a, dt: grid.dt(), xi, nu })
}
