//! CSV output. Every file starts with a `# schema=1 experiment=<name>`
//! comment line followed by a header row.

use std::fmt;
use std::io::Write;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::numerics::norm;
use crate::resnet::Path;
use crate::sde::SdePath;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// A rectangular table tagged with the experiment that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        CsvTable {
            experiment: experiment.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema={SCHEMA_VERSION} experiment={}", self.experiment).map_err(io_error)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_string)).map_err(csv_error)?;
        }
        w.flush().map_err(io_error)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Unsupported(e.to_string()))
    }
}

fn io_error(e: std::io::Error) -> Error {
    Error::Unsupported(format!("write failed: {e}"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Unsupported(format!("csv write failed: {e}"))
}

/// Full path export: `sample_id, layer, coord_0, ..., coord_{n-1}`.
pub fn paths_full(experiment: &str, paths: &[Path]) -> Result<CsvTable> {
    let n = paths.first().map_or(0, |p| p.initial().len());
    let mut columns = vec!["sample_id".to_owned(), "layer".to_owned()];
    columns.extend((0..n).map(|i| format!("coord_{i}")));
    let mut table = CsvTable { experiment: experiment.to_owned(), columns, rows: Vec::new() };
    for (id, path) in paths.iter().enumerate() {
        for (layer, state) in path.states.iter().enumerate() {
            if state.len() != n {
                return Err(Error::Precondition("paths have different widths".into()));
            }
            let mut row: Vec<Cell> = vec![id.into(), layer.into()];
            row.extend(state.iter().map(|&v| Cell::Float(v)));
            table.push(row);
        }
    }
    Ok(table)
}

/// Reduced path export: `sample_id, layer, norm, log_norm_ratio`, where the
/// norm is `|phi(Y_l)|` and the ratio is taken against layer 0. The ratio is
/// empty when either norm vanishes.
pub fn paths_reduced(experiment: &str, paths: &[Path], activation: &Activation) -> Result<CsvTable> {
    let mut table = CsvTable::new(experiment, &["sample_id", "layer", "norm", "log_norm_ratio"]);
    for (id, path) in paths.iter().enumerate() {
        let norms = path.post_activation_norms(activation)?;
        for (layer, &nrm) in norms.iter().enumerate() {
            let ratio = (norms[0] > 0.0 && nrm > 0.0).then(|| (nrm / norms[0]).ln());
            table.push(vec![id.into(), layer.into(), nrm.into(), ratio.into()]);
        }
    }
    Ok(table)
}

/// Diffusion paths with a `scheme` column: `sample_id, scheme, step, t, norm`.
pub fn sde_paths(experiment: &str, scheme: &str, paths: &[SdePath]) -> CsvTable {
    let mut table = CsvTable::new(experiment, &["sample_id", "scheme", "step", "t", "norm"]);
    for (id, path) in paths.iter().enumerate() {
        for (step, (t, x)) in path.times.iter().zip(&path.states).enumerate() {
            table.push(vec![id.into(), scheme.into(), step.into(), (*t).into(), norm(x).into()]);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let mut t = CsvTable::new("demo", &["a", "b", "c"]);
        t.push(vec![1usize.into(), 0.1.into(), Cell::Empty]);
        t.push(vec![2usize.into(), (-2.5e-10).into(), "x,y".into()]);
        let s = t.to_csv_string().unwrap();
        assert_eq!(s, "# schema=1 experiment=demo\na,b,c\n1,0.1,\n2,-0.00000000025,\"x,y\"\n");
    }

    #[test]
    fn reduced_paths() {
        let p = Path { states: vec![vec![3.0, 4.0], vec![-1.0, -1.0], vec![6.0, 8.0]] };
        let t = paths_reduced("r", std::slice::from_ref(&p), &Activation::Relu).unwrap();
        assert_eq!(t.rows[0][2], Cell::Float(5.0));
        assert_eq!(t.rows[0][3], Cell::Float(0.0));
        assert_eq!(t.rows[1][3], Cell::Empty);
        assert_eq!(t.rows[2][3], Cell::Float(2f64.ln()));
        let full = paths_full("f", &[p]).unwrap();
        assert_eq!(full.columns, vec!["sample_id", "layer", "coord_0", "coord_1"]);
        assert_eq!(full.rows.len(), 3);
    }

    #[test]
    fn sde_paths_have_scheme() {
        let p = SdePath { times: vec![0.0, 0.5], states: vec![vec![1.0], vec![2.0]], stopped: false };
        let t = sde_paths("s", "euler", &[p]);
        assert_eq!(t.rows[1], vec![Cell::Int(0), Cell::Text("euler".into()), Cell::Int(1), Cell::Float(0.5), Cell::Float(2.0)]);
    }
}
