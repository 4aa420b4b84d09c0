//! Field dumps as CSV: `cell_index,x_1[,x_2],value[,value_2]`, one row per
//! cell in traversal order.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::sobolev::SobolevPair;

/// Coordinates must match the cell centres to this absolute tolerance.
const COORD_TOL: f64 = 1e-9;

fn header(dim: usize, width: usize) -> Vec<String> {
    let mut h = vec!["cell_index".to_string()];
    h.extend((1..=dim).map(|a| format!("x_{a}")));
    h.push("value".into());
    h.extend((2..=width).map(|k| format!("value_{k}")));
    h
}

fn write_rows<W: Write>(out: W, grid: &Grid, width: usize, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(grid.dim(), width))?;
    for (c, x) in grid.centers().enumerate() {
        let mut row = vec![c.to_string()];
        row.extend(x[..grid.dim()].iter().map(f64::to_string));
        row.extend(values[c * width..(c + 1) * width].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scalar_csv<W: Write>(out: W, f: &ScalarField) -> Result<()> {
    write_rows(out, f.grid(), 1, f.values())
}

pub fn write_vector_csv<W: Write>(out: W, g: &VectorField) -> Result<()> {
    write_rows(out, g.grid(), g.dim(), g.values())
}

/// Writes `<stem>_u.csv` and `<stem>_g.csv` into `dir`.
pub fn write_pair(dir: &Path, stem: &str, w: &SobolevPair) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let pu = dir.join(format!("{stem}_u.csv"));
    let pg = dir.join(format!("{stem}_g.csv"));
    write_scalar_csv(std::fs::File::create(&pu)?, &w.u)?;
    write_vector_csv(std::fs::File::create(&pg)?, &w.g)?;
    Ok((pu, pg))
}

/// A parsed field dump, not yet tied to a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTable {
    pub dim: usize,
    /// Values per row: 1 for scalars, `dim` for vectors.
    pub width: usize,
    /// `dim` coordinates per row.
    pub coords: Vec<f64>,
    /// `width` values per row.
    pub values: Vec<f64>,
}

impl FieldTable {
    pub fn rows(&self) -> usize {
        self.values.len() / self.width
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.dim != grid.dim() || self.rows() != grid.len() {
            return Err(Error::Shape(format!(
                "table has {} rows in {}D, grid has {} cells in {}D",
                self.rows(),
                self.dim,
                grid.len(),
                grid.dim()
            )));
        }
        for (c, x) in grid.centers().enumerate() {
            for (a, &xa) in x.iter().enumerate().take(self.dim) {
                let got = self.coords[c * self.dim + a];
                if (got - xa).abs() > COORD_TOL {
                    return Err(Error::Shape(format!(
                        "row {c}: x_{} = {got} but the cell centre is {}",
                        a + 1,
                        xa
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn into_scalar(self, grid: &Grid) -> Result<ScalarField> {
        self.check_grid(grid)?;
        if self.width != 1 {
            return Err(Error::Shape(format!("expected 1 value column, found {}", self.width)));
        }
        ScalarField::new(*grid, self.values)
    }

    pub fn into_vector(self, grid: &Grid) -> Result<VectorField> {
        self.check_grid(grid)?;
        if self.width != grid.dim() {
            return Err(Error::Shape(format!(
                "expected {} value columns, found {}",
                grid.dim(),
                self.width
            )));
        }
        VectorField::new(*grid, self.values)
    }
}

/// Parses and validates a field dump: header shape, consecutive cell
/// indices, finite numbers.
pub fn read_field_csv<R: Read>(input: R) -> Result<FieldTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let head: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let dim = head.iter().filter(|h| h.starts_with("x_")).count();
    if !(1..=2).contains(&dim) || head.len() < dim + 2 {
        return Err(Error::Config(format!("unrecognised header {head:?}")));
    }
    let width = head.len() - 1 - dim;
    if width != 1 && width != dim {
        return Err(Error::Config(format!("unrecognised header {head:?}")));
    }
    if head != header(dim, width) {
        return Err(Error::Config(format!("unrecognised header {head:?}")));
    }
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != head.len() {
            return Err(Error::Config(format!(
                "row {row}: {} fields, expected {}",
                rec.len(),
                head.len()
            )));
        }
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("row {row}: bad cell_index {:?}", &rec[0])))?;
        if idx != row {
            return Err(Error::Config(format!("row {row}: cell_index {idx} out of order")));
        }
        for k in 1..rec.len() {
            let x: f64 = rec[k]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("row {row}: bad number {:?}", &rec[k])))?;
            if !x.is_finite() {
                return Err(Error::Config(format!("row {row}: non-finite value")));
            }
            if k <= dim {
                coords.push(x);
            } else {
                values.push(x);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Config("no data rows".into()));
    }
    Ok(FieldTable {
        dim,
        width,
        coords,
        values,
    })
}
