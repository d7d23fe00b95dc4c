//! CSV ingestion. The first column is the unit id; the others are tagged by
//! header prefix: `x_` auxiliary, `y_` response, `pi` inclusion probability.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;

use super::CliError;
use crate::matrixops::DataMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub rows: usize,
    pub aux_columns: usize,
    pub response_columns: usize,
    pub binary_columns: Vec<String>,
    pub has_pi: bool,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    /// Raw auxiliary values (N × q), `None` when the file has no `x_` column.
    pub aux: Option<DataMatrix>,
    pub responses: Vec<(String, Vec<f64>)>,
    pub pi: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

enum Role {
    Aux,
    Response,
    Pi,
}

fn parse_error(line: u64, column: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn ingest_csv(path: &Path) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file)
}

pub fn ingest_reader<R: std::io::Read>(reader: R) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_error(1, 1, e.to_string()))?,
        None => return Err(parse_error(1, 1, "empty file, expected a header row")),
    };
    if header.len() < 2 {
        return Err(parse_error(1, 1, "header needs a unit id column and at least one data column"));
    }
    let mut roles = Vec::with_capacity(header.len() - 1);
    let mut seen = HashSet::new();
    for (j, name) in header.iter().enumerate().skip(1) {
        let role = if name.starts_with("x_") && name.len() > 2 {
            Role::Aux
        } else if name.starts_with("y_") && name.len() > 2 {
            Role::Response
        } else if name == "pi" {
            Role::Pi
        } else if name.parse::<f64>().is_ok() {
            return Err(parse_error(1, j + 1, "missing header row"));
        } else {
            return Err(parse_error(
                1,
                j + 1,
                format!("column `{name}` needs an x_, y_ or pi header"),
            ));
        };
        if !seen.insert(name.to_string()) {
            return Err(parse_error(1, j + 1, format!("duplicate column `{name}`")));
        }
        roles.push(role);
    }

    let mut ids = Vec::new();
    let mut id_set = HashSet::new();
    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); roles.len()];
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(line, 1, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_error(
                line,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse_error(line, 1, "missing unit id"));
        }
        if !id_set.insert(id.clone()) {
            return Err(CliError::DuplicateUnitId { id });
        }
        ids.push(id);
        for (j, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                return Err(parse_error(line, j + 1, "missing value"));
            }
            let v: f64 = cell.parse().map_err(|_| CliError::NonNumericCell {
                line,
                column: j + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(CliError::NonNumericCell {
                    line,
                    column: j + 1,
                    value: cell.to_string(),
                });
            }
            cells[j - 1].push(v);
        }
    }
    if ids.is_empty() {
        return Err(parse_error(2, 1, "no data rows"));
    }

    let n = ids.len();
    let mut aux_cols = Vec::new();
    let mut aux_names = Vec::new();
    let mut responses = Vec::new();
    let mut pi = None;
    for ((role, name), col) in roles.iter().zip(header.iter().skip(1)).zip(cells) {
        match role {
            Role::Aux => {
                aux_names.push(name.to_string());
                aux_cols.push(col);
            }
            Role::Response => responses.push((name.to_string(), col)),
            Role::Pi => pi = Some(col),
        }
    }
    let binary_columns = aux_names
        .iter()
        .zip(&aux_cols)
        .filter(|(_, c)| c.iter().all(|&v| v == 0.0 || v == 1.0))
        .map(|(n, _)| n.clone())
        .collect();
    let aux = if aux_cols.is_empty() {
        None
    } else {
        let q = aux_cols.len();
        let values = Array2::from_shape_fn((n, q), |(i, j)| aux_cols[j][i]);
        Some(DataMatrix::raw(values, aux_names)?)
    };
    let diagnostics = Diagnostics {
        rows: n,
        aux_columns: aux.as_ref().map_or(0, |a| a.ncols()),
        response_columns: responses.len(),
        binary_columns,
        has_pi: pi.is_some(),
    };
    Ok(Dataset {
        ids,
        aux,
        responses,
        pi,
        diagnostics,
    })
}

/// A weight file as written by the `weights` command.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub ids: Vec<String>,
    pub d: Vec<f64>,
    pub g: Vec<f64>,
    pub w: Vec<f64>,
}

impl WeightTable {
    /// `Σ w_k y_k`, matching units by id.
    pub fn total(&self, ids: &[String], y: &[f64]) -> Result<f64, CliError> {
        let pos: std::collections::HashMap<&str, usize> =
            ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
        let mut total = 0.0;
        for (id, w) in self.ids.iter().zip(&self.w) {
            let k = pos
                .get(id.as_str())
                .ok_or_else(|| CliError::Config(format!("unit `{id}` has no response value")))?;
            total += w * y[*k];
        }
        Ok(total)
    }
}

pub fn read_weights(path: &Path) -> Result<WeightTable, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let header = rdr.headers().map_err(|e| parse_error(1, 1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["unit_id", "d", "g", "w"] {
        return Err(parse_error(1, 1, "expected columns unit_id,d,g,w"));
    }
    let mut t = WeightTable {
        ids: Vec::new(),
        d: Vec::new(),
        g: Vec::new(),
        w: Vec::new(),
    };
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_error(e.position().map_or(0, |p| p.line()), 1, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if !seen.insert(rec[0].to_string()) {
            return Err(CliError::DuplicateUnitId { id: rec[0].to_string() });
        }
        let mut vals = [0.0; 3];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = rec[j + 1].parse().map_err(|_| CliError::NonNumericCell {
                line,
                column: j + 2,
                value: rec[j + 1].to_string(),
            })?;
        }
        t.ids.push(rec[0].to_string());
        t.d.push(vals[0]);
        t.g.push(vals[1]);
        t.w.push(vals[2]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(s: &str) -> Result<Dataset, CliError> {
        ingest_reader(s.as_bytes())
    }

    #[test]
    fn three_rows() {
        let d = ingest("id,x_a,x_b,y_1\n1,1.5,0,3\n2,2.5,1,4\n3,0.5,1,5\n").unwrap();
        let aux = d.aux.unwrap();
        assert_eq!((aux.nrows(), aux.ncols()), (3, 2));
        assert_eq!(d.responses.len(), 1);
        assert_eq!(d.responses[0].1, vec![3.0, 4.0, 5.0]);
        assert_eq!(d.diagnostics.binary_columns, vec!["x_b"]);
        assert!(!d.diagnostics.has_pi);
    }

    #[test]
    fn missing_header() {
        match ingest("1,1.5,2\n2,2.5,3\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(ingest(""), Err(CliError::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_id() {
        match ingest("id,x_a\nu1,1\nu2,2\nu1,3\n") {
            Err(CliError::DuplicateUnitId { id }) => assert_eq!(id, "u1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cells() {
        match ingest("id,x_a,y_b\n1,1,2\n2,abc,3\n") {
            Err(CliError::NonNumericCell { line, column, value }) => {
                assert_eq!((line, column, value.as_str()), (3, 2, "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(ingest("id,x_a\n1,\n"), Err(CliError::Parse { line: 2, column: 2, .. })));
        assert!(matches!(ingest("id,x_a,z\n1,1,2\n"), Err(CliError::Parse { line: 1, column: 3, .. })));
    }

    #[test]
    fn pi_column() {
        let d = ingest("id,x_a,pi\n1,1,0.5\n2,3,0.25\n").unwrap();
        assert_eq!(d.pi.unwrap(), vec![0.5, 0.25]);
    }
}
