use std::fs;
use std::path::Path;

use gecco::loss::expand_multinomial;
use gecco::{Loss, View};
use ndarray::Array2;

use crate::CliError;

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan")
}

/// Reads a numeric CSV with a header row. Empty, `NA` and `NaN` cells are
/// unobserved. Multinomial views hold class labels `1..=classes`.
pub fn read_view(path: &Path, loss: Loss) -> Result<View<f64>, CliError> {
    let data_err = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let p = names.len();
    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            data_err(format!("row {} (line {line}): {e}", r + 1))
        })?;
        let line = rec.position().map_or(0, |pos| pos.line());
        if rec.len() != p {
            return Err(data_err(format!(
                "row {} (line {line}) has {} fields, expected {p}",
                r + 1,
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            if is_missing(field) {
                values.push(0.0);
                observed.push(false);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                data_err(format!("row {} (line {line}), column `{}`: `{field}` is not a number", r + 1, names[j]))
            })?;
            if !v.is_finite() {
                return Err(data_err(format!("row {} (line {line}): non-finite value", r + 1)));
            }
            values.push(v);
            observed.push(true);
        }
        n += 1;
    }
    if n == 0 {
        return Err(data_err("no data rows".into()));
    }
    let data = Array2::from_shape_vec((n, p), values).expect("row lengths checked");
    let any_missing = observed.iter().any(|o| !o);
    if let Loss::MultinomialLl { classes } = loss {
        if any_missing {
            return Err(data_err("multinomial views cannot have missing cells".into()));
        }
        let labels = data.mapv(|v| if v >= 1.0 && v.fract() == 0.0 { v as usize } else { 0 });
        let expanded = expand_multinomial(labels.view(), classes).map_err(|e| data_err(e.to_string()))?;
        let names = (1..=classes)
            .flat_map(|c| names.iter().map(move |s| format!("{s}={c}")))
            .collect();
        return Ok(View::new(expanded, loss).with_names(names));
    }
    let mut view = View::new(data, loss).with_names(names);
    if any_missing {
        view = view.with_observed(Array2::from_shape_vec((n, p), observed).expect("same shape"));
    }
    Ok(view)
}

/// A CSV table preceded by `#` comment lines.
pub struct Table {
    header: String,
    body: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &str, columns: &[&str]) -> Table {
        let mut body = csv::Writer::from_writer(Vec::new());
        body.write_record(columns).expect("in-memory write");
        Table {
            header: header.to_owned(),
            body,
        }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.body.write_record(fields).expect("in-memory write");
    }

    pub fn save(self, path: &Path) -> Result<(), CliError> {
        let body = self.body.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        let mut out = self.header.into_bytes();
        out.extend_from_slice(&body);
        fs::write(path, out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// Reads the column named `column`, or the last column when there is none.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<String>, CliError> {
    let data_err = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let idx = headers.iter().position(|h| h == column).unwrap_or(headers.len().saturating_sub(1));
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err(format!("row {}: {e}", r + 1)))?;
        let field = rec
            .get(idx)
            .ok_or_else(|| data_err(format!("row {} is missing column `{column}`", r + 1)))?;
        out.push(field.to_owned());
    }
    Ok(out)
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}
