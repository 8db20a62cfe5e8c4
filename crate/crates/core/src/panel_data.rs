//! Wide-format bivariate panel data and the sample moments consumed by the ML
//! discrepancy.
//!
//! Files look like `id,x1,…,xT,y1,…,yT`. Internally the columns are stored
//! interleaved by wave, `(x1, y1, x2, y2, …)`, which is the order every other
//! module indexes observed variables in.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelDataError {
    #[error("missing or non-numeric value at data row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("too few rows: need at least 2 individuals, found {0}")]
    TooFewRows(usize),
    #[error("degenerate sample: need at least 2 individuals, found {0}")]
    DegenerateSample(usize),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Complete-case panel of `n` individuals observed on two variables at
/// `t_waves` occasions.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    n: usize,
    t_waves: usize,
    x_name: String,
    y_name: String,
    /// `n × 2T`, columns ordered `(x1, y1, …, xT, yT)`.
    values: DMatrix<f64>,
    id_labels: Vec<String>,
}

impl PanelData {
    pub fn new(
        x_name: impl Into<String>,
        y_name: impl Into<String>,
        values: DMatrix<f64>,
        id_labels: Vec<String>,
    ) -> Result<Self, PanelDataError> {
        let n = values.nrows();
        if n < 2 {
            return Err(PanelDataError::TooFewRows(n));
        }
        if values.ncols() < 4 || !values.ncols().is_multiple_of(2) {
            return Err(PanelDataError::HeaderMismatch(format!(
                "expected 2·T columns with T ≥ 2, found {}",
                values.ncols()
            )));
        }
        if id_labels.len() != n {
            return Err(PanelDataError::Malformed(format!("{} id labels for {} rows", id_labels.len(), n)));
        }
        if let Some((r, c)) = first_non_finite(&values) {
            return Err(PanelDataError::MissingValue { row: r + 1, column: format!("column {}", c + 1) });
        }
        Ok(Self { n, t_waves: values.ncols() / 2, x_name: x_name.into(), y_name: y_name.into(), values, id_labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_waves(&self) -> usize {
        self.t_waves
    }

    pub fn x_name(&self) -> &str {
        &self.x_name
    }

    pub fn y_name(&self) -> &str {
        &self.y_name
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn id_labels(&self) -> &[String] {
        &self.id_labels
    }

    /// Returns a copy with every observation multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: &self.values * factor, ..self.clone() }
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// Splits a header like `x12` into `("x", 12)`.
fn split_wave(header: &str) -> Option<(&str, usize)> {
    let pos = header.find(|c: char| c.is_ascii_digit())?;
    let (name, digits) = header.split_at(pos);
    if name.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(|w| (name, w))
}

/// Parses wide comma-separated text.
pub fn load_wide<R: Read>(source: R) -> Result<PanelData, PanelDataError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).quoting(false).trim(csv::Trim::All).from_reader(source);

    let headers = reader.headers().map_err(|e| PanelDataError::Malformed(e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(PanelDataError::HeaderMismatch("need an id column followed by wave columns".into()));
    }

    // variable name -> wave -> source column
    let mut vars: Vec<(String, BTreeMap<usize, usize>)> = Vec::new();
    for (col, h) in headers.iter().enumerate().skip(1) {
        let (name, wave) = split_wave(h)
            .ok_or_else(|| PanelDataError::HeaderMismatch(format!("cannot read a wave index from `{h}`")))?;
        let slot = match vars.iter().position(|(v, _)| v == name) {
            Some(i) => i,
            None => {
                vars.push((name.to_string(), BTreeMap::new()));
                vars.len() - 1
            }
        };
        if vars[slot].1.insert(wave, col).is_some() {
            return Err(PanelDataError::HeaderMismatch(format!("duplicate column `{h}`")));
        }
    }
    if vars.len() != 2 {
        return Err(PanelDataError::HeaderMismatch(format!("expected exactly two variables, found {}", vars.len())));
    }
    let (tx, ty) = (vars[0].1.len(), vars[1].1.len());
    if tx != ty {
        return Err(PanelDataError::HeaderMismatch(format!(
            "`{}` has {} waves but `{}` has {}",
            vars[0].0, tx, vars[1].0, ty
        )));
    }
    let t_waves = tx;
    for (name, waves) in &vars {
        if waves.keys().copied().ne(1..=t_waves) {
            return Err(PanelDataError::HeaderMismatch(format!("`{name}` waves are not numbered 1..{t_waves}")));
        }
    }
    if t_waves < 2 {
        return Err(PanelDataError::HeaderMismatch("need at least 2 waves".into()));
    }
    let order: Vec<(usize, String)> =
        (1..=t_waves).flat_map(|w| vars.iter().map(move |(name, m)| (m[&w], format!("{name}{w}")))).collect();

    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| PanelDataError::Malformed(e.to_string()))?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
        for (col, label) in &order {
            let cell = rec.get(*col).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => flat.push(v),
                _ => return Err(PanelDataError::MissingValue { row: r + 1, column: label.clone() }),
            }
        }
    }
    let n = ids.len();
    if n < 2 {
        return Err(PanelDataError::TooFewRows(n));
    }
    let values = DMatrix::from_row_slice(n, 2 * t_waves, &flat);
    PanelData::new(vars[0].0.clone(), vars[1].0.clone(), values, ids)
}

/// Writes `data` in the same wide format [`load_wide`] reads. Values use the
/// shortest round-trip representation, so a reload is bit-exact.
pub fn write_wide<W: Write>(data: &PanelData, mut out: W) -> Result<(), PanelDataError> {
    let t = data.t_waves;
    let mut line = String::from("id");
    for w in 1..=t {
        line.push_str(&format!(",{}{w}", data.x_name));
    }
    for w in 1..=t {
        line.push_str(&format!(",{}{w}", data.y_name));
    }
    writeln!(out, "{line}")?;
    for (i, id) in data.id_labels.iter().enumerate() {
        line.clear();
        line.push_str(id);
        for var in 0..2 {
            for w in 0..t {
                line.push(',');
                line.push_str(&format!("{}", data.values[(i, 2 * w + var)]));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Mean vector and divisor-N covariance matrix of the observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
    /// Covariance denominator; always `n`.
    pub divisor: f64,
}

impl SampleMoments {
    /// Moments of the rows of `values` (individuals × variables).
    pub fn from_rows(values: &DMatrix<f64>) -> Result<Self, PanelDataError> {
        let n = values.nrows();
        if n < 2 {
            return Err(PanelDataError::DegenerateSample(n));
        }
        let p = values.ncols();
        let divisor = n as f64;
        let mean = DVector::from_iterator(p, (0..p).map(|j| values.column(j).sum() / divisor));
        let mut centered = values.clone();
        for j in 0..p {
            let m = mean[j];
            centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
        }
        let mut cov = centered.tr_mul(&centered) / divisor;
        // exact symmetry
        for i in 0..p {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok(Self { mean, cov, n, divisor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn sample_moments(data: &PanelData) -> Result<SampleMoments, PanelDataError> {
    SampleMoments::from_rows(&data.values)
}
