//! Fuzzy cognitive maps.
//!
//! Concept activations are updated with the self-inclusive rule
//! `next = f(state · W + state)`, where `W[i][j]` is the causal strength of
//! concept `i` on concept `j` and `f` is applied elementwise. A constant
//! external drive can be added before squashing to model clamped input
//! concepts that are not part of the iterated matrix.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FcmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquashKind {
    #[default]
    Sigmoid,
    Bivalent,
    Trivalent,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    0.5
}

/// Squashing function. `lambda` is the sigmoid steepness; `threshold` is the
/// cut used by the bivalent and trivalent step functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquashSpec {
    #[serde(default)]
    pub kind: SquashKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for SquashSpec {
    fn default() -> Self {
        Self::sigmoid(1.0)
    }
}

impl SquashSpec {
    pub fn sigmoid(lambda: f64) -> Self {
        SquashSpec {
            kind: SquashKind::Sigmoid,
            lambda,
            threshold: default_threshold(),
        }
    }

    pub fn bivalent() -> Self {
        SquashSpec {
            kind: SquashKind::Bivalent,
            lambda: default_lambda(),
            threshold: default_threshold(),
        }
    }

    pub fn trivalent() -> Self {
        SquashSpec {
            kind: SquashKind::Trivalent,
            ..Self::bivalent()
        }
    }

    pub fn validate(&self) -> Result<(), FcmError> {
        if self.kind == SquashKind::Sigmoid && !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(FcmError::InvalidConfig(format!(
                "sigmoid lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !self.threshold.is_finite() || self.threshold <= 0.0 {
            return Err(FcmError::InvalidConfig(format!(
                "step threshold must be positive, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            SquashKind::Sigmoid => 1.0 / (1.0 + (-self.lambda * x).exp()),
            SquashKind::Bivalent => {
                if x >= self.threshold {
                    1.0
                } else {
                    0.0
                }
            }
            SquashKind::Trivalent => {
                if x >= self.threshold {
                    1.0
                } else if x <= -self.threshold {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether `v` lies in the image of the squashing function.
    pub fn contains(&self, v: f64) -> bool {
        match self.kind {
            SquashKind::Sigmoid => v > 0.0 && v < 1.0,
            SquashKind::Bivalent => v == 0.0 || v == 1.0,
            SquashKind::Trivalent => v == -1.0 || v == 0.0 || v == 1.0,
        }
    }

    /// Closed bounds of the range, for baseline checks.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            SquashKind::Sigmoid | SquashKind::Bivalent => (0.0, 1.0),
            SquashKind::Trivalent => (-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptState(pub Vec<f64>);

impl ConceptState {
    pub fn zeros(n: usize) -> Self {
        ConceptState(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// L-infinity distance.
    pub fn max_abs_diff(&self, other: &ConceptState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for ConceptState {
    fn from(v: Vec<f64>) -> Self {
        ConceptState(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<(), FcmError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(FcmError::InvalidConfig(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(FcmError::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmModel {
    pub concepts: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub squash: SquashSpec,
}

impl FcmModel {
    pub fn new(concepts: Vec<String>, weights: Vec<Vec<f64>>, squash: SquashSpec) -> Result<Self, FcmError> {
        let model = FcmModel {
            concepts,
            weights,
            squash,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn validate(&self) -> Result<(), FcmError> {
        let n = self.concepts.len();
        if self.weights.len() != n {
            return Err(FcmError::DimensionMismatch {
                expected: n,
                found: self.weights.len(),
            });
        }
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != n {
                return Err(FcmError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() || w.abs() > 1.0 {
                    return Err(FcmError::InvalidModel(format!(
                        "weight {} -> {} is {w}, outside [-1, 1]",
                        self.concepts[i], self.concepts[j]
                    )));
                }
                if i == j && w != 0.0 {
                    return Err(FcmError::InvalidModel(format!(
                        "self-loop on {} must be 0 (the update rule adds the state itself)",
                        self.concepts[i]
                    )));
                }
            }
        }
        self.squash.validate()
    }

    fn check_dim(&self, len: usize) -> Result<(), FcmError> {
        if len != self.len() {
            return Err(FcmError::DimensionMismatch {
                expected: self.len(),
                found: len,
            });
        }
        Ok(())
    }

    /// One update: `f(state · W + state)`.
    pub fn step_state(&self, state: &ConceptState) -> Result<ConceptState, FcmError> {
        self.check_dim(state.len())?;
        Ok(self.step_unchecked(state, None))
    }

    /// One update with a constant drive added before squashing:
    /// `f(state · W + state + drive)`.
    pub fn step_driven(&self, state: &ConceptState, drive: &[f64]) -> Result<ConceptState, FcmError> {
        self.check_dim(state.len())?;
        self.check_dim(drive.len())?;
        Ok(self.step_unchecked(state, Some(drive)))
    }

    fn step_unchecked(&self, state: &ConceptState, drive: Option<&[f64]>) -> ConceptState {
        let n = self.len();
        let mut next = state.0.clone();
        for (i, &a) in state.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (acc, &w) in next.iter_mut().zip(&self.weights[i]) {
                *acc += a * w;
            }
        }
        if let Some(d) = drive {
            for (acc, &u) in next.iter_mut().zip(d) {
                *acc += u;
            }
        }
        debug_assert_eq!(next.len(), n);
        ConceptState(next.into_iter().map(|x| self.squash.apply(x)).collect())
    }

    /// Iterates until the L-infinity change drops below `tol` or `max_iter`
    /// updates have been made.
    pub fn run_to_fixed_point(
        &self,
        start: &ConceptState,
        config: FixedPointConfig,
    ) -> Result<FixedPointReport, FcmError> {
        self.check_dim(start.len())?;
        self.iterate(start, None, config)
    }

    pub fn run_driven_to_fixed_point(
        &self,
        start: &ConceptState,
        drive: &[f64],
        config: FixedPointConfig,
    ) -> Result<FixedPointReport, FcmError> {
        self.check_dim(start.len())?;
        self.check_dim(drive.len())?;
        self.iterate(start, Some(drive), config)
    }

    fn iterate(
        &self,
        start: &ConceptState,
        drive: Option<&[f64]>,
        config: FixedPointConfig,
    ) -> Result<FixedPointReport, FcmError> {
        config.validate()?;
        let mut trajectory = vec![start.clone()];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < config.max_iter {
            let current = trajectory.last().expect("trajectory starts non-empty");
            let next = self.step_unchecked(current, drive);
            iterations += 1;
            let delta = next.max_abs_diff(current);
            trajectory.push(next);
            if delta < config.tol {
                converged = true;
                break;
            }
        }
        Ok(FixedPointReport {
            concepts: self.concepts.clone(),
            trajectory,
            iterations,
            converged,
        })
    }

    /// Parses the matrix exchange format: a CSV table whose header row and
    /// first column both list the concept ids.
    pub fn from_matrix_csv(text: &str, squash: SquashSpec) -> Result<Self, FcmError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| FcmError::Parse(e.to_string()))?.clone();
        let concepts: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut weights = Vec::with_capacity(concepts.len());
        for (row_idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| FcmError::Parse(e.to_string()))?;
            let label = record.get(0).unwrap_or_default();
            if concepts.get(row_idx).map(String::as_str) != Some(label) {
                return Err(FcmError::Parse(format!(
                    "row {} is labelled `{label}`, expected `{}`",
                    row_idx + 1,
                    concepts.get(row_idx).map(String::as_str).unwrap_or("<none>")
                )));
            }
            let row = record
                .iter()
                .skip(1)
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|e| FcmError::Parse(format!("`{cell}` in row `{label}`: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            weights.push(row);
        }
        FcmModel::new(concepts, weights, squash)
    }

    pub fn to_matrix_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.concepts {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (c, row) in self.concepts.iter().zip(&self.weights) {
            out.push_str(c);
            for w in row {
                let _ = write!(out, ",{w}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub concepts: Vec<String>,
    /// Start state followed by every iterate.
    pub trajectory: Vec<ConceptState>,
    pub iterations: usize,
    pub converged: bool,
}

impl FixedPointReport {
    pub fn final_state(&self) -> Option<&ConceptState> {
        self.trajectory.last()
    }
}

/// Number of decimals printed in report tables.
pub const REPORT_DECIMALS: usize = 7;

/// Concept-by-scenario table of fixed-point values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub concepts: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ReportTable {
    pub fn new(concepts: Vec<String>) -> Self {
        ReportTable {
            concepts,
            columns: Vec::new(),
        }
    }

    /// Adds the final state of `report` as a column. A report with an empty
    /// trajectory contributes a header but no values.
    pub fn push(&mut self, name: &str, report: &FixedPointReport) {
        let values = report.final_state().map(|s| s.values().to_vec()).unwrap_or_default();
        self.columns.push((name.to_string(), values));
    }

    fn has_rows(&self) -> bool {
        !self.columns.is_empty() && self.columns.iter().all(|(_, v)| v.len() == self.concepts.len())
    }

    /// Aligned plain text; values right-aligned with [`REPORT_DECIMALS`].
    pub fn to_text(&self) -> String {
        let label = "Concepts";
        let first = self
            .concepts
            .iter()
            .map(String::len)
            .chain([label.len()])
            .max()
            .unwrap_or(0);
        let cells: Vec<Vec<String>> = self
            .columns
            .iter()
            .map(|(_, v)| v.iter().map(|x| format!("{x:.REPORT_DECIMALS$}")).collect())
            .collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .zip(&cells)
            .map(|((name, _), c)| c.iter().map(String::len).chain([name.len()]).max().unwrap_or(0))
            .collect();

        let mut out = format!("{label:<first$}");
        for ((name, _), w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {name:>w$}");
        }
        out.push('\n');
        if self.has_rows() {
            for (r, concept) in self.concepts.iter().enumerate() {
                let _ = write!(out, "{concept:<first$}");
                for (col, w) in cells.iter().zip(&widths) {
                    let _ = write!(out, "  {:>w$}", col[r]);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Concepts".to_string()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        writer.write_record(&header).expect("in-memory write");
        if self.has_rows() {
            for (r, concept) in self.concepts.iter().enumerate() {
                let mut row = vec![concept.clone()];
                row.extend(self.columns.iter().map(|(_, v)| format!("{:.REPORT_DECIMALS$}", v[r])));
                writer.write_record(&row).expect("in-memory write");
            }
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Single-report convenience: one column titled "Fixed Point".
pub fn render_report(report: &FixedPointReport) -> String {
    let mut table = ReportTable::new(report.concepts.clone());
    table.push("Fixed Point", report);
    table.to_text()
}
