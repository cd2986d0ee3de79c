//! Residual tables.

use serde::Serialize;

/// One residual of one condition at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub condition: String,
    /// 1-based index tuple, as written in the formulas.
    pub indices: Vec<usize>,
    pub point: Vec<f64>,
    pub residual: f64,
    /// Magnitude of the terms combined into the residual.
    pub scale: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A point where some field could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointError {
    pub condition: String,
    pub point: Vec<f64>,
    pub message: String,
}

/// Residuals compared against `tolerance` with the mixed test
/// `|r| <= tol * (1 + scale)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tolerance: f64,
    pub entries: Vec<Entry>,
    pub errors: Vec<PointError>,
    pub passed: bool,
}

impl Report {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            entries: Vec::new(),
            errors: Vec::new(),
            passed: true,
        }
    }

    pub fn within(tol: f64, residual: f64, scale: f64) -> bool {
        residual.is_finite() && residual.abs() <= tol * (1.0 + scale.abs())
    }

    /// `indices` are 0-based here and stored 1-based.
    pub fn push(
        &mut self,
        condition: &str,
        indices: &[usize],
        point: &[f64],
        residual: f64,
        scale: f64,
    ) -> &mut Entry {
        let passed = Self::within(self.tolerance, residual, scale);
        self.passed &= passed;
        self.entries.push(Entry {
            condition: condition.to_string(),
            indices: indices.iter().map(|i| i + 1).collect(),
            point: point.to_vec(),
            residual,
            scale,
            passed,
            label: None,
        });
        self.entries.last_mut().expect("just pushed")
    }

    pub fn push_error(&mut self, condition: &str, point: &[f64], message: impl ToString) {
        self.passed = false;
        self.errors.push(PointError {
            condition: condition.to_string(),
            point: point.to_vec(),
            message: message.to_string(),
        });
    }

    /// Appends another report's rows; the tolerance of `self` is kept.
    pub fn merge(&mut self, other: Report) {
        for mut e in other.entries {
            e.passed = Self::within(self.tolerance, e.residual, e.scale);
            self.passed &= e.passed;
            self.entries.push(e);
        }
        if !other.errors.is_empty() {
            self.passed = false;
        }
        self.errors.extend(other.errors);
    }

    pub fn block<'a>(&'a self, condition: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.condition == condition)
    }

    /// Largest absolute residual of a condition (0 when it has no rows).
    pub fn max_abs(&self, condition: &str) -> f64 {
        self.block(condition)
            .map(|e| e.residual.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_all(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.residual.abs())
            .fold(0.0, f64::max)
    }

    /// Whether every row of a condition passes and none of its points errored.
    pub fn block_passed(&self, condition: &str) -> bool {
        self.block(condition).all(|e| e.passed)
            && !self.errors.iter().any(|e| e.condition == condition)
    }

    pub fn conditions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.condition) {
                out.push(e.condition.clone());
            }
        }
        out
    }
}
