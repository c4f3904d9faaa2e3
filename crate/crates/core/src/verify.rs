//! Residual bookkeeping shared by every verification routine.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::expr::{Env, Expr};
use crate::sample::SampleError;

pub type Point = BTreeMap<String, f64>;

/// One measured quantity compared against a tolerance.
///
/// `lower_bound` residuals pass when the value is at least the tolerance
/// (used for expected-failure witnesses).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub lower_bound: bool,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Point>,
}

impl Residual {
    pub fn at_most(label: impl Into<String>, value: f64, tolerance: f64, witness: Option<Point>) -> Self {
        Residual { label: label.into(), value, tolerance, lower_bound: false, passed: value <= tolerance, witness }
    }

    pub fn at_least(label: impl Into<String>, value: f64, tolerance: f64, witness: Option<Point>) -> Self {
        Residual { label: label.into(), value, tolerance, lower_bound: true, passed: value >= tolerance, witness }
    }
}

/// The outcome of a verification routine: a list of residuals plus notes.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Verification {
    pub residuals: Vec<Residual>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Verification {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: Residual) {
        self.residuals.push(r);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn extend(&mut self, other: Verification) {
        self.residuals.extend(other.residuals);
        self.notes.extend(other.notes);
    }

    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.passed)
    }

    /// Largest residual value among the upper-bounded entries.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().filter(|r| !r.lower_bound).map(|r| r.value).fold(0.0, f64::max)
    }

    pub fn get(&self, label: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.label == label)
    }
}

/// Running maximum of `|value|` together with the point that attains it.
#[derive(Clone, Debug, Default)]
pub struct MaxTracker {
    pub value: f64,
    pub witness: Option<Point>,
}

impl MaxTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, value: f64, at: &Env) {
        let v = value.abs();
        // NaN always wins so that it is reported
        if self.witness.is_none() || v > self.value || v.is_nan() {
            self.value = v;
            self.witness = Some(at.bindings());
        }
    }

    pub fn observe_point(&mut self, value: f64, at: impl FnOnce() -> Point) {
        let v = value.abs();
        if self.witness.is_none() || v > self.value || v.is_nan() {
            self.value = v;
            self.witness = Some(at());
        }
    }

    pub fn at_most(self, label: impl Into<String>, tolerance: f64) -> Residual {
        Residual::at_most(label, self.value, tolerance, self.witness)
    }

    pub fn at_least(self, label: impl Into<String>, tolerance: f64) -> Residual {
        Residual::at_least(label, self.value, tolerance, self.witness)
    }
}

/// Maximum of `|e|` over every expression and point, located at its witness.
pub fn sweep<'a, I>(exprs: I, points: &[Env]) -> Result<MaxTracker, SampleError>
where
    I: IntoIterator<Item = &'a Expr>,
{
    let exprs: Vec<&Expr> = exprs.into_iter().collect();
    let mut worst = MaxTracker::new();
    for env in points {
        for e in &exprs {
            let v = e.eval(env).map_err(|source| SampleError { source, point: env.bindings() })?;
            worst.observe(v, env);
        }
    }
    Ok(worst)
}
