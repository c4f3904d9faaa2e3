use std::collections::BTreeMap;
use std::sync::Arc;

use super::Var;

/// Variable bindings for evaluation.
///
/// Coordinates are stored positionally; `NaN` marks an unbound slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env {
    x: Vec<f64>,
    y: Vec<f64>,
    u: Option<f64>,
    params: BTreeMap<Arc<str>, f64>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_x(mut self, x: Vec<f64>) -> Self {
        self.x = x;
        self
    }

    pub fn with_y(mut self, y: Vec<f64>) -> Self {
        self.y = y;
        self
    }

    pub fn with_u(mut self, u: f64) -> Self {
        self.u = Some(u);
        self
    }

    pub fn at(x: &[f64], y: &[f64]) -> Self {
        Env::new().with_x(x.to_vec()).with_y(y.to_vec())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn set_x(&mut self, x: &[f64]) {
        self.x.clear();
        self.x.extend_from_slice(x);
    }

    pub fn set_y(&mut self, y: &[f64]) {
        self.y.clear();
        self.y.extend_from_slice(y);
    }

    pub fn set_u(&mut self, u: f64) {
        self.u = Some(u);
    }

    pub fn set(&mut self, var: &Var, value: f64) {
        fn put(slots: &mut Vec<f64>, i: usize, v: f64) {
            if slots.len() <= i {
                slots.resize(i + 1, f64::NAN);
            }
            slots[i] = v;
        }
        match var {
            Var::X(i) => put(&mut self.x, *i, value),
            Var::Y(i) => put(&mut self.y, *i, value),
            Var::U => self.u = Some(value),
            Var::Param(name) => {
                self.params.insert(name.clone(), value);
            }
        }
    }

    /// Binds by printed name (`x1`, `y2`, `u`, or a parameter).
    pub fn bind(mut self, name: &str, value: f64) -> Self {
        if let Some(var) = Var::from_name(name) {
            self.set(&var, value);
        }
        self
    }

    pub fn get(&self, var: &Var) -> Option<f64> {
        let v = match var {
            Var::X(i) => self.x.get(*i).copied(),
            Var::Y(i) => self.y.get(*i).copied(),
            Var::U => self.u,
            Var::Param(name) => self.params.get(name).copied(),
        }?;
        (!v.is_nan()).then_some(v)
    }

    /// The bound values as `name -> value`, used for witness reporting.
    pub fn bindings(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (i, v) in self.x.iter().enumerate().filter(|(_, v)| !v.is_nan()) {
            out.insert(Var::X(i).to_string(), *v);
        }
        for (i, v) in self.y.iter().enumerate().filter(|(_, v)| !v.is_nan()) {
            out.insert(Var::Y(i).to_string(), *v);
        }
        if let Some(u) = self.u {
            out.insert("u".to_string(), u);
        }
        for (k, v) in &self.params {
            out.insert(k.to_string(), *v);
        }
        out
    }
}
