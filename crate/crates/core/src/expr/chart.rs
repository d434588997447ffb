use serde::{Deserialize, Serialize};

use super::ExprError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Axis {
    Periodic { period: f64 },
    Interval { lo: f64, hi: f64 },
}

impl Axis {
    pub fn span(&self) -> f64 {
        match *self {
            Axis::Periodic { period } => period,
            Axis::Interval { lo, hi } => hi - lo,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            Axis::Periodic { period } => Some(period),
            Axis::Interval { .. } => None,
        }
    }
}

/// A coordinate chart: three named axes, each periodic or a closed interval,
/// optionally cut down by region constraints `g(x, y, z) <= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartDomain {
    pub names: [String; 3],
    pub axes: [Axis; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<String>,
    /// Whether the interval faces are part of the manifold boundary (and so
    /// subject to tangency checks) rather than artificial chart cuts.
    #[serde(default)]
    pub faces_are_boundary: bool,
}

impl ChartDomain {
    pub fn new(names: [&str; 3], axes: [Axis; 3]) -> Result<Self, ExprError> {
        let chart = Self {
            names: names.map(str::to_owned),
            axes,
            regions: Vec::new(),
            faces_are_boundary: false,
        };
        chart.check()?;
        Ok(chart)
    }

    /// Cartesian box with standard names.
    pub fn cube(lo: f64, hi: f64) -> Self {
        let a = Axis::Interval { lo, hi };
        Self::new(["x", "y", "z"], [a, a, a]).expect("valid box")
    }

    pub fn with_region(mut self, constraint: &str) -> Self {
        self.regions.push(constraint.to_owned());
        self
    }

    pub fn with_boundary_faces(mut self) -> Self {
        self.faces_are_boundary = true;
        self
    }

    pub fn check(&self) -> Result<(), ExprError> {
        for (i, axis) in self.axes.iter().enumerate() {
            let ok = match *axis {
                Axis::Periodic { period } => period > 0.0 && period.is_finite(),
                Axis::Interval { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            };
            if !ok {
                return Err(ExprError::InvalidChart(format!("axis {} ({})", i, self.names[i])));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for n in &self.names {
            if !seen.insert(n) || n.is_empty() {
                return Err(ExprError::InvalidChart(format!("duplicate or empty name {n:?}")));
            }
        }
        Ok(())
    }

    pub fn periods(&self) -> [Option<f64>; 3] {
        [self.axes[0].period(), self.axes[1].period(), self.axes[2].period()]
    }

    pub fn axis_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Reduce periodic coordinates to `[0, period)`.
    pub fn reduce(&self, p: [f64; 3]) -> [f64; 3] {
        reduce_with(&self.periods(), p)
    }

    /// Box membership with a margin expressed as a fraction of each span.
    /// Region constraints are not consulted here; see [`crate::geom::Grid`].
    pub fn in_box(&self, p: [f64; 3], margin: f64) -> bool {
        self.axes.iter().zip(p).all(|(axis, x)| match *axis {
            Axis::Periodic { .. } => x.is_finite(),
            Axis::Interval { lo, hi } => {
                let m = margin * (hi - lo);
                x >= lo + m && x <= hi - m
            }
        })
    }
}

#[inline]
pub(crate) fn reduce_with(periods: &[Option<f64>; 3], mut p: [f64; 3]) -> [f64; 3] {
    for (x, per) in p.iter_mut().zip(periods) {
        if let Some(t) = per {
            let r = x.rem_euclid(*t);
            // rem_euclid may round up to exactly t
            *x = if r >= *t { 0.0 } else { r };
        }
    }
    p
}
