use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeomError, KForm};
use crate::expr::{Axis, ChartDomain, ScalarField};

/// Tensor-product sample grid over a chart.
///
/// Periodic axes sample `period * (j + off) / n`. Interval axes sample the
/// box shrunk by `margin * span` on each side at `(j + off) / (n - 1 + 2 off)`.
/// Region constraints `g <= 0` of the chart drop points with `g > -margin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub counts: [usize; 3],
    #[serde(default)]
    pub offsets: [f64; 3],
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    1e-3
}

impl Default for Grid {
    fn default() -> Self {
        Self::uniform(33)
    }
}

impl Grid {
    pub fn uniform(n: usize) -> Self {
        Self { counts: [n; 3], offsets: [0.0; 3], margin: default_margin() }
    }

    pub fn with_offsets(mut self, offsets: [f64; 3]) -> Self {
        self.offsets = offsets;
        self
    }

    fn axis_samples(&self, axis: &Axis, i: usize) -> Vec<f64> {
        let n = self.counts[i];
        let off = self.offsets[i];
        match *axis {
            Axis::Periodic { period } => (0..n).map(|j| period * (j as f64 + off) / n as f64).collect(),
            Axis::Interval { lo, hi } => {
                let m = self.margin * (hi - lo);
                let (a, b) = (lo + m, hi - m);
                let denom = n as f64 - 1.0 + 2.0 * off;
                (0..n).map(|j| a + (b - a) * (j as f64 + off) / denom).collect()
            }
        }
    }

    /// Sample points in deterministic x-major order.
    pub fn points(&self, chart: &ChartDomain) -> Result<Vec<[f64; 3]>, GeomError> {
        if self.counts.iter().any(|&n| n < 2) {
            return Err(GeomError::InvalidGrid("counts must be at least 2".into()));
        }
        let xs: Vec<Vec<f64>> = (0..3).map(|i| self.axis_samples(&chart.axes[i], i)).collect();
        let regions = chart
            .regions
            .iter()
            .map(|r| ScalarField::parse(r, chart, &BTreeMap::new()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::with_capacity(xs[0].len() * xs[1].len() * xs[2].len());
        for &x in &xs[0] {
            for &y in &xs[1] {
                for &z in &xs[2] {
                    let p = [x, y, z];
                    if inside_regions(&regions, p, self.margin)? {
                        out.push(p);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Evaluate `f` at every grid point in parallel; results in grid order.
    pub fn sweep<T, F>(&self, chart: &ChartDomain, f: F) -> Result<Vec<([f64; 3], T)>, GeomError>
    where
        T: Send,
        F: Fn([f64; 3]) -> Result<T, GeomError> + Sync,
    {
        let pts = self.points(chart)?;
        pts.into_par_iter().map(|p| f(p).map(|v| (p, v))).collect()
    }

    /// Sup of `f` over the grid with its first maximizer.
    pub fn sup<F>(&self, chart: &ChartDomain, f: F) -> Result<Extremum, GeomError>
    where
        F: Fn([f64; 3]) -> Result<f64, GeomError> + Sync,
    {
        let vals = self.sweep(chart, f)?;
        reduce(&vals, |a, b| a > b)
    }

    /// Inf of `f` over the grid with its first minimizer.
    pub fn inf<F>(&self, chart: &ChartDomain, f: F) -> Result<Extremum, GeomError>
    where
        F: Fn([f64; 3]) -> Result<f64, GeomError> + Sync,
    {
        let vals = self.sweep(chart, f)?;
        reduce(&vals, |a, b| a < b)
    }
}

pub(crate) fn inside_regions(regions: &[ScalarField], p: [f64; 3], margin: f64) -> Result<bool, GeomError> {
    for g in regions {
        if g.value(p)? > -margin {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub point: [f64; 3],
}

fn reduce(vals: &[([f64; 3], f64)], better: impl Fn(f64, f64) -> bool) -> Result<Extremum, GeomError> {
    let mut best: Option<Extremum> = None;
    for &(p, v) in vals {
        if !v.is_finite() {
            return Err(GeomError::NonFinite { point: p });
        }
        match best {
            Some(b) if !better(v, b.value) => {}
            _ => best = Some(Extremum { value: v, point: p }),
        }
    }
    best.ok_or_else(|| GeomError::InvalidGrid("no sample points inside the chart".into()))
}

/// Sup-norm of all components of `omega` over the grid.
pub fn grid_residual(omega: &KForm, grid: &Grid) -> Result<Extremum, GeomError> {
    if omega.comps().iter().all(ScalarField::is_zero) {
        let p = grid.points(omega.chart())?.first().copied().unwrap_or([0.0; 3]);
        return Ok(Extremum { value: 0.0, point: p });
    }
    grid.sup(omega.chart(), |p| {
        let mut m: f64 = 0.0;
        for v in omega.eval(p)? {
            if !v.is_finite() {
                return Err(GeomError::NonFinite { point: p });
            }
            m = m.max(v.abs());
        }
        Ok(m)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_samples_respect_margin() {
        let g = Grid::uniform(3);
        let c = ChartDomain::cube(0.0, 1.0);
        let pts = g.points(&c).unwrap();
        assert_eq!(pts.len(), 27);
        assert!((pts[0][0] - 1e-3).abs() < 1e-15);
        assert!((pts[26][2] - (1.0 - 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn periodic_samples_exclude_endpoint() {
        let c = ChartDomain::new(["a", "b", "c"], [Axis::Periodic { period: 2.0 }; 3]).unwrap();
        let pts = Grid::uniform(4).points(&c).unwrap();
        let xs: Vec<f64> = pts.iter().step_by(16).map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0, 1.5]);
    }

    #[test]
    fn regions_mask_points() {
        let c = ChartDomain::cube(-1.0, 1.0).with_region("x");
        let pts = Grid::uniform(5).points(&c).unwrap();
        assert!(pts.iter().all(|p| p[0] <= -1e-3));
        assert_eq!(pts.len(), 2 * 25);
    }

    #[test]
    fn too_small_grid() {
        let g = Grid { counts: [1, 4, 4], ..Grid::default() };
        assert!(g.points(&ChartDomain::cube(0.0, 1.0)).is_err());
    }
}
