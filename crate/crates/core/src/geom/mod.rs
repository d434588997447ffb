//! Exterior calculus on a 3D chart.
//!
//! Forms are stored by coordinate components: a 1-form as `(dx, dy, dz)`, a
//! 2-form as `(dy∧dz, dz∧dx, dx∧dy)` and a 3-form as the density of
//! `dx∧dy∧dz`. With that ordering 1- and 2-forms both behave like vectors:
//! `∧` of two 1-forms is the cross product, `d` is grad, curl and div, and
//! contracting a 2-form with `X` is `ω × X`.

mod grid;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use grid::{grid_residual, Extremum, Grid};

use crate::expr::{ChartDomain, ExprError, ScalarField};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GeomError {
    #[error("{op} is not defined for degree {degree}")]
    Degree { op: &'static str, degree: usize },
    #[error("volume density {value:e} is not positive at {point:?}")]
    NonPositiveDensity { point: [f64; 3], value: f64 },
    #[error("non-finite value at {point:?}")]
    NonFinite { point: [f64; 3] },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

fn binom3(k: usize) -> usize {
    [1, 3, 3, 1][k]
}

/// A differential form of degree 0..=3 in coordinate components.
#[derive(Clone, Debug)]
pub struct KForm {
    degree: usize,
    comps: Vec<ScalarField>,
    chart: Arc<ChartDomain>,
}

impl KForm {
    pub fn new(degree: usize, comps: Vec<ScalarField>, chart: Arc<ChartDomain>) -> Self {
        assert!(degree <= 3 && comps.len() == binom3(degree), "component count must be C(3, degree)");
        Self { degree, comps, chart }
    }

    pub fn parse(
        degree: usize,
        srcs: &[&str],
        chart: Arc<ChartDomain>,
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, ExprError> {
        let comps = srcs
            .iter()
            .map(|s| ScalarField::parse(s, &chart, params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(degree, comps, chart))
    }

    pub fn zero(degree: usize, chart: Arc<ChartDomain>) -> Self {
        Self::new(degree, vec![ScalarField::zero(); binom3(degree)], chart)
    }

    pub fn scalar(f: ScalarField, chart: Arc<ChartDomain>) -> Self {
        Self::new(0, vec![f], chart)
    }

    /// `ρ dx∧dy∧dz`.
    pub fn volume(density: ScalarField, chart: Arc<ChartDomain>) -> Self {
        Self::new(3, vec![density], chart)
    }

    pub fn standard_volume(chart: Arc<ChartDomain>) -> Self {
        Self::volume(ScalarField::constant(1.0), chart)
    }

    /// The coordinate 1-form `dx_axis`.
    pub fn coordinate(axis: usize, chart: Arc<ChartDomain>) -> Self {
        let mut comps = vec![ScalarField::zero(); 3];
        comps[axis] = ScalarField::constant(1.0);
        Self::new(1, comps, chart)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn comps(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn chart(&self) -> &ChartDomain {
        &self.chart
    }

    pub fn chart_arc(&self) -> &Arc<ChartDomain> {
        &self.chart
    }

    /// Density of a top form.
    pub fn density(&self) -> &ScalarField {
        assert_eq!(self.degree, 3, "density of a non-top form");
        &self.comps[0]
    }

    pub fn eval(&self, p: [f64; 3]) -> Result<Vec<f64>, ExprError> {
        ScalarField::values_at(&self.comps, p)
    }

    pub fn eval3(&self, p: [f64; 3]) -> Result<[f64; 3], ExprError> {
        assert!(self.comps.len() == 3);
        let v = ScalarField::values_at(&self.comps, p)?;
        Ok([v[0], v[1], v[2]])
    }

    fn map(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        Self::new(self.degree, self.comps.iter().map(f).collect(), self.chart.clone())
    }

    fn zip(&self, o: &KForm, f: impl Fn(&ScalarField, &ScalarField) -> ScalarField) -> Self {
        assert_eq!(self.degree, o.degree, "degree mismatch");
        let comps = self.comps.iter().zip(&o.comps).map(|(a, b)| f(a, b)).collect();
        Self::new(self.degree, comps, self.chart.clone())
    }

    pub fn add(&self, o: &KForm) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &KForm) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, f: &ScalarField) -> Self {
        self.map(|c| c * f)
    }

    pub fn scale_const(&self, c: f64) -> Self {
        self.map(|x| x * c)
    }

    pub fn div(&self, f: &ScalarField) -> Self {
        self.map(|c| c / f)
    }

    fn as3(&self) -> [ScalarField; 3] {
        [self.comps[0].clone(), self.comps[1].clone(), self.comps[2].clone()]
    }
}

/// A vector field in coordinate components.
#[derive(Clone, Debug)]
pub struct VecField {
    comps: [ScalarField; 3],
    chart: Arc<ChartDomain>,
}

impl VecField {
    pub fn new(comps: [ScalarField; 3], chart: Arc<ChartDomain>) -> Self {
        Self { comps, chart }
    }

    pub fn parse(srcs: [&str; 3], chart: Arc<ChartDomain>, params: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        let c = |s: &str| ScalarField::parse(s, &chart, params);
        Ok(Self::new([c(srcs[0])?, c(srcs[1])?, c(srcs[2])?], chart.clone()))
    }

    pub fn zero(chart: Arc<ChartDomain>) -> Self {
        Self::new([ScalarField::zero(), ScalarField::zero(), ScalarField::zero()], chart)
    }

    /// The coordinate field `∂_axis`.
    pub fn coordinate(axis: usize, chart: Arc<ChartDomain>) -> Self {
        let mut v = Self::zero(chart);
        v.comps[axis] = ScalarField::constant(1.0);
        v
    }

    pub fn comps(&self) -> &[ScalarField; 3] {
        &self.comps
    }

    pub fn chart(&self) -> &ChartDomain {
        &self.chart
    }

    pub fn chart_arc(&self) -> &Arc<ChartDomain> {
        &self.chart
    }

    pub fn eval(&self, p: [f64; 3]) -> Result<[f64; 3], ExprError> {
        let v = ScalarField::values_at(&self.comps, p)?;
        Ok([v[0], v[1], v[2]])
    }

    pub fn scale(&self, f: &ScalarField) -> Self {
        Self::new(self.comps.clone().map(|c| c * f), self.chart.clone())
    }

    pub fn div(&self, f: &ScalarField) -> Self {
        Self::new(self.comps.clone().map(|c| c / f), self.chart.clone())
    }

    pub fn add(&self, o: &VecField) -> Self {
        let [a, b, c] = &self.comps;
        let [x, y, z] = &o.comps;
        Self::new([a + x, b + y, c + z], self.chart.clone())
    }

    pub fn sub(&self, o: &VecField) -> Self {
        let [a, b, c] = &self.comps;
        let [x, y, z] = &o.comps;
        Self::new([a - x, b - y, c - z], self.chart.clone())
    }

    /// Components as a 1-form (for grid residuals).
    pub fn as_form(&self) -> KForm {
        KForm::new(1, self.comps.to_vec(), self.chart.clone())
    }
}

fn cross(a: &[ScalarField; 3], b: &[ScalarField; 3]) -> [ScalarField; 3] {
    [
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

fn dot(a: &[ScalarField; 3], b: &[ScalarField; 3]) -> ScalarField {
    ScalarField::sum(vec![&a[0] * &b[0], &a[1] * &b[1], &a[2] * &b[2]])
}

pub fn d(omega: &KForm) -> Result<KForm, GeomError> {
    let c = &omega.comps;
    let chart = omega.chart.clone();
    Ok(match omega.degree {
        0 => KForm::new(1, (0..3).map(|i| c[0].partial(i)).collect(), chart),
        1 => KForm::new(
            2,
            vec![
                c[2].partial(1) - c[1].partial(2),
                c[0].partial(2) - c[2].partial(0),
                c[1].partial(0) - c[0].partial(1),
            ],
            chart,
        ),
        2 => KForm::new(
            3,
            vec![ScalarField::sum(vec![c[0].partial(0), c[1].partial(1), c[2].partial(2)])],
            chart,
        ),
        k => return Err(GeomError::Degree { op: "d", degree: k }),
    })
}

pub fn wedge(a: &KForm, b: &KForm) -> Result<KForm, GeomError> {
    let chart = a.chart.clone();
    match (a.degree, b.degree) {
        (0, _) => Ok(b.scale(&a.comps[0])),
        (_, 0) => Ok(a.scale(&b.comps[0])),
        (1, 1) => Ok(KForm::new(2, cross(&a.as3(), &b.as3()).to_vec(), chart)),
        (1, 2) | (2, 1) => Ok(KForm::new(3, vec![dot(&a.as3(), &b.as3())], chart)),
        (p, q) => Err(GeomError::Degree { op: "wedge", degree: p + q }),
    }
}

pub fn interior(x: &VecField, omega: &KForm) -> Result<KForm, GeomError> {
    let chart = omega.chart.clone();
    Ok(match omega.degree {
        1 => KForm::scalar(dot(&x.comps, &omega.as3()), chart),
        2 => KForm::new(1, cross(&omega.as3(), &x.comps).to_vec(), chart),
        3 => KForm::new(2, x.comps.iter().map(|c| c * &omega.comps[0]).collect(), chart),
        k => return Err(GeomError::Degree { op: "interior", degree: k }),
    })
}

/// Cartan's formula `L_X ω = d ι_X ω + ι_X dω`.
pub fn lie_derivative(x: &VecField, omega: &KForm) -> Result<KForm, GeomError> {
    match omega.degree {
        0 => interior(x, &d(omega)?),
        3 => d(&interior(x, omega)?),
        _ => Ok(d(&interior(x, omega)?)?.add(&interior(x, &d(omega)?)?)),
    }
}

pub fn bracket(x: &VecField, y: &VecField) -> VecField {
    let comps = std::array::from_fn(|i| {
        let mut terms = Vec::with_capacity(6);
        for j in 0..3 {
            terms.push(&x.comps[j] * &y.comps[i].partial(j));
            terms.push(-(&y.comps[j] * &x.comps[i].partial(j)));
        }
        ScalarField::sum(terms)
    });
    VecField::new(comps, x.chart.clone())
}

/// `div_μ X = (1/ρ) Σ ∂_i(ρ X^i)` for `μ = ρ dx∧dy∧dz`.
pub fn divergence(x: &VecField, mu: &KForm) -> Result<ScalarField, GeomError> {
    if mu.degree != 3 {
        return Err(GeomError::Degree { op: "divergence", degree: mu.degree });
    }
    let rho = &mu.comps[0];
    let flux = d(&interior(x, mu)?)?;
    Ok(&flux.comps[0] / rho)
}

/// Solve `ι_u μ = ω` for `u`. The density must be positive on `grid`.
pub fn vector_from_two_form(omega: &KForm, mu: &KForm, grid: &Grid) -> Result<VecField, GeomError> {
    if omega.degree != 2 {
        return Err(GeomError::Degree { op: "vector_from_two_form", degree: omega.degree });
    }
    if mu.degree != 3 {
        return Err(GeomError::Degree { op: "vector_from_two_form", degree: mu.degree });
    }
    check_density(mu, grid)?;
    let rho = &mu.comps[0];
    let comps = omega.as3().map(|c| c / rho);
    Ok(VecField::new(comps, omega.chart.clone()))
}

pub fn check_density(mu: &KForm, grid: &Grid) -> Result<Extremum, GeomError> {
    let rho = mu.density();
    let lo = grid.inf(&mu.chart, |p| Ok(rho.value(p)?))?;
    if lo.value <= 0.0 {
        return Err(GeomError::NonPositiveDensity { point: lo.point, value: lo.value });
    }
    Ok(lo)
}

/// Pointwise `ω(X)` for a 1-form.
pub fn apply(alpha: &KForm, x: &VecField) -> Result<ScalarField, GeomError> {
    if alpha.degree != 1 {
        return Err(GeomError::Degree { op: "apply", degree: alpha.degree });
    }
    Ok(dot(&alpha.as3(), &x.comps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Axis;
    use std::f64::consts::TAU;

    fn none() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn torus() -> Arc<ChartDomain> {
        Arc::new(ChartDomain::new(["x", "y", "z"], [Axis::Periodic { period: TAU }; 3]).unwrap())
    }

    fn reeb_chart() -> Arc<ChartDomain> {
        let r = 2f64.sqrt();
        Arc::new(
            ChartDomain::new(
                ["x", "y", "phi"],
                [Axis::Interval { lo: -r, hi: r }, Axis::Interval { lo: -r, hi: r }, Axis::Periodic { period: 1.0 }],
            )
            .unwrap()
            .with_region("sqrt(x^2+y^2) - sqrt(2)"),
        )
    }

    const H: &str = "(x^2+y^2-1)*(1+y^2*(x^2+y^2-2))";

    fn reeb_b(chart: &Arc<ChartDomain>) -> VecField {
        let h = ScalarField::parse(H, chart, &none()).unwrap();
        let f = ScalarField::parse("y + x^2 + y^2 - 1", chart, &none()).unwrap();
        VecField::new([-h.partial(1), h.partial(0), f], chart.clone())
    }

    fn small() -> Grid {
        Grid::uniform(9)
    }

    #[test]
    fn exterior_derivative_of_contact_form() {
        let c = torus();
        let eta = KForm::parse(1, &["sin(z)", "cos(z)", "0"], c.clone(), &none()).unwrap();
        let de = d(&eta).unwrap();
        let v = de.eval3([0.3, 0.1, 0.0]).unwrap();
        assert_eq!(v, [0.0, 1.0, 0.0]);
        // oracle: dη = sin z dy∧dz + cos z dz∧dx
        let z = 0.9;
        let v = de.eval3([0.0, 0.0, z]).unwrap();
        assert!((v[0] - z.sin()).abs() < 1e-15 && (v[1] - z.cos()).abs() < 1e-15 && v[2] == 0.0);
    }

    #[test]
    fn d_squared_vanishes() {
        let c = Arc::new(ChartDomain::cube(-1.5, 1.5));
        let psi = KForm::scalar(ScalarField::parse("y^2/2 - x^2*(1-x^2)", &c, &none()).unwrap(), c.clone());
        let ddpsi = d(&d(&psi).unwrap()).unwrap();
        assert!(grid_residual(&ddpsi, &small()).unwrap().value < 1e-12);
        let zero = d(&KForm::scalar(ScalarField::constant(2.0), c.clone())).unwrap();
        assert!(zero.comps().iter().all(ScalarField::is_zero));
        assert!(matches!(d(&KForm::standard_volume(c)), Err(GeomError::Degree { .. })));
    }

    #[test]
    fn wedge_table() {
        let c = torus();
        let dz = KForm::coordinate(2, c.clone());
        let eta = KForm::parse(1, &["sin(z)", "cos(z)", "0"], c.clone(), &none()).unwrap();
        let w = wedge(&dz, &eta).unwrap();
        let z = 0.4;
        let v = w.eval3([0.0, 0.0, z]).unwrap();
        assert!((v[0] + z.cos()).abs() < 1e-15 && (v[1] - z.sin()).abs() < 1e-15 && v[2] == 0.0);
        // antisymmetry oracle
        let w2 = wedge(&eta, &dz).unwrap();
        assert!(grid_residual(&w.add(&w2), &small()).unwrap().value < 1e-15);
        assert!(grid_residual(&wedge(&eta, &eta).unwrap(), &small()).unwrap().value < 1e-13);
        // dx∧dy∧dz = 1
        let dx = KForm::coordinate(0, c.clone());
        let dy = KForm::coordinate(1, c.clone());
        let vol = wedge(&wedge(&dx, &dy).unwrap(), &dz).unwrap();
        assert_eq!(vol.eval([0.0; 3]).unwrap(), vec![1.0]);
        let f = ScalarField::parse("x+2", &c, &none()).unwrap();
        let fm = wedge(&KForm::scalar(f, c.clone()), &KForm::standard_volume(c.clone())).unwrap();
        assert_eq!(fm.eval([1.0, 0.0, 0.0]).unwrap(), vec![3.0]);
        assert!(wedge(&w, &w).is_err());
    }

    #[test]
    fn flux_form_of_twist_field() {
        let c = torus();
        let b = VecField::parse(["sin(z)", "cos(z)", "0"], c.clone(), &none()).unwrap();
        let beta = interior(&b, &KForm::standard_volume(c.clone())).unwrap();
        let z = 1.1;
        let v = beta.eval3([0.0, 0.0, z]).unwrap();
        assert_eq!(v, [z.sin(), z.cos(), 0.0]);
        let bb = interior(&b, &beta).unwrap();
        assert!(grid_residual(&bb, &small()).unwrap().value < 1e-13);
    }

    #[test]
    fn reeb_axioms_and_symmetry() {
        let c = reeb_chart();
        let b = reeb_b(&c);
        let mu = KForm::standard_volume(c.clone());
        let beta = interior(&b, &mu).unwrap();
        let dphi = VecField::coordinate(2, c.clone());
        let nu = interior(&dphi, &beta).unwrap();
        let dh = d(&KForm::scalar(ScalarField::parse(H, &c, &none()).unwrap(), c.clone())).unwrap();
        assert!(grid_residual(&nu.sub(&dh), &small()).unwrap().value < 1e-10);
        assert!(grid_residual(&lie_derivative(&b, &mu).unwrap(), &small()).unwrap().value < 1e-11);
        assert!(grid_residual(&d(&beta).unwrap(), &small()).unwrap().value < 1e-11);
        assert!(grid_residual(&lie_derivative(&dphi, &dh).unwrap(), &small()).unwrap().value < 1e-12);
        assert!(grid_residual(&bracket(&dphi, &b).as_form(), &small()).unwrap().value < 1e-11);
        let div = divergence(&b, &mu).unwrap();
        assert!(grid_residual(&KForm::scalar(div, c.clone()), &small()).unwrap().value < 1e-11);
    }

    #[test]
    fn divergence_examples() {
        let c = Arc::new(ChartDomain::cube(-1.0, 1.0));
        let mu = KForm::standard_volume(c.clone());
        let dx = VecField::coordinate(0, c.clone());
        assert!(divergence(&dx, &mu).unwrap().is_zero());
        let xdx = VecField::parse(["x", "0", "0"], c.clone(), &none()).unwrap();
        let dv = divergence(&xdx, &mu).unwrap();
        assert_eq!(dv.value([0.3, 0.2, 0.1]).unwrap(), 1.0);
        // nonuniform density: div_{ρ} X = div X + X·∇ρ/ρ
        let rho = KForm::volume(ScalarField::parse("2 + x*y", &c, &none()).unwrap(), c.clone());
        let p = [0.5, -0.3, 0.2];
        let got = divergence(&xdx, &rho).unwrap().value(p).unwrap();
        let want = 1.0 + 0.5 * (-0.3) / (2.0 + 0.5 * -0.3);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn two_form_solve_round_trip() {
        let c = torus();
        let mu = KForm::volume(ScalarField::parse("2 + sin(x)*cos(y)", &c, &none()).unwrap(), c.clone());
        let x = VecField::parse(["cos(z)*y", "exp(sin(x))", "sin(y+z)"], c.clone(), &none()).unwrap();
        let back = vector_from_two_form(&interior(&x, &mu).unwrap(), &mu, &small()).unwrap();
        assert!(grid_residual(&back.sub(&x).as_form(), &small()).unwrap().value < 1e-12);
        let zero = vector_from_two_form(&KForm::zero(2, c.clone()), &mu, &small()).unwrap();
        assert!(zero.comps().iter().all(ScalarField::is_zero));
        let bad = KForm::volume(ScalarField::parse("sin(x)", &c, &none()).unwrap(), c.clone());
        assert!(matches!(
            vector_from_two_form(&KForm::zero(2, c.clone()), &bad, &small()),
            Err(GeomError::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn symmetry_of_twist_from_formula() {
        let c = torus();
        let nu = KForm::coordinate(2, c.clone());
        let eta = KForm::parse(1, &["sin(z)", "cos(z)", "0"], c.clone(), &none()).unwrap();
        let u = vector_from_two_form(&wedge(&nu, &eta).unwrap(), &KForm::standard_volume(c.clone()), &small()).unwrap();
        let z = 0.77;
        let v = u.eval([0.0, 0.0, z]).unwrap();
        assert!((v[0] + z.cos()).abs() < 1e-15 && (v[1] - z.sin()).abs() < 1e-15 && v[2] == 0.0);
    }

    #[test]
    fn lie_of_zero_field() {
        let c = torus();
        let eta = KForm::parse(1, &["sin(z)", "cos(z)", "x"], c.clone(), &none()).unwrap();
        let l = lie_derivative(&VecField::zero(c), &eta).unwrap();
        assert!(l.comps().iter().all(ScalarField::is_zero));
    }

    /// Leibniz rule on a pair of 1-forms, in the vector picture
    /// `div(a × b) = b·curl a − a·curl b`.
    #[test]
    fn leibniz_rule() {
        let c = torus();
        let a = KForm::parse(1, &["sin(y)*z", "cos(x+z)", "x*y"], c.clone(), &none()).unwrap();
        let b = KForm::parse(1, &["exp(cos(z))", "y", "sin(x)*sin(y)"], c.clone(), &none()).unwrap();
        let lhs = d(&wedge(&a, &b).unwrap()).unwrap();
        let rhs = wedge(&d(&a).unwrap(), &b).unwrap().sub(&wedge(&a, &d(&b).unwrap()).unwrap());
        assert!(grid_residual(&lhs.sub(&rhs), &small()).unwrap().value < 1e-10);
    }
}
