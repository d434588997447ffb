//! Fourier numerics on the 2-torus `[0,1)²` and the circle `[0,1)`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_K: usize = 64;
pub const DEFAULT_DELTA: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TorusError {
    #[error("small divisor {value:e} at k = {k:?}")]
    SmallDivisor { k: Vec<i64>, value: f64 },
    #[error("circle-map lift is not monotone near sample {0}")]
    NonMonotoneLift(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Truncated Fourier series `Σ c_k e^{2πi k·x}` over `k ∈ [-K, K]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries2 {
    #[serde(rename = "K")]
    pub k: usize,
    /// Row-major in `(k1, k2)`, both running from `-K` to `K`.
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl FourierSeries2 {
    pub fn zeros(k: usize) -> Self {
        let n = (2 * k + 1) * (2 * k + 1);
        Self { k, re: vec![0.0; n], im: vec![0.0; n] }
    }

    fn width(&self) -> usize {
        2 * self.k + 1
    }

    fn index(&self, k1: i64, k2: i64) -> Option<usize> {
        let kk = self.k as i64;
        if k1.abs() > kk || k2.abs() > kk {
            return None;
        }
        Some((k1 + kk) as usize * self.width() + (k2 + kk) as usize)
    }

    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.index(k1, k2).map_or(Complex64::new(0.0, 0.0), |i| Complex64::new(self.re[i], self.im[i]))
    }

    pub fn set(&mut self, k1: i64, k2: i64, c: Complex64) {
        let i = self.index(k1, k2).expect("mode outside truncation");
        self.re[i] = c.re;
        self.im[i] = c.im;
    }

    /// Iterate `(k1, k2, c_k)` over all modes.
    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        let kk = self.k as i64;
        (-kk..=kk).flat_map(move |a| (-kk..=kk).map(move |b| (a, b, self.coeff(a, b))))
    }

    /// Coefficients from `n × n` samples `v[i*n + j] = f(i/n, j/n)` by a
    /// separable DFT. Requires `n ≥ 2K + 1`.
    pub fn from_samples(values: &[f64], n: usize, k: usize) -> Result<Self, TorusError> {
        if values.len() != n * n {
            return Err(TorusError::InvalidInput(format!("expected {} samples, got {}", n * n, values.len())));
        }
        if n < 2 * k + 1 {
            return Err(TorusError::InvalidInput(format!("{n} samples per axis cannot resolve K = {k}")));
        }
        let w = 2 * k + 1;
        let tw = twiddles(n, k, -1.0);
        // transform along the second axis
        let mut partial = vec![Complex64::new(0.0, 0.0); n * w];
        for i in 0..n {
            for (m, row) in tw.chunks(n).enumerate() {
                partial[i * w + m] = (0..n).map(|j| row[j] * values[i * n + j]).sum();
            }
        }
        let mut out = Self::zeros(k);
        let norm = 1.0 / (n * n) as f64;
        for (a, row) in tw.chunks(n).enumerate() {
            for b in 0..w {
                let c: Complex64 = (0..n).map(|i| row[i] * partial[i * w + b]).sum();
                out.re[a * w + b] = c.re * norm;
                out.im[a * w + b] = c.im * norm;
            }
        }
        Ok(out)
    }

    /// Real part of the series on the `n × n` grid, row-major.
    pub fn to_samples(&self, n: usize) -> Vec<f64> {
        let w = self.width();
        let tw = twiddles(n, self.k, 1.0);
        // tw[m*n + i] = e^{2πi (m-K) i / n}
        let mut partial = vec![Complex64::new(0.0, 0.0); w * n];
        for a in 0..w {
            for j in 0..n {
                partial[a * n + j] = (0..w)
                    .map(|b| Complex64::new(self.re[a * w + b], self.im[a * w + b]) * tw[b * n + j])
                    .sum();
            }
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..w).map(|a| (tw[a * n + i] * partial[a * n + j]).re).sum();
            }
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.modes().map(|(a, b, c)| (c * Complex64::cis(TAU * (a as f64 * x + b as f64 * y))).re).sum()
    }

    /// Largest violation of `c_{-k} = conj(c_k)`.
    pub fn hermitian_defect(&self) -> f64 {
        self.modes().map(|(a, b, c)| (self.coeff(-a, -b) - c.conj()).norm()).fold(0.0, f64::max)
    }

    /// `X(g) = ω·∇g`, coefficientwise `2πi k·ω ĝ_k`.
    pub fn directional_derivative(&self, omega: [f64; 2]) -> Self {
        let mut out = Self::zeros(self.k);
        for (a, b, c) in self.modes() {
            out.set(a, b, c * Complex64::new(0.0, TAU * (a as f64 * omega[0] + b as f64 * omega[1])));
        }
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.k, o.k, "truncation orders differ");
        let mut out = self.clone();
        for i in 0..out.re.len() {
            out.re[i] += o.re[i];
            out.im[i] += o.im[i];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }
}

/// `tw[m*n + i] = e^{sign·2πi (m-K) i / n}` for `m ∈ [0, 2K]`.
fn twiddles(n: usize, k: usize, sign: f64) -> Vec<Complex64> {
    let w = 2 * k + 1;
    let mut tw = Vec::with_capacity(w * n);
    for m in 0..w {
        let f = m as i64 - k as i64;
        for i in 0..n {
            let phase = (f * i as i64).rem_euclid(n as i64) as f64 / n as f64;
            tw.push(Complex64::cis(sign * TAU * phase));
        }
    }
    tw
}

/// Frequency vector with finite-`K` Diophantine diagnostics at `τ = 1, 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub omega: [f64; 2],
    pub k: usize,
    pub margin_tau1: f64,
    pub margin_tau2: f64,
}

impl FrequencyVector {
    pub fn new(omega: [f64; 2], k: usize) -> Self {
        Self {
            omega,
            k,
            margin_tau1: diophantine_margin(omega, k, 1.0),
            margin_tau2: diophantine_margin(omega, k, 2.0),
        }
    }
}

/// `min_{0<|k|_∞≤K} |k·ω| |k|^τ` with the Euclidean `|k|` as weight.
pub fn diophantine_margin(omega: [f64; 2], k: usize, tau: f64) -> f64 {
    assert!(k >= 1, "K must be at least 1");
    let kk = k as i64;
    let mut m = f64::INFINITY;
    for a in -kk..=kk {
        for b in -kk..=kk {
            if a == 0 && b == 0 {
                continue;
            }
            let (af, bf) = (a as f64, b as f64);
            let v = (af * omega[0] + bf * omega[1]).abs() * (af * af + bf * bf).sqrt().powf(tau);
            m = m.min(v);
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohomologicalSolution {
    pub g: FourierSeries2,
    pub c: f64,
    /// `‖X(g) − (h − c)‖∞` on a `(2K+2)²` grid.
    pub residual: f64,
}

/// Solve `X(g) = h − c` for `X = ω·∇` on the torus, with gauge `ĝ_0 = 0`.
pub fn solve_cohomological(omega: &FrequencyVector, h: &FourierSeries2, delta: f64) -> Result<CohomologicalSolution, TorusError> {
    if !h.is_finite() {
        return Err(TorusError::InvalidInput("non-finite coefficients".into()));
    }
    let mut g = FourierSeries2::zeros(h.k);
    for (a, b, c) in h.modes() {
        if a == 0 && b == 0 {
            continue;
        }
        let kw = a as f64 * omega.omega[0] + b as f64 * omega.omega[1];
        if kw.abs() < delta {
            return Err(TorusError::SmallDivisor { k: vec![a, b], value: kw.abs() });
        }
        g.set(a, b, c / Complex64::new(0.0, TAU * kw));
    }
    let c = h.coeff(0, 0).re;
    let mut diff = g.directional_derivative(omega.omega);
    let mut neg_h = h.clone();
    neg_h.re.iter_mut().chain(neg_h.im.iter_mut()).for_each(|v| *v = -*v);
    diff = diff.add(&neg_h);
    let dc = diff.coeff(0, 0);
    diff.set(0, 0, dc + c);
    let n = 2 * h.k + 2;
    let residual = diff.to_samples(n).into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(CohomologicalSolution { g, c, residual })
}

/// Straightening `θ* = θ + h(θ)` of a circle map with `h` a real
/// trigonometric polynomial of degree `K` and no constant term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleConjugacy {
    pub rho: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    /// `max |θ*(F(θ)) − θ*(θ) − ρ|` over the samples.
    pub residual: f64,
}

impl CircleConjugacy {
    pub fn h(&self, theta: f64) -> f64 {
        trig(&self.cos, &self.sin, theta)
    }

    pub fn straighten(&self, theta: f64) -> f64 {
        theta + self.h(theta)
    }
}

fn trig(a: &[f64], b: &[f64], t: f64) -> f64 {
    a.iter().zip(b).enumerate().map(|(i, (ca, sb))| {
        let w = TAU * (i + 1) as f64 * t;
        ca * w.cos() + sb * w.sin()
    }).sum()
}

/// Fit `h` so that `θ + h(θ)` conjugates the sampled lift `F` to rotation by
/// `ρ`: least squares on `F(θ) + h(F(θ)) − θ − h(θ) = ρ`, which is linear in
/// the coefficients of `h`. Samples are `(θ, F(θ))` pairs in turns.
pub fn conjugate_circle_map(samples: &[[f64; 2]], rho: f64, k: usize, delta: f64) -> Result<CircleConjugacy, TorusError> {
    if samples.len() < 2 * k + 1 {
        return Err(TorusError::InvalidInput(format!("{} samples cannot fit {} modes", samples.len(), 2 * k)));
    }
    for m in 1..=k {
        let v = (Complex64::cis(TAU * m as f64 * rho) - 1.0).norm();
        if v < delta {
            return Err(TorusError::SmallDivisor { k: vec![m as i64], value: v });
        }
    }
    check_monotone(samples)?;
    let n = samples.len();
    let mut a = DMatrix::<f64>::zeros(n, 2 * k);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, &[t, f]) in samples.iter().enumerate() {
        for m in 0..k {
            let w = TAU * (m + 1) as f64;
            a[(i, m)] = (w * f).cos() - (w * t).cos();
            a[(i, k + m)] = (w * f).sin() - (w * t).sin();
        }
        rhs[i] = rho + t - f;
    }
    let sol = a
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| TorusError::InvalidInput(e.to_owned()))?;
    let cos: Vec<f64> = sol.rows(0, k).iter().copied().collect();
    let sin: Vec<f64> = sol.rows(k, k).iter().copied().collect();
    let residual = samples
        .iter()
        .map(|&[t, f]| (f + trig(&cos, &sin, f) - t - trig(&cos, &sin, t) - rho).abs())
        .fold(0.0, f64::max);
    Ok(CircleConjugacy { rho, cos, sin, residual })
}

/// A degree-1 lift is increasing in `θ`: after reducing each `θ` to `[0,1)`
/// with the same integer shift applied to `F(θ)`, the pairs sorted by `θ`
/// have increasing `F`, and the last stays below the first plus one.
fn check_monotone(samples: &[[f64; 2]]) -> Result<(), TorusError> {
    let mut red: Vec<(f64, f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, &[t, f])| {
            let s = t.floor();
            (t - s, f - s, i)
        })
        .collect();
    red.sort_by(|x, y| x.0.total_cmp(&y.0));
    for w in red.windows(2) {
        if w[1].0 > w[0].0 && w[1].1 <= w[0].1 {
            return Err(TorusError::NonMonotoneLift(w[1].2));
        }
    }
    if let (Some(first), Some(last)) = (red.first(), red.last()) {
        if last.1 >= first.1 + 1.0 {
            return Err(TorusError::NonMonotoneLift(last.2));
        }
    }
    Ok(())
}
