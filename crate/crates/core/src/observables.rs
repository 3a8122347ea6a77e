//! Particle-1 observables and Taylor-coefficient extraction at t = 0.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, ComplexField, RealField};
use crate::hydro::{density, r_total, DGCoefficients};

/// Largest acceptable condition number of the scaled design matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Samples of a scalar quantity on an increasing time axis that starts at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        match times.first() {
            None => return Err(Error::InvalidSeries("empty series".into())),
            Some(&t0) if t0 != 0.0 => {
                return Err(Error::InvalidSeries(format!("series starts at t = {t0}, not 0")))
            }
            _ => {}
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSeries("times are not strictly increasing".into()));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite entry".into()));
        }
        Ok(TimeSeries { times, values })
    }

    /// Samples `f` at the given times.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Pointwise `self - other`; both series must share their time axis.
    pub fn difference(&self, other: &TimeSeries) -> Result<TimeSeries> {
        if self.times != other.times {
            return Err(Error::InvalidSeries("time axes differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        TimeSeries::new(self.times.clone(), values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t:.16e},{v:.16e}").expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Position marginal of particle 1.
pub fn marginal_rho1(psi: &ComplexField) -> Result<RealField> {
    density(psi).marginalize_particle2()
}

/// `int x_1^1 rho`.
pub fn moment_x1(psi: &ComplexField) -> Result<f64> {
    let marginal = marginal_rho1(psi)?;
    let g = *marginal.grid();
    let x = RealField::from_fn(g, |x| x[0]);
    Ok(marginal.mul(&x)?.integrate())
}

/// `Im int conj(psi) d_1 psi`, the time derivative of [`moment_x1`].
pub fn ehrenfest_rate(psi: &ComplexField) -> Result<f64> {
    let d = psi.diff(0)?;
    let integrand = psi.zip_map(&d, |p, dp| (p.conj() * dp).im)?;
    Ok(integrand.integrate())
}

/// `-int rho d_1 R[psi]`, the second time derivative of [`moment_x1`].
pub fn second_rate(psi: &ComplexField, coeffs: &DGCoefficients) -> Result<f64> {
    if coeffs.is_linear() {
        return Ok(0.0);
    }
    let dr = r_total(psi, coeffs).diff(0)?;
    let rho = density(psi);
    Ok(-rho.mul(&dr)?.integrate())
}

/// Least-squares polynomial fit of a series near t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorFit {
    /// `a_k` of `sum a_k t^k`.
    pub coefficients: Vec<f64>,
    /// `|a_k(full window) - a_k(half window)|`.
    pub uncertainties: Vec<f64>,
    /// Condition number of the full-window design matrix in `t / window`.
    pub condition: f64,
    pub window: f64,
    pub samples: usize,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl TaylorFit {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `k! a_k`, the estimate of the k-th derivative at t = 0.
    pub fn derivative(&self, k: usize) -> f64 {
        factorial(k) * self.coefficients.get(k).copied().unwrap_or(0.0)
    }

    pub fn derivative_uncertainty(&self, k: usize) -> f64 {
        factorial(k) * self.uncertainties.get(k).copied().unwrap_or(0.0)
    }

    /// The fitted polynomial at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// Fits `sum_{k <= degree} a_k t^k` to the samples with `t <= window` and
/// returns coefficients in `t` together with the condition number.
fn fit_polynomial(series: &TimeSeries, degree: usize, window: f64) -> Result<(Vec<f64>, f64)> {
    let (t, y): (Vec<f64>, Vec<f64>) = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(t, _)| **t <= window * (1.0 + 1e-12))
        .map(|(t, y)| (*t, *y))
        .unzip();
    let needed = 3 * (degree + 1);
    if t.len() < needed {
        return Err(Error::TooFewSamples {
            degree,
            needed,
            have: t.len(),
        });
    }
    let a = DMatrix::from_fn(t.len(), degree + 1, |i, k| (t[i] / window).powi(k as i32));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    let b = svd
        .solve(&DVector::from_vec(y), 0.0)
        .map_err(|e| Error::InvalidSeries(e.to_string()))?;
    let coefficients = b
        .iter()
        .enumerate()
        .map(|(k, c)| c / window.powi(k as i32))
        .collect();
    Ok((coefficients, condition))
}

/// Degree-`order` least-squares fit on `[0, window]`, with uncertainties
/// taken from the discrepancy against the same fit on `[0, window / 2]`.
pub fn fit_taylor(series: &TimeSeries, order: usize, window: f64) -> Result<TaylorFit> {
    if !(window > 0.0) {
        return Err(Error::InvalidSeries(format!("fit window {window} is not positive")));
    }
    let (full, condition) = fit_polynomial(series, order, window)?;
    let (half, _) = fit_polynomial(series, order, 0.5 * window)?;
    let uncertainties = full.iter().zip(&half).map(|(a, b)| (a - b).abs()).collect();
    let samples = series.times.iter().filter(|t| **t <= window * (1.0 + 1e-12)).count();
    Ok(TaylorFit {
        coefficients: full,
        uncertainties,
        condition,
        window,
        samples,
    })
}

/// L1 distance between two one-particle fields.
pub fn l1_distance(a: &RealField, b: &RealField) -> Result<f64> {
    let d = a.zip_map(b, |x, y| (x - y).abs())?;
    Ok(compensated_sum(d.samples().iter().copied()) * a.grid().cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn times(n: usize, t_final: f64) -> Vec<f64> {
        (0..=n).map(|i| t_final * i as f64 / n as f64).collect()
    }

    fn normalized(psi: ComplexField) -> ComplexField {
        let n = density(&psi).integrate();
        psi.scale(1.0 / n.sqrt())
    }

    #[test]
    fn series_validation() {
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(TimeSeries::new(vec![0.1, 1.0], vec![0.0, 0.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![0.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![], vec![]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn csv_round_trips_to_full_precision() {
        let s = TimeSeries::new(vec![0.0, 0.1], vec![1.0 / 3.0, -2e-9]).unwrap();
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,value"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 1.0 / 3.0]);
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, -2e-9]);
    }

    #[test]
    fn product_state_marginal() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let gx = |x: f64| (-(x - 0.5) * (x - 0.5)).exp();
        let h = |x: f64| (-x * x / 2.0).exp() / std::f64::consts::PI.powf(0.25);
        let psi = ComplexField::from_fn(g, |x| Complex64::new(gx(x[0]) * h(x[1]), 0.0));
        let m = marginal_rho1(&psi).unwrap();
        for (i, v) in m.samples().iter().enumerate() {
            assert_relative_eq!(*v, gx(g.coordinate(i)).powi(2), max_relative = 1e-12, epsilon = 1e-14);
        }
        assert_eq!(marginal_rho1(&ComplexField::zeros(g)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn entangled_gaussian_marginal_by_completing_the_square() {
        // rho = exp(-x^2 - y^2 - x y); integrating y gives sqrt(pi) exp(-3 x^2 / 4)
        let g = Grid::new(1, 128, 8.0).unwrap();
        let psi = ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[0] * x[1]) / 2.0).exp(), 0.0)
        });
        let psi = normalized(psi);
        let m = marginal_rho1(&psi).unwrap();
        let norm = (std::f64::consts::PI * 4.0 / 3.0).sqrt();
        for (i, v) in m.samples().iter().enumerate() {
            let x = g.coordinate(i);
            let exact = (-0.75 * x * x).exp() / norm;
            assert!((v - exact).abs() < 1e-12);
        }
        assert_relative_eq!(m.integrate(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn moment_examples() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let even = ComplexField::from_fn(g, |x| Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0));
        assert!(moment_x1(&even).unwrap().abs() < 1e-15);

        let a = 0.7;
        let shifted = normalized(ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] - a).powi(2) - x[1] * x[1]).exp(), 0.0)
        }));
        assert!((moment_x1(&shifted).unwrap() - a).abs() < 1e-8);

        let double = shifted.scale(2.0);
        assert_relative_eq!(moment_x1(&double).unwrap(), 4.0 * moment_x1(&shifted).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn moment_is_translation_covariant() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let f = |x: &[f64]| Complex64::new((-(x[0] - 0.3).powi(2) - x[1] * x[1] - 0.4 * x[0] * x[1]).exp(), 0.0);
        let psi = normalized(ComplexField::from_fn(g, f));
        let m = 5;
        let n = g.points_per_axis();
        let mut shifted = ComplexField::zeros(g);
        for i in m..n {
            for j in 0..n {
                shifted.samples_mut()[i * n + j] = psi.samples()[(i - m) * n + j];
            }
        }
        let delta = moment_x1(&shifted).unwrap() - moment_x1(&psi).unwrap();
        assert!((delta - m as f64 * g.spacing()).abs() < 1e-10);
    }

    #[test]
    fn density_observables_are_gauge_invariant() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let psi = normalized(ComplexField::from_fn(g, |x| {
            Complex64::from_polar((-(x[0] - 0.3).powi(2) - x[1] * x[1]).exp(), x[0] * x[1])
        }));
        let gauged = crate::hydro::gauge_transform(&psi, 1.3);
        assert_relative_eq!(moment_x1(&gauged).unwrap(), moment_x1(&psi).unwrap(), max_relative = 1e-14);
        let a = marginal_rho1(&gauged).unwrap();
        let b = marginal_rho1(&psi).unwrap();
        assert!(l1_distance(&a, &b).unwrap() < 1e-14);
    }

    #[test]
    fn ehrenfest_rate_examples() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let real = ComplexField::from_fn(g, |x| Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0));
        assert_eq!(ehrenfest_rate(&real).unwrap(), 0.0);
        let k = 1.25;
        let psi = normalized(ComplexField::from_fn(g, |x| {
            Complex64::from_polar((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), k * x[0])
        }));
        let rate = ehrenfest_rate(&psi).unwrap();
        assert!((rate - k).abs() < 1e-8, "{rate}");
    }

    #[test]
    fn second_rate_vanishes_for_linear_coefficients() {
        let g = Grid::new(1, 32, 4.0).unwrap();
        let psi = ComplexField::from_fn(g, |x| Complex64::from_polar((-x[0] * x[0] - x[1] * x[1]).exp(), x[0]));
        assert_eq!(second_rate(&psi, &DGCoefficients::default()).unwrap(), 0.0);
    }

    #[test]
    fn fit_recovers_exact_quartic() {
        let s = TimeSeries::from_fn(times(400, 0.2), |t| t.powi(4)).unwrap();
        let fit = fit_taylor(&s, 5, 0.2).unwrap();
        assert!((fit.coefficients[4] - 1.0).abs() < 1e-8);
        for k in 0..4 {
            assert!(fit.coefficients[k].abs() < 1e-10, "a{k} = {}", fit.coefficients[k]);
        }
        assert_relative_eq!(fit.derivative(4), 24.0, max_relative = 1e-8);
        assert!(fit.condition < 1e4);
    }

    #[test]
    fn fit_of_sine() {
        let s = TimeSeries::from_fn(times(400, 0.2), f64::sin).unwrap();
        let fit = fit_taylor(&s, 4, 0.2).unwrap();
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-4);
        assert!((fit.coefficients[3] + 1.0 / 6.0).abs() < 5e-3);
    }

    #[test]
    fn fit_of_constant() {
        let s = TimeSeries::from_fn(times(100, 0.2), |_| 2.5).unwrap();
        let fit = fit_taylor(&s, 3, 0.2).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.5, max_relative = 1e-13);
        for c in &fit.coefficients[1..] {
            assert!(c.abs() < 1e-9);
        }
        assert_relative_eq!(fit.eval(0.1), 2.5, max_relative = 1e-12);
    }

    #[test]
    fn fit_needs_enough_samples() {
        let s = TimeSeries::from_fn(times(10, 0.2), |t| t).unwrap();
        assert!(matches!(fit_taylor(&s, 4, 0.2), Err(Error::TooFewSamples { .. })));
        assert!(fit_taylor(&s, 1, -1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn fit_is_exact_on_polynomials(c in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let s = TimeSeries::from_fn(times(200, 0.2), |t| {
                c.iter().rev().fold(0.0, |acc, a| acc * t + a)
            }).unwrap();
            let fit = fit_taylor(&s, 3, 0.2).unwrap();
            for k in 0..4 {
                let scale = 0.2f64.powi(k as i32);
                proptest::prop_assert!((fit.coefficients[k] - c[k]).abs() * scale < 1e-11);
            }
        }
    }
}
