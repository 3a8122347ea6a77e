//! Time integration of the two-particle equation
//!
//! ```text
//! i d/dt psi = (-1/2 lap + V(x2)) psi + R[psi] psi
//! ```
//!
//! in units with hbar = m = 1, for a potential that is switched on at t = 0
//! and then held constant.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, DiffBackend, Grid, RealField};
use crate::hydro::{r_total, DGCoefficients};

/// RK4 is stable on the imaginary axis up to `2 sqrt 2`; keep a margin.
pub const RK4_STABILITY_BOUND: f64 = 2.8;

/// Steps between re-evaluations of the state-dependent stability bound.
pub const STABILITY_RECHECK: usize = 100;

/// Tolerance on the initial normalization.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Functional form of the particle-2 potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    /// `sum_k coefficients[k] * (x_2^1)^k`
    PolynomialInX2 { coefficients: Vec<f64> },
    /// `omega^2 |x_2|^2 / 2`
    Harmonic { omega: f64 },
    /// Values on the particle-2 grid, row-major.
    Tabulated { samples: Vec<f64> },
}

/// Optional smooth saturation applied to each particle-2 coordinate before
/// evaluating the potential, so that it becomes constant far out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    None,
    SmoothCutoff { radius: f64, width: f64 },
}

impl Window {
    /// Cutoff at `0.75 L` with width `0.1 L`.
    pub fn default_for(half_extent: f64) -> Self {
        Window::SmoothCutoff {
            radius: 0.75 * half_extent,
            width: 0.1 * half_extent,
        }
    }

    /// Maps a coordinate through the saturating window. The map is the
    /// identity for `|x| <= radius`, has derivative `1 - S((|x| - radius) / width)`
    /// with the quintic smoothstep `S`, and is constant beyond `radius + width`.
    pub fn saturate(&self, x: f64) -> f64 {
        match *self {
            Window::None => x,
            Window::SmoothCutoff { radius, width } => {
                let a = x.abs();
                if a <= radius {
                    return x;
                }
                let u = ((a - radius) / width).min(1.0);
                let u4 = u * u * u * u;
                let y = radius + width * (u - (u4 * u * u - 3.0 * u4 * u + 2.5 * u4));
                y.copysign(x)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub window: Window,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec {
            kind: PotentialKind::Zero,
            window: Window::None,
        }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        PotentialSpec {
            kind: PotentialKind::PolynomialInX2 { coefficients },
            window: Window::None,
        }
    }

    /// `V = (x_2^1)^3`.
    pub fn cubic() -> Self {
        Self::polynomial(vec![0.0, 0.0, 0.0, 1.0])
    }

    pub fn harmonic(omega: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Harmonic { omega },
            window: Window::None,
        }
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            PotentialKind::Zero => true,
            PotentialKind::PolynomialInX2 { coefficients } => coefficients.iter().all(|&c| c == 0.0),
            PotentialKind::Harmonic { omega } => *omega == 0.0,
            PotentialKind::Tabulated { samples } => samples.iter().all(|&c| c == 0.0),
        }
    }

    /// The same potential multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let kind = match &self.kind {
            PotentialKind::Zero => PotentialKind::Zero,
            PotentialKind::PolynomialInX2 { coefficients } => PotentialKind::PolynomialInX2 {
                coefficients: coefficients.iter().map(|c| c * s).collect(),
            },
            PotentialKind::Harmonic { omega } => {
                if s < 0.0 {
                    return Err(Error::InvalidPotential(
                        "a harmonic potential cannot be scaled by a negative factor".into(),
                    ));
                }
                PotentialKind::Harmonic {
                    omega: omega * s.sqrt(),
                }
            }
            PotentialKind::Tabulated { samples } => PotentialKind::Tabulated {
                samples: samples.iter().map(|v| v * s).collect(),
            },
        };
        Ok(PotentialSpec {
            kind,
            window: self.window,
        })
    }

    /// Samples the potential on the particle-2 grid (`n^d` values).
    pub fn sample_particle2(&self, grid: &Grid) -> Result<Vec<f64>> {
        let d = grid.dims_per_particle();
        let n = grid.points_per_axis();
        let block = n.pow(d as u32);
        if let (PotentialKind::Tabulated { samples }, window) = (&self.kind, self.window) {
            if window != Window::None {
                return Err(Error::InvalidPotential(
                    "a window cannot be applied to a tabulated potential".into(),
                ));
            }
            if samples.len() != block {
                return Err(Error::InvalidPotential(format!(
                    "tabulated potential has {} values, particle-2 grid holds {block}",
                    samples.len()
                )));
            }
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPotential("non-finite tabulated value".into()));
            }
            return Ok(samples.clone());
        }
        if let Window::SmoothCutoff { radius, width } = self.window {
            if !(radius > 0.0 && width > 0.0) {
                return Err(Error::InvalidPotential("window radius and width must be positive".into()));
            }
        }
        let single = grid.single_particle();
        let values = RealField::from_fn(single, |x| {
            let y: Vec<f64> = x.iter().map(|&xi| self.window.saturate(xi)).collect();
            match &self.kind {
                PotentialKind::Zero => 0.0,
                PotentialKind::PolynomialInX2 { coefficients } => {
                    coefficients.iter().rev().fold(0.0, |acc, c| acc * y[0] + c)
                }
                PotentialKind::Harmonic { omega } => {
                    0.5 * omega * omega * y.iter().map(|v| v * v).sum::<f64>()
                }
                PotentialKind::Tabulated { .. } => unreachable!(),
            }
        });
        let values = values.into_samples();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("potential is not finite on the grid".into()));
        }
        Ok(values)
    }

    /// The potential as a field on the full two-particle grid.
    pub fn sample(&self, grid: &Grid) -> Result<RealField> {
        let v2 = self.sample_particle2(grid)?;
        let samples = (0..grid.len()).map(|i| v2[i % v2.len()]).collect();
        RealField::new(*grid, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Classical RK4 on the full right-hand side.
    Rk4Full,
    /// Half linear step, full nonlinear phase rotation, half linear step.
    StrangSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-4,
            t_final: 0.2,
            scheme: Scheme::Rk4Full,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    /// Number of steps; `t_final / dt` must be integral.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidIntegrator(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidIntegrator(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidIntegrator("record_stride must be >= 1".into()));
        }
        let ratio = self.t_final / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidIntegrator(format!(
                "t_final / dt = {ratio} is not an integer"
            )));
        }
        Ok(steps as usize)
    }
}

/// Largest magnitude of the symbol of the discrete second derivative, times h^2.
fn second_derivative_symbol_max(backend: DiffBackend) -> f64 {
    match backend {
        DiffBackend::Spectral => std::f64::consts::PI.powi(2),
        // centered second-derivative stencils peak at theta = pi
        DiffBackend::FiniteDifference { order } => {
            let (c0, w) = crate::grid::second_weights(order);
            let alternating: f64 = w
                .iter()
                .enumerate()
                .map(|(k, c)| if k % 2 == 0 { -c } else { *c })
                .sum();
            (c0 + 2.0 * alternating).abs()
        }
    }
}

/// Bound on the magnitude of the eigenvalues of the linear part `-lap/2 + V`.
pub fn linear_spectral_radius(grid: &Grid, v: &RealField) -> f64 {
    let h = grid.spacing();
    let kinetic = 0.5 * grid.axes() as f64 * second_derivative_symbol_max(grid.backend()) / (h * h);
    kinetic + v.max_abs()
}

/// `dt * lambda` for the given state, to be compared with [`RK4_STABILITY_BOUND`].
pub fn stability_product(
    psi: &ComplexField,
    v: &RealField,
    coeffs: &DGCoefficients,
    dt: f64,
    scheme: Scheme,
) -> f64 {
    let linear = linear_spectral_radius(psi.grid(), v);
    match scheme {
        Scheme::Rk4Full => {
            let nonlinear = if coeffs.is_linear() {
                0.0
            } else {
                r_total(psi, coeffs).max_abs()
            };
            dt * (linear + nonlinear)
        }
        // the nonlinear rotation is exact; only the linear RK4 half steps matter
        Scheme::StrangSplit => 0.5 * dt * linear,
    }
}

fn check_stability(
    psi: &ComplexField,
    v: &RealField,
    coeffs: &DGCoefficients,
    dt: f64,
    scheme: Scheme,
    t: f64,
) -> Result<()> {
    let product = stability_product(psi, v, coeffs, dt, scheme);
    if !(product <= RK4_STABILITY_BOUND) {
        return Err(Error::Unstable {
            t,
            product,
            bound: RK4_STABILITY_BOUND,
        });
    }
    Ok(())
}

const MINUS_I: Complex64 = Complex64 { re: 0.0, im: -1.0 };

fn finite_or(field: ComplexField, context: impl FnOnce() -> String) -> Result<ComplexField> {
    if field.is_finite() {
        Ok(field)
    } else {
        Err(Error::NonFinite(context()))
    }
}

/// `-i (-lap/2 + V + W) psi` for a real pointwise potential `W` (possibly absent).
fn apply_hamiltonian(psi: &ComplexField, v: &RealField, w: Option<&RealField>) -> ComplexField {
    let lap = psi.laplacian();
    let mut out = lap;
    let vs = v.samples();
    let ps = psi.samples();
    match w {
        Some(w) => {
            for (i, o) in out.samples_mut().iter_mut().enumerate() {
                *o = MINUS_I * (*o * -0.5 + ps[i] * (vs[i] + w.samples()[i]));
            }
        }
        None => {
            for (i, o) in out.samples_mut().iter_mut().enumerate() {
                *o = MINUS_I * (*o * -0.5 + ps[i] * vs[i]);
            }
        }
    }
    out
}

/// Time derivative `-i [(-lap/2 + V) psi + R[psi] psi]`.
pub fn rhs(psi: &ComplexField, v: &RealField, coeffs: &DGCoefficients) -> Result<ComplexField> {
    psi.same_grid(v.grid())?;
    let out = if coeffs.is_linear() {
        apply_hamiltonian(psi, v, None)
    } else {
        let r = r_total(psi, coeffs);
        apply_hamiltonian(psi, v, Some(&r))
    };
    finite_or(out, || "right-hand side".to_string())
}

fn combine(base: &ComplexField, terms: &[(f64, &ComplexField)]) -> ComplexField {
    let mut out = base.clone();
    for (w, t) in terms {
        for (o, &x) in out.samples_mut().iter_mut().zip(t.samples()) {
            *o += x * *w;
        }
    }
    out
}

fn rk4(psi: &ComplexField, dt: f64, f: impl Fn(&ComplexField) -> Result<ComplexField>) -> Result<ComplexField> {
    let k1 = f(psi)?;
    let k2 = f(&combine(psi, &[(0.5 * dt, &k1)]))?;
    let k3 = f(&combine(psi, &[(0.5 * dt, &k2)]))?;
    let k4 = f(&combine(psi, &[(dt, &k3)]))?;
    Ok(combine(
        psi,
        &[(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)],
    ))
}

/// One time step of size `dt`.
pub fn step(
    psi: &ComplexField,
    v: &RealField,
    coeffs: &DGCoefficients,
    dt: f64,
    scheme: Scheme,
) -> Result<ComplexField> {
    psi.same_grid(v.grid())?;
    let next = match scheme {
        Scheme::Rk4Full => rk4(psi, dt, |p| rhs(p, v, coeffs))?,
        Scheme::StrangSplit => {
            let linear = |p: &ComplexField| Ok(apply_hamiltonian(p, v, None));
            let half = rk4(psi, 0.5 * dt, linear)?;
            let rotated = if coeffs.is_linear() {
                half
            } else {
                let r = r_total(&half, coeffs);
                half.zip_map(&r, |z, w| z * Complex64::from_polar(1.0, -w * dt))?
            };
            rk4(&rotated, 0.5 * dt, linear)?
        }
    };
    finite_or(next, || "time step".to_string())
}

/// Observer outputs recorded along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub records: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Evolve `psi0` under `potential` (on from t = 0, constant afterwards) and
/// record `observe(t, psi)` at t = 0 and every `record_stride` steps.
pub fn evolve<T>(
    psi0: &ComplexField,
    potential: &PotentialSpec,
    coeffs: &DGCoefficients,
    cfg: &IntegratorConfig,
    observe: impl FnMut(f64, &ComplexField) -> T,
) -> Result<Trajectory<T>> {
    let v = potential.sample(psi0.grid())?;
    evolve_in(psi0, &v, coeffs, cfg, observe)
}

/// As [`evolve`] with an already sampled potential field.
pub fn evolve_in<T>(
    psi0: &ComplexField,
    v: &RealField,
    coeffs: &DGCoefficients,
    cfg: &IntegratorConfig,
    mut observe: impl FnMut(f64, &ComplexField) -> T,
) -> Result<Trajectory<T>> {
    let steps = cfg.steps()?;
    psi0.same_grid(v.grid())?;
    let norm = crate::hydro::density(psi0).integrate();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized(norm));
    }
    check_stability(psi0, v, coeffs, cfg.dt, cfg.scheme, 0.0)?;

    let mut traj = Trajectory {
        times: vec![0.0],
        records: vec![observe(0.0, psi0)],
    };
    let mut psi = psi0.clone();
    for s in 1..=steps {
        let t_prev = (s - 1) as f64 * cfg.dt;
        if (s - 1) % STABILITY_RECHECK == 0 && s > 1 {
            check_stability(&psi, v, coeffs, cfg.dt, cfg.scheme, t_prev)?;
        }
        psi = step(&psi, v, coeffs, cfg.dt, cfg.scheme)
            .map_err(|e| match e {
                Error::NonFinite(ctx) => Error::NonFinite(format!("{ctx} at t = {t_prev}")),
                other => other,
            })?;
        if s % cfg.record_stride == 0 {
            let t = s as f64 * cfg.dt;
            traj.times.push(t);
            traj.records.push(observe(t, &psi));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::{density, r_term, Functional};
    use approx::assert_relative_eq;

    fn normalized(psi: ComplexField) -> ComplexField {
        let n = density(&psi).integrate();
        psi.scale(1.0 / n.sqrt())
    }

    fn mean_axis(psi: &ComplexField, axis: usize) -> f64 {
        let g = *psi.grid();
        let rho = density(psi);
        let f = RealField::from_fn(g, |x| x[axis]);
        rho.mul(&f).unwrap().integrate()
    }

    #[test]
    fn window_is_identity_inside_and_constant_outside() {
        let w = Window::SmoothCutoff { radius: 6.0, width: 0.8 };
        assert_eq!(w.saturate(3.0), 3.0);
        assert_eq!(w.saturate(-6.0), -6.0);
        assert_relative_eq!(w.saturate(7.0), 6.4, epsilon = 1e-14);
        assert_relative_eq!(w.saturate(-7.9), -6.4, epsilon = 1e-14);
        // C1 at both joints (checked by one-sided difference quotients)
        let d = |x: f64| (w.saturate(x + 1e-7) - w.saturate(x - 1e-7)) / 2e-7;
        assert!((d(6.0) - 1.0).abs() < 1e-6);
        assert!(d(6.8).abs() < 1e-6);
        assert!(d(6.4) > 0.0 && d(6.4) < 1.0);
    }

    #[test]
    fn potential_depends_only_on_particle_two() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let v = PotentialSpec::cubic().sample(&g).unwrap();
        for i in 0..g.len() {
            let x2 = g.coordinate(g.axis_index(i, 1));
            assert_eq!(v.samples()[i], x2 * x2 * x2);
        }
        let tab = PotentialSpec {
            kind: PotentialKind::Tabulated { samples: vec![1.0; 15] },
            window: Window::None,
        };
        assert!(tab.sample(&g).is_err());
    }

    #[test]
    fn integrator_config_validation() {
        let mut c = IntegratorConfig::default();
        assert_eq!(c.steps().unwrap(), 2000);
        c.t_final = 0.00015;
        assert!(c.steps().is_err());
        c.t_final = 0.0;
        assert_eq!(c.steps().unwrap(), 0);
        c.dt = 0.0;
        assert!(c.steps().is_err());
    }

    #[test]
    fn rhs_of_plane_wave() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let k = 0.75;
        let psi = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, k * x[0]));
        let v = RealField::zeros(g);
        let d = rhs(&psi, &v, &DGCoefficients::default()).unwrap();
        for i in 0..g.len() {
            if !g.near_boundary(i, 5) {
                let expect = MINUS_I * psi.samples()[i] * (0.5 * k * k);
                assert!((d.samples()[i] - expect).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rhs_of_oscillator_ground_state() {
        // V = x2^2 = omega^2 x2^2 / 2 with omega = sqrt 2
        let g = Grid::new(1, 256, 8.0).unwrap();
        let omega = 2f64.sqrt();
        let psi = ComplexField::from_fn(g, |x| {
            Complex64::new((-x[0] * x[0] / 2.0 - omega * x[1] * x[1] / 2.0).exp(), 0.0)
        });
        let v = PotentialSpec::polynomial(vec![0.0, 0.0, 1.0]).sample(&g).unwrap();
        let d = rhs(&psi, &v, &DGCoefficients::default()).unwrap();
        for i in 0..g.len() {
            let x1 = g.coordinate(g.axis_index(i, 0));
            let energy = -0.5 * (x1 * x1 - 1.0) + omega / 2.0;
            let expect = MINUS_I * psi.samples()[i] * energy;
            assert!((d.samples()[i] - expect).norm() < 1e-6);
        }
    }

    #[test]
    fn rhs_nonlinear_real_state_matches_term_by_term() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let coeffs = DGCoefficients::new([0.0, 0.3, 0.0, 0.0, -0.7]);
        let psi = ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1] + 0.5 * x[0] * x[1]) / 2.0).exp(), 0.0)
        });
        let v = PotentialSpec::harmonic(1.0).sample(&g).unwrap();
        let d = rhs(&psi, &v, &coeffs).unwrap();
        let lap = psi.laplacian();
        let r2 = r_term(&psi, Functional::DensityLaplacian, &coeffs);
        let r5 = r_term(&psi, Functional::DensityGradientSquare, &coeffs);
        for i in 0..g.len() {
            let p = psi.samples()[i];
            let expect = MINUS_I
                * (lap.samples()[i] * -0.5
                    + p * (v.samples()[i] + 0.3 * r2.samples()[i] - 0.7 * r5.samples()[i]));
            assert!((d.samples()[i] - expect).norm() <= 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn step_is_consistent() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let coeffs = DGCoefficients::new([0.0, 0.05, 0.02, 0.0, 0.0]);
        let psi = normalized(ComplexField::from_fn(g, |x| {
            Complex64::from_polar((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.3 * x[0] * x[1])
        }));
        let v = PotentialSpec::harmonic(1.0).sample(&g).unwrap();
        let f = rhs(&psi, &v, &coeffs).unwrap();
        for scheme in [Scheme::Rk4Full, Scheme::StrangSplit] {
            let err = |dt: f64| {
                let next = step(&psi, &v, &coeffs, dt, scheme).unwrap();
                let lin = combine(&psi, &[(dt, &f)]);
                (&next - &lin).max_abs()
            };
            let (e1, e2) = (err(1e-3), err(5e-4));
            // second order in dt
            assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "{scheme:?}: {e1} {e2}");
        }
    }

    #[test]
    fn coherent_state_follows_classical_orbit() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let a = 1.5;
        let psi0 = normalized(ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0]) / 2.0 - (x[1] - a).powi(2) / 2.0).exp(), 0.0)
        }));
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::Rk4Full,
            record_stride: 100,
        };
        let traj = evolve(
            &psi0,
            &PotentialSpec::harmonic(1.0),
            &DGCoefficients::default(),
            &cfg,
            |_, p| mean_axis(p, 1),
        )
        .unwrap();
        for (t, x) in traj.times.iter().zip(&traj.records) {
            assert!((x - a * t.cos()).abs() < 1e-4, "t = {t}: {x}");
        }
    }

    #[test]
    fn free_gaussian_spreads_analytically() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        // rho ~ exp(-x^2 / (2 s0^2)), s0^2 = 1/2
        let psi0 = normalized(ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.0)
        }));
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_final: 0.5,
            scheme: Scheme::Rk4Full,
            record_stride: 50,
        };
        let x2 = RealField::from_fn(g, |x| x[0] * x[0]);
        let traj = evolve(&psi0, &PotentialSpec::zero(), &DGCoefficients::default(), &cfg, |_, p| {
            density(p).mul(&x2).unwrap().integrate()
        })
        .unwrap();
        let s0 = 0.5;
        for (t, w) in traj.times.iter().zip(&traj.records) {
            let exact = s0 + t * t / (4.0 * s0);
            assert!((w - exact).abs() < 1e-5, "t = {t}: {w} vs {exact}");
        }
    }

    #[test]
    fn zero_steps_gives_single_record() {
        let g = Grid::new(1, 32, 6.0).unwrap();
        let psi0 = normalized(ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0)
        }));
        let cfg = IntegratorConfig {
            t_final: 0.0,
            ..Default::default()
        };
        let traj = evolve(&psi0, &PotentialSpec::zero(), &DGCoefficients::default(), &cfg, |t, _| t).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.records, vec![0.0]);
    }

    #[test]
    fn rejects_unnormalized_and_unstable_runs() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let raw = ComplexField::from_fn(g, |x| Complex64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        let cfg = IntegratorConfig::default();
        let err = evolve(&raw.scale(2.0), &PotentialSpec::zero(), &DGCoefficients::default(), &cfg, |_, _| ())
            .unwrap_err();
        assert!(matches!(err, Error::NotNormalized(_)));

        let psi = normalized(raw);
        let big = IntegratorConfig {
            dt: 0.05,
            t_final: 0.1,
            ..Default::default()
        };
        let err = evolve(&psi, &PotentialSpec::zero(), &DGCoefficients::default(), &big, |_, _| ()).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
        assert!(err.is_solver_abort());
    }

    #[test]
    fn linear_run_keeps_current_free_mean_fixed() {
        let g = Grid::new(1, 64, 8.0).unwrap();
        let psi0 = normalized(ComplexField::from_fn(g, |x| {
            Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[0] * x[1]) / 2.0).exp(), 0.0)
        }));
        let cfg = IntegratorConfig {
            dt: 1e-3,
            t_final: 0.2,
            scheme: Scheme::Rk4Full,
            record_stride: 10,
        };
        let traj = evolve(&psi0, &PotentialSpec::zero(), &DGCoefficients::default(), &cfg, |_, p| {
            mean_axis(p, 0)
        })
        .unwrap();
        assert!(traj.records.iter().all(|m| m.abs() < 1e-8));
    }

    #[test]
    fn evolution_is_deterministic() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let psi0 = normalized(ComplexField::from_fn(g, |x| {
            Complex64::from_polar((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), x[0] * x[1])
        }));
        let coeffs = DGCoefficients::new([0.05, 0.05, 0.0, -0.05, 0.0]);
        let cfg = IntegratorConfig {
            dt: 5e-4,
            t_final: 0.05,
            scheme: Scheme::Rk4Full,
            record_stride: 5,
        };
        let run = || {
            let v = PotentialSpec::cubic().with_window(Window::default_for(6.0));
            evolve(&psi0, &v, &coeffs, &cfg, |_, p| p.samples().to_vec()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
