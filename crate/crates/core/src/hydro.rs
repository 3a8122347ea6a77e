//! Hydrodynamic quantities of a two-particle wavefunction and the
//! Doebner-Goldin nonlinearity built from them.
//!
//! With `rho = |psi|^2` and `j = Im(conj(psi) grad psi)` the nonlinearity is
//! `F[psi] = R[psi] psi` where
//!
//! ```text
//! R = c1 div(j)/rho + c2 lap(rho)/rho + c3 j^2/rho^2
//!   + c4 j.grad(rho)/rho^2 + c5 grad(rho)^2/rho^2
//! ```
//!
//! Every division by `rho` is regularized to a division by `rho + rho_floor`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{first_weights, ComplexField, DiffBackend, RealField, VectorField};

pub const DEFAULT_RHO_FLOOR: f64 = 1e-16;

/// Tolerance for the coefficient predicates.
pub const CLASSIFY_TOLERANCE: f64 = 1e-12;

/// The five real Doebner-Goldin parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    #[serde(default = "default_floor")]
    pub rho_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_RHO_FLOOR
}

impl Default for DGCoefficients {
    fn default() -> Self {
        DGCoefficients::new([0.0; 5])
    }
}

/// Which region of coefficient space a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Linear,
    GisinFree,
    WernerSatisfiedSignaling,
    WernerViolating,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Linear => "linear",
            Classification::GisinFree => "gisin_free",
            Classification::WernerSatisfiedSignaling => "werner_satisfied_signaling",
            Classification::WernerViolating => "werner_violating",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn is_zero(x: f64) -> bool {
    x.abs() <= CLASSIFY_TOLERANCE
}

impl DGCoefficients {
    pub fn new(c: [f64; 5]) -> Self {
        DGCoefficients {
            c1: c[0],
            c2: c[1],
            c3: c[2],
            c4: c[3],
            c5: c[4],
            rho_floor: DEFAULT_RHO_FLOOR,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.c1, self.c2, self.c3, self.c4, self.c5]
    }

    /// Coefficient of the functional `R_index`, `index` in 1..=5.
    pub fn get(&self, term: Functional) -> f64 {
        self.as_array()[term.index() - 1]
    }

    pub fn scaled(&self, s: f64) -> Self {
        let c = self.as_array().map(|v| v * s);
        DGCoefficients {
            rho_floor: self.rho_floor,
            ..DGCoefficients::new(c)
        }
    }

    /// Only `R_term` switched on, with unit weight.
    pub fn unit(term: Functional) -> Self {
        let mut c = [0.0; 5];
        c[term.index() - 1] = 1.0;
        DGCoefficients::new(c)
    }

    pub fn is_linear(&self) -> bool {
        self.as_array().iter().all(|&c| is_zero(c))
    }

    /// `c3 = 0` and `c1 + c4 = 0`.
    pub fn werner_satisfied(&self) -> bool {
        is_zero(self.c3) && is_zero(self.c1 + self.c4)
    }

    /// `c1 = c3 = c4 = 0` and `c2 + 2 c5 = 0`.
    pub fn gisin_free(&self) -> bool {
        is_zero(self.c1) && is_zero(self.c3) && is_zero(self.c4) && is_zero(self.c2 + 2.0 * self.c5)
    }

    pub fn classify(&self) -> Classification {
        if self.is_linear() {
            Classification::Linear
        } else if self.gisin_free() {
            Classification::GisinFree
        } else if self.werner_satisfied() {
            Classification::WernerSatisfiedSignaling
        } else {
            Classification::WernerViolating
        }
    }
}

/// The five density/current functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Functional {
    /// `div(j) / rho`
    CurrentDivergence,
    /// `lap(rho) / rho`
    DensityLaplacian,
    /// `j^2 / rho^2`
    CurrentSquare,
    /// `j . grad(rho) / rho^2`
    CurrentDensityGradient,
    /// `grad(rho)^2 / rho^2`
    DensityGradientSquare,
}

impl Functional {
    pub const ALL: [Functional; 5] = [
        Functional::CurrentDivergence,
        Functional::DensityLaplacian,
        Functional::CurrentSquare,
        Functional::CurrentDensityGradient,
        Functional::DensityGradientSquare,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Functional::ALL.get(i.checked_sub(1)?).copied()
    }

    pub fn index(&self) -> usize {
        match self {
            Functional::CurrentDivergence => 1,
            Functional::DensityLaplacian => 2,
            Functional::CurrentSquare => 3,
            Functional::CurrentDensityGradient => 4,
            Functional::DensityGradientSquare => 5,
        }
    }
}

pub fn density(psi: &ComplexField) -> RealField {
    psi.map(|z| z.norm_sqr())
}

/// `j_a = Im(conj(psi) d_a psi)` for every axis.
pub fn current(psi: &ComplexField) -> VectorField {
    let components = (0..psi.grid().axes())
        .map(|a| {
            let d = psi.diff(a).expect("axis in range");
            psi.zip_map(&d, |p, dp| (p.conj() * dp).im).expect("same grid")
        })
        .collect();
    VectorField::new(components).expect("consistent components")
}

/// Phase gradient as `j / (rho + floor)`, which needs no phase unwrapping.
pub fn grad_phase(psi: &ComplexField, coeffs: &DGCoefficients) -> VectorField {
    let rho = density(psi);
    let eps = coeffs.rho_floor;
    let components = current(psi)
        .into_components()
        .into_iter()
        .map(|j| j.zip_map(&rho, |j, r| j / (r + eps)).expect("same grid"))
        .collect();
    VectorField::new(components).expect("consistent components")
}

/// Phase gradient from wrap-free local phase differences,
/// `sum_k w_k arg(psi[i+k] conj(psi[i])) / h` with the first-derivative
/// weights. Exact for polynomial phases up to the stencil order and free of
/// the `1/rho` amplification of [`grad_phase`] in the tails. Falls back to
/// [`grad_phase`] for the spectral backend.
pub fn phase_gradient(psi: &ComplexField) -> VectorField {
    let g = *psi.grid();
    let order = match g.backend() {
        DiffBackend::FiniteDifference { order } => order,
        DiffBackend::Spectral => return grad_phase(psi, &DGCoefficients::default()),
    };
    let w = first_weights(order);
    let n = g.points_per_axis();
    let h = g.spacing();
    let s = psi.samples();
    let components = (0..g.axes())
        .map(|a| {
            let stride = g.stride(a);
            let mut out = RealField::zeros(g);
            for (i, o) in out.samples_mut().iter_mut().enumerate() {
                let j = g.axis_index(i, a);
                let here = s[i].conj();
                let mut acc = 0.0;
                for (k, &wk) in w.iter().enumerate() {
                    let k = k + 1;
                    if j + k < n {
                        acc += wk * (s[i + k * stride] * here).arg();
                    }
                    if j >= k {
                        acc -= wk * (s[i - k * stride] * here).arg();
                    }
                }
                *o = acc / h;
            }
            out
        })
        .collect();
    VectorField::new(components).expect("consistent components")
}

/// Lazily computed hydrodynamic ingredients; only what the active terms need.
struct Hydro<'a> {
    psi: &'a ComplexField,
    rho: RealField,
    current: Option<VectorField>,
    grad_rho: Option<VectorField>,
}

impl<'a> Hydro<'a> {
    fn new(psi: &'a ComplexField) -> Self {
        Hydro {
            psi,
            rho: density(psi),
            current: None,
            grad_rho: None,
        }
    }

    fn current(&mut self) -> &VectorField {
        let psi = self.psi;
        self.current.get_or_insert_with(|| current(psi))
    }

    fn grad_rho(&mut self) -> &VectorField {
        let rho = &self.rho;
        self.grad_rho.get_or_insert_with(|| rho.gradient())
    }

    /// Numerator of the functional; the denominator is `rho` or `rho^2`.
    fn numerator(&mut self, term: Functional) -> (RealField, i32) {
        match term {
            Functional::CurrentDivergence => (self.current().divergence(), 1),
            Functional::DensityLaplacian => (self.rho.laplacian(), 1),
            Functional::CurrentSquare => (self.current().norm_sqr(), 2),
            Functional::CurrentDensityGradient => {
                let j = self.current().clone();
                (j.dot(self.grad_rho()).expect("same grid"), 2)
            }
            Functional::DensityGradientSquare => (self.grad_rho().norm_sqr(), 2),
        }
    }

    fn accumulate(&mut self, term: Functional, weight: f64, eps: f64, acc: &mut [f64]) {
        let (num, power) = self.numerator(term);
        for ((a, &n), &r) in acc.iter_mut().zip(num.samples()).zip(self.rho.samples()) {
            let den = r + eps;
            *a += weight * if power == 1 { n / den } else { n / (den * den) };
        }
    }
}

/// A single functional `R_index` with the regularized denominator.
pub fn r_term(psi: &ComplexField, term: Functional, coeffs: &DGCoefficients) -> RealField {
    let mut acc = RealField::zeros(*psi.grid());
    Hydro::new(psi).accumulate(term, 1.0, coeffs.rho_floor, acc.samples_mut());
    acc
}

/// `R[psi] = sum_nu c_nu R_nu[psi]`; real by construction.
pub fn r_total(psi: &ComplexField, coeffs: &DGCoefficients) -> RealField {
    let mut acc = RealField::zeros(*psi.grid());
    let mut hydro = Hydro::new(psi);
    for term in Functional::ALL {
        let c = coeffs.get(term);
        if c != 0.0 {
            hydro.accumulate(term, c, coeffs.rho_floor, acc.samples_mut());
        }
    }
    acc
}

/// Nonlinear gauge transformation `psi -> exp(i lambda ln|psi|) psi`.
///
/// The phase factor is 1 wherever `|psi| <= DEFAULT_RHO_FLOOR`.
pub fn gauge_transform(psi: &ComplexField, lambda: f64) -> ComplexField {
    psi.map(|z| {
        let m = z.norm();
        if m <= DEFAULT_RHO_FLOOR {
            z
        } else {
            z * Complex64::from_polar(1.0, lambda * m.ln())
        }
    })
}

/// Pointwise `psi * exp(i phase)`.
pub fn apply_phase(psi: &ComplexField, phase: &RealField) -> Result<ComplexField> {
    psi.zip_map(phase, |z, s| z * Complex64::from_polar(1.0, s))
}
