//! Initial states `psi0 = sqrt(rho0) exp(i S0)`, normalized on the grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};

/// Unnormalized initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DensitySpec {
    /// `exp(-|x|^2 - x_1^1 x_2^1)`.
    PaperExample,
    /// `exp(-|x - c|^2 / width^2 - coupling (x_1^1 - c_1)(x_2^1 - c_2))`
    /// with `c` shifting only the first axis of each particle.
    Gaussian {
        width: f64,
        coupling: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// Row-major samples on the full grid.
    Tabulated { samples: Vec<f64> },
}

/// Initial phase `S0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhaseSpec {
    Zero,
    /// `a x_1^1 x_2^1`.
    Bilinear { a: f64 },
    /// Row-major samples on the full grid.
    Tabulated { samples: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub density: DensitySpec,
    pub phase: PhaseSpec,
}

/// A normalized initial state and the factor `1 / int rho0` that was applied
/// to the density.
#[derive(Debug, Clone)]
pub struct PreparedState {
    pub psi: ComplexField,
    pub normalization_factor: f64,
}

fn first_axes(grid: &Grid, x: &[f64]) -> (f64, f64) {
    (x[0], x[grid.dims_per_particle()])
}

impl InitialState {
    /// The reference density `exp(-|x|^2 - x_1^1 x_2^1)` with phase `x_1^1 x_2^1`.
    pub fn paper_example() -> Self {
        InitialState {
            density: DensitySpec::PaperExample,
            phase: PhaseSpec::Bilinear { a: 1.0 },
        }
    }

    pub fn density_field(&self, grid: &Grid) -> Result<RealField> {
        let rho = match &self.density {
            DensitySpec::PaperExample => RealField::from_fn(*grid, |x| {
                let (a, b) = first_axes(grid, x);
                (-x.iter().map(|v| v * v).sum::<f64>() - a * b).exp()
            }),
            DensitySpec::Gaussian {
                width,
                coupling,
                center,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidState(format!("width {width} is not positive")));
                }
                let d = grid.dims_per_particle();
                RealField::from_fn(*grid, |x| {
                    let r2: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let c = match i {
                                0 => center[0],
                                i if i == d => center[1],
                                _ => 0.0,
                            };
                            (v - c) * (v - c)
                        })
                        .sum();
                    let (a, b) = first_axes(grid, x);
                    (-r2 / (width * width) - coupling * (a - center[0]) * (b - center[1])).exp()
                })
            }
            DensitySpec::Tabulated { samples } => RealField::new(*grid, samples.clone())
                .map_err(|e| Error::InvalidState(format!("tabulated density: {e}")))?,
        };
        if rho.samples().iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidState("density must be finite and non-negative".into()));
        }
        Ok(rho)
    }

    pub fn phase_field(&self, grid: &Grid) -> Result<RealField> {
        let s = match &self.phase {
            PhaseSpec::Zero => RealField::zeros(*grid),
            PhaseSpec::Bilinear { a } => RealField::from_fn(*grid, |x| {
                let (p, q) = first_axes(grid, x);
                a * p * q
            }),
            PhaseSpec::Tabulated { samples } => RealField::new(*grid, samples.clone())
                .map_err(|e| Error::InvalidState(format!("tabulated phase: {e}")))?,
        };
        if !s.is_finite() {
            return Err(Error::InvalidState("phase must be finite".into()));
        }
        Ok(s)
    }

    pub fn prepare(&self, grid: &Grid) -> Result<PreparedState> {
        if grid.particles() != 2 {
            return Err(Error::InvalidState("initial state needs a two-particle grid".into()));
        }
        let rho = self.density_field(grid)?;
        let mass = rho.integrate_checked();
        if !(mass.value > 0.0) {
            return Err(Error::InvalidState("density integrates to zero".into()));
        }
        if !mass.boundary_decayed {
            return Err(Error::InvalidState(
                "density has not decayed at the grid boundary; enlarge L".into(),
            ));
        }
        let factor = 1.0 / mass.value;
        let s = self.phase_field(grid)?;
        let psi = rho.zip_map(&s, |r, s| Complex64::from_polar((r * factor).sqrt(), s))?;
        Ok(PreparedState {
            psi,
            normalization_factor: factor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::{density, grad_phase, phase_gradient, DGCoefficients};
    use approx::assert_relative_eq;

    #[test]
    fn reference_state_is_normalized_with_known_factor() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let p = InitialState::paper_example().prepare(&g).unwrap();
        assert_relative_eq!(density(&p.psi).integrate(), 1.0, epsilon = 1e-13);
        // int exp(-x^2 - y^2 - x y) = 2 pi / sqrt(3)
        let exact = 3f64.sqrt() / (2.0 * std::f64::consts::PI);
        assert_relative_eq!(p.normalization_factor, exact, max_relative = 1e-12);
    }

    #[test]
    fn bilinear_phase_gradient() {
        let g = Grid::new(1, 256, 8.0).unwrap();
        let p = InitialState::paper_example().prepare(&g).unwrap();
        let v = grad_phase(&p.psi, &DGCoefficients::default());
        let exact = phase_gradient(&p.psi);
        for i in 0..g.len() {
            let (a, b) = (g.coordinate(g.axis_index(i, 0)), g.coordinate(g.axis_index(i, 1)));
            if a * a + b * b < 9.0 {
                assert!((v.component(0).samples()[i] - b).abs() < 1e-6);
                assert!((v.component(1).samples()[i] - a).abs() < 1e-6);
            }
            if !g.near_boundary(i, 4) && a.abs().max(b.abs()) < 6.0 {
                assert!((exact.component(0).samples()[i] - b).abs() < 1e-10);
                assert!((exact.component(1).samples()[i] - a).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_states() {
        let g = Grid::new(1, 16, 2.0).unwrap();
        let wide = InitialState {
            density: DensitySpec::Gaussian {
                width: 5.0,
                coupling: 0.0,
                center: [0.0, 0.0],
            },
            phase: PhaseSpec::Zero,
        };
        assert!(matches!(wide.prepare(&g), Err(Error::InvalidState(_))));
        let neg = InitialState {
            density: DensitySpec::Tabulated {
                samples: vec![-1.0; g.len()],
            },
            phase: PhaseSpec::Zero,
        };
        assert!(neg.prepare(&g).is_err());
        let short = InitialState {
            density: DensitySpec::Tabulated { samples: vec![1.0; 3] },
            phase: PhaseSpec::Zero,
        };
        assert!(short.prepare(&g).is_err());
        let single = Grid::new(1, 16, 2.0).unwrap().single_particle();
        assert!(InitialState::paper_example().prepare(&single).is_err());
    }

    #[test]
    fn shifted_gaussian_has_shifted_mean() {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let s = InitialState {
            density: DensitySpec::Gaussian {
                width: 1.0,
                coupling: 0.0,
                center: [0.5, -0.25],
            },
            phase: PhaseSpec::Zero,
        };
        let p = s.prepare(&g).unwrap();
        let m = crate::observables::moment_x1(&p.psi).unwrap();
        assert!((m - 0.5).abs() < 1e-10);
    }
}
