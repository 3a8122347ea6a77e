//! Predictions for the potential-dependent part of the time derivatives of
//! `<x_1^1>` at t = 0, computed by quadrature from the initial data alone.
//!
//! With `M(t) = int x_1^1 rho_t` and `V` acting on particle 2 only:
//!
//! ```text
//! ess M'''(0)  = -int rho0 d_1 ess(dR/dt)
//! ess M''''(0) = c1 * case1 + (c2 + 2 c5) * case2       (c3 = 0, c4 = -c1)
//! ```
//!
//! `ess(dR/dt)` is obtained as a directional derivative of `r_total` along
//! `-i V psi0`; the two fourth-order integrals are evaluated both in their
//! commutator form and in their expanded form, and the two must agree.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, ComplexField, Grid, RealField};
use crate::hydro::{density, phase_gradient, r_term, Classification, DGCoefficients, Functional};

/// Agreement required between two successive Richardson estimates.
pub const GATEAUX_TOLERANCE: f64 = 1e-7;

/// Agreement required between the two algebraic forms of a fourth-order integral.
pub const ALGEBRA_TOLERANCE: f64 = 1e-6;

/// Magnitude below which both forms count as zero.
const REGRESSION_FLOOR: f64 = 1e-6;

const MAX_HALVINGS: usize = 24;

/// Bulk of the density used to judge convergence: `rho0 > BULK * max rho0`.
const BULK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    C1Block,
    C2Block,
    C3,
    C4,
    C5Block,
}

impl Block {
    fn of(term: Functional) -> Self {
        match term {
            Functional::CurrentDivergence => Block::C1Block,
            Functional::DensityLaplacian => Block::C2Block,
            Functional::CurrentSquare => Block::C3,
            Functional::CurrentDensityGradient => Block::C4,
            Functional::DensityGradientSquare => Block::C5Block,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Gateaux,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssPrediction {
    pub order: usize,
    pub value: f64,
    pub decomposition: BTreeMap<Block, f64>,
    pub method: Method,
}

impl EssPrediction {
    fn from_blocks(order: usize, decomposition: BTreeMap<Block, f64>, method: Method) -> Self {
        let value = compensated_sum(decomposition.values().copied());
        EssPrediction {
            order,
            value,
            decomposition,
            method,
        }
    }
}

/// Grid description embedded in oracle reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl From<&Grid> for GridSummary {
    fn from(g: &Grid) -> Self {
        GridSummary {
            d: g.dims_per_particle(),
            n: g.points_per_axis(),
            l: g.half_extent(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub order: usize,
    pub value: f64,
    pub decomposition: BTreeMap<Block, f64>,
    pub method: Method,
    pub grid: GridSummary,
    pub normalization_factor: f64,
}

impl OracleReport {
    pub fn new(prediction: EssPrediction, grid: &Grid, normalization_factor: f64) -> Self {
        OracleReport {
            order: prediction.order,
            value: prediction.value,
            decomposition: prediction.decomposition,
            method: prediction.method,
            grid: grid.into(),
            normalization_factor,
        }
    }
}

/// Confirms that `v` is constant along every particle-1 axis.
fn check_particle2(v: &RealField) -> Result<()> {
    let g = v.grid();
    if g.particles() != 2 {
        return Err(Error::InvalidGrid("oracle needs a two-particle grid".into()));
    }
    let block = g.points_per_axis().pow(g.dims_per_particle() as u32);
    let s = v.samples();
    let tol = 1e-14 * v.max_abs();
    let first = &s[..block];
    for chunk in s.chunks_exact(block).skip(1) {
        if chunk.iter().zip(first).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::PotentialNotParticle2);
        }
    }
    Ok(())
}

fn particle2_axes(g: &Grid) -> std::ops::Range<usize> {
    g.dims_per_particle()..g.axes()
}

/// Components of `grad V`; zero along particle-1 axes by construction.
fn grad_v(v: &RealField) -> Vec<Option<RealField>> {
    let g = *v.grid();
    (0..g.axes())
        .map(|a| {
            particle2_axes(&g)
                .contains(&a)
                .then(|| v.diff(a).expect("axis in range"))
        })
        .collect()
}

/// `div(rho0 grad V)`.
fn flux_divergence(rho0: &RealField, v: &RealField) -> Result<RealField> {
    rho0.same_grid(v.grid())?;
    check_particle2(v)?;
    let mut acc = RealField::zeros(*rho0.grid());
    for (a, dv) in grad_v(v).into_iter().enumerate() {
        if let Some(dv) = dv {
            let d = rho0.mul(&dv)?.diff(a)?;
            for (x, y) in acc.samples_mut().iter_mut().zip(d.samples()) {
                *x += y;
            }
        }
    }
    Ok(acc)
}

/// Potential-dependent part of `d/dt div j` at t = 0: `-div(rho0 grad V)`.
pub fn ess_div_j_dot(rho0: &RealField, v: &RealField) -> Result<RealField> {
    Ok(flux_divergence(rho0, v)?.scale(-1.0))
}

fn rotate(psi: &ComplexField, v: &RealField, eps: f64) -> ComplexField {
    psi.zip_map(v, |z, v| z * Complex64::from_polar(1.0, -eps * v))
        .expect("same grid")
}

/// Directional derivative of `psi -> r_term(psi, term)` along `-i V psi0`.
fn gateaux_term(psi0: &ComplexField, v: &RealField, term: Functional, coeffs: &DGCoefficients) -> Result<RealField> {
    let rho0 = density(psi0);
    let peak = rho0.max_abs();
    let bulk: Vec<usize> = (0..rho0.samples().len())
        .filter(|&i| rho0.samples()[i] > BULK * peak)
        .collect();
    let vmax = bulk.iter().fold(0.0f64, |m, &i| m.max(v.samples()[i].abs()));
    if vmax == 0.0 {
        return Ok(RealField::zeros(*psi0.grid()));
    }

    let central = |eps: f64| -> RealField {
        let plus = r_term(&rotate(psi0, v, eps), term, coeffs);
        let minus = r_term(&rotate(psi0, v, -eps), term, coeffs);
        (&plus - &minus).scale(0.5 / eps)
    };
    let bulk_change = |a: &RealField, b: &RealField| -> (f64, f64) {
        bulk.iter().fold((0.0f64, 0.0f64), |(d, m), &i| {
            let (x, y) = (a.samples()[i], b.samples()[i]);
            (d.max((x - y).abs()), m.max(x.abs()))
        })
    };

    let mut eps = 0.05 / vmax;
    let mut coarse = central(eps);
    let mut previous: Option<RealField> = None;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        eps *= 0.5;
        let fine = central(eps);
        let extrapolated = fine.zip_map(&coarse, |f, c| (4.0 * f - c) / 3.0)?;
        if let Some(prev) = &previous {
            let (diff, size) = bulk_change(&extrapolated, prev);
            change = diff / size.max(1.0);
            if change <= GATEAUX_TOLERANCE {
                if !extrapolated.is_finite() {
                    return Err(Error::NonFinite("Gateaux derivative".into()));
                }
                return Ok(extrapolated);
            }
        }
        previous = Some(extrapolated);
        coarse = fine;
    }
    Err(Error::RichardsonDiverged(change))
}

fn gateaux_blocks(psi0: &ComplexField, v: &RealField, coeffs: &DGCoefficients) -> Result<Vec<(Block, RealField)>> {
    psi0.same_grid(v.grid())?;
    check_particle2(v)?;
    Functional::ALL
        .iter()
        .filter(|t| coeffs.get(**t) != 0.0)
        .map(|&t| Ok((Block::of(t), gateaux_term(psi0, v, t, coeffs)?.scale(coeffs.get(t)))))
        .collect()
}

/// Potential-dependent part of `dR/dt` at t = 0.
pub fn ess_dt_r(psi0: &ComplexField, v: &RealField, coeffs: &DGCoefficients) -> Result<RealField> {
    let mut acc = RealField::zeros(*psi0.grid());
    for (_, f) in gateaux_blocks(psi0, v, coeffs)? {
        acc = &acc + &f;
    }
    Ok(acc)
}

/// Third time derivative of `<x_1^1>` at t = 0, potential-dependent part.
pub fn ess3_moment(psi0: &ComplexField, v: &RealField, coeffs: &DGCoefficients) -> Result<EssPrediction> {
    let rho0 = density(psi0);
    let mut decomposition: BTreeMap<Block, f64> = [Block::C1Block, Block::C2Block, Block::C3, Block::C4, Block::C5Block]
        .into_iter()
        .map(|b| (b, 0.0))
        .collect();
    for (block, f) in gateaux_blocks(psi0, v, coeffs)? {
        let value = -rho0.mul(&f.diff(0)?)?.integrate();
        decomposition.insert(block, value);
    }
    Ok(EssPrediction::from_blocks(3, decomposition, Method::Gateaux))
}

fn regression(name: &'static str, simplified: f64, unsimplified: f64, terms: &[f64]) -> Result<f64> {
    let scale = terms
        .iter()
        .chain([simplified, unsimplified].iter())
        .fold(REGRESSION_FLOOR, |m, v| m.max(v.abs()));
    if !(simplified - unsimplified).abs().le(&(ALGEBRA_TOLERANCE * scale)) {
        return Err(Error::AlgebraRegression {
            name,
            simplified,
            unsimplified,
        });
    }
    Ok(simplified)
}

/// Both forms of the case-1 integral, with `c1 = 1`: (commutator, expanded, [expanded terms]).
pub fn ess4_case1_forms(psi0: &ComplexField, v: &RealField) -> Result<(f64, f64, [f64; 2])> {
    let g = *psi0.grid();
    check_particle2(v)?;
    psi0.same_grid(v.grid())?;
    let rho0 = density(psi0);
    let grad_s = phase_gradient(psi0);
    let dv = grad_v(v);

    // -int rho0 [lap, grad V] . grad d_1 S
    let mut commutator = RealField::zeros(g);
    for (a, f) in dv.iter().enumerate() {
        if let Some(f) = f {
            let u = grad_s.component(a).diff(0)?;
            let term = &f.mul(&u)?.laplacian() - &f.mul(&u.laplacian())?;
            commutator = &commutator + &term;
        }
    }
    let simplified = -rho0.mul(&commutator)?.integrate();

    // -int div(rho0 grad V) d_1 lap S - int rho0 d_1 lap(grad V . grad S)
    let lap_s = grad_s.divergence();
    let first = -flux_divergence(&rho0, v)?.mul(&lap_s.diff(0)?)?.integrate();
    let mut v_dot_s = RealField::zeros(g);
    for (a, f) in dv.iter().enumerate() {
        if let Some(f) = f {
            v_dot_s = &v_dot_s + &f.mul(grad_s.component(a))?;
        }
    }
    let second = -rho0.mul(&v_dot_s.laplacian().diff(0)?)?.integrate();
    let out = [simplified, first + second];
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("case-1 integral".into()));
    }
    Ok((simplified, first + second, [first, second]))
}

/// Fourth-order case-1 integral (`c1 = 1`, `c4 = -1`), checked against its expanded form.
pub fn ess4_case1(psi0: &ComplexField, v: &RealField) -> Result<f64> {
    let (s, u, terms) = ess4_case1_forms(psi0, v)?;
    regression("ess4_case1", s, u, &terms)
}

/// Both forms of the case-2 integral, with `c2 = 1`: (commutator, expanded, [expanded terms]).
pub fn ess4_case2_forms(rho0: &RealField, v: &RealField) -> Result<(f64, f64, [f64; 2])> {
    let eps = DGCoefficients::default().rho_floor;
    let g = flux_divergence(rho0, v)?;
    let inv = |f: &RealField, p: i32| -> RealField {
        f.zip_map(rho0, |x, r| x / (r + eps).powi(p)).expect("same grid")
    };

    // int ([lap, 1/rho0] d_1 rho0) div(rho0 grad V)
    let d1 = rho0.diff(0)?;
    let bracket = &inv(&d1, 1).laplacian() - &inv(&d1.laplacian(), 1);
    let simplified = bracket.mul(&g)?.integrate();

    // -int g d_1(lap rho0 / rho0) + int rho0 d_1((lap rho0 / rho0^2) g - lap g / rho0)
    let lap_rho = rho0.laplacian();
    let first = -g.mul(&inv(&lap_rho, 1).diff(0)?)?.integrate();
    let inner = &inv(&lap_rho.mul(&g)?, 2) - &inv(&g.laplacian(), 1);
    let second = rho0.mul(&inner.diff(0)?)?.integrate();
    let out = [simplified, first + second];
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("case-2 integral".into()));
    }
    Ok((simplified, first + second, [first, second]))
}

/// Fourth-order case-2 integral (`c2 = 1`), checked against its expanded form.
pub fn ess4_case2(rho0: &RealField, v: &RealField) -> Result<f64> {
    let (s, u, terms) = ess4_case2_forms(rho0, v)?;
    regression("ess4_case2", s, u, &terms)
}

/// Fourth time derivative of `<x_1^1>` at t = 0, potential-dependent part,
/// for coefficients that satisfy the Werner condition.
pub fn ess4_werner(psi0: &ComplexField, v: &RealField, coeffs: &DGCoefficients) -> Result<EssPrediction> {
    let class = coeffs.classify();
    if class == Classification::WernerViolating {
        return Err(Error::WernerViolating);
    }
    check_particle2(v)?;
    let mut decomposition: BTreeMap<Block, f64> = [Block::C1Block, Block::C2Block, Block::C3, Block::C4, Block::C5Block]
        .into_iter()
        .map(|b| (b, 0.0))
        .collect();
    if class == Classification::WernerSatisfiedSignaling {
        if coeffs.c1 != 0.0 {
            decomposition.insert(Block::C1Block, coeffs.c1 * ess4_case1(psi0, v)?);
        }
        let weight = coeffs.c2 + 2.0 * coeffs.c5;
        if weight.abs() > crate::hydro::CLASSIFY_TOLERANCE {
            let case2 = ess4_case2(&density(psi0), v)?;
            decomposition.insert(Block::C2Block, coeffs.c2 * case2);
            decomposition.insert(Block::C5Block, 2.0 * coeffs.c5 * case2);
        }
    }
    Ok(EssPrediction::from_blocks(4, decomposition, Method::ClosedForm))
}

/// The prediction matching the coefficient class: none for linear
/// coefficients, third order when the Werner condition fails, fourth order
/// otherwise.
pub fn predict(psi0: &ComplexField, v: &RealField, coeffs: &DGCoefficients) -> Result<Option<EssPrediction>> {
    match coeffs.classify() {
        Classification::Linear => Ok(None),
        Classification::WernerViolating => ess3_moment(psi0, v, coeffs).map(Some),
        _ => ess4_werner(psi0, v, coeffs).map(Some),
    }
}
