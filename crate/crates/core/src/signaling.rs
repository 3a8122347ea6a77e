//! Twin runs: one initial state evolved with and without the particle-2
//! potential. The difference of particle-1 observables is the signal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_in, IntegratorConfig, PotentialSpec, Scheme, Trajectory, Window};
use crate::grid::{ComplexField, Grid, RealField};
use crate::hydro::{Classification, DGCoefficients};
use crate::observables::{fit_taylor, l1_distance, marginal_rho1, moment_x1, TaylorFit, TimeSeries};
use crate::oracle::{predict, EssPrediction};
use crate::state::InitialState;

/// A fitted `k! a_k` counts as present when it exceeds this many uncertainties.
pub const SIGNIFICANCE: f64 = 5.0;

/// Absolute noise level of a twin-run difference series, added to the
/// window-halving uncertainty of every coefficient.
pub const DELTA_NOISE_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Highest order scanned by [`detect_order`].
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    /// Fit window in time units, starting at t = 0.
    #[serde(default = "default_window")]
    pub window: f64,
    /// Extra polynomial degrees above the order being tested.
    #[serde(default = "default_guard")]
    pub guard: usize,
}

fn default_max_order() -> usize {
    4
}
fn default_window() -> f64 {
    0.1
}
fn default_guard() -> usize {
    3
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_order: default_max_order(),
            window: default_window(),
            guard: default_guard(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub grid: Grid,
    pub state: InitialState,
    pub potential: PotentialSpec,
    pub coefficients: DGCoefficients,
    pub integrator: IntegratorConfig,
    pub fit: FitConfig,
}

impl Scenario {
    /// Reference density with phase `x_1 x_2`, windowed `V = x_2^3`,
    /// `n = 256`, `L = 8`, `dt = 1e-4` up to `t = 0.2`.
    pub fn paper_example(coefficients: DGCoefficients) -> Result<Self> {
        let grid = Grid::new(1, 256, 8.0)?;
        Ok(Scenario {
            grid,
            state: InitialState::paper_example(),
            potential: PotentialSpec::cubic().with_window(Window::default_for(8.0)),
            coefficients,
            integrator: IntegratorConfig::default(),
            fit: FitConfig::default(),
        })
    }

    pub fn with_coefficients(&self, coefficients: DGCoefficients) -> Self {
        Scenario {
            coefficients,
            ..self.clone()
        }
    }
}

/// A coefficient estimate with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub order: usize,
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub order: Option<usize>,
    /// Estimate at the detected order, if any.
    pub estimate: Option<Estimate>,
    /// Fit used for each scanned order `k = 1..=max_order`.
    pub fits: Vec<TaylorFit>,
}

impl Detection {
    /// `k! a_k` from the fit that tested order `k`.
    pub fn estimate_at(&self, k: usize) -> Option<Estimate> {
        let fit = self.fits.get(k.checked_sub(1)?)?;
        Some(Estimate {
            order: k,
            value: fit.derivative(k),
            uncertainty: coefficient_uncertainty(fit, k),
        })
    }
}

fn coefficient_uncertainty(fit: &TaylorFit, k: usize) -> f64 {
    let floor: f64 = (1..=k).map(|i| i as f64).product::<f64>() * DELTA_NOISE_FLOOR / fit.window.powi(k as i32);
    fit.derivative_uncertainty(k) + floor
}

/// Smallest `k <= max_order` whose fitted `k! a_k` (degree `k + guard` fit)
/// exceeds [`SIGNIFICANCE`] times its uncertainty.
pub fn detect_order(delta: &TimeSeries, fit: &FitConfig) -> Result<Detection> {
    let mut fits = Vec::with_capacity(fit.max_order);
    let mut found = None;
    for k in 1..=fit.max_order {
        let f = fit_taylor(delta, k + fit.guard, fit.window)?;
        let value = f.derivative(k);
        let sigma = coefficient_uncertainty(&f, k);
        if found.is_none() && value.abs() > SIGNIFICANCE * sigma {
            found = Some(Estimate {
                order: k,
                value,
                uncertainty: sigma,
            });
        }
        fits.push(f);
    }
    Ok(Detection {
        order: found.map(|e| e.order),
        estimate: found,
        fits,
    })
}

/// Particle-1 marginals along both runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalRecord {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub with_potential: Vec<Vec<f64>>,
    pub baseline: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub class: Classification,
    pub coefficients: DGCoefficients,
    pub delta_moment: TimeSeries,
    pub delta_marginal_l1: TimeSeries,
    pub detected_order: Option<usize>,
    /// `k! a_k` at the detected order, or at the predicted order when
    /// nothing was detected.
    pub fitted: Option<Estimate>,
    pub oracle: Option<EssPrediction>,
    pub agreement_ratio: Option<f64>,
    pub normalization_factor: f64,
    pub detection: Detection,
}

#[derive(Debug, Clone)]
pub struct TwinRun {
    pub report: SignalReport,
    pub marginals: MarginalRecord,
}

type Record = (f64, RealField);

fn observe(_t: f64, psi: &ComplexField) -> Record {
    let m = moment_x1(psi).expect("two-particle grid");
    let r = marginal_rho1(psi).expect("two-particle grid");
    (m, r)
}

fn run_one(
    psi0: &ComplexField,
    v: &RealField,
    coeffs: &DGCoefficients,
    cfg: &IntegratorConfig,
    label: &'static str,
) -> Result<Trajectory<Record>> {
    evolve_in(psi0, v, coeffs, cfg, observe).map_err(|e| Error::RunFailed {
        run: label,
        source: Box::new(e),
    })
}

fn moment_series(t: &Trajectory<Record>) -> Result<TimeSeries> {
    TimeSeries::new(t.times.clone(), t.records.iter().map(|r| r.0).collect())
}

/// Evolves the prepared state under `first` and `second` concurrently and
/// returns the moment difference `<x_1>_first - <x_1>_second` together with
/// both trajectories.
fn twin(
    psi0: &ComplexField,
    first: &RealField,
    second: &RealField,
    coeffs: &DGCoefficients,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory<Record>, Trajectory<Record>)> {
    let (a, b) = rayon::join(
        || run_one(psi0, first, coeffs, cfg, "potential"),
        || run_one(psi0, second, coeffs, cfg, "baseline"),
    );
    Ok((a?, b?))
}

/// Difference `<x_1>(first) - <x_1>(second)` for two arbitrary potentials.
pub fn twin_run_between(s: &Scenario, first: &PotentialSpec, second: &PotentialSpec) -> Result<TimeSeries> {
    let prepared = s.state.prepare(&s.grid)?;
    let v1 = first.sample(&s.grid)?;
    let v2 = second.sample(&s.grid)?;
    let (a, b) = twin(&prepared.psi, &v1, &v2, &s.coefficients, &s.integrator)?;
    moment_series(&a)?.difference(&moment_series(&b)?)
}

/// The full protocol for one scenario.
pub fn twin_run(s: &Scenario) -> Result<TwinRun> {
    let prepared = s.state.prepare(&s.grid)?;
    let v = s.potential.sample(&s.grid)?;
    let zero = RealField::zeros(s.grid);
    let (with, without) = twin(&prepared.psi, &v, &zero, &s.coefficients, &s.integrator)?;

    let delta_moment = moment_series(&with)?.difference(&moment_series(&without)?)?;
    let l1 = with
        .records
        .iter()
        .zip(&without.records)
        .map(|(a, b)| l1_distance(&a.1, &b.1))
        .collect::<Result<Vec<_>>>()?;
    let delta_marginal_l1 = TimeSeries::new(with.times.clone(), l1)?;

    let detection = detect_order(&delta_moment, &s.fit)?;
    let oracle = predict(&prepared.psi, &v, &s.coefficients)?;
    let fitted = detection
        .estimate
        .or_else(|| oracle.as_ref().and_then(|o| detection.estimate_at(o.order)));
    let agreement_ratio = match (&fitted, &oracle) {
        (Some(f), Some(o)) if o.value != 0.0 && f.order == o.order => Some(f.value / o.value),
        _ => None,
    };

    let single = s.grid.single_particle();
    let x = (0..single.len())
        .map(|i| single.coordinate(single.axis_index(i, 0)))
        .collect();
    let marginals = MarginalRecord {
        x,
        times: with.times.clone(),
        with_potential: with.records.into_iter().map(|r| r.1.into_samples()).collect(),
        baseline: without.records.into_iter().map(|r| r.1.into_samples()).collect(),
    };

    Ok(TwinRun {
        report: SignalReport {
            class: s.coefficients.classify(),
            coefficients: s.coefficients,
            delta_moment,
            delta_marginal_l1,
            detected_order: detection.order,
            fitted,
            oracle,
            agreement_ratio,
            normalization_factor: prepared.normalization_factor,
            detection,
        },
        marginals,
    })
}

/// Expected detected order per class: `None` means no signal, `Some(k)`
/// means exactly `k` for Werner-satisfying signaling and at most `k` for
/// Werner-violating coefficients.
pub fn partition_holds(class: Classification, detected: Option<usize>) -> bool {
    match class {
        Classification::Linear | Classification::GisinFree => detected.is_none(),
        Classification::WernerSatisfiedSignaling => detected == Some(4),
        Classification::WernerViolating => matches!(detected, Some(k) if k <= 3),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub coefficients: DGCoefficients,
    pub class: Classification,
    pub detected_order: Option<usize>,
    pub fitted: Option<f64>,
    pub oracle: Option<f64>,
    pub agreement_ratio: Option<f64>,
    pub partition_ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Detected orders seen per class.
    pub partition: BTreeMap<Classification, Vec<Option<usize>>>,
    pub partition_ok: bool,
}

/// One twin run per coefficient point, run concurrently. Failed points are
/// recorded and do not stop the sweep.
pub fn sweep(base: &Scenario, points: &[DGCoefficients]) -> Result<SweepSummary> {
    use rayon::prelude::*;
    if points.is_empty() {
        return Err(Error::EmptySweep);
    }
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|c| {
            let class = c.classify();
            match twin_run(&base.with_coefficients(*c)) {
                Ok(run) => {
                    let r = run.report;
                    SweepRow {
                        coefficients: *c,
                        class,
                        detected_order: r.detected_order,
                        fitted: r.fitted.map(|f| f.value),
                        oracle: r.oracle.map(|o| o.value),
                        agreement_ratio: r.agreement_ratio,
                        partition_ok: partition_holds(class, r.detected_order),
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    coefficients: *c,
                    class,
                    detected_order: None,
                    fitted: None,
                    oracle: None,
                    agreement_ratio: None,
                    partition_ok: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut partition: BTreeMap<Classification, Vec<Option<usize>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.error.is_none()) {
        partition.entry(r.class).or_default().push(r.detected_order);
    }
    let partition_ok = rows.iter().all(|r| r.partition_ok);
    Ok(SweepSummary {
        rows,
        partition,
        partition_ok,
    })
}

/// A small scenario for tests and the validation suite.
pub fn quick_scenario(n: usize, coefficients: DGCoefficients, t_final: f64) -> Result<Scenario> {
    let l = 8.0;
    Ok(Scenario {
        grid: Grid::new(1, n, l)?,
        state: InitialState::paper_example(),
        potential: PotentialSpec::cubic().with_window(Window::default_for(l)),
        coefficients,
        integrator: IntegratorConfig {
            dt: 1e-4,
            t_final,
            scheme: Scheme::Rk4Full,
            record_stride: 1,
        },
        fit: FitConfig {
            window: t_final,
            ..FitConfig::default()
        },
    })
}
