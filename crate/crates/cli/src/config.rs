//! Run configuration files. Every section is optional and falls back to the
//! reference scenario; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dglab::evolution::{IntegratorConfig, PotentialKind, PotentialSpec, Scheme, Window};
use dglab::signaling::{FitConfig, Scenario};
use dglab::{DGCoefficients, DensitySpec, DiffBackend, Grid, InitialState, PhaseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Fd2,
    Fd4,
    Fd6,
    Fd8,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
    #[serde(default = "default_backend")]
    pub backend: Backend,
}

fn one() -> usize {
    1
}
fn default_n() -> usize {
    256
}
fn default_l() -> f64 {
    8.0
}
fn default_backend() -> Backend {
    Backend::Fd8
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            d: 1,
            n: default_n(),
            l: default_l(),
            backend: default_backend(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Rho0 {
    PaperExample,
    Gaussian {
        width: f64,
        coupling: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// Path to a whitespace or comma separated table, row-major over the grid.
    Tabulated(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase {
    Zero,
    Bilinear(f64),
    Tabulated(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    #[serde(default = "default_rho0")]
    pub rho0: Rho0,
    #[serde(default = "default_phase")]
    pub phase: Phase,
}

fn default_rho0() -> Rho0 {
    Rho0::PaperExample
}
fn default_phase() -> Phase {
    Phase::Bilinear(1.0)
}

impl Default for StateSection {
    fn default() -> Self {
        StateSection {
            rho0: default_rho0(),
            phase: default_phase(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKindName {
    Zero,
    /// `x_2^3`, the reference potential.
    Cubic,
    /// `params` are the polynomial coefficients, constant term first.
    PolynomialInX2,
    /// `params = [omega]`.
    Harmonic,
    /// Values on the particle-2 grid read from `path`.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSection {
    /// Cutoff at `0.75 L`, width `0.1 L`.
    Default,
    None,
    SmoothCutoff { radius: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default = "default_kind")]
    pub kind: PotentialKindName,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub window: WindowSection,
    /// Overall factor applied to the potential.
    #[serde(default = "unit")]
    pub scale: f64,
}

fn default_kind() -> PotentialKindName {
    PotentialKindName::Cubic
}
fn default_window() -> WindowSection {
    WindowSection::Default
}
fn unit() -> f64 {
    1.0
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection {
            kind: default_kind(),
            params: Vec::new(),
            path: None,
            window: default_window(),
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub c3: f64,
    #[serde(default)]
    pub c4: f64,
    #[serde(default)]
    pub c5: f64,
    #[serde(default = "default_floor")]
    pub rho_floor: f64,
}

fn default_floor() -> f64 {
    dglab::hydro::DEFAULT_RHO_FLOOR
}

impl Default for CoefficientSection {
    fn default() -> Self {
        CoefficientSection {
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            c4: 0.0,
            c5: 0.0,
            rho_floor: default_floor(),
        }
    }
}

impl CoefficientSection {
    pub fn to_coefficients(&self) -> Result<DGCoefficients> {
        let all = [self.c1, self.c2, self.c3, self.c4, self.c5];
        if all.iter().any(|c| !c.is_finite()) {
            bail!("coefficients must be finite");
        }
        if !(self.rho_floor > 0.0) {
            bail!("rho_floor must be positive, got {}", self.rho_floor);
        }
        let mut c = DGCoefficients::new(all);
        c.rho_floor = self.rho_floor;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Rk4Full
}
fn default_dt() -> f64 {
    1e-4
}
fn default_t_final() -> f64 {
    0.2
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            scheme: default_scheme(),
            dt: default_dt(),
            t_final: default_t_final(),
            record_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("dglab-out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Svg]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// 3 or 4; by default 3 for Werner-violating coefficients and 4 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

impl RunConfig {
    /// Reads and parses a config file. Relative table paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Rho0::Tabulated(p) = &mut cfg.state.rho0 {
            resolve(p);
        }
        if let Phase::Tabulated(p) = &mut cfg.state.phase {
            resolve(p);
        }
        if let Some(p) = &mut cfg.potential.path {
            resolve(p);
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !self.formats_ok() {
            bail!("output.formats must not repeat a format");
        }
        if let Some(order) = self.oracle.order {
            if order != 3 && order != 4 {
                bail!("oracle.order must be 3 or 4, got {order}");
            }
        }
        if !(self.fit.window > 0.0) {
            bail!("fit.window must be positive");
        }
        if self.fit.max_order == 0 {
            bail!("fit.max_order must be at least 1");
        }
        Ok(())
    }

    fn formats_ok(&self) -> bool {
        let mut f = self.output.formats.clone();
        f.sort();
        f.dedup();
        f.len() == self.output.formats.len()
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }

    pub fn grid(&self) -> Result<Grid> {
        let backend = match self.grid.backend {
            Backend::Fd2 => DiffBackend::FiniteDifference { order: 2 },
            Backend::Fd4 => DiffBackend::FiniteDifference { order: 4 },
            Backend::Fd6 => DiffBackend::FiniteDifference { order: 6 },
            Backend::Fd8 => DiffBackend::FiniteDifference { order: 8 },
            Backend::Spectral => DiffBackend::Spectral,
        };
        Ok(Grid::new(self.grid.d, self.grid.n, self.grid.l)?.with_backend(backend)?)
    }

    pub fn state(&self) -> Result<InitialState> {
        let density = match &self.state.rho0 {
            Rho0::PaperExample => DensitySpec::PaperExample,
            Rho0::Gaussian {
                width,
                coupling,
                center,
            } => DensitySpec::Gaussian {
                width: *width,
                coupling: *coupling,
                center: *center,
            },
            Rho0::Tabulated(p) => DensitySpec::Tabulated { samples: read_table(p)? },
        };
        let phase = match &self.state.phase {
            Phase::Zero => PhaseSpec::Zero,
            Phase::Bilinear(a) => PhaseSpec::Bilinear { a: *a },
            Phase::Tabulated(p) => PhaseSpec::Tabulated { samples: read_table(p)? },
        };
        Ok(InitialState { density, phase })
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        let p = &self.potential;
        let expect_params = |count: usize| -> Result<()> {
            if p.params.len() != count {
                bail!("potential kind {:?} takes {count} params, got {}", p.kind, p.params.len());
            }
            Ok(())
        };
        if p.path.is_some() && p.kind != PotentialKindName::Tabulated {
            bail!("potential.path is only valid for kind = \"tabulated\"");
        }
        let kind = match p.kind {
            PotentialKindName::Zero => {
                expect_params(0)?;
                PotentialKind::Zero
            }
            PotentialKindName::Cubic => {
                expect_params(0)?;
                PotentialKind::PolynomialInX2 {
                    coefficients: vec![0.0, 0.0, 0.0, 1.0],
                }
            }
            PotentialKindName::PolynomialInX2 => {
                if p.params.is_empty() {
                    bail!("polynomial_in_x2 needs at least one coefficient in params");
                }
                PotentialKind::PolynomialInX2 {
                    coefficients: p.params.clone(),
                }
            }
            PotentialKindName::Harmonic => {
                expect_params(1)?;
                PotentialKind::Harmonic { omega: p.params[0] }
            }
            PotentialKindName::Tabulated => {
                expect_params(0)?;
                let path = p.path.as_ref().context("tabulated potential needs potential.path")?;
                PotentialKind::Tabulated {
                    samples: read_table(path)?,
                }
            }
        };
        let window = match p.window {
            WindowSection::Default if p.kind == PotentialKindName::Tabulated => Window::None,
            WindowSection::Default => Window::default_for(self.grid.l),
            WindowSection::None => Window::None,
            WindowSection::SmoothCutoff { radius, width } => Window::SmoothCutoff { radius, width },
        };
        if !p.scale.is_finite() {
            bail!("potential.scale must be finite");
        }
        let spec = PotentialSpec { kind, window };
        Ok(if p.scale == 1.0 { spec } else { spec.scaled(p.scale)? })
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        let cfg = IntegratorConfig {
            dt: self.integrator.dt,
            t_final: self.integrator.t_final,
            scheme: self.integrator.scheme,
            record_stride: self.integrator.record_stride,
        };
        cfg.steps()?;
        Ok(cfg)
    }

    /// Everything needed for a twin run, validated.
    pub fn scenario(&self) -> Result<Scenario> {
        let grid = self.grid()?;
        let potential = self.potential()?;
        potential.sample(&grid)?;
        Ok(Scenario {
            grid,
            state: self.state()?,
            potential,
            coefficients: self.coefficients.to_coefficients()?,
            integrator: self.integrator()?,
            fit: self.fit,
        })
    }
}

/// Numbers separated by whitespace or commas; `#` starts a comment.
pub fn read_table(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read table {}", path.display()))?;
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .with_context(|| format!("{}:{}: bad number {tok:?}", path.display(), line_no + 1))?;
            out.push(v);
        }
    }
    Ok(out)
}

/// Coefficient points for a sweep: one point per line, five numbers each.
pub fn read_points(path: &Path) -> Result<Vec<DGCoefficients>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read sweep points {}", path.display()))?;
    let mut points = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}: bad number", path.display(), line_no + 1))?;
        let c: [f64; 5] = values
            .try_into()
            .map_err(|v: Vec<f64>| anyhow::anyhow!("{}:{}: expected 5 values, got {}", path.display(), line_no + 1, v.len()))?;
        points.push(DGCoefficients::new(c));
    }
    if points.is_empty() {
        bail!("sweep point list {} is empty", path.display());
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    #[test]
    fn empty_file_is_the_reference_scenario() {
        let cfg = parse("").unwrap();
        let s = cfg.scenario().unwrap();
        let reference = Scenario::paper_example(DGCoefficients::default()).unwrap();
        assert_eq!(s, reference);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[grid]\nn = 64\nm = 3\n").is_err());
        assert!(parse("[grids]\nn = 64\n").is_err());
        assert!(parse("[coefficients]\nc6 = 1.0\n").is_err());
        assert!(parse("[fit]\nwindw = 0.1\n").is_err());
    }

    #[test]
    fn state_variants_parse() {
        let cfg = parse(
            "[state]\nrho0 = { gaussian = { width = 1.0, coupling = 0.5 } }\nphase = { bilinear = 2.0 }\n",
        )
        .unwrap();
        assert_eq!(
            cfg.state().unwrap(),
            InitialState {
                density: DensitySpec::Gaussian {
                    width: 1.0,
                    coupling: 0.5,
                    center: [0.0, 0.0]
                },
                phase: PhaseSpec::Bilinear { a: 2.0 },
            }
        );
        let cfg = parse("[state]\nphase = \"zero\"\n").unwrap();
        assert_eq!(cfg.state().unwrap().phase, PhaseSpec::Zero);
    }

    #[test]
    fn potential_params_are_checked() {
        assert!(parse("[potential]\nkind = \"harmonic\"\n").unwrap().potential().is_err());
        let cfg = parse("[potential]\nkind = \"harmonic\"\nparams = [2.0]\nwindow = \"none\"\n").unwrap();
        assert_eq!(cfg.potential().unwrap(), PotentialSpec::harmonic(2.0));
        let cfg = parse("[potential]\nscale = 0.5\n").unwrap();
        assert_eq!(
            cfg.potential().unwrap(),
            PotentialSpec::polynomial(vec![0.0, 0.0, 0.0, 0.5]).with_window(Window::default_for(8.0))
        );
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(parse("[grid]\nn = 7\n").unwrap().scenario().is_err());
        assert!(parse("[integrator]\ndt = 0.03\n").unwrap().scenario().is_err());
        assert!(parse("[oracle]\norder = 5\n").is_err());
        assert!(parse("[output]\nformats = [\"json\", \"json\"]\n").is_err());
        assert!(parse("[coefficients]\nrho_floor = 0.0\n").unwrap().scenario().is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = parse("[coefficients]\nc2 = 0.05\n").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn points_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.txt");
        fs::write(&p, "# header\n0 0 0 0 0\n0.05, 0, 0, -0.05, 0\n").unwrap();
        let pts = read_points(&p).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].c4, -0.05);
        fs::write(&p, "# nothing\n").unwrap();
        assert!(read_points(&p).is_err());
        fs::write(&p, "1 2 3\n").unwrap();
        assert!(read_points(&p).is_err());
    }
}
