//! Run-configuration file: TOML with one section per concern. The full
//! raw text is echoed into every report for provenance.

use serde::{Deserialize, Serialize};

use coag_core::dynamics::{StepConfig, StepControl};
use coag_core::profile::{GridConfig, QuadConfig, SolverConfig};
use coag_core::{Error, KernelSpec, ProfileProblem, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelSection,
    pub problem: ProblemSection,
    pub grid: GridConfig,
    #[serde(default)]
    pub quad: QuadSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub laplace: LaplaceSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub dynamics: Option<DynamicsSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: String,
    /// Rate of the constant kernel.
    pub value: Option<f64>,
    /// Growth exponents of the power_sum family.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Lower-bound window endpoints (defaults (1, 2)).
    pub b: Option<f64>,
    #[serde(rename = "B")]
    pub b_upper: Option<f64>,
}

impl KernelSection {
    pub fn build(&self) -> Result<KernelSpec> {
        let window = (self.b.unwrap_or(1.0), self.b_upper.unwrap_or(2.0));
        match self.family.as_str() {
            "constant" => KernelSpec::constant(self.value.unwrap_or(2.0)),
            "brownian" => KernelSpec::brownian(window),
            "power_sum" => {
                let alpha = self.alpha.ok_or_else(|| {
                    Error::config("kernel.alpha is required for the power_sum family")
                })?;
                let beta = self.beta.ok_or_else(|| {
                    Error::config("kernel.beta is required for the power_sum family")
                })?;
                KernelSpec::power_sum(alpha, beta, window)
            }
            "additive" => KernelSpec::additive(),
            "multiplicative" => KernelSpec::multiplicative(),
            other => Err(Error::config(format!(
                "unknown kernel family '{other}' (expected constant | additive | brownian | power_sum)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub rho: f64,
    /// Moment exponent; defaults midway between max(lambda, beta) and rho.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    pub gl_grid: Option<usize>,
    pub gl_sub: Option<usize>,
    pub panel_merge: Option<usize>,
}

impl QuadSection {
    fn build(&self) -> QuadConfig {
        let d = QuadConfig::default();
        QuadConfig {
            gl_grid: self.gl_grid.unwrap_or(d.gl_grid),
            gl_sub: self.gl_sub.unwrap_or(d.gl_sub),
            panel_merge: self.panel_merge.unwrap_or(d.panel_merge),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub damping: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub r_ref: Option<f64>,
    pub trust_fraction: Option<f64>,
}

impl SolverSection {
    fn build(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            damping: self.damping.unwrap_or(d.damping),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            r_ref: self.r_ref,
            trust_fraction: self.trust_fraction.unwrap_or(d.trust_fraction),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceSection {
    /// Number of log-spaced probes on the default ladder.
    pub count: usize,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    /// Identity-residual threshold for the laplace command's exit code.
    pub tolerance: f64,
}

impl Default for LaplaceSection {
    fn default() -> Self {
        LaplaceSection {
            count: 25,
            q_min: None,
            q_max: None,
            tolerance: 1e-3,
        }
    }
}

impl LaplaceSection {
    pub fn ladder(&self, p: &coag_core::Profile) -> Vec<f64> {
        match (self.q_min, self.q_max) {
            (Some(lo), Some(hi)) => {
                let n = self.count.max(2);
                let step = (hi / lo).ln() / (n - 1) as f64;
                (0..n).map(|i| lo * (step * i as f64).exp()).collect()
            }
            _ => coag_core::laplace::default_q_ladder(p, self.count),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub tail_window: Option<(f64, f64)>,
    pub zero_window: Option<(f64, f64)>,
    pub tail_exponent_tol: Option<f64>,
    pub amplitude_tol: Option<f64>,
    pub delta_floor: Option<f64>,
    pub laplace_tol: Option<f64>,
}

impl VerifySection {
    pub fn build(&self, p: &coag_core::Profile, rho: f64) -> coag_core::verify::VerifyConfig {
        let mut cfg = coag_core::verify::VerifyConfig::for_profile(p, rho);
        if let Some(w) = self.tail_window {
            cfg.tail_window = w;
        }
        if let Some(w) = self.zero_window {
            cfg.zero_window = w;
        }
        if let Some(v) = self.tail_exponent_tol {
            cfg.tail_exponent_tol = v;
        }
        if let Some(v) = self.amplitude_tol {
            cfg.amplitude_tol = v;
        }
        if let Some(v) = self.delta_floor {
            cfg.delta_floor = v;
        }
        if let Some(v) = self.laplace_tol {
            cfg.laplace_tol = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub initial: InitialSection,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub step: StepSection,
    /// Number of grid nodes for the dynamics grid (defaults to the main
    /// grid section).
    pub grid: Option<GridConfig>,
    /// Scaling-hypothesis test block.
    pub scaling: Option<ScalingSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(deny_unknown_fields)]
pub enum InitialSection {
    /// phi0 = amplitude * exp(-x / scale)
    Exponential {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// phi0 = amplitude * x^{-decay} inside the grid, zero outside.
    PowerLawCutoff { amplitude: f64, decay: f64 },
}

fn one() -> f64 {
    1.0
}

impl InitialSection {
    pub fn density(&self) -> impl Fn(f64) -> f64 + '_ {
        move |x: f64| match self {
            InitialSection::Exponential { amplitude, scale } => amplitude * (-x / scale).exp(),
            InitialSection::PowerLawCutoff { amplitude, decay } => amplitude * x.powf(-decay),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(deny_unknown_fields)]
pub enum StepSection {
    Adaptive { safety: f64 },
    Fixed { dt: f64 },
}

impl Default for StepSection {
    fn default() -> Self {
        StepSection::Adaptive { safety: 0.5 }
    }
}

impl StepSection {
    pub fn build(&self, snapshot_times: Vec<f64>) -> StepConfig {
        let control = match *self {
            StepSection::Adaptive { safety } => StepControl::Adaptive { safety },
            StepSection::Fixed { dt } => StepControl::Fixed { dt },
        };
        StepConfig {
            control,
            snapshot_times,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    /// Reference profile CSV (sidecar looked up next to it).
    pub reference_profile: String,
    /// Comparison window in rescaled size.
    pub window: (f64, f64),
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_probes() -> usize {
    25
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("{e}")))
    }

    pub fn problem(&self) -> Result<ProfileProblem> {
        let kernel = self.kernel.build()?;
        match self.problem.gamma {
            Some(gamma) => ProfileProblem::new(
                kernel,
                self.problem.rho,
                gamma,
                self.grid.clone(),
                self.quad.build(),
                self.solver.build(),
            ),
            None => ProfileProblem::with_default_gamma(
                kernel,
                self.problem.rho,
                self.grid.clone(),
                self.quad.build(),
                self.solver.build(),
            ),
        }
    }
}
