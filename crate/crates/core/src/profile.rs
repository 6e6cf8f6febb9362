//! Tabulated profiles on a logarithmic grid with power-law closures.
//!
//! A profile is the pair (node values, closure exponents): below the first
//! node it continues as f0 (x/x0)^{-p0}, above the last as
//! f_{n-1} (x/x_{n-1})^{-pinf}. Interpolation is linear in log-log
//! coordinates, so the representation is exact on power laws and every
//! weighted moment has a closed form per panel. All integral machinery
//! lives here; the coagulation gain operator built on top of it is in
//! [`crate::gain`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::quad::powerlaw_panel_moment;

/// Positive floor shielding divisions by node values that are exactly zero.
pub const VALUE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    grid: Grid,
    values: Vec<f64>,
    zero_exponent: f64,
    tail_exponent: f64,
}

impl Profile {
    /// Nonnegative tabulated values with closure exponents. The near-zero
    /// exponent must keep x f(x) integrable at the origin (p0 < 2); the
    /// tail exponent is only constrained where a specific integral needs
    /// it, since its admissible range depends on the kernel.
    pub fn new(grid: Grid, values: Vec<f64>, zero_exponent: f64, tail_exponent: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "profile needs one value per node: {} values, {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("profile values must be finite and nonnegative"));
        }
        if !(zero_exponent < 2.0) {
            return Err(Error::config(format!(
                "near-zero closure exponent must satisfy p0 < 2 so that x f(x) is locally integrable, got {zero_exponent}"
            )));
        }
        if !tail_exponent.is_finite() || !zero_exponent.is_finite() {
            return Err(Error::config("closure exponents must be finite"));
        }
        Ok(Profile {
            grid,
            values,
            zero_exponent,
            tail_exponent,
        })
    }

    /// Pure power law amplitude * x^{-decay} with matching closures.
    pub fn power_law(grid: Grid, amplitude: f64, decay: f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| amplitude * x.powf(-decay)).collect();
        Profile::new(grid, values, decay, decay)
    }

    /// Tabulate an arbitrary density on the grid.
    pub fn tabulate(
        grid: Grid,
        f: impl Fn(f64) -> f64,
        zero_exponent: f64,
        tail_exponent: f64,
    ) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Profile::new(grid, values, zero_exponent, tail_exponent)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn zero_exponent(&self) -> f64 {
        self.zero_exponent
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    pub fn is_trivial(&self) -> bool {
        self.values.iter().all(|&v| v <= VALUE_FLOOR)
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Profile::new(self.grid.clone(), values, self.zero_exponent, self.tail_exponent)
    }

    /// Evaluate the interpolant; exact at nodes, power-law closures
    /// beyond the ends.
    pub fn interp_eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("profile evaluation needs x > 0, got {x}")));
        }
        Ok(self.density(x))
    }

    /// Unchecked interpolation for inner loops.
    #[inline]
    pub fn density(&self, x: f64) -> f64 {
        debug_assert!(x > 0.0);
        let nodes = self.grid.nodes();
        let n = nodes.len();
        if x <= nodes[0] {
            return self.values[0] * (x / nodes[0]).powf(-self.zero_exponent);
        }
        if x >= nodes[n - 1] {
            return self.values[n - 1] * (x / nodes[n - 1]).powf(-self.tail_exponent);
        }
        let i = self.grid.panel_of(x);
        let (xa, xb) = (nodes[i], nodes[i + 1]);
        let (fa, fb) = (self.values[i], self.values[i + 1]);
        if x == xa {
            return fa;
        }
        if x == xb {
            return fb;
        }
        if fa > VALUE_FLOOR && fb > VALUE_FLOOR {
            let m = (fb / fa).ln() / (xb / xa).ln();
            fa * (x / xa).powf(m)
        } else {
            // Degenerate (zero) data: linear in x keeps continuity.
            fa + (fb - fa) * (x - xa) / (xb - xa)
        }
    }

    /// Rescale f -> a^{1+lambda} f(a x), retabulated on the same grid.
    /// Closure exponents are scale-invariant and carry over.
    pub fn rescaled(&self, a: f64, lambda: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::domain(format!("rescaling factor must be positive, got {a}")));
        }
        let amp = a.powf(1.0 + lambda);
        let values = self
            .grid
            .nodes()
            .iter()
            .map(|&x| amp * self.density(a * x))
            .collect();
        self.with_values(values)
    }

    /// Partial mass M(x_i) = ∫_0^{x_i} y f(y) dy at every node, with the
    /// analytic zero-closure contribution. Always finite since p0 < 2.
    pub fn partial_mass_at_nodes(&self) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        let mut out = vec![0.0; n];
        out[0] = self.values[0] * nodes[0] * nodes[0] / (2.0 - self.zero_exponent);
        for i in 1..n {
            out[i] = out[i - 1]
                + powerlaw_panel_moment(nodes[i - 1], nodes[i], self.values[i - 1], self.values[i], 1.0);
        }
        out
    }

    /// ∫_lower^upper y^chi f(y) dy with analytic closure contributions.
    /// `upper` may be infinite, in which case the tail exponent must make
    /// the integral converge (chi - pinf < -1).
    pub fn weighted_moment(&self, chi: f64, lower: f64, upper: f64) -> Result<f64> {
        if !(lower >= 0.0) || !(upper > lower) {
            return Err(Error::domain(format!(
                "weighted moment needs 0 <= lower < upper, got [{lower}, {upper}]"
            )));
        }
        let nodes = self.grid.nodes();
        let n = nodes.len();
        let (x0, xn) = (nodes[0], nodes[n - 1]);
        let mut acc = 0.0;

        // Piece below the grid.
        let zc_lo = lower.min(x0);
        let zc_hi = upper.min(x0);
        if zc_hi > zc_lo {
            let s = chi + 1.0 - self.zero_exponent;
            let k0 = self.values[0] * x0.powf(self.zero_exponent);
            if zc_lo == 0.0 {
                if s <= 0.0 {
                    return Err(Error::domain(format!(
                        "moment diverges at zero: need chi + 1 > zero_exponent, got chi={chi}, zero_exponent={}",
                        self.zero_exponent
                    )));
                }
                acc += k0 * zc_hi.powf(s) / s;
            } else if s.abs() < 1e-12 {
                acc += k0 * (zc_hi / zc_lo).ln();
            } else {
                acc += k0 * (zc_hi.powf(s) - zc_lo.powf(s)) / s;
            }
        }

        // On-grid piece, panel by panel.
        let lo = lower.max(x0);
        let hi = upper.min(xn);
        if hi > lo {
            let i_lo = self.grid.panel_of(lo);
            let i_hi = self.grid.panel_of(hi.min(xn * (1.0 - 1e-15)));
            for i in i_lo..=i_hi {
                let a = nodes[i].max(lo);
                let b = nodes[i + 1].min(hi);
                if b <= a {
                    continue;
                }
                let fa = if a == nodes[i] { self.values[i] } else { self.density(a) };
                let fb = if b == nodes[i + 1] { self.values[i + 1] } else { self.density(b) };
                acc += powerlaw_panel_moment(a, b, fa, fb, chi);
            }
        }

        // Piece above the grid.
        if upper > xn {
            let s = chi + 1.0 - self.tail_exponent;
            let kn = self.values[n - 1] * xn.powf(self.tail_exponent);
            let tail_lo = lower.max(xn);
            if upper.is_infinite() {
                if s >= 0.0 {
                    return Err(Error::domain(format!(
                        "tail moment diverges: need chi - tail_exponent < -1, got chi={chi}, tail_exponent={}",
                        self.tail_exponent
                    )));
                }
                acc += -kn * tail_lo.powf(s) / s;
            } else if s.abs() < 1e-12 {
                acc += kn * (upper / tail_lo).ln();
            } else {
                acc += kn * (upper.powf(s) - tail_lo.powf(s)) / s;
            }
        }

        Ok(acc)
    }
}

/// Suffix table for T_chi(w) = ∫_w^∞ z^chi f(z) dz, the workhorse of the
/// gain operator's inner integral. Building it requires a convergent tail
/// (chi < tail_exponent - 1); evaluation is O(1) for any w > 0.
#[derive(Debug, Clone)]
pub struct TailMoments {
    chi: f64,
    /// suffix[i] = ∫_{x_i}^∞, including the tail closure.
    suffix: Vec<f64>,
    /// Amplitude f0 x0^{p0} of the near-zero closure.
    k0: f64,
    /// chi + 1 - p0; the sub-grid part behaves like w^{s0} (or log when 0).
    s0: f64,
    kn: f64,
    s_tail: f64,
}

impl TailMoments {
    pub fn build(p: &Profile, chi: f64) -> Result<Self> {
        let s_tail = chi + 1.0 - p.tail_exponent();
        if s_tail >= 0.0 {
            return Err(Error::domain(format!(
                "tail moment table diverges: need chi - tail_exponent < -1, got chi={chi}, tail_exponent={}",
                p.tail_exponent()
            )));
        }
        let nodes = p.grid().nodes();
        let values = p.values();
        let n = nodes.len();
        let xn = nodes[n - 1];
        let kn = values[n - 1] * xn.powf(p.tail_exponent());
        let mut suffix = vec![0.0; n];
        suffix[n - 1] = -kn * xn.powf(s_tail) / s_tail;
        for i in (0..n - 1).rev() {
            suffix[i] = suffix[i + 1]
                + powerlaw_panel_moment(nodes[i], nodes[i + 1], values[i], values[i + 1], chi);
        }
        Ok(TailMoments {
            chi,
            suffix,
            k0: values[0] * nodes[0].powf(p.zero_exponent()),
            s0: chi + 1.0 - p.zero_exponent(),
            kn,
            s_tail,
        })
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// Suffix value at node i.
    pub fn at_node(&self, i: usize) -> f64 {
        self.suffix[i]
    }

    /// Decomposition of the sub-grid part: for w <= x0,
    /// T(w) = const + slope * psi(w) with psi = w^{s0} (s0 != 0) or
    /// psi = ln w (s0 == 0). Exposed so the gain operator can integrate
    /// the singular factor analytically.
    pub(crate) fn subgrid_parts(&self, x0: f64) -> (f64, f64, f64) {
        // T(w) = suffix[0] + k0 (x0^{s0} - w^{s0})/s0        for s0 != 0
        //      = suffix[0] + k0 (ln x0 - ln w)               for s0 == 0
        if self.s0.abs() < 1e-12 {
            (self.suffix[0] + self.k0 * x0.ln(), -self.k0, 0.0)
        } else {
            (
                self.suffix[0] + self.k0 * x0.powf(self.s0) / self.s0,
                -self.k0 / self.s0,
                self.s0,
            )
        }
    }

    /// T_chi(w) for arbitrary w > 0, piecewise closed form.
    pub fn eval(&self, p: &Profile, w: f64) -> f64 {
        debug_assert!(w > 0.0);
        let nodes = p.grid().nodes();
        let n = nodes.len();
        if w >= nodes[n - 1] {
            return -self.kn * w.powf(self.s_tail) / self.s_tail;
        }
        if w <= nodes[0] {
            let (c, slope, s0) = self.subgrid_parts(nodes[0]);
            return if s0 == 0.0 {
                c + slope * w.ln()
            } else {
                c + slope * w.powf(s0)
            };
        }
        let i = p.grid().panel_of(w);
        let fw = p.density(w);
        self.suffix[i + 1]
            + powerlaw_panel_moment(w, nodes[i + 1], fw, p.values()[i + 1], self.chi)
    }
}

/// Stable closed form of ∫_y^{y+z} x^{rho-2} dx, the inner-integral
/// primitive. Accurate for z << y via log1p/expm1.
pub fn incomplete_power_integral(y: f64, z: f64, rho: f64) -> f64 {
    debug_assert!(y > 0.0 && z > 0.0 && rho < 1.0);
    // (y^{rho-1} - (y+z)^{rho-1}) / (1 - rho)
    let e = (rho - 1.0) * (z / y).ln_1p();
    y.powf(rho - 1.0) * (-e.exp_m1()) / (1.0 - rho)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::log_uniform(self.x_min, self.x_max, self.n)
    }
}

/// Quadrature knobs for the gain operator. Grid-aligned panels may be
/// merged in groups of `panel_merge` nodes; sub-grid singular layers are
/// resolved with geometric panels of `gl_sub` points each.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuadConfig {
    pub gl_grid: usize,
    pub gl_sub: usize,
    pub panel_merge: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            gl_grid: 4,
            gl_sub: 8,
            panel_merge: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    /// Damping factor omega of the fixed-point update.
    pub damping: f64,
    pub max_iterations: usize,
    /// Sup-residual target on the trust window.
    pub tolerance: f64,
    /// Normalization reference size; None picks the node nearest x_max/10.
    pub r_ref: Option<f64>,
    /// Fraction of nodes (central, in log scale) trusted by residual and
    /// fit statistics; both closures pollute a boundary layer.
    pub trust_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            damping: 0.5,
            max_iterations: 300,
            tolerance: 1e-6,
            r_ref: None,
            trust_fraction: 0.6,
        }
    }
}

/// Kernel + exponents + discretisation: everything a profile construction
/// run needs. Admissibility is enforced here, before any computation.
#[derive(Debug, Clone)]
pub struct ProfileProblem {
    pub kernel: KernelSpec,
    pub rho: f64,
    pub gamma: f64,
    pub grid_config: GridConfig,
    pub quad: QuadConfig,
    pub solver: SolverConfig,
}

impl ProfileProblem {
    pub fn new(
        kernel: KernelSpec,
        rho: f64,
        gamma: f64,
        grid_config: GridConfig,
        quad: QuadConfig,
        solver: SolverConfig,
    ) -> Result<Self> {
        let lambda = kernel.lambda();
        let beta = kernel.beta();
        let floor = lambda.max(beta);
        if !(rho > floor && rho < 1.0) {
            return Err(Error::config(format!(
                "tail parameter must satisfy rho in (max(lambda, beta), 1) = ({floor}, 1), got rho={rho}"
            )));
        }
        if !(gamma >= beta && gamma > lambda) {
            return Err(Error::config(format!(
                "moment exponent needs gamma >= beta and gamma > lambda, got gamma={gamma} (beta={beta}, lambda={lambda})"
            )));
        }
        if !(gamma < rho) {
            // A fat-tailed profile has finite gamma-moment only below rho.
            return Err(Error::config(format!(
                "moment exponent gamma={gamma} must lie below rho={rho} for the tail moment to be finite"
            )));
        }
        grid_config.build()?;
        Ok(ProfileProblem {
            kernel,
            rho,
            gamma,
            grid_config,
            quad,
            solver,
        })
    }

    /// Problem with the default gamma midway between max(lambda, beta)
    /// and rho.
    pub fn with_default_gamma(
        kernel: KernelSpec,
        rho: f64,
        grid_config: GridConfig,
        quad: QuadConfig,
        solver: SolverConfig,
    ) -> Result<Self> {
        let floor = kernel.lambda().max(kernel.beta());
        let gamma = 0.5 * (floor + rho);
        Self::new(kernel, rho, gamma, grid_config, quad, solver)
    }

    pub fn grid(&self) -> Grid {
        self.grid_config.build().expect("validated at construction")
    }

    pub fn lambda(&self) -> f64 {
        self.kernel.lambda()
    }

    /// Closure admissibility for the gain/bilinear integrals: the
    /// near-zero closure must keep z^alpha f(z) locally integrable and
    /// the tail closure must dominate z^beta f(z).
    pub fn check_profile_admissible(&self, p: &Profile) -> Result<()> {
        let alpha = self.kernel.alpha();
        let beta = self.kernel.beta();
        if !(p.zero_exponent() < 2.0 + alpha) {
            return Err(Error::domain(format!(
                "near-zero closure too singular for this kernel: need zero_exponent < 2 + alpha = {}, got {}",
                2.0 + alpha,
                p.zero_exponent()
            )));
        }
        if !(p.tail_exponent() > 1.0 + beta) {
            return Err(Error::domain(format!(
                "tail closure too heavy for this kernel: need tail_exponent > 1 + beta = {}, got {}",
                1.0 + beta,
                p.tail_exponent()
            )));
        }
        Ok(())
    }

    /// Reference size for the normalization: configured value or the grid
    /// node nearest to x_max / 10 (closure contamination stays clear of
    /// the last node).
    pub fn r_ref(&self, grid: &Grid) -> f64 {
        match self.solver.r_ref {
            Some(r) => r,
            None => {
                let target = grid.last() / 10.0;
                let i = grid.panel_of(target);
                let nodes = grid.nodes();
                if (nodes[i + 1] / target).ln().abs() < (target / nodes[i]).ln().abs() {
                    nodes[i + 1]
                } else {
                    nodes[i]
                }
            }
        }
    }

    /// Index range [lo, hi] of the trusted central window in log scale.
    pub fn trust_window(&self, n: usize) -> (usize, usize) {
        trust_window(n, self.solver.trust_fraction)
    }

    /// Serializable descriptor echoed into reports.
    pub fn descriptor(&self) -> ProblemDescriptor {
        ProblemDescriptor {
            kernel: self.kernel.descriptor(),
            rho: self.rho,
            gamma: self.gamma,
            grid: self.grid_config.clone(),
            quad: self.quad.clone(),
            solver: self.solver.clone(),
        }
    }
}

pub fn trust_window(n: usize, fraction: f64) -> (usize, usize) {
    let frac = fraction.clamp(0.0, 1.0);
    let skip = ((1.0 - frac) / 2.0 * (n - 1) as f64).round() as usize;
    (skip, (n - 1).saturating_sub(skip))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemDescriptor {
    pub kernel: crate::kernel::KernelDescriptor,
    pub rho: f64,
    pub gamma: f64,
    pub grid: GridConfig,
    pub quad: QuadConfig,
    pub solver: SolverConfig,
}
