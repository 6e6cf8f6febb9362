//! Fixed-point construction of self-similar profiles.
//!
//! The profile equation is iterated in the rearranged form
//! f = (1-rho) x^{-2} M(x) + x^{-2} I[f](x) with damping, renormalizing
//! after every step so the iteration stays inside the class
//! R_ref^{rho-1} M(R_ref) = 1. Keeping the tail closure pinned at
//! 1 + rho excludes the spurious explicit power-law solution
//! A x^{-1-lambda} that exists for kernels with alpha > 0; that solution
//! is exposed separately through [`powerlaw_amplitude`] as an oracle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gain::gain_at_nodes;
use crate::kernel::KernelSpec;
use crate::profile::{Profile, ProfileProblem};
use crate::quad::{gl_panel, gl_log_composite};

/// Lower bound for the adaptive damping factor.
const DAMPING_FLOOR: f64 = 0.05;
/// Relative slack when judging whether the residual history decays.
const HISTORY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Cumulative rescaling factor applied across all normalizations.
    pub scale_a: f64,
    pub converged: bool,
    /// True when the residual history is nonincreasing (within slack)
    /// after the first five iterations.
    pub contracting: bool,
    pub final_damping: f64,
    /// ∫_1^∞ x^gamma f dx of the returned profile.
    pub gamma_moment: f64,
}

/// Matched power-law initial guess: (1-rho) x^{-1-rho} for x >= 1 and
/// (1-rho) x^{-1-lambda} below, continuous at x = 1, closures set to the
/// same exponents so every moment the iteration needs is finite.
pub fn initial_guess(prob: &ProfileProblem) -> Profile {
    let rho = prob.rho;
    let lambda = prob.lambda();
    let grid = prob.grid();
    let values = grid
        .nodes()
        .iter()
        .map(|&x| {
            if x >= 1.0 {
                (1.0 - rho) * x.powf(-1.0 - rho)
            } else {
                (1.0 - rho) * x.powf(-1.0 - lambda)
            }
        })
        .collect();
    Profile::new(grid, values, 1.0 + lambda, 1.0 + rho).expect("admissible by construction")
}

fn fixed_point_map(prob: &ProfileProblem, p: &Profile) -> Result<Vec<f64>> {
    let gain = gain_at_nodes(prob, p)?;
    let mass = p.partial_mass_at_nodes();
    let rho = prob.rho;
    let nodes = p.grid().nodes();
    let mapped: Vec<f64> = (0..nodes.len())
        .map(|i| {
            let x2 = nodes[i] * nodes[i];
            ((1.0 - rho) * mass[i] + gain[i]) / x2
        })
        .collect();
    if mapped.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "fixed-point map produced non-finite values; aborting run",
        ));
    }
    Ok(mapped)
}

fn damped(p: &Profile, mapped: &[f64], omega: f64) -> Result<Profile> {
    let values = p
        .values()
        .iter()
        .zip(mapped)
        .map(|(&f, &g)| (1.0 - omega) * f + omega * g)
        .collect();
    p.with_values(values)
}

/// One damped fixed-point step with the problem's configured damping.
/// Nonnegativity is preserved for omega in (0, 1] since both terms of
/// the map are nonnegative.
pub fn iterate(prob: &ProfileProblem, p: &Profile) -> Result<Profile> {
    let mapped = fixed_point_map(prob, p)?;
    damped(p, &mapped, prob.solver.damping)
}

/// Rescale f -> a^{1+lambda} f(a x) such that R_ref^{rho-1} M(R_ref) = 1.
/// The first-order normalizer a = L^{1/(rho-lambda)} with
/// L = R_ref^{rho-1} M(R_ref) is exact on power-law mass and is refined
/// until the normalized mass sits at 1 within 1e-12.
pub fn normalize(p: &Profile, rho: f64, lambda: f64, r_ref: f64) -> Result<(Profile, f64)> {
    if (rho - lambda).abs() < 1e-9 {
        return Err(Error::domain(
            "normalization degenerates for rho = lambda; admissible profiles require rho > lambda",
        ));
    }
    if !(r_ref > 0.0) {
        return Err(Error::domain("normalization reference size must be positive"));
    }
    let mut a_total = 1.0f64;
    let mut current = p.clone();
    for step in 0..64 {
        let mass = current.weighted_moment(1.0, 0.0, r_ref)?;
        if !(mass > 0.0) {
            return Err(Error::domain(
                "normalization needs M(R_ref) > 0; the profile is trivial below R_ref",
            ));
        }
        let l = r_ref.powf(rho - 1.0) * mass;
        if (l - 1.0).abs() <= 1e-12 {
            return Ok((current, a_total));
        }
        a_total *= l.powf(1.0 / (rho - lambda));
        // Always rescale from the original tabulation so interpolation
        // error does not compound across refinement steps.
        current = p.rescaled(a_total, lambda)?;
        if step == 63 {
            return Err(Error::numerical(
                "normalization did not reach |R^{rho-1} M(R) - 1| <= 1e-12 in 64 refinements",
            ));
        }
    }
    unreachable!()
}

/// Damped fixed-point iteration with per-step renormalization.
/// Non-convergence is reported, never silently accepted.
pub fn solve(prob: &ProfileProblem) -> Result<(Profile, SolveReport)> {
    let rho = prob.rho;
    let lambda = prob.lambda();
    let grid = prob.grid();
    let r_ref = prob.r_ref(&grid);

    let (mut p, mut scale_a) = normalize(&initial_guess(prob), rho, lambda, r_ref)?;
    let mut omega = prob.solver.damping;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..prob.solver.max_iterations {
        let gain = gain_at_nodes(prob, &p)?;
        let mass = p.partial_mass_at_nodes();
        let nodes = p.grid().nodes();
        let mut sup = 0.0f64;
        let (lo, hi) = prob.trust_window(nodes.len());
        let mut mapped = vec![0.0; nodes.len()];
        for i in 0..nodes.len() {
            let x2 = nodes[i] * nodes[i];
            mapped[i] = ((1.0 - rho) * mass[i] + gain[i]) / x2;
            if i >= lo && i <= hi {
                let lhs = x2 * p.values()[i];
                let r = (lhs - x2 * mapped[i]).abs() / (lhs + crate::profile::VALUE_FLOOR);
                sup = sup.max(r);
            }
        }
        if mapped.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                "fixed-point map produced non-finite values; aborting run",
            ));
        }
        if let Some(&prev) = history.last() {
            if sup > prev {
                omega = (0.5 * omega).max(DAMPING_FLOOR);
            }
        }
        history.push(sup);
        if sup < prob.solver.tolerance {
            converged = true;
            break;
        }
        let stepped = damped(&p, &mapped, omega)?;
        let (normalized, a) = normalize(&stepped, rho, lambda, r_ref)?;
        p = normalized;
        scale_a *= a;
    }

    let contracting = history
        .windows(2)
        .skip(4)
        .all(|w| w[1] <= w[0] * (1.0 + HISTORY_SLACK));
    let gamma_moment = p.weighted_moment(prob.gamma, 1.0, f64::INFINITY)?;
    if !p.is_trivial() && !gamma_moment.is_finite() {
        return Err(Error::numerical("gamma moment of the solution is not finite"));
    }
    let report = SolveReport {
        iterations: history.len(),
        residual_history: history,
        scale_a,
        converged,
        contracting,
        final_damping: omega,
        gamma_moment,
    };
    Ok((p, report))
}

/// Amplitude A of the explicit power-law solution A x^{-1-lambda},
/// defined for kernels with alpha > 0 through A J = (rho-lambda)/(1-lambda)
/// where J = ∫_0^1 ∫_{1-u}^∞ u^{-lambda} K(u,v) v^{-1-lambda} dv du.
pub fn powerlaw_amplitude(kernel: &KernelSpec, rho: f64) -> Result<f64> {
    let lambda = kernel.lambda();
    if !(kernel.alpha() > 0.0) {
        return Err(Error::domain(format!(
            "explicit power-law amplitude needs alpha > 0 (the defining integral diverges otherwise), got alpha = {}",
            kernel.alpha()
        )));
    }
    if !(rho > lambda.max(kernel.beta()) && rho < 1.0) {
        return Err(Error::domain(format!(
            "rho must lie in (max(lambda, beta), 1), got {rho}"
        )));
    }
    let j = powerlaw_gain_constant(kernel)?;
    Ok(((rho - lambda) / (1.0 - lambda)) / j)
}

/// J for the explicit power law, by singular-aware quadrature: the
/// endpoint singularities u^{-beta} (at 0) and (1-u)^{-alpha} (at 1) are
/// absorbed by power substitutions.
pub fn powerlaw_gain_constant(kernel: &KernelSpec) -> Result<f64> {
    let lambda = kernel.lambda();
    let alpha = kernel.alpha();
    let beta = kernel.beta();
    if !(alpha > 0.0) {
        return Err(Error::domain("J diverges unless alpha > 0"));
    }
    let inner = |u: f64| -> f64 {
        match kernel.separable_terms() {
            Some(terms) => terms
                .iter()
                .map(|t| {
                    // ∫_{1-u}^∞ v^{z_exp - 1 - lambda} dv, convergent since
                    // z_exp <= beta < lambda for alpha > 0
                    t.coeff * u.powf(t.y_exp) * (1.0 - u).powf(t.z_exp - lambda)
                        / (lambda - t.z_exp)
                })
                .sum(),
            None => {
                // numeric inner integral with a power-fit remainder
                let lo = 1.0 - u;
                let hi = lo * 1e8;
                let mut acc =
                    gl_log_composite(lo, hi, 3, 10, |v| kernel.rate(u, v) * v.powf(-1.0 - lambda));
                let h1 = kernel.rate(u, hi) * hi.powf(-1.0 - lambda);
                let h2 = kernel.rate(u, 2.0 * hi) * (2.0 * hi).powf(-1.0 - lambda);
                if h1 > 0.0 && h2 > 0.0 {
                    let slope = (h2 / h1).ln() / 2f64.ln();
                    if slope < -1.0 {
                        acc += -h1 * hi / (slope + 1.0);
                    }
                }
                acc
            }
        }
    };
    // Outer integrand u^{-lambda} inner(u): behaves like u^{-beta} at 0
    // and (1-u)^{-alpha} at 1. Split at 1/2 and absorb each singularity.
    let panels = [0.0, 1e-8, 1e-4, 1e-2, 1e-1, 1.0];
    let s_left = 1.0 - beta;
    let left_scale = 0.5f64.powf(s_left) / s_left;
    let mut left = 0.0;
    for win in panels.windows(2) {
        left += left_scale
            * gl_panel(win[0], win[1], 12, |t| {
                let u = 0.5 * t.powf(1.0 / s_left);
                u.powf(beta - lambda) * inner(u)
            });
    }
    let s_right = 1.0 - alpha;
    let right_scale = 0.5f64.powf(s_right) / s_right;
    let mut right = 0.0;
    for win in panels.windows(2) {
        right += right_scale
            * gl_panel(win[0], win[1], 12, |t| {
                let one_minus_u = 0.5 * t.powf(1.0 / s_right);
                let u = 1.0 - one_minus_u;
                u.powf(-lambda) * one_minus_u.powf(alpha) * inner(u)
            });
    }
    let j = left + right;
    if !j.is_finite() || j <= 0.0 {
        return Err(Error::numerical("quadrature for J failed"));
    }
    Ok(j)
}

/// Plain 2D tensor quadrature of J at a resolution of `per_decade`
/// panels per decade, no substitutions, deep graded panels toward the
/// endpoint singularities. Independent cross-check for the production
/// quadrature above.
pub fn powerlaw_gain_constant_bruteforce(kernel: &KernelSpec, per_decade: usize) -> Result<f64> {
    let lambda = kernel.lambda();
    let alpha = kernel.alpha();
    if !(alpha > 0.0) {
        return Err(Error::domain("J diverges unless alpha > 0"));
    }
    // v spans enough decades that the truncated tail v^{-1-alpha} is below 1e-14.
    let v_decades = (14.0 / alpha).ceil();
    let inner = |u: f64| {
        let lo = 1.0 - u;
        gl_log_composite(lo, lo * 10f64.powf(v_decades), per_decade, 8, |v| {
            kernel.rate(u, v) * v.powf(-1.0 - lambda)
        })
    };
    // u in (0, 1/2]: graded log panels toward 0; remainder below 1e-14
    // is negligible since the integrand is O(u^{-beta}), beta < 1.
    let left = gl_log_composite(1e-14, 0.5, per_decade, 8, |u| u.powf(-lambda) * inner(u));
    // u in [1/2, 1): graded toward 1 via t = 1 - u.
    let right = gl_log_composite(1e-14, 0.5, per_decade, 8, |t| {
        let u = 1.0 - t;
        u.powf(-lambda) * inner(u)
    });
    Ok(left + right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::residual as eq_residual;
    use crate::profile::{GridConfig, QuadConfig, SolverConfig};

    fn small_problem(kernel: KernelSpec, rho: f64, n: usize) -> ProfileProblem {
        ProfileProblem::with_default_gamma(
            kernel,
            rho,
            GridConfig {
                x_min: 1e-4,
                x_max: 1e4,
                n,
            },
            QuadConfig::default(),
            SolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn initial_guess_matches_the_stated_branches() {
        let prob = small_problem(KernelSpec::constant(2.0).unwrap(), 0.5, 161);
        let p = initial_guess(&prob);
        assert!((p.interp_eval(4.0).unwrap() - 0.0625).abs() < 1e-15);
        assert!((p.interp_eval(1.0).unwrap() - 0.5).abs() < 1e-15);
        // finite gamma moment by construction
        assert!(p
            .weighted_moment(prob.gamma, 1.0, f64::INFINITY)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn normalize_exact_on_power_law_mass() {
        // f = c (1-rho) x^{-1-rho} with c = 2^{rho-lambda} rescales by a = 2
        let (rho, lambda) = (0.5, 0.0);
        let c = 2f64.powf(rho - lambda);
        let prob = small_problem(KernelSpec::constant(2.0).unwrap(), rho, 161);
        let p = Profile::power_law(prob.grid(), c * (1.0 - rho), 1.0 + rho).unwrap();
        let (tilde, a) = normalize(&p, rho, lambda, 10.0).unwrap();
        assert!((a - 2.0).abs() < 1e-10, "a = {a}");
        for (&x, &v) in tilde.grid().nodes().iter().zip(tilde.values()).step_by(17) {
            assert!((v / ((1.0 - rho) * x.powf(-1.5)) - 1.0).abs() < 1e-9);
        }
        // already normalized input: a = 1
        let (_, a) = normalize(&tilde, rho, lambda, 10.0).unwrap();
        assert!((a - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalize_rejects_degenerate_exponents() {
        let prob = small_problem(KernelSpec::constant(2.0).unwrap(), 0.5, 161);
        let p = Profile::power_law(prob.grid(), 1.0, 1.5).unwrap();
        assert!(normalize(&p, 0.5, 0.5, 10.0).is_err());
    }

    #[test]
    fn fixed_point_input_is_left_in_place_by_iterate() {
        // The explicit power law is an exact fixed point for alpha > 0.
        let kernel = KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0)).unwrap();
        let rho = 0.8;
        let a = powerlaw_amplitude(&kernel, rho).unwrap();
        let prob = small_problem(kernel, rho, 201);
        let lambda = prob.lambda();
        let p = Profile::power_law(prob.grid(), a, 1.0 + lambda).unwrap();
        let next = iterate(&prob, &p).unwrap();
        let (lo, hi) = prob.trust_window(p.grid().len());
        for i in lo..=hi {
            let rel = (next.values()[i] / p.values()[i] - 1.0).abs();
            assert!(rel < 1e-7, "node {i}: moved by {rel}");
        }
    }

    #[test]
    fn powerlaw_amplitude_matches_beta_function_closed_form() {
        // For K = x^a y^b + x^b y^a the gain constant reduces to
        // J = B(1-a, 1-b) (a+b)/(a b); frozen reference value for
        // a = b = 0.3: J = 12.660252891160126, A(rho=0.8) = 0.039493681863900142.
        let kernel = KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0)).unwrap();
        let j = powerlaw_gain_constant(&kernel).unwrap();
        assert!((j / 12.660252891160126 - 1.0).abs() < 1e-9, "J = {j}");
        let a = powerlaw_amplitude(&kernel, 0.8).unwrap();
        assert!((a / 0.039493681863900142 - 1.0).abs() < 1e-9, "A = {a}");
    }

    #[test]
    fn powerlaw_amplitude_rejects_nonpositive_alpha() {
        let brownian = KernelSpec::brownian((1.0, 2.0)).unwrap();
        let err = powerlaw_amplitude(&brownian, 0.6).unwrap_err();
        assert!(err.to_string().contains("alpha"));
        let constant = KernelSpec::constant(2.0).unwrap();
        assert!(powerlaw_amplitude(&constant, 0.5).is_err());
    }

    #[test]
    fn explicit_power_law_residual_small_and_scale_invariant() {
        let kernel = KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0)).unwrap();
        let rho = 0.8;
        let a = powerlaw_amplitude(&kernel, rho).unwrap();
        let prob = small_problem(kernel, rho, 201);
        let lambda = prob.lambda();
        let p = Profile::power_law(prob.grid(), a, 1.0 + lambda).unwrap();
        let rep = eq_residual(&prob, &p).unwrap();
        assert!(rep.sup_trust < 1e-6, "residual {}", rep.sup_trust);
        // rescaled solutions stay solutions
        let scaled = p.rescaled(3.7, lambda).unwrap();
        let rep = eq_residual(&prob, &scaled).unwrap();
        assert!(rep.sup_trust < 1e-6, "rescaled residual {}", rep.sup_trust);
    }

    #[test]
    fn bruteforce_gain_constant_agrees() {
        let kernel = KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0)).unwrap();
        let j = powerlaw_gain_constant(&kernel).unwrap();
        let jb = powerlaw_gain_constant_bruteforce(&kernel, 4).unwrap();
        assert!((jb / j - 1.0).abs() < 1e-8, "{jb} vs {j}");
    }
}
