//! Desingularized Laplace transform machinery.
//!
//! Q(q) = ∫_0^∞ (1 - e^{-qx}) f(x) dx is finite even for profiles that
//! are singular at the origin, and the profile equation integrates to
//! the identity
//!
//! ```text
//! -q Q'(q) = -rho Q(q) + (1/2) ∫∫ K(y,z) f(y) f(z) (1-e^{-qy})(1-e^{-qz}) dy dz
//! ```
//!
//! whose residual is an independent global certificate for a computed
//! profile. For the constant kernel the identity closes into the
//! Bernoulli equation q Q' = rho Q - Q^2 whose exact solution, pinned by
//! the tail normalization, is the primary solver oracle.

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::profile::{Profile, ProfileProblem};
use crate::quad::{desingularized_power_integral, gl_log_composite, gl_panel_log};

/// Transform samples along a q ladder, with the bilinear term and the
/// identity residual at each probe.
#[derive(Debug, Clone, Serialize)]
pub struct LaplaceProbe {
    pub q: Vec<f64>,
    pub transform: Vec<f64>,
    pub derivative: Vec<f64>,
    pub bilinear: Vec<f64>,
    pub residual: Vec<f64>,
}

impl LaplaceProbe {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().cloned().fold(0.0, f64::max)
    }

    /// Q must be nonnegative and nondecreasing in q.
    pub fn is_monotone(&self) -> bool {
        self.transform.iter().all(|&v| v >= 0.0)
            && self.transform.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12))
    }
}

/// ∫_0^∞ y^chi (1 - e^{-qy}) f(y) dy with analytic handling of both
/// closure regions. The near-zero singularity is damped by 1 - e^{-qy},
/// so the requirement there is chi + 2 > p0; the tail needs
/// chi < tail_exponent - 1.
pub fn weighted_desing_transform(p: &Profile, chi: f64, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::domain(format!("transform needs q > 0, got {q}")));
    }
    let nodes = p.grid().nodes();
    let n = nodes.len();
    let (x0, xn) = (nodes[0], nodes[n - 1]);
    let p0 = p.zero_exponent();
    let pinf = p.tail_exponent();
    if !(chi + 2.0 > p0) {
        return Err(Error::domain(format!(
            "transform diverges at zero: need chi + 2 > zero_exponent, got chi={chi}, zero_exponent={p0}"
        )));
    }
    if !(chi < pinf - 1.0) {
        return Err(Error::domain(format!(
            "transform diverges in the tail: need chi < tail_exponent - 1, got chi={chi}, tail_exponent={pinf}"
        )));
    }

    // Zero closure: k0 q^{p0-chi-1} ∫_0^{q x0} (1-e^{-u}) u^{chi-p0} du.
    let k0 = p.values()[0] * x0.powf(p0);
    let mut acc = k0 * q.powf(p0 - chi - 1.0) * desingularized_power_integral(q * x0, p0 - chi);

    // Grid panels.
    for i in 0..n - 1 {
        acc += gl_panel_log(nodes[i], nodes[i + 1], 6, |y| {
            y.powf(chi) * (-(-q * y).exp_m1()) * p.density(y)
        });
    }

    // Tail closure: split 1 - e^{-qy} into 1 minus the exponential part.
    let kn = p.values()[n - 1] * xn.powf(pinf);
    let s_t = chi + 1.0 - pinf;
    acc += -kn * xn.powf(s_t) / s_t;
    let cut = 40.0 / q;
    if cut > xn {
        acc -= gl_log_composite(xn, cut, 3, 8, |y| kn * y.powf(chi - pinf) * (-q * y).exp());
    }
    Ok(acc)
}

/// Q(q) = ∫_0^∞ (1 - e^{-qx}) f(x) dx.
pub fn transform_q(p: &Profile, q: f64) -> Result<f64> {
    weighted_desing_transform(p, 0.0, q)
}

/// ∫_0^∞ y^chi e^{-qy} f(y) dy.
pub fn weighted_exp_moment(p: &Profile, chi: f64, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::domain(format!("transform needs q > 0, got {q}")));
    }
    let nodes = p.grid().nodes();
    let n = nodes.len();
    let (x0, xn) = (nodes[0], nodes[n - 1]);
    let p0 = p.zero_exponent();
    if !(chi + 1.0 > p0) {
        return Err(Error::domain(format!(
            "exponential moment diverges at zero: need chi + 1 > zero_exponent, got chi={chi}, zero_exponent={p0}"
        )));
    }
    let k0 = p.values()[0] * x0.powf(p0);
    // Sub-grid: graded panels; below the deepest panel e^{-qy} is 1 to
    // machine precision and the power integral is analytic.
    let y_floor = x0 * 1e-10;
    let s = chi + 1.0 - p0;
    let mut acc = k0 * y_floor.powf(s) / s;
    acc += gl_log_composite(y_floor, x0, 2, 8, |y| {
        k0 * y.powf(chi - p0) * (-q * y).exp()
    });
    let cut = 745.0 / q;
    for i in 0..n - 1 {
        if nodes[i] > cut {
            break;
        }
        acc += gl_panel_log(nodes[i], nodes[i + 1], 6, |y| {
            y.powf(chi) * (-q * y).exp() * p.density(y)
        });
    }
    if cut > xn {
        let kn = p.values()[n - 1] * xn.powf(p.tail_exponent());
        acc += gl_log_composite(xn, cut.max(xn * 1.0001), 3, 8, |y| {
            kn * y.powf(chi - p.tail_exponent()) * (-q * y).exp()
        });
    }
    Ok(acc)
}

/// Q'(q) = ∫_0^∞ x f(x) e^{-qx} dx.
pub fn transform_q_prime(p: &Profile, q: f64) -> Result<f64> {
    weighted_exp_moment(p, 1.0, q)
}

/// B(q) = (1/2) ∫∫ K(y,z) f(y) f(z) (1-e^{-qy})(1-e^{-qz}) dz dy.
/// Separable kernels reduce to products of 1D transforms; custom kernels
/// go through nested quadrature.
pub fn bilinear_term(prob: &ProfileProblem, p: &Profile, q: f64) -> Result<f64> {
    prob.check_profile_admissible(p)?;
    match prob.kernel.separable_terms() {
        Some(terms) => {
            let mut acc = 0.0;
            for t in terms {
                let vy = weighted_desing_transform(p, t.y_exp, q)?;
                let vz = weighted_desing_transform(p, t.z_exp, q)?;
                acc += 0.5 * t.coeff * vy * vz;
            }
            Ok(acc)
        }
        None => {
            let kernel = &prob.kernel;
            let nodes = p.grid().nodes();
            let (x0, xn) = (nodes[0], nodes[nodes.len() - 1]);
            let lo = x0 * 1e-8;
            let hi = xn * 1e6;
            let inner = |y: f64| {
                gl_log_composite(lo, hi, 3, 8, |z| {
                    kernel.rate(y, z) * p.density(z) * (-(-q * z).exp_m1())
                })
            };
            let outer = gl_log_composite(lo, hi, 3, 8, |y| {
                p.density(y) * (-(-q * y).exp_m1()) * inner(y)
            });
            Ok(0.5 * outer)
        }
    }
}

/// Evaluate Q, Q', B and the identity residual
/// |-q Q' + rho Q - B| / Q along a q ladder.
pub fn probe(prob: &ProfileProblem, p: &Profile, q_list: &[f64]) -> Result<LaplaceProbe> {
    let mut out = LaplaceProbe {
        q: Vec::with_capacity(q_list.len()),
        transform: Vec::with_capacity(q_list.len()),
        derivative: Vec::with_capacity(q_list.len()),
        bilinear: Vec::with_capacity(q_list.len()),
        residual: Vec::with_capacity(q_list.len()),
    };
    for &q in q_list {
        let big_q = transform_q(p, q)?;
        let q_prime = transform_q_prime(p, q)?;
        let b = bilinear_term(prob, p, q)?;
        let res = (-q * q_prime + prob.rho * big_q - b).abs() / big_q;
        out.q.push(q);
        out.transform.push(big_q);
        out.derivative.push(q_prime);
        out.bilinear.push(b);
        out.residual.push(res);
    }
    Ok(out)
}

/// Max residual of the integrated identity over the q ladder. Small for
/// genuine profiles, order one for non-solutions.
pub fn check_q_identity(prob: &ProfileProblem, p: &Profile, q_list: &[f64]) -> Result<f64> {
    Ok(probe(prob, p, q_list)?.max_residual())
}

/// Default probe ladder: [10/x_max, 10/x_min] clipped to [1e-6, 1e3],
/// log-spaced. Outside that range the closure regions dominate the
/// transform and the certificate degrades.
pub fn default_q_ladder(p: &Profile, count: usize) -> Vec<f64> {
    let lo = (10.0 / p.grid().last()).max(1e-6);
    let hi = (10.0 / p.grid().first()).min(1e3);
    let n = count.max(2);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

/// Exact desingularized Laplace transform of the normalized
/// constant-kernel profile: Q(q) = rho q^rho / (q^rho + c rho) with
/// c = rho / Gamma(2 - rho). This solves q Q' = rho Q - Q^2 and has the
/// small-q amplitude Gamma(2-rho)/rho q^rho matching the tail
/// normalization (1-rho) x^{-1-rho}.
pub fn constant_kernel_exact_q(rho: f64, q: f64) -> f64 {
    debug_assert!(rho > 0.0 && rho < 1.0 && q > 0.0);
    let c = rho / gamma(2.0 - rho);
    let qr = q.powf(rho);
    rho * qr / (qr + c * rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernel::KernelSpec;
    use crate::profile::{GridConfig, QuadConfig, SolverConfig};

    fn exp_profile() -> Profile {
        let grid = Grid::log_uniform(1e-6, 60.0, 1800).unwrap();
        Profile::tabulate(grid, |x| (-x).exp(), 0.0, 40.0).unwrap()
    }

    #[test]
    fn transform_of_exponential_profile() {
        // Q(q) = q/(1+q), Q'(q) = 1/(1+q)^2
        let p = exp_profile();
        for &q in &[1e-3, 0.1, 1.0, 10.0] {
            let got = transform_q(&p, q).unwrap();
            let exact = q / (1.0 + q);
            assert!((got / exact - 1.0).abs() < 1e-6, "Q({q}) = {got}, want {exact}");
            let got = transform_q_prime(&p, q).unwrap();
            let exact = 1.0 / ((1.0 + q) * (1.0 + q));
            assert!((got / exact - 1.0).abs() < 1e-6, "Q'({q}) = {got}");
        }
    }

    #[test]
    fn transform_of_power_law_tail() {
        // f = (1-rho) x^{-1-rho}: Q(q) = Gamma(2-rho)/rho q^rho
        let rho = 0.5;
        let grid = Grid::log_uniform(1e-8, 1e8, 481).unwrap();
        let p = Profile::power_law(grid, 1.0 - rho, 1.0 + rho).unwrap();
        for &q in &[1e-2, 1.0, 50.0] {
            let got = transform_q(&p, q).unwrap();
            let exact = gamma(2.0 - rho) / rho * q.powf(rho);
            assert!((got / exact - 1.0).abs() < 1e-9, "Q({q})");
        }
    }

    #[test]
    fn transform_vanishes_as_q_to_zero() {
        let p = exp_profile();
        let q_small = transform_q(&p, 1e-9).unwrap();
        assert!(q_small > 0.0 && q_small < 1e-8);
    }

    #[test]
    fn derivative_consistent_with_finite_differences() {
        let grid = Grid::log_uniform(1e-5, 1e5, 301).unwrap();
        let p = Profile::tabulate(grid, |x| x.powf(-1.3) / (1.0 + x.powf(0.4)), 1.3, 1.7).unwrap();
        for &q in &[0.1, 1.0] {
            let h = 1e-4 * q;
            let fd = (transform_q(&p, q + h).unwrap() - transform_q(&p, q - h).unwrap()) / (2.0 * h);
            let got = transform_q_prime(&p, q).unwrap();
            assert!(
                (got / fd - 1.0).abs() < 1e-6,
                "q={q}: analytic {got} vs central difference {fd}"
            );
        }
    }

    #[test]
    fn bilinear_constant_kernel_is_q_squared() {
        let gc = GridConfig {
            x_min: 1e-6,
            x_max: 60.0,
            n: 1800,
        };
        let prob = ProfileProblem::with_default_gamma(
            KernelSpec::constant(2.0).unwrap(),
            0.5,
            gc,
            QuadConfig::default(),
            SolverConfig::default(),
        )
        .unwrap();
        let p = exp_profile();
        for &q in &[0.3, 2.0] {
            let b = bilinear_term(&prob, &p, q).unwrap();
            let big_q = transform_q(&p, q).unwrap();
            assert!((b / (big_q * big_q) - 1.0).abs() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn separable_bilinear_matches_direct_double_quadrature() {
        let gc = GridConfig {
            x_min: 1e-3,
            x_max: 1e3,
            n: 121,
        };
        let prob = ProfileProblem::with_default_gamma(
            KernelSpec::power_sum(-0.2, 0.5, (1.0, 2.0)).unwrap(),
            0.7,
            gc,
            QuadConfig::default(),
            SolverConfig::default(),
        )
        .unwrap();
        let p = Profile::power_law(prob.grid(), 0.3, 1.7).unwrap();
        let q = 0.8;
        let fast = bilinear_term(&prob, &p, q).unwrap();
        // independent double quadrature over the same interpolant
        let kernel = prob.kernel.clone();
        let inner = |y: f64| {
            gl_log_composite(1e-9, 1e9, 4, 10, |z| {
                kernel.rate(y, z) * p.density(z) * (-(-q * z).exp_m1())
            })
        };
        let direct = 0.5
            * gl_log_composite(1e-9, 1e9, 4, 10, |y| {
                p.density(y) * (-(-q * y).exp_m1()) * inner(y)
            });
        assert!((fast / direct - 1.0).abs() < 1e-8, "{fast} vs {direct}");
    }

    #[test]
    fn exact_constant_kernel_q_solves_the_bernoulli_equation() {
        let rho = 0.5;
        // frozen arithmetic from the closed form: c = 1/sqrt(pi)
        let q1 = constant_kernel_exact_q(rho, 1.0);
        assert!((q1 - 0.38998676479155726).abs() < 1e-14);
        for &q in &[1e-3, 0.7, 42.0] {
            let h = 1e-5 * q;
            let qp = (constant_kernel_exact_q(rho, q + h) - constant_kernel_exact_q(rho, q - h))
                / (2.0 * h);
            let big_q = constant_kernel_exact_q(rho, q);
            let residual = q * qp - rho * big_q + big_q * big_q;
            assert!(residual.abs() < 1e-9, "q={q}: {residual}");
        }
        // small-q amplitude matches the Tauberian constant
        let q = 1e-8;
        let amp = constant_kernel_exact_q(rho, q) / q.powf(rho);
        assert!((amp / (gamma(2.0 - rho) / rho) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn identity_residual_zero_for_matching_pair() {
        // On the pure power-law tail profile the identity cannot hold
        // exactly (it is not a solution), but the machinery itself must
        // reproduce -qQ' + rho Q = B when fed the exact transform pieces;
        // here we just pin the negative control: a random non-solution
        // has residual of order one.
        let gc = GridConfig {
            x_min: 1e-4,
            x_max: 1e4,
            n: 161,
        };
        let prob = ProfileProblem::with_default_gamma(
            KernelSpec::constant(2.0).unwrap(),
            0.5,
            gc,
            QuadConfig::default(),
            SolverConfig::default(),
        )
        .unwrap();
        let p = Profile::tabulate(prob.grid(), |x| x.powf(-1.2) / (1.0 + x), 1.2, 2.2).unwrap();
        let ladder = default_q_ladder(&p, 9);
        let res = check_q_identity(&prob, &p, &ladder).unwrap();
        assert!(res > 0.05, "non-solution residual unexpectedly small: {res}");
    }
}
