//! Built-in oracle battery: every closed-form example the library's
//! operations are specified against, runnable without external input.

use serde::Serialize;

use crate::dynamics::{self, MassDistribution, ScalingConfig, StepConfig, StepControl};
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::laplace;
use crate::moments;
use crate::profile::{
    incomplete_power_integral, GridConfig, Profile, ProfileProblem, QuadConfig, SolverConfig,
};
use crate::solver;
use crate::verify;
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn run_check(
    out: &mut Vec<CheckResult>,
    name: &str,
    body: impl FnOnce() -> Result<(bool, String)>,
) {
    let (pass, detail) = match body() {
        Ok((pass, detail)) => (pass, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    out.push(CheckResult {
        name: name.to_string(),
        pass,
        detail,
    });
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// Run the whole battery; each entry is one named closed-form check.
pub fn run_selftest() -> Vec<CheckResult> {
    let mut out = Vec::new();

    run_check(&mut out, "kernel_brownian_values", || {
        let k = KernelSpec::brownian((1.0, 2.0))?;
        let a = k.eval(1.0, 1.0)?;
        let b = k.eval(8.0, 1.0)?;
        Ok((
            (a - 4.0).abs() < 1e-14 && (b - 4.5).abs() < 1e-14,
            format!("K(1,1)={a}, K(8,1)={b}"),
        ))
    });

    run_check(&mut out, "kernel_out_of_range_rejected", || {
        let add = KernelSpec::additive().is_err();
        let mul = KernelSpec::multiplicative().is_err();
        Ok((add && mul, "additive and multiplicative rejected".into()))
    });

    run_check(&mut out, "kernel_homogeneity_exact", || {
        let k = KernelSpec::power_sum(-0.2, 0.5, (1.0, 2.0))?;
        let dev = k.check_homogeneity(&[(1.0, 1.0), (3.0, 0.2)], &[1e-3, 1.0, 1e3]);
        Ok((dev < 1e-12, format!("max deviation {dev:.3e}")))
    });

    run_check(&mut out, "grid_log_uniform_ratio", || {
        let g = Grid::log_uniform(1e-6, 1e6, 241)?;
        let dev = (g.ratio() - 10f64.powf(0.05)).abs();
        Ok((dev < 1e-13, format!("ratio deviation {dev:.3e}")))
    });

    run_check(&mut out, "interp_exact_on_power_law", || {
        let g = Grid::log_uniform(1e-4, 1e4, 129)?;
        let p = Profile::power_law(g, 1.0, 1.5)?;
        let dev = rel(p.interp_eval(0.37)?, 0.37f64.powf(-1.5));
        Ok((dev < 1e-13, format!("relative error {dev:.3e}")))
    });

    run_check(&mut out, "incomplete_power_integral_value", || {
        let got = incomplete_power_integral(1.0, 1.0, 0.5);
        let dev = (got - 0.58578643762690495).abs();
        Ok((dev < 1e-15, format!("got {got}")))
    });

    run_check(&mut out, "incomplete_power_integral_bound", || {
        // value <= max(1, 1/(1-rho)) y^{rho-1-a} z^a over a sample sweep
        let rho = 0.7;
        let c = (1.0f64).max(1.0 / (1.0 - rho));
        let mut worst = 0.0f64;
        for i in 0..40 {
            let y = 10f64.powf(-3.0 + 6.0 * (i as f64) / 39.0);
            for j in 0..40 {
                let z = 10f64.powf(-3.0 + 6.0 * (j as f64) / 39.0);
                let v = incomplete_power_integral(y, z, rho);
                for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
                    worst = worst.max(v / (c * y.powf(rho - 1.0 - a) * z.powf(a)));
                }
            }
        }
        Ok((worst <= 1.0 + 1e-12, format!("max ratio {worst}")))
    });

    run_check(&mut out, "weighted_moment_gamma_oracle", || {
        let g = Grid::log_uniform(1e-6, 60.0, 2400)?;
        let p = Profile::tabulate(g, |x| (-x).exp(), 0.0, 40.0)?;
        let got = p.weighted_moment(1.0, 0.0, f64::INFINITY)?;
        Ok(((got - 1.0).abs() < 1e-6, format!("Gamma(2) = {got}")))
    });

    run_check(&mut out, "gain_constant_kernel_exponential", || {
        let prob = ProfileProblem::with_default_gamma(
            KernelSpec::constant(2.0)?,
            0.5,
            GridConfig {
                x_min: 1e-6,
                x_max: 60.0,
                n: 1200,
            },
            QuadConfig::default(),
            SolverConfig::default(),
        )?;
        let p = Profile::tabulate(prob.grid(), |x| (-x).exp(), 0.0, 40.0)?;
        let got = crate::gain::gain_operator(&prob, &p, 1.0)?;
        let dev = rel(got, (-1.0f64).exp());
        Ok((dev < 2e-6, format!("I[e^-x](1) = {got}, rel err {dev:.2e}")))
    });

    run_check(&mut out, "powerlaw_amplitude_identity", || {
        let kernel = KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0))?;
        let j = solver::powerlaw_gain_constant(&kernel)?;
        let dev = rel(j, 12.660252891160126);
        Ok((dev < 1e-9, format!("J = {j}, rel err {dev:.2e}")))
    });

    run_check(&mut out, "explicit_power_law_residual", || {
        let kernel = KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0))?;
        let rho = 0.8;
        let a = solver::powerlaw_amplitude(&kernel, rho)?;
        let prob = ProfileProblem::with_default_gamma(
            kernel,
            rho,
            GridConfig {
                x_min: 1e-4,
                x_max: 1e4,
                n: 201,
            },
            QuadConfig::default(),
            SolverConfig::default(),
        )?;
        let lambda = prob.lambda();
        let p = Profile::power_law(prob.grid(), a, 1.0 + lambda)?;
        let rep = crate::gain::residual(&prob, &p)?;
        Ok((
            rep.sup_trust < 1e-6,
            format!("sup residual {:.3e}", rep.sup_trust),
        ))
    });

    run_check(&mut out, "normalize_power_law_oracle", || {
        let (rho, lambda) = (0.5, 0.0);
        let g = Grid::log_uniform(1e-4, 1e4, 161)?;
        let c = 2f64.powf(rho - lambda);
        let p = Profile::power_law(g, c * (1.0 - rho), 1.0 + rho)?;
        let (_, a) = solver::normalize(&p, rho, lambda, 10.0)?;
        Ok(((a - 2.0).abs() < 1e-10, format!("a = {a}")))
    });

    run_check(&mut out, "laplace_exponential_oracle", || {
        let g = Grid::log_uniform(1e-6, 60.0, 1800)?;
        let p = Profile::tabulate(g, |x| (-x).exp(), 0.0, 40.0)?;
        let q = 0.7;
        let dq = rel(laplace::transform_q(&p, q)?, q / (1.0 + q));
        let dp = rel(
            laplace::transform_q_prime(&p, q)?,
            1.0 / ((1.0 + q) * (1.0 + q)),
        );
        Ok((dq < 1e-6 && dp < 1e-6, format!("Q err {dq:.2e}, Q' err {dp:.2e}")))
    });

    run_check(&mut out, "laplace_power_tail_amplitude", || {
        let rho = 0.5f64;
        let g = Grid::log_uniform(1e-8, 1e8, 481)?;
        let p = Profile::power_law(g, 1.0 - rho, 1.0 + rho)?;
        let got = laplace::transform_q(&p, 1.0)?;
        let exact = statrs::function::gamma::gamma(2.0 - rho) / rho;
        let dev = rel(got, exact);
        Ok((dev < 1e-9, format!("Q(1) = {got}, rel err {dev:.2e}")))
    });

    run_check(&mut out, "constant_kernel_exact_q_arithmetic", || {
        let got = laplace::constant_kernel_exact_q(0.5, 1.0);
        let dev = (got - 0.38998676479155726).abs();
        Ok((dev < 1e-14, format!("Q(1) = {got}")))
    });

    run_check(&mut out, "constant_kernel_q_solves_bernoulli", || {
        let rho = 0.6;
        let mut worst = 0.0f64;
        for &q in &[1e-3, 0.3, 7.0] {
            let h = 1e-5 * q;
            let qp = (laplace::constant_kernel_exact_q(rho, q + h)
                - laplace::constant_kernel_exact_q(rho, q - h))
                / (2.0 * h);
            let big_q = laplace::constant_kernel_exact_q(rho, q);
            worst = worst.max((q * qp - rho * big_q + big_q * big_q).abs());
        }
        Ok((worst < 1e-9, format!("max identity residual {worst:.2e}")))
    });

    run_check(&mut out, "moment_constants_power_law", || {
        let rho = 0.5;
        let g = Grid::log_uniform(1e-4, 1e4, 161)?;
        let p = Profile::power_law(g, 1.0 - rho, 1.0 + rho)?;
        let probes = moments::default_probes(&p);
        let chi = 0.25;
        let check = moments::moment_estimate_check(
            &p,
            moments::MomentEstimate::TailBelowRho,
            rho,
            0.0,
            chi,
            0.1,
            &probes,
        )?;
        let dev = rel(check.constant, (1.0 - rho) / (rho - chi));
        Ok((dev < 1e-8, format!("constant rel err {dev:.2e}")))
    });

    run_check(&mut out, "dynamics_mass_conservation", || {
        let g = Grid::log_uniform(1e-2, 1e2, 96)?;
        let phi0 = MassDistribution::tabulate(g, |x| (-x).exp(), 0.0)?;
        let kernel = KernelSpec::brownian((1.0, 2.0))?;
        let cfg = StepConfig {
            control: StepControl::Adaptive { safety: 0.5 },
            snapshot_times: vec![],
        };
        let out_ = dynamics::evolve(&kernel, &phi0, 0.5, &cfg)?;
        let row = out_.ledger.last().unwrap();
        let drift = ((row.mass + row.outflux_cumulative - phi0.mass()) / phi0.mass()).abs();
        Ok((drift < 1e-10, format!("relative drift {drift:.2e}")))
    });

    run_check(&mut out, "dynamics_rescaling_inverts_ansatz", || {
        let g = Grid::log_uniform(1e-3, 1e3, 97)?;
        let cfg = ScalingConfig::new(1.5, 0.0, vec![])?;
        let t = 8.0;
        let s = cfg.scale(t);
        let f = |x: f64| 0.5 * x.powf(-1.5) / (1.0 + 1.0 / x);
        let phi = MassDistribution::tabulate(g.clone(), |x| s.powf(-1.5) * f(x / s), t)?;
        let back = dynamics::rescale_snapshot(&phi, &cfg)?;
        let mut worst = 0.0f64;
        for (i, &x) in g.nodes().iter().enumerate() {
            if x * s >= g.first() && x * s <= g.last() {
                worst = worst.max(rel(back.values()[i], f(x)));
            }
        }
        Ok((worst < 1e-9, format!("max deviation {worst:.2e}")))
    });

    run_check(&mut out, "tail_fit_exact_power_law", || {
        let g = Grid::log_uniform(1e-4, 1e4, 241)?;
        let p = Profile::power_law(g, 0.5, 1.5)?;
        let fit = verify::fit_tail(&p, (10.0, 1000.0))?;
        Ok((
            (fit.exponent + 1.5).abs() < 1e-12 && fit.residual < 1e-12,
            format!("exponent {}, residual {:.2e}", fit.exponent, fit.residual),
        ))
    });

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_selftest_check_passes() {
        let results = run_selftest();
        for r in &results {
            assert!(r.pass, "selftest '{}' failed: {}", r.name, r.detail);
        }
        assert!(results.len() >= 15);
    }
}
