//! Numerical self-checks on a sampled scenario, run by `fluid-mec validate`.

use crate::alloc::{solve_allocation, AllocationProblem};
use crate::channel::{general_sinr_rate, per_user_rate, zf_combining_matrix, ChannelMatrix};
use crate::latency::{latency_hessian, user_total_latency};
use crate::scenario::{sample_scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            passed: value <= limit,
            detail: format!("{value:.3e} (limit {limit:.0e})"),
        }
    }

    fn failed(name: &'static str, detail: impl ToString) -> Self {
        Self {
            name,
            passed: false,
            detail: detail.to_string(),
        }
    }
}

/// Samples `seeds` scenarios from `config` and checks the combiner, the
/// rate formula, the latency curvature and the allocation optimality
/// certificate on each.
pub fn run_checks(config: &ScenarioConfig, seeds: std::ops::Range<u64>) -> Vec<CheckOutcome> {
    let mut zf = 0.0f64;
    let mut rate = 0.0f64;
    let mut hessian = 0.0f64;
    let mut kkt = 0.0f64;
    let mut infeasible = 0usize;
    for seed in seeds {
        let sc = match sample_scenario::<f64>(config, seed) {
            Ok(sc) => sc,
            Err(e) => return vec![CheckOutcome::failed("sample scenario", format!("seed {seed}: {e}"))],
        };
        let positions = match sc.reference_array() {
            Ok(p) => p,
            Err(e) => return vec![CheckOutcome::failed("reference array", e)],
        };
        let h = ChannelMatrix::build(&positions, &sc.channel_specs, sc.link.wavelength);
        let w = match zf_combining_matrix(&h, sc.link.rcond_threshold) {
            Ok(w) => w,
            Err(e) => return vec![CheckOutcome::failed("zero-forcing", format!("seed {seed}: {e}"))],
        };
        zf = zf.max(w.entries.adjoint_mul(&h.entries).max_abs_deviation_from_identity());
        let powers: Vec<f64> = sc.channel_specs.iter().map(|s| s.transmit_power).collect();
        let mut rates = Vec::new();
        for n in 0..sc.user_count() {
            let zf_rate = per_user_rate(&w, n, powers[n], sc.link.noise_power, sc.link.bandwidth);
            let sinr_rate = general_sinr_rate(&h, &w, n, &powers, sc.link.noise_power, sc.link.bandwidth);
            rate = rate.max((zf_rate - sinr_rate).abs() / zf_rate);
            rates.push(zf_rate);
        }

        let f_mid = sc.server.max_total_frequency / sc.user_count() as f64;
        for (u, r) in sc.users.iter().zip(&rates) {
            let t = |b: f64, f: f64| user_total_latency(u, &sc.server, b, f, *r).unwrap_or(f64::NAN);
            let (b, f) = (0.5, f_mid);
            let hf = 1e-3 * f;
            let fd = (t(b, f + hf) - 2.0 * t(b, f) + t(b, f - hf)) / (hf * hf);
            let exact = latency_hessian(u, &sc.server, b, f)[1][1];
            hessian = hessian.max((fd - exact).abs() / exact.abs());
        }

        let problem = match AllocationProblem::new(sc.users.clone(), sc.server, rates, sc.latency_caps.clone()) {
            Ok(p) => p,
            Err(e) => return vec![CheckOutcome::failed("allocation problem", e)],
        };
        match solve_allocation(&problem, config.allocation_tolerance) {
            Ok(sol) => {
                kkt = kkt.max(sol.kkt_residual);
                infeasible += usize::from(!sol.feasible);
            }
            Err(e) => return vec![CheckOutcome::failed("allocation", e)],
        }
    }
    vec![
        CheckOutcome::new("zero-forcing residual max|W^H H - I|", zf, 1e-9),
        CheckOutcome::new("ZF rate vs general SINR rate (relative)", rate, 1e-9),
        CheckOutcome::new("latency curvature vs finite differences (relative)", hessian, 1e-4),
        CheckOutcome::new("allocation KKT residual", kkt, 1e-6),
        CheckOutcome {
            name: "allocation meets latency caps",
            passed: infeasible == 0,
            detail: format!("{infeasible} infeasible"),
        },
    ]
}
