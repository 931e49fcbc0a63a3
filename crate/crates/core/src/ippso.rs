//! Alternating optimisation of offloading decisions and antenna positions,
//! plus the two fixed-array baselines.

use crate::alloc::{solve_allocation, threshold_round, AllocError, AllocationProblem};
use crate::channel::{ChannelError, PlanarPosition};
use crate::latency::{per_user_latencies, AllocationState, LatencyError};
use crate::pso::{run_pso, splitmix64, EvaluationContext, PsoError, SwarmConfig};
use crate::scalar::Scalar;
use crate::scenario::{ScenarioError, ScenarioInstance};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Pso(#[from] PsoError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundingMode<T> {
    /// Keep the offload ratios returned by the allocation step.
    Continuous,
    /// Round ratios at or above the threshold to 1, the rest to 0.
    Threshold(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IppsoConfig<T> {
    pub outer_iterations: usize,
    pub swarm: SwarmConfig<T>,
    /// Relative tolerance of the allocation step.
    pub allocation_tolerance: T,
    pub rounding_mode: RoundingMode<T>,
    pub rng_seed: u64,
}

impl<T: Scalar> IppsoConfig<T> {
    pub fn for_scenario(scenario: &ScenarioInstance<T>, rng_seed: u64) -> Self {
        Self {
            outer_iterations: 5,
            swarm: SwarmConfig::for_region(scenario.region_half_width, scenario.min_spacing),
            allocation_tolerance: T::of(1e-9),
            rounding_mode: RoundingMode::Continuous,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    BaselineFixed,
    BaselineLocal,
    Ippso,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::BaselineFixed => "baseline_fixed",
            Scheme::BaselineLocal => "baseline_local",
            Scheme::Ippso => "ippso",
        }
    }
}

/// One recorded optimiser state. `outer_iter` 0 is the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub global_best_fitness: T,
    pub total_latency: T,
    pub offload_ratios: Vec<T>,
    pub positions: Vec<PlanarPosition<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<T> {
    pub scheme: Scheme,
    pub final_positions: Vec<PlanarPosition<T>>,
    pub final_allocation: AllocationState<T>,
    pub total_latency: T,
    pub per_user_latencies: Vec<T>,
    pub rates: Vec<T>,
    /// Total latency at the start and after every allocation and position
    /// phase.
    pub outer_trace: Vec<T>,
    /// Swarm global-best fitness per outer iteration.
    pub inner_traces: Vec<Vec<T>>,
    /// Allocation after every allocation phase.
    pub allocation_trace: Vec<AllocationState<T>>,
    pub trace: Vec<TraceRow<T>>,
    /// False when some allocation phase could not meet every latency cap.
    pub allocation_feasible: bool,
}

impl<T: Scalar> RunResult<T> {
    /// Sum latency re-derived from the final positions and allocation.
    pub fn recomputed_total_latency(&self, scenario: &ScenarioInstance<T>) -> Result<T, RunError> {
        let rates = scenario.link.rates(&self.final_positions, &scenario.channel_specs)?;
        Ok(per_user_latencies(&scenario.users, &scenario.server, &self.final_allocation, &rates)?
            .into_iter()
            .sum())
    }

    pub fn mean_rate(&self) -> T {
        self.rates.iter().copied().sum::<T>() / T::of(self.rates.len() as f64)
    }
}

fn check_scenario<T: Scalar>(scenario: &ScenarioInstance<T>) -> Result<(), RunError> {
    scenario
        .validate()
        .map_err(|e| RunError::ScenarioInvalid(e.to_string()))?;
    if scenario.users.is_empty() {
        return Err(RunError::ScenarioInvalid("no users".into()));
    }
    Ok(())
}

struct Evaluated<T> {
    rates: Vec<T>,
    latencies: Vec<T>,
    total: T,
}

fn evaluate<T: Scalar>(
    scenario: &ScenarioInstance<T>,
    positions: &[PlanarPosition<T>],
    allocation: &AllocationState<T>,
) -> Result<Evaluated<T>, RunError> {
    let rates = scenario.link.rates(positions, &scenario.channel_specs)?;
    let latencies = per_user_latencies(&scenario.users, &scenario.server, allocation, &rates)?;
    let total = latencies.iter().copied().sum();
    Ok(Evaluated { rates, latencies, total })
}

fn allocation_problem<T: Scalar>(scenario: &ScenarioInstance<T>, rates: Vec<T>) -> Result<AllocationProblem<T>, RunError> {
    Ok(AllocationProblem::new(
        scenario.users.clone(),
        scenario.server,
        rates,
        scenario.latency_caps.clone(),
    )?)
}

fn apply_rounding<T: Scalar>(
    scenario: &ScenarioInstance<T>,
    rates: &[T],
    allocation: AllocationState<T>,
    mode: RoundingMode<T>,
) -> Result<AllocationState<T>, RunError> {
    match mode {
        RoundingMode::Continuous => Ok(allocation),
        RoundingMode::Threshold(x) => {
            let problem = allocation_problem(scenario, rates.to_vec())?;
            Ok(threshold_round(&problem, &allocation, x)?)
        }
    }
}

fn finish<T: Scalar>(
    scheme: Scheme,
    scenario: &ScenarioInstance<T>,
    positions: Vec<PlanarPosition<T>>,
    allocation: AllocationState<T>,
    mut result: RunResult<T>,
) -> Result<RunResult<T>, RunError> {
    let e = evaluate(scenario, &positions, &allocation)?;
    result.scheme = scheme;
    result.final_positions = positions;
    result.final_allocation = allocation;
    result.total_latency = e.total;
    result.per_user_latencies = e.latencies;
    result.rates = e.rates;
    Ok(result)
}

fn empty_result<T: Scalar>(scheme: Scheme) -> RunResult<T> {
    RunResult {
        scheme,
        final_positions: Vec::new(),
        final_allocation: AllocationState::local_only(0),
        total_latency: T::zero(),
        per_user_latencies: Vec::new(),
        rates: Vec::new(),
        outer_trace: Vec::new(),
        inner_traces: Vec::new(),
        allocation_trace: Vec::new(),
        trace: Vec::new(),
        allocation_feasible: true,
    }
}

fn single_row<T: Scalar>(total: T, allocation: &AllocationState<T>, positions: &[PlanarPosition<T>]) -> TraceRow<T> {
    TraceRow {
        outer_iter: 0,
        inner_iter: 0,
        global_best_fitness: total,
        total_latency: total,
        offload_ratios: allocation.offload_ratios.clone(),
        positions: positions.to_vec(),
    }
}

/// Everything computed locally at the reference array.
pub fn run_baseline_local_only<T: Scalar>(scenario: &ScenarioInstance<T>) -> Result<RunResult<T>, RunError> {
    check_scenario(scenario)?;
    let positions = scenario.reference_array()?;
    let allocation = AllocationState::local_only(scenario.user_count());
    let e = evaluate(scenario, &positions, &allocation)?;
    let mut result = empty_result(Scheme::BaselineLocal);
    result.outer_trace = vec![e.total];
    result.trace = vec![single_row(e.total, &allocation, &positions)];
    finish(Scheme::BaselineLocal, scenario, positions, allocation, result)
}

/// Optimised offloading at the reference array.
pub fn run_baseline_fixed_antenna<T: Scalar>(
    scenario: &ScenarioInstance<T>,
    config: &IppsoConfig<T>,
) -> Result<RunResult<T>, RunError> {
    check_scenario(scenario)?;
    let positions = scenario.reference_array()?;
    let rates = scenario.link.rates(&positions, &scenario.channel_specs)?;
    let solution = solve_allocation(&allocation_problem(scenario, rates.clone())?, config.allocation_tolerance)?;
    let allocation = apply_rounding(scenario, &rates, solution.allocation, config.rounding_mode)?;
    let e = evaluate(scenario, &positions, &allocation)?;
    let mut result = empty_result(Scheme::BaselineFixed);
    result.outer_trace = vec![e.total];
    result.allocation_trace = vec![allocation.clone()];
    result.trace = vec![single_row(e.total, &allocation, &positions)];
    result.allocation_feasible = solution.feasible;
    finish(Scheme::BaselineFixed, scenario, positions, allocation, result)
}

fn outer_seed(seed: u64, outer: usize) -> u64 {
    splitmix64(seed ^ splitmix64(outer as u64 + 1))
}

/// Alternates the exact allocation step with a swarm search over antenna
/// positions, starting from the reference array with nothing offloaded.
///
/// Each swarm is seeded with the current layout, so neither phase can raise
/// the sum latency while the caps hold. With zero swarm iterations the
/// layout is left untouched.
pub fn run_ippso<T: Scalar>(scenario: &ScenarioInstance<T>, config: &IppsoConfig<T>) -> Result<RunResult<T>, RunError> {
    check_scenario(scenario)?;
    config.swarm.validate()?;
    if config.outer_iterations == 0 {
        return Err(RunError::ScenarioInvalid("outer_iterations must be >= 1".into()));
    }
    let m = scenario.antenna_count;
    let mut positions = scenario.reference_array()?;
    let mut allocation = AllocationState::local_only(scenario.user_count());
    let start = evaluate(scenario, &positions, &allocation)?;
    let mut rates = start.rates;

    let mut result = empty_result(Scheme::Ippso);
    result.outer_trace.push(start.total);
    result.trace.push(single_row(start.total, &allocation, &positions));

    for k in 1..=config.outer_iterations {
        let solution = solve_allocation(&allocation_problem(scenario, rates.clone())?, config.allocation_tolerance)?;
        result.allocation_feasible &= solution.feasible;
        allocation = solution.allocation;
        result.outer_trace.push(solution.objective);
        result.allocation_trace.push(allocation.clone());

        let ctx = EvaluationContext {
            users: &scenario.users,
            server: &scenario.server,
            channel_specs: &scenario.channel_specs,
            allocation: &allocation,
            latency_caps: &scenario.latency_caps,
            link: scenario.link,
            swarm: &config.swarm,
        };
        let incumbent = PlanarPosition::to_flat(&positions);
        let (fitness_trace, position_trace) = if config.swarm.max_iterations == 0 {
            (vec![ctx.fitness(&incumbent, None)], vec![incumbent])
        } else {
            let outcome = run_pso(&config.swarm, m, &ctx, outer_seed(config.rng_seed, k), Some(&incumbent))?;
            (outcome.fitness_trace, outcome.position_trace)
        };
        for (t, (f, coords)) in fitness_trace.iter().zip(&position_trace).enumerate() {
            let total = ctx.score(coords).map_or(T::nan(), |s| s.total_latency);
            result.trace.push(TraceRow {
                outer_iter: k,
                inner_iter: t,
                global_best_fitness: *f,
                total_latency: total,
                offload_ratios: allocation.offload_ratios.clone(),
                positions: PlanarPosition::from_flat(coords),
            });
        }
        positions = PlanarPosition::from_flat(position_trace.last().expect("trace is never empty"));
        let e = evaluate(scenario, &positions, &allocation)?;
        rates = e.rates;
        result.outer_trace.push(e.total);
        result.inner_traces.push(fitness_trace);
    }

    let allocation = apply_rounding(scenario, &rates, allocation, config.rounding_mode)?;
    finish(Scheme::Ippso, scenario, positions, allocation, result)
}
