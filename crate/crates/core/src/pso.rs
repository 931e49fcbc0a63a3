//! Particle swarm search over the `2M` antenna coordinates.
//!
//! Each particle is a full antenna layout `[x1, y1, ..., xM, yM]`. Velocities
//! follow the inertia/cognitive/social recurrence with an inertia weight that
//! decreases linearly over the run, positions are clamped to the square
//! region after every move, and the spacing and latency-cap constraints enter
//! the fitness as penalties.
//!
//! Randomness is drawn from one ChaCha stream per `(seed, particle,
//! iteration)`, so serial and parallel evaluation give identical swarms.

use crate::channel::{ChannelError, LinkBudget, PlanarPosition, UserChannelSpec};
use crate::latency::{per_user_latencies, AllocationState, ServerProfile, UserProfile};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Fitness assigned to layouts whose channel cannot be zero-forced, as a
/// multiple of the current global best.
pub const SENTINEL_FACTOR: f64 = 1e6;
/// Fitness for such layouts when no global best exists yet (seconds).
pub const SENTINEL_FALLBACK: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsoError {
    #[error("invalid swarm configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig<T> {
    pub particle_count: usize,
    pub max_iterations: usize,
    pub cognitive_factor: T,
    pub social_factor: T,
    pub inertia_max: T,
    pub inertia_min: T,
    /// Weight on squared latency-cap excess (1/s^2).
    pub penalty_latency: T,
    /// Weight per antenna pair closer than `min_spacing`.
    pub penalty_distance: T,
    /// Half side `A` of the square movement region (m).
    pub region_half_width: T,
    /// Minimum inter-antenna distance (m).
    pub min_spacing: T,
    /// Per-coordinate velocity bound (m per iteration).
    pub velocity_clamp: T,
    /// Draw fresh random factors per coordinate instead of per particle.
    pub per_coordinate_random: bool,
    /// Evaluate particles on the rayon pool.
    pub parallel: bool,
}

impl<T: Scalar> SwarmConfig<T> {
    /// Textbook PSO settings for a region of half width `region_half_width`.
    pub fn for_region(region_half_width: T, min_spacing: T) -> Self {
        Self {
            particle_count: 50,
            max_iterations: 50,
            cognitive_factor: T::of(2.0),
            social_factor: T::of(2.0),
            inertia_max: T::of(0.9),
            inertia_min: T::of(0.4),
            penalty_latency: T::of(1e3),
            penalty_distance: T::of(1e3),
            region_half_width,
            min_spacing,
            velocity_clamp: region_half_width / T::of(2.0),
            per_coordinate_random: false,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<(), PsoError> {
        let fail = |msg: &str| Err(PsoError::InvalidConfig(msg.to_string()));
        if self.particle_count < 2 {
            return fail("particle_count must be >= 2");
        }
        if !(self.cognitive_factor >= T::zero() && self.social_factor >= T::zero()) {
            return fail("learning factors must be >= 0");
        }
        if !(self.inertia_min > T::zero() && self.inertia_max >= self.inertia_min) {
            return fail("inertia weights must satisfy inertia_max >= inertia_min > 0");
        }
        if !(self.region_half_width > T::zero()) {
            return fail("region_half_width must be > 0");
        }
        if !(self.min_spacing > T::zero()) {
            return fail("min_spacing must be > 0");
        }
        if !(self.penalty_latency > T::zero() && self.penalty_distance > T::zero()) {
            return fail("penalty coefficients must be > 0");
        }
        if !(self.velocity_clamp > T::zero()) {
            return fail("velocity_clamp must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle<T> {
    pub position: Vec<T>,
    pub velocity: Vec<T>,
    pub personal_best_position: Vec<T>,
    pub personal_best_fitness: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState<T> {
    pub particles: Vec<Particle<T>>,
    pub global_best_position: Vec<T>,
    pub global_best_fitness: T,
    pub iteration: usize,
}

/// Something the swarm can minimise. `current_best` is the global best at
/// the start of the evaluation round, if any.
pub trait SwarmObjective<T>: Sync {
    fn evaluate(&self, position: &[T], current_best: Option<T>) -> T;
}

/// Adapts a plain closure into a [`SwarmObjective`].
pub struct FnObjective<F>(pub F);

impl<T, F> SwarmObjective<T> for FnObjective<F>
where
    F: Fn(&[T]) -> T + Sync,
{
    fn evaluate(&self, position: &[T], _current_best: Option<T>) -> T {
        (self.0)(position)
    }
}

/// Deterministic random stream for one particle at one iteration.
pub fn stream_rng(seed: u64, particle: usize, iteration: usize) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ particle as u64);
    h = splitmix64(h ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    ChaCha8Rng::seed_from_u64(h)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::of(u)
}

/// `w_max - (w_max - w_min) t / total`.
pub fn inertia_weight<T: Scalar>(config: &SwarmConfig<T>, t: usize, total_iterations: usize) -> T {
    if total_iterations == 0 {
        return config.inertia_max;
    }
    let frac = T::of(t as f64) / T::of(total_iterations as f64);
    config.inertia_max - (config.inertia_max - config.inertia_min) * frac
}

/// Componentwise clamp into `[-A, A]`.
pub fn clamp_positions<T: Scalar>(position: &[T], half_width: T) -> Vec<T> {
    position.iter().map(|x| x.min(half_width).max(-half_width)).collect()
}

/// Velocity and position update with explicit random factors `r1`, `r2`
/// (one entry per coordinate).
pub fn update_particle_with<T: Scalar>(
    particle: &Particle<T>,
    global_best: &[T],
    w: T,
    config: &SwarmConfig<T>,
    r1: &[T],
    r2: &[T],
) -> Particle<T> {
    let vmax = config.velocity_clamp;
    let velocity: Vec<T> = (0..particle.position.len())
        .map(|k| {
            let x = particle.position[k];
            let v = w * particle.velocity[k]
                + config.cognitive_factor * r1[k] * (particle.personal_best_position[k] - x)
                + config.social_factor * r2[k] * (global_best[k] - x);
            v.min(vmax).max(-vmax)
        })
        .collect();
    let moved: Vec<T> = particle.position.iter().zip(&velocity).map(|(x, v)| *x + *v).collect();
    Particle {
        position: clamp_positions(&moved, config.region_half_width),
        velocity,
        personal_best_position: particle.personal_best_position.clone(),
        personal_best_fitness: particle.personal_best_fitness,
    }
}

/// One PSO move with random factors drawn from `rng`.
pub fn update_particle<T: Scalar>(
    particle: &Particle<T>,
    global_best: &[T],
    w: T,
    config: &SwarmConfig<T>,
    rng: &mut ChaCha8Rng,
) -> Particle<T> {
    let dim = particle.position.len();
    let (r1, r2): (Vec<T>, Vec<T>) = if config.per_coordinate_random {
        (0..dim).map(|_| (uniform(rng, T::zero(), T::one()), uniform(rng, T::zero(), T::one()))).unzip()
    } else {
        let a = uniform(rng, T::zero(), T::one());
        let b = uniform(rng, T::zero(), T::one());
        (vec![a; dim], vec![b; dim])
    };
    update_particle_with(particle, global_best, w, config, &r1, &r2)
}

/// Number of unordered antenna pairs closer than `min_spacing`.
pub fn spacing_violations<T: Scalar>(positions: &[PlanarPosition<T>], min_spacing: T) -> usize {
    let mut count = 0;
    for (m, a) in positions.iter().enumerate() {
        for b in &positions[m + 1..] {
            if a.distance(b) < min_spacing {
                count += 1;
            }
        }
    }
    count
}

/// `tau1 * sum (T_n - cap_n)^2 over users above their cap + tau2 * N_d`.
pub fn penalty<T: Scalar>(
    positions: &[PlanarPosition<T>],
    per_user_latencies: &[T],
    latency_caps: &[T],
    config: &SwarmConfig<T>,
) -> T {
    let latency_excess: T = per_user_latencies
        .iter()
        .zip(latency_caps)
        .filter(|(t, cap)| **t > **cap)
        .map(|(t, cap)| (*t - *cap) * (*t - *cap))
        .sum();
    let nd = spacing_violations(positions, config.min_spacing);
    config.penalty_latency * latency_excess + config.penalty_distance * T::of(nd as f64)
}

/// Everything needed to score an antenna layout with the offloading
/// decisions held fixed.
#[derive(Debug, Clone)]
pub struct EvaluationContext<'a, T> {
    pub users: &'a [UserProfile<T>],
    pub server: &'a ServerProfile<T>,
    pub channel_specs: &'a [UserChannelSpec<T>],
    pub allocation: &'a AllocationState<T>,
    pub latency_caps: &'a [T],
    pub link: LinkBudget<T>,
    pub swarm: &'a SwarmConfig<T>,
}

/// Latency and penalty of one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutScore<T> {
    pub rates: Vec<T>,
    pub per_user_latencies: Vec<T>,
    pub total_latency: T,
    pub penalty: T,
}

impl<'a, T: Scalar> EvaluationContext<'a, T> {
    pub fn score(&self, coords: &[T]) -> Result<LayoutScore<T>, ChannelError> {
        let positions = PlanarPosition::from_flat(coords);
        let rates = self.link.rates(&positions, self.channel_specs)?;
        let lat = per_user_latencies(self.users, self.server, self.allocation, &rates)
            .map_err(|e| ChannelError::InvalidSpec(e.to_string()))?;
        let total: T = lat.iter().copied().sum();
        let pen = penalty(&positions, &lat, self.latency_caps, self.swarm);
        Ok(LayoutScore {
            rates,
            per_user_latencies: lat,
            total_latency: total,
            penalty: pen,
        })
    }

    /// Total latency plus penalty, or the sentinel for layouts that cannot be
    /// zero-forced.
    pub fn fitness(&self, coords: &[T], current_best: Option<T>) -> T {
        match self.score(coords) {
            Ok(s) if (s.total_latency + s.penalty).is_finite() => s.total_latency + s.penalty,
            _ => sentinel(current_best),
        }
    }
}

impl<'a, T: Scalar> SwarmObjective<T> for EvaluationContext<'a, T> {
    fn evaluate(&self, position: &[T], current_best: Option<T>) -> T {
        self.fitness(position, current_best)
    }
}

pub fn sentinel<T: Scalar>(current_best: Option<T>) -> T {
    match current_best {
        Some(b) if b.is_finite() && b > T::zero() => b * T::of(SENTINEL_FACTOR),
        _ => T::of(SENTINEL_FALLBACK),
    }
}

/// Builds the initial swarm. With `incumbent`, particle 0 starts there so the
/// swarm can never end worse than the layout it was asked to improve.
pub fn init_swarm<T: Scalar, O: SwarmObjective<T> + ?Sized>(
    config: &SwarmConfig<T>,
    antenna_count: usize,
    seed: u64,
    objective: &O,
    incumbent: Option<&[T]>,
) -> SwarmState<T> {
    let dim = 2 * antenna_count;
    let a = config.region_half_width;
    let build = |i: usize| -> Particle<T> {
        let position = match incumbent {
            Some(inc) if i == 0 => clamp_positions(inc, a),
            _ => {
                let mut rng = stream_rng(seed, i, 0);
                (0..dim).map(|_| uniform(&mut rng, -a, a)).collect()
            }
        };
        let fitness = objective.evaluate(&position, None);
        Particle {
            velocity: vec![T::zero(); dim],
            personal_best_position: position.clone(),
            personal_best_fitness: fitness,
            position,
        }
    };
    let particles: Vec<Particle<T>> = if config.parallel {
        (0..config.particle_count).into_par_iter().map(build).collect()
    } else {
        (0..config.particle_count).map(build).collect()
    };
    let mut state = SwarmState {
        global_best_position: particles[0].position.clone(),
        global_best_fitness: particles[0].personal_best_fitness,
        particles,
        iteration: 0,
    };
    refresh_global_best(&mut state);
    state
}

fn refresh_global_best<T: Scalar>(state: &mut SwarmState<T>) {
    for p in &state.particles {
        if p.personal_best_fitness < state.global_best_fitness {
            state.global_best_fitness = p.personal_best_fitness;
            state.global_best_position = p.personal_best_position.clone();
        }
    }
}

/// Advances every particle one iteration, then folds the new fitness values
/// into the personal and global bests in particle order.
pub fn step_swarm<T: Scalar, O: SwarmObjective<T> + ?Sized>(
    state: &mut SwarmState<T>,
    config: &SwarmConfig<T>,
    objective: &O,
    seed: u64,
) {
    let t = state.iteration + 1;
    let w = inertia_weight(config, t, config.max_iterations);
    let gbest = state.global_best_position.clone();
    let current = Some(state.global_best_fitness);
    let advance = |(i, p): (usize, &Particle<T>)| -> (Particle<T>, T) {
        let mut rng = stream_rng(seed, i, t);
        let moved = update_particle(p, &gbest, w, config, &mut rng);
        let f = objective.evaluate(&moved.position, current);
        (moved, f)
    };
    let moved: Vec<(Particle<T>, T)> = if config.parallel {
        state.particles.par_iter().enumerate().map(advance).collect()
    } else {
        state.particles.iter().enumerate().map(advance).collect()
    };
    for (slot, (mut p, f)) in state.particles.iter_mut().zip(moved) {
        if f < p.personal_best_fitness {
            p.personal_best_fitness = f;
            p.personal_best_position = p.position.clone();
        }
        *slot = p;
    }
    refresh_global_best(state);
    state.iteration = t;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome<T> {
    pub best_position: Vec<T>,
    pub best_fitness: T,
    /// Global best after initialisation and after each iteration.
    pub fitness_trace: Vec<T>,
    /// Global-best layout matching each `fitness_trace` entry.
    pub position_trace: Vec<Vec<T>>,
}

/// Runs the swarm for `config.max_iterations` iterations.
pub fn run_pso<T: Scalar, O: SwarmObjective<T> + ?Sized>(
    config: &SwarmConfig<T>,
    antenna_count: usize,
    objective: &O,
    seed: u64,
    incumbent: Option<&[T]>,
) -> Result<PsoOutcome<T>, PsoError> {
    config.validate()?;
    if antenna_count == 0 {
        return Err(PsoError::InvalidConfig("antenna_count must be >= 1".into()));
    }
    if let Some(inc) = incumbent {
        if inc.len() != 2 * antenna_count {
            return Err(PsoError::InvalidConfig(format!(
                "incumbent has {} coordinates, expected {}",
                inc.len(),
                2 * antenna_count
            )));
        }
    }
    let mut state = init_swarm(config, antenna_count, seed, objective, incumbent);
    let mut fitness_trace = vec![state.global_best_fitness];
    let mut position_trace = vec![state.global_best_position.clone()];
    for _ in 0..config.max_iterations {
        step_swarm(&mut state, config, objective, seed);
        fitness_trace.push(state.global_best_fitness);
        position_trace.push(state.global_best_position.clone());
    }
    Ok(PsoOutcome {
        best_position: state.global_best_position,
        best_fitness: state.global_best_fitness,
        fitness_trace,
        position_trace,
    })
}
