//! Offload-ratio and server-CPU allocation for fixed antenna positions.
//!
//! For fixed rates the sum latency is
//!
//! ```text
//! T = sum_n a_n + beta_n (c_n + K_n / f_n)
//! ```
//!
//! with `a_n` the local-branch latency, `c_n` the transfer latency minus
//! `a_n`, and `K_n` the server workload. The objective is linear in each
//! `beta_n` once the CPU shares are fixed, and the per-user latency caps are
//! linear in `beta_n` as well, so for any fixed shares an optimal ratio vector
//! is binary. The solver therefore enumerates the set of offloading users
//! and, for each set, minimises `sum K_n / f_n` over the capacity simplex
//! with the per-user cap turned into a lower bound on `f_n`. That share
//! problem is smooth and strictly convex and is solved with a log-barrier
//! Newton method. The best set over all enumerated sets is the global
//! optimum of the relaxed problem.
//!
//! The objective is not jointly convex in `(beta, f)` (see
//! [`crate::latency::latency_hessian`]), which is why a single descent run on
//! the joint variables is not used.

use crate::latency::{
    local_latency, offload_transfer_latency, per_user_latencies, system_total_latency, upload_latency,
    AllocationState, LatencyError, ServerProfile, UserProfile,
};
use crate::scalar::Scalar;
use thiserror::Error;

/// Users beyond this count make offload-set enumeration impractical.
pub const MAX_ENUMERATED_USERS: usize = 20;

/// Relative slack granted on each latency cap before it is treated as
/// violated by the solver.
const CAP_SLACK: f64 = 1e-9;

/// Relative tolerance on the latency caps when reporting feasibility.
pub const CAP_FEASIBILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("invalid allocation problem: {0}")]
    InvalidProblem(String),
    #[error("{users} users exceed the enumeration limit of {MAX_ENUMERATED_USERS}")]
    TooManyUsers { users: usize },
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem<T> {
    pub users: Vec<UserProfile<T>>,
    pub server: ServerProfile<T>,
    /// Uplink rates in bits/s at the current antenna positions.
    pub rates: Vec<T>,
    /// Per-user latency caps in seconds.
    pub latency_caps: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution<T> {
    pub allocation: AllocationState<T>,
    /// Sum latency in seconds.
    pub objective: T,
    pub kkt_residual: T,
    /// `false` when no allocation meets every latency cap; the allocation is
    /// then the least-violating one found.
    pub feasible: bool,
}

/// Per-user constants of the allocation objective.
#[derive(Debug, Clone, Copy)]
struct UserTerms<T> {
    /// Local-branch latency `T_loc + T_up`.
    local: T,
    /// Change in latency from offloading, excluding server execution.
    transfer_gain: T,
    /// Server execution time with the whole server, `K_n / f_max`.
    exec_full: T,
    /// Cap minus local latency (with solver slack).
    cap_slack: T,
}

impl<T: Scalar> AllocationProblem<T> {
    pub fn new(
        users: Vec<UserProfile<T>>,
        server: ServerProfile<T>,
        rates: Vec<T>,
        latency_caps: Vec<T>,
    ) -> Result<Self, AllocError> {
        let p = Self {
            users,
            server,
            rates,
            latency_caps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AllocError> {
        let n = self.users.len();
        if self.rates.len() != n || self.latency_caps.len() != n {
            return Err(AllocError::InvalidProblem(format!(
                "{n} users but {} rates and {} caps",
                self.rates.len(),
                self.latency_caps.len()
            )));
        }
        for u in &self.users {
            u.validate()?;
        }
        self.server.validate()?;
        if let Some(r) = self.rates.iter().find(|r| !(**r > T::zero())) {
            return Err(AllocError::InvalidProblem(format!("rates must be positive, got {r}")));
        }
        if let Some(c) = self.latency_caps.iter().find(|c| !(**c > T::zero())) {
            return Err(AllocError::InvalidProblem(format!("latency caps must be positive, got {c}")));
        }
        Ok(())
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn objective(&self, allocation: &AllocationState<T>) -> Result<T, AllocError> {
        Ok(system_total_latency(&self.users, &self.server, allocation, &self.rates)?)
    }

    /// Sum latency when nothing is offloaded.
    pub fn local_only_objective(&self) -> Result<T, AllocError> {
        self.objective(&AllocationState::local_only(self.user_count()))
    }

    /// Whether every per-user latency is within its cap (relative tolerance
    /// [`CAP_FEASIBILITY_TOLERANCE`]).
    pub fn meets_caps(&self, allocation: &AllocationState<T>) -> Result<bool, AllocError> {
        let lat = per_user_latencies(&self.users, &self.server, allocation, &self.rates)?;
        let tol = T::of(CAP_FEASIBILITY_TOLERANCE);
        Ok(lat
            .iter()
            .zip(&self.latency_caps)
            .all(|(t, cap)| *t <= *cap * (T::one() + tol)))
    }

    fn terms(&self) -> Result<Vec<UserTerms<T>>, AllocError> {
        let f_max = self.server.max_total_frequency;
        self.users
            .iter()
            .zip(&self.rates)
            .zip(&self.latency_caps)
            .map(|((u, &r), &cap)| {
                let local = local_latency(u) + upload_latency(u, r)?;
                Ok(UserTerms {
                    local,
                    transfer_gain: offload_transfer_latency(u, r)? - local,
                    exec_full: self.server.workload(u) / f_max,
                    cap_slack: cap * (T::one() + T::of(CAP_SLACK)) - local,
                })
            })
            .collect()
    }
}

/// Minimises the relaxed sum latency over offload ratios and server CPU
/// shares subject to the capacity budget and per-user latency caps.
///
/// `tolerance` bounds the relative suboptimality of each share subproblem.
pub fn solve_allocation<T: Scalar>(
    problem: &AllocationProblem<T>,
    tolerance: T,
) -> Result<AllocationSolution<T>, AllocError> {
    if !(tolerance > T::zero()) {
        return Err(AllocError::InvalidProblem(format!("tolerance must be positive, got {tolerance}")));
    }
    problem.validate()?;
    let n = problem.user_count();
    if n > MAX_ENUMERATED_USERS {
        return Err(AllocError::TooManyUsers { users: n });
    }
    let terms = problem.terms()?;

    // Users whose cap is already violated locally must offload; users for
    // which offloading cannot beat local execution never do.
    let mut forced = Vec::new();
    let mut optional = Vec::new();
    let mut blocked = false;
    for (i, t) in terms.iter().enumerate() {
        if t.cap_slack < T::zero() {
            if t.cap_slack - t.transfer_gain > T::zero() {
                forced.push(i);
            } else {
                blocked = true;
            }
        } else if t.transfer_gain < T::zero() {
            optional.push(i);
        }
    }

    let mut best: Option<(T, Vec<usize>, Vec<T>)> = None;
    if !blocked {
        for mask in 0u64..(1u64 << optional.len()) {
            let mut members = forced.clone();
            members.extend(
                optional
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| mask >> j & 1 == 1)
                    .map(|(_, &i)| i),
            );
            members.sort_unstable();
            let weights: Vec<T> = members.iter().map(|&i| terms[i].exec_full).collect();
            let floors: Vec<T> = members
                .iter()
                .map(|&i| terms[i].exec_full / (terms[i].cap_slack - terms[i].transfer_gain))
                .collect();
            let Some(shares) = barrier_shares(&weights, &floors, tolerance) else {
                continue;
            };
            let value: T = members
                .iter()
                .zip(&shares)
                .map(|(&i, &s)| terms[i].transfer_gain + terms[i].exec_full / s)
                .sum();
            if best.as_ref().is_none_or(|(v, _, _)| value < *v) {
                best = Some((value, members, shares));
            }
        }
    }

    let (allocation, feasible_set) = match best {
        Some((_, members, shares)) => (build_allocation(problem, &members, &shares), true),
        None => (least_violating(problem, &terms)?, false),
    };
    let objective = problem.objective(&allocation)?;
    let kkt = kkt_residual(problem, &allocation)?;
    let feasible = feasible_set && problem.meets_caps(&allocation)?;
    Ok(AllocationSolution {
        allocation,
        objective,
        kkt_residual: kkt,
        feasible,
    })
}

fn build_allocation<T: Scalar>(problem: &AllocationProblem<T>, members: &[usize], shares: &[T]) -> AllocationState<T> {
    let mut alloc = AllocationState::local_only(problem.user_count());
    let f_max = problem.server.max_total_frequency;
    for (&i, &s) in members.iter().zip(shares) {
        alloc.offload_ratios[i] = T::one();
        alloc.server_frequencies[i] = s * f_max;
    }
    alloc
}

/// Allocation minimising total cap violation (then latency) when no
/// allocation meets every cap. Shares follow the uncapped optimum.
fn least_violating<T: Scalar>(problem: &AllocationProblem<T>, terms: &[UserTerms<T>]) -> Result<AllocationState<T>, AllocError> {
    let n = problem.user_count();
    let mut best: Option<(T, T, AllocationState<T>)> = None;
    for mask in 0u64..(1u64 << n) {
        let members: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let roots: Vec<T> = members.iter().map(|&i| terms[i].exec_full.sqrt()).collect();
        let total: T = roots.iter().copied().sum();
        let shares: Vec<T> = roots.iter().map(|r| *r / total).collect();
        let alloc = build_allocation(problem, &members, &shares);
        let lat = per_user_latencies(&problem.users, &problem.server, &alloc, &problem.rates)?;
        let violation: T = lat
            .iter()
            .zip(&problem.latency_caps)
            .map(|(t, c)| (*t - *c).max(T::zero()))
            .sum();
        let objective: T = lat.iter().copied().sum();
        let better = match &best {
            None => true,
            Some((v, o, _)) => violation < *v || (violation == *v && objective < *o),
        };
        if better {
            best = Some((violation, objective, alloc));
        }
    }
    Ok(best.map(|(_, _, a)| a).unwrap_or_else(|| AllocationState::local_only(n)))
}

/// Minimises `sum_n w_n / s_n` subject to `sum_n s_n <= 1` and
/// `s_n >= floor_n` with a log-barrier Newton method. Returns `None` when the
/// floors leave no room.
///
/// The barrier weight grows by a factor of 10 per stage from 1 until the
/// duality-gap bound drops below both `1e-8` and `tolerance`. The result is
/// rescaled to use the full budget, which can only lower the objective.
pub(crate) fn barrier_shares<T: Scalar>(weights: &[T], floors: &[T], tolerance: T) -> Option<Vec<T>> {
    let m = weights.len();
    if m == 0 {
        return Some(Vec::new());
    }
    let floor_sum: T = floors.iter().copied().sum();
    let room = T::one() - floor_sum;
    if room < T::zero() {
        return None;
    }
    if room <= T::epsilon() * T::of(16.0) {
        return Some(floors.iter().map(|f| *f / floor_sum).collect());
    }
    let wsum: T = weights.iter().copied().sum();
    let w: Vec<T> = weights.iter().map(|x| *x / wsum).collect();

    let step0 = room / T::of((m + 1) as f64);
    let mut s: Vec<T> = floors.iter().map(|f| *f + step0).collect();

    let constraints = T::of((m + 1) as f64);
    let gap_target = tolerance.min(T::of(1e-8));
    let ten = T::of(10.0);
    let mut t = T::one();
    loop {
        center(&w, floors, &mut s, t);
        if constraints / t <= gap_target {
            break;
        }
        t *= ten;
    }

    let total: T = s.iter().copied().sum();
    Some(s.into_iter().map(|x| x / total).collect())
}

fn barrier_value<T: Scalar>(w: &[T], floors: &[T], s: &[T], t: T) -> T {
    let free = T::one() - s.iter().copied().sum::<T>();
    let mut v = -free.ln();
    for ((wi, fi), si) in w.iter().zip(floors).zip(s) {
        v += t * *wi / *si - (*si - *fi).ln();
    }
    v
}

fn strictly_inside<T: Scalar>(floors: &[T], s: &[T]) -> bool {
    s.iter().zip(floors).all(|(si, fi)| *si > *fi && *si > T::zero())
        && s.iter().copied().sum::<T>() < T::one()
}

/// Newton centering for one barrier weight.
fn center<T: Scalar>(w: &[T], floors: &[T], s: &mut Vec<T>, t: T) {
    let m = w.len();
    let two = T::of(2.0);
    for _ in 0..200 {
        let free = T::one() - s.iter().copied().sum::<T>();
        let c = T::one() / (free * free);
        let mut grad = vec![T::zero(); m];
        let mut dinv = vec![T::zero(); m];
        for i in 0..m {
            let gap = s[i] - floors[i];
            grad[i] = -t * w[i] / (s[i] * s[i]) - T::one() / gap + T::one() / free;
            let d = two * t * w[i] / (s[i] * s[i] * s[i]) + T::one() / (gap * gap);
            dinv[i] = T::one() / d;
        }
        // (D + c 11^T)^{-1} g by Sherman-Morrison.
        let dg: Vec<T> = grad.iter().zip(&dinv).map(|(g, d)| *g * *d).collect();
        let sum_dg: T = dg.iter().copied().sum();
        let sum_d: T = dinv.iter().copied().sum();
        let coef = c * sum_dg / (T::one() + c * sum_d);
        let step: Vec<T> = (0..m).map(|i| -(dg[i] - coef * dinv[i])).collect();
        let slope: T = grad.iter().zip(&step).map(|(g, d)| *g * *d).sum();
        if -slope / two <= T::of(1e-12) || !(slope < T::zero()) {
            return;
        }

        let f0 = barrier_value(w, floors, s, t);
        let mut alpha = T::one();
        let mut trial: Vec<T> = s.clone();
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..m {
                trial[i] = s[i] + alpha * step[i];
            }
            if strictly_inside(floors, &trial)
                && barrier_value(w, floors, &trial, t) <= f0 + T::of(0.25) * alpha * slope
            {
                accepted = true;
                break;
            }
            alpha *= T::of(0.5);
        }
        if !accepted {
            return;
        }
        std::mem::swap(s, &mut trial);
    }
}

/// Projected-gradient optimality residual of an allocation.
///
/// Works in normalised coordinates `(beta, f / f_max)` with the objective
/// divided by the local-only latency, and returns
/// `max |z - P(z - grad)|` where `P` projects onto the ratio box and the
/// capacity simplex. Zero exactly at stationary points of those
/// constraints; the per-user latency caps are not part of the certificate.
pub fn kkt_residual<T: Scalar>(problem: &AllocationProblem<T>, allocation: &AllocationState<T>) -> Result<T, AllocError> {
    let terms = problem.terms()?;
    let n = problem.user_count();
    if allocation.len() != n || allocation.server_frequencies.len() != n {
        return Err(AllocError::InvalidProblem("allocation length mismatch".into()));
    }
    let scale: T = terms.iter().map(|t| t.local).sum();
    let f_max = problem.server.max_total_frequency;
    let mut residual = T::zero();
    let mut shares = Vec::with_capacity(n);
    let mut share_grads = Vec::with_capacity(n);
    for (i, t) in terms.iter().enumerate() {
        let beta = allocation.offload_ratios[i];
        let share = allocation.server_frequencies[i] / f_max;
        let g_beta = if share > T::zero() {
            (t.transfer_gain + t.exec_full / share) / scale
        } else {
            T::infinity()
        };
        let g_share = if beta == T::zero() {
            T::zero()
        } else if share > T::zero() {
            -beta * t.exec_full / (share * share) / scale
        } else {
            T::neg_infinity()
        };
        let projected = (beta - g_beta).max(T::zero()).min(T::one());
        residual = residual.max((beta - projected).abs());
        shares.push(share);
        share_grads.push(g_share);
    }
    let target: Vec<T> = shares.iter().zip(&share_grads).map(|(s, g)| *s - *g).collect();
    if target.iter().any(|x| !x.is_finite()) {
        return Ok(T::infinity());
    }
    let projected = project_capped_simplex(&target);
    for (s, p) in shares.iter().zip(&projected) {
        residual = residual.max((*s - *p).abs());
    }
    Ok(residual)
}

/// Euclidean projection onto `{x >= 0, sum x <= 1}`.
pub fn project_capped_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let clipped: Vec<T> = v.iter().map(|x| x.max(T::zero())).collect();
    if clipped.iter().copied().sum::<T>() <= T::one() {
        return clipped;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (j, u) in sorted.iter().enumerate() {
        cumulative += *u;
        let candidate = (cumulative - T::one()) / T::of((j + 1) as f64);
        if *u - candidate > T::zero() {
            theta = candidate;
        }
    }
    v.iter().map(|x| (*x - theta).max(T::zero())).collect()
}

/// Maps each offload ratio to 0 or 1 (ratios equal to `threshold` round up)
/// and re-splits the server capacity for the binary ratios, which gives
/// each offloading user a share proportional to the square root of its
/// server workload.
pub fn threshold_round<T: Scalar>(
    problem: &AllocationProblem<T>,
    allocation: &AllocationState<T>,
    threshold: T,
) -> Result<AllocationState<T>, AllocError> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(AllocError::InvalidProblem(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let n = problem.user_count();
    if allocation.len() != n {
        return Err(AllocError::InvalidProblem("allocation length mismatch".into()));
    }
    let ratios: Vec<T> = allocation
        .offload_ratios
        .iter()
        .map(|b| if *b >= threshold { T::one() } else { T::zero() })
        .collect();
    let roots: Vec<T> = problem
        .users
        .iter()
        .zip(&ratios)
        .map(|(u, b)| (*b * problem.server.workload(u)).sqrt())
        .collect();
    let total: T = roots.iter().copied().sum();
    let frequencies = roots
        .iter()
        .map(|r| {
            if total > T::zero() {
                problem.server.max_total_frequency * *r / total
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(AllocationState {
        offload_ratios: ratios,
        server_frequencies: frequencies,
    })
}
