//! Training latency of the mixed local/offloaded execution model.
//!
//! A user trains a fraction `1 - beta` of its workload locally and uploads the
//! resulting model, and ships the remaining fraction `beta` of its raw data to
//! the edge server, which trains on it with a dedicated CPU share. Data sizes
//! are in bits and workloads in CPU cycles per bit.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatencyError {
    #[error("uplink rate must be positive, got {0}")]
    ZeroRate(f64),
    #[error("server CPU share must be positive for an offloading user, got {0}")]
    ZeroFrequency(f64),
    #[error("offload ratio {0} outside [0, 1]")]
    InvalidOffloadRatio(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile<T> {
    /// `C_n`, CPU cycles per bit on the device.
    pub cycles_per_bit: T,
    /// `D_n`, bits.
    pub data_size: T,
    /// `eps_n` in (0, 1].
    pub minibatch_ratio: T,
    pub local_iterations: u32,
    /// Hz.
    pub local_cpu_frequency: T,
    /// `v`, model size as a multiple of the data size.
    pub model_size_factor: T,
}

impl<T: Scalar> UserProfile<T> {
    pub fn validate(&self) -> Result<(), LatencyError> {
        let positive = [
            ("cycles_per_bit", self.cycles_per_bit),
            ("data_size", self.data_size),
            ("minibatch_ratio", self.minibatch_ratio),
            ("local_cpu_frequency", self.local_cpu_frequency),
            ("model_size_factor", self.model_size_factor),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(LatencyError::InvalidProfile(format!("user {name} must be positive, got {v}")));
            }
        }
        if self.minibatch_ratio > T::one() {
            return Err(LatencyError::InvalidProfile("user minibatch_ratio must be <= 1".into()));
        }
        if self.local_iterations == 0 {
            return Err(LatencyError::InvalidProfile("user local_iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// Model size `V_n = v D_n` in bits.
    pub fn model_size(&self) -> T {
        self.model_size_factor * self.data_size
    }

    /// CPU cycles of one local training run, `C_n D_n eps_n iota_n`.
    pub fn local_workload(&self) -> T {
        self.cycles_per_bit * self.data_size * self.minibatch_ratio * T::of(self.local_iterations as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerProfile<T> {
    /// `C_M`, CPU cycles per bit on the server.
    pub cycles_per_bit: T,
    pub minibatch_ratio: T,
    pub server_iterations: u32,
    /// Total server CPU frequency budget in Hz.
    pub max_total_frequency: T,
}

impl<T: Scalar> ServerProfile<T> {
    pub fn validate(&self) -> Result<(), LatencyError> {
        for (name, v) in [
            ("cycles_per_bit", self.cycles_per_bit),
            ("minibatch_ratio", self.minibatch_ratio),
            ("max_total_frequency", self.max_total_frequency),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(LatencyError::InvalidProfile(format!("server {name} must be positive, got {v}")));
            }
        }
        if self.minibatch_ratio > T::one() {
            return Err(LatencyError::InvalidProfile("server minibatch_ratio must be <= 1".into()));
        }
        if self.server_iterations == 0 {
            return Err(LatencyError::InvalidProfile("server_iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// CPU cycles the server spends training on all of `user`'s data,
    /// `C_M D_n eps_M iota_M`.
    pub fn workload(&self, user: &UserProfile<T>) -> T {
        self.cycles_per_bit * user.data_size * self.minibatch_ratio * T::of(self.server_iterations as f64)
    }
}

/// Offload ratios and server CPU shares for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState<T> {
    pub offload_ratios: Vec<T>,
    /// Hz.
    pub server_frequencies: Vec<T>,
}

impl<T: Scalar> AllocationState<T> {
    /// Pure local execution: nothing offloaded, no server share.
    pub fn local_only(users: usize) -> Self {
        Self {
            offload_ratios: vec![T::zero(); users],
            server_frequencies: vec![T::zero(); users],
        }
    }

    pub fn len(&self) -> usize {
        self.offload_ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offload_ratios.is_empty()
    }
}

pub fn local_latency<T: Scalar>(user: &UserProfile<T>) -> T {
    user.local_workload() / user.local_cpu_frequency
}

pub fn upload_latency<T: Scalar>(user: &UserProfile<T>, rate: T) -> Result<T, LatencyError> {
    check_rate(rate)?;
    Ok(user.model_size() / rate)
}

pub fn offload_transfer_latency<T: Scalar>(user: &UserProfile<T>, rate: T) -> Result<T, LatencyError> {
    check_rate(rate)?;
    Ok(user.data_size / rate)
}

pub fn server_exec_latency<T: Scalar>(
    user: &UserProfile<T>,
    server: &ServerProfile<T>,
    f_nm: T,
) -> Result<T, LatencyError> {
    if !(f_nm > T::zero()) {
        return Err(LatencyError::ZeroFrequency(f_nm.as_f64()));
    }
    Ok(server.workload(user) / f_nm)
}

/// `(1 - beta)(T_loc + T_up) + beta (T_off + T_exe)`. Server terms are skipped
/// entirely when `beta == 0`, so a zero CPU share is allowed there.
pub fn user_total_latency<T: Scalar>(
    user: &UserProfile<T>,
    server: &ServerProfile<T>,
    beta: T,
    f_nm: T,
    rate: T,
) -> Result<T, LatencyError> {
    if !(beta >= T::zero() && beta <= T::one()) {
        return Err(LatencyError::InvalidOffloadRatio(beta.as_f64()));
    }
    let local_branch = local_latency(user) + upload_latency(user, rate)?;
    if beta == T::zero() {
        return Ok(local_branch);
    }
    let offload_branch = offload_transfer_latency(user, rate)? + server_exec_latency(user, server, f_nm)?;
    if beta == T::one() {
        return Ok(offload_branch);
    }
    Ok((T::one() - beta) * local_branch + beta * offload_branch)
}

pub fn per_user_latencies<T: Scalar>(
    users: &[UserProfile<T>],
    server: &ServerProfile<T>,
    allocation: &AllocationState<T>,
    rates: &[T],
) -> Result<Vec<T>, LatencyError> {
    let n = users.len();
    if allocation.offload_ratios.len() != n || allocation.server_frequencies.len() != n || rates.len() != n {
        return Err(LatencyError::LengthMismatch(format!(
            "{n} users, {} offload ratios, {} frequencies, {} rates",
            allocation.offload_ratios.len(),
            allocation.server_frequencies.len(),
            rates.len()
        )));
    }
    users
        .iter()
        .enumerate()
        .map(|(i, u)| {
            user_total_latency(
                u,
                server,
                allocation.offload_ratios[i],
                allocation.server_frequencies[i],
                rates[i],
            )
        })
        .collect()
}

/// Sum latency over all users.
pub fn system_total_latency<T: Scalar>(
    users: &[UserProfile<T>],
    server: &ServerProfile<T>,
    allocation: &AllocationState<T>,
    rates: &[T],
) -> Result<T, LatencyError> {
    Ok(per_user_latencies(users, server, allocation, rates)?.into_iter().sum())
}

/// Hessian of one user's latency in `(beta, f)`.
///
/// The `f`-diagonal is `2 K beta / f^3` with `K` the server workload. The
/// mixed entry `-K / f^2` is nonzero, so the determinant is `-K^2 / f^4 < 0`:
/// the latency is convex in each block separately but not jointly.
pub fn latency_hessian<T: Scalar>(user: &UserProfile<T>, server: &ServerProfile<T>, beta: T, f_nm: T) -> [[T; 2]; 2] {
    let k = server.workload(user);
    let cross = -k / (f_nm * f_nm);
    [[T::zero(), cross], [cross, T::of(2.0) * k * beta / (f_nm * f_nm * f_nm)]]
}

fn check_rate<T: Scalar>(rate: T) -> Result<(), LatencyError> {
    if rate > T::zero() {
        Ok(())
    } else {
        Err(LatencyError::ZeroRate(rate.as_f64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_user() -> UserProfile<f64> {
        UserProfile {
            cycles_per_bit: 1.0,
            data_size: 1.0,
            minibatch_ratio: 1.0,
            local_iterations: 1,
            local_cpu_frequency: 1.0,
            model_size_factor: 1.0,
        }
    }

    fn unit_server() -> ServerProfile<f64> {
        ServerProfile {
            cycles_per_bit: 1.0,
            minibatch_ratio: 1.0,
            server_iterations: 1,
            max_total_frequency: 1.0,
        }
    }

    fn table_user() -> UserProfile<f64> {
        UserProfile {
            cycles_per_bit: 1000.0,
            data_size: 16000.0,
            minibatch_ratio: 0.5,
            local_iterations: 10,
            local_cpu_frequency: 1e9,
            model_size_factor: 0.1,
        }
    }

    fn table_server() -> ServerProfile<f64> {
        ServerProfile {
            cycles_per_bit: 1000.0,
            minibatch_ratio: 0.5,
            server_iterations: 10,
            max_total_frequency: 1e10,
        }
    }

    #[test]
    fn local_latency_examples() {
        assert_eq!(local_latency(&unit_user()), 1.0);
        let mut u = unit_user();
        u.local_cpu_frequency = 2.0;
        assert_eq!(local_latency(&u), 0.5);
        assert!((local_latency(&table_user()) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn upload_latency_examples() {
        assert_eq!(upload_latency(&unit_user(), 1.0).unwrap(), 1.0);
        assert!((upload_latency(&table_user(), 1.6e6).unwrap() - 1e-3).abs() < 1e-15);
        assert_eq!(upload_latency(&table_user(), f64::INFINITY).unwrap(), 0.0);
        assert!(matches!(upload_latency(&unit_user(), 0.0), Err(LatencyError::ZeroRate(_))));
    }

    #[test]
    fn offload_transfer_examples() {
        assert_eq!(offload_transfer_latency(&unit_user(), 1.0).unwrap(), 1.0);
        let t = offload_transfer_latency(&table_user(), 1.87e7).unwrap();
        assert!((t - 16000.0 / 1.87e7).abs() < 1e-18);
        assert!((t - 8.556e-4).abs() < 1e-6);
        let mut scaled = table_user();
        scaled.data_size *= 4.0;
        assert_eq!(offload_transfer_latency(&scaled, 4.0 * 1.87e7).unwrap(), t);
        assert!(offload_transfer_latency(&unit_user(), -1.0).is_err());
    }

    #[test]
    fn server_exec_examples() {
        assert_eq!(server_exec_latency(&unit_user(), &unit_server(), 1.0).unwrap(), 1.0);
        assert_eq!(server_exec_latency(&unit_user(), &unit_server(), 2.0).unwrap(), 0.5);
        let t = server_exec_latency(&table_user(), &table_server(), 1e10).unwrap();
        assert!((t - 8e-3).abs() < 1e-17);
        assert!(matches!(
            server_exec_latency(&unit_user(), &unit_server(), 0.0),
            Err(LatencyError::ZeroFrequency(_))
        ));
    }

    #[test]
    fn user_total_branches() {
        let (u, s) = (table_user(), table_server());
        let rate = 2e7;
        let local = local_latency(&u) + upload_latency(&u, rate).unwrap();
        let off = offload_transfer_latency(&u, rate).unwrap() + server_exec_latency(&u, &s, 3e9).unwrap();
        assert_eq!(user_total_latency(&u, &s, 0.0, 0.0, rate).unwrap(), local);
        assert_eq!(user_total_latency(&u, &s, 1.0, 3e9, rate).unwrap(), off);
        assert!(matches!(
            user_total_latency(&u, &s, 1.5, 3e9, rate),
            Err(LatencyError::InvalidOffloadRatio(_))
        ));
        assert!(user_total_latency(&u, &s, 0.5, 0.0, rate).is_err());

        // Both branches equal to 2 s.
        let mut eq = unit_user();
        eq.model_size_factor = 1.0;
        let v = user_total_latency(&eq, &unit_server(), 0.5, 1.0, 1.0).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn system_total_is_sum() {
        let (u, s) = (table_user(), table_server());
        let alloc = AllocationState {
            offload_ratios: vec![0.3],
            server_frequencies: vec![4e9],
        };
        let single = user_total_latency(&u, &s, 0.3, 4e9, 1e7).unwrap();
        assert_eq!(system_total_latency(&[u], &s, &alloc, &[1e7]).unwrap(), single);

        let users = vec![u; 4];
        let alloc4 = AllocationState {
            offload_ratios: vec![0.3; 4],
            server_frequencies: vec![4e9; 4],
        };
        let total = system_total_latency(&users, &s, &alloc4, &[1e7; 4]).unwrap();
        assert!((total - 4.0 * single).abs() < 1e-15);

        let users3 = vec![
            table_user(),
            UserProfile { data_size: 9000.0, local_cpu_frequency: 8.5e8, ..table_user() },
            UserProfile { data_size: 4100.0, ..table_user() },
        ];
        let alloc3 = AllocationState {
            offload_ratios: vec![0.0, 0.4, 1.0],
            server_frequencies: vec![0.0, 3e9, 6e9],
        };
        let rates = [1.1e7, 2.3e7, 1.7e7];
        let mut oracle = 0.0;
        for i in 0..3 {
            let u = &users3[i];
            let b = alloc3.offload_ratios[i];
            let local = u.cycles_per_bit * u.data_size * u.minibatch_ratio * 10.0 / u.local_cpu_frequency
                + 0.1 * u.data_size / rates[i];
            let offload = if b > 0.0 {
                u.data_size / rates[i] + 1000.0 * u.data_size * 0.5 * 10.0 / alloc3.server_frequencies[i]
            } else {
                0.0
            };
            oracle += (1.0 - b) * local + b * offload;
        }
        let got = system_total_latency(&users3, &s, &alloc3, &rates).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-14);

        assert!(matches!(
            system_total_latency(&users3, &s, &alloc3, &rates[..2]),
            Err(LatencyError::LengthMismatch(_))
        ));
    }

    #[test]
    fn hessian_f_diagonal_matches_finite_difference() {
        let (u, s) = (table_user(), table_server());
        let (beta, f, rate) = (0.6, 3e9, 1.5e7);
        let t = |f: f64| user_total_latency(&u, &s, beta, f, rate).unwrap();
        let h = 1e-3 * f;
        let fd = (t(f + h) - 2.0 * t(f) + t(f - h)) / (h * h);
        let analytic = latency_hessian(&u, &s, beta, f)[1][1];
        assert!(((fd - analytic) / analytic).abs() < 1e-4);
    }

    #[test]
    fn hessian_cross_term_is_nonzero() {
        let (u, s) = (table_user(), table_server());
        let (beta, f, rate) = (0.6, 3e9, 1.5e7);
        let t = |b: f64, f: f64| user_total_latency(&u, &s, b, f, rate).unwrap();
        let (hb, hf) = (1e-3, 1e-3 * f);
        let fd = (t(beta + hb, f + hf) - t(beta + hb, f - hf) - t(beta - hb, f + hf) + t(beta - hb, f - hf))
            / (4.0 * hb * hf);
        let analytic = latency_hessian(&u, &s, beta, f)[0][1];
        assert!(analytic < 0.0);
        assert!(((fd - analytic) / analytic).abs() < 1e-4);
    }

    #[test]
    fn profile_validation() {
        assert!(table_user().validate().is_ok());
        assert!(UserProfile { minibatch_ratio: 1.5, ..table_user() }.validate().is_err());
        assert!(UserProfile { data_size: 0.0, ..table_user() }.validate().is_err());
        assert!(table_server().validate().is_ok());
        assert!(ServerProfile { server_iterations: 0, ..table_server() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn affine_in_beta(beta in 0.05f64..0.95, f in 1e8f64..1e10, rate in 1e5f64..1e8) {
            let (u, s) = (table_user(), table_server());
            let t = |b: f64| user_total_latency(&u, &s, b, f, rate).unwrap();
            let h = 0.04;
            let second = t(beta + h) - 2.0 * t(beta) + t(beta - h);
            prop_assert!(second.abs() <= 1e-12 * t(beta).abs().max(1.0));
        }

        #[test]
        fn monotone_in_rate_and_frequency(beta in 0.01f64..1.0, f in 1e8f64..1e10, rate in 1e5f64..1e8) {
            let (u, s) = (table_user(), table_server());
            let base = user_total_latency(&u, &s, beta, f, rate).unwrap();
            prop_assert!(user_total_latency(&u, &s, beta, f, rate * 1.1).unwrap() <= base);
            prop_assert!(user_total_latency(&u, &s, beta, f * 1.1, rate).unwrap() <= base);
            prop_assert!(base >= 0.0);
        }
    }
}
