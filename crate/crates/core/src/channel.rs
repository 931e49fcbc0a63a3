//! Field-response multipath channel, zero-forcing combining and uplink rates
//! as functions of the receive-antenna positions.
//!
//! Each user reaches the base station over `L` far-field paths with fixed
//! angles of arrival. Moving an antenna only rotates the phase of every path,
//! so the channel from user `n` to antenna `m` is the sum over paths of the
//! path gain times a unit-modulus phase term evaluated at that antenna.

use crate::linalg::{dot_conj, norm_sqr, reciprocal_condition, CMatrix, Cholesky};
use crate::scalar::Scalar;
use num_complex::Complex;
use thiserror::Error;

/// Reciprocal condition number of the Gram matrix `H^H H` below which the
/// users are treated as inseparable.
pub const DEFAULT_RCOND_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("channel matrix is rank deficient (reciprocal condition {rcond:e})")]
    RankDeficientChannel { rcond: f64 },
    #[error("more users ({users}) than antennas ({antennas})")]
    TooManyUsers { users: usize, antennas: usize },
    #[error("invalid channel spec: {0}")]
    InvalidSpec(String),
}

/// Position of a receive antenna in the planar movement region (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarPosition<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> PlanarPosition<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Unpacks the interleaved `[x1, y1, x2, y2, ...]` layout used by the swarm.
    pub fn from_flat(coords: &[T]) -> Vec<Self> {
        coords.chunks_exact(2).map(|p| Self::new(p[0], p[1])).collect()
    }

    pub fn to_flat(positions: &[Self]) -> Vec<T> {
        positions.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

/// Per-user multipath description: angles of arrival and complex path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannelSpec<T> {
    pub elevation_aoas: Vec<T>,
    pub azimuth_aoas: Vec<T>,
    pub path_gains: Vec<Complex<T>>,
    /// Watts.
    pub transmit_power: T,
    /// Meters.
    pub distance_to_bs: T,
}

impl<T: Scalar> UserChannelSpec<T> {
    pub fn new(
        elevation_aoas: Vec<T>,
        azimuth_aoas: Vec<T>,
        path_gains: Vec<Complex<T>>,
        transmit_power: T,
        distance_to_bs: T,
    ) -> Result<Self, ChannelError> {
        let spec = Self {
            elevation_aoas,
            azimuth_aoas,
            path_gains,
            transmit_power,
            distance_to_bs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let l = self.path_gains.len();
        if l == 0 {
            return Err(ChannelError::InvalidSpec("at least one path required".into()));
        }
        if self.elevation_aoas.len() != l || self.azimuth_aoas.len() != l {
            return Err(ChannelError::InvalidSpec(format!(
                "path count mismatch: {} elevations, {} azimuths, {} gains",
                self.elevation_aoas.len(),
                self.azimuth_aoas.len(),
                l
            )));
        }
        if !(self.transmit_power > T::zero()) {
            return Err(ChannelError::InvalidSpec("transmit_power must be > 0".into()));
        }
        if !(self.distance_to_bs > T::zero()) {
            return Err(ChannelError::InvalidSpec("distance_to_bs must be > 0".into()));
        }
        Ok(())
    }

    pub fn path_count(&self) -> usize {
        self.path_gains.len()
    }
}

/// Path-length difference of a plane wave between `position` and the origin.
#[inline]
pub fn phase_difference<T: Scalar>(position: &PlanarPosition<T>, elevation: T, azimuth: T) -> T {
    position.x * elevation.sin() * azimuth.cos() + position.y * elevation.cos()
}

/// Unit-modulus phase terms of every path of `spec` at `position`.
pub fn field_response_vector<T: Scalar>(
    position: &PlanarPosition<T>,
    spec: &UserChannelSpec<T>,
    wavelength: T,
) -> Vec<Complex<T>> {
    let k = T::TAU() / wavelength;
    spec.elevation_aoas
        .iter()
        .zip(&spec.azimuth_aoas)
        .map(|(&el, &az)| Complex::from_polar(T::one(), k * phase_difference(position, el, az)))
        .collect()
}

/// Channel vector `F^H G` of one user across all antenna positions.
pub fn channel_vector<T: Scalar>(
    positions: &[PlanarPosition<T>],
    spec: &UserChannelSpec<T>,
    wavelength: T,
) -> Vec<Complex<T>> {
    positions
        .iter()
        .map(|p| dot_conj(&field_response_vector(p, spec, wavelength), &spec.path_gains))
        .collect()
}

/// `M x N` multiple-access channel; column `n` is user `n`'s channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix<T> {
    pub entries: CMatrix<T>,
    pub antenna_positions: Vec<PlanarPosition<T>>,
}

impl<T: Scalar> ChannelMatrix<T> {
    pub fn build(
        positions: &[PlanarPosition<T>],
        specs: &[UserChannelSpec<T>],
        wavelength: T,
    ) -> Self {
        let columns: Vec<_> = specs
            .iter()
            .map(|s| channel_vector(positions, s, wavelength))
            .collect();
        let entries = if columns.is_empty() {
            CMatrix::zeros(positions.len(), 0)
        } else {
            CMatrix::from_columns(&columns).expect("channel columns share antenna count")
        };
        Self {
            entries,
            antenna_positions: positions.to_vec(),
        }
    }

    pub fn antennas(&self) -> usize {
        self.entries.rows()
    }

    pub fn users(&self) -> usize {
        self.entries.cols()
    }
}

/// Receive combiner; column `n` is the combining vector of user `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombiningMatrix<T> {
    pub entries: CMatrix<T>,
}

impl<T: Scalar> CombiningMatrix<T> {
    pub fn column_norm_sqr(&self, n: usize) -> T {
        norm_sqr(self.entries.column(n))
    }
}

/// Zero-forcing combiner `W = H (H^H H)^{-1}`, so that `W^H H = I`.
pub fn zf_combining_matrix<T: Scalar>(
    h: &ChannelMatrix<T>,
    rcond_threshold: T,
) -> Result<CombiningMatrix<T>, ChannelError> {
    let (m, n) = (h.antennas(), h.users());
    if n > m {
        return Err(ChannelError::TooManyUsers { users: n, antennas: m });
    }
    let gram = h.entries.adjoint_mul(&h.entries);
    let chol = Cholesky::new(&gram).map_err(|_| ChannelError::RankDeficientChannel { rcond: 0.0 })?;
    let inv = chol.inverse();
    let rcond = reciprocal_condition(&gram, &inv);
    if !(rcond >= rcond_threshold) {
        return Err(ChannelError::RankDeficientChannel { rcond: rcond.as_f64() });
    }
    Ok(CombiningMatrix {
        entries: h.entries.mul(&inv),
    })
}

/// Uplink rate of user `n` under zero-forcing: interference is nulled, so
/// only the noise amplification `||w_n||^2` enters the SNR.
pub fn per_user_rate<T: Scalar>(
    w: &CombiningMatrix<T>,
    user_index: usize,
    transmit_power: T,
    noise_power: T,
    bandwidth: T,
) -> T {
    let snr = transmit_power / (w.column_norm_sqr(user_index) * noise_power);
    bandwidth * snr.ln_1p() / T::LN_2()
}

/// Uplink rate from the general SINR expression with an arbitrary combiner.
/// Interference seen by user `n` is `sum_{k != n} |w_n^H h_k|^2 p_k`.
pub fn general_sinr_rate<T: Scalar>(
    h: &ChannelMatrix<T>,
    w: &CombiningMatrix<T>,
    user_index: usize,
    transmit_powers: &[T],
    noise_power: T,
    bandwidth: T,
) -> T {
    let wn = w.entries.column(user_index);
    let signal = dot_conj(wn, h.entries.column(user_index)).norm_sqr() * transmit_powers[user_index];
    let interference: T = (0..h.users())
        .filter(|&k| k != user_index)
        .map(|k| dot_conj(wn, h.entries.column(k)).norm_sqr() * transmit_powers[k])
        .sum();
    let sinr = signal / (interference + norm_sqr(wn) * noise_power);
    bandwidth * sinr.ln_1p() / T::LN_2()
}

/// Physical-layer constants needed to turn antenna positions into rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T> {
    /// Meters.
    pub wavelength: T,
    /// Watts (noise spectral density times bandwidth).
    pub noise_power: T,
    /// Hz.
    pub bandwidth: T,
    pub rcond_threshold: T,
}

impl<T: Scalar> LinkBudget<T> {
    /// Per-user ZF uplink rates in bits/s at the given antenna positions.
    pub fn rates(
        &self,
        positions: &[PlanarPosition<T>],
        specs: &[UserChannelSpec<T>],
    ) -> Result<Vec<T>, ChannelError> {
        let h = ChannelMatrix::build(positions, specs, self.wavelength);
        let w = zf_combining_matrix(&h, self.rcond_threshold)?;
        Ok(specs
            .iter()
            .enumerate()
            .map(|(n, s)| per_user_rate(&w, n, s.transmit_power, self.noise_power, self.bandwidth))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_spec(rng: &mut ChaCha8Rng, paths: usize) -> UserChannelSpec<f64> {
        let angles = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..paths).map(|_| rng.random_range(-FRAC_PI_2..=FRAC_PI_2)).collect()
        };
        let el = angles(rng);
        let az = angles(rng);
        let g = (0..paths)
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        UserChannelSpec::new(el, az, g, 1.0, 50.0).unwrap()
    }

    fn random_positions(rng: &mut ChaCha8Rng, m: usize) -> Vec<PlanarPosition<f64>> {
        (0..m)
            .map(|_| PlanarPosition::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)))
            .collect()
    }

    #[test]
    fn phase_difference_reference_cases() {
        let origin = PlanarPosition::new(0.0, 0.0);
        assert_eq!(phase_difference(&origin, 0.3, -1.1), 0.0);
        let p = PlanarPosition::new(0.07, -0.02);
        assert!((phase_difference(&p, FRAC_PI_2, 0.0) - 0.07).abs() < 1e-15);
        assert_eq!(phase_difference(&p, 0.0, 0.9), -0.02);
    }

    #[test]
    fn field_response_examples() {
        let spec = UserChannelSpec::new(vec![FRAC_PI_2], vec![0.0], vec![Complex::new(1.0, 0.0)], 1.0, 1.0)
            .unwrap();
        let lambda = 0.1;
        let at_origin = field_response_vector(&PlanarPosition::new(0.0, 0.0), &spec, lambda);
        assert_eq!(at_origin, vec![Complex::new(1.0, 0.0)]);
        let half = field_response_vector(&PlanarPosition::new(lambda / 2.0, 0.0), &spec, lambda);
        assert!((half[0] - Complex::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn field_response_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = 0.1;
        for _ in 0..50 {
            let spec = random_spec(&mut rng, 4);
            let p = random_positions(&mut rng, 1)[0];
            let f = field_response_vector(&p, &spec, lambda);
            for ((fl, th), ph) in f.iter().zip(&spec.elevation_aoas).zip(&spec.azimuth_aoas) {
                let rho = p.x * th.sin() * ph.cos() + p.y * th.cos();
                let arg = 2.0 * PI * rho / lambda;
                assert!((fl.re - arg.cos()).abs() < 1e-12);
                assert!((fl.im - arg.sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_vector_examples() {
        let lambda = 0.1;
        let spec = UserChannelSpec::new(vec![0.4], vec![-0.7], vec![Complex::new(1.0, 0.0)], 1.0, 1.0).unwrap();
        let origin = vec![PlanarPosition::new(0.0, 0.0); 3];
        assert_eq!(channel_vector(&origin, &spec, lambda), vec![Complex::new(1.0, 0.0); 3]);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut zero = random_spec(&mut rng, 2);
        zero.path_gains = vec![Complex::new(0.0, 0.0); 2];
        let pos = random_positions(&mut rng, 2);
        assert!(channel_vector(&pos, &zero, lambda).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn channel_vector_matches_naive_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lambda = 0.1;
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 2);
            let pos = random_positions(&mut rng, 2);
            let h = channel_vector(&pos, &spec, lambda);
            // F is L x M; h = F^H G.
            for m in 0..2 {
                let mut acc = Complex::new(0.0, 0.0);
                for l in 0..2 {
                    let rho = pos[m].x * spec.elevation_aoas[l].sin() * spec.azimuth_aoas[l].cos()
                        + pos[m].y * spec.elevation_aoas[l].cos();
                    let f_lm = Complex::from_polar(1.0, 2.0 * PI / lambda * rho);
                    acc += f_lm.conj() * spec.path_gains[l];
                }
                assert!((acc - h[m]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zf_identity_and_single_user_cases() {
        let spec_cols = CMatrix::<f64>::identity(3);
        let h = ChannelMatrix {
            entries: spec_cols,
            antenna_positions: vec![PlanarPosition::default(); 3],
        };
        let w = zf_combining_matrix(&h, 1e-10).unwrap();
        assert!(w.entries.max_abs_deviation_from_identity() < 1e-15);

        let col = vec![Complex::new(0.3, -0.4), Complex::new(1.2, 0.5)];
        let h1 = ChannelMatrix {
            entries: CMatrix::from_columns(std::slice::from_ref(&col)).unwrap(),
            antenna_positions: vec![PlanarPosition::default(); 2],
        };
        let w1 = zf_combining_matrix(&h1, 1e-10).unwrap();
        let n2 = norm_sqr(&col);
        for (wi, hi) in w1.entries.column(0).iter().zip(&col) {
            assert!((wi - hi / n2).norm() < 1e-14);
        }
    }

    #[test]
    fn zf_residual_on_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let h = CMatrix::from_fn(4, 3, |_, _| {
                Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let ch = ChannelMatrix {
                entries: h,
                antenna_positions: vec![PlanarPosition::default(); 4],
            };
            let w = zf_combining_matrix(&ch, 1e-10).unwrap();
            let r = w.entries.adjoint_mul(&ch.entries);
            assert!(r.max_abs_deviation_from_identity() <= 1e-9);
        }
    }

    #[test]
    fn co_located_antennas_are_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let specs: Vec<_> = (0..3).map(|_| random_spec(&mut rng, 3)).collect();
        let pos = vec![PlanarPosition::new(0.02, -0.03); 4];
        let h = ChannelMatrix::build(&pos, &specs, 0.1);
        assert!(matches!(
            zf_combining_matrix(&h, 1e-10),
            Err(ChannelError::RankDeficientChannel { .. })
        ));
    }

    #[test]
    fn more_users_than_antennas_rejected() {
        let h = ChannelMatrix {
            entries: CMatrix::<f64>::zeros(2, 3),
            antenna_positions: vec![PlanarPosition::default(); 2],
        };
        assert!(matches!(
            zf_combining_matrix(&h, 1e-10),
            Err(ChannelError::TooManyUsers { .. })
        ));
    }

    #[test]
    fn rate_examples() {
        let h = ChannelMatrix {
            entries: CMatrix::<f64>::identity(1),
            antenna_positions: vec![PlanarPosition::default()],
        };
        let w = zf_combining_matrix(&h, 1e-10).unwrap();
        assert!((per_user_rate(&w, 0, 2.0, 2.0, 1.0) - 1.0).abs() < 1e-15);
        assert!(per_user_rate(&w, 0, 1e-300, 1.0, 1.0) < 1e-290);
    }

    #[test]
    fn zf_rate_equals_general_sinr_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let specs: Vec<_> = (0..3).map(|_| random_spec(&mut rng, 3)).collect();
            let pos = random_positions(&mut rng, 4);
            let h = ChannelMatrix::build(&pos, &specs, 0.1);
            let w = zf_combining_matrix(&h, 1e-10).unwrap();
            let powers = [1.0, 0.5, 2.0];
            for n in 0..3 {
                let a = per_user_rate(&w, n, powers[n], 1e-3, 1e6);
                let b = general_sinr_rate(&h, &w, n, &powers, 1e-3, 1e6);
                assert!(((a - b) / b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_path_magnitude_is_position_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 1);
            let pos = random_positions(&mut rng, 4);
            let shift = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            let shifted: Vec<_> = pos
                .iter()
                .map(|p| PlanarPosition::new(p.x + shift.0, p.y + shift.1))
                .collect();
            let g = spec.path_gains[0].norm();
            for z in channel_vector(&pos, &spec, 0.1).iter().chain(&channel_vector(&shifted, &spec, 0.1)) {
                assert!((z.norm() - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generic_over_f32() {
        let spec = UserChannelSpec::<f32>::new(
            vec![0.3, -0.8],
            vec![1.0, 0.2],
            vec![Complex::new(0.5, 0.1), Complex::new(-0.2, 0.7)],
            1.0,
            30.0,
        )
        .unwrap();
        let f = field_response_vector(&PlanarPosition::new(0.05f32, -0.1), &spec, 0.1);
        assert!(f.iter().all(|z| (z.norm() - 1.0).abs() < 1e-6));
    }

    proptest! {
        #[test]
        fn field_response_has_unit_modulus(
            x in -1.0f64..1.0, y in -1.0f64..1.0,
            el in -FRAC_PI_2..FRAC_PI_2, az in -FRAC_PI_2..FRAC_PI_2,
        ) {
            let spec = UserChannelSpec::new(vec![el], vec![az], vec![Complex::new(1.0, 0.0)], 1.0, 1.0).unwrap();
            let f = field_response_vector(&PlanarPosition::new(x, y), &spec, 0.1);
            prop_assert!((f[0].norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn channel_build_is_deterministic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let specs: Vec<_> = (0..2).map(|_| random_spec(&mut rng, 3)).collect();
            let pos = random_positions(&mut rng, 3);
            let a = ChannelMatrix::build(&pos, &specs, 0.1);
            let b = ChannelMatrix::build(&pos, &specs, 0.1);
            prop_assert_eq!(a, b);
        }
    }
}
