//! MMSE channel estimation under shared or orthogonal uplink pilots.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, condition_number, psd_factor, trace, trace_product, CMatrix, CVector, C64,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotMode {
    /// Every UE sends the same pilot.
    SharedSinglePilot,
    Orthogonal,
}

impl PilotMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PilotMode::SharedSinglePilot => "shared_single_pilot",
            PilotMode::Orthogonal => "orthogonal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotAssignment {
    pub mode: PilotMode,
    pub tau_p: usize,
    pub rho_ul_mw: f64,
    pub sigma_ul2_mw: f64,
}

impl PilotAssignment {
    pub fn validate(&self, users: usize) -> Result<()> {
        if self.tau_p == 0 {
            return Err(Error::Config("tau_p must be at least 1".into()));
        }
        if self.mode == PilotMode::Orthogonal && self.tau_p < users {
            return Err(Error::Config(format!(
                "orthogonal pilots need tau_p >= K, got tau_p = {} for K = {users}",
                self.tau_p
            )));
        }
        // An infinite pilot power is allowed and means noise-free training.
        if !(self.rho_ul_mw > 0.0) || !(self.sigma_ul2_mw >= 0.0) {
            return Err(Error::Config(
                "uplink power must be positive and noise nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// `σ_ul² / ρ_ul`, the effective noise level of the despread observation.
    pub fn noise_ratio(&self) -> f64 {
        self.sigma_ul2_mw / self.rho_ul_mw
    }
}

/// Second-order statistics of the MMSE estimates.
#[derive(Clone, Debug)]
pub struct EstimationStatistics {
    pub mode: PilotMode,
    pub r: Vec<CMatrix>,
    /// One matrix in shared mode, one per UE otherwise.
    pub q: Vec<CMatrix>,
    q_chol: Vec<Cholesky<C64, Dyn>>,
    /// `W_k = R_k Q^{-1}`, so that `ĝ_k = W_k y`.
    pub estimator: Vec<CMatrix>,
    pub phi: Vec<CMatrix>,
    pub error_cov: Vec<CMatrix>,
    /// `U(i, k) = E{ĝ_k^H ĝ_i}`, real part only.
    pub u: DMatrix<f64>,
    /// Largest discarded imaginary part of `U`.
    pub u_imag_max: f64,
    pub noise_ratio: f64,
}

impl EstimationStatistics {
    pub fn new(correlations: &[CMatrix], pilots: &PilotAssignment) -> Result<Self> {
        let k = correlations.len();
        if k == 0 {
            return Err(Error::Config("need at least one UE".into()));
        }
        pilots.validate(k)?;
        let m = correlations[0].nrows();
        if correlations
            .iter()
            .any(|r| r.nrows() != m || r.ncols() != m)
        {
            return Err(Error::Config(
                "correlation matrices must all be M x M".into(),
            ));
        }
        let noise = pilots.noise_ratio();
        let eye = CMatrix::identity(m, m) * C64::new(noise, 0.0);

        let q: Vec<CMatrix> = match pilots.mode {
            PilotMode::SharedSinglePilot => {
                let sum = correlations.iter().fold(eye.clone(), |acc, r| acc + r);
                vec![sum]
            }
            PilotMode::Orthogonal => correlations.iter().map(|r| r + &eye).collect(),
        };
        let q_chol = q
            .iter()
            .map(cholesky)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Numerical(format!("pilot covariance Q: {e}")))?;

        let mut estimator = Vec::with_capacity(k);
        let mut phi = Vec::with_capacity(k);
        let mut error_cov = Vec::with_capacity(k);
        for (idx, r) in correlations.iter().enumerate() {
            let chol = &q_chol[if q.len() == 1 { 0 } else { idx }];
            // Q^{-1} R_k is the adjoint of W_k since both factors are Hermitian.
            let q_inv_r = chol.solve(r);
            let w = q_inv_r.adjoint();
            let p = r * &q_inv_r;
            error_cov.push(r - &p);
            phi.push(p);
            estimator.push(w);
        }

        let mut uc = DMatrix::<C64>::zeros(k, k);
        match pilots.mode {
            PilotMode::SharedSinglePilot => {
                for i in 0..k {
                    for kk in i..k {
                        // tr(R_i Q^{-1} R_k) = tr(W_i R_k)
                        let v = trace_product(&estimator[i], &correlations[kk]);
                        uc[(i, kk)] = v;
                        uc[(kk, i)] = v.conj();
                    }
                }
            }
            PilotMode::Orthogonal => {
                for i in 0..k {
                    uc[(i, i)] = trace(&phi[i]);
                }
            }
        }
        let scale = uc.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let u_imag_max = uc.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        if scale > 0.0 && u_imag_max >= 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "estimate Gram matrix has imaginary part {u_imag_max:e} relative to {scale:e}"
            )));
        }
        let u = uc.map(|v| v.re);

        Ok(EstimationStatistics {
            mode: pilots.mode,
            r: correlations.to_vec(),
            q,
            q_chol,
            estimator,
            phi,
            error_cov,
            u,
            u_imag_max,
            noise_ratio: noise,
        })
    }

    pub fn users(&self) -> usize {
        self.r.len()
    }

    pub fn antennas(&self) -> usize {
        self.r[0].nrows()
    }

    pub fn trace_phi(&self, k: usize) -> f64 {
        trace(&self.phi[k]).re
    }

    /// `Q^{-1} B` using the stored factor (shared mode, or UE `k` otherwise).
    pub fn q_solve(&self, k: usize, b: &CMatrix) -> CMatrix {
        let idx = if self.q.len() == 1 { 0 } else { k };
        self.q_chol[idx].solve(b)
    }

    /// `E{ĝ_i ĝ_j^H}`.
    pub fn cross_covariance(&self, i: usize, j: usize) -> CMatrix {
        match self.mode {
            PilotMode::SharedSinglePilot => &self.estimator[i] * &self.r[j],
            PilotMode::Orthogonal => {
                if i == j {
                    self.phi[i].clone()
                } else {
                    let m = self.antennas();
                    CMatrix::zeros(m, m)
                }
            }
        }
    }

    /// Weighted estimate covariance `E{ĝ_a ĝ_a^H}` for `ĝ_a = Σ a_i ĝ_i`.
    pub fn weighted_covariance(&self, a: &[f64]) -> CMatrix {
        let m = self.antennas();
        match self.mode {
            PilotMode::SharedSinglePilot => {
                let s = self.weighted_correlation(a);
                let q_inv_s = self.q_solve(0, &s);
                &s * q_inv_s
            }
            PilotMode::Orthogonal => a
                .iter()
                .zip(&self.phi)
                .fold(CMatrix::zeros(m, m), |acc, (&ai, p)| {
                    acc + p * C64::new(ai * ai, 0.0)
                }),
        }
    }

    /// `Σ a_i R_i`.
    pub fn weighted_correlation(&self, a: &[f64]) -> CMatrix {
        let m = self.antennas();
        a.iter()
            .zip(&self.r)
            .fold(CMatrix::zeros(m, m), |acc, (&ai, r)| {
                acc + r * C64::new(ai, 0.0)
            })
    }
}

/// One realization of channels, estimates and estimation errors.
#[derive(Clone, Debug)]
pub struct ChannelSample {
    pub g: Vec<CVector>,
    pub g_hat: Vec<CVector>,
    pub g_tilde: Vec<CVector>,
}

/// Draws channel realizations with precomputed square roots of `R_k`.
#[derive(Clone, Debug)]
pub struct ChannelSampler {
    factors: Vec<CMatrix>,
    noise_std: f64,
}

fn complex_gaussian<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> CVector {
    let s = std * std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * s, im * s)
    })
}

impl ChannelSampler {
    pub fn new(stats: &EstimationStatistics) -> Result<Self> {
        let factors = stats.r.iter().map(psd_factor).collect::<Result<Vec<_>>>()?;
        Ok(ChannelSampler {
            factors,
            noise_std: stats.noise_ratio.sqrt(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        stats: &EstimationStatistics,
        rng: &mut R,
    ) -> ChannelSample {
        let m = stats.antennas();
        let g: Vec<CVector> = self
            .factors
            .iter()
            .map(|f| f * complex_gaussian(m, 1.0, rng))
            .collect();
        let g_hat: Vec<CVector> = match stats.mode {
            PilotMode::SharedSinglePilot => {
                let mut y = complex_gaussian(m, self.noise_std, rng);
                for gi in &g {
                    y += gi;
                }
                stats.estimator.iter().map(|w| w * &y).collect()
            }
            PilotMode::Orthogonal => g
                .iter()
                .zip(&stats.estimator)
                .map(|(gi, w)| w * (gi + complex_gaussian(m, self.noise_std, rng)))
                .collect(),
        };
        let g_tilde: Vec<CVector> = g.iter().zip(&g_hat).map(|(a, b)| a - b).collect();
        // Rebuild g from its parts so the decomposition holds bit for bit.
        let g = g_hat.iter().zip(&g_tilde).map(|(a, b)| a + b).collect();
        ChannelSample { g, g_hat, g_tilde }
    }
}

pub fn sample_channels<R: Rng + ?Sized>(
    stats: &EstimationStatistics,
    rng: &mut R,
) -> Result<ChannelSample> {
    Ok(ChannelSampler::new(stats)?.sample(stats, rng))
}

/// Correlations above this condition number are not inverted; the round-off
/// of `R_i^{-1}` would swamp the residual.
pub const DEPENDENCE_MAX_CONDITION: f64 = 1e5;

#[derive(Clone, Debug, PartialEq)]
pub struct DependenceReport {
    /// `max ‖ĝ_k − R_k R_i^{-1} ĝ_i‖ / ‖ĝ_k‖` over the checked pairs.
    pub residual: f64,
    pub checked_pairs: usize,
    /// `(i, k)` pairs skipped because `R_i` was ill-conditioned.
    pub skipped_pairs: Vec<(usize, usize)>,
}

/// Checks that shared-pilot estimates are linear images of each other.
pub fn verify_estimate_dependence(
    sample: &ChannelSample,
    stats: &EstimationStatistics,
) -> Result<DependenceReport> {
    if stats.mode != PilotMode::SharedSinglePilot {
        return Err(Error::Domain(
            "estimate dependence only holds with a shared pilot".into(),
        ));
    }
    let k = stats.users();
    let mut residual = 0.0_f64;
    let mut checked = 0;
    let mut skipped = Vec::new();
    for i in 0..k {
        let inverse = if condition_number(&stats.r[i]) < DEPENDENCE_MAX_CONDITION {
            stats.r[i].clone().try_inverse()
        } else {
            None
        };
        let Some(r_inv) = inverse else {
            skipped.extend((0..k).filter(|&kk| kk != i).map(|kk| (i, kk)));
            continue;
        };
        let mapped = &r_inv * &sample.g_hat[i];
        for kk in 0..k {
            if kk == i {
                continue;
            }
            let predicted = &stats.r[kk] * &mapped;
            let norm = sample.g_hat[kk].norm();
            let diff = (&sample.g_hat[kk] - predicted).norm();
            residual = residual.max(if norm > 0.0 { diff / norm } else { diff });
            checked += 1;
        }
    }
    Ok(DependenceReport {
        residual,
        checked_pairs: checked,
        skipped_pairs: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{correlation_matrix, CorrelationModel, ScatteringParams};
    use crate::linalg::{eigenvalue_range, hermitian_defect, relative_frobenius};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scattering_set(k: usize, m: usize, seed: u64) -> Vec<CMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|i| {
                correlation_matrix(
                    1.0 + 0.3 * i as f64,
                    -0.8 + 0.5 * i as f64,
                    m,
                    CorrelationModel::GaussianScattering,
                    &ScatteringParams::default(),
                    &mut rng,
                )
                .unwrap()
                .matrix
            })
            .collect()
    }

    fn pilots(mode: PilotMode, noise: f64) -> PilotAssignment {
        PilotAssignment {
            mode,
            tau_p: 20,
            rho_ul_mw: 1.0,
            sigma_ul2_mw: noise,
        }
    }

    #[test]
    fn single_ue_modes_coincide() {
        let r = scattering_set(1, 12, 1);
        let a = EstimationStatistics::new(&r, &pilots(PilotMode::SharedSinglePilot, 0.5)).unwrap();
        let b = EstimationStatistics::new(&r, &pilots(PilotMode::Orthogonal, 0.5)).unwrap();
        assert!(relative_frobenius(&a.phi[0], &b.phi[0]) < 1e-12);
        assert!((a.u[(0, 0)] - b.u[(0, 0)]).abs() < 1e-12 * b.u[(0, 0)]);
    }

    #[test]
    fn orthogonal_scaled_identity() {
        let beta = 2.0;
        let noise = 0.5;
        let r = vec![CMatrix::identity(6, 6) * C64::new(beta, 0.0); 3];
        let s = EstimationStatistics::new(&r, &pilots(PilotMode::Orthogonal, noise)).unwrap();
        let expect = CMatrix::identity(6, 6) * C64::new(beta * beta / (beta + noise), 0.0);
        for p in &s.phi {
            assert!(relative_frobenius(p, &expect) < 1e-14);
        }
        for i in 0..3 {
            for k in 0..3 {
                let want = if i == k {
                    6.0 * beta * beta / (beta + noise)
                } else {
                    0.0
                };
                assert!((s.u[(i, k)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shared_gram_symmetric_psd() {
        let r = scattering_set(5, 16, 2);
        let s = EstimationStatistics::new(&r, &pilots(PilotMode::SharedSinglePilot, 0.3)).unwrap();
        let max = s.u.amax();
        assert!(s.u_imag_max < 1e-8 * max);
        for i in 0..5 {
            for k in 0..5 {
                assert!((s.u[(i, k)] - s.u[(k, i)]).abs() <= 1e-12 * max);
            }
            assert!((s.u[(i, i)] - s.trace_phi(i)).abs() <= 1e-10 * max);
        }
        let eig = s.u.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-10 * max);
    }

    #[test]
    fn covariances_are_psd_and_bounded() {
        let r = scattering_set(4, 16, 3);
        for mode in [PilotMode::SharedSinglePilot, PilotMode::Orthogonal] {
            let s = EstimationStatistics::new(&r, &pilots(mode, 0.2)).unwrap();
            for k in 0..4 {
                let tr_r = trace(&r[k]).re;
                assert!(hermitian_defect(&s.phi[k]) < 1e-10 * tr_r);
                assert!(eigenvalue_range(&s.phi[k]).0 >= -1e-10 * tr_r);
                assert!(eigenvalue_range(&s.error_cov[k]).0 >= -1e-10 * tr_r);
                assert!(s.trace_phi(k) <= tr_r);
            }
        }
    }

    #[test]
    fn estimation_improves_with_pilot_power() {
        let r = scattering_set(3, 12, 4);
        let mut prev = [0.0; 3];
        for rho in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let p = PilotAssignment {
                rho_ul_mw: rho,
                ..pilots(PilotMode::SharedSinglePilot, 1.0)
            };
            let s = EstimationStatistics::new(&r, &p).unwrap();
            for k in 0..3 {
                let t = s.trace_phi(k);
                assert!(t >= prev[k] * (1.0 - 1e-12));
                prev[k] = t;
            }
        }
    }

    #[test]
    fn contamination_never_helps() {
        let r = scattering_set(4, 16, 5);
        let sh = EstimationStatistics::new(&r, &pilots(PilotMode::SharedSinglePilot, 0.4)).unwrap();
        let or = EstimationStatistics::new(&r, &pilots(PilotMode::Orthogonal, 0.4)).unwrap();
        for k in 0..4 {
            assert!(sh.trace_phi(k) <= or.trace_phi(k) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn noise_free_single_ue_recovers_channel() {
        let r = vec![CMatrix::identity(8, 8) * C64::new(3.0, 0.0)];
        let p = PilotAssignment {
            rho_ul_mw: f64::INFINITY,
            ..pilots(PilotMode::SharedSinglePilot, 1.0)
        };
        let s = EstimationStatistics::new(&r, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = sample_channels(&s, &mut rng).unwrap();
        assert!((&x.g[0] - &x.g_hat[0]).norm() <= 1e-12 * x.g[0].norm());
    }

    #[test]
    fn sample_decomposes_exactly() {
        let r = scattering_set(3, 8, 7);
        let s = EstimationStatistics::new(&r, &pilots(PilotMode::SharedSinglePilot, 0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = sample_channels(&s, &mut rng).unwrap();
        for k in 0..3 {
            assert_eq!(&x.g_hat[k] + &x.g_tilde[k], x.g[k]);
        }
    }

    #[test]
    fn dependence_identity_holds() {
        let r = scattering_set(4, 8, 9);
        let s = EstimationStatistics::new(&r, &pilots(PilotMode::SharedSinglePilot, 0.3)).unwrap();
        let sampler = ChannelSampler::new(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let x = sampler.sample(&s, &mut rng);
            let rep = verify_estimate_dependence(&x, &s).unwrap();
            assert!(rep.residual < 1e-8, "residual {}", rep.residual);
        }
    }

    #[test]
    fn dependence_identical_correlations() {
        let r = scattering_set(1, 8, 11);
        let r = vec![r[0].clone(), r[0].clone()];
        let s = EstimationStatistics::new(&r, &pilots(PilotMode::SharedSinglePilot, 0.3)).unwrap();
        let x = sample_channels(&s, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        assert_eq!(x.g_hat[0], x.g_hat[1]);
    }

    #[test]
    fn dependence_refuses_orthogonal() {
        let r = scattering_set(2, 8, 13);
        let s = EstimationStatistics::new(&r, &pilots(PilotMode::Orthogonal, 0.3)).unwrap();
        let x = sample_channels(&s, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        assert!(verify_estimate_dependence(&x, &s).is_err());
    }

    #[test]
    fn orthogonal_needs_enough_pilots() {
        let r = scattering_set(3, 8, 15);
        let p = PilotAssignment {
            tau_p: 2,
            ..pilots(PilotMode::Orthogonal, 0.3)
        };
        assert!(EstimationStatistics::new(&r, &p).is_err());
    }
}
