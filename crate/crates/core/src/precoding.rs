//! MR private precoders, the statistics-weighted common precoder, and the
//! closed-form expectations both of them need.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chanstat::{EstimationStatistics, PilotMode};
use crate::convex::{self, Constraint, Program, SolveStatus, SolverOptions, SolverReport};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, condition_number, trace_product, CVector, C64};

/// `w_k = ĝ_k / √tr(Φ_k)`.
pub fn mr_private_precoder(g_hat: &CVector, trace_phi: f64, ue: usize) -> Result<CVector> {
    if !(trace_phi > 0.0) {
        return Err(Error::DegenerateUe {
            ue,
            reason: format!("estimate has zero energy (tr Φ = {trace_phi:e})"),
        });
    }
    Ok(g_hat / C64::new(trace_phi.sqrt(), 0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrivateExpectations {
    /// `a_{p,k} = |E{g_k^H w_k}|² = tr(Φ_k)`.
    pub a_p: Vec<f64>,
    /// `[k, i] = E{|g_k^H w_i|²}`.
    pub second_moment: DMatrix<f64>,
}

pub fn private_expectations(stats: &EstimationStatistics) -> Result<PrivateExpectations> {
    let k = stats.users();
    let tr: Vec<f64> = (0..k).map(|i| stats.trace_phi(i)).collect();
    for (ue, &t) in tr.iter().enumerate() {
        if !(t > 0.0) {
            return Err(Error::DegenerateUe {
                ue,
                reason: format!("estimate has zero energy (tr Φ = {t:e})"),
            });
        }
    }
    let second_moment = DMatrix::from_fn(k, k, |kk, i| {
        let cross = trace_product(&stats.r[kk], &stats.phi[i]).re;
        let m = stats.u[(i, kk)];
        (cross + m * m) / tr[i]
    });
    Ok(PrivateExpectations {
        a_p: tr,
        second_moment,
    })
}

/// Common-precoder weights `a` with `aᵀUa = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonWeights {
    pub a: Vec<f64>,
    /// `min_k aᵀU(:,k)` at the returned weights.
    pub t_star: f64,
    /// `Ω = 1/√(aᵀUa)`, which is 1 up to round-off.
    pub normalization: f64,
    pub report: SolverReport,
}

/// Reduced coordinates of the weight program: with `U = V Λ Vᵀ` and
/// `a = V Λ^{-1/2} z`, the constraints are `c_kᵀz ≥ t`, `‖z‖ ≤ 1`.
/// Columns of the returned matrix are the `c_k`.
pub fn reduced_gram(u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = u.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) {
        return Err(Error::Numerical("estimate Gram matrix is zero".into()));
    }
    let keep: Vec<usize> = (0..u.nrows())
        .filter(|&j| eig.eigenvalues[j] > 1e-12 * lmax)
        .collect();
    let r = keep.len();
    let k = u.nrows();
    // `c[(j, k)] = √λ_j V(k, j)`; `to_a[(i, j)] = V(i, j)/√λ_j`.
    let c = DMatrix::from_fn(r, k, |j, kk| {
        let col = keep[j];
        eig.eigenvalues[col].sqrt() * eig.eigenvectors[(kk, col)]
    });
    let to_a = DMatrix::from_fn(k, r, |i, j| {
        let col = keep[j];
        eig.eigenvectors[(i, col)] / eig.eigenvalues[col].sqrt()
    });
    Ok((c, to_a))
}

pub fn common_weights(u: &DMatrix<f64>) -> Result<CommonWeights> {
    let k = u.nrows();
    if k == 0 || u.ncols() != k {
        return Err(Error::Config(
            "weight program needs a square nonempty Gram matrix".into(),
        ));
    }
    let scale = u.diagonal().max();
    if !(scale > 0.0) {
        return Err(Error::Numerical("estimate Gram matrix is zero".into()));
    }
    let un = u / scale;
    let (c, to_a) = reduced_gram(&un)?;
    let r = c.nrows();

    // Variables: z (r entries), then t.
    let mut p = Program::new(r + 1);
    p.objective[r] = 1.0;
    let support: Vec<usize> = (0..=r).collect();
    for kk in 0..k {
        let mut coef: Vec<f64> = c.column(kk).iter().map(|v| -v).collect();
        coef.push(1.0);
        p.push(Constraint::affine(support.clone(), coef, 0.0));
    }
    p.push(Constraint::quadratic(
        (0..r).collect(),
        vec![1.0; r],
        vec![0.0; r],
        -1.0,
    ));
    let mut x0 = vec![0.0; r + 1];
    x0[r] = -1.0;
    let opts = SolverOptions {
        tolerance: 1e-9,
        ..SolverOptions::default()
    };
    let (x, report) = convex::solve_from(&p, &x0, &opts);
    if report.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            status: report.status,
            iterations: report.iterations,
            context: "common precoder weights".into(),
        });
    }
    let z = DVector::from_column_slice(&x[..r]);
    let mut a = &to_a * z / scale.sqrt();
    let quad = a.dot(&(u * &a));
    if !(quad > 0.0) {
        return Err(Error::Numerical("common weights collapsed to zero".into()));
    }
    a /= quad.sqrt();
    let ua = u * &a;
    let t_star = ua.min();
    let normalization = 1.0 / a.dot(&ua).sqrt();
    Ok(CommonWeights {
        a: a.iter().copied().collect(),
        t_star,
        normalization,
        report,
    })
}

/// `w_c = Ω Σ a_i ĝ_i`.
pub fn common_precoder(weights: &CommonWeights, g_hat: &[CVector]) -> CVector {
    let m = g_hat[0].len();
    let sum = weights
        .a
        .iter()
        .zip(g_hat)
        .fold(CVector::zeros(m), |acc, (&a, g)| acc + g * C64::new(a, 0.0));
    sum * C64::new(weights.normalization, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommonPath {
    /// Uses `R_i^{-1}` to rewrite every estimate through `ĝ_i`.
    InverseCorrelation,
    /// Gaussian fourth-moment identity; needs no inverse of `R_i`.
    FourthMoment,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    /// Inverse path when every `R_i` has condition number below 1e10.
    #[default]
    Auto,
    Force(CommonPath),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommonExpectations {
    /// `E{g_k^H w_c}`, real.
    pub mean: Vec<f64>,
    /// `a_{c,k} = |E{g_k^H w_c}|²`.
    pub a_c: Vec<f64>,
    /// `E{|g_k^H w_c|²}`.
    pub second_moment: Vec<f64>,
    /// `I_{c,k} = E{|g_k^H w_c|²} − a_{c,k}`, clipped at zero.
    pub i_c: Vec<f64>,
    pub path: CommonPath,
}

const CONDITION_LIMIT: f64 = 1e10;

pub fn common_expectations(
    stats: &EstimationStatistics,
    weights: &CommonWeights,
    choice: PathChoice,
) -> Result<CommonExpectations> {
    let k = stats.users();
    let a = &weights.a;
    if a.len() != k {
        return Err(Error::Config("weight count differs from UE count".into()));
    }
    let quad: f64 = (0..k)
        .map(|i| (0..k).map(|j| a[i] * a[j] * stats.u[(i, j)]).sum::<f64>())
        .sum();
    if !(quad > 0.0) {
        return Err(Error::Numerical(
            "common precoder has zero average power".into(),
        ));
    }
    let path = match (choice, stats.mode) {
        (PathChoice::Force(CommonPath::InverseCorrelation), PilotMode::Orthogonal) => {
            return Err(Error::Domain(
                "the inverse-correlation path needs a shared pilot".into(),
            ))
        }
        (PathChoice::Force(p), _) => p,
        (PathChoice::Auto, PilotMode::Orthogonal) => CommonPath::FourthMoment,
        (PathChoice::Auto, PilotMode::SharedSinglePilot) => {
            if stats
                .r
                .iter()
                .all(|r| condition_number(r) < CONDITION_LIMIT)
            {
                CommonPath::InverseCorrelation
            } else {
                CommonPath::FourthMoment
            }
        }
    };

    // Numerators Σ_ij a_i a_j E{g_k^H ĝ_i ĝ_j^H g_k}.
    let numer: Vec<f64> = match path {
        CommonPath::FourthMoment => {
            let xi = stats.weighted_covariance(a);
            (0..k)
                .map(|kk| {
                    let m: f64 = (0..k).map(|i| a[i] * stats.u[(i, kk)]).sum();
                    m * m + trace_product(&xi, &stats.r[kk]).re
                })
                .collect()
        }
        CommonPath::InverseCorrelation => inverse_path_numerators(stats, a)?,
    };

    let mut mean = Vec::with_capacity(k);
    let mut a_c = Vec::with_capacity(k);
    let mut second = Vec::with_capacity(k);
    let mut i_c = Vec::with_capacity(k);
    for (kk, &num) in numer.iter().enumerate() {
        let mu = (0..k).map(|i| a[i] * stats.u[(i, kk)]).sum::<f64>() / quad.sqrt();
        let s = num / quad;
        let mut var = s - mu * mu;
        if var < 0.0 {
            if var < -1e-10 * s.abs().max(mu * mu) {
                return Err(Error::Numerical(format!(
                    "negative beamforming-gain uncertainty {var:e} for UE {kk}"
                )));
            }
            var = 0.0;
        }
        mean.push(mu);
        a_c.push(mu * mu);
        second.push(s);
        i_c.push(var);
    }
    Ok(CommonExpectations {
        mean,
        a_c,
        second_moment: second,
        i_c,
        path,
    })
}

/// With a shared pilot `Σ_j a_j ĝ_j = S R_i^{-1} ĝ_i` for every `i`, where
/// `S = Σ_j a_j R_j`. Splitting `g_k = ĝ_k + g̃_k` then gives
/// `E{g_k^H ĝ_i ĝ_a^H g_k} = tr(Z_i Y_ki)` with `Z_i = R_i^{-1} S` and
/// `Y_ki = Φ_kΦ_i + U(i,k) R_kQ^{-1}R_i + (R_k − Φ_k)Φ_i`.
fn inverse_path_numerators(stats: &EstimationStatistics, a: &[f64]) -> Result<Vec<f64>> {
    let k = stats.users();
    let s = stats.weighted_correlation(a);
    let mut p = Vec::with_capacity(k);
    let mut g = Vec::with_capacity(k);
    for i in 0..k {
        let z = cholesky(&stats.r[i])
            .map_err(|_| Error::Numerical(format!("R_{i} is singular")))?
            .solve(&s);
        p.push(&stats.phi[i] * &z);
        // Q^{-1} R_i Z_i
        g.push(stats.estimator[i].adjoint() * &z);
    }
    let mut out = vec![0.0; k];
    for kk in 0..k {
        let mut acc = 0.0;
        for i in 0..k {
            if a[i] == 0.0 {
                continue;
            }
            // tr(Φ_k P_i) + tr((R_k − Φ_k) P_i) = tr(R_k P_i)
            let t1 = trace_product(&stats.phi[kk], &p[i]).re;
            let t3 = trace_product(&stats.error_cov[kk], &p[i]).re;
            let t2 = stats.u[(i, kk)] * trace_product(&stats.r[kk], &g[i]).re;
            acc += a[i] * (t1 + t2 + t3);
        }
        out[kk] = acc;
    }
    Ok(out)
}

/// Everything about one setup's precoders that the SE layer needs.
#[derive(Clone, Debug)]
pub struct PrecoderStatistics {
    pub private: PrivateExpectations,
    pub weights: CommonWeights,
    pub common: CommonExpectations,
}

pub fn precoder_statistics(
    stats: &EstimationStatistics,
    choice: PathChoice,
) -> Result<PrecoderStatistics> {
    let private = private_expectations(stats)?;
    let weights = common_weights(&stats.u)?;
    let common = common_expectations(stats, &weights, choice)?;
    Ok(PrecoderStatistics {
        private,
        weights,
        common,
    })
}

/// Dense grid over the weight ellipsoid `aᵀUa = 1` for two UEs; returns the
/// best `min_k aᵀU(:,k)`.
pub fn common_weights_grid_k2(u: &DMatrix<f64>, points: usize) -> f64 {
    assert_eq!(u.nrows(), 2);
    let mut best = f64::NEG_INFINITY;
    for n in 0..points {
        let th = 2.0 * std::f64::consts::PI * n as f64 / points as f64;
        let d = DVector::from_vec(vec![th.cos(), th.sin()]);
        let q = d.dot(&(u * &d));
        if q <= 0.0 {
            continue;
        }
        let a = d / q.sqrt();
        let v = (u * &a).min();
        best = best.max(v);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanstat::PilotAssignment;
    use crate::geometry::{correlation_matrix, CorrelationModel, ScatteringParams};
    use crate::linalg::CMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stats(k: usize, m: usize, mode: PilotMode, seed: u64) -> EstimationStatistics {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<CMatrix> = (0..k)
            .map(|i| {
                correlation_matrix(
                    1.0 + 0.4 * i as f64,
                    -1.0 + 0.6 * i as f64,
                    m,
                    CorrelationModel::GaussianScattering,
                    &ScatteringParams::default(),
                    &mut rng,
                )
                .unwrap()
                .matrix
            })
            .collect();
        let p = PilotAssignment {
            mode,
            tau_p: 20,
            rho_ul_mw: 1.0,
            sigma_ul2_mw: 0.3,
        };
        EstimationStatistics::new(&r, &p).unwrap()
    }

    #[test]
    fn single_ue_weight() {
        let u = DMatrix::from_element(1, 1, 4.0);
        let w = common_weights(&u).unwrap();
        assert!((w.a[0] - 0.5).abs() < 1e-10);
        assert!((w.t_star - 2.0).abs() < 1e-10);
    }

    #[test]
    fn identical_ues_get_equal_weights() {
        let u = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.7 });
        let w = common_weights(&u).unwrap();
        for i in 1..3 {
            assert!((w.a[i] - w.a[0]).abs() < 1e-7, "{:?}", w.a);
        }
    }

    #[test]
    fn weights_normalized_and_tight() {
        let s = stats(4, 16, PilotMode::SharedSinglePilot, 1);
        let w = common_weights(&s.u).unwrap();
        let a = DVector::from_vec(w.a.clone());
        assert!((a.dot(&(&s.u * &a)) - 1.0).abs() < 1e-8);
        assert!((w.normalization - 1.0).abs() < 1e-8);
    }

    #[test]
    fn weights_scale_consistently() {
        let s = stats(3, 12, PilotMode::SharedSinglePilot, 2);
        let w1 = common_weights(&s.u).unwrap();
        let w2 = common_weights(&(&s.u * 9.0)).unwrap();
        assert!((w2.t_star - 3.0 * w1.t_star).abs() < 1e-6 * w2.t_star);
        for (x, y) in w1.a.iter().zip(&w2.a) {
            assert!((x - 3.0 * y).abs() < 1e-6 * x.abs().max(1e-12));
        }
    }

    #[test]
    fn two_ue_weights_match_grid() {
        let u = DMatrix::from_row_slice(2, 2, &[3.0, 1.2, 1.2, 1.0]);
        let w = common_weights(&u).unwrap();
        let g = common_weights_grid_k2(&u, 200_000);
        assert!((w.t_star - g).abs() <= 1e-3 * g);
        assert!(w.t_star >= g - 1e-9);
    }

    #[test]
    fn paths_agree() {
        let s = stats(4, 12, PilotMode::SharedSinglePilot, 3);
        assert!(s.r.iter().all(|r| condition_number(r) < 1e10));
        let w = common_weights(&s.u).unwrap();
        let a = common_expectations(&s, &w, PathChoice::Force(CommonPath::FourthMoment)).unwrap();
        let b =
            common_expectations(&s, &w, PathChoice::Force(CommonPath::InverseCorrelation)).unwrap();
        for k in 0..4 {
            let rel = (a.second_moment[k] - b.second_moment[k]).abs() / a.second_moment[k];
            assert!(rel < 1e-8, "UE {k}: {rel:e}");
        }
        let auto = common_expectations(&s, &w, PathChoice::Auto).unwrap();
        assert_eq!(auto.path, CommonPath::InverseCorrelation);
    }

    #[test]
    fn single_ue_common_is_private() {
        let s = stats(1, 10, PilotMode::SharedSinglePilot, 4);
        let ps = precoder_statistics(&s, PathChoice::Auto).unwrap();
        let sm = ps.private.second_moment[(0, 0)];
        assert!((ps.common.second_moment[0] - sm).abs() < 1e-10 * sm);
        let unc = sm - ps.private.a_p[0];
        assert!((ps.common.i_c[0] - unc).abs() < 1e-8 * sm);
    }

    #[test]
    fn uncertainty_nonnegative() {
        for mode in [PilotMode::SharedSinglePilot, PilotMode::Orthogonal] {
            let s = stats(4, 16, mode, 5);
            let ps = precoder_statistics(&s, PathChoice::Auto).unwrap();
            assert!(ps.common.i_c.iter().all(|&v| v >= 0.0));
            for k in 0..4 {
                assert!(ps.private.second_moment[(k, k)] >= ps.private.a_p[k]);
            }
        }
    }

    #[test]
    fn shared_diagonal_identity() {
        let s = stats(3, 12, PilotMode::SharedSinglePilot, 6);
        let pe = private_expectations(&s).unwrap();
        for k in 0..3 {
            let t = s.trace_phi(k);
            let want = (trace_product(&s.r[k], &s.phi[k]).re + t * t) / t;
            assert!((pe.second_moment[(k, k)] - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn orthogonal_scalar_case() {
        let beta = 2.0;
        let noise = 0.5;
        let r = vec![CMatrix::identity(8, 8) * C64::new(beta, 0.0)];
        let p = PilotAssignment {
            mode: PilotMode::Orthogonal,
            tau_p: 1,
            rho_ul_mw: 1.0,
            sigma_ul2_mw: noise,
        };
        let s = EstimationStatistics::new(&r, &p).unwrap();
        let pe = private_expectations(&s).unwrap();
        assert!((pe.a_p[0] - 8.0 * beta * beta / (beta + noise)).abs() < 1e-12);
    }

    #[test]
    fn inverse_path_refused_for_orthogonal() {
        let s = stats(2, 8, PilotMode::Orthogonal, 7);
        let w = common_weights(&s.u).unwrap();
        assert!(
            common_expectations(&s, &w, PathChoice::Force(CommonPath::InverseCorrelation)).is_err()
        );
    }

    #[test]
    fn degenerate_ue_named() {
        let e = mr_private_precoder(&CVector::zeros(4), 0.0, 3).unwrap_err();
        assert!(matches!(e, Error::DegenerateUe { ue: 3, .. }));
    }
}
