//! SINR coefficients and hardening-bound spectral efficiencies.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chanstat::{ChannelSampler, EstimationStatistics};
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::par::{map_range, Execution};
use crate::precoding::{
    common_precoder, mr_private_precoder, CommonExpectations, CommonWeights, PrivateExpectations,
};

/// Scalars behind every SINR, in linear units (gains times mW where relevant).
#[derive(Clone, Debug, PartialEq)]
pub struct SECoefficients {
    pub a_c: Vec<f64>,
    pub a_p: Vec<f64>,
    /// `[k, i] = E{|g_k^H w_i|²}`: interference of private stream `i` on the
    /// common stream at UE `k`.
    pub b_c: DMatrix<f64>,
    /// As `b_c` with the diagonal reduced by `a_p`.
    pub b_p: DMatrix<f64>,
    pub i_c: Vec<f64>,
    pub noise_mw: f64,
    pub prelog: f64,
}

fn clip(name: &str, v: f64, scale: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -1e-6 * scale {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "coefficient {name} = {v:e} is negative beyond round-off (scale {scale:e})"
        )))
    }
}

impl SECoefficients {
    /// Validates and clips round-off negatives. Thresholds are relative to
    /// the largest coefficient, since raw channel gains are tiny.
    pub fn new(
        a_c: Vec<f64>,
        a_p: Vec<f64>,
        b_c: DMatrix<f64>,
        i_c: Vec<f64>,
        noise_mw: f64,
        prelog: f64,
    ) -> Result<Self> {
        let k = a_p.len();
        if k == 0 || a_c.len() != k || i_c.len() != k || b_c.shape() != (k, k) {
            return Err(Error::Config("coefficient dimensions disagree".into()));
        }
        if !(prelog > 0.0 && prelog <= 1.0) {
            return Err(Error::Config(format!("prelog {prelog} outside (0, 1]")));
        }
        if !(noise_mw > 0.0) {
            return Err(Error::Config("noise power must be positive".into()));
        }
        let scale = a_c
            .iter()
            .chain(&a_p)
            .chain(&i_c)
            .chain(b_c.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let fix = |name: &str, v: &[f64]| -> Result<Vec<f64>> {
            v.iter().map(|&x| clip(name, x, scale)).collect()
        };
        let a_c = fix("a_c", &a_c)?;
        let a_p = fix("a_p", &a_p)?;
        let i_c = fix("I_c", &i_c)?;
        let mut bc = b_c;
        for v in bc.iter_mut() {
            *v = clip("b_c", *v, scale)?;
        }
        let mut b_p = bc.clone();
        for kk in 0..k {
            b_p[(kk, kk)] = clip("b_p", bc[(kk, kk)] - a_p[kk], scale)?;
        }
        Ok(SECoefficients {
            a_c,
            a_p,
            b_c: bc,
            b_p,
            i_c,
            noise_mw,
            prelog,
        })
    }

    pub fn users(&self) -> usize {
        self.a_p.len()
    }

    /// Coefficients for powers expressed as fractions of `budget_mw`, with
    /// unit noise.
    pub fn normalized(&self, budget_mw: f64) -> NormalizedCoefficients {
        let s = budget_mw / self.noise_mw;
        NormalizedCoefficients {
            a_c: self.a_c.iter().map(|v| v * s).collect(),
            a_p: self.a_p.iter().map(|v| v * s).collect(),
            b_c: &self.b_c * s,
            b_p: &self.b_p * s,
            i_c: self.i_c.iter().map(|v| v * s).collect(),
            prelog: self.prelog,
        }
    }
}

pub fn build_coefficients(
    private: &PrivateExpectations,
    common: &CommonExpectations,
    noise_mw: f64,
    prelog: f64,
) -> Result<SECoefficients> {
    SECoefficients::new(
        common.a_c.clone(),
        private.a_p.clone(),
        private.second_moment.clone(),
        common.i_c.clone(),
        noise_mw,
        prelog,
    )
}

/// Coefficients in budget-fraction units: `γ = p a / (Σ p b + p_c I + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedCoefficients {
    pub a_c: Vec<f64>,
    pub a_p: Vec<f64>,
    pub b_c: DMatrix<f64>,
    pub b_p: DMatrix<f64>,
    pub i_c: Vec<f64>,
    pub prelog: f64,
}

impl NormalizedCoefficients {
    pub fn users(&self) -> usize {
        self.a_p.len()
    }

    pub fn gamma_c(&self, p_c: f64, p: &[f64]) -> Vec<f64> {
        (0..self.users())
            .map(|k| {
                let interf: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, pi)| pi * self.b_c[(k, i)])
                    .sum();
                p_c * self.a_c[k] / (interf + p_c * self.i_c[k] + 1.0)
            })
            .collect()
    }

    pub fn gamma_p(&self, p_c: f64, p: &[f64]) -> Vec<f64> {
        (0..self.users())
            .map(|k| {
                let interf: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, pi)| pi * self.b_p[(k, i)])
                    .sum();
                p[k] * self.a_p[k] / (interf + p_c * self.i_c[k] + 1.0)
            })
            .collect()
    }

    pub fn se(&self, gamma: f64) -> f64 {
        self.prelog * (1.0 + gamma).log2()
    }

    /// `(SE_c, SE_p)` at budget fractions `p_c`, `p`.
    pub fn rates(&self, p_c: f64, p: &[f64]) -> (f64, Vec<f64>) {
        let gc = self
            .gamma_c(p_c, p)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let se_c = if p_c > 0.0 { self.se(gc) } else { 0.0 };
        let se_p = self
            .gamma_p(p_c, p)
            .into_iter()
            .map(|g| self.se(g))
            .collect();
        (se_c, se_p)
    }

    /// `SE_c + Σ SE_p`.
    pub fn sum_se(&self, p_c: f64, p: &[f64]) -> f64 {
        let (c, sp) = self.rates(p_c, p);
        c + sp.iter().sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareRule {
    /// No common stream.
    None,
    /// `C_k = SE_c / K`.
    Equal,
    /// Shares chosen to maximize the minimum per-UE total.
    WaterFill,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub rho_c: f64,
    pub rho: Vec<f64>,
    pub budget_mw: f64,
    pub c_shares: Vec<f64>,
    pub share_rule: ShareRule,
}

impl PowerAllocation {
    pub fn total_power(&self) -> f64 {
        self.rho_c + self.rho.iter().sum::<f64>()
    }

    pub fn common_fraction(&self) -> f64 {
        self.rho_c / self.budget_mw
    }

    pub fn validate(&self, se_c: f64) -> Result<()> {
        if self.rho_c < 0.0 || self.rho.iter().any(|&r| r < 0.0) {
            return Err(Error::Numerical("negative power in allocation".into()));
        }
        if self.total_power() > self.budget_mw * (1.0 + 1e-8) {
            return Err(Error::Numerical(format!(
                "allocation uses {} mW of a {} mW budget",
                self.total_power(),
                self.budget_mw
            )));
        }
        if self.c_shares.iter().any(|&c| c < 0.0) {
            return Err(Error::Numerical("negative common share".into()));
        }
        let total: f64 = self.c_shares.iter().sum();
        if total > se_c + 1e-8 {
            return Err(Error::Numerical(format!(
                "common shares sum to {total} but SE_c = {se_c}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub se_c: f64,
    pub se_p: Vec<f64>,
    pub se_total: Vec<f64>,
    /// `SE_c + Σ SE_p`.
    pub sum_se: f64,
    pub min_se: f64,
    pub gamma_c: Vec<f64>,
    pub gamma_p: Vec<f64>,
}

impl RateResult {
    pub fn mean_se(&self) -> f64 {
        self.se_total.iter().sum::<f64>() / self.se_total.len() as f64
    }
}

pub fn evaluate(coeffs: &SECoefficients, alloc: &PowerAllocation) -> RateResult {
    let k = coeffs.users();
    let mut gamma_c = Vec::with_capacity(k);
    let mut gamma_p = Vec::with_capacity(k);
    for kk in 0..k {
        let mut ic = 0.0;
        let mut ip = 0.0;
        for i in 0..k {
            ic += alloc.rho[i] * coeffs.b_c[(kk, i)];
            ip += alloc.rho[i] * coeffs.b_p[(kk, i)];
        }
        let common = alloc.rho_c * coeffs.i_c[kk] + coeffs.noise_mw;
        gamma_c.push(alloc.rho_c * coeffs.a_c[kk] / (ic + common));
        gamma_p.push(alloc.rho[kk] * coeffs.a_p[kk] / (ip + common));
    }
    let gmin = gamma_c.iter().copied().fold(f64::INFINITY, f64::min);
    let se_c = coeffs.prelog * (1.0 + gmin).log2();
    let se_p: Vec<f64> = gamma_p
        .iter()
        .map(|g| coeffs.prelog * (1.0 + g).log2())
        .collect();
    let se_total: Vec<f64> = se_p
        .iter()
        .enumerate()
        .map(|(i, s)| s + alloc.c_shares.get(i).copied().unwrap_or(0.0))
        .collect();
    let min_se = se_total.iter().copied().fold(f64::INFINITY, f64::min);
    RateResult {
        sum_se: se_c + se_p.iter().sum::<f64>(),
        se_c,
        se_p,
        se_total,
        min_se,
        gamma_c,
        gamma_p,
    }
}

/// Sample moments of the effective precoded channels.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloMoments {
    pub samples: usize,
    /// `[k, i] = mean of g_k^H w_i`.
    pub private_mean: DMatrix<C64>,
    /// `[k, i] = mean of |g_k^H w_i|²`.
    pub private_second: DMatrix<f64>,
    pub common_mean: Vec<C64>,
    pub common_second: Vec<f64>,
    /// Mean `‖w_k‖²`.
    pub private_norm: Vec<f64>,
    pub common_norm: f64,
}

struct Sums {
    pm: DMatrix<C64>,
    ps: DMatrix<f64>,
    cm: Vec<C64>,
    cs: Vec<f64>,
    pn: Vec<f64>,
    cn: f64,
}

impl Sums {
    fn zeros(k: usize) -> Self {
        Sums {
            pm: DMatrix::from_element(k, k, ZERO),
            ps: DMatrix::zeros(k, k),
            cm: vec![ZERO; k],
            cs: vec![0.0; k],
            pn: vec![0.0; k],
            cn: 0.0,
        }
    }

    fn add(&mut self, o: &Sums) {
        self.pm += &o.pm;
        self.ps += &o.ps;
        for i in 0..self.cm.len() {
            self.cm[i] += o.cm[i];
            self.cs[i] += o.cs[i];
            self.pn[i] += o.pn[i];
        }
        self.cn += o.cn;
    }
}

const CHUNK: usize = 1024;

/// Sample moments over `n_samples` draws. Chunk `c` of 1024 draws uses
/// stream `c` of a ChaCha generator seeded with `seed`, so results do not
/// depend on the execution mode.
pub fn monte_carlo_moments(
    stats: &EstimationStatistics,
    weights: &CommonWeights,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloMoments> {
    if n_samples == 0 {
        return Err(Error::Config("need at least one Monte Carlo sample".into()));
    }
    let k = stats.users();
    let sampler = ChannelSampler::new(stats)?;
    let norms: Vec<f64> = (0..k).map(|i| stats.trace_phi(i)).collect();
    if let Some(ue) = norms.iter().position(|&t| !(t > 0.0)) {
        return Err(Error::DegenerateUe {
            ue,
            reason: "estimate has zero energy".into(),
        });
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let partial = map_range(chunks, exec, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = CHUNK.min(n_samples - c * CHUNK);
        let mut s = Sums::zeros(k);
        for _ in 0..n {
            let x = sampler.sample(stats, &mut rng);
            let w: Vec<_> = x
                .g_hat
                .iter()
                .zip(&norms)
                .enumerate()
                .map(|(ue, (g, &t))| mr_private_precoder(g, t, ue).expect("energy checked above"))
                .collect();
            let wc = common_precoder(weights, &x.g_hat);
            for i in 0..k {
                s.pn[i] += w[i].norm_squared();
            }
            s.cn += wc.norm_squared();
            for kk in 0..k {
                for i in 0..k {
                    let v = x.g[kk].dotc(&w[i]);
                    s.pm[(kk, i)] += v;
                    s.ps[(kk, i)] += v.norm_sqr();
                }
                let v = x.g[kk].dotc(&wc);
                s.cm[kk] += v;
                s.cs[kk] += v.norm_sqr();
            }
        }
        s
    });
    let mut total = Sums::zeros(k);
    for p in &partial {
        total.add(p);
    }
    let n = n_samples as f64;
    let inv = C64::new(1.0 / n, 0.0);
    Ok(MonteCarloMoments {
        samples: n_samples,
        private_mean: total.pm * inv,
        private_second: total.ps / n,
        common_mean: total.cm.iter().map(|v| v * inv).collect(),
        common_second: total.cs.iter().map(|v| v / n).collect(),
        private_norm: total.pn.iter().map(|v| v / n).collect(),
        common_norm: total.cn / n,
    })
}

/// Empirical SINR coefficients built from [`monte_carlo_moments`].
pub fn monte_carlo_coefficients(
    stats: &EstimationStatistics,
    weights: &CommonWeights,
    noise_mw: f64,
    prelog: f64,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<SECoefficients> {
    let m = monte_carlo_moments(stats, weights, n_samples, seed, exec)?;
    let k = stats.users();
    let a_p: Vec<f64> = (0..k).map(|i| m.private_mean[(i, i)].norm_sqr()).collect();
    let a_c: Vec<f64> = m.common_mean.iter().map(|v| v.norm_sqr()).collect();
    let i_c: Vec<f64> = (0..k)
        .map(|i| (m.common_second[i] - a_c[i]).max(0.0))
        .collect();
    // A single draw can put |mean|² above the second moment's diagonal by
    // round-off only; the constructor clips that.
    SECoefficients::new(a_c, a_p, m.private_second, i_c, noise_mw, prelog)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric(k: usize) -> SECoefficients {
        let b = DMatrix::from_fn(k, k, |i, j| if i == j { 3.0 } else { 0.5 });
        SECoefficients::new(vec![2.0; k], vec![2.5; k], b, vec![0.4; k], 1.0, 0.95).unwrap()
    }

    fn alloc(rho_c: f64, rho: Vec<f64>, shares: Vec<f64>) -> PowerAllocation {
        PowerAllocation {
            rho_c,
            rho,
            budget_mw: 10.0,
            c_shares: shares,
            share_rule: ShareRule::Equal,
        }
    }

    #[test]
    fn private_diagonal_reconstructs_second_moment() {
        let c = symmetric(3);
        for k in 0..3 {
            assert_eq!(c.b_p[(k, k)] + c.a_p[k], c.b_c[(k, k)]);
        }
    }

    #[test]
    fn common_off_gives_nors() {
        let c = symmetric(3);
        let r = evaluate(&c, &alloc(0.0, vec![1.0, 2.0, 3.0], vec![0.0; 3]));
        assert_eq!(r.se_c, 0.0);
        for k in 0..3 {
            let interf: f64 = (0..3).map(|i| [1.0, 2.0, 3.0][i] * c.b_p[(k, i)]).sum();
            let g = [1.0, 2.0, 3.0][k] * c.a_p[k] / (interf + c.noise_mw);
            assert_eq!(r.gamma_p[k], g);
        }
    }

    #[test]
    fn noise_limited_rates_vanish() {
        let mut c = symmetric(2);
        c.noise_mw = 1e9 * 3.0;
        let r = evaluate(&c, &alloc(1.0, vec![1.0, 1.0], vec![0.0; 2]));
        assert!(r.se_c < 1e-6 && r.se_p.iter().all(|&s| s < 1e-6));
    }

    #[test]
    fn symmetric_users_equal_sinr() {
        let c = symmetric(2);
        let r = evaluate(&c, &alloc(2.0, vec![3.0, 3.0], vec![0.0; 2]));
        assert_eq!(r.gamma_p[0], r.gamma_p[1]);
    }

    #[test]
    fn totals_add_shares() {
        let c = symmetric(3);
        let r0 = evaluate(&c, &alloc(2.0, vec![1.0; 3], vec![0.0; 3]));
        let shares = vec![r0.se_c / 3.0; 3];
        let r = evaluate(&c, &alloc(2.0, vec![1.0; 3], shares.clone()));
        for k in 0..3 {
            assert!((r.se_total[k] - r.se_p[k] - shares[k]).abs() < 1e-15);
        }
        let total: f64 = r.se_total.iter().sum();
        assert!((total - r.sum_se).abs() < 1e-12);
        assert!(
            (r.se_c - 0.95 * (1.0 + r.gamma_c.iter().copied().fold(f64::MAX, f64::min)).log2())
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn common_sinr_tracks_grid_and_limit() {
        let c = symmetric(2);
        let p = vec![1.0, 1.0];
        let mut prev = None;
        for rho_c in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let r = evaluate(&c, &alloc(rho_c, p.clone(), vec![0.0; 2]));
            let want = rho_c * 2.0 / (1.0 * 3.0 + 1.0 * 0.5 + rho_c * 0.4 + 1.0);
            assert!((r.gamma_c[0] - want).abs() < 1e-15);
            if let Some(g) = prev {
                assert!(r.gamma_p[0] < g);
            }
            prev = Some(r.gamma_p[0]);
        }
        let big = 1e6 * c.noise_mw / 0.4;
        let r = evaluate(&c, &alloc(big, p, vec![0.0; 2]));
        assert!((r.gamma_c[0] - 2.0 / 0.4).abs() < 0.01 * 5.0);
    }

    #[test]
    fn rejects_large_negative() {
        let b = DMatrix::from_element(1, 1, 1.0);
        assert!(
            SECoefficients::new(vec![-0.1], vec![1.0], b.clone(), vec![0.0], 1.0, 0.9).is_err()
        );
        let c = SECoefficients::new(vec![-1e-12], vec![1.0], b, vec![0.0], 1.0, 0.9).unwrap();
        assert_eq!(c.a_c[0], 0.0);
    }

    #[test]
    fn normalized_matches_physical() {
        let c = symmetric(3);
        let n = c.normalized(10.0);
        let a = alloc(2.0, vec![1.0, 3.0, 4.0], vec![0.0; 3]);
        let r = evaluate(&c, &a);
        let gp = n.gamma_p(0.2, &[0.1, 0.3, 0.4]);
        let gc = n.gamma_c(0.2, &[0.1, 0.3, 0.4]);
        for k in 0..3 {
            assert!((gp[k] - r.gamma_p[k]).abs() < 1e-12 * r.gamma_p[k]);
            assert!((gc[k] - r.gamma_c[k]).abs() < 1e-12 * r.gamma_c[k]);
        }
        assert!((n.sum_se(0.2, &[0.1, 0.3, 0.4]) - r.sum_se).abs() < 1e-12);
    }

    #[test]
    fn allocation_checks() {
        let a = alloc(5.0, vec![3.0, 3.0], vec![0.5, 0.5]);
        assert!(a.validate(1.0).is_err());
        let a = alloc(4.0, vec![3.0, 3.0], vec![0.5, 0.6]);
        assert!(a.validate(1.0).is_err());
        let a = alloc(4.0, vec![3.0, 3.0], vec![0.5, 0.5]);
        assert!(a.validate(1.0).is_ok());
    }
}
