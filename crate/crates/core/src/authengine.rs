//! Quadratic-form hypothesis test and its analytic acceptance models.
//!
//! A packet is accepted (H0) iff `e_Pᴴ V_P e_P < η_P` and `e_Cᴴ V_C e_C < η_C`.
//! Process and channel innovations are independent, so every acceptance
//! probability is the product of two branch probabilities. A branch with
//! `M = 0` is disabled and accepts with probability one.

use serde::{Deserialize, Serialize};

use crate::adversary::AnalyticBranch;
use crate::kalman::GaussianBelief;
use crate::linalg::{
    hermitian_eigenvalues, hermitian_inverse, hermitize, mul, psd_sqrt, quad_form, sandwich, trace_re, CMat, CVec,
};
use crate::specfun::{gauss_q, inc_gamma_lower_reg, marcum_q, Probability};
use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

/// Spectra below this are treated as all-zero.
const SPECTRUM_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub eta_p: f64,
    pub eta_c: f64,
}

impl ThresholdPair {
    pub fn new(eta_p: f64, eta_c: f64) -> Result<Self> {
        if !(eta_p >= 0.0) || !(eta_c >= 0.0) {
            return Err(Error::DomainError(format!("thresholds must be >= 0, got ({eta_p}, {eta_c})")));
        }
        Ok(Self { eta_p, eta_c })
    }

    pub fn get(&self, i: usize) -> f64 {
        if i == 0 {
            self.eta_p
        } else {
            self.eta_c
        }
    }

    pub fn set(&mut self, i: usize, v: f64) {
        if i == 0 {
            self.eta_p = v
        } else {
            self.eta_c = v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Legitimate: accept.
    H0,
    /// Adversarial: reject.
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    ChiSquare,
    Gaussian,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub alpha: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self { method: Method::ChiSquare, alpha: 0.5 }
    }
}

impl MethodConfig {
    pub fn new(method: Method, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { method, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionProbabilities {
    pub p_tn: Probability,
    pub p_fn_1: Probability,
    pub p_fn_2: Probability,
}

/// Gaussian moments of a branch statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchStats {
    pub m: usize,
    pub s_mean: f64,
    pub s_var: f64,
}

/// `V = (C Ẑ Cᴴ + N)⁻¹` for sensor `g` with the belief predicted to the packet time.
pub fn weight_matrix(prediction: &GaussianBelief, model: &StateSpaceModel, g: usize) -> Result<CMat> {
    let c = model.output(g)?;
    hermitian_inverse(&(sandwich(c, &prediction.cov) + model.noise()))
}

/// `s = eᴴ V e`, clipped at zero against rounding.
pub fn test_statistic(e: &CVec, v: &CMat) -> Result<f64> {
    if v.shape() != (e.len(), e.len()) {
        return Err(Error::DimensionMismatch(format!("weight {}x{} for innovation {}", v.nrows(), v.ncols(), e.len())));
    }
    Ok(quad_form(v, e).max(0.0))
}

/// `None` marks a disabled branch.
pub fn decide(s_p: Option<f64>, s_c: Option<f64>, thr: &ThresholdPair) -> Hypothesis {
    let ok_p = s_p.is_none_or(|s| s < thr.eta_p);
    let ok_c = s_c.is_none_or(|s| s < thr.eta_c);
    if ok_p && ok_c {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    }
}

/// Power mean `((1/M) Σ μ_i^α)^{1/α}` of the eigenvalues of `V·cov`.
pub fn chi_square_lbar(v: &CMat, cov: &CMat, alpha: f64) -> Result<f64> {
    if v.shape() != cov.shape() || !v.is_square() {
        return Err(Error::DimensionMismatch("weight and covariance must be square of equal size".into()));
    }
    let m = v.nrows();
    if m == 0 {
        return Err(Error::DegenerateSpectrum);
    }
    let root = psd_sqrt(cov);
    let mu = hermitian_eigenvalues(&hermitize(&sandwich(&root, v)));
    if mu.iter().all(|&x| x <= SPECTRUM_FLOOR) {
        return Err(Error::DegenerateSpectrum);
    }
    let mean = mu.iter().map(|&x| x.max(0.0).powf(alpha)).sum::<f64>() / m as f64;
    Ok(mean.powf(1.0 / alpha))
}

/// `1 − Q_M(√(2 quad / L̄), √(2 η / L̄))`.
pub fn chi_square_accept_prob(m: usize, lbar: f64, quad: f64, eta: f64) -> Result<f64> {
    if m == 0 {
        return Ok(1.0);
    }
    if !(lbar > 0.0) || !(quad >= 0.0) || !(eta >= 0.0) {
        return Err(Error::DomainError(format!(
            "chi-square branch needs L̄ > 0, quad >= 0, η >= 0; got {lbar}, {quad}, {eta}"
        )));
    }
    if eta.is_infinite() {
        return Ok(1.0);
    }
    let m = u32::try_from(m).map_err(|_| Error::DomainError("branch dimension too large".into()))?;
    if quad == 0.0 {
        return inc_gamma_lower_reg(m, eta / lbar);
    }
    Ok(1.0 - marcum_q(m, (2.0 * quad / lbar).sqrt(), (2.0 * eta / lbar).sqrt())?)
}

/// Mean and variance of `s = eᴴ V e` for `e ~ CN(d, cov)`:
/// `tr(V cov) + dᴴVd` and `tr((V cov)²) + 2 dᴴ V cov V d`.
pub fn quadratic_moments(v: &CMat, cov: &CMat, offset: Option<&CVec>) -> Result<BranchStats> {
    let m = v.nrows();
    if v.shape() != (m, m) || cov.shape() != (m, m) || offset.is_some_and(|d| d.len() != m) {
        return Err(Error::DimensionMismatch("weight, covariance and offset sizes differ".into()));
    }
    let vc = mul(v, cov);
    let mut s_mean = trace_re(&vc);
    let mut s_var = (0..m).map(|i| (0..m).map(|j| (vc[(i, j)] * vc[(j, i)]).re).sum::<f64>()).sum::<f64>();
    if let Some(d) = offset {
        let vd = v * d;
        s_mean += d.dotc(&vd).re;
        s_var += 2.0 * quad_form(cov, &vd);
    }
    Ok(BranchStats { m, s_mean, s_var: s_var.max(0.0) })
}

/// `Q(−(η − s̄)/√S)`; a zero-variance branch is the step `1{η > s̄}`.
/// The statistic is non-negative, so nothing is accepted at `η ≤ 0`.
pub fn gaussian_accept_prob(stats: &BranchStats, eta: f64) -> f64 {
    if stats.m == 0 || eta.is_infinite() {
        return 1.0;
    }
    if eta <= 0.0 {
        return 0.0;
    }
    if stats.s_var <= 0.0 {
        return if eta > stats.s_mean { 1.0 } else { 0.0 };
    }
    gauss_q(-(eta - stats.s_mean) / stats.s_var.sqrt())
}

/// Predicted quantities for one branch of one sensor, shared by all transmitters.
#[derive(Debug, Clone)]
pub struct PredictedBranch {
    pub c: CMat,
    /// `E = C Ẑ Cᴴ + N`
    pub cov_e: CMat,
    pub weight: CMat,
    /// `C ẑ`
    pub predicted_output: CVec,
    /// `Ẑ_` of the predicted belief.
    pub state_mean_cov: CMat,
}

impl PredictedBranch {
    pub fn new(model: &StateSpaceModel, prediction: &GaussianBelief, g: usize) -> Result<Self> {
        let c = model.output(g)?.clone();
        let cov_e = hermitize(&(sandwich(&c, &prediction.cov) + model.noise()));
        let weight = hermitian_inverse(&cov_e)?;
        Ok(Self {
            predicted_output: &c * &prediction.mean,
            cov_e,
            weight,
            c,
            state_mean_cov: prediction.mean_cov.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn legitimate(&self) -> BranchInput {
        let m = self.dim();
        BranchInput {
            weight: self.weight.clone(),
            cov: self.cov_e.clone(),
            offset: CVec::zeros(m),
            mean_cov: CMat::zeros(m, m),
        }
    }

    /// Innovation law of an adversarial branch: offset `ỹ − C ẑ`, covariance `Ỹ`,
    /// and `E_ = (C̃ − C) Ẑ_ (C̃ − C)ᴴ` for the asymptotic model.
    pub fn adversarial(&self, params: &AnalyticBranch, knowledge: &CMat) -> Result<BranchInput> {
        let m = self.dim();
        if params.mean.len() != m || params.cov.shape() != (m, m) || knowledge.shape() != self.c.shape() {
            return Err(Error::DimensionMismatch("adversary parameters do not match the branch".into()));
        }
        if params.mimic {
            return Ok(self.legitimate());
        }
        let d = knowledge - &self.c;
        Ok(BranchInput {
            weight: self.weight.clone(),
            cov: params.cov.clone(),
            offset: &params.mean - &self.predicted_output,
            mean_cov: hermitize(&sandwich(&d, &self.state_mean_cov)),
        })
    }
}

/// Innovation law `e ~ CN(offset, cov)` seen through weight `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchInput {
    pub weight: CMat,
    pub cov: CMat,
    pub offset: CVec,
    /// `E_`, used only by the asymptotic model.
    pub mean_cov: CMat,
}

impl BranchInput {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn gaussian_stats(&self) -> Result<BranchStats> {
        let zero = self.offset.iter().all(|z| z.re == 0.0 && z.im == 0.0);
        quadratic_moments(&self.weight, &self.cov, (!zero).then_some(&self.offset))
    }

    /// `tr(V(Ỹ + E_))`, `tr((V(Ỹ + E_))²)`.
    pub fn asymptotic_stats(&self) -> Result<BranchStats> {
        if self.mean_cov.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            return quadratic_moments(&self.weight, &self.cov, None);
        }
        quadratic_moments(&self.weight, &(&self.cov + &self.mean_cov), None)
    }
}

/// A branch reduced to what its acceptance model needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchModel {
    Disabled,
    ChiSquare { m: usize, lbar: f64, quad: f64 },
    Gaussian(BranchStats),
}

impl BranchModel {
    pub fn prepare(cfg: &MethodConfig, input: &BranchInput) -> Result<Self> {
        if input.dim() == 0 {
            return Ok(BranchModel::Disabled);
        }
        Ok(match cfg.method {
            Method::ChiSquare => BranchModel::ChiSquare {
                m: input.dim(),
                lbar: chi_square_lbar(&input.weight, &input.cov, cfg.alpha)?,
                quad: quad_form(&input.weight, &input.offset).max(0.0),
            },
            Method::Gaussian => BranchModel::Gaussian(input.gaussian_stats()?),
            Method::Asymptotic => BranchModel::Gaussian(input.asymptotic_stats()?),
        })
    }

    pub fn accept(&self, eta: f64) -> Result<f64> {
        match *self {
            BranchModel::Disabled => Ok(1.0),
            BranchModel::ChiSquare { m, lbar, quad } => chi_square_accept_prob(m, lbar, quad, eta),
            BranchModel::Gaussian(ref s) => Ok(gaussian_accept_prob(s, eta)),
        }
    }

    pub fn is_disabled(&self) -> bool {
        matches!(self, BranchModel::Disabled)
    }

    /// Rough magnitude of the statistic, used to scale threshold steps.
    pub fn scale(&self) -> f64 {
        match *self {
            BranchModel::Disabled => 1.0,
            BranchModel::ChiSquare { m, lbar, quad } => m as f64 * lbar + quad,
            BranchModel::Gaussian(s) => s.s_mean.abs() + s.s_var.sqrt(),
        }
        .max(f64::MIN_POSITIVE)
    }
}

/// Process and channel branch of one transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitterModel {
    pub process: BranchModel,
    pub channel: BranchModel,
}

impl TransmitterModel {
    pub fn prepare(cfg: &MethodConfig, process: &BranchInput, channel: &BranchInput) -> Result<Self> {
        Ok(Self { process: BranchModel::prepare(cfg, process)?, channel: BranchModel::prepare(cfg, channel)? })
    }

    pub fn branch(&self, i: usize) -> &BranchModel {
        if i == 0 {
            &self.process
        } else {
            &self.channel
        }
    }

    pub fn accept(&self, thr: &ThresholdPair) -> Result<f64> {
        Ok(self.process.accept(thr.eta_p)? * self.channel.accept(thr.eta_c)?)
    }
}

/// Acceptance models of the legitimate transmitter and both attackers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionModel {
    pub legitimate: TransmitterModel,
    pub attacker1: TransmitterModel,
    pub attacker2: TransmitterModel,
}

impl DecisionModel {
    pub fn attacker(&self, k: usize) -> &TransmitterModel {
        if k == 0 {
            &self.attacker1
        } else {
            &self.attacker2
        }
    }

    pub fn probabilities(&self, thr: &ThresholdPair) -> Result<DecisionProbabilities> {
        Ok(DecisionProbabilities {
            p_tn: Probability::new(self.legitimate.accept(thr)?)?,
            p_fn_1: Probability::new(self.attacker1.accept(thr)?)?,
            p_fn_2: Probability::new(self.attacker2.accept(thr)?)?,
        })
    }
}

/// Branch inputs `(process, channel)` of the three transmitters.
#[derive(Debug, Clone)]
pub struct DecisionInputs {
    pub legitimate: (BranchInput, BranchInput),
    pub attacker1: (BranchInput, BranchInput),
    pub attacker2: (BranchInput, BranchInput),
}

impl DecisionInputs {
    pub fn prepare(&self, cfg: &MethodConfig) -> Result<DecisionModel> {
        let p = |(a, b): &(BranchInput, BranchInput)| TransmitterModel::prepare(cfg, a, b);
        Ok(DecisionModel {
            legitimate: p(&self.legitimate)?,
            attacker1: p(&self.attacker1)?,
            attacker2: p(&self.attacker2)?,
        })
    }
}

pub fn decision_probabilities(
    cfg: &MethodConfig,
    thr: &ThresholdPair,
    inputs: &DecisionInputs,
) -> Result<DecisionProbabilities> {
    inputs.prepare(cfg)?.probabilities(thr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag};
    use num_complex::Complex64;

    #[test]
    fn statistic_and_tie_rule() {
        let e = CVec::from_vec(vec![Complex64::new(1.0, 1.0), c(0.0)]);
        assert_eq!(test_statistic(&e, &CMat::identity(2, 2)).unwrap(), 2.0);
        let thr = ThresholdPair::new(2.0, 1.0).unwrap();
        assert_eq!(decide(Some(2.0), Some(0.0), &thr), Hypothesis::H1);
        assert_eq!(decide(Some(1.9), Some(0.0), &thr), Hypothesis::H0);
        assert_eq!(decide(None, Some(0.5), &thr), Hypothesis::H0);
        assert!(ThresholdPair::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn lbar_examples() {
        let i2 = CMat::identity(2, 2);
        assert!((chi_square_lbar(&i2, &i2, 0.3).unwrap() - 1.0).abs() < 1e-15);
        assert!((chi_square_lbar(&i2, &diag(&[1.0, 4.0]), 0.5).unwrap() - 2.25).abs() < 1e-14);
        let cov = diag(&[3.0, 0.5]);
        let v = hermitian_inverse(&cov).unwrap();
        assert!((chi_square_lbar(&v, &cov, 0.5).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(chi_square_lbar(&i2, &CMat::zeros(2, 2), 0.5), Err(Error::DegenerateSpectrum));
    }

    #[test]
    fn chi_square_scalar_case() {
        assert_eq!(chi_square_accept_prob(3, 1.0, 0.5, 0.0).unwrap(), 0.0);
        let p = chi_square_accept_prob(1, 2.0, 0.0, 2.0 * 20f64.ln()).unwrap();
        assert!((p - 0.95).abs() < 1e-14);
        assert_eq!(chi_square_accept_prob(0, 1.0, 0.0, 0.0).unwrap(), 1.0);
        // the zero-offset path and the Marcum path agree at tiny offsets
        let a = chi_square_accept_prob(4, 1.3, 0.0, 5.0).unwrap();
        let b = chi_square_accept_prob(4, 1.3, 1e-14, 5.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gaussian_examples() {
        let s = quadratic_moments(&CMat::identity(3, 3), &CMat::identity(3, 3), None).unwrap();
        assert_eq!((s.s_mean, s.s_var), (3.0, 3.0));
        let d = CVec::from_vec(vec![c(1.0), Complex64::new(0.0, 2.0), c(0.0)]);
        let s = quadratic_moments(&CMat::identity(3, 3), &CMat::identity(3, 3), Some(&d)).unwrap();
        assert_eq!((s.s_mean, s.s_var), (8.0, 13.0));
        let st = BranchStats { m: 1, s_mean: 10.0, s_var: 1.0 };
        assert_eq!(gaussian_accept_prob(&st, 10.0), 0.5);
        assert!((gaussian_accept_prob(&st, 8.3551) - 0.05).abs() < 1e-4);
        let flat = BranchStats { m: 1, s_mean: 2.0, s_var: 0.0 };
        assert_eq!(gaussian_accept_prob(&flat, 2.0), 0.0);
        assert_eq!(gaussian_accept_prob(&flat, 2.5), 1.0);
    }

    #[test]
    fn asymptotic_scalar_zero_knowledge() {
        let input = BranchInput {
            weight: diag(&[1.0]),
            cov: diag(&[1.0]),
            offset: CVec::from_element(1, c(0.3)),
            mean_cov: diag(&[0.5]),
        };
        let s = input.asymptotic_stats().unwrap();
        assert_eq!((s.s_mean, s.s_var), (1.5, 2.25));
        let no_mean = BranchInput { mean_cov: diag(&[0.0]), offset: CVec::zeros(1), ..input };
        assert_eq!(no_mean.asymptotic_stats().unwrap(), no_mean.gaussian_stats().unwrap());
    }

    #[test]
    fn products_and_degenerate_thresholds() {
        let b = BranchInput {
            weight: CMat::identity(2, 2),
            cov: CMat::identity(2, 2),
            offset: CVec::zeros(2),
            mean_cov: CMat::zeros(2, 2),
        };
        let inputs = DecisionInputs {
            legitimate: (b.clone(), b.clone()),
            attacker1: (b.clone(), b.clone()),
            attacker2: (b.clone(), b.clone()),
        };
        for method in [Method::ChiSquare, Method::Gaussian, Method::Asymptotic] {
            let cfg = MethodConfig::new(method, 0.5).unwrap();
            let p = decision_probabilities(&cfg, &ThresholdPair::new(0.0, 0.0).unwrap(), &inputs).unwrap();
            assert_eq!((p.p_tn.value(), p.p_fn_1.value(), p.p_fn_2.value()), (0.0, 0.0, 0.0));
        }
        let cfg = MethodConfig::new(Method::Gaussian, 0.5).unwrap();
        let p = decision_probabilities(&cfg, &ThresholdPair::new(2.0, 2.0).unwrap(), &inputs).unwrap();
        assert_eq!(p.p_tn.value(), 0.25);
    }
}
