//! Kalman prediction/update of process and channel beliefs.
//!
//! Besides the usual estimate covariance `Ẑ`, each belief carries the covariance
//! `Ẑ_` of the estimate's own mean over realizations, which the asymptotic
//! approximation needs. It starts at zero, grows by `K E Kᴴ` on every update and
//! is propagated with `Φ Ẑ_ Φᴴ`. `Ẑ + Ẑ_` stays equal to the stationary covariance.

use crate::linalg::{hermitian_inverse, hermitize, mul, sandwich, CMat, CVec};
use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

/// Covariance update form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// `(I − K C) Ẑ`
    #[default]
    Standard,
    /// `(I − K C) Ẑ (I − K C)ᴴ + K N Kᴴ`
    Joseph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: CVec,
    pub cov: CMat,
    /// Covariance of `mean` itself across realizations.
    pub mean_cov: CMat,
    /// Time of the last authenticated update; `None` before any (stationary prior).
    pub t_last: Option<f64>,
    /// Time the moments refer to; `None` for the time-invariant stationary prior.
    pub valid_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub e: CVec,
    pub cov_e: CMat,
}

/// Innovation covariance `E = C Ẑ Cᴴ + N` and mean covariance `E_ = (C̃ − C) Ẑ_ (C̃ − C)ᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationStats {
    pub cov: CMat,
    pub mean_cov: CMat,
}

impl GaussianBelief {
    /// Belief before any packet: zero mean, stationary covariance, zero mean covariance.
    pub fn prior(model: &StateSpaceModel) -> Self {
        let n = model.state_dim();
        Self {
            mean: CVec::zeros(n),
            cov: model.stationary_covariance().clone(),
            mean_cov: CMat::zeros(n, n),
            t_last: None,
            valid_at: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn predict(&self, model: &StateSpaceModel, t: f64) -> Result<Self> {
        let Some(from) = self.valid_at else {
            return Ok(self.clone());
        };
        if let Some(last) = self.t_last {
            if t < last {
                return Err(Error::TimeReversal { t, t_last: last });
            }
        }
        if t < from {
            return Err(Error::TimeReversal { t, t_last: from });
        }
        if t == from {
            return Ok(self.clone());
        }
        let tr = model.transition(t - from)?;
        Ok(Self {
            mean: &tr.phi * &self.mean,
            cov: hermitize(&(sandwich(&tr.phi, &self.cov) + &tr.qdt)),
            mean_cov: hermitize(&sandwich(&tr.phi, &self.mean_cov)),
            t_last: self.t_last,
            valid_at: Some(t),
        })
    }

    /// Measurement update with sensor `g`'s output matrix and the model's noise.
    pub fn update(
        &self,
        model: &StateSpaceModel,
        g: usize,
        y: &CVec,
        t: f64,
        form: UpdateForm,
    ) -> Result<(Self, Innovation)> {
        let predicted = self.predict(model, t)?;
        predicted.update_with(model.output(g)?, model.noise(), y, t, form)
    }

    /// Measurement update with explicit output matrix and noise covariance; the
    /// belief must already be predicted to `t`.
    pub fn update_with(
        &self,
        c: &CMat,
        noise: &CMat,
        y: &CVec,
        t: f64,
        form: UpdateForm,
    ) -> Result<(Self, Innovation)> {
        let n = self.dim();
        if c.ncols() != n || c.nrows() != noise.nrows() || !noise.is_square() || y.len() != c.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "update with C {}x{}, N {}x{}, y {} on state {n}",
                c.nrows(),
                c.ncols(),
                noise.nrows(),
                noise.ncols(),
                y.len()
            )));
        }
        let cov_e = hermitize(&(sandwich(c, &self.cov) + noise));
        let gain = mul(&mul(&self.cov, &c.adjoint()), &hermitian_inverse(&cov_e)?);
        let e = y - c * &self.mean;
        let mean = &self.mean + &gain * &e;
        let i_kc = CMat::identity(n, n) - mul(&gain, c);
        let cov = match form {
            UpdateForm::Standard => hermitize(&mul(&i_kc, &self.cov)),
            UpdateForm::Joseph => hermitize(&(sandwich(&i_kc, &self.cov) + sandwich(&gain, noise))),
        };
        let mean_cov = hermitize(&(&self.mean_cov + sandwich(&gain, &cov_e)));
        Ok((Self { mean, cov, mean_cov, t_last: Some(t), valid_at: Some(t) }, Innovation { e, cov_e }))
    }

    /// Innovation moments for sensor `g` given the adversary's knowledge matrix `C̃`.
    pub fn innovation_stats(&self, model: &StateSpaceModel, g: usize, knowledge: &CMat) -> Result<InnovationStats> {
        let c = model.output(g)?;
        if knowledge.shape() != c.shape() {
            return Err(Error::DimensionMismatch(format!(
                "knowledge matrix is {}x{}, output matrix {}x{}",
                knowledge.nrows(),
                knowledge.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        let cov = hermitize(&(sandwich(c, &self.cov) + model.noise()));
        let d = knowledge - c;
        let mean_cov = hermitize(&sandwich(&d, &self.mean_cov));
        Ok(InnovationStats { cov, mean_cov })
    }
}
