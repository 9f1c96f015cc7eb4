//! Continuous-time Gauss-Markov state-space models.
//!
//! A model is `dx/dt = A x + u`, `u ~ CN(0, U)` white, observed by sensor `g`
//! through `y = C_g x + n`, `n ~ CN(0, N)`. `A` must be diagonalizable and
//! stable. With `A = W Λ W⁻¹` and `Ũ = W⁻¹ U W⁻ᴴ`, the stationary covariance
//! is `X = W Ẍ Wᴴ` with `Ẍ_ij = −Ũ_ij / (λ_i + λ_j*)`, and the noise
//! accumulated over a step `dt` is `X − X^(dt)`, where
//! `X^(dt) = W (Ẍ_ij e^{(λ_i + λ_j*) dt}) Wᴴ`.

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{self, hermitize, is_psd, mul, sandwich, CMat, CVec, EigenDecomposition, Factor};
use crate::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-10;
const EIG_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    a: CMat,
    u: CMat,
    outputs: Vec<CMat>,
    noise: CMat,
    eig: EigenDecomposition,
    // Ẍ in modal coordinates
    modal_stationary: CMat,
    stationary: CMat,
    noise_factor: Factor,
}

/// State value at a time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    pub x: CVec,
    pub t: f64,
}

/// Exact one-step discretization for a fixed `dt`: `x' = Φ x + w`, `w ~ CN(0, Q_dt)`.
#[derive(Debug, Clone)]
pub struct Transition {
    pub dt: f64,
    pub phi: CMat,
    pub qdt: CMat,
}

/// A transition with its sampling factor cached, for repeated stepping.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub transition: Transition,
    factor: Factor,
}

fn check_psd(name: &'static str, m: &CMat) -> Result<()> {
    let scale = m.camax().max(1.0);
    if linalg::max_hermitian_defect(m) > HERMITIAN_TOL * scale || !is_psd(m, HERMITIAN_TOL) {
        return Err(Error::NotPsd { name });
    }
    Ok(())
}

// e^z − 1 without cancellation for small |z|
fn expm1_c(z: Complex64) -> Complex64 {
    let (s, co) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * co - 2.0 * half * half, z.re.exp() * s)
}

impl StateSpaceModel {
    pub fn new(a: CMat, u: CMat, outputs: Vec<CMat>, noise: CMat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(Error::DimensionMismatch(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if u.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("U must be {n}x{n}")));
        }
        let m = noise.nrows();
        if !noise.is_square() {
            return Err(Error::DimensionMismatch("N must be square".into()));
        }
        if outputs.is_empty() {
            return Err(Error::DimensionMismatch("at least one output matrix is required".into()));
        }
        for (g, cg) in outputs.iter().enumerate() {
            if cg.shape() != (m, n) {
                return Err(Error::DimensionMismatch(format!(
                    "C_{g} is {}x{}, expected {m}x{n}",
                    cg.nrows(),
                    cg.ncols()
                )));
            }
        }
        if a.iter().chain(u.iter()).chain(noise.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::DomainError("model matrices must be finite".into()));
        }
        check_psd("U", &u)?;
        check_psd("N", &noise)?;

        let eig = EigenDecomposition::new(&a, EIG_RESIDUAL_TOL)?;
        if let Some(l) = eig.values.iter().find(|l| l.re >= 0.0) {
            return Err(Error::Unstable { real_part: l.re });
        }
        let projected = sandwich(&eig.inverse, &u);
        let lam = &eig.values;
        let modal_stationary = CMat::from_fn(n, n, |i, j| -projected[(i, j)] / (lam[i] + lam[j].conj()));
        let stationary = hermitize(&sandwich(&eig.vectors, &modal_stationary));
        let noise = hermitize(&noise);
        let noise_factor = Factor::of_covariance(&noise)?;
        Ok(Self { a, u: hermitize(&u), outputs, noise, eig, modal_stationary, stationary, noise_factor })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.noise.nrows()
    }

    pub fn sensors(&self) -> usize {
        self.outputs.len()
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }

    pub fn u(&self) -> &CMat {
        &self.u
    }

    pub fn noise(&self) -> &CMat {
        &self.noise
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    pub fn output(&self, g: usize) -> Result<&CMat> {
        self.outputs.get(g).ok_or(Error::UnknownSensor { sensor: g, count: self.outputs.len() })
    }

    /// Stationary state covariance `X`, the solution of `A X + X Aᴴ + U = 0`.
    pub fn stationary_covariance(&self) -> &CMat {
        &self.stationary
    }

    /// Stationary covariance of sensor `g`'s measurement, `C_g X C_gᴴ + N`.
    pub fn output_covariance(&self, g: usize) -> Result<CMat> {
        let cg = self.output(g)?;
        Ok(hermitize(&(sandwich(cg, &self.stationary) + &self.noise)))
    }

    pub fn transition(&self, dt: f64) -> Result<Transition> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::DomainError(format!("time step must be finite and >= 0, got {dt}")));
        }
        let n = self.state_dim();
        let lam = &self.eig.values;
        let w = &self.eig.vectors;
        let decay = CMat::from_diagonal(&CVec::from_iterator(n, lam.iter().map(|l| (l * dt).exp())));
        let phi = mul(&mul(w, &decay), &self.eig.inverse);
        let modal_q =
            CMat::from_fn(n, n, |i, j| -self.modal_stationary[(i, j)] * expm1_c((lam[i] + lam[j].conj()) * dt));
        let qdt = hermitize(&sandwich(w, &modal_q));
        Ok(Transition { dt, phi, qdt })
    }

    pub fn propagator(&self, dt: f64) -> Result<Propagator> {
        let transition = self.transition(dt)?;
        let factor = Factor::of_covariance(&transition.qdt)?;
        Ok(Propagator { transition, factor })
    }

    /// Draws from the stationary distribution `CN(0, X)` at time `t`.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<StateSample> {
        let f = Factor::of_covariance(&self.stationary)?;
        Ok(StateSample { x: f.sample(rng), t })
    }

    pub fn sample_evolve<R: Rng + ?Sized>(&self, s: &StateSample, dt: f64, rng: &mut R) -> Result<StateSample> {
        Ok(self.propagator(dt)?.step(s, rng))
    }

    /// Noise-free part `C_g x` of a measurement.
    pub fn observe(&self, g: usize, x: &CVec) -> Result<CVec> {
        let cg = self.output(g)?;
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!("state has length {}", x.len())));
        }
        Ok(cg * x)
    }

    pub fn noise_factor(&self) -> &Factor {
        &self.noise_factor
    }

    /// `y = C_g x + n`, `n ~ CN(0, N)`.
    pub fn sample_output<R: Rng + ?Sized>(&self, g: usize, s: &StateSample, rng: &mut R) -> Result<CVec> {
        Ok(self.observe(g, &s.x)? + self.noise_factor.sample(rng))
    }
}

impl Propagator {
    pub fn step<R: Rng + ?Sized>(&self, s: &StateSample, rng: &mut R) -> StateSample {
        let x = &self.transition.phi * &s.x + self.factor.sample(rng);
        StateSample { x, t: s.t + self.transition.dt }
    }
}
