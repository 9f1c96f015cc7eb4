//! Attacker models and packet generation.
//!
//! Attacker 1 is an infiltrated sensor node: its channel is the legitimate one,
//! its process value is drawn independently of the true state. Attacker 2 is an
//! adversarial device in the environment: it mimics the process value from the
//! true state but its channel is an independent draw from the stationary
//! channel output distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kalman::GaussianBelief;
use crate::linalg::{hermitize, is_psd, sandwich, CMat, CVec, Factor};
use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Legitimate,
    /// Infiltrated sensor node.
    Attacker1,
    /// Adversarial device in the environment.
    Attacker2,
}

impl Origin {
    pub const ALL: [Origin; 3] = [Origin::Legitimate, Origin::Attacker1, Origin::Attacker2];

    pub fn index(self) -> usize {
        match self {
            Origin::Legitimate => 0,
            Origin::Attacker1 => 1,
            Origin::Attacker2 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackerKind {
    InfiltratedSensor,
    Device,
}

/// What the adversary knows about the fusion center's prediction, `C̃ ∈ {0, C}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knowledge {
    #[default]
    Zero,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Process,
    Channel,
}

/// Distribution `y ~ CN(mean, F Fᴴ)` of one measurement vector.
#[derive(Debug, Clone)]
pub struct MeasurementLaw {
    pub mean: CVec,
    pub factor: Factor,
}

impl MeasurementLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        &self.mean + self.factor.sample(rng)
    }
}

/// Everything a branch generator may condition on at one instant.
#[derive(Debug, Clone, Copy)]
pub struct BranchContext<'a> {
    pub model: &'a StateSpaceModel,
    /// True state at the packet time.
    pub state: &'a CVec,
    /// Fusion-center belief predicted to the packet time.
    pub prediction: &'a GaussianBelief,
    pub sensor: usize,
}

impl BranchContext<'_> {
    pub fn legitimate_law(&self) -> Result<MeasurementLaw> {
        Ok(MeasurementLaw {
            mean: self.model.observe(self.sensor, self.state)?,
            factor: self.model.noise_factor().clone(),
        })
    }

    fn predicted_output(&self) -> Result<CVec> {
        self.model.observe(self.sensor, &self.prediction.mean)
    }
}

/// Mean of a spoofed measurement.
#[derive(Debug, Clone, PartialEq)]
pub enum SpoofMean {
    Zero,
    /// `C ẑ(t|t')`: the adversary knows the fusion center's prediction.
    Prediction,
    /// Per-sensor constant means.
    Fixed(Vec<CVec>),
}

#[derive(Debug, Clone)]
pub enum BranchAttack {
    /// Generated exactly like a legitimate measurement from the true state.
    Mimic,
    Spoof {
        mean: SpoofMean,
        cov: Vec<CMat>,
        factors: Vec<Factor>,
    },
}

impl BranchAttack {
    /// Spoofed measurement with the stationary output covariance `s·(C_g X C_gᴴ + N)` per sensor.
    pub fn stationary_spoof(model: &StateSpaceModel, mean: SpoofMean, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidConfig(format!("covariance scale {scale} must be finite and >= 0")));
        }
        let cov = (0..model.sensors())
            .map(|g| model.output_covariance(g).map(|c| c.scale(scale)))
            .collect::<Result<Vec<_>>>()?;
        Self::custom_spoof(model, mean, cov)
    }

    pub fn custom_spoof(model: &StateSpaceModel, mean: SpoofMean, cov: Vec<CMat>) -> Result<Self> {
        let m = model.output_dim();
        if cov.len() != model.sensors() {
            return Err(Error::DimensionMismatch(format!(
                "{} spoof covariances for {} sensors",
                cov.len(),
                model.sensors()
            )));
        }
        if let SpoofMean::Fixed(means) = &mean {
            if means.len() != model.sensors() || means.iter().any(|v| v.len() != m) {
                return Err(Error::DimensionMismatch("spoof means must be one M-vector per sensor".into()));
            }
        }
        let mut factors = Vec::with_capacity(cov.len());
        let mut herm = Vec::with_capacity(cov.len());
        for c in cov {
            if c.shape() != (m, m) || !is_psd(&c, 1e-10) {
                return Err(Error::NotPsd { name: "spoof covariance" });
            }
            let c = hermitize(&c);
            factors.push(Factor::of_covariance(&c)?);
            herm.push(c);
        }
        Ok(BranchAttack::Spoof { mean, cov: herm, factors })
    }

    pub fn law(&self, ctx: &BranchContext) -> Result<MeasurementLaw> {
        match self {
            BranchAttack::Mimic => ctx.legitimate_law(),
            BranchAttack::Spoof { mean, factors, .. } => {
                let factor = factors
                    .get(ctx.sensor)
                    .ok_or(Error::UnknownSensor { sensor: ctx.sensor, count: factors.len() })?
                    .clone();
                Ok(MeasurementLaw { mean: spoof_mean(mean, ctx)?, factor })
            }
        }
    }

    /// Mean `ỹ` and covariance `Ỹ` of the branch as seen by the analysis.
    ///
    /// A mimicking branch reports the legitimate predictive law, mean `C ẑ`
    /// and covariance `C Ẑ Cᴴ + N`, so its innovation mean is zero.
    pub fn analytic(&self, ctx: &BranchContext) -> Result<AnalyticBranch> {
        match self {
            BranchAttack::Mimic => {
                let c = ctx.model.output(ctx.sensor)?;
                Ok(AnalyticBranch {
                    mean: ctx.predicted_output()?,
                    cov: hermitize(&(sandwich(c, &ctx.prediction.cov) + ctx.model.noise())),
                    mimic: true,
                })
            }
            BranchAttack::Spoof { mean, cov, .. } => Ok(AnalyticBranch {
                mean: spoof_mean(mean, ctx)?,
                cov: cov.get(ctx.sensor).ok_or(Error::UnknownSensor { sensor: ctx.sensor, count: cov.len() })?.clone(),
                mimic: false,
            }),
        }
    }
}

fn spoof_mean(mean: &SpoofMean, ctx: &BranchContext) -> Result<CVec> {
    let m = ctx.model.output_dim();
    Ok(match mean {
        SpoofMean::Zero => {
            ctx.model.output(ctx.sensor)?;
            CVec::zeros(m)
        }
        SpoofMean::Prediction => ctx.predicted_output()?,
        SpoofMean::Fixed(v) => {
            v.get(ctx.sensor).ok_or(Error::UnknownSensor { sensor: ctx.sensor, count: v.len() })?.clone()
        }
    })
}

/// `(ỹ, Ỹ)` for one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticBranch {
    pub mean: CVec,
    pub cov: CMat,
    pub mimic: bool,
}

#[derive(Debug, Clone)]
pub struct AdversaryModel {
    pub kind: AttackerKind,
    pub process: BranchAttack,
    pub channel: BranchAttack,
    pub knowledge: Knowledge,
}

impl AdversaryModel {
    /// Default infiltrated sensor: legitimate channel, process value
    /// `~ CN(ỹ, s·(C X_P Cᴴ + N_P))` with `ỹ = 0` (zero knowledge) or `C ẑ_P` (full).
    pub fn infiltrated_sensor(process: &StateSpaceModel, knowledge: Knowledge, cov_scale: f64) -> Result<Self> {
        Ok(Self {
            kind: AttackerKind::InfiltratedSensor,
            process: BranchAttack::stationary_spoof(process, mean_for(knowledge), cov_scale)?,
            channel: BranchAttack::Mimic,
            knowledge,
        })
    }

    /// Default adversarial device: mimicked process value, channel
    /// `~ CN(ỹ, s·(C X_C Cᴴ + N_C))`.
    pub fn device(channel: &StateSpaceModel, knowledge: Knowledge, cov_scale: f64) -> Result<Self> {
        Ok(Self {
            kind: AttackerKind::Device,
            process: BranchAttack::Mimic,
            channel: BranchAttack::stationary_spoof(channel, mean_for(knowledge), cov_scale)?,
            knowledge,
        })
    }

    pub fn branch(&self, branch: Branch) -> &BranchAttack {
        match branch {
            Branch::Process => &self.process,
            Branch::Channel => &self.channel,
        }
    }

    /// Knowledge matrix `C̃` for sensor `g` on the given branch.
    pub fn knowledge_matrix(&self, model: &StateSpaceModel, g: usize) -> Result<CMat> {
        let c = model.output(g)?;
        Ok(match self.knowledge {
            Knowledge::Zero => CMat::zeros(c.nrows(), c.ncols()),
            Knowledge::Full => c.clone(),
        })
    }

    /// `(ỹ_P, Ỹ_P, ỹ_C, Ỹ_C)` given beliefs predicted to the packet time.
    pub fn analytic_params(
        &self,
        process: &BranchContext,
        channel: &BranchContext,
    ) -> Result<(AnalyticBranch, AnalyticBranch)> {
        Ok((self.process.analytic(process)?, self.channel.analytic(channel)?))
    }
}

fn mean_for(knowledge: Knowledge) -> SpoofMean {
    match knowledge {
        Knowledge::Zero => SpoofMean::Zero,
        Knowledge::Full => SpoofMean::Prediction,
    }
}

/// The two attacker classes of a scenario.
#[derive(Debug, Clone)]
pub struct Adversaries {
    pub infiltrated: AdversaryModel,
    pub device: AdversaryModel,
}

impl Adversaries {
    pub fn for_origin(&self, origin: Origin) -> Option<&AdversaryModel> {
        match origin {
            Origin::Legitimate => None,
            Origin::Attacker1 => Some(&self.infiltrated),
            Origin::Attacker2 => Some(&self.device),
        }
    }

    /// Measurement laws `(process, channel)` for a transmitter.
    pub fn laws(
        &self,
        origin: Origin,
        process: &BranchContext,
        channel: &BranchContext,
    ) -> Result<(MeasurementLaw, MeasurementLaw)> {
        match self.for_origin(origin) {
            None => Ok((process.legitimate_law()?, channel.legitimate_law()?)),
            Some(adv) => Ok((adv.process.law(process)?, adv.channel.law(channel)?)),
        }
    }
}

/// One received transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub sensor: usize,
    pub t: f64,
    pub y_p: CVec,
    pub y_c: CVec,
    pub origin: Origin,
}

pub fn generate_packet<R: Rng + ?Sized>(
    origin: Origin,
    adversaries: &Adversaries,
    process: &BranchContext,
    channel: &BranchContext,
    t: f64,
    rng: &mut R,
) -> Result<Packet> {
    if process.sensor != channel.sensor {
        return Err(Error::DimensionMismatch("process and channel contexts refer to different sensors".into()));
    }
    let (law_p, law_c) = adversaries.laws(origin, process, channel)?;
    Ok(Packet { sensor: channel.sensor, t, y_p: law_p.sample(rng), y_c: law_c.sample(rng), origin })
}
