//! Monte-Carlo harness: scenario construction, round-robin schedule and
//! per-instant empirical acceptance rates.
//!
//! Sensor `g` transmits at instants `g + nG` (one slot = 1.0). The first `G`
//! instants are logins: the packet is trusted and only updates the beliefs.
//! Every later instant predicts the beliefs, sets the thresholds, evaluates the
//! analytic probabilities, scores `packets_per_instant` fresh packets from each
//! transmitter against the same true states, authenticates one legitimate
//! packet and then advances the true process and channel states.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, replication, instant, purpose)`, so results do not depend on how
//! replications are spread over threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    generate_packet, Adversaries, AdversaryModel, BranchContext, Knowledge, MeasurementLaw, Origin,
};
use crate::authengine::{
    DecisionInputs, DecisionModel, DecisionProbabilities, Method, MethodConfig, PredictedBranch, ThresholdPair,
};
use crate::kalman::{GaussianBelief, UpdateForm};
use crate::linalg::{c, diag, CMat, CVec, Factor};
use crate::specfun::Probability;
use crate::statespace::StateSpaceModel;
use crate::threshold::{flags, optimize_chi_square, optimize_gaussian, OptimizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelStructure {
    /// `A_C = a_C I`, `U_C = −2 a_C I`.
    #[default]
    IdentityBased,
    /// `A_C = a_C diag(ä)`, `U_C = −2 a_C diag(ü)` with `ä ~ U[0.5, 1.5]`, `ü ~ U[0, 2]`.
    Generalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    #[default]
    Optimized,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of sensors `G`.
    pub sensors: usize,
    pub n_state_p: usize,
    /// Process measurement length; 0 authenticates on the channel only.
    pub m_p: usize,
    pub m_c: usize,
    /// Total instants including the `G` login instants.
    pub horizon: usize,
    pub packets_per_instant: usize,
    pub replications: usize,
    pub seed: u64,
    pub p_fn_target: f64,
    pub method: Method,
    pub alpha: f64,
    pub threshold_mode: ThresholdMode,
    /// Thresholds used in fixed mode.
    pub eta_p: f64,
    pub eta_c: f64,
    pub channel_structure: ChannelStructure,
    pub snr_db: f64,
    pub knowledge: Knowledge,
    /// Scales the attackers' spoofing covariances.
    pub attack_cov_scale: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Start each optimization from the sensor's previous thresholds.
    pub warm_start: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sensors: 3,
            n_state_p: 10,
            m_p: 4,
            m_c: 10,
            horizon: 100,
            packets_per_instant: 2000,
            replications: 1,
            seed: 1,
            p_fn_target: 0.05,
            method: Method::ChiSquare,
            alpha: 0.5,
            threshold_mode: ThresholdMode::Optimized,
            eta_p: 1.0,
            eta_c: 1.0,
            channel_structure: ChannelStructure::IdentityBased,
            snr_db: 10.0,
            knowledge: Knowledge::Zero,
            attack_cov_scale: 1.0,
            tol: 1e-8,
            max_iter: 500,
            warm_start: true,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sensors == 0 {
            return bad("sensors must be >= 1".into());
        }
        if self.n_state_p == 0 || self.m_c == 0 {
            return bad("n_state_p and m_c must be >= 1".into());
        }
        if self.horizon < self.sensors {
            return bad(format!("horizon {} shorter than the {} login instants", self.horizon, self.sensors));
        }
        if self.packets_per_instant == 0 || self.replications == 0 {
            return bad("packets_per_instant and replications must be >= 1".into());
        }
        if !(self.p_fn_target > 0.0 && self.p_fn_target < 1.0) {
            return bad(format!("p_fn_target {} must lie in (0, 1)", self.p_fn_target));
        }
        MethodConfig::new(self.method, self.alpha)?;
        if !(self.eta_p >= 0.0) || !(self.eta_c >= 0.0) {
            return bad("fixed thresholds must be >= 0".into());
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        if !(self.attack_cov_scale >= 0.0) || !self.attack_cov_scale.is_finite() {
            return bad("attack_cov_scale must be finite and >= 0".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol must be > 0 and max_iter >= 1".into());
        }
        Ok(())
    }

    pub fn method_config(&self) -> Result<MethodConfig> {
        MethodConfig::new(self.method, self.alpha)
    }

    fn optimizer(&self, warm_start: Option<ThresholdPair>) -> Result<OptimizerConfig> {
        Ok(OptimizerConfig {
            p_fn_target: Probability::new(self.p_fn_target)?,
            step_matrix: None,
            tol: self.tol,
            max_iter: self.max_iter,
            warm_start: if self.warm_start { warm_start } else { None },
        })
    }
}

/// Models and attackers of one replication. The channel model carries one
/// identity output per sensor; each sensor has its own channel state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub process: StateSpaceModel,
    pub channel: StateSpaceModel,
    pub adversaries: Adversaries,
}

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.random_range(lo..hi)))
}

pub fn build_scenario<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;
    let g = cfg.sensors as f64;
    let n = cfg.n_state_p;

    let a_p: Vec<f64> = (0..n).map(|_| -(0.2 / g) * rng.random_range(0.5..1.0)).collect();
    let u_root = uniform_matrix(n, n, -1.0, 1.0, rng);
    let u_p = (&u_root * u_root.adjoint()).scale(0.2 / g);
    let c_p: Vec<CMat> = (0..cfg.sensors).map(|_| uniform_matrix(cfg.m_p, n, 0.0, 1.0, rng)).collect();
    let n_root = uniform_matrix(cfg.m_p, cfg.m_p, -1.0, 1.0, rng);
    let n_p = (&n_root * n_root.adjoint()).scale(0.01);
    let process = StateSpaceModel::new(diag(&a_p), u_p, c_p, n_p)?;

    let a_c = -(2f64.ln()) * 1e-2 / g;
    let m = cfg.m_c;
    let (decay, drive): (Vec<f64>, Vec<f64>) = match cfg.channel_structure {
        ChannelStructure::IdentityBased => (vec![1.0; m], vec![1.0; m]),
        ChannelStructure::Generalized => {
            let a: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
            let u: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
            (a, u)
        }
    };
    let a_mat = diag(&decay.iter().map(|x| a_c * x).collect::<Vec<_>>());
    let u_mat = diag(&drive.iter().map(|x| -2.0 * a_c * x).collect::<Vec<_>>());
    let outputs = vec![CMat::identity(m, m); cfg.sensors];
    let noiseless = StateSpaceModel::new(a_mat.clone(), u_mat.clone(), outputs.clone(), CMat::zeros(m, m))?;
    let power = noiseless.output_covariance(0)?;
    let snr = 10f64.powf(-cfg.snr_db / 10.0);
    let n_c = diag(&power.diagonal().iter().map(|p| snr * p.re).collect::<Vec<_>>());
    let channel = StateSpaceModel::new(a_mat, u_mat, outputs, n_c)?;

    let adversaries = Adversaries {
        infiltrated: AdversaryModel::infiltrated_sensor(&process, cfg.knowledge, cfg.attack_cov_scale)?,
        device: AdversaryModel::device(&channel, cfg.knowledge, cfg.attack_cov_scale)?,
    };
    Ok(Scenario { process, channel, adversaries })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, key...)`.
pub fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for &k in key {
        h = splitmix(h ^ splitmix(k ^ 0xD6E8_FEB8_6659_FD93));
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        h = splitmix(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

const SETUP: u64 = u64::MAX;
const TAG_BUILD: u64 = 0;
const TAG_INIT: u64 = 1;
const TAG_UPDATE: u64 = 8;
const TAG_EVOLVE: u64 = 9;

fn origin_tag(o: Origin) -> u64 {
    16 + o.index() as u64
}

/// Outcome of one authenticated instant.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantRecord {
    pub replication: usize,
    pub t: f64,
    pub sensor: usize,
    pub thresholds: ThresholdPair,
    pub analytic: DecisionProbabilities,
    /// Accepted packets per origin (legitimate, attacker 1, attacker 2).
    pub accepted: [u64; 3],
    /// Packets scored per origin.
    pub packets: u64,
    pub opt_iters: usize,
    pub opt_flags: u32,
    /// Accepted packets per origin under each extra threshold pair.
    pub grid_accepted: Vec<[u64; 3]>,
}

impl InstantRecord {
    /// Empirical `(P_TN, P_FN¹, P_FN²)`.
    pub fn empirical(&self) -> [f64; 3] {
        self.accepted.map(|a| a as f64 / self.packets as f64)
    }

    pub fn analytic_array(&self) -> [f64; 3] {
        [self.analytic.p_tn.value(), self.analytic.p_fn_1.value(), self.analytic.p_fn_2.value()]
    }

    pub fn grid_empirical(&self, i: usize) -> [f64; 3] {
        self.grid_accepted[i].map(|a| a as f64 / self.packets as f64)
    }
}

fn standard_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Statistic `s = ‖R(y − C ẑ)‖²` of one branch with `y` drawn from its law,
/// written as `‖b + G z‖²` with `z ~ CN(0, I)`.
struct WhitenedBranch {
    offset: Vec<Complex64>,
    factor: Factor,
}

impl WhitenedBranch {
    fn new(root: &Factor, law: &MeasurementLaw, predicted: &CVec) -> Self {
        Self {
            offset: root.apply(&(&law.mean - predicted)).iter().copied().collect(),
            factor: root.compose(&law.factor),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut CVec) -> f64 {
        match &self.factor {
            Factor::Diagonal(d) => self.offset.iter().zip(d).map(|(b, s)| (b + standard_cn(rng) * *s).norm_sqr()).sum(),
            Factor::Dense(g) => {
                for v in z.iter_mut() {
                    *v = standard_cn(rng);
                }
                (g * &*z).iter().zip(&self.offset).map(|(a, b)| (a + b).norm_sqr()).sum()
            }
        }
    }
}

struct Replication<'a> {
    cfg: &'a ScenarioConfig,
    rep: u64,
    method: MethodConfig,
    grid: &'a [ThresholdPair],
    scenario: Scenario,
    last_thresholds: Vec<Option<ThresholdPair>>,
}

impl Replication<'_> {
    fn decision_model(
        &self,
        ctx_p: &BranchContext,
        ctx_c: &BranchContext,
        pb: (&PredictedBranch, &PredictedBranch),
    ) -> Result<DecisionModel> {
        let adv = &self.scenario.adversaries;
        let g = ctx_p.sensor;
        let attacker = |a: &AdversaryModel| -> Result<_> {
            let (ap, ac) = a.analytic_params(ctx_p, ctx_c)?;
            Ok((
                pb.0.adversarial(&ap, &a.knowledge_matrix(&self.scenario.process, g)?)?,
                pb.1.adversarial(&ac, &a.knowledge_matrix(&self.scenario.channel, g)?)?,
            ))
        };
        let inputs = DecisionInputs {
            legitimate: (pb.0.legitimate(), pb.1.legitimate()),
            attacker1: attacker(&adv.infiltrated)?,
            attacker2: attacker(&adv.device)?,
        };
        inputs.prepare(&self.method)
    }

    fn thresholds(&mut self, model: &DecisionModel, g: usize) -> Result<(ThresholdPair, usize, u32)> {
        if self.cfg.threshold_mode == ThresholdMode::Fixed {
            return Ok((ThresholdPair::new(self.cfg.eta_p, self.cfg.eta_c)?, 0, 0));
        }
        let previous = self.last_thresholds[g];
        let ocfg = self.cfg.optimizer(previous)?;
        let outcome = match self.method.method {
            Method::ChiSquare => optimize_chi_square(&ocfg, model),
            Method::Gaussian | Method::Asymptotic => optimize_gaussian(&ocfg, model),
        };
        let (thr, iters, mut fl) = match outcome {
            Ok(o) if o.converged() => (o.thresholds, o.iterations, o.flags),
            Ok(o) => (previous.unwrap_or(o.thresholds), o.iterations, o.flags | flags::FALLBACK),
            Err(e) => match previous {
                Some(p) => (p, 0, flags::NO_CONVERGENCE | flags::FALLBACK),
                None => return Err(e),
            },
        };
        if previous.is_none() {
            fl &= !flags::FALLBACK;
        }
        self.last_thresholds[g] = Some(thr);
        Ok((thr, iters, fl))
    }

    fn evaluate(&mut self, ti: usize, ctx_p: &BranchContext, ctx_c: &BranchContext) -> Result<InstantRecord> {
        let g = ctx_p.sensor;
        let pb_p = PredictedBranch::new(ctx_p.model, ctx_p.prediction, g)?;
        let pb_c = PredictedBranch::new(ctx_c.model, ctx_c.prediction, g)?;
        let model = self.decision_model(ctx_p, ctx_c, (&pb_p, &pb_c))?;
        let (thr, opt_iters, opt_flags) = self.thresholds(&model, g)?;
        let analytic = model.probabilities(&thr)?;

        let root_p = Factor::of_weight(&pb_p.weight)?;
        let root_c = Factor::of_weight(&pb_c.weight)?;
        let n = self.cfg.packets_per_instant;
        let mut accepted = [0u64; 3];
        let mut grid_accepted = vec![[0u64; 3]; self.grid.len()];
        let mut zp = CVec::zeros(pb_p.dim());
        let mut zc = CVec::zeros(pb_c.dim());
        let mut stats = Vec::with_capacity(if self.grid.is_empty() { 0 } else { n });
        for origin in Origin::ALL {
            let (law_p, law_c) = self.scenario.adversaries.laws(origin, ctx_p, ctx_c)?;
            let wp = (pb_p.dim() > 0).then(|| WhitenedBranch::new(&root_p, &law_p, &pb_p.predicted_output));
            let wc = (pb_c.dim() > 0).then(|| WhitenedBranch::new(&root_c, &law_c, &pb_c.predicted_output));
            let mut rng = stream(self.cfg.seed, &[self.rep, ti as u64, origin_tag(origin)]);
            let k = origin.index();
            stats.clear();
            for _ in 0..n {
                let s_p = wp.as_ref().map(|w| w.draw(&mut rng, &mut zp));
                let s_c = wc.as_ref().map(|w| w.draw(&mut rng, &mut zc));
                if accepts(s_p, s_c, &thr) {
                    accepted[k] += 1;
                }
                if !self.grid.is_empty() {
                    stats.push((s_p, s_c));
                }
            }
            for (counts, pair) in grid_accepted.iter_mut().zip(self.grid) {
                counts[k] = stats.iter().filter(|(p, c)| accepts(*p, *c, pair)).count() as u64;
            }
        }
        Ok(InstantRecord {
            replication: self.rep as usize,
            t: ti as f64,
            sensor: g,
            thresholds: thr,
            analytic,
            accepted,
            packets: n as u64,
            opt_iters,
            opt_flags,
            grid_accepted,
        })
    }

    fn run(mut self) -> Result<Vec<InstantRecord>> {
        let cfg = self.cfg;
        let (seed, rep) = (cfg.seed, self.rep);
        let process = self.scenario.process.clone();
        let channel = self.scenario.channel.clone();
        let adversaries = self.scenario.adversaries.clone();

        let mut init = stream(seed, &[rep, SETUP, TAG_INIT]);
        let mut x_p = process.sample_stationary(0.0, &mut init)?;
        let mut x_c =
            (0..cfg.sensors).map(|_| channel.sample_stationary(0.0, &mut init)).collect::<Result<Vec<_>>>()?;
        let step_p = process.propagator(1.0)?;
        let step_c = channel.propagator(1.0)?;
        let mut belief_p = GaussianBelief::prior(&process);
        let mut belief_c = vec![GaussianBelief::prior(&channel); cfg.sensors];

        let mut records = Vec::with_capacity(cfg.horizon - cfg.sensors);
        for ti in 0..cfg.horizon {
            let t = ti as f64;
            let g = ti % cfg.sensors;
            let pred_p = belief_p.predict(&process, t)?;
            let pred_c = belief_c[g].predict(&channel, t)?;
            let ctx_p = BranchContext { model: &process, state: &x_p.x, prediction: &pred_p, sensor: g };
            let ctx_c = BranchContext { model: &channel, state: &x_c[g].x, prediction: &pred_c, sensor: g };
            if ti >= cfg.sensors {
                records.push(self.evaluate(ti, &ctx_p, &ctx_c)?);
            }

            let mut rng = stream(seed, &[rep, ti as u64, TAG_UPDATE]);
            let packet = generate_packet(Origin::Legitimate, &adversaries, &ctx_p, &ctx_c, t, &mut rng)?;
            belief_p = pred_p.update_with(process.output(g)?, process.noise(), &packet.y_p, t, UpdateForm::Standard)?.0;
            belief_c[g] =
                pred_c.update_with(channel.output(g)?, channel.noise(), &packet.y_c, t, UpdateForm::Standard)?.0;

            let mut rng = stream(seed, &[rep, ti as u64, TAG_EVOLVE]);
            x_p = step_p.step(&x_p, &mut rng);
            for x in x_c.iter_mut() {
                *x = step_c.step(x, &mut rng);
            }
        }
        Ok(records)
    }
}

fn accepts(s_p: Option<f64>, s_c: Option<f64>, thr: &ThresholdPair) -> bool {
    s_p.is_none_or(|s| s < thr.eta_p) && s_c.is_none_or(|s| s < thr.eta_c)
}

/// Runs all replications; records are ordered by replication, then time.
pub fn run(cfg: &ScenarioConfig) -> Result<Vec<InstantRecord>> {
    run_with_grid(cfg, &[])
}

/// Like [`run`], additionally counting acceptances under every pair in `grid`
/// on the same packets.
pub fn run_with_grid(cfg: &ScenarioConfig, grid: &[ThresholdPair]) -> Result<Vec<InstantRecord>> {
    cfg.validate()?;
    let method = cfg.method_config()?;
    let per_rep = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let scenario = build_scenario(cfg, &mut stream(cfg.seed, &[rep, SETUP, TAG_BUILD]))?;
            Replication { cfg, rep, method, grid, scenario, last_thresholds: vec![None; cfg.sensors] }.run()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Scenario of replication `rep`, as used by [`run`].
pub fn replication_scenario(cfg: &ScenarioConfig, rep: u64) -> Result<Scenario> {
    build_scenario(cfg, &mut stream(cfg.seed, &[rep, SETUP, TAG_BUILD]))
}

/// Right-continuous empirical CDF as `(x, F(x))` at each distinct value.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::DomainError("CDF input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    Ok(out)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
