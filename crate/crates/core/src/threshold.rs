//! Threshold optimization for a constant security level.
//!
//! Attacker 1 is constrained through `η_P` and attacker 2 through `η_C`. The
//! chi-square model is solved with the gradient iteration
//! `η ← η − B (P_FN¹ − P*, P_FN² − P*)`; the Gaussian models with the fixed
//! point `η_k = s̃_k − √S̃_k · Q⁻¹(P* / P_cross)`.

use serde::{Deserialize, Serialize};

use crate::authengine::{BranchModel, DecisionModel, ThresholdPair};
use crate::specfun::{gauss_q_inv, marcum_q_inv_b, Probability};
use crate::{Error, Result};

pub mod flags {
    /// `P*/P_cross ≥ 1` was clamped before `Q⁻¹`.
    pub const CLAMPED_ARGUMENT: u32 = 1;
    /// A threshold was clamped at zero.
    pub const CLAMPED_THRESHOLD: u32 = 2;
    pub const NO_CONVERGENCE: u32 = 4;
    /// An attacker cannot reach the target at any threshold.
    pub const NON_RESPONSIVE: u32 = 8;
    /// The optimizer failed and the previous thresholds were reused.
    pub const FALLBACK: u32 = 16;

    const NAMES: [(u32, &str); 5] = [
        (CLAMPED_ARGUMENT, "clamped-arg"),
        (CLAMPED_THRESHOLD, "clamped-eta"),
        (NO_CONVERGENCE, "no-convergence"),
        (NON_RESPONSIVE, "non-responsive"),
        (FALLBACK, "fallback"),
    ];

    /// `"ok"` or the set flags joined by `+`.
    pub fn describe(f: u32) -> String {
        if f == 0 {
            return "ok".into();
        }
        NAMES.iter().filter(|(b, _)| f & b != 0).map(|(_, n)| *n).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub p_fn_target: Probability,
    /// Fixed step matrix `B`; `None` uses a diagonal Newton step refreshed each iteration.
    pub step_matrix: Option<[[f64; 2]; 2]>,
    pub tol: f64,
    pub max_iter: usize,
    /// Previous solution; only the gradient method uses it.
    pub warm_start: Option<ThresholdPair>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            p_fn_target: Probability::new(0.05).unwrap(),
            step_matrix: None,
            tol: 1e-8,
            max_iter: 500,
            warm_start: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.p_fn_target.value();
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidConfig(format!("P_FN target {p} must lie in (0, 1)")));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig("tol must be > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOutcome {
    pub thresholds: ThresholdPair,
    pub iterations: usize,
    /// Analytic `(P_FN¹, P_FN²)` at `thresholds`.
    pub achieved: [f64; 2],
    pub flags: u32,
}

impl OptimizeOutcome {
    pub fn converged(&self) -> bool {
        self.flags & (flags::NO_CONVERGENCE | flags::NON_RESPONSIVE) == 0
    }

    /// Turns a failed outcome into the corresponding error.
    pub fn into_result(self, target: f64) -> Result<Self> {
        if self.flags & flags::NON_RESPONSIVE != 0 {
            let k = (0..2).find(|&k| self.achieved[k] < target).unwrap_or(0);
            return Err(Error::NonResponsive { attacker: k as u8 + 1 });
        }
        if self.flags & flags::NO_CONVERGENCE != 0 {
            let residual = self.achieved.iter().map(|p| (p - target).abs()).fold(0.0, f64::max);
            return Err(Error::NoConvergence { iterations: self.iterations, residual });
        }
        Ok(self)
    }
}

/// Attackers whose constraining branch exists (attacker 1 → process, attacker 2 → channel).
pub fn constrained(model: &DecisionModel) -> [bool; 2] {
    [0, 1].map(|k| !model.attacker(k).branch(k).is_disabled())
}

fn p_fn(model: &DecisionModel, thr: &ThresholdPair) -> Result<[f64; 2]> {
    Ok([model.attacker1.accept(thr)?, model.attacker2.accept(thr)?])
}

/// Threshold at which a single branch accepts with probability `p`.
fn branch_inverse(branch: &BranchModel, p: f64) -> Result<f64> {
    match *branch {
        BranchModel::Disabled => Ok(0.0),
        BranchModel::ChiSquare { m, lbar, quad } => {
            let m = u32::try_from(m).map_err(|_| Error::DomainError("branch dimension too large".into()))?;
            let b = marcum_q_inv_b(m, (2.0 * quad / lbar).sqrt(), 1.0 - p)?;
            Ok(0.5 * lbar * b * b)
        }
        BranchModel::Gaussian(s) => Ok((s.s_mean - s.s_var.sqrt() * gauss_q_inv(p)?).max(0.0)),
    }
}

/// Acceptance of each attacker's non-constraining branch.
fn cross_factors(model: &DecisionModel, thr: &ThresholdPair) -> Result<[f64; 2]> {
    Ok([model.attacker1.channel.accept(thr.eta_c)?, model.attacker2.process.accept(thr.eta_p)?])
}

fn merit(r: &[f64; 2], active: &[bool; 2]) -> f64 {
    (0..2).filter(|&k| active[k]).map(|k| r[k].abs()).fold(0.0, f64::max)
}

/// Gradient iteration on the analytic model, usually with chi-square branches.
pub fn optimize_chi_square(cfg: &OptimizerConfig, model: &DecisionModel) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let target = cfg.p_fn_target.value();
    let active = constrained(model);
    let mut out_flags = 0;

    // Start from the single-branch inverse. A warm start also tries the previous
    // thresholds and the inverse corrected by the cross factors they imply.
    let inverse_start = |cross: [f64; 2]| -> Result<ThresholdPair> {
        let mut e = ThresholdPair { eta_p: 0.0, eta_c: 0.0 };
        for k in 0..2 {
            if active[k] {
                let p = if cross[k] > target { target / cross[k] } else { target };
                e.set(k, branch_inverse(model.attacker(k).branch(k), p)?);
            }
        }
        Ok(e)
    };
    let mut candidates = Vec::with_capacity(3);
    if let Some(w) = cfg.warm_start {
        candidates.push(w);
        candidates.push(inverse_start(cross_factors(model, &w)?)?);
    }
    candidates.push(inverse_start([1.0, 1.0])?);
    let mut eta = candidates[0];
    let mut best = f64::INFINITY;
    for mut cand in candidates {
        for k in 0..2 {
            if !active[k] {
                cand.set(k, 0.0);
            }
        }
        let e = merit(&p_fn(model, &cand)?.map(|p| p - target), &active);
        if e < best {
            best = e;
            eta = cand;
        }
        if e <= cfg.tol {
            break;
        }
    }

    // the target must be reachable by opening the constraining threshold
    for k in 0..2 {
        if active[k] {
            let mut open = eta;
            open.set(k, f64::INFINITY);
            if p_fn(model, &open)?[k] < target - cfg.tol {
                out_flags |= flags::NON_RESPONSIVE;
            }
        }
    }
    let scales = [0, 1].map(|k| model.attacker(k).branch(k).scale());

    let mut r = p_fn(model, &eta)?.map(|p| p - target);
    let mut err = merit(&r, &active);
    let mut iterations = 1;
    while err > cfg.tol && out_flags & flags::NON_RESPONSIVE == 0 {
        if iterations >= cfg.max_iter {
            out_flags |= flags::NO_CONVERGENCE;
            break;
        }
        iterations += 1;

        if let Some(b) = cfg.step_matrix {
            let mut next = eta;
            for k in 0..2 {
                if active[k] {
                    let v = eta.get(k) - (b[k][0] * r[0] + b[k][1] * r[1]);
                    if v < 0.0 {
                        out_flags |= flags::CLAMPED_THRESHOLD;
                    }
                    next.set(k, v.max(0.0));
                }
            }
            eta = next;
            r = p_fn(model, &eta)?.map(|p| p - target);
            err = merit(&r, &active);
            continue;
        }

        let mut step = [0.0; 2];
        for k in 0..2 {
            if !active[k] {
                continue;
            }
            let x = eta.get(k);
            let h = 1e-6 * x.max(scales[k]);
            let (mut lo, mut hi) = (eta, eta);
            lo.set(k, (x - h).max(0.0));
            hi.set(k, x + h);
            let slope = (p_fn(model, &hi)?[k] - p_fn(model, &lo)?[k]) / (hi.get(k) - lo.get(k));
            let limit = x.max(scales[k]);
            step[k] = if slope > 1e-300 {
                (r[k] / slope).clamp(-limit, limit)
            } else if r[k] < 0.0 {
                -limit
            } else {
                0.5 * x
            };
        }

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = eta;
            for k in 0..2 {
                if active[k] {
                    cand.set(k, (eta.get(k) - lambda * step[k]).max(0.0));
                }
            }
            let rc = p_fn(model, &cand)?.map(|p| p - target);
            let ec = merit(&rc, &active);
            if ec < err {
                eta = cand;
                r = rc;
                err = ec;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // no representable improvement left
            out_flags |= flags::NO_CONVERGENCE;
            break;
        }
    }
    Ok(OptimizeOutcome { thresholds: eta, iterations, achieved: r.map(|x| x + target), flags: out_flags })
}

/// Fixed-point iteration for Gaussian and asymptotic branch models.
pub fn optimize_gaussian(cfg: &OptimizerConfig, model: &DecisionModel) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let target = cfg.p_fn_target.value();
    let active = constrained(model);
    let mut stats = [None, None];
    for k in 0..2 {
        match *model.attacker(k).branch(k) {
            BranchModel::Gaussian(s) => stats[k] = Some(s),
            BranchModel::Disabled => {}
            BranchModel::ChiSquare { .. } => {
                return Err(Error::InvalidConfig("fixed-point optimizer needs Gaussian branch models".into()))
            }
        }
    }

    let mut out_flags = 0;
    // Cross factors start at one; stale ones from a warm start do no better.
    let mut cross = [1.0, 1.0];
    let mut eta = ThresholdPair { eta_p: 0.0, eta_c: 0.0 };
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut next = eta;
        for k in 0..2 {
            let Some(s) = stats[k] else { continue };
            let mut arg = target / cross[k];
            if !(arg < 1.0) {
                arg = 1.0 - 1e-12;
                out_flags |= flags::CLAMPED_ARGUMENT;
            }
            let v = s.s_mean - s.s_var.sqrt() * gauss_q_inv(arg)?;
            if v < 0.0 {
                out_flags |= flags::CLAMPED_THRESHOLD;
            }
            next.set(k, v.max(0.0));
        }
        let settled =
            (0..2).all(|k| !active[k] || (next.get(k) - eta.get(k)).abs() <= cfg.tol * (1.0 + eta.get(k).abs()));
        eta = next;
        cross = cross_factors(model, &eta)?;
        if settled && iterations > 1 {
            break;
        }
        if iterations >= cfg.max_iter {
            out_flags |= flags::NO_CONVERGENCE;
            break;
        }
    }
    Ok(OptimizeOutcome { thresholds: eta, iterations, achieved: p_fn(model, &eta)?, flags: out_flags })
}
