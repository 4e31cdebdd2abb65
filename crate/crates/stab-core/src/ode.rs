//! Trajectory integration used as an independent check on the classifier:
//! does the state actually decay toward the origin, orbit it, or escape?
//!
//! The integrator is a classical fixed-step fourth-order Runge-Kutta. A
//! fixed step keeps trajectories bit-for-bit reproducible across runs and
//! platforms honoring IEEE semantics, which matters more here than raw
//! efficiency: golden trajectory files and seeded verdicts are compared
//! byte for byte.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Result, StabError};
use crate::expr::SystemDef;
use crate::par::try_par_map;

/// A trajectory is cut off once its norm passes this value.
pub const DIVERGENCE_CUTOFF: f64 = 1e6;

/// A trial counts as escape evidence once its norm passes this multiple of
/// the starting radius.
pub const GROWTH_FACTOR: f64 = 10.0;

/// Seed for the trial initial conditions unless the caller picks one.
pub const DEFAULT_SEED: u64 = 42;

/// Integration step unless the caller picks one.
pub const DEFAULT_STEP: f64 = 1e-2;

/// One integrated trajectory. Sample times are `k * step` plus a final
/// partial step landing exactly on the requested end time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub step: f64,
    /// Set when integration stopped early: the norm passed the divergence
    /// cutoff, or a step left the domain of the rhs. `t` and `states` then
    /// hold the part up to and including the last representable sample.
    pub diverged: bool,
}

impl Trajectory {
    /// Final sampled state.
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("a trajectory holds at least x0")
    }
}

fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Stepper<'a> {
    s: &'a SystemDef,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    mid: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(s: &'a SystemDef) -> Self {
        Stepper {
            s,
            k1: vec![0.0; s.n],
            k2: vec![0.0; s.n],
            k3: vec![0.0; s.n],
            k4: vec![0.0; s.n],
            mid: vec![0.0; s.n],
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn advance(&mut self, x: &mut [f64], h: f64) -> Result<()> {
        let n = self.s.n;
        self.s.eval_all(x, &mut self.k1)?;
        for i in 0..n {
            self.mid[i] = x[i] + 0.5 * h * self.k1[i];
        }
        self.s.eval_all(&self.mid, &mut self.k2)?;
        for i in 0..n {
            self.mid[i] = x[i] + 0.5 * h * self.k2[i];
        }
        self.s.eval_all(&self.mid, &mut self.k3)?;
        for i in 0..n {
            self.mid[i] = x[i] + h * self.k3[i];
        }
        self.s.eval_all(&self.mid, &mut self.k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Integrates `x' = f(x)` from `x0` over `[0, t_end]` with the default
/// divergence cutoff.
pub fn integrate(s: &SystemDef, x0: &[f64], t_end: f64, step: f64) -> Result<Trajectory> {
    integrate_capped(s, x0, t_end, step, DIVERGENCE_CUTOFF)
}

/// [`integrate`] with an explicit divergence cutoff.
///
/// Runaway growth does not error: once the norm passes `cutoff`, or a step
/// fails to evaluate (overflow past the floating-point range, or a domain
/// hole of the rhs), the trajectory is returned truncated with the
/// `diverged` flag set. Errors are reserved for unusable arguments.
pub fn integrate_capped(
    s: &SystemDef,
    x0: &[f64],
    t_end: f64,
    step: f64,
    cutoff: f64,
) -> Result<Trajectory> {
    if !(step.is_finite() && step > 0.0) {
        return Err(StabError::InvalidParameter(format!(
            "step must be positive and finite, got {step}"
        )));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(StabError::InvalidParameter(format!(
            "t_end must be positive and finite, got {t_end}"
        )));
    }
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(StabError::InvalidParameter(format!(
            "divergence cutoff must be positive and finite, got {cutoff}"
        )));
    }
    if x0.len() != s.n {
        return Err(StabError::DimensionMismatch {
            declared: s.n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(StabError::InvalidParameter(
            "initial state must be finite".into(),
        ));
    }

    let full_steps = (t_end / step + 1e-9).floor() as usize;
    let remainder = t_end - full_steps as f64 * step;
    let take_partial = remainder > 1e-9 * step;

    let mut stepper = Stepper::new(s);
    let mut x = x0.to_vec();
    let mut t = Vec::with_capacity(full_steps + 2);
    let mut states = Vec::with_capacity(full_steps + 2);
    t.push(0.0);
    states.push(x.clone());
    let mut diverged = false;

    for k in 1..=full_steps + usize::from(take_partial) {
        let (time, h) = if k <= full_steps {
            (k as f64 * step, step)
        } else {
            (t_end, remainder)
        };
        if stepper.advance(&mut x, h).is_err() {
            diverged = true;
            break;
        }
        t.push(time);
        states.push(x.clone());
        if euclid(&x) > cutoff {
            diverged = true;
            break;
        }
    }

    Ok(Trajectory {
        t,
        states,
        x0: x0.to_vec(),
        step,
        diverged,
    })
}

/// Outcome of the randomized trajectory check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EmpiricalVerdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl EmpiricalVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            EmpiricalVerdict::Stable => "Stable",
            EmpiricalVerdict::Unstable => "Unstable",
            EmpiricalVerdict::Inconclusive => "Inconclusive",
        }
    }
}

impl std::fmt::Display for EmpiricalVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Knobs for [`empirical_verdict`].
#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub seed: u64,
    pub step: f64,
    pub divergence_cutoff: f64,
    pub growth_factor: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            seed: DEFAULT_SEED,
            step: DEFAULT_STEP,
            divergence_cutoff: DIVERGENCE_CUTOFF,
            growth_factor: GROWTH_FACTOR,
        }
    }
}

/// What the randomized trajectories did, with the evidence behind the
/// verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalReport {
    pub verdict: EmpiricalVerdict,
    pub n_trials: usize,
    pub r0: f64,
    pub t_end: f64,
    pub step: f64,
    pub seed: u64,
    /// Largest norm any trial reached.
    pub max_norm: f64,
    /// Largest norm seen in the final quarter of any trial.
    pub worst_final_norm: f64,
    pub diverged_trials: usize,
}

/// Integrates `n_trials` random starts of norm `r0` and votes on what they
/// did: `Unstable` if any trial escaped past `growth_factor * r0` (or
/// diverged outright), otherwise `Stable` if every trial's final quarter
/// stayed under `r0 / 2`, otherwise `Inconclusive`, the signature of
/// center-like orbits that neither decay nor escape.
///
/// The starts are drawn from a seeded generator, so a report is a pure
/// function of the system and the options.
pub fn empirical_verdict(
    s: &SystemDef,
    n_trials: usize,
    r0: f64,
    t_end: f64,
    options: &OracleOptions,
) -> Result<EmpiricalReport> {
    if n_trials < 8 {
        return Err(StabError::InvalidParameter(format!(
            "need at least 8 trials for a verdict, got {n_trials}"
        )));
    }
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(StabError::InvalidParameter(format!(
            "starting radius must be positive and finite, got {r0}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        loop {
            let dir: Vec<f64> = (0..s.n)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = euclid(&dir);
            if norm > 1e-12 {
                starts.push(dir.iter().map(|v| v * r0 / norm).collect::<Vec<f64>>());
                break;
            }
        }
    }

    struct Trial {
        max_norm: f64,
        final_norm: f64,
        diverged: bool,
    }
    let trials = try_par_map(&starts, |x0| {
        let tr = integrate_capped(s, x0, t_end, options.step, options.divergence_cutoff)?;
        let max_norm = tr.states.iter().map(|x| euclid(x)).fold(0.0, f64::max);
        let final_norm = tr
            .t
            .iter()
            .zip(&tr.states)
            .filter(|(t, _)| **t >= 0.75 * t_end)
            .map(|(_, x)| euclid(x))
            .fold(0.0, f64::max);
        Ok(Trial {
            max_norm,
            final_norm,
            diverged: tr.diverged,
        })
    })?;

    let max_norm = trials.iter().map(|t| t.max_norm).fold(0.0, f64::max);
    let worst_final_norm = trials.iter().map(|t| t.final_norm).fold(0.0, f64::max);
    let diverged_trials = trials.iter().filter(|t| t.diverged).count();

    let escaped = diverged_trials > 0 || max_norm > options.growth_factor * r0;
    let settled = trials
        .iter()
        .all(|t| !t.diverged && t.final_norm < r0 / 2.0);
    let verdict = if escaped {
        EmpiricalVerdict::Unstable
    } else if settled {
        EmpiricalVerdict::Stable
    } else {
        EmpiricalVerdict::Inconclusive
    };

    Ok(EmpiricalReport {
        verdict,
        n_trials,
        r0,
        t_end,
        step: options.step,
        seed: options.seed,
        max_norm,
        worst_final_norm,
        diverged_trials,
    })
}

/// One trajectory per seed state, for export and plotting. Two-state
/// systems only: a phase portrait is a planar picture.
pub fn portrait(
    s: &SystemDef,
    seeds: &[Vec<f64>],
    t_end: f64,
    step: f64,
) -> Result<Vec<Trajectory>> {
    if s.n != 2 {
        return Err(StabError::InvalidParameter(format!(
            "phase portraits need a two-state system, this one has {} states",
            s.n
        )));
    }
    try_par_map(seeds, |x0| integrate(s, x0, t_end, step))
}

/// Renders a trajectory as CSV: header `t,x1,...,xn`, one row per sample,
/// every number with 17 significant digits so parsing it back reproduces
/// the exact values.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let n = tr.states.first().map_or(0, |x| x.len());
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (t, x) in tr.t.iter().zip(&tr.states) {
        let _ = write!(out, "{t:.16e}");
        for v in x {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}
