//! Cycle averages over a small circular probing orbit, and the two stability
//! functionals built from them.
//!
//! The probing orbit is `x = eps*cos(t)`, `xdot = -eps*sin(t)`; a cycle
//! average is `(1/2pi) * integral over one period`. For a two-state system
//! `x1' = x2, x2' = f(x1, x2)` the functionals
//!
//! ```text
//! t1 = <2 * xdot * f>      t2 = <2 * x * f>
//! ```
//!
//! recover the eigenvalue sum and product of the linearization scaled by
//! eps^2: `t1 = (l1 + l2) * eps^2` and `t2 = -l1*l2 * eps^2`, which is what
//! the classifier consumes. The general state-space form averages all four
//! pairings `<x_i * f_j>` instead and reduces to the same two numbers.

use crate::error::{Result, StabError};
use crate::expr::SystemDef;
use crate::par::try_par_map;

use std::f64::consts::TAU;

/// Default node count for smooth integrands.
pub const DEFAULT_NODES: usize = 256;
/// Default node count when an equation contains `abs` (kinked integrands
/// converge slower; 1024 nodes restores near-machine accuracy).
pub const ABS_DEFAULT_NODES: usize = 1024;
/// Hard ceiling for the adaptive doubling ladder.
pub const NODE_CAP: usize = 65536;
/// Quadrature needs at least this many nodes, and an even count, so the
/// half-resolution error estimate reuses every other node.
pub const MIN_NODES: usize = 16;

/// Bisection on the amplitude functional stops when |t1| drops below this.
pub const LIMIT_CYCLE_RESIDUAL_TOL: f64 = 1e-10;
/// Noise floor for the root scan, relative to `epsilon^2` (the natural
/// scale of `t1`): grid samples below it carry no sign, keeping quadrature
/// roundoff on a vanishing functional from fabricating crossings.
pub const LIMIT_CYCLE_NOISE_REL: f64 = 1e-9;
const LIMIT_CYCLE_GRID: usize = 128;
const LIMIT_CYCLE_SPAN_DECADES: f64 = 3.0;
const BISECT_MAX_ITER: usize = 200;

/// One circular probing orbit: state `cos_axis` carries `eps*cos(t)`, state
/// `sin_axis` (if any) carries `-eps*sin(t)`, every other state stays zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationOrbit {
    pub epsilon: f64,
    pub cos_axis: usize,
    pub sin_axis: Option<usize>,
}

impl ExcitationOrbit {
    /// The two-state orbit `x1 = eps*cos(t)`, `x2 = -eps*sin(t)`.
    pub fn planar(epsilon: f64) -> Self {
        ExcitationOrbit {
            epsilon,
            cos_axis: 0,
            sin_axis: Some(1),
        }
    }

    /// Writes the orbit state at phase `t` into `out` (zeroing the rest).
    pub fn state_into(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        out[self.cos_axis] = self.epsilon * t.cos();
        if let Some(s) = self.sin_axis {
            out[s] = -self.epsilon * t.sin();
        }
    }
}

/// Functional values at one amplitude, with the quadrature error estimate
/// and the node count that produced them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalResult {
    pub t1: f64,
    pub t2: f64,
    pub epsilon: f64,
    pub quad_error: f64,
    pub nodes: usize,
}

/// `t1`, `t2` rewritten as eigenvalue sum and product of the linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSummary {
    /// `l1 + l2 = t1 / eps^2`
    pub sum_re: f64,
    /// `l1 * l2 = -t2 / eps^2`
    pub prod_re: f64,
}

fn check_nodes(nodes: usize) -> Result<()> {
    if nodes < MIN_NODES || !nodes.is_multiple_of(2) {
        return Err(StabError::InvalidParameter(format!(
            "quadrature nodes must be even and at least {MIN_NODES}, got {nodes}"
        )));
    }
    Ok(())
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(StabError::InvalidParameter(format!(
            "epsilon must be a positive finite number, got {epsilon}"
        )));
    }
    Ok(())
}

/// Compensated accumulator; keeps 65536-node sums at machine accuracy.
#[derive(Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Core quadrature: the composite trapezoid rule on the full period, which
/// for a periodic integrand is the mean of `nodes` equally spaced samples.
/// Returns `(value, quad_error)` where the error estimate is the difference
/// against the half-resolution mean (every other node).
pub(crate) fn try_cycle_average<F>(g: F, nodes: usize) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    try_cycle_average_mut(g, nodes)
}

fn try_cycle_average_mut<F>(mut g: F, nodes: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_nodes(nodes)?;
    let h = TAU / nodes as f64;
    let mut fine = Kahan::default();
    let mut coarse = Kahan::default();
    for k in 0..nodes {
        let t = k as f64 * h;
        let v = g(t)?;
        if !v.is_finite() {
            return Err(StabError::NonFinite { t });
        }
        fine.add(v);
        if k % 2 == 0 {
            coarse.add(v);
        }
    }
    let value = fine.sum / nodes as f64;
    let half = coarse.sum / (nodes / 2) as f64;
    Ok((value, (value - half).abs()))
}

/// Cycle average of a plain callable over one period.
pub fn cycle_average<F>(g: F, nodes: usize) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    try_cycle_average(|t| Ok(g(t)), nodes)
}

/// Doubles the node count from the default until the error estimate drops
/// below `tol`, up to [`NODE_CAP`]. Returns `(value, quad_error, nodes)`.
pub fn cycle_average_adaptive<F>(g: F, tol: f64) -> Result<(f64, f64, usize)>
where
    F: Fn(f64) -> f64,
{
    let mut nodes = DEFAULT_NODES;
    loop {
        let (value, err) = cycle_average(&g, nodes)?;
        if err <= tol {
            return Ok((value, err, nodes));
        }
        if nodes >= NODE_CAP {
            return Err(StabError::NoConvergence(format!(
                "quadrature error {err:e} still above {tol:e} at {nodes} nodes"
            )));
        }
        nodes *= 2;
    }
}

/// Averages `x_pick * f_eq` over the orbit, where `x_pick` is the state
/// selected by `pick` and `f_eq` is equation `eq` of the system.
pub(crate) fn average_pairing(
    s: &SystemDef,
    orbit: &ExcitationOrbit,
    pick: usize,
    eq: usize,
    nodes: usize,
) -> Result<(f64, f64)> {
    let mut x = vec![0.0; s.n];
    try_cycle_average_mut(
        move |t| {
            orbit.state_into(t, &mut x);
            Ok(x[pick] * s.eval_rhs(eq, &x)?)
        },
        nodes,
    )
}

/// Functionals in scalar form for a canonical system `x1' = x2, x2' = f`:
/// `t1 = <2*xdot*f>`, `t2 = <2*x*f>` on the planar orbit.
pub fn functionals_scalar(s: &SystemDef, epsilon: f64, nodes: usize) -> Result<FunctionalResult> {
    check_epsilon(epsilon)?;
    if !s.is_scalar_canonical() {
        return Err(StabError::NotCanonical);
    }
    let orbit = ExcitationOrbit::planar(epsilon);
    let (xdot_f, e1) = average_pairing(s, &orbit, 1, 1, nodes)?;
    let (x_f, e2) = average_pairing(s, &orbit, 0, 1, nodes)?;
    Ok(FunctionalResult {
        t1: 2.0 * xdot_f,
        t2: 2.0 * x_f,
        epsilon,
        quad_error: (2.0 * e1).max(2.0 * e2),
        nodes,
    })
}

/// Functionals in state-space form for any two-state system:
///
/// ```text
/// t1 = 2*(<x1*f1> + <x2*f2>)
/// t2 = 4*(<x2*f1>*<x1*f2> - <x1*f1>*<x2*f2>) / eps^2
/// ```
///
/// The product form carries an extra eps^2 relative to the scalar form; the
/// normalization above is the one that makes `t2 = -(l1*l2)*eps^2` hold
/// exactly on linear systems, matching the scalar form's contract.
pub fn functionals_statespace(
    s: &SystemDef,
    epsilon: f64,
    nodes: usize,
) -> Result<FunctionalResult> {
    check_epsilon(epsilon)?;
    if s.n != 2 {
        return Err(StabError::DimensionMismatch {
            declared: 2,
            got: s.n,
        });
    }
    let orbit = ExcitationOrbit::planar(epsilon);
    let (m11, e11) = average_pairing(s, &orbit, 0, 0, nodes)?;
    let (m12, e12) = average_pairing(s, &orbit, 1, 0, nodes)?;
    let (m21, e21) = average_pairing(s, &orbit, 0, 1, nodes)?;
    let (m22, e22) = average_pairing(s, &orbit, 1, 1, nodes)?;
    let eps2 = epsilon * epsilon;
    let t1 = 2.0 * (m11 + m22);
    let t2 = 4.0 * (m12 * m21 - m11 * m22) / eps2;
    let e_t1 = 2.0 * (e11 + e22);
    // First-order propagation through the bilinear combination.
    let e_t2 = 4.0 * (m12.abs() * e21 + m21.abs() * e12 + m11.abs() * e22 + m22.abs() * e11) / eps2;
    Ok(FunctionalResult {
        t1,
        t2,
        epsilon,
        quad_error: e_t1.max(e_t2),
        nodes,
    })
}

/// Scalar form when the system is canonical, state-space form otherwise.
pub fn functionals(s: &SystemDef, epsilon: f64, nodes: usize) -> Result<FunctionalResult> {
    if s.is_scalar_canonical() {
        functionals_scalar(s, epsilon, nodes)
    } else {
        functionals_statespace(s, epsilon, nodes)
    }
}

/// Strips the eps^2 scale off the functionals: the eigenvalue sum and
/// product of the effective linearization at this amplitude.
pub fn eigen_summary(fr: &FunctionalResult) -> EigenSummary {
    let eps2 = fr.epsilon * fr.epsilon;
    EigenSummary {
        sum_re: fr.t1 / eps2,
        prod_re: -fr.t2 / eps2,
    }
}

fn t1_at(s: &SystemDef, epsilon: f64, nodes: usize) -> Result<f64> {
    Ok(functionals(s, epsilon, nodes)?.t1)
}

/// Amplitudes in `(0, eps_max]` where `t1` crosses zero: candidate limit
/// cycles (energy balance over one probing cycle). Sign changes are located
/// on a geometric grid and refined by bisection until
/// `|t1| <= LIMIT_CYCLE_RESIDUAL_TOL`. Grid values within the noise floor
/// of zero carry no sign, so an identically vanishing `t1` yields no roots
/// and a genuine crossing is bracketed by the nearest definite-sign
/// samples. Tangential touches without a sign change are not reported.
/// Returned in ascending order.
pub fn limit_cycle_amplitude(s: &SystemDef, eps_max: f64, nodes: usize) -> Result<Vec<f64>> {
    check_epsilon(eps_max)?;
    let lo = eps_max * 10f64.powf(-LIMIT_CYCLE_SPAN_DECADES);
    let ratio = (eps_max / lo).powf(1.0 / (LIMIT_CYCLE_GRID - 1) as f64);
    let grid: Vec<f64> = (0..LIMIT_CYCLE_GRID)
        .map(|i| lo * ratio.powi(i as i32))
        .collect();
    let values = try_par_map(&grid, |&eps| t1_at(s, eps, nodes))?;

    let signs: Vec<i8> = grid
        .iter()
        .zip(&values)
        .map(|(&eps, &v)| {
            if v.abs() <= LIMIT_CYCLE_NOISE_REL * eps * eps {
                0
            } else if v > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();

    let mut roots = Vec::new();
    let mut prev: Option<usize> = None;
    for (i, &sg) in signs.iter().enumerate() {
        if sg == 0 {
            continue;
        }
        if let Some(j) = prev {
            if signs[j] != sg {
                roots.push(bisect_t1(s, grid[j], grid[i], nodes)?);
            }
        }
        prev = Some(i);
    }
    Ok(roots)
}

fn bisect_t1(s: &SystemDef, mut lo: f64, mut hi: f64, nodes: usize) -> Result<f64> {
    let mut f_lo = t1_at(s, lo, nodes)?;
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = t1_at(s, mid, nodes)?;
        if f_mid.abs() <= LIMIT_CYCLE_RESIDUAL_TOL {
            return Ok(mid);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Err(StabError::NoConvergence(format!(
        "t1 bisection stalled on [{lo}, {hi}] without reaching |t1| <= {LIMIT_CYCLE_RESIDUAL_TOL:e}"
    )))
}
