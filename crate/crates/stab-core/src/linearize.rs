//! Linearization by orbit averaging, with an eigenvalue view and a
//! finite-difference Jacobian to compare against.
//!
//! Entry `(r, c)` of the averaged state matrix is `(2/eps^2) * <x_c * f_r>`
//! taken on a circular orbit that excites the pair of states involved. For
//! two-state systems one planar orbit supplies all four entries; for larger
//! systems each entry gets its own orbit with the column state on the
//! cosine phase, the row state on the sine phase, and everything else held
//! at zero. Diagonal entries use a single-axis cosine orbit.
//!
//! The matrix depends on the orbit radius: linear terms are reproduced
//! exactly at every radius, while nonlinear terms contribute radius-
//! dependent corrections that vanish quadratically as the radius shrinks.
//! Sweeping the radius therefore interpolates between the Jacobian picture
//! and the finite-amplitude behavior, which is what resolves equilibria the
//! Jacobian alone leaves undecided.

use std::collections::BTreeSet;

use nalgebra::{Complex, DMatrix, Schur};

use crate::averaging::{self, ExcitationOrbit};
use crate::classify::Stability;
use crate::error::{Result, StabError};
use crate::expr::{BinOp, Expr, SystemDef, EQUILIBRIUM_TOL};
use crate::par::try_par_map;

/// Matrix type of the linearized models, nameable without a direct
/// linear-algebra dependency.
pub type Matrix = DMatrix<f64>;

/// Eigenvalue type of the linearized models.
pub type Eigenvalue = Complex<f64>;

/// Default central-difference step for [`jacobian_fd`].
pub const FD_STEP: f64 = 1e-5;

/// Sweep verdict margin around the imaginary axis, relative to the matrix
/// infinity norm.
pub const SWEEP_RE_TOL: f64 = 1e-7;

/// Accepted eigenvalue residual: `|det(A - lambda*I)|` relative to the
/// matrix infinity norm raised to the dimension.
pub const BACKWARD_ERROR_TOL: f64 = 1e-8;

/// Iteration cap for the dense eigenvalue method used beyond 2x2.
pub const MAX_EIGEN_ITER: usize = 100_000;

/// How the linearized matrix was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    AveragingOrbit,
    FiniteDifferenceJacobian,
}

/// A linearized state matrix together with its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    /// Probe scale: the orbit radius, or the differencing step for the
    /// Jacobian source.
    pub epsilon: f64,
    pub matrix: DMatrix<f64>,
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub source: Source,
    /// Equations containing a nonlinear term that couples three or more
    /// states. Such terms vanish on every probing orbit (which excites at
    /// most two states), so their influence is invisible to the averaged
    /// matrix.
    pub cross_coupling: Vec<usize>,
}

/// One radius of an [`epsilon_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSample {
    pub epsilon: f64,
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_re: f64,
    /// The stability margin used at this sample.
    pub re_tol: f64,
}

/// Eigenvalue trajectories over a geometric grid of orbit radii.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSweep {
    pub samples: Vec<SweepSample>,
    pub verdict: Stability,
    pub eps_range: (f64, f64),
}

/// Finite-difference Jacobian versus the averaged matrix over a list of
/// radii.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianComparison {
    pub jacobian: LinearizedModel,
    /// `(epsilon, inf-norm of the matrix difference)` in the caller's
    /// radius order.
    pub diffs: Vec<(f64, f64)>,
    /// Log-log slope of difference against radius; `None` when fewer than
    /// two radii produced a positive difference.
    pub slope: Option<f64>,
}

/// Largest absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|r| m.row(r).iter().map(|v| v.abs()).sum())
        .fold(0.0, f64::max)
}

/// Builds the averaged state matrix at one orbit radius.
///
/// The origin must be an equilibrium; entries are computed with `nodes`
/// quadrature nodes each, in parallel when the `parallel` feature is on.
pub fn averaging_matrix(s: &SystemDef, epsilon: f64, nodes: usize) -> Result<LinearizedModel> {
    averaging::check_epsilon(epsilon)?;
    s.verify_equilibrium(EQUILIBRIUM_TOL)?;
    let n = s.n;
    let scale = 2.0 / (epsilon * epsilon);
    let entries: Vec<(usize, usize)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .collect();
    let values = try_par_map(&entries, |&(r, c)| {
        let orbit = if n == 2 {
            ExcitationOrbit::planar(epsilon)
        } else {
            ExcitationOrbit {
                epsilon,
                cos_axis: c,
                sin_axis: (r != c).then_some(r),
            }
        };
        let (avg, _) = averaging::average_pairing(s, &orbit, c, r, nodes)?;
        Ok(scale * avg)
    })?;
    let matrix = DMatrix::from_fn(n, n, |r, c| values[r * n + c]);
    let eigenvalues = eigenvalues(&matrix)?;
    Ok(LinearizedModel {
        epsilon,
        matrix,
        eigenvalues,
        source: Source::AveragingOrbit,
        cross_coupling: cross_coupling_equations(s),
    })
}

/// All eigenvalues of a real square matrix, sorted by `(re, im)`.
///
/// Dimensions one and two are solved in closed form; anything larger goes
/// through an iterative dense decomposition. Every result is accepted only
/// if `|det(A - lambda*I)| <= BACKWARD_ERROR_TOL * norm^n` for each
/// eigenvalue, so a silently wrong value cannot escape.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(StabError::InvalidParameter(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(StabError::InvalidParameter(
            "matrix entries must be finite".into(),
        ));
    }
    let n = m.nrows();
    let mut eig: Vec<Complex<f64>> = match n {
        0 => Vec::new(),
        1 => vec![Complex::new(m[(0, 0)], 0.0)],
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = tr * tr - 4.0 * det;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let big = 0.5 * (tr + if tr >= 0.0 { sq } else { -sq });
                if big == 0.0 {
                    vec![Complex::new(0.0, 0.0); 2]
                } else {
                    vec![Complex::new(big, 0.0), Complex::new(det / big, 0.0)]
                }
            } else {
                let im = 0.5 * (-disc).sqrt();
                vec![Complex::new(0.5 * tr, -im), Complex::new(0.5 * tr, im)]
            }
        }
        _ => {
            let schur = Schur::try_new(m.clone(), f64::EPSILON, MAX_EIGEN_ITER)
                .ok_or_else(|| {
                    StabError::NoConvergence(format!(
                        "eigenvalue iteration on a {n}x{n} matrix did not settle"
                    ))
                })?;
            schur.complex_eigenvalues().iter().copied().collect()
        }
    };
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let bound = BACKWARD_ERROR_TOL * inf_norm(m).powi(n as i32);
    let complex = m.map(|v| Complex::new(v, 0.0));
    for lambda in &eig {
        let mut shifted = complex.clone();
        for i in 0..n {
            shifted[(i, i)] -= lambda;
        }
        let residual = shifted.determinant().norm();
        if residual > bound {
            return Err(StabError::NoConvergence(format!(
                "eigenvalue {lambda} has characteristic residual {residual:e}, above {bound:e}"
            )));
        }
    }
    Ok(eig)
}

/// Central-difference Jacobian at the origin with step `h`.
///
/// Meaningful as a linearization only at an equilibrium, but computable
/// anywhere the rhs evaluates.
pub fn jacobian_fd(s: &SystemDef, h: f64) -> Result<LinearizedModel> {
    if !(h.is_finite() && h > 0.0) {
        return Err(StabError::InvalidParameter(format!(
            "difference step must be positive and finite, got {h}"
        )));
    }
    let n = s.n;
    let mut matrix = DMatrix::zeros(n, n);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut probe = vec![0.0; n];
    for c in 0..n {
        probe[c] = h;
        s.eval_all(&probe, &mut plus)?;
        probe[c] = -h;
        s.eval_all(&probe, &mut minus)?;
        probe[c] = 0.0;
        for r in 0..n {
            matrix[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    let eigenvalues = eigenvalues(&matrix)?;
    Ok(LinearizedModel {
        epsilon: h,
        matrix,
        eigenvalues,
        source: Source::FiniteDifferenceJacobian,
        cross_coupling: cross_coupling_equations(s),
    })
}

/// Eigenvalues of the averaged matrix over a geometric radius grid.
///
/// The verdict is `Stable` when every eigenvalue at every radius has real
/// part below the negative margin, `Unstable` when any eigenvalue at any
/// radius exceeds the positive margin, `Marginal` otherwise. The margin is
/// [`SWEEP_RE_TOL`] times the matrix norm at that radius, so it adapts to
/// the system's scale.
pub fn epsilon_sweep(
    s: &SystemDef,
    eps_min: f64,
    eps_max: f64,
    samples: usize,
    nodes: usize,
) -> Result<EpsilonSweep> {
    if !(eps_min.is_finite() && eps_max.is_finite() && eps_min > 0.0 && eps_min < eps_max) {
        return Err(StabError::InvalidParameter(format!(
            "radius range must satisfy 0 < min < max, got {eps_min}..{eps_max}"
        )));
    }
    if samples < 3 {
        return Err(StabError::InvalidParameter(format!(
            "a sweep needs at least 3 samples, got {samples}"
        )));
    }
    let ratio = (eps_max / eps_min).powf(1.0 / (samples - 1) as f64);
    let grid: Vec<f64> = (0..samples)
        .map(|i| {
            if i == samples - 1 {
                eps_max
            } else {
                eps_min * ratio.powi(i as i32)
            }
        })
        .collect();
    let models = try_par_map(&grid, |&eps| averaging_matrix(s, eps, nodes))?;

    let mut all_below = true;
    let mut any_above = false;
    let samples = models
        .into_iter()
        .map(|model| {
            let re_tol = SWEEP_RE_TOL * inf_norm(&model.matrix);
            let max_re = model
                .eigenvalues
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max);
            all_below &= max_re < -re_tol;
            any_above |= max_re > re_tol;
            SweepSample {
                epsilon: model.epsilon,
                eigenvalues: model.eigenvalues,
                max_re,
                re_tol,
            }
        })
        .collect();
    let verdict = if any_above {
        Stability::Unstable
    } else if all_below {
        Stability::Stable
    } else {
        Stability::Marginal
    };
    Ok(EpsilonSweep {
        samples,
        verdict,
        eps_range: (eps_min, eps_max),
    })
}

/// Measures how fast the averaged matrix approaches the Jacobian as the
/// orbit radius shrinks.
pub fn compare_jacobian(
    s: &SystemDef,
    eps_list: &[f64],
    h: f64,
    nodes: usize,
) -> Result<JacobianComparison> {
    for &e in eps_list {
        averaging::check_epsilon(e)?;
    }
    let jacobian = jacobian_fd(s, h)?;
    let models = try_par_map(eps_list, |&eps| averaging_matrix(s, eps, nodes))?;
    let diffs: Vec<(f64, f64)> = models
        .iter()
        .map(|model| (model.epsilon, inf_norm(&(&model.matrix - &jacobian.matrix))))
        .collect();
    let slope = log_log_slope(&diffs);
    Ok(JacobianComparison {
        jacobian,
        diffs,
        slope,
    })
}

/// Least-squares slope of `ln(value)` against `ln(key)` over the pairs with
/// positive entries; `None` when fewer than two such pairs exist or the
/// keys do not vary.
pub fn log_log_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(k, v)| *k > 0.0 && *v > 0.0)
        .map(|(k, v)| (k.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    Some(sxy / sxx)
}

/// Equations whose rhs contains a nonlinear term spanning three or more
/// distinct states. Probing orbits excite at most two states, so these
/// terms average to zero and the matrix cannot see them.
pub fn cross_coupling_equations(s: &SystemDef) -> Vec<usize> {
    (0..s.n)
        .filter(|&i| term_spans(&s.rhs[i]).iter().any(|set| set.len() >= 3))
        .collect()
}

/// Upper bound on tracked additive terms before collapsing to one
/// conservative all-variables set.
const TERM_SPAN_CAP: usize = 64;

fn all_vars(e: &Expr) -> BTreeSet<usize> {
    e.referenced_vars().into_iter().collect()
}

/// The sets of state variables appearing together in each additive term of
/// `e`, over-approximating where exact expansion would blow up (high
/// powers, nonlinear functions, denominators).
fn term_spans(e: &Expr) -> Vec<BTreeSet<usize>> {
    match e {
        Expr::Num(_) | Expr::Param(_) => vec![BTreeSet::new()],
        Expr::Var(i) => vec![BTreeSet::from([*i])],
        Expr::Neg(inner) => term_spans(inner),
        Expr::Bin(BinOp::Add | BinOp::Sub, l, r) => {
            let mut spans = term_spans(l);
            spans.extend(term_spans(r));
            cap_spans(spans)
        }
        Expr::Bin(BinOp::Mul, l, r) => cross_spans(term_spans(l), term_spans(r)),
        Expr::Bin(BinOp::Div, l, r) => {
            let denom = all_vars(r);
            if denom.is_empty() {
                term_spans(l)
            } else {
                cross_spans(term_spans(l), vec![denom])
            }
        }
        Expr::Bin(BinOp::Pow, base, exp) => {
            let base_vars = all_vars(base);
            if !all_vars(exp).is_empty() {
                let mut span = base_vars;
                span.extend(all_vars(exp));
                return vec![span];
            }
            if base_vars.is_empty() {
                return vec![BTreeSet::new()];
            }
            match exp.as_ref() {
                Expr::Num(k) if *k == 0.0 => vec![BTreeSet::new()],
                Expr::Num(k) if *k == 1.0 => term_spans(base),
                Expr::Num(k) if k.fract() == 0.0 && (2.0..=4.0).contains(k) => {
                    let spans = term_spans(base);
                    let mut acc = spans.clone();
                    for _ in 1..*k as usize {
                        acc = cross_spans(acc, spans.clone());
                    }
                    acc
                }
                _ => vec![base_vars],
            }
        }
        Expr::Call(_, arg) => {
            let vars = all_vars(arg);
            if vars.is_empty() {
                vec![BTreeSet::new()]
            } else {
                vec![vars]
            }
        }
    }
}

fn cross_spans(a: Vec<BTreeSet<usize>>, b: Vec<BTreeSet<usize>>) -> Vec<BTreeSet<usize>> {
    if a.len().saturating_mul(b.len()) > TERM_SPAN_CAP {
        let mut merged: BTreeSet<usize> = BTreeSet::new();
        for s in a.iter().chain(b.iter()) {
            merged.extend(s.iter().copied());
        }
        return vec![merged];
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for sa in &a {
        for sb in &b {
            let mut s = sa.clone();
            s.extend(sb.iter().copied());
            out.push(s);
        }
    }
    out
}

fn cap_spans(spans: Vec<BTreeSet<usize>>) -> Vec<BTreeSet<usize>> {
    if spans.len() <= TERM_SPAN_CAP {
        return spans;
    }
    let mut merged: BTreeSet<usize> = BTreeSet::new();
    for s in &spans {
        merged.extend(s.iter().copied());
    }
    vec![merged]
}

#[cfg(test)]
mod tests {
    #![allow(clippy::needless_range_loop)]

    use super::*;
    use crate::averaging::DEFAULT_NODES;
    use crate::expr::parse_system;

    fn system(doc: &str) -> SystemDef {
        parse_system(doc).unwrap()
    }

    #[test]
    fn linear_systems_are_recovered_at_every_radius() {
        let s = system(r#"{"n": 2, "rhs": ["2*x1 - 3*x2", "0.5*x1 + x2"]}"#);
        let expected = [[2.0, -3.0], [0.5, 1.0]];
        for eps in [1e-3, 0.1, 1.0, 3.0] {
            let model = averaging_matrix(&s, eps, DEFAULT_NODES).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    assert!(
                        (model.matrix[(r, c)] - expected[r][c]).abs() < 1e-12,
                        "entry ({r},{c}) at eps={eps}"
                    );
                }
            }
        }
    }

    #[test]
    fn cubic_term_bends_the_restoring_entry() {
        let s = system(r#"{"n": 2, "rhs": ["x2", "x2*x2 - x1 + x1^3"]}"#);
        let model = averaging_matrix(&s, 0.5, DEFAULT_NODES).unwrap();
        assert!((model.matrix[(0, 0)]).abs() < 1e-12);
        assert!((model.matrix[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((model.matrix[(1, 0)] + 0.8125).abs() < 1e-12);
        assert!((model.matrix[(1, 1)]).abs() < 1e-12);
        let b = model.eigenvalues[1].im;
        assert!((b - 0.8125_f64.sqrt()).abs() < 1e-12);
        assert_eq!(model.eigenvalues[0].im, -b);
    }

    #[test]
    fn three_state_linear_system_uses_pairwise_orbits() {
        let s = system(r#"{"n": 3, "rhs": ["x2 + 2*x3", "-x1", "x1 - x3"]}"#);
        let expected = [[0.0, 1.0, 2.0], [-1.0, 0.0, 0.0], [1.0, 0.0, -1.0]];
        let model = averaging_matrix(&s, 0.7, DEFAULT_NODES).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (model.matrix[(r, c)] - expected[r][c]).abs() < 1e-12,
                    "entry ({r},{c})"
                );
            }
        }
    }

    #[test]
    fn single_state_decay_rate() {
        let s = system(r#"{"n": 1, "rhs": ["-3*x1"]}"#);
        let model = averaging_matrix(&s, 0.2, DEFAULT_NODES).unwrap();
        assert!((model.matrix[(0, 0)] + 3.0).abs() < 1e-12);
        assert_eq!(model.eigenvalues.len(), 1);
        assert!((model.eigenvalues[0].re + 3.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_eigenvalues_cover_real_and_complex_pairs() {
        let rotation = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let eig = eigenvalues(&rotation).unwrap();
        assert_eq!(eig[0], Complex::new(0.0, -1.0));
        assert_eq!(eig[1], Complex::new(0.0, 1.0));

        let diagonal = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let eig = eigenvalues(&diagonal).unwrap();
        assert_eq!(eig[0], Complex::new(-2.0, 0.0));
        assert_eq!(eig[1], Complex::new(-1.0, 0.0));

        let spring = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.8125, 0.0]);
        let eig = eigenvalues(&spring).unwrap();
        assert!((eig[1].im - 0.8125_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn companion_matrix_eigenvalues_via_the_iterative_path() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, -11.0, -6.0],
        );
        let eig = eigenvalues(&m).unwrap();
        let expected = [-3.0, -2.0, -1.0];
        for (l, want) in eig.iter().zip(expected) {
            assert!((l.re - want).abs() < 1e-8, "{l} vs {want}");
            assert!(l.im.abs() < 1e-8);
        }
    }

    #[test]
    fn conjugate_pairing_survives_the_iterative_path() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -4.0, -0.2, 0.0, 0.0, //
                0.0, 0.0, -1.0, 0.5, //
                0.0, 0.0, 0.0, -2.0,
            ],
        );
        let eig = eigenvalues(&m).unwrap();
        let pair: Vec<_> = eig.iter().filter(|l| l.im != 0.0).collect();
        assert_eq!(pair.len(), 2);
        assert!((pair[0].re - pair[1].re).abs() < 1e-10);
        assert!((pair[0].im + pair[1].im).abs() < 1e-10);
    }

    #[test]
    fn jacobian_matches_hand_derivatives() {
        let s = system(r#"{"n": 2, "rhs": ["x2", "x2*x2 - x1 + x1^3"]}"#);
        let jac = jacobian_fd(&s, FD_STEP).unwrap();
        let expected = [[0.0, 1.0], [-1.0, 0.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((jac.matrix[(r, c)] - expected[r][c]).abs() < 1e-9);
            }
        }
        assert_eq!(jac.source, Source::FiniteDifferenceJacobian);

        let pendulum = system(r#"{"n": 2, "order2": {"f": "-x2 - sin(x1)"}}"#);
        let jac = jacobian_fd(&pendulum, FD_STEP).unwrap();
        let expected = [[0.0, 1.0], [-1.0, -1.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((jac.matrix[(r, c)] - expected[r][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sweep_grid_is_geometric_and_hits_both_ends() {
        let s = system(r#"{"n": 2, "rhs": ["-x1", "-2*x2"]}"#);
        let sweep = epsilon_sweep(&s, 1e-3, 1.0, 7, DEFAULT_NODES).unwrap();
        assert_eq!(sweep.samples.len(), 7);
        assert_eq!(sweep.samples[0].epsilon, 1e-3);
        assert_eq!(sweep.samples[6].epsilon, 1.0);
        let ratios: Vec<f64> = sweep
            .samples
            .windows(2)
            .map(|w| w[1].epsilon / w[0].epsilon)
            .collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-9, "uneven grid: {ratios:?}");
        }
        assert_eq!(sweep.verdict, Stability::Stable);
    }

    #[test]
    fn sweep_keeps_conservative_systems_marginal() {
        let s = system(r#"{"n": 2, "rhs": ["x2", "x2*x2 - x1 + x1^3"]}"#);
        let sweep = epsilon_sweep(&s, 1e-3, 1.0, 12, DEFAULT_NODES).unwrap();
        assert_eq!(sweep.verdict, Stability::Marginal);
        for sample in &sweep.samples {
            assert!(
                sample.max_re <= sample.re_tol,
                "real part escaped at eps={}",
                sample.epsilon
            );
        }
    }

    #[test]
    fn sweep_catches_growth_at_any_radius() {
        let s = system(r#"{"n": 2, "order2": {"f": "(1 - x1^2)*x2 - x1"}}"#);
        let sweep = epsilon_sweep(&s, 1e-3, 1.9, 12, DEFAULT_NODES).unwrap();
        assert_eq!(sweep.verdict, Stability::Unstable);
    }

    #[test]
    fn comparison_shrinks_quadratically_for_smooth_systems() {
        let s = system(r#"{"n": 2, "rhs": ["x2", "x2*x2 - x1 + x1^3"]}"#);
        let report = compare_jacobian(&s, &[1e-1, 1e-2, 1e-3], FD_STEP, DEFAULT_NODES).unwrap();
        for (eps, diff) in &report.diffs {
            assert!((diff - 0.75 * eps * eps).abs() < 1e-9, "diff at eps={eps}");
        }
        let slope = report.slope.unwrap();
        assert!((slope - 2.0).abs() < 1e-3, "slope {slope}");
    }

    #[test]
    fn pendulum_comparison_matches_a_dense_quadrature_oracle() {
        let s = system(r#"{"n": 2, "order2": {"f": "-x2 - sin(x1)"}}"#);
        let eps = 0.1;

        let oracle_nodes = 1 << 20;
        let mut acc = 0.0;
        for k in 0..oracle_nodes {
            let t = std::f64::consts::TAU * k as f64 / oracle_nodes as f64;
            acc += t.cos() * (eps * t.cos()).sin();
        }
        let restoring = 2.0 / eps * (acc / oracle_nodes as f64);

        let report = compare_jacobian(&s, &[eps], FD_STEP, DEFAULT_NODES).unwrap();
        let expected = (restoring - 1.0).abs();
        assert!((expected - eps * eps / 8.0).abs() < 1e-5);
        assert!((report.diffs[0].1 - expected).abs() < 1e-9);
    }

    #[test]
    fn trace_and_determinant_match_the_functionals() {
        let s = system(r#"{"n": 2, "rhs": ["x2 - x1^3", "-x1 + x2*x2"]}"#);
        for eps in [0.1, 0.5] {
            let fr = crate::averaging::functionals(&s, eps, DEFAULT_NODES).unwrap();
            let model = averaging_matrix(&s, eps, DEFAULT_NODES).unwrap();
            let tr = model.matrix[(0, 0)] + model.matrix[(1, 1)];
            let det = model.matrix[(0, 0)] * model.matrix[(1, 1)]
                - model.matrix[(0, 1)] * model.matrix[(1, 0)];
            let e2 = eps * eps;
            assert!((tr * e2 - fr.t1).abs() <= 1e-9 * fr.t1.abs().max(e2));
            assert!((-det * e2 - fr.t2).abs() <= 1e-9 * fr.t2.abs().max(e2));
        }
    }

    #[test]
    fn cross_coupling_terms_are_flagged() {
        let coupled = system(r#"{"n": 3, "rhs": ["x2 + x1*x2*x3", "-x1", "-x3"]}"#);
        assert_eq!(cross_coupling_equations(&coupled), vec![0]);

        let pairwise = system(r#"{"n": 3, "rhs": ["x2 + x1*x3", "-x1*x2", "-x3^4"]}"#);
        assert!(cross_coupling_equations(&pairwise).is_empty());

        let through_function = system(r#"{"n": 3, "rhs": ["x2", "sin(x1 + x2*x3)", "-x3"]}"#);
        assert_eq!(cross_coupling_equations(&through_function), vec![1]);

        let cubed_sum = system(r#"{"n": 3, "rhs": ["(x1 + x2 + x3)^3", "-x2", "-x3"]}"#);
        assert_eq!(cross_coupling_equations(&cubed_sum), vec![0]);

        let squared_sum = system(r#"{"n": 3, "rhs": ["(x1 + x2 + x3)^2", "-x2", "-x3"]}"#);
        assert!(cross_coupling_equations(&squared_sum).is_empty());

        let denominator = system(r#"{"n": 3, "rhs": ["x1 / (1 + x1*x2*x3)", "-x2", "-x3"]}"#);
        assert_eq!(cross_coupling_equations(&denominator), vec![0]);
    }

    #[test]
    fn sweeps_reject_bad_ranges() {
        let s = system(r#"{"n": 2, "rhs": ["-x1", "-x2"]}"#);
        assert!(epsilon_sweep(&s, 0.0, 1.0, 5, DEFAULT_NODES).is_err());
        assert!(epsilon_sweep(&s, 1.0, 0.5, 5, DEFAULT_NODES).is_err());
        assert!(epsilon_sweep(&s, 0.1, 1.0, 2, DEFAULT_NODES).is_err());
    }
}
