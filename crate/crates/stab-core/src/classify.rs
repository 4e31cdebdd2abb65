//! Equilibrium classification from the signs of the cycle functionals.
//!
//! For a planar system the two functionals behave like the eigenvalue sum
//! and negated eigenvalue product of an equivalent linear model, scaled by
//! the squared orbit radius. Their signs alone settle the equilibrium
//! status; the magnitudes additionally pin down the singular-point type and
//! let us solve back for the eigenvalue parameters `(a, b)`.
//!
//! Every exact-zero test is replaced by a snapping band `|t| <= zero_tol *
//! epsilon^2` so that quadrature noise cannot flip a verdict. Values just
//! outside the band are suspicious too; [`classify_strict`] refuses to
//! decide inside a ten-times-wider ambiguity band, and [`analyze`] resolves
//! such cases by sweeping the orbit radius instead.

use serde::Serialize;

use crate::averaging::{self, EigenSummary, FunctionalResult};
use crate::error::{Result, StabError};
use crate::expr::SystemDef;
use crate::linearize::{self, EpsilonSweep};

/// Default half-width of the zero-snapping band, relative to `epsilon^2`.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// The ambiguity band checked by [`classify_strict`] extends to this
/// multiple of the snapping band.
pub const AMBIGUITY_SPAN: f64 = 10.0;

/// Relative tolerance under which the discriminant `s^2 - 4p` counts as
/// zero, making a node degenerate. Compared against `max(s^2, |p|)` so the
/// test is scale-free.
pub const DEGENERATE_DISC_TOL: f64 = 1e-6;

/// Sign of a functional after tolerance snapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

impl Sign {
    fn of(value: f64, half_width: f64) -> Sign {
        if value.abs() <= half_width {
            Sign::Zero
        } else if value < 0.0 {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }
}

/// Which of the five sign cases fired. The cases are checked in order, and
/// exactly one applies to any snapped sign pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Criterion {
    /// `t1 > 0`: energy is pumped into the cycle.
    I,
    /// `t1 < 0`, `t2 >= 0`: contraction along one direction, escape along
    /// another.
    II,
    /// `t1 < 0`, `t2 < 0`: contraction in every direction.
    III,
    /// `t1 = 0`, `t2 < 0`: no net energy exchange around a center-like
    /// point.
    IV,
    /// `t1 = 0`, `t2 >= 0`: drift with no restoring force.
    V,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::I => "I",
            Criterion::II => "II",
            Criterion::III => "III",
            Criterion::IV => "IV",
            Criterion::V => "V",
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Equilibrium status of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Unstable,
    AsymptoticallyStable,
    MarginallyStable,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Unstable => "Unstable",
            Status::AsymptoticallyStable => "AsymptoticallyStable",
            Status::MarginallyStable => "MarginallyStable",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Three-way stability used where asymptotic and marginal behavior need no
/// distinction: singular-point types and sweep verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "Stable",
            Stability::Unstable => "Unstable",
            Stability::Marginal => "Marginal",
        }
    }
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of the sign classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub criterion: Criterion,
    pub t1_sign: Sign,
    pub t2_sign: Sign,
}

/// Geometric type of the equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SingularKind {
    Node,
    DegenerateNode,
    Focus,
    Center,
    Saddle,
    /// Both functionals vanish: the equivalent linear model is `x'' = 0`
    /// and nearby states drift at constant velocity.
    UniformMotion,
}

impl SingularKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SingularKind::Node => "Node",
            SingularKind::DegenerateNode => "DegenerateNode",
            SingularKind::Focus => "Focus",
            SingularKind::Center => "Center",
            SingularKind::Saddle => "Saddle",
            SingularKind::UniformMotion => "UniformMotion",
        }
    }
}

impl std::fmt::Display for SingularKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Singular-point type with the eigenvalue parameters recovered from the
/// functionals.
///
/// `trace` and `det` are the eigenvalue sum `t1 / epsilon^2` and product
/// `-t2 / epsilon^2` after snapping; `discriminant` is `trace^2 - 4 det`.
/// `back_solved` holds the `(a, b)` pair of the matching eigenvalue
/// pattern: `{-a, -b}` or `{a, b}` for nodes, `-a ± bj` or `a ± bj` for
/// foci, `± bj` for centers and `{-a, b}` for saddles. Plugging the pair
/// back into its pattern reproduces `(t1, t2)` to within roundoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularPoint {
    pub kind: SingularKind,
    pub stability: Stability,
    pub back_solved: Option<(f64, f64)>,
    pub trace: f64,
    pub det: f64,
    pub discriminant: f64,
}

/// Classifies the snapped signs of `(t1, t2)`.
///
/// Total over all inputs: the five cases partition the nine sign pairs.
/// `zero_tol` scales the snapping band as described at the module level and
/// must be positive.
pub fn classify(fr: &FunctionalResult, zero_tol: f64) -> Verdict {
    assert!(zero_tol > 0.0, "zero_tol must be positive");
    let band = zero_tol * fr.epsilon * fr.epsilon;
    let t1_sign = Sign::of(fr.t1, band);
    let t2_sign = Sign::of(fr.t2, band);
    let (criterion, status) = match (t1_sign, t2_sign) {
        (Sign::Pos, _) => (Criterion::I, Status::Unstable),
        (Sign::Neg, Sign::Zero | Sign::Pos) => (Criterion::II, Status::Unstable),
        (Sign::Neg, Sign::Neg) => (Criterion::III, Status::AsymptoticallyStable),
        (Sign::Zero, Sign::Neg) => (Criterion::IV, Status::MarginallyStable),
        (Sign::Zero, Sign::Zero | Sign::Pos) => (Criterion::V, Status::Unstable),
    };
    Verdict {
        status,
        criterion,
        t1_sign,
        t2_sign,
    }
}

/// Like [`classify`], but refuses to decide when `|t1|` falls inside the
/// ambiguity band `(zero_tol, AMBIGUITY_SPAN * zero_tol) * epsilon^2`,
/// where a sign read off a single orbit radius is not trustworthy. Callers
/// should resolve the ambiguity with an orbit-radius sweep; [`analyze`]
/// does exactly that.
pub fn classify_strict(fr: &FunctionalResult, zero_tol: f64) -> Result<Verdict> {
    assert!(zero_tol > 0.0, "zero_tol must be positive");
    let band = zero_tol * fr.epsilon * fr.epsilon;
    let mag = fr.t1.abs();
    if mag > band && mag < AMBIGUITY_SPAN * band {
        return Err(StabError::AmbiguousNearBoundary {
            t1: fr.t1,
            lo: band,
            hi: AMBIGUITY_SPAN * band,
        });
    }
    Ok(classify(fr, zero_tol))
}

/// Determines the singular-point type from the functionals.
///
/// Works on the snapped eigenvalue sum `s = t1 / epsilon^2` and product
/// `p = -t2 / epsilon^2`:
///
/// * `s = 0`, `p = 0`: uniform motion (a doubly degenerate saddle),
/// * `p <= 0` otherwise: saddle, eigenvalues `{-a, b}`,
/// * `p > 0`, discriminant zero within tolerance: degenerate node,
/// * `p > 0`, discriminant positive: node, stable exactly when `s < 0`,
/// * `p > 0`, discriminant negative: focus, or a center when `s = 0`.
///
/// Total over all inputs; `zero_tol` must be positive.
pub fn classify_singular_point(fr: &FunctionalResult, zero_tol: f64) -> SingularPoint {
    assert!(zero_tol > 0.0, "zero_tol must be positive");
    let eps2 = fr.epsilon * fr.epsilon;
    let mut s = fr.t1 / eps2;
    let mut p = -fr.t2 / eps2;
    if s.abs() <= zero_tol {
        s = 0.0;
    }
    if p.abs() <= zero_tol {
        p = 0.0;
    }
    let d = s * s - 4.0 * p;
    let point = |kind, stability, a: f64, b: f64| SingularPoint {
        kind,
        stability,
        back_solved: Some((a, b)),
        trace: s,
        det: p,
        discriminant: d,
    };

    if s == 0.0 && p == 0.0 {
        return point(SingularKind::UniformMotion, Stability::Unstable, 0.0, 0.0);
    }
    if p <= 0.0 {
        let b = 0.5 * (s + d.sqrt());
        return point(SingularKind::Saddle, Stability::Unstable, b - s, b);
    }
    if d.abs() <= DEGENERATE_DISC_TOL * (s * s).max(p.abs()) {
        let a = 0.5 * s.abs();
        let stability = if s < 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        };
        return point(SingularKind::DegenerateNode, stability, a, a);
    }
    if d > 0.0 {
        let sq = d.sqrt();
        let (stability, a, b) = if s < 0.0 {
            (Stability::Stable, 0.5 * (-s - sq), 0.5 * (-s + sq))
        } else {
            (Stability::Unstable, 0.5 * (s - sq), 0.5 * (s + sq))
        };
        return point(SingularKind::Node, stability, a, b);
    }
    if s == 0.0 {
        return point(SingularKind::Center, Stability::Marginal, 0.0, p.sqrt());
    }
    let stability = if s < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    point(SingularKind::Focus, stability, 0.5 * s.abs(), 0.5 * (-d).sqrt())
}

/// Knobs for [`analyze`].
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    /// Snapping-band scale; see [`classify`].
    pub zero_tol: f64,
    /// Quadrature nodes; defaults to the system's preferred count.
    pub nodes: Option<usize>,
    /// Resolve ambiguous or center-like verdicts with an orbit-radius
    /// sweep. When disabled, ambiguity surfaces as an error instead.
    pub auto_sweep: bool,
    /// The sweep covers `[epsilon, sweep_span * epsilon]`.
    pub sweep_span: f64,
    pub sweep_samples: usize,
    /// Largest residual accepted when verifying the origin.
    pub equilibrium_tol: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            zero_tol: DEFAULT_ZERO_TOL,
            nodes: None,
            auto_sweep: true,
            sweep_span: AMBIGUITY_SPAN,
            sweep_samples: 8,
            equilibrium_tol: crate::expr::EQUILIBRIUM_TOL,
        }
    }
}

/// Full classification of one system at one orbit radius.
///
/// `verdict` always reflects the sign cases at the requested radius.
/// `status` is the final answer: it equals `verdict.status` unless the
/// sweep path ran, in which case it comes from the sweep and
/// `sweep_derived` is set.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub functionals: FunctionalResult,
    pub eigen: EigenSummary,
    pub verdict: Verdict,
    pub singular: SingularPoint,
    pub status: Status,
    pub sweep: Option<EpsilonSweep>,
    pub sweep_derived: bool,
}

/// Evaluates the functionals and classifies the origin, escalating to an
/// orbit-radius sweep when a single radius cannot settle the verdict.
///
/// The sweep engages in two situations: the strict classifier finds `t1`
/// inside the ambiguity band, or the sign cases land on a center-like
/// verdict (case IV), where nonlinear terms beyond the probing radius
/// decide between decay, orbit and escape. The sweep covers
/// `[epsilon, sweep_span * epsilon]`, so `epsilon` should be chosen small
/// enough that the whole band stays inside the rhs domain.
pub fn analyze(s: &SystemDef, epsilon: f64, options: &AnalyzeOptions) -> Result<Analysis> {
    s.verify_equilibrium(options.equilibrium_tol)?;
    let nodes = options.nodes.unwrap_or_else(|| s.default_nodes());
    let fr = averaging::functionals(s, epsilon, nodes)?;
    let verdict = classify(&fr, options.zero_tol);
    let singular = classify_singular_point(&fr, options.zero_tol);
    let eigen = averaging::eigen_summary(&fr);

    let strict = classify_strict(&fr, options.zero_tol);
    let needs_sweep = strict.is_err() || verdict.criterion == Criterion::IV;
    if !needs_sweep || !options.auto_sweep {
        strict?;
        return Ok(Analysis {
            functionals: fr,
            eigen,
            verdict,
            singular,
            status: verdict.status,
            sweep: None,
            sweep_derived: false,
        });
    }

    let sweep = linearize::epsilon_sweep(
        s,
        epsilon,
        options.sweep_span * epsilon,
        options.sweep_samples,
        nodes,
    )?;
    let status = match sweep.verdict {
        Stability::Stable => Status::AsymptoticallyStable,
        Stability::Unstable => Status::Unstable,
        Stability::Marginal => Status::MarginallyStable,
    };
    Ok(Analysis {
        functionals: fr,
        eigen,
        verdict,
        singular,
        status,
        sweep: Some(sweep),
        sweep_derived: true,
    })
}
