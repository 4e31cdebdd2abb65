//! Randomized cross-checks over generated expressions and systems: printing
//! against reparsing, quadrature against closed-form moments, and the
//! classifier against systems with planted eigenvalues.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stab_core::averaging::{cycle_average, functionals_scalar, functionals_statespace};
use stab_core::classify::{
    classify, classify_singular_point, SingularKind, Stability, Status, DEFAULT_ZERO_TOL,
    DEGENERATE_DISC_TOL,
};
use stab_core::expr::{parse_expr, parse_system, BinOp, Expr, Func};

fn params() -> BTreeMap<String, f64> {
    BTreeMap::from([("mu".to_string(), 1.3), ("k".to_string(), 0.7)])
}

/// Trees built from the same vocabulary the parser accepts. Number leaves are
/// non-negative because the grammar has no negative literals; negation only
/// enters through `Neg`.
fn tree() -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        3 => (0..2usize).prop_map(Expr::Var),
        3 => (0.0..8.0f64).prop_map(Expr::Num),
        1 => Just(Expr::Param("mu".to_string())),
        1 => Just(Expr::Param("k".to_string())),
    ];
    leaf.prop_recursive(4, 40, 3, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow),
        ];
        let func = prop_oneof![
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Tan),
            Just(Func::Exp),
            Just(Func::Ln),
            Just(Func::Sqrt),
            Just(Func::Abs),
        ];
        prop_oneof![
            4 => (op, inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::Bin(op, Box::new(l), Box::new(r))),
            1 => inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            2 => (func, inner).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
        ]
    })
    .boxed()
}

proptest! {
    #[test]
    fn printed_trees_reparse_to_the_same_ast(e in tree()) {
        let printed = e.to_string();
        let back = parse_expr(&printed, 2, &params())
            .unwrap_or_else(|err| panic!("`{printed}` failed to reparse: {err}"));
        prop_assert_eq!(&back, &e, "printed as `{}`", printed);
    }

    #[test]
    fn printed_trees_evaluate_identically(
        e in tree(),
        probes in prop::collection::vec(prop::array::uniform2(-1.5..1.5f64), 4),
    ) {
        let printed = e.to_string();
        let back = parse_expr(&printed, 2, &params()).unwrap();
        for st in probes {
            match (e.eval(&st, &params()), back.eval(&st, &params())) {
                (Ok(a), Ok(b)) => prop_assert!(
                    a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs()),
                    "{} vs {} at {:?} from `{}`", a, b, st, printed
                ),
                (Err(_), Err(_)) => {}
                (lhs, rhs) => prop_assert!(
                    false,
                    "eval disagreement at {:?} on `{}`: {:?} vs {:?}", st, printed, lhs, rhs
                ),
            }
        }
    }

    #[test]
    fn shifting_the_tree_matches_shifting_the_state(
        e in tree(),
        z in prop::array::uniform2(-1.2..1.2f64),
        off in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let shifted = e.shifted(&off);
        let moved = [z[0] + off[0], z[1] + off[1]];
        match (shifted.eval(&z, &params()), e.eval(&moved, &params())) {
            (Ok(a), Ok(b)) => prop_assert!(
                a == b || (a - b).abs() <= 2.0 * f64::EPSILON * a.abs().max(b.abs()),
                "shifted tree gave {}, direct evaluation gave {}", a, b
            ),
            (Err(_), Err(_)) => {}
            (lhs, rhs) => prop_assert!(
                false,
                "shift disagreement at {:?} + {:?}: {:?} vs {:?}", z, off, lhs, rhs
            ),
        }
    }

    #[test]
    fn scalar_and_state_space_forms_agree_on_canonical_systems(
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        c in -2.0..2.0f64,
        d in -2.0..2.0f64,
    ) {
        let doc = format!(
            r#"{{"n": 2, "rhs": ["x2", "{a:.17e}*x1 + {b:.17e}*x2 + {c:.17e}*x1^3 + {d:.17e}*x1^2*x2"]}}"#
        );
        let s = parse_system(&doc).unwrap();
        let scalar = functionals_scalar(&s, 0.5, 256).unwrap();
        let state = functionals_statespace(&s, 0.5, 256).unwrap();
        prop_assert!(
            (scalar.t1 - state.t1).abs() <= 1e-12,
            "t1 scalar {} vs state-space {}", scalar.t1, state.t1
        );
    }
}

const VDP_DOC: &str =
    r#"{"label": "vdp", "n": 2, "params": {"mu": 1.0}, "rhs": ["x2", "mu*(1 - x1^2)*x2 - x1"]}"#;
const PENDULUM_DOC: &str = r#"{"order2": {"f": "-x2 - sin(x1)"}}"#;
const CUBIC_DOC: &str = r#"{"n": 2, "rhs": ["x2", "x2*x2 - x1 + x1^3"]}"#;
const THREE_DOC: &str =
    r#"{"n": 3, "params": {"k": 0.5}, "rhs": ["x2", "-k*(x1 + x3)", "x1 - x3"]}"#;

#[test]
fn every_delimiter_deletion_is_rejected() {
    for doc in [VDP_DOC, PENDULUM_DOC, CUBIC_DOC, THREE_DOC] {
        parse_system(doc).expect("the unmutated document must parse");
        for (i, ch) in doc.char_indices() {
            if !"(){}[],:\"".contains(ch) {
                continue;
            }
            let mutated = format!("{}{}", &doc[..i], &doc[i + 1..]);
            assert!(
                parse_system(&mutated).is_err(),
                "dropping `{ch}` at byte {i} of `{doc}` was accepted"
            );
        }
    }
}

#[test]
fn undeclared_symbols_are_rejected_wherever_they_appear() {
    for (doc, pat, repl) in [
        (VDP_DOC, "mu*", "nu*"),
        (VDP_DOC, "\"x2\"", "\"q2\""),
        (PENDULUM_DOC, "sin", "sgn"),
        (CUBIC_DOC, "x1^3", "x9^3"),
        (THREE_DOC, "x3", "x30"),
    ] {
        parse_system(doc).expect("the unmutated document must parse");
        let mutated = doc.replacen(pat, repl, 1);
        assert_ne!(doc, mutated, "pattern `{pat}` not found in `{doc}`");
        assert!(
            parse_system(&mutated).is_err(),
            "replacing `{pat}` with `{repl}` in `{doc}` was accepted"
        );
    }
}

type Moment = (fn(f64) -> f64, f64);

#[test]
fn trig_moments_match_their_closed_forms_at_every_node_count() {
    let cases: [Moment; 4] = [
        (|t| t.cos() * t.sin(), 0.0),
        (|t| t.cos().powi(2), 0.5),
        (|t| t.cos().powi(4), 0.375),
        (|t| (t.cos() * t.sin()).powi(2), 0.125),
    ];
    for nodes in [64, 100, 256, 1024, 4096] {
        for (g, want) in cases {
            let (got, _) = cycle_average(g, nodes).unwrap();
            assert!(
                (got - want).abs() <= 1e-13,
                "{nodes} nodes: got {got}, want {want}"
            );
        }
    }
}

fn linear_doc(a: f64, b: f64, c: f64, d: f64) -> String {
    format!(
        r#"{{"n": 2, "rhs": ["{a:.17e}*x1 + {b:.17e}*x2", "{c:.17e}*x1 + {d:.17e}*x2"]}}"#
    )
}

#[test]
fn a_thousand_random_linear_systems_hit_the_trace_and_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2a);
    let eps = 0.3;
    let eps2 = eps * eps;
    for trial in 0..1000 {
        let [a, b, c, d]: [f64; 4] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let s = parse_system(&linear_doc(a, b, c, d)).unwrap();
        let fr = functionals_statespace(&s, eps, 64).unwrap();
        assert!(
            (fr.t1 - (a + d) * eps2).abs() <= 1e-9 * eps2,
            "trial {trial}: t1 {} vs {}",
            fr.t1,
            (a + d) * eps2
        );
        assert!(
            (fr.t2 + (a * d - b * c) * eps2).abs() <= 1e-9 * eps2,
            "trial {trial}: t2 {} vs {}",
            fr.t2,
            -(a * d - b * c) * eps2
        );
    }
}

#[test]
fn matched_period_sampling_is_frequency_independent() {
    let (mu, eps) = (0.8, 0.9);
    let g = |t: f64| {
        let (x, xd) = (eps * t.cos(), -eps * t.sin());
        2.0 * xd * (mu * (1.0 - x * x) * xd - x)
    };
    let nodes = 256;
    let (base, _) = cycle_average(g, nodes).unwrap();
    // Sampling g(w*t) at nodes spanning one period [0, 2*pi/w) visits the
    // same phases, so the mean must not move.
    for w in [0.25, 1.0, 2.0, 3.75, 12.0] {
        let period = TAU / w;
        let mean = (0..nodes)
            .map(|k| g(w * (k as f64 * period / nodes as f64)))
            .sum::<f64>()
            / nodes as f64;
        assert!((mean - base).abs() <= 1e-12, "w = {w}: {mean} vs {base}");
    }
    // An integer number of compressed periods across [0, 2*pi) leaves the
    // quadrature exact as well.
    for w in [2.0, 3.0, 7.0] {
        let (got, _) = cycle_average(|t| g(w * t), nodes).unwrap();
        assert!((got - base).abs() <= 1e-12, "w = {w}: {got} vs {base}");
    }
}

#[test]
fn functionals_scale_as_epsilon_squared_on_linear_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 0.07;
    let mut kept = 0;
    while kept < 100 {
        let [a, b, c, d]: [f64; 4] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        // Keep the trace and determinant away from zero so the relative
        // comparison below is meaningful.
        if (a + d).abs() < 0.05 || (a * d - b * c).abs() < 0.05 {
            continue;
        }
        kept += 1;
        let s = parse_system(&linear_doc(a, b, c, d)).unwrap();
        let lo = functionals_statespace(&s, eps, 64).unwrap();
        let hi = functionals_statespace(&s, 2.0 * eps, 64).unwrap();
        assert!(
            (hi.t1 - 4.0 * lo.t1).abs() <= 1e-9 * hi.t1.abs(),
            "t1 {} vs 4 * {}",
            hi.t1,
            lo.t1
        );
        assert!(
            (hi.t2 - 4.0 * lo.t2).abs() <= 1e-9 * hi.t2.abs(),
            "t2 {} vs 4 * {}",
            hi.t2,
            lo.t2
        );
    }
}

#[derive(Clone, Copy, Debug)]
enum Planted {
    Real(f64, f64),
    Complex(f64, f64),
}

type M2 = [[f64; 2]; 2];

fn mat_mul(a: M2, b: M2) -> M2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// A nonzero magnitude bounded away from the snapping band on either side.
fn signed_mag(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.random_range(0.1..3.0);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

/// Builds a matrix with the given eigenvalues by conjugating its normal form
/// with a random shear and rotation, both well away from singular.
fn planted_matrix(rng: &mut ChaCha8Rng) -> (Planted, M2) {
    let planted = match rng.random_range(0..3u8) {
        0 => Planted::Real(signed_mag(rng), signed_mag(rng)),
        1 => Planted::Complex(signed_mag(rng), rng.random_range(0.1..3.0)),
        _ => Planted::Complex(0.0, rng.random_range(0.1..3.0)),
    };
    let normal = match planted {
        Planted::Real(l1, l2) => [[l1, 0.0], [0.0, l2]],
        Planted::Complex(al, be) => [[al, be], [-be, al]],
    };
    let g = rng.random_range(-1.5..1.5);
    let shear = [[1.0, g], [0.0, 1.0]];
    let unshear = [[1.0, -g], [0.0, 1.0]];
    let th = rng.random_range(0.0..TAU);
    let rot = [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
    let unrot = [[th.cos(), th.sin()], [-th.sin(), th.cos()]];
    let m = mat_mul(mat_mul(mat_mul(rot, shear), normal), mat_mul(unshear, unrot));
    (planted, m)
}

/// The taxonomy applied to the true eigenvalue sum and product, with the same
/// snapping rules the classifier uses on measured values.
fn expected_kind(s_raw: f64, p_raw: f64) -> SingularKind {
    let s = if s_raw.abs() <= DEFAULT_ZERO_TOL { 0.0 } else { s_raw };
    let p = if p_raw.abs() <= DEFAULT_ZERO_TOL { 0.0 } else { p_raw };
    let d = s * s - 4.0 * p;
    if s == 0.0 && p == 0.0 {
        SingularKind::UniformMotion
    } else if p <= 0.0 {
        SingularKind::Saddle
    } else if d.abs() <= DEGENERATE_DISC_TOL * (s * s).max(p.abs()) {
        SingularKind::DegenerateNode
    } else if d > 0.0 {
        SingularKind::Node
    } else if s == 0.0 {
        SingularKind::Center
    } else {
        SingularKind::Focus
    }
}

#[test]
fn planted_eigenvalues_drive_both_the_verdict_and_the_taxonomy() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x515);
    let eps = 0.5;
    for trial in 0..1000 {
        let (planted, m) = planted_matrix(&mut rng);
        let s = parse_system(&linear_doc(m[0][0], m[0][1], m[1][0], m[1][1])).unwrap();
        let fr = functionals_statespace(&s, eps, 64).unwrap();

        let expected_status = match planted {
            Planted::Real(l1, l2) => {
                if l1 > 0.0 || l2 > 0.0 {
                    Status::Unstable
                } else {
                    Status::AsymptoticallyStable
                }
            }
            Planted::Complex(al, _) => {
                if al > 0.0 {
                    Status::Unstable
                } else if al < 0.0 {
                    Status::AsymptoticallyStable
                } else {
                    Status::MarginallyStable
                }
            }
        };
        let verdict = classify(&fr, DEFAULT_ZERO_TOL);
        assert_eq!(
            verdict.status, expected_status,
            "trial {trial}: {planted:?} classified as {:?}",
            verdict
        );

        let (s_true, p_true) = match planted {
            Planted::Real(l1, l2) => (l1 + l2, l1 * l2),
            Planted::Complex(al, be) => (2.0 * al, al * al + be * be),
        };
        let sp = classify_singular_point(&fr, DEFAULT_ZERO_TOL);
        assert_eq!(
            sp.kind,
            expected_kind(s_true, p_true),
            "trial {trial}: {planted:?} typed as {:?}",
            sp
        );
        assert!(sp.back_solved.is_some(), "trial {trial}: no parameters");

        let expected_stability = match expected_status {
            Status::Unstable => Stability::Unstable,
            Status::AsymptoticallyStable => Stability::Stable,
            Status::MarginallyStable => Stability::Marginal,
        };
        assert_eq!(
            sp.stability, expected_stability,
            "trial {trial}: {planted:?}"
        );
    }
}
