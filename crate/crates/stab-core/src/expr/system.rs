//! System definitions: a labeled first-order autonomous vector field
//! `x_i' = f_i(x)` with named constant parameters.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use super::parse::{parse_expr, state_index};
use super::{Expr, Func};
use crate::error::{Result, StabError};

/// Default residual tolerance for the origin-equilibrium check.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

/// Radius of the finiteness probe sphere around the origin.
const PROBE_RADIUS: f64 = 1e-3;
/// Number of probe directions on that sphere (the origin is probed too).
const PROBE_POINTS: usize = 32;

/// An immutable autonomous system `x' = f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    pub label: String,
    pub n: usize,
    pub params: BTreeMap<String, f64>,
    pub rhs: Vec<Expr>,
}

/// Raw JSON document. Either `n` + `rhs` spell the system out per state, or
/// `order2.f` gives the second derivative of a scalar equation `x'' = f(x, x')`
/// which desugars to `{x1' = x2, x2' = f}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    label: Option<String>,
    n: Option<usize>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    rhs: Option<Vec<String>>,
    order2: Option<RawOrder2>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrder2 {
    f: String,
}

/// Parses and validates a system document from JSON text.
pub fn parse_system(text: &str) -> Result<SystemDef> {
    let doc: RawDoc =
        serde_json::from_str(text).map_err(|e| StabError::Document(e.to_string()))?;

    let (n, sources) = match (&doc.rhs, &doc.order2) {
        (Some(_), Some(_)) => {
            return Err(StabError::Document(
                "`rhs` and `order2` are mutually exclusive".to_string(),
            ))
        }
        (None, None) => {
            return Err(StabError::Document(
                "one of `rhs` or `order2` is required".to_string(),
            ))
        }
        (Some(rhs), None) => {
            let n = doc.n.ok_or_else(|| {
                StabError::Document("`n` is required alongside `rhs`".to_string())
            })?;
            if n == 0 {
                return Err(StabError::Document("`n` must be at least 1".to_string()));
            }
            if rhs.len() != n {
                return Err(StabError::DimensionMismatch {
                    declared: n,
                    got: rhs.len(),
                });
            }
            (n, rhs.clone())
        }
        (None, Some(order2)) => {
            if let Some(n) = doc.n {
                if n != 2 {
                    return Err(StabError::Document(
                        "`order2` systems are two-state; omit `n` or set it to 2".to_string(),
                    ));
                }
            }
            (2, vec!["x2".to_string(), order2.f.clone()])
        }
    };

    validate_param_names(&doc.params, n)?;

    let rhs = sources
        .iter()
        .map(|src| parse_expr(src, n, &doc.params))
        .collect::<Result<Vec<_>>>()?;

    let sys = SystemDef {
        label: doc.label.unwrap_or_else(|| "unlabeled".to_string()),
        n,
        params: doc.params,
        rhs,
    };
    sys.probe_finiteness()?;
    Ok(sys)
}

fn validate_param_names(params: &BTreeMap<String, f64>, n: usize) -> Result<()> {
    for (name, value) in params {
        if !value.is_finite() {
            return Err(StabError::Document(format!(
                "parameter `{name}` is not finite"
            )));
        }
        let shadows_state = state_index(name).is_some() || name == "x" || name == "xdot";
        if shadows_state || Func::from_name(name).is_some() {
            return Err(StabError::Document(format!(
                "parameter `{name}` shadows a variable or function name"
            )));
        }
    }
    let _ = n;
    Ok(())
}

impl SystemDef {
    /// Evaluates equation `i` at `state`.
    pub fn eval_rhs(&self, i: usize, state: &[f64]) -> Result<f64> {
        self.rhs[i].eval(state, &self.params)
    }

    /// Evaluates the full vector field into `out`.
    ///
    /// # Panics
    ///
    /// Panics unless `state` and `out` both have length `n`.
    pub fn eval_all(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        assert_eq!(state.len(), self.n);
        assert_eq!(out.len(), self.n);
        for (slot, expr) in out.iter_mut().zip(&self.rhs) {
            *slot = expr.eval(state, &self.params)?;
        }
        Ok(())
    }

    /// Largest |f_i(0)| across all equations.
    pub fn equilibrium_residual(&self) -> Result<f64> {
        let origin = vec![0.0; self.n];
        let mut worst = 0.0f64;
        for i in 0..self.n {
            worst = worst.max(self.eval_rhs(i, &origin)?.abs());
        }
        Ok(worst)
    }

    /// Checks that the origin is an equilibrium: |f_i(0)| <= tol for every i.
    pub fn verify_equilibrium(&self, tol: f64) -> Result<()> {
        let residual = self.equilibrium_residual()?;
        if residual <= tol {
            Ok(())
        } else {
            Err(StabError::NotAnEquilibrium { residual, tol })
        }
    }

    /// Moves the equilibrium `xe` to the origin by the exact substitution
    /// `x_i -> x_i + xe_i` in every equation. No numeric approximation is
    /// involved; the returned system describes the dynamics of the offset
    /// coordinates.
    pub fn shift_equilibrium(&self, xe: &[f64]) -> Result<SystemDef> {
        if xe.len() != self.n {
            return Err(StabError::DimensionMismatch {
                declared: self.n,
                got: xe.len(),
            });
        }
        Ok(SystemDef {
            label: self.label.clone(),
            n: self.n,
            params: self.params.clone(),
            rhs: self.rhs.iter().map(|e| e.shifted(xe)).collect(),
        })
    }

    /// True when the system is already in scalar canonical form, with the
    /// first equation exactly `x2`.
    pub fn is_scalar_canonical(&self) -> bool {
        self.n == 2 && self.rhs[0] == Expr::Var(1)
    }

    /// True if any equation contains `abs`.
    pub fn contains_abs(&self) -> bool {
        self.rhs.iter().any(|e| e.contains_abs())
    }

    /// Quadrature node count to use when the caller does not specify one.
    /// `abs` breaks integrand smoothness, so such systems get more nodes.
    pub fn default_nodes(&self) -> usize {
        if self.contains_abs() {
            crate::averaging::ABS_DEFAULT_NODES
        } else {
            crate::averaging::DEFAULT_NODES
        }
    }

    /// Rejects definitions that cannot be evaluated near the origin: every
    /// equation must produce a finite value at the origin and at a fixed set
    /// of directions on a small sphere around it.
    fn probe_finiteness(&self) -> Result<()> {
        let mut points = vec![vec![0.0; self.n]];
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        while points.len() <= PROBE_POINTS {
            let raw: Vec<f64> = (0..self.n)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            points.push(raw.iter().map(|v| v * PROBE_RADIUS / norm).collect());
        }
        for point in &points {
            for (i, expr) in self.rhs.iter().enumerate() {
                expr.eval(point, &self.params).map_err(|e| {
                    StabError::Document(format!(
                        "equation {} cannot be evaluated near the origin: {e}",
                        i + 1
                    ))
                })?;
            }
        }
        Ok(())
    }
}
