//! External potentials: named built-ins, expression-string evaluators, and
//! the decay classification used by the penalization modes.

use super::mesh::Point;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayClass {
    Fast,
    QuadraticSlow,
    Nondecaying,
}

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("unknown built-in potential `{0}`")]
    UnknownBuiltin(String),
    #[error("potential expression rejected: {0}")]
    BadExpression(String),
    #[error("potential is negative at {point:?}: {value}")]
    NegativeValue { point: Point, value: f64 },
}

/// The external potential `V`: a pure evaluator plus metadata for reports.
#[derive(Clone)]
pub struct PotentialSpec {
    pub dim: usize,
    pub decay_class: DecayClass,
    pub description: String,
    evaluator: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("dim", &self.dim)
            .field("decay_class", &self.decay_class)
            .field("description", &self.description)
            .finish()
    }
}

impl PotentialSpec {
    pub fn new(
        dim: usize,
        decay_class: DecayClass,
        description: impl Into<String>,
        evaluator: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { dim, decay_class, description: description.into(), evaluator: Arc::new(evaluator) }
    }

    #[inline]
    pub fn eval(&self, pt: &Point) -> f64 {
        (self.evaluator)(pt)
    }

    /// Resolve a named built-in.
    ///
    /// * `inverse_poly4`: `1 / (1 + |x|^4)`
    /// * `gaussian_bump`: `exp(-|x|^2)`
    /// * `ring_max`: `2|x|^2 / (1 + |x|^4)`, maximal on the unit sphere and
    ///   genuinely quadratically slow at infinity.
    pub fn builtin(name: &str, dim: usize) -> Result<Self, PotentialError> {
        let r2 = |p: &Point| p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        match name {
            "inverse_poly4" => Ok(Self::new(
                dim,
                if dim >= 3 { DecayClass::Fast } else { DecayClass::QuadraticSlow },
                "1/(1+|x|^4)",
                move |p| 1.0 / (1.0 + r2(p) * r2(p)),
            )),
            "gaussian_bump" => Ok(Self::new(
                dim,
                DecayClass::QuadraticSlow,
                "exp(-|x|^2)",
                move |p| (-r2(p)).exp(),
            )),
            "ring_max" => Ok(Self::new(
                dim,
                DecayClass::QuadraticSlow,
                "2|x|^2/(1+|x|^4)",
                move |p| 2.0 * r2(p) / (1.0 + r2(p) * r2(p)),
            )),
            other => Err(PotentialError::UnknownBuiltin(other.to_string())),
        }
    }

    /// Build an evaluator from an expression in the variables `x`, `y`, `z`
    /// and `r` (the Euclidean norm).
    pub fn from_expression(
        expr: &str,
        dim: usize,
        decay_class: DecayClass,
    ) -> Result<Self, PotentialError> {
        use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node};
        let tree: Node<DefaultNumericTypes> = evalexpr::build_operator_tree(expr)
            .map_err(|e| PotentialError::BadExpression(e.to_string()))?;
        let expr_owned = expr.to_string();
        // reject malformed expressions up front
        {
            let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
            for v in ["x", "y", "z", "r"] {
                ctx.set_value(v.into(), evalexpr::Value::Float(0.5)).unwrap();
            }
            tree.eval_float_with_context(&ctx)
                .map_err(|e| PotentialError::BadExpression(e.to_string()))?;
        }
        let eval = move |p: &Point| -> f64 {
            let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
            ctx.set_value("x".into(), evalexpr::Value::Float(p[0])).unwrap();
            ctx.set_value("y".into(), evalexpr::Value::Float(p[1])).unwrap();
            ctx.set_value("z".into(), evalexpr::Value::Float(p[2])).unwrap();
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            ctx.set_value("r".into(), evalexpr::Value::Float(r)).unwrap();
            tree.eval_float_with_context(&ctx).unwrap_or(f64::NAN)
        };
        Ok(Self::new(dim, decay_class, expr_owned, eval))
    }

    /// Check nonnegativity on a node sample.
    pub fn check_nonnegative(&self, points: &[Point]) -> Result<(), PotentialError> {
        for pt in points {
            let v = self.eval(pt);
            if !(v >= 0.0) {
                return Err(PotentialError::NegativeValue { point: *pt, value: v });
            }
        }
        Ok(())
    }

    /// Far-field constant `inf V |x|^2` sampled on the truncated box
    /// boundary; the quadratic-slow hypothesis holds at desk scale when
    /// this is positive.
    pub fn slow_decay_constant(&self, half_width: f64, samples: usize) -> f64 {
        let mut worst = f64::INFINITY;
        let mut visit = |pt: Point| {
            let r2 = pt[0] * pt[0] + pt[1] * pt[1] + pt[2] * pt[2];
            worst = worst.min(self.eval(&pt) * r2);
        };
        match self.dim {
            1 => {
                visit([half_width, 0.0, 0.0]);
                visit([-half_width, 0.0, 0.0]);
            }
            2 => {
                for i in 0..samples {
                    let t = -half_width + 2.0 * half_width * i as f64 / (samples - 1) as f64;
                    visit([t, half_width, 0.0]);
                    visit([t, -half_width, 0.0]);
                    visit([half_width, t, 0.0]);
                    visit([-half_width, t, 0.0]);
                }
            }
            _ => {
                for i in 0..samples {
                    for j in 0..samples {
                        let s = -half_width + 2.0 * half_width * i as f64 / (samples - 1) as f64;
                        let t = -half_width + 2.0 * half_width * j as f64 / (samples - 1) as f64;
                        visit([s, t, half_width]);
                        visit([s, t, -half_width]);
                        visit([s, half_width, t]);
                        visit([s, -half_width, t]);
                        visit([half_width, s, t]);
                        visit([-half_width, s, t]);
                    }
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_evaluate() {
        let v = PotentialSpec::builtin("inverse_poly4", 1).unwrap();
        assert!((v.eval(&[0.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((v.eval(&[1.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        let g = PotentialSpec::builtin("gaussian_bump", 2).unwrap();
        assert!((g.eval(&[1.0, 1.0, 0.0]) - (-2.0f64).exp()).abs() < 1e-15);
        let ring = PotentialSpec::builtin("ring_max", 2).unwrap();
        assert!((ring.eval(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(ring.eval(&[0.0, 0.0, 0.0]).abs() < 1e-15);
        assert!(PotentialSpec::builtin("nope", 1).is_err());
    }

    #[test]
    fn expression_potentials() {
        let v = PotentialSpec::from_expression("1/(1+x^4)", 1, DecayClass::QuadraticSlow).unwrap();
        assert!((v.eval(&[1.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        let w = PotentialSpec::from_expression("math::exp(-r^2)", 2, DecayClass::Fast).unwrap();
        assert!((w.eval(&[1.0, 0.0, 0.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(PotentialSpec::from_expression("1/(", 1, DecayClass::Fast).is_err());
        assert!(PotentialSpec::from_expression("q + 1", 1, DecayClass::Fast).is_err());
    }

    #[test]
    fn slow_decay_sampling() {
        let v = PotentialSpec::builtin("ring_max", 2).unwrap();
        let c = v.slow_decay_constant(10.0, 33);
        // 2 r^2 |x|^2 / (1 + r^4) -> 2 as r grows
        assert!(c > 1.8, "ring potential is quadratically slow, got {c}");
        let g = PotentialSpec::builtin("inverse_poly4", 1).unwrap();
        let c1 = g.slow_decay_constant(6.0, 2);
        assert!(c1 > 0.0 && c1 < 0.1);
    }
}
