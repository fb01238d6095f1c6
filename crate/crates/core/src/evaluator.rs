//! The `(p, v)` guidance interface used by the tree search.

use crate::board::{action_index, Level, Push, State};

/// Policy over the flat action space plus a normalized remaining-cost
/// estimate (`0` = solved, `1` = hopeless / at the step cap).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub policy: Vec<f64>,
    pub value: f64,
}

impl Evaluation {
    /// Prior for `push` on a board of the given size.
    pub fn prior(&self, push: Push, height: usize, width: usize) -> f64 {
        self.policy[action_index(push, height, width)]
    }
}

pub trait Evaluator: Sync {
    /// Evaluates a non-terminal state. `legal` is `level.legal_pushes(state)`,
    /// passed in because callers always have it at hand.
    fn evaluate(&self, level: &Level, state: &State, legal: &[Push]) -> Evaluation;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, level: &Level, state: &State, legal: &[Push]) -> Evaluation {
        (**self).evaluate(level, state, legal)
    }
}

/// Uniform prior over legal pushes and a constant value of 0.5.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformEvaluator;

pub const UNIFORM_VALUE: f64 = 0.5;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, level: &Level, _state: &State, legal: &[Push]) -> Evaluation {
        let mut policy = vec![0.0; level.action_space()];
        if !legal.is_empty() {
            let share = 1.0 / legal.len() as f64;
            for &p in legal {
                policy[action_index(p, level.height(), level.width())] = share;
            }
        }
        Evaluation {
            policy,
            value: UNIFORM_VALUE,
        }
    }
}

/// Zeroes `raw` outside `legal` and renormalizes over `legal`. Falls back to
/// uniform-over-legal when the legal mass is zero or not finite.
pub fn mask_renormalize(raw: &[f64], legal: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    if legal.is_empty() {
        return out;
    }
    let mass: f64 = legal.iter().map(|&i| raw[i].max(0.0)).sum();
    if mass > 0.0 && mass.is_finite() {
        for &i in legal {
            out[i] = raw[i].max(0.0) / mass;
        }
    } else {
        let share = 1.0 / legal.len() as f64;
        for &i in legal {
            out[i] = share;
        }
    }
    out
}
