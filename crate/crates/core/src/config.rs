//! Numeric configuration shared by every module.

use serde::{Deserialize, Serialize};

/// Tolerances, budgets and seeds threaded through the computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Relative tolerance for rank decisions and orthonormalization.
    pub rank_tol: f64,
    /// Smallest admissible `|det|` for a generator.
    pub det_tol: f64,
    /// Largest principal angle under which two subspaces are identified.
    pub angle_tol: f64,
    /// Relative residual allowed when certifying an invariant subspace.
    pub invariance_tol: f64,
    /// Upper bound on `depth * ln(N)` for any exhaustive word enumeration.
    pub budget: f64,
    /// Randomized search trials before a tuple is declared probably irreducible.
    pub trials: usize,
    /// Seed for every randomized procedure.
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            rank_tol: 1e-9,
            det_tol: 1e-12,
            angle_tol: 1e-8,
            invariance_tol: 1e-8,
            budget: 16.0 * std::f64::consts::LN_2,
            trials: 64,
            seed: 0x5eed,
        }
    }
}

impl Config {
    pub fn with_budget_bits(mut self, bits: f64) -> Self {
        self.budget = bits * std::f64::consts::LN_2;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Largest depth `n` with `n * ln(alphabet) <= budget`.
    pub fn max_depth(&self, alphabet: usize) -> usize {
        if alphabet <= 1 {
            return usize::MAX;
        }
        (self.budget / (alphabet as f64).ln() + 1e-9).floor() as usize
    }

    pub fn check_depth(&self, alphabet: usize, depth: usize) -> crate::Result<()> {
        let max_depth = self.max_depth(alphabet);
        if depth > max_depth {
            return Err(crate::Error::BudgetExceeded {
                requested: depth,
                max_depth,
            });
        }
        Ok(())
    }
}
