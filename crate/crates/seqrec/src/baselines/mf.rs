//! Latent-factor matrix factorization trained by SGD on observed entries of
//! the regularized squared error.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Estimate, InteractionMatrix};
use crate::error::{Error, Result};

const DIVERGENCE_LIMIT: f64 = 1e6;

/// User and item latent factors of dimension k. Item rows are indexed by
/// token; users by their matrix row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentFactors {
    pub k: usize,
    /// Row per matrix user, flattened k-wide.
    pub user_factors: Vec<f64>,
    pub n_users: usize,
    /// Row per token (reserved rows stay at zero), flattened k-wide.
    pub item_factors: Vec<f64>,
    pub n_tokens: usize,
    /// Users the factors were trained on, in row order.
    pub user_ids: Vec<String>,
    /// Observed-entry mean squared error per epoch.
    pub epoch_mse: Vec<f64>,
}

impl LatentFactors {
    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k..(u + 1) * self.k]
    }

    pub fn item_row(&self, token: usize) -> &[f64] {
        &self.item_factors[token * self.k..(token + 1) * self.k]
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.user_ids.iter().position(|u| u == user_id)
    }

    pub fn user_norm(&self, u: usize) -> f64 {
        self.user_row(u).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn item_norm(&self, token: usize) -> f64 {
        self.item_row(token).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// SGD over observed entries of `(r - q.p)^2 + lambda (|p|^2 + |q|^2)`,
/// deterministic for a given seed. Aborts if the epoch MSE exceeds the
/// divergence limit.
pub fn mf_train(
    matrix: &InteractionMatrix,
    k: usize,
    learning_rate: f64,
    regularization: f64,
    epochs: usize,
    seed: u64,
) -> Result<LatentFactors> {
    if k == 0 {
        return Err(Error::Invalid("latent dimension k must be positive".into()));
    }
    let mut entries = matrix.entries();
    if entries.is_empty() {
        return Err(Error::Invalid(
            "interaction matrix has no observed entries".to_string(),
        ));
    }

    let n_users = matrix.n_users();
    let n_tokens = matrix.n_tokens();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-0.1..0.1)).collect()
    };
    let mut factors = LatentFactors {
        k,
        user_factors: init(&mut rng, n_users * k),
        n_users,
        item_factors: init(&mut rng, n_tokens * k),
        n_tokens,
        user_ids: matrix.users().map(|(u, _)| u.to_string()).collect(),
        epoch_mse: Vec::with_capacity(epochs),
    };

    for _epoch in 0..epochs {
        entries.shuffle(&mut rng);
        let mut squared_error = 0.0;
        for &(u, token, r) in &entries {
            let base_u = u * k;
            let base_i = token * k;
            let mut dot = 0.0;
            for f in 0..k {
                dot += factors.user_factors[base_u + f] * factors.item_factors[base_i + f];
            }
            let err = r - dot;
            squared_error += err * err;
            for f in 0..k {
                let pu = factors.user_factors[base_u + f];
                let qi = factors.item_factors[base_i + f];
                factors.user_factors[base_u + f] =
                    pu + learning_rate * (err * qi - regularization * pu);
                factors.item_factors[base_i + f] =
                    qi + learning_rate * (err * pu - regularization * qi);
            }
        }
        let mse = squared_error / entries.len() as f64;
        if !mse.is_finite() || mse > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { loss: mse });
        }
        factors.epoch_mse.push(mse);
    }
    Ok(factors)
}

/// Observed-entry mean squared error of the current factors.
pub fn observed_mse(factors: &LatentFactors, matrix: &InteractionMatrix) -> f64 {
    let entries = matrix.entries();
    let total: f64 = entries
        .iter()
        .map(|&(u, token, r)| {
            let dot: f64 = factors
                .user_row(u)
                .iter()
                .zip(factors.item_row(token))
                .map(|(p, q)| p * q)
                .sum();
            (r - dot) * (r - dot)
        })
        .sum();
    total / entries.len().max(1) as f64
}

/// Inner product of the user and item factors; unknown users or items are
/// cold starts and return the no-evidence marker.
pub fn mf_predict(factors: &LatentFactors, user: Option<usize>, token: usize) -> Estimate {
    let Some(u) = user else {
        return Estimate::NO_EVIDENCE;
    };
    if u >= factors.n_users || token >= factors.n_tokens {
        return Estimate::NO_EVIDENCE;
    }
    let value = factors
        .user_row(u)
        .iter()
        .zip(factors.item_row(token))
        .map(|(p, q)| p * q)
        .sum();
    Estimate {
        value,
        evidence: true,
    }
}
