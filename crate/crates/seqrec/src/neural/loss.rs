//! Binary cross-entropy over per-item interaction probabilities.

use serde::{Deserialize, Serialize};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before the
/// logarithms so the loss is total. Gradients are zero in the clamped region.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// -sum[y ln p + (1 - y) ln(1 - p)], the full binary cross-entropy.
    Full,
    /// -sum[y ln p]: only positive targets contribute. Kept as a comparison
    /// switch; `Full` is the default.
    PositivesOnly,
}

/// Per-user loss (summed over items) and its gradient d loss / d p.
/// Callers average the per-user values over their user set.
pub fn bce_loss(p: &[f64], y: &[u8], kind: LossKind) -> (f64, Vec<f64>) {
    assert_eq!(p.len(), y.len(), "bce_loss length mismatch");
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for k in 0..p.len() {
        let clamped = p[k].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let inside = p[k] > PROB_CLAMP && p[k] < 1.0 - PROB_CLAMP;
        let yk = f64::from(y[k]);
        match kind {
            LossKind::Full => {
                loss -= yk * clamped.ln() + (1.0 - yk) * (1.0 - clamped).ln();
                if inside {
                    grad[k] = -yk / clamped + (1.0 - yk) / (1.0 - clamped);
                }
            }
            LossKind::PositivesOnly => {
                loss -= yk * clamped.ln();
                if inside {
                    grad[k] = -yk / clamped;
                }
            }
        }
    }
    (loss, grad)
}
