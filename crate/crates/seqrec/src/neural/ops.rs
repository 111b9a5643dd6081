//! Forward and backward kernels for the embedding lookup, affine layers,
//! and elementwise activations.

use crate::neural::Matrix;

/// Gathers embedding rows: output row t equals `embeddings.row(tokens[t])`.
/// An out-of-range token is a vocabulary-contract violation and aborts.
pub fn embed(tokens: &[usize], embeddings: &Matrix) -> Matrix {
    let d = embeddings.cols();
    let mut out = Matrix::zeros(tokens.len(), d);
    for (t, &tok) in tokens.iter().enumerate() {
        assert!(
            tok < embeddings.rows(),
            "token {tok} out of range for a {}-row embedding table",
            embeddings.rows()
        );
        out.row_mut(t).copy_from_slice(embeddings.row(tok));
    }
    out
}

/// Scatter-adds output-row gradients back into the embedding gradient.
/// Repeated tokens accumulate every contribution.
pub fn embed_backward(tokens: &[usize], grad_out: &Matrix, embedding_grad: &mut Matrix) {
    assert_eq!(grad_out.rows(), tokens.len(), "embed_backward row mismatch");
    assert_eq!(
        grad_out.cols(),
        embedding_grad.cols(),
        "embed_backward col mismatch"
    );
    for (t, &tok) in tokens.iter().enumerate() {
        let src = grad_out.row(t);
        let dst = embedding_grad.row_mut(tok);
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

/// y = W x + b.
pub fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    assert_eq!(b.len(), w.rows(), "affine bias length mismatch");
    let mut y = w.matvec(x);
    for (yi, bi) in y.iter_mut().zip(b) {
        *yi += bi;
    }
    y
}

/// Backward for `affine`: accumulates dW += dy x^T and db += dy, returns dx.
pub fn affine_backward(
    w: &Matrix,
    x: &[f64],
    dy: &[f64],
    dw: &mut Matrix,
    db: &mut [f64],
) -> Vec<f64> {
    dw.add_outer(dy, x);
    for (dbi, dyi) in db.iter_mut().zip(dy) {
        *dbi += dyi;
    }
    w.matvec_transpose(dy)
}

fn sigmoid_scalar(x: f64) -> f64 {
    // Branch on sign so the exponential never overflows.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// Backward for `sigmoid` given its output y: dx = dy * y * (1 - y).
pub fn sigmoid_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&yi, &di)| di * yi * (1.0 - yi)).collect()
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Backward for `relu` given its input x.
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(dy)
        .map(|(&xi, &di)| if xi > 0.0 { di } else { 0.0 })
        .collect()
}
