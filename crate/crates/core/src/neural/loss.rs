use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Mean squared error between two equal-length vectors.
pub fn mse_loss(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::Shape(format!(
            "prediction length {} vs target length {}",
            prediction.len(),
            target.len()
        )));
    }
    let sum: f64 = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / prediction.len() as f64)
}

/// Batch MSE over every element, with its gradient wrt `prediction`.
pub fn mse_batch(
    prediction: ArrayView2<f64>,
    target: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if prediction.dim() != target.dim() || prediction.is_empty() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            prediction.dim(),
            target.dim()
        )));
    }
    let n = prediction.len() as f64;
    let diff = &prediction - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_pair(z_i: &[f64], z_j: &[f64], similarity: f64, margin: f64) -> Result<()> {
    if z_i.len() != z_j.len() {
        return Err(Error::Shape(format!(
            "embedding lengths {} and {} differ",
            z_i.len(),
            z_j.len()
        )));
    }
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "margin must be positive, got {margin}"
        )));
    }
    if !(0.0..=1.0).contains(&similarity) {
        return Err(Error::InvalidParameter(format!(
            "pair similarity must lie in [0, 1], got {similarity}"
        )));
    }
    Ok(())
}

/// Soft-label contrastive loss for one pair: similar pairs are pulled
/// together in proportion to `similarity`, dissimilar ones pushed out to
/// at least `margin`.
pub fn contrastive_pair_loss(
    z_i: &[f64],
    z_j: &[f64],
    similarity: f64,
    margin: f64,
) -> Result<f64> {
    check_pair(z_i, z_j, similarity, margin)?;
    let d = euclidean(z_i, z_j);
    let hinge = (margin - d).max(0.0);
    Ok(similarity * d * d + (1.0 - similarity) * hinge * hinge)
}

/// Loss and gradient wrt `z_i`; the gradient wrt `z_j` is its negation.
/// At `d = 0` the hinge term has no defined direction and contributes zero.
pub fn contrastive_pair_grad(
    z_i: &[f64],
    z_j: &[f64],
    similarity: f64,
    margin: f64,
) -> Result<(f64, Vec<f64>)> {
    check_pair(z_i, z_j, similarity, margin)?;
    let d = euclidean(z_i, z_j);
    let hinge = (margin - d).max(0.0);
    let loss = similarity * d * d + (1.0 - similarity) * hinge * hinge;
    // dL/dz_i = 2S(z_i - z_j) - 2(1-S)(m-d)/d (z_i - z_j) for d < m
    let mut coeff = 2.0 * similarity;
    if hinge > 0.0 && d > 0.0 {
        coeff -= 2.0 * (1.0 - similarity) * hinge / d;
    }
    let grad = z_i.iter().zip(z_j).map(|(a, b)| coeff * (a - b)).collect();
    Ok((loss, grad))
}

/// Scales a pair loss by the modality weights of both members.
pub fn weighted_pair_loss(loss: f64, lambda_i: f64, lambda_j: f64) -> f64 {
    lambda_i * lambda_j * loss
}

/// Inverse-frequency modality weights `(lambda_music, lambda_painting)`.
pub fn modality_weights(n_music: usize, n_paintings: usize) -> Result<(f64, f64)> {
    if n_music == 0 || n_paintings == 0 {
        return Err(Error::InvalidCatalog(format!(
            "modality weights need both counts positive, got {n_music} music and {n_paintings} paintings"
        )));
    }
    let total = (n_music + n_paintings) as f64;
    Ok((n_paintings as f64 / total, n_music as f64 / total))
}
