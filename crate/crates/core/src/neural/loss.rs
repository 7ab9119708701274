use ndarray::ArrayView1;

use super::NeuralError;

/// Mean squared error.
pub fn mse_loss(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64, NeuralError> {
    if pred.len() != target.len() {
        return Err(NeuralError::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(NeuralError::Empty);
    }
    let sum: f64 = pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

pub fn rmse(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64, NeuralError> {
    mse_loss(pred, target).map(f64::sqrt)
}
