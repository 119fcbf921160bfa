//! Squared-error and pairwise-rank objectives over one candidate set.

use crate::scalar::Scalar;

use super::TrainError;

fn check_lengths<T>(s: &[T], q: &[T], min: usize) -> Result<(), TrainError> {
    if s.len() != q.len() || s.len() < min {
        return Err(TrainError::LengthMismatch { predictions: s.len(), qualities: q.len() });
    }
    Ok(())
}

/// Mean of squared differences.
pub fn mse_loss<T: Scalar>(s: &[T], q: &[T]) -> Result<T, TrainError> {
    check_lengths(s, q, 1)?;
    let sum: T = s.iter().zip(q).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(sum / T::of(s.len() as f64))
}

/// `Σ_{i<j} max((δs_ij − δq_ij)·[δq_ij < 0], 0)` with `δs_ij = s_i − s_j`
/// and `δq_ij = q_i − q_j`: whenever candidate `j` is truly better than `i`,
/// the predicted gap `s_i − s_j` is penalized for exceeding the true gap.
/// A plain sum over pairs.
pub fn rank_loss<T: Scalar>(s: &[T], q: &[T]) -> Result<T, TrainError> {
    check_lengths(s, q, 2)?;
    let mut total = T::zero();
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            let dq = q[i] - q[j];
            if dq < T::zero() {
                total += (s[i] - s[j] - dq).max(T::zero());
            }
        }
    }
    Ok(total)
}

/// Weighted objective and its gradient with respect to every prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    pub mse: T,
    pub rank: T,
    pub total: T,
    pub grad: Vec<T>,
}

/// `λ_mse · mse + λ_rank · rank`. At a hinge kink the pair contributes no
/// gradient.
pub fn total_loss<T: Scalar>(s: &[T], q: &[T], lambda_mse: T, lambda_rank: T) -> Result<LossValue<T>, TrainError> {
    let mse = mse_loss(s, q)?;
    let rank = rank_loss(s, q)?;
    let k = s.len();
    let mut grad = vec![T::zero(); k];
    let two_over_k = T::of(2.0 / k as f64);
    for i in 0..k {
        grad[i] = lambda_mse * two_over_k * (s[i] - q[i]);
    }
    for i in 0..k {
        for j in i + 1..k {
            let dq = q[i] - q[j];
            if dq < T::zero() && s[i] - s[j] - dq > T::zero() {
                grad[i] += lambda_rank;
                grad[j] -= lambda_rank;
            }
        }
    }
    Ok(LossValue { mse, rank, total: lambda_mse * mse + lambda_rank * rank, grad })
}
