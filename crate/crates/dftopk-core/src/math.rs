//! Scalar numeric kernels shared by the operators.

/// Overflow-safe logistic function with exact complement symmetry:
/// `sigmoid(z) + sigmoid(-z) == 1.0` holds bitwise for every finite `z`,
/// because the negative branch is literally the complement of the positive
/// one. The tradeoff is absolute (~1e-16) rather than relative accuracy for
/// deeply negative arguments, which the loss path avoids by going through
/// `softplus` instead of through probabilities.
#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    let p = 1.0 / (1.0 + (-z.abs()).exp());
    if z >= 0.0 {
        p
    } else {
        1.0 - p
    }
}

/// Numerically stable log(1 + e^z); never overflows and never returns -inf.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Dense row-major matrix–vector product: `out = W x`, where `W` has
/// `out.len()` rows and `x.len()` columns.
pub(crate) fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// Row softmax in place, stabilized by subtracting the row maximum.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_textbook_form_in_the_well_scaled_range() {
        for &z in &[-30.0f64, -4.0, -1.5, -0.5, 0.0, 0.5, 1.5, 4.0, 30.0] {
            let direct = 1.0 / (1.0 + (-z).exp());
            assert!((sigmoid(z) - direct).abs() <= 1e-15, "z={z}");
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_complement_is_bitwise_exact() {
        for i in 0..10_000 {
            let z = (i as f64 - 5000.0) * 0.1731;
            assert_eq!(sigmoid(z) + sigmoid(-z), 1.0, "z={z}");
        }
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert_eq!(sigmoid(1e9), 1.0);
        assert_eq!(sigmoid(-1e9), 0.0);
        assert_eq!(sigmoid(f64::MAX), 1.0);
        assert_eq!(sigmoid(-f64::MAX), 0.0);
    }

    #[test]
    fn softplus_is_stable_at_both_ends() {
        // softplus(z) ~ z for large z, ~ e^z for very negative z.
        assert_eq!(softplus(1e4), 1e4);
        assert!(softplus(-800.0) == 0.0);
        let z = -5.0f64;
        assert!((softplus(z) - (1.0 + z.exp()).ln()).abs() < 1e-15);
        assert!(softplus(0.0) == 2.0f64.ln());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![1000.0, 1001.0, 999.0];
        softmax_in_place(&mut row);
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(row[1] > row[0] && row[0] > row[2]);
    }
}
