//! Wishart sampling through the Bartlett decomposition.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{numerical_err, Result};
use crate::rng::CounterRng;

/// Draw from Wishart(df, scale).
///
/// Requires `df > P - 1` and an SPD scale. Builds the Bartlett factor A
/// (chi on the diagonal, standard normals below) and returns `L A A' L'`
/// with `L = chol(scale)`.
pub fn sample_wishart(df: f64, scale: &DMatrix<f64>, rng: &mut CounterRng) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if scale.ncols() != p {
        return numerical_err("wishart scale must be square");
    }
    if df <= (p - 1) as f64 {
        return numerical_err(format!("wishart df {df} must exceed P - 1 = {}", p - 1));
    }
    let chol = match nalgebra::Cholesky::new(scale.clone()) {
        Some(c) => c,
        None => return numerical_err("wishart scale matrix is not positive definite"),
    };

    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| crate::Error::Numerical(format!("chi-squared setup: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = chol.l() * a;
    Ok(&la * la.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Streams, UpdateKind};

    #[test]
    fn scalar_mean_is_df_times_scale() {
        let scale = DMatrix::from_element(1, 1, 0.7);
        let s = Streams::new(5, 0);
        let n = 60_000;
        let mut acc = 0.0;
        for i in 0..n {
            let mut rng = s.stream(UpdateKind::Precision, i, 0, 0);
            acc += sample_wishart(6.0, &scale, &mut rng).unwrap()[(0, 0)];
        }
        let mean = acc / n as f64;
        let want = 6.0 * 0.7;
        assert!((mean - want).abs() < 0.01 * want, "mean {mean} want {want}");
    }

    #[test]
    fn identity_scale_mean_matrix() {
        let scale = DMatrix::identity(2, 2);
        let s = Streams::new(6, 0);
        let n = 50_000;
        let mut acc = DMatrix::zeros(2, 2);
        for i in 0..n {
            let mut rng = s.stream(UpdateKind::Precision, i, 0, 0);
            acc += sample_wishart(10.0, &scale, &mut rng).unwrap();
        }
        acc /= n as f64;
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 10.0 } else { 0.0 };
                assert!((acc[(r, c)] - want).abs() < 0.02 * 10.0, "entry ({r},{c}) = {}", acc[(r, c)]);
            }
        }
    }

    #[test]
    fn df_at_p_minus_1_is_rejected() {
        let scale = DMatrix::identity(3, 3);
        let mut rng = Streams::new(7, 0).stream(UpdateKind::Precision, 0, 0, 0);
        assert!(sample_wishart(2.0, &scale, &mut rng).is_err());
    }

    #[test]
    fn non_spd_scale_is_rejected() {
        let scale = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mut rng = Streams::new(8, 0).stream(UpdateKind::Precision, 0, 0, 0);
        assert!(sample_wishart(5.0, &scale, &mut rng).is_err());
    }
}
