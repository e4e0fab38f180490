//! Evaluation metrics: MSE, MAE, Pearson correlation, MeanMult, and the
//! target/prediction confusion histogram.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ln(10): converts base-10 log differences to natural-log ratios.
pub const LN_10: f64 = std::f64::consts::LN_10;

/// Mean squared error and its gradient 2(p - t)/n per element.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::parameter(format!(
            "mse needs equal nonempty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target.iter()) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, grad))
}

/// MeanMult: exp of the mean absolute natural-log ratio between estimated
/// and true volumes, computed from base-10 log values.
pub fn mean_mult(pred_log10: &[f64], target_log10: &[f64]) -> Result<f64> {
    if pred_log10.is_empty() || pred_log10.len() != target_log10.len() {
        return Err(Error::parameter("mean_mult needs equal nonempty lengths"));
    }
    let mean_abs: f64 = pred_log10
        .iter()
        .zip(target_log10.iter())
        .map(|(&p, &t)| (LN_10 * (p - t)).abs())
        .sum::<f64>()
        / pred_log10.len() as f64;
    Ok(mean_abs.exp())
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::parameter(
            "pearson needs two equal-length sequences of n >= 2",
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::Estimation(
            "correlation undefined: a sequence has zero variance".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// The four headline metrics over base-10 log volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mae: f64,
    /// `None` when the correlation is undefined (constant sequence).
    pub rho: Option<f64>,
    pub mm: f64,
    pub n: usize,
}

/// Computes all four metrics in log10 space.
pub fn compute_metrics(pred_log10: &[f64], target_log10: &[f64]) -> Result<MetricsReport> {
    let (mse, _) = mse_loss(pred_log10, target_log10)?;
    let mae = pred_log10
        .iter()
        .zip(target_log10.iter())
        .map(|(&p, &t)| (p - t).abs())
        .sum::<f64>()
        / pred_log10.len() as f64;
    let mm = mean_mult(pred_log10, target_log10)?;
    let rho = match pearson(pred_log10, target_log10) {
        Ok(r) => Some(r),
        Err(Error::Estimation(_)) => None,
        Err(e) => return Err(e),
    };
    let report = MetricsReport {
        mse,
        mae,
        rho,
        mm,
        n: pred_log10.len(),
    };
    debug_assert!(report.mae * report.mae <= report.mse + 1e-12);
    debug_assert!(report.mm >= 1.0 - 1e-12);
    Ok(report)
}

/// Confusion histogram: counts[i][j] = samples with target in bin i and
/// prediction in bin j; out-of-range values clamp to the edge bins.
pub fn confusion_hist(
    pred_log10: &[f64],
    target_log10: &[f64],
    edges: &[f64],
) -> Result<Array2<u64>> {
    if edges.len() < 2 {
        return Err(Error::parameter("need at least two bin edges"));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::parameter("bin edges must be strictly ascending"));
    }
    if pred_log10.len() != target_log10.len() {
        return Err(Error::parameter("prediction and target lengths differ"));
    }
    let n_bins = edges.len() - 1;
    let bin_of = |x: f64| -> usize {
        if x < edges[0] {
            return 0;
        }
        for i in 0..n_bins {
            if x < edges[i + 1] {
                return i;
            }
        }
        n_bins - 1
    };
    let mut counts = Array2::zeros((n_bins, n_bins));
    for (&p, &t) in pred_log10.iter().zip(target_log10.iter()) {
        counts[[bin_of(t), bin_of(p)]] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples_and_gradient() {
        let (loss, _) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(loss, 0.0);
        let (loss, grad) = mse_loss(&[0.1, -0.1], &[0.0, 0.0]).unwrap();
        assert!((loss - 0.01).abs() < 1e-15);
        assert!((grad[0] - 0.1).abs() < 1e-15);
        assert!(mse_loss(&[], &[]).is_err());

        // finite-difference oracle on the gradient
        let p = [0.3, -0.2, 0.9];
        let t = [0.1, 0.4, 0.5];
        let (_, grad) = mse_loss(&p, &t).unwrap();
        let eps = 1e-7;
        for k in 0..p.len() {
            let mut pp = p;
            pp[k] += eps;
            let (lp, _) = mse_loss(&pp, &t).unwrap();
            let mut pm = p;
            pm[k] -= eps;
            let (lm, _) = mse_loss(&pm, &t).unwrap();
            let numeric = (lp - lm) / (2.0 * eps);
            assert!((grad[k] - numeric).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_mult_examples() {
        assert_eq!(mean_mult(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 1.0);
        // single pair with ratio e
        let pred = [1.0 / LN_10 + 2.0];
        let tgt = [2.0];
        assert!((mean_mult(&pred, &tgt).unwrap() - std::f64::consts::E).abs() < 1e-12);
        // ratios {2, 1/2} -> exactly 2
        let two = 2.0_f64.log10();
        assert!((mean_mult(&[two, -two], &[0.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &[3.0, 5.0, 7.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            pearson(&x, &[2.0, 2.0, 2.0]),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn report_invariants_on_random_data() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.random_range(2..50);
            let pred: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..4.5)).collect();
            let tgt: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..4.5)).collect();
            let r = compute_metrics(&pred, &tgt).unwrap();
            assert!(r.mae * r.mae <= r.mse + 1e-12, "jensen violated");
            assert!(r.mm >= 1.0);
            if let Some(rho) = r.rho {
                assert!(rho.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let tgt = [2.0, 2.5, 3.0];
        let r = compute_metrics(&tgt, &tgt).unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.mm, 1.0);
        assert!((r.rho.unwrap() - 1.0).abs() < 1e-12);

        let constant = [2.5, 2.5, 2.5];
        let r = compute_metrics(&constant, &tgt).unwrap();
        assert!(r.rho.is_none());
        // mse equals the (population) variance of the targets around 2.5
        let var = tgt.iter().map(|t| (t - 2.5) * (t - 2.5)).sum::<f64>() / 3.0;
        assert!((r.mse - var).abs() < 1e-15);
    }

    #[test]
    fn mm_scale_relation() {
        // adding c to every prediction multiplies MM by exp(ln10 * |c|)
        // when all residuals share the sign of c
        let tgt = [2.0, 2.4, 3.1];
        let pred = [2.1, 2.6, 3.2]; // all residuals positive
        let c = 0.2;
        let shifted: Vec<f64> = pred.iter().map(|p| p + c).collect();
        let base = mean_mult(&pred, &tgt).unwrap();
        let moved = mean_mult(&shifted, &tgt).unwrap();
        assert!((moved / base - (LN_10 * c).exp()).abs() < 1e-9);
    }

    #[test]
    fn confusion_examples() {
        // perfect predictions concentrate on the diagonal
        let t = [1.1, 2.2, 3.3, 4.4];
        let edges = [1.0, 2.0, 3.0, 4.0, 5.0];
        let c = confusion_hist(&t, &t, &edges).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c[[i, j]], u64::from(i == j));
            }
        }
        // row sums partition the targets
        let pred = [1.5, 1.5, 3.5, 2.5];
        let c = confusion_hist(&pred, &t, &edges).unwrap();
        for i in 0..4 {
            let row_sum: u64 = (0..4).map(|j| c[[i, j]]).sum();
            let t_count = t
                .iter()
                .filter(|&&x| x >= edges[i] && x < edges[i + 1])
                .count() as u64;
            assert_eq!(row_sum, t_count);
        }
        // hand-enumerated case with out-of-range clamping
        let edges = [0.0, 1.0, 2.0];
        let tgt = [0.5, 1.5, 2.5];
        let pred = [-0.5, 0.5, 1.5];
        let c = confusion_hist(&pred, &tgt, &edges).unwrap();
        assert_eq!(c[[0, 0]], 1); // target 0.5, pred clamps up to bin 0
        assert_eq!(c[[1, 0]], 1);
        assert_eq!(c[[1, 1]], 1); // target 2.5 clamps to bin 1
        assert!(confusion_hist(&pred, &tgt, &[1.0, 0.5]).is_err());
    }
}
