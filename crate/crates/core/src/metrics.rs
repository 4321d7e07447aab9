//! Reconstruction and sparsity measures.

use crate::error::{Error, Result};
use crate::network::PresentationResponse;

/// Mean of a metric over the items it was defined for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averaged {
    pub value: f64,
    pub used: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub corr_loss: f64,
    pub rms_loss: f64,
    pub sparsity: f64,
    pub breadth_tuning: f64,
    /// Number of patches evaluated.
    pub patches: usize,
    /// Patches left out of the correlation loss (flat originals).
    pub corr_skipped: usize,
    /// Responses left out of breadth tuning (no output spikes).
    pub silent: usize,
}

fn check_pairs<A: AsRef<[f64]>, B: AsRef<[f64]>>(originals: &[A], recons: &[B]) -> Result<()> {
    if originals.is_empty() {
        return Err(Error::input("no patches to compare"));
    }
    if originals.len() != recons.len() {
        return Err(Error::input(format!(
            "{} originals but {} reconstructions",
            originals.len(),
            recons.len()
        )));
    }
    for (k, (a, b)) in originals.iter().zip(recons).enumerate() {
        if a.as_ref().len() != b.as_ref().len() {
            return Err(Error::input(format!(
                "pair {k}: original has {} pixels, reconstruction {}",
                a.as_ref().len(),
                b.as_ref().len()
            )));
        }
    }
    Ok(())
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Pearson correlation, or `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64;
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean of `1 - corr(original, reconstruction)`.
///
/// Pairs with a flat original are skipped. A flat reconstruction of a
/// non-flat original scores a loss of 1.
pub fn corr_recon_loss<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    originals: &[A],
    recons: &[B],
) -> Result<Averaged> {
    check_pairs(originals, recons)?;
    let (mut sum, mut used, mut skipped) = (0.0, 0, 0);
    for (a, b) in originals.iter().zip(recons) {
        let (a, b) = (a.as_ref(), b.as_ref());
        if mean_var(a).1 == 0.0 {
            skipped += 1;
            continue;
        }
        sum += 1.0 - pearson(a, b).unwrap_or(0.0);
        used += 1;
    }
    if used == 0 {
        return Err(Error::input("every original patch has zero variance"));
    }
    Ok(Averaged {
        value: sum / used as f64,
        used,
        skipped,
    })
}

/// Mean over pairs of the per-patch root mean square error.
pub fn rms_recon_loss<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    originals: &[A],
    recons: &[B],
) -> Result<f64> {
    check_pairs(originals, recons)?;
    let total: f64 = originals
        .iter()
        .zip(recons)
        .map(|(a, b)| {
            let (a, b) = (a.as_ref(), b.as_ref());
            let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
            mse.sqrt()
        })
        .sum();
    Ok(total / originals.len() as f64)
}

/// Fraction of (neuron, step) slots holding a spike, averaged over responses.
pub fn avg_sparsity(
    responses: &[PresentationResponse],
    neurons: usize,
    duration: u32,
) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::input("no responses"));
    }
    let slots = (neurons as f64) * (duration as f64);
    let total: u64 = responses
        .iter()
        .map(PresentationResponse::total_spikes)
        .sum();
    Ok(total as f64 / slots / responses.len() as f64)
}

/// `1 / (C^2 + 1)` with `C = sigma / mu` of one stimulus' spike counts
/// (population statistics). `None` when no neuron spiked.
pub fn breadth_tuning_of_counts(counts: &[u32]) -> Option<f64> {
    let v: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (mu, var) = mean_var(&v);
    if mu == 0.0 {
        return None;
    }
    Some(1.0 / (var / (mu * mu) + 1.0))
}

/// Breadth tuning averaged over stimuli that produced at least one spike.
pub fn breadth_tuning(responses: &[PresentationResponse]) -> Result<Averaged> {
    if responses.is_empty() {
        return Err(Error::input("no responses"));
    }
    let (mut sum, mut used) = (0.0, 0);
    for r in responses {
        if let Some(bt) = breadth_tuning_of_counts(&r.counts) {
            sum += bt;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::input(
            "breadth tuning is undefined: every response is silent",
        ));
    }
    Ok(Averaged {
        value: sum / used as f64,
        used,
        skipped: responses.len() - used,
    })
}

/// RMS error after scaling each patch to zero mean and unit standard
/// deviation. Flat patches are skipped.
pub fn zrms_recon_loss<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    originals: &[A],
    recons: &[B],
) -> Result<Averaged> {
    check_pairs(originals, recons)?;
    let z = |v: &[f64]| -> Option<Vec<f64>> {
        let (m, var) = mean_var(v);
        (var > 0.0).then(|| v.iter().map(|x| (x - m) / var.sqrt()).collect())
    };
    let (mut sum, mut used) = (0.0, 0);
    for (a, b) in originals.iter().zip(recons) {
        if let (Some(za), Some(zb)) = (z(a.as_ref()), z(b.as_ref())) {
            let mse = za
                .iter()
                .zip(&zb)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                / za.len() as f64;
            sum += mse.sqrt();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::input("no pair with variance on both sides"));
    }
    Ok(Averaged {
        value: sum / used as f64,
        used,
        skipped: originals.len() - used,
    })
}

/// All four measures over one evaluation set.
pub fn evaluate<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    originals: &[A],
    recons: &[B],
    responses: &[PresentationResponse],
    neurons: usize,
    duration: u32,
) -> Result<MetricsReport> {
    let corr = corr_recon_loss(originals, recons)?;
    let rms = rms_recon_loss(originals, recons)?;
    let sparsity = avg_sparsity(responses, neurons, duration)?;
    // An untrained or collapsed layer can be silent on every patch.
    let (bt, silent) = match breadth_tuning(responses) {
        Ok(a) => (a.value, a.skipped),
        Err(_) => (f64::NAN, responses.len()),
    };
    Ok(MetricsReport {
        corr_loss: corr.value,
        rms_loss: rms,
        sparsity,
        breadth_tuning: bt,
        patches: originals.len(),
        corr_skipped: corr.skipped,
        silent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::SpikeTrain;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn resp(counts: &[u32]) -> PresentationResponse {
        PresentationResponse {
            output_trains: counts
                .iter()
                .map(|&c| SpikeTrain::new((1..=c).collect(), 40).unwrap())
                .collect(),
            counts: counts.to_vec(),
            fired: counts.iter().map(|&c| c > 0).collect(),
            active: counts.iter().filter(|&&c| c > 0).count(),
            duration: 40,
        }
    }

    #[test]
    fn corr_loss_examples() {
        let y = vec![vec![0.1, 0.5, 0.9, 0.3], vec![0.0, 1.0, 0.2, 0.2]];
        assert_abs_diff_eq!(corr_recon_loss(&y, &y).unwrap().value, 0.0, epsilon = 1e-12);
        let inv: Vec<Vec<f64>> = y
            .iter()
            .map(|p| p.iter().map(|v| 1.0 - v).collect())
            .collect();
        assert_abs_diff_eq!(
            corr_recon_loss(&y, &inv).unwrap().value,
            2.0,
            epsilon = 1e-12
        );
        let aff: Vec<Vec<f64>> = y
            .iter()
            .map(|p| p.iter().map(|v| 0.5 * v + 0.1).collect())
            .collect();
        assert_abs_diff_eq!(
            corr_recon_loss(&y, &aff).unwrap().value,
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn corr_loss_zero_variance_rules() {
        let flat = vec![0.3; 4];
        let varied = vec![0.0, 1.0, 0.0, 1.0];
        let r = corr_recon_loss(
            &[flat.clone(), varied.clone()],
            &[varied.clone(), varied.clone()],
        )
        .unwrap();
        assert_eq!((r.used, r.skipped), (1, 1));
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
        let r =
            corr_recon_loss(std::slice::from_ref(&varied), std::slice::from_ref(&flat)).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(
            corr_recon_loss(std::slice::from_ref(&flat), std::slice::from_ref(&varied)).is_err()
        );
    }

    #[test]
    fn rejects_empty_or_mismatched() {
        let e: Vec<Vec<f64>> = vec![];
        assert!(corr_recon_loss(&e, &e).is_err());
        assert!(rms_recon_loss(&e, &e).is_err());
        assert!(rms_recon_loss(&[vec![0.0; 2]], &[vec![0.0; 3]]).is_err());
        assert!(rms_recon_loss(&[vec![0.0; 2]], &[vec![0.0; 2], vec![0.0; 2]]).is_err());
        assert!(avg_sparsity(&[], 4, 40).is_err());
        assert!(breadth_tuning(&[]).is_err());
        assert!(breadth_tuning(&[resp(&[0, 0])]).is_err());
    }

    #[test]
    fn rms_examples() {
        let y = vec![vec![0.2, 0.7]];
        assert_eq!(rms_recon_loss(&y, &y).unwrap(), 0.0);
        assert_eq!(
            rms_recon_loss(&[vec![1.0; 9]], &[vec![0.0; 9]]).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            rms_recon_loss(&[vec![1.0, 0.0]], &[vec![0.5, 0.5]]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(avg_sparsity(&[resp(&[0; 32])], 32, 40).unwrap(), 0.0);
        assert_eq!(avg_sparsity(&[resp(&[40; 4])], 4, 40).unwrap(), 1.0);
        let mut counts = vec![0; 32];
        counts[7] = 4;
        assert_abs_diff_eq!(
            avg_sparsity(&[resp(&counts)], 32, 40).unwrap(),
            0.003125,
            epsilon = 1e-15
        );
    }

    #[test]
    fn breadth_tuning_examples() {
        assert_eq!(breadth_tuning_of_counts(&[3, 3, 3]), Some(1.0));
        assert_abs_diff_eq!(
            breadth_tuning_of_counts(&[4, 0, 0, 0]).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_eq!(breadth_tuning_of_counts(&[0, 0]), None);
        let a = breadth_tuning(&[resp(&[4, 0, 0, 0]), resp(&[0; 4]), resp(&[2, 2, 2, 2])]).unwrap();
        assert_eq!((a.used, a.skipped), (2, 1));
        assert_abs_diff_eq!(a.value, 0.625, epsilon = 1e-15);
    }

    #[test]
    fn zrms_of_identical_is_zero() {
        let y = vec![vec![0.1, 0.5, 0.9]];
        assert_abs_diff_eq!(zrms_recon_loss(&y, &y).unwrap().value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn breadth_tuning_drops_as_activity_concentrates() {
        // total of 12 spikes spread over fewer and fewer of 6 neurons
        let spreads = [
            [2, 2, 2, 2, 2, 2],
            [3, 3, 3, 3, 0, 0],
            [4, 4, 4, 0, 0, 0],
            [6, 6, 0, 0, 0, 0],
            [12, 0, 0, 0, 0, 0],
        ];
        let bts: Vec<f64> = spreads
            .iter()
            .map(|c| breadth_tuning_of_counts(c).unwrap())
            .collect();
        assert_eq!(bts[0], 1.0);
        assert!(bts.windows(2).all(|w| w[1] < w[0]));
    }

    proptest! {
        #[test]
        fn corr_loss_is_affine_invariant(
            y in proptest::collection::vec(0.0f64..1.0, 9),
            r in proptest::collection::vec(0.0f64..1.0, 9),
            scale in 0.01f64..5.0,
            shift in -2.0f64..2.0,
        ) {
            prop_assume!(mean_var(&y).1 > 1e-6 && mean_var(&r).1 > 1e-6);
            let base = corr_recon_loss(std::slice::from_ref(&y), std::slice::from_ref(&r)).unwrap().value;
            let r2: Vec<f64> = r.iter().map(|v| scale * v + shift).collect();
            let y2: Vec<f64> = y.iter().map(|v| scale * v + shift).collect();
            prop_assert!((0.0..=2.0).contains(&base));
            prop_assert!((corr_recon_loss(std::slice::from_ref(&y), &[r2]).unwrap().value - base).abs() < 1e-9);
            prop_assert!((corr_recon_loss(&[y2], &[r]).unwrap().value - base).abs() < 1e-9);
        }

        #[test]
        fn rms_is_bounded_and_symmetric(
            y in proptest::collection::vec(0.0f64..=1.0, 16),
            r in proptest::collection::vec(0.0f64..=1.0, 16),
        ) {
            let a = rms_recon_loss(std::slice::from_ref(&y), std::slice::from_ref(&r)).unwrap();
            let b = rms_recon_loss(&[r], &[y]).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn sparsity_is_spike_total_over_slots(counts in proptest::collection::vec(proptest::collection::vec(0u32..=40, 8), 1..6)) {
            let rs: Vec<_> = counts.iter().map(|c| resp(c)).collect();
            let total: u32 = counts.iter().flatten().sum();
            let expected = total as f64 / (8.0 * 40.0 * rs.len() as f64);
            prop_assert!((avg_sparsity(&rs, 8, 40).unwrap() - expected).abs() < 1e-15);
        }

        #[test]
        fn breadth_tuning_in_unit_interval(counts in proptest::collection::vec(0u32..40, 2..32)) {
            if let Some(bt) = breadth_tuning_of_counts(&counts) {
                prop_assert!(bt > 0.0 && bt <= 1.0);
                let all_equal = counts.iter().all(|&c| c == counts[0]);
                prop_assert_eq!(bt == 1.0, all_equal);
            }
        }
    }
}
