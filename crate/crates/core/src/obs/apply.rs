use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{ObservationModelSpec, TakiguchiAr};
use crate::error::{Error, Result};
use crate::gauss::lse;
use crate::linalg::check_dim;

/// Latent values drawn for one frame.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Latents {
    /// Continuous draws in family order: `[b]` for the additive-bias families
    /// (additive, affine, Algonquin, SPLICE, PMC, reverberation with noise),
    /// `[h, c]` for VTS, `[c, a, h]` for REMOS. Empty when the noise term is absent.
    pub draws: Vec<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub region: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub noise_state: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub class: Option<usize>,
}

impl Latents {
    pub fn with_draws(draws: Vec<Vec<f64>>) -> Self {
        Self { draws, ..Self::default() }
    }
}

fn draws<'a>(latents: &'a Latents, count: usize, dim: usize) -> Result<&'a [Vec<f64>]> {
    if latents.draws.len() != count {
        return Err(Error::InvalidParameter(alloc::format!(
            "expected {count} latent draws, got {}",
            latents.draws.len()
        )));
    }
    for d in &latents.draws {
        check_dim(dim, d.len())?;
    }
    Ok(&latents.draws)
}

fn optional_bias(latents: &Latents, dim: usize) -> Result<Option<&[f64]>> {
    match latents.draws.len() {
        0 => Ok(None),
        _ => Ok(Some(&draws(latents, 1, dim)?[0])),
    }
}

/// Evaluates `y_n = f(x_{n−L..n}, b_n)` for one frame.
///
/// `window` holds clean frames oldest first; its last entry is `x_n`. Models
/// with memory accept a shorter window at the start of an utterance, in which
/// case the missing taps contribute nothing. `y_prev` is read by the
/// autoregressive model only; `None` there means the first frame.
pub fn apply_model<W: AsRef<[f64]>>(
    spec: &ObservationModelSpec,
    frame: usize,
    window: &[W],
    latents: &Latents,
    y_prev: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let max_len = spec.order() + 1;
    if window.is_empty() || window.len() > max_len {
        return Err(Error::InvalidParameter(alloc::format!(
            "{} window must hold 1..={max_len} frames, got {}",
            spec.family(),
            window.len()
        )));
    }
    let x = window[window.len() - 1].as_ref();
    let dim = x.len();
    for w in window {
        check_dim(dim, w.as_ref().len())?;
    }
    // x_{n-l} for l = 0..window.len()
    let lag = |l: usize| window[window.len() - 1 - l].as_ref();

    let y = match spec {
        ObservationModelSpec::AdditiveGaussian(_) | ObservationModelSpec::SpliceRegions(_) => {
            let b = &draws(latents, 1, dim)?[0];
            x.iter().zip(b).map(|(x, b)| x + b).collect()
        }
        ObservationModelSpec::Affine(r) => {
            let id = match latents.class {
                Some(c) if c < r.classes.len() => c,
                None if r.classes.len() == 1 => 0,
                _ => return Err(Error::InvalidParameter("affine latents need a valid regression class".into())),
            };
            let b = &draws(latents, 1, dim)?[0];
            let ax = r.classes[id].a.mul_vec(x)?;
            ax.iter().zip(b).map(|(a, b)| a + b).collect()
        }
        ObservationModelSpec::Algonquin(m) => {
            let r = m.noise_estimate.at(frame)?;
            check_dim(dim, r.len())?;
            let b = &draws(latents, 1, dim)?[0];
            (0..dim).map(|d| lse(&[x[d], r[d]]) + b[d]).collect()
        }
        ObservationModelSpec::PmcLogSum(p) => {
            let la = p.alpha.ln();
            match optional_bias(latents, dim)? {
                None => x.iter().map(|x| la + x).collect(),
                Some(b) => (0..dim).map(|d| lse(&[la + x[d], b[d]])).collect(),
            }
        }
        ObservationModelSpec::VtsLogSum(_) => {
            let dr = draws(latents, 2, dim)?;
            let (h, c) = (&dr[0], &dr[1]);
            (0..dim).map(|d| lse(&[h[d] + x[d], c[d]])).collect()
        }
        ObservationModelSpec::RemosLogSum(r) => {
            let dr = draws(latents, 3, dim)?;
            let (c, a, h) = (&dr[0], &dr[1], &dr[2]);
            let mut terms = Vec::with_capacity(window.len() + 1);
            (0..dim)
                .map(|d| {
                    terms.clear();
                    terms.push(c[d]);
                    terms.push(h[d] + x[d]);
                    for l in 1..window.len() {
                        terms.push(a[d] + r.tail[l - 1][d] + lag(l)[d]);
                    }
                    lse(&terms)
                })
                .collect()
        }
        ObservationModelSpec::ReverbLogSum(r) => {
            let b = optional_bias(latents, dim)?;
            let mut terms = Vec::with_capacity(window.len() + 1);
            (0..dim)
                .map(|d| {
                    terms.clear();
                    for l in 0..window.len() {
                        terms.push(lag(l)[d] + r.taps[l][d]);
                    }
                    if let Some(b) = b {
                        terms.push(b[d]);
                    }
                    lse(&terms)
                })
                .collect()
        }
        ObservationModelSpec::TakiguchiAr(t) => {
            check_dim(dim, t.h.len())?;
            match y_prev {
                None => x.iter().zip(&t.h).map(|(x, h)| h + x).collect(),
                Some(yp) => {
                    check_dim(dim, yp.len())?;
                    (0..dim).map(|d| lse(&[t.h[d] + x[d], t.alpha[d] + yp[d]])).collect()
                }
            }
        }
    };
    Ok(y)
}

/// Inverts the autoregressive reverberation model for one frame.
///
/// Returns `x_n` and `log|det ∂y/∂x|`. Without a previous frame the model is a
/// plain shift. Observations at or below the reverberation-tail floor
/// `α + y_{n−1}` have no preimage and yield [`Error::InvalidObservation`].
pub fn jacobian_takiguchi(t: &TakiguchiAr, y: &[f64], y_prev: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
    let dim = y.len();
    check_dim(dim, t.h.len())?;
    check_dim(dim, t.alpha.len())?;
    let Some(yp) = y_prev else {
        return Ok((y.iter().zip(&t.h).map(|(y, h)| y - h).collect(), 0.0));
    };
    check_dim(dim, yp.len())?;
    let mut x = Vec::with_capacity(dim);
    let mut log_det = 0.0;
    for d in 0..dim {
        // ∂y/∂x = 1 − exp(α + y_prev − y)
        let gap = t.alpha[d] + yp[d] - y[d];
        if !(gap < 0.0) {
            return Err(Error::InvalidObservation { dim: d });
        }
        let log_gain = (-gap.exp_m1()).ln();
        if !log_gain.is_finite() {
            return Err(Error::InvalidObservation { dim: d });
        }
        x.push(y[d] + log_gain - t.h[d]);
        log_det += log_gain;
    }
    Ok((x, log_det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::*;
    use crate::hmm::Moments;
    use crate::linalg::Covariance;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn one(v: f64) -> Latents {
        Latents::with_draws(vec![vec![v]])
    }

    #[test]
    fn additive_zero_bias_is_identity() {
        let s = ObservationModelSpec::AdditiveGaussian(AdditiveGaussian::stationary(vec![0.0], Covariance::zeros(1)));
        assert_eq!(apply_model(&s, 0, &[[1.25]], &one(0.0), None).unwrap(), vec![1.25]);
    }

    #[test]
    fn pmc_at_zero_is_log_two() {
        let s = ObservationModelSpec::PmcLogSum(PmcLogSum { alpha: 1.0, noise: None, noise_hmm: None });
        assert_relative_eq!(apply_model(&s, 0, &[[0.0]], &one(0.0), None).unwrap()[0], 2f64.ln(), epsilon = 1e-15);
        assert_eq!(apply_model(&s, 0, &[[0.3]], &Latents::default(), None).unwrap(), vec![0.3]);
    }

    #[test]
    fn single_tap_reverb_passthrough() {
        let s = ObservationModelSpec::ReverbLogSum(ReverbLogSum { taps: vec![vec![0.0, 0.0]], noise: None });
        assert_eq!(apply_model(&s, 0, &[[0.7, -2.0]], &Latents::default(), None).unwrap(), vec![0.7, -2.0]);
        assert!(apply_model(&s, 0, &[[0.0, 0.0], [0.0, 0.0]], &Latents::default(), None).is_err());
    }

    #[test]
    fn reverb_sums_taps() {
        let s = ObservationModelSpec::ReverbLogSum(ReverbLogSum { taps: vec![vec![0.0], vec![-1.0]], noise: None });
        let y = apply_model(&s, 1, &[[2.0], [1.0]], &Latents::default(), None).unwrap()[0];
        assert_relative_eq!(y, (1f64.exp() + 1f64.exp()).ln(), epsilon = 1e-14);
    }

    #[test]
    fn latent_shape_mismatch_is_error() {
        let s = ObservationModelSpec::VtsLogSum(VtsLogSum {
            h: Moments::new(vec![0.0], Covariance::zeros(1)).unwrap(),
            c: Moments::new(vec![0.0], Covariance::zeros(1)).unwrap(),
        });
        assert!(apply_model(&s, 0, &[[0.0]], &one(0.0), None).is_err());
        assert!(apply_model(&s, 0, &[[0.0]], &Latents::with_draws(vec![vec![0.0], vec![0.0, 1.0]]), None).is_err());
    }

    #[test]
    fn takiguchi_round_trip_and_shift_limit() {
        let t = TakiguchiAr { h: vec![0.2, -0.1], alpha: vec![-1.0, -0.5] };
        let s = ObservationModelSpec::TakiguchiAr(t.clone());
        let x = [0.4, 1.3];
        let yp = [0.9, 0.1];
        let y = apply_model(&s, 3, &[x], &Latents::default(), Some(&yp)).unwrap();
        let (xr, _) = jacobian_takiguchi(&t, &y, Some(&yp)).unwrap();
        for d in 0..2 {
            assert_relative_eq!(xr[d], x[d], epsilon = 1e-12);
        }

        let flat = TakiguchiAr { h: vec![0.5], alpha: vec![f64::NEG_INFINITY] };
        let (x, ld) = jacobian_takiguchi(&flat, &[2.0], Some(&[10.0])).unwrap();
        assert_eq!(x, vec![1.5]);
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn takiguchi_jacobian_matches_central_differences() {
        let t = TakiguchiAr { h: vec![0.3], alpha: vec![-0.7] };
        let s = ObservationModelSpec::TakiguchiAr(t.clone());
        let yp = [0.5];
        let f = |x: f64| apply_model(&s, 1, &[[x]], &Latents::default(), Some(&yp)).unwrap()[0];
        let x0 = 0.1;
        let h = 1e-5;
        let fd = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        let (_, ld) = jacobian_takiguchi(&t, &[f(x0)], Some(&yp)).unwrap();
        assert!((fd - ld.exp()).abs() < 1e-6);
    }

    #[test]
    fn takiguchi_rejects_observation_below_tail() {
        let t = TakiguchiAr { h: vec![0.0], alpha: vec![0.0] };
        assert_eq!(jacobian_takiguchi(&t, &[1.0], Some(&[1.0])), Err(Error::InvalidObservation { dim: 0 }));
        assert!(jacobian_takiguchi(&t, &[0.5], Some(&[1.0])).is_err());
    }
}
