//! Fringe-visibility and Gaussian-width fits.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use statrs::function::erf::erf;

use super::fringe::FringeCurve;
use crate::coincidence::DelayHistogram;
use crate::error::{Error, Result};
use crate::model::{Measured, FWHM_PER_SIGMA};

/// Fit of `A·(1 + V·cos(θ + φ))` to a fringe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeFit {
    pub visibility: Measured,
    pub phase: Measured,
    pub amplitude: Measured,
    /// `(max - min) / (max + min)` of the measured points.
    pub peak_dip_visibility: f64,
    pub chi2_per_dof: f64,
    pub points: usize,
}

pub fn peak_dip_visibility(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    }
}

/// Weighted least squares on `(θ, y, σ_y)` triples.
///
/// The model is linear in `(a, b, c)` for `a + b·cos θ + c·sin θ`, which is
/// the same curve with `A = a`, `V = sqrt(b² + c²)/a`, `φ = atan2(-c, b)`.
pub fn fit_fringe_points(points: &[(f64, f64, f64)]) -> Result<FringeFit> {
    if points.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "{} points, need at least 4",
            points.len()
        )));
    }
    let min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if max - min < std::f64::consts::PI - 1e-9 {
        return Err(Error::DegenerateFit(format!(
            "phase span {:.3} rad is shorter than half a period",
            max - min
        )));
    }
    let mut xtwx = Matrix3::<f64>::zeros();
    let mut xtwy = Vector3::<f64>::zeros();
    for &(theta, y, sigma) in points {
        let w = if sigma > 0.0 {
            1.0 / (sigma * sigma)
        } else {
            1.0
        };
        let x = Vector3::new(1.0, theta.cos(), theta.sin());
        xtwx += w * x * x.transpose();
        xtwy += w * y * x;
    }
    let cov = xtwx
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("singular normal equations".into()))?;
    let beta = cov * xtwy;
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    let sigma_a = cov[(0, 0)].sqrt();
    if a <= 2.0 * sigma_a {
        return Err(Error::DegenerateFit(format!(
            "amplitude {a:.4e} is consistent with zero (sigma {sigma_a:.4e})"
        )));
    }
    let r = b.hypot(c);
    let v = r / a;
    let (sigma_v, sigma_phi) = if r > 0.0 {
        let g = Vector3::new(-v / a, b / (a * r), c / (a * r));
        let h = Vector3::new(0.0, c / (r * r), -b / (r * r));
        (
            (g.transpose() * cov * g)[0].sqrt(),
            (h.transpose() * cov * h)[0].sqrt(),
        )
    } else {
        (
            ((cov[(1, 1)] + cov[(2, 2)]) / 2.0).sqrt() / a,
            std::f64::consts::PI,
        )
    };
    let chi2: f64 = points
        .iter()
        .map(|&(theta, y, sigma)| {
            let model = a + b * theta.cos() + c * theta.sin();
            let s = if sigma > 0.0 { sigma } else { 1.0 };
            ((y - model) / s).powi(2)
        })
        .sum();
    let dof = points.len().saturating_sub(3).max(1);
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(FringeFit {
        visibility: Measured::new(v, sigma_v),
        phase: Measured::new((-c).atan2(b), sigma_phi),
        amplitude: Measured::new(a, sigma_a),
        peak_dip_visibility: peak_dip_visibility(&ys),
        chi2_per_dof: chi2 / dof as f64,
        points: points.len(),
    })
}

/// Fits coincidence rate against idler phase.
pub fn fit_visibility(curve: &FringeCurve) -> Result<FringeFit> {
    let pts: Vec<(f64, f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.theta_i, p.rate.value, p.rate.sigma))
        .collect();
    fit_fringe_points(&pts)
}

/// Fit of a bin-integrated Gaussian to a histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub fwhm_ps: Measured,
    pub center_ps: Measured,
    pub sigma_ps: Measured,
    pub area: f64,
    pub chi2_per_dof: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Ratio of the strongest secondary peak to the main peak after a 3-bin
/// moving average, or 0 for a unimodal histogram. A secondary peak counts
/// only when the valley between it and the main peak drops below half of it.
fn secondary_peak_ratio(counts: &[u64]) -> f64 {
    let n = counts.len();
    if n < 3 {
        return 0.0;
    }
    let smooth: Vec<f64> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n - 1);
            (lo..=hi).map(|j| counts[j] as f64).sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let (imax, &main) = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if main <= 0.0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for k in 1..n - 1 {
        if k == imax || !(smooth[k] > smooth[k - 1] && smooth[k] >= smooth[k + 1]) {
            continue;
        }
        let (lo, hi) = if k < imax { (k, imax) } else { (imax, k) };
        let valley = smooth[lo..=hi]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if valley < 0.5 * smooth[k] {
            best = best.max(smooth[k] / main);
        }
    }
    best
}

/// Levenberg-Marquardt fit of `A·[Φ((r-c)/s) - Φ((l-c)/s)]` over bins with
/// edges `[l, r]`, Poisson-weighted. `FWHM = 2·sqrt(2 ln 2)·s`.
pub fn fit_gaussian_fwhm(h: &DelayHistogram) -> Result<GaussianFit> {
    let total = h.in_range();
    if total == 0 {
        return Err(Error::EmptyData("histogram is empty"));
    }
    let ratio = secondary_peak_ratio(&h.counts);
    if ratio > 0.2 {
        return Err(Error::Multimodal { ratio });
    }
    let width = h.bin_width_ps as f64;
    let min_sigma = 1e-3 * width;
    let centers: Vec<f64> = h.centers_ps().collect();
    let ys: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let weights: Vec<f64> = ys.iter().map(|&y| 1.0 / y.max(1.0)).collect();

    let mean = centers.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / total as f64;
    let var = centers
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean).powi(2) * y)
        .sum::<f64>()
        / total as f64;
    let mut p = Vector3::new(
        total as f64,
        mean,
        (var - width * width / 12.0)
            .max(0.0)
            .sqrt()
            .max(width / 4.0),
    );

    let eval = |p: &Vector3<f64>| -> (Vec<f64>, Vec<Vector3<f64>>) {
        let (a, c, s) = (p[0], p[1], p[2].max(min_sigma));
        let mut model = Vec::with_capacity(centers.len());
        let mut jac = Vec::with_capacity(centers.len());
        for &x in &centers {
            let zl = (x - width / 2.0 - c) / s;
            let zr = (x + width / 2.0 - c) / s;
            let dphi = std_normal_cdf(zr) - std_normal_cdf(zl);
            let (pl, pr) = (std_normal_pdf(zl), std_normal_pdf(zr));
            model.push(a * dphi);
            jac.push(Vector3::new(
                dphi,
                a * (pl - pr) / s,
                a * (pl * zl - pr * zr) / s,
            ));
        }
        (model, jac)
    };
    let cost = |model: &[f64]| -> f64 {
        model
            .iter()
            .zip(&ys)
            .zip(&weights)
            .map(|((m, y), w)| w * (y - m).powi(2))
            .sum()
    };

    let mut lambda = 1e-3;
    let (mut model, mut jac) = eval(&p);
    let mut current = cost(&model);
    for _ in 0..200 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for ((j, m), (y, w)) in jac.iter().zip(&model).zip(ys.iter().zip(&weights)) {
            jtj += *w * j * j.transpose();
            jtr += *w * (y - m) * j;
        }
        let mut damped = jtj;
        for d in 0..3 {
            damped[(d, d)] *= 1.0 + lambda;
        }
        let Some(inv) = damped.try_inverse() else {
            break;
        };
        let mut trial = p + inv * jtr;
        trial[2] = trial[2].max(min_sigma);
        let (tm, tj) = eval(&trial);
        let tc = cost(&tm);
        if tc < current {
            let done = (current - tc) <= 1e-12 * current.max(1e-300);
            p = trial;
            model = tm;
            jac = tj;
            current = tc;
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let mut jtj = Matrix3::<f64>::zeros();
    for (j, w) in jac.iter().zip(&weights) {
        jtj += *w * j * j.transpose();
    }
    let cov = jtj
        .try_inverse()
        .unwrap_or_else(|| Matrix3::from_element(f64::NAN));
    let s = p[2].max(min_sigma);
    let sigma_s = cov[(2, 2)].abs().sqrt();
    let dof = ys.len().saturating_sub(3).max(1);
    Ok(GaussianFit {
        fwhm_ps: Measured::new(FWHM_PER_SIGMA * s, FWHM_PER_SIGMA * sigma_s),
        center_ps: Measured::new(p[1], cov[(1, 1)].abs().sqrt()),
        sigma_ps: Measured::new(s, sigma_s),
        area: p[0],
        chi2_per_dof: current / dof as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};
    use std::f64::consts::PI;

    fn curve(v: f64, phi: f64, a: f64, n: usize) -> Vec<(f64, f64, f64)> {
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                let y = a * (1.0 + v * (t + phi).cos());
                (t, y, y.sqrt())
            })
            .collect()
    }

    #[test]
    fn exact_recovery() {
        let fit = fit_fringe_points(&curve(0.8, 0.3, 1000.0, 16)).unwrap();
        assert!((fit.visibility.value - 0.8).abs() < 1e-9);
        assert!((fit.phase.value - 0.3).abs() < 1e-9);
        assert!((fit.amplitude.value - 1000.0).abs() < 1e-6);
        assert!(fit.chi2_per_dof < 1e-12);
    }

    #[test]
    fn peak_dip_two_points() {
        assert!((peak_dip_visibility(&[1.95, 0.05]) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn rejects_short_curves() {
        let pts = curve(0.5, 0.0, 100.0, 16);
        assert!(fit_fringe_points(&pts[..3]).is_err());
        assert!(fit_fringe_points(&pts[..6]).is_err());
        let zero: Vec<_> = pts.iter().map(|&(t, _, _)| (t, 0.0, 1.0)).collect();
        assert!(matches!(
            fit_fringe_points(&zero),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn noisy_fits_are_calibrated() {
        // 100 Poisson-noised fringes: pulls within 3 and chi2/dof near 1.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = curve(0.9, 0.5, 2.0e4, 16);
        let mut pulls = Vec::new();
        let mut chi2 = Vec::new();
        for _ in 0..100 {
            let pts: Vec<_> = truth
                .iter()
                .map(|&(t, y, _)| {
                    let n = Poisson::new(y).unwrap().sample(&mut rng);
                    (t, n, n.max(1.0).sqrt())
                })
                .collect();
            let fit = fit_fringe_points(&pts).unwrap();
            pulls.push((fit.visibility.value - 0.9) / fit.visibility.sigma);
            chi2.push(fit.chi2_per_dof);
            assert!(fit.visibility.value <= 1.0);
            assert!(
                (fit.visibility.value - fit.peak_dip_visibility).abs()
                    < 3.0 * fit.visibility.sigma + 0.02
            );
        }
        assert!(pulls.iter().filter(|p| p.abs() > 3.0).count() <= 2);
        let mean_chi2 = chi2.iter().sum::<f64>() / chi2.len() as f64;
        assert!((0.5..=2.0).contains(&mean_chi2), "{mean_chi2}");
    }

    fn gaussian_hist(sigma: f64, n: usize, seed: u64) -> DelayHistogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let w = 2u64;
        let half = 50i64;
        let mut counts = vec![0u64; (2 * half + 1) as usize];
        for _ in 0..n {
            let k = (normal.sample(&mut rng) / w as f64).round() as i64;
            if k.abs() <= half {
                counts[(k + half) as usize] += 1;
            }
        }
        DelayHistogram {
            bin_width_ps: w,
            first_center_ps: -(half as f64) * w as f64,
            counts,
            out_of_range: 0,
        }
    }

    #[test]
    fn gaussian_fwhm_identity() {
        let h = gaussian_hist(12.74, 200_000, 1);
        let fit = fit_gaussian_fwhm(&h).unwrap();
        assert!((12.74 * FWHM_PER_SIGMA - 30.0).abs() < 0.01);
        assert!(
            fit.fwhm_ps.within(12.74 * FWHM_PER_SIGMA, 3.0),
            "{:?}",
            fit.fwhm_ps
        );
        assert!(fit.center_ps.value.abs() < 0.2);
    }

    #[test]
    fn delta_histogram_is_narrow() {
        let mut counts = vec![0u64; 21];
        counts[10] = 5000;
        let h = DelayHistogram {
            bin_width_ps: 4,
            first_center_ps: -40.0,
            counts,
            out_of_range: 0,
        };
        let fit = fit_gaussian_fwhm(&h).unwrap();
        assert!(fit.fwhm_ps.value <= 4.0, "{:?}", fit.fwhm_ps);
    }

    #[test]
    fn multimodal_rejected() {
        let mut a = gaussian_hist(8.0, 100_000, 2);
        let b = gaussian_hist(8.0, 40_000, 3);
        // Shift the second mode by +60 ps (30 bins).
        for k in 0..b.counts.len() - 30 {
            a.counts[k + 30] += b.counts[k];
        }
        assert!(matches!(
            fit_gaussian_fwhm(&a),
            Err(Error::Multimodal { .. })
        ));
    }
}
