//! Loss terms of the cooperative teaching objective, each paired with its
//! analytic gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside cross-entropy.
pub const BCE_EPS: f64 = 1e-7;
/// Additive smoothing applied to both histograms compared by the KL term.
pub const HIST_EPS: f64 = 1e-8;
pub const DEFAULT_BIN_COUNT: usize = 20;

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::input(format!("{what}: length mismatch {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::input(format!("{what}: empty input")));
    }
    Ok(())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Mean binary cross-entropy.
pub fn loss_teacher_bce(preds: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(preds.len(), labels.len(), "binary cross-entropy")?;
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

/// `dL/dp_i` of [`loss_teacher_bce`]; zero where the clamp is active.
pub fn bce_grad(preds: &[f64], labels: &[bool]) -> Vec<f64> {
    let n = preds.len() as f64;
    preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < BCE_EPS || p > 1.0 - BCE_EPS {
                0.0
            } else if y {
                -1.0 / (p * n)
            } else {
                1.0 / ((1.0 - p) * n)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityHistogram {
    masses: Vec<f64>,
}

impl ProbabilityHistogram {
    pub fn bin_count(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Masses after adding `HIST_EPS` to each bin and renormalizing.
    pub fn smoothed(&self) -> Vec<f64> {
        smooth(&self.masses)
    }
}

fn smooth(masses: &[f64]) -> Vec<f64> {
    let z = 1.0 + masses.len() as f64 * HIST_EPS;
    masses.iter().map(|m| (m + HIST_EPS) / z).collect()
}

/// Equal-width bins over `[0, 1]`; bin `j` is `[j/B, (j+1)/B)` except the
/// last, which also contains 1.
pub fn bin_index(p: f64, bin_count: usize) -> usize {
    ((p * bin_count as f64) as usize).min(bin_count - 1)
}

pub fn empirical_histogram(preds: &[f64], bin_count: usize) -> Result<ProbabilityHistogram> {
    if bin_count < 2 {
        return Err(Error::input(format!("bin_count must be >= 2, got {bin_count}")));
    }
    if preds.is_empty() {
        return Err(Error::input("histogram of empty prediction set"));
    }
    let mut counts = vec![0usize; bin_count];
    for &p in preds {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::input(format!("probability {p} outside [0, 1]")));
        }
        counts[bin_index(p, bin_count)] += 1;
    }
    let n = preds.len() as f64;
    Ok(ProbabilityHistogram {
        masses: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// Learnable Gaussian prior; `std = exp(log_std)` keeps it positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub log_std: f64,
}

impl GaussianPrior {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::input(format!("invalid Gaussian prior ({mean}, {std})")));
        }
        Ok(Self {
            mean,
            log_std: std.ln(),
        })
    }

    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }
}

impl Default for GaussianPrior {
    fn default() -> Self {
        Self {
            mean: 0.5,
            log_std: 0.25f64.ln(),
        }
    }
}

fn log_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `ln erfc(x)` for `x >= 0`; an asymptotic series takes over before
/// `erfc` underflows.
fn log_erfc(x: f64) -> f64 {
    if x < 26.0 {
        return libm::erfc(x).ln();
    }
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    for n in 1..=5 {
        term *= -((2 * n - 1) as f64) * inv;
        series += term;
    }
    -x * x - x.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
}

/// `ln(1 - e^d)` for `d < 0`.
fn ln_one_minus_exp(d: f64) -> f64 {
    if d > -std::f64::consts::LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// `ln(Phi(b) - Phi(a))` for `a < b`, accurate in both tails and for
/// narrow intervals.
fn log_std_normal_mass(a: f64, b: f64) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 1.0 {
        let (la, lb) = (log_erfc(a * r), log_erfc(b * r));
        la - std::f64::consts::LN_2 + ln_one_minus_exp(lb - la)
    } else if b <= -1.0 {
        log_std_normal_mass(-b, -a)
    } else {
        (0.5 * (libm::erf(b * r) - libm::erf(a * r))).ln()
    }
}

/// Prior mass per bin, renormalized over `[0, 1]`, with derivatives of the
/// renormalized masses with respect to `mean` and `log_std`.
pub struct PriorBins {
    pub masses: Vec<f64>,
    pub d_mean: Vec<f64>,
    pub d_log_std: Vec<f64>,
}

pub fn prior_bins(prior: &GaussianPrior, bin_count: usize) -> PriorBins {
    let sigma = prior.std();
    let edges: Vec<f64> = (0..=bin_count)
        .map(|j| (j as f64 / bin_count as f64 - prior.mean) / sigma)
        .collect();
    // work with log masses so far-away priors keep finite ratios
    let log_raw: Vec<f64> = edges.windows(2).map(|w| log_std_normal_mass(w[0], w[1])).collect();
    let lse = crate::nn::log_sum_exp(&log_raw);
    let masses: Vec<f64> = log_raw.iter().map(|l| (l - lse).exp()).collect();
    // d ln(raw_j) / d theta
    let r_mean: Vec<f64> = edges
        .windows(2)
        .zip(&log_raw)
        .map(|(w, l)| ((log_std_normal_pdf(w[0]) - l).exp() - (log_std_normal_pdf(w[1]) - l).exp()) / sigma)
        .collect();
    let r_log_std: Vec<f64> = edges
        .windows(2)
        .zip(&log_raw)
        .map(|(w, l)| (log_std_normal_pdf(w[0]) - l).exp() * w[0] - (log_std_normal_pdf(w[1]) - l).exp() * w[1])
        .collect();
    let mean_r_mean: f64 = masses.iter().zip(&r_mean).map(|(q, r)| q * r).sum();
    let mean_r_log_std: f64 = masses.iter().zip(&r_log_std).map(|(q, r)| q * r).sum();
    PriorBins {
        d_mean: masses.iter().zip(&r_mean).map(|(q, r)| q * (r - mean_r_mean)).collect(),
        d_log_std: masses.iter().zip(&r_log_std).map(|(q, r)| q * (r - mean_r_log_std)).collect(),
        masses,
    }
}

/// `KL(P || Q)` between the smoothed prediction histogram `P` and the
/// smoothed, per-bin-integrated prior `Q`, with `(dKL/dmean, dKL/dlog_std)`.
pub fn distribution_reg_with_grad(
    preds: &[f64],
    prior: &GaussianPrior,
    bin_count: usize,
) -> Result<(f64, f64, f64)> {
    let p = empirical_histogram(preds, bin_count)?.smoothed();
    let bins = prior_bins(prior, bin_count);
    let q = smooth(&bins.masses);
    let z = 1.0 + bin_count as f64 * HIST_EPS;
    let mut kl = 0.0;
    let mut g_mean = 0.0;
    let mut g_log_std = 0.0;
    for j in 0..bin_count {
        kl += p[j] * (p[j] / q[j]).ln();
        let w = -p[j] / q[j] / z;
        g_mean += w * bins.d_mean[j];
        g_log_std += w * bins.d_log_std[j];
    }
    Ok((kl.max(0.0), g_mean, g_log_std))
}

pub fn loss_distribution_reg(preds: &[f64], prior: &GaussianPrior, bin_count: usize) -> Result<f64> {
    distribution_reg_with_grad(preds, prior, bin_count).map(|r| r.0)
}

/// Mean squared error; the teacher side is a constant target.
pub fn loss_student_mse(student: &[f64], teacher: &[f64]) -> Result<f64> {
    check_lengths(student.len(), teacher.len(), "mean squared error")?;
    Ok(student
        .iter()
        .zip(teacher)
        .map(|(s, t)| (s - t) * (s - t))
        .sum::<f64>()
        / student.len() as f64)
}

/// `dL/dstudent_i` of [`loss_student_mse`].
pub fn mse_grad(student: &[f64], teacher: &[f64]) -> Vec<f64> {
    let n = student.len() as f64;
    student.iter().zip(teacher).map(|(s, t)| 2.0 * (s - t) / n).collect()
}

/// Mean taken relative to the first element, so a constant sequence has
/// exactly its own value as mean and a deviation of exactly zero.
fn shifted_mean(v: &[f64]) -> f64 {
    v[0] + v.iter().map(|p| p - v[0]).sum::<f64>() / v.len() as f64
}

/// Population standard deviation of one meme's predictions over its noisy
/// copies.
pub fn loss_confidence(preds_over_noise: &[f64]) -> Result<f64> {
    if preds_over_noise.len() < 2 {
        return Err(Error::input(format!(
            "confidence loss needs at least 2 perturbations, got {}",
            preds_over_noise.len()
        )));
    }
    let k = preds_over_noise.len() as f64;
    let mean = shifted_mean(preds_over_noise);
    let var = preds_over_noise.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / k;
    Ok(var.sqrt())
}

/// `d std / d p_m`; defined as zero when the deviation vanishes.
pub fn confidence_grad(preds_over_noise: &[f64]) -> Vec<f64> {
    let k = preds_over_noise.len() as f64;
    let mean = shifted_mean(preds_over_noise);
    let std = loss_confidence(preds_over_noise).unwrap_or(0.0);
    if std == 0.0 {
        return vec![0.0; preds_over_noise.len()];
    }
    preds_over_noise.iter().map(|p| (p - mean) / (k * std)).collect()
}
