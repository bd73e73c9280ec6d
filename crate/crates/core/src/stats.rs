//! Small numeric helpers shared across modules.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn norm_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

pub fn norm_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Quantile of Student's t; falls back to the normal for huge or
/// non-finite degrees of freedom.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if !df.is_finite() || df > 1e7 {
        return norm_quantile(p);
    }
    StudentsT::new(0.0, 1.0, df)
        .expect("valid t distribution")
        .inverse_cdf(p)
}

/// Upper-tail probability of a chi-square variate.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    1.0 - ChiSquared::new(dof).expect("valid dof").cdf(x)
}

/// Arithmetic mean, shifted by the first value so that equal inputs
/// return that value exactly.
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else { return f64::NAN };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Sample variance with denominator `n - 1`; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let x0 = xs[0];
    let d: Vec<f64> = xs.iter().map(|x| x - x0).collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn std_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

/// Probability mass of the standard normal on `[a, b]`, computed on the
/// side of zero that keeps precision in the tails.
fn mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_sf(a) - std_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

/// Mean and standard deviation of a normal(mu, sigma) truncated to
/// `[lower, upper]`.
pub fn truncated_normal_moments(mu: f64, sigma: f64, lower: f64, upper: f64) -> (f64, f64) {
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    let z = mass(a, b);
    let (pa, pb) = (norm_pdf(a), norm_pdf(b));
    // a*phi(a) -> 0 as a -> -inf
    let apa = if a.is_finite() { a * pa } else { 0.0 };
    let bpb = if b.is_finite() { b * pb } else { 0.0 };
    let shift = (pa - pb) / z;
    let m = mu + sigma * shift;
    let var = sigma * sigma * (1.0 + (apa - bpb) / z - shift * shift);
    (m, var.max(0.0).sqrt())
}

/// Parameters of the untruncated normal whose truncation to
/// `[lower, upper]` has the given mean and standard deviation. Returns
/// `None` when no such normal exists.
pub fn match_truncated_normal(
    target_mean: f64,
    target_sd: f64,
    lower: f64,
    upper: f64,
) -> Option<(f64, f64)> {
    if !(lower < target_mean && target_mean < upper) || target_sd <= 0.0 {
        return None;
    }
    // Newton on (mu, ln sigma) with relative residuals and step halving.
    let resid = |mu: f64, ls: f64| -> Option<[f64; 2]> {
        let (m, s) = truncated_normal_moments(mu, ls.exp(), lower, upper);
        if m.is_finite() && s.is_finite() && s > 0.0 {
            Some([(m - target_mean) / target_sd, (s - target_sd) / target_sd])
        } else {
            None
        }
    };
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let (mut mu, mut ls) = (target_mean, target_sd.ln());
    let mut r = resid(mu, ls)?;
    for _ in 0..500 {
        if norm(r) < 1e-12 {
            return Some((mu, ls.exp()));
        }
        let sigma = ls.exp();
        let hm = 1e-6 * sigma;
        let hs = 1e-6;
        let rm = resid(mu + hm, ls)?;
        let rs = resid(mu, ls + hs)?;
        let j = [
            [(rm[0] - r[0]) / hm, (rs[0] - r[0]) / hs],
            [(rm[1] - r[1]) / hm, (rs[1] - r[1]) / hs],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let dmu = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dls = -(-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            // cap the log-sigma step to keep the search sane
            let step_ls = (t * dls).clamp(-1.0, 1.0);
            let (nmu, nls) = (mu + t * dmu, ls + step_ls);
            if let Some(nr) = resid(nmu, nls) {
                if norm(nr) < norm(r) {
                    mu = nmu;
                    ls = nls;
                    r = nr;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved || ls > 50.0 {
            return None;
        }
    }
    (norm(r) < 1e-8).then(|| (mu, ls.exp()))
}

/// Inverse-CDF draw from normal(mu, sigma) truncated to `[lower, upper]`,
/// given a uniform `u` in `[0, 1)`. Stable far into either tail.
pub fn truncated_normal_quantile(u: f64, mu: f64, sigma: f64, lower: f64, upper: f64) -> f64 {
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    let x = if a > 0.0 {
        let (sa, sb) = (std_sf(a), std_sf(b));
        -norm_quantile(sa - u * (sa - sb))
    } else {
        let (ca, cb) = (norm_cdf(a), norm_cdf(b));
        norm_quantile(ca + u * (cb - ca))
    };
    (mu + sigma * x).clamp(lower, upper)
}
