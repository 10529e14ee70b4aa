//! Analytic maximum-ambiguity threshold of a score-space mixture.
//!
//! The objective is the running integral of the signed density
//! `(1 - pi_c - pi_s) p_in + pi_c p_cov - pi_s p_sem`, taken from the lower
//! edge of the grid. The lower limit only shifts the curve, so the argmax is
//! unaffected.

use serde::Serialize;

use super::ScoreMixtureSpec;
use crate::error::{Error, Result};

pub const MIN_GRID_RESOLUTION: usize = 1000;

/// Grid half-width beyond the extreme component means, in standard deviations.
const SPAN_SIGMAS: f64 = 8.0;

/// Objective values within this distance of the maximum count as ties.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct MaxAmbiguity {
    pub lambda_star: f64,
    /// Median of the full wild mixture, used to break ties.
    pub median: f64,
    pub grid_step: f64,
    /// `(mu, F(mu))` on the uniform grid.
    pub curve: Vec<(f64, f64)>,
}

pub fn analytic_max_ambiguity(spec: &ScoreMixtureSpec, grid_resolution: usize) -> Result<MaxAmbiguity> {
    spec.validate()?;
    if grid_resolution < MIN_GRID_RESOLUTION {
        return Err(Error::config(
            "grid_resolution",
            format!("{grid_resolution} points cannot bracket the mixture; need >= {MIN_GRID_RESOLUTION}"),
        ));
    }
    let (lo, hi) = spec
        .weighted()
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .filter_map(|(_, d)| d.span(SPAN_SIGMAS))
        .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
        .ok_or_else(|| Error::config("score_mixture", "no component carries weight"))?;

    let step = (hi - lo) / (grid_resolution - 1) as f64;
    let xs: Vec<f64> = (0..grid_resolution).map(|i| lo + step * i as f64).collect();
    let h: Vec<f64> = xs.iter().map(|&x| spec.signed_density(x)).collect();
    let mut f = vec![0.0; grid_resolution];
    for i in 1..grid_resolution {
        f[i] = f[i - 1] + 0.5 * step * (h[i - 1] + h[i]);
    }

    let median = mixture_median(spec, lo, hi);
    let f_max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda_star = xs
        .iter()
        .zip(&f)
        .filter(|(_, &v)| v >= f_max - TIE_TOL)
        .map(|(&x, _)| x)
        .min_by(|a, b| (a - median).abs().total_cmp(&(b - median).abs()))
        .expect("grid is nonempty");

    Ok(MaxAmbiguity {
        lambda_star,
        median,
        grid_step: step,
        curve: xs.into_iter().zip(f).collect(),
    })
}

fn mixture_median(spec: &ScoreMixtureSpec, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spec.wild_cdf(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}
