//! Latent-variable ordinal regression margins (probit and cumulative logit).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Gender, OrdinalPanel};
use crate::special::{norm_cdf, phi_inv};
use crate::sum::{log_prob, reduce_couples};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    #[default]
    Probit,
    Logit,
}

impl LinkFunction {
    #[inline]
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            LinkFunction::Probit => norm_cdf(x),
            LinkFunction::Logit => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Inverse link; `p` must lie in (0,1).
    pub fn quantile(self, p: f64) -> f64 {
        match self {
            LinkFunction::Probit => phi_inv(p),
            LinkFunction::Logit => (p / (1.0 - p)).ln(),
        }
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkFunction::Probit => "probit",
            LinkFunction::Logit => "logit",
        })
    }
}

impl FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "probit" | "normal" => Ok(LinkFunction::Probit),
            "logit" | "logistic" => Ok(LinkFunction::Logit),
            other => Err(Error::Input(format!("unknown link function `{other}`"))),
        }
    }
}

/// Cutpoints and regression coefficients of one ordinal series.
///
/// Category probabilities are `F(α_y + μ)` with `μ = xᵀβ`, or `μ = −xᵀβ`
/// when `negate_mu` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalParams {
    pub link: LinkFunction,
    pub cutpoints: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub negate_mu: bool,
}

impl MarginalParams {
    pub fn new(link: LinkFunction, cutpoints: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if cutpoints.is_empty() {
            return Err(Error::domain("an ordinal margin needs at least one cutpoint (K >= 2)"));
        }
        if cutpoints.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite marginal parameter"));
        }
        if cutpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!("cutpoints not strictly increasing: {cutpoints:?}")));
        }
        Ok(MarginalParams { link, cutpoints, beta, negate_mu: false })
    }

    pub fn with_negated_mu(mut self, negate: bool) -> Self {
        self.negate_mu = negate;
        self
    }

    /// Number of categories K.
    pub fn k(&self) -> usize {
        self.cutpoints.len() + 1
    }

    /// Linear predictor μ for covariate vector `x`.
    #[inline]
    pub fn mu(&self, x: &[f64]) -> f64 {
        let m: f64 = self.beta.iter().zip(x).map(|(b, v)| b * v).sum();
        if self.negate_mu {
            -m
        } else {
            m
        }
    }

    /// F(α_y + μ) without range checks; y = 0 gives 0 and y ≥ K gives 1.
    #[inline]
    pub(crate) fn cdf_raw(&self, y: usize, mu: f64) -> f64 {
        if y == 0 {
            0.0
        } else if y >= self.k() {
            1.0
        } else {
            self.link.cdf(self.cutpoints[y - 1] + mu)
        }
    }

    /// P(Y > y) = F(−(α_y + μ)) for the symmetric links, accurate in the
    /// upper tail.
    #[inline]
    pub(crate) fn sf_raw(&self, y: usize, mu: f64) -> f64 {
        if y == 0 {
            1.0
        } else if y >= self.k() {
            0.0
        } else {
            self.link.cdf(-(self.cutpoints[y - 1] + mu))
        }
    }

    /// True when category y lies entirely above the median of the latent
    /// variable, where cdf values near 1 lose precision.
    #[inline]
    pub(crate) fn upper_half(&self, y: usize, mu: f64) -> bool {
        y >= 2 && self.cutpoints[y - 2] + mu > 0.0
    }

    /// Category y as an interval (lo, hi): (F(y−1), F(y)), or in the upper
    /// frame the survival interval (P(Y > y), P(Y > y−1)).
    #[inline]
    pub(crate) fn interval(&self, y: usize, mu: f64, upper: bool) -> (f64, f64) {
        if upper {
            (self.sf_raw(y, mu), self.sf_raw(y - 1, mu))
        } else {
            (self.cdf_raw(y - 1, mu), self.cdf_raw(y, mu))
        }
    }

    /// f(y), differencing upper-tail probabilities when both cutpoints lie
    /// in the upper half to avoid cancellation.
    #[inline]
    pub(crate) fn pmf_raw(&self, y: usize, mu: f64) -> f64 {
        let (lo, hi) = self.interval(y, mu, self.upper_half(y, mu));
        hi - lo
    }

    fn check_y(&self, y: usize, lo: usize) -> Result<()> {
        if y < lo || y > self.k() {
            return Err(Error::domain(format!(
                "category {y} outside {lo}..={} for this margin",
                self.k()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_covariates(&self, p: usize) -> Result<()> {
        if self.beta.len() != p {
            return Err(Error::Input(format!(
                "margin has {} coefficients but the panel has {p} covariates",
                self.beta.len()
            )));
        }
        Ok(())
    }
}

/// P(Y ≤ y | μ) for y in 0..=K.
pub fn ordinal_cdf(y: usize, mu: f64, params: &MarginalParams) -> Result<f64> {
    params.check_y(y, 0)?;
    Ok(params.cdf_raw(y, mu))
}

/// P(Y = y | μ) for y in 1..=K.
pub fn ordinal_pmf(y: usize, mu: f64, params: &MarginalParams) -> Result<f64> {
    params.check_y(y, 1)?;
    Ok(params.pmf_raw(y, mu))
}

/// Log-likelihood of one gender's responses assuming serial independence.
pub fn loglik_indep(panel: &OrdinalPanel, gender: Gender, params: &MarginalParams) -> Result<f64> {
    params.check_covariates(panel.n_covariates())?;
    if params.k() != panel.k(gender) {
        return Err(Error::Input(format!(
            "margin has K={} but the panel declares K={} for {gender}",
            params.k(),
            panel.k(gender)
        )));
    }
    let lik = reduce_couples(panel.n_couples(), |ci| {
        let mut floored = 0;
        let mut s = 0.0;
        for (t, w) in panel.couple(ci).waves.iter().enumerate() {
            let p = params.pmf_raw(w.y(gender), params.mu(w.x(gender)));
            s += log_prob(p, ci, t, &mut floored)?;
        }
        Ok((s, floored))
    })?;
    Ok(lik.total)
}
