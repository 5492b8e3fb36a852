//! First-order Markov chains for one ordinal series, with transitions built
//! from a bivariate copula on consecutive observations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaSpec;
use crate::error::{Error, Result};
use crate::margin::MarginalParams;
use crate::panel::{Couple, Gender, OrdinalPanel};
use crate::sum::{log_prob, reduce_couples, PROB_FLOOR};

/// Marginal model plus the serial copula of one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerialModel {
    pub margin: MarginalParams,
    pub copula: CopulaSpec,
}

impl SerialModel {
    pub fn new(margin: MarginalParams, copula: CopulaSpec) -> Self {
        SerialModel { margin, copula }
    }

    /// The margin with a serially independent chain.
    pub fn independent(margin: MarginalParams) -> Self {
        SerialModel { margin, copula: CopulaSpec::independence() }
    }

    pub(crate) fn check_panel(&self, panel: &OrdinalPanel, g: Gender) -> Result<()> {
        self.margin.check_covariates(panel.n_covariates())?;
        if self.margin.k() != panel.k(g) {
            return Err(Error::Input(format!(
                "{g} margin has K={} but the panel declares K={}",
                self.margin.k(),
                panel.k(g)
            )));
        }
        Ok(())
    }

    fn check_y(&self, y: usize, lo: usize) -> Result<()> {
        let k = self.margin.k();
        if y < lo || y > k {
            return Err(Error::domain(format!("category {y} outside {lo}..={k}")));
        }
        Ok(())
    }

    /// The conditioning category of a transition, rejecting one with zero
    /// probability.
    fn conditioning(&self, y_prev: usize, mu_prev: f64) -> Result<Conditioning> {
        let c = Conditioning::new(&self.margin, y_prev, mu_prev);
        if c.fp() > 0.0 {
            Ok(c)
        } else {
            Err(Error::Evaluation {
                couple: 0,
                wave: 0,
                message: format!("conditioning category {y_prev} has zero probability"),
            })
        }
    }

    fn frame_copula(&self, c: &Conditioning) -> CopulaSpec {
        if c.upper {
            self.copula.survival()
        } else {
            self.copula
        }
    }

    /// P(Y_t ≤ y | conditioning category) for a single y.
    fn conditional_cdf(&self, c: &Conditioning, y: usize, mu_t: f64) -> f64 {
        let cop = self.frame_copula(c);
        if c.upper {
            let v = self.margin.sf_raw(y, mu_t);
            (1.0 - (cop.cdf_raw(c.hi, v) - cop.cdf_raw(c.lo, v)) / c.fp()).clamp(0.0, 1.0)
        } else {
            let v = self.margin.cdf_raw(y, mu_t);
            ((cop.cdf_raw(c.hi, v) - cop.cdf_raw(c.lo, v)) / c.fp()).clamp(0.0, 1.0)
        }
    }

    /// `[lo, hi, p]` of category y on the transition cdf scale.
    fn transition_term(&self, c: &Conditioning, y: usize, mu_t: f64) -> [f64; 3] {
        let (a, b) = self.margin.interval(y, mu_t, c.upper);
        let fp = c.fp().max(PROB_FLOOR);
        let [c00, c01, c10, c11] = self.frame_copula(c).rect_corners(c.lo, c.hi, a, b);
        let na = c10 - c00;
        let nb = c11 - c01;
        let p = (nb - na).max(0.0) / fp;
        if c.upper {
            // na and nb are joint survival masses beyond the current bounds
            let hi = (1.0 - na / fp).clamp(0.0, 1.0);
            [(1.0 - nb / fp).clamp(0.0, hi), hi, p]
        } else {
            let hi = (nb / fp).clamp(0.0, 1.0);
            [(na / fp).clamp(0.0, hi), hi, p]
        }
    }

    /// Transition cdf values P(Y_t ≤ y | y_prev) for y = 0..=K.
    pub fn transition_cdf_row(&self, y_prev: usize, mu_t: f64, mu_prev: f64) -> Result<Vec<f64>> {
        self.check_y(y_prev, 1)?;
        let c = self.conditioning(y_prev, mu_prev)?;
        Ok((0..=self.margin.k()).map(|y| self.conditional_cdf(&c, y, mu_t)).collect())
    }
}

/// A conditioning category as an interval on the uniform scale. Categories
/// above the latent median are held as survival probabilities, where the
/// serial copula is replaced by its survival copula, so that rare upper
/// categories keep their relative precision.
#[derive(Clone, Copy, Debug)]
struct Conditioning {
    upper: bool,
    lo: f64,
    hi: f64,
}

impl Conditioning {
    fn new(m: &MarginalParams, y: usize, mu: f64) -> Self {
        let upper = m.upper_half(y, mu);
        let (lo, hi) = m.interval(y, mu, upper);
        Conditioning { upper, lo, hi }
    }

    fn fp(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Joint probability of (y_prev, y_t): the serial-copula rectangle over
/// [F(y_prev−1), F(y_prev)] × [F(y_t−1), F(y_t)].
pub fn pair_pmf(y_t: usize, y_prev: usize, mu_t: f64, mu_prev: f64, m: &SerialModel) -> Result<f64> {
    m.check_y(y_t, 1)?;
    m.check_y(y_prev, 1)?;
    let mg = &m.margin;
    let upper = mg.upper_half(y_prev, mu_prev) && mg.upper_half(y_t, mu_t);
    let cop = if upper { m.copula.survival() } else { m.copula };
    let (a1, b1) = mg.interval(y_prev, mu_prev, upper);
    let (a2, b2) = mg.interval(y_t, mu_t, upper);
    Ok(cop.rect_raw(a1, b1, a2, b2))
}

/// P(Y_t = y_t | Y_{t−1} = y_prev).
pub fn transition_pmf(y_t: usize, y_prev: usize, mu_t: f64, mu_prev: f64, m: &SerialModel) -> Result<f64> {
    m.check_y(y_t, 1)?;
    m.check_y(y_prev, 1)?;
    let c = m.conditioning(y_prev, mu_prev)?;
    Ok(m.transition_term(&c, y_t, mu_t)[2])
}

/// P(Y_t ≤ y_t | Y_{t−1} = y_prev) for y_t in 0..=K.
pub fn transition_cdf(y_t: usize, y_prev: usize, mu_t: f64, mu_prev: f64, m: &SerialModel) -> Result<f64> {
    m.check_y(y_t, 0)?;
    m.check_y(y_prev, 1)?;
    let c = m.conditioning(y_prev, mu_prev)?;
    Ok(m.conditional_cdf(&c, y_t, mu_t))
}

/// Per-wave terms of one series for one couple: `[lo, hi, p]`, where
/// [lo, hi] bounds the observed category on the conditional cdf scale (the
/// static margin at the first wave, the transition cdf afterwards) and `p`
/// is the corresponding probability.
pub(crate) fn couple_series_terms(couple: &Couple, g: Gender, m: &SerialModel, out: &mut Vec<[f64; 3]>) {
    let mg = &m.margin;
    let mut prev: Option<Conditioning> = None;
    for w in &couple.waves {
        let y = w.y(g);
        let mu = mg.mu(w.x(g));
        let own = Conditioning::new(mg, y, mu);
        let term = match prev {
            None => {
                let (a, b) = if own.upper { mg.interval(y, mu, false) } else { (own.lo, own.hi) };
                [a, b, own.fp()]
            }
            Some(c) => m.transition_term(&c, y, mu),
        };
        out.push(term);
        prev = Some(own);
    }
}

/// Series terms for every couple of the panel, flattened in couple order.
pub(crate) fn series_terms(panel: &OrdinalPanel, g: Gender, m: &SerialModel) -> Vec<[f64; 3]> {
    let per_couple: Vec<Vec<[f64; 3]>> = panel
        .couples()
        .par_iter()
        .map(|c| {
            let mut v = Vec::with_capacity(c.waves.len());
            couple_series_terms(c, g, m, &mut v);
            v
        })
        .collect();
    per_couple.concat()
}

/// Start offsets of each couple's waves in flattened per-wave arrays.
pub(crate) fn wave_offsets(panel: &OrdinalPanel) -> Vec<usize> {
    let mut off = Vec::with_capacity(panel.n_couples() + 1);
    let mut acc = 0;
    off.push(0);
    for c in panel.couples() {
        acc += c.waves.len();
        off.push(acc);
    }
    off
}

/// Serial log-likelihood of one gender: first-wave marginal term plus the
/// log transition probabilities.
pub fn loglik_markov(panel: &OrdinalPanel, g: Gender, m: &SerialModel) -> Result<f64> {
    Ok(loglik_markov_detailed(panel, g, m)?.total)
}

pub fn loglik_markov_detailed(
    panel: &OrdinalPanel,
    g: Gender,
    m: &SerialModel,
) -> Result<crate::sum::Likelihood> {
    m.check_panel(panel, g)?;
    reduce_couples(panel.n_couples(), |ci| {
        let c = panel.couple(ci);
        let mut terms = Vec::with_capacity(c.waves.len());
        couple_series_terms(c, g, m, &mut terms);
        let mut floored = 0;
        let mut s = 0.0;
        for (t, term) in terms.iter().enumerate() {
            s += log_prob(term[2], ci, t, &mut floored)?;
        }
        Ok((s, floored))
    })
}
