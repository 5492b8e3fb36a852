//! Joint model for the two series: a coupling copula applied to the
//! conditional-on-past distributions of male and female responses.

use serde::{Deserialize, Serialize};

use crate::copula::CopulaSpec;
use crate::error::{Error, Result};
use crate::markov::{series_terms, wave_offsets, SerialModel};
use crate::panel::{Gender, OrdinalPanel};
use crate::sum::{log_prob, reduce_couples, Likelihood};

/// Complete parameter set of the joint model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointModelParams {
    pub male: SerialModel,
    pub female: SerialModel,
    pub coupling: CopulaSpec,
}

impl JointModelParams {
    pub fn new(male: SerialModel, female: SerialModel, coupling: CopulaSpec) -> Self {
        JointModelParams { male, female, coupling }
    }

    pub fn serial(&self, g: Gender) -> &SerialModel {
        match g {
            Gender::Male => &self.male,
            Gender::Female => &self.female,
        }
    }

    pub fn serial_mut(&mut self, g: Gender) -> &mut SerialModel {
        match g {
            Gender::Male => &mut self.male,
            Gender::Female => &mut self.female,
        }
    }

    pub fn ks(&self) -> [usize; 2] {
        [self.male.margin.k(), self.female.margin.k()]
    }

    pub(crate) fn check_panel(&self, panel: &OrdinalPanel) -> Result<()> {
        self.male.check_panel(panel, Gender::Male)?;
        self.female.check_panel(panel, Gender::Female)
    }
}

/// Previous categories and linear predictors of both series, indexed by
/// [`Gender::index`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrevState {
    pub y_prev: [usize; 2],
    pub mu_prev: [f64; 2],
    pub mu: [f64; 2],
}

fn check_cell(y: [usize; 2], jm: &JointModelParams) -> Result<()> {
    let k = jm.ks();
    for i in 0..2 {
        if y[i] < 1 || y[i] > k[i] {
            return Err(Error::domain(format!("category {} outside 1..={}", y[i], k[i])));
        }
    }
    Ok(())
}

/// Marginal cdf values F(y) for y = 0..=K.
fn static_cdf_row(m: &SerialModel, mu: f64) -> Vec<f64> {
    (0..=m.margin.k()).map(|y| m.margin.cdf_raw(y, mu)).collect()
}

fn table_from_rows(rows: [Vec<f64>; 2], coupling: &CopulaSpec) -> Vec<Vec<f64>> {
    let [r1, r2] = rows;
    (1..r1.len())
        .map(|y1| {
            (1..r2.len())
                .map(|y2| coupling.rect_raw(r1[y1 - 1], r1[y1], r2[y2 - 1], r2[y2]))
                .collect()
        })
        .collect()
}

/// Joint pmf of (y1, y2) at a wave after the first, given the previous state.
pub fn joint_pmf_t(y1: usize, y2: usize, state: &PrevState, jm: &JointModelParams) -> Result<f64> {
    check_cell([y1, y2], jm)?;
    let rows = transition_rows(state, jm)?;
    Ok(jm.coupling.rect_raw(rows[0][y1 - 1], rows[0][y1], rows[1][y2 - 1], rows[1][y2]))
}

fn transition_rows(state: &PrevState, jm: &JointModelParams) -> Result<[Vec<f64>; 2]> {
    Ok([
        jm.male.transition_cdf_row(state.y_prev[0], state.mu[0], state.mu_prev[0])?,
        jm.female.transition_cdf_row(state.y_prev[1], state.mu[1], state.mu_prev[1])?,
    ])
}

/// Full K₁×K₂ table of [`joint_pmf_t`], rows indexed by the male category.
pub fn joint_table_t(state: &PrevState, jm: &JointModelParams) -> Result<Vec<Vec<f64>>> {
    Ok(table_from_rows(transition_rows(state, jm)?, &jm.coupling))
}

/// Joint pmf of the first wave: coupling rectangle over the static margins.
pub fn joint_pmf_initial(y1: usize, y2: usize, mu: [f64; 2], jm: &JointModelParams) -> Result<f64> {
    check_cell([y1, y2], jm)?;
    let (m, f) = (&jm.male.margin, &jm.female.margin);
    Ok(jm.coupling.rect_raw(
        m.cdf_raw(y1 - 1, mu[0]),
        m.cdf_raw(y1, mu[0]),
        f.cdf_raw(y2 - 1, mu[1]),
        f.cdf_raw(y2, mu[1]),
    ))
}

pub fn joint_table_initial(mu: [f64; 2], jm: &JointModelParams) -> Vec<Vec<f64>> {
    table_from_rows([static_cdf_row(&jm.male, mu[0]), static_cdf_row(&jm.female, mu[1])], &jm.coupling)
}

/// Joint log-likelihood over all couples and waves.
pub fn loglik_joint(panel: &OrdinalPanel, jm: &JointModelParams) -> Result<f64> {
    Ok(loglik_joint_detailed(panel, jm)?.total)
}

/// Joint log-likelihood with per-couple contributions.
pub fn loglik_joint_detailed(panel: &OrdinalPanel, jm: &JointModelParams) -> Result<Likelihood> {
    jm.check_panel(panel)?;
    let male = series_terms(panel, Gender::Male, &jm.male);
    let female = series_terms(panel, Gender::Female, &jm.female);
    combine_series(panel, &wave_offsets(panel), [&male, &female], &jm.coupling)
}

/// Couples precomputed per-wave series bounds through the coupling copula.
pub(crate) fn combine_series(
    panel: &OrdinalPanel,
    offsets: &[usize],
    terms: [&[[f64; 3]]; 2],
    coupling: &CopulaSpec,
) -> Result<Likelihood> {
    reduce_couples(panel.n_couples(), |ci| {
        let mut floored = 0;
        let mut s = 0.0;
        for (t, idx) in (offsets[ci]..offsets[ci + 1]).enumerate() {
            let [lo1, hi1, _] = terms[0][idx];
            let [lo2, hi2, _] = terms[1][idx];
            s += log_prob(coupling.rect_raw(lo1, hi1, lo2, hi2), ci, t, &mut floored)?;
        }
        Ok((s, floored))
    })
}
