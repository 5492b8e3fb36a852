//! In-memory bivariate ordinal panel.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const BOTH: [Gender; 2] = [Gender::Male, Gender::Female];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Gender::Male => "m",
            Gender::Female => "f",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

/// Both partners' responses and covariates at one wave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    /// Categories in 1..=K, indexed by [`Gender::index`].
    pub y: [usize; 2],
    pub x: [Vec<f64>; 2],
}

impl Wave {
    pub fn new(y_m: usize, y_f: usize, x_m: Vec<f64>, x_f: Vec<f64>) -> Self {
        Wave { y: [y_m, y_f], x: [x_m, x_f] }
    }

    #[inline]
    pub fn y(&self, g: Gender) -> usize {
        self.y[g.index()]
    }

    #[inline]
    pub fn x(&self, g: Gender) -> &[f64] {
        &self.x[g.index()]
    }
}

/// One couple observed at consecutive waves `first_wave, first_wave + 1, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Couple {
    pub id: String,
    pub first_wave: i64,
    pub waves: Vec<Wave>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrdinalPanel {
    k: [usize; 2],
    n_covariates: usize,
    couples: Vec<Couple>,
}

impl OrdinalPanel {
    /// Builds a validated panel with `k[g]` categories per gender and
    /// `n_covariates` covariates per gender.
    pub fn new(k: [usize; 2], n_covariates: usize, couples: Vec<Couple>) -> Result<Self> {
        for (g, &kg) in Gender::BOTH.iter().zip(&k) {
            if kg < 2 {
                return Err(Error::Input(format!("{g} series needs K >= 2, got {kg}")));
            }
        }
        if couples.is_empty() {
            return Err(Error::Input("panel has no couples".into()));
        }
        let mut ids = HashSet::new();
        for c in &couples {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::Input(format!("duplicate couple id `{}`", c.id)));
            }
            if c.waves.is_empty() {
                return Err(Error::Input(format!("couple `{}` has no waves", c.id)));
            }
            for (t, w) in c.waves.iter().enumerate() {
                for g in Gender::BOTH {
                    let y = w.y(g);
                    if y < 1 || y > k[g.index()] {
                        return Err(Error::Input(format!(
                            "couple `{}` wave {}: {g} category {y} outside 1..={}",
                            c.id,
                            c.first_wave + t as i64,
                            k[g.index()]
                        )));
                    }
                    let x = w.x(g);
                    if x.len() != n_covariates {
                        return Err(Error::Input(format!(
                            "couple `{}` wave {}: {} {g} covariates, expected {n_covariates}",
                            c.id,
                            c.first_wave + t as i64,
                            x.len()
                        )));
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Input(format!(
                            "couple `{}` wave {}: non-finite {g} covariate",
                            c.id,
                            c.first_wave + t as i64
                        )));
                    }
                }
            }
        }
        Ok(OrdinalPanel { k, n_covariates, couples })
    }

    pub fn k(&self, g: Gender) -> usize {
        self.k[g.index()]
    }

    pub fn ks(&self) -> [usize; 2] {
        self.k
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn couples(&self) -> &[Couple] {
        &self.couples
    }

    #[inline]
    pub fn couple(&self, i: usize) -> &Couple {
        &self.couples[i]
    }

    pub fn n_couples(&self) -> usize {
        self.couples.len()
    }

    /// Total number of couple-waves.
    pub fn n_observations(&self) -> usize {
        self.couples.iter().map(|c| c.waves.len()).sum()
    }

    /// Number of couples observed for each panel length T.
    pub fn wave_count_distribution(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for c in &self.couples {
            *m.entry(c.waves.len()).or_insert(0) += 1;
        }
        m
    }

    /// Rejects covariate columns that take a single value over the whole
    /// panel; location is carried by the cutpoints.
    pub fn check_no_constant_covariates(&self) -> Result<()> {
        for g in Gender::BOTH {
            for j in 0..self.n_covariates {
                let mut vals = self.couples.iter().flat_map(|c| c.waves.iter().map(move |w| w.x(g)[j]));
                let first = vals.next();
                if let Some(v0) = first {
                    if vals.all(|v| v == v0) {
                        return Err(Error::Input(format!(
                            "covariate x_{}_{} is constant; an intercept is not identified alongside cutpoints",
                            g.short(),
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The same panel with couples reordered.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.couples.len() {
            return Err(Error::Input("permutation length does not match couple count".into()));
        }
        let couples = order.iter().map(|&i| self.couples[i].clone()).collect();
        OrdinalPanel::new(self.k, self.n_covariates, couples)
    }

    /// Sub-panel with the given couples, keeping K and covariate dimension.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let couples = idx.iter().map(|&i| self.couples[i].clone()).collect();
        OrdinalPanel::new(self.k, self.n_covariates, couples)
    }

    /// Category frequencies of one gender's responses, index 0 for category 1.
    pub fn category_counts(&self, g: Gender) -> Vec<usize> {
        let mut counts = vec![0; self.k(g)];
        for c in &self.couples {
            for w in &c.waves {
                counts[w.y(g) - 1] += 1;
            }
        }
        counts
    }
}
