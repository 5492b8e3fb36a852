//! Exact seeded simulation of joint ordinal panels and empirical Kendall's τ.
//!
//! Each couple draws from its own ChaCha8 stream: the generator is seeded
//! with the design seed and its stream number set to the couple index, so a
//! couple's draws do not depend on how many couples are generated or on
//! thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{joint_table_initial, joint_table_t, JointModelParams, PrevState};
use crate::error::{Error, Result};
use crate::panel::{Couple, Gender, OrdinalPanel, Wave};

/// Largest number of categories accepted by the table sampler.
pub const MAX_SIM_CATEGORIES: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub enum CovariateDesign {
    /// No covariates (μ = 0).
    None,
    /// `p` independent standard normal covariates per gender and wave.
    StandardNormal { p: usize },
    /// Covariates copied from a template panel: couple i, wave t of the
    /// simulated panel uses couple i, wave t of the template.
    Fixed(OrdinalPanel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimDesign {
    pub n: usize,
    pub t: usize,
    pub covariates: CovariateDesign,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(n: usize, t: usize, seed: u64) -> Self {
        SimDesign { n, t, covariates: CovariateDesign::None, seed }
    }

    pub fn with_covariates(mut self, covariates: CovariateDesign) -> Self {
        self.covariates = covariates;
        self
    }

    fn n_covariates(&self) -> usize {
        match &self.covariates {
            CovariateDesign::None => 0,
            CovariateDesign::StandardNormal { p } => *p,
            CovariateDesign::Fixed(panel) => panel.n_covariates(),
        }
    }
}

/// Draws a panel from the joint model: the first wave from the joint table
/// of the static margins, later waves from the joint transition table given
/// the realized previous categories.
pub fn simulate_panel(jm: &JointModelParams, design: &SimDesign) -> Result<OrdinalPanel> {
    if design.n < 1 || design.t < 1 {
        return Err(Error::Input(format!("simulation needs n >= 1 and T >= 1, got n={} T={}", design.n, design.t)));
    }
    let ks = jm.ks();
    if ks.iter().any(|&k| k > MAX_SIM_CATEGORIES) {
        return Err(Error::Input(format!("simulation supports at most {MAX_SIM_CATEGORIES} categories, got {ks:?}")));
    }
    let p = design.n_covariates();
    for g in Gender::BOTH {
        jm.serial(g).margin.check_covariates(p)?;
    }
    if let CovariateDesign::Fixed(tpl) = &design.covariates {
        if tpl.n_couples() < design.n || tpl.couples().iter().take(design.n).any(|c| c.waves.len() < design.t) {
            return Err(Error::Input(format!(
                "covariate template must have at least {} couples with {} waves each",
                design.n, design.t
            )));
        }
    }
    let couples: Vec<Couple> = (0..design.n)
        .into_par_iter()
        .map(|i| simulate_couple(jm, design, i))
        .collect::<Result<_>>()?;
    OrdinalPanel::new(ks, p, couples)
}

fn simulate_couple(jm: &JointModelParams, design: &SimDesign, i: usize) -> Result<Couple> {
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    rng.set_stream(i as u64);
    let mut waves: Vec<Wave> = Vec::with_capacity(design.t);
    let mut prev: Option<([usize; 2], [f64; 2])> = None;
    for t in 0..design.t {
        let x: [Vec<f64>; 2] = match &design.covariates {
            CovariateDesign::None => [vec![], vec![]],
            CovariateDesign::StandardNormal { p } => {
                let mut draw = || (0..*p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>();
                let xm = draw();
                [xm, draw()]
            }
            CovariateDesign::Fixed(tpl) => tpl.couple(i).waves[t].x.clone(),
        };
        let mu = [jm.male.margin.mu(&x[0]), jm.female.margin.mu(&x[1])];
        let table = match prev {
            None => joint_table_initial(mu, jm),
            Some((y_prev, mu_prev)) => joint_table_t(&PrevState { y_prev, mu_prev, mu }, jm)?,
        };
        let y = draw_cell(&table, rng.random::<f64>());
        waves.push(Wave { y, x });
        prev = Some((y, mu));
    }
    Ok(Couple { id: (i + 1).to_string(), first_wave: 1, waves })
}

/// Inverse-cdf draw over the table in row-major order; returns 1-based
/// categories.
fn draw_cell(table: &[Vec<f64>], u: f64) -> [usize; 2] {
    let mut acc = 0.0;
    let mut last = [1, 1];
    for (i, row) in table.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = [i + 1, j + 1];
            if u < acc {
                return last;
            }
        }
    }
    last
}

/// Which response pairs enter an empirical Kendall's τ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    /// (male, female) at every wave.
    WithinCouple,
    /// (y_{t−1}, y_t) within one gender's series.
    Lag1(Gender),
}

/// Kendall's τ-b over the selected pairs, computed from their contingency table.
pub fn empirical_tau(panel: &OrdinalPanel, pairing: Pairing) -> Result<f64> {
    let (ka, kb) = match pairing {
        Pairing::WithinCouple => (panel.k(Gender::Male), panel.k(Gender::Female)),
        Pairing::Lag1(g) => (panel.k(g), panel.k(g)),
    };
    let mut table = vec![vec![0.0f64; kb]; ka];
    for c in panel.couples() {
        match pairing {
            Pairing::WithinCouple => {
                for w in &c.waves {
                    table[w.y[0] - 1][w.y[1] - 1] += 1.0;
                }
            }
            Pairing::Lag1(g) => {
                for pair in c.waves.windows(2) {
                    table[pair[0].y(g) - 1][pair[1].y(g) - 1] += 1.0;
                }
            }
        }
    }
    tau_b_from_table(&table)
}

/// Kendall's τ-b of a contingency table of counts (or probabilities).
pub fn tau_b_from_table(table: &[Vec<f64>]) -> Result<f64> {
    let n: f64 = table.iter().flatten().sum();
    let ka = table.len();
    let kb = table.first().map_or(0, Vec::len);
    let (mut conc, mut disc) = (0.0, 0.0);
    for i in 0..ka {
        for j in 0..kb {
            let nij = table[i][j];
            if nij == 0.0 {
                continue;
            }
            for row in &table[i + 1..] {
                for (jj, &v) in row.iter().enumerate() {
                    if jj > j {
                        conc += nij * v;
                    } else if jj < j {
                        disc += nij * v;
                    }
                }
            }
        }
    }
    let tie = |sums: Vec<f64>| sums.iter().map(|t| t * t).sum::<f64>();
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    // pair counts up to a common factor 1/2: n² − Σt² over rows and columns
    let da = n * n - tie(rows);
    let db = n * n - tie(cols);
    if !(da > 0.0 && db > 0.0) {
        return Err(Error::Degenerate("Kendall's tau undefined: one coordinate is constant".into()));
    }
    Ok(2.0 * (conc - disc) / (da * db).sqrt())
}
