//! Copula family selection by maximized log-likelihood, and Vuong's test
//! for non-nested joint models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{CopulaFamily, CopulaTemplate};
use crate::coupling::{loglik_joint_detailed, JointModelParams};
use crate::error::{Error, Result};
use crate::estimation::{fit_joint, fit_serial, FitOptions, FitReport, SerialFit};
use crate::panel::{Gender, OrdinalPanel};
use crate::special::norm_cdf;

/// Candidate copula families for the serial and coupling copulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub serial: Vec<CopulaTemplate>,
    pub coupling: Vec<CopulaTemplate>,
}

impl Default for CandidateSet {
    /// BVN, Frank, Gumbel, s.Gumbel and t_ν for ν = 1..10, for both roles.
    fn default() -> Self {
        CandidateSet {
            serial: CopulaTemplate::default_candidates(),
            coupling: CopulaTemplate::default_candidates(),
        }
    }
}

impl CandidateSet {
    /// The listed families, with the t family expanded over `t_dof`.
    pub fn from_families(families: &[CopulaFamily], t_dof: &[u32]) -> Result<Vec<CopulaTemplate>> {
        let mut out = Vec::new();
        for &f in families {
            if f == CopulaFamily::StudentT {
                out.extend(t_dof.iter().map(|&n| CopulaTemplate::student_t(n as f64)));
            } else {
                out.push(CopulaTemplate::new(f, None)?);
            }
        }
        if out.is_empty() {
            return Err(Error::Input("empty candidate set".into()));
        }
        Ok(out)
    }
}

/// Canonical position used to break log-likelihood ties: BVN, Frank, Gumbel,
/// s.Gumbel, then t by increasing ν.
fn canonical_rank(t: &CopulaTemplate) -> (usize, f64) {
    let fam = match t.family {
        CopulaFamily::Bvn => 0,
        CopulaFamily::Frank => 1,
        CopulaFamily::Gumbel => 2,
        CopulaFamily::SurvivalGumbel => 3,
        CopulaFamily::StudentT => 4,
    };
    (fam, t.nu.unwrap_or(0.0))
}

/// Indices of `items` sorted by decreasing log-likelihood with the canonical
/// tie-break; entries without a log-likelihood go last.
fn ranking(items: &[(CopulaTemplate, Option<f64>)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ta, la) = &items[a];
        let (tb, lb) = &items[b];
        let la = la.unwrap_or(f64::NEG_INFINITY);
        let lb = lb.unwrap_or(f64::NEG_INFINITY);
        lb.total_cmp(&la)
            .then(canonical_rank(ta).0.cmp(&canonical_rank(tb).0))
            .then(canonical_rank(ta).1.total_cmp(&canonical_rank(tb).1))
    });
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerialCandidate {
    pub template: CopulaTemplate,
    pub fit: Option<SerialFit>,
    pub error: Option<String>,
}

impl SerialCandidate {
    pub fn loglik(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.loglik_markov)
    }
}

/// Serial candidates of one gender, best first; failed fits come last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerialScan {
    pub gender: Gender,
    pub ranked: Vec<SerialCandidate>,
}

impl SerialScan {
    pub fn best(&self) -> &SerialFit {
        self.ranked[0].fit.as_ref().expect("a scan holds at least one successful fit")
    }
}

/// Fits stages 1a–1c for every serial candidate of one gender and ranks them
/// by the maximized Markov log-likelihood.
pub fn scan_serial(
    panel: &OrdinalPanel,
    g: Gender,
    candidates: &[CopulaTemplate],
    opts: &FitOptions,
) -> Result<SerialScan> {
    if candidates.is_empty() {
        return Err(Error::Input("empty serial candidate list".into()));
    }
    let fits: Vec<SerialCandidate> = candidates
        .par_iter()
        .map(|&t| match fit_serial(panel, g, t, opts) {
            Ok(fit) => SerialCandidate { template: t, fit: Some(fit), error: None },
            Err(e) => SerialCandidate { template: t, fit: None, error: Some(e.to_string()) },
        })
        .collect();
    if fits.iter().all(|c| c.fit.is_none()) {
        return Err(Error::Numerical(format!(
            "every serial candidate failed for {g}: {}",
            fits.iter().filter_map(|c| c.error.clone()).collect::<Vec<_>>().join("; ")
        )));
    }
    let keys: Vec<_> = fits.iter().map(|c| (c.template, c.loglik())).collect();
    let ranked = ranking(&keys).into_iter().map(|i| fits[i].clone()).collect();
    Ok(SerialScan { gender: g, ranked })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingCandidate {
    pub template: CopulaTemplate,
    pub report: Option<FitReport>,
    pub error: Option<String>,
    /// Vuong test of this candidate (model 2) against the scan's reference
    /// candidate (model 1).
    pub vuong_vs_reference: Option<VuongResult>,
}

impl CouplingCandidate {
    pub fn loglik(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.loglik.joint)
    }
}

/// Coupling candidates, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingScan {
    pub ranked: Vec<CouplingCandidate>,
    /// BVN when it is among the candidates.
    pub reference: Option<CopulaTemplate>,
}

impl CouplingScan {
    pub fn best(&self) -> &FitReport {
        self.ranked[0].report.as_ref().expect("a scan holds at least one successful fit")
    }

    pub fn get(&self, t: &CopulaTemplate) -> Option<&CouplingCandidate> {
        self.ranked.iter().find(|c| &c.template == t)
    }
}

/// Runs stages 4 and 5 for every coupling candidate with the serial fits
/// held at their chosen families, and ranks by the final joint
/// log-likelihood.
pub fn scan_coupling(
    panel: &OrdinalPanel,
    serial: [&SerialFit; 2],
    candidates: &[CopulaTemplate],
    opts: &FitOptions,
) -> Result<CouplingScan> {
    if candidates.is_empty() {
        return Err(Error::Input("empty coupling candidate list".into()));
    }
    let mut fits: Vec<CouplingCandidate> = candidates
        .par_iter()
        .map(|&t| match fit_joint(panel, serial, t, opts) {
            Ok(r) => CouplingCandidate { template: t, report: Some(r), error: None, vuong_vs_reference: None },
            Err(e) => CouplingCandidate { template: t, report: None, error: Some(e.to_string()), vuong_vs_reference: None },
        })
        .collect();
    if fits.iter().all(|c| c.report.is_none()) {
        return Err(Error::Numerical(format!(
            "every coupling candidate failed: {}",
            fits.iter().filter_map(|c| c.error.clone()).collect::<Vec<_>>().join("; ")
        )));
    }
    let reference = fits
        .iter()
        .find(|c| c.template.family == CopulaFamily::Bvn && c.report.is_some())
        .map(|c| (c.template, c.report.as_ref().map(|r| r.params.clone()).unwrap()));
    if let Some((ref_t, ref_params)) = &reference {
        for c in fits.iter_mut() {
            if &c.template == ref_t {
                continue;
            }
            if let Some(r) = &c.report {
                c.vuong_vs_reference = vuong_test(panel, ref_params, &r.params).ok();
            }
        }
    }
    let keys: Vec<_> = fits.iter().map(|c| (c.template, c.loglik())).collect();
    let ranked = ranking(&keys).into_iter().map(|i| fits[i].clone()).collect();
    Ok(CouplingScan { ranked, reference: reference.map(|r| r.0) })
}

/// Vuong's statistic comparing model 2 against model 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VuongResult {
    /// Mean of Dᵢ = ℓᵢ⁽²⁾ − ℓᵢ⁽¹⁾ over couples.
    pub d_bar: f64,
    pub s: f64,
    pub z0: f64,
    /// Two-sided normal p-value.
    pub p_value: f64,
    /// Number of couples.
    pub n: usize,
    /// Σ Dᵢ.
    pub sum_d: f64,
}

/// Vuong's test from per-couple log-likelihood differences; a positive z₀
/// favours model 2.
pub fn vuong_from_differences(d: &[f64]) -> Result<VuongResult> {
    let n = d.len();
    if n < 2 {
        return Err(Error::Degenerate("Vuong's test needs at least two couples".into()));
    }
    let sum: f64 = d.iter().sum();
    let d_bar = sum / n as f64;
    let ss: f64 = d.iter().map(|v| (v - d_bar) * (v - d_bar)).sum();
    let s = (ss / (n - 1) as f64).sqrt();
    if !(s > 0.0) {
        return Err(Error::Degenerate("Vuong's test undefined: per-couple differences have zero variance".into()));
    }
    let z0 = (n as f64).sqrt() * d_bar / s;
    Ok(VuongResult { d_bar, s, z0, p_value: (2.0 * norm_cdf(-z0.abs())).min(1.0), n, sum_d: sum })
}

/// Vuong's test of `fit2` against `fit1` on the same panel, with Dᵢ the
/// difference of couple i's complete log-likelihood contributions.
pub fn vuong_test(panel: &OrdinalPanel, fit1: &JointModelParams, fit2: &JointModelParams) -> Result<VuongResult> {
    let l1 = loglik_joint_detailed(panel, fit1)?;
    let l2 = loglik_joint_detailed(panel, fit2)?;
    let d: Vec<f64> = l2.per_couple.iter().zip(&l1.per_couple).map(|(b, a)| b - a).collect();
    vuong_from_differences(&d)
}
