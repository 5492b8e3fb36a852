#![allow(dead_code)]

use ordcopula::copula::{CopulaSpec, CopulaTemplate};
use ordcopula::simulate::{simulate_panel, CovariateDesign, SimDesign};
use ordcopula::{JointModelParams, LinkFunction, MarginalParams, OrdinalPanel, SerialModel};
use proptest::prelude::*;

/// One representative per family, with t at a few degrees of freedom.
pub fn templates() -> Vec<CopulaTemplate> {
    vec![
        CopulaTemplate::bvn(),
        CopulaTemplate::frank(),
        CopulaTemplate::gumbel(),
        CopulaTemplate::survival_gumbel(),
        CopulaTemplate::student_t(1.0),
        CopulaTemplate::student_t(3.0),
        CopulaTemplate::student_t(8.0),
    ]
}

pub fn arb_template() -> impl Strategy<Value = CopulaTemplate> {
    prop::sample::select(templates())
}

/// A copula at a Kendall's τ in [0.02, 0.9], or negative where the family
/// allows it.
pub fn arb_copula() -> impl Strategy<Value = CopulaSpec> {
    (arb_template(), -0.8f64..0.9).prop_map(|(t, tau)| {
        let tau = if tau.abs() < 0.02 { 0.02 } else { tau };
        let tau = match t.family {
            ordcopula::CopulaFamily::Gumbel | ordcopula::CopulaFamily::SurvivalGumbel => tau.abs(),
            _ => tau,
        };
        t.at_tau(tau).unwrap()
    })
}

pub fn arb_cutpoints(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    k.prop_flat_map(|k| (-2.5f64..0.0, prop::collection::vec(0.05f64..1.5, k - 2)))
        .prop_map(|(a, gaps)| {
            let mut v = vec![a];
            for g in gaps {
                let last = *v.last().unwrap();
                v.push(last + g);
            }
            v
        })
}

pub fn arb_margin(k: std::ops::RangeInclusive<usize>, p: usize) -> impl Strategy<Value = MarginalParams> {
    (arb_cutpoints(k), prop::collection::vec(-1.0f64..1.0, p), any::<bool>()).prop_map(|(c, b, logit)| {
        let link = if logit { LinkFunction::Logit } else { LinkFunction::Probit };
        MarginalParams::new(link, c, b).unwrap()
    })
}

pub fn arb_joint(p: usize) -> impl Strategy<Value = JointModelParams> {
    (arb_margin(2..=6, p), arb_copula(), arb_margin(2..=6, p), arb_copula(), arb_copula())
        .prop_map(|(m, sm, f, sf, c)| JointModelParams::new(SerialModel::new(m, sm), SerialModel::new(f, sf), c))
}

pub fn simulate(jm: &JointModelParams, n: usize, t: usize, seed: u64) -> OrdinalPanel {
    let p = jm.male.margin.beta.len();
    let cov = if p == 0 { CovariateDesign::None } else { CovariateDesign::StandardNormal { p } };
    simulate_panel(jm, &SimDesign::new(n, t, seed).with_covariates(cov)).unwrap()
}

/// The model used by the simulation-based tests: Gumbel serial copulas at
/// τ = 1/3 and the given coupling.
pub fn reference_model(cutpoints: &[f64], coupling: CopulaSpec) -> JointModelParams {
    let m = MarginalParams::new(LinkFunction::Probit, cutpoints.to_vec(), vec![0.3, -0.2]).unwrap();
    let g = CopulaTemplate::gumbel().at_tau(1.0 / 3.0).unwrap();
    JointModelParams::new(SerialModel::new(m.clone(), g), SerialModel::new(m, g), coupling)
}
