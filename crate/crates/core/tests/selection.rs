mod common;

use common::{reference_model, simulate};
use ordcopula::copula::{CopulaSpec, CopulaTemplate};
use ordcopula::estimation::{fit_joint, fit_serial};
use ordcopula::selection::{scan_coupling, scan_serial};
use ordcopula::{
    loglik_joint, vuong_test, CopulaFamily, Error, FitOptions, Gender, JointModelParams, LinkFunction,
    MarginalParams, SerialModel,
};

fn quick() -> FitOptions {
    FitOptions { standard_errors: false, ..FitOptions::default() }
}

#[test]
fn vuong_decomposes_and_flips_sign() {
    let truth = reference_model(&[-0.6, 0.5], CopulaTemplate::frank().at_tau(0.3).unwrap());
    let panel = simulate(&truth, 200, 4, 3);
    let mut other = truth.clone();
    other.coupling = CopulaTemplate::student_t(4.0).at_tau(0.25).unwrap();
    other.male.copula = CopulaTemplate::bvn().at_tau(0.3).unwrap();
    let r = vuong_test(&panel, &truth, &other).unwrap();
    let q = vuong_test(&panel, &other, &truth).unwrap();
    assert_eq!(r.z0, -q.z0);
    assert_eq!(r.d_bar, -q.d_bar);
    assert_eq!(r.p_value, q.p_value);
    let dl = loglik_joint(&panel, &other).unwrap() - loglik_joint(&panel, &truth).unwrap();
    assert!((r.sum_d - dl).abs() < 1e-9);
    assert_eq!(r.n, 200);
    assert!((r.z0 - (200f64).sqrt() * r.d_bar / r.s).abs() < 1e-12);
    assert!(matches!(vuong_test(&panel, &truth, &truth), Err(Error::Degenerate(_))));
}

#[test]
fn single_candidate_scans() {
    let truth = reference_model(&[-0.6, 0.5], CopulaSpec::bvn(0.3).unwrap());
    let panel = simulate(&truth, 150, 3, 5);
    let s = scan_serial(&panel, Gender::Female, &[CopulaTemplate::frank()], &quick()).unwrap();
    assert_eq!(s.ranked.len(), 1);
    assert_eq!(s.ranked[0].template, CopulaTemplate::frank());
    let m = s.best().clone();
    let male = fit_serial(&panel, Gender::Male, CopulaTemplate::frank(), &quick()).unwrap();
    let c = scan_coupling(&panel, [&male, &m], &[CopulaTemplate::bvn()], &quick()).unwrap();
    assert_eq!(c.ranked.len(), 1);
    assert!(c.ranked[0].vuong_vs_reference.is_none());
    assert!(scan_serial(&panel, Gender::Male, &[], &quick()).is_err());
}

/// A single K=5 series model with the given serial copula; the female
/// series and the coupling are independent of it.
fn serial_truth(serial: CopulaSpec, coupling: CopulaSpec) -> JointModelParams {
    let m = MarginalParams::new(LinkFunction::Probit, vec![-1.2, -0.4, 0.3, 1.1], vec![0.3, -0.2]).unwrap();
    JointModelParams::new(SerialModel::new(m.clone(), serial), SerialModel::new(m, serial), coupling)
}

#[test]
fn serial_t3_outranks_bvn() {
    let t3 = CopulaTemplate::student_t(3.0).at_tau(0.3).unwrap();
    let truth = serial_truth(t3, CopulaSpec::independence());
    let candidates = CopulaTemplate::default_candidates();
    let mut hits = 0;
    for rep in 0..10 {
        let panel = simulate(&truth, 1000, 7, 3000 + rep);
        let scan = scan_serial(&panel, Gender::Male, &candidates, &quick()).unwrap();
        let rank = |f: &dyn Fn(&CopulaTemplate) -> bool| scan.ranked.iter().position(|c| f(&c.template)).unwrap();
        let t_pos = rank(&|t| t.family == CopulaFamily::StudentT);
        let bvn_pos = rank(&|t| t.family == CopulaFamily::Bvn);
        eprintln!("serial t3 rep {rep}: winner {}", scan.ranked[0].template);
        hits += (t_pos < bvn_pos) as usize;
    }
    assert!(hits >= 8, "{hits}/10");
}

#[test]
fn serial_independence_candidates_agree() {
    let truth = serial_truth(CopulaSpec::independence(), CopulaSpec::independence());
    let panel = simulate(&truth, 1000, 7, 77);
    let scan = scan_serial(&panel, Gender::Female, &CopulaTemplate::default_candidates(), &quick()).unwrap();
    let ll = |t: CopulaTemplate| scan.ranked.iter().find(|c| c.template == t).unwrap().loglik().unwrap();
    // BVN, Frank and the Gumbel pair contain independence; a t copula at
    // ρ = 0 does not, and approaches it only as ν grows
    let nesting: Vec<f64> = CopulaTemplate::default_candidates()
        .into_iter()
        .filter(|t| t.family != CopulaFamily::StudentT)
        .map(ll)
        .collect();
    let spread = nesting.iter().cloned().fold(f64::MIN, f64::max) - nesting.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 2.0, "log-likelihood spread {spread}");
    let t_lls: Vec<f64> = (1..=10).map(|nu| ll(CopulaTemplate::student_t(nu as f64))).collect();
    assert!(t_lls.windows(2).all(|w| w[1] > w[0]), "{t_lls:?}");
    assert!(t_lls[9] < nesting.iter().cloned().fold(f64::MAX, f64::min));
    assert!(scan.best().template.family != CopulaFamily::StudentT);
    assert!(scan.best().model.copula.kendall_tau().abs() <= 0.03);
}

#[test]
fn vuong_calibration_under_independent_coupling() {
    let truth = reference_model(&[-0.6, 0.5], CopulaSpec::independence());
    let mut inside = 0;
    for rep in 0..10 {
        let panel = simulate(&truth, 300, 5, 4000 + rep);
        let opts = quick();
        let m = fit_serial(&panel, Gender::Male, CopulaTemplate::gumbel(), &opts).unwrap();
        let f = fit_serial(&panel, Gender::Female, CopulaTemplate::gumbel(), &opts).unwrap();
        let bvn = fit_joint(&panel, [&m, &f], CopulaTemplate::bvn(), &opts).unwrap();
        let t5 = fit_joint(&panel, [&m, &f], CopulaTemplate::student_t(5.0), &opts).unwrap();
        let v = vuong_test(&panel, &bvn.params, &t5.params).unwrap();
        eprintln!("calibration rep {rep}: z0 {:.3}", v.z0);
        inside += (v.z0.abs() < 3.0) as usize;
    }
    assert!(inside >= 9, "{inside}/10");
}
