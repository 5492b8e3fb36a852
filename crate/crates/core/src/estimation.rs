//! Staged maximum-likelihood estimation of the joint model.
//!
//! Stages: (1a) margins under serial independence, (1b) serial copula with
//! margins fixed, (1c) margins and serial copula jointly, per gender; then
//! (4) the coupling copula with both series fixed and (5) everything.
//! Each stage starts from the previous stage's estimates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::copula::{from_unconstrained, CopulaSpec, CopulaTemplate};
use crate::coupling::{combine_series, JointModelParams};
use crate::error::{Error, Result};
use crate::margin::{loglik_indep, LinkFunction, MarginalParams};
use crate::markov::{loglik_markov, series_terms, wave_offsets, SerialModel};
use crate::optim::{minimize, num_hessian, Minimum, OptimizerSettings, Termination};
use crate::panel::{Gender, OrdinalPanel};
use crate::simulate::{empirical_tau, Pairing};
use crate::special::norm_cdf;

/// Settings shared by every stage of a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub link: LinkFunction,
    /// Use μ = −xᵀβ instead of μ = xᵀβ.
    pub negate_mu: bool,
    pub optimizer: OptimizerSettings,
    /// Compute standard errors after the final stage.
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            link: LinkFunction::Probit,
            negate_mu: false,
            optimizer: OptimizerSettings::default(),
            standard_errors: true,
        }
    }
}

/// Copula families of a joint model, without parameter values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFamilies {
    pub serial_male: CopulaTemplate,
    pub serial_female: CopulaTemplate,
    pub coupling: CopulaTemplate,
}

impl ModelFamilies {
    pub fn new(serial_male: CopulaTemplate, serial_female: CopulaTemplate, coupling: CopulaTemplate) -> Self {
        ModelFamilies { serial_male, serial_female, coupling }
    }

    pub fn serial(&self, g: Gender) -> CopulaTemplate {
        match g {
            Gender::Male => self.serial_male,
            Gender::Female => self.serial_female,
        }
    }
}

/// Outcome of one optimization stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub gender: Option<Gender>,
    pub start_loglik: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub termination: Termination,
    pub converged: bool,
}

impl StageRecord {
    fn new(stage: &str, gender: Option<Gender>, start: f64, m: &Minimum) -> Self {
        StageRecord {
            stage: stage.to_string(),
            gender,
            start_loglik: -start,
            loglik: -m.f,
            iterations: m.iterations,
            evaluations: m.evaluations,
            grad_norm: m.grad_norm,
            termination: m.termination,
            converged: m.converged(),
        }
    }
}

/// Stages 1a–1c for one gender.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerialFit {
    pub gender: Gender,
    pub template: CopulaTemplate,
    /// Stage 1a margin.
    pub independent_margin: MarginalParams,
    /// Stage 1b model (1a margin with fitted serial copula).
    pub stage_1b: SerialModel,
    /// Stage 1c model.
    pub model: SerialModel,
    pub loglik_indep: f64,
    pub loglik_1b: f64,
    pub loglik_markov: f64,
    pub stages: Vec<StageRecord>,
}

impl SerialFit {
    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.converged)
    }
}

/// Maximized log-likelihoods of every stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLogliks {
    /// Stage 1a, by gender index.
    pub indep: [f64; 2],
    /// Stage 1b.
    pub markov_1b: [f64; 2],
    /// Stage 1c.
    pub markov: [f64; 2],
    pub joint_stage4: f64,
    pub joint: f64,
}

/// Kendall's τ of the serial copulas (by gender index) and the coupling copula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSet {
    pub serial: [f64; 2],
    pub coupling: f64,
}

/// Standard errors on the natural scale, laid out like
/// [`natural_parameters`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub natural: Vec<f64>,
    pub tau: TauSet,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeOutcome {
    Available(StandardErrors),
    /// The observed information is not positive definite; its eigenvalues
    /// (unconstrained coordinates) are reported instead.
    NotPositiveDefinite { eigenvalues: Vec<f64> },
}

impl SeOutcome {
    pub fn available(&self) -> Option<&StandardErrors> {
        match self {
            SeOutcome::Available(se) => Some(se),
            SeOutcome::NotPositiveDefinite { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub families: ModelFamilies,
    pub link: LinkFunction,
    pub negate_mu: bool,
    /// Human-readable statement of the cumulative-probability convention.
    pub sign_convention: String,
    pub n_couples: usize,
    pub n_observations: usize,
    /// Number of couples for each observed panel length.
    pub waves_per_couple: BTreeMap<usize, usize>,
    pub params: JointModelParams,
    pub loglik: StageLogliks,
    /// ℓ_joint − (ℓ_markov,male + ℓ_markov,female).
    pub dependence_gain: f64,
    pub tau: TauSet,
    pub standard_errors: Option<SeOutcome>,
    pub stages: Vec<StageRecord>,
    /// Probability terms floored at the final estimates.
    pub floored_terms: usize,
    pub converged: bool,
}

impl FitReport {
    /// Wald z and two-sided p-value for every regression coefficient, by
    /// gender index; `None` when standard errors are unavailable.
    pub fn beta_wald_tests(&self) -> Option<[Vec<(f64, f64)>; 2]> {
        let se = self.standard_errors.as_ref()?.available()?;
        let layout = Layout::of(&self.params);
        let mut out: [Vec<(f64, f64)>; 2] = [vec![], vec![]];
        for g in Gender::BOTH {
            let m = &self.params.serial(g).margin;
            let off = layout.offset(g) + layout.k[g.index()] - 1;
            for (j, &b) in m.beta.iter().enumerate() {
                out[g.index()].push(wald_test(b, se.natural[off + j]).ok()?);
            }
        }
        Some(out)
    }
}

/// ℓ_joint − (ℓ_markov,1 + ℓ_markov,2).
pub fn dependence_gain(joint: f64, markov_male: f64, markov_female: f64) -> f64 {
    joint - (markov_male + markov_female)
}

/// Wald statistic z = estimate/se and its two-sided normal p-value.
pub fn wald_test(estimate: f64, se: f64) -> Result<(f64, f64)> {
    if !(se > 0.0) || !estimate.is_finite() {
        return Err(Error::domain(format!("Wald test needs se > 0, got se={se}")));
    }
    let z = estimate / se;
    Ok((z, (2.0 * norm_cdf(-z.abs())).min(1.0)))
}

/// Sign convention text used in reports.
pub fn sign_convention(negate_mu: bool) -> String {
    if negate_mu {
        "P(Y <= y | x) = F(alpha_y - x'beta)".into()
    } else {
        "P(Y <= y | x) = F(alpha_y + x'beta)".into()
    }
}

// ---------------------------------------------------------------------------
// parameter packing

/// Position of each parameter block in the unconstrained vector:
/// [male margin, male serial, female margin, female serial, coupling], where
/// a margin block is [α₁, log(α₂−α₁), …, β₁, …, β_p].
#[derive(Clone, Copy, Debug)]
struct Layout {
    k: [usize; 2],
    p: usize,
}

impl Layout {
    fn of(jm: &JointModelParams) -> Self {
        Layout { k: jm.ks(), p: jm.male.margin.beta.len() }
    }

    fn margin_len(&self, g: Gender) -> usize {
        self.k[g.index()] - 1 + self.p
    }

    fn block_len(&self, g: Gender) -> usize {
        self.margin_len(g) + 1
    }

    fn offset(&self, g: Gender) -> usize {
        match g {
            Gender::Male => 0,
            Gender::Female => self.block_len(Gender::Male),
        }
    }

    fn coupling(&self) -> usize {
        self.block_len(Gender::Male) + self.block_len(Gender::Female)
    }

    fn len(&self) -> usize {
        self.coupling() + 1
    }

    fn block(&self, g: Gender) -> std::ops::Range<usize> {
        self.offset(g)..self.offset(g) + self.block_len(g)
    }
}

fn margin_to_x(m: &MarginalParams) -> Vec<f64> {
    let mut x = Vec::with_capacity(m.cutpoints.len() + m.beta.len());
    x.push(m.cutpoints[0]);
    x.extend(m.cutpoints.windows(2).map(|w| (w[1] - w[0]).ln()));
    x.extend_from_slice(&m.beta);
    x
}

fn margin_from_x(x: &[f64], k: usize, link: LinkFunction, negate_mu: bool) -> MarginalParams {
    let mut cutpoints = Vec::with_capacity(k - 1);
    let mut a = x[0];
    cutpoints.push(a);
    for d in &x[1..k - 1] {
        a += d.exp();
        cutpoints.push(a);
    }
    MarginalParams { link, cutpoints, beta: x[k - 1..].to_vec(), negate_mu }
}

fn serial_to_x(m: &SerialModel) -> Vec<f64> {
    let mut x = margin_to_x(&m.margin);
    x.push(m.copula.to_unconstrained());
    x
}

fn serial_from_x(x: &[f64], k: usize, tpl: CopulaTemplate, link: LinkFunction, negate: bool) -> SerialModel {
    let n = x.len();
    SerialModel {
        margin: margin_from_x(&x[..n - 1], k, link, negate),
        copula: from_unconstrained(tpl.family, tpl.nu, x[n - 1]),
    }
}

fn pack(jm: &JointModelParams) -> Vec<f64> {
    let mut x = serial_to_x(&jm.male);
    x.extend(serial_to_x(&jm.female));
    x.push(jm.coupling.to_unconstrained());
    x
}

fn unpack(x: &[f64], layout: &Layout, fam: &ModelFamilies, link: LinkFunction, negate: bool) -> JointModelParams {
    let s = |g: Gender| serial_from_x(&x[layout.block(g)], layout.k[g.index()], fam.serial(g), link, negate);
    JointModelParams {
        male: s(Gender::Male),
        female: s(Gender::Female),
        coupling: from_unconstrained(fam.coupling.family, fam.coupling.nu, x[layout.coupling()]),
    }
}

/// Natural-scale parameter vector: per gender [α₁…α_{K−1}, β₁…β_p, θ_serial],
/// then θ_coupling.
pub fn natural_parameters(jm: &JointModelParams) -> Vec<f64> {
    let mut v = Vec::new();
    for g in Gender::BOTH {
        let m = jm.serial(g);
        v.extend_from_slice(&m.margin.cutpoints);
        v.extend_from_slice(&m.margin.beta);
        v.push(m.copula.theta);
    }
    v.push(jm.coupling.theta);
    v
}

/// Names matching [`natural_parameters`].
pub fn natural_parameter_names(jm: &JointModelParams) -> Vec<String> {
    let mut v = Vec::new();
    for g in Gender::BOTH {
        let m = &jm.serial(g).margin;
        let s = g.short();
        v.extend((1..=m.cutpoints.len()).map(|k| format!("alpha_{s}_{k}")));
        v.extend((1..=m.beta.len()).map(|j| format!("beta_{s}_{j}")));
        v.push(format!("theta_{s}"));
    }
    v.push("theta_coupling".into());
    v
}

// ---------------------------------------------------------------------------
// starting values

fn initial_margin(panel: &OrdinalPanel, g: Gender, opts: &FitOptions) -> MarginalParams {
    let counts = panel.category_counts(g);
    let n: usize = counts.iter().sum();
    let k = counts.len();
    let mut cum = 0usize;
    let mut cutpoints: Vec<f64> = Vec::with_capacity(k - 1);
    for &c in &counts[..k - 1] {
        cum += c;
        let p = (cum as f64 / n as f64).clamp(1e-3, 1.0 - 1e-3);
        let mut a = opts.link.quantile(p);
        if let Some(&prev) = cutpoints.last() {
            a = a.max(prev + 0.05);
        }
        cutpoints.push(a);
    }
    // with μ = ±xᵀβ and β = 0 the covariates do not enter
    MarginalParams {
        link: opts.link,
        cutpoints,
        beta: vec![0.0; panel.n_covariates()],
        negate_mu: opts.negate_mu,
    }
}

fn initial_copula(tpl: CopulaTemplate, tau: f64) -> CopulaSpec {
    use crate::copula::CopulaFamily::*;
    let tau = match tpl.family {
        Gumbel | SurvivalGumbel => tau.clamp(0.01, 0.9),
        Frank if tau.abs() < 0.01 => 0.01f64.copysign(tau),
        _ => tau.clamp(-0.9, 0.9),
    };
    tpl.at_tau(tau).expect("clamped tau is attainable")
}

/// Unconstrained coordinate of the template's member closest to independence.
fn independence_x(tpl: CopulaTemplate) -> f64 {
    use crate::copula::CopulaFamily::*;
    match tpl.family {
        Gumbel | SurvivalGumbel => (1e-6f64).ln(),
        _ => 0.0,
    }
}

fn sample_tau(panel: &OrdinalPanel, pairing: Pairing) -> f64 {
    empirical_tau(panel, pairing).unwrap_or(0.0)
}

// ---------------------------------------------------------------------------
// stages

fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::Optimizer { reason, last_iterate, .. } => Error::Optimizer {
            stage: stage.to_string(),
            reason,
            last_iterate,
        },
        other => other,
    }
}

fn run_stage<F: FnMut(&[f64]) -> f64>(
    label: &str,
    gender: Option<Gender>,
    f: &mut F,
    x0: &[f64],
    settings: &OptimizerSettings,
) -> Result<(Minimum, StageRecord)> {
    let start = f(x0);
    let m = minimize(f, x0, settings).map_err(|e| stage_error(label, e))?;
    let rec = StageRecord::new(label, gender, start, &m);
    Ok((m, rec))
}

fn neg(v: Result<f64>) -> f64 {
    match v {
        Ok(l) => -l,
        Err(_) => f64::NAN,
    }
}

/// Stages 1a, 1b and 1c for one gender.
pub fn fit_serial(
    panel: &OrdinalPanel,
    g: Gender,
    template: CopulaTemplate,
    opts: &FitOptions,
) -> Result<SerialFit> {
    let k = panel.k(g);
    let label = |s: &str| format!("{s}-{g}");
    let mut stages = Vec::new();

    // 1a
    let m0 = initial_margin(panel, g, opts);
    let mut obj_1a = |x: &[f64]| neg(loglik_indep(panel, g, &margin_from_x(x, k, opts.link, opts.negate_mu)));
    let (min_1a, rec) = run_stage(&label("1a"), Some(g), &mut obj_1a, &margin_to_x(&m0), &opts.optimizer)?;
    stages.push(rec);
    let margin_1a = margin_from_x(&min_1a.x, k, opts.link, opts.negate_mu);

    // 1b: serial parameter only; start from the better of the τ-based guess
    // and (near) independence
    let serial_at = |x: f64| SerialModel {
        margin: margin_1a.clone(),
        copula: from_unconstrained(template.family, template.nu, x),
    };
    let mut obj_1b = |x: &[f64]| neg(loglik_markov(panel, g, &serial_at(x[0])));
    let x_tau = initial_copula(template, sample_tau(panel, Pairing::Lag1(g))).to_unconstrained();
    let x_ind = independence_x(template);
    let start_1b = if obj_1b(&[x_ind]) < obj_1b(&[x_tau]) { x_ind } else { x_tau };
    let (min_1b, rec) = run_stage(&label("1b"), Some(g), &mut obj_1b, &[start_1b], &opts.optimizer)?;
    stages.push(rec);
    let stage_1b = serial_at(min_1b.x[0]);

    // 1c
    let mut obj_1c = |x: &[f64]| neg(loglik_markov(panel, g, &serial_from_x(x, k, template, opts.link, opts.negate_mu)));
    let (min_1c, rec) = run_stage(&label("1c"), Some(g), &mut obj_1c, &serial_to_x(&stage_1b), &opts.optimizer)?;
    stages.push(rec);
    let model = serial_from_x(&min_1c.x, k, template, opts.link, opts.negate_mu);

    Ok(SerialFit {
        gender: g,
        template,
        independent_margin: margin_1a,
        stage_1b,
        model,
        loglik_indep: -min_1a.f,
        loglik_1b: -min_1b.f,
        loglik_markov: -min_1c.f,
        stages,
    })
}

/// Joint negative log-likelihood over the unconstrained vector, caching the
/// per-wave series terms of the two most recent parameter values of each
/// gender's block. Finite-difference stencils mostly move a single block, so
/// the other block's terms are reused.
struct JointObjective<'a> {
    panel: &'a OrdinalPanel,
    offsets: Vec<usize>,
    layout: Layout,
    families: ModelFamilies,
    opts: FitOptions,
    cache: [Vec<(Vec<f64>, Vec<[f64; 3]>)>; 2],
}

impl<'a> JointObjective<'a> {
    fn new(panel: &'a OrdinalPanel, layout: Layout, families: ModelFamilies, opts: FitOptions) -> Self {
        JointObjective { panel, offsets: wave_offsets(panel), layout, families, opts, cache: [vec![], vec![]] }
    }

    fn terms(&mut self, g: Gender, xb: &[f64]) -> usize {
        let slot = &mut self.cache[g.index()];
        if let Some(pos) = slot.iter().position(|(k, _)| k.as_slice() == xb) {
            return pos;
        }
        let model = serial_from_x(xb, self.layout.k[g.index()], self.families.serial(g), self.opts.link, self.opts.negate_mu);
        let terms = series_terms(self.panel, g, &model);
        if slot.len() == 2 {
            slot.remove(0);
        }
        slot.push((xb.to_vec(), terms));
        slot.len() - 1
    }

    fn loglik(&mut self, x: &[f64]) -> Result<crate::sum::Likelihood> {
        let im = self.terms(Gender::Male, &x[self.layout.block(Gender::Male)]);
        let ifm = self.terms(Gender::Female, &x[self.layout.block(Gender::Female)]);
        let coupling = from_unconstrained(self.families.coupling.family, self.families.coupling.nu, x[self.layout.coupling()]);
        combine_series(
            self.panel,
            &self.offsets,
            [&self.cache[0][im].1, &self.cache[1][ifm].1],
            &coupling,
        )
    }

    fn neg_loglik(&mut self, x: &[f64]) -> f64 {
        match self.loglik(x) {
            Ok(l) => -l.total,
            Err(_) => f64::NAN,
        }
    }
}

/// Stages 4 and 5 given per-gender serial fits.
pub fn fit_joint(
    panel: &OrdinalPanel,
    serial: [&SerialFit; 2],
    coupling: CopulaTemplate,
    opts: &FitOptions,
) -> Result<FitReport> {
    let families = ModelFamilies::new(serial[0].template, serial[1].template, coupling);
    let jm = JointModelParams::new(serial[0].model.clone(), serial[1].model.clone(), initial_copula(coupling, 0.0));
    jm.check_panel(panel)?;
    let layout = Layout::of(&jm);
    let mut objective = JointObjective::new(panel, layout, families, *opts);
    let mut stages: Vec<StageRecord> = serial.iter().flat_map(|s| s.stages.clone()).collect();

    // 4: coupling parameter only
    let mut x = pack(&jm);
    let ci = layout.coupling();
    let x_tau = initial_copula(coupling, sample_tau(panel, Pairing::WithinCouple)).to_unconstrained();
    let x_ind = independence_x(coupling);
    let at = |v: f64, obj: &mut JointObjective| {
        let mut xx = x.clone();
        xx[ci] = v;
        obj.neg_loglik(&xx)
    };
    let start_4 = if at(x_ind, &mut objective) < at(x_tau, &mut objective) { x_ind } else { x_tau };
    let (min_4, rec) = {
        let base = x.clone();
        let mut f4 = |v: &[f64]| {
            let mut xx = base.clone();
            xx[ci] = v[0];
            objective.neg_loglik(&xx)
        };
        run_stage("4", None, &mut f4, &[start_4], &opts.optimizer)?
    };
    stages.push(rec);
    x[ci] = min_4.x[0];
    let joint_stage4 = -min_4.f;

    // 5: everything
    let (min_5, rec) = {
        let mut f5 = |v: &[f64]| objective.neg_loglik(v);
        run_stage("5", None, &mut f5, &x, &opts.optimizer)?
    };
    stages.push(rec);
    let x5 = min_5.x.clone();
    let params = unpack(&x5, &layout, &families, opts.link, opts.negate_mu);
    let final_lik = objective.loglik(&x5)?;

    let standard_errors = if opts.standard_errors {
        Some(se_from_objective(&mut objective, &x5, &params)?)
    } else {
        None
    };

    let markov = [serial[0].loglik_markov, serial[1].loglik_markov];
    let tau = TauSet {
        serial: [params.male.copula.kendall_tau(), params.female.copula.kendall_tau()],
        coupling: params.coupling.kendall_tau(),
    };
    let converged = stages.iter().all(|s| s.converged);
    Ok(FitReport {
        families,
        link: opts.link,
        negate_mu: opts.negate_mu,
        sign_convention: sign_convention(opts.negate_mu),
        n_couples: panel.n_couples(),
        n_observations: panel.n_observations(),
        waves_per_couple: panel.wave_count_distribution(),
        loglik: StageLogliks {
            indep: [serial[0].loglik_indep, serial[1].loglik_indep],
            markov_1b: [serial[0].loglik_1b, serial[1].loglik_1b],
            markov,
            joint_stage4,
            joint: -min_5.f,
        },
        dependence_gain: dependence_gain(-min_5.f, markov[0], markov[1]),
        tau,
        standard_errors,
        stages,
        floored_terms: final_lik.floored,
        converged,
        params,
    })
}

/// Runs all five stages for the given copula families.
pub fn fit_stagewise(panel: &OrdinalPanel, families: &ModelFamilies, opts: &FitOptions) -> Result<FitReport> {
    opts.optimizer.validate()?;
    let male = fit_serial(panel, Gender::Male, families.serial_male, opts)?;
    let female = fit_serial(panel, Gender::Female, families.serial_female, opts)?;
    fit_joint(panel, [&male, &female], families.coupling, opts)
}

// ---------------------------------------------------------------------------
// standard errors

/// Standard errors of the joint estimates from the numerical observed
/// information, mapped to the natural scale by the delta method.
pub fn standard_errors(panel: &OrdinalPanel, jm: &JointModelParams, link: LinkFunction) -> Result<SeOutcome> {
    jm.check_panel(panel)?;
    let families = ModelFamilies::new(jm.male.copula.template(), jm.female.copula.template(), jm.coupling.template());
    let opts = FitOptions { link, negate_mu: jm.male.margin.negate_mu, ..FitOptions::default() };
    let layout = Layout::of(jm);
    let mut objective = JointObjective::new(panel, layout, families, opts);
    se_from_objective(&mut objective, &pack(jm), jm)
}

fn se_from_objective(objective: &mut JointObjective, x: &[f64], jm: &JointModelParams) -> Result<SeOutcome> {
    let layout = objective.layout;
    let mut f = |v: &[f64]| objective.neg_loglik(v);
    let h = num_hessian(&mut f, x)?;
    let n = x.len();
    let info = DMatrix::from_fn(n, n, |i, j| h[i][j]);
    let Some(chol) = info.clone().cholesky() else {
        let eig = SymmetricEigen::new(info);
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        return Ok(SeOutcome::NotPositiveDefinite { eigenvalues: ev });
    };
    let cov_u = chol.inverse();
    let jac = natural_jacobian(x, &layout, jm);
    let cov = &jac * &cov_u * jac.transpose();
    let natural: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();

    // τ depends on a single unconstrained coordinate per copula
    let tau_se = |idx: usize, spec: &CopulaSpec| {
        let xi = x[idx];
        let h = 1e-5 * xi.abs().max(1.0);
        let t = |v: f64| from_unconstrained(spec.family, spec.nu, v).kendall_tau();
        let d = (t(xi + h) - t(xi - h)) / (2.0 * h);
        d.abs() * cov_u[(idx, idx)].max(0.0).sqrt()
    };
    let serial_idx = |g: Gender| layout.offset(g) + layout.margin_len(g);
    let tau = TauSet {
        serial: [
            tau_se(serial_idx(Gender::Male), &jm.male.copula),
            tau_se(serial_idx(Gender::Female), &jm.female.copula),
        ],
        coupling: tau_se(layout.coupling(), &jm.coupling),
    };
    let covariance = (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect();
    Ok(SeOutcome::Available(StandardErrors { natural, tau, covariance }))
}

/// ∂(natural parameters)/∂(unconstrained coordinates).
fn natural_jacobian(x: &[f64], layout: &Layout, jm: &JointModelParams) -> DMatrix<f64> {
    let n = layout.len();
    let mut jac = DMatrix::zeros(n, n);
    for g in Gender::BOTH {
        let off = layout.offset(g);
        let k = layout.k[g.index()];
        // α_k = x₀ + Σ_{j<k} exp(x_j)
        for a in 0..k - 1 {
            jac[(off + a, off)] = 1.0;
            for j in 1..=a {
                jac[(off + a, off + j)] = x[off + j].exp();
            }
        }
        for b in 0..layout.p {
            jac[(off + k - 1 + b, off + k - 1 + b)] = 1.0;
        }
        let si = off + layout.margin_len(g);
        jac[(si, si)] = dtheta_dx(&jm.serial(g).copula, x[si]);
    }
    let ci = layout.coupling();
    jac[(ci, ci)] = dtheta_dx(&jm.coupling, x[ci]);
    jac
}

fn dtheta_dx(spec: &CopulaSpec, x: f64) -> f64 {
    use crate::copula::CopulaFamily::*;
    match spec.family {
        Bvn | StudentT => 1.0 - x.tanh().powi(2),
        Gumbel | SurvivalGumbel => x.exp(),
        Frank => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::loglik_joint;

    #[test]
    fn wald_examples() {
        assert_eq!(wald_test(0.0, 1.0).unwrap(), (0.0, 1.0));
        let (_, p) = wald_test(1.96, 1.0).unwrap();
        assert!((p - 0.05).abs() < 1e-4);
        let (z, p) = wald_test(-2.5, 0.5).unwrap();
        assert_eq!(z, -5.0);
        assert!(p < 1e-6);
        assert!(wald_test(1.0, 0.0).is_err());
    }

    #[test]
    fn dependence_gain_arithmetic() {
        let g = dependence_gain(-59942.2, -30445.4, -30225.1);
        assert!((g - 728.3).abs() < 1e-9);
        assert_eq!(format!("{g:.1}"), "728.3");
    }

    #[test]
    fn pack_round_trip_and_jacobian() {
        let m = MarginalParams::new(LinkFunction::Probit, vec![-1.0, 0.2, 0.9], vec![0.3, -0.2]).unwrap();
        let f = MarginalParams::new(LinkFunction::Probit, vec![-0.4, 0.5], vec![0.1, 0.0]).unwrap();
        let jm = JointModelParams::new(
            SerialModel::new(m, CopulaSpec::gumbel(1.5).unwrap()),
            SerialModel::new(f, CopulaSpec::student_t(0.3, 5.0).unwrap()),
            CopulaSpec::frank(2.0).unwrap(),
        );
        let layout = Layout::of(&jm);
        let fam = ModelFamilies::new(jm.male.copula.template(), jm.female.copula.template(), jm.coupling.template());
        let x = pack(&jm);
        assert_eq!(x.len(), layout.len());
        let back = unpack(&x, &layout, &fam, LinkFunction::Probit, false);
        let (a, b) = (natural_parameters(&jm), natural_parameters(&back));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        assert_eq!(natural_parameter_names(&jm).len(), a.len());
        // analytic Jacobian against central differences
        let jac = natural_jacobian(&x, &layout, &jm);
        for j in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let np = natural_parameters(&unpack(&xp, &layout, &fam, LinkFunction::Probit, false));
            let nm = natural_parameters(&unpack(&xm, &layout, &fam, LinkFunction::Probit, false));
            for i in 0..x.len() {
                assert!((jac[(i, j)] - (np[i] - nm[i]) / (2.0 * h)).abs() < 1e-6, "{i},{j}");
            }
        }
    }

    #[test]
    fn cached_objective_matches_direct() {
        use crate::simulate::{simulate_panel, SimDesign};
        let m = MarginalParams::new(LinkFunction::Probit, vec![-0.5, 0.5], vec![]).unwrap();
        let jm = JointModelParams::new(
            SerialModel::new(m.clone(), CopulaSpec::gumbel(1.4).unwrap()),
            SerialModel::new(m, CopulaSpec::bvn(0.3).unwrap()),
            CopulaSpec::bvn(0.2).unwrap(),
        );
        let panel = simulate_panel(&jm, &SimDesign::new(40, 4, 11)).unwrap();
        let fam = ModelFamilies::new(jm.male.copula.template(), jm.female.copula.template(), jm.coupling.template());
        let layout = Layout::of(&jm);
        let mut obj = JointObjective::new(&panel, layout, fam, FitOptions::default());
        let x = pack(&jm);
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += 0.01;
            let direct = loglik_joint(&panel, &unpack(&xp, &layout, &fam, LinkFunction::Probit, false)).unwrap();
            assert_eq!(-obj.neg_loglik(&xp), direct);
            assert_eq!(-obj.neg_loglik(&x), loglik_joint(&panel, &jm).unwrap());
        }
    }
}
