//! Parametric bivariate copulas: BVN, Frank, Gumbel, survival Gumbel and
//! Student t, together with rectangle probabilities, Kendall's τ conversions
//! and the unconstrained parameterization used by the optimizer.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{self, bvn_cdf_raw, bvt_cdf_raw, norm_cdf, phi_inv, t_quantile_raw};

/// Interior probabilities are clamped to `[U_FLOOR, 1 - U_FLOOR]` before
/// any quantile transform.
pub const U_FLOOR: f64 = 1e-10;

/// Frank parameters below this magnitude use a first-order expansion about independence.
pub const FRANK_SMALL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Bvn,
    Frank,
    Gumbel,
    #[serde(rename = "sgumbel")]
    SurvivalGumbel,
    #[serde(rename = "t")]
    StudentT,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 5] = [
        CopulaFamily::Bvn,
        CopulaFamily::Frank,
        CopulaFamily::Gumbel,
        CopulaFamily::SurvivalGumbel,
        CopulaFamily::StudentT,
    ];

    pub fn is_elliptical(self) -> bool {
        matches!(self, CopulaFamily::Bvn | CopulaFamily::StudentT)
    }

    /// Parameter value at which the family reduces to the product copula.
    /// Frank's independence point lies outside its parameter set and is
    /// only reached as a limit.
    pub fn independence_theta(self) -> f64 {
        match self {
            CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => 1.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CopulaFamily::Bvn => "BVN",
            CopulaFamily::Frank => "Frank",
            CopulaFamily::Gumbel => "Gumbel",
            CopulaFamily::SurvivalGumbel => "s.Gumbel",
            CopulaFamily::StudentT => "t",
        };
        f.write_str(s)
    }
}

/// A copula family with its degrees of freedom fixed (for t), but no
/// dependence parameter yet. Parsed from strings like `bvn`, `sgumbel`, `t5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaTemplate {
    pub family: CopulaFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl CopulaTemplate {
    pub fn new(family: CopulaFamily, nu: Option<f64>) -> Result<Self> {
        match (family, nu) {
            (CopulaFamily::StudentT, Some(n)) if n > 0.0 && n.is_finite() => {}
            (CopulaFamily::StudentT, _) => {
                return Err(Error::domain("t copula needs positive degrees of freedom"))
            }
            (_, Some(_)) => {
                return Err(Error::domain(format!(
                    "degrees of freedom only apply to the t copula, not {family}"
                )))
            }
            _ => {}
        }
        Ok(CopulaTemplate { family, nu })
    }

    pub fn bvn() -> Self {
        CopulaTemplate { family: CopulaFamily::Bvn, nu: None }
    }

    pub fn frank() -> Self {
        CopulaTemplate { family: CopulaFamily::Frank, nu: None }
    }

    pub fn gumbel() -> Self {
        CopulaTemplate { family: CopulaFamily::Gumbel, nu: None }
    }

    pub fn survival_gumbel() -> Self {
        CopulaTemplate { family: CopulaFamily::SurvivalGumbel, nu: None }
    }

    pub fn student_t(nu: f64) -> Self {
        CopulaTemplate { family: CopulaFamily::StudentT, nu: Some(nu) }
    }

    pub fn with_theta(self, theta: f64) -> Result<CopulaSpec> {
        CopulaSpec::new(self.family, theta, self.nu)
    }

    /// The template's member at Kendall's τ.
    pub fn at_tau(self, tau: f64) -> Result<CopulaSpec> {
        tau_inverse(self.family, tau, self.nu)
    }

    pub fn from_unconstrained(self, x: f64) -> CopulaSpec {
        from_unconstrained(self.family, self.nu, x)
    }

    /// Default candidate list: BVN, Frank, Gumbel, s.Gumbel, then t₁…t₁₀.
    pub fn default_candidates() -> Vec<CopulaTemplate> {
        let mut v = vec![Self::bvn(), Self::frank(), Self::gumbel(), Self::survival_gumbel()];
        v.extend((1..=10).map(|n| Self::student_t(n as f64)));
        v
    }

    /// Parses a comma-separated list; a bare `t` expands to t₁…t₁₀.
    pub fn parse_list(s: &str) -> Result<Vec<CopulaTemplate>> {
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if item.eq_ignore_ascii_case("t") {
                out.extend((1..=10).map(|n| Self::student_t(n as f64)));
            } else {
                out.push(item.parse()?);
            }
        }
        if out.is_empty() {
            return Err(Error::Input("empty copula candidate list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for CopulaTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.family, self.nu) {
            (CopulaFamily::StudentT, Some(nu)) => write!(f, "t{nu}"),
            (fam, _) => write!(f, "{fam}"),
        }
    }
}

impl FromStr for CopulaTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let family = match lower.as_str() {
            "bvn" | "normal" | "gaussian" => CopulaFamily::Bvn,
            "frank" => CopulaFamily::Frank,
            "gumbel" => CopulaFamily::Gumbel,
            "sgumbel" | "s.gumbel" | "survival-gumbel" | "survival_gumbel" => {
                CopulaFamily::SurvivalGumbel
            }
            other => {
                if let Some(rest) = other.strip_prefix('t') {
                    let rest = rest.trim_start_matches(['_', '-']);
                    let nu: f64 = rest.parse().map_err(|_| {
                        Error::Input(format!("cannot parse t degrees of freedom in `{s}`"))
                    })?;
                    return CopulaTemplate::new(CopulaFamily::StudentT, Some(nu));
                }
                return Err(Error::Input(format!("unknown copula family `{s}`")));
            }
        };
        Ok(CopulaTemplate { family, nu: None })
    }
}

/// A fully specified copula: family, dependence parameter θ and, for the t
/// copula, degrees of freedom ν.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: CopulaFamily,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, theta: f64, nu: Option<f64>) -> Result<Self> {
        CopulaTemplate::new(family, nu)?;
        let ok = theta.is_finite()
            && match family {
                CopulaFamily::Bvn | CopulaFamily::StudentT => theta.abs() < 1.0,
                CopulaFamily::Frank => theta != 0.0,
                CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => theta >= 1.0,
            };
        if !ok {
            return Err(Error::domain(format!(
                "parameter {theta} outside the {family} parameter space"
            )));
        }
        Ok(CopulaSpec { family, theta, nu })
    }

    pub fn bvn(rho: f64) -> Result<Self> {
        Self::new(CopulaFamily::Bvn, rho, None)
    }

    pub fn frank(theta: f64) -> Result<Self> {
        Self::new(CopulaFamily::Frank, theta, None)
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        Self::new(CopulaFamily::Gumbel, theta, None)
    }

    pub fn survival_gumbel(theta: f64) -> Result<Self> {
        Self::new(CopulaFamily::SurvivalGumbel, theta, None)
    }

    pub fn student_t(rho: f64, nu: f64) -> Result<Self> {
        Self::new(CopulaFamily::StudentT, rho, Some(nu))
    }

    /// The product copula, represented as BVN with ρ = 0.
    pub fn independence() -> Self {
        CopulaSpec { family: CopulaFamily::Bvn, theta: 0.0, nu: None }
    }

    /// The copula of (1 − U₁, 1 − U₂). Only the Gumbel pair is not radially
    /// symmetric.
    pub fn survival(&self) -> CopulaSpec {
        let family = match self.family {
            CopulaFamily::Gumbel => CopulaFamily::SurvivalGumbel,
            CopulaFamily::SurvivalGumbel => CopulaFamily::Gumbel,
            f => f,
        };
        CopulaSpec { family, ..*self }
    }

    pub fn template(&self) -> CopulaTemplate {
        CopulaTemplate { family: self.family, nu: self.nu }
    }

    fn dof(&self) -> f64 {
        self.nu.unwrap_or(f64::INFINITY)
    }

    /// C(u1, u2).
    pub fn cdf(&self, u1: f64, u2: f64) -> Result<f64> {
        check_unit(u1)?;
        check_unit(u2)?;
        Ok(self.cdf_raw(u1, u2))
    }

    pub(crate) fn cdf_raw(&self, u1: f64, u2: f64) -> f64 {
        let s1 = self.score(u1);
        let s2 = self.score(u2);
        self.corner(u1, u2, s1, s2)
    }

    /// Quantile transform applied to a margin before evaluating an elliptical
    /// copula; other families use the identity.
    #[inline]
    fn score(&self, u: f64) -> f64 {
        match self.family {
            CopulaFamily::Bvn => elliptical_score(u, phi_inv),
            CopulaFamily::StudentT => {
                let nu = self.dof();
                elliptical_score(u, |p| t_quantile_raw(p, nu))
            }
            _ => u,
        }
    }

    /// Copula cdf at (u1, u2) given precomputed scores.
    #[inline]
    fn corner(&self, u1: f64, u2: f64, s1: f64, s2: f64) -> f64 {
        if u1 <= 0.0 || u2 <= 0.0 {
            return 0.0;
        }
        if u1 >= 1.0 {
            return u2.min(1.0);
        }
        if u2 >= 1.0 {
            return u1;
        }
        // all families are exchangeable; ordering the arguments makes the
        // evaluation exactly symmetric
        let (u1, u2, s1, s2) = if u1 <= u2 { (u1, u2, s1, s2) } else { (u2, u1, s2, s1) };
        let v = match self.family {
            CopulaFamily::Bvn => bvn_cdf_raw(s1, s2, self.theta),
            CopulaFamily::StudentT => bvt_cdf_raw(s1, s2, self.theta, self.dof()),
            CopulaFamily::Frank => frank_cdf(clamp_u(u1), clamp_u(u2), self.theta),
            CopulaFamily::Gumbel => gumbel_cdf(u1, u2, self.theta),
            CopulaFamily::SurvivalGumbel => survival_gumbel_cdf(u1, u2, self.theta),
        };
        v.clamp((u1 + u2 - 1.0).max(0.0), u1)
    }

    /// Unclamped four-term difference C(b1,b2) − C(a1,b2) − C(b1,a2) + C(a1,a2).
    pub fn rect_signed(&self, a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
        let [c00, c01, c10, c11] = self.rect_corners(a1, b1, a2, b2);
        c11 - c01 - c10 + c00
    }

    /// Corner values [C(a1,a2), C(a1,b2), C(b1,a2), C(b1,b2)], sharing the
    /// margin transforms between corners.
    #[inline]
    pub(crate) fn rect_corners(&self, a1: f64, b1: f64, a2: f64, b2: f64) -> [f64; 4] {
        let (sa1, sb1) = (self.score(a1), self.score(b1));
        let (sa2, sb2) = (self.score(a2), self.score(b2));
        [
            self.corner(a1, a2, sa1, sa2),
            self.corner(a1, b2, sa1, sb2),
            self.corner(b1, a2, sb1, sa2),
            self.corner(b1, b2, sb1, sb2),
        ]
    }

    /// Probability of the rectangle [a1,b1]×[a2,b2], clamped at zero.
    pub fn rect_prob(&self, a1: f64, b1: f64, a2: f64, b2: f64) -> Result<f64> {
        for v in [a1, b1, a2, b2] {
            check_unit(v)?;
        }
        if a1 > b1 || a2 > b2 {
            return Err(Error::domain(format!(
                "rectangle bounds out of order: [{a1},{b1}]x[{a2},{b2}]"
            )));
        }
        Ok(self.rect_raw(a1, b1, a2, b2))
    }

    #[inline]
    pub(crate) fn rect_raw(&self, a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
        self.rect_signed(a1, b1, a2, b2).max(0.0)
    }

    /// Kendall's τ of the copula.
    pub fn kendall_tau(&self) -> f64 {
        kendall_tau(self)
    }

    pub fn to_unconstrained(&self) -> f64 {
        to_unconstrained(self)
    }
}

impl fmt::Display for CopulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(θ={})", self.template(), self.theta)
    }
}

fn check_unit(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::domain(format!("probability argument {u} outside [0,1]")))
    }
}

#[inline]
fn clamp_u(u: f64) -> f64 {
    u.clamp(U_FLOOR, 1.0 - U_FLOOR)
}

#[inline]
fn elliptical_score(u: f64, quantile: impl Fn(f64) -> f64) -> f64 {
    if u <= 0.0 {
        f64::NEG_INFINITY
    } else if u >= 1.0 {
        f64::INFINITY
    } else {
        quantile(clamp_u(u))
    }
}

/// Frank copula cdf; negative θ uses C₋θ(u,v) = u − C_θ(u, 1−v) to keep the
/// exponentials bounded.
fn frank_cdf(u1: f64, u2: f64, theta: f64) -> f64 {
    if theta.abs() < FRANK_SMALL {
        return u1 * u2 * (1.0 + 0.5 * theta * (1.0 - u1) * (1.0 - u2));
    }
    if theta < 0.0 {
        return u1 - frank_cdf(u1, 1.0 - u2, -theta);
    }
    let num = (-theta * u1).exp_m1() * (-theta * u2).exp_m1();
    let den = (-theta).exp_m1();
    let x = num / den;
    if x > -0.5 {
        return -x.ln_1p() / theta;
    }
    // 1 + x = (a(1−b) + (b−c)) / (1−c) with a = e^{−θu₁}, b = e^{−θu₂},
    // c = e^{−θ}; both terms are non-negative, so summing logs avoids the
    // cancellation in 1 + x for large θ.
    let t1 = -theta * u1 + (-(-theta * u2).exp_m1()).ln();
    let t2 = -theta * u2 + (-(-theta * (1.0 - u2)).exp_m1()).ln();
    let hi = t1.max(t2);
    let log_sum = if hi == f64::NEG_INFINITY { hi } else { hi + (-(t1 - t2).abs()).exp().ln_1p() };
    -(log_sum - (-(-theta).exp_m1()).ln()) / theta
}

/// Gumbel copula cdf with both margins already strictly inside (0,1].
fn gumbel_cdf(u1: f64, u2: f64, theta: f64) -> f64 {
    if u1 <= 0.0 || u2 <= 0.0 {
        return 0.0;
    }
    if u1 >= 1.0 {
        return u2.min(1.0);
    }
    if u2 >= 1.0 {
        return u1;
    }
    let a = -clamp_u(u1).ln();
    let b = -clamp_u(u2).ln();
    if theta == 1.0 {
        return (-(a + b)).exp();
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let s = hi * (1.0 + (lo / hi).powf(theta)).powf(1.0 / theta);
    (-s).exp()
}

/// Survival Gumbel cdf for 0 < u1 ≤ u2 < 1. Writing u1 + u2 − 1 + C(1−u1, 1−u2)
/// as u1 + (1−u2)·expm1(−D), where D is the excess of the Gumbel exponent over
/// −ln(1−u2), keeps relative precision near the origin.
fn survival_gumbel_cdf(u1: f64, u2: f64, theta: f64) -> f64 {
    let a = -(-u1).ln_1p();
    let b = -(-u2).ln_1p();
    let d = if theta == 1.0 { a } else { b * ((a / b).powf(theta).ln_1p() / theta).exp_m1() };
    u1 + (1.0 - u2) * (-d).exp_m1()
}

/// The 180°-rotated copula C₁₈₀(u₁,u₂) = u₁ + u₂ − 1 + C(1−u₁, 1−u₂).
pub fn survival_cdf<F: Fn(f64, f64) -> f64>(base: F, u1: f64, u2: f64) -> f64 {
    (u1 + u2 - 1.0 + base(1.0 - u1, 1.0 - u2)).max(0.0)
}

/// C(u1, u2) for `spec`.
pub fn copula_cdf(spec: &CopulaSpec, u1: f64, u2: f64) -> Result<f64> {
    spec.cdf(u1, u2)
}

pub fn rect_prob(spec: &CopulaSpec, a1: f64, b1: f64, a2: f64, b2: f64) -> Result<f64> {
    spec.rect_prob(a1, b1, a2, b2)
}

pub fn kendall_tau(spec: &CopulaSpec) -> f64 {
    let th = spec.theta;
    match spec.family {
        CopulaFamily::Bvn | CopulaFamily::StudentT => FRAC_2_PI * th.clamp(-1.0, 1.0).asin(),
        CopulaFamily::Frank => frank_tau(th),
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => 1.0 - 1.0 / th,
    }
}

fn frank_tau(theta: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    if theta.abs() < 1e-4 {
        // 4/θ (D1 − 1) = −1 + θ/9 − θ³/900 + …
        return theta / 9.0 - theta.powi(3) / 900.0;
    }
    1.0 + 4.0 / theta * (special::debye1_raw(theta) - 1.0)
}

/// The member of `family` with Kendall's τ equal to `tau`.
pub fn tau_inverse(family: CopulaFamily, tau: f64, nu: Option<f64>) -> Result<CopulaSpec> {
    CopulaTemplate::new(family, nu)?;
    if !(tau > -1.0 && tau < 1.0) {
        return Err(Error::domain(format!("Kendall's tau {tau} outside (-1,1)")));
    }
    match family {
        CopulaFamily::Bvn | CopulaFamily::StudentT => {
            CopulaSpec::new(family, (0.5 * PI * tau).sin(), nu)
        }
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => {
            if tau < 0.0 {
                return Err(Error::domain(format!(
                    "{family} copula cannot attain negative tau {tau}"
                )));
            }
            CopulaSpec::new(family, 1.0 / (1.0 - tau), nu)
        }
        CopulaFamily::Frank => {
            if tau == 0.0 {
                return Err(Error::domain("Frank copula excludes tau = 0 (theta = 0)"));
            }
            let target = tau.abs();
            let mut hi = 1.0;
            while frank_tau(hi) < target {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::domain(format!("Frank tau {tau} too close to 1")));
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if frank_tau(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            let theta = 0.5 * (lo + hi);
            CopulaSpec::new(family, theta.copysign(tau), None)
        }
    }
}

/// Maps the dependence parameter onto the real line: atanh for correlations,
/// log(θ − 1) for Gumbel types, identity for Frank.
pub fn to_unconstrained(spec: &CopulaSpec) -> f64 {
    match spec.family {
        CopulaFamily::Bvn | CopulaFamily::StudentT => {
            spec.theta.clamp(-1.0 + 1e-16, 1.0 - 1e-16).atanh()
        }
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => (spec.theta - 1.0).max(1e-300).ln(),
        CopulaFamily::Frank => spec.theta,
    }
}

pub fn from_unconstrained(family: CopulaFamily, nu: Option<f64>, x: f64) -> CopulaSpec {
    let theta = match family {
        CopulaFamily::Bvn | CopulaFamily::StudentT => x.tanh(),
        CopulaFamily::Gumbel | CopulaFamily::SurvivalGumbel => 1.0 + x.exp(),
        CopulaFamily::Frank => x,
    };
    CopulaSpec { family, theta, nu }
}

/// Copula density with standard normal margins, tabulated on cells of a
/// square grid over [−range, range]².
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityGrid {
    pub spec: CopulaSpec,
    /// Cell edges (grid_size + 1 values).
    pub edges: Vec<f64>,
    /// `density[i][j]` is the average density over cell i (first margin) × j.
    pub density: Vec<Vec<f64>>,
}

pub const DENSITY_RANGE: f64 = 4.0;

impl DensityGrid {
    pub fn cell_area(&self) -> f64 {
        let h = self.edges[1] - self.edges[0];
        h * h
    }

    pub fn total_mass(&self) -> f64 {
        let a = self.cell_area();
        self.density.iter().flatten().map(|d| d * a).sum()
    }

    /// Mass on cells whose centres lie beyond `z` in both coordinates:
    /// above `z` when `upper`, below `−z` otherwise.
    pub fn tail_mass(&self, z: f64, upper: bool) -> f64 {
        let a = self.cell_area();
        let inside = |c: f64| if upper { c > z } else { c < -z };
        let idx: Vec<usize> = (0..self.density.len()).filter(|&i| inside((self.edges[i] + self.edges[i + 1]) / 2.0)).collect();
        idx.iter().flat_map(|&i| idx.iter().map(move |&j| (i, j))).map(|(i, j)| self.density[i][j] * a).sum()
    }

    /// Mass in the quadrant with both coordinates above (`upper = true`) or
    /// below zero.
    pub fn quadrant_mass(&self, upper: bool) -> f64 {
        let n = self.density.len();
        let a = self.cell_area();
        let half = n / 2;
        let range = if upper { half..n } else { 0..half };
        range
            .clone()
            .flat_map(|i| range.clone().map(move |j| (i, j)))
            .map(|(i, j)| self.density[i][j] * a)
            .sum()
    }
}

pub fn density_grid(spec: &CopulaSpec, grid_size: usize) -> Result<DensityGrid> {
    if grid_size < 10 {
        return Err(Error::domain(format!("grid size must be at least 10, got {grid_size}")));
    }
    let h = 2.0 * DENSITY_RANGE / grid_size as f64;
    let edges: Vec<f64> = (0..=grid_size).map(|i| -DENSITY_RANGE + i as f64 * h).collect();
    let probs: Vec<f64> = edges.iter().map(|&z| norm_cdf(z)).collect();
    let area = h * h;
    let density = (0..grid_size)
        .map(|i| {
            (0..grid_size)
                .map(|j| spec.rect_raw(probs[i], probs[i + 1], probs[j], probs[j + 1]) / area)
                .collect()
        })
        .collect();
    Ok(DensityGrid { spec: *spec, edges, density })
}
