//! CSV panels, run configuration files and report output.
//!
//! Panel files have one row per couple-wave with header
//! `couple_id,wave,y_m,y_f,x_m_1..x_m_p,x_f_1..x_f_p`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::copula::{CopulaTemplate, DensityGrid};
use crate::error::{Error, Result};
use crate::estimation::{natural_parameters, FitOptions, FitReport};
use crate::margin::LinkFunction;
use crate::optim::OptimizerSettings;
use crate::panel::{Couple, Gender, OrdinalPanel, Wave};
use crate::selection::{CouplingScan, SerialScan, VuongResult};

// ---------------------------------------------------------------------------
// CSV

/// Declared category counts; `None` infers K from the largest observed
/// category.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoadOptions {
    pub k: [Option<usize>; 2],
}

fn parse_err(path: &Path, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line: line as usize, column: column.to_string(), message: message.into() }
}

fn expected_header(p: usize) -> Vec<String> {
    let mut h: Vec<String> = ["couple_id", "wave", "y_m", "y_f"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=p).map(|j| format!("x_m_{j}")));
    h.extend((1..=p).map(|j| format!("x_f_{j}")));
    h
}

/// Reads and validates a panel CSV file.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<OrdinalPanel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path, opts)
}

/// Parses panel CSV text; `path` is only used in error messages.
pub fn parse_csv(text: &str, path: &Path, opts: &LoadOptions) -> Result<OrdinalPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, "header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 4 || (header.len() - 4) % 2 != 0 {
        return Err(parse_err(path, 1, "header", format!("expected couple_id,wave,y_m,y_f followed by x_m_* and x_f_* columns, got {}", header.join(","))));
    }
    let p = (header.len() - 4) / 2;
    let expect = expected_header(p);
    if let Some((got, want)) = header.iter().zip(&expect).find(|(a, b)| a != b) {
        return Err(parse_err(path, 1, got, format!("expected column `{want}`")));
    }

    struct Row {
        line: u64,
        wave: i64,
        wave_data: Wave,
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<Row>> = HashMap::new();
    let mut max_y = [0usize; 2];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, "", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(path, line, "", format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "couple_id", "empty couple id"));
        }
        let wave: i64 = rec[1].parse().map_err(|_| parse_err(path, line, "wave", format!("invalid wave index `{}`", &rec[1])))?;
        let mut y = [0usize; 2];
        for (gi, col) in [(0, 2), (1, 3)] {
            let field = &rec[col];
            if field.is_empty() {
                return Err(Error::Input(format!(
                    "couple `{id}` wave {wave} (line {line}): {} response missing; both partners must be observed at every wave",
                    Gender::BOTH[gi]
                )));
            }
            let v: usize = field
                .parse()
                .map_err(|_| parse_err(path, line, &header[col], format!("invalid category `{field}`")))?;
            if v < 1 {
                return Err(parse_err(path, line, &header[col], "categories start at 1"));
            }
            if let Some(k) = opts.k[gi] {
                if v > k {
                    return Err(parse_err(path, line, &header[col], format!("category {v} exceeds K={k}")));
                }
            }
            max_y[gi] = max_y[gi].max(v);
            y[gi] = v;
        }
        let mut x: [Vec<f64>; 2] = [Vec::with_capacity(p), Vec::with_capacity(p)];
        for col in 4..header.len() {
            let v: f64 = rec[col]
                .parse()
                .map_err(|_| parse_err(path, line, &header[col], format!("invalid number `{}`", &rec[col])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, &header[col], "non-finite covariate"));
            }
            x[if col < 4 + p { 0 } else { 1 }].push(v);
        }
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push(Row { line, wave, wave_data: Wave { y, x } });
    }
    if order.is_empty() {
        return Err(parse_err(path, 2, "", "no data rows"));
    }
    let mut couples = Vec::with_capacity(order.len());
    for id in order {
        let mut rs = rows.remove(&id).expect("grouped id");
        rs.sort_by_key(|r| r.wave);
        for w in rs.windows(2) {
            if w[1].wave == w[0].wave {
                return Err(Error::Input(format!("couple `{id}`: wave {} appears twice (lines {} and {})", w[0].wave, w[0].line, w[1].line)));
            }
            if w[1].wave != w[0].wave + 1 {
                return Err(Error::Input(format!(
                    "couple `{id}`: waves {} and {} are not consecutive",
                    w[0].wave, w[1].wave
                )));
            }
        }
        couples.push(Couple { id, first_wave: rs[0].wave, waves: rs.into_iter().map(|r| r.wave_data).collect() });
    }
    let k = [opts.k[0].unwrap_or(max_y[0].max(2)), opts.k[1].unwrap_or(max_y[1].max(2))];
    let panel = OrdinalPanel::new(k, p, couples)?;
    panel.check_no_constant_covariates()?;
    Ok(panel)
}

/// Renders a panel in the CSV schema; floats use the shortest
/// representation that reads back to the same value.
pub fn panel_to_csv(panel: &OrdinalPanel) -> String {
    let mut out = expected_header(panel.n_covariates()).join(",");
    out.push('\n');
    for c in panel.couples() {
        for (t, w) in c.waves.iter().enumerate() {
            let _ = write!(out, "{},{},{},{}", c.id, c.first_wave + t as i64, w.y[0], w.y[1]);
            for v in w.x[0].iter().chain(&w.x[1]) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_csv(panel: &OrdinalPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, panel_to_csv(panel)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// configuration

/// Settings of a command-line run, read from a flat `key = value` file
/// (`#` starts a comment) and overridable key by key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: [Option<usize>; 2],
    pub link: LinkFunction,
    pub serial: [Option<CopulaTemplate>; 2],
    pub coupling: Option<CopulaTemplate>,
    pub serial_candidates: Vec<CopulaTemplate>,
    pub coupling_candidates: Vec<CopulaTemplate>,
    pub optimizer: OptimizerSettings,
    pub negate_mu: bool,
    pub standard_errors: bool,
    pub threads: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: [None, None],
            link: LinkFunction::Probit,
            serial: [None, None],
            coupling: None,
            serial_candidates: CopulaTemplate::default_candidates(),
            coupling_candidates: CopulaTemplate::default_candidates(),
            optimizer: OptimizerSettings::default(),
            negate_mu: false,
            standard_errors: true,
            threads: None,
            data: None,
            out: None,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 17] = [
        "k_m",
        "k_f",
        "link",
        "serial_m",
        "serial_f",
        "coupling",
        "candidates",
        "serial_candidates",
        "coupling_candidates",
        "gradient_tolerance",
        "max_iterations",
        "step_scale",
        "negate_mu",
        "standard_errors",
        "threads",
        "data",
        "out",
    ];

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current settings.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(parse_err(path, i as u64 + 1, "", format!("expected key = value, got `{line}`")));
            };
            self.set(key.trim(), value.trim()).map_err(|e| parse_err(path, i as u64 + 1, key.trim(), e.to_string()))?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Input(format!("invalid {what} `{value}` for `{key}`"));
        match key {
            "k_m" | "k_f" => {
                let k: usize = value.parse().map_err(|_| bad("category count"))?;
                self.k[if key == "k_m" { 0 } else { 1 }] = Some(k);
            }
            "link" => self.link = value.parse()?,
            "serial_m" => self.serial[0] = Some(value.parse()?),
            "serial_f" => self.serial[1] = Some(value.parse()?),
            "coupling" => self.coupling = Some(value.parse()?),
            "candidates" => {
                let v = CopulaTemplate::parse_list(value)?;
                self.serial_candidates = v.clone();
                self.coupling_candidates = v;
            }
            "serial_candidates" => self.serial_candidates = CopulaTemplate::parse_list(value)?,
            "coupling_candidates" => self.coupling_candidates = CopulaTemplate::parse_list(value)?,
            "gradient_tolerance" => self.optimizer.gradient_tolerance = value.parse().map_err(|_| bad("number"))?,
            "max_iterations" => self.optimizer.max_iterations = value.parse().map_err(|_| bad("integer"))?,
            "step_scale" => self.optimizer.step_scale = value.parse().map_err(|_| bad("number"))?,
            "negate_mu" => self.negate_mu = parse_bool(value).ok_or_else(|| bad("boolean"))?,
            "standard_errors" => self.standard_errors = parse_bool(value).ok_or_else(|| bad("boolean"))?,
            "threads" => self.threads = Some(value.parse().map_err(|_| bad("thread count"))?),
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Input(format!(
                    "unknown configuration key `{other}` (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        for k in self.k.iter().flatten() {
            if *k < 2 {
                return Err(Error::Input(format!("category count must be at least 2, got {k}")));
            }
        }
        if self.serial_candidates.is_empty() || self.coupling_candidates.is_empty() {
            return Err(Error::Input("candidate lists must not be empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Input("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            link: self.link,
            negate_mu: self.negate_mu,
            optimizer: self.optimizer,
            standard_errors: self.standard_errors,
        }
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions { k: self.k }
    }
}

// ---------------------------------------------------------------------------
// reports

/// A result that can be written as JSON plus an aligned text table.
pub trait Report: Serialize {
    fn render_text(&self) -> Result<String>;
}

/// Writes `<prefix>.json` and `<prefix>.txt`, returning both paths.
pub fn write_report<R: Report>(report: &R, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let prefix = prefix.as_ref();
    let text = report.render_text()?;
    let json = serde_json::to_string_pretty(report)?;
    let with_ext = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let (jp, tp) = (with_ext(".json"), with_ext(".txt"));
    fs::write(&jp, json + "\n").map_err(|e| Error::io(&jp, e))?;
    fs::write(&tp, text).map_err(|e| Error::io(&tp, e))?;
    Ok((jp, tp))
}

/// `estimate (se)` at three decimals, or the estimate alone.
pub fn format_estimate(est: f64, se: Option<f64>) -> String {
    match se {
        Some(s) => format!("{est:.3} ({s:.3})"),
        None => format!("{est:.3}"),
    }
}

pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

/// Left-aligned first column, right-aligned remaining columns.
fn render_table(rows: &[Vec<String>]) -> String {
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            let pad = width[c] - cell.chars().count();
            if c == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Rows in the order cutpoints, covariates, τ_j, τ, ℓ; two columns per
/// model (male, female).
struct ModelColumn<'a> {
    report: &'a FitReport,
    with_se: bool,
}

impl ModelColumn<'_> {
    fn cells(&self, n_alpha: usize, p: usize) -> Vec<[String; 2]> {
        let r = self.report;
        let nat = natural_parameters(&r.params);
        let se = if self.with_se {
            r.standard_errors.as_ref().and_then(|s| s.available())
        } else {
            None
        };
        let mut rows = Vec::new();
        let mut offsets = [0usize; 2];
        offsets[1] = r.params.male.margin.cutpoints.len() + p + 1;
        let cell = |g: usize, idx: Option<usize>| -> String {
            match idx {
                Some(i) => format_estimate(nat[offsets[g] + i], se.map(|s| s.natural[offsets[g] + i])),
                None => String::new(),
            }
        };
        for a in 0..n_alpha {
            rows.push([0, 1].map(|g| {
                let k1 = r.params.serial(Gender::BOTH[g]).margin.cutpoints.len();
                cell(g, (a < k1).then_some(a))
            }));
        }
        for j in 0..p {
            rows.push([0, 1].map(|g| {
                let k1 = r.params.serial(Gender::BOTH[g]).margin.cutpoints.len();
                cell(g, Some(k1 + j))
            }));
        }
        rows.push([0, 1].map(|g| format_estimate(r.tau.serial[g], se.map(|s| s.tau.serial[g]))));
        rows.push([format_estimate(r.tau.coupling, se.map(|s| s.tau.coupling)), String::new()]);
        rows.push([format!("{:.1}", r.loglik.joint), String::new()]);
        rows
    }
}

fn row_labels(n_alpha: usize, p: usize) -> Vec<String> {
    let mut v: Vec<String> = (1..=n_alpha).map(|k| format!("alpha_{k}")).collect();
    v.extend((1..=p).map(|j| format!("x_{j}")));
    v.extend(["tau_j".to_string(), "tau".to_string(), "loglik".to_string()]);
    v
}

impl Report for FitReport {
    fn render_text(&self) -> Result<String> {
        let fam = &self.families;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Joint copula Markov model: serial {} (male), {} (female); coupling {}",
            fam.serial_male, fam.serial_female, fam.coupling
        );
        let _ = writeln!(out, "Link: {}; {}", self.link, self.sign_convention);
        let _ = writeln!(out, "Couples: {}; couple-waves: {}", self.n_couples, self.n_observations);
        out.push('\n');
        let n_alpha = self.params.male.margin.cutpoints.len().max(self.params.female.margin.cutpoints.len());
        let p = self.params.male.margin.beta.len();
        let cells = ModelColumn { report: self, with_se: true }.cells(n_alpha, p);
        let mut rows = vec![vec![String::new(), "Male".into(), "Female".into()]];
        for (label, [m, f]) in row_labels(n_alpha, p).into_iter().zip(cells) {
            rows.push(vec![label, m, f]);
        }
        out.push_str(&render_table(&rows));
        out.push('\n');
        let l = &self.loglik;
        let mut summary = vec![
            vec!["stage".to_string(), "male".into(), "female".into(), "joint".into()],
            vec!["1a indep".into(), format!("{:.1}", l.indep[0]), format!("{:.1}", l.indep[1]), String::new()],
            vec!["1b serial".into(), format!("{:.1}", l.markov_1b[0]), format!("{:.1}", l.markov_1b[1]), String::new()],
            vec!["1c markov".into(), format!("{:.1}", l.markov[0]), format!("{:.1}", l.markov[1]), String::new()],
            vec!["4 coupling".into(), String::new(), String::new(), format!("{:.1}", l.joint_stage4)],
            vec!["5 joint".into(), String::new(), String::new(), format!("{:.1}", l.joint)],
        ];
        summary.push(vec!["dependence gain".into(), String::new(), String::new(), format!("{:.1}", self.dependence_gain)]);
        out.push_str(&render_table(&summary));
        match &self.standard_errors {
            Some(crate::estimation::SeOutcome::NotPositiveDefinite { eigenvalues }) => {
                let _ = writeln!(out, "\nStandard errors unavailable: observed information not positive definite; eigenvalues {eigenvalues:?}");
            }
            None => {
                let _ = writeln!(out, "\nStandard errors not computed");
            }
            Some(_) => {}
        }
        if let Some(w) = self.beta_wald_tests() {
            if p > 0 {
                out.push_str("\nWald tests (z, p)\n");
                let mut rows = vec![vec![String::new(), "Male".into(), "Female".into()]];
                for j in 0..p {
                    rows.push(vec![
                        format!("x_{}", j + 1),
                        format!("{:.3} ({})", w[0][j].0, format_p(w[0][j].1)),
                        format!("{:.3} ({})", w[1][j].0, format_p(w[1][j].1)),
                    ]);
                }
                out.push_str(&render_table(&rows));
            }
        }
        if self.floored_terms > 0 {
            let _ = writeln!(out, "\n{} probability terms floored at 1e-300", self.floored_terms);
        }
        if !self.converged {
            out.push_str("\nWARNING: at least one stage did not converge\n");
        }
        Ok(out)
    }
}

impl Report for VuongResult {
    fn render_text(&self) -> Result<String> {
        let rows = vec![
            vec!["N (couples)".to_string(), self.n.to_string()],
            vec!["mean D".into(), format!("{:.6}", self.d_bar)],
            vec!["s".into(), format!("{:.6}", self.s)],
            vec!["z0".into(), format!("{:.3}", self.z0)],
            vec!["p (two-sided)".into(), format_p(self.p_value)],
        ];
        let mut out = String::from("Vuong test, model 2 against model 1 (z0 > 0 favours model 2)\n");
        out.push_str(&render_table(&rows));
        Ok(out)
    }
}

/// Serial scans for both genders and the coupling scan built on the best
/// serial fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub serial: Vec<SerialScan>,
    pub coupling: CouplingScan,
}

impl Report for ScanReport {
    fn render_text(&self) -> Result<String> {
        let ok: Vec<_> = self.coupling.ranked.iter().filter(|c| c.report.is_some()).collect();
        if ok.is_empty() {
            return Err(Error::Input("empty scan: no candidate produced a fit".into()));
        }
        let mut out = String::new();
        for s in &self.serial {
            let _ = writeln!(out, "Serial copula candidates ({}), ranked by maximized Markov log-likelihood", s.gender);
            let mut rows = vec![vec!["rank".to_string(), "family".into(), "loglik".into(), "tau".into()]];
            for (i, c) in s.ranked.iter().enumerate() {
                match &c.fit {
                    Some(f) => rows.push(vec![
                        (i + 1).to_string(),
                        c.template.to_string(),
                        format!("{:.1}", f.loglik_markov),
                        format!("{:.3}", f.model.copula.kendall_tau()),
                    ]),
                    None => rows.push(vec![
                        "-".into(),
                        c.template.to_string(),
                        "failed".into(),
                        c.error.clone().unwrap_or_default(),
                    ]),
                }
            }
            out.push_str(&render_table(&rows));
            out.push('\n');
        }
        out.push_str("Coupling copula candidates, ranked by joint log-likelihood\n");
        let first = ok[0].report.as_ref().expect("filtered");
        let n_alpha = first.params.male.margin.cutpoints.len().max(first.params.female.margin.cutpoints.len());
        let p = first.params.male.margin.beta.len();
        let mut header = vec![String::new()];
        let mut sub = vec![String::new()];
        let mut columns: Vec<Vec<[String; 2]>> = Vec::new();
        for c in &ok {
            let r = c.report.as_ref().expect("filtered");
            header.push(c.template.to_string());
            header.push(String::new());
            sub.push("Male".into());
            sub.push("Female".into());
            let mut cells = ModelColumn { report: r, with_se: false }.cells(n_alpha, p);
            let vuong = match &c.vuong_vs_reference {
                Some(v) => format!("{:.3} ({})", v.z0, format_p(v.p_value)),
                None => String::new(),
            };
            cells.push([vuong, String::new()]);
            columns.push(cells);
        }
        let mut rows = vec![header, sub];
        let mut labels = row_labels(n_alpha, p);
        labels.push(match &self.coupling.reference {
            Some(t) => format!("Vuong vs {t}"),
            None => "Vuong".into(),
        });
        for (i, label) in labels.into_iter().enumerate() {
            let mut row = vec![label];
            for col in &columns {
                row.extend(col[i].iter().cloned());
            }
            rows.push(row);
        }
        out.push_str(&render_table(&rows));
        Ok(out)
    }
}

/// Reads a fit report previously written by [`write_report`].
pub fn read_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Density matrix as CSV: the header row holds the z₂ cell centres, each
/// following row starts with its z₁ cell centre.
pub fn density_grid_to_csv(grid: &DensityGrid) -> String {
    let mid: Vec<f64> = grid.edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    let mut out = String::from("z1\\z2");
    for m in &mid {
        let _ = write!(out, ",{m:?}");
    }
    out.push('\n');
    for (row, m) in grid.density.iter().zip(&mid) {
        let _ = write!(out, "{m:?}");
        for d in row {
            let _ = write!(out, ",{d:?}");
        }
        out.push('\n');
    }
    out
}
