//! JSON reports. Every report carries `schema_version`; floats are written in
//! shortest round-trip form, so re-reading a report reproduces each value
//! bit for bit.

use std::io::Write;
use std::path::Path;

use fctree::data::LabelMap;
use fctree::diagnose::{discrepancies, model_corr_matrix, vuong, Discrepancies, VuongResult};
use fctree::estimate::FitResult;
use fctree::select::{
    calibrate_to_normal_scores, polychoric_matrix, semi_correlations, theoretical_semi_corr,
    ObservedSemiCorrelations, Selection, SelectionStep, TreeVariant,
};
use fctree::{CopulaFamily, ResponseMatrix, Slot};
use serde::{Deserialize, Serialize};

use crate::model_file::ModelFile;
use crate::{load, CliError, Common};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NotConverged,
    Failed,
}

/// One dependence parameter; items are numbered from 1.
#[derive(Debug, Serialize)]
pub struct ParamRow {
    pub name: String,
    pub family: CopulaFamily,
    pub theta: f64,
    pub tau: f64,
    pub se_theta: Option<f64>,
    pub se_tau: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TreeRow {
    pub variant: TreeVariant,
    /// 1-based item pairs.
    pub edges: Vec<[usize; 2]>,
    pub family: CopulaFamily,
    pub loglik: f64,
    pub aic: f64,
}

#[derive(Debug, Serialize)]
pub struct SelectionReport {
    pub start_loglik: f64,
    pub steps: Vec<SelectionStep>,
    pub trees: Vec<TreeRow>,
}

impl From<&Selection> for SelectionReport {
    fn from(s: &Selection) -> Self {
        let trees = s
            .trees
            .iter()
            .map(|t| TreeRow {
                variant: t.variant,
                edges: t
                    .tree
                    .edges()
                    .iter()
                    .map(|&(a, b)| [a + 1, b + 1])
                    .collect(),
                family: t.family,
                loglik: t.loglik,
                aic: t.aic,
            })
            .collect();
        SelectionReport {
            start_loglik: s.start_loglik,
            steps: s.steps.clone(),
            trees,
        }
    }
}

/// Report of `fit` and `select`. The `fit` block is the estimator's own
/// record and numbers items from 0; everything else numbers them from 1.
#[derive(Debug, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub command: String,
    pub status: Status,
    pub error: Option<String>,
    pub input: String,
    pub n: usize,
    pub d: usize,
    pub nq: usize,
    pub labels: LabelMap,
    pub model: Option<ModelFile>,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub n_params: Option<usize>,
    pub parameters: Vec<ParamRow>,
    pub selection: Option<SelectionReport>,
    pub fit: Option<FitResult>,
}

impl FitReport {
    pub fn new(command: &str, common: &Common, data: &ResponseMatrix, labels: &LabelMap) -> Self {
        FitReport {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            status: Status::Ok,
            error: None,
            input: common.input.display().to_string(),
            n: data.n(),
            d: data.d(),
            nq: common.nq,
            labels: labels.clone(),
            model: None,
            loglik: None,
            aic: None,
            n_params: None,
            parameters: Vec::new(),
            selection: None,
            fit: None,
        }
    }

    pub fn set_fit(&mut self, fit: FitResult) {
        self.status = if fit.converged {
            Status::Ok
        } else {
            Status::NotConverged
        };
        self.loglik = Some(fit.loglik);
        self.aic = Some(fit.aic);
        self.n_params = Some(fit.n_params);
        let edges = fit.spec.edges();
        self.parameters = fit
            .slots
            .iter()
            .enumerate()
            .map(|(i, &slot)| ParamRow {
                name: match slot {
                    Slot::Theta1(j) => format!("theta1[{}]", j + 1),
                    Slot::Theta2(j) => format!("theta2[{}]", j + 1),
                    Slot::Delta(e) => format!("delta[{}-{}]", edges[e].0 + 1, edges[e].1 + 1),
                },
                family: fit.spec.family(slot),
                theta: fit.params.get(slot),
                tau: fit.taus[i],
                se_theta: fit.se.as_ref().map(|s| s.theta[i]),
                se_tau: fit.se.as_ref().map(|s| s.tau[i]),
            })
            .collect();
        self.fit = Some(fit);
    }

    pub fn fail(&mut self, e: &fctree::Error) {
        self.status = Status::Failed;
        self.error = Some(e.to_string());
    }
}

/// Writes through a temporary file in the target directory, so a reader never
/// sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// The fitted model stored in a `fit` or `select` report.
pub fn read_fit(path: &Path) -> Result<FitResult, CliError> {
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        other => return Err(bad(format!("unsupported schema_version {other:?}"))),
    }
    let fit = value
        .get_mut("fit")
        .map(serde_json::Value::take)
        .unwrap_or_default();
    if fit.is_null() {
        return Err(bad("report holds no fitted model".into()));
    }
    serde_json::from_value(fit).map_err(|e| bad(e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct SemiRow {
    pub family: CopulaFamily,
    pub theta: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Serialize)]
pub struct DiagnoseReport {
    pub schema_version: u32,
    pub command: String,
    pub input: String,
    pub fit: String,
    pub loglik: f64,
    pub aic: f64,
    pub n_params: usize,
    pub observed_corr: Vec<Vec<f64>>,
    /// Present for models whose links and edges are all BVN.
    pub model_corr: Option<Vec<Vec<f64>>>,
    pub discrepancies: Option<Discrepancies>,
    pub note: Option<String>,
    pub semi_correlations: Option<ObservedSemiCorrelations>,
    pub semi_table: Option<Vec<SemiRow>>,
}

pub fn cmd_diagnose(common: &Common, fit_path: &Path, semi_table: bool) -> Result<(), CliError> {
    let input = load(common)?;
    let fit = read_fit(fit_path)?;
    fit.cutpoints
        .check_matches(&input.data)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let observed = polychoric_matrix(&input.data, &fit.cutpoints)?;
    let (model_corr, disc, note) = match model_corr_matrix(&fit.spec, &fit.params) {
        Ok(m) => {
            let d = discrepancies(&m, &observed)?;
            (Some(m.to_rows()), Some(d), None)
        }
        Err(fctree::Error::Unsupported(m)) => (None, None, Some(m)),
        Err(e) => return Err(e.into()),
    };
    let semi = match semi_correlations(&input.data, &fit.cutpoints) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("observed semi-correlations unavailable: {e}");
            None
        }
    };
    let table = match (semi_table, semi) {
        (true, Some(s)) => {
            let mut rows = Vec::new();
            let families = [
                CopulaFamily::Bvn,
                CopulaFamily::t(2.0),
                CopulaFamily::t(5.0),
                CopulaFamily::Frank,
                CopulaFamily::Gumbel,
                CopulaFamily::SurvivalGumbel,
            ];
            for f in families {
                let theta = calibrate_to_normal_scores(f, s.rho_n)?;
                let t = theoretical_semi_corr(f, s.rho_n)?;
                rows.push(SemiRow {
                    family: f,
                    theta,
                    lower: t.lower,
                    upper: t.upper,
                });
            }
            Some(rows)
        }
        _ => None,
    };
    let rep = DiagnoseReport {
        schema_version: SCHEMA_VERSION,
        command: "diagnose".into(),
        input: common.input.display().to_string(),
        fit: fit_path.display().to_string(),
        loglik: fit.loglik,
        aic: fit.aic,
        n_params: fit.n_params,
        observed_corr: observed.to_rows(),
        model_corr,
        discrepancies: disc,
        note,
        semi_correlations: semi,
        semi_table: table,
    };
    write_json(common.out.as_deref(), &rep)
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub command: String,
    pub input: String,
    pub fit1: String,
    pub fit2: String,
    pub loglik1: f64,
    pub loglik2: f64,
    pub aic1: f64,
    pub aic2: f64,
    pub vuong: VuongResult,
}

pub fn cmd_compare(common: &Common, fit1: &Path, fit2: &Path) -> Result<(), CliError> {
    let input = load(common)?;
    let (a, b) = (read_fit(fit1)?, read_fit(fit2)?);
    for f in [&a, &b] {
        f.cutpoints
            .check_matches(&input.data)
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let v = vuong(&input.data, &a, &b, &input.rule)?;
    let rep = CompareReport {
        schema_version: SCHEMA_VERSION,
        command: "compare".into(),
        input: common.input.display().to_string(),
        fit1: fit1.display().to_string(),
        fit2: fit2.display().to_string(),
        loglik1: a.loglik,
        loglik2: b.loglik,
        aic1: a.aic,
        aic2: b.aic,
        vuong: v,
    };
    write_json(common.out.as_deref(), &rep)
}
