mod model_file;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fctree::data::{read_csv_path, write_csv, LabelMap};
use fctree::estimate::{fit_with_cutpoints, standard_errors, FitOptions};
use fctree::quadrature::gauss_legendre_unit;
use fctree::select::{select_families, SelectOptions};
use fctree::simulate::{builtin_designs, draw, find_design, replicate_rng, sample};
use fctree::{QuadratureRule, ResponseMatrix};

use model_file::{describe, ModelFile, TreeMethod};
use report::{write_atomic, write_json, FitReport, Status};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, or an unwritable output.
    Input(String),
    /// The model could not be fitted or evaluated.
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<fctree::Error> for CliError {
    fn from(e: fctree::Error) -> Self {
        match e {
            fctree::Error::Io(_) | fctree::Error::Csv(_) | fctree::Error::Data(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fctree",
    version,
    about = "Factor tree copula models for ordinal item responses"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Response CSV: a header of item names, one integer-coded row per respondent.
    #[arg(long)]
    input: PathBuf,
    /// Gauss–Legendre nodes per latent dimension.
    #[arg(long, default_value_t = 15)]
    nq: usize,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model by two-stage maximum likelihood.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Model file (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// How to obtain the residual tree, overriding the model file.
        #[arg(long, value_enum)]
        tree: Option<TreeMethod>,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        grad_tol: f64,
    },
    /// Choose link and edge families and the residual tree.
    Select {
        #[command(flatten)]
        common: Common,
        /// Model file giving the factor count, whether to add a tree, and
        /// optionally the candidate families.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Draw datasets from a built-in design or a fitted model.
    Simulate {
        /// Design name, or `list` to print the catalogue.
        #[arg(long, conflicts_with = "fit")]
        design: Option<String>,
        /// Fit or select report to simulate from.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Sample size when simulating from a fit.
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Overrides the design's own seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Implied-correlation discrepancies and semi-correlations of a fit.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fit: PathBuf,
        /// Also tabulate each candidate family's semi-correlations at the
        /// observed normal-scores correlation.
        #[arg(long)]
        semi_table: bool,
    },
    /// Vuong comparison of two fits of the same data.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Model 1 (the reference, usually the Gaussian model).
        #[arg(long)]
        fit1: PathBuf,
        #[arg(long)]
        fit2: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("fctree: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fctree: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit {
            common,
            spec,
            tree,
            max_iter,
            grad_tol,
        } => cmd_fit(&common, &spec, tree, max_iter, grad_tol),
        Command::Select { common, spec } => cmd_select(&common, &spec),
        Command::Simulate {
            design,
            fit,
            n,
            reps,
            seed,
            out,
        } => cmd_simulate(design, fit, n, reps, seed, out),
        Command::Diagnose {
            common,
            fit,
            semi_table,
        } => report::cmd_diagnose(&common, &fit, semi_table),
        Command::Compare { common, fit1, fit2 } => report::cmd_compare(&common, &fit1, &fit2),
    }
}

struct Loaded {
    data: ResponseMatrix,
    labels: LabelMap,
    rule: QuadratureRule,
}

fn load(common: &Common) -> Result<Loaded, CliError> {
    let (data, labels) = read_csv_path(&common.input)
        .map_err(|e| CliError::Input(format!("{}: {e}", common.input.display())))?;
    let rule = gauss_legendre_unit(common.nq).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Loaded { data, labels, rule })
}

fn cutpoints(data: &ResponseMatrix) -> Result<fctree::CutpointSet, CliError> {
    fctree::data::estimate_cutpoints(data).map_err(|e| CliError::Input(e.to_string()))
}

fn cmd_fit(
    common: &Common,
    spec_path: &Path,
    tree: Option<TreeMethod>,
    max_iter: usize,
    grad_tol: f64,
) -> Result<(), CliError> {
    let input = load(common)?;
    let file = ModelFile::read(spec_path)?;
    let cut = cutpoints(&input.data)?;
    let spec = file.build(&input.data, &cut, tree, &input.rule)?;
    let opts = FitOptions {
        max_iter,
        grad_tol,
        ..FitOptions::default()
    };
    let mut rep = FitReport::new("fit", common, &input.data, &input.labels);
    rep.model = Some(describe(&spec));
    match fit_with_cutpoints(&input.data, &cut, &spec, &input.rule, &opts) {
        Ok(fit) => {
            rep.model = Some(describe(&fit.spec));
            rep.set_fit(fit);
            let status = rep.status;
            write_json(common.out.as_deref(), &rep)?;
            if status == Status::NotConverged {
                return Err(CliError::Numeric(
                    "optimizer did not converge; see the report".into(),
                ));
            }
            Ok(())
        }
        Err(e) => {
            rep.fail(&e);
            write_json(common.out.as_deref(), &rep)?;
            Err(e.into())
        }
    }
}

fn cmd_select(common: &Common, spec_path: &Path) -> Result<(), CliError> {
    let input = load(common)?;
    let file = ModelFile::read(spec_path)?;
    if file.factors > 2 {
        return Err(CliError::Input(format!(
            "factors must be 0, 1 or 2, got {}",
            file.factors
        )));
    }
    let cut = cutpoints(&input.data)?;
    let mut opts = SelectOptions::new(file.factors, file.has_tree());
    if let Some(c) = &file.factor_candidates {
        opts.factor_candidates = c.clone();
    }
    if let Some(c) = &file.tree_candidates {
        opts.tree_candidates = c.clone();
    }
    let mut rep = FitReport::new("select", common, &input.data, &input.labels);
    let selection = match select_families(&input.data, &cut, &opts, &input.rule) {
        Ok(s) => s,
        Err(e) => {
            rep.fail(&e);
            write_json(common.out.as_deref(), &rep)?;
            return Err(e.into());
        }
    };
    let mut fit = selection.fit.clone();
    if fit.converged {
        match standard_errors(&input.data, &fit, &input.rule) {
            Ok(se) => fit.se = Some(se),
            Err(e) => log::warn!("standard errors unavailable: {e}"),
        }
    }
    rep.model = Some(describe(&selection.spec));
    rep.set_fit(fit);
    rep.selection = Some(report::SelectionReport::from(&selection));
    let status = rep.status;
    write_json(common.out.as_deref(), &rep)?;
    if status == Status::NotConverged {
        return Err(CliError::Numeric(
            "final fit did not converge; see the report".into(),
        ));
    }
    Ok(())
}

fn cmd_simulate(
    design: Option<String>,
    fit: Option<PathBuf>,
    n: usize,
    reps: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if design.as_deref() == Some("list") {
        for d in builtin_designs() {
            println!(
                "{}\td={}\tfactors={}\tn={}\tseed={}",
                d.name, d.spec.d, d.spec.factors, d.n, d.seed
            );
        }
        return Ok(());
    }
    let out = out.ok_or_else(|| CliError::Input("--out directory is required".into()))?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let (name, datasets): (String, Vec<ResponseMatrix>) = match (design, fit) {
        (Some(name), None) => {
            let mut d = find_design(&name).ok_or_else(|| {
                CliError::Input(format!("unknown design '{name}' (try --design list)"))
            })?;
            if let Some(s) = seed {
                d.seed = s;
            }
            let sets = (0..reps)
                .map(|r| draw(&d, r))
                .collect::<fctree::Result<Vec<_>>>()?;
            (name, sets)
        }
        (None, Some(path)) => {
            let fit = report::read_fit(&path)?;
            let base = seed.unwrap_or(0);
            let sets = (0..reps)
                .map(|r| {
                    sample(
                        &fit.spec,
                        &fit.params,
                        &fit.cutpoints,
                        n,
                        &mut replicate_rng(base, r),
                    )
                })
                .collect::<fctree::Result<Vec<_>>>()?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "fit".into());
            (stem, sets)
        }
        _ => {
            return Err(CliError::Input(
                "give exactly one of --design or --fit".into(),
            ))
        }
    };
    for (r, data) in datasets.iter().enumerate() {
        let path = out.join(format!("{name}-rep{r:04}.csv"));
        let mut buf = Vec::new();
        write_csv(&mut buf, data)?;
        write_atomic(&path, &buf)?;
    }
    Ok(())
}
