//! The `gsm-hbt` command-line tool: config handling, the four subcommands
//! and their file outputs.

pub mod config;
pub mod output;
pub mod render;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gsm::{IndexWindow, ModeIndex, ModeSpectrum, Normalization};
use crate::hbt::{
    g2_matrix_analytic, g2_matrix_monte_carlo, g2_scan, measured_spectrum, DetectionOptics, G2Matrix, ModeFilter,
};
use crate::metrics::{schmidt_number, ComparisonReport};
use crate::modal::{compare_to_analytic, discretize_kernel, eigendecompose, ModalComparison};
use crate::speckle::{write_dump, Dimensionality, Ensemble, Precision};

pub use config::{OutputFormat, RunConfig, ENV_PREFIX};
pub use output::{float, verify_manifest, OutputDir, RunManifest, LOCK_FILE, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "gsm-hbt",
    version,
    about = "Gaussian Schell-model coherent modes and mode-filtered HBT simulation"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `ensemble.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Also write PNG heatmaps.
    #[arg(long, global = true)]
    pub render: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Analytic eigenvalue table, optionally checked against a Nyström solve.
    Spectrum {
        #[arg(long)]
        numerical: bool,
        #[arg(long)]
        max_order: Option<usize>,
    },
    /// Monte Carlo g² matrix between the two filter arms.
    Hbt {
        /// Also write the first N field realizations.
        #[arg(long, value_name = "N")]
        dump_fields: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// g² against the displacement of a bare fiber in the second arm.
    Scan {
        /// Target mode as `m,n`.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ModeIndex>,
        #[arg(long, allow_negative_numbers = true)]
        r_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        r_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// `c_det / c` of the displaced fiber.
        #[arg(long)]
        c_det_ratio: Option<f64>,
        /// Add Monte Carlo points.
        #[arg(long)]
        mc: bool,
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Fidelity and distance of a measured table against theory.
    Report {
        #[arg(long)]
        experiment: PathBuf,
        /// Theory table; computed from the model when absent.
        #[arg(long)]
        theory: Option<PathBuf>,
        /// Triangular window `m + n <= max_order`.
        #[arg(long, conflicts_with_all = ["max_m", "max_n"])]
        max_order: Option<usize>,
        #[arg(long, requires = "max_n")]
        max_m: Option<usize>,
        #[arg(long, requires = "max_m")]
        max_n: Option<usize>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<ModeIndex, String> {
    let (m, n) = s.split_once(',').ok_or_else(|| format!("expected `m,n`, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok(ModeIndex::new(p(m)?, p(n)?))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum { .. } => "spectrum",
            Command::Hbt { .. } => "hbt",
            Command::Scan { .. } => "scan",
            Command::Report { .. } => "report",
        }
    }

    /// Folds subcommand flags that shadow config keys into `config`.
    fn apply(&self, config: &mut RunConfig) {
        match self {
            Command::Spectrum { max_order, .. } => {
                if let Some(k) = max_order {
                    config.spectrum.max_order = *k;
                }
            }
            Command::Hbt { realizations, .. } => {
                if let Some(n) = realizations {
                    config.ensemble.realizations = *n;
                }
            }
            Command::Scan {
                mode,
                r_min,
                r_max,
                points,
                c_det_ratio,
                mc,
                realizations,
            } => {
                let s = &mut config.scan;
                s.mode = mode.unwrap_or(s.mode);
                s.r_min = r_min.or(s.r_min);
                s.r_max = r_max.or(s.r_max);
                s.points = points.unwrap_or(s.points);
                s.c_det_ratio = c_det_ratio.or(s.c_det_ratio);
                s.monte_carlo |= *mc;
                if let Some(n) = realizations {
                    config.ensemble.realizations = *n;
                }
            }
            Command::Report { .. } => {}
        }
    }
}

/// Loads the config, applies flag overrides, and runs `cli.command`.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    let mut config = RunConfig::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        config.ensemble.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        config.output.dir = out.clone();
    }
    if let Some(f) = cli.common.format {
        config.output.format = f;
    }
    config.output.render |= cli.common.render;
    cli.command.apply(&mut config);
    config.validate()?;
    match cli.common.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| execute(&config, &cli.command)),
        None => execute(&config, &cli.command),
    }
}

/// Runs one subcommand with a fully resolved config. Nothing is written
/// unless the computation succeeds.
pub fn execute(config: &RunConfig, command: &Command) -> Result<RunManifest> {
    let outputs = match command {
        Command::Spectrum { numerical, .. } => cmd_spectrum(config, *numerical)?,
        Command::Hbt { dump_fields, .. } => cmd_hbt(config, *dump_fields)?,
        Command::Scan { .. } => cmd_scan(config)?,
        Command::Report {
            experiment,
            theory,
            max_order,
            max_m,
            max_n,
        } => {
            let window = match (max_order, max_m, max_n) {
                (Some(k), _, _) => Some(IndexWindow::Triangle { max_order: *k }),
                (None, Some(m), Some(n)) => Some(IndexWindow::Rect { max_m: *m, max_n: *n }),
                _ => None,
            };
            cmd_report(config, experiment, theory.as_deref(), window)?
        }
    };
    let mut dir = OutputDir::acquire(&config.output.dir)?;
    for (name, data) in &outputs.files {
        dir.write(name, data)?;
    }
    if let Some((ensemble, count)) = &outputs.dump {
        write_dump(ensemble, &dir.path("fields"), Precision::Complex128, *count)?;
        dir.record("fields.bin");
        dir.record("fields.json");
    }
    let snapshot = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
    dir.finish(command.name(), config.ensemble.seed, snapshot)
}

/// Files produced by a command, written only after it succeeds.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    dump: Option<(Ensemble, usize)>,
}

impl Outputs {
    fn add(&mut self, name: &str, data: Vec<u8>) {
        self.files.push((name.to_string(), data));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut data = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        data.push(b'\n');
        self.add(name, data);
        Ok(())
    }
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    c: f64,
    beta: f64,
    spectral_ratio: f64,
    schmidt_number: f64,
    spectrum: &'a ModeSpectrum,
}

#[derive(Serialize)]
struct NumericalSummary<'a> {
    grid_points: usize,
    half_width: f64,
    max_eigenvalue_rel_error: f64,
    max_mode_l2_error: f64,
    comparison: &'a ModalComparison,
    analytic: Vec<f64>,
    numerical: Vec<f64>,
}

fn cmd_spectrum(config: &RunConfig, numerical: bool) -> Result<Outputs> {
    let model = config.model()?;
    let format = config.output.format;
    let max_order = config.spectrum.max_order;
    let window = IndexWindow::Triangle { max_order };
    let spectrum = ModeSpectrum::analytic_2d(&model, window, Normalization::RelativeToGround);
    let mut out = Outputs::default();
    if format.csv() {
        let mut t = output::CsvTable::new(&["m", "n", "value"]);
        for (idx, v) in spectrum.iter() {
            t.row([idx.m.to_string(), idx.n.to_string(), float(v)]);
        }
        out.add("spectrum.csv", t.into_bytes());
    }
    if format.json() {
        out.add_json(
            "spectrum.json",
            &SpectrumSummary {
                c: model.kernel_params().c,
                beta: model.beta(),
                spectral_ratio: model.spectral_ratio(),
                schmidt_number: schmidt_number(&spectrum)?,
                spectrum: &spectrum,
            },
        )?;
    }
    if config.output.render {
        let cells: Vec<Vec<Option<f64>>> = (0..=max_order)
            .map(|m| (0..=max_order).map(|n| spectrum.get(ModeIndex::new(m, n))).collect())
            .collect();
        out.add("spectrum.png", render::heatmap_png(&cells, 0.0, 1.0)?);
    }
    if numerical {
        let count = config.spectrum.numerical_modes;
        let grid = config.grid(&model);
        let solved = eigendecompose(&discretize_kernel(&model, &grid), &grid, count)?;
        let cmp = compare_to_analytic(&solved, &model, count)?;
        let params = model.kernel_params();
        let analytic: Vec<f64> = (0..count).map(|n| params.eigenvalue(model.amplitude(), n)).collect();
        log::info!(
            "Nyström N={}: max eigenvalue error {:.3e}, max mode error {:.3e}",
            grid.points(),
            cmp.max_eigenvalue_error(),
            cmp.max_mode_error()
        );
        if format.csv() {
            let mut t = output::CsvTable::new(&["n", "analytic", "numerical", "eigenvalue_rel_error", "mode_l2_error"]);
            for (n, exact) in analytic.iter().enumerate() {
                t.row([
                    n.to_string(),
                    float(*exact),
                    float(solved.eigenvalues[n]),
                    float(cmp.eigenvalue_rel_error[n]),
                    float(cmp.mode_l2_error[n]),
                ]);
            }
            out.add("numerical.csv", t.into_bytes());
        }
        if format.json() {
            out.add_json(
                "numerical.json",
                &NumericalSummary {
                    grid_points: grid.points(),
                    half_width: grid.half_width(),
                    max_eigenvalue_rel_error: cmp.max_eigenvalue_error(),
                    max_mode_l2_error: cmp.max_mode_error(),
                    comparison: &cmp,
                    analytic,
                    numerical: solved.eigenvalues.clone(),
                },
            )?;
        }
    }
    Ok(out)
}

fn build_ensemble(config: &RunConfig) -> Result<Ensemble> {
    let model = config.model()?;
    Ensemble::new(model, config.ensemble(&model)?, config.ensemble.dims)
}

#[derive(Serialize)]
struct HbtSummary<'a> {
    realizations: usize,
    seed: u64,
    monte_carlo: &'a G2Matrix,
    analytic: &'a G2Matrix,
}

fn cmd_hbt(config: &RunConfig, dump_fields: Option<usize>) -> Result<Outputs> {
    let model = config.model()?;
    let optics = config.optics.build(&model)?;
    let ensemble = build_ensemble(config)?;
    let (arm1, arm2) = config.hbt.arms();
    let mc = g2_matrix_monte_carlo(&ensemble, &arm1, &arm2, &optics)?;
    let th = g2_matrix_analytic(&model, &arm1, &arm2, &optics)?;
    let measured = if ensemble.dims() == Dimensionality::Two {
        Some(measured_spectrum(
            &ensemble,
            IndexWindow::Triangle {
                max_order: config.spectrum.max_order,
            },
        )?)
    } else {
        None
    };

    let format = config.output.format;
    let mut out = Outputs::default();
    if format.csv() {
        let mut t = output::CsvTable::new(&["arm1", "arm2", "filter1", "filter2", "g2", "stderr", "g2_analytic"]);
        for (e, a) in mc.entries.iter().zip(&th.entries) {
            t.row([
                e.arm1.to_string(),
                e.arm2.to_string(),
                arm1[e.arm1].label(),
                arm2[e.arm2].label(),
                float(e.g2.value),
                float(e.g2.stderr),
                float(a.g2.value),
            ]);
        }
        out.add("g2_matrix.csv", t.into_bytes());
        if let Some((spectrum, raw)) = &measured {
            let ground = raw.iter().find(|(i, _)| i.order() == 0).map_or(1.0, |(_, e)| e.value);
            let mut t = output::CsvTable::new(&["m", "n", "value", "stderr"]);
            for (idx, est) in raw {
                t.row([
                    idx.m.to_string(),
                    idx.n.to_string(),
                    opt_float(spectrum.get(*idx)),
                    float(est.stderr / ground),
                ]);
            }
            out.add("measured_spectrum.csv", t.into_bytes());
        }
    }
    if format.json() {
        out.add_json(
            "g2_matrix.json",
            &HbtSummary {
                realizations: ensemble.len(),
                seed: config.ensemble.seed,
                monte_carlo: &mc,
                analytic: &th,
            },
        )?;
        if let Some((spectrum, _)) = &measured {
            out.add_json("measured_spectrum.json", spectrum)?;
        }
    }
    if config.output.render {
        let cells: Vec<Vec<Option<f64>>> = (0..arm1.len())
            .map(|i| (0..arm2.len()).map(|j| mc.get(i, j).map(|e| e.value)).collect())
            .collect();
        out.add("g2_matrix.png", render::heatmap_png(&cells, 1.0, 2.0)?);
    }
    if let Some(n) = dump_fields {
        out.dump = Some((ensemble, n));
    }
    Ok(out)
}

#[derive(Serialize)]
struct ScanRow {
    r_f: f64,
    g2_analytic: f64,
    g2_mc: Option<f64>,
    stderr: Option<f64>,
}

fn cmd_scan(config: &RunConfig) -> Result<Outputs> {
    let model = config.model()?;
    let c = model.kernel_params().c;
    let s = &config.scan;
    let rs = s.displacements(c)?;
    let c_det = s.c_det_ratio.map(|r| r * c);
    let curve = g2_scan(&model, s.mode, &rs, c_det)?;
    let mc = if s.monte_carlo {
        let optics = match c_det {
            Some(cd) => DetectionOptics::with_detection_c(&model, config.optics.fiber_waist, cd)?,
            None => config.optics.build(&model)?,
        };
        let ensemble = build_ensemble(config)?;
        let buckets: Vec<ModeFilter> = rs.iter().map(|&r| ModeFilter::bucket(r, 0.0)).collect();
        let m = g2_matrix_monte_carlo(&ensemble, &[ModeFilter::ideal(s.mode.m, s.mode.n)], &buckets, &optics)?;
        Some(m.entries.iter().map(|e| e.g2).collect::<Vec<_>>())
    } else {
        None
    };
    let rows: Vec<ScanRow> = curve
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| ScanRow {
            r_f: p.rx,
            g2_analytic: p.g2,
            g2_mc: mc.as_ref().map(|v| v[i].value),
            stderr: mc.as_ref().map(|v| v[i].stderr),
        })
        .collect();
    let mut out = Outputs::default();
    if config.output.format.csv() {
        let mut t = output::CsvTable::new(&["r_f", "g2_analytic", "g2_mc", "stderr"]);
        for r in &rows {
            t.row([
                float(r.r_f),
                float(r.g2_analytic),
                opt_float(r.g2_mc),
                opt_float(r.stderr),
            ]);
        }
        out.add("scan.csv", t.into_bytes());
    }
    if config.output.format.json() {
        #[derive(Serialize)]
        struct ScanSummary<'a> {
            mode: ModeIndex,
            c_det_ratio: f64,
            converged: bool,
            points: &'a [ScanRow],
        }
        out.add_json(
            "scan.json",
            &ScanSummary {
                mode: s.mode,
                c_det_ratio: curve.c_det_ratio,
                converged: curve.points.iter().all(|p| p.converged),
                points: &rows,
            },
        )?;
    }
    Ok(out)
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Rows of a CSV file keyed by header name, with their line numbers.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let data = fs::read(path)?;
        let mut reader = csv::ReaderBuilder::new().from_reader(data.as_slice());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| format_error(path, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                format_error(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        if rows.is_empty() {
            return Err(format_error(path, 1, "no data rows"));
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| format_error(&self.path, 1, format!("missing column `{name}`")))
    }

    fn parse<T: std::str::FromStr>(&self, line: usize, field: &str, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        field
            .trim()
            .parse()
            .map_err(|e| format_error(&self.path, line, format!("column `{name}`: {e} (`{field}`)")))
    }

    fn is_spectrum(&self) -> bool {
        self.column("m").is_some() && self.column("n").is_some()
    }

    fn spectrum(&self, c: f64) -> Result<ModeSpectrum> {
        let (cm, cn, cv) = (self.require("m")?, self.require("n")?, self.require("value")?);
        let mut values = Vec::with_capacity(self.rows.len());
        for (line, row) in &self.rows {
            let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
            let idx = ModeIndex::new(self.parse(*line, get(cm), "m")?, self.parse(*line, get(cn), "n")?);
            let v: f64 = self.parse(*line, get(cv), "value")?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(format_error(
                    &self.path,
                    *line,
                    format!("value must be finite and >= 0, got {v}"),
                ));
            }
            values.push((idx, v));
        }
        ModeSpectrum::from_values(c, Normalization::Raw, values)
    }

    /// `(arm1, arm2) → value` from a g² table.
    fn g2_column(&self, name: &str) -> Result<Vec<((usize, usize), f64)>> {
        let (c1, c2, cv) = (self.require("arm1")?, self.require("arm2")?, self.require(name)?);
        self.rows
            .iter()
            .map(|(line, row)| {
                let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
                Ok((
                    (self.parse(*line, get(c1), "arm1")?, self.parse(*line, get(c2), "arm2")?),
                    self.parse(*line, get(cv), name)?,
                ))
            })
            .collect()
    }
}

/// Largest `k` with every index `m + n <= k` present.
fn largest_triangle(spectrum: &ModeSpectrum) -> Option<usize> {
    let mut k = 0;
    loop {
        let tri = IndexWindow::Triangle { max_order: k };
        if !tri.indices().iter().all(|i| spectrum.get(*i).is_some()) {
            return k.checked_sub(1);
        }
        k += 1;
    }
}

#[derive(Serialize)]
struct G2Report {
    pairs: usize,
    distance: f64,
    combined_stderr: f64,
}

fn cmd_report(
    config: &RunConfig,
    experiment: &Path,
    theory: Option<&Path>,
    window: Option<IndexWindow>,
) -> Result<Outputs> {
    let model = config.model()?;
    let c = model.kernel_params().c;
    let exp_table = Table::read(experiment)?;
    let format = config.output.format;
    let mut out = Outputs::default();
    if exp_table.is_spectrum() {
        let exp = exp_table.spectrum(c)?;
        let window = match window {
            Some(w) => w,
            None => IndexWindow::Triangle {
                max_order: largest_triangle(&exp)
                    .ok_or_else(|| format_error(experiment, 1, "table lacks the (0,0) entry"))?,
            },
        };
        let th = match theory {
            Some(p) => Table::read(p)?.spectrum(c)?,
            None => ModeSpectrum::analytic_2d(&model, window, Normalization::RelativeToGround),
        };
        let report = ComparisonReport::new(&exp, &th, window)?;
        log::info!("fidelity {:.6}, distance {:.3e}", report.fidelity, report.distance);
        if format.csv() {
            let mut t = output::CsvTable::new(&["order", "fidelity", "distance"]);
            for p in &report.curve {
                t.row([p.order.to_string(), float(p.fidelity), float(p.distance)]);
            }
            out.add("report_curve.csv", t.into_bytes());
        }
        out.add_json("report.json", &report)?;
    } else {
        let exp = exp_table.g2_column("g2")?;
        let errs = exp_table.g2_column("stderr")?;
        let th = match theory {
            Some(p) => Table::read(p)?.g2_column("g2")?,
            None => exp_table.g2_column("g2_analytic")?,
        };
        if exp.len() != th.len() || exp.iter().zip(&th).any(|(a, b)| a.0 != b.0) {
            return Err(Error::IndexMismatch("g² tables cover different filter pairs".into()));
        }
        let distance = exp
            .iter()
            .zip(&th)
            .map(|(a, b)| (a.1 - b.1).powi(2))
            .sum::<f64>()
            .sqrt();
        let combined_stderr = errs.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if format.csv() {
            let mut t = output::CsvTable::new(&["arm1", "arm2", "g2_experiment", "g2_theory", "difference"]);
            for (a, b) in exp.iter().zip(&th) {
                t.row([
                    a.0 .0.to_string(),
                    a.0 .1.to_string(),
                    float(a.1),
                    float(b.1),
                    float(a.1 - b.1),
                ]);
            }
            out.add("report_pairs.csv", t.into_bytes());
        }
        out.add_json(
            "report.json",
            &G2Report {
                pairs: exp.len(),
                distance,
                combined_stderr,
            },
        )?;
    }
    Ok(out)
}
