use std::fs;
use std::path::{Path, PathBuf};

use kettlewatch_core::experiments::{self, ExperimentReport, Scenario};
use log::{debug, info};

use crate::config::{apply_overrides, parse_document, parse_schema, resolve};
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.csv";
pub const SERIES_HEADER: [&str; 4] = ["n", "p_discrete", "op_error", "p_closed_form"];

#[derive(Clone, Debug)]
pub struct RunManifest {
    pub config: PathBuf,
    pub out: PathBuf,
    pub scenario: Scenario,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    let unwritable = |e: std::io::Error| CliError::validation(format!("output directory {} is not writable: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".kettlewatch-probe");
    fs::write(&probe, b"").map_err(unwritable)?;
    fs::remove_file(&probe).map_err(unwritable)
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any f64.
fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn series_csv(report: &ExperimentReport) -> Result<Vec<u8>, CliError> {
    let fail = |e: csv::Error| CliError::validation(format!("writing series: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SERIES_HEADER).map_err(fail)?;
    for row in &report.series {
        w.write_record([row.n.to_string(), sci(row.p_discrete), sci(row.op_error), sci(row.p_closed_form)])
            .map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::validation(format!("writing series: {e}")))
}

pub fn report_json(report: &ExperimentReport) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::quality(format!("serializing report: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Loads the config, runs the scenario and writes both output files.
pub fn dispatch(manifest: &RunManifest) -> Result<ExperimentReport, CliError> {
    let text = fs::read_to_string(&manifest.config)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", manifest.config.display())))?;
    let mut doc = parse_document(&text)?;
    apply_overrides(&mut doc, &manifest.overrides)?;
    if let Some(seed) = manifest.seed {
        apply_overrides(&mut doc, &[format!("seed={seed}")])?;
    }
    let config = resolve(parse_schema(doc)?)?;
    debug!("resolved config: dim {}, t1 {}, t {}, n_list {:?}", config.dim(), config.t1, config.t, config.n_list);
    prepare_out_dir(&manifest.out)?;

    let report = experiments::run(&config, manifest.scenario).map_err(|e| {
        let err = CliError::from_core(e);
        if err.code == crate::EXIT_QUALITY {
            CliError::quality(format!("{}; advisory: reduce ode.step and rerun", err.message))
        } else {
            err
        }
    })?;
    for t in &report.timings {
        info!("{} took {:.3} s", t.label, t.seconds);
    }

    let write = |name: &str, bytes: &[u8]| {
        let path = manifest.out.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
    };
    write(REPORT_FILE, report_json(&report)?.as_bytes())?;
    write(SERIES_FILE, &series_csv(&report)?)?;
    info!("wrote {} and {} to {}", REPORT_FILE, SERIES_FILE, manifest.out.display());
    Ok(report)
}
