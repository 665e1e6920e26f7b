//! Command bodies and their text, JSON and CSV renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use npiv_core::sim::{
    reproduce, run_experiment_with_records, with_jobs, CellSummary, ExperimentSpec, McSummary,
    ReplicateRecord, ReproduceOptions, TableId, TestKind,
};
use npiv_core::stat::{image_space_test, Candidate, CsReport, Scan, TestReport};
use serde::{Deserialize, Serialize};

use crate::config::{GridSpec, RunConfig, ConfigFlags, SCHEMA_VERSION};
use crate::data::read_data;
use crate::{CliError, Format, VERSION};

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    version: &'static str,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    #[serde(flatten)]
    body: T,
}

fn envelope<'a, T: Serialize>(command: &'static str, config: Option<&'a RunConfig>, body: T) -> Envelope<'a, T> {
    Envelope {
        schema_version: SCHEMA_VERSION,
        version: VERSION,
        command,
        config,
        body,
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::numerical(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut so = std::io::stdout().lock();
            // A closed pipe is not worth a failure exit.
            let _ = so.write_all(text.as_bytes());
            let _ = so.flush();
            Ok(())
        }
    }
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::numerical(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::numerical(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::numerical(format!("csv: {e}")))
}

fn fmt_w(w: f64) -> String {
    if w.is_finite() {
        format!("{w:.4}")
    } else {
        "inf".into()
    }
}

// ---------------------------------------------------------------------------
// test

#[derive(Serialize)]
struct TestBody<'a> {
    report: &'a TestReport,
}

pub fn cmd_test(data: &Path, flags: &ConfigFlags, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(flags)?;
    let sample = read_data(data)?;
    let tc = cfg.test_config();
    let null = cfg.null.hypothesis();
    log::info!("testing {} on n = {} with {}", null.name(), sample.n(), cfg.basis);
    let report = match cfg.test {
        TestKind::Structural => Scan::new(&sample, &null, &tc)?.decide(cfg.alpha)?,
        TestKind::Image => image_space_test(&sample, &null, cfg.alpha, &tc)?,
    };
    let text = match format {
        Format::Json => to_json(&envelope("test", Some(&cfg), TestBody { report: &report }))?,
        Format::Csv => csv_string(&report.per_j)?,
        Format::Text => test_text(&report),
    };
    emit(&text, out)
}

pub fn test_text(r: &TestReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} test of H0: h is {} (n = {}, alpha = {})", r.test, r.null, r.n, r.alpha);
    let _ = writeln!(s, "{:>5} {:>5} {:>12} {:>5} {:>10} {:>10}  reject", "J", "K", "W", "gamma", "eta", "p");
    for e in &r.per_j {
        let _ = writeln!(
            s,
            "{:>5} {:>5} {:>12} {:>5} {:>10.4} {:>10.4}  {}",
            e.j,
            e.k,
            fmt_w(e.w),
            e.gamma,
            e.eta,
            e.p_value,
            if e.reject { "yes" } else { "no" }
        );
    }
    let _ = writeln!(s, "decision: {}", if r.reject { "reject H0" } else { "do not reject H0" });
    let _ = writeln!(s, "selected J: {:?}, reported J = {}", r.j_selected, r.j_reported);
    let _ = writeln!(s, "max W = {}", fmt_w(r.max_w));
    let _ = writeln!(s, "p-value = {:.4} (reject when below {:.4})", r.p_value, r.p_threshold);
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

// ---------------------------------------------------------------------------
// cs

#[derive(Debug, Clone, Deserialize)]
pub struct NamedCandidate {
    pub name: String,
    #[serde(flatten)]
    pub candidate: Candidate,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    pub candidates: Vec<NamedCandidate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateResult {
    pub name: String,
    #[serde(flatten)]
    pub report: CsReport,
}

#[derive(Serialize)]
struct CsBody<'a> {
    null: String,
    alpha: f64,
    n: usize,
    candidates: &'a [CandidateResult],
}

pub fn load_candidates(path: &Path) -> Result<CandidateFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let file: CandidateFile =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if file.candidates.is_empty() {
        return Err(CliError::input(format!("{}: no candidates", path.display())));
    }
    Ok(file)
}

pub fn cmd_cs(
    data: &Path,
    candidates: &Path,
    flags: &ConfigFlags,
    format: Format,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(flags)?;
    if cfg.test != TestKind::Structural {
        return Err(CliError::input("confidence sets use the structural test"));
    }
    let sample = read_data(data)?;
    let file = load_candidates(candidates)?;
    let null = cfg.null.hypothesis();
    let scan = Scan::new(&sample, &null, &cfg.test_config())?;
    let mut results = Vec::with_capacity(file.candidates.len());
    for c in &file.candidates {
        let report = scan
            .cs_check_candidate(&c.candidate, &sample, &null, cfg.alpha)
            .map_err(|e| CliError::from(e).prefixed(&format!("candidate '{}'", c.name)))?;
        results.push(CandidateResult {
            name: c.name.clone(),
            report,
        });
    }
    let text = match format {
        Format::Json => to_json(&envelope(
            "cs",
            Some(&cfg),
            CsBody {
                null: null.name(),
                alpha: cfg.alpha,
                n: sample.n(),
                candidates: &results,
            },
        ))?,
        Format::Csv => {
            #[derive(Serialize)]
            struct Row<'a> {
                name: &'a str,
                contained: bool,
                binding_j: usize,
                max_ratio: f64,
            }
            let rows: Vec<Row> = results
                .iter()
                .map(|r| Row {
                    name: &r.name,
                    contained: r.report.contained,
                    binding_j: r.report.binding_j,
                    max_ratio: max_ratio(&r.report),
                })
                .collect();
            csv_string(&rows)?
        }
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "confidence set for h under H0: h is {} (n = {}, level {})",
                null.name(),
                sample.n(),
                1.0 - cfg.alpha
            );
            let _ = writeln!(s, "{:<20} {:>9} {:>9} {:>12}", "candidate", "contained", "binding J", "max ratio");
            for r in &results {
                let _ = writeln!(
                    s,
                    "{:<20} {:>9} {:>9} {:>12}",
                    r.name,
                    if r.report.contained { "yes" } else { "no" },
                    r.report.binding_j,
                    fmt_w(max_ratio(&r.report))
                );
            }
            s
        }
    };
    emit(&text, out)
}

fn max_ratio(r: &CsReport) -> f64 {
    r.ratios.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max)
}

impl CliError {
    fn prefixed(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct SimBody<'a> {
    spec: &'a ExperimentSpec,
    summary: &'a McSummary,
}

#[derive(Serialize)]
struct CellRow<'a> {
    name: &'a str,
    design: String,
    n: usize,
    xi: f64,
    h: String,
    k_factor: usize,
    alpha: f64,
    rejection_rate: f64,
    se: f64,
    avg_j_hat: f64,
    replications: usize,
    failures: usize,
    critical_value: Option<f64>,
    seconds: f64,
}

fn compact<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default().trim_matches('"').to_string()
}

fn cell_rows<'a>(s: &'a McSummary) -> Vec<CellRow<'a>> {
    s.cells
        .iter()
        .map(|c: &CellSummary| CellRow {
            name: &s.name,
            design: compact(&c.design),
            n: c.n,
            xi: c.xi,
            h: c.h.to_string(),
            k_factor: c.k_factor,
            alpha: c.alpha,
            rejection_rate: c.rejection_rate,
            se: c.se,
            avg_j_hat: c.avg_j_hat,
            replications: c.replications,
            failures: c.failures,
            critical_value: c.critical_value,
            seconds: c.seconds,
        })
        .collect()
}

pub fn summary_text(s: &McSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{}: {} replications per cell, master seed {}, {:.1} s",
        s.name, s.metadata.replications, s.metadata.master_seed, s.metadata.elapsed_seconds
    );
    let _ = writeln!(
        t,
        "{:>6} {:>6} {:<28} {:>6} {:>8} {:>7} {:>7} {:>5}",
        "n", "xi", "h", "alpha", "rate", "se", "avg J", "fail"
    );
    for c in &s.cells {
        let _ = writeln!(
            t,
            "{:>6} {:>6} {:<28} {:>6} {:>8.3} {:>7.3} {:>7.2} {:>5}",
            c.n,
            c.xi,
            c.h.to_string(),
            c.alpha,
            c.rejection_rate,
            c.se,
            c.avg_j_hat,
            c.failures
        );
    }
    if let Some(a) = &s.metadata.size_adjustment {
        let _ = writeln!(t, "size adjustment: {a}");
    }
    t
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_simulate(
    spec_path: &Path,
    reps: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    let mut spec = load_spec(spec_path)?;
    if let Some(r) = reps {
        spec.replications = r;
    }
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    spec.validate()?;
    log::info!("simulating '{}' with {} replications", spec.name, spec.replications);
    let (summary, records): (McSummary, Vec<ReplicateRecord>) =
        with_jobs(jobs, || run_experiment_with_records(&spec))??;
    let json = to_json(&envelope(
        "simulate",
        None,
        SimBody {
            spec: &spec,
            summary: &summary,
        },
    ))?;
    match out {
        Some(prefix) => {
            emit(&json, Some(&with_suffix(prefix, ".json")))?;
            emit(&csv_string(&cell_rows(&summary))?, Some(&with_suffix(prefix, ".csv")))?;
            emit(&csv_string(&records)?, Some(&with_suffix(prefix, ".replicates.csv")))?;
            Ok(())
        }
        None => {
            let text = match format {
                Format::Json => json,
                Format::Csv => csv_string(&cell_rows(&summary))?,
                Format::Text => summary_text(&summary),
            };
            emit(&text, None)
        }
    }
}

// ---------------------------------------------------------------------------
// reproduce

#[derive(Serialize)]
struct ReproduceBody<'a> {
    table: &'a npiv_core::sim::ReproducedTable,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_reproduce(
    id: &str,
    reps: usize,
    seed: u64,
    jobs: Option<usize>,
    ns: Option<Vec<usize>>,
    grid: GridSpec,
    format: Format,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let id: TableId = id.parse()?;
    if reps == 0 {
        return Err(CliError::input("--reps must be at least 1"));
    }
    let opts = ReproduceOptions {
        replications: reps,
        master_seed: seed,
        ns,
        grid: grid.0,
    };
    log::info!("reproducing {} with {} replications", id.as_str(), reps);
    let table = with_jobs(jobs, || reproduce(id, &opts))??;
    let text = match format {
        Format::Json => to_json(&envelope("reproduce", None, ReproduceBody { table: &table }))?,
        Format::Csv => table.to_csv(),
        Format::Text => table.to_text(),
    };
    emit(&text, out)
}
