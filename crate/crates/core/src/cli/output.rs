//! CSV traces and the JSON summary of a run, and reading them back.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::intercluster_sync::ModeCause;
use crate::metrics::{analyze, Analysis, AuditContext, Condition, Counters, RoundRecord, RunData, Sample};
use crate::params::ParamsReport;

pub const SKEW_TRACE: &str = "skew_trace.csv";
pub const ROUNDS: &str = "rounds.csv";
pub const MODES: &str = "modes.csv";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: malformed row: {why}")]
    Malformed { path: String, why: String },
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub passed: bool,
    pub params: ParamsReport,
    pub context: AuditContext,
    pub counters: Counters,
    pub analysis: Analysis,
}

impl Summary {
    pub fn new(name: &str, run: &RunData, context: &AuditContext) -> Self {
        let analysis = analyze(run, context);
        Self {
            name: name.to_string(),
            passed: analysis.passed,
            params: ParamsReport::from(&context.derived),
            context: context.clone(),
            counters: run.counters.clone(),
            analysis,
        }
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.display().to_string(), source }
}

fn write_csv(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(&header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn trace_header(ctx: &AuditContext) -> Vec<String> {
    let mut h: Vec<String> = ["t", "global_skew", "lmax", "min_m"].map(String::from).to_vec();
    h.extend((0..ctx.clusters).map(|c| format!("intra_{c}")));
    h.extend(ctx.edges.iter().map(|(a, b)| format!("edge_{a}_{b}")));
    h.extend(["m_excess", "node_local", "est_err", "min_round"].map(String::from));
    h
}

const ROUND_HEADER: [&str; 19] = [
    "node",
    "cluster",
    "index",
    "round",
    "t_start",
    "l_start",
    "pulse",
    "delta_r",
    "multiplier",
    "proper",
    "gamma",
    "cause",
    "s",
    "ft",
    "st",
    "m",
    "cluster_clock",
    "t_end",
    "nominal",
];

/// Writes the three CSV traces and `summary.json` into `dir`.
pub fn write_run(dir: &Path, run: &RunData, summary: &Summary) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ctx = &summary.context;
    write_csv(
        &dir.join(SKEW_TRACE),
        trace_header(ctx),
        run.samples.iter().map(|s| {
            let mut row = vec![s.t.to_string(), s.global_skew.to_string(), s.lmax.to_string(), s.min_m.to_string()];
            row.extend(s.intra.iter().map(f64::to_string));
            row.extend(s.edge_skew.iter().map(f64::to_string));
            row.extend([s.m_excess.to_string(), s.node_local.to_string(), opt(s.est_err), s.min_round.to_string()]);
            row
        }),
    )?;
    write_csv(
        &dir.join(ROUNDS),
        ROUND_HEADER.map(String::from).to_vec(),
        run.rounds.iter().map(|r| {
            vec![
                r.node.to_string(),
                r.cluster.to_string(),
                r.index.to_string(),
                r.round.to_string(),
                r.t_start.to_string(),
                r.l_start.to_string(),
                opt(r.pulse),
                opt(r.delta_r),
                opt(r.multiplier),
                u8::from(r.proper).to_string(),
                r.gamma.to_string(),
                r.cause.as_str().to_string(),
                opt(r.s),
                u8::from(r.ft).to_string(),
                u8::from(r.st).to_string(),
                r.m.to_string(),
                r.cluster_clock.to_string(),
                opt(r.t_end),
                opt(r.nominal),
            ]
        }),
    )?;
    write_csv(
        &dir.join(MODES),
        ["t", "cluster", "cluster_clock", "condition", "fast_members"].map(String::from).to_vec(),
        run.samples.iter().flat_map(|s| {
            (0..s.cluster_clocks.len()).map(move |c| {
                vec![
                    s.t.to_string(),
                    c.to_string(),
                    s.cluster_clocks[c].to_string(),
                    s.conditions[c].code(),
                    s.fast_members[c].to_string(),
                ]
            })
        }),
    )?;
    write_summary(dir, summary)
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), OutputError> {
    let path = dir.join(SUMMARY);
    let mut text = serde_json::to_string_pretty(summary)
        .map_err(|source| OutputError::Json { path: path.display().to_string(), source })?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// The parts of a summary needed to re-derive it.
#[derive(Debug, Clone, Deserialize)]
pub struct SummaryInputs {
    pub name: String,
    pub context: AuditContext,
    pub counters: Counters,
}

pub fn read_summary(dir: &Path) -> Result<SummaryInputs, OutputError> {
    let path = dir.join(SUMMARY);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| OutputError::Json { path: path.display().to_string(), source })
}

struct Rows {
    path: String,
    rows: Vec<csv::StringRecord>,
}

impl Rows {
    fn read(path: &Path) -> Result<Self, OutputError> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
        let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(csv_err(path))?;
        Ok(Self { path: path.display().to_string(), rows })
    }

    fn bad(&self, why: impl Into<String>) -> OutputError {
        OutputError::Malformed { path: self.path.clone(), why: why.into() }
    }
}

fn field<T: std::str::FromStr>(rows: &Rows, rec: &csv::StringRecord, i: usize) -> Result<T, OutputError> {
    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| rows.bad(format!("column {i}")))
}

fn opt_field<T: std::str::FromStr>(rows: &Rows, rec: &csv::StringRecord, i: usize) -> Result<Option<T>, OutputError> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rows, rec, i).map(Some),
    }
}

fn flag(rows: &Rows, rec: &csv::StringRecord, i: usize) -> Result<bool, OutputError> {
    field::<u8>(rows, rec, i).map(|x| x != 0)
}

/// Rebuilds the run output from the CSV traces in `dir`; counters come
/// from the existing summary.
pub fn read_run(dir: &Path, summary: &SummaryInputs) -> Result<RunData, OutputError> {
    let ctx = &summary.context;
    let (nc, ne) = (ctx.clusters, ctx.edges.len());
    let trace = Rows::read(&dir.join(SKEW_TRACE))?;
    let modes = Rows::read(&dir.join(MODES))?;
    if modes.rows.len() != trace.rows.len() * nc {
        return Err(modes.bad("row count does not match the skew trace"));
    }
    let mut samples = Vec::with_capacity(trace.rows.len());
    for (i, rec) in trace.rows.iter().enumerate() {
        if rec.len() != 8 + nc + ne {
            return Err(trace.bad(format!("expected {} columns, found {}", 8 + nc + ne, rec.len())));
        }
        let col = |j| field::<f64>(&trace, rec, j);
        let intra = (0..nc).map(|c| col(4 + c)).collect::<Result<_, _>>()?;
        let edge_skew = (0..ne).map(|e| col(4 + nc + e)).collect::<Result<_, _>>()?;
        let tail = 4 + nc + ne;
        let mut cluster_clocks = Vec::with_capacity(nc);
        let mut conditions = Vec::with_capacity(nc);
        let mut fast_members = Vec::with_capacity(nc);
        for m in &modes.rows[i * nc..(i + 1) * nc] {
            cluster_clocks.push(field(&modes, m, 2)?);
            let code = m.get(3).unwrap_or_default();
            conditions.push(Condition::parse(code).ok_or_else(|| modes.bad(format!("condition {code:?}")))?);
            fast_members.push(field(&modes, m, 4)?);
        }
        samples.push(Sample {
            t: col(0)?,
            global_skew: col(1)?,
            lmax: col(2)?,
            min_m: col(3)?,
            intra,
            edge_skew,
            m_excess: col(tail)?,
            node_local: col(tail + 1)?,
            est_err: opt_field(&trace, rec, tail + 2)?,
            min_round: field(&trace, rec, tail + 3)?,
            cluster_clocks,
            conditions,
            fast_members,
        });
    }
    let rr = Rows::read(&dir.join(ROUNDS))?;
    let mut rounds = Vec::with_capacity(rr.rows.len());
    for rec in &rr.rows {
        let cause = rec.get(11).and_then(ModeCause::parse).ok_or_else(|| rr.bad("cause"))?;
        rounds.push(RoundRecord {
            node: field(&rr, rec, 0)?,
            cluster: field(&rr, rec, 1)?,
            index: field(&rr, rec, 2)?,
            round: field(&rr, rec, 3)?,
            t_start: field(&rr, rec, 4)?,
            l_start: field(&rr, rec, 5)?,
            pulse: opt_field(&rr, rec, 6)?,
            delta_r: opt_field(&rr, rec, 7)?,
            multiplier: opt_field(&rr, rec, 8)?,
            proper: flag(&rr, rec, 9)?,
            gamma: field(&rr, rec, 10)?,
            cause,
            s: opt_field(&rr, rec, 12)?,
            ft: flag(&rr, rec, 13)?,
            st: flag(&rr, rec, 14)?,
            m: field(&rr, rec, 15)?,
            cluster_clock: field(&rr, rec, 16)?,
            t_end: opt_field(&rr, rec, 17)?,
            nominal: opt_field(&rr, rec, 18)?,
        });
    }
    Ok(RunData { samples, rounds, counters: summary.counters.clone() })
}
