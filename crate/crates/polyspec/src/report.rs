//! Report documents: byte-stable JSON and CSV renderings of traces,
//! bench sweeps, planning decisions, and acceptance-statistics rows.
//!
//! Stability contract: rendering the same data twice yields identical
//! bytes. Struct fields serialize in declaration order, maps are
//! ordered, floats print in shortest round-trip form with a `.`
//! decimal separator, and lines end with LF.

use std::path::Path;

use serde::Serialize;

use crate::config::{Charset, PlanRoles, SCHEMA_VERSION};
use crate::engine::DecodeTrace;
use crate::error::Result;
use crate::planner::PlanReport;
use crate::stats::{AcceptanceStats, TruncGeomParams};

/// Serialize as pretty JSON with a trailing newline.
pub fn render_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Write a report, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Shortest round-trip decimal form, `.` separator.
fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn csv_line(fields: &[String]) -> String {
    let escaped: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
    let mut line = escaped.join(",");
    line.push('\n');
    line
}

/// Per-adjacency acceptance summary inside trace and bench reports.
#[derive(Debug, Clone, Serialize)]
pub struct AdjacencyReport {
    /// `"verifier->proposer"` by model id.
    pub adjacency: String,
    pub mean: f64,
    pub variance: f64,
    pub count: u64,
}

/// JSON document for one decode run.
#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub schema_version: u32,
    pub seed: u64,
    pub n_tokens: usize,
    pub models: Vec<String>,
    pub forward_passes: Vec<u64>,
    pub block_lengths: Vec<Vec<u32>>,
    pub acceptance: Vec<AdjacencyReport>,
    pub emitted: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitted_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim_time_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
}

/// Adjacency labels `"v->p"` for a chain's id list, strongest first.
pub fn adjacency_labels(model_ids: &[String]) -> Vec<String> {
    model_ids
        .windows(2)
        .map(|w| format!("{}->{}", w[0], w[1]))
        .collect()
}

impl TraceReport {
    pub fn from_trace(trace: &DecodeTrace, charset: Option<&Charset>) -> Result<TraceReport> {
        let labels = adjacency_labels(&trace.model_ids);
        let mut acceptance = Vec::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            let stats = crate::stats::empirical_acceptance_stats(trace, i)?;
            acceptance.push(AdjacencyReport {
                adjacency: label.clone(),
                mean: stats.mean,
                variance: stats.variance,
                count: stats.count,
            });
        }
        Ok(TraceReport {
            schema_version: SCHEMA_VERSION,
            seed: trace.seed,
            n_tokens: trace.emitted.len(),
            models: trace.model_ids.clone(),
            forward_passes: trace.forward_passes.clone(),
            block_lengths: trace.block_lengths.clone(),
            acceptance,
            emitted: trace.emitted.clone(),
            emitted_text: charset.map(|cs| cs.decode(&trace.emitted)),
            sim_time_ms: trace.sim_time,
            speedup: trace.speedup,
        })
    }
}

/// One (seed, rule) bench run.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub seed: u64,
    pub rule: String,
    pub n_tokens: usize,
    pub sim_time_ms: f64,
    pub speedup: f64,
    /// Aligned with the report's `models` list.
    pub forward_passes: Vec<u64>,
    /// Aligned with the report's `adjacencies` list.
    pub acceptance: Vec<AcceptanceStats>,
}

/// Numeric summary of one metric across a rule's runs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Unbiased standard deviation across seeds; 0 for a single run.
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MetricSummary { mean, std }
}

/// Per-rule aggregate across all seeds.
#[derive(Debug, Clone, Serialize)]
pub struct BenchAggregate {
    pub rule: String,
    pub runs: u64,
    pub sim_time_ms: MetricSummary,
    pub speedup: MetricSummary,
    pub forward_passes: Vec<MetricSummary>,
    pub acceptance_mean: Vec<MetricSummary>,
    pub acceptance_variance: Vec<MetricSummary>,
}

/// Full bench sweep: rows ordered by (seed, rule), one aggregate per
/// rule in command-line rule order.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub models: Vec<String>,
    pub adjacencies: Vec<String>,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<BenchAggregate>,
}

impl BenchReport {
    pub fn new(models: Vec<String>, rules: &[String], rows: Vec<BenchRow>) -> BenchReport {
        let adjacencies = adjacency_labels(&models);
        let aggregates = rules
            .iter()
            .map(|rule| {
                let of_rule: Vec<&BenchRow> =
                    rows.iter().filter(|r| &r.rule == rule).collect();
                let pick = |f: &dyn Fn(&BenchRow) -> f64| -> MetricSummary {
                    summarize(&of_rule.iter().map(|r| f(r)).collect::<Vec<f64>>())
                };
                BenchAggregate {
                    rule: rule.clone(),
                    runs: of_rule.len() as u64,
                    sim_time_ms: pick(&|r| r.sim_time_ms),
                    speedup: pick(&|r| r.speedup),
                    forward_passes: (0..models.len())
                        .map(|i| pick(&|r| r.forward_passes[i] as f64))
                        .collect(),
                    acceptance_mean: (0..adjacencies.len())
                        .map(|i| pick(&|r| r.acceptance[i].mean))
                        .collect(),
                    acceptance_variance: (0..adjacencies.len())
                        .map(|i| pick(&|r| r.acceptance[i].variance))
                        .collect(),
                }
            })
            .collect();
        BenchReport {
            schema_version: SCHEMA_VERSION,
            models,
            adjacencies,
            rows,
            aggregates,
        }
    }

    /// CSV rendering: header, one `run` row per (seed, rule), then one
    /// `aggregate` row per rule. Run rows leave the trailing `*_std`
    /// columns empty; aggregate rows leave `seed` empty and put means
    /// in the value columns.
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = ["kind", "seed", "rule", "n_tokens"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.push("sim_time_ms".into());
        header.push("speedup".into());
        for id in &self.models {
            header.push(format!("f_{id}"));
        }
        for adj in &self.adjacencies {
            header.push(format!("acc_mean_{adj}"));
        }
        for adj in &self.adjacencies {
            header.push(format!("acc_var_{adj}"));
        }
        header.push("sim_time_ms_std".into());
        header.push("speedup_std".into());
        for id in &self.models {
            header.push(format!("f_{id}_std"));
        }
        for adj in &self.adjacencies {
            header.push(format!("acc_mean_{adj}_std"));
        }
        for adj in &self.adjacencies {
            header.push(format!("acc_var_{adj}_std"));
        }
        let std_cols = 2 + self.models.len() + 2 * self.adjacencies.len();

        let mut out = csv_line(&header);
        for row in &self.rows {
            let mut fields: Vec<String> = vec![
                "run".into(),
                row.seed.to_string(),
                row.rule.clone(),
                row.n_tokens.to_string(),
                fmt_f64(row.sim_time_ms),
                fmt_f64(row.speedup),
            ];
            fields.extend(row.forward_passes.iter().map(|f| f.to_string()));
            fields.extend(row.acceptance.iter().map(|a| fmt_f64(a.mean)));
            fields.extend(row.acceptance.iter().map(|a| fmt_f64(a.variance)));
            fields.extend(std::iter::repeat_n(String::new(), std_cols));
            out.push_str(&csv_line(&fields));
        }
        for agg in &self.aggregates {
            let n_tokens = self
                .rows
                .iter()
                .find(|r| r.rule == agg.rule)
                .map_or(0, |r| r.n_tokens);
            let mut fields: Vec<String> = vec![
                "aggregate".into(),
                String::new(),
                agg.rule.clone(),
                n_tokens.to_string(),
                fmt_f64(agg.sim_time_ms.mean),
                fmt_f64(agg.speedup.mean),
            ];
            fields.extend(agg.forward_passes.iter().map(|m| fmt_f64(m.mean)));
            fields.extend(agg.acceptance_mean.iter().map(|m| fmt_f64(m.mean)));
            fields.extend(agg.acceptance_variance.iter().map(|m| fmt_f64(m.mean)));
            fields.push(fmt_f64(agg.sim_time_ms.std));
            fields.push(fmt_f64(agg.speedup.std));
            fields.extend(agg.forward_passes.iter().map(|m| fmt_f64(m.std)));
            fields.extend(agg.acceptance_mean.iter().map(|m| fmt_f64(m.std)));
            fields.extend(agg.acceptance_variance.iter().map(|m| fmt_f64(m.std)));
            out.push_str(&csv_line(&fields));
        }
        out
    }
}

/// JSON document for one insertion analysis.
#[derive(Debug, Serialize)]
pub struct PlanDocument {
    pub schema_version: u32,
    pub target: String,
    pub candidate: String,
    pub drafter: String,
    #[serde(flatten)]
    pub report: PlanReport,
}

impl PlanDocument {
    pub fn new(roles: &PlanRoles, report: PlanReport) -> PlanDocument {
        PlanDocument {
            schema_version: SCHEMA_VERSION,
            target: roles.target.clone(),
            candidate: roles.candidate.clone(),
            drafter: roles.drafter.clone(),
            report,
        }
    }
}

/// One acceptance-statistics comparison row. `var_formula` is the
/// closed-form expression's value, reported beside the oracle so any
/// disagreement is visible in the artifact itself.
pub struct StatsRow {
    pub params: TruncGeomParams,
    pub e_closed: f64,
    pub e_oracle: f64,
    pub var_oracle: f64,
    pub var_formula: f64,
    pub mc: AcceptanceStats,
    pub seed: u64,
}

pub const STATS_CSV_HEADER: &str =
    "p,n,e_closed,e_oracle,var_oracle,var_formula,mc_mean,mc_var,trials,seed\n";

impl StatsRow {
    pub fn compute(params: TruncGeomParams, trials: u64, seed: u64) -> Result<StatsRow> {
        let pmf = crate::stats::trunc_geom_pmf_all(&params);
        let e_oracle: f64 = pmf
            .iter()
            .enumerate()
            .map(|(i, &m)| (i + 1) as f64 * m)
            .sum();
        Ok(StatsRow {
            params,
            e_closed: crate::stats::expected_acceptance(&params),
            e_oracle,
            var_oracle: crate::stats::variance_acceptance_oracle(&params),
            var_formula: crate::stats::variance_formula(params.alpha(), params.n)?,
            mc: crate::stats::monte_carlo_acceptance(&params, trials, seed)?,
            seed,
        })
    }

    pub fn to_csv(&self) -> String {
        let fields = vec![
            fmt_f64(self.params.p),
            self.params.n.to_string(),
            fmt_f64(self.e_closed),
            fmt_f64(self.e_oracle),
            fmt_f64(self.var_oracle),
            fmt_f64(self.var_formula),
            fmt_f64(self.mc.mean),
            fmt_f64(self.mc.variance),
            self.mc.count.to_string(),
            self.seed.to_string(),
        ];
        let mut out = STATS_CSV_HEADER.to_string();
        out.push_str(&csv_line(&fields));
        out
    }
}

/// Render emitted tokens for the terminal: text when a charset is
/// configured, otherwise the id list.
pub fn render_tokens(tokens: &[u32], charset: Option<&Charset>) -> String {
    match charset {
        Some(cs) => cs.decode(tokens),
        None => {
            let ids: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
            format!("[{}]", ids.join(","))
        }
    }
}
