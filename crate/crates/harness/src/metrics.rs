//! Round-level episode logs and run-level summaries, written as CSV.
//!
//! The column lists are read from the schema files under `schema/`, so the
//! header written is exactly the documented one.

use std::io::Write;

use anyhow::{ensure, Result};

pub const EPISODE_SCHEMA: &str = include_str!("../schema/episode_log.tsv");
pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.tsv");
/// Keys of a plot spec read by the external renderer.
pub const PLOT_SCHEMA: &str = include_str!("../schema/plot_spec.tsv");

const SIGNIFICANT_DIGITS: i32 = 12;

/// Column names of a schema file (first field of every line after the header).
pub fn schema_columns(schema: &str) -> Vec<&str> {
    schema
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').next().unwrap_or(""))
        .collect()
}

/// A real with 12 significant digits, trailing zeros trimmed. Very large or
/// very small magnitudes switch to exponent notation.
pub fn fmt_real(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exponent = v.abs().log10().floor() as i32;
    if !(-6..15).contains(&exponent) {
        return format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, v);
    }
    let decimals = (SIGNIFICANT_DIGITS - 1 - exponent).max(0) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Checks a plot spec against its schema: known keys only, every required
/// key present, and the plotted columns present in the episode log.
pub fn check_plot_spec(text: &str) -> Result<()> {
    let entries = crate::config::parse_entries(text, &["plot"])?;
    let keys = schema_columns(PLOT_SCHEMA);
    let columns = schema_columns(EPISODE_SCHEMA);
    let get = |k: &str| entries.iter().find(|e| e.key == k).map(|e| e.value.as_str());
    for e in &entries {
        ensure!(e.section == "plot", "line {}: keys belong in [plot]", e.line);
        ensure!(keys.contains(&e.key.as_str()), "line {}: unknown plot key `{}`", e.line, e.key);
    }
    for k in keys.iter().filter(|k| **k != "reference") {
        ensure!(get(k).is_some(), "missing plot key `{k}`");
    }
    let metric = get("metric").unwrap_or_default();
    if metric == "gap" {
        ensure!(get("reference").is_some(), "metric = gap needs a reference method");
    } else {
        ensure!(columns.contains(&metric), "metric `{metric}` is not an episode log column");
    }
    let group = get("group_by").unwrap_or_default();
    ensure!(columns.contains(&group), "group_by `{group}` is not an episode log column");
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub episode: usize,
    pub round: usize,
    pub active_agents: usize,
    pub active_targets: usize,
    pub utility: f64,
    pub opt: Option<f64>,
    pub inst_regret: Option<f64>,
    pub cum_utility: f64,
    pub cum_regret: Option<f64>,
}

impl EpisodeRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.method.clone(),
            self.seed.to_string(),
            self.episode.to_string(),
            self.round.to_string(),
            self.active_agents.to_string(),
            self.active_targets.to_string(),
            fmt_real(self.utility),
            fmt_opt(self.opt),
            fmt_opt(self.inst_regret),
            fmt_real(self.cum_utility),
            fmt_opt(self.cum_regret),
        ]
    }
}

/// Builds the rows of one episode from per-round utilities and optional
/// optima, accumulating within the episode.
pub struct EpisodeAccumulator {
    cum_utility: f64,
    cum_regret: Option<f64>,
    round: usize,
}

impl EpisodeAccumulator {
    pub fn new() -> Self {
        Self {
            cum_utility: 0.0,
            cum_regret: Some(0.0),
            round: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        run_id: &str,
        method: &str,
        seed: u64,
        episode: usize,
        active_agents: usize,
        active_targets: usize,
        utility: f64,
        opt: Option<f64>,
    ) -> EpisodeRow {
        let inst_regret = opt.map(|o| 0.5 * o - utility);
        self.cum_utility += utility;
        self.cum_regret = match (self.cum_regret, inst_regret) {
            (Some(c), Some(r)) => Some(c + r),
            _ => None,
        };
        let row = EpisodeRow {
            run_id: run_id.to_string(),
            method: method.to_string(),
            seed,
            episode,
            round: self.round,
            active_agents,
            active_targets,
            utility,
            opt,
            inst_regret,
            cum_utility: self.cum_utility,
            cum_regret: self.cum_regret,
        };
        self.round += 1;
        row
    }
}

impl Default for EpisodeAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

pub fn write_episode_log<W: Write>(out: W, rows: &[EpisodeRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(schema_columns(EPISODE_SCHEMA))?;
    for r in rows {
        let fields = r.fields();
        ensure!(fields.len() == schema_columns(EPISODE_SCHEMA).len(), "episode row does not match the schema");
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run_id: String,
    pub method: String,
    pub env: String,
    pub seed: u64,
    pub episodes: usize,
    pub horizon: usize,
    pub mean_return: f64,
    pub final_return: f64,
    pub final_cum_regret: Option<f64>,
}

impl SummaryRow {
    /// Summarizes one run's episode log.
    pub fn from_rows(env: &str, horizon: usize, rows: &[EpisodeRow]) -> Option<Self> {
        let first = rows.first()?;
        let mut finals: Vec<&EpisodeRow> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if rows.get(i + 1).is_none_or(|n| n.episode != r.episode) {
                finals.push(r);
            }
        }
        let last = finals.last()?;
        Some(Self {
            run_id: first.run_id.clone(),
            method: first.method.clone(),
            env: env.to_string(),
            seed: first.seed,
            episodes: finals.len(),
            horizon,
            mean_return: finals.iter().map(|r| r.cum_utility).sum::<f64>() / finals.len() as f64,
            final_return: last.cum_utility,
            final_cum_regret: last.cum_regret,
        })
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.method.clone(),
            self.env.clone(),
            self.seed.to_string(),
            self.episodes.to_string(),
            self.horizon.to_string(),
            fmt_real(self.mean_return),
            fmt_real(self.final_return),
            fmt_opt(self.final_cum_regret),
        ]
    }
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(schema_columns(SUMMARY_SCHEMA))?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Plain-text summary: means ± std across seeds.
pub fn summary_text(rows: &[SummaryRow]) -> String {
    let Some(first) = rows.first() else {
        return "no runs\n".into();
    };
    let mean_returns: Vec<f64> = rows.iter().map(|r| r.mean_return).collect();
    let finals: Vec<f64> = rows.iter().map(|r| r.final_return).collect();
    let (m, s) = mean_std(&mean_returns);
    let (fm, fs) = mean_std(&finals);
    let mut text = format!(
        "run {}: method {} on {}, {} seed(s), {} episode(s) of {} round(s)\n",
        first.run_id,
        first.method,
        first.env,
        rows.len(),
        first.episodes,
        first.horizon
    );
    text += &format!("mean episode return   {} ± {}\n", fmt_real(m), fmt_real(s));
    text += &format!("final episode return  {} ± {}\n", fmt_real(fm), fmt_real(fs));
    let regrets: Option<Vec<f64>> = rows.iter().map(|r| r.final_cum_regret).collect();
    if let Some(regrets) = regrets {
        let (rm, rs) = mean_std(&regrets);
        text += &format!("final cumulative regret {} ± {}\n", fmt_real(rm), fmt_real(rs));
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting() {
        assert_eq!(fmt_real(0.0), "0");
        assert_eq!(fmt_real(-0.0), "0");
        assert_eq!(fmt_real(1.5), "1.5");
        assert_eq!(fmt_real(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_real(2.0 / 3.0 * 100.0), "66.6666666667");
        assert_eq!(fmt_real(437.0), "437");
        assert_eq!(fmt_real(-0.125), "-0.125");
        assert_eq!(fmt_real(1e-9), "1.00000000000e-9");
        let parsed: f64 = fmt_real(std::f64::consts::PI).parse().unwrap();
        assert!((parsed - std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn header_matches_schema() {
        let mut buf = Vec::new();
        write_episode_log(&mut buf, &[]).unwrap();
        let header = String::from_utf8(buf).unwrap();
        assert_eq!(
            header.trim_end(),
            "run_id,method,seed,episode,round,active_agents,active_targets,utility,opt,inst_regret,cum_utility,cum_regret"
        );
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), schema_columns(SUMMARY_SCHEMA).join(","));
    }

    #[test]
    fn shipped_plot_specs_match_the_schemas() {
        for spec in [
            include_str!("../configs/coverage_gap.plot"),
            include_str!("../configs/coverage_cumulative.plot"),
        ] {
            check_plot_spec(spec).unwrap();
        }
        assert!(check_plot_spec("[plot]\nmetric = reward\n").is_err());
        let bad_column = include_str!("../configs/coverage_cumulative.plot").replace("cum_utility", "return");
        assert!(check_plot_spec(&bad_column).unwrap_err().to_string().contains("`return`"));
    }

    #[test]
    fn accumulation_within_episode() {
        let mut acc = EpisodeAccumulator::new();
        let a = acc.push("r", "m", 0, 0, 2, 0, 1.0, Some(4.0));
        let b = acc.push("r", "m", 0, 0, 2, 0, 2.0, Some(4.0));
        assert_eq!((a.round, b.round), (0, 1));
        assert_eq!(b.cum_utility, 3.0);
        assert_eq!(b.cum_regret, Some(1.0));
        let c = acc.push("r", "m", 0, 0, 2, 0, 2.0, None);
        assert_eq!(c.cum_regret, None);
        assert_eq!(fmt_opt(c.inst_regret), "");
    }

    #[test]
    fn summary_of_rows() {
        let mut rows = Vec::new();
        for episode in 0..2 {
            let mut acc = EpisodeAccumulator::new();
            for _ in 0..3 {
                rows.push(acc.push("r", "m", 5, episode, 1, 0, 1.0 + episode as f64, None));
            }
        }
        let s = SummaryRow::from_rows("bandit", 3, &rows).unwrap();
        assert_eq!((s.episodes, s.final_return, s.mean_return), (2, 6.0, 4.5));
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
    }
}
