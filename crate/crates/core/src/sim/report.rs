//! Episode metrics and the per-suite results table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EpisodeResult, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Collision avoidance rate: fraction of episodes without any collision.
    pub car: f64,
    /// Task success rate.
    pub tsr: f64,
    /// Execution time steps, averaged over all episodes including timeouts.
    pub ets: f64,
    pub episodes: usize,
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics, SimError> {
    if results.is_empty() {
        return Err(SimError::EmptyResults);
    }
    let n = results.len() as f64;
    let free = results.iter().filter(|r| !r.collided).count();
    let ok = results.iter().filter(|r| r.succeeded).count();
    let steps: usize = results.iter().map(|r| r.steps).sum();
    Ok(Metrics {
        car: free as f64 / n,
        tsr: ok as f64 / n,
        ets: steps as f64 / n,
        episodes: results.len(),
    })
}

/// Results of one method (filter on or off) per suite.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodBlock {
    pub method: String,
    pub suites: BTreeMap<String, Metrics>,
}

/// Groups `(suite, result)` pairs by suite and aggregates each group.
pub fn method_block(method: &str, results: &[(String, EpisodeResult)]) -> Result<MethodBlock, SimError> {
    let mut grouped: BTreeMap<String, Vec<EpisodeResult>> = BTreeMap::new();
    for (suite, r) in results {
        grouped.entry(suite.clone()).or_default().push(*r);
    }
    if grouped.is_empty() {
        return Err(SimError::EmptyResults);
    }
    let suites = grouped
        .into_iter()
        .map(|(k, v)| compute_metrics(&v).map(|m| (k, m)))
        .collect::<Result<_, _>>()?;
    Ok(MethodBlock {
        method: method.to_string(),
        suites,
    })
}

/// Table layout: one block of CAR/TSR/ETS rows per method, one column per
/// suite, and an average column (mean of the suite columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTable {
    pub suites: Vec<String>,
    pub blocks: Vec<MethodBlock>,
}

const METRICS: [&str; 3] = ["CAR", "TSR", "ETS"];

fn cell(metric: &str, m: &Metrics) -> f64 {
    match metric {
        "CAR" => m.car * 100.0,
        "TSR" => m.tsr * 100.0,
        _ => m.ets,
    }
}

impl SuiteTable {
    /// Rows of `[method, metric, suite values..., average]` as printed.
    pub fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for block in &self.blocks {
            for metric in METRICS {
                let vals: Vec<f64> = self
                    .suites
                    .iter()
                    .map(|s| block.suites.get(s).map_or(f64::NAN, |m| cell(metric, m)))
                    .collect();
                let avg = vals.iter().sum::<f64>() / vals.len() as f64;
                let fmt = |v: f64| {
                    if metric == "ETS" {
                        format!("{v:.2}")
                    } else {
                        format!("{v:.2}%")
                    }
                };
                let mut row = vec![block.method.clone(), metric.to_string()];
                row.extend(vals.iter().map(|&v| fmt(v)));
                row.push(fmt(avg));
                rows.push(row);
            }
        }
        rows
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["Method".to_string(), "Metric".to_string()];
        h.extend(self.suites.iter().map(|s| capitalize(s)));
        h.push("Average".into());
        h
    }

    /// Aligned plain-text table.
    pub fn render(&self) -> String {
        let mut all = vec![self.header()];
        all.extend(self.rows());
        let widths: Vec<usize> = (0..all[0].len())
            .map(|c| all.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in all.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c < 2 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Splits a table CSV back into its cells.
pub fn parse_table_csv(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(collided: bool, succeeded: bool, steps: usize) -> EpisodeResult {
        EpisodeResult {
            collided,
            succeeded,
            steps,
            interventions: 0,
            min_h: 0.0,
        }
    }

    #[test]
    fn rates_and_means() {
        let mut rs: Vec<_> = (0..7).map(|_| ep(false, true, 100)).collect();
        rs.extend((0..3).map(|_| ep(true, false, 300)));
        let m = compute_metrics(&rs).unwrap();
        assert_eq!((m.car, m.tsr, m.ets, m.episodes), (0.7, 0.7, 160.0, 10));
        let t = compute_metrics(&[ep(false, false, 300), ep(true, false, 300)]).unwrap();
        assert_eq!(t.ets, 300.0);
        assert!(matches!(compute_metrics(&[]), Err(SimError::EmptyResults)));
    }

    #[test]
    fn table_layout_and_csv() {
        let m = |car, tsr, ets| Metrics {
            car,
            tsr,
            ets,
            episodes: 4,
        };
        let table = SuiteTable {
            suites: vec!["spatial".into(), "goal".into()],
            blocks: vec![MethodBlock {
                method: "filter-on".into(),
                suites: [
                    ("spatial".to_string(), m(1.0, 0.75, 120.0)),
                    ("goal".to_string(), m(0.5, 0.25, 200.5)),
                ]
                .into_iter()
                .collect(),
            }],
        };
        let text = table.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("Method") && lines[0].ends_with("Average"));
        assert!(lines[2].contains("100.00%") && lines[2].ends_with("75.00%"));
        assert!(lines[4].ends_with("160.25"));
        let parsed = parse_table_csv(&table.to_csv());
        assert_eq!(parsed[1..].to_vec(), table.rows());
    }
}
