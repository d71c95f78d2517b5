use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::StatsConfig;
use crate::corpus::Corpus;
use crate::metrics::EvalRecord;
use crate::stats::{
    dunn_posthoc, encode_design, equal_width_bins, kruskal_wallis, ols_fit, KruskalWallis, LabelSupport, PosthocMatrix,
    RegressionSummary,
};

/// Per-dataset facts the regression needs but records do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub documents: usize,
    pub utility_labels: usize,
    pub privacy_labels: usize,
    pub avg_words: f64,
}

impl DatasetSummary {
    pub fn of(c: &Corpus) -> Self {
        DatasetSummary {
            name: c.name().to_string(),
            documents: c.len(),
            utility_labels: c.utility_labels().len(),
            privacy_labels: c.privacy_labels().len(),
            avg_words: c.avg_words(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StatsReport {
    /// Non-baseline records used.
    pub records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression_error: Option<String>,
    #[serde(default)]
    pub bin_edges: Vec<f64>,
    #[serde(default)]
    pub bin_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kruskal_wallis: Option<KruskalWallis>,
    /// Labels of the non-empty bins, in order; rows/columns of `posthoc`.
    #[serde(default)]
    pub posthoc_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posthoc: Option<PosthocMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_test_error: Option<String>,
}

/// OLS of the average gain on the design variables, then Kruskal-Wallis and
/// Dunn's test of the average gain across equal-width bins of log size.
/// Failures are reported in the returned value rather than raised.
pub fn analyze(records: &[EvalRecord], datasets: &[DatasetSummary], cfg: &StatsConfig) -> StatsReport {
    let supports: BTreeMap<String, LabelSupport> = datasets
        .iter()
        .map(|d| (d.name.clone(), LabelSupport { utility: d.utility_labels, privacy: d.privacy_labels }))
        .collect();
    let mut report = StatsReport::default();
    let mut design = match encode_design(records, &supports) {
        Ok(d) => d,
        Err(e) => {
            report.regression_error = Some(e.to_string());
            return report;
        }
    };
    report.records = design.n_rows();
    let log_size = design.column(1);
    let gains = design.y.clone();

    let dropped = design.drop_constant_columns();
    match ols_fit(&design) {
        Ok(mut s) => {
            s.dropped_columns = dropped;
            report.regression = Some(s);
        }
        Err(e) => report.regression_error = Some(e.to_string()),
    }

    let binning = match equal_width_bins(&log_size, cfg.bins) {
        Ok(b) => b,
        Err(e) => {
            report.rank_test_error = Some(e.to_string());
            return report;
        }
    };
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); cfg.bins];
    for (&label, &g) in binning.labels.iter().zip(&gains) {
        groups[label - 1].push(g);
    }
    report.bin_counts = groups.iter().map(Vec::len).collect();
    report.bin_edges = binning.edges;
    let (labels, groups): (Vec<String>, Vec<Vec<f64>>) = groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(i, g)| ((i + 1).to_string(), g))
        .unzip();
    report.posthoc_labels = labels;
    match kruskal_wallis(&groups).and_then(|kw| Ok((kw, dunn_posthoc(&groups, cfg.adjustment)?))) {
        Ok((kw, dunn)) => {
            report.kruskal_wallis = Some(kw);
            report.posthoc = Some(dunn);
        }
        Err(e) => report.rank_test_error = Some(e.to_string()),
    }
    report
}

impl StatsReport {
    pub fn posthoc_csv(&self) -> Option<String> {
        self.posthoc.as_ref().map(|p| p.to_csv(&self.posthoc_labels))
    }

    /// Regression table plus the rank-test summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match (&self.regression, &self.regression_error) {
            (Some(r), _) => out.push_str(&r.to_table()),
            (None, Some(e)) => out.push_str(&format!("regression unavailable: {e}\n")),
            (None, None) => out.push_str("regression unavailable\n"),
        }
        if !self.bin_edges.is_empty() {
            let bins: Vec<String> = self
                .bin_edges
                .windows(2)
                .enumerate()
                .map(|(i, w)| format!("{}: ({:.3}, {:.3}] n={}", i + 1, w[0], w[1], self.bin_counts.get(i).copied().unwrap_or(0)))
                .collect();
            out.push_str(&format!("log-size bins: {}\n", bins.join("; ")));
        }
        if let Some(kw) = &self.kruskal_wallis {
            out.push_str(&format!("Kruskal-Wallis H={:.4} df={} p={:.5}\n", kw.h, kw.df, kw.p));
        }
        if let Some(csv) = self.posthoc_csv() {
            out.push_str("Dunn post-hoc p values:\n");
            out.push_str(&csv);
        }
        if let Some(e) = &self.rank_test_error {
            out.push_str(&format!("rank tests unavailable: {e}\n"));
        }
        out
    }
}
