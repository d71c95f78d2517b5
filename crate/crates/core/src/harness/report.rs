use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::metrics::EvalRecord;

#[derive(Default)]
struct Acc {
    n: usize,
    util: f64,
    p_static: f64,
    p_adaptive: f64,
    g_static: f64,
    g_adaptive: f64,
    nn: f64,
    epsilon: f64,
}

impl Acc {
    fn add(&mut self, r: &EvalRecord) {
        self.n += 1;
        self.util += r.util_f1;
        self.p_static += r.priv_f1_static;
        self.p_adaptive += r.priv_f1_adaptive;
        self.g_static += r.gamma_static;
        self.g_adaptive += r.gamma_adaptive;
        self.nn += r.nn_mean_k;
        self.epsilon = r.epsilon;
    }

    fn mean(&self, v: f64) -> f64 {
        v / self.n as f64
    }
}

fn fmt_eps(e: f64) -> String {
    let s = format!("{e:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Per dataset and split fraction: baseline scores followed by every
/// mechanism and budget level, each averaged over runs.
pub fn render_table2(records: &[EvalRecord]) -> String {
    // dataset -> fraction bits -> (baseline?, first-seen mechanism order, level) -> acc
    let mut datasets: Vec<&str> = Vec::new();
    let mut mech_order: Vec<&str> = Vec::new();
    for r in records {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !mech_order.contains(&r.mechanism.as_str()) {
            mech_order.push(&r.mechanism);
        }
    }
    let mut groups: BTreeMap<(usize, u64, bool, usize, u8), Acc> = BTreeMap::new();
    for r in records {
        let d = datasets.iter().position(|d| *d == r.dataset).expect("seen");
        let m = mech_order.iter().position(|m| *m == r.mechanism).expect("seen");
        // fraction is positive, so its bit pattern sorts like the value
        let key = (d, r.split_fraction.to_bits(), !r.is_baseline(), m, r.epsilon_level);
        groups.entry(key).or_default().add(r);
    }

    let mut out = String::new();
    let mut current: Option<usize> = None;
    for ((d, fraction, private, m, _), acc) in &groups {
        if current != Some(*d) {
            if current.is_some() {
                out.push('\n');
            }
            let _ = writeln!(out, "dataset: {}", datasets[*d]);
            let _ = writeln!(
                out,
                "{:>6}  {:<20} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9}",
                "split", "mechanism", "eps", "U", "P(s)", "P(a)", "g(s)", "g(a)", "NN"
            );
            current = Some(*d);
        }
        let split = format!("{}%", fmt_eps(100.0 * f64::from_bits(*fraction)));
        if *private {
            let _ = writeln!(
                out,
                "{:>6}  {:<20} {:>8} {:>7.1} {:>7.1} {:>7.1} {:>7.2} {:>7.2} {:>9.1}",
                split,
                mech_order[*m],
                fmt_eps(acc.epsilon),
                acc.mean(acc.util),
                acc.mean(acc.p_static),
                acc.mean(acc.p_adaptive),
                acc.mean(acc.g_static),
                acc.mean(acc.g_adaptive),
                acc.mean(acc.nn)
            );
        } else {
            let _ = writeln!(
                out,
                "{:>6}  {:<20} {:>8} {:>7.1} {:>7.1} {:>7} {:>7} {:>7} {:>9}",
                split,
                mech_order[*m],
                "-",
                acc.mean(acc.util),
                acc.mean(acc.p_static),
                "-",
                "-",
                "-",
                "-"
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(mechanism: &str, level: u8, epsilon: f64, fraction: f64, run: usize, g: f64) -> EvalRecord {
        EvalRecord {
            dataset: "d".into(),
            mechanism: mechanism.into(),
            epsilon_level: level,
            epsilon,
            split_fraction: fraction,
            run_index: run,
            size: 100,
            avg_words: 10.0,
            util_f1: 90.0,
            priv_f1_static: 50.0,
            priv_f1_adaptive: 60.0,
            util_baseline: 95.0,
            priv_baseline: 70.0,
            mg_u: 0.0,
            gamma_static: g,
            gamma_adaptive: g,
            nn_mean_k: 3.0,
        }
    }

    #[test]
    fn averages_runs_and_orders_rows() {
        let rows = vec![
            record("word-mldp", 1, 0.5, 1.0, 1, 0.1),
            record("word-mldp", 1, 0.5, 1.0, 2, 0.3),
            record("baseline", 0, 0.0, 1.0, 1, 0.0),
            record("baseline", 0, 0.0, 0.1, 1, 0.0),
        ];
        let text = render_table2(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[2].contains("10%") && lines[2].contains("baseline"));
        assert!(lines[3].contains("100%") && lines[3].contains("baseline"));
        assert!(lines[4].contains("word-mldp") && lines[4].contains("0.5") && lines[4].contains("0.20"));
    }
}
