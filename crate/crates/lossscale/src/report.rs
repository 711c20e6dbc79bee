//! Plain-text reports: `key = value` documents and comma-delimited tables.
//!
//! Floats are written in Rust's shortest round-trip form, so re-running the
//! same configuration produces byte-identical files.

use std::fmt::Write as _;

use lossscale_core::{EvalReport, FitTrace, ScalingState};

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_list(&mut self, key: &str, values: &[f64]) -> &mut Self {
        self.push(key, join(values))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Option<Self> {
        let mut doc = Self::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line.split_once(" = ")?;
            doc.push(k.trim(), v.trim());
        }
        Some(doc)
    }
}

pub fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn join_usize(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn eval_doc(r: &EvalReport) -> KvDoc {
    let mut doc = KvDoc::new();
    doc.push("sample_count", r.sample_count)
        .push("correct", r.correct)
        .push("accuracy", r.accuracy)
        .push("ece", r.ece)
        .push("nll", r.nll)
        .push("class_loss_std", r.class_loss_std)
        .push("bins", r.bins.bins.len())
        .push_list("class_losses", &r.class_losses.values)
        .push("class_counts", join_usize(&r.class_losses.counts))
        .push("clamped", r.class_losses.clamped);
    doc
}

/// Reliability-diagram table.
pub fn bins_table(r: &EvalReport) -> String {
    let mut out = String::from("bin_low,bin_high,mean_conf,acc,count\n");
    for b in &r.bins.bins {
        writeln!(
            out,
            "{},{},{},{},{}",
            b.low, b.high, b.mean_confidence, b.accuracy, b.count
        )
        .unwrap();
    }
    out
}

pub fn scaling_doc(s: &ScalingState) -> KvDoc {
    let mut doc = KvDoc::new();
    doc.push("normalization", s.config.normalization.name())
        .push(
            "refresh",
            match s.config.refresh {
                lossscale_core::Refresh::EveryEpoch => "every-epoch",
                lossscale_core::Refresh::FrozenAfterFit => "frozen-after-fit",
            },
        )
        .push("alpha", s.alpha)
        .push("beta", s.beta)
        .push("objective_init", s.objective_init)
        .push("objective", s.objective)
        .push("fallback", s.fallback)
        .push_list("weights", &s.weights)
        .push_list("l0", &s.l0.values)
        .push_list("l1", &s.l1.values);
    doc
}

/// Per-epoch trace; `ece` adds a column when given (one value per record).
pub fn trace_table(trace: &FitTrace, ece: Option<&[f64]>) -> String {
    let classes = trace.records.first().map_or(0, |r| r.class_nll.len());
    let weighted = trace.records.iter().any(|r| r.weights.is_some());
    let mut out = String::from("epoch,stage,lr,objective,nll_total,class_nll_std");
    if ece.is_some() {
        out.push_str(",ece");
    }
    for i in 0..classes {
        write!(out, ",class_nll_{i}").unwrap();
    }
    if weighted {
        for i in 0..classes {
            write!(out, ",w_{i}").unwrap();
        }
    }
    out.push('\n');
    for (k, r) in trace.records.iter().enumerate() {
        write!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.stage, r.learning_rate, r.objective, r.nll_total, r.class_nll_std
        )
        .unwrap();
        if let Some(e) = ece {
            write!(out, ",{}", e[k]).unwrap();
        }
        for v in &r.class_nll {
            write!(out, ",{v}").unwrap();
        }
        if let Some(w) = &r.weights {
            for v in w {
                write!(out, ",{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut doc = KvDoc::new();
        doc.push("ece", 0.125).push_list("w", &[0.5, -0.25]);
        let text = doc.render();
        assert_eq!(text, "ece = 0.125\nw = 0.5 -0.25\n");
        let back = KvDoc::parse(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.get_f64("ece"), Some(0.125));
    }
}
