//! CSV and TSV reports. Numbers use `.` decimals and the shortest text that
//! reads back to the same value, so equal runs give equal bytes.

use std::fmt::Write as _;

use expertgate_core::pipeline::{BaselineMethod, SequenceReport};
use expertgate_core::{RelatednessReport, RoutingDecision};

use crate::dataset::csv_err;
use crate::Result;

/// One routed sample with the predictions that were made for it.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutedSample {
    pub decision: RoutingDecision,
    /// `(task index, class, confidence)`; the first entry belongs to the
    /// selected expert.
    pub predictions: Vec<(usize, usize, f32)>,
    pub label: Option<usize>,
}

fn joined(items: impl IntoIterator<Item = String>) -> String {
    items.into_iter().collect::<Vec<_>>().join(";")
}

/// Routing report: `sample_id`, one `er_i` and `p_i` column per gate,
/// `selected`, the `;`-separated `activated` set, then the selected task's
/// name, class and confidence. `multi` adds every activated expert's
/// prediction as `task:class:confidence`; known labels add a `label` column.
pub fn routing_csv(tasks: &[String], rows: &[RoutedSample], multi: bool) -> Result<Vec<u8>> {
    let k = tasks.len();
    let with_label = rows.iter().any(|r| r.label.is_some());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..k).map(|i| format!("er_{i}")));
    header.extend((0..k).map(|i| format!("p_{i}")));
    header.extend(["selected", "activated", "task", "class", "confidence"].map(String::from));
    if multi {
        header.push("predictions".into());
    }
    if with_label {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (id, r) in rows.iter().enumerate() {
        let d = &r.decision;
        let mut f = vec![id.to_string()];
        f.extend(d.errors.iter().map(|e| e.to_string()));
        f.extend(d.probabilities.iter().map(|p| p.to_string()));
        f.push(d.selected.to_string());
        f.push(joined(d.activated.iter().map(|a| a.to_string())));
        let (task, class, conf) = r.predictions[0];
        f.extend([tasks[task].clone(), class.to_string(), conf.to_string()]);
        if multi {
            f.push(joined(r.predictions.iter().map(|(t, c, p)| format!("{}:{c}:{p}", tasks[*t]))));
        }
        if with_label {
            f.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        }
        w.write_record(&f).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))
}

/// Relatedness of a new task to every stored task, one row per prior.
pub fn relatedness_tsv(report: &RelatednessReport) -> String {
    let mut out = String::from("new_task\tprior_task\town_error\tprior_error\trel\tchosen\tmethod\n");
    for (i, e) in report.entries.iter().enumerate() {
        let chosen = u8::from(report.chosen_index == Some(i));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{chosen}\t{}",
            report.new_task, e.prior_task, e.own_error, e.prior_error, e.rel, report.method
        );
    }
    out
}

/// Accuracy of the task classifier for one stored-sample budget.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    /// `None` for all training data.
    pub samples_per_task: Option<usize>,
    pub selection_accuracy: f64,
}

/// Long-format benchmark report with columns `section,name,task,value`.
pub fn bench_csv(report: &SequenceReport, sweep: &[SweepPoint]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["section", "name", "task", "value"]).map_err(csv_err)?;
    let mut row = |s: &str, n: &str, t: &str, v: f64| w.write_record([s, n, t, &v.to_string()]);
    for (method, accs) in &report.accuracies {
        for (task, a) in report.tasks.iter().zip(accs) {
            row("accuracy", method.as_str(), task, *a).map_err(csv_err)?;
        }
    }
    for method in BaselineMethod::ALL {
        row("average", method.as_str(), "", report.average(method)).map_err(csv_err)?;
    }
    row("selection", "expert_gate", "", report.gate_selection_accuracy).map_err(csv_err)?;
    for p in sweep {
        let name = match p.samples_per_task {
            Some(n) => format!("discriminative_{n}"),
            None => "discriminative_full".into(),
        };
        row("selection", &name, "", p.selection_accuracy).map_err(csv_err)?;
    }
    for (task, a) in report.tasks.iter().zip(&report.forgetting_curve) {
        row("forgetting", "single_finetuned", task, *a).map_err(csv_err)?;
    }
    for r in &report.relatedness {
        if let Some(rel) = r.chosen_rel() {
            row("relatedness", &r.new_task, &r.chosen_prior, rel).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))
}

/// Human-readable summary of a benchmark.
pub fn bench_table(report: &SequenceReport, sweep: &[SweepPoint]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<22}", "method");
    for t in &report.tasks {
        let _ = write!(out, "{t:>10}");
    }
    let _ = writeln!(out, "{:>10}", "avg");
    for (method, accs) in &report.accuracies {
        let _ = write!(out, "{:<22}", method.as_str());
        for a in accs {
            let _ = write!(out, "{:>10.3}", a);
        }
        let _ = writeln!(out, "{:>10.3}", report.average(*method));
    }
    let _ = writeln!(out, "gate task selection: {:.4}", report.gate_selection_accuracy);
    for p in sweep {
        match p.samples_per_task {
            Some(n) => {
                let _ = writeln!(out, "task classifier, {n} samples/task: {:.4}", p.selection_accuracy);
            }
            None => {
                let _ = writeln!(out, "task classifier, all samples: {:.4}", p.selection_accuracy);
            }
        }
    }
    let _ = writeln!(
        out,
        "note: routed methods score a sample only by its own task's label, so a wrong expert counts as an error"
    );
    out
}
