//! CSV renderings of search reports.

use std::fmt::Write;

use ugsl::search::{label, ArchitectureRow, ComponentAverage, LineSearchReport, TopFractionReport};
use ugsl::stats::Correlation;

pub fn top_fraction_csv(reports: &[(String, TopFractionReport)]) -> String {
    let mut s = String::from("dataset,component,value,count,min,q1,median,q3,max\n");
    for (dataset, d) in reports.iter().flat_map(|(name, r)| r.distributions.iter().map(move |d| (name, d))) {
        let b = &d.test_accuracy;
        let _ = writeln!(
            s,
            "{dataset},{},{},{},{:?},{:?},{:?},{:?},{:?}",
            label(&d.component),
            d.value,
            d.count,
            b.min,
            b.q1,
            b.median,
            b.q3,
            b.max
        );
    }
    s
}

const ARCH_COLUMNS: &str = "positional,scorer,sparsifier,processor,encoder,regularizers,unsupervised,adjacency_mode";

pub fn architecture_csv(rows: &[ArchitectureRow], datasets: &[String]) -> String {
    let mut s = format!("rank,{ARCH_COLUMNS}");
    for d in datasets {
        let _ = write!(s, ",{d}");
    }
    s.push_str(",mean\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(s, "{},{}", i + 1, r.architecture.fields().join(","));
        for v in &r.per_dataset {
            let _ = write!(s, ",{v:?}");
        }
        let _ = writeln!(s, ",{:?}", r.mean);
    }
    s
}

pub fn component_average_csv(rows: &[ComponentAverage], datasets: &[String]) -> String {
    let mut s = String::from("component,value");
    for d in datasets {
        let _ = write!(s, ",{d}");
    }
    s.push_str(",mean\n");
    for r in rows {
        let _ = write!(s, "{},{}", label(&r.component), r.value);
        for v in &r.per_dataset {
            let _ = write!(s, ",{v:?}");
        }
        let _ = writeln!(s, ",{:?}", r.mean);
    }
    s
}

pub fn correlation_csv(rows: &[(String, Vec<Correlation>)]) -> String {
    let mut s = String::from("dataset,stat,rho,degenerate,samples\n");
    for (dataset, cs) in rows {
        for c in cs {
            let _ = writeln!(s, "{dataset},{},{:?},{},{}", c.stat, c.rho, c.degenerate, c.samples);
        }
    }
    s
}

pub fn line_search_csv(r: &LineSearchReport) -> String {
    let mut s = String::from("component,option,trials,best_trial,status,best_val_accuracy,test_accuracy,best_epoch\n");
    for row in &r.rows {
        let b = &row.best;
        let status = if b.is_completed() { "completed" } else { "failed" };
        let _ = writeln!(
            s,
            "{},{},{},{},{status},{:?},{:?},{}",
            label(&r.component),
            row.option,
            row.trials,
            b.trial_id,
            b.best_val_accuracy,
            b.test_accuracy,
            b.best_epoch
        );
    }
    s
}
