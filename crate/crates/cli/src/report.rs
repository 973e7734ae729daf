//! Plots and summary table from a finished results directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use driftbench_core::metrics::DriftReport;

use crate::io::write_atomic;
use crate::run::{RunManifest, MANIFEST_FILE};
use crate::svg::{box_plot, line_plot, BoxGroup};

pub const PLOTS_DIR: &str = "plots";
pub const BOX_PLOT_FILE: &str = "correlation_boxplot.svg";

pub struct ReportOutput {
    pub table: String,
    pub files: Vec<PathBuf>,
}

/// Reads the manifest and every DriftReport it lists, in manifest order.
pub fn load_reports(results_dir: &Path) -> Result<Vec<DriftReport>> {
    let manifest_path = results_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).with_context(|| {
        format!(
            "no results in {}: cannot read {}",
            results_dir.display(),
            manifest_path.display()
        )
    })?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("corrupt manifest {}", manifest_path.display()))?;
    let mut reports = Vec::new();
    for rel in manifest.report_paths() {
        let path = results_dir.join(rel);
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read report {}", path.display()))?;
        reports.push(DriftReport::from_json(&text).with_context(|| format!("corrupt report {}", path.display()))?);
    }
    if reports.is_empty() {
        bail!(
            "{} lists no drift reports (every cell failed?)",
            manifest_path.display()
        );
    }
    Ok(reports)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

pub fn summary_table(reports: &[DriftReport]) -> String {
    let mut out = format!(
        "{:<9} {:>7} {:>5} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
        "paradigm", "clients", "perms", "degen", "mean", "min", "q1", "median", "q3", "max", "pooled"
    );
    for r in reports {
        let s = r.correlation_summary;
        let _ = writeln!(
            out,
            "{:<9} {:>7} {:>5} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            r.paradigm.to_string(),
            r.client_count,
            r.permutations.len(),
            r.degenerate_count,
            fmt_opt(r.mean_pearson),
            fmt_opt(s.map(|s| s.min)),
            fmt_opt(s.map(|s| s.q1)),
            fmt_opt(s.map(|s| s.median)),
            fmt_opt(s.map(|s| s.q3)),
            fmt_opt(s.map(|s| s.max)),
            fmt_opt(r.pooled_pearson),
        );
    }
    out
}

/// Renders every chart in memory and only then writes them under
/// `plots_dir`, so a failure while reading leaves no charts behind.
pub fn report(results_dir: &Path, plots_dir: &Path) -> Result<ReportOutput> {
    let reports = load_reports(results_dir)?;
    let mut rendered: Vec<(PathBuf, String)> = Vec::new();
    let mut groups = Vec::new();
    for r in &reports {
        for p in &r.permutations {
            let title = format!(
                "{} test, {} client(s), order {}",
                r.paradigm, r.client_count, p.plan.permutation
            );
            let name = format!("{}_c{}_{}.svg", r.paradigm, r.client_count, p.plan.permutation);
            rendered.push((plots_dir.join(name), line_plot(&title, &p.phases)));
        }
        groups.push(BoxGroup {
            label: format!("{} c{}", r.paradigm, r.client_count),
            paradigm: r.paradigm.to_string(),
            clients: r.client_count,
            summary: r.correlation_summary,
            points: r.permutations.iter().filter_map(|p| p.pearson_train_auc).collect(),
        });
    }
    rendered.push((
        plots_dir.join(BOX_PLOT_FILE),
        box_plot("Pearson(train accuracy, MIA AUC) per permutation", &groups),
    ));
    for (path, svg) in &rendered {
        write_atomic(path, svg)?;
    }
    Ok(ReportOutput {
        table: summary_table(&reports),
        files: rendered.into_iter().map(|(p, _)| p).collect(),
    })
}
