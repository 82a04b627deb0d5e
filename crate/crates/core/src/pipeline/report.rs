//! Report tables: per-run F1 (`report.csv`), mean and std next to the
//! published reference values (`summary.csv`) and wall-clock times
//! (`timing.csv`, kept apart so the other two are reproducible byte for byte).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::systems::ExperimentReport;

/// `system,task,run_seed,macro_f1,f1_class_0,...`
pub fn report_csv(reports: &[ExperimentReport]) -> String {
    let n_classes = reports.iter().flat_map(|r| &r.runs).map(|r| r.metrics.per_class.len()).max().unwrap_or(0);
    let mut s = String::from("system,task,run_seed,macro_f1");
    for k in 0..n_classes {
        let _ = write!(s, ",f1_class_{k}");
    }
    s.push('\n');
    for r in reports {
        for run in &r.runs {
            let _ = write!(s, "{},{},{},{}", r.system, r.task, run.seed, run.metrics.macro_f1);
            for c in &run.metrics.per_class {
                let _ = write!(s, ",{}", c.f1);
            }
            s.push('\n');
        }
    }
    s
}

/// `system,task,runs,mean_macro_f1,std_macro_f1,paper_f1_mean,paper_f1_std`
pub fn summary_csv(reports: &[ExperimentReport]) -> String {
    let mut s = String::from("system,task,runs,mean_macro_f1,std_macro_f1,paper_f1_mean,paper_f1_std\n");
    for r in reports {
        let (pm, ps) = r.system.paper_f1(r.task);
        let _ = writeln!(s, "{},{},{},{},{},{pm},{ps}", r.system, r.task, r.runs.len(), r.mean(), r.std());
    }
    s
}

/// `system,task,run_seed,wall_clock_s`
pub fn timing_csv(reports: &[ExperimentReport]) -> String {
    let mut s = String::from("system,task,run_seed,wall_clock_s\n");
    for r in reports {
        for run in &r.runs {
            let _ = writeln!(s, "{},{},{},{:.3}", r.system, r.task, run.seed, run.wall_clock_s);
        }
    }
    s
}

/// Human-readable table in the layout of the published results.
pub fn render_table(reports: &[ExperimentReport]) -> String {
    let mut s = format!("{:<42} {:>16} {:>16}\n", "Method", "macro-F1", "published");
    for r in reports {
        let (pm, ps) = r.system.paper_f1(r.task);
        let _ = writeln!(
            s,
            "{:<42} {:>8.3} ± {:<5.3} {:>8.3} ± {:<5.3}",
            r.system.description(),
            r.mean(),
            r.std(),
            pm,
            ps
        );
    }
    s
}

/// Write `report.csv`, `summary.csv`, `timing.csv` and, when present,
/// `ablation.csv` into `dir`.
pub fn write_reports(dir: &Path, reports: &[ExperimentReport]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), report_csv(reports))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(reports))?;
    std::fs::write(dir.join("timing.csv"), timing_csv(reports))?;
    for r in reports {
        if let Some(a) = &r.ablation {
            super::ablation::write_ablation_csv(&dir.join("ablation.csv"), a)?;
        }
    }
    Ok(())
}
