use peridyn_kv::lab::{run_sweep, ConvergenceReport, LevelMetrics};

use crate::output::{num, opt, text, Csv, Output};
use crate::{CliError, Resolved};

pub const REPORT_HEADER: [&str; 17] = [
    "level",
    "horizon",
    "spacing",
    "dofs",
    "initial_gap",
    "interpolation_error",
    "divergence_error",
    "dissipation_form_defect",
    "divergence_form_defect",
    "energy_form_defect",
    "l2_error",
    "net_l2_error",
    "energy_gap",
    "relative_ede_residual",
    "energy_nonincreasing",
    "a_priori_bounds",
    "error",
];

fn metrics_cells(m: &LevelMetrics) -> Vec<String> {
    let t = m.trajectory.as_ref();
    vec![
        num(m.spacing),
        m.dofs.to_string(),
        num(m.initial_gap),
        num(m.interpolation_error),
        num(m.divergence_error),
        num(m.forms.dissipation_defect()),
        num(m.forms.divergence_defect()),
        num(m.forms.energy_defect()),
        opt(t.map(|t| t.l2_error)),
        opt(m.net_error()),
        opt(t.map(|t| t.energy_gap)),
        opt(t.map(|t| t.relative_ede_residual)),
        t.map(|t| t.energy_nonincreasing.to_string()).unwrap_or_default(),
        t.map(|t| t.a_priori_bounds.to_string()).unwrap_or_default(),
    ]
}

pub fn report_csv(report: &ConvergenceReport) -> String {
    let mut csv = Csv::new(&REPORT_HEADER);
    for (i, row) in report.rows.iter().enumerate() {
        let mut cells = vec![i.to_string(), num(row.horizon)];
        match &row.outcome {
            Ok(m) => {
                cells.extend(metrics_cells(m));
                cells.push(String::new());
            }
            Err(e) => {
                cells.extend(std::iter::repeat_n(String::new(), REPORT_HEADER.len() - 3));
                cells.push(text(e));
            }
        }
        csv.row(&cells);
    }
    csv.finish()
}

fn level_trajectory_csv(m: &LevelMetrics, reference: &[f64]) -> Option<String> {
    let t = m.trajectory.as_ref()?;
    let mut csv = Csv::new(&[
        "t",
        "energy",
        "reference_energy",
        "dissipation_integral",
        "dual_integral",
        "ede_residual",
        "l2_norm",
    ]);
    for (k, (term, l2)) in t.terms.iter().zip(&t.l2_norms).enumerate() {
        csv.row(&[
            num(term.time),
            num(term.energy),
            opt(reference.get(k).copied()),
            num(term.dissipation_integral),
            num(term.dual_integral),
            num(term.residual),
            num(*l2),
        ]);
    }
    Some(csv.finish())
}

pub fn run(resolved: &Resolved, out: &Output) -> Result<(), CliError> {
    let plan = resolved.config.sweep_plan()?;
    let report = run_sweep(&plan)?;
    out.write("report.csv", &report_csv(&report))?;
    for (i, row) in report.rows.iter().enumerate() {
        if let Ok(m) = &row.outcome {
            if let Some(csv) = level_trajectory_csv(m, &report.reference_energies) {
                out.write(&format!("trajectory_level_{i}.csv"), &csv)?;
            }
        }
    }
    let failures = report.gate_failures();
    for row in &report.rows {
        match &row.outcome {
            Ok(m) => println!(
                "sweep: h = {} gap = {} div = {} l2 = {}",
                num(row.horizon),
                num(m.initial_gap),
                num(m.divergence_error),
                opt(m.trajectory.as_ref().map(|t| t.l2_error))
            ),
            Err(e) => println!("sweep: h = {} failed: {e}", num(row.horizon)),
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("convergence gate failed: {}", failures.join("; "))))
    }
}
