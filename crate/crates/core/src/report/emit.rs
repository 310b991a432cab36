use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng as _;

use super::run::{Report, REPORT_FILE};
use super::svg::{heat, range, Frame, Svg, HEIGHT, PALETTE, WIDTH};
use crate::eval::{write_comparison_csv, write_metrics_csv};
use crate::explain::{write_ablation_csv, write_ale_csv, write_posterior_csv, write_shap_csv, AleKind, PosteriorRisk};
use crate::rng;
use crate::select::write_selection_report;
use crate::Result;

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

/// File-name-safe form of a feature name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `report.json` and every CSV/SVG projection of it into `out`.
pub fn emit_report(report: &Report, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(report)?)?;
    write_comparison_csv(create(out, "cohort_ttest.csv")?, &report.train_vs_test)?;
    write_comparison_csv(create(out, "cohort_outcome_ttest.csv")?, &report.outcome_comparison)?;
    write_selection_report(create(out, "selection.csv")?, &report.selection.coverage, &report.selection.ranking)?;
    let rows = |test: bool| -> Vec<(String, crate::eval::MetricReport)> {
        report
            .models
            .iter()
            .map(|m| (m.name.clone(), if test { m.test.clone() } else { m.train.clone() }))
            .collect()
    };
    write_metrics_csv(create(out, "metrics_train.csv")?, &rows(false))?;
    write_metrics_csv(create(out, "metrics_test.csv")?, &rows(true))?;
    write_cv_csv(report, out)?;
    std::fs::write(out.join("roc_test.svg"), roc_svg(report))?;

    if let Some(ex) = &report.explain {
        write_ablation_csv(create(out, "ablation.csv")?, &ex.ablation)?;
        std::fs::write(out.join("ablation.svg"), ablation_svg(report))?;
        if let Some(shap) = &ex.shap {
            write_shap_csv(create(out, "shap_values.csv")?, shap)?;
            let mut w = csv::Writer::from_writer(create(out, "shap_summary.csv")?);
            w.write_record(["feature", "mean_abs_shap"])?;
            for (name, v) in shap.feature_names.iter().zip(shap.mean_abs()) {
                w.write_record([name.clone(), v.to_string()])?;
            }
            w.flush()?;
            std::fs::write(out.join("shap_summary.svg"), beeswarm_svg(shap))?;
        }
        for curve in &ex.ale {
            let stem = format!("ale_{}", slug(&curve.feature));
            write_ale_csv(create(out, &format!("{stem}.csv"))?, curve)?;
            std::fs::write(out.join(format!("{stem}.svg")), ale_svg(curve))?;
        }
        write_posterior_csv(create(out, "posterior.csv")?, &ex.posterior_inputs)?;
        std::fs::write(
            out.join("posterior.svg"),
            histogram_svg(&ex.posterior_inputs, "Posterior risk under non-survivor feature priors"),
        )?;
        if let Some(pp) = &ex.posterior_params {
            write_posterior_csv(create(out, "posterior_params.csv")?, &pp.risk)?;
            std::fs::write(
                out.join("posterior_params.svg"),
                histogram_svg(&pp.risk, &format!("Posterior predictive risk, cohort row {}", pp.row)),
            )?;
        }
    }
    Ok(())
}

fn write_cv_csv(report: &Report, out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(out, "cv_grid.csv")?);
    w.write_record(["model", "config", "spec", "mean_auroc", "sd_auroc", "selected"])?;
    for m in &report.models {
        for (i, e) in m.cv.iter().enumerate() {
            w.write_record([
                m.name.clone(),
                i.to_string(),
                e.spec.describe(),
                e.mean_auroc.to_string(),
                e.sd_auroc.to_string(),
                (e.spec == m.spec).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn roc_svg(report: &Report) -> String {
    let mut svg = Svg::new(WIDTH, HEIGHT);
    let frame = Frame::new((0.0, 1.0), (0.0, 1.0));
    frame.draw_axes(&mut svg, "Test-set ROC", "1 - specificity", "sensitivity");
    svg.line(frame.px(0.0), frame.py(0.0), frame.px(1.0), frame.py(1.0), "#999999", 1.0);
    for (i, m) in report.models.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> =
            m.roc_test.fpr.iter().zip(&m.roc_test.tpr).map(|(x, y)| (frame.px(*x), frame.py(*y))).collect();
        svg.polyline(&pts, color, 1.5);
        let label = match m.test.auroc {
            Some(a) => format!("{} ({a:.3})", m.name),
            None => m.name.clone(),
        };
        let y = frame.py(0.0) - 14.0 * (report.models.len() - i) as f64;
        svg.line(frame.px(0.55), y - 4.0, frame.px(0.6), y - 4.0, color, 2.0);
        svg.text(frame.px(0.62), y, &label, "start", 11.0);
    }
    svg.finish()
}

fn ablation_svg(report: &Report) -> String {
    let ex = report.explain.as_ref().expect("explain section");
    let base = ex.ablation.baseline.mean;
    let deltas: Vec<(String, f64, f64)> =
        ex.ablation.entries.iter().map(|e| (e.feature.clone(), e.mean - base, e.sd)).collect();
    let (lo, hi) = range(deltas.iter().flat_map(|(_, d, s)| [d - s, d + s, 0.0]));
    let mut svg = Svg::new(WIDTH, HEIGHT);
    let frame = Frame::new((lo, hi), (0.0, deltas.len().max(1) as f64));
    frame.draw_axes(&mut svg, &format!("Ablation ({}), change in test AUROC", ex.model), "mean AUROC change", "");
    let zero = frame.px(0.0);
    svg.line(zero, frame.py(0.0), zero, frame.py(deltas.len() as f64), "#555555", 1.0);
    for (i, (name, d, sd)) in deltas.iter().enumerate() {
        let top = frame.py(i as f64 + 0.85);
        let bottom = frame.py(i as f64 + 0.15);
        let (a, b) = (zero.min(frame.px(*d)), zero.max(frame.px(*d)));
        svg.rect(a, top, b - a, bottom - top, if *d < 0.0 { "#d62728" } else { "#1f77b4" });
        let mid = (top + bottom) / 2.0;
        svg.line(frame.px(d - sd), mid, frame.px(d + sd), mid, "black", 1.0);
        svg.text(frame.px(lo) + 4.0, mid + 4.0, name, "start", 10.0);
    }
    svg.finish()
}

fn beeswarm_svg(shap: &crate::explain::ShapMatrix) -> String {
    let importance = shap.mean_abs();
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    let (lo, hi) = range(shap.values.iter().copied().chain([0.0]));
    let mut svg = Svg::new(WIDTH, HEIGHT.max(40.0 + 22.0 * order.len() as f64));
    let frame = Frame::new((lo, hi), (0.0, order.len().max(1) as f64));
    frame.draw_axes(&mut svg, "SHAP values (log-odds), test set", "SHAP value", "");
    svg.line(frame.px(0.0), frame.py(0.0), frame.px(0.0), frame.py(order.len() as f64), "#888888", 1.0);
    let mut jitter = rng::seeded(0);
    for (slot, &j) in order.iter().rev().enumerate() {
        let col = shap.data.column(j);
        let (vlo, vhi) = range(col.iter().copied());
        for (phi, v) in shap.values.column(j).iter().zip(col) {
            let t = if vhi > vlo { (v - vlo) / (vhi - vlo) } else { 0.5 };
            let y = slot as f64 + 0.5 + jitter.random_range(-0.3..0.3);
            svg.circle(frame.px(*phi), frame.py(y), 2.0, &heat(t));
        }
        svg.text(frame.px(lo) + 4.0, frame.py(slot as f64 + 0.5) - 6.0, &shap.feature_names[j], "start", 10.0);
    }
    svg.finish()
}

fn ale_svg(curve: &crate::explain::AleCurve) -> String {
    let mut svg = Svg::new(WIDTH, HEIGHT);
    let frame = Frame::new(range(curve.edges.iter().copied()), range(curve.centered.iter().copied()));
    frame.draw_axes(&mut svg, &format!("ALE: {}", curve.feature), &curve.feature, "centered effect on risk");
    let pts: Vec<(f64, f64)> = curve.edges.iter().zip(&curve.centered).map(|(x, y)| (frame.px(*x), frame.py(*y))).collect();
    match curve.kind {
        AleKind::Binned => svg.polyline(&pts, "#1f77b4", 2.0),
        AleKind::Binary => {
            for p in &pts {
                svg.circle(p.0, p.1, 5.0, "#1f77b4");
            }
        }
    }
    // rug at the bin edges
    let base = frame.py(frame.y.0);
    for e in &curve.edges {
        svg.line(frame.px(*e), base, frame.px(*e), base - 8.0, "#333333", 1.0);
    }
    svg.finish()
}

fn histogram_svg(risk: &PosteriorRisk, title: &str) -> String {
    const BINS: usize = 40;
    let (lo, hi) = range(risk.samples.iter().copied());
    let width = if hi > lo { (hi - lo) / BINS as f64 } else { 1.0 };
    let mut counts = [0usize; BINS];
    for v in &risk.samples {
        counts[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(1) as f64;
    let mut svg = Svg::new(WIDTH, HEIGHT);
    let frame = Frame::new((lo, lo + width * BINS as f64), (0.0, peak));
    frame.draw_axes(&mut svg, title, "predicted probability", "draws");
    for (k, c) in counts.iter().enumerate() {
        let x0 = frame.px(lo + k as f64 * width);
        let x1 = frame.px(lo + (k + 1) as f64 * width);
        let top = frame.py(*c as f64);
        svg.rect(x0, top, x1 - x0 - 0.5, frame.py(0.0) - top, "#7f9fbf");
    }
    for (v, color) in [(risk.mean, "black"), (risk.ci_low, "#d62728"), (risk.ci_high, "#d62728")] {
        svg.line(frame.px(v), frame.py(0.0), frame.px(v), frame.py(peak), color, 1.5);
    }
    svg.text(
        frame.px(frame.x.1),
        frame.py(peak) + 12.0,
        &format!("mean {:.3}, 95% CI {:.3} to {:.3}", risk.mean, risk.ci_low, risk.ci_high),
        "end",
        11.0,
    );
    svg.finish()
}
