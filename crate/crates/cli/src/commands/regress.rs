use std::fs;

use serde_json::json;

use bwp_core::influence::read_score_table;
use bwp_core::market::parse_trades_path;
use bwp_core::regression::{
    build_rows, correlation_matrix, render_regression_tables, run_subset_regressions,
    summarize_influence, write_correlation_csv, write_fit_csv, write_summary_csv, CorrVar,
    DesignSpec, GroupAttr,
};

use crate::config::{scores_hash, synth_hash, RunConfig};
use crate::meta::{verify_meta, write_meta};
use crate::CliError;

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let s_hash = scores_hash(cfg);
    verify_meta(&cfg.paths.scores, &s_hash)?;
    verify_meta(&cfg.paths.tape, &synth_hash(cfg))?;

    let scores = read_score_table(&cfg.paths.scores)?;
    let parsed = parse_trades_path(&cfg.paths.tape)?;
    let rows = build_rows(&scores, &parsed.records, cfg.channels.hours)?;

    let spec = DesignSpec {
        families: cfg.regress.families.clone(),
        include_predicted: false,
        pvalues: cfg.regress.pvalues,
        small_sample: cfg.regress.small_sample,
    };
    let out = run_subset_regressions(&rows, &spec)?;

    let dir = &cfg.paths.report_dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for fit in &out.fits {
        let name = format!("coefficients_{}.csv", fit.subset.label());
        write_fit_csv(dir.join(&name), fit)?;
        written.push(name);
    }
    let mut tables = render_regression_tables(&out.fits);
    for (tag, why) in &out.skipped {
        tables.push_str(&format!("skipped {}: {why}\n", tag.label()));
        log::warn!("skipped {} regression: {why}", tag.label());
    }
    let tables_path = dir.join("regression_tables.txt");
    fs::write(&tables_path, tables)?;
    written.push("regression_tables.txt".into());

    for attr in GroupAttr::ALL {
        let table = summarize_influence(&rows, attr)?;
        let name = format!("summary_{}.csv", attr.label());
        write_summary_csv(dir.join(&name), &table)?;
        written.push(name);
    }

    let corr = correlation_matrix(&rows, &CorrVar::ALL)?;
    if !corr.zero_variance.is_empty() {
        log::warn!("zero-variance correlation columns: {}", corr.zero_variance.join(", "));
    }
    write_correlation_csv(dir.join("correlation.csv"), &corr)?;
    written.push("correlation.csv".into());

    write_meta(&tables_path, "regress", &s_hash)?;

    Ok(json!({
        "command": "regress",
        "rows": rows.len(),
        "fits": out.fits.len(),
        "skipped": out.skipped.iter().map(|(t, _)| t.label()).collect::<Vec<_>>(),
        "out_dir": dir.display().to_string(),
        "files": written,
        "config_hash": s_hash,
    }))
}
