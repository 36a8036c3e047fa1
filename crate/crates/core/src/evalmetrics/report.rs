//! Report CSVs.
//!
//! Every file starts with `<key>,delta,decoder`, so results from several
//! evaluation runs can share a directory: writing a `(decoder, delta)` pair
//! replaces that pair's earlier rows and keeps the others. Floats use six
//! decimals; undefined percentages are empty cells.
//!
//! | file | columns |
//! |------|---------|
//! | `accuracy_vs_snr.csv` | `snr_db,delta,decoder,subset_acc,per_label_acc,n` |
//! | `accuracy_vs_nue.csv` | `n_ue,delta,decoder,subset_acc,n` |
//! | `multilabel_cm.csv` | `snr_db,delta,decoder,alpha,tp,fp,fn,tn` |
//! | `nue_cm.csv` | `snr_db,delta,decoder,true_n_ue,pred_n_ue,count` |
//! | `alpha_chart.csv` | `snr_db,delta,decoder,column,correct_pct,incorrect_pct,n` |
//!
//! [`merge_reports`] pivots the two accuracy files into wide tables with one
//! column per `<decoder>_delta<d>` series.

use super::{GroupKey, GroupReport, NO_TX_COLUMN};
use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::path::Path;

pub const ACCURACY_VS_SNR: &str = "accuracy_vs_snr.csv";
pub const ACCURACY_VS_NUE: &str = "accuracy_vs_nue.csv";
pub const MULTILABEL_CM: &str = "multilabel_cm.csv";
pub const NUE_CM: &str = "nue_cm.csv";
pub const ALPHA_CHART: &str = "alpha_chart.csv";
pub const REPORT_FILES: [&str; 5] = [ACCURACY_VS_SNR, ACCURACY_VS_NUE, MULTILABEL_CM, NUE_CM, ALPHA_CHART];
pub const FIG_ACCURACY_VS_SNR: &str = "fig_accuracy_vs_snr.csv";
pub const FIG_ACCURACY_VS_NUE: &str = "fig_accuracy_vs_nue.csv";

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(f6).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::format(line, format!("{}: {kind:?}", path.display())),
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let found = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::format(1, format!("{}: unexpected header", path.display())));
    }
    r.records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| csv_err(path, e))
        })
        .collect()
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces rows of `(decoder, delta)` in `path` with `new_rows`.
fn upsert(path: &Path, header: &[&str], decoder: &str, delta: u8, new_rows: Vec<Vec<String>>) -> Result<()> {
    let delta = delta.to_string();
    let mut rows: Vec<Vec<String>> = read_rows(path, header)?
        .into_iter()
        .filter(|r| !(r[1] == delta && r[2] == decoder))
        .collect();
    rows.extend(new_rows);
    write_rows(path, header, &rows)
}

fn snr_of(g: &GroupReport) -> Result<f32> {
    match g.key {
        GroupKey::Snr(s) => Ok(s),
        GroupKey::NUe(_) => Err(Error::Config("expected reports grouped by SNR".into())),
    }
}

/// Writes (or updates) all five report files in `dir`.
pub fn write_reports(
    dir: &Path,
    decoder: &str,
    delta: u8,
    by_snr: &[GroupReport],
    by_nue: &[GroupReport],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let prefix = |key: String| vec![key, delta.to_string(), decoder.to_string()];

    let mut acc = Vec::new();
    let mut ml = Vec::new();
    let mut nue = Vec::new();
    let mut chart = Vec::new();
    for g in by_snr {
        let snr = f6(snr_of(g)? as f64);
        let r = &g.report;
        let mut row = prefix(snr.clone());
        row.extend([f6(r.subset_accuracy), f6(r.per_label_accuracy), r.n.to_string()]);
        acc.push(row);
        for (a, c) in r.per_alpha.iter().enumerate() {
            let mut row = prefix(snr.clone());
            row.extend([a.to_string(), c.tp.to_string(), c.fp.to_string(), c.fn_.to_string(), c.tn.to_string()]);
            ml.push(row);
        }
        for (t, counts) in r.nue_confusion.iter().enumerate() {
            for (p, c) in counts.iter().enumerate() {
                let mut row = prefix(snr.clone());
                row.extend([t.to_string(), p.to_string(), c.to_string()]);
                nue.push(row);
            }
        }
        for (i, col) in r.alpha_chart.iter().enumerate() {
            let name = if i == NO_TX_COLUMN { "no_tx".to_string() } else { i.to_string() };
            let mut row = prefix(snr.clone());
            row.extend([name, opt6(col.correct_pct), opt6(col.incorrect_pct), col.n.to_string()]);
            chart.push(row);
        }
    }
    let mut acc_nue = Vec::new();
    for g in by_nue {
        let n = match g.key {
            GroupKey::NUe(n) => n,
            GroupKey::Snr(_) => return Err(Error::Config("expected reports grouped by UE count".into())),
        };
        let mut row = prefix(n.to_string());
        row.extend([f6(g.report.subset_accuracy), g.report.n.to_string()]);
        acc_nue.push(row);
    }

    let files: [(&str, &[&str], Vec<Vec<String>>); 5] = [
        (ACCURACY_VS_SNR, &["snr_db", "delta", "decoder", "subset_acc", "per_label_acc", "n"], acc),
        (ACCURACY_VS_NUE, &["n_ue", "delta", "decoder", "subset_acc", "n"], acc_nue),
        (MULTILABEL_CM, &["snr_db", "delta", "decoder", "alpha", "tp", "fp", "fn", "tn"], ml),
        (NUE_CM, &["snr_db", "delta", "decoder", "true_n_ue", "pred_n_ue", "count"], nue),
        (
            ALPHA_CHART,
            &["snr_db", "delta", "decoder", "column", "correct_pct", "incorrect_pct", "n"],
            chart,
        ),
    ];
    for (name, header, rows) in files {
        upsert(&dir.join(name), header, decoder, delta, rows)?;
    }
    Ok(())
}

fn pivot(path: &Path, header: &[&str], out: &Path) -> Result<usize> {
    let rows = read_rows(path, header)?;
    let series_key = |r: &Vec<String>| -> Result<(String, u32)> {
        let d = r[1]
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad delta '{}'", path.display(), r[1])))?;
        Ok((r[2].clone(), d))
    };
    let mut series = BTreeSet::new();
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in &rows {
        series.insert(series_key(r)?);
        let k: f64 = r[0]
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad key '{}'", path.display(), r[0])))?;
        if !keys.iter().any(|(_, s)| *s == r[0]) {
            keys.push((k, r[0].clone()));
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let series: Vec<(String, u32)> = series.into_iter().collect();

    let mut table_header = vec![header[0].to_string()];
    table_header.extend(series.iter().map(|(dec, d)| format!("{dec}_delta{d}")));
    let mut table = Vec::new();
    for (_, key) in &keys {
        let mut row = vec![key.clone()];
        for s in &series {
            let cell = rows
                .iter()
                .find(|r| r[0] == *key && series_key(r).map(|k| k == *s).unwrap_or(false))
                .map(|r| r[3].clone())
                .unwrap_or_default();
            row.push(cell);
        }
        table.push(row);
    }
    let h: Vec<&str> = table_header.iter().map(String::as_str).collect();
    write_rows(out, &h, &table)?;
    Ok(table.len())
}

/// Builds the wide accuracy tables from the per-run files in `dir`.
/// Returns the row counts of the SNR and UE-count tables.
pub fn merge_reports(dir: &Path) -> Result<(usize, usize)> {
    let snr = dir.join(ACCURACY_VS_SNR);
    let nue = dir.join(ACCURACY_VS_NUE);
    if !snr.exists() && !nue.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no accuracy reports in {}", dir.display()),
        )));
    }
    let a = pivot(
        &snr,
        &["snr_db", "delta", "decoder", "subset_acc", "per_label_acc", "n"],
        &dir.join(FIG_ACCURACY_VS_SNR),
    )?;
    let b = pivot(
        &nue,
        &["n_ue", "delta", "decoder", "subset_acc", "n"],
        &dir.join(FIG_ACCURACY_VS_NUE),
    )?;
    Ok((a, b))
}
