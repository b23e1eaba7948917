use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fasctrack::metrics::{bland_altman, complete_pairs, icc_2_1, iou, AgreementStats, IccResult};
use fasctrack::report::{export_comparison, format_value, frame_series, read_results, Quantity};
use fasctrack::segmentation::load_mask_file;
use fasctrack::ClassKind;

const RASTER_EXTENSIONS: &[&str] = &["png", "bmp", "tif", "tiff", "jpg", "jpeg"];

/// One IoU measurement between same-named masks in two directories.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPairScore {
    pub name: String,
    pub iou: f64,
}

fn raster_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_raster = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if path.is_file() && is_raster {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// IoU for every file in `a` that has a counterpart with the same name in `b`.
pub fn compare_mask_dirs(a: &Path, b: &Path) -> anyhow::Result<Vec<MaskPairScore>> {
    let mut scores = Vec::new();
    for path_a in raster_files(a)? {
        let name = path_a.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let path_b = b.join(&name);
        if !path_b.is_file() {
            eprintln!("warning: {name} has no counterpart in {}", b.display());
            continue;
        }
        // The class tag does not affect IoU.
        let ma = load_mask_file(&path_a, ClassKind::Fascicle)?;
        let mb = load_mask_file(&path_b, ClassKind::Fascicle)?;
        let value = iou(&ma, &mb).with_context(|| format!("comparing {name}"))?;
        scores.push(MaskPairScore { name, iou: value });
    }
    if scores.is_empty() {
        bail!("no matching mask files between {} and {}", a.display(), b.display());
    }
    Ok(scores)
}

/// A table of paired measurements, one column per method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTable {
    pub methods: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Read a values CSV. Method columns are those named `value_*`; when there
/// are none, every column except `frame` is used. Rows with an empty cell in
/// any method column are dropped.
pub fn read_method_table(path: &Path) -> anyhow::Result<MethodTable> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let mut columns: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("value_"))
        .map(|(i, _)| i)
        .collect();
    if columns.is_empty() {
        columns = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h != "frame")
            .map(|(i, _)| i)
            .collect();
    }
    if columns.len() < 2 {
        bail!("{}: need at least two method columns", path.display());
    }
    let methods = columns.iter().map(|&i| headers[i].to_string()).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = columns.iter().map(|&i| record.get(i).unwrap_or("").trim()).collect();
        if cells.iter().any(|c| c.is_empty()) {
            continue;
        }
        let row = cells
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: data row {}", path.display(), line + 1))?;
        rows.push(row);
    }
    Ok(MethodTable { methods, rows })
}

/// Agreement between methods. Bland-Altman uses the first two columns.
#[derive(Debug)]
pub struct AgreementReport {
    pub methods: Vec<String>,
    pub bland_altman: AgreementStats,
    pub icc: Result<IccResult, String>,
}

pub fn agreement(table: &MethodTable) -> anyhow::Result<AgreementReport> {
    let pairs: Vec<(f64, f64)> = table.rows.iter().map(|r| (r[0], r[1])).collect();
    let ba = bland_altman(&pairs)?;
    Ok(AgreementReport {
        methods: table.methods.clone(),
        bland_altman: ba,
        icc: icc_2_1(&table.rows).map_err(|e| e.to_string()),
    })
}

/// Compare one quantity between two results CSVs, frame by frame.
pub fn compare_results(
    a: &Path,
    b: &Path,
    quantity: Quantity,
    comparison_out: Option<&Path>,
) -> anyhow::Result<AgreementReport> {
    let mut sa = frame_series(&read_results(a)?, quantity);
    let mut sb = frame_series(&read_results(b)?, quantity);
    let n = sa.len().max(sb.len());
    sa.resize(n, None);
    sb.resize(n, None);
    if let Some(out) = comparison_out {
        export_comparison(&sa, &sb, out)?;
    }
    let pairs = complete_pairs(&sa, &sb);
    let rows: Vec<[f64; 2]> = pairs.iter().map(|&(x, y)| [x, y]).collect();
    Ok(AgreementReport {
        methods: vec![a.display().to_string(), b.display().to_string()],
        bland_altman: bland_altman(&pairs)?,
        icc: icc_2_1(&rows).map_err(|e| e.to_string()),
    })
}

pub fn format_iou_report(scores: &[MaskPairScore]) -> String {
    let mut s = String::from("file,iou\n");
    for p in scores {
        let _ = writeln!(s, "{},{}", p.name, format_value(p.iou));
    }
    let mean = scores.iter().map(|p| p.iou).sum::<f64>() / scores.len() as f64;
    let _ = writeln!(s, "mean,{}", format_value(mean));
    s
}

pub fn format_agreement_report(r: &AgreementReport) -> String {
    let ba = &r.bland_altman;
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "methods,{}", r.methods.join(" "));
    let _ = writeln!(s, "n,{}", ba.n);
    for (name, v) in [
        ("bias", ba.bias),
        ("sd_diff", ba.sd_diff),
        ("loa_low", ba.loa_low),
        ("loa_high", ba.loa_high),
    ] {
        let _ = writeln!(s, "{name},{}", format_value(v));
    }
    match &r.icc {
        Ok(icc) => {
            let _ = writeln!(s, "icc_2_1,{}", format_value(icc.icc));
        }
        Err(reason) => {
            let _ = writeln!(s, "icc_2_1,");
            eprintln!("warning: ICC not computed: {reason}");
        }
    }
    s
}
