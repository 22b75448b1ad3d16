//! Plot-ready files: spectrum CSVs, metadata sidecars and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use qdimer::spectra::{Observable, Sign, SpectrumSeries};
use serde::Serialize;

/// Write `bytes` to a temporary sibling and rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "output path has no file name",
        )
    })?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// File-name stem of an observable: `A1B1_plus`, `A2`.
pub fn observable_stem(obs: Observable) -> String {
    match obs {
        Observable::Dimer { pair, sign } => {
            let s = match sign {
                Sign::Plus => "plus",
                Sign::Minus => "minus",
            };
            format!("{pair:?}_{s}")
        }
        Observable::Monomer(_) => obs.to_string(),
    }
}

/// Sidecar path `name.meta.json` next to `name.csv`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

/// CSV text with header `omega,vbar[,stat_err]`; missing points are `nan`.
pub fn spectrum_csv(series: &SpectrumSeries) -> String {
    let mut out = String::from(if series.stat_err.is_some() {
        "omega,vbar,stat_err\n"
    } else {
        "omega,vbar\n"
    });
    for (k, (w, v)) in series.omega.iter().zip(&series.values).enumerate() {
        out.push_str(&number(*w));
        out.push(',');
        out.push_str(&number(v.unwrap_or(f64::NAN)));
        if let Some(err) = &series.stat_err {
            out.push(',');
            out.push_str(&number(err[k]));
        }
        out.push('\n');
    }
    out
}

pub fn write_spectrum_csv(series: &SpectrumSeries, path: &Path) -> std::io::Result<()> {
    write_atomic(path, spectrum_csv(series).as_bytes())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub omega: f64,
    pub vbar: Option<f64>,
    pub stat_err: Option<f64>,
}

pub fn parse_spectrum_csv(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let with_err = match header {
        "omega,vbar" => false,
        "omega,vbar,stat_err" => true,
        other => return Err(format!("unexpected header `{other}`")),
    };
    let parse = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|e| format!("line {line}: `{s}`: {e}"))
    };
    lines
        .enumerate()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 2 + with_err as usize {
                return Err(format!(
                    "line {}: expected {} columns",
                    n + 2,
                    2 + with_err as usize
                ));
            }
            let v = parse(cols[1], n + 2)?;
            Ok(Row {
                omega: parse(cols[0], n + 2)?,
                vbar: (!v.is_nan()).then_some(v),
                stat_err: if with_err {
                    Some(parse(cols[2], n + 2)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

pub fn read_spectrum_csv(path: &Path) -> Result<Vec<Row>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_spectrum_csv(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Quote a CSV field when it contains a separator or a quote.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
