//! Demonstration files: CSV (canonical) and JSON.
//!
//! CSV files carry a header naming `x1..xd` and optionally `demo`, `t` and
//! `v1..vd`. Without a `demo` column the whole file is one demonstration.
//! JSON files hold an array of `{dt, states, velocities}` objects.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stable_ds_core::data::Demonstration;
use stable_ds_core::MAX_DIM;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadOptions {
    /// Sampling interval; overrides timestamps when set.
    pub dt: Option<f64>,
}

/// Files that make up a dataset path: the file itself, or every `.csv` and
/// `.json` file of a directory in name order.
pub fn dataset_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && Format::from_path(&p).is_some() {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::format(path, None, "directory holds no .csv or .json files"));
    }
    Ok(files)
}

/// Loads every demonstration under `path`, numbering them in file order.
pub fn load_demonstrations(path: &Path, opts: &LoadOptions) -> Result<Vec<Demonstration>> {
    let mut demos = Vec::new();
    for file in dataset_files(path)? {
        let format = Format::from_path(&file).unwrap_or(Format::Csv);
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let parsed = match format {
            Format::Csv => parse_csv(&text, &file, opts)?,
            Format::Json => parse_json(&text, &file, opts)?,
        };
        demos.extend(parsed);
    }
    let dim = demos[0].dim();
    if let Some(bad) = demos.iter().find(|d| d.dim() != dim) {
        return Err(Error::format(
            path,
            None,
            format!("demonstration {} has {} state columns, expected {dim}", bad.index, bad.dim()),
        ));
    }
    for (i, d) in demos.iter_mut().enumerate() {
        d.index = i;
    }
    Ok(demos)
}

struct Columns {
    demo: Option<usize>,
    t: Option<usize>,
    x: Vec<usize>,
    v: Vec<usize>,
    width: usize,
}

fn columns(header: &csv::StringRecord, path: &Path) -> Result<Columns> {
    let err = |m: String| Error::format(path, Some(1), m);
    let (mut demo, mut t) = (None, None);
    let mut x = [None; MAX_DIM];
    let mut v = [None; MAX_DIM];
    for (i, name) in header.iter().enumerate() {
        let slot = match name {
            "demo" => &mut demo,
            "t" => &mut t,
            _ => {
                let (kind, k) = name.split_at(1.min(name.len()));
                let k: usize = k.parse().ok().filter(|k| (1..=MAX_DIM).contains(k)).ok_or_else(|| err(format!("unknown column `{name}`")))?;
                match kind {
                    "x" => &mut x[k - 1],
                    "v" => &mut v[k - 1],
                    _ => return Err(err(format!("unknown column `{name}`"))),
                }
            }
        };
        if slot.replace(i).is_some() {
            return Err(err(format!("duplicate column `{name}`")));
        }
    }
    let d = x.iter().take_while(|c| c.is_some()).count();
    if d == 0 || x[d..].iter().any(Option::is_some) {
        return Err(err("state columns must be x1..xd without gaps".into()));
    }
    let vd = v.iter().filter(|c| c.is_some()).count();
    if vd != 0 && (vd != d || v[..d].iter().any(Option::is_none)) {
        return Err(err("velocity columns must be v1..vd matching the state columns".into()));
    }
    Ok(Columns {
        demo,
        t,
        x: x[..d].iter().flatten().copied().collect(),
        v: v[..vd].iter().flatten().copied().collect(),
        width: header.len(),
    })
}

#[derive(Default)]
struct Pending {
    id: String,
    line: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
}

fn finish(p: Pending, index: usize, path: &Path, opts: &LoadOptions) -> Result<Demonstration> {
    let err = |m: String| Error::format(path, Some(p.line), m);
    if p.states.len() < 2 {
        return Err(err(format!("demonstration `{}` has fewer than 2 samples", p.id)));
    }
    let dt = match (opts.dt, p.times.is_empty()) {
        (Some(dt), _) => dt,
        (None, false) => (p.times[p.times.len() - 1] - p.times[0]) / (p.times.len() - 1) as f64,
        (None, true) => return Err(err("no `t` column and no dt given".into())),
    };
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(err(format!("dt must be positive, got {dt}")));
    }
    let demo = if p.velocities.is_empty() {
        Demonstration::from_states(p.states, dt, index)
    } else {
        Demonstration::new(p.states, p.velocities, dt, index)
    };
    demo.map_err(|e| err(e.to_string()))
}

pub fn parse_csv(text: &str, path: &Path, opts: &LoadOptions) -> Result<Vec<Demonstration>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::format(path, Some(1), e.to_string()))?.clone();
    if header.iter().all(str::is_empty) {
        return Err(Error::format(path, Some(1), "empty file"));
    }
    let cols = columns(&header, path)?;

    let mut demos = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    let mut current = Pending::default();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut record)
            .map_err(|e| Error::format(path, e.position().map(|p| p.line() as usize), e.to_string()))?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |m: String| Error::format(path, Some(line), m);
        if record.len() != cols.width {
            return Err(err(format!("expected {} fields, found {}", cols.width, record.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let cell = &record[i];
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("`{cell}` in column `{}` is not a finite number", &header[i])))
        };
        let id = cols.demo.map_or(String::new(), |c| record[c].to_string());
        if current.states.is_empty() {
            current.id = id;
            current.line = line;
        } else if id != current.id {
            if seen.contains(&id) {
                return Err(err(format!("rows of demonstration `{id}` are not contiguous")));
            }
            seen.push(current.id.clone());
            let done = std::mem::replace(
                &mut current,
                Pending {
                    id,
                    line,
                    ..Pending::default()
                },
            );
            demos.push(finish(done, demos.len(), path, opts)?);
        }
        if let Some(c) = cols.t {
            let t = num(c)?;
            if current.times.last().is_some_and(|&prev| t <= prev) {
                return Err(err("timestamps must increase".into()));
            }
            current.times.push(t);
        }
        current.states.push(cols.x.iter().map(|&c| num(c)).collect::<Result<_>>()?);
        if !cols.v.is_empty() {
            current.velocities.push(cols.v.iter().map(|&c| num(c)).collect::<Result<_>>()?);
        }
    }
    if current.states.is_empty() && demos.is_empty() {
        return Err(Error::format(path, Some(2), "no data rows"));
    }
    demos.push(finish(current, demos.len(), path, opts)?);
    Ok(demos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDemo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    states: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    velocities: Option<Vec<Vec<f64>>>,
}

pub fn parse_json(text: &str, path: &Path, opts: &LoadOptions) -> Result<Vec<Demonstration>> {
    let raw: Vec<JsonDemo> = serde_json::from_str(text).map_err(|e| Error::format(path, Some(e.line()), e.to_string()))?;
    if raw.is_empty() {
        return Err(Error::format(path, None, "no demonstrations"));
    }
    raw.into_iter()
        .enumerate()
        .map(|(i, d)| {
            let err = |m: String| Error::format(path, None, format!("demonstration {i}: {m}"));
            let dt = opts.dt.or(d.dt).ok_or_else(|| err("no dt given".into()))?;
            if d.states.len() < 2 {
                return Err(err("fewer than 2 samples".into()));
            }
            let demo = match d.velocities {
                Some(v) => Demonstration::new(d.states, v, dt, i),
                None => Demonstration::from_states(d.states, dt, i),
            };
            demo.map_err(|e| err(e.to_string()))
        })
        .collect()
}

/// CSV with `demo,t,x1..xd,v1..vd` columns; `t` restarts at 0 per demo.
pub fn to_csv(demos: &[Demonstration]) -> String {
    let d = demos.first().map_or(0, Demonstration::dim);
    let mut out = String::from("demo,t");
    for prefix in ["x", "v"] {
        for i in 1..=d {
            let _ = write!(out, ",{prefix}{i}");
        }
    }
    out.push('\n');
    for demo in demos {
        for (k, (x, v)) in demo.states.iter().zip(&demo.velocities).enumerate() {
            let _ = write!(out, "{},{}", demo.index, k as f64 * demo.dt);
            for c in x.iter().chain(v) {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn to_json(demos: &[Demonstration]) -> String {
    let raw: Vec<JsonDemo> = demos
        .iter()
        .map(|d| JsonDemo {
            dt: Some(d.dt),
            states: d.states.clone(),
            velocities: Some(d.velocities.clone()),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&raw).expect("plain data serializes");
    s.push('\n');
    s
}

/// SHA-256 over the dataset's files: each file contributes its name and
/// contents, in [`dataset_files`] order.
pub fn fingerprint(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for file in dataset_files(path)? {
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, dt: Option<f64>) -> Result<Vec<Demonstration>> {
        parse_csv(text, Path::new("in.csv"), &LoadOptions { dt })
    }

    fn line_of(e: Error) -> Option<usize> {
        match e {
            Error::Format { line, .. } => line,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn velocities_pass_through() {
        let d = parse("t,x1,x2,v1,v2\n0,0,0,1,0\n0.1,0.1,0,1,0\n0.2,0.2,0,1,0\n", None).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].len(), 3);
        assert_eq!(d[0].velocities, vec![vec![1.0, 0.0]; 3]);
        assert!((d[0].dt - 0.1).abs() < 1e-15);
    }

    #[test]
    fn velocities_are_estimated() {
        let d = parse("x1,x2\n0,0\n0.1,0\n0.2,0\n", Some(0.1)).unwrap();
        for v in &d[0].velocities {
            assert!((v[0] - 1.0).abs() < 1e-12 && v[1] == 0.0);
        }
    }

    #[test]
    fn demo_column_splits() {
        let text = "demo,t,x1\n0,0,1\n0,1,2\n7,0,5\n7,2,4\n7,4,3\n";
        let d = parse(text, None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].len(), d[1].len()), (2, 3));
        assert_eq!(d[1].index, 1);
        assert_eq!(d[1].dt, 2.0);
    }

    #[test]
    fn format_errors_carry_lines() {
        assert_eq!(line_of(parse("", None).unwrap_err()), Some(1));
        assert_eq!(line_of(parse("t,x1\n", None).unwrap_err()), Some(2));
        assert_eq!(line_of(parse("t,x1\n0,1\n1,2,3\n", None).unwrap_err()), Some(3));
        assert_eq!(line_of(parse("t,x1\n0,1\n1,abc\n", None).unwrap_err()), Some(3));
        assert_eq!(line_of(parse("t,x1\n0,1\n1,nan\n", None).unwrap_err()), Some(3));
        assert_eq!(line_of(parse("t,x1\n0,1\n", None).unwrap_err()), Some(2));
        assert_eq!(line_of(parse("x1\n0\n1\n", None).unwrap_err()), Some(2));
        assert_eq!(line_of(parse("t,x1\n0,1\n0,2\n", None).unwrap_err()), Some(3));
        assert_eq!(line_of(parse("t,y1\n0,1\n", None).unwrap_err()), Some(1));
        assert_eq!(line_of(parse("t,x2\n0,1\n", None).unwrap_err()), Some(1));
        assert_eq!(line_of(parse("x1,x2,v1\n0,1,1\n", Some(1.0)).unwrap_err()), Some(1));
        let split = "demo,t,x1\n0,0,1\n0,1,2\n1,0,1\n1,1,1\n0,2,3\n";
        assert_eq!(line_of(parse(split, None).unwrap_err()), Some(6));
    }

    #[test]
    fn dt_flag_overrides_timestamps() {
        let d = parse("t,x1\n0,0\n1,1\n", Some(0.5)).unwrap();
        assert_eq!(d[0].dt, 0.5);
    }

    #[test]
    fn csv_round_trip() {
        let text = "demo,t,x1,x2,v1,v2\n0,0,1.5,-2,0.25,1e-7\n0,0.1,1.25,-2.5,0.5,3\n";
        let d = parse(text, None).unwrap();
        let again = parse(&to_csv(&d), None).unwrap();
        assert_eq!(d[0].states, again[0].states);
        assert_eq!(d[0].velocities, again[0].velocities);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let p = Path::new("in.json");
        let opts = LoadOptions::default();
        let d = parse_json(r#"[{"dt":0.5,"states":[[0,0],[1,1],[2,2]]}]"#, p, &opts).unwrap();
        assert_eq!(d[0].velocities[1], vec![2.0, 2.0]);
        let again = parse_json(&to_json(&d), p, &opts).unwrap();
        assert_eq!(again, d);
        assert!(parse_json(r#"[{"states":[[0],[1]]}]"#, p, &opts).is_err());
        assert!(parse_json("[]", p, &opts).is_err());
        assert_eq!(line_of(parse_json("[\n{\"dt\": 1,\n\"states\": oops}]", p, &opts).unwrap_err()), Some(3));
    }
}
