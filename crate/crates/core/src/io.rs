//! File formats: study tables, binary sequences, curve tables and reports.
//!
//! Tabular numbers are written in plain decimal with 9 significant digits and
//! a `.` separator, independent of locale. Reports are single JSON documents
//! with no timestamps, so a fixed seed reproduces them byte for byte.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ScatterDataset, ScatterPoint};
use crate::error::{Error, Result};
use crate::estimate::{RunFit, RunFitConfig, ScatterFit};
use crate::funnel::FunnelSample;
use crate::runs::RunCurve;
use crate::simulate::{BinarySequence, State};

pub const TOOL_NAME: &str = "markov-memory";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable holding the default seed for the command-line tool.
pub const SEED_ENV: &str = "MARKOV_MEMORY_SEED";

/// One row of a study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub n: u64,
    pub successes: Option<u64>,
    /// `successes / n` when successes were given.
    pub p_bar: f64,
    pub group: Option<String>,
}

impl StudyRecord {
    pub fn point(&self) -> ScatterPoint {
        ScatterPoint {
            n: self.n,
            p_bar: self.p_bar,
            label: self.group.clone(),
        }
    }
}

struct Columns {
    study_id: usize,
    n: usize,
    successes: Option<usize>,
    p_bar: Option<usize>,
    group: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
        };
        let required = |name: &str| {
            find(name).ok_or_else(|| Error::data(1, format!("missing required column `{name}`")))
        };
        let cols = Columns {
            study_id: required("study_id")?,
            n: required("n")?,
            successes: find("successes"),
            p_bar: find("p_bar"),
            group: find("group"),
        };
        if cols.successes.is_none() && cols.p_bar.is_none() {
            return Err(Error::data(
                1,
                "missing required column `successes` or `p_bar`",
            ));
        }
        Ok(cols)
    }
}

/// Reads a delimiter-separated study table with a header naming
/// `study_id`, `n`, `successes` and/or `p_bar`, and optionally `group`.
/// Each row must give exactly one of `successes` and `p_bar`.
pub fn parse_studies<R: Read>(
    reader: R,
    delimiter: u8,
) -> Result<(Vec<StudyRecord>, ScatterDataset)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::data(1, e.to_string()))?
        .clone();
    let cols = Columns::from_header(&header)?;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::data(e.position().map(|p| p.line()), e.to_string()))?;
        let line = row.position().map(|p| p.line());
        let field = |idx: Option<usize>| idx.and_then(|i| row.get(i)).filter(|s| !s.is_empty());
        if row.iter().all(str::is_empty) {
            continue;
        }

        let study_id = field(Some(cols.study_id))
            .ok_or_else(|| Error::data(line, "empty study_id"))?
            .to_string();
        let n_text = field(Some(cols.n)).ok_or_else(|| Error::data(line, "empty n"))?;
        let n: i64 = n_text
            .parse()
            .map_err(|_| Error::data(line, format!("n = `{n_text}` is not an integer")))?;
        if n <= 0 {
            return Err(Error::data(line, format!("n = {n} must be positive")));
        }
        let n = n as u64;

        let (successes, p_bar) = match (field(cols.successes), field(cols.p_bar)) {
            (Some(_), Some(_)) => return Err(Error::data(line, "both successes and p_bar given")),
            (None, None) => return Err(Error::data(line, "neither successes nor p_bar given")),
            (Some(s), None) => {
                let k: u64 = s.parse().map_err(|_| {
                    Error::data(
                        line,
                        format!("successes = `{s}` is not a nonnegative integer"),
                    )
                })?;
                if k > n {
                    return Err(Error::data(
                        line,
                        format!("successes = {k} exceeds n = {n}"),
                    ));
                }
                (Some(k), k as f64 / n as f64)
            }
            (None, Some(p)) => {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::data(line, format!("p_bar = `{p}` is not a number")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::data(line, format!("p_bar = {v} outside [0, 1]")));
                }
                (None, v)
            }
        };
        records.push(StudyRecord {
            study_id,
            n,
            successes,
            p_bar,
            group: field(cols.group).map(str::to_string),
        });
    }
    let dataset = ScatterDataset::new(records.iter().map(StudyRecord::point).collect())
        .map_err(|e| Error::data(None, e.to_string()))?;
    Ok((records, dataset))
}

/// Writes a study table (`study_id,n,successes,p_bar,group`).
pub fn studies_table(records: &[StudyRecord]) -> String {
    let mut out = String::from("study_id,n,successes,p_bar,group\n");
    for r in records {
        let (succ, p_bar) = match r.successes {
            Some(k) => (k.to_string(), String::new()),
            None => (String::new(), format_number(r.p_bar)),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.study_id,
            r.n,
            succ,
            p_bar,
            r.group.as_deref().unwrap_or("")
        ));
    }
    out
}

/// Parses a binary trace.
///
/// Without an alphabet, every non-whitespace character must be `1` (state A)
/// or `0` (state B); errors name the 1-based character position. With an
/// alphabet `(a, b)`, the text is split on whitespace into tokens, each equal
/// to `a` or `b`; errors name the 1-based token position.
pub fn parse_sequence(text: &str, alphabet: Option<(&str, &str)>) -> Result<BinarySequence> {
    let states = match alphabet {
        None => text
            .chars()
            .enumerate()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| match c {
                '1' => Ok(State::A),
                '0' => Ok(State::B),
                other => Err(Error::data(
                    None,
                    format!("unexpected symbol `{other}` at position {}", i + 1),
                )),
            })
            .collect::<Result<Vec<_>>>()?,
        Some((a, b)) => {
            if a == b {
                return Err(Error::InvalidArgument(
                    "alphabet symbols must differ".into(),
                ));
            }
            text.split_whitespace()
                .enumerate()
                .map(|(i, tok)| {
                    if tok == a {
                        Ok(State::A)
                    } else if tok == b {
                        Ok(State::B)
                    } else {
                        Err(Error::data(
                            None,
                            format!("unexpected symbol `{tok}` at position {}", i + 1),
                        ))
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    BinarySequence::new(states).map_err(|_| Error::data(None, "sequence is empty"))
}

/// `0`/`1` text with a trailing newline.
pub fn sequence_text(seq: &BinarySequence) -> String {
    let mut s = seq.to_bit_string();
    s.push('\n');
    s
}

/// Plain decimal with 9 significant digits.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s == "-0" || s.chars().all(|c| c == '0' || c == '.' || c == '-') {
        "0".to_string()
    } else {
        s
    }
}

/// Two-column `m,frequency` table.
pub fn curve_table(curve: &RunCurve) -> String {
    let mut out = String::from("m,frequency\n");
    for (m, f) in &curve.freqs {
        out.push_str(&format!("{m},{}\n", format_number(*f)));
    }
    out
}

/// Reads an `m,frequency` table (header optional, `#` comments allowed).
pub fn parse_curve(text: &str, state: State) -> Result<RunCurve> {
    let mut freqs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == '\t' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::data(line_no, "expected two columns: m, frequency"));
        }
        let m = match fields[0].parse::<usize>() {
            Ok(m) => m,
            Err(_) if freqs.is_empty() && fields[0].parse::<f64>().is_err() => continue,
            Err(_) => {
                return Err(Error::data(
                    line_no,
                    format!("run length `{}` is not a positive integer", fields[0]),
                ))
            }
        };
        let f: f64 = fields[1].parse().map_err(|_| {
            Error::data(
                line_no,
                format!("frequency `{}` is not a number", fields[1]),
            )
        })?;
        if m == 0 {
            return Err(Error::data(line_no, "run length must be at least 1"));
        }
        if !(f >= 0.0 && f.is_finite()) {
            return Err(Error::data(
                line_no,
                format!("frequency {f} must be nonnegative"),
            ));
        }
        if freqs.insert(m, f).is_some() {
            return Err(Error::data(line_no, format!("duplicate run length {m}")));
        }
    }
    if freqs.is_empty() {
        return Err(Error::data(None, "curve has no rows"));
    }
    Ok(RunCurve::new(state, freqs))
}

/// `n,lower,upper` table, bounds clipped to `[0, 1]`.
pub fn funnel_table(samples: &[FunnelSample]) -> String {
    let mut out = String::from("n,lower,upper\n");
    for s in samples.iter().map(FunnelSample::clamped) {
        out.push_str(&format!(
            "{},{},{}\n",
            format_number(s.n),
            format_number(s.lower),
            format_number(s.upper)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(name: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            name: name.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCurves {
    pub on: RunCurve,
    pub off: RunCurve,
}

/// Self-describing result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter_fit: Option<ScatterFit>,
    /// Coverage of the memory-free funnel (`nu = 1`) at the fitted center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memoryless_coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_fit: Option<RunFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mle_fit: Option<RunFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_fit_config: Option<RunFitConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub funnel: Vec<FunnelSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_curves: Option<RunCurves>,
}

impl AnalysisReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.into(),
            seed: None,
            inputs: Vec::new(),
            scatter_fit: None,
            memoryless_coverage: None,
            run_fit: None,
            mle_fit: None,
            run_fit_config: None,
            funnel: Vec::new(),
            run_curves: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::data(Some(e.line() as u64), e.to_string()))
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}
