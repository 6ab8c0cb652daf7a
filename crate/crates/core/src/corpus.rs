//! Contract ingestion, source normalization, the labelled feature CSV, and
//! stratified partitioning.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;

use crate::dataset::{FeatureVector, Label, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::par;
use crate::rng;

/// One Solidity file. `normalized_text` has the same line structure as
/// `raw_text` with comments, string-literal interiors, and anything outside
/// printable ASCII blanked to spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractSource {
    pub id: String,
    pub raw_text: String,
    pub normalized_text: String,
}

impl ContractSource {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        let id = id.into();
        let raw_text = raw_text.into();
        let (normalized_text, diagnostics) = normalize_with_diagnostics(&raw_text);
        for d in diagnostics {
            warn!("{id}:{}: {}", d.line, d.message);
        }
        ContractSource {
            id,
            raw_text,
            normalized_text,
        }
    }
}

/// A non-fatal finding about the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line where the problem starts.
    pub line: usize,
    pub message: String,
}

/// Normalizes source text, logging any diagnostics as warnings.
pub fn normalize_source(raw_text: &str) -> String {
    let (text, diagnostics) = normalize_with_diagnostics(raw_text);
    for d in diagnostics {
        warn!("line {}: {}", d.line, d.message);
    }
    text
}

#[derive(Clone, Copy)]
enum Lex {
    Code,
    LineComment,
    BlockComment { start: usize },
    Str { quote: char, start: usize },
    Blank,
}

/// Blanks comments and string interiors character-for-character. Newlines
/// are always preserved. An unterminated block comment or string blanks the
/// rest of the file and yields a diagnostic.
pub fn normalize_with_diagnostics(raw_text: &str) -> (String, Vec<Diagnostic>) {
    let chars: Vec<char> = raw_text.chars().collect();
    let mut out = String::with_capacity(chars.len());
    let mut diagnostics = Vec::new();
    let mut state = Lex::Code;
    let mut line = 1;
    let mut i = 0;

    let blank = |c: char| if c == '\n' { '\n' } else { ' ' };

    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match state {
            Lex::Code => match (c, next) {
                ('/', Some('/')) => {
                    out.push_str("  ");
                    i += 1;
                    state = Lex::LineComment;
                }
                ('/', Some('*')) => {
                    out.push_str("  ");
                    i += 1;
                    state = Lex::BlockComment { start: line };
                }
                ('"' | '\'', _) => {
                    out.push(c);
                    state = Lex::Str {
                        quote: c,
                        start: line,
                    };
                }
                _ => out.push(printable(c)),
            },
            Lex::LineComment => {
                out.push(blank(c));
                if c == '\n' {
                    state = Lex::Code;
                }
            }
            Lex::BlockComment { .. } => {
                if c == '*' && next == Some('/') {
                    out.push_str("  ");
                    i += 1;
                    state = Lex::Code;
                } else {
                    out.push(blank(c));
                }
            }
            Lex::Str { quote, start } => {
                if c == '\\' && next.is_some_and(|n| n != '\n') {
                    out.push_str("  ");
                    i += 1;
                } else if c == quote {
                    out.push(c);
                    state = Lex::Code;
                } else if c == '\n' {
                    diagnostics.push(Diagnostic {
                        line: start,
                        message: "unterminated string literal; blanked to end of file".into(),
                    });
                    out.push('\n');
                    state = Lex::Blank;
                } else {
                    out.push(' ');
                }
            }
            Lex::Blank => out.push(blank(c)),
        }
        if c == '\n' {
            line += 1;
        }
        i += 1;
    }

    match state {
        Lex::BlockComment { start } => diagnostics.push(Diagnostic {
            line: start,
            message: "unterminated block comment; blanked to end of file".into(),
        }),
        Lex::Str { start, .. } => diagnostics.push(Diagnostic {
            line: start,
            message: "unterminated string literal; blanked to end of file".into(),
        }),
        _ => {}
    }
    (out, diagnostics)
}

fn printable(c: char) -> char {
    if c == '\n' || c == '\t' || c == ' ' || c.is_ascii_graphic() {
        c
    } else {
        ' '
    }
}

/// Stable identifier for a contract file: lowercased name with a trailing
/// `.sol` (any case) removed.
pub fn contract_id(file_name: &str) -> String {
    let lower = file_name.to_lowercase();
    match lower.strip_suffix(".sol") {
        Some(stem) => stem.to_string(),
        None => lower,
    }
}

fn is_solidity(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("sol"))
}

/// Loads and normalizes every `.sol` file directly inside `directory`,
/// sorted by id.
pub fn load_corpus(directory: &Path) -> Result<Vec<ContractSource>> {
    let entries = fs::read_dir(directory).map_err(|e| Error::io(directory, e))?;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(directory, e))?;
        let path = entry.path();
        if !path.is_file() || !is_solidity(&path) {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        files.push((contract_id(&name), path));
    }
    files.sort();
    for pair in files.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateId {
                id: pair[0].0.clone(),
                first: pair[0].1.clone(),
                second: pair[1].1.clone(),
            });
        }
    }

    par::try_map_slice(&files, |(id, path)| {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let raw = String::from_utf8_lossy(&bytes).into_owned();
        Ok(ContractSource::new(id.clone(), raw))
    })
}

/// Per-family 0/1 labels keyed by contract id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    pub family: Family,
    pub entries: BTreeMap<String, Label>,
}

fn csv_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

/// Checks a header of the form `File,<codes...>,Risk`. Returns the family
/// implied by the codes, or `None` for the bare `File,Risk` label header.
fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<Option<Family>> {
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    let malformed = || csv_error(path, 1, "header must be `File,<codes...>,Risk`");
    if fields.len() < 2 || fields[0] != "File" || fields[fields.len() - 1] != "Risk" {
        return Err(malformed());
    }
    let codes = &fields[1..fields.len() - 1];
    if codes.is_empty() {
        return Ok(None);
    }
    let (family, _) = Family::parse_code(codes[0])
        .ok_or_else(|| csv_error(path, 1, format!("unknown feature code `{}`", codes[0])))?;
    let expected = family.codes();
    if codes.len() != expected.len() || codes.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(csv_error(
            path,
            1,
            format!(
                "{} header needs codes {}, found {}",
                family,
                expected.join(","),
                codes.join(",")
            ),
        ));
    }
    Ok(Some(family))
}

fn parse_label(path: &Path, line: u64, cell: &str) -> Result<Label> {
    match cell.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(csv_error(
            path,
            line,
            format!("Risk must be 0 or 1, found `{other}`"),
        )),
    }
}

fn parse_bool(path: &Path, line: u64, cell: &str) -> Result<bool> {
    match cell.trim() {
        "True" => Ok(true),
        "False" => Ok(false),
        other => Err(csv_error(
            path,
            line,
            format!("feature cell must be True or False, found `{other}`"),
        )),
    }
}

struct Row {
    line: u64,
    id: String,
    bits: Vec<bool>,
    label: Label,
}

fn read_rows(path: &Path) -> Result<(Option<Family>, Vec<Row>)> {
    let mut reader = open_csv(path)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, 1, e.to_string()))?,
        None => return Err(csv_error(path, 1, "empty file")),
    };
    let family = parse_header(path, &header)?;
    let width = header.len();
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(csv_error(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let bits = (1..width - 1)
            .map(|i| parse_bool(path, line, &record[i]))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            line,
            id: contract_id(record[0].trim()),
            bits,
            label: parse_label(path, line, &record[width - 1])?,
        });
    }
    Ok((family, rows))
}

/// Reads per-file labels. Accepts either the full feature CSV for `family`
/// or a bare `File,Risk` label file.
pub fn read_labels(csv_path: &Path, family: Family) -> Result<LabelTable> {
    let (found, rows) = read_rows(csv_path)?;
    if let Some(found) = found {
        if found != family {
            return Err(csv_error(
                csv_path,
                1,
                format!("header codes belong to {found}, expected {family}"),
            ));
        }
    }
    let mut entries = BTreeMap::new();
    for row in rows {
        if entries.insert(row.id.clone(), row.label).is_some() {
            return Err(csv_error(
                csv_path,
                row.line,
                format!("duplicate id `{}`", row.id),
            ));
        }
    }
    Ok(LabelTable { family, entries })
}

/// Reads a full feature CSV back into a dataset; the family is taken from
/// the header codes.
pub fn read_dataset(csv_path: &Path) -> Result<LabeledDataset> {
    let (family, rows) = read_rows(csv_path)?;
    let family =
        family.ok_or_else(|| csv_error(csv_path, 1, "header carries no feature codes"))?;
    let samples = rows
        .into_iter()
        .map(|row| {
            Ok(Sample {
                id: row.id,
                features: FeatureVector::new(family, row.bits)?,
                label: row.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(family, samples)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_failed(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => csv_error(path, 0, format!("{other:?}")),
    }
}

/// Writes the feature table: `File,<codes>,Risk`, `False`/`True` cells,
/// `0`/`1` labels, one `\n`-terminated row per sample.
pub fn write_feature_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut writer = csv_writer(path)?;
    let mut header = vec!["File".to_string()];
    header.extend(dataset.family().codes());
    header.push("Risk".into());
    writer
        .write_record(&header)
        .map_err(|e| write_failed(path, e))?;
    for s in dataset.samples() {
        let mut row = vec![format!("{}.sol", s.id)];
        row.extend(
            s.features
                .bits()
                .iter()
                .map(|&b| if b { "True" } else { "False" }.to_string()),
        );
        row.push(s.label.to_string());
        writer.write_record(&row).map_err(|e| write_failed(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes a bare `File,Risk` label file.
pub fn write_labels(table: &LabelTable, path: &Path) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer
        .write_record(["File", "Risk"])
        .map_err(|e| write_failed(path, e))?;
    for (id, label) in &table.entries {
        writer
            .write_record([format!("{id}.sol"), label.to_string()])
            .map_err(|e| write_failed(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Indices of each class in id order, shuffled by `rng`.
fn shuffled_classes(dataset: &LabeledDataset, rng: &mut rng::Rng) -> [Vec<usize>; 2] {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| dataset.samples()[a].id.cmp(&dataset.samples()[b].id));
    let mut classes = [Vec::new(), Vec::new()];
    for i in order {
        classes[dataset.samples()[i].label as usize].push(i);
    }
    for class in &mut classes {
        class.shuffle(rng);
    }
    classes
}

/// Stratified train/test partition. Each class contributes
/// `round(class_size * test_fraction)` samples to the test side. Both sides
/// come back sorted by id.
pub fn split_dataset(
    dataset: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Stratify("dataset is empty".into()));
    }
    let sizes = dataset.class_sizes();
    for (label, &size) in sizes.iter().enumerate() {
        if size < 2 {
            return Err(Error::Stratify(format!(
                "class {label} has {size} sample(s); at least 2 are needed"
            )));
        }
    }
    let mut rng = rng::seeded(seed);
    let classes = shuffled_classes(dataset, &mut rng);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in &classes {
        let n_test = (class.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    Ok((
        dataset.subset(&train).sorted_by_id(),
        dataset.subset(&test).sorted_by_id(),
    ))
}

/// Stratified k-fold assignment. Returns `folds` disjoint index lists whose
/// union is every sample. Each class present must have at least `folds`
/// samples.
pub fn stratified_folds(dataset: &LabeledDataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    for (label, &size) in dataset.class_sizes().iter().enumerate() {
        if size > 0 && size < folds {
            return Err(Error::Stratify(format!(
                "class {label} has {size} sample(s), fewer than {folds} folds"
            )));
        }
    }
    if dataset.len() < folds {
        return Err(Error::Stratify(format!(
            "{} samples cannot fill {folds} folds",
            dataset.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let classes = shuffled_classes(dataset, &mut rng);
    let mut out = vec![Vec::new(); folds];
    for (position, &index) in classes.iter().flatten().enumerate() {
        out[position % folds].push(index);
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}
