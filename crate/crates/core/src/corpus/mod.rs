//! Annotated review corpora: label types, CSV ingestion and export,
//! class histograms, seeded train/test splitting and a synthetic corpus
//! generator used as a stand-in for unpublished data.
//!
//! A record is one comment with three labels (aspect, polarity, language).
//! The polarity label set is declared by a [`Manifest`] so that binary and
//! three-way corpora can share one loader.

mod split;
mod synth;

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{split, Partition, SplitSpec};
pub use synth::{
    aspect_marker, marker_rule_aspect, marker_rule_polarity, polarity_marker, synth_generate,
    SynthSpec,
};

/// Header of the on-disk corpus format, in column order.
pub const CSV_HEADER: [&str; 4] = ["text", "aspect", "polarity", "language"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: bad {column} label `{value}`")]
    BadLabel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {0}: empty text")]
    EmptyText(usize),
    #[error("row {0}: malformed row")]
    MalformedRow(usize),
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("split would leave an empty partition (train {train}, test {test})")]
    DegenerateSplit { train: usize, test: usize },
    #[error("train fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("synthetic spec too small: {0}")]
    SpecTooSmall(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("csv write failed: {0}")]
    Write(String),
}

impl CorpusError {
    /// 1-based data row the error refers to, if any.
    pub fn row(&self) -> Option<usize> {
        match self {
            CorpusError::BadLabel { row, .. } => Some(*row),
            CorpusError::EmptyText(row) | CorpusError::MalformedRow(row) => Some(*row),
            _ => None,
        }
    }
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A closed label enumeration with stable integer ids.
pub trait Label: Copy + Eq + fmt::Debug + 'static {
    const ALL: &'static [Self];

    fn name(self) -> &'static str;

    fn id(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).expect("member of ALL")
    }

    fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    fn parse_name(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
    }
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl Label for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];

            fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

label_enum!(
    /// What a comment talks about. Ids 0..3 are the class indices of the
    /// aspect task.
    AspectLabel {
        Person => "person",
        Episode => "episode",
        Movie => "movie",
        General => "general",
    }
);

label_enum!(
    PolarityLabel {
        Negative => "negative",
        Neutral => "neutral",
        Positive => "positive",
    }
);

label_enum!(
    LanguageTag {
        Hausa => "hausa",
        Engausa => "engausa",
    }
);

impl FromStr for AspectLabel {
    type Err = ();

    /// Accepts the label name or the annotation codes `1`..`4`.
    fn from_str(s: &str) -> Result<Self, ()> {
        if let Some(l) = Self::parse_name(s) {
            return Ok(l);
        }
        match s.trim().parse::<usize>() {
            Ok(code @ 1..=4) => Ok(Self::ALL[code - 1]),
            _ => Err(()),
        }
    }
}

impl FromStr for PolarityLabel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::parse_name(s).ok_or(())
    }
}

impl FromStr for LanguageTag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::parse_name(s).ok_or(())
    }
}

/// Which label column an operation looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelField {
    Aspect,
    Polarity,
    Language,
}

impl FromStr for LabelField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aspect" => Ok(LabelField::Aspect),
            "polarity" => Ok(LabelField::Polarity),
            "language" => Ok(LabelField::Language),
            other => Err(format!("unknown label field `{other}`")),
        }
    }
}

impl fmt::Display for LabelField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelField::Aspect => "aspect",
            LabelField::Polarity => "polarity",
            LabelField::Language => "language",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub text: String,
    pub aspect: AspectLabel,
    pub polarity: PolarityLabel,
    pub language: LanguageTag,
}

/// Dataset-level declarations. Polarity class ids are positions in
/// `polarity_classes`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub polarity_classes: Vec<PolarityLabel>,
    #[serde(default)]
    pub source: String,
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
}

fn default_schema_version() -> u32 {
    1
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            polarity_classes: PolarityLabel::ALL.to_vec(),
            source: String::new(),
            schema_version: 1,
        }
    }
}

impl Manifest {
    pub fn binary() -> Self {
        Manifest {
            polarity_classes: vec![PolarityLabel::Negative, PolarityLabel::Positive],
            ..Manifest::default()
        }
    }

    /// Parses a TOML manifest (`polarity_classes`, `schema_version`, `source`).
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(s).map_err(|e| CorpusError::BadManifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.polarity_classes.len() < 2 {
            return Err(CorpusError::BadManifest(
                "polarity_classes needs at least two members".into(),
            ));
        }
        for (i, p) in self.polarity_classes.iter().enumerate() {
            if self.polarity_classes[..i].contains(p) {
                return Err(CorpusError::BadManifest(format!("duplicate polarity class `{p}`")));
            }
        }
        if self.schema_version != 1 {
            return Err(CorpusError::BadManifest(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        Ok(())
    }

    pub fn polarity_id(&self, p: PolarityLabel) -> Option<usize> {
        self.polarity_classes.iter().position(|&q| q == p)
    }

    pub fn num_polarity_classes(&self) -> usize {
        self.polarity_classes.len()
    }
}

/// Records in file order plus the manifest they were validated against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Comment>,
    pub manifest: Manifest,
}

/// Outcome of checking a corpus file row by row.
#[derive(Debug, Default)]
pub struct ValidationReport {
    pub rows: usize,
    pub errors: Vec<CorpusError>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

impl Dataset {
    pub fn new(records: Vec<Comment>, manifest: Manifest) -> Self {
        Dataset { records, manifest }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Reads a corpus CSV, failing on the first bad row.
    pub fn from_reader<R: Read>(reader: R, manifest: &Manifest) -> Result<Self> {
        let (records, mut errors, _) = read_rows(reader, manifest)?;
        if !errors.is_empty() {
            return Err(errors.swap_remove(0));
        }
        Ok(Dataset::new(records, manifest.clone()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let werr = |e: csv::Error| CorpusError::Write(e.to_string());
        w.write_record(CSV_HEADER).map_err(werr)?;
        for c in &self.records {
            w.write_record([
                c.text.as_str(),
                c.aspect.name(),
                c.polarity.name(),
                c.language.name(),
            ])
            .map_err(werr)?;
        }
        w.flush().map_err(|e| CorpusError::Write(e.to_string()))?;
        Ok(())
    }

    /// Class id of a record for the given field. Polarity ids follow the
    /// manifest order.
    pub fn label_id(&self, index: usize, field: LabelField) -> usize {
        let c = &self.records[index];
        match field {
            LabelField::Aspect => c.aspect.id(),
            LabelField::Polarity => self
                .manifest
                .polarity_id(c.polarity)
                .expect("polarity validated against manifest"),
            LabelField::Language => c.language.id(),
        }
    }

    pub fn labels(&self, field: LabelField) -> Vec<usize> {
        (0..self.len()).map(|i| self.label_id(i, field)).collect()
    }

    pub fn class_names(&self, field: LabelField) -> Vec<&'static str> {
        match field {
            LabelField::Aspect => AspectLabel::ALL.iter().map(|l| l.name()).collect(),
            LabelField::Polarity => self.manifest.polarity_classes.iter().map(|l| l.name()).collect(),
            LabelField::Language => LanguageTag::ALL.iter().map(|l| l.name()).collect(),
        }
    }

    pub fn num_classes(&self, field: LabelField) -> usize {
        self.class_names(field).len()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(
            indices.iter().map(|&i| self.records[i].clone()).collect(),
            self.manifest.clone(),
        )
    }
}

pub fn load_dataset(path: &Path, manifest: &Manifest) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Dataset::from_reader(std::io::BufReader::new(file), manifest)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ds.write_csv(std::io::BufWriter::new(file))
}

/// Checks every row of a corpus file and collects all row-level errors.
/// File-level problems (unreadable, missing header column) are returned
/// as `Err`.
pub fn validate_file(path: &Path, manifest: &Manifest) -> Result<ValidationReport> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    validate_reader(std::io::BufReader::new(file), manifest)
}

pub fn validate_reader<R: Read>(reader: R, manifest: &Manifest) -> Result<ValidationReport> {
    let (_, errors, rows) = read_rows(reader, manifest)?;
    Ok(ValidationReport { rows, errors })
}

/// Returns parsed records, row errors and the number of data rows seen.
fn read_rows<R: Read>(
    reader: R,
    manifest: &Manifest,
) -> Result<(Vec<Comment>, Vec<CorpusError>, usize)> {
    manifest.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers = match rdr.byte_headers() {
        Ok(h) => h.clone(),
        Err(_) => return Err(CorpusError::MissingColumn(CSV_HEADER[0].into())),
    };
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim_ascii() == name.as_bytes())
            .ok_or_else(|| CorpusError::MissingColumn(name.into()))?;
    }
    let width = headers.len();

    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut raw = csv::ByteRecord::new();
    let mut row = 0usize;
    loop {
        row += 1;
        match rdr.read_byte_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(_) => {
                errors.push(CorpusError::MalformedRow(row));
                continue;
            }
        }
        if raw.len() != width {
            errors.push(CorpusError::MalformedRow(row));
            continue;
        }
        let mut fields = [""; 4];
        let mut utf8_ok = true;
        for (f, &c) in fields.iter_mut().zip(&cols) {
            match std::str::from_utf8(&raw[c]) {
                Ok(s) => *f = s,
                Err(_) => utf8_ok = false,
            }
        }
        if !utf8_ok {
            errors.push(CorpusError::MalformedRow(row));
            continue;
        }
        match parse_record(row, fields, manifest) {
            Ok(c) => records.push(c),
            Err(e) => errors.push(e),
        }
    }
    Ok((records, errors, row - 1))
}

fn parse_record(row: usize, [text, aspect, polarity, language]: [&str; 4], manifest: &Manifest) -> Result<Comment> {
    let bad = |column: &str, value: &str| CorpusError::BadLabel {
        row,
        column: column.into(),
        value: value.into(),
    };
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyText(row));
    }
    let aspect: AspectLabel = aspect.parse().map_err(|_| bad("aspect", aspect))?;
    let polarity_label: PolarityLabel = polarity.parse().map_err(|_| bad("polarity", polarity))?;
    if manifest.polarity_id(polarity_label).is_none() {
        return Err(bad("polarity", polarity));
    }
    let language: LanguageTag = language.parse().map_err(|_| bad("language", language))?;
    Ok(Comment {
        text: text.to_string(),
        aspect,
        polarity: polarity_label,
        language,
    })
}

/// Label counts for one field, in class-id order, every member listed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub field: LabelField,
    pub counts: Vec<(String, usize)>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, c)| c).sum()
    }

    pub fn count(&self, label: &str) -> usize {
        self.counts
            .iter()
            .find(|(l, _)| l == label)
            .map_or(0, |(_, c)| *c)
    }

    /// Two-column `label,count` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,count\n");
        for (label, count) in &self.counts {
            out.push_str(&format!("{label},{count}\n"));
        }
        out
    }
}

pub fn class_distribution(ds: &Dataset, field: LabelField) -> Histogram {
    let names = ds.class_names(field);
    let mut counts = vec![0usize; names.len()];
    for i in 0..ds.len() {
        counts[ds.label_id(i, field)] += 1;
    }
    Histogram {
        field,
        counts: names.into_iter().map(String::from).zip(counts).collect(),
    }
}
