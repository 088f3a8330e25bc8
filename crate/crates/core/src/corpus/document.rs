use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// Subject clusters used to group the multi-domain corpus.
pub const MIXSUB_DOMAINS: [&str; 7] = [
    "biological",
    "chemistry",
    "energy",
    "management",
    "nursing",
    "physics",
    "social science",
];

/// One paper record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub abstract_text: String,
    pub introduction: Option<String>,
    pub conclusion: Option<String>,
    /// Author-written highlights, the generation target.
    pub highlights: String,
    pub subject: Option<String>,
}

/// Wire form of a dataset line. Unknown fields are ignored.
#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(rename = "abstract", default)]
    abstract_text: Option<String>,
    #[serde(default)]
    introduction: Option<String>,
    #[serde(default)]
    conclusion: Option<String>,
    #[serde(default)]
    highlights: Option<String>,
    #[serde(default)]
    subject: Option<String>,
}

/// Which sections of a paper are fed to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputType {
    AbstractOnly,
    ConclusionOnly,
    IntroductionOnly,
    AbstractPlusConclusion,
    IntroductionPlusConclusion,
}

impl InputType {
    pub const ALL: [InputType; 5] = [
        InputType::AbstractOnly,
        InputType::ConclusionOnly,
        InputType::IntroductionOnly,
        InputType::AbstractPlusConclusion,
        InputType::IntroductionPlusConclusion,
    ];

    /// Maximum number of preprocessed source tokens.
    pub fn source_cap(self) -> usize {
        match self {
            InputType::AbstractOnly => 400,
            InputType::ConclusionOnly => 800,
            InputType::IntroductionOnly => 1200,
            InputType::AbstractPlusConclusion | InputType::IntroductionPlusConclusion => 1500,
        }
    }

    /// Stable single-byte code used by the embedding cache.
    pub fn code(self) -> u8 {
        match self {
            InputType::AbstractOnly => 0,
            InputType::ConclusionOnly => 1,
            InputType::IntroductionOnly => 2,
            InputType::AbstractPlusConclusion => 3,
            InputType::IntroductionPlusConclusion => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputType::AbstractOnly => "abstract",
            InputType::ConclusionOnly => "conclusion",
            InputType::IntroductionOnly => "introduction",
            InputType::AbstractPlusConclusion => "abstract+conclusion",
            InputType::IntroductionPlusConclusion => "introduction+conclusion",
        }
    }
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|it| it.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown input type `{s}` (expected one of abstract, conclusion, introduction, abstract+conclusion, introduction+conclusion)"
                )
            })
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Abort on the first record lacking highlights or abstract instead of dropping it.
    pub strict: bool,
    /// Declared subject labels; a record with a label outside the set is invalid.
    pub subjects: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedRecord {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub documents: Vec<Document>,
    pub dropped: Vec<DroppedRecord>,
}

pub fn load_dataset(path: impl AsRef<Path>, strict: bool) -> Result<LoadReport> {
    load_dataset_with(
        path,
        &LoadOptions {
            strict,
            subjects: None,
        },
    )
}

/// Read a JSON-lines dataset. Blank lines are skipped; line numbers are 1-based.
pub fn load_dataset_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LoadReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let mut documents = Vec::new();
    let mut dropped = Vec::new();
    let mut seen = HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: raw.id,
                line: line_no,
            });
        }

        let missing = match (&raw.abstract_text, &raw.highlights) {
            (_, None) => Some("missing highlights"),
            (_, Some(h)) if h.trim().is_empty() => Some("empty highlights"),
            (None, _) => Some("missing abstract"),
            (Some(a), _) if a.trim().is_empty() => Some("empty abstract"),
            _ => None,
        };
        if let Some(reason) = missing {
            if opts.strict {
                return Err(CorpusError::InvalidRecord {
                    line: line_no,
                    reason: format!("`{}`: {reason}", raw.id),
                });
            }
            dropped.push(DroppedRecord {
                line: line_no,
                id: raw.id,
                reason: reason.to_string(),
            });
            continue;
        }

        let subject = raw.subject.filter(|s| !s.trim().is_empty());
        if let (Some(labels), Some(s)) = (&opts.subjects, &subject) {
            if !labels.iter().any(|l| l == s) {
                return Err(CorpusError::InvalidRecord {
                    line: line_no,
                    reason: format!("`{}`: subject `{s}` is not a declared label", raw.id),
                });
            }
        }

        documents.push(Document {
            id: raw.id,
            abstract_text: raw.abstract_text.unwrap_or_default(),
            introduction: raw.introduction.filter(|s| !s.trim().is_empty()),
            conclusion: raw.conclusion.filter(|s| !s.trim().is_empty()),
            highlights: raw.highlights.unwrap_or_default(),
            subject,
        });
    }

    Ok(LoadReport { documents, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const A: &str = r#"{"id":"a","abstract":"We study x.","introduction":null,"conclusion":"Done.","highlights":"x is studied.","subject":"physics"}"#;
    const B: &str = r#"{"id":"b","abstract":"We study y.","highlights":"y is studied.","extra":42}"#;
    const C: &str = r#"{"id":"c","abstract":"We study z.","introduction":"Intro.","conclusion":null,"highlights":"z.","subject":null}"#;
    const NO_HL: &str = r#"{"id":"d","abstract":"Nothing here."}"#;

    #[test]
    fn loads_valid_records_in_file_order() {
        let f = write_lines(&[A, B, C]);
        let report = load_dataset(f.path(), false).unwrap();
        let ids: Vec<_> = report.documents.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(report.dropped.is_empty());
        assert_eq!(report.documents[0].subject.as_deref(), Some("physics"));
        assert_eq!(report.documents[0].introduction, None);
    }

    #[test]
    fn drops_records_without_highlights() {
        let f = write_lines(&[A, NO_HL, B]);
        let report = load_dataset(f.path(), false).unwrap();
        assert_eq!(report.documents.len(), 2);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].line, 2);
        assert_eq!(report.dropped[0].id, "d");
    }

    #[test]
    fn strict_mode_aborts_on_missing_highlights() {
        let f = write_lines(&[A, NO_HL]);
        let err = load_dataset(f.path(), true).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidRecord { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[A, "{not json", B]);
        match load_dataset(f.path(), false).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let f = write_lines(&[A, B, A]);
        assert!(matches!(
            load_dataset(f.path(), false).unwrap_err(),
            CorpusError::DuplicateId { line: 3, .. }
        ));
    }

    #[test]
    fn unreadable_file_is_an_io_error() {
        assert!(matches!(
            load_dataset("/nonexistent/data.jsonl", false).unwrap_err(),
            CorpusError::Io { .. }
        ));
    }

    #[test]
    fn undeclared_subject_is_rejected() {
        let f = write_lines(&[A]);
        let opts = LoadOptions {
            strict: false,
            subjects: Some(vec!["chemistry".into()]),
        };
        assert!(load_dataset_with(f.path(), &opts).is_err());
        let opts = LoadOptions {
            strict: false,
            subjects: Some(MIXSUB_DOMAINS.iter().map(|s| s.to_string()).collect()),
        };
        assert_eq!(load_dataset_with(f.path(), &opts).unwrap().documents.len(), 1);
    }

    #[test]
    fn input_type_caps_and_names() {
        let caps: Vec<_> = InputType::ALL.iter().map(|it| it.source_cap()).collect();
        assert_eq!(caps, [400, 800, 1200, 1500, 1500]);
        for it in InputType::ALL {
            assert_eq!(it.as_str().parse::<InputType>().unwrap(), it);
            assert_eq!(InputType::from_code(it.code()), Some(it));
        }
        assert!("full-text".parse::<InputType>().is_err());
    }
}
