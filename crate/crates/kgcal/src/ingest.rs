//! Tab-separated triple files.
//!
//! Positive files hold `subject<TAB>predicate<TAB>object` per line; labeled
//! files append a fourth field `1`, `-1` or `0` (`1` = true). There is no
//! header. Leading and trailing whitespace of each field is trimmed, blank
//! lines are skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use kgcal_core::{DatasetSplits, Dictionary, KnowledgeGraph, LabeledTriple, Triple};

use crate::error::{KgcalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsvFormat {
    Positive,
    Labeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    #[default]
    Reject,
    Dedup,
}

/// Whether unseen labels may extend the dictionaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vocabulary {
    Growable,
    Frozen,
}

/// Label dictionaries shared by all splits of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionaries {
    pub entities: Dictionary,
    pub relations: Dictionary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub lines: usize,
    pub duplicates_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFile {
    pub triples: Vec<Triple>,
    /// Present for labeled files, in line order.
    pub labels: Option<Vec<bool>>,
    pub stats: IngestStats,
}

fn parse_label(field: &str) -> Option<bool> {
    match field {
        "1" | "+1" => Some(true),
        "-1" | "0" => Some(false),
        _ => None,
    }
}

/// Parses triples from `reader`, resolving labels through `dicts`.
///
/// `path` is only used in diagnostics. Duplicate triples are checked for
/// positive files only; labeled splits may legitimately repeat a triple.
pub fn parse_triples<R: BufRead>(
    reader: R,
    path: &Path,
    format: TsvFormat,
    dicts: &mut Dictionaries,
    vocabulary: Vocabulary,
    duplicates: DuplicatePolicy,
) -> Result<ParsedFile> {
    let expected = match format {
        TsvFormat::Positive => 3,
        TsvFormat::Labeled => 4,
    };
    let mut triples = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    let mut stats = IngestStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| KgcalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != expected {
            return Err(KgcalError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected {expected} tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[..3].iter().any(|f| f.is_empty()) {
            return Err(KgcalError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: "empty subject, predicate or object".into(),
            });
        }
        let resolve = |dict: &mut Dictionary, label: &str, kind: &'static str| -> Result<usize> {
            match vocabulary {
                Vocabulary::Growable => Ok(dict.get_or_insert(label)),
                Vocabulary::Frozen => dict.id(label).ok_or_else(|| KgcalError::Vocabulary {
                    path: path.to_path_buf(),
                    line: lineno,
                    kind,
                    label: label.to_string(),
                }),
            }
        };
        let subject = resolve(&mut dicts.entities, fields[0], "entity")?;
        let predicate = resolve(&mut dicts.relations, fields[1], "relation")?;
        let object = resolve(&mut dicts.entities, fields[2], "entity")?;
        let triple = Triple::new(subject, predicate, object);
        if format == TsvFormat::Labeled {
            let label = parse_label(fields[3]).ok_or_else(|| KgcalError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("label must be 1, -1 or 0, found {:?}", fields[3]),
            })?;
            labels.push(label);
        } else if !seen.insert(triple) {
            match duplicates {
                DuplicatePolicy::Reject => {
                    return Err(KgcalError::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        message: format!("duplicate triple {}\t{}\t{}", fields[0], fields[1], fields[2]),
                    })
                }
                DuplicatePolicy::Dedup => {
                    stats.duplicates_dropped += 1;
                    continue;
                }
            }
        }
        triples.push(triple);
    }
    Ok(ParsedFile {
        triples,
        labels: (format == TsvFormat::Labeled).then_some(labels),
        stats,
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| KgcalError::io(path, e))
}

/// Reads a positive training file into a graph, growing `dicts`.
pub fn read_graph(path: &Path, dicts: &mut Dictionaries, duplicates: DuplicatePolicy) -> Result<(Vec<Triple>, IngestStats)> {
    let parsed = parse_triples(open(path)?, path, TsvFormat::Positive, dicts, Vocabulary::Growable, duplicates)?;
    Ok((parsed.triples, parsed.stats))
}

/// Reads an evaluation split against frozen dictionaries. Positive-format
/// files yield all-true labels.
pub fn read_split(path: &Path, format: TsvFormat, dicts: &mut Dictionaries) -> Result<Vec<LabeledTriple>> {
    let parsed = parse_triples(open(path)?, path, format, dicts, Vocabulary::Frozen, DuplicatePolicy::Dedup)?;
    let labels = parsed.labels.unwrap_or_else(|| vec![true; parsed.triples.len()]);
    Ok(parsed
        .triples
        .into_iter()
        .zip(labels)
        .map(|(t, l)| LabeledTriple::new(t, l))
        .collect())
}

#[derive(Debug, Clone)]
pub struct SplitPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    /// Format of the validation and test files.
    pub format: TsvFormat,
    pub duplicates: DuplicatePolicy,
}

pub fn load_splits(paths: &SplitPaths) -> Result<(DatasetSplits, IngestStats)> {
    let mut dicts = Dictionaries::default();
    let (train, stats) = read_graph(&paths.train, &mut dicts, paths.duplicates)?;
    let validation = read_split(&paths.valid, paths.format, &mut dicts)?;
    let test = read_split(&paths.test, paths.format, &mut dicts)?;
    let graph = KnowledgeGraph::new(dicts.entities, dicts.relations, train)?;
    let splits = DatasetSplits::new(graph, validation, test)?;
    Ok((splits, stats))
}

/// Writes `(subject, predicate, object[, label])` rows; labels are written
/// as `1` / `-1`.
pub fn write_tsv<'a, I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a str, &'a str, Option<bool>)>,
{
    let file = File::create(path).map_err(|e| KgcalError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| KgcalError::io(path, e);
    for (s, p, o, label) in rows {
        match label {
            None => writeln!(out, "{s}\t{p}\t{o}").map_err(io_err)?,
            Some(l) => writeln!(out, "{s}\t{p}\t{o}\t{}", if l { "1" } else { "-1" }).map_err(io_err)?,
        }
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, format: TsvFormat, dup: DuplicatePolicy) -> Result<(ParsedFile, Dictionaries)> {
        let mut dicts = Dictionaries::default();
        let parsed = parse_triples(
            Cursor::new(text),
            Path::new("mem.tsv"),
            format,
            &mut dicts,
            Vocabulary::Growable,
            dup,
        )?;
        Ok((parsed, dicts))
    }

    #[test]
    fn empty_file_gives_empty_graph() {
        let (parsed, dicts) = parse("", TsvFormat::Positive, DuplicatePolicy::Reject).unwrap();
        assert!(parsed.triples.is_empty());
        assert!(dicts.entities.is_empty());
    }

    #[test]
    fn duplicates_rejected_by_default_and_deduped_on_request() {
        let text = "a\tr\tb\nb\tr\tc\na\tr\tb\n";
        let err = parse(text, TsvFormat::Positive, DuplicatePolicy::Reject).unwrap_err();
        assert!(matches!(err, KgcalError::Parse { line: 3, .. }), "{err}");
        let (parsed, _) = parse(text, TsvFormat::Positive, DuplicatePolicy::Dedup).unwrap();
        assert_eq!(parsed.triples.len(), 2);
        assert_eq!(parsed.stats.duplicates_dropped, 1);
    }

    #[test]
    fn ids_follow_first_appearance_and_fields_are_trimmed() {
        let (parsed, dicts) = parse(" x \tlikes\ty\ny\tlikes\tz \n", TsvFormat::Positive, DuplicatePolicy::Reject).unwrap();
        assert_eq!(dicts.entities.labels(), ["x", "y", "z"]);
        assert_eq!(parsed.triples, [Triple::new(0, 0, 1), Triple::new(1, 0, 2)]);
    }

    #[test]
    fn labels_are_normalised() {
        let (parsed, _) = parse("a\tr\tb\t1\na\tr\tc\t-1\nb\tr\tc\t0\n", TsvFormat::Labeled, DuplicatePolicy::Reject).unwrap();
        assert_eq!(parsed.labels.unwrap(), [true, false, false]);
        let err = parse("a\tr\tb\t2\n", TsvFormat::Labeled, DuplicatePolicy::Reject).unwrap_err();
        assert!(matches!(err, KgcalError::Parse { line: 1, .. }));
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let err = parse("a\tr\tb\na\tr\n", TsvFormat::Positive, DuplicatePolicy::Reject).unwrap_err();
        assert!(matches!(err, KgcalError::Parse { line: 2, .. }));
        let err = parse("a\tr\tb\n", TsvFormat::Labeled, DuplicatePolicy::Reject).unwrap_err();
        assert!(matches!(err, KgcalError::Parse { line: 1, .. }));
    }

    #[test]
    fn frozen_dictionaries_reject_unknown_labels() {
        let mut dicts = Dictionaries::default();
        dicts.entities.get_or_insert("a");
        dicts.relations.get_or_insert("r");
        let err = parse_triples(
            Cursor::new("a\tr\tzz\t1\n"),
            Path::new("test.tsv"),
            TsvFormat::Labeled,
            &mut dicts,
            Vocabulary::Frozen,
            DuplicatePolicy::Reject,
        )
        .unwrap_err();
        assert!(matches!(err, KgcalError::Vocabulary { kind: "entity", .. }));
        assert_eq!(dicts.entities.len(), 1);
    }
}
