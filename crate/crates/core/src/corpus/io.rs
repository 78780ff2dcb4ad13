use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{normalize_attribute, tokenize, ParallelSample, Record, Table, UnlabeledSample};
use crate::error::{Error, Result};

/// On-disk layout of a parallel corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InputFormat {
    /// One JSON object per line with `id`, `table` and `text`.
    #[default]
    Jsonl,
    /// Infobox `attr_index:token` box lines; texts are read line by
    /// line from the sibling file with the `.sent` extension.
    Infobox,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    attribute: String,
    value: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonSample {
    id: String,
    table: Vec<JsonRecord>,
    text: String,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Parses one JSONL line into a sample.
pub fn parse_parallel_line(line: &str) -> std::result::Result<ParallelSample, String> {
    let raw: JsonSample = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut records = Vec::with_capacity(raw.table.len());
    for r in raw.table {
        let record = Record::from_raw(&r.attribute, &r.value)
            .map_err(|e| format!("record {:?}: {e}", r.attribute))?;
        records.push(record);
    }
    let table = Table::new(records).map_err(|e| e.to_string())?;
    let text = tokenize(&raw.text);
    if text.is_empty() {
        return Err("empty text".into());
    }
    Ok(ParallelSample {
        id: raw.id,
        table,
        text,
    })
}

pub fn load_parallel(path: impl AsRef<Path>, format: InputFormat) -> Result<Vec<ParallelSample>> {
    let path = path.as_ref();
    match format {
        InputFormat::Jsonl => load_jsonl(path),
        InputFormat::Infobox => load_infobox(path, path.with_extension("sent")),
    }
}

fn load_jsonl(path: &Path) -> Result<Vec<ParallelSample>> {
    let content = read(path)?;
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_parallel_line(line).map_err(|reason| parse_err(path, i + 1, reason))?;
        if !ids.insert(sample.id.clone()) {
            return Err(parse_err(path, i + 1, format!("duplicate id {:?}", sample.id)));
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes samples in the canonical JSONL form.
pub fn write_parallel(path: impl AsRef<Path>, samples: &[ParallelSample]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        let raw = JsonSample {
            id: s.id.clone(),
            table: s
                .table
                .records()
                .iter()
                .map(|r| JsonRecord {
                    attribute: r.attribute.clone(),
                    value: r.value.join(" "),
                })
                .collect(),
            text: s.text.joined(),
        };
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parses one infobox line. Fields whose token is `<none>` are dropped;
/// a field without an `_index` suffix counts as index 1.
pub fn parse_infobox_line(line: &str) -> std::result::Result<Table, String> {
    let mut groups: Vec<(String, Vec<(usize, String)>)> = Vec::new();
    for field in line.split_whitespace() {
        let (key, token) = field
            .split_once(':')
            .ok_or_else(|| format!("field {field:?} has no ':'"))?;
        if token.is_empty() {
            return Err(format!("field {field:?} has an empty token"));
        }
        if token == "<none>" {
            continue;
        }
        let (attribute, index) = match key.rsplit_once('_') {
            Some((a, idx)) if !a.is_empty() && idx.chars().all(|c| c.is_ascii_digit()) && !idx.is_empty() => {
                let index: usize = idx.parse().map_err(|_| format!("bad index in {field:?}"))?;
                (a, index)
            }
            _ => (key, 1),
        };
        let attribute = normalize_attribute(attribute);
        if attribute.is_empty() {
            return Err(format!("field {field:?} has an empty attribute"));
        }
        let token = token.to_lowercase();
        match groups.iter_mut().find(|(a, _)| *a == attribute) {
            Some((_, toks)) => toks.push((index, token)),
            None => groups.push((attribute, vec![(index, token)])),
        }
    }
    let records = groups
        .into_iter()
        .map(|(attribute, mut toks)| {
            toks.sort_by_key(|(i, _)| *i);
            Record::new(attribute, toks.into_iter().map(|(_, t)| t).collect())
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    Table::new(records).map_err(|e| e.to_string())
}

/// Pairs box lines with text lines; ids are 1-based line numbers.
pub fn load_infobox(box_path: impl AsRef<Path>, text_path: impl AsRef<Path>) -> Result<Vec<ParallelSample>> {
    let (box_path, text_path) = (box_path.as_ref(), text_path.as_ref());
    let boxes = read(box_path)?;
    let texts = read(text_path)?;
    let boxes: Vec<&str> = boxes.lines().collect();
    let texts: Vec<&str> = texts.lines().collect();
    if boxes.len() != texts.len() {
        return Err(parse_err(
            text_path,
            texts.len().min(boxes.len()) + 1,
            format!("{} box lines but {} text lines", boxes.len(), texts.len()),
        ));
    }
    boxes
        .iter()
        .zip(&texts)
        .enumerate()
        .map(|(i, (b, t))| {
            let table = parse_infobox_line(b).map_err(|r| parse_err(box_path, i + 1, r))?;
            let text = tokenize(t);
            if text.is_empty() {
                return Err(parse_err(text_path, i + 1, "empty text"));
            }
            Ok(ParallelSample {
                id: (i + 1).to_string(),
                table,
                text,
            })
        })
        .collect()
}

/// One raw text per line; the id is the 1-based line number. Blank lines are
/// skipped with a warning.
pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Vec<UnlabeledSample>> {
    let path = path.as_ref();
    let content = read(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let text = tokenize(line);
        if text.is_empty() {
            log::warn!("{}:{}: blank line skipped", path.display(), i + 1);
            continue;
        }
        out.push(UnlabeledSample {
            id: (i + 1).to_string(),
            text,
        });
    }
    Ok(out)
}

/// Reads one whitespace-tokenized segment per line, keeping blank lines as
/// empty segments so line alignment is preserved.
pub fn read_token_lines(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    Ok(read(path)?
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

pub fn write_token_lines<S: AsRef<[String]>>(path: impl AsRef<Path>, lines: &[S]) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut buf = String::new();
    for l in lines {
        buf.push_str(&l.as_ref().join(" "));
        buf.push('\n');
    }
    fs::write(&path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TextSequence;
    use proptest::prelude::*;

    #[test]
    fn one_line_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        fs::write(
            &p,
            r#"{"id":"1","table":[{"attribute":"name","value":"Denise Scott"}],"text":"denise scott performs"}"#,
        )
        .unwrap();
        let s = load_parallel(&p, InputFormat::Jsonl).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].text.len(), 3);
        assert_eq!(s[0].table.records()[0].value, vec!["denise", "scott"]);
    }

    #[test]
    fn missing_text_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        fs::write(
            &p,
            "{\"id\":\"1\",\"table\":[{\"attribute\":\"a\",\"value\":\"x\"}],\"text\":\"x\"}\n{\"id\":\"2\",\"table\":[{\"attribute\":\"a\",\"value\":\"x\"}]}\n",
        )
        .unwrap();
        match load_parallel(&p, InputFormat::Jsonl) {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("text"), "{reason}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let line = r#"{"id":"1","table":[{"attribute":"a","value":"x"}],"text":"x"}"#;
        fs::write(&p, format!("{line}\n{line}\n")).unwrap();
        assert!(matches!(
            load_parallel(&p, InputFormat::Jsonl),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn infobox_field_grammar() {
        let t = parse_infobox_line("name_1:denise name_2:margaret name_3:scott image:<none>").unwrap();
        assert_eq!(t.records().len(), 1);
        assert_eq!(t.records()[0].attribute, "name");
        assert_eq!(t.records()[0].value, vec!["denise", "margaret", "scott"]);

        let t = parse_infobox_line("birth_date_2:april birth_date_1:24 birth_date_3:1955").unwrap();
        assert_eq!(t.records()[0].attribute, "birth_date");
        assert_eq!(t.records()[0].value, vec!["24", "april", "1955"]);

        assert!(parse_infobox_line("image:<none>").is_err());
        assert!(parse_infobox_line("broken").is_err());
    }

    #[test]
    fn infobox_pairs_with_sent_file() {
        let dir = tempfile::tempdir().unwrap();
        let b = dir.path().join("train.box");
        fs::write(&b, "name_1:john name_2:lane\tchildren_1:2\n").unwrap();
        fs::write(dir.path().join("train.sent"), "John Lane is here .\n").unwrap();
        let s = load_parallel(&b, InputFormat::Infobox).unwrap();
        assert_eq!(s[0].table.records().len(), 2);
        assert_eq!(s[0].text.joined(), "john lane is here .");
    }

    #[test]
    fn unlabeled_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.txt");
        fs::write(&p, "a b\nc\nd e f\n").unwrap();
        assert_eq!(load_unlabeled(&p).unwrap().len(), 3);
        fs::write(&p, "").unwrap();
        assert!(load_unlabeled(&p).unwrap().is_empty());
        fs::write(&p, "a\n\n  \nb\n").unwrap();
        let s = load_unlabeled(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].id, "4");
    }

    fn arb_sample() -> impl Strategy<Value = ParallelSample> {
        (
            "[a-z0-9]{1,8}",
            prop::collection::vec(("[a-z]{1,5}", prop::collection::vec("[a-z0-9,.()]{1,4}", 1..4)), 1..5),
            prop::collection::vec("[a-z0-9,.]{1,6}", 1..10),
        )
            .prop_map(|(id, recs, text)| ParallelSample {
                id,
                table: Table::new(recs.into_iter().map(|(a, v)| Record::new(a, v).unwrap()).collect()).unwrap(),
                text: TextSequence(text),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn jsonl_round_trip_is_byte_identical(samples in prop::collection::vec(arb_sample(), 1..6)) {
            let mut samples = samples;
            for (i, s) in samples.iter_mut().enumerate() {
                s.id = format!("{}-{i}", s.id);
            }
            let dir = tempfile::tempdir().unwrap();
            let a = dir.path().join("a.jsonl");
            let b = dir.path().join("b.jsonl");
            write_parallel(&a, &samples).unwrap();
            let loaded = load_parallel(&a, InputFormat::Jsonl).unwrap();
            prop_assert_eq!(&loaded, &samples);
            write_parallel(&b, &loaded).unwrap();
            prop_assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        }
    }
}
