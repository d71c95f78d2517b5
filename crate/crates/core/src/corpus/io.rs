use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Corpus, CorpusError, Document, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown corpus format `{other}` (expected jsonl or csv)")),
        }
    }
}

/// Field names used when reading a corpus.
///
/// In CSV files individual scores live in columns named `<scores>.<name>`,
/// e.g. `scores.compound`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub id: String,
    pub text: String,
    pub utility_label: String,
    pub privacy_label: Option<String>,
    pub scores: Option<String>,
    pub vector: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: "id".into(),
            text: "text".into(),
            utility_label: "utility_label".into(),
            privacy_label: Some("privacy_label".into()),
            scores: Some("scores".into()),
            vector: "vector".into(),
        }
    }
}

/// Provenance fields attached to rows of a privatized corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyTag {
    pub mechanism: String,
    pub epsilon: f64,
    pub epsilon_unit: String,
}

pub fn load_corpus(path: &Path, format: Format, schema: &Schema) -> Result<Corpus> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus").to_string();
    match format {
        Format::Jsonl => parse_jsonl(BufReader::new(file), schema, name),
        Format::Csv => parse_csv(file, schema, name),
    }
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn required_string(obj: &Map<String, Value>, field: &str, row: usize) -> Result<String> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(CorpusError::MissingField { row, field: field.to_string() }),
        Some(v) => scalar_to_string(v)
            .ok_or_else(|| CorpusError::Malformed { row, message: format!("field `{field}` is not a scalar") }),
    }
}

fn parse_vector(v: &Value, row: usize) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| CorpusError::Malformed { row, message: "vector must be an array".into() })?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| CorpusError::Malformed { row, message: "vector entries must be finite numbers".into() })
        })
        .collect()
}

pub fn parse_jsonl<R: BufRead>(reader: R, schema: &Schema, name: impl Into<String>) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed { row, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed { row, message: e.to_string() })?;
        let obj = value
            .as_object()
            .ok_or_else(|| CorpusError::Malformed { row, message: "row is not a JSON object".into() })?;

        let vector = match obj.get(&schema.vector) {
            None | Some(Value::Null) => None,
            Some(v) => Some(parse_vector(v, row)?),
        };
        let text = match (obj.get(&schema.text), &vector) {
            (None | Some(Value::Null), Some(_)) => String::new(),
            _ => required_string(obj, &schema.text, row)?,
        };
        let mut doc = Document::new(
            required_string(obj, &schema.id, row)?,
            text,
            required_string(obj, &schema.utility_label, row)?,
        );
        doc.vector = vector;
        if let Some(field) = &schema.privacy_label {
            doc.privacy_label = obj.get(field).and_then(scalar_to_string).filter(|s| !s.is_empty());
        }
        if let Some(field) = &schema.scores {
            match obj.get(field) {
                None | Some(Value::Null) => {}
                Some(Value::Object(map)) => {
                    for (k, v) in map {
                        let f = v.as_f64().ok_or_else(|| CorpusError::Malformed {
                            row,
                            message: format!("score `{k}` is not numeric"),
                        })?;
                        doc.scores.insert(k.clone(), f);
                    }
                }
                Some(_) => {
                    return Err(CorpusError::Malformed { row, message: format!("`{field}` must be an object") })
                }
            }
        }
        documents.push(doc);
    }
    Corpus::from_documents(name, documents)
}

pub fn parse_csv<R: Read>(reader: R, schema: &Schema, name: impl Into<String>) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CorpusError::Malformed { row: 1, message: e.to_string() })?.clone();
    let col = |field: &str| headers.iter().position(|h| h == field);
    let id_col = col(&schema.id).ok_or_else(|| CorpusError::MissingField { row: 1, field: schema.id.clone() })?;
    let util_col = col(&schema.utility_label)
        .ok_or_else(|| CorpusError::MissingField { row: 1, field: schema.utility_label.clone() })?;
    let text_col = col(&schema.text);
    let vector_col = col(&schema.vector);
    if text_col.is_none() && vector_col.is_none() {
        return Err(CorpusError::MissingField { row: 1, field: schema.text.clone() });
    }
    let privacy_col = schema.privacy_label.as_deref().and_then(col);
    let score_cols: Vec<(usize, String)> = match &schema.scores {
        Some(prefix) => {
            let prefix = format!("{prefix}.");
            headers
                .iter()
                .enumerate()
                .filter_map(|(i, h)| h.strip_prefix(&prefix).map(|n| (i, n.to_string())))
                .collect()
        }
        None => Vec::new(),
    };

    let mut documents = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| CorpusError::Malformed { row, message: e.to_string() })?;
        let get = |c: usize| record.get(c).unwrap_or("");
        let vector = match vector_col.map(get).filter(|s| !s.trim().is_empty()) {
            Some(s) => Some(
                s.split_whitespace()
                    .map(|t| t.parse::<f64>().ok().filter(|f| f.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| CorpusError::Malformed { row, message: "vector entries must be finite numbers".into() })?,
            ),
            None => None,
        };
        let text = match text_col {
            Some(c) => get(c).to_string(),
            None if vector.is_some() => String::new(),
            None => return Err(CorpusError::MissingField { row, field: schema.text.clone() }),
        };
        let mut doc = Document::new(get(id_col), text, get(util_col));
        if doc.id.is_empty() {
            return Err(CorpusError::MissingField { row, field: schema.id.clone() });
        }
        if doc.utility_label.is_empty() {
            return Err(CorpusError::MissingField { row, field: schema.utility_label.clone() });
        }
        doc.vector = vector;
        doc.privacy_label = privacy_col.map(get).filter(|s| !s.is_empty()).map(str::to_string);
        for (c, score_name) in &score_cols {
            let raw = get(*c);
            if raw.is_empty() {
                continue;
            }
            let f = raw.parse::<f64>().map_err(|_| CorpusError::Malformed {
                row,
                message: format!("score `{score_name}` is not numeric: `{raw}`"),
            })?;
            doc.scores.insert(score_name.clone(), f);
        }
        documents.push(doc);
    }
    Corpus::from_documents(name, documents)
}

#[derive(Serialize)]
struct JsonlRow<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    utility_label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    privacy_label: Option<&'a str>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    scores: &'a BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vector: Option<&'a [f64]>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    tag: Option<&'a PrivacyTag>,
}

/// Writes a corpus in the JSONL row schema. Vector-bearing documents are
/// written with `vector` in place of `text`.
pub fn write_jsonl<W: Write>(corpus: &Corpus, tag: Option<&PrivacyTag>, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for doc in corpus.documents() {
        let row = JsonlRow {
            id: &doc.id,
            text: if doc.vector.is_some() { None } else { Some(&doc.text) },
            utility_label: &doc.utility_label,
            privacy_label: doc.privacy_label.as_deref(),
            scores: &doc.scores,
            vector: doc.vector.as_deref(),
            tag,
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_three_jsonl_rows() {
        let data = r#"{"id":"1","text":"good stuff","utility_label":"pos"}
{"id":"2","text":"bad stuff","utility_label":"neg"}
{"id":"3","text":"fine","utility_label":"pos","scores":{"compound":0.3}}
"#;
        let c = parse_jsonl(data.as_bytes(), &Schema::default(), "t").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.utility_labels(), ["neg", "pos"]);
        assert_eq!(c.documents()[0].id, "1");
        assert_eq!(c.documents()[2].scores["compound"], 0.3);
        assert!(c.privacy_labels().is_empty());
    }

    #[test]
    fn missing_text_names_the_field() {
        let data = "{\"id\":\"1\",\"text\":\"ok\",\"utility_label\":\"a\"}\n{\"id\":\"2\",\"utility_label\":\"a\"}\n";
        match parse_jsonl(data.as_bytes(), &Schema::default(), "t") {
            Err(CorpusError::MissingField { row, field }) => {
                assert_eq!(row, 2);
                assert_eq!(field, "text");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let data = "{\"id\":\"1\",\"text\":\"ok\",\"utility_label\":\"a\"}\n{not json\n";
        assert!(matches!(
            parse_jsonl(data.as_bytes(), &Schema::default(), "t"),
            Err(CorpusError::Malformed { row: 2, .. })
        ));
        let csv_data = "id,text\n1,hello\n";
        assert!(matches!(
            parse_csv(csv_data.as_bytes(), &Schema::default(), "t"),
            Err(CorpusError::MissingField { field, .. }) if field == "utility_label"
        ));
    }

    #[test]
    fn vector_rows_round_trip_without_text() {
        let mut doc = Document::new("d1", "", "pos").with_privacy_label("alice");
        doc.vector = Some(vec![0.5, -0.25]);
        let corpus = Corpus::from_documents("v", vec![doc]).unwrap();
        let tag = PrivacyTag { mechanism: "doc-vector".into(), epsilon: 500.0, epsilon_unit: "document".into() };
        let mut buf = Vec::new();
        write_jsonl(&corpus, Some(&tag), &mut buf).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.contains("\"vector\":[0.5,-0.25]"));
        assert!(line.contains("\"epsilon_unit\":\"document\""));
        assert!(!line.contains("\"text\""));
        let back = parse_jsonl(buf.as_slice(), &Schema::default(), "v").unwrap();
        assert_eq!(back.documents(), corpus.documents());
    }
}
