//! Document model and the line-delimited record format.
//!
//! A record is one JSON object per line with the fields `id`, `source` and
//! `text`. Records written by this module also carry a `sentences` array so
//! that sentence boundaries survive a round trip exactly; when it is absent
//! the `text` field is segmented with [`segment_sentences`].

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "NEWS")]
    News,
    #[serde(rename = "ELKHAIR", alias = "EL-KHAIR")]
    Elkhair,
    #[serde(rename = "WIKI")]
    Wiki,
    #[default]
    #[serde(rename = "OTHER")]
    Other,
}

impl Source {
    pub const ALL: [Source; 5] = [Source::Cc, Source::News, Source::Elkhair, Source::Wiki, Source::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Cc => "CC",
            Source::News => "NEWS",
            Source::Elkhair => "ELKHAIR",
            Source::Wiki => "WIKI",
            Source::Other => "OTHER",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CC" => Ok(Source::Cc),
            "NEWS" => Ok(Source::News),
            "ELKHAIR" | "EL-KHAIR" => Ok(Source::Elkhair),
            "WIKI" => Ok(Source::Wiki),
            "OTHER" => Ok(Source::Other),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// A sentence and its whitespace-delimited words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    text: String,
    words: Vec<String>,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let words = split_words(&text);
        Sentence { text, words }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }
}

impl From<&str> for Sentence {
    fn from(text: &str) -> Self {
        Sentence::new(text)
    }
}

/// Maximal runs of non-whitespace code points.
pub fn split_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub source: Source,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(id: impl Into<String>, source: Source, sentences: Vec<Sentence>) -> Self {
        Document { id: id.into(), source, sentences }
    }

    /// Builds a document by segmenting `text`.
    pub fn from_text(id: impl Into<String>, source: Source, text: &str) -> Self {
        let sentences = segment_sentences(text).into_iter().map(Sentence::new).collect();
        Document::new(id, source, sentences)
    }

    /// Sentences joined with `\n`.
    pub fn text(&self) -> String {
        let mut out = String::with_capacity(self.byte_len());
        for (i, s) in self.sentences.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&s.text);
        }
        out
    }

    /// UTF-8 size of [`Document::text`] without materialising it.
    pub fn byte_len(&self) -> usize {
        let body: usize = self.sentences.iter().map(|s| s.text.len()).sum();
        body + self.sentences.len().saturating_sub(1)
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Sentence::word_count).sum()
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\u{061F}' | '\u{06D4}')
}

/// Splits text into sentences at newlines and at runs of `. ! ? ؟ ۔`.
///
/// A terminator run stays attached to the sentence it closes. Results are
/// trimmed and never empty.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    let flush = |buf: &mut String, out: &mut Vec<String>| {
        let trimmed = buf.trim();
        if !trimmed.is_empty() {
            out.push(trimmed.to_owned());
        }
        buf.clear();
    };
    while let Some(c) = chars.next() {
        if c == '\n' {
            flush(&mut current, &mut out);
            continue;
        }
        current.push(c);
        if is_terminator(c) {
            while let Some(&next) = chars.peek() {
                if !is_terminator(next) {
                    break;
                }
                current.push(next);
                chars.next();
            }
            flush(&mut current, &mut out);
        }
    }
    flush(&mut current, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Jsonl,
    /// One document per blank-line-separated block.
    Plain,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "plain" => Ok(Format::Plain),
            other => Err(format!("unknown format {other:?} (expected jsonl or plain)")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    source: Option<String>,
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentences: Option<Vec<String>>,
}

/// Streaming document reader. Malformed records surface as
/// [`Error::Record`] items and iteration continues with the next record.
pub struct DocumentReader<R> {
    lines: io::Lines<R>,
    format: Format,
    line_no: usize,
    ordinal: usize,
    done: bool,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, format: Format) -> Self {
        DocumentReader { lines: reader.lines(), format, line_no: 0, ordinal: 0, done: false }
    }

    fn next_id(&mut self) -> String {
        let id = format!("doc-{}", self.ordinal);
        self.ordinal += 1;
        id
    }

    fn next_jsonl(&mut self) -> Option<Result<Document>> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_record(&line));
        }
    }

    fn parse_record(&mut self, line: &str) -> Result<Document> {
        let line_no = self.line_no;
        let bad = |message: String| Error::Record { line: line_no, message };
        let record: Record = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let source = match record.source.as_deref() {
            None => Source::Other,
            Some(s) => s.parse().map_err(bad)?,
        };
        let sentences: Vec<Sentence> = match (record.sentences, record.text) {
            (Some(sentences), _) => sentences.into_iter().map(Sentence::new).collect(),
            (None, Some(text)) => segment_sentences(&text).into_iter().map(Sentence::new).collect(),
            (None, None) => return Err(bad("missing field `text`".into())),
        };
        let id = match record.id {
            Some(id) if id.is_empty() => return Err(bad("empty `id`".into())),
            Some(id) => {
                self.ordinal += 1;
                id
            }
            None => self.next_id(),
        };
        Ok(Document::new(id, source, sentences))
    }

    fn next_plain(&mut self) -> Option<Result<Document>> {
        let mut block = String::new();
        loop {
            match self.lines.next() {
                None => break,
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
                Some(Ok(line)) => {
                    self.line_no += 1;
                    if line.trim().is_empty() {
                        if block.is_empty() {
                            continue;
                        }
                        break;
                    }
                    block.push_str(&line);
                    block.push('\n');
                }
            }
        }
        if block.is_empty() {
            return None;
        }
        let id = self.next_id();
        Some(Ok(Document::from_text(id, Source::Other, &block)))
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.format {
            Format::Jsonl => self.next_jsonl(),
            Format::Plain => self.next_plain(),
        }
    }
}

/// Opens `path` for streaming. `-` reads standard input.
pub fn read_documents(path: &Path, format: Format) -> Result<DocumentReader<Box<dyn BufRead>>> {
    let reader: Box<dyn BufRead> = if path.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let file = File::open(path).map_err(|source| Error::Open { path: path.to_owned(), source })?;
        Box::new(BufReader::new(file))
    };
    Ok(DocumentReader::new(reader, format))
}

pub fn to_record_line(doc: &Document) -> String {
    let record = Record {
        id: Some(doc.id.clone()),
        source: Some(doc.source.as_str().to_owned()),
        text: Some(doc.text()),
        sentences: Some(doc.sentences.iter().map(|s| s.text.clone()).collect()),
    };
    serde_json::to_string(&record).expect("record serialization is infallible")
}

/// Writes one record per document; returns the number written.
pub fn write_documents_to<W, I>(docs: I, writer: W) -> Result<usize>
where
    W: Write,
    I: IntoIterator<Item = Document>,
{
    let mut writer = BufWriter::new(writer);
    let mut written = 0;
    for doc in docs {
        let line = to_record_line(&doc);
        writeln!(writer, "{line}").map_err(|source| Error::PartialWrite { written, source })?;
        written += 1;
    }
    writer.flush().map_err(|source| Error::PartialWrite { written, source })?;
    Ok(written)
}

/// Writes to `path`, or standard output when `path` is `-`.
pub fn write_documents<I>(docs: I, path: &Path) -> Result<usize>
where
    I: IntoIterator<Item = Document>,
{
    if path.as_os_str() == "-" {
        write_documents_to(docs, io::stdout().lock())
    } else {
        let file = File::create(path).map_err(|source| Error::Open { path: path.to_owned(), source })?;
        write_documents_to(docs, file)
    }
}
