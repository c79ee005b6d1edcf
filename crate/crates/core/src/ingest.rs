//! Readers and writers for the on-disk inputs: an N-Triples subset for the
//! ontology, a TSV annotation table and a TSV pair dataset.
//!
//! Reified `owl:NegativePropertyAssertion` clusters are folded into single
//! negative statements; everything else becomes a positive statement.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use log::warn;
use thiserror::Error;

use crate::kg::{
    KgError, KnowledgeGraph, Polarity, Term, OWL_ASSERTION_PROPERTY,
    OWL_NEGATIVE_PROPERTY_ASSERTION, OWL_SOURCE_INDIVIDUAL, OWL_TARGET_INDIVIDUAL, RDF_TYPE,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: incomplete negative assertion _:{node} (missing {missing})")]
    IncompleteNegativeAssertion {
        node: String,
        line: usize,
        missing: &'static str,
    },
    #[error("line {line}: conflicting {property} for negative assertion _:{node}")]
    AmbiguousNegativeAssertion {
        node: String,
        line: usize,
        property: &'static str,
    },
    #[error("line {line}: reification fragment on _:{node} without an owl:NegativePropertyAssertion type")]
    OrphanReificationFragment { node: String, line: usize },
    #[error("line {line}: {message}")]
    Table { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] KgError),
}

/// A triple exactly as parsed, tagged with its 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTriple {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
    pub line: usize,
}

/// A statement over terms, before interning into a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermStatement {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub entity: String,
    pub property: String,
    pub class: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PairLabel {
    Negative = 0,
    Positive = 1,
}

impl PairLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub a: String,
    pub b: String,
    pub label: PairLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairDataset {
    pub pairs: Vec<Pair>,
}

impl PairDataset {
    /// Builds a dataset, rejecting duplicate unordered pairs.
    pub fn new(pairs: Vec<Pair>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for (i, p) in pairs.iter().enumerate() {
            let key = if p.a <= p.b {
                (p.a.clone(), p.b.clone())
            } else {
                (p.b.clone(), p.a.clone())
            };
            if !seen.insert(key) {
                return Err(IngestError::Table {
                    line: i + 2,
                    message: format!("duplicate pair {} {}", p.a, p.b),
                });
            }
        }
        Ok(PairDataset { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.pairs.iter().map(|p| p.label.as_u8()).collect()
    }

    pub fn positives(&self) -> impl Iterator<Item = &Pair> {
        self.pairs.iter().filter(|p| p.label == PairLabel::Positive)
    }
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: usize,
    src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Cursor {
            chars: src.char_indices().collect(),
            pos: 0,
            line,
            src,
        }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, message: impl Into<String>) -> IngestError {
        IngestError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.pos += 1;
        }
    }

    fn iri(&mut self) -> Result<String, IngestError> {
        if self.peek() != Some('<') {
            return Err(self.err("expected IRI"));
        }
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                Some('>') => {
                    self.pos += 1;
                    break;
                }
                Some(c) if c.is_whitespace() || c == '<' || c == '"' => {
                    return Err(self.err(format!("malformed IRI: unexpected {c:?}")));
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
                None => {
                    self.pos = start;
                    return Err(self.err("malformed IRI: missing '>'"));
                }
            }
        }
        if out.is_empty() {
            self.pos = start;
            return Err(self.err("malformed IRI: empty"));
        }
        Ok(out)
    }

    fn blank(&mut self) -> Result<String, IngestError> {
        // caller checked the "_:" prefix
        self.pos += 2;
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                out.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        // a trailing '.' belongs to the terminator
        while out.ends_with('.') {
            out.pop();
            self.pos -= 1;
        }
        if out.is_empty() {
            return Err(self.err("malformed blank node label"));
        }
        Ok(out)
    }

    fn literal(&mut self) -> Result<String, IngestError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                Some('"') => {
                    self.pos += 1;
                    break;
                }
                Some('\\') => {
                    self.pos += 1;
                    let esc = match self.peek() {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('"') => '"',
                        Some('\\') => '\\',
                        _ => return Err(self.err("invalid escape in literal")),
                    };
                    out.push(esc);
                    self.pos += 1;
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
                None => {
                    self.pos = start;
                    return Err(self.err("unterminated literal"));
                }
            }
        }
        // datatype or language suffix is captured and discarded
        match self.peek() {
            Some('@') => {
                while matches!(self.peek(), Some(c) if !c.is_whitespace()) {
                    self.pos += 1;
                }
            }
            Some('^') => {
                self.pos += 1;
                if self.peek() != Some('^') {
                    return Err(self.err("malformed datatype suffix"));
                }
                self.pos += 1;
                self.iri()?;
            }
            _ => {}
        }
        Ok(out)
    }

    fn starts_blank(&self) -> bool {
        self.peek() == Some('_') && self.chars.get(self.pos + 1).map(|&(_, c)| c) == Some(':')
    }

    fn subject(&mut self) -> Result<Term, IngestError> {
        match self.peek() {
            Some('<') => self.iri().map(Term::Iri),
            Some('_') if self.starts_blank() => self.blank().map(Term::Blank),
            None => Err(self.err("missing subject")),
            _ => Err(self.err("expected IRI or blank node subject")),
        }
    }

    fn object(&mut self) -> Result<Term, IngestError> {
        match self.peek() {
            Some('<') => self.iri().map(Term::Iri),
            Some('_') if self.starts_blank() => self.blank().map(Term::Blank),
            Some('"') => self.literal().map(Term::Literal),
            None => Err(self.err("missing object")),
            _ => Err(self.err("expected IRI, blank node or literal object")),
        }
    }

    fn rest(&self) -> &str {
        match self.chars.get(self.pos) {
            Some(&(b, _)) => &self.src[b..],
            None => "",
        }
    }
}

fn parse_line(text: &str, line: usize) -> Result<RawTriple, IngestError> {
    let mut cur = Cursor::new(text, line);
    cur.skip_ws();
    let subject = cur.subject()?;
    cur.skip_ws();
    if cur.peek().is_none() {
        return Err(cur.err("missing predicate"));
    }
    let predicate = cur.iri()?;
    cur.skip_ws();
    let object = cur.object()?;
    cur.skip_ws();
    if cur.peek() != Some('.') {
        return Err(cur.err("missing final '.'"));
    }
    cur.pos += 1;
    cur.skip_ws();
    let rest = cur.rest();
    if !rest.is_empty() && !rest.starts_with('#') {
        return Err(cur.err("trailing content after '.'"));
    }
    Ok(RawTriple {
        subject,
        predicate,
        object,
        line,
    })
}

/// Parses the N-Triples subset. Blank lines and `#` comment lines are
/// skipped; blank node labels are kept as written.
pub fn parse_ntriples(input: &[u8]) -> Result<Vec<RawTriple>, IngestError> {
    let text = std::str::from_utf8(input).map_err(|e| {
        let line = input[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        IngestError::Syntax {
            line,
            column: 1,
            message: "invalid UTF-8".into(),
        }
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_line(raw.trim_end_matches('\r'), i + 1)?);
    }
    Ok(out)
}

#[derive(Default)]
struct Cluster {
    type_line: Option<usize>,
    first_line: usize,
    source: Option<(Term, usize)>,
    property: Option<(String, usize)>,
    target: Option<(Term, usize)>,
}

/// Replaces every reified negative property assertion by a single negative
/// statement placed where its `rdf:type` triple was. All other triples pass
/// through as positive statements.
pub fn fold_negative_assertions(triples: &[RawTriple]) -> Result<Vec<TermStatement>, IngestError> {
    let mut clusters: BTreeMap<String, Cluster> = BTreeMap::new();
    let mut consumed = vec![false; triples.len()];

    for (i, t) in triples.iter().enumerate() {
        let Term::Blank(label) = &t.subject else {
            continue;
        };
        let is_type = t.predicate == RDF_TYPE
            && matches!(&t.object, Term::Iri(o) if o == OWL_NEGATIVE_PROPERTY_ASSERTION);
        let slot = match t.predicate.as_str() {
            OWL_SOURCE_INDIVIDUAL => 1,
            OWL_ASSERTION_PROPERTY => 2,
            OWL_TARGET_INDIVIDUAL => 3,
            _ if is_type => 0,
            _ => continue,
        };
        consumed[i] = true;
        let c = clusters.entry(label.clone()).or_insert_with(|| Cluster {
            first_line: t.line,
            ..Default::default()
        });
        let ambiguous = |property| IngestError::AmbiguousNegativeAssertion {
            node: label.clone(),
            line: t.line,
            property,
        };
        match slot {
            0 => c.type_line = Some(t.line),
            1 => {
                if c.source.replace((t.object.clone(), t.line)).is_some() {
                    return Err(ambiguous("owl:sourceIndividual"));
                }
            }
            2 => {
                let Term::Iri(p) = &t.object else {
                    return Err(IngestError::Syntax {
                        line: t.line,
                        column: 1,
                        message: "owl:assertionProperty must be an IRI".into(),
                    });
                };
                if c.property.replace((p.clone(), t.line)).is_some() {
                    return Err(ambiguous("owl:assertionProperty"));
                }
            }
            _ => {
                if c.target.replace((t.object.clone(), t.line)).is_some() {
                    return Err(ambiguous("owl:targetIndividual"));
                }
            }
        }
    }

    let mut folded: HashMap<usize, TermStatement> = HashMap::new();
    for (label, c) in clusters {
        let Some(type_line) = c.type_line else {
            return Err(IngestError::OrphanReificationFragment {
                node: label,
                line: c.first_line,
            });
        };
        let incomplete = |missing| IngestError::IncompleteNegativeAssertion {
            node: label.clone(),
            line: type_line,
            missing,
        };
        let (subject, _) = c.source.ok_or_else(|| incomplete("owl:sourceIndividual"))?;
        let (predicate, _) = c
            .property
            .ok_or_else(|| incomplete("owl:assertionProperty"))?;
        let (object, _) = c.target.ok_or_else(|| incomplete("owl:targetIndividual"))?;
        if subject.is_literal() {
            return Err(incomplete("non-literal owl:sourceIndividual"));
        }
        let anchor = triples
            .iter()
            .position(|t| {
                t.line == type_line && matches!(&t.subject, Term::Blank(l) if *l == label)
            })
            .expect("type triple recorded");
        folded.insert(
            anchor,
            TermStatement {
                subject,
                predicate,
                object,
                polarity: Polarity::Negative,
            },
        );
    }

    let mut out = Vec::with_capacity(triples.len());
    for (i, t) in triples.iter().enumerate() {
        if let Some(st) = folded.remove(&i) {
            out.push(st);
        } else if !consumed[i] {
            out.push(TermStatement {
                subject: t.subject.clone(),
                predicate: t.predicate.clone(),
                object: t.object.clone(),
                polarity: Polarity::Positive,
            });
        }
    }
    Ok(out)
}

fn check_header(text: &str, expected: &[&str]) -> Result<(), IngestError> {
    let header = text.lines().next().unwrap_or("");
    let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    if cols != expected {
        return Err(IngestError::Table {
            line: 1,
            message: format!("expected header {:?}", expected.join("\t")),
        });
    }
    Ok(())
}

fn table_text(input: &[u8]) -> Result<&str, IngestError> {
    std::str::from_utf8(input).map_err(|_| IngestError::Table {
        line: 1,
        message: "invalid UTF-8".into(),
    })
}

fn data_rows(
    text: &str,
    width: usize,
) -> impl Iterator<Item = Result<(usize, Vec<&str>), IngestError>> {
    text.lines().enumerate().skip(1).filter_map(move |(i, l)| {
        let l = l.trim_end_matches('\r');
        if l.trim().is_empty() {
            return None;
        }
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != width {
            return Some(Err(IngestError::Table {
                line: i + 1,
                message: format!("expected {width} columns, found {}", cols.len()),
            }));
        }
        Some(Ok((i + 1, cols)))
    })
}

pub const ANNOTATION_HEADER: [&str; 4] = ["entity", "property", "class", "polarity"];
pub const PAIRS_HEADER: [&str; 3] = ["entityA", "entityB", "label"];

pub fn parse_annotations(input: &[u8]) -> Result<Vec<AnnotationRecord>, IngestError> {
    let text = table_text(input)?;
    check_header(text, &ANNOTATION_HEADER)?;
    data_rows(text, 4)
        .map(|row| {
            let (line, c) = row?;
            let polarity = match c[3] {
                "pos" => Polarity::Positive,
                "neg" => Polarity::Negative,
                other => {
                    return Err(IngestError::Table {
                        line,
                        message: format!("unknown polarity {other:?}"),
                    })
                }
            };
            Ok(AnnotationRecord {
                entity: c[0].to_string(),
                property: c[1].to_string(),
                class: c[2].to_string(),
                polarity,
            })
        })
        .collect()
}

pub fn parse_pairs(input: &[u8]) -> Result<PairDataset, IngestError> {
    let text = table_text(input)?;
    check_header(text, &PAIRS_HEADER)?;
    let pairs = data_rows(text, 3)
        .map(|row| {
            let (line, c) = row?;
            let label = match c[2] {
                "1" => PairLabel::Positive,
                "0" => PairLabel::Negative,
                other => {
                    return Err(IngestError::Table {
                        line,
                        message: format!("label must be 0 or 1, got {other:?}"),
                    })
                }
            };
            Ok(Pair {
                a: c[0].to_string(),
                b: c[1].to_string(),
                label,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    PairDataset::new(pairs)
}

/// Builds a graph from ontology statements plus annotation records.
///
/// Blank nodes are relabelled `bN` in order of first appearance. Root
/// entities are exactly the annotated entities. Returns the graph and any
/// warnings (annotation classes missing from the ontology).
pub fn assemble_kg(
    ontology: &[TermStatement],
    annotations: &[AnnotationRecord],
) -> Result<(KnowledgeGraph, Vec<String>), IngestError> {
    let mut kg = KnowledgeGraph::new();
    let mut blanks: HashMap<String, String> = HashMap::new();
    let mut relabel = |t: &Term| -> Term {
        match t {
            Term::Blank(l) => {
                let n = blanks.len();
                Term::Blank(
                    blanks
                        .entry(l.clone())
                        .or_insert_with(|| format!("b{n}"))
                        .clone(),
                )
            }
            other => other.clone(),
        }
    };
    for st in ontology {
        let s = relabel(&st.subject);
        let o = relabel(&st.object);
        kg.add(&s, &st.predicate, &o, st.polarity)?;
    }
    let mut warnings = Vec::new();
    let mut roots = Vec::new();
    for rec in annotations {
        let class = Term::Iri(rec.class.clone());
        if kg.node_id(&class).is_none() {
            let msg = format!(
                "annotation class {} for {} is absent from the ontology",
                rec.class, rec.entity
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        let entity = Term::Iri(rec.entity.clone());
        kg.add(&entity, &rec.property, &class, rec.polarity)?;
        roots.push(entity);
    }
    for r in roots {
        let id = kg.node_id(&r).expect("just inserted");
        kg.add_root(id)?;
    }
    Ok((kg, warnings))
}

fn escape_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn write_term(out: &mut String, t: &Term) {
    match t {
        Term::Iri(s) => write!(out, "<{s}>").unwrap(),
        Term::Blank(s) => write!(out, "_:{s}").unwrap(),
        Term::Literal(s) => write!(out, "\"{}\"", escape_literal(s)).unwrap(),
    }
}

/// Serializes statements as N-Triples. Negative statements are written as
/// reified `owl:NegativePropertyAssertion` clusters with fresh blank nodes.
pub fn write_ntriples<'a>(statements: impl IntoIterator<Item = &'a TermStatement>) -> String {
    let statements: Vec<&TermStatement> = statements.into_iter().collect();
    let used: HashSet<&str> = statements
        .iter()
        .flat_map(|s| [&s.subject, &s.object])
        .filter_map(|t| match t {
            Term::Blank(l) => Some(l.as_str()),
            _ => None,
        })
        .collect();
    let mut counter = 0usize;
    let mut out = String::new();
    for st in statements {
        match st.polarity {
            Polarity::Positive => {
                write_term(&mut out, &st.subject);
                write!(out, " <{}> ", st.predicate).unwrap();
                write_term(&mut out, &st.object);
                out.push_str(" .\n");
            }
            Polarity::Negative => {
                let label = loop {
                    let l = format!("npa{counter}");
                    counter += 1;
                    if !used.contains(l.as_str()) {
                        break l;
                    }
                };
                writeln!(
                    out,
                    "_:{label} <{RDF_TYPE}> <{OWL_NEGATIVE_PROPERTY_ASSERTION}> ."
                )
                .unwrap();
                write!(out, "_:{label} <{OWL_SOURCE_INDIVIDUAL}> ").unwrap();
                write_term(&mut out, &st.subject);
                out.push_str(" .\n");
                writeln!(
                    out,
                    "_:{label} <{OWL_ASSERTION_PROPERTY}> <{}> .",
                    st.predicate
                )
                .unwrap();
                write!(out, "_:{label} <{OWL_TARGET_INDIVIDUAL}> ").unwrap();
                write_term(&mut out, &st.object);
                out.push_str(" .\n");
            }
        }
    }
    out
}

pub fn write_annotations(records: &[AnnotationRecord]) -> String {
    let mut out = ANNOTATION_HEADER.join("\t");
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.entity,
            r.property,
            r.class,
            r.polarity.tag()
        )
        .unwrap();
    }
    out
}

pub fn write_pairs(ds: &PairDataset) -> String {
    let mut out = PAIRS_HEADER.join("\t");
    out.push('\n');
    for p in &ds.pairs {
        writeln!(out, "{}\t{}\t{}", p.a, p.b, p.label.as_u8()).unwrap();
    }
    out
}

/// Converts every statement of a graph back into term form.
pub fn graph_statements(kg: &KnowledgeGraph) -> Vec<TermStatement> {
    kg.statements()
        .iter()
        .map(|st| TermStatement {
            subject: kg.term(st.subject).clone(),
            predicate: kg.token(st.predicate),
            object: kg.term(st.object).clone(),
            polarity: st.polarity,
        })
        .collect()
}
