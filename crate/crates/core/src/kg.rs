//! In-memory knowledge graph with per-statement polarity.
//!
//! Nodes are interned [`Term`]s addressed by a dense [`NodeId`]. Every
//! statement carries a [`Polarity`]; negative polarity is only legal on
//! assertion edges, never on `rdfs:subClassOf`.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RDFS_SUBCLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const OWL_NEGATIVE_PROPERTY_ASSERTION: &str =
    "http://www.w3.org/2002/07/owl#NegativePropertyAssertion";
pub const OWL_SOURCE_INDIVIDUAL: &str = "http://www.w3.org/2002/07/owl#sourceIndividual";
pub const OWL_ASSERTION_PROPERTY: &str = "http://www.w3.org/2002/07/owl#assertionProperty";
pub const OWL_TARGET_INDIVIDUAL: &str = "http://www.w3.org/2002/07/owl#targetIndividual";
pub const OWL_SOME_VALUES_FROM: &str = "http://www.w3.org/2002/07/owl#someValuesFrom";
pub const OWL_ON_PROPERTY: &str = "http://www.w3.org/2002/07/owl#onProperty";

/// Walk token emitted when a subclass edge is followed towards the superclass.
pub const SUBCLASS_TOKEN: &str = "subClassOf";
/// Walk token emitted when a subclass edge is followed towards the subclass.
pub const SUPERCLASS_TOKEN: &str = "superClassOf";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KgError {
    #[error("negative polarity is not allowed on subClassOf edge {subject} -> {object}")]
    NegativeSubClassOf { subject: String, object: String },
    #[error("predicate must be an IRI, got {0}")]
    NonIriPredicate(String),
    #[error("root entity {0} does not occur in any statement")]
    UnknownRoot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn is_negative(self) -> bool {
        self == Polarity::Negative
    }

    pub fn tag(self) -> &'static str {
        match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        }
    }
}

/// An RDF term. Blank-node labels are stored without the `_:` prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Blank(String),
    Literal(String),
}

impl Term {
    pub fn iri(s: impl Into<String>) -> Self {
        Term::Iri(s.into())
    }

    pub fn blank(s: impl Into<String>) -> Self {
        Term::Blank(s.into())
    }

    /// The string used for this term inside walks and embedding files.
    pub fn token(&self) -> String {
        match self {
            Term::Iri(s) | Term::Literal(s) => s.clone(),
            Term::Blank(s) => format!("_:{s}"),
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(s) => write!(f, "<{s}>"),
            Term::Blank(s) => write!(f, "_:{s}"),
            Term::Literal(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    SubClassOf,
    Other,
}

/// A predicate together with its builtin classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLabel {
    pub predicate: String,
    pub kind: EdgeKind,
}

impl EdgeLabel {
    pub fn new(predicate: impl Into<String>) -> Self {
        let predicate = predicate.into();
        let kind = if predicate == RDFS_SUBCLASS_OF {
            EdgeKind::SubClassOf
        } else {
            EdgeKind::Other
        };
        EdgeLabel { predicate, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Statement {
    pub subject: NodeId,
    pub predicate: NodeId,
    pub object: NodeId,
    pub polarity: Polarity,
}

/// Token on the edge position of a walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeToken {
    Predicate(NodeId),
    SubClassOf,
    SuperClassOf,
}

/// One direction-legal step out of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hop {
    pub edge: EdgeToken,
    pub node: NodeId,
    /// Polarity of the underlying statement.
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    terms: Vec<Term>,
    lookup: HashMap<Term, NodeId>,
    statements: Vec<Statement>,
    seen: HashSet<Statement>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    roots: BTreeSet<NodeId>,
    subclass_pred: Option<NodeId>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, term: &Term) -> NodeId {
        if let Some(&id) = self.lookup.get(term) {
            return id;
        }
        let id = NodeId(self.terms.len() as u32);
        self.terms.push(term.clone());
        self.lookup.insert(term.clone(), id);
        self.out_edges.push(Vec::new());
        self.in_edges.push(Vec::new());
        if matches!(term, Term::Iri(s) if s == RDFS_SUBCLASS_OF) {
            self.subclass_pred = Some(id);
        }
        id
    }

    pub fn node_id(&self, term: &Term) -> Option<NodeId> {
        self.lookup.get(term).copied()
    }

    pub fn iri_id(&self, iri: &str) -> Option<NodeId> {
        self.node_id(&Term::Iri(iri.to_string()))
    }

    pub fn term(&self, id: NodeId) -> &Term {
        &self.terms[id.idx()]
    }

    pub fn token(&self, id: NodeId) -> String {
        self.term(id).token()
    }

    pub fn edge_token_str(&self, edge: EdgeToken) -> String {
        match edge {
            EdgeToken::Predicate(p) => self.token(p),
            EdgeToken::SubClassOf => SUBCLASS_TOKEN.to_string(),
            EdgeToken::SuperClassOf => SUPERCLASS_TOKEN.to_string(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.terms.len()
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn is_subclass(&self, st: &Statement) -> bool {
        Some(st.predicate) == self.subclass_pred
    }

    pub fn edge_label(&self, st: &Statement) -> EdgeLabel {
        EdgeLabel::new(self.token(st.predicate))
    }

    /// Inserts a statement. Returns `Ok(false)` when the exact statement
    /// was already present.
    pub fn add_statement(&mut self, st: Statement) -> Result<bool, KgError> {
        if !matches!(self.term(st.predicate), Term::Iri(_)) {
            return Err(KgError::NonIriPredicate(
                self.term(st.predicate).to_string(),
            ));
        }
        if self.is_subclass(&st) && st.polarity.is_negative() {
            return Err(KgError::NegativeSubClassOf {
                subject: self.token(st.subject),
                object: self.token(st.object),
            });
        }
        if !self.seen.insert(st) {
            return Ok(false);
        }
        let idx = self.statements.len();
        self.statements.push(st);
        self.out_edges[st.subject.idx()].push(idx);
        self.in_edges[st.object.idx()].push(idx);
        Ok(true)
    }

    /// Interns the terms and inserts the statement.
    pub fn add(
        &mut self,
        subject: &Term,
        predicate: &str,
        object: &Term,
        polarity: Polarity,
    ) -> Result<bool, KgError> {
        let subject = self.intern(subject);
        let predicate = self.intern(&Term::Iri(predicate.to_string()));
        let object = self.intern(object);
        self.add_statement(Statement {
            subject,
            predicate,
            object,
            polarity,
        })
    }

    pub fn add_root(&mut self, id: NodeId) -> Result<(), KgError> {
        if self.out_edges[id.idx()].is_empty() && self.in_edges[id.idx()].is_empty() {
            return Err(KgError::UnknownRoot(self.token(id)));
        }
        self.roots.insert(id);
        Ok(())
    }

    pub fn root_entities(&self) -> &BTreeSet<NodeId> {
        &self.roots
    }

    pub fn out_statements(&self, node: NodeId) -> impl Iterator<Item = &Statement> + '_ {
        self.out_edges
            .get(node.idx())
            .into_iter()
            .flatten()
            .map(move |&i| &self.statements[i])
    }

    pub fn in_statements(&self, node: NodeId) -> impl Iterator<Item = &Statement> + '_ {
        self.in_edges
            .get(node.idx())
            .into_iter()
            .flatten()
            .map(move |&i| &self.statements[i])
    }

    /// Recomputes both adjacency indexes from the statement list.
    pub fn rebuild_indexes(&mut self) {
        for v in self.out_edges.iter_mut().chain(self.in_edges.iter_mut()) {
            v.clear();
        }
        for (i, st) in self.statements.iter().enumerate() {
            self.out_edges[st.subject.idx()].push(i);
            self.in_edges[st.object.idx()].push(i);
        }
    }

    fn sort_hops(&self, hops: &mut Vec<Hop>) {
        hops.sort_by_cached_key(|h| (self.edge_token_str(h.edge), self.token(h.node), h.polarity));
        hops.dedup_by_key(|h| (h.edge, h.node));
    }

    /// First hops out of a root: assertion (non-subclass) statements of the
    /// given polarity. Literal objects are never walk targets.
    pub fn assertion_hops(&self, node: NodeId, polarity: Polarity) -> Vec<Hop> {
        let mut hops: Vec<Hop> = self
            .out_statements(node)
            .filter(|st| !self.is_subclass(st) && st.polarity == polarity)
            .filter(|st| !self.term(st.object).is_literal())
            .map(|st| Hop {
                edge: EdgeToken::Predicate(st.predicate),
                node: st.object,
                polarity: st.polarity,
            })
            .collect();
        self.sort_hops(&mut hops);
        hops
    }

    /// Direction-legal neighbours of `node` for a walk of the given status.
    ///
    /// Positive walks follow subclass edges upwards, negative walks follow
    /// them downwards. Other predicates keep their declared direction; a
    /// positive walk only follows positive statements. Visited filtering is
    /// left to the caller. Ordering is lexicographic by edge token then node.
    pub fn neighbors(&self, node: NodeId, status: Polarity) -> Vec<Hop> {
        if node.idx() >= self.terms.len() {
            return Vec::new();
        }
        let mut hops = Vec::new();
        for st in self.out_statements(node) {
            if self.term(st.object).is_literal() {
                continue;
            }
            if self.is_subclass(st) {
                if status == Polarity::Positive {
                    hops.push(Hop {
                        edge: EdgeToken::SubClassOf,
                        node: st.object,
                        polarity: st.polarity,
                    });
                }
            } else if status == Polarity::Negative || st.polarity == Polarity::Positive {
                hops.push(Hop {
                    edge: EdgeToken::Predicate(st.predicate),
                    node: st.object,
                    polarity: st.polarity,
                });
            }
        }
        if status == Polarity::Negative {
            for st in self.in_statements(node).filter(|st| self.is_subclass(st)) {
                hops.push(Hop {
                    edge: EdgeToken::SuperClassOf,
                    node: st.subject,
                    polarity: st.polarity,
                });
            }
        }
        self.sort_hops(&mut hops);
        hops
    }

    /// Classes an entity is entailed to (not) belong to.
    ///
    /// Positive assertions propagate to superclasses; negative assertions
    /// propagate to subclasses. Both closures are reflexive.
    pub fn entailed_annotations(&self, entity: NodeId, polarity: Polarity) -> BTreeSet<NodeId> {
        let direct = self
            .out_statements(entity)
            .filter(|st| !self.is_subclass(st) && st.polarity == polarity)
            .filter(|st| !self.term(st.object).is_literal())
            .map(|st| st.object);
        self.subclass_closure(direct, polarity == Polarity::Positive)
    }

    /// Reflexive-transitive closure over subclass edges, upwards when
    /// `upward` and downwards otherwise. Terminates on cycles.
    pub fn subclass_closure(
        &self,
        start: impl IntoIterator<Item = NodeId>,
        upward: bool,
    ) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = VecDeque::new();
        for n in start {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
        while let Some(n) = queue.pop_front() {
            let next: Vec<NodeId> = if upward {
                self.out_statements(n)
                    .filter(|st| self.is_subclass(st))
                    .map(|st| st.object)
                    .collect()
            } else {
                self.in_statements(n)
                    .filter(|st| self.is_subclass(st))
                    .map(|st| st.subject)
                    .collect()
            };
            for m in next {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Number of negative statements.
    pub fn negative_count(&self) -> usize {
        self.statements
            .iter()
            .filter(|s| s.polarity.is_negative())
            .count()
    }
}
