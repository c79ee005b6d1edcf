//! Small hand-built graphs used by tests, benches and the CLI smoke run.
//!
//! The reverse-inheritance graph has three molecular-function classes,
//! F3 (ferric iron binding) ⊑ F1 (iron ion binding) ⊑ F2 (metal ion binding),
//! and two proteins: P1 performs F1 and F3, P2 does not perform F1.

use rand::Rng;

use crate::ingest::{self, PairDataset};
use crate::kg::{KnowledgeGraph, Polarity, Term, RDFS_SUBCLASS_OF};
use crate::par;

pub const REVERSE_INHERITANCE_NT: &str = "\
# F1 iron ion binding, F2 metal ion binding, F3 ferric iron binding
<F1> <http://www.w3.org/2000/01/rdf-schema#subClassOf> <F2> .
<F3> <http://www.w3.org/2000/01/rdf-schema#subClassOf> <F1> .
";

pub const REVERSE_INHERITANCE_TSV: &str = "\
entity\tproperty\tclass\tpolarity
P1\thasFunction\tF1\tpos
P1\thasFunction\tF3\tpos
P2\thasFunction\tF1\tneg
";

pub const REVERSE_INHERITANCE_PAIRS: &str = "\
entityA\tentityB\tlabel
P1\tP2\t1
P1\tP1\t0
";

/// Extra annotations giving each protein statements of both polarities.
pub const BOTH_POLARITIES_TSV: &str = "\
P1\thasFunction\tF4\tneg
P2\thasFunction\tF2\tpos
";

pub fn reverse_inheritance() -> KnowledgeGraph {
    build_reverse_inheritance(REVERSE_INHERITANCE_TSV.to_string())
}

/// The reverse-inheritance graph plus [`BOTH_POLARITIES_TSV`].
pub fn reverse_inheritance_both_polarities() -> KnowledgeGraph {
    build_reverse_inheritance(format!("{REVERSE_INHERITANCE_TSV}{BOTH_POLARITIES_TSV}"))
}

fn build_reverse_inheritance(tsv: String) -> KnowledgeGraph {
    let triples = ingest::parse_ntriples(REVERSE_INHERITANCE_NT.as_bytes()).expect("fixture");
    debug_assert!(triples.iter().all(|t| t.predicate == RDFS_SUBCLASS_OF));
    let statements = ingest::fold_negative_assertions(&triples).expect("fixture");
    let annotations = ingest::parse_annotations(tsv.as_bytes()).expect("fixture");
    ingest::assemble_kg(&statements, &annotations)
        .expect("fixture")
        .0
}

pub fn reverse_inheritance_pairs() -> PairDataset {
    ingest::parse_pairs(REVERSE_INHERITANCE_PAIRS.as_bytes()).expect("fixture")
}

const RANDOM_PREDICATES: [&str; 3] = ["hasFunction", "involvedIn", "interactsWith"];

/// A small random graph of entities and classes with `nodes` terms at most.
///
/// Entities carry assertions of both polarities to classes and to each
/// other; classes form a random subclass relation that may contain cycles.
/// Every entity with an outgoing assertion is a root.
pub fn random_graph(seed: u64, nodes: usize) -> KnowledgeGraph {
    let mut rng = par::stream_rng(seed, &[b"random-graph"]);
    let nodes = nodes.max(2);
    let n_entities = rng.random_range(1..nodes);
    let n_classes = nodes - n_entities;
    let entity = |i: usize| Term::iri(format!("E{i}"));
    let class = |i: usize| Term::iri(format!("C{i}"));
    let mut kg = KnowledgeGraph::new();
    for c in 0..n_classes {
        for _ in 0..rng.random_range(0..3) {
            let d = rng.random_range(0..n_classes);
            if d != c {
                kg.add(&class(c), RDFS_SUBCLASS_OF, &class(d), Polarity::Positive)
                    .expect("positive subclass edge");
            }
        }
    }
    for e in 0..n_entities {
        for _ in 0..rng.random_range(1..5) {
            let pred = RANDOM_PREDICATES[rng.random_range(0..RANDOM_PREDICATES.len())];
            let polarity = if rng.random_bool(0.5) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            let target = if n_classes == 0 || rng.random_bool(0.2) {
                entity(rng.random_range(0..n_entities))
            } else {
                class(rng.random_range(0..n_classes))
            };
            kg.add(&entity(e), pred, &target, polarity)
                .expect("assertion");
        }
    }
    for e in 0..n_entities {
        if let Some(id) = kg.node_id(&entity(e)) {
            if kg.out_statements(id).next().is_some() {
                kg.add_root(id).expect("entity has statements");
            }
        }
    }
    kg
}
