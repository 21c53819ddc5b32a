//! In-memory knowledge-graph store.
//!
//! Entities and relations are interned to dense `u32` ids in first-seen
//! order; triples live in a nested ordered adjacency map
//! `head -> relation -> sorted tails`, so every iteration over the graph is
//! deterministic. A graph can be *inverse-closed*: each base relation `r`
//! gains a partner `r_inv` with every edge reversed, which lets walkers and
//! the bidirectional verifier traverse edges backwards.

pub(crate) mod split;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub use split::{
    make_task_split, read_split_manifest, write_split_manifest, NegativeSample, TaskSplit,
};

/// Name suffix that marks the inverse partner of a base relation.
pub const INVERSE_SUFFIX: &str = "_inv";

/// Dense entity identifier; ids are assigned in first-seen order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Dense relation identifier; ids are assigned in first-seen order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed labeled edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// A sequence of relations interpreted as a composed walk.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PathFormula(Vec<RelationId>);

impl PathFormula {
    pub fn new(relations: Vec<RelationId>) -> Self {
        PathFormula(relations)
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, relation: RelationId) {
        self.0.push(relation);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RelationId> {
        self.0.iter()
    }
}

impl From<Vec<RelationId>> for PathFormula {
    fn from(relations: Vec<RelationId>) -> Self {
        PathFormula(relations)
    }
}

/// Immutable triple store with interned dictionaries.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    /// head -> relation -> sorted, deduplicated tails.
    adjacency: BTreeMap<EntityId, BTreeMap<RelationId, Vec<EntityId>>>,
    triple_count: usize,
    /// Number of relations before inverse closure; equals
    /// `relation_names.len()` on a raw graph.
    base_relation_count: usize,
    inverse_closed: bool,
}

/// Incrementally interns names and collects triples, then freezes into a
/// [`KnowledgeGraph`]. Duplicate triples collapse silently.
#[derive(Debug, Default)]
pub struct KnowledgeGraphBuilder {
    entity_names: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
    adjacency: BTreeMap<EntityId, BTreeMap<RelationId, Vec<EntityId>>>,
    triple_count: usize,
}

impl KnowledgeGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, interning it on first sight.
    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_names.push(name.to_owned());
        self.entity_ids.insert(name.to_owned(), id);
        id
    }

    /// Returns the id for `name`, interning it on first sight.
    pub fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_owned());
        self.relation_ids.insert(name.to_owned(), id);
        id
    }

    /// Inserts a triple; duplicates are ignored.
    pub fn add_triple(&mut self, head: EntityId, relation: RelationId, tail: EntityId) {
        let tails = self
            .adjacency
            .entry(head)
            .or_default()
            .entry(relation)
            .or_default();
        if let Err(pos) = tails.binary_search(&tail) {
            tails.insert(pos, tail);
            self.triple_count += 1;
        }
    }

    /// Convenience: intern all three names and insert the triple.
    pub fn add_named(&mut self, head: &str, relation: &str, tail: &str) {
        let h = self.intern_entity(head);
        let r = self.intern_relation(relation);
        let t = self.intern_entity(tail);
        self.add_triple(h, r, t);
    }

    /// Freezes the builder into an immutable graph (not inverse-closed).
    pub fn build(self) -> KnowledgeGraph {
        let base = self.relation_names.len();
        KnowledgeGraph {
            entity_names: self.entity_names,
            entity_ids: self.entity_ids,
            relation_names: self.relation_names,
            relation_ids: self.relation_ids,
            adjacency: self.adjacency,
            triple_count: self.triple_count,
            base_relation_count: base,
            inverse_closed: false,
        }
    }
}

static NO_TAILS: [EntityId; 0] = [];

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    /// Total relation count, inverses included when closed.
    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    /// Relation count before inverse closure.
    pub fn base_relation_count(&self) -> usize {
        self.base_relation_count
    }

    pub fn triple_count(&self) -> usize {
        self.triple_count
    }

    pub fn is_inverse_closed(&self) -> bool {
        self.inverse_closed
    }

    pub fn entity_id(&self, name: &str) -> Result<EntityId> {
        self.entity_ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownEntity(name.to_owned()))
    }

    pub fn relation_id(&self, name: &str) -> Result<RelationId> {
        self.relation_ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownRelation(name.to_owned()))
    }

    pub fn entity_name(&self, id: EntityId) -> Result<&str> {
        self.entity_names
            .get(id.0 as usize)
            .map(String::as_str)
            .ok_or(Error::InvalidEntityId(id.0))
    }

    pub fn relation_name(&self, id: RelationId) -> Result<&str> {
        self.relation_names
            .get(id.0 as usize)
            .map(String::as_str)
            .ok_or(Error::InvalidRelationId(id.0))
    }

    fn check_entity(&self, id: EntityId) -> Result<()> {
        if (id.0 as usize) < self.entity_names.len() {
            Ok(())
        } else {
            Err(Error::InvalidEntityId(id.0))
        }
    }

    fn check_relation(&self, id: RelationId) -> Result<()> {
        if (id.0 as usize) < self.relation_names.len() {
            Ok(())
        } else {
            Err(Error::InvalidRelationId(id.0))
        }
    }

    /// Tails reachable from `entity` along `relation`, sorted ascending.
    /// Empty slice when the entity has no such edge.
    pub fn neighbors(&self, entity: EntityId, relation: RelationId) -> Result<&[EntityId]> {
        self.check_entity(entity)?;
        self.check_relation(relation)?;
        Ok(self
            .adjacency
            .get(&entity)
            .and_then(|by_rel| by_rel.get(&relation))
            .map(Vec::as_slice)
            .unwrap_or(&NO_TAILS))
    }

    /// All outgoing edges of `entity`, grouped by relation, in relation-id
    /// order. Empty iterator when the entity has no outgoing edges.
    pub fn out_edges(
        &self,
        entity: EntityId,
    ) -> impl Iterator<Item = (RelationId, &[EntityId])> + '_ {
        self.adjacency
            .get(&entity)
            .into_iter()
            .flat_map(|by_rel| by_rel.iter().map(|(&r, tails)| (r, tails.as_slice())))
    }

    /// Relations with at least one edge out of `entity`, ascending.
    pub fn out_relations(&self, entity: EntityId) -> Vec<RelationId> {
        self.out_edges(entity).map(|(r, _)| r).collect()
    }

    pub fn contains_triple(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.adjacency
            .get(&head)
            .and_then(|by_rel| by_rel.get(&relation))
            .map(|tails| tails.binary_search(&tail).is_ok())
            .unwrap_or(false)
    }

    /// All triples in (head, relation, tail) order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.adjacency.iter().flat_map(|(&head, by_rel)| {
            by_rel.iter().flat_map(move |(&relation, tails)| {
                tails.iter().map(move |&tail| Triple {
                    head,
                    relation,
                    tail,
                })
            })
        })
    }

    /// The inverse partner of `relation` on an inverse-closed graph.
    pub fn inverse_of(&self, relation: RelationId) -> Result<RelationId> {
        if !self.inverse_closed {
            return Err(Error::NotInverseClosed);
        }
        self.check_relation(relation)?;
        let base = self.base_relation_count as u32;
        if relation.0 < base {
            Ok(RelationId(relation.0 + base))
        } else {
            Ok(RelationId(relation.0 - base))
        }
    }

    /// True when `relation` is one of the added inverse partners.
    pub fn is_inverse_relation(&self, relation: RelationId) -> bool {
        self.inverse_closed && (relation.0 as usize) >= self.base_relation_count
    }

    /// Removes every edge labeled with any relation in `relations` and
    /// returns the pruned graph. Dictionaries are untouched, so ids keep
    /// their meaning; only the adjacency shrinks.
    pub fn without_relations(&self, relations: &[RelationId]) -> Result<KnowledgeGraph> {
        for &r in relations {
            self.check_relation(r)?;
        }
        let mut pruned = self.clone();
        let mut removed = 0usize;
        pruned.adjacency.retain(|_, by_rel| {
            for r in relations {
                if let Some(tails) = by_rel.remove(r) {
                    removed += tails.len();
                }
            }
            !by_rel.is_empty()
        });
        pruned.triple_count -= removed;
        Ok(pruned)
    }

    /// Writes one `head<TAB>relation<TAB>tail` line per base (non-inverse)
    /// triple, in (head, relation, tail) id order.
    pub fn write_triple_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let base = self.base_relation_count as u32;
        for t in self.triples() {
            if t.relation.0 >= base {
                continue;
            }
            writeln!(
                w,
                "{}\t{}\t{}",
                self.entity_names[t.head.0 as usize],
                self.relation_names[t.relation.0 as usize],
                self.entity_names[t.tail.0 as usize]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Serializes the full graph (dictionaries, flags, triples) to `w`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "kgpath-graph v1")?;
        writeln!(w, "inverse_closed\t{}", u8::from(self.inverse_closed))?;
        writeln!(w, "base_relations\t{}", self.base_relation_count)?;
        writeln!(w, "entities\t{}", self.entity_names.len())?;
        for name in &self.entity_names {
            writeln!(w, "{name}")?;
        }
        writeln!(w, "relations\t{}", self.relation_names.len())?;
        for name in &self.relation_names {
            writeln!(w, "{name}")?;
        }
        writeln!(w, "triples\t{}", self.triple_count)?;
        for t in self.triples() {
            writeln!(w, "{}\t{}\t{}", t.head.0, t.relation.0, t.tail.0)?;
        }
        Ok(())
    }

    /// Reads a graph serialized by [`KnowledgeGraph::write_to`].
    pub fn read_from<R: BufRead>(r: &mut R, origin: &Path) -> Result<KnowledgeGraph> {
        let bad = |msg: &str| Error::format(origin, msg);
        let mut lines = r.lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::format(origin, format!("unexpected end of file in {what}")))?
                .map_err(Error::from)
        };
        if next_line("header")? != "kgpath-graph v1" {
            return Err(bad("missing `kgpath-graph v1` header"));
        }
        let field = |line: &str, key: &str| -> Result<usize> {
            let rest = line
                .strip_prefix(key)
                .and_then(|s| s.strip_prefix('\t'))
                .ok_or_else(|| Error::format(origin, format!("expected `{key}` line")))?;
            rest.parse::<usize>()
                .map_err(|_| Error::format(origin, format!("bad `{key}` value `{rest}`")))
        };
        let inverse_closed = field(&next_line("flags")?, "inverse_closed")? != 0;
        let base_relation_count = field(&next_line("flags")?, "base_relations")?;
        let entity_count = field(&next_line("entities")?, "entities")?;
        let mut entity_names = Vec::with_capacity(entity_count);
        for _ in 0..entity_count {
            entity_names.push(next_line("entity names")?);
        }
        let relation_count = field(&next_line("relations")?, "relations")?;
        let mut relation_names = Vec::with_capacity(relation_count);
        for _ in 0..relation_count {
            relation_names.push(next_line("relation names")?);
        }
        let triple_count = field(&next_line("triples")?, "triples")?;
        let mut adjacency: BTreeMap<EntityId, BTreeMap<RelationId, Vec<EntityId>>> =
            BTreeMap::new();
        let mut stored = 0usize;
        for _ in 0..triple_count {
            let line = next_line("triples")?;
            let mut parts = line.split('\t');
            let mut num = |what: &str| -> Result<u32> {
                parts
                    .next()
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| Error::format(origin, format!("bad triple {what} in `{line}`")))
            };
            let h = num("head")?;
            let rel = num("relation")?;
            let t = num("tail")?;
            if h as usize >= entity_count || t as usize >= entity_count {
                return Err(bad("triple entity id out of range"));
            }
            if rel as usize >= relation_count {
                return Err(bad("triple relation id out of range"));
            }
            let tails = adjacency
                .entry(EntityId(h))
                .or_default()
                .entry(RelationId(rel))
                .or_default();
            if let Err(pos) = tails.binary_search(&EntityId(t)) {
                tails.insert(pos, EntityId(t));
                stored += 1;
            }
        }
        if stored != triple_count {
            return Err(bad("duplicate triples in serialized graph"));
        }
        if inverse_closed && relation_count != base_relation_count * 2 {
            return Err(bad("inverse-closed graph must have twice the base relations"));
        }
        if !inverse_closed && relation_count != base_relation_count {
            return Err(bad("raw graph must have base_relations == relations"));
        }
        let entity_ids = entity_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), EntityId(i as u32)))
            .collect::<HashMap<_, _>>();
        if entity_ids.len() != entity_names.len() {
            return Err(bad("duplicate entity names"));
        }
        let relation_ids = relation_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), RelationId(i as u32)))
            .collect::<HashMap<_, _>>();
        if relation_ids.len() != relation_names.len() {
            return Err(bad("duplicate relation names"));
        }
        Ok(KnowledgeGraph {
            entity_names,
            entity_ids,
            relation_names,
            relation_ids,
            adjacency,
            triple_count,
            base_relation_count,
            inverse_closed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<KnowledgeGraph> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        KnowledgeGraph::read_from(&mut BufReader::new(file), path)
    }
}

/// Loads a tab-separated triple file: one `head<TAB>relation<TAB>tail` per
/// nonempty line. Duplicate triples collapse; an input with no triples is
/// an error.
pub fn load_triples(path: &Path) -> Result<KnowledgeGraph> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut builder = KnowledgeGraphBuilder::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (head, relation, tail) = match (parts.next(), parts.next(), parts.next(), parts.next())
        {
            (Some(h), Some(r), Some(t), None) if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                (h, r, t)
            }
            _ => {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("expected `head<TAB>relation<TAB>tail`, got `{line}`"),
                ))
            }
        };
        builder.add_named(head, relation, tail);
    }
    if builder.triple_count == 0 {
        return Err(Error::EmptyInput(format!(
            "no triples in {}",
            path.display()
        )));
    }
    Ok(builder.build())
}

/// Adds an inverse partner `r_inv` for every relation, with every edge
/// reversed. Exactly doubles the relation and triple counts. Applying it
/// to an already-closed graph is an error.
pub fn augment_inverses(kg: KnowledgeGraph) -> Result<KnowledgeGraph> {
    if kg.inverse_closed {
        return Err(Error::AlreadyInverseClosed);
    }
    let base = kg.relation_names.len();
    let mut relation_names = kg.relation_names;
    let mut relation_ids = kg.relation_ids;
    for i in 0..base {
        let name = format!("{}{}", relation_names[i], INVERSE_SUFFIX);
        let id = RelationId((base + i) as u32);
        if relation_ids.insert(name.clone(), id).is_some() {
            return Err(Error::InvalidArgument(format!(
                "relation name `{name}` collides with an inverse name"
            )));
        }
        relation_names.push(name);
    }
    let mut adjacency = kg.adjacency;
    let forward: Vec<Triple> = adjacency
        .iter()
        .flat_map(|(&head, by_rel)| {
            by_rel.iter().flat_map(move |(&relation, tails)| {
                tails.iter().map(move |&tail| Triple {
                    head,
                    relation,
                    tail,
                })
            })
        })
        .collect();
    let mut triple_count = kg.triple_count;
    for t in forward {
        let inv = RelationId(t.relation.0 + base as u32);
        let tails = adjacency
            .entry(t.tail)
            .or_default()
            .entry(inv)
            .or_default();
        if let Err(pos) = tails.binary_search(&t.head) {
            tails.insert(pos, t.head);
            triple_count += 1;
        }
    }
    Ok(KnowledgeGraph {
        entity_names: kg.entity_names,
        entity_ids: kg.entity_ids,
        relation_names,
        relation_ids,
        adjacency,
        triple_count,
        base_relation_count: base,
        inverse_closed: true,
    })
}

/// Renders a formula as relation names joined by ` -> `.
pub fn format_formula(kg: &KnowledgeGraph, formula: &PathFormula) -> Result<String> {
    let mut names = Vec::with_capacity(formula.len());
    for &r in formula.iter() {
        names.push(kg.relation_name(r)?.to_owned());
    }
    Ok(names.join(" -> "))
}

/// Parses a ` -> `-separated relation-name sequence back into a formula.
pub fn parse_formula(kg: &KnowledgeGraph, text: &str) -> Result<PathFormula> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut relations = Vec::new();
    for part in trimmed.split("->") {
        relations.push(kg.relation_id(part.trim())?);
    }
    Ok(PathFormula::new(relations))
}
