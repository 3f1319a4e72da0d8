use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::tokenize;
use crate::error::{read_to_string, write_file, Error, Result};

const DEMO_GRAPH: &str = include_str!("../../data/demo_ontology.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub to: String,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub semantic_type: String,
    #[serde(default)]
    pub edges: Vec<Relation>,
}

/// Concepts with typed relations, queried as an undirected graph.
#[derive(Debug, Clone)]
pub struct ConceptGraph {
    concepts: Vec<Concept>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    /// Tokenized surface form → concept index. A form shared by several
    /// concepts belongs to the one listed first.
    surface: HashMap<Vec<String>, usize>,
    max_surface_len: usize,
}

impl PartialEq for ConceptGraph {
    fn eq(&self, other: &Self) -> bool {
        self.concepts == other.concepts
    }
}

impl ConceptGraph {
    /// Validates ids and edges. Concepts keep their input order.
    pub fn new(concepts: Vec<Concept>) -> Result<Self> {
        let mut index = HashMap::with_capacity(concepts.len());
        for (i, c) in concepts.iter().enumerate() {
            if c.id.is_empty() {
                return Err(Error::invalid(format!("concept #{i} has an empty id")));
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate concept id `{}`", c.id)));
            }
        }
        let mut adjacency = vec![Vec::new(); concepts.len()];
        for (i, c) in concepts.iter().enumerate() {
            for e in &c.edges {
                let j = *index.get(&e.to).ok_or_else(|| {
                    Error::invalid(format!("edge {} -[{}]-> {} points to an unknown concept", c.id, e.relation, e.to))
                })?;
                if i != j {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let mut surface = HashMap::new();
        let mut max_surface_len = 0;
        for (i, c) in concepts.iter().enumerate() {
            for form in std::iter::once(&c.name).chain(&c.synonyms) {
                let toks = tokenize(form);
                if toks.is_empty() {
                    continue;
                }
                max_surface_len = max_surface_len.max(toks.len());
                surface.entry(toks).or_insert(i);
            }
        }
        Ok(ConceptGraph {
            concepts,
            index,
            adjacency,
            surface,
            max_surface_len,
        })
    }

    /// The bundled demo graph of common conditions, findings and drugs.
    pub fn demo() -> Self {
        Self::from_jsonl(DEMO_GRAPH, "demo").expect("bundled graph is valid")
    }

    pub fn from_jsonl(text: &str, source: &str) -> Result<Self> {
        let mut concepts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            concepts.push(serde_json::from_str(line).map_err(|e| Error::parse(source, i + 1, e.to_string()))?);
        }
        Self::new(concepts)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&read_to_string(path)?, &path.display().to_string())
    }

    /// Flat tables: concepts as `id<TAB>name<TAB>type[<TAB>syn1|syn2..]`,
    /// edges as `from<TAB>to<TAB>relation`. Lines starting with `#` are
    /// comments.
    pub fn from_tsv(concepts: &str, edges: &str, source: &str) -> Result<Self> {
        let mut list = Vec::new();
        for (line, f) in tsv_rows(concepts) {
            if f.len() < 3 {
                return Err(Error::parse(source, line, "expected id, name and semantic type"));
            }
            list.push(Concept {
                id: f[0].to_string(),
                name: f[1].to_string(),
                semantic_type: f[2].to_string(),
                synonyms: f
                    .get(3)
                    .map(|s| s.split('|').filter(|s| !s.is_empty()).map(str::to_string).collect())
                    .unwrap_or_default(),
                edges: Vec::new(),
            });
        }
        let pos: HashMap<String, usize> = list.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
        for (line, f) in tsv_rows(edges) {
            if f.len() < 3 {
                return Err(Error::parse(source, line, "expected from, to and relation"));
            }
            let i = *pos
                .get(f[0])
                .ok_or_else(|| Error::parse(source, line, format!("edge from unknown concept `{}`", f[0])))?;
            list[i].edges.push(Relation {
                to: f[1].to_string(),
                relation: f[2].to_string(),
            });
        }
        Self::new(list)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.concepts {
            out.push_str(&serde_json::to_string(c).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_jsonl())
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept(&self, idx: usize) -> &Concept {
        &self.concepts[idx]
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownConcept(id.to_string()))
    }

    pub fn neighbors(&self, idx: usize) -> &[usize] {
        &self.adjacency[idx]
    }

    pub fn degree(&self, id: &str) -> Result<usize> {
        Ok(self.adjacency[self.position(id)?].len())
    }

    /// Tokenized surface forms of a concept: its name and synonyms.
    pub fn surface_forms(&self, idx: usize) -> Vec<Vec<String>> {
        let c = &self.concepts[idx];
        std::iter::once(&c.name).chain(&c.synonyms).map(|s| tokenize(s)).filter(|t| !t.is_empty()).collect()
    }

    pub(crate) fn surface_lookup(&self, tokens: &[String]) -> Option<usize> {
        self.surface.get(tokens).copied()
    }

    pub(crate) fn max_surface_len(&self) -> usize {
        self.max_surface_len
    }

    /// Hop distances from `from` to every concept; `None` when unreachable.
    pub fn distances_from(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued nodes have a distance");
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn distance(&self, a: usize, b: usize) -> Option<usize> {
        if a == b {
            return Some(0);
        }
        self.distances_from(a)[b]
    }
}

fn tsv_rows(text: &str) -> Vec<(usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').map(str::trim).collect()))
        .collect()
}

/// Breadth-first shortest path over undirected edges, `None` if unreachable.
pub fn shortest_path_len(graph: &ConceptGraph, c1: &str, c2: &str) -> Result<Option<usize>> {
    let a = graph.position(c1)?;
    let b = graph.position(c2)?;
    Ok(graph.distance(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concept(id: &str, edges: &[&str]) -> Concept {
        Concept {
            id: id.into(),
            name: format!("name {id}"),
            synonyms: vec![],
            semantic_type: "t".into(),
            edges: edges
                .iter()
                .map(|t| Relation {
                    to: t.to_string(),
                    relation: "r".into(),
                })
                .collect(),
        }
    }

    #[test]
    fn degrees_and_dangling_edges() {
        let g = ConceptGraph::new(vec![concept("a", &["b"]), concept("b", &[])]).unwrap();
        assert_eq!(g.degree("a").unwrap(), 1);
        assert_eq!(g.degree("b").unwrap(), 1);
        let err = ConceptGraph::new(vec![concept("a", &["zz"])]).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn jsonl_roundtrip() {
        let g = ConceptGraph::demo();
        assert!(g.len() >= 40);
        let back = ConceptGraph::from_jsonl(&g.to_jsonl(), "x").unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_jsonl(), g.to_jsonl());
    }

    #[test]
    fn tsv_loader() {
        let g = ConceptGraph::from_tsv("a\tAlpha\tdisorder\talp|al\nb\tBeta\tfinding\n", "a\tb\tis_a\n", "t").unwrap();
        assert_eq!(shortest_path_len(&g, "a", "b").unwrap(), Some(1));
        assert_eq!(g.concepts()[0].synonyms, ["alp", "al"]);
        assert!(ConceptGraph::from_tsv("a\tAlpha\tx\n", "a\tq\tr\n", "t").is_err());
    }

    #[test]
    fn paths() {
        let g = ConceptGraph::new(vec![
            concept("a", &["b"]),
            concept("b", &["c"]),
            concept("c", &[]),
            concept("d", &[]),
        ])
        .unwrap();
        assert_eq!(shortest_path_len(&g, "a", "a").unwrap(), Some(0));
        assert_eq!(shortest_path_len(&g, "a", "b").unwrap(), Some(1));
        assert_eq!(shortest_path_len(&g, "c", "a").unwrap(), Some(2));
        assert_eq!(shortest_path_len(&g, "a", "d").unwrap(), None);
        assert!(matches!(shortest_path_len(&g, "a", "x"), Err(Error::UnknownConcept(_))));
    }
}
