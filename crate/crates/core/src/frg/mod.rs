//! File reference graph, strongly connected components and dependent-file
//! queries.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frontend::{NodeKind, Project, SymbolTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrgError {
    #[error("`{0}` is not a file of the project")]
    UnknownFile(String),
    #[error("cache file is corrupt: {0}")]
    CorruptCache(String),
}

/// Directed graph over files: `A -> B` when A mentions a symbol defined in B.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FileReferenceGraph {
    files: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl FileReferenceGraph {
    /// Builds a graph from explicit edges; self loops are dropped.
    pub fn from_edges(mut files: Vec<String>, edges: impl IntoIterator<Item = (String, String)>) -> Result<Self, FrgError> {
        files.sort();
        files.dedup();
        let index = |f: &str| files.binary_search_by(|x| x.as_str().cmp(f)).map_err(|_| FrgError::UnknownFile(f.to_string()));
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (index(&a)?, index(&b)?);
            if a != b {
                set.insert((a, b));
            }
        }
        Ok(Self::from_indices(files, set))
    }

    fn from_indices(files: Vec<String>, edges: BTreeSet<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); files.len()];
        for &(a, b) in &edges {
            adj[a].push(b);
        }
        FileReferenceGraph { files, edges, adj }
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn index_of(&self, file: &str) -> Option<usize> {
        self.files.binary_search_by(|x| x.as_str().cmp(file)).ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (self.files[*a].as_str(), self.files[*b].as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

/// Edges from each file to the files defining the symbols it uses.
pub fn build_frg(project: &Project, symbols: &SymbolTable) -> FileReferenceGraph {
    let files: Vec<String> = project.units.iter().map(|u| u.file.clone()).collect();
    let mut edges = Vec::new();
    for unit in &project.units {
        for n in unit.nodes.iter().filter(|n| n.kind == NodeKind::Identifier) {
            let Some(sym) = symbols.resolve(n.id) else { continue };
            if let Some(def) = &symbols.symbol(sym).definition {
                if def.loc.file != unit.file {
                    edges.push((unit.file.clone(), def.loc.file.clone()));
                }
            }
        }
    }
    FileReferenceGraph::from_edges(files, edges).expect("definitions live in project files")
}

/// Strongly connected components and their condensation DAG.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SccIndex {
    /// Component of each file index.
    pub component_of: Vec<usize>,
    /// Sorted file indices per component; components are numbered by their
    /// smallest member.
    pub members: Vec<Vec<usize>>,
    pub cond_edges: BTreeSet<(usize, usize)>,
    cond_adj: Vec<Vec<usize>>,
}

impl SccIndex {
    fn new(component_of: Vec<usize>, members: Vec<Vec<usize>>, cond_edges: BTreeSet<(usize, usize)>) -> Self {
        let mut cond_adj = vec![Vec::new(); members.len()];
        for &(a, b) in &cond_edges {
            cond_adj[a].push(b);
        }
        SccIndex { component_of, members, cond_edges, cond_adj }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn successors(&self, c: usize) -> &[usize] {
        &self.cond_adj[c]
    }
}

/// Tarjan's algorithm with an explicit call stack.
pub fn compute_scc(frg: &FileReferenceGraph) -> SccIndex {
    const UNSEEN: usize = usize::MAX;
    let n = frg.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut raw_components: Vec<Vec<usize>> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // Frames are (vertex, position of the next successor to visit).
        let mut frames = vec![(root, 0usize)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            if let Some(&w) = frg.successors(v).get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack holds the component");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                raw_components.push(comp);
            }
        }
    }

    raw_components.sort_by_key(|c| c[0]);
    let mut component_of = vec![0; n];
    for (c, members) in raw_components.iter().enumerate() {
        for &f in members {
            component_of[f] = c;
        }
    }
    let cond_edges = frg.edges.iter().map(|&(a, b)| (component_of[a], component_of[b])).filter(|(a, b)| a != b).collect();
    SccIndex::new(component_of, raw_components, cond_edges)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FarfStats {
    /// Condensation nodes taken off the queue.
    pub pops: usize,
}

/// All files the given files depend on, themselves included.
pub fn farf<S: AsRef<str>>(frg: &FileReferenceGraph, scc: &SccIndex, files: &[S]) -> Result<BTreeSet<String>, FrgError> {
    farf_with_stats(frg, scc, files).map(|(f, _)| f)
}

pub fn farf_with_stats<S: AsRef<str>>(
    frg: &FileReferenceGraph,
    scc: &SccIndex,
    files: &[S],
) -> Result<(BTreeSet<String>, FarfStats), FrgError> {
    let mut visited = vec![false; scc.len()];
    let mut queue = VecDeque::new();
    for f in files {
        let f = f.as_ref();
        let i = frg.index_of(f).ok_or_else(|| FrgError::UnknownFile(f.to_string()))?;
        let c = scc.component_of[i];
        if !std::mem::replace(&mut visited[c], true) {
            queue.push_back(c);
        }
    }
    let mut out = BTreeSet::new();
    let mut stats = FarfStats::default();
    while let Some(c) = queue.pop_front() {
        stats.pops += 1;
        out.extend(scc.members[c].iter().map(|f| frg.files[*f].clone()));
        for &d in scc.successors(c) {
            if !std::mem::replace(&mut visited[d], true) {
                queue.push_back(d);
            }
        }
    }
    Ok((out, stats))
}

/// SHA-256 over every (path, content) pair in path order.
pub fn content_hash(sources: &[(String, Vec<u8>)]) -> String {
    let mut sorted: Vec<&(String, Vec<u8>)> = sources.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut h = Sha256::new();
    for (path, bytes) in sorted {
        h.update((path.len() as u64).to_le_bytes());
        h.update(path.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// One-time per-project analysis, persisted as `frg-cache.json`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrgCache {
    pub hash: String,
    pub frg: FileReferenceGraph,
    pub scc: SccIndex,
}

#[derive(Serialize, Deserialize)]
struct CacheDoc {
    hash: String,
    files: Vec<String>,
    edges: Vec<(String, String)>,
    scc: SccDoc,
}

#[derive(Serialize, Deserialize)]
struct SccDoc {
    members: BTreeMap<String, Vec<String>>,
    cond_edges: Vec<(usize, usize)>,
}

pub const CACHE_FILE: &str = "frg-cache.json";

impl FrgCache {
    pub fn build(hash: String, project: &Project, symbols: &SymbolTable) -> Self {
        let frg = build_frg(project, symbols);
        let scc = compute_scc(&frg);
        FrgCache { hash, frg, scc }
    }

    pub fn to_json(&self) -> String {
        let doc = CacheDoc {
            hash: self.hash.clone(),
            files: self.frg.files.clone(),
            edges: self.frg.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            scc: SccDoc {
                members: self
                    .scc
                    .members
                    .iter()
                    .enumerate()
                    .map(|(c, m)| (c.to_string(), m.iter().map(|f| self.frg.files[*f].clone()).collect()))
                    .collect(),
                cond_edges: self.scc.cond_edges.iter().copied().collect(),
            },
        };
        serde_json::to_string_pretty(&doc).expect("cache always serializes")
    }

    /// Parses a cache file, checking it is internally consistent.
    pub fn from_json(text: &str) -> Result<Self, FrgError> {
        let corrupt = |m: String| FrgError::CorruptCache(m);
        let doc: CacheDoc = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let frg = FileReferenceGraph::from_edges(doc.files, doc.edges).map_err(|e| corrupt(e.to_string()))?;
        let mut members = vec![Vec::new(); doc.scc.members.len()];
        let mut component_of = vec![usize::MAX; frg.len()];
        for (key, files) in doc.scc.members {
            let c: usize = key.parse().map_err(|_| corrupt(format!("bad component id `{key}`")))?;
            let slot = members.get_mut(c).ok_or_else(|| corrupt(format!("component {c} out of range")))?;
            for f in files {
                let i = frg.index_of(&f).ok_or_else(|| corrupt(format!("unknown member `{f}`")))?;
                component_of[i] = c;
                slot.push(i);
            }
            slot.sort_unstable();
        }
        if component_of.contains(&usize::MAX) {
            return Err(corrupt("components do not cover every file".into()));
        }
        let cond_edges: BTreeSet<(usize, usize)> = doc.scc.cond_edges.into_iter().collect();
        if cond_edges.iter().any(|&(a, b)| a >= members.len() || b >= members.len()) {
            return Err(corrupt("condensation edge out of range".into()));
        }
        Ok(FrgCache { hash: doc.hash, frg, scc: SccIndex::new(component_of, members, cond_edges) })
    }

    /// Reuses `dir/frg-cache.json` when its hash matches `hash`; otherwise
    /// rebuilds and rewrites it. Returns the cache and whether it was a hit.
    pub fn load_or_build(dir: &Path, hash: &str, project: &Project, symbols: &SymbolTable) -> std::io::Result<(Self, bool)> {
        let path = dir.join(CACHE_FILE);
        if let Ok(text) = std::fs::read_to_string(&path) {
            match Self::from_json(&text) {
                Ok(cache) if cache.hash == hash => {
                    info!("frg cache hit ({})", &hash[..12.min(hash.len())]);
                    return Ok((cache, true));
                }
                Ok(_) => info!("frg cache stale; rebuilding"),
                Err(e) => info!("frg cache unusable ({e}); rebuilding"),
            }
        }
        let cache = Self::build(hash.to_string(), project, symbols);
        crate::util::write_atomic(&path, cache.to_json().as_bytes())?;
        Ok((cache, false))
    }

    pub fn farf<S: AsRef<str>>(&self, files: &[S]) -> Result<BTreeSet<String>, FrgError> {
        farf(&self.frg, &self.scc, files)
    }
}
