//! eCPG-JSON v1 interchange format.
//!
//! ```json
//! {"version":1,
//!  "nodes":[{"id":0,"kind":"If","code":"...","file":"a.c","line":3,"column":5,"function":"f"}],
//!  "edges":[{"src":0,"dst":1,"label":"S"}]}
//! ```

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::Ecpg;
use crate::depgraph::{Cpg, CpgError, Edge, EdgeLabel, NodeProps};
use crate::frontend::NodeId;

pub const FORMAT_VERSION: i64 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("eCPG-JSON (version {}) invalid at {path}: {message}", version.map_or("?".to_string(), |v| v.to_string()))]
pub struct SchemaError {
    pub version: Option<i64>,
    /// JSON path of the offending value, e.g. `$.edges[3].label`.
    pub path: String,
    pub message: String,
}

/// Serializes the graph with nodes sorted by id and edges by (src, dst, label).
pub fn export_ecpg(ecpg: &Ecpg) -> Vec<u8> {
    let g = ecpg.graph();
    let nodes: Vec<Value> = g
        .nodes()
        .map(|n| {
            json!({
                "id": n.id.0,
                "kind": n.kind.as_str(),
                "code": n.code,
                "file": n.file,
                "line": n.line,
                "column": n.column,
                "function": n.function,
            })
        })
        .collect();
    let edges: Vec<Value> = g.edges().iter().map(|e| json!({"src": e.src.0, "dst": e.dst.0, "label": e.label.as_str()})).collect();
    let doc = json!({"version": FORMAT_VERSION, "nodes": nodes, "edges": edges});
    let mut out = serde_json::to_vec_pretty(&doc).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

struct Reader {
    version: Option<i64>,
}

impl Reader {
    fn err(&self, path: impl Into<String>, message: impl Into<String>) -> SchemaError {
        SchemaError { version: self.version, path: path.into(), message: message.into() }
    }

    fn field<'v>(&self, obj: &'v Map<String, Value>, path: &str, key: &str) -> Result<&'v Value, SchemaError> {
        obj.get(key).ok_or_else(|| self.err(format!("{path}.{key}"), "missing key"))
    }

    fn uint(&self, obj: &Map<String, Value>, path: &str, key: &str) -> Result<u32, SchemaError> {
        let v = self.field(obj, path, key)?;
        v.as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| self.err(format!("{path}.{key}"), "expected a non-negative 32-bit integer"))
    }

    fn string(&self, obj: &Map<String, Value>, path: &str, key: &str) -> Result<String, SchemaError> {
        let v = self.field(obj, path, key)?;
        v.as_str().map(str::to_owned).ok_or_else(|| self.err(format!("{path}.{key}"), "expected a string"))
    }

    fn object<'v>(&self, v: &'v Value, path: &str) -> Result<&'v Map<String, Value>, SchemaError> {
        v.as_object().ok_or_else(|| self.err(path, "expected an object"))
    }

    fn array<'v>(&self, obj: &'v Map<String, Value>, key: &str) -> Result<&'v Vec<Value>, SchemaError> {
        self.field(obj, "$", key)?.as_array().ok_or_else(|| self.err(format!("$.{key}"), "expected an array"))
    }
}

/// Parses eCPG-JSON v1. Any structural problem, unknown kind or label,
/// duplicate node id or dangling edge is a [`SchemaError`].
pub fn import_ecpg(bytes: &[u8]) -> Result<Ecpg, SchemaError> {
    let mut r = Reader { version: None };
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| r.err("$", format!("not JSON: {e}")))?;
    let root = r.object(&doc, "$")?;
    let version = r.field(root, "$", "version")?;
    r.version = version.as_i64();
    if r.version != Some(FORMAT_VERSION) {
        return Err(r.err("$.version", format!("unsupported version {version}")));
    }

    let mut graph = Cpg::default();
    for (i, v) in r.array(root, "nodes")?.iter().enumerate() {
        let path = format!("$.nodes[{i}]");
        let obj = r.object(v, &path)?;
        let id = NodeId(r.uint(obj, &path, "id")?);
        let kind_text = r.string(obj, &path, "kind")?;
        let kind = kind_text.parse().map_err(|e: String| r.err(format!("{path}.kind"), e))?;
        let function = match r.field(obj, &path, "function")? {
            Value::Null => None,
            Value::String(s) => Some(s.clone()),
            _ => return Err(r.err(format!("{path}.function"), "expected a string or null")),
        };
        let props = NodeProps {
            id,
            kind,
            code: r.string(obj, &path, "code")?,
            file: r.string(obj, &path, "file")?,
            line: r.uint(obj, &path, "line")?,
            column: r.uint(obj, &path, "column")?,
            function,
        };
        if props.line == 0 {
            return Err(r.err(format!("{path}.line"), "lines are 1-based"));
        }
        graph.add_node(props).map_err(|_| r.err(format!("{path}.id"), format!("duplicate node id {}", id.0)))?;
    }
    for (i, v) in r.array(root, "edges")?.iter().enumerate() {
        let path = format!("$.edges[{i}]");
        let obj = r.object(v, &path)?;
        let src = NodeId(r.uint(obj, &path, "src")?);
        let dst = NodeId(r.uint(obj, &path, "dst")?);
        let label_text = r.string(obj, &path, "label")?;
        let label: EdgeLabel = label_text.parse().map_err(|e: String| r.err(format!("{path}.label"), e))?;
        match graph.add_edge(Edge::new(src, dst, label)) {
            Ok(_) => {}
            Err(CpgError::DanglingEdge { .. }) => {
                let which = if graph.node(src).is_none() { "src" } else { "dst" };
                return Err(r.err(format!("{path}.{which}"), "edge endpoint is not a node"));
            }
            Err(e) => return Err(r.err(path, e.to_string())),
        }
    }
    Ok(Ecpg::from_graph(graph))
}
