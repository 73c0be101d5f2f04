use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceLoc {
    pub file: String,
    pub line: u32,
    pub column: u32,
}

impl SourceLoc {
    pub fn new(file: &str, line: u32, column: u32) -> Self {
        SourceLoc { file: file.to_string(), line, column }
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

/// Byte range `[start, end)` into the translation unit's source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

macro_rules! node_kinds {
    ($($kind:ident),* $(,)?) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum NodeKind {
            $($kind),*
        }

        impl NodeKind {
            pub const ALL: &'static [NodeKind] = &[$(NodeKind::$kind),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(NodeKind::$kind => stringify!($kind)),*
                }
            }
        }

        impl FromStr for NodeKind {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $(stringify!($kind) => Ok(NodeKind::$kind),)*
                    other => Err(format!("unknown node kind `{other}`")),
                }
            }
        }
    };
}

node_kinds!(
    TranslationUnit,
    FunctionDef,
    Param,
    VarDecl,
    Assign,
    Call,
    Arg,
    If,
    Else,
    Switch,
    Case,
    Default,
    Block,
    While,
    For,
    Return,
    BinaryOp,
    UnaryOp,
    Identifier,
    Literal,
    MemberAccess,
    Index,
    InitList,
    Break,
    Continue,
);

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl NodeKind {
    /// Kinds that open a lexical region whose statements they own.
    pub fn is_scope(self) -> bool {
        matches!(self, NodeKind::Block | NodeKind::Else | NodeKind::Case | NodeKind::Default)
    }

    /// Branching statements; the node itself stands for its predicate.
    pub fn is_predicate(self) -> bool {
        matches!(self, NodeKind::If | NodeKind::Switch | NodeKind::While | NodeKind::For)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclInfo {
    pub is_extern: bool,
    pub is_static: bool,
    /// False for `extern` variables and function prototypes.
    pub is_definition: bool,
    pub is_array: bool,
    pub is_variadic: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForParts {
    pub init: Option<NodeId>,
    pub cond: Option<NodeId>,
    pub step: Option<NodeId>,
    pub body: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub code: String,
    pub loc: SourceLoc,
    pub span: Span,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub enclosing_function: Option<NodeId>,
    /// Identifier text, declared name, callee name or member name.
    pub name: Option<String>,
    /// Operator spelling for `Assign`, `BinaryOp`, `UnaryOp` and `MemberAccess`.
    pub op: Option<String>,
    pub decl: Option<DeclInfo>,
    pub for_parts: Option<ForParts>,
}

impl AstNode {
    /// Last source line covered by this node.
    pub fn end_line(&self) -> u32 {
        self.loc.line + self.code.bytes().filter(|b| *b == b'\n').count() as u32
    }
}

/// Parsed file: an arena of nodes whose ids are contiguous from `first_id()`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationUnit {
    pub file: String,
    pub source: String,
    pub root: NodeId,
    pub nodes: Vec<AstNode>,
}

impl TranslationUnit {
    pub fn first_id(&self) -> NodeId {
        self.root
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 >= self.root.0 && ((id.0 - self.root.0) as usize) < self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[(id.0 - self.root.0) as usize]
    }

    pub fn root_node(&self) -> &AstNode {
        self.node(self.root)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Shifts every id by `offset` so units can share one id space.
    pub fn rebase(&mut self, offset: u32) {
        let shift = |id: &mut NodeId| id.0 += offset;
        shift(&mut self.root);
        for node in &mut self.nodes {
            shift(&mut node.id);
            node.children.iter_mut().for_each(shift);
            node.parent.as_mut().map(shift);
            node.enclosing_function.as_mut().map(shift);
            if let Some(parts) = node.for_parts.as_mut() {
                for slot in [&mut parts.init, &mut parts.cond, &mut parts.step, &mut parts.body] {
                    slot.as_mut().map(shift);
                }
            }
        }
    }

    /// Pre-order walk from `from`.
    pub fn descendants(&self, from: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![from];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.node(id).children.iter().rev());
        }
        out
    }

    pub fn functions(&self) -> impl Iterator<Item = &AstNode> {
        self.root_node().children.iter().map(|c| self.node(*c)).filter(|n| n.kind == NodeKind::FunctionDef)
    }
}
