//! Project-wide symbol resolution.
//!
//! Lookup order for an identifier is: enclosing block scopes (innermost
//! first), then `static` symbols of the same file, then externally visible
//! globals of any file. `extern` declarations bind to the global symbol of
//! the same name, so a use in one file resolves to the definition in another.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{AstNode, NodeId, NodeKind, SourceLoc, TranslationUnit};
use super::error::SymbolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Function,
    GlobalVariable,
    LocalVariable,
    Parameter,
}

impl SymbolKind {
    pub fn is_variable(self) -> bool {
        !matches!(self, SymbolKind::Function)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolScope {
    Global,
    File(String),
    Function(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSite {
    pub loc: SourceLoc,
    pub node: NodeId,
}

impl SymbolSite {
    fn of(node: &AstNode) -> Self {
        SymbolSite { loc: node.loc.clone(), node: node.id }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub id: SymbolId,
    pub name: String,
    pub kind: SymbolKind,
    pub scope: SymbolScope,
    pub definition: Option<SymbolSite>,
    pub declarations: Vec<SymbolSite>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<Symbol>,
    globals: BTreeMap<String, SymbolId>,
    file_statics: BTreeMap<(String, String), SymbolId>,
    resolved: BTreeMap<NodeId, SymbolId>,
    declared_by: BTreeMap<NodeId, SymbolId>,
    unresolved: Vec<NodeId>,
}

impl SymbolTable {
    /// Builds the table, failing on the first duplicate definition.
    pub fn build(units: &[TranslationUnit]) -> Result<SymbolTable, SymbolError> {
        let (table, mut errors) = Self::build_lenient(units);
        match errors.is_empty() {
            true => Ok(table),
            false => Err(errors.swap_remove(0)),
        }
    }

    /// Builds the table, keeping the first definition when duplicates occur.
    pub fn build_lenient(units: &[TranslationUnit]) -> (SymbolTable, Vec<SymbolError>) {
        let mut builder = Builder { table: SymbolTable::default(), errors: Vec::new() };
        for unit in units {
            builder.collect_globals(unit);
        }
        for unit in units {
            let mut walker = Walker { unit, scopes: Vec::new(), function: None };
            walker.walk(&mut builder, unit.root);
        }
        (builder.table, builder.errors)
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn symbol(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id.0 as usize]
    }

    /// Symbol an `Identifier` node refers to.
    pub fn resolve(&self, ident: NodeId) -> Option<SymbolId> {
        self.resolved.get(&ident).copied()
    }

    /// Symbol introduced or re-declared by a `VarDecl`, `Param` or `FunctionDef`.
    pub fn declared_by(&self, node: NodeId) -> Option<SymbolId> {
        self.declared_by.get(&node).copied()
    }

    pub fn unresolved(&self) -> &[NodeId] {
        &self.unresolved
    }

    pub fn lookup_global(&self, name: &str) -> Option<&Symbol> {
        self.globals.get(name).map(|id| self.symbol(*id))
    }

    pub fn entries<'s>(&'s self, name: &'s str) -> impl Iterator<Item = &'s Symbol> + 's {
        self.symbols.iter().filter(move |s| s.name == name)
    }

    /// The node a use of `sym` should be attributed to: its definition when
    /// one exists, otherwise its first declaration.
    pub fn declaration_node(&self, sym: SymbolId) -> Option<NodeId> {
        let s = self.symbol(sym);
        s.definition.as_ref().or(s.declarations.first()).map(|site| site.node)
    }
}

struct Builder {
    table: SymbolTable,
    errors: Vec<SymbolError>,
}

impl Builder {
    fn new_symbol(&mut self, name: &str, kind: SymbolKind, scope: SymbolScope) -> SymbolId {
        let id = SymbolId(self.table.symbols.len() as u32);
        self.table.symbols.push(Symbol { id, name: name.to_string(), kind, scope, definition: None, declarations: Vec::new() });
        id
    }

    fn add_site(&mut self, sym: SymbolId, node: &AstNode, is_definition: bool) {
        let site = SymbolSite::of(node);
        let symbol = &mut self.table.symbols[sym.0 as usize];
        if is_definition {
            match &symbol.definition {
                Some(first) => self.errors.push(SymbolError::DuplicateDefinition {
                    symbol: symbol.name.clone(),
                    first: first.loc.clone(),
                    second: site.loc,
                }),
                None => symbol.definition = Some(site),
            }
        } else {
            symbol.declarations.push(site);
        }
        self.table.declared_by.insert(node.id, sym);
    }

    fn collect_globals(&mut self, unit: &TranslationUnit) {
        for child in &unit.root_node().children {
            let node = unit.node(*child);
            let (Some(name), Some(decl)) = (&node.name, &node.decl) else { continue };
            let kind = match node.kind {
                NodeKind::FunctionDef => SymbolKind::Function,
                _ => SymbolKind::GlobalVariable,
            };
            let sym = if decl.is_static {
                let key = (unit.file.clone(), name.clone());
                match self.table.file_statics.get(&key) {
                    Some(id) => *id,
                    None => {
                        let id = self.new_symbol(name, kind, SymbolScope::File(unit.file.clone()));
                        self.table.file_statics.insert(key, id);
                        id
                    }
                }
            } else {
                match self.table.globals.get(name) {
                    Some(id) => *id,
                    None => {
                        let id = self.new_symbol(name, kind, SymbolScope::Global);
                        self.table.globals.insert(name.clone(), id);
                        id
                    }
                }
            };
            self.add_site(sym, node, decl.is_definition);
        }
    }
}

struct Walker<'u> {
    unit: &'u TranslationUnit,
    scopes: Vec<BTreeMap<String, SymbolId>>,
    function: Option<NodeId>,
}

impl Walker<'_> {
    fn lookup(&self, b: &Builder, name: &str) -> Option<SymbolId> {
        for scope in self.scopes.iter().rev() {
            if let Some(id) = scope.get(name) {
                return Some(*id);
            }
        }
        let key = (self.unit.file.clone(), name.to_string());
        b.table.file_statics.get(&key).or_else(|| b.table.globals.get(name)).copied()
    }

    fn declare_local(&mut self, b: &mut Builder, node: &AstNode, kind: SymbolKind) {
        let Some(name) = &node.name else { return };
        let scope = SymbolScope::Function(self.function.unwrap_or(node.id));
        let innermost = self.scopes.last().and_then(|s| s.get(name)).copied();
        let sym = match innermost {
            // Re-definition in the same scope: reported, first one kept.
            Some(existing) => {
                b.add_site(existing, node, true);
                b.table.declared_by.insert(node.id, existing);
                existing
            }
            None => {
                let id = b.new_symbol(name, kind, scope);
                b.add_site(id, node, true);
                id
            }
        };
        if let Some(scope) = self.scopes.last_mut() {
            scope.insert(name.clone(), sym);
        }
    }

    fn walk_children(&mut self, b: &mut Builder, node: &AstNode) {
        for child in &node.children {
            self.walk(b, *child);
        }
    }

    fn scoped(&mut self, b: &mut Builder, node: &AstNode) {
        self.scopes.push(BTreeMap::new());
        self.walk_children(b, node);
        self.scopes.pop();
    }

    fn walk(&mut self, b: &mut Builder, id: NodeId) {
        let unit = self.unit;
        let node = unit.node(id);
        match node.kind {
            NodeKind::FunctionDef => {
                let has_body = node.decl.as_ref().is_some_and(|d| d.is_definition);
                if !has_body || !self.scopes.is_empty() {
                    return;
                }
                self.function = Some(node.id);
                self.scopes.push(BTreeMap::new());
                for child in &node.children {
                    let c = unit.node(*child);
                    if c.kind == NodeKind::Param {
                        self.walk_children(b, c);
                        self.declare_local(b, c, SymbolKind::Parameter);
                    } else {
                        self.walk(b, *child);
                    }
                }
                self.scopes.pop();
                self.function = None;
            }
            NodeKind::VarDecl if self.scopes.is_empty() => self.walk_children(b, node),
            NodeKind::VarDecl => {
                let is_extern = node.decl.as_ref().is_some_and(|d| d.is_extern);
                if is_extern {
                    let name = node.name.clone().unwrap_or_default();
                    let key = (unit.file.clone(), name.clone());
                    let target = b.table.file_statics.get(&key).or_else(|| b.table.globals.get(&name)).copied();
                    let sym = target.unwrap_or_else(|| {
                        let id = b.new_symbol(&name, SymbolKind::GlobalVariable, SymbolScope::Global);
                        b.table.globals.insert(name.clone(), id);
                        id
                    });
                    b.add_site(sym, node, false);
                    if let Some(scope) = self.scopes.last_mut() {
                        scope.insert(name, sym);
                    }
                } else {
                    self.declare_local(b, node, SymbolKind::LocalVariable);
                }
                self.walk_children(b, node);
            }
            NodeKind::Block | NodeKind::For => self.scoped(b, node),
            NodeKind::Switch => {
                let (cond, cases) = node.children.split_first().expect("switch has a condition");
                self.walk(b, *cond);
                self.scopes.push(BTreeMap::new());
                for case in cases {
                    self.walk(b, *case);
                }
                self.scopes.pop();
            }
            NodeKind::Identifier => {
                let name = node.name.as_deref().unwrap_or_default();
                match self.lookup(b, name) {
                    Some(sym) => {
                        b.table.resolved.insert(id, sym);
                    }
                    None => b.table.unresolved.push(id),
                }
            }
            _ => self.walk_children(b, node),
        }
    }
}
