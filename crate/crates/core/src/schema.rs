//! Relational schema model: databases, tables, columns, foreign-key structure,
//! and the undirected join graph built from it.
//!
//! Schemas and graphs are immutable after construction; every operation here is
//! a pure read, safe to share across worker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while validating or traversing schema structure.
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("database `{db}`: foreign key references unknown table `{table}` (edge {a} -- {b})")]
    UnknownFkEndpoint {
        db: DatabaseId,
        table: String,
        a: String,
        b: String,
    },
    #[error("database `{db}`: foreign key joins table `{table}` to itself")]
    SelfLoopFk { db: DatabaseId, table: String },
    #[error("database `{db}`: duplicate table name `{table}`")]
    DuplicateTable { db: DatabaseId, table: String },
    #[error("table `{table}`: duplicate column name `{column}`")]
    DuplicateColumn { table: TableId, column: String },
    #[error("table `{table}`: empty column name")]
    EmptyColumnName { table: TableId },
    #[error("database `{db}`: empty table name")]
    EmptyTableName { db: DatabaseId },
    #[error("node `{0}` is not part of the schema graph")]
    NodeOutsideGraph(TableId),
    #[error("gold table `{0}` does not exist in the schema")]
    UnknownGoldTable(TableId),
}

/// Opaque database identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatabaseId(pub String);

impl DatabaseId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DatabaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Table identifier, qualified by its database so ids stay unique across the corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TableId {
    pub database: DatabaseId,
    pub table: String,
}

impl TableId {
    pub fn new(database: impl Into<String>, table: impl Into<String>) -> Self {
        Self {
            database: DatabaseId::new(database),
            table: table.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.table
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.database, self.table)
    }
}

/// Column identifier, qualified by its declaring table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnId {
    pub table: TableId,
    pub column: String,
}

impl ColumnId {
    pub fn new(table: TableId, column: impl Into<String>) -> Self {
        Self {
            table,
            column: column.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.column
    }
}

impl fmt::Display for ColumnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// A column with its surface name and optional alternate surface forms
/// (e.g. semantic-type annotations).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub id: ColumnId,
    pub name: String,
    #[serde(default)]
    pub type_variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub id: TableId,
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

/// An undirected foreign-key join between two tables of the same database.
/// Direction in the source metadata is discarded; the unordered pair is the edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForeignKeyEdge {
    pub a: TableId,
    pub b: TableId,
}

impl ForeignKeyEdge {
    /// Normalizes the endpoint order so that `(x, y)` and `(y, x)` compare equal.
    pub fn new(x: TableId, y: TableId) -> Self {
        if x <= y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub id: DatabaseId,
    pub tables: Vec<TableDef>,
    pub fks: Vec<ForeignKeyEdge>,
}

impl DatabaseSchema {
    /// Checks the structural invariants: non-empty unique names, FK endpoints
    /// declared, no self-loop FKs.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut names = BTreeSet::new();
        for table in &self.tables {
            if table.name.is_empty() {
                return Err(SchemaError::EmptyTableName {
                    db: self.id.clone(),
                });
            }
            if !names.insert(&table.name) {
                return Err(SchemaError::DuplicateTable {
                    db: self.id.clone(),
                    table: table.name.clone(),
                });
            }
            let mut cols = BTreeSet::new();
            for col in &table.columns {
                if col.name.is_empty() {
                    return Err(SchemaError::EmptyColumnName {
                        table: table.id.clone(),
                    });
                }
                if !cols.insert(&col.name) {
                    return Err(SchemaError::DuplicateColumn {
                        table: table.id.clone(),
                        column: col.name.clone(),
                    });
                }
            }
        }
        for fk in &self.fks {
            if fk.a == fk.b {
                return Err(SchemaError::SelfLoopFk {
                    db: self.id.clone(),
                    table: fk.a.table.clone(),
                });
            }
            for endpoint in [&fk.a, &fk.b] {
                if !names.contains(&endpoint.table) {
                    return Err(SchemaError::UnknownFkEndpoint {
                        db: self.id.clone(),
                        table: endpoint.table.clone(),
                        a: fk.a.table.clone(),
                        b: fk.b.table.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn table_ids(&self) -> impl Iterator<Item = &TableId> {
        self.tables.iter().map(|t| &t.id)
    }
}

/// Undirected FK adjacency for one database. Node set equals the schema's
/// table set; symmetric by construction; no self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaGraph {
    pub database: DatabaseId,
    adjacency: BTreeMap<TableId, BTreeSet<TableId>>,
}

impl SchemaGraph {
    pub fn contains(&self, node: &TableId) -> bool {
        self.adjacency.contains_key(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TableId> {
        self.adjacency.keys()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: &TableId) -> Option<&BTreeSet<TableId>> {
        self.adjacency.get(node)
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(|n| n.len()).sum::<usize>() / 2
    }
}

/// Builds the undirected schema graph for a database: one node per table, one
/// edge per distinct unordered FK pair. Parallel and reversed edges collapse.
pub fn build_schema_graph(schema: &DatabaseSchema) -> Result<SchemaGraph, SchemaError> {
    schema.validate()?;
    let mut adjacency: BTreeMap<TableId, BTreeSet<TableId>> = schema
        .tables
        .iter()
        .map(|t| (t.id.clone(), BTreeSet::new()))
        .collect();
    for fk in &schema.fks {
        adjacency
            .get_mut(&fk.a)
            .expect("validated endpoint")
            .insert(fk.b.clone());
        adjacency
            .get_mut(&fk.b)
            .expect("validated endpoint")
            .insert(fk.a.clone());
    }
    Ok(SchemaGraph {
        database: schema.id.clone(),
        adjacency,
    })
}

/// Connected components of the subgraph induced by `nodes`: edges between a
/// member and a non-member are ignored, so two members connect only through
/// paths that stay inside `nodes`.
///
/// Components come back sorted by (size desc, smallest member asc).
pub fn connected_components(
    graph: &SchemaGraph,
    nodes: &BTreeSet<TableId>,
) -> Result<Vec<BTreeSet<TableId>>, SchemaError> {
    for node in nodes {
        if !graph.contains(node) {
            return Err(SchemaError::NodeOutsideGraph(node.clone()));
        }
    }
    let mut visited: BTreeSet<&TableId> = BTreeSet::new();
    let mut components = Vec::new();
    for start in nodes {
        if visited.contains(start) {
            continue;
        }
        let mut component = BTreeSet::new();
        let mut stack = vec![start];
        visited.insert(start);
        while let Some(node) = stack.pop() {
            component.insert(node.clone());
            for neighbor in graph.neighbors(node).expect("checked membership") {
                if nodes.contains(neighbor) && !visited.contains(neighbor) {
                    if let Some(n) = nodes.get(neighbor) {
                        visited.insert(n);
                        stack.push(n);
                    }
                }
            }
        }
        components.push(component);
    }
    components.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.iter().next().cmp(&b.iter().next()))
    });
    Ok(components)
}

/// One-hop FK expansion over the full graph: the group plus every table
/// adjacent to any member. Always a superset of the input.
pub fn fk_expand(
    group: &BTreeSet<TableId>,
    graph: &SchemaGraph,
) -> Result<BTreeSet<TableId>, SchemaError> {
    let mut expanded = group.clone();
    for member in group {
        let neighbors = graph
            .neighbors(member)
            .ok_or_else(|| SchemaError::NodeOutsideGraph(member.clone()))?;
        expanded.extend(neighbors.iter().cloned());
    }
    Ok(expanded)
}

/// Transitive FK closure: repeats one-hop expansion until a fixed point.
/// Kept as a configuration experiment next to the default one-hop expansion.
pub fn fk_closure(
    group: &BTreeSet<TableId>,
    graph: &SchemaGraph,
) -> Result<BTreeSet<TableId>, SchemaError> {
    let mut current = group.clone();
    loop {
        let next = fk_expand(&current, graph)?;
        if next.len() == current.len() {
            return Ok(next);
        }
        current = next;
    }
}

/// Number of tables outside `gold` that are FK-adjacent to a gold table.
/// This is the per-query data-complexity attribute.
pub fn gold_connectivity(
    gold: &BTreeSet<TableId>,
    graph: &SchemaGraph,
) -> Result<usize, SchemaError> {
    let mut frontier: BTreeSet<&TableId> = BTreeSet::new();
    for table in gold {
        let neighbors = graph
            .neighbors(table)
            .ok_or_else(|| SchemaError::UnknownGoldTable(table.clone()))?;
        frontier.extend(neighbors.iter().filter(|n| !gold.contains(*n)));
    }
    Ok(frontier.len())
}

// ---------------------------------------------------------------------------
// Ingestion format
// ---------------------------------------------------------------------------

/// Raw schema document as it appears in ingestion files, one per database:
/// `{ "database_id", "tables": [ { "name", "columns": [ { "name",
/// "type_variants": [...] } ] } ], "foreign_keys": [ { "from_table",
/// "to_table" } ] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDocument {
    pub database_id: String,
    pub tables: Vec<TableDocument>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKeyDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableDocument {
    pub name: String,
    #[serde(default)]
    pub columns: Vec<ColumnDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnDocument {
    pub name: String,
    #[serde(default)]
    pub type_variants: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForeignKeyDocument {
    pub from_table: String,
    pub to_table: String,
}

impl SchemaDocument {
    /// Resolves the raw document into a validated [`DatabaseSchema`].
    /// FK direction is symmetrized and duplicate unordered pairs collapse.
    pub fn resolve(&self) -> Result<DatabaseSchema, SchemaError> {
        let db = DatabaseId::new(self.database_id.clone());
        let tables: Vec<TableDef> = self
            .tables
            .iter()
            .map(|t| {
                let table_id = TableId::new(db.as_str(), t.name.clone());
                TableDef {
                    id: table_id.clone(),
                    name: t.name.clone(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnDef {
                            id: ColumnId::new(table_id.clone(), c.name.clone()),
                            name: c.name.clone(),
                            type_variants: c.type_variants.clone(),
                        })
                        .collect(),
                }
            })
            .collect();
        let mut edges = BTreeSet::new();
        for fk in &self.foreign_keys {
            let edge = ForeignKeyEdge::new(
                TableId::new(db.as_str(), fk.from_table.clone()),
                TableId::new(db.as_str(), fk.to_table.clone()),
            );
            edges.insert(edge);
        }
        let schema = DatabaseSchema {
            id: db,
            tables,
            fks: edges.into_iter().collect(),
        };
        schema.validate()?;
        Ok(schema)
    }
}
