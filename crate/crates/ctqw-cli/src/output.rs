//! Deterministic table rendering. Every output embeds a header block with
//! the tool version and the full effective configuration; identical configs
//! therefore produce byte-identical files. Floats are printed in Rust's
//! shortest-roundtrip form.

use serde_json::{json, Map, Value};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    UInt(u64),
    Float(f64),
    Text(String),
    /// Empty CSV field, `null` in JSON.
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::UInt(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => csv_quote(s),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::UInt(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

/// RFC-4180 quoting: wrap when the field contains a comma, quote, or
/// newline; double any quotes inside.
fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Ordered key/value header block.
#[derive(Debug, Clone, Default)]
pub struct Meta {
    entries: Vec<(String, String)>,
}

impl Meta {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn json(&self) -> Value {
        let mut map = Map::new();
        for (k, v) in &self.entries {
            // numeric-looking values stay strings in the meta block; the
            // authoritative numbers live in the rows
            map.insert(k.clone(), json!(v));
        }
        Value::Object(map)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

pub fn render(meta: &Meta, table: &Table, format: Format) -> String {
    match format {
        Format::Csv => render_csv(meta, table),
        Format::Json => render_json(meta, table),
    }
}

fn render_csv(meta: &Meta, table: &Table) -> String {
    let mut out = String::new();
    for (k, v) in &meta.entries {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        debug_assert_eq!(row.len(), table.columns.len());
        let fields: Vec<String> = row.iter().map(Cell::csv).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn render_json(meta: &Meta, table: &Table) -> String {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|row| Value::Array(row.iter().map(Cell::json).collect()))
        .collect();
    let mut root = Map::new();
    root.insert("meta".into(), meta.json());
    root.insert("columns".into(), json!(table.columns));
    root.insert("rows".into(), Value::Array(rows));
    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("serialization");
    text.push('\n');
    text
}
