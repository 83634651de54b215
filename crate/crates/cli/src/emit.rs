use serde_json::{json, Map, Number, Value};

pub const SCHEMA_VERSION: &str = "1";

/// A command's output before serialisation.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub inputs: Map<String, Value>,
    pub results: Value,
    pub warnings: Vec<String>,
    pub timing_ms: Option<u128>,
    pub table: Option<Table>,
    /// Pre-rendered JSON lines, for commands with a per-record form.
    pub lines: Option<String>,
    /// Set by `verify` when a check failed.
    pub failed: bool,
}

/// Rows for CSV output.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(command: &'static str, inputs: Map<String, Value>, results: Value) -> Self {
        Report { command, inputs, results, warnings: Vec::new(), timing_ms: None, table: None, lines: None, failed: false }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "inputs": self.inputs,
            "results": self.results,
            "warnings": self.warnings,
        });
        if let Some(t) = self.timing_ms {
            v["timing_ms"] = json!(t as u64);
        }
        v
    }
}

/// Rewrites every float with 17 significant digits. Keys are already sorted
/// because the map type is ordered.
pub fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let s = format!("{x:.16e}");
            Value::Number(serde_json::from_str::<Number>(&s).unwrap_or(n))
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonical(v))).collect()),
        other => other,
    }
}

pub fn json_bytes(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(&canonical(report.to_json())).unwrap();
    s.push('\n');
    s
}

pub fn csv_bytes(table: &Table) -> String {
    let mut s = table.header.join(",");
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|c| quote(c)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn quote(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_get_seventeen_digits() {
        let v = canonical(json!({"x": 0.1, "n": 3, "s": "1/2", "l": [2.5]}));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"l":[2.5000000000000000e+0],"n":3,"s":"1/2","x":1.0000000000000001e-1}"#);
    }

    #[test]
    fn csv_quoting() {
        let t = Table { header: vec!["a", "b"], rows: vec![vec!["1".into(), "x,y".into()]] };
        assert_eq!(csv_bytes(&t), "a,b\n1,\"x,y\"\n");
    }
}
