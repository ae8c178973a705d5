//! Record emission as CSV or JSON lines.

use std::io::Write;

use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

pub type Record = Map<String, Value>;

/// Builds a record from `(name, value)` pairs in order.
#[macro_export]
macro_rules! record {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut m = $crate::output::Record::new();
        $( m.insert($k.to_string(), serde_json::json!($v)); )*
        m
    }};
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write_records<W: Write>(out: W, format: Format, records: &[Record]) -> std::io::Result<()> {
    match format {
        Format::Jsonl => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if let Some(first) = records.first() {
                w.write_record(first.keys())?;
            }
            for r in records {
                w.write_record(r.values().map(cell))?;
            }
            w.flush()
        }
    }
}
