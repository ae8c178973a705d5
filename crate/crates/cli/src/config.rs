//! `--config FILE` support: `key = value` lines appended as long flags that
//! the command line does not already set.

use std::collections::HashSet;

fn config_path(argv: &[String]) -> Result<Option<String>, String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned().map(Some).ok_or_else(|| "--config needs a file path".to_string());
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value, got {raw:?}", no + 1))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        match key.as_str() {
            "x0" => return Err(format!("config line {}: x0 is fixed at 0 and cannot be set", no + 1)),
            "config" => return Err(format!("config line {}: config files cannot include others", no + 1)),
            "" => return Err(format!("config line {}: empty key", no + 1)),
            _ => out.push((key, value)),
        }
    }
    Ok(out)
}

pub fn merge(mut argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let present: HashSet<String> = argv
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    for (key, value) in parse(&text)? {
        if present.contains(&key) {
            continue;
        }
        match value.as_str() {
            "true" => argv.push(format!("--{key}")),
            "false" => {}
            _ => argv.push(format!("--{key}={value}")),
        }
    }
    Ok(argv)
}
