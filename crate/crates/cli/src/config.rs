//! `key = value` configuration files merged into the argument list.

use std::path::Path;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`, got `{line}`", k + 1))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", k + 1));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Path given by `--config path` or `--config=path`, if any.
pub fn find_config(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Inserts the config entries as flags directly after the subcommand, so that flags given
/// on the command line come later and override them. `true`/`false` values toggle switches.
pub fn merge(args: Vec<String>, entries: &[(String, String)], subcommands: &[&str]) -> Vec<String> {
    let Some(pos) = args.iter().skip(1).position(|a| subcommands.contains(&a.as_str())) else {
        return args;
    };
    let at = pos + 2;
    let mut flags = Vec::new();
    for (key, value) in entries {
        match value.as_str() {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            _ => {
                flags.push(format!("--{key}"));
                flags.push(value.clone());
            }
        }
    }
    let mut merged = args[..at].to_vec();
    merged.extend(flags);
    merged.extend_from_slice(&args[at..]);
    merged
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse(&text)
}
