use crate::error::CliError;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::Path;

/// A fully resolved run: subcommand plus every parameter as its canonical
/// string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
}

fn canonical_value(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(canonical_value).collect();
            Some(parts.join(";"))
        }
        other => Some(other.to_string()),
    }
}

impl RunConfig {
    pub fn from_json(subcommand: &str, value: &serde_json::Value) -> Self {
        let params = value
            .as_object()
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| canonical_value(v).map(|s| (k.clone(), s)))
                    .collect()
            })
            .unwrap_or_default();
        RunConfig {
            subcommand: subcommand.to_string(),
            params,
        }
    }

    /// `subcommand key=value ...` with keys sorted.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    #[cfg(test)]
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let mut parts = s.split_whitespace();
        let subcommand = parts
            .next()
            .ok_or_else(|| CliError::input("empty run configuration"))?
            .to_string();
        let mut params = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("`{p}` is not key=value")))?;
            params.insert(k.to_string(), v.to_string());
        }
        Ok(RunConfig { subcommand, params })
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.subcommand)?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Parse `key=value` lines. Blank lines and `#` comments are skipped.
pub fn config_entries(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("config line {}: expected key=value, got `{line}`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k == "config" || k.starts_with('-') {
            return Err(CliError::input(format!("config line {}: invalid key `{k}`", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Flag tokens for one entry: `;` separates repeated values, booleans become
/// bare flags.
fn entry_tokens(k: &str, v: &str) -> Vec<OsString> {
    match v {
        "true" => vec![format!("--{k}").into()],
        "false" => Vec::new(),
        _ => v
            .split(';')
            .flat_map(|part| [OsString::from(format!("--{k}")), OsString::from(part)])
            .collect(),
    }
}

/// Splice the `--config` file's entries in right after the subcommand,
/// dropping every key that is also given on the command line.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path: Option<OsString> = None;
    let mut given = std::collections::BTreeSet::new();
    let mut it = argv.iter().enumerate().skip(1);
    while let Some((i, a)) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = Some(
                argv.get(i + 1)
                    .cloned()
                    .ok_or_else(|| CliError::input("--config needs a path"))?,
            );
            it.next();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else if let Some(flag) = s.strip_prefix("--") {
            given.insert(flag.split('=').next().unwrap_or(flag).to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 1)
        .ok_or_else(|| CliError::input("--config given without a subcommand"))?;
    let mut out: Vec<OsString> = argv[..=sub].to_vec();
    for (k, v) in config_entries(&text)? {
        if !given.contains(&k) {
            out.extend(entry_tokens(&k, &v));
        }
    }
    out.extend_from_slice(&argv[sub + 1..]);
    Ok(out)
}
