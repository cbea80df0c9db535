//! `key = value` config files. Each key names a long flag of the subcommand;
//! entries are appended to argv unless the flag is already given.

use std::path::Path;

use crate::CliError;

pub fn parse(text: &str, path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Data(format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Data(format!("{}:{}: empty key", path.display(), i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Path given by `--config`, if any.
pub fn config_path(args: &[String]) -> Option<String> {
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

/// argv with config entries appended for flags not present on the command line.
pub fn merge(mut args: Vec<String>, entries: &[(String, String)]) -> Vec<String> {
    let given = |key: &str| {
        let flag = format!("--{key}");
        let prefixed = format!("--{key}=");
        args.iter().any(|a| *a == flag || a.starts_with(&prefixed))
    };
    let extra: Vec<String> = entries
        .iter()
        .filter(|(k, _)| k != "config" && !given(k))
        .flat_map(|(k, v)| match v.as_str() {
            "true" => vec![format!("--{k}")],
            "false" => vec![],
            _ => vec![format!("--{k}"), v.clone()],
        })
        .collect();
    args.extend(extra);
    args
}
