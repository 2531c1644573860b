//! Flat `key = value` configuration files. Entries become flags placed right
//! after the subcommand, so anything given on the command line overrides them.

use std::ffi::OsString;

use asymq::{Error, Result};

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                return None;
            }
            Some(match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
                _ => Err(Error::Data { row: i + 1, message: format!("expected `key = value`, got `{line}`") }),
            })
        })
        .collect()
}

fn to_flags(entries: Vec<(String, String)>) -> Vec<OsString> {
    let mut out = Vec::new();
    for (k, v) in entries {
        let flag = format!("--{}", k.trim_start_matches("--").replace('_', "-"));
        match v.as_str() {
            "true" => out.push(flag.into()),
            "false" => {}
            _ => {
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    out
}

/// Inserts the entries of `--config <file>` after the subcommand name.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let pos = args.iter().position(|a| a == "--config");
    let path = match pos {
        Some(p) => args.get(p + 1).cloned().ok_or(Error::InvalidParameter("--config needs a path".into()))?,
        None => match args.iter().find_map(|a| a.to_str().and_then(|s| s.strip_prefix("--config="))) {
            Some(p) => p.into(),
            None => return Ok(args),
        },
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.to_string_lossy())))?;
    let flags = to_flags(parse(&text)?);
    // args[0] is the program, args[1] the subcommand.
    let split = 2.min(args.len());
    let mut out: Vec<OsString> = args[..split].to_vec();
    out.extend(flags);
    out.extend(args[split..].iter().cloned());
    Ok(out)
}
