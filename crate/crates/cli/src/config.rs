//! Flat `key=value` config files, merged into the argument list ahead of
//! the user's own flags so that later command-line values win.

use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::exit::Failure;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Blank lines and `#` comments are skipped. Keys may use `_` or `-`.
pub fn parse(text: &str) -> Result<Vec<Entry>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value", i + 1));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.push(Entry {
            line: i + 1,
            key,
            value: v.trim().to_owned(),
        });
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<Entry>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Position of the subcommand name in `args` (index 0 is the program).
pub fn subcommand_position(cmd: &Command, args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        return cmd.find_subcommand(a.as_ref()).map(|_| i);
    }
    None
}

/// The `--config` value, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Turn entries into flags understood by subcommand `sub`. Keys belonging
/// to other subcommands are ignored; keys unknown to all are an error.
pub fn to_flags(root: &Command, sub: &str, entries: &[Entry]) -> Result<Vec<OsString>, Failure> {
    let target = root
        .find_subcommand(sub)
        .ok_or_else(|| Failure::usage(format!("unknown subcommand `{sub}`")))?;
    let mut flags = Vec::new();
    for e in entries {
        if e.key == "config" || e.key == "verbose" {
            return Err(Failure::usage(format!(
                "config line {}: `{}` cannot be set from a config file",
                e.line, e.key
            )));
        }
        let find = |c: &Command| {
            c.get_arguments()
                .find(|a| a.get_long() == Some(e.key.as_str()))
                .cloned()
        };
        let Some(arg) = find(target) else {
            if root.get_subcommands().any(|c| find(c).is_some()) {
                continue;
            }
            return Err(Failure::usage(format!(
                "config line {}: unknown key `{}`",
                e.line, e.key
            )));
        };
        if arg.get_action().takes_values() {
            flags.push(format!("--{}={}", e.key, e.value).into());
            continue;
        }
        match e.value.as_str() {
            "true" | "yes" | "1" => flags.push(format!("--{}", e.key).into()),
            "false" | "no" | "0" => {
                if e.key == "with-index" {
                    flags.push("--no-index".into());
                }
            }
            other => {
                return Err(Failure::usage(format!(
                    "config line {}: `{}` expects true or false, got `{other}`",
                    e.line, e.key
                )))
            }
        }
    }
    Ok(flags)
}

/// `args` with the config flags spliced in right after the subcommand name.
pub fn merge(root: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let entries = load(Path::new(&path))?;
    let Some(pos) = subcommand_position(root, &args) else {
        return Ok(args);
    };
    let sub = args[pos].to_string_lossy().into_owned();
    let flags = to_flags(root, &sub, &entries)?;
    let mut merged = args[..=pos].to_vec();
    merged.extend(flags);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}
