//! `--config` files: flat `key = value` lines whose keys mirror long flags.
//!
//! The file's settings are spliced in as flags directly after the subcommand
//! name. A key whose flag also appears on the command line is dropped, so
//! command-line flags always win, including list flags like `--ratios`.
//! Keys that belong only to other subcommands are skipped, which lets one
//! file serve a whole pipeline run.

use std::ffi::OsString;
use std::fs;

use clap::{ArgAction, Command};

fn parse_lines(text: &str, origin: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{origin}: line {}: expected key = value", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("{origin}: line {}: empty key", i + 1));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Value of `--config` in raw arguments, if any.
fn find_config(args: &[OsString]) -> Option<(usize, usize, OsString)> {
    for (i, a) in args.iter().enumerate().skip(1) {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return args.get(i + 1).map(|v| (i, 2, v.clone()));
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some((i, 1, OsString::from(v)));
        }
    }
    None
}

fn long_names(cmd: &Command) -> impl Iterator<Item = (&str, &ArgAction)> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(|l| (l, a.get_action())))
}

/// Splices config-file settings into `args`.
pub fn expand(args: Vec<OsString>, cli: &Command) -> Result<Vec<OsString>, String> {
    let Some((pos, width, path)) = find_config(&args) else {
        return Ok(args);
    };
    let path_str = path.to_string_lossy().into_owned();
    let text = fs::read_to_string(&path).map_err(|e| format!("config {path_str}: {e}"))?;
    let settings = parse_lines(&text, &path_str)?;

    let mut args = args;
    args.drain(pos..pos + width);

    // Locate the subcommand token.
    let sub_pos = args.iter().enumerate().skip(1).find_map(|(i, a)| {
        let s = a.to_string_lossy();
        cli.find_subcommand(s.as_ref()).map(|_| i)
    });
    let Some(sub_pos) = sub_pos else {
        return Ok(args);
    };
    let sub_name = args[sub_pos].to_string_lossy().into_owned();
    let sub = cli.find_subcommand(&sub_name).expect("found above");

    let given: Vec<String> = args
        .iter()
        .skip(1)
        .filter_map(|a| {
            let s = a.to_str()?.strip_prefix("--")?;
            Some(s.split('=').next().unwrap_or(s).to_string())
        })
        .collect();

    let mut inserted: Vec<OsString> = Vec::new();
    for (key, value) in settings {
        let own = long_names(sub).chain(long_names(cli)).find(|(l, _)| *l == key);
        match own {
            Some((long, _)) if given.iter().any(|g| g == long) => {}
            Some((long, action)) => match action {
                ArgAction::SetTrue => match value.as_str() {
                    "true" | "1" | "yes" => inserted.push(format!("--{long}").into()),
                    "false" | "0" | "no" => {}
                    other => return Err(format!("config {path_str}: {key} expects true or false, got {other:?}")),
                },
                _ => {
                    inserted.push(format!("--{long}").into());
                    inserted.push(value.into());
                }
            },
            None => {
                let known = cli.get_subcommands().any(|c| long_names(c).any(|(l, _)| l == key));
                if !known {
                    return Err(format!("config {path_str}: unknown key {key:?}"));
                }
            }
        }
    }
    let tail = args.split_off(sub_pos + 1);
    args.extend(inserted);
    args.extend(tail);
    Ok(args)
}
