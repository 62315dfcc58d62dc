//! `key = value` config files, merged into the argument list so that the
//! command line wins.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::args::Cli;
use crate::fail::Fail;

/// Pairs in file order. Blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(usize, String, String)>, Fail> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Fail::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Fail::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((i + 1, key, v.trim().to_string()));
    }
    Ok(out)
}

/// Finds `--config FILE` in `argv` and splices the file's settings in
/// right after the subcommand name, ahead of any user flags.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, Fail> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| Fail::Io(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let entries = parse(&text)?;

    let root = Cli::command();
    let Some((pos, sub)) = argv.iter().enumerate().skip(1).find_map(|(i, a)| {
        root.get_subcommands().find(|c| c.get_name() == a.to_string_lossy()).map(|c| (i, c))
    }) else {
        return Ok(argv);
    };

    let mut injected: Vec<OsString> = Vec::new();
    for (line, key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| Fail::Usage(format!("config line {line}: unknown key `{key}` for `{}`", sub.get_name())))?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{key}").into()),
                "false" => {}
                _ => return Err(Fail::Usage(format!("config line {line}: `{key}` takes true or false"))),
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<OsString> {
        s.iter().map(OsString::from).collect()
    }

    #[test]
    fn parse_skips_comments_and_normalizes_keys() {
        let e = parse("# x\n\nl_stages = 3\n  seed=7 \n").unwrap();
        assert_eq!(e, vec![(3, "l-stages".into(), "3".into()), (4, "seed".into(), "7".into())]);
        assert!(parse("novalue\n").is_err());
        assert!(parse(" = 3\n").is_err());
    }

    #[test]
    fn file_values_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "n = 5\ncompensate = true\n").unwrap();
        let c = cfg.to_str().unwrap();
        let got = expand(args(&["ff", "--config", c, "synth", "--n", "9"]));
        assert!(matches!(got, Err(Fail::Usage(_))), "compensate is not a synth flag");

        std::fs::write(&cfg, "n = 5\nsize = 32\n").unwrap();
        let got = expand(args(&["ff", "synth", "--config", c, "--n", "9"])).unwrap();
        assert_eq!(got, args(&["ff", "synth", "--n", "5", "--size", "32", "--config", c, "--n", "9"]));

        std::fs::write(&cfg, "no_unwrap = true\ncompensate = false\n").unwrap();
        let got = expand(args(&["ff", "classical", "--config", c])).unwrap();
        assert_eq!(got, args(&["ff", "classical", "--no-unwrap", "--config", c]));
    }
}
