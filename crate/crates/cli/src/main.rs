//! Config-driven entry point.
//!
//! Usage:
//!   fwminact <simulate|skeleton|minact|mc-ldp|check-hypotheses>
//!       --config PATH [--seed N] [--out DIR] [--threads N]
//!
//! The subcommand must match the config's `task.kind`. `--seed`, `--out`
//! and `--threads` override the corresponding config entries;
//! `FWMINACT_THREADS` is the fallback for `--threads`. Exit codes:
//! 0 success, 2 configuration error, 3 solver error, 4 optimizer error,
//! 5 hypothesis-check failure.

use fwminact::config::ExperimentConfig;
use fwminact::tasks;

#[derive(Debug)]
struct Args {
    task: String,
    config_path: String,
    seed: Option<u64>,
    out: Option<String>,
    threads: Option<usize>,
}

const USAGE: &str = "usage: fwminact <simulate|skeleton|minact|mc-ldp|check-hypotheses> \
--config PATH [--seed N] [--out DIR] [--threads N]";

fn parse_args(argv: &[String]) -> Result<Args, String> {
    if argv.is_empty() {
        return Err(USAGE.into());
    }
    let task = argv[0].clone();
    let mut config_path = None;
    let mut seed = None;
    let mut out = None;
    let mut threads = None;
    let mut it = argv[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> Result<String, String> {
            it.next()
                .cloned()
                .ok_or_else(|| format!("{name} needs a value\n{USAGE}"))
        };
        match flag.as_str() {
            "--config" => config_path = Some(value("--config")?),
            "--seed" => {
                seed = Some(
                    value("--seed")?
                        .parse::<u64>()
                        .map_err(|e| format!("--seed: {e}"))?,
                )
            }
            "--out" => out = Some(value("--out")?),
            "--threads" => {
                threads = Some(
                    value("--threads")?
                        .parse::<usize>()
                        .map_err(|e| format!("--threads: {e}"))?,
                )
            }
            other => return Err(format!("unknown flag '{other}'\n{USAGE}")),
        }
    }
    let config_path = config_path.ok_or_else(|| format!("--config is required\n{USAGE}"))?;
    Ok(Args { task, config_path, seed, out, threads })
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            std::process::exit(2);
        }
    };
    let text = match std::fs::read_to_string(&args.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: cannot read '{}': {e}", args.config_path);
            std::process::exit(2);
        }
    };
    let mut config = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    if config.task.kind != args.task {
        eprintln!(
            "config error: subcommand '{}' does not match task.kind '{}'",
            args.task, config.task.kind
        );
        std::process::exit(2);
    }
    if let Some(seed) = args.seed {
        config.noise.master_seed = seed;
    }
    if let Some(out) = args.out {
        config.output.dir = out;
    }
    let threads = args
        .threads
        .or_else(|| {
            std::env::var("FWMINACT_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
        })
        .unwrap_or(1);

    match tasks::run(&config, threads) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("{}", err.message());
            std::process::exit(err.exit_code());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_full_flag_set() {
        let args = parse_args(&argv(&[
            "simulate", "--config", "c.toml", "--seed", "9", "--out", "dir", "--threads", "4",
        ]))
        .unwrap();
        assert_eq!(args.task, "simulate");
        assert_eq!(args.config_path, "c.toml");
        assert_eq!(args.seed, Some(9));
        assert_eq!(args.out.as_deref(), Some("dir"));
        assert_eq!(args.threads, Some(4));
    }

    #[test]
    fn rejects_missing_config() {
        assert!(parse_args(&argv(&["simulate"])).is_err());
    }

    #[test]
    fn rejects_unknown_flag() {
        let err = parse_args(&argv(&["simulate", "--config", "c", "--bogus"])).unwrap_err();
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn errors_mention_usage() {
        let err = parse_args(&[]).unwrap_err();
        assert!(err.contains("usage"));
    }
}
