//! Command-line front end: config-driven experiments over the Feynman-Kac
//! engine and its verification oracles.
//!
//! Exit codes: 0 success, 1 usage error, 2 config validation error,
//! 3 numeric failure (undecided quadrature, overflow, failed comparison).

mod config;
mod experiments;

use config::{parse_raw, RawConfig};
use experiments::{CliError, Output};

const SUBCOMMANDS: [&str; 10] = [
    "semigroup",
    "matrix-element",
    "kato",
    "exp-moment",
    "gaussian-bound",
    "davies-gaffney",
    "wave-speed",
    "mollify",
    "hydrogen",
    "oracle-compare",
];

fn usage() {
    eprintln!("usage: feynkac <subcommand> --config <file> [--echo-config]");
    eprintln!("subcommands: {}", SUBCOMMANDS.join(", "));
    eprintln!("environment: FEYNKAC_SEED overrides [run] seed, FEYNKAC_WORKERS caps the worker pool");
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 2 {
        usage();
        return 1;
    }
    let sub = args[1].as_str();
    if !SUBCOMMANDS.contains(&sub) {
        eprintln!("unknown subcommand `{sub}`");
        usage();
        return 1;
    }
    let mut config_path: Option<String> = None;
    let mut echo = false;
    let mut i = 2;
    while i < args.len() {
        match args[i].as_str() {
            "--config" => {
                i += 1;
                if i >= args.len() {
                    eprintln!("--config needs a file argument");
                    return 1;
                }
                config_path = Some(args[i].clone());
            }
            "--echo-config" => echo = true,
            other => {
                eprintln!("unknown flag `{other}`");
                usage();
                return 1;
            }
        }
        i += 1;
    }
    let Some(path) = config_path else {
        eprintln!("missing --config <file>");
        usage();
        return 1;
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read `{path}`: {e}");
            return 2;
        }
    };
    let mut cfg = match parse_raw(&text) {
        Ok(c) => c,
        Err(errors) => {
            for e in errors {
                eprintln!("config error: {e}");
            }
            return 2;
        }
    };
    cfg.normalize_numbers();

    if let Ok(workers) = std::env::var("FEYNKAC_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        } else {
            eprintln!("FEYNKAC_WORKERS must be an integer");
            return 2;
        }
    }
    if let Ok(seed) = std::env::var("FEYNKAC_SEED") {
        if seed.parse::<u64>().is_err() {
            eprintln!("FEYNKAC_SEED must be a nonnegative integer");
            return 2;
        }
        cfg.set("run", "seed", &seed);
    }

    if echo {
        print!("{}", cfg.canonical_echo());
        return 0;
    }

    match dispatch(sub, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            e.print();
            e.exit_code()
        }
    }
}

fn dispatch(sub: &str, cfg: &RawConfig) -> Result<String, CliError> {
    let out = experiments::build_output(cfg)?;
    run_subcommand(sub, cfg, &out)
}

fn run_subcommand(sub: &str, cfg: &RawConfig, out: &Output) -> Result<String, CliError> {
    match sub {
        "semigroup" => experiments::run_semigroup(cfg, out),
        "matrix-element" => experiments::run_matrix_element(cfg, out),
        "kato" => experiments::run_kato(cfg, out),
        "exp-moment" => experiments::run_exp_moment(cfg, out),
        "gaussian-bound" => experiments::run_gaussian_bound(cfg, out),
        "davies-gaffney" => experiments::run_davies_gaffney(cfg, out),
        "wave-speed" => experiments::run_wave_speed(cfg, out),
        "mollify" => experiments::run_mollify(cfg, out),
        "hydrogen" => experiments::run_hydrogen(cfg, out),
        "oracle-compare" => experiments::run_oracle_compare(cfg, out),
        _ => unreachable!("subcommand list checked in main"),
    }
}
