use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use lme_core::config::{parse_config_with, parse_override, Subcommand};
use lme_core::runner::execute;
use lme_core::LabError;

#[derive(Parser)]
#[command(
    name = "lme-lab",
    version,
    about = "Numerical laboratory for the LME recursion and its companion models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML file with top-level seed/threads/out_dir and one table per subcommand.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a subcommand key, e.g. `--set pool_size=20000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct QbFlags {
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// T(q), T'(q), H(q), d(q,b), q_c, p*(q) and the q_k table as JSON.
    Analytics {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        qb: QbFlags,
    },
    /// Angle-law sampler against its CDF and quadrature.
    ThetaCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Pool Monte Carlo of the LME recursion.
    SimulateLme {
        #[command(flatten)]
        common: Common,
    },
    /// Exact moment table and factorial bound.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Laplace transform of the limiting law.
    Laplace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        qb: QbFlags,
    },
    /// Branching random walk: cascade, derivative, max or blowup.
    Brw {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["cascade", "derivative", "max", "blowup"])]
        mode: Option<String>,
    },
    /// Resonance RG flow on a chain.
    RgChain {
        #[command(flatten)]
        common: Common,
    },
    /// Direct diagonalization of power-law random band matrices.
    Prbm {
        #[command(flatten)]
        common: Common,
    },
}

type Override = (String, toml::Value);

fn typed(key: &str, v: impl Into<toml::Value>) -> Override {
    (key.to_string(), v.into())
}

fn dispatch(cmd: Command) -> (Subcommand, Common, Vec<Override>) {
    let qb = |qb: QbFlags| {
        let mut s = Vec::new();
        s.extend(qb.q.map(|q| typed("q", q)));
        s.extend(qb.b.map(|b| typed("b", b)));
        s
    };
    match cmd {
        Command::Analytics { common, qb: f } => (Subcommand::Analytics, common, qb(f)),
        Command::ThetaCheck { common } => (Subcommand::ThetaCheck, common, vec![]),
        Command::SimulateLme { common } => (Subcommand::SimulateLme, common, vec![]),
        Command::Moments { common, q, kmax } => {
            let mut s = Vec::new();
            s.extend(q.map(|q| typed("q", q)));
            s.extend(kmax.map(|k| typed("kmax", k as i64)));
            (Subcommand::Moments, common, s)
        }
        Command::Laplace { common, qb: f } => (Subcommand::Laplace, common, qb(f)),
        Command::Brw { common, mode } => {
            let s = mode.map(|m| typed("mode", m)).into_iter().collect();
            (Subcommand::Brw, common, s)
        }
        Command::RgChain { common } => (Subcommand::RgChain, common, vec![]),
        Command::Prbm { common } => (Subcommand::Prbm, common, vec![]),
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, LabError> {
    let (sub, common, flags) = dispatch(cli.command);
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| LabError::Io {
            path: path.clone(),
            source: e,
        })?,
        None => String::new(),
    };
    let mut overrides = common
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    overrides.extend(flags);
    if let Some(seed) = common.seed {
        let seed = i64::try_from(seed).map_err(|_| LabError::Config("seed must be below 2^63".into()))?;
        overrides.push(typed("seed", seed));
    }
    if let Some(t) = common.threads {
        overrides.push(typed("threads", t as i64));
    }
    if let Some(d) = &common.out_dir {
        overrides.push(typed("out_dir", d.to_string_lossy().into_owned()));
    }
    let cfg = parse_config_with(&text, sub, &overrides)?;
    execute(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> i32 {
        let mut argv = vec!["lme-lab"];
        argv.extend_from_slice(args);
        match Cli::try_parse_from(argv) {
            Err(e) => e.exit_code(),
            Ok(cli) => match run(cli) {
                Ok(_) => 0,
                Err(e) => e.exit_code(),
            },
        }
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(code(&["analytics", "--q", "0.75", "--out-dir", out]), 0);
        assert_eq!(
            code(&["simulate-lme", "--set", "q=0.4", "--set", "b=0.5", "--out-dir", out]),
            2
        );
        assert_eq!(code(&["simulate-lme", "--set", "q=0.75", "--out-dir", out]), 2);
        assert_eq!(code(&["moments", "--set", "nonsense", "--out-dir", out]), 2);
        assert_eq!(code(&["analytics", "--bogus"]), 2);
        assert_eq!(code(&["laplace", "--q", "1.5", "--out-dir", out]), 2);
        assert_eq!(
            code(&["brw", "--mode", "blowup", "--set", "beta_ratio=1.5", "--out-dir", out]),
            3
        );
        assert_eq!(code(&["moments", "--config", "/nonexistent/lab.toml"]), 4);
        let blocker = dir.path().join("plain-file");
        std::fs::write(&blocker, "x").unwrap();
        let nested = blocker.join("out");
        assert_eq!(code(&["analytics", "--out-dir", nested.to_str().unwrap()]), 4);
    }

    #[test]
    fn duplicate_key_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("lab.toml");
        std::fs::write(&cfg, "[moments]\nq = 0.75\nq = 0.8\n").unwrap();
        let cli = Cli::try_parse_from(["lme-lab", "moments", "--config", cfg.to_str().unwrap()]).unwrap();
        let e = run(cli).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("`q`"), "{e}");
    }

    #[test]
    fn outputs_come_with_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let cli = Cli::try_parse_from([
            "lme-lab",
            "moments",
            "--q",
            "0.75",
            "--kmax",
            "5",
            "--seed",
            "9",
            "--out-dir",
            out,
        ])
        .unwrap();
        let files = run(cli).unwrap();
        assert_eq!(files.len(), 2);
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert_eq!(
            names,
            [
                "moments.csv",
                "moments.csv.manifest.json",
                "moments.json",
                "moments.json.manifest.json"
            ]
        );
        let m = std::fs::read_to_string(dir.path().join("moments.csv.manifest.json")).unwrap();
        assert!(m.contains("\"seed\": 9"));
        assert!(m.contains("\"kmax\": 5"));
        let csv = std::fs::read_to_string(dir.path().join("moments.csv")).unwrap();
        assert_eq!(csv.lines().count(), 6);
    }
}
