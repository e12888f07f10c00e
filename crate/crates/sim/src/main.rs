use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eprqkd::emit::{self, Format};
use eprqkd::report::References;
use eprqkd::{run, verify, RunConfig, RunReport, SimError};
use eprqkd_core::protocol::CheckPolicy;
use eprqkd_core::{AttackStrategy, BellLabel, FakePairPolicy};

/// Two-step EPR-pair quantum key distribution simulator.
#[derive(Parser)]
#[command(name = "eprqkd", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials and write a report (the default).
    Run(RunArgs),
    /// Recompute a structured report's aggregates from its trial rows.
    Verify { report: PathBuf },
    /// Print the BB84 reference values and efficiency constants.
    Reference,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    None,
    MeasureResend,
    FakeEpr,
    Opaque,
}

#[derive(Clone, Copy, ValueEnum)]
enum FakeArg {
    Psi1,
    Psi2,
    Psi3,
    Psi4,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Structured,
    Tabular,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Start from a config file, or from the config echoed in a report.
    #[arg(long)]
    config: Option<PathBuf>,
    /// EPR pairs Alice prepares [default: 1000]
    #[arg(long)]
    pairs: Option<usize>,
    /// Independent trials [default: 1]
    #[arg(long)]
    trials: Option<u64>,
    /// Base seed; trial i runs with seed XOR i [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Eavesdropping strategy [default: none]
    #[arg(long, value_enum)]
    attack: Option<AttackArg>,
    /// Opaque attack: chance that each in-flight particle is destroyed.
    #[arg(long)]
    destroy_prob: Option<f64>,
    /// Fake-pair attack: the Bell state Eve prepares.
    #[arg(long, value_enum)]
    fake_label: Option<FakeArg>,
    /// Measure-resend attack: also measure the second sequence.
    #[arg(long)]
    measure_both: bool,
    /// Attack only this hop of a relay chain.
    #[arg(long)]
    attack_hop: Option<u8>,
    /// Fraction of pairs sampled by the first check [default: 0.25]
    #[arg(long = "check-fraction-1")]
    check_fraction_1: Option<f64>,
    /// Fraction of remaining pairs sampled by the second check [default: 0.25]
    #[arg(long = "check-fraction-2")]
    check_fraction_2: Option<f64>,
    /// Smallest absolute sample for either check.
    #[arg(long)]
    min_check_sample: Option<usize>,
    /// Largest first-check error rate that still passes [default: 0.02]
    #[arg(long = "threshold-1")]
    threshold_1: Option<f64>,
    /// Largest second-check error rate that still passes [default: 0.02]
    #[arg(long = "threshold-2")]
    threshold_2: Option<f64>,
    /// Fraction of particles that may go missing before the receiver stalls [default: 0]
    #[arg(long)]
    loss_tolerance: Option<f64>,
    /// Parties in the chain: 2, or 3 to relay the key from Bob to Clare [default: 2]
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    parties: Option<u8>,
    /// Keep going after a failed check (statistics only, never a key).
    #[arg(long)]
    continuation_mode: bool,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "structured")]
    format: FormatArg,
    /// Also write every trial's event log to `<out>.transcript.jsonl`.
    #[arg(long, requires = "out")]
    transcript: bool,
}

const DEFAULT_DESTROY_PROBABILITY: f64 = 0.5;

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, SimError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let p = &mut c.protocol;
        if let Some(v) = self.trials {
            c.trials = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.pairs {
            p.pairs = v;
        }
        if let Some(attack) = self.attack {
            p.attack = match attack {
                AttackArg::None => AttackStrategy::None,
                AttackArg::MeasureResend => AttackStrategy::MeasureResend {
                    measure_both: self.measure_both,
                },
                AttackArg::FakeEpr => AttackStrategy::FakeEpr {
                    fakes: match self.fake_label {
                        None => FakePairPolicy::default(),
                        Some(FakeArg::Uniform) => FakePairPolicy::Uniform,
                        Some(FakeArg::Psi1) => FakePairPolicy::Fixed(BellLabel::Psi1),
                        Some(FakeArg::Psi2) => FakePairPolicy::Fixed(BellLabel::Psi2),
                        Some(FakeArg::Psi3) => FakePairPolicy::Fixed(BellLabel::Psi3),
                        Some(FakeArg::Psi4) => FakePairPolicy::Fixed(BellLabel::Psi4),
                    },
                },
                AttackArg::Opaque => AttackStrategy::Opaque {
                    destroy_probability: self.destroy_prob.unwrap_or(DEFAULT_DESTROY_PROBABILITY),
                },
            };
        } else if let (
            AttackStrategy::Opaque {
                destroy_probability,
            },
            Some(v),
        ) = (&mut p.attack, self.destroy_prob)
        {
            *destroy_probability = v;
        }
        if self.attack_hop.is_some() {
            p.attack_hop = self.attack_hop;
        }
        let set = |policy: &mut CheckPolicy, fraction: Option<f64>, threshold: Option<f64>| {
            if let Some(f) = fraction {
                policy.fraction = f;
            }
            if let Some(t) = threshold {
                policy.threshold = t;
            }
            if let Some(m) = self.min_check_sample {
                policy.min_sample = m;
            }
        };
        set(&mut p.first_check, self.check_fraction_1, self.threshold_1);
        set(&mut p.second_check, self.check_fraction_2, self.threshold_2);
        if let Some(v) = self.loss_tolerance {
            p.loss_tolerance = v;
        }
        if let Some(v) = self.parties {
            p.parties = v;
        }
        if self.continuation_mode {
            p.continuation_mode = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn execute(args: &RunArgs) -> Result<(), SimError> {
    let config = args.to_config()?;
    let started = Instant::now();
    let output = run(&config, args.transcript)?;
    let format = match args.format {
        FormatArg::Structured => Format::Structured,
        FormatArg::Tabular => Format::Tabular,
    };
    let bytes = emit::render(&output.report, format)?;
    match &args.out {
        Some(path) => {
            emit::write(path, &bytes)?;
            if let Some(transcripts) = &output.transcripts {
                emit::write(
                    &emit::transcript_path(path),
                    &emit::transcript_lines(transcripts)?,
                )?;
            }
        }
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| SimError::io("<stdout>".as_ref(), e))?,
    }
    let a = &output.report.aggregate;
    eprintln!(
        "{} trials, {} committed, detection rate {:.6}, {:.3}s",
        a.trials,
        a.committed,
        a.detection_rate,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn verify_file(path: &PathBuf) -> Result<(), SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let report: RunReport = serde_json::from_str(&text)?;
    verify(&report)?;
    println!("ok: {} trials, aggregates match", report.trials.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        None => execute(&cli.run),
        Some(Command::Run(args)) => execute(args),
        Some(Command::Verify { report }) => verify_file(report),
        Some(Command::Reference) => {
            let r = References::compute();
            println!("{}", serde_json::to_string_pretty(&r).expect("plain data"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
