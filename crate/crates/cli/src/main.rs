//! `polarflip` command line: FER sweeps, scorer accuracy, training-set export
//! and single-frame decoding.
//!
//! Every option can also come from a TOML file given with `--config`; flags
//! win over the file. Outputs start with a `#`-prefixed TOML stanza holding
//! the fully resolved settings, which can be fed back through `--config`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use polarflip::code::{ConstructionMethod, DEFAULT_DESIGN_SNR_DB};
use polarflip::error::SimError;
use polarflip::sim::{
    self, AccuracyConfig, DatasetConfig, DatasetHeader, DatasetKind, DatasetWriter, DecoderKind,
    DecoderSetup, Frame, PreparedDecoder, ScorerChoice, StopRule, SweepConfig, ValidatorChoice,
};
use polarflip::{CheckKernel, Crc, PolarCode};

#[derive(Parser)]
#[command(
    name = "polarflip",
    version,
    about = "Polar-code flip decoding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frame/bit error rates over an SNR sweep, as a TSV table.
    Fer(Settings),
    /// How often a flip scorer's rank-j position is the j-th genie label.
    Accuracy(Settings),
    /// Export a flip-scorer training set (NFDS1).
    GenFdnc(Settings),
    /// Export a flip-validator training set (NFDS1).
    GenFvdnc(Settings),
    /// Decode one LLR vector and print the attempt trace.
    DecodeOne(Settings),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fer(_) => "fer",
            Command::Accuracy(_) => "accuracy",
            Command::GenFdnc(_) => "gen-fdnc",
            Command::GenFvdnc(_) => "gen-fvdnc",
            Command::DecodeOne(_) => "decode-one",
        }
    }

    fn settings(&self) -> &Settings {
        match self {
            Command::Fer(s)
            | Command::Accuracy(s)
            | Command::GenFdnc(s)
            | Command::GenFvdnc(s)
            | Command::DecodeOne(s) => s,
        }
    }
}

/// Flags and config-file keys share names (dashes become underscores).
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Settings {
    /// TOML file with default values for any of the options below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,

    /// Code length and number of message bits.
    #[arg(long, num_args = 2, value_names = ["N", "K"])]
    code: Option<Vec<usize>>,
    /// CRC width in bits (0 disables the CRC). Default 16.
    #[arg(long)]
    crc: Option<u8>,
    /// CRC generator without the leading term, e.g. 0x1021.
    #[arg(long, value_parser = parse_poly)]
    crc_poly: Option<u32>,
    /// Frozen-set construction: `ga`, or `file` together with --frozen-file.
    #[arg(long)]
    construction: Option<String>,
    /// Frozen-set file (implies --construction file).
    #[arg(long)]
    frozen_file: Option<PathBuf>,
    /// Design Eb/N0 in dB for GA construction. Default 2.
    #[arg(long)]
    design_snr: Option<f64>,

    /// sc, scl, dnc-scf or dnc-sclf. Default sc.
    #[arg(long)]
    decoder: Option<String>,
    /// List size. Default 4 for scl and dnc-sclf, 1 otherwise.
    #[arg(long)]
    list: Option<usize>,
    /// Flip-set size. Default 5.
    #[arg(long)]
    omega: Option<usize>,
    /// LSD shape parameter. Default 0.8.
    #[arg(long)]
    p: Option<f64>,
    /// Phase-I threshold. Default 0.03.
    #[arg(long)]
    alpha: Option<f64>,
    /// Check-node kernel: exact or min-sum. Default exact.
    #[arg(long)]
    kernel: Option<String>,
    /// Flip scorer: genie, genie-direct, heuristic, model:PATH or external:CMD.
    #[arg(long)]
    scorer: Option<String>,
    /// Flip validator: genie, continue, reselect, model:PATH or external:CMD.
    /// Defaults to genie for the genie scorer, the same command for an
    /// external scorer and continue for the heuristic.
    #[arg(long)]
    fv_scorer: Option<String>,

    /// Eb/N0 in dB: `a:step:b`, `a,b,c` or a single value.
    #[arg(long)]
    snr: Option<String>,
    /// Master seed. Default 1.
    #[arg(long)]
    seed: Option<u64>,
    /// Frame errors after which an SNR point stops. Default 100.
    #[arg(long)]
    max_errors: Option<u64>,
    /// Frames after which a point (or a generator) stops. Default 10^7.
    #[arg(long)]
    max_frames: Option<u64>,
    /// Records to export (gen-fdnc, gen-fvdnc).
    #[arg(long)]
    count: Option<u64>,
    /// Error frames to evaluate (accuracy). Default 1000.
    #[arg(long)]
    error_frames: Option<u64>,
    /// Ranks evaluated (accuracy). Default 5.
    #[arg(long)]
    k_max: Option<usize>,

    /// Whitespace-separated channel LLRs (decode-one).
    #[arg(long)]
    llr_file: Option<PathBuf>,
    /// Transmitted message as a 0/1 string; needed by genie scorers in
    /// decode-one.
    #[arg(long)]
    message: Option<String>,

    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Output file; stdout when absent (required for datasets).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_poly(s: &str) -> Result<u32, String> {
    let t = s.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|_| format!("bad CRC polynomial {s:?}"))
}

macro_rules! merge_fields {
    ($flags:expr, $file:expr, $($f:ident),*) => {
        Settings { $($f: $flags.$f.clone().or($file.$f.clone()),)* }
    };
}

impl Settings {
    /// Flags over file values.
    fn merged(&self) -> anyhow::Result<Settings> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<Settings>(&text)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => Settings::default(),
        };
        let mut m = merge_fields!(
            self,
            file,
            config,
            code,
            crc,
            crc_poly,
            construction,
            frozen_file,
            design_snr,
            decoder,
            list,
            omega,
            p,
            alpha,
            kernel,
            scorer,
            fv_scorer,
            snr,
            seed,
            max_errors,
            max_frames,
            count,
            error_frames,
            k_max,
            llr_file,
            message,
            threads,
            out
        );
        m.config = None;
        Ok(m)
    }
}

/// Settings with every default filled in.
struct Resolved {
    settings: Settings,
    code: PolarCode,
    setup: DecoderSetup,
    snrs: Vec<f64>,
    seed: u64,
    threads: usize,
}

fn default_poly(width: u8) -> Option<u32> {
    match width {
        0 => Some(0),
        4 => Some(0x3),
        8 => Some(0x07),
        16 => Some(polarflip::crc::DEFAULT_CRC16_POLY),
        _ => None,
    }
}

fn parse_snrs(spec: &str) -> anyhow::Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| anyhow!("bad SNR value {s:?}"))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0) || b < a {
                bail!("SNR range {spec:?} needs a positive step and start <= end");
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9)
                .collect()
        }
        [list] => list
            .split(',')
            .map(num)
            .collect::<anyhow::Result<Vec<_>>>()?,
        _ => bail!("SNR spec {spec:?} is not a:step:b or a comma list"),
    };
    if values.iter().any(|v| !v.is_finite()) {
        bail!("SNR values must be finite");
    }
    Ok(values)
}

fn parse_bits(s: &str) -> anyhow::Result<Vec<u8>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(anyhow!("message must be a 0/1 string, found {c:?}")),
        })
        .collect()
}

fn resolve(flags: &Settings) -> anyhow::Result<Resolved> {
    let mut s = flags.merged()?;
    let Some(code_arg) = s.code.clone() else {
        bail!("missing --code N K")
    };
    let [n, k] = code_arg[..] else {
        bail!("--code takes exactly two values, N and K")
    };
    let width = *s.crc.get_or_insert(16);
    let poly = match s.crc_poly {
        Some(p) => p,
        None => default_poly(width).ok_or_else(|| anyhow!("--crc {width} needs --crc-poly"))?,
    };
    s.crc_poly = Some(poly);
    let crc = if width == 0 {
        Crc::none()
    } else {
        Crc::new(width, poly)?
    };
    let design_snr = *s.design_snr.get_or_insert(DEFAULT_DESIGN_SNR_DB);
    let construction = s.construction.get_or_insert_with(|| {
        if s.frozen_file.is_some() {
            "file".into()
        } else {
            "ga".into()
        }
    });
    let method = match (construction.as_str(), &s.frozen_file) {
        ("ga", None) => ConstructionMethod::GaussianApproximation,
        ("ga", Some(_)) => bail!("--frozen-file conflicts with --construction ga"),
        ("file", Some(p)) => ConstructionMethod::ExternalFile(p.clone()),
        ("file", None) => bail!("--construction file needs --frozen-file"),
        (other, _) => bail!("unknown construction {other:?} (expected ga or file)"),
    };
    let code = PolarCode::construct(n, k, crc, &method, design_snr)?;

    let kind: DecoderKind = s
        .decoder
        .get_or_insert_with(|| "sc".into())
        .parse()
        .map_err(|e: String| anyhow!(e))?;
    let list = *s.list.get_or_insert(match kind {
        DecoderKind::Scl | DecoderKind::DncSclf => 4,
        DecoderKind::Sc | DecoderKind::DncScf => 1,
    });
    if matches!(kind, DecoderKind::Sc | DecoderKind::DncScf) && list != 1 {
        bail!("--list {list} needs an SCL-based decoder (scl or dnc-sclf)");
    }
    let kernel = match s.kernel.get_or_insert_with(|| "exact".into()).as_str() {
        "exact" => CheckKernel::Exact,
        "min-sum" => CheckKernel::MinSum,
        other => bail!("unknown kernel {other:?} (expected exact or min-sum)"),
    };
    let mut setup = DecoderSetup {
        kind,
        list_size: list,
        kernel,
        ..DecoderSetup::sc()
    };
    setup.omega = *s.omega.get_or_insert(setup.omega);
    setup.shape_p = *s.p.get_or_insert(setup.shape_p);
    setup.alpha = *s.alpha.get_or_insert(setup.alpha);
    if let Some(text) = &s.scorer {
        let scorer: ScorerChoice = text.parse().map_err(|e: String| anyhow!(e))?;
        if s.fv_scorer.is_none() {
            s.fv_scorer = Some(match &scorer {
                ScorerChoice::Genie(_) => "genie".into(),
                ScorerChoice::External(cmd) => format!("external:{cmd}"),
                ScorerChoice::Heuristic => "continue".into(),
                ScorerChoice::Model(_) => bail!("a model scorer needs an explicit --fv-scorer"),
            });
        }
        setup.scorer = Some(scorer);
    }
    if let Some(text) = &s.fv_scorer {
        setup.validator = Some(
            text.parse::<ValidatorChoice>()
                .map_err(|e: String| anyhow!(e))?,
        );
    }
    if kind.uses_flips() && setup.scorer.is_none() {
        bail!(
            "decoder {} needs --scorer",
            s.decoder.as_deref().unwrap_or_default()
        );
    }
    setup.validate()?;

    let snrs = match &s.snr {
        Some(spec) => parse_snrs(spec)?,
        None => Vec::new(),
    };
    let seed = *s.seed.get_or_insert(1);
    let threads = s
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    Ok(Resolved {
        settings: s,
        code,
        setup,
        snrs,
        seed,
        threads,
    })
}

impl Resolved {
    fn single_snr(&self) -> anyhow::Result<f64> {
        match self.snrs[..] {
            [snr] => Ok(snr),
            [] => bail!("missing --snr"),
            _ => bail!("this command takes a single --snr value"),
        }
    }

    /// `#`-prefixed TOML of the resolved settings plus the code digest.
    fn stanza(&self, command: &str) -> String {
        let mut s = self.settings.clone();
        s.threads = None;
        let toml = toml::to_string(&s).expect("settings serialize");
        let mut out = format!(
            "# polarflip {} {command}\n# code digest: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.code.digest_hex()
        );
        out.push_str("# settings (TOML; strip \"# \" and pass with --config to rerun):\n");
        for line in toml.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Configuration problems exit with 2, everything else with 3.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn classify(e: anyhow::Error) -> Failure {
    let config = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<SimError>(),
            Some(SimError::Config(_) | SimError::Code(_))
        ) || c.downcast_ref::<polarflip::error::CodeError>().is_some()
    });
    if config {
        Failure::Config(e)
    } else {
        Failure::Runtime(e)
    }
}

fn open_out(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_fer(r: &Resolved) -> anyhow::Result<()> {
    if r.snrs.is_empty() {
        return Err(SimError::Config("missing --snr".into()).into());
    }
    let s = &r.settings;
    let stop = StopRule {
        max_errors: s.max_errors.unwrap_or(StopRule::default().max_errors),
        max_frames: s.max_frames.unwrap_or(StopRule::default().max_frames),
    };
    let cfg = SweepConfig {
        snrs: r.snrs.clone(),
        seed: r.seed,
        stop,
        threads: r.threads,
    };
    let decoder = PreparedDecoder::new(&r.code, r.setup.clone())?;
    let mut out = open_out(s.out.as_deref())?;
    out.write_all(r.stanza("fer").as_bytes())?;
    sim::run_fer_sweep(&r.code, &decoder, &cfg, Some(&mut out))?;
    out.flush()?;
    Ok(())
}

fn cmd_accuracy(r: &Resolved) -> anyhow::Result<()> {
    let snr = r
        .single_snr()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let s = &r.settings;
    let Some(scorer) = &r.setup.scorer else {
        return Err(SimError::Config("accuracy needs --scorer".into()).into());
    };
    let cfg = AccuracyConfig {
        snr_db: snr,
        seed: r.seed,
        error_frames: s.error_frames.unwrap_or(1000),
        max_frames: s.max_frames.unwrap_or(StopRule::default().max_frames),
        k_max: s.k_max.unwrap_or(5),
        omega: r.setup.omega,
        shape_p: r.setup.shape_p,
        threads: r.threads,
    };
    let decoder = r.setup.decoder_config();
    let result = sim::run_identification_accuracy(&r.code, decoder, scorer, &cfg)?;
    let mut out = open_out(s.out.as_deref())?;
    out.write_all(r.stanza("accuracy").as_bytes())?;
    out.write_all(result.to_tsv().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_generate(r: &Resolved, kind: DatasetKind) -> anyhow::Result<()> {
    let snr = r
        .single_snr()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let s = &r.settings;
    let Some(path) = &s.out else {
        return Err(SimError::Config("dataset export needs --out".into()).into());
    };
    let Some(count) = s.count else {
        return Err(SimError::Config("dataset export needs --count".into()).into());
    };
    let decoder = r.setup.decoder_config();
    let cfg = DatasetConfig {
        snr_db: snr,
        seed: r.seed,
        count,
        max_frames: s.max_frames.unwrap_or(u64::MAX),
        decoder,
        omega: r.setup.omega,
        shape_p: r.setup.shape_p,
        threads: r.threads,
    };
    let header = DatasetHeader::new(
        kind,
        &r.code,
        decoder.list_size,
        cfg.omega,
        cfg.shape_p,
        snr,
        r.seed,
    );
    let mut writer = DatasetWriter::create(path, header)?;
    let summary = match kind {
        DatasetKind::FDnc => sim::generate_f_dnc_dataset(&r.code, &cfg, &mut writer)?,
        DatasetKind::FvDnc => sim::generate_fv_dnc_dataset(&r.code, &cfg, &mut writer)?,
    };
    writer.finish()?;
    let name = if kind == DatasetKind::FDnc {
        "gen-fdnc"
    } else {
        "gen-fvdnc"
    };
    let mut stdout = io::stdout().lock();
    write!(stdout, "{}", r.stanza(name))?;
    writeln!(
        stdout,
        "records\t{}\nframes_simulated\t{}\nerror_frames\t{}\nfile\t{}",
        summary.records,
        summary.frames_simulated,
        summary.error_frames,
        path.display()
    )?;
    if summary.records < count {
        bail!(
            "stopped after {} frames with {} of {count} records",
            summary.frames_simulated,
            summary.records
        );
    }
    Ok(())
}

fn cmd_decode_one(r: &Resolved) -> anyhow::Result<()> {
    let s = &r.settings;
    let Some(path) = &s.llr_file else {
        return Err(SimError::Config("decode-one needs --llr-file".into()).into());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let llrs = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| anyhow!("bad LLR value {t:?} in {}", path.display()))
        })
        .collect::<anyhow::Result<Vec<f64>>>()?;
    if llrs.len() != r.code.n_bits() {
        return Err(SimError::Config(format!(
            "{} holds {} LLRs, the code has N = {}",
            path.display(),
            llrs.len(),
            r.code.n_bits()
        ))
        .into());
    }
    let genie = matches!(r.setup.scorer, Some(ScorerChoice::Genie(_)))
        || r.setup.validator == Some(ValidatorChoice::Genie);
    let (message, u) = match &s.message {
        Some(bits) => {
            let m = parse_bits(bits).map_err(|e| SimError::Config(e.to_string()))?;
            let u = r
                .code
                .u_from_message(&m)
                .map_err(|e| SimError::Config(format!("--message: {e}")))?;
            (m, u)
        }
        None if genie && r.setup.kind.uses_flips() => {
            return Err(
                SimError::Config("genie scorers need the transmitted --message".into()).into(),
            )
        }
        None => (Vec::new(), vec![0; r.code.n_bits()]),
    };
    let frame = Frame {
        id: 0,
        message: message.clone(),
        u,
        llrs,
    };
    let decoder = PreparedDecoder::new(&r.code, r.setup.clone())?;
    let outcome = decoder.decode_frame(&r.code, &frame)?;
    let mut out = open_out(s.out.as_deref())?;
    out.write_all(r.stanza("decode-one").as_bytes())?;
    match &outcome.log {
        Some(log) => log.write_trace(&mut out)?,
        None => {
            let crc_pass = r.code.crc_check(&outcome.decisions);
            writeln!(
                out,
                "{}",
                serde_json::json!({ "record": "attempt", "attempt": 0, "phase": "initial", "crc_pass": crc_pass })
            )?;
        }
    }
    let decoded: String = r
        .code
        .message(&outcome.decisions)
        .iter()
        .map(|b| if *b == 1 { '1' } else { '0' })
        .collect();
    writeln!(
        out,
        "{}",
        serde_json::json!({ "record": "message", "bits": decoded })
    )?;
    if !message.is_empty() {
        writeln!(
            out,
            "{}",
            serde_json::json!({ "record": "check", "correct": r.code.message(&outcome.decisions) == message })
        )?;
    }
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let resolved = resolve(cli.command.settings()).map_err(Failure::Config)?;
    log::info!(
        "running {} with {} threads",
        cli.command.name(),
        resolved.threads
    );
    let result = match &cli.command {
        Command::Fer(_) => cmd_fer(&resolved),
        Command::Accuracy(_) => cmd_accuracy(&resolved),
        Command::GenFdnc(_) => cmd_generate(&resolved, DatasetKind::FDnc),
        Command::GenFvdnc(_) => cmd_generate(&resolved, DatasetKind::FvDnc),
        Command::DecodeOne(_) => cmd_decode_one(&resolved),
    };
    result.map_err(classify)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("polarflip: configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("polarflip: {e:#}");
            ExitCode::from(3)
        }
    }
}
