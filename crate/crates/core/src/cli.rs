//! Command-line frontend.
//!
//! Exit codes: 0 success, 1 usage, 2 validation or format error, 3 runtime
//! failure (I/O, network, or a failed `verify` verdict).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde::Serialize;

use crate::adversary::{bit_strategies, strategy_library, AttackStrategy, StrategyKind};
use crate::error::AceError;
use crate::gf::{seeded_rng, AceRng};
use crate::keyio::{
    deserialize_ciphertext, deserialize_key, serialize_ciphertext, serialize_party_key,
    serialize_sanitizer_key, KeyFile,
};
use crate::matrix::Matrix;
use crate::pair::{
    pair_decrypt, pair_encrypt, pair_keygen, pair_sanitize, KeygenVariant, PairParams,
    DEFAULT_FEASIBILITY_CAP,
};
use crate::policy::{
    policy_decrypt, policy_encrypt, policy_keygen, policy_sanitize, PartyId, PartyKey, Policy,
    SanitizerKey,
};
use crate::relay::{self, RelayConfig, Subscription};
use crate::statcheck::{self, BaselineKind, Mode, NoWriteConfig, Record, RecoveryConfig, ZMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ace",
    version,
    about = "Access control encryption over random matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sanitizer key and one key per party.
    Keygen {
        /// Policy file, or `bell-lapadula:<n>`.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        q: u64,
        #[arg(long = "L")]
        l: usize,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Encrypt a message from party `from` to party `to`.
    Enc {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        from: PartyId,
        #[arg(long)]
        to: PartyId,
        /// Comma-separated hex field elements, L of them.
        #[arg(long)]
        msg: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sanitize a ciphertext.
    San {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt a sanitized ciphertext and print the message.
    Dec {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        from: PartyId,
        #[arg(long)]
        to: PartyId,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the sanitizer relay.
    Relay {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, default_value_t = relay::DEFAULT_MAX_FRAME)]
        max_frame: usize,
        #[arg(long, default_value_t = relay::DEFAULT_QUEUE_BOUND)]
        queue_bound: usize,
    },
    /// Submit a ciphertext file to a relay.
    Send {
        #[arg(long)]
        addr: String,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Subscribe to a relay and decrypt each broadcast on edge `from -> to`.
    Listen {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        from: PartyId,
        #[arg(long)]
        to: PartyId,
        /// Stop after this many broadcasts.
        #[arg(long)]
        count: Option<u64>,
    },
    /// Run verification experiments and print one JSON record per line.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// `q=<prime>,L=<len>,N=<len>`
        #[arg(long)]
        params: String,
        /// Strategy id; defaults to the whole battery.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Policy file or `bell-lapadula:<n>`; defaults to a single edge 1 -> 2.
        #[arg(long)]
        policy: Option<String>,
        /// Comma-separated leaker parties.
        #[arg(long)]
        leakers: Option<String>,
        /// Comma-separated listener parties (may be empty).
        #[arg(long)]
        listeners: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, default_value_t = DEFAULT_FEASIBILITY_CAP)]
        cap: u128,
    },
    /// Time one operation; informational only.
    Bench {
        #[arg(long, value_enum)]
        op: BenchOp,
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = 1000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Noread,
    KeygenUniform,
    KeygenEquiv,
    Nowrite,
    Recovery,
    Baselines,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Montecarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchOp {
    Enc,
    San,
    Dec,
    Keygen,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<AceError> for CliError {
    fn from(e: AceError) -> Self {
        let code = match e {
            AceError::SamplingFailure(_) => EXIT_RUNTIME,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

impl From<relay::RelayError> for CliError {
    fn from(e: relay::RelayError) -> Self {
        let code = match e {
            relay::RelayError::Rejected { .. } => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult<i32> {
    match command {
        Command::Keygen {
            policy,
            q,
            l,
            n,
            out_dir,
            seed,
        } => keygen(&policy, q, l, n, &out_dir, seed, out).map(|_| EXIT_OK),
        Command::Enc {
            key,
            from,
            to,
            msg,
            out: path,
            seed,
        } => {
            let key = load_party(&key)?;
            let message = parse_message(&msg, &key.params)?;
            let ct = policy_encrypt(from, to, &key, &message, &mut rng_for(seed))?;
            fs::write(&path, serialize_ciphertext(&ct))?;
            Ok(EXIT_OK)
        }
        Command::San {
            key,
            input,
            out: path,
        } => {
            let key = load_sanitizer(&key)?;
            let ct = deserialize_ciphertext(&fs::read(&input)?, false)?;
            fs::write(&path, serialize_ciphertext(&policy_sanitize(&key, &ct)?))?;
            Ok(EXIT_OK)
        }
        Command::Dec {
            key,
            from,
            to,
            input,
        } => {
            let key = load_party(&key)?;
            let ct = deserialize_ciphertext(&fs::read(&input)?, true)?;
            let d = policy_decrypt(from, to, &key, &ct)?;
            if !d.in_message_space {
                return Err(CliError {
                    code: EXIT_VALIDATION,
                    message: "decryption is outside the message space".into(),
                });
            }
            writeln!(out, "{}", format_message(&d.message))?;
            Ok(EXIT_OK)
        }
        Command::Relay {
            key,
            listen,
            max_frame,
            queue_bound,
        } => {
            let key = load_sanitizer(&key)?;
            let handle = relay::relay_serve(
                listen.as_str(),
                key,
                RelayConfig {
                    max_frame,
                    queue_bound,
                },
            )?;
            writeln!(out, "listening on {}", handle.local_addr())?;
            out.flush()?;
            handle.wait();
            Ok(EXIT_OK)
        }
        Command::Send { addr, input } => {
            relay::client_send_bytes(addr.as_str(), &fs::read(&input)?)?;
            Ok(EXIT_OK)
        }
        Command::Listen {
            addr,
            key,
            from,
            to,
            count,
        } => {
            let key = load_party(&key)?;
            let mut sub = Subscription::connect(addr.as_str())?;
            let mut seen = 0u64;
            while count.is_none_or(|c| seen < c) {
                let Some(ct) = sub.next_ciphertext()? else {
                    break;
                };
                let d = policy_decrypt(from, to, &key, &ct)?;
                if d.in_message_space {
                    writeln!(out, "{}", format_message(&d.message))?;
                } else {
                    writeln!(out, "-")?;
                }
                out.flush()?;
                seen += 1;
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            suite,
            params,
            strategy,
            trials,
            seed,
            policy,
            leakers,
            listeners,
            mode,
            cap,
        } => {
            let params = parse_params(&params)?;
            let policy = match policy {
                Some(p) => load_policy(&p)?,
                None => Policy::single_pair(),
            };
            let request = VerifyRequest {
                suite,
                params,
                policy,
                strategy,
                trials,
                seed,
                leakers,
                listeners,
                mode,
                cap,
            };
            let records = verify(&request)?;
            let mut failed = false;
            for r in &records {
                writeln!(out, "{}", r.to_json_line())?;
                failed |= r.verdict().is_fail();
            }
            Ok(if failed { EXIT_RUNTIME } else { EXIT_OK })
        }
        Command::Bench {
            op,
            params,
            reps,
            seed,
        } => {
            let params = parse_params(&params)?;
            if reps == 0 {
                return Err(CliError::usage("--reps must be positive"));
            }
            let ns = bench(op, &params, reps, seed)?;
            #[derive(Serialize)]
            struct BenchLine {
                op: BenchOp,
                q: u32,
                #[serde(rename = "L")]
                l: usize,
                #[serde(rename = "N")]
                n: usize,
                reps: u64,
                ns_per_op: f64,
            }
            let line = BenchLine {
                op,
                q: params.q(),
                l: params.msg_len(),
                n: params.ct_len(),
                reps,
                ns_per_op: ns,
            };
            writeln!(out, "{}", serde_json::to_string(&line).expect("serializes"))?;
            Ok(EXIT_OK)
        }
    }
}

fn rng_for(seed: Option<u64>) -> AceRng {
    match seed {
        Some(s) => seeded_rng(s),
        None => AceRng::from_entropy(),
    }
}

fn load_policy(arg: &str) -> CliResult<Policy> {
    if arg.starts_with("bell-lapadula:") {
        return Ok(Policy::parse(arg)?);
    }
    let text = fs::read_to_string(arg)?;
    Ok(Policy::parse(&text)?)
}

fn load_key(path: &Path) -> CliResult<KeyFile> {
    Ok(deserialize_key(&fs::read(path)?)?)
}

fn load_party(path: &Path) -> CliResult<PartyKey> {
    match load_key(path)? {
        KeyFile::Party(k) => Ok(k),
        KeyFile::Sanitizer(_) => Err(AceError::FormatError(format!(
            "{} is a sanitizer key, expected a party key",
            path.display()
        ))
        .into()),
    }
}

fn load_sanitizer(path: &Path) -> CliResult<SanitizerKey> {
    match load_key(path)? {
        KeyFile::Sanitizer(k) => Ok(k),
        KeyFile::Party(_) => Err(AceError::FormatError(format!(
            "{} is a party key, expected a sanitizer key",
            path.display()
        ))
        .into()),
    }
}

/// Parses `q=<prime>,L=<len>,N=<len>` in any order.
pub fn parse_params(text: &str) -> Result<PairParams, AceError> {
    let (mut q, mut l, mut n) = (None, None, None);
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| AceError::InvalidParams(format!("expected key=value, got {part:?}")))?;
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| AceError::InvalidParams(format!("{k} is not a number")))?;
        match k.trim() {
            "q" => q = Some(v),
            "L" => l = Some(v as usize),
            "N" => n = Some(v as usize),
            other => {
                return Err(AceError::InvalidParams(format!(
                    "unknown parameter {other:?}"
                )))
            }
        }
    }
    match (q, l, n) {
        (Some(q), Some(l), Some(n)) => PairParams::new(q, l, n),
        _ => Err(AceError::InvalidParams("need q, L and N".into())),
    }
}

/// Parses `L` comma-separated hex elements into a nonzero message.
pub fn parse_message(text: &str, params: &PairParams) -> Result<Matrix, AceError> {
    let values = text
        .split(',')
        .map(|s| {
            let s = s.trim();
            let s = s.strip_prefix("0x").unwrap_or(s);
            u64::from_str_radix(s, 16)
                .map_err(|_| AceError::InvalidArgument(format!("{s:?} is not a hex element")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != params.msg_len() {
        return Err(AceError::InvalidArgument(format!(
            "message has {} elements, expected L = {}",
            values.len(),
            params.msg_len()
        )));
    }
    if let Some(v) = values.iter().find(|&&v| v >= params.q() as u64) {
        return Err(AceError::InvalidArgument(format!(
            "element {v:#x} is not below q = {}",
            params.q()
        )));
    }
    if values.iter().all(|&v| v == 0) {
        return Err(AceError::MessageOutOfSpace);
    }
    Matrix::column(params.field(), &values)
}

pub fn format_message(m: &Matrix) -> String {
    m.data()
        .iter()
        .map(|v| format!("{v:x}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_parties(text: &str) -> CliResult<Vec<PartyId>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::usage(format!("{s:?} is not a party id")))
        })
        .collect()
}

fn keygen(
    policy: &str,
    q: u64,
    l: usize,
    n: usize,
    out_dir: &Path,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> CliResult {
    let policy = load_policy(policy)?;
    let params = PairParams::new(q, l, n)?;
    let (san, parties) = policy_keygen(&policy, &params, &mut rng_for(seed))?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("sanitizer.key");
    fs::write(&path, serialize_sanitizer_key(&san))?;
    writeln!(out, "{}", path.display())?;
    for p in &parties {
        let path = out_dir.join(format!("party-{}.key", p.party));
        fs::write(&path, serialize_party_key(p))?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

struct VerifyRequest {
    suite: Suite,
    params: PairParams,
    policy: Policy,
    strategy: Option<String>,
    trials: Option<u64>,
    seed: u64,
    leakers: Option<String>,
    listeners: Option<String>,
    mode: Option<ModeArg>,
    cap: u128,
}

impl VerifyRequest {
    fn strategies(&self, bits_only: bool) -> CliResult<Vec<StrategyKind>> {
        match &self.strategy {
            Some(id) => {
                let kind = StrategyKind::from_id(id)?;
                if bits_only && !kind.is_bit_encoder() {
                    return Err(AceError::InvalidStrategy(format!(
                        "{id} does not embed a message"
                    ))
                    .into());
                }
                Ok(vec![kind])
            }
            None if bits_only => Ok(bit_strategies()),
            None => Ok(strategy_library()),
        }
    }

    /// Leaker/listener settings: explicit flags, or for the single-edge
    /// policy the two standard settings ({2} vs {1,2}, {1,2} vs {1}).
    fn settings(&self) -> CliResult<Vec<(Vec<PartyId>, Vec<PartyId>)>> {
        match (&self.leakers, &self.listeners) {
            (Some(a), Some(b)) => Ok(vec![(parse_parties(a)?, parse_parties(b)?)]),
            (None, None) if self.policy == Policy::single_pair() => {
                Ok(vec![(vec![2], vec![1, 2]), (vec![1, 2], vec![1])])
            }
            _ => Err(CliError::usage(
                "--leakers and --listeners are required together (and always for multi-edge policies)",
            )),
        }
    }
}

fn verify(req: &VerifyRequest) -> CliResult<Vec<Record>> {
    let params = &req.params;
    let mut records: Vec<Record> = Vec::new();
    match req.suite {
        Suite::Noread => records.push(statcheck::check_no_read_exact(params, req.cap)?.into()),
        Suite::KeygenUniform => {
            let z_id = ZMode::Fixed(Matrix::identity(
                params.field(),
                params.ct_len() - params.msg_len(),
            ));
            for (variant, z) in [
                (KeygenVariant::Standard, &ZMode::Enumerated),
                (KeygenVariant::Alt, &ZMode::Enumerated),
                (KeygenVariant::Alt, &z_id),
                (KeygenVariant::Alt2, &ZMode::Enumerated),
            ] {
                records.push(statcheck::check_keygen_uniform(params, variant, z, req.cap)?.into());
            }
        }
        Suite::KeygenEquiv => {
            let z_id = ZMode::Fixed(Matrix::identity(
                params.field(),
                params.ct_len() - params.msg_len(),
            ));
            let base = (KeygenVariant::Standard, &ZMode::Enumerated);
            for other in [
                (KeygenVariant::Alt, &ZMode::Enumerated),
                (KeygenVariant::Alt, &z_id),
                (KeygenVariant::Alt2, &ZMode::Enumerated),
            ] {
                records.push(
                    statcheck::check_keygen_equivalence(params, base, other, req.cap)?.into(),
                );
            }
            records.push(statcheck::check_pairwise_independence(params, req.cap)?.into());
        }
        Suite::Nowrite => {
            let exact_size = params
                .keyspace_size()
                .checked_pow(req.policy.edge_count() as u32)
                .unwrap_or(u128::MAX);
            let mode = match req.mode {
                Some(ModeArg::Exact) => Mode::Exact,
                Some(ModeArg::Montecarlo) => Mode::Montecarlo,
                None if exact_size <= req.cap => Mode::Exact,
                None => Mode::Montecarlo,
            };
            for (leakers, listeners) in req.settings()? {
                for kind in req.strategies(false)? {
                    let strategy =
                        AttackStrategy::new(kind, leakers.clone(), listeners.clone(), &req.policy)?;
                    let cfg = NoWriteConfig {
                        policy: req.policy.clone(),
                        params: *params,
                        strategy,
                        mode,
                        trials: req.trials.unwrap_or(100_000),
                        seed: req.seed,
                        cap: req.cap,
                    };
                    records.push(statcheck::estimate_no_write(&cfg)?.into());
                }
            }
        }
        Suite::Recovery => {
            for (leakers, listeners) in req.settings()? {
                for kind in req.strategies(true)? {
                    let strategy =
                        AttackStrategy::new(kind, leakers.clone(), listeners.clone(), &req.policy)?;
                    let cfg = RecoveryConfig {
                        policy: req.policy.clone(),
                        params: *params,
                        strategy,
                        p_one: 0.5,
                        trials: req.trials.unwrap_or(100_000),
                        seed: req.seed,
                    };
                    records.push(statcheck::message_recovery_experiment(&cfg)?.into());
                }
            }
        }
        Suite::Baselines => {
            let trials = req.trials.unwrap_or(1000);
            let (field, len) = (params.field(), params.msg_len());
            records.push(
                statcheck::baseline_recovery(BaselineKind::Otp, field, len, trials, req.seed)?
                    .into(),
            );
            records.push(
                statcheck::baseline_recovery(
                    BaselineKind::NaiveMatrix,
                    field,
                    len,
                    trials,
                    req.seed,
                )?
                .into(),
            );
            let forged = Matrix::basis_vector(field, len, 0);
            if let Ok(r) = statcheck::baseline_naive_sd_exact(field, len, &forged, req.cap) {
                records.push(r.into());
            }
        }
    }
    Ok(records)
}

/// Mean wall-clock nanoseconds per pair-scheme operation.
pub fn bench(op: BenchOp, params: &PairParams, reps: u64, seed: u64) -> Result<f64, AceError> {
    let mut rng = seeded_rng(seed);
    let (keys, _) = pair_keygen(params, &mut rng)?;
    let m = Matrix::sample_nonzero_vector(&mut rng, params.msg_len(), params.field());
    let c = pair_encrypt(&keys.enc_key, &m)?;
    let c2 = pair_sanitize(&keys.san_key, &c)?;
    let start = Instant::now();
    for _ in 0..reps {
        match op {
            BenchOp::Enc => {
                std::hint::black_box(pair_encrypt(&keys.enc_key, std::hint::black_box(&m))?);
            }
            BenchOp::San => {
                std::hint::black_box(pair_sanitize(&keys.san_key, std::hint::black_box(&c))?);
            }
            BenchOp::Dec => {
                std::hint::black_box(pair_decrypt(&keys.dec_key, std::hint::black_box(&c2))?);
            }
            BenchOp::Keygen => {
                std::hint::black_box(pair_keygen(params, &mut rng)?);
            }
        }
    }
    Ok(start.elapsed().as_nanos() as f64 / reps as f64)
}
