//! `trustshare` command-line front end.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use trustshare::bench;
use trustshare::crt_vss::{self, Bulletin, ShareFile};
use trustshare::modmath::{self, ABParams, MathError};
use trustshare::netsim::{self, NetError, ScenarioConfig, Transcript, Verdict};

const SEED_ENV: &str = "CRTVSS_SEED";

#[derive(Parser, Debug)]
#[command(name = "trustshare", version, about = "CRT verifiable secret sharing, threshold DSS and attack scenarios")]
struct Cli {
    /// Seed for every random choice. Defaults to the config file, then $CRTVSS_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with default option values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Indent JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an Asmuth-Bloom parameter set.
    GenParams(GenParamsArgs),
    /// Split a secret into share files plus a public bulletin.
    Split(SplitArgs),
    /// Check one share file against its commitment.
    Verify(VerifyArgs),
    /// Recombine share files into the secret.
    Combine(CombineArgs),
    /// Run the mutual attestation protocol between two simulated nodes.
    DemoAuth(DemoAuthArgs),
    /// Run the threshold signing protocol over the simulator.
    DemoSign(DemoSignArgs),
    /// Run a scripted attack or cheating scenario.
    Attack(AttackArgs),
    /// Count reconstruction multiplications for CRT and Shamir sharing.
    BenchCompare(BenchArgs),
}

#[derive(Args, Debug)]
struct GenParamsArgs {
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m0: Option<u64>,
    /// Minimum bit length of the capacity M.
    #[arg(long)]
    bits: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    params: PathBuf,
    /// Decimal secret.
    #[arg(long)]
    secret: String,
    /// Fixed mask A instead of a random one.
    #[arg(long, conflicts_with = "direct")]
    mask: Option<String>,
    /// Share the value itself with no mask.
    #[arg(long)]
    direct: bool,
    /// Directory for share_<i>.json and bulletin.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    share: PathBuf,
    /// Check the share's commitment against this bulletin too.
    #[arg(long)]
    bulletin: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CombineArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    bulletin: Option<PathBuf>,
    #[arg(required = true)]
    shares: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct DemoAuthArgs {
    #[arg(long, default_value = "auth-honest", value_parser = ["auth-honest", "auth-compromised", "auth-unknown-neighbor"])]
    scenario: String,
}

#[derive(Args, Debug)]
struct DemoSignArgs {
    /// `toy` or `secp256k1`.
    #[arg(long)]
    curve: Option<String>,
    #[arg(long)]
    message: Option<String>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_parser = ["tamper-sig-share"])]
    inject: Option<String>,
}

#[derive(Args, Debug)]
struct AttackArgs {
    scenario: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    t: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optional defaults read from `--config`.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    t: Option<usize>,
    n: Option<usize>,
    m0: Option<u64>,
    bits: Option<u64>,
    curve: Option<String>,
    message: Option<String>,
    pretty: Option<bool>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Verify(String),
    Signature(String),
    Unexpected(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Verify(_) => 3,
            Failure::Signature(_) => 4,
            Failure::Unexpected(_) | Failure::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

type Outcome = Result<(), Failure>;

/// Validated settings shared by every command.
struct RunConfig {
    seed: Option<u64>,
    file: FileConfig,
    pretty: bool,
}

impl RunConfig {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let file: FileConfig = match &cli.config {
            Some(path) => {
                let text =
                    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => {
                Some(v.trim().parse::<u64>().map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer")))?)
            }
            Err(_) => None,
        };
        Ok(RunConfig { seed: cli.seed.or(file.seed).or(env_seed), pretty: cli.pretty || file.pretty.unwrap_or(false), file })
    }

    fn seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::Usage(format!("a seed is required: pass --seed or set {SEED_ENV}")))
    }

    fn rng(&self) -> Result<ChaCha20Rng, Failure> {
        Ok(ChaCha20Rng::seed_from_u64(self.seed()?))
    }

    fn render(&self, value: &impl Serialize) -> String {
        if self.pretty {
            serde_json::to_string_pretty(value).expect("serializable")
        } else {
            serde_json::to_string(value).expect("serializable")
        }
    }

    fn print(&self, value: &impl Serialize) {
        emit(format!("{}\n", self.render(value)).as_bytes());
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(bytes: &[u8]) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(bytes).and_then(|()| out.flush());
}

fn parse_big(text: &str, what: &str) -> Result<BigUint, Failure> {
    text.parse::<BigUint>().map_err(|_| Failure::Usage(format!("{what} must be a non-negative decimal integer")))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{} is not a valid file: {e}", path.display())))
}

fn write_out(cfg: &RunConfig, out: Option<&Path>, value: &impl Serialize) -> Outcome {
    match out {
        Some(path) => {
            fs::write(path, cfg.render(value) + "\n").with_context(|| format!("cannot write {}", path.display()))?;
            Ok(())
        }
        None => {
            cfg.print(value);
            Ok(())
        }
    }
}

fn gen_params(cfg: &RunConfig, args: &GenParamsArgs) -> Outcome {
    let t = args.t.or(cfg.file.t).unwrap_or(2);
    let n = args.n.or(cfg.file.n).unwrap_or(3);
    let m0 = args.m0.or(cfg.file.m0).unwrap_or(7);
    let bits = args.bits.or(cfg.file.bits).unwrap_or(12);
    if t < 2 || t > n {
        return Err(Failure::Usage(format!("need 2 <= t <= n, got t = {t}, n = {n}")));
    }
    let mut rng = cfg.rng()?;
    let params = match modmath::gen_ab_params(t, n, &BigUint::from(m0), bits, &mut rng) {
        Ok(p) => p,
        Err(e @ MathError::InvalidParams(_)) => return Err(Failure::Usage(e.to_string())),
        Err(e) => return Err(Failure::Other(anyhow!("parameter search failed: {e}"))),
    };
    write_out(cfg, args.out.as_deref(), &params)
}

fn split(cfg: &RunConfig, args: &SplitArgs) -> Outcome {
    let params: ABParams = read_json(&args.params)?;
    let secret = parse_big(&args.secret, "secret")?;
    let mut rng = cfg.rng()?;
    let dealing = if args.direct {
        crt_vss::split_direct(&secret, &params, &mut rng)
    } else if let Some(mask) = &args.mask {
        crt_vss::split_masked_with_mask(&secret, &parse_big(mask, "mask")?, &params, &mut rng).map(|(d, _)| d)
    } else {
        crt_vss::split_masked(&secret, &params, &mut rng).map(|(d, _)| d)
    }
    .map_err(|e| Failure::Usage(format!("cannot split: {e}")))?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let mut files = Vec::new();
    for (share, commitment) in dealing.shares.iter().zip(&dealing.commitments) {
        let path = args.out_dir.join(format!("share_{}.json", share.index));
        write_out(cfg, Some(&path), &ShareFile::new(share, commitment, dealing.mode))?;
        files.push(path.display().to_string());
    }
    let bulletin_path = args.out_dir.join("bulletin.json");
    write_out(cfg, Some(&bulletin_path), &dealing.bulletin())?;
    cfg.print(&json!({
        "shares": files,
        "bulletin": bulletin_path.display().to_string(),
        "values": dealing.shares.iter().map(|s| s.value.to_string()).collect::<Vec<_>>(),
    }));
    Ok(())
}

/// Checks a share against its embedded commitment and, if given, the bulletin.
fn check_share(file: &ShareFile, bulletin: Option<&Bulletin>) -> Result<(), Failure> {
    let commitment = file.commitment();
    if let Some(b) = bulletin {
        if b.commitment(file.index) != Some(&commitment) {
            return Err(Failure::Verify(format!("share {}: commitment does not match the bulletin", file.index)));
        }
    }
    match crt_vss::verify_share(&file.share(), &commitment) {
        Ok(true) => Ok(()),
        Ok(false) => Err(Failure::Verify(format!("share {}: commitment mismatch", file.index))),
        Err(e) => Err(Failure::Verify(format!("share {}: {e}", file.index))),
    }
}

fn verify(cfg: &RunConfig, args: &VerifyArgs) -> Outcome {
    let file: ShareFile = read_json(&args.share)?;
    let bulletin: Option<Bulletin> = args.bulletin.as_deref().map(read_json).transpose()?;
    check_share(&file, bulletin.as_ref())?;
    cfg.print(&json!({ "index": file.index, "valid": true }));
    Ok(())
}

fn combine(cfg: &RunConfig, args: &CombineArgs) -> Outcome {
    let params: ABParams = read_json(&args.params)?;
    let bulletin: Option<Bulletin> = args.bulletin.as_deref().map(read_json).transpose()?;
    let mut files: Vec<ShareFile> = args.shares.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    files.sort_by_key(|f| f.index);
    files.dedup_by_key(|f| f.index);
    if files.len() < params.t() {
        return Err(Failure::Usage(format!("need {} distinct shares, got {}", params.t(), files.len())));
    }
    let mode = files[0].mode;
    if files.iter().any(|f| f.mode != mode) {
        return Err(Failure::Usage("share files mix masked and direct dealings".into()));
    }
    for f in &files {
        check_share(f, bulletin.as_ref())?;
    }
    let shares: Vec<_> = files.iter().take(params.t()).map(ShareFile::share).collect();
    let (lifted, secret) =
        crt_vss::reconstruct_with(&shares, &params, mode).map_err(|e| Failure::Usage(format!("cannot combine: {e}")))?;
    cfg.print(&json!({
        "indices": shares.iter().map(|s| s.index).collect::<Vec<_>>(),
        "lifted": lifted.to_string(),
        "secret": secret.to_string(),
    }));
    Ok(())
}

fn run_scenario(cfg: &RunConfig, scenario: ScenarioConfig) -> Result<Transcript, Failure> {
    match netsim::run_scenario(&scenario) {
        Ok(t) => Ok(t),
        Err(NetError::UnknownScenario(name)) => Err(Failure::Usage(format!(
            "unknown scenario {name:?}; known: {}",
            netsim::SCENARIOS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ))),
        Err(e) => Err(Failure::Other(anyhow!("scenario {} (seed {}) failed: {e}", scenario.name, cfg.seed.unwrap_or_default()))),
    }
}

/// Prints the transcript and maps the verdict to an exit status.
fn report(cfg: &RunConfig, transcript: &Transcript) -> Outcome {
    cfg.print(transcript);
    let expected = netsim::expected_verdict(&transcript.scenario);
    let got = transcript.verdict();
    eprintln!("{}: {}", transcript.scenario, got.map_or("NONE", Verdict::as_str));
    if got.is_some() && got == expected {
        Ok(())
    } else {
        Err(Failure::Unexpected(format!(
            "verdict {} differs from the expected {}",
            got.map_or("NONE", Verdict::as_str),
            expected.map_or("NONE", Verdict::as_str)
        )))
    }
}

fn demo_auth(cfg: &RunConfig, args: &DemoAuthArgs) -> Outcome {
    let transcript = run_scenario(cfg, ScenarioConfig::new(&args.scenario, cfg.seed()?))?;
    report(cfg, &transcript)
}

fn demo_sign(cfg: &RunConfig, args: &DemoSignArgs) -> Outcome {
    let name = if args.inject.is_some() { "sign-tamper" } else { "sign-honest" };
    let mut scenario = ScenarioConfig::new(name, cfg.seed()?);
    if let Some(curve) = args.curve.clone().or_else(|| cfg.file.curve.clone()) {
        if trustshare::curve::CurveParams::by_name(&curve).is_none() {
            return Err(Failure::Usage(format!("unknown curve {curve:?}; use toy or secp256k1")));
        }
        scenario.curve = curve;
    }
    if let Some(message) = args.message.clone().or_else(|| cfg.file.message.clone()) {
        scenario.message = message;
    }
    scenario.t = args.t.or(cfg.file.t).unwrap_or(scenario.t);
    scenario.n = args.n.or(cfg.file.n).unwrap_or(scenario.n);
    if scenario.t < 2 || scenario.t > scenario.n {
        return Err(Failure::Usage(format!("need 2 <= t <= n, got t = {}, n = {}", scenario.t, scenario.n)));
    }
    let transcript = run_scenario(cfg, scenario)?;
    let verdict = transcript.verdict();
    let summary = json!({
        "verdict": verdict.map(Verdict::as_str),
        "signature": transcript.outputs.get("signature"),
        "verified": transcript.outputs.get("verified").cloned().unwrap_or(Value::Bool(false)),
        "error": transcript.outputs.get("error"),
        "transcript": &transcript,
    });
    cfg.print(&summary);
    if let Some(Value::String(err)) = transcript.outputs.get("error") {
        return Err(Failure::Signature(err.clone()));
    }
    if verdict == netsim::expected_verdict(&transcript.scenario) {
        Ok(())
    } else {
        Err(Failure::Unexpected(format!("verdict {}", verdict.map_or("NONE", Verdict::as_str))))
    }
}

fn attack(cfg: &RunConfig, args: &AttackArgs) -> Outcome {
    if netsim::expected_verdict(&args.scenario).is_none() {
        return Err(Failure::Usage(format!(
            "unknown scenario {:?}; known: {}",
            args.scenario,
            netsim::SCENARIOS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        )));
    }
    let mut scenario = ScenarioConfig::new(&args.scenario, cfg.seed()?);
    if let Some(curve) = cfg.file.curve.clone() {
        scenario.curve = curve;
    }
    let transcript = run_scenario(cfg, scenario)?;
    report(cfg, &transcript)
}

fn bench_compare(cfg: &RunConfig, args: &BenchArgs) -> Outcome {
    if let Some(&t) = args.t.iter().find(|&&t| t < 2) {
        return Err(Failure::Usage(format!("every t must be at least 2, got {t}")));
    }
    let mut rng = cfg.rng()?;
    let rows = bench::compare(&args.t, &mut rng).map_err(|e| Failure::Other(e.into()))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(["scheme", "t", "mult_count"]).context("csv")?;
    for row in &rows {
        writer.serialize(row).context("csv")?;
    }
    let bytes = writer.into_inner().map_err(|e| anyhow!("csv: {e}"))?;
    match &args.out {
        Some(path) => fs::write(path, &bytes).with_context(|| format!("cannot write {}", path.display()))?,
        None => emit(&bytes),
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    let cfg = RunConfig::load(cli)?;
    match &cli.command {
        Command::GenParams(a) => gen_params(&cfg, a),
        Command::Split(a) => split(&cfg, a),
        Command::Verify(a) => verify(&cfg, a),
        Command::Combine(a) => combine(&cfg, a),
        Command::DemoAuth(a) => demo_auth(&cfg, a),
        Command::DemoSign(a) => demo_sign(&cfg, a),
        Command::Attack(a) => attack(&cfg, a),
        Command::BenchCompare(a) => bench_compare(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(m) | Failure::Verify(m) | Failure::Signature(m) | Failure::Unexpected(m) => {
                    eprintln!("error: {m}")
                }
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
