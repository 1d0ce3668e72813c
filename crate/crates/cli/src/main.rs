use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pga_core::error::PgaError;
use pga_core::fixtures::{
    embed_beliefs, gen_hmm, gen_markov, synthetic_model, HmmSpec, SyntheticModelSpec,
};
use pga_core::pipeline::{
    emit_report, load_report, report_to_csv, report_to_svg, run_pipeline, Analysis,
    ReportBundle, RunConfig, CSV_FILE, SVG_FILE,
};
use pga_core::store::{write_tensor, Tensor};
use serde_json::json;

/// Worker threads for bundle and layer parallelism.
const WORKERS_ENV: &str = "PGA_WORKERS";

#[derive(Parser)]
#[command(name = "pga", version, about = "Readout-subspace alignment analysis of layer hidden states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analysis pipeline and write report files.
    Analyze(AnalyzeArgs),
    /// Synthetic fixture generators.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
    /// Operations on an existing report.json.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON run configuration; excludes the single-bundle flags.
    #[arg(long, conflicts_with_all = ["bundle", "readout", "control_readout", "k", "null_draws", "ccr", "ccr_sweep", "seed", "out", "analyses"])]
    config: Option<PathBuf>,
    /// Bundle manifest.
    #[arg(long, requires = "readout")]
    bundle: Option<String>,
    /// Readout descriptor.
    #[arg(long, requires = "bundle")]
    readout: Option<String>,
    /// Second readout (e.g. W_E) scored as a control.
    #[arg(long)]
    control_readout: Option<String>,
    /// Readout subspace rank [default: 100].
    #[arg(long)]
    k: Option<usize>,
    /// Random subspaces in the null [default: 100].
    #[arg(long)]
    null_draws: Option<usize>,
    /// CCR order for the headline z.
    #[arg(long)]
    ccr: Option<usize>,
    /// Comma-separated CCR orders, e.g. 1,5,10.
    #[arg(long, value_delimiter = ',')]
    ccr_sweep: Option<Vec<usize>>,
    /// Base seed; every analysis seed is an offset from it [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated analyses: pga,orthogonal,spectral,mechanism,mantel,bootstrap,stability,rsa.
    #[arg(long)]
    analyses: Option<String>,
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Write a synthetic fixture to a directory.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Hmm,
    Markov,
    Planted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Aligned,
    Masked,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: FixtureKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sequence length (hmm, markov).
    #[arg(long, default_value_t = 2000)]
    length: usize,
    /// Hidden states (hmm).
    #[arg(long, default_value_t = 3)]
    states: usize,
    /// Token alphabet size (hmm, markov).
    #[arg(long, default_value_t = 3)]
    alphabet: usize,
    /// Self-transition mass (hmm).
    #[arg(long, default_value_t = 0.8)]
    stay: f64,
    /// Markov order.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Std of the noise added to embedded beliefs (hmm, markov).
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Contexts per layer (planted).
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Embedding width.
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Readout subspace rank (planted).
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Number of layers after the embedding layer (planted).
    #[arg(long, default_value_t = 8)]
    layers: usize,
    /// Layer layout (planted).
    #[arg(long, value_enum, default_value = "aligned")]
    preset: Preset,
    /// Readout vocabulary, default 2·d (planted).
    #[arg(long)]
    vocab: Option<usize>,
    /// Checkpoint step recorded in the manifest (planted).
    #[arg(long)]
    step: Option<u64>,
    /// Model id recorded in the manifest (planted).
    #[arg(long)]
    model_id: Option<String>,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Re-render a report.json as CSV or SVG.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertTo {
    Csv,
    Svg,
}

#[derive(Args)]
struct ConvertArgs {
    /// Path to report.json.
    report: PathBuf,
    #[arg(long, value_enum)]
    to: ConvertTo,
    /// Output file; defaults to the standard name beside the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

impl From<PgaError> for Failure {
    fn from(e: PgaError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn init_workers() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Validation(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Validation(format!("thread pool: {e}")))
}

fn config_from_flags(a: &AnalyzeArgs) -> Result<RunConfig, Failure> {
    let (Some(bundle), Some(readout)) = (&a.bundle, &a.readout) else {
        return Err(Failure::Validation(
            "analyze needs either --config or both --bundle and --readout".into(),
        ));
    };
    let mut cfg = RunConfig::new(bundle.clone(), readout.clone());
    cfg.control_readout = a.control_readout.clone();
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(b) = a.null_draws {
        cfg.null_draws = b;
    }
    if let Some(c) = a.ccr {
        cfg.ccr_order = c;
    }
    if let Some(s) = &a.ccr_sweep {
        cfg.ccr_sweep = s.clone();
    }
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if let Some(list) = &a.analyses {
        cfg.analyses = Analysis::parse_list(list)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(report: &ReportBundle) {
    for c in &report.checkpoints {
        let step = c.checkpoint_step.map(|s| format!(" @ {s}")).unwrap_or_default();
        match &c.summary {
            Some(s) => {
                let fmt = |z: &Option<pga_core::pga::LayerZ>| {
                    z.as_ref()
                        .map(|z| format!("{:+.2} (L{})", z.z, z.layer))
                        .unwrap_or_else(|| "n/a".into())
                };
                println!(
                    "{}{step}: peak {} min {} collapse {:?} z>2 {} z>5 {}",
                    c.model_id,
                    fmt(&s.peak),
                    fmt(&s.min),
                    s.collapse_layers,
                    s.z_gt2,
                    s.z_gt5
                );
            }
            None => println!("{}{step}: {} layers", c.model_id, c.layers.len()),
        }
    }
}

fn analyze(a: &AnalyzeArgs) -> Result<(), Failure> {
    let cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => config_from_flags(a)?,
    };
    let report = run_pipeline(&cfg)?;
    let written = emit_report(&report, &cfg.formats, cfg.output_path())?;
    print_summary(&report);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn tokens_tensor(tokens: &[usize]) -> Result<Tensor, Failure> {
    Ok(Tensor::from_i64(
        vec![tokens.len()],
        tokens.iter().map(|&t| t as i64).collect(),
    )?)
}

fn gen_fixture(g: &GenArgs) -> Result<(), Failure> {
    fs::create_dir_all(&g.out).map_err(|e| io_failure(&g.out, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, t: &Tensor| -> Result<(), Failure> {
        let p = g.out.join(name);
        write_tensor(t, &p)?;
        written.push(p);
        Ok(())
    };
    match g.kind {
        FixtureKind::Hmm => {
            if !(0.0..=1.0).contains(&g.stay) {
                return Err(Failure::Validation("--stay must lie in [0, 1]".into()));
            }
            if g.states == 0 || g.alphabet == 0 {
                return Err(Failure::Validation("--states and --alphabet must be positive".into()));
            }
            let spec = HmmSpec::random(g.states, g.alphabet, g.stay, g.seed);
            let s = gen_hmm(&spec, g.length, g.seed.wrapping_add(1))?;
            let states = embed_beliefs(&s.beliefs, g.d, g.noise, g.seed.wrapping_add(2));
            put("tokens.pgat", &tokens_tensor(&s.tokens)?)?;
            put("hidden_path.pgat", &tokens_tensor(&s.hidden_path)?)?;
            put("beliefs.pgat", &Tensor::from_matrix_f64(&s.beliefs))?;
            put("states.pgat", &Tensor::from_matrix_f32(&states))?;
            let meta = json!({
                "kind": "hmm",
                "seed": g.seed,
                "length": g.length,
                "d": g.d,
                "noise": g.noise,
                "spec": spec,
            });
            write_json(&g.out.join("fixture.json"), &meta)?;
        }
        FixtureKind::Markov => {
            let s = gen_markov(g.order, g.alphabet, g.length, g.seed)?;
            let beliefs = s.beliefs();
            let states = embed_beliefs(&beliefs, g.d, g.noise, g.seed.wrapping_add(2));
            put("tokens.pgat", &tokens_tensor(&s.tokens)?)?;
            put("context_ids.pgat", &tokens_tensor(&s.context_ids)?)?;
            put("beliefs.pgat", &Tensor::from_matrix_f64(&beliefs))?;
            put("states.pgat", &Tensor::from_matrix_f32(&states))?;
            let meta = json!({
                "kind": "markov",
                "seed": g.seed,
                "order": g.order,
                "alphabet": g.alphabet,
                "length": g.length,
                "d": g.d,
                "noise": g.noise,
                "distinct_contexts": s.distinct_contexts(),
            });
            write_json(&g.out.join("fixture.json"), &meta)?;
        }
        FixtureKind::Planted => {
            let mut spec = match g.preset {
                Preset::Aligned => SyntheticModelSpec::aligned(g.n, g.d, g.k, g.layers, g.seed),
                Preset::Masked => SyntheticModelSpec::masked_band(g.n, g.d, g.k, g.layers, g.seed),
            };
            if let Some(v) = g.vocab {
                spec.vocab = v;
            }
            if let Some(id) = &g.model_id {
                spec.model_id = id.clone();
            }
            spec.checkpoint_step = g.step;
            let model = synthetic_model(&spec)?;
            let (manifest, readout) = model.write(&g.out)?;
            written.push(manifest);
            written.push(readout);
        }
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn convert(c: &ConvertArgs) -> Result<(), Failure> {
    let report = load_report(&c.report)?;
    let (text, default_name) = match c.to {
        ConvertTo::Csv => (report_to_csv(&report), CSV_FILE),
        ConvertTo::Svg => (report_to_svg(&report), SVG_FILE),
    };
    let out = c.out.clone().unwrap_or_else(|| {
        c.report
            .parent()
            .map(|p| p.join(default_name))
            .unwrap_or_else(|| PathBuf::from(default_name))
    });
    fs::write(&out, text).map_err(|e| io_failure(&out, e))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_workers()?;
    match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Fixtures {
            command: FixturesCommand::Gen(g),
        } => gen_fixture(&g),
        Command::Report {
            command: ReportCommand::Convert(c),
        } => convert(&c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Io(m) => eprintln!("I/O error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
