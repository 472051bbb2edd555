use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use polar_recon::analysis::{
    binary_entropy, efficiency_yield, epsilon_bound, epsilon_sweep, total_efficiency, yield_gamma, yield_sweep,
    BoundInputs,
};
use polar_recon::construction::{build_library, DEFAULT_DESIGN_BUDGET, DEFAULT_FIDELITY};
use polar_recon::harness::{
    json_string, prepare_resources, qber_grid, run_campaign, run_trial_traced, session_params, CampaignConfig,
    CSV_HEADER,
};
use polar_recon::ldpc::{CodeRegistry, DEFAULT_PEG_DEPTH};
use polar_recon::MetricMode;

#[derive(Parser)]
#[command(name = "polar-recon", version, about = "Polar/LDPC information reconciliation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build frozen-set library files for a QBER grid.
    Construct(ConstructArgs),
    /// Run a Monte-Carlo campaign and write one CSV row per QBER.
    Run(RunArgs),
    /// Evaluate the closed-form bounds.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// Run one seeded trial and dump its transcript.
    DecodeTrace(TraceArgs),
    /// Design PEG codes for the acknowledgment phase.
    GenLdpc(GenLdpcArgs),
}

/// QBERs as a comma list (`0.01,0.02`) or a range (`0.01:0.12:0.01`).
fn parse_qbers(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse()).collect::<Result<_, _>>()?;
        return Ok(qber_grid(nums[0], nums[1], nums[2])?);
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad qber {p:?}")))
        .collect()
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad integer {p:?}")))
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?}")))
        .collect()
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long, default_value_t = 1 << 20)]
    n: usize,
    #[arg(long, default_value = "0.01:0.12:0.01")]
    qbers: String,
    /// Union-bound budget for the information set.
    #[arg(long, default_value_t = DEFAULT_DESIGN_BUDGET)]
    budget: f64,
    #[arg(long, default_value_t = DEFAULT_FIDELITY)]
    fidelity: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Values here override the config file.
#[derive(Args, Default)]
struct CampaignOverrides {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    l: Option<usize>,
    /// Comma list or `from:to:step`.
    #[arg(long)]
    qbers: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    channel_qber: Option<f64>,
    /// `approx` or `exact`.
    #[arg(long)]
    metric: Option<String>,
}

impl CampaignOverrides {
    fn apply(&self, config: Option<&PathBuf>) -> Result<CampaignConfig> {
        let mut cfg = match config {
            Some(path) => CampaignConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => CampaignConfig::new(self.n.unwrap_or(1 << 20), 0.02),
        };
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.l {
            cfg.l = v;
        }
        if let Some(q) = &self.qbers {
            cfg.qber_list = Some(parse_qbers(q)?);
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.library {
            cfg.frozen_library = Some(v.clone());
        }
        if let Some(v) = &self.registry {
            cfg.ldpc_registry = Some(v.clone());
        }
        if let Some(v) = self.budget {
            cfg.design_budget = v;
        }
        if let Some(v) = self.channel_qber {
            cfg.channel_qber = Some(v);
        }
        if let Some(m) = &self.metric {
            cfg.metric = match m.as_str() {
                "approx" => MetricMode::Approx,
                "exact" => MetricMode::Exact,
                other => bail!("unknown metric mode {other:?}"),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON campaign config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: CampaignOverrides,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; stdout when absent and the config names none.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the rows as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: CampaignOverrides,
    #[arg(long, default_value_t = 0)]
    trial_index: u64,
    /// Transcript destination.
    #[arg(long)]
    transcript: PathBuf,
}

#[derive(Args)]
struct GenLdpcArgs {
    /// Code length; the sub-block length of the campaign.
    #[arg(long, default_value_t = 1 << 15)]
    cols: usize,
    #[arg(long, default_value = "0.01:0.12:0.01")]
    qbers: String,
    /// Syndrome budget relative to H2(qber); QBER-dependent default.
    #[arg(long)]
    efficiency: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct BoundArgs {
    #[arg(long, default_value_t = 0.01)]
    eps_f: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_a: f64,
    #[arg(long, default_value_t = 16)]
    l: usize,
    #[arg(long, default_value_t = 32)]
    d: u32,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 1 << 20)]
    n: usize,
    #[arg(long, default_value_t = 0.02)]
    qber: f64,
    /// Forward-phase efficiency.
    #[arg(long, default_value_t = 1.1)]
    f_fwd: f64,
    /// Acknowledgment-phase efficiency.
    #[arg(long, default_value_t = 1.2)]
    f_ack: f64,
    /// Failed sub-blocks.
    #[arg(long, default_value_t = 0)]
    r: usize,
}

impl BoundArgs {
    fn inputs(&self) -> BoundInputs {
        BoundInputs {
            eps_f: self.eps_f,
            eps_a: self.eps_a,
            list_size: self.l,
            crc_bits: self.d,
            sub_blocks: self.m,
            n: self.n,
            f_fwd: self.f_fwd,
            f_ack: self.f_ack,
            qber: self.qber,
        }
    }
}

#[derive(Subcommand)]
enum Analyze {
    /// Correctness bound, efficiency, yield and entropy at one point.
    Point(BoundArgs),
    /// Correctness bound over CRC widths for several sub-block counts.
    Epsilon {
        #[command(flatten)]
        base: BoundArgs,
        #[arg(long, default_value = "1,8,32,128")]
        ms: String,
        #[arg(long, default_value_t = 4)]
        d_min: u32,
        #[arg(long, default_value_t = 40)]
        d_max: u32,
    },
    /// Efficiency yield over block lengths for several failure rates.
    Yield {
        #[command(flatten)]
        base: BoundArgs,
        #[arg(long, default_value = "1048576,16777216,134217728,1073741824")]
        lengths: String,
        #[arg(long, default_value = "0.001,0.01,0.1")]
        eps_fs: String,
    },
}

fn construct(args: ConstructArgs) -> Result<()> {
    let qbers = parse_qbers(&args.qbers)?;
    let lib = build_library(args.n, &qbers, args.budget, args.fidelity)?;
    lib.save(&args.out)?;
    println!("qber,n,k,f_fwd");
    for e in lib.entries() {
        let h = binary_entropy(e.qber)?;
        let f = (args.n - e.frozen.k()) as f64 / (args.n as f64 * h);
        println!("{},{},{},{:.6}", e.qber, args.n, e.frozen.k(), f);
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = args.overrides.apply(args.config.as_ref())?;
    if let Some(out) = args.output {
        cfg.output = Some(out);
    }
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let res = prepare_resources(&cfg)?;
    let mut sink: Box<dyn Write> = match &cfg.output {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "{CSV_HEADER}")?;
    sink.flush()?;
    let rows = run_campaign(&cfg, &res, workers, |row| {
        writeln!(sink, "{}", row.csv_line())?;
        sink.flush()?;
        Ok(())
    })?;
    if let Some(path) = args.json {
        std::fs::write(&path, json_string(&rows)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn decode_trace(args: TraceArgs) -> Result<()> {
    let cfg = args.overrides.apply(args.config.as_ref())?;
    let res = prepare_resources(&cfg)?;
    let qber = cfg.qbers()?[0];
    let params = session_params(&cfg, &res, qber)?;
    let channel = cfg.channel_qber.unwrap_or(qber);
    let (t, transcript) = run_trial_traced(&params, cfg.seed, args.trial_index, channel)?;
    std::fs::write(&args.transcript, &transcript)
        .with_context(|| format!("writing {}", args.transcript.display()))?;
    let summary = serde_json::json!({
        "qber": qber,
        "channel_qber": channel,
        "seed": cfg.seed,
        "trial_index": t.trial_index,
        "k": params.frozen.k(),
        "r": t.r,
        "fer_failed": t.fer_failed,
        "ldpc_converged": t.ldpc_converged,
        "crc_false_pass": t.crc_false_pass,
        "leaked_bits": t.leaked_bits,
        "transcript_bytes": transcript.len(),
        "wall_time_ms": t.wall_time.as_secs_f64() * 1e3,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn gen_ldpc(args: GenLdpcArgs) -> Result<()> {
    let qbers = parse_qbers(&args.qbers)?;
    let reg = CodeRegistry::design(args.cols, &qbers, args.efficiency, args.seed)?;
    reg.save(&args.out)?;
    println!("name,threshold,rows,cols,rate,efficiency,girth_depth");
    for c in reg.codes() {
        println!(
            "{},{},{},{},{:.6},{:.6},{}",
            c.name,
            c.threshold,
            c.matrix.rows(),
            c.matrix.cols(),
            c.matrix.rate(),
            c.efficiency(c.threshold)?,
            DEFAULT_PEG_DEPTH
        );
    }
    Ok(())
}

fn analyze(what: Analyze) -> Result<()> {
    match what {
        Analyze::Point(a) => {
            let b = a.inputs();
            let f = total_efficiency(&b, a.r)?;
            let summary = serde_json::json!({
                "h2": binary_entropy(a.qber)?,
                "epsilon": epsilon_bound(&b)?,
                "total_efficiency": f,
                "efficiency_yield": efficiency_yield(&b, a.r)?,
                "gamma": yield_gamma(b.eps_f, f, a.qber)?,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Analyze::Epsilon { base, ms, d_min, d_max } => {
            let points = epsilon_sweep(&base.inputs(), &parse_usize_list(&ms)?, d_min..=d_max)?;
            println!("m,d,epsilon");
            for p in points {
                println!("{},{},{:e}", p.sub_blocks, p.crc_bits, p.epsilon);
            }
        }
        Analyze::Yield { base, lengths, eps_fs } => {
            let points = yield_sweep(&base.inputs(), &parse_usize_list(&lengths)?, &parse_f64_list(&eps_fs)?, base.r)?;
            println!("n,eps_f,efficiency_yield");
            for p in points {
                println!("{},{},{:.6}", p.n, p.eps_f, p.efficiency_yield);
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Construct(a) => construct(a),
        Command::Run(a) => run(a),
        Command::Analyze { what } => analyze(what),
        Command::DecodeTrace(a) => decode_trace(a),
        Command::GenLdpc(a) => gen_ldpc(a),
    }
}
