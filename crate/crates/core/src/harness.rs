//! Monte-Carlo campaigns: sifted-key simulation, per-trial protocol runs
//! checked against ground truth, aggregation and result files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{binary_entropy, measured_efficiency, yield_gamma};
use crate::bits::BitBlock;
use crate::construction::{build_library, qber_key, FrozenLibrary, DEFAULT_DESIGN_BUDGET, DEFAULT_FIDELITY};
use crate::crc::CrcSpec;
use crate::decoder::MetricMode;
use crate::error::{invalid, Error, Result};
use crate::ldpc::{select_code, CodeRegistry, DEFAULT_MAX_ITERS};
use crate::protocol::{
    alice_ack, alice_forward, bob_ack, bob_assemble, bob_forward, leakage, write_transcript, SessionParams,
};
use crate::rng::{stream, Role};

/// `k_a` uniform, `k_b = k_a ⊕ e` with `e` i.i.d. Bernoulli(`qber`).
pub fn gen_sifted_pair<R: Rng + ?Sized, S: Rng + ?Sized>(
    n: usize,
    qber: f64,
    key_rng: &mut R,
    noise_rng: &mut S,
) -> Result<(BitBlock, BitBlock)> {
    if !(0.0..0.5).contains(&qber) {
        return invalid(format!("qber {qber} outside [0, 0.5)"));
    }
    let k_a = BitBlock::random(n, key_rng);
    let mut k_b = k_a.clone();
    if qber > 0.0 {
        for j in 0..n {
            if noise_rng.gen_bool(qber) {
                k_b.flip(j);
            }
        }
    }
    Ok((k_a, k_b))
}

/// CRC named by preset or given by parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CrcChoice {
    Preset(String),
    Params {
        width: u32,
        poly: u64,
        init: u64,
        xorout: u64,
        reflected: bool,
    },
}

fn default_sub_blocks() -> usize {
    32
}
fn default_crc_bits() -> u32 {
    32
}
fn default_list_size() -> usize {
    16
}
fn default_trials() -> usize {
    500
}
fn default_budget() -> f64 {
    DEFAULT_DESIGN_BUDGET
}
fn default_fidelity() -> usize {
    DEFAULT_FIDELITY
}
fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

/// Campaign configuration, readable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub n: usize,
    #[serde(default = "default_sub_blocks")]
    pub m: usize,
    #[serde(default = "default_crc_bits")]
    pub d: u32,
    #[serde(default = "default_list_size")]
    pub l: usize,
    #[serde(default)]
    pub qber: Option<f64>,
    #[serde(default)]
    pub qber_list: Option<Vec<f64>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Directory of frozen-library files; missing entries are built and
    /// written back.
    #[serde(default)]
    pub frozen_library: Option<PathBuf>,
    /// Directory of the LDPC registry; missing codes are designed and
    /// written back.
    #[serde(default)]
    pub ldpc_registry: Option<PathBuf>,
    /// Defaults to CRC-32 when `d = 32`, otherwise the generic width-`d` CRC.
    #[serde(default)]
    pub crc: Option<CrcChoice>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Union-bound budget used to select frozen sets.
    #[serde(default = "default_budget")]
    pub design_budget: f64,
    #[serde(default = "default_fidelity")]
    pub fidelity: usize,
    #[serde(default)]
    pub ldpc_seed: u64,
    #[serde(default)]
    pub metric: MetricMode,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Channel QBER when it differs from the design QBER.
    #[serde(default)]
    pub channel_qber: Option<f64>,
}

impl CampaignConfig {
    /// Config with defaults for everything but `n` and one QBER.
    pub fn new(n: usize, qber: f64) -> Self {
        CampaignConfig {
            n,
            m: default_sub_blocks(),
            d: default_crc_bits(),
            l: default_list_size(),
            qber: Some(qber),
            qber_list: None,
            trials: default_trials(),
            seed: 0,
            frozen_library: None,
            ldpc_registry: None,
            crc: None,
            output: None,
            design_budget: DEFAULT_DESIGN_BUDGET,
            fidelity: DEFAULT_FIDELITY,
            ldpc_seed: 0,
            metric: MetricMode::default(),
            max_iters: DEFAULT_MAX_ITERS,
            channel_qber: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `qber_list` if given, else the single `qber`.
    pub fn qbers(&self) -> Result<Vec<f64>> {
        let list = match (&self.qber_list, self.qber) {
            (Some(list), _) if !list.is_empty() => list.clone(),
            (_, Some(q)) => vec![q],
            _ => return Err(Error::Config("neither qber nor qber_list is set".into())),
        };
        if let Some(&q) = list.iter().find(|&&q| !(q > 0.0 && q < 0.5)) {
            return Err(Error::Config(format!("qber {q} outside (0, 0.5)")));
        }
        Ok(list)
    }

    pub fn crc_spec(&self) -> Result<CrcSpec> {
        let spec = match &self.crc {
            None if self.d == 32 => CrcSpec::crc32(),
            None => CrcSpec::generic(self.d)?,
            Some(CrcChoice::Preset(name)) => CrcSpec::preset(name)?,
            Some(CrcChoice::Params {
                width,
                poly,
                init,
                xorout,
                reflected,
            }) => CrcSpec::new(*width, *poly, *init, *xorout, *reflected)?,
        };
        if spec.width != self.d {
            return Err(Error::Config(format!("CRC width {} but d = {}", spec.width, self.d)));
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.m == 0 || !self.n.is_multiple_of(self.m) {
            return Err(Error::Config(format!("m = {} does not divide n = {}", self.m, self.n)));
        }
        if let Some(q) = self.channel_qber {
            if !(0.0..0.5).contains(&q) {
                return Err(Error::Config(format!("channel qber {q} outside [0, 0.5)")));
            }
        }
        self.qbers()?;
        self.crc_spec()?;
        Ok(())
    }
}

/// Frozen library and LDPC codes for a campaign.
#[derive(Clone, Debug)]
pub struct Resources {
    pub library: FrozenLibrary,
    pub registry: CodeRegistry,
}

/// Loads cached resources, building whatever the campaign lacks. Built
/// entries are written back when a directory is configured.
pub fn prepare_resources(cfg: &CampaignConfig) -> Result<Resources> {
    cfg.validate()?;
    let qbers = cfg.qbers()?;
    let mut library = match &cfg.frozen_library {
        Some(dir) => FrozenLibrary::load(dir, cfg.n)?,
        None => FrozenLibrary::new(cfg.n),
    };
    let missing: Vec<f64> = qbers
        .iter()
        .copied()
        .filter(|&q| library.get(q).is_none_or(|e| e.target_fer != cfg.design_budget))
        .collect();
    if !missing.is_empty() {
        log::info!("constructing frozen sets for {missing:?} at n = {}", cfg.n);
        let built = build_library(cfg.n, &missing, cfg.design_budget, cfg.fidelity)?;
        if let Some(dir) = &cfg.frozen_library {
            built.save(dir)?;
        }
        for e in built.entries() {
            library.insert(e.clone())?;
        }
    }

    let sub = cfg.n / cfg.m;
    let loaded = match &cfg.ldpc_registry {
        Some(dir) if dir.join("registry.json").exists() => CodeRegistry::load(dir)?,
        _ => CodeRegistry::new(),
    };
    let mut registry = CodeRegistry::new();
    registry.margin = loaded.margin;
    for code in loaded.codes() {
        if code.matrix.cols() == sub {
            registry.push(code.clone());
        }
    }
    let missing: Vec<f64> = qbers
        .iter()
        .copied()
        .filter(|&q| select_code(q, &registry).is_err())
        .collect();
    if !missing.is_empty() {
        log::info!("designing LDPC codes of length {sub} for {missing:?}");
        let designed = CodeRegistry::design(sub, &missing, None, cfg.ldpc_seed)?;
        let mut all = loaded.clone();
        for code in designed.codes() {
            registry.push(code.clone());
            all.push(code.clone());
        }
        if let Some(dir) = &cfg.ldpc_registry {
            all.save(dir)?;
        }
    }
    Ok(Resources { library, registry })
}

/// Session parameters for one QBER of the campaign.
pub fn session_params(cfg: &CampaignConfig, res: &Resources, qber: f64) -> Result<SessionParams> {
    let entry = res
        .library
        .get(qber)
        .ok_or_else(|| Error::Config(format!("no frozen set for qber {qber} at n = {}", cfg.n)))?;
    let code = select_code(qber, &res.registry)?;
    let mut params = SessionParams::new(
        cfg.l,
        cfg.m,
        qber,
        Arc::new(entry.frozen.clone()),
        cfg.crc_spec()?,
        code.matrix.clone(),
    )?;
    params.metric = cfg.metric;
    params.max_iters = cfg.max_iters;
    Ok(params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial_index: u64,
    /// The two reconciled keys differ.
    pub fer_failed: bool,
    pub r: usize,
    pub leaked_bits: u64,
    pub ldpc_converged: bool,
    /// Some block passed its CRC with a wrong `U′_i`.
    pub crc_false_pass: bool,
    pub wall_time: Duration,
}

/// Trial `trial_index` of campaign `seed` over a channel of `channel_qber`.
pub fn run_trial(params: &SessionParams, seed: u64, trial_index: u64, channel_qber: f64) -> Result<TrialResult> {
    Ok(run_trial_traced(params, seed, trial_index, channel_qber)?.0)
}

/// [`run_trial`] plus the serialized transcript of the exchange.
pub fn run_trial_traced(
    params: &SessionParams,
    seed: u64,
    trial_index: u64,
    channel_qber: f64,
) -> Result<(TrialResult, Vec<u8>)> {
    let start = Instant::now();
    let (k_a, k_b) = gen_sifted_pair(
        params.n,
        channel_qber,
        &mut stream(seed, trial_index, Role::SiftedKey),
        &mut stream(seed, trial_index, Role::ChannelNoise),
    )?;
    let (fwd, u) = alice_forward(&k_a, params, &mut stream(seed, trial_index, Role::Payload))?;
    let outcome = bob_forward(&k_b, &fwd, params)?;
    let ack = bob_ack(&k_b, &outcome, params)?;
    let (key_a, ldpc_converged) = alice_ack(&k_a, &u, &ack, params)?;
    let key_b = bob_assemble(&k_b, &outcome, params)?;
    let sub = params.sub_len();
    let crc_false_pass = (0..params.sub_blocks).any(|i| {
        let range = i * sub..(i + 1) * sub;
        !outcome.sigma.get(i) && outcome.u_prime.slice(range.clone()) != u.slice(range)
    });
    let result = TrialResult {
        trial_index,
        fer_failed: key_a != key_b,
        r: outcome.r(),
        leaked_bits: leakage(params, &ack).total(),
        ldpc_converged,
        crc_false_pass,
        wall_time: start.elapsed(),
    };
    Ok((result, write_transcript(&fwd, &ack)?))
}

/// Two-sided Wilson score interval for `failures` out of `trials` at
/// normal quantile `z`.
pub fn wilson_interval(failures: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let t = trials as f64;
    let p = failures as f64 / t;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * t)) / (1.0 + z2 / t);
    let half = z / (1.0 + z2 / t) * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// 97.5% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// One campaign row, one per QBER.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub qber: f64,
    pub n: usize,
    pub m: usize,
    pub d: u32,
    pub l: usize,
    pub trials: usize,
    pub k: usize,
    /// Leakage summed over all trials, over `trials · n · H2(qber)`.
    pub f: f64,
    pub fer: f64,
    pub fer_ci_low: f64,
    pub fer_ci_high: f64,
    pub gamma: f64,
    pub mean_r: f64,
    pub leak_bits_total: u64,
}

pub const CSV_HEADER: &str = "qber,n,m,d,l,trials,k,f,fer,fer_ci_low,fer_ci_high,gamma,mean_r,leak_bits_total";

impl AggregateRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.qber,
            self.n,
            self.m,
            self.d,
            self.l,
            self.trials,
            self.k,
            self.f,
            self.fer,
            self.fer_ci_low,
            self.fer_ci_high,
            self.gamma,
            self.mean_r,
            self.leak_bits_total
        )
    }
}

/// Folds trial results (in any order) into a row.
pub fn aggregate(params: &SessionParams, results: &[TrialResult]) -> Result<AggregateRow> {
    if results.is_empty() {
        return invalid("no trials to aggregate");
    }
    let trials = results.len();
    let failures = results.iter().filter(|t| t.fer_failed).count();
    let leak_bits_total: u64 = results.iter().map(|t| t.leaked_bits).sum();
    let r_total: usize = results.iter().map(|t| t.r).sum();
    let f = measured_efficiency(leak_bits_total, trials * params.n, params.qber)?;
    let fer = failures as f64 / trials as f64;
    let (fer_ci_low, fer_ci_high) = wilson_interval(failures, trials, Z_95);
    Ok(AggregateRow {
        qber: params.qber,
        n: params.n,
        m: params.sub_blocks,
        d: params.crc.width,
        l: params.list_size,
        trials,
        k: params.frozen.k(),
        f,
        fer,
        fer_ci_low,
        fer_ci_high,
        gamma: yield_gamma(fer, f, params.qber)?,
        mean_r: r_total as f64 / trials as f64,
        leak_bits_total,
    })
}

/// Mean of the per-trial efficiencies; equals the campaign `f` only when
/// every trial leaks the same amount.
pub fn per_trial_mean_efficiency(params: &SessionParams, results: &[TrialResult]) -> Result<f64> {
    let h = binary_entropy(params.qber)?;
    Ok(results
        .iter()
        .map(|t| t.leaked_bits as f64 / (params.n as f64 * h))
        .sum::<f64>()
        / results.len() as f64)
}

/// Runs every QBER of the campaign on `workers` threads. `on_row` sees each
/// row as soon as its QBER finishes. Results depend only on the config.
pub fn run_campaign(
    cfg: &CampaignConfig,
    res: &Resources,
    workers: usize,
    mut on_row: impl FnMut(&AggregateRow) -> Result<()>,
) -> Result<Vec<AggregateRow>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut rows = Vec::new();
    for q in cfg.qbers()? {
        let params = session_params(cfg, res, q)?;
        let channel = cfg.channel_qber.unwrap_or(q);
        let seed = cfg.seed;
        let results: Result<Vec<TrialResult>> = pool.install(|| {
            (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(&params, seed, t, channel))
                .collect()
        });
        let row = aggregate(&params, &results?)?;
        log::info!(
            "qber {} k {} f {:.4} fer {} mean_r {:.3}",
            row.qber,
            row.k,
            row.f,
            row.fer,
            row.mean_r
        );
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_csv(rows: &[AggregateRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

pub fn csv_string(rows: &[AggregateRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

pub fn json_string(rows: &[AggregateRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

/// Grid of QBERs `from, from + step, …, ≤ to`, rounded to hundredths.
pub fn qber_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && from <= to) {
        return invalid(format!("empty grid {from}:{to}:{step}"));
    }
    let (lo, hi, st) = (qber_key(from), qber_key(to), qber_key(step).max(1));
    Ok((lo..=hi).step_by(st as usize).map(|k| k as f64 / 100.0).collect())
}
