//! Subcommands. Each reads its inputs, delegates to the library and writes
//! plain files into the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sparse_demand::dgp::{gen_dataset, DgpConfig};
use sparse_demand::elasticity::{posterior_elasticity, ElasticityRequest};
use sparse_demand::inversion::{contraction_invert, restricted_invert, FixedParams, InversionOptions, SparsePattern};
use sparse_demand::mcmc::{fit_nodes, run_chain_with, summarize};
use sparse_demand::Dataset;

use crate::config::FitConfig;
use crate::dataset_io::{load_dataset, save_dataset};
use crate::draws_io::{read_draws, write_draws, DrawsIndex};
use crate::error::{CliError, Result};
use crate::manifest::{acceptance_rates, file_sha256, sha256_hex, RunManifest};
use crate::output::{num, write_csv, write_elasticities, write_summaries, XI_FILE};

pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Parser)]
#[command(name = "sparse-demand", version, about = "Sparse-shock random-coefficients logit demand")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its truth sidecar
    Simulate(SimulateArgs),
    /// Run the sampler and write draws, summaries and a manifest
    Fit(FitArgs),
    /// Recompute summaries from stored draws
    Summarize(SummarizeArgs),
    /// Posterior price elasticities from stored draws
    Elasticity(ElasticityArgs),
    /// Recover demand shocks from observed shares
    Invert(InvertArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<FitConfig> {
        match &self.config {
            Some(p) => FitConfig::load(p),
            None => Ok(FitConfig::default()),
        }
    }

    fn out_or(&self, fallback: Option<&Path>) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| fallback.map(Path::to_path_buf))
            .ok_or_else(|| CliError::Input("--out is required".into()))?;
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Simulation design, 1 to 4
    #[arg(long)]
    pub design: Option<u8>,
    /// Products per market
    #[arg(long = "J")]
    pub products: Option<usize>,
    /// Number of markets
    #[arg(long = "T")]
    pub markets: Option<usize>,
    /// Consumers per market
    #[arg(long)]
    pub consumers: Option<u64>,
    #[arg(long)]
    pub replication: Option<u64>,
    /// Round expected shares instead of simulating individual choices
    #[arg(long)]
    pub expected_counts: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV (overrides `data` in the configuration)
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory of a previous fit
    #[arg(long)]
    pub fit: PathBuf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ElasticityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub fit: PathBuf,
    /// Dataset the fit was run on
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Market ids to evaluate (comma separated); all markets by default
    #[arg(long, value_delimiter = ',')]
    pub markets: Option<Vec<String>>,
    /// Own-price elasticities only
    #[arg(long)]
    pub own_only: bool,
    /// First retained draw to use
    #[arg(long)]
    pub from: Option<usize>,
    /// One past the last retained draw to use
    #[arg(long)]
    pub to: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Take beta_bar and r at their posterior means from this fit
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Mean coefficients, one per characteristic (comma separated)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Random-coefficient standard deviations (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// With --fit: restrict products whose posterior slab probability is
    /// below this threshold to a common shock
    #[arg(long)]
    pub sparse_below: Option<f64>,
}

/// Runs `body` on a pool of `threads` workers, or the global pool when 0.
fn with_threads<T: Send>(threads: usize, body: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return body();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Input(format!("cannot start {threads} threads: {e}")))?;
    pool.install(body)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a).map(|_| ()),
        Command::Summarize(a) => summarize_cmd(&a),
        Command::Elasticity(a) => elasticity(&a),
        Command::Invert(a) => invert(&a),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let s = &cfg.simulate;
    let design = args.design.or(s.design).unwrap_or(1);
    let mut dgp = DgpConfig::new(
        design,
        args.products.or(s.products).unwrap_or(5),
        args.markets.or(s.markets).unwrap_or(25),
        args.common.seed.unwrap_or(0),
    );
    dgp.consumers = args.consumers.or(s.consumers).unwrap_or(dgp.consumers);
    dgp.replication = args.replication.or(s.replication).unwrap_or(0);
    dgp.expected_counts = args.expected_counts || s.expected_counts.unwrap_or(false);
    dgp.beta_p = s.beta_p.unwrap_or(dgp.beta_p);
    dgp.beta_w = s.beta_w.unwrap_or(dgp.beta_w);
    dgp.sigma = s.sigma.unwrap_or(dgp.sigma);
    dgp.xi_bar = s.xi_bar.unwrap_or(dgp.xi_bar);
    let out = args.common.out_or(None)?;
    let (data, truth) = with_threads(args.common.threads, || Ok(gen_dataset(&dgp)?))?;
    save_dataset(&out.join(DATA_FILE), &data)?;
    let path = out.join(TRUTH_FILE);
    let body = serde_json::json!({ "config": dgp, "truth": truth });
    let text = serde_json::to_string_pretty(&body).map_err(|e| CliError::json(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}

/// Result of a fit, for callers driving the CLI as a library.
pub struct FitOutput {
    pub out: PathBuf,
    pub manifest: RunManifest,
}

pub fn fit(args: &FitArgs) -> Result<FitOutput> {
    let started = Instant::now();
    let cfg = args.common.config()?;
    let data_path = args
        .data
        .clone()
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| CliError::Input("no dataset: pass --data or set `data` in the configuration".into()))?;
    let data = load_dataset(&data_path, &cfg.random_coefficients())?;
    let mut resolved = cfg.resolve(&data)?;
    if let Some(seed) = args.common.seed {
        resolved.mcmc.seed = seed;
    }
    resolved.mcmc.threads = args.common.threads;
    let out = args.common.out_or(None)?;

    let nodes = fit_nodes(&data, &resolved.mcmc)?;
    let samples = with_threads(args.common.threads, || {
        Ok(run_chain_with(&data, &resolved.prior, &resolved.mcmc, &nodes, None)?)
    })?;

    let index = DrawsIndex::new(&samples, &data, &resolved.price);
    let mut files = write_draws(&out, &samples, &nodes, index.clone())?;
    files.extend(write_summaries(&out, &samples, &index)?.into_iter().map(String::from));

    // The thread count never changes results, so it is left out of the hash.
    let mut hashed = resolved.clone();
    hashed.mcmc.threads = 0;
    let config_json = serde_json::to_vec(&hashed).map_err(|e| CliError::json(&out, e))?;
    let mut manifest = RunManifest {
        command: "fit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: resolved.mcmc.seed,
        threads: args.common.threads,
        config_sha256: sha256_hex(&config_json),
        data_sha256: file_sha256(&data_path)?,
        wall_clock_seconds: 0.0,
        acceptance: acceptance_rates(&samples.acceptance),
        burn_in_acceptance: acceptance_rates(&samples.burn_in_acceptance),
        outputs: Default::default(),
    };
    manifest.hash_outputs(&out, &files)?;
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(&out)?;
    Ok(FitOutput { out, manifest })
}

pub fn summarize_cmd(args: &SummarizeArgs) -> Result<()> {
    let (samples, _, index) = read_draws(&args.fit)?;
    if samples.draws == 0 {
        return Err(CliError::Input("no retained draws to summarize".into()));
    }
    let out = args.common.out_or(Some(&args.fit))?;
    write_summaries(&out, &samples, &index)?;
    Ok(())
}

fn load_for_fit(data: Option<&PathBuf>, cfg: &FitConfig, index: &DrawsIndex) -> Result<Dataset> {
    let path = data
        .cloned()
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| CliError::Input("no dataset: pass --data or set `data` in the configuration".into()))?;
    let data = load_dataset(&path, &index.rc_names)?;
    let ids: Vec<&str> = data.markets().iter().map(|m| m.id()).collect();
    if ids != index.market_ids.iter().map(String::as_str).collect::<Vec<_>>()
        || data.characteristic_names() != index.characteristic_names.as_slice()
    {
        return Err(CliError::Input(format!(
            "{} does not match the markets and characteristics of the stored fit",
            path.display()
        )));
    }
    Ok(data)
}

pub fn elasticity(args: &ElasticityArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let (samples, nodes, index) = read_draws(&args.fit)?;
    let data = load_for_fit(args.data.as_ref(), &cfg, &index)?;
    let price_col = data
        .column_index(&index.price)
        .ok_or_else(|| CliError::Input(format!("price column '{}' not in dataset", index.price)))?;
    let markets = match &args.markets {
        Some(ids) => Some(
            ids.iter()
                .map(|id| {
                    index
                        .market_ids
                        .iter()
                        .position(|m| m == id)
                        .ok_or_else(|| CliError::Input(format!("unknown market '{id}'")))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let draws = match (args.from, args.to) {
        (None, None) => None,
        (from, to) => Some(from.unwrap_or(0)..to.unwrap_or(samples.draws)),
    };
    let request = ElasticityRequest {
        markets,
        pairs: None,
        price_col,
        draws,
    };
    let out = args.common.out_or(Some(&args.fit))?;
    let result = with_threads(args.common.threads, || {
        if !args.own_only {
            return Ok(posterior_elasticity(&samples, &data, &nodes, &request)?);
        }
        // Per-market own pairs, since markets may differ in size.
        let targets = request.markets.clone().unwrap_or_else(|| (0..data.market_count()).collect());
        let mut merged: Option<sparse_demand::elasticity::PosteriorElasticity> = None;
        for t in targets {
            let j = data.market(t).products();
            let one = ElasticityRequest {
                markets: Some(vec![t]),
                pairs: Some((0..j).map(|k| (k, k)).collect()),
                ..request.clone()
            };
            let part = posterior_elasticity(&samples, &data, &nodes, &one)?;
            merged = Some(match merged {
                None => part,
                Some(mut acc) => {
                    let (n0, n1) = (acc.entries.len() as f64, part.entries.len() as f64);
                    acc.own_mean = (acc.own_mean * n0 + part.own_mean * n1) / (n0 + n1);
                    acc.own_sd = (acc.own_sd * n0 + part.own_sd * n1) / (n0 + n1);
                    acc.entries.extend(part.entries);
                    acc
                }
            });
        }
        merged.ok_or_else(|| CliError::Input("no markets selected".into()))
    })?;
    write_elasticities(&out, &result, &index)?;
    Ok(())
}

pub fn invert(args: &InvertArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let out = args.common.out_or(None)?;
    let (data, beta, sigma, gamma_mean) = match &args.fit {
        Some(fit) => {
            let (samples, _, index) = read_draws(fit)?;
            let data = load_for_fit(args.data.as_ref(), &cfg, &index)?;
            let s = summarize(&samples);
            let beta: Vec<f64> = s.beta_bar.iter().map(|p| p.mean).collect();
            let sigma: Vec<f64> = s.sigma.iter().map(|p| p.mean).collect();
            (data, beta, sigma, Some(s.gamma_mean))
        }
        None => {
            let path = args
                .data
                .clone()
                .or_else(|| cfg.data.clone())
                .ok_or_else(|| CliError::Input("no dataset: pass --data".into()))?;
            let data = load_dataset(&path, &cfg.random_coefficients())?;
            let beta = args
                .beta
                .clone()
                .ok_or_else(|| CliError::Input("pass --fit, or --beta and --sigma".into()))?;
            let sigma = args.sigma.clone().unwrap_or_else(|| vec![0.0; data.d_rc()]);
            (data, beta, sigma, None)
        }
    };
    if args.beta.is_some() && args.fit.is_some() {
        return Err(CliError::Input("--beta and --fit are mutually exclusive".into()));
    }
    if beta.len() != data.d_x() || sigma.len() != data.d_rc() {
        return Err(CliError::Input(format!(
            "need {} mean coefficients and {} standard deviations",
            data.d_x(),
            data.d_rc()
        )));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) && data.d_rc() > 0 {
        return Err(CliError::Input("random-coefficient standard deviations must be positive".into()));
    }
    if args.sparse_below.is_some() && gamma_mean.is_none() {
        return Err(CliError::Input("--sparse-below needs --fit".into()));
    }
    let r: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
    let mut mcmc = cfg.resolve(&data)?.mcmc;
    if let Some(seed) = args.common.seed {
        mcmc.seed = seed;
    }
    let nodes = match &args.fit {
        Some(fit) => read_draws(fit)?.1,
        None => fit_nodes(&data, &mcmc)?,
    };
    let params = FixedParams { beta_bar: &beta, r: &r };
    let opts = InversionOptions::default();
    let mut rows = Vec::new();
    for (t, market) in data.markets().iter().enumerate() {
        let shares = market.observed_shares();
        let sparse: Vec<usize> = match (&gamma_mean, args.sparse_below) {
            (Some(g), Some(cut)) => (0..market.products()).filter(|&j| g[t][j] < cut).collect(),
            _ => Vec::new(),
        };
        let xi = if sparse.is_empty() {
            contraction_invert(market, &shares, data.rc_columns(), params, &nodes, opts)?
        } else {
            let pattern = SparsePattern::new(market.products(), &sparse)?;
            restricted_invert(market, &shares, &pattern, data.rc_columns(), params, &nodes, opts, None)?.xi
        };
        for (j, product) in market.product_ids().iter().enumerate() {
            let flag = if sparse.contains(&j) { "1" } else { "0" };
            rows.push(vec![market.id().to_string(), product.clone(), num(xi[j]), flag.to_string()]);
        }
    }
    write_csv(&out.join(XI_FILE), &["market_id", "product_id", "xi", "sparse"], rows)
}
