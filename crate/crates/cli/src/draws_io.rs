//! Posterior draws on disk: one CSV per parameter block under `draws/`,
//! the integration nodes, and an `index.json` describing the layout.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sparse_demand::mcmc::{BlockCounters, CalibrationRecord, Diagnostics, KernelParams, PosteriorSamples};
use sparse_demand::{Dataset, RcDraws};

use crate::error::{CliError, Result};
use crate::output::{num, write_csv};

pub const DRAWS_DIR: &str = "draws";
pub const INDEX_FILE: &str = "index.json";
pub const NODES_FILE: &str = "nodes.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawsIndex {
    pub draws: usize,
    pub characteristic_names: Vec<String>,
    pub rc_names: Vec<String>,
    pub price: String,
    pub market_ids: Vec<String>,
    pub product_ids: Vec<Vec<String>>,
    /// Block files in `draws/`, in write order.
    pub files: Vec<String>,
    pub kernel: KernelParams,
    pub burn_in_acceptance: BlockCounters,
    pub acceptance: BlockCounters,
    pub calibration: Vec<CalibrationRecord>,
    pub diagnostics: Diagnostics,
}

impl DrawsIndex {
    pub fn new(samples: &PosteriorSamples, data: &Dataset, price: &str) -> Self {
        let names = data.characteristic_names().to_vec();
        Self {
            draws: samples.draws,
            rc_names: data.rc_columns().iter().map(|&k| names[k].clone()).collect(),
            characteristic_names: names,
            price: price.to_string(),
            market_ids: data.markets().iter().map(|m| m.id().to_string()).collect(),
            product_ids: data.markets().iter().map(|m| m.product_ids().to_vec()).collect(),
            files: Vec::new(),
            kernel: samples.kernel.clone(),
            burn_in_acceptance: samples.burn_in_acceptance,
            acceptance: samples.acceptance,
            calibration: samples.calibration.clone(),
            diagnostics: samples.diagnostics,
        }
    }

    fn product_columns(&self) -> Vec<String> {
        self.market_ids
            .iter()
            .zip(&self.product_ids)
            .flat_map(|(t, ps)| ps.iter().map(move |p| format!("{t}:{p}")))
            .collect()
    }
}

fn block_rows<T: Copy>(values: &[T], width: usize, fmt: impl Fn(T) -> String) -> Vec<Vec<String>> {
    if width == 0 {
        return Vec::new();
    }
    values.chunks(width).map(|row| row.iter().map(|&v| fmt(v)).collect()).collect()
}

/// Writes the draws, nodes and index under `out/draws`; returns the paths
/// written, relative to `out`.
pub fn write_draws(out: &Path, samples: &PosteriorSamples, nodes: &RcDraws, mut index: DrawsIndex) -> Result<Vec<String>> {
    let dir = out.join(DRAWS_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let products = index.product_columns();
    let header = |v: &[String]| v.to_vec();
    let mut blocks: Vec<(&str, Vec<String>, Vec<Vec<String>>)> = vec![
        ("beta_bar.csv", header(&index.characteristic_names), block_rows(&samples.beta_bar, samples.d_x, num)),
        ("r.csv", header(&index.rc_names), block_rows(&samples.r, samples.d_rc, num)),
        ("xi_bar.csv", header(&index.market_ids), block_rows(&samples.xi_bar, samples.markets(), num)),
        ("eta.csv", products.clone(), block_rows(&samples.eta, products.len(), num)),
        ("gamma.csv", products.clone(), block_rows(&samples.gamma, products.len(), |g: u8| g.to_string())),
        ("phi.csv", header(&index.market_ids), block_rows(&samples.phi, samples.markets(), num)),
    ];
    if !samples.tau1_sq.is_empty() {
        blocks.push(("tau1_sq.csv", vec!["tau1_sq".into()], block_rows(&samples.tau1_sq, 1, num)));
    }
    index.files.clear();
    let mut written = Vec::new();
    for (name, head, rows) in blocks {
        let h: Vec<&str> = head.iter().map(String::as_str).collect();
        write_csv(&dir.join(name), &h, rows)?;
        index.files.push(name.to_string());
        written.push(format!("{DRAWS_DIR}/{name}"));
    }
    let node_rows: Vec<Vec<String>> = (0..nodes.count())
        .map(|i| {
            let mut row: Vec<String> = (0..nodes.dim()).map(|k| num(nodes.nodes()[(i, k)])).collect();
            row.push(num(nodes.weights()[i]));
            row
        })
        .collect();
    let mut node_header: Vec<&str> = index.rc_names.iter().map(String::as_str).collect();
    node_header.push("weight");
    write_csv(&dir.join(NODES_FILE), &node_header, node_rows)?;
    written.push(format!("{DRAWS_DIR}/{NODES_FILE}"));

    let path = dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).map_err(|e| CliError::json(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    written.push(format!("{DRAWS_DIR}/{INDEX_FILE}"));
    Ok(written)
}

fn read_matrix(path: &Path, expect_cols: usize) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let width = reader.headers().map_err(|e| CliError::csv(path, e))?.len();
    if width != expect_cols {
        return Err(CliError::Input(format!(
            "{}: {width} columns, index expects {expect_cols}",
            path.display()
        )));
    }
    reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| CliError::csv(path, e))
        })
        .collect()
}

fn parse_block<T>(path: &Path, width: usize, draws: usize, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let rows = if width == 0 { Vec::new() } else { read_matrix(path, width)? };
    if width > 0 && rows.len() != draws {
        return Err(CliError::Input(format!(
            "{}: {} rows, index says {draws} draws",
            path.display(),
            rows.len()
        )));
    }
    rows.iter()
        .flatten()
        .map(|v| parse(v).ok_or_else(|| CliError::Input(format!("{}: bad value '{v}'", path.display()))))
        .collect()
}

fn read_index(dir: &Path) -> Result<DrawsIndex> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(&path, e))
}

/// The draws directory of a fit output, accepting either the fit directory
/// or `draws/` itself.
pub fn draws_dir(fit: &Path) -> PathBuf {
    if fit.join(INDEX_FILE).exists() {
        fit.to_path_buf()
    } else {
        fit.join(DRAWS_DIR)
    }
}

/// Reads back what [`write_draws`] wrote.
pub fn read_draws(fit: &Path) -> Result<(PosteriorSamples, RcDraws, DrawsIndex)> {
    let dir = draws_dir(fit);
    let index = read_index(&dir)?;
    let counts: Vec<usize> = index.product_ids.iter().map(Vec::len).collect();
    let n = index.draws;
    let (d_x, d_rc, t) = (index.characteristic_names.len(), index.rc_names.len(), index.market_ids.len());
    let total: usize = counts.iter().sum();
    let float = |s: &str| s.parse::<f64>().ok();
    let mut samples = PosteriorSamples::empty(d_x, d_rc, counts, index.kernel.clone());
    samples.draws = n;
    samples.beta_bar = parse_block(&dir.join("beta_bar.csv"), d_x, n, float)?;
    samples.r = parse_block(&dir.join("r.csv"), d_rc, n, float)?;
    samples.xi_bar = parse_block(&dir.join("xi_bar.csv"), t, n, float)?;
    samples.eta = parse_block(&dir.join("eta.csv"), total, n, float)?;
    samples.gamma = parse_block(&dir.join("gamma.csv"), total, n, |s| s.parse::<u8>().ok().filter(|g| *g <= 1))?;
    samples.phi = parse_block(&dir.join("phi.csv"), t, n, float)?;
    if index.files.iter().any(|f| f == "tau1_sq.csv") {
        samples.tau1_sq = parse_block(&dir.join("tau1_sq.csv"), 1, n, float)?;
    }
    samples.burn_in_acceptance = index.burn_in_acceptance;
    samples.acceptance = index.acceptance;
    samples.calibration = index.calibration.clone();
    samples.diagnostics = index.diagnostics;

    let node_path = dir.join(NODES_FILE);
    let rows = read_matrix(&node_path, d_rc + 1)?;
    let values: Vec<f64> = rows
        .iter()
        .flatten()
        .map(|v| float(v).ok_or_else(|| CliError::Input(format!("{}: bad value '{v}'", node_path.display()))))
        .collect::<Result<_>>()?;
    let r0 = rows.len();
    let nodes = DMatrix::from_fn(r0, d_rc, |i, k| values[i * (d_rc + 1) + k]);
    let weights: Vec<f64> = (0..r0).map(|i| values[i * (d_rc + 1) + d_rc]).collect();
    let draws = if weights.iter().all(|w| *w == weights[0]) {
        RcDraws::new(nodes)?
    } else {
        RcDraws::weighted(nodes, weights)?
    };
    Ok((samples, draws, index))
}
