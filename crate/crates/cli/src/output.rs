//! Plot-ready CSV exports. Floats use 17 significant digits and every file
//! ends lines with a bare LF.

use std::fs::File;
use std::path::Path;

use sparse_demand::elasticity::PosteriorElasticity;
use sparse_demand::mcmc::{summarize, ParameterSummary, PosteriorSamples};

use crate::draws_io::DrawsIndex;
use crate::error::{CliError, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SPARSITY_FILE: &str = "sparsity.csv";
pub const PHI_FILE: &str = "phi.csv";
pub const ELASTICITY_FILE: &str = "elasticity.csv";
pub const ELASTICITY_SUMMARY_FILE: &str = "elasticity_summary.csv";
pub const XI_FILE: &str = "xi.csv";

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Writes `rows` under `header`, mapping CSV errors to `path`.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        let row: Vec<String> = row.into_iter().collect();
        w.write_record(&row).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn summary_row(name: String, s: &ParameterSummary) -> Vec<String> {
    vec![name, num(s.mean), num(s.sd), num(s.ci_lo), num(s.ci_hi)]
}

/// Writes `summary.csv`, `sparsity.csv` and `phi.csv` into `dir`.
pub fn write_summaries(dir: &Path, samples: &PosteriorSamples, index: &DrawsIndex) -> Result<Vec<&'static str>> {
    let s = summarize(samples);
    let mut rows = Vec::new();
    for (name, p) in index.characteristic_names.iter().zip(&s.beta_bar) {
        rows.push(summary_row(format!("beta_bar:{name}"), p));
    }
    for (name, p) in index.rc_names.iter().zip(&s.sigma) {
        rows.push(summary_row(format!("sigma:{name}"), p));
    }
    for (name, p) in index.rc_names.iter().zip(&s.r) {
        rows.push(summary_row(format!("r:{name}"), p));
    }
    for (id, p) in index.market_ids.iter().zip(&s.xi_bar) {
        rows.push(summary_row(format!("xi_bar:{id}"), p));
    }
    if !samples.tau1_sq.is_empty() {
        rows.push(summary_row("tau1_sq".into(), &ParameterSummary::from_draws(&samples.tau1_sq)));
    }
    write_csv(&dir.join(SUMMARY_FILE), &["parameter", "mean", "sd", "ci_lo", "ci_hi"], rows)?;

    let mut sparsity = Vec::new();
    for (t, id) in index.market_ids.iter().enumerate() {
        for (j, product) in index.product_ids[t].iter().enumerate() {
            sparsity.push(vec![
                id.clone(),
                product.clone(),
                num(s.gamma_mean[t][j]),
                num(s.eta_mean[t][j]),
            ]);
        }
    }
    write_csv(
        &dir.join(SPARSITY_FILE),
        &["market_id", "product_id", "gamma_mean", "eta_mean"],
        sparsity,
    )?;
    write_csv(
        &dir.join(PHI_FILE),
        &["market_id", "phi_mean"],
        index.market_ids.iter().zip(&s.phi_mean).map(|(id, p)| vec![id.clone(), num(*p)]),
    )?;
    Ok(vec![SUMMARY_FILE, SPARSITY_FILE, PHI_FILE])
}

pub fn write_elasticities(dir: &Path, out: &PosteriorElasticity, index: &DrawsIndex) -> Result<Vec<&'static str>> {
    let rows = out.entries.iter().map(|e| {
        let products = &index.product_ids[e.market];
        vec![
            index.market_ids[e.market].clone(),
            products[e.j].clone(),
            products[e.m].clone(),
            num(e.posterior.mean),
            num(e.posterior.sd),
            num(e.posterior.ci_lo),
            num(e.posterior.ci_hi),
            num(e.at_posterior_mean),
        ]
    });
    write_csv(
        &dir.join(ELASTICITY_FILE),
        &["market_id", "j", "m", "mean", "sd", "ci_lo", "ci_hi", "at_posterior_mean"],
        rows,
    )?;
    write_csv(
        &dir.join(ELASTICITY_SUMMARY_FILE),
        &["statistic", "value"],
        [
            vec!["own_mean".to_string(), num(out.own_mean)],
            vec!["own_sd".to_string(), num(out.own_sd)],
            vec!["draws_used".to_string(), out.draws_used.to_string()],
        ],
    )?;
    Ok(vec![ELASTICITY_FILE, ELASTICITY_SUMMARY_FILE])
}
