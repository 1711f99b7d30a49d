//! Dataset CSV: `market_id, product_id, quantity, market_size`, then one
//! column per characteristic, one row per market-product pair.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use sparse_demand::{Dataset, MarketData};

use crate::error::{CliError, Result};
use crate::output::{csv_writer, num};

pub const KEY_COLUMNS: [&str; 4] = ["market_id", "product_id", "quantity", "market_size"];

struct MarketRows {
    id: String,
    size: u64,
    products: Vec<String>,
    quantities: Vec<u64>,
    x: Vec<Vec<f64>>,
}

/// Reads a dataset, marking `random_coefficients` columns as carrying
/// random coefficients. Markets keep their order of first appearance and
/// products their row order within a market.
pub fn load_dataset(path: &Path, random_coefficients: &[String]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut key = [0usize; 4];
    for (slot, name) in key.iter_mut().zip(KEY_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column '{name}'")))?;
    }
    let characteristic: Vec<usize> = (0..header.len()).filter(|k| !key.contains(k)).collect();
    if characteristic.is_empty() {
        return Err(bad("no characteristic columns".into()));
    }
    let names: Vec<String> = characteristic.iter().map(|&k| header[k].clone()).collect();
    for rc in random_coefficients {
        if !names.contains(rc) {
            return Err(bad(format!("missing random-coefficient column '{rc}'")));
        }
    }
    let rc_mask: Vec<bool> = names.iter().map(|n| random_coefficients.contains(n)).collect();

    let mut markets: Vec<MarketRows> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::csv(path, e))?;
        let line = row + 2;
        let field = |k: usize| record.get(k).unwrap_or("");
        let count = |k: usize| -> Result<u64> {
            field(k).parse::<u64>().map_err(|_| {
                bad(format!(
                    "line {line}: {} '{}' is not a non-negative integer",
                    header[k],
                    field(k)
                ))
            })
        };
        let market_id = field(key[0]).to_string();
        let product_id = field(key[1]).to_string();
        let quantity = count(key[2])?;
        let size = count(key[3])?;
        let x: Vec<f64> = characteristic
            .iter()
            .map(|&k| {
                field(k)
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("line {line}: {} '{}' is not a finite number", header[k], field(k))))
            })
            .collect::<Result<_>>()?;
        let t = *index.entry(market_id.clone()).or_insert_with(|| {
            markets.push(MarketRows {
                id: market_id.clone(),
                size,
                products: Vec::new(),
                quantities: Vec::new(),
                x: Vec::new(),
            });
            markets.len() - 1
        });
        let m = &mut markets[t];
        if m.size != size {
            return Err(bad(format!(
                "line {line}: market {} has market_size {size}, earlier rows say {}",
                m.id, m.size
            )));
        }
        if m.products.contains(&product_id) {
            return Err(bad(format!("line {line}: product {product_id} repeated in market {}", m.id)));
        }
        m.products.push(product_id);
        m.quantities.push(quantity);
        m.x.push(x);
    }
    if markets.is_empty() {
        return Err(bad("no data rows".into()));
    }

    let d_x = names.len();
    let mut built = Vec::with_capacity(markets.len());
    for m in markets {
        let inside: u64 = m.quantities.iter().sum();
        if inside > m.size {
            return Err(bad(format!(
                "market {}: quantities sum to {inside}, exceeding market size {} (negative outside quantity)",
                m.id, m.size
            )));
        }
        let x = DMatrix::from_fn(m.products.len(), d_x, |r, c| m.x[r][c]);
        built.push(MarketData::new(m.id, m.products, m.size, m.quantities, x)?);
    }
    Ok(Dataset::new(built, names, rc_mask)?)
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv_writer(path)?;
    let header: Vec<&str> = KEY_COLUMNS
        .iter()
        .copied()
        .chain(data.characteristic_names().iter().map(String::as_str))
        .collect();
    let werr = |e| CliError::csv(path, e);
    w.write_record(&header).map_err(werr)?;
    for m in data.markets() {
        for (j, product) in m.product_ids().iter().enumerate() {
            let mut row = vec![
                m.id().to_string(),
                product.clone(),
                m.quantities()[j].to_string(),
                m.market_size().to_string(),
            ];
            row.extend((0..data.d_x()).map(|k| num(m.x()[(j, k)])));
            w.write_record(&row).map_err(werr)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("d.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn groups_by_first_appearance() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "market_id,product_id,quantity,market_size,price\nb,1,3,10,1.0\na,1,2,5,2.0\nb,2,4,10,3.0\n",
        );
        let d = load_dataset(&p, &["price".into()]).unwrap();
        assert_eq!(d.market(0).id(), "b");
        assert_eq!(d.market(0).quantities(), &[3, 4]);
        assert_eq!(d.market(0).outside_quantity(), 3);
        assert_eq!(d.market(1).x()[(0, 0)], 2.0);
        assert_eq!(d.rc_columns(), &[0]);
    }

    #[test]
    fn rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("market_id,product_id,market_size,price\n1,1,10,1.0\n", "missing column 'quantity'"),
            ("market_id,product_id,quantity,market_size,price\n1,1,2.5,10,1.0\n", "not a non-negative integer"),
            ("market_id,product_id,quantity,market_size,price\n1,1,-2,10,1.0\n", "not a non-negative integer"),
            ("market_id,product_id,quantity,market_size,price\n1,1,2,10,abc\n", "not a finite number"),
            ("market_id,product_id,quantity,market_size,price\n1,1,2,10,1\n1,1,2,10,1\n", "repeated"),
            ("market_id,product_id,quantity,market_size,price\n1,1,2,10,1\n1,2,2,11,1\n", "market_size"),
        ];
        for (body, needle) in cases {
            let p = write(dir.path(), body);
            let msg = load_dataset(&p, &[]).unwrap_err().to_string();
            assert!(msg.contains(needle), "{msg}");
        }
        let p = write(dir.path(), "market_id,product_id,quantity,market_size,w\n1,1,2,10,1\n");
        assert!(load_dataset(&p, &["price".into()]).unwrap_err().to_string().contains("'price'"));
    }
}
