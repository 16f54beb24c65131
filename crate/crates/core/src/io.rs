//! CSV formats: catalog, transactions, simulation truth, AWTP export,
//! embedding snapshots and graph dumps. Readers report 1-based line
//! numbers; writers produce bytes, and callers decide where they go.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{Adjacency, AttributeKind, Catalog, RawProduct, TransactionLog};
use crate::numeric::Matrix;
use crate::simulator::Simulation;

/// How catalog attribute columns are interpreted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSchema {
    /// Columns holding real values, quantile-binned into `bins` levels.
    pub numeric_attributes: Vec<String>,
    pub bins: usize,
}

impl Default for CatalogSchema {
    fn default() -> Self {
        CatalogSchema {
            numeric_attributes: Vec::new(),
            bins: 5,
        }
    }
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(io_error(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: display(path),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

fn column(path: &Path, header: &csv::StringRecord, name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
        path: display(path),
        column: name.into(),
    })
}

/// Reads `product_id,price,<attr_1>,...,<attr_K>`.
pub fn read_catalog(path: &Path, schema: &CatalogSchema) -> Result<Catalog> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let id_col = column(path, &header, "product_id")?;
    let price_col = column(path, &header, "price")?;
    let attr_cols: Vec<usize> = (0..header.len()).filter(|&c| c != id_col && c != price_col).collect();
    if attr_cols.is_empty() {
        return Err(Error::Format {
            path: display(path),
            message: "catalog needs at least one attribute column".into(),
        });
    }
    let names: Vec<String> = attr_cols.iter().map(|&c| header[c].to_string()).collect();
    if let Some(unknown) = schema.numeric_attributes.iter().find(|n| !names.contains(n)) {
        return Err(Error::Config(format!("numeric attribute `{unknown}` is not a catalog column")));
    }
    let kinds = names
        .iter()
        .map(|n| {
            if schema.numeric_attributes.contains(n) {
                AttributeKind::Numeric { levels: schema.bins }
            } else {
                AttributeKind::Categorical
            }
        })
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let price: f64 = record[price_col]
            .parse()
            .map_err(|_| parse_error(path, line, format!("price `{}` is not a number", &record[price_col])))?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(parse_error(path, line, format!("price {price} must be positive")));
        }
        rows.push(RawProduct {
            id: record[id_col].to_string(),
            price,
            values: attr_cols.iter().map(|&c| record[c].to_string()).collect(),
        });
    }
    Catalog::new(names, kinds, rows)
}

/// Reads `consumer_id,product_id,timestamp` against `catalog`.
pub fn read_transactions(path: &Path, catalog: &Catalog) -> Result<TransactionLog> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = [
        column(path, &header, "consumer_id")?,
        column(path, &header, "product_id")?,
        column(path, &header, "timestamp")?,
    ];
    let mut rows: Vec<(String, String, i64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let product = record[cols[1]].to_string();
        if catalog.lookup(&product).is_none() {
            return Err(parse_error(path, line, format!("unknown product id `{product}`")));
        }
        let timestamp: i64 = record[cols[2]].parse().map_err(|_| {
            parse_error(path, line, format!("timestamp `{}` is not an integer", &record[cols[2]]))
        })?;
        rows.push((record[cols[0]].to_string(), product, timestamp));
    }
    if rows.is_empty() {
        return Err(Error::EmptyLog);
    }
    TransactionLog::from_rows(&rows, catalog)
}

/// Reads `consumer_id,product_id,true_utility,true_prob,true_rank` into one
/// ranking per consumer of `log`, products as catalog indices.
pub fn read_truth(path: &Path, log: &TransactionLog, catalog: &Catalog) -> Result<Vec<Vec<usize>>> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let consumer_col = column(path, &header, "consumer_id")?;
    let product_col = column(path, &header, "product_id")?;
    let rank_col = column(path, &header, "true_rank")?;
    let mut ranked: Vec<Vec<(usize, usize)>> = vec![Vec::new(); log.num_consumers()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let u = log
            .consumer_index(&record[consumer_col])
            .ok_or_else(|| parse_error(path, line, format!("unknown consumer `{}`", &record[consumer_col])))?;
        let i = catalog
            .lookup(&record[product_col])
            .ok_or_else(|| parse_error(path, line, format!("unknown product `{}`", &record[product_col])))?;
        let rank: usize = record[rank_col]
            .parse()
            .map_err(|_| parse_error(path, line, format!("rank `{}` is not an integer", &record[rank_col])))?;
        ranked[u].push((rank, i));
    }
    ranked
        .into_iter()
        .enumerate()
        .map(|(u, mut list)| {
            list.sort_unstable();
            let products: Vec<usize> = list.iter().map(|&(_, i)| i).collect();
            let distinct: BTreeSet<usize> = products.iter().copied().collect();
            if products.len() != catalog.len() || distinct.len() != catalog.len() {
                return Err(Error::Format {
                    path: display(path),
                    message: format!(
                        "consumer `{}` ranks {} of {} products",
                        log.consumers()[u],
                        distinct.len(),
                        catalog.len()
                    ),
                });
            }
            Ok(products)
        })
        .collect()
}

/// `consumer_id,sensitivity` rows keyed by consumer index of `log`.
pub fn read_sensitivity(path: &Path, log: &TransactionLog) -> Result<Vec<f64>> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let consumer_col = column(path, &header, "consumer_id")?;
    let value_col = column(path, &header, "sensitivity")?;
    let mut out = vec![None; log.num_consumers()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if let Some(u) = log.consumer_index(&record[consumer_col]) {
            let v: f64 = record[value_col]
                .parse()
                .map_err(|_| parse_error(path, line, format!("`{}` is not a number", &record[value_col])))?;
            out[u] = Some(v);
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(u, v)| {
            v.ok_or_else(|| Error::Format {
                path: display(path),
                message: format!("no sensitivity for consumer `{}`", log.consumers()[u]),
            })
        })
        .collect()
}

fn finish(writer: csv::Writer<Vec<u8>>) -> Vec<u8> {
    writer.into_inner().expect("writing to memory cannot fail")
}

fn writer(header: &[String]) -> csv::Writer<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    w
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn catalog_csv(catalog: &Catalog) -> Vec<u8> {
    let mut header = strings(&["product_id", "price"]);
    header.extend(catalog.attribute_names().iter().cloned());
    let mut w = writer(&header);
    for p in catalog.products() {
        let mut row = vec![p.id.clone(), p.price.to_string()];
        row.extend(p.values.iter().cloned());
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

pub fn transactions_csv(log: &TransactionLog, catalog: &Catalog) -> Vec<u8> {
    let mut w = writer(&strings(&["consumer_id", "product_id", "timestamp"]));
    for r in log.records() {
        w.write_record([
            log.consumers()[r.consumer].as_str(),
            catalog.product(r.product).id.as_str(),
            &r.timestamp.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn truth_csv(sim: &Simulation) -> Vec<u8> {
    let mut w = writer(&strings(&["consumer_id", "product_id", "true_utility", "true_prob", "true_rank"]));
    for (u, h) in sim.histories.iter().enumerate() {
        let mut rank = vec![0usize; h.true_utility.len()];
        for (pos, i) in h.true_ranking().into_iter().enumerate() {
            rank[i] = pos + 1;
        }
        let consumer = sim.market.consumer_id(u);
        for i in 0..h.true_utility.len() {
            w.write_record([
                consumer.clone(),
                sim.market.product_id(i),
                h.true_utility[i].to_string(),
                h.true_prob[i].to_string(),
                rank[i].to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

pub fn sensitivity_csv(sim: &Simulation) -> Vec<u8> {
    let mut w = writer(&strings(&["consumer_id", "sensitivity"]));
    for (u, b) in sim.market.sensitivity.iter().enumerate() {
        w.write_record([sim.market.consumer_id(u), b.to_string()])
            .expect("in-memory write");
    }
    finish(w)
}

/// `consumer_id,<attr_1>,...,<attr_K>`; consumers without weights are skipped.
pub fn awtp_csv(consumers: &[String], attributes: &[String], weights: &[Option<Vec<f64>>]) -> Vec<u8> {
    let mut header = strings(&["consumer_id"]);
    header.extend(attributes.iter().cloned());
    let mut w = writer(&header);
    for (c, row) in consumers.iter().zip(weights) {
        if let Some(row) = row {
            let mut record = vec![c.clone()];
            record.extend(row.iter().map(f64::to_string));
            w.write_record(&record).expect("in-memory write");
        }
    }
    finish(w)
}

/// `layer,product_id,v_0,...,v_{d-1}`, layers named by attribute.
pub fn embeddings_csv(layers: &[Matrix], layer_names: &[String], product_ids: &[String]) -> Vec<u8> {
    let d = layers.first().map_or(0, Matrix::cols);
    let mut header = strings(&["layer", "product_id"]);
    header.extend((0..d).map(|c| format!("v_{c}")));
    let mut w = writer(&header);
    for (h, name) in layers.iter().zip(layer_names) {
        for (r, id) in product_ids.iter().enumerate() {
            let mut record = vec![name.clone(), id.clone()];
            record.extend(h.row(r).iter().map(f64::to_string));
            w.write_record(&record).expect("in-memory write");
        }
    }
    finish(w)
}

/// `i,j,weight` edge list with `i < j`, endpoints as product ids.
pub fn edges_csv(adj: &Adjacency, product_ids: &[String]) -> Vec<u8> {
    let mut w = writer(&strings(&["i", "j", "weight"]));
    for (i, j, weight) in adj.edges() {
        w.write_record([product_ids[i].as_str(), product_ids[j].as_str(), &weight.to_string()])
            .expect("in-memory write");
    }
    finish(w)
}

/// Map from product id to catalog index, for callers holding raw ids.
pub fn product_index(catalog: &Catalog) -> HashMap<String, usize> {
    catalog
        .products()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.clone(), i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate, MarketConfig};

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn missing_price_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "product_id,brand\na,x\n");
        match read_catalog(&p, &CatalogSchema::default()) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "price"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "product_id,price,brand\na,1.5,x\nb,oops,y\n");
        match read_catalog(&c, &CatalogSchema::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let c = write(dir.path(), "c.csv", "product_id,price,brand\na,1.5,x\nb,2,y\n");
        let catalog = read_catalog(&c, &CatalogSchema::default()).unwrap();
        let t = write(dir.path(), "t.csv", "consumer_id,product_id,timestamp\nu,a,1\nu,zz,2\n");
        match read_transactions(&t, &catalog) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("zz"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simulation_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MarketConfig {
            num_consumers: 12,
            num_products: 9,
            ..MarketConfig::default()
        };
        let sim = simulate(&cfg, 2, 1).unwrap();
        let c = dir.path().join("catalog.csv");
        let t = dir.path().join("transactions.csv");
        let r = dir.path().join("truth.csv");
        std::fs::write(&c, catalog_csv(&sim.catalog)).unwrap();
        std::fs::write(&t, transactions_csv(&sim.log, &sim.catalog)).unwrap();
        std::fs::write(&r, truth_csv(&sim)).unwrap();
        let catalog = read_catalog(&c, &CatalogSchema::default()).unwrap();
        assert_eq!(catalog.prices(), sim.catalog.prices());
        let log = read_transactions(&t, &catalog).unwrap();
        assert_eq!(log, sim.log);
        let truth = read_truth(&r, &log, &catalog).unwrap();
        for (u, h) in sim.histories.iter().enumerate() {
            assert_eq!(truth[u], h.true_ranking());
        }
    }

    #[test]
    fn numeric_columns_are_binned() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "c.csv",
            "product_id,price,size\na,1,1.0\nb,1,2.0\nc,1,3.0\nd,1,4.0\n",
        );
        let schema = CatalogSchema {
            numeric_attributes: vec!["size".into()],
            bins: 2,
        };
        let catalog = read_catalog(&c, &schema).unwrap();
        let levels: Vec<u32> = catalog.products().iter().map(|p| p.levels[0]).collect();
        assert_eq!(levels[0], levels[1]);
        assert_ne!(levels[1], levels[2]);
        let bad = CatalogSchema {
            numeric_attributes: vec!["weight".into()],
            bins: 2,
        };
        assert!(matches!(read_catalog(&c, &bad), Err(Error::Config(_))));
    }
}
