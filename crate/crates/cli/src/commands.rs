use std::io::Write;
use std::path::{Path, PathBuf};

use arcrec::eval::{
    candidates_excluding, cold_start_protocol, correlation_protocol, hold_out_products,
    leave_last_one_out, leave_last_one_out_protocol, rank_candidates, reference_set, split_products,
    treatment_experiment, ArcRecRanker, BprMf, Recommender,
};
use arcrec::graphs::{Catalog, ReferenceNetworks, TransactionLog};
use arcrec::io;
use arcrec::pipeline::{fit_arcrec, fit_bprmf, graph_config_for, training_data, training_log};
use arcrec::simulator::simulate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, StoredModel, FORMAT, VERSION};
use crate::config::RunConfig;
use crate::error::{CliResult, Failure};
use crate::output::{json, read_input, Artifacts, Document, FileDigest, RunInfo};

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> CliResult<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Failure::Runtime(format!("stdout: {e}")))
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Failure::Config(format!("no {what} given (flag or [data] entry)")))
}

struct Dataset {
    catalog: Catalog,
    log: TransactionLog,
    digests: Vec<FileDigest>,
}

fn load_data(config: &RunConfig, schema: &io::CatalogSchema) -> CliResult<Dataset> {
    let catalog_path = required(&config.data.catalog, "catalog")?;
    let log_path = required(&config.data.transactions, "transactions file")?;
    let (_, catalog_digest) = read_input("catalog", catalog_path)?;
    let (_, log_digest) = read_input("transactions", log_path)?;
    let catalog = io::read_catalog(catalog_path, schema)?;
    let log = io::read_transactions(log_path, &catalog)?;
    Ok(Dataset {
        catalog,
        log,
        digests: vec![catalog_digest, log_digest],
    })
}

pub fn simulate_cmd(config: &RunConfig, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let sim = simulate(&config.market, config.seed, config.workers)?;
    let run = RunInfo::new("simulate", config, Vec::new());
    let mut files = Artifacts::new(dir);
    files.add("catalog.csv", io::catalog_csv(&sim.catalog));
    files.add("transactions.csv", io::transactions_csv(&sim.log, &sim.catalog));
    files.add("truth.csv", io::truth_csv(&sim));
    files.add("sensitivity.csv", io::sensitivity_csv(&sim));
    let names: Vec<String> = files.names().map(str::to_string).collect();
    files.write(&run)?;
    say(
        out,
        format!(
            "simulated {} consumers, {} products, {} purchases",
            sim.market.num_consumers(),
            sim.market.num_products(),
            sim.log.len()
        ),
    )?;
    say(out, format!("wrote {} and run.json", names.join(", ")))
}

#[derive(Serialize)]
struct EpochLine {
    epoch: usize,
    loss: f64,
    val_hr10: Option<f64>,
    val_ndcg10: Option<f64>,
}

pub fn train_cmd(config: &RunConfig, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let data = load_data(config, &config.data.schema)?;
    let (catalog, log, cold_products) = if config.cold.holdout {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let split = hold_out_products(&data.catalog, &data.log, config.cold.fraction, &mut rng)?;
        let ids = split.cold_products.iter().map(|p| p.id.clone()).collect();
        (split.warm_catalog, split.warm_log, ids)
    } else {
        (data.catalog, data.log, Vec::new())
    };
    let sequences = log.sequences();
    let split = leave_last_one_out(&sequences);
    let train = training_data(&split, catalog.len());
    if train.interactions() == 0 {
        return Err(Failure::Data("the training split has no purchases".into()));
    }
    let fit = config.fit();
    let mut lines = Vec::new();
    let on_epoch = |r: &arcrec::training::EpochRecord| {
        lines.push(EpochLine {
            epoch: r.epoch,
            loss: r.loss,
            val_hr10: r.val_hr10,
            val_ndcg10: r.val_ndcg10,
        })
    };
    let mut files = Artifacts::new(dir);
    let (model, report) = if config.baseline {
        let (model, report) = fit_bprmf(log.num_consumers(), &train, &fit, config.seed, config.workers, on_epoch)?;
        (StoredModel::Bprmf { params: model }, report)
    } else {
        let train_log = training_log(&log, &split);
        let graph = graph_config_for(&fit.model, &fit.graph);
        let graphs = ReferenceNetworks::build(&train_log, &catalog, &graph)?;
        let (model, report) = fit_arcrec(&catalog, &train_log, &train, &fit, config.seed, config.workers, on_epoch)?;
        let ids: Vec<String> = catalog.products().iter().map(|p| p.id.clone()).collect();
        files.add(
            "embeddings.csv",
            io::embeddings_csv(&model.representations()?, catalog.attribute_names(), &ids),
        );
        (Checkpoint::store_arcrec(&model, &graph, &graphs.layers), report)
    };
    let run = RunInfo::new("train", config, data.digests);
    let checkpoint = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        run: run.clone(),
        product_ids: catalog.products().iter().map(|p| p.id.clone()).collect(),
        attributes: catalog.attribute_names().to_vec(),
        consumer_ids: log.consumers().to_vec(),
        cold_products,
        histories: sequences,
        model,
        report,
    };
    let mut training_lines = Vec::new();
    for line in &lines {
        training_lines.extend(serde_json::to_vec(line).expect("serializable"));
        training_lines.push(b'\n');
    }
    files.add("checkpoint.json", checkpoint.to_bytes());
    files.add("training_log.jsonl", training_lines);
    let last = lines.last();
    files.write(&run)?;
    say(
        out,
        format!(
            "trained {} for {} epochs (best epoch {}), final loss {}",
            match &checkpoint.model {
                StoredModel::Arcrec { variant, .. } => variant.as_str(),
                StoredModel::Bprmf { .. } => "BPR-MF",
            },
            lines.len(),
            checkpoint.report.best_epoch.map_or("-".into(), |e| e.to_string()),
            last.map_or("-".into(), |l| format!("{:.6}", l.loss))
        ),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Standard,
    Coldstart,
    Correlation,
    Treatment,
}

/// The checkpoint's model as a ranker over its own product indices.
enum Ranker {
    Arcrec(ArcRecRanker),
    Bprmf(BprMf),
}

impl Recommender for Ranker {
    fn scores(
        &self,
        consumer: usize,
        history: &[usize],
        candidates: &[usize],
        target_prices: Option<&[f64]>,
    ) -> arcrec::Result<Vec<f64>> {
        match self {
            Ranker::Arcrec(r) => r.scores(consumer, history, candidates, target_prices),
            Ranker::Bprmf(r) => r.scores(consumer, history, candidates, target_prices),
        }
    }
}

fn ranker(ckpt: &Checkpoint) -> CliResult<Ranker> {
    Ok(match &ckpt.model {
        StoredModel::Arcrec { .. } => Ranker::Arcrec(ArcRecRanker {
            scorer: ckpt.arcrec()?.scorer()?,
            reference_cap: ckpt.reference_cap(),
        }),
        StoredModel::Bprmf { params } => Ranker::Bprmf(params.clone()),
    })
}

fn variant(ckpt: &Checkpoint) -> String {
    match &ckpt.model {
        StoredModel::Arcrec { variant, .. } => variant.clone(),
        StoredModel::Bprmf { .. } => "BPR-MF".into(),
    }
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    mode: &'static str,
    model: String,
    report: T,
}

pub fn evaluate_cmd(
    config: &RunConfig,
    checkpoint: &Path,
    mode: Mode,
    dir: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let (_, ckpt_digest) = read_input("checkpoint", checkpoint)?;
    let data = load_data(config, &ckpt.run.config.data.schema)?;
    let trained = ckpt
        .run
        .input("catalog")
        .ok_or_else(|| Failure::Data("checkpoint records no catalog digest".into()))?;
    if trained.sha256 != data.digests[0].sha256 {
        return Err(Failure::Data(format!(
            "catalog digest {} does not match the checkpoint's {}",
            data.digests[0].sha256, trained.sha256
        )));
    }
    let cold_split = if ckpt.cold_products.is_empty() {
        None
    } else {
        let cold = ckpt
            .cold_products
            .iter()
            .map(|id| data.catalog.resolve(id))
            .collect::<arcrec::Result<Vec<_>>>()?;
        Some(split_products(&data.catalog, &data.log, &cold)?)
    };
    let (catalog, log) = match &cold_split {
        Some(s) => (&s.warm_catalog, &s.warm_log),
        None => (&data.catalog, &data.log),
    };
    let ids: Vec<&str> = catalog.products().iter().map(|p| p.id.as_str()).collect();
    if ids != ckpt.product_ids {
        return Err(Failure::Data("catalog products differ from the checkpoint's".into()));
    }
    if matches!(ckpt.model, StoredModel::Bprmf { .. }) && log.consumers() != ckpt.consumer_ids {
        return Err(Failure::Data(
            "the baseline scores by consumer index and needs the training consumers".into(),
        ));
    }
    let mut inputs = vec![ckpt_digest];
    inputs.extend(data.digests.iter().cloned());
    let n = catalog.len();
    let ranker = ranker(&ckpt)?;
    let model = variant(&ckpt);
    let mut files = Artifacts::new(dir);
    let workers = config.workers;
    let summary = match mode {
        Mode::Standard => {
            let split = leave_last_one_out(&log.sequences());
            let report = leave_last_one_out_protocol(&ranker, &split, n, &config.eval.ks, workers)?;
            let line = topk_line(&report.ks, &report.hit_ratio, &report.ndcg);
            let run = RunInfo::new("evaluate", config, inputs);
            let body = Report { mode: "standard", model, report };
            files.add("metrics.json", json(&Document { run: &run, body }));
            files.write(&run)?;
            line
        }
        Mode::Coldstart => {
            let split = cold_split.as_ref().ok_or_else(|| {
                Failure::Config("coldstart mode needs a checkpoint trained with a product holdout".into())
            })?;
            let scorer = ckpt.arcrec()?.scorer()?;
            let report = cold_start_protocol(&scorer, split, ckpt.reference_cap(), &config.eval.cold_ks, workers)?;
            let m = &report.metrics;
            let line = format!(
                "{} cold products; {}",
                report.cold_products,
                topk_line(&m.ks, &m.hit_ratio, &m.ndcg)
            );
            let run = RunInfo::new("evaluate", config, inputs);
            let body = Report { mode: "coldstart", model, report };
            files.add("coldstart.json", json(&Document { run: &run, body }));
            files.write(&run)?;
            line
        }
        Mode::Correlation => {
            let truth_path = required(&config.data.truth, "truth file (correlation mode)")?;
            if cold_split.is_some() {
                return Err(Failure::Config(
                    "correlation mode ranks the whole assortment; use a checkpoint trained without holdout".into(),
                ));
            }
            let (_, digest) = read_input("truth", truth_path)?;
            inputs.push(digest);
            let truth = io::read_truth(truth_path, log, catalog)?;
            let report = correlation_protocol(&ranker, &log.sequences(), &truth, n, workers)?;
            let line = format!(
                "kendall_tau {:.4} spearman_rho {:.4} over {} consumers",
                report.kendall_tau, report.spearman_rho, report.consumers
            );
            let run = RunInfo::new("evaluate", config, inputs);
            let body = Report { mode: "correlation", model, report };
            files.add("correlation.json", json(&Document { run: &run, body }));
            files.write(&run)?;
            line
        }
        Mode::Treatment => {
            let histories = log.sequences();
            let sensitivity = match &config.data.sensitivity {
                Some(path) => {
                    let (_, digest) = read_input("sensitivity", path)?;
                    inputs.push(digest);
                    io::read_sensitivity(path, log)?
                }
                None => {
                    let scorer = ckpt.arcrec().map_err(|_| {
                        Failure::Config("the baseline has no price pathway; supply a sensitivity file".into())
                    })?;
                    let scorer = scorer.scorer()?;
                    histories
                        .iter()
                        .map(|h| {
                            let refs = reference_set(h, ckpt.reference_cap());
                            if refs.is_empty() {
                                Ok(0.0)
                            } else {
                                scorer.price_response(&refs)
                            }
                        })
                        .collect::<arcrec::Result<Vec<f64>>>()?
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let report = treatment_experiment(
                &ranker,
                &histories,
                &sensitivity,
                &catalog.prices(),
                &config.treatment,
                &mut rng,
                workers,
            )?;
            let line = report
                .summary
                .iter()
                .map(|s| format!("{:+}/{} {:.4}", s.treatment, s.group.label(), s.mean))
                .collect::<Vec<_>>()
                .join("  ");
            let run = RunInfo::new("evaluate", config, inputs);
            files.add("treatment.csv", report.to_csv().into_bytes());
            let body = Report {
                mode: "treatment",
                model,
                report: &report.summary,
            };
            files.add("treatment_summary.json", json(&Document { run: &run, body }));
            files.write(&run)?;
            format!("mean ATE {line}")
        }
    };
    say(out, summary)
}

fn topk_line(ks: &[usize], hr: &[f64], ndcg: &[f64]) -> String {
    ks.iter()
        .zip(hr.iter().zip(ndcg))
        .map(|(k, (h, n))| format!("HR@{k} {h:.4} nDCG@{k} {n:.4}"))
        .collect::<Vec<_>>()
        .join("  ")
}

pub fn recommend_cmd(
    config: &RunConfig,
    checkpoint: &Path,
    consumer: &str,
    k: usize,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    if k == 0 {
        return Err(Failure::Config("K must be at least 1".into()));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let (_, digest) = read_input("checkpoint", checkpoint)?;
    let u = ckpt.consumer(consumer)?;
    let history = &ckpt.histories[u];
    if history.is_empty() {
        return Err(arcrec::Error::EmptyReferenceSet(consumer.into()).into());
    }
    let candidates = candidates_excluding(history, None, ckpt.product_ids.len());
    let ranked = rank_candidates(&ranker(&ckpt)?, u, history, &candidates)?;
    let mut csv = String::from("rank,product_id,utility\n");
    for (r, (i, s)) in ranked.products.iter().zip(&ranked.scores).take(k).enumerate() {
        csv.push_str(&format!("{},{},{}\n", r + 1, ckpt.product_ids[*i], s));
    }
    out.write_all(csv.as_bytes())
        .map_err(|e| Failure::Runtime(format!("stdout: {e}")))?;
    if let Some(dir) = dir {
        let mut files = Artifacts::new(dir);
        files.add("recommendations.csv", csv.into_bytes());
        files.write(&RunInfo::new("recommend", config, vec![digest]))?;
    }
    Ok(())
}

pub fn awtp_cmd(config: &RunConfig, checkpoint: &Path, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let (_, digest) = read_input("checkpoint", checkpoint)?;
    let scorer = ckpt.arcrec()?.scorer()?;
    let weights = ckpt
        .histories
        .iter()
        .map(|h| {
            let refs = reference_set(h, ckpt.reference_cap());
            if refs.is_empty() {
                Ok(None)
            } else {
                scorer.attribute_weights(&refs).map(Some)
            }
        })
        .collect::<arcrec::Result<Vec<_>>>()?;
    let exported = weights.iter().flatten().count();
    let mut files = Artifacts::new(dir);
    files.add("awtp.csv", io::awtp_csv(&ckpt.consumer_ids, &ckpt.attributes, &weights));
    files.write(&RunInfo::new("awtp", config, vec![digest]))?;
    say(
        out,
        format!(
            "wrote awtp.csv: {exported} consumers, {} skipped without purchases",
            weights.len() - exported
        ),
    )
}

#[derive(Serialize)]
struct LayerInfo<'a> {
    file: String,
    attribute: &'a str,
    edges: usize,
}

pub fn graphs_cmd(config: &RunConfig, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let data = load_data(config, &config.data.schema)?;
    let graph = graph_config_for(&config.model, &config.graph);
    let nets = ReferenceNetworks::build(&data.log, &data.catalog, &graph)?;
    let ids: Vec<String> = data.catalog.products().iter().map(|p| p.id.clone()).collect();
    let mut files = Artifacts::new(dir);
    files.add("raw.csv", io::edges_csv(&nets.raw, &ids));
    let mut layers = Vec::new();
    for (k, (adj, name)) in nets.layers.iter().zip(data.catalog.attribute_names()).enumerate() {
        let file = format!("layer_{k}.csv");
        files.add(&file, io::edges_csv(adj, &ids));
        layers.push(LayerInfo {
            file,
            attribute: name,
            edges: adj.num_edges(),
        });
    }
    let run = RunInfo::new("graphs", config, data.digests);
    #[derive(Serialize)]
    struct Layers<'a> {
        raw_edges: usize,
        layers: Vec<LayerInfo<'a>>,
    }
    let body = Layers {
        raw_edges: nets.raw.num_edges(),
        layers,
    };
    let line = format!(
        "raw network {} edges; layers {}",
        body.raw_edges,
        body.layers.iter().map(|l| format!("{}={}", l.attribute, l.edges)).collect::<Vec<_>>().join(" ")
    );
    files.add("layers.json", json(&Document { run: &run, body }));
    files.write(&run)?;
    say(out, line)
}
