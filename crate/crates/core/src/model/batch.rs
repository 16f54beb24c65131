//! Taped utilities for many (consumer, target, reference set) queries at
//! once. Layers are stacked so each preference network runs as one matrix
//! product per batch.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{Matrix, NumericError, Tape, Var};

use super::utility::{awtp_scores, AWTP_EPSILON};
use super::{NetVars, PriceTransform};

/// One utility to evaluate. `context` indexes [`Batch::contexts`], the
/// purchase set that AWTP is computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub context: usize,
    pub target: usize,
    pub refs: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub contexts: Vec<Vec<usize>>,
    pub queries: Vec<Query>,
}

/// How attribute weights enter the taped utility.
#[derive(Clone, Debug, PartialEq)]
pub enum AwtpMode {
    /// `1/K` for every attribute.
    Uniform,
    /// AWTP from current values, recorded as constants.
    Detached,
    /// AWTP recorded on the tape so gradients flow through it.
    Taped,
    /// Caller-supplied weights, one row per context.
    Fixed(Vec<Vec<f64>>),
}

/// Prices the batch reads: raw prices feed AWTP, transformed prices feed
/// the sticker-shock term.
pub struct BatchPrices<'a> {
    pub raw: &'a [f64],
    pub transform: PriceTransform,
}

/// Returns a `Q × 1` column of utilities, one per query.
pub fn batch_utilities(
    tape: &mut Tape,
    reps: &[Var],
    interest: &NetVars,
    price: &NetVars,
    batch: &Batch,
    prices: &BatchPrices<'_>,
    awtp: &AwtpMode,
) -> Result<Var> {
    let k = reps.len();
    let mut targets = Vec::new();
    let mut references = Vec::new();
    let mut pair_context = Vec::new();
    let mut query_offsets = vec![0usize];
    for q in &batch.queries {
        if q.context >= batch.contexts.len() {
            return Err(Error::Numeric(NumericError::IndexOutOfBounds {
                index: q.context,
                bound: batch.contexts.len(),
            }));
        }
        for &j in q.refs.iter().filter(|&&j| j != q.target) {
            targets.push(q.target);
            references.push(j);
            pair_context.push(q.context);
        }
        if targets.len() == *query_offsets.last().expect("non-empty") {
            return Err(Error::EmptyReferenceSet(format!("query target #{}", q.target)));
        }
        query_offsets.push(targets.len());
    }
    let n = targets.len();
    let targets: Arc<[usize]> = targets.into();
    let references: Arc<[usize]> = references.into();
    let query_offsets: Arc<[usize]> = query_offsets.into();

    let mut products = Vec::with_capacity(k);
    for &h in reps {
        let t = tape.gather_rows(h, Arc::clone(&targets))?;
        let r = tape.gather_rows(h, Arc::clone(&references))?;
        products.push(tape.mul(t, r)?);
    }
    // layer-major stacking: row l·n + p holds layer l of pair p
    let stacked = tape.concat_rows(&products)?;
    let interest_out = interest.forward(tape, stacked)?;
    let price_out = price.forward(tape, stacked)?;
    let shock: Vec<f64> = (0..n)
        .map(|p| {
            prices.transform.apply(prices.raw[references[p]])
                - prices.transform.apply(prices.raw[targets[p]])
        })
        .collect();
    let shock = tape.constant(Matrix::column(shock.repeat(k)));
    let price_term = tape.mul(price_out, shock)?;
    let per_layer = tape.add(interest_out, price_term)?;

    let weights = attribute_weight_column(tape, reps, batch, prices.raw, awtp)?;
    let pick: Vec<usize> = (0..k)
        .flat_map(|l| pair_context.iter().map(move |&c| c * k + l))
        .collect();
    let weights = tape.gather_rows(weights, pick.into())?;
    let weighted = tape.mul(per_layer, weights)?;
    // regroup pair-major so each pair's K layers are contiguous
    let regroup: Vec<usize> = (0..n).flat_map(|p| (0..k).map(move |l| l * n + p)).collect();
    let weighted = tape.gather_rows(weighted, regroup.into())?;
    let pair_offsets: Arc<[usize]> = (0..=n).map(|p| p * k).collect::<Vec<_>>().into();
    let per_pair = tape.segment_sum(weighted, pair_offsets)?;

    let joint = tape.concat_cols(reps)?;
    let jt = tape.gather_rows(joint, targets)?;
    let jr = tape.gather_rows(joint, references)?;
    let logits = tape.row_dot(jt, jr)?;
    let gamma = tape.segment_softmax(logits, Arc::clone(&query_offsets))?;
    let contrib = tape.mul(gamma, per_pair)?;
    Ok(tape.segment_sum(contrib, query_offsets)?)
}

/// `C·K × 1` column: row `c·K + k` is context `c`'s weight for layer `k`.
fn attribute_weight_column(
    tape: &mut Tape,
    reps: &[Var],
    batch: &Batch,
    raw_prices: &[f64],
    mode: &AwtpMode,
) -> Result<Var> {
    let k = reps.len();
    let c = batch.contexts.len();
    if batch.contexts.iter().any(Vec::is_empty) {
        return Err(Error::EmptyReferenceSet("awtp context".into()));
    }
    let column = match mode {
        AwtpMode::Uniform => vec![1.0 / k as f64; c * k],
        AwtpMode::Fixed(rows) => {
            if rows.len() != c || rows.iter().any(|r| r.len() != k) {
                return Err(Error::SizeMismatch {
                    left: rows.len(),
                    right: c,
                });
            }
            rows.concat()
        }
        AwtpMode::Detached => {
            let layers: Vec<Matrix> = reps.iter().map(|&h| tape.value(h).clone()).collect();
            let mut out = Vec::with_capacity(c * k);
            for items in &batch.contexts {
                out.extend(awtp_scores(&layers, items, raw_prices)?.weights);
            }
            out
        }
        AwtpMode::Taped => {
            let mut rows = Vec::with_capacity(c);
            for items in &batch.contexts {
                rows.push(taped_awtp(tape, reps, items, raw_prices)?);
            }
            return Ok(tape.concat_rows(&rows)?);
        }
    };
    Ok(tape.constant(Matrix::column(column)))
}

/// Normalized AWTP of one purchase set as a `K × 1` tape column.
fn taped_awtp(tape: &mut Tape, reps: &[Var], items: &[usize], raw_prices: &[f64]) -> Result<Var> {
    let n = items.len();
    let prices: Vec<f64> = items.iter().map(|&i| raw_prices[i]).collect();
    let mean_price = prices.iter().sum::<f64>() / n as f64;
    let price_scale = mean_price.abs().max(AWTP_EPSILON);
    let price_dev = Matrix::column(
        prices
            .iter()
            .map(|p| (p - mean_price).abs() / price_scale)
            .collect(),
    );
    let items: Arc<[usize]> = items.into();
    let whole: Arc<[usize]> = vec![0, n].into();
    let mut raw = Vec::with_capacity(reps.len());
    for &h in reps {
        let rows = tape.gather_rows(h, Arc::clone(&items))?;
        let total = tape.segment_sum(rows, Arc::clone(&whole))?;
        let center = tape.scale(total, 1.0 / n as f64)?;
        let neg_center = tape.scale(center, -1.0)?;
        let deviation = tape.add_row(rows, neg_center)?;
        let dev_norm = tape.row_norm(deviation)?;
        let dev_norm = tape.floor(dev_norm, AWTP_EPSILON)?;
        let center_norm = tape.norm(center)?;
        let numer = tape.constant(price_dev.clone());
        let ratio = tape.div(numer, dev_norm)?;
        let ratio_sum = tape.sum(ratio)?;
        raw.push(tape.mul(ratio_sum, center_norm)?);
    }
    let raw = tape.concat_rows(&raw)?;
    Ok(tape.softmax(raw)?)
}
