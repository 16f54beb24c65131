#![allow(dead_code)]

use arcrec::graphs::Adjacency;
use arcrec::model::PreferenceNet;
use arcrec::numeric::{Matrix, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Relative error with a small absolute floor so that vanishing gradients
/// are compared on an absolute scale.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares tape gradients of `build` against central differences of the
/// same scalar expression re-evaluated with perturbed inputs. Returns the
/// largest relative error seen.
pub fn check_gradients<F>(inputs: &[Matrix], build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out).expect("backward");

    let eval = |perturbed: &[Matrix]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|m| t.constant(m.clone())).collect();
        let o = build(&mut t, &vs);
        t.value(o).item().unwrap()
    };

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let zeros = Matrix::zeros(input.rows(), input.cols());
        let analytic = grads.get(vars[k]).unwrap_or(&zeros);
        for idx in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].as_mut_slice()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].as_mut_slice()[idx] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.as_slice()[idx], numeric));
        }
    }
    worst
}

/// Contracts a matrix-valued node with fixed weights to get a scalar.
pub fn contract(tape: &mut Tape, v: Var, weights: &Matrix) -> Var {
    let w = tape.constant(weights.clone());
    tape.dot(v, w).unwrap()
}

/// Random undirected graph; `weighted` draws weights in [0.5, 3).
pub fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, density: f64, weighted: bool) -> Adjacency {
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.random_bool(density) {
                let w = if weighted { rng.random_range(0.5..3.0) } else { 1.0 };
                edges.push((i, j, w));
            }
        }
    }
    Adjacency::from_edges(nodes, edges)
}

/// Dense `D⁻¹ + D^{-1/2} S D^{-1/2}`, isolated nodes with self weight 1.
pub fn dense_operator(adj: &Adjacency) -> Vec<Vec<f64>> {
    let n = adj.num_nodes();
    let mut s = vec![vec![0.0; n]; n];
    for (i, j, w) in adj.edges() {
        s[i][j] = w;
        s[j][i] = w;
    }
    let deg: Vec<f64> = s.iter().map(|row| row.iter().sum()).collect();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = if deg[i] > 0.0 { 1.0 / deg[i] } else { 1.0 };
        for j in 0..n {
            if s[i][j] != 0.0 {
                a[i][j] += s[i][j] / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
    }
    a
}

pub fn dense_apply(a: &[Vec<f64>], h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| {
            (0..h[0].len())
                .map(|c| row.iter().zip(h).map(|(w, hr)| w * hr[c]).sum())
                .collect()
        })
        .collect()
}

/// Straight-line `θ`-weighted propagation: `Σ_l θ_l A^l e`, `θ_l ∝ 1/(l+1)`.
pub fn oracle_representation(adj: &Adjacency, e: &Matrix, depth: usize) -> Vec<Vec<f64>> {
    let a = dense_operator(adj);
    let mut h: Vec<Vec<f64>> = (0..e.rows()).map(|r| e.row(r).to_vec()).collect();
    let norm: f64 = (0..=depth).map(|l| 1.0 / (l as f64 + 1.0)).sum();
    let mut out: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| v / norm).collect()).collect();
    for l in 1..=depth {
        h = dense_apply(&a, &h);
        let w = 1.0 / (l as f64 + 1.0) / norm;
        for (o, r) in out.iter_mut().zip(&h) {
            for (x, v) in o.iter_mut().zip(r) {
                *x += w * v;
            }
        }
    }
    out
}

fn oracle_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct evaluation of a one-hidden-layer network on one input row.
pub fn oracle_mlp(net: &PreferenceNet, x: &[f64]) -> f64 {
    let d = x.len();
    let mut out = net.output_bias.get(0, 0);
    for o in 0..d {
        let mut pre = net.hidden_bias.get(0, o);
        for (i, xi) in x.iter().enumerate() {
            pre += xi * net.hidden_weight.get(i, o);
        }
        out += oracle_sigmoid(pre) * net.output_weight.get(o, 0);
    }
    out
}

/// AWTP weights computed term by term from per-layer representations.
pub fn oracle_awtp(h: &[Vec<Vec<f64>>], items: &[usize], prices: &[f64]) -> Vec<f64> {
    let n = items.len() as f64;
    let p_bar: f64 = items.iter().map(|&i| prices[i]).sum::<f64>() / n;
    let raw: Vec<f64> = h
        .iter()
        .map(|layer| {
            let d = layer[0].len();
            let center: Vec<f64> = (0..d)
                .map(|c| items.iter().map(|&i| layer[i][c]).sum::<f64>() / n)
                .collect();
            let cn = center.iter().map(|v| v * v).sum::<f64>().sqrt();
            if cn == 0.0 {
                return 0.0;
            }
            items
                .iter()
                .map(|&i| {
                    let dev = (0..d)
                        .map(|c| (layer[i][c] - center[c]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                        .max(1e-8);
                    ((prices[i] - p_bar).abs() / p_bar.abs().max(1e-8)) / (dev / cn)
                })
                .sum()
        })
        .collect();
    let m = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = raw.iter().map(|r| (r - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Straight-line reference-dependent utility of `target` against
/// `refs \ {target}`; prices are already in model space.
pub fn oracle_utility(
    h: &[Vec<Vec<f64>>],
    interest: &PreferenceNet,
    price: &PreferenceNet,
    prices: &[f64],
    weights: &[f64],
    target: usize,
    refs: &[usize],
) -> f64 {
    let refs: Vec<usize> = refs.iter().copied().filter(|&j| j != target).collect();
    let joint = |i: usize| -> Vec<f64> { h.iter().flat_map(|layer| layer[i].clone()).collect() };
    let ti = joint(target);
    let logits: Vec<f64> = refs
        .iter()
        .map(|&j| ti.iter().zip(joint(j)).map(|(a, b)| a * b).sum())
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let mut total = 0.0;
    for (&j, l) in refs.iter().zip(&logits) {
        let gamma = (l - m).exp() / z;
        let mut inner = 0.0;
        for (layer, w) in h.iter().zip(weights) {
            let x: Vec<f64> = layer[target].iter().zip(&layer[j]).map(|(a, b)| a * b).collect();
            inner += w * (oracle_mlp(interest, &x) + oracle_mlp(price, &x) * (prices[j] - prices[target]));
        }
        total += gamma * inner;
    }
    total
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}
