//! Second-order LINE pre-encoding of the full mobility graph.
//!
//! Each undirected edge counts as two directed edges. Training draws edges
//! proportionally to weight, ascends log sigma(c_j . v_i) plus K negative
//! terms log sigma(-c_n . v_i) with negatives drawn proportionally to
//! (weighted degree)^0.75, and decays the learning rate linearly. Targets v
//! are returned; contexts c are discarded. Single-threaded and bitwise
//! deterministic given the seed.

use crate::alias::AliasTable;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::MobilityGraph;
use crate::hexgrid::CellId;
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineConfig {
    pub dim: usize,
    pub negatives_per_edge: usize,
    pub total_samples: u64,
    pub lr_init: f64,
    pub noise_power: f64,
    pub seed: u64,
}

impl Default for LineConfig {
    fn default() -> Self {
        LineConfig {
            dim: 128,
            negatives_per_edge: 5,
            total_samples: 2_000_000,
            lr_init: 0.025,
            noise_power: 0.75,
            seed: 0,
        }
    }
}

impl LineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("LINE dim must be positive".into()));
        }
        if self.negatives_per_edge == 0 {
            return Err(Error::Validation("negatives_per_edge must be >= 1".into()));
        }
        if !(self.lr_init.is_finite() && self.lr_init > 0.0) {
            return Err(Error::Validation(format!("lr_init {} must be positive", self.lr_init)));
        }
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return Err(Error::Validation(format!("noise_power {} invalid", self.noise_power)));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct LineOutput {
    pub embeddings: EmbeddingTable,
    /// Degree-zero nodes: their rows are zero.
    pub isolated: Vec<CellId>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-sample objective: log sigma(v . c_pos) + sum_n log sigma(-(v . c_n)).
/// The training loop ascends exactly this; tests difference it numerically.
pub fn sgns_objective(v: &[f64], c_pos: &[f64], c_negs: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut obj = sigmoid(dot(v, c_pos)).ln();
    for c in c_negs {
        obj += sigmoid(-dot(v, c)).ln();
    }
    obj
}

/// Analytic ascent gradients of [`sgns_objective`]: (dv, dc_pos, dc_negs).
pub fn sgns_gradients(v: &[f64], c_pos: &[f64], c_negs: &[&[f64]]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let d = v.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut dv = vec![0.0; d];
    let coef_pos = 1.0 - sigmoid(dot(v, c_pos));
    let dc_pos: Vec<f64> = v.iter().map(|x| coef_pos * x).collect();
    for (dvj, cj) in dv.iter_mut().zip(c_pos) {
        *dvj += coef_pos * cj;
    }
    let mut dc_negs = Vec::with_capacity(c_negs.len());
    for c in c_negs {
        let coef = -sigmoid(dot(v, c));
        dc_negs.push(v.iter().map(|x| coef * x).collect());
        for (dvj, cj) in dv.iter_mut().zip(*c) {
            *dvj += coef * cj;
        }
    }
    (dv, dc_pos, dc_negs)
}

/// The noise distribution used for negatives: nodes with positive weighted
/// degree, sampled proportionally to (weighted degree)^power.
pub fn negative_sampler(g: &MobilityGraph, power: f64) -> Result<(Vec<u32>, AliasTable)> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for i in 0..g.len() {
        let wd = g.weighted_degree(i);
        if wd > 0.0 {
            nodes.push(i as u32);
            weights.push(wd.powf(power));
        }
    }
    let alias = AliasTable::build(&weights)?;
    Ok((nodes, alias))
}

/// Train second-order LINE embeddings on the full graph.
pub fn train_line(g: &MobilityGraph, cfg: &LineConfig) -> Result<LineOutput> {
    cfg.validate()?;
    if g.is_empty() || g.num_arcs() == 0 {
        return Err(Error::Validation("LINE needs a graph with at least one edge".into()));
    }
    let n = g.len();
    let d = cfg.dim;

    // Directed edge list: every CSR entry is one direction.
    let mut src = Vec::with_capacity(g.num_arcs());
    let mut dst = Vec::with_capacity(g.num_arcs());
    let mut edge_w = Vec::with_capacity(g.num_arcs());
    for i in 0..n {
        let (cols, ws) = g.row(i);
        for (&j, &w) in cols.iter().zip(ws) {
            src.push(i as u32);
            dst.push(j);
            edge_w.push(w);
        }
    }
    let edge_alias = AliasTable::build(&edge_w)?;

    let (neg_nodes, neg_alias) = negative_sampler(g, cfg.noise_power)?;
    let isolated: Vec<CellId> = (0..n)
        .filter(|&i| g.degree(i) == 0)
        .map(|i| g.nodes()[i])
        .collect();

    let mut rng = rng::pcg(rng::derive_seed(cfg.seed, 0x11E));
    let init_bound = 0.5 / d as f64;
    let mut v = vec![0.0f64; n * d];
    for i in 0..n {
        if g.degree(i) > 0 {
            for x in v[i * d..(i + 1) * d].iter_mut() {
                *x = rng.gen_range(-init_bound..init_bound);
            }
        }
        // Isolated nodes stay zero and are reported below.
    }
    let mut c = vec![0.0f64; n * d];

    let total = cfg.total_samples;
    let mut dv = vec![0.0f64; d];
    for s in 0..total {
        let lr = cfg.lr_init * (1.0 - s as f64 / total as f64).max(1e-4);
        let e = edge_alias.sample(&mut rng);
        let (i, j) = (src[e] as usize, dst[e] as usize);
        let vi_start = i * d;
        dv.iter_mut().for_each(|x| *x = 0.0);

        // Positive context.
        {
            let vi = &v[vi_start..vi_start + d];
            let cj = &mut c[j * d..(j + 1) * d];
            let dot: f64 = vi.iter().zip(cj.iter()).map(|(a, b)| a * b).sum();
            let coef = (1.0 - sigmoid(dot)) * lr;
            for k in 0..d {
                dv[k] += coef * cj[k];
                cj[k] += coef * vi[k];
            }
        }
        // Negatives: re-draw when the positive context comes up; bail out
        // after a bounded number of rejections (tiny graphs).
        for _ in 0..cfg.negatives_per_edge {
            let mut node = 0usize;
            let mut ok = false;
            for _ in 0..100 {
                node = neg_nodes[neg_alias.sample(&mut rng)] as usize;
                if node != j {
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let vi = &v[vi_start..vi_start + d];
            let cn = &mut c[node * d..(node + 1) * d];
            let dot: f64 = vi.iter().zip(cn.iter()).map(|(a, b)| a * b).sum();
            let coef = -sigmoid(dot) * lr;
            for k in 0..d {
                dv[k] += coef * cn[k];
                cn[k] += coef * vi[k];
            }
        }
        for k in 0..d {
            v[vi_start + k] += dv[k];
        }
    }

    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("LINE produced non-finite embeddings".into()));
    }
    let embeddings = EmbeddingTable::new(g.nodes().to_vec(), d, v)?;
    Ok(LineOutput { embeddings, isolated })
}
