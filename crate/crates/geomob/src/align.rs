//! Contrastive multimodal alignment.
//!
//! Mobility is the anchor modality: LightGCN outputs for the batch cells are
//! L2-normalized and pulled toward the matching text / image / demographic
//! rows under a symmetric InfoNCE objective, averaged over the modality
//! pairs. Text and image vectors are frozen inputs behind trainable bias-free
//! projections; demographic histograms pass through log1p, per-feature
//! standardization fitted on the training split, and a trainable ReLU MLP.
//! Every parameter updates with AdamW; the mobility node table receives its
//! gradient through a full-subgraph propagation recomputed each step.

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::MobilityGraph;
use crate::hexgrid::CellId;
use crate::lightgcn::{propagate, NodeEmbeddingParams, PropagationPlan};
use crate::nn::{
    l2_normalize_backward, l2_normalize_rows, logsumexp, matmul_nt, matmul_tn, AdamParams,
    AdamState, Linear, Mlp,
};
use crate::rng;
use serde::{Deserialize, Serialize};

/// Per-cell auxiliary features; absent modalities stay absent (a cell is
/// excluded from a pair term rather than zero-filled).
#[derive(Debug, Clone)]
pub struct ModalityRecord {
    pub cell: CellId,
    pub text: Option<Vec<f64>>,
    pub image: Option<Vec<f64>>,
    pub demo: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Text,
    Image,
    Demo,
}

impl Modality {
    pub fn name(&self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Demo => "demo",
        }
    }
}

/// Column storage of the auxiliary features, one table per present modality.
#[derive(Debug, Clone, Default)]
pub struct ModalityData {
    pub text: Option<EmbeddingTable>,
    pub image: Option<EmbeddingTable>,
    pub demo: Option<EmbeddingTable>,
}

impl ModalityData {
    pub fn from_records(records: Vec<ModalityRecord>) -> Result<Self> {
        let mut text: Vec<(CellId, Vec<f64>)> = Vec::new();
        let mut image: Vec<(CellId, Vec<f64>)> = Vec::new();
        let mut demo: Vec<(CellId, Vec<f64>)> = Vec::new();
        for r in records {
            if let Some(v) = r.text {
                text.push((r.cell, v));
            }
            if let Some(v) = r.image {
                image.push((r.cell, v));
            }
            if let Some(v) = r.demo {
                for (k, x) in v.iter().enumerate() {
                    if !(x.is_finite() && *x >= 0.0) {
                        return Err(Error::Validation(format!(
                            "demographic histogram of {} has bad entry {x} at bin {k}",
                            r.cell
                        )));
                    }
                }
                demo.push((r.cell, v));
            }
        }
        let build = |rows: Vec<(CellId, Vec<f64>)>| -> Result<Option<EmbeddingTable>> {
            if rows.is_empty() {
                return Ok(None);
            }
            let dim = rows[0].1.len();
            let mut cells = Vec::with_capacity(rows.len());
            let mut data = Vec::with_capacity(rows.len() * dim);
            for (cell, v) in rows {
                if v.len() != dim {
                    return Err(Error::Validation(format!(
                        "modality row of {cell} has dim {} but the first row has {dim}",
                        v.len()
                    )));
                }
                cells.push(cell);
                data.extend_from_slice(&v);
            }
            Ok(Some(EmbeddingTable::new(cells, dim, data)?))
        };
        Ok(ModalityData { text: build(text)?, image: build(image)?, demo: build(demo)? })
    }

    pub fn from_tables(
        text: Option<EmbeddingTable>,
        image: Option<EmbeddingTable>,
        demo: Option<EmbeddingTable>,
    ) -> Result<Self> {
        if let Some(t) = &demo {
            for (i, v) in t.data().iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(Error::Validation(format!(
                        "demographic table entry {i} = {v} must be a nonnegative count"
                    )));
                }
            }
        }
        Ok(ModalityData { text, image, demo })
    }

    fn table(&self, m: Modality) -> Option<&EmbeddingTable> {
        match m {
            Modality::Text => self.text.as_ref(),
            Modality::Image => self.image.as_ref(),
            Modality::Demo => self.demo.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub dim: usize,
    pub temperature: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            dim: 128,
            temperature: 0.07,
            batch_size: 256,
            epochs: 100,
            lr: 1e-3,
            weight_decay: 1e-3,
            val_fraction: 0.10,
            seed: 0,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("align dim must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Validation(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "val_fraction {} outside (0, 1)",
                self.val_fraction
            )));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Validation("bad lr / weight_decay".into()));
        }
        Ok(())
    }
}

/// log1p then per-feature standardization, fitted on the training split.
#[derive(Debug, Clone)]
pub struct DemoNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DemoNormalizer {
    pub fn identity(dim: usize) -> Self {
        DemoNormalizer { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(rows: &[&[f64]], dim: usize) -> Self {
        if rows.is_empty() {
            return Self::identity(dim);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(*r) {
                *m += x.ln_1p();
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for j in 0..dim {
                let d = r[j].ln_1p() - mean[j];
                var[j] += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        DemoNormalizer { mean, std }
    }

    pub fn apply(&self, hist: &[f64]) -> Vec<f64> {
        hist.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x.ln_1p() - m) / s)
            .collect()
    }
}

/// All trainable state: the mobility node table plus one head per present
/// modality.
#[derive(Debug, Clone)]
pub struct HeadParams {
    pub dim: usize,
    pub node: NodeEmbeddingParams,
    pub text_proj: Option<Linear>,
    pub image_proj: Option<Linear>,
    pub demo_mlp: Option<Mlp>,
    pub demo_norm: Option<DemoNormalizer>,
}

impl HeadParams {
    pub fn modalities(&self) -> Vec<Modality> {
        let mut v = Vec::new();
        if self.text_proj.is_some() {
            v.push(Modality::Text);
        }
        if self.image_proj.is_some() {
            v.push(Modality::Image);
        }
        if self.demo_mlp.is_some() {
            v.push(Modality::Demo);
        }
        v
    }

    pub fn all_finite(&self) -> bool {
        let lin_ok = |l: &Option<Linear>| {
            l.as_ref().is_none_or(|l| {
                l.w.iter().all(|v| v.is_finite())
                    && l.b.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()))
            })
        };
        self.node.all_finite()
            && lin_ok(&self.text_proj)
            && lin_ok(&self.image_proj)
            && self.demo_mlp.as_ref().is_none_or(|m| {
                m.layers.iter().all(|l| {
                    l.w.iter().all(|v| v.is_finite())
                        && l.b.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()))
                })
            })
    }
}

/// One encoded sub-batch: which batch positions carry the modality and their
/// unit-norm rows.
#[derive(Debug, Clone)]
pub struct SubBatch {
    pub positions: Vec<usize>,
    pub rows: Vec<f64>,
}

/// Unit-norm encodings of one batch: mobility for every cell, auxiliary rows
/// restricted to the cells where the modality is present.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub dim: usize,
    pub mobility: Vec<f64>,
    pub text: Option<SubBatch>,
    pub image: Option<SubBatch>,
    pub demo: Option<SubBatch>,
}

struct HeadCache {
    positions: Vec<usize>,
    input: Vec<f64>,
    unit: Vec<f64>,
    norms: Vec<f64>,
    mlp_cache: Option<crate::nn::MlpCache>,
}

struct EncodeCache {
    ordinals: Vec<usize>,
    mob_unit: Vec<f64>,
    mob_norms: Vec<f64>,
    text: Option<HeadCache>,
    image: Option<HeadCache>,
    demo: Option<HeadCache>,
}

fn encode_head(
    modality: Modality,
    cells: &[CellId],
    params: &HeadParams,
    data: &ModalityData,
    d: usize,
) -> Result<Option<HeadCache>> {
    let Some(table) = data.table(modality) else { return Ok(None) };
    let mut positions = Vec::new();
    let mut input = Vec::new();
    for (pos, &cell) in cells.iter().enumerate() {
        if let Some(row) = table.get(cell) {
            positions.push(pos);
            match modality {
                Modality::Demo => {
                    let norm = params
                        .demo_norm
                        .as_ref()
                        .ok_or_else(|| Error::Validation("demo head missing normalizer".into()))?;
                    input.extend_from_slice(&norm.apply(row));
                }
                _ => input.extend_from_slice(row),
            }
        }
    }
    if positions.is_empty() {
        return Ok(None);
    }
    let m = positions.len();
    let (mut out, mlp_cache) = match modality {
        Modality::Text => {
            let lin = params
                .text_proj
                .as_ref()
                .ok_or_else(|| Error::Validation("text rows present but no text head".into()))?;
            (lin.forward(&input, m), None)
        }
        Modality::Image => {
            let lin = params
                .image_proj
                .as_ref()
                .ok_or_else(|| Error::Validation("image rows present but no image head".into()))?;
            (lin.forward(&input, m), None)
        }
        Modality::Demo => {
            let mlp = params
                .demo_mlp
                .as_ref()
                .ok_or_else(|| Error::Validation("demo rows present but no demo head".into()))?;
            let (y, cache) = mlp.forward_cached(&input, m);
            (y, Some(cache))
        }
    };
    debug_assert_eq!(out.len(), m * d);
    let norms = l2_normalize_rows(&mut out, m, d);
    Ok(Some(HeadCache { positions, input, unit: out, norms, mlp_cache }))
}

fn encode_batch_cached(
    cells: &[CellId],
    params: &HeadParams,
    plan: &PropagationPlan,
    graph: &MobilityGraph,
    data: &ModalityData,
) -> Result<EncodeCache> {
    let d = params.dim;
    let mut ordinals = Vec::with_capacity(cells.len());
    for &cell in cells {
        ordinals.push(
            graph
                .ordinal_of(cell)
                .ok_or_else(|| Error::Validation(format!("batch cell {cell} is not a graph node")))?,
        );
    }
    // Full-subgraph propagation, recomputed per call.
    let full = plan.propagate_matrix(&params.node.table, d)?;
    let mut mob = Vec::with_capacity(cells.len() * d);
    for &o in &ordinals {
        mob.extend_from_slice(&full[o * d..(o + 1) * d]);
    }
    let mob_norms = l2_normalize_rows(&mut mob, cells.len(), d);
    Ok(EncodeCache {
        ordinals,
        mob_unit: mob,
        mob_norms,
        text: encode_head(Modality::Text, cells, params, data, d)?,
        image: encode_head(Modality::Image, cells, params, data, d)?,
        demo: encode_head(Modality::Demo, cells, params, data, d)?,
    })
}

/// Encode a batch of cells into unit-norm per-modality matrices.
pub fn encode_batch(
    cells: &[CellId],
    params: &HeadParams,
    plan: &PropagationPlan,
    graph: &MobilityGraph,
    data: &ModalityData,
) -> Result<EncodedBatch> {
    let cache = encode_batch_cached(cells, params, plan, graph, data)?;
    let sub = |h: Option<HeadCache>| h.map(|h| SubBatch { positions: h.positions, rows: h.unit });
    Ok(EncodedBatch {
        dim: params.dim,
        mobility: cache.mob_unit,
        text: sub(cache.text),
        image: sub(cache.image),
        demo: sub(cache.demo),
    })
}

/// One direction of the contrastive objective over matched unit rows:
/// (1/2n) sum_i -log softmax_j(<A_i, B_j> / tau) at j = i.
pub fn info_nce_pair(a: &[f64], b: &[f64], n: usize, d: usize, tau: f64) -> Result<f64> {
    Ok(info_nce_with_grad(a, b, n, d, tau, false)?.0)
}

/// As [`info_nce_pair`], also returning (dL/dA, dL/dB).
pub fn info_nce_pair_grad(
    a: &[f64],
    b: &[f64],
    n: usize,
    d: usize,
    tau: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (loss, grads) = info_nce_with_grad(a, b, n, d, tau, true)?;
    let (da, db) = grads.expect("gradients requested");
    Ok((loss, da, db))
}

#[allow(clippy::type_complexity)]
fn info_nce_with_grad(
    a: &[f64],
    b: &[f64],
    n: usize,
    d: usize,
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<(Vec<f64>, Vec<f64>)>)> {
    if n == 0 {
        return Err(Error::Validation("InfoNCE over an empty batch".into()));
    }
    if a.len() != n * d || b.len() != n * d {
        return Err(Error::Validation("InfoNCE shape mismatch".into()));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Validation(format!("temperature {tau} must be positive")));
    }
    let mut logits = matmul_nt(a, b, n, d, n);
    for l in logits.iter_mut() {
        *l /= tau;
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite InfoNCE logits".into()));
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut loss = 0.0;
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        loss += logsumexp(row) - row[i];
    }
    loss *= scale;
    if !want_grad {
        return Ok((loss, None));
    }
    // (P - I) scaled by 1/(2n tau): the joint gradient of both loss pieces.
    let mut p = logits;
    for i in 0..n {
        let row = &mut p[i * n..(i + 1) * n];
        let lse = logsumexp(row);
        for x in row.iter_mut() {
            *x = (*x - lse).exp();
        }
        row[i] -= 1.0;
    }
    let g = scale / tau;
    for x in p.iter_mut() {
        *x *= g;
    }
    let da = crate::nn::matmul(&p, b, n, n, d);
    let db = matmul_tn(&p, a, n, n, d);
    Ok((loss, Some((da, db))))
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct AlignOutput {
    /// Unnormalized propagation outputs for every subgraph node.
    pub embeddings: EmbeddingTable,
    pub heads: HeadParams,
    pub log: Vec<EpochLog>,
    pub warnings: Vec<String>,
    pub train_cells: Vec<CellId>,
    pub val_cells: Vec<CellId>,
}

/// Initialize heads for the modalities that actually have data; warn about
/// the rest.
pub fn init_heads(
    line_init: &EmbeddingTable,
    graph: &MobilityGraph,
    data: &ModalityData,
    cfg: &AlignConfig,
    train_cells: &[CellId],
) -> Result<(HeadParams, Vec<String>)> {
    if line_init.dim() != cfg.dim {
        return Err(Error::Config(format!(
            "init table dim {} does not match align dim {}",
            line_init.dim(),
            cfg.dim
        )));
    }
    let node = NodeEmbeddingParams::from_table(line_init, graph.nodes())?;
    let mut rng = rng::pcg(rng::derive_seed(cfg.seed, 0xA11));
    let mut warnings = Vec::new();
    let mut text_proj = None;
    let mut image_proj = None;
    let mut demo_mlp = None;
    let mut demo_norm = None;
    for m in [Modality::Text, Modality::Image, Modality::Demo] {
        match data.table(m) {
            Some(t) if !t.is_empty() => match m {
                Modality::Text => text_proj = Some(Linear::new(t.dim(), cfg.dim, false, &mut rng)),
                Modality::Image => {
                    image_proj = Some(Linear::new(t.dim(), cfg.dim, false, &mut rng))
                }
                Modality::Demo => {
                    let rows: Vec<&[f64]> =
                        train_cells.iter().filter_map(|&c| t.get(c)).collect();
                    demo_norm = Some(DemoNormalizer::fit(&rows, t.dim()));
                    demo_mlp = Some(Mlp::new(&[t.dim(), 256, 256, cfg.dim], true, &mut rng)?);
                }
            },
            _ => warnings
                .push(format!("modality '{}' absent from the dataset; pair dropped", m.name())),
        }
    }
    if text_proj.is_none() && image_proj.is_none() && demo_mlp.is_none() {
        return Err(Error::Validation("no auxiliary modality has any data".into()));
    }
    Ok((HeadParams { dim: cfg.dim, node, text_proj, image_proj, demo_mlp, demo_norm }, warnings))
}

/// Forward-only total loss over one batch of cells: the symmetric pair terms
/// averaged over the modalities carried by `params`.
pub fn batch_loss(
    cells: &[CellId],
    params: &HeadParams,
    plan: &PropagationPlan,
    graph: &MobilityGraph,
    data: &ModalityData,
    tau: f64,
) -> Result<f64> {
    let cache = encode_batch_cached(cells, params, plan, graph, data)?;
    let d = params.dim;
    let n_pairs = params.modalities().len().max(1);
    let mut loss = 0.0;
    for head in [&cache.text, &cache.image, &cache.demo].into_iter().flatten() {
        let m = head.positions.len();
        let mut mob = Vec::with_capacity(m * d);
        for &p in &head.positions {
            mob.extend_from_slice(&cache.mob_unit[p * d..(p + 1) * d]);
        }
        loss += info_nce_pair(&mob, &head.unit, m, d, tau)?;
        loss += info_nce_pair(&head.unit, &mob, m, d, tau)?;
    }
    Ok(loss / n_pairs as f64)
}

struct Optimizer {
    hp: AdamParams,
    node: AdamState,
    text: Option<AdamState>,
    image: Option<AdamState>,
    demo: Option<Vec<(AdamState, Option<AdamState>)>>,
}

impl Optimizer {
    fn new(params: &HeadParams, cfg: &AlignConfig) -> Self {
        Optimizer {
            hp: AdamParams {
                lr: cfg.lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: cfg.weight_decay,
            },
            node: AdamState::new(params.node.table.len()),
            text: params.text_proj.as_ref().map(|l| AdamState::new(l.w.len())),
            image: params.image_proj.as_ref().map(|l| AdamState::new(l.w.len())),
            demo: params.demo_mlp.as_ref().map(|m| {
                m.layers
                    .iter()
                    .map(|l| {
                        (AdamState::new(l.w.len()), l.b.as_ref().map(|b| AdamState::new(b.len())))
                    })
                    .collect()
            }),
        }
    }
}

/// Analytic gradients of [`batch_loss`] for one batch.
pub struct BatchGrads {
    pub node: Vec<f64>,
    pub text_w: Option<Vec<f64>>,
    pub image_w: Option<Vec<f64>>,
    pub demo: Option<crate::nn::MlpGrad>,
    pub loss: f64,
}

pub fn batch_gradients(
    cells: &[CellId],
    params: &HeadParams,
    plan: &PropagationPlan,
    graph: &MobilityGraph,
    data: &ModalityData,
    tau: f64,
) -> Result<BatchGrads> {
    let d = params.dim;
    let nb = cells.len();
    let cache = encode_batch_cached(cells, params, plan, graph, data)?;
    let n_pairs = params.modalities().len().max(1);
    let pair_scale = 1.0 / n_pairs as f64;

    let mut loss = 0.0;
    let mut d_mob_unit = vec![0.0; nb * d];
    let mut text_w = None;
    let mut image_w = None;
    let mut demo_grads = None;

    for (modality, head) in [
        (Modality::Text, &cache.text),
        (Modality::Image, &cache.image),
        (Modality::Demo, &cache.demo),
    ] {
        let Some(head) = head else { continue };
        let m = head.positions.len();
        let mut mob = Vec::with_capacity(m * d);
        for &p in &head.positions {
            mob.extend_from_slice(&cache.mob_unit[p * d..(p + 1) * d]);
        }
        let (l_mx, da_1, db_1) = info_nce_pair_grad(&mob, &head.unit, m, d, tau)?;
        let (l_xm, db_2, da_2) = info_nce_pair_grad(&head.unit, &mob, m, d, tau)?;
        loss += (l_mx + l_xm) * pair_scale;

        // Mobility side: accumulate into the batch-level unit-row gradient.
        for (k, &p) in head.positions.iter().enumerate() {
            for j in 0..d {
                d_mob_unit[p * d + j] += pair_scale * (da_1[k * d + j] + da_2[k * d + j]);
            }
        }
        // Modality side: through the normalization, then the head.
        let mut d_unit = vec![0.0; m * d];
        for i in 0..m * d {
            d_unit[i] = pair_scale * (db_1[i] + db_2[i]);
        }
        let d_pre = l2_normalize_backward(&head.unit, &head.norms, &d_unit, m, d);
        match modality {
            Modality::Text => {
                let lin = params.text_proj.as_ref().unwrap();
                let (dw, _, _) = lin.backward(&head.input, &d_pre, m);
                text_w = Some(dw);
            }
            Modality::Image => {
                let lin = params.image_proj.as_ref().unwrap();
                let (dw, _, _) = lin.backward(&head.input, &d_pre, m);
                image_w = Some(dw);
            }
            Modality::Demo => {
                let mlp = params.demo_mlp.as_ref().unwrap();
                let (g, _) = mlp.backward(head.mlp_cache.as_ref().unwrap(), &d_pre);
                demo_grads = Some(g);
            }
        }
    }

    // Mobility: unit rows -> propagated rows -> node table via the adjoint.
    let d_prop_rows = l2_normalize_backward(&cache.mob_unit, &cache.mob_norms, &d_mob_unit, nb, d);
    let mut full = vec![0.0; graph.len() * d];
    for (k, &o) in cache.ordinals.iter().enumerate() {
        for j in 0..d {
            full[o * d + j] += d_prop_rows[k * d + j];
        }
    }
    let node = plan.propagate_backward_matrix(&full, d)?;
    Ok(BatchGrads { node, text_w, image_w, demo: demo_grads, loss })
}

/// Train the alignment objective; returns final unnormalized mobility
/// embeddings for all subgraph nodes plus the trained heads.
pub fn train_align(
    graph: &MobilityGraph,
    plan: &PropagationPlan,
    line_init: &EmbeddingTable,
    data: &ModalityData,
    cfg: &AlignConfig,
) -> Result<AlignOutput> {
    cfg.validate()?;
    if plan.len() != graph.len() {
        return Err(Error::Validation("propagation plan and graph disagree on node count".into()));
    }
    if graph.is_empty() {
        return Err(Error::Validation("cannot align an empty graph".into()));
    }

    // Stable train/validation split of the cells.
    let mut order: Vec<CellId> = graph.nodes().to_vec();
    let mut split_rng = rng::pcg(rng::derive_seed(cfg.seed, 0x5B117));
    rng::shuffle(&mut order, &mut split_rng);
    let n_val = if order.len() == 1 {
        0
    } else {
        ((cfg.val_fraction * order.len() as f64).round() as usize).clamp(1, order.len() - 1)
    };
    let val_cells: Vec<CellId> = order[..n_val].to_vec();
    let train_cells: Vec<CellId> = order[n_val..].to_vec();

    let (mut params, warnings) = init_heads(line_init, graph, data, cfg, &train_cells)?;
    let mut opt = Optimizer::new(&params, cfg);
    let mut epoch_rng = rng::pcg(rng::derive_seed(cfg.seed, 0xE90C));
    let mut log = Vec::with_capacity(cfg.epochs);

    let mut shuffled = train_cells.clone();
    for epoch in 0..cfg.epochs {
        rng::shuffle(&mut shuffled, &mut epoch_rng);
        let mut loss_sum = 0.0;
        let mut cell_count = 0usize;
        for (bi, batch) in shuffled.chunks(cfg.batch_size).enumerate() {
            let grads = batch_gradients(batch, &params, plan, graph, data, cfg.temperature)?;
            if !grads.loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "alignment diverged: non-finite loss at epoch {epoch} batch {bi}"
                )));
            }
            loss_sum += grads.loss * batch.len() as f64;
            cell_count += batch.len();

            opt.node.step(&opt.hp, &mut params.node.table, &grads.node);
            if let (Some(lin), Some(st), Some(dw)) =
                (params.text_proj.as_mut(), opt.text.as_mut(), grads.text_w.as_ref())
            {
                st.step(&opt.hp, &mut lin.w, dw);
            }
            if let (Some(lin), Some(st), Some(dw)) =
                (params.image_proj.as_mut(), opt.image.as_mut(), grads.image_w.as_ref())
            {
                st.step(&opt.hp, &mut lin.w, dw);
            }
            if let (Some(mlp), Some(states), Some(g)) =
                (params.demo_mlp.as_mut(), opt.demo.as_mut(), grads.demo.as_ref())
            {
                for (li, layer) in mlp.layers.iter_mut().enumerate() {
                    states[li].0.step(&opt.hp, &mut layer.w, &g.dw[li]);
                    if let (Some(b), Some(st), Some(db)) =
                        (layer.b.as_mut(), states[li].1.as_mut(), g.db[li].as_ref())
                    {
                        st.step(&opt.hp, b, db);
                    }
                }
            }
            if !params.all_finite() {
                return Err(Error::Numeric(format!(
                    "alignment diverged: non-finite parameters after epoch {epoch} batch {bi}"
                )));
            }
        }
        let train_loss = if cell_count > 0 { loss_sum / cell_count as f64 } else { 0.0 };
        let mut val_sum = 0.0;
        let mut val_n = 0usize;
        for batch in val_cells.chunks(cfg.batch_size) {
            val_sum +=
                batch_loss(batch, &params, plan, graph, data, cfg.temperature)? * batch.len() as f64;
            val_n += batch.len();
        }
        let val_loss = if val_n > 0 { val_sum / val_n as f64 } else { 0.0 };
        log.push(EpochLog { epoch, train_loss, val_loss });
    }

    let embeddings = propagate(&params.node, plan, graph.nodes())?;
    Ok(AlignOutput { embeddings, heads: params, log, warnings, train_cells, val_cells })
}
