//! Coordinate-network distillation.
//!
//! A frozen random sinusoidal feature layer (SIREN-style first layer) maps a
//! bbox-normalized coordinate to 1024 features; a deep ReLU MLP regresses the
//! teacher cell embeddings under MSE. Once trained, any coordinate inside the
//! training bounding box queries an embedding without the graph or the cell
//! lookup.

use crate::error::{Error, Result};
use crate::hexgrid::GeoCoord;
use crate::nn::{AdamParams, AdamState, Mlp};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Frozen first layer: encode(x) = sin(omega0 * (W x + b)) with W, b drawn
/// uniformly from [-1, 1].
#[derive(Debug, Clone)]
pub struct SirenFeatureMap {
    pub features: usize,
    pub omega0: f64,
    pub seed: u64,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl SirenFeatureMap {
    pub fn new(features: usize, omega0: f64, seed: u64) -> Self {
        let mut rng = rng::pcg(rng::derive_seed(seed, 0x51BE));
        let w = (0..features * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..features).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SirenFeatureMap { features, omega0, seed, w, b }
    }

    /// Encode a coordinate already normalized to [-1, 1]^2.
    pub fn encode(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        for (name, v) in [("x", x), ("y", y)] {
            if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
                return Err(Error::Range(format!(
                    "normalized coordinate {name}={v} outside [-1, 1]"
                )));
            }
        }
        Ok((0..self.features)
            .map(|i| (self.omega0 * (self.w[i * 2] * x + self.w[i * 2 + 1] * y + self.b[i])).sin())
            .collect())
    }

    /// Zero all phases; encode(0, 0) becomes exactly zero.
    pub fn zero_phases(&mut self) {
        self.b.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Training-time bounding box, stored with the surrogate and used to
/// normalize query coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn of(points: &[GeoCoord]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("bounding box of zero points".into()));
        }
        let mut b = BBox {
            lat_min: f64::INFINITY,
            lat_max: f64::NEG_INFINITY,
            lon_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
        };
        for p in points {
            p.validate()?;
            b.lat_min = b.lat_min.min(p.lat);
            b.lat_max = b.lat_max.max(p.lat);
            b.lon_min = b.lon_min.min(p.lon);
            b.lon_max = b.lon_max.max(p.lon);
        }
        // Degenerate extents still need a usable scale.
        if b.lat_max - b.lat_min < 1e-12 {
            b.lat_min -= 0.5;
            b.lat_max += 0.5;
        }
        if b.lon_max - b.lon_min < 1e-12 {
            b.lon_min -= 0.5;
            b.lon_max += 0.5;
        }
        Ok(b)
    }

    /// Map into [-1, 1]^2; out-of-box coordinates are range errors.
    pub fn normalize(&self, c: GeoCoord) -> Result<(f64, f64)> {
        c.validate()?;
        let nx = 2.0 * (c.lon - self.lon_min) / (self.lon_max - self.lon_min) - 1.0;
        let ny = 2.0 * (c.lat - self.lat_min) / (self.lat_max - self.lat_min) - 1.0;
        if nx.abs() > 1.0 + 1e-9 || ny.abs() > 1.0 + 1e-9 {
            return Err(Error::Range(format!(
                "coordinate ({}, {}) outside the training bounding box",
                c.lat, c.lon
            )));
        }
        Ok((nx.clamp(-1.0, 1.0), ny.clamp(-1.0, 1.0)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub siren_features: usize,
    pub omega0: f64,
    pub hidden_layers: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Mini-batch size; None trains full-batch.
    pub batch_size: Option<usize>,
    /// Stop as soon as the epoch MSE drops to this level; None runs the
    /// full epoch budget.
    pub target_mse: Option<f64>,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            siren_features: 1024,
            omega0: 30.0,
            hidden_layers: 8,
            hidden_dim: 512,
            out_dim: 128,
            lr: 0.005,
            epochs: 5000,
            batch_size: None,
            target_mse: None,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.siren_features == 0
            || self.hidden_layers == 0
            || self.hidden_dim == 0
            || self.out_dim == 0
        {
            return Err(Error::Validation("distill dimensions must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Validation(format!("lr {} invalid", self.lr)));
        }
        Ok(())
    }

    fn mlp_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 2);
        dims.push(self.siren_features);
        dims.extend(std::iter::repeat_n(self.hidden_dim, self.hidden_layers));
        dims.push(self.out_dim);
        dims
    }
}

/// Coordinate-to-embedding network: frozen features + trained MLP + the
/// normalization bbox.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub fmap: SirenFeatureMap,
    pub mlp: Mlp,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct DistillReport {
    pub epochs_run: usize,
    pub final_mse: f64,
    pub trace: Vec<f64>,
}

/// Mean squared error over all entries plus its gradient w.r.t. pred.
pub fn mse_and_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let d = pred[i] - target[i];
        loss += d * d;
        grad[i] = 2.0 * d / n;
    }
    (loss / n, grad)
}

/// Fit the surrogate to (centroid, embedding) pairs with full-batch AdamW.
pub fn train_distill(
    coords: &[GeoCoord],
    targets: &[f64],
    cfg: &DistillConfig,
) -> Result<(Surrogate, DistillReport)> {
    cfg.validate()?;
    let n = coords.len();
    if n == 0 {
        return Err(Error::Validation("distillation needs at least one pair".into()));
    }
    if targets.len() != n * cfg.out_dim {
        return Err(Error::Validation(format!(
            "{} target values do not match {n} pairs x out_dim {}",
            targets.len(),
            cfg.out_dim
        )));
    }
    let bbox = BBox::of(coords)?;
    let fmap = SirenFeatureMap::new(cfg.siren_features, cfg.omega0, cfg.seed);
    // The feature layer is frozen, so encode the whole dataset once.
    let mut x = Vec::with_capacity(n * cfg.siren_features);
    for &c in coords {
        let (nx, ny) = bbox.normalize(c)?;
        x.extend_from_slice(&fmap.encode(nx, ny)?);
    }

    let mut mlp_rng = rng::pcg(rng::derive_seed(cfg.seed, 0xD157));
    let mut mlp = Mlp::new(&cfg.mlp_dims(), true, &mut mlp_rng)?;
    let hp = AdamParams { lr: cfg.lr, ..AdamParams::default() };
    let mut states: Vec<(AdamState, Option<AdamState>)> = mlp
        .layers
        .iter()
        .map(|l| (AdamState::new(l.w.len()), l.b.as_ref().map(|b| AdamState::new(b.len()))))
        .collect();

    let bs = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::pcg(rng::derive_seed(cfg.seed, 0x0D15B));
    let fdim = cfg.siren_features;
    let odim = cfg.out_dim;
    let mut trace = Vec::new();
    for epoch in 0..cfg.epochs {
        if bs < n {
            rng::shuffle(&mut order, &mut shuffle_rng);
        }
        let mut sse = 0.0;
        for chunk in order.chunks(bs) {
            let (xb_buf, yb_buf);
            let (xb, yb): (&[f64], &[f64]) = if bs == n {
                (&x, targets)
            } else {
                let mut xg = Vec::with_capacity(chunk.len() * fdim);
                let mut yg = Vec::with_capacity(chunk.len() * odim);
                for &r in chunk {
                    xg.extend_from_slice(&x[r * fdim..(r + 1) * fdim]);
                    yg.extend_from_slice(&targets[r * odim..(r + 1) * odim]);
                }
                xb_buf = xg;
                yb_buf = yg;
                (&xb_buf, &yb_buf)
            };
            let (pred, cache) = mlp.forward_cached(xb, chunk.len());
            let (mse, dpred) = mse_and_grad(&pred, yb);
            if !mse.is_finite() {
                return Err(Error::Numeric(format!(
                    "distillation diverged at epoch {epoch}; loss trace: {:?}",
                    &trace[trace.len().saturating_sub(5)..]
                )));
            }
            sse += mse * chunk.len() as f64;
            let (grads, _) = mlp.backward(&cache, &dpred);
            for (li, layer) in mlp.layers.iter_mut().enumerate() {
                states[li].0.step(&hp, &mut layer.w, &grads.dw[li]);
                if let (Some(b), Some(st), Some(db)) =
                    (layer.b.as_mut(), states[li].1.as_mut(), grads.db[li].as_ref())
                {
                    st.step(&hp, b, db);
                }
            }
        }
        trace.push(sse / n as f64);
        if let Some(t) = cfg.target_mse {
            if *trace.last().unwrap() <= t {
                break;
            }
        }
    }
    // Exact full-dataset loss of the final parameters.
    let final_mse = {
        let pred = mlp.forward(&x, n);
        mse_and_grad(&pred, targets).0
    };
    let report = DistillReport { epochs_run: trace.len(), final_mse, trace };
    Ok((Surrogate { fmap, mlp, bbox }, report))
}

/// Embed an arbitrary coordinate inside the training bbox.
pub fn query(coord: GeoCoord, surrogate: &Surrogate) -> Result<Vec<f64>> {
    let (nx, ny) = surrogate.bbox.normalize(coord)?;
    let feats = surrogate.fmap.encode(nx, ny)?;
    Ok(surrogate.mlp.forward(&feats, 1))
}

#[derive(Serialize, Deserialize)]
struct SurrogateHeader {
    siren_features: usize,
    omega0: f64,
    seed: u64,
    bbox: BBox,
    mlp_dims: Vec<usize>,
}

/// One-line JSON header, then raw little-endian f64 payload: SIREN W and b,
/// then each layer's weights and biases.
pub fn write_surrogate(path: impl AsRef<Path>, s: &Surrogate) -> Result<()> {
    let header = SurrogateHeader {
        siren_features: s.fmap.features,
        omega0: s.fmap.omega0,
        seed: s.fmap.seed,
        bbox: s.bbox,
        mlp_dims: {
            let mut d: Vec<usize> = s.mlp.layers.iter().map(|l| l.in_dim).collect();
            d.push(s.mlp.out_dim());
            d
        },
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| Error::Validation(format!("surrogate header: {e}")))?;
    w.write_all(b"\n")?;
    let mut dump = |xs: &[f64]| -> Result<()> {
        for v in xs {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    dump(&s.fmap.w)?;
    dump(&s.fmap.b)?;
    for layer in &s.mlp.layers {
        dump(&layer.w)?;
        dump(layer.b.as_deref().unwrap_or(&[]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_surrogate(path: impl AsRef<Path>) -> Result<Surrogate> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header_bytes = Vec::new();
    let mut offset = 0u64;
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)
            .map_err(|e| Error::Format { offset, msg: format!("header: {e}") })?;
        offset += 1;
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > 1 << 20 {
            return Err(Error::Format { offset, msg: "unterminated header".into() });
        }
    }
    let header: SurrogateHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format { offset: 0, msg: format!("header JSON: {e}") })?;
    if header.mlp_dims.len() < 2 || header.mlp_dims[0] != header.siren_features {
        return Err(Error::Format { offset: 0, msg: "inconsistent surrogate dims".into() });
    }
    let mut take = |len: usize, offset: &mut u64| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format { offset: *offset, msg: format!("payload: {e}") })?;
            *offset += 8;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    };
    let mut fmap = SirenFeatureMap::new(header.siren_features, header.omega0, header.seed);
    fmap.w = take(header.siren_features * 2, &mut offset)?;
    fmap.b = take(header.siren_features, &mut offset)?;
    let mut layers = Vec::new();
    for dims in header.mlp_dims.windows(2) {
        let (din, dout) = (dims[0], dims[1]);
        let w = take(din * dout, &mut offset)?;
        let b = take(dout, &mut offset)?;
        layers.push(crate::nn::Linear { in_dim: din, out_dim: dout, w, b: Some(b) });
    }
    Ok(Surrogate { fmap, mlp: Mlp { layers }, bbox: header.bbox })
}
