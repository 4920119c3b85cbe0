//! Synthetic dataset with planted latent structure.
//!
//! Every cell of an R x C hex patch carries a latent vector, smoothed over
//! the grid so geography matters. Entities co-visit cells whose latents
//! resemble their own anchor (only the first `mobility_dims` latent
//! dimensions drive visits), modality vectors are noisy linear lifts of the
//! full latent, and downstream targets are held-out linear functions of it.
//! The latents double as a ground-truth oracle: a probe on them must predict
//! every target almost perfectly, and a pipeline is judged by how much of
//! that it recovers.

use crate::align::{ModalityData, ModalityRecord};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::EventRecord;
use crate::hexgrid::{CellId, GridConfig, NEIGHBOR_OFFSETS};
use crate::probe::{TaskDataset, TaskUnit, UnitKind};
use crate::rng;
use rand::Rng;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub latent_dim: usize,
    /// Latent dimensions visible to the mobility process; the rest reach the
    /// pipeline only through the auxiliary modalities.
    pub mobility_dims: usize,
    pub n_entities: usize,
    pub n_buckets: usize,
    pub visits_min: usize,
    pub visits_max: usize,
    pub text_dim: usize,
    pub image_dim: usize,
    pub demo_dim: usize,
    pub noise_text: f64,
    pub noise_image: f64,
    pub noise_demo: f64,
    pub noise_target: f64,
    /// Sharpness of the visit softmax over latent similarity.
    pub softmax_sharpness: f64,
    /// Spread of an entity's latent around its anchor cell's latent.
    pub anchor_noise: f64,
    pub smoothing_passes: usize,
    pub point_units: usize,
    pub admin_block: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rows: 20,
            cols: 20,
            latent_dim: 8,
            mobility_dims: 4,
            n_entities: 2000,
            n_buckets: 54,
            visits_min: 2,
            visits_max: 4,
            text_dim: 1024,
            image_dim: 768,
            demo_dim: 36,
            noise_text: 0.05,
            noise_image: 0.05,
            noise_demo: 0.05,
            noise_target: 0.0,
            softmax_sharpness: 4.0,
            anchor_noise: 0.3,
            smoothing_passes: 2,
            point_units: 100,
            admin_block: 4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Validation("region must have positive extent".into()));
        }
        if self.latent_dim == 0 || self.mobility_dims == 0 || self.mobility_dims > self.latent_dim
        {
            return Err(Error::Validation(format!(
                "mobility_dims {} must be in 1..=latent_dim {}",
                self.mobility_dims, self.latent_dim
            )));
        }
        if self.n_entities == 0 || self.n_buckets == 0 {
            return Err(Error::Validation("need entities and buckets".into()));
        }
        if self.visits_min < 2 || self.visits_max < self.visits_min {
            return Err(Error::Validation(format!(
                "visit range {}..={} must start at 2",
                self.visits_min, self.visits_max
            )));
        }
        if self.text_dim == 0 || self.image_dim == 0 || self.demo_dim == 0 {
            return Err(Error::Validation("modality dims must be positive".into()));
        }
        for (name, v) in [
            ("noise_text", self.noise_text),
            ("noise_image", self.noise_image),
            ("noise_demo", self.noise_demo),
            ("noise_target", self.noise_target),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.admin_block == 0 || self.point_units == 0 {
            return Err(Error::Validation("admin_block and point_units must be positive".into()));
        }
        Ok(())
    }
}

pub struct SynthData {
    pub cells: Vec<CellId>,
    /// Ground-truth latents, standardized per dimension.
    pub latents: EmbeddingTable,
    pub events: Vec<EventRecord>,
    pub modality: ModalityData,
    pub tasks: Vec<TaskDataset>,
}

/// Fixed random lift matrices from latent space into each modality.
pub(crate) struct Lifts {
    text: Vec<f64>,
    image: Vec<f64>,
    demo: Vec<f64>,
    latent_dim: usize,
    text_dim: usize,
    image_dim: usize,
    demo_dim: usize,
}

impl Lifts {
    pub(crate) fn new(cfg: &SynthConfig, rng: &mut Pcg64Mcg) -> Self {
        let scale = 1.0 / (cfg.latent_dim as f64).sqrt();
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng::gaussian(rng) * scale).collect()
        };
        Lifts {
            text: draw(cfg.text_dim * cfg.latent_dim),
            image: draw(cfg.image_dim * cfg.latent_dim),
            demo: draw(cfg.demo_dim * cfg.latent_dim),
            latent_dim: cfg.latent_dim,
            text_dim: cfg.text_dim,
            image_dim: cfg.image_dim,
            demo_dim: cfg.demo_dim,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Noisy lifts of one latent vector into (text, image, demo). With zero
/// noise levels the outputs are a pure function of the latent.
pub(crate) fn modality_vectors(
    z: &[f64],
    lifts: &Lifts,
    noise: (f64, f64, f64),
    rng: &mut Pcg64Mcg,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let lift = |a: &[f64], out_dim: usize, sigma: f64, rng: &mut Pcg64Mcg| -> Vec<f64> {
        (0..out_dim)
            .map(|i| {
                let base: f64 = (0..lifts.latent_dim)
                    .map(|k| a[i * lifts.latent_dim + k] * z[k])
                    .sum();
                if sigma > 0.0 {
                    base + sigma * rng::gaussian(rng)
                } else {
                    base
                }
            })
            .collect()
    };
    let text = lift(&lifts.text, lifts.text_dim, noise.0, rng);
    let image = lift(&lifts.image, lifts.image_dim, noise.1, rng);
    let demo: Vec<f64> =
        lift(&lifts.demo, lifts.demo_dim, noise.2, rng).into_iter().map(softplus).collect();
    (text, image, demo)
}

/// Generate the full dataset. Deterministic given the seed; entity streams
/// are derived per entity index.
pub fn generate(cfg: &SynthConfig, grid: &GridConfig) -> Result<SynthData> {
    cfg.validate()?;
    grid.validate()?;
    let n = cfg.rows * cfg.cols;
    let ld = cfg.latent_dim;
    let md = cfg.mobility_dims;

    let mut cells = Vec::with_capacity(n);
    for q in 0..cfg.cols as i64 {
        for r in 0..cfg.rows as i64 {
            cells.push(CellId::from_axial(grid.resolution, q, r)?);
        }
    }
    cells.sort();
    let pos_of = |cell: CellId| -> usize {
        cells.binary_search(&cell).expect("generated cell")
    };

    // Latent field: iid gaussians, then neighbor-mean smoothing passes, then
    // per-dimension standardization.
    let mut latent_rng = rng::pcg(rng::derive_seed(cfg.seed, 0x1A7E17));
    let mut z: Vec<f64> = (0..n * ld).map(|_| rng::gaussian(&mut latent_rng)).collect();
    for _ in 0..cfg.smoothing_passes {
        let mut smoothed = vec![0.0; n * ld];
        for (i, &cell) in cells.iter().enumerate() {
            let (q, r) = cell.axial();
            let mut acc: Vec<f64> = z[i * ld..(i + 1) * ld].to_vec();
            let mut count = 1.0;
            for (dq, dr) in NEIGHBOR_OFFSETS {
                if let Ok(nb) = CellId::from_axial(grid.resolution, q + dq, r + dr) {
                    if let Ok(j) = cells.binary_search(&nb) {
                        for (a, v) in acc.iter_mut().zip(&z[j * ld..(j + 1) * ld]) {
                            *a += v;
                        }
                        count += 1.0;
                    }
                }
            }
            for (s, a) in smoothed[i * ld..(i + 1) * ld].iter_mut().zip(&acc) {
                *s = a / count;
            }
        }
        z = smoothed;
    }
    for k in 0..ld {
        let mean: f64 = (0..n).map(|i| z[i * ld + k]).sum::<f64>() / n as f64;
        let var: f64 = (0..n).map(|i| (z[i * ld + k] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-12);
        for i in 0..n {
            z[i * ld + k] = (z[i * ld + k] - mean) / std;
        }
    }

    // Visits: per (entity, bucket), Gumbel top-k over softmax logits of
    // mobility-subspace similarity to the entity's anchor latent.
    let beta = cfg.softmax_sharpness / (md as f64).sqrt();
    let mut events = Vec::new();
    for e in 0..cfg.n_entities {
        let mut erng = rng::pcg(rng::derive_seed(cfg.seed, 0xE17717 ^ (e as u64) << 8));
        let anchor = erng.gen_range(0..n);
        let u: Vec<f64> = (0..md)
            .map(|k| z[anchor * ld + k] + cfg.anchor_noise * rng::gaussian(&mut erng))
            .collect();
        let logits: Vec<f64> = (0..n)
            .map(|i| beta * (0..md).map(|k| z[i * ld + k] * u[k]).sum::<f64>())
            .collect();
        let entity = format!("e{e}");
        for bucket in 0..cfg.n_buckets as u32 {
            let k = erng.gen_range(cfg.visits_min..=cfg.visits_max).min(n);
            // Gumbel top-k = k distinct draws from the softmax.
            let mut keyed: Vec<(f64, usize)> = logits
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let g1: f64 = erng.gen_range(f64::MIN_POSITIVE..1.0);
                    (l - (-g1.ln()).ln(), i)
                })
                .collect();
            keyed.select_nth_unstable_by(k - 1, |a, b| b.0.partial_cmp(&a.0).unwrap());
            for &(_, i) in keyed[..k].iter() {
                events.push(EventRecord { entity: entity.clone(), cell: cells[i], bucket });
            }
        }
    }

    // Modalities.
    let mut lift_rng = rng::pcg(rng::derive_seed(cfg.seed, 0x11F7));
    let lifts = Lifts::new(cfg, &mut lift_rng);
    let mut noise_rng = rng::pcg(rng::derive_seed(cfg.seed, 0x2015E));
    let mut records = Vec::with_capacity(n);
    for (i, &cell) in cells.iter().enumerate() {
        let (text, image, demo) = modality_vectors(
            &z[i * ld..(i + 1) * ld],
            &lifts,
            (cfg.noise_text, cfg.noise_image, cfg.noise_demo),
            &mut noise_rng,
        );
        records.push(ModalityRecord { cell, text: Some(text), image: Some(image), demo: Some(demo) });
    }
    let modality = ModalityData::from_records(records)?;

    // Tasks: held-out linear functions of the latent.
    let mut task_rng = rng::pcg(rng::derive_seed(cfg.seed, 0x7A5C5));
    let linear_target = |zi: &[f64], w: &[f64], rng: &mut Pcg64Mcg| -> f64 {
        let base: f64 =
            w.iter().zip(zi).map(|(a, b)| a * b).sum::<f64>() / (w.len() as f64).sqrt();
        if cfg.noise_target > 0.0 {
            base + cfg.noise_target * rng::gaussian(rng)
        } else {
            base
        }
    };
    let mut tasks = Vec::new();
    {
        let w: Vec<f64> = (0..md).map(|_| rng::gaussian(&mut task_rng)).collect();
        let units = cells
            .iter()
            .enumerate()
            .map(|(i, &c)| TaskUnit {
                unit_id: format!("g{i}"),
                cells: vec![c],
                target: linear_target(&z[i * ld..i * ld + md], &w, &mut task_rng),
            })
            .collect();
        tasks.push(TaskDataset::new("grid_mobility".into(), UnitKind::Grid, units)?);
    }
    {
        let w: Vec<f64> = (0..ld - md).map(|_| rng::gaussian(&mut task_rng)).collect();
        let units = cells
            .iter()
            .enumerate()
            .map(|(i, &c)| TaskUnit {
                unit_id: format!("g{i}"),
                cells: vec![c],
                target: linear_target(&z[i * ld + md..(i + 1) * ld], &w, &mut task_rng),
            })
            .collect();
        tasks.push(TaskDataset::new("grid_modality".into(), UnitKind::Grid, units)?);
    }
    {
        let w: Vec<f64> = (0..ld).map(|_| rng::gaussian(&mut task_rng)).collect();
        let mut picks: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut picks, &mut task_rng);
        picks.truncate(cfg.point_units.min(n));
        let units = picks
            .into_iter()
            .map(|i| TaskUnit {
                unit_id: format!("p{i}"),
                cells: vec![cells[i]],
                target: linear_target(&z[i * ld..(i + 1) * ld], &w, &mut task_rng),
            })
            .collect();
        tasks.push(TaskDataset::new("point_sample".into(), UnitKind::Point, units)?);
    }
    {
        let w: Vec<f64> = (0..ld).map(|_| rng::gaussian(&mut task_rng)).collect();
        let b = cfg.admin_block;
        let mut units = Vec::new();
        for bq in 0..cfg.cols.div_ceil(b) {
            for br in 0..cfg.rows.div_ceil(b) {
                let mut members = Vec::new();
                let mut mean = vec![0.0; ld];
                for q in (bq * b)..((bq + 1) * b).min(cfg.cols) {
                    for r in (br * b)..((br + 1) * b).min(cfg.rows) {
                        let cell = CellId::from_axial(grid.resolution, q as i64, r as i64)?;
                        let i = pos_of(cell);
                        members.push(cell);
                        for (m, v) in mean.iter_mut().zip(&z[i * ld..(i + 1) * ld]) {
                            *m += v;
                        }
                    }
                }
                for m in mean.iter_mut() {
                    *m /= members.len() as f64;
                }
                units.push(TaskUnit {
                    unit_id: format!("a{bq}_{br}"),
                    cells: members,
                    target: linear_target(&mean, &w, &mut task_rng),
                });
            }
        }
        tasks.push(TaskDataset::new("admin_mean".into(), UnitKind::Admin, units)?);
    }

    let latents = EmbeddingTable::new(cells.clone(), ld, z)?;
    Ok(SynthData { cells, latents, events, modality, tasks })
}

/// Files written by [`write_all`].
pub struct SynthFiles {
    pub events: PathBuf,
    pub text: PathBuf,
    pub image: PathBuf,
    pub demo: PathBuf,
    pub latents: PathBuf,
    pub tasks: Vec<PathBuf>,
}

/// Write every artifact in the formats the rest of the pipeline consumes:
/// a pre-tokenized event log, binary text/image tables, a TSV demographic
/// table, task files, and the ground-truth latents.
pub fn write_all(data: &SynthData, dir: impl AsRef<Path>) -> Result<SynthFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("tasks"))?;
    let events = dir.join("events.tsv");
    crate::io::write_events(&events, &data.events)?;
    let text = dir.join("text.emb");
    crate::io::write_embeddings(&text, data.modality.text.as_ref().expect("synth text"))?;
    let image = dir.join("image.emb");
    crate::io::write_embeddings(&image, data.modality.image.as_ref().expect("synth image"))?;
    let demo = dir.join("demo.tsv");
    crate::io::write_modality_tsv(&demo, data.modality.demo.as_ref().expect("synth demo"))?;
    let latents = dir.join("latents.emb");
    crate::io::write_embeddings(&latents, &data.latents)?;
    let mut tasks = Vec::new();
    for t in &data.tasks {
        let p = dir.join("tasks").join(format!("{}.tsv", t.name));
        crate::io::write_task(&p, t)?;
        tasks.push(p);
    }
    Ok(SynthFiles { events, text, image, demo, latents, tasks })
}
