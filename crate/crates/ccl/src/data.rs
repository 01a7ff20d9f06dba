//! Synthetic two-domain datasets (shifted Gaussian identity clusters), the
//! feature CSV format, and PK batch sampling.
//!
//! Target ground-truth labels are produced as a separate [`HiddenLabels`]
//! value: training code receives [`TargetSample`]s without any label field,
//! and only evaluation paths get to look inside the hidden labels.

use crate::linalg::Vector;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SourceSample {
    pub input: Vector<f64>,
    pub label: usize,
    pub camera_id: usize,
    pub instance_id: u64,
}

/// A target-domain sample. Deliberately label-free.
#[derive(Debug, Clone)]
pub struct TargetSample {
    pub input: Vector<f64>,
    pub camera_id: usize,
    pub instance_id: u64,
}

/// Ground-truth target labels, indexed like the target sample list. Held by
/// evaluation code only; the training loop never reads them.
#[derive(Debug, Clone)]
pub struct HiddenLabels(Vec<usize>);

impl HiddenLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Evaluation-side access.
    pub fn for_evaluation(&self) -> &[usize] {
        &self.0
    }
}

/// Parameters of the synthetic generator. Class centers are Gaussian with
/// spread `sigma_between`; samples scatter around their center with
/// `sigma_within`. Target samples pass through a fixed domain-shift map:
/// per-dimension scaling, a rotation in the first two dimensions, then a
/// translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes_per_domain: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    pub sigma_between: f64,
    pub sigma_within: f64,
    pub rotation_deg: f64,
    pub translation_norm: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub cameras_per_domain: usize,
    /// Spread of the per-camera offset vectors. Cameras are a nuisance factor
    /// shared by both domains (the target's copies pass through the domain
    /// shift); it is what makes cross-camera retrieval non-trivial.
    pub sigma_camera: f64,
    pub seed: u64,
    /// When set, source and target class centers are drawn from identically
    /// seeded streams, making the two class structures congruent.
    pub shared_center_seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes_per_domain: 10,
            samples_per_class: 50,
            input_dim: 16,
            sigma_between: 1.5,
            sigma_within: 0.45,
            rotation_deg: 30.0,
            translation_norm: 1.0,
            scale_min: 0.8,
            scale_max: 1.25,
            cameras_per_domain: 4,
            sigma_camera: 1.05,
            seed: 0,
            shared_center_seed: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes_per_domain == 0 || self.samples_per_class == 0 || self.input_dim == 0 {
            return Err(Error::Config("synthetic spec: counts must be positive".into()));
        }
        if !(self.sigma_between > self.sigma_within && self.sigma_within > 0.0) {
            return Err(Error::Config(
                "synthetic spec: need sigma_between > sigma_within > 0".into(),
            ));
        }
        if self.cameras_per_domain == 0 {
            return Err(Error::Config("synthetic spec: need >= 1 camera".into()));
        }
        if self.sigma_camera < 0.0 {
            return Err(Error::Config("synthetic spec: sigma_camera must be >= 0".into()));
        }
        if !(self.scale_min > 0.0 && self.scale_max >= self.scale_min) {
            return Err(Error::Config("synthetic spec: bad scale range".into()));
        }
        Ok(())
    }
}

pub(crate) fn splitmix(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic seeded RNG for a named training sub-stream.
pub fn stream_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed, salt))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gauss_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vector<f64> {
    Vector::new((0..dim).map(|_| sigma * gauss(rng)).collect())
}

/// The fixed domain-shift map applied to every target sample.
struct DomainShift {
    scales: Vec<f64>,
    cos: f64,
    sin: f64,
    translation: Vector<f64>,
}

impl DomainShift {
    fn from_spec(spec: &SyntheticSpec) -> Self {
        let mut rng = stream_rng(spec.seed, 4);
        let scales: Vec<f64> = (0..spec.input_dim)
            .map(|_| rng.gen_range(spec.scale_min..=spec.scale_max))
            .collect();
        let angle = spec.rotation_deg.to_radians();
        let dir = gauss_vec(&mut rng, spec.input_dim, 1.0);
        let translation = match dir.normalized() {
            Ok(unit) => unit.scale(spec.translation_norm),
            Err(_) => Vector::zeros(spec.input_dim),
        };
        Self {
            scales,
            cos: angle.cos(),
            sin: angle.sin(),
            translation,
        }
    }

    fn identity(dim: usize) -> Self {
        Self {
            scales: vec![1.0; dim],
            cos: 1.0,
            sin: 0.0,
            translation: Vector::zeros(dim),
        }
    }

    fn apply(&self, x: &Vector<f64>) -> Vector<f64> {
        let mut out: Vec<f64> = x
            .data
            .iter()
            .zip(&self.scales)
            .map(|(&v, &s)| v * s)
            .collect();
        if out.len() >= 2 {
            let (a, b) = (out[0], out[1]);
            out[0] = self.cos * a - self.sin * b;
            out[1] = self.sin * a + self.cos * b;
        }
        let mut v = Vector::new(out);
        v.axpy(1.0, &self.translation);
        v
    }
}

/// Deterministic synthetic two-domain dataset. Identity of the domain-shift
/// map can be forced by setting rotation 0, translation 0 and a degenerate
/// scale range.
pub fn generate(
    spec: &SyntheticSpec,
) -> Result<(Vec<SourceSample>, Vec<TargetSample>, HiddenLabels)> {
    spec.validate()?;

    let center_rng_for = |salt: u64| match spec.shared_center_seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => stream_rng(spec.seed, salt),
    };

    let draw_centers = |rng: &mut ChaCha8Rng| -> Vec<Vector<f64>> {
        (0..spec.classes_per_domain)
            .map(|_| gauss_vec(rng, spec.input_dim, spec.sigma_between))
            .collect()
    };

    let mut source_center_rng = center_rng_for(1);
    let source_centers = draw_centers(&mut source_center_rng);
    let mut target_center_rng = center_rng_for(2);
    let target_centers = draw_centers(&mut target_center_rng);

    let shift = if spec.rotation_deg == 0.0
        && spec.translation_norm == 0.0
        && spec.scale_min == 1.0
        && spec.scale_max == 1.0
    {
        DomainShift::identity(spec.input_dim)
    } else {
        DomainShift::from_spec(spec)
    };

    // camera offsets are shared across domains; the target's copies still go
    // through the domain shift along with everything else
    let mut camera_rng = stream_rng(spec.seed, 5);
    let camera_offsets: Vec<Vector<f64>> = (0..spec.cameras_per_domain)
        .map(|_| gauss_vec(&mut camera_rng, spec.input_dim, spec.sigma_camera))
        .collect();

    let mut source = Vec::new();
    let mut noise_rng = stream_rng(spec.seed, 2);
    let mut instance_id = 0u64;
    for (label, center) in source_centers.iter().enumerate() {
        for i in 0..spec.samples_per_class {
            let noise = gauss_vec(&mut noise_rng, spec.input_dim, spec.sigma_within);
            let camera_id = i % spec.cameras_per_domain;
            source.push(SourceSample {
                input: center.add(&noise).add(&camera_offsets[camera_id]),
                label,
                camera_id,
                instance_id,
            });
            instance_id += 1;
        }
    }

    let mut target = Vec::new();
    let mut labels = Vec::new();
    let mut noise_rng = stream_rng(spec.seed, 3);
    for (label, center) in target_centers.iter().enumerate() {
        for i in 0..spec.samples_per_class {
            let noise = gauss_vec(&mut noise_rng, spec.input_dim, spec.sigma_within);
            let camera_id = i % spec.cameras_per_domain;
            target.push(TargetSample {
                input: shift.apply(&center.add(&noise).add(&camera_offsets[camera_id])),
                camera_id,
                instance_id,
            });
            labels.push(label);
            instance_id += 1;
        }
    }

    Ok((source, target, HiddenLabels::new(labels)))
}

/// One row of the feature CSV. `label` is `None` for unlabeled target rows
/// (serialized as the literal token `NA`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub instance_id: u64,
    pub camera_id: usize,
    pub label: Option<usize>,
    pub feature: Vector<f64>,
}

/// Write the feature CSV: header `instance_id,camera_id,label,dim,f_0,...`,
/// UTF-8, LF line endings. Float serialization uses Rust's shortest
/// round-trip representation, so a write/read cycle is lossless.
pub fn write_features(path: &Path, dim: usize, records: &[FeatureRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "instance_id,camera_id,label,dim")?;
    for i in 0..dim {
        write!(w, ",f_{i}")?;
    }
    writeln!(w)?;
    for r in records {
        if r.feature.dim() != dim {
            return Err(Error::Shape(format!(
                "write_features: record {} has dim {}, expected {dim}",
                r.instance_id,
                r.feature.dim()
            )));
        }
        match r.label {
            Some(l) => write!(w, "{},{},{},{}", r.instance_id, r.camera_id, l, dim)?,
            None => write!(w, "{},{},NA,{}", r.instance_id, r.camera_id, dim)?,
        }
        for v in &r.feature.data {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<(usize, Vec<FeatureRecord>)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let path_str = path.display().to_string();
    let err = |line: usize, msg: String| Error::Parse {
        path: path_str.clone(),
        line,
        msg,
    };

    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| err(1, "missing header".into()))?
        .map_err(Error::Io)?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..4] != ["instance_id", "camera_id", "label", "dim"] {
        return Err(err(1, format!("bad header: {header}")));
    }
    let dim = cols.len() - 4;
    for (i, c) in cols[4..].iter().enumerate() {
        if *c != format!("f_{i}") {
            return Err(err(1, format!("bad feature column name: {c}")));
        }
    }

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(Error::Io)?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 4 {
            return Err(err(
                line_no,
                format!("expected {} columns, got {}", dim + 4, fields.len()),
            ));
        }
        let instance_id: u64 = fields[0]
            .parse()
            .map_err(|e| err(line_no, format!("bad instance_id: {e}")))?;
        let camera_id: usize = fields[1]
            .parse()
            .map_err(|e| err(line_no, format!("bad camera_id: {e}")))?;
        let label = match fields[2] {
            "NA" => None,
            s => Some(
                s.parse()
                    .map_err(|e| err(line_no, format!("bad label: {e}")))?,
            ),
        };
        let row_dim: usize = fields[3]
            .parse()
            .map_err(|e| err(line_no, format!("bad dim: {e}")))?;
        if row_dim != dim {
            return Err(err(
                line_no,
                format!("row declares dim {row_dim}, header has {dim}"),
            ));
        }
        let mut feature = Vec::with_capacity(dim);
        for f in &fields[4..] {
            feature.push(
                f.parse::<f64>()
                    .map_err(|e| err(line_no, format!("bad feature value '{f}': {e}")))?,
            );
        }
        records.push(FeatureRecord {
            instance_id,
            camera_id,
            label,
            feature: Vector::new(feature),
        });
    }
    Ok((dim, records))
}

/// Draw a P x K batch: P distinct pseudo-classes, K instances each. Classes
/// need >= 2 members to be usable (the triplet loss needs a positive);
/// classes with fewer than K members are sampled with replacement.
/// Deterministic given the seed.
pub fn pk_sample(labels: &[Option<usize>], p: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if p < 2 || k < 2 {
        return Err(Error::Config("pk_sample: need P >= 2 and K >= 2".into()));
    }
    let mut by_class: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            match by_class.binary_search_by_key(c, |(cls, _)| *cls) {
                Ok(pos) => by_class[pos].1.push(i),
                Err(pos) => by_class.insert(pos, (*c, vec![i])),
            }
        }
    }
    by_class.retain(|(_, members)| members.len() >= 2);
    if by_class.len() < 2 {
        return Err(Error::DegenerateBatch(
            "pk_sample: fewer than 2 classes with >= 2 members".into(),
        ));
    }
    if p > by_class.len() {
        return Err(Error::DegenerateBatch(format!(
            "pk_sample: P={p} exceeds {} available classes",
            by_class.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // choose P distinct classes
    let mut class_order: Vec<usize> = (0..by_class.len()).collect();
    for i in (1..class_order.len()).rev() {
        class_order.swap(i, rng.gen_range(0..=i));
    }
    let mut batch = Vec::with_capacity(p * k);
    for &ci in class_order.iter().take(p) {
        let members = &by_class[ci].1;
        if members.len() >= k {
            let mut order: Vec<usize> = (0..members.len()).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            batch.extend(order.iter().take(k).map(|&j| members[j]));
        } else {
            for _ in 0..k {
                batch.push(members[rng.gen_range(0..members.len())]);
            }
        }
    }
    Ok(batch)
}
