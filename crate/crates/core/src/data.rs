//! Synthetic datasets, stratified splits and the plain-text dataset format.
//!
//! File layout:
//!
//! ```text
//! # tcr-dataset v1, n=<n>, d=<d>, c=<c>, mask=<0|1>
//! id,label[,mask],f1,...,fd
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;
use crate::{Error, Result};

/// Feature matrix (row-major `n x dim`), labels, optional corruption mask and
/// sample ids. Ids are unique and survive splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    mask: Option<Vec<bool>>,
    ids: Vec<u64>,
}

impl Dataset {
    pub fn new(
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        mask: Option<Vec<bool>>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = labels.len();
        if dim == 0 {
            return Err(Error::Data("feature dimension must be positive".into()));
        }
        if classes < 2 {
            return Err(Error::Data(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if features.len() != n * dim {
            return Err(Error::Data(format!(
                "{} feature values for {n} rows of dimension {dim}",
                features.len()
            )));
        }
        if ids.len() != n || mask.as_ref().is_some_and(|m| m.len() != n) {
            return Err(Error::Data("column lengths disagree".into()));
        }
        if let Some((row, l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Data(format!(
                "row {row}: label {l} out of range for {classes} classes"
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate sample ids".into()));
        }
        Ok(Self {
            dim,
            classes,
            features,
            labels,
            mask,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Whether row `i` is marked corrupted (false without a mask).
    pub fn is_corrupted(&self, i: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[i])
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Replaces labels and mask, keeping features and ids.
    pub fn with_labels(&self, labels: Vec<usize>, mask: Option<Vec<bool>>) -> Result<Self> {
        Self::new(
            self.dim,
            self.classes,
            self.features.clone(),
            labels,
            mask,
            self.ids.clone(),
        )
    }

    /// Replaces features and mask, keeping labels and ids.
    pub fn with_features(&self, features: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Self> {
        Self::new(
            self.dim,
            self.classes,
            features,
            self.labels.clone(),
            mask,
            self.ids.clone(),
        )
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Self {
            dim: self.dim,
            classes: self.classes,
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            mask: self
                .mask
                .as_ref()
                .map(|m| rows.iter().map(|&r| m[r]).collect()),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Parameters of the synthetic blob generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobLayout {
    /// Distance of every cluster center from the origin.
    pub radius: f64,
    /// Angular offset of the first center, in units of the inter-center angle.
    pub phase: f64,
}

impl Default for BlobLayout {
    fn default() -> Self {
        Self {
            radius: 1.0,
            phase: 0.0,
        }
    }
}

/// `classes` isotropic Gaussian clusters with `per_class` points each.
///
/// Centers are spaced evenly on a circle of radius 1 lying in a seeded
/// random plane of the feature space (for `dim == 1`, evenly on `[-1, 1]`).
/// Rows are ordered by class.
pub fn gaussian_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    gaussian_blobs_with_layout(classes, per_class, dim, spread, BlobLayout::default(), seed)
}

pub fn gaussian_blobs_with_layout(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    layout: BlobLayout,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::Config(format!(
            "blobs need classes >= 2, per_class >= 1, dim >= 1 (got {classes}, {per_class}, {dim})"
        )));
    }
    if !(spread > 0.0) || !spread.is_finite() || !(layout.radius > 0.0) {
        return Err(Error::Config(format!(
            "spread and radius must be positive (got {spread}, {})",
            layout.radius
        )));
    }
    let mut rng = rng::seeded(seed);
    let centers = blob_centers(classes, dim, layout, &mut rng);
    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for c in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(c + spread * z);
            }
            labels.push(class);
        }
    }
    Dataset::new(
        dim,
        classes,
        features,
        labels,
        None,
        (0..n as u64).collect(),
    )
}

fn blob_centers(
    classes: usize,
    dim: usize,
    layout: BlobLayout,
    rng: &mut rng::Rng,
) -> Vec<Vec<f64>> {
    if dim == 1 {
        return (0..classes)
            .map(|k| {
                let t = -1.0 + 2.0 * k as f64 / (classes - 1) as f64;
                vec![layout.radius * t]
            })
            .collect();
    }
    // Random orthonormal pair (u, v) via Gram-Schmidt.
    let gauss =
        |rng: &mut rng::Rng| -> Vec<f64> { (0..dim).map(|_| StandardNormal.sample(rng)).collect() };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut u = gauss(rng);
    let nu = norm(&u);
    u.iter_mut().for_each(|x| *x /= nu);
    let mut v = gauss(rng);
    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(&u).for_each(|(x, a)| *x -= dot * a);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let offset: f64 = rng.random::<f64>();
    let step = std::f64::consts::TAU / classes as f64;
    (0..classes)
        .map(|k| {
            let angle = step * (k as f64 + layout.phase + offset);
            let (s, c) = angle.sin_cos();
            u.iter()
                .zip(&v)
                .map(|(a, b)| layout.radius * (c * a + s * b))
                .collect()
        })
        .collect()
}

/// Seeded stratified split. Each class contributes
/// `round(test_fraction * class_size)` rows to the test set; row order within
/// each output follows the original order.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut is_test = vec![false; dataset.len()];
    for class in 0..dataset.classes() {
        let mut rows: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.label(i) == class)
            .collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has {} sample(s); stratified split needs at least 2",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let take = (test_fraction * rows.len() as f64).round() as usize;
        for &r in &rows[..take] {
            is_test[r] = true;
        }
    }
    let (test_rows, train_rows): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| is_test[i]);
    Ok((dataset.subset(&train_rows), dataset.subset(&test_rows)))
}

pub fn to_text(dataset: &Dataset) -> String {
    let mut out = String::new();
    let has_mask = dataset.mask.is_some();
    writeln!(
        out,
        "# tcr-dataset v1, n={}, d={}, c={}, mask={}",
        dataset.len(),
        dataset.dim,
        dataset.classes,
        u8::from(has_mask)
    )
    .expect("write to string");
    for i in 0..dataset.len() {
        write!(out, "{},{}", dataset.ids[i], dataset.labels[i]).expect("write to string");
        if let Some(mask) = &dataset.mask {
            write!(out, ",{}", u8::from(mask[i])).expect("write to string");
        }
        for v in dataset.row(i) {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

struct Header {
    n: usize,
    dim: usize,
    classes: usize,
    mask: bool,
}

fn parse_header(line: &str) -> Result<Header> {
    let bad = |message: String| Error::Parse {
        line: Some(1),
        message,
    };
    let rest = line
        .strip_prefix("# tcr-dataset v1,")
        .ok_or_else(|| bad(format!("unrecognized header {line:?}")))?;
    let mut fields = [None; 4];
    for part in rest.split(',') {
        let (key, value) = part
            .trim()
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field {part:?}")))?;
        let value: usize = value
            .parse()
            .map_err(|_| bad(format!("header field {key} is not an integer")))?;
        let slot = match key {
            "n" => 0,
            "d" => 1,
            "c" => 2,
            "mask" => 3,
            other => return Err(bad(format!("unknown header field {other:?}"))),
        };
        fields[slot] = Some(value);
    }
    let get = |i: usize, name: &str| fields[i].ok_or_else(|| bad(format!("header lacks {name}")));
    let mask = get(3, "mask")?;
    if mask > 1 {
        return Err(bad("mask flag must be 0 or 1".into()));
    }
    Ok(Header {
        n: get(0, "n")?,
        dim: get(1, "d")?,
        classes: get(2, "c")?,
        mask: mask == 1,
    })
}

pub fn from_text(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(l) if !l.trim().is_empty() => parse_header(l)?,
        _ => return Err(Error::Data("dataset file is empty".into())),
    };
    if header.n == 0 {
        return Err(Error::Data("dataset has no rows".into()));
    }
    let width = 2 + usize::from(header.mask) + header.dim;
    let mut features = Vec::with_capacity(header.n * header.dim);
    let mut labels = Vec::with_capacity(header.n);
    let mut mask = header.mask.then(|| Vec::with_capacity(header.n));
    let mut ids = Vec::with_capacity(header.n);

    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: Some(line_no),
            message,
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != width {
            return Err(err(format!(
                "expected {width} columns, found {}",
                cols.len()
            )));
        }
        let id: u64 = cols[0]
            .parse()
            .map_err(|_| err(format!("bad sample id {:?}", cols[0])))?;
        let label: usize = cols[1]
            .parse()
            .map_err(|_| err(format!("bad label {:?}", cols[1])))?;
        if label >= header.classes {
            return Err(err(format!(
                "row {}: label {label} out of range for {} classes",
                labels.len(),
                header.classes
            )));
        }
        let mut next = 2;
        if let Some(m) = mask.as_mut() {
            m.push(match cols[2] {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("bad mask value {other:?}"))),
            });
            next = 3;
        }
        for c in &cols[next..] {
            let v: f64 = c.parse().map_err(|_| err(format!("bad feature {c:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite feature {c:?}")));
            }
            features.push(v);
        }
        ids.push(id);
        labels.push(label);
    }
    if labels.len() != header.n {
        return Err(Error::Data(format!(
            "header announces {} rows, found {}",
            header.n,
            labels.len()
        )));
    }
    Dataset::new(header.dim, header.classes, features, labels, mask, ids)
}

pub fn save(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    fs::write(path, to_text(dataset))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    from_text(&fs::read_to_string(path)?)
}

/// Draws a permutation of `0..n`.
pub(crate) fn shuffled_indices(n: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
