//! In-memory datasets and the synthetic generators.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Rng, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub name: String,
    /// Input width.
    pub d: usize,
    /// Number of classes.
    pub q: usize,
    /// `(height, width)` for image data.
    pub image_shape: Option<(usize, usize)>,
}

/// Which half of a BlockMNIST image holds the null block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullBlock {
    Top,
    Bottom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x d`.
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub meta: DatasetMeta,
    /// Per-sample null-block position (BlockMNIST only).
    pub null_blocks: Option<Vec<NullBlock>>,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, meta: DatasetMeta) -> Result<Self> {
        let (n, d) = inputs.dims2()?;
        if labels.len() != n {
            return Err(Error::dim(format!("{} labels for {n} inputs", labels.len())));
        }
        if d != meta.d {
            return Err(Error::dim(format!("inputs have width {d}, metadata says {}", meta.d)));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= meta.q) {
            return Err(Error::invalid(format!("label {bad} outside 0..{}", meta.q)));
        }
        if let Some((h, w)) = meta.image_shape {
            if h * w != d {
                return Err(Error::dim(format!("image shape {h}x{w} does not match width {d}")));
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            meta,
            null_blocks: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.meta.q];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("empty selection"));
        }
        let d = self.meta.d;
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!(
                    "index {i} out of range for {} samples",
                    self.len()
                )));
            }
            data.extend_from_slice(self.input(i));
        }
        Ok(Dataset {
            inputs: Tensor::from_parts(vec![indices.len(), d], data),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            meta: self.meta.clone(),
            null_blocks: self
                .null_blocks
                .as_ref()
                .map(|nb| indices.iter().map(|&i| nb[i]).collect()),
        })
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Keeps the listed classes and relabels them `0..classes.len()` in the
    /// given order.
    pub fn filter_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect();
        let mut out = self.select(&idx)?;
        for l in &mut out.labels {
            *l = classes.iter().position(|c| c == l).unwrap_or(0);
        }
        out.meta.q = classes.len();
        Ok(out)
    }

    /// Null-block membership of every pixel of sample `i`.
    pub fn null_mask(&self, i: usize) -> Option<Vec<bool>> {
        let pos = self.null_blocks.as_ref()?.get(i)?;
        let (h, w) = self.meta.image_shape?;
        let half = (h / 2) * w;
        Some(
            (0..h * w)
                .map(|p| match pos {
                    NullBlock::Top => p < half,
                    NullBlock::Bottom => p >= half,
                })
                .collect(),
        )
    }
}

/// Closed order-`order` Koch snowflake with circumradius `scale`, centered at
/// the origin. Vertices are listed counter-clockwise; the first vertex is not
/// repeated at the end.
pub fn koch_polyline(order: usize, scale: f64) -> Vec<[f64; 2]> {
    let tri: Vec<[f64; 2]> = (0..3)
        .map(|k| {
            let a = core::f64::consts::FRAC_PI_2 + k as f64 * core::f64::consts::TAU / 3.0;
            [scale * libm::cos(a), scale * libm::sin(a)]
        })
        .collect();
    let mut pts = tri;
    let (s60, c60) = (libm::sin(core::f64::consts::FRAC_PI_3), 0.5);
    for _ in 0..order {
        let n = pts.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let p = pts[i];
            let q = pts[(i + 1) % n];
            let d = [(q[0] - p[0]) / 3.0, (q[1] - p[1]) / 3.0];
            let a = [p[0] + d[0], p[1] + d[1]];
            let b = [p[0] + 2.0 * d[0], p[1] + 2.0 * d[1]];
            // Counter-clockwise traversal: rotate by −60° to bump outward.
            let peak = [a[0] + c60 * d[0] + s60 * d[1], a[1] - s60 * d[0] + c60 * d[1]];
            next.extend_from_slice(&[p, a, peak, b]);
        }
        pts = next;
    }
    pts
}

fn edge_len(p: [f64; 2], q: [f64; 2]) -> f64 {
    libm::hypot(q[0] - p[0], q[1] - p[1])
}

/// Points sampled uniformly by arc length along a closed polyline.
pub fn sample_polyline(poly: &[[f64; 2]], n: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    let m = poly.len();
    let mut cumulative = Vec::with_capacity(m);
    let mut total = 0.0;
    for i in 0..m {
        total += edge_len(poly[i], poly[(i + 1) % m]);
        cumulative.push(total);
    }
    (0..n)
        .map(|_| {
            let s = rng.uniform() * total;
            let e = cumulative.partition_point(|&c| c <= s).min(m - 1);
            let start = if e == 0 { 0.0 } else { cumulative[e - 1] };
            let len = cumulative[e] - start;
            let t = if len > 0.0 { (s - start) / len } else { 0.0 };
            let (p, q) = (poly[e], poly[(e + 1) % m]);
            [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
        })
        .collect()
}

/// Two concentric Koch snowflakes: class 0 at `scales[0]`, class 1 at
/// `scales[1]`, optional isotropic Gaussian jitter. Samples alternate
/// between classes.
pub fn koch_snowflakes(
    order: usize,
    scales: [f64; 2],
    samples_per_class: usize,
    noise_sd: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if order > 6 {
        return Err(Error::invalid(format!("Koch order {order} exceeds 6")));
    }
    if scales[0] == scales[1] || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("Koch scales must be positive and distinct"));
    }
    if samples_per_class == 0 || !(noise_sd >= 0.0) {
        return Err(Error::invalid("need samples and a non-negative noise level"));
    }
    let per_class: Vec<Vec<[f64; 2]>> = scales
        .iter()
        .map(|&s| sample_polyline(&koch_polyline(order, s), samples_per_class, rng))
        .collect();
    let mut data = Vec::with_capacity(4 * samples_per_class);
    let mut labels = Vec::with_capacity(2 * samples_per_class);
    for i in 0..samples_per_class {
        for (c, pts) in per_class.iter().enumerate() {
            let [x, y] = pts[i];
            data.push(x + noise_sd * rng.normal());
            data.push(y + noise_sd * rng.normal());
            labels.push(c);
        }
    }
    Dataset::new(
        Tensor::matrix(labels.len(), 2, data)?,
        labels,
        DatasetMeta {
            name: format!("koch(order={order})"),
            d: 2,
            q: 2,
            image_shape: None,
        },
    )
}

/// Smallest distance between a point of class `a` and one of class `b`,
/// by exhaustive pairing.
pub fn min_class_distance(data: &Dataset, a: usize, b: usize) -> f64 {
    let xs: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == a).collect();
    let ys: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == b).collect();
    let mut best = f64::INFINITY;
    for &i in &xs {
        let p = data.input(i);
        for &j in &ys {
            let q = data.input(j);
            let d2: f64 = p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum();
            best = best.min(d2);
        }
    }
    libm::sqrt(best)
}

/// Isotropic Gaussian blobs, one per mean, `n_per_class` samples each,
/// interleaved by class.
pub fn gaussian_blobs(means: &[Vec<f64>], sd: f64, n_per_class: usize, rng: &mut Rng) -> Result<Dataset> {
    let d = means.first().map_or(0, Vec::len);
    if d == 0 || means.len() < 2 || means.iter().any(|m| m.len() != d) {
        return Err(Error::invalid("need at least two means of equal positive dimension"));
    }
    let mut data = Vec::with_capacity(means.len() * n_per_class * d);
    let mut labels = Vec::new();
    for _ in 0..n_per_class {
        for (c, m) in means.iter().enumerate() {
            data.extend(m.iter().map(|&mu| mu + sd * rng.normal()));
            labels.push(c);
        }
    }
    Dataset::new(
        Tensor::matrix(labels.len(), d, data)?,
        labels,
        DatasetMeta {
            name: "blobs".to_string(),
            d,
            q: means.len(),
            image_shape: None,
        },
    )
}

/// Two 1-D point masses: `+a` with label 1 (`y = +1`) and `−a` with label 0,
/// each repeated `copies` times.
pub fn dirac_pair(a: f64, copies: usize) -> Result<Dataset> {
    if copies == 0 {
        return Err(Error::invalid("dirac_pair needs at least one copy"));
    }
    let mut data = Vec::with_capacity(2 * copies);
    let mut labels = Vec::with_capacity(2 * copies);
    for _ in 0..copies {
        data.extend_from_slice(&[a, -a]);
        labels.extend_from_slice(&[1, 0]);
    }
    Dataset::new(
        Tensor::matrix(2 * copies, 1, data)?,
        labels,
        DatasetMeta {
            name: format!("dirac_pair(a={a})"),
            d: 1,
            q: 2,
            image_shape: None,
        },
    )
}

/// BlockMNIST-style images from square digit images.
///
/// Keeps digits 0 and 1, and stacks every digit above or below a null block
/// (position uniform per sample). The null block is a randomly chosen base
/// image scrambled by one fixed pixel permutation, so it carries digit-like
/// intensity statistics but no class information. Output images are
/// `2h x w`.
pub fn block_mnist(base: &Dataset, rng: &mut Rng) -> Result<Dataset> {
    let (h, w) = base
        .meta
        .image_shape
        .ok_or_else(|| Error::invalid("block_mnist needs image data"))?;
    if h != w {
        return Err(Error::invalid(format!("block_mnist needs square images, got {h}x{w}")));
    }
    let digits = base.filter_classes(&[0, 1])?;
    let d = h * w;
    let mut perm: Vec<usize> = (0..d).collect();
    rng.shuffle(&mut perm);
    let n = digits.len();
    let mut data = Vec::with_capacity(n * 2 * d);
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let source = digits.input(rng.below(n));
        let null: Vec<f64> = perm.iter().map(|&p| source[p]).collect();
        let pos = if rng.uniform() < 0.5 {
            NullBlock::Top
        } else {
            NullBlock::Bottom
        };
        match pos {
            NullBlock::Top => {
                data.extend_from_slice(&null);
                data.extend_from_slice(digits.input(i));
            }
            NullBlock::Bottom => {
                data.extend_from_slice(digits.input(i));
                data.extend_from_slice(&null);
            }
        }
        blocks.push(pos);
    }
    let mut out = Dataset::new(
        Tensor::matrix(n, 2 * d, data)?,
        digits.labels.clone(),
        DatasetMeta {
            name: "block_mnist(0 vs 1)".to_string(),
            d: 2 * d,
            q: 2,
            image_shape: Some((2 * h, w)),
        },
    )?;
    out.null_blocks = Some(blocks);
    Ok(out)
}
