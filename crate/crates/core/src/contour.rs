//! Marching-squares level sets on a regular grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Axis-aligned box `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::invalid(format!(
                "empty box [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(BBox {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// Grid point `(i, j)` of a `res x res` lattice covering the box,
    /// corners included.
    pub fn node(&self, i: usize, j: usize, res: usize) -> [f64; 2] {
        let s = (res - 1) as f64;
        [
            self.x_min + (self.x_max - self.x_min) * i as f64 / s,
            self.y_min + (self.y_max - self.y_min) * j as f64 / s,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    /// The last point connects back to the first.
    pub closed: bool,
}

/// Grid edge: horizontal from node `(i, j)` to `(i+1, j)` or vertical from
/// `(i, j)` to `(i, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Contour of `f = level` sampled on a `res x res` lattice over `bbox`.
///
/// `eval` maps a list of points to values; it is called once for the
/// lattice and once more for the centers of saddle cells. A saddle cell
/// joins its two above-level corners when the center is at or above the
/// level and separates them otherwise. A node is above when `v ≥ level`.
pub fn level_set<F>(mut eval: F, bbox: &BBox, res: usize, level: f64) -> Result<Vec<Polyline>>
where
    F: FnMut(&[[f64; 2]]) -> Result<Vec<f64>>,
{
    if res < 2 {
        return Err(Error::invalid("a contour grid needs at least 2 points per side"));
    }
    let mut nodes = Vec::with_capacity(res * res);
    for j in 0..res {
        for i in 0..res {
            nodes.push(bbox.node(i, j, res));
        }
    }
    let v = eval(&nodes)?;
    if v.len() != nodes.len() {
        return Err(Error::dim(format!(
            "{} values for {} grid points",
            v.len(),
            nodes.len()
        )));
    }
    let at = |i: usize, j: usize| v[j * res + i];
    let case = |i: usize, j: usize| {
        usize::from(at(i, j) >= level)
            | usize::from(at(i + 1, j) >= level) << 1
            | usize::from(at(i + 1, j + 1) >= level) << 2
            | usize::from(at(i, j + 1) >= level) << 3
    };

    let mut saddles = Vec::new();
    for j in 0..res - 1 {
        for i in 0..res - 1 {
            if matches!(case(i, j), 5 | 10) {
                saddles.push((i, j));
            }
        }
    }
    let centres: Vec<[f64; 2]> = saddles
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (bbox.node(i, j, res), bbox.node(i + 1, j + 1, res));
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        })
        .collect();
    let centre_vals = if centres.is_empty() {
        Vec::new()
    } else {
        eval(&centres)?
    };
    let centre_above: BTreeMap<(usize, usize), bool> = saddles
        .iter()
        .zip(&centre_vals)
        .map(|(&c, &val)| (c, val >= level))
        .collect();

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..res - 1 {
        for i in 0..res - 1 {
            let (bottom, right, top, left) = (Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j));
            match case(i, j) {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                c => {
                    // Saddle: 5 has corners 0 and 2 above, 10 has 1 and 3.
                    let joined = centre_above[&(i, j)] == (c == 5);
                    if joined {
                        segments.push((bottom, right));
                        segments.push((top, left));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
            }
        }
    }

    let point = |e: Edge| -> [f64; 2] {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (a, b) = (at(i0, j0), at(i1, j1));
        let t = if a == b {
            0.5
        } else {
            ((level - a) / (b - a)).clamp(0.0, 1.0)
        };
        let (p, q) = (bbox.node(i0, j0, res), bbox.node(i1, j1, res));
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    };
    Ok(link(&segments)
        .into_iter()
        .map(|(edges, closed)| Polyline {
            points: edges.into_iter().map(point).collect(),
            closed,
        })
        .collect())
}

/// Chains segments sharing an edge into polylines: open chains first (from
/// their lowest free end), then cycles.
fn link(segments: &[(Edge, Edge)]) -> Vec<(Vec<Edge>, bool)> {
    let mut incident: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let walk = |start: Edge, used: &mut Vec<bool>| -> (Vec<Edge>, bool) {
        let mut chain = vec![start];
        let mut cur = start;
        while let Some(&s) = incident[&cur].iter().find(|&&s| !used[s]) {
            used[s] = true;
            let (a, b) = segments[s];
            cur = if a == cur { b } else { a };
            if cur == start {
                return (chain, true);
            }
            chain.push(cur);
        }
        (chain, false)
    };
    let ends: Vec<Edge> = incident.iter().filter(|(_, s)| s.len() == 1).map(|(e, _)| *e).collect();
    for e in ends {
        if incident[&e].iter().all(|&s| used[s]) {
            continue;
        }
        out.push(walk(e, &mut used));
    }
    for s in 0..segments.len() {
        if !used[s] {
            out.push(walk(segments[s].0, &mut used));
        }
    }
    out
}
