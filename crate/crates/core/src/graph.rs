//! Per-patch ε-neighborhood graphs over exemplar features and the graph
//! Laplacian regularizer `sᵀ L s`.
//!
//! For pixels `i`, `j` of a `p×p` patch with exemplar patches `f_1..f_K`,
//!
//! ```text
//! d²(i, j) = Σ_k (f_k(i) - f_k(j))² + α · l²(i, j)
//! w(i, j)  = exp(-d²(i, j))   if d(i, j) <= ε, else 0
//! L        = Degree - Adjacency
//! ```
//!
//! where `l` is the spatial distance inside the patch. ε is chosen per patch
//! so that every vertex keeps at least `min(4, m-1)` neighbours.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Minimum number of neighbours every vertex keeps.
pub const MIN_NEIGHBOURS: usize = 4;

/// `K` exemplar patches of common length `m`, weights already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    patches: Vec<Vec<f64>>,
}

impl ExemplarSet {
    pub fn new(patches: Vec<Vec<f64>>) -> Result<Self> {
        let m = patches
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("exemplar set is empty".into()))?;
        if patches.iter().any(|p| p.len() != m) {
            return Err(Error::Dimension("exemplar patches differ in length".into()));
        }
        if patches.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exemplar patch".into()));
        }
        Ok(Self { patches })
    }

    pub fn patches(&self) -> &[Vec<f64>] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Vertex count `m`.
    pub fn patch_len(&self) -> usize {
        self.patches[0].len()
    }
}

fn check_width(m: usize, patch_width: usize) -> Result<()> {
    if patch_width == 0 || !m.is_multiple_of(patch_width) {
        return Err(Error::Dimension(format!(
            "patch width {patch_width} does not divide exemplar length {m}"
        )));
    }
    Ok(())
}

/// Squared exemplar-space distance between pixels `i` and `j` of a patch
/// stored row-major with `patch_width` columns.
pub fn pixel_distance_sq(ex: &ExemplarSet, i: usize, j: usize, alpha: f64, patch_width: usize) -> Result<f64> {
    let m = ex.patch_len();
    check_width(m, patch_width)?;
    for idx in [i, j] {
        if idx >= m {
            return Err(Error::IndexOutOfRange { index: idx, count: m });
        }
    }
    Ok(distance_sq_unchecked(ex, i, j, alpha, patch_width))
}

#[inline]
fn distance_sq_unchecked(ex: &ExemplarSet, i: usize, j: usize, alpha: f64, p: usize) -> f64 {
    let feat: f64 = ex
        .patches
        .iter()
        .map(|f| {
            let d = f[i] - f[j];
            d * d
        })
        .sum();
    let dy = (i / p) as f64 - (j / p) as f64;
    let dx = (i % p) as f64 - (j % p) as f64;
    feat + alpha * (dy * dy + dx * dx)
}

/// Condensed upper-triangular storage of all pairwise squared distances.
#[derive(Debug, Clone)]
pub struct PairwiseDistances {
    m: usize,
    values: Vec<f64>,
}

impl PairwiseDistances {
    pub fn compute(ex: &ExemplarSet, alpha: f64, patch_width: usize) -> Result<Self> {
        let m = ex.patch_len();
        check_width(m, patch_width)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
        }
        let mut values = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        let p = patch_width;
        for i in 0..m {
            let (yi, xi) = ((i / p) as f64, (i % p) as f64);
            for j in i + 1..m {
                let mut d = 0.0;
                for f in &ex.patches {
                    let t = f[i] - f[j];
                    d += t * t;
                }
                let dy = yi - (j / p) as f64;
                let dx = xi - (j % p) as f64;
                values.push(d + alpha * (dy * dy + dx * dx));
            }
        }
        Ok(Self { m, values })
    }

    /// Wraps precomputed squared distances in condensed `(i < j)` row-major order.
    pub fn from_condensed(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m.saturating_sub(1) / 2 {
            return Err(Error::Dimension("condensed distance length".into()));
        }
        Ok(Self { m, values })
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    #[inline]
    fn offset(&self, i: usize) -> usize {
        // start of row i in condensed storage
        i * (2 * self.m - i - 1) / 2
    }

    /// Squared distance between distinct vertices.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.values[self.offset(a) + (b - a - 1)]
    }

    /// Iterates `(i, j, d²)` over unordered pairs with `i < j`, sorted.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.m;
        (0..m).flat_map(move |i| {
            let off = self.offset(i);
            (i + 1..m).map(move |j| (i, j, self.values[off + j - i - 1]))
        })
    }
}

/// Squared threshold ε² such that every vertex has at least `min(4, m-1)`
/// neighbours within ε: the maximum over vertices of the squared distance to
/// their 4th-nearest neighbour (the full diameter when `m ≤ 5`).
pub fn select_epsilon_sq(dist: &PairwiseDistances) -> Result<f64> {
    let m = dist.vertex_count();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "a patch graph needs at least 2 vertices, got {m}"
        )));
    }
    let k = MIN_NEIGHBOURS.min(m - 1);
    let mut row = Vec::with_capacity(m - 1);
    let mut eps_sq = 0.0f64;
    for i in 0..m {
        row.clear();
        row.extend((0..m).filter(|&j| j != i).map(|j| dist.get(i, j)));
        let (_, kth, _) = row.select_nth_unstable_by(k - 1, f64::total_cmp);
        eps_sq = eps_sq.max(*kth);
    }
    Ok(eps_sq)
}

/// ε itself, on distances rather than squared distances.
pub fn select_epsilon(dist: &PairwiseDistances) -> Result<f64> {
    select_epsilon_sq(dist).map(f64::sqrt)
}

/// One undirected edge, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub weight: f64,
}

/// Sparse combinatorial Laplacian of one patch graph.
///
/// Edges are stored once (`i < j`) in sorted order. Edges whose weight
/// `exp(-d²)` underflows to zero are not stored; they contribute nothing to `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGraph {
    m: usize,
    epsilon: f64,
    edges: Vec<Edge>,
    degree: Vec<f64>,
}

impl PatchGraph {
    /// Assembles a graph from a sorted, duplicate-free edge list.
    pub fn from_edges(m: usize, epsilon: f64, edges: Vec<Edge>) -> Result<Self> {
        let mut prev: Option<(u32, u32)> = None;
        for e in &edges {
            if e.i >= e.j || e.j as usize >= m {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) invalid for {m} vertices",
                    e.i, e.j
                )));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) weight {} outside (0, 1]",
                    e.i, e.j, e.weight
                )));
            }
            if prev.is_some_and(|p| p >= (e.i, e.j)) {
                return Err(Error::InvalidArgument("edges must be sorted and unique".into()));
            }
            prev = Some((e.i, e.j));
        }
        let mut degree = vec![0.0; m];
        for e in &edges {
            degree[e.i as usize] += e.weight;
            degree[e.j as usize] += e.weight;
        }
        Ok(Self {
            m,
            epsilon,
            edges,
            degree,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Weighted degrees (diagonal of the degree matrix).
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Number of incident edges per vertex.
    pub fn neighbour_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.m];
        for e in &self.edges {
            counts[e.i as usize] += 1;
            counts[e.j as usize] += 1;
        }
        counts
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::Dimension(format!(
                "vector length {} vs {} graph vertices",
                x.len(),
                self.m
            )));
        }
        Ok(())
    }

    /// `L·x` without materializing `L`.
    pub fn laplacian_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut y: Vec<f64> = self.degree.iter().zip(x).map(|(d, v)| d * v).collect();
        for e in &self.edges {
            let (i, j) = (e.i as usize, e.j as usize);
            y[i] -= e.weight * x[j];
            y[j] -= e.weight * x[i];
        }
        Ok(y)
    }

    /// Dense `L`, row-major. For tests and debugging only.
    pub fn dense_laplacian(&self) -> Vec<f64> {
        let m = self.m;
        let mut l = vec![0.0; m * m];
        for (i, d) in self.degree.iter().enumerate() {
            l[i * m + i] = *d;
        }
        for e in &self.edges {
            let (i, j) = (e.i as usize, e.j as usize);
            l[i * m + j] -= e.weight;
            l[j * m + i] -= e.weight;
        }
        l
    }

    /// Text dump: a `m=<m> eps=<ε>` line, then `i j w` per edge sorted by `(i, j)`.
    pub fn to_text(&self) -> String {
        let mut out = format!("m={} eps={}\n", self.m, self.epsilon);
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.i, e.j, e.weight);
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::InvalidArgument(format!("graph dump: {reason}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let mut m = None;
        let mut eps = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("m=") {
                m = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("eps=") {
                eps = v.parse::<f64>().ok();
            }
        }
        let (m, eps) = match (m, eps) {
            (Some(m), Some(e)) => (m, e),
            _ => return Err(bad(format!("bad header '{header}'"))),
        };
        let mut edges = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [i, j, w] => i
                    .parse()
                    .ok()
                    .zip(j.parse().ok())
                    .zip(w.parse().ok())
                    .map(|((i, j), weight)| Edge { i, j, weight }),
                _ => None,
            };
            edges.push(parsed.ok_or_else(|| bad(format!("bad edge line {}: '{line}'", n + 2)))?);
        }
        Self::from_edges(m, eps, edges)
    }
}

/// Builds the ε-neighborhood graph of one patch (`patch_width` columns, row-major).
pub fn build_graph(ex: &ExemplarSet, alpha: f64, patch_width: usize) -> Result<PatchGraph> {
    let dist = PairwiseDistances::compute(ex, alpha, patch_width)?;
    build_graph_from_distances(&dist)
}

pub fn build_graph_from_distances(dist: &PairwiseDistances) -> Result<PatchGraph> {
    let eps_sq = select_epsilon_sq(dist)?;
    let mut edges = Vec::new();
    for (i, j, d2) in dist.pairs() {
        if d2 <= eps_sq {
            let weight = (-d2).exp();
            if weight > 0.0 {
                edges.push(Edge {
                    i: i as u32,
                    j: j as u32,
                    weight,
                });
            }
        }
    }
    PatchGraph::from_edges(dist.vertex_count(), eps_sq.sqrt(), edges)
}

/// `sᵀ L s`, computed as `Σ_{i<j} w_ij (s_i - s_j)²`.
pub fn regularizer_value(g: &PatchGraph, s: &[f64]) -> Result<f64> {
    g.check_len(s)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regularizer input".into()));
    }
    Ok(g.edges
        .iter()
        .map(|e| {
            let d = s[e.i as usize] - s[e.j as usize];
            e.weight * d * d
        })
        .sum())
}

/// `∇_s (sᵀ L s) = 2 L s`, with `L` held constant.
pub fn regularizer_grad(g: &PatchGraph, s: &[f64]) -> Result<Vec<f64>> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regularizer input".into()));
    }
    let mut y = g.laplacian_apply(s)?;
    for v in &mut y {
        *v *= 2.0;
    }
    Ok(y)
}

/// Solves `(I + λL) s = d` by conjugate gradients.
///
/// This is the minimizer of `‖s - d‖² + λ sᵀ L s`; used to probe which
/// structures a graph preserves.
pub fn smooth_with_graph(g: &PatchGraph, d: &[f64], lambda: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    g.check_len(d)?;
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let lx = g.laplacian_apply(x)?;
        Ok(x.iter().zip(lx).map(|(a, b)| a + lambda * b).collect())
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = d.to_vec();
    let ax = apply(&x)?;
    let mut r: Vec<f64> = d.iter().zip(ax).map(|(a, b)| a - b).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = tol * tol * dot(d, d).max(f64::MIN_POSITIVE);
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let ap = apply(&p)?;
        let step = rr / dot(&p, &ap);
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += step * pi;
        }
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= step * api;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Ok(x)
}
