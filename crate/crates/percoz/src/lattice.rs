//! Geometry and graph primitives of `Z^d`: boxes, edges, bond
//! configurations, cluster extraction, boundaries, filled closures and
//! dual plaquette surfaces.
//!
//! A cluster's *graph boundary* is the set of lattice edges with exactly
//! one endpoint in the cluster. The *filled closure* adds the finite
//! components of the complement, and the *external boundary* is the graph
//! boundary of the filled vertex set. Each external-boundary edge is
//! identified with its dual (d-1)-cell (plaquette); plaquette surfaces
//! are connected through shared (d-2)-cells.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest coordinate magnitude accepted for box corners. Keeps every
/// derived quantity (doubled coordinates, dot products) inside i64.
pub const MAX_COORD: i64 = 1 << 31;

/// A site of `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<i64>);

impl Point {
    pub fn zero(dim: usize) -> Self {
        Point(vec![0; dim])
    }

    /// The positive unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut c = vec![0; dim];
        c[axis] = 1;
        Point(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Point {
        Point(self.0.iter().map(|a| -a).collect())
    }

    pub fn scale(&self, k: i64) -> Point {
        Point(self.0.iter().map(|a| a * k).collect())
    }

    /// Shift by `delta` along `axis`.
    pub fn step(&self, axis: usize, delta: i64) -> Point {
        let mut c = self.0.clone();
        c[axis] += delta;
        Point(c)
    }

    /// L1 norm `|x| = sum |x_i|`.
    pub fn l1(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).sum()
    }

    pub fn linf(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).max().unwrap_or(0)
    }

    pub fn norm(&self) -> f64 {
        (self.0.iter().map(|&a| (a as f64) * (a as f64)).sum::<f64>()).sqrt()
    }

    pub fn dot_i64(&self, w: &[i64]) -> i64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    pub fn dot_f64(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(&a, &b)| a as f64 * b).sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&a| a as f64).collect()
    }
}

/// The 2d lattice neighbours of `x`, in the fixed axis order
/// `+u_1, -u_1, +u_2, -u_2, ...`.
pub fn neighbors(x: &Point) -> Vec<Point> {
    let d = x.dim();
    let mut out = Vec::with_capacity(2 * d);
    for axis in 0..d {
        out.push(x.step(axis, 1));
        out.push(x.step(axis, -1));
    }
    out
}

/// An edge of `Z^d`, stored canonically as its lexicographically smaller
/// endpoint plus the axis: the edge is `{base, base + u_axis}`.
///
/// The derived ordering (lexicographic on `(base, axis)`) is the canonical
/// edge order used for bit-exact `BondConfig` serialization.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Edge {
    pub base: Point,
    pub axis: usize,
}

impl Edge {
    /// Canonicalize an unordered endpoint pair. Errors unless the points
    /// are at L1 distance exactly 1.
    pub fn new(a: &Point, b: &Point) -> Result<Edge> {
        if a.dim() != b.dim() {
            return Err(Error::Invalid("edge endpoints have different dimensions".into()));
        }
        if a.sub(b).l1() != 1 {
            return Err(Error::Invalid(format!(
                "edge endpoints {:?}, {:?} are not at L1 distance 1",
                a.0, b.0
            )));
        }
        for axis in 0..a.dim() {
            if a.0[axis] + 1 == b.0[axis] {
                return Ok(Edge { base: a.clone(), axis });
            }
            if b.0[axis] + 1 == a.0[axis] {
                return Ok(Edge { base: b.clone(), axis });
            }
        }
        unreachable!()
    }

    pub fn endpoints(&self) -> (Point, Point) {
        (self.base.clone(), self.base.step(self.axis, 1))
    }

    /// The other endpoint given one of them.
    pub fn opposite(&self, p: &Point) -> Point {
        let (a, b) = self.endpoints();
        if &a == p {
            b
        } else {
            a
        }
    }

    /// Doubled-coordinate closed interval of the dual (d-1)-cell along
    /// each axis. The dual cell of `{x, x+u_a}` is centered at the edge
    /// midpoint, degenerate along `a` and of unit extent along every
    /// other axis.
    fn dual_cell_intervals(&self) -> Vec<(i64, i64)> {
        let d = self.base.dim();
        (0..d)
            .map(|i| {
                let c = 2 * self.base.0[i] + if i == self.axis { 1 } else { 0 };
                if i == self.axis {
                    (c, c)
                } else {
                    (c - 1, c + 1)
                }
            })
            .collect()
    }
}

/// True iff the dual (d-1)-cells of two distinct lattice edges share a
/// (d-2)-cell, i.e. their closed intersection has codimension 2.
pub fn plaquette_adjacency(p1: &Edge, p2: &Edge) -> bool {
    if p1 == p2 {
        return false;
    }
    let a = p1.dual_cell_intervals();
    let b = p2.dual_cell_intervals();
    let mut dim = 0usize;
    for ((alo, ahi), (blo, bhi)) in a.into_iter().zip(b) {
        let lo = alo.max(blo);
        let hi = ahi.min(bhi);
        if lo > hi {
            return false; // disjoint closures
        }
        if lo < hi {
            dim += 1;
        }
    }
    dim + 2 == p1.base.dim()
}

/// Partition a plaquette set into connected components of the dual graph
/// (adjacency through shared (d-2)-cells). Components are returned sorted
/// by their smallest member, each sorted internally.
pub fn surface_components(plaquettes: &BTreeSet<Edge>) -> Vec<Vec<Edge>> {
    let items: Vec<&Edge> = plaquettes.iter().collect();
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    // Bucket by base point; candidates for adjacency are within L-inf
    // distance 1 of each other's base.
    let mut buckets: HashMap<&[i64], Vec<usize>> = HashMap::new();
    for (i, e) in items.iter().enumerate() {
        buckets.entry(e.base.0.as_slice()).or_default().push(i);
    }
    let d = items[0].base.dim();
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(items[i].clone());
            let mut offset = vec![-1i64; d];
            loop {
                let cand = Point(
                    items[i].base.0.iter().zip(&offset).map(|(a, b)| a + b).collect(),
                );
                if let Some(ids) = buckets.get(cand.0.as_slice()) {
                    for &j in ids {
                        if !seen[j] && plaquette_adjacency(items[i], items[j]) {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
                // advance the {-1,0,1}^d offset counter
                let mut k = 0;
                while k < d {
                    offset[k] += 1;
                    if offset[k] <= 1 {
                        break;
                    }
                    offset[k] = -1;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
        }
        comp.sort();
        comps.push(comp);
    }
    comps.sort_by(|a, b| a[0].cmp(&b[0]));
    comps
}

/// An axis-aligned finite window `[lo, hi]` of `Z^d` (corners inclusive).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Point,
    hi: Point,
}

impl LatticeBox {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if lo.dim() != hi.dim() {
            return Err(Error::Invalid("box corners have different dimensions".into()));
        }
        if lo.dim() < 2 {
            return Err(Error::Invalid("dimension must be at least 2".into()));
        }
        for i in 0..lo.dim() {
            if lo.0[i] > hi.0[i] {
                return Err(Error::Invalid(format!(
                    "box corner lo {:?} exceeds hi {:?} on axis {}",
                    lo.0, hi.0, i
                )));
            }
            if lo.0[i].abs() > MAX_COORD || hi.0[i].abs() > MAX_COORD {
                return Err(Error::Invalid("box coordinates exceed the supported range".into()));
            }
        }
        Ok(LatticeBox { lo, hi })
    }

    /// Cube `[0, side-1]^dim`.
    pub fn cube(dim: usize, side: i64) -> Result<Self> {
        if side < 1 {
            return Err(Error::Invalid("cube side must be >= 1".into()));
        }
        LatticeBox::new(Point::zero(dim), Point(vec![side - 1; dim]))
    }

    /// Cube `[-radius, radius]^dim` centered at the origin.
    pub fn centered(dim: usize, radius: i64) -> Result<Self> {
        LatticeBox::new(Point(vec![-radius; dim]), Point(vec![radius; dim]))
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.0
                .iter()
                .enumerate()
                .all(|(i, &c)| self.lo.0[i] <= c && c <= self.hi.0[i])
    }

    /// True iff `p` lies on the inner shell (some coordinate at an
    /// extreme). Shell membership is the finite-window proxy for "the
    /// cluster reaches infinity".
    pub fn on_shell(&self, p: &Point) -> bool {
        self.contains(p)
            && p.0
                .iter()
                .enumerate()
                .any(|(i, &c)| c == self.lo.0[i] || c == self.hi.0[i])
    }

    /// L-inf distance from `p` to the shell (0 if on the shell).
    pub fn shell_distance(&self, p: &Point) -> i64 {
        (0..self.dim())
            .map(|i| (p.0[i] - self.lo.0[i]).min(self.hi.0[i] - p.0[i]))
            .min()
            .unwrap_or(0)
    }

    pub fn vertex_count(&self) -> usize {
        (0..self.dim())
            .map(|i| (self.hi.0[i] - self.lo.0[i] + 1) as usize)
            .product()
    }

    pub fn edge_count(&self) -> usize {
        let dims: Vec<usize> = (0..self.dim())
            .map(|i| (self.hi.0[i] - self.lo.0[i] + 1) as usize)
            .collect();
        let verts: usize = dims.iter().product();
        (0..self.dim())
            .map(|a| {
                if dims[a] == 0 {
                    0
                } else {
                    verts / dims[a] * (dims[a] - 1)
                }
            })
            .sum()
    }

    /// Vertices in lexicographic order.
    pub fn vertices(&self) -> Vec<Point> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.vertex_count());
        let mut cur = self.lo.clone();
        loop {
            out.push(cur.clone());
            // increment from the last axis (lexicographic order)
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                cur.0[k] += 1;
                if cur.0[k] <= self.hi.0[k] {
                    break;
                }
                cur.0[k] = self.lo.0[k];
            }
        }
    }

    /// Edges fully inside the box, in canonical order: lexicographic on
    /// (base vertex, axis).
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.edge_count());
        for v in self.vertices() {
            for axis in 0..self.dim() {
                if v.0[axis] + 1 <= self.hi.0[axis] {
                    out.push(Edge { base: v.clone(), axis });
                }
            }
        }
        out
    }
}

/// Precomputed flat indexing for one box: vertex and edge tables,
/// adjacency, shell flags. Shared (via `Arc`) by configurations, the
/// sampler's classifier and the exhaustive enumerator.
#[derive(Debug)]
pub struct BoxGeometry {
    bbox: LatticeBox,
    dims: Vec<i64>,
    strides: Vec<usize>,
    n_vertices: usize,
    n_edges: usize,
    /// `2d` slots per vertex in the order `+u_1, -u_1, +u_2, ...`;
    /// `u32::MAX` marks a neighbour outside the box.
    neighbor: Vec<u32>,
    /// Edge index per (vertex, slot), aligned with `neighbor`.
    incident: Vec<u32>,
    edge_base: Vec<u32>,
    edge_axis: Vec<u8>,
    shell: Vec<bool>,
    edge_index: HashMap<Edge, u32>,
}

pub const NO_VERTEX: u32 = u32::MAX;

impl BoxGeometry {
    pub fn new(bbox: LatticeBox) -> Arc<Self> {
        let d = bbox.dim();
        let dims: Vec<i64> = (0..d).map(|i| bbox.hi.0[i] - bbox.lo.0[i] + 1).collect();
        // lexicographic vertex order: last axis varies fastest
        let mut strides = vec![0usize; d];
        let mut s = 1usize;
        for i in (0..d).rev() {
            strides[i] = s;
            s *= dims[i] as usize;
        }
        let n_vertices = s;
        let vertices = bbox.vertices();
        let edges = bbox.edges();
        let n_edges = edges.len();

        let vid = |p: &Point| -> usize {
            (0..d).map(|i| (p.0[i] - bbox.lo.0[i]) as usize * strides[i]).sum()
        };

        let mut edge_index = HashMap::with_capacity(n_edges);
        let mut edge_base = Vec::with_capacity(n_edges);
        let mut edge_axis = Vec::with_capacity(n_edges);
        for (ei, e) in edges.iter().enumerate() {
            edge_index.insert(e.clone(), ei as u32);
            edge_base.push(vid(&e.base) as u32);
            edge_axis.push(e.axis as u8);
        }

        let mut neighbor = vec![NO_VERTEX; n_vertices * 2 * d];
        let mut incident = vec![NO_VERTEX; n_vertices * 2 * d];
        let mut shell = vec![false; n_vertices];
        for (v, p) in vertices.iter().enumerate() {
            shell[v] = bbox.on_shell(p);
            for axis in 0..d {
                for (slot, delta) in [(2 * axis, 1i64), (2 * axis + 1, -1i64)] {
                    let q = p.step(axis, delta);
                    if bbox.contains(&q) {
                        neighbor[v * 2 * d + slot] = vid(&q) as u32;
                        let e = if delta == 1 {
                            Edge { base: p.clone(), axis }
                        } else {
                            Edge { base: q.clone(), axis }
                        };
                        incident[v * 2 * d + slot] = edge_index[&e];
                    }
                }
            }
        }

        Arc::new(BoxGeometry {
            bbox,
            dims,
            strides,
            n_vertices,
            n_edges,
            neighbor,
            incident,
            edge_base,
            edge_axis,
            shell,
            edge_index,
        })
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.n_vertices
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    pub fn vertex_id(&self, p: &Point) -> Option<u32> {
        if !self.bbox.contains(p) {
            return None;
        }
        let mut id = 0usize;
        for i in 0..self.dim() {
            id += (p.0[i] - self.bbox.lo.0[i]) as usize * self.strides[i];
        }
        Some(id as u32)
    }

    pub fn point_of(&self, v: u32) -> Point {
        let mut rem = v as usize;
        let d = self.dim();
        let mut c = vec![0i64; d];
        for i in 0..d {
            c[i] = self.bbox.lo.0[i] + (rem / self.strides[i]) as i64;
            rem %= self.strides[i];
        }
        Point(c)
    }

    #[inline]
    pub fn neighbor_slot(&self, v: u32, slot: usize) -> (u32, u32) {
        let idx = v as usize * 2 * self.dim() + slot;
        (self.neighbor[idx], self.incident[idx])
    }

    #[inline]
    pub fn is_shell(&self, v: u32) -> bool {
        self.shell[v as usize]
    }

    pub fn edge_id(&self, e: &Edge) -> Option<u32> {
        self.edge_index.get(e).copied()
    }

    pub fn edge_of(&self, ei: u32) -> Edge {
        Edge {
            base: self.point_of(self.edge_base[ei as usize]),
            axis: self.edge_axis[ei as usize] as usize,
        }
    }
}

/// Access to per-edge open/closed state. Implemented by [`BondConfig`]
/// and by the exhaustive enumerator's bitmask views, so event detection
/// runs on the exact same code path for both.
pub trait EdgeStates {
    fn is_open(&self, edge_id: u32) -> bool;
}

/// A `{0,1}` assignment on the edges of a box, immutable once built.
/// Bits are packed in canonical edge order.
#[derive(Clone, Debug)]
pub struct BondConfig {
    geometry: Arc<BoxGeometry>,
    words: Vec<u64>,
    /// (seed, stream, p) when produced by the sampler; kept for the
    /// serialization header.
    provenance: (u64, u64, f64),
}

impl BondConfig {
    pub fn from_bits(geometry: Arc<BoxGeometry>, bits: &[bool]) -> Result<Self> {
        if bits.len() != geometry.edge_count() {
            return Err(Error::Invalid(format!(
                "bit count {} does not match box edge count {}",
                bits.len(),
                geometry.edge_count()
            )));
        }
        let mut words = vec![0u64; (bits.len() + 63) / 64];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(BondConfig { geometry, words, provenance: (0, 0, f64::NAN) })
    }

    pub fn from_open_edges(geometry: Arc<BoxGeometry>, open: &[Edge]) -> Result<Self> {
        let mut bits = vec![false; geometry.edge_count()];
        for e in open {
            let ei = geometry
                .edge_id(e)
                .ok_or_else(|| Error::Invalid(format!("edge {:?} not in box", e)))?;
            bits[ei as usize] = true;
        }
        BondConfig::from_bits(geometry, &bits)
    }

    pub(crate) fn from_words(
        geometry: Arc<BoxGeometry>,
        words: Vec<u64>,
        provenance: (u64, u64, f64),
    ) -> Self {
        BondConfig { geometry, words, provenance }
    }

    pub fn geometry(&self) -> &Arc<BoxGeometry> {
        &self.geometry
    }

    pub fn provenance(&self) -> (u64, u64, f64) {
        self.provenance
    }

    pub fn open_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_open_edge(&self, e: &Edge) -> Option<bool> {
        self.geometry.edge_id(e).map(|ei| self.is_open(ei))
    }

    /// Serialized byte layout (all integers little-endian):
    ///
    /// ```text
    /// u32   d
    /// i64   lo[0..d]
    /// i64   hi[0..d]
    /// u64   seed
    /// u64   stream
    /// f64   p            (bit pattern; NaN when not sampler-produced)
    /// u64   n_edges
    /// bytes packed bits, canonical edge order, LSB first within a byte
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let d = g.dim();
        let mut out = Vec::with_capacity(4 + 16 * d + 32 + self.words.len() * 8);
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for i in 0..d {
            out.extend_from_slice(&g.bbox().lo().0[i].to_le_bytes());
        }
        for i in 0..d {
            out.extend_from_slice(&g.bbox().hi().0[i].to_le_bytes());
        }
        out.extend_from_slice(&self.provenance.0.to_le_bytes());
        out.extend_from_slice(&self.provenance.1.to_le_bytes());
        out.extend_from_slice(&self.provenance.2.to_bits().to_le_bytes());
        let n = g.edge_count();
        out.extend_from_slice(&(n as u64).to_le_bytes());
        let n_bytes = (n + 7) / 8;
        for byte in 0..n_bytes {
            let mut b = 0u8;
            for bit in 0..8 {
                let i = byte * 8 + bit;
                if i < n && self.is_open(i as u32) {
                    b |= 1 << bit;
                }
            }
            out.push(b);
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let take = |buf: &[u8], at: &mut usize, n: usize| -> Result<Vec<u8>> {
            if *at + n > buf.len() {
                return Err(Error::Io("truncated BondConfig data".into()));
            }
            let out = buf[*at..*at + n].to_vec();
            *at += n;
            Ok(out)
        };
        let mut at = 0usize;
        let d = u32::from_le_bytes(take(data, &mut at, 4)?.try_into().unwrap()) as usize;
        if d < 2 || d > 16 {
            return Err(Error::Io(format!("implausible dimension {}", d)));
        }
        let read_pt = |at: &mut usize| -> Result<Point> {
            let mut c = vec![0i64; d];
            for x in c.iter_mut() {
                *x = i64::from_le_bytes(take(data, at, 8)?.try_into().unwrap());
            }
            Ok(Point(c))
        };
        let lo = read_pt(&mut at)?;
        let hi = read_pt(&mut at)?;
        let seed = u64::from_le_bytes(take(data, &mut at, 8)?.try_into().unwrap());
        let stream = u64::from_le_bytes(take(data, &mut at, 8)?.try_into().unwrap());
        let p = f64::from_bits(u64::from_le_bytes(take(data, &mut at, 8)?.try_into().unwrap()));
        let n = u64::from_le_bytes(take(data, &mut at, 8)?.try_into().unwrap()) as usize;
        let geometry = BoxGeometry::new(LatticeBox::new(lo, hi)?);
        if n != geometry.edge_count() {
            return Err(Error::Io(format!(
                "edge count {} does not match box ({} expected)",
                n,
                geometry.edge_count()
            )));
        }
        let payload = take(data, &mut at, (n + 7) / 8)?;
        let mut bits = vec![false; n];
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = payload[i / 8] >> (i % 8) & 1 == 1;
        }
        let mut cfg = BondConfig::from_bits(geometry, &bits)?;
        cfg.provenance = (seed, stream, p);
        Ok(cfg)
    }
}

impl EdgeStates for BondConfig {
    #[inline]
    fn is_open(&self, edge_id: u32) -> bool {
        let i = edge_id as usize;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }
}

/// The common open cluster of marked vertices together with its edge set,
/// graph boundary and (after [`fill`]) filled closure, external boundary
/// and plaquette surface.
///
/// `component` leaves the fill-derived fields empty; `fill` populates
/// them. Boundary edges may have one endpoint outside the box: the graph
/// boundary is a `Z^d` notion and for clusters that avoid the shell it is
/// window-exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterData {
    pub vertices: BTreeSet<Point>,
    pub open_edges: BTreeSet<Edge>,
    pub graph_boundary: BTreeSet<Edge>,
    pub filled_vertices: BTreeSet<Point>,
    pub external_boundary: BTreeSet<Edge>,
    pub plaquettes: BTreeSet<Edge>,
    pub touches_box_boundary: bool,
}

/// Open cluster of `x` in `config`. Errors if `x` is outside the box.
pub fn component<C: EdgeStates>(
    geometry: &Arc<BoxGeometry>,
    config: &C,
    x: &Point,
) -> Result<ClusterData> {
    let start = geometry
        .vertex_id(x)
        .ok_or_else(|| Error::OutOfBox { point: x.0.clone() })?;
    let d = geometry.dim();
    let mut in_comp: HashSet<u32> = HashSet::new();
    let mut queue = VecDeque::from([start]);
    in_comp.insert(start);
    let mut touches = geometry.is_shell(start);
    while let Some(v) = queue.pop_front() {
        for slot in 0..2 * d {
            let (w, e) = geometry.neighbor_slot(v, slot);
            if w != NO_VERTEX && config.is_open(e) && in_comp.insert(w) {
                touches |= geometry.is_shell(w);
                queue.push_back(w);
            }
        }
    }

    let mut vertices = BTreeSet::new();
    let mut open_edges = BTreeSet::new();
    let mut graph_boundary = BTreeSet::new();
    for &v in &in_comp {
        let p = geometry.point_of(v);
        for axis in 0..d {
            for delta in [1i64, -1] {
                let q = p.step(axis, delta);
                let e = if delta == 1 {
                    Edge { base: p.clone(), axis }
                } else {
                    Edge { base: q.clone(), axis }
                };
                let q_in = geometry.vertex_id(&q).map_or(false, |w| in_comp.contains(&w));
                if q_in {
                    if config.is_open(geometry.edge_id(&e).unwrap()) {
                        open_edges.insert(e);
                    }
                } else {
                    // one endpoint in the component: graph boundary,
                    // including edges leaving the window
                    graph_boundary.insert(e);
                }
            }
        }
        vertices.insert(p);
    }

    Ok(ClusterData {
        vertices,
        open_edges,
        graph_boundary,
        filled_vertices: BTreeSet::new(),
        external_boundary: BTreeSet::new(),
        plaquettes: BTreeSet::new(),
        touches_box_boundary: touches,
    })
}

/// Graph boundary of an arbitrary vertex set: all `Z^d` edges with
/// exactly one endpoint inside.
pub fn vertex_set_boundary(vertices: &BTreeSet<Point>) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    for p in vertices {
        for axis in 0..p.dim() {
            for delta in [1i64, -1] {
                let q = p.step(axis, delta);
                if !vertices.contains(&q) {
                    let e = if delta == 1 {
                        Edge { base: p.clone(), axis }
                    } else {
                        Edge { base: q, axis }
                    };
                    out.insert(e);
                }
            }
        }
    }
    out
}

/// Filled closure inside `bbox`: the cluster's vertices plus every
/// complement component of the box that does not meet the inner shell.
/// The external boundary is the graph boundary of the filled set and the
/// plaquettes are its dual cells (identified with their edges).
///
/// Requires the cluster not to touch the box shell, otherwise the fill is
/// not determined by the window.
pub fn fill(cluster: &ClusterData, bbox: &LatticeBox) -> Result<ClusterData> {
    if cluster.touches_box_boundary {
        return Err(Error::IndeterminateFill);
    }
    let filled = fill_vertices(&cluster.vertices, bbox);
    let external_boundary = vertex_set_boundary(&filled);
    let mut out = cluster.clone();
    out.filled_vertices = filled;
    out.plaquettes = external_boundary.clone();
    out.external_boundary = external_boundary;
    Ok(out)
}

/// Vertex set of the filled closure (no boundary computation).
pub fn fill_vertices(vertices: &BTreeSet<Point>, bbox: &LatticeBox) -> BTreeSet<Point> {
    let mut filled = vertices.clone();
    let mut seen: HashSet<Point> = HashSet::new();
    for start in bbox.vertices() {
        if filled.contains(&start) || seen.contains(&start) {
            continue;
        }
        // complement component via full lattice adjacency inside the box
        let mut comp = Vec::new();
        let mut touches_shell = false;
        let mut queue = VecDeque::from([start.clone()]);
        seen.insert(start);
        while let Some(p) = queue.pop_front() {
            touches_shell |= bbox.on_shell(&p);
            for q in neighbors(&p) {
                if bbox.contains(&q) && !vertices.contains(&q) && !seen.contains(&q) {
                    seen.insert(q.clone());
                    queue.push_back(q);
                }
            }
            comp.push(p);
        }
        if !touches_shell {
            filled.extend(comp);
        }
    }
    filled
}

/// External boundary size of a vertex set (fill + boundary count),
/// using a dense scratch grid over the inflated bounding box. This is the
/// inner loop of the combinatorial oracles.
pub fn external_boundary_size(vertices: &BTreeMap<Vec<i64>, ()>) -> usize {
    debug_assert!(!vertices.is_empty());
    let d = vertices.keys().next().unwrap().len();
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for v in vertices.keys() {
        for i in 0..d {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    // inflate by one so the outside is connected within the grid
    for i in 0..d {
        lo[i] -= 1;
        hi[i] += 1;
    }
    let dims: Vec<usize> = (0..d).map(|i| (hi[i] - lo[i] + 1) as usize).collect();
    let mut strides = vec![0usize; d];
    let mut s = 1usize;
    for i in (0..d).rev() {
        strides[i] = s;
        s *= dims[i];
    }
    let total = s;
    let idx = |v: &[i64]| -> usize {
        (0..d).map(|i| (v[i] - lo[i]) as usize * strides[i]).sum()
    };
    // 0 unknown, 1 cluster, 2 outside
    let mut grid = vec![0u8; total];
    for v in vertices.keys() {
        grid[idx(v)] = 1;
    }
    // flood the outside from the grid origin corner (inflated, so free)
    let mut stack = vec![0usize];
    grid[0] = 2;
    while let Some(q) = stack.pop() {
        for i in 0..d {
            let c = q / strides[i] % dims[i];
            if c > 0 {
                let r = q - strides[i];
                if grid[r] == 0 {
                    grid[r] = 2;
                    stack.push(r);
                }
            }
            if c + 1 < dims[i] {
                let r = q + strides[i];
                if grid[r] == 0 {
                    grid[r] = 2;
                    stack.push(r);
                }
            }
        }
    }
    // filled = not outside; boundary edges = filled/outside adjacencies
    let mut count = 0usize;
    for q in 0..total {
        if grid[q] == 2 {
            continue;
        }
        for i in 0..d {
            let c = q / strides[i] % dims[i];
            // grid-exterior neighbours are outside by construction
            if c == 0 || grid[q - strides[i]] == 2 {
                count += 1;
            }
            if c + 1 == dims[i] || grid[q + strides[i]] == 2 {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domino(d: usize) -> (Arc<BoxGeometry>, BondConfig) {
        let geom = BoxGeometry::new(LatticeBox::centered(d, 3).unwrap());
        let e = Edge { base: Point::zero(d), axis: 0 };
        let cfg = BondConfig::from_open_edges(geom.clone(), &[e]).unwrap();
        (geom, cfg)
    }

    #[test]
    fn neighbors_order_and_count() {
        let x = Point(vec![0, 0, 0]);
        let ns = neighbors(&x);
        assert_eq!(ns.len(), 6);
        assert_eq!(ns[0], Point(vec![1, 0, 0]));
        assert_eq!(ns[1], Point(vec![-1, 0, 0]));
        assert_eq!(ns[2], Point(vec![0, 1, 0]));

        let ns2: BTreeSet<Point> = neighbors(&Point(vec![1, 1])).into_iter().collect();
        let expect: BTreeSet<Point> =
            [vec![2, 1], vec![0, 1], vec![1, 2], vec![1, 0]].into_iter().map(Point).collect();
        assert_eq!(ns2, expect);
    }

    #[test]
    fn component_all_closed() {
        let d = 3;
        let geom = BoxGeometry::new(LatticeBox::centered(d, 2).unwrap());
        let cfg = BondConfig::from_open_edges(geom.clone(), &[]).unwrap();
        let c = component(&geom, &cfg, &Point::zero(d)).unwrap();
        assert_eq!(c.vertices.len(), 1);
        assert!(c.open_edges.is_empty());
        assert_eq!(c.graph_boundary.len(), 2 * d);
        assert!(!c.touches_box_boundary);
    }

    #[test]
    fn component_domino_boundary_ten() {
        let (geom, cfg) = domino(3);
        let c = component(&geom, &cfg, &Point::zero(3)).unwrap();
        assert_eq!(c.vertices.len(), 2);
        assert_eq!(c.open_edges.len(), 1);
        // independent oracle: walk every lattice edge around the pair
        let mut count = 0;
        for v in geom.bbox().vertices() {
            for axis in 0..3 {
                let w = v.step(axis, 1);
                let v_in = c.vertices.contains(&v);
                let w_in = c.vertices.contains(&w);
                if v_in != w_in {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 10);
        assert_eq!(c.graph_boundary.len(), 10);
    }

    #[test]
    fn component_outside_box_errors() {
        let (geom, cfg) = domino(3);
        let err = component(&geom, &cfg, &Point(vec![9, 9, 9])).unwrap_err();
        assert!(matches!(err, Error::OutOfBox { .. }));
    }

    #[test]
    fn component_shell_flag() {
        let d = 2;
        let geom = BoxGeometry::new(LatticeBox::centered(d, 2).unwrap());
        // path from origin to the shell
        let open = [
            Edge { base: Point(vec![0, 0]), axis: 0 },
            Edge { base: Point(vec![1, 0]), axis: 0 },
        ];
        let cfg = BondConfig::from_open_edges(geom.clone(), &open).unwrap();
        let c = component(&geom, &cfg, &Point::zero(d)).unwrap();
        assert!(c.touches_box_boundary);
    }

    #[test]
    fn fill_domino_no_holes() {
        let (geom, cfg) = domino(3);
        let c = component(&geom, &cfg, &Point::zero(3)).unwrap();
        let f = fill(&c, geom.bbox()).unwrap();
        assert_eq!(f.filled_vertices, c.vertices);
        assert_eq!(f.external_boundary.len(), 10);
        assert_eq!(f.plaquettes.len(), f.external_boundary.len());
        // no holes possible at size 2: exhaustive check that every
        // complement vertex reaches the shell
        assert_eq!(f.external_boundary, f.graph_boundary);
    }

    #[test]
    fn fill_ring_absorbs_hole() {
        // 8-vertex ring around (0,0) in d=2
        let geom = BoxGeometry::new(LatticeBox::centered(2, 4).unwrap());
        let ring: Vec<Point> = [
            (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0),
        ]
        .into_iter()
        .map(|(a, b)| Point(vec![a, b]))
        .collect();
        let mut open = Vec::new();
        for i in 0..8 {
            open.push(Edge::new(&ring[i], &ring[(i + 1) % 8]).unwrap());
        }
        let cfg = BondConfig::from_open_edges(geom.clone(), &open).unwrap();
        let c = component(&geom, &cfg, &ring[0]).unwrap();
        assert_eq!(c.vertices.len(), 8);
        assert_eq!(c.graph_boundary.len(), 16); // 12 outward + 4 inward
        let f = fill(&c, geom.bbox()).unwrap();
        assert_eq!(f.filled_vertices.len(), 9); // hole vertex added
        assert!(f.filled_vertices.contains(&Point(vec![0, 0])));
        assert_eq!(f.external_boundary.len(), 12); // 3x3 block perimeter
        assert!(f.external_boundary.len() < f.graph_boundary.len());
        assert!(f.external_boundary.is_subset(&f.graph_boundary));
    }

    #[test]
    fn fill_indeterminate_on_shell() {
        let geom = BoxGeometry::new(LatticeBox::centered(2, 1).unwrap());
        let cfg = BondConfig::from_open_edges(geom.clone(), &[]).unwrap();
        let c = component(&geom, &cfg, &Point(vec![1, 1])).unwrap();
        assert!(c.touches_box_boundary);
        assert_eq!(fill(&c, geom.bbox()).unwrap_err(), Error::IndeterminateFill);
    }

    #[test]
    fn union_external_boundary_subset() {
        // external boundary of a merged cluster is contained in the union
        // of the pieces' external boundaries
        let s1: BTreeSet<Point> = [Point(vec![0, 0, 0])].into();
        let s2: BTreeSet<Point> = [Point(vec![1, 0, 0])].into();
        let both: BTreeSet<Point> = s1.union(&s2).cloned().collect();
        let b1 = vertex_set_boundary(&s1);
        let b2 = vertex_set_boundary(&s2);
        let bu = vertex_set_boundary(&both);
        let union: BTreeSet<Edge> = b1.union(&b2).cloned().collect();
        assert!(bu.is_subset(&union));
        assert_eq!(bu.len(), 10);
        assert_eq!(union.len(), 11);
    }

    #[test]
    fn plaquette_adjacency_cases() {
        // d=3: dual squares of {0,u1} and {u2, u2+u1} share a segment
        let e1 = Edge { base: Point(vec![0, 0, 0]), axis: 0 };
        let e2 = Edge { base: Point(vec![0, 1, 0]), axis: 0 };
        assert!(plaquette_adjacency(&e1, &e2));
        // identical plaquette is not adjacent to itself
        assert!(!plaquette_adjacency(&e1, &e1));
        // distant plaquettes have disjoint closures
        let e3 = Edge { base: Point(vec![0, 5, 0]), axis: 0 };
        assert!(!plaquette_adjacency(&e1, &e3));
        // parallel plaquettes at transverse offset 1 on the same layer
        // share a full (d-1)-face? no: their intersection is (d-1)-dim
        // only if they are the same cell; offset 1 along a transverse
        // axis gives a (d-2)-cell
        let e4 = Edge { base: Point(vec![0, 0, 1]), axis: 0 };
        assert!(plaquette_adjacency(&e1, &e4));
        // collinear along the edge axis: closures meet in a single
        // (d-1)-cell? they are coplanar translates meeting nowhere
        let e5 = Edge { base: Point(vec![1, 0, 0]), axis: 0 };
        assert!(!plaquette_adjacency(&e1, &e5));
    }

    #[test]
    fn surface_components_domino_connected() {
        let (geom, cfg) = domino(3);
        let c = component(&geom, &cfg, &Point::zero(3)).unwrap();
        let f = fill(&c, geom.bbox()).unwrap();
        let comps = surface_components(&f.plaquettes);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].len(), 10);
    }

    #[test]
    fn surface_components_split_and_empty() {
        let mut set = BTreeSet::new();
        set.insert(Edge { base: Point(vec![0, 0, 0]), axis: 0 });
        set.insert(Edge { base: Point(vec![5, 5, 5]), axis: 1 });
        assert_eq!(surface_components(&set).len(), 2);
        assert_eq!(surface_components(&BTreeSet::new()).len(), 0);
    }

    #[test]
    fn component_independent_of_bfs_order() {
        // set equality against a reverse-order union-find style pass
        let geom = BoxGeometry::new(LatticeBox::centered(2, 3).unwrap());
        let open = [
            Edge { base: Point(vec![0, 0]), axis: 0 },
            Edge { base: Point(vec![0, 0]), axis: 1 },
            Edge { base: Point(vec![1, 0]), axis: 1 },
            Edge { base: Point(vec![0, 1]), axis: 0 },
        ];
        let cfg = BondConfig::from_open_edges(geom.clone(), &open).unwrap();
        let a = component(&geom, &cfg, &Point::zero(2)).unwrap();
        let b = component(&geom, &cfg, &Point(vec![1, 1])).unwrap();
        assert_eq!(a, b); // same cluster from any member, any traversal
    }

    #[test]
    fn bond_config_roundtrip() {
        let (_, cfg) = domino(3);
        let bytes = cfg.to_bytes();
        let back = BondConfig::from_bytes(&bytes).unwrap();
        assert_eq!(back.open_count(), 1);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn external_boundary_size_matches_set_version() {
        let cells: BTreeMap<Vec<i64>, ()> =
            [vec![0, 0, 0], vec![1, 0, 0]].into_iter().map(|c| (c, ())).collect();
        assert_eq!(external_boundary_size(&cells), 10);
        let ring: BTreeMap<Vec<i64>, ()> = [
            vec![-1, -1], vec![0, -1], vec![1, -1], vec![1, 0],
            vec![1, 1], vec![0, 1], vec![-1, 1], vec![-1, 0],
        ]
        .into_iter()
        .map(|c| (c, ()))
        .collect();
        // hole is filled, so the 3x3 block perimeter
        assert_eq!(external_boundary_size(&ring), 12);
    }
}
