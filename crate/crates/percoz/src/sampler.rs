//! Bernoulli(p) sampling and Monte Carlo estimation of connectivity
//! events.
//!
//! Sampling is sharded into fixed-size chunks; chunk `i` draws its
//! per-sample nonces from ChaCha8 stream `i` of the master seed, and
//! each edge's uniform comes from a SplitMix64 mix of (nonce, edge
//! index). Results are therefore reproducible for a given
//! `(seed, box, p)` regardless of worker count, edge bits are generated
//! lazily (cluster scans touch a small fraction of a large box), and
//! two runs with different `p` share uniforms edgewise (monotone
//! coupling, common random numbers).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::direction::Direction;
use crate::error::{Error, Result};
use crate::events::{EventClassifier, EventFlags};
use crate::kernel::{Kernel, KernelEntry, KernelKind};
use crate::lattice::{
    component, surface_components, BondConfig, BoxGeometry, ClusterData, Edge, EdgeStates,
    LatticeBox, Point, NO_VERTEX,
};

const CHUNK: u64 = 4096;

/// Point estimate with provenance for a Monte Carlo probability.
#[derive(Clone, Debug, Serialize)]
pub struct EstimatorResult {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub box_lo: Vec<i64>,
    pub box_hi: Vec<i64>,
}

impl EstimatorResult {
    pub fn bernoulli(hits: u64, n: u64, seed: u64, bbox: &LatticeBox) -> Self {
        let v = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        EstimatorResult {
            value: v,
            std_error: if n == 0 { 0.0 } else { (v * (1.0 - v) / n as f64).sqrt() },
            n_samples: n,
            seed,
            box_lo: bbox.lo().0.clone(),
            box_hi: bbox.hi().0.clone(),
        }
    }
}

#[inline]
pub(crate) fn threshold(p: f64) -> u64 {
    ((p * (1u64 << 32) as f64).round() as u64).min(1u64 << 32)
}

/// The per-edge uniform: SplitMix64 finalizer of the sample nonce and
/// the edge index. Shared by every Monte Carlo path in the crate.
#[inline]
pub(crate) fn edge_uniform(nonce: u64, edge: u32) -> u32 {
    let mut z = nonce.wrapping_add((edge as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as u32
}

/// Lazy Bernoulli(p) configuration: edge bits are computed on demand
/// from the sample nonce, never materialized.
#[derive(Clone, Copy)]
pub struct SampledConfig {
    pub nonce: u64,
    pub thr: u64,
}

impl EdgeStates for SampledConfig {
    #[inline]
    fn is_open(&self, edge_id: u32) -> bool {
        (edge_uniform(self.nonce, edge_id) as u64) < self.thr
    }
}

/// Nonce of sample `index` within ChaCha8 stream `stream_id` of `seed`.
pub fn sample_nonce(seed: u64, stream_id: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    let mut nonce = 0;
    for _ in 0..=index {
        nonce = rng.next_u64();
    }
    nonce
}

/// Draw one configuration: each edge open independently with probability
/// `p`. The bit of edge `e` is `SplitMix64(nonce, e) < p`, with the
/// nonce drawn from ChaCha8 stream `stream_id` of `seed`; identical
/// arguments reproduce the identical bit stream within one build, and
/// runs at different `p` are monotone-coupled edgewise.
pub fn sample_config(
    geometry: Arc<BoxGeometry>,
    p: f64,
    seed: u64,
    stream_id: u64,
) -> Result<BondConfig> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("p = {} outside [0, 1]", p)));
    }
    let cfg = SampledConfig { nonce: sample_nonce(seed, stream_id, 0), thr: threshold(p) };
    let n = geometry.edge_count();
    let mut words = vec![0u64; (n + 63) / 64];
    for e in 0..n {
        if cfg.is_open(e as u32) {
            words[e / 64] |= 1 << (e % 64);
        }
    }
    Ok(BondConfig::from_words(geometry, words, (seed, stream_id, p)))
}

/// True iff `x` lies in the open cluster of the origin and that cluster
/// does not touch the box shell (the finite-window proxy for
/// `|C_{0,x}| < infinity`). Errors when 0 or `x` is closer than `margin`
/// to the shell.
pub fn finite_two_point(config: &BondConfig, x: &Point, margin: i64) -> Result<bool> {
    let geom = config.geometry();
    let zero = Point::zero(geom.dim());
    for p in [&zero, x] {
        if !geom.bbox().contains(p) {
            return Err(Error::OutOfBox { point: p.0.clone() });
        }
        if geom.bbox().shell_distance(p) < margin {
            return Err(Error::MarginViolation { point: p.0.clone(), margin });
        }
    }
    let c = component(geom, config, &zero)?;
    Ok(c.vertices.contains(x) && !c.touches_box_boundary)
}

/// Audit of the per-sample event algebra (f => h and friends).
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EventAudit {
    pub samples: u64,
    pub implication_violations: u64,
}

/// Empirical kernels for all seven directed kinds plus the two-point
/// function, estimated from shared samples.
#[derive(Clone, Debug)]
pub struct EmpiricalKernels {
    pub kernels: BTreeMap<KernelKind, Kernel>,
    pub audit: EventAudit,
    pub n_samples: u64,
    pub seed: u64,
    pub p: f64,
}

impl EmpiricalKernels {
    pub fn kernel(&self, kind: KernelKind) -> &Kernel {
        &self.kernels[&kind]
    }
}

pub struct KernelEstimateSpec {
    pub geometry: Arc<BoxGeometry>,
    pub p: f64,
    pub t: Direction,
    pub displacements: Vec<Point>,
    pub margin: i64,
    pub n_samples: u64,
    pub seed: u64,
}

const FLAG_KINDS: [KernelKind; 8] = [
    KernelKind::TwoPoint,
    KernelKind::H,
    KernelKind::F,
    KernelKind::G,
    KernelKind::HBar,
    KernelKind::FBar,
    KernelKind::HTilde,
    KernelKind::FTilde,
];

fn flag_of(flags: &EventFlags, kind: KernelKind) -> bool {
    match kind {
        KernelKind::TwoPoint => flags.finite_connect,
        KernelKind::H => flags.h,
        KernelKind::F => flags.f,
        KernelKind::G => flags.g,
        KernelKind::HBar => flags.h_bar,
        KernelKind::FBar => flags.f_bar,
        KernelKind::HTilde => flags.h_tilde,
        KernelKind::FTilde => flags.f_tilde,
        _ => unreachable!(),
    }
}

/// Estimate all event kernels over a displacement set from `n_samples`
/// shared configurations.
pub fn estimate_kernels(spec: &KernelEstimateSpec) -> Result<EmpiricalKernels> {
    if !(0.0..=1.0).contains(&spec.p) {
        return Err(Error::Invalid(format!("p = {} outside [0, 1]", spec.p)));
    }
    let base = EventClassifier::new(
        spec.geometry.clone(),
        spec.t.clone(),
        &spec.displacements,
        spec.margin,
    )?;
    let n_disp = spec.displacements.len();
    let thr = threshold(spec.p);
    let n_chunks = (spec.n_samples + CHUNK - 1) / CHUNK;

    struct Tally {
        counts: Vec<[u64; 8]>,
        violations: u64,
    }

    let tally = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut cls = EventClassifier::new(
                spec.geometry.clone(),
                spec.t.clone(),
                &spec.displacements,
                spec.margin,
            )
            .expect("validated above");
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(chunk);
            let mut flags = vec![EventFlags::default(); n_disp];
            let mut counts = vec![[0u64; 8]; n_disp];
            let mut violations = 0u64;
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(spec.n_samples);
            for _ in lo..hi {
                let cfg = SampledConfig { nonce: rng.next_u64(), thr };
                cls.classify_into(&cfg, &mut flags);
                for (i, fl) in flags.iter().enumerate() {
                    if !fl.implications_ok() {
                        violations += 1;
                    }
                    for (k, kind) in FLAG_KINDS.iter().enumerate() {
                        if flag_of(fl, *kind) {
                            counts[i][k] += 1;
                        }
                    }
                }
            }
            Tally { counts, violations }
        })
        .reduce(
            || Tally { counts: vec![[0u64; 8]; n_disp], violations: 0 },
            |mut a, b| {
                for (x, y) in a.counts.iter_mut().zip(&b.counts) {
                    for k in 0..8 {
                        x[k] += y[k];
                    }
                }
                a.violations += b.violations;
                a
            },
        );

    let dim = spec.geometry.dim();
    let n = spec.n_samples;
    let mut kernels = BTreeMap::new();
    for (k, kind) in FLAG_KINDS.iter().enumerate() {
        let mut kernel = Kernel::new(dim, *kind);
        // origin conventions
        match kind {
            KernelKind::H => {
                kernel.insert(Point::zero(dim), KernelEntry::exact(1.0))?;
            }
            KernelKind::F => {
                kernel.insert(Point::zero(dim), KernelEntry::exact(0.0))?;
            }
            _ => {}
        }
        for (i, x) in base.displacements().iter().enumerate() {
            let hits = tally.counts[i][k];
            let v = hits as f64 / n as f64;
            kernel.insert(
                x.clone(),
                KernelEntry {
                    value: v,
                    std_error: Some((v * (1.0 - v) / n as f64).sqrt()),
                },
            )?;
        }
        kernels.insert(*kind, kernel);
    }

    Ok(EmpiricalKernels {
        kernels,
        audit: EventAudit { samples: n * n_disp as u64, implication_violations: tally.violations },
        n_samples: n,
        seed: spec.seed,
        p: spec.p,
    })
}

/// Outcome of a conditional tail estimate: a number only when the
/// conditioning event was seen often enough.
#[derive(Clone, Debug, Serialize)]
pub enum TailEstimate {
    Estimate { result: EstimatorResult, conditioning_hits: u64 },
    InsufficientStatistics { conditioning_hits: u64, required: u64 },
}

/// Minimum conditioning hits before a conditional estimate is reported.
pub const MIN_CONDITIONING_HITS: u64 = 100;

/// Estimate `P(|external boundary| >= (1+delta) * phi | finite
/// connection 0 <-> x)`. `phi` is the certified minimum from the
/// combinatorial oracle.
pub fn surface_tail(
    geometry: Arc<BoxGeometry>,
    x: &Point,
    delta: f64,
    p: f64,
    phi: usize,
    n_samples: u64,
    seed: u64,
    margin: i64,
) -> Result<TailEstimate> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("p = {} outside [0, 1]", p)));
    }
    let zero = Point::zero(geometry.dim());
    for q in [&zero, x] {
        if geometry.bbox().shell_distance(q) < margin {
            return Err(Error::MarginViolation { point: q.0.clone(), margin });
        }
    }
    let x_vid = geometry.vertex_id(x).ok_or(Error::OutOfBox { point: x.0.clone() })?;
    let origin = geometry.vertex_id(&zero).unwrap();
    let threshold_size = (1.0 + delta) * phi as f64;
    let thr = threshold(p);
    let n_chunks = (n_samples + CHUNK - 1) / CHUNK;

    let (cond, tail) = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let mut scratch = FillScratch::new(&geometry);
            let mut cond = 0u64;
            let mut tail = 0u64;
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            for _ in lo..hi {
                let cfg = SampledConfig { nonce: rng.next_u64(), thr };
                if let Some(boundary) = scratch.finite_boundary(&geometry, &cfg, origin, x_vid)
                {
                    cond += 1;
                    if boundary as f64 >= threshold_size {
                        tail += 1;
                    }
                }
            }
            (cond, tail)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    if cond < MIN_CONDITIONING_HITS {
        return Ok(TailEstimate::InsufficientStatistics {
            conditioning_hits: cond,
            required: MIN_CONDITIONING_HITS,
        });
    }
    let v = tail as f64 / cond as f64;
    Ok(TailEstimate::Estimate {
        result: EstimatorResult {
            value: v,
            std_error: (v * (1.0 - v) / cond as f64).sqrt(),
            n_samples,
            seed,
            box_lo: geometry.bbox().lo().0.clone(),
            box_hi: geometry.bbox().hi().0.clone(),
        },
        conditioning_hits: cond,
    })
}

/// Reusable marks for cluster + fill scans.
struct FillScratch {
    mark: Vec<u32>,
    out: Vec<u32>,
    epoch: u32,
    queue: Vec<u32>,
    cluster: Vec<u32>,
}

impl FillScratch {
    fn new(geom: &BoxGeometry) -> Self {
        FillScratch {
            mark: vec![0; geom.vertex_count()],
            out: vec![0; geom.vertex_count()],
            epoch: 0,
            queue: Vec::new(),
            cluster: Vec::new(),
        }
    }

    /// When the cluster of `origin` is finite (no shell contact) and
    /// contains `x`, returns the external boundary size of its filled
    /// closure, else None.
    fn finite_boundary<C: EdgeStates>(
        &mut self,
        geom: &BoxGeometry,
        config: &C,
        origin: u32,
        x_vid: u32,
    ) -> Option<usize> {
        self.epoch += 1;
        let ep = self.epoch;
        let d2 = 2 * geom.dim();
        self.queue.clear();
        self.cluster.clear();
        self.mark[origin as usize] = ep;
        self.queue.push(origin);
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            if geom.is_shell(v) {
                return None; // infinite by the window proxy
            }
            self.cluster.push(v);
            for slot in 0..d2 {
                let (w, e) = geom.neighbor_slot(v, slot);
                if w != NO_VERTEX && self.mark[w as usize] != ep && config.is_open(e) {
                    self.mark[w as usize] = ep;
                    self.queue.push(w);
                }
            }
        }
        if self.mark[x_vid as usize] != ep {
            return None;
        }
        // flood the outside from the shell through non-cluster vertices
        self.queue.clear();
        for v in 0..geom.vertex_count() as u32 {
            if geom.is_shell(v) && self.mark[v as usize] != ep {
                self.out[v as usize] = ep;
                self.queue.push(v);
            }
        }
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            for slot in 0..d2 {
                let (w, _) = geom.neighbor_slot(v, slot);
                if w != NO_VERTEX
                    && self.mark[w as usize] != ep
                    && self.out[w as usize] != ep
                {
                    self.out[w as usize] = ep;
                    self.queue.push(w);
                }
            }
        }
        // filled = not outside; count filled/outside adjacencies
        let mut boundary = 0usize;
        for v in 0..geom.vertex_count() as u32 {
            if self.out[v as usize] == ep {
                continue;
            }
            for slot in 0..d2 {
                let (w, _) = geom.neighbor_slot(v, slot);
                if w == NO_VERTEX || self.out[w as usize] == ep {
                    boundary += 1;
                }
            }
        }
        Some(boundary)
    }
}

/// Empirical finite two-point decay along several directions from one
/// shared campaign: series of `P(0 <-> floor(n * dir), finite)` for
/// each `n` in `n_list`.
pub fn estimate_two_point_decay(
    geometry: Arc<BoxGeometry>,
    p: f64,
    directions: &[Direction],
    n_list: &[i64],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<(Direction, Vec<(i64, EstimatorResult)>)>> {
    // displacement targets floor(n * dir), deduplicated per direction
    let mut targets: Vec<Vec<(i64, u32)>> = Vec::with_capacity(directions.len());
    for dir in directions {
        let mut per = Vec::new();
        for &n in n_list {
            let pt = Point(
                dir.unit().iter().map(|&c| (c * n as f64).floor() as i64).collect(),
            );
            let vid = geometry
                .vertex_id(&pt)
                .ok_or(Error::OutOfBox { point: pt.0.clone() })?;
            per.push((n, vid));
        }
        targets.push(per);
    }
    let origin = geometry.vertex_id(&Point::zero(geometry.dim())).unwrap();
    let thr = threshold(p);
    let n_chunks = (n_samples + CHUNK - 1) / CHUNK;
    let flat: Vec<u32> = targets.iter().flatten().map(|&(_, v)| v).collect();

    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let mut mark = vec![0u32; geometry.vertex_count()];
            let mut stack: Vec<u32> = Vec::new();
            let mut epoch = 0u32;
            let mut counts = vec![0u64; flat.len()];
            let d2 = 2 * geometry.dim();
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            for _ in lo..hi {
                let cfg = SampledConfig { nonce: rng.next_u64(), thr };
                epoch += 1;
                stack.clear();
                mark[origin as usize] = epoch;
                stack.push(origin);
                let mut finite = true;
                while let Some(v) = stack.pop() {
                    if geometry.is_shell(v) {
                        finite = false;
                        break; // the event requires a finite cluster
                    }
                    for slot in 0..d2 {
                        let (w, e) = geometry.neighbor_slot(v, slot);
                        if w != NO_VERTEX && mark[w as usize] != epoch && cfg.is_open(e) {
                            mark[w as usize] = epoch;
                            stack.push(w);
                        }
                    }
                }
                if finite {
                    for (i, &v) in flat.iter().enumerate() {
                        if mark[v as usize] == epoch {
                            counts[i] += 1;
                        }
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; flat.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );

    let mut out = Vec::new();
    let mut k = 0usize;
    for (dir, per) in directions.iter().zip(&targets) {
        let mut series = Vec::new();
        for &(n, _) in per {
            series.push((
                n,
                EstimatorResult::bernoulli(counts[k], n_samples, seed, geometry.bbox()),
            ));
            k += 1;
        }
        out.push((dir.clone(), series));
    }
    Ok(out)
}

/// Per-slab crossing report for a finite, filled cluster.
#[derive(Clone, Debug, Serialize)]
pub struct SlabInfo {
    pub index: usize,
    pub surface_pieces: usize,
    pub crossings: usize,
    pub good: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlabReport {
    pub slabs: Vec<SlabInfo>,
    /// fraction of slabs with at least two crossings
    pub eta: f64,
}

/// Classify the slabs of width `n_width` between the origin hyperplane
/// and the hyperplane of `x` as good or bad, and count surface crossings
/// per slab. `cluster` must be finite with its fill populated.
pub fn slab_crossings(
    cluster: &ClusterData,
    t: &Direction,
    n_width: i64,
    x: &Point,
) -> Result<SlabReport> {
    if cluster.touches_box_boundary {
        return Err(Error::IndeterminateFill);
    }
    if cluster.plaquettes.is_empty() {
        return Err(Error::Invalid("cluster has no plaquette surface; call fill first".into()));
    }
    if n_width < 1 {
        return Err(Error::Invalid("slab width must be >= 1".into()));
    }
    let w = t.scaled_int();
    let du = w[t.u_axis()];
    let dot_x = t.dot(x);
    if dot_x <= 0 {
        return Err(Error::Invalid("x must be on the positive side of t".into()));
    }
    // slab boundaries at floor(i * n_width * x_hat)
    let norm = x.norm();
    let mut bounds: Vec<i64> = Vec::new();
    let mut i = 0i64;
    loop {
        let pt = Point(
            x.0.iter()
                .map(|&c| ((c as f64 / norm) * (i * n_width) as f64).floor() as i64)
                .collect(),
        );
        let b = t.dot(&pt);
        bounds.push(b.min(dot_x));
        if b >= dot_x {
            break;
        }
        i += 1;
    }
    bounds.dedup();
    if bounds.len() < 2 {
        bounds = vec![0, dot_x];
    }

    // doubled-unit dot range of a plaquette's dual cell
    let m_half: i64 = (0..w.len()).map(|j| w[j].abs()).sum::<i64>();
    let cell_range = |e: &Edge| -> (i64, i64) {
        let mut c = 0i64;
        for j in 0..w.len() {
            c += 2 * e.base.0[j] * w[j];
        }
        c += w[e.axis];
        let spread = m_half - w[e.axis].abs();
        (c - spread, c + spread)
    };

    let mut slabs = Vec::new();
    let mut bad_count = 0usize;
    for si in 0..bounds.len() - 1 {
        let (lo, hi) = (bounds[si], bounds[si + 1]);
        let (lo2, hi2) = (2 * lo, 2 * hi);
        let in_slab: BTreeSet<Edge> = cluster
            .plaquettes
            .iter()
            .filter(|e| {
                let (a, b) = cell_range(e);
                a <= hi2 && b >= lo2
            })
            .cloned()
            .collect();
        let comps = surface_components(&in_slab);
        let comp_of: HashMap<&Edge, usize> = comps
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| c.iter().map(move |e| (e, ci)))
            .collect();

        // cluster pieces inside the slab
        let verts: Vec<&Point> = cluster
            .vertices
            .iter()
            .filter(|v| {
                let dv = t.dot(v);
                dv >= lo && dv <= hi
            })
            .collect();
        let vset: BTreeSet<&Point> = verts.iter().copied().collect();
        let mut piece_of: BTreeMap<&Point, usize> = BTreeMap::new();
        let mut n_pieces = 0usize;
        for &v in &verts {
            if piece_of.contains_key(v) {
                continue;
            }
            let id = n_pieces;
            n_pieces += 1;
            let mut stack = vec![v];
            piece_of.insert(v, id);
            while let Some(q) = stack.pop() {
                for axis in 0..q.dim() {
                    for delta in [1i64, -1] {
                        let r = q.step(axis, delta);
                        let e = if delta == 1 {
                            Edge { base: q.clone(), axis }
                        } else {
                            Edge { base: r.clone(), axis }
                        };
                        if cluster.open_edges.contains(&e) {
                            if let Some(rr) = vset.get(&r) {
                                if !piece_of.contains_key(*rr) {
                                    piece_of.insert(rr, id);
                                    stack.push(rr);
                                }
                            }
                        }
                    }
                }
            }
        }
        // crossing pieces: reach within a lattice step of both hyperplanes
        let mut piece_span = vec![(i64::MAX, i64::MIN); n_pieces];
        for (&v, &id) in &piece_of {
            let dv = t.dot(v);
            piece_span[id].0 = piece_span[id].0.min(dv);
            piece_span[id].1 = piece_span[id].1.max(dv);
        }
        let mut crossing_components: BTreeSet<usize> = BTreeSet::new();
        let mut unmapped = 0usize;
        for id in 0..n_pieces {
            let (mn, mx) = piece_span[id];
            if mn >= lo + du || mx <= hi - du {
                continue; // does not cross the slab
            }
            // map the piece to its surrounding surface component via an
            // incident external-boundary plaquette inside the slab
            let mut found = None;
            'outer: for (&v, &pid) in &piece_of {
                if pid != id {
                    continue;
                }
                for axis in 0..v.dim() {
                    for delta in [1i64, -1] {
                        let r = v.step(axis, delta);
                        let e = if delta == 1 {
                            Edge { base: v.clone(), axis }
                        } else {
                            Edge { base: r, axis }
                        };
                        if let Some(&ci) = comp_of.get(&e) {
                            found = Some(ci);
                            break 'outer;
                        }
                    }
                }
            }
            match found {
                Some(ci) => {
                    crossing_components.insert(ci);
                }
                None => unmapped += 1, // buried piece: count conservatively
            }
        }
        let crossings = crossing_components.len() + unmapped;
        let good = comps.len() <= 1;
        if crossings >= 2 {
            bad_count += 1;
        }
        slabs.push(SlabInfo { index: si, surface_pieces: comps.len(), crossings, good });
    }
    let eta = if slabs.is_empty() { 0.0 } else { bad_count as f64 / slabs.len() as f64 };
    Ok(SlabReport { slabs, eta })
}
