//! Exhaustive `2^E` configuration enumeration on tiny boxes: exact
//! probabilities, as polynomials in `p`, for every event the sampler
//! estimates. The event predicates are the same code paths the sampler
//! uses, so this is the master oracle for estimator correctness.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::direction::Direction;
use crate::error::{Error, Result};
use crate::events::{EventClassifier, EventFlags};
use crate::kernel::KernelKind;
use crate::lattice::{BoxGeometry, Edge, EdgeStates, Point, NO_VERTEX};
use crate::sampler::EstimatorResult;

/// Hard cap on exhaustive enumeration: `2^24` configurations.
pub const MAX_EXACT_EDGES: usize = 24;

/// Events the exact enumerator understands. `Connect` is plain
/// connectivity in the box; `FiniteTwoPoint` additionally requires the
/// cluster to avoid the shell (the finite-cluster proxy). `Classified`
/// exposes the full directed-event detector.
#[derive(Clone, Debug)]
pub enum ExactEvent {
    Tautology,
    EdgeOpen(Edge),
    Connect { x: Point },
    FiniteTwoPoint { x: Point },
    Classified { x: Point, t: Direction, kind: KernelKind },
}

impl ExactEvent {
    pub fn describe(&self) -> String {
        match self {
            ExactEvent::Tautology => "tautology".into(),
            ExactEvent::EdgeOpen(e) => format!("edge-open {:?} axis {}", e.base.0, e.axis),
            ExactEvent::Connect { x } => format!("connect 0 <-> {:?}", x.0),
            ExactEvent::FiniteTwoPoint { x } => format!("finite-two-point 0 <-> {:?}", x.0),
            ExactEvent::Classified { x, kind, .. } => {
                format!("{} event at {:?}", kind.as_str(), x.0)
            }
        }
    }
}

/// Reusable evaluator for one event on one box. Both the exhaustive scan
/// and `verify_estimator`'s Monte Carlo loop call `eval`.
pub struct EventEvaluator {
    geom: Arc<BoxGeometry>,
    event: ExactEvent,
    origin: u32,
    x_vid: u32,
    edge_id: u32,
    classifier: Option<(EventClassifier, KernelKind)>,
    mark: Vec<u32>,
    epoch: u32,
    queue: Vec<u32>,
}

impl EventEvaluator {
    pub fn new(geom: Arc<BoxGeometry>, event: &ExactEvent) -> Result<Self> {
        let origin = geom
            .vertex_id(&Point::zero(geom.dim()))
            .ok_or_else(|| Error::Invalid("box does not contain the origin".into()))?;
        let mut x_vid = NO_VERTEX;
        let mut edge_id = NO_VERTEX;
        let mut classifier = None;
        match event {
            ExactEvent::Tautology => {}
            ExactEvent::EdgeOpen(e) => {
                edge_id = geom
                    .edge_id(e)
                    .ok_or_else(|| Error::Invalid(format!("edge {:?} not in box", e)))?;
            }
            ExactEvent::Connect { x } | ExactEvent::FiniteTwoPoint { x } => {
                x_vid = geom
                    .vertex_id(x)
                    .ok_or_else(|| Error::OutOfBox { point: x.0.clone() })?;
            }
            ExactEvent::Classified { x, t, kind } => {
                let cls =
                    EventClassifier::new(geom.clone(), t.clone(), std::slice::from_ref(x), 0)?;
                classifier = Some((cls, *kind));
            }
        }
        let n = geom.vertex_count();
        Ok(EventEvaluator {
            geom,
            event: event.clone(),
            origin,
            x_vid,
            edge_id,
            classifier,
            mark: vec![0; n],
            epoch: 0,
            queue: Vec::new(),
        })
    }

    pub fn eval<C: EdgeStates>(&mut self, config: &C) -> bool {
        match &self.event {
            ExactEvent::Tautology => true,
            ExactEvent::EdgeOpen(_) => config.is_open(self.edge_id),
            ExactEvent::Connect { .. } => self.scan(config).0,
            ExactEvent::FiniteTwoPoint { .. } => {
                let (reached, finite) = self.scan(config);
                reached && finite
            }
            ExactEvent::Classified { .. } => {
                let (cls, kind) = self.classifier.as_mut().unwrap();
                let mut flags = [EventFlags::default()];
                cls.classify_into(config, &mut flags);
                match kind {
                    KernelKind::TwoPoint => flags[0].finite_connect,
                    KernelKind::H => flags[0].h,
                    KernelKind::F => flags[0].f,
                    KernelKind::G => flags[0].g,
                    KernelKind::HBar => flags[0].h_bar,
                    KernelKind::FBar => flags[0].f_bar,
                    KernelKind::HTilde => flags[0].h_tilde,
                    KernelKind::FTilde => flags[0].f_tilde,
                    KernelKind::Synthetic => false,
                }
            }
        }
    }

    /// (x reached, cluster avoids shell)
    fn scan<C: EdgeStates>(&mut self, config: &C) -> (bool, bool) {
        self.epoch += 1;
        let ep = self.epoch;
        let d2 = 2 * self.geom.dim();
        self.queue.clear();
        self.queue.push(self.origin);
        self.mark[self.origin as usize] = ep;
        let mut head = 0;
        let mut finite = true;
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            finite &= !self.geom.is_shell(v);
            for slot in 0..d2 {
                let (w, e) = self.geom.neighbor_slot(v, slot);
                if w != NO_VERTEX && self.mark[w as usize] != ep && config.is_open(e) {
                    self.mark[w as usize] = ep;
                    self.queue.push(w);
                }
            }
        }
        (self.mark[self.x_vid as usize] == ep, finite)
    }
}

struct MaskView(u64);

impl EdgeStates for MaskView {
    #[inline]
    fn is_open(&self, edge_id: u32) -> bool {
        self.0 >> edge_id & 1 == 1
    }
}

/// Exact event probability on a box, stratified by open-edge count:
/// `P(event) = sum_k counts[k] p^k (1-p)^(E-k)` with nonnegative integer
/// coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct ExactResult {
    pub event: String,
    pub edge_count: usize,
    pub counts: Vec<u64>,
}

impl ExactResult {
    pub fn eval_f64(&self, p: f64) -> f64 {
        let e = self.edge_count as i32;
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * p.powi(k as i32) * (1.0 - p).powi(e - k as i32))
            .sum()
    }

    pub fn eval_rational(&self, p: &BigRational) -> BigRational {
        let one = BigRational::one();
        let q = &one - p;
        let mut acc = BigRational::zero();
        // Horner in two passes: p^k and (1-p)^(E-k)
        for (k, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut term = BigRational::from_integer(BigInt::from(c));
            for _ in 0..k {
                term *= p;
            }
            for _ in 0..(self.edge_count - k) {
                term *= &q;
            }
            acc += term;
        }
        acc
    }

    /// Integer coefficients of the expanded polynomial in `p`.
    pub fn power_basis(&self) -> Vec<BigInt> {
        let e = self.edge_count;
        let mut out = vec![BigInt::zero(); e + 1];
        for (k, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            // c * p^k * (1-p)^(e-k)
            let m = e - k;
            let mut binom = BigInt::one();
            for j in 0..=m {
                // C(m, j) * (-1)^j contributes at degree k + j
                let signed = if j % 2 == 0 { binom.clone() } else { -binom.clone() };
                out[k + j] += BigInt::from(c) * signed;
                binom = binom * BigInt::from((m - j) as u64) / BigInt::from((j + 1) as u64);
            }
        }
        out
    }

    /// Total configurations, as a consistency check: for the tautology
    /// this is `2^E` and the counts are the binomial coefficients.
    pub fn total_configs(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Exhaustively enumerate all `2^E` configurations. Refuses boxes with
/// more than [`MAX_EXACT_EDGES`] edges.
pub fn enumerate_event(geometry: &Arc<BoxGeometry>, event: &ExactEvent) -> Result<ExactResult> {
    let e = geometry.edge_count();
    if e > MAX_EXACT_EDGES {
        return Err(Error::EdgeBudget { edges: e, max: MAX_EXACT_EDGES });
    }
    EventEvaluator::new(geometry.clone(), event)?; // validate eagerly
    let total: u64 = 1 << e;
    let shards: u64 = if total >= 4096 { 256 } else { 1 };
    let per = total / shards;
    let counts = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut ev = EventEvaluator::new(geometry.clone(), event).expect("validated");
            let mut counts = vec![0u64; e + 1];
            let lo = s * per;
            let hi = if s + 1 == shards { total } else { lo + per };
            for mask in lo..hi {
                if ev.eval(&MaskView(mask)) {
                    counts[mask.count_ones() as usize] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; e + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    Ok(ExactResult { event: event.describe(), edge_count: e, counts })
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub exact: f64,
    pub mc: EstimatorResult,
    pub tolerance_sigma: f64,
    pub pass: bool,
}

/// Run the sampler on the identical predicate and require
/// `|MC - exact| <= tolerance_sigma * std_error`. At `p` in {0, 1} the
/// standard error vanishes and exact agreement is required. The samples
/// come from the crate-wide sampling scheme (ChaCha8 nonce streams,
/// SplitMix64 edge uniforms).
pub fn verify_estimator(
    geometry: &Arc<BoxGeometry>,
    event: &ExactEvent,
    p: f64,
    n_samples: u64,
    seed: u64,
    tolerance_sigma: f64,
) -> Result<VerifyReport> {
    let exact = enumerate_event(geometry, event)?.eval_f64(p);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("p = {} outside [0, 1]", p)));
    }
    let thr = crate::sampler::threshold(p);
    const CHUNK: u64 = 8192;
    let n_chunks = (n_samples + CHUNK - 1) / CHUNK;
    let hits: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut ev = EventEvaluator::new(geometry.clone(), event).expect("validated");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let mut hits = 0u64;
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            for _ in lo..hi {
                let cfg = crate::sampler::SampledConfig { nonce: rng.next_u64(), thr };
                if ev.eval(&cfg) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let mc = EstimatorResult::bernoulli(hits, n_samples, seed, geometry.bbox());
    let pass = if mc.std_error == 0.0 {
        mc.value == exact
    } else {
        (mc.value - exact).abs() <= tolerance_sigma * mc.std_error
    };
    Ok(VerifyReport { exact, mc, tolerance_sigma, pass })
}

/// A pair of ordered configurations demonstrating non-monotonicity in
/// one direction: `low` is a subset of `high = low + flipped_edge` and
/// the event holds on exactly one of them.
#[derive(Clone, Debug, Serialize)]
pub struct OrderedFlip {
    pub low_mask: u64,
    pub high_mask: u64,
    pub flipped_edge: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonMonotoneWitness {
    /// event true on the smaller config, false on the larger
    pub decreasing: OrderedFlip,
    /// event false on the smaller config, true on the larger
    pub increasing: OrderedFlip,
}

/// Search the full configuration space for single-edge flips that move
/// the event both ways. A hit in both directions proves the event is
/// non-monotone.
pub fn find_nonmonotone_witness(
    geometry: &Arc<BoxGeometry>,
    event: &ExactEvent,
) -> Result<Option<NonMonotoneWitness>> {
    let e = geometry.edge_count();
    if e > MAX_EXACT_EDGES {
        return Err(Error::EdgeBudget { edges: e, max: MAX_EXACT_EDGES });
    }
    let mut ev = EventEvaluator::new(geometry.clone(), event)?;
    let total: u64 = 1 << e;
    let mut dec: Option<OrderedFlip> = None;
    let mut inc: Option<OrderedFlip> = None;
    for mask in 0..total {
        let low = ev.eval(&MaskView(mask));
        for bit in 0..e as u32 {
            if mask >> bit & 1 == 1 {
                continue;
            }
            let high_mask = mask | 1 << bit;
            if dec.is_none() && low && !ev.eval(&MaskView(high_mask)) {
                dec = Some(OrderedFlip { low_mask: mask, high_mask, flipped_edge: bit });
            }
            if inc.is_none() && !low && ev.eval(&MaskView(high_mask)) {
                inc = Some(OrderedFlip { low_mask: mask, high_mask, flipped_edge: bit });
            }
            if dec.is_some() && inc.is_some() {
                return Ok(Some(NonMonotoneWitness {
                    decreasing: dec.unwrap(),
                    increasing: inc.unwrap(),
                }));
            }
        }
    }
    Ok(None)
}

/// Derivative sanity for monotone events: every coefficient of the
/// power-basis derivative of a monotone event's polynomial need not be
/// positive, but the polynomial itself must be nondecreasing on [0, 1].
/// Checked numerically on a grid.
pub fn is_nondecreasing_on_unit_interval(r: &ExactResult, steps: usize) -> bool {
    let mut prev = r.eval_f64(0.0);
    for i in 1..=steps {
        let v = r.eval_f64(i as f64 / steps as f64);
        if v < prev - 1e-12 {
            return false;
        }
        prev = v;
    }
    true
}
