//! Break points, t-bonds and the directed connectivity events.
//!
//! Fix a direction `t` and let `u` be the first coordinate axis
//! maximizing `<t, u_i>`. A *t-break point* of the strip cluster of
//! `(0, y)` is a site `b` with `<t,u> <= <t,b> <= <t,y> - <t,u>` whose
//! two-slab neighbourhood meets the strip cluster exactly in
//! `{b-u, b, b+u}`. A *t-bond* is an edge `{b, b+u}` with both endpoints
//! break points. The events:
//!
//! * `h`: 0,y connected in the strip, strip cluster finite, and the
//!   strip cluster meets the end slabs `[0, <t,u>]` and
//!   `[<t,y>-<t,u>, <t,y>]` exactly in `{0, u}` and `{y-u, y}`;
//! * `f`: `h` holds and the pair `(0, y)` has no break points — the
//!   irreducible renewal piece;
//! * `h_bar`: the full cluster meets the slab `[<t,y>-<t,u>, <t,y>]`
//!   exactly in `{y-u, y}` and is finite on the lower half-space;
//! * `f_bar`: `h_bar` holds and the pair `(0, y)` has no break points;
//! * `h_tilde`, `f_tilde`: mirror images at the 0 end;
//! * `g`: finite connection with at most one t-bond.
//!
//! Half-space and strip finiteness use the box-shell proxy restricted to
//! the relevant region. Edges with an endpoint outside the strip are
//! ignored for strip clusters (treated closed), and the strip graph is
//! half-open at its top: edges lying entirely in the target hyperplane
//! `<t,z> = <t,y>` are excluded. These conventions make concatenated
//! renewal pieces edge-disjoint, each piece owning the transverse edges
//! of its bottom layer; a connection then decomposes uniquely at its
//! break points into irreducible pieces, which is exactly what the
//! renewal identity `h = delta_0 + f * h` requires. (With closed end
//! slabs the identity fails by per-cut boundary factors, which a
//! moderate-p Monte Carlo run detects immediately.)
//!
//! The classifier below computes every event for a whole displacement
//! set in one configuration pass, and is the single code path used by
//! both the Monte Carlo sampler and the exhaustive enumerator.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::direction::Direction;
use crate::error::{Error, Result};
use crate::lattice::{
    component, fill, BondConfig, BoxGeometry, ClusterData, Edge, EdgeStates, Point, NO_VERTEX,
};

/// Per-displacement event flags for one configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EventFlags {
    pub finite_connect: bool,
    pub h: bool,
    pub f: bool,
    pub g: bool,
    pub h_bar: bool,
    pub f_bar: bool,
    pub h_tilde: bool,
    pub f_tilde: bool,
}

impl EventFlags {
    /// The event algebra that must hold on every sample:
    /// f => h, f_bar => h_bar, f_tilde => h_tilde, g => finite.
    pub fn implications_ok(&self) -> bool {
        (!self.f || self.h)
            && (!self.f_bar || self.h_bar)
            && (!self.f_tilde || self.h_tilde)
            && (!self.g || self.finite_connect)
    }
}

/// Full per-displacement record for one configuration.
#[derive(Clone, Debug, Serialize)]
pub struct EventRecord {
    pub displacement: Point,
    pub finite_connect: bool,
    pub h: bool,
    pub f: bool,
    pub g: bool,
    pub h_bar: bool,
    pub f_bar: bool,
    pub h_tilde: bool,
    pub f_tilde: bool,
    /// Break points of the strip cluster of `(0, displacement)`,
    /// ordered by `<t, .>`.
    pub break_points: Vec<Point>,
    /// t-bonds `{b, b+u}` of the strip cluster.
    pub t_bonds: Vec<Edge>,
    /// External boundary size of the filled cluster, when finite.
    pub surface_size: Option<usize>,
    /// Open edges of the full cluster, when finite.
    pub cluster_edges: Option<usize>,
}

impl EventRecord {
    pub fn flags(&self) -> EventFlags {
        EventFlags {
            finite_connect: self.finite_connect,
            h: self.h,
            f: self.f,
            g: self.g,
            h_bar: self.h_bar,
            f_bar: self.f_bar,
            h_tilde: self.h_tilde,
            f_tilde: self.f_tilde,
        }
    }
}

/// Break points of a strip cluster given as explicit data.
///
/// `cluster` must be the strip cluster of `(0, y)` for the strip
/// `0 <= <t,.> <= <t,y>`. Returns the points sorted by `<t, .>`.
pub fn detect_break_points(cluster: &ClusterData, t: &Direction, y: &Point) -> Vec<Point> {
    let u = t.u_point();
    let du = t.dot(&u);
    let hi = t.dot(y) - du;
    let lo = du;
    let dots: BTreeMap<i64, Vec<&Point>> = {
        let mut m: BTreeMap<i64, Vec<&Point>> = BTreeMap::new();
        for v in &cluster.vertices {
            m.entry(t.dot(v)).or_default().push(v);
        }
        m
    };
    let mut out = Vec::new();
    for v in &cluster.vertices {
        let dv = t.dot(v);
        if dv < lo || dv > hi {
            continue;
        }
        let slab: Vec<&Point> = dots
            .range(dv - du..=dv + du)
            .flat_map(|(_, vs)| vs.iter().copied())
            .collect();
        if slab.len() != 3 {
            continue;
        }
        let minus = v.sub(&u);
        let plus = v.add(&u);
        if cluster.vertices.contains(&minus) && cluster.vertices.contains(&plus) {
            out.push(v.clone());
        }
    }
    out.sort_by_key(|b| t.dot(b));
    out
}

/// t-bonds from a sorted break-point list: edges `{b, b+u}` with both
/// endpoints break points. Also returns the left endpoints (the set
/// `B_e`).
pub fn detect_t_bonds(break_points: &[Point], t: &Direction) -> (Vec<Edge>, Vec<Point>) {
    let u = t.u_point();
    let mut bonds = Vec::new();
    let mut left = Vec::new();
    for i in 0..break_points.len() {
        let next = break_points[i].add(&u);
        if break_points[i + 1..].contains(&next) || break_points[..i].contains(&next) {
            bonds.push(Edge { base: break_points[i].clone(), axis: t.u_axis() });
            left.push(break_points[i].clone());
        }
    }
    (bonds, left)
}

struct DispInfo {
    point: Point,
    vid: u32,
    vid_minus_u: u32,
    dot: i64,
    strip: usize,
}

struct StripInfo {
    dot: i64,
    /// slab [dot - du, dot] aggregation for h_bar
    slab_count: u32,
    slab_members: [u32; 2],
    /// displacement indices at this strip dot
    disp: Vec<usize>,
}

struct StripScan {
    dead: bool,
    strip_epoch: u32,
    /// break points as (vid, dot), sorted by dot
    breaks: Vec<(u32, i64)>,
    t_bond_left: Vec<(u32, i64)>,
    /// bottom end slab [0, du] meets the cluster exactly in {0, u}
    lo_ok: bool,
    /// top end slab [D - du, D]: cluster count and first two members
    top_count: u32,
    top_members: [u32; 2],
}

/// One-pass event detection for a fixed box, direction and displacement
/// set. Holds reusable scratch; `classify_into` is allocation-free after
/// warmup.
pub struct EventClassifier {
    geom: Arc<BoxGeometry>,
    t: Direction,
    u_axis: usize,
    du: i64,
    origin: u32,
    u_vid: u32,
    dot: Vec<i64>,
    disps: Vec<DispInfo>,
    strips: Vec<StripInfo>,
    // scratch
    epoch: u32,
    full_mark: Vec<u32>,
    strip_mark: Vec<u32>,
    queue: Vec<u32>,
}

impl EventClassifier {
    /// Validates that 0 and every displacement are inside the box at
    /// shell distance >= `margin` and on the positive side of `t`.
    pub fn new(
        geom: Arc<BoxGeometry>,
        t: Direction,
        displacements: &[Point],
        margin: i64,
    ) -> Result<Self> {
        if t.dim() != geom.dim() {
            return Err(Error::Invalid("direction dimension does not match box".into()));
        }
        let u_axis = t.u_axis();
        let w = t.scaled_int();
        let du = w[u_axis];
        if du <= 0 {
            return Err(Error::Invalid("direction has no positive axis component".into()));
        }
        let zero = Point::zero(geom.dim());
        let origin = geom
            .vertex_id(&zero)
            .ok_or_else(|| Error::OutOfBox { point: zero.0.clone() })?;
        if geom.bbox().shell_distance(&zero) < margin {
            return Err(Error::MarginViolation { point: zero.0.clone(), margin });
        }
        let u_pt = Point::unit(geom.dim(), u_axis);
        let u_vid = geom.vertex_id(&u_pt).ok_or(Error::OutOfBox { point: u_pt.0.clone() })?;

        let n = geom.vertex_count();
        let mut dot = vec![0i64; n];
        for v in 0..n {
            dot[v] = geom.point_of(v as u32).dot_i64(&w);
        }

        let mut strip_dots: Vec<i64> = Vec::new();
        let mut disps = Vec::with_capacity(displacements.len());
        for x in displacements {
            let vid = geom
                .vertex_id(x)
                .ok_or_else(|| Error::OutOfBox { point: x.0.clone() })?;
            if geom.bbox().shell_distance(x) < margin {
                return Err(Error::MarginViolation { point: x.0.clone(), margin });
            }
            let dx = dot[vid as usize];
            if dx <= 0 {
                return Err(Error::Invalid(format!(
                    "displacement {:?} is not on the positive side of t",
                    x.0
                )));
            }
            let minus = x.sub(&u_pt);
            let vid_minus_u = geom.vertex_id(&minus).unwrap_or(NO_VERTEX);
            if !strip_dots.contains(&dx) {
                strip_dots.push(dx);
            }
            disps.push(DispInfo { point: x.clone(), vid, vid_minus_u, dot: dx, strip: 0 });
        }
        strip_dots.sort();
        let mut strips: Vec<StripInfo> = strip_dots
            .iter()
            .map(|&d| StripInfo { dot: d, slab_count: 0, slab_members: [NO_VERTEX; 2], disp: Vec::new() })
            .collect();
        for (i, d) in disps.iter_mut().enumerate() {
            let s = strips.iter().position(|s| s.dot == d.dot).unwrap();
            d.strip = s;
            strips[s].disp.push(i);
        }

        Ok(EventClassifier {
            geom,
            t,
            u_axis,
            du,
            origin,
            u_vid,
            dot,
            disps,
            strips,
            epoch: 0,
            full_mark: vec![0; n],
            strip_mark: vec![0; n],
            queue: Vec::new(),
        })
    }

    pub fn displacements(&self) -> Vec<Point> {
        self.disps.iter().map(|d| d.point.clone()).collect()
    }

    pub fn direction(&self) -> &Direction {
        &self.t
    }

    fn neighbor_plus_u(&self, v: u32) -> u32 {
        self.geom.neighbor_slot(v, 2 * self.u_axis).0
    }

    fn neighbor_minus_u(&self, v: u32) -> u32 {
        self.geom.neighbor_slot(v, 2 * self.u_axis + 1).0
    }

    /// Full-cluster pass (depth-first, so shell contact of a spanning
    /// cluster is found early). Fills slab aggregates, shell extremes,
    /// h_tilde tallies and membership marks. Aborts once every flag
    /// depending on it is determined false; returns
    /// (aborted, shell_touched, shell_min_dot, shell_max_dot,
    /// htilde_count, htilde_bad).
    fn full_pass<C: EdgeStates>(&mut self, config: &C) -> (bool, bool, i64, i64, u32, bool) {
        let d2 = 2 * self.geom.dim();
        let epoch = self.epoch;
        let mut shell_touched = false;
        let mut shell_min = i64::MAX;
        let mut shell_max = i64::MIN;
        let mut htilde_count = 0u32;
        let mut htilde_bad = false;
        for s in self.strips.iter_mut() {
            s.slab_count = 0;
            s.slab_members = [NO_VERTEX; 2];
        }
        self.queue.clear();
        self.full_mark[self.origin as usize] = epoch;
        self.queue.push(self.origin);
        while let Some(v) = self.queue.pop() {
            let dv = self.dot[v as usize];
            if self.geom.is_shell(v) {
                shell_touched = true;
                shell_min = shell_min.min(dv);
                shell_max = shell_max.max(dv);
            }
            if dv >= 0 && dv <= self.du {
                htilde_count += 1;
                if v != self.origin && v != self.u_vid {
                    htilde_bad = true;
                }
            }
            for s in self.strips.iter_mut() {
                if dv >= s.dot - self.du && dv <= s.dot {
                    if s.slab_count < 2 {
                        s.slab_members[s.slab_count as usize] = v;
                    }
                    s.slab_count += 1;
                }
            }
            if shell_touched {
                let htilde_dead = htilde_bad || htilde_count > 2 || shell_max >= 0;
                if htilde_dead
                    && self
                        .strips
                        .iter()
                        .all(|s| s.slab_count > 2 || shell_min <= s.dot)
                {
                    return (true, true, shell_min, shell_max, htilde_count, htilde_bad);
                }
            }
            for slot in 0..d2 {
                let (w, e) = self.geom.neighbor_slot(v, slot);
                if w != NO_VERTEX
                    && self.full_mark[w as usize] != epoch
                    && config.is_open(e)
                {
                    self.full_mark[w as usize] = epoch;
                    self.queue.push(w);
                }
            }
        }
        (false, shell_touched, shell_min, shell_max, htilde_count, htilde_bad)
    }

    /// Depth-first scan of the component of `start` among vertices with
    /// dot in `[lo, hi]`, with the half-open top convention: edges lying
    /// entirely in the top hyperplane `dot = hi` are excluded. Aborts
    /// when a shell vertex is reached if `abortable` (every event
    /// needing this cluster is then false). Marks with `epoch` in the
    /// given mark array; returns (dead, verts).
    fn strip_pass<C: EdgeStates>(
        geom: &BoxGeometry,
        dot: &[i64],
        mark: &mut [u32],
        queue: &mut Vec<u32>,
        epoch: u32,
        config: &C,
        start: u32,
        lo: i64,
        hi: i64,
        abortable: bool,
    ) -> (bool, Vec<(u32, i64)>) {
        let d2 = 2 * geom.dim();
        let mut verts = Vec::new();
        if dot[start as usize] < lo || dot[start as usize] > hi {
            return (false, verts);
        }
        queue.clear();
        mark[start as usize] = epoch;
        queue.push(start);
        while let Some(v) = queue.pop() {
            if abortable && geom.is_shell(v) {
                return (true, verts);
            }
            let dv = dot[v as usize];
            verts.push((v, dv));
            for slot in 0..d2 {
                let (w, e) = geom.neighbor_slot(v, slot);
                if w != NO_VERTEX
                    && mark[w as usize] != epoch
                    && dot[w as usize] >= lo
                    && dot[w as usize] <= hi
                    && !(dv == hi && dot[w as usize] == hi)
                    && config.is_open(e)
                {
                    mark[w as usize] = epoch;
                    queue.push(w);
                }
            }
        }
        (false, verts)
    }

    /// Break points of a completed strip scan: members of `verts` with
    /// dot in `[blo, bhi]` whose two-slab neighbourhood inside the strip
    /// contains exactly `{b-u, b, b+u}`.
    fn breaks_of(
        &self,
        verts: &[(u32, i64)],
        mark: &[u32],
        epoch: u32,
        blo: i64,
        bhi: i64,
    ) -> Vec<(u32, i64)> {
        if blo > bhi {
            return Vec::new();
        }
        let mut counts: BTreeMap<i64, u32> = BTreeMap::new();
        for &(_, dv) in verts {
            *counts.entry(dv).or_insert(0) += 1;
        }
        let mut out = Vec::new();
        for &(v, dv) in verts {
            if dv < blo || dv > bhi {
                continue;
            }
            let slab: u32 = counts.range(dv - self.du..=dv + self.du).map(|(_, c)| c).sum();
            if slab != 3 {
                continue;
            }
            let up = self.neighbor_plus_u(v);
            let down = self.neighbor_minus_u(v);
            if up != NO_VERTEX
                && down != NO_VERTEX
                && mark[up as usize] == epoch
                && mark[down as usize] == epoch
            {
                out.push((v, dv));
            }
        }
        out.sort_by_key(|&(_, dv)| dv);
        out
    }

    fn scan_strip<C: EdgeStates>(&mut self, config: &C, strip_dot: i64) -> StripScan {
        self.epoch += 1;
        let ep = self.epoch;
        let (dead, verts) = Self::strip_pass(
            &self.geom,
            &self.dot,
            &mut self.strip_mark,
            &mut self.queue,
            ep,
            config,
            self.origin,
            0,
            strip_dot,
            true,
        );
        if dead {
            return StripScan {
                dead: true,
                strip_epoch: ep,
                breaks: Vec::new(),
                t_bond_left: Vec::new(),
                lo_ok: false,
                top_count: 0,
                top_members: [NO_VERTEX; 2],
            };
        }
        // end slabs: [0, du] must be exactly {0, u}; collect the members
        // of [D - du, D] for the per-displacement check
        let mut lo_count = 0u32;
        let mut lo_bad = false;
        let mut top_count = 0u32;
        let mut top_members = [NO_VERTEX; 2];
        for &(v, dv) in &verts {
            if dv <= self.du {
                lo_count += 1;
                if v != self.origin && v != self.u_vid {
                    lo_bad = true;
                }
            }
            if dv >= strip_dot - self.du {
                if top_count < 2 {
                    top_members[top_count as usize] = v;
                }
                top_count += 1;
            }
        }
        let lo_ok = !lo_bad && lo_count == 2;
        let breaks = self.breaks_of(&verts, &self.strip_mark, ep, self.du, strip_dot - self.du);
        let mut t_bond_left = Vec::new();
        for i in 0..breaks.len() {
            let (v, dv) = breaks[i];
            let up = self.neighbor_plus_u(v);
            if up != NO_VERTEX
                && breaks
                    .iter()
                    .any(|&(bv, bd)| bv == up && bd == dv + self.du)
            {
                t_bond_left.push((v, dv));
            }
        }
        StripScan { dead: false, strip_epoch: ep, breaks, t_bond_left, lo_ok, top_count, top_members }
    }

    /// Classify one configuration, writing one flag set per displacement
    /// into `out` (which must have the displacement count's length).
    pub fn classify_into<C: EdgeStates>(&mut self, config: &C, out: &mut [EventFlags]) {
        assert_eq!(out.len(), self.disps.len());
        self.epoch += 1;
        let full_epoch = self.epoch;
        let (aborted, shell_touched, shell_min, shell_max, htilde_count, htilde_bad) =
            self.full_pass(config);
        let full_finite = !shell_touched;
        // h_tilde slab: the cluster meets [0, du] exactly in {0, u}
        let htilde_ok = !aborted && !htilde_bad && htilde_count == 2;

        for si in 0..self.strips.len() {
            let strip_dot = self.strips[si].dot;
            let scan = self.scan_strip(config, strip_dot);
            let bonds = scan.t_bond_left.len();
            let b_empty = scan.breaks.is_empty();

            for di in 0..self.strips[si].disp.len() {
                let idx = self.strips[si].disp[di];
                let d = &self.disps[idx];

                // strip events: both end slabs exact, then the
                // irreducible piece has no break points at all
                let y_in_k =
                    !scan.dead && self.strip_mark[d.vid as usize] == scan.strip_epoch;
                let top_ok = scan.top_count == 2
                    && d.vid_minus_u != NO_VERTEX
                    && ((scan.top_members[0] == d.vid && scan.top_members[1] == d.vid_minus_u)
                        || (scan.top_members[1] == d.vid
                            && scan.top_members[0] == d.vid_minus_u));
                let h = y_in_k && scan.lo_ok && top_ok;
                let f = h && b_empty;

                let flags = &mut out[idx];
                *flags = EventFlags::default();
                flags.h = h;
                flags.f = f;

                if aborted {
                    // every full-cluster event is already determined false
                    continue;
                }
                let y_in_c = self.full_mark[d.vid as usize] == full_epoch;
                flags.finite_connect = y_in_c && full_finite;
                flags.g = flags.finite_connect && bonds <= 1;

                let strip = &self.strips[si];
                let slab_ok = strip.slab_count == 2
                    && d.vid_minus_u != NO_VERTEX
                    && ((strip.slab_members[0] == d.vid && strip.slab_members[1] == d.vid_minus_u)
                        || (strip.slab_members[1] == d.vid
                            && strip.slab_members[0] == d.vid_minus_u));
                let lower_finite = !shell_touched || shell_min > d.dot;
                flags.h_bar = slab_ok && lower_finite;
                flags.f_bar = flags.h_bar && (!y_in_k || b_empty);

                flags.h_tilde = y_in_c && htilde_ok && (!shell_touched || shell_max < 0);
                flags.f_tilde = flags.h_tilde && (!y_in_k || b_empty);
            }
        }
    }

    /// Full records (break points, t-bonds, cluster statistics) for each
    /// displacement. Slower than `classify_into`; meant for one-shot use
    /// and the exhaustive oracle's spot checks.
    pub fn classify_records(&mut self, config: &BondConfig) -> Result<Vec<EventRecord>> {
        let mut flags = vec![EventFlags::default(); self.disps.len()];
        self.classify_into(config, &mut flags);

        let zero = Point::zero(self.geom.dim());
        let cluster = component(&self.geom, config, &zero)?;
        let finite = !cluster.touches_box_boundary;
        let (surface_size, cluster_edges) = if finite {
            let filled = fill(&cluster, self.geom.bbox())?;
            (Some(filled.external_boundary.len()), Some(filled.open_edges.len()))
        } else {
            (None, None)
        };

        let mut out = Vec::with_capacity(self.disps.len());
        for (i, d) in self.disps.iter().enumerate() {
            // strip cluster of (0, y), set-based, for the record fields
            let strip_cluster = strip_component(&self.geom, config, &zero, &self.t, d.dot)?;
            let bps = match &strip_cluster {
                Some(c) if c.vertices.contains(&d.point) => {
                    detect_break_points(c, &self.t, &d.point)
                }
                _ => Vec::new(),
            };
            let (bonds, _) = detect_t_bonds(&bps, &self.t);
            let in_cluster = cluster.vertices.contains(&d.point);
            out.push(EventRecord {
                displacement: d.point.clone(),
                finite_connect: flags[i].finite_connect,
                h: flags[i].h,
                f: flags[i].f,
                g: flags[i].g,
                h_bar: flags[i].h_bar,
                f_bar: flags[i].f_bar,
                h_tilde: flags[i].h_tilde,
                f_tilde: flags[i].f_tilde,
                break_points: bps,
                t_bonds: bonds,
                surface_size: if in_cluster { surface_size } else { None },
                cluster_edges: if in_cluster { cluster_edges } else { None },
            });
        }
        Ok(out)
    }
}

/// Strip cluster of `x` for the strip `0 <= <t,.> <= strip_dot`
/// (comparison units), as explicit `ClusterData`; `None` when `x` is not
/// in the strip. Edges leaving the strip are treated closed, and edges
/// lying entirely in the top hyperplane `<t,z> = strip_dot` are excluded
/// (the half-open convention of the renewal pieces).
pub fn strip_component<C: EdgeStates>(
    geom: &Arc<BoxGeometry>,
    config: &C,
    x: &Point,
    t: &Direction,
    strip_dot: i64,
) -> Result<Option<ClusterData>> {
    let dx = t.dot(x);
    if dx < 0 || dx > strip_dot {
        return Ok(None);
    }
    let start = geom
        .vertex_id(x)
        .ok_or_else(|| Error::OutOfBox { point: x.0.clone() })?;
    let d2 = 2 * geom.dim();
    let mut in_comp = std::collections::HashSet::new();
    let mut queue = std::collections::VecDeque::from([start]);
    in_comp.insert(start);
    let mut touches = geom.is_shell(start);
    while let Some(v) = queue.pop_front() {
        let dv = t.dot(&geom.point_of(v));
        for slot in 0..d2 {
            let (w, e) = geom.neighbor_slot(v, slot);
            if w == NO_VERTEX || !config.is_open(e) {
                continue;
            }
            let dw = t.dot(&geom.point_of(w));
            if dw < 0 || dw > strip_dot || (dv == strip_dot && dw == strip_dot) {
                continue;
            }
            if in_comp.insert(w) {
                touches |= geom.is_shell(w);
                queue.push_back(w);
            }
        }
    }
    let mut vertices = std::collections::BTreeSet::new();
    let mut open_edges = std::collections::BTreeSet::new();
    for &v in &in_comp {
        let p = geom.point_of(v);
        let dv = t.dot(&p);
        for axis in 0..geom.dim() {
            let q = p.step(axis, 1);
            if let Some(w) = geom.vertex_id(&q) {
                let dw = t.dot(&q);
                if in_comp.contains(&w) && !(dv == strip_dot && dw == strip_dot) {
                    let e = Edge { base: p.clone(), axis };
                    if config.is_open(geom.edge_id(&e).unwrap()) {
                        open_edges.insert(e);
                    }
                }
            }
        }
        vertices.insert(p);
    }
    let mut graph_boundary = std::collections::BTreeSet::new();
    for p in &vertices {
        for axis in 0..geom.dim() {
            for delta in [1i64, -1] {
                let q = p.step(axis, delta);
                if !vertices.contains(&q) {
                    let e = if delta == 1 {
                        Edge { base: p.clone(), axis }
                    } else {
                        Edge { base: q, axis }
                    };
                    graph_boundary.insert(e);
                }
            }
        }
    }
    Ok(Some(ClusterData {
        vertices,
        open_edges,
        graph_boundary,
        filled_vertices: Default::default(),
        external_boundary: Default::default(),
        plaquettes: Default::default(),
        touches_box_boundary: touches,
    }))
}

/// One-shot classification of a single displacement.
pub fn classify_events(
    config: &BondConfig,
    x: &Point,
    t: &Direction,
    margin: i64,
) -> Result<EventRecord> {
    let geom = config.geometry().clone();
    let mut cls = EventClassifier::new(geom, t.clone(), std::slice::from_ref(x), margin)?;
    Ok(cls.classify_records(config)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    fn segment_config(n: i64, extra: &[Edge]) -> (Arc<BoxGeometry>, BondConfig) {
        let geom = BoxGeometry::new(LatticeBox::centered(3, 8).unwrap());
        let mut open: Vec<Edge> = (0..n)
            .map(|i| Edge { base: Point(vec![i, 0, 0]), axis: 0 })
            .collect();
        open.extend_from_slice(extra);
        let cfg = BondConfig::from_open_edges(geom.clone(), &open).unwrap();
        (geom, cfg)
    }

    fn axis_t() -> Direction {
        Direction::axis(3, 0)
    }

    #[test]
    fn break_points_straight_segment() {
        let (geom, cfg) = segment_config(4, &[]);
        let t = axis_t();
        let c = strip_component(&geom, &cfg, &Point::zero(3), &t, 4).unwrap().unwrap();
        let bps = detect_break_points(&c, &t, &Point(vec![4, 0, 0]));
        let expect: Vec<Point> =
            [1, 2, 3].into_iter().map(|i| Point(vec![i, 0, 0])).collect();
        assert_eq!(bps, expect);
        let (bonds, left) = detect_t_bonds(&bps, &t);
        assert_eq!(bonds.len(), 2);
        assert_eq!(left, vec![Point(vec![1, 0, 0]), Point(vec![2, 0, 0])]);
    }

    #[test]
    fn break_points_pendant_excluded() {
        let pendant = Edge { base: Point(vec![2, 0, 0]), axis: 1 };
        let (geom, cfg) = segment_config(4, &[pendant]);
        let t = axis_t();
        let c = strip_component(&geom, &cfg, &Point::zero(3), &t, 4).unwrap().unwrap();
        let bps = detect_break_points(&c, &t, &Point(vec![4, 0, 0]));
        assert!(!bps.contains(&Point(vec![2, 0, 0])));
    }

    #[test]
    fn break_points_empty_cluster() {
        let bps = detect_break_points(
            &ClusterData {
                vertices: Default::default(),
                open_edges: Default::default(),
                graph_boundary: Default::default(),
                filled_vertices: Default::default(),
                external_boundary: Default::default(),
                plaquettes: Default::default(),
                touches_box_boundary: false,
            },
            &axis_t(),
            &Point(vec![4, 0, 0]),
        );
        assert!(bps.is_empty());
    }

    #[test]
    fn t_bonds_gaps_and_singletons() {
        let t = axis_t();
        let single = [Point(vec![1, 0, 0])];
        assert!(detect_t_bonds(&single, &t).0.is_empty());
        let gap = [Point(vec![1, 0, 0]), Point(vec![3, 0, 0])];
        assert!(detect_t_bonds(&gap, &t).0.is_empty());
    }

    #[test]
    fn segment_four_h_true_f_false() {
        let (_, cfg) = segment_config(4, &[]);
        let rec = classify_events(&cfg, &Point(vec![4, 0, 0]), &axis_t(), 1).unwrap();
        assert!(rec.finite_connect);
        assert!(rec.h);
        assert!(!rec.f); // interior break point 2u1 of the pair (u, y-u)
        assert_eq!(rec.break_points.len(), 3);
        assert!(!rec.g); // two t-bonds
        assert!(rec.h_bar && rec.h_tilde);
        assert!(!rec.f_bar && !rec.f_tilde);
    }

    #[test]
    fn segment_two_h_and_g() {
        let (_, cfg) = segment_config(2, &[]);
        let rec = classify_events(&cfg, &Point(vec![2, 0, 0]), &axis_t(), 1).unwrap();
        assert!(rec.h);
        // the pair (0, 2u1) has the break point u1, so the piece is
        // reducible: it decomposes into two single-step pieces
        assert!(!rec.f);
        assert!(rec.g); // no t-bond at all
        assert!(rec.h_bar && rec.h_tilde);
        assert!(!rec.f_bar && !rec.f_tilde);
        assert_eq!(rec.break_points, vec![Point(vec![1, 0, 0])]);
        assert!(rec.t_bonds.is_empty());
        assert_eq!(rec.surface_size, Some(14));
        assert_eq!(rec.cluster_edges, Some(2));
    }

    #[test]
    fn single_step_is_irreducible() {
        let (_, cfg) = segment_config(1, &[]);
        let rec = classify_events(&cfg, &Point(vec![1, 0, 0]), &axis_t(), 1).unwrap();
        assert!(rec.h && rec.f); // no room for any break point
        assert!(rec.h_bar && rec.f_bar);
        assert!(rec.h_tilde && rec.f_tilde);
    }

    #[test]
    fn renewal_identity_is_exact_on_segments() {
        // h(n u1) = f(u1)^n for straight segments: the half-open end
        // slabs make concatenated pieces edge-disjoint. Spot-check the
        // event content: a wandering cluster at the top layer of the
        // strip does not spoil h (transverse edges there are excluded).
        let top_wander = Edge { base: Point(vec![2, 0, 0]), axis: 1 };
        let (_, cfg) = segment_config(2, &[top_wander]);
        let rec = classify_events(&cfg, &Point(vec![2, 0, 0]), &axis_t(), 1).unwrap();
        assert!(rec.h, "top-layer transverse edge must not enter the strip cluster");
        // the same edge one layer earlier does spoil it
        let mid_wander = Edge { base: Point(vec![1, 0, 0]), axis: 1 };
        let (_, cfg2) = segment_config(2, &[mid_wander]);
        let rec2 = classify_events(&cfg2, &Point(vec![2, 0, 0]), &axis_t(), 1).unwrap();
        assert!(!rec2.h);
    }

    #[test]
    fn renewal_split_at_first_and_last_t_bond() {
        // 0..4u1: B_e = {u1, 2u1}; the factorization cuts at z1 = u1
        // (first t-bond left end) and z2 = 3u1 (last t-bond right end):
        // f_bar(0,z1), h(z1,z2), f_tilde(z2,x) all hold.
        let (_, cfg) = segment_config(4, &[]);
        let t = axis_t();
        let rec_z1 = classify_events(&cfg, &Point(vec![1, 0, 0]), &t, 1).unwrap();
        assert!(rec_z1.f_bar, "prefix 0 -> first t-bond left end is f_bar");
        // h(z1, z2) by translation invariance: shift the config by -z1.
        // Equivalent explicit config: segment 0..2u1 inside 1..3u1
        // geometry; reuse 0..2 segment with the pendant-free classifier.
        let (_, cfg_mid) = segment_config(2, &[]);
        let mid = classify_events(&cfg_mid, &Point(vec![2, 0, 0]), &t, 1).unwrap();
        assert!(mid.h, "middle piece is h-connected");
        let rec_suffix = classify_events(&cfg, &Point(vec![4, 0, 0]), &t, 1).unwrap();
        assert!(rec_suffix.h, "whole segment is h-connected");
        // suffix f_tilde(3u1 -> 4u1): single step from the last bond's
        // right end; by translation this is the mirrored prefix.
        let (_, cfg_one) = segment_config(1, &[]);
        let suf = classify_events(&cfg_one, &Point(vec![1, 0, 0]), &t, 1).unwrap();
        assert!(suf.h_tilde && suf.f_tilde);
    }

    #[test]
    fn classifier_matches_set_based_break_detection() {
        // classifier break points (via records) against the set-based op
        use rand::rngs::SmallRng;
        use rand::{Rng, SeedableRng};
        let geom = BoxGeometry::new(LatticeBox::centered(3, 5).unwrap());
        let t = Direction::from_integer(vec![1, 1, 0]).unwrap();
        let mut rng = SmallRng::seed_from_u64(7);
        for _ in 0..40 {
            let bits: Vec<bool> =
                (0..geom.edge_count()).map(|_| rng.random_bool(0.35)).collect();
            let cfg = BondConfig::from_bits(geom.clone(), &bits).unwrap();
            let y = Point(vec![2, 1, 0]);
            let mut cls =
                EventClassifier::new(geom.clone(), t.clone(), std::slice::from_ref(&y), 1)
                    .unwrap();
            let rec = cls.classify_records(&cfg).unwrap().remove(0);
            let strip = strip_component(&geom, &cfg, &Point::zero(3), &t, t.dot(&y))
                .unwrap()
                .unwrap();
            let bps = if strip.vertices.contains(&y) {
                detect_break_points(&strip, &t, &y)
            } else {
                Vec::new()
            };
            assert_eq!(rec.break_points, bps);
            assert!(rec.flags().implications_ok());
        }
    }

    #[test]
    fn margin_violation_rejected() {
        let geom = BoxGeometry::new(LatticeBox::centered(3, 2).unwrap());
        let err = match EventClassifier::new(
            geom,
            axis_t(),
            std::slice::from_ref(&Point(vec![2, 0, 0])),
            1,
        ) {
            Err(e) => e,
            Ok(_) => panic!("expected margin violation"),
        };
        assert!(matches!(err, Error::MarginViolation { .. }));
    }
}
