//! Deterministic renewal machinery: convolution solving of
//! `h = delta_0 + f * h`, generating functions, tilt-surface root
//! finding `F(s) = 1`, drift and covariance extraction, and the
//! local-CLT prediction with its closed-form prefactor.
//!
//! The direct kernel `f` is supported on the positive side of the layer
//! direction, which makes the renewal recursion triangular: `h` on a
//! layer depends only on strictly lower layers. Solving by forward
//! propagation reproduces the series `delta_0 + sum_k f^(*k)` exactly on
//! the reachable cone, so the defining identity holds to rounding error
//! on the whole solve window.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::direction::Direction;
use crate::error::{Error, Result};
use crate::fitter::linear_fit;
use crate::kernel::{Kernel, KernelEntry, KernelKind};
use crate::lattice::Point;

/// Exponent cap for tilted sums; beyond this the sum is declared
/// overflowed rather than returning infinities.
pub const EXP_CAP: f64 = 700.0;

/// Restriction window for convolutions.
#[derive(Clone, Debug)]
pub enum Window {
    All,
    LInf(i64),
    Layers { dir: Direction, max: i64 },
}

impl Window {
    fn contains(&self, x: &Point) -> bool {
        match self {
            Window::All => true,
            Window::LInf(r) => x.linf() <= *r,
            Window::Layers { dir, max } => {
                let l = dir.dot(x);
                l >= 0 && l <= *max
            }
        }
    }
}

/// Exact lattice convolution restricted to a window. Standard errors,
/// when present on either input, propagate to first order assuming
/// independent entries: `var(c) = sum a^2 var(b) + var(a) b^2`.
pub fn convolve(a: &Kernel, b: &Kernel, window: &Window) -> Result<Kernel> {
    if a.dim() != b.dim() {
        return Err(Error::KernelContract("convolution dimension mismatch".into()));
    }
    let mut acc: BTreeMap<Point, (f64, f64)> = BTreeMap::new();
    for (xa, ea) in a.iter() {
        for (xb, eb) in b.iter() {
            let x = xa.add(xb);
            if !window.contains(&x) {
                continue;
            }
            let slot = acc.entry(x).or_insert((0.0, 0.0));
            slot.0 += ea.value * eb.value;
            let va = ea.std_error.map_or(0.0, |s| s * s);
            let vb = eb.std_error.map_or(0.0, |s| s * s);
            slot.1 += ea.value * ea.value * vb + va * eb.value * eb.value;
        }
    }
    let carry_errors = a.iter().any(|(_, e)| e.std_error.is_some())
        || b.iter().any(|(_, e)| e.std_error.is_some());
    Kernel::from_entries(
        a.dim(),
        KernelKind::Synthetic,
        acc.into_iter().map(|(x, (v, var))| {
            (x, KernelEntry { value: v, std_error: carry_errors.then(|| var.sqrt()) })
        }),
    )
}

fn layered_atoms(f: &Kernel, dir: &Direction) -> Result<Vec<(Point, i64, f64)>> {
    let zero = Point::zero(f.dim());
    if f.value(&zero) != 0.0 {
        return Err(Error::KernelContract("direct kernel must have f(0) = 0".into()));
    }
    let mut atoms = Vec::new();
    for (x, e) in f.iter() {
        if e.value == 0.0 {
            continue;
        }
        let l = dir.dot(x);
        if l <= 0 {
            return Err(Error::KernelContract(format!(
                "direct kernel atom {:?} is not on the positive side of the layer direction",
                x.0
            )));
        }
        atoms.push((x.clone(), l, e.value));
    }
    if atoms.is_empty() {
        return Err(Error::KernelContract("direct kernel has no atoms".into()));
    }
    Ok(atoms)
}

/// Solve `h = delta_0 + f * h` layer by layer up to `max_layer`
/// (inclusive, in the direction's comparison units). The identity is
/// exact on the whole reachable cone.
pub fn renewal_solve(f: &Kernel, dir: &Direction, max_layer: i64) -> Result<Kernel> {
    renewal_solve_impl(f, dir, max_layer, None)
}

/// Windowed solve: coordinates transverse to the distinguished axis of
/// `dir` are capped at `transverse_cap` in absolute value. The neglected
/// mass is bounded by the Gaussian tail of the tilted walk beyond the
/// cap; callers pick the cap so this is far below their tolerance.
pub fn renewal_solve_windowed(
    f: &Kernel,
    dir: &Direction,
    max_layer: i64,
    transverse_cap: i64,
) -> Result<Kernel> {
    renewal_solve_impl(f, dir, max_layer, Some(transverse_cap))
}

fn renewal_solve_impl(
    f: &Kernel,
    dir: &Direction,
    max_layer: i64,
    cap: Option<i64>,
) -> Result<Kernel> {
    let atoms = layered_atoms(f, dir)?;
    let u_axis = dir.u_axis();
    let transverse_ok = |y: &Point, c: i64| -> bool {
        y.0.iter().enumerate().all(|(i, &v)| i == u_axis || v.abs() <= c)
    };
    let mut layers: BTreeMap<i64, BTreeMap<Point, f64>> = BTreeMap::new();
    layers.entry(0).or_default().insert(Point::zero(f.dim()), 1.0);
    let mut pending: Vec<i64> = vec![0];
    while let Some(l) = pending.first().copied() {
        pending.remove(0);
        let current: Vec<(Point, f64)> = match layers.get(&l) {
            Some(m) => m.iter().map(|(p, &v)| (p.clone(), v)).collect(),
            None => continue,
        };
        for (x, hx) in current {
            for (z, lz, fz) in &atoms {
                let ly = l + lz;
                if ly > max_layer {
                    continue;
                }
                let y = x.add(z);
                if let Some(c) = cap {
                    if !transverse_ok(&y, c) {
                        continue;
                    }
                }
                let slot = layers.entry(ly).or_default().entry(y).or_insert(0.0);
                *slot += hx * fz;
                if !pending.contains(&ly) {
                    let pos = pending.binary_search(&ly).unwrap_err();
                    pending.insert(pos, ly);
                }
            }
        }
    }
    Kernel::from_entries(
        f.dim(),
        KernelKind::H,
        layers
            .into_iter()
            .flat_map(|(_, m)| m.into_iter())
            .map(|(x, v)| (x, KernelEntry::exact(v))),
    )
}

/// Max-norm residual of the defining identity `h - delta_0 - f * h` over
/// all points with layer in `[0, max_layer]`.
pub fn renewal_residual(f: &Kernel, h: &Kernel, dir: &Direction, max_layer: i64) -> Result<f64> {
    let conv = convolve(f, h, &Window::Layers { dir: dir.clone(), max: max_layer })?;
    let zero = Point::zero(f.dim());
    let mut points: std::collections::BTreeSet<Point> = std::collections::BTreeSet::new();
    points.insert(zero.clone());
    for (x, _) in h.iter() {
        let l = dir.dot(x);
        if l >= 0 && l <= max_layer {
            points.insert(x.clone());
        }
    }
    for (x, _) in conv.iter() {
        points.insert(x.clone());
    }
    let mut worst: f64 = 0.0;
    for x in points {
        let delta = if x == zero { 1.0 } else { 0.0 };
        let r = h.value(&x) - delta - conv.value(&x);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// `delta_0 + sum_{k <= k_max} f^(*k)`, the brute-force renewal series.
pub fn series_sum(f: &Kernel, k_max: usize, window: &Window) -> Result<Kernel> {
    let mut acc: BTreeMap<Point, f64> = BTreeMap::new();
    acc.insert(Point::zero(f.dim()), 1.0);
    let mut power = Kernel::delta(f.dim());
    for _ in 1..=k_max {
        power = convolve(&power, f, window)?;
        for (x, e) in power.iter() {
            *acc.entry(x.clone()).or_insert(0.0) += e.value;
        }
    }
    Kernel::from_entries(
        f.dim(),
        KernelKind::H,
        acc.into_iter().map(|(x, v)| (x, KernelEntry::exact(v))),
    )
}

/// Geometric tail bound on the truncated series: terms beyond `k_max`
/// contribute at most `F(0)^(k_max+1) / (1 - F(0))` in total mass.
pub fn series_tail_bound(f: &Kernel, k_max: usize) -> f64 {
    let m = f.total_mass();
    if m >= 1.0 {
        return f64::INFINITY;
    }
    m.powi(k_max as i32 + 1) / (1.0 - m)
}

/// Tilted sum `sum_x k(x) exp(<s, x>)`, with an overflow guard.
pub fn generating_value(k: &Kernel, s: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (x, e) in k.iter() {
        let dot = x.dot_f64(s);
        if dot > EXP_CAP {
            return Err(Error::Overflow);
        }
        acc += e.value * dot.exp();
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TiltVector {
    pub s: Vec<f64>,
}

/// Scalar root `lambda` with `F(lambda * direction) = 1`, by safeguarded
/// bisection. Requires `F(0) < 1` and the sum to grow without bound
/// along the ray.
pub fn solve_tilt_boundary(f: &Kernel, ray: &[f64]) -> Result<TiltVector> {
    let mass = f.total_mass();
    if mass >= 1.0 {
        return Err(Error::KernelMass { mass });
    }
    let max_pos_dot = f
        .iter()
        .map(|(x, _)| x.dot_f64(ray))
        .fold(f64::NEG_INFINITY, f64::max);
    if max_pos_dot <= 0.0 {
        return Err(Error::RayDoesNotCross);
    }
    let eval = |lambda: f64| -> Result<f64> {
        let s: Vec<f64> = ray.iter().map(|&r| r * lambda).collect();
        generating_value(f, &s)
    };
    let cap = EXP_CAP / max_pos_dot;
    let mut hi = 1.0f64.min(cap);
    while eval(hi)? < 1.0 {
        if hi >= cap {
            return Err(Error::RayDoesNotCross);
        }
        hi = (hi * 2.0).min(cap);
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let s: Vec<f64> = ray.iter().map(|&r| r * lambda).collect();
    let residual = (generating_value(f, &s)? - 1.0).abs();
    if residual > 1e-10 {
        return Err(Error::Invalid(format!(
            "tilt root residual {} exceeds 1e-10",
            residual
        )));
    }
    Ok(TiltVector { s })
}

/// Mean and covariance of the tilted distribution
/// `q(x) = f(x) exp(<s, x>) / F(s)`; at a tilt on the boundary surface
/// the normalizer is 1. These equal the gradient and Hessian of
/// `log F` at `s`.
pub fn mean_cov(f: &Kernel, s: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = f.dim();
    let norm = generating_value(f, s)?;
    if norm <= 0.0 {
        return Err(Error::KernelContract("tilted mass vanishes".into()));
    }
    let mut mu = DVector::zeros(d);
    for (x, e) in f.iter() {
        let q = e.value * x.dot_f64(s).exp() / norm;
        for i in 0..d {
            mu[i] += q * x.0[i] as f64;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (x, e) in f.iter() {
        let q = e.value * x.dot_f64(s).exp() / norm;
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += q * (x.0[i] as f64 - mu[i]) * (x.0[j] as f64 - mu[j]);
            }
        }
    }
    Ok((mu, cov))
}

/// Central finite differences of `log F` against the exact moments.
/// Returns (max gradient deviation, max Hessian deviation).
pub fn mean_cov_fd_check(f: &Kernel, s: &[f64], step: f64) -> Result<(f64, f64)> {
    let d = f.dim();
    let (mu, cov) = mean_cov(f, s)?;
    let logf = |s: &[f64]| -> Result<f64> { Ok(generating_value(f, s)?.ln()) };
    let mut grad_err: f64 = 0.0;
    let mut hess_err: f64 = 0.0;
    for i in 0..d {
        let mut sp = s.to_vec();
        let mut sm = s.to_vec();
        sp[i] += step;
        sm[i] -= step;
        let g = (logf(&sp)? - logf(&sm)?) / (2.0 * step);
        grad_err = grad_err.max((g - mu[i]).abs());
        for j in 0..d {
            let h = if i == j {
                (logf(&sp)? - 2.0 * logf(s)? + logf(&sm)?) / (step * step)
            } else {
                let mut spp = s.to_vec();
                spp[i] += step;
                spp[j] += step;
                let mut spm = s.to_vec();
                spm[i] += step;
                spm[j] -= step;
                let mut smp = s.to_vec();
                smp[i] -= step;
                smp[j] += step;
                let mut smm = s.to_vec();
                smm[i] -= step;
                smm[j] -= step;
                (logf(&spp)? - logf(&spm)? - logf(&smp)? + logf(&smm)?) / (4.0 * step * step)
            };
            hess_err = hess_err.max((h - cov[(i, j)]).abs());
        }
    }
    Ok((grad_err, hess_err))
}

/// The tilted step distribution `q = f e^{<s,x>}` on the boundary
/// surface, a probability measure with exponentially decaying tails.
#[derive(Clone, Debug)]
pub struct TiltedDistribution {
    pub q: Kernel,
    pub tilt: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailCertificate {
    pub support_radius: i64,
    pub max_boundary_mass: f64,
    /// fitted decay rate `-log(max boundary mass) / radius`
    pub rate: f64,
}

impl TiltedDistribution {
    pub fn new(f: &Kernel, s: &[f64]) -> Result<Self> {
        let mut q = Kernel::new(f.dim(), KernelKind::Synthetic);
        let mut total = 0.0;
        for (x, e) in f.iter() {
            let v = e.value * x.dot_f64(s).exp();
            total += v;
            q.insert(x.clone(), KernelEntry::exact(v))?;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::KernelContract(format!(
                "tilted mass {} is not 1 within 1e-12; tilt is off the boundary surface",
                total
            )));
        }
        Ok(TiltedDistribution { q, tilt: s.to_vec() })
    }

    /// Numerical certificate of exponential decay on the truncation
    /// boundary shell.
    pub fn tail_certificate(&self) -> TailCertificate {
        let r = self.q.support_radius();
        let max_boundary = self
            .q
            .iter()
            .filter(|(x, _)| x.linf() == r)
            .map(|(_, e)| e.value)
            .fold(0.0, f64::max);
        let rate = if max_boundary > 0.0 && r > 0 {
            -(max_boundary.ln()) / r as f64
        } else {
            f64::INFINITY
        };
        TailCertificate { support_radius: r, max_boundary_mass: max_boundary, rate }
    }
}

fn det_i64(rows: &[&[i64]]) -> i64 {
    let d = rows.len();
    match d {
        0 => 1,
        1 => rows[0][0],
        2 => rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
        _ => {
            let mut acc = 0i64;
            for j in 0..d {
                if rows[0][j] == 0 {
                    continue;
                }
                let minor: Vec<Vec<i64>> = rows[1..]
                    .iter()
                    .map(|r| {
                        r.iter()
                            .enumerate()
                            .filter(|(k, _)| *k != j)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let refs: Vec<&[i64]> = minor.iter().map(|r| r.as_slice()).collect();
                let sign = if j % 2 == 0 { 1 } else { -1 };
                acc += sign * rows[0][j] * det_i64(&refs);
            }
            acc
        }
    }
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd_i64(b, a % b)
    }
}

/// gcd of all d x d minors: the covolume of the integer lattice spanned
/// by the rows (0 when the rank is deficient).
fn minors_gcd(vecs: &[Vec<i64>], d: usize) -> i64 {
    if vecs.len() < d {
        return 0;
    }
    let mut g = 0i64;
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let rows: Vec<&[i64]> = idx.iter().map(|&i| vecs[i].as_slice()).collect();
        g = gcd_i64(g, det_i64(&rows));
        // next combination
        let n = vecs.len();
        let mut k = d;
        loop {
            if k == 0 {
                return g;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] <= n - d + k {
                for j in k + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Covolume of the integer lattice generated by the differences of the
/// direct kernel's support points. The k-step tilted walk lives on a
/// coset of this lattice, and the local-CLT density carries the
/// covolume as a constant factor. For percolation direct kernels the
/// support is aperiodic (positive on a half-space ball) and the factor
/// is 1; parity-preserving synthetic kernels have covolume 2.
pub fn support_covolume(f: &Kernel) -> Result<u64> {
    let atoms: Vec<&Point> =
        f.iter().filter(|(_, e)| e.value > 0.0).map(|(x, _)| x).collect();
    let d = f.dim();
    if atoms.len() < 2 {
        return Err(Error::SingularCovariance);
    }
    let x0 = atoms[0];
    let diffs: Vec<Vec<i64>> = atoms[1..].iter().map(|x| x.sub(x0).0).collect();
    let c = minors_gcd(&diffs, d);
    if c == 0 {
        return Err(Error::SingularCovariance);
    }
    let mut with_x0 = diffs;
    with_x0.push(x0.0.clone());
    if minors_gcd(&with_x0, d) != c {
        return Err(Error::Invalid(
            "direct kernel support is k-periodic; the local-CLT prediction is not supported"
                .into(),
        ));
    }
    Ok(c as u64)
}

/// A direct kernel with its tilt on `{F = 1}`, drift, covariance and
/// closed-form prefactor.
#[derive(Clone, Debug)]
pub struct RenewalModel {
    pub f: Kernel,
    pub truncation: i64,
    pub layer_dir: Direction,
    pub s_star: TiltVector,
    pub mu: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub phi_prefactor: f64,
    /// sublattice covolume of the support (1 in the aperiodic case)
    pub lattice_covolume: u64,
}

impl RenewalModel {
    /// Build the model: solve the tilt along `ray`, extract moments,
    /// verify the contracts (`F(s*) = 1` within 1e-10, covariance
    /// nondegenerate, `<s*, mu> > 0`).
    pub fn from_kernel(f: Kernel, layer_dir: Direction, ray: &[f64]) -> Result<Self> {
        layered_atoms(&f, &layer_dir)?;
        let s_star = solve_tilt_boundary(&f, ray)?;
        let (mu, cov) = mean_cov(&f, &s_star.s)?;
        let phi = phi_prefactor_parts(&mu, &cov)?;
        let s_dot_mu: f64 = s_star.s.iter().zip(mu.iter()).map(|(a, b)| a * b).sum();
        if s_dot_mu <= 0.0 {
            return Err(Error::Invalid("<s*, mu> must be positive".into()));
        }
        let lattice_covolume = support_covolume(&f)?;
        let truncation = f.support_radius();
        Ok(RenewalModel {
            f,
            truncation,
            layer_dir,
            s_star,
            mu,
            cov,
            phi_prefactor: phi,
            lattice_covolume,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// `tau(mu) = <s*, mu>` via the polar relation.
    pub fn tau_of_mu(&self) -> f64 {
        self.s_star.s.iter().zip(self.mu.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn tilted(&self) -> Result<TiltedDistribution> {
        TiltedDistribution::new(&self.f, &self.s_star.s)
    }
}

fn phi_prefactor_parts(mu: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let d = mu.len();
    let chol = cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let det = chol.determinant();
    if !(det > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let cinv_mu = chol.solve(mu);
    let quad = mu.dot(&cinv_mu);
    let mu_norm = mu.norm();
    Ok((mu_norm.powi(d as i32 - 1) / (det * quad)).sqrt())
}

/// Closed-form prefactor
/// `sqrt(||mu||^(d-1) / (det C <C^-1 mu, mu>))`.
pub fn phi_prefactor(model: &RenewalModel) -> Result<f64> {
    phi_prefactor_parts(&model.mu, &model.cov)
}

/// Local-CLT prediction of `h(floor(n mu))`:
/// `exp(-<floor(n mu), s*>) / sqrt((2 pi n)^(d-1) det C <C^-1 mu, mu>)`,
/// times the support-lattice covolume (1 in the aperiodic case).
pub fn oz_predict(model: &RenewalModel, n: u64) -> Result<(Point, f64)> {
    let d = model.dim();
    let chol = model.cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let det = chol.determinant();
    let quad = model.mu.dot(&chol.solve(&model.mu));
    let point = Point(
        (0..d).map(|i| (model.mu[i] * n as f64).floor() as i64).collect(),
    );
    let dot_s: f64 = point.0.iter().zip(&model.s_star.s).map(|(&a, b)| a as f64 * b).sum();
    let value = model.lattice_covolume as f64 * (-dot_s).exp()
        / ((2.0 * std::f64::consts::PI * n as f64).powi(d as i32 - 1) * det * quad).sqrt();
    Ok((point, value))
}

#[derive(Clone, Debug, Serialize)]
pub struct RayRate {
    pub direction: Vec<i64>,
    pub points: usize,
    /// fitted exponential decay rate of f/h along the ray
    pub rate: f64,
    pub rate_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MassGapReport {
    /// points where f > h beyond rounding (must be none)
    pub pointwise_violations: usize,
    /// points where h = 0 but f > 0 (defects)
    pub defects: Vec<Vec<i64>>,
    /// points where the ratio is 1 within rounding (the f-condition is
    /// vacuous at small layers, so these are expected near the origin)
    pub equal_points: usize,
    pub ray_rates: Vec<RayRate>,
}

/// Pointwise `f/h` comparison and fitted exponential rates along rays
/// through the origin.
pub fn mass_gap_check(f: &Kernel, h: &Kernel) -> Result<MassGapReport> {
    let mut violations = 0usize;
    let mut defects = Vec::new();
    let mut equal = 0usize;
    let mut by_ray: BTreeMap<Vec<i64>, Vec<(f64, f64)>> = BTreeMap::new();
    for (x, e) in f.iter() {
        if e.value == 0.0 {
            continue;
        }
        let hv = h.value(x);
        if hv == 0.0 {
            defects.push(x.0.clone());
            continue;
        }
        let ratio = e.value / hv;
        if ratio > 1.0 + 1e-9 {
            violations += 1;
        } else if (ratio - 1.0).abs() <= 1e-9 {
            equal += 1;
        }
        let g = x.0.iter().fold(0i64, |acc, &c| {
            let c = c.abs();
            if acc == 0 {
                c
            } else if c == 0 {
                acc
            } else {
                let (mut a, mut b) = (acc, c);
                while b != 0 {
                    let t = a % b;
                    a = b;
                    b = t;
                }
                a
            }
        });
        if g > 0 {
            let prim: Vec<i64> = x.0.iter().map(|&c| c / g).collect();
            by_ray.entry(prim).or_default().push((x.norm(), ratio));
        }
    }
    let mut ray_rates = Vec::new();
    for (dir, mut pts) in by_ray {
        if pts.len() < 3 {
            continue;
        }
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let fit = linear_fit(&xs, &ys, None)?;
        ray_rates.push(RayRate {
            direction: dir,
            points: pts.len(),
            rate: -fit.slope,
            rate_se: fit.slope_se,
        });
    }
    Ok(MassGapReport { pointwise_violations: violations, defects, equal_points: equal, ray_rates })
}

/// Per-k contributions `Q^(x k)(S_k = x)` of the tilted random walk;
/// the renewal sum concentrates in a Gaussian window of k around the
/// ballistic index.
pub fn k_decomposition(f: &Kernel, s: &[f64], x: &Point, k_max: usize) -> Result<Vec<f64>> {
    let tilted = TiltedDistribution::new(f, s)?;
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(if x.0.iter().all(|&c| c == 0) { 1.0 } else { 0.0 });
    let mut power = Kernel::delta(f.dim());
    let window = Window::LInf(x.linf() + f.support_radius() * 2 + 2);
    for _ in 1..=k_max {
        power = convolve(&power, &tilted.q, &window)?;
        out.push(power.value(x));
    }
    Ok(out)
}

pub mod synthetic {
    //! Closed-form direct kernels used across the test and example
    //! suites.

    use super::*;

    /// `q delta_{u1}` in d = 2: geometric renewal, `h(n u1) = q^n`.
    pub fn geometric(q: f64) -> Kernel {
        let mut k = Kernel::new(2, KernelKind::F);
        k.insert(Point(vec![1, 0]), KernelEntry::exact(q)).unwrap();
        k
    }

    /// `(q/2)(delta_{(1,1)} + delta_{(1,-1)})`: symmetric two-atom walk,
    /// `h(n, j) = q^n binom(n, (n+j)/2) / 2^n`.
    pub fn two_atom(q: f64) -> Kernel {
        let mut k = Kernel::new(2, KernelKind::F);
        k.insert(Point(vec![1, 1]), KernelEntry::exact(q / 2.0)).unwrap();
        k.insert(Point(vec![1, -1]), KernelEntry::exact(q / 2.0)).unwrap();
        k
    }

    /// Two-atom kernel plus `q2 delta_{(2,0)}`: full-rank covariance in
    /// d = 2.
    pub fn three_atom(q: f64, q2: f64) -> Kernel {
        let mut k = two_atom(q);
        k.insert(Point(vec![2, 0]), KernelEntry::exact(q2)).unwrap();
        k
    }

    /// `(q/4)(delta_{(1,±1,0)} + delta_{(1,0,±1)}) + q2 delta_{(2,0,0)}`:
    /// full-rank covariance in d = 3 (parity-preserving, covolume 2).
    pub fn five_atom_d3(q: f64, q2: f64) -> Kernel {
        let mut k = Kernel::new(3, KernelKind::F);
        for (a, b) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            k.insert(Point(vec![1, a, b]), KernelEntry::exact(q / 4.0)).unwrap();
        }
        k.insert(Point(vec![2, 0, 0]), KernelEntry::exact(q2)).unwrap();
        k
    }

    /// `a delta_{(1,0)} + (b/2)(delta_{(1,±1)}) + c delta_{(2,0)}`:
    /// full-rank and aperiodic in d = 2 (covolume 1).
    pub fn four_atom_aperiodic(a: f64, b: f64, c: f64) -> Kernel {
        let mut k = Kernel::new(2, KernelKind::F);
        k.insert(Point(vec![1, 0]), KernelEntry::exact(a)).unwrap();
        k.insert(Point(vec![1, 1]), KernelEntry::exact(b / 2.0)).unwrap();
        k.insert(Point(vec![1, -1]), KernelEntry::exact(b / 2.0)).unwrap();
        k.insert(Point(vec![2, 0]), KernelEntry::exact(c)).unwrap();
        k
    }

    /// `a delta_{(1,0,0)} + (b/4)(delta_{(1,±1,0)} + delta_{(1,0,±1)})
    /// + c delta_{(2,0,0)}`: full-rank and aperiodic in d = 3.
    pub fn six_atom_aperiodic_d3(a: f64, b: f64, c: f64) -> Kernel {
        let mut k = Kernel::new(3, KernelKind::F);
        k.insert(Point(vec![1, 0, 0]), KernelEntry::exact(a)).unwrap();
        for (y, z) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            k.insert(Point(vec![1, y, z]), KernelEntry::exact(b / 4.0)).unwrap();
        }
        k.insert(Point(vec![2, 0, 0]), KernelEntry::exact(c)).unwrap();
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u1_dir() -> Direction {
        Direction::axis(2, 0)
    }

    #[test]
    fn convolve_identity_and_point_masses() {
        let delta = Kernel::delta(2);
        let b = synthetic::three_atom(0.3, 0.1);
        let c = convolve(&delta, &b, &Window::All).unwrap();
        for (x, e) in b.iter() {
            assert_eq!(c.value(x), e.value);
        }
        // point mass squared doubles the displacement
        let pm = Kernel::point_mass(Point(vec![1, 0]), 0.25).unwrap();
        let sq = convolve(&pm, &pm, &Window::All).unwrap();
        assert_eq!(sq.value(&Point(vec![2, 0])), 0.0625);
        assert_eq!(sq.len(), 1);
    }

    #[test]
    fn convolve_matches_brute_force() {
        use rand::rngs::SmallRng;
        use rand::{Rng, SeedableRng};
        let mut rng = SmallRng::seed_from_u64(3);
        let mut a = Kernel::new(2, KernelKind::Synthetic);
        let mut b = Kernel::new(2, KernelKind::Synthetic);
        for _ in 0..12 {
            let p = Point(vec![rng.random_range(-3..4), rng.random_range(-3..4)]);
            a.insert(p, KernelEntry::exact(rng.random_range(0.0..1.0))).unwrap();
            let q = Point(vec![rng.random_range(-3..4), rng.random_range(-3..4)]);
            b.insert(q, KernelEntry::exact(rng.random_range(0.0..1.0))).unwrap();
        }
        let c = convolve(&a, &b, &Window::All).unwrap();
        // independent double loop in the same deterministic order
        let mut expect: BTreeMap<Point, f64> = BTreeMap::new();
        for (xa, ea) in a.iter() {
            for (xb, eb) in b.iter() {
                *expect.entry(xa.add(xb)).or_insert(0.0) += ea.value * eb.value;
            }
        }
        for (x, v) in expect {
            assert_eq!(c.value(&x), v);
        }
    }

    #[test]
    fn geometric_renewal_solution() {
        let q = 0.6;
        let f = synthetic::geometric(q);
        let h = renewal_solve(&f, &u1_dir(), 30).unwrap();
        for n in 0..=30i64 {
            let expect = q.powi(n as i32);
            assert!((h.value(&Point(vec![n, 0])) - expect).abs() < 1e-14);
        }
        assert!(renewal_residual(&f, &h, &u1_dir(), 30).unwrap() < 1e-12);
    }

    #[test]
    fn two_atom_path_counting() {
        let q = 0.5;
        let f = synthetic::two_atom(q);
        let h = renewal_solve(&f, &u1_dir(), 16).unwrap();
        // h(n u1 + j u2) = q^n binom(n, (n+j)/2) / 2^n
        let binom = |n: i64, k: i64| -> f64 {
            if k < 0 || k > n {
                return 0.0;
            }
            let mut b = 1.0;
            for i in 0..k {
                b = b * (n - i) as f64 / (i + 1) as f64;
            }
            b
        };
        for n in 1..=16i64 {
            for j in (-n..=n).step_by(2) {
                let expect = q.powi(n as i32) * binom(n, (n + j) / 2) / 2f64.powi(n as i32);
                let got = h.value(&Point(vec![n, j]));
                assert!(
                    (got - expect).abs() < 1e-13,
                    "n={} j={} got={} expect={}",
                    n,
                    j,
                    got,
                    expect
                );
            }
        }
    }

    #[test]
    fn series_equivalence_with_tail_bound() {
        let f = synthetic::three_atom(0.3, 0.1);
        let dir = u1_dir();
        let h = renewal_solve(&f, &dir, 10).unwrap();
        let series = series_sum(&f, 12, &Window::All).unwrap();
        let bound = series_tail_bound(&f, 12);
        for (x, e) in h.iter() {
            if dir.dot(x) <= 10 {
                assert!(
                    (e.value - series.value(x)).abs() <= bound + 1e-13,
                    "at {:?}: {} vs {}",
                    x.0,
                    e.value,
                    series.value(x)
                );
            }
        }
    }

    #[test]
    fn rejects_bad_direct_kernels() {
        let mut f = Kernel::new(2, KernelKind::Synthetic);
        f.insert(Point::zero(2), KernelEntry::exact(0.3)).unwrap();
        assert!(matches!(
            renewal_solve(&f, &u1_dir(), 5),
            Err(Error::KernelContract(_))
        ));
        let mut g = Kernel::new(2, KernelKind::Synthetic);
        g.insert(Point(vec![-1, 0]), KernelEntry::exact(0.3)).unwrap();
        assert!(renewal_solve(&g, &u1_dir(), 5).is_err());
    }

    #[test]
    fn generating_value_cases() {
        let f = synthetic::geometric(0.6);
        assert!((generating_value(&f, &[0.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
        // F(s) = q e^{s1}
        let v = generating_value(&f, &[0.3, 0.0]).unwrap();
        assert!((v - 0.6 * 0.3f64.exp()).abs() < 1e-14);
        assert!(matches!(generating_value(&f, &[800.0, 0.0]), Err(Error::Overflow)));
    }

    #[test]
    fn tilt_root_geometric_closed_form() {
        let q = 0.45;
        let f = synthetic::geometric(q);
        let s = solve_tilt_boundary(&f, &[1.0, 0.0]).unwrap();
        assert!((s.s[0] - (1.0 / q).ln()).abs() < 1e-12);
        assert!((generating_value(&f, &s.s).unwrap() - 1.0).abs() < 1e-10);
        // two-atom symmetric: root of q e^{s1} = 1 with s2 = 0
        let f2 = synthetic::two_atom(q);
        let s2 = solve_tilt_boundary(&f2, &[1.0, 0.0]).unwrap();
        assert!((s2.s[0] - (1.0 / q).ln()).abs() < 1e-12);
        assert_eq!(s2.s[1], 0.0);
    }

    #[test]
    fn tilt_root_errors() {
        let mut heavy = Kernel::new(2, KernelKind::Synthetic);
        heavy.insert(Point(vec![1, 0]), KernelEntry::exact(1.2)).unwrap();
        assert!(matches!(
            solve_tilt_boundary(&heavy, &[1.0, 0.0]),
            Err(Error::KernelMass { .. })
        ));
        let f = synthetic::geometric(0.5);
        assert!(matches!(
            solve_tilt_boundary(&f, &[-1.0, 0.0]),
            Err(Error::RayDoesNotCross)
        ));
    }

    #[test]
    fn moments_closed_forms() {
        let q = 0.5;
        // geometric at its tilt: mu = u1, cov = 0 (degenerate)
        let f = synthetic::geometric(q);
        let s = solve_tilt_boundary(&f, &[1.0, 0.0]).unwrap();
        let (mu, cov) = mean_cov(&f, &s.s).unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-12 && mu[1].abs() < 1e-12);
        assert!(cov.norm() < 1e-12);
        assert!(matches!(
            RenewalModel::from_kernel(f, u1_dir(), &[1.0, 0.0]),
            Err(Error::SingularCovariance)
        ));

        // two-atom: var(u2) = 1, var(u1) = 0: still singular
        let f2 = synthetic::two_atom(q);
        let s2 = solve_tilt_boundary(&f2, &[1.0, 0.0]).unwrap();
        let (mu2, cov2) = mean_cov(&f2, &s2.s).unwrap();
        assert!((mu2[0] - 1.0).abs() < 1e-12);
        assert!((cov2[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(cov2[(0, 0)].abs() < 1e-12);
        assert!(matches!(
            RenewalModel::from_kernel(f2, u1_dir(), &[1.0, 0.0]),
            Err(Error::SingularCovariance)
        ));

        // three-atom: full rank; closed-form moments from the two
        // layer weights w1 = q e^l, w2 = q2 e^{2l}
        let q2 = 0.1;
        let f3 = synthetic::three_atom(q, q2);
        let model = RenewalModel::from_kernel(f3, u1_dir(), &[1.0, 0.0]).unwrap();
        let l = model.s_star.s[0];
        let w1 = q * l.exp();
        let w2 = q2 * (2.0 * l).exp();
        assert!((w1 + w2 - 1.0).abs() < 1e-10);
        let mu1 = w1 + 2.0 * w2;
        assert!((model.mu[0] - mu1).abs() < 1e-10);
        assert!(model.mu[1].abs() < 1e-12);
        let var1 = w1 + 4.0 * w2 - mu1 * mu1;
        assert!((model.cov[(0, 0)] - var1).abs() < 1e-10);
        assert!((model.cov[(1, 1)] - w1).abs() < 1e-10);
        assert!(model.cov[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn fd_cross_check() {
        let f = synthetic::three_atom(0.5, 0.1);
        let s = solve_tilt_boundary(&f, &[1.0, 0.0]).unwrap();
        let (ge, he) = mean_cov_fd_check(&f, &s.s, 1e-5).unwrap();
        assert!(ge < 1e-6, "gradient deviation {}", ge);
        assert!(he < 1e-4, "hessian deviation {}", he);
    }

    #[test]
    fn tilted_distribution_contracts() {
        let f = synthetic::three_atom(0.5, 0.1);
        let s = solve_tilt_boundary(&f, &[1.0, 0.0]).unwrap();
        let t = TiltedDistribution::new(&f, &s.s).unwrap();
        assert!((t.q.total_mass() - 1.0).abs() < 1e-12);
        let cert = t.tail_certificate();
        assert!(cert.rate > 0.0);
        // off the surface the mass is not 1
        assert!(TiltedDistribution::new(&f, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn prefactor_algebra() {
        // isotropic covariance sigma^2 I with ||mu|| = 1:
        // Phi = sigma^{-(d-1)}
        for d in [2usize, 3] {
            let sigma = 0.7f64;
            let mu = DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 });
            let cov = DMatrix::from_diagonal_element(d, d, sigma * sigma);
            let phi = phi_prefactor_parts(&mu, &cov).unwrap();
            assert!((phi - sigma.powi(-(d as i32 - 1))).abs() < 1e-12);
            // scaling C -> 4C divides Phi by 2^{d-1}
            let phi4 = phi_prefactor_parts(&mu, &(cov * 4.0)).unwrap();
            assert!((phi4 - phi / 2f64.powi(d as i32 - 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn support_covolumes() {
        assert_eq!(support_covolume(&synthetic::three_atom(0.5, 0.1)).unwrap(), 2);
        assert_eq!(support_covolume(&synthetic::five_atom_d3(0.4, 0.1)).unwrap(), 2);
        assert_eq!(
            support_covolume(&synthetic::four_atom_aperiodic(0.2, 0.4, 0.1)).unwrap(),
            1
        );
        assert_eq!(
            support_covolume(&synthetic::six_atom_aperiodic_d3(0.2, 0.3, 0.1)).unwrap(),
            1
        );
        assert!(support_covolume(&synthetic::geometric(0.5)).is_err());
    }

    #[test]
    fn oz_prediction_close_to_solved_kernel() {
        // the three-atom kernel preserves parity, so the prediction
        // carries its covolume factor 2
        for (f, dim) in [
            (synthetic::three_atom(0.5, 0.1), 2usize),
            (synthetic::four_atom_aperiodic(0.2, 0.4, 0.08), 2),
        ] {
            let dir = Direction::axis(dim, 0);
            let model = RenewalModel::from_kernel(f.clone(), dir.clone(), &{
                let mut r = vec![0.0; dim];
                r[0] = 1.0;
                r
            })
            .unwrap();
            let n = 60u64;
            let (point, predicted) = oz_predict(&model, n).unwrap();
            let max_layer = dir.dot(&point) + 1;
            let h = renewal_solve(&f, &dir, max_layer).unwrap();
            let actual = h.value(&point);
            assert!(actual > 0.0);
            let rel = (predicted - actual).abs() / actual;
            assert!(rel < 0.05, "prediction {} actual {} rel {}", predicted, actual, rel);
        }
    }

    #[test]
    fn prediction_ratio_scaling() {
        // ratio between n and 2n follows the closed formula exactly
        let f = synthetic::three_atom(0.5, 0.1);
        let model = RenewalModel::from_kernel(f, u1_dir(), &[1.0, 0.0]).unwrap();
        let (p1, v1) = oz_predict(&model, 40).unwrap();
        let (p2, v2) = oz_predict(&model, 80).unwrap();
        let d = model.dim() as f64;
        let s = &model.s_star.s;
        let dot = |p: &Point| -> f64 { p.0.iter().zip(s).map(|(&a, b)| a as f64 * b).sum() };
        // v2/v1 = e^{-(dot2 - dot1)} * (40/80)^{(d-1)/2}
        let expect = (-(dot(&p2) - dot(&p1))).exp() * 0.5f64.powf((d - 1.0) / 2.0);
        assert!((v2 / v1 - expect).abs() < 1e-12);
    }

    #[test]
    fn mass_gap_synthetic() {
        let f = synthetic::three_atom(0.5, 0.1);
        let h = renewal_solve(&f, &u1_dir(), 12).unwrap();
        let rep = mass_gap_check(&f, &h).unwrap();
        assert_eq!(rep.pointwise_violations, 0);
        assert!(rep.defects.is_empty());
        // geometric: ratio is 1 at n = 1 (f = h there), and f has no
        // other support
        let fg = synthetic::geometric(0.6);
        let hg = renewal_solve(&fg, &u1_dir(), 12).unwrap();
        let repg = mass_gap_check(&fg, &hg).unwrap();
        assert_eq!(repg.pointwise_violations, 0);
        assert_eq!(repg.equal_points, 1);
    }

    #[test]
    fn k_window_concentration() {
        // mass of k outside the Gaussian window around n is tiny
        let f = synthetic::three_atom(0.5, 0.1);
        let model = RenewalModel::from_kernel(f.clone(), u1_dir(), &[1.0, 0.0]).unwrap();
        let n = 60u64;
        let (point, _) = oz_predict(&model, n).unwrap();
        let k_max = 120usize;
        let contributions =
            k_decomposition(&f, &model.s_star.s, &point, k_max).unwrap();
        let total: f64 = contributions.iter().sum();
        assert!(total > 0.0);
        // ballistic index: layer / mean layer advance
        let n_x = (u1_dir().dot(&point) as f64 / model.mu[0]).round() as i64;
        let alpha = 0.25;
        let window = (n_x as f64).powf(0.5 + alpha);
        let outside: f64 = contributions
            .iter()
            .enumerate()
            .filter(|(k, _)| ((*k as i64 - n_x).abs() as f64) >= window)
            .map(|(_, v)| v)
            .sum();
        assert!(outside / total < 1e-6, "outside fraction {}", outside / total);
    }
}
