//! Extraction of the inverse correlation length from decay data,
//! OZ-form fitting, equi-decay surface construction, and convexity and
//! curvature checks on fitted surfaces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary / weighted least squares for `y = a + b x`.
#[derive(Clone, Debug)]
pub struct FitLine {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
    pub residuals: Vec<f64>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<FitLine> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::InsufficientPoints { have: n, need: 2 });
    }
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let sx: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum();
    let sy: f64 = ys.iter().zip(&w).map(|(y, w)| y * w).sum();
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| x * x * w).sum();
    let sxy: f64 = xs.iter().zip(ys).zip(&w).map(|((x, y), w)| x * y * w).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(Error::Invalid("degenerate abscissas in linear fit".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let residuals: Vec<f64> =
        xs.iter().zip(ys).map(|(x, y)| y - intercept - slope * x).collect();
    // covariance scale: with explicit weights 1/sigma^2 the parameter
    // covariance is (X' W X)^-1; unweighted, scale by the residual
    // variance estimate
    let scale = if weights.is_some() {
        1.0
    } else if n > 2 {
        let ssr: f64 = residuals.iter().zip(&w).map(|(r, w)| r * r * w).sum();
        ssr / (n as f64 - 2.0)
    } else {
        0.0
    };
    let slope_se = (scale * sw / det).sqrt();
    let intercept_se = (scale * sxx / det).sqrt();
    Ok(FitLine { intercept, slope, intercept_se, slope_se, residuals })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesSource {
    MonteCarlo,
    RenewalSolve,
    ExactEnumeration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub n: i64,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_error: Option<f64>,
}

/// Decay data along a fixed direction: values of a connectivity function
/// at `floor(n * direction)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecaySeries {
    pub direction: Vec<f64>,
    /// norm of the per-step displacement, used by the OZ power
    /// correction (1 for unit directions, `||mu||` for ballistic steps)
    pub step_norm: f64,
    pub source: SeriesSource,
    pub samples: Vec<SeriesPoint>,
}

impl DecaySeries {
    pub fn validate(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if w[1].n <= w[0].n {
                return Err(Error::Invalid("series n must be strictly increasing".into()));
            }
        }
        if !(self.step_norm > 0.0) {
            return Err(Error::Invalid("step_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TauFit {
    pub tau: f64,
    pub tau_se: f64,
    pub intercept: f64,
    pub dropped_points: usize,
}

/// Weighted linear regression of `-log value` against `n`; the slope is
/// the inverse correlation length, the intercept absorbs prefactor and
/// power corrections. Nonpositive values are dropped with a count.
pub fn tau_fit(series: &DecaySeries) -> Result<TauFit> {
    series.validate()?;
    let usable: Vec<&SeriesPoint> =
        series.samples.iter().filter(|s| s.value > 0.0).collect();
    let dropped = series.samples.len() - usable.len();
    if usable.len() < 4 {
        return Err(Error::InsufficientPoints { have: usable.len(), need: 4 });
    }
    let xs: Vec<f64> = usable.iter().map(|s| s.n as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|s| -s.value.ln()).collect();
    let all_weighted = usable.iter().all(|s| s.std_error.map_or(false, |e| e > 0.0));
    let ws: Option<Vec<f64>> = all_weighted.then(|| {
        usable
            .iter()
            .map(|s| {
                let sigma_log = s.std_error.unwrap() / s.value;
                1.0 / (sigma_log * sigma_log)
            })
            .collect()
    });
    let fit = linear_fit(&xs, &ys, ws.as_deref())?;
    Ok(TauFit { tau: fit.slope, tau_se: fit.slope_se, intercept: fit.intercept, dropped_points: dropped })
}

#[derive(Clone, Debug, Serialize)]
pub struct OzFit {
    pub tau: f64,
    pub tau_se: f64,
    pub log_phi: f64,
    pub phi: f64,
    pub phi_se: f64,
    pub residuals: Vec<f64>,
    pub residual_rms: f64,
    /// mean |residual| on the first and second halves of the range;
    /// decreasing residuals support the OZ form
    pub residual_trend: (f64, f64),
    pub residuals_decreasing: bool,
    /// set when the residual shape correlates with log n, the signature
    /// of a missing or spurious power correction
    pub model_mismatch: bool,
}

/// Weighted least squares of
/// `log value = log Phi - ((d-1)/2) log(2 pi n step) - tau n`.
pub fn oz_fit(series: &DecaySeries, dim: usize) -> Result<OzFit> {
    series.validate()?;
    let usable: Vec<&SeriesPoint> =
        series.samples.iter().filter(|s| s.value > 0.0).collect();
    if usable.len() < 4 {
        return Err(Error::InsufficientPoints { have: usable.len(), need: 4 });
    }
    let power = (dim as f64 - 1.0) / 2.0;
    let xs: Vec<f64> = usable.iter().map(|s| s.n as f64).collect();
    // y' = log v + power * log(2 pi n step) = log Phi - tau n
    let ys: Vec<f64> = usable
        .iter()
        .map(|s| {
            s.value.ln()
                + power * (2.0 * std::f64::consts::PI * s.n as f64 * series.step_norm).ln()
        })
        .collect();
    let all_weighted = usable.iter().all(|s| s.std_error.map_or(false, |e| e > 0.0));
    let ws: Option<Vec<f64>> = all_weighted.then(|| {
        usable
            .iter()
            .map(|s| {
                let sigma_log = s.std_error.unwrap() / s.value;
                1.0 / (sigma_log * sigma_log)
            })
            .collect()
    });
    let fit = linear_fit(&xs, &ys, ws.as_deref())?;
    let tau = -fit.slope;
    let log_phi = fit.intercept;
    let phi = log_phi.exp();
    let residuals = fit.residuals.clone();
    let m = residuals.len();
    let first: f64 =
        residuals[..m / 2].iter().map(|r| r.abs()).sum::<f64>() / (m / 2) as f64;
    let second: f64 = residuals[m / 2..].iter().map(|r| r.abs()).sum::<f64>()
        / (m - m / 2) as f64;
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / m as f64).sqrt();
    // correlate residuals with the part of log n orthogonal to the
    // fitted design {1, n}: a strong correlation is the signature of a
    // wrong power correction
    let lognn: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let lfit = linear_fit(&xs, &lognn, None)?;
    let ltilde = lfit.residuals;
    let mut num = 0.0;
    let mut den_l = 0.0;
    let mut den_r = 0.0;
    for i in 0..m {
        num += ltilde[i] * residuals[i];
        den_l += ltilde[i] * ltilde[i];
        den_r += residuals[i] * residuals[i];
    }
    let corr = if den_l > 0.0 && den_r > 0.0 { num / (den_l * den_r).sqrt() } else { 0.0 };
    Ok(OzFit {
        tau,
        tau_se: fit.slope_se,
        log_phi,
        phi,
        phi_se: phi * fit.intercept_se,
        residuals,
        residual_rms: rms,
        residual_trend: (first, second),
        residuals_decreasing: second <= first,
        model_mismatch: corr.abs() > 0.8 && rms > 1e-10,
    })
}

/// Direction-indexed inverse-correlation-length surface.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TauSurface {
    pub directions: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    #[serde(default)]
    pub tau_se: Vec<f64>,
}

impl TauSurface {
    pub fn validate(&self) -> Result<()> {
        if self.directions.len() != self.tau.len() {
            return Err(Error::Invalid("directions/tau length mismatch".into()));
        }
        if self.tau.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::Invalid("tau must be positive and finite".into()));
        }
        let min = self.tau.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.tau.iter().cloned().fold(0.0, f64::max);
        // equivalent-norm sanity
        if max / min > 100.0 {
            return Err(Error::Invalid(format!(
                "tau anisotropy {} exceeds the equivalent-norm sanity factor 100",
                max / min
            )));
        }
        Ok(())
    }

    pub fn se(&self, i: usize) -> f64 {
        self.tau_se.get(i).copied().unwrap_or(0.0)
    }
}

/// Boundary points `x_hat / tau(x_hat)` of the equi-decay set
/// `{tau <= 1}` (homogeneity extends tau to rays).
pub fn equidecay_surface(surface: &TauSurface) -> Result<Vec<Vec<f64>>> {
    surface.validate()?;
    Ok(surface
        .directions
        .iter()
        .zip(&surface.tau)
        .map(|(d, &t)| d.iter().map(|&c| c / t).collect())
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityViolation {
    pub i: usize,
    pub j: usize,
    pub sum_index: usize,
    pub margin: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub checked: usize,
    pub skipped: usize,
    /// pairs violating subadditivity beyond 3 sigma
    pub defects: Vec<ConvexityViolation>,
    /// pairs with margin within 3 sigma of zero (degenerate directions)
    pub equalities: usize,
    pub min_margin: f64,
}

/// Subadditivity check `tau(x + y) <= tau(x) + tau(y)` over all
/// direction pairs whose normalized sum matches a sampled direction
/// within `angle_tol`. Violations beyond 3 sigma are defects.
pub fn convexity_check(surface: &TauSurface, angle_tol: f64) -> Result<ConvexityReport> {
    surface.validate()?;
    let dirs = &surface.directions;
    let n = dirs.len();
    let norm = |v: &[f64]| (v.iter().map(|c| c * c).sum::<f64>()).sqrt();
    let mut checked = 0;
    let mut skipped = 0;
    let mut defects = Vec::new();
    let mut equalities = 0;
    let mut min_margin = f64::INFINITY;
    let max_tau = surface.tau.iter().cloned().fold(0.0, f64::max);
    for i in 0..n {
        for j in i + 1..n {
            let sum: Vec<f64> =
                dirs[i].iter().zip(&dirs[j]).map(|(a, b)| a + b).collect();
            let sn = norm(&sum);
            if sn < 1e-9 {
                skipped += 1; // antipodal pair: x + y = 0
                continue;
            }
            let unit: Vec<f64> = sum.iter().map(|c| c / sn).collect();
            // nearest sampled direction
            let mut best = usize::MAX;
            let mut best_dist = f64::INFINITY;
            for (k, d) in dirs.iter().enumerate() {
                let dist = d
                    .iter()
                    .zip(&unit)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist < best_dist {
                    best_dist = dist;
                    best = k;
                }
            }
            if best_dist > angle_tol {
                skipped += 1;
                continue;
            }
            checked += 1;
            // tau(x + y) = |x + y| tau(unit) up to the angular mismatch,
            // bounded by a Lipschitz slack 2 max(tau) * mismatch
            let lhs = sn * surface.tau[best];
            let rhs = surface.tau[i] + surface.tau[j];
            let slack = 2.0 * max_tau * best_dist;
            let sigma = (surface.se(i).powi(2)
                + surface.se(j).powi(2)
                + (sn * surface.se(best)).powi(2))
            .sqrt();
            let margin = rhs - lhs;
            min_margin = min_margin.min(margin);
            if margin < -(3.0 * sigma + slack) {
                defects.push(ConvexityViolation { i, j, sum_index: best, margin, sigma });
            } else if margin.abs() <= 3.0 * sigma + slack {
                equalities += 1;
            }
        }
    }
    Ok(ConvexityReport { checked, skipped, defects, equalities, min_margin })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureEstimate {
    pub base: Vec<f64>,
    pub principal: Vec<f64>,
    pub principal_se: Vec<f64>,
    pub gaussian: f64,
    pub neighbors: usize,
}

/// Principal curvatures at the surface point nearest to `direction`, by
/// a least-squares quadratic fit of the neighbouring cloud in the
/// tangent frame (inward normal, so a convex surface has positive
/// curvatures).
pub fn curvature_check(
    points: &[Vec<f64>],
    direction: &[f64],
    max_neighbors: usize,
) -> Result<CurvatureEstimate> {
    let d = direction.len();
    if points.is_empty() || points[0].len() != d {
        return Err(Error::Invalid("empty cloud or dimension mismatch".into()));
    }
    let need = d * (d + 1) / 2 + d + 1;
    // base point: cloud point most aligned with the requested direction
    let norm = |v: &[f64]| (v.iter().map(|c| c * c).sum::<f64>()).sqrt();
    let dn = norm(direction);
    let mut base_idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let cos = p.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() / (norm(p) * dn);
        if cos > best {
            best = cos;
            base_idx = i;
        }
    }
    let base = &points[base_idx];
    // neighbors by distance from the base point
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != base_idx)
        .map(|(i, p)| {
            let dist = p.iter().zip(base).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            (dist, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let take = order.len().min(max_neighbors);
    if take < need {
        return Err(Error::InsufficientPoints { have: take, need });
    }

    // frame: inward normal (towards the origin), tangent basis by
    // Gram-Schmidt over the coordinate axes
    let bn = norm(base);
    let normal: Vec<f64> = base.iter().map(|c| -c / bn).collect();
    let mut tangent: Vec<Vec<f64>> = Vec::new();
    for axis in 0..d {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        let dotn: f64 = v.iter().zip(&normal).map(|(a, b)| a * b).sum();
        for k in 0..d {
            v[k] -= dotn * normal[k];
        }
        for t in &tangent {
            let dott: f64 = v.iter().zip(t).map(|(a, b)| a * b).sum();
            for k in 0..d {
                v[k] -= dott * t[k];
            }
        }
        let vn = norm(&v);
        if vn > 1e-9 {
            let v: Vec<f64> = v.iter().map(|c| c / vn).collect();
            tangent.push(v);
            if tangent.len() == d - 1 {
                break;
            }
        }
    }
    if tangent.len() != d - 1 {
        return Err(Error::InsufficientAngularResolution);
    }

    let m = d - 1;
    let n_params = 1 + m + m * (m + 1) / 2;
    let rows = take;
    let mut design = DMatrix::zeros(rows, n_params);
    let mut height = DVector::zeros(rows);
    for (r, &(_, idx)) in order[..take].iter().enumerate() {
        let off: Vec<f64> = points[idx].iter().zip(base).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = tangent
            .iter()
            .map(|t| off.iter().zip(t).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let z: f64 = off.iter().zip(&normal).map(|(a, b)| a * b).sum();
        let mut c = 0;
        design[(r, c)] = 1.0;
        c += 1;
        for i in 0..m {
            design[(r, c)] = y[i];
            c += 1;
        }
        for i in 0..m {
            for j in i..m {
                design[(r, c)] = if i == j { 0.5 * y[i] * y[i] } else { y[i] * y[j] };
                c += 1;
            }
        }
        height[r] = z;
    }
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &height;
    let chol = xtx.clone().cholesky().ok_or(Error::InsufficientAngularResolution)?;
    let params = chol.solve(&xty);
    // residual variance -> parameter covariance (diagonal)
    let fitted = &design * &params;
    let ssr: f64 = (&height - &fitted).iter().map(|r| r * r).sum();
    let dof = (rows as f64 - n_params as f64).max(1.0);
    let sigma2 = ssr / dof;
    let xtx_inv = chol.inverse();

    // gradient and Hessian of the height function at the base
    let mut grad = DVector::zeros(m);
    for i in 0..m {
        grad[i] = params[1 + i];
    }
    let mut hess = DMatrix::zeros(m, m);
    let mut hess_var = DMatrix::zeros(m, m);
    let mut c = 1 + m;
    for i in 0..m {
        for j in i..m {
            hess[(i, j)] = params[c];
            hess[(j, i)] = params[c];
            hess_var[(i, j)] = sigma2 * xtx_inv[(c, c)];
            hess_var[(j, i)] = hess_var[(i, j)];
            c += 1;
        }
    }
    // shape operator eigenvalues: B = L^-1 (H / sqrt(1+|g|^2)) L^-T with
    // first fundamental form I = Id + g g^T = L L^T
    let g2 = grad.dot(&grad);
    let eye = DMatrix::identity(m, m);
    let first_form = &eye + &grad * grad.transpose();
    let l = first_form.cholesky().ok_or(Error::InsufficientAngularResolution)?;
    let ii = hess.clone() / (1.0 + g2).sqrt();
    // L^-1 II L^-T via two triangular solves
    let li = l.l().try_inverse().ok_or(Error::InsufficientAngularResolution)?;
    let b = &li * ii * li.transpose();
    let sym = nalgebra::SymmetricEigen::new(b);
    let mut principal: Vec<f64> = sym.eigenvalues.iter().cloned().collect();
    principal.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // first-order eigenvalue error: dominated by the Hessian entry
    // uncertainties
    let entry_se = hess_var.iter().cloned().fold(0.0f64, f64::max).sqrt();
    let principal_se = vec![entry_se / (1.0 + g2).sqrt(); m];
    let gaussian = principal.iter().product();
    Ok(CurvatureEstimate {
        base: base.clone(),
        principal,
        principal_se,
        gaussian,
        neighbors: take,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualDirections {
    /// grid directions whose scaled version touches the polar body where
    /// it meets the supporting hyperplane of x_hat
    pub matches: Vec<Vec<f64>>,
    pub representative: Option<Vec<f64>>,
    pub widen_tolerance: bool,
}

/// Directions `s_hat` with `<s, x_hat> = phibar(x_hat)` where `s` is the
/// boundary point of the polar body `W = {s : <s, d> <= phibar(d)}`
/// along `s_hat`. Used to choose the slab direction for sampler runs.
pub fn dual_directions(
    x_hat: &[f64],
    table: &[(Vec<f64>, f64)],
    tol: f64,
) -> Result<DualDirections> {
    let target = table
        .iter()
        .find(|(d, _)| {
            d.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-9
        })
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Invalid("x_hat must be one of the table directions".into()))?;
    let mut matches = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (cand, _) in table {
        // boundary scale along this ray
        let mut lambda = f64::INFINITY;
        for (d, phibar) in table {
            let dot: f64 = cand.iter().zip(d).map(|(a, b)| a * b).sum();
            if dot > 1e-12 {
                lambda = lambda.min(phibar / dot);
            }
        }
        if !lambda.is_finite() {
            continue;
        }
        let support: f64 = cand.iter().zip(x_hat).map(|(a, b)| a * b).sum::<f64>() * lambda;
        if support >= target * (1.0 - tol) {
            let cos: f64 = cand.iter().zip(x_hat).map(|(a, b)| a * b).sum();
            if best.as_ref().map_or(true, |(c, _)| cos > *c) {
                best = Some((cos, cand.clone()));
            }
            matches.push(cand.clone());
        }
    }
    let widen = matches.is_empty();
    Ok(DualDirections { matches, representative: best.map(|(_, v)| v), widen_tolerance: widen })
}

#[derive(Clone, Debug, Serialize)]
pub struct PolarRoundtrip {
    pub max_relative_deviation: f64,
    pub vertices: usize,
}

/// Build the polar body `K = {s : <s, d_i> <= tau_i}` from the fitted
/// surface, enumerate its vertices, and re-derive the support values
/// `max_{s in K} <s, d_i>`; on convex inputs they reproduce tau within
/// discretization error.
pub fn polar_support_roundtrip(surface: &TauSurface) -> Result<PolarRoundtrip> {
    surface.validate()?;
    let d = surface.directions[0].len();
    if d > 3 {
        return Err(Error::Invalid("polar vertex enumeration supports d <= 3".into()));
    }
    let n = surface.directions.len();
    let mut vertices: Vec<DVector<f64>> = Vec::new();
    let idxs: Vec<usize> = (0..n).collect();
    let mut combo = vec![0usize; d];
    fn combos(idxs: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..idxs.len() {
            cur.push(idxs[i]);
            combos(idxs, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    combo.clear();
    combos(&idxs, d, 0, &mut combo, &mut all);
    for sel in all {
        let a = DMatrix::from_fn(d, d, |r, c| surface.directions[sel[r]][c]);
        let b = DVector::from_fn(d, |r, _| surface.tau[sel[r]]);
        let Some(lu) = a.lu().solve(&b) else { continue };
        // feasibility
        let feasible = (0..n).all(|i| {
            let dot: f64 =
                surface.directions[i].iter().zip(lu.iter()).map(|(a, b)| a * b).sum();
            dot <= surface.tau[i] + 1e-9
        });
        if feasible {
            vertices.push(lu);
        }
    }
    if vertices.is_empty() {
        return Err(Error::Invalid("polar body has no vertices (degenerate surface)".into()));
    }
    let mut worst: f64 = 0.0;
    for (i, dir) in surface.directions.iter().enumerate() {
        let support = vertices
            .iter()
            .map(|v| dir.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((support - surface.tau[i]).abs() / surface.tau[i]);
    }
    Ok(PolarRoundtrip { max_relative_deviation: worst, vertices: vertices.len() })
}
