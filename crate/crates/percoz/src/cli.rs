//! Experiment orchestration: validated specs, run manifests,
//! deterministic JSON/CSV emission.
//!
//! Every output file embeds a manifest with the resolved spec, its hash,
//! the crate version and wall time. Outputs are byte-identical across
//! runs of the same spec except for the `timestamp` and `wall_time_s`
//! manifest fields, which are excluded from the determinism contract.
//! Exit codes: 0 success, 1 defect found in data, 2 usage error.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::direction::Direction;
use crate::error::{Error, Result};
use crate::exact::{enumerate_event, find_nonmonotone_witness, verify_estimator, ExactEvent};
use crate::fitter::{convexity_check, curvature_check, equidecay_surface, oz_fit, tau_fit,
    DecaySeries, TauSurface};
use crate::kernel::{Kernel, KernelJson, KernelKind};
use crate::lattice::{BoxGeometry, Edge, LatticeBox, Point};
use crate::renewal::{mass_gap_check, oz_predict, phi_prefactor, renewal_residual, renewal_solve,
    renewal_solve_windowed, series_sum, series_tail_bound, RenewalModel, Window};
use crate::sampler::{estimate_kernels, sample_config, surface_tail, KernelEstimateSpec,
    TailEstimate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DEFECT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// FNV-1a, used to fingerprint the resolved spec in manifests.
fn fnv1a(data: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn manifest(spec: &Value, wall_time_s: f64) -> Value {
    let spec_text = serde_json::to_string(spec).unwrap();
    json!({
        "tool": "percoz",
        "version": env!("CARGO_PKG_VERSION"),
        "spec": spec,
        "spec_hash": format!("{:016x}", fnv1a(spec_text.as_bytes())),
        "wall_time_s": wall_time_s,
        "timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

fn write_output(path: Option<&Path>, doc: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match path {
        Some(p) => {
            std::fs::write(p, text.as_bytes())?;
        }
        None => {
            println!("{}", text);
        }
    }
    Ok(())
}

pub fn parse_vec_i64(s: &str) -> Result<Vec<i64>> {
    s.split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| Error::Invalid(format!("bad integer '{}': {}", t, e))))
        .collect()
}

pub fn parse_vec_f64(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Invalid(format!("bad number '{}': {}", t, e))))
        .collect()
}

fn direction_from_arg(s: &str) -> Result<Direction> {
    let parts = parse_vec_f64(s)?;
    if parts.iter().all(|c| (c - c.round()).abs() < 1e-12) {
        Direction::from_integer(parts.iter().map(|&c| c.round() as i64).collect())
    } else {
        let norm = parts.iter().map(|c| c * c).sum::<f64>().sqrt();
        Direction::from_unit(parts.iter().map(|&c| c / norm).collect())
    }
}

/// Validated experiment description shared by the sampling subcommands.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSpec {
    pub dim: usize,
    pub p: f64,
    pub t: Vec<f64>,
    pub box_radius: i64,
    pub margin: i64,
    pub samples: u64,
    pub seed: u64,
    pub displacements: Vec<Vec<i64>>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.dim < 2 {
            errs.push(format!("dim: must be >= 2, got {}", self.dim));
        }
        if !(0.0..=1.0).contains(&self.p) {
            errs.push(format!("p: must lie in [0, 1], got {}", self.p));
        }
        if self.t.len() != self.dim {
            errs.push(format!("t: expected {} coordinates, got {}", self.dim, self.t.len()));
        }
        if self.box_radius < 1 {
            errs.push(format!("box: radius must be >= 1, got {}", self.box_radius));
        }
        if self.margin < 0 {
            errs.push(format!("margin: must be >= 0, got {}", self.margin));
        }
        if self.samples == 0 {
            errs.push("samples: must be positive".into());
        }
        if self.displacements.is_empty() {
            errs.push("displacements: at least one required".into());
        }
        for x in &self.displacements {
            if x.len() != self.dim {
                errs.push(format!("displacement {:?}: expected {} coordinates", x, self.dim));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// `percoz sample`: draw one configuration and write its documented
/// binary serialization.
#[allow(clippy::too_many_arguments)]
pub fn run_sample(
    dim: usize,
    box_radius: i64,
    p: f64,
    seed: u64,
    stream: u64,
    out: &Path,
) -> Result<i32> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(vec![format!("p: must lie in [0, 1], got {}", p)]));
    }
    let geom = BoxGeometry::new(LatticeBox::centered(dim, box_radius)?);
    let cfg = sample_config(geom, p, seed, stream)?;
    std::fs::write(out, cfg.to_bytes())?;
    eprintln!(
        "wrote {} ({} edges, {} open)",
        out.display(),
        cfg.geometry().edge_count(),
        cfg.open_count()
    );
    Ok(EXIT_OK)
}

/// `percoz estimate`: empirical event kernels over a displacement set.
pub fn run_estimate(
    spec: &ExperimentSpec,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> Result<i32> {
    spec.validate()?;
    let started = std::time::Instant::now();
    let t = if spec.t.iter().all(|c| (c - c.round()).abs() < 1e-12) {
        Direction::from_integer(spec.t.iter().map(|&c| c.round() as i64).collect())?
    } else {
        let norm = spec.t.iter().map(|c| c * c).sum::<f64>().sqrt();
        Direction::from_unit(spec.t.iter().map(|&c| c / norm).collect())?
    };
    let geom = BoxGeometry::new(LatticeBox::centered(spec.dim, spec.box_radius)?);
    let est = estimate_kernels(&KernelEstimateSpec {
        geometry: geom,
        p: spec.p,
        t,
        displacements: spec.displacements.iter().map(|c| Point(c.clone())).collect(),
        margin: spec.margin,
        n_samples: spec.samples,
        seed: spec.seed,
    })?;

    let mut records = Vec::new();
    for (kind, kernel) in &est.kernels {
        for (x, e) in kernel.iter() {
            records.push(json!({
                "kind": kind.as_str(),
                "x": x.0,
                "value": e.value,
                "std_error": e.std_error,
                "n": est.n_samples,
            }));
        }
    }
    let spec_json = serde_json::to_value(spec)?;
    let doc = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "audit": est.audit,
        "records": records,
    });
    write_output(out, &doc)?;
    if let Some(csv_path) = csv {
        let mut f = std::fs::File::create(csv_path)?;
        writeln!(f, "kind,{},value,std_error,n", csv_coords(spec.dim))?;
        for (kind, kernel) in &est.kernels {
            for (x, e) in kernel.iter() {
                let coords: Vec<String> = x.0.iter().map(|c| c.to_string()).collect();
                writeln!(
                    f,
                    "{},{},{},{},{}",
                    kind.as_str(),
                    coords.join(","),
                    e.value,
                    e.std_error.unwrap_or(0.0),
                    est.n_samples
                )?;
            }
        }
        let gp = csv_path.with_extension("gp");
        std::fs::write(
            &gp,
            format!(
                "# gnuplot script for {}\nset logscale y\nset xlabel 'x1'\nset ylabel 'kernel value'\nplot '{}' using 2:($1 eq 'h' ? ${}: 1/0) with points title 'h'\n",
                csv_path.display(),
                csv_path.display(),
                spec.dim + 2
            ),
        )?;
    }
    let code = if est.audit.implication_violations > 0 { EXIT_DEFECT } else { EXIT_OK };
    Ok(code)
}

fn csv_coords(dim: usize) -> String {
    (1..=dim).map(|i| format!("x{}", i)).collect::<Vec<_>>().join(",")
}

/// `percoz exact`: exhaustive enumeration of an event on a tiny box.
#[allow(clippy::too_many_arguments)]
pub fn run_exact(
    dim: usize,
    box_spec: &str,
    event_name: &str,
    x: Option<&str>,
    t: Option<&str>,
    p: f64,
    find_nonmonotone: bool,
    mc_check: Option<(u64, u64, f64)>,
    out: Option<&Path>,
) -> Result<i32> {
    let started = std::time::Instant::now();
    let sides = parse_vec_i64(box_spec)?;
    if sides.len() != dim {
        return Err(Error::Validation(vec![format!(
            "box: expected {} side lengths, got {}",
            dim,
            sides.len()
        )]));
    }
    let lo = Point(vec![0; dim]);
    let hi = Point(sides.iter().map(|&s| s - 1).collect());
    let geom = BoxGeometry::new(LatticeBox::new(lo, hi)?);
    let xp = x.map(parse_vec_i64).transpose()?.map(Point);
    let event = match event_name {
        "tautology" => ExactEvent::Tautology,
        "edge-open" => {
            let xp = xp.ok_or_else(|| Error::Validation(vec!["--x required".into()]))?;
            ExactEvent::EdgeOpen(Edge { base: xp, axis: 0 })
        }
        "connect" => {
            let xp = xp.ok_or_else(|| Error::Validation(vec!["--x required".into()]))?;
            ExactEvent::Connect { x: xp }
        }
        "finite-two-point" => {
            let xp = xp.ok_or_else(|| Error::Validation(vec!["--x required".into()]))?;
            ExactEvent::FiniteTwoPoint { x: xp }
        }
        kind @ ("h" | "f" | "g" | "h_bar" | "f_bar" | "h_tilde" | "f_tilde") => {
            let xp = xp.ok_or_else(|| Error::Validation(vec!["--x required".into()]))?;
            let t = t.ok_or_else(|| Error::Validation(vec!["--t required".into()]))?;
            let kind = match kind {
                "h" => KernelKind::H,
                "f" => KernelKind::F,
                "g" => KernelKind::G,
                "h_bar" => KernelKind::HBar,
                "f_bar" => KernelKind::FBar,
                "h_tilde" => KernelKind::HTilde,
                _ => KernelKind::FTilde,
            };
            ExactEvent::Classified { x: xp, t: direction_from_arg(t)?, kind }
        }
        other => {
            return Err(Error::Validation(vec![format!("unknown event '{}'", other)]));
        }
    };
    let result = enumerate_event(&geom, &event)?;
    let mut doc = json!({
        "event": result.event,
        "edge_count": result.edge_count,
        "counts_by_open_edges": result.counts,
        "probability_at_p": result.eval_f64(p),
        "p": p,
    });
    if find_nonmonotone {
        let witness = find_nonmonotone_witness(&geom, &event)?;
        doc["nonmonotone_witness"] = serde_json::to_value(&witness)?;
        doc["nonmonotone"] = json!(witness.is_some());
    }
    if let Some((n_samples, seed, tol)) = mc_check {
        let rep = verify_estimator(&geom, &event, p, n_samples, seed, tol)?;
        let pass = rep.pass;
        doc["mc_check"] = serde_json::to_value(&rep)?;
        if !pass {
            let spec_json = json!({"dim": dim, "box": sides, "event": event_name, "p": p});
            let full = json!({
                "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
                "result": doc,
            });
            write_output(out, &full)?;
            return Ok(EXIT_DEFECT);
        }
    }
    let spec_json = json!({"dim": dim, "box": sides, "event": event_name, "p": p});
    let full = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "result": doc,
    });
    write_output(out, &full)?;
    Ok(EXIT_OK)
}

/// `percoz oracle phi`: exact minimal-surface quantities.
pub fn run_oracle_phi(
    dim: usize,
    x: &str,
    max_volume: usize,
    budget: u64,
    out: Option<&Path>,
) -> Result<i32> {
    let started = std::time::Instant::now();
    let coords = parse_vec_i64(x)?;
    if coords.len() != dim {
        return Err(Error::Validation(vec![format!(
            "x: expected {} coordinates, got {}",
            dim,
            coords.len()
        )]));
    }
    let r = crate::combinatorics::phi_exact(&Point(coords.clone()), max_volume, budget)?;
    let spec_json = json!({"dim": dim, "x": coords, "max_volume": max_volume, "budget": budget});
    let doc = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "phi": r.phi,
        "psi": r.psi,
        "upsilon": r.upsilon,
        "certified": r.certified,
        "volumes_scanned": r.volumes_scanned,
    });
    write_output(out, &doc)?;
    Ok(EXIT_OK)
}

/// `percoz oracle subadditivity`: the pairwise table over an L1 ball.
pub fn run_oracle_subadditivity(
    dim: usize,
    radius: i64,
    max_volume: usize,
    budget: u64,
    out: Option<&Path>,
) -> Result<i32> {
    let started = std::time::Instant::now();
    let mut points = Vec::new();
    let mut v = vec![-radius; dim];
    loop {
        let p = Point(v.clone());
        if p.l1() <= radius && p.0.iter().any(|&c| c != 0) {
            points.push(p);
        }
        let mut k = 0;
        while k < dim {
            v[k] += 1;
            if v[k] <= radius {
                break;
            }
            v[k] = -radius;
            k += 1;
        }
        if k == dim {
            break;
        }
    }
    let rep = crate::combinatorics::subadditivity_table(&points, max_volume, budget)?;
    let ok = rep.violations.is_empty();
    let spec_json = json!({"dim": dim, "radius": radius, "max_volume": max_volume});
    let doc = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "checked_pairs": rep.checked_pairs,
        "violations": rep.violations,
        "all_certified": rep.all_certified,
    });
    write_output(out, &doc)?;
    Ok(if ok { EXIT_OK } else { EXIT_DEFECT })
}

/// `percoz renewal-check`: solve h = delta + f*h for a kernel file and
/// report residual, series agreement and the mass-gap diagnostics.
pub fn run_renewal_check(
    f_path: &Path,
    window: i64,
    t: Option<&str>,
    out: Option<&Path>,
) -> Result<i32> {
    let started = std::time::Instant::now();
    let text = std::fs::read_to_string(f_path)?;
    let kj: KernelJson = serde_json::from_str(&text)?;
    let f = Kernel::from_json(&kj)?;
    let dir = match t {
        Some(s) => direction_from_arg(s)?,
        None => Direction::axis(f.dim(), 0),
    };
    let h = renewal_solve(&f, &dir, window)?;
    let residual = renewal_residual(&f, &h, &dir, window)?;
    let k_terms = (window as usize).min(64);
    let series = series_sum(&f, k_terms, &Window::Layers { dir: dir.clone(), max: window })?;
    let tail = series_tail_bound(&f, k_terms);
    let mut series_dev: f64 = 0.0;
    for (x, e) in h.iter() {
        series_dev = series_dev.max((e.value - series.value(x)).abs());
    }
    let gap = mass_gap_check(&f, &h)?;
    let defect = residual > 1e-12 || !gap.defects.is_empty() || gap.pointwise_violations > 0;
    let spec_json = json!({"f": f_path.display().to_string(), "window": window});
    let doc = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "residual_max": residual,
        "series_terms": k_terms,
        "series_tail_bound": tail,
        "series_max_deviation": series_dev,
        "mass_gap": gap,
        "h_entries": h.len(),
    });
    write_output(out, &doc)?;
    Ok(if defect { EXIT_DEFECT } else { EXIT_OK })
}

/// `percoz synthetic-oz`: full pipeline on a synthetic kernel spec
/// `{dim, atoms: [{x, weight}], ray?}`.
pub fn run_synthetic_oz(spec_path: &Path, n_list: &str, out: Option<&Path>) -> Result<i32> {
    let started = std::time::Instant::now();
    #[derive(serde::Deserialize)]
    struct Atom {
        x: Vec<i64>,
        weight: f64,
    }
    #[derive(serde::Deserialize)]
    struct ModelSpec {
        dim: usize,
        atoms: Vec<Atom>,
        #[serde(default)]
        ray: Option<Vec<f64>>,
    }
    let text = std::fs::read_to_string(spec_path)?;
    let ms: ModelSpec = serde_json::from_str(&text)?;
    let mut f = Kernel::new(ms.dim, KernelKind::F);
    for a in &ms.atoms {
        f.insert(Point(a.x.clone()), crate::kernel::KernelEntry::exact(a.weight))?;
    }
    let ray = ms.ray.clone().unwrap_or_else(|| {
        let mut r = vec![0.0; ms.dim];
        r[0] = 1.0;
        r
    });
    let dir = Direction::axis(ms.dim, 0);
    let model = RenewalModel::from_kernel(f.clone(), dir.clone(), &ray)?;
    let ns = parse_vec_i64(n_list)?;
    let n_max = *ns.iter().max().unwrap_or(&40);
    let axis_drift = (1..ms.dim).all(|i| model.mu[i].abs() < 1e-12);
    let mu_layer = dir.dot(&Point(
        model.mu.iter().map(|&c| (c * n_max as f64).floor() as i64).collect(),
    ));
    // transverse cap well past the Gaussian spread of the tilted walk
    let cap = ((5.0 * (mu_layer as f64).sqrt()).ceil() as i64 + 2 * model.truncation).max(10);
    let h = renewal_solve_windowed(&f, &dir, mu_layer + 1, cap)?;
    // for an axis-aligned drift the series lives on exact lattice
    // points, avoiding floor-rounding jitter in the fitted prefactor
    let samples: Vec<crate::fitter::SeriesPoint> = if axis_drift {
        let m_lo = (*ns.iter().min().unwrap() as f64 * model.mu[0]).ceil() as i64;
        let m_hi = (n_max as f64 * model.mu[0]).floor() as i64;
        let step = ((m_hi - m_lo) / (ns.len() as i64 * 2).max(8)).max(1);
        (m_lo..=m_hi)
            .step_by(step as usize)
            .filter_map(|m| {
                let mut coords = vec![0i64; ms.dim];
                coords[0] = m;
                let v = h.value(&Point(coords));
                (v > 0.0).then_some(crate::fitter::SeriesPoint { n: m, value: v, std_error: None })
            })
            .collect()
    } else {
        ns.iter()
            .filter_map(|&n| {
                let pt =
                    Point(model.mu.iter().map(|&c| (c * n as f64).floor() as i64).collect());
                let v = h.value(&pt);
                (v > 0.0).then_some(crate::fitter::SeriesPoint { n, value: v, std_error: None })
            })
            .collect()
    };
    let mut direction = vec![0.0; ms.dim];
    if axis_drift {
        direction[0] = 1.0;
    } else {
        direction.copy_from_slice(model.mu.as_slice());
    }
    let series = DecaySeries {
        direction,
        step_norm: if axis_drift { 1.0 } else { model.mu.norm() },
        source: crate::fitter::SeriesSource::RenewalSolve,
        samples,
    };
    let fit = oz_fit(&series, ms.dim)?;
    let closed_phi = phi_prefactor(&model)?;
    let (pt, pred) = oz_predict(&model, n_max as u64)?;
    let spec_json = json!({"model": spec_path.display().to_string(), "n_list": ns});
    let doc = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "s_star": model.s_star.s,
        "mu": model.mu.iter().cloned().collect::<Vec<f64>>(),
        "tau_of_mu": model.tau_of_mu(),
        "tau": fit.tau,
        "tau_se": fit.tau_se,
        "Phi": fit.phi,
        "Phi_se": fit.phi_se,
        "Phi_closed_form": closed_phi,
        "lattice_covolume": model.lattice_covolume,
        "Phi_closed_form_times_covolume": closed_phi * model.lattice_covolume as f64,
        "residuals": fit.residuals,
        "residuals_decreasing": fit.residuals_decreasing,
        "oz_predict_at_n_max": {"point": pt.0, "value": pred},
    });
    write_output(out, &doc)?;
    Ok(EXIT_OK)
}

/// `percoz oz-fit`: fit a decay series file.
pub fn run_oz_fit(series_path: &Path, dim: usize, out: Option<&Path>) -> Result<i32> {
    let started = std::time::Instant::now();
    let text = std::fs::read_to_string(series_path)?;
    let series: DecaySeries = serde_json::from_str(&text)?;
    let naive = tau_fit(&series)?;
    let oz = oz_fit(&series, dim)?;
    // disagreement beyond joint error bars is itself a diagnostic
    let disagreement = (naive.tau - oz.tau).abs();
    let joint = (naive.tau_se.powi(2) + oz.tau_se.powi(2)).sqrt();
    let spec_json = json!({"series": series_path.display().to_string(), "dim": dim});
    let doc = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "tau_naive": naive.tau,
        "tau_naive_se": naive.tau_se,
        "tau": oz.tau,
        "tau_se": oz.tau_se,
        "Phi": oz.phi,
        "Phi_se": oz.phi_se,
        "residuals": oz.residuals,
        "residuals_decreasing": oz.residuals_decreasing,
        "model_mismatch": oz.model_mismatch,
        "naive_vs_oz_disagreement": disagreement,
        "naive_vs_oz_joint_se": joint,
    });
    write_output(out, &doc)?;
    Ok(EXIT_OK)
}

/// `percoz surface`: equi-decay surface checks from a tau file.
pub fn run_surface(tau_path: &Path, checks: &str, out: Option<&Path>) -> Result<i32> {
    let started = std::time::Instant::now();
    let text = std::fs::read_to_string(tau_path)?;
    let surface: TauSurface = serde_json::from_str(&text)?;
    surface.validate()?;
    let mut doc = json!({
        "directions": surface.directions.len(),
    });
    let mut defect = false;
    for check in checks.split(',') {
        match check.trim() {
            "convexity" => {
                let rep = convexity_check(&surface, 0.35)?;
                defect |= !rep.defects.is_empty();
                doc["convexity"] = serde_json::to_value(&rep)?;
            }
            "curvature" => {
                let cloud = equidecay_surface(&surface)?;
                let mut estimates = Vec::new();
                for dir in surface.directions.iter().take(8) {
                    match curvature_check(&cloud, dir, 24) {
                        Ok(est) => {
                            defect |= est.principal.iter().any(|&k| k <= 0.0);
                            estimates.push(serde_json::to_value(&est)?);
                        }
                        Err(Error::InsufficientPoints { .. })
                        | Err(Error::InsufficientAngularResolution) => {}
                        Err(e) => return Err(e),
                    }
                }
                doc["curvature"] = Value::Array(estimates);
            }
            "polar" => {
                let rep = crate::fitter::polar_support_roundtrip(&surface)?;
                doc["polar_roundtrip"] = serde_json::to_value(&rep)?;
            }
            other => {
                return Err(Error::Validation(vec![format!("unknown check '{}'", other)]));
            }
        }
    }
    let spec_json = json!({"tau": tau_path.display().to_string(), "checks": checks});
    let full = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "result": doc,
    });
    write_output(out, &full)?;
    Ok(if defect { EXIT_DEFECT } else { EXIT_OK })
}

/// `percoz surface-tail`: the conditional large-boundary tail estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_surface_tail(
    dim: usize,
    x: &str,
    delta: f64,
    p: f64,
    box_radius: i64,
    samples: u64,
    seed: u64,
    max_volume: usize,
    out: Option<&Path>,
) -> Result<i32> {
    let started = std::time::Instant::now();
    let coords = parse_vec_i64(x)?;
    let xp = Point(coords.clone());
    let oracle = crate::combinatorics::phi_exact(&xp, max_volume, 500_000_000)?;
    if !oracle.certified {
        return Err(Error::Invalid(
            "phi oracle not certified at this max_volume; raise --max-volume".into(),
        ));
    }
    let geom = BoxGeometry::new(LatticeBox::centered(dim, box_radius)?);
    let est = surface_tail(geom, &xp, delta, p, oracle.phi, samples, seed, 1)?;
    let spec_json = json!({
        "dim": dim, "x": coords, "delta": delta, "p": p,
        "box_radius": box_radius, "samples": samples, "seed": seed,
    });
    let doc = json!({
        "manifest": manifest(&spec_json, started.elapsed().as_secs_f64()),
        "phi": oracle.phi,
        "estimate": est,
    });
    write_output(out, &doc)?;
    match est {
        TailEstimate::Estimate { .. } => Ok(EXIT_OK),
        TailEstimate::InsufficientStatistics { .. } => Ok(EXIT_OK),
    }
}

/// Build a geometry for a centered box. Shared by the binary.
pub fn centered_geometry(dim: usize, radius: i64) -> Result<Arc<BoxGeometry>> {
    Ok(BoxGeometry::new(LatticeBox::centered(dim, radius)?))
}
