//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers (run with `--nocapture` to see them).
//!
//! The heavy Monte Carlo campaign (criteria 7 and 8) is shared through a
//! `OnceLock` so the samples are drawn once.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use percoz::combinatorics::{phi_exact, staircase_bound, staircase_path, subadditivity_table};
use percoz::direction::Direction;
use percoz::exact::{enumerate_event, find_nonmonotone_witness, verify_estimator, ExactEvent};
use percoz::fitter::{convexity_check, curvature_check, oz_fit, DecaySeries, SeriesPoint,
    SeriesSource, TauSurface};
use percoz::kernel::KernelKind;
use percoz::lattice::{BoxGeometry, LatticeBox, Point};
use percoz::renewal::{generating_value, mean_cov_fd_check, oz_predict, phi_prefactor,
    renewal_residual, renewal_solve, renewal_solve_windowed, series_sum, series_tail_bound,
    solve_tilt_boundary, synthetic, RenewalModel, Window};
use percoz::sampler::{estimate_kernels, EmpiricalKernels, KernelEstimateSpec};

fn cube12() -> Arc<BoxGeometry> {
    BoxGeometry::new(LatticeBox::cube(3, 2).unwrap())
}

/// 1. Oracle equivalence on the 12-edge cube: Monte Carlo matches exact
/// enumeration within 4 sigma at p in {0.3, 0.5, 0.7} with 1e6 samples.
#[test]
fn acceptance_01_oracle_equivalence() {
    let started = std::time::Instant::now();
    let geom = cube12();
    let events = [
        ExactEvent::Connect { x: Point(vec![1, 1, 1]) },
        ExactEvent::FiniteTwoPoint { x: Point(vec![1, 0, 0]) },
    ];
    for event in &events {
        for (i, &p) in [0.3, 0.5, 0.7].iter().enumerate() {
            let rep =
                verify_estimator(&geom, event, p, 1_000_000, 1000 + i as u64, 4.0).unwrap();
            assert!(
                rep.pass,
                "{:?} at p={}: exact {} mc {} se {}",
                event, p, rep.exact, rep.mc.value, rep.mc.std_error
            );
        }
    }
    let dt = started.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {}s exceeds 1 minute", dt);
    println!("ACCEPTANCE 1 PASS: oracle equivalence on the 12-edge cube, 6 runs x 1e6 samples within 4 sigma ({:.1}s)", dt);
}

/// 2. Combinatorics: phi(u1)=10, psi(u1)=1, phi(2u1)=14 certified to
/// volume 8; staircase bound met with equality on axis displacements;
/// zero subadditivity violations over |x|, |y| <= 3.
#[test]
fn acceptance_02_combinatorics() {
    let started = std::time::Instant::now();
    const BUDGET: u64 = 2_000_000_000;
    let r1 = phi_exact(&Point(vec![1, 0, 0]), 8, BUDGET).unwrap();
    assert_eq!((r1.phi, r1.psi), (10, 1));
    assert!(r1.certified);
    let r2 = phi_exact(&Point(vec![2, 0, 0]), 8, BUDGET).unwrap();
    assert_eq!(r2.phi, 14);
    assert!(r2.certified);

    // staircase bound equality on axis displacements
    for n in 1..=3i64 {
        let x = Point(vec![n, 0, 0]);
        let path = staircase_path(&x);
        assert_eq!(path.edges.len() as i64, n);
        assert_eq!(path.boundary_size(), staircase_bound(3, n));
        let r = phi_exact(&x, (n + 5) as usize, BUDGET).unwrap();
        assert_eq!(r.phi, staircase_bound(3, n), "axis phi at n={}", n);
    }

    // all pairs with |x|, |y| <= 3 in d=3
    let mut points = Vec::new();
    for a in -3i64..=3 {
        for b in -3i64..=3 {
            for c in -3i64..=3 {
                let p = Point(vec![a, b, c]);
                if p.l1() >= 1 && p.l1() <= 3 {
                    points.push(p);
                }
            }
        }
    }
    let rep = subadditivity_table(&points, 8, BUDGET).unwrap();
    assert!(rep.violations.is_empty(), "violations: {:?}", rep.violations);
    assert!(rep.all_certified);
    let dt = started.elapsed().as_secs_f64();
    assert!(dt < 300.0, "runtime {}s exceeds 5 minutes", dt);
    println!(
        "ACCEPTANCE 2 PASS: phi(u1)=10 psi(u1)=1 phi(2u1)=14 certified; staircase equality on axes; {} subadditivity pairs, 0 violations ({:.1}s)",
        rep.checked_pairs, dt
    );
}

/// 3. Exact lower bound (zero tolerance): finite-volume finite-connection
/// probabilities dominate p^psi (1-p)^phi for x in {u1, 2u1} at
/// p = 0.1, ..., 0.9, compared in exact rational arithmetic. d = 2 keeps
/// the windows inside the 2^24 enumeration budget; the d >= 3 analogue
/// needs 75+ edges.
#[test]
fn acceptance_03_exact_lower_bound() {
    // phi/psi in d=2 from the oracle, certified
    let o1 = phi_exact(&Point(vec![1, 0]), 8, 2_000_000_000).unwrap();
    assert!(o1.certified);
    assert_eq!((o1.phi, o1.psi), (6, 1));
    let o2 = phi_exact(&Point(vec![2, 0]), 8, 2_000_000_000).unwrap();
    assert!(o2.certified);
    assert_eq!((o2.phi, o2.psi), (8, 2));

    let cases = [
        (Point(vec![1, 0]), LatticeBox::new(Point(vec![-1, -1]), Point(vec![2, 1])).unwrap(), o1),
        (Point(vec![2, 0]), LatticeBox::new(Point(vec![-1, -1]), Point(vec![3, 1])).unwrap(), o2),
    ];
    for (x, bbox, oracle) in cases {
        let geom = BoxGeometry::new(bbox);
        assert!(geom.edge_count() <= 24);
        let exact =
            enumerate_event(&geom, &ExactEvent::FiniteTwoPoint { x: x.clone() }).unwrap();
        for k in 1..=9u32 {
            let p = BigRational::new(BigInt::from(k), BigInt::from(10));
            let q = BigRational::one() - &p;
            let mut bound = BigRational::one();
            for _ in 0..oracle.psi {
                bound *= &p;
            }
            for _ in 0..oracle.phi {
                bound *= &q;
            }
            let value = exact.eval_rational(&p);
            assert!(
                value >= bound,
                "x={:?} p={}/10: exact {} < bound {}",
                x.0,
                k,
                value.to_f64().unwrap(),
                bound.to_f64().unwrap()
            );
        }
    }
    println!("ACCEPTANCE 3 PASS: exact finite-volume probabilities dominate p^psi (1-p)^phi for u1 and 2u1 at p=0.1..0.9, rational arithmetic, zero tolerance");
}

/// 4. Renewal identity: residual below 1e-12 on windows up to n=200 for
/// the geometric and three-atom kernels; series agreement within the
/// analytic tail bound.
#[test]
fn acceptance_04_renewal_identity() {
    let started = std::time::Instant::now();
    let dir = Direction::axis(2, 0);
    for (name, f) in [
        ("geometric", synthetic::geometric(0.6)),
        ("three-atom", synthetic::three_atom(0.5, 0.1)),
    ] {
        let h = renewal_solve(&f, &dir, 200).unwrap();
        let res = renewal_residual(&f, &h, &dir, 200).unwrap();
        assert!(res < 1e-12, "{}: residual {}", name, res);

        // brute-force series agreement within the geometric tail bound
        let k_terms = 40usize;
        let series = series_sum(&f, k_terms, &Window::Layers { dir: dir.clone(), max: 40 }).unwrap();
        let bound = series_tail_bound(&f, k_terms);
        for (x, e) in h.iter() {
            if dir.dot(x) <= 40 {
                let dev = (e.value - series.value(x)).abs();
                assert!(dev <= bound + 1e-13, "{} at {:?}: dev {} bound {}", name, x.0, dev, bound);
            }
        }
    }
    let dt = started.elapsed().as_secs_f64();
    println!("ACCEPTANCE 4 PASS: renewal residual < 1e-12 to n=200 (geometric, three-atom); series within analytic tail bound ({:.2}s)", dt);
}

/// 5. Tilt machinery: |F(s*) - 1| < 1e-10; gradient/Hessian against
/// finite differences within 1e-6 / 1e-4; polar relation within 2%.
#[test]
fn acceptance_05_tilt_machinery() {
    for (name, f, dim) in [
        ("three-atom d2", synthetic::three_atom(0.5, 0.1), 2usize),
        ("four-atom d2", synthetic::four_atom_aperiodic(0.2, 0.4, 0.08), 2),
        ("six-atom d3", synthetic::six_atom_aperiodic_d3(0.2, 0.3, 0.1), 3),
    ] {
        let mut ray = vec![0.0; dim];
        ray[0] = 1.0;
        let s = solve_tilt_boundary(&f, &ray).unwrap();
        let res = (generating_value(&f, &s.s).unwrap() - 1.0).abs();
        assert!(res < 1e-10, "{}: |F(s*)-1| = {}", name, res);
        let (ge, he) = mean_cov_fd_check(&f, &s.s, 1e-5).unwrap();
        assert!(ge < 1e-6, "{}: gradient fd deviation {}", name, ge);
        assert!(he < 1e-4, "{}: hessian fd deviation {}", name, he);

        // polar relation: tau fitted from the solved decay along the
        // drift direction matches <s*, mu-hat> within 2%. The drift of
        // these symmetric kernels is exactly axis-aligned, so the series
        // lives on exact lattice multiples of u1 (no rounding jitter).
        let dir = Direction::axis(dim, 0);
        let model = RenewalModel::from_kernel(f.clone(), dir.clone(), &ray).unwrap();
        for i in 1..dim {
            assert!(model.mu[i].abs() < 1e-12, "{}: drift not axis-aligned", name);
        }
        let series = axis_decay_series(&f, &dir, &model, dim);
        let fit = oz_fit(&series, dim).unwrap();
        // <s*, mu-hat> with mu-hat = u1
        let polar = model.s_star.s[0];
        let rel = (fit.tau - polar).abs() / polar;
        assert!(rel < 0.02, "{}: tau {} vs <s*,mu-hat> {} rel {}", name, fit.tau, polar, rel);
    }
    println!("ACCEPTANCE 5 PASS: |F(s*)-1| < 1e-10; grad/hess fd within 1e-6/1e-4; polar relation within 2% on three synthetic models");
}

/// Decay series h(m u1) for m spanning the renewal range n in [20, 120]
/// (in ballistic units), on exact lattice points of the drift axis.
fn axis_decay_series(
    f: &percoz::Kernel,
    dir: &Direction,
    model: &RenewalModel,
    dim: usize,
) -> DecaySeries {
    let m_lo = (20.0 * model.mu[0]).ceil() as i64;
    let m_hi = (120.0 * model.mu[0]).floor() as i64;
    let cap = (5.0 * (m_hi as f64).sqrt()).ceil() as i64 + 2 * model.truncation;
    let h = renewal_solve_windowed(f, dir, m_hi + 1, cap).unwrap();
    let step = ((m_hi - m_lo) / 24).max(1);
    let samples: Vec<SeriesPoint> = (m_lo..=m_hi)
        .step_by(step as usize)
        .filter_map(|m| {
            let mut coords = vec![0i64; dim];
            coords[0] = m;
            let v = h.value(&Point(coords));
            (v > 0.0).then_some(SeriesPoint { n: m, value: v, std_error: None })
        })
        .collect();
    let mut direction = vec![0.0; dim];
    direction[0] = 1.0;
    DecaySeries { direction, step_norm: 1.0, source: SeriesSource::RenewalSolve, samples }
}

/// 6. OZ reproduction on synthetic kernels: oz_fit on renewal_solve data
/// over n in [20, 120] recovers Phi within 5% of the closed form, and
/// residuals decrease with n. Run on aperiodic (covolume 1) full-rank
/// kernels in d=2 and d=3, where the closed form applies directly.
#[test]
fn acceptance_06_oz_reproduction() {
    let started = std::time::Instant::now();
    for (name, f, dim) in [
        ("four-atom d2", synthetic::four_atom_aperiodic(0.2, 0.4, 0.08), 2usize),
        ("six-atom d3", synthetic::six_atom_aperiodic_d3(0.2, 0.3, 0.1), 3),
    ] {
        let mut ray = vec![0.0; dim];
        ray[0] = 1.0;
        let dir = Direction::axis(dim, 0);
        let model = RenewalModel::from_kernel(f.clone(), dir.clone(), &ray).unwrap();
        assert_eq!(model.lattice_covolume, 1);
        let series = axis_decay_series(&f, &dir, &model, dim);
        assert!(series.samples.len() >= 15);
        let fit = oz_fit(&series, dim).unwrap();
        let closed = phi_prefactor(&model).unwrap();
        let rel = (fit.phi - closed).abs() / closed;
        assert!(rel < 0.05, "{}: fitted Phi {} closed {} rel {}", name, fit.phi, closed, rel);
        assert!(
            fit.residuals_decreasing,
            "{}: residual trend {:?}",
            name, fit.residual_trend
        );

        // the local-CLT point prediction agrees with the solver too
        let max_layer = dir.dot(&Point(
            model.mu.iter().map(|&c| (c * 100.0).floor() as i64).collect(),
        )) + 1;
        let cap = (5.0 * (max_layer as f64).sqrt()).ceil() as i64 + 2 * model.truncation;
        let h = renewal_solve_windowed(&f, &dir, max_layer, cap).unwrap();
        let (pt, pred) = oz_predict(&model, 100).unwrap();
        let actual = h.value(&pt);
        assert!(actual > 0.0 && (pred - actual).abs() / actual < 0.05);
    }
    let dt = started.elapsed().as_secs_f64();
    assert!(dt < 120.0, "runtime {}s exceeds 2 minutes", dt);
    println!("ACCEPTANCE 6 PASS: oz_fit recovers Phi within 5% of the closed form (d=2, d=3 aperiodic kernels); residuals decrease with n ({:.1}s)", dt);
}

// Shared campaign for criteria 7 and 8: d=3, p=0.35, t=u1, 24^3 box,
// 1e7 samples over the displacement slab {1..5} x {-3..3}^2.
struct Campaign {
    est: EmpiricalKernels,
}

static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();

fn campaign() -> &'static Campaign {
    CAMPAIGN.get_or_init(|| {
        let geom = BoxGeometry::new(
            LatticeBox::new(Point(vec![-11, -11, -11]), Point(vec![12, 12, 12])).unwrap(),
        );
        let mut displacements = Vec::new();
        for a in 1..=5i64 {
            for b in -3..=3i64 {
                for c in -3..=3i64 {
                    displacements.push(Point(vec![a, b, c]));
                }
            }
        }
        let spec = KernelEstimateSpec {
            geometry: geom,
            p: 0.35,
            t: Direction::axis(3, 0),
            displacements,
            margin: 1,
            n_samples: 10_000_000,
            seed: 20260810,
        };
        Campaign { est: estimate_kernels(&spec).unwrap() }
    })
}

/// 7. Percolation renewal consistency at moderate p: the empirical h
/// kernel agrees with the empirical convolution f*h within 3 sigma along
/// the axis up to n=5, and supermultiplicativity holds within 3 sigma.
#[test]
fn acceptance_07_percolation_renewal_consistency() {
    let started = std::time::Instant::now();
    let est = &campaign().est;
    let h = est.kernel(KernelKind::H);
    let f = est.kernel(KernelKind::F);

    // (f * h)(x) restricted to the estimated displacement slab; the
    // transverse truncation at |y| <= 3 contributes far below sigma at
    // p = 0.35
    let conv = percoz::renewal::convolve(f, h, &percoz::renewal::Window::All).unwrap();
    let n_samples = est.n_samples as f64;
    for n in 2..=5i64 {
        let x = Point(vec![n, 0, 0]);
        let hv = h.entry(&x).unwrap();
        let cv = conv.entry(&x).expect("convolution covers the axis");
        // score-type variance for the h counter: at a handful of hits
        // the Wald estimate v(1-v)/n degenerates, so the rate under the
        // null (h = f*h) is the better variance scale
        let v_null = hv.value.max(cv.value).min(1.0);
        let sigma_h = (v_null * (1.0 - v_null) / n_samples).sqrt();
        let sigma = (sigma_h.powi(2) + cv.std_error.unwrap_or(0.0).powi(2)).sqrt();
        let diff = (hv.value - cv.value).abs();
        assert!(
            diff <= 3.0 * sigma || (hv.value == 0.0 && cv.value == 0.0),
            "renewal mismatch at n={}: h {} vs f*h {} (3 sigma = {})",
            n,
            hv.value,
            cv.value,
            3.0 * sigma
        );
        println!(
            "  renh n={}: h={:.3e} f*h={:.3e} |diff|={:.2e} 3sigma={:.2e}",
            n, hv.value, cv.value, diff, 3.0 * sigma
        );
    }

    // supermultiplicativity h(a+b) >= h(a) h(b) - 3 sigma on axis splits
    for (a, b) in [(2i64, 2i64), (2, 3)] {
        let ha = h.entry(&Point(vec![a, 0, 0])).unwrap();
        let hb = h.entry(&Point(vec![b, 0, 0])).unwrap();
        let hab = h.entry(&Point(vec![a + b, 0, 0])).unwrap();
        let prod = ha.value * hb.value;
        let sigma = (hab.std_error.unwrap_or(0.0).powi(2)
            + (hb.value * ha.std_error.unwrap_or(0.0)).powi(2)
            + (ha.value * hb.std_error.unwrap_or(0.0)).powi(2))
        .sqrt();
        assert!(
            hab.value >= prod - 3.0 * sigma,
            "supermultiplicativity fails at {}+{}: {} < {} - 3*{}",
            a,
            b,
            hab.value,
            prod,
            sigma
        );
    }
    let dt = started.elapsed().as_secs_f64();
    println!("ACCEPTANCE 7 PASS: empirical h vs f*h within 3 sigma for n <= 5; supermultiplicativity within 3 sigma (campaign {:.0}s)", dt);
}

/// 8. Event algebra: zero implication violations across the 1e7-sample
/// campaign (every sampled configuration, every displacement).
#[test]
fn acceptance_08_event_algebra() {
    let est = &campaign().est;
    assert!(est.audit.samples >= 10_000_000);
    assert_eq!(
        est.audit.implication_violations, 0,
        "event implications violated {} times",
        est.audit.implication_violations
    );
    println!(
        "ACCEPTANCE 8 PASS: f=>h, f_bar=>h_bar, f_tilde=>h_tilde, g=>finite held on {} flag sets, 0 exceptions",
        est.audit.samples
    );
}

/// 9. Non-monotonicity exhibit: exact enumeration finds ordered
/// configuration pairs flipping the finite-connection event both ways.
#[test]
fn acceptance_09_nonmonotonicity() {
    let geom = BoxGeometry::new(LatticeBox::new(Point(vec![-1, -1]), Point(vec![2, 1])).unwrap());
    let event = ExactEvent::FiniteTwoPoint { x: Point(vec![1, 0]) };
    let w = find_nonmonotone_witness(&geom, &event)
        .unwrap()
        .expect("the finite connection event is non-monotone");
    assert_ne!(w.decreasing.low_mask, w.increasing.low_mask);
    println!(
        "ACCEPTANCE 9 PASS: non-monotone witnesses found (event drops when opening edge {} on {:#x}, rises when opening edge {} on {:#x})",
        w.decreasing.flipped_edge, w.decreasing.low_mask, w.increasing.flipped_edge, w.increasing.low_mask
    );
}

/// 10. Surface geometry: the tau-surface traced via tilt rays of the
/// d=3 synthetic kernel is convex (zero defects at 3 sigma) with
/// positive principal curvatures at 2 sigma; sphere and ellipsoid
/// calibrations recover known curvatures.
#[test]
fn acceptance_10_surface_geometry() {
    let f = synthetic::six_atom_aperiodic_d3(0.2, 0.3, 0.1);
    let dir = Direction::axis(3, 0);
    // trace the tilt surface on a ray fan around u1
    let mut s_points = Vec::new();
    let mut mu_points = Vec::new();
    let grid: Vec<f64> = (-3..=3).map(|i| i as f64 * 0.11).collect();
    for &a in &grid {
        for &b in &grid {
            let norm = (1.0 + a * a + b * b).sqrt();
            let ray = [1.0 / norm, a / norm, b / norm];
            let model = RenewalModel::from_kernel(f.clone(), dir.clone(), &ray).unwrap();
            s_points.push(model.s_star.s.clone());
            mu_points.push(model.mu.iter().cloned().collect::<Vec<f64>>());
        }
    }
    // tau as the support function of {F = 1}: tau(x) = max_j <s_j, x>,
    // exact at traced drift directions by the polar relation
    let support = |x: &[f64]| -> (f64, f64) {
        let mut vals: Vec<f64> = s_points
            .iter()
            .map(|s| s.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        vals.sort_by(|p, q| q.partial_cmp(p).unwrap());
        (vals[0], vals[0] - vals[1]) // value and discretization scale
    };
    let unit = |v: &[f64]| -> Vec<f64> {
        let n = (v.iter().map(|c| c * c).sum::<f64>()).sqrt();
        v.iter().map(|c| c / n).collect()
    };
    // surface directions: traced drifts plus all pairwise sums, so the
    // convexity check has exact matches
    let mut directions: Vec<Vec<f64>> = mu_points.iter().map(|m| unit(m)).collect();
    let base_len = directions.len();
    for i in 0..base_len {
        for j in i + 1..base_len {
            let sum: Vec<f64> =
                directions[i].iter().zip(&directions[j]).map(|(a, b)| a + b).collect();
            directions.push(unit(&sum));
        }
    }
    let mut tau = Vec::new();
    let mut tau_se = Vec::new();
    for d in &directions {
        let (v, gap) = support(d);
        tau.push(v);
        tau_se.push(gap.max(1e-12));
    }
    let surface = TauSurface { directions, tau, tau_se };
    surface.validate().unwrap();
    let rep = convexity_check(&surface, 1e-7).unwrap();
    assert!(rep.checked > 100, "only {} pairs checked", rep.checked);
    assert!(rep.defects.is_empty(), "convexity defects: {:?}", rep.defects);

    // curvature on the traced equi-decay patch
    let cloud: Vec<Vec<f64>> = mu_points
        .iter()
        .map(|m| {
            let u = unit(m);
            let (t, _) = support(&u);
            u.iter().map(|c| c / t).collect()
        })
        .collect();
    let est = curvature_check(&cloud, &[1.0, 0.0, 0.0], 24).unwrap();
    for (k, se) in est.principal.iter().zip(&est.principal_se) {
        assert!(
            k - 2.0 * se > 0.0,
            "principal curvature {} not positive at 2 sigma (se {})",
            k,
            se
        );
    }

    // calibration: unit sphere and (1,2,2) ellipsoid
    let mut sphere = Vec::new();
    let mut ellipsoid = Vec::new();
    for a in -6..=6 {
        for b in -6..=6 {
            let (u, v) = (a as f64 * 0.05, b as f64 * 0.05);
            sphere.push(vec![u, v, (1.0 - u * u - v * v).sqrt()]);
            ellipsoid.push(vec![(1.0 - (u * u + v * v) / 4.0).sqrt(), u, v]);
        }
    }
    let s_est = curvature_check(&sphere, &[0.0, 0.0, 1.0], 40).unwrap();
    for k in &s_est.principal {
        assert!((k - 1.0).abs() < 0.02, "sphere curvature {}", k);
    }
    let e_est = curvature_check(&ellipsoid, &[1.0, 0.0, 0.0], 48).unwrap();
    for k in &e_est.principal {
        assert!((k - 0.25).abs() < 0.01, "ellipsoid curvature {}", k);
    }
    assert!((e_est.gaussian - 1.0 / 16.0).abs() < 0.005);

    println!(
        "ACCEPTANCE 10 PASS: traced tau-surface convex ({} pairs, 0 defects at 3 sigma); principal curvatures positive at 2 sigma ({:?}); sphere/ellipsoid calibrations OK",
        rep.checked, est.principal
    );
}
