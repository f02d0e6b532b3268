use percoz::direction::Direction;
use percoz::lattice::{BoxGeometry, LatticeBox, Point};
use percoz::sampler::{estimate_kernels, KernelEstimateSpec};
use percoz::kernel::KernelKind;

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
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
        n_samples: n,
        seed: 20260810,
    };
    let t0 = std::time::Instant::now();
    let est = estimate_kernels(&spec).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("{} samples in {:.1}s ({:.1} us/sample)", n, dt, dt / n as f64 * 1e6);
    let h = est.kernel(KernelKind::H);
    for m in 1..=5i64 {
        let x = Point(vec![m, 0, 0]);
        let e = h.entry(&x).unwrap();
        println!("h({}u1) = {:.4e} +- {:.1e}", m, e.value, e.std_error.unwrap_or(0.0));
    }
    println!("two_point(u1) = {:.4e}", est.kernel(KernelKind::TwoPoint).value(&Point(vec![1,0,0])));
    println!("violations: {}", est.audit.implication_violations);
}
