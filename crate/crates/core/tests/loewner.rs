use proptest::prelude::*;
use rand::Rng;
use sle4lab::lattice::{build_box_domain, build_rhombus_domain, TgDomain};
use sle4lab::loewner::{
    d_star, d_strong, extract_driving, halfplane_capacity, map_domain_to_h, sample_sle4_driving,
    solve_forward, trace_from_driving, DrivingFunction, HalfPlanePath, MapOptions,
};
use sle4lab::{rng, stats, Error, C64};

fn sqrt_h(z: C64) -> C64 {
    let s = z.sqrt();
    if s.im < 0.0 {
        -s
    } else {
        s
    }
}

#[test]
fn zero_driving_matches_closed_form_off_the_slit() {
    let w = DrivingFunction::constant(0.0, 1.0, 1e-3);
    for z in [
        C64::new(0.5, 0.5),
        C64::new(-1.0, 2.0),
        C64::new(0.1, 3.0),
        C64::new(2.0, 0.01),
    ] {
        let g = solve_forward(&w, z, 1.0).unwrap();
        assert!((g - sqrt_h(z * z + 4.0)).norm() < 1e-6, "{z}: {g}");
        assert_eq!(solve_forward(&w, z, 0.0).unwrap(), z);
    }
}

#[test]
fn point_on_the_slit_is_reported_swallowed() {
    let w = DrivingFunction::constant(0.0, 1.0, 1e-3);
    assert!(matches!(
        solve_forward(&w, C64::i(), 1.0),
        Err(Error::Swallowed { .. })
    ));
}

#[test]
fn hydrodynamic_expansion_at_large_z() {
    let w = DrivingFunction::constant(0.0, 1.0, 1e-3);
    let z = C64::new(0.0, 10.0);
    let g = solve_forward(&w, z, 1.0).unwrap();
    assert!((g - z - 2.0 / z).norm() <= 3e-3);
}

#[test]
fn slit_capacity_and_empty_path() {
    for l in [0.5, 1.0, 2.0] {
        let pts: Vec<C64> = (0..=50)
            .map(|k| C64::new(0.0, l * k as f64 / 50.0))
            .collect();
        let c = halfplane_capacity(&HalfPlanePath::new(pts)).unwrap();
        assert!((c - l * l / 4.0).abs() <= 1e-3 * l * l);
    }
    assert_eq!(
        halfplane_capacity(&HalfPlanePath::new(vec![])).unwrap(),
        0.0
    );
}

#[test]
fn sqrt_slit_extracts_to_zero_and_translates() {
    let pts: Vec<C64> = (0..=400)
        .map(|k| C64::new(0.0, 2.0 * (k as f64 / 400.0).sqrt()))
        .collect();
    let w = extract_driving(&HalfPlanePath::new(pts.clone()), 1e-3).unwrap();
    assert!(w.values().iter().all(|v| v.abs() <= 1e-3));
    let c = 0.7;
    let shifted: Vec<C64> = pts.iter().map(|p| p + c).collect();
    let ws = extract_driving(&HalfPlanePath::new(shifted), 1e-3).unwrap();
    assert_eq!(ws.len(), w.len());
    for (a, b) in ws.values().iter().zip(w.values()) {
        assert!((a - b - c).abs() < 1e-9);
    }
}

#[test]
fn constant_driving_traces_slit_above_constant() {
    let c = -1.3;
    let w = DrivingFunction::constant(c, 0.5, 1e-2);
    let p = trace_from_driving(&w, 2).unwrap();
    for (z, t) in p.points.iter().zip(p.capacity_times.as_ref().unwrap()) {
        assert!((z.re - c).abs() < 1e-9);
        assert!((z.im - 2.0 * t.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn sle4_traces_are_simple() {
    for seed in 0..5 {
        let w = sample_sle4_driving(1.0, 1e-3, seed).unwrap();
        let p = trace_from_driving(&w, 1).unwrap();
        assert!(p.points[1..].iter().all(|z| z.im > 0.0));
        p.check_simple().unwrap();
    }
}

#[test]
fn sle4_driving_variance_and_independence() {
    let n = 10_000;
    let runs: Vec<DrivingFunction> = (0..n)
        .map(|s| sample_sle4_driving(1.0, 1e-2, s).unwrap())
        .collect();
    assert!(runs.iter().all(|w| w.values()[0] == 0.0));
    let end: Vec<f64> = runs.iter().map(|w| w.eval(1.0)).collect();
    let sq: Vec<f64> = end.iter().map(|x| x * x).collect();
    let m = stats::mean_se(&sq);
    assert!((m.mean - 4.0).abs() < 3.0 * m.se, "{} ± {}", m.mean, m.se);
    let a: Vec<f64> = runs.iter().map(|w| w.eval(0.5)).collect();
    let b: Vec<f64> = runs.iter().map(|w| w.eval(1.0) - w.eval(0.5)).collect();
    assert!(stats::correlation(&a, &b).abs() < 3.0 / (n as f64).sqrt());
}

/// Walk on spheres until within `eps` of the boundary; returns the cycle
/// position of the nearest boundary point, in edge units.
fn exit_position(d: &TgDomain, mut z: C64, eps: f64, r: &mut impl Rng) -> f64 {
    let poly = d.boundary_polygon();
    let n = poly.len();
    loop {
        let rho = d.distance_to_boundary(z);
        if rho < eps {
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..n {
                let (a, b) = (poly[i], poly[(i + 1) % n]);
                let ab = b - a;
                let t = (((z - a) * ab.conj()).re / ab.norm_sqr()).clamp(0.0, 1.0);
                let dist = (a + ab * t - z).norm();
                if dist < best.0 {
                    best = (dist, i as f64 + t);
                }
            }
            return best.1;
        }
        let theta = r.random::<f64>() * std::f64::consts::TAU;
        z += C64::from_polar(rho, theta);
    }
}

#[test]
fn harmonic_measure_of_plus_arc_matches_argument() {
    let d = build_rhombus_domain(12, 0.5).unwrap();
    let map = map_domain_to_h(&d, &MapOptions::default()).unwrap();
    // the plus arc runs from x∂ (cycle position 0.5) to y∂ (split + 0.5)
    let (lo, hi) = (0.5, d.split() as f64 + 0.5);
    let mut r = rng::stream(2024, 0);
    let walks = 20_000;
    for z in [d.barycenter(), C64::new(3.0, 2.0), C64::new(12.0, 8.0)] {
        let hits = (0..walks)
            .filter(|_| (lo..hi).contains(&exit_position(&d, z, 1e-4, &mut r)))
            .count();
        let empirical = hits as f64 / walks as f64;
        let predicted = 1.0 - map.eval(z).arg() / std::f64::consts::PI;
        assert!(
            (empirical - predicted).abs() <= 2e-2,
            "{z}: {empirical} vs {predicted}"
        );
    }
}

#[test]
fn inverse_composes_to_identity() {
    let d = build_rhombus_domain(10, 0.5).unwrap();
    let map = map_domain_to_h(&d, &MapOptions::default()).unwrap();
    let mut r = rng::stream(7, 0);
    let mut probes = 0;
    while probes < 100 {
        let z = C64::new(r.random::<f64>() * 15.0, r.random::<f64>() * 8.66);
        if d.distance_to_boundary(z) < 0.3 || !d.contains(z) {
            continue;
        }
        let w = map.eval(z);
        assert!(w.im > 0.0);
        assert!((map.inverse(w) - z).norm() < 1e-6);
        probes += 1;
    }
}

#[test]
fn box_domain_boundary_images_increase() {
    let d = build_box_domain(4.0, 3.0, 0.5).unwrap();
    let map = map_domain_to_h(&d, &MapOptions::default()).unwrap();
    let total = d.boundary_cycle().len() * map.densify();
    let xs: Vec<f64> = (1..total).map(|j| map.boundary_image(j).unwrap()).collect();
    assert!(xs.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn d_star_reference_values() {
    assert!((d_star(Some(C64::new(0.0, 0.0)), None) - 2.0).abs() < 1e-15);
    let p = HalfPlanePath::new(vec![C64::new(0.0, 0.0), C64::i(), C64::new(1.0, 2.0)]);
    assert_eq!(d_strong(&p, &p).unwrap(), 0.0);
    let mut q = p.clone();
    q.points[2] = C64::new(1.5, 2.0);
    let eps = d_star(Some(p.points[2]), Some(q.points[2]));
    assert!((d_strong(&p, &q).unwrap() - eps).abs() < 1e-15);
}

fn upper(x: f64, y: f64) -> C64 {
    C64::new(x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d_star_is_a_bounded_metric(
        a in (-50f64..50.0, 0f64..50.0),
        b in (-50f64..50.0, 0f64..50.0),
        c in (-50f64..50.0, 0f64..50.0),
    ) {
        let (x, y, z) = (upper(a.0, a.1), upper(b.0, b.1), upper(c.0, c.1));
        prop_assert!((d_star(Some(x), Some(y)) - d_star(Some(y), Some(x))).abs() < 1e-15);
        prop_assert!(d_star(Some(x), Some(z)) <= d_star(Some(x), Some(y)) + d_star(Some(y), Some(z)) + 1e-12);
        prop_assert!(d_star(Some(x), None) <= 2.0 + 1e-12);
    }

    #[test]
    fn capacity_grows_along_the_path(seed in 0u64..10_000, cut in 0.1f64..0.9) {
        let w = sample_sle4_driving(0.2, 2e-3, seed).unwrap();
        let p = trace_from_driving(&w, 1).unwrap();
        let k = ((p.points.len() as f64) * cut) as usize;
        let prefix = HalfPlanePath::new(p.points[..k.max(2)].to_vec());
        let whole = HalfPlanePath::new(p.points.clone());
        prop_assert!(halfplane_capacity(&prefix).unwrap() <= halfplane_capacity(&whole).unwrap() + 1e-12);
    }

    #[test]
    fn extraction_is_translation_equivariant(seed in 0u64..10_000, c in -3f64..3.0) {
        let w = sample_sle4_driving(0.1, 1e-3, seed).unwrap();
        let p = trace_from_driving(&w, 2).unwrap();
        let a = extract_driving(&p, 1e-3).unwrap();
        let moved = HalfPlanePath::new(p.points.iter().map(|z| z + c).collect());
        let b = extract_driving(&moved, 1e-3).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((y - x - c).abs() < 1e-8);
        }
    }
}
