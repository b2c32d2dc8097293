use nalgebra::DMatrix;
use proptest::prelude::*;
use sle4lab::field::{
    add_bump, dirichlet_form, discrete_green, disk_bump, harmonic_extension, project_fem,
    sample_dgff, Bump, Dgff, IdentityMap, PlaneMap, RestrictedSystem, SmoothFn,
};
use sle4lab::interface::trace_interface;
use sle4lab::lattice::{build_rhombus_domain, EndpointConvention, TgDomain, Triangle};
use sle4lab::localset::condition_on_set;
use sle4lab::{lambda_critical, stats, Result, C64};

/// Parallelogram `a ∈ [0, w], b ∈ [0, h]`, which has `(w−1)(h−1)` interior vertices.
fn strip(w: i32, h: i32) -> TgDomain {
    let mut tris = Vec::new();
    for b in 0..h {
        for a in 0..w {
            tris.push(Triangle { a, b, up: true });
            tris.push(Triangle { a, b, up: false });
        }
    }
    TgDomain::from_triangles(
        &tris,
        1.0,
        C64::new(0.0, 0.0),
        (0, 0),
        (w + h) as usize,
        EndpointConvention::Clockwise,
    )
    .unwrap()
}

/// Dense inverse of the interior block of the Laplacian, indexed by interior order.
fn dense_green(d: &TgDomain) -> (Vec<usize>, DMatrix<f64>) {
    let inner = d.interior_vertices();
    let full = dirichlet_form(d).dense();
    let m = DMatrix::from_fn(inner.len(), inner.len(), |i, j| full[(inner[i], inner[j])]);
    (
        inner,
        m.try_inverse().expect("interior block is invertible"),
    )
}

fn zero_boundary(d: &TgDomain) -> Vec<f64> {
    vec![0.0; d.boundary_cycle().len()]
}

#[test]
fn linear_function_energy_is_covered_area() {
    let d = build_rhombus_domain(2, 0.5).unwrap();
    let f: Vec<f64> = d.positions().iter().map(|z| z.re).collect();
    let area = 4.0 * 3f64.sqrt() / 2.0;
    assert!((dirichlet_form(&d).energy(&f) - area).abs() < 1e-12);
    assert!((d.area() - area).abs() < 1e-12);
}

#[test]
fn single_vertex_indicator_energy() {
    let d = build_rhombus_domain(2, 0.5).unwrap();
    let mut f = vec![0.0; d.num_vertices()];
    f[d.interior_vertices()[0]] = 1.0;
    assert!((dirichlet_form(&d).energy(&f) - 2.0 * 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn linear_boundary_data_extends_linearly() {
    let d = build_rhombus_domain(9, 0.5).unwrap();
    let bd: Vec<f64> = d
        .boundary_cycle()
        .iter()
        .map(|&v| d.position(v).re - 0.3 * d.position(v).im)
        .collect();
    let f = harmonic_extension(&d, &bd).unwrap();
    for v in d.interior_vertices() {
        let z = d.position(v);
        assert!((f.values[v] - (z.re - 0.3 * z.im)).abs() < 1e-10);
    }
}

#[test]
fn side_two_interior_value_is_neighbour_mean() {
    let d = build_rhombus_domain(2, 0.5).unwrap();
    let bd = d.arc_boundary_data(lambda_critical());
    let f = harmonic_extension(&d, &bd).unwrap();
    let v = d.interior_vertices()[0];
    let mean: f64 = d.neighbors(v).iter().map(|&u| f.values[u]).sum::<f64>() / 6.0;
    assert!((f.values[v] - mean).abs() < 1e-12);
}

#[test]
fn single_vertex_green_and_variance() {
    let d = build_rhombus_domain(2, 0.5).unwrap();
    let v = d.interior_vertices()[0];
    let exact = 3f64.sqrt() / 6.0;
    assert!((discrete_green(&d, v, v).unwrap() - exact).abs() < 1e-12);
    let dgff = Dgff::new(&d).unwrap();
    let bd = zero_boundary(&d);
    let xs: Vec<f64> = (0..100_000)
        .map(|s| dgff.sample(&d, &bd, s, 0).unwrap().values[v])
        .collect();
    let var = stats::variance(&xs);
    let se = stats::variance_se(&xs);
    assert!((var - exact).abs() < 3.0 * se, "{var} vs {exact} ± {se}");
}

#[test]
fn green_matches_dense_inverse_on_three_vertex_strip() {
    let d = strip(4, 2);
    assert_eq!(d.num_interior(), 3);
    let (inner, g) = dense_green(&d);
    for (i, &u) in inner.iter().enumerate() {
        for (j, &v) in inner.iter().enumerate() {
            let x = discrete_green(&d, u, v).unwrap();
            assert!((x - g[(i, j)]).abs() < 1e-12);
            assert!((x - discrete_green(&d, v, u).unwrap()).abs() < 1e-15);
        }
    }
}

#[test]
fn empirical_covariance_matches_green() {
    let d = build_rhombus_domain(4, 0.5).unwrap();
    assert!(d.num_interior() <= 12);
    let dgff = Dgff::new(&d).unwrap();
    let bd = zero_boundary(&d);
    let samples: Vec<Vec<f64>> = (0..100_000)
        .map(|s| dgff.sample(&d, &bd, s, 0).unwrap().values)
        .collect();
    let inner = d.interior_vertices();
    for &u in &inner {
        for &v in &inner {
            let prod: Vec<f64> = samples.iter().map(|x| x[u] * x[v]).collect();
            let m = stats::mean_se(&prod);
            let g = discrete_green(&d, u, v).unwrap();
            assert!(
                (m.mean - g).abs() < 4.0 * m.se,
                "({u},{v}): {} vs {g} ± {}",
                m.mean,
                m.se
            );
        }
    }
}

#[test]
fn markov_identity_by_schur_complement() {
    let d = build_rhombus_domain(6, 0.5).unwrap();
    let (inner, g) = dense_green(&d);
    let slot = |v: usize| inner.iter().position(|&w| w == v).unwrap();
    let a: Vec<usize> = vec![inner[3], inner[11], inner[17]];
    let rest: Vec<usize> = inner.iter().copied().filter(|v| !a.contains(v)).collect();
    let gaa = DMatrix::from_fn(a.len(), a.len(), |i, j| g[(slot(a[i]), slot(a[j]))]);
    let gaa_inv = gaa.try_inverse().unwrap();
    let mut fixed = vec![false; d.num_vertices()];
    a.iter().for_each(|&v| fixed[v] = true);
    let system = RestrictedSystem::for_domain(&d, &fixed).unwrap();
    let law = condition_on_set(&d, &zero_boundary(&d), &a, &[0.4, -1.0, 0.2]).unwrap();
    for &u in &rest {
        for &v in &rest {
            let gua = DMatrix::from_fn(1, a.len(), |_, j| g[(slot(u), slot(a[j]))]);
            let gav = DMatrix::from_fn(a.len(), 1, |i, _| g[(slot(a[i]), slot(v))]);
            let schur = g[(slot(u), slot(v))] - (gua * &gaa_inv * gav)[(0, 0)];
            assert!((system.green(u, v).unwrap() - schur).abs() < 1e-10);
            assert!((law.covariance(u, v) - schur).abs() < 1e-10);
        }
    }
}

#[test]
fn boundary_values_are_exact_and_seeds_reproduce() {
    let d = build_rhombus_domain(7, 0.5).unwrap();
    let bd = d.arc_boundary_data(lambda_critical());
    let f = sample_dgff(&d, &bd, 11).unwrap();
    for (i, &v) in d.boundary_cycle().iter().enumerate() {
        assert_eq!(f.values[v], bd[i]);
    }
    assert_eq!(f, sample_dgff(&d, &bd, 11).unwrap());
    assert_ne!(f.values, sample_dgff(&d, &bd, 12).unwrap().values);
}

#[test]
fn zero_bump_is_identity_and_bumps_cancel() {
    let d = build_rhombus_domain(8, 0.5).unwrap();
    let bd = d.arc_boundary_data(lambda_critical());
    let f = sample_dgff(&d, &bd, 5).unwrap();
    let zero = vec![0.0; d.num_vertices()];
    assert_eq!(add_bump(&d, &f, &zero).unwrap(), f);
    let psi = interior_disk(&d, d.barycenter(), 2.5, 0.7);
    let neg: Vec<f64> = psi.iter().map(|x| -x).collect();
    let back = add_bump(&d, &add_bump(&d, &f, &psi).unwrap(), &neg).unwrap();
    for (a, b) in back.values.iter().zip(&f.values) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn interior_disk(d: &TgDomain, c: C64, r: f64, height: f64) -> Vec<f64> {
    let mut psi = disk_bump(d, c, r, height);
    for &v in d.boundary_cycle() {
        psi[v] = 0.0;
    }
    psi
}

#[test]
fn negative_disk_bump_moves_interface_to_level() {
    let d = build_rhombus_domain(16, 0.5).unwrap();
    let bd = d.arc_boundary_data(lambda_critical());
    let level = 0.3;
    let (c, r) = (d.barycenter(), 5.0);
    let psi = interior_disk(&d, c, r, -level);
    let inside = |v: usize| (d.position(v) - c).norm() <= r && d.is_interior(v);
    let mut checked = 0;
    for seed in 0..20 {
        let f = sample_dgff(&d, &bd, seed).unwrap();
        let path = trace_interface(&d, &add_bump(&d, &f, &psi).unwrap()).unwrap();
        for &(l, rt) in &path.crossed {
            if inside(l) && inside(rt) {
                assert!(f.values[l] < level && f.values[rt] > level);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

/// Hat function of one vertex, affine on each triangle.
struct Hat<'a> {
    domain: &'a TgDomain,
    values: Vec<f64>,
    center: C64,
}

impl SmoothFn for Hat<'_> {
    fn value(&self, z: C64) -> f64 {
        self.domain.interpolate(&self.values, z).unwrap_or(0.0)
    }

    fn gradient(&self, z: C64) -> C64 {
        let h = 1e-7;
        let dx = self.value(z + h) - self.value(z - h);
        let dy = self.value(z + C64::new(0.0, h)) - self.value(z - C64::new(0.0, h));
        C64::new(dx, dy) / (2.0 * h)
    }

    fn support(&self) -> Option<(C64, f64)> {
        Some((self.center, 1.0 + 1e-9))
    }
}

#[test]
fn grid_function_is_projected_exactly() {
    let d = build_rhombus_domain(6, 0.5).unwrap();
    let v = d.vertex_at((2, 3)).unwrap();
    let mut values = vec![0.0; d.num_vertices()];
    values[v] = 1.0;
    let hat = Hat {
        domain: &d,
        values,
        center: d.position(v),
    };
    let p = project_fem(&hat, &d, &IdentityMap).unwrap();
    assert!(
        p.projection_error < 1e-6 * p.norm,
        "{} of {}",
        p.projection_error,
        p.norm
    );
    assert!(
        (p.norm - (2.0 * 3f64.sqrt()).sqrt()).abs() < 1e-5,
        "{}",
        p.norm
    );
    assert!((p.coefficients[v] - 1.0).abs() < 1e-6);
}

/// `z ↦ z / n`, taking the side-`n` rhombus onto the unit rhombus.
struct Shrink(f64);

impl PlaneMap for Shrink {
    fn eval_with_derivative(&self, z: C64) -> Result<(C64, C64)> {
        Ok((z / self.0, C64::new(1.0 / self.0, 0.0)))
    }
}

#[test]
fn nested_refinement_does_not_increase_error() {
    let bump = Bump {
        center: C64::new(0.75, 0.42),
        radius: 0.3,
        height: 1.0,
    };
    let errors: Vec<f64> = [4usize, 8, 16, 32]
        .iter()
        .map(|&n| {
            let d = build_rhombus_domain(n, 0.5).unwrap();
            project_fem(&bump, &d, &Shrink(n as f64))
                .unwrap()
                .projection_error
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{errors:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energy_is_quadratic_and_polarizes(n in 2usize..8, seed in any::<u64>()) {
        let d = build_rhombus_domain(n, 0.5).unwrap();
        let form = dirichlet_form(&d);
        let bd = zero_boundary(&d);
        let f = sample_dgff(&d, &bd, seed).unwrap().values;
        let g = sample_dgff(&d, &bd, seed ^ 1).unwrap().values;
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let lhs = form.energy(&sum);
        let rhs = form.energy(&f) + form.energy(&g) + 2.0 * form.inner(&f, &g);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        let shifted: Vec<f64> = f.iter().map(|x| x + 2.5).collect();
        prop_assert!((form.energy(&shifted) - form.energy(&f)).abs() < 1e-9 * (1.0 + form.energy(&f)));
    }

    #[test]
    fn harmonic_extension_obeys_maximum_principle(n in 2usize..10, split in 0.1f64..0.9, lam in 0.1f64..3.0) {
        let d = build_rhombus_domain(n, split).unwrap();
        let f = harmonic_extension(&d, &d.arc_boundary_data(lam)).unwrap();
        let form = dirichlet_form(&d);
        let lap = form.apply(&f.values);
        for v in d.interior_vertices() {
            prop_assert!(f.values[v].abs() <= lam + 1e-12);
            prop_assert!(lap[v].abs() < 1e-9);
        }
    }

    #[test]
    fn green_is_symmetric_and_positive(n in 3usize..8, i in 0usize..1000, j in 0usize..1000) {
        let d = build_rhombus_domain(n, 0.5).unwrap();
        let inner = d.interior_vertices();
        let (u, v) = (inner[i % inner.len()], inner[j % inner.len()]);
        let guv = discrete_green(&d, u, v).unwrap();
        prop_assert!((guv - discrete_green(&d, v, u).unwrap()).abs() < 1e-12);
        prop_assert!(guv > 0.0);
        prop_assert!(guv <= discrete_green(&d, u, u).unwrap() + 1e-12);
    }
}
