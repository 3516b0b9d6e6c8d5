use flowlab::sequence::{angle, contraction_bound, random_sequence, random_system, sup_norm, RandomSystemSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_basis(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, k, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
}

fn distance_to(v: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    (v - basis * (basis.transpose() * v)).norm()
}

/// Minimum over the unit circle of a plane, by a fine grid and a local
/// golden-section polish.
fn circle_min(plane: &DMatrix<f64>, f: impl Fn(&DVector<f64>) -> f64) -> f64 {
    let point = |a: f64| plane.column(0) * a.cos() + plane.column(1) * a.sin();
    let n = 20_000;
    let h = std::f64::consts::PI / n as f64;
    let (mut best, mut at) = (f64::INFINITY, 0.0);
    for i in 0..n {
        let a = i as f64 * h;
        let v = f(&point(a));
        if v < best {
            best = v;
            at = a;
        }
    }
    let (mut lo, mut hi) = (at - h, at + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if f(&point(c)) < f(&point(d)) {
            hi = d;
        } else {
            lo = c;
        }
    }
    best.min(f(&point(0.5 * (lo + hi))))
}

#[test]
fn angle_matches_sphere_grid_minimization() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let plane = random_basis(&mut rng, 4, 2);
        let line = random_basis(&mut rng, 4, 1);
        let from_plane = circle_min(&plane, |u| distance_to(u, &line));
        let from_line = distance_to(&line.column(0).into_owned(), &plane);
        let oracle = from_plane.min(from_line);
        assert!((angle(&plane, &line).angle - oracle).abs() < 1e-4);
        assert!((angle(&line, &plane).angle - oracle).abs() < 1e-4);
    }
}

#[test]
fn inverse_solves_truncated_equations_up_to_200_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (k, half) in [1usize, 5, 30, 99].into_iter().enumerate() {
        let dim = rng.gen_range(2..=5);
        let spec = RandomSystemSpec {
            half_range: half,
            dim,
            dim_s: rng.gen_range(1..dim),
            eta: rng.gen_range(0.1..0.9),
            kappa: 0.5,
        };
        let sys = random_system(&spec, 100 + k as u64).unwrap();
        let z = random_sequence(&sys, 1.0, 7);
        let w = sys.inverse_l(&z);
        let lw = sys.apply_l(&w);
        let scale = sup_norm(&w);
        // equations at indices past the first, plus the stable inflow at the first
        for i in 1..sys.len() {
            assert!((&w[i] - &lw[i] - &z[i]).norm() <= 1e-10 * scale);
        }
        assert!((sys.split(0, &w[0]).0 - sys.split(0, &z[0]).0).norm() <= 1e-10 * scale);
    }
}

#[test]
fn inverse_norm_within_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seed in 0..30 {
        let dim = rng.gen_range(2..=4);
        let spec = RandomSystemSpec {
            half_range: rng.gen_range(2..10),
            dim,
            dim_s: rng.gen_range(1..dim),
            eta: rng.gen_range(0.1..0.8),
            kappa: 0.5,
        };
        let sys = random_system(&spec, seed).unwrap();
        let n = sys.len();
        let mut dense = DMatrix::zeros(n * dim, n * dim);
        for col in 0..n * dim {
            let mut z = vec![DVector::zeros(dim); n];
            z[col / dim][col % dim] = 1.0;
            for (i, wi) in sys.inverse_l(&z).iter().enumerate() {
                dense.view_mut((i * dim, col), (dim, 1)).copy_from(wi);
            }
        }
        let (eta, alpha, _) = sys.measured_constants();
        let bound = (1.0 + eta) / (alpha * (1.0 - eta));
        assert!(dense.singular_values().max() <= bound + 1e-6);
        assert!((contraction_bound(eta, alpha, 1.0) - bound).abs() < 1e-12 * bound);
    }
}
