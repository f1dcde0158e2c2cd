use brwlab_core::cap_discrete::{CubeExitLaw, CubeExitTables};
use brwlab_core::{Dim, Site};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Harmonic measure from the centre by a dense solve of the killed walk.
fn dense_exit_law(d: usize, l: i32) -> HashMap<Site, f64> {
    let side = (2 * l + 1) as usize;
    let n = side.pow(d as u32);
    let site = |mut k: usize| {
        let mut c = [0i32; 5];
        for item in c.iter_mut().take(d) {
            *item = (k % side) as i32 - l;
            k /= side;
        }
        Site(c)
    };
    let index = |s: &Site| -> Option<usize> {
        let mut k = 0;
        for a in (0..d).rev() {
            if s.0[a].abs() > l {
                return None;
            }
            k = k * side + (s.0[a] + l) as usize;
        }
        Some(k)
    };
    let p = 1.0 / (2 * d) as f64;
    let mut m = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        let s = site(i);
        for a in 0..d {
            for dz in [-1, 1] {
                if let Some(j) = index(&s.add(Site::axis(a, dz))) {
                    m[(i, j)] -= p;
                }
            }
        }
    }
    let mut rhs = DVector::zeros(n);
    rhs[index(&Site::ORIGIN).unwrap()] = 1.0;
    // G_Q is symmetric, so the row solve gives G_Q(0, .)
    let g = m.lu().solve(&rhs).unwrap();
    let mut law = HashMap::new();
    for i in 0..n {
        let s = site(i);
        for a in 0..d {
            for dz in [-1, 1] {
                let z = s.add(Site::axis(a, dz));
                if index(&z).is_none() {
                    *law.entry(z).or_insert(0.0) += g[i] * p;
                }
            }
        }
    }
    law
}

#[test]
fn spectral_law_matches_dense_solve() {
    for (d, l) in [(3, 1), (3, 2), (3, 4), (4, 1), (4, 2), (5, 1)] {
        let dim = Dim::new(d).unwrap();
        let law = CubeExitLaw::new(dim, l as u32);
        let dense = dense_exit_law(d, l);
        let total: f64 = dense.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((law.total_mass() - 1.0).abs() < 1e-12, "d={d} L={l}");
        for (z, p) in &dense {
            let q = law.probability(dim, *z);
            assert!((p - q).abs() < 1e-13, "d={d} L={l} z={z:?}: {p} vs {q}");
        }
    }
}

#[test]
fn tabulated_laws_are_normalised() {
    for dim in Dim::all() {
        let tables = CubeExitTables::shared(dim);
        for law in tables.laws() {
            assert!((law.total_mass() - 1.0).abs() < 1e-10, "{dim} L={}", law.half_width());
        }
        assert!(tables.for_distance(2).is_none());
        assert_eq!(tables.for_distance(3).unwrap().half_width(), 1);
        assert_eq!(tables.for_distance(12).unwrap().half_width(), 10);
        let far = tables.for_distance(100_000).unwrap().half_width();
        assert_eq!(far, tables.laws().last().unwrap().half_width());
    }
}

#[test]
fn samples_land_on_the_cube_boundary_with_the_right_frequencies() {
    let dim = Dim::D3;
    let law = CubeExitLaw::new(dim, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reps = 200_000;
    let mut faces = 0usize;
    let mut corner = 0usize;
    let target = Site::from_slice(&[3, 2, -2]);
    for _ in 0..reps {
        let z = law.sample(3, &mut rng);
        assert_eq!(z.sup_norm(), 3);
        if z == Site::from_slice(&[3, 0, 0]) {
            faces += 1;
        }
        if z == target {
            corner += 1;
        }
    }
    for (count, z) in [(faces, Site::from_slice(&[3, 0, 0])), (corner, target)] {
        let p = law.probability(dim, z);
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        let f = count as f64 / reps as f64;
        assert!((f - p).abs() < 4.0 * se, "{z:?}: {f} vs {p}");
    }
}
