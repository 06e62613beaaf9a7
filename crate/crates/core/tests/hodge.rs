use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ymr_core::*;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `d_k` restricted to active cells, assembled from the raw incidences.
fn dense_coboundary(space: &FormSpace, k: usize) -> DMatrix<f64> {
    let c = space.complex();
    let rows = space.active(k + 1);
    let cols = space.active(k);
    let col_of: std::collections::HashMap<usize, usize> = cols.iter().enumerate().map(|(j, &i)| (i, j)).collect();
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (r, &cell) in rows.iter().enumerate() {
        for inc in c.boundary(k + 1, cell) {
            if let Some(&j) = col_of.get(&(inc.cell as usize)) {
                m[(r, j)] += inc.sign as f64;
            }
        }
    }
    m
}

fn dense_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone().svd(false, false).rank(1e-9)
}

fn dense_harmonic_dimension(space: &FormSpace, k: usize) -> usize {
    let n = space.dim(k);
    let up = if k < 4 { dense_rank(&dense_coboundary(space, k)) } else { 0 };
    let down = if k > 0 { dense_rank(&dense_coboundary(space, k - 1)) } else { 0 };
    n - up - down
}

#[test]
fn torus_harmonic_dimensions_match_dense_oracle() {
    let c = LatticeComplex::torus([2; 4], 1.0).unwrap();
    let space = FormSpace::whole(&c, BoundaryCondition::Tangential);
    for k in 0..=4 {
        let oracle = dense_harmonic_dimension(&space, k);
        assert_eq!(oracle, binomial(4, k));
        assert_eq!(space.harmonic_dimension(k), oracle, "degree {k}");
    }
}

#[test]
fn box_harmonic_dimensions_match_dense_oracle() {
    let c = LatticeComplex::open_box([3, 3, 2, 2], 1.0).unwrap();
    for (bc, expected) in [
        (BoundaryCondition::Tangential, [1, 0, 0, 0, 0]),
        (BoundaryCondition::Normal, [0, 0, 0, 0, 1]),
    ] {
        let space = FormSpace::whole(&c, bc);
        for k in 0..=4 {
            let oracle = dense_harmonic_dimension(&space, k);
            assert_eq!(oracle, expected[k], "{bc:?} degree {k}");
            assert_eq!(space.harmonic_dimension(k), oracle);
        }
    }
}

#[test]
fn harmonic_one_forms_on_larger_complexes() {
    for n in [3, 4] {
        let t = LatticeComplex::torus([n; 4], 1.0).unwrap();
        assert_eq!(FormSpace::whole(&t, BoundaryCondition::Tangential).harmonic_dimension(1), 4);
        let host = LatticeComplex::torus([n + 2; 4], 1.0).unwrap();
        let ball = BallRegion::new(&host, [(1, 1 + n); 4]).unwrap();
        for bc in [BoundaryCondition::Normal, BoundaryCondition::Tangential] {
            assert_eq!(FormSpace::on_region(&ball, bc).harmonic_dimension(1), 0, "{bc:?} n={n}");
        }
    }
}

fn check_parts(space: &FormSpace, c: &Cochain<Su2Alg>) -> HodgeCheck {
    let k = c.degree();
    let parts = space.hodge_decompose(c).unwrap();
    let (e, x, h) = (parts.exact.values(), parts.coexact.values(), parts.harmonic.values());
    let total = space.norm_sq(k, &space.project(k, c.values()));
    let rel = |v: f64| v.abs() / total;
    let sum: Vec<Su2Alg> = (0..e.len()).map(|i| e[i] + x[i] + h[i]).collect();
    let recon = space.norm_sq(k, &ymr_core::linalg::sub(&sum, &space.project(k, c.values()))).sqrt() / total.sqrt();
    HodgeCheck {
        orth: [rel(space.inner(k, e, x)), rel(space.inner(k, e, h)), rel(space.inner(k, x, h))]
            .into_iter()
            .fold(0.0, f64::max),
        recon,
        harmonic: space.norm_sq(k, h).sqrt() / total.sqrt(),
    }
}

struct HodgeCheck {
    orth: f64,
    recon: f64,
    harmonic: f64,
}

fn host(n: usize) -> Arc<LatticeComplex> {
    LatticeComplex::torus([n; 4], 0.5).unwrap()
}

#[test]
fn decomposition_parts_are_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in [3, 4] {
        let t = host(n);
        let whole = FormSpace::whole(&t, BoundaryCondition::Tangential);
        for k in 1..=2 {
            let c = Cochain::<Su2Alg>::random(&t, k, &mut rng, 1.0);
            let r = check_parts(&whole, &c);
            assert!(r.orth <= 1e-10 && r.recon <= 1e-10, "torus n={n} k={k}");
        }
        let big = host(n + 3);
        let ball = BallRegion::new(&big, [(1, 1 + n); 4]).unwrap();
        for bc in [BoundaryCondition::Normal, BoundaryCondition::Tangential] {
            let space = FormSpace::on_region(&ball, bc);
            let c = Cochain::<Su2Alg>::random(&big, 1, &mut rng, 1.0);
            let r = check_parts(&space, &c);
            assert!(r.orth <= 1e-10 && r.recon <= 1e-10, "ball n={n} {bc:?}");
            assert!(r.harmonic <= 1e-9, "ball has no harmonic 1-forms");
        }
    }
}

#[test]
fn torus_harmonic_part_is_the_axis_mean() {
    let t = LatticeComplex::torus([4, 3, 4, 3], 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let c = Cochain::<U1Alg>::random(&t, 1, &mut rng, 1.0);
    let parts = FormSpace::whole(&t, BoundaryCondition::Tangential)
        .hodge_decompose(&c)
        .unwrap();
    let mut mean = [0.0; 4];
    let mut count = [0.0; 4];
    for e in 0..t.num_edges() {
        mean[t.edge_axis(e)] += c.values()[e].0;
        count[t.edge_axis(e)] += 1.0;
    }
    for e in 0..t.num_edges() {
        let a = t.edge_axis(e);
        assert!((parts.harmonic.values()[e].0 - mean[a] / count[a]).abs() <= 1e-10);
    }
}
