use super::*;
use crate::testing::{random_problem, rng};
use nalgebra::{dmatrix, dvector};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

#[test]
fn seven_point_grid_is_decades() {
    let grid = build_penalty_grid(7).unwrap();
    assert_eq!(grid.values(), &[1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]);
    assert_eq!(grid.initial_index(), 2);
    assert_eq!(grid.eq_scale(), 1e3);
}

#[test]
fn two_point_grid_starts_at_bottom() {
    // log10(0.1) = -1 is 2 decades from 1e-3 and 4 from 1e3.
    let grid = build_penalty_grid(2).unwrap();
    assert_eq!(grid.values(), &[1e-3, 1e3]);
    assert_eq!(grid.initial_index(), 0);
}

#[test]
fn grid_needs_two_points() {
    assert_eq!(build_penalty_grid(1), Err(LayerError::GridTooSmall(1)));
    assert_eq!(build_penalty_grid(0), Err(LayerError::GridTooSmall(0)));
}

#[test]
fn default_grid_is_half_decades() {
    let grid = build_penalty_grid(DEFAULT_GRID_POINTS).unwrap();
    assert_eq!(grid.len(), 13);
    assert!(grid.values().windows(2).all(|w| w[0] < w[1] && w[0] > 0.0));
    assert_eq!(grid.values()[0], 1e-3);
    assert_eq!(grid.values()[12], 1e3);
    assert_eq!(grid.values()[grid.initial_index()], 0.1);
    for w in grid.values().windows(2) {
        assert!((w[1] / w[0] - 10f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn nearest_breaks_ties_downward() {
    let grid = build_penalty_grid(7).unwrap();
    assert_eq!(grid.nearest(0.9), 3);
    assert_eq!(grid.nearest(10f64.powf(-1.5)), 1);
    assert_eq!(grid.nearest(1e-9), 0);
    assert_eq!(grid.nearest(1e9), 6);
}

#[test]
fn kkt_inverse_scalar_cases() {
    let d = build_kkt_inverse(&dmatrix![1.0], &dmatrix![1.0], 0.0, &dvector![1.0]).unwrap();
    assert!((d[(0, 0)] - 0.5).abs() < 1e-15);

    let d = build_kkt_inverse(&dmatrix![2.0], &dmatrix![1.0], 1e-6, &dvector![0.1]).unwrap();
    assert!((d[(0, 0)] - 1.0 / 2.100001).abs() < 1e-15);
    assert!((d[(0, 0)] - 0.476190).abs() < 1e-6);

    let d = build_kkt_inverse(
        &dmatrix![1.0, 0.0; 0.0, 4.0],
        &dmatrix![1.0, 0.0],
        0.0,
        &dvector![1.0],
    )
    .unwrap();
    assert!((d - dmatrix![0.5, 0.0; 0.0, 0.25]).amax() < 1e-15);
}

#[test]
fn kkt_inverse_reports_failure() {
    let err = build_kkt_inverse(&dmatrix![-5.0], &dmatrix![1.0], 0.0, &dvector![1.0]);
    assert!(matches!(err, Err(LayerError::Factorization { .. })));
    let err = build_kkt_inverse(&dmatrix![1.0], &dmatrix![1.0], 0.0, &dvector![0.0]);
    assert!(matches!(err, Err(LayerError::InvalidParameter(_))));
}

#[test]
fn one_d_layer_matches_hand_computation() {
    // H = 2, G = 1, σ = 0, ρ = 1  ⇒  D = 1/3.
    let d = build_kkt_inverse(&dmatrix![2.0], &dmatrix![1.0], 0.0, &dvector![1.0]).unwrap();
    let layer = build_layer(&dmatrix![1.0], 0.0, 1.0, &dvector![1.0], d);
    let third = 1.0 / 3.0;
    let expected = dmatrix![
        -third, 2.0 * third, -third;
        2.0 * third, -third, 2.0 * third;
        1.0, -1.0, 1.0
    ];
    assert!((&layer.w - expected).amax() < 1e-15);

    assert_eq!(layer.bias(&dvector![0.0]), dvector![0.0, 0.0, 0.0]);
    let b = layer.bias(&dvector![-2.0]);
    assert!((b - dvector![2.0 * third, 2.0 * third, 0.0]).amax() < 1e-15);
}

#[test]
fn bias_tracks_new_linear_cost() {
    let p = random_problem(&mut rng(3), 6, 4, 1);
    let grid = build_penalty_grid(7).unwrap();
    let cache = precompute_all(&p, &grid, 1e-6).unwrap();
    let layer = cache.layer(3);
    let g2 = dvector![1.0, -1.0, 2.0, 0.0, 0.5, 3.0];
    let b = layer.bias(&g2);
    let top = -(&layer.kkt_inverse * &g2);
    let mid = -(&layer.gd * &g2);
    assert_eq!(b.rows(0, 6), top.rows(0, 6));
    assert_eq!(b.rows(6, 4), mid.rows(0, 4));
    assert!(b.rows(10, 4).iter().all(|x| *x == 0.0));
}

#[test]
fn precompute_builds_one_layer_per_grid_point() {
    let p = random_problem(&mut rng(1), 5, 3, 1);
    let grid = build_penalty_grid(7).unwrap();
    let cache = precompute_all(&p, &grid, DEFAULT_SIGMA).unwrap();
    assert_eq!(cache.layers().len(), 7);
    for pair in cache.layers().windows(2) {
        assert!(pair[0].rho < pair[1].rho);
        assert!((&pair[0].w - &pair[1].w).amax() > 0.0);
    }
}

#[test]
fn equality_rows_get_thousandfold_penalty() {
    let p = QProblem::new(
        DMatrix::identity(2, 2),
        dvector![0.0, 0.0],
        dmatrix![1.0, 1.0; 1.0, -1.0],
        dvector![1.0, -1.0],
        dvector![1.0, 1.0],
    )
    .unwrap();
    let grid = build_penalty_grid(7).unwrap();
    let cache = precompute_all(&p, &grid, DEFAULT_SIGMA).unwrap();
    let layer = cache.layer(grid.initial_index());
    assert_eq!(layer.rho_vec, dvector![100.0, 0.1]);
    for (k, layer) in cache.layers().iter().enumerate() {
        assert_eq!(layer.rho_vec[0], 1e3 * grid.values()[k]);
        assert_eq!(layer.rho_vec[1], grid.values()[k]);
    }
}

#[test]
fn cached_gd_is_g_times_d() {
    let p = random_problem(&mut rng(7), 3, 5, 0);
    let grid = build_penalty_grid(5).unwrap();
    let cache = precompute_all(&p, &grid, DEFAULT_SIGMA).unwrap();
    for layer in cache.layers() {
        let direct = p.constraints() * &layer.kkt_inverse;
        assert!((&layer.gd - direct).amax() < 1e-12);
    }
}

type Q = BigRational;

fn exact(a: &DMatrix<f64>) -> Vec<Vec<Q>> {
    (0..a.nrows())
        .map(|i| {
            (0..a.ncols())
                .map(|j| Q::from_float(a[(i, j)]).unwrap())
                .collect()
        })
        .collect()
}

fn mul(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    (0..r)
        .map(|i| {
            (0..c)
                .map(|j| (0..k).fold(Q::zero(), |s, l| s + &a[i][l] * &b[l][j]))
                .collect()
        })
        .collect()
}

fn transpose(a: &[Vec<Q>]) -> Vec<Vec<Q>> {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

fn identity(n: usize) -> Vec<Vec<Q>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Q::one() } else { Q::zero() })
                .collect()
        })
        .collect()
}

fn inverse(a: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let n = a.len();
    let mut aug: Vec<Vec<Q>> = a
        .iter()
        .zip(identity(n))
        .map(|(row, e)| row.iter().cloned().chain(e).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !aug[r][col].is_zero()).unwrap();
        aug.swap(col, pivot);
        let inv = aug[col][col].recip();
        for x in aug[col].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r != col && !aug[r][col].is_zero() {
                let f = aug[r][col].clone();
                let pivot = aug[col].clone();
                for (x, q) in aug[r].iter_mut().zip(&pivot) {
                    *x -= &f * q;
                }
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

fn lin(terms: &[(i64, &[Vec<Q>])]) -> Vec<Vec<Q>> {
    let (r, c) = (terms[0].1.len(), terms[0].1[0].len());
    (0..r)
        .map(|i| {
            (0..c)
                .map(|j| {
                    terms.iter().fold(Q::zero(), |s, (k, m)| {
                        s + Q::from_integer((*k).into()) * &m[i][j]
                    })
                })
                .collect()
        })
        .collect()
}

/// `W` from its block formula in exact rational arithmetic.
fn exact_w(h: &DMatrix<f64>, g: &DMatrix<f64>, sigma: f64, rho: &DVector<f64>) -> DMatrix<f64> {
    let (n, m) = (h.nrows(), g.nrows());
    let diag = |v: Vec<Q>| -> Vec<Vec<Q>> {
        let k = v.len();
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { v[i].clone() } else { Q::zero() })
                    .collect()
            })
            .collect()
    };
    let hq = exact(h);
    let gq = exact(g);
    let gt = transpose(&gq);
    let r = diag(rho.iter().map(|x| Q::from_float(*x).unwrap()).collect());
    let r_inv = diag(
        rho.iter()
            .map(|x| Q::from_float(*x).unwrap().recip())
            .collect(),
    );
    let s = diag(vec![Q::from_float(sigma).unwrap(); n]);
    let gtrg = mul(&mul(&gt, &r), &gq);
    let d = inverse(&lin(&[(1, &hq), (1, &s), (1, &gtrg)]));
    let t = lin(&[(1, &s), (-1, &gtrg)]);
    let dgt = mul(&d, &gt);
    let gd = mul(&gq, &d);
    let gdgt = mul(&gd, &gt);
    let (im, zm) = (identity(m), lin(&[(0, &r)]));
    let blocks = [
        [mul(&d, &t), lin(&[(2, &mul(&dgt, &r))]), lin(&[(-1, &dgt)])],
        [
            lin(&[(1, &mul(&gd, &t)), (1, &gq)]),
            lin(&[(2, &mul(&gdgt, &r)), (-1, &im)]),
            lin(&[(-1, &gdgt), (1, &r_inv)]),
        ],
        [mul(&r, &gq), lin(&[(-1, &r), (0, &zm)]), im.clone()],
    ];
    let offsets = [0, n, n + m];
    let mut w = DMatrix::zeros(n + 2 * m, n + 2 * m);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            for (i, line) in blk.iter().enumerate() {
                for (j, x) in line.iter().enumerate() {
                    w[(offsets[bi] + i, offsets[bj] + j)] = x.to_f64().unwrap();
                }
            }
        }
    }
    w
}

#[test]
fn w_matches_block_definition_and_d_inverts_kkt() {
    let grid = build_penalty_grid(DEFAULT_GRID_POINTS).unwrap();
    for seed in 0..3 {
        let raw = random_problem(&mut rng(100 + seed), 5, 4, 2);
        let scaled = ruiz_equilibrate(&raw, DEFAULT_RUIZ_PASSES, DEFAULT_RUIZ_TOL).0;
        for p in [&raw, &scaled] {
            let cache = precompute_all(p, &grid, DEFAULT_SIGMA).unwrap();
            for layer in cache.layers() {
                let reference =
                    exact_w(p.hessian(), p.constraints(), DEFAULT_SIGMA, &layer.rho_vec);
                let diff = (&layer.w - &reference).amax();
                assert!(
                    diff <= 1e-10,
                    "seed {seed}, ρ = {}: |ΔW| = {diff:e}",
                    layer.rho
                );

                let kkt = p.hessian()
                    + DMatrix::identity(5, 5) * DEFAULT_SIGMA
                    + p.constraints().transpose()
                        * DMatrix::from_diagonal(&layer.rho_vec)
                        * p.constraints();
                let defect = &layer.kkt_inverse * &kkt - DMatrix::<f64>::identity(5, 5);
                assert!(crate::problem::inf_norm(&defect) <= 1e-8);
            }
        }
    }
}

#[test]
fn stable_and_literal_layers_agree_on_small_penalties() {
    let p = random_problem(&mut rng(11), 6, 4, 1);
    let grid = build_penalty_grid(7).unwrap();
    for k in 0..4 {
        let rho_vec = grid.row_penalties(k, &p.constraint_kinds());
        let d = build_kkt_inverse(p.hessian(), p.constraints(), DEFAULT_SIGMA, &rho_vec).unwrap();
        let literal = build_layer(
            p.constraints(),
            DEFAULT_SIGMA,
            grid.values()[k],
            &rho_vec,
            d,
        );
        let stable = build_layer_stable(
            p.hessian(),
            p.constraints(),
            DEFAULT_SIGMA,
            grid.values()[k],
            &rho_vec,
        )
        .unwrap();
        assert!((&literal.w - &stable.w).amax() < 1e-10);
        assert!((&literal.kkt_inverse - &stable.kkt_inverse).amax() < 1e-10);
        assert!((&literal.gd - &stable.gd).amax() < 1e-10);
    }
}

#[test]
fn stable_layer_falls_back_when_hessian_is_singular() {
    // H = 0 and σ = 0: only the full KKT matrix G ᵀρG is invertible.
    let layer =
        build_layer_stable(&dmatrix![0.0], &dmatrix![1.0], 0.0, 1.0, &dvector![1.0]).unwrap();
    assert_eq!(layer.kkt_inverse, dmatrix![1.0]);
    let err = build_layer_stable(&dmatrix![0.0], &dmatrix![0.0], 0.0, 1.0, &dvector![1.0]);
    assert!(matches!(err, Err(LayerError::Factorization { .. })));
}

#[test]
fn clamp_bounds_layout() {
    let (lo, hi) = clamp_bounds(2, &dvector![0.0, -1.0], &dvector![1.0, 1.0]);
    let ninf = f64::NEG_INFINITY;
    let inf = f64::INFINITY;
    assert_eq!(lo, dvector![ninf, ninf, 0.0, -1.0, ninf, ninf]);
    assert_eq!(hi, dvector![inf, inf, 1.0, 1.0, inf, inf]);
}

#[test]
fn cache_build_applies_scaling() {
    let p = random_problem(&mut rng(9), 6, 4, 2);
    let cache = LayerCache::build(&p, &LayerSettings::default()).unwrap();
    let expected = cache.scaling().apply(&p);
    assert_eq!(cache.working_problem(), &expected);
    let plain = LayerCache::build(
        &p,
        &LayerSettings {
            equilibrate: false,
            ..LayerSettings::default()
        },
    )
    .unwrap();
    assert!(plain.scaling().is_identity());
    assert_eq!(plain.working_problem(), &p);
}
