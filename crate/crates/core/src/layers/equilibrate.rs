//! Ruiz-style diagonal equilibration.
//!
//! The problem is rescaled as `y = E ỹ`, `z̃ = F z`, with the cost
//! multiplied by `cost_scale`:
//!
//! ```text
//! H̃ = cost_scale · E H E     g̃ = cost_scale · E g
//! G̃ = F G E                  c̃ = F c,   d̃ = F d
//! ```
//!
//! and the duals map back as `λ = F λ̃ / cost_scale`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::problem::QProblem;

pub const DEFAULT_RUIZ_PASSES: usize = 10;
pub const DEFAULT_RUIZ_TOL: f64 = 1e-3;

/// Diagonal scaling `(E, F, cost_scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub e: DVector<f64>,
    pub f: DVector<f64>,
    pub cost_scale: f64,
}

impl Scaling {
    pub fn identity(n: usize, m: usize) -> Self {
        Scaling {
            e: DVector::from_element(n, 1.0),
            f: DVector::from_element(m, 1.0),
            cost_scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.cost_scale == 1.0 && self.e.iter().chain(self.f.iter()).all(|x| *x == 1.0)
    }

    /// The scaled problem. Dimensions must match.
    pub fn apply(&self, p: &QProblem) -> QProblem {
        let h = scale_symmetric(p.hessian(), &self.e, self.cost_scale);
        let gmat = scale_rows_cols(p.constraints(), &self.f, &self.e);
        let (g, c, d) = self.scale_vectors(p.linear(), p.lower(), p.upper());
        QProblem::from_parts_unchecked(Arc::new(h), g, Arc::new(gmat), c, d)
    }

    /// Inverse of [`Scaling::apply`].
    pub fn unapply(&self, p: &QProblem) -> QProblem {
        let e_inv = self.e.map(|x| 1.0 / x);
        let f_inv = self.f.map(|x| 1.0 / x);
        let h = scale_symmetric(p.hessian(), &e_inv, 1.0 / self.cost_scale);
        let gmat = scale_rows_cols(p.constraints(), &f_inv, &e_inv);
        let g = p.linear().component_div(&self.e) / self.cost_scale;
        let c = p.lower().component_div(&self.f);
        let d = p.upper().component_div(&self.f);
        QProblem::from_parts_unchecked(Arc::new(h), g, Arc::new(gmat), c, d)
    }

    /// `(g̃, c̃, d̃)` from unscaled `(g, c, d)`.
    pub fn scale_vectors(
        &self,
        g: &DVector<f64>,
        c: &DVector<f64>,
        d: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            g.component_mul(&self.e) * self.cost_scale,
            c.component_mul(&self.f),
            d.component_mul(&self.f),
        )
    }

    /// Unscaled primal/dual triple into scaled coordinates.
    pub fn scale_iterate(
        &self,
        y: &DVector<f64>,
        z: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            y.component_div(&self.e),
            z.component_mul(&self.f),
            lambda.component_div(&self.f) * self.cost_scale,
        )
    }

    /// Scaled primal/dual triple back to problem coordinates.
    pub fn unscale_iterate(
        &self,
        y: &DVector<f64>,
        z: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            y.component_mul(&self.e),
            z.component_div(&self.f),
            lambda.component_mul(&self.f) / self.cost_scale,
        )
    }
}

// `s · diag(e) A diag(e)`, computed as a_ij · (e_i e_j) so symmetry is exact.
fn scale_symmetric(a: &DMatrix<f64>, e: &DVector<f64>, s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| s * (a[(i, j)] * (e[i] * e[j])))
}

fn scale_rows_cols(a: &DMatrix<f64>, rows: &DVector<f64>, cols: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (rows[i] * cols[j]))
}

/// ∞-norms of the columns of `[[H, Gᵀ], [G, 0]]` (equal to its row norms).
fn stacked_norms(h: &DMatrix<f64>, gmat: &DMatrix<f64>) -> DVector<f64> {
    let n = h.ncols();
    let m = gmat.nrows();
    let mut out = DVector::zeros(n + m);
    for j in 0..n {
        let hcol = h.column(j).iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let gcol = gmat.column(j).iter().fold(0.0f64, |a, x| a.max(x.abs()));
        out[j] = hcol.max(gcol);
    }
    for i in 0..m {
        out[n + i] = gmat.row(i).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    }
    out
}

/// Equilibrates the stacked KKT matrix `[[H, Gᵀ], [G, 0]]`.
///
/// Each pass divides every row and column by the square root of its
/// ∞-norm; passes stop once every nonzero norm is within `tol` of 1 or
/// after `max_passes`. Zero rows keep scale 1. A final scalar divides the
/// cost by `max(1, mean row ∞-norm of the scaled H)`.
pub fn ruiz_equilibrate(p: &QProblem, max_passes: usize, tol: f64) -> (QProblem, Scaling) {
    let n = p.n();
    let m = p.m();
    let mut h = p.hessian().clone();
    let mut gmat = p.constraints().clone();
    let mut e = DVector::from_element(n, 1.0);
    let mut f = DVector::from_element(m, 1.0);

    for _ in 0..max_passes {
        let norms = stacked_norms(&h, &gmat);
        let settled = norms
            .iter()
            .filter(|x| **x > 0.0)
            .all(|x| (1.0 - x).abs() <= tol);
        if settled {
            break;
        }
        let delta = norms.map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 });
        let de = delta.rows(0, n).into_owned();
        let df = delta.rows(n, m).into_owned();
        h = scale_symmetric(&h, &de, 1.0);
        gmat = scale_rows_cols(&gmat, &df, &de);
        e.component_mul_assign(&de);
        f.component_mul_assign(&df);
    }

    let mean_row_norm = if n == 0 {
        0.0
    } else {
        h.row_iter()
            .map(|r| r.iter().fold(0.0f64, |a, x| a.max(x.abs())))
            .sum::<f64>()
            / n as f64
    };
    let cost_scale = 1.0 / mean_row_norm.max(1.0);

    let scaling = Scaling { e, f, cost_scale };
    (scaling.apply(p), scaling)
}
