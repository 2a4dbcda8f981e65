//! Solving `F T = T Q`, `φ T = θ` for a linear system `(F, φ)` that must
//! reproduce every output of the exosystem `(Q, θ)`.

use nalgebra::{DMatrix, DVector, RowDVector, SVD};
use serde::Serialize;

use super::{dmatrix_rows, LinError};

/// Default residual tolerance for the embedding.
pub const DEFAULT_EMBED_TOL: f64 = 1e-10;

/// Where `T` lives when `(F, φ)` has unobservable modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpace {
    /// `T` maps into the original coordinates of `F`.
    Full,
    /// The unobservable part of `F` could not be lifted; `T`, `P` and the
    /// block form refer to the observable quotient `(F_o, φ_o)`.
    ObservableQuotient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingResult {
    pub t: Vec<Vec<f64>>,
    /// `P = [T, C]` with `C` an orthonormal completion.
    pub p: Vec<Vec<f64>>,
    /// `P⁻¹ F P`, upper block-triangular with `Q` as its leading block.
    pub block_form: Vec<Vec<f64>>,
    pub orientation: &'static str,
    pub space: EmbeddingSpace,
    /// Basis (columns) of the observable quotient when `space` is the quotient.
    pub quotient_basis: Option<Vec<Vec<f64>>>,
    /// Basis (columns) of the observable part of `(Q, θ)` used for the solve.
    pub exo_reduction: Option<Vec<Vec<f64>>>,
    pub residual_ft_tq: f64,
    pub residual_phi_t: f64,
    pub matching_residual: f64,
    pub leading_block_error: f64,
    pub lower_left_norm: f64,
    pub min_singular_value: f64,
    pub tol: f64,
}

/// Induced ∞-norm (maximum absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn observability(a: &DMatrix<f64>, c: &RowDVector<f64>, depth: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut o = DMatrix::zeros(depth, n);
    let mut row = c.clone();
    for k in 0..depth {
        o.set_row(k, &row);
        row = &row * a;
    }
    o
}

/// Orthonormal bases of the row space of `m` (columns of the first matrix)
/// and of its orthogonal complement.
fn row_space_split(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.ncols();
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max();
    let thresh = rank_threshold(smax, n);
    let k = svd.singular_values.iter().filter(|&&s| s > thresh).count();
    let v = vt.transpose();
    (v.columns(0, k).into_owned(), v.columns(k, n - k).into_owned())
}

fn rank_threshold(smax: f64, n: usize) -> f64 {
    1e-9 * smax.max(1.0) * n.max(1) as f64
}

/// Orthonormal completion of the column space of `t` to a basis of `R^n`.
fn column_complement(t: &DMatrix<f64>) -> DMatrix<f64> {
    let (_, comp) = row_space_split(&t.transpose());
    comp
}

fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinError> {
    let svd = SVD::new(a.clone(), true, true);
    let eps = rank_threshold(svd.singular_values.max(), a.ncols());
    svd.solve(b, eps).map_err(|e| LinError::Numerical(e.to_string()))
}

/// Reduces `(A, c)` to its observable part: returns `(A_o, c_o, V)` with
/// `V` an orthonormal basis of the observable row space, `A_o = Vᵀ A V`,
/// `c_o = c V`, or `None` when `(A, c)` is already observable.
fn observable_reduction(
    a: &DMatrix<f64>,
    c: &RowDVector<f64>,
) -> Option<(DMatrix<f64>, RowDVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let (v, u) = row_space_split(&observability(a, c, n));
    if v.ncols() == n {
        return None;
    }
    let ao = v.transpose() * a * &v;
    let co = c * &v;
    Some((ao, co, v, u))
}

fn check_shapes(q: &DMatrix<f64>, theta: &RowDVector<f64>, f: &DMatrix<f64>, phi: &RowDVector<f64>) -> Result<(), LinError> {
    if !q.is_square() || theta.len() != q.nrows() || !f.is_square() || phi.len() != f.nrows() {
        return Err(LinError::Dimension("Q, θ, F, φ have inconsistent shapes".into()));
    }
    if q.nrows() == 0 || f.nrows() == 0 {
        return Err(LinError::Dimension("empty system".into()));
    }
    Ok(())
}

/// Stacked derivative matching `φ F^k T = θ Q^k`, `k < dim F + dim Q`,
/// for observable `(F, φ)`. Returns `T` and the matching residual.
fn match_outputs(
    q: &DMatrix<f64>,
    theta: &RowDVector<f64>,
    f: &DMatrix<f64>,
    phi: &RowDVector<f64>,
) -> Result<(DMatrix<f64>, f64), LinError> {
    let depth = f.nrows() + q.nrows();
    let of = observability(f, phi, depth);
    let oq = observability(q, theta, depth);
    let t = least_squares(&of, &oq)?;
    let resid = inf_norm(&(&of * &t - &oq));
    Ok((t, resid))
}

/// Finds `T` with `F T = T Q` and `φ T = θ`, and the basis change
/// `P = [T, C]` putting `F` in upper block-triangular form with `Q` leading.
pub fn solve_embedding(
    q: &DMatrix<f64>,
    theta: &RowDVector<f64>,
    f: &DMatrix<f64>,
    phi: &RowDVector<f64>,
    tol: f64,
) -> Result<EmbeddingResult, LinError> {
    check_shapes(q, theta, f, phi)?;
    let exo = observable_reduction(q, theta);
    let (qr, thr) = match &exo {
        Some((qo, to, _, _)) => (qo.clone(), to.clone()),
        None => (q.clone(), theta.clone()),
    };

    let plant = observable_reduction(f, phi);
    let (fr, phr) = match &plant {
        Some((fo, po, _, _)) => (fo.clone(), po.clone()),
        None => (f.clone(), phi.clone()),
    };
    let (tr, matching) = match_outputs(&qr, &thr, &fr, &phr)?;
    if !(matching <= tol) {
        return Err(LinError::NoEmbedding { residual: matching, tol });
    }

    // Lift through the unobservable part of F, if any.
    let (mut t, fw, phw, space, quotient_basis) = match &plant {
        None => (tr, f.clone(), phi.clone(), EmbeddingSpace::Full, None),
        Some((_, _, v, u)) => match lift(f, v, u, &tr, &qr, tol) {
            Some(t) => (t, f.clone(), phi.clone(), EmbeddingSpace::Full, None),
            None => (tr, fr.clone(), phr.clone(), EmbeddingSpace::ObservableQuotient, Some(dmatrix_rows(v))),
        },
    };
    let mut qw = qr.clone();
    let mut thw = thr.clone();
    if let Some((_, _, vq, _)) = &exo {
        // Back to the original exosystem coordinates: T_full = T_r Vᵀ.
        t = &t * vq.transpose();
        qw = q.clone();
        thw = theta.clone();
    }
    let residual_ft_tq = inf_norm(&(&fw * &t - &t * &qw));
    let residual_phi_t = inf_norm(&DMatrix::from_row_slice(1, thw.len(), (&phw * &t - &thw).as_slice()));
    if !(residual_ft_tq <= tol && residual_phi_t <= tol) {
        return Err(LinError::NoEmbedding { residual: residual_ft_tq.max(residual_phi_t), tol });
    }

    // Block form uses the full-rank reduced T so that P is invertible.
    let (tb, qb) = match &exo {
        Some((_, _, vq, _)) => (&t * vq, qr.clone()),
        None => (t.clone(), qw.clone()),
    };
    let sv = SVD::new(tb.clone(), false, false).singular_values;
    let min_singular_value = sv.min();
    if !(min_singular_value > tol) {
        return Err(LinError::Numerical(format!("embedding map is rank deficient (σ_min = {min_singular_value:.3e})")));
    }
    let c = column_complement(&tb);
    let n = fw.nrows();
    let m = tb.ncols();
    let mut p = DMatrix::zeros(n, n);
    p.view_mut((0, 0), (n, m)).copy_from(&tb);
    p.view_mut((0, m), (n, n - m)).copy_from(&c);
    let pinv = p
        .clone()
        .try_inverse()
        .ok_or_else(|| LinError::Numerical("basis completion is singular".into()))?;
    let block = &pinv * &fw * &p;
    let leading_block_error = inf_norm(&(block.view((0, 0), (m, m)).into_owned() - &qb));
    let lower_left_norm = if n > m { inf_norm(&block.view((m, 0), (n - m, m)).into_owned()) } else { 0.0 };

    Ok(EmbeddingResult {
        t: dmatrix_rows(&t),
        p: dmatrix_rows(&p),
        block_form: dmatrix_rows(&block),
        orientation: "upper",
        space,
        quotient_basis,
        exo_reduction: exo.as_ref().map(|(_, _, v, _)| dmatrix_rows(v)),
        residual_ft_tq,
        residual_phi_t,
        matching_residual: matching,
        leading_block_error,
        lower_left_norm,
        min_singular_value,
        tol,
    })
}

/// Extends `T_o` (observable coordinates) to `T = V T_o + U X` solving the
/// Sylvester equation `F_u X − X Q = −F_uo T_o`.
fn lift(f: &DMatrix<f64>, v: &DMatrix<f64>, u: &DMatrix<f64>, to: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let k = u.ncols();
    let m = q.nrows();
    let fu = u.transpose() * f * u;
    let fuo = u.transpose() * f * v;
    let rhs = -(&fuo * to);
    // vec(F_u X − X Q) = (I ⊗ F_u − Qᵀ ⊗ I) vec X
    let mut big = DMatrix::zeros(k * m, k * m);
    for j in 0..m {
        for i in 0..m {
            for a in 0..k {
                for b in 0..k {
                    let mut val = 0.0;
                    if i == j {
                        val += fu[(a, b)];
                    }
                    if a == b {
                        val -= q[(i, j)];
                    }
                    big[(j * k + a, i * k + b)] = val;
                }
            }
        }
    }
    let rhs_vec = DVector::from_column_slice(rhs.as_slice());
    let x = least_squares(&big, &DMatrix::from_column_slice(k * m, 1, rhs_vec.as_slice())).ok()?;
    if !(inf_norm(&(&big * &x - DMatrix::from_column_slice(k * m, 1, rhs_vec.as_slice()))) <= tol) {
        return None;
    }
    let x = DMatrix::from_column_slice(k, m, x.as_slice());
    Some(v * to + u * x)
}
