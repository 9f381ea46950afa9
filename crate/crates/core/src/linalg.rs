//! Dense complex kernels shared by the assembly, H-matrix and solver layers.

use nalgebra::{Complex, DMatrix, DVector, Dyn, Matrix, RawStorage, RawStorageMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub const ONE: C64 = Complex { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Operand form in [`gemm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
    /// Conjugate transpose.
    H,
}

/// `C ← α op(A) op(B) + β C` through the SIMD kernels of `matrixmultiply`.
/// Views with arbitrary strides are accepted; `Op::H` conjugates a copy.
pub fn gemm<SA, SB, SC>(alpha: C64, a: &Matrix<C64, Dyn, Dyn, SA>, opa: Op, b: &Matrix<C64, Dyn, Dyn, SB>, opb: Op, beta: C64, c: &mut Matrix<C64, Dyn, Dyn, SC>)
where
    SA: RawStorage<C64, Dyn, Dyn>,
    SB: RawStorage<C64, Dyn, Dyn>,
    SC: RawStorageMut<C64, Dyn, Dyn>,
{
    let ca;
    let (pa, (ra, ka), (rsa, csa)) = match opa {
        Op::N => (a.as_ptr(), a.shape(), a.strides()),
        Op::T => (a.as_ptr(), (a.ncols(), a.nrows()), (a.strides().1, a.strides().0)),
        Op::H => {
            ca = a.map(|z| z.conj());
            (ca.as_ptr(), (a.ncols(), a.nrows()), (a.nrows(), 1))
        }
    };
    let cb;
    let (pb, (kb, nb), (rsb, csb)) = match opb {
        Op::N => (b.as_ptr(), b.shape(), b.strides()),
        Op::T => (b.as_ptr(), (b.ncols(), b.nrows()), (b.strides().1, b.strides().0)),
        Op::H => {
            cb = b.map(|z| z.conj());
            (cb.as_ptr(), (b.ncols(), b.nrows()), (b.nrows(), 1))
        }
    };
    assert!(ka == kb && c.shape() == (ra, nb), "gemm shapes {ra}×{ka} · {kb}×{nb} into {:?}", c.shape());
    if ra == 0 || nb == 0 {
        return;
    }
    if ka == 0 {
        if beta == ZERO {
            c.fill(ZERO);
        } else {
            c.apply(|z| *z *= beta);
        }
        return;
    }
    let (rsc, csc) = c.strides();
    let pc = c.as_mut_ptr();
    // SAFETY: Complex<f64> is repr(C) with layout [re, im]; the pointers and
    // strides describe the live matrices above and C does not alias A or B.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            ra,
            ka,
            nb,
            [alpha.re, alpha.im],
            pa as *const [f64; 2],
            rsa as isize,
            csa as isize,
            pb as *const [f64; 2],
            rsb as isize,
            csb as isize,
            [beta.re, beta.im],
            pc as *mut [f64; 2],
            rsc as isize,
            csc as isize,
        );
    }
}

/// `A · B`.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), b.ncols());
    gemm(ONE, a, Op::N, b, Op::N, ZERO, &mut out);
    out
}

/// Anything that can be applied to a vector, together with its adjoint.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &CVec) -> CVec;
    fn apply_adjoint(&self, x: &CVec) -> CVec;
}

impl LinearOperator for CMat {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &CVec) -> CVec {
        self * x
    }
    fn apply_adjoint(&self, x: &CVec) -> CVec {
        self.ad_mul(x)
    }
}

/// `a − b` as an operator, never formed explicitly.
pub struct Difference<'a, A: ?Sized, B: ?Sized> {
    pub a: &'a A,
    pub b: &'a B,
}

impl<A: LinearOperator + ?Sized, B: LinearOperator + ?Sized> LinearOperator for Difference<'_, A, B> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.ncols()
    }
    fn apply(&self, x: &CVec) -> CVec {
        self.a.apply(x) - self.b.apply(x)
    }
    fn apply_adjoint(&self, x: &CVec) -> CVec {
        self.a.apply_adjoint(x) - self.b.apply_adjoint(x)
    }
}

/// Deterministic pseudo-random complex vector with entries in the unit square.
pub fn random_vector(n: usize, seed: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CVec::from_fn(n, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMat::from_fn(rows, cols, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Power iteration on `OᴴO`; returns an estimate of `‖O‖₂`.
pub fn estimate_norm2<O: LinearOperator + ?Sized>(op: &O, iters: usize, seed: u64) -> f64 {
    let n = op.ncols();
    if n == 0 || op.nrows() == 0 {
        return 0.0;
    }
    let mut v = random_vector(n, seed);
    let nv = v.norm();
    v /= c(nv);
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let w = op.apply(&v);
        let z = op.apply_adjoint(&w);
        let wn = w.norm();
        let zn = z.norm();
        sigma = wn;
        if zn == 0.0 || !zn.is_finite() {
            break;
        }
        v = z / c(zn);
    }
    sigma
}

/// Dense LU with partial pivoting, stored in place LAPACK style
/// (unit lower factor strictly below the diagonal, upper factor on and above).
///
/// Returns the row permutation `perm` with `(P A)[i, :] = A[perm[i], :]`.
/// Fails with the offending column when the chosen pivot magnitude is not
/// above `pivot_tol`.
pub fn lu_in_place(a: &mut CMat, pivot_tol: f64) -> Result<Vec<usize>, usize> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "LU needs a square matrix");
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = a[(k, k)].norm();
        for i in k + 1..n {
            let v = a[(i, k)].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best > pivot_tol) {
            return Err(k);
        }
        if p != k {
            a.swap_rows(k, p);
            perm.swap(k, p);
        }
        let pivot = a[(k, k)];
        for i in k + 1..n {
            a[(i, k)] /= pivot;
        }
        for j in k + 1..n {
            let akj = a[(k, j)];
            if akj == ZERO {
                continue;
            }
            for i in k + 1..n {
                let lik = a[(i, k)];
                a[(i, j)] -= lik * akj;
            }
        }
    }
    Ok(perm)
}

/// Solves `L X = B` in place, `L` unit lower triangular taken from the strict
/// lower part of `lu`.
pub fn solve_unit_lower_in_place(lu: &CMat, b: &mut CMat) {
    let n = lu.nrows();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= lu[(i, k)] * b[(k, col)];
            }
            b[(i, col)] = s;
        }
    }
}

/// Solves `U X = B` in place, `U` the upper triangle (with diagonal) of `lu`.
pub fn solve_upper_in_place(lu: &CMat, b: &mut CMat) {
    let n = lu.nrows();
    for col in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = b[(i, col)];
            for k in i + 1..n {
                s -= lu[(i, k)] * b[(k, col)];
            }
            b[(i, col)] = s / lu[(i, i)];
        }
    }
}

/// Solves `Uᴴ X = B` in place, `U` the upper triangle of `lu`.
pub fn solve_upper_adjoint_in_place(lu: &CMat, b: &mut CMat) {
    let n = lu.nrows();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= lu[(k, i)].conj() * b[(k, col)];
            }
            b[(i, col)] = s / lu[(i, i)].conj();
        }
    }
}

/// Applies a row permutation in place: `row i ← old row perm[i]`.
pub fn permute_rows(m: &mut CMat, perm: &[usize]) {
    debug_assert_eq!(m.nrows(), perm.len());
    let old = m.clone();
    for (i, &p) in perm.iter().enumerate() {
        if i != p {
            m.row_mut(i).copy_from(&old.row(p));
        }
    }
}

pub fn permute_vec(v: &CVec, perm: &[usize]) -> CVec {
    CVec::from_fn(perm.len(), |i, _| v[perm[i]])
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Dense solve by LU with partial pivoting; `Err(k)` names the column whose
/// pivot fell below `pivot_tol`.
pub fn dense_lu_solve(a: &CMat, b: &CVec, pivot_tol: f64) -> Result<CVec, usize> {
    let mut lu = a.clone();
    let perm = lu_in_place(&mut lu, pivot_tol)?;
    let mut rhs = CMat::from_column_slice(b.len(), 1, permute_vec(b, &perm).as_slice());
    solve_unit_lower_in_place(&lu, &mut rhs);
    solve_upper_in_place(&lu, &mut rhs);
    Ok(CVec::from_column_slice(rhs.as_slice()))
}

/// Dense inverse through nalgebra's own LU, kept separate from
/// [`lu_in_place`] so it can serve as an oracle.
pub fn dense_inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

#[cfg(test)]
mod tests {
    #[test]
    fn gemm_matches_reference_on_strided_views() {
        let a = random_matrix(9, 7, 1);
        let b = random_matrix(9, 9, 2);
        let (alpha, beta) = (C64::new(0.5, -2.0), C64::new(-1.0, 0.25));
        for (opa, opb) in [(Op::N, Op::N), (Op::T, Op::N), (Op::H, Op::T), (Op::N, Op::H), (Op::H, Op::H)] {
            let av = a.view((1, 2), (6, 5));
            let bv = b.view((2, 1), (if matches!(opb, Op::N) == matches!(opa, Op::N) { 5 } else { 6 }, 5));
            let op = |m: nalgebra::DMatrix<C64>, o: Op| match o {
                Op::N => m,
                Op::T => m.transpose(),
                Op::H => m.adjoint(),
            };
            let (ea, eb) = (op(av.into_owned(), opa), op(bv.into_owned(), opb));
            if ea.ncols() != eb.nrows() {
                continue;
            }
            let mut c0 = random_matrix(ea.nrows() + 2, eb.ncols() + 3, 3);
            let expect = {
                let mut e = c0.clone();
                let mut v = e.view_mut((1, 2), (ea.nrows(), eb.ncols()));
                let r = &ea * &eb * alpha + v.clone_owned() * beta;
                v.copy_from(&r);
                e
            };
            let mut v = c0.view_mut((1, 2), (ea.nrows(), eb.ncols()));
            gemm(alpha, &av, opa, &bv, opb, beta, &mut v);
            assert!((c0 - expect).norm() < 1e-13, "{opa:?} {opb:?}");
        }
        let mut e = CMat::zeros(3, 0);
        gemm(ONE, &CMat::zeros(3, 0), Op::N, &CMat::zeros(0, 0), Op::N, ZERO, &mut e);
        let mut z = CMat::from_element(2, 2, ONE);
        gemm(ONE, &CMat::zeros(2, 0), Op::N, &CMat::zeros(0, 2), Op::N, ZERO, &mut z);
        assert_eq!(z, CMat::zeros(2, 2));
    }

    use super::*;

    #[test]
    fn lu_reconstructs_random_matrix() {
        let a = random_matrix(12, 12, 3);
        let mut lu = a.clone();
        let perm = lu_in_place(&mut lu, 1e-14).unwrap();
        let n = 12;
        let l = CMat::from_fn(n, n, |i, j| if i == j { ONE } else if i > j { lu[(i, j)] } else { ZERO });
        let u = CMat::from_fn(n, n, |i, j| if i <= j { lu[(i, j)] } else { ZERO });
        let mut pa = a.clone();
        permute_rows(&mut pa, &perm);
        assert!((l * u - pa).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn lu_rejects_singular() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 0)] = ONE;
        a[(1, 1)] = ONE;
        assert_eq!(lu_in_place(&mut a, 1e-14), Err(2));
    }

    #[test]
    fn triangular_solves_match_products() {
        let a = random_matrix(8, 8, 11);
        let mut lu = a.clone();
        lu_in_place(&mut lu, 1e-14).unwrap();
        let b = random_matrix(8, 3, 12);
        let u = CMat::from_fn(8, 8, |i, j| if i <= j { lu[(i, j)] } else { ZERO });
        let mut x = b.clone();
        solve_upper_adjoint_in_place(&lu, &mut x);
        assert!((u.adjoint() * &x - &b).norm() < 1e-12);
        let mut x = b.clone();
        solve_upper_in_place(&lu, &mut x);
        assert!((&u * &x - &b).norm() < 1e-12);
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let mut d = CMat::zeros(5, 5);
        for i in 0..5 {
            d[(i, i)] = c(i as f64 + 1.0);
        }
        let est = estimate_norm2(&d, 200, 1);
        assert!((est - 5.0).abs() < 1e-6);
    }
}
