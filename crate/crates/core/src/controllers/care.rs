//! Continuous algebraic Riccati equation via Newton–Kleinman iteration.
//!
//! Each Newton step solves a Lyapunov equation through its Kronecker
//! (vectorised) form, which is cheap at the state sizes used here.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;

/// Stabilizing solution `P` and the associated gain `K = R^-1 B^T P`.
#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
}

impl CareSolution {
    /// `||A^T P + P A - P B R^-1 B^T P + Q||_F`.
    pub fn residual(
        &self,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> f64 {
        care_residual(a, b, q, r, &self.p)
    }
}

pub(crate) fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let r_inv = r
        .clone()
        .try_inverse()
        .unwrap_or_else(|| r.clone() * f64::NAN);
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    res.norm()
}

/// Real parts of all eigenvalues strictly negative.
pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .all(|l| l.re < 0.0 && l.re.is_finite())
}

/// Solves `L X + X R = C` for square `L`, `R` of equal size.
fn solve_sylvester(l: &DMatrix<f64>, r: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // column-major vec: vec(L X) = (I kron L) vec X, vec(X R) = (R^T kron I) vec X
    let m = eye.kronecker(l) + r.transpose().kronecker(&eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Lyapunov equation"))?;
    Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Solves `A^T X + X A + C = 0`.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x = solve_sylvester(&a.transpose(), a, &(-c))?;
    Ok(symmetrize(&x))
}

fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Stabilizing initial gain by Bass's method. The Gramian-like solution `W`
/// is supported on the controllable subspace, so its pseudo-inverse leaves
/// uncontrollable (and, for a stabilizable pair, stable) modes untouched.
///
/// The shift must exceed every `|Re(lambda)|`; a shift barely past that keeps
/// `W` well conditioned for slow, weakly actuated modes, so it is tried before
/// the conservative norm-based one. The first stabilizing candidate wins.
fn initial_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if is_hurwitz(a) {
        return Ok(DMatrix::zeros(m, n));
    }
    let reach = a
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re.abs())
        .fold(0.0, f64::max);
    let scale = 1.0 + a.norm();
    let shifts = [1.5 * reach + 1e-3 * scale, reach + scale];
    let mut last = None;
    for beta in shifts {
        let shifted = a + DMatrix::<f64>::identity(n, n) * beta;
        let w = symmetrize(&solve_sylvester(
            &shifted,
            &shifted.transpose(),
            &(b * b.transpose() * 2.0),
        )?);
        let svd = w.svd(true, true);
        for rel in [1e-12, 1e-15] {
            let tol = rel * svd.singular_values.max().max(f64::MIN_POSITIVE);
            let w_pinv = svd
                .clone()
                .pseudo_inverse(tol)
                .map_err(|_| Error::Singular("controllability Gramian"))?;
            let k = b.transpose() * w_pinv;
            if is_hurwitz(&(a - b * &k)) {
                return Ok(k);
            }
            last = Some(k);
        }
    }
    Ok(last.expect("at least one candidate"))
}

/// Stabilizing solution of `A^T P + P A - P B R^-1 B^T P + Q = 0`.
///
/// Requires `(A, B)` stabilizable and `(A, Q^1/2)` detectable; fails with
/// [`Error::NotStabilizable`] when no stabilizing starting gain exists.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<CareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Config(format!(
            "CARE dimension mismatch: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    if a.iter()
        .chain(b.iter())
        .chain(q.iter())
        .chain(r.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("CARE input"));
    }
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("R must be symmetric positive definite".into()))?;
    let r_inv = r_chol.inverse();

    let mut k = initial_gain(a, b)?;
    if !is_hurwitz(&(a - b * &k)) {
        return Err(Error::NotStabilizable);
    }

    let mut p = DMatrix::<f64>::zeros(n, n);
    for iteration in 1..=MAX_ITERATIONS {
        let closed = a - b * &k;
        let c = q + k.transpose() * r * &k;
        let next = solve_lyapunov(&closed, &c)?;
        let change = (&next - &p).norm();
        p = next;
        k = &r_inv * b.transpose() * &p;
        if change <= 1e-14 * (1.0 + p.norm()) {
            return finish(a, b, q, r, p, k, iteration);
        }
        // quadratic convergence stalls at rounding level; accept once the
        // residual itself is tiny
        if iteration > 5 && care_residual(a, b, q, r, &p) <= 1e-13 * (1.0 + q.norm() + p.norm()) {
            return finish(a, b, q, r, p, k, iteration);
        }
    }
    Err(Error::NoConvergence(MAX_ITERATIONS))
}

fn finish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    _q: &DMatrix<f64>,
    _r: &DMatrix<f64>,
    p: DMatrix<f64>,
    k: DMatrix<f64>,
    iterations: usize,
) -> Result<CareSolution> {
    if !is_hurwitz(&(a - b * &k)) {
        return Err(Error::NotStabilizable);
    }
    Ok(CareSolution { p, k, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_stable_plant() {
        let sol = solve_care(&scalar(-1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((sol.p[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn scalar_integrator() {
        let sol = solve_care(&scalar(0.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((sol.k[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scalar_unstable_plant() {
        // 2 a p - p^2 + 1 = 0 with a = 2: p = 2 + sqrt 5
        let sol = solve_care(&scalar(2.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((sol.p[(0, 0)] - (2.0 + 5f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn unstabilizable_pair_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = scalar(1.0);
        assert!(matches!(
            solve_care(&a, &b, &q, &r),
            Err(Error::NotStabilizable)
        ));
    }

    #[test]
    fn uncontrollable_but_stable_mode_is_fine() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let q = DMatrix::identity(2, 2);
        let r = scalar(1.0);
        let sol = solve_care(&a, &b, &q, &r).unwrap();
        assert!(sol.residual(&a, &b, &q, &r) < 1e-10);
        assert!(is_hurwitz(&(&a - &b * &sol.k)));
    }

    #[test]
    fn lyapunov_matches_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let c = DMatrix::identity(2, 2);
        let x = solve_lyapunov(&a, &c).unwrap();
        let res = a.transpose() * &x + &x * &a + &c;
        assert!(res.norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let err = solve_care(
            &scalar(0.0),
            &DMatrix::zeros(2, 1),
            &scalar(1.0),
            &scalar(1.0),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
