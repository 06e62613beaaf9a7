//! Conjugate gradients over algebra-valued vectors.
//!
//! Vectors are plain `Vec<A>` slices; the operator and the inner product are
//! supplied by the caller, so the same routine serves weighted cochain spaces,
//! masked boundary problems and the Newton system.

use crate::error::{Error, Result};
use crate::group::Algebra;

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Relative residual target `‖r‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Absolute residual at which to stop regardless of `‖b‖`; guards
    /// right-hand sides that are pure round-off.
    pub abs_tol: f64,
}

impl CgOptions {
    /// Default tolerance with the iteration cap scaled to the problem size.
    pub fn for_size(n: usize) -> Self {
        CgOptions {
            tol: 1e-12,
            max_iter: (10 * n).max(50),
            abs_tol: 0.0,
        }
    }

    /// Stops once `‖r‖ ≤ tol·scale` as well.
    pub fn with_floor(mut self, scale: f64) -> Self {
        self.abs_tol = self.tol * scale;
        self
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome<A> {
    pub x: Vec<A>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

pub fn axpy<A: Algebra>(y: &mut [A], alpha: f64, x: &[A]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += *xi * alpha;
    }
}

pub fn scale<A: Algebra>(x: &[A], s: f64) -> Vec<A> {
    x.iter().map(|v| *v * s).collect()
}

pub fn sub<A: Algebra>(a: &[A], b: &[A]) -> Vec<A> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub fn add<A: Algebra>(a: &[A], b: &[A]) -> Vec<A> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

/// Solves `apply(x) = b` for a self-adjoint positive semidefinite operator
/// (with respect to `inner`) and `b` in its range.
pub fn conjugate_gradient<A, F, I>(apply: F, inner: I, b: &[A], opts: CgOptions) -> Result<CgOutcome<A>>
where
    A: Algebra,
    F: Fn(&[A]) -> Vec<A>,
    I: Fn(&[A], &[A]) -> f64,
{
    let n = b.len();
    let bnorm = inner(b, b).sqrt();
    if !bnorm.is_finite() {
        return Err(Error::NonFinite("conjugate gradient right-hand side"));
    }
    let mut x = vec![A::zero(); n];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = inner(&r, &r);
    for it in 0..opts.max_iter {
        let rel = rr.sqrt() / bnorm;
        if rel <= opts.tol || rr.sqrt() <= opts.abs_tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual: rel,
            });
        }
        let ap = apply(&p);
        let pap = inner(&p, &ap);
        if !(pap > 0.0) {
            // direction in the kernel: b has no further component to resolve
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rr / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = inner(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = *ri + *pi * beta;
        }
    }
    let rel = rr.sqrt() / bnorm;
    if rel <= opts.tol || rr.sqrt() <= opts.abs_tol {
        Ok(CgOutcome {
            x,
            iterations: opts.max_iter,
            residual: rel,
        })
    } else {
        Err(Error::NotConverged {
            what: "conjugate gradient",
            iterations: opts.max_iter,
            residual: rel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::U1Alg;

    fn dot(a: &[U1Alg], b: &[U1Alg]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.0 * y.0).sum()
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 40;
        let apply = |v: &[U1Alg]| -> Vec<U1Alg> {
            (0..n)
                .map(|i| {
                    let mut s = 2.5 * v[i].0;
                    if i > 0 {
                        s -= v[i - 1].0;
                    }
                    if i + 1 < n {
                        s -= v[i + 1].0;
                    }
                    U1Alg(s)
                })
                .collect()
        };
        let truth: Vec<U1Alg> = (0..n).map(|i| U1Alg((i as f64 * 0.3).sin())).collect();
        let b = apply(&truth);
        let out = conjugate_gradient(apply, dot, &b, CgOptions::for_size(n)).unwrap();
        for (x, t) in out.x.iter().zip(&truth) {
            assert!((x.0 - t.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let b = vec![U1Alg(0.0); 5];
        let out = conjugate_gradient(|v: &[U1Alg]| v.to_vec(), dot, &b, CgOptions::for_size(5)).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|x| x.0 == 0.0));
    }

    #[test]
    fn floor_stops_on_round_off_rhs() {
        let b = vec![U1Alg(1e-300); 5];
        let opts = CgOptions::for_size(5).with_floor(1.0);
        let out = conjugate_gradient(|v: &[U1Alg]| v.to_vec(), dot, &b, opts).unwrap();
        assert_eq!(out.iterations, 0);
    }
}
