//! Recovery of the collar trace of u₁ from Λ_q − Λ₀ by solving
//! (1 + h⁴ S_φ (Λ_q − Λ₀)) f = γu₀.

use std::cell::RefCell;

use num_complex::Complex64 as C64;

use crate::carleman::{BoundaryOperator, PerturbationOperator};
use crate::error::{Error, Result};
use crate::forward::CollarJet;
use crate::linalg::norm2_c;

thread_local! {
    static GUARD: RefCell<Option<Vec<&'static str>>> = const { RefCell::new(None) };
}

/// Records access to a guarded resource (the potential, the u₁ construction).
pub fn touch(resource: &'static str) {
    GUARD.with(|g| {
        if let Some(log) = g.borrow_mut().as_mut() {
            log.push(resource);
        }
    });
}

/// Runs `f` while recording guarded accesses on this thread.
pub fn guarded<R>(f: impl FnOnce() -> R) -> (R, Vec<&'static str>) {
    let previous = GUARD.with(|g| g.borrow_mut().replace(Vec::new()));
    let out = f();
    let log = GUARD.with(|g| std::mem::replace(&mut *g.borrow_mut(), previous)).unwrap_or_default();
    (out, log)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Direct,
    Neumann { tol: f64, max_terms: usize },
}

#[derive(Clone, Debug)]
pub struct Recovered {
    pub jet: CollarJet,
    /// Neumann terms used (0 for the direct solve).
    pub terms: usize,
}

/// Partial sums Σ (−P)^k b until the newest term drops below `tol`·‖sum‖.
pub fn neumann_series_solve<F>(pert: F, rhs: &[C64], tol: f64, max_terms: usize) -> Result<(Vec<C64>, usize)>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let mut sum = rhs.to_vec();
    let mut term = rhs.to_vec();
    let mut prev = norm2_c(rhs);
    if prev == 0.0 {
        return Ok((sum, 1));
    }
    let mut growth = 0;
    for k in 1..max_terms {
        term = pert(&term).into_iter().map(|v| -v).collect();
        let n = norm2_c(&term);
        sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
        if n <= tol * norm2_c(&sum) {
            return Ok((sum, if n == 0.0 { k } else { k + 1 }));
        }
        if n >= prev {
            growth += 1;
            if growth >= 3 || n > 1e3 * norm2_c(rhs) {
                return Err(Error::Divergence { terms: k + 1, last: n });
            }
        } else {
            growth = 0;
        }
        prev = n;
    }
    Err(Error::NoConvergence(max_terms))
}

/// Solves K f = γu₀ with the dense boundary operator.
pub fn recover_trace(k: &BoundaryOperator, u0_jet: &CollarJet, method: Method) -> Result<Recovered> {
    if u0_jet.len() != k.dim() {
        return Err(Error::Dimension { expected: k.dim(), got: u0_jet.len() });
    }
    match method {
        Method::Direct => {
            let f = k.solve(&u0_jet.values);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Linear("boundary operator is singular".into()));
            }
            Ok(Recovered { jet: CollarJet { values: f }, terms: 0 })
        }
        Method::Neumann { tol, max_terms } => {
            if k.spectral_radius >= 1.0 {
                return Err(Error::Divergence { terms: 0, last: k.spectral_radius });
            }
            let (f, terms) = neumann_series_solve(|x| k.perturbation(x), &u0_jet.values, tol, max_terms)?;
            Ok(Recovered { jet: CollarJet { values: f }, terms })
        }
    }
}

/// Neumann-series recovery with the matrix-free perturbation (no dense single layer).
pub fn recover_trace_matrix_free(op: &PerturbationOperator, u0_jet: &CollarJet, tol: f64, max_terms: usize) -> Result<Recovered> {
    let (f, terms) = neumann_series_solve(|x| op.apply(x), &u0_jet.values, tol, max_terms)?;
    Ok(Recovered { jet: CollarJet { values: f }, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::random_vec_c;

    #[test]
    fn zero_perturbation_returns_rhs_after_one_term() {
        let b = random_vec_c(20, 1);
        let (x, terms) = neumann_series_solve(|v| vec![C64::new(0.0, 0.0); v.len()], &b, 1e-12, 30).unwrap();
        assert_eq!(x, b);
        assert_eq!(terms, 1);
    }

    #[test]
    fn half_contraction_converges_within_thirty_terms() {
        let b = random_vec_c(20, 2);
        let (x, terms) = neumann_series_solve(|v| v.iter().map(|z| z * 0.5).collect(), &b, 1e-8, 30).unwrap();
        assert!(terms <= 30);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi * 1.5 - bi).norm() < 1e-7 * bi.norm().max(1.0));
        }
    }

    #[test]
    fn expanding_perturbation_is_rejected() {
        let b = random_vec_c(20, 3);
        let r = neumann_series_solve(|v| v.iter().map(|z| z * 1.2).collect(), &b, 1e-9, 30);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    #[test]
    fn guard_records_touches_only_inside() {
        touch("outside");
        let (_, log) = guarded(|| {
            touch("potential");
        });
        assert_eq!(log, vec!["potential"]);
        let (_, log) = guarded(|| ());
        assert!(log.is_empty());
    }
}
