//! Small dense linear-algebra and ODE helpers shared by the monodromy code.

use nalgebra::{DMatrix, SMatrix};

use crate::error::{Error, Result};
use crate::fields::{c, C64};

pub type M2 = SMatrix<C64, 2, 2>;
pub type M4 = SMatrix<C64, 4, 4>;

pub fn m2(a: C64, b: C64, cc: C64, d: C64) -> M2 {
    M2::new(a, b, cc, d)
}

pub fn max_abs<const D: usize>(m: &SMatrix<C64, D, D>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Classical RK4 transfer for φ' = A(x)φ using coefficient samples at half
/// steps: `nodes[i] = A(i·h/2)`, `nodes.len() = 2n+1`.
pub fn rk4_nodes<const D: usize>(nodes: &[SMatrix<C64, D, D>], h: f64) -> SMatrix<C64, D, D> {
    let n = (nodes.len() - 1) / 2;
    let mut phi = SMatrix::<C64, D, D>::identity();
    let hc = c(h, 0.0);
    for i in 0..n {
        let a0 = &nodes[2 * i];
        let am = &nodes[2 * i + 1];
        let a1 = &nodes[2 * i + 2];
        let k1 = a0 * phi;
        let k2 = am * (phi + k1 * (hc * 0.5));
        let k3 = am * (phi + k2 * (hc * 0.5));
        let k4 = a1 * (phi + k3 * hc);
        phi += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * (hc / 6.0);
    }
    phi
}

/// RK4 transfer over `[0, t]` with `n` steps.
pub fn rk4_transfer<const D: usize>(
    a: &(dyn Fn(f64) -> SMatrix<C64, D, D> + Sync),
    t: f64,
    n: usize,
) -> SMatrix<C64, D, D> {
    let h = t / n as f64;
    let nodes: Vec<_> = (0..=2 * n).map(|i| a(i as f64 * h / 2.0)).collect();
    rk4_nodes(&nodes, h)
}

/// Outcome of a Richardson-refined transfer computation.
#[derive(Clone, Debug)]
pub struct Transfer<const D: usize> {
    pub matrix: SMatrix<C64, D, D>,
    pub error_estimate: f64,
    pub steps: usize,
}

/// Step-halving RK4 with Richardson extrapolation until the estimated error
/// falls below `tol·(1 + |Φ|)`.
pub fn richardson_transfer<const D: usize>(
    a: &(dyn Fn(f64) -> SMatrix<C64, D, D> + Sync),
    t: f64,
    n0: usize,
    tol: f64,
    max_levels: usize,
) -> Result<Transfer<D>> {
    let mut n = n0.max(4);
    let mut coarse = rk4_transfer(a, t, n);
    let mut last_err = f64::INFINITY;
    for _ in 0..max_levels {
        n *= 2;
        let fine = rk4_transfer(a, t, n);
        let diff = (fine - coarse) / c(15.0, 0.0);
        let err = max_abs(&diff);
        let scale = 1.0 + max_abs(&fine);
        if err <= tol * scale {
            return Ok(Transfer { matrix: fine + diff, error_estimate: err, steps: n });
        }
        last_err = err / scale;
        coarse = fine;
    }
    Err(Error::numerical(format!(
        "RK4 transfer did not converge after {max_levels} halvings ({n} steps): achieved relative \
         tolerance {last_err:.3e}, requested {tol:.1e}"
    )))
}

/// Roots of μ² − tr·μ + 1 = 0: larger magnitude first, partner = reciprocal.
pub fn unimodular_multipliers(tr: C64) -> (C64, C64) {
    let disc = (tr * tr - c(4.0, 0.0)).sqrt();
    let a = (tr + disc) * 0.5;
    let b = (tr - disc) * 0.5;
    let big = if a.norm() >= b.norm() { a } else { b };
    (big, big.inv())
}

/// Eigenvalues of a 2×2 complex matrix.
pub fn eig2(m: &M2) -> [C64; 2] {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m.determinant();
    let disc = (tr * tr * 0.25 - det).sqrt();
    [tr * 0.5 + disc, tr * 0.5 - disc]
}

/// Eigenvalues of a general complex square matrix via the complex Schur form.
pub fn eigenvalues(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    let s = m.clone().schur();
    let (_, t) = s.unpack();
    let v: Vec<C64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("Schur decomposition produced non-finite eigenvalues"));
    }
    Ok(v)
}

/// Distance between two equal-size multisets under optimal matching
/// (maximum pairwise distance of the best permutation).
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let d = (0..n).map(|i| (a[i] - b[p[i]]).norm()).fold(0.0, f64::max);
        if d < best {
            best = d;
        }
    });
    best
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_system_is_exponential() {
        let a = M2::new(c(0.0, -1.0), c(0.4, 0.0), c(-0.4, 0.0), c(0.0, 1.0));
        let f = move |_x: f64| a;
        let t = richardson_transfer::<2>(&f, 2.0, 32, 1e-13, 10).unwrap();
        let ev = eig2(&a);
        let tr = (ev[0] * 2.0).exp() + (ev[1] * 2.0).exp();
        assert!((t.matrix.trace() - tr).norm() < 1e-11);
    }

    #[test]
    fn multiplier_product() {
        let (a, b) = unimodular_multipliers(c(0.3, -2.0));
        assert!((a * b - c(1.0, 0.0)).norm() < 1e-15);
        assert!(a.norm() >= b.norm());
    }

    #[test]
    fn schur_eigenvalues() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 1.0), c(0.0, 0.0), c(-3.0, 0.5)],
        );
        let mut e = eigenvalues(&m).unwrap();
        e.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((e[0] - c(-3.0, 0.5)).norm() < 1e-12);
        assert!((e[1] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matching_distance() {
        let a = [c(1.0, 0.0), c(0.0, 1.0), c(2.0, 2.0)];
        let b = [c(2.0, 2.0), c(1.0, 0.0), c(0.0, 1.0 + 1e-3)];
        assert!((multiset_distance(&a, &b) - 1e-3).abs() < 1e-12);
    }
}
