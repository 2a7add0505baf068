//! Lax pairs of integrable tori with y-independent data: the two sinh-Gordon
//! pencils of CMC tori, the 4×4 isothermic pencil, their monodromies along the
//! real period and the maps between their Floquet functions and Dirac ones.
//!
//! A connection is written φ_z = 𝐔(λ)φ, φ_z̄ = 𝐕(λ)φ. For coefficients that
//! depend on x only, ∂_z = ∂_z̄ = ½∂_x on the coefficients, the x-system is
//! φ_x = (𝐔 + 𝐕)φ and the y-system is φ_y = i(𝐔 − 𝐕)φ.

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{c, PeriodicField, C64, I};
use crate::floquet1d::{Monodromy1D, Potential1D};
use crate::linalg::{eig2, eigenvalues, multiset_distance, richardson_transfer, Transfer};
use crate::series::{quasiperiodic_derivative, Series1D};
use crate::surface::{RevolutionTorus, SurfaceData, WeierstrassSpinor};

/// Relative Codazzi defect accepted by [`LaxConnection::isothermic`].
pub const CODAZZI_TOL: f64 = 1e-8;

/// Absolute residual accepted for a sinh-Gordon field.
pub const SINH_GORDON_TOL: f64 = 1e-8;

/// y-independent solution of u_zz̄ + sinh u = 0, i.e. u_xx = −4 sinh u.
#[derive(Clone, Debug)]
pub struct SinhGordonField {
    pub period: f64,
    pub samples: Vec<f64>,
    pub residual: f64,
}

fn pendulum(u: f64, v: f64, x: f64, steps: usize) -> (f64, f64) {
    let h = x / steps as f64;
    let f = |u: f64, v: f64| (v, -4.0 * u.sinh());
    let (mut u, mut v) = (u, v);
    for _ in 0..steps {
        let k1 = f(u, v);
        let k2 = f(u + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = f(u + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = f(u + h * k3.0, v + h * k3.1);
        u += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (u, v)
}

impl SinhGordonField {
    /// Periodic solution with u(0) = amplitude, u'(0) = 0. The half period is
    /// the first return of u' to zero, located by Newton on the shooting map.
    pub fn periodic(amplitude: f64, n: usize) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0 && amplitude <= 8.0) {
            return Err(Error::invalid(format!("amplitude must lie in (0, 8], got {amplitude}")));
        }
        if n < 8 {
            return Err(Error::invalid("need at least 8 samples"));
        }
        let scale = amplitude.cosh().sqrt();
        let h = 1e-3 / scale;
        let (mut u, mut v) = pendulum(amplitude, 0.0, h, 1);
        let mut x = h;
        while v < 0.0 {
            (u, v) = pendulum(u, v, h, 1);
            x += h;
            if x > 100.0 {
                return Err(Error::numerical("no half period found while shooting"));
            }
        }
        let hf = 1e-4 / scale;
        let steps = |x: f64| ((x / hf).ceil() as usize).max(16);
        let mut converged = false;
        for _ in 0..30 {
            let (u, v) = pendulum(amplitude, 0.0, x, steps(x));
            let dx = v / (4.0 * u.sinh());
            x += dx;
            if dx.abs() < 1e-14 * x {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numerical("shooting for the half period did not converge"));
        }
        let period = 2.0 * x;
        let sub = ((period / (n as f64 * hf)).ceil() as usize).max(1);
        let dx = period / n as f64;
        let mut samples = Vec::with_capacity(n);
        let (mut u, mut v) = (amplitude, 0.0);
        for _ in 0..n {
            samples.push(u);
            (u, v) = pendulum(u, v, dx, sub);
        }
        Self::from_samples(samples, period)
    }

    pub fn vacuum(period: f64, n: usize) -> Result<Self> {
        Self::from_samples(vec![0.0; n], period)
    }

    pub fn from_samples(samples: Vec<f64>, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid(format!("period must be positive, got {period}")));
        }
        if samples.len() < 4 || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sinh-Gordon samples".into()));
        }
        let s = Series1D::from_real(&samples, period);
        let uxx = s.derivative(2);
        let residual = samples.iter().zip(&uxx).map(|(u, d)| (0.25 * d.re + u.sinh()).abs()).fold(0.0, f64::max);
        Ok(SinhGordonField { period, samples, residual })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.samples.iter().map(|u| 0.5 * u).collect()
    }

    pub fn is_accepted(&self) -> bool {
        self.residual < SINH_GORDON_TOL
    }

    /// Energy ½u'² + 4cosh u at the samples (constant along a solution).
    pub fn energy(&self) -> Vec<f64> {
        let d = Series1D::from_real(&self.samples, self.period).derivative(1);
        self.samples.iter().zip(&d).map(|(u, v)| 0.5 * v.re * v.re + 4.0 * u.cosh()).collect()
    }
}

/// Isothermic data (α, k₁, k₂) depending on x only, sampled over one period.
#[derive(Clone, Debug)]
pub struct IsothermicData {
    pub period: f64,
    pub alpha: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
}

impl IsothermicData {
    pub fn new(alpha: Vec<f64>, k1: Vec<f64>, k2: Vec<f64>, period: f64) -> Result<Self> {
        if alpha.len() != k1.len() || alpha.len() != k2.len() || alpha.len() < 4 {
            return Err(Error::invalid("α, k₁, k₂ need equal lengths of at least 4"));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        if alpha.iter().chain(&k1).chain(&k2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("isothermic data".into()));
        }
        Ok(IsothermicData { period, alpha, k1, k2 })
    }

    /// Closed-form data of the torus of revolution: e^α = ρ, k₁ = 1/r along
    /// the profile, k₂ = cos θ/ρ along the parallels.
    pub fn revolution(t: &RevolutionTorus, n: usize) -> Result<Self> {
        let p = t.period();
        let xs = (0..n).map(|j| p * j as f64 / n as f64);
        let alpha = xs.clone().map(|x| t.rho(x).ln()).collect();
        let k1 = vec![1.0 / t.r; n];
        let k2 = xs.map(|x| t.cos_theta(x) / t.rho(x)).collect();
        Self::new(alpha, k1, k2, p)
    }

    /// First row of numerically computed fundamental forms. The data must
    /// not depend on y.
    pub fn from_surface(sd: &SurfaceData, tol: f64) -> Result<Self> {
        let g = *sd.exp_alpha.grid();
        let (kx, ky) = sd.coordinate_curvatures();
        let mut drift = 0.0f64;
        for f in [&sd.exp_alpha, &kx, &ky] {
            for j in 0..g.n1 {
                for k in 0..g.n2 {
                    drift = drift.max((f.at(j, k) - f.at(j, 0)).norm());
                }
            }
        }
        if drift > tol {
            return Err(Error::precondition(format!("surface data depend on y (variation {drift:.3e})")));
        }
        let period = g.lattice.gamma1.norm();
        if g.lattice.gamma1.im.abs() > 1e-12 * period {
            return Err(Error::precondition("first period must be real"));
        }
        let row = |f: &PeriodicField| (0..g.n1).map(|j| f.at(j, 0).re).collect::<Vec<_>>();
        let alpha = row(&sd.exp_alpha).into_iter().map(f64::ln).collect();
        Self::new(alpha, row(&kx), row(&ky), period)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// (max |k₂ₓ − (k₁−k₂)αₓ|, max |αₓₓ + k₁k₂e^{2α}|), both relative to the
    /// curvature scale.
    pub fn codazzi_residuals(&self) -> (f64, f64) {
        let ax = Series1D::from_real(&self.alpha, self.period).derivative(1);
        let axx = Series1D::from_real(&self.alpha, self.period).derivative(2);
        let k2x = Series1D::from_real(&self.k2, self.period).derivative(1);
        let scale = self.k1.iter().chain(&self.k2).fold(1.0f64, |a, v| a.max(v.abs()));
        let mut r1 = 0.0f64;
        let mut r2 = 0.0f64;
        for j in 0..self.len() {
            r1 = r1.max((k2x[j].re - (self.k1[j] - self.k2[j]) * ax[j].re).abs());
            let e2 = (2.0 * self.alpha[j]).exp();
            r2 = r2.max((axx[j].re + self.k1[j] * self.k2[j] * e2).abs());
        }
        (r1 / scale, r2 / scale)
    }

    /// Dirac potential U = (k₁+k₂)e^α/4.
    pub fn potential(&self) -> Vec<f64> {
        (0..self.len()).map(|j| (self.k1[j] + self.k2[j]) * self.alpha[j].exp() / 4.0).collect()
    }

    /// Potential of the dual surface U* = (k₂−k₁)e^α/4.
    pub fn dual_potential(&self) -> Vec<f64> {
        (0..self.len()).map(|j| (self.k2[j] - self.k1[j]) * self.alpha[j].exp() / 4.0).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaxKind {
    /// 𝐔 = [[α_z, −λ²e^{−α}/2], [−e^α/2, 0]], 𝐕 = [[0, e^α/2], [λ⁻²e^{−α}/2, α_z̄]].
    CmcGeom,
    /// 𝐔 = ½[[−u_z, −λ], [−λ, u_z]], 𝐕 = (2λ)⁻¹[[0, e^{−u}], [e^u, 0]].
    CmcZcc,
    /// The 4×4 pencil Û = [[𝐔, λJ⁻], [λJ⁺, 𝐔 + α_zE]], V̂ = [[𝐕, λJ⁺], [λJ⁻, 𝐕 + α_z̄E]].
    Isothermic4x4,
}

impl LaxKind {
    pub fn dim(self) -> usize {
        match self {
            LaxKind::Isothermic4x4 => 4,
            _ => 2,
        }
    }

    fn singular_at_zero(self) -> bool {
        !matches!(self, LaxKind::Isothermic4x4)
    }

    /// Diagonal of the involution relating λ and −λ.
    pub fn sigma(self) -> Vec<f64> {
        match self {
            LaxKind::CmcGeom => vec![1.0, 1.0],
            LaxKind::CmcZcc => vec![1.0, -1.0],
            LaxKind::Isothermic4x4 => vec![1.0, 1.0, -1.0, -1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Coeff {
    alpha: f64,
    az: C64,
    azb: C64,
    k1: f64,
    k2: f64,
}

/// Lax connection with x-only coefficients; λ is supplied at evaluation.
#[derive(Clone, Debug)]
pub struct LaxConnection {
    pub kind: LaxKind,
    pub period: f64,
    alpha: Series1D,
    alpha_x: Series1D,
    k1: Series1D,
    k2: Series1D,
}

impl LaxConnection {
    fn build(kind: LaxKind, period: f64, alpha: &[f64], k1: &[f64], k2: &[f64]) -> Self {
        let a = Series1D::from_real(alpha, period);
        let ax = Series1D::new(a.derivative(1), period);
        LaxConnection {
            kind,
            period,
            alpha: a,
            alpha_x: ax,
            k1: Series1D::from_real(k1, period),
            k2: Series1D::from_real(k2, period),
        }
    }

    /// Geometric CMC pencil with α = u/2.
    pub fn cmc_geom(u: &SinhGordonField) -> Self {
        let z = vec![0.0; u.len()];
        Self::build(LaxKind::CmcGeom, u.period, &u.alpha(), &z, &z)
    }

    /// Zero-curvature form of the sinh-Gordon equation.
    pub fn cmc_zcc(u: &SinhGordonField) -> Self {
        let z = vec![0.0; u.len()];
        Self::build(LaxKind::CmcZcc, u.period, &u.alpha(), &z, &z)
    }

    /// Isothermic pencil; rejects data violating k₂ₓ = (k₁−k₂)αₓ.
    pub fn isothermic(d: &IsothermicData) -> Result<Self> {
        let (r, _) = d.codazzi_residuals();
        if r > CODAZZI_TOL {
            return Err(Error::precondition(format!(
                "isothermic Codazzi residual {r:.3e} exceeds {CODAZZI_TOL:.0e}"
            )));
        }
        Ok(Self::build(LaxKind::Isothermic4x4, d.period, &d.alpha, &d.k1, &d.k2))
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Rough size of the x-coefficient times the period, used to pick RK4 steps.
    fn step_scale(&self, lambda: C64) -> f64 {
        let l = lambda.norm();
        let pole = match self.kind {
            LaxKind::CmcGeom => l.powi(2) + l.powi(-2),
            LaxKind::CmcZcc => l + 1.0 / l,
            LaxKind::Isothermic4x4 => l,
        };
        let ea = self.alpha.samples.iter().map(|a| a.re.abs().exp()).fold(1.0, f64::max);
        let k = self.k1.samples.iter().chain(&self.k2.samples).map(|v| v.norm()).fold(1.0, f64::max);
        (pole.min(1e6) + 2.0 * ea * k) * self.period
    }

    pub fn samples(&self) -> usize {
        self.alpha.len()
    }

    fn check_lambda(&self, lambda: C64) -> Result<()> {
        if !lambda.is_finite() {
            return Err(Error::invalid("spectral parameter must be finite"));
        }
        if self.kind.singular_at_zero() && lambda.norm() < 1e-300 {
            return Err(Error::invalid(format!("λ = 0 is a pole of the {:?} pencil", self.kind)));
        }
        Ok(())
    }

    fn coeff_at(&self, x: f64) -> Coeff {
        let ax = self.alpha_x.eval(x).re;
        Coeff {
            alpha: self.alpha.eval(x).re,
            az: c(0.5 * ax, 0.0),
            azb: c(0.5 * ax, 0.0),
            k1: self.k1.eval(x).re,
            k2: self.k2.eval(x).re,
        }
    }

    fn coeff_sample(&self, j: usize) -> Coeff {
        let ax = self.alpha_x.samples[j].re;
        Coeff {
            alpha: self.alpha.samples[j].re,
            az: c(0.5 * ax, 0.0),
            azb: c(0.5 * ax, 0.0),
            k1: self.k1.samples[j].re,
            k2: self.k2.samples[j].re,
        }
    }

    fn matrices(&self, lambda: C64, k: Coeff) -> (DMatrix<C64>, DMatrix<C64>) {
        let (az, azb) = (k.az, k.azb);
        let ea = k.alpha.exp();
        match self.kind {
            LaxKind::CmcGeom => {
                let l2 = lambda * lambda;
                let u = DMatrix::from_row_slice(2, 2, &[az, -l2 * 0.5 / ea, c(-0.5 * ea, 0.0), c(0.0, 0.0)]);
                let v = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5 * ea, 0.0), l2.inv() * 0.5 / ea, azb]);
                (u, v)
            }
            LaxKind::CmcZcc => {
                // u = 2α
                let uz = az * 2.0;
                let e = ea * ea;
                let u = DMatrix::from_row_slice(2, 2, &[-uz * 0.5, -lambda * 0.5, -lambda * 0.5, uz * 0.5]);
                let il = lambda.inv() * 0.5;
                let v = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), il / e, il * e, c(0.0, 0.0)]);
                (u, v)
            }
            LaxKind::Isothermic4x4 => {
                let p = (k.k1 + k.k2) * ea / 4.0;
                let m = (k.k1 - k.k2) * ea / 4.0;
                let mut u = DMatrix::zeros(4, 4);
                let mut v = DMatrix::zeros(4, 4);
                for b in 0..2 {
                    let o = 2 * b;
                    u[(o, o)] = az;
                    u[(o, o + 1)] = c(m, 0.0);
                    u[(o + 1, o)] = c(-p, 0.0);
                    v[(o, o + 1)] = c(p, 0.0);
                    v[(o + 1, o)] = c(-m, 0.0);
                    v[(o + 1, o + 1)] = azb;
                }
                for i in 2..4 {
                    u[(i, i)] += az;
                    v[(i, i)] += azb;
                }
                // J⁻ in the upper right of Û, J⁺ in the lower left, swapped in V̂
                u[(1, 2)] = lambda;
                u[(2, 1)] = lambda;
                v[(0, 3)] = lambda;
                v[(3, 0)] = lambda;
                (u, v)
            }
        }
    }

    /// (𝐔(λ), 𝐕(λ)) at position x.
    pub fn z_zbar_matrices(&self, lambda: C64, x: f64) -> (DMatrix<C64>, DMatrix<C64>) {
        self.matrices(lambda, self.coeff_at(x))
    }

    /// Coefficient of the x-system φ_x = (𝐔 + 𝐕)φ.
    pub fn x_matrix(&self, lambda: C64, x: f64) -> DMatrix<C64> {
        let (u, v) = self.z_zbar_matrices(lambda, x);
        u + v
    }

    /// Coefficient of the y-system φ_y = i(𝐔 − 𝐕)φ.
    pub fn y_matrix(&self, lambda: C64, x: f64) -> DMatrix<C64> {
        let (u, v) = self.z_zbar_matrices(lambda, x);
        (u - v) * I
    }
}

/// max|𝐔_z̄ − 𝐕_z + [𝐔, 𝐕]| over the coefficient samples.
pub fn zero_curvature_residual(conn: &LaxConnection, lambda: C64) -> Result<f64> {
    conn.check_lambda(lambda)?;
    let n = conn.samples();
    let d = conn.dim();
    let mats: Vec<_> = (0..n).map(|j| conn.matrices(lambda, conn.coeff_sample(j))).collect();
    // entry-wise ½∂ₓ applied to 𝐔 − 𝐕
    let mut deriv = vec![DMatrix::<C64>::zeros(d, d); n];
    for a in 0..d {
        for b in 0..d {
            let s: Vec<C64> = mats.iter().map(|(u, v)| u[(a, b)] - v[(a, b)]).collect();
            let ds = Series1D::new(s, conn.period).derivative(1);
            for j in 0..n {
                deriv[j][(a, b)] = ds[j] * 0.5;
            }
        }
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        let (u, v) = &mats[j];
        let r = &deriv[j] + u * v - v * u;
        worst = worst.max(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Transfer matrix of the x-system over one period.
#[derive(Clone, Debug)]
pub struct LaxMonodromy {
    pub kind: LaxKind,
    pub lambda: C64,
    pub matrix: DMatrix<C64>,
    pub eigenvalues: Vec<C64>,
    /// det of the computed transfer matrix.
    pub det: C64,
    /// exp(∫₀ᵀ tr(𝐔 + 𝐕) dx) from quadrature of the trace.
    pub liouville: C64,
    /// Condition number of the eigenvector matrix (∞ if defective).
    pub eigvec_condition: f64,
    pub error_estimate: f64,
    pub steps: usize,
}

pub type Monodromy4x4 = LaxMonodromy;

fn fixed<const D: usize>(conn: &LaxConnection, lambda: C64) -> Result<(DMatrix<C64>, f64, usize)> {
    let a = |x: f64| {
        let m = conn.x_matrix(lambda, x);
        SMatrix::<C64, D, D>::from_fn(|i, j| m[(i, j)])
    };
    let scale = conn.step_scale(lambda);
    let n0 = ((8.0 * scale).ceil() as usize).max(32).next_power_of_two();
    let Transfer { matrix, error_estimate, steps } = richardson_transfer::<D>(&a, conn.period, n0, 1e-13, 10)?;
    Ok((DMatrix::from_fn(D, D, |i, j| matrix[(i, j)]), error_estimate, steps))
}

fn null_vector(m: &DMatrix<C64>) -> DVector<C64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let (k, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    vt.row(k).adjoint()
}

/// Orthonormal basis of the right singular vectors for the k smallest singular values.
fn null_space(m: &DMatrix<C64>, k: usize) -> DMatrix<C64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut q = DMatrix::<C64>::zeros(m.ncols(), k);
    for (col, &i) in idx[..k].iter().enumerate() {
        q.set_column(col, &vt.row(i).adjoint());
    }
    q
}

fn condition(m: &DMatrix<C64>) -> f64 {
    let s = m.clone().singular_values();
    let mx = s.iter().cloned().fold(0.0, f64::max);
    let mn = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if mn == 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

fn eigvec_condition(m: &DMatrix<C64>, ev: &[C64]) -> f64 {
    let d = m.nrows();
    let mut v = DMatrix::<C64>::zeros(d, d);
    for (k, &mu) in ev.iter().enumerate() {
        let shifted = m - DMatrix::<C64>::identity(d, d) * mu;
        v.set_column(k, &null_vector(&shifted));
    }
    condition(&v)
}

pub fn monodromy(conn: &LaxConnection, lambda: C64) -> Result<LaxMonodromy> {
    conn.check_lambda(lambda)?;
    let (matrix, error_estimate, steps) = match conn.dim() {
        2 => fixed::<2>(conn, lambda)?,
        4 => fixed::<4>(conn, lambda)?,
        d => return Err(Error::invalid(format!("unsupported dimension {d}"))),
    };
    let eigenvalues = if conn.dim() == 2 {
        let m = SMatrix::<C64, 2, 2>::from_fn(|i, j| matrix[(i, j)]);
        eig2(&m).to_vec()
    } else {
        eigenvalues(&matrix)?
    };
    let n = conn.samples();
    let tr: Vec<C64> = (0..n).map(|j| conn.matrices(lambda, conn.coeff_sample(j))).map(|(u, v)| (u + v).trace()).collect();
    let liouville = Series1D::new(tr, conn.period).integral().exp();
    let eigvec_condition = eigvec_condition(&matrix, &eigenvalues);
    Ok(LaxMonodromy {
        kind: conn.kind,
        lambda,
        det: matrix.determinant(),
        matrix,
        eigenvalues,
        liouville,
        eigvec_condition,
        error_estimate,
        steps,
    })
}

/// Monodromy of the zero-curvature sinh-Gordon pencil.
pub fn cmc_monodromy(u: &SinhGordonField, lambda: C64) -> Result<LaxMonodromy> {
    monodromy(&LaxConnection::cmc_zcc(u), lambda)
}

pub fn isothermic_monodromy(conn: &LaxConnection, lambda: C64) -> Result<Monodromy4x4> {
    if conn.kind != LaxKind::Isothermic4x4 {
        return Err(Error::invalid("isothermic monodromy needs the 4×4 pencil"));
    }
    monodromy(conn, lambda)
}

/// Outcome of comparing the monodromies at λ and −λ.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InvolutionCheck {
    /// max|M(−λ) − σM(λ)σ|.
    pub matrix_defect: f64,
    pub set_distance: f64,
    pub eigvec_condition: f64,
}

pub fn sigma_involution(conn: &LaxConnection, lambda: C64) -> Result<InvolutionCheck> {
    let a = monodromy(conn, lambda)?;
    let b = monodromy(conn, -lambda)?;
    let s = conn.kind.sigma();
    let d = conn.dim();
    let conj = DMatrix::from_fn(d, d, |i, j| a.matrix[(i, j)] * (s[i] * s[j]));
    let matrix_defect = (&b.matrix - conj).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(InvolutionCheck {
        matrix_defect,
        set_distance: multiset_distance(&a.eigenvalues, &b.eigenvalues),
        eigvec_condition: a.eigvec_condition.max(b.eigvec_condition),
    })
}

/// Floquet function φ(x, y) = e^{κy}χ(x) with χ(x + T) = μχ(x), sampled at
/// x_j = jT/n.
#[derive(Clone, Debug)]
pub struct FloquetProfile {
    pub period: f64,
    pub mu: C64,
    pub kappa: C64,
    pub samples: Vec<DVector<C64>>,
}

impl FloquetProfile {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |v| v.len())
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn component(&self, i: usize) -> Vec<C64> {
        self.samples.iter().map(|v| v[i]).collect()
    }
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().flat_map(|v| v.iter()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// (φ_z, φ_z̄) = ½(φₓ ∓ iκφ) at the samples.
    pub fn wirtinger(&self) -> (Vec<DVector<C64>>, Vec<DVector<C64>>) {
        let d = self.dim();
        let n = self.len();
        let dx: Vec<Vec<C64>> = (0..d).map(|i| quasiperiodic_derivative(&self.component(i), self.period, self.mu)).collect();
        let mut pz = Vec::with_capacity(n);
        let mut pzb = Vec::with_capacity(n);
        for j in 0..n {
            let phix = DVector::from_fn(d, |i, _| dx[i][j]);
            let iy = &self.samples[j] * (I * self.kappa);
            pz.push((&phix - &iy) * c(0.5, 0.0));
            pzb.push((phix + iy) * c(0.5, 0.0));
        }
        (pz, pzb)
    }
}

fn rk4_samples(conn: &LaxConnection, lambda: C64, n: usize, sub: usize) -> Vec<DMatrix<C64>> {
    let d = conn.dim();
    let h = conn.period / (n * sub) as f64;
    let hc = c(h, 0.0);
    let mut phi = DMatrix::<C64>::identity(d, d);
    let mut out = Vec::with_capacity(n + 1);
    let mut a0 = conn.x_matrix(lambda, 0.0);
    for s in 0..n * sub {
        if s % sub == 0 {
            out.push(phi.clone());
        }
        let x = s as f64 * h;
        let am = conn.x_matrix(lambda, x + 0.5 * h);
        let a1 = conn.x_matrix(lambda, x + h);
        let k1 = &a0 * &phi;
        let k2 = &am * (&phi + &k1 * (hc * 0.5));
        let k3 = &am * (&phi + &k2 * (hc * 0.5));
        let k4 = &a1 * (&phi + &k3 * hc);
        phi += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * (hc / 6.0);
        a0 = a1;
    }
    out.push(phi);
    out
}

/// Fundamental matrix at x_j = jT/n for j = 0..=n, RK4 with Richardson
/// extrapolation across sub-step doubling.
pub fn fundamental_samples(conn: &LaxConnection, lambda: C64, n: usize, tol: f64) -> Result<(Vec<DMatrix<C64>>, f64)> {
    conn.check_lambda(lambda)?;
    if n < 4 {
        return Err(Error::invalid("need at least 4 samples"));
    }
    let scale = conn.step_scale(lambda);
    let mut sub = (((8.0 * scale) / n as f64).ceil() as usize).max(2);
    let mut coarse = rk4_samples(conn, lambda, n, sub);
    let mut err = f64::INFINITY;
    for _ in 0..8 {
        sub *= 2;
        let fine = rk4_samples(conn, lambda, n, sub);
        let mut e = 0.0f64;
        let mut big = 1.0f64;
        let out: Vec<DMatrix<C64>> = fine
            .iter()
            .zip(&coarse)
            .map(|(f, g)| {
                let diff = (f - g) / c(15.0, 0.0);
                e = e.max(diff.iter().map(|z| z.norm()).fold(0.0, f64::max));
                big = big.max(f.iter().map(|z| z.norm()).fold(0.0, f64::max));
                f + diff
            })
            .collect();
        err = e / big;
        if err <= tol {
            return Ok((out, err));
        }
        coarse = fine;
    }
    Err(Error::numerical(format!("fundamental samples did not converge: relative error {err:.3e}")))
}

/// Floquet functions separable in x and y: the vectors c that are
/// eigenvectors of both the y-coefficient at x = 0 and the monodromy.
pub fn floquet_profiles(conn: &LaxConnection, lambda: C64, n: usize) -> Result<Vec<FloquetProfile>> {
    let (phi, _) = fundamental_samples(conn, lambda, n, 1e-12)?;
    let m = &phi[n];
    let b0 = conn.y_matrix(lambda, 0.0);
    let d = conn.dim();
    let kappas = eigenvalues(&b0)?;
    let bscale = b0.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mscale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    // clusters of equal κ; on each κ-eigenspace diagonalize the restricted monodromy
    let mut used = vec![false; d];
    let mut pairs: Vec<(C64, DVector<C64>)> = Vec::with_capacity(d);
    for i in 0..d {
        if used[i] {
            continue;
        }
        let members: Vec<usize> = (i..d).filter(|&j| !used[j] && (kappas[j] - kappas[i]).norm() < 1e-7 * bscale).collect();
        for &j in &members {
            used[j] = true;
        }
        let k = members.len();
        let kappa = members.iter().map(|&j| kappas[j]).sum::<C64>() / k as f64;
        let q = null_space(&(&b0 - DMatrix::<C64>::identity(d, d) * kappa), k);
        let mr = q.adjoint() * m * &q;
        let ev = eigenvalues(&mr)?;
        let distinct = (0..k).all(|a| (0..a).all(|b| (ev[a] - ev[b]).norm() > 1e-8 * mscale));
        for a in 0..k {
            let w = if distinct {
                null_vector(&(&mr - DMatrix::<C64>::identity(k, k) * ev[a]))
            } else {
                DVector::from_fn(k, |r, _| if r == a { c(1.0, 0.0) } else { c(0.0, 0.0) })
            };
            pairs.push((kappa, &q * w));
        }
    }
    let mut out = Vec::with_capacity(d);
    for (kappa, cv) in pairs {
        let mc = m * &cv;
        let mu = cv.dotc(&mc) / cv.dotc(&cv);
        let defect = (&mc - &cv * mu).norm();
        if defect > 1e-7 * mscale {
            return Err(Error::numerical(format!(
                "eigenvector of the y-coefficient is not a monodromy eigenvector (defect {defect:.3e})"
            )));
        }
        let mut samples: Vec<DVector<C64>> = phi[..n].iter().map(|p| p * &cv).collect();
        let s = samples.iter().flat_map(|v| v.iter()).map(|z| z.norm()).fold(0.0, f64::max);
        for v in &mut samples {
            *v /= c(s, 0.0);
        }
        out.push(FloquetProfile { period: conn.period, mu, kappa, samples });
    }
    Ok(out)
}

/// max over samples of |φ_z − 𝐔φ| and |φ_z̄ − 𝐕φ|, relative to max|φ|.
pub fn profile_residual(conn: &LaxConnection, lambda: C64, p: &FloquetProfile) -> Result<f64> {
    conn.check_lambda(lambda)?;
    if p.dim() != conn.dim() {
        return Err(Error::invalid("profile and connection dimensions differ"));
    }
    let (pz, pzb) = p.wirtinger();
    let n = p.len();
    let mut worst = 0.0f64;
    for j in 0..n {
        let (u, v) = conn.z_zbar_matrices(lambda, p.period * j as f64 / n as f64);
        worst = worst.max((&pz[j] - u * &p.samples[j]).map(|z| z.norm()).max()).max((&pzb[j] - v * &p.samples[j]).map(|z| z.norm()).max());
    }
    Ok(worst / p.max_abs().max(1e-300))
}

/// Image of a sinh-Gordon Floquet function under the map to the geometric pencil.
#[derive(Clone, Debug)]
pub struct PropMap {
    pub psi: FloquetProfile,
    /// ψ₁ vanishes identically (λ = 0).
    pub degenerate: bool,
    /// Residual of ψ in the geometric pencil (absent when λ = 0).
    pub target_residual: Option<f64>,
}

/// ψ = (λφ₂, e^αφ₁) for a Floquet function φ of the zero-curvature pencil.
pub fn cmc_prop_map(phi: &FloquetProfile, u: &SinhGordonField, lambda: C64) -> Result<PropMap> {
    if phi.dim() != 2 {
        return Err(Error::invalid("expected a 2-component profile"));
    }
    let n = phi.len();
    let geom = LaxConnection::cmc_geom(u);
    let samples = (0..n)
        .map(|j| {
            let ea = geom.alpha.eval(phi.period * j as f64 / n as f64).re.exp();
            DVector::from_vec(vec![lambda * phi.samples[j][1], phi.samples[j][0] * ea])
        })
        .collect();
    let psi = FloquetProfile { period: phi.period, mu: phi.mu, kappa: phi.kappa, samples };
    let first = psi.component(0).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let degenerate = first <= 1e-14 * psi.max_abs();
    let target_residual = if lambda.norm() == 0.0 { None } else { Some(profile_residual(&geom, lambda, &psi)?) };
    Ok(PropMap { psi, degenerate, target_residual })
}

/// Two Dirac Floquet functions extracted from a 4×4 isothermic one.
#[derive(Clone, Debug)]
pub struct DiracPair {
    pub psi: FloquetProfile,
    pub psi_star: FloquetProfile,
    pub potential: Vec<f64>,
    pub dual_potential: Vec<f64>,
    pub residual: f64,
    pub residual_star: f64,
}

/// max(|ψ₂_z + Uψ₁|, |−ψ₁_z̄ + Uψ₂|) relative to max|ψ|.
pub fn dirac_profile_residual(psi: &FloquetProfile, potential: &[f64]) -> Result<f64> {
    if psi.dim() != 2 || potential.len() != psi.len() {
        return Err(Error::invalid("profile and potential do not match"));
    }
    let (pz, pzb) = psi.wirtinger();
    let mut worst = 0.0f64;
    for j in 0..psi.len() {
        let s = &psi.samples[j];
        worst = worst.max((pz[j][1] + s[0] * potential[j]).norm()).max((s[1] * potential[j] - pzb[j][0]).norm());
    }
    Ok(worst / psi.max_abs().max(1e-300))
}

fn resample(d: &IsothermicData, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    if d.len() == n {
        return (d.alpha.clone(), d.potential(), d.dual_potential());
    }
    let ser = |v: &[f64]| Series1D::from_real(v, d.period);
    let (a, u, us) = (ser(&d.alpha), ser(&d.potential()), ser(&d.dual_potential()));
    let x = |j: usize| d.period * j as f64 / n as f64;
    (
        (0..n).map(|j| a.eval(x(j)).re).collect(),
        (0..n).map(|j| u.eval(x(j)).re).collect(),
        (0..n).map(|j| us.eval(x(j)).re).collect(),
    )
}

/// ψ = e^{−α}(φ₃, φ₄) with U = (k₁+k₂)e^α/4 and ψ* = e^{−α}(φ₂, φ₁) with U* = (k₂−k₁)e^α/4.
pub fn extract_dirac_pair(phi: &FloquetProfile, data: &IsothermicData) -> Result<DiracPair> {
    if phi.dim() != 4 {
        return Err(Error::invalid("expected a 4-component profile"));
    }
    let n = phi.len();
    let (alpha, potential, dual_potential) = resample(data, n);
    if alpha.iter().any(|a| !a.exp().is_normal()) {
        return Err(Error::precondition("e^α vanishes or overflows"));
    }
    let pick = |i: usize, k: usize| -> FloquetProfile {
        let samples = (0..n).map(|j| DVector::from_vec(vec![phi.samples[j][i], phi.samples[j][k]]) / c(alpha[j].exp(), 0.0)).collect();
        FloquetProfile { period: phi.period, mu: phi.mu, kappa: phi.kappa, samples }
    };
    let psi = pick(2, 3);
    let psi_star = pick(1, 0);
    let residual = dirac_profile_residual(&psi, &potential)?;
    let residual_star = dirac_profile_residual(&psi_star, &dual_potential)?;
    Ok(DiracPair { psi, psi_star, potential, dual_potential, residual, residual_star })
}

/// Relative distance from the multiplier of ψ to the nearest Zakharov–Shabat
/// multiplier of the potential at λ = κ; a Dirac Floquet function with
/// ψ_y = κψ solves ψₓ = [[−iκ, 2U], [−2U, iκ]]ψ.
pub fn zs_multiplier_defect(psi: &FloquetProfile, potential: &[f64]) -> Result<f64> {
    let m = Monodromy1D::new(Potential1D::new(potential.to_vec(), psi.period)?);
    let t = m.monodromy(psi.kappa)?;
    let ev = eig2(&t);
    Ok(ev.iter().map(|e| (e - psi.mu).norm()).fold(f64::INFINITY, f64::min) / psi.mu.norm())
}

/// Lift of a surface spinor to the 4×4 pencil at λ = 0:
/// φ̂ = (ψ₁, ψ₂, e^αψ₁, e^αψ₂).
pub fn lift_spinor(psi: &WeierstrassSpinor) -> [PeriodicField; 4] {
    let ea = psi.exp_alpha();
    [psi.psi1.clone(), psi.psi2.clone(), psi.psi1.mul(&ea), psi.psi2.mul(&ea)]
}

/// The two extractions of a 2D 4-component field.
pub fn extract_dirac_fields(phi: &[PeriodicField; 4], exp_alpha: &PeriodicField) -> ([PeriodicField; 2], [PeriodicField; 2]) {
    let inv = exp_alpha.map(|e| e.inv());
    ([phi[2].mul(&inv), phi[3].mul(&inv)], [phi[1].mul(&inv), phi[0].mul(&inv)])
}

/// Residual of a 2D field against the isothermic pencil built from surface
/// data (any y-dependence allowed), relative to max|φ|.
pub fn isothermic_field_residual(sd: &SurfaceData, lambda: C64, phi: &[PeriodicField; 4]) -> Result<f64> {
    let (kx, ky) = sd.coordinate_curvatures();
    let alpha = sd.alpha();
    let az = alpha.dz()?;
    let azb = alpha.dzbar()?;
    let dz: Vec<PeriodicField> = phi.iter().map(|f| f.dz()).collect::<Result<_>>()?;
    let dzb: Vec<PeriodicField> = phi.iter().map(|f| f.dzbar()).collect::<Result<_>>()?;
    let conn = LaxConnection::build(LaxKind::Isothermic4x4, 1.0, &[0.0], &[0.0], &[0.0]);
    let mut worst = 0.0f64;
    let mut big = 0.0f64;
    for i in 0..sd.exp_alpha.values().len() {
        let k = Coeff { alpha: alpha.values()[i].re, az: az.values()[i], azb: azb.values()[i], k1: kx.values()[i].re, k2: ky.values()[i].re };
        let (u, v) = conn.matrices(lambda, k);
        let p = DVector::from_fn(4, |r, _| phi[r].values()[i]);
        let pz = DVector::from_fn(4, |r, _| dz[r].values()[i]);
        let pzb = DVector::from_fn(4, |r, _| dzb[r].values()[i]);
        worst = worst.max((pz - &u * &p).map(|z| z.norm()).max()).max((pzb - &v * &p).map(|z| z.norm()).max());
        big = big.max(p.map(|z| z.norm()).max());
    }
    Ok(worst / big.max(1e-300))
}

/// Zero-curvature residual sampled along a path of λ values.
pub fn residual_curve(conn: &LaxConnection, lambdas: &[C64]) -> Result<Vec<(C64, f64)>> {
    lambdas.iter().map(|&l| Ok((l, zero_curvature_residual(conn, l)?))).collect()
}

/// Largest Dirac residual of the two extractions over all separable Floquet
/// functions of the 4×4 pencil, for each λ.
pub fn extraction_residual_curve(data: &IsothermicData, lambdas: &[C64], n: usize) -> Result<Vec<(C64, f64)>> {
    let conn = LaxConnection::isothermic(data)?;
    lambdas
        .iter()
        .map(|&l| {
            let mut worst = 0.0f64;
            for phi in floquet_profiles(&conn, l, n)? {
                let p = extract_dirac_pair(&phi, data)?;
                worst = worst.max(p.residual).max(p.residual_star);
            }
            Ok((l, worst))
        })
        .collect()
}
