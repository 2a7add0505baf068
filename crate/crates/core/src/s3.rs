//! Surfaces in S³ = SU(2): spinor extraction, the S³ Dirac operator, the
//! Clifford torus and its spectrum, the Hitchin family and its gauge to the
//! Dirac operator, stereographic projection and Möbius transformations of R³.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix3, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{c, Character, FundamentalGrid, Lattice, PeriodicField, Sign, C64, I};
use crate::floquet1d::{
    branch_points, kruskal_invariants, miura, MiuraConvention, Monodromy1D, Potential1D, Rect, RootSearch,
};
use crate::floquet2d::{spectrum_scan, QuasimomentumPoint, ScanOptions, Slice, TruncatedPencil};
use crate::linalg::{m2, max_abs, multiset_distance, richardson_transfer, rk4_transfer, unimodular_multipliers, M2};
use crate::series::Series1D;
use crate::surface::{fundamental_forms, spinor_roots, ImmersionR3, SurfaceData, V3, CONFORMAL_TOL, ISOTHERMIC_TOL};

/// Tolerance on f·f† = 1 and det f = 1.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Relative tolerance on Z₁² + Z₂² + Z₃² = 0.
pub const S3_CONFORMAL_TOL: f64 = 1e-8;
/// Relative tolerance on the harmonic-map equation for the Hitchin family.
pub const HARMONIC_TOL: f64 = 1e-8;
/// Inversion centres closer than this fraction of the surface diameter are rejected.
pub const NEAR_CENTER_REL: f64 = 1e-3;

fn zero() -> C64 {
    c(0.0, 0.0)
}

fn one() -> M2 {
    M2::identity()
}

/// e₁ = diag(i, −i), e₂ = [[0, 1], [−1, 0]], e₃ = [[0, i], [i, 0]].
pub fn su2_basis() -> [M2; 3] {
    [
        m2(I, zero(), zero(), -I),
        m2(zero(), c(1.0, 0.0), c(-1.0, 0.0), zero()),
        m2(zero(), I, I, zero()),
    ]
}

/// `[[x₄ + ix₁, x₂ + ix₃], [−x₂ + ix₃, x₄ − ix₁]]`, complex-linear in `x = (x₁, x₂, x₃, x₄)`.
pub fn quaternion(x: [C64; 4]) -> M2 {
    m2(x[3] + I * x[0], x[1] + I * x[2], -x[1] + I * x[2], x[3] - I * x[0])
}

pub fn quaternion_real(x: [f64; 4]) -> M2 {
    quaternion(x.map(|v| c(v, 0.0)))
}

/// Inverse of [`quaternion`] for real points.
pub fn coordinates(a: &M2) -> [f64; 4] {
    let p = (a[(0, 0)] + a[(1, 1)].conj()) * 0.5;
    let q = (a[(0, 1)] - a[(1, 0)].conj()) * 0.5;
    [p.im, q.re, q.im, p.re]
}

/// Pure-imaginary quaternion of a point of R³.
pub fn r3_matrix(v: &V3) -> M2 {
    quaternion_real([v[0], v[1], v[2], 0.0])
}

fn unitarity_defect(a: &M2) -> f64 {
    let d = max_abs(&(a * a.adjoint() - one()));
    d.max((a.determinant() - c(1.0, 0.0)).norm())
}

fn inv2(a: &M2) -> Option<M2> {
    let det = a.determinant();
    if det.norm() == 0.0 {
        return None;
    }
    Some(m2(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]) / det)
}

fn comm(a: &M2, b: &M2) -> M2 {
    a * b - b * a
}

/// A point of R³ ∪ {∞}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ProjectivePoint {
    Finite([f64; 3]),
    Infinity,
}

impl ProjectivePoint {
    pub fn finite(v: V3) -> Self {
        ProjectivePoint::Finite([v[0], v[1], v[2]])
    }

    pub fn vector(&self) -> Option<V3> {
        match self {
            ProjectivePoint::Finite(p) => Some(V3::new(p[0], p[1], p[2])),
            ProjectivePoint::Infinity => None,
        }
    }
}

/// π(a) = (1 + a)(1 − a)⁻¹; the north pole a = 1 goes to ∞.
pub fn stereographic(a: &M2) -> Result<ProjectivePoint> {
    let d = unitarity_defect(a);
    if d > UNITARITY_TOL {
        return Err(Error::precondition(format!("point is not in SU(2) (defect {d:.2e})")));
    }
    // det(1 − a) = 2(1 − x₄) on the unit sphere
    let den = one() - a;
    if den.determinant().norm() < 1e-28 {
        return Ok(ProjectivePoint::Infinity);
    }
    let b = (one() + a) * inv2(&den).unwrap();
    let x = coordinates(&b);
    Ok(ProjectivePoint::Finite([x[0], x[1], x[2]]))
}

/// π⁻¹(b) = (b − 1)(b + 1)⁻¹; ∞ goes to the north pole.
pub fn stereographic_inverse(p: &ProjectivePoint) -> M2 {
    match p.vector() {
        None => one(),
        Some(v) => {
            let b = r3_matrix(&v);
            // det(b + 1) = 1 + |b|² never vanishes
            (b - one()) * inv2(&(b + one())).unwrap()
        }
    }
}

/// A map Σ → SU(2) sampled on a fundamental grid, stored entrywise.
#[derive(Clone, Debug)]
pub struct SU2Immersion {
    grid: FundamentalGrid,
    entries: [PeriodicField; 4],
}

impl SU2Immersion {
    pub fn new(grid: FundamentalGrid, samples: &[M2]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::invalid("sample count does not match grid"));
        }
        let (worst, at) = samples
            .iter()
            .enumerate()
            .map(|(i, a)| (unitarity_defect(a), i))
            .fold((0.0, 0), |acc, v| if v.0 > acc.0 { v } else { acc });
        if worst > UNITARITY_TOL {
            return Err(Error::precondition(format!(
                "sample {at} is not special unitary: defect {worst:.2e} > {UNITARITY_TOL:.0e}"
            )));
        }
        let entry = |r: usize, s: usize| {
            PeriodicField::new(grid, samples.iter().map(|a| a[(r, s)]).collect(), Character::PERIODIC)
        };
        Ok(SU2Immersion { grid, entries: [entry(0, 0)?, entry(0, 1)?, entry(1, 0)?, entry(1, 1)?] })
    }

    pub fn from_fn(grid: FundamentalGrid, f: impl Fn(C64) -> M2) -> Result<Self> {
        let s: Vec<M2> = grid.points().into_iter().map(f).collect();
        Self::new(grid, &s)
    }

    /// The Clifford torus (1/√2)·[[e^{ix}, e^{iy}], [−e^{−iy}, e^{−ix}]] over 2π(Z + iZ).
    pub fn clifford(n1: usize, n2: usize) -> Result<Self> {
        let grid = FundamentalGrid::new(clifford_lattice(), n1, n2)?;
        Self::from_fn(grid, clifford_point)
    }

    /// Flat product torus with radii (cos r, sin r); CMC with H = cot 2r up to sign.
    pub fn product_torus(r: f64, n1: usize, n2: usize) -> Result<Self> {
        if !(r > 0.0 && r < PI / 2.0) {
            return Err(Error::invalid("product torus angle must lie in (0, π/2)"));
        }
        let (a, b) = (r.cos(), r.sin());
        let grid = FundamentalGrid::new(Lattice::rectangular(2.0 * PI * a, 2.0 * PI * b)?, n1, n2)?;
        Self::from_fn(grid, |z| {
            let (u, v) = (z.re / a, z.im / b);
            let p = C64::from_polar(a, u);
            let q = C64::from_polar(b, v);
            m2(p, q, -q.conj(), p.conj())
        })
    }

    /// Inverse stereographic image of a torus in R³.
    pub fn from_r3(f: &ImmersionR3) -> Result<Self> {
        if !f.is_torus(1e-12) {
            return Err(Error::precondition("only closed tori can be lifted to S³"));
        }
        let s: Vec<M2> =
            f.positions().iter().map(|p| stereographic_inverse(&ProjectivePoint::finite(*p))).collect();
        Self::new(*f.grid(), &s)
    }

    pub fn grid(&self) -> &FundamentalGrid {
        &self.grid
    }

    pub fn sample(&self, idx: usize) -> M2 {
        let e = |i: usize| self.entries[i].values()[idx];
        m2(e(0), e(1), e(2), e(3))
    }

    pub fn samples(&self) -> Vec<M2> {
        (0..self.grid.len()).map(|i| self.sample(i)).collect()
    }

    fn derivative(&self, bar: bool) -> Result<Vec<M2>> {
        let d: Vec<PeriodicField> = self
            .entries
            .iter()
            .map(|e| if bar { e.dzbar() } else { e.dz() })
            .collect::<Result<_>>()?;
        Ok((0..self.grid.len())
            .map(|i| m2(d[0].values()[i], d[1].values()[i], d[2].values()[i], d[3].values()[i]))
            .collect())
    }

    pub fn dz(&self) -> Result<Vec<M2>> {
        self.derivative(false)
    }

    pub fn dzbar(&self) -> Result<Vec<M2>> {
        self.derivative(true)
    }

    /// Stereographic image in R³; fails if a sample is the north pole.
    pub fn stereographic_image(&self) -> Result<ImmersionR3> {
        let mut pts = Vec::with_capacity(self.grid.len());
        for (i, a) in self.samples().iter().enumerate() {
            match stereographic(a)?.vector() {
                Some(v) => pts.push(v),
                None => {
                    return Err(Error::precondition(format!(
                        "grid sample {i} is the north pole and projects to infinity"
                    )))
                }
            }
        }
        ImmersionR3::from_samples(self.grid, &pts, [V3::zeros(); 2])
    }
}

pub fn clifford_lattice() -> Lattice {
    Lattice::rectangular(2.0 * PI, 2.0 * PI).unwrap()
}

pub fn clifford_point(z: C64) -> M2 {
    let (ex, ey) = (C64::from_polar(1.0, z.re), C64::from_polar(1.0, z.im));
    m2(ex, ey, -ey.conj(), ex.conj()) / c(SQRT_2, 0.0)
}

/// Closed-form Clifford spinor (ψ₁, ψ₂); character (−, −).
pub fn clifford_spinor(z: C64) -> (C64, C64) {
    let u = (z.re - z.im) / 2.0 - PI / 4.0;
    ((c(1.0, -1.0) / 2.0).sqrt() * u.sin(), (c(1.0, 1.0) / 2.0).sqrt() * u.cos())
}

/// Spinor (ψ₁, ψ₂) with the S³ Dirac potential V = ½(H − i)e^α.
#[derive(Clone, Debug)]
pub struct SphereSpinor {
    pub psi1: PeriodicField,
    pub psi2: PeriodicField,
    pub potential: PeriodicField,
}

impl SphereSpinor {
    pub fn new(psi1: PeriodicField, psi2: PeriodicField, potential: PeriodicField) -> Result<Self> {
        let g = psi1.grid();
        if psi2.grid() != g || potential.grid() != g {
            return Err(Error::invalid("spinor components and potential must share one grid"));
        }
        if psi1.character() != psi2.character() {
            return Err(Error::Character("ψ₁ and ψ₂ must carry the same spin character".into()));
        }
        if !potential.character().is_periodic() {
            return Err(Error::Character("the potential V must be periodic".into()));
        }
        Ok(SphereSpinor { psi1, psi2, potential })
    }

    pub fn character(&self) -> Character {
        self.psi1.character()
    }

    pub fn exp_alpha(&self) -> PeriodicField {
        self.psi1.abs2().add(&self.psi2.abs2())
    }

    /// Max-norms of the two rows Vψ₁ + ∂ψ₂ and −∂̄ψ₁ + V̄ψ₂.
    pub fn dirac_residuals(&self) -> Result<(f64, f64)> {
        let v = &self.potential;
        let r1 = v.mul(&self.psi1).add(&self.psi2.dz()?);
        let r2 = v.conj().mul(&self.psi2).sub(&self.psi1.dzbar()?);
        Ok((r1.max_abs(), r2.max_abs()))
    }

    pub fn dirac_residual(&self) -> Result<f64> {
        let (a, b) = self.dirac_residuals()?;
        Ok(a.max(b))
    }

    /// max | |ψ₁|² + |ψ₂|² + 2 Im V |.
    pub fn constraint_defect(&self) -> f64 {
        let ea = self.exp_alpha();
        ea.values()
            .iter()
            .zip(self.potential.values())
            .map(|(e, v)| (e.re + 2.0 * v.im).abs())
            .fold(0.0, f64::max)
    }

    /// The second solution φ = (ψ̄₂, −ψ̄₁) for the same V.
    pub fn conjugate(&self) -> Self {
        SphereSpinor {
            psi1: self.psi2.conj(),
            psi2: self.psi1.conj().scale(c(-1.0, 0.0)),
            potential: self.potential.clone(),
        }
    }
}

/// Geometric data of a conformal map Σ → S³ together with its spinor.
#[derive(Clone, Debug)]
pub struct S3Surface {
    pub grid: FundamentalGrid,
    /// Ψ = f⁻¹f_z at each sample.
    pub psi_form: Vec<M2>,
    /// Ψ* = f⁻¹f_z̄.
    pub psi_star: Vec<M2>,
    /// Components of Ψ in the basis e₁, e₂, e₃.
    pub z: [PeriodicField; 3],
    pub exp_alpha: PeriodicField,
    pub mean_curv: PeriodicField,
    pub hopf: PeriodicField,
    pub spinor: SphereSpinor,
    /// max |∂̄Ψ + ∂Ψ* − iH[Ψ*, Ψ]| / max |[Ψ*, Ψ]|.
    pub mean_curvature_fit_residual: f64,
    /// max | e^α − |ψ₁|² − |ψ₂|² | / max e^α.
    pub exp_alpha_defect: f64,
    pub conformality_defect: f64,
}

fn matrix_fields(grid: FundamentalGrid, m: &[M2]) -> Result<[PeriodicField; 4]> {
    let e = |r: usize, s: usize| PeriodicField::new(grid, m.iter().map(|a| a[(r, s)]).collect(), Character::PERIODIC);
    Ok([e(0, 0)?, e(0, 1)?, e(1, 0)?, e(1, 1)?])
}

fn field_matrices(f: &[PeriodicField; 4]) -> Vec<M2> {
    (0..f[0].values().len())
        .map(|i| m2(f[0].values()[i], f[1].values()[i], f[2].values()[i], f[3].values()[i]))
        .collect()
}

fn matrix_derivative(grid: FundamentalGrid, m: &[M2], bar: bool) -> Result<Vec<M2>> {
    let f = matrix_fields(grid, m)?;
    let d: Vec<PeriodicField> = f.iter().map(|e| if bar { e.dzbar() } else { e.dz() }).collect::<Result<_>>()?;
    Ok(field_matrices(&[d[0].clone(), d[1].clone(), d[2].clone(), d[3].clone()]))
}

/// Components (Z₁, Z₂, Z₃) of Ψ = Z₁e₁ + Z₂e₂ + Z₃e₃.
pub fn su2_components(p: &M2) -> [C64; 3] {
    [p[(0, 0)] / I, (p[(0, 1)] - p[(1, 0)]) * 0.5, (p[(0, 1)] + p[(1, 0)]) / (I * 2.0)]
}

/// Least-squares H with ∂̄Ψ + ∂Ψ* ≈ iH[Ψ*, Ψ] at one point; returns (H, residual).
fn fit_mean_curvature(r: &M2, cm: &M2) -> (f64, f64) {
    let ic = cm * I;
    let num: f64 = r.iter().zip(ic.iter()).map(|(a, b)| (b.conj() * a).re).sum();
    let den: f64 = ic.iter().map(|b| b.norm_sqr()).sum();
    let h = num / den.max(f64::MIN_POSITIVE);
    (h, max_abs(&(r - ic * c(h, 0.0))))
}

/// Recovers (ψ₁, ψ₂), V, A and H of a conformal map into S³.
pub fn spinor_from_s3(f: &SU2Immersion) -> Result<S3Surface> {
    let grid = *f.grid();
    let fs = f.samples();
    let fz = f.dz()?;
    let fzb = f.dzbar()?;
    let psi_form: Vec<M2> = fs.iter().zip(&fz).map(|(a, d)| a.adjoint() * d).collect();
    let psi_star: Vec<M2> = fs.iter().zip(&fzb).map(|(a, d)| a.adjoint() * d).collect();
    let zs: Vec<[C64; 3]> = psi_form.iter().map(su2_components).collect();

    let mut conf = 0.0f64;
    let mut e2 = Vec::with_capacity(grid.len());
    for z in &zs {
        let q: C64 = z.iter().map(|v| v * v).sum();
        let n: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        conf = conf.max(q.norm());
        e2.push(2.0 * n);
    }
    let scale = e2.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::precondition("map into S³ is constant"));
    }
    let conformality_defect = conf / scale;
    if conformality_defect > S3_CONFORMAL_TOL {
        return Err(Error::precondition(format!(
            "parameter is not conformal: max|Z₁²+Z₂²+Z₃²| / max e^{{2α}} = {conformality_defect:.2e} > \
             {S3_CONFORMAL_TOL:.0e}"
        )));
    }
    if let Some(i) = e2.iter().position(|&v| v < 1e-12 * scale) {
        return Err(Error::precondition(format!("map is not immersed at grid index {i}")));
    }
    let exp_alpha = PeriodicField::new(grid, e2.iter().map(|v| c(v.sqrt(), 0.0)).collect(), Character::PERIODIC)?;
    let zf: [Vec<C64>; 3] = [0, 1, 2].map(|ci| zs.iter().map(|z| z[ci]).collect::<Vec<_>>());
    let ea_max = exp_alpha.max_abs();
    let (psi1, psi2) = spinor_roots(grid, &zf, ea_max)?;
    let ea_psi = psi1.abs2().add(&psi2.abs2());
    let exp_alpha_defect = ea_psi.max_diff(&exp_alpha) / ea_max;
    if exp_alpha_defect > 1e-9 {
        return Err(Error::numerical(format!(
            "recovered spinor violates e^α = |ψ₁|² + |ψ₂|² by {exp_alpha_defect:.2e}"
        )));
    }

    // H from ∂̄Ψ + ∂Ψ* = iH[Ψ*, Ψ]
    let dpsi = matrix_derivative(grid, &psi_form, true)?;
    let dstar = matrix_derivative(grid, &psi_star, false)?;
    let mut hv = Vec::with_capacity(grid.len());
    let (mut fit, mut cscale) = (0.0f64, 0.0f64);
    for i in 0..grid.len() {
        let cm = comm(&psi_star[i], &psi_form[i]);
        let (h, r) = fit_mean_curvature(&(dpsi[i] + dstar[i]), &cm);
        hv.push(c(h, 0.0));
        fit = fit.max(r);
        cscale = cscale.max(max_abs(&cm));
    }
    let mean_curv = PeriodicField::new(grid, hv, Character::PERIODIC)?;
    let potential = mean_curv.zip_map(&exp_alpha, Character::PERIODIC, |h, e| (h - I) * e * 0.5);

    let psi2b = psi2.conj();
    let hopf = psi2b
        .zip_map(&psi1.dz()?, Character::PERIODIC, |b, d| d * b)
        .sub(&psi1.zip_map(&psi2b.dz()?, Character::PERIODIC, |a, d| d * a));
    let z = [0, 1, 2].map(|ci| PeriodicField::new(grid, zf[ci].clone(), Character::PERIODIC));
    let [z1, z2, z3] = z;
    Ok(S3Surface {
        grid,
        psi_form,
        psi_star,
        z: [z1?, z2?, z3?],
        exp_alpha,
        mean_curv,
        hopf,
        spinor: SphereSpinor::new(psi1, psi2, potential)?,
        mean_curvature_fit_residual: fit / cscale.max(f64::MIN_POSITIVE),
        exp_alpha_defect,
        conformality_defect,
    })
}

impl S3Surface {
    pub fn potential(&self) -> &PeriodicField {
        &self.spinor.potential
    }

    pub fn alpha(&self) -> PeriodicField {
        self.exp_alpha.map(|v| c(v.re.ln(), 0.0))
    }

    /// (Gauss, Codazzi) residuals: α_{zz̄} + |V|² − |A|²e^{−2α} and A_{z̄} − (V̄_z − α_zV̄)e^α.
    pub fn codazzi_residuals(&self) -> Result<(f64, f64)> {
        let alpha = self.alpha();
        let az = alpha.dz()?;
        let azzb = az.dzbar()?;
        let v = self.potential();
        let e2 = self.exp_alpha.abs2();
        let a2 = self.hopf.abs2();
        let gauss = azzb.add(&v.abs2()).sub(&a2.zip_map(&e2, Character::PERIODIC, |a, e| a / e));
        let vb = v.conj();
        let rhs = vb.dz()?.sub(&az.mul(&vb)).mul(&self.exp_alpha);
        let codazzi = self.hopf.dzbar()?.sub(&rhs);
        Ok((gauss.max_abs(), codazzi.max_abs()))
    }

    /// Residuals of ψ_z = [[α_z, Ae^{−α}], [−V, 0]]ψ and ψ_z̄ = [[0, V̄], [−Āe^{−α}, α_z̄]]ψ.
    pub fn gauss_weingarten_residuals(&self) -> Result<(f64, f64)> {
        let (p1, p2) = (&self.spinor.psi1, &self.spinor.psi2);
        let alpha = self.alpha();
        let (az, azb) = (alpha.dz()?, alpha.dzbar()?);
        let ae = self.hopf.zip_map(&self.exp_alpha, Character::PERIODIC, |a, e| a / e);
        let v = self.potential();
        let ch = p1.character();
        let r1 = p1.dz()?.sub(&az.mul(p1)).sub(&ae.mul(p2));
        let r2 = p2.dz()?.add(&v.mul(p1));
        let r3 = p1.dzbar()?.sub(&v.conj().mul(p2));
        let r4 = p2.dzbar()?.add(&ae.conj().mul(p1)).sub(&azb.mul(p2));
        debug_assert_eq!(r1.character(), ch);
        Ok((r1.max_abs().max(r2.max_abs()), r3.max_abs().max(r4.max_abs())))
    }

    /// Relative residual of the harmonic-map equation ∂̄Ψ + ∂Ψ* = 0 and of
    /// the integrability equation ∂̄Ψ − ∂Ψ* + [Ψ*, Ψ] = 0.
    pub fn harmonic_residuals(&self) -> Result<(f64, f64)> {
        let dpsi = matrix_derivative(self.grid, &self.psi_form, true)?;
        let dstar = matrix_derivative(self.grid, &self.psi_star, false)?;
        let (mut h, mut integ, mut scale) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..self.grid.len() {
            let cm = comm(&self.psi_star[i], &self.psi_form[i]);
            h = h.max(max_abs(&(dpsi[i] + dstar[i])));
            integ = integ.max(max_abs(&(dpsi[i] - dstar[i] + cm)));
            scale = scale.max(max_abs(&cm));
        }
        let s = scale.max(f64::MIN_POSITIVE);
        Ok((h / s, integ / s))
    }

    /// 16|A|²e^{−2α}.
    pub fn blaschke_density(&self) -> PeriodicField {
        self.hopf.abs2().zip_map(&self.exp_alpha.abs2(), Character::PERIODIC, |a, e| a * 16.0 / e)
    }
}

/// Spinor at one point from f and f_z.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PointSpinor {
    pub psi1: C64,
    pub psi2: C64,
    pub exp_alpha: f64,
    pub conformality_defect: f64,
}

pub fn pointwise_spinor(f: &M2, fz: &M2) -> Result<PointSpinor> {
    let z = su2_components(&(f.adjoint() * fz));
    let e2: f64 = 2.0 * z.iter().map(|v| v.norm_sqr()).sum::<f64>();
    if e2 <= 0.0 {
        return Err(Error::precondition("map is not immersed at this point"));
    }
    let q: C64 = z.iter().map(|v| v * v).sum();
    let (q1, q2) = (-I * z[0] - z[1], -I * z[0] + z[1]);
    let (p1, p2b) = if q1.norm() >= q2.norm() {
        let p1 = q1.sqrt();
        (p1, z[2] / p1)
    } else {
        let p2b = q2.sqrt();
        (z[2] / p2b, p2b)
    };
    Ok(PointSpinor { psi1: p1, psi2: p2b.conj(), exp_alpha: e2.sqrt(), conformality_defect: q.norm() / e2 })
}

/// Totally geodesic equatorial sphere x₄ = 0 on a disc patch: samples
/// z ↦ (f(z), f_z(z)) from the analytic inverse stereographic map of C.
pub fn equatorial_sphere_sample(z: C64) -> (M2, M2) {
    let zb = z.conj();
    let d = 1.0 + z.norm_sqr();
    let p = [(z + zb) / d, -I * (z - zb) / d, (z * zb - 1.0) / d, zero()];
    let pz = [(c(1.0, 0.0) - zb * zb) / (d * d), -I * (zb * zb + 1.0) / (d * d), zb * 2.0 / (d * d), zero()];
    (quaternion(p), quaternion(pz))
}

/// max | |ψ₁|² + |ψ₂|² + 2 Im V | over the given patch points, with the
/// totally geodesic value V = −ie^α/2 (H = 0).
pub fn sphere_patch_constraint(points: &[C64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &z in points {
        let (f, fz) = equatorial_sphere_sample(z);
        let s = pointwise_spinor(&f, &fz)?;
        if s.conformality_defect > S3_CONFORMAL_TOL {
            return Err(Error::precondition("patch parameter is not conformal"));
        }
        let v = -I * s.exp_alpha / 2.0;
        worst = worst.max((s.psi1.norm_sqr() + s.psi2.norm_sqr() + 2.0 * v.im).abs());
    }
    Ok(worst)
}

/// (λ − 1/(8λ), λ + 1/(8λ)).
pub fn clifford_exponents(l: C64) -> Result<(C64, C64)> {
    if l.norm() == 0.0 || !l.is_finite() {
        return Err(Error::invalid("the Clifford spectrum map needs λ ≠ 0"));
    }
    let r = (l * 8.0).inv();
    Ok((l - r, l + r))
}

/// λ ↦ (e^{2π(λ − 1/(8λ))}, e^{2πi(λ + 1/(8λ))}).
pub fn clifford_spectrum_map(l: C64) -> Result<(C64, C64)> {
    let (a, b) = clifford_exponents(l)?;
    Ok(((a * 2.0 * PI).exp(), (I * b * 2.0 * PI).exp()))
}

/// A λ mapped onto `mu` by [`clifford_spectrum_map`], if one exists within
/// relative tolerance `tol`; returns (λ, defect).
pub fn clifford_preimage(mu: (C64, C64), tol: f64) -> Option<(C64, f64)> {
    let base = mu.0.ln() / (2.0 * PI);
    let mut best: Option<(C64, f64)> = None;
    for n in -60i32..=60 {
        let l1 = base + I * n as f64;
        let disc = (l1 * l1 + 0.5).sqrt();
        for kappa in [(l1 + disc) * 0.5, (l1 - disc) * 0.5] {
            let Ok(m) = clifford_spectrum_map(kappa) else { continue };
            let d = (m.0 - mu.0).norm() / (1.0 + mu.0.norm()) + (m.1 - mu.1).norm() / (1.0 + mu.1.norm());
            if best.map_or(true, |b| d < b.1) {
                best = Some((kappa, d));
            }
        }
    }
    best.filter(|b| b.1 <= tol)
}

/// Wirtinger derivatives of a quasi-periodic function with multipliers
/// `mu` along γ₁, γ₂; also returns the weights e^{β₁s + β₂t}.
pub fn quasi_wirtinger(grid: FundamentalGrid, vals: &[C64], mu: (C64, C64)) -> Result<[Vec<C64>; 3]> {
    if mu.0.norm() == 0.0 || mu.1.norm() == 0.0 {
        return Err(Error::invalid("multipliers must be nonzero"));
    }
    let (b1, b2) = (mu.0.ln(), mu.1.ln());
    let mut w = Vec::with_capacity(grid.len());
    for j in 0..grid.n1 {
        for k in 0..grid.n2 {
            let (s, t) = grid.st(j, k);
            w.push((b1 * s + b2 * t).exp());
        }
    }
    let h = PeriodicField::new(grid, vals.iter().zip(&w).map(|(v, w)| v / w).collect(), Character::PERIODIC)?;
    let lat = grid.lattice;
    let tau = I * 2.0 * PI;
    let (sz, tz) = (lat.dz_symbol(1.0, 0.0) / tau, lat.dz_symbol(0.0, 1.0) / tau);
    let (szb, tzb) = (lat.dzbar_symbol(1.0, 0.0) / tau, lat.dzbar_symbol(0.0, 1.0) / tau);
    let (hz, hzb) = (h.dz()?, h.dzbar()?);
    let gz = (0..grid.len()).map(|i| w[i] * (hz.values()[i] + h.values()[i] * (b1 * sz + b2 * tz))).collect();
    let gzb = (0..grid.len()).map(|i| w[i] * (hzb.values()[i] + h.values()[i] * (b1 * szb + b2 * tzb))).collect();
    Ok([gz, gzb, w])
}

/// Relative D^S residual of a quasi-periodic pair, measured in the
/// periodic gauge ψ·e^{−β₁s − β₂t}.
pub fn quasi_dirac_s_residual(
    grid: FundamentalGrid,
    psi: &[Vec<C64>; 2],
    v: &PeriodicField,
    mu: (C64, C64),
) -> Result<f64> {
    let [_, d1b, w] = quasi_wirtinger(grid, &psi[0], mu)?;
    let [d2, _, _] = quasi_wirtinger(grid, &psi[1], mu)?;
    let (mut r, mut s) = (0.0f64, 0.0f64);
    for i in 0..grid.len() {
        let vi = v.values()[i];
        let wn = w[i].norm();
        let a = (vi * psi[0][i] + d2[i]).norm() / wn;
        let b = (vi.conj() * psi[1][i] - d1b[i]).norm() / wn;
        r = r.max(a).max(b);
        s = s.max(psi[0][i].norm().max(psi[1][i].norm()) / wn);
    }
    Ok(r / s.max(f64::MIN_POSITIVE))
}

/// The Floquet function E·(1, i/(2√2λ)), E = e^{λz − z̄/(8λ)}, of the
/// Clifford operator, with its multipliers.
pub fn clifford_floquet_function(grid: FundamentalGrid, l: C64) -> Result<([Vec<C64>; 2], (C64, C64))> {
    let mu = clifford_spectrum_map(l)?;
    let r = (l * 8.0).inv();
    let e: Vec<C64> = grid.points().iter().map(|z| (l * z - r * z.conj()).exp()).collect();
    let k = I / (l * 2.0 * SQRT_2);
    let p2 = e.iter().map(|v| v * k).collect();
    Ok(([e, p2], mu))
}

/// Relative residual of (∂∂̄ + 1/8)ψⱼ = 0 for the Clifford Floquet function.
pub fn clifford_laplace_residual(grid: FundamentalGrid, l: C64) -> Result<f64> {
    let (psi, mu) = clifford_floquet_function(grid, l)?;
    let mut worst = 0.0f64;
    for comp in &psi {
        let [_, dzb, w] = quasi_wirtinger(grid, comp, mu)?;
        let [dd, _, _] = quasi_wirtinger(grid, &dzb, mu)?;
        for i in 0..grid.len() {
            worst = worst.max((dd[i] + comp[i] / 8.0).norm() / (w[i].norm() * (1.0 + comp[i].norm() / w[i].norm())));
        }
    }
    Ok(worst)
}

/// One flagged zero of the Clifford cross-check.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CliffordFlag {
    pub lambda: C64,
    pub w: C64,
    pub multipliers: (C64, C64),
    pub preimage: Option<C64>,
    pub defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CliffordCrossCheck {
    pub lambda0: C64,
    pub flags: Vec<CliffordFlag>,
    /// Distance from λ₀ to the nearest flagged λ.
    pub lambda0_error: f64,
    /// Worst multiplier mismatch over flagged points.
    pub max_multiplier_defect: f64,
    pub cell: f64,
}

/// Scans the truncated S³ operator of a constant-V torus over the λ-plane
/// with W fixed to −|V|²/λ₀ and matches the flagged multipliers against
/// [`clifford_spectrum_map`].
pub fn clifford_floquet2d_check(
    v: &PeriodicField,
    cutoff: usize,
    lambda0: C64,
    half_width: f64,
    nscan: usize,
) -> Result<CliffordCrossCheck> {
    let p = TruncatedPencil::sphere(v, cutoff)?;
    let v0 = v.mean();
    let w0 = -c(v0.norm_sqr(), 0.0) / lambda0;
    let slice = Slice::new(
        move |a, b| QuasimomentumPoint::from_spectral(c(a, b), w0),
        (lambda0.re - half_width, lambda0.re + half_width),
        (lambda0.im - half_width, lambda0.im + half_width),
        nscan,
        nscan,
    );
    let scan = spectrum_scan(&p, &slice, &ScanOptions::default())?;
    let lat = *v.lattice();
    let mut flags = Vec::new();
    let mut worst = 0.0f64;
    for f in &scan.flagged {
        let k = f.sample.k;
        let mu = k.multipliers(&lat);
        let pre = clifford_preimage(mu, 1e-6);
        let defect = pre.map_or(f64::INFINITY, |p| p.1);
        worst = worst.max(defect);
        flags.push(CliffordFlag { lambda: k.lambda(), w: k.w(), multipliers: mu, preimage: pre.map(|p| p.0), defect });
    }
    let err = flags.iter().map(|f| (f.lambda - lambda0).norm()).fold(f64::INFINITY, f64::min);
    Ok(CliffordCrossCheck { lambda0, flags, lambda0_error: err, max_multiplier_defect: worst, cell: slice.cell().0 })
}

/// Placement of λ in the Hitchin family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// (∂ + (1+λ⁻¹)/2·Ψ, ∂̄ + (1+λ)/2·Ψ*).
    Family,
    /// (∂ + (1+λ)/2·Ψ, ∂̄ + (1+λ⁻¹)/2·Ψ*).
    Eigenfunction,
}

impl Placement {
    pub fn coefficients(self, l: C64) -> Result<(C64, C64)> {
        if l.norm() == 0.0 {
            return Err(Error::invalid("the Hitchin family has a pole at λ = 0"));
        }
        let a = (l.inv() + 1.0) * 0.5;
        let b = (l + 1.0) * 0.5;
        Ok(match self {
            Placement::Family => (a, b),
            Placement::Eigenfunction => (b, a),
        })
    }
}

/// Monodromy of the Hitchin family along one generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HitchinMonodromy {
    pub lambda: C64,
    pub placement: Placement,
    pub generator: usize,
    pub matrix: [[C64; 2]; 2],
    pub trace: C64,
    /// Roots of μ² − Tr H·μ + 1 = 0, larger first.
    pub multipliers: (C64, C64),
    pub det_defect: f64,
    pub error_estimate: f64,
}

impl HitchinMonodromy {
    pub fn m(&self) -> M2 {
        let a = &self.matrix;
        m2(a[0][0], a[0][1], a[1][0], a[1][1])
    }
}

fn to_array(m: &M2) -> [[C64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// The flat family d + A_λ of a harmonic map into SU(2); Floquet solutions
/// satisfy φ_z = −aΨφ, φ_z̄ = −bΨ*φ.
#[derive(Clone, Debug)]
pub struct HitchinFamily {
    grid: FundamentalGrid,
    psi: Vec<M2>,
    psi_star: Vec<M2>,
    dpsi_bar: Vec<M2>,
    dstar: Vec<M2>,
    pub harmonic_residual: f64,
}

impl HitchinFamily {
    pub fn new(s: &S3Surface) -> Result<Self> {
        let (h, _) = s.harmonic_residuals()?;
        if h > HARMONIC_TOL {
            return Err(Error::precondition(format!(
                "map is not harmonic: relative residual of ∂̄Ψ + ∂Ψ* = 0 is {h:.2e} > {HARMONIC_TOL:.0e}"
            )));
        }
        Ok(HitchinFamily {
            grid: s.grid,
            psi: s.psi_form.clone(),
            psi_star: s.psi_star.clone(),
            dpsi_bar: matrix_derivative(s.grid, &s.psi_form, true)?,
            dstar: matrix_derivative(s.grid, &s.psi_star, false)?,
            harmonic_residual: h,
        })
    }

    pub fn grid(&self) -> &FundamentalGrid {
        &self.grid
    }

    /// max |P_z̄ − Q_z + [P, Q]| / max|[Ψ, Ψ*]| with P = −aΨ, Q = −bΨ*.
    pub fn flatness_residual(&self, l: C64, placement: Placement) -> Result<f64> {
        let (a, b) = placement.coefficients(l)?;
        let (mut r, mut s) = (0.0f64, 0.0f64);
        for i in 0..self.grid.len() {
            let cm = comm(&self.psi[i], &self.psi_star[i]);
            let curv = self.dpsi_bar[i] * (-a) + self.dstar[i] * b + cm * (a * b);
            r = r.max(max_abs(&curv));
            s = s.max(max_abs(&cm));
        }
        Ok(r / s.max(f64::MIN_POSITIVE))
    }

    /// Trigonometric interpolants of the eight entries of (Ψ, Ψ*) along a grid line.
    fn line(&self, generator: usize, index: usize) -> Vec<Series1D> {
        let g = &self.grid;
        let ids: Vec<usize> = if generator == 0 {
            (0..g.n1).map(|j| j * g.n2 + index).collect()
        } else {
            (0..g.n2).map(|k| index * g.n2 + k).collect()
        };
        let mut out = Vec::with_capacity(8);
        for src in [&self.psi, &self.psi_star] {
            for (r, cc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                out.push(Series1D::new(ids.iter().map(|&i| src[i][(r, cc)]).collect(), 1.0));
            }
        }
        out
    }

    fn line_coefficient(
        line: &[Series1D],
        gamma: C64,
        a: C64,
        b: C64,
    ) -> impl Fn(f64) -> M2 + Sync + '_ {
        move |s: f64| {
            let e: Vec<C64> = line.iter().map(|se| se.eval(s)).collect();
            let p = m2(e[0], e[1], e[2], e[3]);
            let q = m2(e[4], e[5], e[6], e[7]);
            -(p * (a * gamma) + q * (b * gamma.conj()))
        }
    }

    fn gamma(&self, generator: usize) -> C64 {
        if generator == 0 {
            self.grid.lattice.gamma1
        } else {
            self.grid.lattice.gamma2
        }
    }

    /// H(λ) along the loop s ↦ s·γ from the origin.
    pub fn monodromy(&self, l: C64, placement: Placement, generator: usize) -> Result<HitchinMonodromy> {
        if generator > 1 {
            return Err(Error::invalid("generator index must be 0 or 1"));
        }
        let (a, b) = placement.coefficients(l)?;
        let line = self.line(generator, 0);
        let f = Self::line_coefficient(&line, self.gamma(generator), a, b);
        let n = if generator == 0 { self.grid.n1 } else { self.grid.n2 };
        let t = richardson_transfer::<2>(&f, 1.0, 2 * n, 1e-12, 8)?;
        let tr = t.matrix[(0, 0)] + t.matrix[(1, 1)];
        Ok(HitchinMonodromy {
            lambda: l,
            placement,
            generator,
            matrix: to_array(&t.matrix),
            trace: tr,
            multipliers: unimodular_multipliers(tr),
            det_defect: (t.matrix.determinant() - c(1.0, 0.0)).norm(),
            error_estimate: t.error_estimate,
        })
    }

    /// Cell transfer matrices along a grid line (Richardson on `sub` RK4 steps).
    fn cell_transfers(&self, generator: usize, index: usize, a: C64, b: C64, sub: usize) -> Vec<M2> {
        let line = self.line(generator, index);
        let f = Self::line_coefficient(&line, self.gamma(generator), a, b);
        let n = line[0].len();
        let h = 1.0 / n as f64;
        (0..n)
            .into_par_iter()
            .map(|j| {
                let s0 = j as f64 * h;
                let g = |t: f64| f(s0 + t);
                let coarse = rk4_transfer::<2>(&g, h, sub);
                let fine = rk4_transfer::<2>(&g, h, 2 * sub);
                fine + (fine - coarse) / c(15.0, 0.0)
            })
            .collect()
    }

    /// Values of a Floquet solution φ with φ(0) = v and multipliers `mu` at
    /// every grid node; each line is integrated in its stable direction.
    pub fn floquet_solution(
        &self,
        l: C64,
        placement: Placement,
        v: Vector2<C64>,
        mu: (C64, C64),
        sub: usize,
    ) -> Result<Vec<Vector2<C64>>> {
        let (a, b) = placement.coefficients(l)?;
        let g = self.grid;
        let sweep = |cells: &[M2], start: Vector2<C64>, m: C64| -> Vec<Vector2<C64>> {
            let n = cells.len();
            let mut out = vec![Vector2::zeros(); n + 1];
            if m.norm() >= 1.0 {
                out[0] = start;
                for j in 0..n {
                    out[j + 1] = cells[j] * out[j];
                }
            } else {
                out[n] = start * m;
                for j in (0..n).rev() {
                    out[j] = inv2(&cells[j]).unwrap() * out[j + 1];
                }
            }
            out
        };
        let row = self.cell_transfers(0, 0, a, b, sub);
        let base = sweep(&row, v, mu.0);
        let cols: Vec<Vec<Vector2<C64>>> = (0..g.n1)
            .into_par_iter()
            .map(|j| {
                let cells = self.cell_transfers(1, j, a, b, sub);
                sweep(&cells, base[j], mu.1)
            })
            .collect();
        let mut out = Vec::with_capacity(g.len());
        for col in &cols {
            out.extend_from_slice(&col[..g.n2]);
        }
        Ok(out)
    }
}

/// L = [[ā, −b̄], [b, a]] with a = (−iψ̄₁ + ψ₂)/√2, b = (−iψ₁ + ψ̄₂)/√2.
pub fn gauge_matrix(psi1: C64, psi2: C64) -> M2 {
    let a = (-I * psi1.conj() + psi2) / SQRT_2;
    let b = (-I * psi1 + psi2.conj()) / SQRT_2;
    m2(a.conj(), -b.conj(), b, a)
}

/// Residuals of the gauge identities, each relative to max e^α.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GaugeIdentities {
    /// L⁻¹ΨL = e^α[[0, 1], [0, 0]].
    pub psi: f64,
    /// L⁻¹Ψ*L = e^α[[0, 0], [−1, 0]].
    pub psi_star: f64,
    /// L⁻¹L_z = [[α_z, −iV], [−iAe^{−α}, 0]].
    pub l_z: f64,
    /// L⁻¹L_z̄ = [[0, −iĀe^{−α}], [−iV̄, α_z̄]].
    pub l_zbar: f64,
    /// min det L = min(|a|² + |b|²).
    pub min_det: f64,
}

pub fn gauge_identities(s: &S3Surface) -> Result<GaugeIdentities> {
    let grid = s.grid;
    let (p1, p2) = (&s.spinor.psi1, &s.spinor.psi2);
    let ls: Vec<M2> = (0..grid.len()).map(|i| gauge_matrix(p1.values()[i], p2.values()[i])).collect();
    let ch = p1.character();
    let entry = |r: usize, cc: usize| PeriodicField::new(grid, ls.iter().map(|m| m[(r, cc)]).collect(), ch);
    let ent = [entry(0, 0)?, entry(0, 1)?, entry(1, 0)?, entry(1, 1)?];
    let dz: Vec<PeriodicField> = ent.iter().map(|e| e.dz()).collect::<Result<_>>()?;
    let dzb: Vec<PeriodicField> = ent.iter().map(|e| e.dzbar()).collect::<Result<_>>()?;
    let alpha = s.alpha();
    let (az, azb) = (alpha.dz()?, alpha.dzbar()?);
    let mut out = GaugeIdentities { psi: 0.0, psi_star: 0.0, l_z: 0.0, l_zbar: 0.0, min_det: f64::INFINITY };
    let scale = s.exp_alpha.max_abs();
    for i in 0..grid.len() {
        let l = ls[i];
        let det = l.determinant();
        out.min_det = out.min_det.min(det.norm());
        let Some(li) = inv2(&l) else {
            return Err(Error::precondition(format!("gauge matrix L is singular at grid index {i}")));
        };
        let e = s.exp_alpha.values()[i];
        let v = s.potential().values()[i];
        let ae = s.hopf.values()[i] / e;
        let t1 = m2(zero(), e, zero(), zero());
        let t2 = m2(zero(), zero(), -e, zero());
        let lz = m2(dz[0].values()[i], dz[1].values()[i], dz[2].values()[i], dz[3].values()[i]);
        let lzb = m2(dzb[0].values()[i], dzb[1].values()[i], dzb[2].values()[i], dzb[3].values()[i]);
        let t3 = m2(az.values()[i], -I * v, -I * ae, zero());
        let t4 = m2(zero(), -I * ae.conj(), -I * v.conj(), azb.values()[i]);
        out.psi = out.psi.max(max_abs(&(li * s.psi_form[i] * l - t1)) / scale);
        out.psi_star = out.psi_star.max(max_abs(&(li * s.psi_star[i] * l - t2)) / scale);
        out.l_z = out.l_z.max(max_abs(&(li * lz - t3)) / scale);
        out.l_zbar = out.l_zbar.max(max_abs(&(li * lzb - t4)) / scale);
    }
    if out.min_det < 1e-12 * scale {
        return Err(Error::precondition("gauge matrix L is singular (|a|² + |b|² = 0)"));
    }
    Ok(out)
}

/// Outcome of mapping a Hitchin eigenfunction to a Floquet function of D^S.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Theorem10Report {
    pub lambda: C64,
    pub placement: Placement,
    /// Multipliers of φ along γ₁, γ₂.
    pub mu: (C64, C64),
    /// Multipliers of ψ̃ predicted from the generating spinor's character.
    pub mu_tilde: (C64, C64),
    pub character: [i32; 2],
    /// D^S residual of ψ̃ (V = −ie^α/2) using the signed multipliers.
    pub residual: f64,
    /// Same residual if the character signs were ignored.
    pub residual_unsigned: f64,
    /// ‖H₂v − μ₂v‖ for the chosen eigenvector v of H₁.
    pub joint_eigen_defect: f64,
    /// λ on the Clifford curve with multipliers `mu_tilde`, when the data are Clifford.
    pub clifford_preimage: Option<C64>,
    pub clifford_defect: f64,
}

fn joint_eigenvector(h1: &M2, h2: &M2, which: usize) -> (Vector2<C64>, (C64, C64), f64) {
    let pick = |h: &M2| -> Option<[(C64, Vector2<C64>); 2]> {
        let ev = crate::linalg::eig2(h);
        if (ev[0] - ev[1]).norm() < 1e-7 * (1.0 + ev[0].norm()) {
            return None;
        }
        let vecs = ev.map(|e| {
            let m = h - one() * e;
            // null vector of a rank-one 2×2 matrix: the larger row rotated
            let (r0, r1) = (m.row(0).norm(), m.row(1).norm());
            let row = if r0 >= r1 { m.row(0) } else { m.row(1) };
            let v = Vector2::new(-row[1], row[0]);
            (e, v / c(v.norm(), 0.0))
        });
        let mut v = vecs;
        if v[0].0.norm() < v[1].0.norm() {
            v.swap(0, 1);
        }
        Some(v)
    };
    let rayleigh = |h: &M2, v: &Vector2<C64>| (v.adjoint() * h * v)[(0, 0)];
    let (v, mu) = if let Some(p) = pick(h1) {
        let v = p[which].1;
        (v, (p[which].0, rayleigh(h2, &v)))
    } else if let Some(p) = pick(h2) {
        let v = p[which].1;
        (v, (rayleigh(h1, &v), p[which].0))
    } else {
        let v = if which == 0 { Vector2::new(c(1.0, 0.0), zero()) } else { Vector2::new(zero(), c(1.0, 0.0)) };
        (v, (rayleigh(h1, &v), rayleigh(h2, &v)))
    };
    let defect = (h1 * v - v * mu.0).norm().max((h2 * v - v * mu.1).norm());
    (v, mu, defect)
}

/// ψ̃ = e^α·[[0, iλ], [1, 0]]·L⁻¹·φ for a Floquet solution φ of the family
/// (eigenvector `which` of H(λ) along γ₁), checked against D^S with V = −ie^α/2.
pub fn theorem10_gauge(
    s: &S3Surface,
    fam: &HitchinFamily,
    l: C64,
    placement: Placement,
    which: usize,
) -> Result<Theorem10Report> {
    let grid = s.grid;
    let h1 = fam.monodromy(l, placement, 0)?.m();
    let h2 = fam.monodromy(l, placement, 1)?.m();
    let (v, mu, joint) = joint_eigenvector(&h1, &h2, which.min(1));
    let phi = fam.floquet_solution(l, placement, v, mu, 8)?;
    let (p1, p2) = (&s.spinor.psi1, &s.spinor.psi2);
    let k = m2(zero(), I * l, c(1.0, 0.0), zero());
    let mut t = [Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len())];
    for i in 0..grid.len() {
        let lm = gauge_matrix(p1.values()[i], p2.values()[i]);
        let Some(li) = inv2(&lm) else {
            return Err(Error::precondition(format!("gauge matrix L is singular at grid index {i}")));
        };
        let e = s.exp_alpha.values()[i];
        let w = k * li * phi[i] * e;
        t[0].push(w[0]);
        t[1].push(w[1]);
    }
    let ch = s.spinor.character();
    let mu_t = (mu.0 * ch.0.to_f64(), mu.1 * ch.1.to_f64());
    let vmin = s.exp_alpha.map(|e| -I * e * 0.5);
    let residual = quasi_dirac_s_residual(grid, &t, &vmin, mu_t)?;
    let residual_unsigned = quasi_dirac_s_residual(grid, &t, &vmin, mu)?;
    let pre = clifford_preimage(mu_t, 1e-6);
    let sign = |x: Sign| if x == Sign::Plus { 1 } else { -1 };
    Ok(Theorem10Report {
        lambda: l,
        placement,
        mu,
        mu_tilde: mu_t,
        character: [sign(ch.0), sign(ch.1)],
        residual,
        residual_unsigned,
        joint_eigen_defect: joint,
        clifford_preimage: pre.map(|p| p.0),
        clifford_defect: pre.map_or(f64::INFINITY, |p| p.1),
    })
}

/// A Liouville generator of the Möbius group of R³ ∪ {∞}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MoebiusPrimitive {
    /// x ↦ Rx + t with R orthogonal.
    Isometry { rotation: [[f64; 3]; 3], translation: [f64; 3] },
    /// x ↦ (x − x₀)/|x − x₀|², i.e. (x₀ − x)⁻¹ in quaternions.
    Inversion { center: [f64; 3] },
    /// x ↦ λx.
    Homothety { factor: f64 },
}

impl MoebiusPrimitive {
    pub fn translation(t: V3) -> Self {
        MoebiusPrimitive::Isometry {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [t[0], t[1], t[2]],
        }
    }

    /// Rotation by `angle` about the unit vector `axis`.
    pub fn rotation(axis: V3, angle: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let m = r.matrix();
        MoebiusPrimitive::Isometry {
            rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)])),
            translation: [0.0; 3],
        }
    }

    pub fn inversion(center: V3) -> Self {
        MoebiusPrimitive::Inversion { center: [center[0], center[1], center[2]] }
    }

    fn rotation_matrix(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| r[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MoebiusPrimitive::Isometry { rotation, translation } => {
                let r = Self::rotation_matrix(rotation);
                let d = (r.transpose() * r - Matrix3::identity()).abs().max();
                if !(d <= 1e-12) {
                    return Err(Error::invalid(format!("isometry matrix is not orthogonal (defect {d:.2e})")));
                }
                if translation.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("isometry translation".into()));
                }
            }
            MoebiusPrimitive::Inversion { center } => {
                if center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("inversion center".into()));
                }
            }
            MoebiusPrimitive::Homothety { factor } => {
                if !(factor.is_finite() && *factor != 0.0) {
                    return Err(Error::invalid("homothety factor must be finite and nonzero"));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, p: &ProjectivePoint) -> ProjectivePoint {
        match (self, p.vector()) {
            (MoebiusPrimitive::Isometry { rotation, translation }, Some(x)) => {
                ProjectivePoint::finite(Self::rotation_matrix(rotation) * x + V3::from(*translation))
            }
            (MoebiusPrimitive::Homothety { factor }, Some(x)) => ProjectivePoint::finite(x * *factor),
            (MoebiusPrimitive::Inversion { center }, x) => match x {
                None => ProjectivePoint::finite(V3::zeros()),
                Some(x) => {
                    let d = x - V3::from(*center);
                    let n2 = d.norm_squared();
                    if n2 == 0.0 {
                        ProjectivePoint::Infinity
                    } else {
                        ProjectivePoint::finite(d / n2)
                    }
                }
            },
            (_, None) => ProjectivePoint::Infinity,
        }
    }
}

/// Inversion in quaternion form: (x₀ − x)⁻¹ as a point of R³.
pub fn inversion_matrix_form(x: &V3, center: &V3) -> Option<V3> {
    let m = inv2(&(r3_matrix(center) - r3_matrix(x)))?;
    let q = coordinates(&m);
    Some(V3::new(q[0], q[1], q[2]))
}

/// Composition g₁ ∘ g₂ ∘ … ∘ gₙ; `ops[n−1]` acts first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoebiusMap {
    pub ops: Vec<MoebiusPrimitive>,
}

impl MoebiusMap {
    pub fn new(ops: Vec<MoebiusPrimitive>) -> Result<Self> {
        for op in &ops {
            op.validate()?;
        }
        Ok(MoebiusMap { ops })
    }

    pub fn identity() -> Self {
        MoebiusMap::default()
    }

    /// self ∘ other.
    pub fn compose(&self, other: &MoebiusMap) -> Self {
        MoebiusMap { ops: self.ops.iter().chain(&other.ops).cloned().collect() }
    }

    pub fn apply(&self, p: &ProjectivePoint) -> ProjectivePoint {
        self.ops.iter().rev().fold(*p, |acc, op| op.apply(&acc))
    }
}

/// A Möbius image of an immersion in the original conformal parameter.
#[derive(Clone, Debug)]
pub struct MoebiusImage {
    pub immersion: ImmersionR3,
    /// e^{α'}/e^α, recomputed from the transformed immersion.
    pub conformal_factor: PeriodicField,
    /// max|⟨F_z, F_z⟩| / mean e^{2α} of the image.
    pub conformality_defect: f64,
    /// Closest approach of the surface to an inversion centre.
    pub min_center_distance: Option<f64>,
}

fn exp_alpha_of(f: &ImmersionR3) -> Result<PeriodicField> {
    let fz = f.fz()?;
    let n = f.grid().len();
    let v = (0..n).map(|i| c((2.0 * (0..3).map(|k| fz[k].values()[i].norm_sqr()).sum::<f64>()).sqrt(), 0.0));
    PeriodicField::new(*f.grid(), v.collect(), Character::PERIODIC)
}

pub fn apply_moebius(map: &MoebiusMap, f: &ImmersionR3) -> Result<MoebiusImage> {
    for op in &map.ops {
        op.validate()?;
    }
    let closed = f.is_torus(1e-12);
    let mut pts = f.positions();
    let mut periods = f.periods();
    let mut min_dist: Option<f64> = None;
    for op in map.ops.iter().rev() {
        match op {
            MoebiusPrimitive::Inversion { center } => {
                if !closed {
                    return Err(Error::precondition(
                        "inversions are only applied to closed tori (the image of a translation-periodic sheet is not periodic)",
                    ));
                }
                let x0 = V3::from(*center);
                let d = pts.iter().map(|p| (p - x0).norm()).fold(f64::INFINITY, f64::min);
                let diam = bounding_diameter(&pts);
                min_dist = Some(min_dist.map_or(d, |m: f64| m.min(d)));
                if d < NEAR_CENTER_REL * diam {
                    return Err(Error::precondition(format!(
                        "inversion center is too close to the surface: closest approach {d:.3e} < {:.1e} × diameter {diam:.3e}",
                        NEAR_CENTER_REL
                    )));
                }
            }
            MoebiusPrimitive::Isometry { rotation, .. } => {
                let r = MoebiusPrimitive::rotation_matrix(rotation);
                periods = periods.map(|t| r * t);
            }
            MoebiusPrimitive::Homothety { factor } => periods = periods.map(|t| t * *factor),
        }
        for p in pts.iter_mut() {
            match op.apply(&ProjectivePoint::finite(*p)).vector() {
                Some(v) => *p = v,
                None => return Err(Error::precondition("a grid point was mapped to infinity")),
            }
        }
    }
    let g = ImmersionR3::from_samples(*f.grid(), &pts, periods)?;
    let (conf, _, mean) = g.conformality_defect()?;
    let ea0 = exp_alpha_of(f)?;
    let ea1 = exp_alpha_of(&g)?;
    let factor = ea1.zip_map(&ea0, Character::PERIODIC, |a, b| a / b);
    Ok(MoebiusImage { immersion: g, conformal_factor: factor, conformality_defect: conf / mean, min_center_distance: min_dist })
}

fn bounding_diameter(pts: &[V3]) -> f64 {
    let mut lo = V3::repeat(f64::INFINITY);
    let mut hi = V3::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// 16|A|²e^{−2α} of an R³ surface.
pub fn blaschke_density(sd: &SurfaceData) -> PeriodicField {
    sd.hopf.abs2().zip_map(&sd.exp_alpha.abs2(), Character::PERIODIC, |a, e| a * 16.0 / e)
}

/// Comparison of the 1D spectral data of two y-independent potentials.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectraComparison1D {
    pub branch_before: Vec<C64>,
    pub branch_after: Vec<C64>,
    /// Matched max distance; infinite if the counts differ.
    pub branch_distance: f64,
    pub complete: bool,
    pub k_before: Vec<C64>,
    pub k_after: Vec<C64>,
    pub k_rel_defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Theorem11Report {
    /// max over the grid of min(|V − U*|, |V + U*|).
    pub defect: f64,
    pub defect_plus: f64,
    pub defect_minus: f64,
    /// Sign of V = ±U* chosen by majority vote, and the fraction voting for it.
    pub sign: i32,
    pub vote_fraction: f64,
    /// max |ΔB| / max B for B = 16|A|²e^{−2α}.
    pub blaschke_defect: f64,
    /// max | |A|e^{−α} before − after | / max; a footnote-level check.
    pub hopf_footnote_defect: f64,
    pub conformality_defect: f64,
    pub willmore_before: f64,
    pub willmore_after: f64,
    pub spectra: Option<SpectraComparison1D>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Theorem11Options {
    pub spectra: bool,
    pub region: Rect,
    pub search: RootSearch,
    pub invariants: usize,
}

impl Default for Theorem11Options {
    fn default() -> Self {
        Theorem11Options {
            spectra: true,
            region: Rect::new(-0.5, 0.5, -1.5, 1.5),
            search: RootSearch::default(),
            invariants: 3,
        }
    }
}

fn y_independent(u: &PeriodicField) -> bool {
    let g = u.grid();
    let l = u.lattice();
    if l.gamma1.im.abs() > 1e-12 * l.gamma1.norm() || l.gamma1.re <= 0.0 {
        return false;
    }
    let tol = 1e-8 * (1.0 + u.max_abs());
    (0..g.n1).all(|j| (0..g.n2).all(|k| (u.at(j, k) - u.at(j, 0)).norm() <= tol))
}

fn spectra_1d(a: &PeriodicField, b: &PeriodicField, o: &Theorem11Options) -> Result<SpectraComparison1D> {
    let pa = Potential1D::from_field_row(a)?;
    let pb = Potential1D::from_field_row(b)?;
    let ka = kruskal_invariants(&miura(&pa, MiuraConvention::default()), o.invariants)?.k;
    let kb = kruskal_invariants(&miura(&pb, MiuraConvention::default()), o.invariants)?.k;
    let k_rel = ka.iter().zip(&kb).map(|(x, y)| (x - y).norm() / (1.0 + x.norm())).fold(0.0, f64::max);
    let sa = branch_points(&Monodromy1D::new(pa), o.region, o.search)?;
    let sb = branch_points(&Monodromy1D::new(pb), o.region, o.search)?;
    let dist = if sa.branch_points.len() == sb.branch_points.len() {
        if sa.branch_points.is_empty() {
            0.0
        } else if sa.branch_points.len() <= 8 {
            multiset_distance(&sa.branch_points, &sb.branch_points)
        } else {
            // greedy matching for large sets
            sa.branch_points
                .iter()
                .map(|x| sb.branch_points.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        }
    } else {
        f64::INFINITY
    };
    Ok(SpectraComparison1D {
        complete: sa.complete && sb.complete,
        branch_before: sa.branch_points,
        branch_after: sb.branch_points,
        branch_distance: dist,
        k_before: ka,
        k_after: kb,
        k_rel_defect: k_rel,
    })
}

/// Compares the dual potential U* of an isothermic torus with the dual
/// potential V of its Möbius image in the same conformal parameter.
pub fn theorem11_check(f: &ImmersionR3, map: &MoebiusMap, opts: &Theorem11Options) -> Result<Theorem11Report> {
    let sd0 = fundamental_forms(f, CONFORMAL_TOL)?;
    let iso = sd0.isothermic_defect();
    if iso > ISOTHERMIC_TOL {
        return Err(Error::precondition(format!(
            "surface is not isothermic in this parameter: max|Im A| relative {iso:.2e}"
        )));
    }
    let img = apply_moebius(map, f)?;
    let sd1 = fundamental_forms(&img.immersion, CONFORMAL_TOL)?;
    let us = sd0.dual_potential();
    let v = sd1.dual_potential();
    let (mut dp, mut dm, mut d, mut plus) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for (a, b) in v.values().iter().zip(us.values()) {
        let (p, m) = ((a - b).norm(), (a + b).norm());
        dp = dp.max(p);
        dm = dm.max(m);
        d = d.max(p.min(m));
        if p <= m {
            plus += 1;
        }
    }
    let n = v.values().len();
    let sign = if 2 * plus >= n { 1 } else { -1 };
    let vote = if sign == 1 { plus } else { n - plus } as f64 / n as f64;
    let b0 = blaschke_density(&sd0);
    let b1 = blaschke_density(&sd1);
    let foot = |sd: &SurfaceData| sd.hopf.zip_map(&sd.exp_alpha, Character::PERIODIC, |a, e| c(a.norm() / e.re, 0.0));
    let (f0, f1) = (foot(&sd0), foot(&sd1));
    let spectra = if opts.spectra && y_independent(&us) && y_independent(&v) {
        Some(spectra_1d(&us, &v.scale(c(sign as f64, 0.0)), opts)?)
    } else {
        None
    };
    Ok(Theorem11Report {
        defect: d,
        defect_plus: dp,
        defect_minus: dm,
        sign,
        vote_fraction: vote,
        blaschke_defect: b1.max_diff(&b0) / b0.max_abs().max(f64::MIN_POSITIVE),
        hopf_footnote_defect: f1.max_diff(&f0) / f0.max_abs().max(f64::MIN_POSITIVE),
        conformality_defect: img.conformality_defect,
        willmore_before: crate::surface::willmore_direct(&sd0)?,
        willmore_after: crate::surface::willmore_direct(&sd1)?,
        spectra,
    })
}

/// Closed-form checks on the Clifford torus.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CliffordChecks {
    pub n: usize,
    pub exp_alpha_error: f64,
    pub potential_error: f64,
    /// max |A − 1/4|.
    pub hopf_error: f64,
    /// max ||A| − 1/4|, blind to the orientation of the normal.
    pub hopf_modulus_error: f64,
    /// Distance to the closed-form spinor, minimised over the global sign.
    pub spinor_error: f64,
    /// Same with the sign of the closed-form ψ₂ reversed.
    pub spinor_error_flipped: f64,
    pub character: [i32; 2],
    pub dirac_residual: f64,
    pub conjugate_residual: f64,
    pub constraint_defect: f64,
    pub gauss_residual: f64,
    pub codazzi_residual: f64,
}

pub fn clifford_checks(n: usize) -> Result<(S3Surface, CliffordChecks)> {
    let f = SU2Immersion::clifford(n, n)?;
    let s = spinor_from_s3(&f)?;
    let max_err = |fld: &PeriodicField, want: C64| fld.values().iter().map(|v| (v - want).norm()).fold(0.0, f64::max);
    let pts = s.grid.points();
    let (p1, p2) = (s.spinor.psi1.values(), s.spinor.psi2.values());
    let mut err = [0.0f64; 4];
    for (i, z) in pts.iter().enumerate() {
        let (a, b) = clifford_spinor(*z);
        err[0] = err[0].max((p1[i] - a).norm().max((p2[i] - b).norm()));
        err[1] = err[1].max((p1[i] + a).norm().max((p2[i] + b).norm()));
        err[2] = err[2].max((p1[i] - a).norm().max((p2[i] + b).norm()));
        err[3] = err[3].max((p1[i] + a).norm().max((p2[i] - b).norm()));
    }
    let ch = s.spinor.character();
    let sign = |x: Sign| if x == Sign::Plus { 1 } else { -1 };
    let (gauss, codazzi) = s.codazzi_residuals()?;
    let checks = CliffordChecks {
        n,
        exp_alpha_error: max_err(&s.exp_alpha, c(1.0 / SQRT_2, 0.0)),
        potential_error: max_err(s.potential(), c(0.0, -1.0 / (2.0 * SQRT_2))),
        hopf_error: max_err(&s.hopf, c(0.25, 0.0)),
        hopf_modulus_error: s.hopf.values().iter().map(|a| (a.norm() - 0.25).abs()).fold(0.0, f64::max),
        spinor_error: err[0].min(err[1]),
        spinor_error_flipped: err[2].min(err[3]),
        character: [sign(ch.0), sign(ch.1)],
        dirac_residual: s.spinor.dirac_residual()?,
        conjugate_residual: s.spinor.conjugate().dirac_residual()?,
        constraint_defect: s.spinor.constraint_defect(),
        gauss_residual: gauss,
        codazzi_residual: codazzi,
    };
    Ok((s, checks))
}

/// S³ versus R³ data of a torus and its stereographic projection; reported,
/// not asserted.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct S3R3Comparison {
    /// max | U*² − |V|² |, U* the dual potential of the projected torus.
    pub dual_potential_modulus_defect: f64,
    /// λ samples on the S³ spectral sheet W = −|V|²/λ (constant V only).
    pub lambdas: Vec<C64>,
    /// Smallest singular values of the truncated S³ operator there.
    pub s3_witness: Vec<f64>,
    /// Smallest singular values of the truncated R³ operator of the projection's U.
    pub r3_witness: Vec<f64>,
    /// Same for the R³ operator of the projection's U*.
    pub r3_dual_witness: Vec<f64>,
}

pub fn s3_r3_comparison(f: &SU2Immersion, s: &S3Surface, cutoff: usize, lambdas: &[C64]) -> Result<S3R3Comparison> {
    let proj = f.stereographic_image()?;
    let sd = fundamental_forms(&proj, CONFORMAL_TOL)?;
    let us = sd.dual_potential();
    let v = s.potential();
    let defect = us
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| (a.norm_sqr() - b.norm_sqr()).abs())
        .fold(0.0, f64::max);
    let v0 = v.mean();
    let ps = TruncatedPencil::sphere(v, cutoff)?;
    let pr = TruncatedPencil::new(&sd.potential(), cutoff)?;
    let pd = TruncatedPencil::new(&us, cutoff)?;
    let ks: Vec<QuasimomentumPoint> =
        lambdas.iter().map(|l| QuasimomentumPoint::from_spectral(*l, -c(v0.norm_sqr(), 0.0) / l)).collect();
    Ok(S3R3Comparison {
        dual_potential_modulus_defect: defect,
        lambdas: lambdas.to_vec(),
        s3_witness: ks.iter().map(|k| ps.witness(k)).collect(),
        r3_witness: ks.iter().map(|k| pr.witness(k)).collect(),
        r3_dual_witness: ks.iter().map(|k| pd.witness(k)).collect(),
    })
}
