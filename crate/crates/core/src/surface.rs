//! Surfaces in R³ in a conformal parameter: fundamental forms, the
//! Weierstrass spinor round trip, Willmore energy, closure and duality.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{c, Character, FundamentalGrid, Lattice, PeriodicField, Sign, C64, I};

pub type V3 = Vector3<f64>;

/// A conformal immersion stored as periodic part plus linear drift
/// `F(s,t) = P(s,t) + s·τ₁ + t·τ₂`.
#[derive(Clone, Debug)]
pub struct ImmersionR3 {
    grid: FundamentalGrid,
    periodic: [PeriodicField; 3],
    periods: [V3; 2],
}

impl ImmersionR3 {
    pub fn new(grid: FundamentalGrid, periodic: [PeriodicField; 3], periods: [V3; 2]) -> Result<Self> {
        for p in &periodic {
            if !p.character().is_periodic() || p.grid().n1 != grid.n1 || p.grid().n2 != grid.n2 {
                return Err(Error::invalid("immersion components must be (+,+) fields on the grid"));
            }
        }
        Ok(ImmersionR3 { grid, periodic, periods })
    }

    /// Samples a doubly periodic map given in the Euclidean coordinates of z.
    pub fn from_xy(grid: FundamentalGrid, f: impl Fn(f64, f64) -> V3) -> Result<Self> {
        let pts: Vec<V3> = grid.points().iter().map(|z| f(z.re, z.im)).collect();
        Self::from_samples(grid, &pts, [V3::zeros(); 2])
    }

    /// Builds from full position samples and known translation periods.
    pub fn from_samples(grid: FundamentalGrid, pts: &[V3], periods: [V3; 2]) -> Result<Self> {
        if pts.len() != grid.len() {
            return Err(Error::invalid("sample count does not match grid"));
        }
        let mut comps: Vec<PeriodicField> = Vec::with_capacity(3);
        for ci in 0..3 {
            let mut v = Vec::with_capacity(grid.len());
            for j in 0..grid.n1 {
                for k in 0..grid.n2 {
                    let (s, t) = grid.st(j, k);
                    let lin = periods[0][ci] * s + periods[1][ci] * t;
                    v.push(c(pts[j * grid.n2 + k][ci] - lin, 0.0));
                }
            }
            comps.push(PeriodicField::new(grid, v, Character::PERIODIC)?);
        }
        let [a, b, cc]: [PeriodicField; 3] = comps.try_into().unwrap();
        Self::new(grid, [a, b, cc], periods)
    }

    /// The affine plane F = (x, y, 0) over a lattice.
    pub fn plane(grid: FundamentalGrid) -> Self {
        let l = grid.lattice;
        let per = |g: C64| V3::new(g.re, g.im, 0.0);
        let z = PeriodicField::zeros(grid, Character::PERIODIC);
        ImmersionR3 { grid, periodic: [z.clone(), z.clone(), z], periods: [per(l.gamma1), per(l.gamma2)] }
    }

    pub fn grid(&self) -> &FundamentalGrid {
        &self.grid
    }
    pub fn periods(&self) -> [V3; 2] {
        self.periods
    }
    pub fn periodic_part(&self) -> &[PeriodicField; 3] {
        &self.periodic
    }

    pub fn is_torus(&self, tol: f64) -> bool {
        self.periods[0].norm() + self.periods[1].norm() < tol
    }

    pub fn position(&self, j: usize, k: usize) -> V3 {
        let (s, t) = self.grid.st(j, k);
        let idx = j * self.grid.n2 + k;
        V3::new(
            self.periodic[0].values()[idx].re,
            self.periodic[1].values()[idx].re,
            self.periodic[2].values()[idx].re,
        ) + self.periods[0] * s
            + self.periods[1] * t
    }

    pub fn positions(&self) -> Vec<V3> {
        let mut v = Vec::with_capacity(self.grid.len());
        for j in 0..self.grid.n1 {
            for k in 0..self.grid.n2 {
                v.push(self.position(j, k));
            }
        }
        v
    }

    /// F_z for each component (periodic part plus the constant from the drift).
    pub fn fz(&self) -> Result<[PeriodicField; 3]> {
        let l = self.grid.lattice;
        let d = l.delta();
        let mut out = Vec::with_capacity(3);
        for ci in 0..3 {
            let drift = (l.gamma2.conj() * self.periods[0][ci] - l.gamma1.conj() * self.periods[1][ci]) / d;
            out.push(self.periodic[ci].dz()?.map(|v| v + drift));
        }
        Ok(out.try_into().unwrap())
    }

    /// (max |⟨F_z,F_z⟩|, grid index of the max, mean of e^{2α}).
    pub fn conformality_defect(&self) -> Result<(f64, (usize, usize), f64)> {
        let fz = self.fz()?;
        let mut worst = (0.0, (0, 0));
        let mut mean = 0.0;
        for idx in 0..self.grid.len() {
            let q: C64 = (0..3).map(|ci| fz[ci].values()[idx].powi(2)).sum();
            let e2a: f64 = (0..3).map(|ci| 2.0 * fz[ci].values()[idx].norm_sqr()).sum();
            mean += e2a;
            if q.norm() > worst.0 {
                worst = (q.norm(), (idx / self.grid.n2, idx % self.grid.n2));
            }
        }
        Ok((worst.0, worst.1, mean / self.grid.len() as f64))
    }

    pub fn translate(&self, v: V3) -> Self {
        let mut out = self.clone();
        for ci in 0..3 {
            out.periodic[ci] = self.periodic[ci].map(|x| x + v[ci]);
        }
        out
    }

    /// OBJ mesh in a right-handed y-up frame: vertices in grid order and
    /// quads over the periodic grid (seams wrap).
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for p in self.positions() {
            // z-up to y-up: (x, y, z) -> (x, z, -y)
            out.push_str(&format!("v {:.12e} {:.12e} {:.12e}\n", p[0], p[2], -p[1]));
        }
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let id = |j: usize, k: usize| (j % n1) * n2 + (k % n2) + 1;
        for j in 0..n1 {
            for k in 0..n2 {
                out.push_str(&format!(
                    "f {} {} {} {}\n",
                    id(j, k),
                    id(j + 1, k),
                    id(j + 1, k + 1),
                    id(j, k + 1)
                ));
            }
        }
        out
    }
}

fn dot3(a: &[C64; 3], b: &[C64; 3]) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Data of the fundamental forms in the conformal parameter.
#[derive(Clone, Debug)]
pub struct SurfaceData {
    pub exp_alpha: PeriodicField,
    pub mean_curv: PeriodicField,
    pub gauss_curv: PeriodicField,
    pub hopf: PeriodicField,
    pub b: PeriodicField,
    pub normal: [PeriodicField; 3],
}

impl SurfaceData {
    pub fn alpha(&self) -> PeriodicField {
        self.exp_alpha.map(|v| c(v.re.ln(), 0.0))
    }

    /// Potential U = ½He^α.
    pub fn potential(&self) -> PeriodicField {
        self.mean_curv.mul(&self.exp_alpha).scale(c(0.5, 0.0))
    }

    /// Principal curvatures (k₁ ≥ k₂) = H ± 2|A|e^{−2α}.
    pub fn principal_curvatures(&self) -> (PeriodicField, PeriodicField) {
        let d = self.hopf.zip_map(&self.exp_alpha, Character::PERIODIC, |a, e| c(2.0 * a.norm() / (e.re * e.re), 0.0));
        (self.mean_curv.add(&d), self.mean_curv.sub(&d))
    }

    /// Curvatures of the coordinate lines x = const and y = const of an
    /// isothermic parameter: (k_x, k_y) = H ± 2Re(A)e^{−2α}.
    pub fn coordinate_curvatures(&self) -> (PeriodicField, PeriodicField) {
        let d = self.hopf.zip_map(&self.exp_alpha, Character::PERIODIC, |a, e| c(2.0 * a.re / (e.re * e.re), 0.0));
        (self.mean_curv.add(&d), self.mean_curv.sub(&d))
    }

    /// Dual potential −Re(A)e^{−α} = (k_y − k_x)e^α/4.
    pub fn dual_potential(&self) -> PeriodicField {
        self.hopf.zip_map(&self.exp_alpha, Character::PERIODIC, |a, e| c(-a.re / e.re, 0.0))
    }

    /// max |Im A| (isothermic defect in this parameter).
    pub fn isothermic_defect(&self) -> f64 {
        self.hopf.max_abs_im()
    }

    /// Codazzi residuals (Gauss equation, Codazzi equation), max-norm.
    pub fn codazzi_residuals(&self) -> Result<(f64, f64)> {
        let alpha = self.alpha();
        let azz = alpha.dz()?.dzbar()?;
        let e = &self.exp_alpha;
        let mut r1 = 0.0f64;
        for i in 0..e.values().len() {
            let ea = e.values()[i].re;
            let b = self.b.values()[i].re;
            let a = self.hopf.values()[i];
            let v = azz.values()[i].re + (b * b - a.norm_sqr()) / (ea * ea);
            r1 = r1.max(v.abs());
        }
        let az = self.hopf.dzbar()?;
        let hz = self.mean_curv.dz()?;
        let mut r2 = 0.0f64;
        for i in 0..e.values().len() {
            let ea = e.values()[i].re;
            r2 = r2.max((az.values()[i] - hz.values()[i] * 0.5 * ea * ea).norm());
        }
        Ok((r1, r2))
    }
}

/// First and second fundamental forms.
pub fn fundamental_forms(f: &ImmersionR3, conformal_tol: f64) -> Result<SurfaceData> {
    let (defect, at, mean_e2a) = f.conformality_defect()?;
    if defect > conformal_tol * mean_e2a {
        return Err(Error::precondition(format!(
            "parameter is not conformal: |<F_z,F_z>| = {defect:.3e} at grid point {at:?} \
             exceeds {conformal_tol:.1e} x mean(e^2a) = {:.3e}",
            conformal_tol * mean_e2a
        )));
    }
    let fz = f.fz()?;
    let grid = *f.grid();
    let n = grid.len();
    let fzz: Vec<PeriodicField> = fz.iter().map(|x| x.dz()).collect::<Result<_>>()?;
    let fzzb: Vec<PeriodicField> = fz.iter().map(|x| x.dzbar()).collect::<Result<_>>()?;
    let mut ea = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut kk = Vec::with_capacity(n);
    let mut av = Vec::with_capacity(n);
    let mut bv = Vec::with_capacity(n);
    let mut nv = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for i in 0..n {
        let z: [C64; 3] = [fz[0].values()[i], fz[1].values()[i], fz[2].values()[i]];
        let fx = V3::new(2.0 * z[0].re, 2.0 * z[1].re, 2.0 * z[2].re);
        let fy = V3::new(-2.0 * z[0].im, -2.0 * z[1].im, -2.0 * z[2].im);
        let cr = fx.cross(&fy);
        let nn = cr / cr.norm();
        let e2a: f64 = z.iter().map(|v| 2.0 * v.norm_sqr()).sum();
        let nc = [c(nn[0], 0.0), c(nn[1], 0.0), c(nn[2], 0.0)];
        let a = dot3(&[fzz[0].values()[i], fzz[1].values()[i], fzz[2].values()[i]], &nc);
        let b = dot3(&[fzzb[0].values()[i], fzzb[1].values()[i], fzzb[2].values()[i]], &nc).re;
        ea.push(c(e2a.sqrt(), 0.0));
        h.push(c(2.0 * b / e2a, 0.0));
        kk.push(c(4.0 * (b * b - a.norm_sqr()) / (e2a * e2a), 0.0));
        av.push(a);
        bv.push(c(b, 0.0));
        for ci in 0..3 {
            nv[ci].push(c(nn[ci], 0.0));
        }
    }
    let pf = |v: Vec<C64>| PeriodicField::new(grid, v, Character::PERIODIC);
    let [n0, n1, n2] = nv;
    Ok(SurfaceData {
        exp_alpha: pf(ea)?,
        mean_curv: pf(h)?,
        gauss_curv: pf(kk)?,
        hopf: pf(av)?,
        b: pf(bv)?,
        normal: [pf(n0)?, pf(n1)?, pf(n2)?],
    })
}

/// Default conformality tolerance (relative to mean e^{2α}).
pub const CONFORMAL_TOL: f64 = 1e-8;

/// A Weierstrass spinor (ψ₁, ψ₂) with its real potential U.
#[derive(Clone, Debug)]
pub struct WeierstrassSpinor {
    pub psi1: PeriodicField,
    pub psi2: PeriodicField,
    pub potential: PeriodicField,
}

impl WeierstrassSpinor {
    pub fn new(psi1: PeriodicField, psi2: PeriodicField, potential: PeriodicField) -> Result<Self> {
        if psi1.character() != psi2.character() {
            return Err(Error::Character(format!(
                "spinor components have characters {:?} and {:?}",
                psi1.character().to_pair(),
                psi2.character().to_pair()
            )));
        }
        if !potential.character().is_periodic() {
            return Err(Error::Character("potential must have character (+,+)".into()));
        }
        Ok(WeierstrassSpinor { psi1, psi2, potential })
    }

    pub fn character(&self) -> Character {
        self.psi1.character()
    }
    pub fn lattice(&self) -> &Lattice {
        self.psi1.lattice()
    }

    /// e^α = |ψ₁|² + |ψ₂|².
    pub fn exp_alpha(&self) -> PeriodicField {
        self.psi1.abs2().add(&self.psi2.abs2())
    }

    /// (max |∂ψ₂ + Uψ₁|, max |−∂̄ψ₁ + Uψ₂|).
    pub fn dirac_residuals(&self) -> Result<(f64, f64)> {
        let r1 = self.psi2.dz()?.add(&self.potential.mul(&self.psi1));
        let r2 = self.potential.mul(&self.psi2).sub(&self.psi1.dzbar()?);
        Ok((r1.max_abs(), r2.max_abs()))
    }

    pub fn dirac_residual(&self) -> Result<f64> {
        let (a, b) = self.dirac_residuals()?;
        Ok(a + b)
    }

    /// Components of F_z: (i/2(ψ̄₂²+ψ₁²), ½(ψ̄₂²−ψ₁²), ψ₁ψ̄₂).
    pub fn fz(&self) -> [PeriodicField; 3] {
        let p1s = self.psi1.mul(&self.psi1);
        let p2bs = self.psi2.conj().mul(&self.psi2.conj());
        let z1 = p2bs.add(&p1s).scale(I * 0.5);
        let z2 = p2bs.sub(&p1s).scale(c(0.5, 0.0));
        let z3 = self.psi1.mul(&self.psi2.conj());
        [z1, z2, z3]
    }

    /// ∫ψ̄₁² dz̄∧dz, ∫ψ₂² dz̄∧dz, ∫ψ̄₁ψ₂ dz̄∧dz with dz̄∧dz = 2i dx∧dy.
    pub fn closure_defect(&self) -> Result<[C64; 3]> {
        let p1b = self.psi1.conj();
        let w = I * 2.0;
        Ok([
            p1b.mul(&p1b).integrate()? * w,
            self.psi2.mul(&self.psi2).integrate()? * w,
            p1b.mul(&self.psi2).integrate()? * w,
        ])
    }

    /// 4∫U² dx dy.
    pub fn willmore(&self) -> Result<f64> {
        Ok(4.0 * self.potential.mul(&self.potential).integrate()?.re)
    }

    /// U read off the spinor alone: the least-squares solution of
    /// ∂ψ₂ = −Uψ₁, ∂̄ψ₁ = Uψ₂ at each point.
    pub fn potential_from_dirac(&self) -> Result<PeriodicField> {
        let d2 = self.psi2.dz()?;
        let d1 = self.psi1.dzbar()?;
        let n = self.psi1.values().len();
        let v = (0..n).map(|i| {
            let (a, b) = (self.psi1.values()[i], self.psi2.values()[i]);
            (-a.conj() * d2.values()[i] + b.conj() * d1.values()[i]) / (a.norm_sqr() + b.norm_sqr())
        });
        PeriodicField::new(*self.psi1.grid(), v.collect(), Character::PERIODIC)
    }

    /// 4∫U² dx dy with U from [`Self::potential_from_dirac`].
    pub fn willmore_from_dirac(&self) -> Result<f64> {
        let u = self.potential_from_dirac()?.re();
        Ok(4.0 * u.mul(&u).integrate()?.re)
    }

    /// Residuals of the spinor Gauss–Weingarten system
    /// ψ₁_z = α_zψ₁ + Ae^{−α}ψ₂ and ψ₂_z̄ = −Āe^{−α}ψ₁ + α_z̄ψ₂.
    pub fn gauss_weingarten_residuals(&self, hopf: &PeriodicField) -> Result<(f64, f64)> {
        let ea = self.exp_alpha();
        let alpha = ea.map(|v| c(v.re.ln(), 0.0));
        let az = alpha.dz()?;
        let azb = alpha.dzbar()?;
        let aea = hopf.zip_map(&ea, Character::PERIODIC, |a, e| a / e.re);
        let r1 = self.psi1.dz()?.sub(&az.mul(&self.psi1)).sub(&aea.mul(&self.psi2));
        let r2 = self.psi2.dzbar()?.add(&aea.conj().mul(&self.psi1)).sub(&azb.mul(&self.psi2));
        Ok((r1.max_abs(), r2.max_abs()))
    }

    /// Same surface in the parameter w = t²z: ψ̃ = (ψ₁/t, ψ₂/t̄), Ũ = U/|t|².
    pub fn reparametrize(&self, t: C64) -> Result<Self> {
        if t.norm() == 0.0 || !t.is_finite() {
            return Err(Error::invalid("reparametrization factor must be nonzero and finite"));
        }
        let l = self.lattice();
        let t2 = t * t;
        let lat = Lattice::new(l.gamma1 * t2, l.gamma2 * t2)?;
        Ok(WeierstrassSpinor {
            psi1: self.psi1.scale(t.inv()).with_lattice(lat),
            psi2: self.psi2.scale(t.conj().inv()).with_lattice(lat),
            potential: self.potential.scale(c(1.0 / t.norm_sqr(), 0.0)).with_lattice(lat),
        })
    }

    /// The exact sign-flip isospectrality: (ψ₁, −ψ₂) solves D with −U.
    pub fn sign_flipped(&self) -> Self {
        WeierstrassSpinor {
            psi1: self.psi1.clone(),
            psi2: self.psi2.scale(c(-1.0, 0.0)),
            potential: self.potential.scale(c(-1.0, 0.0)),
        }
    }
}

/// Picks the square root of `q` closest to `pred`; returns it and the
/// ambiguity ratio min/max of the two candidate distances.
fn nearest_root(q: C64, pred: C64) -> (C64, f64) {
    let r = q.sqrt();
    let (dp, dm) = ((r - pred).norm(), (r + pred).norm());
    if dp <= dm {
        (r, dp / dm.max(f64::MIN_POSITIVE))
    } else {
        (-r, dm / dp.max(f64::MIN_POSITIVE))
    }
}

struct Unwrapper<'a> {
    q1: &'a [C64],
    q2: &'a [C64],
    z3: &'a [C64],
    floor: f64,
}

impl Unwrapper<'_> {
    /// (ψ₁, ψ̄₂) at `idx` continuing `pred`, led by the larger square.
    fn assign(&self, idx: usize, pred: (C64, C64)) -> Result<((C64, C64), f64)> {
        let (a, b) = (self.q1[idx], self.q2[idx]);
        if a.norm().max(b.norm()) < self.floor {
            return Err(Error::precondition(format!(
                "branch continuation met a common zero of both spinor squares at grid index {idx}"
            )));
        }
        if a.norm() >= b.norm() {
            let (p1, amb) = nearest_root(a, pred.0);
            Ok(((p1, self.z3[idx] / p1), amb))
        } else {
            let (p2, amb) = nearest_root(b, pred.1);
            Ok(((self.z3[idx] / p2, p2), amb))
        }
    }

    /// Sign relating a continued value to the stored one at `idx`.
    fn wrap_sign(&self, idx: usize, pred: (C64, C64), stored: (C64, C64)) -> Result<(Sign, f64)> {
        let (v, amb) = self.assign(idx, pred)?;
        let lead = if self.q1[idx].norm() >= self.q2[idx].norm() { (v.0, stored.0) } else { (v.1, stored.1) };
        let ratio = lead.0 / lead.1;
        let sign = if ratio.re > 0.0 { Sign::Plus } else { Sign::Minus };
        Ok((sign, amb.max((ratio - c(sign.to_f64(), 0.0)).norm())))
    }
}

const AMBIGUITY_LIMIT: f64 = 0.5;

fn extrapolate(a: (C64, C64), b: Option<(C64, C64)>) -> (C64, C64) {
    match b {
        Some(b) => (a.0 * 2.0 - b.0, a.1 * 2.0 - b.1),
        None => a,
    }
}

/// Recovers the Weierstrass spinor of a conformal immersion.
pub fn spinor_from_surface(f: &ImmersionR3) -> Result<WeierstrassSpinor> {
    let sd = fundamental_forms(f, CONFORMAL_TOL)?;
    let fz = f.fz()?;
    let grid = *f.grid();
    let z: [Vec<C64>; 3] = [0, 1, 2].map(|ci| fz[ci].values().to_vec());
    let scale = sd.exp_alpha.values().iter().map(|v| v.re).fold(0.0, f64::max);
    let (psi1, psi2) = spinor_roots(grid, &z, scale)?;
    let u = sd.potential();
    WeierstrassSpinor::new(psi1, psi2, u)
}

/// Solves Z₁ = (i/2)(ψ̄₂² + ψ₁²), Z₂ = ½(ψ̄₂² − ψ₁²), Z₃ = ψ₁ψ̄₂ for (ψ₁, ψ₂)
/// by continuing the square roots along the grid and reads off the spin
/// character from the wrap-around signs.
pub(crate) fn spinor_roots(grid: FundamentalGrid, z: &[Vec<C64>; 3], scale: f64) -> Result<(PeriodicField, PeriodicField)> {
    let (n1, n2) = (grid.n1, grid.n2);
    let n = grid.len();
    let q1: Vec<C64> = (0..n).map(|i| -I * z[0][i] - z[1][i]).collect();
    let q2: Vec<C64> = (0..n).map(|i| -I * z[0][i] + z[1][i]).collect();
    let un = Unwrapper { q1: &q1, q2: &q2, z3: &z[2], floor: 1e-10 * scale };
    let idx = |j: usize, k: usize| j * n2 + k;

    let mut val = vec![(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); n];
    // seed: Re ψ₁ ≥ 0 at the origin
    let mut seed = un.assign(0, (c(1.0, 0.0), c(1.0, 0.0)))?.0;
    if seed.0.re < 0.0 || (seed.0.re == 0.0 && seed.0.im < 0.0) {
        seed = (-seed.0, -seed.1);
    }
    val[0] = seed;
    let mut worst = 0.0f64;
    for j in 1..n1 {
        let prev2 = if j >= 2 { Some(val[idx(j - 2, 0)]) } else { None };
        let (v, amb) = un.assign(idx(j, 0), extrapolate(val[idx(j - 1, 0)], prev2))?;
        worst = worst.max(amb);
        val[idx(j, 0)] = v;
    }
    for j in 0..n1 {
        for k in 1..n2 {
            let prev2 = if k >= 2 { Some(val[idx(j, k - 2)]) } else { None };
            let (v, amb) = un.assign(idx(j, k), extrapolate(val[idx(j, k - 1)], prev2))?;
            worst = worst.max(amb);
            val[idx(j, k)] = v;
        }
    }
    if worst > AMBIGUITY_LIMIT {
        return Err(Error::precondition(format!(
            "square-root continuation is ambiguous (ratio {worst:.2}); refine the grid"
        )));
    }

    let mut eps = [None::<Sign>, None::<Sign>];
    for k in 0..n2 {
        let pred = extrapolate(val[idx(n1 - 1, k)], Some(val[idx(n1 - 2, k)]));
        let (s, q) = un.wrap_sign(idx(0, k), pred, val[idx(0, k)])?;
        check_sign(&mut eps[0], s, q, "first")?;
    }
    for j in 0..n1 {
        let pred = extrapolate(val[idx(j, n2 - 1)], Some(val[idx(j, n2 - 2)]));
        let (s, q) = un.wrap_sign(idx(j, 0), pred, val[idx(j, 0)])?;
        check_sign(&mut eps[1], s, q, "second")?;
    }
    let ch = Character(eps[0].unwrap(), eps[1].unwrap());
    let psi1 = PeriodicField::new(grid, val.iter().map(|v| v.0).collect(), ch)?;
    let psi2 = PeriodicField::new(grid, val.iter().map(|v| v.1.conj()).collect(), ch)?;
    Ok((psi1, psi2))
}

fn check_sign(slot: &mut Option<Sign>, s: Sign, quality: f64, which: &str) -> Result<()> {
    if quality > AMBIGUITY_LIMIT {
        return Err(Error::precondition(format!(
            "spin character along the {which} generator is not within tolerance of ±1 (defect {quality:.2})"
        )));
    }
    match slot {
        None => *slot = Some(s),
        Some(prev) if *prev != s => {
            return Err(Error::precondition(format!(
                "inconsistent spin structure: sign along the {which} generator varies across the grid"
            )))
        }
        _ => {}
    }
    Ok(())
}

/// Integrates the Weierstrass formulas with F(0) = base.
pub fn surface_from_spinor(psi: &WeierstrassSpinor, base: V3) -> Result<ImmersionR3> {
    antiderivative(&psi.fz(), base)
}

/// Real immersion with prescribed F_z (three (+,+) fields), anchored at F(0) = base.
pub fn antiderivative(fz: &[PeriodicField; 3], base: V3) -> Result<ImmersionR3> {
    let grid = *fz[0].grid();
    let l = grid.lattice;
    let mut comps = Vec::with_capacity(3);
    let mut periods = [V3::zeros(); 2];
    for ci in 0..3 {
        let (p, f0) = fz[ci].real_antiderivative()?;
        let shift = base[ci] - p.values()[0].re;
        comps.push(p.map(|v| v + shift));
        periods[0][ci] = 2.0 * (f0 * l.gamma1).re;
        periods[1][ci] = 2.0 * (f0 * l.gamma2).re;
    }
    ImmersionR3::new(grid, comps.try_into().unwrap(), periods)
}

/// ∫H² e^{2α} dx dy.
pub fn willmore_direct(s: &SurfaceData) -> Result<f64> {
    let h2e = s.mean_curv.mul(&s.mean_curv).mul(&s.exp_alpha).mul(&s.exp_alpha);
    Ok(h2e.integrate()?.re)
}

/// Default isothermic tolerance on max |Im A| relative to 1 + max |A|.
pub const ISOTHERMIC_TOL: f64 = 1e-8;

/// The dual isothermic surface F*_z = e^{−2α}F_z̄, anchored at the origin.
pub fn dual_isothermic(f: &ImmersionR3, tol: f64) -> Result<ImmersionR3> {
    let sd = fundamental_forms(f, CONFORMAL_TOL)?;
    let defect = sd.isothermic_defect();
    if defect > tol * (1.0 + sd.hopf.max_abs()) {
        return Err(Error::precondition(format!(
            "surface is not isothermic in this parameter: max |Im A| = {defect:.3e}"
        )));
    }
    let fz = f.fz()?;
    let em2 = sd.exp_alpha.map(|e| c(1.0 / (e.re * e.re), 0.0));
    let dual: Vec<PeriodicField> = fz.iter().map(|x| em2.mul(&x.conj())).collect();
    antiderivative(&dual.try_into().unwrap(), V3::zeros())
}

/// Closed-form data of the torus of revolution with profile radius r and
/// axis distance R, in its conformal parameter z = x + iy (y the rotation angle).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RevolutionTorus {
    pub big_r: f64,
    pub r: f64,
}

impl RevolutionTorus {
    pub fn new(big_r: f64, r: f64) -> Result<Self> {
        if !(r > 0.0 && big_r > r) {
            return Err(Error::invalid(format!("need R > r > 0, got R={big_r}, r={r}")));
        }
        Ok(RevolutionTorus { big_r, r })
    }
    fn k(&self) -> f64 {
        (self.big_r * self.big_r - self.r * self.r).sqrt()
    }
    pub fn omega(&self) -> f64 {
        self.k() / self.r
    }
    /// Period in x.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega()
    }
    pub fn lattice(&self) -> Lattice {
        Lattice::rectangular(self.period(), 2.0 * PI).unwrap()
    }
    /// Distance from the axis, equal to e^α.
    pub fn rho(&self, x: f64) -> f64 {
        let s = self.omega() * x;
        self.k() * self.k() / (self.big_r - self.r * s.cos())
    }
    pub fn height(&self, x: f64) -> f64 {
        let s = self.omega() * x;
        self.r * self.k() * s.sin() / (self.big_r - self.r * s.cos())
    }
    /// cos of the angle on the profile circle.
    pub fn cos_theta(&self, x: f64) -> f64 {
        let s = self.omega() * x;
        (self.big_r * s.cos() - self.r) / (self.big_r - self.r * s.cos())
    }
    pub fn point(&self, x: f64, y: f64) -> V3 {
        let rho = self.rho(x);
        V3::new(rho * y.cos(), rho * y.sin(), self.height(x))
    }
    /// Mean curvature for the normal F_x × F_y (which points towards the axis at the outer equator).
    pub fn mean_curvature(&self, x: f64) -> f64 {
        let ct = self.cos_theta(x);
        (self.big_r + 2.0 * self.r * ct) / (2.0 * self.r * (self.big_r + self.r * ct))
    }
    pub fn potential(&self, x: f64) -> f64 {
        (self.big_r + 2.0 * self.r * self.cos_theta(x)) / (4.0 * self.r)
    }
    /// Potential of the dual isothermic surface (constant).
    pub fn dual_potential(&self) -> f64 {
        -self.big_r / (4.0 * self.r)
    }
    pub fn willmore(&self) -> f64 {
        PI * PI * self.big_r * self.big_r / (self.r * self.k())
    }
    pub fn immersion(&self, n1: usize, n2: usize) -> Result<ImmersionR3> {
        let grid = FundamentalGrid::new(self.lattice(), n1, n2)?;
        ImmersionR3::from_xy(grid, |x, y| self.point(x, y))
    }
}

/// JSON surface report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct SurfaceReport {
    pub willmore: f64,
    pub willmore_from_potential: f64,
    pub closure_defect: [f64; 3],
    pub isothermic_defect: f64,
    pub characters: [i32; 2],
    pub dirac_residual: f64,
    pub codazzi_residuals: [f64; 2],
}

pub fn surface_report(f: &ImmersionR3) -> Result<SurfaceReport> {
    let sd = fundamental_forms(f, CONFORMAL_TOL)?;
    let psi = spinor_from_surface(f)?;
    let cd = psi.closure_defect()?;
    let (c1, c2) = sd.codazzi_residuals()?;
    Ok(SurfaceReport {
        willmore: willmore_direct(&sd)?,
        willmore_from_potential: psi.willmore()?,
        closure_defect: [cd[0].norm(), cd[1].norm(), cd[2].norm()],
        isothermic_defect: sd.isothermic_defect(),
        characters: psi.character().to_pair(),
        dirac_residual: psi.dirac_residual()?,
        codazzi_residuals: [c1, c2],
    })
}
