//! Lattices, sampled periodic fields with spin characters, and spectral
//! calculus on the fundamental parallelogram.
//!
//! A field lives on the grid `z_{jk} = (j/n1)·γ₁ + (k/n2)·γ₂` and is stored
//! row-major (`index = j·n2 + k`). Along a generator with character `-1` the
//! Fourier frequencies are half-integers, so antiperiodic spinors need no
//! doubled domain.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Sign of a field under translation by one lattice generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_i32(v: i32) -> Result<Sign> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(Error::invalid(format!("character entries must be ±1, got {v}"))),
        }
    }
    pub fn to_i32(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
    pub fn to_f64(self) -> f64 {
        self.to_i32() as f64
    }
    pub fn mul(self, o: Sign) -> Sign {
        if self == o {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
    /// Frequency offset: 0 for periodic, ½ for antiperiodic.
    fn shift(self) -> f64 {
        match self {
            Sign::Plus => 0.0,
            Sign::Minus => 0.5,
        }
    }
}

/// The pair (ε₁, ε₂).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Character(pub Sign, pub Sign);

impl Character {
    pub const PERIODIC: Character = Character(Sign::Plus, Sign::Plus);

    pub fn mul(self, o: Character) -> Character {
        Character(self.0.mul(o.0), self.1.mul(o.1))
    }
    pub fn is_periodic(self) -> bool {
        self == Character::PERIODIC
    }
    pub fn to_pair(self) -> [i32; 2] {
        [self.0.to_i32(), self.1.to_i32()]
    }
    pub fn from_pair(p: [i32; 2]) -> Result<Character> {
        Ok(Character(Sign::from_i32(p[0])?, Sign::from_i32(p[1])?))
    }
}

/// Unimodular integer matrix `[[a,b],[c,d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sl2z {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl Sl2z {
    pub const IDENTITY: Sl2z = Sl2z { a: 1, b: 0, c: 0, d: 1 };

    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Sl2z> {
        let m = Sl2z { a, b, c, d };
        if m.det() != 1 {
            return Err(Error::invalid(format!(
                "basis change must have determinant 1, got {}",
                m.det()
            )));
        }
        Ok(m)
    }
    pub fn det(&self) -> i64 {
        self.a * self.d - self.b * self.c
    }
    pub fn inverse(&self) -> Sl2z {
        Sl2z { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }
    pub fn compose(&self, o: &Sl2z) -> Sl2z {
        Sl2z {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }
}

/// Period lattice Λ = γ₁Z + γ₂Z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub gamma1: C64,
    pub gamma2: C64,
    pub basis_change: Option<Sl2z>,
}

impl Lattice {
    pub fn new(gamma1: C64, gamma2: C64) -> Result<Lattice> {
        let l = Lattice { gamma1, gamma2, basis_change: None };
        if !(gamma1.is_finite() && gamma2.is_finite()) {
            return Err(Error::NonFinite("lattice generators".into()));
        }
        let v = (gamma1.conj() * gamma2).im;
        if v.abs() <= 1e-14 * (gamma1.norm() * gamma2.norm()).max(f64::MIN_POSITIVE) {
            return Err(Error::invalid("lattice generators are linearly dependent over R"));
        }
        Ok(l)
    }

    /// Z + iZ.
    pub fn square() -> Lattice {
        Lattice::new(c(1.0, 0.0), c(0.0, 1.0)).unwrap()
    }

    /// Lattice with generators `a` and `i·b`.
    pub fn rectangular(a: f64, b: f64) -> Result<Lattice> {
        Lattice::new(c(a, 0.0), c(0.0, b))
    }

    /// Z + e^{iπ/3}Z.
    pub fn hexagonal() -> Lattice {
        Lattice::new(c(1.0, 0.0), C64::from_polar(1.0, PI / 3.0)).unwrap()
    }

    pub fn area(&self) -> f64 {
        (self.gamma1.conj() * self.gamma2).im.abs()
    }

    /// Δ = γ₁γ̄₂ − γ̄₁γ₂ (purely imaginary, nonzero).
    pub fn delta(&self) -> C64 {
        self.gamma1 * self.gamma2.conj() - self.gamma1.conj() * self.gamma2
    }

    pub fn generator(&self, j: usize) -> C64 {
        if j == 0 {
            self.gamma1
        } else {
            self.gamma2
        }
    }

    /// Lattice coordinates (s,t) of z = s·γ₁ + t·γ₂.
    pub fn coords(&self, z: C64) -> (f64, f64) {
        let d = self.delta();
        let s = (z * self.gamma2.conj() - z.conj() * self.gamma2) / d;
        let t = (z.conj() * self.gamma1 - z * self.gamma1.conj()) / d;
        (s.re, t.re)
    }

    pub fn point(&self, s: f64, t: f64) -> C64 {
        self.gamma1 * s + self.gamma2 * t
    }

    /// Dual lattice basis (as complex numbers γ* = k1 + i·k2) with
    /// `⟨γ*_i, γ_j⟩ = δ_ij` under `⟨k,γ⟩ = k1·Re γ + k2·Im γ`.
    pub fn dual_basis(&self) -> [C64; 2] {
        let (a, b) = (self.gamma1.re, self.gamma1.im);
        let (cc, d) = (self.gamma2.re, self.gamma2.im);
        let det = a * d - b * cc;
        // rows of the inverse transpose of [[a,b],[c,d]]
        let k1 = c(d / det, -cc / det);
        let k2 = c(-b / det, a / det);
        [k1, k2]
    }

    /// Dual vector `p·γ*₁ + q·γ*₂`.
    pub fn dual_vector(&self, p: i64, q: i64) -> C64 {
        let [a, b] = self.dual_basis();
        a * (p as f64) + b * (q as f64)
    }

    pub fn change_basis(&self, m: &Sl2z) -> Result<Lattice> {
        Sl2z::new(m.a, m.b, m.c, m.d)?;
        let g1 = self.gamma1 * (m.a as f64) + self.gamma2 * (m.b as f64);
        let g2 = self.gamma1 * (m.c as f64) + self.gamma2 * (m.d as f64);
        let record = match self.basis_change {
            None => *m,
            Some(prev) => m.compose(&prev),
        };
        let record = if record == Sl2z::IDENTITY { None } else { Some(record) };
        Ok(Lattice { gamma1: g1, gamma2: g2, basis_change: record })
    }

    /// Wirtinger symbol of ∂ acting on `e^{2πi(f1·s + f2·t)}`.
    pub fn dz_symbol(&self, f1: f64, f2: f64) -> C64 {
        let d = self.delta();
        I * (2.0 * PI) * (self.gamma2.conj() * f1 - self.gamma1.conj() * f2) / d
    }

    /// Wirtinger symbol of ∂̄ acting on `e^{2πi(f1·s + f2·t)}`.
    pub fn dzbar_symbol(&self, f1: f64, f2: f64) -> C64 {
        let d = self.delta();
        I * (2.0 * PI) * (self.gamma1 * f2 - self.gamma2 * f1) / d
    }
}

/// Sample grid on the fundamental parallelogram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalGrid {
    pub lattice: Lattice,
    pub n1: usize,
    pub n2: usize,
}

impl FundamentalGrid {
    pub fn new(lattice: Lattice, n1: usize, n2: usize) -> Result<FundamentalGrid> {
        for n in [n1, n2] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::invalid(format!("grid sizes must be even and >= 8, got {n}")));
            }
        }
        Ok(FundamentalGrid { lattice, n1, n2 })
    }
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn st(&self, j: usize, k: usize) -> (f64, f64) {
        (j as f64 / self.n1 as f64, k as f64 / self.n2 as f64)
    }
    pub fn point(&self, j: usize, k: usize) -> C64 {
        let (s, t) = self.st(j, k);
        self.lattice.point(s, t)
    }
    pub fn points(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.len());
        for j in 0..self.n1 {
            for k in 0..self.n2 {
                v.push(self.point(j, k));
            }
        }
        v
    }
    pub fn with_lattice(&self, lattice: Lattice) -> FundamentalGrid {
        FundamentalGrid { lattice, ..*self }
    }
}

/// Frequencies in FFT order for `n` samples, shifted by ½ when antiperiodic.
pub fn frequencies(n: usize, sign: Sign) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let m = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
            m + sign.shift()
        })
        .collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// In-place 2D FFT of a row-major `n1 × n2` array (unnormalized).
pub(crate) fn fft2(data: &mut [C64], n1: usize, n2: usize, inverse: bool) {
    let rows = plan(n2, inverse);
    for row in data.chunks_mut(n2) {
        rows.process(row);
    }
    let cols = plan(n1, inverse);
    let mut col = vec![C64::new(0.0, 0.0); n1];
    for k in 0..n2 {
        for j in 0..n1 {
            col[j] = data[j * n2 + k];
        }
        cols.process(&mut col);
        for j in 0..n1 {
            data[j * n2 + k] = col[j];
        }
    }
}

/// Fourier coefficients of a field, `values = Σ coeffs·e^{2πi(f1·s + f2·t)}`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub coeffs: Vec<C64>,
    pub freq1: Vec<f64>,
    pub freq2: Vec<f64>,
}

impl Spectrum {
    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.coeffs[a * self.freq2.len() + b]
    }
}

/// Complex scalar samples over the fundamental domain with a spin character.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    grid: FundamentalGrid,
    values: Vec<C64>,
    character: Character,
}

impl PeriodicField {
    pub fn new(grid: FundamentalGrid, values: Vec<C64>, character: Character) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field samples".into()));
        }
        Ok(PeriodicField { grid, values, character })
    }

    /// Samples `f(s, t, z)` on the grid.
    pub fn from_fn(
        grid: FundamentalGrid,
        character: Character,
        f: impl Fn(f64, f64, C64) -> C64,
    ) -> Result<Self> {
        let mut v = Vec::with_capacity(grid.len());
        for j in 0..grid.n1 {
            for k in 0..grid.n2 {
                let (s, t) = grid.st(j, k);
                v.push(f(s, t, grid.lattice.point(s, t)));
            }
        }
        Self::new(grid, v, character)
    }

    /// Real periodic field sampled from `f(x, y)`.
    pub fn from_xy(grid: FundamentalGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, Character::PERIODIC, |_, _, z| c(f(z.re, z.im), 0.0))
    }

    pub fn constant(grid: FundamentalGrid, v: C64) -> Self {
        PeriodicField { grid, values: vec![v; grid.len()], character: Character::PERIODIC }
    }

    pub fn zeros(grid: FundamentalGrid, character: Character) -> Self {
        PeriodicField { grid, values: vec![C64::new(0.0, 0.0); grid.len()], character }
    }

    pub fn grid(&self) -> &FundamentalGrid {
        &self.grid
    }
    pub fn lattice(&self) -> &Lattice {
        &self.grid.lattice
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<C64> {
        self.values
    }
    pub fn character(&self) -> Character {
        self.character
    }
    pub fn at(&self, j: usize, k: usize) -> C64 {
        self.values[j * self.grid.n2 + k]
    }

    /// Same samples reinterpreted on another lattice with the same grid shape.
    pub fn with_lattice(&self, lattice: Lattice) -> Self {
        PeriodicField { grid: self.grid.with_lattice(lattice), ..self.clone() }
    }

    fn derived(&self, values: Vec<C64>, character: Character) -> Self {
        PeriodicField { grid: self.grid, values, character }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        self.derived(self.values.iter().map(|&v| f(v)).collect(), self.character)
    }

    /// Pointwise combination; the result carries `character`.
    pub fn zip_map(&self, o: &Self, character: Character, f: impl Fn(C64, C64) -> C64) -> Self {
        assert_eq!(self.grid.n1, o.grid.n1);
        assert_eq!(self.grid.n2, o.grid.n2);
        let v = self.values.iter().zip(&o.values).map(|(&a, &b)| f(a, b)).collect();
        self.derived(v, character)
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.character, o.character);
        self.zip_map(o, self.character, |a, b| a + b)
    }
    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!(self.character, o.character);
        self.zip_map(o, self.character, |a, b| a - b)
    }
    pub fn mul(&self, o: &Self) -> Self {
        self.zip_map(o, self.character.mul(o.character), |a, b| a * b)
    }
    pub fn scale(&self, a: C64) -> Self {
        self.map(|v| v * a)
    }
    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }
    pub fn re(&self) -> Self {
        self.map(|v| c(v.re, 0.0))
    }
    pub fn abs2(&self) -> Self {
        self.derived(self.values.iter().map(|v| c(v.norm_sqr(), 0.0)).collect(), Character::PERIODIC)
    }
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
    pub fn max_abs_im(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }
    pub fn mean(&self) -> C64 {
        self.values.iter().sum::<C64>() / self.values.len() as f64
    }
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
    pub fn max_diff(&self, o: &Self) -> f64 {
        self.values.iter().zip(&o.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Fourier coefficients (normalized so that the inverse is a plain sum).
    pub fn spectrum(&self) -> Spectrum {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let (h1, h2) = (self.character.0.shift(), self.character.1.shift());
        let mut data = self.values.clone();
        if h1 != 0.0 || h2 != 0.0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let ph = -2.0 * PI * (h1 * j as f64 / n1 as f64 + h2 * k as f64 / n2 as f64);
                    data[j * n2 + k] *= C64::from_polar(1.0, ph);
                }
            }
        }
        fft2(&mut data, n1, n2, false);
        let norm = 1.0 / (n1 * n2) as f64;
        for v in &mut data {
            *v *= norm;
        }
        Spectrum {
            coeffs: data,
            freq1: frequencies(n1, self.character.0),
            freq2: frequencies(n2, self.character.1),
        }
    }

    pub fn from_spectrum(grid: FundamentalGrid, character: Character, spec: &Spectrum) -> Self {
        let (n1, n2) = (grid.n1, grid.n2);
        let mut data = spec.coeffs.clone();
        fft2(&mut data, n1, n2, true);
        let (h1, h2) = (character.0.shift(), character.1.shift());
        if h1 != 0.0 || h2 != 0.0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let ph = 2.0 * PI * (h1 * j as f64 / n1 as f64 + h2 * k as f64 / n2 as f64);
                    data[j * n2 + k] *= C64::from_polar(1.0, ph);
                }
            }
        }
        PeriodicField { grid, values: data, character }
    }

    fn is_nyquist(&self, a: usize, b: usize) -> bool {
        (self.character.0 == Sign::Plus && a == self.grid.n1 / 2)
            || (self.character.1 == Sign::Plus && b == self.grid.n2 / 2)
    }

    /// Applies a Fourier multiplier; Nyquist modes of periodic axes are zeroed.
    pub fn apply_symbol(&self, sym: impl Fn(f64, f64) -> C64) -> Self {
        let mut sp = self.spectrum();
        let n2 = self.grid.n2;
        for a in 0..self.grid.n1 {
            for b in 0..n2 {
                let idx = a * n2 + b;
                sp.coeffs[idx] = if self.is_nyquist(a, b) {
                    C64::new(0.0, 0.0)
                } else {
                    sp.coeffs[idx] * sym(sp.freq1[a], sp.freq2[b])
                };
            }
        }
        Self::from_spectrum(self.grid, self.character, &sp)
    }

    fn check_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field samples".into()));
        }
        Ok(())
    }

    /// ∂f, spectrally in lattice coordinates.
    pub fn dz(&self) -> Result<Self> {
        self.check_finite()?;
        let l = self.grid.lattice;
        Ok(self.apply_symbol(|f1, f2| l.dz_symbol(f1, f2)))
    }

    /// ∂̄f.
    pub fn dzbar(&self) -> Result<Self> {
        self.check_finite()?;
        let l = self.grid.lattice;
        Ok(self.apply_symbol(|f1, f2| l.dzbar_symbol(f1, f2)))
    }

    /// ∂/∂x and ∂/∂y with z = x + iy.
    pub fn dx(&self) -> Result<Self> {
        Ok(self.dz()?.add(&self.dzbar()?))
    }
    pub fn dy(&self) -> Result<Self> {
        Ok(self.dz()?.sub(&self.dzbar()?).scale(I))
    }

    /// ∫_Π f dx∧dy = VolΠ × mean, exact for band-limited integrands.
    pub fn integrate(&self) -> Result<C64> {
        if !self.character.is_periodic() {
            return Err(Error::Character(format!(
                "domain integral needs character (+,+), field has {:?}: an antiperiodic \
                 integrand is not a function on the torus",
                self.character.to_pair()
            )));
        }
        Ok(self.mean() * self.grid.lattice.area())
    }

    /// Fourier-series evaluation at lattice coordinates (s,t).
    pub fn eval_st(&self, s: f64, t: f64) -> C64 {
        self.eval_with(&self.spectrum(), s, t)
    }

    pub fn eval(&self, z: C64) -> C64 {
        let (s, t) = self.grid.lattice.coords(z);
        self.eval_st(s, t)
    }

    pub(crate) fn eval_with(&self, sp: &Spectrum, s: f64, t: f64) -> C64 {
        let w2: Vec<C64> = (0..sp.freq2.len())
            .map(|b| {
                if self.character.1 == Sign::Plus && b == self.grid.n2 / 2 {
                    // symmetric treatment of the Nyquist mode keeps real fields real
                    c((2.0 * PI * sp.freq2[b] * t).cos(), 0.0)
                } else {
                    C64::from_polar(1.0, 2.0 * PI * sp.freq2[b] * t)
                }
            })
            .collect();
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..sp.freq1.len() {
            let w1 = if self.character.0 == Sign::Plus && a == self.grid.n1 / 2 {
                c((2.0 * PI * sp.freq1[a] * s).cos(), 0.0)
            } else {
                C64::from_polar(1.0, 2.0 * PI * sp.freq1[a] * s)
            };
            let row = &sp.coeffs[a * sp.freq2.len()..(a + 1) * sp.freq2.len()];
            let mut r = C64::new(0.0, 0.0);
            for (cf, w) in row.iter().zip(&w2) {
                r += cf * w;
            }
            acc += r * w1;
        }
        acc
    }

    /// Evaluates the series at arbitrary points (complex coordinates).
    pub fn eval_many(&self, zs: &[C64]) -> Vec<C64> {
        use rayon::prelude::*;
        let sp = self.spectrum();
        let l = self.grid.lattice;
        zs.par_iter()
            .map(|&z| {
                let (s, t) = l.coords(z);
                self.eval_with(&sp, s, t)
            })
            .collect()
    }

    /// Spectral interpolation onto another grid of the same torus.
    pub fn resample(&self, grid: FundamentalGrid) -> Self {
        let v = self.eval_many(&grid.points());
        PeriodicField { grid, values: v, character: self.character }
    }

    /// The same periodic function described in a new lattice basis.
    /// Only (+,+) fields are supported since ε changes under basis change.
    pub fn change_basis(&self, m: &Sl2z, n1: usize, n2: usize) -> Result<Self> {
        if !self.character.is_periodic() {
            return Err(Error::Character("basis change of spinor bundles is not supported".into()));
        }
        let lat = self.grid.lattice.change_basis(m)?;
        Ok(self.resample(FundamentalGrid::new(lat, n1, n2)?))
    }

    /// Solves ∂G = f for a real G written as periodic part plus the linear
    /// function 2Re(f₀z), where f₀ is the zero mode of f. Returns the periodic
    /// part (real, zero mean) and f₀.
    pub fn real_antiderivative(&self) -> Result<(Self, C64)> {
        if !self.character.is_periodic() {
            return Err(Error::Character("antiderivative needs a (+,+) integrand".into()));
        }
        self.check_finite()?;
        let l = self.grid.lattice;
        let mut sp = self.spectrum();
        let f0 = sp.coeffs[0];
        let n2 = self.grid.n2;
        for a in 0..self.grid.n1 {
            for b in 0..n2 {
                let idx = a * n2 + b;
                if idx == 0 || self.is_nyquist(a, b) {
                    sp.coeffs[idx] = C64::new(0.0, 0.0);
                } else {
                    sp.coeffs[idx] /= l.dz_symbol(sp.freq1[a], sp.freq2[b]);
                }
            }
        }
        let p = Self::from_spectrum(self.grid, self.character, &sp).re();
        Ok((p, f0))
    }

    pub fn to_json(&self) -> FieldJson {
        FieldJson {
            lattice: LatticeJson {
                gamma1: [self.lattice().gamma1.re, self.lattice().gamma1.im],
                gamma2: [self.lattice().gamma2.re, self.lattice().gamma2.im],
            },
            n1: self.grid.n1,
            n2: self.grid.n2,
            character: self.character.to_pair(),
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
        }
    }

    pub fn from_json(j: &FieldJson) -> Result<Self> {
        let lat = Lattice::new(
            c(j.lattice.gamma1[0], j.lattice.gamma1[1]),
            c(j.lattice.gamma2[0], j.lattice.gamma2[1]),
        )?;
        let grid = FundamentalGrid::new(lat, j.n1, j.n2)?;
        let values = j.values.iter().map(|v| c(v[0], v[1])).collect();
        Self::new(grid, values, Character::from_pair(j.character)?)
    }

    /// CSV with columns s,t,x,y,re,im.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,t,x,y,re,im\n");
        for j in 0..self.grid.n1 {
            for k in 0..self.grid.n2 {
                let (s, t) = self.grid.st(j, k);
                let z = self.grid.lattice.point(s, t);
                let v = self.at(j, k);
                out.push_str(&format!("{s:e},{t:e},{:e},{:e},{:e},{:e}\n", z.re, z.im, v.re, v.im));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeJson {
    pub gamma1: [f64; 2],
    pub gamma2: [f64; 2],
}

/// On-disk form of a [`PeriodicField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    pub lattice: LatticeJson,
    pub n1: usize,
    pub n2: usize,
    pub character: [i32; 2],
    pub values: Vec<[f64; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(n: usize) -> FundamentalGrid {
        FundamentalGrid::new(Lattice::square(), n, n).unwrap()
    }

    #[test]
    fn constant_has_zero_derivative() {
        let f = PeriodicField::constant(sq(16), c(2.0, -1.0));
        assert!(f.dz().unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn single_mode_derivative() {
        let f = PeriodicField::from_fn(sq(16), Character::PERIODIC, |s, _, _| {
            C64::from_polar(1.0, 2.0 * PI * s)
        })
        .unwrap();
        let d = f.dz().unwrap();
        assert!(d.max_diff(&f.scale(I * PI)) < 1e-13);
    }

    #[test]
    fn antiperiodic_mode_derivative() {
        // e^{iπs} is antiperiodic along γ₁; ∂ = ½∂x on Z+iZ gives iπ/2
        let ch = Character(Sign::Minus, Sign::Plus);
        let f = PeriodicField::from_fn(sq(16), ch, |s, _, _| C64::from_polar(1.0, PI * s)).unwrap();
        let d = f.dz().unwrap();
        assert!(d.max_diff(&f.scale(I * PI * 0.5)) < 1e-13);
    }

    #[test]
    fn integral_of_cos_squared() {
        let u = PeriodicField::from_xy(sq(16), |x, _| (2.0 * PI * x).cos()).unwrap();
        let v = u.mul(&u).integrate().unwrap();
        assert!((v - c(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn antiperiodic_integral_rejected() {
        let f = PeriodicField::zeros(sq(8), Character(Sign::Minus, Sign::Plus));
        assert!(f.integrate().is_err());
    }

    #[test]
    fn basis_change_examples() {
        let l = Lattice::square();
        let m = Sl2z::new(1, 1, 0, 1).unwrap();
        let l2 = l.change_basis(&m).unwrap();
        assert_eq!(l2.gamma1, c(1.0, 1.0));
        assert_eq!(l2.gamma2, c(0.0, 1.0));
        assert_eq!(l2.area(), 1.0);
        let r = Sl2z::new(0, 1, -1, 0).unwrap();
        let l3 = l.change_basis(&r).unwrap().change_basis(&r).unwrap();
        assert_eq!(l3.gamma1, -l.gamma1);
        assert_eq!(l3.gamma2, -l.gamma2);
        assert!(Sl2z::new(2, 0, 0, 1).is_err());
        assert_eq!(l.change_basis(&Sl2z::IDENTITY).unwrap(), l);
    }

    #[test]
    fn dual_basis_pairing() {
        let l = Lattice::hexagonal();
        let [a, b] = l.dual_basis();
        let pair = |k: C64, g: C64| k.re * g.re + k.im * g.im;
        assert!((pair(a, l.gamma1) - 1.0).abs() < 1e-14);
        assert!(pair(a, l.gamma2).abs() < 1e-14);
        assert!(pair(b, l.gamma1).abs() < 1e-14);
        assert!((pair(b, l.gamma2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coords_roundtrip() {
        let l = Lattice::new(c(1.3, 0.2), c(-0.4, 0.9)).unwrap();
        let (s, t) = l.coords(l.point(0.25, -0.7));
        assert!((s - 0.25).abs() < 1e-14 && (t + 0.7).abs() < 1e-14);
    }

    #[test]
    fn json_roundtrip() {
        let f = PeriodicField::from_fn(
            FundamentalGrid::new(Lattice::hexagonal(), 8, 10).unwrap(),
            Character(Sign::Plus, Sign::Minus),
            |s, t, _| c(s, t * t),
        )
        .unwrap();
        let text = serde_json::to_string(&f.to_json()).unwrap();
        let back: FieldJson = serde_json::from_str(&text).unwrap();
        assert_eq!(PeriodicField::from_json(&back).unwrap(), f);
    }

    #[test]
    fn resample_is_spectral() {
        let g = FundamentalGrid::new(Lattice::hexagonal(), 16, 16).unwrap();
        let f = PeriodicField::from_fn(g, Character::PERIODIC, |s, t, _| {
            C64::from_polar(1.0, 2.0 * PI * (2.0 * s - t)) + c((2.0 * PI * t).sin(), 0.0)
        })
        .unwrap();
        let g2 = FundamentalGrid::new(Lattice::hexagonal(), 24, 12).unwrap();
        let r = f.resample(g2);
        let exact = PeriodicField::from_fn(g2, Character::PERIODIC, |s, t, _| {
            C64::from_polar(1.0, 2.0 * PI * (2.0 * s - t)) + c((2.0 * PI * t).sin(), 0.0)
        })
        .unwrap();
        assert!(r.max_diff(&exact) < 1e-12);
    }
}
