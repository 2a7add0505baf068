//! Zero-level Floquet spectrum of the 2D Dirac operator
//! `D = [[U, ∂], [−∂̄, U]]` (or `[[V, ∂], [−∂̄, V̄]]` for surfaces in S³) with a
//! doubly periodic potential, by Fourier–Galerkin truncation of the twisted
//! operator `e^{−2πi⟨k,x⟩} D e^{2πi⟨k,x⟩}`.
//!
//! Quasimomenta are written either as `(k₁, k₂)` or in the spectral chart
//! `(λ, W)` with `λ = π(k₂ + ik₁)` and `W = −π(k₂ − ik₁)`, so that the
//! multiplier along γ is `exp(λγ + Wγ̄)` and the twisted symbols are `+λ` in the
//! ∂ slot and `−W` in the −∂̄ slot.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{c, Lattice, PeriodicField, Sl2z, C64, I};

/// A point `(k₁, k₂) ∈ C²` of the complexified quasimomentum space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasimomentumPoint {
    pub k1: C64,
    pub k2: C64,
}

impl QuasimomentumPoint {
    pub fn new(k1: C64, k2: C64) -> Self {
        QuasimomentumPoint { k1, k2 }
    }

    pub fn real(k1: f64, k2: f64) -> Self {
        Self::new(c(k1, 0.0), c(k2, 0.0))
    }

    /// The point with `λ = lambda`, `W = w`.
    pub fn from_spectral(lambda: C64, w: C64) -> Self {
        Self::new((lambda + w) / (I * 2.0 * PI), (lambda - w) / (2.0 * PI))
    }

    pub fn lambda(&self) -> C64 {
        (self.k2 + I * self.k1) * PI
    }

    pub fn w(&self) -> C64 {
        -(self.k2 - I * self.k1) * PI
    }

    pub fn is_finite(&self) -> bool {
        self.k1.is_finite() && self.k2.is_finite()
    }

    /// `⟨k,γ⟩ = k₁·Re γ + k₂·Im γ`.
    pub fn pairing(&self, gamma: C64) -> C64 {
        self.k1 * gamma.re + self.k2 * gamma.im
    }

    /// `(μ₁, μ₂)` with `μⱼ = exp(2πi⟨k,γⱼ⟩)`.
    pub fn multipliers(&self, lattice: &Lattice) -> (C64, C64) {
        let m = |g: C64| (I * 2.0 * PI * self.pairing(g)).exp();
        (m(lattice.gamma1), m(lattice.gamma2))
    }

    /// Translation by a real dual vector given as `γ* = p₁ + i·p₂`.
    pub fn translate(&self, dual: C64) -> Self {
        Self::new(self.k1 + dual.re, self.k2 + dual.im)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.k1 + o.k1, self.k2 + o.k2)
    }

    pub fn scale(&self, a: C64) -> Self {
        Self::new(self.k1 * a, self.k2 * a)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.k1, -self.k2)
    }

    /// `k → −k̄`.
    pub fn neg_conj(&self) -> Self {
        Self::new(-self.k1.conj(), -self.k2.conj())
    }

    pub fn distance(&self, o: &Self) -> f64 {
        ((self.k1 - o.k1).norm_sqr() + (self.k2 - o.k2).norm_sqr()).sqrt()
    }
}

/// One witness evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub k: QuasimomentumPoint,
    pub witness: f64,
    pub multipliers: (C64, C64),
}

impl SpectrumSample {
    pub fn new(k: QuasimomentumPoint, witness: f64, lattice: &Lattice) -> Self {
        SpectrumSample { k, witness, multipliers: k.multipliers(lattice) }
    }
}

/// Smallest singular triplet of the truncated operator, restricted to the
/// block where it is attained. `u` and `v` are split into the ψ₁ and ψ₂ halves.
#[derive(Clone, Debug)]
pub struct Triplet {
    pub sigma: f64,
    pub block: usize,
    u: DVector<C64>,
    v: DVector<C64>,
}

impl Triplet {
    /// `uᴴ (∂A/∂k · dk) v` for a direction `dk` in quasimomentum space.
    fn derivative(&self, dk: &QuasimomentumPoint) -> C64 {
        let n = self.u.len() / 2;
        let mut top_bot = c(0.0, 0.0);
        let mut bot_top = c(0.0, 0.0);
        for i in 0..n {
            top_bot += self.u[i].conj() * self.v[n + i];
            bot_top += self.u[n + i].conj() * self.v[i];
        }
        dk.lambda() * top_bot - dk.w() * bot_top
    }

    /// The right singular vector (ψ₁ coefficients first).
    pub fn null_vector(&self) -> &DVector<C64> {
        &self.v
    }
}

/// Fourier–Galerkin truncation of the twisted Dirac operator over the modes
/// `|m|, |n| ≤ M` (lattice-coordinate frequencies).
#[derive(Clone, Debug)]
pub struct TruncatedPencil {
    potential: PeriodicField,
    cutoff: usize,
    modes: Vec<(i64, i64)>,
    /// Fourier coefficients of the diagonal multipliers, keyed by mode offset.
    upper: BTreeMap<(i64, i64), C64>,
    lower: BTreeMap<(i64, i64), C64>,
    blocks: Vec<Vec<usize>>,
    dz: Vec<C64>,
    dzbar: Vec<C64>,
    pub warnings: Vec<String>,
    /// Largest Fourier magnitude of the potential per shell `max(|m|,|n|) = r`.
    pub decay: Vec<f64>,
}

/// Relative size below which potential Fourier coefficients are dropped.
pub const COEFF_DROP: f64 = 1e-14;

impl TruncatedPencil {
    /// Pencil for a real potential U with character (+,+).
    pub fn new(u: &PeriodicField, cutoff: usize) -> Result<Self> {
        if u.max_abs_im() > 1e-12 * (1.0 + u.max_abs()) {
            return Err(Error::invalid("the R³ Dirac potential must be real"));
        }
        Self::build(&u.re(), cutoff)
    }

    /// Pencil for the S³ operator `[[V, ∂], [−∂̄, V̄]]` with complex V.
    pub fn sphere(v: &PeriodicField, cutoff: usize) -> Result<Self> {
        Self::build(v, cutoff)
    }

    fn build(u: &PeriodicField, cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::invalid("cutoff M must be at least 1"));
        }
        if !u.character().is_periodic() {
            return Err(Error::Character("the potential must have character (+,+)".into()));
        }
        if u.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential".into()));
        }
        let g = *u.grid();
        let sp = u.spectrum();
        let m = cutoff as i64;
        let mut raw = BTreeMap::new();
        let mut scale = 0.0f64;
        for a in 0..g.n1 {
            for b in 0..g.n2 {
                let (f1, f2) = (sp.freq1[a] as i64, sp.freq2[b] as i64);
                // the Nyquist rows are ambiguous in sign and are dropped
                if 2 * f1.abs() == g.n1 as i64 || 2 * f2.abs() == g.n2 as i64 {
                    continue;
                }
                let v = sp.get(a, b);
                scale = scale.max(v.norm());
                raw.insert((f1, f2), v);
            }
        }
        let shells = (g.n1.max(g.n2) / 2) + 1;
        let mut decay = vec![0.0; shells];
        for (&(f1, f2), v) in &raw {
            let r = f1.abs().max(f2.abs()) as usize;
            decay[r] = f64::max(decay[r], v.norm());
        }
        let mut upper = BTreeMap::new();
        let mut lower = BTreeMap::new();
        for (&(f1, f2), v) in &raw {
            if f1.abs() > 2 * m || f2.abs() > 2 * m {
                continue;
            }
            if v.norm() > COEFF_DROP * scale {
                upper.insert((f1, f2), *v);
            }
            let w = raw.get(&(-f1, -f2)).copied().unwrap_or_default().conj();
            if w.norm() > COEFF_DROP * scale {
                lower.insert((f1, f2), w);
            }
        }
        let mut warnings = Vec::new();
        let tail = decay.iter().enumerate().filter(|(r, _)| *r as i64 > m).map(|(_, v)| *v).fold(0.0, f64::max);
        if tail > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            warnings.push(format!(
                "potential has Fourier content beyond the cutoff M = {cutoff}: largest coefficient \
                 outside the window is {tail:.3e} (largest overall {scale:.3e})"
            ));
        }
        let modes: Vec<(i64, i64)> = (-m..=m).flat_map(|a| (-m..=m).map(move |b| (a, b))).collect();
        let idx: BTreeMap<(i64, i64), usize> = modes.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        // union-find over the coupling graph
        let mut parent: Vec<usize> = (0..modes.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for (i, &(a, b)) in modes.iter().enumerate() {
            for off in upper.keys().chain(lower.keys()) {
                if *off == (0, 0) {
                    continue;
                }
                if let Some(&j) = idx.get(&(a + off.0, b + off.1)) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..modes.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let lat = g.lattice;
        let dz = modes.iter().map(|&(a, b)| lat.dz_symbol(a as f64, b as f64)).collect();
        let dzbar = modes.iter().map(|&(a, b)| lat.dzbar_symbol(a as f64, b as f64)).collect();
        Ok(TruncatedPencil {
            potential: u.clone(),
            cutoff,
            modes,
            upper,
            lower,
            blocks: groups.into_values().collect(),
            dz,
            dzbar,
            warnings,
            decay,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn lattice(&self) -> &Lattice {
        self.potential.lattice()
    }

    pub fn potential(&self) -> &PeriodicField {
        &self.potential
    }

    pub fn modes(&self) -> &[(i64, i64)] {
        &self.modes
    }

    /// Mode-index groups that the potential couples.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Full dimension `2(2M+1)²`.
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    fn assemble(&self, modes: &[usize], k: &QuasimomentumPoint) -> DMatrix<C64> {
        let n = modes.len();
        let (lam, w) = (k.lambda(), k.w());
        let mut a = DMatrix::from_element(2 * n, 2 * n, c(0.0, 0.0));
        for (i, &mi) in modes.iter().enumerate() {
            let (pa, pb) = self.modes[mi];
            for (j, &mj) in modes.iter().enumerate() {
                let (qa, qb) = self.modes[mj];
                let off = (pa - qa, pb - qb);
                if let Some(v) = self.upper.get(&off) {
                    a[(i, j)] = *v;
                }
                if let Some(v) = self.lower.get(&off) {
                    a[(n + i, n + j)] = *v;
                }
            }
            a[(i, n + i)] = self.dz[mi] + lam;
            a[(n + i, i)] = -self.dzbar[mi] - w;
        }
        a
    }

    /// The assembled matrix on all modes, ψ₁ coefficients first.
    pub fn matrix(&self, k: &QuasimomentumPoint) -> DMatrix<C64> {
        let all: Vec<usize> = (0..self.modes.len()).collect();
        self.assemble(&all, k)
    }

    pub fn block_matrix(&self, b: usize, k: &QuasimomentumPoint) -> DMatrix<C64> {
        self.assemble(&self.blocks[b], k)
    }

    /// Smallest singular value of the truncated twisted operator.
    pub fn witness(&self, k: &QuasimomentumPoint) -> f64 {
        self.smallest_two(k).0
    }

    /// The two smallest singular values over all blocks.
    pub fn smallest_two(&self, k: &QuasimomentumPoint) -> (f64, f64) {
        let mut best = (f64::INFINITY, f64::INFINITY);
        for b in 0..self.blocks.len() {
            let (s0, s1) = self.block_smallest_two(b, k);
            for s in [s0, s1] {
                if s < best.0 {
                    best = (s, best.0);
                } else if s < best.1 {
                    best.1 = s;
                }
            }
        }
        best
    }

    fn block_smallest_two(&self, b: usize, k: &QuasimomentumPoint) -> (f64, f64) {
        let a = self.block_matrix(b, k);
        if a.nrows() == 2 {
            // closed form for the decoupled 2×2 blocks
            let s = two_by_two_singular_values(&a);
            return (s[1], s[0]);
        }
        let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
        sv.sort_by(|x, y| x.partial_cmp(y).unwrap());
        (sv[0], sv.get(1).copied().unwrap_or(f64::INFINITY))
    }

    /// Singular triplet for the `which`-th smallest singular value (0 or 1).
    pub fn triplet(&self, k: &QuasimomentumPoint, which: usize) -> Result<Triplet> {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for b in 0..self.blocks.len() {
            let (s0, s1) = self.block_smallest_two(b, k);
            cands.push((s0, b, 0));
            cands.push((s1, b, 1));
        }
        cands.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let &(_, b, rank) = cands.get(which).ok_or_else(|| Error::invalid("no such singular value"))?;
        let a = self.block_matrix(b, k);
        let svd = a.svd(true, true);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|x, y| svd.singular_values[*x].partial_cmp(&svd.singular_values[*y]).unwrap());
        let i = order[rank];
        let u = svd.u.as_ref().unwrap().column(i).into_owned();
        let v = svd.v_t.as_ref().unwrap().row(i).adjoint().into_owned();
        if !u.iter().chain(v.iter()).all(|x| x.is_finite()) {
            return Err(Error::numerical("singular vectors are not finite"));
        }
        Ok(Triplet { sigma: svd.singular_values[i], block: b, u, v })
    }

    /// `Σ log|det|` over blocks; usable only for small cutoffs.
    pub fn log_abs_det(&self, k: &QuasimomentumPoint) -> f64 {
        (0..self.blocks.len()).map(|b| self.block_matrix(b, k).lu().determinant().norm().ln()).sum()
    }

    pub fn sample(&self, k: QuasimomentumPoint) -> SpectrumSample {
        SpectrumSample::new(k, self.witness(&k), self.lattice())
    }

    /// `4∫|U|² dx dy` by the periodic trapezoid rule.
    pub fn willmore_direct(&self) -> f64 {
        4.0 * self.potential.abs2().integrate().map(|v| v.re).unwrap_or(f64::NAN)
    }
}

fn two_by_two_singular_values(a: &DMatrix<C64>) -> [f64; 2] {
    let fro: f64 = a.iter().map(|v| v.norm_sqr()).sum();
    let det = (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).norm();
    let disc = (fro * fro - 4.0 * det * det).max(0.0).sqrt();
    let big = ((fro + disc) / 2.0).sqrt();
    let small = if big > 0.0 { det / big } else { 0.0 };
    [big, small]
}

/// Builds the pencil (alias used by the spec-level operation name).
pub fn build_twisted_dirac(u: &PeriodicField, cutoff: usize) -> Result<TruncatedPencil> {
    TruncatedPencil::new(u, cutoff)
}

/// A real two-parameter slice `(u, v) ↦ k(u, v)` through quasimomentum space.
#[derive(Clone)]
pub struct Slice {
    map: Arc<dyn Fn(f64, f64) -> QuasimomentumPoint + Send + Sync>,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    pub nu: usize,
    pub nv: usize,
}

impl std::fmt::Debug for Slice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Slice")
            .field("u_range", &self.u_range)
            .field("v_range", &self.v_range)
            .field("nu", &self.nu)
            .field("nv", &self.nv)
            .finish()
    }
}

pub const DEFAULT_SLICE_POINTS: usize = 41;

impl Slice {
    pub fn new(
        map: impl Fn(f64, f64) -> QuasimomentumPoint + Send + Sync + 'static,
        u_range: (f64, f64),
        v_range: (f64, f64),
        nu: usize,
        nv: usize,
    ) -> Self {
        Slice { map: Arc::new(map), u_range, v_range, nu, nv }
    }

    /// `k = base + u·d1 + v·d2`.
    pub fn linear(
        base: QuasimomentumPoint,
        d1: QuasimomentumPoint,
        d2: QuasimomentumPoint,
        u_range: (f64, f64),
        v_range: (f64, f64),
        n: usize,
    ) -> Self {
        Self::new(move |u, v| base.add(&d1.scale(c(u, 0.0))).add(&d2.scale(c(v, 0.0))), u_range, v_range, n, n)
    }

    /// The real quasimomentum plane `k ∈ R²`.
    pub fn real_plane(u_range: (f64, f64), v_range: (f64, f64), n: usize) -> Self {
        Self::linear(
            QuasimomentumPoint::real(0.0, 0.0),
            QuasimomentumPoint::real(1.0, 0.0),
            QuasimomentumPoint::real(0.0, 1.0),
            u_range,
            v_range,
            n,
        )
    }

    /// The curve `λ ↦ (λ, W(λ))` over a rectangle of λ = u + iv.
    pub fn spectral(
        w_of_lambda: impl Fn(C64) -> C64 + Send + Sync + 'static,
        re: (f64, f64),
        im: (f64, f64),
        n: usize,
    ) -> Self {
        Self::new(move |u, v| QuasimomentumPoint::from_spectral(c(u, v), w_of_lambda(c(u, v))), re, im, n, n)
    }

    /// The λ₊ plane `W = 0` of the free operator.
    pub fn lambda_plane(re: (f64, f64), im: (f64, f64), n: usize) -> Self {
        Self::spectral(|_| c(0.0, 0.0), re, im, n)
    }

    pub fn at(&self, u: f64, v: f64) -> QuasimomentumPoint {
        (self.map)(u, v)
    }

    pub fn cell(&self) -> (f64, f64) {
        (
            (self.u_range.1 - self.u_range.0) / (self.nu - 1) as f64,
            (self.v_range.1 - self.v_range.0) / (self.nv - 1) as f64,
        )
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let (du, dv) = self.cell();
        (self.u_range.0 + du * i as f64, self.v_range.0 + dv * j as f64)
    }

    fn derivatives(&self, u: f64, v: f64) -> (QuasimomentumPoint, QuasimomentumPoint) {
        let (du, dv) = self.cell();
        let (hu, hv) = (1e-6 * du.abs().max(1e-12), 1e-6 * dv.abs().max(1e-12));
        let d = |a: QuasimomentumPoint, b: QuasimomentumPoint, h: f64| {
            QuasimomentumPoint::new((a.k1 - b.k1) / (2.0 * h), (a.k2 - b.k2) / (2.0 * h))
        };
        (d(self.at(u + hu, v), self.at(u - hu, v), hu), d(self.at(u, v + hv), self.at(u, v - hv), hv))
    }

    /// Whether `(u, v)` lies at least `margin` cells inside the slice.
    pub fn is_interior(&self, u: f64, v: f64, margin: f64) -> bool {
        let (du, dv) = self.cell();
        u >= self.u_range.0 + margin * du
            && u <= self.u_range.1 - margin * du
            && v >= self.v_range.0 + margin * dv
            && v <= self.v_range.1 - margin * dv
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Zero flag: polished witness below `rel_threshold × median`.
    pub rel_threshold: f64,
    /// 0 scans the smallest singular value, 1 the second smallest
    /// (resonances along a sheet that is itself in the zero set).
    pub which: usize,
    pub newton_iterations: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { rel_threshold: 1e-6, which: 0, newton_iterations: 40 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlaggedZero {
    pub u: f64,
    pub v: f64,
    pub sample: SpectrumSample,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scan {
    /// Grid samples in row-major order over (u, v).
    pub samples: Vec<SpectrumSample>,
    pub median: f64,
    pub threshold: f64,
    pub flagged: Vec<FlaggedZero>,
}

fn value(p: &TruncatedPencil, k: &QuasimomentumPoint, which: usize) -> f64 {
    let (a, b) = p.smallest_two(k);
    if which == 0 {
        a
    } else {
        b
    }
}

/// Witness values over a slice grid plus polished zero candidates.
pub fn spectrum_scan(p: &TruncatedPencil, slice: &Slice, opts: &ScanOptions) -> Result<Scan> {
    if slice.nu < 3 || slice.nv < 3 {
        return Err(Error::invalid("slice grids need at least 3 points per direction"));
    }
    let lat = *p.lattice();
    let nodes: Vec<(usize, usize)> = (0..slice.nu).flat_map(|i| (0..slice.nv).map(move |j| (i, j))).collect();
    let vals: Vec<(QuasimomentumPoint, f64)> = nodes
        .par_iter()
        .map(|&(i, j)| {
            let (u, v) = slice.node(i, j);
            let k = slice.at(u, v);
            (k, value(p, &k, opts.which))
        })
        .collect();
    let samples: Vec<SpectrumSample> = vals.iter().map(|(k, w)| SpectrumSample::new(*k, *w, &lat)).collect();
    let mut sorted: Vec<f64> = vals.iter().map(|v| v.1).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let threshold = opts.rel_threshold * median;
    let at = |i: usize, j: usize| vals[i * slice.nv + j].1;
    let mut seeds = Vec::new();
    for i in 1..slice.nu - 1 {
        for j in 1..slice.nv - 1 {
            let w = at(i, j);
            let is_min = (-1i64..=1)
                .flat_map(|a| (-1i64..=1).map(move |b| (a, b)))
                .filter(|&d| d != (0, 0))
                .all(|(a, b)| w <= at((i as i64 + a) as usize, (j as i64 + b) as usize));
            if is_min {
                seeds.push(slice.node(i, j));
            }
        }
    }
    let polished: Vec<Option<(f64, f64, f64)>> = seeds
        .par_iter()
        .map(|&(u, v)| polish(p, slice, u, v, opts.which, opts.newton_iterations).ok())
        .collect();
    let (du, dv) = slice.cell();
    let mut flagged: Vec<FlaggedZero> = Vec::new();
    for (seed, res) in seeds.iter().zip(polished) {
        let Some((u, v, w)) = res else { continue };
        if w >= threshold || (u - seed.0).abs() > 1.5 * du.abs() || (v - seed.1).abs() > 1.5 * dv.abs() {
            continue;
        }
        let dup = flagged.iter().any(|f| (f.u - u).abs() < 1e-6 * du.abs() && (f.v - v).abs() < 1e-6 * dv.abs());
        if !dup {
            let k = slice.at(u, v);
            flagged.push(FlaggedZero { u, v, sample: SpectrumSample::new(k, w, &lat) });
        }
    }
    Ok(Scan { samples, median, threshold, flagged })
}

/// Newton on the slice parameters using the analytic linearisation of the
/// singular triplet: `σ + a·du + b·dv = 0` as two real equations.
pub fn polish(
    p: &TruncatedPencil,
    slice: &Slice,
    u0: f64,
    v0: f64,
    which: usize,
    iterations: usize,
) -> Result<(f64, f64, f64)> {
    let (mut u, mut v) = (u0, v0);
    let (cu, cv) = slice.cell();
    let mut best = (u, v, f64::INFINITY);
    for _ in 0..iterations {
        let k = slice.at(u, v);
        let t = p.triplet(&k, which)?;
        if t.sigma < best.2 {
            best = (u, v, t.sigma);
        }
        if t.sigma == 0.0 {
            break;
        }
        // a minimum that is not a zero sends Newton away; stop early
        if (u - u0).abs() > 3.0 * cu.abs() || (v - v0).abs() > 3.0 * cv.abs() {
            break;
        }
        let (ku, kv) = slice.derivatives(u, v);
        let a = t.derivative(&ku);
        let b = t.derivative(&kv);
        let det = a.re * b.im - b.re * a.im;
        if det.abs() < 1e-300 {
            break;
        }
        let du = -t.sigma * b.im / det;
        let dv = t.sigma * a.im / det;
        u += du;
        v += dv;
        if !(u.is_finite() && v.is_finite()) {
            break;
        }
        if du.hypot(dv) < 1e-15 * (1.0 + u.hypot(v)) {
            let k = slice.at(u, v);
            let s = value(p, &k, which);
            if s < best.2 {
                best = (u, v, s);
            }
            break;
        }
    }
    Ok(best)
}

/// A continued sheet of the zero set, parameterised by λ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub lambdas: Vec<C64>,
    pub w: Vec<C64>,
    pub samples: Vec<SpectrumSample>,
    /// False when Newton failed to re-converge; `samples` then stops early.
    pub complete: bool,
    pub message: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-11, max_iter: 40 }
    }
}

/// Solves for W at fixed λ such that the truncated operator is singular, by
/// Newton on the smallest singular triplet (`∂A/∂W = −1` in the −∂̄ slot).
pub fn solve_w(p: &TruncatedPencil, lambda: C64, w0: C64, opts: &NewtonOptions) -> Result<(C64, f64)> {
    let mut w = w0;
    let dk = QuasimomentumPoint::from_spectral(c(0.0, 0.0), c(1.0, 0.0));
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let k = QuasimomentumPoint::from_spectral(lambda, w);
        let t = p.triplet(&k, 0)?;
        last = t.sigma;
        let d = t.derivative(&dk);
        if d.norm() == 0.0 {
            break;
        }
        let step = -c(t.sigma, 0.0) / d;
        w += step;
        if !w.is_finite() {
            break;
        }
        if step.norm() < 1e-15 * (1.0 + w.norm()) {
            let s = p.witness(&QuasimomentumPoint::from_spectral(lambda, w));
            if s <= opts.tol * (1.0 + lambda.norm()) {
                return Ok((w, s));
            }
            last = s;
            break;
        }
    }
    let s = p.witness(&QuasimomentumPoint::from_spectral(lambda, w));
    if w.is_finite() && s <= opts.tol * (1.0 + lambda.norm()) {
        return Ok((w, s));
    }
    Err(Error::numerical(format!(
        "Newton in W did not converge at λ = {lambda}: witness {:.3e}",
        s.min(last)
    )))
}

/// Continues the sheet through `seed` along the λ values of `path`.
pub fn trace_branch(
    p: &TruncatedPencil,
    seed: &SpectrumSample,
    path: &[C64],
    opts: &NewtonOptions,
) -> Branch {
    let lat = *p.lattice();
    let mut out = Branch { lambdas: vec![], w: vec![], samples: vec![], complete: true, message: None };
    let mut prev: Vec<(C64, C64)> = vec![(seed.k.lambda(), seed.k.w())];
    for &lam in path {
        // secant predictor in λ·W, which is smooth across the asymptotic sheet
        let guess = match prev.as_slice() {
            [.., (l0, w0), (l1, w1)] if (l1 - l0).norm() > 0.0 => {
                let g0 = l0 * w0;
                let g1 = l1 * w1;
                (g1 + (g1 - g0) * ((lam - l1) / (l1 - l0))) / lam
            }
            [.., (l1, w1)] => l1 * w1 / lam,
            [] => c(0.0, 0.0),
        };
        let guess = if guess.is_finite() { guess } else { prev.last().unwrap().1 };
        match solve_w(p, lam, guess, opts) {
            Ok((w, s)) => {
                let k = QuasimomentumPoint::from_spectral(lam, w);
                out.lambdas.push(lam);
                out.w.push(w);
                out.samples.push(SpectrumSample::new(k, s, &lat));
                prev.push((lam, w));
            }
            Err(e) => {
                out.complete = false;
                out.message = Some(format!("branch lost: {e}"));
                break;
            }
        }
    }
    out
}

/// Fit of `W(λ) = C₁/λ + C₃/λ³ + …` along the sheet asymptotic to `W = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticExpansion {
    pub c1: C64,
    /// C₃, C₅, … in this crate's normalisation.
    pub higher: Vec<C64>,
    pub fit_residual: f64,
    pub reliable: bool,
    pub willmore_from_c1: f64,
    pub willmore_direct: f64,
    pub points: Vec<(C64, C64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOptions {
    pub radii: Vec<f64>,
    pub angles: usize,
    /// Number of odd powers in the model.
    pub terms: usize,
    /// Relative rms fit residual above which the fit is flagged unreliable.
    pub max_residual: f64,
    pub newton: NewtonOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { radii: vec![20.0, 30.0, 40.0], angles: 8, terms: 3, max_residual: 1e-4, newton: NewtonOptions::default() }
    }
}

/// λ near `target` placed at the centre of a cell of the free resonance
/// lattice `{−∂-symbol(m, n)}`, as far as possible from resonances.
pub fn cell_centre_lambda(lat: &Lattice, target: C64) -> C64 {
    let a = lat.dz_symbol(1.0, 0.0);
    let b = lat.dz_symbol(0.0, 1.0);
    // solve −(f1·a + f2·b) = target over reals
    let det = a.re * b.im - b.re * a.im;
    let f1 = (-target.re * b.im + b.re * target.im) / det;
    let f2 = (-a.re * target.im + target.re * a.im) / det;
    let (f1, f2) = (f1.floor() + 0.5, f2.floor() + 0.5);
    -(a * f1 + b * f2)
}

pub fn extract_c1(p: &TruncatedPencil, opts: &FitOptions) -> Result<AsymptoticExpansion> {
    if opts.radii.is_empty() || opts.angles == 0 || opts.terms == 0 {
        return Err(Error::invalid("fit needs radii, angles and at least one term"));
    }
    let lat = *p.lattice();
    let mut lambdas = Vec::new();
    for &r in &opts.radii {
        for j in 0..opts.angles {
            let th = 2.0 * PI * (j as f64 + 0.37) / opts.angles as f64;
            let l = cell_centre_lambda(&lat, C64::from_polar(r, th));
            if !lambdas.iter().any(|x: &C64| (x - l).norm() < 1e-9) {
                lambdas.push(l);
            }
        }
    }
    if lambdas.len() < opts.terms {
        return Err(Error::invalid("fewer distinct fit points than model terms"));
    }
    let pts: Vec<Result<(C64, C64)>> =
        lambdas.par_iter().map(|&l| solve_w(p, l, c(0.0, 0.0), &opts.newton).map(|(w, _)| (l, w))).collect();
    let pts: Vec<(C64, C64)> = pts.into_iter().collect::<Result<_>>()?;
    // least squares on λ·W = C₁ + C₃λ⁻² + …, columns scaled to unit size
    let n = pts.len();
    let mut a = DMatrix::from_element(n, opts.terms, c(0.0, 0.0));
    let mut rhs = DVector::from_element(n, c(0.0, 0.0));
    for (i, (l, w)) in pts.iter().enumerate() {
        for t in 0..opts.terms {
            a[(i, t)] = l.powi(-2 * t as i32);
        }
        rhs[i] = l * w;
    }
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&rhs, 1e-14).map_err(|e| Error::numerical(format!("fit solve failed: {e}")))?;
    let res = &a * &x - &rhs;
    let scale = rhs.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let fit_residual = (res.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64).sqrt() / scale;
    let c1 = x[0];
    let area = lat.area();
    Ok(AsymptoticExpansion {
        c1,
        higher: x.iter().skip(1).copied().collect(),
        fit_residual,
        reliable: fit_residual <= opts.max_residual,
        willmore_from_c1: -4.0 * c1.re * area,
        willmore_direct: p.willmore_direct(),
        points: pts,
    })
}

/// `μ̃₁ = μ₁ᵃμ₂ᵇ`, `μ̃₂ = μ₁ᶜμ₂ᵈ`.
pub fn transform_multipliers(mu: (C64, C64), m: &Sl2z) -> Result<(C64, C64)> {
    let m = Sl2z::new(m.a, m.b, m.c, m.d)?;
    let p = |z: C64, e: i64| z.powi(e as i32);
    Ok((p(mu.0, m.a) * p(mu.1, m.b), p(mu.0, m.c) * p(mu.1, m.d)))
}

pub fn multiplier_basis_change(samples: &[SpectrumSample], m: &Sl2z) -> Result<Vec<SpectrumSample>> {
    samples
        .iter()
        .map(|s| Ok(SpectrumSample { multipliers: transform_multipliers(s.multipliers, m)?, ..*s }))
        .collect()
}

/// Largest distance from the image of a flagged point to the flagged set,
/// over flagged points at least one cell inside the slice. Meaningful for
/// slices mapped into themselves by `map`.
pub fn symmetry_residual(
    scan: &Scan,
    slice: &Slice,
    map: impl Fn(&QuasimomentumPoint) -> QuasimomentumPoint,
) -> f64 {
    let mut worst = 0.0f64;
    for f in &scan.flagged {
        if !slice.is_interior(f.u, f.v, 1.0) {
            continue;
        }
        let img = map(&f.sample.k);
        let d = scan.flagged.iter().map(|g| g.sample.k.distance(&img)).fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    worst
}

/// Free-operator resonance values on the general lattice,
/// `λ = 2πi(γ̄₁n − γ̄₂m)/(γ̄₁γ₂ − γ₁γ̄₂)` for `(m, n) ≠ 0`.
pub fn free_resonances(lat: &Lattice, range: i64) -> Vec<(i64, i64, C64)> {
    let den = lat.gamma1.conj() * lat.gamma2 - lat.gamma1 * lat.gamma2.conj();
    let mut out = Vec::new();
    for m in -range..=range {
        for n in -range..=range {
            if (m, n) != (0, 0) {
                let l = I * 2.0 * PI * (lat.gamma1.conj() * n as f64 - lat.gamma2.conj() * m as f64) / den;
                out.push((m, n, l));
            }
        }
    }
    out
}

/// Partner of a point of the sheet `W = −∂̄-symbol(p)` (ψ₁-type) on the
/// ψ₂-type sheet through the same quasimomentum: its `λ₋ = 2πi k₁′` after
/// translating by the dual vector of the crossing mode.
pub fn resonance_partner(lat: &Lattice, k: &QuasimomentumPoint, mode: (i64, i64)) -> C64 {
    let kp = k.translate(lat.dual_vector(mode.0, mode.1));
    I * 2.0 * PI * kp.k1
}

/// Closed-form constant-potential resonance values on the sheet `W = −C²/λ`:
/// `λ = (qq̄ ± √((qq̄)² − 4C²qq̄))/(2q̄)` with `q = −∂-symbol(m, n)`.
pub fn constant_resonances(lat: &Lattice, cc: f64, range: i64) -> Vec<C64> {
    let mut out = Vec::new();
    for m in -range..=range {
        for n in -range..=range {
            if (m, n) == (0, 0) {
                continue;
            }
            let q = -lat.dz_symbol(m as f64, n as f64);
            let qq = q * q.conj();
            let disc = (qq * qq - qq * 4.0 * cc * cc).sqrt();
            for s in [1.0, -1.0] {
                out.push((qq + disc * s) / (q.conj() * 2.0));
            }
        }
    }
    out
}

/// CSV with columns k1_re,k1_im,k2_re,k2_im,witness,mu1_re,mu1_im,mu2_re,mu2_im.
pub fn samples_csv(samples: &[SpectrumSample]) -> String {
    let mut s = String::from("k1_re,k1_im,k2_re,k2_im,witness,mu1_re,mu1_im,mu2_re,mu2_im\n");
    for x in samples {
        s.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            x.k.k1.re,
            x.k.k1.im,
            x.k.k2.re,
            x.k.k2.im,
            x.witness,
            x.multipliers.0.re,
            x.multipliers.0.im,
            x.multipliers.1.re,
            x.multipliers.1.im
        ));
    }
    s
}

/// Distance of k to the nearest free sheet `W + ∂̄-symbol(p) = 0` or
/// `λ + ∂-symbol(p) = 0` (the planes of the zero-potential spectrum).
pub fn free_plane_distance(lat: &Lattice, k: &QuasimomentumPoint, range: i64) -> f64 {
    let (l, w) = (k.lambda(), k.w());
    let mut best = f64::INFINITY;
    for m in -range..=range {
        for n in -range..=range {
            let a = (w + lat.dzbar_symbol(m as f64, n as f64)).norm();
            let b = (l + lat.dz_symbol(m as f64, n as f64)).norm();
            best = best.min(a).min(b);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FundamentalGrid;

    fn zero(n: usize) -> PeriodicField {
        PeriodicField::constant(FundamentalGrid::new(Lattice::square(), n, n).unwrap(), c(0.0, 0.0))
    }

    #[test]
    fn spectral_chart_round_trip() {
        let k = QuasimomentumPoint::from_spectral(c(0.3, -1.2), c(2.0, 0.5));
        assert!((k.lambda() - c(0.3, -1.2)).norm() < 1e-15);
        assert!((k.w() - c(2.0, 0.5)).norm() < 1e-15);
        // μ(γ) = exp(λγ + Wγ̄)
        let lat = Lattice::hexagonal();
        let (m1, m2) = k.multipliers(&lat);
        let e = |g: C64| (c(0.3, -1.2) * g + c(2.0, 0.5) * g.conj()).exp();
        assert!((m1 - e(lat.gamma1)).norm() < 1e-12 * m1.norm());
        assert!((m2 - e(lat.gamma2)).norm() < 1e-12 * m2.norm());
    }

    #[test]
    fn zero_potential_is_block_diagonal() {
        let p = TruncatedPencil::new(&zero(16), 3).unwrap();
        assert_eq!(p.blocks().len(), 49);
        assert_eq!(p.dim(), 98);
        let k = QuasimomentumPoint::from_spectral(c(0.7, 0.2), c(0.0, 0.0));
        assert!(p.witness(&k) < 1e-15);
        let full = p.matrix(&k);
        let sv = full.singular_values();
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(smin < 1e-14);
    }

    #[test]
    fn block_and_full_witness_agree() {
        let g = FundamentalGrid::new(Lattice::square(), 16, 16).unwrap();
        let u = PeriodicField::from_xy(g, |x, y| 0.3 + 0.2 * (2.0 * PI * x).cos() + 0.1 * (2.0 * PI * y).sin()).unwrap();
        let p = TruncatedPencil::new(&u, 2).unwrap();
        assert_eq!(p.blocks().len(), 1);
        let k = QuasimomentumPoint::new(c(0.2, 0.1), c(-0.3, 0.05));
        let sv = p.matrix(&k).singular_values();
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((smin - p.witness(&k)).abs() < 1e-13);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 2.0), c(0.5, 0.0), c(-0.3, 0.1), c(0.0, -1.0)]);
        let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let s = two_by_two_singular_values(&a);
        assert!((s[0] - sv[0]).abs() < 1e-14 && (s[1] - sv[1]).abs() < 1e-14);
    }

    #[test]
    fn cell_centres_avoid_resonances() {
        let lat = Lattice::square();
        let l = cell_centre_lambda(&lat, c(20.0, 3.0));
        let d = free_resonances(&lat, 12).iter().map(|r| (r.2 - l).norm()).fold(f64::INFINITY, f64::min);
        assert!((d - PI / 2f64.sqrt()).abs() < 1e-12);
    }
}
