//! Floquet theory of the Zakharov–Shabat system φ′ = [[−iλ, 2U], [−2U, iλ]]φ
//! for one-dimensional periodic potentials.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{c, PeriodicField, C64, I};
use crate::linalg::{rk4_nodes, unimodular_multipliers, M2, M4};
use crate::series::{quasiperiodic_derivative, Series1D};
use crate::surface::{dual_isothermic, fundamental_forms, spinor_from_surface, ImmersionR3, CONFORMAL_TOL, ISOTHERMIC_TOL};

type Closure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real T-periodic potential given by samples (and optionally a closed form).
#[derive(Clone)]
pub struct Potential1D {
    series: Series1D,
    closure: Option<Closure>,
}

impl std::fmt::Debug for Potential1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Potential1D")
            .field("period", &self.period())
            .field("samples", &self.series.len())
            .field("closure", &self.closure.is_some())
            .finish()
    }
}

impl Potential1D {
    pub fn new(samples: Vec<f64>, period: f64) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential samples".into()));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::invalid(format!("period must be positive, got {period}")));
        }
        Ok(Potential1D { series: Series1D::from_real(&samples, period), closure: None })
    }

    /// Samples `f` at `n` points and keeps `f` for exact evaluation.
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static, period: f64, n: usize) -> Result<Self> {
        let s = (0..n).map(|j| f(period * j as f64 / n as f64)).collect();
        let mut p = Self::new(s, period)?;
        p.closure = Some(Arc::new(f));
        Ok(p)
    }

    pub fn constant(v: f64, period: f64) -> Self {
        Self::from_fn(move |_| v, period, 16).unwrap()
    }

    /// The slice t = 0 of a field on a lattice whose first generator is real.
    pub fn from_field_row(u: &PeriodicField) -> Result<Self> {
        let l = u.lattice();
        if l.gamma1.im.abs() > 1e-12 * l.gamma1.norm() || l.gamma1.re <= 0.0 {
            return Err(Error::invalid("first lattice generator must lie on the positive real axis"));
        }
        let g = u.grid();
        Self::new((0..g.n1).map(|j| u.at(j, 0).re).collect(), l.gamma1.re)
    }

    pub fn period(&self) -> f64 {
        self.series.period
    }
    pub fn samples(&self) -> Vec<f64> {
        self.series.samples.iter().map(|v| v.re).collect()
    }
    pub fn series(&self) -> &Series1D {
        &self.series
    }
    pub fn eval(&self, x: f64) -> f64 {
        match &self.closure {
            Some(f) => f(x),
            None => self.series.eval(x).re,
        }
    }
    /// Spectral derivative at the sample points.
    pub fn derivative_samples(&self) -> Vec<f64> {
        self.series.derivative(1).iter().map(|v| v.re).collect()
    }
}

/// Integration scheme for the monodromy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Fixed-step RK4 with Richardson step halving.
    Rk4Richardson,
}

/// Transfer-matrix evaluator over one period.
#[derive(Clone, Debug)]
pub struct Monodromy1D {
    pub potential: Potential1D,
    pub scheme: Scheme,
    pub min_steps: usize,
    pub tol: f64,
    pub max_levels: usize,
    nodes: Arc<Mutex<HashMap<usize, Arc<Vec<f64>>>>>,
}

fn zs_matrix(lambda: C64, u: f64) -> M2 {
    M2::new(-I * lambda, c(2.0 * u, 0.0), c(-2.0 * u, 0.0), I * lambda)
}

impl Monodromy1D {
    pub fn new(potential: Potential1D) -> Self {
        Monodromy1D {
            potential,
            scheme: Scheme::Rk4Richardson,
            min_steps: 64,
            tol: 1e-13,
            max_levels: 9,
            nodes: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn period(&self) -> f64 {
        self.potential.period()
    }

    /// Potential at the 2n+1 half-step nodes (cached per n).
    fn potential_nodes(&self, n: usize) -> Arc<Vec<f64>> {
        if let Some(v) = self.nodes.lock().unwrap().get(&n) {
            return v.clone();
        }
        let h = self.period() / n as f64;
        let v: Arc<Vec<f64>> = Arc::new((0..=2 * n).map(|i| self.potential.eval(i as f64 * h / 2.0)).collect());
        self.nodes.lock().unwrap().insert(n, v.clone());
        v
    }

    fn start_steps(&self, lambda: C64) -> usize {
        let t = self.period();
        let umax = self.potential.samples().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = (lambda.norm() + 2.0 * umax) * t;
        let n = (8.0 * scale).ceil() as usize;
        n.max(self.min_steps).next_power_of_two()
    }

    fn transfer_n(&self, lambda: C64, n: usize) -> M2 {
        let u = self.potential_nodes(n);
        let nodes: Vec<M2> = u.iter().map(|&v| zs_matrix(lambda, v)).collect();
        rk4_nodes(&nodes, self.period() / n as f64)
    }

    fn transfer_aug_n(&self, lambda: C64, n: usize) -> M4 {
        let u = self.potential_nodes(n);
        let nodes: Vec<M4> = u
            .iter()
            .map(|&v| {
                let a = zs_matrix(lambda, v);
                let mut m = M4::zeros();
                m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
                m.fixed_view_mut::<2, 2>(2, 2).copy_from(&a);
                m[(2, 0)] = -I;
                m[(3, 1)] = I;
                m
            })
            .collect();
        rk4_nodes(&nodes, self.period() / n as f64)
    }

    fn refine<const D: usize>(&self, lambda: C64, f: impl Fn(usize) -> nalgebra::SMatrix<C64, D, D>) -> Result<nalgebra::SMatrix<C64, D, D>> {
        if !lambda.is_finite() {
            return Err(Error::invalid("spectral parameter must be finite"));
        }
        let mut n = self.start_steps(lambda);
        let mut coarse = f(n);
        let mut achieved = f64::INFINITY;
        for _ in 0..self.max_levels {
            n *= 2;
            let fine = f(n);
            let diff = (fine - coarse) / c(15.0, 0.0);
            let err = crate::linalg::max_abs(&diff);
            let scale = 1.0 + crate::linalg::max_abs(&fine);
            if err <= self.tol * scale {
                return Ok(fine + diff);
            }
            achieved = err / scale;
            coarse = fine;
        }
        Err(Error::numerical(format!(
            "monodromy at λ = {lambda} did not converge: achieved relative tolerance {achieved:.3e} \
             at {n} steps"
        )))
    }

    /// T̂(λ) from the identity at x = 0.
    pub fn monodromy(&self, lambda: C64) -> Result<M2> {
        let m = self.refine(lambda, |n| self.transfer_n(lambda, n))?;
        let det = m.determinant();
        if (det - c(1.0, 0.0)).norm() > 1e-10 * (1.0 + crate::linalg::max_abs(&m).powi(2)) {
            return Err(Error::numerical(format!("monodromy determinant defect {:.3e}", (det - 1.0).norm())));
        }
        Ok(m)
    }

    /// (T̂, dT̂/dλ) from the variational equations.
    pub fn monodromy_with_derivative(&self, lambda: C64) -> Result<(M2, M2)> {
        let m = self.refine(lambda, |n| self.transfer_aug_n(lambda, n))?;
        Ok((m.fixed_view::<2, 2>(0, 0).into_owned(), m.fixed_view::<2, 2>(2, 0).into_owned()))
    }

    pub fn trace(&self, lambda: C64) -> Result<C64> {
        Ok(self.monodromy(lambda)?.trace())
    }

    pub fn trace_and_derivative(&self, lambda: C64) -> Result<(C64, C64)> {
        let (m, d) = self.monodromy_with_derivative(lambda)?;
        Ok((m.trace(), d.trace()))
    }

    /// Fundamental matrix sampled at `n` equispaced points of [0, T) using
    /// `sub` RK4 steps per sample spacing.
    pub fn fundamental_samples(&self, lambda: C64, n: usize, sub: usize) -> Vec<M2> {
        let steps = n * sub;
        let h = self.period() / steps as f64;
        let u = self.potential_nodes(steps);
        let mut out = Vec::with_capacity(n);
        let mut phi = M2::identity();
        for s in 0..steps {
            if s % sub == 0 {
                out.push(phi);
            }
            let nodes = [zs_matrix(lambda, u[2 * s]), zs_matrix(lambda, u[2 * s + 1]), zs_matrix(lambda, u[2 * s + 2])];
            phi = rk4_nodes(&nodes, h) * phi;
        }
        out
    }
}

/// Roots of k² − Tr T̂·k + 1 = 0 (larger magnitude first).
pub fn floquet_multipliers(m: &Monodromy1D, lambda: C64) -> Result<(C64, C64)> {
    Ok(unimodular_multipliers(m.trace(lambda)?))
}

/// Axis-aligned rectangle in C.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Rect { re_min, re_max, im_min, im_max }
    }
    fn width(&self) -> f64 {
        (self.re_max - self.re_min).max(self.im_max - self.im_min)
    }
    fn is_empty(&self) -> bool {
        !(self.re_max > self.re_min && self.im_max > self.im_min)
    }
    fn contains(&self, z: C64, pad: f64) -> bool {
        z.re >= self.re_min - pad && z.re <= self.re_max + pad && z.im >= self.im_min - pad && z.im <= self.im_max + pad
    }
    fn center(&self) -> C64 {
        c(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }
    fn corners(&self) -> [C64; 4] {
        [
            c(self.re_min, self.im_min),
            c(self.re_max, self.im_min),
            c(self.re_max, self.im_max),
            c(self.re_min, self.im_max),
        ]
    }
}

/// Located roots of Tr²T̂ − 4.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectralCurve1D {
    pub branch_points: Vec<C64>,
    pub resonance_points: Vec<C64>,
    /// `None` when the search was incomplete or the simple-root count is odd.
    pub genus_estimate: Option<usize>,
    pub complete: bool,
    pub search_region: Rect,
}

/// Knobs of the argument-principle root search.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RootSearch {
    /// Maximum number of trace evaluations.
    pub budget: usize,
    /// Boxes are split until they are narrower than this before multiple roots are accepted.
    pub min_width: f64,
    /// |d(Tr²−4)/dλ| below `double_root_tol × 4T` classifies a double root.
    pub double_root_tol: f64,
}

impl Default for RootSearch {
    fn default() -> Self {
        RootSearch { budget: 200_000, min_width: 1e-3, double_root_tol: 1e-6 }
    }
}

struct Searcher<'a> {
    m: &'a Monodromy1D,
    cache: HashMap<(u64, u64), C64>,
    evals: usize,
    budget: usize,
}

enum Winding {
    Count(usize),
    OnBoundary,
    Budget,
}

impl Searcher<'_> {
    fn g(&mut self, z: C64) -> Result<Option<C64>> {
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(v) = self.cache.get(&key) {
            return Ok(Some(*v));
        }
        if self.evals >= self.budget {
            return Ok(None);
        }
        self.evals += 1;
        let t = self.m.trace(z)?;
        let v = t * t - c(4.0, 0.0);
        self.cache.insert(key, v);
        Ok(Some(v))
    }

    /// Winding number of g around the rectangle.
    fn winding(&mut self, r: &Rect) -> Result<Winding> {
        let cs = r.corners();
        let mut total = 0.0;
        for e in 0..4 {
            let (a, b) = (cs[e], cs[(e + 1) % 4]);
            match self.edge(a, b)? {
                Some(d) => total += d,
                None if self.evals >= self.budget => return Ok(Winding::Budget),
                None => return Ok(Winding::OnBoundary),
            }
        }
        let n = (total / (2.0 * PI)).round();
        if n < 0.0 {
            return Err(Error::numerical("negative winding number for an entire function"));
        }
        Ok(Winding::Count(n as usize))
    }

    /// Accumulated change of arg g along a segment, adaptively refined.
    fn edge(&mut self, a: C64, b: C64) -> Result<Option<f64>> {
        let n0 = 8;
        let mut pts: Vec<f64> = (0..=n0).map(|i| i as f64 / n0 as f64).collect();
        let mut vals = Vec::with_capacity(pts.len());
        for &s in &pts {
            match self.g(a + (b - a) * s)? {
                Some(v) => vals.push(v),
                None => return Ok(None),
            }
        }
        let mut i = 0;
        let mut total = 0.0;
        while i + 1 < pts.len() {
            let (v0, v1) = (vals[i], vals[i + 1]);
            let scale = v0.norm().max(v1.norm());
            if v0.norm() < 1e-13 * (1.0 + scale) || v1.norm() < 1e-13 * (1.0 + scale) {
                return Ok(None);
            }
            let d = (v1 / v0).arg();
            if d.abs() > PI / 4.0 {
                if pts[i + 1] - pts[i] < 1e-9 {
                    return Ok(None);
                }
                let s = 0.5 * (pts[i] + pts[i + 1]);
                match self.g(a + (b - a) * s)? {
                    Some(v) => {
                        pts.insert(i + 1, s);
                        vals.insert(i + 1, v);
                    }
                    None => return Ok(None),
                }
                continue;
            }
            total += d;
            i += 1;
        }
        Ok(Some(total))
    }

    /// Newton iteration on g with multiplicity m; returns the iterate of
    /// smallest |g| (near a double root rounding noise makes later iterates wander).
    fn newton(&mut self, z0: C64, mult: usize) -> Result<Option<C64>> {
        let mut z = z0;
        let mut best: Option<(C64, f64)> = None;
        for _ in 0..60 {
            let (t, dt) = self.m.trace_and_derivative(z)?;
            self.evals += 1;
            let g = t * t - c(4.0, 0.0);
            if best.map_or(true, |(_, b)| g.norm() < b) {
                best = Some((z, g.norm()));
            }
            let dg = t * dt * 2.0;
            if dg.norm() == 0.0 {
                break;
            }
            let step = g / dg * mult as f64;
            z -= step;
            if !z.is_finite() {
                return Ok(None);
            }
            if step.norm() < 1e-14 * (1.0 + z.norm()) {
                break;
            }
        }
        Ok(best.filter(|(_, g)| *g < 1e-8).map(|(z, _)| z))
    }
}

fn split(r: &Rect, frac: f64) -> [Rect; 2] {
    if r.re_max - r.re_min >= r.im_max - r.im_min {
        let m = r.re_min + frac * (r.re_max - r.re_min);
        [Rect { re_max: m, ..*r }, Rect { re_min: m, ..*r }]
    } else {
        let m = r.im_min + frac * (r.im_max - r.im_min);
        [Rect { im_max: m, ..*r }, Rect { im_min: m, ..*r }]
    }
}

/// Roots of Tr²T̂(λ) − 4 in `region`: argument-principle subdivision, Newton
/// polish, and a derivative test separating branch points from resonances.
pub fn branch_points(m: &Monodromy1D, region: Rect, opts: RootSearch) -> Result<SpectralCurve1D> {
    let mut out = SpectralCurve1D {
        branch_points: vec![],
        resonance_points: vec![],
        genus_estimate: Some(0),
        complete: true,
        search_region: region,
    };
    if region.is_empty() {
        return Ok(out);
    }
    let mut s = Searcher { m, cache: HashMap::new(), evals: 0, budget: opts.budget };
    let scale = 4.0 * m.period();
    // roots exactly on the outer boundary are avoided by a small outward pad
    let mut root = region;
    let mut stack = Vec::new();
    for attempt in 0..8 {
        match s.winding(&root)? {
            Winding::Count(n) => {
                stack.push((root, n));
                break;
            }
            Winding::Budget => {
                out.complete = false;
                out.genus_estimate = None;
                return Ok(out);
            }
            Winding::OnBoundary => {
                let pad = 1e-6 * (1.0 + region.width()) * (attempt + 1) as f64 * 1.37;
                root = Rect::new(region.re_min - pad, region.re_max + pad, region.im_min - pad, region.im_max + pad);
            }
        }
    }
    let mut found: Vec<(C64, usize)> = Vec::new();
    while let Some((r, n)) = stack.pop() {
        if n == 0 {
            continue;
        }
        let narrow = r.width() < opts.min_width;
        if n == 1 || narrow {
            let guess = r.center();
            let mut hit = None;
            for mult in [n.min(2), 2] {
                if let Some(z) = s.newton(guess, mult)? {
                    if r.contains(z, if narrow { r.width() } else { 1e-9 * (1.0 + z.norm()) }) {
                        hit = Some(z);
                        break;
                    }
                }
            }
            if let Some(z) = hit {
                found.push((z, n));
                continue;
            }
            if narrow {
                // Newton escaped a tiny box: keep the centre as the estimate
                found.push((guess, n));
                continue;
            }
        }
        let mut fracs = [0.4871, 0.5213, 0.4637, 0.5391, 0.4419].into_iter();
        loop {
            let Some(f) = fracs.next() else {
                return Err(Error::numerical("could not split a box without hitting a root on the cut"));
            };
            let halves = split(&r, f);
            let mut counts = Vec::new();
            let mut retry = false;
            for h in &halves {
                match s.winding(h)? {
                    Winding::Count(k) => counts.push(k),
                    Winding::OnBoundary => {
                        retry = true;
                        break;
                    }
                    Winding::Budget => {
                        out.complete = false;
                        out.genus_estimate = None;
                        classify(&mut out, &found, &mut s, scale, opts)?;
                        return Ok(out);
                    }
                }
            }
            if retry {
                continue;
            }
            for (h, k) in halves.into_iter().zip(counts) {
                stack.push((h, k));
            }
            break;
        }
    }
    classify(&mut out, &found, &mut s, scale, opts)?;
    Ok(out)
}

/// Merges roots closer than `tol`; a double root perturbed by rounding shows
/// up as two simple roots about √ε apart.
fn merge_clusters(found: &[(C64, usize)], tol: f64) -> Vec<(C64, usize)> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for &(z, n) in found {
        match out.iter_mut().find(|(w, _)| (w - z).norm() < tol * (1.0 + z.norm())) {
            Some(slot) => {
                let tot = slot.1 + n;
                slot.0 = (slot.0 * slot.1 as f64 + z * n as f64) / tot as f64;
                slot.1 = tot;
            }
            None => out.push((z, n)),
        }
    }
    out
}

fn classify(out: &mut SpectralCurve1D, found: &[(C64, usize)], s: &mut Searcher<'_>, scale: f64, opts: RootSearch) -> Result<()> {
    let found = merge_clusters(found, 1e-6);
    for &(z, n) in &found {
        let (t, dt) = s.m.trace_and_derivative(z)?;
        let dg = (t * dt * 2.0).norm();
        if n >= 2 || dg < opts.double_root_tol * scale {
            out.resonance_points.push(z);
        } else {
            out.branch_points.push(z);
        }
    }
    let key = |z: &C64| (z.re, z.im);
    out.branch_points.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    out.resonance_points.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    out.genus_estimate = if out.complete && out.branch_points.len() % 2 == 0 {
        Some(out.branch_points.len().saturating_sub(2) / 2)
    } else {
        None
    };
    Ok(())
}

/// Normalizations of the Miura map U → q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiuraConvention {
    /// q = 2iUₓ − 4U²; passes the ν = λ² Schrödinger oracle for the
    /// Zakharov–Shabat normalization used here.
    ZakharovShabat,
    /// q = 2iUₓ − U², the alternative normalization, kept for comparison.
    Reduced,
}

impl Default for MiuraConvention {
    fn default() -> Self {
        MiuraConvention::ZakharovShabat
    }
}

impl std::str::FromStr for MiuraConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zakharov-shabat" | "zs" | "default" => Ok(MiuraConvention::ZakharovShabat),
            "reduced" => Ok(MiuraConvention::Reduced),
            _ => Err(Error::invalid(format!("unknown Miura convention '{s}'"))),
        }
    }
}

/// A complex T-periodic Schrödinger potential.
#[derive(Clone, Debug)]
pub struct SchrodingerPotential {
    pub samples: Vec<C64>,
    pub period: f64,
}

/// Miura map q = 2iUₓ − κU² (κ = 4 or 1) at the sample points of U.
pub fn miura(u: &Potential1D, convention: MiuraConvention) -> SchrodingerPotential {
    let kappa = match convention {
        MiuraConvention::ZakharovShabat => 4.0,
        MiuraConvention::Reduced => 1.0,
    };
    let ux = u.derivative_samples();
    let samples = u
        .samples()
        .iter()
        .zip(&ux)
        .map(|(&v, &d)| c(-kappa * v * v, 2.0 * d))
        .collect();
    SchrodingerPotential { samples, period: u.period() }
}

/// max |−f″ + qf − λ²f| / max |f| for f = φ₁ − iφ₂ built from a Floquet
/// solution of the ZS system, with q from `convention`.
pub fn schrodinger_residual(m: &Monodromy1D, lambda: C64, convention: MiuraConvention, n: usize) -> Result<f64> {
    let mono = m.monodromy(lambda)?;
    let ev = crate::linalg::eig2(&mono);
    let mu = ev[0];
    // eigenvector of the monodromy for mu
    let (a, b) = (mono[(0, 0)] - mu, mono[(0, 1)]);
    let v = if a.norm() + b.norm() > 1e-300 { (-b, a) } else { (mu - mono[(1, 1)], mono[(1, 0)]) };
    let fund = m.fundamental_samples(lambda, n, 64);
    let f: Vec<C64> = fund
        .iter()
        .map(|p| {
            let p1 = p[(0, 0)] * v.0 + p[(0, 1)] * v.1;
            let p2 = p[(1, 0)] * v.0 + p[(1, 1)] * v.1;
            p1 - I * p2
        })
        .collect();
    let t = m.period();
    let d1 = quasiperiodic_derivative(&f, t, mu);
    let d2 = quasiperiodic_derivative(&d1, t, mu);
    let xs: Vec<f64> = (0..n).map(|j| t * j as f64 / n as f64).collect();
    let useries = Potential1D::new(xs.iter().map(|&x| m.potential.eval(x)).collect(), t)?;
    let q = miura(&useries, convention);
    let fmax = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut r = 0.0f64;
    for j in 0..n {
        r = r.max((-d2[j] + q.samples[j] * f[j] - lambda * lambda * f[j]).norm());
    }
    Ok(r / fmax)
}

/// Kruskal–Miura invariants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KruskalInvariants {
    /// H_l in the closed-form normalization (H₁ = ∫q, H₂ = ∫q², H₃ = ∫(2q³ − qₓ²)).
    pub h: Vec<C64>,
    /// K_l = −2πH_l, normalized so that K₁ is the Willmore functional of the torus.
    pub k: Vec<C64>,
}

/// Densities R₁ = −q, R_{n+1} = −R_{n,x} − Σ R_kR_{n−k} integrated over one period.
pub fn kruskal_invariants(q: &SchrodingerPotential, count: usize) -> Result<KruskalInvariants> {
    if count < 1 {
        return Err(Error::invalid("need at least one invariant"));
    }
    let t = q.period;
    let nmax = 2 * count - 1;
    let mut r: Vec<Vec<C64>> = Vec::with_capacity(nmax);
    r.push(q.samples.iter().map(|v| -v).collect());
    for n in 1..nmax {
        let d = Series1D::new(r[n - 1].clone(), t).derivative(1);
        let mut next: Vec<C64> = d.iter().map(|v| -v).collect();
        for k in 1..n {
            for (i, x) in next.iter_mut().enumerate() {
                *x -= r[k - 1][i] * r[n - k - 1][i];
            }
        }
        r.push(next);
    }
    let integral = |v: &Vec<C64>| v.iter().sum::<C64>() * (t / v.len() as f64);
    let h: Vec<C64> = (0..count).map(|l| -integral(&r[2 * l])).collect();
    let k = h.iter().map(|v| v * (-2.0 * PI)).collect();
    Ok(KruskalInvariants { h, k })
}

/// Closed forms H₁, H₂, H₃ computed directly.
pub fn kruskal_closed_forms(q: &SchrodingerPotential) -> [C64; 3] {
    let t = q.period;
    let n = q.samples.len();
    let qx = Series1D::new(q.samples.clone(), t).derivative(1);
    let w = t / n as f64;
    let h1 = q.samples.iter().sum::<C64>() * w;
    let h2 = q.samples.iter().map(|v| v * v).sum::<C64>() * w;
    let h3 = q.samples.iter().zip(&qx).map(|(v, d)| v * v * v * 2.0 - d * d).sum::<C64>() * w;
    [h1, h2, h3]
}

/// Invariants of U and of the dual potential U* for a torus of revolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Theorem8Report {
    pub k_u: Vec<C64>,
    pub k_dual: Vec<C64>,
    pub abs_differences: Vec<f64>,
    pub rel_differences: Vec<f64>,
    /// max |U(x,y) − U(x,0)|
    pub y_dependence: f64,
    pub willmore: f64,
}

/// Invariants for U (from the spinor) and U* (from the dual surface).
pub fn theorem8_check(f: &ImmersionR3, count: usize) -> Result<Theorem8Report> {
    let psi = spinor_from_surface(f)?;
    let dual = dual_isothermic(f, ISOTHERMIC_TOL)?;
    let ustar = fundamental_forms(&dual, CONFORMAL_TOL)?.potential();
    let g = *f.grid();
    let mut ydep = 0.0f64;
    for j in 0..g.n1 {
        for k in 0..g.n2 {
            ydep = ydep.max((psi.potential.at(j, k) - psi.potential.at(j, 0)).norm());
            ydep = ydep.max((ustar.at(j, k) - ustar.at(j, 0)).norm());
        }
    }
    let u1 = Potential1D::from_field_row(&psi.potential)?;
    let us1 = Potential1D::from_field_row(&ustar)?;
    let ku = kruskal_invariants(&miura(&u1, MiuraConvention::default()), count)?.k;
    let kd = kruskal_invariants(&miura(&us1, MiuraConvention::default()), count)?.k;
    let abs: Vec<f64> = ku.iter().zip(&kd).map(|(a, b)| (a - b).norm()).collect();
    let rel = abs.iter().zip(&ku).map(|(d, a)| d / (1.0 + a.norm())).collect();
    Ok(Theorem8Report {
        k_u: ku,
        k_dual: kd,
        abs_differences: abs,
        rel_differences: rel,
        y_dependence: ydep,
        willmore: psi.willmore()?,
    })
}

/// One row of the 1D spectrum table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSample {
    pub lambda: C64,
    pub trace: C64,
    pub mu: (C64, C64),
}

pub fn trace_table(m: &Monodromy1D, lambdas: &[C64]) -> Result<Vec<TraceSample>> {
    use rayon::prelude::*;
    lambdas
        .par_iter()
        .map(|&l| {
            let t = m.trace(l)?;
            Ok(TraceSample { lambda: l, trace: t, mu: unimodular_multipliers(t) })
        })
        .collect()
}

pub fn trace_csv(rows: &[TraceSample]) -> String {
    let mut s = String::from("lambda_re,lambda_im,trace_re,trace_im,mu1_re,mu1_im,mu2_re,mu2_im\n");
    for r in rows {
        s.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            r.lambda.re, r.lambda.im, r.trace.re, r.trace.im, r.mu.0.re, r.mu.0.im, r.mu.1.re, r.mu.1.im
        ));
    }
    s
}

/// Constant-coefficient oracle: trace of exp(T·A) via eigendecomposition.
pub fn constant_trace_oracle(cst: f64, lambda: C64, t: f64) -> C64 {
    let ev = crate::linalg::eig2(&zs_matrix(lambda, cst));
    (ev[0] * t).exp() + (ev[1] * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_trace() {
        let t = 2.0 * PI;
        let m = Monodromy1D::new(Potential1D::constant(0.0, t));
        for l in [c(0.3, 0.0), c(1.2, -0.4), c(-2.0, 0.7)] {
            let mono = m.monodromy(l).unwrap();
            assert!((mono[(0, 0)] - (-I * l * t).exp()).norm() < 1e-10);
            assert!((mono.trace() - (l * t).cos() * 2.0).norm() < 1e-10);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let m = Monodromy1D::new(Potential1D::from_fn(|x| 0.3 + 0.2 * x.cos(), 2.0 * PI, 64).unwrap());
        let l = c(0.4, 0.2);
        let (_, dt) = m.trace_and_derivative(l).unwrap();
        let h = 1e-5;
        let fd = (m.trace(l + h).unwrap() - m.trace(l - h).unwrap()) / (2.0 * h);
        assert!((dt - fd).norm() < 1e-7);
    }

    #[test]
    fn multipliers_of_quarter_wave() {
        let t = 1.0;
        let m = Monodromy1D::new(Potential1D::constant(0.0, t));
        let (a, b) = floquet_multipliers(&m, c(PI / 2.0, 0.0)).unwrap();
        assert!((a * b - 1.0).norm() < 1e-14);
        assert!((a.norm() - 1.0).abs() < 1e-9 && a.re.abs() < 1e-9);
    }

    #[test]
    fn miura_of_constant_and_zero() {
        let q = miura(&Potential1D::constant(0.3, 1.0), MiuraConvention::ZakharovShabat);
        assert!(q.samples.iter().all(|v| (v - c(-0.36, 0.0)).norm() < 1e-14));
        let q = miura(&Potential1D::constant(0.0, 1.0), MiuraConvention::ZakharovShabat);
        assert!(q.samples.iter().all(|v| v.norm() == 0.0));
        assert!("nope".parse::<MiuraConvention>().is_err());
    }
}
