//! Experiment configuration, on-disk formats and the subcommand runners.
//!
//! Settings are resolved lowest first: built-in defaults, the JSON config
//! file, `--override key=value` pairs in command-line order, then `--out`.
//! An override value is parsed as JSON and falls back to a plain string, so
//! `scan.cutoff=8`, `surface={"kind":"clifford"}` and `output.dir=run1` all work.
//!
//! Every run writes `report.json` (deterministic for a given config) and
//! `timing.json` (wall clock, thread count) plus the subcommand's tables and
//! meshes.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::floquet1d::{branch_points, trace_csv, trace_table, Monodromy1D, Potential1D, Rect, RootSearch};
use crate::floquet2d::{
    extract_c1, free_plane_distance, samples_csv, spectrum_scan, FitOptions, QuasimomentumPoint, ScanOptions, Slice,
    TruncatedPencil,
};
use crate::lax::{
    cmc_monodromy, cmc_prop_map, extraction_residual_curve, floquet_profiles, monodromy, sigma_involution,
    zero_curvature_residual, IsothermicData, LaxConnection, SinhGordonField,
};
use crate::s3::{
    apply_moebius, clifford_checks, clifford_floquet2d_check, gauge_identities, s3_r3_comparison, theorem10_gauge,
    theorem11_check, HitchinFamily, MoebiusMap, MoebiusPrimitive, Placement, SU2Immersion, Theorem11Options,
};
use crate::surface::{
    dual_isothermic, fundamental_forms, spinor_from_surface, surface_from_spinor, surface_report, willmore_direct,
    ImmersionR3, RevolutionTorus, V3,
};
use crate::verify::{self, CriterionData};
use crate::{c, Error, FundamentalGrid, Lattice, PeriodicField, Result, C64};

pub const SUBCOMMANDS: [&str; 13] = [
    "clifford",
    "revolve",
    "potential",
    "spectrum1d",
    "spectrum2d",
    "willmore",
    "kruskal",
    "dual",
    "cmc-curve",
    "isothermic-pencil",
    "s3-spectrum",
    "moebius",
    "verify",
];

pub const THREADS_ENV: &str = "SPECTRAL_TORI_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum LatticeSpec {
    Square {},
    Rectangular { a: f64, b: f64 },
    Hexagonal {},
    General { gamma1: [f64; 2], gamma2: [f64; 2] },
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice> {
        match self {
            LatticeSpec::Square {} => Ok(Lattice::square()),
            LatticeSpec::Rectangular { a, b } => {
                if !(*a > 0.0 && *b > 0.0) {
                    return Err(Error::invalid(format!("rectangular sides must be positive, got a = {a}, b = {b}")));
                }
                Lattice::rectangular(*a, *b)
            }
            LatticeSpec::Hexagonal {} => Ok(Lattice::hexagonal()),
            LatticeSpec::General { gamma1, gamma2 } => Lattice::new(c(gamma1[0], gamma1[1]), c(gamma2[0], gamma2[1])),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n1: 64, n2: 64 }
    }
}

/// Surfaces in R³. `clifford` means the stereographic image of the Clifford
/// torus wherever an R³ surface is needed; `fromMeshFile` reads an OBJ whose
/// vertices are in grid order (as written by this tool) on the configured
/// lattice and grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum SurfaceSpec {
    Clifford {},
    Revolution {
        #[serde(rename = "R")]
        big_r: f64,
        r: f64,
    },
    Plane {},
    FromMeshFile {
        path: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero {},
    Constant {
        c: f64,
    },
    /// Samples of U(x) over one period; on a 2D lattice U depends on the
    /// first lattice coordinate only. The period defaults to |γ₁|.
    OneDim {
        samples: Vec<f64>,
        #[serde(default)]
        period: Option<f64>,
    },
    /// U of the configured surface.
    FromSurface {},
}

/// Two-parameter slices of quasimomentum space for the 2D scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum SliceSpec {
    /// λ = u + iv on the sheet W = 0.
    LambdaPlane { re: [f64; 2], im: [f64; 2] },
    /// Real quasimomenta (k₁, k₂) = (u, v).
    RealPlane { u: [f64; 2], v: [f64; 2] },
    /// k = base + u·d1 + v·d2, each given as [[k₁re, k₁im], [k₂re, k₂im]].
    Linear { base: [[f64; 2]; 2], d1: [[f64; 2]; 2], d2: [[f64; 2]; 2], u: [f64; 2], v: [f64; 2] },
}

fn qp(a: &[[f64; 2]; 2]) -> QuasimomentumPoint {
    QuasimomentumPoint::new(c(a[0][0], a[0][1]), c(a[1][0], a[1][1]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ScanSpec {
    pub slice: SliceSpec,
    pub points: usize,
    /// Fourier cutoff M of the truncated operator.
    pub cutoff: usize,
    /// 0: smallest singular value; 1: second smallest.
    pub which: usize,
    pub rel_threshold: f64,
    pub fit_c1: bool,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            slice: SliceSpec::Linear {
                base: [[0.11, 0.07], [-0.03, 0.13]],
                d1: [[1.0, 0.2], [0.3, -0.1]],
                d2: [[-0.2, 0.4], [0.9, 0.5]],
                u: [-1.5, 1.5],
                v: [-1.5, 1.5],
            },
            points: 41,
            cutoff: 6,
            which: 0,
            rel_threshold: 1e-6,
            fit_c1: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Spectrum1DSpec {
    /// Search rectangle for the branch points, [min, max] per axis.
    pub re: [f64; 2],
    pub im: [f64; 2],
    /// The trace table samples a `table × table` grid over the rectangle.
    pub table: usize,
    pub budget: usize,
}

impl Default for Spectrum1DSpec {
    fn default() -> Self {
        Spectrum1DSpec { re: [-1.5, 1.5], im: [-1.5, 1.5], table: 21, budget: RootSearch::default().budget }
    }
}

impl Spectrum1DSpec {
    fn rect(&self) -> Rect {
        Rect::new(self.re[0], self.re[1], self.im[0], self.im[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct LaxSpec {
    /// Initial amplitude of the periodic sinh-Gordon solution, in (0, 8].
    pub amplitude: f64,
    pub samples: usize,
    pub lambdas: Vec<C64>,
}

impl Default for LaxSpec {
    fn default() -> Self {
        LaxSpec {
            amplitude: 1.0,
            samples: 128,
            lambdas: vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0), c(0.5, 0.0), C64::from_polar(1.0, 0.8)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct S3Spec {
    pub lambdas: Vec<C64>,
    pub placement: Placement,
    /// λ on the S³ sheet where the S³ and R³ operators are compared.
    pub comparison_lambdas: Vec<C64>,
    /// Centre of the λ-window of the floquet2d cross-check.
    pub cross_check_lambda: C64,
}

impl Default for S3Spec {
    fn default() -> Self {
        S3Spec {
            lambdas: vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0)],
            placement: Placement::Eigenfunction,
            comparison_lambdas: vec![c(0.6, 0.2), c(-0.4, 0.9)],
            cross_check_lambda: c(0.6, 0.2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct MoebiusSpec {
    /// Applied right to left, like composition.
    pub ops: Vec<MoebiusPrimitive>,
    pub spectra: bool,
    pub re: [f64; 2],
    pub im: [f64; 2],
}

impl Default for MoebiusSpec {
    fn default() -> Self {
        let o = Theorem11Options::default();
        MoebiusSpec {
            ops: vec![MoebiusPrimitive::Inversion { center: [0.0, 0.0, 1.5] }],
            spectra: true,
            re: [o.region.re_min, o.region.re_max],
            im: [o.region.im_min, o.region.im_max],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct VerifySpec {
    pub criteria: Vec<usize>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { criteria: (1..=12).collect() }
    }
}

/// Bounds of the hard checks. Defaults are the module defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Tolerances {
    pub conformal: f64,
    pub isothermic: f64,
    pub clifford: f64,
    pub willmore: f64,
    pub determinant: f64,
    pub trace: f64,
    pub kruskal_rel: f64,
    pub round_trip: f64,
    pub closure: f64,
    pub plane_distance: f64,
    pub c1_willmore: f64,
    pub zero_curvature: f64,
    pub extraction: f64,
    pub involution: f64,
    pub flatness: f64,
    pub gauge: f64,
    pub theorem11: f64,
    pub branch_points: f64,
    pub invariants_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            conformal: crate::surface::CONFORMAL_TOL,
            isothermic: crate::surface::ISOTHERMIC_TOL,
            clifford: 1e-10,
            willmore: 1e-6,
            determinant: 1e-10,
            trace: 1e-9,
            kruskal_rel: 1e-6,
            round_trip: 1e-6,
            closure: 1e-8,
            plane_distance: 1e-10,
            c1_willmore: 1e-4,
            zero_curvature: 1e-8,
            extraction: 1e-7,
            involution: 1e-9,
            flatness: 1e-9,
            gauge: 1e-8,
            theorem11: 1e-6,
            branch_points: 1e-5,
            invariants_rel: 1e-5,
        }
    }
}

impl Tolerances {
    fn all(&self) -> [(&'static str, f64); 19] {
        [
            ("conformal", self.conformal),
            ("isothermic", self.isothermic),
            ("clifford", self.clifford),
            ("willmore", self.willmore),
            ("determinant", self.determinant),
            ("trace", self.trace),
            ("kruskalRel", self.kruskal_rel),
            ("roundTrip", self.round_trip),
            ("closure", self.closure),
            ("planeDistance", self.plane_distance),
            ("c1Willmore", self.c1_willmore),
            ("zeroCurvature", self.zero_curvature),
            ("extraction", self.extraction),
            ("involution", self.involution),
            ("flatness", self.flatness),
            ("gauge", self.gauge),
            ("theorem11", self.theorem11),
            ("branchPoints", self.branch_points),
            ("invariantsRel", self.invariants_rel),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
    pub obj: bool,
    pub csv: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: "out".into(), obj: true, csv: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Lattice for builtin potentials, the plane and mesh files. Builtin
    /// tori carry their own lattice.
    pub lattice: LatticeSpec,
    pub grid: GridSpec,
    pub surface: SurfaceSpec,
    pub potential: PotentialSpec,
    pub scan: ScanSpec,
    pub spectrum1d: Spectrum1DSpec,
    pub lax: LaxSpec,
    pub s3: S3Spec,
    pub moebius: MoebiusSpec,
    pub verify: VerifySpec,
    pub tolerances: Tolerances,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            lattice: LatticeSpec::Square {},
            grid: GridSpec::default(),
            surface: SurfaceSpec::Revolution { big_r: 2.0, r: 1.0 },
            potential: PotentialSpec::FromSurface {},
            scan: ScanSpec::default(),
            spectrum1d: Spectrum1DSpec::default(),
            lax: LaxSpec::default(),
            s3: S3Spec::default(),
            moebius: MoebiusSpec::default(),
            verify: VerifySpec::default(),
            tolerances: Tolerances::default(),
            output: OutputSpec::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be finite")))
    }
}

fn range(name: &str, r: [f64; 2]) -> Result<()> {
    finite(name, r[0])?;
    finite(name, r[1])?;
    if r[1] > r[0] {
        Ok(())
    } else {
        Err(config_err(format!("{name} must satisfy min < max, got {r:?}")))
    }
}

fn lambdas(name: &str, ls: &[C64]) -> Result<()> {
    if ls.iter().all(|l| l.re.is_finite() && l.im.is_finite()) {
        Ok(())
    } else {
        Err(config_err(format!("{name} contains non-finite values")))
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| config_err(format!("config is not valid JSON: {e}")))?;
        Self::from_value(v)
    }

    fn from_value(v: Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(v).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file and applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut v = match path {
            Some(p) => {
                let s = fs::read_to_string(p).map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&s).map_err(|e| config_err(format!("{} is not valid JSON: {e}", p.display())))?
            }
            None => serde_json::to_value(ExperimentConfig::default())?,
        };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.build().map_err(|e| config_err(format!("lattice: {e}")))?;
        let g = self.grid;
        for (name, n) in [("grid.n1", g.n1), ("grid.n2", g.n2)] {
            if !(4..=4096).contains(&n) {
                return Err(config_err(format!("{name} must lie in [4, 4096], got {n}")));
            }
        }
        match &self.surface {
            SurfaceSpec::Revolution { big_r, r } => {
                finite("surface.R", *big_r)?;
                finite("surface.r", *r)?;
                if !(*r > 0.0 && big_r > r) {
                    return Err(config_err(format!("revolution torus needs R > r > 0, got R = {big_r}, r = {r}")));
                }
            }
            SurfaceSpec::FromMeshFile { path } => {
                if !Path::new(path).is_file() {
                    return Err(config_err(format!("mesh file {path} does not exist")));
                }
            }
            SurfaceSpec::Clifford {} | SurfaceSpec::Plane {} => {}
        }
        match &self.potential {
            PotentialSpec::Constant { c } => finite("potential.c", *c)?,
            PotentialSpec::OneDim { samples, period } => {
                if samples.len() < 2 {
                    return Err(config_err("potential.samples needs at least 2 values"));
                }
                if samples.iter().any(|v| !v.is_finite()) {
                    return Err(config_err("potential.samples must be finite"));
                }
                if let Some(p) = period {
                    if !(p.is_finite() && *p > 0.0) {
                        return Err(config_err(format!("potential.period must be positive, got {p}")));
                    }
                }
            }
            PotentialSpec::Zero {} | PotentialSpec::FromSurface {} => {}
        }
        let s = &self.scan;
        if !(1..=32).contains(&s.cutoff) {
            return Err(config_err(format!("scan.cutoff must lie in [1, 32], got {}", s.cutoff)));
        }
        if !(3..=401).contains(&s.points) {
            return Err(config_err(format!("scan.points must lie in [3, 401], got {}", s.points)));
        }
        if s.which > 1 {
            return Err(config_err("scan.which must be 0 or 1"));
        }
        if !(s.rel_threshold > 0.0 && s.rel_threshold < 1.0) {
            return Err(config_err("scan.relThreshold must lie in (0, 1)"));
        }
        match &s.slice {
            SliceSpec::LambdaPlane { re, im } => {
                range("scan.slice.re", *re)?;
                range("scan.slice.im", *im)?;
            }
            SliceSpec::RealPlane { u, v } => {
                range("scan.slice.u", *u)?;
                range("scan.slice.v", *v)?;
            }
            SliceSpec::Linear { base, d1, d2, u, v } => {
                range("scan.slice.u", *u)?;
                range("scan.slice.v", *v)?;
                for x in base.iter().chain(d1).chain(d2).flatten() {
                    finite("scan.slice", *x)?;
                }
            }
        }
        let s1 = &self.spectrum1d;
        range("spectrum1d.re", s1.re)?;
        range("spectrum1d.im", s1.im)?;
        if !(2..=201).contains(&s1.table) {
            return Err(config_err("spectrum1d.table must lie in [2, 201]"));
        }
        if s1.budget == 0 {
            return Err(config_err("spectrum1d.budget must be positive"));
        }
        let l = &self.lax;
        if !(l.amplitude > 0.0 && l.amplitude <= 8.0) {
            return Err(config_err(format!("lax.amplitude must lie in (0, 8], got {}", l.amplitude)));
        }
        if !(8..=4096).contains(&l.samples) {
            return Err(config_err("lax.samples must lie in [8, 4096]"));
        }
        lambdas("lax.lambdas", &l.lambdas)?;
        lambdas("s3.lambdas", &self.s3.lambdas)?;
        lambdas("s3.comparisonLambdas", &self.s3.comparison_lambdas)?;
        lambdas("s3.crossCheckLambda", &[self.s3.cross_check_lambda])?;
        if self.s3.lambdas.iter().any(|l| l.norm() == 0.0) {
            return Err(config_err("s3.lambdas must avoid the pole λ = 0"));
        }
        MoebiusMap::new(self.moebius.ops.clone()).map_err(|e| config_err(format!("moebius.ops: {e}")))?;
        range("moebius.re", self.moebius.re)?;
        range("moebius.im", self.moebius.im)?;
        if let Some(id) = self.verify.criteria.iter().find(|i| !(1..=12).contains(*i)) {
            return Err(config_err(format!("verify.criteria: no criterion {id}")));
        }
        for (name, t) in self.tolerances.all() {
            if !(t.is_finite() && t > 0.0) {
                return Err(config_err(format!("tolerances.{name} must be positive and finite")));
            }
        }
        if self.output.dir.is_empty() {
            return Err(config_err("output.dir must not be empty"));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice.build().expect("validated")
    }
}

/// Sets `a.b.c` in a JSON object tree, creating intermediate objects.
pub fn apply_override(v: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| config_err(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.is_empty()) {
        return Err(config_err(format!("override {spec:?} has an empty key")));
    }
    let val: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = v;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| config_err(format!("override {key}: {p} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), val);
            return Ok(());
        }
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub name: String,
    /// `None` when the measured value was not finite.
    pub value: Option<f64>,
    pub bound: f64,
    pub comparison: Comparison,
    /// Failing hard checks make the run exit with status 3.
    pub hard: bool,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: &str, value: f64, comparison: Comparison, bound: f64) -> Self {
        let passed = value.is_finite()
            && match comparison {
                Comparison::AtMost => value <= bound,
                Comparison::AtLeast => value >= bound,
            };
        Check { name: name.into(), value: value.is_finite().then_some(value), bound, comparison, hard: true, passed, note: None }
    }
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, Comparison::AtMost, bound)
    }
    pub fn soft(mut self, note: &str) -> Self {
        self.hard = false;
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub subcommand: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub results: Value,
    /// Files written next to the report, in writing order.
    pub outputs: Vec<String>,
}

impl RunReport {
    pub fn hard_failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.hard && !c.passed).collect()
    }
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Result of a runner: the report plus the files to write beside it.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<(String, String)>,
    /// Non-deterministic extras (per-stage wall clock) for `timing.json`.
    pub timing: Value,
}

struct Outcome {
    checks: Vec<Check>,
    results: Value,
    files: Vec<(String, String)>,
    timing: Value,
}

impl Outcome {
    fn new(checks: Vec<Check>, results: Value) -> Self {
        Outcome { checks, results, files: Vec::new(), timing: Value::Null }
    }
    fn file(mut self, on: bool, name: &str, contents: String) -> Self {
        if on {
            self.files.push((name.into(), contents));
        }
        self
    }
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

/// The configured surface in R³, with the revolution parameters when builtin.
pub fn build_surface(cfg: &ExperimentConfig) -> Result<(ImmersionR3, Option<RevolutionTorus>)> {
    let g = cfg.grid;
    match &cfg.surface {
        SurfaceSpec::Clifford {} => Ok((SU2Immersion::clifford(g.n1, g.n2)?.stereographic_image()?, None)),
        SurfaceSpec::Revolution { big_r, r } => {
            let t = RevolutionTorus::new(*big_r, *r)?;
            Ok((t.immersion(g.n1, g.n2)?, Some(t)))
        }
        SurfaceSpec::Plane {} => Ok((ImmersionR3::plane(FundamentalGrid::new(cfg.lattice(), g.n1, g.n2)?), None)),
        SurfaceSpec::FromMeshFile { path } => {
            let s = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {path}: {e}")))?;
            let grid = FundamentalGrid::new(cfg.lattice(), g.n1, g.n2)?;
            Ok((read_obj(&s, grid)?, None))
        }
    }
}

/// Reads the vertices of a y-up OBJ written in grid order as a closed torus.
pub fn read_obj(s: &str, grid: FundamentalGrid) -> Result<ImmersionR3> {
    let mut pts = Vec::new();
    for (i, line) in s.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() != Some("v") {
            continue;
        }
        let xyz: Vec<f64> = it.take(3).map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| config_err(format!("OBJ line {}: {e}", i + 1)))?;
        if xyz.len() != 3 {
            return Err(config_err(format!("OBJ line {} has fewer than 3 coordinates", i + 1)));
        }
        // y-up back to z-up: (X, Y, Z) -> (X, −Z, Y)
        pts.push(V3::new(xyz[0], -xyz[2], xyz[1]));
    }
    if pts.len() != grid.len() {
        return Err(config_err(format!("OBJ has {} vertices, grid {}×{} needs {}", pts.len(), grid.n1, grid.n2, grid.len())));
    }
    ImmersionR3::from_samples(grid, &pts, [V3::zeros(), V3::zeros()])
}

fn one_dim_period(cfg: &ExperimentConfig, period: Option<f64>) -> f64 {
    period.unwrap_or_else(|| cfg.lattice().gamma1.norm())
}

/// The configured potential as a field on the configured lattice and grid
/// (or on the surface's own lattice for `fromSurface`).
pub fn build_potential(cfg: &ExperimentConfig) -> Result<PeriodicField> {
    let g = cfg.grid;
    let grid = || FundamentalGrid::new(cfg.lattice(), g.n1, g.n2);
    match &cfg.potential {
        PotentialSpec::Zero {} => Ok(PeriodicField::constant(grid()?, c(0.0, 0.0))),
        PotentialSpec::Constant { c: v } => Ok(PeriodicField::constant(grid()?, c(*v, 0.0))),
        PotentialSpec::OneDim { samples, period } => {
            let p = Potential1D::new(samples.clone(), one_dim_period(cfg, *period))?;
            let t = p.period();
            PeriodicField::from_fn(grid()?, crate::Character::PERIODIC, move |s, _, _| c(p.eval(s * t), 0.0))
        }
        PotentialSpec::FromSurface {} => Ok(spinor_from_surface(&build_surface(cfg)?.0)?.potential),
    }
}

/// The configured potential as a 1D potential; `fromSurface` takes U along
/// the first generator and reports the y-dependence it ignores.
pub fn build_potential_1d(cfg: &ExperimentConfig) -> Result<(Potential1D, f64)> {
    let t = cfg.lattice().gamma1.norm();
    match &cfg.potential {
        PotentialSpec::Zero {} => Ok((Potential1D::constant(0.0, t), 0.0)),
        PotentialSpec::Constant { c } => Ok((Potential1D::constant(*c, t), 0.0)),
        PotentialSpec::OneDim { samples, period } => Ok((Potential1D::new(samples.clone(), one_dim_period(cfg, *period))?, 0.0)),
        PotentialSpec::FromSurface {} => {
            let u = build_potential(cfg)?;
            let gr = *u.grid();
            let mut ydep = 0.0f64;
            for j in 0..gr.n1 {
                for k in 0..gr.n2 {
                    ydep = ydep.max((u.at(j, k) - u.at(j, 0)).norm());
                }
            }
            Ok((Potential1D::from_field_row(&u)?, ydep))
        }
    }
}

pub fn run_subcommand(name: &str, cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let out = match name {
        "clifford" => run_clifford(cfg)?,
        "revolve" => run_revolve(cfg)?,
        "potential" => run_potential(cfg)?,
        "spectrum1d" => run_spectrum1d(cfg)?,
        "spectrum2d" => run_spectrum2d(cfg)?,
        "willmore" => run_willmore(cfg)?,
        "kruskal" => run_kruskal(cfg)?,
        "dual" => run_dual(cfg)?,
        "cmc-curve" => run_cmc_curve(cfg)?,
        "isothermic-pencil" => run_isothermic_pencil(cfg)?,
        "s3-spectrum" => run_s3_spectrum(cfg)?,
        "moebius" => run_moebius(cfg)?,
        "verify" => run_verify(cfg)?,
        other => return Err(config_err(format!("unknown subcommand {other:?}; expected one of {}", SUBCOMMANDS.join(", ")))),
    };
    let mut outputs = vec!["report.json".to_string()];
    outputs.extend(out.files.iter().map(|f| f.0.clone()));
    Ok(RunOutput {
        report: RunReport {
            subcommand: name.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            checks: out.checks,
            results: out.results,
            outputs,
        },
        files: out.files,
        timing: out.timing,
    })
}

fn run_clifford(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let n = cfg.grid.n1;
    let (s, ch) = clifford_checks(n)?;
    let gauge = gauge_identities(&s)?;
    let proj = SU2Immersion::clifford(n, n)?.stereographic_image()?;
    let (cd, _, mean) = proj.conformality_defect()?;
    let sd = fundamental_forms(&proj, tol.conformal)?;
    let w = willmore_direct(&sd)?;
    let w_dirac = spinor_from_surface(&proj)?.willmore_from_dirac()?;
    let w0 = 2.0 * std::f64::consts::PI.powi(2);
    let checks = vec![
        Check::at_most("expAlpha", ch.exp_alpha_error, tol.clifford),
        Check::at_most("potential", ch.potential_error, tol.clifford),
        Check::at_most("hopfModulus", ch.hopf_modulus_error, tol.clifford),
        Check::at_most("hopf", ch.hopf_error, tol.clifford)
            .soft("the generating spinor gives A = -1/4; the +1/4 value follows from a closed-form spinor that violates Z3 = psi1 conj(psi2)"),
        Check::at_most("diracResidual", ch.dirac_residual, tol.gauge),
        Check::at_most("constraint", ch.constraint_defect, tol.clifford),
        Check::at_most("gauge", max_of([gauge.psi, gauge.psi_star, gauge.l_z, gauge.l_zbar]), tol.gauge),
        Check::at_most("projectedWillmore", (w - w0).abs(), tol.willmore),
        Check::at_most("projectedWillmoreDirac", (w_dirac - w0).abs(), tol.willmore),
    ];
    let results = json!({
        "cliffordChecks": ch,
        "gaugeResiduals": gauge,
        "projection": {
            "conformalityDefect": cd / mean,
            "willmore": w,
            "willmoreFromDirac": w_dirac,
        },
    });
    Ok(Outcome::new(checks, results).file(cfg.output.obj, "clifford.obj", proj.to_obj()))
}

fn round_trip_error(f: &ImmersionR3) -> Result<(f64, f64)> {
    let psi = spinor_from_surface(f)?;
    let g = surface_from_spinor(&psi, f.position(0, 0))?;
    let (p, q) = (f.positions(), g.positions());
    let shift = p[0] - q[0];
    let err = max_of(p.iter().zip(&q).map(|(a, b)| (a - b - shift).norm()));
    Ok((err, g.periods()[0].norm().max(g.periods()[1].norm())))
}

fn run_revolve(cfg: &ExperimentConfig) -> Result<Outcome> {
    let SurfaceSpec::Revolution { .. } = cfg.surface else {
        return Err(config_err("revolve needs surface.kind = revolution"));
    };
    let tol = &cfg.tolerances;
    let (f, tor) = build_surface(cfg)?;
    let tor = tor.expect("revolution");
    let rep = surface_report(&f)?;
    let (rt, periods) = round_trip_error(&f)?;
    let checks = vec![
        Check::at_most("closureDefect", max_of(rep.closure_defect), tol.closure),
        Check::at_most("roundTrip", rt, tol.round_trip),
        Check::at_most("roundTripPeriods", periods, tol.closure),
        Check::at_most("willmoreClosedForm", (rep.willmore - tor.willmore()).abs(), tol.willmore),
        Check::at_most("isothermic", rep.isothermic_defect, tol.isothermic),
    ];
    let results = json!({
        "surface": rep,
        "closedForm": { "willmore": tor.willmore(), "period": tor.period(), "dualPotential": tor.dual_potential() },
        "roundTrip": { "maxVertexError": rt, "periodDefect": periods },
    });
    Ok(Outcome::new(checks, results)
        .file(cfg.output.obj, "surface.obj", f.to_obj())
        .file(true, "surface.json", serde_json::to_string_pretty(&rep)?))
}

fn run_potential(cfg: &ExperimentConfig) -> Result<Outcome> {
    let u = build_potential(cfg)?;
    let w = 4.0 * u.abs2().integrate()?.re;
    let results = json!({
        "lattice": { "gamma1": u.lattice().gamma1, "gamma2": u.lattice().gamma2 },
        "n1": u.grid().n1,
        "n2": u.grid().n2,
        "mean": u.mean().re,
        "maxAbs": u.max_abs(),
        "imaginaryPart": u.max_abs_im(),
        "willmoreFromPotential": w,
    });
    let checks = vec![Check::at_most("imaginaryPart", u.max_abs_im(), 1e-12)];
    Ok(Outcome::new(checks, results)
        .file(true, "potential.json", serde_json::to_string_pretty(&u.to_json())?)
        .file(cfg.output.csv, "potential.csv", u.to_csv()))
}

fn run_spectrum1d(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let s1 = &cfg.spectrum1d;
    let (p, ydep) = build_potential_1d(cfg)?;
    let m = Monodromy1D::new(p);
    let n = s1.table;
    let lambdas: Vec<C64> = (0..n)
        .flat_map(|i| {
            (0..n).map(move |j| {
                let a = i as f64 / (n - 1) as f64;
                let b = j as f64 / (n - 1) as f64;
                c(s1.re[0] + a * (s1.re[1] - s1.re[0]), s1.im[0] + b * (s1.im[1] - s1.im[0]))
            })
        })
        .collect();
    let rows = trace_table(&m, &lambdas)?;
    let det = {
        use rayon::prelude::*;
        let d: Result<Vec<f64>> = lambdas.par_iter().map(|l| Ok((m.monodromy(*l)?.determinant() - 1.0).norm())).collect();
        max_of(d?)
    };
    let curve = branch_points(&m, s1.rect(), RootSearch { budget: s1.budget, ..RootSearch::default() })?;
    let mut checks = vec![Check::at_most("determinant", det, tol.determinant)];
    if !curve.complete {
        checks.push(Check::at_most("searchComplete", 1.0, 0.0).soft("root search stopped early; enlarge spectrum1d.budget"));
    }
    if ydep > 1e-8 {
        checks.push(Check::at_most("yDependence", ydep, 1e-8).soft("U depends on y; the 1D spectrum uses the first row only"));
    }
    let results = json!({
        "period": m.period(),
        "spectralCurve": curve,
        "maxDeterminantDefect": det,
        "yDependence": ydep,
    });
    Ok(Outcome::new(checks, results).file(cfg.output.csv, "spectrum1d.csv", trace_csv(&rows)))
}

fn build_slice(s: &ScanSpec) -> Slice {
    let t = |r: [f64; 2]| (r[0], r[1]);
    match &s.slice {
        SliceSpec::LambdaPlane { re, im } => Slice::lambda_plane(t(*re), t(*im), s.points),
        SliceSpec::RealPlane { u, v } => Slice::real_plane(t(*u), t(*v), s.points),
        SliceSpec::Linear { base, d1, d2, u, v } => Slice::linear(qp(base), qp(d1), qp(d2), t(*u), t(*v), s.points),
    }
}

fn run_spectrum2d(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let s = &cfg.scan;
    let u = build_potential(cfg)?;
    let p = TruncatedPencil::new(&u, s.cutoff)?;
    let slice = build_slice(s);
    let opts = ScanOptions { rel_threshold: s.rel_threshold, which: s.which, ..ScanOptions::default() };
    let scan = spectrum_scan(&p, &slice, &opts)?;
    let lat = *u.lattice();
    let sym = json!({
        "negation": crate::floquet2d::symmetry_residual(&scan, &slice, |k| k.neg()),
        "negConj": crate::floquet2d::symmetry_residual(&scan, &slice, |k| k.neg_conj()),
        "note": "meaningful when the slice is mapped into itself",
    });
    let mut checks = Vec::new();
    for w in &p.warnings {
        checks.push(Check::at_most("cutoff", 1.0, 0.0).soft(w));
    }
    if u.max_abs() == 0.0 {
        let d = max_of(scan.flagged.iter().map(|f| free_plane_distance(&lat, &f.sample.k, s.cutoff as i64 + 2)));
        checks.push(Check::at_most("freePlaneDistance", d, tol.plane_distance));
    }
    let fit = if s.fit_c1 { Some(extract_c1(&p, &FitOptions::default())?) } else { None };
    if let Some(e) = &fit {
        let d = (e.willmore_from_c1 - e.willmore_direct).abs() / e.willmore_direct.max(1.0);
        let ch = Check::at_most("c1Willmore", d, tol.c1_willmore);
        checks.push(if e.reliable { ch } else { ch.soft("asymptotic fit flagged unreliable") });
    }
    let results = json!({
        "cutoff": s.cutoff,
        "threshold": scan.threshold,
        "median": scan.median,
        "flaggedZeros": scan.flagged,
        "symmetryResiduals": sym,
        "C1": fit.as_ref().map(|e| e.c1),
        "willmoreFromC1": fit.as_ref().map(|e| e.willmore_from_c1),
        "willmoreDirect": p.willmore_direct(),
        "fitResidual": fit.as_ref().map(|e| e.fit_residual),
    });
    Ok(Outcome::new(checks, results).file(cfg.output.csv, "spectrum2d.csv", samples_csv(&scan.samples)))
}

fn run_willmore(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let (f, tor) = build_surface(cfg)?;
    let sd = fundamental_forms(&f, tol.conformal)?;
    let psi = spinor_from_surface(&f)?;
    let direct = willmore_direct(&sd)?;
    let from_u = psi.willmore()?;
    let from_dirac = psi.willmore_from_dirac()?;
    let expected = match (&cfg.surface, &tor) {
        (SurfaceSpec::Clifford {}, _) => Some(2.0 * std::f64::consts::PI.powi(2)),
        (_, Some(t)) => Some(t.willmore()),
        (SurfaceSpec::Plane {}, _) => Some(0.0),
        _ => None,
    };
    let mut checks = vec![
        Check::at_most("routesAgree", (direct - from_dirac).abs(), tol.willmore * (1.0 + direct)),
        Check::at_most("potentialRoute", (direct - from_u).abs(), tol.willmore * (1.0 + direct)),
    ];
    if let Some(w) = expected {
        checks.push(Check::at_most("expected", (direct - w).abs(), tol.willmore));
        checks.push(Check::at_most("expectedDirac", (from_dirac - w).abs(), tol.willmore));
    }
    let results = json!({
        "willmoreMeanCurvature": direct,
        "willmorePotential": from_u,
        "willmoreDirac": from_dirac,
        "expected": expected,
    });
    Ok(Outcome::new(checks, results))
}

fn run_kruskal(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let (f, _) = build_surface(cfg)?;
    let rep = crate::floquet1d::theorem8_check(&f, 3)?;
    let w = willmore_direct(&fundamental_forms(&f, tol.conformal)?)?;
    let mut checks: Vec<Check> =
        rep.rel_differences.iter().enumerate().map(|(l, d)| Check::at_most(&format!("K{}", l + 1), *d, tol.kruskal_rel)).collect();
    checks.push(Check::at_most("K1Willmore", (rep.k_u[0] - w).norm(), tol.willmore));
    if rep.y_dependence > 1e-8 {
        checks.push(Check::at_most("yDependence", rep.y_dependence, 1e-8).soft("potentials depend on y; the invariants use one row"));
    }
    let results = json!({ "invariants": rep, "willmore": w });
    Ok(Outcome::new(checks, results))
}

fn run_dual(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let (f, _) = build_surface(cfg)?;
    let sd = fundamental_forms(&f, tol.conformal)?;
    let d = dual_isothermic(&f, tol.isothermic)?;
    let sdd = fundamental_forms(&d, tol.conformal)?;
    let antipodal = max_of((0..3).map(|i| sdd.normal[i].add(&sd.normal[i]).max_abs()));
    let metric = max_of(sd.exp_alpha.values().iter().zip(sdd.exp_alpha.values()).map(|(a, b)| (a.re * b.re - 1.0).abs()));
    let ustar = sd.dual_potential();
    let checks = vec![
        Check::at_most("antipodalNormal", antipodal, tol.isothermic),
        Check::at_most("inverseMetric", metric, tol.isothermic),
        Check::at_most("dualPotential", sdd.potential().max_diff(&ustar), tol.isothermic),
    ];
    let results = json!({
        "dualPeriods": d.periods().iter().map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>(),
        "dualPotentialRange": [ustar.real_values().iter().cloned().fold(f64::INFINITY, f64::min), ustar.real_values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)],
        "isothermicDefect": sd.isothermic_defect(),
        "willmoreDual": willmore_direct(&sdd)?,
    });
    Ok(Outcome::new(checks, results).file(cfg.output.obj, "dual.obj", d.to_obj()))
}

fn run_cmc_curve(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let l = &cfg.lax;
    let u = SinhGordonField::periodic(l.amplitude, l.samples)?;
    let (geom, zcc) = (LaxConnection::cmc_geom(&u), LaxConnection::cmc_zcc(&u));
    let mut samples = Vec::new();
    let (mut zc, mut inv, mut prop) = (0.0f64, 0.0f64, 0.0f64);
    for &lam in &l.lambdas {
        let m = cmc_monodromy(&u, lam)?;
        let rg = zero_curvature_residual(&geom, lam)?;
        let rz = zero_curvature_residual(&zcc, lam)?;
        let iv = sigma_involution(&zcc, lam)?;
        let mut pr = None;
        if let Ok(profiles) = floquet_profiles(&zcc, lam, l.samples) {
            let mut worst = 0.0f64;
            for phi in &profiles {
                worst = worst.max(cmc_prop_map(phi, &u, lam)?.target_residual.unwrap_or(f64::INFINITY));
            }
            prop = prop.max(worst);
            pr = Some(worst);
        }
        zc = zc.max(rg).max(rz);
        inv = inv.max(iv.set_distance);
        samples.push(json!({
            "lambda": lam,
            "eigenvalues": m.eigenvalues,
            "residuals": { "zeroCurvatureGeom": rg, "zeroCurvatureZcc": rz, "propMap": pr, "detDefect": (m.det - m.liouville).norm() },
        }));
    }
    let checks = vec![
        Check::at_most("sinhGordon", u.residual, tol.zero_curvature),
        Check::at_most("zeroCurvature", zc, tol.zero_curvature),
        Check::at_most("propMap", prop, tol.extraction),
        Check::at_most("involution", inv, tol.involution),
    ];
    let results = json!({
        "period": u.period,
        "lambdaSamples": samples,
        "involutionResidual": inv,
        "codazziResidual": u.residual,
    });
    Ok(Outcome::new(checks, results))
}

fn run_isothermic_pencil(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let l = &cfg.lax;
    let data = match &cfg.surface {
        SurfaceSpec::Revolution { big_r, r } => IsothermicData::revolution(&RevolutionTorus::new(*big_r, *r)?, l.samples)?,
        _ => {
            let (f, _) = build_surface(cfg)?;
            IsothermicData::from_surface(&fundamental_forms(&f, tol.conformal)?, tol.isothermic)?
        }
    };
    let conn = LaxConnection::isothermic(&data)?;
    let extraction = extraction_residual_curve(&data, &l.lambdas, data.len())?;
    let mut samples = Vec::new();
    let (mut zc, mut inv) = (0.0f64, 0.0f64);
    for (&lam, (_, ex)) in l.lambdas.iter().zip(&extraction) {
        let m = monodromy(&conn, lam)?;
        let r = zero_curvature_residual(&conn, lam)?;
        let iv = sigma_involution(&conn, lam)?;
        zc = zc.max(r);
        inv = inv.max(iv.set_distance);
        samples.push(json!({
            "lambda": lam,
            "eigenvalues": m.eigenvalues,
            "residuals": { "zeroCurvature": r, "extraction": ex, "detDefect": (m.det - m.liouville).norm() },
        }));
    }
    let (c1, c2) = data.codazzi_residuals();
    let checks = vec![
        Check::at_most("codazzi", c1.max(c2), tol.isothermic),
        Check::at_most("zeroCurvature", zc, tol.zero_curvature),
        Check::at_most("extraction", max_of(extraction.iter().map(|x| x.1)), tol.extraction),
        Check::at_most("involution", inv, tol.involution),
    ];
    let results = json!({
        "lambdaSamples": samples,
        "involutionResidual": inv,
        "codazziResidual": c1.max(c2),
    });
    Ok(Outcome::new(checks, results))
}

fn run_s3_spectrum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let s3 = &cfg.s3;
    let n = cfg.grid.n1;
    let (s, ch) = clifford_checks(n)?;
    let gauge = gauge_identities(&s)?;
    let fam = HitchinFamily::new(&s)?;
    let mut hitchin = Vec::new();
    let mut gauge_reports = Vec::new();
    let (mut flat, mut res, mut det) = (0.0f64, 0.0f64, 0.0f64);
    for &l in &s3.lambdas {
        for pl in [Placement::Family, Placement::Eigenfunction] {
            let fr = fam.flatness_residual(l, pl)?;
            flat = flat.max(fr);
            let ms = [fam.monodromy(l, pl, 0)?, fam.monodromy(l, pl, 1)?];
            det = det.max(ms[0].det_defect).max(ms[1].det_defect);
            hitchin.push(json!({ "lambda": l, "placement": pl, "flatness": fr, "monodromy": ms }));
        }
        for which in [0, 1] {
            let t = theorem10_gauge(&s, &fam, l, s3.placement, which)?;
            res = res.max(t.residual);
            gauge_reports.push(t);
        }
    }
    let f = SU2Immersion::clifford(n, n)?;
    let cmp = s3_r3_comparison(&f, &s, cfg.scan.cutoff, &s3.comparison_lambdas)?;
    let cross = clifford_floquet2d_check(s.potential(), cfg.scan.cutoff.min(6), s3.cross_check_lambda, 1.0, 21)?;
    let mut checks = vec![
        Check::at_most("gauge", max_of([gauge.psi, gauge.psi_star, gauge.l_z, gauge.l_zbar]), tol.gauge),
        Check::at_most("flatness", flat, tol.flatness),
        Check::at_most("monodromyDeterminant", det, tol.determinant),
        Check::at_most("crossCheckLambda", cross.lambda0_error / cross.cell, 1.0),
    ];
    let tr = Check::at_most("gaugedDirac", res, tol.gauge);
    checks.push(if s3.placement == Placement::Eigenfunction { tr } else { tr.soft("only the eigenfunction placement carries Dirac solutions") });
    let results = json!({
        "cliffordChecks": ch,
        "gaugeResiduals": gauge,
        "hitchin": hitchin,
        "gauge": gauge_reports,
        "theorem11Defect": Value::Null,
        "spectraComparison": cmp,
        "floquet2dCrossCheck": cross,
    });
    Ok(Outcome::new(checks, results))
}

fn run_moebius(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let ms = &cfg.moebius;
    let (f, _) = build_surface(cfg)?;
    let map = MoebiusMap::new(ms.ops.clone())?;
    let img = apply_moebius(&map, &f)?;
    let opts = Theorem11Options {
        spectra: ms.spectra,
        region: Rect::new(ms.re[0], ms.re[1], ms.im[0], ms.im[1]),
        ..Theorem11Options::default()
    };
    let rep = theorem11_check(&f, &map, &opts)?;
    let mut checks = vec![
        Check::at_most("potential", rep.defect, tol.theorem11),
        Check::at_most("conformality", rep.conformality_defect, tol.conformal),
        Check::at_most("willmore", (rep.willmore_after - rep.willmore_before).abs(), tol.willmore * (1.0 + rep.willmore_before)),
    ];
    if let Some(sp) = &rep.spectra {
        let dist = if sp.complete { sp.branch_distance } else { f64::INFINITY };
        checks.push(Check::at_most("branchPoints", dist, tol.branch_points));
        checks.push(Check::at_most("invariants", sp.k_rel_defect, tol.invariants_rel));
    }
    let results = json!({
        "theorem11Defect": rep.defect,
        "report": rep,
        "minCenterDistance": img.min_center_distance,
        "spectraComparison": rep.spectra,
    });
    Ok(Outcome::new(checks, results).file(cfg.output.obj, "moebius.obj", img.immersion.to_obj()))
}

/// Bounds applied by `verify`, one per measurement.
pub const CRITERION_BOUNDS: &[(usize, &str, Comparison, f64)] = &[
    (1, "expAlphaError", Comparison::AtMost, 1e-10),
    (1, "potentialError", Comparison::AtMost, 1e-10),
    (1, "hopfError", Comparison::AtMost, 1e-10),
    (1, "hopfModulusError", Comparison::AtMost, 1e-10),
    (2, "meanCurvatureRouteError", Comparison::AtMost, 1e-6),
    (2, "potentialRouteError", Comparison::AtMost, 1e-6),
    (2, "routeDifference", Comparison::AtMost, 1e-6),
    (3, "planeFlagged", Comparison::AtLeast, 1.0),
    (3, "planeMissedCells", Comparison::AtMost, 1.0),
    (3, "planeSpuriousCells", Comparison::AtMost, 1.0),
    (3, "planeSheetDistance", Comparison::AtMost, 1e-10),
    (3, "squareResonanceMissedCells", Comparison::AtMost, 1.0),
    (3, "squareResonanceSpuriousCells", Comparison::AtMost, 1.0),
    (3, "partnerError", Comparison::AtMost, 1e-12),
    (3, "hexResonanceMissedCells", Comparison::AtMost, 1.0),
    (3, "hexResonanceSpuriousCells", Comparison::AtMost, 1.0),
    (4, "branchDeviation", Comparison::AtMost, 1e-8),
    (4, "c1Error", Comparison::AtMost, 1e-4),
    (4, "willmoreDifference", Comparison::AtMost, 1e-4),
    (5, "detDefect", Comparison::AtMost, 1e-10),
    (5, "zeroTraceError", Comparison::AtMost, 1e-10),
    (5, "constantTraceError", Comparison::AtMost, 1e-9),
    (6, "k1RelDifference", Comparison::AtMost, 1e-6),
    (6, "k2RelDifference", Comparison::AtMost, 1e-6),
    (6, "k3RelDifference", Comparison::AtMost, 1e-6),
    (6, "k1WillmoreDifference", Comparison::AtMost, 1e-6),
    (7, "vertexError", Comparison::AtMost, 1e-6),
    (7, "closureDefect", Comparison::AtMost, 1e-8),
    (7, "periodDefect", Comparison::AtMost, 1e-8),
    (8, "flagged", Comparison::AtLeast, 4.0),
    (8, "negationCells", Comparison::AtMost, 1.0),
    (8, "negConjCells", Comparison::AtMost, 1.0),
    (8, "dualTranslationDefect", Comparison::AtMost, 1e-10),
    (9, "zeroCurvatureResidual", Comparison::AtMost, 1e-8),
    (9, "zeroCurvatureSpread", Comparison::AtMost, 1e-9),
    (9, "cmcMapResidual", Comparison::AtMost, 1e-7),
    (9, "isothermicExtractionResidual", Comparison::AtMost, 1e-7),
    (9, "involutionSetDistance", Comparison::AtMost, 1e-9),
    (10, "gaugeIdentityResidual", Comparison::AtMost, 1e-8),
    (10, "diracResidual", Comparison::AtMost, 1e-8),
    (10, "unsignedResidualMin", Comparison::AtLeast, 1e-2),
    (10, "signMismatches", Comparison::AtMost, 0.0),
    (11, "potentialDefect", Comparison::AtMost, 1e-6),
    (11, "branchPoints", Comparison::AtLeast, 1.0),
    (11, "branchDistance", Comparison::AtMost, 1e-5),
    (11, "kruskalRelDefect", Comparison::AtMost, 1e-5),
    (12, "multiplierLawError", Comparison::AtMost, 1e-12),
    (12, "flagged", Comparison::AtLeast, 3.0),
    (12, "countDifference", Comparison::AtMost, 0.0),
    (12, "basisPointDistance", Comparison::AtMost, 1e-8),
    (12, "basisMultiplierError", Comparison::AtMost, 1e-7),
];

/// Measurements that fail for a reason analysed in the README.
pub const KNOWN_DEVIATIONS: &[(usize, &str, &str)] = &[(
    1,
    "hopfError",
    "the generating spinor fixes A = -1/4 (|A| = 1/4 holds); +1/4 comes from a closed-form spinor inconsistent with Z3 = psi1 conj(psi2)",
)];

pub fn criterion_checks(d: &CriterionData) -> Vec<Check> {
    let mut out = Vec::new();
    for m in &d.measurements {
        let name = format!("c{}.{}", d.id, m.name);
        let Some(&(_, _, cmp, bound)) = CRITERION_BOUNDS.iter().find(|b| b.0 == d.id && b.1 == m.name) else {
            continue;
        };
        let ch = Check::new(&name, m.value, cmp, bound);
        out.push(match KNOWN_DEVIATIONS.iter().find(|k| k.0 == d.id && k.1 == m.name) {
            Some(k) if !ch.passed => ch.soft(k.2),
            _ => ch,
        });
    }
    out
}

fn run_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut criteria = Vec::new();
    let mut seconds = Vec::new();
    for &id in &cfg.verify.criteria {
        let d = verify::run(id)?;
        checks.extend(criterion_checks(&d));
        seconds.push(json!({ "id": id, "seconds": d.seconds }));
        criteria.push(json!({ "id": d.id, "title": d.title, "measurements": d.measurements }));
    }
    let failures: Vec<&str> = checks.iter().filter(|c| c.hard && !c.passed).map(|c| c.name.as_str()).collect();
    let known: Vec<&str> = checks.iter().filter(|c| !c.hard && !c.passed).map(|c| c.name.as_str()).collect();
    let results = json!({ "criteria": criteria, "failures": failures, "knownDeviations": known });
    let mut o = Outcome::new(checks, results);
    o.timing = json!({ "criteria": seconds });
    Ok(o)
}

/// Writes the report and files into `dir`, in order.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), out.report.to_json())?;
    for (name, contents) in &out.files {
        fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Invalid(_) | Error::Precondition(_) | Error::Json(_) | Error::Io(_) => 1,
        Error::Numerical(_) | Error::NonFinite(_) | Error::Character(_) => 2,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Invalid(_) => "invalid",
        Error::Precondition(_) => "precondition",
        Error::Json(_) => "json",
        Error::Io(_) => "io",
        Error::Numerical(_) => "numerical",
        Error::NonFinite(_) => "nonFinite",
        Error::Character(_) => "character",
    }
}

pub fn error_json(e: &Error) -> String {
    json!({ "error": { "kind": error_kind(e), "exitCode": exit_code(e), "message": e.to_string() } }).to_string()
}

/// Applies `SPECTRAL_TORI_THREADS` to the global rayon pool.
pub fn configure_threads(var: Option<&str>) -> Result<()> {
    let Some(v) = var else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| config_err(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(config_err(format!("{THREADS_ENV} must be at least 1")));
    }
    // a pool built earlier in the process wins; that only happens in tests
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "spectral-tori", version, about = "Spectral curves of Dirac operators on tori in R^3 and S^3")]
pub struct Args {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUBCOMMANDS))]
    pub subcommand: String,
    /// JSON experiment config; builtin defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted config override, e.g. scan.cutoff=8; repeatable, applied in order.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn fail(e: &Error, dir: Option<&Path>) -> i32 {
    let j = error_json(e);
    eprintln!("{j}");
    if let Some(d) = dir {
        if fs::create_dir_all(d).is_ok() {
            let _ = fs::write(d.join("error.json"), &j);
        }
    }
    exit_code(e)
}

/// Entry point shared by the binary and the CLI tests; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads(std::env::var(THREADS_ENV).ok().as_deref()) {
        return fail(&e, args.out.as_deref());
    }
    let mut cfg = match ExperimentConfig::load(args.config.as_deref(), &args.overrides) {
        Ok(c) => c,
        Err(e) => return fail(&e, args.out.as_deref()),
    };
    if let Some(o) = &args.out {
        cfg.output.dir = o.to_string_lossy().into_owned();
    }
    let dir = PathBuf::from(&cfg.output.dir);
    let t = Instant::now();
    let out = match run_subcommand(&args.subcommand, &cfg) {
        Ok(o) => o,
        Err(e) => return fail(&e, Some(&dir)),
    };
    if let Err(e) = write_outputs(&dir, &out) {
        return fail(&e, None);
    }
    let timing = json!({
        "subcommand": args.subcommand,
        "seconds": t.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "stages": out.timing,
    });
    if let Err(e) = fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing).expect("json")) {
        return fail(&Error::Io(e), None);
    }
    let failed = out.report.hard_failures();
    for ch in &out.report.checks {
        let status = if ch.passed {
            "ok"
        } else if ch.hard {
            "FAIL"
        } else {
            "note"
        };
        let v = ch.value.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "non-finite".into());
        println!("{status:>4}  {:<32} {v} (bound {:.1e})", ch.name, ch.bound);
    }
    println!("{}: {} checks, {} failed; report in {}", args.subcommand, out.report.checks.len(), failed.len(), dir.join("report.json").display());
    if failed.is_empty() {
        0
    } else {
        3
    }
}
