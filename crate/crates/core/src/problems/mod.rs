//! Seeded generators for the test-problem families: the 1-D toy map, the
//! nonlinearly perturbed restricted-isometry maps, quadratic phase-retrieval
//! measurements, decaying sparse vectors, and impulsive Bernoulli-Gaussian
//! noise.
//!
//! All randomness goes through `ChaCha8` streams derived from a 64-bit seed,
//! so instances are reproducible bit for bit.

pub mod io;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ResidualMap;
use crate::util::derive_seed;

/// Name recorded in instance metadata for the generator in use.
pub const RNG_NAME: &str = "chacha8";

// ---------------------------------------------------------------------------
// Concrete maps
// ---------------------------------------------------------------------------

/// The scalar toy map `x -> (x, x^2)`.
#[derive(Debug, Clone, Copy)]
pub struct Simple1d;

pub fn make_simple_1d() -> Simple1d {
    Simple1d
}

impl ResidualMap for Simple1d {
    fn dim_in(&self) -> usize {
        1
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let v = x[0];
        DVector::from_vec(vec![v, v * v])
    }
    fn has_jacobian(&self) -> bool {
        true
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_column_slice(2, 1, &[1.0, 2.0 * x[0]]))
    }
}

/// The identity on `R^n`; handy in tests.
#[derive(Debug, Clone)]
pub struct IdentityMap {
    dim: usize,
}

impl IdentityMap {
    pub fn new(dim: usize) -> Self {
        IdentityMap { dim }
    }
}

impl ResidualMap for IdentityMap {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn has_jacobian(&self) -> bool {
        true
    }
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim, self.dim))
    }
}

/// A plain linear map `x -> M x`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidDims("linear map must be nonempty".into()));
        }
        Ok(LinearMap { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ResidualMap for LinearMap {
    fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }
    fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
    fn has_jacobian(&self) -> bool {
        true
    }
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
}

/// Lipschitz perturbation of a Gaussian sensing matrix:
/// `A(z) = A1 z + rho * ||z - z_ref||^2 * A2 z`, where `A2` is the all-ones
/// matrix. The perturbation vanishes at `z_ref`, and `rho = 0` reduces to
/// the linear map `A1`.
#[derive(Debug, Clone)]
pub struct PerturbedRip {
    a1: DMatrix<f64>,
    rho: f64,
    z_ref: DVector<f64>,
}

/// Draw the sensing matrix (i.i.d. Gaussian entries scaled by `1/sqrt(m)`)
/// and assemble the perturbed map.
pub fn make_perturbed_rip(
    n: usize,
    m: usize,
    rho: f64,
    z_ref: DVector<f64>,
    rng_seed: u64,
) -> Result<PerturbedRip> {
    if m == 0 || n == 0 || m > n {
        return Err(Error::InvalidDims(format!(
            "perturbed sensing map needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    if z_ref.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z_ref.len(),
        });
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidConfig("rho must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let scale = 1.0 / (m as f64).sqrt();
    let a1 = DMatrix::from_fn(m, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    Ok(PerturbedRip { a1, rho, z_ref })
}

impl PerturbedRip {
    pub fn from_parts(a1: DMatrix<f64>, rho: f64, z_ref: DVector<f64>) -> Result<Self> {
        if z_ref.len() != a1.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a1.ncols(),
                got: z_ref.len(),
            });
        }
        Ok(PerturbedRip { a1, rho, z_ref })
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn z_ref(&self) -> &DVector<f64> {
        &self.z_ref
    }
}

impl ResidualMap for PerturbedRip {
    fn dim_in(&self) -> usize {
        self.a1.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a1.nrows()
    }
    fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a1 * z;
        if self.rho > 0.0 {
            let dist2 = (z - &self.z_ref).norm_squared();
            // A2 z = (sum_j z_j) * ones(m)
            let s: f64 = z.iter().sum();
            out.add_scalar_mut(self.rho * dist2 * s);
        }
        out
    }
    fn has_jacobian(&self) -> bool {
        true
    }
    fn jacobian(&self, z: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = self.a1.clone();
        if self.rho > 0.0 {
            let diff = z - &self.z_ref;
            let dist2 = diff.norm_squared();
            let s: f64 = z.iter().sum();
            for i in 0..jac.nrows() {
                for j in 0..jac.ncols() {
                    jac[(i, j)] += self.rho * (dist2 + 2.0 * s * diff[j]);
                }
            }
        }
        Some(jac)
    }
}

/// Quadratic phase-retrieval measurements `A_i(x) = <a_i, x>^2` with
/// standard Gaussian vectors `a_i`. Sign-blind: `A(-x) = A(x)`.
#[derive(Debug, Clone)]
pub struct PhaseRetrieval {
    /// Rows are the measurement vectors, `m x n`.
    vectors: DMatrix<f64>,
}

pub fn make_phase_retrieval(n: usize, m: usize, rng_seed: u64) -> PhaseRetrieval {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let vectors = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    PhaseRetrieval { vectors }
}

impl PhaseRetrieval {
    pub fn from_vectors(vectors: DMatrix<f64>) -> Self {
        PhaseRetrieval { vectors }
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    #[cfg(test)]
    pub(crate) fn set_vector_for_tests(&mut self, row: usize, v: DVector<f64>) {
        self.vectors.row_mut(row).copy_from(&v.transpose());
    }
}

impl ResidualMap for PhaseRetrieval {
    fn dim_in(&self) -> usize {
        self.vectors.ncols()
    }
    fn dim_out(&self) -> usize {
        self.vectors.nrows()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let inner = &self.vectors * x;
        inner.map(|v| v * v)
    }
    fn has_jacobian(&self) -> bool {
        true
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let inner = &self.vectors * x;
        let mut jac = self.vectors.clone();
        for (i, v) in inner.iter().enumerate() {
            jac.row_mut(i).scale_mut(2.0 * v);
        }
        Some(jac)
    }
}

// ---------------------------------------------------------------------------
// Support restriction
// ---------------------------------------------------------------------------

/// Zero-pad `x` (indexed by `support`) to a full-dimension vector.
pub fn zero_pad(x: &DVector<f64>, support: &[usize], n: usize) -> DVector<f64> {
    let mut z = DVector::zeros(n);
    for (xi, &idx) in x.iter().zip(support.iter()) {
        z[idx] = *xi;
    }
    z
}

/// A map on `R^k` obtained by zero-padding the argument of a parent map onto
/// a fixed support.
#[derive(Clone)]
pub struct SupportRestriction {
    parent: Arc<dyn ResidualMap>,
    support: Vec<usize>,
}

/// Restrict `parent` to the coordinates in `support` (distinct, in range).
pub fn restrict_to_support(
    parent: Arc<dyn ResidualMap>,
    support: &[usize],
) -> Result<SupportRestriction> {
    let n = parent.dim_in();
    let mut seen = vec![false; n];
    for &idx in support {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, dim: n });
        }
        if seen[idx] {
            return Err(Error::InvalidConfig(format!(
                "duplicate support index {idx}"
            )));
        }
        seen[idx] = true;
    }
    if support.is_empty() {
        return Err(Error::InvalidConfig("support must be nonempty".into()));
    }
    Ok(SupportRestriction {
        parent,
        support: support.to_vec(),
    })
}

impl SupportRestriction {
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn pad(&self, x: &DVector<f64>) -> DVector<f64> {
        zero_pad(x, &self.support, self.parent.dim_in())
    }
}

impl ResidualMap for SupportRestriction {
    fn dim_in(&self) -> usize {
        self.support.len()
    }
    fn dim_out(&self) -> usize {
        self.parent.dim_out()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.parent.eval(&self.pad(x))
    }
    fn has_jacobian(&self) -> bool {
        self.parent.has_jacobian()
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let full = self.parent.jacobian(&self.pad(x))?;
        Some(full.select_columns(self.support.iter()))
    }
}

// ---------------------------------------------------------------------------
// Sparse vectors and noise
// ---------------------------------------------------------------------------

/// Sparse target with geometrically decaying magnitudes.
#[derive(Debug, Clone, Copy)]
pub struct DecaySparseSpec {
    pub n: usize,
    pub k: usize,
    /// Decay rate of the sorted magnitudes, in `(0, 1]`.
    pub kappa: f64,
    /// Target l2 norm.
    pub norm: f64,
}

/// Draw a `k`-sparse vector in `R^n` whose sorted magnitudes decay by the
/// factor `kappa` per position, rescaled to the requested norm. Returns the
/// vector and its (sorted) support.
pub fn make_sparse_vector(spec: &DecaySparseSpec, rng_seed: u64) -> Result<(DVector<f64>, Vec<usize>)> {
    if spec.k == 0 || spec.k > spec.n {
        return Err(Error::InvalidDims(format!(
            "sparsity must satisfy 1 <= k <= n, got k = {}, n = {}",
            spec.k, spec.n
        )));
    }
    if !(spec.kappa > 0.0 && spec.kappa <= 1.0) {
        return Err(Error::InvalidConfig("kappa must lie in (0, 1]".into()));
    }
    if !(spec.norm > 0.0 && spec.norm.is_finite()) {
        return Err(Error::InvalidConfig("target norm must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let positions = rand::seq::index::sample(&mut rng, spec.n, spec.k).into_vec();
    let signs: Vec<f64> = (0..spec.k)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();

    // Norm of the unit-leading geometric profile, then build the final
    // magnitudes by the same multiplication chain so the decay ratio holds
    // exactly in floating point.
    let mut g = 1.0;
    let mut sum_sq = 0.0;
    for _ in 0..spec.k {
        sum_sq += g * g;
        g *= spec.kappa;
    }
    let lead = spec.norm / sum_sq.sqrt();

    let mut x = DVector::zeros(spec.n);
    let mut magnitude = lead;
    for (j, &pos) in positions.iter().enumerate() {
        x[pos] = signs[j] * magnitude;
        magnitude *= spec.kappa;
    }
    let mut support = positions;
    support.sort_unstable();
    Ok((x, support))
}

/// Impulsive noise model: Bernoulli occurrences with Gaussian amplitudes.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// Occurrence probability of an impulse per entry.
    pub alpha_p: f64,
    pub amplitude_std: f64,
    /// Rescale the whole noise vector to the l2 norm of the measurements
    /// before adding it.
    pub scale_to_measurement_norm: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            alpha_p: 0.0,
            amplitude_std: 1.0,
            scale_to_measurement_norm: true,
        }
    }
}

/// Add Bernoulli-Gaussian noise to the measurements. `alpha_p = 0` returns
/// `y` unchanged.
pub fn add_bernoulli_gaussian_noise(
    y: &DVector<f64>,
    spec: &NoiseSpec,
    rng_seed: u64,
) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&spec.alpha_p) {
        return Err(Error::InvalidConfig("alpha_p must lie in [0, 1]".into()));
    }
    if !(spec.amplitude_std > 0.0) {
        return Err(Error::InvalidConfig("amplitude_std must be positive".into()));
    }
    if spec.alpha_p == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut noise = DVector::zeros(y.len());
    for i in 0..y.len() {
        let hit = rng.random_bool(spec.alpha_p);
        let amp: f64 = rng.sample::<f64, _>(StandardNormal) * spec.amplitude_std;
        if hit {
            noise[i] = amp;
        }
    }
    let noise_norm = noise.norm();
    if spec.scale_to_measurement_norm && noise_norm > 0.0 {
        noise *= y.norm() / noise_norm;
    }
    Ok(y + noise)
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

/// Problem family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Simple1d,
    PerturbedRip,
    PhaseRetrieval,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Simple1d => "simple_1d",
            Family::PerturbedRip => "perturbed_rip",
            Family::PhaseRetrieval => "phase_retrieval",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "simple_1d" => Some(Family::Simple1d),
            "perturbed_rip" => Some(Family::PerturbedRip),
            "phase_retrieval" => Some(Family::PhaseRetrieval),
            _ => None,
        }
    }
}

/// Concrete map payload of an instance; the enum keeps instances
/// serializable without losing the map parameters. A plain linear instance
/// is a perturbed sensing map with `rho = 0`.
#[derive(Clone)]
pub enum ProblemMap {
    Simple1d(Simple1d),
    PerturbedRip(PerturbedRip),
    PhaseRetrieval(PhaseRetrieval),
}

impl ResidualMap for ProblemMap {
    fn dim_in(&self) -> usize {
        self.as_dyn().dim_in()
    }
    fn dim_out(&self) -> usize {
        self.as_dyn().dim_out()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.as_dyn().eval(x)
    }
    fn has_jacobian(&self) -> bool {
        self.as_dyn().has_jacobian()
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.as_dyn().jacobian(x)
    }
}

impl ProblemMap {
    pub fn as_dyn(&self) -> &dyn ResidualMap {
        match self {
            ProblemMap::Simple1d(m) => m,
            ProblemMap::PerturbedRip(m) => m,
            ProblemMap::PhaseRetrieval(m) => m,
        }
    }

    /// Shareable handle for support restrictions.
    pub fn share(&self) -> Arc<dyn ResidualMap> {
        match self.clone() {
            ProblemMap::Simple1d(m) => Arc::new(m),
            ProblemMap::PerturbedRip(m) => Arc::new(m),
            ProblemMap::PhaseRetrieval(m) => Arc::new(m),
        }
    }
}

/// A generated test problem: the map, the data, the ground truth, and the
/// generation metadata.
#[derive(Clone)]
pub struct ProblemInstance {
    pub family: Family,
    pub map: ProblemMap,
    pub y: DVector<f64>,
    pub x_star: DVector<f64>,
    pub support: Option<Vec<usize>>,
    pub seed: u64,
    /// Key-value tags (family, p, rho, kappa, alpha_p, k, n, m, ...).
    pub meta: BTreeMap<String, String>,
}

impl ProblemInstance {
    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }

    pub fn is_noiseless(&self) -> bool {
        self.meta.get("noiseless").map(|v| v == "true").unwrap_or(true)
    }
}

/// Generation parameters for [`make_instance`].
#[derive(Debug, Clone)]
pub struct InstanceParams {
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub kappa: f64,
    pub norm: f64,
    pub rho: f64,
    /// Residual exponent the instance is meant for; recorded in the
    /// metadata and used for the toy family's reference minimizer.
    pub p: f64,
    /// Measurements of the toy family.
    pub y_simple: [f64; 2],
}

impl InstanceParams {
    pub fn simple_1d(y: [f64; 2], p: f64) -> Self {
        InstanceParams {
            family: Family::Simple1d,
            n: 1,
            m: 2,
            k: 1,
            kappa: 1.0,
            norm: 1.0,
            rho: 0.0,
            p,
            y_simple: y,
        }
    }

    pub fn perturbed_rip(n: usize, m: usize, k: usize, rho: f64, p: f64) -> Self {
        InstanceParams {
            family: Family::PerturbedRip,
            n,
            m,
            k,
            kappa: 1.0,
            // Desk-scale solution norm of the perturbed sensing experiments.
            norm: 0.015,
            rho,
            p,
            y_simple: [0.0, 0.0],
        }
    }

    pub fn phase_retrieval(n: usize, m: usize, k: usize, kappa: f64, p: f64) -> Self {
        InstanceParams {
            family: Family::PhaseRetrieval,
            n,
            m,
            k,
            kappa,
            norm: 1.0,
            rho: 0.0,
            p,
            y_simple: [0.0, 0.0],
        }
    }
}

/// Grid argmin of `sum_i |A_i(x) - y_i|^p` over `[0, 1]` at the given
/// resolution; the reference minimizer of the toy family.
pub fn simple_1d_grid_minimizer(y: &DVector<f64>, p: f64, resolution: f64) -> (f64, f64) {
    let obj = |x: f64| {
        let r0: f64 = x - y[0];
        let r1 = x * x - y[1];
        r0.abs().powf(p) + r1.abs().powf(p)
    };
    let mut best = (0.0f64, obj(0.0));
    let steps = (1.0 / resolution).round() as usize;
    for i in 1..=steps {
        let x = i as f64 * resolution;
        let v = obj(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    (best.0, best.1)
}

/// Assemble a full instance: draw the map and the ground truth, evaluate the
/// measurements, optionally corrupt them, and record the metadata.
pub fn make_instance(
    params: &InstanceParams,
    noise: Option<&NoiseSpec>,
    rng_seed: u64,
) -> Result<ProblemInstance> {
    let mut meta = BTreeMap::new();
    meta.insert("family".into(), params.family.as_str().to_string());
    meta.insert("p".into(), format!("{}", params.p));
    meta.insert("seed".into(), format!("{rng_seed}"));
    meta.insert("rng".into(), RNG_NAME.into());
    let alpha = noise.map(|s| s.alpha_p).unwrap_or(0.0);
    meta.insert("alpha_p".into(), format!("{alpha}"));
    meta.insert("noiseless".into(), format!("{}", alpha == 0.0));
    if noise.is_some() {
        meta.insert("noise_scaling".into(), "whole_vector_l2".into());
    }

    let map_seed = derive_seed(rng_seed, "map");
    let sparse_seed = derive_seed(rng_seed, "sparse");
    let noise_seed = derive_seed(rng_seed, "noise");

    match params.family {
        Family::Simple1d => {
            let map = make_simple_1d();
            let mut y = DVector::from_vec(params.y_simple.to_vec());
            if let Some(spec) = noise {
                y = add_bernoulli_gaussian_noise(&y, spec, noise_seed)?;
            }
            let (x_min, _) = simple_1d_grid_minimizer(&y, params.p, 1e-5);
            meta.insert("n".into(), "1".into());
            meta.insert("m".into(), "2".into());
            Ok(ProblemInstance {
                family: params.family,
                map: ProblemMap::Simple1d(map),
                y,
                x_star: DVector::from_vec(vec![x_min]),
                support: None,
                seed: rng_seed,
                meta,
            })
        }
        Family::PerturbedRip | Family::PhaseRetrieval => {
            let spec = DecaySparseSpec {
                n: params.n,
                k: params.k,
                kappa: params.kappa,
                norm: params.norm,
            };
            let (x_star, support) = make_sparse_vector(&spec, sparse_seed)?;
            let map = match params.family {
                Family::PerturbedRip => ProblemMap::PerturbedRip(make_perturbed_rip(
                    params.n,
                    params.m,
                    params.rho,
                    x_star.clone(),
                    map_seed,
                )?),
                _ => ProblemMap::PhaseRetrieval(make_phase_retrieval(
                    params.n, params.m, map_seed,
                )),
            };
            let clean = map.eval(&x_star);
            let y = match noise {
                Some(spec) => add_bernoulli_gaussian_noise(&clean, spec, noise_seed)?,
                None => clean,
            };
            meta.insert("n".into(), format!("{}", params.n));
            meta.insert("m".into(), format!("{}", params.m));
            meta.insert("k".into(), format!("{}", params.k));
            meta.insert("kappa".into(), format!("{}", params.kappa));
            meta.insert("norm".into(), format!("{}", params.norm));
            if params.family == Family::PerturbedRip {
                meta.insert("rho".into(), format!("{}", params.rho));
            }
            Ok(ProblemInstance {
                family: params.family,
                map,
                y,
                x_star,
                support: Some(support),
                seed: rng_seed,
                meta,
            })
        }
    }
}
