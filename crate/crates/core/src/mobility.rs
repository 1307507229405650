//! Pointwise matrix algebra of the mixture: projections onto `L(c)`,
//! friction matrices, Bott-Duffin inverses and the (truncated, reduced)
//! mobility matrices, together with the catalog of example friction models.
//!
//! Most functions take a plain weight slice `w` rather than a
//! [`Composition`]: truncated compositions `chi_delta(c)` no longer sum to one
//! and the projections renormalize by `sum_k w_k`. For a composition on the
//! simplex both conventions coincide.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Default number of random simplex points used to certify the spectral floor.
pub const DEFAULT_CERTIFY_SAMPLES: usize = 10_000;
/// Seed of the certification sampler; certification is deterministic.
pub const CERTIFY_SEED: u64 = 0x5eed_b077_d0ff;
/// Certified floor is the sampled minimum shrunk by this factor (and the
/// sampled Frobenius supremum inflated by its inverse).
pub const CERTIFY_MARGIN: f64 = 0.99;

const CERTIFY_TOL: f64 = 1e-10;

/// Volume fractions of the `n` species. The last entry is always
/// `1 - sum(others)`, so the vector sums to one by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Composition(Vec<f64>);

impl Composition {
    /// Builds a composition from its first `n - 1` entries.
    pub fn from_leading(leading: &[f64]) -> Result<Self> {
        if leading.is_empty() {
            return Err(Error::InvalidParameter(
                "a composition needs at least two species".into(),
            ));
        }
        let mut c = leading.to_vec();
        c.push(1.0 - leading.iter().sum::<f64>());
        Ok(Self(c))
    }

    /// Builds a composition from all `n` entries; they must sum to one up to
    /// `1e-10`. The last entry is recomputed from the others.
    pub fn new(c: &[f64]) -> Result<Self> {
        if c.len() < 2 {
            return Err(Error::InvalidParameter(
                "a composition needs at least two species".into(),
            ));
        }
        let sum: f64 = c.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!(
                "composition {c:?} sums to {sum}, expected 1"
            )));
        }
        Self::from_leading(&c[..c.len() - 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Orthogonal projections onto `L(w) = {z : sqrt(w) . z = 0}` and onto its
/// complement `span{sqrt(w)}`.
#[derive(Clone, Debug)]
pub struct ProjectionPair {
    pub p_l: Matrix,
    pub p_lperp: Matrix,
}

/// Projections at a composition on the simplex, `P_L = I - sqrt(c) sqrt(c)^T`.
///
/// Negative entries are rejected; truncate first.
pub fn projections(c: &Composition) -> Result<ProjectionPair> {
    if let Some(ci) = c.as_slice().iter().find(|&&ci| ci < 0.0) {
        return Err(Error::Domain(format!(
            "negative volume fraction {ci} in {:?}; truncate before projecting",
            c.as_slice()
        )));
    }
    let n = c.len();
    let s: Vec<f64> = c.as_slice().iter().map(|ci| ci.sqrt()).collect();
    let p_lperp = Matrix::from_fn(n, n, |i, j| s[i] * s[j]);
    let p_l = Matrix::identity(n, n) - &p_lperp;
    Ok(ProjectionPair { p_l, p_lperp })
}

/// Projections for a nonnegative weight vector that need not sum to one:
/// `P_perp_ij = sqrt(w_i w_j) / sum_k w_k`.
pub fn weighted_projections(w: &[f64]) -> ProjectionPair {
    let n = w.len();
    let total: f64 = w.iter().sum();
    let s: Vec<f64> = w.iter().map(|wi| wi.max(0.0).sqrt()).collect();
    let p_lperp = Matrix::from_fn(n, n, |i, j| s[i] * s[j] / total);
    let p_l = Matrix::identity(n, n) - &p_lperp;
    ProjectionPair { p_l, p_lperp }
}

/// Entrywise clamp `chi_delta` onto `[delta, 1 - delta]`.
pub fn truncate(c: &[f64], delta: f64) -> Vec<f64> {
    c.iter().map(|&ci| ci.clamp(delta, 1.0 - delta)).collect()
}

/// Bott-Duffin inverse `P_L (D P_L + P_perp)^{-1}` through a dense LU of the
/// bracket.
pub fn bott_duffin(d: &Matrix, proj: &ProjectionPair) -> Result<Matrix> {
    let bracket = d * &proj.p_l + &proj.p_lperp;
    let inv = invert(&bracket).ok_or_else(|| Error::SingularBracket {
        composition: proj.p_lperp.diagonal().iter().copied().collect(),
    })?;
    Ok(&proj.p_l * inv)
}

fn invert(m: &Matrix) -> Option<Matrix> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let lu = m.clone().lu();
    let u = lu.u();
    if (0..n).any(|i| u[(i, i)].abs() <= 1e-14 * scale) {
        return None;
    }
    lu.try_inverse()
}

/// Mobility `B_ij = sqrt(w_i) D^BD_ij sqrt(w_j)`.
pub fn mobility(w: &[f64], d_bd: &Matrix) -> Matrix {
    let n = w.len();
    let s: Vec<f64> = w.iter().map(|wi| wi.max(0.0).sqrt()).collect();
    Matrix::from_fn(n, n, |i, j| s[i] * d_bd[(i, j)] * s[j])
}

/// Leading `(n-1) x (n-1)` block of a truncated mobility.
pub fn reduced_mobility(b_delta: &Matrix) -> Matrix {
    let m = b_delta.nrows() - 1;
    b_delta.view((0, 0), (m, m)).into_owned()
}

/// Maxwell-Stefan friction matrix
/// `D_ij = delta_ij sum_l k_il w_l - k_ij sqrt(w_i w_j)`; annihilates `sqrt(w)`.
pub fn maxwell_stefan_matrix(k: &Matrix, w: &[f64]) -> Matrix {
    let n = w.len();
    let s: Vec<f64> = w.iter().map(|wi| wi.max(0.0).sqrt()).collect();
    Matrix::from_fn(n, n, |i, j| {
        let diag = if i == j {
            (0..n).map(|l| k[(i, l)] * w[l]).sum::<f64>()
        } else {
            0.0
        };
        diag - k[(i, j)] * s[i] * s[j]
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Phase-separation mobility `B_ij = b_i (delta_ij - b_j / sum b)` with
    /// `b_i(c_i) = beta_i c_i`.
    ElliottGarcke,
    /// Classical Maxwell-Stefan friction `K_ij = delta_ij sum k_il c_l - k_ij c_i`.
    MaxwellStefanClassic,
    /// Vapor-deposition mobility, whose Bott-Duffin inverse is the
    /// Maxwell-Stefan matrix.
    VaporDeposition,
}

/// Serializable description of a friction model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Spectral floor; certified by sampling when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<FrictionModel> {
        let model = match self.kind {
            ModelKind::ElliottGarcke => {
                let beta = self.beta.clone().unwrap_or_else(|| vec![1.0; self.n]);
                if beta.len() != self.n {
                    return Err(Error::DimensionMismatch {
                        expected: self.n,
                        got: beta.len(),
                    });
                }
                FrictionModel::elliott_garcke(beta)?
            }
            kind => {
                let rows = self.k.clone().ok_or_else(|| {
                    Error::Config(format!("model {kind:?} requires a k matrix"))
                })?;
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(Error::Config(format!(
                        "k must be {n}x{n}",
                        n = self.n
                    )));
                }
                let k = Matrix::from_fn(self.n, self.n, |i, j| rows[i][j]);
                if kind == ModelKind::MaxwellStefanClassic {
                    FrictionModel::maxwell_stefan(k)?
                } else {
                    FrictionModel::vapor_deposition(k)?
                }
            }
        };
        match self.rho {
            Some(rho) => model.with_rho(rho),
            None => Ok(model),
        }
    }
}

/// A friction model together with its certified spectral constants.
#[derive(Clone, Debug)]
pub struct FrictionModel {
    kind: ModelKind,
    n: usize,
    beta: Vec<f64>,
    k: Matrix,
    rho: f64,
    frobenius_sup: f64,
}

impl FrictionModel {
    pub fn elliott_garcke(beta: Vec<f64>) -> Result<Self> {
        let n = beta.len();
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two species".into()));
        }
        if beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta:?}"
            )));
        }
        Self::certified(ModelKind::ElliottGarcke, n, beta, Matrix::zeros(n, n))
    }

    pub fn maxwell_stefan(k: Matrix) -> Result<Self> {
        let n = check_friction_coefficients(&k)?;
        Self::certified(ModelKind::MaxwellStefanClassic, n, vec![], k)
    }

    pub fn vapor_deposition(k: Matrix) -> Result<Self> {
        let n = check_friction_coefficients(&k)?;
        Self::certified(ModelKind::VaporDeposition, n, vec![], k)
    }

    fn certified(kind: ModelKind, n: usize, beta: Vec<f64>, k: Matrix) -> Result<Self> {
        let mut model = Self {
            kind,
            n,
            beta,
            k,
            rho: 1.0,
            frobenius_sup: 0.0,
        };
        model.certify(DEFAULT_CERTIFY_SAMPLES, CERTIFY_SEED)?;
        Ok(model)
    }

    /// Re-estimates `rho` and `sup ||D||_F` from the simplex vertices, the
    /// edge midpoints and `samples` uniformly drawn simplex points.
    pub fn certify(&mut self, samples: usize, seed: u64) -> Result<()> {
        let n = self.n;
        let mut points = Vec::with_capacity(samples + n * n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            points.push(e);
            for j in i + 1..n {
                let mut m = vec![0.0; n];
                m[i] = 0.5;
                m[j] = 0.5;
                points.push(m);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        points.extend((0..samples).map(|_| sample_simplex(&mut rng, n)));

        let mut floor = f64::INFINITY;
        let mut frob = 0.0_f64;
        for c in &points {
            let d = self.friction_matrix(c)?;
            frob = frob.max(d.norm());
            let weights = self.weights(c);
            floor = floor.min(restricted_min_eigenvalue(&d, &weights));
        }
        if !(floor > 0.0) {
            return Err(Error::Certification {
                eigenvalue: floor,
                lower: 0.0,
                upper: f64::INFINITY,
                composition: vec![],
            });
        }
        self.rho = CERTIFY_MARGIN * floor;
        self.frobenius_sup = frob / CERTIFY_MARGIN;
        Ok(())
    }

    /// Replaces the certified floor by a user-supplied one.
    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    /// Upper bound on `||D(c)||_F` over the simplex (sampled).
    pub fn frobenius_sup(&self) -> f64 {
        self.frobenius_sup
    }

    /// Uniform lower spectral constant `(1 + n sup ||D||_F)^{-1}`.
    pub fn lambda_m(&self) -> f64 {
        1.0 / (1.0 + self.n as f64 * self.frobenius_sup)
    }

    /// Uniform upper spectral constant `max(1, 1/rho)`.
    pub fn lambda_big_m(&self) -> f64 {
        1f64.max(1.0 / self.rho)
    }

    /// Vector whose square root spans the kernel of `D^BD`: `b(w)` for the
    /// Elliott-Garcke model, `w` otherwise.
    pub fn weights(&self, w: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::ElliottGarcke => w.iter().zip(&self.beta).map(|(wi, b)| b * wi).collect(),
            _ => w.to_vec(),
        }
    }

    pub fn projections_at(&self, w: &[f64]) -> ProjectionPair {
        weighted_projections(&self.weights(w))
    }

    /// Friction matrix `D(w)`. For Elliott-Garcke this is the projection
    /// `P_L(b)`, whose Bott-Duffin inverse is itself; for vapor deposition
    /// it is the Bott-Duffin inverse of the Maxwell-Stefan matrix.
    pub fn friction_matrix(&self, w: &[f64]) -> Result<Matrix> {
        self.check_len(w)?;
        match self.kind {
            ModelKind::ElliottGarcke => Ok(self.projections_at(w).p_l),
            ModelKind::MaxwellStefanClassic => Ok(maxwell_stefan_matrix(&self.k, w)),
            ModelKind::VaporDeposition => {
                bott_duffin(&maxwell_stefan_matrix(&self.k, w), &weighted_projections(w))
            }
        }
    }

    /// `D^BD(w)`, using the closed forms where the model provides one.
    pub fn bott_duffin_inverse(&self, w: &[f64]) -> Result<Matrix> {
        self.check_len(w)?;
        match self.kind {
            ModelKind::ElliottGarcke => Ok(self.projections_at(w).p_l),
            ModelKind::MaxwellStefanClassic => bott_duffin(
                &maxwell_stefan_matrix(&self.k, w),
                &weighted_projections(w),
            ),
            ModelKind::VaporDeposition => Ok(maxwell_stefan_matrix(&self.k, w)),
        }
    }

    /// `B(w) = R(b) D^BD(w) R(b)`.
    pub fn mobility_at(&self, w: &[f64]) -> Result<Matrix> {
        let d_bd = self.bott_duffin_inverse(w)?;
        Ok(mobility(&self.weights(w), &d_bd))
    }

    pub fn assembly(&self, w: &[f64]) -> Result<MobilityAssembly> {
        let d = self.friction_matrix(w)?;
        let d_bd = self.bott_duffin_inverse(w)?;
        let b = mobility(&self.weights(w), &d_bd);
        Ok(MobilityAssembly { d, d_bd, b })
    }

    /// `B(w)` and its partial derivatives `dB/dw_k`, `k = 0..n`.
    ///
    /// Requires `w_k > 0` for every `k` (true after truncation).
    pub fn mobility_with_derivatives(&self, w: &[f64]) -> Result<(Matrix, Vec<Matrix>)> {
        self.check_len(w)?;
        let n = self.n;
        match self.kind {
            ModelKind::ElliottGarcke => {
                let b: Vec<f64> = self.weights(w);
                let total: f64 = b.iter().sum();
                let mob = Matrix::from_fn(n, n, |i, j| {
                    let d = if i == j { b[i] } else { 0.0 };
                    d - b[i] * b[j] / total
                });
                let derivs = (0..n)
                    .map(|k| {
                        let beta = self.beta[k];
                        Matrix::from_fn(n, n, |i, j| {
                            let dk = |a: usize| if a == k { 1.0 } else { 0.0 };
                            beta * (dk(i) * dk(j)
                                - (dk(i) * b[j] + b[i] * dk(j)) / total
                                + b[i] * b[j] / (total * total))
                        })
                    })
                    .collect();
                Ok((mob, derivs))
            }
            ModelKind::VaporDeposition => {
                let k = &self.k;
                let row: Vec<f64> = (0..n)
                    .map(|i| (0..n).map(|l| k[(i, l)] * w[l]).sum())
                    .collect();
                let mob = Matrix::from_fn(n, n, |i, j| {
                    let d = if i == j { w[i] * row[i] } else { 0.0 };
                    d - k[(i, j)] * w[i] * w[j]
                });
                let derivs = (0..n)
                    .map(|m| {
                        let dk = |a: usize| if a == m { 1.0 } else { 0.0 };
                        Matrix::from_fn(n, n, |i, j| {
                            let d = if i == j {
                                dk(i) * row[i] + w[i] * k[(i, m)]
                            } else {
                                0.0
                            };
                            d - k[(i, j)] * (dk(i) * w[j] + w[i] * dk(j))
                        })
                    })
                    .collect();
                Ok((mob, derivs))
            }
            ModelKind::MaxwellStefanClassic => self.maxwell_stefan_derivatives(w),
        }
    }

    fn maxwell_stefan_derivatives(&self, w: &[f64]) -> Result<(Matrix, Vec<Matrix>)> {
        let n = self.n;
        let k = &self.k;
        let s: Vec<f64> = w.iter().map(|wi| wi.sqrt()).collect();
        let total: f64 = w.iter().sum();
        let proj = weighted_projections(w);
        let (p, q) = (&proj.p_l, &proj.p_lperp);
        let d = maxwell_stefan_matrix(k, w);
        let x = invert(&(&d * p + q)).ok_or_else(|| Error::SingularBracket {
            composition: w.to_vec(),
        })?;
        let d_bd = p * &x;
        let r = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&s));
        let mob = &r * &d_bd * &r;

        let derivs = (0..n)
            .map(|m| {
                let ds: Vec<f64> = (0..n)
                    .map(|i| if i == m { 0.5 / s[m] } else { 0.0 })
                    .collect();
                let dq = Matrix::from_fn(n, n, |i, j| {
                    (ds[i] * s[j] + s[i] * ds[j]) / total - s[i] * s[j] / (total * total)
                });
                let dd = Matrix::from_fn(n, n, |i, j| {
                    let diag = if i == j { k[(i, m)] } else { 0.0 };
                    diag - k[(i, j)] * (ds[i] * s[j] + s[i] * ds[j])
                });
                let dp = -&dq;
                let dm = &dd * p + &d * &dp + &dq;
                let dx = -(&x * dm * &x);
                let dd_bd = &dp * &x + p * dx;
                let dr = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&ds));
                &dr * &d_bd * &r + &r * dd_bd * &r + &r * &d_bd * dr
            })
            .collect();
        Ok((mob, derivs))
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: w.len(),
            });
        }
        Ok(())
    }
}

fn check_friction_coefficients(k: &Matrix) -> Result<usize> {
    let n = k.nrows();
    if n < 2 || k.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "k must be square with n >= 2, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    for i in 0..n {
        if k[(i, i)] != 0.0 {
            return Err(Error::InvalidParameter(format!("k[{i}][{i}] must be zero")));
        }
        for j in 0..n {
            let kij = k[(i, j)];
            if !(kij >= 0.0) || !kij.is_finite() || kij != k[(j, i)] {
                return Err(Error::InvalidParameter(format!(
                    "k must be symmetric, finite and nonnegative (entry {i},{j} = {kij})"
                )));
            }
        }
    }
    Ok(n)
}

/// The friction-model ingredients at one composition.
#[derive(Clone, Debug)]
pub struct MobilityAssembly {
    pub d: Matrix,
    pub d_bd: Matrix,
    pub b: Matrix,
}

/// Friction matrix of `model` at `c` (see [`FrictionModel::friction_matrix`]).
pub fn friction_matrix(model: &FrictionModel, c: &[f64]) -> Result<Matrix> {
    model.friction_matrix(c)
}

/// `B^delta(c) = R(chi c) D^BD(chi c) R(chi c)`.
pub fn truncated_mobility(c: &[f64], model: &FrictionModel, delta: f64) -> Result<Matrix> {
    model.mobility_at(&truncate(c, delta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralBounds {
    pub lambda_m: f64,
    pub lambda_big_m: f64,
}

/// Pointwise bounds `lambda_m = (1 + n ||D||_F)^{-1}`, `lambda_M = max(1, 1/rho)`,
/// certified against the eigenvalues of `(D P_L + P_perp)^{-1}`. Returns the
/// bounds and the sorted eigenvalues.
pub fn spectral_bounds_for(
    d: &Matrix,
    proj: &ProjectionPair,
    rho: f64,
) -> Result<(SpectralBounds, Vec<f64>)> {
    let n = d.nrows();
    let bounds = SpectralBounds {
        lambda_m: 1.0 / (1.0 + n as f64 * d.norm()),
        lambda_big_m: 1f64.max(1.0 / rho),
    };
    let bracket = d * &proj.p_l + &proj.p_lperp;
    let composition: Vec<f64> = proj.p_lperp.diagonal().iter().copied().collect();
    let inv = invert(&bracket).ok_or_else(|| Error::SingularBracket {
        composition: composition.clone(),
    })?;
    let sym = (&inv + inv.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    for &e in &eig {
        if e < bounds.lambda_m - CERTIFY_TOL || e > bounds.lambda_big_m + CERTIFY_TOL {
            return Err(Error::Certification {
                eigenvalue: e,
                lower: bounds.lambda_m,
                upper: bounds.lambda_big_m,
                composition,
            });
        }
    }
    Ok((bounds, eig))
}

/// Spectral bounds of `model` at the composition `c`.
pub fn spectral_bounds(model: &FrictionModel, c: &[f64]) -> Result<SpectralBounds> {
    let d = model.friction_matrix(c)?;
    let proj = model.projections_at(c);
    spectral_bounds_for(&d, &proj, model.rho())
        .map(|(b, _)| b)
        .map_err(|e| match e {
            Error::Certification {
                eigenvalue,
                lower,
                upper,
                ..
            } => Error::Certification {
                eigenvalue,
                lower,
                upper,
                composition: c.to_vec(),
            },
            other => other,
        })
}

/// Smallest eigenvalue of `D` restricted to `L(w)`.
fn restricted_min_eigenvalue(d: &Matrix, w: &[f64]) -> f64 {
    let basis = subspace_basis(w);
    let restricted = basis.transpose() * d * &basis;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    SymmetricEigen::new(restricted)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis (as columns) of `L(w)`, from the eigenvectors of `P_L(w)`.
fn subspace_basis(w: &[f64]) -> Matrix {
    let n = w.len();
    let eig = SymmetricEigen::new(weighted_projections(w).p_l);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    Matrix::from_fn(n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
}

/// Uniformly distributed point on the probability simplex.
pub fn sample_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = e.iter().sum();
    let mut c: Vec<f64> = e.iter().map(|x| x / total).collect();
    let head: f64 = c[..n - 1].iter().sum();
    c[n - 1] = 1.0 - head;
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ones_k(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    fn max_abs(m: &Matrix) -> f64 {
        m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn projections_symmetric_case() {
        let c = Composition::new(&[0.5, 0.5]).unwrap();
        let p = projections(&c).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_abs_diff_eq!(max_abs(&(&p.p_l - expected)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projections_asymmetric_case() {
        let c = Composition::new(&[0.25, 0.75]).unwrap();
        let p = projections(&c).unwrap();
        let r3 = 3f64.sqrt() / 4.0;
        let expected = Matrix::from_row_slice(2, 2, &[0.75, -r3, -r3, 0.25]);
        assert_abs_diff_eq!(max_abs(&(&p.p_l - expected)), 0.0, epsilon = 1e-15);
        let s = nalgebra::DVector::from_vec(vec![0.5, 0.75f64.sqrt()]);
        assert_abs_diff_eq!((&p.p_l * s).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projections_reject_negative_entries() {
        let c = Composition::new(&[-0.1, 1.1]).unwrap();
        assert!(matches!(projections(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn composition_last_entry_is_defined() {
        let c = Composition::from_leading(&[0.2, 0.3]).unwrap();
        assert_eq!(c.as_slice()[2], 1.0 - (0.2 + 0.3));
        assert!(Composition::new(&[0.2, 0.3]).is_err());
        assert!(Composition::from_leading(&[]).is_err());
    }

    #[test]
    fn truncate_clamps_into_band() {
        assert_eq!(truncate(&[-0.05, 1.05], 0.1), vec![0.1, 0.9]);
        assert_eq!(truncate(&[0.3, 0.7], 0.1), vec![0.3, 0.7]);
        let t = truncate(&[0.1, 0.9], 0.2);
        assert_abs_diff_eq!(t[0], 0.2);
        assert_abs_diff_eq!(t[1], 0.8);
    }

    #[test]
    fn maxwell_stefan_two_species() {
        let mut k = Matrix::zeros(2, 2);
        k[(0, 1)] = 2.0;
        k[(1, 0)] = 2.0;
        let model = FrictionModel::maxwell_stefan(k).unwrap();
        let d = model.friction_matrix(&[0.5, 0.5]).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_abs_diff_eq!(max_abs(&(d - expected)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn elliott_garcke_closed_form_two_species() {
        let model = FrictionModel::elliott_garcke(vec![1.0, 1.0]).unwrap();
        let d_bd = model.bott_duffin_inverse(&[0.5, 0.5]).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_abs_diff_eq!(max_abs(&(d_bd - expected)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn friction_kernel_is_sqrt_weights() {
        let c = [0.2, 0.3, 0.5];
        let k = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 0.5, 2.0, 0.5, 0.0]);
        for model in [
            FrictionModel::maxwell_stefan(k.clone()).unwrap(),
            FrictionModel::vapor_deposition(k.clone()).unwrap(),
            FrictionModel::elliott_garcke(vec![1.0, 2.0, 0.5]).unwrap(),
        ] {
            let d = model.friction_matrix(&c).unwrap();
            let s = nalgebra::DVector::from_iterator(
                3,
                model.weights(&c).iter().map(|w| w.sqrt()),
            );
            assert!((&d * s).amax() < 1e-12, "{:?}", model.kind());
        }
    }

    #[test]
    fn bott_duffin_of_scaled_projection() {
        let c = Composition::new(&[0.5, 0.5]).unwrap();
        let proj = projections(&c).unwrap();
        let d = &proj.p_l * 2.0;
        let d_bd = bott_duffin(&d, &proj).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert_abs_diff_eq!(max_abs(&(&d_bd - expected)), 0.0, epsilon = 1e-15);

        let b = mobility(c.as_slice(), &d_bd);
        let expected = Matrix::from_row_slice(2, 2, &[0.125, -0.125, -0.125, 0.125]);
        assert_abs_diff_eq!(max_abs(&(b - expected)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_bracket_is_reported() {
        let c = Composition::new(&[0.5, 0.5]).unwrap();
        let proj = projections(&c).unwrap();
        let d = Matrix::zeros(2, 2);
        assert!(matches!(
            bott_duffin(&d, &proj),
            Err(Error::SingularBracket { .. })
        ));
    }

    #[test]
    fn spectral_bounds_scaled_projection() {
        let c = Composition::new(&[0.5, 0.5]).unwrap();
        let proj = projections(&c).unwrap();
        let d = &proj.p_l * 2.0;
        let (bounds, eig) = spectral_bounds_for(&d, &proj, 2.0).unwrap();
        assert_abs_diff_eq!(bounds.lambda_m, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(bounds.lambda_big_m, 1.0);
        assert_abs_diff_eq!(eig[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(eig[1], 1.0, epsilon = 1e-14);

        let (bounds, _) = spectral_bounds_for(&proj.p_l, &proj, 1.0).unwrap();
        assert_eq!(bounds.lambda_big_m, 1.0);
    }

    #[test]
    fn spectral_certification_failure_carries_eigenvalue() {
        let c = Composition::new(&[0.5, 0.5]).unwrap();
        let proj = projections(&c).unwrap();
        // nonzero eigenvalue 0.5 but claimed floor 1: inverse has eigenvalue 2 > lambda_M = 1
        let d = &proj.p_l * 0.5;
        match spectral_bounds_for(&d, &proj, 1.0) {
            Err(Error::Certification { eigenvalue, .. }) => {
                assert_abs_diff_eq!(eigenvalue, 2.0, epsilon = 1e-12)
            }
            other => panic!("expected certification failure, got {other:?}"),
        }
    }

    #[test]
    fn truncated_mobility_inside_band_is_untruncated() {
        let model = FrictionModel::maxwell_stefan(ones_k(3)).unwrap();
        let c = [0.2, 0.3, 0.5];
        let b = model.mobility_at(&c).unwrap();
        let bd = truncated_mobility(&c, &model, 0.01).unwrap();
        assert_eq!(b, bd);
    }

    #[test]
    fn truncated_mobility_at_pure_phase() {
        let mut k = Matrix::zeros(2, 2);
        k[(0, 1)] = 1.0;
        k[(1, 0)] = 1.0;
        let model = FrictionModel::maxwell_stefan(k).unwrap();
        let b = truncated_mobility(&[0.0, 1.0], &model, 0.1).unwrap();
        // chi c = (0.1, 0.9): D = [[.9,-.3],[-.3,.1]], bracket inverse gives
        // D^BD = P_L, so B = diag(w) - w w^T = 0.09 [[1,-1],[-1,1]]
        let expected = Matrix::from_row_slice(2, 2, &[0.09, -0.09, -0.09, 0.09]);
        assert!(b.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(max_abs(&(&b - expected)), 0.0, epsilon = 1e-14);
        let reduced = reduced_mobility(&b);
        assert_eq!(reduced.nrows(), 1);
        assert!(reduced[(0, 0)] > 0.0);
    }

    #[test]
    fn vapor_deposition_closed_form_matches_bott_duffin_route() {
        let k = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 3.0, 1.0, 0.0, 0.5, 3.0, 0.5, 0.0]);
        let model = FrictionModel::vapor_deposition(k.clone()).unwrap();
        let c = [0.1, 0.6, 0.3];
        let d = model.friction_matrix(&c).unwrap();
        let d_bd = bott_duffin(&d, &weighted_projections(&c)).unwrap();
        let b_route = mobility(&c, &d_bd);
        let closed = Matrix::from_fn(3, 3, |i, j| {
            let diag = if i == j {
                (0..3).map(|l| k[(i, l)] * c[i] * c[l]).sum::<f64>()
            } else {
                0.0
            };
            diag - k[(i, j)] * c[i] * c[j]
        });
        assert!(max_abs(&(b_route - &closed)) < 1e-12);
        assert!(max_abs(&(model.mobility_at(&c).unwrap() - closed)) < 1e-12);
    }

    #[test]
    fn constant_friction_certifies_unit_floor() {
        let model = FrictionModel::maxwell_stefan(ones_k(4)).unwrap();
        assert_abs_diff_eq!(model.rho(), CERTIFY_MARGIN, epsilon = 1e-12);
        // D = P_L on the simplex, ||P_L||_F = sqrt(n - 1)
        assert_abs_diff_eq!(
            model.frobenius_sup(),
            3f64.sqrt() / CERTIFY_MARGIN,
            epsilon = 1e-10
        );
    }

    #[test]
    fn model_spec_validation() {
        let spec = ModelSpec {
            kind: ModelKind::MaxwellStefanClassic,
            n: 2,
            k: None,
            beta: None,
            rho: None,
        };
        assert!(matches!(spec.build(), Err(Error::Config(_))));
        let spec = ModelSpec {
            kind: ModelKind::MaxwellStefanClassic,
            n: 2,
            k: Some(vec![vec![0.0, 1.0], vec![2.0, 0.0]]),
            beta: None,
            rho: None,
        };
        assert!(matches!(spec.build(), Err(Error::InvalidParameter(_))));
        let spec = ModelSpec {
            kind: ModelKind::ElliottGarcke,
            n: 3,
            k: None,
            beta: None,
            rho: Some(0.5),
        };
        let model = spec.build().unwrap();
        assert_eq!(model.rho(), 0.5);
        assert_eq!(model.lambda_big_m(), 2.0);
    }

    #[test]
    fn mobility_derivatives_match_finite_differences() {
        let k = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 3.0, 1.0, 0.0, 0.5, 3.0, 0.5, 0.0]);
        let w = [0.15, 0.55, 0.35];
        for model in [
            FrictionModel::maxwell_stefan(k.clone()).unwrap(),
            FrictionModel::vapor_deposition(k.clone()).unwrap(),
            FrictionModel::elliott_garcke(vec![1.0, 2.0, 0.5]).unwrap(),
        ] {
            let (b, derivs) = model.mobility_with_derivatives(&w).unwrap();
            assert!(max_abs(&(&b - model.mobility_at(&w).unwrap())) < 1e-14);
            for m in 0..3 {
                let step = 1e-6;
                let mut wp = w;
                let mut wm = w;
                wp[m] += step;
                wm[m] -= step;
                let fd = (model.mobility_at(&wp).unwrap() - model.mobility_at(&wm).unwrap())
                    / (2.0 * step);
                assert!(
                    max_abs(&(&derivs[m] - fd)) < 1e-8,
                    "{:?} derivative {m}",
                    model.kind()
                );
            }
        }
    }
}
