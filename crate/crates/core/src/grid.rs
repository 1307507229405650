//! Uniform cell-centred 1-D grid with homogeneous Neumann (no-flux)
//! boundaries.
//!
//! Cell `j` sits at `x_j = (j + 1/2) h`. Interior face `f` separates cells
//! `f` and `f + 1`; the two boundary faces carry zero flux. With this pairing
//! the discrete divergence and the face gradient are negative adjoints under
//! the `h`-weighted inner product (summation by parts).

use crate::error::{Error, Result};
use crate::mobility::Matrix;

pub type Field = Vec<f64>;

pub const MIN_CELLS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    nx: usize,
    length: f64,
}

impl Grid1D {
    pub fn new(nx: usize, length: f64) -> Result<Self> {
        if nx < MIN_CELLS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_CELLS} cells, got {nx}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "domain length must be positive, got {length}"
            )));
        }
        Ok(Self { nx, length })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn cell_centers(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.nx).map(|j| (j as f64 + 0.5) * h).collect()
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.nx {
            return Err(Error::DimensionMismatch {
                expected: self.nx,
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Three-point Laplacian with reflective ghost cells.
pub fn laplacian(f: &[f64], g: &Grid1D) -> Field {
    let nx = f.len();
    let h2 = g.h() * g.h();
    (0..nx)
        .map(|j| {
            let left = if j == 0 { f[0] } else { f[j - 1] };
            let right = if j + 1 == nx { f[nx - 1] } else { f[j + 1] };
            (left - 2.0 * f[j] + right) / h2
        })
        .collect()
}

/// `laplacian(laplacian(f))`.
pub fn bilaplacian(f: &[f64], g: &Grid1D) -> Field {
    laplacian(&laplacian(f, g), g)
}

/// Forward differences `(f_{j+1} - f_j) / h` on the `nx - 1` interior faces.
pub fn face_gradient(f: &[f64], g: &Grid1D) -> Vec<f64> {
    let h = g.h();
    f.windows(2).map(|p| (p[1] - p[0]) / h).collect()
}

/// Discrete `div(A grad w)` for a system: `w` holds one field per species and
/// `coeff` one matrix per interior face.
pub fn div_flux(w: &[Field], coeff: &[Matrix], g: &Grid1D) -> Result<Vec<Field>> {
    let m = w.len();
    let nx = g.nx();
    for wi in w {
        g.check(wi)?;
    }
    if coeff.len() != nx - 1 {
        return Err(Error::DimensionMismatch {
            expected: nx - 1,
            got: coeff.len(),
        });
    }
    if let Some(a) = coeff.iter().find(|a| a.nrows() != m || a.ncols() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: a.nrows().max(a.ncols()),
        });
    }
    let grads: Vec<Vec<f64>> = w.iter().map(|wi| face_gradient(wi, g)).collect();
    let h = g.h();
    let mut out = vec![vec![0.0; nx]; m];
    for (f, a) in coeff.iter().enumerate() {
        for i in 0..m {
            let flux: f64 = (0..m).map(|j| a[(i, j)] * grads[j][f]).sum();
            out[i][f] += flux / h;
            out[i][f + 1] -= flux / h;
        }
    }
    Ok(out)
}

/// Midpoint-rule inner product `h sum_j f_j g_j`.
pub fn inner(f: &[f64], other: &[f64], g: &Grid1D) -> Result<f64> {
    if f.len() != other.len() {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            got: other.len(),
        });
    }
    Ok(g.h() * f.iter().zip(other).map(|(a, b)| a * b).sum::<f64>())
}

/// `h sum_j f_j`.
pub fn integrate(f: &[f64], g: &Grid1D) -> f64 {
    g.h() * f.iter().sum::<f64>()
}

/// `h sum_faces |grad f|^2` over interior faces.
pub fn gradient_norm_sq(f: &[f64], g: &Grid1D) -> f64 {
    g.h() * face_gradient(f, g).iter().map(|d| d * d).sum::<f64>()
}
