//! Functionals monitored along a trajectory: entropy, energy, their
//! regularized variants, the combined Lyapunov functional, dissipation
//! integrals, relative functionals, masses, negativity and species fluxes.
//!
//! All fields passed here are full compositions: one [`Field`] per species.

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid1D};
use crate::mobility::{truncate, weighted_projections, FrictionModel};
use crate::scheme::{chemical_potential, h_delta, EntropyParams, SchemeParams, State};

fn check(c: &[Field], g: &Grid1D) -> Result<()> {
    if c.len() < 2 {
        return Err(Error::InvalidParameter("need at least two species".into()));
    }
    for ci in c {
        if ci.len() != g.nx() {
            return Err(Error::DimensionMismatch {
                expected: g.nx(),
                got: ci.len(),
            });
        }
        if ci.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite field value".into()));
        }
    }
    Ok(())
}

fn entropy_density(r: f64) -> f64 {
    let r = r.max(0.0);
    if r == 0.0 {
        1.0
    } else {
        r * (r.ln() - 1.0) + 1.0
    }
}

/// `H(c) = sum_i int c_i (log c_i - 1) + 1`, negative entries evaluated at 0.
pub fn entropy(c: &[Field], g: &Grid1D) -> f64 {
    c.iter()
        .map(|ci| grid::integrate(&ci.iter().map(|&r| entropy_density(r)).collect::<Vec<_>>(), g))
        .sum()
}

fn gradient_energy(c: &[Field], g: &Grid1D) -> f64 {
    0.5 * c.iter().map(|ci| grid::gradient_norm_sq(ci, g)).sum::<f64>()
}

/// `E(c) = H(c) + 1/2 sum_i int |grad c_i|^2`.
pub fn energy(c: &[Field], g: &Grid1D) -> f64 {
    entropy(c, g) + gradient_energy(c, g)
}

/// `H^delta(c) = sum_i int h^delta(c_i)`.
pub fn entropy_delta(c: &[Field], p: EntropyParams, g: &Grid1D) -> f64 {
    c.iter()
        .map(|ci| grid::integrate(&ci.iter().map(|&r| h_delta(r, p)).collect::<Vec<_>>(), g))
        .sum()
}

/// `H^delta(c) + 1/2 sum_i int |grad c_i|^2`.
pub fn energy_delta(c: &[Field], p: EntropyParams, g: &Grid1D) -> f64 {
    entropy_delta(c, p, g) + gradient_energy(c, g)
}

/// `C_1 = (lambda_M - lambda)^2 / (2 lambda_m lambda)` for `0 < lambda < lambda_m`.
pub fn lyapunov_constant(model: &FrictionModel, lambda: f64) -> Result<f64> {
    let lm = model.lambda_m();
    let big = model.lambda_big_m();
    if !(lambda > 0.0 && lambda < lm) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, {lm}), got {lambda}"
        )));
    }
    Ok((big - lambda).powi(2) / (2.0 * lm * lambda))
}

/// `H^delta + C_1 E^delta`.
pub fn lyapunov(c: &[Field], model: &FrictionModel, p: &SchemeParams, g: &Grid1D) -> Result<f64> {
    check(c, g)?;
    let c1 = lyapunov_constant(model, p.lambda)?;
    let e = p.entropy();
    Ok(entropy_delta(c, e, g) + c1 * energy_delta(c, e, g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dissipation {
    /// `sum_i int (lap c_i)^2`.
    pub laplacian: f64,
    /// `sum_i int |grad sqrt(chi c)_i|^2`.
    pub sqrt: f64,
    /// `int |P_L R grad mu|^2` at faces.
    pub projected: f64,
}

/// Dissipation integrals of a state; `mu_i = h'(c_i) - lap c_i`.
pub fn dissipation_terms(
    c: &[Field],
    model: &FrictionModel,
    p: &SchemeParams,
    g: &Grid1D,
) -> Result<Dissipation> {
    check(c, g)?;
    let e = p.entropy();
    let laplacian = c
        .iter()
        .map(|ci| {
            let lap = grid::laplacian(ci, g);
            grid::inner(&lap, &lap, g)
        })
        .sum::<Result<f64>>()?;

    let n = c.len();
    let nx = g.nx();
    let mut roots = vec![vec![0.0; nx]; n];
    for j in 0..nx {
        let col: Vec<f64> = c.iter().map(|ci| ci[j]).collect();
        for (i, r) in truncate(&col, p.delta).into_iter().enumerate() {
            roots[i][j] = r.sqrt();
        }
    }
    let sqrt = roots.iter().map(|r| grid::gradient_norm_sq(r, g)).sum();

    let mu: Vec<Field> = c.iter().map(|ci| chemical_potential(ci, e, g)).collect();
    let grads: Vec<Vec<f64>> = mu.iter().map(|m| grid::face_gradient(m, g)).collect();
    let mut projected = 0.0;
    for f in 0..nx - 1 {
        let face: Vec<f64> = c.iter().map(|ci| 0.5 * (ci[f] + ci[f + 1])).collect();
        let w = model.weights(&truncate(&face, p.delta));
        let proj = weighted_projections(&w);
        let rg = nalgebra::DVector::from_iterator(n, (0..n).map(|i| w[i].sqrt() * grads[i][f]));
        projected += (&proj.p_l * rg).norm_squared();
    }
    projected *= g.h();
    Ok(Dissipation {
        laplacian,
        sqrt,
        projected,
    })
}

/// Face fluxes `c_i u_i = -sum_j B_ij(chi c) grad mu_j`, one field of
/// `nx - 1` values per species.
pub fn recover_velocities(
    c: &[Field],
    mu: &[Field],
    model: &FrictionModel,
    delta: f64,
    g: &Grid1D,
) -> Result<Vec<Field>> {
    check(c, g)?;
    check(mu, g)?;
    let n = c.len();
    if mu.len() != n || model.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: mu.len(),
        });
    }
    let grads: Vec<Vec<f64>> = mu.iter().map(|m| grid::face_gradient(m, g)).collect();
    let mut fluxes = vec![vec![0.0; g.nx() - 1]; n];
    for f in 0..g.nx() - 1 {
        let face: Vec<f64> = c.iter().map(|ci| 0.5 * (ci[f] + ci[f + 1])).collect();
        let b = model.mobility_at(&truncate(&face, delta))?;
        for i in 0..n {
            fluxes[i][f] = -(0..n).map(|j| b[(i, j)] * grads[j][f]).sum::<f64>();
        }
    }
    Ok(fluxes)
}

/// `h sum_j max(0, -c_i)` per species.
pub fn negativity(c: &[Field], g: &Grid1D) -> Vec<f64> {
    c.iter()
        .map(|ci| grid::integrate(&ci.iter().map(|v| (-v).max(0.0)).collect::<Vec<_>>(), g))
        .collect()
}

pub fn masses(c: &[Field], g: &Grid1D) -> Vec<f64> {
    c.iter().map(|ci| grid::integrate(ci, g)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeReport {
    pub t: f64,
    pub rel_entropy: f64,
    pub rel_energy: f64,
    pub rel_lyapunov: f64,
}

/// Relative entropy, energy and their combination with weight `c1`. The
/// reference `c_bar` must be strictly positive.
pub fn relative_functionals(
    c: &[Field],
    c_bar: &[Field],
    g: &Grid1D,
    c1: f64,
    t: f64,
) -> Result<RelativeReport> {
    check(c, g)?;
    check(c_bar, g)?;
    if c.len() != c_bar.len() {
        return Err(Error::DimensionMismatch {
            expected: c_bar.len(),
            got: c.len(),
        });
    }
    if c_bar.iter().flatten().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("reference state must be strictly positive".into()));
    }
    let mut rel_entropy = 0.0;
    let mut grad = 0.0;
    for (ci, bi) in c.iter().zip(c_bar) {
        let dens: Vec<f64> = ci
            .iter()
            .zip(bi)
            .map(|(&a, &b)| {
                let a0 = a.max(0.0);
                let log_term = if a0 == 0.0 { 0.0 } else { a0 * (a0 / b).ln() };
                log_term - (a0 - b)
            })
            .collect();
        rel_entropy += grid::integrate(&dens, g);
        let diff: Vec<f64> = ci.iter().zip(bi).map(|(a, b)| a - b).collect();
        grad += grid::gradient_norm_sq(&diff, g);
    }
    let rel_energy = rel_entropy + 0.5 * grad;
    Ok(RelativeReport {
        t,
        rel_entropy,
        rel_energy,
        rel_lyapunov: rel_entropy + c1 * rel_energy,
    })
}

/// One row of the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub t: f64,
    pub entropy: f64,
    pub energy: f64,
    pub entropy_delta: f64,
    pub energy_delta: f64,
    pub lyapunov: f64,
    pub masses: Vec<f64>,
    pub min_c: f64,
    pub negativity: Vec<f64>,
    pub diss_laplacian: f64,
    pub diss_sqrt: f64,
    pub diss_projected: f64,
    pub newton_iters: usize,
    pub eps_used: f64,
}

impl DiagnosticsReport {
    pub fn compute(
        s: &State,
        model: &FrictionModel,
        p: &SchemeParams,
        g: &Grid1D,
        newton_iters: usize,
        eps_used: f64,
    ) -> Result<Self> {
        let c = &s.c;
        check(c, g)?;
        let e = p.entropy();
        let c1 = lyapunov_constant(model, p.lambda)?;
        let h_d = entropy_delta(c, e, g);
        let e_d = energy_delta(c, e, g);
        let diss = dissipation_terms(c, model, p, g)?;
        Ok(Self {
            t: s.t,
            entropy: entropy(c, g),
            energy: energy(c, g),
            entropy_delta: h_d,
            energy_delta: e_d,
            lyapunov: h_d + c1 * e_d,
            masses: masses(c, g),
            min_c: c.iter().flatten().copied().fold(f64::INFINITY, f64::min),
            negativity: negativity(c, g),
            diss_laplacian: diss.laplacian,
            diss_sqrt: diss.sqrt,
            diss_projected: diss.projected,
            newton_iters,
            eps_used,
        })
    }

    pub fn csv_header(n: usize) -> String {
        let mut cols: Vec<String> = ["t", "H", "E", "H_delta", "E_delta", "lyapunov"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((1..=n).map(|i| format!("mass_{i}")));
        cols.push("min_c".into());
        cols.extend((1..=n).map(|i| format!("neg_{i}")));
        cols.extend(
            ["diss_laplacian", "diss_sqrt", "diss_projected", "newton_iters", "eps_used"]
                .iter()
                .map(|s| s.to_string()),
        );
        cols.join(",")
    }

    /// Floats with 17 significant digits.
    pub fn csv_row(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        let mut cols = vec![
            f(self.t),
            f(self.entropy),
            f(self.energy),
            f(self.entropy_delta),
            f(self.energy_delta),
            f(self.lyapunov),
        ];
        cols.extend(self.masses.iter().map(|&v| f(v)));
        cols.push(f(self.min_c));
        cols.extend(self.negativity.iter().map(|&v| f(v)));
        cols.push(f(self.diss_laplacian));
        cols.push(f(self.diss_sqrt));
        cols.push(f(self.diss_projected));
        cols.push(self.newton_iters.to_string());
        cols.push(f(self.eps_used));
        cols.join(",")
    }
}
