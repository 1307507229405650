//! The truncated, reduced implicit Euler step.
//!
//! Unknowns are the first `n - 1` volume fractions and the `n - 1` relative
//! potentials `w_i = mu_i - mu_n`. One step solves
//!
//! ```text
//! (c_i - c_i_old) / tau = div sum_j Bt_ij(c) grad w_j - eps (lap^2 w_i + w_i)
//! w_i = h'(c_i) - h'(c_n) - lap(c_i - c_n),      c_n = 1 - sum_{i<n} c_i
//! ```
//!
//! with damped Newton on a banded Jacobian. `Bt` is the leading block of the
//! truncated mobility evaluated at the mean of the two cells adjacent to a face.

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid1D};
use crate::mobility::{truncate, FrictionModel};

/// Default truncation parameter.
pub const DEFAULT_DELTA: f64 = 1e-3;
/// Regularization weights (times `h^-2`) tried after a failed unregularized step.
pub const EPS_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyParams {
    delta: f64,
}

impl EntropyParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1/2), got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Regularized entropy density: `r log r` on `[delta, 1 - delta]`, continued
/// quadratically (C^2) outside.
pub fn h_delta(r: f64, p: EntropyParams) -> f64 {
    let d = p.delta;
    if r < d {
        r * d.ln() - d / 2.0 + r * r / (2.0 * d)
    } else if r > 1.0 - d {
        let e = 1.0 - d;
        r * e.ln() - e / 2.0 + r * r / (2.0 * e)
    } else {
        r * r.ln()
    }
}

pub fn h_delta_prime(r: f64, p: EntropyParams) -> f64 {
    let d = p.delta;
    if r < d {
        d.ln() + r / d
    } else if r > 1.0 - d {
        let e = 1.0 - d;
        e.ln() + r / e
    } else {
        r.ln() + 1.0
    }
}

/// `1 / clamp(r, delta, 1 - delta)`.
pub fn h_delta_second(r: f64, p: EntropyParams) -> f64 {
    1.0 / r.clamp(p.delta, 1.0 - p.delta)
}

/// `mu_i = h'(c_i) - lap c_i`.
pub fn chemical_potential(c_i: &[f64], p: EntropyParams, g: &Grid1D) -> Field {
    let lap = grid::laplacian(c_i, g);
    c_i.iter()
        .zip(&lap)
        .map(|(&c, l)| h_delta_prime(c, p) - l)
        .collect()
}

/// Relative potentials `w_i = mu_i - mu_n`, `i < n`.
pub fn relative_potentials(c: &[Field], p: EntropyParams, g: &Grid1D) -> Vec<Field> {
    let n = c.len();
    let cn = &c[n - 1];
    (0..n - 1)
        .map(|i| {
            let diff: Vec<f64> = c[i].iter().zip(cn).map(|(a, b)| a - b).collect();
            let lap = grid::laplacian(&diff, g);
            (0..g.nx())
                .map(|j| h_delta_prime(c[i][j], p) - h_delta_prime(cn[j], p) - lap[j])
                .collect()
        })
        .collect()
}

/// Numerical contract of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeParams {
    pub tau: f64,
    pub delta: f64,
    pub eps: f64,
    /// Weight of the entropy/energy combination, `0 < lambda < lambda_m`.
    pub lambda: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub line_search_max_halvings: usize,
}

impl SchemeParams {
    /// Defaults: `eps = 0`, `lambda = lambda_m / 2`, tolerance `1e-9`.
    pub fn new(tau: f64, delta: f64, model: &FrictionModel) -> Self {
        Self {
            tau,
            delta,
            eps: 0.0,
            lambda: 0.5 * model.lambda_m(),
            newton_tol: 1e-9,
            newton_max_iter: 25,
            line_search_max_halvings: 12,
        }
    }

    /// `h^2 / 4`.
    pub fn default_tau(g: &Grid1D) -> f64 {
        0.25 * g.h() * g.h()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        EntropyParams::new(self.delta)?;
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidParameter(format!("eps must be >= 0, got {}", self.eps)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("invalid Newton settings".into()));
        }
        Ok(())
    }

    pub fn entropy(&self) -> EntropyParams {
        EntropyParams { delta: self.delta }
    }
}

/// Simulation state. `c` holds all `n` species; `c[n-1]` is always
/// recomputed as `1 - sum` of the others.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub c: Vec<Field>,
    pub w: Vec<Field>,
    pub t: f64,
}

impl State {
    /// Builds a state from `n` fields (the last one is overwritten) and
    /// computes consistent relative potentials.
    pub fn new(mut c: Vec<Field>, delta: f64, g: &Grid1D) -> Result<Self> {
        let n = c.len();
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two species".into()));
        }
        for ci in &c {
            if ci.len() != g.nx() {
                return Err(Error::DimensionMismatch {
                    expected: g.nx(),
                    got: ci.len(),
                });
            }
            if ci.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite initial data".into()));
            }
        }
        c[n - 1] = closing_fraction(&c[..n - 1], g.nx());
        let w = relative_potentials(&c, EntropyParams::new(delta)?, g);
        Ok(Self { c, w, t: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn nx(&self) -> usize {
        self.c[0].len()
    }

    /// Composition vector at cell `j`.
    pub fn composition_at(&self, j: usize) -> Vec<f64> {
        self.c.iter().map(|ci| ci[j]).collect()
    }
}

/// `1 - sum_i c_i` cellwise, summed in species order.
pub fn closing_fraction(leading: &[Field], nx: usize) -> Field {
    (0..nx)
        .map(|j| 1.0 - leading.iter().map(|ci| ci[j]).sum::<f64>())
        .collect()
}

/// Jacobian and residual of the monolithic Newton system. Unknowns are
/// interleaved per cell as `(c_1..c_{n-1}, w_1..w_{n-1})`.
pub struct NewtonSystem {
    pub jacobian: BandMatrix,
    pub residual: Vec<f64>,
}

struct Layout {
    nx: usize,
    m: usize,
}

impl Layout {
    fn vars(&self) -> usize {
        2 * self.m
    }
    fn c(&self, j: usize, i: usize) -> usize {
        j * self.vars() + i
    }
    fn w(&self, j: usize, i: usize) -> usize {
        j * self.vars() + self.m + i
    }
    fn len(&self) -> usize {
        self.nx * self.vars()
    }
}

/// Packs `(c_1..c_{n-1}, w)` of a state into a Newton vector.
pub fn pack(c_leading: &[Field], w: &[Field]) -> Vec<f64> {
    let m = w.len();
    let nx = w[0].len();
    let lay = Layout { nx, m };
    let mut x = vec![0.0; lay.len()];
    for j in 0..nx {
        for i in 0..m {
            x[lay.c(j, i)] = c_leading[i][j];
            x[lay.w(j, i)] = w[i][j];
        }
    }
    x
}

/// Inverse of [`pack`]: returns all `n` fractions (closing one recomputed)
/// and the `n - 1` potentials.
pub fn unpack(x: &[f64], n: usize, nx: usize) -> (Vec<Field>, Vec<Field>) {
    let m = n - 1;
    let lay = Layout { nx, m };
    let mut c: Vec<Field> = (0..m).map(|i| (0..nx).map(|j| x[lay.c(j, i)]).collect()).collect();
    let w: Vec<Field> = (0..m).map(|i| (0..nx).map(|j| x[lay.w(j, i)]).collect()).collect();
    let cn = closing_fraction(&c, nx);
    c.push(cn);
    (c, w)
}

/// Entries `(k, L_jk)` of the Neumann Laplacian row `j`.
fn laplacian_row(j: usize, nx: usize, h2: f64) -> Vec<(usize, f64)> {
    let mut row = Vec::with_capacity(3);
    let mut diag = 0.0;
    if j > 0 {
        row.push((j - 1, 1.0 / h2));
        diag -= 1.0 / h2;
    }
    if j + 1 < nx {
        row.push((j + 1, 1.0 / h2));
        diag -= 1.0 / h2;
    }
    row.push((j, diag));
    row
}

/// Entries of row `j` of the squared Laplacian.
fn bilaplacian_row(j: usize, nx: usize, h2: f64) -> Vec<(usize, f64)> {
    let mut acc: Vec<(usize, f64)> = Vec::with_capacity(5);
    for (l, a) in laplacian_row(j, nx, h2) {
        for (k, b) in laplacian_row(l, nx, h2) {
            match acc.iter_mut().find(|(kk, _)| *kk == k) {
                Some(e) => e.1 += a * b,
                None => acc.push((k, a * b)),
            }
        }
    }
    acc
}

fn band_width(m: usize, eps: f64) -> usize {
    let reach = if eps > 0.0 { 2 } else { 1 };
    (reach + 1) * 2 * m - 1
}

/// Assembles residual and (optionally) Jacobian at the Newton iterate `x`.
fn assemble(
    c_old: &[Field],
    x: &[f64],
    model: &FrictionModel,
    p: &SchemeParams,
    g: &Grid1D,
    with_jacobian: bool,
) -> Result<(Vec<f64>, Option<BandMatrix>)> {
    let n = model.n();
    let m = n - 1;
    let nx = g.nx();
    let lay = Layout { nx, m };
    let h = g.h();
    let h2 = h * h;
    let ent = p.entropy();
    let delta = p.delta;
    let (c, w) = unpack(x, n, nx);

    let mut res = vec![0.0; lay.len()];
    let bw = band_width(m, p.eps);
    let mut jac = with_jacobian.then(|| BandMatrix::zeros(lay.len(), bw, bw));

    // time derivative and potential equations
    let lap_rows: Vec<Vec<(usize, f64)>> = (0..nx).map(|j| laplacian_row(j, nx, h2)).collect();
    for j in 0..nx {
        for i in 0..m {
            res[lay.c(j, i)] += (c[i][j] - c_old[i][j]) / p.tau;
            let lap: f64 = lap_rows[j]
                .iter()
                .map(|&(k, a)| a * (c[i][k] - c[n - 1][k]))
                .sum();
            res[lay.w(j, i)] =
                w[i][j] - h_delta_prime(c[i][j], ent) + h_delta_prime(c[n - 1][j], ent) + lap;
        }
        if let Some(jac) = jac.as_mut() {
            let hn = h_delta_second(c[n - 1][j], ent);
            for i in 0..m {
                jac.add(lay.c(j, i), lay.c(j, i), 1.0 / p.tau);
                let row = lay.w(j, i);
                jac.add(row, lay.w(j, i), 1.0);
                jac.add(row, lay.c(j, i), -h_delta_second(c[i][j], ent));
                for l in 0..m {
                    jac.add(row, lay.c(j, l), -hn);
                }
                for &(k, a) in &lap_rows[j] {
                    for l in 0..m {
                        let factor = if l == i { 2.0 } else { 1.0 };
                        jac.add(row, lay.c(k, l), a * factor);
                    }
                }
            }
        }
    }

    // fluxes through interior faces
    let in_band = |v: f64| if (delta..=1.0 - delta).contains(&v) { 1.0 } else { 0.0 };
    let mut face = vec![0.0; n];
    for f in 0..nx - 1 {
        for (k, fk) in face.iter_mut().enumerate() {
            *fk = 0.5 * (c[k][f] + c[k][f + 1]);
        }
        let tw = truncate(&face, delta);
        let grad: Vec<f64> = (0..m).map(|k| (w[k][f + 1] - w[k][f]) / h).collect();
        let (b, db) = if with_jacobian {
            let (b, db) = model.mobility_with_derivatives(&tw)?;
            (b, Some(db))
        } else {
            (model.mobility_at(&tw)?, None)
        };
        for i in 0..m {
            let flux: f64 = (0..m).map(|k| b[(i, k)] * grad[k]).sum();
            res[lay.c(f, i)] -= flux / h;
            res[lay.c(f + 1, i)] += flux / h;
        }
        if let (Some(jac), Some(db)) = (jac.as_mut(), db) {
            let last = in_band(face[n - 1]);
            let dflux_dc: Vec<Vec<f64>> = (0..m)
                .map(|l| {
                    let dl = in_band(face[l]);
                    (0..m)
                        .map(|i| {
                            (0..m)
                                .map(|k| {
                                    (dl * db[l][(i, k)] - last * db[n - 1][(i, k)]) * grad[k]
                                })
                                .sum::<f64>()
                                * 0.5
                        })
                        .collect()
                })
                .collect();
            for i in 0..m {
                for (cell, sign) in [(f, -1.0), (f + 1, 1.0)] {
                    let row = lay.c(cell, i);
                    for k in 0..m {
                        let a = b[(i, k)] / h;
                        jac.add(row, lay.w(f + 1, k), sign * a / h);
                        jac.add(row, lay.w(f, k), -sign * a / h);
                    }
                    for (l, dfl) in dflux_dc.iter().enumerate() {
                        jac.add(row, lay.c(f, l), sign * dfl[i] / h);
                        jac.add(row, lay.c(f + 1, l), sign * dfl[i] / h);
                    }
                }
            }
        }
    }

    if p.eps > 0.0 {
        for i in 0..m {
            let bil = grid::bilaplacian(&w[i], g);
            for j in 0..nx {
                res[lay.c(j, i)] += p.eps * (bil[j] + w[i][j]);
            }
        }
        if let Some(jac) = jac.as_mut() {
            for j in 0..nx {
                let row = bilaplacian_row(j, nx, h2);
                for i in 0..m {
                    jac.add(lay.c(j, i), lay.w(j, i), p.eps);
                    for &(k, a) in &row {
                        jac.add(lay.c(j, i), lay.w(k, i), p.eps * a);
                    }
                }
            }
        }
    }
    Ok((res, jac))
}

/// Residual and analytic Jacobian of the step from `s_prev` at the iterate
/// `x_guess` (see [`pack`] for the layout).
pub fn assemble_newton_system(
    s_prev: &State,
    x_guess: &[f64],
    model: &FrictionModel,
    p: &SchemeParams,
    g: &Grid1D,
) -> Result<NewtonSystem> {
    let expected = g.nx() * 2 * (model.n() - 1);
    if x_guess.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x_guess.len(),
        });
    }
    let (residual, jac) = assemble(&s_prev.c, x_guess, model, p, g, true)?;
    Ok(NewtonSystem {
        jacobian: jac.expect("jacobian requested"),
        residual,
    })
}

/// Residual only.
pub fn newton_residual(
    s_prev: &State,
    x: &[f64],
    model: &FrictionModel,
    p: &SchemeParams,
    g: &Grid1D,
) -> Result<Vec<f64>> {
    assemble(&s_prev.c, x, model, p, g, false).map(|(r, _)| r)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| {
        if x.is_nan() || a.is_nan() {
            f64::NAN
        } else {
            a.max(x.abs())
        }
    })
}

/// Outcome of an accepted step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub state: State,
    pub iterations: usize,
    /// Residual infinity norms, one per Newton iterate.
    pub residuals: Vec<f64>,
    pub eps_used: f64,
}

/// One implicit Euler step with the regularization weight in `p`.
pub fn step(s: &State, model: &FrictionModel, p: &SchemeParams, g: &Grid1D) -> Result<StepReport> {
    p.validate()?;
    if s.n() != model.n() || s.nx() != g.nx() {
        return Err(Error::DimensionMismatch {
            expected: model.n() * g.nx(),
            got: s.n() * s.nx(),
        });
    }
    let n = model.n();
    let mut x = pack(&s.c[..n - 1], &s.w);
    let mut residuals = Vec::new();
    let mut res = newton_residual(s, &x, model, p, g)?;
    let mut rnorm = inf_norm(&res);
    let fail = |iterations: usize, residual: f64| Error::NewtonDivergence {
        iterations,
        residual,
        eps: p.eps,
    };
    for iter in 0..=p.newton_max_iter {
        residuals.push(rnorm);
        if rnorm.is_nan() {
            return Err(fail(iter, rnorm));
        }
        if rnorm <= p.newton_tol {
            let (c, w) = unpack(&x, n, g.nx());
            return Ok(StepReport {
                state: State {
                    c,
                    w,
                    t: s.t + p.tau,
                },
                iterations: iter,
                residuals,
                eps_used: p.eps,
            });
        }
        if iter == p.newton_max_iter {
            break;
        }
        let (_, jac) = assemble(&s.c, &x, model, p, g, true)?;
        let lu = jac
            .expect("jacobian requested")
            .factor()
            .map_err(|_| fail(iter, rnorm))?;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let dx = lu.solve(&rhs);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=p.line_search_max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            let r_trial = newton_residual(s, &trial, model, p, g)?;
            let norm = inf_norm(&r_trial);
            if norm < rnorm {
                accepted = Some((trial, r_trial, norm));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xt, rt, nt)) => {
                x = xt;
                res = rt;
                rnorm = nt;
            }
            None => return Err(fail(iter + 1, rnorm)),
        }
    }
    Err(fail(p.newton_max_iter, rnorm))
}

/// [`step`], retried with the regularization ladder `eps = e / h^2`,
/// `e` in [`EPS_LADDER`], when Newton fails.
pub fn step_with_retry(
    s: &State,
    model: &FrictionModel,
    p: &SchemeParams,
    g: &Grid1D,
) -> Result<StepReport> {
    let first = match step(s, model, p, g) {
        Ok(r) => return Ok(r),
        Err(e @ Error::NewtonDivergence { .. }) => e,
        Err(e) => return Err(e),
    };
    let mut last = first;
    let h2 = g.h() * g.h();
    for e in EPS_LADDER {
        let eps = e / h2;
        if eps <= p.eps {
            continue;
        }
        let retry = SchemeParams { eps, ..*p };
        match step(s, model, &retry, g) {
            Ok(r) => return Ok(r),
            Err(err @ Error::NewtonDivergence { .. }) => last = err,
            Err(err) => return Err(err),
        }
    }
    Err(last)
}
