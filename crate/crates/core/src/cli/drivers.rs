//! Experiment drivers behind the subcommands.

use std::path::Path;

use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use super::initial::{cosine_modes, initial_data};
use super::output::{fmt_f64, write_csv, write_final_state};
use crate::diagnostics::{self, lyapunov_constant, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid1D};
use crate::mobility::{sample_simplex, spectral_bounds, truncate, FrictionModel, ModelSpec};
use crate::scheme::{step_with_retry, SchemeParams, State};

/// Everything needed to advance one configured trajectory.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: RunConfig,
    pub model: FrictionModel,
    pub grid: Grid1D,
    pub params: SchemeParams,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let model = config.build_model()?;
        let grid = config.grid()?;
        let params = config.scheme_params(&model);
        params.validate()?;
        Ok(Self {
            config: config.clone(),
            model,
            grid,
            params,
        })
    }

    pub fn initial_state(&self) -> Result<State> {
        let c = initial_data(&self.config.initial, self.model.n(), &self.grid)?;
        State::new(c, self.params.delta, &self.grid)
    }

    pub fn c1(&self) -> Result<f64> {
        lyapunov_constant(&self.model, self.params.lambda)
    }

    pub fn report(&self, s: &State, iters: usize, eps: f64) -> Result<DiagnosticsReport> {
        DiagnosticsReport::compute(s, &self.model, &self.params, &self.grid, iters, eps)
    }

    /// Advances `state` by the configured number of steps, calling `observe`
    /// after every accepted step with the step index (from 1), the state,
    /// the Newton iteration count and the regularization used. On failure
    /// the last accepted state is returned alongside the error.
    pub fn integrate<F>(&self, mut state: State, mut observe: F) -> std::result::Result<State, (State, Error)>
    where
        F: FnMut(usize, &State, usize, f64) -> Result<()>,
    {
        for k in 1..=self.config.steps() {
            match step_with_retry(&state, &self.model, &self.params, &self.grid) {
                Ok(r) => {
                    state = r.state;
                    if let Err(e) = observe(k, &state, r.iterations, r.eps_used) {
                        return Err((state, e));
                    }
                }
                Err(e) => return Err((state, e)),
            }
        }
        Ok(state)
    }
}

/// Contents of `meta.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub config: RunConfig,
    pub lambda_m: f64,
    #[serde(rename = "lambda_M")]
    pub lambda_big_m: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub rho_certified: f64,
    pub version: String,
}

pub struct RunOutcome {
    pub trace: Vec<DiagnosticsReport>,
    pub final_state: State,
}

/// Runs a configuration and writes `trace.csv`, `final_state.csv` and
/// `meta.json` to `out`. After a Newton failure the trace so far and the last
/// accepted state are still written before the error is returned.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let sim = Simulation::new(config)?;
    std::fs::create_dir_all(out)?;
    let meta = Meta {
        config: config.clone(),
        lambda_m: sim.model.lambda_m(),
        lambda_big_m: sim.model.lambda_big_m(),
        c1: sim.c1()?,
        rho_certified: sim.model.rho(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let s0 = sim.initial_state()?;
    let n = sim.model.n();
    let stride = config.output.stride;
    let steps = config.steps();
    let mut trace = vec![sim.report(&s0, 0, 0.0)?];
    let result = sim.integrate(s0, |k, s, iters, eps| {
        if k % stride == 0 || k == steps {
            trace.push(sim.report(s, iters, eps)?);
        }
        Ok(())
    });
    let rows: Vec<String> = trace.iter().map(DiagnosticsReport::csv_row).collect();
    write_csv(&out.join("trace.csv"), &DiagnosticsReport::csv_header(n), &rows)?;
    let (state, err) = match result {
        Ok(s) => (s, None),
        Err((s, e)) => (s, Some(e)),
    };
    write_final_state(&out.join("final_state.csv"), &state, &sim.grid)?;
    match err {
        Some(e) => Err(e),
        None => Ok(RunOutcome {
            trace,
            final_state: state,
        }),
    }
}

fn parallel_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.iter().map(|item| scope.spawn(|| f(item))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    /// Max over time of `int max(0, -c_i)` per species.
    pub negativity: Vec<f64>,
    pub max_negativity: f64,
    /// `C / |log delta| - max_negativity`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Smallest `C` with `max_negativity <= C / |log delta|` for every row.
    pub fitted_c: f64,
    /// No negativity at any delta; the fit is meaningless.
    pub degenerate: bool,
}

/// Runs the configuration once per truncation parameter and fits the
/// negativity bound `C / |log delta|`.
pub fn sweep_delta(config: &RunConfig, deltas: &[f64]) -> Result<SweepReport> {
    if deltas.len() < 2 {
        return Err(Error::Config("sweep needs at least two delta values".into()));
    }
    let rows = parallel_map(deltas, |&delta| {
        let mut cfg = config.clone();
        cfg.scheme.delta = delta;
        let sim = Simulation::new(&cfg)?;
        let s0 = sim.initial_state()?;
        let mut worst = diagnostics::negativity(&s0.c, &sim.grid);
        sim.integrate(s0, |_, s, _, _| {
            for (w, v) in worst.iter_mut().zip(diagnostics::negativity(&s.c, &sim.grid)) {
                *w = w.max(v);
            }
            Ok(())
        })
        .map_err(|(_, e)| e)?;
        let max_negativity = worst.iter().copied().fold(0.0, f64::max);
        Ok(SweepRow {
            delta,
            negativity: worst,
            max_negativity,
            residual: 0.0,
        })
    })?;
    Ok(fit_negativity(rows))
}

/// Upper-envelope fit of `neg(delta) <= C / |log delta|`.
pub fn fit_negativity(mut rows: Vec<SweepRow>) -> SweepReport {
    let fitted_c = rows
        .iter()
        .map(|r| r.max_negativity * r.delta.ln().abs())
        .fold(0.0, f64::max);
    for r in rows.iter_mut() {
        r.residual = fitted_c / r.delta.ln().abs() - r.max_negativity;
    }
    SweepReport {
        degenerate: fitted_c == 0.0,
        rows,
        fitted_c,
    }
}

impl SweepReport {
    pub fn to_csv(&self, n: usize) -> (String, Vec<String>) {
        let mut header = vec!["delta".to_string()];
        header.extend((1..=n).map(|i| format!("neg_{i}")));
        header.extend(["neg_max", "C", "residual", "status"].map(String::from));
        let status = if self.degenerate { "no-negativity" } else { "ok" };
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut cols = vec![fmt_f64(r.delta)];
                cols.extend(r.negativity.iter().map(|&v| fmt_f64(v)));
                cols.push(fmt_f64(r.max_negativity));
                cols.push(fmt_f64(self.fitted_c));
                cols.push(fmt_f64(r.residual));
                cols.push(status.to_string());
                cols.join(",")
            })
            .collect();
        (header.join(","), rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakStrongRow {
    pub amplitude: f64,
    pub initial: f64,
    pub sup: f64,
    /// `sup / initial`; NaN when the initial value vanishes.
    pub c2: f64,
    /// `sup` of the previous row divided by this row's.
    pub ratio: f64,
}

/// Seed offset for the perturbation direction, so that it differs from the
/// base data's own modes.
const PERTURBATION_SEED: u64 = 0x9e37_79b9;

/// Compares the configured (base) trajectory with trajectories started from
/// `base + a phi` for each amplitude `a`, where `phi` is a fixed zero-sum
/// cosine perturbation with unit maximum.
pub fn weak_strong(config: &RunConfig, amplitudes: &[f64], min_base: f64) -> Result<Vec<WeakStrongRow>> {
    if amplitudes.is_empty() {
        return Err(Error::Config("at least one amplitude is required".into()));
    }
    let sim = Simulation::new(config)?;
    let g = sim.grid;
    let n = sim.model.n();
    let c1 = sim.c1()?;
    let base0 = sim.initial_state()?;
    let lowest = base0.c.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if lowest < min_base {
        return Err(Error::Config(format!(
            "base data must stay above {min_base}, minimum is {lowest}"
        )));
    }
    let mut base = vec![base0.clone()];
    sim.integrate(base0.clone(), |_, s, _, _| {
        base.push(s.clone());
        Ok(())
    })
    .map_err(|(_, e)| e)?;

    let phi = cosine_modes(n, &config.initial.wavenumbers, config.initial.seed ^ PERTURBATION_SEED, &g);
    let scale = phi.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    let phi: Vec<Field> = phi
        .into_iter()
        .map(|p| p.into_iter().map(|v| v / scale).collect())
        .collect();

    let sups = parallel_map(amplitudes, |&a| {
        let c: Vec<Field> = base0
            .c
            .iter()
            .zip(&phi)
            .map(|(ci, pi)| ci.iter().zip(pi).map(|(x, p)| x + a * p).collect())
            .collect();
        if c.iter().flatten().any(|v| *v < 0.0) {
            return Err(Error::Config(format!("amplitude {a} leaves the simplex")));
        }
        let s0 = State::new(c, sim.params.delta, &g)?;
        let initial = diagnostics::relative_functionals(&s0.c, &base[0].c, &g, c1, 0.0)?.rel_lyapunov;
        let mut sup = initial;
        sim.integrate(s0, |k, s, _, _| {
            let rel = diagnostics::relative_functionals(&s.c, &base[k].c, &g, c1, s.t)?;
            sup = sup.max(rel.rel_lyapunov);
            Ok(())
        })
        .map_err(|(_, e)| e)?;
        Ok((initial, sup))
    })?;

    let mut rows: Vec<WeakStrongRow> = Vec::with_capacity(amplitudes.len());
    for (&a, (initial, sup)) in amplitudes.iter().zip(sups) {
        let ratio = rows.last().map_or(f64::NAN, |prev| prev.sup / sup);
        rows.push(WeakStrongRow {
            amplitude: a,
            initial,
            sup,
            c2: if initial > 0.0 { sup / initial } else { f64::NAN },
            ratio,
        });
    }
    Ok(rows)
}

pub fn weak_strong_csv(rows: &[WeakStrongRow]) -> (String, Vec<String>) {
    let header = "amplitude,rel_lyapunov_0,sup_rel_lyapunov,C2,ratio".to_string();
    let body = rows
        .iter()
        .map(|r| {
            [r.amplitude, r.initial, r.sup, r.c2, r.ratio]
                .map(fmt_f64)
                .join(",")
        })
        .collect();
    (header, body)
}

/// Worst case of one sampled identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub composition: Vec<f64>,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            worst: 0.0,
            tolerance,
            composition: vec![],
        }
    }

    fn record(&mut self, value: f64, c: &[f64]) {
        if value > self.worst || value.is_nan() {
            self.worst = value;
            self.composition = c.to_vec();
        }
    }

    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub seed: u64,
    pub rho: f64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

/// Truncation parameters for the reduced-mobility floor check.
pub const FLOOR_DELTAS: [f64; 2] = [1e-1, 1e-2];

fn max_abs<'a>(it: impl IntoIterator<Item = &'a f64>) -> f64 {
    it.into_iter().fold(0.0_f64, |a, v| if v.is_nan() { f64::NAN } else { a.max(v.abs()) })
}

/// Monte-Carlo check of the matrix identities at random interior
/// compositions. Each check reports a nonnegative defect; zero or below the
/// tolerance passes.
pub fn verify_matrices(spec: &ModelSpec, samples: usize, seed: u64) -> Result<VerifyReport> {
    let model = spec.build()?;
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solve = CheckResult::new("bott_duffin_solve", 1e-10);
    let mut kernel = CheckResult::new("kernel", 1e-12);
    let mut symmetry = CheckResult::new("symmetry", 1e-12);
    let mut spectrum = CheckResult::new("spectral_bounds", 1e-10);
    let mut row_sum = CheckResult::new("row_sum", 1e-12);
    let mut floor = CheckResult::new("reduced_floor", 0.0);
    for _ in 0..samples {
        let c = sample_simplex(&mut rng, n);
        let asm = model.assembly(&c)?;
        let proj = model.projections_at(&c);
        let y = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0)));
        let z = &proj.p_l * y;
        let back = &asm.d_bd * (&asm.d * &z);
        solve.record(max_abs((back - &z).iter()), &c);
        let root = DVector::from_iterator(n, model.weights(&c).into_iter().map(f64::sqrt));
        kernel.record(max_abs((&asm.d_bd * root).iter()), &c);
        symmetry.record(max_abs((&asm.d_bd - asm.d_bd.transpose()).iter()), &c);
        let defect = match spectral_bounds(&model, &c) {
            Ok(_) => 0.0,
            Err(Error::Certification {
                eigenvalue,
                lower,
                upper,
                ..
            }) => (lower - eigenvalue).max(eigenvalue - upper),
            Err(e) => return Err(e),
        };
        spectrum.record(defect, &c);
        row_sum.record(max_abs(asm.b.row_iter().map(|r| r.sum()).collect::<Vec<_>>().iter()), &c);
        for delta in FLOOR_DELTAS {
            let (lowest, eta) = reduced_floor(&model, &c, delta)?;
            floor.record(eta - lowest, &c);
        }
    }
    Ok(VerifyReport {
        samples,
        seed,
        rho: model.rho(),
        checks: vec![solve, kernel, symmetry, spectrum, row_sum, floor],
    })
}

/// Smallest eigenvalue of the reduced truncated mobility at `c` and the
/// floor `lambda_m delta^2 / n`, with `lambda_m` evaluated at `chi c`.
pub fn reduced_floor(model: &FrictionModel, c: &[f64], delta: f64) -> Result<(f64, f64)> {
    let n = model.n();
    let tc = truncate(c, delta);
    let b = model.mobility_at(&tc)?;
    let reduced = b.view((0, 0), (n - 1, n - 1)).into_owned();
    let lowest = SymmetricEigen::new((&reduced + reduced.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let lambda_m = 1.0 / (1.0 + n as f64 * model.friction_matrix(&tc)?.norm());
    Ok((lowest, lambda_m * delta * delta / n as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineRow {
    pub dt: f64,
    /// L2 distance at the final time to the next finer run.
    pub difference: f64,
    /// Observed order from consecutive differences.
    pub order: f64,
}

/// Runs the configuration once per time step and estimates the temporal
/// order from successive differences. The steps must form a geometric
/// sequence.
pub fn dt_refine(config: &RunConfig, dts: &[f64]) -> Result<Vec<RefineRow>> {
    if dts.len() < 3 {
        return Err(Error::Config("dt refinement needs at least three steps".into()));
    }
    let ratio = dts[0] / dts[1];
    if !(ratio > 1.0) || dts.windows(2).any(|w| ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-9) {
        return Err(Error::Config(format!("dts {dts:?} are not a decreasing geometric sequence")));
    }
    let finals = parallel_map(dts, |&dt| {
        let mut cfg = config.clone();
        cfg.time.dt = dt;
        let sim = Simulation::new(&cfg)?;
        let s0 = sim.initial_state()?;
        let end = sim.integrate(s0, |_, _, _, _| Ok(())).map_err(|(_, e)| e)?;
        Ok((end, sim.grid))
    })?;
    let diffs: Vec<f64> = finals
        .windows(2)
        .map(|w| l2_distance(&w[0].0.c, &w[1].0.c, &w[0].1))
        .collect();
    Ok(dts
        .iter()
        .enumerate()
        .map(|(k, &dt)| RefineRow {
            dt,
            difference: diffs.get(k).copied().unwrap_or(f64::NAN),
            order: if k + 1 < diffs.len() {
                (diffs[k] / diffs[k + 1]).ln() / ratio.ln()
            } else {
                f64::NAN
            },
        })
        .collect())
}

/// `(sum_i int (a_i - b_i)^2)^{1/2}`.
pub fn l2_distance(a: &[Field], b: &[Field], g: &Grid1D) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            grid::inner(&d, &d, g).unwrap_or(f64::NAN)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn refine_csv(rows: &[RefineRow]) -> (String, Vec<String>) {
    let body = rows
        .iter()
        .map(|r| [r.dt, r.difference, r.order].map(fmt_f64).join(","))
        .collect();
    ("dt,l2_difference,observed_order".to_string(), body)
}
