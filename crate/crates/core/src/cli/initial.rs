//! Initial compositions.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{InitialConfig, InitialKind};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};

/// Builds `n` nonnegative fields summing to one in every cell.
pub fn initial_data(cfg: &InitialConfig, n: usize, g: &Grid1D) -> Result<Vec<Field>> {
    match cfg.kind {
        InitialKind::PerturbedUniform => Ok(perturbed_uniform(
            n,
            cfg.amplitude,
            &cfg.wavenumbers,
            cfg.seed,
            g,
        )),
        InitialKind::TanhInterface => tanh_interface(n, cfg.amplitude, g),
        InitialKind::CustomCsv => {
            let path = cfg
                .path
                .as_deref()
                .ok_or_else(|| Error::Config("initial.path is required for custom_csv".into()))?;
            read_composition_csv(path, n, g)
        }
    }
}

/// Zero-sum cosine modes `phi_i = sum_m alpha_im cos(m pi x / L) - mean_i`
/// with `alpha_im` uniform in `[-1, 1]`.
pub fn cosine_modes(n: usize, wavenumbers: &[u32], seed: u64, g: &Grid1D) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha: Vec<Vec<f64>> = (0..n)
        .map(|_| wavenumbers.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let xs = g.cell_centers();
    let l = g.length();
    let mut phi: Vec<Field> = alpha
        .iter()
        .map(|a| {
            xs.iter()
                .map(|x| {
                    wavenumbers
                        .iter()
                        .zip(a)
                        .map(|(&m, am)| am * (m as f64 * PI * x / l).cos())
                        .sum()
                })
                .collect()
        })
        .collect();
    for j in 0..g.nx() {
        let mean = phi.iter().map(|p| p[j]).sum::<f64>() / n as f64;
        for p in phi.iter_mut() {
            p[j] -= mean;
        }
    }
    phi
}

/// `1/n + a phi_i`, clipped at zero and renormalized cellwise.
pub fn perturbed_uniform(
    n: usize,
    amplitude: f64,
    wavenumbers: &[u32],
    seed: u64,
    g: &Grid1D,
) -> Vec<Field> {
    let phi = cosine_modes(n, wavenumbers, seed, g);
    let mut c: Vec<Field> = phi
        .iter()
        .map(|p| p.iter().map(|v| (1.0 / n as f64 + amplitude * v).max(0.0)).collect())
        .collect();
    normalize(&mut c);
    c
}

fn normalize(c: &mut [Field]) {
    for j in 0..c[0].len() {
        let total: f64 = c.iter().map(|ci| ci[j]).sum();
        for ci in c.iter_mut() {
            ci[j] /= total;
        }
    }
}

/// Two dominant species separated by a tanh front of width `4h` at the
/// domain centre; species `3..n` share the background fraction equally.
pub fn tanh_interface(n: usize, background: f64, g: &Grid1D) -> Result<Vec<Field>> {
    if !(0.0..1.0).contains(&background) || (n == 2 && background != 0.0) {
        return Err(Error::Config(format!(
            "interface background must lie in [0, 1) and vanish for two species, got {background}"
        )));
    }
    let width = 4.0 * g.h();
    let mid = 0.5 * g.length();
    let rest = if n > 2 { background / (n - 2) as f64 } else { 0.0 };
    let mut c = vec![vec![0.0; g.nx()]; n];
    for (j, x) in g.cell_centers().into_iter().enumerate() {
        let psi = 0.5 * (1.0 + ((x - mid) / width).tanh());
        c[0][j] = (1.0 - background) * (1.0 - psi);
        c[1][j] = (1.0 - background) * psi;
        for ci in c.iter_mut().skip(2) {
            ci[j] = rest;
        }
    }
    Ok(c)
}

/// Reads `x, c_1, ..., c_n` rows; the first line is a header.
pub fn read_composition_csv(path: &Path, n: usize, g: &Grid1D) -> Result<Vec<Field>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut c = vec![Vec::with_capacity(g.nx()); n];
    for record in reader.records() {
        let record = record.map_err(|e| Error::Config(e.to_string()))?;
        if record.len() != n + 1 {
            return Err(Error::Config(format!(
                "expected {} columns, found {}",
                n + 1,
                record.len()
            )));
        }
        for (i, ci) in c.iter_mut().enumerate() {
            let v: f64 = record[i + 1]
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad number {:?}: {e}", &record[i + 1])))?;
            ci.push(v);
        }
    }
    if c[0].len() != g.nx() {
        return Err(Error::Config(format!(
            "initial data has {} rows, grid has {} cells",
            c[0].len(),
            g.nx()
        )));
    }
    for j in 0..g.nx() {
        let total: f64 = c.iter().map(|ci| ci[j]).sum();
        if c.iter().any(|ci| ci[j] < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::Config(format!("row {j} is not a composition")));
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_simplex(c: &[Field]) {
        for j in 0..c[0].len() {
            let total: f64 = c.iter().map(|ci| ci[j]).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!(c.iter().all(|ci| ci[j] >= 0.0));
        }
    }

    #[test]
    fn perturbed_uniform_is_a_composition() {
        let g = Grid1D::new(40, 2.0).unwrap();
        for a in [0.0, 0.1, 2.0] {
            let c = perturbed_uniform(4, a, &[1, 2, 5], 7, &g);
            assert_simplex(&c);
        }
        let flat = perturbed_uniform(3, 0.0, &[1], 1, &g);
        assert!(flat.iter().flatten().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn perturbed_uniform_is_seeded() {
        let g = Grid1D::new(16, 1.0).unwrap();
        let a = perturbed_uniform(3, 0.1, &[1, 2], 42, &g);
        assert_eq!(a, perturbed_uniform(3, 0.1, &[1, 2], 42, &g));
        assert_ne!(a, perturbed_uniform(3, 0.1, &[1, 2], 43, &g));
    }

    #[test]
    fn tanh_interface_profile() {
        let g = Grid1D::new(64, 1.0).unwrap();
        let c = tanh_interface(3, 0.1, &g).unwrap();
        assert_simplex(&c);
        assert!(c[0][0] > 0.89 && c[1][63] > 0.89);
        assert!(c[2].iter().all(|v| (v - 0.1).abs() < 1e-15));
        assert!(tanh_interface(2, 0.1, &g).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid1D::new(8, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut text = String::from("x,c_1,c_2\n");
        for (j, x) in g.cell_centers().iter().enumerate() {
            let v = 0.1 * j as f64;
            text.push_str(&format!("{x},{v},{}\n", 1.0 - v));
        }
        std::fs::write(&path, text).unwrap();
        let c = read_composition_csv(&path, 2, &g).unwrap();
        assert_eq!(c[0][3], 0.30000000000000004);
        assert!(read_composition_csv(&path, 3, &g).is_err());
    }
}
