//! Binds the expansion solvers to the oracle: band comparisons, residual
//! sweeps, bandwidth scaling fits, finite-size stability of the Fourier
//! coefficients, and the pass/fail report used by the `verify` command.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::droplet::{one_magnon_dispersion, relative_residual, solve_droplet, DropletParams, DropletSolution};
use crate::error::{invalid, Error, Result};
use crate::oracle::{build_periodic_blocks, lowest_band, periodic_hamiltonian, SectorBasis};

/// Comparison tolerance from the truncation error model:
/// `10 (K|ε|)^{w_max + 1}`, floored at `1e-12`.
pub fn tolerance(p: &DropletParams) -> f64 {
    (10.0 * (p.weight_k * p.epsilon.abs()).powi(p.w_max as i32 + 1)).max(1e-12)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub k_index: usize,
    pub k: f64,
    pub e_expansion: f64,
    pub e_oracle_min: f64,
    pub e_oracle_second: Option<f64>,
    pub abs_diff: f64,
    /// 1-based position of the block eigenvalue closest to the expansion value.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub params: DropletParams,
    pub rows: Vec<ComparisonRow>,
    /// `|E_expansion(k) - lowest eigenvalue of block k|`, maximised over k.
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub bandwidth_expansion: f64,
    pub bandwidth_oracle: f64,
    /// Smallest gap between the two lowest levels of any block.
    pub min_gap: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ComparisonReport {
    pub fn rank_at(&self, k_index: usize) -> usize {
        self.rows[k_index].rank
    }
}

/// Solves the droplet expansion and compares `E(k)` with the lowest level
/// of each momentum block.
pub fn compare_droplet_band(p: &DropletParams, cap: usize) -> Result<ComparisonReport> {
    let solution = solve_droplet(p.clone())?;
    compare_solution(&solution, cap)
}

pub fn compare_solution(solution: &DropletSolution, cap: usize) -> Result<ComparisonReport> {
    let p = solution.system.params().clone();
    let dispersion = solution.dispersion()?;
    let blocks = build_periodic_blocks(p.sites, p.down, p.epsilon, cap, false)?;
    let band = lowest_band(&blocks);
    let rows: Vec<ComparisonRow> = dispersion
        .samples
        .iter()
        .zip(&blocks)
        .map(|(s, b)| {
            let rank = 1 + b
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - s.energy).abs().total_cmp(&(y.1 - s.energy).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            ComparisonRow {
                k_index: s.k_index,
                k: s.k,
                e_expansion: s.energy,
                e_oracle_min: b.eigenvalues[0],
                e_oracle_second: b.eigenvalues.get(1).copied(),
                abs_diff: (s.energy - b.eigenvalues[0]).abs(),
                rank,
            }
        })
        .collect();
    Ok(ComparisonReport {
        max_abs_diff: rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max),
        tolerance: tolerance(&p),
        bandwidth_expansion: dispersion.bandwidth,
        bandwidth_oracle: band.width,
        min_gap: band.min_gap,
        iterations: solution.iterations,
        residual: solution.residual,
        params: p,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandSource {
    Oracle,
    Expansion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub epsilons: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Least-squares slope of `ln(bandwidth)` against `ln(ε)`.
    pub slope: f64,
    pub intercept: f64,
}

/// Bandwidth of the lowest band at `template`'s `(N, m)` for each `ε`, and
/// the log-log slope.
pub fn bandwidth_scaling(template: &DropletParams, epsilons: &[f64], source: BandSource, cap: usize) -> Result<ScalingFit> {
    if epsilons.len() < 3 {
        return invalid(format!("a scaling fit needs at least 3 couplings, got {}", epsilons.len()));
    }
    if epsilons.iter().any(|&e| !e.is_finite() || e <= 0.0) {
        return invalid("couplings for a scaling fit must be positive");
    }
    let mut bandwidths = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let bw = match source {
            BandSource::Oracle => lowest_band(&build_periodic_blocks(template.sites, template.down, eps, cap, false)?).width,
            BandSource::Expansion if template.down == 1 => one_magnon_dispersion(template.sites, eps, cap)?.bandwidth,
            BandSource::Expansion => {
                let p = DropletParams { epsilon: eps, ..template.clone() };
                solve_droplet(p)?.dispersion()?.bandwidth
            }
        };
        if !bw.is_finite() || bw <= 0.0 {
            return Err(Error::DegenerateFit(format!("bandwidth {bw:e} at ε = {eps}")));
        }
        bandwidths.push(bw);
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = bandwidths.iter().map(|b| b.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys)?;
    Ok(ScalingFit { epsilons: epsilons.to_vec(), bandwidths, slope, intercept })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all couplings are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub per_k: Vec<(usize, f64)>,
    pub max: f64,
}

/// `max_k ||HΨ_k - E(k)Ψ_k|| / ||Ψ_k||` over the requested momenta.
pub fn residual_sweep(solution: &DropletSolution, k_indices: &[usize], cap: usize) -> Result<ResidualSweep> {
    let p = solution.system.params();
    let basis = SectorBasis::new(p.sites, p.down, cap)?;
    let h = periodic_hamiltonian(&basis, p.epsilon);
    let dispersion = solution.dispersion()?;
    let mut per_k = Vec::with_capacity(k_indices.len());
    for &j in k_indices {
        if j >= p.sites {
            return invalid(format!("k index {j} out of range for N = {}", p.sites));
        }
        let psi = crate::droplet::assemble_eigenvector(&solution.system, &solution.coefficients, j, cap)?;
        per_k.push((j, relative_residual(&h.apply(&psi), &psi, dispersion.samples[j].energy)));
    }
    let max = per_k.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(ResidualSweep { per_k, max })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierStability {
    pub sizes: Vec<usize>,
    pub orders: Vec<usize>,
    /// `e_n` for each size (rows) and requested order (columns).
    pub values: Vec<Vec<f64>>,
    /// `|e_n(N_{i+1}) - e_n(N_i)|` for consecutive sizes.
    pub differences: Vec<Vec<f64>>,
    /// Largest `|e_n - e_{N-n}|` over all sizes and all n.
    pub reflection_defect: f64,
    pub nonincreasing: bool,
}

/// Finite-size behaviour of the low Fourier coefficients; expansion only.
pub fn fourier_stability(down: usize, epsilon: f64, w_max: usize, sizes: &[usize], orders: &[usize]) -> Result<FourierStability> {
    if sizes.len() < 2 {
        return invalid("need at least two chain lengths");
    }
    let mut values = Vec::with_capacity(sizes.len());
    let mut reflection_defect: f64 = 0.0;
    for &n in sizes {
        if let Some(&bad) = orders.iter().find(|&&o| o == 0 || o > n) {
            return invalid(format!("Fourier order {bad} out of range for N = {n}"));
        }
        let sol = solve_droplet(DropletParams::new(n, down, epsilon).with_w_max(w_max))?;
        let f = &sol.coefficients.fourier;
        for i in 1..n {
            reflection_defect = reflection_defect.max((f[i - 1] - f[n - i - 1]).abs());
        }
        values.push(orders.iter().map(|&o| f[o - 1]).collect::<Vec<f64>>());
    }
    let differences: Vec<Vec<f64>> = values.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).collect()).collect();
    let nonincreasing = (0..orders.len()).all(|c| differences.windows(2).all(|d| d[1][c] <= d[0][c]));
    Ok(FourierStability { sizes: sizes.to_vec(), orders: orders.to_vec(), values, differences, reflection_defect, nonincreasing })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub status: Status,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub comparison: ComparisonReport,
    pub residuals: Option<ResidualSweep>,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let c = &self.comparison;
        let _ = writeln!(
            out,
            "droplet band: N={} m={} eps={} w_max={} K={}  ({} iterations, residual {:.2e})",
            c.params.sites, c.params.down, c.params.epsilon, c.params.w_max, c.params.weight_k, c.iterations, c.residual
        );
        let _ = writeln!(out, "{:>3} {:>9} {:>20} {:>20} {:>10} {:>4}", "j", "k", "E_expansion", "E_oracle", "abs_diff", "rank");
        for r in &c.rows {
            let _ = writeln!(
                out,
                "{:>3} {:>9.6} {:>20.15} {:>20.15} {:>10.2e} {:>4}",
                r.k_index, r.k, r.e_expansion, r.e_oracle_min, r.abs_diff, r.rank
            );
        }
        let _ = writeln!(out);
        for chk in &self.checks {
            let tag = match chk.status {
                Status::Pass => "PASS",
                Status::Warn => "WARN",
                Status::Fail => "FAIL",
            };
            let _ = writeln!(out, "{tag} {:<24} value={:.3e} threshold={:.3e} {}", chk.name, chk.value, chk.threshold, chk.note);
        }
        out
    }
}

/// Comparison, residual sweep and the derived pass/fail checks.
pub fn verify(p: &DropletParams, k_indices: Option<&[usize]>, cap: usize) -> Result<VerificationReport> {
    let solution = solve_droplet(p.clone())?;
    let comparison = compare_solution(&solution, cap)?;
    let all: Vec<usize> = (0..p.sites).collect();
    let ks = k_indices.unwrap_or(&all);
    let residuals = residual_sweep(&solution, ks, cap)?;
    let tol = comparison.tolerance;

    let status = |ok: bool| if ok { Status::Pass } else { Status::Fail };
    let mut checks = vec![
        Check {
            name: "max_abs_diff".into(),
            value: comparison.max_abs_diff,
            threshold: tol,
            status: status(comparison.max_abs_diff <= tol),
            note: "expansion vs lowest block level".into(),
        },
        Check {
            name: "max_eigen_residual".into(),
            value: residuals.max,
            threshold: tol,
            status: status(residuals.max <= tol),
            note: format!("over {} momenta", residuals.per_k.len()),
        },
    ];
    let worst_rank = comparison.rows.iter().filter(|r| r.k_index != 0).map(|r| r.rank).max().unwrap_or(1);
    checks.push(Check {
        name: "rank_k_nonzero".into(),
        value: worst_rank as f64,
        threshold: 1.0,
        status: status(worst_rank == 1),
        note: "expansion value is the lowest level for every k != 0".into(),
    });
    let k0 = comparison.rank_at(0);
    checks.push(Check {
        name: "rank_k_zero".into(),
        value: k0 as f64,
        threshold: 2.0,
        status: if k0 <= 2 { Status::Pass } else { Status::Warn },
        note: format!("observed rank {k0} at k = 0 (lowest or second lowest allowed)"),
    });
    let fourier = &solution.coefficients.fourier;
    let n = fourier.len();
    let reflection = (1..n).map(|i| (fourier[i - 1] - fourier[n - i - 1]).abs()).fold(0.0, f64::max);
    checks.push(Check {
        name: "reflection_symmetry".into(),
        value: reflection,
        threshold: 1e-12,
        status: status(reflection <= 1e-12),
        note: "e_n = e_{N-n}".into(),
    });
    Ok(VerificationReport { comparison, residuals: Some(residuals), checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::DEFAULT_SECTOR_CAP;

    #[test]
    fn unperturbed_comparison_is_exact() {
        let report = compare_droplet_band(&DropletParams::new(8, 3, 0.0).with_w_max(4), DEFAULT_SECTOR_CAP).unwrap();
        assert!(report.rows.iter().all(|r| r.abs_diff == 0.0));
        assert_eq!(report.bandwidth_oracle, 0.0);
    }

    #[test]
    fn scaling_needs_three_points() {
        let p = DropletParams::new(8, 2, 0.05);
        assert!(bandwidth_scaling(&p, &[0.01, 0.02], BandSource::Oracle, DEFAULT_SECTOR_CAP).is_err());
        assert!(bandwidth_scaling(&p, &[0.0, 0.01, 0.02], BandSource::Oracle, DEFAULT_SECTOR_CAP).is_err());
    }

    #[test]
    fn single_magnon_scaling_is_linear() {
        let p = DropletParams::new(8, 1, 0.05);
        let fit = bandwidth_scaling(&p, &[0.01, 0.02, 0.04], BandSource::Expansion, DEFAULT_SECTOR_CAP).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-10);
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (s, c) = least_squares(&xs, &ys).unwrap();
        assert!((s - 2.5).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
        assert!(least_squares(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn tolerance_model() {
        let p = DropletParams::new(10, 3, 0.05);
        assert!((tolerance(&p) - 10.0 * 0.5f64.powi(8)).abs() < 1e-15);
        assert_eq!(tolerance(&DropletParams::new(10, 3, 0.0)), 1e-12);
    }

    #[test]
    fn report_renders_every_check() {
        let report = verify(&DropletParams::new(8, 2, 0.04).with_w_max(6), None, DEFAULT_SECTOR_CAP).unwrap();
        let text = report.render_text();
        for c in &report.checks {
            assert!(text.contains(&c.name));
        }
        assert!(!report.failed(), "{text}");
    }
}
