use nalgebra::{Complex, DMatrix};
use xxz_droplet::oracle::{build_periodic_blocks, open_spectrum, periodic_sector_spectrum, symmetric_spectrum, DEFAULT_SECTOR_CAP};
use xxz_droplet::verification::{compare_droplet_band, residual_sweep};
use xxz_droplet::{solve_droplet, solve_kink, DropletParams, KinkParams};

type C = Complex<f64>;

const CAP: usize = DEFAULT_SECTOR_CAP;

fn pauli() -> [DMatrix<C>; 4] {
    let c = |re: f64, im: f64| C::new(re, im);
    [
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    ]
}

/// Product of single-site operators on the full 2^N space; site 1 is the
/// most significant factor and spin down is the second basis state.
fn site_product(sites: usize, ops: &[(usize, &DMatrix<C>)]) -> DMatrix<C> {
    let id = DMatrix::<C>::identity(2, 2);
    let mut out = DMatrix::<C>::identity(1, 1);
    for j in 1..=sites {
        let factor = ops.iter().find(|(s, _)| *s == j).map_or(&id, |(_, op)| *op);
        out = out.kronecker(factor);
    }
    out
}

/// `Σ_bonds [1 - σzσz - ε(σxσx + σyσy)]` plus optional boundary fields,
/// written literally with Kronecker products.
fn pauli_hamiltonian(sites: usize, eps: f64, periodic: bool, fields: Option<(f64, f64)>) -> DMatrix<C> {
    let [_, sx, sy, sz] = pauli();
    let dim = 1 << sites;
    let mut h = DMatrix::<C>::zeros(dim, dim);
    let bonds = if periodic { sites } else { sites - 1 };
    for j in 1..=bonds {
        let k = j % sites + 1;
        h += DMatrix::<C>::identity(dim, dim);
        h -= site_product(sites, &[(j, &sz), (k, &sz)]);
        h -= site_product(sites, &[(j, &sx), (k, &sx)]) * C::new(eps, 0.0);
        h -= site_product(sites, &[(j, &sy), (k, &sy)]) * C::new(eps, 0.0);
    }
    if let Some((a, b)) = fields {
        let full = DMatrix::<C>::identity(dim, dim);
        h += (&full + site_product(sites, &[(1, &sz)])) * C::new(a, 0.0);
        h += (&full - site_product(sites, &[(sites, &sz)])) * C::new(b, 0.0);
    }
    h
}

fn sector_spectrum(h: &DMatrix<C>, down: usize) -> Vec<f64> {
    let idx: Vec<usize> = (0..h.nrows()).filter(|i| i.count_ones() as usize == down).collect();
    let sub = DMatrix::<C>::from_fn(idx.len(), idx.len(), |r, c| h[(idx[r], idx[c])]);
    let imag = sub.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    assert!(imag < 1e-14, "sector block has imaginary part {imag}");
    symmetric_spectrum(sub.map(|v| v.re))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn open_oracle_matches_pauli_form() {
    for (sites, down, a, b) in [(7, 3, 1.0, 1.0), (8, 4, 1.5, 2.0)] {
        let h = pauli_hamiltonian(sites, 0.1, false, Some((a, b)));
        let literal = sector_spectrum(&h, down);
        let oracle = open_spectrum(sites, down, 0.1, a, b, CAP).unwrap();
        assert!(max_diff(&literal, &oracle) < 1e-12);
    }
}

#[test]
fn ring_oracle_matches_pauli_form_on_even_rings() {
    let h = pauli_hamiltonian(8, 0.1, true, None);
    for down in 1..4 {
        let literal = sector_spectrum(&h, down);
        let oracle = periodic_sector_spectrum(8, down, 0.1, CAP).unwrap();
        assert!(max_diff(&literal, &oracle) < 1e-12, "down = {down}");
    }
}

#[test]
fn odd_ring_oracle_matches_pauli_form_with_reversed_coupling() {
    let plus = pauli_hamiltonian(7, 0.1, true, None);
    let minus = pauli_hamiltonian(7, -0.1, true, None);
    for down in 1..4 {
        let oracle = periodic_sector_spectrum(7, down, 0.1, CAP).unwrap();
        assert!(max_diff(&sector_spectrum(&minus, down), &oracle) < 1e-12);
        // The one-magnon band 4 ± 4ε cos k is not symmetric on odd rings.
        if down == 1 {
            assert!(max_diff(&sector_spectrum(&plus, down), &oracle) > 1e-3);
        }
    }
}

#[test]
fn kink_energy_is_second_order() {
    let ratio = |eps: f64| solve_kink(KinkParams::new(10, 5, eps)).unwrap().coefficients.shift / (eps * eps);
    let r: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&e| ratio(e)).collect();
    let err: Vec<f64> = r.iter().map(|v| (v + 1.0).abs()).collect();
    assert!(err[0] > err[1] && err[1] > err[2], "{r:?}");
    // Corrections are O(ε), so one Richardson step removes them.
    let extrapolated = 2.0 * r[2] - r[1];
    assert!((extrapolated + 1.0).abs() < 1e-3, "{extrapolated}");
}

#[test]
fn kink_matches_oracle_with_unequal_fields() {
    let mut p = KinkParams::new(10, 4, 0.04).with_w_max(10);
    p.field_a = 1.3;
    p.field_b = 2.5;
    let sol = solve_kink(p).unwrap();
    let exact = open_spectrum(10, 4, 0.04, 1.3, 2.5, CAP).unwrap()[0];
    assert!((sol.energy() - exact).abs() < 1e-12);
}

#[test]
fn kink_residual_shrinks_with_truncation_order() {
    let res: Vec<f64> =
        [3, 5, 7].iter().map(|&w| solve_kink(KinkParams::new(10, 5, 0.05).with_w_max(w)).unwrap().eigen_residual(CAP).unwrap()).collect();
    assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
}

#[test]
fn droplet_residual_shrinks_with_truncation_order() {
    let all: Vec<usize> = (0..9).collect();
    let res: Vec<f64> = [3, 5, 7]
        .iter()
        .map(|&w| {
            let sol = solve_droplet(DropletParams::new(9, 3, 0.05).with_w_max(w)).unwrap();
            residual_sweep(&sol, &all, CAP).unwrap().max
        })
        .collect();
    assert!(res[0] > res[1] && res[1] > res[2], "{res:?}");
}

#[test]
fn droplet_residual_is_uniform_in_momentum() {
    let sol = solve_droplet(DropletParams::new(10, 3, 0.05).with_w_max(5)).unwrap();
    let sweep = residual_sweep(&sol, &(0..10).collect::<Vec<_>>(), CAP).unwrap();
    let min = sweep.per_k.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    assert!(sweep.max <= 10.0 * min, "{:?}", sweep.per_k);
}

#[test]
fn droplet_band_matches_oracle_on_other_rings() {
    for (sites, down) in [(8, 2), (9, 2), (9, 4), (11, 3)] {
        let p = DropletParams::new(sites, down, 0.04);
        let report = compare_droplet_band(&p, CAP).unwrap();
        assert!(report.max_abs_diff < 1e-8, "N={sites} m={down}: {}", report.max_abs_diff);
    }
}

#[test]
fn hopping_amplitude_scales_as_power_of_coupling() {
    // e_1 is the amplitude for moving the droplet by one site, which needs
    // m flips; e_1 / ε^m must settle to a constant as ε -> 0.
    for down in [2usize, 3] {
        let ratio = |eps: f64| {
            let sol = solve_droplet(DropletParams::new(10, down, eps)).unwrap();
            sol.coefficients.e_n(1) / eps.powi(down as i32)
        };
        let (a, b) = (ratio(0.02), ratio(0.01));
        assert!(a.abs() > 0.0 && ((a - b) / b).abs() < 0.1, "m={down}: {a} vs {b}");
    }
}

#[test]
fn bandwidth_from_expansion_and_oracle_agree() {
    let p = DropletParams::new(10, 3, 0.04);
    let sol = solve_droplet(p).unwrap();
    let expansion = sol.dispersion().unwrap().bandwidth;
    let blocks = build_periodic_blocks(10, 3, 0.04, CAP, false).unwrap();
    let lows: Vec<f64> = blocks.iter().map(|b| b.eigenvalues[0]).collect();
    let oracle = lows.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lows.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((expansion - oracle).abs() <= 1e-6 * oracle, "{expansion} vs {oracle}");
}

#[test]
fn bandwidth_over_cube_of_coupling_is_bracketed() {
    let scaled = |eps: f64| {
        let blocks = build_periodic_blocks(10, 3, eps, CAP, false).unwrap();
        let lows: Vec<f64> = blocks.iter().map(|b| b.eigenvalues[0]).collect();
        let width = lows.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lows.iter().cloned().fold(f64::INFINITY, f64::min);
        width / eps.powi(3)
    };
    let (a, b) = (scaled(0.05), scaled(0.025));
    assert!(a > 0.0 && b > 0.0);
    assert!((0.5..2.0).contains(&(a / b)), "{a} vs {b}");
}
