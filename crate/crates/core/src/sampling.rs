//! Random grids and fields for the property battery.

use rand::Rng;

use crate::grid::{build_grid, Grid, ScalarField, VectorField};
use crate::mweight::MatrixField;
use crate::vxnorm::ExponentField;

/// 1D with 8..=64 cells or 2D with 4..=16 cells per axis, on a random box.
pub fn random_grid<R: Rng>(rng: &mut R) -> Grid {
    let a0 = rng.random_range(-1.0..1.0);
    let l0 = rng.random_range(0.5..2.0);
    if rng.random_bool(0.5) {
        build_grid(&[(a0, a0 + l0)], &[rng.random_range(8..=64)]).expect("valid grid")
    } else {
        let a1 = rng.random_range(-1.0..1.0);
        let l1 = rng.random_range(0.5..2.0);
        build_grid(
            &[(a0, a0 + l0), (a1, a1 + l1)],
            &[rng.random_range(4..=16), rng.random_range(4..=16)],
        )
        .expect("valid grid")
    }
}

/// Sum of a few cosine modes with decaying random amplitudes.
pub fn random_smooth_field<R: Rng>(rng: &mut R, grid: &Grid, modes: usize) -> ScalarField {
    let dim = grid.dim();
    let mut terms = Vec::new();
    for _ in 0..modes {
        let k: Vec<f64> = (0..dim).map(|_| rng.random_range(0..=3) as f64).collect();
        let shift: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let order: f64 = k.iter().sum();
        let amp = rng.random_range(-1.0..1.0) / (1.0 + order);
        terms.push((k, shift, amp));
    }
    let ext: Vec<(f64, f64)> = (0..dim).map(|a| grid.extent(a)).collect();
    ScalarField::from_fn(*grid, |x| {
        terms
            .iter()
            .map(|(k, s, amp)| {
                amp * (0..dim)
                    .map(|a| {
                        let t = (x[a] - ext[a].0) / (ext[a].1 - ext[a].0);
                        (std::f64::consts::PI * k[a] * (t + s[a])).cos()
                    })
                    .product::<f64>()
            })
            .sum()
    })
    .expect("finite field")
}

/// Piecewise-constant blocks with values in `[lo, hi]`, plus a smooth part.
pub fn random_piecewise_field<R: Rng>(rng: &mut R, grid: &Grid, lo: f64, hi: f64) -> ScalarField {
    let dim = grid.dim();
    let cuts: Vec<Vec<f64>> = (0..dim)
        .map(|a| {
            let (l, h) = grid.extent(a);
            let mut c: Vec<f64> = (0..rng.random_range(0..4))
                .map(|_| rng.random_range(l..h))
                .collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let blocks: usize = cuts.iter().map(|c| c.len() + 1).product();
    let values: Vec<f64> = (0..blocks).map(|_| rng.random_range(lo..=hi)).collect();
    let smooth = random_smooth_field(rng, grid, 3);
    let wiggle = rng.random_range(0.0..0.5) * (hi - lo);
    let out: Vec<f64> = grid
        .centers()
        .zip(smooth.values())
        .map(|(x, s)| {
            let mut block = 0;
            for a in 0..dim {
                let idx = cuts[a].iter().filter(|&&c| c < x[a]).count();
                block = block * (cuts[a].len() + 1) + idx;
            }
            (values[block] + wiggle * s).clamp(lo, hi)
        })
        .collect();
    ScalarField::new(*grid, out).expect("finite field")
}

/// A field that is zero on a random fraction of cells about half the time.
pub fn random_datum<R: Rng>(rng: &mut R, grid: &Grid) -> ScalarField {
    let scale = 10f64.powf(rng.random_range(-1.5..1.5));
    let f = random_piecewise_field(rng, grid, -scale, scale);
    if rng.random_bool(0.5) {
        f
    } else {
        let smooth = random_smooth_field(rng, grid, 4);
        f.zip_with(&smooth, |a, b| if b > 0.2 { 0.0 } else { a })
            .expect("same grid")
    }
}

/// Exponent with values in `[lo, hi]`: constant, affine or piecewise.
pub fn random_exponent<R: Rng>(rng: &mut R, grid: &Grid, lo: f64, hi: f64) -> ExponentField {
    let values = match rng.random_range(0..3) {
        0 => vec![rng.random_range(lo..=hi); grid.len()],
        1 => {
            let a = rng.random_range(lo..=hi);
            let b = rng.random_range(lo..=hi);
            let (l, h) = grid.extent(0);
            grid.centers()
                .map(|x| a + (b - a) * (x[0] - l) / (h - l))
                .collect()
        }
        _ => random_piecewise_field(rng, grid, lo, hi).into_values(),
    };
    ExponentField::new(*grid, values).expect("exponent in range")
}

/// A weight with values in `[lo, hi]`.
pub fn random_weight<R: Rng>(rng: &mut R, grid: &Grid, lo: f64, hi: f64) -> ScalarField {
    random_piecewise_field(rng, grid, lo, hi)
}

pub fn random_vector_field<R: Rng>(rng: &mut R, grid: &Grid, scale: f64) -> VectorField {
    let comps: Vec<ScalarField> = (0..grid.dim())
        .map(|_| random_piecewise_field(rng, grid, -scale, scale))
        .collect();
    let mut values = Vec::with_capacity(grid.len() * grid.dim());
    for c in 0..grid.len() {
        for comp in &comps {
            values.push(comp.values()[c]);
        }
    }
    VectorField::new(*grid, values).expect("finite field")
}

/// Symmetric PSD field with eigenvalues in `[0.05, 4]`. With `degenerate`,
/// the smallest eigenvalue is zero on the lower half of the first axis.
pub fn random_psd_field<R: Rng>(rng: &mut R, grid: &Grid, degenerate: bool) -> MatrixField {
    let n = grid.dim();
    let l1 = random_piecewise_field(rng, grid, 0.05, 4.0);
    let l2 = random_piecewise_field(rng, grid, 0.05, 4.0);
    let angle = random_smooth_field(rng, grid, 3);
    let (lo, hi) = grid.extent(0);
    let mid = 0.5 * (lo + hi);
    let mut entries = Vec::with_capacity(grid.len() * n * n);
    for (c, x) in grid.centers().enumerate() {
        let cut = degenerate && x[0] < mid;
        if n == 1 {
            entries.push(if cut { 0.0 } else { l1.values()[c] });
        } else {
            let (a, b) = (l1.values()[c], l2.values()[c]);
            let (big, small) = (a.max(b), if cut { 0.0 } else { a.min(b) });
            let t = 3.0 * angle.values()[c];
            let (s, co) = t.sin_cos();
            let off = (big - small) * s * co;
            entries.extend([
                big * co * co + small * s * s,
                off,
                off,
                big * s * s + small * co * co,
            ]);
        }
    }
    MatrixField::new(*grid, entries).expect("symmetric field")
}
