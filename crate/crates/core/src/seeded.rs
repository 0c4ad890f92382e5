//! Deterministic band-limited random fields.
//!
//! All randomized experiments draw their data here. A draw is a short cosine
//! series with integer wavevectors, so the resulting function is a fixed
//! continuum object: sampling it on a finer grid refines the same metric
//! rather than producing new noise. The stream of random numbers depends
//! only on the seed and the shape parameters, never on the resolution;
//! wavevector components on inactive axes (single-node directions) are
//! masked to zero after drawing so that cubic and reduced grids consume the
//! identical stream.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, GridSpec};
use crate::tensor::MetricField;
use crate::Result;

struct Mode {
    k: [f64; 4],
    amp: f64,
    phase: f64,
}

fn draw_modes(rng: &mut ChaCha8Rng, grid: &GridSpec, band: i64, amp: f64, nmodes: usize) -> Vec<Mode> {
    let mut modes = Vec::with_capacity(nmodes);
    for _ in 0..nmodes {
        let mut k = [0.0; 4];
        for (a, ka) in k.iter_mut().enumerate() {
            let draw = rng.gen_range(-band..=band) as f64;
            if grid.is_active(a) {
                *ka = draw;
            }
        }
        let amp = amp * rng.gen_range(-1.0..=1.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        modes.push(Mode { k, amp, phase });
    }
    modes
}

fn eval_modes(modes: &[Mode], x: [f64; 4]) -> f64 {
    let mut v = 0.0;
    for m in modes {
        let dot = m.k[0] * x[0] + m.k[1] * x[1] + m.k[2] * x[2] + m.k[3] * x[3];
        v += m.amp * (dot + m.phase).cos();
    }
    v
}

/// One scalar field: `nmodes` cosine modes with wavevector entries in
/// `[-band, band]` and amplitudes in `[-amp, amp]`.
pub fn random_scalar(grid: &GridSpec, band: i64, amp: f64, nmodes: usize, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = draw_modes(&mut rng, grid, band, amp, nmodes);
    let mut f = Field::zeros(grid, 1);
    f.fill_comp(0, |x| eval_modes(&modes, x));
    f
}

/// Ten independent scalar draws packed as a symmetric 2-tensor field with
/// zero guaranteed only in expectation (use it as a perturbation).
pub fn random_sym_field(grid: &GridSpec, band: i64, amp: f64, nmodes: usize, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Field::zeros(grid, 10);
    for c in 0..10 {
        let modes = draw_modes(&mut rng, grid, band, amp, nmodes);
        f.fill_comp(c, |x| eval_modes(&modes, x));
    }
    f
}

/// Identity plus a random symmetric perturbation. Fails if the draw is too
/// large to stay positive definite.
pub fn random_metric(
    grid: &GridSpec,
    band: i64,
    amp: f64,
    nmodes: usize,
    seed: u64,
) -> Result<MetricField> {
    let mut comps = random_sym_field(grid, band, amp, nmodes, seed);
    for d in [0usize, 4, 7, 9] {
        let plane = comps.comp_mut(d);
        for v in plane.iter_mut() {
            *v += 1.0;
        }
    }
    MetricField::new(comps)
}
