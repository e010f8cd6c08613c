//! Full-box periodic transforms through rustfft.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::BoxSpec;

fn plan(side: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap();
    if let Some(p) = guard.1.get(&(side, inverse)) {
        return p.clone();
    }
    let p = if inverse { guard.0.plan_fft_inverse(side) } else { guard.0.plan_fft_forward(side) };
    guard.1.insert((side, inverse), p.clone());
    p
}

/// Position of each box site in "coordinate mod L" order.
pub fn fft_order(spec: &BoxSpec) -> Vec<usize> {
    let l = spec.side as i64;
    let n = spec.n_sites();
    let mut coords = vec![0i64; spec.dim];
    (0..n)
        .map(|idx| {
            spec.coords_into(idx, &mut coords);
            let mut out = 0usize;
            let mut stride = 1usize;
            for &c in &coords {
                out += c.rem_euclid(l) as usize * stride;
                stride *= l as usize;
            }
            out
        })
        .collect()
}

/// In-place N-dimensional transform of data stored in mod-L order, axis 0 fastest.
pub fn fft_nd(data: &mut [Complex64], dim: usize, side: usize, inverse: bool) {
    let fft = plan(side, inverse);
    let mut line = vec![Complex64::new(0.0, 0.0); side];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..dim {
        let stride = side.pow(axis as u32);
        let block = stride * side;
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[start + off + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[start + off + i * stride] = *v;
                }
            }
        }
    }
    if inverse {
        let norm = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }
}

/// Forward transform of a table in box order; result in mod-L momentum order.
pub fn forward(spec: &BoxSpec, values: &[f64]) -> Vec<Complex64> {
    let order = fft_order(spec);
    let mut data = vec![Complex64::new(0.0, 0.0); values.len()];
    for (i, &v) in values.iter().enumerate() {
        data[order[i]] = Complex64::new(v, 0.0);
    }
    fft_nd(&mut data, spec.dim, spec.side as usize, false);
    data
}

/// Inverse transform back to box order (real part).
pub fn inverse(spec: &BoxSpec, spectrum: &[Complex64]) -> Vec<f64> {
    let order = fft_order(spec);
    let mut data = spectrum.to_vec();
    fft_nd(&mut data, spec.dim, spec.side as usize, true);
    order.iter().map(|&j| data[j].re).collect()
}
