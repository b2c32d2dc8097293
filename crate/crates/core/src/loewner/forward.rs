//! Adaptive integration of `∂_t g = 2 / (g − W_t)` for a single point.

use num_complex::Complex64 as C64;

use super::DrivingFunction;
use crate::error::{Error, Result};

const TOL: f64 = 1e-11;
const SWALLOW_CUTOFF: f64 = 1e-6;

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

type State = [C64; 2];

fn rhs(t: f64, y: &State, w0: f64, slope: f64, t0: f64) -> State {
    let d = y[0] - (w0 + slope * (t - t0));
    let inv = 1.0 / d;
    [2.0 * inv, -2.0 * y[1] * inv * inv]
}

/// `g_t(z)`, with a swallow signal when `g_s(z)` meets `W_s`.
pub fn solve_forward(w: &DrivingFunction, z: C64, t: f64) -> Result<C64> {
    Ok(solve_forward_with_derivative(w, z, t)?.0)
}

/// `(g_t(z), g_t'(z))`.
pub fn solve_forward_with_derivative(w: &DrivingFunction, z: C64, t: f64) -> Result<(C64, C64)> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("{z} is not in the upper half-plane")));
    }
    if t < 0.0 {
        return Err(Error::Input("negative time".into()));
    }
    let mut y: State = [z, C64::new(1.0, 0.0)];
    if t == 0.0 {
        return Ok((y[0], y[1]));
    }
    // knots of the piecewise-linear driving, extended flat past the horizon
    let mut knots: Vec<f64> = w
        .times()
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < t)
        .collect();
    knots.insert(0, 0.0);
    knots.push(t);
    let mut h = (t / 64.0).min(1e-2);
    for seg in knots.windows(2) {
        let (t0, t1) = (seg[0], seg[1]);
        let (w0, w1) = (w.eval(t0), w.eval(t1));
        let slope = (w1 - w0) / (t1 - t0);
        let mut s = t0;
        while s < t1 {
            h = h.min(t1 - s);
            let mut k = [[C64::new(0.0, 0.0); 2]; 7];
            for i in 0..7 {
                let mut yi = y;
                for (j, kj) in k.iter().enumerate().take(i) {
                    for c in 0..2 {
                        yi[c] += h * A[i][j] * kj[c];
                    }
                }
                k[i] = rhs(s + C[i] * h, &yi, w0, slope, t0);
            }
            let mut y5 = y;
            let mut err: f64 = 0.0;
            for c in 0..2 {
                let mut e = C64::new(0.0, 0.0);
                for i in 0..7 {
                    y5[c] += h * B5[i] * k[i][c];
                    e += h * (B5[i] - B4[i]) * k[i][c];
                }
                err = err.max(e.norm() / (1.0 + y5[c].norm()));
            }
            if err <= TOL || h < 1e-15 {
                s += h;
                y = y5;
                let gap = (y[0] - (w0 + slope * (s - t0))).norm();
                if gap < SWALLOW_CUTOFF || !y[0].is_finite() {
                    return Err(Error::Swallowed { time: s });
                }
            }
            let fac = if err == 0.0 {
                4.0
            } else {
                0.9 * (TOL / err).powf(0.2)
            };
            h *= fac.clamp(0.1, 4.0);
            if h < 1e-14 {
                return Err(Error::Swallowed { time: s });
            }
        }
    }
    Ok((y[0], y[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_driving_matches_closed_form() {
        let w = DrivingFunction::constant(0.0, 1.0, 0.1);
        let z = C64::new(0.3, 1.1);
        let g = solve_forward(&w, z, 0.2).unwrap();
        let expect = (z * z + 0.8).sqrt();
        assert!((g - expect).norm() < 1e-9);
        assert_eq!(solve_forward(&w, z, 0.0).unwrap(), z);
    }

    #[test]
    fn point_on_slit_is_swallowed() {
        let w = DrivingFunction::constant(0.0, 1.0, 0.1);
        match solve_forward(&w, C64::i(), 1.0) {
            Err(Error::Swallowed { time }) => assert!((time - 0.25).abs() < 1e-3),
            other => panic!("expected swallow, got {other:?}"),
        }
    }

    #[test]
    fn derivative_matches_closed_form() {
        let w = DrivingFunction::constant(0.0, 1.0, 0.1);
        let z = C64::new(-0.4, 0.9);
        let (_, d) = solve_forward_with_derivative(&w, z, 0.3).unwrap();
        let expect = z / crate::loewner::sqrt_h(z * z + 1.2, 1.0);
        assert!((d - expect).norm() < 1e-8);
    }
}
