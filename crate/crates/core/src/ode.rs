//! Adaptive Dormand-Prince 5(4) integration for small first-order systems.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
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
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop {
    /// Reached the requested end point.
    End,
    /// The stop predicate fired after an accepted step.
    Event,
    /// Step size collapsed.
    Stalled,
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` (`t1 > t0`). After every
/// accepted step `stop(t, y)` is consulted. `h` carries the step size guess
/// in and the last successful step out.
pub fn integrate<const D: usize>(
    f: &impl Fn(f64, &[f64; D]) -> [f64; D],
    t0: f64,
    y0: [f64; D],
    t1: f64,
    h: &mut f64,
    tol: Tolerance,
    stop: &mut impl FnMut(f64, &[f64; D]) -> bool,
) -> (f64, [f64; D], Stop) {
    let mut t = t0;
    let mut y = y0;
    let span = t1 - t0;
    if span <= 0.0 {
        return (t, y, Stop::End);
    }
    if !(*h > 0.0) {
        *h = span;
    }
    let mut k = [[0.0; D]; 7];
    k[0] = f(t, &y);
    loop {
        let remaining = t1 - t;
        if remaining <= 1e-15 * t1.abs().max(span) {
            return (t1, y, Stop::End);
        }
        let step = h.min(remaining);
        if step < 1e-15 * t.abs().max(1e-300) {
            return (t, y, Stop::Stalled);
        }
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for d in 0..D {
                        ys[d] += step * a * kj[d];
                    }
                }
            }
            k[s] = f(t + C[s] * step, &ys);
        }
        let mut y_new = y;
        let mut err = 0.0f64;
        for d in 0..D {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..7 {
                hi += B[s] * k[s][d];
                lo += B_LOW[s] * k[s][d];
            }
            y_new[d] = y[d] + step * hi;
            let scale = tol.atol + tol.rtol * y[d].abs().max(y_new[d].abs());
            err = err.max((step * (hi - lo)).abs() / scale);
        }
        if !err.is_finite() {
            *h = 0.2 * step;
            continue;
        }
        if err <= 1.0 {
            t += step;
            y = y_new;
            // FSAL: the seventh stage is f at the new point
            k[0] = k[6];
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if step >= *h {
                *h = step * factor;
            }
            if stop(t, &y) {
                return (t, y, Stop::Event);
            }
        } else {
            *h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}
