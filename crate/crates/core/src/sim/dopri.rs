//! Embedded Dormand–Prince 5(4) Runge–Kutta step with adaptive step-size
//! control, for systems whose dimension may change between calls.

#![allow(clippy::unreadable_literal)]

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
// fifth-order weights (also row 7 of the tableau, FSAL)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            abs: 1e-4,
            rel: 1e-4,
            initial_step: 0.05,
            max_step: 0.2,
            min_step: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Scratch buffers for one system dimension.
#[derive(Debug, Default)]
pub struct Workspace {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl Workspace {
    fn resize(&mut self, n: usize) {
        for k in &mut self.k {
            k.resize(n, 0.0);
        }
        self.stage.resize(n, 0.0);
        self.y_new.resize(n, 0.0);
    }
}

/// Outcome of a successful adaptive step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accepted {
    /// Step actually taken.
    pub h: f64,
    /// Suggested size for the next step.
    pub h_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Underflow {
    pub h: f64,
}

/// Advances `y` from `t` by one accepted step no longer than `h_limit`,
/// retrying with smaller steps until the local error estimate passes.
///
/// `f(t, y, dy)` writes the derivative of `y` into `dy`.
#[allow(clippy::too_many_arguments)]
pub fn step<F>(
    f: &mut F,
    t: f64,
    y: &mut [f64],
    h_try: f64,
    h_limit: f64,
    tol: &Tolerances,
    ws: &mut Workspace,
    stats: &mut StepStats,
) -> Result<Accepted, Underflow>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    ws.resize(n);
    let mut h = h_try.min(h_limit).min(tol.max_step);
    if n == 0 {
        return Ok(Accepted { h, h_next: h_try });
    }
    f(t, y, &mut ws.k[0]);
    stats.evaluations += 1;
    loop {
        if h < tol.min_step && h < h_limit {
            return Err(Underflow { h });
        }
        let Workspace { k, stage, y_new } = ws;
        let [k1, k2, k3, k4, k5, k6, k7] = k;

        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, stage, k2);
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, stage, k3);
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, stage, k4);
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, stage, k5);
        for i in 0..n {
            stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, stage, k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(t + h, y_new, k7);
        stats.evaluations += 6;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if err.is_finite() && err <= 1.0 {
            y.copy_from_slice(y_new);
            stats.accepted += 1;
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            return Ok(Accepted {
                h,
                h_next: (h * fac).min(tol.max_step),
            });
        }
        stats.rejected += 1;
        let fac = if err.is_finite() {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
        } else {
            FAC_MIN
        };
        h *= fac;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate<F: FnMut(f64, &[f64], &mut [f64])>(mut f: F, y0: &[f64], t_end: f64, tol: Tolerances) -> (Vec<f64>, StepStats) {
        let mut y = y0.to_vec();
        let mut t = 0.0;
        let mut h = tol.initial_step;
        let mut ws = Workspace::default();
        let mut stats = StepStats::default();
        while t < t_end {
            let acc = step(&mut f, t, &mut y, h, t_end - t, &tol, &mut ws, &mut stats).unwrap();
            t += acc.h;
            h = acc.h_next;
        }
        (y, stats)
    }

    #[test]
    fn exponential_decay() {
        let tol = Tolerances {
            abs: 1e-10,
            rel: 1e-10,
            max_step: 1.0,
            ..Default::default()
        };
        let (y, _) = integrate(|_, y, dy| dy[0] = -2.0 * y[0], &[1.0], 3.0, tol);
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let tol = Tolerances {
            abs: 1e-9,
            rel: 1e-9,
            max_step: 0.5,
            ..Default::default()
        };
        let two_pi = 2.0 * std::f64::consts::PI;
        let (y, stats) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            two_pi,
            tol,
        );
        assert!((y[0] - 1.0).abs() < 1e-7);
        assert!(y[1].abs() < 1e-7);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn fifth_order_convergence() {
        // halving a fixed step should shrink the error by about 2^5
        let run = |h: f64| {
            let tol = Tolerances {
                abs: 1e3,
                rel: 0.0,
                initial_step: h,
                max_step: h,
                min_step: 1e-12,
            };
            let (y, _) = integrate(|t, _, dy| dy[0] = t.cos(), &[0.0], 1.0, tol);
            (y[0] - 1f64.sin()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 20.0 && ratio < 80.0, "ratio {ratio}");
    }

    #[test]
    fn underflow_is_reported() {
        let tol = Tolerances {
            abs: 1e-300,
            rel: 0.0,
            min_step: 1e-3,
            ..Default::default()
        };
        let mut ws = Workspace::default();
        let mut stats = StepStats::default();
        let mut y = [1.0];
        let mut f = |_: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0] * 1e6;
        assert!(step(&mut f, 0.0, &mut y, 0.05, 1.0, &tol, &mut ws, &mut stats).is_err());
    }
}
