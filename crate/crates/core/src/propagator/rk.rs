//! Embedded Dormand–Prince 5(4) pair with first-same-as-last stages.

use num_complex::Complex64;

use crate::error::{Error, Result};

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
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

type State<const N: usize> = [Complex64; N];

#[inline(always)]
fn combine<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for (coef, k) in terms {
        let c = h * coef;
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += ki * c;
        }
    }
    out
}

/// Adaptive integrator state carried across output intervals.
#[derive(Debug, Clone)]
pub(crate) struct Dopri5<const N: usize> {
    tol: f64,
    h: f64,
    fsal: Option<(f64, State<N>)>,
    pub accepted: usize,
    pub rejected: usize,
}

impl<const N: usize> Dopri5<N> {
    pub fn new(tol: f64, initial_step: f64) -> Self {
        Dopri5 {
            tol,
            h: initial_step,
            fsal: None,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Integrates `dy/dt = f(t, y)` from `t0` to exactly `t1`.
    ///
    /// The right-hand side must be continuous at `t0` with the one used in the
    /// previous call, so the last stage can be reused.
    pub fn advance<F>(&mut self, f: F, t0: f64, t1: f64, y: &mut State<N>) -> Result<()>
    where
        F: Fn(f64, &State<N>) -> State<N>,
    {
        let mut t = t0;
        let mut k1 = match self.fsal {
            Some((tf, k)) if tf == t0 => k,
            _ => f(t0, y),
        };
        while t < t1 {
            let remaining = t1 - t;
            // Avoid leaving a sliver shorter than rounding noise before t1.
            let last = self.h * 1.01 >= remaining;
            let h = if last { remaining } else { self.h };
            if h <= 1e-15 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { time: t, step: h });
            }

            let k2 = f(t + C2 * h, &combine(y, h, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &combine(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &combine(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                t + C5 * h,
                &combine(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + h,
                &combine(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = combine(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let t_new = if last { t1 } else { t + h };
            let k7 = f(t_new, &y_new);

            // squared norms throughout; one sqrt at the end
            let mut err2 = 0.0_f64;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = self.tol * (1.0 + y[i].norm_sqr().max(y_new[i].norm_sqr()).sqrt());
                err2 = err2.max(e.norm_sqr() / (scale * scale));
            }
            let err = err2.sqrt();

            if err <= 1.0 {
                t = t_new;
                *y = y_new;
                k1 = k7;
                self.accepted += 1;
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // A clamped final step says nothing about the natural step size.
                if !last || h == self.h {
                    self.h = h * factor;
                }
            } else {
                self.rejected += 1;
                self.h = h * (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            }
            if !self.h.is_finite() {
                return Err(Error::StepUnderflow { time: t, step: self.h });
            }
        }
        self.fsal = Some((t1, k1));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_harmonic_rotation() {
        // dy/dt = -i ω y, y(t) = exp(-i ω t)
        let omega = 3.0;
        let f = |_t: f64, y: &[Complex64; 1]| [Complex64::new(0.0, -omega) * y[0]];
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut rk = Dopri5::new(1e-10, 0.01);
        for i in 0..100 {
            rk.advance(f, i as f64 * 0.1, (i + 1) as f64 * 0.1, &mut y).unwrap();
        }
        let exact = Complex64::from_polar(1.0, -omega * 10.0);
        assert!((y[0] - exact).norm() < 1e-8, "{}", (y[0] - exact).norm());
    }

    #[test]
    fn error_scales_with_tolerance() {
        let f = |t: f64, y: &[Complex64; 1]| [Complex64::new(0.0, -(1.0 + t)) * y[0]];
        let exact = Complex64::from_polar(1.0, -(5.0 + 12.5));
        let run = |tol: f64| {
            let mut y = [Complex64::new(1.0, 0.0)];
            let mut rk = Dopri5::new(tol, 0.01);
            rk.advance(f, 0.0, 5.0, &mut y).unwrap();
            ((y[0] - exact).norm(), rk.accepted)
        };
        let (e1, n1) = run(1e-6);
        let (e2, n2) = run(1e-9);
        assert!(e2 < e1 / 50.0, "{e1} {e2}");
        assert!(n2 > n1);
    }
}
