//! Dormand-Prince 5(4) stepper with the quartic continuous extension.
//!
//! The right-hand side is autonomous, so the stage nodes never appear.

use crate::C64;

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Working storage for one trajectory. `k[0]` always holds `f(y)` at the
/// current point (first-same-as-last).
pub(crate) struct Dopri5 {
    pub y: Vec<C64>,
    pub y_new: Vec<C64>,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    pub t: f64,
    pub h_last: f64,
}

/// Coefficients of the continuous extension over the last accepted step.
pub(crate) struct DenseStep {
    r: [Vec<C64>; 5],
    pub t0: f64,
    pub h: f64,
}

impl DenseStep {
    pub fn eval_into(&self, t: f64, out: &mut [C64]) {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.r;
        for (i, o) in out.iter_mut().enumerate() {
            *o = r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * th1) * theta) * th1) * theta;
        }
    }

    /// Same polynomial for a linear functional already applied to each `r`.
    pub fn eval_scalar(coeffs: &[f64; 5], theta: f64) -> f64 {
        let th1 = 1.0 - theta;
        coeffs[0] + (coeffs[1] + (coeffs[2] + (coeffs[3] + coeffs[4] * th1) * theta) * th1) * theta
    }

    pub fn project(&self, functional: impl Fn(&[C64]) -> f64) -> [f64; 5] {
        [
            functional(&self.r[0]),
            functional(&self.r[1]),
            functional(&self.r[2]),
            functional(&self.r[3]),
            functional(&self.r[4]),
        ]
    }
}

impl Dopri5 {
    pub fn new<F: FnMut(&[C64], &mut [C64])>(y0: Vec<C64>, rhs: &mut F) -> Self {
        let n = y0.len();
        let zeros = || vec![C64::ZERO; n];
        let mut k = [
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
            zeros(),
        ];
        rhs(&y0, &mut k[0]);
        Dopri5 {
            y: y0,
            y_new: zeros(),
            k,
            tmp: zeros(),
            t: 0.0,
            h_last: 0.0,
        }
    }

    pub fn derivative(&self) -> &[C64] {
        &self.k[0]
    }

    /// Starting step from the usual two-evaluation heuristic.
    pub fn initial_step<F: FnMut(&[C64], &mut [C64])>(
        &mut self,
        rhs: &mut F,
        rtol: f64,
        atol: f64,
    ) -> f64 {
        let sc: Vec<f64> = self.y.iter().map(|v| atol + rtol * v.norm()).collect();
        let d0 = rms(self.y.iter().zip(&sc).map(|(v, s)| v.norm() / s));
        let d1 = rms(self.k[0].iter().zip(&sc).map(|(v, s)| v.norm() / s));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        for i in 0..self.y.len() {
            self.tmp[i] = self.y[i] + self.k[0][i] * h0;
        }
        rhs(&self.tmp, &mut self.k[1]);
        let d2 = rms(self.k[1]
            .iter()
            .zip(&self.k[0])
            .zip(&sc)
            .map(|((a, b), s)| (a - b).norm() / s))
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// Attempts one step of size `h`; returns the scaled error norm. On
    /// acceptance the caller calls [`Dopri5::accept`]. `fix` is applied to
    /// the proposed point before its derivative is taken.
    pub fn attempt<F, P>(&mut self, rhs: &mut F, fix: &mut P, h: f64, rtol: f64, atol: f64) -> f64
    where
        F: FnMut(&[C64], &mut [C64]),
        P: FnMut(&mut [C64]),
    {
        let n = self.y.len();
        let y = &self.y;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;

        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        rhs(tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        rhs(tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        rhs(tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        rhs(tmp, k5);
        for i in 0..n {
            tmp[i] =
                y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        rhs(tmp, k6);
        for i in 0..n {
            self.y_new[i] =
                y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        fix(&mut self.y_new);
        rhs(&self.y_new, k7);

        let mut acc = 0.0;
        for i in 0..n {
            let e =
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = atol + rtol * y[i].norm().max(self.y_new[i].norm());
            let r = e.norm() / sc;
            acc += r * r;
        }
        (acc / n.max(1) as f64).sqrt()
    }

    /// Continuous extension of the step just attempted; valid only before
    /// [`Dopri5::accept`].
    pub fn dense(&self, h: f64) -> DenseStep {
        let n = self.y.len();
        let mut out = DenseStep {
            r: std::array::from_fn(|_| vec![C64::ZERO; n]),
            t0: self.t,
            h,
        };
        self.dense_into(h, &mut out);
        out
    }

    pub fn dense_into(&self, h: f64, out: &mut DenseStep) {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let [r1, r2, r3, r4, r5] = &mut out.r;
        r1.copy_from_slice(&self.y);
        for i in 0..self.y.len() {
            let d = self.y_new[i] - self.y[i];
            let e = k1[i] * h - d;
            r2[i] = d;
            r3[i] = e;
            r4[i] = d - k7[i] * h - e;
            r5[i] =
                (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
        }
        out.t0 = self.t;
        out.h = h;
    }

    pub fn accept(&mut self, h: f64) {
        std::mem::swap(&mut self.y, &mut self.y_new);
        self.k.swap(0, 6);
        self.t += h;
        self.h_last = h;
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Step-size factor for the next attempt given the current error norm.
pub(crate) fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        return 5.0;
    }
    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
}
