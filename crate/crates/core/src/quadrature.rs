//! Numerical integration on intervals and on equally spaced grids.

/// Composite Simpson rule with `panels` subintervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = (panels.max(2) + 1) & !1;
    let h = (b - a) / panels as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..panels {
        let x = a + k as f64 * h;
        if k % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// Trapezoid weights for `p` equally spaced points covering `[a, b]`.
pub fn trapezoid_weights(a: f64, b: f64, p: usize) -> Vec<f64> {
    assert!(p >= 2, "trapezoid rule needs at least two points");
    let dt = (b - a) / (p - 1) as f64;
    let mut w = vec![dt; p];
    w[0] = 0.5 * dt;
    w[p - 1] = 0.5 * dt;
    w
}

/// Weighted inner product `Σ w_k f_k g_k`.
pub fn weighted_dot(weights: &[f64], f: &[f64], g: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), f.len());
    debug_assert_eq!(weights.len(), g.len());
    weights
        .iter()
        .zip(f)
        .zip(g)
        .map(|((w, a), b)| w * a * b)
        .sum()
}

/// Neumaier-compensated accumulator; reassociation error stays near one ulp.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    correction: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.correction += (self.sum - t) + x;
        } else {
            self.correction += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.correction
    }
}
