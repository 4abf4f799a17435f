//! Small numerical kernels: log-space accumulation, 1-D minimization,
//! adaptive quadrature and batch-means error bars.

/// Streaming `log Σ exp(x_i)` that never overflows.
#[derive(Clone, Copy, Debug)]
pub struct LogAcc {
    max: f64,
    sum: f64,
}

impl Default for LogAcc {
    fn default() -> Self {
        Self::new()
    }
}

impl LogAcc {
    pub fn new() -> Self {
        LogAcc { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogAcc) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

pub fn logsumexp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = LogAcc::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// `log(e^a − e^b)` for `a ≥ b`.
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)].into_iter().fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Minimize `f` sampled on `xs`, then polish inside the bracketing cells.
/// Returns the refined `(x, f(x))`; grid points may be `+∞`.
pub fn refine_grid_min<F: Fn(f64) -> f64>(f: &F, xs: &[f64], vals: &[f64], lo: usize, hi: usize) -> (f64, f64) {
    let mut best = lo;
    for i in lo..=hi {
        if vals[i] < vals[best] {
            best = i;
        }
    }
    let a = xs[if best > lo { best - 1 } else { best }];
    let b = xs[if best < hi { best + 1 } else { best }];
    if b <= a {
        return (xs[best], vals[best]);
    }
    let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
    let (x, fx) = golden_min(f, a, b, tol);
    if fx <= vals[best] {
        (x, fx)
    } else {
        (xs[best], vals[best])
    }
}

fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `log ∫_a^b exp(lw(x)) dx`, evaluated by adaptive Simpson on the
/// integrand rescaled by its maximum over a dense pre-scan.
pub fn log_integral<F: Fn(f64) -> f64>(lw: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return f64::NEG_INFINITY;
    }
    const SCAN: usize = 2048;
    let h = (b - a) / SCAN as f64;
    let mut m = f64::NEG_INFINITY;
    let mut first_finite = None;
    let mut last_finite = None;
    for i in 0..=SCAN {
        let x = a + h * i as f64;
        let v = lw(x);
        if v > f64::NEG_INFINITY {
            first_finite.get_or_insert(i);
            last_finite = Some(i);
        }
        if v > m {
            m = v;
        }
    }
    let (Some(i0), Some(i1)) = (first_finite, last_finite) else {
        return f64::NEG_INFINITY;
    };
    let lo = if i0 == 0 { a } else { a + h * (i0 - 1) as f64 };
    let hi = if i1 == SCAN { b } else { a + h * (i1 + 1) as f64 };
    let g = |x: f64| {
        let v = lw(x);
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            (v - m).exp()
        }
    };
    // Integrate cell by cell so narrow peaks are never skipped.
    let cells = 64usize;
    let w = (hi - lo) / cells as f64;
    let tol = rel_tol * h.max(1e-300);
    let mut total = 0.0;
    for k in 0..cells {
        let x0 = lo + w * k as f64;
        let x1 = if k + 1 == cells { hi } else { x0 + w };
        total += adaptive_simpson(g, x0, x1, tol / cells as f64);
    }
    if total <= 0.0 {
        f64::NEG_INFINITY
    } else {
        m + total.ln()
    }
}

/// Trapezoid rule over possibly non-uniform abscissae.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum()
}

/// Mean and batch-means standard error (`nb` contiguous batches).
pub fn batch_means(xs: &[f64], nb: usize) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let nb = nb.min(n).max(1);
    if nb < 2 {
        return (mean, f64::INFINITY);
    }
    let size = n / nb;
    let mut bm = Vec::with_capacity(nb);
    for b in 0..nb {
        let s = &xs[b * size..(b + 1) * size];
        bm.push(s.iter().sum::<f64>() / size as f64);
    }
    let bmean = bm.iter().sum::<f64>() / nb as f64;
    let var = bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (nb - 1) as f64;
    (mean, (var / nb as f64).sqrt())
}

/// Linear interpolation through sorted abscissae; `+∞` ordinates propagate.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (x0, x1, y0, y1) = (xs[j - 1], xs[j], ys[j - 1], ys[j]);
    if y0.is_infinite() || y1.is_infinite() {
        if x == x0 {
            return y0;
        }
        return f64::INFINITY;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}
