//! Small numerical helpers shared by the solver, the covering code and the benchmarks.

/// Pool-adjacent-violators projection onto nondecreasing sequences (unit weights).
pub fn isotonic_nondecreasing(ys: &[f64]) -> Vec<f64> {
    isotonic_weighted(ys, &vec![1.0; ys.len()])
}

/// Weighted least-squares nondecreasing fit (pool adjacent violators).
/// Weights must be positive.
pub fn isotonic_weighted(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    debug_assert_eq!(ys.len(), ws.len());
    // blocks of (weighted mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(ws) {
        blocks.push((y, w, 1));
        while blocks.len() > 1 {
            let (m1, w1, c1) = blocks[blocks.len() - 1];
            let (m0, w0, c0) = blocks[blocks.len() - 2];
            if m0 > m1 {
                blocks.pop();
                let w = w0 + w1;
                *blocks.last_mut().unwrap() = ((m0 * w0 + m1 * w1) / w, w, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(ys.len());
    for (m, _, c) in blocks {
        out.extend(std::iter::repeat(m).take(c));
    }
    out
}

/// Linear interpolation of the table `(xs, ys)` at `x`; clamps outside the table.
/// `xs` must be nondecreasing.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&t| t <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let (y0, y1) = (ys[k - 1], ys[k]);
    if x1 <= x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Measure of `{u in [0,1] : f(u) < level}` for the piecewise-linear nondecreasing
/// function through `(us[k], fs[k])`, with `us` spanning `[0, 1]`.
pub fn measure_below(us: &[f64], fs: &[f64], level: f64) -> f64 {
    let k = fs.partition_point(|&f| f < level);
    if k == 0 {
        return 0.0;
    }
    if k == fs.len() {
        return 1.0;
    }
    let (f0, f1) = (fs[k - 1], fs[k]);
    let (u0, u1) = (us[k - 1], us[k]);
    // f0 < level <= f1
    u0 + (u1 - u0) * (level - f0) / (f1 - f0)
}

/// Measure of `{u in [0,1] : f(u) <= level}`; see [`measure_below`].
pub fn measure_at_most(us: &[f64], fs: &[f64], level: f64) -> f64 {
    let k = fs.partition_point(|&f| f <= level);
    if k == 0 {
        return 0.0;
    }
    if k == fs.len() {
        return 1.0;
    }
    let (f0, f1) = (fs[k - 1], fs[k]);
    let (u0, u1) = (us[k - 1], us[k]);
    // f0 <= level < f1
    u0 + (u1 - u0) * (level - f0) / (f1 - f0)
}

/// Trapezoid weights for the nodes `xs`, so that `sum w_k g(x_k)` approximates the integral.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = xs[k] - xs[k - 1];
        w[k - 1] += 0.5 * h;
        w[k] += 0.5 * h;
    }
    w
}

/// Trapezoid integral of tabulated `ys` over `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

const GL3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Composite 3-point Gauss-Legendre over the partition given by sorted `breaks`.
/// Only interior points are evaluated, so jumps located at breaks are harmless.
pub fn gauss_legendre_composite(breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, wt) in GL3_NODES.iter().zip(GL3_WEIGHTS.iter()) {
            s += wt * f(mid + half * x);
        }
        total += half * s;
    }
    total
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
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

/// A point just above `x`, used to evaluate right limits of left-continuous rules.
pub fn bump(x: f64) -> f64 {
    x + 1e-12 * x.abs().max(1.0)
}

/// Mean and standard error of a stream of samples (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. parallel merge.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Seed for the `index`-th independent stream derived from `seed` (splitmix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
