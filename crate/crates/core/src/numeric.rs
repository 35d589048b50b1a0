//! Small numerical kernels shared by the solvers: finite differences,
//! bracketed root finding, golden-section search and Cramer solves for
//! 2x2 / 3x3 systems.

/// Golden ratio conjugate, (sqrt(5) - 1) / 2.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Relative step used by first-order finite differences.
pub const FD_REL_STEP: f64 = 1e-6;

/// `max(rel, rel * |x|)`.
pub fn step_for(x: f64, rel: f64) -> f64 {
    rel.max(rel * x.abs())
}

/// Which stencil a finite-difference estimate used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    Central,
    Forward,
    Backward,
}

impl Stencil {
    pub fn is_one_sided(self) -> bool {
        self != Stencil::Central
    }
}

/// First derivative of `f` at `x`.
///
/// Central difference when `[x - h, x + h]` stays inside `[lower, upper]`,
/// otherwise the second-order one-sided stencil pointing away from the edge.
pub fn derivative<F>(f: F, x: f64, h: f64, lower: f64, upper: f64) -> (f64, Stencil)
where
    F: Fn(f64) -> f64,
{
    if x - h >= lower && x + h <= upper {
        ((f(x + h) - f(x - h)) / (2.0 * h), Stencil::Central)
    } else if x - h < lower {
        let d = (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h);
        (d, Stencil::Forward)
    } else {
        let d = (3.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h)) / (2.0 * h);
        (d, Stencil::Backward)
    }
}

/// Plain central difference.
pub fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central second difference.
pub fn second_central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Four-point mixed partial `d2 f / dx dy`.
pub fn mixed_central<F: Fn(f64, f64) -> f64>(f: F, x: f64, y: f64, hx: f64, hy: f64) -> f64 {
    (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy))
        / (4.0 * hx * hy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Newton's method kept inside a sign-changing bracket, falling back to
/// bisection whenever a Newton step leaves the bracket or stalls.
///
/// Returns `None` when `f(lo)` and `f(hi)` share a sign.
pub fn safeguarded_newton<F, D>(f: F, df: D, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Option<Root>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(Root { x: lo, fx: 0.0, iterations: 0 });
    }
    if fhi == 0.0 {
        return Some(Root { x: hi, fx: 0.0, iterations: 0 });
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return None;
    }
    // orient so that f(lo) < 0 < f(hi)
    if flo > 0.0 {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut x = 0.5 * (lo + hi);
    let mut dx_old = (hi - lo).abs();
    let mut dx = dx_old;
    let mut fx = f(x);
    let mut dfx = df(x);
    for it in 1..=max_iter {
        let newton_out = ((x - hi) * dfx - fx) * ((x - lo) * dfx - fx) > 0.0;
        let slow = (2.0 * fx).abs() > (dx_old * dfx).abs();
        dx_old = dx;
        if newton_out || slow || dfx == 0.0 {
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        } else {
            dx = fx / dfx;
            x -= dx;
        }
        fx = f(x);
        if dx.abs() < tol || fx == 0.0 {
            return Some(Root { x, fx, iterations: it });
        }
        dfx = df(x);
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    Some(Root { x, fx, iterations: max_iter })
}

/// Plain bisection; `None` without a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo).abs() < tol {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
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
    (x, f(x))
}

pub fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Cramer's rule for a 2x2 system. `None` when the determinant is zero.
pub fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = det2(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let x0 = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
    let x1 = (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det;
    Some([x0, x1])
}

/// Cofactor expansion along the first row.
pub fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cramer's rule for a 3x3 system. `None` when the determinant is zero.
pub fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let det = det3(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = rhs[row];
        }
        *slot = det3(mc) / det;
    }
    Some(out)
}

/// `|a - b| <= rel * max(|a|, |b|)` or `|a - b| <= abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let diff = (a - b).abs();
    diff <= abs || diff <= rel * a.abs().max(b.abs())
}
