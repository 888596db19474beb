//! Cubic polynomials in a local time variable and real-root isolation.

use crate::scalar::Scalar;

/// `c[0] + c[1]·τ + c[2]·τ² + c[3]·τ³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poly3<T> {
    pub c: [T; 4],
}

impl<T: Scalar> Poly3<T> {
    pub fn new(c: [T; 4]) -> Self {
        Self { c }
    }

    pub fn zero() -> Self {
        Self { c: [T::zero(); 4] }
    }

    pub fn eval(&self, x: T) -> T {
        ((self.c[3] * x + self.c[2]) * x + self.c[1]) * x + self.c[0]
    }

    pub fn derivative(&self) -> Self {
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        Self {
            c: [self.c[1], two * self.c[2], three * self.c[3], T::zero()],
        }
    }

    /// Polynomial `q` with `q(x) = self(x + s)`.
    pub fn shifted(&self, s: T) -> Self {
        let [c0, c1, c2, c3] = self.c;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        Self {
            c: [
                c0 + s * (c1 + s * (c2 + s * c3)),
                c1 + s * (two * c2 + three * s * c3),
                c2 + three * s * c3,
                c3,
            ],
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut c = self.c;
        for (ci, oi) in c.iter_mut().zip(other.c) {
            *ci = *ci - oi;
        }
        Self { c }
    }

    pub fn add_constant(&self, k: T) -> Self {
        let mut c = self.c;
        c[0] = c[0] + k;
        Self { c }
    }

    /// Real roots of the derivative strictly inside `(a, b)`, sorted.
    pub fn critical_points(&self, a: T, b: T) -> Vec<T> {
        let d = self.derivative();
        quadratic_roots(d.c[2], d.c[1], d.c[0])
            .into_iter()
            .filter(|&x| x > a && x < b)
            .collect()
    }

    /// Minimum on `[a, b]` and where it occurs (earliest on ties).
    pub fn min_on(&self, a: T, b: T) -> (T, T) {
        let mut best = (a, self.eval(a));
        for x in self.critical_points(a, b).into_iter().chain([b]) {
            let y = self.eval(x);
            if y < best.1 {
                best = (x, y);
            }
        }
        best
    }

    /// Real roots in `[a, b]`, sorted, found on monotone sub-intervals by
    /// safeguarded bisection.
    pub fn roots_in(&self, a: T, b: T) -> Vec<T> {
        let mut knots = vec![a];
        knots.extend(self.critical_points(a, b));
        knots.push(b);
        let mut roots: Vec<T> = Vec::new();
        let push = |r: T, roots: &mut Vec<T>| {
            let tol = T::epsilon() * T::lit(16.0) * (T::one() + r.abs());
            if roots.last().is_none_or(|&last| (r - last).abs() > tol) {
                roots.push(r);
            }
        };
        for w in knots.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let (f0, f1) = (self.eval(x0), self.eval(x1));
            if f0 == T::zero() {
                push(x0, &mut roots);
            }
            if f0 * f1 < T::zero() {
                push(bisect(|x| self.eval(x), x0, x1, f0), &mut roots);
            }
        }
        if self.eval(b) == T::zero() {
            push(b, &mut roots);
        }
        roots
    }
}

fn bisect<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, f_lo: T) -> T {
    let half = T::lit(0.5);
    let lo_negative = f_lo < T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return mid;
        }
        if (fm < T::zero()) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * half
}

/// Real roots of `a·x² + b·x + c`, sorted. Degenerate leading terms fall back
/// to the linear case; an identically zero polynomial has no isolated roots.
pub fn quadratic_roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == T::zero() {
        return Vec::new();
    }
    let tiny = T::epsilon() * scale;
    if a.abs() <= tiny {
        if b.abs() <= tiny {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < T::zero() {
        return Vec::new();
    }
    if disc == T::zero() {
        return vec![-b / (T::lit(2.0) * a)];
    }
    let sq = disc.sqrt();
    let q = if b >= T::zero() {
        -(b + sq) * T::lit(0.5)
    } else {
        -(b - sq) * T::lit(0.5)
    };
    let mut r = vec![q / a, c / q];
    r.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
    r
}

/// Closed intervals of `[a, b]` on which `f` is strictly negative, given the
/// sorted roots of `f` in that range.
pub fn negative_intervals<T: Scalar>(poly: &Poly3<T>, a: T, b: T) -> Vec<(T, T)> {
    let mut knots = vec![a];
    knots.extend(poly.roots_in(a, b).into_iter().filter(|&r| r > a && r < b));
    knots.push(b);
    let half = T::lit(0.5);
    let mut out: Vec<(T, T)> = Vec::new();
    for w in knots.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let mid = (w[0] + w[1]) * half;
        if poly.eval(mid) < T::zero() {
            match out.last_mut() {
                Some(last) if last.1 >= w[0] => last.1 = w[1],
                _ => out.push((w[0], w[1])),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn evaluation_and_shift_agree() {
        let p = Poly3::new([1.0, -2.0, 0.5, 0.25]);
        let q = p.shifted(1.5);
        for x in [-2.0, 0.0, 0.7, 3.0] {
            assert_relative_eq!(q.eval(x), p.eval(x + 1.5), epsilon = 1e-12);
        }
    }

    #[test]
    fn cubic_roots() {
        // (x-1)(x-2)(x-4) = x³ - 7x² + 14x - 8
        let p = Poly3::new([-8.0, 14.0, -7.0, 1.0]);
        let r = p.roots_in(0.0, 5.0);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([1.0, 2.0, 4.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(p.roots_in(1.5, 3.0).len(), 1);
        assert!(p.roots_in(4.5, 9.0).is_empty());
    }

    #[test]
    fn double_root_is_found_once() {
        // (x-1)²(x+3)
        let p = Poly3::new([3.0, -5.0, 1.0, 1.0]);
        let r = p.roots_in(0.0, 2.0);
        assert_eq!(r.len(), 1);
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quadratic_degenerate_cases() {
        assert!(quadratic_roots(0.0, 0.0, 1.0).is_empty());
        assert_eq!(quadratic_roots(0.0, 2.0, -4.0), vec![2.0]);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
        let r = quadratic_roots(1.0, -3.0, 2.0);
        assert_relative_eq!(r[0], 1.0);
        assert_relative_eq!(r[1], 2.0);
    }

    #[test]
    fn negative_intervals_of_cubic() {
        let p = Poly3::new([-8.0, 14.0, -7.0, 1.0]);
        let iv = negative_intervals(&p, 0.0, 5.0);
        assert_eq!(iv.len(), 2);
        assert_relative_eq!(iv[0].0, 0.0);
        assert_relative_eq!(iv[0].1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(iv[1].0, 2.0, epsilon = 1e-12);
        assert_relative_eq!(iv[1].1, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn minimum_uses_critical_points() {
        let p = Poly3::new([0.0, 0.0, 1.0, 0.0]);
        let (x, y) = p.min_on(-1.0, 2.0);
        assert_eq!((x, y), (0.0, 0.0));
    }
}
