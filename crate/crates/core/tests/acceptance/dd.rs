//! Double-double arithmetic, enough to evaluate the IGSO(3) heat-kernel series
//! where its terms cancel down to ~1e-21 of their size.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Taylor series; accurate for |x| up to a few units.
    pub fn exp_small(x: f64) -> Self {
        let x = Dd::from_f64(x);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for k in 1..80 {
            term = term * x / Dd::from_f64(k as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-40 * sum.hi.abs() {
                break;
            }
        }
        sum
    }

    /// `(sin x, cos x)` by Taylor series for |x| ≤ π.
    pub fn sin_cos(x: f64) -> (Self, Self) {
        let xd = Dd::from_f64(x);
        let x2 = xd * xd;
        let (mut s_term, mut c_term) = (xd, Dd::ONE);
        let (mut s, mut c) = (xd, Dd::ONE);
        for k in 1..60 {
            let k = k as f64;
            s_term = -(s_term * x2) / Dd::from_f64((2.0 * k) * (2.0 * k + 1.0));
            c_term = -(c_term * x2) / Dd::from_f64((2.0 * k - 1.0) * (2.0 * k));
            s = s + s_term;
            c = c + c_term;
        }
        (s, c)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        let q = quick_two_sum(q1, q2);
        q + Dd::from_f64(q3)
    }
}

/// `Σ_{l<terms} (2l+1) e^{−l(l+1)ε} sin((l+½)ω) / sin(ω/2)` in double-double.
///
/// The exponential weights and the sines come from exact recurrences seeded
/// with double-double Taylor values, so every term carries ~30 digits.
pub fn heat_kernel_series(omega: f64, eps: f64, terms: usize) -> f64 {
    let (sin_half, _) = Dd::sin_cos(0.5 * omega);
    let (_, cos_w) = Dd::sin_cos(omega);
    let two_cos = cos_w + cos_w;
    // sin((l+½)ω): l = 0 gives sin(ω/2), l = 1 gives sin(3ω/2) = sin(ω/2)(2cos ω + 1)
    let mut s_prev = sin_half;
    let mut s_cur = sin_half * (two_cos + Dd::ONE);
    // e^{−l(l+1)ε}: ratio between consecutive l is e^{−2(l+1)ε} = r^{l+1}
    let r = Dd::exp_small(-2.0 * eps);
    let mut weight = Dd::ONE;
    let mut r_pow = Dd::ONE;
    let mut sum = sin_half; // l = 0 term numerator
    for l in 1..terms {
        r_pow = r_pow * r;
        weight = weight * r_pow;
        if weight.hi == 0.0 {
            break;
        }
        let s_l = if l == 1 {
            s_cur
        } else {
            let next = two_cos * s_cur - s_prev;
            s_prev = s_cur;
            s_cur = next;
            next
        };
        sum = sum + Dd::from_f64((2 * l + 1) as f64) * weight * s_l;
    }
    (sum / sin_half).to_f64()
}
