//! Radial profiles: quintic Hermite interpolation on graded nodes with an
//! algebraic tail beyond the last node.

use serde::{Deserialize, Serialize};

/// `A r^{−a} + B r^{−b}` for `r > r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub a_coef: f64,
    pub a_exp: f64,
    pub b_coef: f64,
    pub b_exp: f64,
}

impl TailModel {
    pub fn eval(&self, r: f64) -> f64 {
        self.a_coef * r.powf(-self.a_exp) + self.b_coef * r.powf(-self.b_exp)
    }

    pub fn deriv(&self, r: f64) -> f64 {
        -self.a_exp * self.a_coef * r.powf(-self.a_exp - 1.0) - self.b_exp * self.b_coef * r.powf(-self.b_exp - 1.0)
    }

    pub fn deriv2(&self, r: f64) -> f64 {
        self.a_exp * (self.a_exp + 1.0) * self.a_coef * r.powf(-self.a_exp - 2.0)
            + self.b_exp * (self.b_exp + 1.0) * self.b_coef * r.powf(-self.b_exp - 2.0)
    }
}

/// Samples `w, w', w''` at increasing radii `r[0] = 0 < … < r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    pub dw: Vec<f64>,
    pub d2w: Vec<f64>,
    pub tail: TailModel,
}

#[inline]
fn hermite(t: f64) -> ([f64; 6], [f64; 6]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let v = [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        0.5 * t3 - t4 + 0.5 * t5,
    ];
    let d = [
        -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
        30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        1.5 * t2 - 4.0 * t3 + 2.5 * t4,
    ];
    (v, d)
}

/// 8-point Gauss–Legendre nodes and weights on [−1, 1].
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Gauss–Legendre quadrature of `f` on `[a, b]`.
pub fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    GL_X.iter().zip(GL_W).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

impl RadialProfile {
    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    #[inline]
    fn interval(&self, r: f64) -> usize {
        let k = self.r.partition_point(|&x| x <= r);
        k.clamp(1, self.r.len() - 1) - 1
    }

    /// `(w(r), w'(r))` for `r ≥ 0`.
    pub fn eval_with_deriv(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        if r >= self.r_max() {
            return (self.tail.eval(r), self.tail.deriv(r));
        }
        let i = self.interval(r);
        let d = self.r[i + 1] - self.r[i];
        let t = (r - self.r[i]) / d;
        let (v, dv) = hermite(t);
        let c = [
            self.w[i],
            d * self.dw[i],
            d * d * self.d2w[i],
            self.w[i + 1],
            d * self.dw[i + 1],
            d * d * self.d2w[i + 1],
        ];
        let mut f = 0.0;
        let mut df = 0.0;
        for k in 0..6 {
            f += c[k] * v[k];
            df += c[k] * dv[k];
        }
        (f, df / d)
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.eval_with_deriv(r).0
    }

    pub fn deriv(&self, r: f64) -> f64 {
        self.eval_with_deriv(r).1
    }

    /// The same profile on every other node (first and last kept).
    pub fn coarsened(&self) -> RadialProfile {
        let m = self.r.len();
        let keep: Vec<usize> = (0..m).filter(|&i| i % 2 == 0 || i + 1 == m).collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect();
        RadialProfile {
            r: pick(&self.r),
            w: pick(&self.w),
            dw: pick(&self.dw),
            d2w: pick(&self.d2w),
            tail: self.tail,
        }
    }

    /// `∫_0^∞ f(r, w(r), w'(r)) dr`: Gauss–Legendre on every interval plus
    /// the tail model beyond `r_max` (mapped to `t = r_max/r ∈ (0, 1]`).
    pub fn integrate(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.r.len() - 1 {
            acc += gauss_legendre(self.r[i], self.r[i + 1], |r| {
                let (w, dw) = self.eval_with_deriv(r);
                f(r, w, dw)
            });
        }
        acc + self.integrate_tail(&f)
    }

    fn integrate_tail(&self, f: &impl Fn(f64, f64, f64) -> f64) -> f64 {
        let rm = self.r_max();
        let g = |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let r = rm / t;
            f(r, self.tail.eval(r), self.tail.deriv(r)) * rm / (t * t)
        };
        let cuts = [0.0, 0.25, 0.5, 0.75, 1.0];
        cuts.windows(2).map(|c| gauss_legendre(c[0], c[1], g)).sum()
    }
}

/// Surface measure of the unit sphere in `R^n` (`n = 1, 2`).
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => unreachable!("only n = 1, 2"),
    }
}
