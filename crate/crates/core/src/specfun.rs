//! Bessel functions of the orders that appear in two and three dimensions,
//! their positive zeros, and the Helmholtz constants built from them.
//!
//! Only the orders 0, 1/2, 1 and 3/2 are admissible: these are (n-2)/2 and
//! n/2 for n in {2, 3}. Integer orders use the ascending power series up to
//! x = 12 and the Hankel asymptotic expansion beyond; half-integer orders use
//! their closed trigonometric forms.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{QdomError, Result};

/// Euler–Mascheroni constant, 0.57721566490153286061.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

/// Switch point between the power series and the Hankel expansion.
const SERIES_LIMIT: f64 = 12.0;

/// Order of a Bessel function, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BesselOrder(u8);

impl BesselOrder {
    pub const ZERO: BesselOrder = BesselOrder(0);
    pub const HALF: BesselOrder = BesselOrder(1);
    pub const ONE: BesselOrder = BesselOrder(2);
    pub const THREE_HALVES: BesselOrder = BesselOrder(3);

    /// Order `num/den`; only denominators 1 and 2 and values in {0, 1/2, 1, 3/2}.
    pub fn new(num: u32, den: u32) -> Result<Self> {
        let twice = match den {
            1 => num.checked_mul(2),
            2 => Some(num),
            _ => None,
        };
        match twice {
            Some(t) if t <= 3 => Ok(BesselOrder(t as u8)),
            _ => Err(QdomError::OrderDomain(format!("{num}/{den}"))),
        }
    }

    pub fn from_f64(nu: f64) -> Result<Self> {
        let twice = 2.0 * nu;
        if twice.fract() != 0.0 || !(0.0..=3.0).contains(&twice) {
            return Err(QdomError::OrderDomain(nu.to_string()));
        }
        Ok(BesselOrder(twice as u8))
    }

    /// n/2 for dimension n.
    pub fn half_dim(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(BesselOrder(n as u8))
    }

    /// (n-2)/2 for dimension n.
    pub fn half_dim_minus_one(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(BesselOrder(n as u8 - 2))
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn is_half_integer(self) -> bool {
        self.0 % 2 == 1
    }

    /// Gamma(nu + 1).
    fn gamma_plus_one(self) -> f64 {
        match self.0 {
            0 | 2 => 1.0,
            1 => PI.sqrt() / 2.0,
            _ => 0.75 * PI.sqrt(),
        }
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(QdomError::Config(format!(
            "dimension {n} not supported (2 or 3)"
        )))
    }
}

/// J_nu(x) for x >= 0.
pub fn bessel_j(nu: BesselOrder, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(QdomError::Domain(format!(
            "bessel_j needs finite x >= 0, got {x}"
        )));
    }
    Ok(j_unchecked(i32::from(nu.0), x))
}

/// Y_nu(x) for x > 0.
pub fn bessel_y(nu: BesselOrder, x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(QdomError::Domain(format!(
            "bessel_y is singular at x <= 0, got {x}"
        )));
    }
    Ok(match nu.0 {
        0 => y0(x),
        2 => y1(x),
        1 => -(2.0 / (PI * x)).sqrt() * x.cos(),
        _ => (2.0 / (PI * x)).sqrt() * (-x.cos() / x - x.sin()),
    })
}

/// J of order `twice/2`, also accepting -1/2 (used for derivatives).
fn j_unchecked(twice: i32, x: f64) -> f64 {
    match twice {
        -1 => {
            if x == 0.0 {
                f64::INFINITY
            } else {
                (2.0 / (PI * x)).sqrt() * x.cos()
            }
        }
        0 => {
            if x <= SERIES_LIMIT {
                j_series(BesselOrder::ZERO, x)
            } else {
                hankel_j(0.0, x)
            }
        }
        2 => {
            if x <= SERIES_LIMIT {
                j_series(BesselOrder::ONE, x)
            } else {
                hankel_j(1.0, x)
            }
        }
        1 => {
            if x == 0.0 {
                0.0
            } else {
                (2.0 / (PI * x)).sqrt() * x.sin()
            }
        }
        3 => {
            if x < 0.5 {
                j_series(BesselOrder::THREE_HALVES, x)
            } else {
                (2.0 / (PI * x)).sqrt() * (x.sin() / x - x.cos())
            }
        }
        _ => unreachable!("order {twice}/2 is not used internally"),
    }
}

/// Ascending series sum_k (-1)^k (x/2)^(2k+nu) / (k! Gamma(k+nu+1)).
fn j_series(nu: BesselOrder, x: f64) -> f64 {
    let v = nu.value();
    if x == 0.0 {
        return if nu.0 == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let q = -half * half;
    let mut term = half.powf(v) / nu.gamma_plus_one();
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + v));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && k > half {
            break;
        }
        k += 1.0;
        if k > 300.0 {
            break;
        }
    }
    sum
}

/// Hankel asymptotic amplitudes (P, Q) for order `v` at large `x`.
fn hankel_pq(v: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * v * v;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0_f64;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        a *= (mu - odd * odd) / (kf * 8.0 * x);
        if a.abs() > prev || a == 0.0 {
            break;
        }
        prev = a.abs();
        // a_k carries x^-k; signs alternate every second term
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}

fn hankel_j(v: f64, x: f64) -> f64 {
    let (p, q) = hankel_pq(v, x);
    let chi = x - (0.5 * v + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

fn hankel_y(v: f64, x: f64) -> f64 {
    let (p, q) = hankel_pq(v, x);
    let chi = x - (0.5 * v + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.sin() + q * chi.cos())
}

fn y0(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        return hankel_y(0.0, x);
    }
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        harmonic += 1.0 / k;
        let add = -term * harmonic;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs().max(1e-300) && k > 0.5 * x {
            break;
        }
        k += 1.0;
        if k > 300.0 {
            break;
        }
    }
    FRAC_2_PI * (((0.5 * x).ln() + EULER_GAMMA) * j_series(BesselOrder::ZERO, x) + sum)
}

fn y1(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        return hankel_y(1.0, x);
    }
    let half = 0.5 * x;
    let q = -half * half;
    // k = 0 term: (H_0 + H_1) (x/2) / (0! 1!)
    let mut term = half;
    let mut h_k = 0.0;
    let mut h_k1 = 1.0;
    let mut sum = term * (h_k + h_k1);
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + 1.0));
        h_k += 1.0 / k;
        h_k1 += 1.0 / (k + 1.0);
        let add = term * (h_k + h_k1);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() && k > half {
            break;
        }
        k += 1.0;
        if k > 300.0 {
            break;
        }
    }
    FRAC_2_PI * (half.ln() + EULER_GAMMA) * j_series(BesselOrder::ONE, x) - FRAC_2_PI / x - sum / PI
}

/// d/dx J_nu(x) = J_{nu-1}(x) - (nu/x) J_nu(x), with J_0' = -J_1.
fn j_derivative(nu: BesselOrder, x: f64) -> f64 {
    let t = i32::from(nu.0);
    if t == 0 {
        -j_unchecked(2, x)
    } else {
        j_unchecked(t - 2, x) - nu.value() / x * j_unchecked(t, x)
    }
}

/// The m-th positive zero j_{nu,m} of J_nu (m >= 1).
pub fn bessel_zero(nu: BesselOrder, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(QdomError::Domain("zero index m must be >= 1".into()));
    }
    let v = nu.value();
    let mu = 4.0 * v * v;
    let beta = (m as f64 + 0.5 * v - 0.25) * PI;
    let eight_beta = 8.0 * beta;
    let guess = beta
        - (mu - 1.0) / eight_beta
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * eight_beta.powi(3));

    let f = |x: f64| j_unchecked(i32::from(nu.0), x);
    // McMahon is within ~0.01 of the zero for these orders; zeros are ~pi apart.
    let mut lo = (guess - 0.8).max(1e-8);
    let mut hi = guess + 0.8;
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(QdomError::NotConverged(format!(
            "no sign change bracketing j_{{{v},{m}}} around {guess}"
        )));
    }
    let mut x = guess;
    for _ in 0..100 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == (flo < 0.0) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        let mut next = x - fx / j_derivative(nu, x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Radial profile of the outgoing-free fundamental solution
/// Psi_k(r) = -(1/4) (k / 2 pi)^((n-2)/2) r^(-(n-2)/2) Y_{(n-2)/2}(k r),
/// normalised so that -(Delta + k^2) Psi_k = delta.
pub fn fundamental_solution(n: usize, k: f64, r: f64) -> Result<f64> {
    let nu = BesselOrder::half_dim_minus_one(n)?;
    if k <= 0.0 || !k.is_finite() {
        return Err(QdomError::Domain(format!(
            "wavenumber must be > 0, got {k}"
        )));
    }
    if r <= 0.0 {
        return Err(QdomError::Domain(
            "fundamental solution is singular at r = 0".into(),
        ));
    }
    let e = nu.value();
    Ok(-0.25 * (k / (2.0 * PI)).powf(e) * r.powf(-e) * bessel_y(nu, k * r)?)
}

/// Mean of Psi_k over a ball of radius `rho` centred at the singularity.
pub fn fundamental_solution_ball_mean(n: usize, k: f64, rho: f64) -> Result<f64> {
    check_dim(n)?;
    if k <= 0.0 || rho <= 0.0 {
        return Err(QdomError::Domain(
            "ball mean needs k > 0 and rho > 0".into(),
        ));
    }
    let kr = k * rho;
    if n == 2 {
        // int_0^rho r Y0(kr) dr = rho Y1(k rho)/k + 2/(pi k^2)
        let inner = rho * y1(kr) / k + 2.0 / (PI * k * k);
        Ok(-inner / (2.0 * rho * rho))
    } else {
        let integral = rho * kr.sin() / k + (kr.cos() - 1.0) / (k * k);
        Ok(integral / (4.0 / 3.0 * PI * rho.powi(3)))
    }
}

/// Volume of the n-ball of radius r.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    match n {
        2 => PI * r * r,
        3 => 4.0 / 3.0 * PI * r.powi(3),
        _ => f64::NAN,
    }
}

/// Mean-value constant c_k(r) = (2 pi r / k)^(n/2) J_{n/2}(k r): the weight
/// that makes B_r a k-quadrature domain for a point mass at its centre.
pub fn ball_capacity(n: usize, k: f64, r: f64) -> Result<f64> {
    let nu = BesselOrder::half_dim(n)?;
    if r < 0.0 || k < 0.0 {
        return Err(QdomError::Domain("ball_capacity needs k, r >= 0".into()));
    }
    if k == 0.0 {
        return Ok(ball_volume(n, r));
    }
    Ok((2.0 * PI * r / k).powf(nu.value()) * bessel_j(nu, k * r)?)
}

/// R_k = j_{(n-2)/2, 1} / k, the largest radius on which c_k is increasing.
pub fn capacity_radius(n: usize, k: f64) -> Result<f64> {
    if k <= 0.0 {
        return Err(QdomError::Domain("capacity radius needs k > 0".into()));
    }
    Ok(bessel_zero(BesselOrder::half_dim_minus_one(n)?, 1)? / k)
}

/// c_k(R_k): the largest total mass for which full-space balayage exists.
pub fn capacity_bound(n: usize, k: f64) -> Result<f64> {
    ball_capacity(n, k, capacity_radius(n, k)?)
}

/// Radial Helmholtz solution r^(1-n/2) J_{n/2-1}(k r), continuous at r = 0.
pub fn radial_solution(n: usize, k: f64, r: f64) -> Result<f64> {
    let nu = BesselOrder::half_dim_minus_one(n)?;
    let e = nu.value();
    if r == 0.0 || (k * r) < 1e-8 {
        return Ok((0.5 * k).powf(e) / nu.gamma_plus_one());
    }
    Ok(r.powf(-e) * bessel_j(nu, k * r)?)
}
