//! The twelve summary functions of one masked series and their
//! vector-Jacobian products with respect to the window weights.
//!
//! Conventions: `x`, `m`, `w` have one entry per hour `t = 1..=T`; the
//! effective weight of an hour is `v_t = w_t · m_t` for value summaries and
//! `w_t` for missingness summaries. Every denominator `s` is replaced by
//! `max(s, ε)` with `ε = 1e-8`, so a window without support evaluates to 0
//! (1/ε for the slope standard error) instead of NaN.

use super::{Relaxation, SummaryKind};
use crate::scalar::{sigmoid, Scalar};

/// Denominator guard.
pub const EPS: f64 = 1e-8;

/// `(max(den, ε), 1 if den ≥ ε else 0)`; the second value is the derivative
/// of the guarded denominator with respect to `den`.
#[inline]
fn guarded<T: Scalar>(den: T) -> (T, T) {
    let eps = T::lit(EPS);
    if den >= eps {
        (den, T::one())
    } else {
        (eps, T::zero())
    }
}

#[inline]
fn hour<T: Scalar>(k: usize) -> T {
    T::from_usize_lossy(k + 1)
}

/// `Σ v s / max(Σ v, ε)`.
struct Ratio<T> {
    value: T,
    denom: T,
    active: T,
}

fn ratio<T: Scalar>(len: usize, s: impl Fn(usize) -> T, v: impl Fn(usize) -> T) -> Ratio<T> {
    let (mut num, mut den) = (T::zero(), T::zero());
    for k in 0..len {
        let vk = v(k);
        num += vk * s(k);
        den += vk;
    }
    let (denom, active) = guarded(den);
    Ratio {
        value: num / denom,
        denom,
        active,
    }
}

impl<T: Scalar> Ratio<T> {
    #[inline]
    fn d_weight(&self, s_k: T) -> T {
        (s_k - self.active * self.value) / self.denom
    }
}

/// Reliability-weighted unbiased variance `Q · S0 / max(S0² − S2, ε)` with
/// `Q = Σ v (y − ȳ)²` and `ȳ` the weighted mean. With 0/1 weights and fewer
/// than two supported points `Q` is exactly 0, so the value is 0.
struct Variance<T> {
    value: T,
    s0: T,
    a: T,
    active: T,
    mean: T,
    q: T,
    den: T,
    den_active: T,
}

fn weighted_variance<T: Scalar>(len: usize, y: impl Fn(usize) -> T, v: impl Fn(usize) -> T) -> Variance<T> {
    let (mut s0, mut s1, mut s2) = (T::zero(), T::zero(), T::zero());
    for k in 0..len {
        let vk = v(k);
        s0 += vk;
        s1 += vk * y(k);
        s2 += vk * vk;
    }
    let (a, active) = guarded(s0);
    let mean = s1 / a;
    let mut q = T::zero();
    for k in 0..len {
        let r = y(k) - mean;
        q += v(k) * r * r;
    }
    let (den, den_active) = guarded(s0 * s0 - s2);
    Variance {
        value: q * s0 / den,
        s0,
        a,
        active,
        mean,
        q,
        den,
        den_active,
    }
}

impl<T: Scalar> Variance<T> {
    /// `∂V/∂v_k`.
    fn d_weight(&self, y_k: T, v_k: T) -> T {
        let two = T::lit(2.0);
        // Σ v (y − ȳ); zero unless the mean denominator is guarded
        let resid = self.mean * (self.a - self.s0);
        let d_mean = (y_k - self.active * self.mean) / self.a;
        let r = y_k - self.mean;
        let d_q = r * r - two * resid * d_mean;
        (d_q * self.s0 + self.q) / self.den
            - self.den_active * self.q * self.s0 * two * (self.s0 - v_k) / (self.den * self.den)
    }
}

/// Weighted least-squares line through `(t, y_t)`.
struct Line<T> {
    s0: T,
    a: T,
    active: T,
    t_bar: T,
    y_bar: T,
    sxy: T,
    d: T,
    d_active: T,
}

fn weighted_line<T: Scalar>(len: usize, y: impl Fn(usize) -> T, v: impl Fn(usize) -> T) -> Line<T> {
    let (mut s0, mut st, mut sy) = (T::zero(), T::zero(), T::zero());
    for k in 0..len {
        let vk = v(k);
        s0 += vk;
        st += vk * hour::<T>(k);
        sy += vk * y(k);
    }
    let (a, active) = guarded(s0);
    let t_bar = st / a;
    let y_bar = sy / a;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for k in 0..len {
        let vk = v(k);
        let dt = hour::<T>(k) - t_bar;
        sxx += vk * dt * dt;
        sxy += vk * dt * (y(k) - y_bar);
    }
    let (d, d_active) = guarded(sxx);
    Line {
        s0,
        a,
        active,
        t_bar,
        y_bar,
        sxy,
        d,
        d_active,
    }
}

impl<T: Scalar> Line<T> {
    fn slope(&self) -> T {
        self.sxy / self.d
    }

    fn stderr(&self) -> T {
        T::one() / self.d
    }

    /// `(∂Sxx/∂v_k, ∂Sxy/∂v_k)`.
    fn d_sums(&self, k: usize, y_k: T) -> (T, T) {
        let two = T::lit(2.0);
        let gap = self.a - self.s0;
        let (rt, ry) = (self.t_bar * gap, self.y_bar * gap);
        let t_k = hour::<T>(k);
        let d_tbar = (t_k - self.active * self.t_bar) / self.a;
        let d_ybar = (y_k - self.active * self.y_bar) / self.a;
        let dt = t_k - self.t_bar;
        let d_sxx = dt * dt - two * rt * d_tbar;
        let d_sxy = dt * (y_k - self.y_bar) - d_tbar * ry - d_ybar * rt;
        (d_sxx, d_sxy)
    }

    fn d_slope(&self, k: usize, y_k: T) -> T {
        let (d_sxx, d_sxy) = self.d_sums(k, y_k);
        d_sxy / self.d - self.d_active * self.sxy * d_sxx / (self.d * self.d)
    }

    fn d_stderr(&self, k: usize, y_k: T) -> T {
        let (d_sxx, _) = self.d_sums(k, y_k);
        -self.d_active * d_sxx / (self.d * self.d)
    }
}

#[inline]
fn switch_at<T: Scalar>(m: &[T], k: usize) -> T {
    if k + 1 < m.len() {
        (m[k + 1] - m[k]).abs()
    } else {
        T::zero()
    }
}

pub fn mean<T: Scalar>(x: &[T], m: &[T], w: &[T]) -> T {
    ratio(x.len(), |k| x[k], |k| w[k] * m[k]).value
}

pub fn variance<T: Scalar>(x: &[T], m: &[T], w: &[T]) -> T {
    weighted_variance(x.len(), |k| x[k], |k| w[k] * m[k]).value
}

/// `σ(Σ w m / max(τ Σ w, ε))`; 0.5 when nothing is measured in the window.
pub fn ever_measured<T: Scalar>(m: &[T], w: &[T], temperature: T) -> T {
    let (a, b) = m
        .iter()
        .zip(w)
        .fold((T::zero(), T::zero()), |(a, b), (&mk, &wk)| (a + wk * mk, b + wk));
    sigmoid(a / guarded(temperature * b).0)
}

/// Zero-temperature limit of [`ever_measured`]: 1 if measured inside the window, else 0.5.
pub fn ever_measured_hard<T: Scalar>(m: &[T], w: &[T]) -> T {
    let a: T = m.iter().zip(w).map(|(&mk, &wk)| wk * mk).sum();
    if a > T::zero() {
        T::one()
    } else {
        T::lit(0.5)
    }
}

pub fn indicator_mean<T: Scalar>(m: &[T], w: &[T]) -> T {
    ratio(m.len(), |k| m[k], |k| w[k]).value
}

pub fn indicator_variance<T: Scalar>(m: &[T], w: &[T]) -> T {
    weighted_variance(m.len(), |k| m[k], |k| w[k]).value
}

/// `Σ_{t<T} w_t |m_{t+1} − m_t| / max(Σ_t w_t, ε)`.
pub fn switch_count<T: Scalar>(m: &[T], w: &[T]) -> T {
    ratio(m.len(), |k| switch_at(m, k), |k| w[k]).value
}

/// First measured hour divided by `T`; 1.0 when never measured.
pub fn first_measured<T: Scalar>(m: &[T]) -> T {
    let total = T::from_usize_lossy(m.len());
    m.iter()
        .position(|&v| v == T::one())
        .map_or(T::one(), |k| hour::<T>(k) / total)
}

/// Last measured hour divided by `T`; 0.0 when never measured.
pub fn last_measured<T: Scalar>(m: &[T]) -> T {
    let total = T::from_usize_lossy(m.len());
    m.iter()
        .rposition(|&v| v == T::one())
        .map_or(T::zero(), |k| hour::<T>(k) / total)
}

pub fn frac_above<T: Scalar>(x: &[T], m: &[T], w: &[T], phi: T, temperature: T) -> T {
    ratio(x.len(), |k| sigmoid((x[k] - phi) / temperature), |k| w[k] * m[k]).value
}

pub fn frac_below<T: Scalar>(x: &[T], m: &[T], w: &[T], phi: T, temperature: T) -> T {
    ratio(x.len(), |k| sigmoid((phi - x[k]) / temperature), |k| w[k] * m[k]).value
}

pub fn frac_above_hard<T: Scalar>(x: &[T], m: &[T], w: &[T], phi: T) -> T {
    ratio(
        x.len(),
        |k| if x[k] > phi { T::one() } else { T::zero() },
        |k| w[k] * m[k],
    )
    .value
}

pub fn frac_below_hard<T: Scalar>(x: &[T], m: &[T], w: &[T], phi: T) -> T {
    ratio(
        x.len(),
        |k| if x[k] < phi { T::one() } else { T::zero() },
        |k| w[k] * m[k],
    )
    .value
}

pub fn slope<T: Scalar>(x: &[T], m: &[T], w: &[T]) -> T {
    weighted_line(x.len(), |k| x[k], |k| w[k] * m[k]).slope()
}

/// `1 / max(Σ v (t − t̄)², ε)`.
pub fn slope_stderr<T: Scalar>(x: &[T], m: &[T], w: &[T]) -> T {
    weighted_line(x.len(), |k| x[k], |k| w[k] * m[k]).stderr()
}

/// Per-variable inputs shared by every summary of one series.
#[derive(Clone, Copy, Debug)]
pub struct SummaryContext<T> {
    pub phi_plus: T,
    pub phi_minus: T,
    pub temperature: T,
    pub relaxation: Relaxation,
}

/// Value of summary `kind` on one series with window column `w`.
pub fn evaluate<T: Scalar>(kind: SummaryKind, x: &[T], m: &[T], w: &[T], ctx: &SummaryContext<T>) -> T {
    let hard = ctx.relaxation == Relaxation::Hard;
    match kind {
        SummaryKind::Mean => mean(x, m, w),
        SummaryKind::Variance => variance(x, m, w),
        SummaryKind::EverMeasured if hard => ever_measured_hard(m, w),
        SummaryKind::EverMeasured => ever_measured(m, w, ctx.temperature),
        SummaryKind::IndicatorMean => indicator_mean(m, w),
        SummaryKind::IndicatorVariance => indicator_variance(m, w),
        SummaryKind::SwitchCount => switch_count(m, w),
        SummaryKind::FirstMeasured => first_measured(m),
        SummaryKind::LastMeasured => last_measured(m),
        SummaryKind::FracAbove if hard => frac_above_hard(x, m, w, ctx.phi_plus),
        SummaryKind::FracAbove => frac_above(x, m, w, ctx.phi_plus, ctx.temperature),
        SummaryKind::FracBelow if hard => frac_below_hard(x, m, w, ctx.phi_minus),
        SummaryKind::FracBelow => frac_below(x, m, w, ctx.phi_minus, ctx.temperature),
        SummaryKind::Slope => slope(x, m, w),
        SummaryKind::SlopeStderr => slope_stderr(x, m, w),
    }
}

/// Back-propagates `upstream = ∂L/∂h` through the relaxed summary.
///
/// Adds `upstream · ∂h/∂w_t` into `grad_w` and returns `upstream · ∂h/∂φ` for
/// the threshold summaries (0 otherwise). Hard summaries and the first/last
/// measured times are constants of the batch and contribute nothing.
pub fn backward<T: Scalar>(
    kind: SummaryKind,
    x: &[T],
    m: &[T],
    w: &[T],
    ctx: &SummaryContext<T>,
    upstream: T,
    grad_w: &mut [T],
) -> T {
    if ctx.relaxation == Relaxation::Hard || upstream == T::zero() {
        return T::zero();
    }
    let len = x.len();
    let tau = ctx.temperature;
    match kind {
        SummaryKind::Mean => {
            let r = ratio(len, |k| x[k], |k| w[k] * m[k]);
            for k in 0..len {
                grad_w[k] += upstream * m[k] * r.d_weight(x[k]);
            }
            T::zero()
        }
        SummaryKind::Variance => {
            let v = weighted_variance(len, |k| x[k], |k| w[k] * m[k]);
            for k in 0..len {
                grad_w[k] += upstream * m[k] * v.d_weight(x[k], w[k] * m[k]);
            }
            T::zero()
        }
        SummaryKind::EverMeasured => {
            let (a, b) = m
                .iter()
                .zip(w)
                .fold((T::zero(), T::zero()), |(a, b), (&mk, &wk)| (a + wk * mk, b + wk));
            let (den, active) = guarded(tau * b);
            let u = a / den;
            let ds = upstream * sigmoid(u) * sigmoid(-u);
            for k in 0..len {
                grad_w[k] += ds * (m[k] / den - active * a * tau / (den * den));
            }
            T::zero()
        }
        SummaryKind::IndicatorMean => {
            let r = ratio(len, |k| m[k], |k| w[k]);
            for k in 0..len {
                grad_w[k] += upstream * r.d_weight(m[k]);
            }
            T::zero()
        }
        SummaryKind::IndicatorVariance => {
            let v = weighted_variance(len, |k| m[k], |k| w[k]);
            for k in 0..len {
                grad_w[k] += upstream * v.d_weight(m[k], w[k]);
            }
            T::zero()
        }
        SummaryKind::SwitchCount => {
            let r = ratio(len, |k| switch_at(m, k), |k| w[k]);
            for k in 0..len {
                grad_w[k] += upstream * r.d_weight(switch_at(m, k));
            }
            T::zero()
        }
        SummaryKind::FirstMeasured | SummaryKind::LastMeasured => T::zero(),
        SummaryKind::FracAbove | SummaryKind::FracBelow => {
            let above = kind == SummaryKind::FracAbove;
            let phi = if above { ctx.phi_plus } else { ctx.phi_minus };
            let s = |k: usize| {
                if above {
                    sigmoid((x[k] - phi) / tau)
                } else {
                    sigmoid((phi - x[k]) / tau)
                }
            };
            let r = ratio(len, s, |k| w[k] * m[k]);
            // ∂s/∂φ = ∓ s (1 − s) / τ
            let sign = if above { -T::one() } else { T::one() };
            let mut d_phi = T::zero();
            for k in 0..len {
                let z = if above { (x[k] - phi) / tau } else { (phi - x[k]) / tau };
                let s_k = sigmoid(z);
                grad_w[k] += upstream * m[k] * r.d_weight(s_k);
                d_phi += w[k] * m[k] * s_k * sigmoid(-z);
            }
            upstream * sign * d_phi / (tau * r.denom)
        }
        SummaryKind::Slope => {
            let line = weighted_line(len, |k| x[k], |k| w[k] * m[k]);
            for k in 0..len {
                grad_w[k] += upstream * m[k] * line.d_slope(k, x[k]);
            }
            T::zero()
        }
        SummaryKind::SlopeStderr => {
            let line = weighted_line(len, |k| x[k], |k| w[k] * m[k]);
            for k in 0..len {
                grad_w[k] += upstream * m[k] * line.d_stderr(k, x[k]);
            }
            T::zero()
        }
    }
}
