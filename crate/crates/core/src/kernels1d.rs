//! One-dimensional Brownian strip kernels on (0, 1).
//!
//! Each kernel has a theta (eigenfunction) series, fast for large times, and
//! an image (erf) series, fast for small times. The dispatching entry points
//! pick one by comparing `t` with [`SeriesControl::t_switch`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::{erf, erfc, CompensatedSum};

/// Truncation policy for the series evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesControl {
    /// Absolute tolerance on the truncation tail.
    pub tol: f64,
    pub max_terms: usize,
    /// Below this time (in the strip's own clock) the image series is used.
    pub t_switch: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_terms: 10_000,
            t_switch: 0.25,
        }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_terms == 0 || !(self.t_switch > 0.0) {
            return invalid("series control needs tol > 0, max_terms >= 1, t_switch > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    /// Bound on the neglected tail of the series.
    pub tail_bound: f64,
    pub terms_used: usize,
}

impl KernelValue {
    fn exact(value: f64) -> Self {
        Self {
            value,
            tail_bound: 0.0,
            terms_used: 0,
        }
    }
}

fn check_args(x: f64, t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return invalid(format!("strip position must lie in [0, 1], got {x}"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and nonnegative, got {t}"));
    }
    Ok(())
}

/// P_x(T_level > t) for standard Brownian motion.
pub fn hit_survival(x: f64, level: f64, t: f64) -> f64 {
    let d = (x - level).abs();
    if t <= 0.0 {
        return if d > 0.0 { 1.0 } else { 0.0 };
    }
    erf(d / (2.0 * t).sqrt())
}

/// Which terms of the sine series to keep.
#[derive(Clone, Copy)]
enum Parity {
    Odd,
    Even,
}

/// Σ_l (4/(lπ)) e^{-(lπ)² t/2} sin(πlx) over l of the given parity, l ≥ 1.
fn sine_series(x: f64, t: f64, parity: Parity, ctl: &SeriesControl) -> KernelValue {
    let mut acc = CompensatedSum::new();
    let mut l = match parity {
        Parity::Odd => 1u64,
        Parity::Even => 2,
    };
    let mut terms = 0;
    loop {
        let lf = l as f64;
        let amp = 4.0 / (lf * PI) * (-(lf * PI).powi(2) * t / 2.0).exp();
        // Tail from l onward: amplitudes shrink by at least q per step of 2.
        let q = (-PI * PI * t * (2.0 * lf + 2.0)).exp();
        let tail = if q < 1.0 {
            amp / (1.0 - q)
        } else {
            f64::INFINITY
        };
        if tail <= ctl.tol || terms >= ctl.max_terms {
            return KernelValue {
                value: acc.value(),
                tail_bound: tail,
                terms_used: terms,
            };
        }
        acc.add(amp * (PI * lf * x).sin());
        terms += 1;
        l += 2;
    }
}

/// Σ_{n≥1} s_n [erfc((n−x)/σ) − erfc((n+x)/σ)] with s_n = (−1)^n or 1.
fn image_series(x: f64, t: f64, alternating: bool, ctl: &SeriesControl) -> KernelValue {
    let s = (2.0 * t).sqrt();
    let mut acc = CompensatedSum::new();
    acc.add(erf(x / s));
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        // Remaining terms are bounded by Σ_{m≥n−1} erfc(m/σ).
        let lead = erfc((nf - 1.0) / s);
        let r = (-(2.0 * (nf - 1.0) + 1.0) / (s * s)).exp();
        let tail = if r < 1.0 {
            lead / (1.0 - r)
        } else {
            f64::INFINITY
        };
        if tail <= ctl.tol || n as usize > ctl.max_terms {
            return KernelValue {
                value: acc.value(),
                tail_bound: tail,
                terms_used: n as usize,
            };
        }
        let term = erfc((nf - x) / s) - erfc((nf + x) / s);
        let sign = if alternating && n % 2 == 1 { -1.0 } else { 1.0 };
        acc.add(sign * term);
        n += 1;
    }
}

/// Strip survival P_x(T_{0,1} > t), theta form.
pub fn strip_survival_theta(x: f64, t: f64, ctl: &SeriesControl) -> Result<KernelValue> {
    check_args(x, t)?;
    if let Some(v) = strip_survival_limits(x, t) {
        return Ok(v);
    }
    Ok(sine_series(x, t, Parity::Odd, ctl))
}

/// Strip survival P_x(T_{0,1} > t), image form.
pub fn strip_survival_images(x: f64, t: f64, ctl: &SeriesControl) -> Result<KernelValue> {
    check_args(x, t)?;
    if let Some(v) = strip_survival_limits(x, t) {
        return Ok(v);
    }
    Ok(image_series(x, t, true, ctl))
}

fn strip_survival_limits(x: f64, t: f64) -> Option<KernelValue> {
    if x == 0.0 || x == 1.0 {
        return Some(KernelValue::exact(0.0));
    }
    if t == 0.0 {
        return Some(KernelValue::exact(1.0));
    }
    None
}

/// P_x(T_{0,1} > t) for standard Brownian motion on the unit strip.
pub fn strip_survival(x: f64, t: f64, ctl: &SeriesControl) -> Result<KernelValue> {
    if t < ctl.t_switch {
        strip_survival_images(x, t, ctl)
    } else {
        strip_survival_theta(x, t, ctl)
    }
}

/// Survival on the strip (0, width): `strip_survival(x/width, t/width²)`.
pub fn strip_survival_scaled(
    x: f64,
    width: f64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<KernelValue> {
    strip_survival(x / width, t / (width * width), ctl)
}

fn top_weighted_limits(x: f64, t: f64) -> Option<KernelValue> {
    if x == 0.0 {
        return Some(KernelValue::exact(0.0));
    }
    if x == 1.0 {
        return Some(KernelValue::exact(2.0));
    }
    if t == 0.0 {
        return Some(KernelValue::exact(1.0));
    }
    None
}

/// P_x(T_{0,1} > t) + 2 P_x(T_{0,1} ≤ t, T_1 < T_0), theta form.
pub fn strip_survival_top_weighted_theta(
    x: f64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<KernelValue> {
    check_args(x, t)?;
    if let Some(v) = top_weighted_limits(x, t) {
        return Ok(v);
    }
    let mut kv = sine_series(x, t, Parity::Even, ctl);
    kv.value += 2.0 * x;
    Ok(kv)
}

/// P_x(T_{0,1} > t) + 2 P_x(T_{0,1} ≤ t, T_1 < T_0), image form.
pub fn strip_survival_top_weighted_images(
    x: f64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<KernelValue> {
    check_args(x, t)?;
    if let Some(v) = top_weighted_limits(x, t) {
        return Ok(v);
    }
    Ok(image_series(x, t, false, ctl))
}

/// Survival plus twice the probability of having left through the top edge
/// by time t. This is the pair factor of the odd-rank type A formula.
pub fn strip_survival_top_weighted(x: f64, t: f64, ctl: &SeriesControl) -> Result<KernelValue> {
    if t < ctl.t_switch {
        strip_survival_top_weighted_images(x, t, ctl)
    } else {
        strip_survival_top_weighted_theta(x, t, ctl)
    }
}

fn check_open(x: f64, t: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return invalid(format!("position must lie in (0, 1), got {x}"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("time must be positive, got {t}"));
    }
    Ok(())
}

/// P_x(T_0 > T_1 > t) in the clock of a difference of two independent
/// Brownian motions (variance 2t), theta form:
/// 2 Σ (−1)^{n+1}/(πn) e^{−π²n²t} sin(πnx).
pub fn top_exit_after_theta(x: f64, t: f64, ctl: &SeriesControl) -> Result<KernelValue> {
    check_open(x, t)?;
    let mut acc = CompensatedSum::new();
    let mut terms = 0;
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        let amp = 2.0 / (PI * nf) * (-PI * PI * nf * nf * t).exp();
        let q = (-PI * PI * t * (2.0 * nf + 1.0)).exp();
        let tail = if q < 1.0 {
            amp / (1.0 - q)
        } else {
            f64::INFINITY
        };
        if tail <= ctl.tol || terms >= ctl.max_terms {
            return Ok(KernelValue {
                value: acc.value(),
                tail_bound: tail,
                terms_used: terms,
            });
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        acc.add(sign * amp * (PI * nf * x).sin());
        terms += 1;
        n += 1;
    }
}

/// Image form of [`top_exit_after_theta`]:
/// x − Σ_{n≥0} [erfc((2n+1−x)/(2√t)) − erfc((2n+1+x)/(2√t))].
pub fn top_exit_after_images(x: f64, t: f64, ctl: &SeriesControl) -> Result<KernelValue> {
    check_open(x, t)?;
    let s = 2.0 * t.sqrt();
    let mut acc = CompensatedSum::new();
    acc.add(x);
    let mut n = 0u64;
    loop {
        let a = 2.0 * n as f64 + 1.0;
        let lead = erfc((a - 1.0) / s);
        let r = (-4.0 * (a - 1.0 + 1.0) / (s * s)).exp();
        let tail = if r < 1.0 {
            lead / (1.0 - r)
        } else {
            f64::INFINITY
        };
        if tail <= ctl.tol || n as usize >= ctl.max_terms {
            return Ok(KernelValue {
                value: acc.value(),
                tail_bound: tail,
                terms_used: n as usize,
            });
        }
        acc.add(-(erfc((a - x) / s) - erfc((a + x) / s)));
        n += 1;
    }
}

/// P_x(T_0 > T_1 > t) in the difference clock: the walk exits the strip
/// through its top edge, and does so after time t.
pub fn top_exit_after(x: f64, t: f64, ctl: &SeriesControl) -> Result<KernelValue> {
    if 2.0 * t < ctl.t_switch {
        top_exit_after_images(x, t, ctl)
    } else {
        top_exit_after_theta(x, t, ctl)
    }
}
