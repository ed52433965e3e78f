//! Rotationally symmetric warping profiles `phi(r)` for surface pieces with
//! metric `dr^2 + phi(r)^2 dtheta^2`.
//!
//! A profile is Euclidean near the axis (`phi(r) = r` below `r0`, a smooth
//! cap), bends through a concave ramp on `[r0, r1]`, and is affine beyond
//! `r1`. The ramp is a quintic smoothstep evaluated at a warped argument
//! `u^a`; the warp exponent `a` is the one free shape parameter and is
//! solved for when a profile must hit an exact target value at `r1` (disk
//! pieces need circumference exactly 1 at the boundary). The warped
//! smoothstep still integrates in closed form, so `phi`, `phi'`, `phi''`
//! are all exact expressions — no quadrature anywhere.

use serde::Serialize;
use thiserror::Error;

/// Unit-circumference disk boundary: `phi(r1) = 1 / (2 pi)`.
pub const DISK_TARGET: f64 = 1.0 / (2.0 * std::f64::consts::PI);

/// Warp exponents outside this window make `phi'''` blow up at the inner
/// junction (below) or the ramp needlessly violent (above).
const WARP_MIN: f64 = 0.7;
const WARP_MAX: f64 = 8.0;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("ramp interval is empty or inverted: r0 = {r0}, r1 = {r1}")]
    BadInterval { r0: f64, r1: f64 },
    #[error(
        "no concave ramp on [{r0}, {r1}] reaches boundary circumference 1; \
         feasible circumference interval is ({lo:.6}, {hi:.6})"
    )]
    InfeasibleRamp { r0: f64, r1: f64, lo: f64, hi: f64 },
}

/// Quintic smoothstep `S(x) = x^3 (10 - 15 x + 6 x^2)` on [0, 1].
#[inline]
fn smoothstep(x: f64) -> f64 {
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// Quintic smoothstep with its first two derivatives, extended by constants
/// outside `[0, 1]` (so the extension is C^2 but the second derivative
/// vanishes at the junctions, keeping the extension exact there).
pub fn smoothstep_jet(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let s = smoothstep(x);
        let d = 30.0 * x * x * (1.0 - x) * (1.0 - x);
        let dd = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
        (s, d, dd)
    }
}

/// `d/du S(u^a) = 30 a u^(3a-1) (1 - u^a)^2`.
#[inline]
fn smoothstep_warp_deriv(u: f64, a: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let ua = u.powf(a);
    30.0 * a * u.powf(3.0 * a - 1.0) * (1.0 - ua) * (1.0 - ua)
}

/// `T(u; a) = int_0^u S(s^a) ds` in closed form.
#[inline]
fn smoothstep_warp_integral(u: f64, a: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    10.0 * u.powf(3.0 * a + 1.0) / (3.0 * a + 1.0) - 15.0 * u.powf(4.0 * a + 1.0) / (4.0 * a + 1.0)
        + 6.0 * u.powf(5.0 * a + 1.0) / (5.0 * a + 1.0)
}

/// Fraction of the ramp width accumulated by `phi'` relative to a constant
/// slope: `phi(r1) = r0 + W (1 - drop * T(1; a))` with `drop = 1 - slope1`.
#[inline]
fn ramp_t1(a: f64) -> f64 {
    smoothstep_warp_integral(1.0, a)
}

/// A warping profile with slope 1 below `r0` ramping to `slope1` above `r1`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RampProfile {
    pub r0: f64,
    pub r1: f64,
    pub slope1: f64,
    pub warp: f64,
    /// Cached `phi(r1)`.
    value_r1: f64,
}

impl RampProfile {
    pub fn new(r0: f64, r1: f64, slope1: f64, warp: f64) -> Result<Self, ProfileError> {
        if !(r0 > 0.0 && r1 > r0) {
            return Err(ProfileError::BadInterval { r0, r1 });
        }
        let w = r1 - r0;
        let drop = 1.0 - slope1;
        let value_r1 = r0 + w * (1.0 - drop * ramp_t1(warp));
        Ok(RampProfile {
            r0,
            r1,
            slope1,
            warp,
            value_r1,
        })
    }

    pub fn phi(&self, r: f64) -> f64 {
        if r <= self.r0 {
            return r;
        }
        if r >= self.r1 {
            return self.value_r1 + self.slope1 * (r - self.r1);
        }
        let w = self.r1 - self.r0;
        let u = (r - self.r0) / w;
        let drop = 1.0 - self.slope1;
        self.r0 + w * (u - drop * smoothstep_warp_integral(u, self.warp))
    }

    pub fn dphi(&self, r: f64) -> f64 {
        if r <= self.r0 {
            return 1.0;
        }
        if r >= self.r1 {
            return self.slope1;
        }
        let u = (r - self.r0) / (self.r1 - self.r0);
        1.0 - (1.0 - self.slope1) * smoothstep(u.powf(self.warp))
    }

    pub fn d2phi(&self, r: f64) -> f64 {
        if r <= self.r0 || r >= self.r1 {
            return 0.0;
        }
        let w = self.r1 - self.r0;
        let u = (r - self.r0) / w;
        -(1.0 - self.slope1) * smoothstep_warp_deriv(u, self.warp) / w
    }

    /// Gauss curvature of the surface `dr^2 + phi^2 dtheta^2`.
    pub fn gauss_curvature(&self, r: f64) -> f64 {
        -self.d2phi(r) / self.phi(r)
    }

    /// Radius of maximal Gauss curvature (by dense scan; used to pick
    /// representative nonisotropic base points).
    pub fn peak_curvature_radius(&self) -> f64 {
        let mut best = (self.r0, 0.0);
        let n = 400;
        for i in 1..n {
            let r = self.r0 + (self.r1 - self.r0) * i as f64 / n as f64;
            let k = self.gauss_curvature(r).abs();
            if k > best.1 {
                best = (r, k);
            }
        }
        best.0
    }
}

/// Disk piece profile: slope ramps 1 -> 0 and the boundary circle at `r1`
/// has circumference exactly 1 (`phi(r1) = 1/(2 pi)`, constant beyond).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiskProfile {
    pub ramp: RampProfile,
}

/// Solve the warp exponent so that `phi(r1) = DISK_TARGET`.
pub fn build_disk_profile(r0: f64, r1: f64) -> Result<DiskProfile, ProfileError> {
    if !(r0 > 0.0 && r1 > r0) {
        return Err(ProfileError::BadInterval { r0, r1 });
    }
    let w = r1 - r0;
    let value = |a: f64| r0 + w * (1.0 - ramp_t1(a)); // slope1 = 0
    let (lo, hi) = (value(WARP_MIN), value(WARP_MAX));
    if !(DISK_TARGET > lo && DISK_TARGET < hi) {
        return Err(ProfileError::InfeasibleRamp {
            r0,
            r1,
            lo: 2.0 * std::f64::consts::PI * lo,
            hi: 2.0 * std::f64::consts::PI * hi,
        });
    }
    let mut a_lo = WARP_MIN;
    let mut a_hi = WARP_MAX;
    for _ in 0..200 {
        let mid = 0.5 * (a_lo + a_hi);
        if value(mid) < DISK_TARGET {
            a_lo = mid;
        } else {
            a_hi = mid;
        }
    }
    let ramp = RampProfile::new(r0, r1, 0.0, 0.5 * (a_lo + a_hi))?;
    Ok(DiskProfile { ramp })
}

/// Half-plane block core profile: slope ramps 1 -> 1/2, so the surface is a
/// smoothed cone of total angle pi. Beyond `r1`, `phi = r/2 + c0`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConeProfile {
    pub ramp: RampProfile,
}

impl ConeProfile {
    /// Offset `c0` with `phi(r) = r/2 + c0` on the flat cone zone.
    pub fn c0(&self) -> f64 {
        self.ramp.value_r1 - 0.5 * self.ramp.r1
    }

    /// Development radius of the flat zone: `u = r + 2 c0` maps the zone
    /// isometrically onto `{u >= u_flat}` of the standard angle-pi cone.
    pub fn u_flat(&self) -> f64 {
        self.ramp.r1 + 2.0 * self.c0()
    }
}

pub fn build_cone_profile(r0: f64, r1: f64) -> Result<ConeProfile, ProfileError> {
    let ramp = RampProfile::new(r0, r1, 0.5, 1.0)?;
    Ok(ConeProfile { ramp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn disk_profile_hits_unit_circumference_exactly() {
        let p = build_disk_profile(0.1, 0.22).unwrap();
        assert_relative_eq!(p.ramp.phi(0.22), DISK_TARGET, epsilon = 1e-12);
        assert_relative_eq!(p.ramp.phi(0.4), DISK_TARGET, epsilon = 1e-12);
        assert_relative_eq!(p.ramp.dphi(0.05), 1.0);
        assert_eq!(p.ramp.dphi(0.3), 0.0);
    }

    #[test]
    fn profile_is_concave_and_continuous() {
        let p = build_disk_profile(0.1, 0.22).unwrap().ramp;
        let mut prev = p.phi(0.0);
        for i in 1..=2000 {
            let r = 0.30 * i as f64 / 2000.0;
            assert!(p.d2phi(r) <= 1e-15, "phi'' > 0 at r = {r}");
            let v = p.phi(r);
            assert!(v >= prev - 1e-12, "phi not monotone at {r}");
            // derivative consistency by finite differences
            let h = 1e-6;
            let fd = (p.phi(r + h) - p.phi(r - h)) / (2.0 * h);
            assert!((fd - p.dphi(r)).abs() < 1e-7, "dphi mismatch at {r}");
            prev = v;
        }
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let p = build_disk_profile(0.1, 0.22).unwrap().ramp;
        for r in [0.12, 0.15, 0.18, 0.21] {
            let h = 1e-5;
            let fd = (p.dphi(r + h) - p.dphi(r - h)) / (2.0 * h);
            assert!((fd - p.d2phi(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_targets_are_rejected_with_interval() {
        // Boundary target far above what the ramp can keep: r1 too small.
        let e = build_disk_profile(0.01, 0.05).unwrap_err();
        match e {
            ProfileError::InfeasibleRamp { lo, hi, .. } => {
                assert!(lo < hi);
                assert!(hi < 1.0, "interval should exclude circumference 1");
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(matches!(
            build_disk_profile(0.3, 0.2),
            Err(ProfileError::BadInterval { .. })
        ));
    }

    #[test]
    fn cone_profile_offset_and_curvature() {
        let c = build_cone_profile(0.2, 0.5).unwrap();
        // Symmetric ramp, slope 1 -> 1/2: c0 = (r0 + r1)/4.
        assert_relative_eq!(c.c0(), 0.175, epsilon = 1e-12);
        assert_relative_eq!(c.ramp.dphi(0.6), 0.5);
        // Quasi-positive curvature: K >= 0 everywhere, K > 0 in the ramp.
        for i in 0..500 {
            let r = 0.7 * i as f64 / 500.0 + 1e-3;
            assert!(c.ramp.gauss_curvature(r) >= -1e-13);
        }
        assert!(c.ramp.gauss_curvature(0.35) > 0.1);
    }
}
