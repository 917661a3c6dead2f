//! Ideal 120° trapezoidal back-EMF and the three-phase ↔ stationary-frame
//! transforms.
//!
//! Angles follow the convention that phase a crosses zero (rising) at
//! `theta_e = 0`; its positive plateau spans 30°..150°. The stationary frame
//! keeps the drive's `d`/`q` labels with `d` aligned to phase a.

use std::f64::consts::{FRAC_PI_3, PI, TAU};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Phase shift of phase b relative to phase a.
pub const SHIFT_B: f64 = 2.0 * PI / 3.0;
/// Phase shift of phase c relative to phase a.
pub const SHIFT_C: f64 = 4.0 * PI / 3.0;

/// Electrical rotor angle, always normalized to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ElectricalAngle(f64);

impl ElectricalAngle {
    pub fn new(radians: f64) -> Self {
        Self(wrap_angle(radians))
    }

    pub fn from_degrees(deg: f64) -> Self {
        Self::new(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// Returns the angle advanced by `delta` radians, renormalized.
    pub fn advance(self, delta: f64) -> Self {
        Self::new(self.0 + delta)
    }

    /// Signed shortest difference `self - other` in `(-π, π]`.
    pub fn diff(self, other: Self) -> f64 {
        let mut d = self.0 - other.0;
        if d > PI {
            d -= TAU;
        } else if d <= -PI {
            d += TAU;
        }
        d
    }
}

/// Wraps any finite angle into `[0, 2π)`.
pub fn wrap_angle(radians: f64) -> f64 {
    let w = radians.rem_euclid(TAU);
    // rem_euclid can return exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// One value per phase (volts or amperes depending on context).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcTriple {
    pub const ZERO: Self = Self { a: 0.0, b: 0.0, c: 0.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn sum(&self) -> f64 {
        self.a + self.b + self.c
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.a * k, self.b * k, self.c * k)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

impl std::ops::Add for AbcTriple {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

impl std::ops::Sub for AbcTriple {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }
}

/// Stationary-frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

impl DqPair {
    pub const ZERO: Self = Self { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.d * other.d + self.q * other.q
    }

    pub fn norm(&self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

/// Normalized trapezoid: +1 on [30°, 150°], −1 on [210°, 330°], linear
/// ramps of 60° in between.
pub fn trapezoid_shape(theta_e: f64) -> f64 {
    let x = wrap_angle(theta_e);
    let ramp = FRAC_PI_3; // 60°
    let p30 = PI / 6.0;
    let p150 = 5.0 * PI / 6.0;
    let p210 = 7.0 * PI / 6.0;
    let p330 = 11.0 * PI / 6.0;
    if x < p30 {
        // rising ramp centred on 0: value 0 at 0, +1 at 30°
        x / (ramp / 2.0)
    } else if x <= p150 {
        1.0
    } else if x < p210 {
        1.0 - 2.0 * (x - p150) / ramp
    } else if x <= p330 {
        -1.0
    } else {
        -1.0 + 2.0 * (x - p330) / ramp
    }
}

/// Unit shape of each phase at the given electrical angle.
pub fn phase_shapes(theta_e: f64) -> AbcTriple {
    AbcTriple::new(
        trapezoid_shape(theta_e),
        trapezoid_shape(theta_e - SHIFT_B),
        trapezoid_shape(theta_e - SHIFT_C),
    )
}

/// Per-phase back-EMF for mechanical speed `omega_r` and back-EMF constant `ke`.
pub fn phase_backemfs(theta_e: ElectricalAngle, omega_r: f64, ke: f64) -> AbcTriple {
    phase_shapes(theta_e.radians()).scale(ke * omega_r)
}

/// Amplitude-invariant Clarke transform; the zero-sequence part is dropped.
pub fn clarke(x: AbcTriple) -> DqPair {
    DqPair {
        d: (2.0 / 3.0) * (x.a - 0.5 * x.b - 0.5 * x.c),
        q: (x.b - x.c) / SQRT3,
    }
}

pub fn inverse_clarke(x: DqPair) -> AbcTriple {
    let h = 0.5 * SQRT3 * x.q;
    let a = x.d;
    let b = -0.5 * x.d + h;
    // c written as -(a + b) so that the triple sums to zero exactly
    AbcTriple::new(a, b, -(a + b))
}
