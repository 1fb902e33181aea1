//! Geometry primitives, beam measurements and the hit-likelihood kernel.
//!
//! A lidar beam contributes a first-order statistic `λ` to every point of the
//! plane. Twice the accumulated statistic is the occupancy log-odds, so the
//! probability of a location being occupied is `1 / (1 + exp(-2λ))`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Beams shorter than this have no usable direction and are rejected.
pub const DEGENERATE_RANGE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    pub fn origin() -> Self {
        Point2::new(T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates the vector counter-clockwise by `angle` radians.
    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn cast<U: Scalar>(self) -> Point2<U> {
        Point2::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()))
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Scalar> Neg for Point2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Point2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-π, π]`. Angles already in range are returned
/// unchanged, so normalization is idempotent bit-for-bit.
pub fn normalize_angle<T: Scalar>(angle: T) -> T {
    let pi = T::PI();
    if angle > -pi && angle <= pi {
        return angle;
    }
    let two_pi = pi + pi;
    let mut a = angle % two_pi;
    if a <= -pi {
        a = a + two_pi;
    } else if a > pi {
        a = a - two_pi;
    }
    a
}

/// Sensor pose in the map frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2<T> {
    position: Point2<T>,
    heading: T,
}

impl<T: Scalar> Pose2<T> {
    /// Builds a pose, normalizing `heading` into `(-π, π]`.
    pub fn new(position: Point2<T>, heading: T) -> Result<Self> {
        if !position.is_finite() || !heading.is_finite() {
            return Err(Error::invalid("pose must be finite"));
        }
        Ok(Pose2 {
            position,
            heading: normalize_angle(heading),
        })
    }

    pub fn from_xyh(x: T, y: T, heading: T) -> Result<Self> {
        Pose2::new(Point2::new(x, y), heading)
    }

    pub fn identity() -> Self {
        Pose2 {
            position: Point2::origin(),
            heading: T::zero(),
        }
    }

    pub fn position(&self) -> Point2<T> {
        self.position
    }

    pub fn heading(&self) -> T {
        self.heading
    }

    /// Maps a body-frame vector into the map frame (rotation only).
    pub fn rotate(&self, body: Point2<T>) -> Point2<T> {
        body.rotated(self.heading)
    }

    /// Maps a body-frame point into the map frame.
    pub fn transform_point(&self, body: Point2<T>) -> Point2<T> {
        self.position + self.rotate(body)
    }
}

/// One lidar beam: where the sensor was, which way the beam pointed in the
/// sensor frame, and how far it travelled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement<T> {
    pose: Pose2<T>,
    bearing: T,
    direction_body: Point2<T>,
    range: T,
    is_max_range: bool,
}

impl<T: Scalar> Measurement<T> {
    /// Builds a measurement from a body-frame unit direction.
    pub fn new(
        pose: Pose2<T>,
        direction_body: Point2<T>,
        range: T,
        is_max_range: bool,
    ) -> Result<Self> {
        if !direction_body.is_finite() {
            return Err(Error::invalid("beam direction must be finite"));
        }
        let norm = direction_body.norm();
        if (norm - T::one()).abs() > T::unit_tolerance() {
            return Err(Error::invalid(format!(
                "beam direction must be a unit vector (norm {norm})"
            )));
        }
        Self::checked(
            pose,
            direction_body.y.atan2(direction_body.x),
            direction_body,
            range,
            is_max_range,
        )
    }

    /// Builds a measurement from a body-frame bearing in radians.
    pub fn from_bearing(pose: Pose2<T>, bearing: T, range: T, is_max_range: bool) -> Result<Self> {
        if !bearing.is_finite() {
            return Err(Error::invalid("beam bearing must be finite"));
        }
        let (s, c) = bearing.sin_cos();
        Self::checked(pose, bearing, Point2::new(c, s), range, is_max_range)
    }

    fn checked(
        pose: Pose2<T>,
        bearing: T,
        direction_body: Point2<T>,
        range: T,
        is_max_range: bool,
    ) -> Result<Self> {
        if !range.is_finite() {
            return Err(Error::invalid("beam range must be finite"));
        }
        if range <= T::lit(DEGENERATE_RANGE) {
            return Err(Error::invalid(format!("degenerate beam range {range}")));
        }
        Ok(Measurement {
            pose,
            bearing,
            direction_body,
            range,
            is_max_range,
        })
    }

    pub fn pose(&self) -> Pose2<T> {
        self.pose
    }

    pub fn bearing(&self) -> T {
        self.bearing
    }

    pub fn direction_body(&self) -> Point2<T> {
        self.direction_body
    }

    pub fn range(&self) -> T {
        self.range
    }

    pub fn is_max_range(&self) -> bool {
        self.is_max_range
    }

    /// World-frame vector from the sensor to the beam end point.
    pub fn hit_vector(&self) -> Point2<T> {
        self.pose.rotate(self.direction_body * self.range)
    }

    /// World-frame beam end point.
    pub fn hit_point(&self) -> Point2<T> {
        self.pose.position + self.hit_vector()
    }

    pub(crate) fn with_pose(&self, pose: Pose2<T>) -> Self {
        Measurement { pose, ..*self }
    }
}

/// The five kernel hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparameters<T> {
    /// Magnitude of free-space evidence along the beam.
    pub sigma_f: T,
    /// Magnitude of occupancy evidence at the hit.
    pub sigma_h: T,
    /// Length scale perpendicular to the beam.
    pub l_p: T,
    /// Length scale along the beam in front of the hit (and behind the sensor).
    pub l_f: T,
    /// Length scale behind the hit.
    pub l_b: T,
}

impl<T: Scalar> Hyperparameters<T> {
    pub fn new(sigma_f: T, sigma_h: T, l_p: T, l_f: T, l_b: T) -> Result<Self> {
        let theta = Hyperparameters {
            sigma_f,
            sigma_h,
            l_p,
            l_f,
            l_b,
        };
        theta.validate()?;
        if theta.l_b > theta.l_f {
            log::warn!(
                "l_b = {} exceeds l_f = {}; the kernel decays slower behind the hit than in front",
                theta.l_b,
                theta.l_f
            );
        }
        Ok(theta)
    }

    /// Starting point `{1, 1, 0.1, 0.15, 0.05}` for training.
    pub fn fixture() -> Self {
        Hyperparameters {
            sigma_f: T::one(),
            sigma_h: T::one(),
            l_p: T::lit(0.1),
            l_f: T::lit(0.15),
            l_b: T::lit(0.05),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_f", self.sigma_f), ("sigma_h", self.sigma_h)] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("l_p", self.l_p), ("l_f", self.l_f), ("l_b", self.l_b)] {
            if !v.is_finite() || v <= T::zero() {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Parameters in the fixed order `[sigma_f, sigma_h, l_p, l_f, l_b]`.
    pub fn to_array(&self) -> [T; 5] {
        [self.sigma_f, self.sigma_h, self.l_p, self.l_f, self.l_b]
    }

    pub fn from_array(values: [T; 5]) -> Result<Self> {
        let [sigma_f, sigma_h, l_p, l_f, l_b] = values;
        let theta = Hyperparameters {
            sigma_f,
            sigma_h,
            l_p,
            l_f,
            l_b,
        };
        theta.validate()?;
        Ok(theta)
    }

    /// Largest along-beam length scale.
    pub fn axial_scale(&self) -> T {
        self.l_f.max(self.l_b)
    }
}

/// Sign of the kernel behind the sensor (`M < 0`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BehindSensorSign {
    /// `-σ_f·exp(...)`: free-space evidence fading out behind the sensor,
    /// continuous with the in-front branch at the sensor.
    #[default]
    Corrected,
    /// `+σ_f·exp(...)`, as the algorithm is usually printed.
    Verbatim,
}

/// A single beam's contribution to the first-order statistic.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LambdaValue<T>(pub T);

impl<T: Scalar> LambdaValue<T> {
    pub fn value(self) -> T {
        self.0
    }
}

/// Kernel evaluation on precomputed beam quantities; no validation.
///
/// `rel` is the query relative to the sensor, `hit` the world-frame hit
/// vector and `inv_hh = 1 / (hit·hit)`.
#[inline]
pub(crate) fn kernel_eval<T: Scalar>(
    rel: Point2<T>,
    hit: Point2<T>,
    inv_hh: T,
    theta: &Hyperparameters<T>,
    sign: BehindSensorSign,
) -> T {
    let half = T::lit(0.5);
    let m = hit.dot(rel) * inv_hh;
    let v1 = hit * m;
    let v2 = rel - v1;
    let perp = half * v2.norm_squared() / (theta.l_p * theta.l_p);
    if perp > T::lit(T::EXP_UNDERFLOW) {
        // the perpendicular factor is exactly zero in floating point
        return T::zero();
    }
    let k = if m >= T::zero() && m < T::one() {
        let v3 = hit - v1;
        (theta.sigma_h + theta.sigma_f) * (-half * v3.norm_squared() / (theta.l_f * theta.l_f)).exp()
            - theta.sigma_f
    } else if m >= T::one() {
        let v3 = hit - v1;
        theta.sigma_h * (-half * v3.norm_squared() / (theta.l_b * theta.l_b)).exp()
    } else {
        let tail = theta.sigma_f * (-half * v1.norm_squared() / (theta.l_f * theta.l_f)).exp();
        match sign {
            BehindSensorSign::Corrected => -tail,
            BehindSensorSign::Verbatim => tail,
        }
    };
    k * (-perp).exp()
}

fn check_beam<T: Scalar>(m: &Measurement<T>, query: Point2<T>) -> Result<()> {
    if !query.is_finite() {
        return Err(Error::invalid("query point must be finite"));
    }
    if !m.range.is_finite() || m.range <= T::lit(DEGENERATE_RANGE) {
        return Err(Error::invalid(format!("degenerate beam range {}", m.range)));
    }
    if !m.pose.position.is_finite() || !m.pose.heading.is_finite() || !m.direction_body.is_finite() {
        return Err(Error::invalid("measurement must be finite"));
    }
    Ok(())
}

/// Evaluates the hit-likelihood kernel of one beam at `query`.
///
/// The result lies in `[-σ_f, σ_h]`. Max-range beams are accepted here and
/// treated like hits; callers decide their policy.
pub fn hit_lambda<T: Scalar>(
    m: &Measurement<T>,
    query: Point2<T>,
    theta: &Hyperparameters<T>,
) -> Result<LambdaValue<T>> {
    hit_lambda_with(m, query, theta, BehindSensorSign::Corrected)
}

pub fn hit_lambda_with<T: Scalar>(
    m: &Measurement<T>,
    query: Point2<T>,
    theta: &Hyperparameters<T>,
    sign: BehindSensorSign,
) -> Result<LambdaValue<T>> {
    check_beam(m, query)?;
    theta.validate()?;
    let hit = m.hit_vector();
    let inv_hh = T::one() / hit.norm_squared();
    let rel = query - m.pose.position;
    Ok(LambdaValue(kernel_eval(rel, hit, inv_hh, theta, sign)))
}

/// Converts an accumulated statistic into an occupancy probability,
/// `1 / (1 + exp(-2λ))`.
pub fn lambda_to_prob<T: Scalar>(lam: T) -> Result<T> {
    if !lam.is_finite() {
        return Err(Error::invalid("lambda must be finite"));
    }
    Ok(logistic(lam + lam))
}

/// Numerically stable logistic function.
pub(crate) fn logistic<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(logistic(z))` without overflow for large `|z|`.
pub(crate) fn log_logistic<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Applies the rigid transform `p -> R(rotation)·p + translation` to the
/// sensor pose. The beam itself (bearing, range, flags) is unchanged.
pub fn transform_measurement<T: Scalar>(
    m: &Measurement<T>,
    translation: Point2<T>,
    rotation: T,
) -> Result<Measurement<T>> {
    if !translation.is_finite() || !rotation.is_finite() {
        return Err(Error::invalid("transform must be finite"));
    }
    let pose = Pose2::new(
        m.pose.position.rotated(rotation) + translation,
        m.pose.heading + rotation,
    )?;
    Ok(m.with_pose(pose))
}
