//! Scatterer-ring geometry shared by the correlation models and the
//! Monte-Carlo channel synthesizer.
//!
//! Conventions (all coordinates in meters, ring center at the origin):
//!
//! * Outdoor: the receiver pair straddles the ring center, the user at
//!   `-(d/2)·u` and the attack node at `+(d/2)·u` where `u = (cos θ_R,
//!   sin θ_R)`; the base station sits far away at `(-D, 0)`.
//! * Indoor: the transmitter sits at `(-D/2, 0)`, the midpoint of the
//!   receiver pair at `(+D/2, 0)`; the legitimate receiver is at that
//!   midpoint minus `(d/2)·u`, the attack node at plus `(d/2)·u`.
//!
//! Scatterers occupy the ring `exclusion_radius <= r <= ring_radius` minus
//! an exclusion disk of the same radius around each terminal point. The
//! exclusion keeps the `ξ^{-n}` path-loss weights integrable and the
//! Monte-Carlo gain estimator finite-variance, and it is applied
//! identically to the correlation numerator and the power normalization so
//! that ρ(0) = 1 survives regularization.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Propagation scenario selector for [`GeometryConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Environment {
    Outdoor,
    Indoor,
}

/// A 2-D position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Scatterer-ring geometry and radio parameters for one correlation scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub environment: Environment,
    /// Transmitter/base-station distance to the receiver region, `D`.
    pub big_distance_d: f64,
    /// Scatterer ring radius, `R`.
    pub ring_radius_r: f64,
    /// Receiver-to-attacker separation (`d_UA` outdoor, `d_RA` indoor).
    pub separation_d: f64,
    /// Orientation of the receiver-attacker axis, radians.
    pub angle_theta_r: f64,
    /// Carrier wavelength, `λ`.
    pub wavelength: f64,
    /// Path-loss exponent `n >= 1`.
    pub path_loss_exponent: f64,
    /// Minimum scatterer distance to any terminal (and to the ring center).
    pub exclusion_radius: f64,
}

impl GeometryConfig {
    /// Outdoor cellular defaults: the figure-reproduction geometry.
    /// D = 500 m, R = 30 m, n = 2, λ = 0.125 m, exclusion = λ.
    pub fn outdoor_default() -> Self {
        GeometryConfig {
            environment: Environment::Outdoor,
            big_distance_d: 500.0,
            ring_radius_r: 30.0,
            separation_d: 0.625,
            angle_theta_r: 1.0,
            wavelength: 0.125,
            path_loss_exponent: 2.0,
            exclusion_radius: 0.125,
        }
    }

    /// Indoor defaults: a large office/hall with the scatterer ring
    /// enclosing both ends. D = 18 m, R = 10 m, n = 2, λ = 0.125 m.
    pub fn indoor_default() -> Self {
        GeometryConfig {
            environment: Environment::Indoor,
            big_distance_d: 18.0,
            ring_radius_r: 10.0,
            separation_d: 0.625,
            angle_theta_r: 1.2,
            wavelength: 0.125,
            path_loss_exponent: 2.0,
            exclusion_radius: 0.125,
        }
    }

    pub fn with_separation(mut self, separation_d: f64) -> Self {
        self.separation_d = separation_d;
        self
    }

    pub fn with_theta_r(mut self, angle_theta_r: f64) -> Self {
        self.angle_theta_r = angle_theta_r;
        self
    }

    /// Validate hard invariants; returns soft applicability warnings.
    ///
    /// Separation may be zero (the ρ(0) = 1 normalization identity); every
    /// other length must be strictly positive. The outdoor far-field
    /// assumption `D >= 10 R >= 100 d` yields warnings, not errors.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.big_distance_d > 0.0)
            || !(self.ring_radius_r > 0.0)
            || !(self.wavelength > 0.0)
            || !(self.exclusion_radius > 0.0)
        {
            return Err(Error::InvalidConfig(
                "lengths and wavelength must be strictly positive".into(),
            ));
        }
        if !(self.separation_d >= 0.0) {
            return Err(Error::InvalidConfig("separation must be >= 0".into()));
        }
        if !(self.path_loss_exponent >= 1.0) {
            return Err(Error::InvalidConfig("path_loss_exponent must be >= 1".into()));
        }
        if self.exclusion_radius >= self.ring_radius_r {
            return Err(Error::InvalidConfig(
                "exclusion_radius must be smaller than ring_radius_r".into(),
            ));
        }
        let mut warnings = Vec::new();
        if self.environment == Environment::Outdoor {
            if self.big_distance_d < 10.0 * self.ring_radius_r {
                warnings.push(format!(
                    "outdoor far-field assumption D >= 10 R violated: D = {}, R = {}",
                    self.big_distance_d, self.ring_radius_r
                ));
            }
            if self.separation_d > 0.0 && self.ring_radius_r < 10.0 * self.separation_d {
                warnings.push(format!(
                    "outdoor assumption R >= 10 d violated: R = {}, d = {}",
                    self.ring_radius_r, self.separation_d
                ));
            }
        }
        Ok(warnings)
    }

    /// Unit vector along the receiver-attacker axis.
    pub fn axis(&self) -> (f64, f64) {
        (self.angle_theta_r.cos(), self.angle_theta_r.sin())
    }

    /// Transmitting terminal (base station outdoor, Tx indoor).
    pub fn transmitter(&self) -> Point {
        match self.environment {
            Environment::Outdoor => Point::new(-self.big_distance_d, 0.0),
            Environment::Indoor => Point::new(-self.big_distance_d / 2.0, 0.0),
        }
    }

    /// Midpoint of the receiver pair (the ring center outdoor).
    pub fn receiver_midpoint(&self) -> Point {
        match self.environment {
            Environment::Outdoor => Point::new(0.0, 0.0),
            Environment::Indoor => Point::new(self.big_distance_d / 2.0, 0.0),
        }
    }

    /// Legitimate receiver (mobile user outdoor, Rx indoor).
    pub fn receiver(&self) -> Point {
        let (ux, uy) = self.axis();
        let mid = self.receiver_midpoint();
        Point::new(
            mid.x - 0.5 * self.separation_d * ux,
            mid.y - 0.5 * self.separation_d * uy,
        )
    }

    /// Attack node, on the `+θ_R` side of the receiver midpoint.
    pub fn attacker(&self) -> Point {
        let (ux, uy) = self.axis();
        let mid = self.receiver_midpoint();
        Point::new(
            mid.x + 0.5 * self.separation_d * ux,
            mid.y + 0.5 * self.separation_d * uy,
        )
    }

    /// Centers of the exclusion disks carved out of the scatterer ring.
    ///
    /// Indoor this includes the receiver-pair midpoint: the path-loss factor
    /// of the indoor integrand is singular there, and carving the same disk
    /// out of both the quadrature domain and the sampling domain keeps the
    /// two routes comparable.
    pub fn exclusion_centers(&self) -> Vec<Point> {
        match self.environment {
            Environment::Outdoor => vec![self.receiver(), self.attacker()],
            Environment::Indoor => vec![
                self.transmitter(),
                self.receiver_midpoint(),
                self.receiver(),
                self.attacker(),
            ],
        }
    }

    /// True when the polar point `(radius, angle)` relative to the ring
    /// center survives every exclusion disk.
    pub fn outside_exclusions(&self, radius: f64, angle: f64) -> bool {
        let p = Point::new(radius * angle.cos(), radius * angle.sin());
        self.exclusion_centers()
            .iter()
            .all(|c| p.distance(*c) >= self.exclusion_radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_cleanly() {
        assert!(GeometryConfig::outdoor_default().validate().unwrap().is_empty());
        assert!(GeometryConfig::indoor_default().validate().unwrap().is_empty());
    }

    #[test]
    fn far_field_violation_is_a_warning_not_an_error() {
        let mut cfg = GeometryConfig::outdoor_default();
        cfg.big_distance_d = 5.0 * cfg.ring_radius_r;
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn rejects_nonpositive_lengths_and_small_ring() {
        let mut cfg = GeometryConfig::outdoor_default();
        cfg.wavelength = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = GeometryConfig::outdoor_default();
        cfg.exclusion_radius = cfg.ring_radius_r;
        assert!(cfg.validate().is_err());

        let mut cfg = GeometryConfig::indoor_default();
        cfg.path_loss_exponent = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn terminal_placement_matches_the_axis() {
        let cfg = GeometryConfig::indoor_default().with_separation(2.0);
        let rx = cfg.receiver();
        let an = cfg.attacker();
        assert!((rx.distance(an) - 2.0).abs() < 1e-12);
        let mid = cfg.receiver_midpoint();
        assert!((mid.distance(rx) - 1.0).abs() < 1e-12);
        // attacker sits on the +theta_R side
        let (ux, uy) = cfg.axis();
        let dot = (an.x - mid.x) * ux + (an.y - mid.y) * uy;
        assert!(dot > 0.0);
    }

    #[test]
    fn zero_separation_collapses_receiver_and_attacker() {
        let cfg = GeometryConfig::outdoor_default().with_separation(0.0);
        assert_eq!(cfg.receiver(), cfg.attacker());
    }
}
