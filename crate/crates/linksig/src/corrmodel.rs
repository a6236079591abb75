//! Normalized cross-correlation between a legitimate link and an attacker
//! link under the outdoor and indoor scatterer-ring models.
//!
//! Both models integrate a path-loss weight times a path-difference phase
//! over scatterer positions drawn uniformly in (angle, radius) with density
//! `1/(2πR)`, and normalize by the received power Ω (the same integral with
//! the phase factor replaced by 1):
//!
//! * Outdoor, scatterer at polar `(ξ, θ_S)` around the receiver-pair
//!   midpoint: weight `ξ^{-n}`, phase `exp(-j 2π (d/λ) cos(θ_S - θ_R))`.
//! * Indoor, scatterer at `(d_S, γ)` around the midpoint of transmitter and
//!   receiver pair: weight `D^n ((d_S² + D²/4)² - D² d_S² cos²γ)^{-n/2}`,
//!   phase `exp(-j 2π (d/λ) (d_S cos(γ-θ_R) - (D/2) cos θ_R) / ξ_mid)` with
//!   `ξ_mid = sqrt(d_S² + D²/4 - D d_S cos γ)` the distance to the
//!   receiver-pair midpoint.
//!
//! The domain is the ring `[exclusion_radius, R]` minus the exclusion disks
//! of [`GeometryConfig::exclusion_centers`]; numerator and Ω share it, so
//! ρ(0) = 1 exactly and |ρ| <= 1 cell by cell (positive weights).

use num_complex::Complex64;

use crate::geometry::{Environment, GeometryConfig, Point};
use crate::quad::{integrate_adaptive, QuadOptions, QuadResult};
use crate::{Error, Result};

/// One evaluated correlation coefficient.
#[derive(Debug, Clone)]
pub struct CorrelationResult {
    /// Complex ρ; the reported curve quantity is its magnitude.
    pub rho: Complex64,
    pub rho_magnitude: f64,
    /// Total integrand evaluations across the normalization and numerator passes.
    pub quadrature_nodes: usize,
    /// Propagated absolute error estimate on |ρ|.
    pub estimated_abs_error: f64,
}

/// Quadrature controls for the correlation integrals.
#[derive(Debug, Clone)]
pub struct CorrelationOptions {
    /// Absolute tolerance on ρ (the numerator tolerance is this times Ω).
    pub tolerance: f64,
    /// Leaf-cell budget per integral.
    pub max_cells: usize,
    /// Multiplies the seed-grid resolution; doubling it is the
    /// "more nodes" knob used by the refinement-monotonicity check.
    pub seed_multiplier: usize,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            tolerance: 1e-4,
            max_cells: 60_000,
            seed_multiplier: 1,
        }
    }
}

fn quad_options(cfg: &GeometryConfig, opts: &CorrelationOptions) -> QuadOptions {
    let d_over_lambda = cfg.separation_d / cfg.wavelength;
    // keep the per-cell phase span of the oscillatory (angular) axis near pi
    let angular = ((13.0 * d_over_lambda).ceil() as usize).clamp(16, 512);
    let radial_ratio = cfg.ring_radius_r / cfg.exclusion_radius;
    let (radial, log_axis0) = match cfg.environment {
        Environment::Outdoor => ((radial_ratio.log2().ceil() as usize + 4).max(8), true),
        Environment::Indoor => (16, false),
    };
    QuadOptions {
        abs_tol: f64::MAX, // callers overwrite per pass
        max_cells: opts.max_cells,
        initial_splits: (
            radial * opts.seed_multiplier,
            angular * opts.seed_multiplier,
        ),
        log_axis0,
    }
}

/// Exclusion-disk test used by both integrands, on ring-centered polar
/// coordinates.
struct DiskMask {
    centers: Vec<Point>,
    radius_sq: f64,
}

impl DiskMask {
    fn new(cfg: &GeometryConfig) -> Self {
        DiskMask {
            centers: cfg.exclusion_centers(),
            radius_sq: cfg.exclusion_radius * cfg.exclusion_radius,
        }
    }

    #[inline]
    fn keeps(&self, x: f64, y: f64) -> bool {
        self.centers.iter().all(|c| {
            let dx = x - c.x;
            let dy = y - c.y;
            dx * dx + dy * dy >= self.radius_sq
        })
    }
}

#[inline]
fn power_weight(value: f64, n: f64) -> f64 {
    if n == 2.0 {
        1.0 / value
    } else {
        value.powf(-0.5 * n)
    }
}

struct Passes {
    omega: QuadResult,
    numerator: QuadResult,
    seed_evals: usize,
}

/// Run the seeding, normalization and numerator passes with a shared
/// absolute tolerance so that at zero separation both integrals follow the
/// identical refinement path and ρ comes out exactly 1.
fn run_passes<F, G>(
    omega_integrand: &F,
    numerator_integrand: &G,
    bounds: (f64, f64, f64, f64),
    qopts: &QuadOptions,
    tolerance: f64,
) -> Passes
where
    F: Fn(f64, f64) -> Complex64,
    G: Fn(f64, f64) -> Complex64,
{
    let mut seed_opts = qopts.clone();
    seed_opts.abs_tol = f64::MAX;
    let seed = integrate_adaptive(omega_integrand, bounds, &seed_opts);
    let abs_tol = (tolerance * seed.value.re.abs()).max(f64::MIN_POSITIVE);

    let mut pass_opts = qopts.clone();
    pass_opts.abs_tol = abs_tol;
    let omega = integrate_adaptive(omega_integrand, bounds, &pass_opts);
    let numerator = integrate_adaptive(numerator_integrand, bounds, &pass_opts);
    Passes {
        omega,
        numerator,
        seed_evals: seed.evals,
    }
}

fn assemble(passes: Passes) -> Result<CorrelationResult> {
    let omega = passes.omega.value.re;
    if !(omega > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "received power came out nonpositive ({omega}); the exclusion disks may cover the whole ring"
        )));
    }
    let rho = passes.numerator.value / omega;
    let rho_magnitude = rho.norm();
    let estimated_abs_error =
        (passes.numerator.abs_error + rho_magnitude * passes.omega.abs_error) / omega;
    let result = CorrelationResult {
        rho,
        rho_magnitude,
        quadrature_nodes: passes.seed_evals + passes.omega.evals + passes.numerator.evals,
        estimated_abs_error,
    };
    if !passes.omega.converged || !passes.numerator.converged {
        return Err(Error::NonConvergentQuadrature {
            partial: Box::new(result),
        });
    }
    Ok(result)
}

/// ρ between the base-station→user and base-station→attacker links.
pub fn outdoor_correlation(cfg: &GeometryConfig) -> Result<CorrelationResult> {
    outdoor_correlation_with(cfg, &CorrelationOptions::default())
}

pub fn outdoor_correlation_with(
    cfg: &GeometryConfig,
    opts: &CorrelationOptions,
) -> Result<CorrelationResult> {
    if cfg.environment != Environment::Outdoor {
        return Err(Error::InvalidConfig(
            "outdoor_correlation requires an Outdoor configuration".into(),
        ));
    }
    cfg.validate()?;
    let mask = DiskMask::new(cfg);
    let n = cfg.path_loss_exponent;
    let density = 1.0 / (2.0 * std::f64::consts::PI * cfg.ring_radius_r);
    let wave_number = 2.0 * std::f64::consts::PI * cfg.separation_d / cfg.wavelength;
    let theta_r = cfg.angle_theta_r;

    let amp = move |radius: f64, angle: f64| -> f64 {
        let (s, c) = angle.sin_cos();
        if !mask.keeps(radius * c, radius * s) {
            return 0.0;
        }
        power_weight(radius * radius, n) * density
    };
    let omega_integrand = |radius: f64, angle: f64| Complex64::new(amp(radius, angle), 0.0);
    let numerator_integrand = |radius: f64, angle: f64| {
        let a = amp(radius, angle);
        let phase = -wave_number * (angle - theta_r).cos();
        let (s, c) = phase.sin_cos();
        Complex64::new(a * c, a * s)
    };

    let bounds = (
        cfg.exclusion_radius,
        cfg.ring_radius_r,
        -std::f64::consts::PI,
        std::f64::consts::PI,
    );
    let passes = run_passes(
        &omega_integrand,
        &numerator_integrand,
        bounds,
        &quad_options(cfg, opts),
        opts.tolerance,
    );
    assemble(passes)
}

/// ρ between the Tx→Rx and Tx→attacker links.
pub fn indoor_correlation(cfg: &GeometryConfig) -> Result<CorrelationResult> {
    indoor_correlation_with(cfg, &CorrelationOptions::default())
}

pub fn indoor_correlation_with(
    cfg: &GeometryConfig,
    opts: &CorrelationOptions,
) -> Result<CorrelationResult> {
    if cfg.environment != Environment::Indoor {
        return Err(Error::InvalidConfig(
            "indoor_correlation requires an Indoor configuration".into(),
        ));
    }
    cfg.validate()?;
    let mask = DiskMask::new(cfg);
    let n = cfg.path_loss_exponent;
    let big_d = cfg.big_distance_d;
    let density = 1.0 / (2.0 * std::f64::consts::PI * cfg.ring_radius_r);
    let d_pow = big_d.powf(n);
    let wave_number = 2.0 * std::f64::consts::PI * cfg.separation_d / cfg.wavelength;
    let theta_r = cfg.angle_theta_r;
    let cos_theta_r = theta_r.cos();

    // set when the path-loss factor hits zero on an unmasked node
    let singular = std::cell::Cell::new(false);

    let amp_and_phase = |radius: f64, gamma: f64| -> Option<(f64, f64)> {
        let (sg, cg) = gamma.sin_cos();
        if !mask.keeps(radius * cg, radius * sg) {
            return None;
        }
        let g = radius * radius + 0.25 * big_d * big_d;
        let cross = big_d * radius * cg;
        let factor = g * g - cross * cross;
        let mid_sq = g - cross;
        if factor <= 0.0 || mid_sq <= 0.0 {
            singular.set(true);
            return None;
        }
        let amp = d_pow * power_weight(factor, n) * density;
        let phase = -wave_number * (radius * (gamma - theta_r).cos() - 0.5 * big_d * cos_theta_r)
            / mid_sq.sqrt();
        Some((amp, phase))
    };
    let omega_integrand = |radius: f64, gamma: f64| match amp_and_phase(radius, gamma) {
        Some((a, _)) => Complex64::new(a, 0.0),
        None => Complex64::new(0.0, 0.0),
    };
    let numerator_integrand = |radius: f64, gamma: f64| match amp_and_phase(radius, gamma) {
        Some((a, phase)) => {
            let (s, c) = phase.sin_cos();
            Complex64::new(a * c, a * s)
        }
        None => Complex64::new(0.0, 0.0),
    };

    let bounds = (
        cfg.exclusion_radius,
        cfg.ring_radius_r,
        -std::f64::consts::PI,
        std::f64::consts::PI,
    );
    let passes = run_passes(
        &omega_integrand,
        &numerator_integrand,
        bounds,
        &quad_options(cfg, opts),
        opts.tolerance,
    );
    if singular.get() {
        return Err(Error::IntegrandSingular(
            "the indoor path-loss factor reached zero on an unmasked node; \
             enlarge exclusion_radius"
                .into(),
        ));
    }
    assemble(passes)
}

/// Dispatch on the configured environment.
pub fn correlation(cfg: &GeometryConfig) -> Result<CorrelationResult> {
    match cfg.environment {
        Environment::Outdoor => outdoor_correlation(cfg),
        Environment::Indoor => indoor_correlation(cfg),
    }
}

pub fn correlation_with(cfg: &GeometryConfig, opts: &CorrelationOptions) -> Result<CorrelationResult> {
    match cfg.environment {
        Environment::Outdoor => outdoor_correlation_with(cfg, opts),
        Environment::Indoor => indoor_correlation_with(cfg, opts),
    }
}

/// Received link power Ω: the correlation integrand with the phase factor
/// replaced by 1, over the same masked domain.
pub fn received_power(cfg: &GeometryConfig) -> Result<f64> {
    received_power_with(cfg, &CorrelationOptions::default())
}

pub fn received_power_with(cfg: &GeometryConfig, opts: &CorrelationOptions) -> Result<f64> {
    cfg.validate()?;
    let mask = DiskMask::new(cfg);
    let n = cfg.path_loss_exponent;
    let density = 1.0 / (2.0 * std::f64::consts::PI * cfg.ring_radius_r);
    let big_d = cfg.big_distance_d;
    let d_pow = big_d.powf(n);
    let indoor = cfg.environment == Environment::Indoor;

    let omega_integrand = move |radius: f64, angle: f64| -> Complex64 {
        let (s, c) = angle.sin_cos();
        if !mask.keeps(radius * c, radius * s) {
            return Complex64::new(0.0, 0.0);
        }
        let a = if indoor {
            let g = radius * radius + 0.25 * big_d * big_d;
            let cross = big_d * radius * c;
            let factor = g * g - cross * cross;
            if factor <= 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            d_pow * power_weight(factor, n) * density
        } else {
            power_weight(radius * radius, n) * density
        };
        Complex64::new(a, 0.0)
    };

    let bounds = (
        cfg.exclusion_radius,
        cfg.ring_radius_r,
        -std::f64::consts::PI,
        std::f64::consts::PI,
    );
    let mut qopts = quad_options(cfg, opts);
    qopts.abs_tol = f64::MAX;
    let seed = integrate_adaptive(&omega_integrand, bounds, &qopts);
    qopts.abs_tol = (opts.tolerance * seed.value.re.abs()).max(f64::MIN_POSITIVE);
    let run = integrate_adaptive(&omega_integrand, bounds, &qopts);

    let omega = run.value.re;
    if !(omega > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "received power came out nonpositive ({omega}); the exclusion disks may cover the whole ring"
        )));
    }
    if !run.converged {
        return Err(Error::NonConvergentQuadrature {
            partial: Box::new(CorrelationResult {
                rho: Complex64::new(omega, 0.0),
                rho_magnitude: omega,
                quadrature_nodes: seed.evals + run.evals,
                estimated_abs_error: run.abs_error,
            }),
        });
    }
    Ok(omega)
}

/// Exact and approximated path-length difference seen by the receiver pair
/// for a scatterer at ring-centered polar coordinates `(radius, angle)`.
///
/// Returns `(exact, approximate)` where exact is `-(d_attacker - d_receiver)`
/// from the law-of-cosines distances and approximate is the closed form used
/// inside the correlation integrand.
pub fn path_length_difference(
    cfg: &GeometryConfig,
    scatterer_polar: (f64, f64),
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let (radius, angle) = scatterer_polar;
    let s = Point::new(radius * angle.cos(), radius * angle.sin());
    let exact = s.distance(cfg.receiver()) - s.distance(cfg.attacker());
    let approx = match cfg.environment {
        Environment::Outdoor => cfg.separation_d * (angle - cfg.angle_theta_r).cos(),
        Environment::Indoor => {
            let big_d = cfg.big_distance_d;
            let mid_sq =
                radius * radius + 0.25 * big_d * big_d - big_d * radius * angle.cos();
            cfg.separation_d
                * (radius * (angle - cfg.angle_theta_r).cos()
                    - 0.5 * big_d * cfg.angle_theta_r.cos())
                / mid_sq.sqrt()
        }
    };
    Ok((exact, approx))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent grid-integration references for the default geometries
    // (6144 angular x 2500 radial tensor grid), good to ~2e-3.
    const OUTDOOR_REF: [(f64, f64); 5] = [
        (0.5, 0.24855),
        (1.0, 0.17349),
        (2.0, 0.11067),
        (3.0, 0.08464),
        (5.0, 0.05247),
    ];
    const INDOOR_REF: [(f64, f64); 5] = [
        (0.5, 0.51231),
        (1.0, 0.34277),
        (3.0, 0.27330),
        (5.0, 0.20423),
        (10.0, 0.09892),
    ];

    fn outdoor(d_over_lambda: f64, theta_r: f64) -> GeometryConfig {
        let cfg = GeometryConfig::outdoor_default();
        let d = d_over_lambda * cfg.wavelength;
        cfg.with_separation(d).with_theta_r(theta_r)
    }

    fn indoor(d_over_lambda: f64, theta_r: f64) -> GeometryConfig {
        let cfg = GeometryConfig::indoor_default();
        let d = d_over_lambda * cfg.wavelength;
        cfg.with_separation(d).with_theta_r(theta_r)
    }

    #[test]
    fn zero_separation_is_exactly_one() {
        for cfg in [outdoor(0.0, 1.0), indoor(0.0, 1.2)] {
            let r = correlation(&cfg).unwrap();
            assert!(
                (r.rho_magnitude - 1.0).abs() < 1e-12,
                "|rho(0)| = {}",
                r.rho_magnitude
            );
        }
    }

    #[test]
    fn outdoor_matches_grid_reference() {
        for &(d, expect) in &OUTDOOR_REF {
            let r = outdoor_correlation(&outdoor(d, 1.0)).unwrap();
            assert!(
                (r.rho_magnitude - expect).abs() < 5e-3,
                "d/lambda = {d}: got {} expected {expect}",
                r.rho_magnitude
            );
        }
    }

    #[test]
    fn indoor_matches_grid_reference() {
        for &(d, expect) in &INDOOR_REF {
            let r = indoor_correlation(&indoor(d, 1.2)).unwrap();
            assert!(
                (r.rho_magnitude - expect).abs() < 6e-3,
                "d/lambda = {d}: got {} expected {expect}",
                r.rho_magnitude
            );
        }
    }

    #[test]
    fn magnitude_never_exceeds_one() {
        for d in [0.5, 2.0, 7.5] {
            for theta in [0.0, 0.8, 2.4] {
                let o = outdoor_correlation(&outdoor(d, theta)).unwrap();
                assert!(o.rho_magnitude <= 1.0 + 1e-6);
                let i = indoor_correlation(&indoor(d, theta)).unwrap();
                assert!(i.rho_magnitude <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn outdoor_conjugate_symmetry_in_theta() {
        let plus = outdoor_correlation(&outdoor(2.5, 1.0)).unwrap();
        let minus = outdoor_correlation(&outdoor(2.5, -1.0)).unwrap();
        let err = plus.estimated_abs_error + minus.estimated_abs_error + 1e-9;
        assert!((plus.rho - minus.rho.conj()).norm() <= err);
        // the full-circle outdoor integral is real
        assert!(plus.rho.im.abs() <= err);
    }

    #[test]
    fn wrong_environment_is_rejected() {
        assert!(outdoor_correlation(&indoor(1.0, 1.0)).is_err());
        assert!(indoor_correlation(&outdoor(1.0, 1.0)).is_err());
    }

    #[test]
    fn received_power_matches_radial_closed_form_at_zero_separation() {
        // at d = 0 the exclusion disks sit inside the central hole, so
        // omega = int_{xi0}^{R} xi^-n dxi / R for the outdoor model
        let cfg = outdoor(0.0, 1.0);
        let omega = received_power(&cfg).unwrap();
        let xi0 = cfg.exclusion_radius;
        let r = cfg.ring_radius_r;
        let analytic = (1.0 / xi0 - 1.0 / r) / r;
        assert!(
            (omega - analytic).abs() < 1e-4 * analytic,
            "omega = {omega}, analytic = {analytic}"
        );
    }

    #[test]
    fn doubling_path_loss_changes_omega_but_not_rho_zero() {
        let mut cfg = outdoor(0.0, 1.0);
        let omega_n2 = received_power(&cfg).unwrap();
        cfg.path_loss_exponent = 4.0;
        let omega_n4 = received_power(&cfg).unwrap();
        assert!((omega_n2 - omega_n4).abs() > 1e-3 * omega_n2);
        let r = outdoor_correlation(&cfg).unwrap();
        assert!((r.rho_magnitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numerator_bounded_by_received_power() {
        for d in [0.7, 3.3] {
            let cfg = outdoor(d, 0.6);
            let rho = outdoor_correlation(&cfg).unwrap();
            let omega = received_power(&cfg).unwrap();
            assert!((rho.rho * omega).norm() <= omega * (1.0 + 1e-9));
        }
    }

    #[test]
    fn refinement_changes_less_than_reported_error() {
        for cfg in [outdoor(4.0, 1.0), indoor(4.0, 1.2)] {
            let coarse = correlation_with(
                &cfg,
                &CorrelationOptions {
                    tolerance: 5e-3,
                    ..CorrelationOptions::default()
                },
            )
            .unwrap();
            let fine = correlation_with(
                &cfg,
                &CorrelationOptions {
                    tolerance: 5e-3,
                    seed_multiplier: 2,
                    ..CorrelationOptions::default()
                },
            )
            .unwrap();
            assert!(
                (coarse.rho_magnitude - fine.rho_magnitude).abs()
                    <= coarse.estimated_abs_error + fine.estimated_abs_error,
                "coarse {} fine {} err {}",
                coarse.rho_magnitude,
                fine.rho_magnitude,
                coarse.estimated_abs_error
            );
        }
    }

    #[test]
    fn indoor_more_theta_sensitive_than_outdoor() {
        let thetas = [0.0, 0.5, 1.0, 1.5, 2.0];
        let spread = |values: &[f64]| {
            values.iter().cloned().fold(f64::MIN, f64::max)
                - values.iter().cloned().fold(f64::MAX, f64::min)
        };
        let outdoor_mags: Vec<f64> = thetas
            .iter()
            .map(|&t| outdoor_correlation(&outdoor(3.0, t)).unwrap().rho_magnitude)
            .collect();
        let indoor_mags: Vec<f64> = thetas
            .iter()
            .map(|&t| indoor_correlation(&indoor(3.0, t)).unwrap().rho_magnitude)
            .collect();
        assert!(spread(&indoor_mags) > spread(&outdoor_mags));
        assert!(spread(&indoor_mags) > 0.05);
    }

    #[test]
    fn path_difference_symmetry_cases() {
        let cfg = outdoor(4.0, 0.9);
        // perpendicular bisector of the pair
        let (exact, approx) =
            path_length_difference(&cfg, (5.0, 0.9 + std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(exact.abs() < 1e-9);
        assert!(approx.abs() < 1e-9);
        // collinear scatterer sees the full separation
        let (_, approx) = path_length_difference(&cfg, (5.0, 0.9)).unwrap();
        assert!((approx - cfg.separation_d).abs() < 1e-12);
    }

    #[test]
    fn path_difference_approximation_error_in_the_far_field() {
        // D = 100 R, R = 100 d
        let mut cfg = GeometryConfig::outdoor_default();
        cfg.separation_d = 0.3;
        cfg.ring_radius_r = 30.0;
        cfg.big_distance_d = 3000.0;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let r_min = 10.0 * cfg.separation_d;
        for _ in 0..1000 {
            let radius = rng.gen_range(r_min..cfg.ring_radius_r);
            let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let (exact, approx) = path_length_difference(&cfg, (radius, angle)).unwrap();
            assert!(
                (exact - approx).abs() <= 0.01 * cfg.separation_d,
                "radius {radius} angle {angle}: exact {exact} approx {approx}"
            );
        }
    }
}
