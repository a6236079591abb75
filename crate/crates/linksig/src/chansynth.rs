//! Scatterer-field sampling, narrowband gains, Monte-Carlo correlation
//! estimation, multi-tap CIR synthesis, and the trace CSV interchange.
//!
//! The Monte-Carlo estimator here is the independent oracle for
//! [`crate::corrmodel`]: it uses exact per-scatterer distances everywhere
//! the integral models use far-field approximations, and both routes share
//! the same sampling domain (ring minus exclusion disks).

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{GeometryConfig, Point};
use crate::textfmt::{format_sig, round_sig};
use crate::{derive_seed, Error, Result, SPEED_OF_LIGHT};

/// Scatterers drawn per ensemble by [`empirical_correlation`].
pub const ORACLE_SCATTERERS: usize = 128;
/// Scatterers behind one synthesized network dataset.
pub const DEFAULT_SCATTERERS: usize = 200;
/// Taps per link signature, mirroring the measured-trace layout.
pub const DEFAULT_TAP_COUNT: usize = 50;
/// Tap spacing chosen so a desk-scale layout's delay spread fills most of
/// the 50-tap window.
pub const DEFAULT_SAMPLING_INTERVAL: f64 = 4e-9;
/// Tap noise as a fraction of the peak tap.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;
/// Phase drift scale per measurement index.
pub const DEFAULT_DRIFT_RATE: f64 = 0.05;

/// One sampled realization of scatterer positions, amplitudes and phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererField {
    pub positions: Vec<Point>,
    pub amplitudes: Vec<f64>,
    /// Phase shifts in `[0, 2π)`.
    pub phases: Vec<f64>,
    pub seed: u64,
}

impl ScattererField {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Fixed-length vector of nonnegative tap amplitudes: the link signature.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImpulseResponse {
    pub taps: Vec<f64>,
    pub sampling_interval: f64,
}

impl ChannelImpulseResponse {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn max_tap(&self) -> f64 {
        self.taps.iter().cloned().fold(0.0, f64::max)
    }
}

/// One dataset row: an ordered link, a measurement index, and its CIR.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSignatureRecord {
    pub tx_id: u32,
    pub rx_id: u32,
    pub tx_loc: Point,
    pub rx_loc: Point,
    pub meas_index: u32,
    pub cir: ChannelImpulseResponse,
}

/// Draw scatterers uniformly in (angle, radius) over the ring
/// `[exclusion_radius, R]` around `center`, rejecting points inside an
/// exclusion disk around any of `exclusions`.
pub fn sample_scatterers_around(
    center: Point,
    ring_radius: f64,
    exclusion_radius: f64,
    exclusions: &[Point],
    count: usize,
    seed: u64,
) -> Result<ScattererField> {
    if count == 0 {
        return Err(Error::InvalidConfig("scatterer count must be >= 1".into()));
    }
    if !(ring_radius > exclusion_radius && exclusion_radius > 0.0) {
        return Err(Error::InvalidConfig(
            "need 0 < exclusion_radius < ring_radius".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(count);
    let mut phases = Vec::with_capacity(count);
    let budget = count.saturating_mul(1000).max(100_000);
    let mut attempts = 0usize;
    while positions.len() < count {
        attempts += 1;
        if attempts > budget {
            return Err(Error::InvalidConfig(
                "exclusion disks reject nearly the whole ring".into(),
            ));
        }
        let radius = rng.gen_range(exclusion_radius..ring_radius);
        let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let p = Point::new(
            center.x + radius * angle.cos(),
            center.y + radius * angle.sin(),
        );
        if exclusions.iter().any(|c| p.distance(*c) < exclusion_radius) {
            continue;
        }
        positions.push(p);
        phases.push(rng.gen_range(0.0..std::f64::consts::TAU));
    }
    Ok(ScattererField {
        amplitudes: vec![1.0; positions.len()],
        positions,
        phases,
        seed,
    })
}

/// Draw a field for the two-terminal geometry of `cfg` (ring centered at
/// the origin, exclusion disks at the configured terminals).
pub fn sample_scatterers(cfg: &GeometryConfig, count: usize, seed: u64) -> Result<ScattererField> {
    cfg.validate()?;
    sample_scatterers_around(
        Point::new(0.0, 0.0),
        cfg.ring_radius_r,
        cfg.exclusion_radius,
        &cfg.exclusion_centers(),
        count,
        seed,
    )
}

/// Narrowband complex gain of the tx→rx link through `field`:
/// `h = (1/√N) Σ g_i (d_tx,i · d_i,rx / D)^{-n/2} exp{j ψ_i - j 2π (d_tx,i + d_i,rx)/λ}`.
pub fn narrowband_gain(
    field: &ScattererField,
    tx_loc: Point,
    rx_loc: Point,
    cfg: &GeometryConfig,
) -> Result<Complex64> {
    if field.is_empty() {
        return Err(Error::InvalidConfig("empty scatterer field".into()));
    }
    let n = cfg.path_loss_exponent;
    let inv_d = 1.0 / cfg.big_distance_d;
    let k = std::f64::consts::TAU / cfg.wavelength;
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..field.len() {
        let s = field.positions[i];
        let d_tx = tx_loc.distance(s);
        let d_rx = s.distance(rx_loc);
        if d_rx < cfg.exclusion_radius {
            return Err(Error::DistanceUnderflow(format!(
                "receiver within the exclusion radius of scatterer {i} (d = {d_rx:.3e})"
            )));
        }
        let amp = field.amplitudes[i] * (d_tx * d_rx * inv_d).powf(-0.5 * n);
        let phase = field.phases[i] - k * (d_tx + d_rx);
        let (sin, cos) = phase.sin_cos();
        sum += Complex64::new(amp * cos, amp * sin);
    }
    Ok(sum / (field.len() as f64).sqrt())
}

/// Monte-Carlo estimate of the link correlation `ρ̂` between the receiver
/// and an attacker `rx_offset` meters away along the configured axis, per
/// the finite-scatterer ensemble form. This is the brute-force oracle the
/// quadrature models are checked against.
pub fn empirical_correlation(
    cfg: &GeometryConfig,
    rx_offset: f64,
    ensembles: usize,
    seed: u64,
) -> Result<Complex64> {
    if ensembles < 100 {
        return Err(Error::InvalidConfig("need at least 100 ensembles".into()));
    }
    let geom = cfg.clone().with_separation(rx_offset);
    geom.validate()?;
    let tx = geom.transmitter();
    let rx = geom.receiver();
    let attacker = geom.attacker();
    let exclusions = geom.exclusion_centers();

    // fixed chunking keeps the float reduction order independent of the
    // worker count
    const CHUNK: usize = 512;
    let chunks = ensembles.div_ceil(CHUNK);
    let partials: Vec<(Complex64, f64, f64)> = {
        use rayon::prelude::*;
        (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let lo = chunk * CHUNK;
                let hi = ((chunk + 1) * CHUNK).min(ensembles);
                let mut num = Complex64::new(0.0, 0.0);
                let mut pow_rx = 0.0;
                let mut pow_at = 0.0;
                for k in lo..hi {
                    let field = sample_scatterers_around(
                        Point::new(0.0, 0.0),
                        geom.ring_radius_r,
                        geom.exclusion_radius,
                        &exclusions,
                        ORACLE_SCATTERERS,
                        derive_seed(seed, k as u64),
                    )
                    .expect("oracle sampling domain is nonempty");
                    let h_rx = narrowband_gain(&field, tx, rx, &geom)
                        .expect("sampled scatterers clear the terminals");
                    let h_at = narrowband_gain(&field, tx, attacker, &geom)
                        .expect("sampled scatterers clear the terminals");
                    num += h_rx * h_at.conj();
                    pow_rx += h_rx.norm_sqr();
                    pow_at += h_at.norm_sqr();
                }
                (num, pow_rx, pow_at)
            })
            .collect()
    };
    let mut num = Complex64::new(0.0, 0.0);
    let mut pow_rx = 0.0;
    let mut pow_at = 0.0;
    for (a, b, c) in partials {
        num += a;
        pow_rx += b;
        pow_at += c;
    }
    Ok(num / (pow_rx * pow_at).sqrt())
}

/// Bin scatterer path delays into `tap_count` taps: coherent per-bin sum,
/// magnitude, then truncated Gaussian noise of scale `noise_sigma` times
/// the peak tap.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_cir(
    field: &ScattererField,
    tx_loc: Point,
    rx_loc: Point,
    cfg: &GeometryConfig,
    tap_count: usize,
    sampling_interval: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<ChannelImpulseResponse> {
    if tap_count == 0 {
        return Err(Error::InvalidConfig("tap_count must be >= 1".into()));
    }
    if !(sampling_interval > 0.0) {
        return Err(Error::InvalidConfig("sampling_interval must be > 0".into()));
    }
    if field.is_empty() {
        return Err(Error::InvalidConfig("empty scatterer field".into()));
    }
    let n = cfg.path_loss_exponent;
    let k = std::f64::consts::TAU / cfg.wavelength;
    let scale = 1.0 / (field.len() as f64).sqrt();
    let mut bins = vec![Complex64::new(0.0, 0.0); tap_count];
    let mut max_delay = 0.0f64;
    let mut in_window = 0usize;
    for i in 0..field.len() {
        let s = field.positions[i];
        let d_tx = tx_loc.distance(s);
        let d_rx = s.distance(rx_loc);
        let path = d_tx + d_rx;
        let delay = path / SPEED_OF_LIGHT;
        max_delay = max_delay.max(delay);
        let bin = (delay / sampling_interval).floor() as usize;
        if bin >= tap_count {
            continue;
        }
        in_window += 1;
        let amp = field.amplitudes[i] * (d_tx * d_rx / cfg.big_distance_d).powf(-0.5 * n) * scale;
        let phase = field.phases[i] - k * path;
        let (sin, cos) = phase.sin_cos();
        bins[bin] += Complex64::new(amp * cos, amp * sin);
    }
    if in_window == 0 {
        return Err(Error::DelayWindowExceeded {
            tap_count,
            max_delay_s: max_delay,
        });
    }
    let mut taps: Vec<f64> = bins.iter().map(|b| b.norm()).collect();
    if noise_sigma > 0.0 {
        let sigma = noise_sigma * taps.iter().cloned().fold(0.0, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for tap in taps.iter_mut() {
            let gauss: f64 = standard_normal(&mut rng);
            *tap = (*tap + sigma * gauss).max(0.0);
        }
    }
    Ok(ChannelImpulseResponse {
        taps,
        sampling_interval,
    })
}

/// Box-Muller draw; two uniforms per call keeps the stream layout obvious.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Knobs for [`generate_network_dataset_with`].
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub scatterer_count: usize,
    pub tap_count: usize,
    pub sampling_interval: f64,
    /// Fraction of the peak tap used as the noise scale.
    pub noise_sigma: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            scatterer_count: DEFAULT_SCATTERERS,
            tap_count: DEFAULT_TAP_COUNT,
            sampling_interval: DEFAULT_SAMPLING_INTERVAL,
            noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }
}

/// Geometry used when synthesizing whole-network datasets: the indoor
/// radio parameters with a ring wide enough to enclose the default layout.
pub fn dataset_default_config() -> GeometryConfig {
    let mut cfg = GeometryConfig::indoor_default();
    cfg.ring_radius_r = 15.0;
    cfg
}

/// Random office-style layout: `count` nodes in a 20 m x 15 m floor with
/// at least 1 m pairwise separation, coordinates canonicalized to the CSV
/// precision.
pub fn default_node_layout(count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<Point> = Vec::with_capacity(count);
    while nodes.len() < count {
        let p = Point::new(rng.gen_range(-10.0..10.0), rng.gen_range(-7.5..7.5));
        if nodes.iter().all(|q| q.distance(p) >= 1.0) {
            nodes.push(Point::new(round_sig(p.x, 9), round_sig(p.y, 9)));
        }
    }
    nodes
}

/// One shared scatterer field renders every link of the layout, so link
/// signatures are spatially correlated; a per-scatterer phase drift of
/// scale `drift_rate` per measurement index gives historical inference
/// something to learn.
pub fn generate_network_dataset(
    layout: &[Point],
    cfg: &GeometryConfig,
    meas_per_link: usize,
    drift_rate: f64,
    seed: u64,
) -> Result<Vec<LinkSignatureRecord>> {
    generate_network_dataset_with(
        layout,
        cfg,
        meas_per_link,
        drift_rate,
        seed,
        &SynthesisOptions::default(),
    )
}

pub fn generate_network_dataset_with(
    layout: &[Point],
    cfg: &GeometryConfig,
    meas_per_link: usize,
    drift_rate: f64,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<Vec<LinkSignatureRecord>> {
    if layout.len() < 2 {
        return Err(Error::InvalidConfig("need at least 2 nodes".into()));
    }
    if meas_per_link == 0 {
        return Err(Error::InvalidConfig("meas_per_link must be >= 1".into()));
    }
    for (i, a) in layout.iter().enumerate() {
        for b in layout.iter().skip(i + 1) {
            if a.distance(*b) < 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "duplicate node locations at ({}, {})",
                    a.x, a.y
                )));
            }
        }
    }
    let centroid = Point::new(
        layout.iter().map(|p| p.x).sum::<f64>() / layout.len() as f64,
        layout.iter().map(|p| p.y).sum::<f64>() / layout.len() as f64,
    );
    let max_radius = layout
        .iter()
        .map(|p| p.distance(centroid))
        .fold(0.0, f64::max);
    if max_radius + cfg.exclusion_radius >= cfg.ring_radius_r {
        return Err(Error::InvalidConfig(format!(
            "ring_radius_r = {} does not enclose the layout (node radius {max_radius:.2})",
            cfg.ring_radius_r
        )));
    }

    let base = sample_scatterers_around(
        centroid,
        cfg.ring_radius_r,
        cfg.exclusion_radius,
        layout,
        opts.scatterer_count,
        seed,
    )?;
    // per-scatterer drift velocities, frozen with the field
    let mut drift_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let velocities: Vec<f64> = (0..base.len())
        .map(|_| drift_rate * standard_normal(&mut drift_rng))
        .collect();
    let fields: Vec<ScattererField> = (0..meas_per_link)
        .map(|m| {
            let mut f = base.clone();
            for (phase, v) in f.phases.iter_mut().zip(&velocities) {
                *phase += m as f64 * v;
            }
            f
        })
        .collect();

    let n_nodes = layout.len();
    let mut records = Vec::with_capacity(n_nodes * (n_nodes - 1) * meas_per_link);
    for (i, &tx_loc) in layout.iter().enumerate() {
        for (j, &rx_loc) in layout.iter().enumerate() {
            if i == j {
                continue;
            }
            for m in 0..meas_per_link {
                let record_index = ((i * n_nodes + j) * meas_per_link + m) as u64;
                let mut cir = synthesize_cir(
                    &fields[m],
                    tx_loc,
                    rx_loc,
                    cfg,
                    opts.tap_count,
                    opts.sampling_interval,
                    opts.noise_sigma,
                    derive_seed(seed, record_index),
                )?;
                for tap in cir.taps.iter_mut() {
                    *tap = round_sig(*tap, 9);
                }
                records.push(LinkSignatureRecord {
                    tx_id: i as u32,
                    rx_id: j as u32,
                    tx_loc,
                    rx_loc,
                    meas_index: m as u32,
                    cir,
                });
            }
        }
    }
    Ok(records)
}

fn header_for(tap_count: usize) -> String {
    let mut h = String::from("tx_id,rx_id,meas_idx,tx_x,tx_y,rx_x,rx_y");
    for k in 0..tap_count {
        h.push_str(&format!(",tap_{k}"));
    }
    h
}

/// Write records as trace CSV, sorted by `(tx_id, rx_id, meas_idx)`.
pub fn save_trace_file(records: &[LinkSignatureRecord], path: &Path) -> Result<()> {
    let tap_count = records
        .first()
        .map(|r| r.cir.len())
        .ok_or_else(|| Error::InvalidConfig("refusing to save an empty dataset".into()))?;
    if records.iter().any(|r| r.cir.len() != tap_count) {
        return Err(Error::InvalidConfig("records disagree on tap count".into()));
    }
    let mut sorted: Vec<&LinkSignatureRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.tx_id, r.rx_id, r.meas_index));

    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header_for(tap_count))?;
    for r in sorted {
        write!(
            w,
            "{},{},{},{},{},{},{}",
            r.tx_id,
            r.rx_id,
            r.meas_index,
            format_sig(r.tx_loc.x, 9),
            format_sig(r.tx_loc.y, 9),
            format_sig(r.rx_loc.x, 9),
            format_sig(r.rx_loc.y, 9),
        )?;
        for tap in &r.cir.taps {
            write!(w, ",{}", format_sig(*tap, 9))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a trace CSV. The tap arity comes from the header; the sampling
/// interval is not part of the interchange and is restored to the default.
pub fn load_trace_file(path: &Path) -> Result<Vec<LinkSignatureRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file: missing header".into(),
            })
        }
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let fixed = ["tx_id", "rx_id", "meas_idx", "tx_x", "tx_y", "rx_x", "rx_y"];
    if cols.len() < fixed.len() + 1 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header has {} columns, need at least 8", cols.len()),
        });
    }
    for (i, name) in fixed.iter().enumerate() {
        if cols[i] != *name {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown header column {:?} (expected {:?})", cols[i], name),
            });
        }
    }
    let tap_count = cols.len() - fixed.len();
    for (k, col) in cols[fixed.len()..].iter().enumerate() {
        if *col != format!("tap_{k}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown header column {:?} (expected \"tap_{k}\")", col),
            });
        }
    }

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != fixed.len() + tap_count {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "row has {} fields, header declares {}",
                    fields.len(),
                    fixed.len() + tap_count
                ),
            });
        }
        let parse_u32 = |s: &str, what: &str| -> Result<u32> {
            s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad {what}: {s:?}"),
            })
        };
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad {what}: {s:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite {what}: {s:?}"),
                });
            }
            Ok(v)
        };
        let tx_id = parse_u32(fields[0], "tx_id")?;
        let rx_id = parse_u32(fields[1], "rx_id")?;
        if tx_id == rx_id {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("tx_id == rx_id == {tx_id}"),
            });
        }
        let meas_index = parse_u32(fields[2], "meas_idx")?;
        let tx_loc = Point::new(parse_f64(fields[3], "tx_x")?, parse_f64(fields[4], "tx_y")?);
        let rx_loc = Point::new(parse_f64(fields[5], "rx_x")?, parse_f64(fields[6], "rx_y")?);
        let mut taps = Vec::with_capacity(tap_count);
        for (k, s) in fields[fixed.len()..].iter().enumerate() {
            let v = parse_f64(s, &format!("tap_{k}"))?;
            if v < 0.0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("negative tap_{k}: {s:?}"),
                });
            }
            taps.push(v);
        }
        records.push(LinkSignatureRecord {
            tx_id,
            rx_id,
            tx_loc,
            rx_loc,
            meas_index,
            cir: ChannelImpulseResponse {
                taps,
                sampling_interval: DEFAULT_SAMPLING_INTERVAL,
            },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmodel::outdoor_correlation;

    fn outdoor(d_over_lambda: f64) -> GeometryConfig {
        let cfg = GeometryConfig::outdoor_default();
        let d = d_over_lambda * cfg.wavelength;
        cfg.with_separation(d)
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let cfg = outdoor(2.0);
        let a = sample_scatterers(&cfg, 64, 7).unwrap();
        let b = sample_scatterers(&cfg, 64, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_scatterers(&cfg, 64, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samples_respect_the_domain() {
        let cfg = outdoor(3.0);
        let field = sample_scatterers(&cfg, 2000, 11).unwrap();
        let centers = cfg.exclusion_centers();
        for p in &field.positions {
            let radius = p.distance(Point::new(0.0, 0.0));
            assert!(radius >= cfg.exclusion_radius && radius <= cfg.ring_radius_r);
            for c in &centers {
                assert!(p.distance(*c) >= cfg.exclusion_radius);
            }
        }
        for phi in &field.phases {
            assert!((0.0..std::f64::consts::TAU).contains(phi));
        }
    }

    #[test]
    fn phases_are_uniform_on_average() {
        let cfg = outdoor(1.0);
        let n = 10_000;
        let field = sample_scatterers(&cfg, n, 3).unwrap();
        let mean_cos: f64 = field.phases.iter().map(|p| p.cos()).sum::<f64>() / n as f64;
        assert!(mean_cos.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn zero_count_is_rejected() {
        let cfg = outdoor(1.0);
        assert!(sample_scatterers(&cfg, 0, 1).is_err());
    }

    #[test]
    fn single_scatterer_gain_matches_the_closed_form() {
        let cfg = outdoor(1.0);
        let field = ScattererField {
            positions: vec![Point::new(3.0, 4.0)],
            amplitudes: vec![1.0],
            phases: vec![0.0],
            seed: 0,
        };
        let tx = cfg.transmitter();
        let rx = Point::new(0.5, -0.25);
        let h = narrowband_gain(&field, tx, rx, &cfg).unwrap();
        let d1 = tx.distance(field.positions[0]);
        let d2 = field.positions[0].distance(rx);
        let expect_amp = (d1 * d2 / cfg.big_distance_d).powf(-1.0);
        let expect_phase = -std::f64::consts::TAU * (d1 + d2) / cfg.wavelength;
        assert!((h.norm() - expect_amp).abs() < 1e-12 * expect_amp);
        let diff = (h.arg() - expect_phase).rem_euclid(std::f64::consts::TAU);
        assert!(diff < 1e-6 || diff > std::f64::consts::TAU - 1e-6);
    }

    #[test]
    fn gain_is_invariant_under_rigid_translation() {
        let cfg = outdoor(1.0);
        let field = sample_scatterers(&cfg, 32, 5).unwrap();
        let tx = cfg.transmitter();
        let rx = cfg.receiver();
        let h0 = narrowband_gain(&field, tx, rx, &cfg).unwrap();
        let shift = Point::new(12.5, -3.25);
        let moved = ScattererField {
            positions: field
                .positions
                .iter()
                .map(|p| Point::new(p.x + shift.x, p.y + shift.y))
                .collect(),
            ..field.clone()
        };
        let h1 = narrowband_gain(
            &moved,
            Point::new(tx.x + shift.x, tx.y + shift.y),
            Point::new(rx.x + shift.x, rx.y + shift.y),
            &cfg,
        )
        .unwrap();
        assert!((h0 - h1).norm() < 1e-9 * h0.norm());
    }

    #[test]
    fn ensemble_power_matches_the_finite_sum() {
        // E{|h|^2} over phase-resampled ensembles vs (1/N) sum of amp^2
        let cfg = outdoor(1.0);
        let base = sample_scatterers(&cfg, 32, 17).unwrap();
        let tx = cfg.transmitter();
        let rx = cfg.receiver();
        let expected: f64 = base
            .positions
            .iter()
            .map(|s| {
                let d1 = tx.distance(*s);
                let d2 = s.distance(rx);
                (d1 * d2 / cfg.big_distance_d).powf(-cfg.path_loss_exponent)
            })
            .sum::<f64>()
            / base.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ensembles = 10_000;
        let mut mean = 0.0;
        for _ in 0..ensembles {
            let mut f = base.clone();
            for p in f.phases.iter_mut() {
                *p = rng.gen_range(0.0..std::f64::consts::TAU);
            }
            mean += narrowband_gain(&f, tx, rx, &cfg).unwrap().norm_sqr();
        }
        mean /= ensembles as f64;
        assert!(
            (mean - expected).abs() < 0.05 * expected,
            "mean {mean} expected {expected}"
        );
    }

    #[test]
    fn empirical_correlation_at_zero_offset_is_one() {
        let cfg = outdoor(0.0);
        let rho = empirical_correlation(&cfg, 0.0, 200, 1).unwrap();
        assert!((rho.re - 1.0).abs() < 1e-12 && rho.im.abs() < 1e-12);
    }

    #[test]
    fn empirical_correlation_agrees_with_quadrature_at_two_lambda() {
        let cfg = outdoor(2.0);
        let rho_mc = empirical_correlation(&cfg, cfg.separation_d, 20_000, 42).unwrap();
        let rho_q = outdoor_correlation(&cfg).unwrap();
        assert!(
            (rho_mc.norm() - rho_q.rho_magnitude).abs() <= 0.03,
            "mc {} quad {}",
            rho_mc.norm(),
            rho_q.rho_magnitude
        );
    }

    #[test]
    fn large_offsets_decorrelate() {
        let cfg = outdoor(0.0);
        let lambda = cfg.wavelength;
        let rho20 = empirical_correlation(&cfg, 20.0 * lambda, 10_000, 9).unwrap();
        assert!(rho20.norm() < 0.2, "{}", rho20.norm());
        let mags: Vec<f64> = [0.5, 2.0, 10.0]
            .iter()
            .map(|m| {
                empirical_correlation(&cfg, m * lambda, 10_000, 9)
                    .unwrap()
                    .norm()
            })
            .collect();
        assert!(mags[0] > mags[1] && mags[1] > mags[2], "{mags:?}");
    }

    #[test]
    fn cir_synthesis_is_deterministic_and_reciprocal() {
        let cfg = dataset_default_config();
        let nodes = default_node_layout(4, 21);
        let field = sample_scatterers_around(
            Point::new(0.0, 0.0),
            cfg.ring_radius_r,
            cfg.exclusion_radius,
            &nodes,
            100,
            3,
        )
        .unwrap();
        let a = synthesize_cir(&field, nodes[0], nodes[1], &cfg, 50, 4e-9, 0.01, 5).unwrap();
        let b = synthesize_cir(&field, nodes[0], nodes[1], &cfg, 50, 4e-9, 0.01, 5).unwrap();
        assert_eq!(a, b);
        // noiseless reciprocity
        let fwd = synthesize_cir(&field, nodes[0], nodes[1], &cfg, 50, 4e-9, 0.0, 5).unwrap();
        let rev = synthesize_cir(&field, nodes[1], nodes[0], &cfg, 50, 4e-9, 0.0, 7).unwrap();
        assert_eq!(fwd, rev);
        assert!(fwd.max_tap() > 0.0);
    }

    #[test]
    fn single_scatterer_occupies_exactly_one_bin() {
        let cfg = dataset_default_config();
        let field = ScattererField {
            positions: vec![Point::new(2.0, 1.0)],
            amplitudes: vec![1.0],
            phases: vec![1.3],
            seed: 0,
        };
        let tx = Point::new(-3.0, 0.0);
        let rx = Point::new(4.0, -2.0);
        let cir = synthesize_cir(&field, tx, rx, &cfg, 50, 4e-9, 0.0, 0).unwrap();
        let path = tx.distance(field.positions[0]) + field.positions[0].distance(rx);
        let expect_bin = (path / SPEED_OF_LIGHT / 4e-9).floor() as usize;
        let nonzero: Vec<usize> = (0..cir.len()).filter(|&k| cir.taps[k] > 0.0).collect();
        assert_eq!(nonzero, vec![expect_bin]);
    }

    #[test]
    fn too_short_window_errors() {
        let cfg = dataset_default_config();
        let field = ScattererField {
            positions: vec![Point::new(2.0, 1.0)],
            amplitudes: vec![1.0],
            phases: vec![0.0],
            seed: 0,
        };
        let err = synthesize_cir(
            &field,
            Point::new(-3.0, 0.0),
            Point::new(4.0, -2.0),
            &cfg,
            2,
            4e-9,
            0.0,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DelayWindowExceeded { .. }));
    }

    #[test]
    fn dataset_has_the_full_cross_product() {
        let cfg = dataset_default_config();
        let nodes = default_node_layout(6, 2);
        let records = generate_network_dataset(&nodes, &cfg, 5, 0.05, 4).unwrap();
        assert_eq!(records.len(), 6 * 5 * 5);
        // two nodes, one measurement each way
        let two = generate_network_dataset(&nodes[..2], &cfg, 5, 0.0, 4).unwrap();
        assert_eq!(two.len(), 2 * 5);
    }

    #[test]
    fn forty_four_nodes_make_1892_links() {
        let cfg = dataset_default_config();
        let nodes = default_node_layout(44, 1);
        let records = generate_network_dataset_with(
            &nodes,
            &cfg,
            5,
            0.05,
            1,
            &SynthesisOptions {
                scatterer_count: 50,
                ..SynthesisOptions::default()
            },
        )
        .unwrap();
        assert_eq!(records.len(), 9460);
        let mut links: Vec<(u32, u32)> = records.iter().map(|r| (r.tx_id, r.rx_id)).collect();
        links.sort_unstable();
        links.dedup();
        assert_eq!(links.len(), 1892);
    }

    #[test]
    fn zero_drift_freezes_the_field() {
        let cfg = dataset_default_config();
        let nodes = default_node_layout(3, 8);
        let records = generate_network_dataset_with(
            &nodes,
            &cfg,
            5,
            0.0,
            9,
            &SynthesisOptions {
                noise_sigma: 0.0,
                scatterer_count: 80,
                ..SynthesisOptions::default()
            },
        )
        .unwrap();
        // measurements of one link are identical without drift or noise
        let first: Vec<&LinkSignatureRecord> =
            records.iter().filter(|r| r.tx_id == 0 && r.rx_id == 1).collect();
        assert_eq!(first.len(), 5);
        for r in &first[1..] {
            assert_eq!(r.cir, first[0].cir);
        }
    }

    #[test]
    fn duplicate_nodes_are_rejected() {
        let cfg = dataset_default_config();
        let nodes = vec![Point::new(0.0, 0.0), Point::new(0.0, 0.0)];
        assert!(generate_network_dataset(&nodes, &cfg, 1, 0.0, 0).is_err());
    }

    #[test]
    fn nearby_receivers_share_more_signature_shape() {
        let cfg = dataset_default_config();
        let lambda = cfg.wavelength;
        let tx = Point::new(-6.0, 0.0);
        let rx = Point::new(5.0, 1.0);
        let near = Point::new(5.0 + 0.25 * lambda, 1.0);
        let far = Point::new(5.0 + 20.0 * lambda, 1.0);
        let cosine = |a: &ChannelImpulseResponse, b: &ChannelImpulseResponse| {
            let dot: f64 = a.taps.iter().zip(&b.taps).map(|(x, y)| x * y).sum();
            let na: f64 = a.taps.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.taps.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let mut near_sim = 0.0;
        let mut far_sim = 0.0;
        let seeds = 50;
        for s in 0..seeds {
            let field = sample_scatterers_around(
                Point::new(0.0, 0.0),
                cfg.ring_radius_r,
                cfg.exclusion_radius,
                &[tx, rx, near, far],
                150,
                1000 + s,
            )
            .unwrap();
            let base = synthesize_cir(&field, tx, rx, &cfg, 50, 4e-9, 0.0, 0).unwrap();
            let cn = synthesize_cir(&field, tx, near, &cfg, 50, 4e-9, 0.0, 0).unwrap();
            let cf = synthesize_cir(&field, tx, far, &cfg, 50, 4e-9, 0.0, 0).unwrap();
            near_sim += cosine(&base, &cn);
            far_sim += cosine(&base, &cf);
        }
        near_sim /= seeds as f64;
        far_sim /= seeds as f64;
        assert!(
            near_sim > far_sim,
            "near {near_sim} vs far {far_sim}"
        );
    }

    #[test]
    fn trace_round_trip_is_exact() {
        let cfg = dataset_default_config();
        let nodes = default_node_layout(3, 13);
        let records = generate_network_dataset_with(
            &nodes,
            &cfg,
            2,
            0.02,
            3,
            &SynthesisOptions {
                scatterer_count: 60,
                ..SynthesisOptions::default()
            },
        )
        .unwrap();
        let dir = std::env::temp_dir().join(format!("linksig-trace-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        save_trace_file(&records, &path).unwrap();
        let loaded = load_trace_file(&path).unwrap();
        assert_eq!(records, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = std::env::temp_dir().join(format!("linksig-parse-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        // 2-tap header, row with a missing tap
        let path = dir.join("short.csv");
        std::fs::write(
            &path,
            "tx_id,rx_id,meas_idx,tx_x,tx_y,rx_x,rx_y,tap_0,tap_1\n0,1,0,0,0,1,1,0.5\n",
        )
        .unwrap();
        match load_trace_file(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }

        // unknown header column
        let path = dir.join("badheader.csv");
        std::fs::write(&path, "tx,rx_id,meas_idx,tx_x,tx_y,rx_x,rx_y,tap_0\n").unwrap();
        match load_trace_file(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }

        // header only: an empty dataset
        let path = dir.join("empty.csv");
        std::fs::write(&path, "tx_id,rx_id,meas_idx,tx_x,tx_y,rx_x,rx_y,tap_0\n").unwrap();
        assert!(load_trace_file(&path).unwrap().is_empty());

        std::fs::remove_dir_all(&dir).ok();
    }
}
