//! Forward-backward cooperative key extraction with helpers, the inference
//! attacks against it, and the spatial Poisson analysis of close attacker
//! placement.
//!
//! Protocol sketch: the transmitter picks N helpers; training broadcasts
//! give every party CIR estimates of the Tx-helper and helper-Rx channels;
//! each helper then retransmits twice with per-tap pre-equalization
//! (forward scale `h_helper,rx / h_tx,helper` toward the Tx, the inverse
//! toward the Rx), so both ends can form the same per-tap sum
//! `Σ_i (h_tx,i + h_i,rx)` and quantize it into a key. The per-tap scale is
//! the only reading of the power manipulation that closes the agreement
//! identity for multi-tap CIRs.
//!
//! Taps whose estimates fall below the division floor are dropped from the
//! sum on both sides; each party derives the drop set from its own two
//! measurements, which coincide in the noiseless protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::Serialize;

use crate::chansynth::{
    sample_scatterers_around, synthesize_cir, ChannelImpulseResponse, LinkSignatureRecord,
    ScattererField, SynthesisOptions,
};
use crate::geometry::{GeometryConfig, Point};
use crate::keyext::{cut_key, quantize, to_bits, BitKey};
use crate::sia::{
    build_training_set, infer_signature, models::train_model, target_query, AttackScenario,
    GuessTrace, Hyperparams, LinkId, ModelKind, ScenarioKind,
};
use crate::{derive_seed, Error, Result};

/// Hard floor under which a tap is unusable for pre-equalization.
pub const DIVISION_FLOOR: f64 = 1e-9;
/// Fraction of a measured vector's peak below which a tap is dropped from
/// the summed series; keeps noise-dominated bins out of the ratio scales.
pub const USABLE_FRACTION: f64 = 0.08;

/// Helper-assisted key extraction session.
#[derive(Debug, Clone)]
pub struct FbchSession {
    pub tx_id: u32,
    pub rx_id: u32,
    pub tx_loc: Point,
    pub rx_loc: Point,
    /// All M candidate relays in range: `(node id, location)`.
    pub helper_pool: Vec<(u32, Point)>,
    /// N helpers drawn from the pool (0 degenerates to the direct link).
    pub helper_count: usize,
    pub power_tx: f64,
    pub power_helper: f64,
    pub power_rx: f64,
    /// Per-symbol measurement noise as a fraction of the measured
    /// vector's peak; an estimate averages `training_symbols` symbols, so
    /// its effective noise scale is `noise_sigma / sqrt(training_symbols)`.
    pub noise_sigma: f64,
    /// Training symbols averaged per channel estimate.
    pub training_symbols: usize,
    pub key_length: usize,
    pub key_offset: usize,
    pub division_floor: f64,
    /// Relative per-vector floor for usable taps.
    pub usable_fraction: f64,
    pub seed: u64,
}

impl FbchSession {
    pub fn validate(&self) -> Result<()> {
        if self.helper_count > self.helper_pool.len() {
            return Err(Error::InvalidConfig(format!(
                "helper_count {} exceeds the pool of {}",
                self.helper_count,
                self.helper_pool.len()
            )));
        }
        if self
            .helper_pool
            .iter()
            .any(|(id, _)| *id == self.tx_id || *id == self.rx_id)
        {
            return Err(Error::InvalidConfig(
                "helpers must be distinct from tx and rx".into(),
            ));
        }
        if !(self.power_tx > 0.0 && self.power_helper > 0.0 && self.power_rx > 0.0) {
            return Err(Error::InvalidConfig("powers must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        if self.training_symbols == 0 {
            return Err(Error::InvalidConfig("training_symbols must be >= 1".into()));
        }
        if !(self.division_floor > 0.0) {
            return Err(Error::InvalidConfig("division_floor must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.usable_fraction) {
            return Err(Error::InvalidConfig(
                "usable_fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Seeded uniform draw of N helpers without replacement.
    pub fn selected_helpers(&self) -> Vec<(u32, Point)> {
        let mut pool = self.helper_pool.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0x5e1ec7));
        let mut picked = Vec::with_capacity(self.helper_count);
        for _ in 0..self.helper_count {
            let idx = rng.gen_range(0..pool.len());
            picked.push(pool.swap_remove(idx));
        }
        picked.sort_by_key(|(id, _)| *id);
        picked
    }
}

/// Reciprocal channel source backing a session.
pub trait ChannelProvider {
    /// True CIR between two locations; must satisfy `cir(a, b) = cir(b, a)`.
    fn cir(&self, a: Point, b: Point) -> Result<ChannelImpulseResponse>;
}

/// Noiseless synthetic channels from one shared scatterer field; matches
/// the field behind a dataset generated with the same (layout, cfg, seed,
/// options), so protocol runs and survey datasets describe one world.
pub struct SyntheticChannel {
    field: ScattererField,
    cfg: GeometryConfig,
    tap_count: usize,
    sampling_interval: f64,
}

impl SyntheticChannel {
    pub fn from_network(
        layout: &[Point],
        cfg: &GeometryConfig,
        seed: u64,
        opts: &SynthesisOptions,
    ) -> Result<Self> {
        let centroid = Point::new(
            layout.iter().map(|p| p.x).sum::<f64>() / layout.len() as f64,
            layout.iter().map(|p| p.y).sum::<f64>() / layout.len() as f64,
        );
        let field = sample_scatterers_around(
            centroid,
            cfg.ring_radius_r,
            cfg.exclusion_radius,
            layout,
            opts.scatterer_count,
            seed,
        )?;
        Ok(SyntheticChannel {
            field,
            cfg: cfg.clone(),
            tap_count: opts.tap_count,
            sampling_interval: opts.sampling_interval,
        })
    }
}

impl ChannelProvider for SyntheticChannel {
    fn cir(&self, a: Point, b: Point) -> Result<ChannelImpulseResponse> {
        synthesize_cir(
            &self.field,
            a,
            b,
            &self.cfg,
            self.tap_count,
            self.sampling_interval,
            0.0,
            0,
        )
    }
}

/// Everything one helper contributed, for auditing a session.
#[derive(Debug, Clone, Serialize)]
pub struct HelperTranscript {
    pub helper_id: u32,
    pub true_tx_to_helper: Vec<f64>,
    pub true_helper_to_rx: Vec<f64>,
    /// Helper's own estimates (protocol steps 2 and 4).
    pub helper_est_from_tx: Vec<f64>,
    pub helper_est_from_rx: Vec<f64>,
    /// End estimates of the helper broadcast (step 3).
    pub tx_est_helper: Vec<f64>,
    pub rx_est_helper: Vec<f64>,
    /// Per-tap pre-equalization scales (steps 5 and 6); zero where masked.
    pub forward_scale: Vec<f64>,
    pub backward_scale: Vec<f64>,
    /// End estimates of the pre-equalized retransmissions.
    pub tx_est_forward: Vec<f64>,
    pub rx_est_backward: Vec<f64>,
    pub usable_taps_tx: Vec<bool>,
    pub usable_taps_rx: Vec<bool>,
}

/// Step-by-step record of a session.
#[derive(Debug, Clone, Serialize)]
pub struct FbchTranscript {
    pub power_tx: f64,
    pub power_helper: f64,
    pub power_rx: f64,
    pub noise_sigma: f64,
    pub division_floor: f64,
    pub helpers: Vec<HelperTranscript>,
    pub series_tx: Vec<f64>,
    pub series_rx: Vec<f64>,
    pub key_tx: String,
    pub key_rx: String,
}

/// Outcome of one session.
#[derive(Debug, Clone)]
pub struct FbchOutcome {
    pub key_tx: BitKey,
    pub key_rx: BitKey,
    pub transcript: FbchTranscript,
}

/// One noisy measurement: true per-tap amplitudes plus Gaussian noise of
/// scale `noise_sigma` times the vector's peak (the nominal-power division
/// already applied).
fn measure(truth: &[f64], noise_sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if noise_sigma == 0.0 {
        return truth.to_vec();
    }
    let peak = truth.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let sigma = noise_sigma * peak;
    truth
        .iter()
        .map(|t| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            t + sigma * (-2.0 * u1.ln()).sqrt() * u2.cos()
        })
        .collect()
}

/// Execute the seven protocol steps and extract a key at each end.
pub fn run_fbch(session: &FbchSession, provider: &dyn ChannelProvider) -> Result<FbchOutcome> {
    session.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(session.seed, 0xf8c4));
    let sigma = session.noise_sigma / (session.training_symbols as f64).sqrt();
    let floor = session.division_floor;

    let mut helpers = Vec::new();
    let mut series_tx: Option<Vec<f64>> = None;
    let mut series_rx: Option<Vec<f64>> = None;
    let add = |acc: &mut Option<Vec<f64>>, values: Vec<f64>| match acc {
        None => *acc = Some(values),
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(values) {
                *a += v;
            }
        }
    };

    if session.helper_count == 0 {
        // degenerate: both ends measure the direct link
        let direct = provider.cir(session.tx_loc, session.rx_loc)?;
        add(&mut series_tx, measure(&direct.taps, sigma, &mut rng));
        add(&mut series_rx, measure(&direct.taps, sigma, &mut rng));
    }

    for (helper_id, helper_loc) in session.selected_helpers() {
        let true_th = provider.cir(session.tx_loc, helper_loc)?;
        let true_hr = provider.cir(helper_loc, session.rx_loc)?;

        // steps 2-4: training broadcasts and their estimates
        let helper_est_from_tx = measure(&true_th.taps, sigma, &mut rng);
        let tx_est_helper = measure(&true_th.taps, sigma, &mut rng);
        let rx_est_helper = measure(&true_hr.taps, sigma, &mut rng);
        let helper_est_from_rx = measure(&true_hr.taps, sigma, &mut rng);

        // steps 5-6: pre-equalized retransmissions
        let fraction = session.usable_fraction;
        let usable = |a: &[f64], b: &[f64]| -> Vec<bool> {
            let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, t| m.max(t.abs()));
            let ta = (fraction * peak(a)).max(floor);
            let tb = (fraction * peak(b)).max(floor);
            a.iter()
                .zip(b)
                .map(|(x, y)| x.abs() >= ta && y.abs() >= tb)
                .collect()
        };
        let helper_mask = usable(&helper_est_from_tx, &helper_est_from_rx);
        if helper_mask.iter().all(|&m| !m) {
            return Err(Error::GuardedDivision {
                helper: helper_id as usize,
                floor,
            });
        }
        let forward_scale: Vec<f64> = helper_mask
            .iter()
            .zip(helper_est_from_rx.iter().zip(&helper_est_from_tx))
            .map(|(&m, (hr, ht))| if m { hr / ht } else { 0.0 })
            .collect();
        let backward_scale: Vec<f64> = helper_mask
            .iter()
            .zip(helper_est_from_tx.iter().zip(&helper_est_from_rx))
            .map(|(&m, (ht, hr))| if m { ht / hr } else { 0.0 })
            .collect();

        let forward_truth: Vec<f64> = forward_scale
            .iter()
            .zip(&true_th.taps)
            .map(|(s, h)| s * h)
            .collect();
        let backward_truth: Vec<f64> = backward_scale
            .iter()
            .zip(&true_hr.taps)
            .map(|(s, h)| s * h)
            .collect();
        let tx_est_forward = measure(&forward_truth, sigma, &mut rng);
        let rx_est_backward = measure(&backward_truth, sigma, &mut rng);

        // each end drops taps its own two estimates cannot support
        let usable_taps_tx = usable(&tx_est_helper, &tx_est_forward);
        let usable_taps_rx = usable(&rx_est_helper, &rx_est_backward);
        let masked_sum = |mask: &[bool], a: &[f64], b: &[f64]| -> Vec<f64> {
            mask.iter()
                .zip(a.iter().zip(b))
                .map(|(&m, (x, y))| if m { x + y } else { 0.0 })
                .collect()
        };
        add(
            &mut series_tx,
            masked_sum(&usable_taps_tx, &tx_est_helper, &tx_est_forward),
        );
        add(
            &mut series_rx,
            masked_sum(&usable_taps_rx, &rx_est_helper, &rx_est_backward),
        );

        helpers.push(HelperTranscript {
            helper_id,
            true_tx_to_helper: true_th.taps,
            true_helper_to_rx: true_hr.taps,
            helper_est_from_tx,
            helper_est_from_rx,
            tx_est_helper,
            rx_est_helper,
            forward_scale,
            backward_scale,
            tx_est_forward,
            rx_est_backward,
            usable_taps_tx,
            usable_taps_rx,
        });
    }

    let series_tx = series_tx.expect("at least the direct link contributes");
    let series_rx = series_rx.expect("at least the direct link contributes");
    let key_of = |series: &[f64]| -> Result<BitKey> {
        let cir = ChannelImpulseResponse {
            taps: series.iter().map(|t| t.max(0.0)).collect(),
            sampling_interval: 1.0,
        };
        cut_key(
            &to_bits(&quantize(&cir)?),
            session.key_length,
            session.key_offset,
        )
    };
    let key_tx = key_of(&series_tx)?;
    let key_rx = key_of(&series_rx)?;
    let transcript = FbchTranscript {
        power_tx: session.power_tx,
        power_helper: session.power_helper,
        power_rx: session.power_rx,
        noise_sigma: sigma,
        division_floor: floor,
        helpers,
        series_tx,
        series_rx,
        key_tx: key_tx.to_bit_string(),
        key_rx: key_rx.to_bit_string(),
    };
    Ok(FbchOutcome {
        key_tx,
        key_rx,
        transcript,
    })
}

/// Noiseless per-tap sum `Σ_i (h_tx,i + h_i,rx)` with the same tap masking
/// the protocol applies: the adversary's ground truth.
pub fn true_summed_series(
    session: &FbchSession,
    provider: &dyn ChannelProvider,
) -> Result<Vec<f64>> {
    session.validate()?;
    let floor = session.division_floor;
    if session.helper_count == 0 {
        return Ok(provider.cir(session.tx_loc, session.rx_loc)?.taps);
    }
    let mut series: Option<Vec<f64>> = None;
    for (_, helper_loc) in session.selected_helpers() {
        let th = provider.cir(session.tx_loc, helper_loc)?;
        let hr = provider.cir(helper_loc, session.rx_loc)?;
        let ta = (session.usable_fraction * th.max_tap()).max(floor);
        let tb = (session.usable_fraction * hr.max_tap()).max(floor);
        let contrib: Vec<f64> = th
            .taps
            .iter()
            .zip(&hr.taps)
            .map(|(a, b)| {
                if a.abs() >= ta && b.abs() >= tb {
                    a + b
                } else {
                    0.0
                }
            })
            .collect();
        match &mut series {
            None => series = Some(contrib),
            Some(s) => {
                for (x, c) in s.iter_mut().zip(contrib) {
                    *x += c;
                }
            }
        }
    }
    Ok(series.expect("helper_count > 0"))
}

/// Infer one link's CIR the way the plain attack does, returning the
/// clamped tap vector.
fn infer_link(
    dataset: &[LinkSignatureRecord],
    kind: ScenarioKind,
    target: LinkId,
    held_out_meas: u32,
    model_kind: ModelKind,
    hyper: &Hyperparams,
    k_nearest: Option<usize>,
    seed: u64,
) -> Result<Vec<f64>> {
    let scenario = AttackScenario::new(kind, target, held_out_meas);
    let set = build_training_set(dataset, &scenario, k_nearest)?;
    let model = train_model(model_kind, &set, hyper, seed)?;
    let query = target_query(dataset, &scenario)?;
    Ok(infer_signature(&model, &query, 1.0)?.taps)
}

/// Attack a session: infer every candidate Tx→helper and helper→Rx CIR
/// from the survey dataset, sum them (over the true selection when the
/// adversary knows it, else over the whole pool scaled by N/M), and count
/// guesses against the true key levels.
#[allow(clippy::too_many_arguments)]
pub fn fbch_adversary_attack(
    session: &FbchSession,
    provider: &dyn ChannelProvider,
    dataset: &[LinkSignatureRecord],
    scenario_kind: ScenarioKind,
    model_kind: ModelKind,
    hyper: &Hyperparams,
    k_nearest: Option<usize>,
    adversary_knows_selection: bool,
    held_out_meas: u32,
    key_points: usize,
    seed: u64,
) -> Result<GuessTrace> {
    session.validate()?;
    let truth = true_summed_series(session, provider)?;

    let candidates: Vec<(u32, Point)> = if session.helper_count == 0 {
        Vec::new()
    } else if adversary_knows_selection {
        session.selected_helpers()
    } else {
        session.helper_pool.clone()
    };

    let mut inferred: Vec<f64> = vec![0.0; truth.len()];
    if session.helper_count == 0 {
        let taps = infer_link(
            dataset,
            scenario_kind,
            LinkId {
                tx: session.tx_id,
                rx: session.rx_id,
            },
            held_out_meas,
            model_kind,
            hyper,
            k_nearest,
            derive_seed(seed, 0),
        )?;
        for (acc, t) in inferred.iter_mut().zip(taps) {
            *acc += t;
        }
    } else {
        let scale = if adversary_knows_selection {
            1.0
        } else {
            session.helper_count as f64 / session.helper_pool.len() as f64
        };
        for (idx, (helper_id, _)) in candidates.iter().enumerate() {
            let toward = infer_link(
                dataset,
                scenario_kind,
                LinkId {
                    tx: session.tx_id,
                    rx: *helper_id,
                },
                held_out_meas,
                model_kind,
                hyper,
                k_nearest,
                derive_seed(seed, 2 * idx as u64),
            )?;
            let outward = infer_link(
                dataset,
                scenario_kind,
                LinkId {
                    tx: *helper_id,
                    rx: session.rx_id,
                },
                held_out_meas,
                model_kind,
                hyper,
                k_nearest,
                derive_seed(seed, 2 * idx as u64 + 1),
            )?;
            for ((acc, a), b) in inferred.iter_mut().zip(toward).zip(outward) {
                *acc += scale * (a + b);
            }
        }
    }

    let truth_cir = ChannelImpulseResponse {
        taps: truth,
        sampling_interval: 1.0,
    };
    let inferred_cir = ChannelImpulseResponse {
        taps: inferred,
        sampling_interval: 1.0,
    };
    crate::sia::guesses_between(&truth_cir, &inferred_cir, key_points)
}

/// Spatial Poisson model of attacker placement around legitimate nodes.
#[derive(Debug, Clone, Copy)]
pub struct PoissonPlacement {
    /// Attacker density per square meter.
    pub attacker_density: f64,
    /// Radius within which an attacker defeats a node (default λ/2).
    pub close_radius: f64,
    pub legit_count: usize,
}

impl PoissonPlacement {
    pub fn validate(&self) -> Result<()> {
        if self.attacker_density < 0.0 {
            return Err(Error::InvalidConfig("attacker density must be >= 0".into()));
        }
        if !(self.close_radius > 0.0) {
            return Err(Error::InvalidConfig("close radius must be > 0".into()));
        }
        if self.legit_count == 0 {
            return Err(Error::InvalidConfig("need at least one node".into()));
        }
        Ok(())
    }
}

/// `P{X(B) = k}` for a region of the given area.
pub fn poisson_count_pmf(placement: &PoissonPlacement, area: f64, k: usize) -> Result<f64> {
    placement.validate()?;
    if !(area > 0.0) {
        return Err(Error::InvalidConfig("area must be > 0".into()));
    }
    let mu = placement.attacker_density * area;
    let mut p = (-mu).exp();
    for i in 1..=k {
        p *= mu / i as f64;
    }
    Ok(p)
}

/// Probability that every legitimate node has at least one attacker within
/// the close radius: `(1 - exp(-λ π r²))^N`.
pub fn close_attack_probability(placement: &PoissonPlacement) -> Result<f64> {
    placement.validate()?;
    let mu = placement.attacker_density
        * std::f64::consts::PI
        * placement.close_radius
        * placement.close_radius;
    let per_node = -(-mu).exp_m1();
    Ok(per_node.powi(placement.legit_count as i32))
}

/// Simulation oracle for [`close_attack_probability`]: scatter a Poisson
/// field of attackers over a square region and count trials where every
/// node is covered. Nodes are placed once with pairwise separation > 2r
/// (disjoint disks), which the closed form presumes.
pub fn monte_carlo_close_attack(
    placement: &PoissonPlacement,
    region_area: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    placement.validate()?;
    if trials < 1_000 {
        return Err(Error::InvalidConfig("need at least 1000 trials".into()));
    }
    if !(region_area > 0.0) {
        return Err(Error::InvalidConfig("region area must be > 0".into()));
    }
    let side = region_area.sqrt();
    let r = placement.close_radius;
    let margin = side / 2.0 - r;
    if margin <= 0.0 {
        return Err(Error::InfeasiblePlacement(
            "region too small for one covered disk".into(),
        ));
    }

    // one fixed placement: coverage events on disjoint disks are
    // independent, so the estimate does not depend on where the nodes sit
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut nodes: Vec<Point> = Vec::with_capacity(placement.legit_count);
    let mut attempts = 0;
    while nodes.len() < placement.legit_count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::InfeasiblePlacement(format!(
                "could not place {} nodes with separation > {} in a {:.1} m square",
                placement.legit_count,
                2.0 * r,
                side
            )));
        }
        let p = Point::new(
            rng.gen_range(-margin..margin),
            rng.gen_range(-margin..margin),
        );
        if nodes.iter().all(|q| q.distance(p) > 2.0 * r) {
            nodes.push(p);
        }
    }

    let mu = placement.attacker_density * region_area;
    let poisson = if mu > 0.0 {
        Some(rand_distr::Poisson::new(mu).map_err(|e| {
            Error::InvalidConfig(format!("poisson parameter: {e}"))
        })?)
    } else {
        None
    };
    let mut successes = 0usize;
    let mut trial_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let half = side / 2.0;
    for _ in 0..trials {
        let count = match &poisson {
            Some(d) => d.sample(&mut trial_rng) as usize,
            None => 0,
        };
        let mut covered = vec![false; nodes.len()];
        let mut remaining = nodes.len();
        for _ in 0..count {
            let a = Point::new(
                trial_rng.gen_range(-half..half),
                trial_rng.gen_range(-half..half),
            );
            for (i, node) in nodes.iter().enumerate() {
                if !covered[i] && node.distance(a) <= r {
                    covered[i] = true;
                    remaining -= 1;
                }
            }
            if remaining == 0 {
                break;
            }
        }
        if remaining == 0 {
            successes += 1;
        }
    }
    Ok(successes as f64 / trials as f64)
}
