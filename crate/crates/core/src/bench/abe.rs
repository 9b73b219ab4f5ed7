use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::abe::{self, AttributeUniverse};
use crate::field::LARGE_PRIME;
use crate::netsim::GroupChoice;
use crate::pairing::{CurveGroup, ExponentGroup, GroupParams, PairingGroup};
use crate::policy::{assign_shares, build_tree, parse_policy};

use super::{median, r_squared, rows_to_csv, BenchConfig, BenchError};

/// All leaves joined by one gate kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    And,
    Or,
}

impl GateMode {
    fn formula(self, attributes: usize) -> String {
        let op = match self {
            GateMode::And => " AND ",
            GateMode::Or => " OR ",
        };
        (1..=attributes).map(|i| format!("A_{i}")).collect::<Vec<_>>().join(op)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Attributes,
    Payload,
}

/// Median wall times of one cell, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbeSample {
    pub sweep: Sweep,
    pub mode: GateMode,
    pub attributes: usize,
    pub payload_bytes: usize,
    pub keygen_ms: f64,
    pub encrypt_ms: f64,
    pub decrypt_ms: f64,
}

/// Shape checks over the samples, with the thresholds they are held to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbeChecks {
    /// R² of encrypt time against attribute count, minimum over modes.
    pub encrypt_r2: f64,
    pub keygen_r2: f64,
    /// max/min of all-OR decrypt time across attribute counts; absent without an OR sweep.
    pub or_decrypt_ratio: Option<f64>,
    /// R² of all-AND decrypt time; absent without an AND sweep.
    pub and_decrypt_r2: Option<f64>,
    /// max/min across payload sizes up to 1 MiB, worst of encrypt and decrypt.
    pub small_payload_ratio: Option<f64>,
    pub encrypt_linear: bool,
    pub keygen_linear: bool,
    pub or_decrypt_flat: bool,
    pub and_decrypt_linear: bool,
    pub small_payload_constant: bool,
}

pub const LINEAR_R2: f64 = 0.9;
pub const FLAT_RATIO: f64 = 1.5;
pub const PAYLOAD_RATIO: f64 = 2.0;
const SMALL_PAYLOAD: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbeReport {
    pub seed: u64,
    pub config_digest: String,
    pub backend: GroupChoice,
    pub repetitions: usize,
    pub samples: Vec<AbeSample>,
    pub checks: AbeChecks,
}

impl AbeReport {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.samples)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "bench-abe seed={} backend={:?} repetitions={} config={}\n",
            self.seed, self.backend, self.repetitions, &self.config_digest[..16]
        );
        out.push_str(&format!(
            "{:<10} {:<4} {:>5} {:>10} {:>11} {:>11} {:>11}\n",
            "sweep", "mode", "attrs", "bytes", "keygen_ms", "encrypt_ms", "decrypt_ms"
        ));
        for s in &self.samples {
            out.push_str(&format!(
                "{:<10} {:<4} {:>5} {:>10} {:>11.3} {:>11.3} {:>11.3}\n",
                format!("{:?}", s.sweep).to_lowercase(),
                format!("{:?}", s.mode).to_lowercase(),
                s.attributes,
                s.payload_bytes,
                s.keygen_ms,
                s.encrypt_ms,
                s.decrypt_ms
            ));
        }
        let c = &self.checks;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        out.push_str(&format!(
            "encrypt R²={:.3} ({}), keygen R²={:.3} ({}), OR decrypt max/min={} ({}), AND decrypt R²={} ({}), payload≤1MiB max/min={} ({})\n",
            c.encrypt_r2,
            flag(c.encrypt_linear),
            c.keygen_r2,
            flag(c.keygen_linear),
            opt(c.or_decrypt_ratio),
            flag(c.or_decrypt_flat),
            opt(c.and_decrypt_r2),
            flag(c.and_decrypt_linear),
            opt(c.small_payload_ratio),
            flag(c.small_payload_constant),
        ));
        out
    }
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn bench_abe(config: &BenchConfig) -> Result<AbeReport, BenchError> {
    config.validate()?;
    match config.backend {
        GroupChoice::Curve => run(CurveGroup::new(), config),
        GroupChoice::Exponent => {
            let params = GroupParams::exponent(LARGE_PRIME).map_err(|e| BenchError::Run(e.to_string()))?;
            run(ExponentGroup::new(params), config)
        }
    }
}

fn run<G: PairingGroup>(group: G, config: &BenchConfig) -> Result<AbeReport, BenchError> {
    let err = |e: &dyn std::fmt::Display| BenchError::Run(e.to_string());
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (pk, mk) = abe::setup(&group, &mut rng);
    let field = group.scalar_field();
    let h = field.random_nonzero(&mut rng);
    let max_attrs = config.attribute_counts.iter().copied().max().unwrap_or(1).max(config.fixed_attributes());
    let mut universe = AttributeUniverse::<G>::default();
    for i in 1..=max_attrs {
        universe.register(&group, &format!("A_{i}"), &mut rng).map_err(|e| err(&e))?;
    }
    let points = |l: &str| universe.point(l).cloned();

    let mut cell = |sweep: Sweep, mode: GateMode, attributes: usize, size: usize| -> Result<AbeSample, BenchError> {
        let tree = build_tree(&parse_policy(&mode.formula(attributes)).map_err(|e| err(&e))?).map_err(|e| err(&e))?;
        let labels: Vec<String> = (1..=attributes).map(|i| format!("A_{i}")).collect();
        let payload: Vec<u8> = (0..size).map(|i| (i * 31 + 7) as u8).collect();
        let (mut kg, mut enc, mut dec) = (Vec::new(), Vec::new(), Vec::new());
        // One untimed pass warms caches and allocators.
        for rep in 0..=config.repetitions {
            let (_, matrix, _) = assign_shares(&tree, &mut rng, field).map_err(|e| err(&e))?;
            let t = Instant::now();
            let sk = abe::keygen(&group, &mk, &labels, h, points, &mut rng).map_err(|e| err(&e))?;
            let keygen = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let wrapped = abe::wrap(&group, &pk, &payload, &matrix, h, points, &mut rng).map_err(|e| err(&e))?;
            let encrypt = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let back = abe::unwrap(&group, &sk, &wrapped).map_err(|e| err(&e))?;
            let decrypt = t.elapsed().as_secs_f64();
            if back != payload {
                return Err(BenchError::Run(format!("round trip failed at {attributes} attributes")));
            }
            if rep > 0 {
                kg.push(keygen * 1e3);
                enc.push(encrypt * 1e3);
                dec.push(decrypt * 1e3);
            }
        }
        Ok(AbeSample {
            sweep,
            mode,
            attributes,
            payload_bytes: size,
            keygen_ms: median(&mut kg),
            encrypt_ms: median(&mut enc),
            decrypt_ms: median(&mut dec),
        })
    };

    let mut samples = Vec::new();
    for &mode in &config.gate_modes {
        for &n in &config.attribute_counts {
            samples.push(cell(Sweep::Attributes, mode, n, config.sweep_payload)?);
        }
    }
    for &mode in &config.gate_modes {
        for &size in &config.payload_sizes {
            samples.push(cell(Sweep::Payload, mode, config.fixed_attributes(), size)?);
        }
    }
    let checks = evaluate(config, &samples);
    Ok(AbeReport {
        seed: config.seed,
        config_digest: config.digest(),
        backend: config.backend,
        repetitions: config.repetitions,
        samples,
        checks,
    })
}

fn evaluate(config: &BenchConfig, samples: &[AbeSample]) -> AbeChecks {
    let sweep_of = |mode: GateMode| -> Vec<&AbeSample> {
        samples.iter().filter(|s| s.sweep == Sweep::Attributes && s.mode == mode).collect()
    };
    let fit = |rows: &[&AbeSample], y: fn(&AbeSample) -> f64| {
        r_squared(&rows.iter().map(|s| (s.attributes as f64, y(s))).collect::<Vec<_>>())
    };
    let ratio = |values: Vec<f64>| {
        let max = values.iter().copied().fold(f64::MIN, f64::max);
        let min = values.iter().copied().fold(f64::MAX, f64::min);
        max / min
    };
    // A single attribute count cannot show a trend; treat the fit as vacuous.
    let trend = config.attribute_counts.len() >= 2;
    let min_over_modes = |y: fn(&AbeSample) -> f64| {
        config
            .gate_modes
            .iter()
            .map(|&m| if trend { fit(&sweep_of(m), y) } else { 1.0 })
            .fold(f64::MAX, f64::min)
    };
    let encrypt_r2 = min_over_modes(|s| s.encrypt_ms);
    let keygen_r2 = min_over_modes(|s| s.keygen_ms);

    let or_rows = sweep_of(GateMode::Or);
    let or_decrypt_ratio = (!or_rows.is_empty()).then(|| ratio(or_rows.iter().map(|s| s.decrypt_ms).collect()));
    let and_rows = sweep_of(GateMode::And);
    let and_decrypt_r2 = (!and_rows.is_empty()).then(|| if trend { fit(&and_rows, |s| s.decrypt_ms) } else { 1.0 });

    let small: Vec<&AbeSample> = samples
        .iter()
        .filter(|s| s.sweep == Sweep::Payload && s.payload_bytes <= SMALL_PAYLOAD)
        .collect();
    let small_payload_ratio = (!small.is_empty()).then(|| {
        config
            .gate_modes
            .iter()
            .flat_map(|&m| {
                let rows: Vec<&&AbeSample> = small.iter().filter(|s| s.mode == m).collect();
                [
                    ratio(rows.iter().map(|s| s.encrypt_ms).collect()),
                    ratio(rows.iter().map(|s| s.decrypt_ms).collect()),
                ]
            })
            .fold(f64::MIN, f64::max)
    });

    AbeChecks {
        encrypt_r2,
        keygen_r2,
        or_decrypt_ratio,
        and_decrypt_r2,
        small_payload_ratio,
        encrypt_linear: encrypt_r2 >= LINEAR_R2,
        keygen_linear: keygen_r2 >= LINEAR_R2,
        or_decrypt_flat: or_decrypt_ratio.is_none_or(|r| r <= FLAT_RATIO),
        and_decrypt_linear: and_decrypt_r2.is_none_or(|r| r >= LINEAR_R2),
        small_payload_constant: small_payload_ratio.is_none_or(|r| r <= PAYLOAD_RATIO),
    }
}
