//! Grid-frequency input: CSV ingestion and a seeded two-regime generator.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted frequency range, Hz. Anything outside is a data error.
pub const SANITY_BAND: (f64, f64) = (45.0, 55.0);
pub const HEADER: [&str; 2] = ["time_s", "frequency_hz"];

/// Uniformly sampled frequency, held constant between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries {
    pub start_s: f64,
    pub step_s: f64,
    pub values: Vec<f64>,
}

impl FrequencySeries {
    pub fn new(start_s: f64, step_s: f64, values: Vec<f64>) -> Result<Self> {
        if !(step_s > 0.0) || !start_s.is_finite() {
            return Err(Error::Domain("frequency step must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Empty("frequency series has no samples".into()));
        }
        if let Some(k) = values
            .iter()
            .position(|f| !(*f >= SANITY_BAND.0 && *f <= SANITY_BAND.1))
        {
            return Err(Error::Domain(format!(
                "frequency {} Hz at sample {k} outside [{}, {}]",
                values[k], SANITY_BAND.0, SANITY_BAND.1
            )));
        }
        Ok(Self {
            start_s,
            step_s,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_s + k as f64 * self.step_s
    }

    /// Time span covered with the last sample held for one step, s.
    pub fn span_s(&self) -> f64 {
        self.values.len() as f64 * self.step_s
    }

    /// Zero-order hold at time `t`, clamped to the first and last sample.
    pub fn at(&self, t: f64) -> f64 {
        let x = (t - self.start_s) / self.step_s;
        if x <= 0.0 {
            return self.values[0];
        }
        let k = (x + 1e-9).floor() as usize;
        self.values[k.min(self.values.len() - 1)]
    }

    /// The same signal sampled every `dt` seconds by zero-order hold.
    pub fn resample(&self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain("resampling step must be positive".into()));
        }
        let n = (self.span_s() / dt + 1e-9).floor().max(1.0) as usize;
        let values = (0..n).map(|k| self.at(self.start_s + k as f64 * dt)).collect();
        Self::new(self.start_s, dt, values)
    }

    /// Sample standard deviation of the values with `start ≤ t < end`, Hz.
    pub fn sd_between(&self, start: f64, end: f64) -> f64 {
        let xs: Vec<f64> = (0..self.len())
            .filter(|&k| self.time(k) >= start && self.time(k) < end)
            .map(|k| self.values[k])
            .collect();
        if xs.len() < 2 {
            return f64::NAN;
        }
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for (k, f) in self.values.iter().enumerate() {
            w.write_record(&[self.time(k).to_string(), f.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("frequency", e))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn parse_error(label: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: label.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses a `time_s,frequency_hz` CSV. `label` names the source in errors.
pub fn read_frequency_csv<R: Read>(input: R, label: &str) -> Result<FrequencySeries> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = r.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| parse_error(label, 1, e.to_string()))?,
        None => return Err(parse_error(label, 1, "file is empty")),
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != HEADER {
        return Err(parse_error(
            label,
            1,
            format!("expected header `time_s,frequency_hz`, got `{}`", names.join(",")),
        ));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_error(label, line, e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_error(
                label,
                line,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(label, line, format!("invalid {what} `{s}`")))
        };
        let t = num(&rec[0], "time")?;
        let f = num(&rec[1], "frequency")?;
        if !(f >= SANITY_BAND.0 && f <= SANITY_BAND.1) {
            return Err(parse_error(
                label,
                line,
                format!(
                    "frequency {f} Hz outside the sanity band [{}, {}]",
                    SANITY_BAND.0, SANITY_BAND.1
                ),
            ));
        }
        if times.len() >= 2 {
            let step = times[1] - times[0];
            let d = t - times[times.len() - 1];
            if (d - step).abs() > 1e-6 * step.max(1.0) {
                return Err(parse_error(
                    label,
                    line,
                    format!("time step {d} s differs from the initial step {step} s"),
                ));
            }
        } else if times.len() == 1 && !(t > times[0]) {
            return Err(parse_error(label, line, "time must increase"));
        }
        times.push(t);
        values.push(f);
    }
    if values.is_empty() {
        return Err(parse_error(label, 2, "no data rows"));
    }
    let step = if times.len() >= 2 { times[1] - times[0] } else { 1.0 };
    FrequencySeries::new(times[0], step, values)
}

pub fn load_frequency_csv(path: &Path) -> Result<FrequencySeries> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_frequency_csv(std::io::BufReader::new(f), &path.display().to_string())
}

/// Shape of the synthetic frequency: an Ornstein-Uhlenbeck process around
/// the nominal value, then a loss-of-generation step with a partial
/// recovery and noisier conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub f_nom: f64,
    pub step_s: f64,
    /// Stationary standard deviation before the event, Hz.
    pub sd_hz: f64,
    pub reversion_s: f64,
    /// Event time. `None` puts it at two thirds of the run.
    pub split_at_s: Option<f64>,
    /// Frequency step at the event, Hz.
    pub event_hz: f64,
    /// Time the drop takes to reach full depth, s. Zero is an ideal step.
    pub onset_s: f64,
    /// Share of the step recovered with `fast_recovery_s`.
    pub fast_share: f64,
    pub fast_recovery_s: f64,
    /// The remainder recovers with this time constant, s.
    pub slow_recovery_s: f64,
    /// Noise standard deviation after the event relative to before.
    pub post_sd_factor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            f_nom: 50.0,
            step_s: 0.1,
            sd_hz: 0.02,
            reversion_s: 60.0,
            split_at_s: None,
            event_hz: -0.15,
            onset_s: 0.0,
            fast_share: 0.7,
            fast_recovery_s: 300.0,
            slow_recovery_s: 3600.0,
            post_sd_factor: 1.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_s > 0.0 && self.reversion_s > 0.0) {
            return Err(Error::Config(
                "synthetic step and reversion time must be positive".into(),
            ));
        }
        if !(self.sd_hz >= 0.0 && self.post_sd_factor >= 0.0) {
            return Err(Error::Config("synthetic noise levels must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.fast_share) {
            return Err(Error::Config("fast_share must lie in [0, 1]".into()));
        }
        if !(self.onset_s >= 0.0) {
            return Err(Error::Config("onset_s must be non-negative".into()));
        }
        if !(self.fast_recovery_s > 0.0 && self.slow_recovery_s > 0.0) {
            return Err(Error::Config("recovery time constants must be positive".into()));
        }
        Ok(())
    }

    pub fn split_for(&self, duration_s: f64) -> f64 {
        self.split_at_s.unwrap_or(duration_s * 2.0 / 3.0)
    }

    /// Deterministic event component at time `t`, Hz.
    pub fn event(&self, t: f64, split: f64) -> f64 {
        if t < split {
            return 0.0;
        }
        let tau = t - split;
        let depth = if tau < self.onset_s {
            (tau + self.step_s) / (self.onset_s + self.step_s)
        } else {
            1.0
        };
        depth
            * self.event_hz
            * (self.fast_share * (-tau / self.fast_recovery_s).exp()
                + (1.0 - self.fast_share) * (-tau / self.slow_recovery_s).exp())
    }
}

/// Seeded synthetic frequency over `[0, duration_s)`.
pub fn synthesize_frequency(cfg: &SynthConfig, seed: u64, duration_s: f64) -> Result<FrequencySeries> {
    cfg.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::Config("duration must be positive".into()));
    }
    let n = (duration_s / cfg.step_s).round().max(1.0) as usize;
    let split = cfg.split_for(duration_s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // separate stream from the hill-chart noise drawn with the same seed
    rng.set_stream(1);
    let decay = (-cfg.step_s / cfg.reversion_s).exp();
    let kick = (1.0 - decay * decay).sqrt();
    let z0: f64 = StandardNormal.sample(&mut rng);
    let mut x = cfg.sd_hz * z0;
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * cfg.step_s;
        let sd = if t < split {
            cfg.sd_hz
        } else {
            cfg.sd_hz * cfg.post_sd_factor
        };
        if k > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            x = decay * x + sd * kick * z;
        }
        let f = (cfg.f_nom + x + cfg.event(t, split)).clamp(SANITY_BAND.0, SANITY_BAND.1);
        values.push(f);
    }
    FrequencySeries::new(0.0, cfg.step_s, values)
}
