//! Battery bookkeeping, energy budgets, harvest traces, and loss-of-load
//! probability.
//!
//! All energy values are watt-hours per slot. The battery is a simple
//! clamped integrator; the uplink budget for a slot is whatever charge sits
//! above the configured safety reserve. LOLP is the fraction of slots whose
//! end-of-slot state of charge fell strictly below a threshold.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub soc_wh: f64,
    pub capacity_wh: f64,
}

impl BatteryState {
    pub fn new(soc_wh: f64, capacity_wh: f64) -> Self {
        BatteryState {
            soc_wh: soc_wh.clamp(0.0, capacity_wh),
            capacity_wh,
        }
    }

    /// Fraction of capacity, in [0, 1].
    pub fn fraction(&self) -> f64 {
        if self.capacity_wh > 0.0 {
            self.soc_wh / self.capacity_wh
        } else {
            0.0
        }
    }
}

/// Station power parameters. `b_safe_wh` is the scheduler's reserve: the
/// adaptive uplink never spends below it. `lolp_threshold_wh` is the level
/// used for loss-of-load accounting and defaults to the reserve; deployments
/// that schedule with extra margin set the reserve above the critical
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerConfig {
    pub capacity_wh: f64,
    pub initial_soc_wh: f64,
    pub b_safe_wh: f64,
    /// Sensing plus local inference drain, applied every slot.
    pub base_load_wh: f64,
    /// Uplink energy per packet.
    pub e_pkt_wh: f64,
    pub lolp_threshold_wh: f64,
}

/// Advance one slot: charge with the harvest, spend the load, clamp to
/// [0, capacity].
pub fn step_battery(state: BatteryState, harvest_wh: f64, load_wh: f64) -> BatteryState {
    BatteryState {
        soc_wh: (state.soc_wh + harvest_wh - load_wh).clamp(0.0, state.capacity_wh),
        capacity_wh: state.capacity_wh,
    }
}

/// Spendable uplink energy: charge above the reserve, never negative.
pub fn energy_budget(state: &BatteryState, b_safe_wh: f64) -> f64 {
    (state.soc_wh - b_safe_wh).max(0.0)
}

/// Fraction of recorded slots strictly below the threshold.
pub fn lolp(soc_history: &[f64], threshold_wh: f64) -> Result<f64> {
    if soc_history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let below = soc_history.iter().filter(|soc| **soc < threshold_wh).count();
    Ok(below as f64 / soc_history.len() as f64)
}

/// Slots until the state of charge reaches the threshold under zero harvest
/// and a constant per-slot load.
pub fn time_to_threshold(soc_wh: f64, threshold_wh: f64, load_wh: f64) -> u64 {
    if load_wh <= 0.0 || soc_wh <= threshold_wh {
        return 0;
    }
    ((soc_wh - threshold_wh) / load_wh).ceil() as u64
}

// ----------------------------------------------------------------------
// Traces
// ----------------------------------------------------------------------

pub const TRACE_UNIT: &str = "wh";

/// Per-slot harvest series with its slot length.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub slot_minutes: u32,
    pub values: Vec<f64>,
}

impl EnergyTrace {
    /// Parse the line-delimited trace format: a header declaring the slot
    /// length and unit, then one non-negative value per line.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::schema(origin, "empty trace file"))?;
        let slot_minutes = parse_trace_header(header).ok_or_else(|| Error::Line {
            path: origin.to_string(),
            line: 1,
            message: format!(
                "expected header `slot_minutes=<n> unit={TRACE_UNIT}`, found `{header}`"
            ),
        })?;
        let mut values = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Line {
                path: origin.to_string(),
                line: idx + 1,
                message: format!("not a number: `{line}`"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Line {
                    path: origin.to_string(),
                    line: idx + 1,
                    message: format!("harvest value must be finite and non-negative, found {v}"),
                });
            }
            values.push(v);
        }
        Ok(EnergyTrace {
            slot_minutes,
            values,
        })
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self) -> String {
        let mut out = format!("slot_minutes={} unit={TRACE_UNIT}\n", self.slot_minutes);
        for v in &self.values {
            out.push_str(&format!("{v:.6}\n"));
        }
        out
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.save()).map_err(|e| Error::io(path.display(), e))
    }
}

fn parse_trace_header(line: &str) -> Option<u32> {
    let mut slot_minutes = None;
    let mut unit_ok = false;
    for part in line.split_whitespace() {
        match part.split_once('=') {
            Some(("slot_minutes", v)) => slot_minutes = v.parse().ok(),
            Some(("unit", v)) if v == TRACE_UNIT => unit_ok = true,
            _ => return None,
        }
    }
    if unit_ok {
        slot_minutes
    } else {
        None
    }
}

// ----------------------------------------------------------------------
// Generator
// ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarvestShape {
    /// Half-sine daylight curve, zero at night.
    Sine,
    /// Flat harvest every slot (bench supply, fixed feed).
    Constant,
}

/// A whole-day span with scaled-down harvest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvercastWindow {
    pub start_day: u64,
    /// Inclusive.
    pub end_day: u64,
    pub factor: f64,
}

/// Deterministic harvest synthesizer. With `jitter` zero the seed is inert;
/// otherwise each slot's value is scaled by a uniform factor in
/// [1 - jitter, 1 + jitter] drawn from a ChaCha stream seeded with
/// `jitter_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceGenerator {
    pub kind: HarvestShape,
    /// Zero means "inherit from the scenario" when embedded in one.
    #[serde(default)]
    pub slots: u64,
    #[serde(default)]
    pub slot_minutes: u32,
    /// Peak harvest per slot (sine) or the flat per-slot value (constant).
    pub amp_wh: f64,
    #[serde(default)]
    pub sunrise_slot: u64,
    #[serde(default)]
    pub day_slots: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overcast: Vec<OvercastWindow>,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub jitter_seed: u64,
}

impl TraceGenerator {
    pub fn validate(&self) -> Result<()> {
        let reject = |m: &str| Error::Scenario(format!("trace generator: {m}"));
        if self.slot_minutes == 0 {
            return Err(reject("slot_minutes must be set"));
        }
        if 1440 % self.slot_minutes != 0 {
            return Err(reject(&format!(
                "slot_minutes {} must divide a day",
                self.slot_minutes
            )));
        }
        if self.slots == 0 {
            return Err(reject("slots must be set"));
        }
        if !(self.amp_wh >= 0.0) {
            return Err(reject("amp_wh must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(reject("jitter must lie in [0, 1]"));
        }
        let slots_per_day = 1440 / self.slot_minutes as u64;
        if self.kind == HarvestShape::Sine {
            if self.day_slots == 0 {
                return Err(reject("sine shape requires day_slots > 0"));
            }
            if self.sunrise_slot + self.day_slots > slots_per_day {
                return Err(reject("daylight window exceeds the day"));
            }
        }
        for w in &self.overcast {
            if w.end_day < w.start_day {
                return Err(reject("overcast window ends before it starts"));
            }
            if !(0.0..=1.0).contains(&w.factor) {
                return Err(reject("overcast factor must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<EnergyTrace> {
        self.validate()?;
        let slots_per_day = 1440 / self.slot_minutes as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.jitter_seed);
        let mut values = Vec::with_capacity(self.slots as usize);
        for slot in 0..self.slots {
            let day = slot / slots_per_day;
            let slot_of_day = slot % slots_per_day;
            let mut v = match self.kind {
                HarvestShape::Constant => self.amp_wh,
                HarvestShape::Sine => {
                    if slot_of_day >= self.sunrise_slot
                        && slot_of_day < self.sunrise_slot + self.day_slots
                    {
                        let i = (slot_of_day - self.sunrise_slot) as f64;
                        self.amp_wh
                            * (std::f64::consts::PI * (i + 0.5) / self.day_slots as f64).sin()
                    } else {
                        0.0
                    }
                }
            };
            for w in &self.overcast {
                if day >= w.start_day && day <= w.end_day {
                    v *= w.factor;
                }
            }
            if self.jitter > 0.0 {
                let u: f64 = rng.random();
                v *= 1.0 + self.jitter * (2.0 * u - 1.0);
            }
            // Quantize so that writing the trace out and reading it back is
            // the identity.
            values.push((v.max(0.0) * 1e6).round() / 1e6);
        }
        Ok(EnergyTrace {
            slot_minutes: self.slot_minutes,
            values,
        })
    }
}

/// Distinct days covered by overcast windows, for reporting.
pub fn overcast_days(windows: &[OvercastWindow]) -> u64 {
    let mut days = BTreeSet::new();
    for w in windows {
        for d in w.start_day..=w.end_day {
            days.insert(d);
        }
    }
    days.len() as u64
}
