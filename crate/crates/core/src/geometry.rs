//! Frame sizing and airtime arithmetic.
//!
//! MSDUs are padded together with their subheader to a multiple of 4 bytes,
//! and every MPDU is padded to a multiple of 4 bytes. A transmission always
//! spans an integral number of OFDM symbols and carries the SERVICE and
//! TAIL bits on top of the PSDU.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{cycle_overhead_for, phy_rate, OverheadConfig, ProtocolConfig, Scenario};

const TIME_EPS_US: f64 = 1e-9;

fn round_up_4(n: u64) -> u64 {
    n.div_ceil(4) * 4
}

/// An MSDU payload and its padded on-air size inside an MPDU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsduSlot {
    pub payload_len: u64,
    /// `4 * ceil((payload_len + subheader) / 4)`.
    pub padded_len: u64,
}

impl MsduSlot {
    pub fn new(payload_len: u64, overhead: &OverheadConfig) -> Self {
        Self {
            payload_len,
            padded_len: round_up_4(payload_len + overhead.msdu_subheader),
        }
    }
}

/// `x` MPDUs. The first `n_extra` carry `y_base + 1` MSDUs, the rest `y_base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggregationPlan {
    pub x: u32,
    pub y_base: u32,
    pub n_extra: u32,
}

impl AggregationPlan {
    pub fn new(x: u32, y_base: u32, n_extra: u32) -> Result<Self> {
        if x == 0 {
            return Err(Error::InvalidPlan("at least one MPDU is required".into()));
        }
        if n_extra >= x {
            return Err(Error::InvalidPlan(format!(
                "n_extra ({n_extra}) must be smaller than x ({x})"
            )));
        }
        if y_base == 0 && n_extra == 0 {
            return Err(Error::InvalidPlan("plan carries no MSDU".into()));
        }
        Ok(Self { x, y_base, n_extra })
    }

    /// Same MSDU count in every MPDU.
    pub fn uniform(x: u32, y: u32) -> Result<Self> {
        Self::new(x, y, 0)
    }

    pub fn total_msdus(&self) -> u64 {
        self.x as u64 * self.y_base as u64 + self.n_extra as u64
    }

    /// MSDU count of the fullest MPDU.
    pub fn largest_y(&self) -> u32 {
        self.y_base + u32::from(self.n_extra > 0)
    }

    /// `(msdus_per_mpdu, mpdu_count)` groups, skipping empty groups.
    pub fn groups(&self) -> impl Iterator<Item = (u32, u32)> {
        [
            (self.y_base + 1, self.n_extra),
            (self.y_base, self.x - self.n_extra),
        ]
        .into_iter()
        .filter(|&(_, n)| n > 0)
    }

    /// Per-MPDU MSDU counts, in MPDU order.
    pub fn allocation(&self) -> Vec<u32> {
        self.groups()
            .flat_map(|(y, n)| std::iter::repeat_n(y, n as usize))
            .collect()
    }
}

impl fmt::Display for AggregationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x={} y={} (+1 in {})", self.x, self.y_base, self.n_extra)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirtimeBreakdown {
    /// Sum of all MPDU sizes in bits.
    pub psdu_bits: u64,
    /// OFDM symbols on air.
    pub symbols: u64,
    /// PSDU airtime, us. Equals `symbols * symbol_time` unless rounding is disabled.
    pub data_time: f64,
    /// Preamble plus data, us.
    pub ppdu_time: f64,
    /// O_P plus data, us. The preamble is counted once, inside O_P.
    pub cycle_time: f64,
}

/// How the PSDU airtime is turned into a duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SymbolRounding {
    /// Whole OFDM symbols, as transmitted.
    #[default]
    Ceil,
    /// `(bits + service_tail) / rate`, no symbol quantization.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    MaxMpdus,
    MaxMpduBytes,
    MaxPsduBytes,
    PpduTime,
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limit::MaxMpdus => "max_mpdus",
            Limit::MaxMpduBytes => "max_mpdu_bytes",
            Limit::MaxPsduBytes => "max_psdu_bytes",
            Limit::PpduTime => "ppdu_time_limit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Exceeds(Limit),
}

impl Feasibility {
    pub fn is_ok(self) -> bool {
        self == Feasibility::Feasible
    }
}

/// MPDU size in bits: `8 * 4 * ceil((O_M + y * Len) / 4)`.
pub fn mpdu_bits(y: u32, msdu: &MsduSlot, overhead: &OverheadConfig) -> u64 {
    8 * round_up_4(overhead.mpdu_overhead() + y as u64 * msdu.padded_len)
}

/// Largest number of MSDUs that fit in one MPDU.
pub fn y_max(msdu: &MsduSlot, overhead: &OverheadConfig, config: &ProtocolConfig) -> Result<u32> {
    let available = config.max_mpdu_bytes.saturating_sub(overhead.mpdu_overhead());
    if msdu.padded_len > available || msdu.padded_len == 0 {
        return Err(Error::MsduTooLarge {
            padded_len: msdu.padded_len,
            available,
        });
    }
    Ok(u32::try_from(available / msdu.padded_len).unwrap_or(u32::MAX))
}

pub fn airtime(
    plan: &AggregationPlan,
    scenario: &Scenario,
    config: &ProtocolConfig,
    overhead: &OverheadConfig,
) -> Result<AirtimeBreakdown> {
    Ok(Link::new(scenario, config, overhead)?.airtime(plan, SymbolRounding::Ceil))
}

pub fn is_feasible(
    plan: &AggregationPlan,
    scenario: &Scenario,
    config: &ProtocolConfig,
    overhead: &OverheadConfig,
) -> Result<Feasibility> {
    Ok(Link::new(scenario, config, overhead)?.feasibility(plan))
}

/// A scenario resolved against its configuration: rate, MSDU slot and O_P
/// looked up once so per-plan arithmetic is infallible.
#[derive(Debug, Clone)]
pub struct Link<'a> {
    pub scenario: Scenario,
    pub config: &'a ProtocolConfig,
    pub overhead: &'a OverheadConfig,
    pub rate: f64,
    pub slot: MsduSlot,
    pub y_max: u32,
    bits_per_symbol: f64,
}

impl<'a> Link<'a> {
    pub fn new(
        scenario: &Scenario,
        config: &'a ProtocolConfig,
        overhead: &'a OverheadConfig,
    ) -> Result<Self> {
        scenario.validate(config, overhead)?;
        let rate = phy_rate(config, scenario.mcs)?;
        let slot = scenario.slot(overhead);
        Ok(Self {
            scenario: *scenario,
            config,
            overhead,
            rate,
            slot,
            y_max: y_max(&slot, overhead, config)?,
            bits_per_symbol: config.symbol_time * rate,
        })
    }

    pub fn mpdu_bits(&self, y: u32) -> u64 {
        mpdu_bits(y, &self.slot, self.overhead)
    }

    /// O_P of a cycle carrying `x` MPDUs.
    pub fn cycle_overhead(&self, x: u32) -> f64 {
        cycle_overhead_for(self.config, self.overhead, x)
    }

    pub fn psdu_bits(&self, plan: &AggregationPlan) -> u64 {
        plan.groups()
            .map(|(y, n)| n as u64 * self.mpdu_bits(y))
            .sum()
    }

    pub fn symbols(&self, psdu_bits: u64) -> u64 {
        let bits = (psdu_bits + self.overhead.service_tail_bits) as f64;
        (bits / self.bits_per_symbol).ceil() as u64
    }

    /// Airtime of `x` MPDUs totalling `psdu_bits`.
    pub fn airtime_for_bits(&self, x: u32, psdu_bits: u64, rounding: SymbolRounding) -> AirtimeBreakdown {
        let symbols = self.symbols(psdu_bits);
        let data_time = match rounding {
            SymbolRounding::Ceil => symbols as f64 * self.config.symbol_time,
            SymbolRounding::Exact => {
                (psdu_bits + self.overhead.service_tail_bits) as f64 / self.rate
            }
        };
        AirtimeBreakdown {
            psdu_bits,
            symbols,
            data_time,
            ppdu_time: self.config.preamble + data_time,
            cycle_time: self.cycle_overhead(x) + data_time,
        }
    }

    pub fn airtime(&self, plan: &AggregationPlan, rounding: SymbolRounding) -> AirtimeBreakdown {
        self.airtime_for_bits(plan.x, self.psdu_bits(plan), rounding)
    }

    /// Whether `psdu_bits` fits the PPDU time limit once quantized to symbols.
    pub fn fits_time_limit(&self, psdu_bits: u64) -> bool {
        let ppdu = self.config.preamble + self.symbols(psdu_bits) as f64 * self.config.symbol_time;
        ppdu <= self.config.ppdu_time_limit + TIME_EPS_US
    }

    /// Checks the limits in order: MPDU count, MPDU size, PSDU size, PPDU time.
    pub fn feasibility(&self, plan: &AggregationPlan) -> Feasibility {
        if plan.x > self.config.max_mpdus {
            return Feasibility::Exceeds(Limit::MaxMpdus);
        }
        if self.mpdu_bits(plan.largest_y()) / 8 > self.config.max_mpdu_bytes {
            return Feasibility::Exceeds(Limit::MaxMpduBytes);
        }
        let bits = self.psdu_bits(plan);
        if let Some(cap) = self.config.max_psdu_bytes {
            if bits / 8 > cap {
                return Feasibility::Exceeds(Limit::MaxPsduBytes);
            }
        }
        if !self.fits_time_limit(bits) {
            return Feasibility::Exceeds(Limit::PpduTime);
        }
        Feasibility::Feasible
    }
}
