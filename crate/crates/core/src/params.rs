//! Protocol, channel and overhead constants.
//!
//! Defaults describe a 160 MHz channel with 4 spatial streams and a 0.8 us
//! guard interval. Every value can be overridden through [`ModelConfig`],
//! which reads a flat TOML document:
//!
//! ```toml
//! aifs = 43.0
//! backoff = 67.5
//! ax256.back_duration = 40.0
//! ac64.ppdu_time_limit = 5484.0
//! ```
//!
//! Top-level keys are [`OverheadConfig`] fields. Keys prefixed with `ac64.`,
//! `ax64.` or `ax256.` override the [`ProtocolConfig`] of that flavor.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MsduSlot;

/// 802.11ac PHY rates (Mbps) for MCS0..MCS9, 160 MHz, 4 SS, 0.8 us GI.
pub const AC_RATES_MBPS: [f64; 10] = [
    234.0, 468.0, 702.0, 936.0, 1404.0, 1872.0, 2106.0, 2340.0, 2808.0, 3120.0,
];

/// 802.11ax PHY rates (Mbps) for MCS0..MCS11, 160 MHz, 4 SS, 0.8 us GI.
pub const AX_RATES_MBPS: [f64; 12] = [
    288.0, 576.0, 864.0, 1152.0, 1729.0, 2305.0, 2594.0, 2882.0, 3458.0, 3843.0, 4323.0, 4803.0,
];

const GUARD_INTERVAL_US: f64 = 0.8;
const SPATIAL_STREAMS: u32 = 4;
const HE_PREAMBLE_US: f64 = 64.8;
/// HE preamble minus 4 spatial streams x (7.2 - 4.0) us of LTF.
const VHT_PREAMBLE_US: f64 = 52.0;
const HE_SYMBOL_US: f64 = 13.6;
const VHT_SYMBOL_US: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolFlavor {
    /// 802.11ac, up to 64 MPDUs per A-MPDU.
    Ac64,
    /// 802.11ax, up to 64 MPDUs per A-MPDU.
    Ax64,
    /// 802.11ax, up to 256 MPDUs per A-MPDU.
    Ax256,
}

impl ProtocolFlavor {
    pub const ALL: [ProtocolFlavor; 3] = [Self::Ac64, Self::Ax64, Self::Ax256];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ac64 => "ac64",
            Self::Ax64 => "ax64",
            Self::Ax256 => "ax256",
        }
    }

    pub fn is_ax(self) -> bool {
        !matches!(self, Self::Ac64)
    }
}

impl fmt::Display for ProtocolFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ac64" | "ac" | "11ac" | "11ac/64" => Ok(Self::Ac64),
            "ax64" | "11ax/64" => Ok(Self::Ax64),
            "ax256" | "11ax/256" => Ok(Self::Ax256),
            other => Err(Error::Config(format!("unknown protocol flavor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub flavor: ProtocolFlavor,
    /// OFDM symbol duration including the guard interval, us.
    pub symbol_time: f64,
    /// PHY preamble duration, us.
    pub preamble: f64,
    pub spatial_streams: u32,
    pub guard_interval: f64,
    pub max_mpdus: u32,
    pub max_mpdu_bytes: u64,
    /// A-MPDU size cap; `None` means unlimited.
    pub max_psdu_bytes: Option<u64>,
    /// Limit on preamble + PSDU airtime, us.
    pub ppdu_time_limit: f64,
    /// Block-Ack frame duration for the full window, us.
    pub back_duration: f64,
    /// Shorter Block-Ack answering small A-MPDUs.
    #[serde(default)]
    pub short_back: Option<ShortBlockAck>,
    /// PHY rate in Mbps, indexed by MCS.
    pub mcs_rates: Vec<f64>,
}

/// A Block-Ack with a smaller bitmap, used when the A-MPDU carries at most
/// `max_mpdus` MPDUs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortBlockAck {
    pub max_mpdus: u32,
    /// us.
    pub duration: f64,
}

impl ProtocolConfig {
    /// Block-Ack duration answering an A-MPDU of `x` MPDUs.
    pub fn back_duration_for(&self, x: u32) -> f64 {
        match self.short_back {
            Some(short) if x <= short.max_mpdus => short.duration,
            _ => self.back_duration,
        }
    }
}

/// Returns the default configuration of `flavor`.
pub fn default_config(flavor: ProtocolFlavor) -> ProtocolConfig {
    let (symbol_time, preamble, max_mpdus, max_psdu_bytes, back_duration, mcs_rates) = match flavor {
        ProtocolFlavor::Ac64 => (
            VHT_SYMBOL_US,
            VHT_PREAMBLE_US,
            64,
            Some(1_048_575),
            31.0,
            AC_RATES_MBPS.to_vec(),
        ),
        ProtocolFlavor::Ax64 => (
            HE_SYMBOL_US,
            HE_PREAMBLE_US,
            64,
            None,
            31.0,
            AX_RATES_MBPS.to_vec(),
        ),
        ProtocolFlavor::Ax256 => (
            HE_SYMBOL_US,
            HE_PREAMBLE_US,
            256,
            None,
            39.0,
            AX_RATES_MBPS.to_vec(),
        ),
    };
    ProtocolConfig {
        flavor,
        symbol_time,
        preamble,
        spatial_streams: SPATIAL_STREAMS,
        guard_interval: GUARD_INTERVAL_US,
        max_mpdus,
        max_mpdu_bytes: 11_454,
        max_psdu_bytes,
        ppdu_time_limit: 5400.0,
        back_duration,
        // 32-byte compressed BAck (64-bit bitmap) when the A-MPDU fits in it
        short_back: (flavor == ProtocolFlavor::Ax256).then_some(ShortBlockAck {
            max_mpdus: 64,
            duration: 31.0,
        }),
        mcs_rates,
    }
}

/// PHY rate of `mcs` in Mbps, which is also bits per microsecond.
pub fn phy_rate(config: &ProtocolConfig, mcs: usize) -> Result<f64> {
    config
        .mcs_rates
        .get(mcs)
        .copied()
        .ok_or(Error::UnsupportedMcs {
            flavor: config.flavor,
            mcs,
            max: config.mcs_rates.len().saturating_sub(1),
        })
}

/// Per-cycle time overhead O_P = AIFS + BO + preamble + SIFS + BAck, us,
/// with the full-window Block-Ack.
pub fn cycle_overhead(config: &ProtocolConfig, overhead: &OverheadConfig) -> f64 {
    overhead.aifs + overhead.backoff + config.preamble + overhead.sifs + config.back_duration
}

/// O_P of a cycle whose A-MPDU carries `x` MPDUs.
pub fn cycle_overhead_for(config: &ProtocolConfig, overhead: &OverheadConfig, x: u32) -> f64 {
    overhead.aifs + overhead.backoff + config.preamble + overhead.sifs + config.back_duration_for(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadConfig {
    pub aifs: f64,
    /// Mean backoff, us.
    pub backoff: f64,
    pub sifs: f64,
    pub mpdu_delimiter: u64,
    pub mac_header: u64,
    pub fcs: u64,
    pub msdu_subheader: u64,
    pub service_tail_bits: u64,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        Self {
            aifs: 34.0,
            // 7.5 slots of 9 us
            backoff: 67.5,
            sifs: 16.0,
            mpdu_delimiter: 4,
            mac_header: 28,
            fcs: 4,
            msdu_subheader: 14,
            service_tail_bits: 22,
        }
    }
}

impl OverheadConfig {
    /// Per-MPDU byte overhead O_M = delimiter + MAC header + FCS.
    pub fn mpdu_overhead(&self) -> u64 {
        self.mpdu_delimiter + self.mac_header + self.fcs
    }

    /// Every duration field set to zero, byte overheads kept.
    pub fn zero_durations(&self) -> Self {
        Self {
            aifs: 0.0,
            backoff: 0.0,
            sifs: 0.0,
            ..self.clone()
        }
    }
}

/// One evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub flavor: ProtocolFlavor,
    pub mcs: usize,
    /// Bit error probability.
    pub ber: f64,
    /// MSDU payload length L_DATA, bytes.
    pub msdu_len: u64,
}

impl Scenario {
    pub fn new(
        flavor: ProtocolFlavor,
        mcs: usize,
        ber: f64,
        msdu_len: u64,
        config: &ProtocolConfig,
        overhead: &OverheadConfig,
    ) -> Result<Self> {
        let scenario = Self {
            flavor,
            mcs,
            ber,
            msdu_len,
        };
        scenario.validate(config, overhead)?;
        Ok(scenario)
    }

    pub fn validate(&self, config: &ProtocolConfig, overhead: &OverheadConfig) -> Result<()> {
        if self.flavor != config.flavor {
            return Err(Error::Config(format!(
                "scenario flavor {} does not match config flavor {}",
                self.flavor, config.flavor
            )));
        }
        phy_rate(config, self.mcs)?;
        if !(0.0..1.0).contains(&self.ber) {
            return Err(Error::InvalidBer(self.ber));
        }
        if self.msdu_len == 0 {
            return Err(Error::EmptyMsdu);
        }
        crate::geometry::y_max(&self.slot(overhead), overhead, config)?;
        Ok(())
    }

    pub fn slot(&self, overhead: &OverheadConfig) -> MsduSlot {
        MsduSlot::new(self.msdu_len, overhead)
    }

    pub fn rate(&self, config: &ProtocolConfig) -> Result<f64> {
        phy_rate(config, self.mcs)
    }
}

/// Overhead constants plus one protocol config per flavor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub overhead: OverheadConfig,
    pub ac64: ProtocolConfig,
    pub ax64: ProtocolConfig,
    pub ax256: ProtocolConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            overhead: OverheadConfig::default(),
            ac64: default_config(ProtocolFlavor::Ac64),
            ax64: default_config(ProtocolFlavor::Ax64),
            ax256: default_config(ProtocolFlavor::Ax256),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideFile {
    aifs: Option<f64>,
    backoff: Option<f64>,
    sifs: Option<f64>,
    mpdu_delimiter: Option<u64>,
    mac_header: Option<u64>,
    fcs: Option<u64>,
    msdu_subheader: Option<u64>,
    service_tail_bits: Option<u64>,
    ac64: Option<ProtocolOverrides>,
    ax64: Option<ProtocolOverrides>,
    ax256: Option<ProtocolOverrides>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolOverrides {
    symbol_time: Option<f64>,
    preamble: Option<f64>,
    spatial_streams: Option<u32>,
    guard_interval: Option<f64>,
    max_mpdus: Option<u32>,
    max_mpdu_bytes: Option<u64>,
    /// Zero removes the cap.
    max_psdu_bytes: Option<u64>,
    ppdu_time_limit: Option<f64>,
    back_duration: Option<f64>,
    /// Zero disables the short Block-Ack.
    short_back_max_mpdus: Option<u32>,
    short_back_duration: Option<f64>,
    mcs_rates: Option<Vec<f64>>,
}

macro_rules! apply {
    ($src:expr, $dst:expr, $($field:ident),+) => {
        $( if let Some(v) = $src.$field { $dst.$field = v; } )+
    };
}

impl ProtocolOverrides {
    fn apply(self, config: &mut ProtocolConfig) {
        if let Some(cap) = self.max_psdu_bytes {
            config.max_psdu_bytes = (cap > 0).then_some(cap);
        }
        match (self.short_back_max_mpdus, self.short_back_duration, config.short_back) {
            (Some(0), _, _) => config.short_back = None,
            (Some(max_mpdus), duration, current) => {
                config.short_back = Some(ShortBlockAck {
                    max_mpdus,
                    duration: duration
                        .or(current.map(|c| c.duration))
                        .unwrap_or(config.back_duration),
                })
            }
            (None, Some(duration), Some(current)) => {
                config.short_back = Some(ShortBlockAck { duration, ..current })
            }
            (None, Some(_), None) | (None, None, _) => {}
        }
        apply!(
            self,
            config,
            symbol_time,
            preamble,
            spatial_streams,
            guard_interval,
            max_mpdus,
            max_mpdu_bytes,
            ppdu_time_limit,
            back_duration,
            mcs_rates
        );
    }
}

impl ModelConfig {
    pub fn protocol(&self, flavor: ProtocolFlavor) -> &ProtocolConfig {
        match flavor {
            ProtocolFlavor::Ac64 => &self.ac64,
            ProtocolFlavor::Ax64 => &self.ax64,
            ProtocolFlavor::Ax256 => &self.ax256,
        }
    }

    pub fn protocol_mut(&mut self, flavor: ProtocolFlavor) -> &mut ProtocolConfig {
        match flavor {
            ProtocolFlavor::Ac64 => &mut self.ac64,
            ProtocolFlavor::Ax64 => &mut self.ax64,
            ProtocolFlavor::Ax256 => &mut self.ax256,
        }
    }

    /// Applies a TOML override document on top of `self`.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        let file: OverrideFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let o = &mut self.overhead;
        apply!(
            file,
            o,
            aifs,
            backoff,
            sifs,
            mpdu_delimiter,
            mac_header,
            fcs,
            msdu_subheader,
            service_tail_bits
        );
        for (flavor, ov) in [
            (ProtocolFlavor::Ac64, file.ac64),
            (ProtocolFlavor::Ax64, file.ax64),
            (ProtocolFlavor::Ax256, file.ax256),
        ] {
            if let Some(ov) = ov {
                ov.apply(self.protocol_mut(flavor));
            }
        }
        self.check()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_overrides(text)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn check(&self) -> Result<()> {
        let o = &self.overhead;
        for (name, v) in [("aifs", o.aifs), ("backoff", o.backoff), ("sifs", o.sifs)] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for flavor in ProtocolFlavor::ALL {
            let c = self.protocol(flavor);
            let name = flavor.name();
            if !(c.symbol_time > 0.0) {
                return Err(Error::Config(format!("{name}.symbol_time must be > 0")));
            }
            if !(c.preamble >= 0.0 && c.back_duration >= 0.0 && c.ppdu_time_limit > 0.0) {
                return Err(Error::Config(format!("{name}: durations must be >= 0")));
            }
            if c.short_back.is_some_and(|b| !(b.duration >= 0.0)) {
                return Err(Error::Config(format!("{name}.short_back_duration must be >= 0")));
            }
            if c.max_mpdus == 0 {
                return Err(Error::Config(format!("{name}.max_mpdus must be >= 1")));
            }
            if c.mcs_rates.is_empty()
                || c.mcs_rates[0] <= 0.0
                || c.mcs_rates.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::Config(format!(
                    "{name}.mcs_rates must be positive and strictly increasing"
                )));
            }
        }
        Ok(())
    }
}
