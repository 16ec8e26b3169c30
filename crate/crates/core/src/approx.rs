//! Continuous throughput model used for the acknowledgment window analysis.
//!
//! Symbol quantization, MPDU padding and the SERVICE/TAIL bits are
//! neglected and every MPDU carries the same (real-valued) number of MSDUs.
//! Under that model the optimal MPDU count has a closed form, which yields
//! the PHY rate above which a 256-MPDU window beats a 64-MPDU window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{y_max, MsduSlot};
use crate::params::{OverheadConfig, ProtocolConfig};

/// The smaller Block-Ack window the crossover analyses compare against.
pub const BASELINE_WINDOW: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousScenario {
    /// PHY rate, Mbps (bits/us).
    pub rate: f64,
    pub ber: f64,
    pub msdu_len: u64,
    /// Padded MSDU length Len, bytes.
    pub padded_len: u64,
    /// PPDU time limit T, us.
    pub t_limit: f64,
    /// Preamble P_r, us.
    pub preamble: f64,
    /// Per-MPDU overhead in bits.
    pub o_m_bits: f64,
    /// Bits that fit in the PPDU after the preamble: `rate * (t_limit - preamble)`.
    pub budget_bits: f64,
}

impl ContinuousScenario {
    pub fn new(
        rate: f64,
        ber: f64,
        msdu_len: u64,
        config: &ProtocolConfig,
        overhead: &OverheadConfig,
    ) -> Self {
        let slot = MsduSlot::new(msdu_len, overhead);
        Self::from_parts(
            rate,
            ber,
            slot,
            overhead.mpdu_overhead(),
            config.ppdu_time_limit,
            config.preamble,
        )
    }

    pub fn from_parts(
        rate: f64,
        ber: f64,
        slot: MsduSlot,
        o_m_bytes: u64,
        t_limit: f64,
        preamble: f64,
    ) -> Self {
        Self {
            rate,
            ber,
            msdu_len: slot.payload_len,
            padded_len: slot.padded_len,
            t_limit,
            preamble,
            o_m_bits: 8.0 * o_m_bytes as f64,
            budget_bits: rate * (t_limit - preamble),
        }
    }

    fn log_success_per_bit(&self) -> f64 {
        (-self.ber).ln_1p()
    }

    fn mpdu_bits(&self, y: f64) -> f64 {
        self.o_m_bits + 8.0 * y * self.padded_len as f64
    }
}

/// Continuous throughput of `x` MPDUs of `y` MSDUs each, Mbps.
pub fn throughput_approx(x: f64, y: f64, s: &ContinuousScenario, cycle_overhead: f64) -> f64 {
    let mpdu = s.mpdu_bits(y);
    let goodput = 8.0 * x * y * s.msdu_len as f64 * (mpdu * s.log_success_per_bit()).exp();
    goodput / (cycle_overhead + x * mpdu / s.rate)
}

/// MSDUs per MPDU that make `x` MPDUs fill the PPDU time limit exactly.
pub fn y_from_x(x: f64, s: &ContinuousScenario) -> Result<f64> {
    let room = s.budget_bits - x * s.o_m_bits;
    if !(x > 0.0) || room < 0.0 {
        return Err(Error::BudgetExceeded { x });
    }
    Ok(room / (x * 8.0 * s.padded_len as f64))
}

/// Continuous throughput along the time-saturating curve `y = y_from_x(x)`.
pub fn throughput_on_budget(x: f64, s: &ContinuousScenario, cycle_overhead: f64) -> Result<f64> {
    let y = y_from_x(x, s)?;
    // each MPDU is budget_bits / x long on this curve
    let success = (s.budget_bits / x * s.log_success_per_bit()).exp();
    let goodput = 8.0 * x * y * s.msdu_len as f64 * success;
    Ok(goodput / (cycle_overhead - s.preamble + s.t_limit))
}

/// Throughput-maximizing MPDU count of [`throughput_on_budget`].
///
/// Positive root of `a x^2 - a b D x + b D^2 = 0` with `a = o_m_bits`,
/// `b = ln(1 - BER)` and `D = budget_bits`.
pub fn x_opt_closed_form(s: &ContinuousScenario) -> Result<f64> {
    if s.ber == 0.0 {
        return Err(Error::ReliableChannel);
    }
    if !(s.ber > 0.0 && s.ber < 1.0) {
        return Err(Error::InvalidBer(s.ber));
    }
    let a = s.o_m_bits;
    let b = s.log_success_per_bit();
    let d = s.budget_bits;
    Ok(b * d / 2.0 * (1.0 - (1.0 - 4.0 / (a * b)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub ber: f64,
    /// X_opt / R, MPDUs per Mbps.
    pub x_opt_coefficient: f64,
    /// PHY rate at which X_opt equals the baseline window, Mbps.
    pub rate_threshold: f64,
    /// Smallest MCS whose rate reaches `rate_threshold`.
    pub mcs_crossover: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliableCrossover {
    pub msdu_len: u64,
    pub y_max: u32,
    /// Largest rate at which the baseline window of `y_max`-MSDU MPDUs still fills the PPDU.
    pub discrete_mbps: f64,
    /// Same with `y_max` unrounded, i.e. maximum-size MPDUs.
    pub continuous_mbps: f64,
    /// Smallest MCS whose rate exceeds `discrete_mbps`.
    pub mcs_crossover: Option<usize>,
}

/// Crossover for a reliable channel, where the best MPDU holds `y_max` MSDUs.
pub fn crossover_rate_reliable(
    msdu_len: u64,
    overhead: &OverheadConfig,
    config: &ProtocolConfig,
) -> Result<ReliableCrossover> {
    let slot = MsduSlot::new(msdu_len, overhead);
    let y_max = y_max(&slot, overhead, config)?;
    let airtime = config.ppdu_time_limit - config.preamble;
    let window_bits = 8.0 * BASELINE_WINDOW as f64;
    let mpdu = (overhead.mpdu_overhead() + y_max as u64 * slot.padded_len) as f64;
    let discrete = window_bits * mpdu / airtime;
    let continuous = window_bits * config.max_mpdu_bytes as f64 / airtime;
    Ok(ReliableCrossover {
        msdu_len,
        y_max,
        discrete_mbps: discrete,
        continuous_mbps: continuous,
        mcs_crossover: config.mcs_rates.iter().position(|&r| r > discrete),
    })
}

/// Crossover for a lossy channel, from the closed-form optimum.
pub fn crossover_mcs(
    ber: f64,
    overhead: &OverheadConfig,
    config: &ProtocolConfig,
) -> Result<CrossoverReport> {
    // X_opt is linear in R and does not depend on the MSDU length.
    let unit = ContinuousScenario::new(1.0, ber, 1500, config, overhead);
    let coefficient = x_opt_closed_form(&unit)?;
    let threshold = BASELINE_WINDOW as f64 / coefficient;
    Ok(CrossoverReport {
        ber,
        x_opt_coefficient: coefficient,
        rate_threshold: threshold,
        mcs_crossover: config.mcs_rates.iter().position(|&r| r >= threshold),
    })
}
