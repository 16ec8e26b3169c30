//! Exact throughput of one transmission cycle and the search for the
//! throughput-maximizing aggregation plan.
//!
//! Throughput is the expected number of delivered MSDU payload bits per
//! cycle divided by the cycle duration, in bits/us (= Mbps). An MPDU of
//! `C` bits survives the channel with probability `(1 - BER)^C`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AggregationPlan, AirtimeBreakdown, Feasibility, Link, SymbolRounding};
use crate::params::{OverheadConfig, ProtocolConfig, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    /// Mbps.
    pub throughput: f64,
    pub plan: AggregationPlan,
    pub airtime: AirtimeBreakdown,
    /// Expected MSDU payload bits delivered per cycle.
    pub goodput_bits_expected: f64,
}

/// Probability that `bits` consecutive bits all arrive intact.
pub fn success_probability(ber: f64, bits: u64) -> f64 {
    if ber == 0.0 {
        1.0
    } else if bits > 1_000_000 {
        (bits as f64 * (-ber).ln_1p()).exp()
    } else {
        (1.0 - ber).powf(bits as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOptions {
    pub rounding: SymbolRounding,
}

/// A [`Link`] with per-MSDU-count MPDU sizes and success probabilities
/// tabulated for `y` in `0..=y_max + 1`.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub link: Link<'a>,
    bits: Vec<u64>,
    success: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        scenario: &Scenario,
        config: &'a ProtocolConfig,
        overhead: &'a OverheadConfig,
    ) -> Result<Self> {
        Ok(Self::from_link(Link::new(scenario, config, overhead)?))
    }

    pub fn from_link(link: Link<'a>) -> Self {
        let bits: Vec<u64> = (0..=link.y_max + 1).map(|y| link.mpdu_bits(y)).collect();
        let success = bits
            .iter()
            .map(|&c| success_probability(link.scenario.ber, c))
            .collect();
        Self {
            link,
            bits,
            success,
        }
    }

    fn bits_of(&self, y: u32) -> u64 {
        self.bits
            .get(y as usize)
            .copied()
            .unwrap_or_else(|| self.link.mpdu_bits(y))
    }

    fn success_of(&self, y: u32) -> f64 {
        self.success
            .get(y as usize)
            .copied()
            .unwrap_or_else(|| success_probability(self.link.scenario.ber, self.link.mpdu_bits(y)))
    }

    /// Expected delivered payload bits of one MPDU group.
    fn group_goodput(&self, y: u32, count: u32) -> f64 {
        8.0 * self.link.scenario.msdu_len as f64 * count as f64 * y as f64 * self.success_of(y)
    }

    fn goodput(&self, plan: &AggregationPlan) -> f64 {
        plan.groups().map(|(y, n)| self.group_goodput(y, n)).sum()
    }

    fn psdu_bits(&self, plan: &AggregationPlan) -> u64 {
        plan.groups().map(|(y, n)| n as u64 * self.bits_of(y)).sum()
    }

    /// Evaluates a plan without checking its feasibility.
    pub fn evaluate(&self, plan: &AggregationPlan, rounding: SymbolRounding) -> ThroughputResult {
        let airtime = self.link.airtime_for_bits(plan.x, self.psdu_bits(plan), rounding);
        let goodput = self.goodput(plan);
        ThroughputResult {
            throughput: goodput / airtime.cycle_time,
            plan: *plan,
            airtime,
            goodput_bits_expected: goodput,
        }
    }

    pub fn feasibility(&self, plan: &AggregationPlan) -> Feasibility {
        self.link.feasibility(plan)
    }

    fn feasible(&self, x: u32, y: u32, n: u32) -> bool {
        AggregationPlan::new(x, y, n).is_ok_and(|p| self.feasibility(&p).is_ok())
    }

    /// Largest `n_extra < x` keeping `(x, y, n_extra)` feasible, given
    /// `(x, y, 0)` is feasible.
    fn max_extra(&self, x: u32, y: u32) -> u32 {
        if y >= self.link.y_max {
            return 0;
        }
        let (mut lo, mut hi) = (0, x - 1);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if self.feasible(x, y, mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Candidate `n_extra` values for `(x, y)` that can hold the maximum
    /// over `0..=n_max`, in increasing order.
    ///
    /// The numerator is affine in `n_extra` and the denominator is a
    /// nondecreasing step function, so when an extra MSDU raises the
    /// expected goodput only the last `n_extra` of each symbol count can
    /// win. Otherwise `n_extra = 0` dominates.
    fn extra_candidates(&self, x: u32, y: u32, n_max: u32, rounding: SymbolRounding) -> Vec<u32> {
        if n_max == 0 || self.group_goodput(y + 1, 1) <= self.group_goodput(y, 1) {
            return vec![0];
        }
        if rounding == SymbolRounding::Exact {
            // ratio of two affine functions is monotone in n_extra
            return vec![0, n_max];
        }
        let base = x as u64 * self.bits_of(y);
        let step = self.bits_of(y + 1) - self.bits_of(y);
        let symbols = |n: u32| self.link.symbols(base + n as u64 * step);
        let bits_per_symbol = self.link.config.symbol_time * self.link.rate;
        let tail = self.link.overhead.service_tail_bits as f64;

        let mut out = Vec::new();
        let mut n = 0;
        while n <= n_max {
            let k = symbols(n);
            let room = k as f64 * bits_per_symbol - tail - base as f64;
            let guess = (room / step as f64).floor();
            let mut end = if guess.is_finite() && guess >= 0.0 {
                (guess as u64).clamp(n as u64, n_max as u64) as u32
            } else {
                n
            };
            while end > n && symbols(end) > k {
                end -= 1;
            }
            while end < n_max && symbols(end + 1) == k {
                end += 1;
            }
            out.push(end);
            n = end + 1;
        }
        out
    }

    /// Exhaustive search over `x`, `y_base` and `n_extra`.
    ///
    /// Ties go to the smaller `x`, then to fewer MSDUs.
    pub fn optimize(&self, options: &SearchOptions) -> Result<ThroughputResult> {
        let mut best: Option<ThroughputResult> = None;
        for x in 1..=self.link.config.max_mpdus {
            if !self.feasible(x, 1, 0) {
                break;
            }
            for y in 1..=self.link.y_max {
                if !self.feasible(x, y, 0) {
                    break;
                }
                let n_max = self.max_extra(x, y);
                for n in self.extra_candidates(x, y, n_max, options.rounding) {
                    let plan = AggregationPlan { x, y_base: y, n_extra: n };
                    let r = self.evaluate(&plan, options.rounding);
                    if best.is_none_or(|b| r.throughput > b.throughput) {
                        best = Some(r);
                    }
                }
            }
        }
        best.ok_or(Error::NoFeasiblePlan)
    }
}

/// Exact cycle throughput of a feasible plan.
pub fn throughput_exact(
    plan: &AggregationPlan,
    scenario: &Scenario,
    config: &ProtocolConfig,
    overhead: &OverheadConfig,
) -> Result<ThroughputResult> {
    throughput_exact_with(plan, scenario, config, overhead, SymbolRounding::Ceil)
}

pub fn throughput_exact_with(
    plan: &AggregationPlan,
    scenario: &Scenario,
    config: &ProtocolConfig,
    overhead: &OverheadConfig,
    rounding: SymbolRounding,
) -> Result<ThroughputResult> {
    let eval = Evaluator::new(scenario, config, overhead)?;
    match eval.feasibility(plan) {
        Feasibility::Feasible => Ok(eval.evaluate(plan, rounding)),
        Feasibility::Exceeds(limit) => Err(Error::Infeasible(limit)),
    }
}

/// Throughput-maximizing plan for `scenario`.
pub fn optimize_exact(
    scenario: &Scenario,
    config: &ProtocolConfig,
    overhead: &OverheadConfig,
) -> Result<ThroughputResult> {
    optimize_exact_with(scenario, config, overhead, &SearchOptions::default())
}

pub fn optimize_exact_with(
    scenario: &Scenario,
    config: &ProtocolConfig,
    overhead: &OverheadConfig,
    options: &SearchOptions,
) -> Result<ThroughputResult> {
    Evaluator::new(scenario, config, overhead)?.optimize(options)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    /// Delivered payload bits over simulated airtime, Mbps.
    pub throughput: f64,
    /// Standard error of `throughput`, Mbps.
    pub std_error: f64,
    pub cycles: u64,
}

/// Simulates `cycles` transmission cycles of `plan`.
///
/// Every MPDU is lost independently with its own failure probability; the
/// survivors of each equal-size MPDU group are drawn as one binomial count.
/// Deterministic for a given `seed`.
pub fn monte_carlo_throughput(
    plan: &AggregationPlan,
    scenario: &Scenario,
    config: &ProtocolConfig,
    overhead: &OverheadConfig,
    cycles: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if cycles == 0 {
        return Err(Error::Config("at least one cycle is required".into()));
    }
    let link = Link::new(scenario, config, overhead)?;
    let cycle_time = link.airtime(plan, SymbolRounding::Ceil).cycle_time;
    let payload_bits = 8.0 * scenario.msdu_len as f64;

    let groups: Vec<(f64, u64, Option<Binomial>)> = plan
        .groups()
        .map(|(y, n)| {
            let p = success_probability(scenario.ber, link.mpdu_bits(y));
            let dist = (p < 1.0)
                .then(|| Binomial::new(n as u64, p).map_err(|e| Error::Config(e.to_string())))
                .transpose()?;
            Ok((y as f64 * payload_bits, n as u64, dist))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 1..=cycles {
        let delivered: f64 = groups
            .iter()
            .map(|(bits, n, dist)| {
                let ok = dist.as_ref().map_or(*n, |d| d.sample(&mut rng));
                ok as f64 * bits
            })
            .sum();
        let delta = delivered - mean;
        mean += delta / i as f64;
        m2 += delta * (delivered - mean);
    }
    let variance = if cycles > 1 { m2 / (cycles - 1) as f64 } else { 0.0 };
    Ok(MonteCarloEstimate {
        throughput: mean / cycle_time,
        std_error: (variance / cycles as f64).sqrt() / cycle_time,
        cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Limit;
    use crate::params::{default_config, ProtocolFlavor};
    use proptest::prelude::*;
    use rand::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn scenario(flavor: ProtocolFlavor, mcs: usize, ber: f64, msdu_len: u64) -> Scenario {
        Scenario {
            flavor,
            mcs,
            ber,
            msdu_len,
        }
    }

    #[test]
    fn reliable_ac_mcs9_full_plan() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ac64);
        let s = scenario(ProtocolFlavor::Ac64, 9, 0.0, 1500);
        let r = throughput_exact(&AggregationPlan::uniform(64, 7).unwrap(), &s, &c, &o).unwrap();
        let expected = 8.0 * 64.0 * 7.0 * 1500.0 / (200.5 + 1748.0);
        assert!(rel(r.throughput, expected) < 1e-9);
        assert!((r.throughput - 2759.05).abs() < 0.1);
        assert_eq!(r.goodput_bits_expected, 8.0 * 64.0 * 7.0 * 1500.0);
    }

    #[test]
    fn lossy_single_msdu_numerator() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ac64);
        let s = scenario(ProtocolFlavor::Ac64, 0, 1e-5, 64);
        let r = throughput_exact(&AggregationPlan::uniform(1, 1).unwrap(), &s, &c, &o).unwrap();
        let direct = 512.0 * (1.0f64 - 1e-5).powi(928);
        assert!(rel(r.goodput_bits_expected, direct) < 1e-9);
        assert!((r.goodput_bits_expected - 507.27).abs() < 0.01);
    }

    #[test]
    fn infeasible_plan_is_rejected() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ac64);
        let s = scenario(ProtocolFlavor::Ac64, 9, 0.0, 1500);
        assert_eq!(
            throughput_exact(&AggregationPlan::uniform(65, 1).unwrap(), &s, &c, &o),
            Err(Error::Infeasible(Limit::MaxMpdus))
        );
    }

    #[test]
    fn success_probability_branches_agree() {
        let ber = 1e-7;
        let a = (1.0f64 - ber).powf(2_000_000.0);
        let b = success_probability(ber, 2_000_000);
        assert!(rel(a, b) < 1e-8);
        assert_eq!(success_probability(0.0, 10_000_000), 1.0);
    }

    #[test]
    fn optimum_ax256_mcs11_reliable() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ax256);
        let s = scenario(ProtocolFlavor::Ax256, 11, 0.0, 1500);
        let r = optimize_exact(&s, &c, &o).unwrap();
        let full = throughput_exact(&AggregationPlan::uniform(256, 7).unwrap(), &s, &c, &o).unwrap();
        assert!(rel(full.throughput, 21_504_000.0 / (221.3 + 4542.4)) < 1e-9);
        assert!(rel(r.throughput, 4514.0) < 0.005);
        // 255 MPDUs, 252 of them with 7 MSDUs, need 332 symbols instead of 334
        assert_eq!(r.plan, AggregationPlan::new(255, 6, 252).unwrap());
        assert!(r.throughput > full.throughput);
    }

    /// Every `(x, y_base, n_extra)` plan evaluated directly.
    fn brute_force(eval: &Evaluator, rounding: SymbolRounding) -> ThroughputResult {
        let mut best: Option<ThroughputResult> = None;
        for x in 1..=eval.link.config.max_mpdus {
            for y in 1..=eval.link.y_max {
                for n in 0..x {
                    let plan = AggregationPlan::new(x, y, n).unwrap();
                    if !eval.feasibility(&plan).is_ok() {
                        continue;
                    }
                    let r = eval.evaluate(&plan, rounding);
                    if best.is_none_or(|b| r.throughput > b.throughput) {
                        best = Some(r);
                    }
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn reliable_ac_mcs9_optimum_is_full_window() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ac64);
        let s = scenario(ProtocolFlavor::Ac64, 9, 0.0, 1500);
        let eval = Evaluator::new(&s, &c, &o).unwrap();
        let r = eval.optimize(&SearchOptions::default()).unwrap();
        assert_eq!(r.plan, AggregationPlan::uniform(64, 7).unwrap());
        assert_eq!(brute_force(&eval, SymbolRounding::Ceil).plan, r.plan);
    }

    #[test]
    fn search_matches_brute_force() {
        let o = OverheadConfig::default();
        for flavor in [ProtocolFlavor::Ac64, ProtocolFlavor::Ax64] {
            let c = default_config(flavor);
            for (mcs, ber, len) in [(0, 1e-5, 512), (3, 1e-6, 1500), (7, 0.0, 512), (9, 1e-5, 1500)] {
                let s = scenario(flavor, mcs, ber, len);
                let eval = Evaluator::new(&s, &c, &o).unwrap();
                for rounding in [SymbolRounding::Ceil, SymbolRounding::Exact] {
                    let fast = eval.optimize(&SearchOptions { rounding }).unwrap();
                    let slow = brute_force(&eval, rounding);
                    assert_eq!(fast.plan, slow.plan, "{flavor} mcs{mcs} ber{ber} L{len}");
                    assert_eq!(fast.throughput, slow.throughput);
                }
            }
        }
    }

    #[test]
    fn lossy_high_mcs_prefers_short_mpdus() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ax256);
        let s = scenario(ProtocolFlavor::Ax256, 11, 1e-5, 512);
        let eval = Evaluator::new(&s, &c, &o).unwrap();
        let r = eval.optimize(&SearchOptions::default()).unwrap();
        assert!(r.plan.largest_y() < eval.link.y_max, "{}", r.plan);
    }

    #[test]
    fn no_feasible_plan() {
        let o = OverheadConfig::default();
        let mut c = default_config(ProtocolFlavor::Ax64);
        c.ppdu_time_limit = 70.0;
        let s = scenario(ProtocolFlavor::Ax64, 0, 0.0, 1500);
        assert_eq!(optimize_exact(&s, &c, &o), Err(Error::NoFeasiblePlan));
    }

    #[test]
    fn optimizer_dominates_random_plans() {
        let o = OverheadConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for flavor in ProtocolFlavor::ALL {
            let c = default_config(flavor);
            for (mcs, ber, len) in [(1, 1e-6, 64), (5, 1e-5, 1500), (9, 0.0, 512)] {
                let s = scenario(flavor, mcs, ber, len);
                let eval = Evaluator::new(&s, &c, &o).unwrap();
                let best = eval.optimize(&SearchOptions::default()).unwrap().throughput;
                let mut sampled = 0;
                while sampled < 1000 {
                    let x = rng.random_range(1..=c.max_mpdus);
                    let y = rng.random_range(1..=eval.link.y_max);
                    let n = rng.random_range(0..x);
                    let plan = AggregationPlan::new(x, y, n).unwrap();
                    if !eval.feasibility(&plan).is_ok() {
                        continue;
                    }
                    sampled += 1;
                    let r = eval.evaluate(&plan, SymbolRounding::Ceil);
                    assert!(r.throughput <= best, "{flavor} {plan}");
                }
            }
        }
    }

    #[test]
    fn monte_carlo_reliable_is_exact() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ax256);
        let s = scenario(ProtocolFlavor::Ax256, 4, 0.0, 512);
        let plan = AggregationPlan::new(40, 9, 13).unwrap();
        let exact = throughput_exact(&plan, &s, &c, &o).unwrap().throughput;
        for cycles in [1, 17] {
            let mc = monte_carlo_throughput(&plan, &s, &c, &o, cycles, 3).unwrap();
            assert!(rel(mc.throughput, exact) < 1e-12);
            assert_eq!(mc.std_error, 0.0);
        }
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ax64);
        let s = scenario(ProtocolFlavor::Ax64, 6, 1e-5, 1500);
        let plan = AggregationPlan::uniform(30, 2).unwrap();
        let a = monte_carlo_throughput(&plan, &s, &c, &o, 2000, 11).unwrap();
        let b = monte_carlo_throughput(&plan, &s, &c, &o, 2000, 11).unwrap();
        let d = monte_carlo_throughput(&plan, &s, &c, &o, 2000, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.throughput, d.throughput);
        assert!(monte_carlo_throughput(&plan, &s, &c, &o, 0, 11).is_err());
    }

    #[test]
    fn monte_carlo_converges_on_lossy_default() {
        let o = OverheadConfig::default();
        let c = default_config(ProtocolFlavor::Ax256);
        let s = scenario(ProtocolFlavor::Ax256, 7, 1e-5, 1500);
        let best = optimize_exact(&s, &c, &o).unwrap();
        let mc = monte_carlo_throughput(&best.plan, &s, &c, &o, 100_000, 1).unwrap();
        assert!(rel(mc.throughput, best.throughput) < 0.005);
    }

    proptest! {
        #[test]
        fn throughput_decreases_with_ber(
            mcs in 0usize..12, x in 1u32..64, y in 1u32..7, b1 in -8.0f64..-2.0, b2 in -8.0f64..-2.0,
        ) {
            prop_assume!((b1 - b2).abs() > 1e-3);
            let o = OverheadConfig::default();
            let c = default_config(ProtocolFlavor::Ax64);
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            let plan = AggregationPlan::uniform(x, y).unwrap();
            let s_lo = scenario(ProtocolFlavor::Ax64, mcs, 10f64.powf(lo), 1500);
            let s_hi = scenario(ProtocolFlavor::Ax64, mcs, 10f64.powf(hi), 1500);
            let e_lo = Evaluator::new(&s_lo, &c, &o).unwrap();
            prop_assume!(e_lo.feasibility(&plan).is_ok());
            let e_hi = Evaluator::new(&s_hi, &c, &o).unwrap();
            let t_lo = e_lo.evaluate(&plan, SymbolRounding::Ceil).throughput;
            let t_hi = e_hi.evaluate(&plan, SymbolRounding::Ceil).throughput;
            prop_assert!(t_hi < t_lo);
        }
    }
}
