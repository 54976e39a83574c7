//! Closed-form economic security of a staking system.
//!
//! Every function is pure and generic over the floating-point scalar. The
//! symbols follow the usual staking model:
//!
//! * `p_block`: reward paid per block
//! * `c`: per-block opportunity cost of one frozen stake unit
//! * `beta`: per-block discount factor, `0 <= beta < 1`
//! * `price`: value of one stake unit, the discounted sum of `c`
//! * `n_star`: equilibrium stake, where `n_star * c = p_block`
//! * `alpha`: security coefficient, deterred attack value per unit of block reward
//!
//! The liquid-supply side uses a velocity model `p = D / (v * N_liquid)` and the
//! expected upside of holding liquid coins through demand shocks.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 365 days.
pub const SECONDS_PER_YEAR: f64 = 31_536_000.0;

/// Security coefficient commonly quoted for proof-of-work Bitcoin.
pub const ALPHA_POW_BITCOIN: f64 = 3.35;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    #[error("{param} = {value} is outside its domain: {reason}")]
    Domain {
        param: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("discounted sum diverges for beta = {beta}")]
    DivergentSum { beta: f64 },
    #[error("no equilibrium: both block reward and volatility payoff are zero")]
    NoEquilibrium,
    #[error("shock sample list is empty")]
    EmptySamples,
}

impl EconError {
    /// Name of the offending parameter, when there is one.
    pub fn param(&self) -> Option<&'static str> {
        match self {
            EconError::Domain { param, .. } => Some(param),
            EconError::DivergentSum { .. } => Some("beta"),
            EconError::NoEquilibrium | EconError::EmptySamples => None,
        }
    }
}

fn f<T: Float>(x: f64) -> T {
    T::from(x).expect("constant representable in scalar type")
}

fn as_f64<T: Float>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn domain<T: Float>(param: &'static str, value: T, reason: &'static str) -> EconError {
    EconError::Domain {
        param,
        value: as_f64(value),
        reason,
    }
}

fn finite<T: Float>(param: &'static str, value: T) -> Result<T, EconError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(domain(param, value, "must be finite"))
    }
}

fn non_negative<T: Float>(param: &'static str, value: T) -> Result<T, EconError> {
    let v = finite(param, value)?;
    if v < T::zero() {
        Err(domain(param, v, "must be non-negative"))
    } else {
        Ok(v)
    }
}

fn positive<T: Float>(param: &'static str, value: T) -> Result<T, EconError> {
    let v = finite(param, value)?;
    if v > T::zero() {
        Ok(v)
    } else {
        Err(domain(param, v, "must be positive"))
    }
}

fn discount<T: Float>(beta: T) -> Result<T, EconError> {
    let b = finite("beta", beta)?;
    if b < T::zero() {
        return Err(domain("beta", b, "must be in [0, 1)"));
    }
    if b >= T::one() {
        return Err(EconError::DivergentSum { beta: as_f64(b) });
    }
    Ok(b)
}

/// `n_star = p_block / c`: stake at which the block reward exactly pays the
/// opportunity cost of all deposits.
pub fn equilibrium_stake<T: Float>(p_block: T, c: T) -> Result<T, EconError> {
    let p = non_negative("p_block", p_block)?;
    let c = positive("c", c)?;
    Ok(p / c)
}

/// `C = c / (1 - beta)`, the perpetuity value of one stake unit.
pub fn price_from_flow<T: Float>(c: T, beta: T) -> Result<T, EconError> {
    let c = non_negative("c", c)?;
    let b = discount(beta)?;
    Ok(c / (T::one() - b))
}

/// Per-block discount factor from an annual one:
/// `annual_discount ^ (block_seconds / SECONDS_PER_YEAR)`.
pub fn beta_per_block<T: Float>(annual_discount: T, block_seconds: T) -> Result<T, EconError> {
    let a = finite("annual_discount", annual_discount)?;
    if !(a > T::zero() && a < T::one()) {
        return Err(domain("annual_discount", a, "must be in (0, 1)"));
    }
    let s = positive("block_seconds", block_seconds)?;
    // exp(ln(a) * s / year) keeps precision when the exponent is tiny.
    Ok((a.ln() * s / f(SECONDS_PER_YEAR)).exp())
}

/// `alpha = 1 / (2 (1 - beta))`.
pub fn alpha_ether<T: Float>(beta: T) -> Result<T, EconError> {
    let b = discount(beta)?;
    Ok(T::one() / (f::<T>(2.0) * (T::one() - b)))
}

/// Attack deterred iff `n_attack * price > v_attack`. Equality is not deterrence.
pub fn incentive_compatible<T: Float>(v_attack: T, n_attack: T, price: T) -> bool {
    n_attack * price > v_attack
}

/// `alpha * p_block`: attacks worth strictly less than this are deterred.
pub fn max_safe_attack_value<T: Float>(p_block: T, alpha: T) -> Result<T, EconError> {
    let p = non_negative("p_block", p_block)?;
    let a = positive("alpha", alpha)?;
    Ok(a * p)
}

/// `p = D / (v * N_liquid)`.
pub fn velocity_price<T: Float>(demand: T, velocity: T, n_liquid: T) -> Result<T, EconError> {
    let d = non_negative("demand", demand)?;
    let v = positive("velocity", velocity)?;
    let n = positive("n_liquid", n_liquid)?;
    Ok(d / (v * n))
}

/// `r_liquid = P_volatility / N_liquid`.
pub fn liquid_payoff<T: Float>(p_volatility: T, n_liquid: T) -> Result<T, EconError> {
    let p = non_negative("p_volatility", p_volatility)?;
    let n = positive("n_liquid", n_liquid)?;
    Ok(p / n)
}

/// Empirical `P(dD > 0) * E[dD / v | dD > 0]` from demand-shock samples.
///
/// Positive terms are summed in sorted order so the estimate does not depend
/// on sample order.
pub fn p_volatility_from_shocks<T: Float>(shocks: &[T], velocity: T) -> Result<T, EconError> {
    if shocks.is_empty() {
        return Err(EconError::EmptySamples);
    }
    let v = positive("velocity", velocity)?;
    let mut positive_terms: Vec<T> = shocks
        .iter()
        .copied()
        .filter(|d| *d > T::zero())
        .map(|d| d / v)
        .collect();
    if positive_terms.is_empty() {
        return Ok(T::zero());
    }
    positive_terms.sort_by(|a, b| a.partial_cmp(b).expect("filtered to positive"));
    let count = T::from(positive_terms.len()).expect("count fits");
    let total = T::from(shocks.len()).expect("count fits");
    let sum = positive_terms.iter().fold(T::zero(), |acc, x| acc + *x);
    Ok((count / total) * (sum / count))
}

/// Deposit level where the staking yield `p_block / N_deposit` equals the
/// liquid payoff `p_volatility / (n_total - N_deposit)`:
/// `n_total * p_block / (p_block + p_volatility)`.
pub fn equilibrium_deposit<T: Float>(
    p_block: T,
    p_volatility: T,
    n_total: T,
) -> Result<T, EconError> {
    let pb = non_negative("p_block", p_block)?;
    let pv = non_negative("p_volatility", p_volatility)?;
    let n = positive("n_total", n_total)?;
    let sum = pb + pv;
    if sum <= T::zero() {
        return Err(EconError::NoEquilibrium);
    }
    if pv == T::zero() {
        return Ok(n);
    }
    if pb == T::zero() {
        return Ok(T::zero());
    }
    Ok(n * (pb / sum))
}

/// How a liquid-holding rate is turned into the per-block discount factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaConvention {
    /// `beta = r_liquid`, taken literally.
    #[default]
    Direct,
    /// `beta = 1 / (1 + r_liquid)`, the textbook discount factor for a rate.
    DiscountRate,
}

pub fn beta_from_liquid_rate<T: Float>(
    r_liquid: T,
    convention: BetaConvention,
) -> Result<T, EconError> {
    let r = non_negative("r_liquid", r_liquid)?;
    let beta = match convention {
        BetaConvention::Direct => r,
        BetaConvention::DiscountRate => T::one() / (T::one() + r),
    };
    discount(beta)
}

/// Proof-of-work benchmark for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoWComparison<T> {
    pub alpha_pow: T,
    /// Repurposable chips make sabotage a flow cost; otherwise chips are a stock cost.
    pub chips_repurposable: bool,
}

impl<T: Float> Default for PoWComparison<T> {
    fn default() -> Self {
        PoWComparison {
            alpha_pow: f(ALPHA_POW_BITCOIN),
            chips_repurposable: true,
        }
    }
}

impl<T: Float> PoWComparison<T> {
    /// How many times more attack value the staking system deters per unit of reward.
    pub fn security_ratio(&self, alpha: T) -> Result<T, EconError> {
        let pow = positive("alpha_pow", self.alpha_pow)?;
        Ok(alpha / pow)
    }
}

/// The staking model's symbols, derived from the four free inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams<T> {
    pub p_block: T,
    pub c: T,
    pub beta: T,
    pub price: T,
    pub n_star: T,
    pub v_attack: T,
    pub n_attack: T,
    pub alpha: T,
}

impl<T: Float> EconomicParams<T> {
    /// Derives the remaining symbols with `n_attack = n_star / 2`.
    pub fn derive(p_block: T, c: T, beta: T, v_attack: T) -> Result<Self, EconError> {
        Self::derive_with_attack_share(p_block, c, beta, v_attack, f(0.5))
    }

    /// As [`derive`](Self::derive), with `n_attack = share * n_star`.
    pub fn derive_with_attack_share(
        p_block: T,
        c: T,
        beta: T,
        v_attack: T,
        share: T,
    ) -> Result<Self, EconError> {
        let v_attack = non_negative("v_attack", v_attack)?;
        let share = non_negative("n_attack_share", share)?;
        let n_star = equilibrium_stake(p_block, c)?;
        let price = price_from_flow(c, beta)?;
        let alpha = alpha_ether(beta)?;
        Ok(EconomicParams {
            p_block,
            c,
            beta,
            price,
            n_star,
            v_attack,
            n_attack: share * n_star,
            alpha,
        })
    }

    /// Deterrence through the stake cost: `n_attack * price > v_attack`.
    pub fn deterred_by_stake_cost(&self) -> bool {
        incentive_compatible(self.v_attack, self.n_attack, self.price)
    }

    /// Deterrence through the reward bound: `v_attack < alpha * p_block`.
    /// Agrees with [`deterred_by_stake_cost`](Self::deterred_by_stake_cost)
    /// when `n_attack = n_star / 2`, up to rounding at the boundary.
    pub fn deterred_by_reward_bound(&self) -> bool {
        self.v_attack < self.alpha * self.p_block
    }

    pub fn safe_attack_value(&self) -> T {
        self.alpha * self.p_block
    }
}

/// Liquid-supply side of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel<T> {
    pub demand: T,
    pub velocity: T,
    pub n_total: T,
    pub n_deposit: T,
    pub p_volatility: T,
}

impl<T: Float> VelocityModel<T> {
    pub fn n_liquid(&self) -> T {
        self.n_total - self.n_deposit
    }

    pub fn price(&self) -> Result<T, EconError> {
        velocity_price(self.demand, self.velocity, self.n_liquid())
    }

    pub fn r_liquid(&self) -> Result<T, EconError> {
        liquid_payoff(self.p_volatility, self.n_liquid())
    }

    /// Staking yield per deposited unit, `p_block / n_deposit`.
    pub fn staking_yield(&self, p_block: T) -> Result<T, EconError> {
        let n = positive("n_deposit", self.n_deposit)?;
        Ok(non_negative("p_block", p_block)? / n)
    }

    pub fn equilibrium_deposit(&self, p_block: T) -> Result<T, EconError> {
        equilibrium_deposit(p_block, self.p_volatility, self.n_total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn equilibrium_stake_examples() {
        assert!(close(
            equilibrium_stake(100.0, 0.01).unwrap(),
            10_000.0,
            1e-12
        ));
        assert_eq!(equilibrium_stake(0.0, 1.0).unwrap(), 0.0);
        let n = equilibrium_stake(7.0, 0.3).unwrap();
        assert!(close(7.0 / n, 0.3, 1e-15));
        assert_eq!(equilibrium_stake(1.0, 0.0).unwrap_err().param(), Some("c"));
    }

    #[test]
    fn price_examples() {
        assert_eq!(price_from_flow(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(price_from_flow(1.0, 0.5).unwrap(), 2.0);
        assert!(matches!(
            price_from_flow(1.0, 1.0),
            Err(EconError::DivergentSum { .. })
        ));
        assert!(matches!(
            price_from_flow(1.0, -0.1),
            Err(EconError::Domain { .. })
        ));
    }

    #[test]
    fn price_matches_partial_geometric_sum() {
        // 1e8 terms of beta^t, summed in blocks for accuracy.
        let beta: f64 = 0.9999996;
        let mut sum = 0.0f64;
        let mut block_sum;
        let mut term = 1.0f64;
        for _ in 0..100_000 {
            block_sum = 0.0;
            for _ in 0..1000 {
                block_sum += term;
                term *= beta;
            }
            sum += block_sum;
        }
        let closed = price_from_flow(1.0, beta).unwrap();
        assert!(close(sum, closed, 1e-3), "{sum} vs {closed}");
        assert!(close(closed, 2.5e6, 1e-6));
    }

    #[test]
    fn beta_examples() {
        let b: f64 = beta_per_block(0.98, 600.0).unwrap();
        assert!((0.9999995..=0.9999997).contains(&b), "{b}");
        assert!(close(
            beta_per_block(0.98, SECONDS_PER_YEAR).unwrap(),
            0.98,
            1e-14
        ));
        let tiny: f64 = beta_per_block(0.98, 1e-6).unwrap();
        assert!(tiny < 1.0 && tiny > 1.0 - 1e-12);
        assert!(beta_per_block(1.0, 600.0).is_err());
        assert!(beta_per_block(0.0, 600.0).is_err());
        assert_eq!(
            beta_per_block(0.98, 0.0).unwrap_err().param(),
            Some("block_seconds")
        );
    }

    #[test]
    fn alpha_examples() {
        assert!(close(alpha_ether(0.9999996).unwrap(), 1.25e6, 1e-6));
        assert_eq!(alpha_ether(0.5).unwrap(), 1.0);
        assert!(alpha_ether(1.0).is_err());
    }

    #[test]
    fn alpha_crosses_pow_benchmark() {
        // Independent bisection for alpha(beta) = 3.35.
        let (mut lo, mut hi) = (0.0f64, 0.999);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 / (2.0 * (1.0 - mid)) > 3.35 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!(close(lo, 1.0 - 1.0 / 6.7, 1e-12));
        assert!(alpha_ether(0.8508).unwrap() > 3.35);
        assert!(alpha_ether(0.8507).unwrap() < 3.35);
    }

    #[test]
    fn incentive_examples() {
        assert!(incentive_compatible(100.0, 50.0, 3.0));
        assert!(!incentive_compatible(150.0, 50.0, 3.0));
    }

    #[test]
    fn safe_value_examples() {
        assert_eq!(max_safe_attack_value(1.0, 3.35).unwrap(), 3.35);
        let a = alpha_ether(0.9999996).unwrap();
        let v = max_safe_attack_value(1.0, a).unwrap();
        let ratio = v / max_safe_attack_value(1.0, ALPHA_POW_BITCOIN).unwrap();
        assert!(close(ratio, 1.25e6 / 3.35, 1e-6) && ratio > 3.7e5);
        assert_eq!(max_safe_attack_value(0.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(velocity_price(100.0, 2.0, 25.0).unwrap(), 2.0);
        assert_eq!(velocity_price(100.0, 2.0, 12.5).unwrap(), 4.0);
        assert_eq!(velocity_price(0.0, 2.0, 25.0).unwrap(), 0.0);
        assert_eq!(
            velocity_price(1.0, 0.0, 25.0).unwrap_err().param(),
            Some("velocity")
        );
        assert_eq!(
            velocity_price(1.0, 1.0, 0.0).unwrap_err().param(),
            Some("n_liquid")
        );
    }

    #[test]
    fn liquid_payoff_examples() {
        assert_eq!(liquid_payoff(50.0, 100.0).unwrap(), 0.5);
        assert_eq!(liquid_payoff(50.0, 200.0).unwrap(), 0.25);
        assert_eq!(liquid_payoff(0.0, 200.0).unwrap(), 0.0);
        assert!(liquid_payoff(1.0, 0.0).is_err());
    }

    #[test]
    fn volatility_examples() {
        assert_eq!(p_volatility_from_shocks(&[-1.0, 1.0], 1.0).unwrap(), 0.5);
        assert_eq!(p_volatility_from_shocks(&[-1.0, -3.0], 1.0).unwrap(), 0.0);
        assert_eq!(
            p_volatility_from_shocks::<f64>(&[], 1.0),
            Err(EconError::EmptySamples)
        );
    }

    #[test]
    fn equilibrium_deposit_examples() {
        assert_eq!(equilibrium_deposit(2.0, 2.0, 1000.0).unwrap(), 500.0);
        assert_eq!(equilibrium_deposit(3.0, 1.0, 4000.0).unwrap(), 3000.0);
        assert_eq!(equilibrium_deposit(3.0, 0.0, 4000.0).unwrap(), 4000.0);
        assert_eq!(equilibrium_deposit(0.0, 1.0, 4000.0).unwrap(), 0.0);
        assert_eq!(
            equilibrium_deposit(0.0, 0.0, 4000.0),
            Err(EconError::NoEquilibrium)
        );
    }

    #[test]
    fn beta_conventions() {
        assert_eq!(
            beta_from_liquid_rate(0.25, BetaConvention::Direct).unwrap(),
            0.25
        );
        assert_eq!(
            beta_from_liquid_rate(0.25, BetaConvention::DiscountRate).unwrap(),
            0.8
        );
        assert!(beta_from_liquid_rate(1.5, BetaConvention::Direct).is_err());
    }

    #[test]
    fn works_in_f32() {
        let a: f32 = alpha_ether(0.5f32).unwrap();
        assert_eq!(a, 1.0);
        let n: f32 = equilibrium_deposit(1.0f32, 1.0, 10.0).unwrap();
        assert_eq!(n, 5.0);
    }

    #[test]
    fn params_chain() {
        let p = EconomicParams::derive(2.0, 0.1, 0.5, 39.0).unwrap();
        assert_eq!(p.n_star, 20.0);
        assert_eq!(p.price, 0.2);
        assert_eq!(p.n_attack, 10.0);
        assert_eq!(p.alpha, 1.0);
        assert!(p.deterred_by_reward_bound() == (39.0 < 2.0));
        assert_eq!(p.deterred_by_stake_cost(), p.deterred_by_reward_bound());
        let pow = PoWComparison::<f64>::default();
        assert_eq!(pow.alpha_pow, 3.35);
        assert!(close(pow.security_ratio(3.35).unwrap(), 1.0, 1e-15));
    }
}
