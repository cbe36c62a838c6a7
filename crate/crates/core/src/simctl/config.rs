//! Scenario configuration: JSON schema, bundled presets and validation.
//!
//! Schema (all money in currency units, capacities in MHz):
//!
//! ```json
//! {
//!   "name": "scenario1",
//!   "mechanism": "second_price",          // direct_sale | first_price | second_price
//!   "num_ticks": 100,
//!   "seed": 7,
//!   "tokens": { "count": 25, "capacity_mhz": 10, "center_freq_mhz": 3500,
//!               "slot_duration": 100, "location": "cell-0", "expire": false },
//!   "agents": [
//!     { "id": "seller-0", "role": "seller", "utility_per_mhz": 5,
//!       "initial_balance": 5000, "need_mhz": 0 },
//!     { "id": "buyer-1", "role": "buyer", "utility_per_mhz": 10,
//!       "initial_balance": 5000, "need_mhz": 100, "need_ramp_per_tick": 0,
//!       "strategy": "heuristic" }
//!   ],
//!   "pricing": { "markup": 1.15, "decay": 0.10 },
//!   "strategy": "pipeline",               // default for agents without one
//!   "brain": { "endpoint": null, "timeout_secs": 10 },
//!   "bid_history_window": 20,
//!   "grid_step_fraction": 0.01,
//!   "max_concurrent_listings": null
//! }
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economics::PricingPolicy;
use crate::ids::{AgentId, Mechanism};
use crate::money::{from_f64, Money, Rational};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Seller,
    Buyer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Heuristic,
    Pipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenConfig {
    pub count: u32,
    pub capacity_mhz: u32,
    #[serde(default = "default_center")]
    pub center_freq_mhz: u32,
    #[serde(default = "default_slot")]
    pub slot_duration: u32,
    #[serde(default = "default_location")]
    pub location: String,
    /// Expire tokens once their slot elapses.
    #[serde(default)]
    pub expire: bool,
}

fn default_center() -> u32 {
    3500
}
fn default_slot() -> u32 {
    100
}
fn default_location() -> String {
    "cell-0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    pub role: Role,
    pub utility_per_mhz: f64,
    pub initial_balance: f64,
    #[serde(default)]
    pub need_mhz: u64,
    /// Optional linear growth of need per tick.
    #[serde(default)]
    pub need_ramp_per_tick: u64,
    #[serde(default)]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingConfig {
    pub markup: f64,
    pub decay: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig { markup: 1.15, decay: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrainConfig {
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    10
}

impl Default for BrainConfig {
    fn default() -> Self {
        BrainConfig { endpoint: None, timeout_secs: default_timeout() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub mechanism: Mechanism,
    pub num_ticks: u64,
    #[serde(default)]
    pub seed: u64,
    pub tokens: TokenConfig,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub pricing: PricingConfig,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub brain: BrainConfig,
    #[serde(default = "default_window")]
    pub bid_history_window: usize,
    #[serde(default = "default_grid")]
    pub grid_step_fraction: f64,
    #[serde(default)]
    pub max_concurrent_listings: Option<usize>,
}

fn default_name() -> String {
    "custom".into()
}
fn default_strategy() -> Strategy {
    Strategy::Pipeline
}
fn default_window() -> usize {
    20
}
fn default_grid() -> f64 {
    0.01
}

fn exact(x: f64, path: &str) -> Result<Rational, ConfigError> {
    from_f64(x).ok_or_else(|| invalid(path, "must be a finite number"))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_ticks < 1 {
            return Err(invalid("num_ticks", "must be at least 1"));
        }
        if self.tokens.capacity_mhz == 0 {
            return Err(invalid("tokens.capacity_mhz", "must be positive"));
        }
        if self.tokens.slot_duration == 0 {
            return Err(invalid("tokens.slot_duration", "must be positive"));
        }
        if !self.agents.iter().any(|a| a.role == Role::Seller) {
            return Err(invalid("agents", "at least one seller is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let at = |field: &str| format!("agents[{i}].{field}");
            if a.id.is_empty() || a.id.contains(['/', ':']) || a.id.chars().any(char::is_whitespace) {
                return Err(invalid(at("id"), "must be non-empty without '/', ':' or whitespace"));
            }
            if !seen.insert(a.id.as_str()) {
                return Err(invalid(at("id"), format!("duplicate id `{}`", a.id)));
            }
            if !a.utility_per_mhz.is_finite() || a.utility_per_mhz < 0.0 {
                return Err(invalid(at("utility_per_mhz"), "must be a finite number >= 0"));
            }
            if !a.initial_balance.is_finite() || a.initial_balance < 0.0 {
                return Err(invalid(at("initial_balance"), "must be a finite number >= 0"));
            }
        }
        let p = &self.pricing;
        if !p.markup.is_finite() || p.markup <= 1.0 {
            return Err(invalid("pricing.markup", "must exceed 1"));
        }
        if !p.decay.is_finite() || !(0.0..1.0).contains(&p.decay) {
            return Err(invalid("pricing.decay", "must lie in [0, 1)"));
        }
        if !self.grid_step_fraction.is_finite() || self.grid_step_fraction <= 0.0 || self.grid_step_fraction > 1.0 {
            return Err(invalid("grid_step_fraction", "must lie in (0, 1]"));
        }
        if self.max_concurrent_listings == Some(0) {
            return Err(invalid("max_concurrent_listings", "must be positive when set"));
        }
        if let Some(e) = &self.brain.endpoint {
            if !(e.starts_with("http://") || e.starts_with("https://")) {
                return Err(invalid("brain.endpoint", "must be an http(s) URL"));
            }
        }
        if self.brain.timeout_secs == 0 {
            return Err(invalid("brain.timeout_secs", "must be positive"));
        }
        Ok(())
    }

    pub fn pricing_policy(&self) -> Result<PricingPolicy, ConfigError> {
        let markup = exact(self.pricing.markup, "pricing.markup")?;
        let decay = exact(self.pricing.decay, "pricing.decay")?;
        PricingPolicy::new(markup, decay).map_err(|e| invalid("pricing", e.to_string()))
    }

    pub fn grid_fraction(&self) -> Result<Rational, ConfigError> {
        exact(self.grid_step_fraction, "grid_step_fraction")
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| AgentId::new(&a.id)).collect()
    }

    pub fn strategy_of(&self, agent: &AgentConfig) -> Strategy {
        agent.strategy.unwrap_or(self.strategy)
    }

    /// Sets every agent to `strategy`.
    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        for a in &mut self.agents {
            a.strategy = None;
        }
        self
    }
}

impl AgentConfig {
    pub fn utility(&self) -> Rational {
        from_f64(self.utility_per_mhz).expect("validated finite")
    }

    pub fn balance(&self) -> Money {
        Money::floor_from(&from_f64(self.initial_balance).expect("validated finite"))
    }

    pub fn need_at(&self, tick: u64) -> u64 {
        self.need_mhz.saturating_add(self.need_ramp_per_tick.saturating_mul(tick))
    }
}

fn agent(id: &str, role: Role, u: f64, need: u64) -> AgentConfig {
    AgentConfig {
        id: id.into(),
        role,
        utility_per_mhz: u,
        initial_balance: 5000.0,
        need_mhz: need,
        need_ramp_per_tick: 0,
        strategy: None,
    }
}

/// One seller holding 25 × 10 MHz and three buyers needing 100 MHz each.
fn base(name: &str, buyer_utilities: [f64; 3]) -> ScenarioConfig {
    let mut agents = vec![agent("seller-0", Role::Seller, 5.0, 0)];
    for (i, u) in buyer_utilities.iter().enumerate() {
        agents.push(agent(&format!("buyer-{}", i + 1), Role::Buyer, *u, 100));
    }
    ScenarioConfig {
        name: name.into(),
        mechanism: Mechanism::SecondPrice,
        num_ticks: 100,
        seed: 0,
        tokens: TokenConfig {
            count: 25,
            capacity_mhz: 10,
            center_freq_mhz: default_center(),
            slot_duration: default_slot(),
            location: default_location(),
            expire: false,
        },
        agents,
        pricing: PricingConfig::default(),
        strategy: Strategy::Pipeline,
        brain: BrainConfig::default(),
        bid_history_window: default_window(),
        grid_step_fraction: default_grid(),
        max_concurrent_listings: None,
    }
}

/// Heterogeneous buyers valuing spectrum at 10, 15 and 20 per MHz.
pub fn scenario1() -> ScenarioConfig {
    base("scenario1", [10.0, 15.0, 20.0])
}

/// Homogeneous buyers all valuing spectrum at 20 per MHz.
pub fn scenario2() -> ScenarioConfig {
    base("scenario2", [20.0, 20.0, 20.0])
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "scenario1" => Some(scenario1()),
        "scenario2" => Some(scenario2()),
        _ => None,
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a bundled preset by name or a JSON file by path.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    if let Some(cfg) = path.to_str().and_then(preset) {
        return Ok(cfg);
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}
