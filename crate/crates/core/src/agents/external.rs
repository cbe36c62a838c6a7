//! HTTP adapter for an out-of-process planner.
//!
//! One JSON POST per plan call. Money crosses the wire in currency units.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::planner::{BrainError, Planner, PlanningContext};
use super::{demand_gap, Assessment, Intent};
use crate::ids::{AuctionId, TokenId};
use crate::money::{from_f64, to_f64, Rational};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone)]
pub struct ExternalBrain {
    endpoint: String,
    timeout: Duration,
}

impl ExternalBrain {
    pub fn new(endpoint: impl Into<String>) -> Self {
        ExternalBrain { endpoint: endpoint.into(), timeout: DEFAULT_TIMEOUT }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WireHolding {
    pub token_id: u32,
    pub capacity_mhz: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct WireState {
    pub agent_id: String,
    pub balance: f64,
    pub utility_per_mhz: f64,
    pub need_mhz: u64,
    pub demand_gap_mhz: u64,
    pub holdings: Vec<WireHolding>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WireAuction {
    pub auction_id: u64,
    pub token_id: u32,
    pub capacity_mhz: u32,
    pub seller: String,
    pub mechanism: String,
    pub reserve: f64,
    pub phase: String,
    pub commit_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WireRequest {
    pub agent: String,
    pub tick: u64,
    pub mechanism: String,
    pub assessment: Assessment,
    pub state: WireState,
    pub open_auctions: Vec<WireAuction>,
    pub bid_history: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct WireResponse {
    pub intent: String,
    #[serde(default)]
    pub auction_id: Option<Value>,
    #[serde(default)]
    pub token_id: Option<Value>,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub reserve: Option<f64>,
    #[serde(default)]
    pub rationale: Option<String>,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn request_for(ctx: &PlanningContext<'_>) -> WireRequest {
    let (state, view) = (ctx.state, ctx.view);
    WireRequest {
        agent: state.agent_id.to_string(),
        tick: view.tick,
        mechanism: label(&view.mechanism),
        assessment: ctx.assessment.clone(),
        state: WireState {
            agent_id: state.agent_id.to_string(),
            balance: state.balance.as_units_f64(),
            utility_per_mhz: to_f64(&state.utility_per_mhz),
            need_mhz: state.need_mhz,
            demand_gap_mhz: demand_gap(state),
            holdings: state.holdings.iter().map(|(t, c)| WireHolding { token_id: t.0, capacity_mhz: *c }).collect(),
        },
        open_auctions: view
            .open_auctions
            .iter()
            .map(|a| WireAuction {
                auction_id: a.id.0,
                token_id: a.token.0,
                capacity_mhz: a.capacity_mhz,
                seller: a.seller.to_string(),
                mechanism: label(&a.mechanism),
                reserve: a.reserve.as_units_f64(),
                phase: label(&a.phase),
                commit_count: a.commit_count,
            })
            .collect(),
        bid_history: view.recent_winning_bids.bids().map(to_f64).collect(),
    }
}

fn parse_id(v: &Value, prefix: &str) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.strip_prefix(prefix).unwrap_or(s).parse().ok(),
        _ => None,
    }
}

fn amount(x: f64, field: &'static str) -> Result<Rational, BrainError> {
    from_f64(x).ok_or_else(|| BrainError::Malformed(format!("`{field}` is not a finite number")))
}

/// Converts a wire response into an intent; sells use the market's mechanism.
pub fn intent_from(resp: &WireResponse, ctx: &PlanningContext<'_>) -> Result<Intent, BrainError> {
    match resp.intent.to_ascii_lowercase().as_str() {
        "idle" => Ok(Intent::Idle),
        "buy" => {
            let id = resp.auction_id.as_ref().ok_or(BrainError::MissingField("auction_id"))?;
            let id = parse_id(id, "auction-").ok_or_else(|| BrainError::Malformed("bad auction_id".into()))?;
            let value = amount(resp.value.ok_or(BrainError::MissingField("value"))?, "value")?;
            Ok(Intent::Buy { auction: AuctionId(id), value })
        }
        "sell" => {
            let id = resp.token_id.as_ref().ok_or(BrainError::MissingField("token_id"))?;
            let id = parse_id(id, "token-").and_then(|n| u32::try_from(n).ok()).ok_or_else(|| BrainError::Malformed("bad token_id".into()))?;
            let reserve = amount(resp.reserve.ok_or(BrainError::MissingField("reserve"))?, "reserve")?;
            Ok(Intent::Sell { token: TokenId(id), mechanism: ctx.view.mechanism, reserve })
        }
        other => Err(BrainError::Malformed(format!("unknown intent `{other}`"))),
    }
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source = std::error::Error::source(err);
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            return matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock);
        }
        source = e.source();
    }
    false
}

/// Sends one planning request and parses the reply.
pub fn plan_external(brain: &ExternalBrain, ctx: &PlanningContext<'_>) -> Result<Intent, BrainError> {
    let body = serde_json::to_string(&request_for(ctx)).map_err(|e| BrainError::Malformed(e.to_string()))?;
    let agent = ureq::AgentBuilder::new().timeout(brain.timeout).build();
    let resp = agent.post(&brain.endpoint).set("Content-Type", "application/json").send_string(&body).map_err(|e| match e {
        ureq::Error::Status(code, _) => BrainError::Transport(format!("HTTP {code}")),
        ureq::Error::Transport(t) if is_timeout(&t) => BrainError::Timeout(t.to_string()),
        ureq::Error::Transport(t) => BrainError::Transport(t.to_string()),
    })?;
    let text = resp.into_string().map_err(|e| BrainError::Transport(e.to_string()))?;
    let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| BrainError::Malformed(e.to_string()))?;
    if let Some(r) = &parsed.rationale {
        log::debug!("{} brain rationale: {r}", ctx.state.agent_id);
    }
    intent_from(&parsed, ctx)
}

impl Planner for ExternalBrain {
    fn name(&self) -> &str {
        "external"
    }

    fn plan(&self, ctx: &PlanningContext<'_>) -> Result<Intent, BrainError> {
        plan_external(self, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::planner::{plan, PlanSource};
    use crate::agents::testutil::*;
    use crate::agents::{perceive, AgentState, MarketView};
    use crate::auctionhouse::Phase;
    use crate::economics::PricingPolicy;
    use crate::ids::Mechanism;
    use crate::money::{int, ratio};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves one request with a canned body and hands back the request body.
    fn one_shot(body: &'static str) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/plan", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            tx.send(String::from_utf8(buf).unwrap()).unwrap();
            let mut out = stream;
            write!(out, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}", body.len(), body).unwrap();
        });
        (url, rx)
    }

    fn fixture() -> (AgentState, MarketView) {
        (state(20, 100, &[], 300), view(Mechanism::SecondPrice, vec![entry(7, 3, Mechanism::SecondPrice, 52, Phase::Open)]))
    }

    fn run(brain: &ExternalBrain, s: &AgentState, v: &MarketView) -> crate::agents::PlanOutcome {
        let a = perceive(v, s);
        let p = PricingPolicy::new(ratio(115, 100), ratio(1, 10)).unwrap();
        let step = ratio(1, 100);
        plan(&PlanningContext { assessment: &a, state: s, view: v, policy: &p, grid_fraction: &step }, brain)
    }

    #[test]
    fn echo_endpoint_intent_is_used() {
        let (url, rx) = one_shot(r#"{"intent":"buy","auction_id":7,"value":175.5,"rationale":"scripted"}"#);
        let (s, v) = fixture();
        let out = run(&ExternalBrain::new(url), &s, &v);
        assert_eq!(out.source, PlanSource::Brain);
        assert_eq!(out.intent, Intent::Buy { auction: AuctionId(7), value: ratio(3510, 20) });
        let sent: Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["agent"], "agent-1");
        assert_eq!(sent["mechanism"], "second_price");
        assert_eq!(sent["open_auctions"][0]["reserve"], 52.0);
        assert!(sent.get("assessment").is_some() && sent.get("bid_history").is_some());
    }

    #[test]
    fn echo_bid_above_balance_is_clamped() {
        let (url, _rx) = one_shot(r#"{"intent":"buy","auction_id":"auction-7","value":3000}"#);
        let (s, v) = fixture();
        assert_eq!(run(&ExternalBrain::new(url), &s, &v).intent, Intent::Buy { auction: AuctionId(7), value: int(200) });
    }

    #[test]
    fn missing_field_falls_back() {
        let (url, _rx) = one_shot(r#"{"intent":"buy","auction_id":7}"#);
        let (s, v) = fixture();
        let out = run(&ExternalBrain::new(url), &s, &v);
        assert_eq!(out.source, PlanSource::Fallback);
        assert!(out.note.unwrap().contains("value"));
        assert_eq!(out.intent, Intent::Buy { auction: AuctionId(7), value: int(200) });
    }

    #[test]
    fn endpoint_down_falls_back() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let (s, v) = fixture();
        let brain = ExternalBrain::new(format!("http://127.0.0.1:{port}/plan")).with_timeout(Duration::from_secs(2));
        let out = run(&brain, &s, &v);
        assert_eq!(out.source, PlanSource::Fallback);
        assert_eq!(out.intent, Intent::Buy { auction: AuctionId(7), value: int(200) });
    }

    #[test]
    fn sell_uses_market_mechanism() {
        let (url, _rx) = one_shot(r#"{"intent":"sell","token_id":"token-2","reserve":80}"#);
        let s = state(5, 0, &[(2, 10)], 0);
        let v = view(Mechanism::FirstPrice, vec![]);
        let out = run(&ExternalBrain::new(url), &s, &v);
        assert_eq!(out.intent, Intent::Sell { token: TokenId(2), mechanism: Mechanism::FirstPrice, reserve: int(80) });
    }
}
