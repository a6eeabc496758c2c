//! Typed async client for the simulator's HTTP API.

use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use overdraft_core::bench::BenchConfig;
use overdraft_core::model::Account;
use overdraft_core::settlement::{CloseOutcome, Event, LedgerConfig};
use overdraft_core::wire::*;
use overdraft_core::{AgreementId, Block, LoanDraft, LoanNetworkView, OfflineTransaction, SettlementReport};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{status} {code}: {message}")]
    Api { status: StatusCode, code: String, message: String },
    #[error("decoding response: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("network text: {0}")]
    Network(#[from] overdraft_core::netfile::ParseError),
}

impl ClientError {
    /// Error category reported by the server, if any.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        Client { base, http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn req(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn send(rb: RequestBuilder) -> Result<reqwest::Response> {
        let resp = rb.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.code, b.message),
            Err(_) => ("http".to_string(), text),
        };
        Err(ClientError::Api { status, code, message })
    }

    async fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T> {
        let bytes = Self::send(rb).await?.bytes().await?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    async fn text(rb: RequestBuilder) -> Result<String> {
        Ok(Self::send(rb).await?.text().await?)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::json(self.req(Method::POST, path).json(body)).await
    }

    pub async fn health(&self) -> Result<()> {
        Self::send(self.req(Method::GET, "/health")).await.map(drop)
    }

    pub async fn generate(&self, nodes: usize, config: &BenchConfig) -> Result<NetworkResponse> {
        self.post("/v1/graph/generate", &GenerateRequest { nodes, config: config.clone() }).await
    }

    pub async fn estimate(&self, req: &EstimateRequest) -> Result<EstimateResponse> {
        self.post("/v1/estimate", req).await
    }

    pub async fn interest(&self, req: &InterestRequest) -> Result<InterestResponse> {
        self.post("/v1/interest", req).await
    }

    pub async fn attack(&self, req: &AttackRequest) -> Result<AttackResponse> {
        self.post("/v1/attack", req).await
    }

    pub async fn bench(&self, config: &BenchConfig) -> Result<BenchResponse> {
        self.post("/v1/bench", config).await
    }

    pub async fn ledger(&self) -> Result<LedgerSummary> {
        Self::json(self.req(Method::GET, "/v1/ledger")).await
    }

    pub async fn reset(&self, config: &LedgerConfig) -> Result<LedgerSummary> {
        self.post("/v1/ledger/reset", config).await
    }

    pub async fn snapshot(&self) -> Result<String> {
        Self::text(self.req(Method::GET, "/v1/ledger/snapshot")).await
    }

    pub async fn restore_snapshot(&self, json: String) -> Result<LedgerSummary> {
        let rb = self.req(Method::PUT, "/v1/ledger/snapshot").header("content-type", "application/json").body(json);
        Self::json(rb).await
    }

    pub async fn dump(&self) -> Result<String> {
        Self::text(self.req(Method::GET, "/v1/ledger/dump")).await
    }

    /// Replaces the ledger with a text dump; `config` defaults to the server's current one.
    pub async fn load_dump(&self, text: String, config: Option<&LedgerConfig>) -> Result<LedgerSummary> {
        let mut rb = self.req(Method::PUT, "/v1/ledger/dump").body(text);
        if let Some(c) = config {
            rb = rb.query(&[("config", serde_json::to_string(c)?)]);
        }
        Self::json(rb).await
    }

    pub async fn create_account(&self, req: &CreateAccountRequest) -> Result<Account> {
        self.post("/v1/ledger/accounts", req).await
    }

    pub async fn open_loan(&self, draft: &LoanDraft) -> Result<AgreementId> {
        let r: OpenLoanResponse = self.post("/v1/ledger/loans", draft).await?;
        Ok(r.agreement_id)
    }

    pub async fn close_loan(&self, id: AgreementId) -> Result<CloseOutcome> {
        Self::json(self.req(Method::POST, &format!("/v1/ledger/loans/{}/close", id.0))).await
    }

    pub async fn advance(&self, blocks: u64) -> Result<AdvanceResponse> {
        self.post("/v1/ledger/advance", &AdvanceRequest { blocks }).await
    }

    pub async fn settle(&self, tx: &OfflineTransaction) -> Result<SettlementReport> {
        self.post("/v1/ledger/settle", tx).await
    }

    pub async fn view_text(&self, at: Option<Block>) -> Result<String> {
        let mut rb = self.req(Method::GET, "/v1/ledger/view");
        if let Some(at) = at {
            rb = rb.query(&[("at", at)]);
        }
        Self::text(rb).await
    }

    pub async fn view(&self, at: Option<Block>) -> Result<LoanNetworkView> {
        Ok(LoanNetworkView::from_text(&self.view_text(at).await?)?)
    }

    pub async fn events(&self) -> Result<Vec<Event>> {
        let text = Self::text(self.req(Method::GET, "/v1/ledger/events")).await?;
        text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
    }

    pub async fn reputation_csv(&self) -> Result<String> {
        Self::text(self.req(Method::GET, "/v1/ledger/reputation")).await
    }
}
