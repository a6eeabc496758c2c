//! HTTP/JSON front end for the simulator.
//!
//! Estimation, benchmarks and attack evaluation are stateless and run on the
//! blocking pool. The ledger is a single shared instance; every mutating call
//! takes its lock, so operations apply one at a time in arrival order.

mod error;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;

use overdraft_core::bench::{bench_csv, generate_random_network, run_benchmark, BenchConfig};
use overdraft_core::confidence::{accept_payment, estimate_confidence_with, EstimateOptions};
use overdraft_core::incentives::{per_block_interest, total_interest};
use overdraft_core::settlement::{to_json_lines, CloseOutcome, Ledger, LedgerConfig, SettlementReport};
use overdraft_core::sybil::{attack_csv, build_scenario, evaluate_attack_with};
use overdraft_core::wire::*;
use overdraft_core::{AgreementId, LoanDraft, LoanNetworkView, OfflineTransaction};

pub use error::ApiError;

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    ledger: Arc<Mutex<Ledger>>,
}

impl AppState {
    pub fn new(config: LedgerConfig) -> Result<Self, ApiError> {
        Ok(AppState { ledger: Arc::new(Mutex::new(Ledger::new(config)?)) })
    }

    fn ledger(&self) -> MutexGuard<'_, Ledger> {
        // a panic mid-operation leaves nothing half-applied worth refusing
        self.ledger.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/v1/graph/generate", post(generate))
        .route("/v1/estimate", post(estimate))
        .route("/v1/interest", post(interest))
        .route("/v1/attack", post(attack))
        .route("/v1/bench", post(bench))
        .route("/v1/ledger", get(summary))
        .route("/v1/ledger/reset", post(reset))
        .route("/v1/ledger/snapshot", get(get_snapshot).put(put_snapshot))
        .route("/v1/ledger/dump", get(get_dump).put(put_dump))
        .route("/v1/ledger/accounts", post(create_account))
        .route("/v1/ledger/loans", post(open_loan))
        .route("/v1/ledger/loans/{id}/close", post(close_loan))
        .route("/v1/ledger/advance", post(advance))
        .route("/v1/ledger/settle", post(settle))
        .route("/v1/ledger/view", get(view))
        .route("/v1/ledger/events", get(events))
        .route("/v1/ledger/reputation", get(reputation))
        .with_state(state)
}

/// Serves on `listener` until the task is dropped.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(addr: SocketAddr, config: LedgerConfig) -> Result<SocketAddr, ApiError> {
    let state = AppState::new(config)?;
    let listener = TcpListener::bind(addr).await.map_err(|e| ApiError::Internal(e.to_string()))?;
    let local = listener.local_addr().map_err(|e| ApiError::Internal(e.to_string()))?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, state).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(local)
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

fn parse_network(text: &str) -> ApiResult<LoanNetworkView> {
    Ok(LoanNetworkView::from_text(text)?)
}

async fn generate(Json(req): Json<GenerateRequest>) -> ApiResult<Json<NetworkResponse>> {
    blocking(move || {
        req.config.validate()?;
        let view = generate_random_network(req.nodes, &req.config)?;
        Ok(Json(NetworkResponse { nodes: view.nodes().len(), edges: view.edges().len(), network: view.to_text() }))
    })
    .await
}

async fn estimate(Json(req): Json<EstimateRequest>) -> ApiResult<Json<EstimateResponse>> {
    blocking(move || {
        let view = parse_network(&req.network)?;
        let options = EstimateOptions { strategy: req.strategy, workers: req.workers.max(1) };
        let estimate = estimate_confidence_with(&view, req.payer, &req.params, req.iterations, options)?;
        let decision = req.policy.map(|p| accept_payment(&estimate, &p));
        let probabilities = estimate.prob_at_least_map(&req.thresholds);
        Ok(Json(EstimateResponse { estimate, probabilities, decision }))
    })
    .await
}

async fn interest(Json(req): Json<InterestRequest>) -> ApiResult<Json<InterestResponse>> {
    let total = total_interest(&req.params)?;
    let schedule = req.duration_blocks.map(|d| per_block_interest(&req.params, d)).transpose()?;
    Ok(Json(InterestResponse { total, schedule }))
}

async fn attack(Json(req): Json<AttackRequest>) -> ApiResult<Json<AttackResponse>> {
    blocking(move || {
        let reports = req
            .kinds
            .iter()
            .map(|&kind| {
                let scenario = build_scenario(kind, req.params)?;
                Ok(evaluate_attack_with(&scenario, req.iterations, &req.policy)?)
            })
            .collect::<ApiResult<Vec<_>>>()?;
        Ok(Json(AttackResponse { csv: attack_csv(&reports), reports }))
    })
    .await
}

async fn bench(Json(config): Json<BenchConfig>) -> ApiResult<Json<BenchResponse>> {
    blocking(move || {
        let rows = run_benchmark(&config)?;
        Ok(Json(BenchResponse { csv: bench_csv(&rows), rows }))
    })
    .await
}

fn summarize(l: &Ledger) -> LedgerSummary {
    LedgerSummary {
        height: l.height(),
        beacon: l.beacon(),
        supply: l.supply(),
        total_tokens: l.total_tokens(),
        fee_sink: l.fee_sink(),
        accounts: l.accounts().collect(),
        agreements: l.agreements().cloned().collect(),
        repayments: l.repayments().to_vec(),
    }
}

async fn summary(State(s): State<AppState>) -> Json<LedgerSummary> {
    Json(summarize(&s.ledger()))
}

async fn reset(State(s): State<AppState>, Json(config): Json<LedgerConfig>) -> ApiResult<Json<LedgerSummary>> {
    let fresh = Ledger::new(config)?;
    let mut l = s.ledger();
    *l = fresh;
    Ok(Json(summarize(&l)))
}

async fn get_snapshot(State(s): State<AppState>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], s.ledger().to_json())
}

async fn put_snapshot(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<LedgerSummary>> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::Validation(e.to_string()))?;
    let loaded = Ledger::from_json(text).map_err(|e| ApiError::Validation(format!("snapshot: {e}")))?;
    loaded.check_invariants().map_err(|e| ApiError::Validation(format!("snapshot: {e}")))?;
    let mut l = s.ledger();
    *l = loaded;
    Ok(Json(summarize(&l)))
}

async fn get_dump(State(s): State<AppState>) -> String {
    s.ledger().dump_text()
}

#[derive(Deserialize)]
struct DumpQuery {
    /// JSON-encoded ledger configuration; defaults otherwise.
    #[serde(default)]
    config: Option<String>,
}

async fn put_dump(State(s): State<AppState>, Query(q): Query<DumpQuery>, text: String) -> ApiResult<Json<LedgerSummary>> {
    let config = match q.config {
        Some(c) => serde_json::from_str(&c).map_err(|e| ApiError::Validation(format!("config: {e}")))?,
        None => s.ledger().config().to_owned(),
    };
    let loaded = Ledger::load_text(&text, config)?;
    let mut l = s.ledger();
    *l = loaded;
    Ok(Json(summarize(&l)))
}

async fn create_account(
    State(s): State<AppState>,
    Json(req): Json<CreateAccountRequest>,
) -> ApiResult<Json<overdraft_core::model::Account>> {
    let mut l = s.ledger();
    if let Some(r) = req.reputation {
        if !(0.0..=1.0).contains(&r) {
            return Err(ApiError::Validation(format!("reputation {r} outside [0, 1]")));
        }
    }
    let account = l.create_account(req.node, req.balance)?;
    if let Some(r) = req.reputation {
        l.set_reputation_baseline(req.node, r)?;
    }
    Ok(Json(l.account(account.node).unwrap_or(account)))
}

async fn open_loan(State(s): State<AppState>, Json(draft): Json<LoanDraft>) -> ApiResult<Json<OpenLoanResponse>> {
    let agreement_id = s.ledger().open_loan(&draft)?;
    Ok(Json(OpenLoanResponse { agreement_id }))
}

async fn close_loan(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<CloseOutcome>> {
    Ok(Json(s.ledger().close_loan(AgreementId(id))?))
}

async fn advance(State(s): State<AppState>, Json(req): Json<AdvanceRequest>) -> Json<AdvanceResponse> {
    let mut l = s.ledger();
    let events = l.advance_blocks(req.blocks);
    Json(AdvanceResponse { height: l.height(), events })
}

async fn settle(State(s): State<AppState>, Json(tx): Json<OfflineTransaction>) -> ApiResult<Json<SettlementReport>> {
    Ok(Json(s.ledger().settle_offline_transaction(&tx)?))
}

#[derive(Deserialize)]
struct ViewQuery {
    at: Option<u64>,
}

async fn view(State(s): State<AppState>, Query(q): Query<ViewQuery>) -> ApiResult<String> {
    let l = s.ledger();
    let at = q.at.unwrap_or(l.height());
    Ok(l.capture_view(at)?.to_text())
}

async fn events(State(s): State<AppState>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], to_json_lines(s.ledger().events()))
}

async fn reputation(State(s): State<AppState>) -> impl IntoResponse {
    let l = s.ledger();
    ([(header::CONTENT_TYPE, "text/csv")], l.reputation_csv())
}
