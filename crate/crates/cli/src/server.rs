use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use tower_http::services::ServeDir;
use xwacoda_core::model::WarehouseModel;
use xwacoda_core::query::QueryError;
use xwacoda_core::store::{load_warehouse, WarehouseStore};
use xwacoda_core::{build_cube, run_query, Cube, CubeError, CubeSpec};

use crate::model_path;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Warehouse directory or model document.
    pub root: PathBuf,
    pub bind: SocketAddr,
    /// The store is never written; kept explicit for configuration dumps.
    pub read_only: bool,
    /// Appends one line per request when set.
    pub request_log: Option<PathBuf>,
    /// Static explorer assets served under `/`.
    pub static_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>, bind: SocketAddr) -> Self {
        Self {
            root: root.into(),
            bind,
            read_only: true,
            request_log: None,
            static_dir: None,
        }
    }
}

/// Shared by all handlers; the store is immutable once loaded.
pub struct AppState {
    pub store: WarehouseStore,
    request_log: Option<Mutex<File>>,
}

impl AppState {
    pub fn new(store: WarehouseStore) -> Self {
        Self {
            store,
            request_log: None,
        }
    }

    pub fn with_request_log(mut self, file: File) -> Self {
        self.request_log = Some(Mutex::new(file));
        self
    }
}

/// Error body: `{"error": {"code", "message", "position"?}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    position: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            position: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(p) = self.position {
            error["position"] = json!(p);
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        CubeError::Query(e).into()
    }
}

impl From<CubeError> for ApiError {
    fn from(e: CubeError) -> Self {
        let code = e.code();
        let position = match &e {
            CubeError::Query(QueryError::Syntax(s)) => Some(s.position),
            _ => None,
        };
        let status = match code {
            "SYNTAX_ERROR" => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self {
            status,
            code,
            message: e.to_string(),
            position,
        }
    }
}

/// JSON bodies: unparseable text is a 400, well-formed JSON of the wrong
/// shape a 422.
fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "VALIDATION_ERROR", e.to_string()),
        _ => ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.to_string()),
    })
}

#[derive(Serialize)]
struct ModelBody<'a> {
    #[serde(flatten)]
    model: &'a WarehouseModel,
    fact_count: usize,
    member_count: usize,
}

async fn get_model(State(state): State<Arc<AppState>>) -> Json<JsonValue> {
    let body = ModelBody {
        model: state.store.model(),
        fact_count: state.store.fact_count(),
        member_count: state.store.member_count(),
    };
    Json(serde_json::to_value(body).expect("model serializes"))
}

async fn post_query(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", format!("query is not UTF-8: {e}")))?;
    let table = run_query(&state.store, text)?;
    Ok(Json(serde_json::to_value(table).expect("table serializes")))
}

fn cube_json(c: &Cube) -> Json<JsonValue> {
    Json(serde_json::to_value(c).expect("cube serializes"))
}

async fn post_cube(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let spec: CubeSpec = parse_json(&body)?;
    Ok(cube_json(&build_cube(&state.store, &spec)?))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CubeOp {
    RollUp,
    DrillDown,
    Slice,
    Dice,
}

/// `{spec, op, dimension?, member?, members?}`; `members` maps dimensions to
/// kept member ids for `dice`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CubeOpRequest {
    spec: CubeSpec,
    op: CubeOp,
    #[serde(default)]
    dimension: Option<String>,
    #[serde(default)]
    member: Option<String>,
    #[serde(default)]
    members: BTreeMap<String, BTreeSet<String>>,
}

async fn post_cube_op(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<JsonValue>, ApiError> {
    let req: CubeOpRequest = parse_json(&body)?;
    let missing = |what: &str| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "VALIDATION_ERROR", format!("{what} is required"));
    let cube = build_cube(&state.store, &req.spec)?;
    let result = match req.op {
        CubeOp::RollUp => cube.roll_up(req.dimension.as_deref().ok_or_else(|| missing("dimension"))?, &state.store)?,
        CubeOp::DrillDown => cube.drill_down(req.dimension.as_deref().ok_or_else(|| missing("dimension"))?, &state.store)?,
        CubeOp::Slice => cube.slice(
            req.dimension.as_deref().ok_or_else(|| missing("dimension"))?,
            req.member.as_deref().ok_or_else(|| missing("member"))?,
        )?,
        CubeOp::Dice => cube.dice(&req.members)?,
    };
    Ok(cube_json(&result))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such resource")
}

async fn log_request(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let (method, path) = (request.method().clone(), request.uri().path().to_string());
    let start = Instant::now();
    let response = next.run(request).await;
    if let Some(log) = &state.request_log {
        let line = format!("{method} {path} {} {}us\n", response.status().as_u16(), start.elapsed().as_micros());
        if let Ok(mut f) = log.lock() {
            let _ = f.write_all(line.as_bytes());
        }
    }
    response
}

/// Routes under `/api`; everything else comes from `static_dir` or is a 404.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/model", get(get_model))
        .route("/query", post(post_query))
        .route("/cube", post(post_cube))
        .route("/cube/op", post(post_cube_op))
        .fallback(not_found);
    let app = Router::new().nest("/api", api);
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(not_found),
    };
    app.layer(middleware::from_fn_with_state(state.clone(), log_request))
        .with_state(state)
}

/// Loads the warehouse once and serves until interrupted.
pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let store = load_warehouse(&model_path(&config.root))?;
    let mut state = AppState::new(store);
    if let Some(path) = &config.request_log {
        state = state.with_request_log(OpenOptions::new().create(true).append(true).open(path)?);
    }
    let app = router(Arc::new(state), config.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    eprintln!("serving {} on http://{}", config.root.display(), listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use xwacoda_core::query::parse_query;

    #[test]
    fn syntax_errors_are_400_with_position() {
        let e: ApiError = QueryError::from(parse_query("FROM").unwrap_err()).into();
        assert_eq!((e.status, e.code), (StatusCode::BAD_REQUEST, "SYNTAX_ERROR"));
        assert_eq!(e.position, Some(4));
    }

    #[test]
    fn semantic_errors_are_422() {
        let e: ApiError = QueryError::Validation("unknown measure".into()).into();
        assert_eq!((e.status, e.code), (StatusCode::UNPROCESSABLE_ENTITY, "VALIDATION_ERROR"));
        let e: ApiError = CubeError::AlreadyCoarsest { dimension: "D".into() }.into();
        assert_eq!((e.status, e.code), (StatusCode::UNPROCESSABLE_ENTITY, "ALREADY_COARSEST"));
    }

    #[test]
    fn json_shape_errors_are_422_and_garbage_is_400() {
        assert_eq!(parse_json::<CubeSpec>(b"{").unwrap_err().status, StatusCode::BAD_REQUEST);
        assert_eq!(parse_json::<CubeSpec>(b"{\"axes\": 1}").unwrap_err().status, StatusCode::UNPROCESSABLE_ENTITY);
    }
}
