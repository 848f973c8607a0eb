//! HTTP service for interactive exploration.
//!
//! A session holds one symbolized dataset with its attention stacks and the
//! GCR models built from it. Every mutation bumps the session version.
//! LAMAs are computed lazily and cached per `(sample, combo)`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tsattn_core::attention::aggregate_lava;
use tsattn_core::attention::bundle::{Bundle, Manifest};
use tsattn_core::dataset::{parse_rows, Label, Split};
use tsattn_core::fixtures::{self, FixtureKind};
use tsattn_core::gcr::{certainty_curve, heatmap_json, GcrError, GcrModel, GcrVariant, MembershipResult, TrainSample};
use tsattn_core::lasa::{abstract_series, interpolate, resolve_thresholds, Thresholds, ValidationSeries};
use tsattn_core::metrics::ComplexityReport;
use tsattn_core::{Abstraction, AttentionStack, ComboTag, Lama, RawDataset, SaxCodec, SymbolizedSeries, ThresholdSpec};
use uuid::Uuid;

use crate::config::{AttentionSource, WeightInit};
use crate::error::{Failure, Stage};
use crate::pipeline::abstraction_complexity;
use crate::prepare;

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: String,
    pub stage: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            stage: None,
        }
    }

    fn bad_request(error: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error)
    }

    fn not_found(error: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error)
    }

    fn from_failure(stage: Stage, failure: Failure) -> Self {
        let status = match &failure {
            Failure::Gcr(GcrError::UnfinalizedModel | GcrError::AlreadyFinalized) => StatusCode::CONFLICT,
            Failure::Gcr(GcrError::UnknownClass(_)) | Failure::UnknownSample(_) | Failure::MissingStack(_) => StatusCode::NOT_FOUND,
            Failure::Io(..) => StatusCode::INTERNAL_SERVER_ERROR,
            _ if stage == Stage::Report => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self {
            status,
            error: failure.to_string(),
            stage: Some(stage.as_str()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

trait ApiStage<T> {
    fn api(self, stage: Stage) -> Result<T, ApiError>;
}

impl<T, E: Into<Failure>> ApiStage<T> for Result<T, E> {
    fn api(self, stage: Stage) -> Result<T, ApiError> {
        self.map_err(|e| ApiError::from_failure(stage, e.into()))
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct StoredModel {
    combo: ComboTag,
    model: GcrModel,
}

pub struct Session {
    version: u64,
    codec: SaxCodec,
    series: Vec<SymbolizedSeries>,
    splits: Vec<Split>,
    index: HashMap<String, usize>,
    stacks: Vec<AttentionStack>,
    lama_cache: Mutex<HashMap<(usize, ComboTag), Arc<Lama>>>,
    models: BTreeMap<String, StoredModel>,
}

impl Session {
    fn sample(&self, id: &str) -> ApiResult<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| ApiError::not_found(format!("unknown sample {id}")))
    }

    fn lama(&self, sample: usize, combo: ComboTag) -> Arc<Lama> {
        let key = (sample, combo.lama_part());
        if let Some(hit) = self.lama_cache.lock().get(&key) {
            debug_assert!(
                **hit == tsattn_core::attention::aggregate_lama(&self.stacks[sample], key.1),
                "stale LAMA cache entry"
            );
            return hit.clone();
        }
        let lama = Arc::new(tsattn_core::attention::aggregate_lama(&self.stacks[sample], key.1));
        self.lama_cache.lock().insert(key, lama.clone());
        lama
    }

    fn model(&self, variant: &str) -> ApiResult<&StoredModel> {
        let variant = canonical_variant(variant)?;
        self.models
            .get(&variant)
            .ok_or_else(|| ApiError::not_found(format!("no model for variant {variant}")))
    }

    fn test_indices(&self) -> Vec<usize> {
        (0..self.series.len()).filter(|&k| self.splits[k] == Split::Test).collect()
    }
}

fn canonical_variant(text: &str) -> ApiResult<String> {
    text.parse::<GcrVariant>()
        .map(|v| v.to_string())
        .map_err(|e| ApiError::bad_request(e.to_string()))
}

fn parse_combo(text: &str) -> ApiResult<ComboTag> {
    text.parse::<ComboTag>().map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<Uuid, Arc<RwLock<Session>>>>,
}

type Shared = Arc<AppState>;

impl AppState {
    fn session(&self, id: &str) -> ApiResult<Arc<RwLock<Session>>> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found(format!("unknown session {id}")))?;
        self.sessions
            .read()
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
    }
}

pub fn router() -> Router {
    router_with(Arc::new(AppState::default()))
}

pub fn router_with(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/samples", get(list_samples))
        .route("/sessions/{id}/samples/{sid}/lama", get(get_lama))
        .route("/sessions/{id}/samples/{sid}/lava", get(get_lava))
        .route("/sessions/{id}/lasa", post(run_lasa))
        .route("/sessions/{id}/gcr", post(build_gcr))
        .route("/sessions/{id}/gcr/{variant}/finalize", post(finalize_gcr))
        .route("/sessions/{id}/gcr/{variant}/heatmap", get(get_heatmap))
        .route("/sessions/{id}/gcr/{variant}/classify", post(classify))
        .route("/sessions/{id}/certainty-curve", get(get_certainty_curve))
        .with_state(state)
}

pub async fn serve(addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router()).await
}

#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetRequest {
    Fixture {
        fixture: FixtureKind,
        #[serde(default)]
        seed: u64,
    },
    /// Label-first CSV/TSV rows.
    Inline { train: String, #[serde(default)] test: Option<String> },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttentionRequest {
    Uniform,
    Forward {
        layers: usize,
        heads: usize,
        d_model: usize,
        d_k: usize,
        init: WeightInit,
        #[serde(default = "yes")]
        use_pe: bool,
        #[serde(default)]
        seed: u64,
    },
    Bundle { manifest: Manifest, payload_base64: String },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub dataset: DatasetRequest,
    #[serde(default = "default_symbols")]
    pub symbol_count: usize,
    pub attention: AttentionRequest,
}

fn default_symbols() -> usize {
    7
}

#[derive(Debug, Serialize)]
struct SampleInfo<'a> {
    id: &'a str,
    label: Label,
    split: Split,
}

fn session_summary(id: &str, s: &Session) -> Value {
    let classes: std::collections::BTreeSet<Label> = s.series.iter().map(|x| x.label).collect();
    json!({
        "session_id": id,
        "version": s.version,
        "sample_count": s.series.len(),
        "n": s.series.first().map_or(0, SymbolizedSeries::len),
        "classes": classes,
        "codec": s.codec,
        "models": s.models.iter().map(|(k, m)| json!({
            "variant": k,
            "combo": m.combo,
            "finalized": m.model.is_finalized(),
        })).collect::<Vec<_>>(),
    })
}

fn load_session(req: CreateSession) -> ApiResult<Session> {
    let dataset = match req.dataset {
        DatasetRequest::Fixture { fixture, seed } => fixtures::generate(&fixture, seed).api(Stage::Dataset)?,
        DatasetRequest::Inline { train, test } => {
            let train = parse_rows(&train).api(Stage::Dataset)?;
            let test = test.as_deref().map(parse_rows).transpose().api(Stage::Dataset)?.unwrap_or_default();
            RawDataset::from_splits(train, test).api(Stage::Dataset)?
        }
    };
    if req.symbol_count < 2 {
        return Err(ApiError::bad_request("symbol_count must be >= 2"));
    }
    let (codec, series) = prepare::symbolize(&dataset, req.symbol_count).api(Stage::Symbolize)?;
    let stacks = match req.attention {
        AttentionRequest::Uniform => prepare::stacks_for(&series, &AttentionSource::uniform(), 0),
        AttentionRequest::Forward {
            layers,
            heads,
            d_model,
            d_k,
            init,
            use_pe,
            seed,
        } => {
            if d_model < 2 || d_model % 2 == 1 || layers == 0 || heads == 0 || d_k == 0 {
                return Err(ApiError::bad_request("forward attention needs positive sizes and an even d_model"));
            }
            let source = AttentionSource::Forward {
                layers,
                heads,
                d_model,
                d_k,
                init,
                use_pe,
            };
            prepare::stacks_for(&series, &source, seed)
        }
        AttentionRequest::Bundle { manifest, payload_base64 } => {
            let payload = base64::engine::general_purpose::STANDARD
                .decode(payload_base64.as_bytes())
                .map_err(|e| ApiError::bad_request(format!("payload is not base64: {e}")))?;
            Bundle::decode(manifest, &payload)
                .map_err(Failure::from)
                .and_then(|b| prepare::align_bundle(b, &series))
        }
    }
    .api(Stage::Attention)?;
    let splits = dataset.samples().iter().map(|s| s.split).collect();
    let index = series.iter().enumerate().map(|(k, x)| (x.id.clone(), k)).collect();
    Ok(Session {
        version: 1,
        codec,
        series,
        splits,
        index,
        stacks,
        lama_cache: Mutex::new(HashMap::new()),
        models: BTreeMap::new(),
    })
}

async fn create_session(State(state): State<Shared>, Json(req): Json<CreateSession>) -> ApiResult<(StatusCode, Json<Value>)> {
    let session = tokio::task::spawn_blocking(move || load_session(req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let id = Uuid::new_v4();
    let body = session_summary(&id.to_string(), &session);
    state.sessions.write().insert(id, Arc::new(RwLock::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn session_info(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let s = session.read();
    Ok(Json(session_summary(&id, &s)))
}

async fn list_samples(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let s = session.read();
    let samples: Vec<SampleInfo<'_>> = s
        .series
        .iter()
        .zip(&s.splits)
        .map(|(x, &split)| SampleInfo {
            id: &x.id,
            label: x.label,
            split,
        })
        .collect();
    Ok(Json(json!({ "version": s.version, "samples": samples })))
}

#[derive(Debug, Deserialize)]
struct ComboQuery {
    combo: String,
    step3: Option<String>,
}

async fn get_lama(
    State(state): State<Shared>,
    Path((id, sid)): Path<(String, String)>,
    Query(q): Query<ComboQuery>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let s = session.read();
    let k = s.sample(&sid)?;
    let combo = parse_combo(&q.combo)?;
    if combo.step3.is_some() {
        return Err(ApiError::bad_request("LAMA combos have two steps"));
    }
    let lama = s.lama(k, combo);
    let rows: Vec<Vec<f64>> = lama.matrix.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok(Json(json!({
        "version": s.version,
        "sample_id": sid,
        "combo": combo,
        "n": lama.n(),
        "matrix": rows,
    })))
}

fn lava_combo(combo: &str, step3: Option<&str>) -> ApiResult<ComboTag> {
    let combo = parse_combo(combo)?;
    match (combo.step3, step3) {
        (Some(_), None) => Ok(combo),
        (None, Some(step)) => {
            let step = step.parse().map_err(|_| ApiError::bad_request(format!("unknown reduction {step:?}")))?;
            Ok(combo.with_step3(step))
        }
        (None, None) => Err(ApiError::bad_request("LAVA needs a third reduction step")),
        (Some(_), Some(_)) => Err(ApiError::bad_request("step3 given twice")),
    }
}

async fn get_lava(
    State(state): State<Shared>,
    Path((id, sid)): Path<(String, String)>,
    Query(q): Query<ComboQuery>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let s = session.read();
    let k = s.sample(&sid)?;
    let combo = lava_combo(&q.combo, q.step3.as_deref())?;
    let lava = aggregate_lava(&s.lama(k, combo), combo.step3.expect("checked"));
    Ok(Json(json!({
        "version": s.version,
        "sample_id": sid,
        "combo": combo,
        "vector": lava.vector,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LasaRequest {
    pub sample_id: String,
    /// LAVA combo (`hl-msm`); ignored when `lava` is given.
    #[serde(default)]
    pub combo: Option<String>,
    /// Threshold spec resolved against the LAVA.
    #[serde(default)]
    pub threshold: Option<ThresholdSpec>,
    /// Explicit cut values; takes precedence over `threshold`.
    #[serde(default)]
    pub cuts: Option<Thresholds>,
    /// Per-position attention supplied by the caller instead of the session.
    #[serde(default)]
    pub lava: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct LasaResponse {
    version: u64,
    abstraction: Abstraction,
    complexity: Option<ComplexityReport>,
    validation: ValidationSeries,
}

async fn run_lasa(State(state): State<Shared>, Path(id): Path<String>, Json(req): Json<LasaRequest>) -> ApiResult<Json<LasaResponse>> {
    let session = state.session(&id)?;
    let s = session.read();
    let k = s.sample(&req.sample_id)?;
    let x = &s.series[k];
    let (vector, combo) = match (req.lava, req.combo.as_deref()) {
        (Some(v), _) => (v, None),
        (None, Some(c)) => {
            let combo = lava_combo(c, None)?;
            (aggregate_lava(&s.lama(k, combo), combo.step3.expect("checked")).vector, Some(combo))
        }
        (None, None) => return Err(ApiError::bad_request("give either combo or lava")),
    };
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::bad_request("lava values must be finite"));
    }
    let thresholds = match (req.cuts, req.threshold) {
        (Some(t), _) => t,
        (None, Some(spec)) => resolve_thresholds(&vector, &spec).api(Stage::Lasa)?,
        (None, None) => return Err(ApiError::bad_request("give either threshold or cuts")),
    };
    let mut abstraction = abstract_series(x, &vector, thresholds).api(Stage::Lasa)?;
    abstraction.combo = combo;
    let complexity = abstraction_complexity(&abstraction);
    let validation = interpolate(&abstraction, x.len());
    Ok(Json(LasaResponse {
        version: s.version,
        abstraction,
        complexity,
        validation,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcrRequest {
    pub combo: String,
    pub variants: Vec<GcrVariant>,
    #[serde(default = "yes")]
    pub finalize: bool,
}

fn build_models(s: &Session, combo: ComboTag, variants: &[GcrVariant], finalize: bool) -> ApiResult<Vec<GcrModel>> {
    let train: Vec<usize> = (0..s.series.len()).filter(|&k| s.splits[k] == Split::Train).collect();
    let lamas: Vec<Arc<Lama>> = train.iter().map(|&k| s.lama(k, combo)).collect();
    let samples: Vec<TrainSample<'_>> = train
        .iter()
        .zip(&lamas)
        .map(|(&k, l)| TrainSample {
            series: &s.series[k],
            lama: &l.matrix,
        })
        .collect();
    variants
        .iter()
        .map(|&variant| {
            if finalize {
                return tsattn_core::gcr::build(&samples, variant, s.codec.symbol_count).api(Stage::GcrBuild);
            }
            let mut counts = BTreeMap::new();
            let (mut total, mut entries) = (0.0, 0usize);
            for t in &samples {
                *counts.entry(t.series.label).or_insert(0) += 1;
                total += t.lama.sum();
                entries += t.lama.len();
            }
            let n = s.series.first().map_or(0, SymbolizedSeries::len);
            let mean = if entries > 0 { total / entries as f64 } else { 0.0 };
            let mut model = GcrModel::new(variant, s.codec.symbol_count, n, &counts, mean).api(Stage::GcrBuild)?;
            for t in &samples {
                model.add_sample(t.series, t.lama).api(Stage::GcrBuild)?;
            }
            Ok(model)
        })
        .collect()
}

async fn build_gcr(State(state): State<Shared>, Path(id): Path<String>, Json(req): Json<GcrRequest>) -> ApiResult<Json<Value>> {
    let combo = parse_combo(&req.combo)?.lama_part();
    if req.variants.is_empty() {
        return Err(ApiError::bad_request("no variants requested"));
    }
    let session = state.session(&id)?;
    let built = {
        let s = session.read();
        build_models(&s, combo, &req.variants, req.finalize)?
    };
    let mut s = session.write();
    let mut out = Vec::new();
    for model in built {
        let key = model.variant().to_string();
        out.push(json!({ "variant": key, "finalized": model.is_finalized(), "classes": model.classes() }));
        s.models.insert(key, StoredModel { combo, model });
    }
    s.version += 1;
    Ok(Json(json!({ "version": s.version, "combo": combo, "models": out })))
}

async fn finalize_gcr(State(state): State<Shared>, Path((id, variant)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let session = state.session(&id)?;
    let mut s = session.write();
    let key = canonical_variant(&variant)?;
    let stored = s
        .models
        .get_mut(&key)
        .ok_or_else(|| ApiError::not_found(format!("no model for variant {key}")))?;
    if stored.model.is_finalized() {
        return Err(ApiError::from_failure(Stage::GcrBuild, GcrError::AlreadyFinalized.into()));
    }
    stored.model.finalize();
    s.version += 1;
    Ok(Json(json!({ "version": s.version, "variant": key, "finalized": true })))
}

#[derive(Debug, Deserialize)]
struct ClassQuery {
    class: Label,
}

async fn get_heatmap(
    State(state): State<Shared>,
    Path((id, variant)): Path<(String, String)>,
    Query(q): Query<ClassQuery>,
) -> ApiResult<Response> {
    let session = state.session(&id)?;
    let s = session.read();
    let stored = s.model(&variant)?;
    let text = heatmap_json(&stored.model, q.class).api(Stage::Report)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    /// Defaults to every test sample.
    #[serde(default)]
    pub sample_ids: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct Classified {
    sample_id: String,
    gold: Label,
    #[serde(flatten)]
    result: MembershipResult,
}

fn classify_indices(s: &Session, stored: &StoredModel, indices: &[usize]) -> ApiResult<Vec<MembershipResult>> {
    if indices.is_empty() {
        return Err(ApiError::from_failure(
            Stage::Classify,
            Failure::EmptyBatch("no samples to classify".into()),
        ));
    }
    indices
        .iter()
        .map(|&k| stored.model.classify(&s.series[k].symbols).api(Stage::Classify))
        .collect()
}

async fn classify(
    State(state): State<Shared>,
    Path((id, variant)): Path<(String, String)>,
    body: Option<Json<ClassifyRequest>>,
) -> ApiResult<Json<Value>> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let session = state.session(&id)?;
    let s = session.read();
    let stored = s.model(&variant)?;
    let indices = match &req.sample_ids {
        Some(ids) => ids.iter().map(|i| s.sample(i)).collect::<ApiResult<Vec<_>>>()?,
        None => s.test_indices(),
    };
    let results = classify_indices(&s, stored, &indices)?;
    let correct = indices
        .iter()
        .zip(&results)
        .filter(|(&k, r)| s.series[k].label == r.predicted)
        .count();
    let rows: Vec<Classified> = indices
        .iter()
        .zip(results)
        .map(|(&k, result)| Classified {
            sample_id: s.series[k].id.clone(),
            gold: s.series[k].label,
            result,
        })
        .collect();
    Ok(Json(json!({
        "version": s.version,
        "variant": stored.model.variant(),
        "accuracy": correct as f64 / rows.len() as f64,
        "results": rows,
    })))
}

#[derive(Debug, Deserialize)]
struct CurveQuery {
    variant: String,
    steps: Option<String>,
}

async fn get_certainty_curve(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<CurveQuery>,
) -> ApiResult<Json<Value>> {
    let steps: Vec<u32> = match &q.steps {
        None => tsattn_core::gcr::DEFAULT_CERTAINTY_STEPS.to_vec(),
        Some(text) => text
            .split(',')
            .map(|p| p.trim().parse::<u32>().ok().filter(|v| (1..=100).contains(v)))
            .collect::<Option<_>>()
            .ok_or_else(|| ApiError::bad_request(format!("steps must be percentages in 1..=100, got {text:?}")))?,
    };
    let session = state.session(&id)?;
    let s = session.read();
    let stored = s.model(&q.variant)?;
    let indices = s.test_indices();
    let results = classify_indices(&s, stored, &indices)?;
    let gold: Vec<Label> = indices.iter().map(|&k| s.series[k].label).collect();
    let curve = certainty_curve(&results, &gold, &steps).api(Stage::Metrics)?;
    Ok(Json(json!({
        "version": s.version,
        "variant": stored.model.variant(),
        "curve": curve,
    })))
}
