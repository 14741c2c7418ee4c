//! HTTP/JSON facade over [`meshannot_core::session`].
//!
//! Every session lives behind its own lock: mutations are serialised,
//! reads run concurrently and different sessions never contend. Heavy
//! calls run on the blocking pool under a server-side timeout.

mod error;

use std::collections::BTreeMap;
use std::io::Cursor;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{FromRequest, FromRequestParts, Request, State};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use meshannot_core::face::GestureKind;
use meshannot_core::mesh::{encode_indexed_png, load_mesh, AnnotationManifest, LabelClass};
use meshannot_core::session::{
    Action, AnnotationSession, RegionProposal, SessionParams, SessionSummary,
};
use meshannot_core::{ClassId, LabelTaxonomy};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorBody};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Mesh and export paths in requests are resolved below this directory.
    pub data_root: PathBuf,
    pub timeout: Duration,
    /// Static client assets served for unmatched GET paths.
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self { data_root: data_root.into(), timeout: DEFAULT_TIMEOUT, static_dir: None }
    }
}

type Shared = Arc<RwLock<AnnotationSession>>;

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<RwLock<BTreeMap<String, Shared>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self { config: Arc::new(config), sessions: Default::default(), next_id: Arc::new(AtomicU64::new(1)) }
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session {id}")))
    }

    /// Resolves a request path below the data root; absolute paths and
    /// `..` are rejected.
    fn resolve(&self, rel: &str) -> Result<PathBuf, ApiError> {
        let p = Path::new(rel);
        if rel.is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(ApiError::bad_request("invalid_path", format!("path must be relative to the data root: {rel}")));
        }
        Ok(self.config.data_root.join(p))
    }

    async fn blocking<R: Send + 'static>(
        &self,
        f: impl FnOnce() -> Result<R, ApiError> + Send + 'static,
    ) -> Result<R, ApiError> {
        match tokio::time::timeout(self.config.timeout, tokio::task::spawn_blocking(f)).await {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => Err(ApiError::internal(format!("worker failed: {e}"))),
            Err(_) => Err(ApiError::timeout()),
        }
    }

    async fn read<R: Send + 'static>(
        &self,
        id: &str,
        f: impl FnOnce(&AnnotationSession) -> Result<R, ApiError> + Send + 'static,
    ) -> Result<R, ApiError> {
        let s = self.session(id)?;
        self.blocking(move || f(&s.read().expect("session lock"))).await
    }

    async fn write<R: Send + 'static>(
        &self,
        id: &str,
        f: impl FnOnce(&mut AnnotationSession) -> Result<R, ApiError> + Send + 'static,
    ) -> Result<R, ApiError> {
        let s = self.session(id)?;
        self.blocking(move || f(&mut s.write().expect("session lock"))).await
    }
}

/// JSON body extractor answering malformed input with an [`ErrorBody`].
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|r| ApiError::bad_request("invalid_json", r.body_text()))
    }
}

pub struct ApiPath<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for ApiPath<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Path::<T>::from_request_parts(parts, state)
            .await
            .map(|axum::extract::Path(v)| ApiPath(v))
            .map_err(|r| ApiError::bad_request("invalid_path", r.body_text()))
    }
}

// ---- request and response bodies ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    /// Mesh file relative to the data root.
    pub mesh: String,
    #[serde(default)]
    pub params: Option<SessionParams>,
    /// Export directory (relative to the data root) to restore from.
    #[serde(default)]
    pub import: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: usize,
    pub faces: Vec<usize>,
    pub area: f64,
    pub normal: [f64; 3],
    pub centroid: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GestureRequest {
    pub polyline: Vec<[f64; 2]>,
    pub hit_faces: Vec<usize>,
    #[serde(default)]
    pub visible_faces: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GestureResponse {
    pub kind: GestureKind,
    pub ratio: f64,
    pub candidate_faces: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtrusionRequest {
    pub candidate_faces: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FacesResponse {
    pub faces: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentMatchRequest {
    pub template_segment: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub segment: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentMatches {
    pub matches: Vec<SegmentMatch>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtrusionMatchRequest {
    pub template_faces: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtrusionMatches {
    pub matches: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuperpixelOverlay {
    pub count: usize,
    /// Row-major superpixel id per texel, −1 where uncovered.
    pub labels: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanvasResponse {
    pub segment: usize,
    pub width: u32,
    pub height: u32,
    pub png_base64: String,
    pub superpixels: SuperpixelOverlay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpandRequest {
    pub texel: [u32; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionResponse {
    pub region: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineRequest {
    pub region: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineResponse {
    /// Canvas-sized 8-bit mask, 255 inside the refined region.
    pub mask_png_base64: String,
    pub region: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionMatchRequest {
    pub template_region: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionMatches {
    pub regions: Vec<RegionProposal>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VersionResponse {
    pub version: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsResponse {
    pub version: u64,
    pub faces: Vec<ClassId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskResponse {
    pub version: u64,
    pub page: usize,
    pub width: u32,
    pub height: u32,
    pub png_base64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportRequest {
    /// Directory relative to the data root.
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportResponse {
    pub dir: String,
    pub manifest: AnnotationManifest,
}

fn png_base64(img: image::DynamicImage) -> Result<String, ApiError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

// ---- handlers ----

async fn health() -> &'static str {
    "ok"
}

async fn taxonomy() -> Json<Vec<LabelClass>> {
    Json(LabelTaxonomy::urban().classes().to_vec())
}

async fn create_session(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<CreateSession>,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let mesh_path = app.resolve(&req.mesh)?;
    let import = req.import.as_deref().map(|d| app.resolve(d)).transpose()?;
    if import.is_some() && req.params.is_some() {
        return Err(ApiError::bad_request("invalid_payload", "params are restored from the import"));
    }
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::SeqCst));
    let sid = id.clone();
    // loading is I/O-bound, so the solver timeout does not apply
    let session = tokio::task::spawn_blocking(move || -> Result<AnnotationSession, ApiError> {
            let (mesh, _) = load_mesh(&mesh_path)?;
            let mesh = Arc::new(mesh);
            Ok(match import {
                Some(dir) => AnnotationSession::import(sid, mesh, &dir)?,
                None => AnnotationSession::new(sid, mesh, req.params.unwrap_or_default())?,
            })
        })
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
    let summary = session.summary();
    app.sessions.write().expect("session table").insert(id, Arc::new(RwLock::new(session)));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_session(State(app): State<AppState>, ApiPath(id): ApiPath<String>) -> Result<Json<SessionSummary>, ApiError> {
    app.read(&id, |s| Ok(s.summary())).await.map(Json)
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<String>> {
    Json(app.sessions.read().expect("session table").keys().cloned().collect())
}

async fn segments(State(app): State<AppState>, ApiPath(id): ApiPath<String>) -> Result<Json<Vec<SegmentInfo>>, ApiError> {
    app.read(&id, |s| {
        Ok(s.segmentation()
            .segments
            .iter()
            .map(|g| SegmentInfo {
                id: g.id,
                faces: g.faces.clone(),
                area: g.area,
                normal: g.plane.normal.into(),
                centroid: g.centroid.into(),
            })
            .collect())
    })
    .await
    .map(Json)
}

async fn labels(State(app): State<AppState>, ApiPath(id): ApiPath<String>) -> Result<Json<LabelsResponse>, ApiError> {
    app.read(&id, |s| Ok(LabelsResponse { version: s.version(), faces: s.face_labels().labels.clone() })).await.map(Json)
}

async fn mask(
    State(app): State<AppState>,
    ApiPath((id, page)): ApiPath<(String, usize)>,
) -> Result<Json<MaskResponse>, ApiError> {
    app.read(&id, move |s| {
        let raster = s
            .masks()
            .pages
            .get(page)
            .ok_or_else(|| ApiError::not_found("unknown_page", format!("no page {page}")))?;
        let png = encode_indexed_png(raster, &s.taxonomy().palette())?;
        Ok(MaskResponse {
            version: s.version(),
            page,
            width: raster.width,
            height: raster.height,
            png_base64: base64::engine::general_purpose::STANDARD.encode(png),
        })
    })
    .await
    .map(Json)
}

async fn gesture(
    State(app): State<AppState>,
    ApiPath(id): ApiPath<String>,
    ApiJson(req): ApiJson<GestureRequest>,
) -> Result<Json<GestureResponse>, ApiError> {
    app.read(&id, move |s| {
        let g = s.gesture(req.polyline, req.hit_faces, req.visible_faces)?;
        Ok(GestureResponse { kind: g.kind, ratio: g.ratio, candidate_faces: g.candidate_faces })
    })
    .await
    .map(Json)
}

async fn protrusions(
    State(app): State<AppState>,
    ApiPath(id): ApiPath<String>,
    ApiJson(req): ApiJson<ProtrusionRequest>,
) -> Result<Json<FacesResponse>, ApiError> {
    app.read(&id, move |s| Ok(FacesResponse { faces: s.extract(&req.candidate_faces)? })).await.map(Json)
}

async fn match_segments(
    State(app): State<AppState>,
    ApiPath(id): ApiPath<String>,
    ApiJson(req): ApiJson<SegmentMatchRequest>,
) -> Result<Json<SegmentMatches>, ApiError> {
    app.read(&id, move |s| {
        let matches = s
            .match_segments(req.template_segment)?
            .into_iter()
            .map(|(segment, norm)| SegmentMatch { segment, norm })
            .collect();
        Ok(SegmentMatches { matches })
    })
    .await
    .map(Json)
}

async fn match_protrusions(
    State(app): State<AppState>,
    ApiPath(id): ApiPath<String>,
    ApiJson(req): ApiJson<ProtrusionMatchRequest>,
) -> Result<Json<ProtrusionMatches>, ApiError> {
    app.read(&id, move |s| {
        Ok(ProtrusionMatches { matches: s.match_protrusions(&req.template_faces)?.into_iter().map(|m| m.faces).collect() })
    })
    .await
    .map(Json)
}

async fn canvas(
    State(app): State<AppState>,
    ApiPath((id, sid)): ApiPath<(String, usize)>,
) -> Result<Json<CanvasResponse>, ApiError> {
    app.read(&id, move |s| {
        let c = s.canvas(sid)?;
        let (w, h) = (c.canvas.width(), c.canvas.height());
        let mut labels = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                labels.push(c.superpixels.label(x, y).map_or(-1, |l| l as i64));
            }
        }
        Ok(CanvasResponse {
            segment: sid,
            width: w,
            height: h,
            png_base64: png_base64(c.canvas.image.clone().into())?,
            superpixels: SuperpixelOverlay { count: c.superpixels.len(), labels },
        })
    })
    .await
    .map(Json)
}

async fn expand(
    State(app): State<AppState>,
    ApiPath((id, sid)): ApiPath<(String, usize)>,
    ApiJson(req): ApiJson<ExpandRequest>,
) -> Result<Json<RegionResponse>, ApiError> {
    app.read(&id, move |s| Ok(RegionResponse { region: s.expand(sid, req.texel)? })).await.map(Json)
}

async fn refine(
    State(app): State<AppState>,
    ApiPath((id, sid)): ApiPath<(String, usize)>,
    ApiJson(req): ApiJson<RefineRequest>,
) -> Result<Json<RefineResponse>, ApiError> {
    app.read(&id, move |s| {
        let region = s.refine(sid, &req.region)?;
        let c = s.canvas(sid)?;
        let mut mask = image::GrayImage::new(c.canvas.width(), c.canvas.height());
        for p in &region {
            mask.put_pixel(p[0], p[1], image::Luma([255]));
        }
        Ok(RefineResponse { mask_png_base64: png_base64(mask.into())?, region })
    })
    .await
    .map(Json)
}

async fn match_regions(
    State(app): State<AppState>,
    ApiPath((id, sid)): ApiPath<(String, usize)>,
    ApiJson(req): ApiJson<RegionMatchRequest>,
) -> Result<Json<RegionMatches>, ApiError> {
    app.read(&id, move |s| Ok(RegionMatches { regions: s.match_regions(sid, &req.template_region)? })).await.map(Json)
}

async fn actions(
    State(app): State<AppState>,
    ApiPath(id): ApiPath<String>,
    ApiJson(action): ApiJson<Action>,
) -> Result<Json<VersionResponse>, ApiError> {
    app.write(&id, move |s| Ok(VersionResponse { version: s.apply(&action)? })).await.map(Json)
}

async fn undo(State(app): State<AppState>, ApiPath(id): ApiPath<String>) -> Result<Json<VersionResponse>, ApiError> {
    app.write(&id, |s| Ok(VersionResponse { version: s.undo()? })).await.map(Json)
}

async fn redo(State(app): State<AppState>, ApiPath(id): ApiPath<String>) -> Result<Json<VersionResponse>, ApiError> {
    app.write(&id, |s| Ok(VersionResponse { version: s.redo()? })).await.map(Json)
}

async fn export(
    State(app): State<AppState>,
    ApiPath(id): ApiPath<String>,
    ApiJson(req): ApiJson<ExportRequest>,
) -> Result<Json<ExportResponse>, ApiError> {
    let dir = app.resolve(&req.dir)?;
    app.read(&id, move |s| Ok(ExportResponse { dir: req.dir, manifest: s.export(&dir)? })).await.map(Json)
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/health", get(health))
        .route("/taxonomy", get(taxonomy))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/segments", get(segments))
        .route("/sessions/{id}/labels", get(labels))
        .route("/sessions/{id}/masks/{page}", get(mask))
        .route("/sessions/{id}/gesture", post(gesture))
        .route("/sessions/{id}/protrusions", post(protrusions))
        .route("/sessions/{id}/match/segments", post(match_segments))
        .route("/sessions/{id}/match/protrusions", post(match_protrusions))
        .route("/sessions/{id}/segments/{sid}/canvas", get(canvas))
        .route("/sessions/{id}/segments/{sid}/expand", post(expand))
        .route("/sessions/{id}/segments/{sid}/refine", post(refine))
        .route("/sessions/{id}/segments/{sid}/match/regions", post(match_regions))
        .route("/sessions/{id}/actions", post(actions))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/redo", post(redo))
        .route("/sessions/{id}/export", post(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves the API until ctrl-c.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
