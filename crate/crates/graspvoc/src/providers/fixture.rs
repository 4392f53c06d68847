//! Deterministic file-backed provider.
//!
//! Requests are canonicalized (sorted-key compact JSON), digested with
//! SHA-256, and looked up under `fixtures/<capability>/<digest>.json`. The
//! lookup is a pure function of the request, so identical pipelines replay
//! identically. Recorded live sessions become replayable CI fixtures via
//! [`FixtureStore`], which also writes a human-readable request sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{
    parse, AssignmentRequest, CandidateLabelRequest, ConditioningRequest, ConditioningResponse,
    ProviderError, SegmentRequest, Segmenter, TaskConditioner, VisionLabeler,
};
use crate::viewrender::{decode_masks, Mask2D, MaskFile};

/// Capability directory names under the fixture root.
pub const SEGMENT_DIR: &str = "segment";
pub const CANDIDATE_DIR: &str = "candidate_labels";
pub const ASSIGN_DIR: &str = "assign_labels";
pub const CONDITION_DIR: &str = "condition";

/// Hex SHA-256 of the canonical request JSON. serde_json orders object keys
/// (BTreeMap-backed), so the digest is stable across processes.
pub fn request_digest(canonical: &serde_json::Value) -> String {
    let text = serde_json::to_string(canonical).expect("request serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Assistant-text fixture payload for the language/vision calls.
#[derive(Debug, Deserialize)]
struct ContentFixture {
    content: String,
}

/// Replays recorded responses; never retries, never re-prompts.
pub struct FixtureProvider {
    dir: PathBuf,
}

impl FixtureProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(ProviderError::Config(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }

    fn lookup(&self, kind: &str, canonical: &serde_json::Value) -> Result<String, ProviderError> {
        let digest = request_digest(canonical);
        let path = self.dir.join(kind).join(format!("{digest}.json"));
        fs::read_to_string(&path).map_err(|_| {
            ProviderError::Unavailable(format!(
                "no recorded {kind} response for request {digest} under {}",
                self.dir.display()
            ))
        })
    }

    fn lookup_content(
        &self,
        kind: &str,
        canonical: &serde_json::Value,
    ) -> Result<String, ProviderError> {
        let raw = self.lookup(kind, canonical)?;
        let fixture: ContentFixture = serde_json::from_str(&raw).map_err(|e| {
            ProviderError::MalformedResponse(format!("fixture {kind} is not {{\"content\"}}: {e}"))
        })?;
        Ok(fixture.content)
    }
}

impl Segmenter for FixtureProvider {
    fn segment(&self, req: &SegmentRequest) -> Result<Vec<Mask2D>, ProviderError> {
        let raw = self.lookup(SEGMENT_DIR, &req.canonical_value())?;
        let file: MaskFile = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::MalformedResponse(format!("bad mask fixture: {e}")))?;
        decode_masks(&file, (req.width, req.height))
            .map_err(|e| ProviderError::ValidationFailed(e.to_string()))
    }
}

impl VisionLabeler for FixtureProvider {
    fn candidate_labels(&self, req: &CandidateLabelRequest) -> Result<Vec<String>, ProviderError> {
        let content = self.lookup_content(CANDIDATE_DIR, &req.canonical_value())?;
        parse::parse_candidate_response(&content)
    }

    fn assign_labels(
        &self,
        req: &AssignmentRequest,
    ) -> Result<BTreeMap<u32, String>, ProviderError> {
        let content = self.lookup_content(ASSIGN_DIR, &req.canonical_value())?;
        let ids: Vec<u32> = req.masks.iter().map(|m| m.id).collect();
        parse::parse_assignment_response(&content, &ids, &req.candidate_labels)
    }
}

impl TaskConditioner for FixtureProvider {
    fn condition(&self, req: &ConditioningRequest) -> Result<ConditioningResponse, ProviderError> {
        let content = self.lookup_content(CONDITION_DIR, &req.canonical_value())?;
        parse::parse_conditioning_response(&content, &req.labels)
    }
}

/// Writes fixture files for later replay: the response under
/// `<kind>/<digest>.json` and the canonical request under
/// `<kind>/<digest>.request.json`.
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| ProviderError::Config(format!("creating {}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(
        &self,
        kind: &str,
        canonical: &serde_json::Value,
        response_json: &str,
    ) -> Result<String, ProviderError> {
        let digest = request_digest(canonical);
        let dir = self.dir.join(kind);
        fs::create_dir_all(&dir)
            .map_err(|e| ProviderError::Config(format!("creating {}: {e}", dir.display())))?;
        let write = |name: String, body: String| -> Result<(), ProviderError> {
            fs::write(dir.join(&name), body)
                .map_err(|e| ProviderError::Config(format!("writing {name}: {e}")))
        };
        write(format!("{digest}.json"), response_json.to_string())?;
        let sidecar =
            serde_json::to_string_pretty(canonical).expect("request serializes") + "\n";
        write(format!("{digest}.request.json"), sidecar)?;
        Ok(digest)
    }

    /// Records a mask file as the segmentation answer for `req`.
    pub fn record_segment(
        &self,
        req: &SegmentRequest,
        masks: &MaskFile,
    ) -> Result<String, ProviderError> {
        let body = serde_json::to_string_pretty(masks).expect("masks serialize") + "\n";
        self.record(SEGMENT_DIR, &req.canonical_value(), &body)
    }

    /// Records raw assistant text as the candidate-label answer for `req`.
    pub fn record_candidate_labels(
        &self,
        req: &CandidateLabelRequest,
        content: &str,
    ) -> Result<String, ProviderError> {
        let body = serde_json::to_string_pretty(&serde_json::json!({ "content": content }))
            .expect("content serializes")
            + "\n";
        self.record(CANDIDATE_DIR, &req.canonical_value(), &body)
    }

    /// Records raw assistant text as the assignment answer for `req`.
    pub fn record_assignment(
        &self,
        req: &AssignmentRequest,
        content: &str,
    ) -> Result<String, ProviderError> {
        let body = serde_json::to_string_pretty(&serde_json::json!({ "content": content }))
            .expect("content serializes")
            + "\n";
        self.record(ASSIGN_DIR, &req.canonical_value(), &body)
    }

    /// Records raw assistant text as the conditioning answer for `req`.
    pub fn record_condition(
        &self,
        req: &ConditioningRequest,
        content: &str,
    ) -> Result<String, ProviderError> {
        let body = serde_json::to_string_pretty(&serde_json::json!({ "content": content }))
            .expect("content serializes")
            + "\n";
        self.record(CONDITION_DIR, &req.canonical_value(), &body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viewrender::MaskRle;

    #[test]
    fn digest_is_key_order_independent() {
        let a = serde_json::json!({"b": 1, "a": [1, 2]});
        let b = serde_json::json!({"a": [1, 2], "b": 1});
        assert_eq!(request_digest(&a), request_digest(&b));
    }

    #[test]
    fn record_then_replay_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FixtureStore::create(tmp.path()).unwrap();

        let req = ConditioningRequest {
            task: "cut".into(),
            labels: vec!["blade".into(), "handle".into()],
        };
        store
            .record_condition(
                &req,
                "Sure: {\"grasp_label\": \"handle\", \"task_label\": \"blade\"}",
            )
            .unwrap();

        let provider = FixtureProvider::new(tmp.path()).unwrap();
        let resp = provider.condition(&req).unwrap();
        assert_eq!(resp.grasp_label, "handle");
        assert_eq!(resp.task_label, "blade");

        // identical replay
        assert_eq!(provider.condition(&req).unwrap(), resp);

        // a different request misses
        let other = ConditioningRequest {
            task: "stir".into(),
            labels: req.labels.clone(),
        };
        assert!(matches!(
            provider.condition(&other),
            Err(ProviderError::Unavailable(_))
        ));
    }

    #[test]
    fn segment_fixture_decodes_masks() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FixtureStore::create(tmp.path()).unwrap();
        let req = SegmentRequest {
            image_pgm: b"P5\n4 4\n255\n****************".to_vec(),
            width: 4,
            height: 4,
        };
        let masks = MaskFile {
            masks: vec![MaskRle {
                id: 1,
                rle: vec![0, 4],
            }],
        };
        store.record_segment(&req, &masks).unwrap();
        let provider = FixtureProvider::new(tmp.path()).unwrap();
        let decoded = provider.segment(&req).unwrap();
        assert_eq!(decoded.len(), 1);
        assert_eq!(decoded[0].area(), 4);
    }

    #[test]
    fn sidecar_written_next_to_response() {
        let tmp = tempfile::tempdir().unwrap();
        let store = FixtureStore::create(tmp.path()).unwrap();
        let req = ConditioningRequest {
            task: "cut".into(),
            labels: vec!["a".into()],
        };
        let digest = store
            .record_condition(&req, "{\"grasp_label\":\"a\",\"task_label\":\"a\"}")
            .unwrap();
        assert!(tmp
            .path()
            .join(CONDITION_DIR)
            .join(format!("{digest}.request.json"))
            .exists());
    }

    #[test]
    fn missing_directory_rejected() {
        assert!(FixtureProvider::new("/nonexistent/fixtures").is_err());
    }
}
