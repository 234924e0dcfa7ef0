use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use super::{ToneCategory, ToneError, ToneScore};

/// Largest request body the tone service accepts (128 KB).
pub const MAX_BATCH_BYTES: usize = 128 * 1024;

/// `{"text":"` plus `"}`.
const ENVELOPE_BYTES: usize = 11;
/// An escaped newline separator, `\n`, is two bytes in the JSON body.
const SEPARATOR_BYTES: usize = 2;

/// One request body: newline-joined sentences wrapped as `{"text": ...}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceBatch {
    pub ids: Vec<String>,
    pub payload: String,
    pub byte_size: usize,
}

fn escaped_len(text: &str) -> usize {
    serde_json::to_string(text).map(|s| s.len() - 2).unwrap_or(usize::MAX)
}

fn single_line(text: &str) -> String {
    text.replace(['\n', '\r'], " ")
}

fn build_batch(ids: Vec<String>, lines: Vec<String>) -> ServiceBatch {
    let payload = serde_json::json!({ "text": lines.join("\n") }).to_string();
    let byte_size = payload.len();
    ServiceBatch { ids, payload, byte_size }
}

/// Packs texts greedily, in order, into request bodies of at most
/// [`MAX_BATCH_BYTES`] bytes (JSON escaping and separators included).
/// Embedded line breaks become spaces so that one line stays one sentence.
pub fn chunk_for_service(texts: &[(String, String)]) -> Result<Vec<ServiceBatch>, ToneError> {
    let mut batches = Vec::new();
    let mut ids = Vec::new();
    let mut lines = Vec::new();
    let mut size = ENVELOPE_BYTES;

    for (id, text) in texts {
        let line = single_line(text);
        let len = escaped_len(&line);
        if ENVELOPE_BYTES + len > MAX_BATCH_BYTES {
            return Err(ToneError::TextTooLarge {
                id: id.clone(),
                bytes: ENVELOPE_BYTES + len,
                limit: MAX_BATCH_BYTES,
            });
        }
        let extra = if lines.is_empty() { len } else { SEPARATOR_BYTES + len };
        if !lines.is_empty() && size + extra > MAX_BATCH_BYTES {
            batches.push(build_batch(std::mem::take(&mut ids), std::mem::take(&mut lines)));
            size = ENVELOPE_BYTES + len;
        } else {
            size += extra;
        }
        ids.push(id.clone());
        lines.push(line);
    }
    if !lines.is_empty() {
        batches.push(build_batch(ids, lines));
    }
    debug_assert!(batches.iter().all(|b| b.byte_size <= MAX_BATCH_BYTES));
    Ok(batches)
}

/// Service tone identifier to category table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneMapping(HashMap<String, ToneCategory>);

impl Default for ToneMapping {
    fn default() -> Self {
        let map = ToneCategory::ALL
            .into_iter()
            .map(|c| (c.name().to_lowercase(), c))
            .collect();
        ToneMapping(map)
    }
}

impl ToneMapping {
    pub fn from_pairs<I: IntoIterator<Item = (String, ToneCategory)>>(pairs: I) -> Self {
        ToneMapping(pairs.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect())
    }

    pub fn insert(&mut self, tone: &str, category: ToneCategory) {
        self.0.insert(tone.to_lowercase(), category);
    }

    pub fn resolve(&self, tone_id: &str, tone_name: Option<&str>) -> Option<ToneCategory> {
        self.0
            .get(&tone_id.to_lowercase())
            .or_else(|| tone_name.and_then(|n| self.0.get(&n.to_lowercase())))
            .copied()
    }
}

#[derive(Debug, Deserialize)]
struct ToneEntry {
    score: f64,
    tone_id: String,
    #[serde(default)]
    tone_name: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SentenceTone {
    sentence_id: usize,
    #[serde(default)]
    tones: Vec<ToneEntry>,
}

#[derive(Debug, Deserialize)]
struct DocumentTone {
    #[serde(default)]
    tones: Vec<ToneEntry>,
}

#[derive(Debug, Deserialize)]
struct ToneResponse {
    #[serde(default)]
    sentences_tone: Option<Vec<SentenceTone>>,
    #[serde(default)]
    document_tone: Option<DocumentTone>,
}

/// Maps a service response onto the batch's tweet ids.
///
/// Sentence `k` of the request is tweet `batch.ids[k]`. A single-sentence
/// request may come back with only a document-level tone, which is then used
/// for that sentence. Tones missing from the mapping are ignored.
pub fn parse_service_response(
    batch: &ServiceBatch,
    batch_index: usize,
    body: &str,
    mapping: &ToneMapping,
) -> Result<Vec<(String, Vec<ToneScore>)>, ToneError> {
    let malformed = |reason: String| ToneError::MalformedResponse {
        batch: batch_index,
        reason,
    };
    let response: ToneResponse = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    let mut scores: Vec<Vec<ToneScore>> = vec![Vec::new(); batch.ids.len()];

    let convert = |tones: &[ToneEntry]| -> Result<Vec<ToneScore>, ToneError> {
        tones
            .iter()
            .filter_map(|t| mapping.resolve(&t.tone_id, t.tone_name.as_deref()).map(|c| (c, t.score)))
            .map(|(c, s)| ToneScore::new(c, s).map_err(|e| malformed(e.to_string())))
            .collect()
    };

    match (response.sentences_tone, response.document_tone) {
        (Some(sentences), _) => {
            for s in sentences {
                let slot = scores.get_mut(s.sentence_id).ok_or_else(|| {
                    malformed(format!(
                        "sentence_id {} out of range for {} sentences",
                        s.sentence_id,
                        batch.ids.len()
                    ))
                })?;
                *slot = convert(&s.tones)?;
            }
        }
        (None, Some(doc)) if batch.ids.len() == 1 => scores[0] = convert(&doc.tones)?,
        (None, _) => return Err(malformed("missing sentences_tone".into())),
    }
    Ok(batch.ids.iter().cloned().zip(scores).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportReply {
    pub status: u16,
    pub body: String,
}

/// Sends one JSON request body to the tone service.
pub trait ToneTransport: Sync {
    fn post(&self, body: &str) -> Result<TransportReply, String>;
}

/// Blocking HTTP transport with basic `apikey` authentication and
/// sentence-level analysis requested via the query string.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key: &str) -> Result<Self, ToneError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ToneError::Transport {
                batch: 0,
                message: e.to_string(),
            })?;
        let sep = if endpoint.contains('?') { '&' } else { '?' };
        Ok(HttpTransport {
            client,
            url: format!("{endpoint}{sep}sentences=true"),
            api_key: api_key.to_string(),
        })
    }

    /// Reads `TONE_API_URL` and `TONE_API_KEY`.
    pub fn from_env() -> Result<Self, ToneError> {
        let url = std::env::var("TONE_API_URL").map_err(|_| ToneError::MissingEnv("TONE_API_URL"))?;
        let key = std::env::var("TONE_API_KEY").map_err(|_| ToneError::MissingEnv("TONE_API_KEY"))?;
        Self::new(&url, &key)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ToneTransport for HttpTransport {
    fn post(&self, body: &str) -> Result<TransportReply, String> {
        let resp = self
            .client
            .post(&self.url)
            .basic_auth("apikey", Some(&self.api_key))
            .header("Content-Type", "application/json")
            .header("Accept", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(TransportReply { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Attempts per batch, the first one included.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): `base · 2^(retry-1)`, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub struct ServiceClient<T: ToneTransport> {
    pub transport: T,
    pub mapping: ToneMapping,
    pub retry: RetryPolicy,
    /// Requests in flight at once.
    pub concurrency: usize,
}

impl<T: ToneTransport> ServiceClient<T> {
    pub fn new(transport: T) -> Self {
        ServiceClient {
            transport,
            mapping: ToneMapping::default(),
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }

    fn send_batch(&self, batch: &ServiceBatch, index: usize) -> Result<Vec<(String, Vec<ToneScore>)>, ToneError> {
        let mut retries = 0;
        loop {
            let retryable = match self.transport.post(&batch.payload) {
                Ok(reply) => match reply.status {
                    200..=299 => return parse_service_response(batch, index, &reply.body, &self.mapping),
                    401 | 403 => return Err(ToneError::Authentication { status: reply.status }),
                    429 => ToneError::RateLimited {
                        batch: index,
                        attempts: retries + 1,
                    },
                    500..=599 => ToneError::Http {
                        batch: index,
                        status: reply.status,
                    },
                    status => return Err(ToneError::Http { batch: index, status }),
                },
                Err(message) => ToneError::Transport { batch: index, message },
            };
            if retries + 1 >= self.retry.max_attempts.max(1) {
                return Err(retryable);
            }
            retries += 1;
            std::thread::sleep(self.retry.delay(retries));
        }
    }
}

/// Sends every batch and returns per-tweet scores in input order.
///
/// Up to `client.concurrency` requests run at once. Rate-limit, server and
/// transport failures are retried with exponential backoff; the first batch
/// (in input order) that still fails determines the error.
pub fn label_with_service<T: ToneTransport>(
    batches: &[ServiceBatch],
    client: &ServiceClient<T>,
) -> Result<Vec<(String, Vec<ToneScore>)>, ToneError> {
    let workers = client.concurrency.clamp(1, batches.len().max(1));
    let next = AtomicUsize::new(0);
    type BatchResult = Result<Vec<(String, Vec<ToneScore>)>, ToneError>;
    let slots: Vec<Mutex<Option<BatchResult>>> =
        batches.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= batches.len() {
                    break;
                }
                let result = client.send_batch(&batches[i], i);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });

    let mut out = Vec::new();
    for slot in slots {
        let result = slot.into_inner().expect("slot lock").expect("every batch attempted");
        out.extend(result?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    fn texts(n: usize, len: usize) -> Vec<(String, String)> {
        (0..n).map(|i| (format!("t{i}"), "x".repeat(len))).collect()
    }

    #[test]
    fn empty_input_no_batches() {
        assert!(chunk_for_service(&[]).unwrap().is_empty());
    }

    #[test]
    fn many_small_texts_fit_limit() {
        let input = texts(2000, 100);
        let batches = chunk_for_service(&input).unwrap();
        assert!(batches.len() > 1);
        for b in &batches {
            assert!(b.byte_size <= MAX_BATCH_BYTES);
            assert_eq!(b.byte_size, b.payload.len());
        }
        let ids: Vec<&String> = batches.iter().flat_map(|b| &b.ids).collect();
        let expected: Vec<&String> = input.iter().map(|(id, _)| id).collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn oversized_text_is_rejected() {
        let input = vec![("ok".to_string(), "a".into()), ("huge".to_string(), "x".repeat(200 * 1024))];
        match chunk_for_service(&input) {
            Err(ToneError::TextTooLarge { id, .. }) => assert_eq!(id, "huge"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn payload_is_json_text_field() {
        let input = vec![("a".to_string(), "he said \"hi\"".into()), ("b".to_string(), "line\nbreak".into())];
        let batches = chunk_for_service(&input).unwrap();
        let v: serde_json::Value = serde_json::from_str(&batches[0].payload).unwrap();
        assert_eq!(v["text"], "he said \"hi\"\nline break");
    }

    #[test]
    fn exact_fit_boundary() {
        // Two texts whose escaped lengths fill the limit exactly.
        let first = MAX_BATCH_BYTES - ENVELOPE_BYTES - SEPARATOR_BYTES - 10;
        let input = vec![("a".to_string(), "x".repeat(first)), ("b".to_string(), "y".repeat(10))];
        let batches = chunk_for_service(&input).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].byte_size, MAX_BATCH_BYTES);
        let input = vec![("a".to_string(), "x".repeat(first)), ("b".to_string(), "y".repeat(11))];
        assert_eq!(chunk_for_service(&input).unwrap().len(), 2);
    }

    const RECORDED: &str = r#"{
        "document_tone": {"tones": [{"score": 0.6, "tone_id": "joy", "tone_name": "Joy"}]},
        "sentences_tone": [
            {"sentence_id": 0, "text": "we will win", "tones": [{"score": 0.81, "tone_id": "joy", "tone_name": "Joy"}]},
            {"sentence_id": 1, "text": "nothing here", "tones": []},
            {"sentence_id": 2, "text": "so scared", "tones": [
                {"score": 0.7, "tone_id": "fear", "tone_name": "Fear"},
                {"score": 0.55, "tone_id": "tentative", "tone_name": "Tentative"},
                {"score": 0.9, "tone_id": "frustrated", "tone_name": "Frustrated"}
            ], "extra": 1}
        ]
    }"#;

    fn batch3() -> ServiceBatch {
        let input: Vec<(String, String)> = ["we will win", "nothing here", "so scared"]
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("id{i}"), t.to_string()))
            .collect();
        chunk_for_service(&input).unwrap().remove(0)
    }

    #[test]
    fn recorded_response_maps_to_ids() {
        let out = parse_service_response(&batch3(), 0, RECORDED, &ToneMapping::default()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].0, "id0");
        assert_eq!(out[0].1, vec![ToneScore::new(ToneCategory::Joy, 0.81).unwrap()]);
        assert!(out[1].1.is_empty());
        assert_eq!(out[2].1.len(), 2);
    }

    #[test]
    fn single_sentence_uses_document_tone() {
        let batch = chunk_for_service(&[("only".to_string(), "great day".to_string())]).unwrap().remove(0);
        let body = r#"{"document_tone": {"tones": [{"score": 0.5, "tone_id": "confident"}]}}"#;
        let out = parse_service_response(&batch, 0, body, &ToneMapping::default()).unwrap();
        assert_eq!(out[0].1[0].category, ToneCategory::Confident);
    }

    #[test]
    fn malformed_response_carries_batch_index() {
        let err = parse_service_response(&batch3(), 7, "{not json", &ToneMapping::default()).unwrap_err();
        assert!(matches!(err, ToneError::MalformedResponse { batch: 7, .. }));
        let body = r#"{"sentences_tone": [{"sentence_id": 9, "tones": []}]}"#;
        let err = parse_service_response(&batch3(), 2, body, &ToneMapping::default()).unwrap_err();
        assert!(matches!(err, ToneError::MalformedResponse { batch: 2, .. }));
    }

    #[test]
    fn mapping_is_configurable() {
        let mut mapping = ToneMapping::default();
        mapping.insert("frustrated", ToneCategory::Anger);
        let out = parse_service_response(&batch3(), 0, RECORDED, &mapping).unwrap();
        assert_eq!(out[2].1.len(), 3);
        assert!(out[2].1.iter().any(|s| s.category == ToneCategory::Anger));
    }

    /// Replies with 429 for the first `failures` calls, then with `RECORDED`.
    struct Scripted {
        failures: u32,
        status: u16,
        calls: AtomicU32,
    }

    impl ToneTransport for Scripted {
        fn post(&self, _body: &str) -> Result<TransportReply, String> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Ok(TransportReply {
                    status: self.status,
                    body: String::new(),
                })
            } else {
                Ok(TransportReply {
                    status: 200,
                    body: RECORDED.to_string(),
                })
            }
        }
    }

    fn client(failures: u32, status: u16) -> ServiceClient<Scripted> {
        let mut c = ServiceClient::new(Scripted {
            failures,
            status,
            calls: AtomicU32::new(0),
        });
        c.retry.base_delay = Duration::ZERO;
        c
    }

    #[test]
    fn rate_limit_then_success_matches_immediate_success() {
        let batches = vec![batch3()];
        let immediate = label_with_service(&batches, &client(0, 429)).unwrap();
        let delayed_client = client(2, 429);
        let delayed = label_with_service(&batches, &delayed_client).unwrap();
        assert_eq!(immediate, delayed);
        assert_eq!(delayed_client.transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn persistent_rate_limit_errors() {
        let c = client(10, 429);
        let err = label_with_service(&[batch3()], &c).unwrap_err();
        assert!(matches!(err, ToneError::RateLimited { batch: 0, attempts: 3 }));
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let c = client(10, 401);
        let err = label_with_service(&[batch3()], &c).unwrap_err();
        assert!(matches!(err, ToneError::Authentication { status: 401 }));
        assert_eq!(c.transport.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(1), Duration::from_secs(1));
        assert_eq!(p.delay(2), Duration::from_secs(2));
        assert_eq!(p.delay(3), Duration::from_secs(4));
        assert_eq!(p.delay(40), Duration::from_secs(30));
    }

    /// Echoes one `joy` tone per sentence with the score encoding the line length.
    struct Echo;

    impl ToneTransport for Echo {
        fn post(&self, body: &str) -> Result<TransportReply, String> {
            let v: serde_json::Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
            let text = v["text"].as_str().unwrap_or_default();
            let sentences: Vec<serde_json::Value> = text
                .split('\n')
                .enumerate()
                .map(|(i, line)| {
                    serde_json::json!({
                        "sentence_id": i,
                        "tones": [{"score": (line.len() % 100) as f64 / 100.0, "tone_id": "joy"}]
                    })
                })
                .collect();
            Ok(TransportReply {
                status: 200,
                body: serde_json::json!({ "sentences_tone": sentences }).to_string(),
            })
        }
    }

    #[test]
    fn concurrent_requests_keep_input_order() {
        let input: Vec<(String, String)> = (0..3000).map(|i| (format!("id{i}"), "z".repeat(50 + i % 90))).collect();
        let batches = chunk_for_service(&input).unwrap();
        assert!(batches.len() >= 2);
        let mut c = ServiceClient::new(Echo);
        c.concurrency = 4;
        let out = label_with_service(&batches, &c).unwrap();
        assert_eq!(out.len(), input.len());
        for ((id, text), (got_id, scores)) in input.iter().zip(&out) {
            assert_eq!(id, got_id);
            assert_eq!(scores[0].score, (text.len() % 100) as f64 / 100.0);
        }
    }
}
