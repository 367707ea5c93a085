use std::io::Read;
use std::time::Duration;

use super::wire::{self, COMPLETE_PATH};
use super::{check_video_inputs, ViewCompleter};
use crate::error::{Error, Result};
use crate::geometry::{Image, Plane};
use crate::trajectory::Trajectory;

/// Upper bound on a reply body.
const MAX_RESPONSE_BYTES: u64 = 512 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
            multiplier: 2.0,
        }
    }
}

/// Client for an HTTP completion service.
#[derive(Debug, Clone)]
pub struct RemoteCompleter {
    url: String,
    timeout: Duration,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

/// `endpoint` is the service base URL, e.g. `http://127.0.0.1:8080`.
pub fn remote_completer(endpoint: &str, timeout_secs: f64) -> Result<RemoteCompleter> {
    if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
        return Err(Error::param(format!("timeout must be positive, got {timeout_secs}")));
    }
    if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
        return Err(Error::param(format!("endpoint {endpoint:?} is not an http(s) URL")));
    }
    let timeout = Duration::from_secs_f64(timeout_secs);
    Ok(RemoteCompleter {
        url: format!("{}{}", endpoint.trim_end_matches('/'), COMPLETE_PATH),
        timeout,
        retry: RetryPolicy::default(),
        agent: ureq::AgentBuilder::new().timeout(timeout).build(),
    })
}

enum Attempt {
    Done(Vec<u8>),
    Retry(String),
    Fail(Error),
}

fn is_timeout(t: &ureq::Transport) -> bool {
    let mut src: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(t);
    while let Some(e) = src {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        src = e.source();
    }
    t.to_string().contains("timed out")
}

fn read_body(resp: ureq::Response) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    resp.into_reader().take(MAX_RESPONSE_BYTES).read_to_end(&mut buf)?;
    Ok(buf)
}

impl RemoteCompleter {
    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &str) -> Attempt {
        let res = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(body);
        match res {
            Ok(resp) => match read_body(resp) {
                Ok(b) => Attempt::Done(b),
                Err(e) if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
                    Attempt::Fail(Error::Timeout(self.timeout.as_secs_f64()))
                }
                Err(e) => Attempt::Fail(Error::protocol("$", format!("reading body: {e}"))),
            },
            Err(ureq::Error::Status(code, resp)) => {
                let text = read_body(resp).unwrap_or_default();
                if code >= 500 || code == 429 {
                    return Attempt::Retry(format!("HTTP {code}"));
                }
                let v: serde_json::Value = serde_json::from_slice(&text).unwrap_or_default();
                let path = v.get("path").and_then(|p| p.as_str()).unwrap_or("$").to_string();
                let msg = v
                    .get("error")
                    .map(|e| e.to_string())
                    .unwrap_or_else(|| String::from_utf8_lossy(&text).into_owned());
                Attempt::Fail(Error::protocol(path, format!("HTTP {code}: {msg}")))
            }
            Err(ureq::Error::Transport(t)) => {
                if is_timeout(&t) {
                    Attempt::Fail(Error::Timeout(self.timeout.as_secs_f64()))
                } else {
                    Attempt::Retry(t.to_string())
                }
            }
        }
    }

    fn post(&self, body: &str) -> Result<Vec<u8>> {
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            match self.attempt(body) {
                Attempt::Done(b) => return Ok(b),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(msg) => last = msg,
            }
            if attempt < self.retry.max_attempts {
                std::thread::sleep(backoff);
                backoff = backoff.mul_f64(self.retry.multiplier);
            }
        }
        Err(Error::Transport {
            attempts: self.retry.max_attempts.max(1),
            message: last,
        })
    }
}

fn request_id(trajectory: &Trajectory) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in &trajectory.poses {
        for v in p.rotation_row_major().iter().chain(p.translation.iter()) {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("sf-{h:016x}")
}

impl ViewCompleter for RemoteCompleter {
    fn complete(&self, frames: &[Image], alphas: &[Plane], trajectory: &Trajectory) -> Result<Vec<Image>> {
        check_video_inputs(frames, alphas, trajectory)?;
        let id = request_id(trajectory);
        let body = wire::encode_request(frames, alphas, trajectory, &id)?;
        let reply = self.post(&body)?;
        wire::decode_response(&reply, frames.len(), trajectory.intrinsics.dims(), &id)
    }
}
