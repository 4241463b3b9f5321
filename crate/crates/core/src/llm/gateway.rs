use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use tracing::{debug, warn};

use super::backend::{Backend, Completion, Message};
use super::parse::{parse_structured, StructuredOutput};
use super::template::{render_prompt, PromptRequest, TemplateId};
use crate::error::{BackendError, GatewayError};

/// Re-asks after an unparseable answer before the sample is abandoned.
pub const PARSE_REASKS: u32 = 2;

/// Shared front door to a backend: rendering, transport retries with
/// exponential backoff, parse re-asks, and a cap on concurrent calls.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    backoff: Duration,
    max_retries: Option<u32>,
}

struct Slot<'a>(&'a Gateway);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("gateway lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            max_in_flight: 8,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            backoff: Duration::from_millis(500),
            max_retries: None,
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    /// Overrides the retry count of every request.
    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = Some(n);
        self
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn acquire(&self) -> Slot<'_> {
        let mut n = self.in_flight.lock().expect("gateway lock");
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).expect("gateway lock");
        }
        *n += 1;
        Slot(self)
    }

    /// Send a conversation, retrying transport failures `max_retries` times.
    pub fn send(
        &self,
        template: Option<TemplateId>,
        messages: &[Message],
        temperature: f64,
        max_retries: u32,
    ) -> Result<String, GatewayError> {
        let max_retries = self.max_retries.unwrap_or(max_retries);
        let req = Completion {
            template,
            messages,
            temperature,
        };
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _slot = self.acquire();
                self.backend.complete(&req)
            };
            match result {
                Ok(text) => return Ok(text),
                Err(e @ BackendError::Transport(_)) => {
                    if attempt > max_retries {
                        return Err(GatewayError::RetriesExhausted {
                            attempts: attempt,
                            last: e,
                        });
                    }
                    let wait = self.backoff * 2u32.saturating_pow(attempt - 1);
                    warn!(attempt, ?wait, error = %e, "transport failure, retrying");
                    std::thread::sleep(wait);
                }
                Err(e) => return Err(GatewayError::Backend(e)),
            }
        }
    }

    /// Render and send a single-turn prompt.
    pub fn complete(&self, req: &PromptRequest) -> Result<String, GatewayError> {
        let prompt = render_prompt(req)?;
        self.send(Some(req.template_id), &[Message::user(prompt)], req.temperature, req.max_retries)
    }

    /// Send `messages` and parse the answer as `template`. Unparseable
    /// answers are re-asked up to [`PARSE_REASKS`] times with the parse
    /// error appended. The final answer is pushed onto `messages`.
    pub fn converse(
        &self,
        template: TemplateId,
        messages: &mut Vec<Message>,
        temperature: f64,
        max_retries: u32,
    ) -> Result<StructuredOutput, GatewayError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let text = self.send(Some(template), messages, temperature, max_retries)?;
            match parse_structured(&text, template) {
                Ok(out) => {
                    messages.push(Message::assistant(text));
                    return Ok(out);
                }
                Err(e) => {
                    debug!(%template, error = %e, "unparseable answer");
                    if attempts > PARSE_REASKS {
                        return Err(GatewayError::Parse { attempts, last: e });
                    }
                    messages.push(Message::assistant(text));
                    messages.push(Message::user(format!(
                        "Your answer could not be read: {e}. Answer again using exactly the required format."
                    )));
                }
            }
        }
    }

    /// Single-turn prompt, parsed. Returns the conversation with the answer.
    pub fn ask(&self, req: &PromptRequest) -> Result<(Vec<Message>, StructuredOutput), GatewayError> {
        let mut messages = vec![Message::user(render_prompt(req)?)];
        let out = self.converse(req.template_id, &mut messages, req.temperature, req.max_retries)?;
        Ok((messages, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
        answer: String,
    }

    impl Backend for Flaky {
        fn id(&self) -> String {
            "flaky".into()
        }
        fn complete(&self, _: &Completion<'_>) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(BackendError::Transport("refused".into()))
            } else {
                Ok(self.answer.clone())
            }
        }
    }

    fn gw(b: Flaky) -> (Arc<Flaky>, Gateway) {
        let b = Arc::new(b);
        let g = Gateway::new(b.clone()).with_backoff(Duration::from_millis(1));
        (b, g)
    }

    #[test]
    fn transport_failures_are_retried() {
        let (b, g) = gw(Flaky {
            failures: 2,
            calls: AtomicUsize::new(0),
            answer: "Error: No".into(),
        });
        assert_eq!(g.send(None, &[], 1.0, 3).unwrap(), "Error: No");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_are_bounded() {
        let (b, g) = gw(Flaky {
            failures: 10,
            calls: AtomicUsize::new(0),
            answer: String::new(),
        });
        let e = g.send(None, &[], 1.0, 2).unwrap_err();
        assert!(matches!(e, GatewayError::RetriesExhausted { attempts: 3, .. }));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gateway_retry_count_overrides_requests() {
        let (b, g) = gw(Flaky {
            failures: 10,
            calls: AtomicUsize::new(0),
            answer: String::new(),
        });
        let g = g.with_max_retries(0);
        assert!(g.send(None, &[], 1.0, 5).is_err());
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn unparseable_answers_are_reasked_twice() {
        let (b, g) = gw(Flaky {
            failures: 0,
            calls: AtomicUsize::new(0),
            answer: "no idea".into(),
        });
        let mut msgs = vec![Message::user("check")];
        let e = g.converse(TemplateId::PlacementVerification, &mut msgs, 1.0, 0).unwrap_err();
        assert!(matches!(e, GatewayError::Parse { attempts: 3, .. }));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
        assert_eq!(msgs.len(), 5);
    }

    #[test]
    fn in_flight_cap_is_respected() {
        struct Slow {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Backend for Slow {
            fn id(&self) -> String {
                "slow".into()
            }
            fn complete(&self, _: &Completion<'_>) -> Result<String, BackendError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(String::new())
            }
        }
        let b = Arc::new(Slow {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let g = Gateway::new(b.clone()).with_max_in_flight(2);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| g.send(None, &[], 1.0, 0).unwrap());
            }
        });
        assert!(b.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn empty_key_is_a_credential_error() {
        let g = Gateway::new(Arc::new(super::super::backend::NetworkBackend::new("http://127.0.0.1:9", "", "m")));
        assert!(matches!(
            g.send(None, &[], 1.0, 3),
            Err(GatewayError::Backend(BackendError::Credential(_)))
        ));
    }
}
