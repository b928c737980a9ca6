//! Polite HTTP fetching with robots.txt support and per-domain delays.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::html::extract;
use super::robots::RobotsRules;
use super::{domain_of, FetchError, Page, PageSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub user_agent: String,
    /// Minimum gap between two requests to one domain, in milliseconds.
    pub delay_ms: u64,
    pub timeout_ms: u64,
    pub max_redirects: u32,
    pub respect_robots: bool,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            user_agent: format!("treecrawl/{}", env!("CARGO_PKG_VERSION")),
            delay_ms: 1000,
            timeout_ms: 10_000,
            max_redirects: 3,
            respect_robots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub final_url: String,
    pub body: String,
}

/// Issues a single GET. Non-2xx statuses are returned, not raised.
pub trait Transport {
    fn get(&mut self, url: &str) -> Result<HttpResponse, FetchError>;
}

/// Time source, swappable in tests.
pub trait Clock {
    fn now(&self) -> Duration;
    fn sleep(&mut self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// [`Transport`] backed by a blocking ureq agent.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(cfg: &LiveConfig) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .max_redirects(cfg.max_redirects)
            .http_status_as_error(false)
            .user_agent(cfg.user_agent.as_str())
            .build();
        Self { agent: config.into() }
    }
}

impl Transport for UreqTransport {
    fn get(&mut self, url: &str) -> Result<HttpResponse, FetchError> {
        use ureq::ResponseExt;
        let mut resp = self.agent.get(url).call().map_err(|e| match e {
            ureq::Error::Timeout(_) => FetchError::Timeout { url: url.to_string() },
            ureq::Error::BadUri(reason) => FetchError::Malformed {
                url: url.to_string(),
                reason,
            },
            other => FetchError::Network {
                url: url.to_string(),
                reason: other.to_string(),
            },
        })?;
        let status = resp.status().as_u16();
        let final_url = resp.get_uri().to_string();
        let body = resp
            .body_mut()
            .with_config()
            .limit(8 * 1024 * 1024)
            .lossy_utf8(true)
            .read_to_string()
            .map_err(|e| FetchError::Network {
                url: url.to_string(),
                reason: e.to_string(),
            })?;
        Ok(HttpResponse { status, final_url, body })
    }
}

/// Fetcher that waits out the per-domain delay and consults robots.txt
/// before every request.
pub struct LiveFetcher<T: Transport, C: Clock> {
    transport: T,
    clock: C,
    cfg: LiveConfig,
    last_request: HashMap<String, Duration>,
    robots: HashMap<String, RobotsRules>,
}

impl LiveFetcher<UreqTransport, SystemClock> {
    pub fn http(cfg: LiveConfig) -> Self {
        Self::new(UreqTransport::new(&cfg), SystemClock::default(), cfg)
    }
}

impl<T: Transport, C: Clock> LiveFetcher<T, C> {
    pub fn new(transport: T, clock: C, cfg: LiveConfig) -> Self {
        Self {
            transport,
            clock,
            cfg,
            last_request: HashMap::new(),
            robots: HashMap::new(),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    fn polite_get(&mut self, domain: &str, url: &str) -> Result<HttpResponse, FetchError> {
        let delay = Duration::from_millis(self.cfg.delay_ms);
        if let Some(&last) = self.last_request.get(domain) {
            let ready = last + delay;
            let now = self.clock.now();
            if now < ready {
                self.clock.sleep(ready - now);
            }
        }
        self.last_request.insert(domain.to_string(), self.clock.now());
        self.transport.get(url)
    }

    fn rules_for(&mut self, parsed: &url::Url, domain: &str) -> RobotsRules {
        if let Some(r) = self.robots.get(domain) {
            return r.clone();
        }
        let mut robots_url = parsed.clone();
        robots_url.set_path("/robots.txt");
        robots_url.set_query(None);
        robots_url.set_fragment(None);
        let rules = match self.polite_get(domain, robots_url.as_str()) {
            Ok(r) if (200..300).contains(&r.status) => RobotsRules::parse(&r.body, &self.cfg.user_agent),
            Ok(r) if r.status >= 500 => RobotsRules::disallow_all(),
            _ => RobotsRules::allow_all(),
        };
        self.robots.insert(domain.to_string(), rules.clone());
        rules
    }
}

impl<T: Transport, C: Clock> PageSource for LiveFetcher<T, C> {
    fn fetch(&mut self, url: &str) -> Result<Page, FetchError> {
        let malformed = |reason: &str| FetchError::Malformed {
            url: url.to_string(),
            reason: reason.to_string(),
        };
        let parsed = url::Url::parse(url).map_err(|e| malformed(&e.to_string()))?;
        let domain = domain_of(url).map_err(|e| malformed(&e.to_string()))?;
        if self.cfg.respect_robots {
            let rules = self.rules_for(&parsed, &domain);
            let mut path = parsed.path().to_string();
            if let Some(q) = parsed.query() {
                path.push('?');
                path.push_str(q);
            }
            if !rules.is_allowed(&path) {
                return Err(FetchError::RobotsDenied { url: url.to_string() });
            }
        }
        let resp = self.polite_get(&domain, url)?;
        match resp.status {
            200..=299 => {
                let mut page = extract(&resp.body, &resp.final_url, resp.status);
                page.url = url.to_string();
                Ok(page)
            }
            404 | 410 => Err(FetchError::NotFound { url: url.to_string() }),
            status => Err(FetchError::HttpStatus {
                url: url.to_string(),
                status,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    #[derive(Clone, Default)]
    struct FakeClock {
        now: Rc<RefCell<Duration>>,
    }

    impl Clock for FakeClock {
        fn now(&self) -> Duration {
            *self.now.borrow()
        }
        fn sleep(&mut self, d: Duration) {
            *self.now.borrow_mut() += d;
        }
    }

    struct Mock {
        clock: FakeClock,
        log: Vec<(String, Duration)>,
    }

    impl Transport for Mock {
        fn get(&mut self, url: &str) -> Result<HttpResponse, FetchError> {
            self.log.push((url.to_string(), self.clock.now()));
            let body = if url.ends_with("/robots.txt") {
                "User-agent: *\nDisallow: /secret\n".to_string()
            } else {
                "<title>t</title><a href=\"/next\">n</a>".to_string()
            };
            let status = if url.ends_with("/gone") { 404 } else { 200 };
            Ok(HttpResponse {
                status,
                final_url: url.to_string(),
                body,
            })
        }
    }

    fn fetcher() -> LiveFetcher<Mock, FakeClock> {
        let clock = FakeClock::default();
        let mock = Mock {
            clock: clock.clone(),
            log: Vec::new(),
        };
        LiveFetcher::new(mock, clock, LiveConfig::default())
    }

    #[test]
    fn robots_denied_issues_no_request() {
        let mut f = fetcher();
        let err = f.fetch("http://a.com/secret/x").unwrap_err();
        assert_eq!(err.category(), "robots_denied");
        let urls: Vec<_> = f.transport().log.iter().map(|(u, _)| u.as_str()).collect();
        assert_eq!(urls, vec!["http://a.com/robots.txt"]);
    }

    #[test]
    fn per_domain_delay() {
        let mut f = fetcher();
        f.fetch("http://a.com/1").unwrap();
        f.fetch("http://b.com/1").unwrap();
        f.fetch("http://a.com/2").unwrap();
        f.fetch("http://a.com/3").unwrap();
        let mut last: HashMap<String, Duration> = HashMap::new();
        for (url, at) in &f.transport().log {
            let d = domain_of(url).unwrap();
            if let Some(prev) = last.insert(d, *at) {
                assert!(*at - prev >= Duration::from_millis(1000), "{url}");
            }
        }
    }

    #[test]
    fn not_found_category() {
        let mut f = fetcher();
        assert_eq!(f.fetch("http://a.com/gone").unwrap_err().category(), "not_found");
        let page = f.fetch("http://a.com/ok").unwrap();
        assert_eq!(page.outlinks[0].url, "http://a.com/next");
    }
}
