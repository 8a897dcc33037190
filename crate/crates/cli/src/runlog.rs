use std::collections::HashSet;
use std::time::Instant;

/// Run events with elapsed-time stamps. Each distinct warning is emitted
/// once, however many times it is raised.
pub struct RunLog {
    start: Instant,
    seen: HashSet<String>,
    warnings: Vec<String>,
}

impl RunLog {
    pub fn new() -> Self {
        RunLog {
            start: Instant::now(),
            seen: HashSet::new(),
            warnings: Vec::new(),
        }
    }

    fn stamp(&self) -> String {
        format!("[{:>9.3}s]", self.start.elapsed().as_secs_f64())
    }

    pub fn event(&self, msg: impl AsRef<str>) {
        log::info!("{} {}", self.stamp(), msg.as_ref());
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if self.seen.insert(msg.clone()) {
            log::warn!("{} {}", self.stamp(), msg);
            self.warnings.push(msg);
        }
    }

    pub fn error(&self, msg: impl AsRef<str>) {
        log::error!("{} {}", self.stamp(), msg.as_ref());
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}
