//! Wall-clock helper. `SOURCE_DATE_EPOCH` (seconds) pins the time so that
//! rebuilt artifacts are byte-identical.

use std::time::{SystemTime, UNIX_EPOCH};

pub fn now_ms() -> u64 {
    if let Some(secs) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse::<u64>().ok()) {
        return secs.saturating_mul(1000);
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
