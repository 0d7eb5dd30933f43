use std::sync::Arc;

use log::debug;

use super::SessionRecord;
use crate::error::SignalError;
use crate::signal::{Channel, SignalWindow, WindowGeometry, DEFAULT_RATE_GATE_HZ, DEFAULT_RATE_HZ, DEFAULT_WINDOW_S};

#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfig {
    pub duration_s: f64,
    pub rate_hz: f64,
    pub stride_s: f64,
    pub gate_hz: f64,
    /// Ring channels to carry into each window; empty means all present.
    pub channels: Vec<Channel>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            duration_s: DEFAULT_WINDOW_S,
            rate_hz: DEFAULT_RATE_HZ,
            stride_s: DEFAULT_WINDOW_S,
            gate_hz: DEFAULT_RATE_GATE_HZ,
            channels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Windowed {
    pub windows: Vec<Arc<SignalWindow>>,
    /// Window positions that fit inside an activity segment.
    pub candidates: usize,
    /// Candidates rejected by the sampling-rate gate.
    pub gate_dropped: usize,
    /// Candidates rejected for any other reason (missing channel, bad data).
    pub other_dropped: usize,
}

/// Tiles each activity segment with windows that never cross a segment
/// boundary, resampling every selected ring channel onto a uniform grid.
pub fn window_session(s: &SessionRecord, cfg: &WindowConfig) -> Windowed {
    let mut out = Windowed::default();
    if !(cfg.duration_s > 0.0 && cfg.stride_s > 0.0) {
        return out;
    }
    let sources: Vec<_> = if cfg.channels.is_empty() {
        s.ring_channels().collect()
    } else {
        cfg.channels
            .iter()
            .filter(|c| c.is_ring_input())
            .filter_map(|c| s.series(*c))
            .collect()
    };
    let missing = !cfg.channels.is_empty() && sources.len() < cfg.channels.iter().filter(|c| c.is_ring_input()).count();

    let session_id: Arc<str> = Arc::from(s.session_id.as_str());
    let dur_ms = (cfg.duration_s * 1000.0).round() as i64;
    let stride_ms = ((cfg.stride_s * 1000.0).round() as i64).max(1);
    for seg in &s.activities {
        let mut start = seg.start_ms;
        while start + dur_ms <= seg.end_ms {
            out.candidates += 1;
            let geometry = WindowGeometry {
                start_ms: start,
                duration_s: cfg.duration_s,
                rate_hz: cfg.rate_hz,
                gate_hz: cfg.gate_hz,
            };
            if missing || sources.is_empty() {
                out.other_dropped += 1;
            } else {
                match SignalWindow::cut(session_id.clone(), seg.tag, geometry, &sources) {
                    Ok(w) => out.windows.push(Arc::new(w)),
                    Err(SignalError::BelowRateGate { .. }) => out.gate_dropped += 1,
                    Err(e) => {
                        debug!("{}@{start}: {e}", s.session_id);
                        out.other_dropped += 1;
                    }
                }
            }
            start += stride_ms;
        }
    }
    out
}
