use crate::bucket_engine::Trajectory;
use crate::model::{PartId, SystemState};
use crate::TIME_EPS;

/// Which counter of the target part is observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    /// Stock on hand; used when the part is never withdrawn by orders.
    Stock,
    /// Cumulative deliveries against orders.
    Delivered,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QoiKind {
    /// Counter value at `horizon`.
    DeliveriesBy { horizon: f64 },
    /// First time the counter reaches `count`, or `cap` if it never does.
    DeliveryTime { count: f64, cap: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QoiSpec {
    pub part: PartId,
    pub kind: QoiKind,
    pub measure: Measure,
}

impl QoiSpec {
    pub fn value(&self, state: &SystemState) -> f64 {
        match self.measure {
            Measure::Stock => state.x[self.part.0],
            Measure::Delivered => state.delivered[self.part.0],
        }
    }
}

/// Streaming evaluation over successive snapshots, with the counter
/// interpolated linearly between them.
#[derive(Clone, Debug)]
pub struct QoiTracker {
    spec: QoiSpec,
    prev: Option<(f64, f64)>,
    result: Option<f64>,
}

impl QoiTracker {
    pub fn new(spec: QoiSpec) -> Self {
        Self { spec, prev: None, result: None }
    }

    pub fn observe(&mut self, state: &SystemState) {
        let (t, v) = (state.t, self.spec.value(state));
        if self.result.is_none() {
            self.result = match self.spec.kind {
                QoiKind::DeliveriesBy { horizon } if t >= horizon - TIME_EPS => Some(match self.prev {
                    Some((tp, vp)) if t > horizon + TIME_EPS && tp < horizon => {
                        vp + (v - vp) * (horizon - tp) / (t - tp)
                    }
                    _ => v,
                }),
                QoiKind::DeliveryTime { count, cap } if v >= count - TIME_EPS => {
                    let hit = match self.prev {
                        Some((tp, vp)) if v > count && vp < count => tp + (count - vp) / (v - vp) * (t - tp),
                        _ => t,
                    };
                    Some(hit.min(cap))
                }
                QoiKind::DeliveryTime { cap, .. } if t >= cap - TIME_EPS => Some(cap),
                _ => None,
            };
        }
        self.prev = Some((t, v));
    }

    pub fn is_done(&self) -> bool {
        self.result.is_some()
    }

    pub fn finish(&self) -> f64 {
        if let Some(r) = self.result {
            return r;
        }
        match self.spec.kind {
            QoiKind::DeliveriesBy { .. } => self.prev.map_or(0.0, |p| p.1),
            QoiKind::DeliveryTime { cap, .. } => cap,
        }
    }
}

/// The QoI of a recorded trajectory.
pub fn evaluate_qoi(trajectory: &Trajectory, spec: &QoiSpec) -> f64 {
    let mut tracker = QoiTracker::new(*spec);
    for s in &trajectory.snapshots {
        tracker.observe(s);
    }
    tracker.finish()
}
