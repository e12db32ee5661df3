use crate::math::round;

/// Straight multi-lane highway. Lane 0 is the rightmost lane; lateral
/// position grows to the left and lane `k` is centered at `(k + 0.5) * lane_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RoadSpec {
    pub lane_count: usize,
    pub lane_width: f64,
    pub length: f64,
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self { lane_count: 3, lane_width: 3.7, length: 2000.0 }
    }
}

impl RoadSpec {
    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Index of the lane whose center is nearest to `y`, clamped to the road.
    pub fn nearest_lane(&self, y: f64) -> usize {
        let k = round(y / self.lane_width - 0.5);
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.lane_count.saturating_sub(1))
        }
    }

    pub fn width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }
}
