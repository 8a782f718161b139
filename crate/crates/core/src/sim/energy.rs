use crate::num::Scalar;

/// Constant power held for a duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSegment<T> {
    pub power_w: T,
    pub duration_s: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("InvalidTimeline: segment {index} has a negative or non-finite duration")]
pub struct InvalidTimeline {
    pub index: usize,
}

/// Exact energy, in joules, of a piecewise-constant power timeline.
pub fn integrate_energy<T: Scalar>(segments: &[PowerSegment<T>]) -> Result<T, InvalidTimeline> {
    segments.iter().enumerate().try_fold(T::zero(), |acc, (index, seg)| {
        if !(seg.duration_s >= T::zero()) || !seg.duration_s.is_finite() {
            return Err(InvalidTimeline { index });
        }
        Ok(acc + seg.power_w * seg.duration_s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_watts_for_ten_seconds() {
        let e = integrate_energy(&[PowerSegment { power_w: 10.0, duration_s: 10.0 }]).unwrap();
        assert_eq!(e, 100.0);
    }

    #[test]
    fn zero_length_segment_is_free() {
        let segs =
            [PowerSegment { power_w: 500.0f32, duration_s: 0.0 }, PowerSegment { power_w: 2.0, duration_s: 3.0 }];
        assert_eq!(integrate_energy(&segs).unwrap(), 6.0);
    }

    #[test]
    fn two_idle_nodes() {
        let idle = PowerSegment { power_w: 5.0, duration_s: 100.0 };
        assert_eq!(integrate_energy(&[idle, idle]).unwrap() / 1000.0, 1.0);
    }

    #[test]
    fn negative_duration_is_rejected() {
        let segs = [PowerSegment { power_w: 1.0, duration_s: 1.0 }, PowerSegment { power_w: 1.0, duration_s: -1.0 }];
        assert_eq!(integrate_energy(&segs), Err(InvalidTimeline { index: 1 }));
    }
}
