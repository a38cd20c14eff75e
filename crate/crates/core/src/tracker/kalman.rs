//! Constant-velocity Kalman filter over (cx, cy, aspect, height).
//!
//! Process and measurement noise scale with the box height, using the usual
//! DeepSORT weights (position 1/20, velocity 1/160 of the height).

use nalgebra::{Cholesky, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geom::BBox;

pub type StateVec = SVector<f64, 8>;
pub type StateCov = SMatrix<f64, 8, 8>;
pub type MeasVec = SVector<f64, 4>;
pub type MeasCov = SMatrix<f64, 4, 4>;
type ObsMatrix = SMatrix<f64, 4, 8>;

const MIN_HEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    /// Multiplies the process-noise standard deviations; 0 disables Q.
    pub process_noise_scale: f64,
    /// Multiplies the measurement-noise standard deviations.
    pub measurement_noise_scale: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            process_noise_scale: 1.0,
            measurement_noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub mean: StateVec,
    pub covariance: StateCov,
}

pub fn bbox_to_measurement(b: &BBox) -> MeasVec {
    let c = b.center();
    MeasVec::new(c.x, c.y, b.w / b.h, b.h)
}

pub fn measurement_to_bbox(z: &MeasVec) -> BBox {
    let h = z[3];
    let w = z[2] * h;
    BBox::from_center(z[0], z[1], w, h)
}

fn transition() -> StateCov {
    let mut f = StateCov::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> ObsMatrix {
    let mut h = ObsMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: &mut StateCov) {
    let t = p.transpose();
    *p = (*p + t) * 0.5;
}

impl TrackState {
    pub fn initiate(b: &BBox, params: &KalmanParams) -> Self {
        let z = bbox_to_measurement(b);
        let mut mean = StateVec::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let h = z[3];
        let (wp, wv) = (params.std_weight_position, params.std_weight_velocity);
        let std = [
            2.0 * wp * h,
            2.0 * wp * h,
            1e-2,
            2.0 * wp * h,
            10.0 * wv * h,
            10.0 * wv * h,
            1e-5,
            10.0 * wv * h,
        ];
        let covariance = StateCov::from_diagonal(&StateVec::from_iterator(std.iter().map(|s| s * s)));
        Self { mean, covariance }
    }

    pub fn process_noise(&self, params: &KalmanParams) -> StateCov {
        let h = self.mean[3];
        let k = params.process_noise_scale;
        let (wp, wv) = (params.std_weight_position * k, params.std_weight_velocity * k);
        let std = [wp * h, wp * h, 1e-2 * k, wp * h, wv * h, wv * h, 1e-5 * k, wv * h];
        StateCov::from_diagonal(&StateVec::from_iterator(std.iter().map(|s| s * s)))
    }

    pub fn measurement_noise(&self, params: &KalmanParams) -> MeasCov {
        let h = self.mean[3];
        let k = params.measurement_noise_scale;
        let wp = params.std_weight_position * k;
        let std = [wp * h, wp * h, 1e-1 * k, wp * h];
        MeasCov::from_diagonal(&MeasVec::from_iterator(std.iter().map(|s| s * s)))
    }

    /// x <- F x, P <- F P F^T + Q.
    pub fn predict(&mut self, params: &KalmanParams) {
        let q = self.process_noise(params);
        let f = transition();
        self.mean = f * self.mean;
        self.covariance = f * self.covariance * f.transpose() + q;
        symmetrize(&mut self.covariance);
        if self.mean[3] < MIN_HEIGHT {
            self.mean[3] = MIN_HEIGHT;
        }
    }

    /// Projected measurement mean and innovation covariance.
    pub fn project(&self, params: &KalmanParams) -> (MeasVec, MeasCov) {
        let h = observation();
        let r = self.measurement_noise(params);
        (h * self.mean, h * self.covariance * h.transpose() + r)
    }

    /// Measurement update with gain K = P H^T S^-1. The covariance uses the
    /// Joseph form, which equals (I - K H) P but stays symmetric PSD under
    /// rounding.
    pub fn update(&mut self, z: &MeasVec, params: &KalmanParams) {
        let h = observation();
        let r = self.measurement_noise(params);
        let (projected, s) = self.project(params);
        let pht = self.covariance * h.transpose();
        let gain = match Cholesky::new(s) {
            Some(chol) => chol.solve(&pht.transpose()).transpose(),
            None => match s.try_inverse() {
                Some(inv) => pht * inv,
                None => return,
            },
        };
        self.mean += gain * (z - projected);
        let i_kh = StateCov::identity() - gain * h;
        self.covariance = i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose();
        symmetrize(&mut self.covariance);
        if self.mean[3] < MIN_HEIGHT {
            self.mean[3] = MIN_HEIGHT;
        }
    }

    pub fn bbox(&self) -> BBox {
        measurement_to_bbox(&self.mean.fixed_rows::<4>(0).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(mean: [f64; 8]) -> TrackState {
        TrackState { mean: StateVec::from_row_slice(&mean), covariance: StateCov::identity() }
    }

    #[test]
    fn zero_velocity_keeps_position_and_grows_by_q() {
        let params = KalmanParams::default();
        let mut s = state([100.0, 100.0, 1.0, 50.0, 0.0, 0.0, 0.0, 0.0]);
        let before = s.clone();
        let q = s.process_noise(&params);
        s.predict(&params);
        assert_eq!(s.mean, before.mean);
        let grown = s.covariance - before.covariance;
        // F P F^T differs from P in the position/velocity couplings only.
        for i in 0..8 {
            assert!((grown[(i, i)] - q[(i, i)] - if i < 4 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_motion_advances_center() {
        let mut s = state([100.0, 100.0, 1.0, 50.0, 5.0, 0.0, 0.0, 0.0]);
        s.predict(&KalmanParams::default());
        assert_eq!(s.mean[0], 105.0);
        assert_eq!(s.mean[1], 100.0);
    }

    #[test]
    fn zero_innovation_shrinks_covariance() {
        let params = KalmanParams::default();
        let mut s = TrackState::initiate(&BBox::new(10.0, 10.0, 20.0, 40.0), &params);
        s.predict(&params);
        let mean = s.mean;
        let trace_before = s.covariance.trace();
        let z = mean.fixed_rows::<4>(0).into_owned();
        s.update(&z, &params);
        assert!((s.mean - mean).norm() < 1e-12);
        assert!(s.covariance.trace() < trace_before);
    }

    #[test]
    fn bbox_measurement_round_trip() {
        let b = BBox::new(3.0, 4.0, 10.0, 20.0);
        let back = measurement_to_bbox(&bbox_to_measurement(&b));
        assert!((back.x - b.x).abs() < 1e-12 && (back.w - b.w).abs() < 1e-12);
    }
}
