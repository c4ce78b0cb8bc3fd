//! Measurement models for the IMU and a rolling-shutter pinhole camera.
//!
//! Accelerometer convention: the sensor measures specific force,
//! `a = Rᵀ(p̈ − g) + b_a`, with world gravity `g = (0, 0, −9.81)` by default.
//! A device at rest with identity orientation therefore reads `(0, 0, +9.81)`.
//!
//! Landmarks are stored as inverse depth ρ along the unit ray of their first
//! (reference) observation; ρ = 0 is a point at infinity.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::bspline::Trajectory;
use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

pub fn default_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -STANDARD_GRAVITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Angular velocity, rad/s, body frame.
    pub omega: Vector3<f64>,
    /// Specific force, m/s², body frame.
    pub accel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuBiases {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Time-ordered inertial samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImuLog {
    pub samples: Vec<ImuSample>,
}

impl ImuLog {
    pub fn new(samples: Vec<ImuSample>) -> Result<Self> {
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidInput(format!(
                    "IMU time not strictly increasing at sample {}",
                    i + 1
                )));
            }
        }
        if let Some(i) = samples.iter().position(|s| {
            !(s.t.is_finite()
                && s.omega.iter().all(|v| v.is_finite())
                && s.accel.iter().all(|v| v.is_finite()))
        }) {
            return Err(Error::InvalidInput(format!("IMU sample {i} is not finite")));
        }
        Ok(ImuLog { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean sample rate over the log.
    pub fn sample_rate(&self) -> Option<f64> {
        let n = self.samples.len();
        if n < 2 {
            return None;
        }
        let span = self.samples[n - 1].t - self.samples[0].t;
        Some((n - 1) as f64 / span)
    }

    pub fn gyro(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.omega).collect()
    }

    pub fn accel(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.accel).collect()
    }
}

/// Pinhole camera with a rolling shutter that reads rows top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Time to read out all rows, seconds.
    pub readout_time: f64,
    pub frame_period: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fx: 1000.0,
            fy: 1000.0,
            cx: 960.0,
            cy: 540.0,
            width: 1920,
            height: 1080,
            readout_time: 0.03,
            frame_period: 1.0 / 30.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        if !(self.readout_time >= 0.0 && self.readout_time < self.frame_period) {
            return Err(Error::InvalidInput(format!(
                "readout time {} must be in [0, frame period {})",
                self.readout_time, self.frame_period
            )));
        }
        Ok(())
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= self.width as f64
            && pixel.y <= self.height as f64
    }

    /// Pinhole projection; fails for points at or behind the image plane.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(p.z > 1e-9) {
            return Err(Error::Cheirality { depth: p.z });
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Projection and its 2×3 Jacobian.
    pub fn project_with_jacobian(
        &self,
        p: &Vector3<f64>,
    ) -> Result<(Vector2<f64>, nalgebra::Matrix2x3<f64>)> {
        let px = self.project(p)?;
        let iz = 1.0 / p.z;
        let j = nalgebra::Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz * iz,
        );
        Ok((px, j))
    }
}

/// Row-dependent capture time: `t_m + r·v/N_v`.
pub fn observation_time(frame_start: f64, row: f64, camera: &CameraModel) -> Result<f64> {
    let rows = camera.height as f64;
    if !(row >= 0.0 && row <= rows) {
        return Err(Error::InvalidInput(format!(
            "row {row} outside image of {rows} rows"
        )));
    }
    Ok(frame_start + camera.readout_time * row / rows)
}

/// Unit-norm viewing ray through a pixel (camera frame).
pub fn backproject_ray(pixel: &Vector2<f64>, camera: &CameraModel) -> Vector3<f64> {
    Vector3::new(
        (pixel.x - camera.cx) / camera.fx,
        (pixel.y - camera.cy) / camera.fy,
        1.0,
    )
    .normalize()
}

/// Rigid body → world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            position: Vector3::zeros(),
        }
    }

    pub fn at(traj: &Trajectory, t: f64) -> Result<Self> {
        Ok(Pose {
            rotation: traj.rotation.eval(t)?,
            position: traj.position.eval(t, 0)?,
        })
    }

    pub fn world_to_body(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub track_id: u64,
    pub frame: u32,
    pub pixel: Vector2<f64>,
    /// Start time of the frame (first row), seconds.
    pub frame_time: f64,
}

impl Observation {
    pub fn time(&self, camera: &CameraModel) -> Result<f64> {
        observation_time(self.frame_time, self.pixel.y, camera)
    }
}

/// Inverse-depth landmark anchored at its track's first observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub track_id: u64,
    pub reference: Observation,
    pub inverse_depth: f64,
}

/// All pixel observations, grouped by track and ordered by frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    pub observations: Vec<Observation>,
}

impl TrackSet {
    pub fn new(mut observations: Vec<Observation>) -> Self {
        observations.sort_by(|a, b| (a.track_id, a.frame).cmp(&(b.track_id, b.frame)));
        TrackSet { observations }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Contiguous per-track slices, in track-id order.
    pub fn tracks(&self) -> impl Iterator<Item = &[Observation]> {
        self.observations
            .chunk_by(|a, b| a.track_id == b.track_id)
    }
}

pub fn predict_gyro(traj: &Trajectory, t: f64, biases: &ImuBiases) -> Result<Vector3<f64>> {
    Ok(traj.rotation.angular_velocity(t)? + biases.gyro)
}

pub fn predict_accel(
    traj: &Trajectory,
    t: f64,
    biases: &ImuBiases,
    gravity: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let r = traj.rotation.eval(t)?;
    let acc = traj.position.eval(t, 2)?;
    Ok(r.transpose() * (acc - gravity) + biases.accel)
}

/// Gyroscope prediction for an IMU mounted with fixed rotation
/// `imu_from_body` relative to the trajectory frame.
pub fn predict_gyro_with_extrinsic(
    traj: &Trajectory,
    t: f64,
    biases: &ImuBiases,
    imu_from_body: &Matrix3<f64>,
) -> Result<Vector3<f64>> {
    Ok(imu_from_body * traj.rotation.angular_velocity(t)? + biases.gyro)
}

pub fn predict_accel_with_extrinsic(
    traj: &Trajectory,
    t: f64,
    biases: &ImuBiases,
    gravity: &Vector3<f64>,
    imu_from_body: &Matrix3<f64>,
) -> Result<Vector3<f64>> {
    let r = traj.rotation.eval(t)?;
    let acc = traj.position.eval(t, 2)?;
    Ok(imu_from_body * (r.transpose() * (acc - gravity)) + biases.accel)
}

/// Homogeneous landmark position in the observing camera frame:
/// `R_oᵀ (R_r·ray + ρ·(p_r − p_o))`. Any positive multiple projects to the
/// same pixel, which keeps ρ = 0 well defined.
pub fn landmark_in_camera(ray: &Vector3<f64>, rho: f64, reference: &Pose, observer: &Pose) -> Vector3<f64> {
    observer.rotation.transpose()
        * (reference.rotation * ray + (reference.position - observer.position) * rho)
}

/// Reprojects the reference observation into the observing pose.
pub fn reproject(
    reference_pixel: &Vector2<f64>,
    rho: f64,
    reference: &Pose,
    observer: &Pose,
    camera: &CameraModel,
) -> Result<Vector2<f64>> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "inverse depth must be nonnegative, got {rho}"
        )));
    }
    let ray = backproject_ray(reference_pixel, camera);
    camera.project(&landmark_in_camera(&ray, rho, reference, observer))
}

/// Huber cost of a 2D residual: `s²` for `s ≤ c`, else `2cs − c²`.
pub fn huber_cost(residual: &Vector2<f64>, c: f64) -> f64 {
    huber_of_norm(residual.norm(), c)
}

pub fn huber_of_norm(s: f64, c: f64) -> f64 {
    if s <= c {
        s * s
    } else {
        2.0 * c * s - c * c
    }
}

/// Iteratively reweighted least-squares weight: `ρ'(s²)`, 1 inside the knee.
pub fn huber_weight(s: f64, c: f64) -> f64 {
    if s <= c {
        1.0
    } else {
        c / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::{KnotGrid, SplineR3, SplineSO3};
    use crate::lie::{exp_mat, exp_quat};

    fn static_trajectory(r: Matrix3<f64>) -> Trajectory {
        let g = KnotGrid::new(-0.1, 0.1, 8).unwrap();
        let q = nalgebra::UnitQuaternion::from_matrix(&r);
        let rot = SplineSO3::new(g.t0, g.dt, vec![q; g.count]).unwrap();
        let pos = SplineR3::constant(g, Vector3::new(1.0, 2.0, 3.0));
        Trajectory::new(rot, pos).unwrap()
    }

    #[test]
    fn rolling_shutter_time() {
        let cam = CameraModel {
            height: 1080,
            readout_time: 0.03,
            ..CameraModel::default()
        };
        assert_eq!(observation_time(10.0, 0.0, &cam).unwrap(), 10.0);
        assert!((observation_time(10.0, 1080.0, &cam).unwrap() - 10.03).abs() < 1e-12);
        assert!((observation_time(10.0, 540.0, &cam).unwrap() - 10.015).abs() < 1e-12);
        assert!(observation_time(10.0, 1081.0, &cam).is_err());
        assert!(observation_time(10.0, -1.0, &cam).is_err());
    }

    #[test]
    fn static_imu_readings() {
        let g = default_gravity();
        let zero = ImuBiases::default();
        let traj = static_trajectory(Matrix3::identity());
        let a = predict_accel(&traj, 0.2, &zero, &g).unwrap();
        assert!((a - Vector3::new(0.0, 0.0, 9.81)).norm() < 1e-12);
        assert!(predict_gyro(&traj, 0.2, &zero).unwrap().norm() < 1e-12);
        let b = ImuBiases {
            gyro: Vector3::new(0.01, -0.02, 0.03),
            accel: Vector3::zeros(),
        };
        assert!((predict_gyro(&traj, 0.2, &b).unwrap() - b.gyro).norm() < 1e-12);

        let flipped = static_trajectory(exp_mat(&Vector3::new(std::f64::consts::PI, 0.0, 0.0)));
        let a = predict_accel(&flipped, 0.3, &zero, &g).unwrap();
        assert!((a - Vector3::new(0.0, 0.0, -9.81)).norm() < 1e-9);
    }

    #[test]
    fn free_fall_reads_zero() {
        let g = default_gravity();
        let grid = KnotGrid::new(-0.1, 0.1, 10).unwrap();
        // p(t) = ½ g t² sampled on the knots is reproduced with p̈ = g exactly
        // up to the quadratic-precision offset g·Δt²/6 in position only
        let cps = (0..grid.count)
            .map(|k| {
                let t = grid.knot_time(k);
                g * (0.5 * t * t)
            })
            .collect();
        let pos = SplineR3::new(grid.t0, grid.dt, cps).unwrap();
        let rot = SplineSO3::identity(grid);
        let traj = Trajectory::new(rot, pos).unwrap();
        let a = predict_accel(&traj, 0.33, &ImuBiases::default(), &g).unwrap();
        assert!(a.norm() < 1e-9, "{a:?}");
    }

    #[test]
    fn backprojection_round_trip() {
        let cam = CameraModel::default();
        let r = backproject_ray(&Vector2::new(cam.cx, cam.cy), &cam);
        assert!((r - Vector3::z()).norm() < 1e-15);
        let r = backproject_ray(&Vector2::new(cam.cx + cam.fx, cam.cy), &cam);
        assert!((r - Vector3::new(1.0, 0.0, 1.0).normalize()).norm() < 1e-15);
        for px in [Vector2::new(13.5, 1000.25), Vector2::new(1900.0, 3.0)] {
            let back = cam.project(&backproject_ray(&px, &cam)).unwrap();
            assert!((back - px).norm() < 1e-9);
        }
    }

    #[test]
    fn reprojection_cases() {
        let cam = CameraModel::default();
        let px = Vector2::new(700.0, 300.0);
        let pose = Pose {
            rotation: exp_mat(&Vector3::new(0.1, 0.2, -0.1)),
            position: Vector3::new(1.0, -1.0, 0.5),
        };
        for rho in [0.0, 0.3, 2.0] {
            let out = reproject(&px, rho, &pose, &pose, &cam).unwrap();
            assert!((out - px).norm() < 1e-9);
        }
        let moved = Pose {
            position: pose.position + Vector3::new(3.0, 1.0, -2.0),
            ..pose
        };
        let out = reproject(&px, 0.0, &pose, &moved, &cam).unwrap();
        assert!((out - px).norm() < 1e-9);

        // direct projection of an explicit world point
        let reference = pose;
        let observer = Pose {
            rotation: exp_mat(&Vector3::new(-0.05, 0.1, 0.02)),
            position: Vector3::new(1.3, -0.8, 0.2),
        };
        let ray = backproject_ray(&px, &cam);
        let depth = 7.5;
        let world = reference.rotation * (ray * depth) + reference.position;
        let direct = cam.project(&observer.world_to_body(&world)).unwrap();
        let via = reproject(&px, 1.0 / depth, &reference, &observer, &cam).unwrap();
        assert!((direct - via).norm() < 1e-9);
    }

    #[test]
    fn reprojection_behind_camera() {
        let cam = CameraModel::default();
        let px = Vector2::new(cam.cx, cam.cy);
        let observer = Pose {
            rotation: exp_mat(&Vector3::new(std::f64::consts::PI, 0.0, 0.0)),
            position: Vector3::zeros(),
        };
        assert!(matches!(
            reproject(&px, 0.5, &Pose::identity(), &observer, &cam),
            Err(Error::Cheirality { .. })
        ));
        let _ = exp_quat(&Vector3::zeros());
    }

    #[test]
    fn huber_values() {
        let c = 2.0;
        assert_eq!(huber_cost(&Vector2::new(1.0, 0.0), c), 1.0);
        assert_eq!(huber_cost(&Vector2::new(0.0, 2.0), c), 4.0);
        assert_eq!(huber_cost(&Vector2::new(3.0, 0.0), c), 8.0);
        // slope continuity at the knee: d/ds s² = 2c = d/ds (2cs − c²)
        let h = 1e-7;
        let left = (huber_of_norm(c, c) - huber_of_norm(c - h, c)) / h;
        let right = (huber_of_norm(c + h, c) - huber_of_norm(c, c)) / h;
        assert!((left - right).abs() < 1e-5);
    }
}
