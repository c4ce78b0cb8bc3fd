//! CSV formats for IMU logs, feature tracks and trajectories.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::bspline::Trajectory;
use crate::error::{Error, Result};
use crate::sensors::{ImuLog, ImuSample, Observation, TrackSet};

pub const IMU_HEADER: [&str; 7] = ["t", "gx", "gy", "gz", "ax", "ay", "az"];
pub const TRACKS_HEADER: [&str; 5] = ["track_id", "frame", "u", "v", "frame_time"];
pub const TRAJECTORY_HEADER: [&str; 8] = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];

/// One IMU sample: time (s), angular velocity (rad/s), specific force (m/s²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuCsvRecord {
    pub t: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackCsvRecord {
    pub track_id: u64,
    pub frame: u32,
    pub u: f64,
    pub v: f64,
    pub frame_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCsvRecord {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    Error::Parse { line, message }
}

/// Strictly parses CSV with the exact `header`, returning each record with
/// its line number.
fn read_records<T: DeserializeOwned, R: Read>(reader: R, header: &[&str]) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let found = rdr.headers().map_err(csv_error)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        let rec = rec.map_err(csv_error)?;
        out.push((out.len() + 2, rec));
    }
    Ok(out)
}

fn write_records<T: Serialize, W: Write>(writer: W, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn parse_imu_csv<R: Read>(reader: R) -> Result<ImuLog> {
    let records: Vec<(usize, ImuCsvRecord)> = read_records(reader, &IMU_HEADER)?;
    let mut samples = Vec::with_capacity(records.len());
    for (line, r) in records {
        let values = [r.t, r.gx, r.gy, r.gz, r.ax, r.ay, r.az];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        if let Some(prev) = samples.last().map(|s: &ImuSample| s.t) {
            if !(r.t > prev) {
                return Err(Error::Parse {
                    line,
                    message: format!("time {} does not increase (previous {prev})", r.t),
                });
            }
        }
        samples.push(ImuSample {
            t: r.t,
            omega: Vector3::new(r.gx, r.gy, r.gz),
            accel: Vector3::new(r.ax, r.ay, r.az),
        });
    }
    if samples.len() < 2 {
        return Err(Error::Parse {
            line: samples.len() + 1,
            message: "IMU log needs at least two samples".into(),
        });
    }
    ImuLog::new(samples)
}

pub fn read_imu_csv(path: &Path) -> Result<ImuLog> {
    parse_imu_csv(open(path)?)
}

pub fn write_imu<W: Write>(writer: W, imu: &ImuLog) -> Result<()> {
    write_records(
        writer,
        imu.samples.iter().map(|s| ImuCsvRecord {
            t: s.t,
            gx: s.omega.x,
            gy: s.omega.y,
            gz: s.omega.z,
            ax: s.accel.x,
            ay: s.accel.y,
            az: s.accel.z,
        }),
    )
}

pub fn write_imu_csv(path: &Path, imu: &ImuLog) -> Result<()> {
    write_imu(create(path)?, imu)
}

pub fn parse_tracks_csv<R: Read>(reader: R) -> Result<TrackSet> {
    let records: Vec<(usize, TrackCsvRecord)> = read_records(reader, &TRACKS_HEADER)?;
    let mut obs = Vec::with_capacity(records.len());
    for (line, r) in records {
        if ![r.u, r.v, r.frame_time].iter().all(|v| v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        obs.push(Observation {
            track_id: r.track_id,
            frame: r.frame,
            pixel: Vector2::new(r.u, r.v),
            frame_time: r.frame_time,
        });
    }
    Ok(TrackSet::new(obs))
}

pub fn read_tracks_csv(path: &Path) -> Result<TrackSet> {
    parse_tracks_csv(open(path)?)
}

pub fn write_tracks<W: Write>(writer: W, tracks: &TrackSet) -> Result<()> {
    write_records(
        writer,
        tracks.observations.iter().map(|o| TrackCsvRecord {
            track_id: o.track_id,
            frame: o.frame,
            u: o.pixel.x,
            v: o.pixel.y,
            frame_time: o.frame_time,
        }),
    )
}

pub fn write_tracks_csv(path: &Path, tracks: &TrackSet) -> Result<()> {
    write_tracks(create(path)?, tracks)
}

/// Poses every `1/rate` seconds over `[t0, t1]`.
pub fn sample_trajectory(traj: &Trajectory, t0: f64, t1: f64, rate: f64) -> Result<Vec<TrajectoryCsvRecord>> {
    if !(rate > 0.0 && t1 >= t0) {
        return Err(Error::InvalidInput("trajectory sampling needs rate > 0 and t1 ≥ t0".into()));
    }
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let t = (t0 + i as f64 / rate).min(t1);
            let p = traj.position.eval(t, 0)?;
            let r = Rotation3::from_matrix_unchecked(traj.rotation.eval(t)?);
            let q = UnitQuaternion::from_rotation_matrix(&r);
            let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
            Ok(TrajectoryCsvRecord {
                t,
                px: p.x,
                py: p.y,
                pz: p.z,
                qw: q.w,
                qx: q.i,
                qy: q.j,
                qz: q.k,
            })
        })
        .collect()
}

pub fn write_trajectory<W: Write>(writer: W, records: &[TrajectoryCsvRecord]) -> Result<()> {
    write_records(writer, records)
}

pub fn parse_trajectory_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryCsvRecord>> {
    Ok(read_records(reader, &TRAJECTORY_HEADER)?.into_iter().map(|(_, r)| r).collect())
}

/// Writes rows to `path` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_records(create(path)?, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IMU: &str = "t,gx,gy,gz,ax,ay,az\n0,0.1,0,0,0,0,9.81\n0.01,0.2,0,0,0,0,9.81\n0.02,0.3,0,0,0,0,9.8\n";

    #[test]
    fn imu_round_trip() {
        let log = parse_imu_csv(IMU.as_bytes()).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.samples[1].omega.x, 0.2);
        let mut buf = Vec::new();
        write_imu(&mut buf, &log).unwrap();
        assert!(buf.starts_with(b"t,gx,gy,gz,ax,ay,az\n"));
        assert_eq!(parse_imu_csv(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn imu_errors_carry_line_numbers() {
        let line_of = |text: &str| match parse_imu_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        };
        assert_eq!(line_of("t,gx,gy,gz,ax,ay\n0,0,0,0,0,0\n"), 1);
        assert_eq!(line_of("t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n1,0,0,0,0,0\n"), 3);
        assert_eq!(line_of("t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n1,0,x,0,0,0,0\n"), 3);
        assert_eq!(line_of("t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n1,0,0,0,0,0,0\n1,0,0,0,0,0,0\n"), 4);
        assert_eq!(line_of("t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n1,0,0,NaN,0,0,0\n"), 3);
    }

    #[test]
    fn tracks_round_trip_and_header() {
        let text = "track_id,frame,u,v,frame_time\n2,1,10.5,20,0.0333\n1,0,5,6,0\n2,0,10,19,0\n";
        let tracks = parse_tracks_csv(text.as_bytes()).unwrap();
        assert_eq!(tracks.observations[0].track_id, 1);
        let mut buf = Vec::new();
        write_tracks(&mut buf, &tracks).unwrap();
        assert_eq!(parse_tracks_csv(buf.as_slice()).unwrap(), tracks);
        assert!(parse_tracks_csv("track,frame,u,v,frame_time\n".as_bytes()).is_err());
    }
}
