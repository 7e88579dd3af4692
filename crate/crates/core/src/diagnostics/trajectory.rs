use std::io;
use std::path::{Path, PathBuf};

use crate::lattice::{read_snapshot, write_snapshot, LatticeError, ScalarField};
use crate::stepper::{Observer, StepDiagnostics, StepState};

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub step: usize,
    pub time: f64,
    pub u: ScalarField,
    pub p: ScalarField,
}

/// Snapshot frames in increasing time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn single(u: ScalarField, p: ScalarField) -> Self {
        Self {
            frames: vec![Frame {
                step: 0,
                time: 0.0,
                u,
                p,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Consecutive frame pairs with their time increment.
    pub fn intervals(&self) -> impl Iterator<Item = (&Frame, &Frame, f64)> {
        self.frames.windows(2).map(|w| (&w[0], &w[1], w[1].time - w[0].time))
    }

    /// Frame at `time`, if one was recorded within `tol`.
    pub fn at_time(&self, time: f64, tol: f64) -> Option<&Frame> {
        self.frames.iter().find(|f| (f.time - time).abs() <= tol)
    }

    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        for f in &self.frames {
            write_frame(dir, f.step, f.time, &f.u, &f.p)?;
        }
        Ok(())
    }

    /// Reads every `snap_<step>_u.fpm` / `snap_<step>_p.fpm` pair in `dir`.
    pub fn read_dir(dir: &Path) -> Result<Self, LatticeError> {
        let mut steps = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(step) = name
                .strip_prefix("snap_")
                .and_then(|r| r.strip_suffix("_u.fpm"))
                .and_then(|r| r.parse::<usize>().ok())
            {
                steps.push(step);
            }
        }
        steps.sort_unstable();
        let mut frames = Vec::with_capacity(steps.len());
        for step in steps {
            let (pu, pp) = frame_paths(dir, step);
            let u = read_snapshot(&pu)?;
            let p = read_snapshot(&pp)?;
            u.field.ensure_same_grid(&p.field)?;
            if u.time != p.time {
                return Err(LatticeError::BadSnapshot(format!(
                    "step {step}: u at t = {}, p at t = {}",
                    u.time, p.time
                )));
            }
            frames.push(Frame {
                step,
                time: u.time,
                u: u.field,
                p: p.field,
            });
        }
        Ok(Self { frames })
    }
}

pub fn frame_paths(dir: &Path, step: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("snap_{step:06}_u.fpm")),
        dir.join(format!("snap_{step:06}_p.fpm")),
    )
}

pub fn write_frame(dir: &Path, step: usize, time: f64, u: &ScalarField, p: &ScalarField) -> io::Result<()> {
    let (pu, pp) = frame_paths(dir, step);
    write_snapshot(&pu, u, time, "u")?;
    write_snapshot(&pp, p, time, "p")
}

/// Observer that keeps every snapshot in memory.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryRecorder {
    pub trajectory: Trajectory,
}

impl Observer for TrajectoryRecorder {
    fn on_step(&mut self, _: usize, _: &StepState, _: &StepDiagnostics) -> io::Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, step: usize, state: &StepState) -> io::Result<()> {
        self.trajectory.frames.push(Frame {
            step,
            time: state.t,
            u: state.u.clone(),
            p: state.p.clone(),
        });
        Ok(())
    }
}
