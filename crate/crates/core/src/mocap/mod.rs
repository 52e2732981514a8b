//! Skeletal motion capture: BVH I/O, rotation conversions, normalization and
//! dataset handling.

pub mod bvh;
pub mod dataset;
pub mod rotation;
pub mod stats;

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rotation::{Axis, EulerOrder};

pub use bvh::{parse_bvh, write_bvh};
pub use dataset::{resample, sample_clip, DatasetEntry, DatasetSplit};
pub use stats::{compute_stats, NormalizationStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn parse(s: &str) -> Option<Channel> {
        Some(match s {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    /// The rotation axis, or `None` for translation channels.
    pub fn rotation_axis(self) -> Option<Axis> {
        match self {
            Channel::Xrotation => Some(Axis::X),
            Channel::Yrotation => Some(Axis::Y),
            Channel::Zrotation => Some(Axis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    /// `None` for the root.
    pub parent: Option<usize>,
    pub offset: [f64; 3],
    pub channels: Vec<Channel>,
    /// Offset of the `End Site` block, for leaf joints that have one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_site: Option<[f64; 3]>,
}

/// A joint hierarchy in BVH file order (depth-first preorder).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Joint>", into = "Vec<Joint>")]
pub struct Skeleton {
    joints: Vec<Joint>,
}

/// Where one joint's three rotation channels live in a frame row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RotationSlot {
    pub joint: usize,
    /// Columns holding the X, Y and Z components (in that order).
    pub columns: [usize; 3],
    /// Composition order of the joint's Euler channels as listed in the file.
    pub order: EulerOrder,
}

impl Skeleton {
    /// Checks that there is exactly one root (the first joint) and that the
    /// joints form a depth-first preorder, which is what BVH can express.
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if joints.is_empty() {
            return bad("skeleton has no joints".into());
        }
        if joints[0].parent.is_some() {
            return bad("first joint must be the root".into());
        }
        // ancestors of the previous joint, root first
        let mut stack: Vec<usize> = vec![0];
        for (j, joint) in joints.iter().enumerate().skip(1) {
            let Some(p) = joint.parent else {
                return bad(format!("joint {} is a second root", joint.name));
            };
            if p >= j {
                return bad(format!("joint {} has parent index {p} >= {j}", joint.name));
            }
            while stack.last().is_some_and(|&top| top != p) {
                stack.pop();
            }
            if stack.is_empty() {
                return bad(format!("joint {} breaks depth-first order", joint.name));
            }
            stack.push(j);
        }
        Ok(Self { joints })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn num_channels(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    /// First column of each joint's channels in a frame row.
    pub fn channel_starts(&self) -> Vec<usize> {
        let mut start = 0;
        self.joints
            .iter()
            .map(|j| {
                let s = start;
                start += j.channels.len();
                s
            })
            .collect()
    }

    /// `joint.Channel` labels in column order.
    pub fn channel_names(&self) -> Vec<String> {
        self.joints
            .iter()
            .flat_map(|j| j.channels.iter().map(move |c| format!("{}.{}", j.name, c)))
            .collect()
    }

    pub fn children(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        self.joints
            .iter()
            .enumerate()
            .filter(move |(_, j)| j.parent == Some(joint))
            .map(|(i, _)| i)
    }

    /// Rotation slots for every joint with rotation channels. Each such joint
    /// must have exactly one rotation channel per axis.
    pub fn rotation_layout(&self) -> Result<Vec<RotationSlot>> {
        let starts = self.channel_starts();
        let mut slots = Vec::new();
        for (j, joint) in self.joints.iter().enumerate() {
            let rot: Vec<(usize, Axis)> = joint
                .channels
                .iter()
                .enumerate()
                .filter_map(|(c, ch)| ch.rotation_axis().map(|a| (starts[j] + c, a)))
                .collect();
            if rot.is_empty() {
                continue;
            }
            let axes: Option<[Axis; 3]> = rot.iter().map(|&(_, a)| a).collect::<Vec<_>>().try_into().ok();
            let order = axes.and_then(EulerOrder::new).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "joint {} needs one rotation channel per axis, has {}",
                    joint.name,
                    rot.len()
                ))
            })?;
            let mut columns = [0; 3];
            for &(col, axis) in &rot {
                columns[axis.index()] = col;
            }
            slots.push(RotationSlot {
                joint: j,
                columns,
                order,
            });
        }
        Ok(slots)
    }
}

impl TryFrom<Vec<Joint>> for Skeleton {
    type Error = Error;

    fn try_from(joints: Vec<Joint>) -> Result<Self> {
        Skeleton::new(joints)
    }
}

impl From<Skeleton> for Vec<Joint> {
    fn from(s: Skeleton) -> Vec<Joint> {
        s.joints
    }
}

/// How rotation channels are encoded in a clip's frame rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleUnits {
    /// BVH Euler angles in degrees, composed in channel order.
    EulerDegrees,
    /// Exponential-map components in radians; the column labelled
    /// `Xrotation` holds the x component and so on.
    ExpMap,
}

/// An `N x M` matrix of frames at a fixed rate over a shared skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    frames: Array2<f64>,
    frame_rate: f64,
    units: AngleUnits,
    skeleton: Arc<Skeleton>,
}

impl MotionClip {
    pub fn new(frames: Array2<f64>, frame_rate: f64, units: AngleUnits, skeleton: Arc<Skeleton>) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::InvalidArgument("clip has no frames".into()));
        }
        if frames.ncols() != skeleton.num_channels() {
            return Err(Error::Shape(format!(
                "clip has {} columns, skeleton has {} channels",
                frames.ncols(),
                skeleton.num_channels()
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("frame rate {frame_rate}")));
        }
        if frames.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("clip frames".into()));
        }
        Ok(Self {
            frames,
            frame_rate,
            units,
            skeleton,
        })
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    /// Always false; clips have at least one frame.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn units(&self) -> AngleUnits {
        self.units
    }

    pub fn skeleton(&self) -> &Arc<Skeleton> {
        &self.skeleton
    }

    /// Same metadata, new frames.
    pub fn with_frames(&self, frames: Array2<f64>) -> Result<Self> {
        Self::new(frames, self.frame_rate, self.units, self.skeleton.clone())
    }

    /// Converts rotation channels to exponential maps. Translation channels are untouched.
    pub fn to_expmap(&self) -> Result<Self> {
        match self.units {
            AngleUnits::ExpMap => Ok(self.clone()),
            AngleUnits::EulerDegrees => {
                let layout = self.skeleton.rotation_layout()?;
                let mut out = self.frames.clone();
                for mut row in out.rows_mut() {
                    for slot in &layout {
                        let axes = slot.order.axes();
                        let angles = axes.map(|a| row[slot.columns[a.index()]].to_radians());
                        let r = rotation::euler_to_rotmat(angles, slot.order);
                        let v = rotation::rotmat_to_expmap(&r);
                        for (axis, &col) in slot.columns.iter().enumerate() {
                            row[col] = v[axis];
                        }
                    }
                }
                let mut clip = self.with_frames(out)?;
                clip.units = AngleUnits::ExpMap;
                Ok(clip)
            }
        }
    }

    /// Converts rotation channels back to BVH Euler degrees.
    pub fn to_euler_degrees(&self) -> Result<Self> {
        match self.units {
            AngleUnits::EulerDegrees => Ok(self.clone()),
            AngleUnits::ExpMap => {
                let layout = self.skeleton.rotation_layout()?;
                let mut out = self.frames.clone();
                for mut row in out.rows_mut() {
                    for slot in &layout {
                        let v = slot.columns.map(|c| row[c]);
                        let r = rotation::expmap_to_rotmat(v);
                        let angles = rotation::rotmat_to_euler(&r, slot.order);
                        for (k, axis) in slot.order.axes().into_iter().enumerate() {
                            row[slot.columns[axis.index()]] = angles[k].to_degrees();
                        }
                    }
                }
                let mut clip = self.with_frames(out)?;
                clip.units = AngleUnits::EulerDegrees;
                Ok(clip)
            }
        }
    }
}
