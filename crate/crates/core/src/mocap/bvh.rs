//! BVH reader and writer.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::Array2;

use super::{AngleUnits, Channel, Joint, MotionClip, Skeleton};
use crate::error::{BvhErrorKind, Error, Result};

/// Decimal places used for offsets and frame values.
pub const DECIMALS: usize = 6;

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|&(_, t)| t)
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).map_or(self.last_line, |&(l, _)| l)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::bvh(self.line(), BvhErrorKind::Hierarchy(msg.into()))
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        let item = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(item)
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let line = self.line();
        let (_, tok) = self.next()?;
        if tok == want {
            Ok(())
        } else {
            Err(Error::bvh(
                line,
                BvhErrorKind::Hierarchy(format!("expected {want:?}, found {tok:?}")),
            ))
        }
    }

    /// Remaining tokens on the current line, joined by single spaces.
    fn rest_of_line(&mut self) -> Result<String> {
        let line = self.line();
        let mut words = Vec::new();
        while let Some(&(l, t)) = self.items.get(self.pos) {
            if l != line {
                break;
            }
            words.push(t);
            self.pos += 1;
        }
        if words.is_empty() {
            return Err(self.err("missing joint name"));
        }
        Ok(words.join(" "))
    }

    fn number(&mut self) -> Result<f64> {
        let (line, tok) = self.next()?;
        parse_number(tok, line)
    }

    fn vec3(&mut self) -> Result<[f64; 3]> {
        Ok([self.number()?, self.number()?, self.number()?])
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::bvh(line, BvhErrorKind::NotANumber(tok.to_string()))),
    }
}

fn parse_joint(toks: &mut Tokens<'_>, name: String, parent: Option<usize>, joints: &mut Vec<Joint>) -> Result<()> {
    toks.expect("{")?;
    toks.expect("OFFSET")?;
    let offset = toks.vec3()?;
    let mut channels = Vec::new();
    if toks.peek() == Some("CHANNELS") {
        toks.next()?;
        let (line, tok) = toks.next()?;
        let n: usize = tok
            .parse()
            .map_err(|_| Error::bvh(line, BvhErrorKind::Hierarchy(format!("bad channel count {tok:?}"))))?;
        for _ in 0..n {
            let (line, tok) = toks.next()?;
            let ch = Channel::parse(tok)
                .ok_or_else(|| Error::bvh(line, BvhErrorKind::Hierarchy(format!("unknown channel {tok:?}"))))?;
            channels.push(ch);
        }
    }
    let index = joints.len();
    joints.push(Joint {
        name,
        parent,
        offset,
        channels,
        end_site: None,
    });
    loop {
        let line = toks.line();
        match toks.next()?.1 {
            "JOINT" => {
                let name = toks.rest_of_line()?;
                parse_joint(toks, name, Some(index), joints)?;
            }
            "End" => {
                toks.expect("Site")?;
                toks.expect("{")?;
                toks.expect("OFFSET")?;
                let site = toks.vec3()?;
                toks.expect("}")?;
                if joints[index].end_site.replace(site).is_some() {
                    return Err(Error::bvh(line, BvhErrorKind::Hierarchy("second End Site".into())));
                }
            }
            "}" => return Ok(()),
            other => {
                return Err(Error::bvh(
                    line,
                    BvhErrorKind::Hierarchy(format!("unexpected {other:?} in joint body")),
                ))
            }
        }
    }
}

/// Parses a BVH document. Rotation channels stay in Euler degrees.
pub fn parse_bvh(text: &str) -> Result<(Arc<Skeleton>, MotionClip)> {
    let lines: Vec<&str> = text.lines().collect();
    let motion_at = lines
        .iter()
        .position(|l| l.trim() == "MOTION")
        .ok_or_else(|| Error::bvh(lines.len(), BvhErrorKind::Hierarchy("missing MOTION section".into())))?;

    let mut toks = Tokens {
        items: lines[..motion_at]
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect(),
        pos: 0,
        last_line: motion_at + 1,
    };
    toks.expect("HIERARCHY")?;
    toks.expect("ROOT")?;
    let name = toks.rest_of_line()?;
    let mut joints = Vec::new();
    parse_joint(&mut toks, name, None, &mut joints)?;
    if let Some(t) = toks.peek() {
        return Err(toks.err(format!("unexpected {t:?} after root joint")));
    }
    let skeleton = Arc::new(Skeleton::new(joints).map_err(|e| toks.err(e.to_string()))?);
    let width = skeleton.num_channels();

    let motion_err = |line: usize, msg: &str| Error::bvh(line, BvhErrorKind::Motion(msg.to_string()));
    let mut rest = lines
        .iter()
        .enumerate()
        .skip(motion_at + 1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, frames_line) = rest
        .next()
        .ok_or_else(|| motion_err(motion_at + 1, "missing Frames:"))?;
    let count = frames_line
        .strip_prefix("Frames:")
        .ok_or_else(|| motion_err(line, "expected Frames:"))?
        .trim();
    let count: usize = count
        .parse()
        .map_err(|_| Error::bvh(line, BvhErrorKind::NotANumber(count.to_string())))?;
    if count == 0 {
        return Err(motion_err(line, "clip has zero frames"));
    }

    let (line, time_line) = rest.next().ok_or_else(|| motion_err(line, "missing Frame Time:"))?;
    let frame_time = time_line
        .strip_prefix("Frame Time:")
        .ok_or_else(|| motion_err(line, "expected Frame Time:"))?
        .trim();
    let frame_time = parse_number(frame_time, line)?;
    if frame_time <= 0.0 {
        return Err(motion_err(line, "frame time must be positive"));
    }

    let mut data = Vec::with_capacity(count * width);
    let mut rows = 0;
    for (line, text) in rest {
        if rows == count {
            return Err(motion_err(line, "more frame rows than declared"));
        }
        let before = data.len();
        for tok in text.split_whitespace() {
            data.push(parse_number(tok, line)?);
        }
        let found = data.len() - before;
        if found != width {
            return Err(Error::bvh(line, BvhErrorKind::ChannelCount { expected: width, found }));
        }
        rows += 1;
    }
    if rows != count {
        return Err(motion_err(
            lines.len(),
            &format!("declared {count} frames, found {rows}"),
        ));
    }
    let frames = Array2::from_shape_vec((count, width), data).expect("row widths checked");
    let clip = MotionClip::new(frames, 1.0 / frame_time, AngleUnits::EulerDegrees, skeleton.clone())?;
    Ok((skeleton, clip))
}

fn write_joint(out: &mut String, skeleton: &Skeleton, j: usize, depth: usize) {
    let joint = &skeleton.joints()[j];
    let pad = "\t".repeat(depth);
    let kw = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let [x, y, z] = joint.offset;
    let _ = writeln!(out, "{pad}{kw} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}\tOFFSET {x:.DECIMALS$} {y:.DECIMALS$} {z:.DECIMALS$}");
    if !joint.channels.is_empty() {
        let names: Vec<&str> = joint.channels.iter().map(|c| c.as_str()).collect();
        let _ = writeln!(out, "{pad}\tCHANNELS {} {}", names.len(), names.join(" "));
    }
    for child in skeleton.children(j) {
        write_joint(out, skeleton, child, depth + 1);
    }
    if let Some([x, y, z]) = joint.end_site {
        let _ = writeln!(out, "{pad}\tEnd Site");
        let _ = writeln!(out, "{pad}\t{{");
        let _ = writeln!(out, "{pad}\t\tOFFSET {x:.DECIMALS$} {y:.DECIMALS$} {z:.DECIMALS$}");
        let _ = writeln!(out, "{pad}\t}}");
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Serializes a clip as BVH. Exponential-map clips are converted to Euler
/// degrees first. `Frame Time` is written as the shortest decimal that
/// round-trips `1 / frame_rate`.
pub fn write_bvh(skeleton: &Skeleton, clip: &MotionClip) -> Result<String> {
    if clip.width() != skeleton.num_channels() {
        return Err(Error::Shape(format!(
            "clip has {} columns, skeleton has {} channels",
            clip.width(),
            skeleton.num_channels()
        )));
    }
    let clip = clip.to_euler_degrees()?;
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, skeleton, 0, 0);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", clip.len());
    let _ = writeln!(out, "Frame Time: {}", 1.0 / clip.frame_rate());
    for row in clip.frames().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.DECIMALS$}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    Ok(out)
}
