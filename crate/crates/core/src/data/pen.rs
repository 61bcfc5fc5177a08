//! Pen-trajectory ingestion and the raster pipeline: trajectories are fitted
//! into an 80×80 binary image, then block-averaged to a 20×20 grid and
//! flattened into a 400-dimensional feature vector.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Error, Result};
use crate::nn::Matrix;

pub const RASTER: usize = 80;
pub const BLOCK: usize = 4;
pub const GRID: usize = RASTER / BLOCK;
pub const FEATURE_DIM: usize = GRID * GRID;

/// One handwritten digit: strokes of pen coordinates, the digit and the
/// writer. Consecutive points are joined only within a stroke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenTrajectory {
    pub strokes: Vec<Vec<(f64, f64)>>,
    pub digit: usize,
    pub writer: String,
}

impl PenTrajectory {
    pub fn new(strokes: Vec<Vec<(f64, f64)>>, digit: usize, writer: impl Into<String>) -> Result<Self> {
        let t = Self {
            strokes,
            digit,
            writer: writer.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_count() < 2 {
            return Err(input("a trajectory needs at least two points"));
        }
        if self.points().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(input("trajectory has non-finite coordinates"));
        }
        if self.digit >= 10 {
            return Err(input(format!("digit label {} outside [0, 10)", self.digit)));
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.strokes.iter().flatten().copied()
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Vec::len).sum()
    }

    /// Same trajectory with every coordinate mapped through `f`.
    pub fn map_points(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self {
            strokes: self
                .strokes
                .iter()
                .map(|s| s.iter().map(|&(x, y)| f(x, y)).collect())
                .collect(),
            digit: self.digit,
            writer: self.writer.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    /// `RASTER × RASTER`, entries in {0, 1}; row 0 is the top.
    pub image: Matrix,
    /// All points coincided; the image is a single centred pixel.
    pub degenerate: bool,
}

fn bresenham(img: &mut Matrix, (c0, r0): (i64, i64), (c1, r1): (i64, i64)) {
    let (dx, dy) = ((c1 - c0).abs(), -(r1 - r0).abs());
    let (sx, sy) = (if c0 < c1 { 1 } else { -1 }, if r0 < r1 { 1 } else { -1 });
    let (mut c, mut r, mut err) = (c0, r0, dx + dy);
    loop {
        img.set(r as usize, c as usize, 1.0);
        if c == c1 && r == r1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            c += sx;
        }
        if e2 <= dx {
            err += dx;
            r += sy;
        }
    }
}

/// Aspect-preserving min-max fit into the frame, centred on the
/// unconstrained axis, strokes drawn with Bresenham lines. Larger `y` is
/// drawn higher in the image.
pub fn rasterize(traj: &PenTrajectory) -> Result<Raster> {
    traj.validate()?;
    let mut img = Matrix::zeros(RASTER, RASTER);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in traj.points() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let extent = w.max(h);
    if extent == 0.0 {
        img.set(RASTER / 2, RASTER / 2, 1.0);
        return Ok(Raster {
            image: img,
            degenerate: true,
        });
    }
    let span = (RASTER - 1) as f64;
    let (ox, oy) = ((span - w / extent * span) / 2.0, (span - h / extent * span) / 2.0);
    let to_pixel = |x: f64, y: f64| -> (i64, i64) {
        let c = ox + (x - x0) / extent * span;
        let r = span - (oy + (y - y0) / extent * span);
        (c.round() as i64, r.round() as i64)
    };
    for stroke in &traj.strokes {
        let mut prev: Option<(i64, i64)> = None;
        for &(x, y) in stroke {
            let p = to_pixel(x, y);
            bresenham(&mut img, prev.unwrap_or(p), p);
            prev = Some(p);
        }
    }
    Ok(Raster {
        image: img,
        degenerate: false,
    })
}

/// `BLOCK × BLOCK` averaging of an `RASTER × RASTER` image.
pub fn downsample(img: &Matrix) -> Result<Matrix> {
    if img.shape() != (RASTER, RASTER) {
        return Err(shape(format!(
            "expected a {RASTER}×{RASTER} image, got {:?}",
            img.shape()
        )));
    }
    let mut out = Matrix::zeros(GRID, GRID);
    let scale = 1.0 / (BLOCK * BLOCK) as f64;
    for r in 0..RASTER {
        for c in 0..RASTER {
            let v = img.get(r, c);
            if v != 0.0 {
                let (gr, gc) = (r / BLOCK, c / BLOCK);
                out.set(gr, gc, out.get(gr, gc) + v * scale);
            }
        }
    }
    Ok(out)
}

/// Full pipeline: rasterize, downsample, flatten row-major.
pub fn features(traj: &PenTrajectory) -> Result<(Vec<f64>, bool)> {
    let raster = rasterize(traj)?;
    Ok((downsample(&raster.image)?.into_vec(), raster.degenerate))
}

/// Digit, strokes and writer of the sample being read.
type Pending = (usize, Vec<Vec<(f64, f64)>>, String);

/// Reads trajectories from a UNIPEN-style pen-digits file.
///
/// Recognised directives: `.SEGMENT DIGIT … "d"` starts a sample labelled
/// `d` (the last quoted or bare token), `.PEN_DOWN` / `.PEN_UP` delimit
/// strokes whose lines are `x y` integer pairs, and the writer is taken from
/// `.WRITER_ID <id>` or from a `.COMMENT` line containing `writer <id>`.
/// Other directives are ignored. Samples with fewer than two points are
/// skipped and counted.
pub fn read_unipen<R: BufRead>(reader: R, default_writer: &str) -> Result<UnipenFile> {
    let mut out = UnipenFile::default();
    let mut writer = default_writer.to_string();
    let mut current: Option<Pending> = None;
    let mut pen_down = false;
    let finish = |cur: Option<Pending>, out: &mut UnipenFile| {
        if let Some((digit, strokes, w)) = cur {
            let strokes: Vec<_> = strokes.into_iter().filter(|s| !s.is_empty()).collect();
            match PenTrajectory::new(strokes, digit, w) {
                Ok(t) => out.trajectories.push(t),
                Err(_) => out.skipped += 1,
            }
        }
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('.') {
            let mut toks = rest.split_whitespace();
            let keyword = toks.next().unwrap_or("");
            match keyword {
                "SEGMENT" => {
                    finish(current.take(), &mut out);
                    pen_down = false;
                    let label = rest
                        .split_whitespace()
                        .rev()
                        .map(|s| s.trim_matches('"'))
                        .find(|s| !s.is_empty())
                        .ok_or_else(|| unipen_err(lineno, "segment without label"))?;
                    match label.parse::<usize>() {
                        Ok(d) if d < 10 => current = Some((d, Vec::new(), writer.clone())),
                        _ => {
                            out.skipped += 1;
                        }
                    }
                }
                "PEN_DOWN" => {
                    pen_down = true;
                    if let Some(c) = current.as_mut() {
                        c.1.push(Vec::new());
                    }
                }
                "PEN_UP" => pen_down = false,
                "WRITER_ID" => {
                    if let Some(w) = toks.next() {
                        writer = w.to_string();
                    }
                }
                "COMMENT" => {
                    let words: Vec<&str> = toks.collect();
                    if let Some(p) = words.iter().position(|w| w.eq_ignore_ascii_case("writer")) {
                        if let Some(w) = words.get(p + 1) {
                            writer = w.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
                        }
                    }
                }
                _ => {}
            }
            continue;
        }
        if !pen_down {
            continue;
        }
        let Some(cur) = current.as_mut() else { continue };
        let nums: Vec<f64> = t
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| unipen_err(lineno, format!("bad coordinate line `{t}`")))?;
        if nums.len() < 2 {
            return Err(unipen_err(lineno, format!("coordinate line needs x and y: `{t}`")));
        }
        if let Some(stroke) = cur.1.last_mut() {
            stroke.push((nums[0], nums[1]));
        }
    }
    finish(current.take(), &mut out);
    Ok(out)
}

fn unipen_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnipenFile {
    pub trajectories: Vec<PenTrajectory>,
    pub skipped: usize,
}
