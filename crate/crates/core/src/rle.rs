//! Run-length encoded binary masks.
//!
//! Counts follow the COCO convention: column-major pixel order (pixel `(row, col)` lives at
//! flat index `row + height * col`), runs alternate background/foreground and always start
//! with a background run, which may be zero-length when the first pixel is foreground.
//!
//! Area, intersection and union are computed by walking the run lists; nothing here decodes
//! to pixels except [`RleMask::decode`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RleError {
    #[error("mask dimensions must be positive, got {height}x{width}")]
    EmptyDimensions { height: u32, width: u32 },
    #[error("run lengths sum to {actual} but a {height}x{width} mask has {expected} pixels")]
    CountSumMismatch {
        height: u32,
        width: u32,
        expected: u64,
        actual: u64,
    },
    #[error("negative run length {value} at position {index}")]
    NegativeRun { index: usize, value: i64 },
    #[error("invalid byte {byte:#04x} at offset {offset} in compressed counts")]
    InvalidByte { offset: usize, byte: u8 },
    #[error("compressed counts end in the middle of a value")]
    Truncated,
    #[error("mask dimensions differ: {a_height}x{a_width} vs {b_height}x{b_width}")]
    DimensionMismatch {
        a_height: u32,
        a_width: u32,
        b_height: u32,
        b_width: u32,
    },
    #[error("bitmask has {actual} pixels, expected {expected}")]
    BitmaskSize { expected: usize, actual: usize },
}

/// A dense binary mask stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmask {
    height: u32,
    width: u32,
    pixels: Vec<bool>,
}

impl Bitmask {
    pub fn new(height: u32, width: u32) -> Self {
        Bitmask {
            height,
            width,
            pixels: vec![false; height as usize * width as usize],
        }
    }

    /// Wraps column-major pixels.
    pub fn from_pixels(height: u32, width: u32, pixels: Vec<bool>) -> Result<Self, RleError> {
        let expected = height as usize * width as usize;
        if pixels.len() != expected {
            return Err(RleError::BitmaskSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Bitmask {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.pixels[row as usize + self.height as usize * col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let h = self.height as usize;
        self.pixels[row as usize + h * col as usize] = value;
    }

    pub fn count_ones(&self) -> u64 {
        self.pixels.iter().filter(|&&p| p).count() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl RleMask {
    /// Builds a mask from uncompressed counts, validating the pixel total and folding any
    /// zero-length interior runs into canonical form.
    pub fn new(height: u32, width: u32, counts: Vec<u32>) -> Result<Self, RleError> {
        if height == 0 || width == 0 {
            return Err(RleError::EmptyDimensions { height, width });
        }
        let expected = height as u64 * width as u64;
        let actual: u64 = counts.iter().map(|&c| c as u64).sum();
        if actual != expected {
            return Err(RleError::CountSumMismatch {
                height,
                width,
                expected,
                actual,
            });
        }
        Ok(RleMask {
            height,
            width,
            counts: canonicalize(&counts),
        })
    }

    /// All-background mask.
    pub fn empty(height: u32, width: u32) -> Result<Self, RleError> {
        RleMask::new(height, width, vec![height * width])
    }

    /// Builds a mask from foreground intervals `[start, end)` over column-major flat indices.
    /// Intervals must be sorted; overlapping or touching intervals are merged.
    pub fn from_intervals(
        height: u32,
        width: u32,
        intervals: impl IntoIterator<Item = (u64, u64)>,
    ) -> Result<Self, RleError> {
        let n = height as u64 * width as u64;
        let mut counts = Vec::new();
        let mut cursor = 0u64;
        let mut open: Option<(u64, u64)> = None;
        let flush = |run: (u64, u64), cursor: &mut u64, counts: &mut Vec<u32>| {
            counts.push((run.0 - *cursor) as u32);
            counts.push((run.1 - run.0) as u32);
            *cursor = run.1;
        };
        for (start, end) in intervals {
            let start = start.min(n);
            let end = end.min(n);
            if end <= start {
                continue;
            }
            open = match open {
                Some((s, e)) if start <= e => Some((s, e.max(end))),
                Some(run) => {
                    flush(run, &mut cursor, &mut counts);
                    Some((start.max(cursor), end))
                }
                None => Some((start.max(cursor), end)),
            };
        }
        if let Some(run) = open {
            flush(run, &mut cursor, &mut counts);
        }
        counts.push((n - cursor) as u32);
        RleMask::new(height, width, counts)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn pixel_count(&self) -> u64 {
        self.height as u64 * self.width as u64
    }

    /// Number of foreground pixels: the sum of odd-indexed runs.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Foreground intervals `[start, end)` in column-major flat index space.
    pub fn foreground_runs(&self) -> ForegroundRuns<'_> {
        ForegroundRuns {
            counts: &self.counts,
            index: 0,
            cursor: 0,
        }
    }

    pub fn decode(&self) -> Bitmask {
        let mut pixels = vec![false; self.pixel_count() as usize];
        for (start, end) in self.foreground_runs() {
            pixels[start as usize..end as usize].fill(true);
        }
        Bitmask {
            height: self.height,
            width: self.width,
            pixels,
        }
    }

    pub fn encode(mask: &Bitmask) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &p in &mask.pixels {
            if p != current {
                counts.push(run);
                run = 0;
                current = p;
            }
            run += 1;
        }
        counts.push(run);
        RleMask {
            height: mask.height,
            width: mask.width,
            counts,
        }
    }

    fn check_dims(&self, other: &RleMask) -> Result<(), RleError> {
        if self.height != other.height || self.width != other.width {
            return Err(RleError::DimensionMismatch {
                a_height: self.height,
                a_width: self.width,
                b_height: other.height,
                b_width: other.width,
            });
        }
        Ok(())
    }

    /// `|self ∩ other|` by a two-pointer walk over both foreground run lists.
    pub fn intersect_area(&self, other: &RleMask) -> Result<u64, RleError> {
        self.check_dims(other)?;
        let mut a = self.foreground_runs();
        let mut b = other.foreground_runs();
        let (mut ra, mut rb) = (a.next(), b.next());
        let mut total = 0u64;
        while let (Some((a0, a1)), Some((b0, b1))) = (ra, rb) {
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                total += hi - lo;
            }
            if a1 <= b1 {
                ra = a.next();
            } else {
                rb = b.next();
            }
        }
        Ok(total)
    }

    /// `|self ∪ other|` by merging both foreground run lists.
    pub fn union_area(&self, other: &RleMask) -> Result<u64, RleError> {
        self.check_dims(other)?;
        let mut a = self.foreground_runs().peekable();
        let mut b = other.foreground_runs().peekable();
        let mut total = 0u64;
        let mut open: Option<(u64, u64)> = None;
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if x.0 <= y.0 {
                        a.next()
                    } else {
                        b.next()
                    }
                }
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => None,
            };
            let Some((s, e)) = next else { break };
            open = match open {
                Some((os, oe)) if s <= oe => Some((os, oe.max(e))),
                Some((os, oe)) => {
                    total += oe - os;
                    Some((s, e))
                }
                None => Some((s, e)),
            };
        }
        if let Some((os, oe)) = open {
            total += oe - os;
        }
        Ok(total)
    }

    /// Parses the COCO compressed counts string (6 bits per character, offset 48,
    /// sign-folded deltas against the run two positions back).
    pub fn from_compressed(height: u32, width: u32, s: &str) -> Result<Self, RleError> {
        let bytes = s.as_bytes();
        let mut counts: Vec<i64> = Vec::new();
        let mut p = 0usize;
        while p < bytes.len() {
            let mut x: i64 = 0;
            let mut k = 0u32;
            let mut more = true;
            while more {
                let Some(&byte) = bytes.get(p) else {
                    return Err(RleError::Truncated);
                };
                if !(48..48 + 64).contains(&byte) {
                    return Err(RleError::InvalidByte { offset: p, byte });
                }
                let c = (byte - 48) as i64;
                x |= (c & 0x1f) << (5 * k);
                more = c & 0x20 != 0;
                p += 1;
                k += 1;
                if !more && c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
            }
            let m = counts.len();
            if m > 2 {
                x += counts[m - 2];
            }
            counts.push(x);
        }
        let mut out = Vec::with_capacity(counts.len());
        for (index, &value) in counts.iter().enumerate() {
            if value < 0 || value > u32::MAX as i64 {
                return Err(RleError::NegativeRun { index, value });
            }
            out.push(value as u32);
        }
        RleMask::new(height, width, out)
    }

    /// Inverse of [`RleMask::from_compressed`], byte-exact with pycocotools.
    pub fn to_compressed(&self) -> String {
        let mut s = String::new();
        for (i, &c) in self.counts.iter().enumerate() {
            let mut x = c as i64;
            // pycocotools deltas only from the fourth run on
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            let mut more = true;
            while more {
                let mut ch = x & 0x1f;
                x >>= 5;
                more = if ch & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    ch |= 0x20;
                }
                s.push((ch as u8 + 48) as char);
            }
        }
        s
    }
}

pub struct ForegroundRuns<'a> {
    counts: &'a [u32],
    index: usize,
    cursor: u64,
}

impl Iterator for ForegroundRuns<'_> {
    type Item = (u64, u64);

    fn next(&mut self) -> Option<(u64, u64)> {
        while self.index + 1 < self.counts.len() {
            let bg = self.counts[self.index] as u64;
            let fg = self.counts[self.index + 1] as u64;
            self.index += 2;
            let start = self.cursor + bg;
            self.cursor = start + fg;
            if fg > 0 {
                return Some((start, self.cursor));
            }
        }
        None
    }
}

fn canonicalize(counts: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(counts.len());
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 && i > 0 {
            // a zero interior run glues its neighbours together
            continue;
        }
        let want_fg = i % 2 == 1;
        let next_slot_fg = out.len() % 2 == 1;
        if !out.is_empty() && want_fg != next_slot_fg {
            *out.last_mut().unwrap() += c;
        } else {
            out.push(c);
        }
    }
    if out.is_empty() {
        out.push(0);
    }
    out
}
