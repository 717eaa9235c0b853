//! Plain-text file formats.
//!
//! * `.mlab` masks: a `MLAB1` line, a `<width> <height>` line, then `height`
//!   lines of `width` characters from `O` (object), `N` (non-object) and `U`
//!   (unknown). Every line ends in `\n`.
//! * Instances: ASCII PGM (`P2`), written with maxval 255 and
//!   `round(value * 255)` per pixel; any maxval up to 65535 is read.
//! * Overlays: ASCII PPM (`P3`, maxval 255), one pixel row per line.

use std::fmt::Write as _;

use crate::error::{MiattError, Result};
use crate::image::{Instance, ProbabilityMap};
use crate::labeling::{CellState, PartialLabeling};

const MLAB_MAGIC: &str = "MLAB1";

fn parse_err(msg: impl Into<String>) -> MiattError {
    MiattError::Parse(msg.into())
}

pub fn cell_char(c: CellState) -> char {
    match c {
        CellState::Object => 'O',
        CellState::NonObject => 'N',
        CellState::Unknown => 'U',
    }
}

pub fn write_mlab(t: &PartialLabeling) -> String {
    let mut out = String::with_capacity(t.len() + t.height() + 16);
    let _ = writeln!(out, "{MLAB_MAGIC}\n{} {}", t.width(), t.height());
    for row in t.cells().chunks(t.width()) {
        out.extend(row.iter().map(|&c| cell_char(c)));
        out.push('\n');
    }
    out
}

pub fn parse_mlab(text: &str) -> Result<PartialLabeling> {
    let mut lines = text.split('\n');
    if lines.next() != Some(MLAB_MAGIC) {
        return Err(parse_err("mask does not start with MLAB1"));
    }
    let dims = lines.next().ok_or_else(|| parse_err("mask is missing its size line"))?;
    let (width, height) = parse_dims(dims)?;
    let mut cells = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = lines
            .next()
            .ok_or_else(|| parse_err(format!("mask has {y} of {height} rows")))?;
        if row.chars().count() != width {
            return Err(parse_err(format!("mask row {y} has {} cells, expected {width}", row.len())));
        }
        for ch in row.chars() {
            cells.push(match ch {
                'O' => CellState::Object,
                'N' => CellState::NonObject,
                'U' => CellState::Unknown,
                other => return Err(parse_err(format!("invalid mask character {other:?} in row {y}"))),
            });
        }
    }
    match (lines.next(), lines.next()) {
        (Some(""), None) => {}
        _ => return Err(parse_err("mask has trailing content or lacks a final newline")),
    }
    PartialLabeling::new(width, height, cells)
}

fn parse_dims(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split(' ');
    let mut next = || -> Result<usize> {
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(format!("bad size line {line:?}")))
    };
    let dims = (next()?, next()?);
    if parts.next().is_some() {
        return Err(parse_err(format!("bad size line {line:?}")));
    }
    Ok(dims)
}

fn write_gray(width: usize, height: usize, values: &[f64]) -> String {
    let mut out = format!("P2\n{width} {height}\n255\n");
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| ((v * 255.0).round() as u8).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_pgm(d: &Instance) -> String {
    write_gray(d.width(), d.height(), d.pixels())
}

/// Probability maps share the instance encoding (8-bit quantized).
pub fn write_probability_pgm(t: &ProbabilityMap) -> String {
    write_gray(t.width(), t.height(), t.probs())
}

/// Whitespace-separated tokens of a netpbm text file with `#` comments removed.
fn netpbm_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
}

fn next_number(tokens: &mut dyn Iterator<Item = &str>, what: &str) -> Result<u32> {
    tokens
        .next()
        .ok_or_else(|| parse_err(format!("netpbm file ends before {what}")))?
        .parse()
        .map_err(|_| parse_err(format!("netpbm {what} is not a number")))
}

/// Reads an ASCII PGM into `(width, height, values in [0, 1])`.
pub fn parse_pgm_values(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut tokens = netpbm_tokens(text);
    if tokens.next() != Some("P2") {
        return Err(parse_err("not an ASCII PGM (P2) file"));
    }
    let width = next_number(&mut tokens, "width")? as usize;
    let height = next_number(&mut tokens, "height")? as usize;
    let maxval = next_number(&mut tokens, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    let mut values = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = next_number(&mut tokens, "pixel")?;
        if v > maxval {
            return Err(parse_err(format!("PGM pixel {v} exceeds maxval {maxval}")));
        }
        values.push(v as f64 / maxval as f64);
    }
    if tokens.next().is_some() {
        return Err(parse_err("PGM has trailing data"));
    }
    Ok((width, height, values))
}

pub fn parse_pgm(text: &str) -> Result<Instance> {
    let (w, h, values) = parse_pgm_values(text)?;
    Instance::new(w, h, values)
}

pub fn parse_probability_pgm(text: &str) -> Result<ProbabilityMap> {
    let (w, h, values) = parse_pgm_values(text)?;
    ProbabilityMap::new(w, h, values)
}

pub fn write_ppm(width: usize, height: usize, pixels: &[[u8; 3]]) -> String {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P3\n{width} {height}\n255\n");
    for row in pixels.chunks(width) {
        let line: Vec<String> = row.iter().map(|[r, g, b]| format!("{r} {g} {b}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_ppm(text: &str) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let mut tokens = netpbm_tokens(text);
    if tokens.next() != Some("P3") {
        return Err(parse_err("not an ASCII PPM (P3) file"));
    }
    let width = next_number(&mut tokens, "width")? as usize;
    let height = next_number(&mut tokens, "height")? as usize;
    if next_number(&mut tokens, "maxval")? != 255 {
        return Err(parse_err("only maxval 255 PPM files are supported"));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let mut rgb = [0u8; 3];
        for c in &mut rgb {
            let v = next_number(&mut tokens, "sample")?;
            *c = u8::try_from(v).map_err(|_| parse_err("PPM sample above 255"))?;
        }
        pixels.push(rgb);
    }
    Ok((width, height, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mlab_layout_is_exact() {
        use CellState::*;
        let t = PartialLabeling::new(3, 2, vec![Object, NonObject, Unknown, Unknown, Unknown, Object]).unwrap();
        assert_eq!(write_mlab(&t), "MLAB1\n3 2\nONU\nUUO\n");
    }

    #[test]
    fn mlab_rejects_malformed() {
        for bad in [
            "MLAB2\n1 1\nO\n",
            "MLAB1\n2 1\nO\n",
            "MLAB1\n1 1\nX\n",
            "MLAB1\n1 1\nO",
            "MLAB1\n1 1\nO\nO\n",
            "MLAB1\n1  1\nO\n",
        ] {
            assert!(parse_mlab(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn pgm_layout() {
        let d = Instance::new(2, 2, vec![0.0, 1.0, 0.5, 0.2]).unwrap();
        assert_eq!(write_pgm(&d), "P2\n2 2\n255\n0 255\n128 51\n");
    }

    #[test]
    fn pgm_reads_comments_and_maxval() {
        let d = parse_pgm("P2\n# comment\n2 1\n15\n0 15\n").unwrap();
        assert_eq!(d.pixels(), &[0.0, 1.0]);
        assert!(parse_pgm("P2\n2 1\n15\n0 16\n").is_err());
        assert!(parse_pgm("P5\n2 1\n15\n0 1\n").is_err());
    }

    #[test]
    fn ppm_round_trip() {
        let px = vec![[1, 2, 3], [255, 0, 9]];
        let text = write_ppm(2, 1, &px);
        assert_eq!(text, "P3\n2 1\n255\n1 2 3 255 0 9\n");
        assert_eq!(parse_ppm(&text).unwrap(), (2, 1, px));
    }

    fn cell() -> impl Strategy<Value = CellState> {
        prop_oneof![Just(CellState::Object), Just(CellState::NonObject), Just(CellState::Unknown)]
    }

    proptest! {
        #[test]
        fn mlab_round_trip((w, h, cells) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(cell(), w * h))
        })) {
            let t = PartialLabeling::new(w, h, cells).unwrap();
            prop_assert_eq!(parse_mlab(&write_mlab(&t)).unwrap(), t);
        }

        #[test]
        fn pgm_round_trip_on_quantized((w, h, levels) in (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(0u8..=255, w * h))
        })) {
            let d = Instance::new(w, h, levels.iter().map(|&l| l as f64 / 255.0).collect()).unwrap();
            prop_assert_eq!(parse_pgm(&write_pgm(&d)).unwrap(), d);
        }
    }
}
