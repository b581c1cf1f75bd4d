//! On-disk sequence layout and box-stream files.
//!
//! A sequence directory holds `rgb/%08d.png` (8-bit RGB), `depth/%08d.png`
//! (16-bit gray, millimeters, 0 = invalid) and `groundtruth.txt`. Box files
//! (ground truth and tracker results) have one `frame,x,y,w,h` line per
//! frame, with `NaN` coordinates for frames without a box.

pub mod synth;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, DepthMap, Frame, MaybeBox};

pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";

/// Frames of a sequence together with its ground truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub groundtruth: Vec<MaybeBox>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:08}.png")
}

/// One box-file line.
pub fn format_box_line(index: usize, b: &MaybeBox) -> String {
    match b {
        Some(b) => format!("{index},{},{},{},{}", b.x, b.y, b.w, b.h),
        None => format!("{index},NaN,NaN,NaN,NaN"),
    }
}

/// Parses one box-file line into its frame index and box.
pub fn parse_box_line(line: &str) -> std::result::Result<(usize, MaybeBox), String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 comma-separated fields, got {}", fields.len()));
    }
    let index = fields[0]
        .parse::<usize>()
        .map_err(|_| format!("invalid frame index {:?}", fields[0]))?;
    let mut v = [0.0; 4];
    for (slot, f) in v.iter_mut().zip(&fields[1..]) {
        *slot = f.parse::<f64>().map_err(|_| format!("invalid number {f:?}"))?;
    }
    let nan = v.iter().filter(|x| x.is_nan()).count();
    match nan {
        4 => Ok((index, None)),
        0 => BoundingBox::new(v[0], v[1], v[2], v[3])
            .map(|b| (index, Some(b)))
            .map_err(|e| e.to_string()),
        _ => Err("either all or none of x, y, w, h may be NaN".into()),
    }
}

/// Parses a whole box file. Frame indices must run 0, 1, 2, ...
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<MaybeBox>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (index, b) = parse_box_line(line).map_err(err)?;
        if index != out.len() {
            return Err(err(format!("expected frame {}, found {index}", out.len())));
        }
        out.push(b);
    }
    Ok(out)
}

pub fn read_boxes(path: &Path) -> Result<Vec<MaybeBox>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text, path)
}

pub fn format_boxes(boxes: &[MaybeBox]) -> String {
    let mut s = String::new();
    for (i, b) in boxes.iter().enumerate() {
        s.push_str(&format_box_line(i, b));
        s.push('\n');
    }
    s
}

pub fn write_boxes(path: &Path, boxes: &[MaybeBox]) -> Result<()> {
    write_atomic(path, format_boxes(boxes).as_bytes())
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never observe a partial file. New files get the usual
/// umask-filtered permissions rather than the owner-only temp-file default.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o666));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn png_bytes(img: DynamicImage, path: &Path) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(buf.into_inner())
}

/// Writes frames and ground truth in the sequence layout.
pub fn save_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    if seq.frames.len() != seq.groundtruth.len() {
        return Err(Error::LengthMismatch {
            tracked: seq.frames.len(),
            truth: seq.groundtruth.len(),
        });
    }
    for sub in ["rgb", "depth"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for (i, f) in seq.frames.iter().enumerate() {
        let rgb_path = dir.join("rgb").join(frame_file_name(i));
        let bytes = png_bytes(DynamicImage::ImageRgb8(f.rgb.clone()), &rgb_path)?;
        write_atomic(&rgb_path, &bytes)?;
        let depth_path = dir.join("depth").join(frame_file_name(i));
        let bytes = png_bytes(DynamicImage::ImageLuma16(f.depth.clone()), &depth_path)?;
        write_atomic(&depth_path, &bytes)?;
    }
    write_boxes(&dir.join(GROUNDTRUTH_FILE), &seq.groundtruth)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(p);
        }
    }
    files.sort();
    for (i, p) in files.iter().enumerate() {
        if p.file_name().and_then(|n| n.to_str()) != Some(frame_file_name(i).as_str()) {
            return Err(Error::Load {
                path: p.clone(),
                msg: format!("frame files must be numbered contiguously from 0; expected {}", frame_file_name(i)),
            });
        }
    }
    Ok(files)
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads one frame pair.
pub fn load_frame(rgb_path: &Path, depth_path: &Path, index: u64) -> Result<Frame> {
    let rgb = match open_image(rgb_path)? {
        DynamicImage::ImageRgb8(img) => img,
        other => {
            return Err(Error::Load {
                path: rgb_path.to_path_buf(),
                msg: format!("expected 8-bit RGB, found {:?}", other.color()),
            })
        }
    };
    let depth: DepthMap = match open_image(depth_path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(Error::Load {
                path: depth_path.to_path_buf(),
                msg: format!("expected 16-bit single-channel depth, found {:?}", other.color()),
            })
        }
    };
    Frame::new(index, rgb, depth)
}

/// Loads a sequence directory, checking that the rgb, depth and ground-truth
/// counts agree.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let rgb = png_files(&dir.join("rgb"))?;
    let depth = png_files(&dir.join("depth"))?;
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let groundtruth = read_boxes(&gt_path)?;
    if rgb.len() != depth.len() || rgb.len() != groundtruth.len() {
        return Err(Error::Load {
            path: dir.to_path_buf(),
            msg: format!(
                "frame count mismatch: {} rgb, {} depth, {} ground-truth lines",
                rgb.len(),
                depth.len(),
                groundtruth.len()
            ),
        });
    }
    let frames = rgb
        .iter()
        .zip(&depth)
        .enumerate()
        .map(|(i, (r, d))| load_frame(r, d, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence { frames, groundtruth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_line_round_trip() {
        let b = Some(BoundingBox::new(1.5, 2.0, 30.25, 40.0).unwrap());
        assert_eq!(format_box_line(3, &b), "3,1.5,2,30.25,40");
        assert_eq!(parse_box_line("3,1.5,2,30.25,40").unwrap(), (3, b));
        assert_eq!(parse_box_line("7,NaN,NaN,NaN,NaN").unwrap(), (7, None));
        assert_eq!(parse_box_line(&format_box_line(7, &None)).unwrap(), (7, None));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for bad in ["1,2,3,4", "x,1,2,3,4", "1,NaN,2,3,4", "1,0,0,-5,4", "1,0,0,abc,4"] {
            assert!(parse_box_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn box_file_checks_numbering() {
        let p = Path::new("gt.txt");
        assert_eq!(parse_boxes("0,0,0,1,1\n1,NaN,NaN,NaN,NaN\n\n", p).unwrap().len(), 2);
        match parse_boxes("0,0,0,1,1\n2,0,0,1,1\n", p) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[cfg(unix)]
    #[test]
    fn atomic_write_is_readable_by_others_under_a_permissive_umask() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"x").unwrap();
        let mode = std::fs::metadata(&p).unwrap().permissions().mode() & 0o777;
        assert_ne!(mode, 0o600);
        assert_eq!(mode & 0o600, 0o600);
    }
}
