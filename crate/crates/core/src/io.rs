//! Binary PGM/PPM ingestion, mask output and the sweep report CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gammalab::GammaReport;
use crate::grid::{Grid, IndicatorField, MultiField};

pub const REPORT_HEADER: &str = "eps,mu,E_at_norm,E_limit,gap,l1_gap,tv_v,gl_over_tv,d_clp,data1,data2,grad1,grad2,gl";

fn at_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::TruncatedFile);
    }
    let magic = [bytes[0], bytes[1]];
    if &magic != b"P5" && &magic != b"P6" {
        return Err(Error::UnsupportedFormat(format!("magic {:?}", String::from_utf8_lossy(&magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                None => return Err(Error::TruncatedFile),
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(if pos >= bytes.len() {
                Error::TruncatedFile
            } else {
                Error::UnsupportedFormat("malformed header".into())
            });
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::UnsupportedFormat("header value out of range".into()))?;
    }
    match bytes.get(pos) {
        None => return Err(Error::TruncatedFile),
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(Error::UnsupportedFormat("malformed header".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedFormat("empty image".into()));
    }
    Ok(Header { magic, width, height, maxval, offset: pos })
}

/// Reads an 8-bit binary PGM (one channel) or PPM (three channels). Values
/// are scaled by 1/255, spacing is `1 / max(nx, ny)` and row 0 of the file
/// is grid row 0.
pub fn load_image(path: impl AsRef<Path>) -> Result<MultiField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| at_path(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<MultiField> {
    let h = parse_header(bytes)?;
    debug_assert_eq!(h.maxval, 255);
    let m = if &h.magic == b"P5" { 1 } else { 3 };
    let n = h.width * h.height * m;
    let data = bytes.get(h.offset..h.offset + n).ok_or(Error::TruncatedFile)?;
    let s = 1.0 / h.width.max(h.height) as f64;
    let grid = Grid::new(h.width, h.height, s, s, [0.0, 0.0])?;
    MultiField::new(grid, m, data.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn encode_mask(e: &IndicatorField) -> Vec<u8> {
    let g = e.grid();
    let mut out = format!("P5\n{} {}\n255\n", g.nx, g.ny).into_bytes();
    out.extend(e.mask().iter().map(|&b| if b { 255u8 } else { 0u8 }));
    out
}

/// Writes the mask as a binary PGM with values 0 and 255.
pub fn save_mask(e: &IndicatorField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mask(e)).map_err(|e| at_path(path, e))?;
    Ok(())
}

/// CSV text of a report; floats use the shortest round-trip form.
pub fn report_csv(report: &GammaReport) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for r in &report.rows {
        let cols = [
            r.eps,
            r.mu,
            r.e_at_norm,
            r.e_limit,
            r.gap,
            r.l1_gap,
            r.tv_v,
            r.gl_over_tv,
            r.d_clp,
            r.data1,
            r.data2,
            r.grad1,
            r.grad2,
            r.gl,
        ];
        let line: Vec<String> = cols.iter().map(|x| format!("{x}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn write_report(report: &GammaReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| at_path(path, e))?;
    f.write_all(report_csv(report).as_bytes()).map_err(|e| at_path(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gammalab::GammaRow;
    use crate::grid::threshold_half;

    fn pgm(w: usize, h: usize, maxval: usize, data: &[u8]) -> Vec<u8> {
        let mut b = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn p5_scales_endpoints() {
        let f = decode_image(&pgm(2, 1, 255, &[0, 255])).unwrap();
        assert_eq!(f.values(), &[0.0, 1.0]);
        assert_eq!(f.channels(), 1);
        let g = f.grid();
        assert_eq!((g.nx, g.ny, g.hx, g.hy), (2, 1, 0.5, 0.5));
    }

    #[test]
    fn p6_pixel() {
        let mut b = b"P6 2 1 255\n".to_vec();
        b.extend_from_slice(&[255, 0, 0, 0, 51, 255]);
        let f = decode_image(&b).unwrap();
        assert_eq!(f.channels(), 3);
        assert_eq!(f.cell(0), &[1.0, 0.0, 0.0]);
        assert_eq!(f.cell(1), &[0.0, 0.2, 1.0]);
    }

    #[test]
    fn header_comments() {
        let mut b = b"P5\n# made by hand\n2 # width\n1\n255\n".to_vec();
        b.extend_from_slice(&[51, 102]);
        let f = decode_image(&b).unwrap();
        assert_eq!(f.values(), &[0.2, 0.4]);
    }

    #[test]
    fn rejects_other_maxval_and_formats() {
        assert!(matches!(decode_image(&pgm(2, 1, 65535, &[0, 0, 0, 0])), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_image(&pgm(2, 1, 15, &[0, 0])), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_image(b"P2\n1 1\n255\n0\n"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_image(b"\x89PNG\r\n"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn truncated() {
        assert!(matches!(decode_image(&pgm(3, 2, 255, &[1, 2, 3])), Err(Error::TruncatedFile)));
        assert!(matches!(decode_image(b"P5\n3 "), Err(Error::TruncatedFile)));
        assert!(matches!(decode_image(b"P"), Err(Error::TruncatedFile)));
    }

    #[test]
    fn mask_round_trip() {
        let g = Grid::new(7, 5, 1.0 / 7.0, 1.0 / 7.0, [0.0, 0.0]).unwrap();
        let e = IndicatorField::from_fn(g, |[x, y]| x + 0.3 * y > 0.4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        save_mask(&e, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.grid(), e.grid());
        let t = threshold_half(&back.channel(0));
        assert_eq!(t.mask(), e.mask());
        assert_eq!(fs::read(&path).unwrap(), encode_mask(&t));
    }

    #[test]
    fn all_ones_mask() {
        let g = Grid::unit_square(4).unwrap();
        let e = IndicatorField::from_fn(g, |_| true);
        let b = encode_mask(&e);
        assert!(b[b.len() - 16..].iter().all(|&x| x == 255));
        assert_eq!(b.len(), "P5\n4 4\n255\n".len() + 16);
    }

    #[test]
    fn unwritable_path() {
        let g = Grid::unit_square(2).unwrap();
        let e = IndicatorField::from_fn(g, |_| true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("m.pgm");
        assert!(matches!(save_mask(&e, &path), Err(Error::Io(_))));
        assert!(matches!(write_report(&GammaReport::default(), &path), Err(Error::Io(_))));
    }

    #[test]
    fn report_lines() {
        assert_eq!(report_csv(&GammaReport::default()), format!("{REPORT_HEADER}\n"));
        let row = GammaRow { eps: 0.1, mu: 1.0, gap: -2.5e-7, ..GammaRow::default() };
        let rep = GammaReport { rows: vec![row; 3], ..GammaReport::default() };
        let csv = report_csv(&rep);
        assert_eq!(csv.lines().count(), 4);
        let cols: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(cols.len(), 14);
        assert_eq!(cols[0], "0.1");
        assert_eq!(cols[4].parse::<f64>().unwrap(), -2.5e-7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_report(&rep, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), csv);
    }
}
