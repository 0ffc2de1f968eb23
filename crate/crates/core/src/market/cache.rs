//! Binary window cache.
//!
//! Layout, all little-endian: magic `BWTW`, format version u16, then one
//! record per window: window_id u64, side m u16, label u8, the tensor as
//! m*m*35 f32 values (row-major over grid cells, channels innermost), and
//! m*m trade ids as u64. Records run to end of file; a truncated record is
//! a corruption error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LabeledWindow, MarketError, CHANNELS};
use crate::tensor::Tensor3;

pub const WINDOW_CACHE_MAGIC: [u8; 4] = *b"BWTW";
pub const WINDOW_CACHE_VERSION: u16 = 1;

pub fn write_window_cache(path: &Path, windows: &[LabeledWindow]) -> Result<(), MarketError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&WINDOW_CACHE_MAGIC)?;
    out.write_all(&WINDOW_CACHE_VERSION.to_le_bytes())?;
    for w in windows {
        let n = w.side * w.side;
        debug_assert_eq!(w.trade_ids.len(), n);
        debug_assert_eq!(w.tensor.shape(), (w.side, w.side, CHANNELS));
        out.write_all(&w.window_id.to_le_bytes())?;
        out.write_all(&(w.side as u16).to_le_bytes())?;
        out.write_all(&[w.label])?;
        for v in w.tensor.as_slice() {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
        for id in &w.trade_ids {
            out.write_all(&id.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct CacheReader<R: Read> {
    inner: R,
}

impl<R: Read> CacheReader<R> {
    fn read_exact_or(&mut self, buf: &mut [u8], what: &str) -> Result<(), MarketError> {
        self.inner
            .read_exact(buf)
            .map_err(|e| MarketError::Cache(format!("truncated {what}: {e}")))
    }

    fn u16(&mut self, what: &str) -> Result<u16, MarketError> {
        let mut b = [0u8; 2];
        self.read_exact_or(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64, MarketError> {
        let mut b = [0u8; 8];
        self.read_exact_or(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }
}

pub fn read_window_cache(path: &Path) -> Result<Vec<LabeledWindow>, MarketError> {
    let mut r = CacheReader {
        inner: BufReader::new(File::open(path)?),
    };
    let mut magic = [0u8; 4];
    r.read_exact_or(&mut magic, "magic")?;
    if magic != WINDOW_CACHE_MAGIC {
        return Err(MarketError::Cache(format!(
            "bad magic {magic:?}, expected {WINDOW_CACHE_MAGIC:?}"
        )));
    }
    let version = r.u16("version")?;
    if version != WINDOW_CACHE_VERSION {
        return Err(MarketError::Cache(format!(
            "cache version {version}, this build reads {WINDOW_CACHE_VERSION}"
        )));
    }

    let mut windows = Vec::new();
    loop {
        // window_id doubles as the end-of-file probe.
        let mut id_buf = [0u8; 8];
        match r.inner.read_exact(&mut id_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(MarketError::Cache(format!("window_id: {e}"))),
        }
        let window_id = u64::from_le_bytes(id_buf);
        let side = usize::from(r.u16("side")?);
        if side < 2 {
            return Err(MarketError::Cache(format!("window side {side} < 2")));
        }
        let mut label = [0u8; 1];
        r.read_exact_or(&mut label, "label")?;
        if label[0] > 1 {
            return Err(MarketError::Cache(format!("label {} not in {{0,1}}", label[0])));
        }
        let cells = side * side;
        let mut values = vec![0f32; cells * CHANNELS];
        {
            let mut b = [0u8; 4];
            for v in values.iter_mut() {
                r.read_exact_or(&mut b, "tensor")?;
                *v = f32::from_le_bytes(b);
            }
        }
        let mut trade_ids = Vec::with_capacity(cells);
        for _ in 0..cells {
            trade_ids.push(r.u64("trade_ids")?);
        }
        windows.push(LabeledWindow {
            window_id,
            side,
            tensor: Tensor3::from_f32_slice(side, side, CHANNELS, &values),
            label: label[0],
            trade_ids,
        });
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_windows() -> Vec<LabeledWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..3u64)
            .map(|id| {
                let side = 3;
                let data: Vec<f64> = (0..side * side * CHANNELS)
                    // Values that survive the f32 round trip exactly.
                    .map(|_| f64::from(rng.random_range(-1000i32..1000) as f32 / 64.0))
                    .collect();
                LabeledWindow {
                    window_id: id,
                    side,
                    tensor: Tensor3::from_vec(side, side, CHANNELS, data),
                    label: (id % 2) as u8,
                    trade_ids: (id * 9..id * 9 + 9).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn cache_round_trips_windows_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let windows = sample_windows();
        write_window_cache(&path, &windows).unwrap();
        let back = read_window_cache(&path).unwrap();
        assert_eq!(back.len(), windows.len());
        for (a, b) in windows.iter().zip(&back) {
            assert_eq!(a.window_id, b.window_id);
            assert_eq!(a.side, b.side);
            assert_eq!(a.label, b.label);
            assert_eq!(a.trade_ids, b.trade_ids);
            assert_eq!(a.tensor.as_slice(), b.tensor.as_slice());
        }
    }

    #[test]
    fn header_layout_is_magic_then_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        write_window_cache(&path, &sample_windows()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"BWTW");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), WINDOW_CACHE_VERSION);
        // First record starts immediately after: window_id 0, side 3, label 0.
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 0);
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), 3);
        assert_eq!(bytes[16], 0);
    }

    #[test]
    fn truncated_record_reports_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        write_window_cache(&path, &sample_windows()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&path, &bytes).unwrap();
        let err = read_window_cache(&path).unwrap_err();
        assert!(matches!(err, MarketError::Cache(_)), "{err}");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        std::fs::write(&path, b"NOPExxxxxxxxxxxx").unwrap();
        assert!(read_window_cache(&path).is_err());
    }
}
