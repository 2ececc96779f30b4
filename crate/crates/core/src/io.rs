//! On-disk formats.
//!
//! Feature files: `"SDLFEAT1"`, rows (`u32` LE), cols (`u32` LE), a dtype byte
//! (`0x01` = `f32` LE), then `rows·cols` values in column-major order.
//!
//! Label files: UTF-8 text, one non-negative integer per line.
//!
//! Model files: `"SDLMODL1"`, encoder tag (`u8`: 0 = Top-K LISTA, 1 = FISTA),
//! `alpha beta mu_a rho_w eps_d mu_g lambda` as `f64` LE, `sparsity n_layers
//! warmup_iters ramp_iters max_outer` as `u32` LE, `seed` as `u64` LE, then
//! `d K C` as `u32` LE, followed by `D` (`d×K`), `A` (`K×K`), `W` (`C×K`) and, for
//! Top-K models only, `n_layers` feedback matrices (`K×d`), all `f64` LE
//! column-major.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::model::{Dictionary, EncoderKind, FeatureMatrix, HyperParams, ModelState};

pub const FEATURE_MAGIC: &[u8; 8] = b"SDLFEAT1";
pub const MODEL_MAGIC: &[u8; 8] = b"SDLMODL1";
pub const DTYPE_F32: u8 = 0x01;

const FEATURE_HEADER_LEN: usize = 8 + 4 + 4 + 1;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Bounds-checked little-endian cursor.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                needed: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Column-major `rows × cols` block of `f64`.
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| Error::Truncated {
            path: self.path.to_path_buf(),
            needed: usize::MAX,
            found: self.bytes.len(),
        })?;
        let raw = self.take(n)?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Array2::from_shape_vec((rows, cols).f(), data).expect("length checked"))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::TrailingBytes {
                path: self.path.to_path_buf(),
                extra: self.bytes.len() - self.pos,
            });
        }
        Ok(())
    }
}

fn push_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    for j in 0..m.ncols() {
        for v in m.column(j) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Config(format!("{what} = {v} does not fit the file format")))
}

/// Serializes a matrix in the feature format; values are narrowed to `f32`.
pub fn encode_features(m: &Array2<f64>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * m.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&to_u32(m.nrows(), "rows")?.to_le_bytes());
    out.extend_from_slice(&to_u32(m.ncols(), "cols")?.to_le_bytes());
    out.push(DTYPE_F32);
    for j in 0..m.ncols() {
        for &v in m.column(j) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses feature-file bytes; `path` is only used in error messages.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let mut r = Reader::new(bytes, path);
    if bytes.len() < 8 || &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "SDLFEAT1",
        });
    }
    r.take(8)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let tag = r.u8()?;
    if tag != DTYPE_F32 {
        return Err(Error::UnsupportedDtype {
            path: path.to_path_buf(),
            tag,
        });
    }
    let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(4));
    let raw = match n {
        Some(n) => r.take(n)?,
        None => {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                needed: usize::MAX,
                found: bytes.len(),
            })
        }
    };
    r.finish()?;
    let data: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let m = Array2::from_shape_vec((rows, cols).f(), data).expect("length checked");
    FeatureMatrix::new(m)
}

pub fn save_features(m: &Array2<f64>, path: &Path) -> Result<()> {
    write_file(path, &encode_features(m)?)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    decode_features(&read_file(path)?, path)
}

/// Parses label text: one integer per line, a final newline optional.
pub fn decode_labels(text: &[u8], path: &Path) -> Result<Vec<usize>> {
    let text = std::str::from_utf8(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })?;
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.trim().is_empty() {
        return Err(Error::Data(format!("{}: label file is empty", path.display())));
    }
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            let line = line.strip_suffix('\r').unwrap_or(line).trim();
            line.parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("{line:?}: {e}"),
            })
        })
        .collect()
}

pub fn encode_labels(labels: &[usize]) -> Vec<u8> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    s.into_bytes()
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    write_file(path, &encode_labels(labels))
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    decode_labels(&read_file(path)?, path)
}

pub fn encode_model(state: &ModelState) -> Result<Vec<u8>> {
    state.check_consistency()?;
    let hp = &state.hp;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(match state.encoder {
        EncoderKind::TopKLista => 0,
        EncoderKind::FistaLasso => 1,
    });
    for v in [hp.alpha, hp.beta, hp.mu_a, hp.rho_w, hp.eps_d, hp.mu_g, hp.lambda] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (v, what) in [
        (hp.sparsity, "sparsity"),
        (hp.n_layers, "n_layers"),
        (hp.warmup_iters, "warmup_iters"),
        (hp.ramp_iters, "ramp_iters"),
        (hp.max_outer, "max_outer"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    out.extend_from_slice(&hp.seed.to_le_bytes());
    for (v, what) in [(state.dim(), "d"), (state.n_atoms(), "K"), (state.n_classes(), "C")] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    push_matrix(&mut out, state.dictionary.atoms());
    push_matrix(&mut out, &state.lc);
    push_matrix(&mut out, &state.classifier);
    if let Some(stack) = &state.b_stack {
        for b in stack {
            push_matrix(&mut out, b);
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<ModelState> {
    if bytes.len() < 8 || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned(),
        });
    }
    let mut r = Reader::new(bytes, path);
    r.take(8)?;
    let encoder = match r.u8()? {
        0 => EncoderKind::TopKLista,
        1 => EncoderKind::FistaLasso,
        tag => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: format!("encoder tag {tag}"),
            })
        }
    };
    let mut w = [0.0; 7];
    for v in &mut w {
        *v = r.f64()?;
    }
    let mut ints = [0usize; 5];
    for v in &mut ints {
        *v = r.u32()? as usize;
    }
    let seed = r.u64()?;
    let hp = HyperParams {
        alpha: w[0],
        beta: w[1],
        mu_a: w[2],
        rho_w: w[3],
        eps_d: w[4],
        mu_g: w[5],
        lambda: w[6],
        sparsity: ints[0],
        n_layers: ints[1],
        warmup_iters: ints[2],
        ramp_iters: ints[3],
        max_outer: ints[4],
        seed,
    };
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let c = r.u32()? as usize;
    let atoms = r.matrix(d, k)?;
    let lc = r.matrix(k, k)?;
    let classifier = r.matrix(c, k)?;
    let b_stack = match encoder {
        EncoderKind::TopKLista => {
            let mut stack = Vec::with_capacity(hp.n_layers.min(1024));
            for _ in 0..hp.n_layers {
                stack.push(r.matrix(k, d)?);
            }
            Some(stack)
        }
        EncoderKind::FistaLasso => None,
    };
    r.finish()?;
    hp.validate(k)?;
    ModelState::new(Dictionary::new(atoms)?, lc, classifier, b_stack, hp, encoder)
}

pub fn save_model(state: &ModelState, path: &Path) -> Result<()> {
    write_file(path, &encode_model(state)?)
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    decode_model(&read_file(path)?, path)
}
