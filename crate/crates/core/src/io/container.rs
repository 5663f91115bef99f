//! Named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GISR" | version u32 | count u32 |
//!   count x ( name_len u16 | name utf-8 | dtype u8 | ndim u8 | dims u32 * ndim | payload )
//! ```
//!
//! Payloads are raw row-major values; dtype 0 is f32 and 1 is f64. Entries
//! keep their bytes verbatim, so read-then-write is byte-identical.

use std::path::Path;

use gisr_tensor::{DType, Element, Tensor};

use crate::error::{CoreError, Result};

pub const MAGIC: &[u8; 4] = b"GISR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<usize>,
    bytes: Vec<u8>,
}

impl Entry {
    pub fn from_tensor<T: Element>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        Self::from_slice(name, t.shape(), &t.data())
    }

    pub fn from_slice<T: Element>(name: impl Into<String>, dims: &[usize], values: &[T]) -> Self {
        let mut bytes = Vec::with_capacity(values.len() * T::DTYPE.size_of());
        T::to_le_bytes_vec(values, &mut bytes);
        Self {
            name: name.into(),
            dtype: T::DTYPE,
            dims: dims.to_vec(),
            bytes,
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    /// Values converted to `T` (exact when the stored dtype is `T`).
    pub fn values<T: Element>(&self) -> Vec<T> {
        match self.dtype {
            d if d == T::DTYPE => T::from_le_bytes_slice(&self.bytes),
            DType::F32 => f32::from_le_bytes_slice(&self.bytes)
                .into_iter()
                .map(|v| T::from_f64_lossy(v as f64))
                .collect(),
            DType::F64 => f64::from_le_bytes_slice(&self.bytes)
                .into_iter()
                .map(T::from_f64_lossy)
                .collect(),
        }
    }

    pub fn to_tensor<T: Element>(&self) -> Result<Tensor<T>> {
        Ok(Tensor::from_vec(&self.dims, self.values())?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorContainer {
    entries: Vec<Entry>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Format(msg.into()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return format_err(format!(
                "truncated container while reading {what} at byte {}",
                self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; names must be unique.
    pub fn push(&mut self, entry: Entry) -> Result<()> {
        if entry.name.len() > u16::MAX as usize {
            return Err(CoreError::Argument(format!(
                "entry name too long: {} bytes",
                entry.name.len()
            )));
        }
        if entry.dims.len() > u8::MAX as usize || entry.dims.iter().any(|&d| d > u32::MAX as usize)
        {
            return Err(CoreError::Argument(format!(
                "entry {} has unencodable dims {:?}",
                entry.name, entry.dims
            )));
        }
        if self.get(&entry.name).is_some() {
            return Err(CoreError::Argument(format!(
                "duplicate entry name {:?}",
                entry.name
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn insert<T: Element>(&mut self, name: impl Into<String>, t: &Tensor<T>) -> Result<()> {
        self.push(Entry::from_tensor(name, t))
    }

    pub fn insert_slice<T: Element>(
        &mut self,
        name: impl Into<String>,
        dims: &[usize],
        values: &[T],
    ) -> Result<()> {
        self.push(Entry::from_slice(name, dims, values))
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Like [`get`](Self::get) but a missing key is a format error.
    pub fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name)
            .ok_or_else(|| CoreError::Format(format!("container has no entry {name:?}")))
    }

    pub fn tensor<T: Element>(&self, name: &str) -> Result<Tensor<T>> {
        self.require(name)?.to_tensor()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype.code());
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&e.bytes);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return format_err("bad magic, not a GISR container");
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return format_err(format!("unsupported container version {version}"));
        }
        let count = r.u32("entry count")? as usize;
        let mut c = Self::new();
        for i in 0..count {
            let len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| CoreError::Format(format!("entry {i} name is not UTF-8")))?
                .to_string();
            let code = r.u8("dtype")?;
            let dtype = DType::from_code(code).ok_or_else(|| {
                CoreError::Format(format!("entry {name:?} has unknown dtype code {code}"))
            })?;
            let ndim = r.u8("ndim")? as usize;
            let dims = (0..ndim)
                .map(|_| r.u32("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(dtype.size_of(), |a, &d| a.checked_mul(d))
                .ok_or_else(|| CoreError::Format(format!("entry {name:?} is too large")))?;
            let bytes = r.take(n, "payload")?.to_vec();
            c.push(Entry {
                name,
                dtype,
                dims,
                bytes,
            })
            .map_err(|e| CoreError::Format(e.to_string()))?;
        }
        if r.pos != buf.len() {
            return format_err(format!(
                "{} trailing bytes after last entry",
                buf.len() - r.pos
            ));
        }
        Ok(c)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| CoreError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
