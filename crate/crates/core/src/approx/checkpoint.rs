//! Versioned binary container of named `f32` tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "SAFEXCK\0"
//! version u32      = 1
//! count   u32
//! count x { name_len u32, name utf-8, ndim u32, dims u64 x ndim, data f32 x prod(dims) }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{lit, Mlp, Real};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SAFEXCK\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, v: f32) {
        self.push(name, vec![], vec![v]);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn scalar(&self, name: &str) -> Result<f32> {
        let t = self.get(name)?;
        match t.data.as_slice() {
            [v] if t.shape.is_empty() => Ok(*v),
            _ => Err(Error::Checkpoint(format!("`{name}` is not a scalar"))),
        }
    }

    /// Stores each layer as `{prefix}.l{k}.w` with shape `[in, out]` and
    /// `{prefix}.l{k}.b` with shape `[out]`.
    pub fn push_mlp<T: Real>(&mut self, prefix: &str, net: &Mlp<T>) {
        for l in 0..net.num_layers() {
            let (w, b) = net.layer(l);
            self.push(
                format!("{prefix}.l{l}.w"),
                vec![w.nrows(), w.ncols()],
                w.iter().map(|v| v.to_f32().unwrap()).collect(),
            );
            self.push(
                format!("{prefix}.l{l}.b"),
                vec![b.len()],
                b.iter().map(|v| v.to_f32().unwrap()).collect(),
            );
        }
    }

    /// Rebuilds a network saved by [`Checkpoint::push_mlp`]; layer sizes are
    /// recovered from the stored shapes.
    pub fn mlp<T: Real>(&self, prefix: &str) -> Result<Mlp<T>> {
        let mut sizes = Vec::new();
        let mut params = Vec::new();
        for l in 0.. {
            let Ok(w) = self.get(&format!("{prefix}.l{l}.w")) else {
                break;
            };
            let b = self.get(&format!("{prefix}.l{l}.b"))?;
            let [i, o] = w.shape[..] else {
                return Err(Error::Checkpoint(format!("{}: weight is not 2-d", w.name)));
            };
            if b.shape != [o] {
                return Err(Error::Checkpoint(format!("{}: bias shape {:?}", b.name, b.shape)));
            }
            match sizes.last() {
                None => sizes.push(i),
                Some(&prev) if prev != i => {
                    return Err(Error::Checkpoint(format!(
                        "{}: input {i} does not match previous output {prev}",
                        w.name
                    )))
                }
                _ => {}
            }
            sizes.push(o);
            params.extend(w.data.iter().chain(&b.data).map(|&v| lit::<T>(v as f64)));
        }
        if sizes.len() < 2 {
            return Err(Error::Checkpoint(format!("no network `{prefix}`")));
        }
        Ok(Mlp::from_params(&sizes, params).expect("sizes derived from data"))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(4 * t.data.len());
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; n];
            r.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not utf-8"))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|_| bad("truncated shape"))?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let len: usize = shape.iter().product();
            let mut raw = vec![0u8; 4 * len];
            r.read_exact(&mut raw).map_err(|_| bad("truncated tensor data"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Checkpoint("truncated file".into()))?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::SimRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn mlp_round_trips_bit_exactly() {
        let net = Mlp::<f32>::new(&[5, 16, 16, 25], &mut SimRng::seed_from_u64(9));
        let mut ck = Checkpoint::new();
        ck.push_mlp("value.0", &net);
        ck.push_scalar("log_alpha", -1.25);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.mlp::<f32>("value.0").unwrap(), net);
        assert_eq!(back.scalar("log_alpha").unwrap(), -1.25);
        assert!(back.mlp::<f32>("value.1").is_err());
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        assert!(Checkpoint::read_from(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let mut ck = Checkpoint::new();
        ck.push("t", vec![3], vec![1.0, 2.0, 3.0]);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 2);
        assert!(Checkpoint::read_from(bytes.as_slice()).is_err());
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        bytes[8] = 2;
        assert!(matches!(
            Checkpoint::read_from(bytes.as_slice()),
            Err(Error::Checkpoint(m)) if m.contains("version")
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_tensors_round_trip(
            data in proptest::collection::vec(any::<u32>(), 0..64),
            name in "[a-z.0-9]{1,12}",
        ) {
            // raw bit patterns, including NaNs, must survive unchanged
            let vals: Vec<f32> = data.iter().map(|&b| f32::from_bits(b)).collect();
            let mut ck = Checkpoint::new();
            ck.push(name, vec![vals.len()], vals);
            let mut bytes = Vec::new();
            ck.write_to(&mut bytes).unwrap();
            let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
            let a: Vec<u32> = back.tensors[0].data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, data);
        }
    }
}
