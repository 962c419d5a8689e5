use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SFCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

impl ParamKind {
    /// Kind implied by a parameter name suffix.
    pub fn of(name: &str) -> Option<Self> {
        match name.rsplit('.').next()? {
            "weight" => Some(ParamKind::Weight),
            "bias" => Some(ParamKind::Bias),
            "scale" => Some(ParamKind::BnScale),
            "shift" => Some(ParamKind::BnShift),
            _ => None,
        }
    }

    /// Biases and BN affine terms are conventionally exempt from decay.
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Named parameter tensors plus BN running statistics keyed by BN node name.
/// Parameter names end in `.weight`, `.bias`, `.scale` or `.shift`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    running: BTreeMap<String, RunningStats>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    /// Like `get` but a missing entry is an error naming it.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Input(format!("parameter `{name}` is missing")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total learnable values.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Adds `value` into the entry `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, value: Tensor) -> Result<()> {
        match self.params.get_mut(name) {
            Some(t) => t.add_assign(&value),
            None => {
                self.params.insert(name.to_string(), value);
                Ok(())
            }
        }
    }

    /// Same names and shapes, all zeros, no running statistics.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self.params.iter().map(|(k, v)| (k.clone(), Tensor::zeros_like(v))).collect(),
            running: BTreeMap::new(),
        }
    }

    pub fn running(&self, bn: &str) -> Option<&RunningStats> {
        self.running.get(bn)
    }

    pub fn running_mut(&mut self, bn: &str) -> Option<&mut RunningStats> {
        self.running.get_mut(bn)
    }

    pub fn set_running(&mut self, bn: impl Into<String>, stats: RunningStats) {
        self.running.insert(bn.into(), stats);
    }

    pub fn running_iter(&self) -> impl Iterator<Item = (&String, &RunningStats)> {
        self.running.iter()
    }

    fn entries(&self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        let mut all: BTreeMap<String, (Vec<usize>, Vec<f64>)> = self
            .params
            .iter()
            .map(|(k, t)| (k.clone(), (t.shape().to_vec(), t.data().to_vec())))
            .collect();
        for (bn, r) in &self.running {
            all.insert(format!("{bn}.running_mean"), (vec![r.mean.len()], r.mean.clone()));
            all.insert(format!("{bn}.running_var"), (vec![r.var.len()], r.var.clone()));
        }
        all
    }

    /// Writes the `SFCK` checkpoint encoding.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let entries = self.entries();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(entries.len() as u32).to_le_bytes())?;
        for (name, (shape, data)) in entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for e in shape {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an SFCK checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported SFCK version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut store = ParamStore::new();
        let mut running: BTreeMap<String, (Option<Vec<f64>>, Option<Vec<f64>>)> = BTreeMap::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(truncated)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(truncated)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b).map_err(truncated)?;
                data.push(f64::from_le_bytes(b));
            }
            if let Some(bn) = name.strip_suffix(".running_mean") {
                running.entry(bn.to_string()).or_default().0 = Some(data);
            } else if let Some(bn) = name.strip_suffix(".running_var") {
                running.entry(bn.to_string()).or_default().1 = Some(data);
            } else {
                let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("entry `{name}`: {e}")))?;
                store.insert(name, t);
            }
        }
        for (bn, pair) in running {
            match pair {
                (Some(mean), Some(var)) if mean.len() == var.len() => {
                    if var.iter().any(|&v| v < 0.0) {
                        return Err(Error::Format(format!("negative running variance in `{bn}`")));
                    }
                    store.set_running(bn, RunningStats { mean, var })
                }
                _ => return Err(Error::Format(format!("incomplete running statistics for `{bn}`"))),
            }
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("checkpoint is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a.conv.weight", Tensor::from_fn([2, 1, 1, 3, 3], |i| i as f64 * 0.5 - 3.0));
        s.insert("a.conv.bn.scale", Tensor::full([2], 1.0));
        s.insert("a.conv.bn.shift", Tensor::zeros([2]));
        s.set_running("a.conv.bn", RunningStats { mean: vec![0.5, -0.5], var: vec![2.0, 0.25] });
        s
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = sample();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"SFCK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
        assert_eq!(ParamStore::read_from(&bytes[..]).unwrap(), s);
    }

    #[test]
    fn truncated_and_foreign_files() {
        let bytes = sample().to_bytes();
        assert!(matches!(ParamStore::read_from(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(ParamStore::read_from(&b"SFV1...."[..]), Err(Error::Format(_))));
    }

    #[test]
    fn kinds_from_names() {
        assert_eq!(ParamKind::of("x.bn.scale"), Some(ParamKind::BnScale));
        assert_eq!(ParamKind::of("head.fc.bias"), Some(ParamKind::Bias));
        assert!(ParamKind::of("x.weight").unwrap().decays());
        assert!(!ParamKind::BnShift.decays());
    }
}
