//! Binary checkpoints of a [`PpoAgent`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "QASPPOCK" | u32 version
//! u32 obs_len | u32 gate_dim | u32 qubit_dim | u32 n_hidden | u32 hidden[n_hidden]
//! u64 n_params | f64 params[n] | f64 adam_m[n] | f64 adam_v[n] | u64 adam_t
//! [u8; 32] rng seed | u64 rng stream | u128 rng word position
//! u64 steps | u64 episodes | u64 updates
//! u64 FNV-1a checksum of everything above
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::{PpoAgent, PpoConfig};
use crate::circuits::fnv1a_bytes;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QASPPOCK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn corrupt(reason: &str) -> Error {
    Error::Parse(format!("checkpoint: {reason}"))
}

impl PpoAgent {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let (g, q) = self.policy.dims();
        let hidden = self.policy.hidden();
        for v in [self.policy.obs_len(), g, q, hidden.len()].into_iter().chain(hidden.iter().copied()) {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.policy.num_params() as u64).to_le_bytes());
        let (m, v, t) = self.adam.state();
        for xs in [self.policy.params(), m, v] {
            xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        }
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        for c in [self.steps_done, self.episodes_done, self.updates_done] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        let sum = fnv1a_bytes(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Restores an agent; `cfg` must describe the same network shape.
    pub fn from_checkpoint_bytes(bytes: &[u8], cfg: PpoConfig) -> Result<Self> {
        if bytes.len() < 8 + 4 + 8 {
            return Err(corrupt("truncated"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a_bytes(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { bytes: body, at: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let obs_len = r.u32()? as usize;
        let gate_dim = r.u32()? as usize;
        let qubit_dim = r.u32()? as usize;
        let n_hidden = r.u32()? as usize;
        let hidden = (0..n_hidden).map(|_| r.u32().map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
        if hidden != cfg.hidden {
            return Err(Error::InvalidInput(format!("checkpoint hidden sizes {hidden:?} differ from config {:?}", cfg.hidden)));
        }
        let mut agent = PpoAgent::new(obs_len, (gate_dim, qubit_dim), cfg, 0)?;
        let n = r.u64()? as usize;
        if n != agent.policy.num_params() {
            return Err(corrupt("parameter count does not match the network shape"));
        }
        agent.policy.set_params(r.f64s(n)?)?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        let t = r.u64()?;
        agent.adam.restore(m, v, t);
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        let mut rng: ChaCha8Rng = rand::SeedableRng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        agent.rng = rng;
        agent.steps_done = r.u64()?;
        agent.episodes_done = r.u64()?;
        agent.updates_done = r.u64()?;
        if r.at != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(agent)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_checkpoint_bytes())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path, cfg: PpoConfig) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Control, EnvStep, MultiDiscreteEnv};
    use super::*;

    struct Flip(f64);

    impl MultiDiscreteEnv for Flip {
        type Info = ();
        fn observation_len(&self) -> usize {
            2
        }
        fn action_dims(&self) -> (usize, usize) {
            (3, 2)
        }
        fn reset(&mut self) -> Result<Vec<f64>> {
            Ok(vec![self.0, 1.0 - self.0])
        }
        fn step(&mut self, a: usize, b: usize) -> Result<EnvStep<()>> {
            self.0 = 1.0 - self.0;
            Ok(EnvStep { observation: vec![self.0, 1.0 - self.0], reward: (a + b) as f64 * 0.1, done: a == 2, info: () })
        }
    }

    fn cfg() -> PpoConfig {
        PpoConfig { n_steps: 32, batch_size: 16, total_steps: 96, hidden: vec![8, 8], ..PpoConfig::default() }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut agent = PpoAgent::for_env(&Flip(0.0), cfg(), 4).unwrap();
        agent.train(&mut Flip(0.0), |_| Ok(Control::Continue), |_, _| Ok(())).unwrap();
        let bytes = agent.to_checkpoint_bytes();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = PpoAgent::from_checkpoint_bytes(&bytes, cfg()).unwrap();
        assert_eq!(back, agent);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let agent = PpoAgent::for_env(&Flip(0.0), cfg(), 1).unwrap();
        agent.save_checkpoint(&path).unwrap();
        assert_eq!(PpoAgent::load_checkpoint(&path, cfg()).unwrap(), agent);
    }

    #[test]
    fn rejects_damage() {
        let agent = PpoAgent::for_env(&Flip(0.0), cfg(), 1).unwrap();
        let mut bytes = agent.to_checkpoint_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(PpoAgent::from_checkpoint_bytes(&bytes, cfg()).is_err());
        let good = agent.to_checkpoint_bytes();
        assert!(PpoAgent::from_checkpoint_bytes(&good[..good.len() - 3], cfg()).is_err());
        let other = PpoConfig { hidden: vec![4], ..cfg() };
        assert!(PpoAgent::from_checkpoint_bytes(&good, other).is_err());
    }
}
