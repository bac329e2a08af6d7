//! Little-endian binary checkpoints for trained agents.

use std::io::{Read, Write};
use std::path::Path;

use super::policy::{PolicyNet, MOVE_DIMS};
use super::{AgentError, AgentKind, BaselineConfig, Mlp, TrainedAgent};

const MAGIC: &[u8; 8] = b"UAVSIMCK";
const VERSION: u32 = 1;

fn kind_tag(kind: AgentKind) -> u8 {
    match kind {
        AgentKind::Dupac => 0,
        AgentKind::Baseline => 1,
        AgentKind::Random => 2,
    }
}

fn write_mlp(out: &mut Vec<u8>, mlp: &Mlp) {
    out.extend_from_slice(&(mlp.sizes().len() as u32).to_le_bytes());
    for &s in mlp.sizes() {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    for &p in mlp.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

pub fn to_bytes(agent: &TrainedAgent) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind_tag(agent.kind));
    out.extend_from_slice(&(agent.n_gbs as u64).to_le_bytes());
    out.extend_from_slice(&agent.baseline.hysteresis_db.to_le_bytes());
    out.extend_from_slice(&(agent.baseline.time_to_trigger as u64).to_le_bytes());
    match &agent.policy {
        Some(p) => {
            out.push(1);
            out.push(p.is_hybrid() as u8);
            write_mlp(&mut out, &p.mlp);
            for v in p.log_std {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    match &agent.value {
        Some(v) => {
            out.push(1);
            write_mlp(&mut out, v);
        }
        None => out.push(0),
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AgentError> {
        if self.buf.len() < n {
            return Err(AgentError::Checkpoint("truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, AgentError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, AgentError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, AgentError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, AgentError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool, AgentError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(AgentError::Checkpoint(format!("bad flag byte {b}"))),
        }
    }

    fn mlp(&mut self) -> Result<Mlp, AgentError> {
        let n = self.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(AgentError::Checkpoint(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| self.u64().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if count * 8 > self.buf.len() {
            return Err(AgentError::Checkpoint("truncated".into()));
        }
        let params = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Mlp::from_params(&sizes, params)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedAgent, AgentError> {
    let mut r = Reader { buf: bytes };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(AgentError::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(AgentError::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = match r.u8()? {
        0 => AgentKind::Dupac,
        1 => AgentKind::Baseline,
        2 => AgentKind::Random,
        t => return Err(AgentError::Checkpoint(format!("unknown agent tag {t}"))),
    };
    let n_gbs = r.u64()? as usize;
    let baseline = BaselineConfig { hysteresis_db: r.f64()?, time_to_trigger: r.u64()? as usize };
    let policy = if r.flag()? {
        let hybrid = r.flag()?;
        let mlp = r.mlp()?;
        let mut log_std = [0.0; MOVE_DIMS];
        for v in &mut log_std {
            *v = r.f64()?;
        }
        Some(PolicyNet::from_parts(mlp, log_std, n_gbs, hybrid)?)
    } else {
        None
    };
    let value = if r.flag()? { Some(r.mlp()?) } else { None };
    if !r.buf.is_empty() {
        return Err(AgentError::Checkpoint(format!("{} trailing bytes", r.buf.len())));
    }
    if (kind == AgentKind::Random) != policy.is_none() {
        return Err(AgentError::Checkpoint("agent kind does not match stored networks".into()));
    }
    Ok(TrainedAgent { kind, n_gbs, policy, value, baseline })
}

pub fn save_checkpoint(agent: &TrainedAgent, path: impl AsRef<Path>) -> Result<(), AgentError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(agent))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedAgent, AgentError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn round_trip_all_kinds() {
        let mut rng = rng_from_seed(5);
        for kind in [AgentKind::Dupac, AgentKind::Baseline, AgentKind::Random] {
            let a = TrainedAgent::initialise(kind, 4, &[8, 8], BaselineConfig::default(), &mut rng).unwrap();
            let b = from_bytes(&to_bytes(&a)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_corruption() {
        let mut rng = rng_from_seed(6);
        let a = TrainedAgent::initialise(AgentKind::Dupac, 3, &[4], BaselineConfig::default(), &mut rng).unwrap();
        let bytes = to_bytes(&a);
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(from_bytes(b"garbage!").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
    }
}
