//! Trained-model checkpoint, little-endian.
//!
//! ```text
//! "EOFC" | version u16 | arch u8 | n u16 | width u16 | positional u8 | bits u8 (0 = float)
//! best_val_mse f64 | best_epoch u32 | epochs u32
//! param_count u32 | params f64 ...
//! range_count u8  | (present u8, lo f64, hi f64) ...
//! history_len u32 | (epoch u32, train_mse f64, val_mse f64) ...
//! crc32 u32 over every preceding byte
//! ```

use edgecast_core::model::{Arch, NetConfig};
use edgecast_core::nn::{param_count, EpochLog, Params, RangeSet, TrainedModel};

use crate::codec::{Dec, Enc};
use crate::error::FormatError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EOFC";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(m: &TrainedModel) -> Vec<u8> {
    let net = m.net();
    let mut e = Enc::default();
    e.bytes(CHECKPOINT_MAGIC);
    e.u16(CHECKPOINT_VERSION);
    e.u8(net.arch.tag());
    e.u16(net.n as u16);
    e.u16(net.width as u16);
    e.u8(m.params.positional_encoding as u8);
    e.u8(m.bits.unwrap_or(0));
    e.f64(m.best_val_mse);
    e.u32(m.best_epoch as u32);
    e.u32(m.epochs as u32);
    e.u32(m.params.data.len() as u32);
    for &v in &m.params.data {
        e.f64(v);
    }
    e.u8(m.ranges.ranges.len() as u8);
    for r in &m.ranges.ranges {
        let (present, (lo, hi)) = match r {
            Some(p) => (1, *p),
            None => (0, (0.0, 0.0)),
        };
        e.u8(present);
        e.f64(lo);
        e.f64(hi);
    }
    e.u32(m.history.len() as u32);
    for h in &m.history {
        e.u32(h.epoch as u32);
        e.f64(h.train_mse);
        e.f64(h.val_mse);
    }
    e.finish()
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<TrainedModel, FormatError> {
    let mut d = Dec::open(buf, CHECKPOINT_MAGIC)?;
    let version = d.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::Version(version));
    }
    let tag = d.u8()?;
    let arch = Arch::from_tag(tag).ok_or_else(|| FormatError::Invalid(format!("architecture tag {tag}")))?;
    let net = NetConfig { arch, n: d.u16()? as usize, width: d.u16()? as usize };
    if net.n == 0 || net.width == 0 {
        return Err(FormatError::Invalid("empty network shape".into()));
    }
    let positional_encoding = d.u8()? != 0;
    let bits = match d.u8()? {
        0 => None,
        b => Some(b),
    };
    let best_val_mse = d.f64()?;
    let best_epoch = d.u32()? as usize;
    let epochs = d.u32()? as usize;
    let count = d.u32()? as usize;
    if count != param_count(&net) {
        return Err(FormatError::Invalid(format!("{count} parameters, shape needs {}", param_count(&net))));
    }
    let data = (0..count).map(|_| d.f64()).collect::<Result<Vec<_>, _>>()?;
    let nr = d.u8()? as usize;
    if nr != RangeSet::empty(arch).ranges.len() {
        return Err(FormatError::Invalid(format!("{nr} activation ranges")));
    }
    let mut ranges = Vec::with_capacity(nr);
    for _ in 0..nr {
        let present = d.u8()?;
        let (lo, hi) = (d.f64()?, d.f64()?);
        ranges.push((present != 0).then_some((lo, hi)));
    }
    let hl = d.u32()? as usize;
    let mut history = Vec::with_capacity(hl.min(1 << 16));
    for _ in 0..hl {
        history.push(EpochLog { epoch: d.u32()? as usize, train_mse: d.f64()?, val_mse: d.f64()? });
    }
    d.end()?;
    Ok(TrainedModel {
        params: Params { net, positional_encoding, data },
        bits,
        ranges: RangeSet { ranges },
        best_val_mse,
        best_epoch,
        epochs,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TrainedModel {
        let p = Params::init(NetConfig::transformer(6, 8), 4);
        let mut ranges = RangeSet::empty(Arch::Transformer);
        ranges.ranges[0] = Some((-1.5, 2.25));
        TrainedModel {
            params: p,
            bits: Some(6),
            ranges,
            best_val_mse: 0.0421,
            best_epoch: 3,
            epochs: 13,
            history: vec![EpochLog { epoch: 1, train_mse: 0.5, val_mse: 0.25 }],
        }
    }

    #[test]
    fn round_trip() {
        let m = model();
        let b = encode_checkpoint(&m);
        assert_eq!(&b[..4], b"EOFC");
        let back = decode_checkpoint(&b).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back), b);
    }

    #[test]
    fn corruption_is_caught() {
        let mut b = encode_checkpoint(&model());
        b[40] ^= 1;
        assert!(matches!(decode_checkpoint(&b), Err(FormatError::Crc { .. })));
        assert_eq!(decode_checkpoint(b"EOFM1234"), Err(FormatError::Magic));
    }
}
