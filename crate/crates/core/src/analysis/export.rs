use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderModel;
use crate::error::{invalid, Error, Result};
use crate::posenc::{relative_offset_index, sinusoidal_table, PosEncKind};

/// One exported value; `position` is a relative offset for relative kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingPoint {
    pub position: i64,
    pub dim: usize,
    pub value: f64,
}

/// Selected dimensions of the learnt (or fixed) encoding over `positions`.
/// Relative kinds export their offset vectors, with offsets clipped like
/// the model clips them; TUPE kinds export the raw table `P`.
pub fn export_encoding_dims(model: &EncoderModel, dims: &[usize], positions: Range<i64>) -> Result<Vec<EncodingPoint>> {
    let spec = &model.config.posenc;
    if let Some(&bad) = dims.iter().find(|&&d| d >= model.config.d_model) {
        return Err(invalid(format!("dimension {bad} outside d_model {}", model.config.d_model)));
    }
    let row_of = |pos: i64| -> Result<usize> {
        if spec.kind.is_relative() {
            // offset j − i with i fixed at the clip distance
            let k = spec.max_positions;
            let i = k as i64;
            Ok(relative_offset_index(i as usize, (i + pos).max(0) as usize, k))
        } else if pos < 0 || pos as usize >= spec.max_positions {
            Err(invalid(format!("position {pos} outside the table")))
        } else {
            Ok(pos as usize)
        }
    };
    let table = match spec.kind {
        PosEncKind::Sinusoidal => sinusoidal_table(positions.end.max(1) as usize, model.config.d_model)?,
        PosEncKind::RelativeKey | PosEncKind::RelativeKeyQuery => model.pos.offsets.clone().expect("offset table"),
        _ => model.pos.table.clone().expect("position table"),
    };
    let mut out = Vec::new();
    for pos in positions {
        let r = row_of(pos)?;
        for &d in dims {
            out.push(EncodingPoint {
                position: pos,
                dim: d,
                value: table.get(r, d),
            });
        }
    }
    Ok(out)
}

pub fn write_points_csv<W: Write>(w: W, points: &[EncodingPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(p).map_err(|e| Error::Format(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<EncodingPoint>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}
