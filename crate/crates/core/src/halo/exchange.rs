use std::time::{Duration, Instant};

use super::topology::{Side, Subdomain};
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::transport::Endpoint;

/// Bytes in the message header preceding the payload.
pub const HEADER_LEN: usize = 16;

/// One halo message: what this rank sends across `side` of `axis` and
/// where the reply lands. Boxes are half-open, in local signed coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageDesc {
    pub axis: usize,
    pub side: Side,
    pub peer: usize,
    pub send_lo: [isize; 3],
    pub send_hi: [isize; 3],
    pub recv_lo: [isize; 3],
    pub recv_hi: [isize; 3],
}

fn cells(lo: [isize; 3], hi: [isize; 3]) -> usize {
    (0..3).map(|a| (hi[a] - lo[a]).max(0) as usize).product()
}

impl MessageDesc {
    pub fn send_cells(&self) -> usize {
        cells(self.send_lo, self.send_hi)
    }

    pub fn recv_cells(&self) -> usize {
        cells(self.recv_lo, self.recv_hi)
    }

    pub fn send_bytes(&self) -> usize {
        HEADER_LEN + 8 * self.send_cells()
    }

    pub fn recv_bytes(&self) -> usize {
        HEADER_LEN + 8 * self.recv_cells()
    }
}

/// All messages of one exchange, in the order they are sent: axis x, y,
/// then z; low side before high side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HaloPlan {
    pub messages: Vec<MessageDesc>,
}

impl HaloPlan {
    /// Boxes along the exchanged axis are `h` layers thick. Along axes
    /// exchanged earlier they span the received halos too, which forwards
    /// edge and corner data without diagonal messages. On physical sides
    /// they include the boundary ring, which compressed grids rewrite.
    pub fn new(sub: &Subdomain) -> Self {
        let own = sub.owned_region();
        let local = sub.local_dims();
        let h = sub.h as isize;
        let mut messages = Vec::new();
        for axis in 0..3 {
            let mut lo = [0isize; 3];
            let mut hi = [0isize; 3];
            for b in (0..3).filter(|&b| b != axis) {
                lo[b] = match sub.neighbor(b, Side::Low) {
                    None => -1,
                    Some(_) if b < axis => 0,
                    Some(_) => own.lo[b] as isize,
                };
                hi[b] = match sub.neighbor(b, Side::High) {
                    None => local[b] as isize + 1,
                    Some(_) if b < axis => local[b] as isize,
                    Some(_) => own.hi[b] as isize,
                };
            }
            for side in Side::BOTH {
                let Some(peer) = sub.neighbor(axis, side) else {
                    continue;
                };
                let (mut send_lo, mut send_hi, mut recv_lo, mut recv_hi) = (lo, hi, lo, hi);
                match side {
                    Side::Low => {
                        let o = own.lo[axis] as isize;
                        (send_lo[axis], send_hi[axis]) = (o, o + h);
                        (recv_lo[axis], recv_hi[axis]) = (o - h, o);
                    }
                    Side::High => {
                        let o = own.hi[axis] as isize;
                        (send_lo[axis], send_hi[axis]) = (o - h, o);
                        (recv_lo[axis], recv_hi[axis]) = (o, o + h);
                    }
                }
                messages.push(MessageDesc {
                    axis,
                    side,
                    peer,
                    send_lo,
                    send_hi,
                    recv_lo,
                    recv_hi,
                });
            }
        }
        Self { messages }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Serialize a halo message: axis, sender side, two pad bytes, payload
/// length (`u32`), cycle index (`u64`), then the values; all little-endian.
pub fn encode_frame(axis: usize, side: Side, cycle: u64, values: &[f64]) -> Result<Vec<u8>> {
    let payload = values.len() * 8;
    let len = u32::try_from(payload)
        .map_err(|_| Error::Protocol(format!("halo payload of {payload} bytes too large")))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + payload);
    buf.extend_from_slice(&[axis as u8, side as u8, 0, 0]);
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&cycle.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Parse and validate a halo message against what the receiver expects.
pub fn decode_frame(
    buf: &[u8],
    axis: usize,
    side: Side,
    cycle: u64,
    count: usize,
) -> Result<Vec<f64>> {
    if buf.len() < HEADER_LEN {
        return Err(Error::Protocol(format!(
            "halo frame of {} bytes has no header",
            buf.len()
        )));
    }
    let got_side = Side::from_u8(buf[1]);
    let len = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let got_cycle = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    if buf[0] as usize != axis || got_side != Some(side) {
        return Err(Error::Protocol(format!(
            "halo frame for axis {} side {} where axis {axis} side {side:?} was expected",
            buf[0], buf[1]
        )));
    }
    if got_cycle != cycle {
        return Err(Error::Protocol(format!(
            "halo frame from cycle {got_cycle}, expected {cycle}"
        )));
    }
    if len != count * 8 || buf.len() != HEADER_LEN + len {
        return Err(Error::Protocol(format!(
            "halo payload of {len} bytes, expected {}",
            count * 8
        )));
    }
    Ok(buf[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Time spent in each phase of halo exchanges.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExchangeTimings {
    pub pack: Duration,
    pub transfer: Duration,
    pub unpack: Duration,
}

impl ExchangeTimings {
    pub fn total(&self) -> Duration {
        self.pack + self.transfer + self.unpack
    }
}

/// Refresh every halo cell of `grid` from its owner, one axis at a time.
pub fn exchange_multilayer_halos(
    grid: &mut Grid3,
    plan: &HaloPlan,
    ep: &mut Endpoint,
    cycle: u64,
    timings: &mut ExchangeTimings,
) -> Result<()> {
    for m in &plan.messages {
        let t0 = Instant::now();
        let out = encode_frame(
            m.axis,
            m.side,
            cycle,
            &grid.box_values_signed(m.send_lo, m.send_hi),
        )?;
        let t1 = Instant::now();
        let reply = ep.sendrecv(m.peer, &out, m.recv_bytes())?;
        let t2 = Instant::now();
        let values = decode_frame(&reply, m.axis, m.side.opposite(), cycle, m.recv_cells())?;
        grid.set_box_signed(m.recv_lo, m.recv_hi, &values)?;
        let t3 = Instant::now();
        timings.pack += t1 - t0;
        timings.transfer += t2 - t1;
        timings.unpack += t3 - t2;
    }
    Ok(())
}
