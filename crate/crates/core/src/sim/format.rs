//! Binary and CSV encodings of [`LinkTrajectory`].
//!
//! Binary layout, little-endian: magic `WAGT`, version u32, frame count u32,
//! link count u32, frame rate f64, then frames·links·3 f64 coordinates.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::{LinkTrajectory, Vec3};
use crate::error::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"WAGT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

pub fn write_trajectory(traj: &LinkTrajectory, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + traj.data().len() * 24);
    buf.extend_from_slice(TRAJECTORY_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(traj.num_frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(traj.num_links() as u32).to_le_bytes());
    buf.extend_from_slice(&traj.frame_rate().to_le_bytes());
    for p in traj.data() {
        for c in p.iter() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_trajectory(mut input: impl Read) -> Result<LinkTrajectory> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<LinkTrajectory> {
    let bad = |r: &str| Error::format("trajectory", r);
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != TRAJECTORY_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let frames = u32_at(8) as usize;
    let links = u32_at(12) as usize;
    let rate = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let count = frames
        .checked_mul(links)
        .and_then(|n| n.checked_mul(24))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count {
        return Err(bad(&format!(
            "expected {count} payload bytes, found {}",
            body.len()
        )));
    }
    let data: Vec<Vec3> = body
        .chunks_exact(24)
        .map(|c| {
            let f = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap());
            Vec3::new(f(0), f(1), f(2))
        })
        .collect();
    LinkTrajectory::new(links, rate, data).map_err(|e| bad(&e.to_string()))
}

/// CSV export with header `frame,link,x,y,z`.
pub fn trajectory_to_csv(traj: &LinkTrajectory) -> String {
    let mut s = String::from("frame,link,x,y,z\n");
    for (t, frame) in traj.frames().enumerate() {
        for (i, p) in frame.iter().enumerate() {
            let _ = writeln!(s, "{t},{i},{},{},{}", p.x, p.y, p.z);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LinkTrajectory {
        let data = (0..12).map(|i| Vec3::new(i as f64, -(i as f64) * 0.5, 0.25)).collect();
        LinkTrajectory::new(3, 60.0, data).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        write_trajectory(&t, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"WAGT");
        assert_eq!(buf.len(), HEADER_LEN + 12 * 24);
        assert_eq!(read_trajectory(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let mut buf = Vec::new();
        write_trajectory(&sample(), &mut buf).unwrap();
        assert!(read_trajectory(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(read_trajectory(&buf[..]).is_err());
        assert!(read_trajectory(&b"WAG"[..]).is_err());
    }

    #[test]
    fn rejects_zero_rate() {
        let mut buf = Vec::new();
        write_trajectory(&sample(), &mut buf).unwrap();
        buf[16..24].copy_from_slice(&0.0f64.to_le_bytes());
        assert!(read_trajectory(&buf[..]).is_err());
    }

    #[test]
    fn csv_layout() {
        let csv = trajectory_to_csv(&sample());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("frame,link,x,y,z"));
        assert_eq!(lines.next(), Some("0,0,0,-0,0.25"));
        assert_eq!(csv.lines().count(), 13);
    }
}
