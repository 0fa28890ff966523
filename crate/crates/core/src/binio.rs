//! Little-endian primitives for the binary artifact formats.

use std::io::{self, Read, Write};

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32(w: &mut impl Write, v: f32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub(crate) fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    read_array::<4>(r).map(u32::from_le_bytes)
}

pub(crate) fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    read_array::<8>(r).map(u64::from_le_bytes)
}

pub(crate) fn read_f32(r: &mut impl Read) -> io::Result<f32> {
    read_array::<4>(r).map(f32::from_le_bytes)
}

pub(crate) fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    read_array::<8>(r).map(f64::from_le_bytes)
}

/// Reads four bytes and checks them against `magic`.
pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> io::Result<()> {
    let found = read_array::<4>(r)?;
    if &found != magic {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&found)
            ),
        ));
    }
    Ok(())
}

pub(crate) fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}
