use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::linalg::C64;

const MAGIC: &[u8; 8] = b"LTSIFLD1";

/// Complex samples on a `(t, x, channel)` grid, stored row-major in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalField {
    times: Vec<f64>,
    x: Vec<f64>,
    channels: usize,
    data: Vec<C64>,
}

impl SpatioTemporalField {
    pub fn zeros(times: Vec<f64>, x: Vec<f64>, channels: usize) -> Self {
        let len = times.len() * x.len() * channels;
        Self {
            times,
            x,
            channels,
            data: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn from_data(times: Vec<f64>, x: Vec<f64>, channels: usize, data: Vec<C64>) -> Result<Self> {
        let expect = times.len() * x.len() * channels;
        if data.len() != expect {
            return Err(Error::Validation(format!(
                "field data has {} entries, expected {expect}",
                data.len()
            )));
        }
        Ok(Self { times, x, channels, data })
    }

    /// Samples `f(t, x, channel)` on the grid.
    pub fn from_fn(times: Vec<f64>, x: Vec<f64>, channels: usize, f: impl Fn(f64, f64, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(times.len() * x.len() * channels);
        for &t in &times {
            for &xi in &x {
                for ch in 0..channels {
                    data.push(f(t, xi, ch));
                }
            }
        }
        Self { times, x, channels, data }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    fn slice_len(&self) -> usize {
        self.x.len() * self.channels
    }

    /// All `(x, channel)` samples at time index `it`.
    pub fn slice(&self, it: usize) -> &[C64] {
        let n = self.slice_len();
        &self.data[it * n..(it + 1) * n]
    }

    pub fn slice_mut(&mut self, it: usize) -> &mut [C64] {
        let n = self.slice_len();
        &mut self.data[it * n..(it + 1) * n]
    }

    pub fn get(&self, it: usize, ix: usize, ch: usize) -> C64 {
        self.data[(it * self.x.len() + ix) * self.channels + ch]
    }

    /// Values of one channel at one time, ordered by `x`.
    pub fn channel_at(&self, it: usize, ch: usize) -> Vec<C64> {
        self.slice(it).iter().skip(ch).step_by(self.channels).copied().collect()
    }

    /// Cyclic shift by `cells` grid points in `x` (positive moves data right).
    pub fn shift_x(&self, cells: isize) -> Self {
        let nx = self.x.len();
        let mut out = self.clone();
        if nx == 0 {
            return out;
        }
        for it in 0..self.times.len() {
            for ix in 0..nx {
                let dst = (ix as isize + cells).rem_euclid(nx as isize) as usize;
                for ch in 0..self.channels {
                    out.data[(it * nx + dst) * self.channels + ch] = self.get(it, ix, ch);
                }
            }
        }
        out
    }

    /// CSV with header `t,x,channel,re,im`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x,channel,re,im")?;
        for (it, t) in self.times.iter().enumerate() {
            for (ix, x) in self.x.iter().enumerate() {
                for ch in 0..self.channels {
                    let z = self.get(it, ix, ch);
                    writeln!(out, "{t:e},{x:e},{ch},{:e},{:e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }

    /// Reads the CSV layout written by [`write_csv`](Self::write_csv). Rows
    /// must be in `(t, x, channel)` row-major order.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field CSV".into()))??;
        if header.trim() != "t,x,channel,re,im" {
            return Err(Error::Parse(format!("unexpected field CSV header '{header}'")));
        }
        let mut rows: Vec<(f64, f64, usize, C64)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("field CSV line {}: '{line}'", i + 2));
            if cols.len() != 5 {
                return Err(bad());
            }
            let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let ch = cols[2].parse::<usize>().map_err(|_| bad())?;
            rows.push((f(cols[0])?, f(cols[1])?, ch, C64::new(f(cols[3])?, f(cols[4])?)));
        }
        let channels = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let mut times: Vec<f64> = Vec::new();
        let mut x: Vec<f64> = Vec::new();
        for r in &rows {
            if times.last() != Some(&r.0) {
                times.push(r.0);
            }
            if times.len() == 1 && r.2 == 0 {
                x.push(r.1);
            }
        }
        let field = Self::from_data(times, x, channels, rows.iter().map(|r| r.3).collect())?;
        for (k, r) in rows.iter().enumerate() {
            let (it, rest) = (k / field.slice_len(), k % field.slice_len());
            let (ix, ch) = (rest / channels, rest % channels);
            if r.0 != field.times[it] || r.1 != field.x[ix] || r.2 != ch {
                return Err(Error::Parse(format!("field CSV row {} is out of (t, x, channel) order", k + 2)));
            }
        }
        Ok(field)
    }

    /// Binary layout: the 8-byte magic `LTSIFLD1`, then `u64` counts
    /// `(nt, nx, channels)`, the `nt` times, the `nx` positions, and the
    /// samples as `(re, im)` pairs in `(t, x, channel)` row-major order. All
    /// numbers little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        for n in [self.times.len(), self.x.len(), self.channels] {
            out.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in self.times.iter().chain(&self.x) {
            out.write_all(&v.to_le_bytes())?;
        }
        for z in &self.data {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not an LTSIFLD1 field file".into()));
        }
        let mut buf = [0u8; 8];
        let mut read_u64 = |input: &mut R| -> Result<usize> {
            input.read_exact(&mut buf)?;
            usize::try_from(u64::from_le_bytes(buf)).map_err(|_| Error::Parse("field size overflows".into()))
        };
        let nt = read_u64(&mut input)?;
        let nx = read_u64(&mut input)?;
        let channels = read_u64(&mut input)?;
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(count);
            let mut b = [0u8; 8];
            for _ in 0..count {
                input.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let times = read_f64s(nt)?;
        let x = read_f64s(nx)?;
        let raw = read_f64s(2 * nt * nx * channels)?;
        let data = raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
        Self::from_data(times, x, channels, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpatioTemporalField {
        SpatioTemporalField::from_fn(vec![0.0, 0.5], vec![-1.0, 0.0, 1.0], 2, |t, x, ch| {
            C64::new(t + x, ch as f64 - 0.25 * x)
        })
    }

    #[test]
    fn csv_round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x,channel,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3 * 2);
        let back = SpatioTemporalField::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn binary_round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"LTSIFLD1");
        assert_eq!(buf.len(), 8 + 24 + 8 * (2 + 3) + 16 * 12);
        assert_eq!(SpatioTemporalField::read_binary(&buf[..]).unwrap(), f);
        buf[0] = b'X';
        assert!(SpatioTemporalField::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn shift_wraps() {
        let f = sample();
        let s = f.shift_x(1);
        assert_eq!(s.get(0, 1, 0), f.get(0, 0, 0));
        assert_eq!(s.get(1, 0, 1), f.get(1, 2, 1));
        assert_eq!(s.shift_x(-1), f);
    }

    #[test]
    fn channel_extraction() {
        let f = sample();
        assert_eq!(f.channel_at(1, 1), vec![f.get(1, 0, 1), f.get(1, 1, 1), f.get(1, 2, 1)]);
    }
}
