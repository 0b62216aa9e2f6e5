//! RIFF WAV reading and writing, restricted to 16-bit PCM mono.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

const I16_SCALE: f64 = 32768.0;

/// Reads a 16-bit PCM mono WAV file. Samples are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 12];
    r.read_exact(&mut header)?;
    if &header[0..4] != b"RIFF" || &header[8..12] != b"WAVE" {
        return Err(Error::Format(format!("{} is not a RIFF/WAVE file", path.display())));
    }

    let mut sample_rate = 0u32;
    let mut data: Option<Vec<u8>> = None;
    let mut fmt_seen = false;
    loop {
        let mut chunk = [0u8; 8];
        match r.read_exact(&mut chunk) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let id = &chunk[0..4];
        let size = u32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]) as usize;
        let mut body = vec![0u8; size + (size & 1)]; // chunks are word-aligned
        r.read_exact(&mut body)?;
        body.truncate(size);
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                let format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                sample_rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let bits = u16::from_le_bytes([body[14], body[15]]);
                if format != 1 {
                    return Err(Error::Format(format!("unsupported WAV format tag {format}, want PCM")));
                }
                if channels != 1 {
                    return Err(Error::Format(format!("unsupported channel count {channels}, want mono")));
                }
                if bits != 16 {
                    return Err(Error::Format(format!("unsupported bit depth {bits}, want 16")));
                }
                fmt_seen = true;
            }
            b"data" => data = Some(body),
            _ => {} // skip ancillary chunks (LIST, fact, ...)
        }
    }
    if !fmt_seen {
        return Err(Error::Format("missing fmt chunk".into()));
    }
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(Error::Format("data chunk has odd byte length".into()));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / I16_SCALE)
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Writes a waveform as 16-bit PCM mono. Samples are clamped to [-1, 1) and
/// rounded to the nearest integer level.
pub fn write_wav(w: &Waveform, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let data_len = (w.len() * 2) as u32;
    out.write_all(b"RIFF")?;
    out.write_all(&(36 + data_len).to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?; // PCM
    out.write_all(&1u16.to_le_bytes())?; // mono
    out.write_all(&w.sample_rate.to_le_bytes())?;
    out.write_all(&(w.sample_rate * 2).to_le_bytes())?; // byte rate
    out.write_all(&2u16.to_le_bytes())?; // block align
    out.write_all(&16u16.to_le_bytes())?;
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    let mut bytes = Vec::with_capacity(w.len() * 2);
    for &s in &w.samples {
        let q = (s * I16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("usfgan-wav-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_within_quantization() {
        let samples: Vec<f64> = (0..2000)
            .map(|i| (i as f64 * 0.71).sin() * 0.8 + (i as f64 * 0.013).cos() * 0.1)
            .collect();
        let w = Waveform::new(samples, 16000).unwrap();
        let p = tmpfile("rt.wav");
        write_wav(&w, &p).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.len(), w.len());
        for (a, b) in w.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() <= 1.0 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_round_trip_is_exact() {
        let w = Waveform::new(vec![0.0; 123], 8000).unwrap();
        let p = tmpfile("zero.wav");
        write_wav(&w, &p).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.samples, w.samples);
    }

    #[test]
    fn one_second_sample_count() {
        let w = Waveform::new(vec![0.25; 16000], 16000).unwrap();
        let p = tmpfile("sec.wav");
        write_wav(&w, &p).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.len(), 16000);
        assert!((back.duration_secs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_stereo() {
        let p = tmpfile("stereo.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&p, bytes).unwrap();
        let err = read_wav(&p).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn missing_file_is_not_found() {
        let err = read_wav(Path::new("/nonexistent/nope.wav")).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }
}
