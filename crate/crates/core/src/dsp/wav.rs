use std::path::Path;

use super::{AudioClip, DspError};

fn map_hound(e: hound::Error) -> DspError {
    match e {
        // hound reports short reads as UnexpectedEof or as a custom Other error
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other
            ) =>
        {
            DspError::Malformed(format!("file ends early: {io}"))
        }
        hound::Error::IoError(io) => DspError::Io(io),
        hound::Error::FormatError(m) => DspError::Malformed(m.into()),
        hound::Error::Unsupported => DspError::UnsupportedFormat("unsupported WAV feature".into()),
        other => DspError::UnsupportedFormat(other.to_string()),
    }
}

/// Reads a 16-bit PCM mono RIFF/WAVE file; samples are scaled by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, DspError> {
    let reader = hound::WavReader::open(path.as_ref()).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DspError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(DspError::UnsupportedFormat(format!(
            "{:?} {}-bit, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    if samples.len() != declared {
        return Err(DspError::Malformed(format!(
            "read {} of {declared} declared samples",
            samples.len()
        )));
    }
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes a clip as 16-bit PCM mono, rounding `x·32768` and saturating at the i16 range.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path.as_ref(), spec).map_err(map_hound)?;
    for &s in clip.samples() {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(v).map_err(map_hound)?;
    }
    w.finalize().map_err(map_hound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn pcm16(channels: u16, rate: u32, samples: &[i16], declared_bytes: Option<u32>) -> Vec<u8> {
        let data_len = samples.len() as u32 * 2;
        let declared = declared_bytes.unwrap_or(data_len);
        let mut b = Vec::new();
        b.extend(b"RIFF");
        b.extend((36 + declared).to_le_bytes());
        b.extend(b"WAVEfmt ");
        b.extend(16u32.to_le_bytes());
        b.extend(1u16.to_le_bytes());
        b.extend(channels.to_le_bytes());
        b.extend(rate.to_le_bytes());
        b.extend((rate * channels as u32 * 2).to_le_bytes());
        b.extend((channels * 2).to_le_bytes());
        b.extend(16u16.to_le_bytes());
        b.extend(b"data");
        b.extend(declared.to_le_bytes());
        for s in samples {
            b.extend(s.to_le_bytes());
        }
        b
    }

    fn write_tmp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    #[test]
    fn scales_by_32768() {
        let f = write_tmp(&pcm16(1, 16000, &[0, 16384, -16384], None));
        let clip = load_wav(f.path()).unwrap();
        assert_eq!(clip.samples(), &[0.0, 0.5, -0.5]);
        assert_eq!(clip.sample_rate(), 16000);
    }

    #[test]
    fn stereo_is_unsupported() {
        let f = write_tmp(&pcm16(2, 16000, &[0, 1, 2, 3], None));
        assert!(matches!(load_wav(f.path()), Err(DspError::UnsupportedFormat(_))));
    }

    #[test]
    fn truncated_data_is_malformed() {
        let f = write_tmp(&pcm16(1, 16000, &[1, 2, 3], Some(20)));
        assert!(matches!(load_wav(f.path()), Err(DspError::Malformed(_))));
        let f = write_tmp(b"RIFF\x10\x00\x00\x00WAVEfm");
        assert!(matches!(load_wav(f.path()), Err(DspError::Malformed(_))));
    }

    #[test]
    fn write_then_read_round_trips_at_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.0, 0.25, -1.0, 0.999969482421875], 8000).unwrap();
        write_wav(&p, &clip).unwrap();
        assert_eq!(load_wav(&p).unwrap(), clip);
    }
}
