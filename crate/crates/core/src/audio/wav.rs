//! Strict WAV ingestion: RIFF, 2 channels, 16 kHz, PCM16 or float32.
//!
//! Anything else is rejected loudly; the pipeline never resamples.

use std::path::Path;

use super::{AudioError, StereoAudio, SAMPLE_RATE};

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn read_wav_stereo(path: &Path) -> Result<StereoAudio, AudioError> {
    if !path.exists() {
        return Err(AudioError::NotFound(path.display().to_string()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 2 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{}: expected 2 channels, got {}",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(AudioError::UnsupportedFormat(format!(
            "{}: expected {} Hz, got {}",
            path.display(),
            SAMPLE_RATE,
            spec.sample_rate
        )));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32767.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound_error(path, e))?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{}: unsupported encoding {:?}/{} bits",
                path.display(),
                fmt,
                bits
            )))
        }
    };
    let n = interleaved.len() / 2;
    let mut ch0 = Vec::with_capacity(n);
    let mut ch1 = Vec::with_capacity(n);
    for pair in interleaved.chunks_exact(2) {
        ch0.push(pair[0]);
        ch1.push(pair[1]);
    }
    StereoAudio::new(ch0, ch1, SAMPLE_RATE)
}

pub fn write_wav_stereo(
    path: &Path,
    audio: &StereoAudio,
    encoding: WavEncoding,
) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: audio.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer =
        hound::WavWriter::create(path, spec).map_err(|e| map_hound_error(path, e))?;
    match encoding {
        WavEncoding::Pcm16 => {
            for i in 0..audio.len() {
                for c in 0..2 {
                    writer
                        .write_sample(quantize_i16(audio.channel(c)[i]))
                        .map_err(|e| map_hound_error(path, e))?;
                }
            }
        }
        WavEncoding::Float32 => {
            for i in 0..audio.len() {
                for c in 0..2 {
                    writer
                        .write_sample(audio.channel(c)[i])
                        .map_err(|e| map_hound_error(path, e))?;
                }
            }
        }
    }
    writer.finalize().map_err(|e| map_hound_error(path, e))?;
    Ok(())
}

/// Round to the PCM16 grid. Reading back `quantize_i16(x) / 32767` and
/// re-quantizing is the identity, which is what makes PCM16 round trips
/// stable after one write.
pub fn quantize_i16(x: f32) -> i16 {
    (x * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

fn map_hound_error(path: &Path, e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => match io.kind() {
            std::io::ErrorKind::NotFound => AudioError::NotFound(path.display().to_string()),
            // hound reports truncated containers as short reads.
            std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other => {
                AudioError::CorruptHeader(format!("{}: {}", path.display(), io))
            }
            _ => AudioError::Io(io),
        },
        hound::Error::FormatError(msg) => {
            AudioError::CorruptHeader(format!("{}: {}", path.display(), msg))
        }
        hound::Error::Unsupported => {
            AudioError::UnsupportedFormat(format!("{}: unsupported wav variant", path.display()))
        }
        other => AudioError::CorruptHeader(format!("{}: {}", path.display(), other)),
    }
}
