"""Reading and writing 16-bit PCM mono WAV files."""

import wave

import numpy as np

PCM16_SCALE = 32768.0


def read_wav(path, expect_rate=None):
    """Read a mono 16-bit PCM WAV file into a float array in [-1, 1).

    Returns (samples, sample_rate). Rejects anything that is not mono
    16-bit PCM, and rejects a rate mismatch when expect_rate is given.
    """
    with wave.open(str(path), "rb") as wf:
        n_channels = wf.getnchannels()
        sampwidth = wf.getsampwidth()
        rate = wf.getframerate()
        n_frames = wf.getnframes()
        if n_channels != 1:
            raise ValueError(f"{path}: expected mono audio, got {n_channels} channels")
        if sampwidth != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
        if expect_rate is not None and rate != expect_rate:
            raise ValueError(f"{path}: expected {expect_rate} Hz, got {rate} Hz")
        raw = wf.readframes(n_frames)
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM16_SCALE
    return samples, rate


def write_wav(path, samples, sample_rate):
    """Write a float array in [-1, 1] as a mono 16-bit PCM WAV file."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("samples must be a 1-D array")
    pcm = np.clip(np.round(samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sample_rate))
        wf.writeframes(pcm.tobytes())
