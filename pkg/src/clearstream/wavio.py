"""WAV file I/O for 16-bit PCM and 32-bit float, mono or stereo.

Thin wrapper over scipy's RIFF reader/writer that converts to and from
WaveBuffer (channel-major float64).  16-bit data uses the 32768 scale
with saturation on write.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import WaveBuffer, float_to_int16, int16_to_float


def read_wav(path: str | Path) -> WaveBuffer:
    """Read a WAV file into a WaveBuffer.

    16-bit PCM is scaled to float by 1/32768; 32-bit float is taken
    as-is.  Other encodings are rejected.
    """
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        floats = int16_to_float(data)
    elif data.dtype == np.float32 or data.dtype == np.float64:
        floats = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format: {data.dtype}")
    if floats.ndim == 1:
        floats = floats[None, :]
    else:
        floats = floats.T  # scipy gives (n, channels)
    return WaveBuffer(floats, sample_rate=float(rate))


def write_wav(path: str | Path, wave: WaveBuffer, encoding: str = "int16") -> None:
    """Write a WaveBuffer as RIFF WAV.

    encoding is "int16" (saturating, scale 32768) or "float32".
    """
    data = wave.data.T  # scipy expects (n, channels)
    if data.shape[1] == 1:
        data = data[:, 0]
    if encoding == "int16":
        out = float_to_int16(data)
    elif encoding == "float32":
        out = data.astype(np.float32)
    else:
        raise ValueError(f"unsupported encoding: {encoding}")
    wavfile.write(str(path), int(round(wave.sample_rate)), out)
