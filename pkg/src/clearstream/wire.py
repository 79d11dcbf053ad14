"""Earbud-to-host audio packet framing, loss simulation, and reassembly.

A wire frame is 182 bytes, little-endian: a u16 sequence number followed
by 90 samples of 16-bit PCM (2.88 ms at 31.25 kHz).  Sequence numbers
wrap at 2^16; a received number within 2^15 ahead of the expected one is
treated as newer.  Lost packets are concealed as zeros so the output
stream never loses sample alignment: packet s always occupies output
samples [90*s, 90*s + 90).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PACKET_BYTES = 182
SAMPLES_PER_PACKET = 90
SEQ_MOD = 1 << 16
_SEQ_HALF = 1 << 15


def encode_packet(seq: int, samples: np.ndarray) -> bytes:
    """Frame 90 int16 samples under sequence number seq."""
    if not 0 <= seq < SEQ_MOD:
        raise ValueError(f"seq must be in [0, {SEQ_MOD}), got {seq}")
    arr = np.asarray(samples)
    if arr.shape != (SAMPLES_PER_PACKET,):
        raise ValueError(f"expected {SAMPLES_PER_PACKET} samples")
    if arr.dtype != np.int16:
        if np.any(arr < -32768) or np.any(arr > 32767):
            raise ValueError("samples do not fit int16")
        arr = arr.astype(np.int16)
    return int(seq).to_bytes(2, "little") + arr.astype("<i2").tobytes()


def decode_packet(frame: bytes) -> tuple[int, np.ndarray]:
    """Inverse of encode_packet."""
    if len(frame) != PACKET_BYTES:
        raise ValueError(
            f"frame must be {PACKET_BYTES} bytes, got {len(frame)}"
        )
    seq = int.from_bytes(frame[:2], "little")
    samples = np.frombuffer(frame[2:], dtype="<i2").astype(np.int16)
    return seq, samples


def packetize(samples: np.ndarray, start_seq: int = 0) -> list[bytes]:
    """Split an int16 sample stream into frames, zero-padding the tail."""
    arr = np.asarray(samples, dtype=np.int16)
    frames = []
    seq = start_seq
    for i in range(0, len(arr), SAMPLES_PER_PACKET):
        chunk = arr[i : i + SAMPLES_PER_PACKET]
        if len(chunk) < SAMPLES_PER_PACKET:
            chunk = np.concatenate(
                [chunk, np.zeros(SAMPLES_PER_PACKET - len(chunk), np.int16)]
            )
        frames.append(encode_packet(seq % SEQ_MOD, chunk))
        seq += 1
    return frames


@dataclass
class StreamReassembler:
    """Reorder-free reassembly with zero concealment for lost packets.

    Starts expecting sequence 0.  feed() returns the newly released
    samples: 90 per skipped packet (zeros) plus the packet's payload.
    Packets older than the expected sequence (mod-2^16 distance >= 2^15)
    or re-delivered are dropped and counted in duplicates_ignored.
    """

    expected_seq: int = 0
    packets_ok: int = 0
    packets_concealed: int = 0
    duplicates_ignored: int = 0
    samples_out: int = 0

    def feed(self, frame: bytes) -> np.ndarray:
        seq, samples = decode_packet(frame)
        gap = (seq - self.expected_seq) % SEQ_MOD
        if gap >= _SEQ_HALF:
            self.duplicates_ignored += 1
            return np.zeros(0, dtype=np.int16)
        out = samples
        if gap:
            out = np.concatenate(
                [np.zeros(gap * SAMPLES_PER_PACKET, np.int16), samples]
            )
            self.packets_concealed += gap
        self.packets_ok += 1
        self.expected_seq = (seq + 1) % SEQ_MOD
        self.samples_out += len(out)
        return out

    def feed_all(self, frames: list[bytes]) -> np.ndarray:
        parts = [self.feed(f) for f in frames]
        if not parts:
            return np.zeros(0, dtype=np.int16)
        return np.concatenate(parts)


def simulate_loss(
    frames: list[bytes], loss_prob: float, seed: int = 0
) -> tuple[list[bytes], list[int]]:
    """Drop each frame i.i.d. with probability loss_prob.

    Returns the surviving frames in order and the list of dropped
    positions (indices into the input list).
    """
    if not 0.0 <= loss_prob <= 1.0:
        raise ValueError("loss_prob must be in [0, 1]")
    rng = np.random.default_rng(seed)
    drops = rng.random(len(frames)) < loss_prob
    kept = [f for f, d in zip(frames, drops) if not d]
    return kept, [i for i, d in enumerate(drops) if d]


def write_replay(path: str | Path, frames: list[bytes]) -> None:
    """Write frames as a newline-delimited hex dump, one frame per line."""
    with open(path, "w") as fh:
        fh.write("# one 182-byte frame per line, hex\n")
        for f in frames:
            fh.write(f.hex() + "\n")


def read_replay(path: str | Path) -> list[bytes]:
    """Read a hex-dump replay file; blank lines and '#' comments skipped."""
    frames = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            frame = bytes.fromhex(line)
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: not valid hex") from e
        if len(frame) != PACKET_BYTES:
            raise ValueError(
                f"{path}:{lineno}: frame is {len(frame)} bytes, "
                f"expected {PACKET_BYTES}"
            )
        frames.append(frame)
    return frames
