"""End-to-end streaming enhancer: TCN, mel-mask UNet, spectral combine.

Per 350-sample stereo packet the stream

1. pushes the packet through the streaming TCN, obtaining the enhanced
   mono packet that sits `lookahead` (700 samples) behind the newest
   input;
2. appends the packet's mono sum (L+R) and the TCN output to trailing
   64-frame windows (22400 samples each);
3. runs the UNet on the log1p mel spectrogram of the mixture window to
   get a fresh binary mel mask;
4. expands the mask to linear bins, applies it to the STFT frames of
   the TCN-output window that cover the newest complete TCN packet, and
   re-synthesizes exactly those 350 samples by weighted overlap-add.

The mixture window ends `lookahead` samples after the emitted packet
and the TCN window ends at the packet's right edge, so the mel mask
column for a given absolute STFT frame lands on the matching TCN frame
(the windows differ by exactly lookahead/hop = 2 columns).  End-to-end
delay is therefore exactly `lookahead`: the packet covering input
sample t is emitted once input has advanced past t + lookahead + W.

offline_oracle() recomputes the same quantities without any streaming
state (batch TCN pass, one-shot UNet per window placement, per-window
masked iSTFT) and must agree with the stream to float rounding.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dsp import (
    DEFAULT_HOP,
    DEFAULT_WIN,
    WaveBuffer,
    _hann_periodic,
    decimate_by_2,
    mel_bin_assignment,
    mel_filterbank,
    stft,
)
from .tcn import TcnConfig, TcnEngine, tcn_flop_count
from .unet import UNetConfig, UNetEngine, threshold_mask, unet_flop_count

PACKET_MS = 22.4  # 350 samples at 15.625 kHz


@dataclass(frozen=True)
class PipelineConfig:
    tcn: TcnConfig = field(default_factory=TcnConfig)
    unet: UNetConfig = field(default_factory=UNetConfig)
    sample_rate: float = 15625.0
    hop: int = DEFAULT_HOP
    win_len: int = DEFAULT_WIN

    def __post_init__(self) -> None:
        if self.hop != self.tcn.packet_len:
            raise ValueError("STFT hop must equal the TCN packet length")
        if self.tcn.lookahead % self.hop != 0:
            raise ValueError("lookahead must be a whole number of hops")

    @property
    def window_samples(self) -> int:
        return self.unet.input_frames * self.hop

    @property
    def lookahead_cols(self) -> int:
        return self.tcn.lookahead // self.hop

    @property
    def cover_frames(self) -> int:
        """STFT frames whose windows overlap one emitted packet."""
        return -(-self.win_len // self.hop)

    def tensor_specs(self) -> list[tuple[str, tuple[int, ...], int]]:
        return self.tcn.tensor_specs() + self.unet.tensor_specs()

    def to_dict(self) -> dict:
        return {
            "tcn": asdict(self.tcn),
            "unet": asdict(self.unet),
            "sample_rate": self.sample_rate,
            "hop": self.hop,
            "win_len": self.win_len,
        }

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        tcn_d = dict(d.get("tcn", {}))
        if "dilations" in tcn_d:
            tcn_d["dilations"] = tuple(tcn_d["dilations"])
        return PipelineConfig(
            tcn=TcnConfig(**tcn_d),
            unet=UNetConfig(**d.get("unet", {})),
            sample_rate=d.get("sample_rate", 15625.0),
            hop=d.get("hop", DEFAULT_HOP),
            win_len=d.get("win_len", DEFAULT_WIN),
        )


def _pad_slice(x: np.ndarray, start: int, end: int) -> np.ndarray:
    """x[start:end] with zeros where the range leaves the array."""
    out = np.zeros(end - start)
    lo, hi = max(start, 0), min(end, len(x))
    if hi > lo:
        out[lo - start : hi - start] = x[lo:hi]
    return out


class _Combiner:
    """Masked re-synthesis of one packet from a TCN-output window."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.fb = mel_filterbank(
            cfg.unet.input_mel, cfg.win_len, cfg.sample_rate
        )
        self.assign = mel_bin_assignment(self.fb)
        self.win = _hann_periodic(cfg.win_len)
        hop, cover = cfg.hop, cfg.cover_frames
        # den[i]: summed squared window over the frames covering sample
        # (T-1)*hop + i of the window; positive everywhere for hop < win.
        # The oldest covering frame reaches only win_len - (cover-1)*hop
        # samples into the emitted hop, hence the clipped adds.
        self.den = np.zeros(hop)
        for back in range(cover):
            seg = self.win[back * hop : back * hop + hop] ** 2
            self.den[: len(seg)] += seg

    def unet_input(self, mix_win: np.ndarray) -> np.ndarray:
        spec = stft(mix_win, self.cfg.hop, self.cfg.win_len)
        return np.log1p(self.fb.weights @ spec.magnitude())

    def combine(self, tcn_win: np.ndarray, mel_mask: np.ndarray) -> np.ndarray:
        """Emit the final hop samples of tcn_win under the given mask.

        mel_mask is the (n_mel, T) mask whose window ends lookahead_cols
        columns after tcn_win does; the matching columns are picked here.
        """
        cfg = self.cfg
        hop, wl = cfg.hop, cfg.win_len
        t_frames = cfg.unet.input_frames
        cover = cfg.cover_frames
        out = np.zeros(hop)
        for back in range(cover):
            f = t_frames - 1 - back  # frame index within the TCN window
            seg = _pad_slice(tcn_win, f * hop, f * hop + wl)
            spec = np.fft.rfft(seg * self.win)
            col = mel_mask[:, f - cfg.lookahead_cols]
            spec *= col[self.assign]
            syn = np.fft.irfft(spec, n=wl) * self.win
            part = syn[back * hop : back * hop + hop]
            out[: len(part)] += part
        return out / self.den


class CbNetStream:
    """Packetwise streaming state for the full enhancement network."""

    def __init__(self, bundle, config: PipelineConfig | None = None,
                 mask_override: str | None = None):
        self.cfg = config or PipelineConfig()
        if mask_override not in (None, "ones", "zeros"):
            raise ValueError("mask_override must be None, 'ones' or 'zeros'")
        self.mask_override = mask_override
        self.tcn_engine = TcnEngine(bundle, self.cfg.tcn)
        self.unet_engine = UNetEngine(bundle, self.cfg.unet)
        self.comb = _Combiner(self.cfg)
        self.tcn_state = self.tcn_engine.init_state()
        n = self.cfg.window_samples
        self.mix_win = np.zeros(n)
        self.tcn_win = np.zeros(n)
        self.packets_seen = 0

    def _mask(self) -> np.ndarray:
        shape = (self.cfg.unet.input_mel, self.cfg.unet.input_frames)
        if self.mask_override == "ones":
            return np.ones(shape)
        if self.mask_override == "zeros":
            return np.zeros(shape)
        probs = self.unet_engine.forward(self.comb.unet_input(self.mix_win))
        return threshold_mask(probs, self.cfg.unet.threshold)

    def push(self, packet: np.ndarray) -> np.ndarray:
        """Consume one stereo packet; emit one enhanced mono packet.

        The emitted samples cover the input packet `lookahead` samples
        back; the first lookahead/W pushes of a cold stream return the
        pre-stream silent past, forced to exact zeros.
        """
        packet = np.asarray(packet, dtype=np.float64)
        cfg = self.cfg
        w = cfg.tcn.packet_len
        if packet.shape != (cfg.tcn.in_channels, w):
            raise ValueError(f"expected ({cfg.tcn.in_channels}, {w}) packet")
        self.packets_seen += 1
        tcn_out = self.tcn_state.push_packet(packet)
        if self.packets_seen <= cfg.lookahead_cols:
            tcn_out = np.zeros(w)
        self.mix_win[:-w] = self.mix_win[w:]
        self.mix_win[-w:] = packet.sum(axis=0)
        self.tcn_win[:-w] = self.tcn_win[w:]
        self.tcn_win[-w:] = tcn_out
        return self.comb.combine(self.tcn_win, self._mask())


def cbnet_init(bundle, config: PipelineConfig | None = None) -> CbNetStream:
    return CbNetStream(bundle, config)


def cbnet_push(stream: CbNetStream, packet: np.ndarray) -> np.ndarray:
    return stream.push(packet)


def offline_oracle(x: np.ndarray, bundle,
                   config: PipelineConfig | None = None,
                   mask_override: str | None = None) -> np.ndarray:
    """Batch recomputation of the streamed output.

    x is (2, S) with S a multiple of the packet length.  Returns the
    S - lookahead samples a cold-started stream emits for x (i.e. the
    enhancement of x[..., :S-lookahead]); the TCN runs as one batch
    pass and the UNet runs once per window placement.
    """
    cfg = config or PipelineConfig()
    x = np.asarray(x, dtype=np.float64)
    w = cfg.tcn.packet_len
    if x.ndim != 2 or x.shape[0] != cfg.tcn.in_channels:
        raise ValueError(f"expected ({cfg.tcn.in_channels}, S) input")
    if x.shape[1] % w != 0:
        raise ValueError("input length must be a multiple of the packet length")
    n_pkts = x.shape[1] // w
    la_pkts = cfg.lookahead_cols
    if n_pkts <= la_pkts:
        return np.zeros(0)
    tcn_engine = TcnEngine(bundle, cfg.tcn)
    unet_engine = UNetEngine(bundle, cfg.unet)
    comb = _Combiner(cfg)
    tcn_stream = tcn_engine.forward_stream(x)  # samples [0, S - lookahead)
    mixsum = x.sum(axis=0)
    nwin = cfg.window_samples
    out = np.zeros((n_pkts - la_pkts) * w)
    for p in range(n_pkts - la_pkts):
        tcn_end = (p + 1) * w
        mix_end = (p + 1 + la_pkts) * w
        tcn_win = _pad_slice(tcn_stream, tcn_end - nwin, tcn_end)
        if mask_override == "ones":
            mask = np.ones((cfg.unet.input_mel, cfg.unet.input_frames))
        elif mask_override == "zeros":
            mask = np.zeros((cfg.unet.input_mel, cfg.unet.input_frames))
        else:
            mix_win = _pad_slice(mixsum, mix_end - nwin, mix_end)
            probs = unet_engine.forward(comb.unet_input(mix_win))
            mask = threshold_mask(probs, cfg.unet.threshold)
        out[p * w : (p + 1) * w] = comb.combine(tcn_win, mask)
    return out


def enhance_signal(x: np.ndarray, bundle,
                   config: PipelineConfig | None = None,
                   oracle: bool = False,
                   mask_override: str | None = None) -> np.ndarray:
    """Enhance a whole stereo signal; output aligned with the input.

    Pads x to whole packets, streams it (or runs the batch oracle),
    flushes the lookahead with silent packets, and returns exactly
    len(x) mono samples aligned sample-for-sample with the input.
    """
    cfg = config or PipelineConfig()
    x = np.asarray(x, dtype=np.float64)
    w = cfg.tcn.packet_len
    n = x.shape[1]
    pad_pkts = -(-n // w) + cfg.lookahead_cols
    padded = np.zeros((x.shape[0], pad_pkts * w))
    padded[:, :n] = x
    if oracle:
        out = offline_oracle(padded, bundle, cfg, mask_override=mask_override)
    else:
        stream = CbNetStream(bundle, cfg, mask_override=mask_override)
        chunks = []
        for p in range(pad_pkts):
            chunks.append(stream.push(padded[:, p * w : (p + 1) * w]))
        out = np.concatenate(chunks[cfg.lookahead_cols :])
    return out[:n]


def process_file(in_path, bundle, out_path,
                 config: PipelineConfig | None = None,
                 oracle: bool = False) -> WaveBuffer:
    """Enhance a stereo WAV end to end; returns (and writes) the result.

    Accepts the native 15625 Hz rate directly, or 31250 Hz input which
    is first decimated per channel.
    """
    from .wavio import read_wav, write_wav

    cfg = config or PipelineConfig()
    wave = read_wav(in_path)
    if wave.channels != 2:
        raise ValueError("enhancement input must be stereo")
    data = wave.data
    if round(wave.sample_rate) == round(2 * cfg.sample_rate):
        if data.shape[1] % 2:
            data = data[:, :-1]
        data = np.stack([decimate_by_2(ch) for ch in data])
    elif round(wave.sample_rate) != round(cfg.sample_rate):
        raise ValueError(
            f"expected {cfg.sample_rate:.0f} or {2 * cfg.sample_rate:.0f} Hz, "
            f"got {wave.sample_rate:.0f}"
        )
    out = enhance_signal(data, bundle, cfg, oracle=oracle)
    result = WaveBuffer(out[None, :], sample_rate=cfg.sample_rate)
    if out_path is not None:
        write_wav(out_path, result)
    return result


# -- latency accounting ----------------------------------------------------

@dataclass(frozen=True)
class LatencyBudget:
    """Per-stage one-way mouth-to-network latency, in milliseconds.

    Defaults: a 180-sample capture buffer at 31.25 kHz, the 15 ms
    minimum BLE connection interval, stream buffering on the host, and
    measured per-packet inference.
    """

    pcm_buffer_ms: float = 5.76
    ble_ms: float = 15.0
    stream_buffer_ms: float = 67.2
    inference_ms: float = 21.4
    budget_ms: float = 200.0


@dataclass(frozen=True)
class LatencyReport:
    total_ms: float
    allowance_ms: float
    total_ms_rounded: int
    allowance_ms_rounded: int
    over_budget: bool
    components: dict


def latency_total(budget: LatencyBudget | None = None) -> LatencyReport:
    b = budget or LatencyBudget()
    total = b.pcm_buffer_ms + b.ble_ms + b.stream_buffer_ms + b.inference_ms
    allowance = b.budget_ms - total
    return LatencyReport(
        total_ms=round(total, 1),
        allowance_ms=round(allowance, 1),
        total_ms_rounded=int(round(total)),
        allowance_ms_rounded=int(round(allowance)),
        over_budget=total > b.budget_ms,
        components=asdict(b),
    )


# -- per-packet wall-clock benchmark ----------------------------------------

@dataclass
class BenchReport:
    mode: str
    n_packets: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    packet_ms: float
    realtime: bool
    tcn_flops_cached: int
    tcn_flops_uncached: int
    unet_flops: int
    net_flops_per_packet: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class _UncachedRunner:
    """Per-packet full recompute (no activation reuse), for comparison."""

    def __init__(self, bundle, cfg: PipelineConfig):
        self.cfg = cfg
        self.tcn_engine = TcnEngine(bundle, cfg.tcn)
        self.unet_engine = UNetEngine(bundle, cfg.unet)
        self.comb = _Combiner(cfg)
        n = cfg.tcn.min_input_samples
        self.in_win = np.zeros((cfg.tcn.in_channels, n))
        self.mix_win = np.zeros(cfg.window_samples)
        self.tcn_win = np.zeros(cfg.window_samples)
        self.packets_seen = 0

    def push(self, packet: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        w = cfg.tcn.packet_len
        self.packets_seen += 1
        self.in_win[:, :-w] = self.in_win[:, w:]
        self.in_win[:, -w:] = packet
        tcn_out = self.tcn_engine.full_forward(self.in_win)
        if self.packets_seen <= cfg.lookahead_cols:
            tcn_out = np.zeros(w)
        self.mix_win[:-w] = self.mix_win[w:]
        self.mix_win[-w:] = packet.sum(axis=0)
        self.tcn_win[:-w] = self.tcn_win[w:]
        self.tcn_win[-w:] = tcn_out
        probs = self.unet_engine.forward(self.comb.unet_input(self.mix_win))
        return self.comb.combine(
            self.tcn_win, threshold_mask(probs, cfg.unet.threshold)
        )


def bench_packet(bundle, config: PipelineConfig | None = None,
                 n_packets: int = 100, cached: bool = True,
                 seed: int = 0, warmup: int = 3) -> BenchReport:
    """Wall-clock per-packet timing over synthetic random input."""
    cfg = config or PipelineConfig()
    rng = np.random.default_rng(seed)
    w = cfg.tcn.packet_len
    runner = (
        CbNetStream(bundle, cfg) if cached else _UncachedRunner(bundle, cfg)
    )
    packets = rng.standard_normal((n_packets + warmup, cfg.tcn.in_channels, w))
    packets *= 0.1
    times = []
    for i in range(n_packets + warmup):
        t0 = time.perf_counter()
        runner.push(packets[i])
        dt = (time.perf_counter() - t0) * 1e3
        if i >= warmup:
            times.append(dt)
    times_arr = np.asarray(times)
    packet_ms = 1e3 * w / cfg.sample_rate
    p95 = float(np.percentile(times_arr, 95))
    return BenchReport(
        mode="cached" if cached else "uncached",
        n_packets=n_packets,
        mean_ms=float(times_arr.mean()),
        median_ms=float(np.median(times_arr)),
        p95_ms=p95,
        packet_ms=packet_ms,
        realtime=bool(p95 < packet_ms),
        tcn_flops_cached=tcn_flop_count(cfg.tcn, cached=True),
        tcn_flops_uncached=tcn_flop_count(cfg.tcn, cached=False),
        unet_flops=unet_flop_count(cfg.unet),
        net_flops_per_packet=tcn_flop_count(cfg.tcn, cached=True)
        + unet_flop_count(cfg.unet),
    )
