"""Spectral mask refiner: a small UNet over a mel spectrogram window.

Input is a (n_mel, n_frames) = (128, 64) log-compressed mel magnitude
window of the mono (L+R) mixture.  Four levels of depthwise-separable
3x3 convs (zero-padded, ReLU) each followed by 2x2 max pooling descend
to an (8, 4) grid; four up levels (ds-conv + 2x2 stride-2 transposed
conv, both ReLU) come back up, concatenating the matching-resolution
encoder activation before each ds-conv.  Channels start at
base_channels and double per level on the way down.  A final 1x1 conv and sigmoid yield
per-cell probabilities; thresholding at 0.5 (>= passes) gives the
binary time-frequency mask.

Everything is a pure function of (weights, input): no state is kept
between forwards, so recomputing a sliding window per packet gives the
same columns a one-shot evaluation would.

Internally the engine computes in single precision with activations
laid out channels-last, and each stage owns its pad / accumulator
scratch.  That keeps one forward inside a realtime packet budget on a
single core; inputs and the returned probability map stay float64.  A
given engine instance must not run concurrent forwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class UNetConfig:
    input_mel: int = 128
    input_frames: int = 64
    base_channels: int = 16
    levels: int = 4
    threshold: float = 0.5

    def __post_init__(self) -> None:
        div = 1 << self.levels
        if self.input_mel % div or self.input_frames % div:
            raise ValueError(
                f"input dims must be divisible by 2^levels = {div}"
            )
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")

    # Channel plan.  Down level i maps down_in[i] -> down_out[i] and
    # pools; up level i ds-convs up_in[i] -> up_mid[i], then a 2x2
    # transposed conv maps up_mid[i] -> tc_out[i] at doubled resolution
    # and the matching encoder activation (skip_ch[i] channels) is
    # concatenated onto the result.

    @property
    def down_out(self) -> list[int]:
        return [self.base_channels << i for i in range(self.levels)]

    @property
    def down_in(self) -> list[int]:
        return [1] + self.down_out[:-1]

    @property
    def skip_ch(self) -> list[int]:
        return self.down_out[::-1]

    @property
    def up_mid(self) -> list[int]:
        return self.down_out[::-1]

    @property
    def tc_out(self) -> list[int]:
        outs = [c // 2 for c in self.up_mid]
        outs[-1] = self.up_mid[-1]
        return outs

    @property
    def up_in(self) -> list[int]:
        ins = [self.down_out[-1]]
        for i in range(1, self.levels):
            ins.append(self.tc_out[i - 1] + self.skip_ch[i - 1])
        return ins

    @property
    def final_ch(self) -> int:
        return self.tc_out[-1] + self.skip_ch[-1]

    def tensor_specs(self) -> list[tuple[str, tuple[int, ...], int]]:
        specs: list[tuple[str, tuple[int, ...], int]] = []
        for i in range(self.levels):
            cin, cout = self.down_in[i], self.down_out[i]
            specs.append((f"unet.down{i}.dw.w", (cin, 3, 3), 9))
            specs.append((f"unet.down{i}.pw.w", (cout, cin), cin))
            specs.append((f"unet.down{i}.pw.b", (cout,), cin))
        for i in range(self.levels):
            cin, cmid, cout = self.up_in[i], self.up_mid[i], self.tc_out[i]
            specs.append((f"unet.up{i}.dw.w", (cin, 3, 3), 9))
            specs.append((f"unet.up{i}.pw.w", (cmid, cin), cin))
            specs.append((f"unet.up{i}.pw.b", (cmid,), cin))
            specs.append((f"unet.up{i}.tc.w", (cmid, cout, 2, 2), 4 * cmid))
            specs.append((f"unet.up{i}.tc.b", (cout,), 4 * cmid))
        specs.append(("unet.out.w", (1, self.final_ch), self.final_ch))
        specs.append(("unet.out.b", (1,), self.final_ch))
        return specs


@dataclass
class UNetTally:
    """Multiply-accumulates actually performed, by stage kind."""

    dw: int = 0
    pw: int = 0
    tc: int = 0

    def total(self) -> int:
        return self.dw + self.pw + self.tc

    def reset(self) -> None:
        self.dw = self.pw = self.tc = 0


def _pool2(x: np.ndarray) -> np.ndarray:
    """2x2 max pool on (H, W, C), pairwise along each spatial axis."""
    a = np.maximum(x[0::2], x[1::2])
    return np.maximum(a[:, 0::2], a[:, 1::2])


class _DsConv:
    """Depthwise 3x3 + pointwise 1x1 + ReLU at one fixed resolution.

    Tap weights are repacked (3, 3, C) so each of the nine shifted
    multiplies broadcasts along the contiguous channel axis; the zero
    border of the pad buffer is written once at construction.
    """

    def __init__(self, dw_w, pw_w, pw_b, h: int, w: int):
        self.cout, self.cin = pw_w.shape
        self.h, self.w = h, w
        self.taps = np.ascontiguousarray(
            np.transpose(dw_w, (1, 2, 0)), dtype=np.float32
        )
        self.pw_wt = np.ascontiguousarray(pw_w.T, dtype=np.float32)
        self.pw_b = np.asarray(pw_b, dtype=np.float32)
        self.pad = np.zeros((h + 2, w + 2, self.cin), dtype=np.float32)
        self.acc = np.empty((h, w, self.cin), dtype=np.float32)
        self.tmp = np.empty_like(self.acc)

    def run(self, x: np.ndarray) -> np.ndarray:
        h, w = self.h, self.w
        pad, acc, tmp, taps = self.pad, self.acc, self.tmp, self.taps
        pad[1:-1, 1:-1] = x
        np.multiply(pad[0:h, 0:w], taps[0, 0], out=acc)
        for dy in range(3):
            for dx in range(3):
                if dy == 0 and dx == 0:
                    continue
                np.multiply(pad[dy : dy + h, dx : dx + w], taps[dy, dx], out=tmp)
                acc += tmp
        z = acc.reshape(-1, self.cin) @ self.pw_wt
        z += self.pw_b
        np.maximum(z, 0.0, out=z)
        return z.reshape(h, w, self.cout)


class _TConv:
    """2x2 stride-2 transposed conv + ReLU: one GEMM, then a scatter of
    the four phase grids into the doubled-resolution output."""

    def __init__(self, tc_w, tc_b, h: int, w: int):
        cmid, cout = tc_w.shape[0], tc_w.shape[1]
        self.cmid, self.cout = cmid, cout
        self.h, self.w = h, w
        self.wt = np.ascontiguousarray(
            np.transpose(tc_w, (0, 2, 3, 1)).reshape(cmid, 4 * cout),
            dtype=np.float32,
        )
        self.b = np.asarray(tc_b, dtype=np.float32)
        self.out = np.empty((2 * h, 2 * w, cout), dtype=np.float32)

    def run(self, x: np.ndarray) -> np.ndarray:
        h, w, cout = self.h, self.w, self.cout
        piece = (x.reshape(-1, self.cmid) @ self.wt).reshape(h, w, 2, 2, cout)
        out = self.out
        out[0::2, 0::2] = piece[:, :, 0, 0]
        out[0::2, 1::2] = piece[:, :, 0, 1]
        out[1::2, 0::2] = piece[:, :, 1, 0]
        out[1::2, 1::2] = piece[:, :, 1, 1]
        out += self.b
        np.maximum(out, 0.0, out=out)
        return out


class UNetEngine:
    """Weight-bound mask network over fixed-size mel windows."""

    def __init__(self, bundle, config: UNetConfig | None = None):
        self.cfg = config or UNetConfig()
        cfg = self.cfg
        bundle.validate_specs(cfg.tensor_specs())
        t = bundle.tensor
        self.down = [
            _DsConv(
                t(f"unet.down{i}.dw.w"),
                t(f"unet.down{i}.pw.w"),
                t(f"unet.down{i}.pw.b"),
                cfg.input_mel >> i,
                cfg.input_frames >> i,
            )
            for i in range(cfg.levels)
        ]
        self.up = []
        self.cat_bufs = []
        for i in range(cfg.levels):
            h = cfg.input_mel >> (cfg.levels - i)
            w = cfg.input_frames >> (cfg.levels - i)
            self.up.append(
                (
                    _DsConv(
                        t(f"unet.up{i}.dw.w"),
                        t(f"unet.up{i}.pw.w"),
                        t(f"unet.up{i}.pw.b"),
                        h,
                        w,
                    ),
                    _TConv(t(f"unet.up{i}.tc.w"), t(f"unet.up{i}.tc.b"), h, w),
                )
            )
            self.cat_bufs.append(
                np.empty(
                    (2 * h, 2 * w, cfg.tc_out[i] + cfg.skip_ch[i]),
                    dtype=np.float32,
                )
            )
        self.out_wt = np.ascontiguousarray(
            np.asarray(t("unet.out.w"), dtype=np.float32).T
        )
        self.out_b = np.asarray(t("unet.out.b"), dtype=np.float32)
        self.tally = UNetTally()

    def forward(self, mel_input: np.ndarray) -> np.ndarray:
        """Mel window (input_mel, input_frames) -> probability map, same
        shape, each value sigmoid-activated in (0, 1)."""
        cfg = self.cfg
        mel_input = np.asarray(mel_input, dtype=np.float64)
        if mel_input.shape != (cfg.input_mel, cfg.input_frames):
            raise ValueError(
                f"expected ({cfg.input_mel}, {cfg.input_frames}) input"
            )
        if not np.all(np.isfinite(mel_input)):
            raise ValueError("mel input must be finite")
        x = mel_input.astype(np.float32)[:, :, None]
        skips = []
        for ds in self.down:
            px = x.shape[0] * x.shape[1]
            self.tally.dw += ds.cin * 9 * px
            self.tally.pw += ds.cout * ds.cin * px
            x = ds.run(x)
            skips.append(x)
            x = _pool2(x)
        for i, (ds, tc) in enumerate(self.up):
            px = x.shape[0] * x.shape[1]
            self.tally.dw += ds.cin * 9 * px
            self.tally.pw += ds.cout * ds.cin * px
            self.tally.tc += tc.cmid * tc.cout * 4 * px
            x = tc.run(ds.run(x))
            cat = self.cat_bufs[i]
            cat[:, :, : x.shape[2]] = x
            cat[:, :, x.shape[2] :] = skips[cfg.levels - 1 - i]
            x = cat
        px = x.shape[0] * x.shape[1]
        self.tally.pw += self.out_wt.size * px
        logits = x.reshape(-1, cfg.final_ch) @ self.out_wt
        logits += self.out_b
        probs = expit(logits.reshape(cfg.input_mel, cfg.input_frames))
        return probs.astype(np.float64)

    def flop_count(self) -> int:
        return unet_flop_count(self.cfg)


def unet_forward(mel_input: np.ndarray, bundle, config: UNetConfig | None = None):
    return UNetEngine(bundle, config).forward(mel_input)


def threshold_mask(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Probabilities to binary mask; values >= threshold pass."""
    probs = np.asarray(probs)
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return (probs >= threshold).astype(np.float64)


def ibm_training_target(target_spec, interferer_specs) -> np.ndarray:
    """Binary mask that is 1 where the target dominates every interferer.

    Accepts mel spectrograms (anything with a .values array) or plain
    magnitude arrays, all of one shape.  With no interferers dominance
    holds vacuously and the mask is all ones.
    """
    def mag(s):
        return np.asarray(getattr(s, "data", s), dtype=np.float64)

    target = mag(target_spec)
    mask = np.ones(target.shape, dtype=np.float64)
    for spec in interferer_specs:
        other = mag(spec)
        if other.shape != target.shape:
            raise ValueError(
                f"shape mismatch: {other.shape} vs {target.shape}"
            )
        mask *= (target >= other).astype(np.float64)
    return mask


def unet_flop_count(config: UNetConfig | None = None) -> int:
    """Analytic FLOPs for one full forward pass.

    Convs (depthwise, pointwise, transposed) count 2 FLOPs per MAC;
    pooling, concatenation, and activations are not counted.
    """
    cfg = config or UNetConfig()
    h, w = cfg.input_mel, cfg.input_frames
    macs = 0
    for i in range(cfg.levels):
        px = (h >> i) * (w >> i)
        macs += cfg.down_in[i] * 9 * px
        macs += cfg.down_in[i] * cfg.down_out[i] * px
    for i in range(cfg.levels):
        shift = cfg.levels - i
        px = (h >> shift) * (w >> shift)
        macs += cfg.up_in[i] * 9 * px
        macs += cfg.up_in[i] * cfg.up_mid[i] * px
        macs += cfg.up_mid[i] * cfg.tc_out[i] * 4 * px
    macs += cfg.final_ch * h * w
    return 2 * macs
