"""How scene geometry shows up in the signal: delays, reverb, and oracle scores.

Three short experiments on the synthetic binaural generator:
  a) interaural delay of an off-axis interferer vs a centered target,
  b) what reverberation does to the ideal-ratio-mask ceiling,
  c) how interferer angle moves that ceiling.

Each point is a handful of seeded mixtures, so the whole script runs in
well under a minute and the numbers are reproducible.

Run:  python3 demos/scene_geometry.py
"""

import numpy as np
from scipy.signal import fftconvolve

from clearstream.dsp import stft
from clearstream.metrics import oracle_mask, si_sdr
from clearstream.mixgen import RoomSpec, make_mixture


def lag(stereo: np.ndarray) -> int:
    corr = fftconvolve(stereo[0], stereo[1][::-1])
    return int(np.argmax(corr)) - (stereo.shape[1] - 1)


def irm_gain(bundle) -> float:
    mix = bundle.mixture.data[0]
    ref = bundle.stems["target"].data[0]
    others = [
        stft(s.data[0]) for k, s in bundle.stems.items() if k != "target"
    ]
    _, est = oracle_mask("irm", stft(ref), others, out_len=len(mix))
    return si_sdr(ref, est) - si_sdr(ref, mix)


def main() -> int:
    anechoic = RoomSpec((14.0, 14.0, 14.0), rt60=0.0)

    print("a. interaural delay vs interferer angle (0.175 m mic spacing)")
    for deg in (0.0, 30.0, 60.0, 90.0):
        b = make_mixture(1, 1.0, room=anechoic, interferer_azimuth_deg=deg,
                         interferer_distance=2.0, target_si_sdr_db=0.0)
        print(f"   {deg:5.0f} deg: target lag {lag(b.stems['target'].data):+d}, "
              f"interferer lag {lag(b.stems['interferer'].data):+d} samples")
    print("   the target stays centered; the interferer walks off axis")

    print("b. reverberation vs the ideal-mask ceiling (3 seeds per point)")
    for rt60 in (0.0, 0.2, 0.4, 0.6):
        gains = [
            irm_gain(make_mixture(10 + s, 2.0, rt60=rt60, target_si_sdr_db=0.0))
            for s in range(3)
        ]
        bar = "#" * int(round(2 * float(np.mean(gains))))
        print(f"   rt60 {rt60:.1f} s: IRM SI-SDRi {np.mean(gains):5.2f} dB  {bar}")
    print("   the oracle is scored against the reverberant target, so its")
    print("   ceiling barely moves; reverb hurts trained systems, not masks")

    print("c. interferer angle vs the ideal-mask ceiling (3 seeds per point)")
    for deg in (0.0, 45.0, 90.0, 135.0, 180.0):
        gains = [
            irm_gain(make_mixture(20 + s, 2.0, rt60=0.3,
                                  interferer_azimuth_deg=deg,
                                  target_si_sdr_db=0.0))
            for s in range(3)
        ]
        print(f"   {deg:5.0f} deg: IRM SI-SDRi {np.mean(gains):5.2f} dB")
    print("   mirror angles score identically (0/180, 45/135): the mask only")
    print("   sees time-frequency overlap, so geometry enters through the")
    print("   room response, not through spatial separation itself")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
