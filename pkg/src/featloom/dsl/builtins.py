"""The closed builtin catalog: statistical, spectral, and vector helpers.

Every entry is total over finite inputs. Numeric pathologies surface as NaN
(or an empty vector for the vector helpers) and are handled by execution
verification, never by raising.

Conventions fixed here:
  * moments are population moments (ddof=0), defined for length-1 vectors;
  * spectral features use the plain DFT's one-sided magnitude spectrum with
    no windowing or detrending, and ignore the DC bin;
  * peak/quantile frequency ties resolve to the lowest frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ast import SCALAR, VECTOR

NAN = float("nan")


def _as_float(x) -> float:
    return float(x)


def _moments(x: np.ndarray):
    mu = float(np.mean(x))
    d = x - mu
    m2 = float(np.mean(d * d))
    m3 = float(np.mean(d * d * d))
    m4 = float(np.mean(d * d * d * d))
    return mu, m2, m3, m4


def bi_mean(x):
    return NAN if x.size == 0 else float(np.mean(x))


def bi_var(x):
    if x.size == 0:
        return NAN
    return _moments(x)[1]


def bi_std(x):
    v = bi_var(x)
    return math.sqrt(v) if v == v else NAN


def bi_min(x):
    return NAN if x.size == 0 else float(np.min(x))


def bi_max(x):
    return NAN if x.size == 0 else float(np.max(x))


def bi_range(x):
    return NAN if x.size == 0 else float(np.max(x) - np.min(x))


def bi_quantile(x, q):
    q = _as_float(q)
    if x.size == 0 or q != q or q < 0.0 or q > 1.0:
        return NAN
    return float(np.quantile(x, q, method="linear"))


def bi_median(x):
    return bi_quantile(x, 0.5)


def bi_skewness(x):
    if x.size == 0:
        return NAN
    _, m2, m3, _ = _moments(x)
    if m2 == 0.0:
        return 0.0
    return m3 / m2**1.5


def bi_kurtosis(x):
    # Population excess kurtosis: m4 / m2^2 - 3, zero for degenerate series.
    if x.size == 0:
        return NAN
    _, m2, _, m4 = _moments(x)
    if m2 == 0.0:
        return 0.0
    return m4 / (m2 * m2) - 3.0


def bi_rms(x):
    return NAN if x.size == 0 else math.sqrt(float(np.mean(x * x)))


def bi_energy(x):
    return NAN if x.size == 0 else float(np.sum(x * x))


def bi_zero_crossings(x):
    # Strict sign changes between adjacent samples; zeros break a run.
    if x.size < 2:
        return 0.0
    return float(np.sum(x[:-1] * x[1:] < 0.0))


def bi_mean_abs_diff(x):
    if x.size < 2:
        return NAN
    return float(np.mean(np.abs(np.diff(x))))


def bi_line_length(x):
    return float(np.sum(np.abs(np.diff(x))))


def bi_autocorr(x, lag):
    lag = _as_float(lag)
    if lag != lag:
        return NAN
    k = int(round(lag))
    n = x.size
    if k < 1 or k >= n:
        return 0.0
    a, b = x[:-k], x[k:]
    sa, sb = float(np.std(a)), float(np.std(b))
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.mean((a - np.mean(a)) * (b - np.mean(b))) / (sa * sb))


def bi_n_peaks(x):
    if x.size < 3:
        return 0.0
    interior = x[1:-1]
    return float(np.sum((interior > x[:-2]) & (interior > x[2:])))


def bi_diff(x):
    return np.diff(x)


def bi_abs(x):
    return np.abs(x)


def bi_normalize(x):
    if x.size == 0:
        return x.copy()
    s = float(np.std(x))
    if s == 0.0:
        return np.zeros_like(x)
    return (x - float(np.mean(x))) / s


def _spectrum(x, fs):
    """Non-DC one-sided magnitude spectrum: (freqs[1:], mags[1:]) or None."""
    fs = _as_float(fs)
    if fs != fs or fs <= 0.0 or x.size < 4:
        return None
    mags = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, d=1.0 / fs)
    return freqs[1:], mags[1:]


def bi_spectral_centroid(x, fs):
    spec = _spectrum(x, fs)
    if spec is None:
        return NAN
    freqs, mags = spec
    total = float(np.sum(mags))
    if total == 0.0:
        return NAN
    return float(np.sum(freqs * mags) / total)


def bi_spectral_spread(x, fs):
    spec = _spectrum(x, fs)
    if spec is None:
        return NAN
    freqs, mags = spec
    total = float(np.sum(mags))
    if total == 0.0:
        return NAN
    centroid = float(np.sum(freqs * mags) / total)
    return math.sqrt(float(np.sum((freqs - centroid) ** 2 * mags) / total))


def bi_peak_frequency(x, fs):
    spec = _spectrum(x, fs)
    if spec is None:
        return NAN
    freqs, mags = spec
    # argmax takes the first maximum, i.e. the lowest frequency on ties
    return float(freqs[int(np.argmax(mags))])


def bi_band_power(x, fs, lo, hi):
    lo, hi = _as_float(lo), _as_float(hi)
    if lo != lo or hi != hi or lo >= hi:
        return NAN
    spec = _spectrum(x, fs)
    if spec is None:
        return NAN
    freqs, mags = spec
    mask = (freqs >= lo) & (freqs < hi)
    return float(np.sum(mags[mask] ** 2))


def bi_spectral_entropy(x, fs):
    spec = _spectrum(x, fs)
    if spec is None:
        return NAN
    _, mags = spec
    power = mags * mags
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    p = power / total
    p = p[p > 0.0]
    return float(-np.sum(p * np.log(p)))


def bi_mean_frequency(x, fs):
    # Power-weighted mean frequency, the spectral counterpart of the mean.
    spec = _spectrum(x, fs)
    if spec is None:
        return NAN
    freqs, mags = spec
    power = mags * mags
    total = float(np.sum(power))
    if total == 0.0:
        return NAN
    return float(np.sum(freqs * power) / total)


def bi_spectral_quantile(x, fs, q):
    q = _as_float(q)
    if q != q or q < 0.0 or q > 1.0:
        return NAN
    spec = _spectrum(x, fs)
    if spec is None:
        return NAN
    freqs, mags = spec
    power = mags * mags
    total = float(np.sum(power))
    if total == 0.0:
        return NAN
    cum = np.cumsum(power)
    idx = int(np.searchsorted(cum, q * total))
    idx = min(idx, freqs.size - 1)
    return float(freqs[idx])


def _check_unit_range(pos: int, label: str):
    def check(literals):
        v = literals[pos]
        if v is not None and not (0.0 <= v <= 1.0):
            return f"{label} must be in [0, 1], got {v!r}"
        return None

    return check


def _check_band(literals):
    lo, hi = literals[2], literals[3]
    if lo is not None and hi is not None and lo >= hi:
        return f"band bounds must satisfy lo < hi, got lo={lo!r} hi={hi!r}"
    return None


@dataclass(frozen=True)
class BuiltinSpec:
    name: str
    param_kinds: tuple[str, ...]
    return_kind: str
    func: Callable
    literal_check: Callable | None = None


_V = VECTOR
_S = SCALAR

CATALOG: dict[str, BuiltinSpec] = {
    spec.name: spec
    for spec in [
        BuiltinSpec("mean", (_V,), _S, bi_mean),
        BuiltinSpec("std", (_V,), _S, bi_std),
        BuiltinSpec("var", (_V,), _S, bi_var),
        BuiltinSpec("min", (_V,), _S, bi_min),
        BuiltinSpec("max", (_V,), _S, bi_max),
        BuiltinSpec("range", (_V,), _S, bi_range),
        BuiltinSpec("median", (_V,), _S, bi_median),
        BuiltinSpec("quantile", (_V, _S), _S, bi_quantile, _check_unit_range(1, "quantile q")),
        BuiltinSpec("skewness", (_V,), _S, bi_skewness),
        BuiltinSpec("kurtosis", (_V,), _S, bi_kurtosis),
        BuiltinSpec("rms", (_V,), _S, bi_rms),
        BuiltinSpec("energy", (_V,), _S, bi_energy),
        BuiltinSpec("zero_crossings", (_V,), _S, bi_zero_crossings),
        BuiltinSpec("mean_abs_diff", (_V,), _S, bi_mean_abs_diff),
        BuiltinSpec("line_length", (_V,), _S, bi_line_length),
        BuiltinSpec("autocorr", (_V, _S), _S, bi_autocorr),
        BuiltinSpec("n_peaks", (_V,), _S, bi_n_peaks),
        BuiltinSpec("diff", (_V,), _V, bi_diff),
        BuiltinSpec("abs", (_V,), _V, bi_abs),
        BuiltinSpec("normalize", (_V,), _V, bi_normalize),
        BuiltinSpec("spectral_centroid", (_V, _S), _S, bi_spectral_centroid),
        BuiltinSpec("spectral_spread", (_V, _S), _S, bi_spectral_spread),
        BuiltinSpec("peak_frequency", (_V, _S), _S, bi_peak_frequency),
        BuiltinSpec("band_power", (_V, _S, _S, _S), _S, bi_band_power, _check_band),
        BuiltinSpec("spectral_entropy", (_V, _S), _S, bi_spectral_entropy),
        BuiltinSpec("mean_frequency", (_V, _S), _S, bi_mean_frequency),
        BuiltinSpec("spectral_quantile", (_V, _S, _S), _S, bi_spectral_quantile, _check_unit_range(2, "quantile q")),
    ]
}


def catalog_help() -> str:
    """Human-readable signature list, embedded in translation prompts."""
    lines = []
    for spec in CATALOG.values():
        params = ", ".join(spec.param_kinds)
        lines.append(f"{spec.name}({params}) -> {spec.return_kind}")
    return "\n".join(lines)
