"""Full-reference quality metrics (MSE, RMSE, PSNR, SSIM) and aggregation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from restorekit.image import as_image


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class SsimParams:
    """SSIM exponents and stabilizers.

    The defaults ``C1 = (0.01 L)^2``, ``C2 = (0.03 L)^2`` and ``C3 = C2 / 2``
    with ``alpha = beta = gamma = 1`` reduce the index to the usual two-term
    SSIM.  ``window=None`` computes statistics over the whole image (all
    channels pooled); an integer gives a sliding square window per channel.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2
    c3: float = 0.03 ** 2 / 2
    window: int | None = None

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise MetricError("SSIM exponents must be positive")
        if min(self.c1, self.c2, self.c3) < 0:
            raise MetricError("SSIM stabilizers must be nonnegative")
        if self.window is not None and self.window < 1:
            raise MetricError("SSIM window must be >= 1")

    @classmethod
    def for_peak(cls, peak: float, **kw) -> "SsimParams":
        c2 = (0.03 * peak) ** 2
        return cls(c1=(0.01 * peak) ** 2, c2=c2, c3=c2 / 2, **kw)


@dataclass
class MetricReport:
    mse: float
    rmse: float
    psnr: float
    ssim: float
    elapsed: float = 0.0

    def to_json(self) -> dict:
        """Fixed-name JSON object; an infinite PSNR is written as ``"inf"``."""
        return {
            "mse": self.mse,
            "rmse": self.rmse,
            "psnr_db": "inf" if math.isinf(self.psnr) else self.psnr,
            "ssim": self.ssim,
            "elapsed_s": self.elapsed,
        }


@dataclass(frozen=True)
class AggregateRow:
    label: str
    metric: str
    min: float
    max: float
    mean: float

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(reference, processed):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(processed, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise MetricError("empty images")
    return a, b


def mse(reference, processed) -> float:
    a, b = _pair(reference, processed)
    d = b - a
    return float(np.mean(d * d))


def rmse(reference, processed) -> float:
    return math.sqrt(mse(reference, processed))


def psnr_from_mse(value: float, peak: float = 1.0) -> float:
    if peak <= 0:
        raise MetricError("peak must be positive")
    if value == 0:
        return math.inf
    return 20.0 * math.log10(peak / math.sqrt(value))


def psnr(reference, processed, peak: float | None = 1.0) -> float:
    """PSNR in dB.  ``peak=None`` uses the reference image's own maximum."""
    if peak is None:
        peak = float(np.max(reference))
    return psnr_from_mse(mse(reference, processed), peak)


def _components_from_stats(mu_a, mu_b, var_a, var_b, cov, p: SsimParams):
    # sqrt(var_a * var_b) rather than sqrt(var_a) * sqrt(var_b): for identical
    # inputs this is exactly var_a, which keeps ssim(a, a) == 1 bit-exactly.
    sig_ab = np.sqrt(var_a * var_b)
    lum = (2 * mu_a * mu_b + p.c1) / (mu_a * mu_a + mu_b * mu_b + p.c1)
    con = (2 * sig_ab + p.c2) / (var_a + var_b + p.c2)
    st = (cov + p.c3) / (sig_ab + p.c3)
    return lum, con, st


def _box_mean(x: np.ndarray, k: int) -> np.ndarray:
    """Mean over every ``k``x``k`` window fully inside each channel (valid mode)."""
    c = np.cumsum(np.cumsum(x, axis=-2), axis=-1)
    c = np.pad(c, ((0, 0), (1, 0), (1, 0)))
    s = c[:, k:, k:] - c[:, :-k, k:] - c[:, k:, :-k] + c[:, :-k, :-k]
    return s / (k * k)


def _windowed_stats(a, b, k):
    if k > min(a.shape[-2:]):
        raise MetricError(f"SSIM window {k} larger than image {a.shape[-2:]}")
    mu_a, mu_b = _box_mean(a, k), _box_mean(b, k)
    var_a = np.maximum(_box_mean(a * a, k) - mu_a * mu_a, 0.0)
    var_b = np.maximum(_box_mean(b * b, k) - mu_b * mu_b, 0.0)
    cov = _box_mean(a * b, k) - mu_a * mu_b
    return mu_a, mu_b, var_a, var_b, cov


def ssim_components(reference, processed, params: SsimParams = SsimParams()):
    """Luminance, contrast and structure terms ``(l, c, s)``."""
    a, b = _pair(reference, processed)
    if params.window is None:
        mu_a, mu_b = a.mean(), b.mean()
        da, db = a - mu_a, b - mu_b
        lum, con, st = _components_from_stats(
            mu_a, mu_b, np.mean(da * da), np.mean(db * db), np.mean(da * db), params)
        return float(lum), float(con), float(st)
    a3, b3 = a.reshape((-1,) + a.shape[-2:]), b.reshape((-1,) + b.shape[-2:])
    lum, con, st = _components_from_stats(*_windowed_stats(a3, b3, params.window), params)
    return float(lum.mean()), float(con.mean()), float(st.mean())


def ssim(reference, processed, params: SsimParams = SsimParams()) -> float:
    a, b = _pair(reference, processed)
    if params.window is None:
        lum, con, st = ssim_components(a, b, params)
        return float(lum ** params.alpha * con ** params.beta * st ** params.gamma)
    a3, b3 = a.reshape((-1,) + a.shape[-2:]), b.reshape((-1,) + b.shape[-2:])
    lum, con, st = _components_from_stats(*_windowed_stats(a3, b3, params.window), params)
    return float(np.mean(lum ** params.alpha * con ** params.beta * st ** params.gamma))


def compare(reference, processed, peak: float | None = 1.0, params: SsimParams | None = None,
            scale: float = 1.0, elapsed: float = 0.0) -> MetricReport:
    """All four metrics at once.

    ``scale=255`` evaluates on the 0-255 intensity scale (peak and SSIM
    stabilizers follow the scale).
    """
    a = as_image(reference) * scale
    b = as_image(processed) * scale
    if peak is not None:
        peak = peak * scale
    if params is None:
        params = SsimParams.for_peak(scale)
    m = mse(a, b)
    return MetricReport(m, math.sqrt(m), psnr(a, b, peak), ssim(a, b, params), elapsed)


def aggregate(values, label: str = "", metric: str = "") -> AggregateRow:
    vals = [float(v) for v in values]
    if not vals:
        raise MetricError(f"cannot aggregate an empty list ({label} {metric})".strip())
    return AggregateRow(label, metric, min(vals), max(vals), math.fsum(vals) / len(vals))
