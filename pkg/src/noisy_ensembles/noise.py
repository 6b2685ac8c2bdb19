"""Channel-noise covariance profiles, SNR conversion and correlated Gaussian draws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NoiseModel, as_cov
from .numerics import psd_sqrt

PROFILE_KINDS = ("equi_variance", "noisier_subset", "single_noisy", "none")


@dataclass(frozen=True)
class NoiseProfileSpec:
    kind: str = "equi_variance"
    snr: float = 1.0
    eps_y: float = 1.0
    m: int = 2
    a: float = 20.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown noise profile {self.kind!r}; expected one of {PROFILE_KINDS}")
        if self.kind == "none":
            return
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if not self.eps_y > 0:
            raise ValueError(f"eps_y must be positive, got {self.eps_y}")
        if self.kind == "noisier_subset" and self.m < 2:
            raise ValueError(f"noisier_subset needs m >= 2, got {self.m}")
        if self.kind in ("noisier_subset", "single_noisy") and not self.a > 1:
            raise ValueError(f"{self.kind} needs a > 1, got {self.a}")

    def with_snr_db(self, snr_db: float) -> "NoiseProfileSpec":
        return NoiseProfileSpec(self.kind, snr_from_db(snr_db), self.eps_y, self.m, self.a)


def snr_db(snr_linear: float) -> float:
    if not snr_linear > 0:
        raise ValueError(f"SNR must be positive, got {snr_linear}")
    return 10.0 * math.log10(snr_linear)


def snr_from_db(db: float) -> float:
    return 10.0 ** (db / 10.0)


def noisier_positions(T: int, m: int) -> np.ndarray:
    """Indices of the noisier channels: every m-th channel starting at index 1, floor(T/m) of them."""
    return np.arange(1, T, m)[: T // m]


def build_noise_profile(spec: NoiseProfileSpec, T: int) -> NoiseModel:
    """Diagonal covariance whose trace is T * eps_y / snr."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    meta = {"kind": spec.kind, "snr": spec.snr, "eps_y": spec.eps_y}
    if spec.kind == "none":
        return NoiseModel(np.zeros((T, T)), {"kind": "none"})
    budget = T * spec.eps_y / spec.snr
    if spec.kind == "equi_variance":
        diag = np.full(T, budget / T)
    elif spec.kind == "noisier_subset":
        mult = np.ones(T)
        mult[noisier_positions(T, spec.m)] = spec.a
        # for T divisible by m this is m*eps_y / ((a + m - 1) * snr)
        diag = mult * (budget / mult.sum())
        meta.update(m=spec.m, a=spec.a)
    else:  # single_noisy
        s1 = T * spec.eps_y / ((1.0 + (T - 1) / spec.a) * spec.snr)
        diag = np.full(T, s1 / spec.a)
        diag[0] = s1
        meta.update(a=spec.a)
    return NoiseModel(np.diag(diag), meta)


def parse_profile(text: str) -> NoiseProfileSpec:
    """Parse CLI strings such as ``noisier-subset:m=2,a=20`` or ``equi-variance``."""
    kind, _, params = text.strip().partition(":")
    kind = kind.strip().replace("-", "_")
    kwargs = {}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, sep, val = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in ("m", "a", "eps_y"):
            raise ValueError(f"bad noise-profile parameter {item!r} in {text!r}")
        kwargs[key] = int(val) if key == "m" else float(val)
    return NoiseProfileSpec(kind=kind, **kwargs)


def format_profile(spec: NoiseProfileSpec) -> str:
    name = spec.kind.replace("_", "-")
    if spec.kind == "noisier_subset":
        return f"{name}:m={spec.m},a={spec.a:g}"
    if spec.kind == "single_noisy":
        return f"{name}:a={spec.a:g}"
    return name


def sample_noise(model, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw n ~ N(0, Sigma) as L z with L L^T = Sigma.

    ``size`` prepends leading dimensions, e.g. ``size=(R, N)`` gives an
    (R, N, T) array.
    """
    L = psd_sqrt(as_cov(model))
    T = L.shape[0]
    shape = (T,) if size is None else tuple(np.atleast_1d(size)) + (T,)
    z = rng.standard_normal(shape)
    return z @ L.T
