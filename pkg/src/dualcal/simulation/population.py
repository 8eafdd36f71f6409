"""Synthetic dual-frame populations for the three overlap scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..data import FrameMeta

N_POP = 2350

# realized frame sizes (N_A, N_B, N_ab) per overlap scenario
SCENARIO_SIZES = {
    "small": (1309, 1251, 210),
    "large": (1746, 1790, 1186),
    "medium": (1790, 1164, 604),
}

# frame-A stratum sizes; each vector sums to its scenario's N_A
SCENARIO_STRATA = {
    "small": (535, 279, 78, 148, 101, 168),
    "large": (734, 377, 116, 187, 115, 217),
    "medium": (781, 375, 114, 186, 111, 223),
}

# binomial draw g ~ Bi(2, p) mapped to a domain, used in fresh-binomial mode
SCENARIO_BINOMIAL = {
    "small": (0.3, ("a", "b", "ab")),
    "large": (0.5, ("a", "ab", "b")),
    "medium": (0.5, ("b", "a", "ab")),
}

SAMPLE_SIZES_A = {"small": (15, 20, 15, 20, 15, 20), "large": (30, 40, 30, 40, 30, 40)}
SAMPLE_SIZES_B = {"small": 135, "large": 270}


@dataclass(frozen=True)
class ScenarioConfig:
    """Population and design settings of one simulation setting.

    ``sizes`` is ``"fixed"`` (domains hit the scenario's frame sizes exactly)
    or ``"binomial"`` (fresh binomial draws; stratum sizes are then rescaled
    to the realized ``N_A``).  Normal parameters are (mean, sd).
    """

    overlap: str = "small"
    N: int = N_POP
    y_mean: float = 5000.0
    y_sd: float = 500.0
    x_A_noise: tuple[float, float] = (500.0, 300.0)
    x_A_scale: float = 0.5
    x_B_noise: tuple[float, float] = (700.0, 500.0)
    x_B_shift: float = 1.0
    x_B_scale: float = 1.2
    z_noise: tuple[float, float] = (300.0, 200.0)
    strata: tuple[int, ...] = field(default=())
    n_A: tuple[int, ...] = SAMPLE_SIZES_A["small"]
    n_B: int = SAMPLE_SIZES_B["small"]
    sizes: str = "fixed"

    def __post_init__(self):
        if self.overlap not in SCENARIO_SIZES:
            raise ValueError(f"unknown overlap scenario {self.overlap!r}")
        if self.sizes not in ("fixed", "binomial"):
            raise ValueError("sizes must be 'fixed' or 'binomial'")
        if not self.strata:
            object.__setattr__(self, "strata", SCENARIO_STRATA[self.overlap])
        if len(self.n_A) != len(self.strata):
            raise ValueError("n_A and strata differ in length")
        if any(n > N for n, N in zip(self.n_A, self.strata)):
            raise ValueError("a stratum sample size exceeds its stratum size")
        if self.sizes == "fixed":
            N_A, N_B, N_ab = SCENARIO_SIZES[self.overlap]
            if N_A + N_B - N_ab != self.N:
                raise ValueError("fixed sizes need N = N_A + N_B - N_ab")
            if sum(self.strata) != N_A:
                raise ValueError(f"stratum sizes sum to {sum(self.strata)}, N_A is {N_A}")

    @classmethod
    def for_scenario(cls, overlap: str, na: str = "small", nb: str = "small", **kw):
        return cls(overlap=overlap, n_A=SAMPLE_SIZES_A[na], n_B=SAMPLE_SIZES_B[nb], **kw)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Population:
    """A finite population; ``domain`` is ``a``, ``ab`` or ``b`` and
    ``stratum`` is the frame-A stratum index (``-1`` outside frame A)."""

    y: np.ndarray
    x_A: np.ndarray
    x_B: np.ndarray
    z: np.ndarray
    domain: np.ndarray
    stratum: np.ndarray
    strata_sizes: tuple[int, ...]
    config: ScenarioConfig

    @property
    def N(self) -> int:
        return len(self.y)

    @property
    def in_A(self) -> np.ndarray:
        return self.domain != "b"

    @property
    def in_B(self) -> np.ndarray:
        return self.domain != "a"

    @property
    def N_A(self) -> int:
        return int(self.in_A.sum())

    @property
    def N_B(self) -> int:
        return int(self.in_B.sum())

    @property
    def N_ab(self) -> int:
        return int((self.domain == "ab").sum())

    @property
    def Y(self) -> float:
        return float(self.y.sum())

    def meta(self, with_N_ab: bool = True) -> FrameMeta:
        totals = {}
        for name in ("x_A", "x_B", "z"):
            values = getattr(self, name)
            totals[(name, "A")] = float(values[self.in_A].sum())
            totals[(name, "B")] = float(values[self.in_B].sum())
            totals[(name, "U")] = float(values.sum())
        return FrameMeta(N_A=self.N_A, N_B=self.N_B,
                         N_ab=self.N_ab if with_N_ab else None, numeric_totals=totals)


def _assign_domains(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    if config.sizes == "fixed":
        N_A, N_B, N_ab = SCENARIO_SIZES[config.overlap]
        labels = np.array(["a"] * (N_A - N_ab) + ["ab"] * N_ab + ["b"] * (N_B - N_ab))
        return labels[rng.permutation(config.N)]
    p, mapping = SCENARIO_BINOMIAL[config.overlap]
    g = rng.binomial(2, p, size=config.N)
    return np.array(mapping)[g]


def _rescale_strata(strata, total: int) -> tuple[int, ...]:
    """Largest-remainder rounding of ``strata`` scaled to sum to ``total``."""
    raw = np.asarray(strata, dtype=float) * total / sum(strata)
    out = np.floor(raw).astype(int)
    short = total - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:short]] += 1
    return tuple(int(v) for v in out)


def generate_population(config: ScenarioConfig, seed) -> Population:
    """Draw a population: domains, ``y``, the auxiliaries and frame-A strata.

    ``x_A = (y - e) / 0.5`` with ``e ~ N(500, 300)``,
    ``x_B = (y - 1 - e) / 1.2`` with ``e ~ N(700, 500)`` and
    ``z = y - N(300, 200)``, non-positive ``z`` redrawn.  Frame-A units are
    shuffled and cut into consecutive strata.
    """
    rng = np.random.default_rng(seed)
    domain = _assign_domains(config, rng)
    N = config.N
    y = rng.normal(config.y_mean, config.y_sd, N)
    x_A = (y - rng.normal(*config.x_A_noise, N)) / config.x_A_scale
    x_B = (y - config.x_B_shift - rng.normal(*config.x_B_noise, N)) / config.x_B_scale
    z = y - rng.normal(*config.z_noise, N)
    bad = z <= 0
    while bad.any():
        z[bad] = y[bad] - rng.normal(*config.z_noise, int(bad.sum()))
        bad = z <= 0

    in_A = np.flatnonzero(domain != "b")
    strata = config.strata
    if sum(strata) != len(in_A):
        if config.sizes == "fixed":
            raise ValueError("stratum sizes inconsistent with the realized N_A")
        strata = _rescale_strata(strata, len(in_A))
    if any(n > Nh for n, Nh in zip(config.n_A, strata)):
        raise ValueError("a stratum sample size exceeds its stratum size")
    stratum = np.full(N, -1)
    order = in_A[rng.permutation(len(in_A))]
    stratum[order] = np.repeat(np.arange(len(strata)), strata)
    return Population(y, x_A, x_B, z, domain, stratum, tuple(strata), config)
