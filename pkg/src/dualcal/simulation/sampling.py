"""Frame sampling designs: stratified SRSWOR and Midzuno sampling."""

from __future__ import annotations

import numpy as np

from ..data import DualFrameSample
from ..variance import FrameDesign
from .population import Population


class DesignError(ValueError):
    pass


def draw_stratified_srswor(strata: np.ndarray, n_h, rng: np.random.Generator):
    """Stratified simple random sampling without replacement.

    Parameters
    ----------
    strata : ndarray of int
        Stratum index ``0..H-1`` per frame unit.
    n_h : sequence of int
        Sample size per stratum.

    Returns
    -------
    index : ndarray of int
        Selected positions, grouped by stratum.
    pi : ndarray of float
        Inclusion probabilities ``n_h / N_h`` of the selected units.
    """
    strata = np.asarray(strata)
    chosen, probs = [], []
    for h, n in enumerate(n_h):
        members = np.flatnonzero(strata == h)
        if n > len(members):
            raise DesignError(f"stratum {h}: sample size {n} exceeds stratum size {len(members)}")
        chosen.append(rng.choice(members, size=n, replace=False))
        probs.append(np.full(n, n / len(members)))
    return np.concatenate(chosen), np.concatenate(probs)


def midzuno_inclusion(z, n: int) -> np.ndarray:
    """Inclusion probabilities of Midzuno sampling with first-draw
    probabilities ``p_k = z_k / sum(z)``:
    ``pi_k = (n-1)/(N-1) + p_k (N-n)/(N-1)``."""
    z = np.asarray(z, dtype=float)
    N = len(z)
    if np.any(z <= 0):
        raise DesignError("size measure must be positive")
    if not 1 <= n <= N:
        raise DesignError(f"sample size {n} outside [1, {N}]")
    if N == 1:
        return np.ones(1)
    pi = (n - 1) / (N - 1) + z / z.sum() * (N - n) / (N - 1)
    if np.any(pi > 1 + 1e-12):
        raise DesignError("size measure too skewed")
    return np.minimum(pi, 1.0)


def draw_midzuno(z, n: int, rng: np.random.Generator):
    """Midzuno sample: one unit drawn with probability ``z_k / sum(z)``, the
    remaining ``n - 1`` by SRSWOR from the rest.

    Returns ``(index, pi)`` for the selected units.
    """
    z = np.asarray(z, dtype=float)
    pi_all = midzuno_inclusion(z, n)
    N = len(z)
    first = rng.choice(N, p=z / z.sum())
    rest = np.delete(np.arange(N), first)
    others = rng.choice(rest, size=n - 1, replace=False)
    index = np.concatenate([[first], others])
    return index, pi_all[index]


def frame_designs(population: Population) -> dict[str, FrameDesign]:
    sizes = {str(h): float(Nh) for h, Nh in enumerate(population.strata_sizes)}
    return {"A": FrameDesign("stratified_srswor", population.N_A, sizes),
            "B": FrameDesign("unequal", population.N_B)}


def draw_sample(population: Population, rng: np.random.Generator,
                n_A=None, n_B: int | None = None) -> DualFrameSample:
    """Independent draws from both frames, pooled into a dual-frame sample.

    Overlap units carry both design weights (the frame they were not drawn
    from supplies its own ``1/pi``), so the sample also serves the
    single-frame approach.
    """
    config = population.config
    n_A = config.n_A if n_A is None else n_A
    n_B = config.n_B if n_B is None else n_B

    frame_A = np.flatnonzero(population.in_A)
    frame_B = np.flatnonzero(population.in_B)
    sizes = np.asarray(population.strata_sizes, dtype=float)
    pi_A_pop = np.zeros(population.N)
    pi_A_pop[frame_A] = np.asarray(n_A)[population.stratum[frame_A]] / sizes[population.stratum[frame_A]]
    pi_B_pop = np.zeros(population.N)
    pi_B_pop[frame_B] = midzuno_inclusion(population.z[frame_B], n_B)

    pos_A, _ = draw_stratified_srswor(population.stratum[frame_A], n_A, rng)
    idx_A = frame_A[pos_A]
    pos_B, _ = draw_midzuno(population.z[frame_B], n_B, rng)
    idx_B = frame_B[pos_B]

    units = np.concatenate([idx_A, idx_B])
    from_A = np.arange(len(units)) < len(idx_A)
    pop_domain = population.domain[units]
    domain = np.where(pop_domain == "ab", np.where(from_A, "ab", "ba"), pop_domain)
    with np.errstate(divide="ignore"):
        d_A = np.where(pi_A_pop[units] > 0, 1.0 / pi_A_pop[units], np.nan)
        d_B = np.where(pi_B_pop[units] > 0, 1.0 / pi_B_pop[units], np.nan)
    stratum_A = np.array([str(population.stratum[u]) if a else None
                          for u, a in zip(units, from_A)], dtype=object)
    ids = np.array([f"{'A' if a else 'B'}{u}" for u, a in zip(units, from_A)], dtype=object)
    return DualFrameSample(
        ids=ids, domain=domain, d_A=d_A, d_B=d_B, stratum_A=stratum_A, stratum_B=None,
        y={"y": population.y[units]},
        aux={"x_A": population.x_A[units], "x_B": population.x_B[units],
             "z": population.z[units]},
        meta=population.meta())
