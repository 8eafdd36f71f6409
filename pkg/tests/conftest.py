import numpy as np
import pytest

from dualcal.data import DualFrameSample, FrameMeta
from dualcal.simulation import ScenarioConfig, draw_sample, frame_designs, generate_population


def four_row_sample(meta=None, **overrides):
    """One unit per domain, all design weights 2."""
    cols = dict(
        ids=np.array(["u1", "u2", "u3", "u4"], dtype=object),
        domain=np.array(["a", "ab", "ba", "b"]),
        d_A=np.array([2.0, 2.0, np.nan, np.nan]),
        d_B=np.array([np.nan, np.nan, 2.0, 2.0]),
        y={"y": np.array([1.0, 2.0, 3.0, 4.0])},
        meta=meta if meta is not None else FrameMeta(4, 4, 2),
    )
    cols.update(overrides)
    return DualFrameSample(**cols)


@pytest.fixture
def tiny():
    return four_row_sample()


@pytest.fixture(scope="session")
def population():
    return generate_population(ScenarioConfig.for_scenario("small"), 11)


@pytest.fixture(scope="session")
def draws(population):
    """Twenty seeded scenario-1 samples with their frame designs."""
    designs = frame_designs(population)
    rng = np.random.default_rng(5)
    return [(draw_sample(population, rng), designs) for _ in range(20)]


@pytest.fixture
def draw(draws):
    return draws[0]


def random_instance(seed):
    """A random dual-frame sample whose targets are met by some ratio vector in (0.5, 2).

    Targets are totals of the Hartley weights times a positive factor per
    unit, so every distance (logit with bounds (0.2, 5) included) is feasible.
    """
    rng = np.random.default_rng(seed)
    n = {dom: int(rng.integers(3, 12)) for dom in ("a", "ab", "ba", "b")}
    domain = np.concatenate([[dom] * k for dom, k in n.items()])
    m = len(domain)
    is_ab, is_ba = domain == "ab", domain == "ba"
    d_A = np.where(np.isin(domain, ["a", "ab", "ba"]), rng.uniform(2, 10, m), np.nan)
    d_B = np.where(np.isin(domain, ["b", "ab", "ba"]), rng.uniform(2, 10, m), np.nan)
    # keep the two overlap size estimates within 15% of each other
    d_B[is_ba] *= d_A[is_ab].sum() * rng.uniform(0.85, 1.15) / d_B[is_ba].sum()
    x = rng.gamma(4.0, 2.0, m)
    y = 3.0 + 2.0 * x + rng.normal(0, 1, m)
    eta = float(rng.uniform(0.2, 0.8))

    r = rng.uniform(0.85, 1.18, m)
    r[is_ba] *= (d_A[is_ab] * r[is_ab]).sum() / (d_B[is_ba] * r[is_ba]).sum()
    dA0, dB0 = np.nan_to_num(d_A), np.nan_to_num(d_B)
    N_a = (dA0 * r)[domain == "a"].sum()
    N_ab = (dA0 * r)[is_ab].sum()
    N_b = (dB0 * r)[domain == "b"].sum()
    w0 = np.select([domain == "a", is_ab, is_ba], [dA0, eta * dA0, (1 - eta) * dB0], dB0)
    XA = (w0 * r * x)[domain != "b"].sum()
    XB = (w0 * r * x)[domain != "a"].sum()
    meta = FrameMeta(N_a + N_ab, N_b + N_ab, N_ab,
                     numeric_totals={("x", "A"): XA, ("x", "B"): XB})
    sample = DualFrameSample(ids=np.array([f"k{i}" for i in range(m)], dtype=object),
                             domain=domain, d_A=d_A, d_B=d_B, y={"y": y}, aux={"x": x},
                             meta=meta)
    return sample, eta
