import numpy as np
import pytest

from storageshare.instance import make_instance


@pytest.fixture
def tiny_instance():
    # 1 customer, 4 slots, frictionless battery; numbers chosen so the
    # optimal dispatch is computable by hand.
    return make_instance(
        lmp=[1.0, 1.0, 2.0, 2.0],
        tou=[1.0, 1.0, 2.0, 2.0],
        customer_load=[[4.0, 4.0, 4.0, 4.0]],
        slot_hours=1.0,
        total_capacity=4.0,
        eta_ch=1.0,
        eta_dis=1.0,
        power_ratio=1.0,
        soc_lower=0.0,
        soc_upper=1.0,
        soc_ini_customer=0.0,
        soc_ini_disco=0.0,
        alpha=0.01,
    )


def rand_instance(rng, n=None, t=None, **overrides):
    """Random but well-posed instance for property tests."""
    n = int(rng.integers(1, 4)) if n is None else n
    t = int(rng.integers(3, 9)) if t is None else t
    kw = dict(
        lmp=rng.uniform(-0.05, 0.6, t),
        tou=rng.uniform(0.05, 0.9, t),
        customer_load=rng.uniform(0.0, 5.0, (n, t)),
        slot_hours=float(rng.choice([0.5, 1.0])),
        total_capacity=float(rng.uniform(0.0, 20.0)),
        eta_ch=float(rng.uniform(0.85, 1.0)),
        eta_dis=float(rng.uniform(0.85, 1.0)),
        power_ratio=float(rng.uniform(0.1, 1.0)),
        soc_lower=0.1,
        soc_upper=0.9,
        soc_ini_customer=0.5,
        soc_ini_disco=0.5,
        alpha=0.01,
    )
    kw.update(overrides)
    return make_instance(**kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


def division_fixture(seed):
    """Deterministic small division instance; shape drawn from the seed."""
    g = np.random.default_rng(seed)
    n = int(g.integers(1, 3))
    t = int(g.choice([4, 6]))
    return rand_instance(g, n=n, t=t, total_capacity=float(g.uniform(3.0, 15.0)))


def division_fixture_n2(seed):
    """Deterministic two-customer division instance."""
    g = np.random.default_rng(seed)
    t = int(g.choice([4, 6]))
    return rand_instance(g, n=2, t=t, total_capacity=float(g.uniform(3.0, 15.0)))


def stress_fixture():
    """Two customers over twelve slots; the largest tree the suite solves."""
    g = np.random.default_rng(304)
    return rand_instance(g, n=2, t=12, total_capacity=float(g.uniform(5.0, 15.0)))


# Cross-checked division fixtures: every entry solves identically under
# big-M branching, complementarity branching, and the capacity grid sweep.
DIVISION_FIXTURES = (
    ("zero_cap", lambda: rand_instance(np.random.default_rng(101), n=2, t=4,
                                       total_capacity=0.0)),
    ("mix202", lambda: division_fixture(202)),
    ("mix203", lambda: division_fixture(203)),
    ("mix207", lambda: division_fixture(207)),
    ("mix209", lambda: division_fixture(209)),
    ("mix212", lambda: division_fixture(212)),
    ("mix214", lambda: division_fixture(214)),
    ("pair219", lambda: division_fixture_n2(219)),
    ("pair223", lambda: division_fixture_n2(223)),
    ("pair226", lambda: division_fixture_n2(226)),
    ("pair236", lambda: division_fixture_n2(236)),
    ("pair250", lambda: division_fixture_n2(250)),
)
