import numpy as np
import pytest

from mvhm import pipeline
from mvhm.config import load_config
from mvhm.handmesh import generate_template
from mvhm.skeleton import rest_skeleton, sample_pose
from mvhm.spinmatch import spin_match

TWIST_MIN_DEG = 15.0


@pytest.fixture(scope="session")
def template():
    return generate_template()


@pytest.fixture(scope="session")
def rest():
    return rest_skeleton()


def twist_suite(n=50, min_deg=TWIST_MIN_DEG):
    """First n default-sampler poses whose finger roots carry at least `min_deg` of spin."""
    out, seed = [], 0
    while len(out) < n:
        C = sample_pose(seed)
        sol = spin_match(rest_skeleton(), C)
        if np.degrees(sol.net_twist) >= min_deg:
            out.append((seed, C, sol))
        seed += 1
    return out


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "small"
    cfg = load_config(overrides={"count": 4, "seed": 3})
    pipeline.generate(cfg, out=str(out))
    return str(out)


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
