import os

import hypothesis
import numpy as np
import pytest

from quasi_equilibria.model import build_gallery
from quasi_equilibria.model.loader import InstanceDocument, instance_from_document
from quasi_equilibria.vi import VIConfig

np.seterr(all="warn")

hypothesis.settings.register_profile("ci", max_examples=100, deadline=None, derandomize=True)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "ci"))

# Scalar followers: a few starts over the search box are enough.
FAST_VI = VIConfig(multistart=9)
# Two-dimensional followers: starts grow as multistart^2.
FAST_VI_2D = VIConfig(multistart=3)
TIGHT_VI = VIConfig(multistart=5, residual_tol=1e-10)

QUADRATIC_SEEDS = list(range(20))


def lit(value: float) -> str:
    return f"({float(value)!r})"


def make_instance(document: dict):
    return instance_from_document(InstanceDocument.model_validate(document))


def leader(i: int, phi: str, lower: float = 0.0, upper: float = 1.0) -> dict:
    return {"id": i, "dim": 1, "lower": [lower], "upper": [upper], "phi": phi}


def quadratic_document(seed: int) -> dict:
    """Two scalar leaders with quadratic objectives and a strongly monotone affine follower."""
    rng = np.random.default_rng(seed)
    a1, a2 = rng.uniform(1.0, 3.0, 2)
    b = rng.uniform(-0.5, 0.5)
    c1, c2 = rng.uniform(-2.0, 2.0, 2)
    alpha = rng.uniform(1.0, 2.0)
    beta0, beta1, beta2 = rng.uniform(-1.0, 1.0, 3)
    q = rng.uniform(0.0, 1.0)
    r = rng.uniform(-1.0, 1.0)
    return {
        "name": f"quadratic_{seed}",
        "leaders": [
            leader(1, f"0.5*{lit(a1)}*x1^2 + {lit(b)}*x1*x2 + {lit(c1)}*x1"),
            leader(2, f"0.5*{lit(a2)}*x2^2 + {lit(b)}*x1*x2 + {lit(c2)}*x2"),
        ],
        "pi": f"0.5*{lit(a1)}*x1^2 + 0.5*{lit(a2)}*x2^2 + {lit(b)}*x1*x2 + {lit(c1)}*x1 + {lit(c2)}*x2",
        "h": f"0.5*{lit(q)}*w^2 + {lit(r)}*w",
        "follower": {
            "dim": 1,
            "G": [f"{lit(alpha)}*w + {lit(beta1)}*x1 + {lit(beta2)}*x2 + {lit(beta0)}"],
            "K": {"kind": "box", "lower": [-5.0], "upper": [5.0]},
        },
    }


@pytest.fixture
def pf_original():
    return build_gallery("pang_fukushima")


@pytest.fixture
def pf_minus():
    return build_gallery("pf_variant", {"h": "-w"})


@pytest.fixture
def pf_plus():
    return build_gallery("pf_variant", {"h": "w"})


@pytest.fixture
def multivalued():
    return build_gallery("multivalued_vi_demo")


@pytest.fixture
def congestion():
    return build_gallery("congestion_control", {"N": 2, "a": "1,1", "c": 1, "gamma": 1, "xbar": "1,1"})


@pytest.fixture
def tampered_pi():
    return make_instance(
        {
            "name": "tampered",
            "leaders": [leader(1, "0.5*x1"), leader(2, "-0.5*x2")],
            "h": "-w",
            "pi": "x1*x2",
            "follower": {
                "dim": 1,
                "G": ["-1 + x1 + x2 + w"],
                "K": {"kind": "box", "lower": [0.0], "upper": [None]},
                "search_lower": [0.0],
                "search_upper": [2.0],
            },
        }
    )


@pytest.fixture
def single_quadratic():
    """One leader minimising (x1 - 0.3)^2 on [-1, 1]; the follower plays w = 0."""
    return make_instance(
        {
            "name": "single_quadratic",
            "leaders": [leader(1, "(x1 - 0.3)^2", -1.0, 1.0)],
            "h": "0",
            "pi": "(x1 - 0.3)^2",
            "follower": {"dim": 1, "G": ["w"], "K": {"kind": "box", "lower": [-1.0], "upper": [1.0]}},
        }
    )


@pytest.fixture
def instance_json(tmp_path):
    def write(g, name="instance.json"):
        from quasi_equilibria.model import dump_instance

        path = tmp_path / name
        path.write_text(dump_instance(g))
        return path

    return write
