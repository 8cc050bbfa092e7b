"""Shipped example models and the builders that produce them."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .conditions import ablate_penalty, rectangular_model
from .dynamic import DualModel
from .fileformat import LoadedModel, load_model, parse_model, serialize_model
from .putpremium import PutPremiumModel
from .static import DualDictionary, StaticRiskMeasure
from .tree import FilteredSpace, TreeSpec, build_tree

SUFFIX = ".rtm"


def binary2() -> FilteredSpace:
    return build_tree(TreeSpec.uniform([2, 2]))


def conditional_expectation() -> DualModel:
    return DualModel.conditional_expectation(binary2())


def coherent_grid() -> DualModel:
    """D = 1, every one-step law from {1/3, 1/2, 2/3}, zero penalty."""
    sp = binary2()
    opts = [((p, 1 - p), 0.0) for p in (1 / 3, 1 / 2, 2 / 3)]
    return rectangular_model(sp, [[opts], [opts, opts]]).model


DISCOUNT_OPTIONS = [((0.5, 0.5), 0.0), ((1 / 3, 2 / 3), 0.1), ((2 / 3, 1 / 3), 0.2)]


def discounted_cocycle() -> DualModel:
    """Root discount 1 or 1/2, later factor 1/2, cocycle penalties."""
    sp = binary2()
    opts = DISCOUNT_OPTIONS
    return rectangular_model(sp, [[opts], [opts, opts]], root_discounts=(1.0, 0.5),
                             root_penalties=(0.0, 0.05), later_factors=[0.5]).model


def broken_cocycle(delta: float = 0.05, seed: int = 0) -> DualModel:
    return ablate_penalty(discounted_cocycle(), delta, np.random.default_rng(seed)).model


def put_premium() -> PutPremiumModel:
    return PutPremiumModel(binary2(), 2.0)


def two_pair_static() -> StaticRiskMeasure:
    sp = binary2()
    d = DualDictionary.from_entries([(1.0, sp.P, 0.0), (0.5, [0.5, 0.0, 0.25, 0.25], 0.1)])
    return StaticRiskMeasure(sp, d)


BUILDERS = {
    "conditional-expectation": conditional_expectation,
    "coherent-grid": coherent_grid,
    "discounted-cocycle": discounted_cocycle,
    "broken-cocycle": broken_cocycle,
    "put-premium": put_premium,
    "two-pair": two_pair_static,
}
NORMALIZE = {"broken-cocycle": "off"}


def fixture_names():
    return sorted(BUILDERS)


def fixture_path(name: str) -> Path:
    if name not in BUILDERS:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(fixture_names())}")
    return Path(str(resources.files("risktree") / "fixtures" / (name + SUFFIX)))


def load_fixture(name: str) -> LoadedModel:
    return load_model(fixture_path(name))


def fixture_text(name: str) -> str:
    return serialize_model(BUILDERS[name](), NORMALIZE.get(name))


def write_fixtures(directory) -> list[Path]:
    """Regenerate every fixture file from its builder."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name in fixture_names():
        p = directory / (name + SUFFIX)
        p.write_text(f"# fixture: {name}\n" + fixture_text(name))
        out.append(p)
    return out


def roundtrip(name: str):
    """Parse, serialize and re-parse a shipped fixture."""
    first = load_fixture(name)
    text = serialize_model(first.model if first.model is not None else first.space,
                           first.meta.get("normalize"))
    return first, parse_model(text)
