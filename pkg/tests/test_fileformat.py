import numpy as np
import pytest

from risktree.errors import ParseError
from risktree.fileformat import load_model, models_equal, parse_model, serialize_model
from risktree.fixtures import (BUILDERS, binary2, fixture_names, fixture_path, load_fixture,
                               roundtrip, write_fixtures)
from risktree.tree import TreeSpec, build_tree

HEADER = "risktree-model 1\n"
TREE = "horizon 1\nbranching 2\nweights 0.5 0.5\n"


@pytest.mark.parametrize("name", fixture_names())
def test_fixture_roundtrip(name):
    first, second = roundtrip(name)
    assert models_equal(first.model, second.model)


@pytest.mark.parametrize("name", fixture_names())
def test_shipped_files_match_builders(name):
    loaded = load_fixture(name)
    assert models_equal(loaded.model, BUILDERS[name]())


def test_write_fixtures_is_stable(tmp_path):
    paths = write_fixtures(tmp_path)
    assert len(paths) == len(fixture_names())
    for p in paths:
        shipped = load_fixture(p.stem)
        assert models_equal(load_model(p).model, shipped.model)
        assert p.read_text() == fixture_path(p.stem).read_text()


def test_tree_roundtrip():
    sp = build_tree(TreeSpec.uniform([3, 2]))
    back = parse_model(serialize_model(sp))
    assert back.kind == "tree" and back.space == sp and back.model is None


def test_static_with_infinite_penalty():
    text = HEADER + "kind static\n" + TREE + "entry 1 0 0.5 0.5\nentry 0.5 inf 1 0\n"
    lm = parse_model(text)
    assert np.isinf(lm.model.dictionary.c[1])
    assert lm.model(np.array([-1.0, 1.0])) == pytest.approx(0.0)
    again = parse_model(serialize_model(lm.model))
    assert models_equal(again.model, lm.model)


def test_dual_defaults():
    text = HEADER + "kind dual\n" + TREE + "pair only\nmeasure 0.5 0.5\nend\n"
    lm = parse_model(text)
    m = lm.model
    np.testing.assert_allclose(m.D, 1.0)
    np.testing.assert_allclose(m.c, 0.0)
    assert m.names == ["only"]


def test_put_premium_gamma():
    text = HEADER + "kind put-premium\n" + TREE + "gamma 0 2\ngamma 1 3 4\n"
    m = parse_model(text).model
    np.testing.assert_allclose(m.rho(np.array([-3.0, -4.0]), 1), [1.0, 1.0])


@pytest.mark.parametrize("body, line", [
    ("kind nonsense\n", 2),
    ("kind static\n" + TREE + "entry 1 0 0.5\n", 6),
    ("kind static\n" + TREE + "entry 1 zero 0.5 0.5\n", 6),
    ("kind dual\n" + TREE + "pair a\nmeasure 0.5 0.5\nkind dual\n", 8),
    ("kind dual\n" + TREE + "pair a\nmeasure 0.5 0.5\ndiscount 0 1 0.5 0.5\nend\n", 8),
    ("kind dual\n" + TREE + "pair a\nmeasure 0.5 0.5\npenalty 1 0 0\nend\n", 8),
    ("kind tree\nhorizon 1\nbranching 2\nweights 0.5 -0.5\n", 5),
    ("kind dual\n" + TREE + "measure 0.5 0.5\n", 6),
    ("kind tree\n" + TREE + "colour blue\n", 6),
])
def test_parse_errors_carry_line_numbers(body, line):
    with pytest.raises(ParseError) as err:
        parse_model(HEADER + body, "model.rtm")
    assert err.value.lineno == line
    assert "model.rtm" in str(err.value)


def test_missing_header_and_unterminated_block():
    with pytest.raises(ParseError):
        parse_model("kind tree\n" + TREE)
    with pytest.raises(ParseError):
        parse_model(HEADER + "kind dual\n" + TREE + "pair a\nmeasure 0.5 0.5\n")
    with pytest.raises(ParseError):
        parse_model(HEADER + "risktree-model 2\n")


def test_models_equal_detects_differences():
    a = BUILDERS["coherent-grid"]()
    b = BUILDERS["discounted-cocycle"]()
    assert not models_equal(a, b)
    assert not models_equal(a, BUILDERS["put-premium"]())
    assert models_equal(binary2(), binary2())
    assert not models_equal(binary2(), a)
