import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from caplab.constructions import BranchingTreeParams, branching_tree
from caplab.domain_io import FormatError, emit, load, parse, save
from conftest import random_domain


@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 3]))
def test_round_trip(seed, n):
    spec = random_domain(np.random.default_rng(seed), n=n, m=3, nboxes=3)
    assert parse(emit(spec)) == spec
    assert emit(parse(emit(spec))) == emit(spec)


def test_round_trip_with_tags(tmp_path):
    spec = branching_tree(BranchingTreeParams(n=2, s=2, J=2))
    path = tmp_path / "tree.dom"
    save(spec, path)
    back = load(path)
    assert back == spec
    assert list(back.tags) == list(spec.tags)


def test_comments_and_blank_lines_ignored():
    text = "# a square\ncaplab-domain 1\n\ndimension 2\nscale 1\ncenter 1 1  # middle\nboxes 1\n0 0 2 2\nend\n"
    spec = parse(text)
    assert spec.boxes[0].hi == (2, 2)


@pytest.mark.parametrize(
    "text, msg",
    [
        ("dimension 2\n", "header"),
        ("caplab-domain 1\ndimension 2\nscale 1\ncenter 1 1\nboxes 1\n0 0 2\nend\n", "expected 4 integers"),
        ("caplab-domain 1\ndimension 2\nscale 1\ncenter 1 1\nboxes 1\n0 0 2 2\n", "end of document"),
        ("caplab-domain 1\ndimension 2\nscale 1\ncenter 1 1\nboxes 1\n0 0 2 x\nend\n", "non-integer"),
        ("caplab-domain 1\ndimension 2\nscale 1\ncenter 1 1\nboxes 1\n2 0 0 2\nend\n", "line 6"),
    ],
)
def test_malformed_documents(text, msg):
    with pytest.raises(FormatError, match=msg):
        parse(text)
