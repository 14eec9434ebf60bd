import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssep_hydro import model
from ssep_hydro.model import (
    LatticeSpec,
    ModelSpec,
    RateTableBoundary,
    StructuredBoundary,
    structured_spec,
    table_spec,
)


def mixed_spec(N=8):
    return structured_spec(
        N, 2, 0.8,
        r=[1.5, 0.5], alpha=[0.9, 0.1],
        c=[[0.0, 0.7], [0.3, 0.0]],
        a=[[0.0, 0.2], [0.4, 0.0]],
    )


configs = st.integers(min_value=4, max_value=12).flatmap(
    lambda n: st.lists(st.integers(0, 1), min_size=n, max_size=n)
)


# -- lattice and boundary validation ----------------------------------------

def test_lattice_requires_bulk_gap():
    with pytest.raises(ValueError):
        LatticeSpec(4, 2)  # N-1 = 3 leaves no site between block {1,2} and 3
    LatticeSpec(5, 2)
    with pytest.raises(ValueError):
        LatticeSpec(6, 0)


def test_structured_validation():
    with pytest.raises(ValueError):
        StructuredBoundary(r=[-1.0], alpha=[0.5])
    with pytest.raises(ValueError):
        StructuredBoundary(r=[1.0], alpha=[1.5])
    with pytest.raises(ValueError):
        StructuredBoundary(r=[1.0, 1.0], alpha=[0.5, 0.5], c=[[1.0, 0.0], [0.0, 0.0]])
    b = StructuredBoundary(r=0.7, alpha=0.2)
    assert b.p == 1 and b.c.shape == (1, 1)


def test_beta_range_checked():
    with pytest.raises(ValueError):
        structured_spec(8, 1, 1.2, r=[1.0], alpha=[0.5])


def test_block_width_must_match():
    with pytest.raises(ValueError):
        ModelSpec(LatticeSpec(8, 2), 0.5, StructuredBoundary(r=[1.0], alpha=[0.5]))


def test_rate_table_encoding():
    t = RateTableBoundary.from_strings({"00": 0.5, "10": 1.5, "01": 2.0, "11": 0.25})
    # "10" means site 1 occupied, site 2 empty: index 1 under LSB encoding
    assert t.table[0] == 0.5
    assert t.table[1] == 1.5
    assert t.table[2] == 2.0
    assert t.table[3] == 0.25
    assert t.to_strings() == {"00": 0.5, "10": 1.5, "01": 2.0, "11": 0.25}
    with pytest.raises(ValueError):
        RateTableBoundary.from_strings({"0": 1.0, "1": 2.0, "11": 3.0})
    with pytest.raises(ValueError):
        RateTableBoundary.from_strings({"00": 1.0, "11": 2.0})


# -- configuration moves ------------------------------------------------------

@given(configs, st.data())
@settings(max_examples=100, deadline=None)
def test_swap_is_an_involution(bits, data):
    cfg = np.array(bits, dtype=np.uint8)
    k = data.draw(st.integers(1, len(cfg)))
    l = data.draw(st.integers(1, len(cfg)).filter(lambda x: x != k))
    twice = model.swap(model.swap(cfg, k, l), k, l)
    assert np.array_equal(twice, cfg)


@given(configs, st.data())
@settings(max_examples=100, deadline=None)
def test_flip_is_an_involution_touching_one_site(bits, data):
    cfg = np.array(bits, dtype=np.uint8)
    k = data.draw(st.integers(1, len(cfg)))
    once = model.flip(cfg, k)
    assert np.array_equal(model.flip(once, k), cfg)
    changed = np.nonzero(once != cfg)[0]
    assert changed.tolist() == [k - 1]


def test_out_of_range_sites_rejected():
    cfg = model.parse_config("0101")
    with pytest.raises(ValueError):
        model.swap(cfg, 0, 1)
    with pytest.raises(ValueError):
        model.flip(cfg, 5)
    with pytest.raises(ValueError):
        model.swap(cfg, 2, 2)


def test_parse_and_format_config():
    cfg = model.parse_config("1011")
    assert cfg.tolist() == [1, 0, 1, 1]
    assert model.format_config(cfg) == "1011"
    assert model.block_state(cfg, 2) == 1  # site1=1, site2=0


# -- transition rates ---------------------------------------------------------

def test_transitions_worked_example():
    # N=8, p=2, eta = 1100000, mixed boundary
    spec = mixed_spec()
    cfg = model.parse_config("1100000")
    moves = dict(model.transitions(cfg, spec))
    # stirring only on the one discordant bond (2,3)
    assert moves[("swap", 2, 3)] == 1.0
    assert ("swap", 1, 2) not in moves
    # site 1: occupied, r1(1-alpha1) + c12*0 (agree) + a12*1
    assert moves[("flip", 1)] == pytest.approx(1.5 * (1 - 0.9) + 0.2)
    # site 2: occupied, r2(1-alpha2) + a21 (agree with site 1)
    assert moves[("flip", 2)] == pytest.approx(0.5 * (1 - 0.1) + 0.4)
    # right edge empty: rate beta
    assert moves[("flip", 7)] == pytest.approx(0.8)


def test_transitions_table_flips_site_one_only():
    spec = table_spec(8, 2, 0.5, {"00": 0.5, "10": 1.5, "01": 2.0, "11": 0.25})
    cfg = model.parse_config("0100000")
    moves = dict(model.transitions(cfg, spec))
    assert moves[("flip", 1)] == pytest.approx(2.0)  # block state (0,1)
    assert ("flip", 2) not in moves


def test_copy_rate_fires_on_disagreement_only():
    spec = structured_spec(8, 2, 0.5, r=[0.0, 0.0], alpha=[0.0, 0.0],
                           c=[[0.0, 1.2], [0.7, 0.0]])
    agree = model.parse_config("1100000")
    differ = model.parse_config("1000000")
    assert ("flip", 1) not in dict(model.transitions(agree, spec))
    moves = dict(model.transitions(differ, spec))
    assert moves[("flip", 1)] == pytest.approx(1.2)
    assert moves[("flip", 2)] == pytest.approx(0.7)


def test_anticopy_rate_fires_on_agreement_only():
    spec = structured_spec(8, 2, 0.5, r=[0.0, 0.0], alpha=[0.0, 0.0],
                           a=[[0.0, 0.5], [1.0, 0.0]])
    agree = model.parse_config("0000000")
    differ = model.parse_config("0100000")
    moves = dict(model.transitions(agree, spec))
    assert moves[("flip", 1)] == pytest.approx(0.5)
    assert moves[("flip", 2)] == pytest.approx(1.0)
    moves2 = dict(model.transitions(differ, spec))
    assert ("flip", 1) not in moves2 or moves2[("flip", 1)] == 0


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_rates_positive_and_bounded(data):
    spec = mixed_spec()
    bits = data.draw(st.lists(st.integers(0, 1), min_size=7, max_size=7))
    cfg = np.array(bits, dtype=np.uint8)
    moves = model.transitions(cfg, spec)
    total = sum(r for _, r in moves)
    assert all(r > 0 for _, r in moves)
    assert total <= model.total_rate_bound(spec) + 1e-12


def test_moves_preserve_occupancy_values():
    spec = mixed_spec()
    cfg = model.parse_config("1010010")
    for mv, _ in model.transitions(cfg, spec):
        out = model.apply_move(cfg, mv)
        assert set(np.unique(out)) <= {0, 1}
        if mv[0] == "swap":
            assert out.sum() == cfg.sum()


# -- initial sampling ----------------------------------------------------------

def test_sample_initial_deterministic_and_extremes():
    lat = LatticeSpec(10, 1)
    a = model.sample_initial(lambda u: 0.5, lat, seed=7)
    b = model.sample_initial(lambda u: 0.5, lat, seed=7)
    assert np.array_equal(a, b)
    ones = model.sample_initial(lambda u: 1.0, lat, seed=3)
    zeros = model.sample_initial(lambda u: 0.0, lat, seed=3)
    assert ones.sum() == 9 and zeros.sum() == 0


def test_sample_initial_matches_profile_frequencies():
    lat = LatticeSpec(6, 1)
    hits = np.zeros(5)
    n = 4000
    for s in range(n):
        hits += model.sample_initial(lambda u: u, lat, seed=s)
    freq = hits / n
    want = np.arange(1, 6) / 6
    assert np.all(np.abs(freq - want) < 4 * np.sqrt(want * (1 - want) / n) + 1e-9)


def test_profile_out_of_range_rejected():
    with pytest.raises(ValueError):
        model.sample_initial(lambda u: 1.5, LatticeSpec(8, 1), seed=0)


# -- serialization --------------------------------------------------------------

def test_json_round_trip_structured():
    spec = mixed_spec()
    blob = json.dumps(model.spec_to_json(spec), sort_keys=True)
    back = model.spec_from_json(blob)
    assert back == spec


def test_json_round_trip_table():
    spec = table_spec(9, 2, 0.25, {"00": 0.5, "10": 1.5, "01": 2.0, "11": 0.25})
    back = model.spec_from_json(model.spec_to_json(spec))
    assert back.lattice == spec.lattice and back.beta == spec.beta
    assert np.array_equal(back.left.table, spec.left.table)


def test_malformed_spec_rejected():
    with pytest.raises(ValueError):
        model.spec_from_json({"N": 8, "p": 1})
    with pytest.raises(ValueError):
        model.spec_from_json({"N": 8, "p": 1, "beta": 0.5, "left": {"kind": "bogus"}})
