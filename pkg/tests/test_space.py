import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exhaustive_darts, scan_row_argmax

from l2nas.space import (
    DARTS_OPS,
    Discretizer,
    MatrixBlock,
    SearchSpaceSpec,
    SpaceError,
    arch_key,
    builtin_space,
    discretize,
    discretize_darts,
    discretize_row_argmax,
    darts_rows,
    flatten,
    is_valid_arch,
    iter_archs,
    nb201_arch_str,
    parse_arch_key,
    parse_nb201_arch_str,
    random_action,
    random_arch,
    unflatten,
)


# --- builtin spaces ------------------------------------------------------------


def test_nb201_layout():
    sp = builtin_space("nb201")
    assert len(sp.blocks) == 1 and sp.blocks[0].shape == (6, 5)
    assert sp.total_dim == 30
    assert sp.size == 15625
    assert len({a.key for a in iter_archs(sp)}) == 15625


def test_darts_layout():
    sp = builtin_space("darts")
    assert [b.shape for b in sp.blocks] == [(14, 7), (14, 7)]
    assert all(b.node_count == 4 and b.discretizer == Discretizer.DARTS_TOP2 for b in sp.blocks)
    assert sp.blocks[0].op_names == DARTS_OPS
    assert "none" not in DARTS_OPS


def test_ofa_layout():
    sp = builtin_space("ofa_mbv3")
    assert [b.shape for b in sp.blocks] == [(20, 9), (5, 3)]
    assert all(b.discretizer == Discretizer.ROW_ARGMAX for b in sp.blocks)


def test_synthetic_small():
    sp = builtin_space("synthetic", 2, 2)
    assert sp.total_dim == 4
    assert len(list(iter_archs(sp))) == 4


@pytest.mark.parametrize("E,O", [(0, 3), (2, 1), (None, 3)])
def test_synthetic_bad_dims(E, O):
    with pytest.raises(SpaceError):
        builtin_space("synthetic", E, O)


def test_unknown_space():
    with pytest.raises(SpaceError):
        builtin_space("nasbench101")


def test_total_dim_invariant():
    for name in ("nb201", "darts", "ofa_mbv3"):
        sp = builtin_space(name)
        assert sp.total_dim == sum(b.rows * b.cols for b in sp.blocks)


def test_block_validation():
    with pytest.raises(SpaceError):
        MatrixBlock(5, 7, DARTS_OPS, Discretizer.DARTS_TOP2, node_count=4)
    with pytest.raises(SpaceError):
        MatrixBlock(3, 1, ("a",))
    with pytest.raises(SpaceError):
        SearchSpaceSpec("empty", ())
    assert darts_rows(4) == 14 and darts_rows(2) == 5


# --- row argmax ------------------------------------------------------------------


def test_row_argmax_examples():
    np.testing.assert_array_equal(discretize_row_argmax([[0.1, 0.9], [0.7, 0.3]]), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(discretize_row_argmax([[0, 1], [1, 0]]), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(discretize_row_argmax([[0.5, 0.5, 0.2]]), [[1, 0, 0]])
    np.testing.assert_array_equal(scan_row_argmax([[0.5, 0.5, 0.2]]), [[1, 0, 0]])


def test_row_argmax_matches_scan_with_ties():
    rng = np.random.default_rng(3)
    for _ in range(300):
        # coarse values force frequent ties
        m = rng.integers(0, 3, size=(rng.integers(1, 8), rng.integers(1, 6))) / 2
        np.testing.assert_array_equal(discretize_row_argmax(m), scan_row_argmax(m))


# --- darts ------------------------------------------------------------------------


def test_darts_single_node():
    out = discretize_darts(np.array([[0.9, 0.1], [0.2, 0.8]]), 1)
    np.testing.assert_array_equal(out, [[1, 0], [0, 1]])


def test_darts_skips_row_of_first_pick():
    m = np.array([
        [0.9, 0.8, 0.0],
        [0.1, 0.2, 0.3],
    ] + [[0.0, 0.0, 0.0]] * 3)
    m[2:5] = [[0.5, 0.95, 0.4], [0.94, 0.1, 0.1], [0.1, 0.1, 0.1]]
    out = discretize_darts(m, 2)
    np.testing.assert_array_equal(out[:2], [[1, 0, 0], [0, 0, 1]])
    np.testing.assert_array_equal(out[2:], [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(out, exhaustive_darts(m, 2))


def test_darts_matches_exhaustive_random():
    rng = np.random.default_rng(11)
    for _ in range(200):
        m = rng.random((5, 4))
        np.testing.assert_array_equal(discretize_darts(m, 2), exhaustive_darts(m, 2))


def test_darts_matches_exhaustive_ties():
    rng = np.random.default_rng(12)
    for _ in range(200):
        m = rng.integers(0, 3, size=(9, 3)).astype(float)
        np.testing.assert_array_equal(discretize_darts(m, 3), exhaustive_darts(m, 3))


def test_darts_row_mismatch():
    with pytest.raises(SpaceError):
        discretize_darts(np.zeros((6, 7)), 2)


def test_darts_output_invariants():
    sp = builtin_space("darts")
    rng = np.random.default_rng(0)
    for _ in range(50):
        arch = discretize(sp, random_action(sp, rng))
        assert is_valid_arch(sp, arch)
        for m in arch.blocks:
            assert m.sum(axis=1).max() <= 1
            start = 0
            for k in range(4):
                assert m[start : start + k + 2].sum() == 2
                start += k + 2


# --- discretize -------------------------------------------------------------------


def test_discretize_uniform_nb201_picks_op0():
    sp = builtin_space("nb201")
    arch = discretize(sp, (np.full((6, 5), 0.3),))
    assert arch.ops() == [0] * 6


def test_discretize_darts_fixed_point():
    sp = builtin_space("darts")
    arch = discretize(sp, random_action(sp, np.random.default_rng(5)))
    assert discretize(sp, arch.as_action()) == arch


def test_discretize_ofa_per_block_scan():
    sp = builtin_space("ofa_mbv3")
    a = random_action(sp, np.random.default_rng(6))
    arch = discretize(sp, a)
    for m, got in zip(a, arch.blocks):
        np.testing.assert_array_equal(got, scan_row_argmax(m))


def test_discretize_shape_mismatch():
    sp = builtin_space("nb201")
    with pytest.raises(SpaceError):
        discretize(sp, (np.zeros((5, 5)),))
    with pytest.raises(SpaceError):
        discretize(sp, (np.zeros((6, 5)), np.zeros((6, 5))))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["nb201", "darts", "ofa_mbv3"]), st.integers(0, 2**32 - 1))
def test_discretize_idempotent_and_monotone_invariant(name, seed):
    sp = builtin_space(name)
    a = random_action(sp, np.random.default_rng(seed))
    arch = discretize(sp, a)
    assert discretize(sp, arch.as_action()) == arch
    for f in (lambda x: 3 * x - 7, np.exp, lambda x: x**3, np.arctan):
        assert discretize(sp, tuple(f(m) for m in a)) == arch
    assert is_valid_arch(sp, arch)


# --- keys & strings ------------------------------------------------------------------


def test_arch_key_all_op0():
    sp = builtin_space("nb201")
    arch = discretize(sp, (np.zeros((6, 5)),))
    assert arch_key(sp, arch) == "0:0=0|0:1=0|0:2=0|0:3=0|0:4=0|0:5=0"


def test_arch_key_injective_nb201():
    sp = builtin_space("nb201")
    keys = [arch_key(sp, a) for a in iter_archs(sp)]
    assert len(set(keys)) == len(keys)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["nb201", "darts", "ofa_mbv3"]), st.integers(0, 2**32 - 1))
def test_arch_key_round_trip(name, seed):
    sp = builtin_space(name)
    arch = random_arch(sp, np.random.default_rng(seed))
    back = parse_arch_key(sp, arch.key)
    assert back == arch
    for x, y in zip(back.blocks, arch.blocks):
        np.testing.assert_array_equal(x, y)


def test_darts_key_skips_zero_rows():
    sp = builtin_space("darts")
    arch = random_arch(sp, np.random.default_rng(1))
    assert arch.key.count("|") + 1 == 16


@pytest.mark.parametrize("bad", ["0:0=9", "0:0=0|0:0=1", "1:0=0", "junk", "0:0=0"])
def test_parse_arch_key_rejects(bad):
    with pytest.raises(SpaceError):
        parse_arch_key(builtin_space("nb201"), bad)


def test_nb201_all_skip_string():
    arch = parse_nb201_arch_str(
        "|skip_connect~0|+|skip_connect~0|skip_connect~1|+|skip_connect~0|skip_connect~1|skip_connect~2|"
    )
    assert arch.ops() == [1] * 6
    assert nb201_arch_str(arch) == (
        "|skip_connect~0|+|skip_connect~0|skip_connect~1|+|skip_connect~0|skip_connect~1|skip_connect~2|"
    )


def test_nb201_string_round_trip():
    sp = builtin_space("nb201")
    rng = np.random.default_rng(0)
    for _ in range(1000):
        arch = random_arch(sp, rng)
        assert parse_nb201_arch_str(nb201_arch_str(arch)) == arch


def test_nb201_edge_order():
    # nor_conv_3x3 on edge (1 -> 3) only, which is row 4
    arch = parse_nb201_arch_str("|none~0|+|none~0|none~1|+|none~0|nor_conv_3x3~1|none~2|")
    assert arch.ops() == [0, 0, 0, 0, 4, 0]


@pytest.mark.parametrize("bad", [
    "|conv_7x7~0|+|none~0|none~1|+|none~0|none~1|none~2|",
    "|none~0|+|none~0|none~1|",
    "|none~1|+|none~0|none~1|+|none~0|none~1|none~2|",
    "|none~0|+|none~0|+|none~0|none~1|none~2|",
])
def test_nb201_parse_errors(bad):
    with pytest.raises(SpaceError):
        parse_nb201_arch_str(bad)


# --- random actions, flatten ------------------------------------------------------------


def test_random_action_deterministic_and_in_range():
    sp = builtin_space("darts")
    a1 = random_action(sp, np.random.default_rng(42))
    a2 = random_action(sp, np.random.default_rng(42))
    for x, y in zip(a1, a2):
        np.testing.assert_array_equal(x, y)
        assert x.min() >= 0 and x.max() <= 1


def test_random_action_mean():
    sp = builtin_space("synthetic", 1, 2)
    rng = np.random.default_rng(7)
    vals = np.array([random_action(sp, rng)[0][0, 0] for _ in range(100_000)])
    assert abs(vals.mean() - 0.5) < 0.01


def test_flatten_round_trip():
    sp = builtin_space("darts")
    a = random_action(sp, np.random.default_rng(0))
    v = flatten(a)
    assert v.shape == (196,)
    for x, y in zip(unflatten(sp, v), a):
        np.testing.assert_array_equal(x, y)
    with pytest.raises(SpaceError):
        unflatten(sp, v[:-1])


def test_flatten_is_block_major_row_major():
    sp = builtin_space("ofa_mbv3")
    a = (np.arange(180.0).reshape(20, 9), 1000 + np.arange(15.0).reshape(5, 3))
    v = flatten(a)
    np.testing.assert_array_equal(v[:180], np.arange(180.0))
    np.testing.assert_array_equal(v[180:], 1000 + np.arange(15.0))


def test_random_arch_row_uniformity():
    """Each op frequency per row within 3 sigma of uniform over 1e5 draws."""
    sp = builtin_space("nb201")
    # 30 cells at 3 sigma each: about 8% of seeds trip one cell by chance (seed 0 does)
    rng = np.random.default_rng(1)
    n = 100_000
    counts = np.zeros((6, 5))
    for _ in range(n):
        counts += random_arch(sp, rng).blocks[0]
    p = 1 / 5
    sigma = np.sqrt(n * p * (1 - p))
    assert np.abs(counts - n * p).max() < 3 * sigma


def test_random_arch_darts_valid():
    sp = builtin_space("darts")
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert is_valid_arch(sp, random_arch(sp, rng))
