import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evigrid.errors import DimensionMismatch, TotalConflict
from evigrid.grid import (
    BeliefMass,
    CellClass,
    Eogm,
    GridConfig,
    Pose2,
    Sgm,
    classify_arrays,
    classify_mass,
    combine_arrays,
    combine_masses,
    discount_mass,
    pignistic,
    transform_grid,
    world_to_cell,
)
from oracles import dempster_enum, remap_oracle

DEFAULT = GridConfig()


def masses():
    """Valid belief masses drawn from the simplex."""
    return st.tuples(st.floats(0, 1), st.floats(0, 1)).map(
        lambda t: BeliefMass.from_channels(t[0], (1.0 - t[0]) * t[1]))


def close(a, b, tol):
    return all(abs(x - y) <= tol for x, y in zip(a.as_tuple(), b.as_tuple()))


# --- configuration and cells -------------------------------------------------

def test_grid_defaults():
    assert (DEFAULT.width, DEFAULT.height, DEFAULT.resolution) == (128, 128, 0.33)
    assert DEFAULT.center == (64, 64)


@pytest.mark.parametrize("kw", [dict(width=0), dict(height=0), dict(resolution=0.0), dict(resolution=-1)])
def test_grid_config_rejects_invalid(kw):
    with pytest.raises(ValueError):
        GridConfig(**kw)


def test_world_to_cell_center():
    assert world_to_cell((0.0, 0.0), DEFAULT) == (64, 64)


def test_world_to_cell_outside():
    assert world_to_cell((21.5, 0.0), DEFAULT) is None


def test_world_to_cell_floor_oracle():
    half = 128 * 0.33 / 2  # 21.12
    expected = (math.floor((half - 1.0) / 0.33), math.floor((half + 1.0) / 0.33))
    assert expected == (60, 67)
    assert world_to_cell((1.0, -1.0), DEFAULT) == expected


def test_pose_heading_normalised():
    assert Pose2(0, 0, -math.pi).heading == pytest.approx(math.pi)
    assert Pose2(0, 0, 3 * math.pi).heading == pytest.approx(math.pi)
    assert -math.pi < Pose2(0, 0, -3.0 * math.pi / 2).heading <= math.pi


# --- belief masses -----------------------------------------------------------

def test_belief_mass_rejects_bad_sum():
    with pytest.raises(ValueError):
        BeliefMass(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        BeliefMass(-0.1, 0.6, 0.5)


def test_combine_vacuous_identity_example():
    out = combine_masses(BeliefMass(0.6, 0.0, 0.4), BeliefMass(0, 0, 1))
    assert close(out, BeliefMass(0.6, 0.0, 0.4), 1e-12)


def test_combine_enumeration_example():
    a, b = (0.6, 0.0, 0.4), (0.5, 0.0, 0.5)
    expected = dempster_enum(a, b)
    assert expected == pytest.approx((0.8, 0.0, 0.2), abs=1e-12)
    out = combine_masses(BeliefMass(*a), BeliefMass(*b))
    assert out.as_tuple() == pytest.approx(expected, abs=1e-12)


def test_combine_total_conflict():
    with pytest.raises(TotalConflict):
        combine_masses(BeliefMass(1, 0, 0), BeliefMass(0, 1, 0))


def test_discount_examples():
    m = BeliefMass(0.8, 0.1, 0.1)
    assert close(discount_mass(m, 1.0), m, 1e-15)
    assert close(discount_mass(m, 0.0), BeliefMass(0, 0, 1), 1e-15)
    assert discount_mass(BeliefMass(0.5, 0.3, 0.2), 0.5).as_tuple() == pytest.approx((0.25, 0.15, 0.6), abs=1e-12)
    with pytest.raises(ValueError):
        discount_mass(m, 1.5)


def test_pignistic_examples():
    assert pignistic(BeliefMass(0, 0, 1)) == 0.5
    assert pignistic(BeliefMass(1, 0, 0)) == 1.0
    assert pignistic(BeliefMass(0.6, 0.2, 0.2)) == pytest.approx(0.7, abs=1e-12)


def test_classify_examples():
    assert classify_mass(BeliefMass(0.7, 0.1, 0.2)) == CellClass.OCCUPIED
    assert classify_mass(BeliefMass(1 / 3, 1 / 3, 1 / 3)) == CellClass.OCCLUDED
    assert classify_mass(BeliefMass(0.2, 0.5, 0.3)) == CellClass.FREE
    # remaining ties: Occupied beats Free
    assert classify_mass(BeliefMass(0.4, 0.4, 0.2)) == CellClass.OCCUPIED


@given(masses(), masses())
def test_combine_closure(a, b):
    k = a.m_o * b.m_f + a.m_f * b.m_o
    if 1 - k <= 1e-12:
        return
    out = combine_masses(a, b)
    assert abs(sum(out.as_tuple()) - 1) <= 1e-9
    assert all(0 <= v <= 1 for v in out.as_tuple())


@given(masses())
def test_combine_vacuous_identity(m):
    assert close(combine_masses(m, BeliefMass(0, 0, 1)), m, 1e-12)
    assert close(combine_masses(BeliefMass(0, 0, 1), m), m, 1e-12)


@given(masses(), masses(), masses())
def test_combine_commutative_associative(a, b, c):
    def k(x, y):
        return x.m_o * y.m_f + x.m_f * y.m_o

    if k(a, b) > 0.99 or k(b, c) > 0.99:
        return
    ab = combine_masses(a, b)
    bc = combine_masses(b, c)
    if k(ab, c) > 0.99 or k(a, bc) > 0.99:
        return
    assert close(ab, combine_masses(b, a), 1e-12)
    assert close(combine_masses(ab, c), combine_masses(a, bc), 1e-12)


@given(masses(), masses())
def test_combine_matches_enumeration(a, b):
    k = a.m_o * b.m_f + a.m_f * b.m_o
    if k > 0.99:
        return
    assert combine_masses(a, b).as_tuple() == pytest.approx(dempster_enum(a.as_tuple(), b.as_tuple()), abs=1e-12)


@given(masses(), st.floats(0, 1))
def test_discount_closure(m, g):
    out = discount_mass(m, g)
    assert abs(sum(out.as_tuple()) - 1) <= 1e-9


@given(masses())
def test_pignistic_half_iff_equal(m):
    p = pignistic(m)
    assert 0 <= p <= 1
    if m.m_o == m.m_f:
        assert p == 0.5
    elif abs(m.m_o - m.m_f) > 4 * np.finfo(float).eps:
        # smaller gaps are below the float spacing around 0.5 and cannot be told apart
        assert p != 0.5


@given(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)).filter(lambda t: sum(t) > 0))
def test_classify_invariant_under_swapping_non_max(raw):
    total = sum(raw)
    values = [v / total for v in raw]
    values[2] = 1.0 - values[0] - values[1]
    if min(values) < 0 or len({*values}) < 3:
        return
    i_max = int(np.argmax(values))
    base = classify_mass(BeliefMass(*values))
    others = [i for i in range(3) if i != i_max]
    swapped = list(values)
    swapped[others[0]], swapped[others[1]] = swapped[others[1]], swapped[others[0]]
    assert classify_mass(BeliefMass(*swapped)) == base


def test_classify_arrays_matches_scalar(rng):
    o = rng.random(500)
    f = rng.random(500) * (1 - o)
    m = np.stack([o, f], axis=1)
    m[:10] = [1 / 3, 1 / 3]
    m[10:20] = [0.4, 0.4]
    m[20:30] = [0.0, 0.0]
    got = classify_arrays(m)
    want = [classify_mass(BeliefMass.from_channels(a, b)) for a, b in m]
    assert list(got) == [int(w) for w in want]


def test_combine_arrays_flags_conflict():
    a = np.array([[1.0, 0.0], [0.5, 0.0]])
    b = np.array([[0.0, 1.0], [0.5, 0.0]])
    out, conflict = combine_arrays(a, b)
    assert conflict.tolist() == [True, False]
    assert out[1] == pytest.approx([0.75, 0.0])


# --- containers ----------------------------------------------------------------

def test_eogm_rejects_invalid_masses():
    cfg = GridConfig(2, 2, 1.0)
    cells = np.zeros((2, 2, 2))
    cells[0, 0] = [0.7, 0.7]
    with pytest.raises(ValueError):
        Eogm(cfg, cells)
    with pytest.raises(DimensionMismatch):
        Eogm(cfg, np.zeros((3, 2, 2)))


def test_sgm_rejects_bad_codes():
    with pytest.raises(ValueError):
        Sgm(GridConfig(2, 2, 1.0), np.full((2, 2), 3))


def test_grids_are_immutable():
    g = Sgm.occluded(GridConfig(4, 4, 1.0))
    with pytest.raises(ValueError):
        g.cells[0, 0] = 0


# --- transforms ----------------------------------------------------------------

def random_sgm(rng, cfg):
    return Sgm(cfg, rng.integers(0, 3, cfg.shape))


def test_transform_identity(rng):
    g = random_sgm(rng, DEFAULT)
    p = Pose2(3.0, -2.0, 0.4)
    out = transform_grid(g, p, p)
    assert np.array_equal(out.cells, g.cells)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_transform_exact_shift(rng, k):
    cfg = GridConfig(32, 24, 0.25)  # 0.25 is exact in binary
    g = random_sgm(rng, cfg)
    out = transform_grid(g, Pose2(), Pose2(k * 0.25, 0.0, 0.0))
    # ego moved +x, so content shifts k columns toward -x
    assert np.array_equal(out.cells[:, :-k], g.cells[:, k:])
    assert np.all(out.cells[:, -k:] == CellClass.OCCLUDED)


def test_transform_matches_trig_oracle(rng):
    cfg = GridConfig(40, 30, 0.33)
    g = random_sgm(rng, cfg)
    to = Pose2(0.5, 0.2, 0.1)
    out = transform_grid(g, Pose2(), to)
    want = remap_oracle(g.cells, cfg.resolution, (0, 0, 0), (0.5, 0.2, 0.1), CellClass.OCCLUDED)
    assert np.array_equal(out.cells, want)


def test_transform_matches_oracle_general_poses(rng):
    cfg = GridConfig(24, 24, 0.4)
    g = random_sgm(rng, cfg)
    a, b = Pose2(10.0, -3.0, 2.5), Pose2(10.7, -2.1, -2.9)
    out = transform_grid(g, a, b)
    want = remap_oracle(g.cells, cfg.resolution, a.as_tuple(), b.as_tuple(), CellClass.OCCLUDED)
    assert np.array_equal(out.cells, want)
