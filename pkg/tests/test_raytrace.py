import numpy as np
import pytest

from mvaslam.geometry import Surface, WallSegment
from mvaslam.raytrace import (
    LOS,
    Environment,
    PathClass,
    detection_probability,
    double_bounce,
    path_available,
    segment_intersection,
    single_bounce,
)

from oracles import AMBIGUOUS, oracle_path_available


def rect_room():
    walls = [
        WallSegment([5.0, -3.5], [5.0, 3.5], 0),
        WallSegment([-5.0, -3.5], [-5.0, 3.5], 1),
        WallSegment([-5.0, 3.5], [5.0, 3.5], 2),
        WallSegment([-5.0, -3.5], [5.0, -3.5], 3),
    ]
    surfaces = [Surface.from_segment(w.a, w.b) for w in walls]
    return surfaces, Environment(walls=walls)


def nonrect_room():
    walls = [
        WallSegment([-2.0, 2.5], [-2.0, 7.0], 0),
        WallSegment([-2.0, 7.0], [5.5, 7.0], 1),
        WallSegment([5.5, 1.0], [5.5, 7.0], 2),
        WallSegment([0.5, 0.36], [5.5, 1.0], 3),
    ]
    surfaces = [Surface.from_segment(w.a, w.b) for w in walls]
    return surfaces, Environment(walls=walls)


def all_paths(n_surfaces):
    paths = [LOS]
    paths += [single_bounce(s) for s in range(n_surfaces)]
    paths += [double_bounce(s, t) for s in range(n_surfaces)
              for t in range(n_surfaces) if t != s]
    return paths


def test_segment_intersection_perpendicular():
    hit = segment_intersection([0, 0], [2, 0], [1, -1], [1, 1])
    assert np.allclose(hit, [1.0, 0.0])


def test_segment_intersection_disjoint_collinear():
    assert segment_intersection([0, 0], [1, 0], [2, 0], [3, 0]) is None


def test_segment_intersection_symmetric_cross():
    hit = segment_intersection([0, 0], [1, 1], [0, 1], [1, 0])
    assert np.allclose(hit, [0.5, 0.5])


def test_segment_intersection_collinear_overlap_nearest():
    hit = segment_intersection([0, 0], [4, 0], [3, 0], [6, 0])
    assert np.allclose(hit, [3.0, 0.0])
    hit = segment_intersection([0, 0], [4, 0], [-1, 0], [6, 0])
    assert np.allclose(hit, [0.0, 0.0])


def test_segment_intersection_parallel_none():
    assert segment_intersection([0, 0], [1, 0], [0, 1], [1, 1]) is None


def test_los_open_room():
    surfaces, env = rect_room()
    assert path_available([-2.0, 1.0], [3.0, -2.0], LOS, surfaces, env)


def test_los_blocked_by_obstacle():
    surfaces, env = rect_room()
    env2 = Environment(walls=env.walls,
                       blockers=[WallSegment([0.0, -3.0], [1.0, 2.0])])
    assert not path_available([-2.0, 1.0], [3.0, -2.0], LOS, surfaces, env2)


def test_los_symmetry():
    surfaces, env = rect_room()
    env2 = Environment(walls=env.walls,
                       blockers=[WallSegment([0.0, -3.0], [1.0, 2.0])])
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = rng.uniform([-4.5, -3.0], [4.5, 3.0])
        b = rng.uniform([-4.5, -3.0], [4.5, 3.0])
        assert (path_available(a, b, LOS, surfaces, env2)
                == path_available(b, a, LOS, surfaces, env2))


def test_blocker_removal_monotonicity():
    surfaces, env = rect_room()
    blocker = WallSegment([0.0, -3.0], [0.5, 2.0])
    env_b = Environment(walls=env.walls, blockers=[blocker])
    rng = np.random.default_rng(6)
    for _ in range(200):
        agent = rng.uniform([-4.5, -3.0], [4.5, 3.0])
        pa = rng.uniform([-4.5, -3.0], [4.5, 3.0])
        for path in all_paths(4):
            if path_available(agent, pa, path, surfaces, env_b):
                assert path_available(agent, pa, path, surfaces, env)


def test_perpendicular_double_bounce_exactly_one_order():
    # perpendicular walls, one anchor: at any interior position exactly one
    # of the two bounce orders is traceable (both map to the same image)
    walls = [WallSegment([5.0, -6.0], [5.0, 4.0], 0),
             WallSegment([-3.0, 4.0], [5.0, 4.0], 1)]
    surfaces = [Surface.from_segment(w.a, w.b) for w in walls]
    env = Environment(walls=walls)
    pa = np.array([1.0, 2.0])
    rng = np.random.default_rng(9)
    checked = 0
    for _ in range(1000):
        agent = rng.uniform([-2.5, -5.5], [4.5, 3.5])
        against = [oracle_path_available(agent, pa, double_bounce(s, t), surfaces, env)
                   for s, t in ((0, 1), (1, 0))]
        if AMBIGUOUS in against:
            continue
        got = [path_available(agent, pa, double_bounce(s, t), surfaces, env)
               for s, t in ((0, 1), (1, 0))]
        assert got == against
        assert sum(got) <= 1
        checked += 1
    assert checked > 900


@pytest.mark.parametrize("room", [rect_room, nonrect_room])
def test_oracle_equivalence(room):
    surfaces, env = room()
    lo = np.min([[w.a, w.b] for w in env.walls], axis=(0, 1))
    hi = np.max([[w.a, w.b] for w in env.walls], axis=(0, 1))
    rng = np.random.default_rng(1234)
    pas = [rng.uniform(lo + 0.5, hi - 0.5) for _ in range(2)]
    paths = all_paths(len(surfaces))
    checked = skipped = 0
    for _ in range(1000):
        agent = rng.uniform(lo + 0.2, hi - 0.2)
        pa = pas[int(rng.integers(2))]
        for path in paths:
            expected = oracle_path_available(agent, pa, path, surfaces, env)
            if expected is AMBIGUOUS:
                skipped += 1
                continue
            assert path_available(agent, pa, path, surfaces, env) == expected, \
                f"disagreement at agent={agent}, pa={pa}, path={path}"
            checked += 1
    assert checked > 10 * skipped


def test_detection_probability():
    assert detection_probability(LOS, True, 0.95) == pytest.approx(0.95)
    assert detection_probability(single_bounce(1), False, 0.95) == 0.0
    assert detection_probability(double_bounce(0, 1), True, 0.7) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        detection_probability(LOS, True, 1.5)


def test_path_class_validation():
    with pytest.raises(ValueError):
        PathClass(s=1, s2=1)
    with pytest.raises(ValueError):
        PathClass(s=None, s2=3)
    assert single_bounce(2).kind == "single"
    assert double_bounce(0, 1).kind == "double"
    assert LOS.kind == "los"


def test_environment_validation():
    surfaces, env = rect_room()
    env.validate(surfaces)
    bad = Environment(walls=[WallSegment([5.0, -3.5], [5.1, 3.5], 0)])
    with pytest.raises(Exception):
        bad.validate(surfaces)


def test_reflector_extent():
    surfaces, env = rect_room()
    lo, hi = env.reflector_extent(0, surfaces)
    assert hi - lo == pytest.approx(7.0)
    assert Environment().reflector_extent(0, surfaces) is None
