import numpy as np
import pytest

from uavtrack.dataio import TimedSample
from uavtrack.geodesy import EnuPoint
from uavtrack.tdoa import (
    SPEED_OF_LIGHT,
    ArrayError,
    GeometryError,
    SensorArray,
    cost,
    simulate_flight,
    simulate_tdoa,
    solve_position,
)

SQUARE = SensorArray(np.array([[-50.0, -50], [50, -50], [-50, 50], [50, 50]]))
CORNERS = SensorArray(np.array([[0.0, 0], [100, 0], [0, 100], [100, 100]]))


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestSensorArray:
    def test_too_few_sensors(self):
        with pytest.raises(ArrayError):
            SensorArray(np.array([[0.0, 0]]))

    def test_too_close_sensors(self):
        with pytest.raises(ArrayError):
            SensorArray(np.array([[0.0, 0], [0.5, 0], [100, 0]]))

    def test_bad_reference(self):
        with pytest.raises(ArrayError):
            SensorArray(np.array([[0.0, 0], [100, 0], [0, 100]]), reference_idx=5)


class TestSimulateTdoa:
    def test_center_of_square_all_zero(self):
        m = simulate_tdoa(SQUARE, EnuPoint(0, 0), 0.0, _rng())
        assert all(abs(dt) < 1e-15 for _, dt in m.deltas)

    def test_two_sensor_direct_distance(self):
        arr = SensorArray(np.array([[0.0, 0], [100, 0]]))
        m = simulate_tdoa(arr, EnuPoint(0, 0), 0.0, _rng())
        assert len(m.deltas) == 1
        idx, dt = m.deltas[0]
        assert idx == 1
        assert dt == pytest.approx(100.0 / SPEED_OF_LIGHT, rel=1e-12)

    def test_deterministic_under_seed(self):
        a = simulate_tdoa(SQUARE, EnuPoint(10, 20), 1e-9, _rng(7))
        b = simulate_tdoa(SQUARE, EnuPoint(10, 20), 1e-9, _rng(7))
        assert a == b

    def test_reference_excluded(self):
        m = simulate_tdoa(SQUARE, EnuPoint(5, 5), 0.0, _rng())
        assert all(i != SQUARE.reference_idx for i, _ in m.deltas)


class TestSolvePosition:
    def test_noiseless_exact_recovery(self):
        m = simulate_tdoa(CORNERS, EnuPoint(30, 40), 0.0, _rng())
        fix = solve_position(CORNERS, m, CORNERS.centroid)
        assert fix.converged
        assert np.hypot(fix.pos.x - 30, fix.pos.y - 40) < 1e-6

    def test_noiseless_round_trip_random_targets(self):
        rng = _rng(3)
        for _ in range(100):
            p = EnuPoint(rng.uniform(-49, 49), rng.uniform(-49, 49))
            m = simulate_tdoa(SQUARE, p, 0.0, rng)
            fix = solve_position(SQUARE, m, SQUARE.centroid)
            assert np.hypot(fix.pos.x - p.x, fix.pos.y - p.y) < 1e-6

    def test_noisy_near_grid_minimum(self):
        # brute-force grid oracle at 0.5 m over a local window
        rng = _rng(11)
        truth = EnuPoint(30, 40)
        m = simulate_tdoa(CORNERS, truth, 3.3e-9, rng)
        fix = solve_position(CORNERS, m, CORNERS.centroid)
        xs = np.arange(truth.x - 20, truth.x + 20, 0.5)
        ys = np.arange(truth.y - 20, truth.y + 20, 0.5)
        best, best_c = None, np.inf
        for x in xs:
            for y in ys:
                c = cost(CORNERS, m, EnuPoint(x, y))
                if c < best_c:
                    best, best_c = (x, y), c
        assert np.hypot(fix.pos.x - best[0], fix.pos.y - best[1]) < 1.0

    def test_descent_property(self):
        rng = _rng(5)
        for _ in range(20):
            p = EnuPoint(rng.uniform(-40, 40), rng.uniform(-40, 40))
            m = simulate_tdoa(SQUARE, p, 2e-9, rng)
            init = EnuPoint(rng.uniform(-40, 40), rng.uniform(-40, 40))
            fix = solve_position(SQUARE, m, init)
            assert cost(SQUARE, m, fix.pos) <= cost(SQUARE, m, init) + 1e-12

    def test_translation_equivariance(self):
        shift = np.array([123.0, -456.0])
        arr2 = SensorArray(SQUARE.positions + shift)
        p = EnuPoint(10, 20)
        m1 = simulate_tdoa(SQUARE, p, 0.0, _rng())
        m2 = simulate_tdoa(arr2, EnuPoint(p.x + shift[0], p.y + shift[1]), 0.0, _rng())
        f1 = solve_position(SQUARE, m1, SQUARE.centroid)
        f2 = solve_position(arr2, m2, arr2.centroid)
        assert f2.pos.x - f1.pos.x == pytest.approx(shift[0], abs=1e-9)
        assert f2.pos.y - f1.pos.y == pytest.approx(shift[1], abs=1e-9)

    def test_two_sensors_degenerate(self):
        arr = SensorArray(np.array([[0.0, 0], [100, 0]]))
        m = simulate_tdoa(arr, EnuPoint(10, 10), 0.0, _rng())
        with pytest.raises(GeometryError):
            solve_position(arr, m, EnuPoint(0, 0))

    def test_collinear_sensors_degenerate(self):
        arr = SensorArray(np.array([[0.0, 0], [100, 0], [200, 0]]))
        m = simulate_tdoa(arr, EnuPoint(50, 0), 0.0, _rng())
        with pytest.raises(GeometryError):
            solve_position(arr, m, EnuPoint(50, 0))

    def test_monotone_degradation_with_noise(self):
        rng = _rng(9)
        rmse = []
        for sigma_ns in (0.0, 1.0, 3.0, 10.0):
            errs = []
            for k in range(200):
                p = EnuPoint(rng.uniform(-45, 45), rng.uniform(-45, 45))
                m = simulate_tdoa(SQUARE, p, sigma_ns * 1e-9, rng)
                fix = solve_position(SQUARE, m, SQUARE.centroid)
                errs.append(np.hypot(fix.pos.x - p.x, fix.pos.y - p.y))
            rmse.append(np.sqrt(np.mean(np.square(errs))))
        assert all(a <= b + 1e-9 for a, b in zip(rmse, rmse[1:]))


class TestSimulateFlight:
    def _truth(self, n=20):
        return [TimedSample(1000 * k, EnuPoint(2.0 * k - 20, 1.0 * k - 10)) for k in range(n)]

    def test_noiseless_chain_matches_truth(self):
        rf, dropped = simulate_flight(self._truth(), SQUARE, 0.0, rng_seed=1)
        assert dropped == 0
        for t, r in zip(self._truth(), rf):
            assert np.hypot(t.pos.x - r.pos.x, t.pos.y - r.pos.y) < 1e-5

    def test_deterministic_under_seed(self):
        a, _ = simulate_flight(self._truth(), SQUARE, 2e-9, rng_seed=42)
        b, _ = simulate_flight(self._truth(), SQUARE, 2e-9, rng_seed=42)
        assert a == b

    def test_decimation(self):
        truth = [TimedSample(100 * k, EnuPoint(0.1 * k, 0)) for k in range(100)]
        rf, _ = simulate_flight(truth, SQUARE, 0.0, rng_seed=1, decimate_ms=1000)
        assert [s.t_ms for s in rf] == list(range(0, 10000, 1000))

    def test_outlier_injection(self):
        rf, _ = simulate_flight(
            self._truth(100), SQUARE, 0.0, rng_seed=3, outlier_rate=0.5, outlier_max_m=200.0
        )
        errs = [np.hypot(t.pos.x - r.pos.x, t.pos.y - r.pos.y) for t, r in zip(self._truth(100), rf)]
        assert max(errs) > 10  # some glitches injected
        assert max(errs) <= 200 + 1e-6
