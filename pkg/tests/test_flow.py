import numpy as np
import pytest

from lmshoot.errors import DivergenceError
from lmshoot.flow import FlowField, export_frames, frame_indices, velocity_at, warp_points
from lmshoot.hamiltonian import ShootingConfig, Trajectory, hamiltonian_derivatives, integrate_forward
from lmshoot.landmarks import load_landmarks, save_landmarks
from lmshoot.reduction import Backend

from conftest import random_instance


@pytest.fixture
def flow(rng):
    q0, p0 = random_instance(rng, 40)
    cfg = ShootingConfig(timesteps=12)
    return FlowField(integrate_forward(q0, p0, cfg)), q0, p0


def rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


class TestVelocity:
    def test_zero_momenta(self, rng):
        q0 = rng.normal(size=(5, 3))
        f = FlowField(integrate_forward(q0, np.zeros_like(q0), ShootingConfig(timesteps=2)))
        assert not velocity_at(np.ones(3), 1, f).any()

    def test_far_point_bound(self, flow):
        f, q0, p0 = flow
        x = q0.max(axis=0) + 10 * 1.5 * 2
        v = velocity_at(x, 0, f)
        assert np.linalg.norm(v) <= len(q0) * np.exp(-50) * np.linalg.norm(p0, axis=1).max()

    @pytest.mark.parametrize("t", [0, 5, 12])
    def test_at_landmarks_equals_hp(self, flow, t):
        f, _, _ = flow
        tr = f.trajectory
        _, hp = hamiltonian_derivatives(tr.q[t], tr.p[t], tr.sigma)
        assert rel(velocity_at(tr.q[t], t, f), hp) <= 1e-12

    def test_single_point_shape(self, flow):
        f, q0, _ = flow
        assert velocity_at(q0[3], 0, f).shape == (3,)

    def test_bad_index(self, flow):
        f, _, _ = flow
        with pytest.raises(IndexError):
            velocity_at(np.zeros(3), 13, f)

    def test_locality(self, rng):
        q0, p0 = random_instance(rng, 20)
        far = np.vstack([q0, [[200.0, 200.0, 200.0]]])
        cfg = ShootingConfig(timesteps=4)
        x = q0[:5]
        pa = np.vstack([p0, [[0.1, 0.0, 0.0]]])
        pb = np.vstack([p0, [[0.5, -0.3, 0.2]]])
        fa = FlowField(integrate_forward(far, pa, cfg))
        fb = FlowField(integrate_forward(far, pb, cfg))
        for t in range(5):
            assert np.max(np.abs(velocity_at(x, t, fa) - velocity_at(x, t, fb))) <= 21 * np.exp(-50)


class TestWarp:
    @pytest.mark.parametrize("strategy", ["sequential", "precompute", "blocked"])
    def test_template_reproduces_endpoint(self, rng, strategy):
        q0, p0 = random_instance(rng, 30)
        be = Backend(strategy)
        tr = integrate_forward(q0, p0, ShootingConfig(timesteps=10), be)
        w = warp_points(q0, FlowField(tr, be))
        assert rel(w, tr.final) <= 1e-12

    def test_zero_field_identity(self, rng):
        q0 = rng.normal(size=(6, 3))
        f = FlowField(integrate_forward(q0, np.zeros_like(q0), ShootingConfig(timesteps=3)))
        pts = rng.normal(size=(11, 3))
        np.testing.assert_array_equal(warp_points(pts, f), pts)

    def test_empty(self, flow):
        f, _, _ = flow
        assert warp_points(np.zeros((0, 3)), f).shape == (0, 3)

    def test_wrong_dim(self, flow):
        f, _, _ = flow
        with pytest.raises(ValueError):
            warp_points(np.zeros((4, 2)), f)

    def test_divergence(self):
        q = np.zeros((2, 2, 3))
        p = np.zeros((2, 2, 3))
        p[0] = [[np.inf, 0, 0], [0, 0, 0]]
        f = FlowField(Trajectory(q, p, 1.5, 1.0))
        with pytest.raises(DivergenceError) as info:
            warp_points(np.array([[5.0, 0, 0], [0.1, 0, 0]]), f)
        assert info.value.step == 1 and info.value.index == 0

    def test_small_momentum_round_trip(self, rng):
        q0 = rng.uniform(0, 5, size=(30, 3))
        p0 = rng.normal(size=(30, 3))
        p0 *= 0.1 * 1.5 / np.linalg.norm(p0, axis=1).max()
        cfg = ShootingConfig(timesteps=20)
        f = FlowField(integrate_forward(q0, p0, cfg))
        pts = rng.uniform(0, 5, size=(50, 3))
        back = warp_points(warp_points(pts, f), f.reversed())
        bound = 5 * cfg.dt * np.linalg.norm(p0, axis=1).max()
        assert np.linalg.norm(back - pts, axis=1).max() <= bound

    def test_f32_flow(self, rng):
        q0, p0 = random_instance(rng, 20)
        tr = integrate_forward(q0, p0, ShootingConfig(timesteps=5, precision="f32"))
        w = warp_points(q0, FlowField(tr))
        assert w.dtype == np.float32
        np.testing.assert_array_equal(w, tr.final)


class TestFrames:
    def test_indices(self):
        assert frame_indices(40, 10) == [0, 10, 20, 30, 40]
        assert frame_indices(40, 1) == list(range(41))
        assert frame_indices(10, 4) == [0, 4, 8, 10]
        with pytest.raises(ValueError):
            frame_indices(5, 0)

    def test_export(self, tmp_path, rng):
        q0, p0 = random_instance(rng, 9)
        save_landmarks(q0, tmp_path / "template.txt")
        f = FlowField(integrate_forward(q0, p0, ShootingConfig(timesteps=40)))
        paths = export_frames(f, tmp_path / "frames", stride=10)
        assert [p.split("/")[-1] for p in paths] == [f"frame_{t:04}.txt" for t in (0, 10, 20, 30, 40)]
        assert (tmp_path / "frames" / "frame_0000.txt").read_text() == (tmp_path / "template.txt").read_text()
        np.testing.assert_array_equal(load_landmarks(paths[-1]).points, f.trajectory.final)

    def test_reversed(self, flow):
        f, _, _ = flow
        r = f.reversed()
        np.testing.assert_array_equal(r.trajectory.q[0], f.trajectory.final)
        np.testing.assert_array_equal(r.trajectory.p[0], -f.trajectory.p[-1])
