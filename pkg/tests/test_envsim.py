"""Maze generation, step semantics, rendering backends, golden trace."""

from pathlib import Path

import numpy as np
import pytest

from clustercount.envsim import (ACTIONS, EpisodeDoneError, MazeEnv, MazeSpec,
                                 VisitationCounter, generate, read_rollout_csv,
                                 scripted_rollout, snap_index,
                                 write_rollout_csv)
from clustercount.kernels import backend_name, render_scene

DATA = Path(__file__).parent / "data"


class TestGeneration:
    def test_deterministic(self):
        a = generate(seed=3, n_rooms=5)
        b = generate(seed=3, n_rooms=5)
        assert np.array_equal(a.occupancy, b.occupancy)
        assert np.array_equal(a.texgrid, b.texgrid)
        assert np.array_equal(a.palettes, b.palettes)
        assert a.start == b.start

    def test_seed_changes_palettes(self):
        a = generate(seed=3, n_rooms=5)
        b = generate(seed=4, n_rooms=5)
        assert not np.array_equal(a.palettes, b.palettes)

    def test_all_rooms_connected(self):
        # flood fill from the start cell must reach every free cell
        spec = generate(seed=0, n_rooms=9, room_size=5)
        occ = spec.occupancy
        start = (int(spec.start[1]), int(spec.start[0]))
        seen = {start}
        stack = [start]
        while stack:
            r, c = stack.pop()
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < occ.shape[0] and 0 <= nc < occ.shape[1] \
                        and occ[nr, nc] == 0 and (nr, nc) not in seen:
                    seen.add((nr, nc))
                    stack.append((nr, nc))
        assert len(seen) == int((occ == 0).sum())

    def test_room_count_scales_grid(self):
        small = generate(seed=1, n_rooms=2, room_size=5)
        big = generate(seed=1, n_rooms=9, room_size=5)
        assert big.occupancy.size > small.occupancy.size

    def test_spec_text_round_trip(self):
        spec = generate(seed=11, n_rooms=4, room_size=5,
                        episode_length=400, move_quantum=0.25)
        back = MazeSpec.from_text(spec.to_text())
        assert np.array_equal(spec.occupancy, back.occupancy)
        assert np.array_equal(spec.texgrid, back.texgrid)
        assert np.allclose(spec.palettes, back.palettes)
        assert spec.start == back.start
        assert spec.move_quantum == back.move_quantum

    def test_frozen_spec_still_parses(self):
        spec = MazeSpec.from_text((DATA / "golden_maze.txt").read_text())
        assert spec.occupancy.shape == (13, 13)


class TestStepSemantics:
    def _env(self, **kw):
        spec = generate(seed=11, n_rooms=4, room_size=5, episode_length=400,
                        move_quantum=0.25, turn_quantum=90.0)
        return MazeEnv(spec, **kw)

    def test_forward_moves_by_quantum(self):
        env = self._env()
        state, _ = env.reset()
        x0, y0 = state.x, state.y
        forward = ACTIONS.index("forward")
        state, _, _, _ = env.step(state, forward)
        moved = abs(state.x - x0) + abs(state.y - y0)
        assert moved == pytest.approx(env.spec.move_quantum)

    def test_turn_changes_heading_only(self):
        env = self._env()
        state, _ = env.reset()
        left = ACTIONS.index("left")
        s2, _, _, _ = env.step(state, left)
        assert (s2.x, s2.y) == (state.x, state.y)
        delta = abs(s2.heading_deg - state.heading_deg) % 360.0
        assert min(delta, 360.0 - delta) == pytest.approx(env.spec.turn_quantum)

    def test_wait_is_identity_on_pose(self):
        env = self._env()
        state, _ = env.reset()
        wait = ACTIONS.index("wait")
        s2, _, _, _ = env.step(state, wait)
        assert (s2.x, s2.y, s2.heading_deg) == (state.x, state.y, state.heading_deg)

    def test_walls_block(self):
        env = self._env()
        state, _ = env.reset()
        forward = ACTIONS.index("forward")
        # march until blocked; position must stay inside free space forever
        for _ in range(200):
            state, _, _, done = env.step(state, forward)
            r, c = int(state.y), int(state.x)
            assert env.spec.occupancy[r, c] == 0
            if done:
                break

    def test_step_after_done_raises(self):
        spec = generate(seed=11, n_rooms=2, room_size=5, episode_length=8,
                        move_quantum=0.25)
        env = MazeEnv(spec, reward_mode="intrinsic_only")
        state, _ = env.reset()
        for _ in range(env.horizon):
            state, _, _, done = env.step(state, 0)
        assert done
        with pytest.raises(EpisodeDoneError):
            env.step(state, 0)

    def test_intrinsic_only_reward_is_zero(self):
        env = self._env(reward_mode="intrinsic_only")
        state, _ = env.reset()
        for a in (0, 1, 2, 3):
            state, _, reward, _ = env.step(state, a)
            assert reward == 0.0

    def test_tabular_observation_is_onehot(self):
        env = self._env(obs_mode="tabular")
        state, obs = env.reset()
        assert obs.shape == (env.n_states,)
        assert obs.sum() == 1.0 and obs.max() == 1.0

    def test_noisy_adds_channels_and_changes_per_call(self):
        env = self._env(reward_mode="intrinsic_only", noisy=True)
        state, obs = env.reset()
        assert obs.shape == (42, 42, 6)
        again = env.observe(state)
        assert np.array_equal(obs[:, :, :3], again[:, :, :3])
        assert not np.array_equal(obs[:, :, 3:], again[:, :, 3:])

    def test_pixels_observation_deterministic(self):
        env = self._env()
        state, obs = env.reset()
        assert np.array_equal(obs, env.observe(state))
        assert obs.dtype == np.float32
        assert obs.min() >= 0.0 and obs.max() <= 1.0


class TestGoldenRollout:
    def test_replay_matches_frozen_trace(self):
        actions = [int(a) for a in
                   (DATA / "golden_rollout_actions.txt").read_text().strip().split(",")]
        spec = generate(seed=11, n_rooms=4, room_size=5, episode_length=400,
                        move_quantum=0.25, turn_quantum=90.0)
        env = MazeEnv(spec, reward_mode="sparse")
        rows = scripted_rollout(env, actions)
        golden = read_rollout_csv(DATA / "golden_rollout.csv")
        assert len(rows) == len(golden)
        for got, want in zip(rows, golden):
            assert got["step"] == want["step"]
            assert got["action"] == want["action"]
            assert got["x"] == pytest.approx(want["x"], abs=1e-9)
            assert got["y"] == pytest.approx(want["y"], abs=1e-9)
            assert got["heading"] == pytest.approx(want["heading"], abs=1e-9)
            assert got["reward"] == pytest.approx(want["reward"], abs=1e-9)

    def test_rollout_csv_round_trip(self, tmp_path):
        rows = [{"step": 0, "action": 2, "x": 1.25, "y": 3.5,
                 "heading": 90.0, "reward": -0.0001}]
        path = tmp_path / "r.csv"
        write_rollout_csv(path, rows)
        assert read_rollout_csv(path) == rows

    def test_rollout_csv_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("nope\n1,2,3\n")
        with pytest.raises(ValueError):
            read_rollout_csv(path)


class TestBackends:
    def test_backends_bit_identical(self):
        pure = pytest.importorskip("clustercount._raycast_py")
        try:
            from clustercount import _raycast as compiled
        except ImportError:
            pytest.skip("compiled backend not built")
        spec = generate(seed=5, n_rooms=4, room_size=5)
        rng = np.random.default_rng(0)
        free = np.argwhere(spec.occupancy == 0)
        for _ in range(20):
            r, c = free[rng.integers(free.shape[0])]
            x = float(c) + rng.uniform(0.2, 0.8)
            y = float(r) + rng.uniform(0.2, 0.8)
            heading = float(rng.uniform(0, 360))
            tex = int(spec.texgrid[int(y), int(x)])
            occ = np.ascontiguousarray(spec.occupancy, dtype=np.uint8)
            tg = np.ascontiguousarray(spec.texgrid, dtype=np.int32)
            pal = np.ascontiguousarray(spec.palettes, dtype=np.float64)
            a = np.empty((42, 42, 3), dtype=np.float32)
            b = np.empty((42, 42, 3), dtype=np.float32)
            pure.render_columns(occ, tg, pal, x, y, heading, 66.0, tex, a)
            compiled.render_columns(occ, tg, pal, x, y, heading, 66.0, tex, b)
            assert np.array_equal(a, b)

    def test_backend_name_reports(self):
        assert backend_name() in ("compiled", "pure")

    def test_render_validates_input(self):
        spec = generate(seed=5, n_rooms=2, room_size=5)
        with pytest.raises(ValueError):
            render_scene(spec.occupancy, spec.texgrid, spec.palettes,
                         1.5, 1.5, 0.0, 66.0, 999, 42, 42)


class TestVisitationCounter:
    def test_snap_half_away_from_zero(self):
        assert snap_index(0.125, 0.25) == 1
        assert snap_index(-0.125, 0.25) == -1
        assert snap_index(0.124, 0.25) == 0
        assert snap_index(-0.124, 0.25) == 0

    def test_unique_and_total(self):
        vc = VisitationCounter(quantum=0.05)
        vc.record(1.0, 1.0)
        vc.record(1.0, 1.0)
        vc.record(1.03, 1.0)   # snaps to a different 0.05 cell
        assert vc.total == 3
        assert vc.unique_visits == 2
        assert sum(vc.as_dict().values()) == 3

    def test_quantum_validation(self):
        with pytest.raises(ValueError):
            VisitationCounter(quantum=0.0)
