"""Deterministic first-person maze simulator.

The world is a chain of square rooms on a grid, connected by single-cell
doorways, with a goal in the last room of the chain.  The agent has a
continuous pose (x, y, heading) and four discrete actions: wait, turn left,
turn right, move forward.  Forward moves are blocked by walls.  Observations
are either raycast RGB frames (float32 in [0, 1], one palette per room so
rooms are visually distinct) or one-hot vectors over (cell, heading) for
tabular experiments.

All randomness in world generation flows from the generation seed; stepping and
rendering are pure functions of state, so rollouts are reproducible to the
bit.  Time is counted in decision steps: one ``step`` call represents
``frame_skip`` simulator frames, and an episode lasts
``episode_length // frame_skip`` decisions.
"""

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .kernels import render_scene
from .rng import np_generator

ACTIONS = ("wait", "left", "right", "forward")
ACTION_WAIT, ACTION_LEFT, ACTION_RIGHT, ACTION_FORWARD = range(4)

STEP_PENALTY = -0.0001
GOAL_REWARD = 1.0


class GenerationError(RuntimeError):
    """World generation produced an unusable layout."""


class EpisodeDoneError(RuntimeError):
    """step() was called on a state whose episode already ended."""


@dataclass(frozen=True)
class SimState:
    x: float
    y: float
    heading_deg: float
    step: int = 0
    done: bool = False


@dataclass
class MazeSpec:
    """Immutable-by-convention description of one generated world."""

    seed: int
    n_rooms: int
    room_size: int
    occupancy: np.ndarray      # (gh, gw) uint8, 1 = wall
    texgrid: np.ndarray        # (gh, gw) int32 palette index per cell
    palettes: np.ndarray       # (n_rooms + 1, 7) float64
    start: tuple[float, float]
    start_heading: float
    goal_cell: tuple[int, int]  # (row, col)
    episode_length: int = 2100
    frame_skip: int = 4
    move_quantum: float = 0.25
    turn_quantum: float = 90.0

    def to_text(self) -> str:
        payload = {
            "seed": self.seed,
            "n_rooms": self.n_rooms,
            "room_size": self.room_size,
            "occupancy": self.occupancy.tolist(),
            "texgrid": self.texgrid.tolist(),
            "palettes": self.palettes.tolist(),
            "start": list(self.start),
            "start_heading": self.start_heading,
            "goal_cell": list(self.goal_cell),
            "episode_length": self.episode_length,
            "frame_skip": self.frame_skip,
            "move_quantum": self.move_quantum,
            "turn_quantum": self.turn_quantum,
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_text(cls, text: str) -> "MazeSpec":
        d = json.loads(text)
        return cls(
            seed=d["seed"], n_rooms=d["n_rooms"], room_size=d["room_size"],
            occupancy=np.asarray(d["occupancy"], dtype=np.uint8),
            texgrid=np.asarray(d["texgrid"], dtype=np.int32),
            palettes=np.asarray(d["palettes"], dtype=np.float64),
            start=tuple(d["start"]), start_heading=d["start_heading"],
            goal_cell=tuple(d["goal_cell"]),
            episode_length=d["episode_length"], frame_skip=d["frame_skip"],
            move_quantum=d["move_quantum"], turn_quantum=d["turn_quantum"],
        )


def generate(seed: int, n_rooms: int = 9, room_size: int = 5,
             episode_length: int = 2100, frame_skip: int = 4,
             move_quantum: float = 0.25, turn_quantum: float = 90.0) -> MazeSpec:
    """Build a serpentine chain of rooms, verify connectivity, derive palettes.

    Rooms sit on a near-square grid visited boustrophedon (left-to-right,
    then right-to-left on the next row), so consecutive chain rooms always
    share a wall.  Doorway positions come from the seed.  The start pose is
    the center of room 0 and the goal the center of the last room.
    """
    if n_rooms < 1:
        raise GenerationError(f"need at least one room, got {n_rooms}")
    if room_size < 2:
        raise GenerationError(f"room_size must be >= 2, got {room_size}")
    if episode_length < 1 or frame_skip < 1 or episode_length < frame_skip:
        raise GenerationError(
            f"bad horizon: episode_length={episode_length} frame_skip={frame_skip}")
    if not move_quantum > 0:
        raise GenerationError(f"move_quantum must be positive, got {move_quantum}")
    turns = 360.0 / turn_quantum if turn_quantum > 0 else 0.0
    if turns < 1 or abs(turns - round(turns)) > 1e-9:
        raise GenerationError(
            f"turn_quantum must divide 360 evenly, got {turn_quantum}")

    rng = np_generator(seed, "maze-layout")
    cols = math.ceil(math.sqrt(n_rooms))
    rows = math.ceil(n_rooms / cols)
    pitch = room_size + 1
    gh = rows * pitch + 1
    gw = cols * pitch + 1

    chain = []
    for rr in range(rows):
        rcs = range(cols) if rr % 2 == 0 else range(cols - 1, -1, -1)
        for rc in rcs:
            if len(chain) < n_rooms:
                chain.append((rr, rc))

    occupancy = np.ones((gh, gw), dtype=np.uint8)
    roomgrid = np.full((gh, gw), -1, dtype=np.int32)
    for idx, (rr, rc) in enumerate(chain):
        r0 = rr * pitch + 1
        c0 = rc * pitch + 1
        occupancy[r0:r0 + room_size, c0:c0 + room_size] = 0
        roomgrid[r0:r0 + room_size, c0:c0 + room_size] = idx

    for idx in range(len(chain) - 1):
        (r1, c1), (r2, c2) = chain[idx], chain[idx + 1]
        off = int(rng.integers(room_size))
        if r1 == r2:  # horizontal neighbours share a vertical wall
            wall_col = max(c1, c2) * pitch
            door = (r1 * pitch + 1 + off, wall_col)
        else:         # vertical neighbours share a horizontal wall
            wall_row = max(r1, r2) * pitch
            door = (wall_row, c1 * pitch + 1 + off)
        occupancy[door] = 0
        roomgrid[door] = idx

    # wall cells take the palette of the lowest-numbered adjacent room, so
    # every visible surface carries the identity of a room
    texgrid = np.zeros((gh, gw), dtype=np.int32)
    for r in range(gh):
        for c in range(gw):
            if occupancy[r, c] == 0:
                texgrid[r, c] = roomgrid[r, c] + 1
                continue
            best = -1
            for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < gh and 0 <= nc < gw and roomgrid[nr, nc] >= 0:
                    rid = int(roomgrid[nr, nc])
                    if best == -1 or rid < best:
                        best = rid
            texgrid[r, c] = best + 1 if best >= 0 else 0

    pal_rng = np_generator(seed, "palettes")
    palettes = np.zeros((n_rooms + 1, 7))
    palettes[0] = (0.45, 0.45, 0.48, 0.30, 0.30, 0.33, 2.0)
    for i in range(1, n_rooms + 1):
        palettes[i, 0:3] = 0.25 + 0.65 * pal_rng.random(3)
        palettes[i, 3:6] = 0.25 + 0.65 * pal_rng.random(3)
        palettes[i, 6] = float(pal_rng.integers(2, 6))

    def room_center(rr, rc):
        return (rr * pitch + 1 + room_size // 2, rc * pitch + 1 + room_size // 2)

    start_cell = room_center(*chain[0])
    goal_cell = room_center(*chain[-1])

    # connectivity: every free cell must reach the goal
    free = {(r, c) for r in range(gh) for c in range(gw) if occupancy[r, c] == 0}
    seen = {goal_cell}
    frontier = deque([goal_cell])
    while frontier:
        r, c = frontier.popleft()
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            nxt = (r + dr, c + dc)
            if nxt in free and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if seen != free:
        raise GenerationError(
            f"goal unreachable from {len(free) - len(seen)} free cells")

    return MazeSpec(
        seed=seed, n_rooms=n_rooms, room_size=room_size,
        occupancy=occupancy, texgrid=texgrid, palettes=palettes,
        start=(start_cell[1] + 0.5, start_cell[0] + 0.5),
        start_heading=0.0, goal_cell=goal_cell,
        episode_length=episode_length, frame_skip=frame_skip,
        move_quantum=move_quantum, turn_quantum=turn_quantum,
    )


class MazeEnv:
    """Stateless-step simulator over a generated world.

    ``obs_mode`` selects raycast pixels or one-hot (cell, heading) vectors.
    ``reward_mode`` is "sparse" (goal +1 and terminate, small per-step
    penalty otherwise) or "intrinsic_only" (extrinsic reward always 0, no
    goal termination).  With ``noisy=True`` each pixel observation gains a
    second, independently random frame appended on the channel axis: the
    classic stochastic distractor that defeats prediction-error bonuses.
    """

    def __init__(self, spec: MazeSpec, obs_mode: str = "pixels",
                 obs_height: int = 42, obs_width: int = 42, fov_deg: float = 66.0,
                 reward_mode: str = "sparse", noisy: bool = False,
                 noise_seed: int = 0):
        if obs_mode not in ("pixels", "tabular"):
            raise ValueError(f"unknown obs_mode {obs_mode!r}")
        if reward_mode not in ("sparse", "intrinsic_only"):
            raise ValueError(f"unknown reward_mode {reward_mode!r}")
        self.spec = spec
        self.obs_mode = obs_mode
        self.obs_height = obs_height
        self.obs_width = obs_width
        self.fov_deg = fov_deg
        self.reward_mode = reward_mode
        self.noisy = noisy
        self._noise_rng = np_generator(noise_seed, "noisy-tv")
        self.horizon = spec.episode_length // spec.frame_skip
        self.n_actions = len(ACTIONS)

        self.heading_count = int(round(360.0 / spec.turn_quantum))
        free = np.argwhere(spec.occupancy == 0)
        self._cell_index = {(int(r), int(c)): i for i, (r, c) in enumerate(free)}
        self.n_states = len(self._cell_index) * self.heading_count

    @property
    def observation_shape(self) -> tuple[int, ...]:
        if self.obs_mode == "tabular":
            return (self.n_states,)
        channels = 6 if self.noisy else 3
        return (self.obs_height, self.obs_width, channels)

    # -- state helpers ------------------------------------------------------

    def _cell(self, state: SimState) -> tuple[int, int]:
        return (int(math.floor(state.y)), int(math.floor(state.x)))

    def _heading_index(self, state: SimState) -> int:
        idx = int(round((state.heading_deg % 360.0) / self.spec.turn_quantum))
        return idx % self.heading_count

    def state_key(self, state: SimState) -> tuple[int, int, int]:
        r, c = self._cell(state)
        return (r, c, self._heading_index(state))

    # -- observations --------------------------------------------------------

    def observe(self, state: SimState) -> np.ndarray:
        if self.obs_mode == "tabular":
            cell = self._cell(state)
            idx = self._cell_index[cell] * self.heading_count + self._heading_index(state)
            onehot = np.zeros(self.n_states, dtype=np.float32)
            onehot[idx] = 1.0
            return onehot
        r, c = self._cell(state)
        agent_tex = int(self.spec.texgrid[r, c])
        frame = render_scene(
            self.spec.occupancy, self.spec.texgrid, self.spec.palettes,
            state.x, state.y, state.heading_deg, self.fov_deg, agent_tex,
            self.obs_height, self.obs_width)
        if self.noisy:
            noise = self._noise_rng.random(
                (self.obs_height, self.obs_width, 3), dtype=np.float32)
            frame = np.concatenate([frame, noise], axis=2)
        return frame

    # -- dynamics -------------------------------------------------------------

    def reset(self) -> tuple[SimState, np.ndarray]:
        state = SimState(x=self.spec.start[0], y=self.spec.start[1],
                         heading_deg=self.spec.start_heading)
        return state, self.observe(state)

    def step(self, state: SimState, action: int) -> tuple[SimState, np.ndarray, float, bool]:
        if state.done:
            raise EpisodeDoneError("step() called after the episode ended")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action must be in [0, {self.n_actions}), got {action}")

        x, y, h = state.x, state.y, state.heading_deg
        if action == ACTION_LEFT:
            h = (h - self.spec.turn_quantum) % 360.0
        elif action == ACTION_RIGHT:
            h = (h + self.spec.turn_quantum) % 360.0
        elif action == ACTION_FORWARD:
            rad = math.radians(h)
            dx = math.cos(rad)
            dy = math.sin(rad)
            # snap near-zero direction components so axis-aligned moves stay
            # on the exact quantum lattice
            if abs(dx) < 1e-12:
                dx = 0.0
            if abs(dy) < 1e-12:
                dy = 0.0
            nx = x + dx * self.spec.move_quantum
            ny = y + dy * self.spec.move_quantum
            cr, cc = int(math.floor(ny)), int(math.floor(nx))
            gh, gw = self.spec.occupancy.shape
            if 0 <= cr < gh and 0 <= cc < gw and self.spec.occupancy[cr, cc] == 0:
                x, y = nx, ny

        step = state.step + 1
        done = step >= self.horizon
        reward = 0.0
        if self.reward_mode == "sparse":
            if (int(math.floor(y)), int(math.floor(x))) == self.spec.goal_cell:
                reward = GOAL_REWARD
                done = True
            else:
                reward = STEP_PENALTY

        new_state = SimState(x=x, y=y, heading_deg=h, step=step, done=done)
        return new_state, self.observe(new_state), reward, done


# ---------------------------------------------------------------------------
# visitation metric
# ---------------------------------------------------------------------------


def snap_index(value: float, quantum: float) -> int:
    """Round value/quantum to the nearest integer, halves away from zero."""
    scaled = value / quantum
    if scaled >= 0.0:
        return int(math.floor(scaled + 0.5))
    return -int(math.floor(-scaled + 0.5))


class VisitationCounter:
    """Counts visits to positions snapped onto a quantised grid."""

    def __init__(self, quantum: float = 0.05):
        if not quantum > 0:
            raise ValueError(f"quantum must be positive, got {quantum}")
        self.quantum = quantum
        self._visits: dict[tuple[int, int], int] = {}
        self._total = 0

    def record(self, x: float, y: float):
        key = (snap_index(x, self.quantum), snap_index(y, self.quantum))
        self._visits[key] = self._visits.get(key, 0) + 1
        self._total += 1

    @property
    def unique_visits(self) -> int:
        return len(self._visits)

    @property
    def total(self) -> int:
        return self._total

    def as_dict(self) -> dict[tuple[int, int], int]:
        return dict(self._visits)


# ---------------------------------------------------------------------------
# golden traces
# ---------------------------------------------------------------------------


def scripted_rollout(env: MazeEnv, actions) -> list[dict]:
    """Run a fixed action sequence; one row per step for golden-trace files."""
    state, _ = env.reset()
    rows = []
    for i, action in enumerate(actions):
        state, _, reward, done = env.step(state, int(action))
        rows.append({
            "step": i, "action": int(action), "x": state.x, "y": state.y,
            "heading": state.heading_deg, "reward": reward,
        })
        if done:
            break
    return rows


def write_rollout_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("step,action,x,y,heading,reward\n")
        for row in rows:
            fh.write(f"{row['step']},{row['action']},{row['x']!r},"
                     f"{row['y']!r},{row['heading']!r},{row['reward']!r}\n")


def read_rollout_csv(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "step,action,x,y,heading,reward":
            raise ValueError(f"unexpected rollout header: {header!r}")
        for line in fh:
            step, action, x, y, heading, reward = line.strip().split(",")
            rows.append({
                "step": int(step), "action": int(action), "x": float(x),
                "y": float(y), "heading": float(heading), "reward": float(reward),
            })
    return rows
