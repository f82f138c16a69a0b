from __future__ import annotations

import numpy as np
import pytest

from commotions.datasets import SynthConfig, synth_generate
from commotions.scenario import ContestedSpace, Path, Sample, Track, decode_to_2d, project_to_path


def crossing_sample(
    sid: str = "x0",
    d_ego: float = 40.0,
    v_ego: float = 10.0,
    d_target: float = 20.0,
    v_target: float = 5.0,
    a: int = 1,
    t_A: float = 4.0,
    t_C: float = 4.1,
    dt: float = 0.1,
    half_extent: float = 2.5,
) -> Sample:
    """Perpendicular crossing at the origin; both agents observed at t = 0 and dt."""
    h = half_extent
    ego_path = Path(np.array([[-200.0, 0.0], [h, 0.0]]))
    target_path = Path(np.array([[0.0, -200.0], [0.0, h]]))
    t = np.array([0.0, dt])
    ego_x = -h - (d_ego + v_ego * dt) + v_ego * t
    tgt_y = -h - (d_target + v_target * dt) + v_target * t
    return Sample(
        id=sid,
        ego=Track(t, np.column_stack([ego_x, np.zeros(2)])),
        target=Track(t, np.column_stack([np.zeros(2), tgt_y])),
        ego_path=ego_path, target_path=target_path, contested=ContestedSpace((0.0, 0.0), h),
        a=a, t_A=t_A if a == 1 else float("nan"), t_C=t_C, t_open=dt,
    )


def random_path(rng, n_pts):
    headings = np.cumsum(rng.uniform(-0.6, 0.6, n_pts - 1))
    steps = rng.uniform(2.0, 15.0, n_pts - 1)[:, None] * np.column_stack([np.cos(headings), np.sin(headings)])
    return Path(np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)]) + rng.uniform(-50, 50, 2))


def round_trip_error(rng) -> float:
    """Place points on a random polyline, decode them, project back and decode again."""
    path = random_path(rng, int(rng.integers(2, 8)))
    s_c = rng.uniform(0.3, 0.9) * path.length
    space = ContestedSpace(tuple(path.point_at(s_c)), rng.uniform(0.5, 3.0))
    s_entry = space.entry_arc_length(path)
    d = s_entry - rng.uniform(0.0, path.length, 20)
    t = np.arange(20) * 0.1
    xy = decode_to_2d(t, d, path, space).xy
    back = project_to_path(t, xy, path, space)
    again = decode_to_2d(t, back.d, path, space).xy
    return float(max(np.abs(back.d - d).max(), np.abs(again - xy).max()))


@pytest.fixture(scope="session")
def small_dataset():
    return synth_generate(SynthConfig(n=60, seed=3))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
