# Copyright 2024
# Directory: ContourMARL/tests/test_trace.py

import csv

from app.services import environment as env
from app.services import trace


def test_zero_policy_trace_files(tmp_path, disk, disk_grid, disk_box):
    ep = env.new_episode(disk, disk_grid, disk_box, n_points=16, horizon=3, delta=2.0)
    _, _, frames = env.run_episode(ep, env.ZeroPolicy())
    svg_path = trace.write_trace(tmp_path / "traces", "disk", frames, ep.contour, disk)

    svg = svg_path.read_text(encoding="utf-8")
    assert svg.startswith("<svg")
    assert svg.count('class="step"') == 3
    assert svg.count('class="init"') == 1
    assert svg.count("<rect") == disk.count()

    with open(tmp_path / "traces" / "disk.csv", newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == trace.TRACE_COLUMNS
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    # a contour that never moves earns no region or boundary reward
    assert all(float(r[4]) == 0.0 and float(r[5]) == 0.0 for r in rows[1:])
