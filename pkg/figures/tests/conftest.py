import subprocess
import sys
from pathlib import Path

import pytest

FIGURES_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(FIGURES_DIR))

SCRIPT = FIGURES_DIR / "render_figures.py"

BASE_CFG = """\
[grid]
n = 63

[domain]
omega0 = 0.4 0.6

[evolve]
a = 20
p = 32
dt = 2e-3
t_end = 0.4
snapshot_every = 20

[vi]
dt = 2e-3
steady_tol = 1e-7

[sweep]
p_list = 8 32 128
monotone_from = 8
ratio_p_hi = 128
ratio_p_lo = 8
ratio = 0.5
p_max = 64
t_max_transient = 0.4
regime = intermediate
"""

NONDEG_CFG = BASE_CFG.replace("omega0 = 0.4 0.6", "omega0 =").replace(
    "a = 20", "a = 39.47841760435743")


def run_cli(args):
    return subprocess.run([sys.executable, "-m", "degparlog.cli", *args],
                          capture_output=True, text=True)


def render(report_dir, kind, out_path):
    return subprocess.run(
        [sys.executable, str(SCRIPT), "--report", str(report_dir),
         "--kind", kind, "--out", str(out_path)],
        capture_output=True, text=True)


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """Generate one CLI run per figure kind; returns kind -> report dir."""
    root = tmp_path_factory.mktemp("runs")
    deg_cfg = root / "deg.cfg"
    deg_cfg.write_text(BASE_CFG)
    nondeg_cfg = root / "nondeg.cfg"
    nondeg_cfg.write_text(NONDEG_CFG)

    dirs = {}
    plan = [
        ("psweep", "psweep", deg_cfg),
        ("longtime", "longtime", nondeg_cfg),
        ("profile", "obstacle", deg_cfg),
        ("coincidence", "coincidence", nondeg_cfg),
        ("diagram", "diagram", deg_cfg),
        ("vi-evolve-run", "vi-evolve", deg_cfg),
        ("evolve-run", "evolve", deg_cfg),
    ]
    for name, command, cfg in plan:
        out = root / name
        proc = run_cli([command, "--config", str(cfg), "--out", str(out)])
        assert proc.returncode == 0, (command, proc.stdout, proc.stderr)
        dirs[name] = out
    return dirs
