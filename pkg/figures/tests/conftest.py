import os
import subprocess
import sys

import pytest

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


def run_cli(subcommand, config_text, out_dir, tmp_path):
    """Drive the simulator through its public CLI only."""
    cfg = tmp_path / f"{out_dir.name}.cfg"
    cfg.write_text(config_text)
    proc = subprocess.run(
        [sys.executable, "-m", "xgmsim.cli", subcommand,
         "--config", str(cfg), "--out", str(out_dir), "--workers", "2"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr + proc.stdout
    return out_dir


@pytest.fixture(scope="session")
def proto_archive(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("figdata")
    return run_cli("sweep", """
kind = protocol-compare
k = 4
sigma = 0.4
protocol = curriculum, random-order, no-fading
steps = 60
record_every = 20
seed_count = 6
mc_samples = 800
loss_mc = 800
d0 = 300
""", tmp / "proto", tmp)


@pytest.fixture(scope="session")
def sweep_archive(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("figdata2")
    return run_cli("sweep", """
kind = lottery-sweep
k = 2, 4
sigma = 0.3, 0.5
protocol = curriculum, no-fading
steps = 40
record_every = 40
seed_count = 4
mc_samples = 800
loss_mc = 800
d0 = 300
""", tmp / "sweep", tmp)


@pytest.fixture(scope="session")
def controlled_archive(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("figdata3")
    return run_cli("controlled", """
kind = controlled-theta
sigma = 1.0
protocol = curriculum, random-order
theta_grid = 0.0, 1.0, 2.0, 3.0
rho1 = 0.1
steps = 40
record_every = 40
seed_count = 3
mc_samples = 800
loss_mc = 800
d0 = 300
""", tmp / "controlled", tmp)


@pytest.fixture(scope="session")
def rates_archive(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("figdata4")
    return run_cli("rates", """
kind = rate-heatmap
rate_mode = m11
m11_grid = 0.0, 0.4, 0.8
phi_grid = 1.0, 2.0, 3.0
sigma = 1.0
rho1 = 0.8
m12 = 0.8
mc_samples = 4000
seeds = 0
""", tmp / "rates", tmp)


@pytest.fixture(scope="session")
def destab_archive(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("figdata5")
    return run_cli("destab", """
kind = destabilisation
sigma = 0.4, 0.55
protocol = curriculum, no-fading
steps = 40
record_every = 40
seed_count = 5
mc_samples = 800
loss_mc = 800
d0 = 300
""", tmp / "destab", tmp)
