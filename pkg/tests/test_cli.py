import json
import os

import numpy as np
import pytest

from muskatlab import cli
from muskatlab.diagnostics import KernelSpec
from muskatlab.evolution import checkpoint_load

SMALL_RUN = """grid.n=32
grid.l=8.0
quad.n_r=16
quad.n_theta=8
sim.t_end=0.2
sim.checkpoint_every=2
weight.kind=log_pow
initial.kind=gaussian
initial.amplitude=0.3
initial.width=1.0
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "run.txt"
    p.write_text(SMALL_RUN)
    return p


def test_simulate_writes_outputs(tmp_path, small_config, capsys):
    out = tmp_path / "o"
    assert cli.main(["simulate", str(small_config), "--out", str(out)]) == cli.EXIT_OK
    names = set(os.listdir(out))
    assert {"config.txt", "diagnostics.csv", "final.ck", "A_phi.dat", "lip_f.dat"} <= names
    assert any(n.startswith("step") for n in names)
    st = checkpoint_load(str(out / "final.ck"))
    assert st.t == pytest.approx(0.2)
    t, a = np.loadtxt(out / "A_phi.dat", unpack=True)
    assert t[0] == 0.0 and np.all(np.diff(t) > 0)
    assert "completed" in capsys.readouterr().out


def test_simulate_needs_config():
    assert cli.main(["simulate"]) == cli.EXIT_CONFIG


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("sim.epsilon=7\n")
    assert cli.main(["simulate", str(p)]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", str(tmp_path / "missing.txt")]) == cli.EXIT_CONFIG


def test_aborted_run_exit_code(tmp_path, small_config):
    p = tmp_path / "blow.txt"
    p.write_text(SMALL_RUN.replace("initial.amplitude=0.3", "initial.amplitude=1e13"))
    assert cli.main(["simulate", str(p), "--out", str(tmp_path / "b")]) == cli.EXIT_FAIL
    assert (tmp_path / "b" / "abort.ck").exists()


def test_unknown_command_and_suite(tmp_path):
    assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG
    assert cli.main(["verify", "nosuch", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_verify_symmetry_small(tmp_path, small_config):
    code = cli.main(["verify", "symmetry", "--config", str(small_config), "--out", str(tmp_path)])
    body = json.loads((tmp_path / "verify_symmetry.json").read_text())
    assert code == (cli.EXIT_OK if body["passed"] else cli.EXIT_FAIL)
    assert body["thresholds_version"] >= 1
    assert (tmp_path / "verify_symmetry.txt").exists()


def test_decompose(tmp_path, small_config, capsys):
    assert cli.main(["decompose", str(small_config), "--out", str(tmp_path)]) == cli.EXIT_OK
    data = np.load(tmp_path / "decomposition.npz")
    assert set(data.files) >= {"p_part", "drift_x", "drift_y", "remainder", "total"}
    assert "residual=" in capsys.readouterr().out


def test_weights_build(tmp_path):
    r = np.linspace(0, 60, 3000)
    spec = tmp_path / "spec.txt"
    np.savetxt(spec, np.c_[r, np.exp(-(r**2) / 18)])
    assert cli.main(["weights", "build", str(spec), "--out", str(tmp_path)]) == cli.EXIT_OK
    assert "kind=tail_built" in (tmp_path / "weight.txt").read_text()
    assert cli.main(["weights", "shred", str(spec)]) == cli.EXIT_CONFIG


def test_kernels_sweep(tmp_path):
    code = cli.main(["kernels", "sweep", "order=1,b=0.5", "--lo", "1", "--hi", "4", "-n", "3", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    rows = np.loadtxt(tmp_path / "kernel_sweep.dat")
    assert np.allclose(rows[:, 2], 4 * np.pi, rtol=1e-8)
    assert cli.main(["kernels", "sweep", "order=1,b=1.5"]) == cli.EXIT_CONFIG
    assert cli.main(["kernels", "sweep", "order=1,colour=red"]) == cli.EXIT_CONFIG


def test_parse_kernel_spec():
    s = cli.parse_kernel_spec("order=3, b=1.5, gk=2, kind=log_pow, a=0.25")
    assert s == KernelSpec(3, 1.5, 2, s.weight) and s.weight.a == 0.25


def test_export_errors(tmp_path):
    assert cli.main(["export", str(tmp_path)]) == cli.EXIT_CONFIG
    (tmp_path / "diagnostics.csv").write_text("wrong,header\n")
    assert cli.main(["export", str(tmp_path)]) == cli.EXIT_CONFIG


def test_threads_flag_sets_environment(tmp_path, small_config, monkeypatch):
    monkeypatch.delenv("MUSKATLAB_THREADS", raising=False)
    cli.main(["decompose", str(small_config), "--out", str(tmp_path), "--threads", "2"])
    assert os.environ["MUSKATLAB_THREADS"] == "2"
