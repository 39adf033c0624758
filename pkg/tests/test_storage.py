import numpy as np
import pytest

from tcilab.catalog import build_problem, perturbation_form
from tcilab.errors import InvalidArgumentError
from tcilab.girsanov import simulate_coupled
from tcilab.sde import TimeGrid, simulate_paths
from tcilab.storage import load_coupled, load_ensemble, save_coupled, save_ensemble

PROBLEM = build_problem({"dimension": 2, "drift_b": {"form": "ou", "theta": 0.7},
                         "diffusion": {"form": "bounded_sine", "base": 1.0, "amplitude": 0.3}})


@pytest.fixture(scope="module")
def ens():
    return simulate_paths(PROBLEM, TimeGrid(1.0, 8), 5, seed=11)


@pytest.fixture(scope="module")
def coupled():
    return simulate_coupled(PROBLEM, perturbation_form({"form": "sine_state"}, 2), TimeGrid(0.5, 6), 4, seed=3)


@pytest.mark.parametrize("suffix", [".npz", ".csv"])
def test_ensemble_round_trip(tmp_path, ens, suffix):
    back = load_ensemble(save_ensemble(tmp_path / ("e" + suffix), ens))
    assert np.array_equal(back.values, ens.values)
    assert np.array_equal(back.increments, ens.increments)
    assert back.grid.n_steps == 8 and back.grid.horizon == 1.0 and back.seed == 11


def test_csv_header(tmp_path, ens):
    p = save_ensemble(tmp_path / "e.csv", ens)
    first, second = p.read_text().split("\n")[:2]
    assert first == "# tcilab-ensemble d=2 n_steps=8 horizon=1.0 n_paths=5 seed=11"
    assert second == "path,node,t,x0,x1,dw0,dw1"


@pytest.mark.parametrize("suffix", [".npz", ".csv"])
def test_coupled_round_trip(tmp_path, coupled, suffix):
    back = load_coupled(save_coupled(tmp_path / ("c" + suffix), coupled))
    for name in ("x", "xv", "increments", "vdot"):
        assert np.array_equal(getattr(back, name), getattr(coupled, name)), name
    assert back.seed == 3
    np.testing.assert_array_equal(back.v_energy, coupled.v_energy)
    np.testing.assert_array_equal(back.log_density, coupled.log_density)


def test_wrong_magic(tmp_path, coupled):
    p = save_coupled(tmp_path / "c.csv", coupled)
    with pytest.raises(InvalidArgumentError):
        load_ensemble(p)
    with pytest.raises(InvalidArgumentError):
        save_ensemble(tmp_path / "e.bin", simulate_paths(PROBLEM, TimeGrid(1.0, 2), 1, 0), fmt="bin")
