# Copyright 2026 The lenkf Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
import json
import math

import numpy as np
import pytest

import lenkf


def test_version():
    assert lenkf.__version__ == "0.1.0"


def test_kalman_gain_matches_information_form():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    q = a @ a.T / 6 + 0.5 * np.eye(6)
    b = rng.normal(size=(3, 3))
    r = b @ b.T / 3 + 0.5 * np.eye(3)
    h = rng.normal(size=(3, 6))
    k = lenkf.kalman_gain(q, h, r)
    ri = np.linalg.inv(r)
    info = np.linalg.inv(h.T @ ri @ h + np.linalg.inv(q)) @ h.T @ ri
    assert np.linalg.norm(k - info) / np.linalg.norm(k) < 1e-10
    assert lenkf.kalman_gain(np.eye(1), np.eye(1), np.eye(1))[0, 0] == pytest.approx(0.5)


def test_step_examples():
    assert lenkf.lenkf_forecast([2.0], [-2.0], 0.1, 1.0, [0.0])[0] == pytest.approx(1.9)
    assert lenkf.lenkf_analysis([0.0], [[0.5]], [1.0], [[1.0]], [0.0])[0] == pytest.approx(0.5)
    assert lenkf.assim_forecast([1.0], [0.0], [[1.0]], 0.1, 1.0, [0.0])[0] == pytest.approx(0.95)
    assert lenkf.sgld_step([0.0], [2.0], 0.1, [0.0])[0] == pytest.approx(0.1)
    x, v = lenkf.psgld_step([0.0], [1.0], 0.1, [0.0], z=[0.0])
    assert v[0] == pytest.approx(0.01)
    assert x[0] == pytest.approx(0.49995, rel=1e-5)
    x, u, xi = lenkf.sgnht_step([0.0], [1.0], 0.0, [0.0], 0.1, 0.0, [0.0])
    assert x[0] == pytest.approx(0.1) and u[0] == 1.0 and xi == pytest.approx(0.0)


def test_resample_probabilities():
    p = lenkf.resample_probabilities(np.array([[0.0, 1.0]]), [0.0], [[1.0]])
    assert p[0] == pytest.approx(1.0 / (1.0 + math.exp(-0.5)))
    assert p.sum() == pytest.approx(1.0)


def test_metrics():
    assert lenkf.rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5 / math.sqrt(2))
    assert lenkf.ess([0.0, -math.log(3.0)]) == pytest.approx(1.6)
    assert lenkf.inclusion_probability(0.0) == pytest.approx(0.0005 / (0.0005 + 9.995))
    s = np.tile(np.array([[1.0], [2.0]]), (1, 5))
    assert lenkf.coverage_probability(s, [1.0, 2.0]) == 1.0


def test_lorenz96():
    x = np.full(40, 8.0)
    assert np.allclose(lenkf.lorenz96_rhs(x), 0.0)
    y = lenkf.lorenz96_step(x + 0.0)
    assert np.allclose(y, x)


def test_errors_are_raised():
    with pytest.raises(lenkf.LenkfError):
        lenkf.rmse([1.0], [1.0, 2.0])
    with pytest.raises(lenkf.LenkfError, match="sampler.bogus"):
        lenkf.validate_config(json.dumps({"experiment": "linear_inverse", "sampler": {"bogus": 1}}))


def test_presets_and_run(tmp_path):
    assert "lorenz96_paper" in lenkf.presets()
    resolved = json.loads(lenkf.validate_config("linear_desk"))
    assert resolved["sampler"]["ensemble_size"] == 100
    cfg = {
        "experiment": "linear_inverse",
        "seed": 3,
        "dataset": {"num_obs": 200, "dim": 8, "block_size": 50, "rho": 0.5},
        "sampler": {"ensemble_size": 5, "stages": 20, "burn_in": 10},
    }
    rows = lenkf.run_experiment(json.dumps(cfg), str(tmp_path / "a"))
    again = lenkf.run_experiment(json.dumps(cfg), str(tmp_path / "b"))
    assert rows == again
    assert any(r[1] == "MeanInclusionTrue" for r in rows)
    assert (tmp_path / "a" / "samples.csv").read_bytes() == (tmp_path / "b" / "samples.csv").read_bytes()
    other = lenkf.run_experiment(json.dumps(cfg), str(tmp_path / "c"), seed=4)
    assert other != rows
