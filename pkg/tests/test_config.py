import json

import numpy as np
import pytest

from gaitlab.biomech import MUSCLES
from gaitlab.config import (ConfigError, MuscleParams, PipelineConfig,
                            load_config)


class TestDefaults:
    def test_all_muscles_present(self):
        cfg = PipelineConfig()
        assert set(cfg.muscles) == set(MUSCLES)
        for params in cfg.muscles.values():
            assert params.n_units == 50

    def test_insertion_table_layout(self):
        cfg = PipelineConfig()
        ins = cfg.insertions()
        dist, angle = ins["gluteus_maximus"]
        assert dist == pytest.approx(0.07)
        assert angle == pytest.approx(np.radians(5.0))

    def test_pools_can_carry_reference_gait(self):
        # capacity must exceed the force peaks of the default synthetic
        # simulation, otherwise cmd_simulate would be infeasible by default
        from gaitlab.biomech import simulate_lower_body
        from gaitlab.signal import make_synthetic_gait
        cfg = PipelineConfig()
        cycles, _ = make_synthetic_gait(cfg.body)
        forces = simulate_lower_body(cycles, cfg.body, cfg.cycle_duration_s,
                                     insertions=cfg.insertions())
        pools = cfg.build_muscles()
        for name, traj in forces.items():
            assert pools[name].max_active_force > float(np.max(traj.forces))


class TestLoading:
    def test_load_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "seed": 9,
            "body": {"body_mass": 70.0},
            "muscles": {"quadriceps": {"n_units": 10}},
        }))
        cfg = load_config(path)
        assert cfg.seed == 9
        assert cfg.body.body_mass == 70.0
        assert cfg.muscles["quadriceps"].n_units == 10
        assert cfg.muscles["hamstrings"].n_units == 50

    def test_anthropometric_constants_overridable(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "body": {"mass_fraction": {"feet": 0.02},
                     "gyration_coeff": {"knee": 0.6}}}))
        cfg = load_config(path)
        assert cfg.body.mass_fraction["feet"] == 0.02
        assert cfg.body.mass_fraction["leg"] == 0.0465
        assert cfg.body.gyration_coeff["knee"] == 0.6

    def test_load_toml(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(
            'seed = 4\n[body]\nbody_mass = 65.0\n'
            '[muscles.gastrocnemius]\nf0_min = 1.0\n')
        cfg = load_config(path)
        assert cfg.seed == 4
        assert cfg.body.body_mass == 65.0
        assert cfg.muscles["gastrocnemius"].f0_min == 1.0

    def test_unknown_top_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"sede": 3}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_body_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"body": {"mass": 70}}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_muscle_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(
            {"muscles": {"quadriceps": {"fibre_count": 3}}}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_invalid_body_value_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"body": {"body_mass": -5}}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_defaults_when_no_path(self):
        cfg = load_config(None)
        assert cfg.seed == 0


class TestMuscleParams:
    def test_build_pool(self):
        pool = MuscleParams(n_units=5, f0_min=1.0, f0_max=2.0).build("m")
        assert len(pool.motor_units) == 5
        f0s = [mu.f0 for mu in pool.motor_units]
        assert f0s[0] == pytest.approx(1.0)
        assert f0s[-1] == pytest.approx(2.0)
        # geometric grading: constant ratio between neighbours
        ratios = [b / a for a, b in zip(f0s, f0s[1:])]
        assert np.allclose(ratios, ratios[0])

    def test_config_hash_stable(self):
        from gaitlab.schemas import content_hash
        assert content_hash(PipelineConfig().to_dict()) == \
            content_hash(PipelineConfig().to_dict())
