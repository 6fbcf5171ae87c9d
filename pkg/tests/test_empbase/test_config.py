# tests/test_empbase/test_config.py
"""This module tests the run configuration."""
import json
import os

from . import BaseTestCase, small_config


class TestRunConfig(BaseTestCase):
    def setUp(self):
        super().setUp()
        self.RunConfig = self.empbase.config.RunConfig
        self.ConfigError = self.empbase.errors.ConfigError

    def test_defaults(self):
        config = self.RunConfig.from_dict({})
        self.assertEqual(config.dims.d, 300)
        self.assertEqual(config.dims.d_cs, 10)
        self.assertEqual(config.dims.d_cl, 64)
        self.assertEqual(config.training.batch_size, 16)
        self.assertAlmostEqual(config.training.tau, 0.07)
        self.assertTupleEqual(config.training.gamma, (1.0, 1.0, 1.0, 1.5))
        self.assertEqual(config.decoding.max_len, 30)
        self.assertTrue(config.ablations.enable_egm)

        # derived widths
        self.assertEqual(config.d_t, 14)
        self.assertEqual(config.d_s, 43)
        self.assertEqual(config.d_v, 300 + 14 + 43)

    def test_d_v_follows_ablations(self):
        config = small_config(ablations={"enable_tee": False})
        self.assertEqual(config.d_v, 16 + config.d_s)
        config = small_config(
            ablations={"enable_tee": False, "enable_see": False}
        )
        self.assertEqual(config.d_v, 16)

    def test_unknown_keys(self):
        self.assertRaises(
            self.ConfigError, self.RunConfig.from_dict, {"bogus": 1}
        )
        self.assertRaises(
            self.ConfigError,
            self.RunConfig.from_dict,
            {"dims": {"width": 3}},
        )

    def test_invalid_values(self):
        cases = [
            {"dims": {"d": 0}},
            {"dims": {"d": 30, "heads": 4}},
            {"dims": {"d_t": 15}},
            {"dims": {"d_s": 40}},
            {"training": {"gamma": [1, 1, -1, 1]}},
            {"training": {"gamma": [1, 1, 1]}},
            {"training": {"tau": 0}},
            {"training": {"max_steps": -1}},
            {"decoding": {"max_len": 0}},
            {"seed": "seven"},
        ]
        for data in cases:
            with self.subTest(data=data):
                self.assertRaises(
                    self.ConfigError, self.RunConfig.from_dict, data
                )

        # stating the derived values is allowed
        config = self.RunConfig.from_dict({"dims": {"d_t": 14, "d_s": 43}})
        self.assertEqual(config.d_t, 14)

    def test_config_error_is_value_error(self):
        self.assertRaises(ValueError, self.RunConfig.from_dict, {"x": 1})

    def test_from_file(self):
        path = self.path("run.json")
        with open(path, "w") as fobj:
            json.dump({"name": "file", "seed": 4, "dims": {"d": 32}}, fobj)
        config = self.RunConfig.from_file(path)
        self.assertEqual(config.name, "file")
        self.assertEqual(config.seed, 4)
        self.assertEqual(config.dims.d, 32)

        with open(path, "w") as fobj:
            fobj.write("{not json")
        self.assertRaises(self.ConfigError, self.RunConfig.from_file, path)

    def test_round_trip(self):
        config = small_config(ablations={"enable_ccl": False})
        again = self.RunConfig.from_dict(
            json.loads(self.empbase.serializers.to_json(config.to_dict()))
        )
        self.assertEqual(again, config)

    def test_path(self):
        config = self.RunConfig.from_dict(
            {
                "vars": {"data_dir": "/data/ed", "run": "r1"},
                "paths": {
                    "train": "{data_dir}/train.jsonl",
                    "checkpoint_dir": "runs/{run}",
                    "run_db": "sqlite:///{checkpoint_dir}/runs.db",
                    "test": "{missing}/test.jsonl",
                },
            }
        )
        self.assertEqual(config.path("train"), "/data/ed/train.jsonl")
        self.assertEqual(config.path("checkpoint_dir"), "runs/r1")
        self.assertEqual(config.path("run_db"), "sqlite:///runs/r1/runs.db")
        self.assertIsNone(config.path("valid"))
        self.assertRaises(self.ConfigError, config.path, "test")

    def test_path_from_environment(self):
        config = self.RunConfig.from_dict(
            {"paths": {"train": "{data_dir}/train.jsonl"}}
        )
        previous = os.environ.pop("EMPBASE_VARS", None)
        try:
            os.environ["EMPBASE_VARS"] = json.dumps({"data_dir": "/srv"})
            self.assertEqual(config.path("train"), "/srv/train.jsonl")
        finally:
            os.environ.pop("EMPBASE_VARS", None)
            if previous is not None:
                os.environ["EMPBASE_VARS"] = previous

    def test_with_overrides(self):
        config = small_config()
        changed = config.with_overrides(
            seed=9,
            max_steps=0,
            checkpoint_dir="elsewhere",
            disable=["egm", "ccl"],
        )
        self.assertEqual(changed.seed, 9)
        self.assertEqual(changed.training.max_steps, 0)
        self.assertEqual(changed.paths.checkpoint_dir, "elsewhere")
        self.assertFalse(changed.ablations.enable_egm)
        self.assertFalse(changed.ablations.enable_ccl)
        self.assertTrue(changed.ablations.enable_tee)

        # the original is untouched
        self.assertEqual(config.seed, 3)
        self.assertTrue(config.ablations.enable_egm)
        self.assertNotEqual(config.training.max_steps, 0)
