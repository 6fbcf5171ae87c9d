# tests/test_empbase/test_serializers.py
"""This module tests serialization."""
from dataclasses import dataclass
from datetime import date, datetime
import json

import numpy as np

from . import BaseTestCase


@dataclass
class Point:
    x_value: float
    y_value: float


class TestSerializers(BaseTestCase):
    def test__eval_value(self):
        """Test conversion of values."""
        _eval_value = self.empbase.serializers._eval_value

        self.assertEqual(_eval_value(date(2020, 3, 1)), "2020-03-01")
        self.assertEqual(
            _eval_value(datetime(2020, 3, 1, 12, 30, 5)),
            "2020-03-01 12:30:05",
        )
        self.assertIsInstance(_eval_value(np.float64(1.5)), float)
        self.assertIsInstance(_eval_value(np.int64(3)), int)
        self.assertIs(_eval_value(np.bool_(True)), True)
        self.assertListEqual(
            _eval_value(np.arange(4).reshape(2, 2)), [[0, 1], [2, 3]]
        )
        self.assertListEqual(_eval_value((1, 2)), [1, 2])
        self.assertEqual(_eval_value("test"), "test")

        # dataclasses become dicts, optionally with camel case keys
        self.assertDictEqual(
            _eval_value(Point(1.0, 2.0)), {"x_value": 1.0, "y_value": 2.0}
        )
        self.assertDictEqual(
            _eval_value(Point(1.0, 2.0), to_camel_case=True),
            {"xValue": 1.0, "yValue": 2.0},
        )

    def test_to_json(self):
        to_json = self.empbase.serializers.to_json
        data = {"b_value": np.array([1.5, 2.5]), "a_value": np.int32(2)}

        self.assertEqual(
            to_json(data, sort=True), '{"a_value": 2, "b_value": [1.5, 2.5]}'
        )
        self.assertEqual(
            to_json(data, to_camel_case=True, sort=True),
            '{"aValue": 2, "bValue": [1.5, 2.5]}',
        )
        self.assertEqual(
            to_json({"a": 1}, indent=2), json.dumps({"a": 1}, indent=2)
        )

    def test_from_json(self):
        from_json = self.empbase.serializers.from_json

        self.assertDictEqual(from_json('{"simPos": 1}'), {"simPos": 1})
        self.assertDictEqual(
            from_json('{"simPos": 1}', from_camel_case=True), {"sim_pos": 1}
        )
        self.assertDictEqual(
            from_json({"lCcl": None}, from_camel_case=True), {"l_ccl": None}
        )
        self.assertListEqual(from_json("[1, 2]", from_camel_case=True), [1, 2])
