# tests/test_empbase/test_cli.py
"""This module tests the command line."""
from contextlib import redirect_stderr, redirect_stdout
import csv
import io
import json
import os

from empbase import cli

from . import TOY_RECORDS, TOY_VAD, BaseTestCase, write_jsonl

ED_FIELDS = [
    "conv_id",
    "utterance_idx",
    "context",
    "prompt",
    "speaker_idx",
    "utterance",
]


class TestCommandLine(BaseTestCase):
    def setUp(self):
        super().setUp()
        self.config = self.write_run_config()

    def run_main(self, *argv):
        out = io.StringIO()
        with redirect_stdout(out), redirect_stderr(io.StringIO()):
            code = cli.main(list(argv))
        return code, out.getvalue()

    def read_lines(self, path):
        with open(path) as fobj:
            return fobj.read().splitlines()

    def train(self, *extra):
        return self.run_main(
            "train", "--config", self.config, "--quiet", *extra
        )

    def test_train(self):
        code, out = self.train("--max-steps", "2")
        self.assertEqual(code, 0)
        self.assertIn(f"checkpoint: {self.path('run/best.npz')}", out)
        self.assertIn(f"loss log: {self.path('run/loss_log.tsv')}", out)
        self.assertIn("total=", out)
        lines = self.read_lines(self.path("run/loss_log.tsv"))
        self.assertEqual(len(lines), 3)
        self.assertIn("l_ccl", lines[0])

    def test_train_overrides(self):
        code, _ = self.train(
            "--max-steps",
            "2",
            "--no-ccl",
            "--seed",
            "9",
            "--checkpoint",
            self.path("other"),
        )
        self.assertEqual(code, 0)
        header = self.read_lines(self.path("other/loss_log.tsv"))[0]
        self.assertEqual(header, "step\tlr\tl_e\tl_g\tl_div\ttotal")
        self.assertFalse(os.path.exists(self.path("run")))

    def test_zero_steps(self):
        code, out = self.train("--max-steps", "0")
        self.assertEqual(code, 0)
        self.assertIn("checkpoint:", out)
        self.assertNotIn("loss log:", out)

    def test_eval(self):
        self.train("--max-steps", "2")
        code, out = self.run_main(
            "eval", "--config", self.config, "--quiet"
        )
        self.assertEqual(code, 0)
        self.assertIn("accuracy", out)
        report = self.read_lines(self.path("run/eval_test.txt"))
        self.assertEqual(report[0], out.splitlines()[0])
        generations = self.read_lines(
            self.path("run/eval_test.generations.jsonl")
        )
        self.assertEqual(len(generations), 4)

        output = self.path("valid_report.txt")
        code, _ = self.run_main(
            "eval",
            "--config",
            self.config,
            "--quiet",
            "--split",
            "valid",
            "--checkpoint",
            self.path("run/last.npz"),
            "--output",
            output,
        )
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(output))
        self.assertTrue(
            os.path.exists(self.path("valid_report.generations.jsonl"))
        )

    def test_generate(self):
        self.train("--max-steps", "0")
        source = write_jsonl(
            self.path("input.jsonl"),
            [{"context": record["context"]} for record in TOY_RECORDS[:3]],
        )
        code, out = self.run_main(
            "generate", "--config", self.config, "--quiet", source
        )
        self.assertEqual(code, 0)
        target = self.path("input.responses.txt")
        self.assertEqual(out.strip(), target)
        self.assertEqual(len(self.read_lines(target)), 3)

    def test_polarity(self):
        with open(self.path("vectors.txt"), "w") as fobj:
            for word, (valence, _, _) in TOY_VAD.items():
                vector = "1.0 0.1" if valence > 0.5 else "0.1 1.0"
                fobj.write(f"{word} {vector}\n")
        config = self.write_run_config(
            "polarity.json", paths={"vectors": "{data_dir}/vectors.txt"}
        )
        output = self.path("polarity.tsv")
        code, out = self.run_main(
            "polarity", "--config", config, "--quiet", "--output", output
        )
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("discrepant 0 of "))
        self.assertIn("outside", out)
        lines = self.read_lines(output)
        self.assertEqual(lines[0], "word\tP_t\tP_s\tvalence\tsim_pos\tsim_neg")
        self.assertGreater(len(lines), 1)

    def test_polarity_without_vectors(self):
        code, _ = self.run_main("polarity", "--config", self.config)
        self.assertEqual(code, 2)

    def test_convert(self):
        path = self.path("ed.csv")
        with open(path, "w", newline="") as fobj:
            writer = csv.writer(fobj)
            writer.writerow(ED_FIELDS)
            for index in range(10):
                conv_id = f"hit:{index}"
                writer.writerow([conv_id, 1, "proud", "won", 1, "i won"])
                writer.writerow([conv_id, 2, "proud", "won", 2, "nice"])
        code, out = self.run_main(
            "convert-ed", path, "--output", self.path("ed.jsonl"), "--split"
        )
        self.assertEqual(code, 0)
        paths = out.split()
        self.assertListEqual(
            paths,
            [self.path(f"ed.{split}.jsonl") for split in cli.SPLITS],
        )
        counts = [len(self.read_lines(path)) for path in paths]
        self.assertListEqual(counts, [8, 1, 1])

    def test_usage_errors(self):
        for argv in (
            [],
            ["train"],
            ["eval", "--config", self.config, "--split", "dev"],
            ["train", "--config", self.config, "--max-steps", "many"],
        ):
            with self.assertRaises(SystemExit) as context:
                self.run_main(*argv)
            self.assertEqual(context.exception.code, 1)

    def test_training_flags_rejected(self):
        for argv in (
            ["eval", "--config", self.config, "--no-ccl"],
            ["eval", "--config", self.config, "--seed", "7"],
            ["eval", "--config", self.config, "--max-steps", "5"],
            ["generate", "--config", self.config, "--no-tee", "in.jsonl"],
            ["generate", "--config", self.config, "--seed", "7", "in.jsonl"],
            ["polarity", "--config", self.config, "--checkpoint", "x.npz"],
            ["train", "--config", self.config, "--split", "valid"],
        ):
            with self.assertRaises(SystemExit) as context:
                self.run_main(*argv)
            self.assertEqual(context.exception.code, 1, argv)

    def test_config_errors(self):
        code, _ = self.run_main("train", "--config", self.path("none.json"))
        self.assertEqual(code, 2)

        bad = self.path("bad.json")
        with open(bad, "w") as fobj:
            fobj.write("{not json")
        code, _ = self.run_main("train", "--config", bad)
        self.assertEqual(code, 2)

        with open(bad, "w") as fobj:
            json.dump({"dims": {"d": 15, "heads": 2}}, fobj)
        code, _ = self.run_main("train", "--config", bad)
        self.assertEqual(code, 2)

    def test_missing_checkpoint(self):
        code, _ = self.run_main(
            "eval",
            "--config",
            self.config,
            "--checkpoint",
            self.path("none.npz"),
        )
        self.assertEqual(code, 2)
