# tests/test_empbase/test_corpus.py
"""This module tests dialogue ingestion and batching."""
import csv
import json
import math

import numpy as np

from . import TOY_RECORDS, TOY_VAD, BaseTestCase, write_vad


class CorpusTestCase(BaseTestCase):
    def setUp(self):
        super().setUp()
        self.corpus = self.empbase.corpus
        self.DataError = self.empbase.errors.DataError


class TestVocabulary(CorpusTestCase):
    def test_build(self):
        corpus = self.corpus
        _, vocab = self.toy_dialogues()
        self.assertTupleEqual(
            tuple(vocab.tokens[: len(corpus.RESERVED)]), corpus.RESERVED
        )
        self.assertEqual(vocab.id_of("[PAD]"), 0)
        self.assertEqual(vocab.id_of("[LSN]"), corpus.LSN_ID)
        for index, label in enumerate(corpus.EMOTION_LABELS):
            self.assertEqual(vocab.id_of(label), 7 + index)
        # first corpus token follows the emotion words
        self.assertEqual(vocab.id_of("i"), 7 + 32)
        self.assertEqual(vocab.id_of("got"), 7 + 32 + 1)
        self.assertEqual(vocab.id_of("unseen"), corpus.UNK_ID)

        _, again = self.toy_dialogues()
        self.assertEqual(vocab, again)

    def test_decode(self):
        corpus = self.corpus
        vocab = corpus.Vocabulary(["hello", "world"])
        ids = [corpus.SOS_ID] + vocab.encode(["hello", "world"])
        ids += [corpus.EOS_ID, vocab.id_of("hello")]
        self.assertListEqual(vocab.decode(ids), ["hello", "world"])
        self.assertEqual(
            vocab.detokenize([len(vocab), vocab.id_of("world")], ["zebra"]),
            "zebra world",
        )
        self.assertEqual(vocab.token_of(len(vocab) + 5), corpus.UNK)

    def test_save_load(self):
        _, vocab = self.toy_dialogues()
        path = self.path("vocab.txt")
        vocab.save(path)
        self.assertEqual(self.corpus.Vocabulary.load(path), vocab)

        with open(path, "w") as fobj:
            fobj.write("hello\n")
        self.assertRaises(self.DataError, self.corpus.Vocabulary.load, path)


class TestLoadDialogues(CorpusTestCase):
    def test_load(self):
        dialogues, vocab = self.toy_dialogues()
        self.assertEqual(len(dialogues), len(TOY_RECORDS))
        first = dialogues[0]
        self.assertEqual(first.index, 0)
        self.assertEqual(
            first.emotion_label, self.corpus.EMOTION_INDEX["proud"]
        )
        self.assertListEqual(
            first.context_tokens[0], ["i", "got", "the", "job", "today"]
        )
        self.assertListEqual(
            first.target_response,
            vocab.encode("thank you i am so proud".split()),
        )
        self.assertEqual(len(dialogues[3].context_utterances), 3)

    def test_reuse(self):
        _, vocab = self.toy_dialogues()
        path = self.write_records(
            "other.jsonl",
            [{"context": ["a zebra"], "target": "ok", "emotion": "Sad "}],
        )
        dialogues, same = self.corpus.load_dialogues(path, "reuse", vocab)
        self.assertIs(same, vocab)
        self.assertEqual(
            dialogues[0].context_utterances[0][1], self.corpus.UNK_ID
        )
        self.assertEqual(
            dialogues[0].emotion_label, self.corpus.EMOTION_INDEX["sad"]
        )

    def test_modes(self):
        ConfigError = self.empbase.errors.ConfigError
        path = self.write_records("toy.jsonl")
        self.assertRaises(
            ConfigError, self.corpus.load_dialogues, path, "reuse"
        )
        self.assertRaises(
            ConfigError, self.corpus.load_dialogues, path, "other"
        )

    def test_bad_records(self):
        bad = {
            "malformed": "{not json",
            "array": "[1, 2]",
            "context": json.dumps({"context": "x", "target": "y"}),
            "empty": json.dumps(
                {"context": ["  "], "target": "y", "emotion": "sad"}
            ),
            "emotion": json.dumps(
                {"context": ["x"], "target": "y", "emotion": "bored"}
            ),
            "target": json.dumps(
                {"context": ["x"], "target": 3, "emotion": "sad"}
            ),
        }
        for name, line in bad.items():
            with self.subTest(name=name):
                path = self.path(f"{name}.jsonl")
                with open(path, "w") as fobj:
                    fobj.write(line + "\n")
                with self.assertRaises(self.DataError) as context:
                    self.corpus.load_dialogues(path)
                self.assertIn("line 1", str(context.exception))

    def test_unknown_emotion_lists_labels(self):
        path = self.write_records(
            "bad.jsonl", [{"context": ["x"], "target": "y", "emotion": "zz"}]
        )
        with self.assertRaises(self.DataError) as context:
            self.corpus.load_dialogues(path)
        self.assertIn("afraid", str(context.exception))
        self.assertIsInstance(context.exception, ValueError)

    def test_empty_file(self):
        path = self.path("empty.jsonl")
        open(path, "w").close()
        self.assertRaises(self.DataError, self.corpus.load_dialogues, path)

    def test_unlabeled(self):
        _, vocab = self.toy_dialogues()
        path = self.write_records("input.jsonl", [{"context": ["hi there"]}])
        self.assertRaises(
            self.DataError, self.corpus.load_dialogues, path, "reuse", vocab
        )
        dialogues, _ = self.corpus.load_dialogues(
            path, "reuse", vocab, require_labels=False
        )
        self.assertIsNone(dialogues[0].emotion_label)
        self.assertListEqual(dialogues[0].target_response, [])

    def test_validate(self):
        dialogues, vocab = self.toy_dialogues()
        dialogue = dialogues[0]
        dialogue.emotion_label = 32
        self.assertRaises(self.DataError, dialogue.validate, len(vocab))
        dialogue.emotion_label = 0
        dialogue.target_response = [len(vocab)]
        self.assertRaises(self.DataError, dialogue.validate, len(vocab))


class TestInference(CorpusTestCase):
    def test_inline(self):
        records = [dict(record) for record in TOY_RECORDS[:2]]
        records[0]["inference"] = [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]
        path = self.write_records("inf.jsonl", records)
        dialogues, vocab = self.corpus.load_dialogues(path)
        self.assertTupleEqual(dialogues[0].inference_features.shape, (2, 3))
        self.assertIsNone(dialogues[1].inference_features)

        batch = self.corpus.make_batches(
            dialogues, vocab, 2, 16, shuffle=False
        )[0]
        self.assertTupleEqual(batch.inference_features.shape, (2, 2, 3))
        np.testing.assert_array_equal(
            batch.inference_mask, [[True, True], [False, False]]
        )

    def test_bad_inline(self):
        record = dict(TOY_RECORDS[0], inference=[1.0, 2.0])
        path = self.write_records("inf.jsonl", [record])
        self.assertRaises(self.DataError, self.corpus.load_dialogues, path)

    def test_mixed_dimensions(self):
        records = [dict(record) for record in TOY_RECORDS[:2]]
        records[0]["inference"] = [[0.1, 0.2]]
        records[1]["inference"] = [[0.1, 0.2, 0.3]]
        path = self.write_records("inf.jsonl", records)
        dialogues, vocab = self.corpus.load_dialogues(path)
        self.assertRaises(
            self.DataError,
            self.corpus.make_batches,
            dialogues,
            vocab,
            2,
            16,
        )

    def test_load_inference(self):
        dialogues, _ = self.toy_dialogues()
        path = self.path("features.jsonl")
        with open(path, "w") as fobj:
            fobj.write(json.dumps({"index": 0, "inference": [[1.0, 2.0]]}))
            fobj.write("\n")
            fobj.write(json.dumps({"index": 2, "inference": [[3.0, 4.0]]}))
            fobj.write("\n")
            fobj.write(json.dumps({"index": 99, "inference": [[5.0, 6.0]]}))
            fobj.write("\n")
        self.assertEqual(self.corpus.load_inference(path, dialogues), 2)
        np.testing.assert_array_equal(
            dialogues[2].inference_features, [[3.0, 4.0]]
        )
        self.assertIsNone(dialogues[1].inference_features)

        with open(path, "w") as fobj:
            fobj.write(json.dumps({"inference": [[1.0]]}) + "\n")
        self.assertRaises(
            self.DataError, self.corpus.load_inference, path, dialogues
        )


class TestBatches(CorpusTestCase):
    def setUp(self):
        super().setUp()
        self.dialogues, self.vocab = self.toy_dialogues()

    def test_layout(self):
        corpus = self.corpus
        batch = corpus.make_batches(
            self.dialogues, self.vocab, 8, 16, shuffle=False
        )[0]
        self.assertEqual(batch.size, 8)
        self.assertTupleEqual(batch.context_ids.shape, (8, 16))
        self.assertTrue(np.all(batch.context_ids[:, 0] == corpus.CLS_ID))

        # "i got the job today" / "that is wonderful news"
        row = batch.dialogue_state_ids[0]
        expected = [corpus.SPK_ID] * 6 + [corpus.LSN_ID] * 4
        self.assertListEqual(list(row[:10]), expected)
        self.assertTrue(np.all(row[10:] == corpus.PAD_ID))
        self.assertListEqual(list(batch.position_ids[0, :10]), list(range(10)))
        self.assertTrue(np.all(batch.position_ids[0, 10:] == 0))
        np.testing.assert_array_equal(
            batch.pad_mask, batch.context_ids != corpus.PAD_ID
        )

        self.assertEqual(batch.target_ids[0, 0], corpus.SOS_ID)
        length = int(batch.target_mask[0].sum())
        self.assertEqual(length, 6 + 2)
        self.assertEqual(batch.target_ids[0, length - 1], corpus.EOS_ID)
        self.assertListEqual(batch.indices, list(range(8)))
        self.assertEqual(batch.max_oov, 0)

    def test_shuffle(self):
        make = self.corpus.make_batches
        first = make(self.dialogues, self.vocab, 3, 16, seed=7)
        second = make(self.dialogues, self.vocab, 3, 16, seed=7)
        self.assertListEqual(
            [len(batch.indices) for batch in first], [3, 3, 2]
        )
        self.assertListEqual(
            [b.indices for b in first], [b.indices for b in second]
        )
        covered = sorted(i for batch in first for i in batch.indices)
        self.assertListEqual(covered, list(range(8)))
        self.assertRaises(
            self.empbase.errors.ConfigError,
            make,
            self.dialogues,
            self.vocab,
            0,
            16,
        )

    def test_truncation(self):
        corpus = self.corpus
        dialogue = self.dialogues[3]
        batch = corpus.make_batches([dialogue], self.vocab, 1, 6)[0]
        tokens = [
            self.vocab.token_of(index) for index in batch.context_ids[0, 1:]
        ]
        self.assertListEqual(tokens, ["oh", "no", "and", "my", "keys"])
        self.assertListEqual(
            list(batch.dialogue_state_ids[0]),
            [corpus.SPK_ID] + [corpus.LSN_ID] * 2 + [corpus.SPK_ID] * 3,
        )
        self.assertRaises(
            self.DataError,
            corpus.make_batches,
            [dialogue],
            self.vocab,
            1,
            6,
            truncate=False,
        )

    def test_target_cut(self):
        corpus = self.corpus
        batch = corpus.make_batches(
            self.dialogues[:1], self.vocab, 1, 16, max_target_len=5
        )[0]
        self.assertListEqual(
            list(batch.target_ids[0]),
            [corpus.SOS_ID]
            + self.vocab.encode(["thank", "you", "i"])
            + [corpus.EOS_ID],
        )

    def test_copy_ids(self):
        corpus = self.corpus
        path = self.write_records(
            "oov.jsonl",
            [
                {
                    "context": ["my zebra ran away"],
                    "target": "find the zebra",
                    "emotion": "sad",
                }
            ],
        )
        dialogues, _ = corpus.load_dialogues(path, "reuse", self.vocab)
        batch = corpus.make_batches(dialogues, self.vocab, 1, 16)[0]
        size = len(self.vocab)
        self.assertListEqual(batch.oov_tokens, [["zebra", "ran", "away"]])
        self.assertEqual(batch.context_ids[0, 2], corpus.UNK_ID)
        self.assertEqual(batch.context_ext_ids[0, 2], size)
        self.assertEqual(batch.context_ext_ids[0, 3], size + 1)
        self.assertEqual(batch.target_ids[0, 3], corpus.UNK_ID)
        self.assertEqual(batch.target_ext_ids[0, 3], size)
        self.assertEqual(
            self.vocab.detokenize(
                batch.target_ext_ids[0], batch.oov_tokens[0]
            ),
            "[UNK] the zebra",
        )

    def test_select(self):
        batch = self.corpus.make_batches(
            self.dialogues, self.vocab, 8, 16, shuffle=False
        )[0]
        part = batch.select([5, 1])
        self.assertListEqual(part.indices, [5, 1])
        np.testing.assert_array_equal(
            part.context_ids[1], batch.context_ids[1]
        )
        self.assertIsNone(part.inference_features)


class TestLexicon(CorpusTestCase):
    def test_vad(self):
        path = write_vad(self.path("vad.tsv"))
        lexicon = self.corpus.load_vad(path)
        self.assertEqual(len(lexicon), len(TOY_VAD))
        self.assertTupleEqual(lexicon.lookup("happy"), TOY_VAD["happy"])
        self.assertTupleEqual(
            self.corpus.lookup_vad(lexicon, "table"), (0.0, 0.5, 0.0)
        )

        no_header = write_vad(self.path("plain.tsv"), header=False)
        self.assertEqual(len(self.corpus.load_vad(no_header)), len(TOY_VAD))

    def test_vad_errors(self):
        path = write_vad(self.path("range.tsv"), {"word": (1.2, 0.5, 0.5)})
        self.assertRaises(self.DataError, self.corpus.load_vad, path)

        path = self.path("columns.tsv")
        with open(path, "w") as fobj:
            fobj.write("word\t0.5\t0.5\n")
        self.assertRaises(self.DataError, self.corpus.load_vad, path)

        path = self.path("text.tsv")
        with open(path, "w") as fobj:
            fobj.write("good\t0.5\t0.5\t0.5\nbad\tx\t0.5\t0.5\n")
        self.assertRaises(self.DataError, self.corpus.load_vad, path)

    def test_vectors(self):
        path = self.path("vectors.txt")
        with open(path, "w") as fobj:
            fobj.write("happy 0.1 0.2\nsad 0.3 0.4\nother 0.5 0.6\n")
        vectors = self.corpus.load_vectors(path)
        self.assertEqual(len(vectors), 3)
        self.assertEqual(vectors.dim, 2)
        np.testing.assert_array_equal(vectors["sad"], [0.3, 0.4])
        np.testing.assert_array_equal(
            vectors.scaled(2.0)["sad"], [0.6, 0.8]
        )

        only = self.corpus.load_vectors(path, {"happy", "sad"})
        self.assertNotIn("other", only)

        with open(path, "a") as fobj:
            fobj.write("bad 0.1 0.2 0.3\n")
        self.assertRaises(self.DataError, self.corpus.load_vectors, path)


class TestStatistics(CorpusTestCase):
    def test_idf(self):
        dialogues, vocab = self.toy_dialogues()
        idf = self.corpus.compute_idf(dialogues, vocab)
        self.assertEqual(len(idf), len(vocab))
        for token in self.corpus.RESERVED:
            self.assertEqual(idf[vocab.id_of(token)], 0.0, token)
        # "proud" is in two of eight dialogues
        self.assertAlmostEqual(idf[vocab.id_of("proud")], math.log(4.0))
        # unseen words count as one document
        self.assertAlmostEqual(idf[vocab.id_of("angry")], math.log(8.0))
        self.assertTrue(np.all(idf.weights >= 0.0))
        self.assertRaises(
            self.DataError, self.corpus.compute_idf, [], vocab
        )

    def test_frequencies(self):
        dialogues, vocab = self.toy_dialogues()
        counts = self.corpus.token_frequencies(dialogues, vocab)
        self.assertEqual(counts[vocab.id_of("proud")], 2)
        self.assertEqual(counts[vocab.id_of("sun")], 2)
        self.assertEqual(counts[vocab.id_of("dog")], 0)
        self.assertTrue(np.all(counts[: len(self.corpus.RESERVED)] == 0))

    def test_resources(self):
        dialogues, vocab = self.toy_dialogues()
        resources = self.toy_resources(dialogues, vocab)
        self.assertTupleEqual(resources.vad_table.shape, (len(vocab), 3))
        np.testing.assert_array_equal(
            resources.vad_table[vocab.id_of("scary")], TOY_VAD["scary"]
        )
        np.testing.assert_array_equal(
            resources.vad_table[vocab.id_of("dog")], (0.0, 0.5, 0.0)
        )
        np.testing.assert_array_equal(
            resources.emotion_word_ids, np.arange(7, 39)
        )

        bare = self.corpus.Vocabulary(["hello"])
        self.assertRaises(
            self.DataError,
            self.corpus.Resources,
            bare,
            np.zeros((8, 3)),
            np.zeros(8),
            np.zeros(8),
        )


class TestConvertEd(CorpusTestCase):
    FIELDS = [
        "conv_id",
        "utterance_idx",
        "context",
        "prompt",
        "speaker_idx",
        "utterance",
    ]

    def write_csv(self, rows):
        path = self.path("ed.csv")
        with open(path, "w", newline="") as fobj:
            writer = csv.writer(fobj)
            writer.writerow(self.FIELDS)
            writer.writerows(rows)
        return path

    def test_convert(self):
        path = self.write_csv(
            [
                ["c:1", 1, "proud", "i won_comma_ yay", 1, "i won_comma_ yay"],
                ["c:1", 2, "proud", "i won_comma_ yay", 2, "congrats"],
                ["c:1", 3, "proud", "i won_comma_ yay", 1, "thanks"],
                ["c:1", 4, "proud", "i won_comma_ yay", 2, "welcome"],
                ["c:2", 1, "sad", "rain", 1, "it rained"],
            ]
        )
        out = self.path("ed.jsonl")
        records = self.corpus.convert_ed(path, out)
        self.assertEqual(len(records), 2)
        self.assertDictEqual(
            records[0],
            {
                "conv_id": "c:1",
                "context": ["i won, yay"],
                "target": "congrats",
                "emotion": "proud",
                "situation": "i won, yay",
            },
        )
        self.assertListEqual(
            records[1]["context"], ["i won, yay", "congrats", "thanks"]
        )
        dialogues, _ = self.corpus.load_dialogues(out)
        self.assertEqual(len(dialogues), 2)

    def test_bad_emotion(self):
        path = self.write_csv([["c:1", 1, "bored", "x", 1, "hello"]])
        self.assertRaises(self.DataError, self.corpus.convert_ed, path)

    def test_split(self):
        records = [
            {"conv_id": f"c{index // 2}", "context": ["x"]}
            for index in range(20)
        ]
        train, valid, test = self.corpus.split_records(records, seed=1)
        self.assertListEqual([len(train), len(valid), len(test)], [16, 2, 2])
        ids = [
            {record["conv_id"] for record in part}
            for part in (train, valid, test)
        ]
        self.assertFalse(ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])

        again = self.corpus.split_records(records, seed=1)
        self.assertListEqual(again[0], train)
