# empbase/metrics.py
"""
This module implements the automatic evaluation: emotion accuracy,
perplexity and the Dist-1/Dist-2 diversity of generated responses.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from tqdm import tqdm

from .corpus import EMOTION_LABELS, make_batches

logger = logging.getLogger(__name__)

METRIC_KEYS = ("acc", "ppl", "dist1", "dist2")


def emotion_accuracy(predictions, golds):
    """Percent of examples whose predicted label matches the gold one."""
    predictions = np.asarray(predictions)
    golds = np.asarray(golds)
    if predictions.shape != golds.shape:
        raise ValueError(
            f"{predictions.shape[0]} predictions for {golds.shape[0]} labels"
        )
    if golds.size == 0:
        return 0.0
    return 100.0 * float((predictions == golds).sum()) / golds.size


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def distinct_n(responses, n):
    """distinct_n

    Corpus-level Dist-n: 100 · unique n-grams / all n-grams, pooled over
    every response. Responses may be token lists or strings.

    Args:
        responses: (list) : generated responses
        n: (int) : n-gram order

    Returns:
        percent (float) : 0.0 when there is no n-gram at all
    """
    total = 0
    unique = set()
    for response in responses:
        tokens = response.split() if isinstance(response, str) else response
        grams = _ngrams(list(tokens), n)
        total += len(grams)
        unique.update(grams)
    if total == 0:
        return 0.0
    return 100.0 * len(unique) / total


def perplexity(model, batches):
    """perplexity

    exp of the token-mean NLL over every real reference token, [EOS]
    included, under teacher forcing.

    Args:
        model: (EmpatheticModel) : the model
        batches: (list of Batch) : the evaluation set

    Returns:
        (ppl, tokens) (tuple)
    """
    total = 0.0
    count = 0
    for batch in batches:
        nll, tokens = model.nll(batch)
        total += nll
        count += tokens
    if count == 0:
        return float("nan"), 0
    return math.exp(total / count), count


@dataclass
class EvalReport:
    """
    Evaluation results. acc, dist1 and dist2 are percentages.

    The reference Dist-n values are those of the gold responses, for
    comparison.
    """

    acc: float
    ppl: float
    dist1: float
    dist2: float
    examples: int = 0
    tokens: int = 0
    split: str = None
    step: int = None
    reference_dist1: float = None
    reference_dist2: float = None
    extra: dict = field(default_factory=dict)

    def metrics(self):
        return {key: getattr(self, key) for key in METRIC_KEYS}

    def lines(self):
        """Machine-readable `key=value` lines."""
        return [f"{key}={value:.4f}" for key, value in self.metrics().items()]

    def summary(self):
        """A structured text block for people."""
        title = "evaluation"
        if self.split:
            title += f" on {self.split}"
        if self.step is not None:
            title += f" at step {self.step}"
        rows = [
            title,
            f"  examples      {self.examples}",
            f"  tokens        {self.tokens}",
            f"  accuracy      {self.acc:.2f}%",
            f"  perplexity    {self.ppl:.4f}",
            f"  dist-1        {self.dist1:.2f}%",
            f"  dist-2        {self.dist2:.2f}%",
        ]
        if self.reference_dist1 is not None:
            rows.append(
                f"  reference     dist-1 {self.reference_dist1:.2f}% "
                f"dist-2 {self.reference_dist2:.2f}%"
            )
        return "\n".join(rows)


def evaluate(
    model,
    dialogues,
    batch_size=16,
    max_len=None,
    split=None,
    generate=True,
    progress=False,
):
    """evaluate

    Perplexity, emotion prediction and greedy generation in one pass over
    the dialogues, in corpus order.

    Default:
        evaluate(model, dialogues, batch_size=16, max_len=None, split=None,
                 generate=True, progress=False)

    Args:
        model: (EmpatheticModel) : the model
        dialogues: (list) : labelled dialogues
        batch_size: (int) : evaluation batch size
        max_len: (int : None) : decoding limit, the config's by default
        split: (str : None) : name shown in the report
        generate: (bool) : False skips decoding; dist1/dist2 are then 0
        progress: (bool) : show a progress bar

    Returns:
        (report, records) (tuple) : EvalReport and one generation record
            per dialogue
    """
    dims = model.config.dims
    batches = make_batches(
        dialogues,
        model.vocab,
        batch_size,
        dims.max_context_len,
        max_target_len=dims.max_target_len,
        truncate=model.config.training.truncate,
        shuffle=False,
    )
    ppl, tokens = perplexity(model, batches)
    predictions = []
    golds = []
    generated = []
    records = []
    by_index = {dialogue.index: dialogue for dialogue in dialogues}
    for batch in tqdm(batches, disable=not progress, desc="evaluate"):
        predicted = model.predict(batch)
        predictions.extend(predicted.tolist())
        golds.extend(batch.emotion_labels.tolist())
        responses = [[] for _ in range(batch.size)]
        if generate:
            responses = model.generate(batch, max_len)
        generated.extend(responses)
        for row, index in enumerate(batch.indices):
            dialogue = by_index[index]
            gold = int(batch.emotion_labels[row])
            records.append(
                {
                    "context": [
                        " ".join(words) for words in dialogue.context_tokens
                    ],
                    "reference": " ".join(dialogue.target_tokens),
                    "generated": " ".join(responses[row]),
                    "predicted_emotion": EMOTION_LABELS[int(predicted[row])],
                    "gold_emotion": (
                        EMOTION_LABELS[gold] if gold >= 0 else None
                    ),
                }
            )
    references = [dialogue.target_tokens for dialogue in dialogues]
    report = EvalReport(
        acc=emotion_accuracy(predictions, golds),
        ppl=ppl,
        dist1=distinct_n(generated, 1),
        dist2=distinct_n(generated, 2),
        examples=len(dialogues),
        tokens=tokens,
        split=split,
        step=model.step,
        reference_dist1=distinct_n(references, 1),
        reference_dist2=distinct_n(references, 2),
    )
    logger.info("%s", " ".join(report.lines()))
    return report, records
