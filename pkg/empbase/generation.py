# empbase/generation.py
"""
This module implements response generation and its losses.

The decoder reads the target prefix and the student context. A
pointer-generator head mixes the vocabulary distribution with a copy
distribution over the source tokens:

    P_w = p_gen · P_vocab + (1 - p_gen) · P_copy

Source-only words get ids past the vocabulary (the extended vocabulary
of the batch), so they can be copied even though the vocabulary head
never produces them.

The cross-contrastive loss compares four pooled and projected views:
the student context, the encoded target response, the joint emotion
encoding and the generated word distribution.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np

from . import tensor as T
from .corpus import CLS_ID, EOS_ID, PAD_ID, RESERVED, SOS_ID, UNK_ID
from .layers import Linear, TransformerDecoder, TransformerEncoder
from .layers import positional_encoding

logger = logging.getLogger(__name__)

CONTEXT = "context"
RESPONSE = "response"
EMOTION = "emotion"
WORDS = "words"

# positive pairs; (context, emotion) is left out on purpose
PAIR_TYPES = (
    (RESPONSE, EMOTION),
    (CONTEXT, WORDS),
    (CONTEXT, RESPONSE),
    (EMOTION, WORDS),
    (RESPONSE, WORDS),
)


@dataclass
class DecoderOutputs:
    """
    embedded: E_Y, B×T×d; states: B×T×d; probs: P_w, B×T×|V_ext|;
    attention: copy attention, B×T×L; p_gen: B×T×1.
    """

    embedded: T.TensorValue
    states: T.TensorValue
    probs: T.TensorValue
    attention: T.TensorValue
    p_gen: T.TensorValue


def copy_mask(batch):
    """Source positions that may be copied: real tokens except [CLS]."""
    return np.asarray(batch.pad_mask, dtype=bool) & (
        np.asarray(batch.context_ids) != CLS_ID
    )


class ResponseGenerator(object):
    """
    This class holds the decoder and the pointer-generator head.

    Default:
        ResponseGenerator(store, config, vocab_size, word_table, rng=None)
    """

    def __init__(self, store, config, vocab_size, word_table, rng=None):
        dims = config.dims
        self.dim = dims.d
        self.vocab_size = vocab_size
        self.word_table = word_table
        length = max(dims.max_target_len, config.decoding.max_len + 1)
        self.positions = positional_encoding(length, dims.d)
        self.decoder = TransformerDecoder(
            store,
            "decoder",
            dims.d,
            dims.heads,
            dims.ff_dim,
            layers=dims.layers,
            dropout=dims.dropout,
            rng=rng,
        )
        self.output = Linear(store, "generator.output", dims.d, vocab_size)
        self.copy_query = Linear(
            store, "generator.copy_query", dims.d, dims.d, bias=False
        )
        self.copy_key = Linear(
            store, "generator.copy_key", dims.d, dims.d, bias=False
        )
        self.gate = Linear(store, "generator.gate", 3 * dims.d, 1)

    def embed(self, input_ids):
        input_ids = np.asarray(input_ids)
        words = T.embedding(self.word_table, input_ids, PAD_ID)
        return words + self.positions[: input_ids.shape[1]]

    def decode(
        self,
        input_ids,
        input_mask,
        memory,
        memory_mask,
        source_mask,
        source_ext_ids,
        extended_size,
        p_gen_override=None,
    ):
        """decode

        Teacher-forced pass over a target prefix.

        Args:
            input_ids: (array) : B×T base vocabulary ids, [SOS] first
            input_mask: (array) : B×T, True on real tokens
            memory: (TensorValue) : H_C^stu, B×L×d
            memory_mask: (array) : B×L pad mask of the context
            source_mask: (array) : B×L positions open to copying
            source_ext_ids: (array) : B×L copy-extended source ids
            extended_size: (int) : |V| plus the batch's source-only words
            p_gen_override: (float : None) : fix the gate, for checks

        Returns:
            (DecoderOutputs)
        """
        embedded = self.embed(input_ids)
        states = self.decoder(embedded, memory, input_mask, memory_mask)
        vocab_probs = T.softmax(self.output(states))
        batch, steps, _ = vocab_probs.shape
        if extended_size > self.vocab_size:
            padding = np.zeros((batch, steps, extended_size - self.vocab_size))
            vocab_probs = T.concat([vocab_probs, padding])

        scores = T.matmul(
            self.copy_query(states), T.swap_last(self.copy_key(memory))
        ) / math.sqrt(self.dim)
        attention = T.softmax(
            scores, mask=np.asarray(source_mask, dtype=bool)[:, None, :]
        )
        context = T.matmul(attention, memory)

        if p_gen_override is None:
            p_gen = T.sigmoid(self.gate(T.concat([states, context, embedded])))
        else:
            p_gen = T.as_tensor(np.full((batch, steps, 1), p_gen_override))
        copy_probs = T.scatter_sum(attention, source_ext_ids, extended_size)
        probs = p_gen * vocab_probs + (1.0 - p_gen) * copy_probs
        return DecoderOutputs(embedded, states, probs, attention, p_gen)


def generation_loss(probs, labels, mask):
    """L_g: mean -log P_w[target] over the real target steps."""
    return T.cross_entropy(probs, labels, mask)


def diversity_weights(labels, mask, token_freqs):
    """diversity_weights

    Per target token weights w = 1 - f / Σf from the corpus frequencies,
    normalized to mean 1 over the counted tokens of the batch. Tokens
    without a corpus count (reserved and copy-extended ids) weigh 1.
    Equal frequencies therefore give weight 1 everywhere.

    Args:
        labels: (array) : B×T copy-extended target ids
        mask: (array) : B×T, True on real steps
        token_freqs: (array) : |V| corpus counts

    Returns:
        weights (array) : B×T, 0 on padded steps
    """
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    freqs = np.asarray(token_freqs, dtype=np.float64)
    total = freqs.sum()
    weights = np.ones(labels.shape)
    counted = mask & (labels >= len(RESERVED)) & (labels < len(freqs))
    if total > 0 and counted.any():
        raw = 1.0 - freqs[labels[counted]] / total
        mean = raw.mean()
        weights[counted] = raw / mean if mean > 0 else 1.0
    return np.where(mask, weights, 0.0)


def diversity_loss(probs, labels, mask, token_freqs):
    """L_div: frequency-weighted NLL, averaged over the real steps."""
    weights = diversity_weights(labels, mask, token_freqs)
    nll = T.neg(T.log(T.pick(probs, labels)))
    count = max(float(np.asarray(mask, dtype=bool).sum()), 1.0)
    return T.reduce_sum(nll * weights) / count


@dataclass
class ContrastiveViews:
    """Pooled and projected views, each B×d_cl; emotion is None when
    both emotion encoders are ablated."""

    context: T.TensorValue
    response: T.TensorValue
    emotion: T.TensorValue
    words: T.TensorValue

    def get(self, name):
        return getattr(self, name)


def expected_embedding(probs, word_table, vocab_size):
    """
    Probability-weighted sum of the word rows per step. Mass on
    copy-extended ids is spent on the [UNK] row.
    """
    expected = T.matmul(probs[..., :vocab_size], word_table)
    if probs.shape[-1] > vocab_size:
        extra = T.reduce_sum(probs[..., vocab_size:], axis=-1, keepdims=True)
        expected = expected + extra * word_table[UNK_ID]
    return expected


class ContrastiveHead(object):
    """
    This class holds Encoder_Y and the four view projections.

    Default:
        ContrastiveHead(store, config, word_table, rng=None)
    """

    def __init__(self, store, config, word_table, rng=None):
        dims = config.dims
        self.word_table = word_table
        self.vocab_size = word_table.shape[0]
        self.response_encoder = TransformerEncoder(
            store,
            "response_encoder",
            dims.d,
            dims.heads,
            dims.ff_dim,
            layers=1,
            dropout=dims.dropout,
            rng=rng,
        )
        joint = 0
        if config.ablations.enable_tee:
            joint += config.d_t
        if config.ablations.enable_see:
            joint += config.d_s
        self.projections = {
            CONTEXT: Linear(store, "contrast.context", dims.d, dims.d_cl),
            RESPONSE: Linear(store, "contrast.response", dims.d, dims.d_cl),
            WORDS: Linear(store, "contrast.words", dims.d, dims.d_cl),
        }
        if joint:
            self.projections[EMOTION] = Linear(
                store, "contrast.emotion", joint, dims.d_cl
            )

    def __call__(
        self, student, pad_mask, embedded, target_mask, joint, probs
    ):
        """
        Args:
            student: (TensorValue) : H_C^stu, B×L×d
            pad_mask: (array) : B×L
            embedded: (TensorValue) : E_Y, B×T×d
            target_mask: (array) : B×T
            joint: (TensorValue : None) : H_ts, B×L×(d_t + d_s)
            probs: (TensorValue) : P_w, B×T×|V_ext|

        Returns:
            (ContrastiveViews)
        """
        response = self.response_encoder(embedded, target_mask)
        words = expected_embedding(probs, self.word_table, self.vocab_size)
        emotion = None
        if joint is not None and EMOTION in self.projections:
            emotion = self.projections[EMOTION](
                T.masked_mean(joint, pad_mask, axis=1)
            )
        return ContrastiveViews(
            context=self.projections[CONTEXT](
                T.masked_mean(student, pad_mask, axis=1)
            ),
            response=self.projections[RESPONSE](
                T.masked_mean(response, target_mask, axis=1)
            ),
            emotion=emotion,
            words=self.projections[WORDS](
                T.masked_mean(words, target_mask, axis=1)
            ),
        )


def active_pairs(views):
    """The positive pair types whose two views both exist."""
    return [
        pair
        for pair in PAIR_TYPES
        if views.get(pair[0]) is not None and views.get(pair[1]) is not None
    ]


def info_nce(anchor, positive, tau):
    """info_nce

    Mean over anchors of -log(exp(a·p/τ) / Σ_k exp(a·q_k/τ)), where the
    q_k are the positive view of every example in the batch.

    Args:
        anchor: (TensorValue) : B×k
        positive: (TensorValue) : B×k, row i pairs with anchor row i
        tau: (float) : temperature

    Returns:
        (TensorValue) : scalar
    """
    logits = T.matmul(anchor, T.swap_last(positive)) / tau
    log_probs = T.log_softmax(logits, axis=-1)
    diagonal = T.pick(log_probs, np.arange(anchor.shape[0]))
    return T.neg(T.reduce_mean(diagonal))


def ccl_loss(views, tau):
    """ccl_loss

    L_ccl: the mean InfoNCE over the active positive pair types. A batch
    of one has no negatives; the loss is 0 then.

    Args:
        views: (ContrastiveViews) : pooled views
        tau: (float) : temperature

    Returns:
        (TensorValue) : scalar
    """
    if views.context.shape[0] < 2:
        logger.warning("contrastive loss needs two examples; using 0")
        return T.TensorValue(0.0)
    pairs = active_pairs(views)
    terms = [info_nce(views.get(a), views.get(b), tau) for a, b in pairs]
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total / float(len(terms))


def pair_similarities(views):
    """
    Batch-mean dot similarity of the positive pairs and of the in-batch
    negatives, per pair type: {(a, b): (positive, negative)}.
    """
    result = {}
    for first, second in active_pairs(views):
        sims = views.get(first).data @ views.get(second).data.T
        size = sims.shape[0]
        positive = float(np.trace(sims) / size)
        negative = float("nan")
        if size > 1:
            negative = float(
                (sims.sum() - np.trace(sims)) / (size * size - size)
            )
        result[(first, second)] = (positive, negative)
    return result


def total_loss(l_e, l_g, l_ccl, l_div, gamma):
    """L = γ1·L_e + γ2·L_g + γ3·L_ccl + γ4·L_div; None terms are skipped."""
    total = T.TensorValue(0.0)
    for weight, term in zip(gamma, (l_e, l_g, l_ccl, l_div)):
        if term is not None:
            total = total + float(weight) * term
    return total


def greedy_decode(model, batch, max_len, p_gen_override=None):
    """greedy_decode

    Greedy batched decoding. Each step re-reads the whole prefix and
    appends the most probable word; a row stops at [EOS] or after
    max_len words.

    Args:
        model: (EmpatheticModel) : a built model
        batch: (Batch) : the contexts
        max_len: (int) : word limit per response
        p_gen_override: (float : None) : fix the gate, for checks

    Returns:
        responses (list of lists) : words per example, copy-extended ids
            resolved to their source words
    """
    vocab = model.resources.vocab
    vocab_size = len(vocab)
    size = batch.size
    extended = vocab_size + batch.max_oov
    sources = copy_mask(batch)
    prefix = np.full((size, 1), SOS_ID, dtype=np.int64)
    words = [[] for _ in range(size)]
    done = np.zeros(size, dtype=bool)
    with T.no_grad():
        memory = model.context(batch).student
        for _ in range(max_len):
            inputs = np.where(prefix >= vocab_size, UNK_ID, prefix)
            out = model.generator.decode(
                inputs,
                np.ones(inputs.shape, dtype=bool),
                memory,
                batch.pad_mask,
                sources,
                batch.context_ext_ids,
                extended,
                p_gen_override,
            )
            chosen = np.argmax(out.probs.data[:, -1, :], axis=-1)
            for row in np.flatnonzero(~done):
                if chosen[row] == EOS_ID:
                    done[row] = True
                else:
                    words[row].append(int(chosen[row]))
            if done.all():
                break
            prefix = np.concatenate([prefix, chosen[:, None]], axis=1)
    return [
        [vocab.token_of(index, oov) for index in ids]
        for ids, oov in zip(words, batch.oov_tokens)
    ]
