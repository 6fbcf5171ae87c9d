# empbase/context.py
"""
This module implements the context encoder.

The context embedding E_C sums word, position and dialogue state
embeddings. A transformer encoder turns it into H_C, and two
independently parameterized enrichment blocks derive the teacher and
student contexts from H_C and the optional inference features.
"""
from dataclasses import dataclass
import logging

import numpy as np

from . import tensor as T
from .corpus import LSN_ID, PAD_ID, SPK_ID
from .errors import DataError
from .layers import (
    FeedForward,
    LayerNorm,
    MultiHeadAttention,
    TransformerEncoder,
    positional_encoding,
)

logger = logging.getLogger(__name__)

TEACHER = "teacher"
STUDENT = "student"

# rows of the dialogue state table
STATE_PAD, STATE_SPEAKER, STATE_LISTENER = range(3)


@dataclass
class ContextEncoding:
    """E_C, H_C and the enriched contexts, all B×L×d."""

    embedded: T.TensorValue
    hidden: T.TensorValue
    teacher: T.TensorValue
    student: T.TensorValue


def state_rows(dialogue_state_ids):
    """Map [SPK]/[LSN] vocabulary ids onto rows of the state table."""
    ids = np.asarray(dialogue_state_ids)
    rows = np.full(ids.shape, STATE_PAD, dtype=np.int64)
    rows[ids == SPK_ID] = STATE_SPEAKER
    rows[ids == LSN_ID] = STATE_LISTENER
    return rows


def init_word_table(vocab, dim, rng, vectors=None, scale=0.1):
    """init_word_table

    Initial word embedding values: pretrained vectors where available,
    uniform(-scale, scale) elsewhere, and a zero [PAD] row.

    Args:
        vocab: (Vocabulary) : row order
        dim: (int) : embedding width
        rng: (numpy.random.Generator) : draws the random rows
        vectors: (WordVectors : None) : pretrained vectors
        scale: (float) : uniform bound

    Returns:
        table (array) : |V|×dim
    """
    table = rng.uniform(-scale, scale, size=(len(vocab), dim))
    found = 0
    if vectors is not None and len(vectors):
        if vectors.dim != dim:
            raise DataError(
                f"word vectors have dimension {vectors.dim}, the model {dim}"
            )
        for index, token in enumerate(vocab.tokens):
            if token in vectors:
                table[index] = vectors[token]
                found += 1
    table[PAD_ID] = 0.0
    logger.info(
        "word embeddings: %d of %d rows from pretrained vectors",
        found,
        len(vocab),
    )
    return table


class Enrichment(object):
    """
    One role's refinement of H_C: cross-attention over the inference
    features followed by a feed-forward block, both residual.

    The output projections start at zero, so a fresh block is the exact
    identity.

    Default:
        Enrichment(store, name, dim, heads, hidden)
    """

    def __init__(self, store, name, dim, heads, hidden):
        self.dim = dim
        self.cross_norm = LayerNorm(store, f"{name}.cross_norm", dim)
        self.cross = MultiHeadAttention(
            store, f"{name}.cross", dim, heads, zero_output=True
        )
        self.ffn_norm = LayerNorm(store, f"{name}.ffn_norm", dim)
        self.ffn = FeedForward(
            store, f"{name}.ffn", dim, hidden, zero_output=True
        )

    def __call__(self, hidden, features=None, feature_mask=None):
        if features is not None:
            features = T.as_tensor(features)
            if features.shape[-1] != self.dim:
                raise DataError(
                    f"inference features have dimension "
                    f"{features.shape[-1]}, expected {self.dim}"
                )
            hidden = hidden + self.cross(
                self.cross_norm(hidden), features, key_mask=feature_mask
            )
        return hidden + self.ffn(self.ffn_norm(hidden))


class ContextEncoder(object):
    """
    This class holds the embedding tables, Encoder_C and the enrichment
    blocks.

    The word table is shared with the emotion encoders and the decoder.
    Without emotion guidance there is no teacher, so no teacher block
    is registered.

    Default:
        ContextEncoder(store, config, vocab, vectors=None, rng=None)

    Args:
        store: (ParameterStore) : parameter registry
        config: (RunConfig) : dims and ablations
        vocab: (Vocabulary) : the model vocabulary
        vectors: (WordVectors : None) : pretrained word vectors
        rng: (numpy.random.Generator : None) : dropout generator
    """

    def __init__(self, store, config, vocab, vectors=None, rng=None):
        dims = config.dims
        self.dim = dims.d
        self.word_table = store.add(
            "embedding.word",
            (len(vocab), dims.d),
            value=init_word_table(vocab, dims.d, store.rng, vectors),
        )
        state = store.rng.uniform(-0.1, 0.1, size=(3, dims.d))
        state[STATE_PAD] = 0.0
        self.state_table = store.add(
            "embedding.state", (3, dims.d), value=state
        )
        self.positions = positional_encoding(dims.max_context_len, dims.d)

        self.encoder = TransformerEncoder(
            store,
            "context_encoder",
            dims.d,
            dims.heads,
            dims.ff_dim,
            layers=dims.layers,
            dropout=dims.dropout,
            rng=rng,
        )
        self.enrichers = {
            STUDENT: Enrichment(
                store, "enrich_student", dims.d, dims.heads, dims.ff_dim
            )
        }
        if config.ablations.enable_egm:
            self.enrichers[TEACHER] = Enrichment(
                store, "enrich_teacher", dims.d, dims.heads, dims.ff_dim
            )

    def embed(self, batch):
        """E_C = word + position + dialogue state, B×L×d."""
        words = T.embedding(self.word_table, batch.context_ids, PAD_ID)
        states = T.embedding(
            self.state_table, state_rows(batch.dialogue_state_ids), STATE_PAD
        )
        positions = self.positions[batch.position_ids]
        return words + states + positions

    def encode(self, embedded, pad_mask):
        return self.encoder(embedded, pad_mask)

    def enrich(self, hidden, features=None, feature_mask=None, role=STUDENT):
        if role not in self.enrichers:
            raise KeyError(f"no enrichment for role {role}")
        return self.enrichers[role](hidden, features, feature_mask)

    def __call__(self, batch):
        embedded = self.embed(batch)
        hidden = self.encode(embedded, batch.pad_mask)
        features = batch.inference_features
        mask = batch.inference_mask
        teacher = None
        if TEACHER in self.enrichers:
            teacher = self.enrich(hidden, features, mask, TEACHER)
        student = self.enrich(hidden, features, mask, STUDENT)
        return ContextEncoding(embedded, hidden, teacher, student)
