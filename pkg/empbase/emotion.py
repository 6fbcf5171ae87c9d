# empbase/emotion.py
"""
This module implements the trait and state emotion embeddings.

Trait embeddings carry the static lexicon knowledge of each token:

    V_t = VAD(token) ⊕ IDF(token) ⊕ W_C·H_C

State embeddings carry its inclination in context, the cosine profile
of the mapped context embedding against the 32 mapped emotion words:

    V_cos = cos(W_2·E_C + b_2, W_1·Emb(e) + b_1)
    V_s   = V_cos ⊕ IDF(token) ⊕ W_C·H_C

Each is then passed through its own small transformer encoder.
"""
from dataclasses import dataclass
import logging

import numpy as np

from . import tensor as T
from .corpus import PAD_ID
from .layers import Linear, TransformerEncoder

logger = logging.getLogger(__name__)


@dataclass
class EmotionEncoding:
    """Trait and state tensors; the parts of an ablated side are None."""

    compressed: T.TensorValue = None
    trait: T.TensorValue = None
    trait_hidden: T.TensorValue = None
    inclination: T.TensorValue = None
    state: T.TensorValue = None
    state_hidden: T.TensorValue = None

    @property
    def joint_hidden(self):
        """H_ts = H_t ⊕ H_s, or whichever side exists."""
        parts = [
            part
            for part in (self.trait_hidden, self.state_hidden)
            if part is not None
        ]
        if not parts:
            return None
        if len(parts) == 1:
            return parts[0]
        return T.concat(parts)


def token_lexicon_features(context_ids, vad_table, idf_table):
    """
    Per token VAD triples (B×L×3) and IDF weights (B×L×1).

    The resource tables already hold the default triple for uncovered
    tokens and an IDF of 0 for [PAD].
    """
    ids = np.asarray(context_ids)
    return vad_table[ids], idf_table[ids][..., None]


def build_trait(context_ids, compressed, vad_table, idf_table):
    """build_trait

    V_t = VAD ⊕ IDF ⊕ H̃_C per token.

    Args:
        context_ids: (array) : B×L vocabulary ids
        compressed: (TensorValue) : H̃_C = W_C·H_C, B×L×d_cs
        vad_table: (array) : |V|×3
        idf_table: (array) : |V|

    Returns:
        V_t (TensorValue) : B×L×(4 + d_cs)
    """
    vad, idf = token_lexicon_features(context_ids, vad_table, idf_table)
    return T.concat([T.as_tensor(vad), T.as_tensor(idf), compressed])


def state_inclination(context_mapped, labels_mapped):
    """V_cos[b, i, k] = cos(Ẽ_C[b, i], Ẽ_e[k]), zero for zero-norm rows."""
    return T.cosine_similarity(context_mapped, labels_mapped)


def build_state(inclination, context_ids, idf_table, compressed):
    """V_s = V_cos ⊕ IDF ⊕ H̃_C, B×L×(33 + d_cs)."""
    idf = np.asarray(idf_table)[np.asarray(context_ids)][..., None]
    return T.concat([inclination, T.as_tensor(idf), compressed])


class EmotionEncoder(object):
    """
    This class holds W_C, W_1/b_1, W_2/b_2 and the trait and state
    encoders.

    With TEE disabled nothing trait-specific is registered; the same
    holds for SEE. W_C is shared by both sides and absent when both are
    disabled.

    Default:
        EmotionEncoder(store, config, resources, word_table, rng=None)
    """

    def __init__(self, store, config, resources, word_table, rng=None):
        dims = config.dims
        self.enable_trait = config.ablations.enable_tee
        self.enable_state = config.ablations.enable_see
        self.resources = resources
        self.word_table = word_table
        self.compress = None
        if self.enable_trait or self.enable_state:
            self.compress = Linear(
                store, "emotion.compress", dims.d, dims.d_cs, bias=False
            )
        if self.enable_trait:
            self.trait_encoder = TransformerEncoder(
                store,
                "trait_encoder",
                config.d_t,
                dims.trait_heads,
                2 * config.d_t,
                layers=dims.layers,
                dropout=dims.dropout,
                rng=rng,
            )
        if self.enable_state:
            self.label_map = Linear(store, "emotion.label_map", dims.d, dims.d)
            self.context_map = Linear(
                store, "emotion.context_map", dims.d, dims.d
            )
            self.state_encoder = TransformerEncoder(
                store,
                "state_encoder",
                config.d_s,
                dims.state_heads,
                2 * config.d_s,
                layers=dims.layers,
                dropout=dims.dropout,
                rng=rng,
            )

    def label_embeddings(self):
        """Ẽ_e: the mapped word rows of the 32 emotion words, 32×d."""
        rows = T.embedding(
            self.word_table, self.resources.emotion_word_ids, PAD_ID
        )
        return self.label_map(rows)

    def __call__(self, context_ids, pad_mask, embedded, hidden):
        """
        Args:
            context_ids: (array) : B×L ids
            pad_mask: (array) : B×L, True on real tokens
            embedded: (TensorValue) : E_C
            hidden: (TensorValue) : H_C

        Returns:
            (EmotionEncoding)
        """
        out = EmotionEncoding()
        if self.compress is None:
            return out
        out.compressed = self.compress(hidden)
        if self.enable_trait:
            out.trait = build_trait(
                context_ids,
                out.compressed,
                self.resources.vad_table,
                self.resources.idf_table,
            )
            out.trait_hidden = self.trait_encoder(out.trait, pad_mask)
        if self.enable_state:
            out.inclination = state_inclination(
                self.context_map(embedded), self.label_embeddings()
            )
            out.state = build_state(
                out.inclination,
                context_ids,
                self.resources.idf_table,
                out.compressed,
            )
            out.state_hidden = self.state_encoder(out.state, pad_mask)
        return out
