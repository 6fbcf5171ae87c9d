# empbase/guidance.py
"""
This module implements the teacher and student emotion predictors.

Both predictors pool their token representations with the emotion
intensity weights, gate the pooled vector and classify it into the 32
emotions:

    C  = Σ_i softmax(I)_i · V[i]
    S  = softmax(W_s · tanh(W_c · C + b_3))
    S' = tanh(W_4 · (C ⊙ S) + b_4)
    P  = softmax(W_out · S' + b_out)

The teacher reads H_C^tchr ⊕ V_t ⊕ V_s and the student reads
H_C^stu ⊕ H_t ⊕ H_s.
The student learns from the teacher's detached distribution.
"""
from dataclasses import dataclass
import logging

import numpy as np

from . import tensor as T
from .config import NUM_EMOTIONS
from .errors import DataError, ShapeError
from .layers import Linear

logger = logging.getLogger(__name__)


def raw_intensity(vad):
    """‖(valence - 0.5, arousal / 2)‖ per token."""
    vad = np.asarray(vad, dtype=np.float64)
    return np.sqrt((vad[..., 0] - 0.5) ** 2 + (vad[..., 1] / 2.0) ** 2)


def intensity(context_ids, pad_mask, vad_table):
    """intensity

    Emotion intensity of every context token, min-max normalized over the
    real tokens of each row. A row whose tokens all share one value gets
    I = 1 throughout. Padded positions hold 0 and are masked downstream.

    Args:
        context_ids: (array) : B×L ids
        pad_mask: (array) : B×L, True on real tokens
        vad_table: (array) : |V|×3

    Returns:
        I (array) : B×L
    """
    mask = np.asarray(pad_mask, dtype=bool)
    raw = raw_intensity(np.asarray(vad_table)[np.asarray(context_ids)])
    low = np.where(mask, raw, np.inf).min(axis=-1, keepdims=True)
    high = np.where(mask, raw, -np.inf).max(axis=-1, keepdims=True)
    span = high - low
    flat = ~(span > 0)
    scaled = np.where(flat, 1.0, (raw - low) / np.where(flat, 1.0, span))
    return np.where(mask, scaled, 0.0)


def intensity_weights(values, pad_mask):
    """softmax(I) over real tokens; [PAD] weights are exactly 0."""
    return T.softmax(T.as_tensor(values), axis=-1, mask=pad_mask).data


def pool(features, weights):
    """C = Σ_i w_i · V[i], B×d_v."""
    weights = np.asarray(weights)
    if weights.shape != features.shape[:2]:
        raise ShapeError("pool", features.shape, weights.shape)
    return T.reduce_sum(features * weights[..., None], axis=1)


class EmotionPredictor(object):
    """
    One predictor: gate, fuse and classify.

    Default:
        EmotionPredictor(store, name, input_dim, dim)

    Args:
        store: (ParameterStore) : parameter registry
        name: (str) : teacher or student
        input_dim: (int) : d_v
        dim: (int) : d, the width of S'
    """

    def __init__(self, store, name, input_dim, dim):
        self.input_dim = input_dim
        self.gate_context = Linear(
            store, f"{name}.gate_context", input_dim, input_dim
        )
        self.gate_score = Linear(
            store, f"{name}.gate_score", input_dim, input_dim, bias=False
        )
        self.fuse = Linear(store, f"{name}.fuse", input_dim, dim)
        self.output = Linear(store, f"{name}.output", dim, NUM_EMOTIONS)

    def gate(self, pooled):
        """S and S' for a pooled B×d_v input."""
        hidden = T.tanh(self.gate_context(pooled))
        scores = T.softmax(self.gate_score(hidden))
        fused = T.tanh(self.fuse(pooled * scores))
        return scores, fused

    def __call__(self, features, weights):
        if features.shape[-1] != self.input_dim:
            raise ShapeError(
                "emotion predictor", features.shape, (self.input_dim,)
            )
        pooled = pool(features, weights)
        _, fused = self.gate(pooled)
        return T.softmax(self.output(fused)), pooled


@dataclass
class GuidanceTensors:
    intensity: np.ndarray
    weights: np.ndarray
    student_probs: T.TensorValue
    student_pooled: T.TensorValue
    teacher_probs: T.TensorValue = None
    teacher_pooled: T.TensorValue = None


class EmotionGuidance(object):
    """
    This class holds the student predictor and, with guidance enabled,
    the teacher.

    Default:
        EmotionGuidance(store, config)
    """

    def __init__(self, store, config):
        self.teacher = None
        if config.ablations.enable_egm:
            self.teacher = EmotionPredictor(
                store, "teacher", config.d_v, config.dims.d
            )
        self.student = EmotionPredictor(
            store, "student", config.d_v, config.dims.d
        )

    def __call__(self, batch, context, emotions, vad_table):
        """
        Args:
            batch: (Batch) : ids and pad mask
            context: (ContextEncoding) : H_C^tchr and H_C^stu
            emotions: (EmotionEncoding) : V_t, V_s, H_t, H_s
            vad_table: (array) : |V|×3

        Returns:
            (GuidanceTensors)
        """
        values = intensity(batch.context_ids, batch.pad_mask, vad_table)
        weights = intensity_weights(values, batch.pad_mask)
        student_inputs = [
            part
            for part in (
                context.student,
                emotions.trait_hidden,
                emotions.state_hidden,
            )
            if part is not None
        ]
        student_probs, student_pooled = self.student(
            T.concat(student_inputs), weights
        )
        out = GuidanceTensors(values, weights, student_probs, student_pooled)
        if self.teacher is not None:
            teacher_inputs = [
                part
                for part in (context.teacher, emotions.trait, emotions.state)
                if part is not None
            ]
            out.teacher_probs, out.teacher_pooled = self.teacher(
                T.concat(teacher_inputs), weights
            )
        return out


def _check_labels(labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= NUM_EMOTIONS):
        raise DataError(
            f"emotion labels must lie in [0, {NUM_EMOTIONS}): "
            f"{sorted(set(labels.tolist()))}"
        )
    return labels


def guidance_losses(teacher_probs, student_probs, labels):
    """guidance_losses

    L_tchr = -log P_tchr[label], L_stu = -Σ_k P_tchr[k] log P_stu[k] with
    P_tchr detached, L_e = L_tchr + L_stu; all batch means.

    Without a teacher, L_e is the student's cross-entropy against the
    labels and L_tchr is None.

    Args:
        teacher_probs: (TensorValue : None) : B×32
        student_probs: (TensorValue) : B×32
        labels: (array) : B gold classes

    Returns:
        (L_tchr, L_stu, L_e) (tuple)
    """
    labels = _check_labels(labels)
    if teacher_probs is None:
        loss = T.cross_entropy(student_probs, labels)
        return None, loss, loss
    teacher_loss = T.cross_entropy(teacher_probs, labels)
    student_loss = T.soft_cross_entropy(T.detach(teacher_probs), student_probs)
    return teacher_loss, student_loss, teacher_loss + student_loss


def predict(probs):
    """ê = argmax per row, lowest index on ties."""
    data = probs.data if isinstance(probs, T.TensorValue) else probs
    return np.argmax(np.asarray(data), axis=-1)


def entropy(probs):
    """Batch mean entropy of B×K distributions, natural log."""
    probs = np.asarray(probs, dtype=np.float64)
    logs = np.log(np.maximum(probs, T.LOG_EPS))
    terms = np.where(probs > 0, probs * logs, 0.0)
    return float(-terms.sum(axis=-1).mean())
