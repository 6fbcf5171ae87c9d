# empbase/model.py
"""
This module implements the model composition.

`EmpatheticModel` wires the context encoder, the emotion encoders, the
emotion guidance, the response generator and the contrastive head over
one parameter store, and adds training, prediction, decoding and
checkpoint persistence on top.

Checkpoints are numpy `.npz` containers: a JSON `__header__` entry plus
the arrays `param/<name>`, `adam_m/<name>`, `adam_v/<name>` and
`resource/<table>`.
"""
from dataclasses import dataclass
import logging

import numpy as np

from . import tensor as T
from .config import RunConfig
from .context import ContextEncoder
from .corpus import RESERVED, Resources, Vocabulary
from .emotion import EmotionEncoder
from .errors import DataError, NumericError
from .generation import (
    ContrastiveHead,
    ResponseGenerator,
    ccl_loss,
    copy_mask,
    diversity_loss,
    generation_loss,
    greedy_decode,
    total_loss,
)
from .guidance import EmotionGuidance, guidance_losses, predict
from .layers import ParameterStore
from .optim import OptimizerState, adam_noam_step
from .serializers import from_json, to_json
from .utils import ensure_dir, make_rng

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "empbase-checkpoint"
CHECKPOINT_VERSION = 1
HEADER_KEY = "__header__"
RESOURCE_TABLES = ("vad_table", "idf_table", "token_freqs")


@dataclass
class ForwardPass:
    context: object
    emotions: object
    guidance: object
    decoder: object
    labels: np.ndarray
    label_mask: np.ndarray
    views: object = None


@dataclass
class LossTerms:
    """Component losses as tensors; absent components are None."""

    teacher: T.TensorValue
    student: T.TensorValue
    emotion: T.TensorValue
    generation: T.TensorValue
    contrastive: T.TensorValue
    diversity: T.TensorValue
    total: T.TensorValue

    def values(self):
        def value(term):
            return None if term is None else float(term.item())

        return {
            "l_e": value(self.emotion),
            "l_g": value(self.generation),
            "l_ccl": value(self.contrastive),
            "l_div": value(self.diversity),
            "total": value(self.total),
        }


def _format_losses(values):
    return ", ".join(
        f"{key}={value:.6g}"
        for key, value in values.items()
        if value is not None
    )


class EmpatheticModel(object):
    """
    This class holds the whole network and its optimizer state.

    Default:
        EmpatheticModel(config, resources, vectors=None)

    Args:
        config: (RunConfig) : dims, training and ablation settings
        resources: (Resources) : vocabulary and lookup tables
        vectors: (WordVectors : None) : pretrained word vectors
    """

    def __init__(self, config, resources, vectors=None):
        self.config = config
        self.resources = resources
        rng = make_rng(config.seed)
        self.store = ParameterStore(rng)
        vocab_size = len(resources.vocab)

        self.context = ContextEncoder(
            self.store, config, resources.vocab, vectors, rng
        )
        word_table = self.context.word_table
        self.emotions = EmotionEncoder(
            self.store, config, resources, word_table, rng
        )
        self.guidance = EmotionGuidance(self.store, config)
        self.generator = ResponseGenerator(
            self.store, config, vocab_size, word_table, rng
        )
        self.contrast = None
        if config.ablations.enable_ccl:
            self.contrast = ContrastiveHead(
                self.store, config, word_table, rng
            )

        training = config.training
        self.optimizer = OptimizerState(
            config.dims.d,
            training.warmup,
            factor=training.lr_factor,
            betas=training.betas,
            eps=training.adam_eps,
        )
        logger.info(
            "model %s: %d parameters in %d tensors",
            config.name,
            self.store.parameter_count(),
            len(self.store),
        )

    @property
    def vocab(self):
        return self.resources.vocab

    @property
    def step(self):
        return self.optimizer.step

    def encode(self, batch):
        """Context, emotion and guidance passes."""
        context = self.context(batch)
        emotions = self.emotions(
            batch.context_ids, batch.pad_mask, context.embedded, context.hidden
        )
        guidance = self.guidance(
            batch, context, emotions, self.resources.vad_table
        )
        return context, emotions, guidance

    def decode(self, batch, memory, p_gen_override=None):
        """Teacher-forced decoding of the batch targets."""
        return self.generator.decode(
            batch.target_ids[:, :-1],
            batch.target_mask[:, :-1],
            memory,
            batch.pad_mask,
            copy_mask(batch),
            batch.context_ext_ids,
            len(self.vocab) + batch.max_oov,
            p_gen_override,
        )

    def forward(self, batch, p_gen_override=None):
        """forward

        The full pass over a batch.

        Args:
            batch: (Batch) : padded batch
            p_gen_override: (float : None) : fix the copy gate

        Returns:
            (ForwardPass)
        """
        context, emotions, guidance = self.encode(batch)
        decoder = self.decode(batch, context.student, p_gen_override)
        label_mask = batch.target_mask[:, 1:]
        views = None
        if self.contrast is not None:
            views = self.contrast(
                context.student,
                batch.pad_mask,
                decoder.embedded,
                batch.target_mask[:, :-1],
                emotions.joint_hidden,
                decoder.probs,
            )
        return ForwardPass(
            context=context,
            emotions=emotions,
            guidance=guidance,
            decoder=decoder,
            labels=batch.target_ext_ids[:, 1:],
            label_mask=label_mask,
            views=views,
        )

    def losses(self, batch, forward=None):
        """losses

        L_e, L_g, L_ccl, L_div and their weighted total.

        Args:
            batch: (Batch) : padded batch with labels
            forward: (ForwardPass : None) : reuse an existing pass

        Returns:
            (LossTerms)
        """
        if forward is None:
            forward = self.forward(batch)
        guidance = forward.guidance
        l_tchr, l_stu, l_e = guidance_losses(
            guidance.teacher_probs,
            guidance.student_probs,
            batch.emotion_labels,
        )
        probs = forward.decoder.probs
        l_g = generation_loss(probs, forward.labels, forward.label_mask)
        l_div = diversity_loss(
            probs,
            forward.labels,
            forward.label_mask,
            self.resources.token_freqs,
        )
        l_ccl = None
        if forward.views is not None:
            l_ccl = ccl_loss(forward.views, self.config.training.tau)
        total = total_loss(l_e, l_g, l_ccl, l_div, self.config.training.gamma)
        return LossTerms(l_tchr, l_stu, l_e, l_g, l_ccl, l_div, total)

    def train_step(self, batch):
        """train_step

        One optimizer step on a batch.

        Returns:
            values (dict) : component losses before the update plus `lr`

        Raises:
            NumericError : a non-finite loss or gradient; parameters are
                left untouched
        """
        self.store.frozen = True
        terms = self.losses(batch)
        values = terms.values()
        finite = [
            np.isfinite(value)
            for value in values.values()
            if value is not None
        ]
        if not all(finite):
            raise NumericError(
                f"non-finite loss at step {self.optimizer.step + 1}: "
                f"{_format_losses(values)}"
            )
        terms.total.backward()
        values["lr"] = adam_noam_step(self.store, self.optimizer)
        logger.debug(
            "step %d: %s", self.optimizer.step, _format_losses(values)
        )
        return values

    def emotion_probs(self, batch):
        """P_stu under no_grad, B×32."""
        with T.no_grad():
            _, _, guidance = self.encode(batch)
        return guidance.student_probs.data

    def predict(self, batch):
        """ê per example."""
        return predict(self.emotion_probs(batch))

    def nll(self, batch):
        """nll

        Summed negative log-likelihood of the batch targets under teacher
        forcing, with the number of scored tokens ([EOS] included).

        Returns:
            (total, count) (tuple)
        """
        with T.no_grad():
            context = self.context(batch)
            decoder = self.decode(batch, context.student)
        labels = batch.target_ext_ids[:, 1:]
        mask = batch.target_mask[:, 1:]
        picked = np.take_along_axis(
            decoder.probs.data, labels[..., None], axis=-1
        )[..., 0]
        nll = -np.log(np.maximum(picked, T.LOG_EPS))
        return float((nll * mask).sum()), int(mask.sum())

    def generate(self, batch, max_len=None, p_gen_override=None):
        """Greedy responses, one word list per example."""
        if max_len is None:
            max_len = self.config.decoding.max_len
        return greedy_decode(self, batch, max_len, p_gen_override)

    # persistence

    def save(self, path):
        return save_checkpoint(self, path)

    @classmethod
    def load(cls, path):
        return load_checkpoint(path)


def _npz_path(path):
    return path if path.endswith(".npz") else path + ".npz"


def save_checkpoint(model, path):
    """save_checkpoint

    Write parameters, optimizer moments and resources to one `.npz`.

    Args:
        model: (EmpatheticModel) : the model
        path: (str) : target file; `.npz` is appended when missing

    Returns:
        path (str)
    """
    path = _npz_path(path)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "step": model.optimizer.step,
        "vocabulary": model.vocab.tokens,
        "ablations": model.config.ablations,
    }
    arrays = {HEADER_KEY: np.array(to_json(header))}
    for name, value in model.store.state_dict().items():
        arrays[f"param/{name}"] = value
    for name, value in model.optimizer.first.items():
        arrays[f"adam_m/{name}"] = value
    for name, value in model.optimizer.second.items():
        arrays[f"adam_v/{name}"] = value
    for table in RESOURCE_TABLES:
        arrays[f"resource/{table}"] = getattr(model.resources, table)
    with open(ensure_dir(path), "wb") as fobj:
        np.savez(fobj, **arrays)
    logger.info("checkpoint at step %d written to %s", model.step, path)
    return path


def read_header(path):
    """The JSON header of a checkpoint."""
    with np.load(_npz_path(path), allow_pickle=False) as data:
        if HEADER_KEY not in data.files:
            raise DataError(f"{path}: not an empbase checkpoint")
        header = from_json(str(data[HEADER_KEY]))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not an empbase checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise DataError(
            f"{path}: checkpoint version {header.get('version')} is not "
            f"supported"
        )
    return header


def load_checkpoint(path):
    """load_checkpoint

    Rebuild a model from a checkpoint: the same config, vocabulary,
    resources, parameters and optimizer state.

    Args:
        path: (str) : checkpoint file

    Returns:
        model (EmpatheticModel)
    """
    path = _npz_path(path)
    header = read_header(path)
    tokens = header["vocabulary"]
    if tuple(tokens[: len(RESERVED)]) != RESERVED:
        raise DataError(f"{path}: vocabulary does not start with {RESERVED}")
    config = RunConfig.from_dict(header["config"])
    params, first, second, tables = {}, {}, {}, {}
    with np.load(path, allow_pickle=False) as data:
        for key in data.files:
            if key == HEADER_KEY:
                continue
            group, _, name = key.partition("/")
            target = {
                "param": params,
                "adam_m": first,
                "adam_v": second,
                "resource": tables,
            }.get(group)
            if target is None:
                raise DataError(f"{path}: unexpected array {key}")
            target[name] = np.array(data[key])
    missing = set(RESOURCE_TABLES) - set(tables)
    if missing:
        raise DataError(f"{path}: missing resource tables {sorted(missing)}")

    resources = Resources(
        vocab=Vocabulary(tokens[len(RESERVED):]),
        vad_table=tables["vad_table"],
        idf_table=tables["idf_table"],
        token_freqs=tables["token_freqs"],
    )
    model = EmpatheticModel(config, resources)
    model.store.load_state_dict(params, strict=True)
    model.optimizer.load_state_dict(
        {"step": header["step"], "first": first, "second": second}
    )
    logger.info("loaded checkpoint %s at step %d", path, model.step)
    return model
