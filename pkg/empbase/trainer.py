# empbase/trainer.py
"""
This module implements the training loop.

`cmd_train` loads the run data, builds the model and steps it for
`training.max_steps` updates over reshuffled epochs. Every step's losses
go to the run store; every `eval_every` steps the validation split is
scored and the checkpoint with the lowest validation perplexity is kept
as `best.npz`. The final state is `last.npz` and the loss history is
exported as `loss_log.tsv`, all in the checkpoint directory.
"""
from dataclasses import dataclass, field, replace
import logging
import math
import os

from tqdm import tqdm

from .base import DB
from .corpus import (
    VadLexicon,
    Vocabulary,
    build_resources,
    load_dialogues,
    load_inference,
    load_vad,
    load_vectors,
    make_batches,
)
from .errors import ConfigError, NumericError
from .metrics import evaluate
from .model import EmpatheticModel

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

BEST_CHECKPOINT = "best.npz"
LAST_CHECKPOINT = "last.npz"
LOSS_LOG = "loss_log.tsv"


@dataclass
class RunData:
    """Dialogues of each split with the shared vocabulary and tables."""

    train: list
    valid: list
    test: list
    resources: object
    vectors: object = None

    @property
    def vocab(self):
        return self.resources.vocab


@dataclass
class TrainResult:
    checkpoint: str
    last_checkpoint: str
    loss_log: str
    steps: int
    best_step: int = None
    best_ppl: float = None
    history: list = field(default_factory=list)
    reports: list = field(default_factory=list)


def split_path(config, name, split):
    """split_path

    Resolve a path entry for one split. A `{split}` placeholder is filled
    with the split name.

    Returns:
        path (str : None)
    """
    config = replace(config, vars={**config.vars, "split": split})
    return config.path(name)


def attach_inference(config, dialogues, split):
    """Attach inference features to a split.

    A feature file is keyed by record index, so one without a `{split}`
    placeholder belongs to the training split only.
    """
    raw = config.paths.inference
    if raw is None or not dialogues:
        return 0
    if "{split}" not in raw and split != "train":
        return 0
    return load_inference(split_path(config, "inference", split), dialogues)


def load_split(config, split, vocab, require_labels=True):
    path = config.path(split)
    if path is None:
        return []
    dialogues, _ = load_dialogues(
        path, "reuse", vocab, require_labels=require_labels
    )
    attach_inference(config, dialogues, split)
    return dialogues


def load_run_data(config):
    """load_run_data

    Read every split, the lexicon and the word vectors of a run.

    The vocabulary is built from the training split unless `paths.vocab`
    names an existing vocabulary file.

    Args:
        config: (RunConfig) : the run configuration

    Returns:
        (RunData)
    """
    train_path = config.path("train")
    if train_path is None:
        raise ConfigError("paths.train is required")
    vocab_path = config.path("vocab")
    if vocab_path is not None and os.path.exists(vocab_path):
        vocab = Vocabulary.load(vocab_path)
        train, _ = load_dialogues(train_path, "reuse", vocab)
    else:
        train, vocab = load_dialogues(train_path, "build")
        if vocab_path is not None:
            vocab.save(vocab_path)
    attach_inference(config, train, "train")
    valid = load_split(config, "valid", vocab)
    test = load_split(config, "test", vocab)

    vad_path = config.path("vad")
    vad = load_vad(vad_path) if vad_path else VadLexicon()
    if vad_path is None:
        logger.warning("no VAD lexicon: every token uses the default")
    vectors = None
    vectors_path = config.path("vectors")
    if vectors_path is not None:
        vectors = load_vectors(vectors_path, vocab)
    resources = build_resources(vocab, train, vad)
    return RunData(train, valid, test, resources, vectors)


def _epochs(config, data):
    """Batches forever, reshuffled each epoch under the run seed."""
    dims = config.dims
    epoch = 0
    while True:
        batches = make_batches(
            data.train,
            data.vocab,
            config.training.batch_size,
            dims.max_context_len,
            seed=config.seed + epoch,
            max_target_len=dims.max_target_len,
            truncate=config.training.truncate,
        )
        for batch in batches:
            yield batch
        epoch += 1


def _disable(progress):
    """tqdm semantics: None hides the bar when not on a TTY."""
    return None if progress is None else not progress


def validate(model, data, db=None, run=None, progress=None):
    report, _ = evaluate(
        model,
        data.valid,
        batch_size=model.config.training.batch_size,
        split="valid",
        generate=False,
        progress=progress,
    )
    logger.info(
        "step %d validation: acc=%.2f ppl=%.4f",
        model.step,
        report.acc,
        report.ppl,
    )
    if db is not None:
        db.log_eval(run, report)
    return report


def cmd_train(config, db=None, progress=None, data=None):
    """cmd_train

    Train a model.

    With `max_steps=0` only the initialized checkpoint is written. A
    non-finite loss aborts the run; the loss log up to the failing step
    is still exported.

    Default:
        cmd_train(config, db=None, progress=None, data=None)

    Args:
        config: (RunConfig) : the run configuration
        db: (DB : None) : run store; by default opened from `paths.run_db`
        progress: (bool : None) : progress bar; None shows it on a TTY
        data: (RunData : None) : preloaded run data

    Returns:
        (TrainResult)

    Raises:
        NumericError
    """
    if data is None:
        data = load_run_data(config)
    checkpoint_dir = config.path("checkpoint_dir")
    best_path = os.path.join(checkpoint_dir, BEST_CHECKPOINT)
    last_path = os.path.join(checkpoint_dir, LAST_CHECKPOINT)
    log_path = os.path.join(checkpoint_dir, LOSS_LOG)

    model = EmpatheticModel(config, data.resources, data.vectors)
    max_steps = config.training.max_steps
    if max_steps == 0:
        model.save(best_path)
        model.save(last_path)
        return TrainResult(best_path, last_path, None, 0)

    own_db = db is None
    if own_db:
        db = DB(config.path("run_db"))
    run = db.start_run(config)
    training = config.training
    result = TrainResult(best_path, last_path, log_path, 0)
    best_ppl = math.inf
    batches = _epochs(config, data)

    try:
        disable = _disable(progress)
        with tqdm(total=max_steps, disable=disable, desc="train") as bar:
            for step in range(1, max_steps + 1):
                values = model.train_step(next(batches))
                db.log_losses(run, model.step, values)
                result.history.append(values)
                result.steps = step
                bar.update(1)
                bar.set_postfix(loss=f"{values['total']:.4f}")
                if step % training.log_every == 0:
                    logger.info(
                        "step %d: total=%.4f l_g=%.4f lr=%.3g",
                        step,
                        values["total"],
                        values["l_g"],
                        values["lr"],
                    )
                if data.valid and (
                    step % training.eval_every == 0 or step == max_steps
                ):
                    report = validate(model, data, db, run, progress=False)
                    result.reports.append(report)
                    if report.ppl < best_ppl:
                        best_ppl = report.ppl
                        result.best_step = step
                        result.best_ppl = report.ppl
                        model.save(best_path)
    except NumericError:
        logger.error("training aborted after %d steps", result.steps)
        raise
    finally:
        db.export_loss_log(
            run, log_path, include_ccl=config.ablations.enable_ccl
        )
        if own_db:
            db.close()

    model.save(last_path)
    if not data.valid:
        model.save(best_path)
        result.best_step = result.steps
    logger.info(
        "trained %d steps; best checkpoint %s (step %s)",
        result.steps,
        best_path,
        result.best_step,
    )
    return result
