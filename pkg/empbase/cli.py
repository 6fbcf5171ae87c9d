# empbase/cli.py
"""
This module implements the command line.

    python -m empbase train --config run.json [--seed N] [--max-steps N]
    python -m empbase eval --config run.json [--checkpoint PATH]
        [--split {train,valid,test}] [--output PATH]
    python -m empbase generate --config run.json INPUT [--output PATH]
    python -m empbase polarity --config run.json [--output PATH]
    python -m empbase convert-ed ED.csv --output data/ed.jsonl [--split]

Exit codes: 0 success, 1 usage, 2 data or config error, 3 numeric
failure.
"""
import argparse
import json
import logging
import os
import sys

from .base import DB
from .config import RunConfig
from .corpus import (
    convert_ed,
    load_dialogues,
    load_vad,
    load_vectors,
    make_batches,
    split_records,
    write_records,
)
from .errors import (
    DATA_EXIT,
    USAGE_EXIT,
    ConfigError,
    EmpbaseError,
)
from .metrics import evaluate
from .model import load_checkpoint
from .polarity import (
    analyze,
    discrepancy_report,
    export_table,
    read_words,
    summarize,
)
from .trainer import (
    BEST_CHECKPOINT,
    SPLITS,
    cmd_train,
    load_split,
)
from .utils import ensure_dir

logger = logging.getLogger(__name__)

ABLATIONS = ("tee", "see", "egm", "ccl")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _stem(path):
    return os.path.splitext(path)[0]


def default_checkpoint(config):
    return os.path.join(config.path("checkpoint_dir"), BEST_CHECKPOINT)


def cmd_eval(
    config, checkpoint=None, split="test", output=None, db=None, progress=False
):
    """cmd_eval

    Score a checkpoint on one split: the report goes to `output` and the
    generated responses to `<output stem>.generations.jsonl`.

    The model settings come from the checkpoint; `config` only locates
    the data and the outputs.

    Default:
        cmd_eval(config, checkpoint=None, split="test", output=None,
                 db=None, progress=False)

    Returns:
        report (EvalReport)
    """
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {', '.join(SPLITS)}")
    if checkpoint is None:
        checkpoint = default_checkpoint(config)
    model = load_checkpoint(checkpoint)
    dialogues = load_split(config, split, model.vocab)
    if not dialogues:
        raise ConfigError(f"paths.{split} is not set")
    report, records = evaluate(
        model,
        dialogues,
        batch_size=config.training.batch_size,
        split=split,
        progress=progress,
    )
    if output is None:
        output = os.path.join(
            config.path("checkpoint_dir"), f"eval_{split}.txt"
        )
    with open(ensure_dir(output), "w", encoding="utf-8") as fobj:
        fobj.write(report.summary() + "\n")
        fobj.write("\n".join(report.lines()) + "\n")
    write_records(records, _stem(output) + ".generations.jsonl")

    own_db = db is None
    if own_db:
        db = DB(config.path("run_db"))
    db.log_eval(db.start_run(model.config), report)
    if own_db:
        db.close()
    return report


def cmd_generate(config, checkpoint, input_file, output=None):
    """cmd_generate

    Greedy responses for every record of `input_file`, one per line.
    Records may omit target and emotion.

    Returns:
        output (str) : the responses file
    """
    if checkpoint is None:
        checkpoint = default_checkpoint(config)
    model = load_checkpoint(checkpoint)
    dialogues, _ = load_dialogues(
        input_file, "reuse", model.vocab, require_labels=False
    )
    dims = model.config.dims
    batches = make_batches(
        dialogues,
        model.vocab,
        config.training.batch_size,
        dims.max_context_len,
        max_target_len=dims.max_target_len,
        truncate=model.config.training.truncate,
        shuffle=False,
    )
    if output is None:
        output = _stem(input_file) + ".responses.txt"
    with open(ensure_dir(output), "w", encoding="utf-8") as fobj:
        for batch in batches:
            for words in model.generate(batch):
                fobj.write(" ".join(words) + "\n")
    logger.info("wrote %d responses to %s", len(dialogues), output)
    return output


def polarity_words(config, vad):
    """The words to analyze: `paths.words`, else the lexicon words of the
    training vocabulary, else the whole lexicon."""
    words_path = config.path("words")
    if words_path is not None:
        return read_words(words_path)
    train_path = config.path("train")
    if train_path is not None:
        _, vocab = load_dialogues(train_path, "build")
        return [token for token in vocab.tokens if token in vad]
    return None


def cmd_polarity(config, output=None, db=None):
    """cmd_polarity

    Run the trait/state polarity discrepancy analysis and write the word
    table.

    Returns:
        (report, line, within) (tuple) : DiscrepancyReport, the summary
            line and whether the proportion is within tolerance of the
            reference measurement
    """
    vad_path = config.path("vad")
    vectors_path = config.path("vectors")
    if vad_path is None or vectors_path is None:
        raise ConfigError("polarity needs paths.vad and paths.vectors")
    vad = load_vad(vad_path)
    vectors = load_vectors(vectors_path)
    records = analyze(vad, vectors, polarity_words(config, vad))
    report = discrepancy_report(records)
    if output is None:
        output = config.path("output") or os.path.join(
            config.path("checkpoint_dir"), "polarity.tsv"
        )
    export_table(records, output)
    line, within = summarize(report)

    own_db = db is None
    if own_db:
        db = DB(config.path("run_db"))
    db.log_polarity(db.start_run(config), records)
    if own_db:
        db.close()
    return report, line, within


def cmd_convert_ed(csv_path, output, split=False, seed=0):
    """cmd_convert_ed

    Convert an EmpatheticDialogues CSV. With `split` the records are
    divided 8:1:1 by conversation into `<stem>.train.jsonl`,
    `<stem>.valid.jsonl` and `<stem>.test.jsonl`.

    Returns:
        paths (list of str)
    """
    records = convert_ed(csv_path)
    if not split:
        return [write_records(records, output)]
    stem = _stem(output)
    return [
        write_records(part, f"{stem}.{name}.jsonl")
        for name, part in zip(SPLITS, split_records(records, seed=seed))
    ]


# command line


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser():
    logging_opts = ArgumentParser(add_help=False)
    logging_opts.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress messages, -vv for per-step losses",
    )
    logging_opts.add_argument(
        "--quiet", action="store_true", help="errors only, no progress bars"
    )

    run_opts = ArgumentParser(add_help=False)
    run_opts.add_argument(
        "--config", required=True, metavar="PATH", help="run config (JSON)"
    )

    output_opts = ArgumentParser(add_help=False)
    output_opts.add_argument(
        "--output", metavar="PATH", help="where to write the results"
    )

    checkpoint_opts = ArgumentParser(add_help=False)
    checkpoint_opts.add_argument(
        "--checkpoint",
        metavar="PATH",
        help="checkpoint file (train: the checkpoint directory)",
    )

    # eval and generate take the model settings from the checkpoint
    train_opts = ArgumentParser(add_help=False)
    train_opts.add_argument("--seed", type=int, help="override the run seed")
    for name in ABLATIONS:
        train_opts.add_argument(
            f"--no-{name}",
            dest="disable",
            action="append_const",
            const=name,
            default=[],
            help=f"disable {name.upper()}",
        )
    train_opts.add_argument(
        "--max-steps", type=int, metavar="N", help="training steps"
    )

    parser = ArgumentParser(
        prog="empbase",
        description="Trait and state emotion model for empathetic "
        "response generation.",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    train = commands.add_parser(
        "train",
        parents=[logging_opts, run_opts, checkpoint_opts, train_opts],
        help="train a model",
    )
    train.set_defaults(func=run_train)

    evaluate_cmd = commands.add_parser(
        "eval",
        parents=[logging_opts, run_opts, output_opts, checkpoint_opts],
        help="score a checkpoint on a split",
    )
    evaluate_cmd.add_argument("--split", choices=SPLITS, default="test")
    evaluate_cmd.set_defaults(func=run_eval)

    generate = commands.add_parser(
        "generate",
        parents=[logging_opts, run_opts, output_opts, checkpoint_opts],
        help="generate responses for a dialogue file",
    )
    generate.add_argument("input", metavar="INPUT", help="dialogue records")
    generate.set_defaults(func=run_generate)

    polarity = commands.add_parser(
        "polarity",
        parents=[logging_opts, run_opts, output_opts],
        help="trait/state polarity discrepancy analysis",
    )
    polarity.set_defaults(func=run_polarity)

    convert = commands.add_parser(
        "convert-ed",
        parents=[logging_opts],
        help="convert an EmpatheticDialogues CSV to dialogue records",
    )
    convert.add_argument("csv", metavar="CSV", help="ED split file")
    convert.add_argument("--output", required=True, metavar="PATH")
    convert.add_argument(
        "--split",
        action="store_true",
        help="write 8:1:1 train/valid/test files by conversation",
    )
    convert.add_argument("--seed", type=int, default=0)
    convert.set_defaults(func=run_convert)
    return parser


def load_config(args):
    config = RunConfig.from_file(args.config)
    checkpoint_dir = None
    if args.command == "train":
        checkpoint_dir = args.checkpoint
    return config.with_overrides(
        seed=getattr(args, "seed", None),
        max_steps=getattr(args, "max_steps", None),
        checkpoint_dir=checkpoint_dir,
        disable=getattr(args, "disable", ()),
    )


def _progress(args):
    return False if args.quiet else None


def run_train(args):
    config = load_config(args)
    result = cmd_train(config, progress=_progress(args))
    print(f"checkpoint: {result.checkpoint}")
    if result.loss_log:
        print(f"loss log: {result.loss_log}")
    if result.history:
        last = result.history[-1]
        print(
            " ".join(
                f"{key}={value:.6g}"
                for key, value in last.items()
                if value is not None
            )
        )
    return 0


def run_eval(args):
    config = load_config(args)
    report = cmd_eval(
        config,
        args.checkpoint,
        args.split,
        args.output,
        progress=not args.quiet,
    )
    print(report.summary())
    print("\n".join(report.lines()))
    return 0


def run_generate(args):
    config = load_config(args)
    print(cmd_generate(config, args.checkpoint, args.input, args.output))
    return 0


def run_polarity(args):
    config = load_config(args)
    _, line, _ = cmd_polarity(config, args.output)
    print(line)
    return 0


def run_convert(args):
    for path in cmd_convert_ed(args.csv, args.output, args.split, args.seed):
        print(path)
    return 0


def configure_logging(verbose=0, quiet=False):
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv=None):
    """Entry point; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except EmpbaseError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        logger.error("%s", exc)
        return DATA_EXIT
