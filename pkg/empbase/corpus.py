# empbase/corpus.py
"""
This module implements dialogue ingestion.

It reads dialogue records, the VAD lexicon and pretrained word vectors,
builds the vocabulary and IDF statistics, and lays dialogues out as
padded batches.

Dialogue files hold one JSON record per line:

    {"context": ["i won a prize"], "target": "congrats !",
     "emotion": "proud", "situation": "...", "inference": [[...], ...]}

`situation` and `inference` are optional. Tokens are lowercased and
split on whitespace.
"""
from collections import defaultdict
import csv
from dataclasses import dataclass, field
import json
import logging
import math

import numpy as np

from .errors import ConfigError, DataError
from .utils import ensure_dir

logger = logging.getLogger(__name__)

# sorted; the position of a label is its class id
EMOTION_LABELS = (
    "afraid",
    "angry",
    "annoyed",
    "anticipating",
    "anxious",
    "apprehensive",
    "ashamed",
    "caring",
    "confident",
    "content",
    "devastated",
    "disappointed",
    "disgusted",
    "embarrassed",
    "excited",
    "faithful",
    "furious",
    "grateful",
    "guilty",
    "hopeful",
    "impressed",
    "jealous",
    "joyful",
    "lonely",
    "nostalgic",
    "prepared",
    "proud",
    "sad",
    "sentimental",
    "surprised",
    "terrified",
    "trusting",
)
EMOTION_INDEX = {label: index for index, label in enumerate(EMOTION_LABELS)}

PAD = "[PAD]"
CLS = "[CLS]"
SOS = "[SOS]"
EOS = "[EOS]"
UNK = "[UNK]"
SPK = "[SPK]"
LSN = "[LSN]"
RESERVED = (PAD, CLS, SOS, EOS, UNK, SPK, LSN)
PAD_ID, CLS_ID, SOS_ID, EOS_ID, UNK_ID, SPK_ID, LSN_ID = range(len(RESERVED))

VAD_DEFAULT = (0.0, 0.5, 0.0)
ED_COMMA = "_comma_"


def tokenize(text):
    """Lowercase and split on whitespace."""
    return text.lower().split()


class Vocabulary(object):
    """
    This class maps tokens to ids and back.

    Ids are assigned by first occurrence after the reserved tokens, so
    building twice from the same corpus gives the same vocabulary.
    `[PAD]` is always id 0.

    Default:
        Vocabulary(tokens=None)

    Args:
        tokens: (list : None) : tokens to add after the reserved ones
    """

    def __init__(self, tokens=None):
        self._ids = {}
        self._tokens = []
        for token in RESERVED:
            self.add(token)
        for token in tokens or ():
            self.add(token)

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    @property
    def tokens(self):
        return list(self._tokens)

    def add(self, token):
        index = self._ids.get(token)
        if index is None:
            index = len(self._tokens)
            self._ids[token] = index
            self._tokens.append(token)
        return index

    def id_of(self, token):
        return self._ids.get(token, UNK_ID)

    def token_of(self, index, oov=None):
        """Token for an id; ids past the vocabulary index into `oov`."""
        if index < len(self._tokens):
            return self._tokens[index]
        offset = index - len(self._tokens)
        if oov is not None and offset < len(oov):
            return oov[offset]
        return UNK

    def encode(self, tokens):
        return [self.id_of(token) for token in tokens]

    def tokenize(self, text):
        return self.encode(tokenize(text))

    def decode(self, ids, oov=None):
        """decode

        Turn ids back into tokens, stopping at `[EOS]` and skipping the
        other reserved tokens. Copy-extended ids resolve through `oov`.

        Args:
            ids: (iterable) : token ids
            oov: (list : None) : source-only tokens of the example

        Returns:
            tokens (list)
        """
        tokens = []
        for index in ids:
            index = int(index)
            if index == EOS_ID:
                break
            if index in (PAD_ID, CLS_ID, SOS_ID, SPK_ID, LSN_ID):
                continue
            tokens.append(self.token_of(index, oov))
        return tokens

    def detokenize(self, ids, oov=None):
        return " ".join(self.decode(ids, oov))

    @classmethod
    def build(cls, token_lists):
        """build

        Reserved tokens, then the 32 emotion words, then corpus tokens in
        order of first occurrence.

        Args:
            token_lists: (iterable) : token sequences

        Returns:
            vocab (Vocabulary)
        """
        vocab = cls(EMOTION_LABELS)
        for tokens in token_lists:
            for token in tokens:
                vocab.add(token)
        return vocab

    def save(self, path):
        with open(ensure_dir(path), "w", encoding="utf-8") as fobj:
            for token in self._tokens:
                fobj.write(token + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fobj:
            tokens = [line.rstrip("\n") for line in fobj if line.strip()]
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise DataError(f"{path}: vocabulary must start with {RESERVED}")
        return cls(tokens[len(RESERVED):])


def detokenize(ids, vocab, oov=None):
    """Space-joined surface text of ids; see Vocabulary.decode."""
    return vocab.detokenize(ids, oov)


@dataclass
class Dialogue:
    """
    One training example: context utterances, the target response and
    the context emotion.

    Ids index the vocabulary the dialogue was encoded with; the raw
    tokens are kept so source-only words can be copied.
    """

    context_utterances: list
    target_response: list
    emotion_label: int
    context_tokens: list
    target_tokens: list
    situation_text: str = None
    inference_features: np.ndarray = None
    index: int = 0

    def validate(self, vocab_size):
        if not self.context_utterances or not any(self.context_utterances):
            raise DataError(f"dialogue {self.index}: empty context")
        if self.emotion_label is not None and not (
            0 <= self.emotion_label < len(EMOTION_LABELS)
        ):
            raise DataError(
                f"dialogue {self.index}: emotion label {self.emotion_label} "
                f"outside [0, {len(EMOTION_LABELS)})"
            )
        for ids in list(self.context_utterances) + [self.target_response]:
            for token_id in ids:
                if not 0 <= token_id < vocab_size:
                    raise DataError(
                        f"dialogue {self.index}: token id {token_id} "
                        f"outside vocabulary of {vocab_size}"
                    )
        return self


def _parse_record(line, line_no, require_labels):
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"line {line_no}: malformed record ({exc.msg})")
    if not isinstance(record, dict):
        raise DataError(f"line {line_no}: malformed record (not an object)")

    context = record.get("context")
    if not isinstance(context, list) or not all(
        isinstance(item, str) for item in context
    ):
        raise DataError(
            f"line {line_no}: malformed record (context must be a list of "
            "strings)"
        )
    context = [tokenize(utterance) for utterance in context]
    context = [tokens for tokens in context if tokens]
    if not context:
        raise DataError(f"line {line_no}: empty context")

    target = record.get("target")
    if target is None and not require_labels:
        target = ""
    if not isinstance(target, str):
        raise DataError(
            f"line {line_no}: malformed record (target must be a string)"
        )

    emotion = record.get("emotion")
    if emotion is None and not require_labels:
        label = None
    else:
        label = EMOTION_INDEX.get(str(emotion).strip().lower())
        if label is None:
            raise DataError(
                f"line {line_no}: unknown emotion {emotion!r}; valid labels "
                f"are {', '.join(EMOTION_LABELS)}"
            )

    features = record.get("inference")
    if features is not None:
        features = _feature_array(features, f"line {line_no}")

    return {
        "context": context,
        "target": tokenize(target),
        "label": label,
        "situation": record.get("situation"),
        "inference": features,
    }


def _feature_array(features, where):
    try:
        array = np.asarray(features, dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError(f"{where}: inference must be a list of float arrays")
    if array.ndim != 2 or array.shape[0] == 0:
        raise DataError(f"{where}: inference must be a non-empty K×d array")
    return array


def encode_dialogues(parsed, vocab):
    dialogues = []
    for index, item in enumerate(parsed):
        dialogue = Dialogue(
            context_utterances=[
                vocab.encode(tokens) for tokens in item["context"]
            ],
            target_response=vocab.encode(item["target"]),
            emotion_label=item["label"],
            context_tokens=item["context"],
            target_tokens=item["target"],
            situation_text=item["situation"],
            inference_features=item["inference"],
            index=index,
        )
        dialogues.append(dialogue.validate(len(vocab)))
    return dialogues


def load_dialogues(path, vocab_mode="build", vocab=None, require_labels=True):
    """load_dialogues

    Read a dialogue file and encode it.

    Default:
        load_dialogues(path, vocab_mode="build", vocab=None,
                       require_labels=True)

    Args:
        path: (str) : line-delimited JSON records
        vocab_mode: (str) : "build" builds the vocabulary from this file
            (use it on the training split only); "reuse" encodes with
            `vocab`
        vocab: (Vocabulary : None) : required with "reuse"
        require_labels: (bool) : False lets records omit target and
            emotion, for generation inputs

    Returns:
        (dialogues, vocab) (tuple)
    """
    if vocab_mode not in ("build", "reuse"):
        raise ConfigError(f"vocab_mode must be build or reuse: {vocab_mode}")
    if vocab_mode == "reuse" and vocab is None:
        raise ConfigError("vocab_mode=reuse needs a vocabulary")

    parsed = []
    with open(path, encoding="utf-8") as fobj:
        for line_no, line in enumerate(fobj, start=1):
            if not line.strip():
                continue
            parsed.append(_parse_record(line, line_no, require_labels))
    if not parsed:
        raise DataError(f"{path}: no dialogue records")

    if vocab_mode == "build":
        vocab = Vocabulary.build(
            tokens
            for item in parsed
            for tokens in item["context"] + [item["target"]]
        )
    dialogues = encode_dialogues(parsed, vocab)
    logger.info(
        "loaded %d dialogues from %s (vocabulary %d)",
        len(dialogues),
        path,
        len(vocab),
    )
    return dialogues, vocab


def load_inference(path, dialogues):
    """load_inference

    Attach precomputed inference features kept in a separate file, one
    `{"index": i, "inference": [[...], ...]}` record per line, keyed by
    the dialogue's record index.

    Args:
        path: (str) : feature file
        dialogues: (list) : dialogues to update in place

    Returns:
        count (int) : dialogues that received features
    """
    by_index = {dialogue.index: dialogue for dialogue in dialogues}
    count = 0
    with open(path, encoding="utf-8") as fobj:
        for line_no, line in enumerate(fobj, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                index = int(record["index"])
                features = record["inference"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise DataError(f"{path} line {line_no}: malformed record")
            if index in by_index:
                by_index[index].inference_features = _feature_array(
                    features, f"{path} line {line_no}"
                )
                count += 1
    logger.info("attached inference features to %d dialogues", count)
    return count


class VadLexicon(object):
    """
    This class holds word -> (valence, arousal, dominance).

    Absent words look up as the neutral default (0.00, 0.50, 0.00).
    """

    def __init__(self, entries=None):
        self.entries = {}
        for word, values in (entries or {}).items():
            self.set(word, values)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word in self.entries

    def set(self, word, values):
        values = tuple(float(value) for value in values)
        if len(values) != 3:
            raise DataError(f"VAD entry for {word!r} needs three values")
        if any(not 0.0 <= value <= 1.0 for value in values):
            raise DataError(
                f"VAD values for {word!r} outside [0, 1]: {values}"
            )
        self.entries[word] = values

    def lookup(self, word):
        return self.entries.get(word, VAD_DEFAULT)


def load_vad(path):
    """load_vad

    Read a tab-separated `word V A D` lexicon. A header line whose values
    are not numbers is skipped.

    Args:
        path: (str) : lexicon file

    Returns:
        lexicon (VadLexicon)
    """
    lexicon = VadLexicon()
    with open(path, encoding="utf-8") as fobj:
        for line_no, line in enumerate(fobj, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(
                    f"{path} line {line_no}: expected word<TAB>V<TAB>A<TAB>D"
                )
            try:
                values = [float(value) for value in parts[1:]]
            except ValueError:
                if line_no == 1:
                    continue
                raise DataError(f"{path} line {line_no}: non-numeric value")
            lexicon.set(parts[0].strip().lower(), values)
    logger.info("loaded %d VAD entries from %s", len(lexicon), path)
    return lexicon


def lookup_vad(lexicon, token):
    """(valence, arousal, dominance) of a token, default when absent."""
    return lexicon.lookup(token)


class WordVectors(object):
    """
    This class holds word -> vector with one shared dimension.
    """

    def __init__(self, vectors=None, dim=None):
        self.vectors = {}
        self.dim = dim
        for word, vector in (vectors or {}).items():
            self.set(word, vector)

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, word):
        return word in self.vectors

    def __getitem__(self, word):
        return self.vectors[word]

    def set(self, word, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if self.dim is None:
            self.dim = vector.shape[0]
        if vector.ndim != 1 or vector.shape[0] != self.dim:
            raise DataError(
                f"vector for {word!r} has dimension {vector.shape[-1]}, "
                f"expected {self.dim}"
            )
        self.vectors[word] = vector

    def scaled(self, factor):
        return WordVectors(
            {word: vector * factor for word, vector in self.vectors.items()},
            dim=self.dim,
        )


def load_vectors(path, vocab=None):
    """load_vectors

    Read space-separated `word v1 ... vd` lines.

    Args:
        path: (str) : vectors file
        vocab: (Vocabulary : set : None) : keep only these words

    Returns:
        vectors (WordVectors)
    """
    vectors = WordVectors()
    with open(path, encoding="utf-8") as fobj:
        for line_no, line in enumerate(fobj, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            word = parts[0]
            if vocab is not None and word not in vocab:
                continue
            try:
                values = [float(value) for value in parts[1:]]
            except ValueError:
                raise DataError(f"{path} line {line_no}: non-numeric value")
            try:
                vectors.set(word, values)
            except DataError as exc:
                raise DataError(f"{path} line {line_no}: {exc}")
    logger.info("loaded %d vectors of dimension %s", len(vectors), vectors.dim)
    return vectors


class IdfTable(object):
    """
    This class holds one nonnegative IDF weight per vocabulary id.
    """

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)

    def __getitem__(self, token_id):
        return float(self.weights[token_id])

    def __len__(self):
        return len(self.weights)


def compute_idf(dialogues, vocab):
    """compute_idf

    idf(w) = ln(N / df(w)) with each dialogue (context and target) one
    document and df clamped to at least 1. The reserved tokens ([PAD],
    [CLS], the dialogue state tokens and the rest) are markers rather
    than words, so their idf is fixed at 0.

    Args:
        dialogues: (list) : the corpus
        vocab: (Vocabulary) : id space of the table

    Returns:
        table (IdfTable)
    """
    if not dialogues:
        raise DataError("compute_idf needs a non-empty corpus")
    doc_freq = np.zeros(len(vocab))
    for dialogue in dialogues:
        ids = set(dialogue.target_response)
        for utterance in dialogue.context_utterances:
            ids.update(utterance)
        doc_freq[list(ids)] += 1
    weights = np.log(len(dialogues) / np.maximum(doc_freq, 1.0))
    weights[: len(RESERVED)] = 0.0
    return IdfTable(weights)


def token_frequencies(dialogues, vocab):
    """Target-token counts over the corpus, reserved tokens excluded."""
    counts = np.zeros(len(vocab))
    for dialogue in dialogues:
        for token_id in dialogue.target_response:
            counts[token_id] += 1
    counts[: len(RESERVED)] = 0.0
    return counts


@dataclass
class Resources:
    """
    Per-vocabulary lookup tables the model reads from.

    vad_table: V×3; idf_table: V; token_freqs: V; emotion_word_ids: the
    vocabulary id of each of the 32 emotion words, in label order.
    """

    vocab: Vocabulary
    vad_table: np.ndarray
    idf_table: np.ndarray
    token_freqs: np.ndarray
    emotion_word_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.emotion_word_ids is None:
            self.emotion_word_ids = np.array(
                [self.vocab.id_of(label) for label in EMOTION_LABELS]
            )
        if np.any(self.emotion_word_ids == UNK_ID):
            raise DataError("vocabulary is missing emotion words")


def build_resources(vocab, dialogues, vad):
    """build_resources

    Assemble the lookup tables for a vocabulary from the training
    dialogues and the lexicon.

    Args:
        vocab: (Vocabulary) : model vocabulary
        dialogues: (list) : training dialogues
        vad: (VadLexicon) : lexicon

    Returns:
        resources (Resources)
    """
    vad_table = np.array([vad.lookup(token) for token in vocab.tokens])
    covered = sum(1 for token in vocab.tokens if token in vad)
    logger.info(
        "VAD lexicon covers %d of %d vocabulary tokens", covered, len(vocab)
    )
    return Resources(
        vocab=vocab,
        vad_table=vad_table,
        idf_table=compute_idf(dialogues, vocab).weights,
        token_freqs=token_frequencies(dialogues, vocab),
    )


@dataclass
class Batch:
    """
    A padded batch.

    context_ids, dialogue_state_ids, position_ids, pad_mask: B×L;
    emotion_labels: B; target_ids, target_mask: B×T with [SOS]/[EOS];
    context_ext_ids / target_ext_ids: copy-extended ids where source-only
    words get ids past the vocabulary; oov_tokens: per example list of
    those words; inference_features: B×K×d or None with its B×K mask.
    """

    context_ids: np.ndarray
    dialogue_state_ids: np.ndarray
    position_ids: np.ndarray
    pad_mask: np.ndarray
    emotion_labels: np.ndarray
    target_ids: np.ndarray
    target_mask: np.ndarray
    context_ext_ids: np.ndarray
    target_ext_ids: np.ndarray
    oov_tokens: list
    indices: list
    inference_features: np.ndarray = None
    inference_mask: np.ndarray = None

    @property
    def size(self):
        return self.context_ids.shape[0]

    @property
    def max_oov(self):
        return max((len(oov) for oov in self.oov_tokens), default=0)

    def select(self, rows):
        """A batch made of the given rows, in order."""
        rows = list(rows)

        def take(array):
            return None if array is None else array[rows]

        return Batch(
            context_ids=take(self.context_ids),
            dialogue_state_ids=take(self.dialogue_state_ids),
            position_ids=take(self.position_ids),
            pad_mask=take(self.pad_mask),
            emotion_labels=take(self.emotion_labels),
            target_ids=take(self.target_ids),
            target_mask=take(self.target_mask),
            context_ext_ids=take(self.context_ext_ids),
            target_ext_ids=take(self.target_ext_ids),
            oov_tokens=[self.oov_tokens[row] for row in rows],
            indices=[self.indices[row] for row in rows],
            inference_features=take(self.inference_features),
            inference_mask=take(self.inference_mask),
        )


def _flatten(dialogue, length, truncate):
    """[CLS] + utterances, keeping the most recent tokens."""
    tokens, ids, roles = [], [], []
    for turn, (utt_tokens, utt_ids) in enumerate(
        zip(dialogue.context_tokens, dialogue.context_utterances)
    ):
        role = SPK_ID if turn % 2 == 0 else LSN_ID
        tokens.extend(utt_tokens)
        ids.extend(utt_ids)
        roles.extend([role] * len(utt_ids))
    truncated = len(ids) + 1 > length
    if truncated:
        if not truncate:
            raise DataError(
                f"dialogue {dialogue.index}: context of {len(ids)} tokens "
                f"does not fit L={length}"
            )
        keep = length - 1
        tokens, ids, roles = tokens[-keep:], ids[-keep:], roles[-keep:]
    return [CLS] + tokens, [CLS_ID] + ids, [SPK_ID] + roles, truncated


def make_batches(
    dialogues,
    vocab,
    batch_size,
    L,
    seed=0,
    max_target_len=32,
    truncate=True,
    shuffle=True,
):
    """make_batches

    Lay dialogues out as padded batches.

    The context row is [CLS] followed by the flattened utterances; state
    ids alternate speaker/listener by utterance starting with the
    speaker. Contexts longer than L lose their oldest tokens first.
    Targets are [SOS] + response + [EOS], with the response cut to
    max_target_len - 2 tokens. The order is a deterministic shuffle
    under `seed`; the last partial batch is kept.

    Default:
        make_batches(dialogues, vocab, batch_size, L, seed=0,
                     max_target_len=32, truncate=True, shuffle=True)

    Args:
        dialogues: (list) : encoded dialogues
        vocab: (Vocabulary) : the encoding vocabulary
        batch_size: (int) : examples per batch, >= 1
        L: (int) : context length
        seed: (int) : shuffle seed
        max_target_len: (int) : longest target row, markers included
        truncate: (bool) : False raises on contexts longer than L
        shuffle: (bool) : False keeps corpus order

    Returns:
        batches (list of Batch)
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be at least 1")
    order = np.arange(len(dialogues))
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(dialogues))

    batches = []
    truncated = 0
    for start in range(0, len(order), batch_size):
        chunk = [dialogues[index] for index in order[start:start + batch_size]]
        batch, count = _make_batch(
            chunk, vocab, L, max_target_len, truncate
        )
        truncated += count
        batches.append(batch)
    if truncated:
        logger.warning(
            "%d of %d contexts truncated to L=%d", truncated, len(dialogues), L
        )
    return batches


def _make_batch(dialogues, vocab, L, max_target_len, truncate):
    size = len(dialogues)
    vocab_size = len(vocab)
    context_ids = np.full((size, L), PAD_ID, dtype=np.int64)
    state_ids = np.full((size, L), PAD_ID, dtype=np.int64)
    position_ids = np.zeros((size, L), dtype=np.int64)
    pad_mask = np.zeros((size, L), dtype=bool)
    context_ext = np.full((size, L), PAD_ID, dtype=np.int64)

    keep = max_target_len - 2
    target_len = max(len(d.target_response[:keep]) for d in dialogues) + 2
    target_ids = np.full((size, target_len), PAD_ID, dtype=np.int64)
    target_ext = np.full((size, target_len), PAD_ID, dtype=np.int64)
    target_mask = np.zeros((size, target_len), dtype=bool)
    labels = np.array(
        [
            -1 if d.emotion_label is None else d.emotion_label
            for d in dialogues
        ],
        dtype=np.int64,
    )

    oov_tokens = []
    truncated = 0
    for row, dialogue in enumerate(dialogues):
        tokens, ids, roles, cut = _flatten(dialogue, L, truncate)
        truncated += int(cut)
        length = len(ids)
        context_ids[row, :length] = ids
        state_ids[row, :length] = roles
        position_ids[row, :length] = np.arange(length)
        pad_mask[row, :length] = True

        oov = []
        for col, (token, token_id) in enumerate(zip(tokens, ids)):
            if token_id == UNK_ID and token not in vocab:
                if token not in oov:
                    oov.append(token)
                context_ext[row, col] = vocab_size + oov.index(token)
            else:
                context_ext[row, col] = token_id
        oov_tokens.append(oov)

        response = dialogue.target_response[:keep]
        words = dialogue.target_tokens[:keep]
        row_ids = [SOS_ID] + list(response) + [EOS_ID]
        row_ext = [SOS_ID]
        for token, token_id in zip(words, response):
            if token_id == UNK_ID and token in oov:
                row_ext.append(vocab_size + oov.index(token))
            else:
                row_ext.append(token_id)
        row_ext.append(EOS_ID)
        target_ids[row, : len(row_ids)] = row_ids
        target_ext[row, : len(row_ext)] = row_ext
        target_mask[row, : len(row_ids)] = True

    features, feature_mask = _stack_features(dialogues)
    batch = Batch(
        context_ids=context_ids,
        dialogue_state_ids=state_ids,
        position_ids=position_ids,
        pad_mask=pad_mask,
        emotion_labels=labels,
        target_ids=target_ids,
        target_mask=target_mask,
        context_ext_ids=context_ext,
        target_ext_ids=target_ext,
        oov_tokens=oov_tokens,
        indices=[dialogue.index for dialogue in dialogues],
        inference_features=features,
        inference_mask=feature_mask,
    )
    return batch, truncated


def _stack_features(dialogues):
    present = [d for d in dialogues if d.inference_features is not None]
    if not present:
        return None, None
    count = max(d.inference_features.shape[0] for d in present)
    dims = {d.inference_features.shape[1] for d in present}
    if len(dims) != 1:
        raise DataError(
            f"inference features of mixed dimensions {sorted(dims)}"
        )
    dim = dims.pop()
    features = np.zeros((len(dialogues), count, dim))
    mask = np.zeros((len(dialogues), count), dtype=bool)
    for row, dialogue in enumerate(dialogues):
        if dialogue.inference_features is None:
            continue
        rows = dialogue.inference_features.shape[0]
        features[row, :rows] = dialogue.inference_features
        mask[row, :rows] = True
    return features, mask


# EmpatheticDialogues conversion


def convert_ed(csv_path, out_path=None):
    """convert_ed

    Convert an EmpatheticDialogues CSV (conv_id, utterance_idx, context,
    prompt, utterance, ...) to dialogue records.

    Each listener turn (even utterance_idx) becomes one record whose
    context is every earlier utterance of the conversation. `_comma_`
    escapes become commas.

    Default:
        convert_ed(csv_path, out_path=None)

    Args:
        csv_path: (str) : ED split file
        out_path: (str : None) : write line-delimited JSON here

    Returns:
        records (list of dict)
    """
    conversations = defaultdict(list)
    with open(csv_path, encoding="utf-8", newline="") as fobj:
        reader = csv.DictReader(fobj)
        for line_no, row in enumerate(reader, start=2):
            try:
                conv_id = row["conv_id"]
                turn = int(row["utterance_idx"])
                utterance = row["utterance"]
                emotion = row.get("context") or row.get("emotion")
            except (KeyError, TypeError, ValueError):
                raise DataError(f"{csv_path} line {line_no}: malformed row")
            if emotion not in EMOTION_INDEX:
                raise DataError(
                    f"{csv_path} line {line_no}: unknown emotion {emotion!r}; "
                    f"valid labels are {', '.join(EMOTION_LABELS)}"
                )
            conversations[conv_id].append(
                (
                    turn,
                    utterance.replace(ED_COMMA, ","),
                    emotion,
                    (row.get("prompt") or "").replace(ED_COMMA, ","),
                )
            )

    records = []
    for conv_id, turns in conversations.items():
        turns.sort(key=lambda item: item[0])
        for position, (turn, utterance, emotion, prompt) in enumerate(turns):
            if turn % 2 == 1 or position == 0:
                continue
            records.append(
                {
                    "conv_id": conv_id,
                    "context": [item[1] for item in turns[:position]],
                    "target": utterance,
                    "emotion": emotion,
                    "situation": prompt,
                }
            )
    logger.info(
        "converted %d conversations into %d records",
        len(conversations),
        len(records),
    )
    if out_path is not None:
        write_records(records, out_path)
    return records


def split_records(records, ratios=(8, 1, 1), seed=0):
    """split_records

    Split records into train/validation/test by conversation, so no
    conversation spans two splits.

    Args:
        records: (list of dict) : records with a `conv_id`
        ratios: (tuple) : relative split sizes
        seed: (int) : shuffle seed

    Returns:
        (train, valid, test) (tuple of lists)
    """
    keys = [record.get("conv_id", str(i)) for i, record in enumerate(records)]
    conv_ids = sorted(set(keys))
    order = np.random.default_rng(seed).permutation(len(conv_ids))
    total = float(sum(ratios))
    cut1 = int(math.floor(len(conv_ids) * ratios[0] / total))
    cut2 = cut1 + int(math.floor(len(conv_ids) * ratios[1] / total))
    assignment = {}
    for rank, index in enumerate(order):
        split = 0 if rank < cut1 else 1 if rank < cut2 else 2
        assignment[conv_ids[index]] = split
    splits = ([], [], [])
    for key, record in zip(keys, records):
        splits[assignment[key]].append(record)
    return splits


def write_records(records, path):
    """Write records as line-delimited JSON."""
    with open(ensure_dir(path), "w", encoding="utf-8") as fobj:
        for record in records:
            fobj.write(json.dumps(record) + "\n")
    return path
