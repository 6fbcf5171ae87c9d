# empbase/polarity.py
"""
This module implements the trait/state polarity discrepancy analysis.

A word's trait polarity comes from its lexicon valence: positive when
valence > 0.5. Its state polarity comes from the embedding space: the
words of each trait group are averaged into a centroid, and a word is
positive when its vector is closer (by cosine) to the positive
centroid. Words whose two polarities disagree are discrepant.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from .corpus import VAD_DEFAULT
from .errors import DataError
from .utils import ensure_dir

logger = logging.getLogger(__name__)

VALENCE_THRESHOLD = 0.5
TIE_TOLERANCE = 1e-12

# 11,559 discrepant of 23,712 words, with NRC-VAD and 300-dim vectors
REFERENCE = (48.75, 11559, 23712)

TABLE_COLUMNS = ("word", "P_t", "P_s", "valence", "sim_pos", "sim_neg")


@dataclass
class PolarityRecord:
    word: str
    trait_polarity: int
    state_polarity: int
    valence: float
    sim_pos: float
    sim_neg: float

    @property
    def discrepant(self):
        return self.trait_polarity != self.state_polarity

    def row(self):
        return (
            f"{self.word}\t{self.trait_polarity}\t{self.state_polarity}\t"
            f"{self.valence:.4f}\t{self.sim_pos:.6f}\t{self.sim_neg:.6f}"
        )


@dataclass
class DiscrepancyReport:
    count: int
    total: int
    proportion: float
    records: list = field(default_factory=list)

    @property
    def discrepant_words(self):
        return [record.word for record in self.records if record.discrepant]


def trait_polarity(vad, words):
    """1 when valence > 0.5, else 0; absent words use the default valence."""
    return {
        word: int(vad.lookup(word)[0] > VALENCE_THRESHOLD) for word in words
    }


def _cosine(vector, centroid):
    denom = np.linalg.norm(vector) * np.linalg.norm(centroid)
    if denom == 0:
        return 0.0
    return float(vector @ centroid / denom)


def centroids(vectors, trait_map):
    """centroids

    Arithmetic mean vector of each trait group, over the words that have
    vectors.

    Args:
        vectors: (WordVectors) : the embedding space
        trait_map: (dict) : word -> P_t

    Returns:
        (positive, negative) (tuple of arrays)
    """
    groups = {0: [], 1: []}
    for word, polarity in trait_map.items():
        if word in vectors:
            groups[polarity].append(vectors[word])
    for polarity, name in ((1, "positive"), (0, "negative")):
        if not groups[polarity]:
            raise DataError(f"polarity analysis: the {name} group is empty")
    return np.mean(groups[1], axis=0), np.mean(groups[0], axis=0)


def state_polarity(vectors, trait_map):
    """state_polarity

    P_s per word from the cosine similarity to the two group centroids.
    An exact tie keeps the trait polarity.

    Args:
        vectors: (WordVectors) : the embedding space
        trait_map: (dict) : word -> P_t

    Returns:
        (dict) : word -> (P_s, sim_pos, sim_neg), for words with vectors
    """
    positive, negative = centroids(vectors, trait_map)
    result = {}
    for word, polarity in trait_map.items():
        if word not in vectors:
            continue
        sim_pos = _cosine(vectors[word], positive)
        sim_neg = _cosine(vectors[word], negative)
        if abs(sim_pos - sim_neg) <= TIE_TOLERANCE:
            state = polarity
        else:
            state = int(sim_pos > sim_neg)
        result[word] = (state, sim_pos, sim_neg)
    return result


def analyze(vad, vectors, words=None):
    """analyze

    Polarity records for a word list, by default every lexicon word that
    has a vector. Words without a vector are skipped.

    Args:
        vad: (VadLexicon) : the lexicon
        vectors: (WordVectors) : the embedding space
        words: (iterable : None) : the words to analyze

    Returns:
        records (list of PolarityRecord) : in word order
    """
    if words is None:
        words = sorted(vad.entries)
    words = [word for word in dict.fromkeys(words) if word in vectors]
    trait_map = trait_polarity(vad, words)
    states = state_polarity(vectors, trait_map)
    records = []
    for word in words:
        state, sim_pos, sim_neg = states[word]
        records.append(
            PolarityRecord(
                word=word,
                trait_polarity=trait_map[word],
                state_polarity=state,
                valence=vad.entries.get(word, VAD_DEFAULT)[0],
                sim_pos=sim_pos,
                sim_neg=sim_neg,
            )
        )
    logger.info("polarity analysis over %d words", len(records))
    return records


def discrepancy_report(records):
    """Count and percentage of words with P_t != P_s."""
    count = sum(1 for record in records if record.discrepant)
    total = len(records)
    proportion = 100.0 * count / total if total else 0.0
    return DiscrepancyReport(count, total, proportion, list(records))


def export_table(records, path):
    """Write the tab-separated word table with a header row."""
    with open(ensure_dir(path), "w", encoding="utf-8") as fobj:
        fobj.write("\t".join(TABLE_COLUMNS) + "\n")
        for record in records:
            fobj.write(record.row() + "\n")
    return path


def read_words(path):
    """One word per line; blank lines are skipped."""
    with open(path, encoding="utf-8") as fobj:
        return [line.strip().lower() for line in fobj if line.strip()]


def summarize(report, reference=REFERENCE, tolerance=3.0):
    """summarize

    The summary line, comparing the proportion against a reference
    measurement. A proportion outside the tolerance is logged as a
    warning, not raised.

    Args:
        report: (DiscrepancyReport) : the analysis
        reference: (tuple) : (percent, discrepant words, words)
        tolerance: (float) : percentage points

    Returns:
        (line, within) (tuple of str, bool)
    """
    ref_percent, ref_count, ref_total = reference
    within = abs(report.proportion - ref_percent) <= tolerance
    line = (
        f"discrepant {report.count} of {report.total} words "
        f"({report.proportion:.2f}%); reference {ref_percent:.2f}% "
        f"({ref_count} of {ref_total}), "
        f"{'within' if within else 'outside'} ±{tolerance:g} points"
    )
    if not within:
        logger.warning("polarity proportion outside tolerance: %s", line)
    return line, within
