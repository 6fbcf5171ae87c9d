# empbase/records.py
"""
This module implements the run store tables.

`Record` replicates a few conveniences of flask_sqlalchemy models:
classes carry `db` and `query`, and records save themselves through the
session. The concrete tables hold one training run each, its per-step
losses, its evaluation reports and its polarity tables.

The module is reloaded by `DB` so every store gets a fresh declarative
base.
"""
from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy import Text
from sqlalchemy.ext.declarative import as_declarative

from .serializers import _eval_value, to_json
from .utils import xlate


@as_declarative()
class Record(object):
    """
    Base class of the run store tables.

    Serialization:

    `to_dict()` returns the table columns, or only `SERIAL_FIELDS` in
    that order when the class sets it. `SERIAL_STOPLIST` names columns
    that are never serialized.
    """

    db = None
    query = None

    SERIAL_FIELDS = None
    SERIAL_STOPLIST = None

    @classmethod
    def _class(cls):
        return cls.__name__

    @classmethod
    def get_serial_fields(cls):
        if cls.SERIAL_FIELDS is not None:
            return list(cls.SERIAL_FIELDS)
        stoplist = cls.SERIAL_STOPLIST or []
        if not isinstance(stoplist, list):
            raise ValueError(
                "SERIAL_STOPLIST must be a list of one or more fields that"
                " would not be included in a serialization."
            )
        return [
            column.name
            for column in cls.__table__.columns
            if column.name not in stoplist
        ]

    def to_dict(self, to_camel_case=False, serial_fields=None):
        """to_dict

        The record as a dict of JSON-ready values.

        Default:
            to_dict(to_camel_case=False, serial_fields=None)

        Args:
            to_camel_case: (bool) : convert keys to camel case
            serial_fields: (list : None) : a limited list of columns

        Returns:
            (dict)
        """
        if serial_fields is None:
            serial_fields = self.get_serial_fields()
        result = {}
        for key in serial_fields:
            value = _eval_value(getattr(self, key), to_camel_case)
            if to_camel_case:
                key = xlate(key, camel_case=True)
            result[key] = value
        return result

    def serialize(
        self, to_camel_case=False, indent=None, sort=False, serial_fields=None
    ):
        """Output JSON formatted data of `to_dict`."""
        return to_json(
            self.to_dict(to_camel_case, serial_fields),
            indent=indent,
            sort=sort,
        )

    def save(self):
        """Add and commit through the store session."""
        self.db.session.add(self)
        self.db.session.commit()
        return self

    def delete(self):
        self.db.session.delete(self)
        self.db.session.commit()

    def __repr__(self):
        return f"<{self._class()} {self.id}>"


class Run(Record):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True)
    name = Column(String(200), nullable=False)
    seed = Column(Integer, nullable=False)
    config = Column(Text, nullable=False)
    created_at = Column(DateTime, default=datetime.now)


class LossRecord(Record):
    __tablename__ = "loss_records"

    SERIAL_STOPLIST = ["id", "run_id"]

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    step = Column(Integer, nullable=False)
    lr = Column(Float)
    l_e = Column(Float, nullable=False)
    l_g = Column(Float, nullable=False)
    # absent when the contrastive loss is ablated
    l_ccl = Column(Float, nullable=True)
    l_div = Column(Float, nullable=False)
    total = Column(Float, nullable=False)


class EvalRecord(Record):
    __tablename__ = "eval_records"

    SERIAL_STOPLIST = ["id", "run_id"]

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    split = Column(String(20))
    step = Column(Integer)
    acc = Column(Float, nullable=False)
    ppl = Column(Float, nullable=False)
    dist1 = Column(Float, nullable=False)
    dist2 = Column(Float, nullable=False)
    examples = Column(Integer)
    tokens = Column(Integer)


class PolarityRow(Record):
    __tablename__ = "polarity_records"

    SERIAL_STOPLIST = ["id", "run_id"]

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    word = Column(String(200), nullable=False)
    p_t = Column(Integer, nullable=False)
    p_s = Column(Integer, nullable=False)
    valence = Column(Float)
    sim_pos = Column(Float)
    sim_neg = Column(Float)


RECORD_CLASSES = (Run, LossRecord, EvalRecord, PolarityRow)
