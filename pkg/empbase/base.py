# empbase/base.py
"""
This module maintains the run store.

A `DB` takes a database URI, creates the engine, a session and the run
store tables, and records what a run produces: its config, the losses of
every logged step, evaluation reports and polarity tables.

The URI usually comes from `paths.run_db`, for example
`sqlite:///{checkpoint_dir}/runs.db`; the default `sqlite://` keeps the
store in memory.
"""
import importlib
import logging

from sqlalchemy import create_engine, inspect, orm

from . import records
from .serializers import to_json
from .utils import _is_sqlite, ensure_dir

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "lr", "l_e", "l_g", "l_ccl", "l_div", "total")


class DB(object):
    """
    This class defines a central location for accepting the run store
    configuration, creating connections and sessions.

    Default:
        DB(config="sqlite://", checkfirst=True, echo=False)

    Args:
        config: (str) : database URI, the equivalent of
            SQLALCHEMY_DATABASE_URI.
        checkfirst: (bool) : create tables only if the table
            does not exist
        echo: (bool) : log actions in database engine
    """

    def __init__(self, config="sqlite://", checkfirst=True, echo=False):

        # not a fan of this
        if config != "sqlite///:memory:":
            self.config = config
        else:
            self.config = "sqlite://"

        self.engine = None
        self.session = None

        self.Model = self.load_model_class()
        self.Model.db = self
        self.Run = records.Run
        self.LossRecord = records.LossRecord
        self.EvalRecord = records.EvalRecord
        self.PolarityRow = records.PolarityRow

        self.session = self.create_session(checkfirst=checkfirst, echo=echo)

    @staticmethod
    def load_model_class():
        """ load_model_class

        This function creates a fresh copy of the declarative base.
        This causes a reset of the metaclass.

        Returns:
            model_class (obj)
        """
        importlib.reload(records)
        return records.Record

    def _prepare_path(self):
        """Create the directory of a file-backed sqlite store."""
        prefix = "sqlite:///"
        if _is_sqlite(self.config) and self.config.startswith(prefix):
            path = self.config[len(prefix):]
            if path and path != ":memory:":
                ensure_dir(path)

    def create_engine(self, echo=False):
        """ create_engine

        Basically a pass through to sqlalchemy.

        Args:
            echo: (bool) : log actions in database engine

        Returns:
            engine (obj) : newly created engine
        """
        self._prepare_path()
        self.engine = create_engine(self.config, echo=echo)
        return self.engine

    def create_session(self, checkfirst=True, echo=False):
        """create_session

        This function instantiates an engine, and connects to the database.
        A session is initiated. Finally, any new tables are created.

        Default:
            create_session(checkfirst=True, echo=False)

        Returns:
            session (obj)
        """
        engine = self.create_engine(echo=echo)
        session = orm.sessionmaker(bind=engine)()
        self.Model.metadata.create_all(engine, checkfirst=checkfirst)
        self.session = session
        self._apply_db()
        return session

    def get_table_list(self):
        """Tables as found in the database."""
        return inspect(self.engine).get_table_names()

    def drop_all(self, checkfirst=True):
        """Drop the run store tables."""
        self.session.close()
        self.Model.metadata.drop_all(self.engine, checkfirst=checkfirst)

    def create_all(self, checkfirst=True):
        self.Model.metadata.create_all(self.engine, checkfirst=checkfirst)
        self._apply_db()

    def _apply_db(self):
        """ _apply_db

        This function walks the record classes and inserts the query
        and db objects.
        """
        for cls in records.RECORD_CLASSES:
            self.apply_db(cls)

    def apply_db(self, cls):
        cls.query = self.session.query(cls)
        cls.db = self

    def close(self):
        self.session.close()
        self.engine.dispose()

    # run records

    def start_run(self, config):
        """start_run

        Record a new run.

        Args:
            config: (RunConfig) : the run configuration

        Returns:
            run (Run)
        """
        run = self.Run(
            name=config.name,
            seed=config.seed,
            config=to_json(config.to_dict(), sort=True),
        )
        return run.save()

    def log_losses(self, run, step, values):
        """Store the component losses of one step; `values` as returned
        by `EmpatheticModel.train_step`."""
        record = self.LossRecord(
            run_id=run.id,
            step=step,
            lr=values.get("lr"),
            l_e=values["l_e"],
            l_g=values["l_g"],
            l_ccl=values.get("l_ccl"),
            l_div=values["l_div"],
            total=values["total"],
        )
        return record.save()

    def log_eval(self, run, report):
        record = self.EvalRecord(
            run_id=run.id,
            split=report.split,
            step=report.step,
            acc=report.acc,
            ppl=report.ppl,
            dist1=report.dist1,
            dist2=report.dist2,
            examples=report.examples,
            tokens=report.tokens,
        )
        return record.save()

    def log_polarity(self, run, polarity_records):
        rows = [
            self.PolarityRow(
                run_id=run.id,
                word=record.word,
                p_t=record.trait_polarity,
                p_s=record.state_polarity,
                valence=record.valence,
                sim_pos=record.sim_pos,
                sim_neg=record.sim_neg,
            )
            for record in polarity_records
        ]
        self.session.add_all(rows)
        self.session.commit()
        return rows

    def loss_history(self, run):
        return (
            self.session.query(self.LossRecord)
            .filter(self.LossRecord.run_id == run.id)
            .order_by(self.LossRecord.step)
            .all()
        )

    def eval_history(self, run, split=None):
        query = self.session.query(self.EvalRecord).filter(
            self.EvalRecord.run_id == run.id
        )
        if split is not None:
            query = query.filter(self.EvalRecord.split == split)
        return query.order_by(self.EvalRecord.step).all()

    def export_loss_log(self, run, path, include_ccl=True):
        """export_loss_log

        Write the loss history as a tab-separated file. Without the
        contrastive loss the `l_ccl` column is left out.

        Args:
            run: (Run) : the run
            path: (str) : target file
            include_ccl: (bool) : keep the l_ccl column

        Returns:
            path (str)
        """
        columns = [
            column
            for column in LOSS_COLUMNS
            if include_ccl or column != "l_ccl"
        ]
        with open(ensure_dir(path), "w", encoding="utf-8") as fobj:
            fobj.write("\t".join(columns) + "\n")
            for record in self.loss_history(run):
                values = record.to_dict()
                fobj.write(
                    "\t".join(_format_cell(values[key]) for key in columns)
                    + "\n"
                )
        return path


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)
