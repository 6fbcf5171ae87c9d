# tests/test_empbase/__init__.py
from ..fixtures.fixture_base import (
    FULL_ACCEPTANCE,
    TOY_RECORDS,
    TOY_VAD,
    BaseTestCase,
    ModelTestCase,
    RunStoreTestCase,
    random_probs,
    small_config,
    write_jsonl,
    write_vad,
)
