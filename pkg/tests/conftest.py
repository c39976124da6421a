import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


@pytest.fixture(autouse=True)
def _isolated_output_dir(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("ROF_OUTPUT_DIR", raising=False)
