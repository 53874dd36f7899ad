import runpy
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parent.parent / "demos"


@pytest.mark.parametrize("name", ["01_losses.py", "02_model.py", "03_augmentation.py", "05_evaluation.py",
                                  pytest.param("04_train_predict.py", marks=pytest.mark.slow)])
def test_demo_runs(name, tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", [name, str(tmp_path / "figure.png")])
    runpy.run_path(str(DEMOS / name), run_name="__main__")
    assert capsys.readouterr().out
