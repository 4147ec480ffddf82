import importlib.util
from pathlib import Path

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"


def _load(name):
    spec = importlib.util.spec_from_file_location(name, SCRIPTS / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_truncation_script(tmp_path):
    mod = _load("truncation_error")
    rows = mod.run(mod.TruncationStudy(truncations=(50,), depths=(1,), out=tmp_path / "t.csv"))
    assert rows[0][2] <= 1e-10
    assert (tmp_path / "t.csv").read_text().startswith("depth,T,")


def test_spectrum_script(tmp_path):
    mod = _load("spectrum_decay")
    rows = mod.run(mod.SpectrumStudy(dims=(2,), relu_terms=20000, out_dir=tmp_path))
    relu = next(r for r in rows if r[0] == "relu")
    assert abs(relu[4] - 1.5) <= 0.15
    assert (tmp_path / "fits.csv").exists()


def test_finite_width_script(tmp_path):
    mod = _load("finite_width")
    rows = mod.run(mod.FiniteWidthStudy(n=16, d=4, widths=(32,), seeds=2, out=tmp_path / "f.csv"))
    assert len(rows) == 4
