import csv
import os
from pathlib import Path

import numpy as np
import pytest

from voxsel.data import Dataset


def make_grouped(n_subjects=40, per_subject=3, n_features=12, n_healthy=None, informative=(0,),
                 shift=2.0, seed=0, names=None) -> Dataset:
    """Synthetic subject-grouped dataset: informative columns shift with PD."""
    rng = np.random.default_rng(seed)
    n_healthy = n_subjects // 4 if n_healthy is None else n_healthy
    X, y, sid = [], [], []
    for s in range(n_subjects):
        label = int(s >= n_healthy)
        base = rng.standard_normal(n_features)
        for _ in range(per_subject):
            row = 0.6 * base + 0.4 * rng.standard_normal(n_features)
            row[list(informative)] += shift * label
            X.append(row)
            y.append(label)
            sid.append(f"s{s:03d}")
    names = names or [f"f{i}" for i in range(n_features)]
    return Dataset(np.array(X), np.array(y), np.array(sid), tuple(names),
                   np.array(["UNKNOWN"] * n_features, dtype=object))


def write_csv(path: Path, d: Dataset, id_column="id", label_column="class") -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([id_column, *d.column_names, label_column])
        for sid, row, label in zip(d.subject_ids, d.features, d.labels):
            w.writerow([sid, *(repr(float(v)) for v in row), int(label)])
    return path


@pytest.fixture
def grouped():
    return make_grouped()


@pytest.fixture
def toy_csv(tmp_path):
    """6 rows, 2 subjects x 3 rows, 4 features."""
    p = tmp_path / "toy.csv"
    p.write_text(
        "id,a,b,c,d,class\n"
        "1,0.1,2,3,4,0\n"
        "1,0.2,2,3,5,0\n"
        "1,0.3,2,3,6,0\n"
        "2,1.1,2,4,4,1\n"
        "2,1.2,2,4,5,1\n"
        "2,1.3,2,4,6,1\n",
        encoding="utf-8",
    )
    return p


@pytest.fixture(scope="session")
def uci_path():
    path = os.environ.get("VOXSEL_DATASET")
    if not path or not Path(path).is_file():
        pytest.skip("VOXSEL_DATASET does not point at the UCI speech-features file")
    return Path(path)


# -- acceptance reporting: one line per criterion in the terminal summary --

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        if rep.skipped:
            status, detail = "SKIP", str(rep.longrepr[2]) if isinstance(rep.longrepr, tuple) else detail
        else:
            status = "PASS" if rep.passed else "FAIL"
        _CRITERIA[number] = f"criterion {number:>2} {status}  {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
