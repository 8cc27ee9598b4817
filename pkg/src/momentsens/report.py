"""Tables, golden comparisons, atomic file output and run manifests."""

import hashlib
import json
import os
import platform
import tempfile
from dataclasses import dataclass
from importlib import resources

import numpy as np
import pandas as pd

from .exceptions import ShapeMismatch
from .sensitivity import MEASURES

GOLDEN_TABLES = ("probit_optimal", "probit_diagonal", "weibull_optimal", "weibull_diagonal")
FLAG = "not_identified"
FOOTNOTE = "\\* Not identified after the moment is removed; the variance change is unbounded."


# ---------------------------------------------------------------- files


def atomic_write(path, data, mode="w"):
    """Write ``data`` to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_frame(path):
    """Inverse of :func:`write_frame`; floats parse back bit for bit."""
    return pd.read_csv(path, float_precision="round_trip")


def write_frame(df, path):
    """CSV with round-trip float precision."""
    return atomic_write(path, df.to_csv(index=False, float_format="%.17g", lineterminator="\n"))


def sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------- markdown


def _fmt(v, flagged):
    if flagged:
        return ">100\\*" if not np.isfinite(v) or abs(v) > 100 else f"{v:.3f}\\*"
    return f"{v:.3f}"


def markdown_table(long, title=None, measures=None):
    """Blocked layout: one block per measure, parameters as rows, moments as columns.

    ``long`` is the frame from :meth:`SensitivityReport.to_frame`. Values have
    three decimals; flagged cells read ``>100*`` and add a footnote.
    """
    measures = measures or [m for m in MEASURES if m in set(long["measure"])]
    params = list(dict.fromkeys(long["parameter"]))
    moments = list(dict.fromkeys(long["moment"]))
    idx = long.set_index(["measure", "parameter", "moment"])
    out = []
    if title:
        out += [f"### {title}", ""]
    out.append("| | " + " | ".join(moments) + " |")
    out.append("|---|" + "---:|" * len(moments))
    any_flag = False
    for m in measures:
        out.append(f"| **{m}** |" + " |" * len(moments))
        for p in params:
            cells = []
            for k in moments:
                row = idx.loc[(m, p, k)]
                flagged = row["flag"] == FLAG
                any_flag |= flagged
                cells.append(_fmt(float(row["value"]), flagged))
            out.append(f"| {p} | " + " | ".join(cells) + " |")
    if any_flag:
        out += ["", FOOTNOTE]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- goldens


def load_golden(name):
    """A shipped golden table by name, or any CSV path with the same columns."""
    if name in GOLDEN_TABLES:
        with resources.files("momentsens").joinpath(f"goldens/{name}.csv").open("r") as fh:
            df = pd.read_csv(fh, keep_default_na=False, na_values=[""], float_precision="round_trip")
    else:
        df = pd.read_csv(name, keep_default_na=False, na_values=[""], float_precision="round_trip")
    df["flag"] = df["flag"].fillna("").astype(str)
    return df


@dataclass
class GoldenCheck:
    passed: bool
    n_cells: int
    max_deviation: float
    failures: pd.DataFrame

    def summary(self):
        head = f"{'PASS' if self.passed else 'FAIL'}: {self.n_cells} cells, max deviation {self.max_deviation:.4g}"
        if self.passed:
            return head
        lines = [head]
        for r in self.failures.itertuples(index=False):
            lines.append(f"  {r.measure}[{r.parameter}, {r.moment}]: {r.reason}")
        return "\n".join(lines)


def golden_check(produced, golden, rel_tol=0.05, abs_tol=0.02, small=0.05, tolerances=None):
    """Compare a long-format table against a golden one, cell by cell.

    Cells with ``|golden| > small`` must agree to ``rel_tol`` relative,
    others to ``abs_tol`` absolute. ``tolerances`` maps a measure to its own
    ``(rel_tol, abs_tol)``. Not-identified flags must agree exactly; flagged
    values are not compared. Measures absent from the golden table are ignored.
    """
    tolerances = tolerances or {}
    keys = ["measure", "parameter", "moment"]
    produced = produced.copy()
    produced["flag"] = produced["flag"].fillna("").astype(str)
    for m in golden["measure"].unique():
        g = golden[golden["measure"] == m]
        p = produced[produced["measure"] == m]
        for col in ("parameter", "moment"):
            if set(g[col]) != set(p[col]):
                raise ShapeMismatch(
                    f"{m}: {col} labels differ (golden {sorted(set(g[col]))}, produced {sorted(set(p[col]))})"
                )
    merged = golden.merge(produced[keys + ["value", "flag"]], on=keys, how="left", suffixes=("_golden", "_produced"))
    failures = []
    max_dev = 0.0
    for r in merged.itertuples(index=False):
        rel, ab = tolerances.get(r.measure, (rel_tol, abs_tol))
        cell = {"measure": r.measure, "parameter": r.parameter, "moment": r.moment}
        if r.flag_golden != r.flag_produced:
            failures.append({**cell, "golden": r.value_golden, "produced": r.value_produced,
                             "reason": f"flag {r.flag_produced or 'none'!r}, expected {r.flag_golden or 'none'!r}"})
            continue
        if r.flag_golden:
            continue
        dev = abs(r.value_produced - r.value_golden)
        if not np.isfinite(dev):
            failures.append({**cell, "golden": r.value_golden, "produced": r.value_produced, "reason": "non-finite value"})
            continue
        max_dev = max(max_dev, dev)
        limit = rel * abs(r.value_golden) if abs(r.value_golden) > small else ab
        if dev > limit:
            failures.append({**cell, "golden": r.value_golden, "produced": r.value_produced,
                             "reason": f"{r.value_produced:.4f} vs {r.value_golden:.4f} (limit {limit:.4f})"})
    cols = keys + ["golden", "produced", "reason"]
    return GoldenCheck(not failures, len(merged), max_dev, pd.DataFrame(failures, columns=cols))


# ---------------------------------------------------------------- manifests


def environment_versions():
    import numba
    import scipy
    import sklearn

    from . import __version__

    return {
        "momentsens": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "scikit-learn": sklearn.__version__,
        "numba": numba.__version__,
    }


def write_manifest(path, argv, settings, outputs):
    """Record how a run was made and a hash of every file it wrote."""
    manifest = {
        "argv": list(argv),
        "settings": settings,
        "versions": environment_versions(),
        "outputs": {os.path.basename(p): sha256(p) for p in outputs},
    }
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return manifest


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
