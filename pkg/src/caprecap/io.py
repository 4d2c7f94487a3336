"""CSV/JSON readers and writers plus config parsing.

CSV dialect: comma separated, mandatory header, UTF-8. Floats are written
with ``repr`` so they re-import bit-exactly. Every write goes through a
temporary file in the destination directory followed by ``os.replace``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CaptureRecaptureError
from .estimators import RecaptureObservation
from .experiments import CountTableRow
from .population import Network, Population
from .sampling import Recruit, RecruitmentForest, SampleMembership, Stage

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


class InputError(CaptureRecaptureError):
    """Malformed input file or config; carries the offending location."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


# ---------------------------------------------------------------------------
# low-level helpers


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_many(files: Dict[Any, str]) -> None:
    """Write several files; all content must be rendered before calling."""
    for path, text in files.items():
        atomic_write_text(path, text)


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def render_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


def read_csv(path, required: Sequence[str], optional: Sequence[str] = ()) -> List[Tuple[int, Dict[str, str]]]:
    """Rows as (line number, dict); header validated against the column sets."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read file: {exc.strerror}", path) from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InputError("empty file, header row required", path, 1) from None
    missing = [c for c in required if c not in header]
    if missing:
        raise InputError(f"missing columns {missing}; header is {header}", path, 1)
    unknown = [c for c in header if c not in required and c not in optional]
    if unknown:
        raise InputError(f"unknown columns {unknown}", path, 1)
    rows = []
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise InputError(f"expected {len(header)} fields, got {len(raw)}", path, lineno)
        rows.append((lineno, {h: v.strip() for h, v in zip(header, raw)}))
    return rows


def parse_int(s: str, path, line: int, name: str, minimum: Optional[int] = None) -> int:
    try:
        v = int(s)
    except ValueError:
        raise InputError(f"{name}={s!r} is not an integer", path, line) from None
    if minimum is not None and v < minimum:
        raise InputError(f"{name}={v} must be >= {minimum}", path, line)
    return v


def parse_float(s: str, path, line: int, name: str, positive: bool = False) -> float:
    try:
        v = float(s)
    except ValueError:
        raise InputError(f"{name}={s!r} is not a number", path, line) from None
    if positive and not v > 0:
        raise InputError(f"{name}={s} must be strictly positive", path, line)
    return v


def parse_bool(s: str, path, line: int, name: str) -> bool:
    low = s.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise InputError(f"{name}={s!r} is not a boolean", path, line)


# ---------------------------------------------------------------------------
# degree sequences, populations, networks


def write_degrees(path, degrees) -> None:
    atomic_write_text(path, render_csv(["degree"], ([d] for d in degrees)))


def read_degrees(path) -> np.ndarray:
    rows = read_csv(path, ["degree"])
    if not rows:
        raise InputError("no degrees found", path)
    return np.array([parse_int(r["degree"], path, ln, "degree", 1) for ln, r in rows], dtype=np.int64)


def population_csv(pop: Population) -> str:
    strata = pop.strata if pop.strata is not None else [None] * pop.size
    return render_csv(["id", "degree", "stratum"],
                      ([i, d, s] for i, (d, s) in enumerate(zip(pop.degrees, strata))))


def write_population(path, pop: Population) -> None:
    atomic_write_text(path, population_csv(pop))


def read_population(path, edges_path=None) -> Population:
    rows = read_csv(path, ["id", "degree"], ["stratum"])
    if not rows:
        raise InputError("population file has no rows", path)
    ids, degrees, strata = [], [], []
    for ln, r in rows:
        i = parse_int(r["id"], path, ln, "id", 0)
        if i != len(ids):
            raise InputError(f"ids must be 0..N-1 in order, got {i}", path, ln)
        ids.append(i)
        degrees.append(parse_int(r["degree"], path, ln, "degree", 1))
        strata.append(r.get("stratum") or None)
    has_strata = any(s is not None for s in strata)
    if has_strata and any(s is None for s in strata):
        missing = next(i for i, s in enumerate(strata) if s is None)
        raise InputError("stratum column partially empty", path, rows[missing][0])
    network = read_edges(edges_path, len(ids)) if edges_path is not None else None
    return Population(np.array(degrees), np.array(strata, dtype=object) if has_strata else None, network)


def edges_csv(network: Network) -> str:
    return render_csv(["source", "target"], network.edges())


def read_edges(path, n_nodes: int) -> Network:
    rows = read_csv(path, ["source", "target"])
    edges = []
    for ln, r in rows:
        a = parse_int(r["source"], path, ln, "source", 0)
        b = parse_int(r["target"], path, ln, "target", 0)
        if a >= n_nodes or b >= n_nodes:
            raise InputError(f"edge ({a}, {b}) references a node >= {n_nodes}", path, ln)
        if a == b:
            raise InputError(f"self-loop at node {a}", path, ln)
        edges.append((a, b))
    return Network.from_edges(n_nodes, edges)


# ---------------------------------------------------------------------------
# memberships, forests, recapture observations


MEMBERSHIP_HEADER = ["id", "in_capture", "in_recapture", "weight"]


def membership_csv(capture: SampleMembership, recapture: SampleMembership, weights) -> str:
    w = np.asarray(weights, dtype=float)
    return render_csv(MEMBERSHIP_HEADER, (
        [i, bool(capture.flags[i]), bool(recapture.flags[i]), float(w[i])]
        for i in range(capture.population_size)
    ))


def read_membership(path) -> Tuple[SampleMembership, SampleMembership, np.ndarray]:
    rows = read_csv(path, MEMBERSHIP_HEADER)
    if not rows:
        raise InputError("membership file has no rows", path)
    cap, rec, w = [], [], []
    for expected, (ln, r) in enumerate(rows):
        if parse_int(r["id"], path, ln, "id", 0) != expected:
            raise InputError("ids must be 0..N-1 in order", path, ln)
        cap.append(parse_bool(r["in_capture"], path, ln, "in_capture"))
        rec.append(parse_bool(r["in_recapture"], path, ln, "in_recapture"))
        if rec[-1]:
            w.append(parse_float(r["weight"], path, ln, "weight", positive=True))
        else:
            w.append(float(r["weight"]) if r["weight"] else math.nan)
    return (SampleMembership(np.array(cap), Stage.CAPTURE),
            SampleMembership(np.array(rec), Stage.RECAPTURE), np.array(w))


FOREST_HEADER = ["recruit_id", "recruiter_id", "wave", "tree_id"]


def forest_csv(forest: RecruitmentForest) -> str:
    return render_csv(FOREST_HEADER, (
        [r.recruit_id, r.recruiter_id, r.wave, r.tree_id] for r in forest.recruits
    ))


def read_forest(path) -> RecruitmentForest:
    out = RecruitmentForest()
    for ln, r in read_csv(path, FOREST_HEADER):
        recruiter = parse_int(r["recruiter_id"], path, ln, "recruiter_id", 0) if r["recruiter_id"] else None
        out.recruits.append(Recruit(
            parse_int(r["recruit_id"], path, ln, "recruit_id", 0), recruiter,
            parse_int(r["wave"], path, ln, "wave", 0),
            parse_int(r["tree_id"], path, ln, "tree_id", 0),
        ))
    return out


def recapture_csv(obs: RecaptureObservation) -> str:
    return render_csv(["weight", "in_first"], ([m.weight, m.in_first] for m in obs.members))


def read_recapture(path, first_sample_size: int) -> RecaptureObservation:
    """Second-stage members as ``weight,in_first`` rows (optional ``id``)."""
    rows = read_csv(path, ["weight", "in_first"], ["id"])
    w, f = [], []
    for ln, r in rows:
        w.append(parse_float(r["weight"], path, ln, "weight", positive=True))
        f.append(parse_bool(r["in_first"], path, ln, "in_first"))
    if sum(f) > first_sample_size:
        raise InputError(f"{sum(f)} members flagged in_first but capture size is {first_sample_size}", path)
    return RecaptureObservation.from_arrays(first_sample_size, w, f)


def read_count_table(path) -> List[CountTableRow]:
    path = Path(path)
    rows = read_csv(path, ["group", "capture_size", "recapture_size", "recaptured"], ["weights_file"])
    out = []
    for ln, r in rows:
        s1 = parse_int(r["capture_size"], path, ln, "capture_size", 1)
        s2 = parse_int(r["recapture_size"], path, ln, "recapture_size", 1)
        a11 = parse_int(r["recaptured"], path, ln, "recaptured", 0)
        weights = in_first = None
        if r.get("weights_file"):
            obs = read_recapture(path.parent / r["weights_file"], s1)
            weights, in_first = tuple(obs.weights.tolist()), tuple(obs.in_first.tolist())
        try:
            out.append(CountTableRow(r["group"], s1, s2, a11, weights, in_first))
        except ValueError as exc:
            raise InputError(str(exc), path, ln) from None
    return out


# ---------------------------------------------------------------------------
# structured configs


def load_config(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config: {exc.strerror}", path) from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object", path)
    return data


def build_dataclass(cls, data: dict, where: str = "config"):
    """Instantiate ``cls`` from ``data``; unknown keys are an error."""
    if not isinstance(data, dict):
        raise InputError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InputError(f"{where}: unknown keys {unknown}; allowed {sorted(names)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: {exc}") from None
