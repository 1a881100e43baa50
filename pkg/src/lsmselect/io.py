"""Reading and writing networks, covariate tables, model snapshots and
results tables.

All tables are comma-separated UTF-8 text. Readers accept LF or CRLF line
endings and reject malformed input instead of coercing it; writers emit LF.
Snapshots store every real number as a hex float so a round trip is exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .core import ActiveSet, CovariateMatrix, Hyperparams, LatentState, Network, check_adjacency
from .exceptions import (
    ChecksumWarning,
    DimensionMismatch,
    HeaderMissing,
    NonBinaryEntry,
    ParseError,
    ValidationError,
    VersionMismatch,
)

SNAPSHOT_VERSION = 1
MANIFEST_VERSION = 1
STAGES = ("stage1", "refit")


def _lines(path):
    # newline="" keeps csv in charge of CR/LF handling
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def _binary(token: str, where) -> float:
    token = token.strip()
    if token == "0":
        return 0.0
    if token == "1":
        return 1.0
    raise NonBinaryEntry(f"entry {token!r} at {where} is not 0 or 1", where)


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------

def read_network(path, format: str = "edgelist", node_ids: Optional[Sequence[str]] = None) -> Network:
    """Load an undirected network.

    Parameters
    ----------
    path : str or Path
    format : {"edgelist", "adjacency"}
        ``edgelist`` holds one ``i,j`` pair per line. Integer endpoints are
        0-based node indices; any other label is mapped to an index in
        first-seen order and the mapping is kept in ``Network.node_ids``.
        Duplicate pairs are merged and self-loops dropped with a warning.
        ``adjacency`` holds n rows of n comma-separated 0/1 values.
    node_ids : sequence of str, optional
        Fixes the node order of a labelled edge list, e.g. the id column of
        a covariate table. Every label must then appear in ``node_ids``.

    Raises
    ------
    ParseError
        With the 1-based line number of the offending line.
    NonBinaryEntry
        For adjacency entries other than 0 and 1.
    """
    if format == "edgelist":
        return _read_edgelist(path, node_ids)
    if format == "adjacency":
        return _read_adjacency(path, node_ids)
    raise ValueError(f"unknown network format {format!r}")


def _read_edgelist(path, node_ids):
    pairs = []
    for lineno, row in enumerate(_lines(path), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, found {len(row)}", lineno)
        a, b = row[0].strip(), row[1].strip()
        if not a or not b:
            raise ParseError("empty node label", lineno)
        pairs.append((lineno, a, b))

    if node_ids is not None:
        labels = [str(s) for s in node_ids]
        index = {s: i for i, s in enumerate(labels)}
        if len(index) != len(labels):
            raise ValidationError("node_ids must be unique")
        for lineno, a, b in pairs:
            for s in (a, b):
                if s not in index:
                    raise ParseError(f"unknown node label {s!r}", lineno)
    elif all(_is_index(a) and _is_index(b) for _, a, b in pairs):
        n = 1 + max((max(int(a), int(b)) for _, a, b in pairs), default=-1)
        labels = None
        index = {str(i): i for i in range(n)}
        pairs = [(ln, str(int(a)), str(int(b))) for ln, a, b in pairs]
    else:
        labels, index = [], {}
        for _, a, b in pairs:
            for s in (a, b):
                if s not in index:
                    index[s] = len(labels)
                    labels.append(s)

    n = len(index)
    A = np.zeros((n, n))
    loops = 0
    for _, a, b in pairs:
        i, j = index[a], index[b]
        if i == j:
            loops += 1
            continue
        A[i, j] = A[j, i] = 1.0
    if loops:
        warnings.warn(f"dropped {loops} self-loop(s) from {path}", stacklevel=3)
    if n < 2:
        raise DimensionMismatch(f"{path}: a network needs at least 2 nodes")
    return Network(A, tuple(labels) if labels is not None else None)


def _is_index(s: str) -> bool:
    return s.isdigit()


def _read_adjacency(path, node_ids):
    rows = [r for r in _lines(path) if r]
    n = len(rows)
    A = np.zeros((n, n))
    for i, row in enumerate(rows):
        if len(row) != n:
            raise ParseError(f"expected {n} entries, found {len(row)}", i + 1)
        A[i] = [_binary(tok, (i, j)) for j, tok in enumerate(row)]
    check_adjacency(A)
    return Network(A, tuple(node_ids) if node_ids is not None else None)


def write_network(net: Network, path, format: str = "adjacency") -> None:
    """Write ``net`` as an adjacency matrix or an edge list (i < j)."""
    A = net.adjacency
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if format == "adjacency":
            for row in A.astype(int):
                fh.write(",".join(str(v) for v in row) + "\n")
        elif format == "edgelist":
            names = net.node_ids or [str(i) for i in range(net.n)]
            for i, j in zip(*np.nonzero(np.triu(A, 1))):
                fh.write(f"{names[i]},{names[j]}\n")
        else:
            raise ValueError(f"unknown network format {format!r}")


# ---------------------------------------------------------------------------
# covariates
# ---------------------------------------------------------------------------

def read_covariates(path, id_column: Optional[str] = None):
    """Load a binary covariate table whose first row names the columns.

    Rows are nodes in index order. When ``id_column`` is given that column
    is split off and returned as node labels, so the result is
    ``(CovariateMatrix, ids)``; otherwise only the matrix is returned.

    Raises
    ------
    HeaderMissing
        If the first row looks like data (every field 0 or 1) or is absent.
    NonBinaryEntry
        ``location`` is the (row, column) of the cell, 0-based over data rows.
    """
    rows = _lines(path)
    if not rows or not rows[0]:
        raise HeaderMissing("empty file or blank header row", 1)
    header = [h.strip() for h in rows[0]]
    if all(h in ("0", "1") for h in header):
        raise HeaderMissing("first row contains only 0/1 values, expected column names", 1)
    id_pos = None
    if id_column is not None:
        if id_column not in header:
            raise HeaderMissing(f"id column {id_column!r} not in header", 1)
        id_pos = header.index(id_column)
    ids, data = [], []
    for r, row in enumerate(rows[1:]):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", r + 2)
        values = []
        for c, tok in enumerate(row):
            if c == id_pos:
                ids.append(tok.strip())
            else:
                values.append(_binary(tok, (r, c)))
        data.append(values)
    names = [h for c, h in enumerate(header) if c != id_pos]
    values = np.array(data, dtype=float).reshape(len(data), len(names))
    cov = CovariateMatrix(values, tuple(names))
    return (cov, ids) if id_column is not None else cov


def write_covariates(cov: CovariateMatrix, path, ids: Optional[Sequence[str]] = None,
                     id_column: str = "id") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        head = ([id_column] if ids is not None else []) + list(cov.names)
        fh.write(",".join(head) + "\n")
        for i, row in enumerate(cov.values.astype(int)):
            cells = ([str(ids[i])] if ids is not None else []) + [str(v) for v in row]
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    adjacency_path: str
    covariates_path: str
    format: str = "adjacency"


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    format_version: int = MANIFEST_VERSION

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("manifest ids must be unique")
        for e in self.entries:
            if not e.adjacency_path or not e.covariates_path:
                raise ValidationError(f"manifest entry {e.id!r} has an empty path")

    def __len__(self):
        return len(self.entries)


def read_manifest(path) -> DatasetManifest:
    """Read a manifest table with header ``id,adjacency_path,covariates_path[,format]``.

    Relative paths are resolved against the manifest's directory. A first
    line ``#format_version=N`` is optional.
    """
    base = Path(path).parent
    rows = _lines(path)
    version = MANIFEST_VERSION
    if rows and rows[0] and rows[0][0].startswith("#format_version="):
        version = int(rows[0][0].split("=", 1)[1])
        rows = rows[1:]
    if version > MANIFEST_VERSION:
        raise VersionMismatch(f"manifest version {version} is newer than {MANIFEST_VERSION}")
    if not rows:
        raise HeaderMissing("manifest has no header", 1)
    header = [h.strip() for h in rows[0]]
    need = ["id", "adjacency_path", "covariates_path"]
    if header[:3] != need:
        raise HeaderMissing(f"manifest header must start with {','.join(need)}", 1)
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
        rec = dict(zip(header, (c.strip() for c in row)))
        entries.append(ManifestEntry(
            id=rec["id"],
            adjacency_path=str(base / rec["adjacency_path"]) if rec["adjacency_path"] else "",
            covariates_path=str(base / rec["covariates_path"]) if rec["covariates_path"] else "",
            format=rec.get("format") or "adjacency",
        ))
    return DatasetManifest(tuple(entries), version)


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#format_version={manifest.format_version}\n")
        fh.write("id,adjacency_path,covariates_path,format\n")
        for e in manifest.entries:
            fh.write(f"{e.id},{e.adjacency_path},{e.covariates_path},{e.format}\n")


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def data_checksum(net: Network, cov: CovariateMatrix) -> str:
    """SHA-256 over the adjacency, covariate values and covariate names."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(net.adjacency, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(cov.values, dtype="<f8").tobytes())
    h.update(repr(cov.values.shape).encode())
    h.update("\x1f".join(cov.names).encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class ModelSnapshot:
    state: LatentState
    hyper: Hyperparams
    active: Optional[ActiveSet] = None
    seed: int = 0
    checksum: str = ""
    stage: str = "stage1"
    extra: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}")


def _hex_array(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(x).hex() for x in a.ravel()]}


def _from_hex(d) -> np.ndarray:
    return np.array([float.fromhex(x) for x in d["data"]], dtype=float).reshape(d["shape"])


def _hyper_to_json(h: Hyperparams) -> dict:
    out = {}
    for f in fields(h):
        v = getattr(h, f.name)
        if isinstance(v, float):
            v = v.hex()
        elif isinstance(v, tuple):
            v = [float(x).hex() for x in v]
        out[f.name] = v
    return out


def _hyper_from_json(d: dict) -> Hyperparams:
    kw = {}
    types = {f.name: f for f in fields(Hyperparams)}
    for name, v in d.items():
        if name not in types:
            raise ParseError(f"unknown hyperparameter {name!r} in snapshot")
        if isinstance(v, list):
            v = tuple(float.fromhex(x) for x in v)
        elif isinstance(v, str) and name not in ("optimizer_kind", "selection_criterion", "aic_loss"):
            v = float.fromhex(v)
        kw[name] = v
    return Hyperparams(**kw)


def write_snapshot(snapshot: ModelSnapshot, path) -> None:
    """Write ``snapshot`` as JSON with every float in hex notation."""
    s = snapshot.state
    doc = {
        "format_version": SNAPSHOT_VERSION,
        "state": {"Z": _hex_array(s.Z), "alpha": _hex_array(s.alpha),
                  "beta": _hex_array(s.beta), "gamma": _hex_array(s.gamma)},
        "hyper": _hyper_to_json(snapshot.hyper),
        "active": None if snapshot.active is None else {
            "indices": list(snapshot.active.indices),
            "threshold_used": float(snapshot.active.threshold_used).hex()},
        "provenance": {"seed": snapshot.seed, "checksum": snapshot.checksum,
                       "stage": snapshot.stage},
        "extra": dict(snapshot.extra),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_snapshot(path, net: Optional[Network] = None,
                  cov: Optional[CovariateMatrix] = None) -> ModelSnapshot:
    """Load a snapshot; if data are given, compare their checksum.

    Raises
    ------
    VersionMismatch
        For snapshots written by a newer format version.

    Warns
    -----
    ChecksumWarning
        When ``net``/``cov`` differ from the data the snapshot was fit on.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from exc
    version = doc.get("format_version")
    if not isinstance(version, int):
        raise ParseError(f"{path}: missing format_version")
    if version > SNAPSHOT_VERSION:
        raise VersionMismatch(f"snapshot version {version} is newer than supported {SNAPSHOT_VERSION}")
    st = doc["state"]
    state = LatentState(_from_hex(st["Z"]), _from_hex(st["alpha"]),
                        _from_hex(st["beta"]), _from_hex(st["gamma"]))
    active = None
    if doc.get("active") is not None:
        active = ActiveSet(tuple(doc["active"]["indices"]),
                           float.fromhex(doc["active"]["threshold_used"]))
    prov = doc["provenance"]
    snap = ModelSnapshot(state=state, hyper=_hyper_from_json(doc["hyper"]), active=active,
                         seed=int(prov["seed"]), checksum=prov["checksum"],
                         stage=prov["stage"], extra=dict(doc.get("extra", {})))
    if net is not None and cov is not None and data_checksum(net, cov) != snap.checksum:
        warnings.warn(f"{path}: data checksum does not match the snapshot", ChecksumWarning,
                      stacklevel=2)
    return snap


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

RESULT_COLUMNS = (
    "regime", "n_noise", "replicate", "method", "seed",
    "auc_network", "auc_network_per_node", "auc_covariates_mean",
    "mean_logloss_A", "mean_logloss_Y", "tn_rate", "tp_rate",
    "n_selected", "chosen_lambda", "chosen_delta", "iterations", "status",
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def export_results(rows: Iterable[dict], path) -> None:
    """Write one line per (regime, noise level, replicate, method).

    Each row is a mapping with keys from :data:`RESULT_COLUMNS`; missing
    keys are left blank. Rows are sorted by regime, noise level, replicate
    and then method name, so identical inputs give identical bytes.
    """
    rows = sorted(rows, key=lambda r: (str(r.get("regime", "")), int(r.get("n_noise", 0) or 0),
                                       int(r.get("replicate", 0) or 0), str(r.get("method", ""))))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for r in rows:
            unknown = set(r) - set(RESULT_COLUMNS)
            if unknown:
                raise ValueError(f"unknown result columns {sorted(unknown)}")
            fh.write(",".join(_cell(r.get(c)) for c in RESULT_COLUMNS) + "\n")


def report_row(report, **meta) -> dict:
    """Flatten an :class:`~lsmselect.metrics.EvalReport` plus metadata into a results row."""
    d = asdict(report)
    row = {c: d[c] for c in RESULT_COLUMNS if c in d}
    row.update(meta)
    return row


def export_trace(trace: Sequence, path) -> None:
    """Per-iteration losses as ``iteration,loss_A,loss_Y,joint,per_param``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,loss_A,loss_Y,joint,per_param\n")
        for t, b in enumerate(trace, start=1):
            fh.write(f"{t},{b.loss_A!r},{b.loss_Y!r},{b.joint!r},{b.per_param!r}\n")


def write_report(report, path) -> None:
    """Write an EvalReport as sorted-key JSON."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(asdict(report)), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v
