"""K-L product quantizers: level decompositions, blind optimization, strata.

A decomposition ``(N_1, ..., N_d)`` quantizes the first ``d`` K-L coordinates
of a process with optimal scalar normal quantizers of those sizes. Each
multi-index of cells is one stratum of path space.
"""

from __future__ import annotations

import enum
import json
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .processes import GaussianProcessSpec
from .quantizer import ScalarQuantizer, normal_quantizer


class Criterion(str, enum.Enum):
    QUADRATIC = "quadratic"
    LIPSCHITZ = "lipschitz"


@dataclass(frozen=True, order=True)
class ProductDecomposition:
    levels: tuple[int, ...] = ()

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        if any(n < 2 for n in levels):
            raise ValueError("active levels must be at least 2")
        if any(a < b for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be non-increasing")
        object.__setattr__(self, "levels", levels)

    @property
    def d(self) -> int:
        return len(self.levels)

    @property
    def size(self) -> int:
        return math.prod(self.levels)

    def __str__(self):
        return " - ".join(map(str, self.levels)) if self.levels else "1"


def enumerate_decompositions(budget: int) -> list[ProductDecomposition]:
    """Every non-increasing level sequence (entries >= 2) with product <= budget."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    out = []

    def walk(prefix, cap, remaining):
        out.append(ProductDecomposition(prefix))
        for n in range(2, min(cap, remaining) + 1):
            walk(prefix + (n,), n, remaining // n)

    walk((), budget, budget)
    return sorted(out, key=lambda dec: dec.levels)


def tail_variance(spec: GaussianProcessSpec, d: int) -> float:
    return spec.total_variance() - float(np.sum(spec.eigenvalues(d)))


def quadratic_criterion(spec: GaussianProcessSpec, dec: ProductDecomposition) -> float:
    """Squared L2 error of the K-L product quantizer with levels ``dec``."""
    lam = spec.eigenvalues(dec.d)
    dist = np.array([normal_quantizer(n).distortion for n in dec.levels])
    return float(np.sum(lam * dist)) + tail_variance(spec, dec.d)


def _local_inertia(lam, quantizers, tail):
    # sum_k lam_k v_k(i_k) over the full grid of multi-indices, C order
    out = np.full((), tail)
    for lk, q in zip(lam, quantizers):
        out = np.add.outer(out, lk * q.cond_vars)
    return np.ravel(out)


def _cell_probs(quantizers):
    out = np.ones(())
    for q in quantizers:
        out = np.multiply.outer(out, q.probs)
    return np.ravel(out)


def lipschitz_criterion(spec: GaussianProcessSpec, dec: ProductDecomposition) -> float:
    """(sum_i p_i sigma_i)^2 over the strata of ``dec``."""
    lam = spec.eigenvalues(dec.d)
    qs = [normal_quantizer(n) for n in dec.levels]
    sig = np.sqrt(_local_inertia(lam, qs, tail_variance(spec, dec.d)))
    return float(np.dot(_cell_probs(qs), sig) ** 2)


CRITERIA = {Criterion.QUADRATIC: quadratic_criterion, Criterion.LIPSCHITZ: lipschitz_criterion}


def score(spec, dec, criterion) -> float:
    return CRITERIA[Criterion(criterion)](spec, dec)


def _maximal(decs, budget):
    # levels with a larger first entry are strictly better under the quadratic
    # criterion (optimal distortion strictly decreases), so keep only the
    # largest admissible N_1 for each tail (N_2, ..., N_d)
    for dec in decs:
        if not dec.levels:
            yield dec
            continue
        rest = math.prod(dec.levels[1:])
        if dec.levels[0] == budget // rest:
            yield dec


def optimize_decomposition(spec: GaussianProcessSpec, budget: int,
                           criterion: Criterion | str = Criterion.QUADRATIC):
    """Blind optimization: ``(best decomposition, score)``.

    Ties go to the lexicographically smallest level sequence.
    """
    criterion = Criterion(criterion)
    decs = enumerate_decompositions(budget)
    if criterion is Criterion.QUADRATIC:
        decs = list(_maximal(decs, budget))
    # eigenvalues for the deepest candidate up front (fills the OU cache once)
    spec.eigenvalues(max(dec.d for dec in decs))
    best, best_score = None, math.inf
    for dec in decs:
        s = score(spec, dec, criterion)
        if s < best_score:
            best, best_score = dec, s
    return best, best_score


@dataclass(frozen=True, eq=False)
class Stratification:
    """Strata of a K-L product quantizer, flattened in C order of multi-indices.

    Coordinates are standardised: stratum ``k`` constrains
    ``xi_j = Y_j / sqrt(lambda_j)`` to ``[lower[k, j], upper[k, j]]``.
    """

    spec: GaussianProcessSpec
    decomposition: ProductDecomposition
    quantizers: tuple[ScalarQuantizer, ...] = field(init=False)
    eigenvalues: np.ndarray = field(init=False)
    tail_variance: float = field(init=False)
    index: np.ndarray = field(init=False)
    lower: np.ndarray = field(init=False)
    upper: np.ndarray = field(init=False)
    probs: np.ndarray = field(init=False)
    local_inertia: np.ndarray = field(init=False)
    codebook: np.ndarray = field(init=False)

    def __post_init__(self):
        dec = self.decomposition
        qs = tuple(normal_quantizer(n) for n in dec.levels)
        lam = self.spec.eigenvalues(dec.d)
        tail = tail_variance(self.spec, dec.d)
        if dec.d:
            idx = np.indices(dec.levels).reshape(dec.d, -1).T
        else:
            idx = np.zeros((1, 0), dtype=int)
        lower = np.empty(idx.shape)
        upper = np.empty(idx.shape)
        points = np.empty(idx.shape)
        for j, q in enumerate(qs):
            lower[:, j] = q.thresholds[idx[:, j]]
            upper[:, j] = q.thresholds[idx[:, j] + 1]
            points[:, j] = q.points[idx[:, j]]
        values = {
            "quantizers": qs, "eigenvalues": lam, "tail_variance": tail, "index": idx,
            "lower": lower, "upper": upper, "probs": _cell_probs(qs),
            "local_inertia": _local_inertia(lam, qs, tail),
            "codebook": points * np.sqrt(lam),
        }
        for name, val in values.items():
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def d(self) -> int:
        return self.decomposition.d

    @property
    def n_strata(self) -> int:
        return self.probs.size

    def intraclass_inertia(self) -> float:
        return float(np.dot(self.probs, self.local_inertia))

    def lipschitz_score(self) -> float:
        return float(np.dot(self.probs, np.sqrt(self.local_inertia)) ** 2)

    def codebook_paths(self, t) -> np.ndarray:
        """Quantizer paths chi_k(t) incl. the process mean, shape (strata, len(t))."""
        t = np.asarray(t, dtype=float)
        basis = self.spec.basis(t, self.d)
        return self.codebook @ basis.T + self.spec.mean_path(t)


def build_stratification(spec: GaussianProcessSpec, dec: ProductDecomposition) -> Stratification:
    return Stratification(spec, dec)


# --------------------------------------------------------------------------
# offline decomposition database

def _entry_key(entry: dict) -> tuple:
    params = entry["params"]
    return (entry["process"], tuple(sorted(params.items())), entry["budget"], entry["criterion"])


class DecompositionDB:
    """JSON file of blind-optimization results.

    Each entry: ``{process, params: {theta, sigma, sigma0, m0, mu, T}, budget,
    criterion, levels, score, n_rec, quantizers: {n: points}}``. Writing an
    entry with an existing key replaces it, so re-runs are idempotent.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.entries: list[dict] = []
        if self.path.exists():
            with open(self.path) as fh:
                self.entries = json.load(fh)["entries"]

    @staticmethod
    def make_entry(spec, budget, criterion, dec, value) -> dict:
        return {
            "process": spec.kind.value,
            "params": spec.params,
            "budget": int(budget),
            "criterion": Criterion(criterion).value,
            "levels": list(dec.levels),
            "score": float(value),
            "n_rec": dec.size,
            "quantizers": {str(n): normal_quantizer(n).points.tolist() for n in sorted(set(dec.levels))},
        }

    def lookup(self, spec, budget, criterion) -> dict | None:
        probe = {"process": spec.kind.value, "params": spec.params, "budget": int(budget),
                 "criterion": Criterion(criterion).value}
        key = _entry_key(probe)
        for entry in self.entries:
            if _entry_key(entry) == key:
                return entry
        return None

    def put(self, entry: dict):
        with self._lock:
            key = _entry_key(entry)
            self.entries = [e for e in self.entries if _entry_key(e) != key]
            self.entries.append(entry)
            self.entries.sort(key=lambda e: json.dumps(_entry_key(e)))

    def save(self):
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w") as fh:
            json.dump({"entries": self.entries}, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.path)


def decompose(spec, budget, criterion, db: DecompositionDB | None = None):
    """Cached blind optimization: reuse a database entry when present."""
    if db is not None:
        entry = db.lookup(spec, budget, criterion)
        if entry is not None:
            return ProductDecomposition(tuple(entry["levels"])), entry["score"]
    dec, value = optimize_decomposition(spec, budget, criterion)
    if db is not None:
        db.put(DecompositionDB.make_entry(spec, budget, criterion, dec, value))
    return dec, value


