"""Finite-support multitype offspring laws and exact moment oracles.

Every model here has finitely many offspring atoms per type, which makes
all derived quantities (means, factorial moments, generating functions,
short-horizon count distributions) exactly computable.  These exact values
serve as references for the samplers elsewhere in the package.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "EnumerationLimitError",
    "OffspringAtom",
    "OffspringLaw",
    "BranchingModel",
    "MomentData",
    "load_model",
    "model_to_config",
    "builtin_model",
    "moments",
    "third_abs_moments",
    "pgf_eval",
    "extinction_by",
    "q_form_vector",
    "second_moment_matrix",
    "exact_count_law",
    "exact_total_law",
    "atom_tables",
]

PROB_TOL = 1e-12


class ModelError(ValueError):
    """Raised for invalid offspring-model configurations or arguments."""


class EnumerationLimitError(RuntimeError):
    """Raised when an exact enumeration would exceed its state budget."""


@dataclass(frozen=True)
class OffspringAtom:
    """One offspring outcome: a count vector and its probability."""

    counts: tuple[int, ...]
    prob: float


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support offspring distribution of a single parent type."""

    atoms: tuple[OffspringAtom, ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise ModelError("offspring law needs at least one atom")
        seen = set()
        total = 0.0
        for atom in self.atoms:
            if atom.prob < 0:
                raise ModelError(f"negative atom probability {atom.prob!r}")
            if any((not isinstance(c, (int, np.integer))) or c < 0 for c in atom.counts):
                raise ModelError(f"offspring counts must be nonnegative integers: {atom.counts!r}")
            if atom.counts in seen:
                raise ModelError(f"duplicate offspring atom {atom.counts!r}")
            seen.add(atom.counts)
            total += atom.prob
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"probabilities sum to {total:.10g}")


@dataclass(frozen=True)
class BranchingModel:
    """A -type branching model: one finite offspring law per parent type.

    The support graph (i -> j when a type-i parent can produce a type-j
    child) must be strongly connected; models with zero mean entries are
    allowed but trigger a warning, since several classical treatments
    assume strictly positive means.
    """

    d: int
    laws: tuple[OffspringLaw, ...]

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ModelError(f"number of types must be >= 1, got {self.d}")
        if len(self.laws) != self.d:
            raise ModelError(f"expected {self.d} offspring laws, got {len(self.laws)}")
        for i, law in enumerate(self.laws):
            for atom in law.atoms:
                if len(atom.counts) != self.d:
                    raise ModelError(
                        f"type {i + 1}: atom {atom.counts!r} has length {len(atom.counts)}, expected {self.d}"
                    )
        support = self.support_matrix()
        if not _strongly_connected(support):
            raise ModelError("support graph of the mean matrix is reducible")
        if not support.all():
            warnings.warn(
                "mean matrix has zero entries; irreducibility holds but some "
                "classical positivity assumptions do not",
                stacklevel=2,
            )

    def support_matrix(self) -> np.ndarray:
        """Boolean matrix with entry (i, j) true when m_ij > 0."""
        sup = np.zeros((self.d, self.d), dtype=bool)
        for i, law in enumerate(self.laws):
            for atom in law.atoms:
                if atom.prob > 0:
                    for j, c in enumerate(atom.counts):
                        if c > 0:
                            sup[i, j] = True
        return sup

    def mean_matrix(self) -> np.ndarray:
        """Mean offspring matrix, entry (i, j) = expected j-children of a type-i parent."""
        m = np.zeros((self.d, self.d))
        for i, law in enumerate(self.laws):
            for atom in law.atoms:
                m[i] += atom.prob * np.asarray(atom.counts, dtype=float)
        return m


def _strongly_connected(adj: np.ndarray) -> bool:
    d = adj.shape[0]
    if d == 1:
        return bool(adj[0, 0])

    def reachable(start: int, graph: np.ndarray) -> np.ndarray:
        seen = np.zeros(d, dtype=bool)
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            for j in np.nonzero(graph[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return seen

    return bool(reachable(0, adj).all() and reachable(0, adj.T).all())


# ---------------------------------------------------------------------------
# configuration parsing


def _parse_prob(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value))
        except (ValueError, ZeroDivisionError) as exc:
            raise ModelError(f"cannot parse probability {value!r}") from exc
    raise ModelError(f"cannot parse probability {value!r}")


def load_model(config_text: str) -> BranchingModel:
    """Build a validated model from a JSON config.

    The config has fields ``d`` (number of types) and ``offspring``, a list
    of per-type atom lists ``{"counts": [...], "prob": ...}``.  Probabilities
    may be numbers, decimal strings, or ratio strings such as ``"1/4"``.
    """
    try:
        raw = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"could not parse model config: {exc}") from exc
    if not isinstance(raw, Mapping) or "d" not in raw or "offspring" not in raw:
        raise ModelError("model config must be an object with fields 'd' and 'offspring'")
    d = raw["d"]
    if not isinstance(d, int):
        raise ModelError(f"'d' must be an integer, got {d!r}")
    per_type = raw["offspring"]
    if not isinstance(per_type, Sequence) or len(per_type) != d:
        raise ModelError(f"'offspring' must list atoms for each of the {d} types")
    laws = []
    for i, atom_list in enumerate(per_type):
        atoms = []
        for entry in atom_list:
            if not isinstance(entry, Mapping) or "counts" not in entry or "prob" not in entry:
                raise ModelError(f"type {i + 1}: atoms need 'counts' and 'prob' fields")
            counts = entry["counts"]
            if not isinstance(counts, Sequence) or isinstance(counts, str):
                raise ModelError(f"type {i + 1}: 'counts' must be a list")
            try:
                counts = tuple(int(c) for c in counts)
            except (TypeError, ValueError) as exc:
                raise ModelError(f"type {i + 1}: bad counts {entry['counts']!r}") from exc
            atoms.append(OffspringAtom(counts=counts, prob=_parse_prob(entry["prob"])))
        try:
            laws.append(OffspringLaw(atoms=tuple(atoms)))
        except ModelError as exc:
            raise ModelError(f"type {i + 1}: {exc}") from exc
    return BranchingModel(d=d, laws=tuple(laws))


def model_to_config(model: BranchingModel) -> str:
    """Serialize a model back to the JSON config format."""
    payload = {
        "d": model.d,
        "offspring": [
            [{"counts": list(atom.counts), "prob": atom.prob} for atom in law.atoms]
            for law in model.laws
        ],
    }
    return json.dumps(payload, indent=2)


_BUILTIN_CONFIGS = {
    # single type, all-or-nothing doubling; critical with offspring variance 1
    "a": {"d": 1, "offspring": [[{"counts": [0], "prob": "1/2"}, {"counts": [2], "prob": "1/2"}]]},
    # two types that only ever produce the other type; periodic mean matrix
    "b": {
        "d": 2,
        "offspring": [
            [{"counts": [0, 2], "prob": "1/2"}, {"counts": [0, 0], "prob": "1/2"}],
            [{"counts": [2, 0], "prob": "1/2"}, {"counts": [0, 0], "prob": "1/2"}],
        ],
    },
    # two types with unequal offspring spread; critical with v = (1/3, 2/3)
    "c": {
        "d": 2,
        "offspring": [
            [{"counts": [1, 1], "prob": "1/2"}, {"counts": [0, 0], "prob": "1/2"}],
            [{"counts": [1, 3], "prob": "1/4"}, {"counts": [0, 0], "prob": "3/4"}],
        ],
    },
}


def builtin_model(name: str) -> BranchingModel:
    """Return one of the bundled reference models ("A", "B", or "C")."""
    key = name.strip().lower()
    if key.startswith("model-"):
        key = key[len("model-"):]
    if key not in _BUILTIN_CONFIGS:
        raise ModelError(f"unknown builtin model {name!r}; choose from A, B, C")
    return load_model(json.dumps(_BUILTIN_CONFIGS[key]))


# ---------------------------------------------------------------------------
# exact moments


@dataclass(frozen=True)
class MomentData:
    """First and second factorial moments assembled by atom enumeration.

    ``mean[i, j]`` is the expected number of j-children of a type-i parent.
    ``factorial2[i, j, k]`` is E[Z_k(1) Z_j(1) - delta_{jk} Z_k(1)] started
    from a single type-i individual; it is symmetric in (j, k).  Third
    moments are always finite for finite-support laws; the flag exists for
    interface completeness.
    """

    mean: np.ndarray
    factorial2: np.ndarray
    third_finite: bool = True

    def covariance(self, i: int) -> np.ndarray:
        """One-step covariance matrix of the counts started from type i."""
        m_i = self.mean[i]
        return self.factorial2[i] + np.diag(m_i) - np.outer(m_i, m_i)

    def covariances(self) -> np.ndarray:
        return np.stack([self.covariance(i) for i in range(self.mean.shape[0])])


def moments(model: BranchingModel) -> MomentData:
    """Exact mean matrix and second factorial moments of the offspring laws."""
    d = model.d
    mean = model.mean_matrix()
    fact2 = np.zeros((d, d, d))
    for i, law in enumerate(model.laws):
        for atom in law.atoms:
            kappa = np.asarray(atom.counts, dtype=float)
            fact2[i] += atom.prob * (np.outer(kappa, kappa) - np.diag(kappa))
    return MomentData(mean=mean, factorial2=fact2)


def third_abs_moments(model: BranchingModel, weights, centered: bool = True) -> np.ndarray:
    """Per-type third absolute moments of the weighted offspring sum.

    Returns E[|<w, N_i> - c_i|^3] for each type i, with c_i the mean of the
    weighted sum when ``centered`` and 0 otherwise.
    """
    w = np.asarray(weights, dtype=float)
    out = np.zeros(model.d)
    for i, law in enumerate(model.laws):
        vals = np.array([float(np.dot(w, atom.counts)) for atom in law.atoms])
        probs = np.array([atom.prob for atom in law.atoms])
        center = float(probs @ vals) if centered else 0.0
        out[i] = float(probs @ np.abs(vals - center) ** 3)
    return out


# ---------------------------------------------------------------------------
# generating functions and the quadratic form


def pgf_eval(model: BranchingModel, s) -> np.ndarray:
    """Coordinatewise probability generating function f_i(s) of the offspring laws."""
    s = np.asarray(s, dtype=float)
    if s.shape != (model.d,):
        raise ModelError(f"s must have length {model.d}")
    if (s < 0).any() or (s > 1).any():
        raise ModelError("s outside the unit cube [0, 1]^d")
    out = np.zeros(model.d)
    for i, law in enumerate(model.laws):
        for atom in law.atoms:
            term = atom.prob
            for j, c in enumerate(atom.counts):
                if c:
                    term *= s[j] ** c
            out[i] += term
    return out


def extinction_by(model: BranchingModel, n: int, root_type: int = 0) -> float:
    """Probability that the line of a single type-``root_type`` ancestor is dead by generation n.

    Computed as the n-fold iterate of the generating function at 0; the
    survival probability is one minus the returned value.
    """
    if n < 0:
        raise ModelError(f"n must be >= 0, got {n}")
    if not 0 <= root_type < model.d:
        raise ModelError(f"root type {root_type} out of range")
    s = np.zeros(model.d)
    for _ in range(n):
        s = pgf_eval(model, s)
    return float(s[root_type])


def q_form_vector(model: BranchingModel, s) -> np.ndarray:
    """Per-type quadratic form q_i[s] = (1/2) sum_{j,k} s_j s_k F_i[j,k].

    Quadratically homogeneous: q[c s] = c^2 q[s].
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (model.d,):
        raise ModelError(f"s must have length {model.d}")
    if (s < 0).any():
        raise ModelError("s must be nonnegative")
    fact2 = moments(model).factorial2
    return 0.5 * np.einsum("j,ijk,k->i", s, fact2, s)


def second_moment_matrix(model: BranchingModel, z, n: int) -> np.ndarray:
    """Exact matrix of second moments E_z[Z_i(n) Z_j(n)].

    Uses the one-step recursion D(k+1) = M^T D(k) M + sum_i C_i E_z[Z_i(k)],
    where C_i is the one-step covariance started from a type-i individual.
    """
    if n < 0:
        raise ModelError(f"n must be >= 0, got {n}")
    z = np.asarray(z, dtype=float)
    if z.shape != (model.d,):
        raise ModelError(f"z must have length {model.d}")
    data = moments(model)
    mat = data.mean
    covs = data.covariances()
    second = np.outer(z, z)
    means = z.copy()
    for _ in range(n):
        source = np.tensordot(means, covs, axes=(0, 0))
        second = mat.T @ second @ mat + source
        means = means @ mat
    return second


# ---------------------------------------------------------------------------
# exact short-horizon count laws (enumeration oracle)


def _convolve(a: dict, b: dict, budget: int) -> dict:
    out: dict = {}
    for ka, pa in a.items():
        for kb, pb in b.items():
            key = tuple(x + y for x, y in zip(ka, kb))
            out[key] = out.get(key, 0.0) + pa * pb
            if len(out) > budget:
                raise EnumerationLimitError(f"convolution support exceeded {budget} states")
    return out


def exact_count_law(model: BranchingModel, z, n: int, max_states: int = 200_000) -> dict:
    """Exact distribution of the count vector after n generations from start z.

    Returns a dict mapping count tuples to probabilities.  The computation
    enumerates, per generation, the convolution of the offspring atoms over
    all living individuals; it raises :class:`EnumerationLimitError` once
    the number of tracked states exceeds ``max_states``.
    """
    if n < 0:
        raise ModelError(f"n must be >= 0, got {n}")
    z = tuple(int(c) for c in np.asarray(z).ravel())
    if len(z) != model.d:
        raise ModelError(f"z must have length {model.d}")
    unit = {tuple([0] * model.d): 1.0}
    base = [
        {atom.counts: atom.prob for atom in law.atoms}
        for law in model.laws
    ]
    law_now = {z: 1.0}
    for _ in range(n):
        powers: dict = {}

        def law_power(i: int, c: int) -> dict:
            if c == 0:
                return unit
            key = (i, c)
            if key not in powers:
                powers[key] = _convolve(law_power(i, c - 1), base[i], max_states)
            return powers[key]

        nxt: dict = {}
        for state, p_state in law_now.items():
            step_law = unit
            for i, count in enumerate(state):
                if count:
                    step_law = _convolve(step_law, law_power(i, count), max_states)
            for nxt_state, p in step_law.items():
                nxt[nxt_state] = nxt.get(nxt_state, 0.0) + p_state * p
            if len(nxt) > max_states:
                raise EnumerationLimitError(f"count law exceeded {max_states} states")
        law_now = nxt
    return law_now


def exact_total_law(model: BranchingModel, z, n: int, max_states: int = 200_000) -> dict:
    """Exact distribution of the total population size after n generations."""
    law = exact_count_law(model, z, n, max_states=max_states)
    out: dict = {}
    for state, p in law.items():
        total = int(sum(state))
        out[total] = out.get(total, 0.0) + p
    return out


# ---------------------------------------------------------------------------
# sampling tables


@dataclass(frozen=True)
class LawTable:
    """Arrays describing one offspring law, for vectorized sampling.

    Atom order follows the config; samplers invert the cumulative
    probabilities in that order, so outputs are reproducible only for a
    fixed atom ordering.
    """

    probs: np.ndarray
    cum: np.ndarray
    kappa: np.ndarray


def atom_tables(model: BranchingModel) -> list[LawTable]:
    tables = []
    for law in model.laws:
        probs = np.array([atom.prob for atom in law.atoms])
        kappa = np.array([atom.counts for atom in law.atoms], dtype=np.int64)
        tables.append(LawTable(probs=probs, cum=np.cumsum(probs), kappa=kappa))
    return tables
