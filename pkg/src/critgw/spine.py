"""Size-biased family tree: immortal trunk, weighted successor, ordinary bushes.

The trunk individual reproduces by the size-biased offspring law (which
never produces an empty litter), one child continues the trunk with
probability proportional to the weight of its type, and all other
individuals found ordinary descendant trees.  At the level of the count
process this construction realizes the transformed measure, which the
exact enumeration law and the many-to-one identity below make testable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import BranchingModel, ModelError, atom_tables, exact_count_law
from .spectral import SpectralData, require_critical
from .forward import FamilyTree, GenerationRecord, PopulationCapError, step, DEFAULT_POPULATION_CAP

__all__ = [
    "SizeBiasedLaw",
    "RetroChain",
    "SpineRecord",
    "size_biased_law",
    "retro_matrix",
    "spine_successor",
    "simulate_spine",
    "simulate_spine_counts_batch",
    "spine_trunk_sample",
    "retro_chain_sample",
    "hhat_exact_law",
    "many_to_one",
]


@dataclass(frozen=True)
class SizeBiasedLaw:
    """Offspring law of a trunk individual of one type.

    Atom kappa carries probability <u, kappa> p(kappa) / u_i; the empty
    litter has weight zero, so the trunk cannot die.  At criticality the
    weights sum to one exactly because <u, .> is harmonic.
    """

    type_index: int
    kappas: tuple[tuple[int, ...], ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > 1e-12:
            raise ModelError(f"size-biased probabilities sum to {total:.10g}")
        if any(not any(k) for k in self.kappas):
            raise ModelError("size-biased law contains the empty litter")


@dataclass(frozen=True)
class RetroChain:
    """Markov transitions of the trunk type: P_ij = m_ij u_j / u_i."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        rows = self.matrix.sum(axis=1)
        if np.abs(rows - 1.0).max() > 1e-12:
            raise ModelError(f"retro matrix rows sum to {rows!r}, not 1")
        if (self.matrix < 0).any():
            raise ModelError("retro matrix has negative entries")


@dataclass
class SpineRecord:
    """State of the size-biased tree at one generation.

    ``offspring`` and ``successor`` are None at the final horizon (no
    further reproduction is drawn); ``counts`` includes the trunk, so it
    dominates the unit vector of the trunk type.
    """

    trunk_type: int
    counts: np.ndarray
    off_spine: np.ndarray
    offspring: np.ndarray | None = None
    successor: tuple[int, int] | None = None


def size_biased_law(model: BranchingModel, spectral: SpectralData, i: int,
                    *, allow_noncritical: bool = False) -> SizeBiasedLaw:
    """Size-biased offspring law of type i: probabilities <u,kappa> p(kappa) / u_i."""
    require_critical(spectral, allow_noncritical=allow_noncritical, what="size_biased_law")
    if not 0 <= i < model.d:
        raise ModelError(f"type {i} out of range")
    u = spectral.u
    kappas = []
    weights = []
    for atom in model.laws[i].atoms:
        w = float(np.dot(u, atom.counts)) * atom.prob / u[i]
        if w > 0.0:
            kappas.append(atom.counts)
            weights.append(w)
    probs = np.asarray(weights)
    if allow_noncritical:
        probs = probs / probs.sum()
    return SizeBiasedLaw(type_index=i, kappas=tuple(kappas), probs=probs)


def retro_matrix(spectral: SpectralData, mean_matrix: np.ndarray) -> RetroChain:
    """Trunk-type transition matrix P_ij = m_ij u_j / u_i (row-stochastic at criticality)."""
    require_critical(spectral, what="retro_matrix")
    u = spectral.u
    return RetroChain(matrix=mean_matrix * u[None, :] / u[:, None])


def spine_successor(kappa, u, rng: np.random.Generator) -> tuple[int, int]:
    """Pick the trunk successor from a litter: type j with weight kappa_j u_j.

    Returns (type, index-within-type); ties among same-type children are
    uniform by birth index, realized through a single inversion draw.
    """
    kappa = np.asarray(kappa, dtype=np.int64)
    u = np.asarray(u, dtype=float)
    if not (kappa > 0).any():
        raise ModelError("cannot choose a successor from an empty litter")
    weights = kappa * u
    total = float(weights.sum())
    point = rng.random() * total
    acc = 0.0
    for j in range(kappa.size):
        w = float(weights[j])
        if w <= 0.0:
            continue
        if point < acc + w:
            child = int((point - acc) / u[j])
            return j, min(child, int(kappa[j]) - 1)
        acc += w
    j = int(np.nonzero(kappa)[0][-1])
    return j, int(kappa[j]) - 1


def simulate_spine(model: BranchingModel, spectral: SpectralData, i: int, n: int,
                   rng: np.random.Generator,
                   max_population: int = DEFAULT_POPULATION_CAP,
                   *, allow_noncritical: bool = False) -> list[SpineRecord]:
    """Simulate the size-biased tree for n generations at the count level.

    Per generation the draws are: trunk litter (inversion over the
    size-biased atoms in config order), successor (single inversion), then
    the ordinary offspring of the off-trunk population.  The returned
    records carry the trunk path, litters, successor choices, and counts.
    """
    require_critical(spectral, allow_noncritical=allow_noncritical, what="simulate_spine")
    if n < 0:
        raise ModelError(f"n must be >= 0, got {n}")
    laws = [size_biased_law(model, spectral, t, allow_noncritical=allow_noncritical)
            for t in range(model.d)]
    cums = [np.cumsum(law.probs) for law in laws]
    trunk = int(i)
    off = np.zeros(model.d, dtype=np.int64)
    records: list[SpineRecord] = []
    for _ in range(n):
        law = laws[trunk]
        pick = int(np.searchsorted(cums[trunk], rng.random(), side="right"))
        pick = min(pick, len(law.kappas) - 1)
        kappa = np.asarray(law.kappas[pick], dtype=np.int64)
        succ_type, succ_idx = spine_successor(kappa, spectral.u, rng)
        counts = off.copy()
        counts[trunk] += 1
        records.append(SpineRecord(trunk_type=trunk, counts=counts, off_spine=off.copy(),
                                   offspring=kappa.copy(), successor=(succ_type, succ_idx)))
        off = step(model, off, rng) + kappa
        off[succ_type] -= 1
        trunk = succ_type
        total = int(off.sum()) + 1
        if total > max_population:
            raise PopulationCapError(f"spine population {total} exceeds cap {max_population}")
    counts = off.copy()
    counts[trunk] += 1
    records.append(SpineRecord(trunk_type=trunk, counts=counts, off_spine=off.copy()))
    return records


def simulate_spine_counts_batch(model: BranchingModel, spectral: SpectralData, i: int,
                                n: int, rng: np.random.Generator, batch: int):
    """Vectorized spine runs: returns (final counts (batch, d), trunk paths (batch, n+1)).

    Identical in law to repeated :func:`simulate_spine`; the off-trunk
    population advances by one multinomial per (generation, type).
    """
    require_critical(spectral, what="simulate_spine_counts_batch")
    d = model.d
    laws = [size_biased_law(model, spectral, t) for t in range(d)]
    cums = [np.cumsum(law.probs) for law in laws]
    kap_tabs = [np.asarray(law.kappas, dtype=np.int64) for law in laws]
    tables = atom_tables(model)
    u = spectral.u
    trunk = np.full(batch, int(i), dtype=np.int64)
    off = np.zeros((batch, d), dtype=np.int64)
    paths = np.empty((batch, n + 1), dtype=np.int64)
    paths[:, 0] = trunk
    for k in range(n):
        kappa = np.zeros((batch, d), dtype=np.int64)
        uvals = rng.random(batch)
        for t in range(d):
            mask = trunk == t
            if not mask.any():
                continue
            idx = np.searchsorted(cums[t], uvals[mask], side="right")
            np.clip(idx, 0, kap_tabs[t].shape[0] - 1, out=idx)
            kappa[mask] = kap_tabs[t][idx]
        weights = kappa * u[None, :]
        cum_w = np.cumsum(weights, axis=1)
        points = rng.random(batch) * cum_w[:, -1]
        succ = (points[:, None] >= cum_w).sum(axis=1)
        np.clip(succ, 0, d - 1, out=succ)
        nxt = np.zeros_like(off)
        for ell in range(d):
            counts = off[:, ell]
            if counts.any():
                picks = rng.multinomial(counts, tables[ell].probs)
                nxt += picks @ tables[ell].kappa
        nxt += kappa
        nxt[np.arange(batch), succ] -= 1
        off = nxt
        trunk = succ
        paths[:, k + 1] = trunk
    final = off.copy()
    final[np.arange(batch), trunk] += 1
    return final, paths


def spine_trunk_sample(model: BranchingModel, spectral: SpectralData, i: int, n_steps: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Trunk-type path of length n_steps+1, drawn via litter + successor stages.

    Skips the bushes entirely; the marginal law of the path is the
    retrospective chain.
    """
    require_critical(spectral, what="spine_trunk_sample")
    d = model.d
    laws = [size_biased_law(model, spectral, t) for t in range(d)]
    cums = [law.probs.cumsum().tolist() for law in laws]
    # per (type, atom): cumulative successor weights over child types
    succ_cum = []
    for t in range(d):
        rows = []
        for kappa in laws[t].kappas:
            w = np.asarray(kappa, dtype=float) * spectral.u
            rows.append((w.cumsum().tolist(), float(w.sum())))
        succ_cum.append(rows)
    path = np.empty(n_steps + 1, dtype=np.int64)
    cur = int(i)
    path[0] = cur
    chunk = 65536
    buf = rng.random(2 * chunk)
    pos = 0
    for k in range(n_steps):
        if pos + 1 >= buf.size:
            buf = rng.random(2 * chunk)
            pos = 0
        u1 = buf[pos]
        u2 = buf[pos + 1]
        pos += 2
        cum = cums[cur]
        a = 0
        while a < len(cum) - 1 and u1 >= cum[a]:
            a += 1
        row, total = succ_cum[cur][a]
        point = u2 * total
        j = 0
        while j < len(row) - 1 and point >= row[j]:
            j += 1
        cur = j
        path[k + 1] = cur
    return path


def retro_chain_sample(chain: RetroChain, i: int, n_steps: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Path of the retrospective mutation chain started from type i."""
    mat = chain.matrix
    d = mat.shape[0]
    if not 0 <= i < d:
        raise ModelError(f"type {i} out of range")
    cums = [mat[t].cumsum().tolist() for t in range(d)]
    path = np.empty(n_steps + 1, dtype=np.int64)
    cur = int(i)
    path[0] = cur
    chunk = 1 << 17
    buf = rng.random(chunk)
    pos = 0
    for k in range(n_steps):
        if pos >= buf.size:
            buf = rng.random(chunk)
            pos = 0
        u = buf[pos]
        pos += 1
        cum = cums[cur]
        j = 0
        while j < d - 1 and u >= cum[j]:
            j += 1
        cur = j
        path[k + 1] = cur
    return path


def hhat_exact_law(model: BranchingModel, spectral: SpectralData, i: int, n: int,
                   max_states: int = 200_000) -> dict:
    """Exact distribution of the counts at generation n under the transformed measure.

    Enumerates the forward count law from a single type-i ancestor and
    reweights each outcome y by <u, y> / u_i; harmonicity of the weight
    makes the result a probability distribution (checked by the tests, not
    renormalized here).  States with zero weight are dropped.
    """
    require_critical(spectral, what="hhat_exact_law")
    z = np.zeros(model.d, dtype=np.int64)
    if not 0 <= i < model.d:
        raise ModelError(f"type {i} out of range")
    z[i] = 1
    forward = exact_count_law(model, z, n, max_states=max_states)
    u = spectral.u
    out = {}
    for state, p in forward.items():
        w = float(np.dot(u, state)) / u[i]
        if w > 0.0 and p > 0.0:
            out[state] = out.get(state, 0.0) + w * p
    return out


def many_to_one(model: BranchingModel, spectral: SpectralData, i: int, n: int,
                F: Callable[[tuple], float], max_paths: int = 2_000_000) -> tuple[float, float]:
    """Exact check of the many-to-one identity for a type-path functional F.

    Left side: the u-weighted population sum u_i^{-1} E[sum_x F(path of x)
    u_type(x)], reduced by the branching property to a sum over type paths
    whose weights are per-step expected child counts accumulated directly
    from the offspring atoms.  Right side: the expectation of F(trunk path)
    under the retrospective chain, summed path by path.  The contract is
    lhs == rhs up to roundoff.
    """
    require_critical(spectral, what="many_to_one")
    if not 0 <= i < model.d:
        raise ModelError(f"type {i} out of range")
    if n < 0:
        raise ModelError(f"n must be >= 0, got {n}")
    d = model.d
    if d ** n > max_paths:
        raise ModelError(f"{d ** n} type paths exceed the enumeration cap {max_paths}")
    # expected children by type, accumulated from the atoms
    child_mean = np.zeros((d, d))
    for t, law in enumerate(model.laws):
        for atom in law.atoms:
            child_mean[t] += atom.prob * np.asarray(atom.counts, dtype=float)
    retro = retro_matrix(spectral, model.mean_matrix()).matrix
    u = spectral.u
    lhs = 0.0
    rhs = 0.0
    for tail in itertools.product(range(d), repeat=n):
        path = (i,) + tail
        f_val = float(F(path))
        if f_val == 0.0:
            continue
        w_lhs = 1.0
        w_rhs = 1.0
        for a, b in zip(path[:-1], path[1:]):
            w_lhs *= child_mean[a, b]
            w_rhs *= retro[a, b]
        lhs += w_lhs * u[path[-1]] * f_val
        rhs += w_rhs * f_val
    return lhs / u[i], rhs
