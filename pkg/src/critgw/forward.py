"""Forward simulation of the branching process and ancestral-lineage statistics.

Trees store, per generation, the individual types and an index into the
previous generation (the parent); all lineage statistics walk those links
backward.  Count-level simulators draw, per type, a multinomial split of
the living individuals over the offspring atoms, which is distributed
identically to per-individual sampling but runs in time independent of the
population size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BranchingModel, ModelError, atom_tables

__all__ = [
    "GenerationRecord",
    "FamilyTree",
    "PopulationCapError",
    "RejectionBudgetError",
    "step",
    "simulate_counts",
    "simulate_counts_batch",
    "simulate_tree",
    "condition_on_survival",
    "sample_conditioned_counts",
    "ancestor",
    "ancestor_type_matrix",
    "empirical_ancestral",
    "lineage_occupation",
    "deviant_fraction",
]

DEFAULT_POPULATION_CAP = 1_000_000


class PopulationCapError(RuntimeError):
    """A simulated tree exceeded its population cap."""


class RejectionBudgetError(RuntimeError):
    """Rejection sampling exhausted its attempt budget.

    Expected attempts scale like n * Q[u] / <u, z>, so callers should size
    the budget with the horizon.
    """


@dataclass
class GenerationRecord:
    """Individuals of one generation: types and parent indices (-1 for roots)."""

    types: np.ndarray
    parents: np.ndarray

    @property
    def size(self) -> int:
        return self.types.size


@dataclass
class FamilyTree:
    """Generation-indexed family tree with backward parent links."""

    start: np.ndarray
    generations: list[GenerationRecord] = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.start.size

    @property
    def horizon(self) -> int:
        return len(self.generations) - 1

    def counts(self, k: int) -> np.ndarray:
        return np.bincount(self.generations[k].types, minlength=self.d).astype(np.int64)

    def trajectory(self) -> np.ndarray:
        return np.stack([self.counts(k) for k in range(len(self.generations))])

    def size(self, k: int) -> int:
        return self.generations[k].size


def _as_start(model: BranchingModel, root) -> np.ndarray:
    if np.isscalar(root):
        if not 0 <= int(root) < model.d:
            raise ModelError(f"root type {root} out of range")
        z = np.zeros(model.d, dtype=np.int64)
        z[int(root)] = 1
        return z
    z = np.asarray(root, dtype=np.int64)
    if z.shape != (model.d,) or (z < 0).any():
        raise ModelError(f"start vector must be a nonnegative vector of length {model.d}")
    return z


def step(model: BranchingModel, z, rng: np.random.Generator) -> np.ndarray:
    """One generation of the count process: every individual reproduces independently."""
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (model.d,) or (z < 0).any():
        raise ModelError(f"z must be a nonnegative vector of length {model.d}")
    tables = atom_tables(model)
    out = np.zeros(model.d, dtype=np.int64)
    for ell in range(model.d):
        if z[ell] == 0:
            continue
        picks = rng.multinomial(int(z[ell]), tables[ell].probs)
        out += picks @ tables[ell].kappa
    return out


def simulate_counts(model: BranchingModel, z, n: int, rng: np.random.Generator,
                    record_path: bool = False):
    """Iterate :func:`step` for n generations; absorbing at zero."""
    cur = np.asarray(z, dtype=np.int64).copy()
    path = [cur.copy()] if record_path else None
    for _ in range(n):
        if cur.any():
            cur = step(model, cur, rng)
        if record_path:
            path.append(cur.copy())
    return np.stack(path) if record_path else cur


def simulate_counts_batch(model: BranchingModel, z, n: int, rng: np.random.Generator,
                          batch: int) -> np.ndarray:
    """Final counts of ``batch`` independent runs from common start z.

    Draws one multinomial per (generation, type) over the whole batch;
    extinct rows stay at zero.
    """
    tables = atom_tables(model)
    z = np.asarray(z, dtype=np.int64)
    cur = np.tile(z, (batch, 1))
    for _ in range(n):
        alive = cur.any(axis=1)
        if not alive.any():
            break
        nxt = np.zeros_like(cur)
        sub = cur[alive]
        acc = np.zeros_like(sub)
        for ell in range(model.d):
            counts = sub[:, ell]
            if not counts.any():
                continue
            picks = rng.multinomial(counts, tables[ell].probs)
            acc += picks @ tables[ell].kappa
        nxt[alive] = acc
        cur = nxt
    return cur


def simulate_tree(model: BranchingModel, root, n: int, rng: np.random.Generator,
                  max_population: int = DEFAULT_POPULATION_CAP) -> FamilyTree:
    """Simulate a family tree with explicit parent links for n generations.

    Offspring atoms are chosen per individual by inverting the cumulative
    atom probabilities in config order; children are laid out grouped by
    child type, then by parent position.  Extinct generations are recorded
    as empty, so the tree always has n+1 generations.
    """
    if n < 0:
        raise ModelError(f"n must be >= 0, got {n}")
    z = _as_start(model, root)
    if z.sum() > max_population:
        raise PopulationCapError("start vector already exceeds the population cap")
    tables = atom_tables(model)
    types0 = np.repeat(np.arange(model.d), z).astype(np.int64)
    tree = FamilyTree(start=z, generations=[
        GenerationRecord(types=types0, parents=np.full(types0.size, -1, dtype=np.int64))
    ])
    empty_t = np.empty(0, dtype=np.int64)
    for _ in range(n):
        cur = tree.generations[-1].types
        if cur.size == 0:
            tree.generations.append(GenerationRecord(types=empty_t, parents=empty_t.copy()))
            continue
        kappa_rows = np.zeros((cur.size, model.d), dtype=np.int64)
        for ell in range(model.d):
            pos = np.nonzero(cur == ell)[0]
            if pos.size == 0:
                continue
            u = rng.random(pos.size)
            idx = np.searchsorted(tables[ell].cum, u, side="right")
            np.clip(idx, 0, tables[ell].kappa.shape[0] - 1, out=idx)
            kappa_rows[pos] = tables[ell].kappa[idx]
        total = int(kappa_rows.sum())
        if total > max_population:
            raise PopulationCapError(f"generation would hold {total} > {max_population} individuals")
        types_parts = []
        parent_parts = []
        for j in range(model.d):
            reps = kappa_rows[:, j]
            if reps.any():
                parent_parts.append(np.repeat(np.arange(cur.size), reps))
                types_parts.append(np.full(int(reps.sum()), j, dtype=np.int64))
        if types_parts:
            tree.generations.append(GenerationRecord(
                types=np.concatenate(types_parts),
                parents=np.concatenate(parent_parts),
            ))
        else:
            tree.generations.append(GenerationRecord(types=empty_t, parents=empty_t.copy()))
    return tree


def condition_on_survival(model: BranchingModel, z, n: int, rng: np.random.Generator,
                          max_attempts: int,
                          max_population: int = DEFAULT_POPULATION_CAP) -> FamilyTree:
    """Exact rejection sampling of a tree given survival to generation n."""
    if max_attempts < 1:
        raise ModelError(f"max_attempts must be >= 1, got {max_attempts}")
    for _ in range(max_attempts):
        tree = simulate_tree(model, z, n, rng, max_population=max_population)
        if tree.size(n) > 0:
            return tree
    raise RejectionBudgetError(
        f"no surviving tree in {max_attempts} attempts at horizon {n}"
    )


def sample_conditioned_counts(model: BranchingModel, z, n: int, n_samples: int,
                              rng: np.random.Generator, batch: int | None = None,
                              max_batches: int = 10_000) -> np.ndarray:
    """Final count vectors of ``n_samples`` runs conditioned on survival to n.

    Count-level rejection in batches; the returned rows follow the exact
    conditional law (no reweighting involved).
    """
    if n_samples < 1:
        raise ModelError("n_samples must be >= 1")
    if batch is None:
        batch = max(2 * n_samples, 1000)
    out = []
    collected = 0
    for _ in range(max_batches):
        final = simulate_counts_batch(model, z, n, rng, batch)
        alive = final.any(axis=1)
        if alive.any():
            out.append(final[alive])
            collected += int(alive.sum())
        if collected >= n_samples:
            return np.concatenate(out)[:n_samples]
    raise RejectionBudgetError(
        f"collected only {collected}/{n_samples} surviving runs in {max_batches} batches"
    )


# ---------------------------------------------------------------------------
# lineage statistics


def ancestor(tree: FamilyTree, n: int, index: int, m: int):
    """Index (within generation m) of the ancestor of individual ``index`` at generation n."""
    if not 0 <= m <= n <= tree.horizon:
        raise ModelError(f"need 0 <= m <= n <= horizon, got m={m}, n={n}")
    if not 0 <= index < tree.size(n):
        raise ModelError(f"individual {index} not in generation {n}")
    cur = index
    for k in range(n, m, -1):
        cur = int(tree.generations[k].parents[cur])
    return cur


def ancestor_type_matrix(tree: FamilyTree, n: int) -> np.ndarray:
    """Types of the generation-k ancestors of every generation-n individual.

    Returns an (n+1, |X_n|) array whose row k holds the type of x(k) for
    each x alive at generation n.
    """
    size_n = tree.size(n)
    if size_n == 0:
        raise ModelError(f"generation {n} is empty")
    out = np.empty((n + 1, size_n), dtype=np.int64)
    idx = np.arange(size_n)
    out[n] = tree.generations[n].types
    for k in range(n, 0, -1):
        idx = tree.generations[k].parents[idx]
        out[k - 1] = tree.generations[k - 1].types[idx]
    return out


def empirical_ancestral(tree: FamilyTree, n: int, m: int) -> np.ndarray:
    """Type frequencies of the time-(n-m) ancestors across generation n.

    Entry i is the fraction of generation-n individuals whose ancestor m
    generations back has type i; m=0 gives the current type frequencies.
    """
    if not 0 <= m <= n <= tree.horizon:
        raise ModelError(f"need 0 <= m <= n <= horizon, got m={m}, n={n}")
    size_n = tree.size(n)
    if size_n == 0:
        raise ModelError(f"generation {n} is empty")
    idx = np.arange(size_n)
    for k in range(n, n - m, -1):
        idx = tree.generations[k].parents[idx]
    types = tree.generations[n - m].types[idx]
    return np.bincount(types, minlength=tree.d) / size_n


def lineage_occupation(tree: FamilyTree, n: int, index: int) -> np.ndarray:
    """Empirical distribution of the ancestor types of one individual.

    Entry i is the fraction of times k < n at which the ancestor x(k) has
    type i; the individual's own generation-n type is not counted.
    """
    if n < 1:
        raise ModelError("lineage occupation needs n >= 1")
    if not 0 <= index < tree.size(n):
        raise ModelError(f"individual {index} not in generation {n}")
    counts = np.zeros(tree.d, dtype=np.int64)
    cur = index
    for k in range(n, 0, -1):
        cur = int(tree.generations[k].parents[cur])
        counts[tree.generations[k - 1].types[cur]] += 1
    return counts / n


def deviant_fraction(tree: FamilyTree, n: int, rho: float, alpha) -> float:
    """Fraction of generation-n individuals whose lineage occupation is rho-far from alpha.

    Distance is total variation; rho = 0 counts every lineage, rho > 1 none.
    """
    if n < 1:
        raise ModelError("deviant_fraction needs n >= 1")
    alpha = np.asarray(alpha, dtype=float)
    anc = ancestor_type_matrix(tree, n)
    size_n = anc.shape[1]
    occ = np.zeros((tree.d, size_n), dtype=np.int64)
    for k in range(n):
        row = anc[k]
        for i in range(tree.d):
            occ[i] += row == i
    tv = 0.5 * np.abs(occ / n - alpha[:, None]).sum(axis=0)
    return float((tv >= rho).mean())
