"""Named verification suites checking the samplers against the closed-form laws.

Each suite draws everything it needs from a seeded stream family, compares
a statistic against a fixed threshold, and reports rows of
``check,statistic,threshold,pass``.  Thresholds live in ``DEFAULTS`` so the
command line and the test suite share one source of truth.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import forward, ldp, limits, spine
from .model import BranchingModel, exact_count_law
from .spectral import SpectralData, require_critical
from .stats import SeededStreamFamily, chi_square, ks_statistic, mc_run, tv_distance

__all__ = ["CheckResult", "SUITES", "DEFAULTS", "run_suite", "format_report"]


@dataclass(frozen=True)
class CheckResult:
    check: str
    statistic: float
    threshold: float
    passed: bool


DEFAULTS: dict = {
    "entrance": {"n": 100, "replicates": 20_000, "ks_threshold": 0.02},
    "hhat-entrance": {"n": 150, "replicates": 10_000, "ks_threshold": 0.02,
                      "chi_n": 3, "chi_replicates": 100_000, "p_threshold": 1e-3},
    "transition": {"n": 100, "replicates": 100_000, "atom_threshold": 0.01,
                   "ks_threshold": 0.02},
    "ancestral": {"n": 300, "m": 60, "replicates": 2000, "tv_threshold": 0.05,
                  "identity_threshold": 1e-12},
    "retro": {"steps": 1_000_000, "tv_threshold": 0.005},
    "many-to-one": {"n": 3, "indicators": 20, "threshold": 1e-12},
    "fdd": {"norm_threshold": 1e-8, "ck_threshold": 1e-6, "ks_threshold": 0.01,
            "replicates": 100_000},
    "ldp": {"zero_threshold": 1e-8, "kl_threshold": 1e-6},
    "functional": {"n": 100, "replicates": 20_000, "rel_threshold": 0.05,
                   "oracle_threshold": 1e-8},
}


def _merge(suite: str, opts: dict | None) -> dict:
    merged = dict(DEFAULTS[suite])
    if opts:
        merged.update({k: v for k, v in opts.items() if v is not None})
    return merged


# ---------------------------------------------------------------------------
# suites


def suite_entrance(model: BranchingModel, spectral: SpectralData,
                   streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Rescaled population given survival vs the exponential entrance law."""
    o = _merge("entrance", opts)
    n = o["n"]
    root = np.zeros(model.d, dtype=np.int64)
    root[0] = 1
    finals = forward.sample_conditioned_counts(
        model, root, n, o["replicates"], streams.stream(0))
    h = finals @ spectral.u / n
    law = limits.entrance_conditioned(limits.LimitParams(q_u=spectral.q_u, t=1.0))
    d_stat = ks_statistic(h, law.cdf)
    return [CheckResult("entrance_ks", d_stat, o["ks_threshold"], d_stat < o["ks_threshold"])]


def suite_hhat_entrance(model: BranchingModel, spectral: SpectralData,
                        streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Spine-simulated population vs the Gamma(2, .) entrance law, plus the
    short-horizon exact-law chi-square showing the spine realizes the
    transformed measure."""
    o = _merge("hhat-entrance", opts)
    n = o["n"]
    finals, _paths = spine.simulate_spine_counts_batch(
        model, spectral, 0, n, streams.stream(0), o["replicates"])
    h = finals @ spectral.u / n
    law = limits.entrance_hhat(limits.LimitParams(q_u=spectral.q_u, t=1.0))
    d_stat = ks_statistic(h, law.cdf)
    rows = [CheckResult("hhat_entrance_ks", d_stat, o["ks_threshold"],
                        d_stat < o["ks_threshold"])]

    n3 = o["chi_n"]
    exact = spine.hhat_exact_law(model, spectral, 0, n3)
    states = sorted(exact)
    probs = np.array([exact[s] for s in states])
    probs = probs / probs.sum()
    finals3, _ = spine.simulate_spine_counts_batch(
        model, spectral, 0, n3, streams.stream(1), o["chi_replicates"])
    index = {s: k for k, s in enumerate(states)}
    observed = np.zeros(len(states))
    for row in finals3:
        observed[index[tuple(int(c) for c in row)]] += 1
    res = chi_square(observed, probs)
    rows.append(CheckResult("spine_realizes_hhat_chi2_p", res.pvalue, o["p_threshold"],
                            res.pvalue > o["p_threshold"]))
    return rows


def suite_transition(model: BranchingModel, spectral: SpectralData,
                     streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Macroscopic-start law at time 1 vs the compound-Poisson transition law."""
    o = _merge("transition", opts)
    n = o["n"]
    z = np.full(model.d, n, dtype=np.int64)  # z = n * (1, ..., 1)
    a = float(spectral.u @ np.ones(model.d))
    params = limits.LimitParams(q_u=spectral.q_u, t=1.0, a=a)
    law = limits.transition_law(params)
    finals = forward.simulate_counts_batch(model, z, n, streams.stream(0), o["replicates"])
    h = finals @ spectral.u / n
    extinct = float((h == 0).mean())
    atom_err = abs(extinct - law.atom_zero)
    rows = [CheckResult("transition_atom_error", atom_err, o["atom_threshold"],
                        atom_err < o["atom_threshold"])]
    positive = h[h > 0]
    cond_cdf = lambda y: (law.cdf(y) - law.atom_zero) / (1.0 - law.atom_zero)
    d_stat = ks_statistic(positive, cond_cdf)
    rows.append(CheckResult("transition_positive_ks", d_stat, o["ks_threshold"],
                            d_stat < o["ks_threshold"]))
    return rows


@dataclass(frozen=True)
class _AncestralTask:
    """Per-replicate work item: one surviving tree and its lineage statistics."""

    model: BranchingModel
    spectral: SpectralData
    n: int
    m: int
    max_attempts: int

    def __call__(self, rng: np.random.Generator) -> np.ndarray:
        root = np.zeros(self.model.d, dtype=np.int64)
        root[0] = 1
        tree = forward.condition_on_survival(self.model, root, self.n, rng,
                                             max_attempts=self.max_attempts)
        anc = forward.ancestor_type_matrix(tree, self.n)
        size = anc.shape[1]
        d = self.model.d
        # ancestral distribution at distance m: types of row n - m
        a_vec = np.bincount(anc[self.n - self.m], minlength=d) / size
        # double count: per-individual occupation average vs per-time frequency average
        occ = np.zeros((d, size), dtype=np.int64)
        row_freq = np.zeros(d)
        for k in range(self.n):
            row = anc[k]
            row_freq += np.bincount(row, minlength=d) / size
            for t in range(d):
                occ[t] += row == t
        lhs = (occ / self.n).mean(axis=1)
        rhs = row_freq / self.n
        residual = float(np.abs(lhs - rhs).max())
        return np.concatenate([a_vec, [residual]])


def suite_ancestral(model: BranchingModel, spectral: SpectralData,
                    streams: SeededStreamFamily, opts: dict | None = None,
                    workers: int = 1) -> list[CheckResult]:
    """Population-averaged ancestral type distribution vs alpha, with the
    lineage/ancestral double-counting identity checked on every tree."""
    o = _merge("ancestral", opts)
    n, m = o["n"], o["m"]
    expected_attempts = n * spectral.q_u / float(spectral.u[0])
    task = _AncestralTask(model=model, spectral=spectral, n=n, m=m,
                          max_attempts=max(1000, int(400 * expected_attempts)))
    result = mc_run(task, o["replicates"], streams,
                    aggregator=lambda rows: np.stack(rows), workers=workers)
    data = result.value
    mean_a = data[:, : model.d].mean(axis=0)
    tv = tv_distance(mean_a, spectral.alpha)
    max_residual = float(data[:, model.d].max())
    return [
        CheckResult("ancestral_mean_tv", tv, o["tv_threshold"], tv < o["tv_threshold"]),
        CheckResult("lineage_double_count_max_residual", max_residual,
                    o["identity_threshold"], max_residual < o["identity_threshold"]),
    ]


def suite_retro(model: BranchingModel, spectral: SpectralData,
                streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Occupation frequencies of the retrospective chain vs alpha."""
    o = _merge("retro", opts)
    chain = spine.retro_matrix(spectral, model.mean_matrix())
    path = spine.retro_chain_sample(chain, 0, o["steps"], streams.stream(0))
    occupation = np.bincount(path[: o["steps"]], minlength=model.d) / o["steps"]
    tv = tv_distance(occupation, spectral.alpha)
    return [CheckResult("retro_occupation_tv", tv, o["tv_threshold"], tv < o["tv_threshold"])]


def suite_many_to_one(model: BranchingModel, spectral: SpectralData,
                      streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Exact equality of the population sum and the trunk expectation for
    random path indicators."""
    o = _merge("many-to-one", opts)
    n = o["n"]
    rng = streams.stream(0)
    worst = 0.0
    lhs, rhs = spine.many_to_one(model, spectral, 0, n, lambda path: 1.0)
    worst = max(worst, abs(lhs - rhs), abs(lhs - 1.0))
    for _ in range(o["indicators"]):
        target = tuple(int(t) for t in rng.integers(0, model.d, size=n + 1))
        target = (int(rng.integers(0, model.d)),) + target[1:]
        lhs, rhs = spine.many_to_one(
            model, spectral, target[0], n,
            lambda path, tgt=target: 1.0 if path == tgt else 0.0)
        worst = max(worst, abs(lhs - rhs))
    return [CheckResult("many_to_one_max_gap", worst, o["threshold"], worst < o["threshold"])]


def suite_fdd(model: BranchingModel | None, spectral: SpectralData | None,
              streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Self-consistency of the limit kernel: normalization, semigroup
    property, sampler-vs-density agreement, and the two-time marginal.
    Model-independent (the kernel is checked in normalized scale)."""
    o = _merge("fdd", opts)
    rows = []

    mass, _ = integrate.quad(lambda y: limits.sb_transition_density(1.0, y, 1.0),
                             0.0, np.inf, limit=200)
    norm_err = abs(mass - 1.0)
    rows.append(CheckResult("kernel_normalization_error", norm_err,
                            o["norm_threshold"], norm_err < o["norm_threshold"]))

    x, z, s, t = 1.0, 1.0, 0.5, 0.5
    lhs, _ = integrate.quad(
        lambda y: limits.sb_transition_density(x, y, s) * limits.sb_transition_density(y, z, t),
        0.0, np.inf, limit=200)
    resid = abs(lhs - limits.sb_transition_density(x, z, s + t))
    rows.append(CheckResult("chapman_kolmogorov_residual", resid,
                            o["ck_threshold"], resid < o["ck_threshold"]))

    law = limits.SizeBiasedTransitionLaw(1.0, 1.0)
    sample = law.sample(streams.stream(0), size=o["replicates"])
    d_stat = ks_statistic(sample, law.cdf)
    rows.append(CheckResult("sampler_vs_density_ks", d_stat,
                            o["ks_threshold"], d_stat < o["ks_threshold"]))

    rng = streams.stream(1)
    second = np.array([limits.sample_limit_fdd([0.5, 1.0], rng)[1]
                       for _ in range(o["replicates"] // 10)])
    gamma_cdf = limits.GammaTwoLaw(1.0).cdf
    d2 = ks_statistic(second, gamma_cdf)
    thr2 = 1.63 / math.sqrt(second.size)
    rows.append(CheckResult("fdd_two_time_marginal_ks", d2, thr2, d2 < thr2))
    return rows


def suite_ldp(model: BranchingModel, spectral: SpectralData,
              streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Rate function: zero at alpha, KL closed form for identical rows,
    divergence flag for the periodic chain off stationarity."""
    o = _merge("ldp", opts)
    rows = []
    chain = spine.retro_matrix(spectral, model.mean_matrix())
    res = ldp.rate_J(chain.matrix, spectral.alpha)
    rows.append(CheckResult("rate_at_alpha", res.value, o["zero_threshold"],
                            res.value < o["zero_threshold"]))

    pi = np.array([0.5, 0.5])
    nu = np.array([0.9, 0.1])
    res2 = ldp.rate_J(np.tile(pi, (2, 1)), nu)
    gap = abs(res2.value - ldp.kl(nu, pi))
    rows.append(CheckResult("identical_rows_vs_kl", gap, o["kl_threshold"],
                            gap < o["kl_threshold"]))

    res3 = ldp.rate_J(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.6, 0.4]))
    flagged = 1.0 if math.isinf(res3.value) else 0.0
    rows.append(CheckResult("periodic_divergence_flag", flagged, 1.0, flagged >= 1.0))
    return rows


def suite_functional(model: BranchingModel, spectral: SpectralData,
                     streams: SeededStreamFamily, opts: dict | None = None) -> list[CheckResult]:
    """Conditioned expectation of a bounded functional of the time-1 value
    vs its quadrature limit, with an independent oracle pinning the
    quadrature itself."""
    o = _merge("functional", opts)
    n = o["n"]
    quad_value = limits.corollary_functional("w_over_1pw")
    oracle, _ = integrate.quad(lambda w: (w / (1.0 + w)) * math.exp(-w), 0.0, np.inf,
                               epsabs=1e-12, epsrel=1e-12, limit=200)
    oracle_gap = abs(quad_value - oracle)
    rows = [CheckResult("functional_quadrature_vs_oracle", oracle_gap,
                        o["oracle_threshold"], oracle_gap < o["oracle_threshold"])]

    root = np.zeros(model.d, dtype=np.int64)
    root[0] = 1
    finals = forward.sample_conditioned_counts(model, root, n, o["replicates"],
                                               streams.stream(0))
    h = finals @ spectral.u / (n * spectral.q_u)
    mc_value = float(np.mean(h / (1.0 + h)))
    rel = abs(mc_value - quad_value) / quad_value
    rows.append(CheckResult("functional_conditioned_rel_error", rel,
                            o["rel_threshold"], rel < o["rel_threshold"]))
    return rows


SUITES: dict = {
    "entrance": suite_entrance,
    "hhat-entrance": suite_hhat_entrance,
    "transition": suite_transition,
    "ancestral": suite_ancestral,
    "retro": suite_retro,
    "many-to-one": suite_many_to_one,
    "fdd": suite_fdd,
    "ldp": suite_ldp,
    "functional": suite_functional,
}


def run_suite(name: str, model: BranchingModel | None, spectral: SpectralData | None,
              streams: SeededStreamFamily, opts: dict | None = None,
              workers: int = 1) -> list[CheckResult]:
    """Run a named suite; non-critical models are refused up front."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    if name != "fdd":
        if model is None or spectral is None:
            raise ValueError(f"suite {name!r} needs a model")
        require_critical(spectral, what=f"suite {name!r}")
    if name == "ancestral":
        return suite_ancestral(model, spectral, streams, opts, workers=workers)
    return SUITES[name](model, spectral, streams, opts)


def format_report(rows: list[CheckResult]) -> str:
    """CSV rendering with 12 significant digits, one row per check."""
    out = io.StringIO()
    out.write("check,statistic,threshold,pass\n")
    for row in rows:
        out.write(f"{row.check},{row.statistic:.12g},{row.threshold:.12g},"
                  f"{'true' if row.passed else 'false'}\n")
    return out.getvalue()
