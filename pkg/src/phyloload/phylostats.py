"""GLS-based phylogenetic statistics over single trees and tree samples.

All solves go through a Cholesky factor of ``C``; inverses are never
formed.  Randomness comes from Philox streams keyed by
``(seed, *indices)`` so per-tree work is reproducible in any order.
"""
from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, stats

from .phylotree import PhyloCovariance, Phylogeny, TaxonError, TreeSample, prune, vcv

logger = logging.getLogger(__name__)

JITTER_EPS = 1e-8


class DegenerateTraitError(ValueError):
    """Trait without variance (or evolutionary variance) on the taxa."""


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


def rng_for(seed: int, *indices: int) -> np.random.Generator:
    """Counter-based generator for the stream named by ``(seed, *indices)``."""
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(i) for i in indices))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TraitVector:
    taxa: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        taxa = tuple(self.taxa)
        if len(taxa) != len(vals):
            raise ValueError("taxa and values differ in length")
        if len(set(taxa)) != len(taxa):
            raise ValueError("duplicate taxa in trait vector")
        if not np.all(np.isfinite(vals)):
            raise ValueError("trait values must be finite")
        object.__setattr__(self, "taxa", taxa)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.taxa)

    def aligned(self, taxa: Sequence[str]) -> np.ndarray:
        """Values reordered to ``taxa``."""
        pos = {t: i for i, t in enumerate(self.taxa)}
        missing = [t for t in taxa if t not in pos]
        if missing:
            raise TaxonError(f"trait has no value for taxa {missing}")
        return self.values[[pos[t] for t in taxa]]


class _Factor:
    """Cholesky factor of ``C`` with the jitter fallback."""

    def __init__(self, C: np.ndarray, jitter: bool = False):
        C = np.asarray(C, dtype=float)
        try:
            self.cf = linalg.cho_factor(C, lower=True, check_finite=True)
        except linalg.LinAlgError:
            if not jitter:
                raise SingularCovarianceError(
                    "covariance matrix is singular or not positive definite; rerun with --jitter"
                ) from None
            eps = JITTER_EPS * float(np.mean(np.diag(C)))
            warnings.warn(f"covariance not positive definite; adding {eps:.3g} to the diagonal")
            try:
                self.cf = linalg.cho_factor(C + eps * np.eye(len(C)), lower=True)
            except linalg.LinAlgError:
                raise SingularCovarianceError("covariance still singular after jitter") from None
        self.C = C
        self.n = len(C)
        self.w = self.solve(np.ones(self.n))  # C^-1 1
        self.s = float(self.w.sum())  # 1' C^-1 1

    def solve(self, b):
        return linalg.cho_solve(self.cf, b)

    def gls_mean(self, x):
        """GLS mean for a vector or each column of a matrix."""
        return self.w @ x / self.s


def _cov_matrix(C) -> np.ndarray:
    return C.matrix if isinstance(C, PhyloCovariance) else np.asarray(C, dtype=float)


def _values(x, C) -> np.ndarray:
    if isinstance(x, TraitVector):
        if isinstance(C, PhyloCovariance):
            return x.aligned(C.taxa)
        return x.values
    return np.asarray(x, dtype=float)


def gls_mean(x, C, jitter: bool = False) -> float:
    """Phylogenetic (GLS) estimate of the root state, (1'C^-1 x)/(1'C^-1 1)."""
    xv = _values(x, C)
    return float(_Factor(_cov_matrix(C), jitter).gls_mean(xv))


def _k_from_factor(xv: np.ndarray, f: _Factor) -> float:
    if np.ptp(xv) == 0:
        raise DegenerateTraitError("degenerate trait: all values are equal")
    n = f.n
    e = xv - f.gls_mean(xv)
    observed = (e @ e) / (e @ f.solve(e))
    expected = (np.trace(f.C) - n / f.s) / (n - 1)
    return float(observed / expected)


def blomberg_k(x, C, jitter: bool = False) -> float:
    """Blomberg's K: observed MSE0/MSE ratio over its Brownian expectation."""
    xv = _values(x, C)
    if len(xv) < 2:
        raise ValueError("K needs at least 2 taxa")
    return _k_from_factor(xv, _Factor(_cov_matrix(C), jitter))


def _gls_mse(X: np.ndarray, f: _Factor) -> np.ndarray:
    """Residual quadratic form e'C^-1 e / (n-1) for each column of ``X``."""
    E = X - f.gls_mean(X)[None, :]
    return np.einsum("ij,ij->j", E, f.solve(E)) / (f.n - 1)


def k_permutation_test(x, C, n_perm: int = 999, seed: int = 0, jitter: bool = False, stream: Sequence[int] = ()) -> float:
    """Add-one permutation p-value for phylogenetic signal.

    Tip values are shuffled ``n_perm`` times; p counts permutations whose
    GLS mean squared error is no larger than the observed one.
    """
    if n_perm < 99:
        raise ValueError("n_perm must be at least 99")
    xv = _values(x, C)
    if np.ptp(xv) == 0:
        raise DegenerateTraitError("degenerate trait: all values are equal")
    f = _Factor(_cov_matrix(C), jitter)
    observed = _gls_mse(xv[:, None], f)[0]
    rng = rng_for(seed, *stream)
    perms = rng.permuted(np.tile(xv, (n_perm, 1)), axis=1).T
    null = _gls_mse(perms, f)
    # tolerance guards ties that differ only by rounding
    hits = int(np.sum(null <= observed * (1 + 1e-12)))
    return (1 + hits) / (n_perm + 1)


def _corr_from_factor(xv, yv, f: _Factor) -> float:
    ex = xv - f.gls_mean(xv)
    ey = yv - f.gls_mean(yv)
    sx, sy = f.solve(ex), f.solve(ey)
    rxx = ex @ sx
    ryy = ey @ sy
    rxy = ex @ sy
    if rxx <= 0 or ryy <= 0 or np.ptp(xv) == 0 or np.ptp(yv) == 0:
        raise DegenerateTraitError("degenerate trait: zero evolutionary variance")
    r = rxy / np.sqrt(rxx * ryy)
    if abs(r) > 1 + 1e-12:
        raise ArithmeticError(f"correlation {r} outside [-1, 1]")
    return float(np.clip(r, -1.0, 1.0))


def phylo_correlation(x, y, C, jitter: bool = False) -> float:
    """Phylogenetic Pearson correlation from the GLS evolutionary covariances."""
    return _corr_from_factor(_values(x, C), _values(y, C), _Factor(_cov_matrix(C), jitter))


def evolutionary_rates(X, C, jitter: bool = False) -> np.ndarray:
    """GLS estimate of the Brownian rate matrix for the traits in the columns of ``X``."""
    X = np.asarray(X, dtype=float)
    f = _Factor(_cov_matrix(C), jitter)
    E = X - f.gls_mean(X)[None, :]
    return E.T @ f.solve(E) / (f.n - 1)


def correlation_p(mean_r: float, n: int) -> float:
    """Two-sided t-test p for a correlation of ``mean_r`` over ``n`` taxa."""
    if n < 3:
        raise ValueError("correlation p needs n >= 3")
    if abs(mean_r) >= 1:
        warnings.warn("|r| = 1; reporting p = 0")
        return 0.0
    df = n - 2
    t = mean_r * np.sqrt(df / (1 - mean_r**2))
    return float(2 * stats.t.sf(abs(t), df))


def _psd_root(M: np.ndarray, what: str) -> np.ndarray:
    """Symmetric square root L with L L' = M; raises if M is not PSD."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
        raise ValueError(f"{what} must be a symmetric square matrix")
    vals, vecs = np.linalg.eigh(M)
    scale = max(1.0, float(np.abs(vals).max()) if vals.size else 1.0)
    if vals.min() < -1e-10 * scale:
        raise ValueError(f"{what} is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    return vecs * np.sqrt(np.clip(vals, 0, None))


def simulate_bm_replicates(tree, rate_matrix, root_state=None, seed: int = 0, n_reps: int = 1) -> tuple[tuple[str, ...], np.ndarray]:
    """Draw ``n_reps`` tip-state sets under multivariate Brownian motion.

    Returns ``(taxa, X)`` with ``X`` shaped ``(n_reps, n_traits, n_taxa)``;
    the covariance of each replicate is ``kron(rate_matrix, C)``.
    Replicate ``i`` uses stream ``(seed, i)``.
    """
    cov = tree if isinstance(tree, PhyloCovariance) else vcv(tree)
    R = np.atleast_2d(np.asarray(rate_matrix, dtype=float))
    k = R.shape[0]
    root = np.zeros(k) if root_state is None else np.broadcast_to(np.asarray(root_state, dtype=float), (k,))
    LR = _psd_root(R, "rate matrix")
    LC = _psd_root(cov.matrix, "tree covariance")
    n = cov.n
    out = np.empty((n_reps, k, n))
    for rep in range(n_reps):
        Z = rng_for(seed, rep).standard_normal((n, k))
        out[rep] = (LC @ Z @ LR.T).T + root[:, None]
    return cov.taxa, out


def simulate_bm(tree, rate_matrix, root_state=None, seed: int = 0):
    """One Brownian-motion draw; a TraitVector per trait (tuple if 2+)."""
    taxa, X = simulate_bm_replicates(tree, rate_matrix, root_state, seed, 1)
    traits = tuple(TraitVector(taxa, X[0, j]) for j in range(X.shape[1]))
    return traits[0] if len(traits) == 1 else traits


# ------------------------------------------------------------ tree samples

@dataclass
class SignalResult:
    k: np.ndarray
    mean_k: float
    sd_k: float
    lo95: float
    hi95: float
    p_perm: float | None = None
    p_per_tree: np.ndarray | None = field(default=None, repr=False)
    n_taxa: int = 0


@dataclass
class CorrResult:
    r: np.ndarray
    mean_r: float
    sd_r: float
    interval: tuple[float, float]
    p: float
    n_taxa: int = 0


def _summary(values: np.ndarray) -> tuple[float, float, float, float]:
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    lo, hi = np.percentile(values, [2.5, 97.5])
    return mean, sd, float(lo), float(hi)


def n_threads() -> int:
    env = os.environ.get("PHYLOLOAD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring PHYLOLOAD_THREADS=%r", env)
    return os.cpu_count() or 1


def _tree_covariance(tree: Phylogeny, taxa: Sequence[str], index: int) -> PhyloCovariance:
    missing = sorted(set(taxa) - set(tree.tip_labels))
    if missing:
        raise TaxonError(f"tree {index} lacks taxa {missing}")
    return vcv(prune(tree, taxa), taxa)


def map_trees(fn: Callable[[int, PhyloCovariance], object], sample: TreeSample, taxa: Sequence[str], threads: int | None = None) -> list:
    """Apply ``fn(index, C)`` to every tree pruned to ``taxa``, in tree order."""
    taxa = list(taxa)

    def work(i):
        return fn(i, _tree_covariance(sample[i], taxa, i))

    threads = n_threads() if threads is None else threads
    if threads <= 1 or len(sample) == 1:
        return [work(i) for i in range(len(sample))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(len(sample))))


def signal_over_sample(
    x: TraitVector,
    sample: TreeSample,
    n_perm: int = 0,
    seed: int = 0,
    jitter: bool = False,
    threads: int | None = None,
) -> SignalResult:
    """Blomberg's K on each tree; optional per-tree permutation p-values.

    The reported ``p_perm`` is the mean of the per-tree p-values.
    """
    taxa = x.taxa
    if np.ptp(x.values) == 0:
        raise DegenerateTraitError("degenerate trait: all values are equal")

    def per_tree(i, C):
        f = _Factor(C.matrix, jitter)
        k = _k_from_factor(x.values, f)
        p = k_permutation_test(x, C, n_perm, seed, jitter, stream=(i,)) if n_perm else None
        return k, p

    results = map_trees(per_tree, sample, taxa, threads)
    ks = np.array([k for k, _ in results])
    mean, sd, lo, hi = _summary(ks)
    ps = np.array([p for _, p in results]) if n_perm else None
    return SignalResult(ks, mean, sd, lo, hi, float(ps.mean()) if n_perm else None, ps, len(taxa))


def correlation_over_sample(
    x: TraitVector,
    y: TraitVector,
    sample: TreeSample | None,
    jitter: bool = False,
    threads: int | None = None,
) -> CorrResult:
    """Phylogenetic correlation per tree; p from the mean r.

    With ``sample=None`` the taxa are treated as independent (C = I).
    """
    taxa = x.taxa
    yv = y.aligned(taxa)
    if sample is None:
        rs = np.array([_corr_from_factor(x.values, yv, _Factor(np.eye(len(taxa))))])
    else:
        rs = np.array(map_trees(lambda i, C: _corr_from_factor(x.values, yv, _Factor(C.matrix, jitter)), sample, taxa, threads))
    mean, sd, lo, hi = _summary(rs)
    return CorrResult(rs, mean, sd, (lo, hi), correlation_p(mean, len(taxa)), len(taxa))


def aggregate_over_sample(stat: str, sample: TreeSample, traits: Sequence[TraitVector], **kwargs):
    """Dispatch ``stat`` ("k" or "r") over every tree of ``sample``."""
    if stat in ("k", "signal"):
        (x,) = traits
        return signal_over_sample(x, sample, **kwargs)
    if stat in ("r", "corr"):
        x, y = traits
        return correlation_over_sample(x, y, sample, **kwargs)
    raise ValueError(f"unknown statistic {stat!r}")
